//! Closed-form steady state of the PWM inverter, adder and weighted
//! voltage accumulator (VAC).
//!
//! Everything here assumes the capacitor is never fully charged or
//! discharged within a period, so each cell behaves as a time-averaged
//! resistive divider.

use crate::error::AnalyticError;
use crate::scalar::Scalar;

/// On-resistances of one inverter cell plus its output resistor, in ohms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResistances<F> {
    pub r_p: F,
    pub r_n: F,
    pub r_out: F,
}

impl<F: Scalar> CellResistances<F> {
    pub fn new(r_p: F, r_n: F, r_out: F) -> Result<Self, AnalyticError> {
        if !(r_p > F::zero() && r_n > F::zero() && r_out >= F::zero()) {
            return Err(AnalyticError::Resistance);
        }
        Ok(Self { r_p, r_n, r_out })
    }

    pub fn balanced(r_transistor: F, r_out: F) -> Result<Self, AnalyticError> {
        Self::new(r_transistor, r_transistor, r_out)
    }

    /// The output resistor dominates both transistors by at least 10x.
    pub fn is_linear_regime(&self) -> bool {
        self.r_out >= F::lit(10.0) * self.r_p.max(self.r_n)
    }
}

/// Per-input integer weights of a `k`-bit accumulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightVector {
    weights: Vec<u32>,
    bits: u32,
}

impl WeightVector {
    pub fn new(weights: Vec<u32>, bits: u32) -> Result<Self, AnalyticError> {
        if bits == 0 || bits > 31 {
            return Err(AnalyticError::Bits(bits));
        }
        let max = (1u32 << bits) - 1;
        if let Some(&w) = weights.iter().find(|&&w| w > max) {
            return Err(AnalyticError::WeightRange {
                weight: w,
                max,
                bits,
            });
        }
        Ok(Self { weights, bits })
    }

    /// `n` inputs all at the largest weight `2^k - 1`.
    pub fn max_weights(n: usize, bits: u32) -> Result<Self, AnalyticError> {
        let max = 1u32.checked_shl(bits).map(|v| v - 1).unwrap_or(0);
        Self::new(vec![max; n], bits)
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_weight(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// `n * (2^k - 1)`: the number of unit cells in the accumulator.
    pub fn normalizer(&self) -> u64 {
        self.weights.len() as u64 * u64::from(self.max_weight())
    }
}

fn check_duty<F: Scalar>(d: F) -> Result<(), AnalyticError> {
    if d >= F::zero() && d <= F::one() {
        Ok(())
    } else {
        Err(AnalyticError::Duty(d.as_f64()))
    }
}

/// Average output of a balanced inverter driven at `duty`.
pub fn inverter_equilibrium<F: Scalar>(duty: F, vdd: F) -> F {
    vdd * (F::one() - duty)
}

/// General resistive-divider form of the inverter output, measured from `gnd`.
///
/// Each branch resistance is stretched by the fraction of the period it
/// conducts: the NMOS path for `duty`, the PMOS path for `1 - duty`. Worked in
/// conductances so that duty 0 and 1 stay finite.
pub fn divider_equilibrium<F: Scalar>(
    duty: F,
    vdd: F,
    gnd: F,
    r: &CellResistances<F>,
) -> Result<F, AnalyticError> {
    check_duty(duty)?;
    if !(vdd > gnd) {
        return Err(AnalyticError::Supply((vdd - gnd).as_f64()));
    }
    let g_up = (F::one() - duty) / (r.r_p + r.r_out);
    let g_dn = duty / (r.r_n + r.r_out);
    Ok((vdd - gnd) * g_up / (g_up + g_dn))
}

/// Average output of `n` parallel inverters sharing one capacitor.
pub fn adder_equilibrium<F: Scalar>(duties: &[F], vdd: F) -> Result<F, AnalyticError> {
    if duties.is_empty() {
        return Err(AnalyticError::NoInputs);
    }
    for &d in duties {
        check_duty(d)?;
    }
    let mean = duties.iter().fold(F::zero(), |a, &d| a + d) / F::from_usize_lossy(duties.len());
    Ok(vdd * (F::one() - mean))
}

/// Normalized weighted sum `sum(d_i * W_i) / (n * (2^k - 1))`, in `[0, 1]`.
pub fn weighted_dc_sum<F: Scalar>(duties: &[F], w: &WeightVector) -> Result<F, AnalyticError> {
    if duties.is_empty() {
        return Err(AnalyticError::NoInputs);
    }
    if duties.len() != w.len() {
        return Err(AnalyticError::LengthMismatch {
            duties: duties.len(),
            weights: w.len(),
        });
    }
    let mut acc = F::zero();
    for (&d, &wi) in duties.iter().zip(w.weights()) {
        check_duty(d)?;
        acc += d * F::from_u32(wi).expect("weight");
    }
    Ok(acc / F::from_u64(w.normalizer()).expect("normalizer"))
}

/// Average capacitor voltage of the weighted accumulator.
pub fn vac_equilibrium<F: Scalar>(duties: &[F], w: &WeightVector, vdd: F) -> Result<F, AnalyticError> {
    if !(vdd > F::zero()) {
        return Err(AnalyticError::Supply(vdd.as_f64()));
    }
    Ok(vdd * (F::one() - weighted_dc_sum(duties, w)?))
}
