//! A perceptron: weighted accumulator, optional clamp, and ring-oscillator
//! converter, evaluated either from the closed-form equilibrium or from the
//! transient solver.

use crate::analytic::{vac_equilibrium, WeightVector};
use crate::converter::{Conversion, ConverterModel};
use crate::error::PerceptronError;
use crate::scalar::Scalar;
use crate::signals::{PwmSignal, SupplyProfile};
use crate::transient::{default_horizon, simulate_vac, slowest_period, trace_metrics, VacConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalPath<F> {
    /// Closed-form accumulator equilibrium.
    Behavioral,
    /// Steady-state average of a simulated trace with inputs at `frequency`.
    Transient { frequency: F, horizon: Option<F> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptronConfig<F> {
    pub vac: VacConfig<F>,
    pub converter: ConverterModel<F>,
    pub path: EvalPath<F>,
    /// Supply used by [`chain_eval`] and [`response_curve`].
    pub vdd: F,
}

impl<F: Scalar> PerceptronConfig<F> {
    /// 3-input, 3-bit small accumulator with the compensated stage model at 2.5 V.
    pub fn behavioral() -> Self {
        Self {
            vac: VacConfig::small(3, 3),
            converter: ConverterModel::compensated(),
            path: EvalPath::Behavioral,
            vdd: F::lit(2.5),
        }
    }

    pub fn with_path(mut self, path: EvalPath<F>) -> Self {
        self.path = path;
        self
    }

    pub fn with_converter(mut self, converter: ConverterModel<F>) -> Self {
        self.converter = converter;
        self
    }

    pub fn with_vac(mut self, vac: VacConfig<F>) -> Self {
        self.vac = vac;
        self
    }
}

/// Average capacitor voltage the converter sees.
pub fn capacitor_voltage<F: Scalar>(
    cfg: &PerceptronConfig<F>,
    duties: &[F],
    w: &WeightVector,
    vdd: F,
) -> Result<F, PerceptronError> {
    match cfg.path {
        EvalPath::Behavioral => {
            let v = vac_equilibrium(duties, w, vdd)?;
            // the clamp floors the average just as it floors the waveform
            let thr = cfg.vac.compensation_threshold;
            Ok(if thr > F::zero() { v.max(thr) } else { v })
        }
        EvalPath::Transient { frequency, horizon } => {
            let inputs = duties
                .iter()
                .map(|&d| PwmSignal::new(frequency, d))
                .collect::<Result<Vec<_>, _>>()
                .map_err(crate::error::TransientError::from)?;
            let supply = SupplyProfile::constant(vdd).map_err(crate::error::TransientError::from)?;
            let h = horizon.unwrap_or_else(|| default_horizon(&cfg.vac, &inputs, &supply));
            let trace = simulate_vac(&cfg.vac, &inputs, w, &supply, h, vdd)?;
            Ok(trace_metrics(&trace, slowest_period(&inputs)).average_v)
        }
    }
}

/// Output duty of one perceptron.
pub fn perceptron_eval<F: Scalar>(
    cfg: &PerceptronConfig<F>,
    duties: &[F],
    w: &WeightVector,
    vdd: F,
) -> Result<F, PerceptronError> {
    let v = capacitor_voltage(cfg, duties, w, vdd)?;
    match cfg.converter.v_to_dc(v, vdd) {
        Conversion::Duty(d) => Ok(d),
        Conversion::NoOscillation => Err(PerceptronError::NoOscillation {
            v_cap: v.as_f64(),
            vdd: vdd.as_f64(),
        }),
    }
}

/// Feeds `dc_in` through `depth` stages in series, each with every input
/// tied to the previous output and all weights at maximum.
pub fn chain_eval<F: Scalar>(
    cfg: &PerceptronConfig<F>,
    depth: usize,
    dc_in: F,
) -> Result<F, PerceptronError> {
    Ok(*chain_trace(cfg, depth, dc_in)?.last().expect("depth >= 1"))
}

/// Output of every stage of the chain, first stage first.
pub fn chain_trace<F: Scalar>(
    cfg: &PerceptronConfig<F>,
    depth: usize,
    dc_in: F,
) -> Result<Vec<F>, PerceptronError> {
    if depth == 0 {
        return Err(PerceptronError::Depth);
    }
    let w = WeightVector::max_weights(cfg.vac.n, cfg.vac.bits)?;
    let mut x = dc_in;
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        let duties = vec![x; cfg.vac.n];
        x = perceptron_eval(cfg, &duties, &w, cfg.vdd)?;
        out.push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve<F> {
    pub depth: usize,
    pub points: Vec<(F, Result<F, PerceptronError>)>,
}

impl<F: Scalar> ResponseCurve<F> {
    /// Total absolute deviation from the identity over successful points.
    pub fn deviation(&self) -> F {
        self.points
            .iter()
            .filter_map(|(x, r)| r.as_ref().ok().map(|y| (*y - *x).abs()))
            .fold(F::zero(), |a, d| a + d)
    }

    pub fn successes(&self) -> impl Iterator<Item = (F, F)> + '_ {
        self.points
            .iter()
            .filter_map(|(x, r)| r.as_ref().ok().map(|y| (*x, *y)))
    }
}

pub fn response_curve<F: Scalar>(
    cfg: &PerceptronConfig<F>,
    grid: &[F],
    depth: usize,
) -> ResponseCurve<F> {
    ResponseCurve {
        depth,
        points: grid
            .iter()
            .map(|&x| (x, chain_eval(cfg, depth, x)))
            .collect(),
    }
}

/// `n + 1` evenly spaced points on `[0, 1]`.
pub fn unit_grid<F: Scalar>(n: usize) -> Vec<F> {
    (0..=n)
        .map(|i| F::from_usize_lossy(i) / F::from_usize_lossy(n))
        .collect()
}
