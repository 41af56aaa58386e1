//! PWM input waveforms and supply-voltage profiles.
//!
//! A [`PwmSignal`] is high for the first `duty` fraction of every period,
//! starting at `phase`. Edge times are computed from the cycle index rather
//! than accumulated, so there is no drift over long runs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SignalError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Low,
    High,
}

/// Periodic rectangular waveform carrying a value in its duty cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwmSignal<F> {
    frequency: F,
    duty: F,
    phase: F,
}

impl<F: Scalar> PwmSignal<F> {
    pub fn new(frequency: F, duty: F) -> Result<Self, SignalError> {
        Self::with_phase(frequency, duty, F::zero())
    }

    pub fn with_phase(frequency: F, duty: F, phase: F) -> Result<Self, SignalError> {
        if !(frequency > F::zero()) || !frequency.is_finite() {
            return Err(SignalError::Frequency(frequency.as_f64()));
        }
        if !(duty >= F::zero() && duty <= F::one()) {
            return Err(SignalError::Duty(duty.as_f64()));
        }
        let period = frequency.recip();
        if !(phase >= F::zero() && phase < period) {
            return Err(SignalError::Phase {
                phase: phase.as_f64(),
                period: period.as_f64(),
            });
        }
        Ok(Self {
            frequency,
            duty,
            phase,
        })
    }

    pub fn frequency(&self) -> F {
        self.frequency
    }

    pub fn duty(&self) -> F {
        self.duty
    }

    pub fn phase(&self) -> F {
        self.phase
    }

    pub fn period(&self) -> F {
        self.frequency.recip()
    }

    /// Duty 0 and 1 never switch.
    pub fn is_constant(&self) -> bool {
        self.duty == F::zero() || self.duty == F::one()
    }

    /// Fractional position inside the current cycle, in `[0, 1)`.
    fn cycle_fraction(&self, t: F) -> F {
        let cycles = (t - self.phase) * self.frequency;
        let frac = cycles - cycles.floor();
        // `floor` of a value a hair below an integer can leave frac == 1.0
        if frac >= F::one() {
            F::zero()
        } else {
            frac
        }
    }

    pub fn state_at(&self, t: F) -> Level {
        if self.duty == F::one() {
            return Level::High;
        }
        if self.duty == F::zero() {
            return Level::Low;
        }
        if self.cycle_fraction(t) < self.duty {
            Level::High
        } else {
            Level::Low
        }
    }

    /// Rising edge of cycle `m` (cycle 0 starts at `phase`).
    pub fn rising_edge(&self, m: i64) -> F {
        self.phase + F::from_i64(m).expect("cycle index") / self.frequency
    }

    /// Falling edge of cycle `m`.
    pub fn falling_edge(&self, m: i64) -> F {
        self.phase + (F::from_i64(m).expect("cycle index") + self.duty) / self.frequency
    }

    /// First switching instant strictly after `t`, or `None` for constant signals.
    pub fn next_edge_after(&self, t: F) -> Option<F> {
        if self.is_constant() {
            return None;
        }
        let m = ((t - self.phase) * self.frequency).floor().to_i64()?;
        // Check the edges of cycles m-1..m+1 to absorb rounding in the floor.
        let mut best: Option<F> = None;
        for c in (m - 1)..=(m + 1) {
            for e in [self.rising_edge(c), self.falling_edge(c)] {
                if e > t && best.is_none_or(|b| e < b) {
                    best = Some(e);
                }
            }
        }
        best
    }

    /// Time spent high in `[t0, t1]`.
    pub fn high_time(&self, t0: F, t1: F) -> F {
        if t1 <= t0 {
            return F::zero();
        }
        let period = self.period();
        let high_until = |t: F| {
            // high time in [phase, t] measured with whole cycles plus remainder
            let cycles = (t - self.phase) * self.frequency;
            let whole = cycles.floor();
            let rem = (cycles - whole).min(self.duty);
            (whole * self.duty + rem) * period
        };
        high_until(t1) - high_until(t0)
    }
}

/// Assigns each signal an independent uniform phase in `[0, period)`.
pub fn randomize_phases<F: Scalar>(signals: &mut [PwmSignal<F>], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in signals.iter_mut() {
        let u: f64 = rng.gen_range(0.0..1.0);
        let phase = F::lit(u) * s.period();
        s.phase = if phase < s.period() { phase } else { F::zero() };
    }
}

/// Supply voltage as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum SupplyProfile<F> {
    Constant { vdd: F },
    Sinusoid { mean: F, amplitude: F, period: F },
    PiecewiseLinear { breakpoints: Vec<(F, F)> },
}

impl<F: Scalar> SupplyProfile<F> {
    pub fn constant(vdd: F) -> Result<Self, SignalError> {
        let p = SupplyProfile::Constant { vdd };
        p.check_positive(F::zero())?;
        Ok(p)
    }

    /// Sinusoid checked positive on `[0, horizon]`.
    pub fn sinusoid(mean: F, amplitude: F, period: F, horizon: F) -> Result<Self, SignalError> {
        if !(period > F::zero()) {
            return Err(SignalError::Profile("sinusoid period must be > 0".into()));
        }
        let p = SupplyProfile::Sinusoid {
            mean,
            amplitude,
            period,
        };
        p.check_positive(horizon)?;
        Ok(p)
    }

    pub fn piecewise_linear(breakpoints: Vec<(F, F)>, horizon: F) -> Result<Self, SignalError> {
        if breakpoints.is_empty() {
            return Err(SignalError::Profile("no breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(SignalError::Profile(
                "breakpoint times must be strictly increasing".into(),
            ));
        }
        let p = SupplyProfile::PiecewiseLinear { breakpoints };
        p.check_positive(horizon)?;
        Ok(p)
    }

    pub fn value_at(&self, t: F) -> F {
        match self {
            SupplyProfile::Constant { vdd } => *vdd,
            SupplyProfile::Sinusoid {
                mean,
                amplitude,
                period,
            } => *mean + *amplitude * (F::TAU() * t / *period).sin(),
            SupplyProfile::PiecewiseLinear { breakpoints } => {
                let first = breakpoints[0];
                if t <= first.0 {
                    return first.1;
                }
                let idx = breakpoints.partition_point(|&(bt, _)| bt <= t);
                if idx >= breakpoints.len() {
                    return breakpoints[breakpoints.len() - 1].1;
                }
                let (t0, v0) = breakpoints[idx - 1];
                let (t1, v1) = breakpoints[idx];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Smallest supply value on `[0, horizon]`.
    pub fn min_value(&self, horizon: F) -> F {
        self.extremum(horizon, |a, b| a.min(b), false)
    }

    /// Largest supply value on `[0, horizon]`.
    pub fn max_value(&self, horizon: F) -> F {
        self.extremum(horizon, |a, b| a.max(b), true)
    }

    fn extremum(&self, horizon: F, pick: impl Fn(F, F) -> F, want_max: bool) -> F {
        let mut best = pick(self.value_at(F::zero()), self.value_at(horizon));
        match self {
            SupplyProfile::Constant { .. } => {}
            SupplyProfile::Sinusoid {
                amplitude, period, ..
            } => {
                // sin peaks at 1/4 period, troughs at 3/4
                let quarter = F::lit(0.25);
                let offset = if (*amplitude >= F::zero()) == want_max {
                    quarter
                } else {
                    F::lit(0.75)
                };
                let t = offset * *period;
                if t <= horizon {
                    best = pick(best, self.value_at(t));
                }
            }
            SupplyProfile::PiecewiseLinear { breakpoints } => {
                for &(t, v) in breakpoints {
                    if t <= horizon {
                        best = pick(best, v);
                    }
                }
            }
        }
        best
    }

    pub fn check_positive(&self, horizon: F) -> Result<(), SignalError> {
        let min = self.min_value(horizon);
        if min > F::zero() && min.is_finite() {
            Ok(())
        } else {
            Err(SignalError::NonPositiveSupply(min.as_f64()))
        }
    }

    /// Value used to size thresholds and report ratios.
    pub fn nominal(&self) -> F {
        match self {
            SupplyProfile::Constant { vdd } => *vdd,
            SupplyProfile::Sinusoid { mean, .. } => *mean,
            SupplyProfile::PiecewiseLinear { breakpoints } => breakpoints[0].1,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SupplyProfile::Constant { .. })
    }

    /// Longest zero-order-hold step that tracks this profile (1/200 of its
    /// characteristic period), or `None` when the supply never changes.
    pub fn hold_step(&self) -> Option<F> {
        let div = F::lit(200.0);
        match self {
            SupplyProfile::Constant { .. } => None,
            SupplyProfile::Sinusoid { period, .. } => Some(*period / div),
            SupplyProfile::PiecewiseLinear { breakpoints } => breakpoints
                .windows(2)
                .map(|w| w[1].0 - w[0].0)
                .fold(None, |acc: Option<F>, d| Some(acc.map_or(d, |a| a.min(d))))
                .map(|d| d / div),
        }
    }

    /// Characteristic period for steady-state windows, if periodic.
    pub fn period(&self) -> Option<F> {
        match self {
            SupplyProfile::Sinusoid { period, .. } => Some(*period),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_wave_halves() {
        let s = PwmSignal::new(1e6, 0.5).unwrap();
        assert_eq!(s.state_at(0.25e-6), Level::High);
        assert_eq!(s.state_at(0.75e-6), Level::Low);
    }

    #[test]
    fn state_wraps_by_period() {
        let s = PwmSignal::new(100e6, 0.3).unwrap();
        assert_eq!(s.state_at(17.5e-9), Level::Low);
        assert_eq!(s.state_at(12.0e-9), Level::High);
    }

    #[test]
    fn no_drift_after_a_million_periods() {
        let s = PwmSignal::new(1e6, 0.25).unwrap();
        let n: f64 = 1_000_000.0;
        assert_eq!(s.state_at(n * 1e-6 + 0.2e-6), Level::High);
        assert_eq!(s.state_at(n * 1e-6 + 0.3e-6), Level::Low);
        let e = s.next_edge_after(n * 1e-6 + 0.1e-6).unwrap();
        assert!((e - (n * 1e-6 + 0.25e-6)).abs() < 1e-15);
    }

    #[test]
    fn constant_duties() {
        let hi = PwmSignal::new(1e3, 1.0).unwrap();
        let lo = PwmSignal::new(1e3, 0.0).unwrap();
        assert_eq!(hi.state_at(0.123), Level::High);
        assert_eq!(lo.state_at(0.123), Level::Low);
        assert!(hi.next_edge_after(0.0).is_none());
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(PwmSignal::new(0.0, 0.5).is_err());
        assert!(PwmSignal::new(1.0, 1.5).is_err());
        assert!(PwmSignal::with_phase(1.0, 0.5, 1.0).is_err());
        assert!(PwmSignal::with_phase(1.0, 0.5, -0.1).is_err());
    }

    #[test]
    fn phase_shifts_edges() {
        let s = PwmSignal::with_phase(1.0, 0.5, 0.25).unwrap();
        assert_eq!(s.state_at(0.1), Level::Low);
        assert_eq!(s.state_at(0.3), Level::High);
        assert_eq!(s.next_edge_after(0.0), Some(0.25));
    }

    #[test]
    fn sinusoid_extremes() {
        let p = SupplyProfile::<f64>::sinusoid(2.5, 0.7, 10e-6, 20e-6).unwrap();
        assert!((p.value_at(2.5e-6) - 3.2).abs() < 1e-12);
        assert!((p.value_at(7.5e-6) - 1.8).abs() < 1e-12);
        assert!((p.min_value(20e-6) - 1.8).abs() < 1e-12);
        assert!((p.max_value(20e-6) - 3.2).abs() < 1e-12);
        assert_eq!(p.hold_step(), Some(10e-6 / 200.0));
    }

    #[test]
    fn constant_supply() {
        let p = SupplyProfile::constant(2.5).unwrap();
        assert_eq!(p.value_at(0.0), 2.5);
        assert_eq!(p.value_at(1e3), 2.5);
        assert!(p.hold_step().is_none());
        assert!(SupplyProfile::constant(0.0).is_err());
    }

    #[test]
    fn pwl_interpolates_and_holds() {
        let p = SupplyProfile::piecewise_linear(vec![(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)], 5.0)
            .unwrap();
        assert_eq!(p.value_at(0.5), 2.0);
        assert_eq!(p.value_at(1.5), 2.5);
        assert_eq!(p.value_at(10.0), 2.0);
        assert!(SupplyProfile::piecewise_linear(vec![(0.0, 1.0), (1.0, -1.0)], 5.0).is_err());
        assert!(SupplyProfile::piecewise_linear(vec![(1.0, 1.0), (1.0, 2.0)], 5.0).is_err());
    }

    #[test]
    fn sinusoid_rejected_when_it_dips_below_zero() {
        assert!(SupplyProfile::sinusoid(0.5, 1.0, 1.0, 1.0).is_err());
        // trough at 0.75 s is outside the horizon
        assert!(SupplyProfile::sinusoid(0.5, 1.0, 1.0, 0.5).is_ok());
    }

    #[test]
    fn random_phases_are_seeded() {
        let base = vec![PwmSignal::new(1e6, 0.5).unwrap(); 3];
        let mut a = base.clone();
        let mut b = base.clone();
        randomize_phases(&mut a, 7);
        randomize_phases(&mut b, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.phase() >= 0.0 && s.phase() < 1e-6));
    }
}
