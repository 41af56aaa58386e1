//! Voltage-to-PWM conversion by the ring oscillator.
//!
//! Two behavioral models: `Raw` is the bare oscillator, linear inside its
//! operating window and stopped outside it; `Compensated` is the cubic fit of
//! the whole perceptron with the clamp transistor, capped at 98%.

use crate::error::ConverterError;
use crate::scalar::Scalar;

/// Default cubic of the compensated stage, in percent, highest power first.
pub const STAGE_COEFFICIENTS: [f64; 4] = [107.27, -53.25, 52.92, 13.44];
/// Largest output duty the oscillator produces, in percent.
pub const STAGE_OUTPUT_CAP: f64 = 98.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConverterMode {
    Raw,
    Compensated,
}

/// Result of a conversion: a duty cycle, or a stopped oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conversion<F> {
    Duty(F),
    NoOscillation,
}

impl<F: Copy> Conversion<F> {
    pub fn duty(self) -> Option<F> {
        match self {
            Conversion::Duty(d) => Some(d),
            Conversion::NoOscillation => None,
        }
    }
}

/// Operating window of the raw oscillator as fractions of Vdd, with the
/// duties it produces at the window edges and at Vdd/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCalibration<F> {
    pub v_lo: F,
    pub v_hi: F,
    pub duty_at_lo: F,
    pub duty_at_mid: F,
    pub duty_at_hi: F,
}

impl<F: Scalar> Default for RawCalibration<F> {
    /// 0.7 V .. 2.3 V at a 2.5 V supply.
    fn default() -> Self {
        Self {
            v_lo: F::lit(0.28),
            v_hi: F::lit(0.92),
            duty_at_lo: F::lit(0.9),
            duty_at_mid: F::lit(0.5),
            duty_at_hi: F::lit(0.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterModel<F> {
    pub mode: ConverterMode,
    /// `(c3, c2, c1, c0)` of the stage cubic, output in percent.
    pub coefficients: [F; 4],
    /// Output cap in percent.
    pub output_cap: F,
    pub raw: RawCalibration<F>,
}

impl<F: Scalar> ConverterModel<F> {
    pub fn compensated() -> Self {
        Self {
            mode: ConverterMode::Compensated,
            coefficients: STAGE_COEFFICIENTS.map(F::lit),
            output_cap: F::lit(STAGE_OUTPUT_CAP),
            raw: RawCalibration::default(),
        }
    }

    pub fn raw() -> Self {
        Self {
            mode: ConverterMode::Raw,
            ..Self::compensated()
        }
    }

    /// Compensated model with arbitrary cubic and cap (both in percent).
    pub fn from_cubic(coefficients: [F; 4], output_cap: F) -> Self {
        Self {
            coefficients,
            output_cap,
            ..Self::compensated()
        }
    }

    /// Ideal stage: output equals input.
    pub fn identity() -> Self {
        Self::from_cubic(
            [F::zero(), F::zero(), F::lit(100.0), F::zero()],
            F::lit(100.0),
        )
    }

    /// Cubic in percent.
    pub fn cubic(&self, x: F) -> F {
        let [c3, c2, c1, c0] = self.coefficients;
        ((c3 * x + c2) * x + c1) * x + c0
    }

    fn cubic_slope(&self, x: F) -> F {
        let [c3, c2, c1, _] = self.coefficients;
        (F::lit(3.0) * c3 * x + F::lit(2.0) * c2) * x + c1
    }

    /// Duty in -> duty out of one stage at maximum weights.
    pub fn stage_map(&self, x: F) -> F {
        let hundred = F::lit(100.0);
        (self.cubic(x).min(self.output_cap) / hundred).max(F::zero())
    }

    /// Right-hand derivative of [`stage_map`](Self::stage_map); zero where
    /// the output is capped or floored.
    pub fn stage_map_slope(&self, x: F) -> F {
        let y = self.cubic(x);
        if y >= self.output_cap || y < F::zero() {
            F::zero()
        } else {
            self.cubic_slope(x) / F::lit(100.0)
        }
    }

    /// Converts a capacitor voltage to the oscillator's output duty.
    pub fn v_to_dc(&self, v: F, vdd: F) -> Conversion<F> {
        let r = v / vdd;
        match self.mode {
            ConverterMode::Compensated => {
                let dc_sum = (F::one() - r).max(F::zero()).min(F::one());
                Conversion::Duty(self.stage_map(dc_sum))
            }
            ConverterMode::Raw => {
                let c = &self.raw;
                // v and vdd given in decimal volts rarely divide exactly
                let tol = F::epsilon() * F::lit(8.0);
                if r < c.v_lo - tol || r > c.v_hi + tol {
                    return Conversion::NoOscillation;
                }
                let half = F::lit(0.5);
                let d = if r <= half {
                    c.duty_at_lo + (r - c.v_lo) * (c.duty_at_mid - c.duty_at_lo) / (half - c.v_lo)
                } else {
                    c.duty_at_mid + (r - half) * (c.duty_at_hi - c.duty_at_mid) / (c.v_hi - half)
                };
                let (lo, hi) = if c.duty_at_hi <= c.duty_at_lo {
                    (c.duty_at_hi, c.duty_at_lo)
                } else {
                    (c.duty_at_lo, c.duty_at_hi)
                };
                Conversion::Duty(d.max(lo).min(hi))
            }
        }
    }

    /// Applies the stage map `n` times.
    pub fn iterate(&self, x0: F, n: usize) -> F {
        (0..n).fold(x0, |x, _| self.stage_map(x))
    }
}

/// Least-squares cubic and its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult<F> {
    /// `(c3, c2, c1, c0)`, same units as the fitted `ys`.
    pub coefficients: [F; 4],
    pub r_squared: F,
}

impl<F: Scalar> FitResult<F> {
    pub fn eval(&self, x: F) -> F {
        let [c3, c2, c1, c0] = self.coefficients;
        ((c3 * x + c2) * x + c1) * x + c0
    }
}

/// Fits `y = c3 x^3 + c2 x^2 + c1 x + c0` by Householder QR on the
/// Vandermonde matrix.
pub fn fit_cubic<F: Scalar>(xs: &[F], ys: &[F]) -> Result<FitResult<F>, ConverterError> {
    if xs.len() != ys.len() {
        return Err(ConverterError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let mut distinct: Vec<F> = xs.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(ConverterError::RankDeficient(distinct.len()));
    }
    let n = xs.len();
    let mean = ys.iter().fold(F::zero(), |a, &y| a + y) / F::from_usize_lossy(n);
    let ss_tot = ys.iter().fold(F::zero(), |a, &y| a + (y - mean) * (y - mean));
    if ss_tot == F::zero() {
        return Ok(FitResult {
            coefficients: [F::zero(), F::zero(), F::zero(), mean],
            r_squared: F::zero(),
        });
    }

    // columns: x^3, x^2, x, 1
    let mut a: Vec<[F; 4]> = xs.iter().map(|&x| [x * x * x, x * x, x, F::one()]).collect();
    let mut b: Vec<F> = ys.to_vec();
    for k in 0..4 {
        let norm = (k..n).fold(F::zero(), |s, i| s + a[i][k] * a[i][k]).sqrt();
        if norm == F::zero() {
            return Err(ConverterError::RankDeficient(distinct.len()));
        }
        let alpha = if a[k][k] > F::zero() { -norm } else { norm };
        let mut v: Vec<F> = (k..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2 = v.iter().fold(F::zero(), |s, &x| s + x * x);
        if vnorm2 == F::zero() {
            continue;
        }
        for j in k..4 {
            let dot = (k..n).fold(F::zero(), |s, i| s + v[i - k] * a[i][j]);
            let f = F::lit(2.0) * dot / vnorm2;
            for i in k..n {
                a[i][j] -= f * v[i - k];
            }
        }
        let dot = (k..n).fold(F::zero(), |s, i| s + v[i - k] * b[i]);
        let f = F::lit(2.0) * dot / vnorm2;
        for i in k..n {
            b[i] -= f * v[i - k];
        }
    }
    let mut c = [F::zero(); 4];
    for k in (0..4).rev() {
        let s = ((k + 1)..4).fold(b[k], |s, j| s - a[k][j] * c[j]);
        c[k] = s / a[k][k];
    }

    let fit = FitResult {
        coefficients: c,
        r_squared: F::zero(),
    };
    let ss_res = xs
        .iter()
        .zip(ys)
        .fold(F::zero(), |s, (&x, &y)| s + (y - fit.eval(x)) * (y - fit.eval(x)));
    Ok(FitResult {
        r_squared: (F::one() - ss_res / ss_tot).max(F::zero()).min(F::one()),
        ..fit
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint<F> {
    pub x: F,
    pub slope: F,
    pub stability: Stability,
}

/// Fixed points of the stage map on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoints<F> {
    pub points: Vec<FixedPoint<F>>,
    /// Grid intervals on which the map coincides with the identity; such
    /// maps have a continuum of fixed points instead of isolated ones.
    pub degenerate: Vec<(F, F)>,
}

impl<F: Scalar> FixedPoints<F> {
    pub fn is_degenerate(&self) -> bool {
        !self.degenerate.is_empty()
    }

    /// Closest reported point to `x`.
    pub fn nearest(&self, x: F) -> Option<&FixedPoint<F>> {
        self.points.iter().min_by(|a, b| {
            (a.x - x)
                .abs()
                .partial_cmp(&(b.x - x).abs())
                .unwrap()
        })
    }
}

const FIXED_POINT_GRID: usize = 10_000;

/// Locates the roots of `stage_map(x) - x` by scanning a 1e-4 grid for sign
/// changes and bisecting each bracket.
pub fn find_fixed_points<F: Scalar>(
    model: &ConverterModel<F>,
) -> Result<FixedPoints<F>, ConverterError> {
    if model.mode != ConverterMode::Compensated {
        return Err(ConverterError::NotCompensated);
    }
    let g = |x: F| model.stage_map(x) - x;
    let zero_tol = F::lit(1e-12);
    let step = F::one() / F::from_usize_lossy(FIXED_POINT_GRID);
    let xs: Vec<F> = (0..=FIXED_POINT_GRID)
        .map(|i| F::from_usize_lossy(i) * step)
        .collect();
    let gs: Vec<F> = xs.iter().map(|&x| g(x)).collect();

    let mut points = Vec::new();
    let mut degenerate = Vec::new();
    let classify = |x: F| {
        let slope = model.stage_map_slope(x);
        FixedPoint {
            x,
            slope,
            stability: if slope.abs() < F::one() {
                Stability::Stable
            } else {
                Stability::Unstable
            },
        }
    };

    let mut i = 0;
    while i < xs.len() {
        if gs[i].abs() <= zero_tol {
            let start = i;
            while i + 1 < xs.len() && gs[i + 1].abs() <= zero_tol {
                i += 1;
            }
            if i > start {
                degenerate.push((xs[start], xs[i]));
            } else {
                points.push(classify(xs[i]));
            }
            i += 1;
            continue;
        }
        if i + 1 < xs.len() && gs[i + 1].abs() > zero_tol && gs[i].signum() != gs[i + 1].signum() {
            let (mut lo, mut hi) = (xs[i], xs[i + 1]);
            let glo = gs[i];
            for _ in 0..200 {
                let mid = (lo + hi) * F::lit(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid).signum() == glo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            points.push(classify((lo + hi) * F::lit(0.5)));
        }
        i += 1;
    }
    Ok(FixedPoints { points, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_map_points() {
        let m = ConverterModel::<f64>::compensated();
        assert!((m.stage_map(0.0) - 0.1344).abs() < 1e-12);
        assert!((m.stage_map(0.5) - 0.3999625).abs() < 1e-12);
        assert_eq!(m.stage_map(0.95), 0.98);
    }

    #[test]
    fn stage_slope_at_half() {
        let m = ConverterModel::<f64>::compensated();
        let want = (3.0 * 107.27 * 0.25 - 2.0 * 53.25 * 0.5 + 52.92) / 100.0;
        assert!((m.stage_map_slope(0.5) - want).abs() < 1e-12);
        assert!((want - 0.801225).abs() < 1e-12);
        assert_eq!(m.stage_map_slope(0.97), 0.0);
    }

    #[test]
    fn default_map_is_non_decreasing() {
        let m = ConverterModel::<f64>::compensated();
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            assert!(m.cubic_slope(x) > 0.0);
            if i > 0 {
                assert!(m.stage_map(x) >= m.stage_map(x - 1e-3));
            }
        }
    }

    #[test]
    fn compensated_conversion_uses_dc_sum() {
        let m = ConverterModel::<f64>::compensated();
        assert_eq!(m.v_to_dc(1.25, 2.5), Conversion::Duty(m.stage_map(0.5)));
    }

    #[test]
    fn raw_conversion_window() {
        let m = ConverterModel::<f64>::raw();
        assert_eq!(m.v_to_dc(0.5, 2.5), Conversion::NoOscillation);
        assert_eq!(m.v_to_dc(2.4, 2.5), Conversion::NoOscillation);
        let mid = m.v_to_dc(1.25, 2.5).duty().unwrap();
        assert!((mid - 0.5).abs() < 1e-12);
        assert!((m.v_to_dc(0.7, 2.5).duty().unwrap() - 0.9).abs() < 1e-12);
        assert!((m.v_to_dc(2.3, 2.5).duty().unwrap() - 0.1).abs() < 1e-12);
        // duty falls as the capacitor voltage rises
        let mut last = 1.0;
        for i in 0..=64 {
            let v = 0.7 + 1.6 * i as f64 / 64.0;
            let d = m.v_to_dc(v, 2.5).duty().unwrap();
            assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn raw_window_scales_with_supply() {
        let m = ConverterModel::<f64>::raw();
        assert_eq!(m.v_to_dc(0.6, 1.0).duty(), m.v_to_dc(1.5, 2.5).duty());
    }

    #[test]
    fn fit_recovers_stage_cubic() {
        let m = ConverterModel::<f64>::compensated();
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0 * 0.85).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| m.cubic(x) / 100.0).collect();
        let fit = fit_cubic(&xs, &ys).unwrap();
        for (c, want) in fit.coefficients.iter().zip(STAGE_COEFFICIENTS) {
            assert!((c - want / 100.0).abs() < 1e-6, "{:?}", fit.coefficients);
        }
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_constant_data() {
        let xs = [0.0, 0.2, 0.4, 0.6, 0.8];
        let fit = fit_cubic(&xs, &[0.5; 5]).unwrap();
        assert_eq!(fit.r_squared, 0.0);
        assert_eq!(fit.coefficients, [0.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn fit_needs_four_distinct_points() {
        assert_eq!(
            fit_cubic(&[0.0, 0.5, 0.5, 1.0], &[0.0, 1.0, 2.0, 3.0]),
            Err(ConverterError::RankDeficient(3))
        );
        assert!(fit_cubic(&[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn fit_minimizes_residual() {
        // noisy quadratic: perturbing any coefficient must not lower SS_res
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| 0.3 * x * x - 0.1 * x + 0.2 + if i % 3 == 0 { 0.01 } else { -0.005 })
            .collect();
        let fit = fit_cubic(&xs, &ys).unwrap();
        let ss = |c: [f64; 4]| {
            let f = FitResult { coefficients: c, r_squared: 0.0 };
            xs.iter().zip(&ys).map(|(&x, &y)| (y - f.eval(x)).powi(2)).sum::<f64>()
        };
        let base = ss(fit.coefficients);
        for k in 0..4 {
            for d in [-1e-4, 1e-4] {
                let mut c = fit.coefficients;
                c[k] += d;
                assert!(ss(c) >= base - 1e-15);
            }
        }
    }

    #[test]
    fn fixed_points_of_default_stage() {
        let fp = find_fixed_points(&ConverterModel::<f64>::compensated()).unwrap();
        assert!(!fp.is_degenerate());
        let low = fp.nearest(0.25).unwrap();
        assert!((low.x - 0.250).abs() < 0.005 && low.stability == Stability::Stable);
        // Newton on cubic(x) - 100x from the right of the unstable root
        let mut x = 0.9f64;
        for _ in 0..50 {
            let g = ((107.27 * x - 53.25) * x - 47.08) * x + 13.44;
            let dg = (3.0 * 107.27 * x - 2.0 * 53.25) * x - 47.08;
            x -= g / dg;
        }
        let mid = fp.nearest(0.85).unwrap();
        assert!((mid.x - x).abs() < 1e-4 && mid.stability == Stability::Unstable);
        assert!((mid.x - 0.8412).abs() < 1e-3);
        let cap = fp.nearest(0.98).unwrap();
        assert!((cap.x - 0.98).abs() < 1e-9 && cap.stability == Stability::Stable);
        assert_eq!(fp.points.len(), 3);
    }

    #[test]
    fn identity_is_degenerate() {
        let fp = find_fixed_points(&ConverterModel::<f64>::identity()).unwrap();
        assert!(fp.is_degenerate());
        assert_eq!(fp.degenerate, vec![(0.0, 1.0)]);
    }

    #[test]
    fn raw_model_has_no_stage_map_analysis() {
        assert_eq!(
            find_fixed_points(&ConverterModel::<f64>::raw()),
            Err(ConverterError::NotCompensated)
        );
    }

    #[test]
    fn iteration_basins() {
        let m = ConverterModel::<f64>::compensated();
        let stable = find_fixed_points(&m).unwrap().nearest(0.25).unwrap().x;
        for i in 0..=84 {
            let x0 = i as f64 / 100.0;
            assert!((m.iterate(x0, 50) - stable).abs() < 1e-3, "{x0}");
        }
        for x0 in [0.87, 0.9, 0.95, 1.0] {
            assert_eq!(m.iterate(x0, 50), 0.98);
        }
    }
}
