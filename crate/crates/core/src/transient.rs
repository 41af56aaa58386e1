//! Event-driven transient solver for the accumulator capacitor.
//!
//! Between input edges every unit cell is a fixed resistor to either Vdd or
//! ground, so the capacitor voltage is an exact exponential toward the
//! divider equilibrium. The solver steps edge to edge and stores one
//! [`Segment`] per interval; metrics integrate those segments in closed form.
//!
//! A weight-`W` input of a `k`-bit accumulator owns `2^k - 1` unit cells:
//! `W` of them follow the input (NAND enabled), the rest are disabled and
//! hold their output at Vdd.

use crate::analytic::WeightVector;
use crate::error::TransientError;
use crate::scalar::Scalar;
use crate::signals::{Level, PwmSignal, SupplyProfile};

/// Circuit parameters of a weighted-addition accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacConfig<F> {
    pub n: usize,
    pub bits: u32,
    /// Output resistor of a x1 cell; a xm cell has `r_unit / m`.
    pub r_unit: F,
    pub c_out: F,
    /// Clamp turn-on voltage; 0 disables the compensation transistor.
    pub compensation_threshold: F,
}

impl<F: Scalar> VacConfig<F> {
    pub fn new(n: usize, bits: u32, r_unit: F, c_out: F) -> Result<Self, TransientError> {
        let cfg = Self {
            n,
            bits,
            r_unit,
            c_out,
            compensation_threshold: F::zero(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 10 pF output capacitor, 100 kOhm unit resistors.
    pub fn small(n: usize, bits: u32) -> Self {
        Self::new(n, bits, F::lit(100e3), F::lit(10e-12)).expect("valid preset")
    }

    /// 100 pF output capacitor, 1 MOhm unit resistors.
    pub fn large(n: usize, bits: u32) -> Self {
        Self::new(n, bits, F::lit(1e6), F::lit(100e-12)).expect("valid preset")
    }

    pub fn with_compensation(mut self, threshold: F) -> Self {
        self.compensation_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), TransientError> {
        if self.n == 0 {
            return Err(TransientError::Config("n must be at least 1".into()));
        }
        if self.bits == 0 || self.bits > 31 {
            return Err(TransientError::Config(format!(
                "bits must be in 1..=31, got {}",
                self.bits
            )));
        }
        if !(self.r_unit > F::zero()) || !(self.c_out > F::zero()) {
            return Err(TransientError::Config(
                "r_unit and c_out must be positive".into(),
            ));
        }
        if !(self.compensation_threshold >= F::zero()) {
            return Err(TransientError::Config(
                "compensation threshold must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn cells_per_input(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// Time constant with every unit cell in parallel on the capacitor.
    pub fn time_constant(&self) -> F {
        let cells = F::from_usize_lossy(self.n) * F::from_u32(self.cells_per_input()).unwrap();
        self.c_out * self.r_unit / cells
    }
}

/// One constant-topology interval of the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<F> {
    pub t0: F,
    pub dt: F,
    pub v0: F,
    pub v_eq: F,
    pub tau: F,
    pub vdd: F,
    /// Conductance of cells currently pulling up.
    pub g_up: F,
    pub g_dn: F,
    /// Offset into the segment at which the clamp engages, if it does.
    pub clamp_from: Option<F>,
    pub clamp_v: F,
}

impl<F: Scalar> Segment<F> {
    pub fn t1(&self) -> F {
        self.t0 + self.dt
    }

    fn free(&self, s: F) -> F {
        self.v_eq + (self.v0 - self.v_eq) * (-s / self.tau).exp()
    }

    /// Voltage at offset `s` in `[0, dt]`.
    pub fn voltage_at(&self, s: F) -> F {
        match self.clamp_from {
            Some(c) if s >= c => self.clamp_v,
            _ => self.free(s),
        }
    }

    pub fn v_end(&self) -> F {
        self.voltage_at(self.dt)
    }

    /// Integral of the free exponential over `[a, b]`.
    fn free_integral(&self, a: F, b: F) -> F {
        let ea = (-a / self.tau).exp();
        let eb = (-b / self.tau).exp();
        self.v_eq * (b - a) + (self.v0 - self.v_eq) * self.tau * (ea - eb)
    }

    /// `(integral of v, clamped duration)` over offsets `[a, b]`.
    fn integrals(&self, a: F, b: F) -> (F, F) {
        match self.clamp_from {
            Some(c) if c < b => {
                let split = c.max(a);
                let free = if split > a { self.free_integral(a, split) } else { F::zero() };
                let clamped = b - split;
                (free + self.clamp_v * clamped, clamped)
            }
            _ => (self.free_integral(a, b), F::zero()),
        }
    }

    /// Current the clamp sources while holding the node at its threshold.
    fn clamp_current(&self) -> F {
        (self.g_dn * self.clamp_v - self.g_up * (self.vdd - self.clamp_v)).max(F::zero())
    }
}

/// Simulated capacitor voltage over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrace<F> {
    segments: Vec<Segment<F>>,
    events: Vec<F>,
    horizon: F,
    v0: F,
}

/// A sampled point of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint<F> {
    pub t: F,
    pub v_cap: F,
    pub vdd: F,
}

impl<F: Scalar> TransientTrace<F> {
    pub fn segments(&self) -> &[Segment<F>] {
        &self.segments
    }

    /// Input edge timestamps inside the horizon.
    pub fn events(&self) -> &[F] {
        &self.events
    }

    pub fn horizon(&self) -> F {
        self.horizon
    }

    pub fn v0(&self) -> F {
        self.v0
    }

    /// Segment boundary times (strictly increasing, ending at the horizon).
    pub fn boundary_times(&self) -> Vec<F> {
        let mut t: Vec<F> = self.segments.iter().map(|s| s.t0).collect();
        t.push(self.horizon);
        t
    }

    /// Capacitor voltage at each boundary time.
    pub fn boundary_voltages(&self) -> Vec<F> {
        let mut v: Vec<F> = self.segments.iter().map(|s| s.v0).collect();
        v.push(self.segments.last().map_or(self.v0, |s| s.v_end()));
        v
    }

    fn segment_index(&self, t: F) -> usize {
        let idx = self.segments.partition_point(|s| s.t0 <= t);
        idx.saturating_sub(1)
    }

    pub fn voltage_at(&self, t: F) -> F {
        let seg = &self.segments[self.segment_index(t)];
        seg.voltage_at((t - seg.t0).max(F::zero()).min(seg.dt))
    }

    /// Held supply value in effect at `t`.
    pub fn vdd_at(&self, t: F) -> F {
        self.segments[self.segment_index(t)].vdd
    }

    /// Segment boundaries merged with `uniform` evenly spaced samples.
    pub fn points(&self, uniform: usize) -> Vec<TracePoint<F>> {
        let mut times = self.boundary_times();
        if uniform > 1 {
            let step = self.horizon / F::from_usize_lossy(uniform - 1);
            times.extend((0..uniform).map(|i| (F::from_usize_lossy(i) * step).min(self.horizon)));
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup();
        }
        times
            .into_iter()
            .map(|t| TracePoint {
                t,
                v_cap: self.voltage_at(t),
                vdd: self.vdd_at(t),
            })
            .collect()
    }

    /// Only the `uniform` evenly spaced samples, for plotting long runs.
    pub fn uniform_points(&self, uniform: usize) -> Vec<TracePoint<F>> {
        let n = uniform.max(2);
        let step = self.horizon / F::from_usize_lossy(n - 1);
        (0..n)
            .map(|i| {
                let t = (F::from_usize_lossy(i) * step).min(self.horizon);
                TracePoint {
                    t,
                    v_cap: self.voltage_at(t),
                    vdd: self.vdd_at(t),
                }
            })
            .collect()
    }

    /// Integral of `v_cap`, supply energy, and extremes over `[a, b]`.
    fn window_stats(&self, a: F, b: F) -> WindowStats<F> {
        let mut st = WindowStats {
            v_integral: F::zero(),
            energy: F::zero(),
            vdd_integral: F::zero(),
            v_min: F::infinity(),
            v_max: F::neg_infinity(),
        };
        let start = self.segment_index(a);
        for seg in &self.segments[start..] {
            if seg.t0 >= b {
                break;
            }
            let lo = (a - seg.t0).max(F::zero());
            let hi = (b - seg.t0).min(seg.dt);
            if hi <= lo {
                continue;
            }
            let (vi, clamped) = seg.integrals(lo, hi);
            let span = hi - lo;
            st.v_integral += vi;
            st.vdd_integral += seg.vdd * span;
            // supply current: pull-up cells plus the clamp when it conducts
            let pull_up = seg.g_up * (seg.vdd * span - vi);
            st.energy += seg.vdd * (pull_up + seg.clamp_current() * clamped);
            // each piece is monotone, so extremes sit at the ends or the clamp point
            let mut probe = |s: F| {
                let v = seg.voltage_at(s);
                st.v_min = st.v_min.min(v);
                st.v_max = st.v_max.max(v);
            };
            probe(lo);
            probe(hi);
            if let Some(c) = seg.clamp_from {
                if c > lo && c < hi {
                    probe(c);
                }
            }
        }
        st
    }

    /// First time the voltage reaches `target` coming from `v0`.
    pub fn first_crossing(&self, target: F) -> Option<F> {
        if self.v0 == target {
            return Some(F::zero());
        }
        let falling = self.v0 > target;
        for seg in &self.segments {
            let end = seg.v_end();
            let reached = if falling { end <= target } else { end >= target };
            if !reached {
                continue;
            }
            if seg.v0 == target {
                return Some(seg.t0);
            }
            if let Some(c) = seg.clamp_from {
                let vc = seg.free(c);
                let before = if falling { vc <= target } else { vc >= target };
                if !before {
                    // only the clamp jump reaches the target
                    return Some(seg.t0 + c);
                }
            }
            let ratio = (target - seg.v_eq) / (seg.v0 - seg.v_eq);
            let s = if ratio > F::zero() {
                (-seg.tau * ratio.ln()).max(F::zero()).min(seg.dt)
            } else {
                seg.dt
            };
            return Some(seg.t0 + s);
        }
        None
    }
}

struct WindowStats<F> {
    v_integral: F,
    energy: F,
    vdd_integral: F,
    v_min: F,
    v_max: F,
}

/// Steady-state figures of merit of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceMetrics<F> {
    pub average_v: F,
    /// Mean of `v_cap / vdd` weighted by time.
    pub average_ratio: F,
    pub swing: F,
    pub charge_time: Option<F>,
    pub avg_power: F,
    /// Relative half-to-half drift of the window average (fraction of Vdd).
    pub drift: F,
    /// `false` when the window is too short or the drift exceeds 0.1%.
    pub steady: bool,
    pub window: (F, F),
}

/// Solves the capacitor voltage under the given inputs.
pub fn simulate_vac<F: Scalar>(
    cfg: &VacConfig<F>,
    inputs: &[PwmSignal<F>],
    w: &WeightVector,
    supply: &SupplyProfile<F>,
    horizon: F,
    v0: F,
) -> Result<TransientTrace<F>, TransientError> {
    cfg.validate()?;
    if inputs.len() != cfg.n {
        return Err(TransientError::InputCount {
            expected: cfg.n,
            got: inputs.len(),
        });
    }
    if w.len() != cfg.n {
        return Err(TransientError::InputCount {
            expected: cfg.n,
            got: w.len(),
        });
    }
    if w.bits() != cfg.bits {
        return Err(TransientError::Config(format!(
            "weights are {}-bit but the accumulator is {}-bit",
            w.bits(),
            cfg.bits
        )));
    }
    if !(horizon > F::zero()) || !horizon.is_finite() {
        return Err(TransientError::Horizon(horizon.as_f64()));
    }
    supply.check_positive(horizon)?;
    let thr = cfg.compensation_threshold;
    if thr > F::zero() && thr >= supply.nominal() {
        return Err(TransientError::Config(format!(
            "compensation threshold {} must be below nominal supply {}",
            thr,
            supply.nominal()
        )));
    }
    if w.weights().iter().all(|&x| x == 0) && thr == F::zero() {
        return Err(TransientError::NoEnabledCells);
    }
    let vmax = supply.max_value(horizon);
    if !(v0 >= F::zero() && v0 <= vmax) {
        return Err(TransientError::InitialVoltage {
            v0: v0.as_f64(),
            vmax: vmax.as_f64(),
        });
    }

    let g_unit = cfg.r_unit.recip();
    let cells = F::from_u32(cfg.cells_per_input()).unwrap();
    let weights: Vec<F> = w.weights().iter().map(|&x| F::from_u32(x).unwrap()).collect();
    let g_total = g_unit * cells * F::from_usize_lossy(cfg.n);
    let tau = cfg.c_out / g_total;
    // disabled cells always pull up
    let g_disabled = weights.iter().fold(F::zero(), |a, &wi| a + (cells - wi)) * g_unit;
    let hold = supply.hold_step();

    let mut segments = Vec::new();
    let mut events = Vec::new();
    let mut next_edge: Vec<Option<F>> = inputs.iter().map(|s| first_edge(s)).collect();
    let mut t = F::zero();
    let mut v = if thr > F::zero() { v0.max(thr) } else { v0 };
    let mut hold_index: u64 = 0;

    while t < horizon {
        let mut t_next = horizon;
        for e in next_edge.iter().flatten() {
            t_next = t_next.min(*e);
        }
        if let Some(h) = hold {
            // hold grid is index-based so long runs do not accumulate error
            while F::from_u64(hold_index).unwrap() * h <= t {
                hold_index += 1;
            }
            t_next = t_next.min(F::from_u64(hold_index).unwrap() * h);
        }
        if !(t_next > t) {
            // adjacent float values; nudge the offending edges forward
            for (s, e) in inputs.iter().zip(next_edge.iter_mut()) {
                if let Some(et) = *e {
                    if et <= t {
                        *e = s.next_edge_after(t);
                    }
                }
            }
            continue;
        }
        let dt = t_next - t;
        let mid = t + dt * F::lit(0.5);
        let vdd = supply.value_at(t);

        let mut g_dn = F::zero();
        let mut g_up = g_disabled;
        for (s, &wi) in inputs.iter().zip(&weights) {
            match s.state_at(mid) {
                Level::High => g_dn += wi * g_unit,
                Level::Low => g_up += wi * g_unit,
            }
        }
        let v_eq = vdd * g_up / (g_up + g_dn);
        let mut seg = Segment {
            t0: t,
            dt,
            v0: v,
            v_eq,
            tau,
            vdd,
            g_up,
            g_dn,
            clamp_from: None,
            clamp_v: thr,
        };
        if thr > F::zero() && v_eq < thr {
            if v <= thr {
                seg.clamp_from = Some(F::zero());
                seg.v0 = thr;
            } else {
                let s = tau * ((v - v_eq) / (thr - v_eq)).ln();
                if s < dt {
                    seg.clamp_from = Some(s.max(F::zero()));
                }
            }
        }
        v = seg.v_end();
        segments.push(seg);

        for (s, e) in inputs.iter().zip(next_edge.iter_mut()) {
            if let Some(et) = *e {
                if et <= t_next {
                    if et < horizon {
                        events.push(et);
                    }
                    *e = s.next_edge_after(t_next);
                }
            }
        }
        t = t_next;
    }
    events.dedup();

    Ok(TransientTrace {
        segments,
        events,
        horizon,
        v0,
    })
}

fn first_edge<F: Scalar>(s: &PwmSignal<F>) -> Option<F> {
    if s.is_constant() {
        return None;
    }
    // an edge exactly at t = 0 does not start a new segment
    s.next_edge_after(F::zero())
}

/// Derives steady-state metrics from the last quarter of the trace.
///
/// The window is snapped to whole periods of `reference_period` (the
/// slowest input or the supply period) when at least two fit.
pub fn trace_metrics<F: Scalar>(
    trace: &TransientTrace<F>,
    reference_period: Option<F>,
) -> TraceMetrics<F> {
    let h = trace.horizon();
    let quarter = h * F::lit(0.25);
    let (start, cycles, period) = match reference_period {
        Some(p) if p > F::zero() => {
            let c = (quarter / p).floor();
            if c >= F::lit(2.0) {
                (h - c * p, c.to_u64().unwrap(), Some(p))
            } else {
                (h - quarter, 0, None)
            }
        }
        _ => (h - quarter, 0, None),
    };
    let len = h - start;
    let st = trace.window_stats(start, h);
    let average_v = st.v_integral / len;
    let mean_vdd = st.vdd_integral / len;
    let average_ratio = ratio_integral(trace, start, h) / len;

    let (drift, enough) = match period {
        Some(p) => {
            let half = cycles / 2;
            let mid = start + F::from_u64(half).unwrap() * p;
            let a = trace.window_stats(start, mid);
            let b = trace.window_stats(mid, h);
            let avg_a = a.v_integral / (mid - start);
            let avg_b = b.v_integral / (h - mid);
            ((avg_a - avg_b).abs() / mean_vdd, true)
        }
        None => {
            let mid = start + len * F::lit(0.5);
            let a = trace.window_stats(start, mid);
            let b = trace.window_stats(mid, h);
            let d = (a.v_integral - b.v_integral).abs() / (len * F::lit(0.5)) / mean_vdd;
            // without whole cycles a periodic ripple looks like drift
            (d, reference_period.is_none())
        }
    };

    TraceMetrics {
        average_v,
        average_ratio,
        swing: st.v_max - st.v_min,
        charge_time: trace.first_crossing(average_v),
        avg_power: st.energy / len,
        drift,
        steady: enough && drift < F::lit(1e-3),
        window: (start, h),
    }
}

/// Integral of `v_cap / vdd` with vdd held per segment.
fn ratio_integral<F: Scalar>(trace: &TransientTrace<F>, a: F, b: F) -> F {
    let mut acc = F::zero();
    let start = trace.segment_index(a);
    for seg in &trace.segments[start..] {
        if seg.t0 >= b {
            break;
        }
        let lo = (a - seg.t0).max(F::zero());
        let hi = (b - seg.t0).min(seg.dt);
        if hi > lo {
            acc += seg.integrals(lo, hi).0 / seg.vdd;
        }
    }
    acc
}

/// Horizon long enough for 20 slowest-input periods, 30 time constants and
/// four supply periods, whichever is longest.
pub fn default_horizon<F: Scalar>(
    cfg: &VacConfig<F>,
    inputs: &[PwmSignal<F>],
    supply: &SupplyProfile<F>,
) -> F {
    let mut h = cfg.time_constant() * F::lit(30.0);
    if let Some(p) = slowest_period(inputs) {
        h = h.max(p * F::lit(20.0));
    }
    if let Some(p) = supply.period() {
        h = h.max(p * F::lit(4.0));
    }
    h
}

/// Longest period among the switching inputs.
pub fn slowest_period<F: Scalar>(inputs: &[PwmSignal<F>]) -> Option<F> {
    inputs
        .iter()
        .filter(|s| !s.is_constant())
        .map(|s| s.period())
        .fold(None, |acc: Option<F>, p| Some(acc.map_or(p, |a| a.max(p))))
}

/// Which stimulus parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Vdd,
    Frequency,
}

/// Inputs shared by every point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus<F> {
    pub duties: Vec<F>,
    pub weights: WeightVector,
    pub frequency: F,
    pub vdd: F,
    /// Initial capacitor voltage as a fraction of Vdd.
    pub v0_fraction: F,
    /// Explicit horizon; `None` uses [`default_horizon`].
    pub horizon: Option<F>,
}

impl<F: Scalar> Stimulus<F> {
    pub fn signals(&self) -> Result<Vec<PwmSignal<F>>, TransientError> {
        self.duties
            .iter()
            .map(|&d| PwmSignal::new(self.frequency, d).map_err(TransientError::from))
            .collect()
    }

    pub fn with_axis(&self, axis: SweepAxis, value: F) -> Self {
        let mut s = self.clone();
        match axis {
            SweepAxis::Vdd => s.vdd = value,
            SweepAxis::Frequency => s.frequency = value,
        }
        s
    }

    /// Simulates this stimulus on a constant supply and returns the trace
    /// together with its metrics.
    pub fn run(&self, cfg: &VacConfig<F>) -> Result<(TransientTrace<F>, TraceMetrics<F>), TransientError> {
        let inputs = self.signals()?;
        let supply = SupplyProfile::constant(self.vdd)?;
        let horizon = self
            .horizon
            .unwrap_or_else(|| default_horizon(cfg, &inputs, &supply));
        let trace = simulate_vac(cfg, &inputs, &self.weights, &supply, horizon, self.vdd * self.v0_fraction)?;
        let metrics = trace_metrics(&trace, slowest_period(&inputs));
        Ok((trace, metrics))
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<F> {
    pub value: F,
    pub vdd: F,
    pub result: Result<TraceMetrics<F>, TransientError>,
}

impl<F: Scalar> SweepPoint<F> {
    /// `average_v / vdd`, when the point succeeded.
    pub fn ratio(&self) -> Option<F> {
        self.result.as_ref().ok().map(|m| m.average_v / self.vdd)
    }
}

/// Evaluates a single sweep point; failures are captured, not propagated.
pub fn sweep_point<F: Scalar>(
    cfg: &VacConfig<F>,
    stimulus: &Stimulus<F>,
    axis: SweepAxis,
    value: F,
) -> SweepPoint<F> {
    let s = stimulus.with_axis(axis, value);
    SweepPoint {
        value,
        vdd: s.vdd,
        result: s.run(cfg).map(|(_, m)| m),
    }
}

pub fn sweep<F: Scalar>(
    cfg: &VacConfig<F>,
    stimulus: &Stimulus<F>,
    axis: SweepAxis,
    grid: &[F],
) -> Result<Vec<SweepPoint<F>>, TransientError> {
    check_grid(grid)?;
    Ok(grid
        .iter()
        .map(|&g| sweep_point(cfg, stimulus, axis, g))
        .collect())
}

pub fn check_grid<F: Scalar>(grid: &[F]) -> Result<(), TransientError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TransientError::Grid);
    }
    Ok(())
}
