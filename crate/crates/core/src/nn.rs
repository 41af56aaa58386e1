//! Fully connected networks built from PWM multiply-accumulate stages.
//!
//! Each layer computes `f(W x / N)`: in integer mode `W` holds signed integer
//! weights bounded by `max_weight` and `N = n_in * (2^k - 1)` is the
//! accumulator normalizer; in floating-point mode `N = 1` and the scale lives
//! in the initialization. Training is mini-batch gradient descent on the mean
//! squared error against one-hot targets. Integer mode rescales each
//! floating-point update by `N`, rounds it, and clamps the result.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::converter::ConverterModel;
use crate::error::NnError;
use crate::mnist::Dataset;
use crate::scalar::Scalar;

/// Offset of the stage model at zero input, as a fraction.
pub const STAGE_OFFSET: f64 = 0.1344;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Relu,
    CapRelu,
    OftRelu,
    PwmPercept,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Relu,
        ActivationKind::CapRelu,
        ActivationKind::OftRelu,
        ActivationKind::PwmPercept,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::CapRelu => "cap-relu",
            ActivationKind::OftRelu => "oft-relu",
            ActivationKind::PwmPercept => "pwm-percept",
        }
    }

    /// Points where the function or its slope jumps.
    pub fn breakpoints(self) -> Vec<f64> {
        match self {
            ActivationKind::Relu => vec![0.0],
            ActivationKind::CapRelu => vec![0.0, 1.0],
            ActivationKind::OftRelu => vec![0.0, 1.0 - STAGE_OFFSET],
            ActivationKind::PwmPercept => vec![0.0, pwm_cap_entry(), 1.0],
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown activation '{s}' (relu, cap-relu, oft-relu, pwm-percept)"))
    }
}

/// Input at which the stage cubic reaches its 98% cap.
fn pwm_cap_entry() -> f64 {
    let m = ConverterModel::<f64>::compensated();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if m.cubic(mid) < m.output_cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Activation functions share one converter model per scalar type.
#[derive(Debug, Clone, Copy)]
pub struct Activation<F> {
    pub kind: ActivationKind,
    stage: ConverterModel<F>,
}

impl<F: Scalar> Activation<F> {
    pub fn new(kind: ActivationKind) -> Self {
        Self {
            kind,
            stage: ConverterModel::compensated(),
        }
    }

    pub fn eval(&self, x: F) -> F {
        let zero = F::zero();
        let one = F::one();
        match self.kind {
            ActivationKind::Relu => x.max(zero),
            ActivationKind::CapRelu => x.max(zero).min(one),
            ActivationKind::OftRelu => {
                if x < zero {
                    zero
                } else {
                    (x + F::lit(STAGE_OFFSET)).min(one)
                }
            }
            ActivationKind::PwmPercept => {
                if x < zero {
                    zero
                } else {
                    self.stage.stage_map(x.min(one))
                }
            }
        }
    }

    /// Right-hand derivative; zero in clamped regions.
    pub fn deriv(&self, x: F) -> F {
        let zero = F::zero();
        let one = F::one();
        match self.kind {
            ActivationKind::Relu => {
                if x >= zero {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::CapRelu => {
                if x >= zero && x < one {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::OftRelu => {
                if x >= zero && x < F::lit(1.0 - STAGE_OFFSET) {
                    one
                } else {
                    zero
                }
            }
            ActivationKind::PwmPercept => {
                if x >= zero && x < one {
                    self.stage.stage_map_slope(x)
                } else {
                    zero
                }
            }
        }
    }
}

pub fn activation<F: Scalar>(kind: ActivationKind, x: F) -> F {
    Activation::new(kind).eval(x)
}

pub fn activation_deriv<F: Scalar>(kind: ActivationKind, x: F) -> F {
    Activation::new(kind).deriv(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    Fp,
    Integer,
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Fp => "fp",
            WeightMode::Integer => "integer",
        })
    }
}

impl FromStr for WeightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fp" => Ok(WeightMode::Fp),
            "integer" => Ok(WeightMode::Integer),
            _ => Err(format!("unknown weight mode '{s}' (fp, integer)")),
        }
    }
}

/// Topology and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    pub activation: ActivationKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub mode: WeightMode,
    /// Weight bound in integer mode (`2^k - 1`).
    pub max_weight: u32,
    /// Integer mode: initial weights uniform in `[-initial_weight, initial_weight]`.
    pub initial_weight: u32,
    /// FP mode: initial weights uniform in `±init_scale / sqrt(n_in)`.
    pub init_scale: f64,
    /// The accumulator has no bias path; must stay `false`.
    pub bias: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![784, 10],
            activation: ActivationKind::CapRelu,
            learning_rate: 0.01,
            epochs: 30,
            batch: 32,
            seed: 0,
            mode: WeightMode::Fp,
            max_weight: 255,
            initial_weight: 3,
            init_scale: 1.0,
            bias: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(NnError::Topology);
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(NnError::LearningRate(self.learning_rate));
        }
        if self.batch == 0 {
            return Err(NnError::Config("batch must be at least 1".into()));
        }
        if self.bias {
            return Err(NnError::Config(
                "bias terms are not available: the accumulator has no bias path".into(),
            ));
        }
        if self.mode == WeightMode::Integer {
            if self.max_weight == 0 {
                return Err(NnError::Config("max_weight must be at least 1".into()));
            }
            if self.initial_weight > self.max_weight {
                return Err(NnError::Config(format!(
                    "initial_weight {} exceeds max_weight {}",
                    self.initial_weight, self.max_weight
                )));
            }
        }
        Ok(())
    }

    /// Bits `k` with `2^k - 1 >= max_weight`.
    pub fn weight_bits(&self) -> u32 {
        32 - self.max_weight.leading_zeros()
    }

    /// `"784/300/10"`.
    pub fn topology(&self) -> String {
        self.layer_sizes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("/")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    /// Rows are outputs, columns inputs.
    pub weights: Array2<F>,
    /// Divisor applied to `W x`; 1 in FP mode.
    pub normalizer: F,
}

impl<F: Scalar> Layer<F> {
    pub fn n_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.nrows()
    }

    fn pre_activation(&self, x: ArrayView2<F>) -> Array2<F> {
        let z = x.dot(&self.weights.t());
        if self.normalizer == F::one() {
            z
        } else {
            z / self.normalizer
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    pub layers: Vec<Layer<F>>,
    pub activation: ActivationKind,
    pub mode: WeightMode,
    pub max_weight: u32,
}

impl<F: Scalar> Network<F> {
    /// Seeded random initialization from `cfg`.
    pub fn init(cfg: &NetworkConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let unit = (1u64 << cfg.weight_bits()) - 1;
        let layers = cfg
            .layer_sizes
            .windows(2)
            .map(|pair| {
                let (n_in, n_out) = (pair[0], pair[1]);
                match cfg.mode {
                    WeightMode::Fp => {
                        let a = cfg.init_scale / (n_in as f64).sqrt();
                        let w = Array2::from_shape_fn((n_out, n_in), |_| {
                            F::lit(if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 })
                        });
                        Layer {
                            weights: w,
                            normalizer: F::one(),
                        }
                    }
                    WeightMode::Integer => {
                        let m = cfg.initial_weight as i64;
                        let w = Array2::from_shape_fn((n_out, n_in), |_| {
                            F::from_i64(rng.gen_range(-m..=m)).unwrap()
                        });
                        Layer {
                            weights: w,
                            normalizer: F::from_u64(n_in as u64 * unit).unwrap(),
                        }
                    }
                }
            })
            .collect();
        Ok(Self {
            layers,
            activation: cfg.activation,
            mode: cfg.mode,
            max_weight: cfg.max_weight,
        })
    }

    /// Builds a network from explicit weight matrices.
    pub fn from_layers(
        layers: Vec<Layer<F>>,
        activation: ActivationKind,
        mode: WeightMode,
        max_weight: u32,
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Topology);
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(NnError::Dimension {
                    expected: pair[0].n_out(),
                    got: pair[1].n_in(),
                });
            }
        }
        Ok(Self {
            layers,
            activation,
            mode,
            max_weight,
        })
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out()
    }

    pub fn forward(&self, input: ArrayView1<F>) -> Result<Array1<F>, NnError> {
        let x = input.insert_axis(Axis(0));
        Ok(self.forward_batch(x)?.index_axis_move(Axis(0), 0))
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward_batch(&self, x: ArrayView2<F>) -> Result<Array2<F>, NnError> {
        if x.ncols() != self.n_in() {
            return Err(NnError::Dimension {
                expected: self.n_in(),
                got: x.ncols(),
            });
        }
        let act = Activation::new(self.activation);
        let mut a = x.to_owned();
        for layer in &self.layers {
            a = layer.pre_activation(a.view());
            a.mapv_inplace(|z| act.eval(z));
        }
        Ok(a)
    }

    /// Predicted class of each row: argmax, ties to the lowest index.
    pub fn predict(&self, x: ArrayView2<F>) -> Result<Vec<usize>, NnError> {
        let out = self.forward_batch(x)?;
        Ok(out.rows().into_iter().map(argmax).collect())
    }

    /// Mean loss and its gradient with respect to each stored weight matrix.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<F>,
        targets: ArrayView2<F>,
    ) -> Result<(F, Vec<Array2<F>>), NnError> {
        let (loss, grads) = self.backprop(x, targets)?;
        let grads = grads
            .into_iter()
            .zip(&self.layers)
            .map(|(g, l)| g / l.normalizer)
            .collect();
        Ok((loss, grads))
    }

    /// Loss and gradients with respect to the effective weights `W / N`.
    fn backprop(
        &self,
        x: ArrayView2<F>,
        targets: ArrayView2<F>,
    ) -> Result<(F, Vec<Array2<F>>), NnError> {
        if x.ncols() != self.n_in() {
            return Err(NnError::Dimension {
                expected: self.n_in(),
                got: x.ncols(),
            });
        }
        if targets.ncols() != self.n_out() || targets.nrows() != x.nrows() {
            return Err(NnError::Dimension {
                expected: self.n_out(),
                got: targets.ncols(),
            });
        }
        let act = Activation::new(self.activation);
        let batch = F::from_usize_lossy(x.nrows());

        let mut inputs: Vec<Array2<F>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Array2<F>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for layer in &self.layers {
            let z = layer.pre_activation(a.view());
            let next = z.mapv(|v| act.eval(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }

        let err = &a - &targets;
        let loss = err.mapv(|e| e * e).sum() * F::lit(0.5) / batch;
        let mut delta = err * &pre.last().unwrap().mapv(|z| act.deriv(z)) / batch;

        let mut grads = vec![Array2::zeros((0, 0)); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            grads[l] = delta.t().dot(&inputs[l]);
            if l > 0 {
                let layer = &self.layers[l];
                let back = delta.dot(&layer.weights) / layer.normalizer;
                delta = back * &pre[l - 1].mapv(|z| act.deriv(z));
            }
        }
        Ok((loss, grads))
    }

    /// Applies one gradient step; integer mode rounds and clamps.
    fn apply_update(&mut self, grads: &[Array2<F>], lr: F) {
        let max = F::from_u32(self.max_weight).unwrap();
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            match self.mode {
                WeightMode::Fp => layer.weights.scaled_add(-lr, g),
                WeightMode::Integer => {
                    let n = layer.normalizer;
                    ndarray::Zip::from(&mut layer.weights)
                        .and(g)
                        .for_each(|w, &gi| {
                            *w = integer_step(*w, -lr * gi, n, max);
                        });
                    assert!(
                        layer.weights.iter().all(|w| w.abs() <= max),
                        "integer weight escaped ±{}",
                        self.max_weight
                    );
                }
            }
        }
    }

    pub fn weight_stats(&self) -> Vec<WeightStats> {
        self.layers
            .iter()
            .map(|l| {
                let range = match self.mode {
                    WeightMode::Integer => Some(self.max_weight as f64),
                    WeightMode::Fp => None,
                };
                WeightStats::from_weights(l.weights.iter().map(|w| w.as_f64()), range)
            })
            .collect()
    }
}

/// New integer weight after a floating-point update `delta_fp` on `w / n`.
pub fn integer_step<F: Scalar>(w: F, delta_fp: F, normalizer: F, max_weight: F) -> F {
    let delta_int = (delta_fp * normalizer).round();
    (w + delta_int).max(-max_weight).min(max_weight)
}

pub fn argmax<F: Scalar>(row: ArrayView1<F>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightStats {
    pub min: f64,
    pub max: f64,
    pub mean_abs: f64,
    /// `(lower bin edge, count)` over 16 equal bins.
    pub histogram: Vec<(f64, usize)>,
}

impl WeightStats {
    const BINS: usize = 16;

    fn from_weights(ws: impl Iterator<Item = f64> + Clone, range: Option<f64>) -> Self {
        let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for w in ws.clone() {
            min = min.min(w);
            max = max.max(w);
            sum += w.abs();
            n += 1;
        }
        let (lo, hi) = match range {
            Some(r) => (-r, r),
            None => (min, max),
        };
        let width = ((hi - lo) / Self::BINS as f64).max(f64::MIN_POSITIVE);
        let mut counts = vec![0usize; Self::BINS];
        for w in ws {
            let b = (((w - lo) / width) as usize).min(Self::BINS - 1);
            counts[b] += 1;
        }
        Self {
            min,
            max,
            mean_abs: if n > 0 { sum / n as f64 } else { 0.0 },
            histogram: counts
                .into_iter()
                .enumerate()
                .map(|(i, c)| (lo + i as f64 * width, c))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_error: f64,
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub test_error: f64,
    pub train_error: f64,
    pub per_epoch: Vec<EpochStats>,
    pub weight_stats: Vec<WeightStats>,
}

/// Misclassification rate in percent.
pub fn evaluate<F: Scalar>(net: &Network<F>, ds: &Dataset<F>) -> Result<f64, NnError> {
    if ds.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut wrong = 0usize;
    let chunk = 1000;
    for start in (0..ds.len()).step_by(chunk) {
        let end = (start + chunk).min(ds.len());
        let x = ds.images.slice(ndarray::s![start..end, ..]);
        let pred = net.predict(x)?;
        wrong += pred
            .iter()
            .zip(&ds.labels[start..end])
            .filter(|(p, &l)| **p != l as usize)
            .count();
    }
    Ok(100.0 * wrong as f64 / ds.len() as f64)
}

pub fn one_hot<F: Scalar>(labels: &[u8], classes: usize) -> Array2<F> {
    let mut t = Array2::zeros((labels.len(), classes));
    for (r, &l) in labels.iter().enumerate() {
        t[[r, l as usize]] = F::one();
    }
    t
}

/// Trains `net` in place, evaluating after every epoch.
pub fn train<F: Scalar>(
    net: &mut Network<F>,
    train_set: &Dataset<F>,
    test_set: &Dataset<F>,
    cfg: &NetworkConfig,
) -> Result<TrainReport, NnError> {
    train_with(net, train_set, test_set, cfg, |_| {})
}

/// [`train`] with a per-epoch callback.
pub fn train_with<F: Scalar>(
    net: &mut Network<F>,
    train_set: &Dataset<F>,
    test_set: &Dataset<F>,
    cfg: &NetworkConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport, NnError> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if train_set.input_len() != net.n_in() {
        return Err(NnError::Dimension {
            expected: net.n_in(),
            got: train_set.input_len(),
        });
    }
    let classes = net.n_out();
    for ds in [train_set, test_set] {
        if let Some(&l) = ds.labels.iter().find(|&&l| l as usize >= classes) {
            return Err(NnError::Dimension {
                expected: classes,
                got: l as usize + 1,
            });
        }
    }
    let lr = F::lit(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut per_epoch = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (step, idx) in order.chunks(cfg.batch).enumerate() {
            let x = train_set.images.select(Axis(0), idx);
            let labels: Vec<u8> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let t = one_hot::<F>(&labels, classes);
            let (loss, grads) = net.backprop(x.view(), t.view())?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(NnError::Diverged { epoch, step });
            }
            net.apply_update(&grads, lr);
            loss_sum += loss.as_f64();
            steps += 1;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / steps.max(1) as f64,
            train_error: evaluate(net, train_set)?,
            test_error: evaluate(net, test_set)?,
        };
        on_epoch(&stats);
        per_epoch.push(stats);
    }

    let (train_error, test_error) = match per_epoch.last() {
        Some(s) => (s.train_error, s.test_error),
        None => (evaluate(net, train_set)?, evaluate(net, test_set)?),
    };
    Ok(TrainReport {
        test_error,
        train_error,
        per_epoch,
        weight_stats: net.weight_stats(),
    })
}

/// Initializes a network from `cfg` and trains it.
pub fn train_new<F: Scalar>(
    cfg: &NetworkConfig,
    train_set: &Dataset<F>,
    test_set: &Dataset<F>,
) -> Result<(Network<F>, TrainReport), NnError> {
    let mut net = Network::init(cfg)?;
    let report = train(&mut net, train_set, test_set, cfg)?;
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnist::Split;
    use rand::Rng;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn activation_values() {
        assert_eq!(activation(ActivationKind::Relu, -0.3), 0.0);
        assert_eq!(activation(ActivationKind::CapRelu, 2.0), 1.0);
        assert!((activation::<f64>(ActivationKind::OftRelu, 0.5) - 0.6344).abs() < 1e-12);
        assert_eq!(activation(ActivationKind::OftRelu, 0.9), 1.0);
        assert!((activation::<f64>(ActivationKind::PwmPercept, 0.0) - 0.1344).abs() < 1e-12);
        assert!((activation::<f64>(ActivationKind::PwmPercept, 0.5) - 0.4).abs() < 5e-4);
        assert_eq!(activation(ActivationKind::PwmPercept, -0.1), 0.0);
    }

    #[test]
    fn derivative_values() {
        assert_eq!(activation_deriv(ActivationKind::Relu, 1.0), 1.0);
        assert_eq!(activation_deriv(ActivationKind::Relu, -1.0), 0.0);
        assert_eq!(activation_deriv(ActivationKind::Relu, 0.0), 1.0);
        assert_eq!(activation_deriv(ActivationKind::CapRelu, 1.5), 0.0);
        assert_eq!(activation_deriv(ActivationKind::OftRelu, 0.87), 0.0);
        assert!((activation_deriv::<f64>(ActivationKind::PwmPercept, 0.5) - 0.801225).abs() < 1e-12);
        assert_eq!(activation_deriv(ActivationKind::PwmPercept, 0.95), 0.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in ActivationKind::ALL {
            let bps = kind.breakpoints();
            let mut checked = 0;
            while checked < 100 {
                let x: f64 = rng.gen_range(-0.5..1.5);
                if bps.iter().any(|b| (x - b).abs() < 1e-4) {
                    continue;
                }
                let h = 1e-6;
                let fd = (activation(kind, x + h) - activation(kind, x - h)) / (2.0 * h);
                assert!((fd - activation_deriv(kind, x)).abs() <= 1e-5, "{kind} at {x}");
                checked += 1;
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
        }
        assert!("sigmoid".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn integer_forward_matches_weighted_sum() {
        let layer = Layer {
            weights: array![[7.0, 7.0, 7.0]],
            normalizer: 21.0,
        };
        let net = Network::from_layers(vec![layer], ActivationKind::PwmPercept, WeightMode::Integer, 7).unwrap();
        let y = net.forward(array![0.7, 0.8, 0.9].view()).unwrap();
        let want = ConverterModel::<f64>::compensated().stage_map(0.8);
        assert!((y[0] - want).abs() < 1e-12);
        assert!((y[0] - 0.766).abs() < 1e-3);
    }

    #[test]
    fn normalizer_cancels_for_full_weight() {
        let layer = Layer {
            weights: array![[7.0]],
            normalizer: 7.0,
        };
        let net = Network::from_layers(vec![layer], ActivationKind::CapRelu, WeightMode::Integer, 7).unwrap();
        assert_eq!(net.forward(array![0.5].view()).unwrap()[0], 0.5);
    }

    #[test]
    fn zero_weights_give_zero_relu_output() {
        let cfg = NetworkConfig {
            layer_sizes: vec![5, 4, 3],
            activation: ActivationKind::Relu,
            init_scale: 0.0,
            ..Default::default()
        };
        let net = Network::<f64>::init(&cfg).unwrap();
        let y = net.forward(Array1::from_elem(5, 0.7).view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(net.forward(Array1::from_elem(4, 0.7).view()).is_err());
    }

    #[test]
    fn small_update_starves() {
        // 0.0004 * 21 = 0.0084 rounds to zero
        assert_eq!(integer_step(3.0, 0.0004, 21.0, 7.0), 3.0);
        assert_eq!(integer_step(3.0, 0.5 / 21.0 * 0.999, 21.0, 7.0), 3.0);
        assert_eq!(integer_step(3.0, 0.6 / 21.0, 21.0, 7.0), 4.0);
    }

    #[test]
    fn integer_update_clamps() {
        assert_eq!(integer_step(6.0, 3.0 / 21.0, 21.0, 7.0), 7.0);
        assert_eq!(integer_step(-6.0, -3.0 / 21.0, 21.0, 7.0), -7.0);
    }

    #[test]
    fn config_validation() {
        let ok = NetworkConfig::default();
        assert!(ok.validate().is_ok());
        assert!(NetworkConfig { layer_sizes: vec![784], ..ok.clone() }.validate().is_err());
        assert!(NetworkConfig { learning_rate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(NetworkConfig { bias: true, ..ok.clone() }.validate().is_err());
        assert!(NetworkConfig {
            mode: WeightMode::Integer,
            initial_weight: 300,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert_eq!(NetworkConfig { max_weight: 63, ..ok.clone() }.weight_bits(), 6);
        assert_eq!(NetworkConfig { max_weight: 255, ..ok }.weight_bits(), 8);
    }

    #[test]
    fn integer_init_respects_bounds() {
        let cfg = NetworkConfig {
            layer_sizes: vec![20, 6, 3],
            mode: WeightMode::Integer,
            max_weight: 63,
            initial_weight: 3,
            ..Default::default()
        };
        let net = Network::<f32>::init(&cfg).unwrap();
        for l in &net.layers {
            assert!(l.weights.iter().all(|w| w.fract() == 0.0 && w.abs() <= 3.0));
        }
        assert_eq!(net.layers[0].normalizer, 20.0 * 63.0);
        assert_eq!(net.layers[1].normalizer, 6.0 * 63.0);
    }

    fn toy_data(n: usize, seed: u64) -> Dataset<f64> {
        // two separable blobs over 4 pixels
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Array2::zeros((n, 4));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = (i % 2) as u8;
            for j in 0..4 {
                let hot = (j < 2) == (c == 0);
                images[[i, j]] = if hot { rng.gen_range(0.6..1.0) } else { rng.gen_range(0.0..0.3) };
            }
            labels.push(c);
        }
        Dataset::new(images, labels, Split::Train).unwrap()
    }

    #[test]
    fn learns_separable_toy_problem() {
        let data = toy_data(200, 1);
        let test = toy_data(100, 2);
        for mode in [WeightMode::Fp, WeightMode::Integer] {
            let cfg = NetworkConfig {
                layer_sizes: vec![4, 2],
                activation: ActivationKind::CapRelu,
                learning_rate: 0.1,
                epochs: 20,
                batch: 8,
                seed: 5,
                mode,
                max_weight: 63,
                initial_weight: 3,
                ..Default::default()
            };
            let (_, report) = train_new(&cfg, &data, &test).unwrap();
            assert!(report.test_error < 5.0, "{mode}: {report:?}");
            assert_eq!(report.per_epoch.len(), 20);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in ActivationKind::ALL {
            let cfg = NetworkConfig {
                layer_sizes: vec![2, 3, 2],
                activation: kind,
                seed: 9,
                ..Default::default()
            };
            let mut net = Network::<f64>::init(&cfg).unwrap();
            net.layers[0].weights = array![[0.9, 0.2], [0.3, 0.5], [0.4, -0.1]];
            net.layers[1].weights = array![[0.6, -0.2, 0.3], [0.1, 0.7, 0.2]];
            let x = array![[0.3, 0.8], [0.6, 0.2], [0.9, 0.5]];
            let t = one_hot::<f64>(&[0, 1, 1], 2);
            let (_, grads) = net.loss_and_gradients(x.view(), t.view()).unwrap();
            let h = 1e-6;
            for l in 0..2 {
                for idx in ndarray::indices_of(&net.layers[l].weights) {
                    let mut plus = net.clone();
                    plus.layers[l].weights[idx] += h;
                    let mut minus = net.clone();
                    minus.layers[l].weights[idx] -= h;
                    let lp = plus.loss_and_gradients(x.view(), t.view()).unwrap().0;
                    let lm = minus.loss_and_gradients(x.view(), t.view()).unwrap().0;
                    let fd = (lp - lm) / (2.0 * h);
                    assert!((fd - grads[l][idx]).abs() < 1e-6, "{kind} layer {l} {idx:?}: {fd} vs {}", grads[l][idx]);
                }
            }
        }
    }

    #[test]
    fn integer_gradients_account_for_normalizer() {
        let layer = Layer {
            weights: array![[3.0, -2.0, 5.0]],
            normalizer: 21.0,
        };
        let net = Network::from_layers(vec![layer], ActivationKind::Relu, WeightMode::Integer, 7).unwrap();
        let x = array![[0.9, 0.4, 0.7]];
        let t = array![[1.0]];
        let (_, g) = net.loss_and_gradients(x.view(), t.view()).unwrap();
        let z: f64 = (3.0 * 0.9 - 2.0 * 0.4 + 5.0 * 0.7) / 21.0;
        for (j, xi) in [0.9, 0.4, 0.7].into_iter().enumerate() {
            assert!((g[0][[0, j]] - (z - 1.0) * xi / 21.0).abs() < 1e-15);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(64, 5);
        let cfg = NetworkConfig {
            layer_sizes: vec![4, 3, 2],
            activation: ActivationKind::PwmPercept,
            learning_rate: 0.2,
            epochs: 3,
            batch: 5,
            seed: 42,
            ..Default::default()
        };
        let a = train_new(&cfg, &data, &data).unwrap();
        let b = train_new(&cfg, &data, &data).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(format!("{:?}", a.1), format!("{:?}", b.1));
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = toy_data(16, 5);
        data.images[[9, 2]] = f64::NAN;
        let cfg = NetworkConfig {
            layer_sizes: vec![4, 2],
            epochs: 2,
            batch: 4,
            ..Default::default()
        };
        assert!(matches!(
            train_new(&cfg, &data, &data),
            Err(NnError::Diverged { epoch: 1, .. })
        ));
    }

    #[test]
    fn evaluate_edge_cases() {
        let layer = Layer {
            weights: Array2::eye(2),
            normalizer: 1.0,
        };
        let net = Network::from_layers(vec![layer], ActivationKind::Relu, WeightMode::Fp, 0).unwrap();
        let images = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        let ds = Dataset::new(images, vec![0, 1, 0], Split::Test).unwrap();
        // the tie on the last row resolves to class 0
        assert_eq!(evaluate(&net, &ds).unwrap(), 0.0);
        let empty = Dataset::new(Array2::<f64>::zeros((0, 2)), vec![], Split::Test).unwrap();
        assert_eq!(evaluate(&net, &empty), Err(NnError::EmptyDataset));
    }

    #[test]
    fn constant_output_is_chance_level() {
        let layer = Layer {
            weights: Array2::zeros((10, 3)),
            normalizer: 1.0,
        };
        let net = Network::from_layers(vec![layer], ActivationKind::CapRelu, WeightMode::Fp, 0).unwrap();
        let labels: Vec<u8> = (0..1000).map(|i| (i % 10) as u8).collect();
        let ds = Dataset::new(Array2::from_elem((1000, 3), 0.5), labels, Split::Test).unwrap();
        assert!((evaluate(&net, &ds).unwrap() - 90.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn activations_monotone_and_bounded(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for kind in ActivationKind::ALL {
                prop_assert!(activation(kind, lo) <= activation(kind, hi) + 1e-15);
                if kind != ActivationKind::Relu {
                    let y = activation(kind, hi);
                    prop_assert!((0.0..=1.0).contains(&y));
                }
            }
            if hi >= 0.0 {
                prop_assert!(activation(ActivationKind::PwmPercept, hi) >= 0.1344 - 1e-12);
            }
        }

        #[test]
        fn output_scaling_keeps_relu_predictions(scale in 0.1f64..10.0, seed in 0u64..50) {
            let cfg = NetworkConfig {
                layer_sizes: vec![6, 5, 4],
                activation: ActivationKind::Relu,
                seed,
                ..Default::default()
            };
            let net = Network::<f64>::init(&cfg).unwrap();
            let mut scaled = net.clone();
            scaled.layers[1].weights *= scale;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((20, 6), |_| rng.gen_range(0.0..1.0));
            prop_assert_eq!(net.predict(x.view()).unwrap(), scaled.predict(x.view()).unwrap());
        }
    }
}
