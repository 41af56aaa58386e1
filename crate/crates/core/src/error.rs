use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("frequency must be positive and finite, got {0}")]
    Frequency(f64),
    #[error("duty cycle must lie in [0, 1], got {0}")]
    Duty(f64),
    #[error("phase {phase} outside [0, {period})")]
    Phase { phase: f64, period: f64 },
    #[error("supply drops to {0} V; it must stay positive")]
    NonPositiveSupply(f64),
    #[error("invalid supply profile: {0}")]
    Profile(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("at least one input is required")]
    NoInputs,
    #[error("{duties} duty cycles for {weights} weights")]
    LengthMismatch { duties: usize, weights: usize },
    #[error("weight {weight} exceeds {max} for {bits}-bit weights")]
    WeightRange { weight: u32, max: u32, bits: u32 },
    #[error("weight bit-width must be between 1 and 31, got {0}")]
    Bits(u32),
    #[error("duty cycle must lie in [0, 1], got {0}")]
    Duty(f64),
    #[error("supply must be positive, got {0}")]
    Supply(f64),
    #[error("resistances must be positive")]
    Resistance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransientError {
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("accumulator has {expected} inputs but {got} signals were given")]
    InputCount { expected: usize, got: usize },
    #[error("no enabled cells and no clamp: capacitor node is floating")]
    NoEnabledCells,
    #[error("invalid accumulator configuration: {0}")]
    Config(String),
    #[error("initial voltage {v0} outside [0, {vmax}]")]
    InitialVoltage { v0: f64, vmax: f64 },
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("sweep grid must be non-empty and ascending")]
    Grid,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConverterError {
    #[error("need at least 4 distinct x values for a cubic fit, got {0}")]
    RankDeficient(usize),
    #[error("{xs} x values for {ys} y values")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("operation requires a compensated converter model")]
    NotCompensated,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptronError {
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Transient(#[from] TransientError),
    #[error("ring oscillator stopped: capacitor at {v_cap:.4} V with Vdd {vdd:.4} V")]
    NoOscillation { v_cap: f64, vdd: f64 },
    #[error("chain depth must be at least 1")]
    Depth,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("network needs at least an input and an output layer")]
    Topology,
    #[error("expected input of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f64),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
}

#[derive(Debug, Error)]
pub enum MnistError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated, need {needed} bytes, have {have}")]
    Truncated {
        path: String,
        needed: usize,
        have: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {0} outside 0..=9")]
    Label(u8),
    #[error("cannot draw {requested} samples from {available}")]
    Subsample { requested: usize, available: usize },
}
