//! Behavioral and transient models of PWM-domain perceptrons: duty-cycle
//! inputs, a resistive voltage accumulator, a ring-oscillator converter, and
//! networks trained on top of the resulting transfer curve.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod analytic;
pub mod converter;
pub mod error;
pub mod mnist;
pub mod nn;
pub mod perceptron;
pub mod scalar;
pub mod signals;
pub mod transient;

pub use analytic::{
    adder_equilibrium, divider_equilibrium, inverter_equilibrium, vac_equilibrium, weighted_dc_sum,
    CellResistances, WeightVector,
};
pub use converter::{
    find_fixed_points, fit_cubic, Conversion, ConverterMode, ConverterModel, FitResult, FixedPoint,
    FixedPoints, RawCalibration, Stability,
};
pub use error::{
    AnalyticError, ConverterError, MnistError, NnError, PerceptronError, SignalError, TransientError,
};
pub use mnist::{Dataset, Split};
pub use nn::{
    activation, activation_deriv, evaluate, train, train_new, ActivationKind, Network, NetworkConfig,
    TrainReport, WeightMode,
};
pub use perceptron::{
    chain_eval, perceptron_eval, response_curve, EvalPath, PerceptronConfig, ResponseCurve,
};
pub use scalar::Scalar;
pub use signals::{Level, PwmSignal, SupplyProfile};
pub use transient::{
    simulate_vac, sweep, trace_metrics, Stimulus, SweepAxis, SweepPoint, TraceMetrics, TransientTrace,
    VacConfig,
};

pub type PwmSignal64 = PwmSignal<f64>;
pub type SupplyProfile64 = SupplyProfile<f64>;
pub type VacConfig64 = VacConfig<f64>;
pub type TransientTrace64 = TransientTrace<f64>;
pub type TraceMetrics64 = TraceMetrics<f64>;
pub type ConverterModel64 = ConverterModel<f64>;
pub type PerceptronConfig64 = PerceptronConfig<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Network32 = Network<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Network64 = Network<f64>;
