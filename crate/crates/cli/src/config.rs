//! Experiment files: a TOML document with `kind`, `seed`, `output_dir` and a
//! kind-specific `[params]` table. Unknown keys are rejected everywhere.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use elastic_pwm::nn::{ActivationKind, WeightMode};
use elastic_pwm::transient::VacConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    VacTable,
    SweepVdd,
    SweepFreq,
    DynamicVdd,
    ResponseCurve,
    Fit,
    FixedPoints,
    Train,
    TrainSweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::VacTable => "vac-table",
            Kind::SweepVdd => "sweep-vdd",
            Kind::SweepFreq => "sweep-freq",
            Kind::DynamicVdd => "dynamic-vdd",
            Kind::ResponseCurve => "response-curve",
            Kind::Fit => "fit",
            Kind::FixedPoints => "fixed-points",
            Kind::Train => "train",
            Kind::TrainSweep => "train-sweep",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw experiment file before the params table is typed.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub kind: Option<Kind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: toml::Table,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.message().to_string()))
    }

    /// Types the params table; errors name the offending key.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P, CliError> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(format!("[params]: {}", e.message())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Small,
    Large,
}

impl Preset {
    pub fn vac(self, n: usize, bits: u32) -> VacConfig<f64> {
        match self {
            Preset::Small => VacConfig::small(n, bits),
            Preset::Large => VacConfig::large(n, bits),
        }
    }

    /// Input frequency at which the preset's ripple stays small.
    pub fn default_frequency(self) -> f64 {
        match self {
            Preset::Small => 100e6,
            Preset::Large => 1e6,
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(Preset::Small),
            "large" => Ok(Preset::Large),
            _ => Err(format!("unknown preset '{s}' (small, large)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConverterChoice {
    Compensated,
    Raw,
    Identity,
}

impl FromStr for ConverterChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "compensated" => Ok(Self::Compensated),
            "raw" => Ok(Self::Raw),
            "identity" => Ok(Self::Identity),
            _ => Err(format!("unknown converter '{s}' (compensated, raw, identity)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathChoice {
    Behavioral,
    Transient,
}

impl FromStr for PathChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "behavioral" => Ok(Self::Behavioral),
            "transient" => Ok(Self::Transient),
            _ => Err(format!("unknown path '{s}' (behavioral, transient)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VacRow {
    pub duties: Vec<f64>,
    pub weights: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VacTableParams {
    pub preset: Preset,
    pub bits: u32,
    pub vdd: f64,
    /// One frequency per input; inputs run unsynchronized when they differ.
    pub frequencies: Vec<f64>,
    pub random_phases: bool,
    pub rows: Vec<VacRow>,
}

impl Default for VacTableParams {
    fn default() -> Self {
        let row = |duties: [f64; 3], weights: [u32; 3]| VacRow {
            duties: duties.to_vec(),
            weights: weights.to_vec(),
        };
        Self {
            preset: Preset::Small,
            bits: 3,
            vdd: 2.5,
            frequencies: vec![100e6; 3],
            random_phases: false,
            rows: vec![
                row([0.7, 0.8, 0.9], [7, 7, 7]),
                row([0.5, 0.5, 0.5], [1, 2, 4]),
                row([0.2, 0.6, 0.8], [5, 6, 7]),
                row([0.95, 0.9, 0.8], [7, 6, 6]),
                row([0.3, 0.4, 0.5], [1, 4, 2]),
                row([0.8, 0.2, 0.5], [7, 3, 4]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepVddParams {
    pub preset: Preset,
    pub n: usize,
    pub bits: u32,
    /// Each duty is one series; every input carries it.
    pub duties: Vec<f64>,
    /// Defaults to all-maximum weights.
    pub weights: Option<Vec<u32>>,
    pub frequency: Option<f64>,
    pub vdd: Vec<f64>,
}

impl Default for SweepVddParams {
    fn default() -> Self {
        Self {
            preset: Preset::Small,
            n: 3,
            bits: 3,
            duties: vec![0.1, 0.5, 0.9],
            weights: None,
            frequency: None,
            vdd: (0..=25).map(|i| 1.0 + 0.1 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFreqParams {
    pub presets: Vec<Preset>,
    pub n: usize,
    pub bits: u32,
    pub duty: f64,
    pub weights: Option<Vec<u32>>,
    pub vdd: f64,
    pub frequencies: Vec<f64>,
}

impl Default for SweepFreqParams {
    fn default() -> Self {
        let mut frequencies = Vec::new();
        for decade in 3..9 {
            for m in [1.0, 2.0, 5.0] {
                frequencies.push(m * 10f64.powi(decade));
            }
        }
        frequencies.push(1e9);
        Self {
            presets: vec![Preset::Small, Preset::Large],
            n: 3,
            bits: 3,
            duty: 0.5,
            weights: None,
            vdd: 2.5,
            frequencies,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicVddParams {
    pub preset: Preset,
    pub n: usize,
    pub bits: u32,
    pub duties: Vec<f64>,
    pub weights: Option<Vec<u32>>,
    pub frequency: f64,
    pub mean: f64,
    pub amplitude: f64,
    pub period: f64,
    pub periods: usize,
    pub compensation_threshold: f64,
    pub converter: ConverterChoice,
    pub samples: usize,
}

impl Default for DynamicVddParams {
    fn default() -> Self {
        Self {
            preset: Preset::Small,
            n: 3,
            bits: 3,
            duties: vec![0.5, 0.5, 0.5],
            weights: None,
            frequency: 100e6,
            mean: 2.5,
            amplitude: 0.7,
            period: 10e-6,
            periods: 3,
            compensation_threshold: 0.7,
            converter: ConverterChoice::Raw,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseCurveParams {
    pub depths: Vec<usize>,
    pub points: usize,
    pub converter: ConverterChoice,
    pub path: PathChoice,
    pub preset: Preset,
    pub frequency: Option<f64>,
    pub vdd: f64,
    pub compensation_threshold: f64,
}

impl Default for ResponseCurveParams {
    fn default() -> Self {
        Self {
            depths: vec![1, 2, 3],
            points: 20,
            converter: ConverterChoice::Compensated,
            path: PathChoice::Behavioral,
            preset: Preset::Small,
            frequency: None,
            vdd: 2.5,
            compensation_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitSource {
    Behavioral,
    Transient,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    pub source: FitSource,
    /// `x,y` columns with a header row; used when `source = "csv"`.
    pub csv: Option<PathBuf>,
    pub points: usize,
    pub x_min: f64,
    /// Default stays below the 98% cap.
    pub x_max: f64,
    pub preset: Preset,
    pub frequency: Option<f64>,
    pub vdd: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            source: FitSource::Behavioral,
            csv: None,
            points: 50,
            x_min: 0.0,
            x_max: 0.9,
            preset: Preset::Small,
            frequency: None,
            vdd: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointsParams {
    pub converter: ConverterChoice,
    /// `(c3, c2, c1, c0)` in percent; overrides the default cubic.
    pub coefficients: Option<[f64; 4]>,
    pub output_cap: Option<f64>,
}

impl Default for FixedPointsParams {
    fn default() -> Self {
        Self {
            converter: ConverterChoice::Compensated,
            coefficients: None,
            output_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(format!("unknown precision '{s}' (f32, f64)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub layer_sizes: Vec<usize>,
    pub activation: ActivationKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
    pub mode: WeightMode,
    pub max_weight: u32,
    pub initial_weight: u32,
    pub init_scale: f64,
    pub bias: bool,
    /// Training rows to keep; `None` uses all.
    pub subsample: Option<usize>,
    pub test_subsample: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub precision: Precision,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            layer_sizes: vec![784, 10],
            activation: ActivationKind::CapRelu,
            learning_rate: 0.008,
            epochs: 30,
            batch: 32,
            mode: WeightMode::Fp,
            max_weight: 255,
            initial_weight: 3,
            init_scale: 1.0,
            bias: false,
            subsample: None,
            test_subsample: None,
            data_dir: None,
            precision: Precision::F32,
        }
    }
}

/// Per-run overrides of a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOverride {
    pub layer_sizes: Option<Vec<usize>>,
    pub activation: Option<ActivationKind>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub mode: Option<WeightMode>,
    pub max_weight: Option<u32>,
    pub initial_weight: Option<u32>,
}

impl RunOverride {
    pub fn apply(&self, base: &TrainParams) -> TrainParams {
        let mut p = base.clone();
        if let Some(v) = &self.layer_sizes {
            p.layer_sizes = v.clone();
        }
        if let Some(v) = self.activation {
            p.activation = v;
        }
        if let Some(v) = self.learning_rate {
            p.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            p.epochs = v;
        }
        if let Some(v) = self.batch {
            p.batch = v;
        }
        if let Some(v) = self.mode {
            p.mode = v;
        }
        if let Some(v) = self.max_weight {
            p.max_weight = v;
        }
        if let Some(v) = self.initial_weight {
            p.initial_weight = v;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSweepParams {
    #[serde(default)]
    pub base: TrainParams,
    pub runs: Vec<RunOverride>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let err = ExperimentFile::parse("kind = \"fit\"\nsed = 3\n").unwrap_err();
        assert!(err.message.contains("sed"), "{}", err.message);
    }

    #[test]
    fn unknown_param_is_named() {
        let f = ExperimentFile::parse("[params]\npoints = 10\nbogus = 1\n").unwrap();
        let err = f.params::<FitParams>().unwrap_err();
        assert!(err.message.contains("bogus"), "{}", err.message);
    }

    #[test]
    fn missing_required_key_is_named() {
        let f = ExperimentFile::parse("kind = \"train-sweep\"\n[params.base]\nepochs = 1\n").unwrap();
        let err = f.params::<TrainSweepParams>().unwrap_err();
        assert!(err.message.contains("runs"), "{}", err.message);
    }

    #[test]
    fn defaults_fill_missing_params() {
        let f = ExperimentFile::parse("kind = \"train\"\nseed = 4\n[params]\nactivation = \"pwm-percept\"\nmode = \"integer\"\n").unwrap();
        let p: TrainParams = f.params().unwrap();
        assert_eq!(f.kind, Some(Kind::Train));
        assert_eq!(p.activation, ActivationKind::PwmPercept);
        assert_eq!(p.mode, WeightMode::Integer);
        assert_eq!(p.epochs, 30);
    }

    #[test]
    fn default_table_rows() {
        let p = VacTableParams::default();
        assert_eq!(p.rows.len(), 6);
        assert!(p.rows.iter().all(|r| r.duties.len() == 3 && r.weights.len() == 3));
    }
}
