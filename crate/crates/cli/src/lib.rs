//! `epwm`: regenerates accumulator, converter and network experiments as CSV.
//!
//! Every run writes its tables plus a `manifest.json` (spec hash, seed, wall
//! time, artifacts, error record) into one output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::*;
use crate::error::CliError;
use crate::experiments::Context;
use crate::output::{error_record, write_manifest, write_tables, Manifest, Table};

pub const DATA_ENV: &str = "EPWM_MNIST_DIR";

#[derive(Debug, Parser)]
#[command(name = "epwm", version, about = "PWM perceptron experiment runner")]
pub struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for CSVs and the manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// MNIST directory; falls back to the config, then $EPWM_MNIST_DIR.
    #[arg(long, global = true, value_parser = clap::builder::OsStringValueParser::new().map(PathBuf::from))]
    pub data_dir: Option<PathBuf>,
    /// Worker threads for independent points and runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ConfigArg {
    /// Experiment file (TOML).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct PresetArgs {
    #[command(flatten)]
    pub file: ConfigArg,
    /// small or large.
    #[arg(long)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ResponseArgs {
    #[command(flatten)]
    pub file: ConfigArg,
    /// Chain depth; repeat for several curves.
    #[arg(long = "depth")]
    pub depths: Vec<usize>,
    /// Grid intervals on [0, 1].
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub path: Option<PathChoice>,
    #[arg(long)]
    pub converter: Option<ConverterChoice>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub file: ConfigArg,
    /// Training rows to keep (seeded sample).
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub test_subsample: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub activation: Option<elastic_pwm::ActivationKind>,
    /// Layer sizes such as 784/300/10.
    #[arg(long)]
    pub topology: Option<String>,
    /// fp or integer.
    #[arg(long)]
    pub mode: Option<elastic_pwm::WeightMode>,
    #[arg(long)]
    pub max_weight: Option<u32>,
    #[arg(long)]
    pub initial_weight: Option<u32>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<Precision>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Theoretical and simulated accumulator voltages per input row.
    VacTable(ConfigArg),
    /// Output voltage and ratio over a static supply sweep.
    SweepVdd(PresetArgs),
    /// Output voltage, ripple, charge time and power over input frequency.
    SweepFreq(ConfigArg),
    /// Capacitor voltage and output duty under a sinusoidal supply.
    DynamicVdd(PresetArgs),
    /// Chained-stage transfer curves and their deviation from identity.
    ResponseCurve(ResponseArgs),
    /// Cubic least-squares fit of stage response data.
    Fit(ConfigArg),
    /// Fixed points of the stage map.
    FixedPoints(ConfigArg),
    /// Train one network on MNIST.
    Train(TrainArgs),
    /// Train several configurations in parallel.
    TrainSweep(TrainArgs),
    /// Run an experiment file, dispatching on its `kind`.
    Run {
        config: PathBuf,
    },
    /// Collate every manifest under a directory into summary.csv.
    Report {
        /// Directory to scan; defaults to --out or `out`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

/// Kind-specific parameters after config and flags are merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    VacTable(VacTableParams),
    SweepVdd(SweepVddParams),
    SweepFreq(SweepFreqParams),
    DynamicVdd(DynamicVddParams),
    ResponseCurve(ResponseCurveParams),
    Fit(FitParams),
    FixedPoints(FixedPointsParams),
    Train(TrainParams),
    TrainSweep(TrainSweepParams),
}

/// A fully resolved experiment: everything its outputs depend on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment {
    pub kind: Kind,
    pub seed: u64,
    pub params: Params,
}

impl Experiment {
    pub fn from_file(kind: Kind, file: &ExperimentFile, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(k) = file.kind {
            if k != kind {
                return Err(CliError::config(format!("config is for `{k}`, not `{kind}`")));
            }
        }
        let params = match kind {
            Kind::VacTable => Params::VacTable(file.params()?),
            Kind::SweepVdd => Params::SweepVdd(file.params()?),
            Kind::SweepFreq => Params::SweepFreq(file.params()?),
            Kind::DynamicVdd => Params::DynamicVdd(file.params()?),
            Kind::ResponseCurve => Params::ResponseCurve(file.params()?),
            Kind::Fit => Params::Fit(file.params()?),
            Kind::FixedPoints => Params::FixedPoints(file.params()?),
            Kind::Train => Params::Train(file.params()?),
            Kind::TrainSweep => Params::TrainSweep(file.params()?),
        };
        Ok(Self {
            kind,
            seed: seed.or(file.seed).unwrap_or(0),
            params,
        })
    }

    pub fn spec_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("experiment serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn spec_hash(&self) -> String {
        output::sha256_hex(self.spec_json().to_string().as_bytes())
    }

    pub fn description(&self) -> &'static str {
        match self.kind {
            Kind::VacTable => "closed-form vs transient accumulator voltage per input row",
            Kind::SweepVdd => "accumulator output and output/Vdd ratio over static supply values",
            Kind::SweepFreq => "steady-state output, ripple, charge time and power vs input frequency",
            Kind::DynamicVdd => "capacitor voltage and converter output under a sinusoidal supply",
            Kind::ResponseCurve => "chained perceptron transfer curves and deviation from identity",
            Kind::Fit => "least-squares cubic of stage response data with r squared",
            Kind::FixedPoints => "fixed points of the stage map and their stability",
            Kind::Train => "MNIST training run: per-epoch errors and weight statistics",
            Kind::TrainSweep => "MNIST training sweep: one row per configuration",
        }
    }

    pub fn execute(&self, ctx: &Context) -> Result<Vec<Table>, CliError> {
        match &self.params {
            Params::VacTable(p) => experiments::vac_table(p, self.seed),
            Params::SweepVdd(p) => experiments::sweep_vdd(p),
            Params::SweepFreq(p) => experiments::sweep_freq(p),
            Params::DynamicVdd(p) => experiments::dynamic_vdd(p),
            Params::ResponseCurve(p) => experiments::response_curve(p),
            Params::Fit(p) => experiments::fit(p),
            Params::FixedPoints(p) => experiments::fixed_points(p),
            Params::Train(p) => experiments::train(p, self.seed, ctx),
            Params::TrainSweep(p) => experiments::train_sweep(p, self.seed, ctx),
        }
    }
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub tables: Vec<Table>,
    pub manifest: Option<Manifest>,
}

fn parse_topology(s: &str) -> Result<Vec<usize>, CliError> {
    s.split('/')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::config(format!("bad topology '{s}', expected e.g. 784/300/10")))
}

fn apply_train_flags(p: &mut TrainParams, a: &TrainArgs) -> Result<(), CliError> {
    if let Some(v) = a.subsample {
        p.subsample = Some(v);
    }
    if let Some(v) = a.test_subsample {
        p.test_subsample = Some(v);
    }
    if let Some(v) = a.epochs {
        p.epochs = v;
    }
    if let Some(v) = a.lr {
        p.learning_rate = v;
    }
    if let Some(v) = a.activation {
        p.activation = v;
    }
    if let Some(t) = &a.topology {
        p.layer_sizes = parse_topology(t)?;
    }
    if let Some(v) = a.mode {
        p.mode = v;
    }
    if let Some(v) = a.max_weight {
        p.max_weight = v;
    }
    if let Some(v) = a.initial_weight {
        p.initial_weight = v;
    }
    if let Some(v) = a.batch {
        p.batch = v;
    }
    if let Some(v) = a.precision {
        p.precision = v;
    }
    Ok(())
}

fn load_file(arg: &ConfigArg) -> Result<ExperimentFile, CliError> {
    match &arg.config {
        Some(path) => ExperimentFile::load(path),
        None => Ok(ExperimentFile::default()),
    }
}

/// Merges the config file named on the command line with the flags.
fn resolve(cli: &Cli) -> Result<(Experiment, Option<PathBuf>), CliError> {
    let (kind, file) = match &cli.command {
        Command::VacTable(c) | Command::SweepFreq(c) | Command::Fit(c) | Command::FixedPoints(c) => {
            let kind = match &cli.command {
                Command::VacTable(_) => Kind::VacTable,
                Command::SweepFreq(_) => Kind::SweepFreq,
                Command::Fit(_) => Kind::Fit,
                _ => Kind::FixedPoints,
            };
            (kind, load_file(c)?)
        }
        Command::SweepVdd(a) => (Kind::SweepVdd, load_file(&a.file)?),
        Command::DynamicVdd(a) => (Kind::DynamicVdd, load_file(&a.file)?),
        Command::ResponseCurve(a) => (Kind::ResponseCurve, load_file(&a.file)?),
        Command::Train(a) => (Kind::Train, load_file(&a.file)?),
        Command::TrainSweep(a) => (Kind::TrainSweep, load_file(&a.file)?),
        Command::Run { config } => {
            let file = ExperimentFile::load(config)?;
            let kind = file
                .kind
                .ok_or_else(|| CliError::config(format!("{}: missing field `kind`", config.display())))?;
            (kind, file)
        }
        Command::Report { .. } => unreachable!("report has no experiment"),
    };
    let mut exp = Experiment::from_file(kind, &file, cli.seed)?;
    match (&cli.command, &mut exp.params) {
        (Command::SweepVdd(a), Params::SweepVdd(p)) => {
            if let Some(v) = a.preset {
                p.preset = v;
            }
        }
        (Command::DynamicVdd(a), Params::DynamicVdd(p)) => {
            if let Some(v) = a.preset {
                p.preset = v;
            }
        }
        (Command::ResponseCurve(a), Params::ResponseCurve(p)) => {
            if !a.depths.is_empty() {
                p.depths = a.depths.clone();
            }
            if let Some(v) = a.points {
                p.points = v;
            }
            if let Some(v) = a.path {
                p.path = v;
            }
            if let Some(v) = a.converter {
                p.converter = v;
            }
        }
        (Command::Train(a), Params::Train(p)) => apply_train_flags(p, a)?,
        (Command::TrainSweep(a), Params::TrainSweep(p)) => apply_train_flags(&mut p.base, a)?,
        _ => {}
    }
    Ok((exp, file.output_dir))
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| CliError::io(format!("cannot start worker pool: {e}")))
}

/// Runs `exp`, writing tables and a manifest to `out_dir`; failures still
/// leave a manifest with the error record.
pub fn run_experiment(
    exp: &Experiment,
    ctx: &Context,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<Outcome, CliError> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let result = pool(jobs).and_then(|p| p.install(|| exp.execute(ctx)));
    let (artifacts, error) = match &result {
        Ok(tables) => match write_tables(out_dir, tables) {
            Ok(a) => (a, None),
            Err(e) => (Vec::new(), Some(e)),
        },
        Err(e) => (Vec::new(), Some(e.clone())),
    };
    let manifest = Manifest {
        kind: exp.kind.to_string(),
        status: if error.is_none() { "ok" } else { "error" }.into(),
        seed: exp.seed,
        spec_hash: exp.spec_hash(),
        spec: exp.spec_json(),
        description: exp.description().into(),
        started_unix: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        artifacts,
        error: error.as_ref().map(error_record),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let written = write_manifest(out_dir, &manifest);
    if let Some(e) = error {
        return Err(e);
    }
    written?;
    Ok(Outcome {
        out_dir: out_dir.to_path_buf(),
        tables: result.expect("checked above"),
        manifest: Some(manifest),
    })
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    if let Command::Report { dir } = &cli.command {
        let root = dir
            .clone()
            .or_else(|| cli.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let table = output::collate(&root)?;
        let out_dir = cli.out.clone().unwrap_or_else(|| root.clone());
        write_tables(&out_dir, std::slice::from_ref(&table))?;
        return Ok(Outcome {
            out_dir,
            tables: vec![table],
            manifest: None,
        });
    }
    let (exp, file_out) = resolve(cli)?;
    let out_dir = cli
        .out
        .clone()
        .or(file_out)
        .unwrap_or_else(|| Path::new("out").join(exp.kind.name()));
    let ctx = Context {
        data_dir: cli.data_dir.clone(),
    };
    run_experiment(&exp, &ctx, &out_dir, cli.jobs)
}

/// Parses `args` (program name first) and runs.
pub fn run_args<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::config(e.to_string()))?;
    run(&cli)
}
