//! One function per experiment kind, each producing its CSV tables.

use std::path::{Path, PathBuf};

use elastic_pwm::analytic::{vac_equilibrium, weighted_dc_sum, WeightVector};
use elastic_pwm::converter::{find_fixed_points, fit_cubic, ConverterMode, ConverterModel, Stability};
use elastic_pwm::mnist::{self, Dataset, Split};
use elastic_pwm::nn::{self, NetworkConfig, TrainReport};
use elastic_pwm::perceptron::{chain_eval, unit_grid, EvalPath, PerceptronConfig};
use elastic_pwm::scalar::Scalar;
use elastic_pwm::signals::{randomize_phases, PwmSignal, SupplyProfile};
use elastic_pwm::transient::{
    default_horizon, simulate_vac, slowest_period, trace_metrics, Stimulus, TraceMetrics,
};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::*;
use crate::error::CliError;
use crate::output::{num, opt, Table};

/// Environment shared by every kind.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub data_dir: Option<PathBuf>,
}

/// Independent per-run seed, the same whatever the worker count.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

fn weights_or_max(w: &Option<Vec<u32>>, n: usize, bits: u32) -> Result<WeightVector, CliError> {
    Ok(match w {
        Some(w) => WeightVector::new(w.clone(), bits)?,
        None => WeightVector::max_weights(n, bits)?,
    })
}

fn converter(choice: ConverterChoice) -> ConverterModel<f64> {
    match choice {
        ConverterChoice::Compensated => ConverterModel::compensated(),
        ConverterChoice::Raw => ConverterModel::raw(),
        ConverterChoice::Identity => ConverterModel::identity(),
    }
}

fn bool_str(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

fn metric_cells(r: &Result<TraceMetrics<f64>, elastic_pwm::TransientError>, vdd: f64) -> Vec<String> {
    match r {
        Ok(m) => vec![
            num(m.average_v),
            num(m.average_v / vdd),
            num(m.swing),
            opt(m.charge_time),
            num(m.avg_power),
            bool_str(m.steady),
            "ok".into(),
        ],
        Err(e) => {
            let mut v = vec![String::new(); 6];
            v.push(e.to_string());
            v
        }
    }
}

const METRIC_COLUMNS: [&str; 7] = ["average_v", "ratio", "swing", "charge_time", "avg_power", "steady", "status"];

fn with_metrics<'a>(lead: &[&'a str]) -> Vec<&'a str> {
    lead.iter().copied().chain(METRIC_COLUMNS).collect()
}

pub fn vac_table(p: &VacTableParams, seed: u64) -> Result<Vec<Table>, CliError> {
    let n = p.frequencies.len();
    if n == 0 {
        return Err(CliError::config("frequencies must list one frequency per input"));
    }
    let cfg = p.preset.vac(n, p.bits);
    cfg.validate()?;
    let supply = SupplyProfile::constant(p.vdd)?;
    let rows: Vec<Result<Vec<String>, CliError>> = p
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.duties.len() != n {
                return Err(CliError::config(format!(
                    "row {}: {} duties for {} inputs",
                    i + 1,
                    row.duties.len(),
                    n
                )));
            }
            let w = WeightVector::new(row.weights.clone(), p.bits)?;
            let theory = vac_equilibrium(&row.duties, &w, p.vdd)?;
            let mut inputs = row
                .duties
                .iter()
                .zip(&p.frequencies)
                .map(|(&d, &f)| PwmSignal::new(f, d))
                .collect::<Result<Vec<_>, _>>()?;
            if p.random_phases {
                randomize_phases(&mut inputs, derive_seed(seed, i as u64));
            }
            let horizon = default_horizon(&cfg, &inputs, &supply);
            let trace = simulate_vac(&cfg, &inputs, &w, &supply, horizon, p.vdd)?;
            let m = trace_metrics(&trace, slowest_period(&inputs));
            let mut cells = vec![(i + 1).to_string()];
            for (d, w) in row.duties.iter().zip(&row.weights) {
                cells.push(num(*d));
                cells.push(w.to_string());
            }
            cells.extend([
                num(theory),
                num(m.average_v),
                num(m.swing),
                num((m.average_v - theory).abs() / theory),
                bool_str(m.steady),
            ]);
            Ok(cells)
        })
        .collect();
    let mut header = vec!["row".to_string()];
    for i in 1..=n {
        header.push(format!("dc{i}"));
        header.push(format!("w{i}"));
    }
    for h in ["theoretical_v", "simulated_v", "swing", "rel_diff", "steady"] {
        header.push(h.into());
    }
    let mut t = Table {
        name: "vac_table".into(),
        header,
        rows: Vec::new(),
    };
    for r in rows {
        t.push(r?);
    }
    Ok(vec![t])
}

pub fn sweep_vdd(p: &SweepVddParams) -> Result<Vec<Table>, CliError> {
    let cfg = p.preset.vac(p.n, p.bits);
    cfg.validate()?;
    let w = weights_or_max(&p.weights, p.n, p.bits)?;
    check_ascending(&p.vdd, "vdd")?;
    let f = p.frequency.unwrap_or(p.preset.default_frequency());
    let jobs: Vec<(f64, f64)> = p
        .duties
        .iter()
        .flat_map(|&d| p.vdd.iter().map(move |&v| (d, v)))
        .collect();
    let rows: Vec<Result<Vec<String>, CliError>> = jobs
        .par_iter()
        .map(|&(d, vdd)| {
            let duties = vec![d; p.n];
            let behavioral = vac_equilibrium(&duties, &w, vdd)?;
            let stim = Stimulus {
                duties,
                weights: w.clone(),
                frequency: f,
                vdd,
                v0_fraction: 1.0,
                horizon: None,
            };
            let r = stim.run(&cfg).map(|(_, m)| m);
            let mut cells = vec![num(d), num(vdd), num(behavioral), num(behavioral / vdd)];
            cells.extend(metric_cells(&r, vdd));
            Ok(cells)
        })
        .collect();
    let mut t = Table::new(
        "sweep_vdd",
        &with_metrics(&["duty", "vdd", "behavioral_v", "behavioral_ratio"]),
    );
    for r in rows {
        t.push(r?);
    }
    Ok(vec![t])
}

pub fn sweep_freq(p: &SweepFreqParams) -> Result<Vec<Table>, CliError> {
    check_ascending(&p.frequencies, "frequencies")?;
    let w = weights_or_max(&p.weights, p.n, p.bits)?;
    let jobs: Vec<(Preset, f64)> = p
        .presets
        .iter()
        .flat_map(|&pr| p.frequencies.iter().map(move |&f| (pr, f)))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(preset, f)| {
            let cfg = preset.vac(p.n, p.bits);
            let stim = Stimulus {
                duties: vec![p.duty; p.n],
                weights: w.clone(),
                frequency: f,
                vdd: p.vdd,
                v0_fraction: 1.0,
                horizon: None,
            };
            let r = stim.run(&cfg).map(|(_, m)| m);
            let name = match preset {
                Preset::Small => "small",
                Preset::Large => "large",
            };
            let mut cells = vec![name.to_string(), num(f)];
            cells.extend(metric_cells(&r, p.vdd));
            cells
        })
        .collect();
    let mut t = Table::new("sweep_freq", &with_metrics(&["preset", "frequency"]));
    for r in rows {
        t.push(r);
    }
    Ok(vec![t])
}

pub fn dynamic_vdd(p: &DynamicVddParams) -> Result<Vec<Table>, CliError> {
    let cfg = p.preset.vac(p.n, p.bits).with_compensation(p.compensation_threshold);
    cfg.validate()?;
    let w = weights_or_max(&p.weights, p.n, p.bits)?;
    if p.periods == 0 || p.samples < 2 {
        return Err(CliError::config("periods must be >= 1 and samples >= 2"));
    }
    let horizon = p.period * p.periods as f64;
    let supply = SupplyProfile::sinusoid(p.mean, p.amplitude, p.period, horizon)?;
    let inputs = p
        .duties
        .iter()
        .map(|&d| PwmSignal::new(p.frequency, d))
        .collect::<Result<Vec<_>, _>>()?;
    let v0 = vac_equilibrium(&p.duties, &w, p.mean)?.max(p.compensation_threshold);
    let trace = simulate_vac(&cfg, &inputs, &w, &supply, horizon, v0)?;
    let model = converter(p.converter);
    let ideal = weighted_dc_sum(&p.duties, &w)?;
    let ideal_out = match model.mode {
        ConverterMode::Compensated => Some(model.stage_map(ideal)),
        ConverterMode::Raw => model.v_to_dc(p.mean * (1.0 - ideal), p.mean).duty(),
    };
    let mut t = Table::new(
        "dynamic_vdd",
        &["t", "vdd", "v_cap", "ratio", "dc_sum", "dc_out", "dc_out_ideal", "oscillating"],
    );
    for pt in trace.uniform_points(p.samples) {
        let out = model.v_to_dc(pt.v_cap, pt.vdd).duty();
        t.push(vec![
            num(pt.t),
            num(pt.vdd),
            num(pt.v_cap),
            num(pt.v_cap / pt.vdd),
            num(1.0 - pt.v_cap / pt.vdd),
            opt(out),
            opt(ideal_out),
            bool_str(out.is_some()),
        ]);
    }
    Ok(vec![t])
}

fn perceptron_cfg(
    preset: Preset,
    conv: ConverterChoice,
    path: PathChoice,
    frequency: Option<f64>,
    vdd: f64,
    threshold: f64,
) -> PerceptronConfig<f64> {
    let mut cfg = PerceptronConfig::behavioral()
        .with_vac(preset.vac(3, 3).with_compensation(threshold))
        .with_converter(converter(conv));
    cfg.vdd = vdd;
    if path == PathChoice::Transient {
        cfg = cfg.with_path(EvalPath::Transient {
            frequency: frequency.unwrap_or(preset.default_frequency()),
            horizon: None,
        });
    }
    cfg
}

pub fn response_curve(p: &ResponseCurveParams) -> Result<Vec<Table>, CliError> {
    if p.points == 0 || p.depths.is_empty() || p.depths.contains(&0) {
        return Err(CliError::config("points must be >= 1 and depths must be positive"));
    }
    let cfg = perceptron_cfg(p.preset, p.converter, p.path, p.frequency, p.vdd, p.compensation_threshold);
    cfg.vac.validate()?;
    let grid: Vec<f64> = unit_grid(p.points);
    let jobs: Vec<(usize, f64)> = p
        .depths
        .iter()
        .flat_map(|&d| grid.iter().map(move |&x| (d, x)))
        .collect();
    let results: Vec<_> = jobs.par_iter().map(|&(d, x)| chain_eval(&cfg, d, x)).collect();

    let mut curve = Table::new("response_curve", &["depth", "dc_in", "dc_out", "status"]);
    let mut dev = Table::new("deviation", &["depth", "deviation", "failures"]);
    for &d in &p.depths {
        let mut total = 0.0;
        let mut failures = 0;
        for ((depth, x), r) in jobs.iter().zip(&results) {
            if *depth != d {
                continue;
            }
            match r {
                Ok(y) => {
                    total += (y - x).abs();
                    curve.push(vec![d.to_string(), num(*x), num(*y), "ok".into()]);
                }
                Err(e) => {
                    failures += 1;
                    curve.push(vec![d.to_string(), num(*x), String::new(), e.to_string()]);
                }
            }
        }
        dev.push(vec![d.to_string(), num(total), failures.to_string()]);
    }
    Ok(vec![curve, dev])
}

fn read_xy(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let get = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CliError::config(format!("{}: row {} needs numeric x,y", path.display(), i + 2)))
        };
        xs.push(get(0)?);
        ys.push(get(1)?);
    }
    Ok((xs, ys))
}

pub fn fit(p: &FitParams) -> Result<Vec<Table>, CliError> {
    let (xs, ys) = match p.source {
        FitSource::Csv => {
            let path = p
                .csv
                .as_ref()
                .ok_or_else(|| CliError::config("source = \"csv\" needs the `csv` key"))?;
            read_xy(path)?
        }
        src => {
            if p.points < 4 || !(p.x_max > p.x_min) {
                return Err(CliError::config("need points >= 4 and x_max > x_min"));
            }
            let path = if src == FitSource::Transient {
                PathChoice::Transient
            } else {
                PathChoice::Behavioral
            };
            let cfg = perceptron_cfg(p.preset, ConverterChoice::Compensated, path, p.frequency, p.vdd, 0.0);
            let xs: Vec<f64> = (0..p.points)
                .map(|i| p.x_min + (p.x_max - p.x_min) * i as f64 / (p.points - 1) as f64)
                .collect();
            let ys = xs
                .par_iter()
                .map(|&x| chain_eval(&cfg, 1, x))
                .collect::<Result<Vec<_>, _>>()?;
            (xs, ys)
        }
    };
    let r = fit_cubic(&xs, &ys)?;
    let mut coef = Table::new("fit", &["term", "value", "percent"]);
    for (name, c) in ["c3", "c2", "c1", "c0"].iter().zip(r.coefficients) {
        coef.push(vec![name.to_string(), num(c), num(c * 100.0)]);
    }
    coef.push(vec!["r_squared".into(), num(r.r_squared), String::new()]);
    let mut pts = Table::new("fit_points", &["x", "y", "fitted", "residual"]);
    for (&x, &y) in xs.iter().zip(&ys) {
        let f = r.eval(x);
        pts.push(vec![num(x), num(y), num(f), num(y - f)]);
    }
    Ok(vec![coef, pts])
}

pub fn fixed_points(p: &FixedPointsParams) -> Result<Vec<Table>, CliError> {
    let mut model = converter(p.converter);
    if let Some(c) = p.coefficients {
        model = ConverterModel::from_cubic(c, p.output_cap.unwrap_or(model.output_cap));
    } else if let Some(cap) = p.output_cap {
        model.output_cap = cap;
    }
    let fp = find_fixed_points(&model)?;
    let mut t = Table::new("fixed_points", &["kind", "x", "x_hi", "slope", "stability"]);
    for pt in &fp.points {
        let s = match pt.stability {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        };
        t.push(vec!["point".into(), num(pt.x), String::new(), num(pt.slope), s.into()]);
    }
    for &(lo, hi) in &fp.degenerate {
        t.push(vec!["interval".into(), num(lo), num(hi), "1".into(), "neutral".into()]);
    }
    Ok(vec![t])
}

/// Dataset directory: explicit flag, then config, then environment.
pub fn resolve_data_dir(ctx: &Context, p: &TrainParams) -> Result<PathBuf, CliError> {
    let dir = ctx
        .data_dir
        .clone()
        .or_else(|| p.data_dir.clone())
        .or_else(|| std::env::var_os(crate::DATA_ENV).map(PathBuf::from))
        .filter(|d| !d.as_os_str().is_empty())
        .ok_or_else(|| {
            CliError::dataset(format!(
                "no MNIST directory given (use --data-dir, params.data_dir or {})",
                crate::DATA_ENV
            ))
        })?;
    if !dir.is_dir() {
        return Err(CliError::dataset(format!("MNIST directory {} does not exist", dir.display())));
    }
    Ok(dir)
}

pub struct Data<F> {
    pub train: Dataset<F>,
    pub test: Dataset<F>,
}

pub fn load_data<F: Scalar>(dir: &Path, p: &TrainParams, seed: u64) -> Result<Data<F>, CliError> {
    let mut train = mnist::load_split::<F>(dir, Split::Train)?;
    let mut test = mnist::load_split::<F>(dir, Split::Test)?;
    if let Some(n) = p.subsample {
        train = train.subsample(n, derive_seed(seed, u64::MAX))?;
    }
    if let Some(n) = p.test_subsample {
        test = test.subsample(n, derive_seed(seed, u64::MAX - 1))?;
    }
    Ok(Data { train, test })
}

pub fn network_config(p: &TrainParams, seed: u64) -> NetworkConfig {
    NetworkConfig {
        layer_sizes: p.layer_sizes.clone(),
        activation: p.activation,
        learning_rate: p.learning_rate,
        epochs: p.epochs,
        batch: p.batch,
        seed,
        mode: p.mode,
        max_weight: p.max_weight,
        initial_weight: p.initial_weight,
        init_scale: p.init_scale,
        bias: p.bias,
    }
}

const RUN_COLUMNS: [&str; 13] = [
    "topology",
    "activation",
    "mode",
    "learning_rate",
    "initial_weight",
    "max_weight",
    "epochs",
    "batch",
    "seed",
    "train_samples",
    "test_samples",
    "train_error",
    "test_error",
];

fn run_cells<F: Scalar>(cfg: &NetworkConfig, data: &Data<F>, r: &TrainReport) -> Vec<String> {
    let init = match cfg.mode {
        elastic_pwm::WeightMode::Integer => cfg.initial_weight.to_string(),
        elastic_pwm::WeightMode::Fp => num(cfg.init_scale),
    };
    let max = match cfg.mode {
        elastic_pwm::WeightMode::Integer => cfg.max_weight.to_string(),
        elastic_pwm::WeightMode::Fp => String::new(),
    };
    vec![
        cfg.topology(),
        cfg.activation.to_string(),
        cfg.mode.to_string(),
        num(cfg.learning_rate),
        init,
        max,
        cfg.epochs.to_string(),
        cfg.batch.to_string(),
        cfg.seed.to_string(),
        data.train.len().to_string(),
        data.test.len().to_string(),
        num(r.train_error),
        num(r.test_error),
    ]
}

fn label_table<F: Scalar>(data: &Data<F>) -> Table {
    let mut t = Table::new("labels", &["split", "label", "count"]);
    for (name, ds) in [("train", &data.train), ("test", &data.test)] {
        for (l, c) in ds.label_counts().iter().enumerate() {
            t.push(vec![name.into(), l.to_string(), c.to_string()]);
        }
    }
    t
}

fn train_typed<F: Scalar>(dir: &Path, p: &TrainParams, seed: u64) -> Result<Vec<Table>, CliError> {
    let cfg = network_config(p, seed);
    cfg.validate()?;
    let data = load_data::<F>(dir, p, seed)?;
    let (_, report) = nn::train_new(&cfg, &data.train, &data.test)?;

    let mut summary = Table::new("train", &RUN_COLUMNS);
    summary.push(run_cells(&cfg, &data, &report));
    let mut epochs = Table::new("epochs", &["epoch", "loss", "train_error", "test_error"]);
    for e in &report.per_epoch {
        epochs.push(vec![e.epoch.to_string(), num(e.loss), num(e.train_error), num(e.test_error)]);
    }
    let mut weights = Table::new("weights", &["layer", "min", "max", "mean_abs", "bin_lower", "count"]);
    for (i, s) in report.weight_stats.iter().enumerate() {
        for (lo, c) in &s.histogram {
            weights.push(vec![
                (i + 1).to_string(),
                num(s.min),
                num(s.max),
                num(s.mean_abs),
                num(*lo),
                c.to_string(),
            ]);
        }
    }
    Ok(vec![summary, epochs, weights, label_table(&data)])
}

pub fn train(p: &TrainParams, seed: u64, ctx: &Context) -> Result<Vec<Table>, CliError> {
    let dir = resolve_data_dir(ctx, p)?;
    match p.precision {
        Precision::F32 => train_typed::<f32>(&dir, p, seed),
        Precision::F64 => train_typed::<f64>(&dir, p, seed),
    }
}

fn train_sweep_typed<F: Scalar>(dir: &Path, p: &TrainSweepParams, seed: u64) -> Result<Vec<Table>, CliError> {
    let runs: Vec<(NetworkConfig, TrainParams)> = p
        .runs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let tp = o.apply(&p.base);
            let cfg = network_config(&tp, derive_seed(seed, i as u64));
            cfg.validate().map_err(|e| CliError::config(format!("run {}: {e}", i + 1)))?;
            Ok((cfg, tp))
        })
        .collect::<Result<_, CliError>>()?;
    let data = load_data::<F>(dir, &p.base, seed)?;
    let reports: Vec<Result<TrainReport, CliError>> = runs
        .par_iter()
        .map(|(cfg, _)| Ok(nn::train_new(cfg, &data.train, &data.test)?.1))
        .collect();

    let mut header = vec!["run"];
    header.extend(RUN_COLUMNS);
    header.push("status");
    let mut summary = Table::new("train_sweep", &header);
    let mut epochs = Table::new("epochs", &["run", "epoch", "loss", "train_error", "test_error"]);
    for (i, ((cfg, _), r)) in runs.iter().zip(&reports).enumerate() {
        let mut cells = vec![(i + 1).to_string()];
        match r {
            Ok(rep) => {
                cells.extend(run_cells(cfg, &data, rep));
                cells.push("ok".into());
                for e in &rep.per_epoch {
                    epochs.push(vec![
                        (i + 1).to_string(),
                        e.epoch.to_string(),
                        num(e.loss),
                        num(e.train_error),
                        num(e.test_error),
                    ]);
                }
            }
            Err(e) => {
                let blank = TrainReport {
                    test_error: f64::NAN,
                    train_error: f64::NAN,
                    per_epoch: vec![],
                    weight_stats: vec![],
                };
                cells.extend(run_cells(cfg, &data, &blank));
                cells.push(e.message.clone());
            }
        }
        summary.push(cells);
    }
    Ok(vec![summary, epochs, label_table(&data)])
}

pub fn train_sweep(p: &TrainSweepParams, seed: u64, ctx: &Context) -> Result<Vec<Table>, CliError> {
    if p.runs.is_empty() {
        return Err(CliError::config("`runs` must list at least one run"));
    }
    let dir = resolve_data_dir(ctx, &p.base)?;
    match p.base.precision {
        Precision::F32 => train_sweep_typed::<f32>(&dir, p, seed),
        Precision::F64 => train_sweep_typed::<f64>(&dir, p, seed),
    }
}

fn check_ascending(grid: &[f64], key: &str) -> Result<(), CliError> {
    elastic_pwm::transient::check_grid(grid).map_err(|e| CliError::config(format!("{key}: {e}")))
}
