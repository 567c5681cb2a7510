//! File formats and the end-to-end commands behind the CLI.
//!
//! * samples: CSV with header `x,y`
//! * run configuration: flat `key = value` lines, keys as the CLI flags
//!   without the leading dashes
//! * outputs: `model.json`, `history.csv`, `curve.csv`, `repair.json`
//!
//! Floats in CSV outputs are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::BoundaryMode;
use crate::optim::OptimizerKind;
use crate::repair::{repair_continuity, RepairReport};
use crate::spline::{SampleSet, SplineModel};
use crate::train::{fit, HistoryRow, Init, Regularization, Scaling, TrainConfig, TrainingReport};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DIVERGED: i32 = 2;
    pub const IO: i32 = 3;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Parse { .. } | Error::Json(_) => exit::IO,
        _ => exit::CONFIG,
    }
}

/// Everything needed for one `fit` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub input: PathBuf,
    pub train: TrainConfig,
    pub out: PathBuf,
    /// Curve points per segment, both ends included.
    pub resolution: usize,
    /// Reserved; training is deterministic.
    pub seed: u64,
    pub repair: bool,
}

pub const MANIFEST_KEYS: &[&str] = &[
    "input",
    "segments",
    "degree",
    "k",
    "lambda",
    "epochs",
    "optimizer",
    "lr",
    "momentum",
    "nesterov",
    "beta1",
    "beta2",
    "epsilon",
    "regularization",
    "init",
    "scaling",
    "boundary-mode",
    "strain-weight",
    "out",
    "resolution",
    "record-every",
    "seed",
    "repair",
];

fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-")
}

/// Reads a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|(line, msg)| Error::Config(format!("{}:{line}: {msg}", path.display())))
}

fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, (usize, String)> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| (n + 1, format!("expected key=value, got `{line}`")))?;
        let key = normalize_key(key);
        if !MANIFEST_KEYS.contains(&key.as_str()) {
            return Err((n + 1, format!("unknown key `{key}`")));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("invalid value `{value}` for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for {key}: expected true or false"))),
    }
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            train: TrainConfig::default(),
            out: PathBuf::from("out"),
            resolution: 50,
            seed: 0,
            repair: false,
        }
    }
}

impl RunManifest {
    /// Builds a manifest from `key -> value` settings on top of the defaults.
    pub fn from_settings(settings: &BTreeMap<String, String>) -> Result<Self> {
        let mut m = Self::default();
        let t = &mut m.train;
        for (raw_key, value) in settings {
            let key = normalize_key(raw_key);
            let v = value.as_str();
            match key.as_str() {
                "input" => m.input = PathBuf::from(v),
                "out" => m.out = PathBuf::from(v),
                "segments" => t.segments = parse_value(&key, v)?,
                "degree" => t.degree = parse_value(&key, v)?,
                "k" => t.loss.k = parse_value(&key, v)?,
                "lambda" => t.loss.lambda = parse_value(&key, v)?,
                "epochs" => t.epochs = parse_value(&key, v)?,
                "optimizer" => t.optimizer.kind = v.parse::<OptimizerKind>()?,
                "lr" => t.optimizer.learning_rate = parse_value(&key, v)?,
                "momentum" => t.optimizer.momentum = parse_value(&key, v)?,
                "nesterov" => t.optimizer.nesterov = parse_bool(&key, v)?,
                "beta1" => t.optimizer.beta1 = parse_value(&key, v)?,
                "beta2" => t.optimizer.beta2 = parse_value(&key, v)?,
                "epsilon" => t.optimizer.epsilon = parse_value(&key, v)?,
                "regularization" => t.regularization = v.parse::<Regularization>()?,
                "init" => t.init = v.parse::<Init>()?,
                "scaling" => t.scaling = v.parse::<Scaling>()?,
                "boundary-mode" => t.loss.boundary_mode = v.parse::<BoundaryMode>()?,
                "strain-weight" => t.loss.strain_weight = parse_value(&key, v)?,
                "resolution" => m.resolution = parse_value(&key, v)?,
                "record-every" => t.record_every = parse_value(&key, v)?,
                "seed" => m.seed = parse_value(&key, v)?,
                "repair" => m.repair = parse_bool(&key, v)?,
                other => return Err(Error::Config(format!("unknown setting `{other}`"))),
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::Config("no input file given".into()));
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::Config("no output directory given".into()));
        }
        if self.resolution < 2 {
            return Err(Error::Config(format!(
                "resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        self.train.validate()
    }
}

/// Reads `x,y` samples, sorted stably by `x`.
pub fn load_samples(path: &Path) -> Result<SampleSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
        return Err(parse_err(1, format!("expected header `x,y`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| -> Result<f64> {
            let raw = &record[idx];
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, format!("`{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("`{raw}` is not finite")));
            }
            Ok(v)
        };
        pairs.push((field(0)?, field(1)?));
    }
    if pairs.len() < 2 {
        return Err(Error::InvalidSamples(format!(
            "{}: need at least 2 samples, got {}",
            path.display(),
            pairs.len()
        )));
    }
    SampleSet::from_unsorted(pairs)
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut s = String::from("epoch,total,l2,ck,strain\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            fmt_f64(r.loss.total),
            fmt_f64(r.loss.l2),
            fmt_f64(r.loss.ck),
            fmt_f64(r.loss.strain)
        );
    }
    s
}

/// `x, f(x), f'(x), …, f^{(k)}(x)` in original coordinates, `resolution`
/// points per segment with shared breakpoints written once.
pub fn curve_csv(model: &SplineModel, k: usize, resolution: usize) -> Result<String> {
    let mut s = String::from("x,f");
    for j in 1..=k {
        let _ = write!(s, ",d{j}");
    }
    s.push('\n');
    let bps = model.breakpoints();
    let map = model.domain_map();
    for i in 0..model.segments() {
        let first = usize::from(i > 0);
        for step in first..resolution {
            let t = bps[i] + (bps[i + 1] - bps[i]) * step as f64 / (resolution - 1) as f64;
            let x = map.inverse(t);
            s.push_str(&fmt_f64(x));
            for j in 0..=k {
                s.push(',');
                s.push_str(&fmt_f64(model.eval(x, j)?));
            }
            s.push('\n');
        }
    }
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn load_model(path: &Path) -> Result<SplineModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Outcome of one fit written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: TrainingReport,
    pub repair: Option<RepairReport>,
    pub model: SplineModel,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Fits `samples` and writes all outputs into `out`.
pub fn fit_and_write(samples: &SampleSet, train: &TrainConfig, out: &Path, resolution: usize, repair: bool) -> Result<RunOutcome> {
    let report = fit(samples, train)?;
    let (model, repair_report) = if repair {
        let (m, r) = repair_continuity(&report.final_model, train.loss.k, train.loss.boundary_mode)?;
        (m, Some(r))
    } else {
        (report.final_model.clone(), None)
    };
    create_dir(out)?;
    write_json(&out.join("model.json"), &model)?;
    write_file(&out.join("history.csv"), &history_csv(&report.history))?;
    write_file(&out.join("curve.csv"), &curve_csv(&model, train.loss.k, resolution)?)?;
    if let Some(r) = &repair_report {
        write_json(&out.join("repair.json"), r)?;
    }
    if let Some(epoch) = report.diverged_at {
        write_file(&out.join("diverged.txt"), &format!("diverged at epoch {epoch}\n"))?;
    }
    Ok(RunOutcome {
        report,
        repair: repair_report,
        model,
    })
}

fn report_error(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

/// `fit`: train, optionally repair, write outputs. Returns the exit code.
pub fn run(manifest: &RunManifest) -> i32 {
    let result = manifest
        .validate()
        .and_then(|()| load_samples(&manifest.input))
        .and_then(|samples| fit_and_write(&samples, &manifest.train, &manifest.out, manifest.resolution, manifest.repair));
    match result {
        Ok(outcome) => match outcome.report.diverged_at {
            Some(epoch) => {
                eprintln!("error: training diverged at epoch {epoch}");
                exit::DIVERGED
            }
            None => {
                if let Some(loss) = outcome.report.final_loss() {
                    log::info!(
                        "final loss {:.6e} (l2 {:.6e}, ck {:.6e}, strain {:.6e})",
                        loss.total,
                        loss.l2,
                        loss.ck,
                        loss.strain
                    );
                }
                exit::OK
            }
        },
        Err(e) => report_error(&e),
    }
}

/// Directory names for a λ sweep; repeated values get `_2`, `_3`, … suffixes.
pub fn sweep_dir_names(lambdas: &[f64]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    lambdas
        .iter()
        .map(|l| {
            let base = format!("lambda_{l}");
            let count = seen.entry(base.clone()).or_insert(0);
            *count += 1;
            if *count == 1 {
                base
            } else {
                format!("{base}_{count}")
            }
        })
        .collect()
}

/// `sweep`: one fit per λ, each in its own subdirectory, plus
/// `summary.csv`. Every fit is followed by a continuity repair when the
/// degree allows it.
pub fn sweep(manifest: &RunManifest, lambdas: &[f64]) -> i32 {
    if lambdas.is_empty() {
        return report_error(&Error::Config("empty lambda list".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return report_error(&Error::Config(format!("lambda {bad} outside [0, 1]")));
    }
    let prepared = manifest.validate().and_then(|()| load_samples(&manifest.input));
    let samples = match prepared {
        Ok(s) => s,
        Err(e) => return report_error(&e),
    };
    let names = sweep_dir_names(lambdas);
    let repair = manifest.train.degree >= 2 * manifest.train.loss.k + 1;
    let outcomes: Vec<Result<RunOutcome>> = lambdas
        .par_iter()
        .zip(names.par_iter())
        .map(|(&lambda, name)| {
            let mut train = manifest.train;
            train.loss.lambda = lambda;
            fit_and_write(&samples, &train, &manifest.out.join(name), manifest.resolution, repair)
        })
        .collect();

    let mut summary = String::from("lambda,dir,total,l2,ck,post_repair_max_defect,diverged_at\n");
    let mut code = exit::OK;
    for ((lambda, name), outcome) in lambdas.iter().zip(&names).zip(&outcomes) {
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => return report_error(e),
        };
        let last = outcome.report.final_loss().copied().unwrap_or(crate::loss::LossBreakdown {
            total: f64::NAN,
            l2: f64::NAN,
            ck: f64::NAN,
            strain: f64::NAN,
        });
        let defect = outcome.repair.as_ref().map_or(f64::NAN, RepairReport::max_post_defect);
        let diverged = outcome.report.diverged_at.map_or(String::new(), |e| e.to_string());
        if outcome.report.diverged() {
            code = exit::DIVERGED;
        }
        let _ = writeln!(
            summary,
            "{lambda},{name},{},{},{},{},{diverged}",
            fmt_f64(last.total),
            fmt_f64(last.l2),
            fmt_f64(last.ck),
            fmt_f64(defect)
        );
    }
    if let Err(e) = write_file(&manifest.out.join("summary.csv"), &summary) {
        return report_error(&e);
    }
    code
}

/// `repair`: loads a model, repairs it and writes `model.json`,
/// `repair.json` and `curve.csv` into `out`.
pub fn repair_command(model_path: &Path, k: usize, mode: BoundaryMode, out: &Path, resolution: usize) -> i32 {
    let result = (|| -> Result<()> {
        if resolution < 2 {
            return Err(Error::Config(format!("resolution must be at least 2, got {resolution}")));
        }
        let model = load_model(model_path)?;
        let (repaired, report) = repair_continuity(&model, k, mode)?;
        create_dir(out)?;
        write_json(&out.join("model.json"), &repaired)?;
        write_json(&out.join("repair.json"), &report)?;
        write_file(&out.join("curve.csv"), &curve_csv(&repaired, k, resolution)?)
    })();
    match result {
        Ok(()) => exit::OK,
        Err(e) => report_error(&e),
    }
}

/// `eval`: writes `curve.csv` for a stored model, or prints rows for the
/// given abscissae when `at` is non-empty.
pub fn eval_command(model_path: &Path, k: usize, at: &[f64], out: Option<&Path>, resolution: usize) -> i32 {
    let result = (|| -> Result<()> {
        if resolution < 2 {
            return Err(Error::Config(format!("resolution must be at least 2, got {resolution}")));
        }
        let model = load_model(model_path)?;
        if !at.is_empty() {
            for &x in at {
                let row: Vec<String> = std::iter::once(Ok(fmt_f64(x)))
                    .chain((0..=k).map(|j| model.eval(x, j).map(fmt_f64)))
                    .collect::<Result<_>>()?;
                println!("{}", row.join(","));
            }
        }
        if let Some(out) = out {
            create_dir(out)?;
            write_file(&out.join("curve.csv"), &curve_csv(&model, k, resolution)?)?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => exit::OK,
        Err(e) => report_error(&e),
    }
}
