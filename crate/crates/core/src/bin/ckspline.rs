use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ckspline::io::{self, exit, RunManifest};
use ckspline::BoundaryMode;

/// Fit C^k-continuous splines by gradient descent.
#[derive(Parser)]
#[command(name = "ckspline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a spline on `x,y` samples and write model, history and curve.
    Fit(RunArgs),
    /// Run one fit per lambda value, plus a summary table.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated lambda values, e.g. `1,0.5,0`.
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
    },
    /// Remove continuity defects of a stored model.
    Repair {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "open")]
        boundary_mode: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        resolution: usize,
    },
    /// Evaluate a stored model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Highest derivative order to output.
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Abscissae to print, comma-separated.
        #[arg(long, value_delimiter = ',')]
        at: Vec<f64>,
        /// Directory for `curve.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        resolution: usize,
    },
}

/// Run settings. Values given here override those from `--config`.
#[derive(Args)]
struct RunArgs {
    /// Flat key=value file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    segments: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// sgd, adam, adamax or amsgrad
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    nesterov: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// none or degree_based
    #[arg(long)]
    regularization: Option<String>,
    /// zeros or least_squares
    #[arg(long)]
    init: Option<String>,
    /// none or unit_segments
    #[arg(long)]
    scaling: Option<String>,
    /// open, cyclic or periodic
    #[arg(long)]
    boundary_mode: Option<String>,
    #[arg(long)]
    strain_weight: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    #[arg(long)]
    record_every: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Repair continuity after training.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    repair: Option<String>,
}

impl RunArgs {
    fn manifest(&self) -> ckspline::Result<RunManifest> {
        let mut settings = match &self.config {
            Some(path) => io::read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let overrides = [
            ("input", &self.input),
            ("segments", &self.segments),
            ("degree", &self.degree),
            ("k", &self.k),
            ("lambda", &self.lambda),
            ("epochs", &self.epochs),
            ("optimizer", &self.optimizer),
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("nesterov", &self.nesterov),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("epsilon", &self.epsilon),
            ("regularization", &self.regularization),
            ("init", &self.init),
            ("scaling", &self.scaling),
            ("boundary-mode", &self.boundary_mode),
            ("strain-weight", &self.strain_weight),
            ("out", &self.out),
            ("resolution", &self.resolution),
            ("record-every", &self.record_every),
            ("seed", &self.seed),
            ("repair", &self.repair),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                settings.insert(key.to_string(), v.clone());
            }
        }
        RunManifest::from_settings(&settings)
    }
}

fn with_manifest(args: &RunArgs, f: impl FnOnce(&RunManifest) -> i32) -> i32 {
    match args.manifest() {
        Ok(m) => f(&m),
        Err(e) => {
            eprintln!("error: {e}");
            io::exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Fit(args) => with_manifest(&args, io::run),
        Command::Sweep { run, lambdas } => with_manifest(&run, |m| io::sweep(m, &lambdas)),
        Command::Repair {
            model,
            k,
            boundary_mode,
            out,
            resolution,
        } => match boundary_mode.parse::<BoundaryMode>() {
            Ok(mode) => io::repair_command(&model, k, mode, &out, resolution),
            Err(e) => {
                eprintln!("error: {e}");
                exit::CONFIG
            }
        },
        Command::Eval {
            model,
            k,
            at,
            out,
            resolution,
        } => io::eval_command(&model, k, &at, out.as_deref(), resolution),
    };
    ExitCode::from(code as u8)
}
