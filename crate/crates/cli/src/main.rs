use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ifrt_core::experiment::{emit_report, run_experiment, ExperimentConfig, ExperimentKind};
use ifrt_core::{load_csv, Error, ErrorKind, Schema};

const WORKERS_ENV: &str = "IFRT_WORKERS";

#[derive(Parser)]
#[command(name = "ifrt", version, about = "Fairness-regularized logistic regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stratified k-fold cross-validation.
    Iid(RunArgs),
    /// Source/target covariate-shift run with per-epoch traces.
    CovariateShift(RunArgs),
    /// Run whatever kind the config (or a previous manifest) names.
    Run(RunArgs),
    /// Load the config, schema and dataset without training.
    ValidateConfig(RunArgs),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    lr_train: Option<f64>,
    #[arg(long)]
    lr_tune: Option<f64>,
    #[arg(long)]
    tol_train: Option<f64>,
    #[arg(long)]
    tol_tune: Option<f64>,
    /// Produce Tukey tables for every metric.
    #[arg(long)]
    tukey_all: bool,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut c = ExperimentConfig::from_file(&self.config)?;
        if let Some(v) = self.alpha {
            c.train.alpha = v;
        }
        if let Some(v) = self.delta {
            c.kernel.delta = v;
        }
        if let Some(v) = self.sigma {
            c.selection.sigma = v;
        }
        if let Some(v) = self.seed {
            c.train.seed = v;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.max_epochs {
            c.train.max_epochs = v;
        }
        if let Some(v) = self.lr_train {
            c.train.lr_train = v;
        }
        if let Some(v) = self.lr_tune {
            c.train.lr_tune = v;
        }
        if let Some(v) = self.tol_train {
            c.train.tol_train = v;
        }
        if let Some(v) = self.tol_tune {
            c.train.tol_tune = v;
        }
        if self.tukey_all {
            c.tukey_all = true;
        }
        if let Some(out) = &self.out {
            c.output = std::path::absolute(out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (args, expected) = match &cli.command {
        Command::Iid(a) => (a, Some(ExperimentKind::IidCv)),
        Command::CovariateShift(a) => (a, Some(ExperimentKind::CovariateShift)),
        Command::Run(a) | Command::ValidateConfig(a) => (a, None),
    };
    let config = args.load()?;
    if let Some(kind) = expected {
        if config.kind != kind {
            return Err(Error::Config(format!(
                "{} declares kind = \"{}\"",
                args.config.display(),
                config.kind
            )));
        }
    }
    if let Command::ValidateConfig(_) = cli.command {
        let schema = Schema::from_file(&config.schema)?;
        let data = load_csv(&config.dataset, &schema)?;
        let specs = ifrt_core::experiment::select_specs(&schema, &data, &config.sensitive)?;
        println!("kind: {}", config.kind);
        println!("rows: {}, features: {}, positives: {}", data.n(), data.m(), data.positives());
        let names: Vec<_> = config.variants.iter().map(|v| v.as_str()).collect();
        println!("variants: {}", names.join(", "));
        let names: Vec<_> = specs.iter().map(|s| s.name()).collect();
        println!("sensitive: {}", names.join(", "));
        println!("output: {}", config.output.display());
        return Ok(());
    }
    let report = run_experiment(&config)?;
    let written = emit_report(&report, &config.output)?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
