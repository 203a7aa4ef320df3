mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use obfair::experiment::CounterfactualMode;
use obfair::{BasisRule, Method};

use config::{parse_named, Generator, PipelineConfig, TransformMethod};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "obfair",
    version,
    about = "Orthogonal-to-bias pre-processing for counterfactually fair prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset: CSV, JSON sidecar and noise CSV.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_named::<Generator>)]
        generator: Option<Generator>,
        /// Number of rows.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit OB or SOB on a dataset and write the processed features.
    Transform {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_parser = parse_named::<TransformMethod>)]
        method: Option<TransformMethod>,
    },
    /// Train every selected method and write metrics as JSON and TSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Generate data in memory instead of reading `--input`.
        #[arg(long, value_parser = parse_named::<Generator>)]
        generator: Option<Generator>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Loan experiment over a grid of beta_E values, averaged over seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Collect metrics JSON files into one TSV table.
    Report {
        /// Files written by `evaluate`.
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV, or a train and a test CSV.
    #[arg(long, num_args = 1..=2)]
    input: Option<Vec<PathBuf>>,
    /// Counterfactual copy of the test CSV.
    #[arg(long)]
    counterfactual: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    sensitive: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    categorical: Option<Vec<String>>,
    #[arg(long)]
    outcome: Option<String>,
    /// Training fraction when a single CSV is given.
    #[arg(long)]
    split: Option<f64>,
}

#[derive(Args)]
struct ModelArgs {
    /// Comma-separated, e.g. `ML,FTU,OB1,OB2`.
    #[arg(long, value_delimiter = ',', value_parser = |s: &str| s.parse::<Method>().map_err(|e| e.to_string()))]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    k: Option<usize>,
    /// `l1` budget for SOB.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_parser = parse_named::<BasisRule>)]
    basis: Option<BasisRule>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long, value_parser = parse_named::<CounterfactualMode>)]
    cf_mode: Option<CounterfactualMode>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::load(self.config.as_deref())?;
        set(&mut cfg.out, self.out.clone());
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        Ok(cfg)
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        set(&mut cfg.input, self.input);
        if self.counterfactual.is_some() {
            cfg.counterfactual = self.counterfactual;
        }
        set(&mut cfg.sensitive, self.sensitive);
        set(&mut cfg.categorical, self.categorical);
        if self.outcome.is_some() {
            cfg.outcome = self.outcome;
        }
        set(&mut cfg.split, self.split);
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        let e = &mut cfg.experiment;
        set(&mut e.methods, self.methods);
        if self.k.is_some() {
            e.k = self.k;
        }
        if self.h.is_some() {
            e.h = self.h;
        }
        set(&mut e.eta, self.eta);
        set(&mut e.max_iters, self.max_iters);
        set(&mut e.basis, self.basis);
        set(&mut e.ridge, self.ridge);
        if self.cf_mode.is_some() {
            e.cf_mode = self.cf_mode;
        }
    }
}

fn set_n(cfg: &mut PipelineConfig, n: Option<usize>) {
    if let Some(n) = n {
        cfg.loan.n = n;
        cfg.cont_y.n = n;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, generator, n } => {
            let mut cfg = common.load()?;
            if generator.is_some() {
                cfg.generator = generator;
            }
            set_n(&mut cfg, n);
            commands::generate(cfg)
        }
        Command::Transform {
            common,
            data,
            model,
            method,
        } => {
            let mut cfg = common.load()?;
            data.apply(&mut cfg);
            model.apply(&mut cfg);
            set(&mut cfg.transform, method);
            commands::transform(cfg)
        }
        Command::Evaluate {
            common,
            data,
            model,
            generator,
            n,
        } => {
            let mut cfg = common.load()?;
            data.apply(&mut cfg);
            model.apply(&mut cfg);
            if generator.is_some() {
                cfg.generator = generator;
            }
            set_n(&mut cfg, n);
            commands::evaluate(cfg)
        }
        Command::Sweep {
            common,
            model,
            grid,
            seeds,
            n,
        } => {
            let mut cfg = common.load()?;
            model.apply(&mut cfg);
            set(&mut cfg.grid, grid);
            set(&mut cfg.seeds, seeds);
            set_n(&mut cfg, n);
            commands::sweep(cfg)
        }
        Command::Report { input, out } => commands::report(&input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
