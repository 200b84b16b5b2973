use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seki::error::SekiError;
use seki::experiments::{self, ExperimentConfig, ExperimentKind, SolverName};

#[derive(Parser)]
#[command(name = "seki", version, about = "Subgradient ensemble Kalman inversion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its traces and summary.
    Run(RunArgs),
    /// Run the CT and CS experiments and write figure series.
    Figures(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["ct", "cs", "validate"])]
    experiment: Option<String>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated: seki_f, subgd, ista.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<String>>,
    /// Dotted `key=value` config overrides, applied in order.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// CT image side.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// CS signal dimension.
    #[arg(long)]
    d: Option<usize>,
    /// CS number of measurements.
    #[arg(long = "K")]
    measurements: Option<usize>,
    /// CS sparsity.
    #[arg(long = "s")]
    sparsity: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    /// Ensemble size `J` for the selected experiment.
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// Iteration budget `K` for the selected experiment.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    burn_ins: Option<Vec<usize>>,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, SekiError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SekiError::invalid("config", format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    cfg = cfg.with_overrides(&args.overrides)?;
    if let Some(e) = &args.experiment {
        cfg.experiment = match e.as_str() {
            "ct" => ExperimentKind::Ct,
            "cs" => ExperimentKind::Cs,
            _ => ExperimentKind::Validate,
        };
    }
    if let Some(v) = args.scale {
        cfg.scale = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(list) = &args.solvers {
        cfg.solvers = list.iter().map(|s| SolverName::parse(s)).collect::<Result<_, _>>()?;
    }
    let ct = &mut cfg.ct;
    ct.n = args.n.unwrap_or(ct.n);
    ct.angles = args.angles.unwrap_or(ct.angles);
    ct.bins = args.bins.unwrap_or(ct.bins);
    let cs = &mut cfg.cs;
    cs.d = args.d.unwrap_or(cs.d);
    cs.measurements = args.measurements.unwrap_or(cs.measurements);
    cs.sparsity = args.sparsity.unwrap_or(cs.sparsity);
    if let Some(r) = &args.rho {
        cs.rho = r.clone();
    }
    let is_cs = cfg.experiment == ExperimentKind::Cs;
    if let Some(j) = args.ensemble_size {
        if is_cs { cfg.cs.ensemble_size = j } else { cfg.ct.ensemble_size = j }
    }
    if let Some(k) = args.iterations {
        if is_cs { cfg.cs.iterations = k } else { cfg.ct.iterations = k }
    }
    if let Some(kb) = &args.burn_ins {
        if is_cs { cfg.cs.burn_ins = kb.clone() } else { cfg.ct.burn_ins = kb.clone() }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(err: &SekiError) -> ExitCode {
    eprintln!("seki: {err}");
    match err {
        SekiError::Numerical(_) => ExitCode::from(3),
        SekiError::Io(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (args, figures) = match &cli.command {
        Command::Run(a) => (a, false),
        Command::Figures(a) => (a, true),
    };
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let result = if figures {
        let scale = args.scale.unwrap_or(0.25);
        experiments::reproduce_figures(&cfg, scale).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        })
    } else {
        experiments::run(&cfg).map(|outcome| {
            if let Some(v) = &outcome.validation {
                print!("{}", v.to_csv());
                if !v.all_pass() {
                    eprintln!("seki: some validation checks failed");
                }
            } else {
                print!("{}", experiments::summary_csv(&outcome));
            }
        })
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}
