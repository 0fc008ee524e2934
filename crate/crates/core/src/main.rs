use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cade::datasets::write_dataset;
use cade::harness::{self, ExperimentConfig, Replicate};
use cade::models::save_model;
use cade::props::run_suite;
use cade::{CadeError, Result};

/// Counterfactual adversarial examples over structural causal models.
#[derive(Parser)]
#[command(name = "cade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file, or the name of a bundled config.
    #[arg(long)]
    config: String,
    /// Run a single replicate with this seed instead of the config's list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training and test splits as CSV.
    Generate(Common),
    /// Train every victim and save the checkpoints.
    Train(Common),
    /// Run the full attack grid and write the report bundle.
    Attack(Common),
    /// Re-run the grid over another list of budgets.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated budgets.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
    /// Recompute summary files of an existing bundle.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact checks of the discrete-SCM properties on random instances.
    VerifyProps {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match harness::bundled(&c.config) {
        Some(text) => ExperimentConfig::from_toml(text)?,
        None => ExperimentConfig::load(Path::new(&c.config))?,
    };
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn file_name(victim: &str) -> String {
    victim
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CadeError::from(e).context(&dir.display().to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = load_config(&c)?;
            let out = out_dir(&c, &cfg);
            create(&out)?;
            for &seed in &cfg.seeds {
                let (train, test) = harness::generate_split(&cfg, seed)?;
                for (split, ds) in [("train", &train), ("test", &test)] {
                    let path = out.join(format!("{split}_seed{seed}.csv"));
                    write_dataset(ds, &path)?;
                    println!("{} ({} rows)", path.display(), ds.n());
                }
            }
        }
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let out = out_dir(&c, &cfg).join("models");
            create(&out)?;
            for &seed in &cfg.seeds {
                let rep = Replicate::build(&cfg, seed)?;
                for (name, model) in &rep.victims {
                    let path = out.join(format!("{}_seed{seed}.json", file_name(name)));
                    save_model(model, &path)?;
                    println!("{}", path.display());
                }
            }
        }
        Command::Attack(c) => {
            let cfg = load_config(&c)?;
            let bundle = harness::run(&cfg, &out_dir(&c, &cfg))?;
            print!("{}", bundle.summary.to_markdown());
        }
        Command::Sweep { common, eps } => {
            let cfg = load_config(&common)?;
            let bundle = harness::budget_sweep(&cfg, &eps, &out_dir(&common, &cfg))?;
            print!("{}", bundle.summary.to_markdown());
        }
        Command::Report { out } => {
            let bundle = harness::report(&out)?;
            print!("{}", bundle.summary.to_markdown());
        }
        Command::VerifyProps { seed, instances, out } => {
            let suite = run_suite(seed, instances)?;
            let md = suite.to_markdown();
            if let Some(dir) = out {
                create(&dir)?;
                std::fs::write(dir.join("props.md"), &md)?;
                let json = serde_json::to_string_pretty(&suite).expect("suite serializes");
                std::fs::write(dir.join("props.json"), json + "\n")?;
            }
            print!("{md}");
            if !(suite.prop31_passes() && suite.prop32_passes() && suite.prop33_passes()) {
                return Err(CadeError::Numeric("a property check failed".into()));
            }
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("UsageError", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
