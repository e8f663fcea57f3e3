use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paritylab::experiments::{
    run_bound, run_mnist_parity, run_synthetic_separation, run_theory_suite, ExperimentConfig, ExperimentKind,
    RunArtifact,
};
use paritylab::Error;

#[derive(Parser)]
#[command(name = "paritylab", about = "Sparse-parity separation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trained network against random-feature baselines on synthetic parity.
    Synthetic(Common),
    /// Digit-strip parity on IDX files found under `mnist_dir`.
    Mnist(Common),
    /// Run every theory check at its pinned parameters.
    Verify(Common),
    /// Evaluate the random-feature hardness bound.
    Bound(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_parser = ["exact", "mc"])]
    mode: Option<String>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
        let mut c = ExperimentConfig::for_kind(kind);
        if let Some(path) = &self.config {
            c.apply_file(path)?;
            c.kind = kind;
        }
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(key, value)?;
        }
        let flags: [(&str, Option<String>); 8] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("n", self.n.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("q", self.q.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("mc_samples", self.mc_samples.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, &v)?;
            }
        }
        Ok(c)
    }
}

fn report_artifact(artifact: RunArtifact) -> Result<bool, Error> {
    println!("{}", serde_json::to_string_pretty(&artifact.summary)?);
    println!("artifacts: {}", artifact.dir.display());
    Ok(artifact.passed.unwrap_or(true))
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Synthetic(a) => report_artifact(run_synthetic_separation(&a.resolve(ExperimentKind::Synthetic)?)?),
        Command::Mnist(a) => report_artifact(run_mnist_parity(&a.resolve(ExperimentKind::Mnist)?)?),
        Command::Verify(a) => {
            let config = a.resolve(ExperimentKind::Verify)?;
            let report = run_theory_suite(&config)?;
            for c in &report.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                let role = if c.asserted { "" } else { " (informational)" };
                println!("{status} {}{role}{}", c.name, c.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default());
            }
            println!("report: {}", config.run_dir().join("theory_report.json").display());
            Ok(report.all_passed)
        }
        Command::Bound(a) => {
            let config = a.resolve(ExperimentKind::Bound)?;
            let report = run_bound(&config)?;
            if let Some(w) = &report.warning {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
