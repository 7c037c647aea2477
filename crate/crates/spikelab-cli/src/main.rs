use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spikelab::checks::{CheckName, CheckReport};
use spikelab::harness::{self, ExperimentConfig, LawsConfig, Status};
use spikelab::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "spikelab", version, about = "Monte Carlo laboratory for spiked sample covariance matrices")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for report.json and tables/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trials per check; overrides the configuration.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the closed-form laws and check their exactness.
    Laws,
    /// Record leading eigenvalues and spike overlaps for one ensemble.
    Simulate,
    /// Run one check by name, or every configured check with `all`.
    Check { name: String },
    /// Outlier-detachment fraction over a grid of spike strengths or aspect ratios.
    Sweep,
    /// Estimate spikes from a spectrum or data CSV.
    Infer {
        /// Overrides `infer.input`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare two entry laws at fixed indices.
    Universality,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
            harness::parse_config(&text)?
        }
        None => ExperimentConfig::new(None),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("spikelab-out"))
}

fn print_check(r: &CheckReport) {
    let tag = if r.pass { "PASS" } else { "FAIL" };
    println!("{tag} {:<28} statistic {:.6e} bound {:.6e}", r.name, r.statistic, r.bound);
    for c in r.criteria.iter().filter(|c| !c.pass) {
        println!("     {:<40} {:.6e} outside [{:?}, {:?}]", c.name, c.statistic, c.lower, c.upper);
    }
}

fn run(cli: &Cli) -> Result<Status> {
    let cfg = load(cli)?;
    let dir = out_dir(cli, &cfg);
    match &cli.command {
        Command::Laws => {
            let mut rep = harness::analytics(&cfg.laws.clone().unwrap_or_else(LawsConfig::default))?;
            rep.table = Some("tables/laws.csv".into());
            let tables = vec![("laws".to_string(), rep.rows.clone())];
            harness::write_outputs(&dir, &rep, &tables)?;
            print_check(&rep);
            Ok(Status::from_pass(rep.pass))
        }
        Command::Simulate => {
            let (rep, dump) = harness::simulate(&cfg)?;
            harness::write_outputs(&dir, &rep, &[("simulate".to_string(), rep.rows.clone())])?;
            if let Some(bytes) = dump {
                std::fs::write(dir.join("draw.bin"), bytes)?;
            }
            println!("simulated {} trials; mean leading eigenvalues {:?}", rep.trials, rep.mean_eigenvalues);
            Ok(Status::Pass)
        }
        Command::Check { name } => {
            let names = harness::select_checks(name, &cfg)?;
            finish_checks(&dir, harness::run_checks(&cfg, &names, "check")?)
        }
        Command::Universality => finish_checks(&dir, harness::run_checks(&cfg, &[CheckName::UniversalityPair], "universality")?),
        Command::Sweep => {
            let rep = harness::run_sweep(&cfg)?;
            harness::write_outputs(&dir, &rep, &[("sweep".to_string(), rep.rows.clone())])?;
            for p in &rep.points {
                println!("{:>10.4} fraction {:.4} median mu_1 {:.6}", p.value, p.fraction, p.median_mu1);
            }
            for c in &rep.criteria {
                println!("{} {} {:.6e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.statistic);
            }
            Ok(Status::from_pass(rep.pass))
        }
        Command::Infer { input } => {
            let path = match (input, &cfg.infer) {
                (Some(p), _) => p.display().to_string(),
                (None, Some(ic)) => ic.input.clone(),
                (None, None) => return Err(Error::config("infer", "missing infer section")),
            };
            let rep = harness::infer(&cfg, &path)?;
            harness::write_outputs(&dir, &rep, &[("infer".to_string(), rep.rows.clone())])?;
            for s in &rep.spikes {
                let e = &s.estimate;
                println!("eigenvalue {} -> d_hat {:.6} +- {:.2e}", e.index, e.d_hat, e.stderr);
            }
            for note in &rep.notes {
                println!("note: {note}");
            }
            Ok(Status::Pass)
        }
    }
}

fn finish_checks(dir: &std::path::Path, mut rep: harness::ExperimentReport) -> Result<Status> {
    for c in &mut rep.checks {
        c.table = Some(format!("tables/{}.csv", c.name));
    }
    harness::write_outputs(dir, &rep, &rep.tables())?;
    rep.checks.iter().for_each(print_check);
    Ok(rep.status())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match run(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            Status::Error
        }
    };
    ExitCode::from(status.code() as u8)
}
