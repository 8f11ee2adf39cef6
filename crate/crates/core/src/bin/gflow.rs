use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gflow::harness::{self, ExperimentConfig};
use gflow::schedule::fmt12;
use gflow::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NO_ADMISSIBLE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "gflow", version, about = "Closed-form gradient flow on symmetric matrix factorization")]
struct Cli {
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `outputs` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write trajectory CSVs, one per alpha.
    Solve,
    /// Write schedule reports, one per alpha.
    Schedule,
    /// Check the interval guarantee for every admissible alpha.
    Verify,
    /// Tabulate transition times against alpha.
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(EXIT_USAGE);
    };
    let cfg = match ExperimentConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.outputs.clone());
    match run(&cli, &cfg, &out) {
        Ok(code) => code,
        Err(Error::NoAdmissibleAlpha) => {
            eprintln!("error: no admissible alpha");
            ExitCode::from(EXIT_NO_ADMISSIBLE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig, out: &std::path::Path) -> gflow::Result<ExitCode> {
    let say = |msg: String| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    match cli.command {
        Command::Solve => {
            for r in harness::run_solve(cfg, out)? {
                let dev = r
                    .dev_oracle
                    .as_ref()
                    .map(|d| format!(" max dev_oracle {}", fmt12(d.iter().fold(0.0_f64, |m, v| m.max(*v)))))
                    .unwrap_or_default();
                say(format!("wrote {} ({} samples){dev}", r.path.display(), r.samples.len()));
            }
        }
        Command::Schedule => {
            for r in harness::run_schedule(cfg, out)? {
                say(format!(
                    "alpha {}: admissible {} ({})",
                    harness::alpha_tag(r.alpha),
                    r.alpha_admissible,
                    r.reason
                ));
            }
        }
        Command::Verify => {
            let outcome = harness::run_verify(cfg, out)?;
            for v in &outcome.verifications {
                say(format!(
                    "alpha {}: {}",
                    harness::alpha_tag(v.alpha),
                    if v.overall { "pass" } else { "FAIL" }
                ));
            }
            if !outcome.all_pass() {
                eprintln!("error: interval guarantee violated");
                return Ok(ExitCode::from(EXIT_INTERNAL));
            }
        }
        Command::Sweep => {
            let s = harness::run_sweep(cfg, out)?;
            if let Some(slopes) = &s.slopes {
                for (i, slope) in slopes.iter().enumerate() {
                    say(format!("mode {}: slope of t50 vs ln(1/alpha) = {}", i + 1, fmt12(*slope)));
                }
            }
            say(format!("wrote {}", out.join("sweep.csv").display()));
        }
    }
    Ok(ExitCode::SUCCESS)
}
