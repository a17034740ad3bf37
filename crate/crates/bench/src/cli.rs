use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use tcq_core::SurvivorRule;

use crate::config::{ExperimentConfig, KMode, Overrides, RateModeKind};
use crate::error::{BenchError, Result};
use crate::{experiment, report};

#[derive(Debug, Parser)]
#[command(name = "tcq-bench", version, about = "Dependent quantization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Suppress timestamps and wall-clock columns.
    #[arg(long, global = true)]
    pub reproducible: bool,

    #[arg(long, global = true, value_enum)]
    pub rate_mode: Option<RateModeKind>,

    #[arg(long, global = true)]
    pub k_factor: Option<f64>,

    #[arg(long, global = true, value_enum)]
    pub k_mode: Option<KMode>,

    #[arg(long, global = true, value_enum)]
    pub prune: Option<Switch>,

    #[arg(long, global = true)]
    pub rice_g: Option<u32>,

    #[arg(long, global = true)]
    pub phi: Option<f64>,

    #[arg(long, global = true, hide = true)]
    pub corrupt_survivor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit the block rate model per QP.
    Fit,
    /// Compare full and accelerated search.
    Bench,
    /// Check the trellis against exhaustive search.
    Oracle,
    /// Tabulate the closed-form source statistics.
    Stats,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            rate_mode: self.rate_mode,
            k_factor: self.k_factor,
            k_mode: self.k_mode,
            pruning: self.prune.map(|s| s == Switch::On),
            rice_g: self.rice_g,
            phi: self.phi,
        }
    }

    pub fn load_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&self.overrides())?;
        Ok(cfg)
    }
}

/// Runs one verb, writing a short summary to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = cli.load_config()?;
    let dir = &cli.out_dir;
    let say = |out: &mut dyn Write, line: String| {
        let _ = writeln!(out, "{line}");
    };
    match cli.command {
        Command::Fit => {
            let r = experiment::run_fit(&cfg, cli.reproducible)?;
            for f in &r.fits {
                say(
                    out,
                    format!(
                        "qp {:>3}  alpha {:.4}  beta {:.4}  gamma {:.4}  epsilon {:.4}  r2 {:.4}",
                        f.qp, f.alpha, f.beta, f.gamma, f.epsilon, f.r_squared
                    ),
                );
            }
            report::emit_fit(&r, dir)?;
        }
        Command::Bench => {
            let r = experiment::run_bench(&cfg, cli.reproducible)?;
            for c in &r.cells {
                say(
                    out,
                    format!(
                        "qp {:>3} sigma {} {}x{}  cost delta {:+.4}%  branch savings {:.2}%",
                        c.qp,
                        c.sigma,
                        c.width,
                        c.height,
                        100.0 * c.rel_cost_delta,
                        100.0 * c.branch_savings
                    ),
                );
            }
            report::emit_bench(&r, dir)?;
        }
        Command::Oracle => {
            let survivor = if cli.corrupt_survivor {
                SurvivorRule::Inverted
            } else {
                SurvivorRule::MinCost
            };
            let r = experiment::run_oracle(&cfg, survivor, cli.reproducible)?;
            report::emit_oracle(&r, dir)?;
            say(out, format!("{} draws, {} mismatches, max relative error {:e}", r.draws, r.mismatches, r.max_rel_error));
            if let Some(cx) = &r.counterexample {
                say(out, "first counterexample:".into());
                say(out, report::toml_string(cx));
                return Err(BenchError::Verify(format!("{} of {} draws disagree with exhaustive search", r.mismatches, r.draws)));
            }
        }
        Command::Stats => {
            let r = experiment::run_stats(&cfg, cli.reproducible)?;
            let worst = r.rows.iter().map(|row| row.max_rel_error).fold(0.0, f64::max);
            say(out, format!("{} rows, worst closed-form vs integral gap {:e}", r.rows.len(), worst));
            report::emit_stats(&r, dir)?;
        }
    }
    Ok(())
}
