use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kdpp_cli::experiments::{
    diagonal_inclusion, doubling_ladder, ensemble_inclusion, esp_report, inference_experiment,
    rates_experiment, sample_many, Reference, ESP_RATIO_BAND, GAP_TOLERANCE, SLOPE_BASIC_BAND,
    SLOPE_CORRECTED_BAND,
};
use kdpp_cli::{RunConfig, Source, SpectrumKind};
use kdpp_core::diagonal::ConditionalRule;
use kdpp_core::esp::EspMethod;
use kdpp_core::numeric::log_grid;

/// k-DPP saddlepoint experiments. Floats are written with 17 significant
/// digits; item indices are 1-based.
#[derive(Parser)]
#[command(name = "kdpp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact vs saddlepoint log-ESPs, plus the unscaled recurrence.
    Esp(EspArgs),
    /// Exact (or Monte Carlo) inclusion probabilities vs the estimates.
    Inclusion(InclusionArgs),
    /// Error decay of the basic and corrected estimates with n.
    Rates(RatesArgs),
    /// Draw k-DPP samples, one sorted subset per line.
    Sample(SampleArgs),
    /// k-DPP and profile DPP likelihood curves over a bandwidth grid.
    Infer(InferArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 if the acceptance band is violated.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct SourceArgs {
    /// linear | exp_decay | exp_decay10 | uniform:LO:HI | gaussian | from_file:PATH
    #[arg(long, default_value = "linear")]
    spectrum: SpectrumKind,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Kernel bandwidth for gaussian ensembles.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Point cloud CSV, one point per row, no header.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// L-ensemble CSV, one row per line, no header.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct EspArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Args)]
struct InclusionArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    source: SourceArgs,
    /// Defaults to n/5.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Number of random subsets when m > 1.
    #[arg(long, default_value_t = 100)]
    subsets: usize,
    /// Monte Carlo draws when enumeration is too large.
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
}

#[derive(Args)]
struct RatesArgs {
    #[command(flatten)]
    common: Common,
    /// Largest n; the ladder doubles from 25.
    #[arg(long, default_value_t = 800)]
    n: usize,
    /// Random spectra per n.
    #[arg(long, default_value_t = 20)]
    reps: u32,
    #[arg(long, default_value_t = 1.0)]
    lo: f64,
    #[arg(long, default_value_t = 10.0)]
    hi: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Auto,
    Exact,
    Corrected,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    draws: usize,
    /// Conditional rule of the eigenvalue step.
    #[arg(long, value_enum, default_value_t = RuleArg::Auto)]
    rule: RuleArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum EspArg {
    Auto,
    Exact,
    Saddle,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Defaults to n/10.
    #[arg(long)]
    k: Option<usize>,
    /// True bandwidth used to draw the observed set.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Defaults to tau/10.
    #[arg(long)]
    grid_lo: Option<f64>,
    /// Defaults to 10·tau.
    #[arg(long)]
    grid_hi: Option<f64>,
    #[arg(long, default_value_t = 40)]
    grid_points: usize,
    /// ESP used in the k-DPP likelihood.
    #[arg(long, value_enum, default_value_t = EspArg::Auto)]
    esp: EspArg,
    /// Point cloud CSV instead of a random cloud.
    #[arg(long)]
    cloud: Option<PathBuf>,
}

fn config(common: &Common, source: &SourceArgs) -> RunConfig {
    RunConfig {
        seed: common.seed,
        n: source.n,
        tau: source.tau,
        spectrum: source.spectrum.clone(),
        cloud: source.cloud.clone(),
        matrix: source.matrix.clone(),
        out: common.out.clone(),
        check: common.check,
        ..RunConfig::default()
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `Ok(true)` when the check passed or was not requested.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Esp(a) => {
            let cfg = config(&a.common, &a.source);
            let report = esp_report(cfg.source()?.spectrum());
            let mut w = output(&cfg.out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            let worst = report.worst_ratio();
            eprintln!("worst ratio {worst:.6} over k < {}", report.positive);
            match report.first_overflow {
                Some(k) => eprintln!("unscaled recurrence overflows at k={k}"),
                None => eprintln!("unscaled recurrence stays finite"),
            }
            if let Some(k) = report.first_underflow {
                eprintln!("unscaled recurrence underflows at k={k}");
            }
            Ok(!cfg.check || (worst <= ESP_RATIO_BAND && report.all_finite()))
        }
        Command::Inclusion(a) => {
            let cfg = RunConfig {
                k: a.k,
                m: a.m,
                ..config(&a.common, &a.source)
            };
            let source = cfg.source()?;
            let k = cfg.k_or(source.n() / 5);
            let mut report = match &source {
                Source::Diagonal(s) => diagonal_inclusion(s, k, cfg.m, a.subsets, cfg.seed)?,
                Source::Ensemble(e) => {
                    let mut r = ensemble_inclusion(e, k, cfg.m, a.subsets, a.draws, cfg.seed)?;
                    r.sort_by_reference();
                    r
                }
            };
            if matches!(source, Source::Diagonal(_)) && cfg.m > 1 {
                report.sort_by_reference();
            }
            let mut w = output(&cfg.out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            match report.reference {
                Reference::Exact => eprintln!("reference: exact"),
                Reference::MonteCarlo { draws } => eprintln!("reference: monte carlo, {draws} draws"),
            }
            eprintln!(
                "max error basic {:.3e}, corrected {:.3e}; mean abs deviation basic {:.3e}, corrected {:.3e}",
                report.max_err_basic(),
                report.max_err_corrected(),
                report.mean_abs_dev_basic(),
                report.mean_abs_dev_corrected()
            );
            if let Some(hit) = report.corrected_covered(3.0) {
                eprintln!("corrected within 3 sigma: {hit}/{}", report.rows.len());
            }
            Ok(!cfg.check || report.passes())
        }
        Command::Rates(a) => {
            let seed = a.common.seed.context("--seed is required for rates")?;
            let ns = doubling_ladder(25, a.n);
            let report = rates_experiment(&ns, a.reps, a.lo, a.hi, seed)?;
            let mut w = output(&a.common.out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            eprintln!(
                "slope basic {:.4} (band {:?}), corrected {:.4} (band {:?})",
                report.slope_basic, SLOPE_BASIC_BAND, report.slope_corrected, SLOPE_CORRECTED_BAND
            );
            Ok(!a.common.check || report.within_bands())
        }
        Command::Sample(a) => {
            let cfg = config(&a.common, &a.source);
            let seed = cfg.require_seed("sampling")?;
            let source = cfg.source()?;
            let rule = match a.rule {
                RuleArg::Auto => ConditionalRule::auto(source.n()),
                RuleArg::Exact => ConditionalRule::Exact,
                RuleArg::Corrected => ConditionalRule::Corrected,
            };
            let samples = sample_many(&source, a.k, a.draws, rule, seed)?;
            let mut w = output(&cfg.out)?;
            for s in &samples {
                writeln!(w, "{}", s.to_line())?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Infer(a) => {
            let seed = a.common.seed.context("--seed is required for infer")?;
            if !(a.tau > 0.0) {
                bail!("--tau must be positive");
            }
            let cfg = RunConfig {
                seed: Some(seed),
                n: a.n,
                cloud: a.cloud.clone(),
                ..RunConfig::default()
            };
            let cloud = cfg.point_cloud()?;
            let k = a.k.unwrap_or(cloud.len() / 10).max(1);
            let grid = log_grid(
                a.grid_lo.unwrap_or(a.tau / 10.0),
                a.grid_hi.unwrap_or(a.tau * 10.0),
                a.grid_points,
            );
            let method = match a.esp {
                EspArg::Auto => None,
                EspArg::Exact => Some(EspMethod::Exact),
                EspArg::Saddle => Some(EspMethod::Saddlepoint),
            };
            let run = inference_experiment(cloud, k, a.tau, &grid, method, seed)?;
            let mut w = output(&a.common.out)?;
            run.curve.write_csv(&mut w)?;
            w.flush()?;
            let c = &run.curve;
            eprintln!(
                "argmax tau: k-DPP {} (index {}), DPP profile {} (index {})",
                c.taus[c.argmax_kdpp], c.argmax_kdpp, c.taus[c.argmax_dpp], c.argmax_dpp
            );
            eprintln!(
                "max curve-gap residual {:.3e} (tolerance {GAP_TOLERANCE:.0e}); infeasible points {}",
                c.max_gap_residual(),
                c.feasible.iter().filter(|f| !**f).count()
            );
            Ok(!a.common.check || run.passes())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
