use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use isacsim::experiments::config::parse_weights;
use isacsim::experiments::output::{
    write_points, write_summary, write_traces, write_validation, RunMeta, GIT_DESCRIBE,
};
use isacsim::experiments::sweep::pareto_violations;
use isacsim::experiments::{
    convergence_trace, power_report, rician_sweep, summarize, tradeoff_sweep, validate, Fault, Scenario,
    SummaryRow, SystemConfig, TradeoffPoint,
};
use isacsim::metrics::{Band, DuplexMode};

#[derive(Parser)]
#[command(version, about = "Sensing/communication tradeoff experiments for bidirectional ISAC links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true, default_value = "configs/desk.json")]
    config: PathBuf,
    /// Output directory for the CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Duplex modes, e.g. `full,half`.
    #[arg(long, global = true, value_delimiter = ',')]
    modes: Option<Vec<Mode>>,
    /// Bands, e.g. `narrow,wide`.
    #[arg(long, global = true, value_delimiter = ',')]
    band: Option<Vec<BandArg>>,
    /// Weight grid `start:stop:step` or a comma-separated list.
    #[arg(long, global = true)]
    weights: Option<String>,
    /// Channel realizations per point.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Report root CRB in degrees in the summaries (radians otherwise).
    #[arg(long, global = true)]
    degrees: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tradeoff region over the weight grid.
    Tradeoff,
    /// Rate and CRB against the Rician factor.
    Rician,
    /// Communication/sensing power split in both bands.
    Power,
    /// Per-iteration SCA traces.
    Converge,
    /// Oracle checks; exits nonzero on any failure.
    Validate {
        /// Inject a defect that the checks must catch.
        #[arg(long, value_enum, hide = true)]
        inject: Option<Inject>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Half,
}

#[derive(Clone, Copy, ValueEnum)]
enum BandArg {
    Narrow,
    Wide,
}

#[derive(Clone, Copy, ValueEnum)]
enum Inject {
    CrbSign,
    ZfLeak,
}

fn scenario(cli: &Cli) -> Result<Scenario> {
    let mut config = SystemConfig::load(&cli.config)?;
    let sweep = &mut config.sweep;
    if let Some(seed) = cli.seed {
        sweep.master_seed = seed;
    }
    if let Some(modes) = &cli.modes {
        sweep.modes = modes
            .iter()
            .map(|m| match m {
                Mode::Full => DuplexMode::Full,
                Mode::Half => DuplexMode::Half,
            })
            .collect();
    }
    if let Some(bands) = &cli.band {
        sweep.bands = bands
            .iter()
            .map(|b| match b {
                BandArg::Narrow => Band::Narrow,
                BandArg::Wide => Band::Wide,
            })
            .collect();
    }
    if let Some(w) = &cli.weights {
        let w = parse_weights(w)?;
        sweep.rician_weights = w.clone();
        sweep.weights = w;
    }
    if let Some(t) = cli.trials {
        sweep.trials = t;
    }
    Ok(Scenario::new(config)?)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    println!("writing {}", path.display());
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn print_summary(rows: &[SummaryRow], degrees: bool) {
    let unit = if degrees { "deg" } else { "rad" };
    println!("band   mode beta_dB weight  n  mean_R   root_CRB[{unit}]  sensing_frac");
    for r in rows {
        let root = if degrees { r.mean_root_crb_deg } else { r.mean_root_crb_deg.to_radians() };
        println!(
            "{:<6} {:<4} {:>7} {:>6} {:>2} {:>8.4} {:>14.4e} {:>12.4}",
            r.band.to_string(),
            r.mode.to_string(),
            r.beta_db,
            r.weight,
            r.trials,
            r.mean_rate,
            root,
            r.mean_sensing_fraction
        );
    }
}

fn emit(cli: &Cli, sc: &Scenario, name: &str, rows: &[TradeoffPoint], meta: &RunMeta) -> Result<Vec<SummaryRow>> {
    write_points(create(&cli.out, &format!("{name}.csv"))?, rows, sc.options.restarts, meta)?;
    let summary = summarize(rows, sc.config.sweep.master_seed);
    write_summary(create(&cli.out, &format!("{name}_summary.csv"))?, &summary, cli.degrees, meta)?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} rows failed; see the status column", rows.len());
    }
    print_summary(&summary, cli.degrees);
    Ok(summary)
}

fn run(cli: &Cli) -> Result<bool> {
    let sc = scenario(cli)?;
    let meta = RunMeta {
        git_describe: GIT_DESCRIBE.to_string(),
        config_hash: sc.config_hash.clone(),
        master_seed: sc.config.sweep.master_seed,
    };
    match &cli.command {
        Command::Tradeoff => {
            let summary = emit(cli, &sc, "tradeoff", &tradeoff_sweep(&sc), &meta)?;
            for v in pareto_violations(&summary) {
                eprintln!("pareto: {v}");
            }
        }
        Command::Rician => {
            emit(cli, &sc, "rician", &rician_sweep(&sc), &meta)?;
        }
        Command::Power => {
            emit(cli, &sc, "power", &power_report(&sc), &meta)?;
        }
        Command::Converge => {
            let s = &sc.config.sweep;
            let mut traces = Vec::new();
            for &band in &s.bands {
                for &mode in &s.modes {
                    let rows = convergence_trace(&sc, band, mode, s.converge_weight, s.converge_trial)?;
                    let last = rows.last().expect("trace holds the initial point");
                    println!(
                        "{band} {mode}: {} iterations, objective {:.6}, kkt residual {:.2e}",
                        last.iteration, last.objective, last.kkt_residual
                    );
                    traces.push((band, mode, s.converge_weight, s.converge_trial, rows));
                }
            }
            write_traces(create(&cli.out, "converge.csv")?, &traces, &meta)?;
        }
        Command::Validate { inject } => {
            let fault = inject.map(|f| match f {
                Inject::CrbSign => Fault::CrbSignFlip,
                Inject::ZfLeak => Fault::ZfLeak,
            });
            let report = validate(&sc, fault);
            for c in &report.checks {
                println!(
                    "{} {:<20} measured {:>11.3e}  threshold {:>9.1e}  {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.threshold,
                    c.detail
                );
            }
            write_validation(create(&cli.out, "validate.csv")?, &report, &meta)?;
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
