//! Monte Carlo sweeps over duplex modes, weights, Rician factors and seeds.
//!
//! Every row draws its channel from `stream(master, trial, Channel)` and its
//! SCA initializations from `stream(master, trial, Init(r))`, so rows are
//! independent of scheduling; the worker pool's output is sorted afterwards.

use rayon::prelude::*;

use super::config::{db_to_linear, Scenario};
use super::stats::{bootstrap_mean_interval, mean, std_error};
use super::ExperimentError;
use crate::metrics::{root_crb_degrees, Band, DuplexMode};
use crate::rng::{stream, Purpose};
use crate::sca::{narrowband, wideband, ScaOptions, ScaResult, TraceRow};

/// Coordinates of one sweep row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSpec {
    pub band: Band,
    pub mode: DuplexMode,
    pub beta_db: f64,
    pub weight: f64,
    pub trial: u64,
}

impl PointSpec {
    fn key(&self) -> (Band, DuplexMode, u64, u64, u64) {
        (self.band, self.mode, ordered(self.beta_db), ordered(self.weight), self.trial)
    }
}

/// Order-preserving integer image of a float, for sorting and grouping.
fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Outcome of one SCA run.
#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub spec: PointSpec,
    /// `ok`, or the error that stopped the row.
    pub status: String,
    pub sum_rate: f64,
    /// Sum CRB in rad^2.
    pub sum_crb: f64,
    pub root_crb_deg: f64,
    /// `||w_{k,i}||^2` summed over taps, `[k][i]`.
    pub comm_power: [[f64; 2]; 2],
    /// `tr R_{k,i}`.
    pub sensing_power: [[f64; 2]; 2],
    pub iterations: usize,
    pub kkt_residual: f64,
    pub stop: String,
    /// First restart alone.
    pub single_sum_rate: f64,
    pub single_sum_crb: f64,
    pub single_iterations: usize,
    pub single_kkt_residual: f64,
}

impl TradeoffPoint {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn total_comm_power(&self) -> f64 {
        self.comm_power.iter().flatten().sum()
    }

    pub fn total_sensing_power(&self) -> f64 {
        self.sensing_power.iter().flatten().sum()
    }

    /// Share of the transmitted power spent on dedicated sensing.
    pub fn sensing_fraction(&self) -> f64 {
        let total = self.total_comm_power() + self.total_sensing_power();
        if total > 0.0 {
            self.total_sensing_power() / total
        } else {
            0.0
        }
    }

    fn failed(spec: PointSpec, err: &ExperimentError) -> Self {
        let nan = f64::NAN;
        Self {
            spec,
            status: err.to_string(),
            sum_rate: nan,
            sum_crb: nan,
            root_crb_deg: nan,
            comm_power: [[nan; 2]; 2],
            sensing_power: [[nan; 2]; 2],
            iterations: 0,
            kkt_residual: nan,
            stop: String::new(),
            single_sum_rate: nan,
            single_sum_crb: nan,
            single_iterations: 0,
            single_kkt_residual: nan,
        }
    }

    fn from_result(spec: PointSpec, res: &ScaResult) -> Self {
        let perf = &res.state.performance;
        let d = &res.design;
        let mut comm_power = [[0.0; 2]; 2];
        let mut sensing_power = [[0.0; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                comm_power[k][i] = d.beam_power(k, i);
                sensing_power[k][i] = d.sensing_power(k, i);
            }
        }
        let single = &res.restarts[0];
        Self {
            spec,
            status: "ok".into(),
            sum_rate: perf.sum_rate,
            sum_crb: perf.sum_crb,
            root_crb_deg: root_crb_degrees(perf.sum_crb),
            comm_power,
            sensing_power,
            iterations: res.state.iterations,
            kkt_residual: res.state.kkt_residual,
            stop: format!("{:?}", res.state.stop),
            single_sum_rate: single.sum_rate,
            single_sum_crb: single.sum_crb,
            single_iterations: single.iterations,
            single_kkt_residual: single.kkt_residual,
        }
    }
}

/// Runs the SCA pipeline matching `spec.band` on the trial's channels.
pub fn solve_point(sc: &Scenario, spec: PointSpec, options: ScaOptions) -> Result<ScaResult, ExperimentError> {
    let master = sc.config.sweep.master_seed;
    let beta = db_to_linear(spec.beta_db);
    let budget = sc.budget(spec.band);
    Ok(match spec.band {
        Band::Narrow => {
            let ch = sc.narrow_channels(master, spec.trial, beta)?;
            narrowband::run_sca(&ch, budget, spec.weight, spec.mode, options, master, spec.trial)?
        }
        Band::Wide => {
            let ch = sc.wide_channels(master, spec.trial, beta)?;
            wideband::run_sca(&ch, budget, spec.weight, spec.mode, options, master, spec.trial)?
        }
    })
}

pub fn run_point(sc: &Scenario, spec: PointSpec) -> TradeoffPoint {
    match solve_point(sc, spec, sc.options.clone()) {
        Ok(res) => TradeoffPoint::from_result(spec, &res),
        Err(e) => TradeoffPoint::failed(spec, &e),
    }
}

/// Runs all rows on the worker pool; the result is sorted by
/// `(band, mode, beta, weight, trial)`.
pub fn sweep(sc: &Scenario, specs: &[PointSpec]) -> Vec<TradeoffPoint> {
    let mut rows: Vec<TradeoffPoint> = specs.par_iter().map(|&s| run_point(sc, s)).collect();
    rows.sort_by_key(|r| r.spec.key());
    rows
}

fn grid(sc: &Scenario, bands: &[Band], betas_db: &[f64], weights: &[f64]) -> Vec<PointSpec> {
    let mut specs = Vec::new();
    for &band in bands {
        for &mode in &sc.config.sweep.modes {
            for &beta_db in betas_db {
                for &weight in weights {
                    for trial in 0..sc.config.sweep.trials {
                        specs.push(PointSpec { band, mode, beta_db, weight, trial });
                    }
                }
            }
        }
    }
    specs
}

/// Tradeoff region: every configured band, mode and weight at the configured Rician factor.
pub fn tradeoff_sweep(sc: &Scenario) -> Vec<TradeoffPoint> {
    let s = &sc.config.sweep;
    sweep(sc, &grid(sc, &s.bands, &[sc.config.beta_db], &s.weights))
}

/// Rate and CRB against the Rician factor at the `rician_weights`.
pub fn rician_sweep(sc: &Scenario) -> Vec<TradeoffPoint> {
    let s = &sc.config.sweep;
    sweep(sc, &grid(sc, &s.bands, &s.betas_db, &s.rician_weights))
}

/// Communication/sensing power split in both bands.
pub fn power_report(sc: &Scenario) -> Vec<TradeoffPoint> {
    let s = &sc.config.sweep;
    sweep(sc, &grid(sc, &[Band::Narrow, Band::Wide], &[sc.config.beta_db], &s.weights))
}

/// Per-iteration trace of a single SCA run (one initialization).
pub fn convergence_trace(
    sc: &Scenario,
    band: Band,
    mode: DuplexMode,
    weight: f64,
    trial: u64,
) -> Result<Vec<TraceRow>, ExperimentError> {
    let spec = PointSpec { band, mode, beta_db: sc.config.beta_db, weight, trial };
    let options = ScaOptions { restarts: 1, ..sc.options.clone() };
    Ok(solve_point(sc, spec, options)?.state.trace)
}

/// Seed-averaged statistics of one `(band, mode, beta, weight)` group.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub band: Band,
    pub mode: DuplexMode,
    pub beta_db: f64,
    pub weight: f64,
    pub trials: usize,
    pub failed: usize,
    pub mean_rate: f64,
    pub se_rate: f64,
    pub rate_ci: (f64, f64),
    pub mean_crb: f64,
    pub se_crb: f64,
    pub crb_ci: (f64, f64),
    pub mean_root_crb_deg: f64,
    pub mean_comm_power: f64,
    pub mean_sensing_power: f64,
    pub mean_sensing_fraction: f64,
    pub mean_iterations: f64,
    pub max_kkt_residual: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const CI_LEVEL: f64 = 0.95;

/// Groups sorted rows and averages the successful ones. Rows with an
/// infinite CRB (no sensing weight) are kept; their CRB statistics are `inf`.
pub fn summarize(rows: &[TradeoffPoint], master: u64) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = |r: &TradeoffPoint| {
            let k = r.spec.key();
            (k.0, k.1, k.2, k.3)
        };
        let mut end = start;
        while end < rows.len() && key(&rows[end]) == key(&rows[start]) {
            end += 1;
        }
        let group = &rows[start..end];
        let ok: Vec<&TradeoffPoint> = group.iter().filter(|r| r.ok()).collect();
        let spec = group[0].spec;
        let col = |f: &dyn Fn(&TradeoffPoint) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let rate = col(&|r| r.sum_rate);
        let crb = col(&|r| r.sum_crb);
        let mut rng = stream(master, out.len() as u64, Purpose::Bootstrap);
        let ci = |xs: &[f64], rng: &mut _| {
            if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) {
                (f64::NAN, f64::NAN)
            } else {
                bootstrap_mean_interval(xs, CI_LEVEL, BOOTSTRAP_RESAMPLES, rng)
            }
        };
        let mean_crb = mean(&crb);
        out.push(SummaryRow {
            band: spec.band,
            mode: spec.mode,
            beta_db: spec.beta_db,
            weight: spec.weight,
            trials: ok.len(),
            failed: group.len() - ok.len(),
            mean_rate: mean(&rate),
            se_rate: std_error(&rate),
            rate_ci: ci(&rate, &mut rng),
            mean_crb,
            se_crb: if mean_crb.is_finite() { std_error(&crb) } else { f64::NAN },
            crb_ci: ci(&crb, &mut rng),
            mean_root_crb_deg: mean(&col(&|r| r.root_crb_deg)),
            mean_comm_power: mean(&col(&TradeoffPoint::total_comm_power)),
            mean_sensing_power: mean(&col(&TradeoffPoint::total_sensing_power)),
            mean_sensing_fraction: mean(&col(&TradeoffPoint::sensing_fraction)),
            mean_iterations: mean(&col(&|r| r.iterations as f64)),
            max_kkt_residual: col(&|r| r.kkt_residual).into_iter().fold(0.0, f64::max),
        });
        start = end;
    }
    out
}

/// Pareto sanity of seed-averaged curves: along increasing weight the mean
/// rate and the mean CRB should not decrease by more than one standard error.
pub fn pareto_violations(summary: &[SummaryRow]) -> Vec<String> {
    let mut out = Vec::new();
    for pair in summary.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if (a.band, a.mode, a.beta_db) != (b.band, b.mode, b.beta_db) {
            continue;
        }
        let tag = format!("{} {} beta {} dB, w {} -> {}", a.band, a.mode, a.beta_db, a.weight, b.weight);
        if b.mean_rate < a.mean_rate - a.se_rate.max(b.se_rate) {
            out.push(format!("{tag}: mean rate drops {} -> {}", a.mean_rate, b.mean_rate));
        }
        if b.mean_crb.is_finite() && b.mean_crb < a.mean_crb - a.se_crb.max(b.se_crb) {
            out.push(format!("{tag}: mean CRB drops {:e} -> {:e}", a.mean_crb, b.mean_crb));
        }
    }
    out
}

/// Rows of `rows` at the given coordinates that succeeded, in trial order.
pub fn select<'a>(
    rows: &'a [TradeoffPoint],
    band: Band,
    mode: DuplexMode,
    weight: f64,
) -> impl Iterator<Item = &'a TradeoffPoint> + 'a {
    rows.iter()
        .filter(move |r| r.spec.band == band && r.spec.mode == mode && r.spec.weight == weight && r.ok())
}
