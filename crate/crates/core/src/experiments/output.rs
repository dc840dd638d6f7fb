//! CSV writers. Every row carries the build's `git describe` string, the
//! config hash and the master seed.

use std::io::Write;

use super::sweep::{SummaryRow, TradeoffPoint};
use super::validate::ValidationReport;
use super::ExperimentError;
use crate::sca::TraceRow;

pub const GIT_DESCRIBE: &str = env!("GIT_DESCRIBE");

/// Run metadata appended to every row.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub git_describe: String,
    pub config_hash: String,
    pub master_seed: u64,
}

impl RunMeta {
    fn fields(&self) -> [String; 3] {
        [self.git_describe.clone(), self.config_hash.clone(), self.master_seed.to_string()]
    }
}

const META_HEADER: [&str; 3] = ["git_describe", "config_hash", "master_seed"];

fn csv_err(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(e.to_string())
}

fn write_table<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
    meta: &RunMeta,
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header.iter().chain(META_HEADER.iter())).map_err(csv_err)?;
    for mut row in rows {
        row.extend(meta.fields());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ExperimentError::Io(e.to_string()))
}

fn s<T: ToString>(x: T) -> String {
    x.to_string()
}

pub const POINT_HEADER: [&str; 25] = [
    "band",
    "mode",
    "beta_db",
    "weight",
    "seed",
    "status",
    "sum_rate",
    "sum_crb_rad2",
    "root_crb_deg",
    "comm_power_a0",
    "comm_power_a1",
    "comm_power_b0",
    "comm_power_b1",
    "sensing_power_a0",
    "sensing_power_a1",
    "sensing_power_b0",
    "sensing_power_b1",
    "iterations",
    "kkt_residual",
    "stop",
    "single_sum_rate",
    "single_sum_crb_rad2",
    "single_iterations",
    "single_kkt_residual",
    "best_of_restarts",
];

pub fn write_points<W: Write>(out: W, rows: &[TradeoffPoint], restarts: u32, meta: &RunMeta) -> Result<(), ExperimentError> {
    let body = rows.iter().map(|r| {
        let mut v = vec![
            s(r.spec.band),
            s(r.spec.mode),
            s(r.spec.beta_db),
            s(r.spec.weight),
            s(r.spec.trial),
            r.status.clone(),
            s(r.sum_rate),
            s(r.sum_crb),
            s(r.root_crb_deg),
        ];
        v.extend(r.comm_power.iter().flatten().map(|x| s(x)));
        v.extend(r.sensing_power.iter().flatten().map(|x| s(x)));
        v.extend([
            s(r.iterations),
            s(r.kkt_residual),
            r.stop.clone(),
            s(r.single_sum_rate),
            s(r.single_sum_crb),
            s(r.single_iterations),
            s(r.single_kkt_residual),
            s(restarts),
        ]);
        v
    });
    write_table(out, &POINT_HEADER, body, meta)
}

pub const SUMMARY_HEADER: [&str; 22] = [
    "band",
    "mode",
    "beta_db",
    "weight",
    "trials",
    "failed",
    "mean_rate",
    "se_rate",
    "rate_ci_lo",
    "rate_ci_hi",
    "mean_crb_rad2",
    "se_crb_rad2",
    "crb_ci_lo",
    "crb_ci_hi",
    "mean_root_crb",
    "root_crb_unit",
    "mean_comm_power",
    "mean_sensing_power",
    "mean_sensing_fraction",
    "mean_iterations",
    "max_kkt_residual",
    "ci_level",
];

/// Seed-averaged rows; root CRB in degrees, or radians when `degrees` is false.
pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow], degrees: bool, meta: &RunMeta) -> Result<(), ExperimentError> {
    let body = rows.iter().map(|r| {
        let root = if degrees { r.mean_root_crb_deg } else { r.mean_root_crb_deg.to_radians() };
        vec![
            s(r.band),
            s(r.mode),
            s(r.beta_db),
            s(r.weight),
            s(r.trials),
            s(r.failed),
            s(r.mean_rate),
            s(r.se_rate),
            s(r.rate_ci.0),
            s(r.rate_ci.1),
            s(r.mean_crb),
            s(r.se_crb),
            s(r.crb_ci.0),
            s(r.crb_ci.1),
            s(root),
            s(if degrees { "deg" } else { "rad" }),
            s(r.mean_comm_power),
            s(r.mean_sensing_power),
            s(r.mean_sensing_fraction),
            s(r.mean_iterations),
            s(r.max_kkt_residual),
            s(super::sweep::CI_LEVEL),
        ]
    });
    write_table(out, &SUMMARY_HEADER, body, meta)
}

pub const TRACE_HEADER: [&str; 10] = [
    "band",
    "mode",
    "weight",
    "seed",
    "iteration",
    "objective",
    "sum_rate",
    "sum_crb_rad2",
    "root_crb_deg",
    "kkt_residual",
];

/// Convergence traces; each entry is `(band, mode, weight, trial, rows)`.
pub fn write_traces<W: Write>(
    out: W,
    traces: &[(crate::metrics::Band, crate::metrics::DuplexMode, f64, u64, Vec<TraceRow>)],
    meta: &RunMeta,
) -> Result<(), ExperimentError> {
    let body = traces.iter().flat_map(|(band, mode, w, trial, rows)| {
        rows.iter().map(move |t| {
            vec![
                s(band),
                s(mode),
                s(w),
                s(trial),
                s(t.iteration),
                s(t.objective),
                s(t.sum_rate),
                s(t.sum_crb),
                s(crate::metrics::root_crb_degrees(t.sum_crb)),
                s(t.kkt_residual),
            ]
        })
    });
    write_table(out, &TRACE_HEADER, body, meta)
}

pub const CHECK_HEADER: [&str; 5] = ["check", "passed", "measured", "threshold", "detail"];

pub fn write_validation<W: Write>(out: W, report: &ValidationReport, meta: &RunMeta) -> Result<(), ExperimentError> {
    let body = report
        .checks
        .iter()
        .map(|c| vec![c.name.clone(), s(c.passed), s(c.measured), s(c.threshold), c.detail.clone()]);
    write_table(out, &CHECK_HEADER, body, meta)
}
