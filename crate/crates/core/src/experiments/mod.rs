//! Protocol timing, Monte Carlo sweeps, oracle validation and CSV output
//! behind the `isacsim` command line.

pub mod config;
pub mod output;
pub mod stats;
pub mod sweep;
pub mod validate;

pub use config::{derive_timing, Scenario, SystemConfig, Timing};
pub use sweep::{convergence_trace, power_report, rician_sweep, summarize, tradeoff_sweep, PointSpec, SummaryRow, TradeoffPoint};
pub use validate::{validate, Fault, ValidationReport};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("timing: {0}")]
    Timing(String),
    #[error("io: {0}")]
    Io(String),
    #[error("check could not run: {0}")]
    Check(String),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Sca(#[from] crate::sca::ScaError),
}

#[cfg(test)]
mod tests;
