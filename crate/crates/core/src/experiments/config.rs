//! Experiment configuration and protocol timing.
//!
//! [`SystemConfig`] is the on-disk JSON form with powers in dB and angles in
//! degrees. [`Scenario`] is the resolved form: every dB value is converted to
//! linear exactly once, in [`Scenario::new`].

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::channel::{
    first_tap_rician_factor, power_delay_profile, sample_narrowband, sample_wideband, ChannelParams,
    NarrowbandChannels, WidebandChannels, WidebandParams, SPEED_OF_LIGHT,
};
use crate::metrics::{Band, DuplexMode, LinkBudget};
use crate::rng::{stream, Purpose};
use crate::sca::ScaOptions;

fn half() -> f64 {
    0.5
}

fn inv_e() -> f64 {
    (-1f64).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NarrowbandConfig {
    pub bandwidth_hz: f64,
    /// CPI length in seconds.
    pub coherence_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidebandConfig {
    pub bandwidth_hz: f64,
    pub coherence_time_s: f64,
    /// Communication taps `L`.
    pub taps: usize,
    /// Self-interference taps.
    pub si_taps: usize,
    /// Ratio of consecutive tap powers in the exponential power-delay profile.
    #[serde(default = "inv_e")]
    pub pdp_decay: f64,
    /// Self-interference delay in samples (bookkeeping only).
    #[serde(default)]
    pub tau_si: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub master_seed: u64,
    /// Channel realizations per point.
    pub trials: u64,
    pub weights: Vec<f64>,
    pub modes: Vec<DuplexMode>,
    pub bands: Vec<Band>,
    /// Rician grid of the `rician` experiment, dB.
    pub betas_db: Vec<f64>,
    /// Weights of the `rician` experiment.
    pub rician_weights: Vec<f64>,
    /// Weight and trial of the `converge` experiment.
    pub converge_weight: f64,
    pub converge_trial: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub restarts: u32,
    pub kkt_tol: f64,
    pub beam_fraction: f64,
    pub max_extrapolation: f64,
}

impl Default for ScaConfig {
    fn default() -> Self {
        let d = ScaOptions::default();
        Self {
            rel_tol: d.rel_tol,
            max_iter: d.max_iter,
            restarts: d.restarts,
            kkt_tol: d.kkt_tol,
            beam_fraction: d.beam_fraction,
            max_extrapolation: d.max_extrapolation,
        }
    }
}

/// Sizes of the oracle checks run by `validate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub fim_pairs: usize,
    pub cross_designs: usize,
    pub surrogate_points: usize,
    pub subproblems: usize,
    pub samples: usize,
    pub sinr_designs: usize,
    pub symbols: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            fim_pairs: 50,
            cross_designs: 20,
            surrogate_points: 100,
            subproblems: 10,
            samples: 10_000,
            sinr_designs: 5,
            symbols: 100_000,
        }
    }
}

/// Experiment description as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub antennas: usize,
    /// Element spacing over wavelength.
    #[serde(default = "half")]
    pub spacing_ratio: f64,
    /// Distance between the transceivers, m.
    pub distance_m: f64,
    pub theta_deg: [f64; 2],
    #[serde(default)]
    pub doppler_hz: [f64; 2],
    pub rho_c_db: f64,
    pub rho_s_db: f64,
    pub eta_db: f64,
    pub rho_si_db: f64,
    /// Rate/CRB scaling.
    pub mu: f64,
    /// Rician factor (aggregate over taps in the wideband case), dB.
    pub beta_db: f64,
    pub narrowband: NarrowbandConfig,
    pub wideband: WidebandConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub sca: ScaConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

impl SystemConfig {
    /// Desk-scale defaults; identical to `configs/desk.json`.
    pub fn desk() -> Self {
        Self {
            antennas: 4,
            spacing_ratio: 0.5,
            distance_m: 300.0,
            theta_deg: [0.0, 0.0],
            doppler_hz: [0.0, 0.0],
            rho_c_db: 15.0,
            rho_s_db: 7.0,
            eta_db: 50.0,
            rho_si_db: -80.0,
            mu: 1.5e4,
            beta_db: 0.0,
            narrowband: NarrowbandConfig { bandwidth_hz: 1e5, coherence_time_s: 1e-3 },
            wideband: WidebandConfig {
                bandwidth_hz: 5e6,
                coherence_time_s: 2e-4,
                taps: 4,
                si_taps: 4,
                pdp_decay: inv_e(),
                tau_si: 0,
            },
            sweep: SweepConfig {
                master_seed: 2024,
                trials: 20,
                weights: (0..=10).map(|j| j as f64 / 10.0).collect(),
                modes: vec![DuplexMode::Full, DuplexMode::Half],
                bands: vec![Band::Narrow],
                betas_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
                rician_weights: vec![0.1, 0.9],
                converge_weight: 0.5,
                converge_trial: 0,
            },
            sca: ScaConfig::default(),
            validate: ValidateConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Weight grid from `start:stop:step` or a comma-separated list.
pub fn parse_weights(text: &str) -> Result<Vec<f64>, ExperimentError> {
    let bad = || ExperimentError::Config(format!("cannot parse weights {text:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let weights = match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || b < a {
                return Err(bad());
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            // rounding keeps 0.1-steps at their decimal values
            (0..=n).map(|j| ((a + j as f64 * step) * 1e12).round() / 1e12).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<f64>, _>>()?,
        _ => return Err(bad()),
    };
    if weights.is_empty() || weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(ExperimentError::Config(format!("weights {text:?} must lie in [0, 1]")));
    }
    Ok(weights)
}

/// Sample counts of the transmission protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timing {
    Narrow {
        /// CPI length `2N`.
        cpi: u64,
    },
    Wide {
        cpi: u64,
        /// One-way delay `tau` in samples.
        tau: u64,
        /// PRI length `N0 = 2 tau`.
        pri: u64,
        /// PRIs per CPI.
        pris: u64,
    },
}

impl Timing {
    pub fn cpi(self) -> u64 {
        match self {
            Timing::Narrow { cpi } | Timing::Wide { cpi, .. } => cpi,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<(), ExperimentError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ExperimentError::Timing(format!("{name} must be positive, got {x}")))
    }
}

/// Narrowband CPI `2N = round(Delta W)`; wideband `tau = round(D W / c)`,
/// `N0 = 2 tau`, `U = round(Delta W) / N0` (floor), `2N = U N0`.
pub fn derive_timing(band: Band, bandwidth_hz: f64, coherence_time_s: f64, distance_m: f64) -> Result<Timing, ExperimentError> {
    positive("bandwidth", bandwidth_hz)?;
    positive("coherence time", coherence_time_s)?;
    let samples = (coherence_time_s * bandwidth_hz).round() as u64;
    match band {
        Band::Narrow => {
            if samples < 2 || samples % 2 != 0 {
                return Err(ExperimentError::Timing(format!("CPI of {samples} samples cannot be split in two halves")));
            }
            Ok(Timing::Narrow { cpi: samples })
        }
        Band::Wide => {
            positive("distance", distance_m)?;
            let tau = (distance_m / SPEED_OF_LIGHT * bandwidth_hz).round() as u64;
            if tau == 0 {
                return Err(ExperimentError::Timing("propagation delay rounds to zero samples".into()));
            }
            let pri = 2 * tau;
            let pris = samples / pri;
            if pris == 0 {
                return Err(ExperimentError::Timing(format!("CPI of {samples} samples is shorter than one PRI of {pri}")));
            }
            Ok(Timing::Wide { cpi: pris * pri, tau, pri, pris })
        }
    }
}

/// Resolved, linear-scale experiment parameters.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SystemConfig,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub rho_c: f64,
    pub rho_s: f64,
    pub eta: f64,
    pub rho_si: f64,
    pub beta: f64,
    pub theta: [f64; 2],
    pub narrow_timing: Timing,
    pub wide_timing: Timing,
    pub options: ScaOptions,
}

impl Scenario {
    pub fn new(config: SystemConfig) -> Result<Self, ExperimentError> {
        use sha2::{Digest, Sha256};
        if config.antennas == 0 {
            return Err(ExperimentError::Config("antennas must be at least 1".into()));
        }
        if config.sweep.trials == 0 {
            return Err(ExperimentError::Config("at least one trial is needed".into()));
        }
        for &w in config.sweep.weights.iter().chain(&config.sweep.rician_weights).chain([&config.sweep.converge_weight]) {
            if !(0.0..=1.0).contains(&w) {
                return Err(ExperimentError::Config(format!("weight {w} outside [0, 1]")));
            }
        }
        let nb = &config.narrowband;
        let wb = &config.wideband;
        let narrow_timing = derive_timing(Band::Narrow, nb.bandwidth_hz, nb.coherence_time_s, config.distance_m)?;
        let wide_timing = derive_timing(Band::Wide, wb.bandwidth_hz, wb.coherence_time_s, config.distance_m)?;
        if wb.taps == 0 || wb.si_taps == 0 || wb.taps > config.antennas {
            return Err(ExperimentError::Config(format!(
                "wideband needs 1 <= taps <= antennas and si_taps >= 1 (taps {}, si_taps {})",
                wb.taps, wb.si_taps
            )));
        }
        let sca = &config.sca;
        let options = ScaOptions {
            rel_tol: sca.rel_tol,
            max_iter: sca.max_iter,
            restarts: sca.restarts,
            mu: config.mu,
            beam_fraction: sca.beam_fraction,
            kkt_tol: sca.kkt_tol,
            max_extrapolation: sca.max_extrapolation,
            ..ScaOptions::default()
        };
        Ok(Self {
            config_hash: hex::encode(Sha256::digest(serde_json::to_vec(&config).expect("config serializes"))),
            rho_c: db_to_linear(config.rho_c_db),
            rho_s: db_to_linear(config.rho_s_db),
            eta: db_to_linear(config.eta_db),
            rho_si: db_to_linear(config.rho_si_db),
            beta: db_to_linear(config.beta_db),
            theta: config.theta_deg.map(f64::to_radians),
            narrow_timing,
            wide_timing,
            options,
            config,
        })
    }

    pub fn timing(&self, band: Band) -> Timing {
        match band {
            Band::Narrow => self.narrow_timing,
            Band::Wide => self.wide_timing,
        }
    }

    pub fn budget(&self, band: Band) -> LinkBudget {
        LinkBudget {
            rho_c: self.rho_c,
            rho_s: self.rho_s,
            eta: self.eta,
            rho_si: self.rho_si,
            n_half: (self.timing(band).cpi() / 2) as usize,
        }
    }

    pub fn sample_period(&self, band: Band) -> f64 {
        match band {
            Band::Narrow => 1.0 / self.config.narrowband.bandwidth_hz,
            Band::Wide => 1.0 / self.config.wideband.bandwidth_hz,
        }
    }

    fn channel_params(&self, rician: f64) -> ChannelParams {
        ChannelParams {
            antennas: self.config.antennas,
            spacing_ratio: self.config.spacing_ratio,
            theta: self.theta,
            rician,
            doppler: self.config.doppler_hz,
        }
    }

    /// Narrowband channels of `trial` with linear Rician factor `beta`.
    pub fn narrow_channels(&self, master: u64, trial: u64, beta: f64) -> Result<NarrowbandChannels, ExperimentError> {
        Ok(sample_narrowband(&self.channel_params(beta), &mut stream(master, trial, Purpose::Channel))?)
    }

    /// Wideband channels of `trial`; `beta` is the aggregate Rician factor.
    pub fn wide_channels(&self, master: u64, trial: u64, beta: f64) -> Result<WidebandChannels, ExperimentError> {
        let wb = &self.config.wideband;
        let pdp = power_delay_profile(wb.taps, wb.pdp_decay)?;
        let si_pdp = power_delay_profile(wb.si_taps, wb.pdp_decay)?;
        let rician = first_tap_rician_factor(beta, &pdp)?;
        let params = WidebandParams { base: self.channel_params(rician), pdp, si_pdp, tau_si: wb.tau_si };
        Ok(sample_wideband(&params, &mut stream(master, trial, Purpose::Channel))?)
    }
}
