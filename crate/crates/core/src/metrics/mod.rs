//! Transmit designs and their communication/sensing metrics: SINR, rate,
//! residual self-interference power and the closed-form angle CRB.
//!
//! Interval indices are 0-based (`i = 0` is the first half of a CPI or PRI)
//! and transceivers are `k = 0` (A) and `k = 1` (B); `1 - k` is the peer.

pub mod oracle;

use crate::channel::Channels;
use crate::linalg::{hermitian_eigen, psd_repair, quad_form, trace_re, CMat, CVec};

/// Tolerance on PSD and power invariants of a design.
pub const DESIGN_TOL: f64 = 1e-8;
/// Beyond this, a negative eigenvalue of `Q - sum w w^H` is a hard error.
pub const SENSING_REPAIR_LIMIT: f64 = 1e-6;
/// Wideband SINR closed form requires zero-forcing residuals below this.
pub const ZF_TOL: f64 = 1e-8;
/// Per-transceiver power budget summed over both intervals.
pub const POWER_BUDGET: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplexMode {
    Full,
    Half,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Narrow,
    Wide,
}

impl std::fmt::Display for DuplexMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DuplexMode::Full => "full",
            DuplexMode::Half => "half",
        })
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Band::Narrow => "narrow",
            Band::Wide => "wide",
        })
    }
}

impl DuplexMode {
    /// Whether transceiver `k` must stay silent in interval `i`.
    ///
    /// Narrowband half duplex alternates (A talks first, B second); wideband
    /// half duplex mutes the second half of every PRI for both transceivers.
    pub fn silent(self, band: Band, k: usize, i: usize) -> bool {
        match (self, band) {
            (DuplexMode::Full, _) => false,
            (DuplexMode::Half, Band::Narrow) => (k == 0 && i == 1) || (k == 1 && i == 0),
            (DuplexMode::Half, Band::Wide) => i == 1,
        }
    }
}

/// Interval in which the peer transmitted the symbols received in interval `i`.
///
/// Narrowband reception is instantaneous. In the wideband PRI protocol the
/// one-way delay is half a PRI, so the first half receives what the peer sent
/// in the second half of the previous PRI and vice versa.
pub fn source_interval(band: Band, i: usize) -> usize {
    const WIDEBAND: [usize; 2] = [1, 0];
    match band {
        Band::Narrow => i,
        Band::Wide => WIDEBAND[i],
    }
}

/// SNRs and the CPI length; all quantities linear.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBudget {
    pub rho_c: f64,
    pub rho_s: f64,
    pub eta: f64,
    pub rho_si: f64,
    /// Samples per half CPI (`N`; the CPI has `2N` samples).
    pub n_half: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DesignError {
    #[error("beams/covariances have inconsistent shapes: {0}")]
    Shape(String),
    #[error("Q[{k}][{i}] has minimum eigenvalue {min:e}")]
    NotPsd { k: usize, i: usize, min: f64 },
    #[error("Q[{k}][{i}] - sum w w^H has minimum eigenvalue {min:e}")]
    SensingNotPsd { k: usize, i: usize, min: f64 },
    #[error("transceiver {k} uses power {total} > {POWER_BUDGET}")]
    Power { k: usize, total: f64 },
    #[error("duplex pattern violated: {0}")]
    Duplex(String),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("residual SI power {0:e} is negative; covariance is not PSD")]
    NegativeSiPower(f64),
    #[error("transceiver {k}: zero-forcing residual {residual:e} exceeds {ZF_TOL:e}")]
    ZfViolation { k: usize, residual: f64 },
    #[error("operation needs a {expected} design")]
    WrongBand { expected: Band },
    #[error("oracle size {rows} exceeds the dense limit {max}")]
    OracleTooLarge { rows: usize, max: usize },
}

/// Transmit strategy of both transceivers over the two intervals.
///
/// `beams[k][i]` holds one beam per channel tap (a single beam narrowband).
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitDesign {
    pub mode: DuplexMode,
    pub band: Band,
    pub beams: [[Vec<CVec>; 2]; 2],
    pub q: [[CMat; 2]; 2],
    pub r: [[CMat; 2]; 2],
}

/// `R = Q - sum w w^H`, with eigenvalues down to `-SENSING_REPAIR_LIMIT`
/// clipped to zero. Returns `R` and the minimum eigenvalue before repair.
pub fn sensing_covariance(q: &CMat, beams: &[CVec]) -> Result<(CMat, f64), f64> {
    let mut r = q.clone();
    for w in beams {
        r -= w * w.adjoint();
    }
    let (repaired, min) = psd_repair(&r);
    if min < -SENSING_REPAIR_LIMIT {
        return Err(min);
    }
    Ok((repaired, min))
}

impl TransmitDesign {
    /// Builds a design and derives the dedicated-sensing covariances.
    pub fn new(
        mode: DuplexMode,
        band: Band,
        beams: [[Vec<CVec>; 2]; 2],
        q: [[CMat; 2]; 2],
    ) -> Result<Self, DesignError> {
        let m = q[0][0].nrows();
        let taps = beams[0][0].len();
        let mut r: [[CMat; 2]; 2] = Default::default();
        for k in 0..2 {
            for i in 0..2 {
                if q[k][i].nrows() != m || q[k][i].ncols() != m {
                    return Err(DesignError::Shape(format!("Q[{k}][{i}] is not {m}x{m}")));
                }
                if beams[k][i].len() != taps || beams[k][i].iter().any(|w| w.len() != m) {
                    return Err(DesignError::Shape(format!("beams[{k}][{i}]")));
                }
                r[k][i] = sensing_covariance(&q[k][i], &beams[k][i])
                    .map_err(|min| DesignError::SensingNotPsd { k, i, min })?
                    .0;
            }
        }
        if band == Band::Narrow && taps != 1 {
            return Err(DesignError::Shape(format!("narrowband design with {taps} beams per interval")));
        }
        Ok(Self { mode, band, beams, q, r })
    }

    /// All-zero design.
    pub fn zero(mode: DuplexMode, band: Band, m: usize, taps: usize) -> Self {
        let z = || CMat::zeros(m, m);
        let b = || vec![CVec::zeros(m); taps];
        Self {
            mode,
            band,
            beams: [[b(), b()], [b(), b()]],
            q: [[z(), z()], [z(), z()]],
            r: [[z(), z()], [z(), z()]],
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.q[0][0].nrows()
    }

    pub fn num_taps(&self) -> usize {
        self.beams[0][0].len()
    }

    /// Communication power `sum_l ||w_{k,i,l}||^2`.
    pub fn beam_power(&self, k: usize, i: usize) -> f64 {
        self.beams[k][i].iter().map(|w| w.norm_squared()).sum()
    }

    /// Dedicated-sensing power `tr R_{k,i}`.
    pub fn sensing_power(&self, k: usize, i: usize) -> f64 {
        trace_re(&self.r[k][i])
    }

    pub fn total_power(&self, k: usize) -> f64 {
        (0..2).map(|i| trace_re(&self.q[k][i])).sum()
    }

    /// Checks PSD, power and duplex invariants.
    pub fn validate(&self) -> Result<(), DesignError> {
        for k in 0..2 {
            for i in 0..2 {
                let (vals, _) = hermitian_eigen(&self.q[k][i]);
                let min = vals.first().copied().unwrap_or(0.0);
                if min < -DESIGN_TOL {
                    return Err(DesignError::NotPsd { k, i, min });
                }
                let herm = (&self.q[k][i] - self.q[k][i].adjoint()).norm();
                if herm > 1e-10 {
                    return Err(DesignError::Shape(format!("Q[{k}][{i}] not Hermitian ({herm:e})")));
                }
                if self.mode.silent(self.band, k, i) {
                    let qn = self.q[k][i].norm();
                    let wn = self.beam_power(k, i);
                    if qn != 0.0 || wn != 0.0 {
                        return Err(DesignError::Duplex(format!("interval ({k},{i}) must be silent")));
                    }
                }
            }
            if self.mode == DuplexMode::Full && self.q[k][0] != self.q[k][1] {
                return Err(DesignError::Duplex(format!("Q[{k}][0] != Q[{k}][1] in full duplex")));
            }
            let total = self.total_power(k);
            if total > POWER_BUDGET + DESIGN_TOL {
                return Err(DesignError::Power { k, total });
            }
        }
        Ok(())
    }

    /// Largest `|h_{k,l}^H w_{k,i,l'}|` over `l != l'`.
    pub fn zf_residual<C: Channels>(&self, ch: &C, k: usize) -> f64 {
        let h = ch.comm_taps(k);
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for (lp, w) in self.beams[k][i].iter().enumerate() {
                for (l, hl) in h.iter().enumerate() {
                    if l != lp {
                        worst = worst.max(hl.dotc(w).norm());
                    }
                }
            }
        }
        worst
    }
}

/// `Phi = eta * sum_l g_l^H Q g_l`.
pub fn residual_si_power(q: &CMat, g_taps: &[CVec], eta: f64) -> Result<f64, MetricError> {
    let phi = eta * g_taps.iter().map(|g| quad_form(q, g)).sum::<f64>();
    if phi < -1e-10 {
        return Err(MetricError::NegativeSiPower(phi));
    }
    Ok(phi.max(0.0))
}

/// Interference-plus-noise `rho_s a^H Q a + rho_SI Phi + 1` at receiver `k`, interval `i`.
pub fn interference<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    i: usize,
) -> Result<f64, MetricError> {
    let q = &design.q[k][i];
    let a = ch.steering(k);
    let phi = residual_si_power(q, ch.si_taps(k), budget.eta)?;
    Ok(budget.rho_s * quad_form(q, &a) + budget.rho_si * phi + 1.0)
}

/// Effective channel gain `sum_l h_{k',l}^H w_{k',i',l}` of the symbols
/// received by `k` in interval `i`.
pub fn effective_gain<C: Channels>(design: &TransmitDesign, ch: &C, k: usize, i: usize) -> crate::linalg::C64 {
    let peer = 1 - k;
    let src = source_interval(design.band, i);
    ch.comm_taps(peer)
        .iter()
        .zip(&design.beams[peer][src])
        .map(|(h, w)| h.dotc(w))
        .sum()
}

pub fn sinr_narrowband<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    i: usize,
) -> Result<f64, MetricError> {
    if design.band != Band::Narrow {
        return Err(MetricError::WrongBand { expected: Band::Narrow });
    }
    let s = effective_gain(design, ch, k, i);
    Ok(budget.rho_c * s.norm_sqr() / interference(design, ch, budget, k, i)?)
}

pub fn sinr_wideband<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    i: usize,
) -> Result<f64, MetricError> {
    if design.band != Band::Wide {
        return Err(MetricError::WrongBand { expected: Band::Wide });
    }
    let peer = 1 - k;
    let residual = design.zf_residual(ch, peer);
    if residual > ZF_TOL {
        return Err(MetricError::ZfViolation { k: peer, residual });
    }
    let s = effective_gain(design, ch, k, i);
    Ok(budget.rho_c * s.norm_sqr() / interference(design, ch, budget, k, i)?)
}

pub fn sinr<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    i: usize,
) -> Result<f64, MetricError> {
    match design.band {
        Band::Narrow => sinr_narrowband(design, ch, budget, k, i),
        Band::Wide => sinr_wideband(design, ch, budget, k, i),
    }
}

/// `R_k = 1/2 sum_i log2(1 + gamma_i)`.
pub fn rate(gammas: [f64; 2]) -> f64 {
    0.5 * gammas.iter().map(|g| (1.0 + g).log2()).sum::<f64>()
}

/// Per-interval sensing information `|alpha|^2 adot^H Q adot / (rho_SI Phi + 1)`.
pub fn sensing_information<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    i: usize,
) -> Result<f64, MetricError> {
    let q = &design.q[k][i];
    let ad = ch.steering_derivative(k);
    let phi = residual_si_power(q, ch.si_taps(k), budget.eta)?;
    Ok(ch.alpha(k).norm_sqr() * quad_form(q, &ad) / (budget.rho_si * phi + 1.0))
}

/// Fisher information `2 rho_s N sum_i |alpha|^2 adot^H Q adot / (rho_SI Phi + 1)`.
pub fn fisher_information<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
) -> Result<f64, MetricError> {
    let mut s = 0.0;
    for i in 0..2 {
        s += sensing_information(design, ch, budget, k, i)?;
    }
    Ok(2.0 * budget.rho_s * budget.n_half as f64 * s)
}

/// Closed-form angle CRB in rad^2; `+inf` when no echo carries angle information.
pub fn crb<C: Channels>(design: &TransmitDesign, ch: &C, budget: &LinkBudget, k: usize) -> Result<f64, MetricError> {
    let j = fisher_information(design, ch, budget, k)?;
    Ok(if j > 0.0 { 1.0 / j } else { f64::INFINITY })
}

/// Sum rate, sum CRB and per-transceiver values of a design.
#[derive(Clone, Debug, PartialEq)]
pub struct Performance {
    pub sinr: [[f64; 2]; 2],
    pub rate: [f64; 2],
    pub crb: [f64; 2],
    pub sum_rate: f64,
    pub sum_crb: f64,
}

pub fn evaluate<C: Channels>(design: &TransmitDesign, ch: &C, budget: &LinkBudget) -> Result<Performance, MetricError> {
    let mut sinr_v = [[0.0; 2]; 2];
    let mut rate_v = [0.0; 2];
    let mut crb_v = [0.0; 2];
    for k in 0..2 {
        for i in 0..2 {
            sinr_v[k][i] = sinr(design, ch, budget, k, i)?;
        }
        rate_v[k] = rate(sinr_v[k]);
        crb_v[k] = crb(design, ch, budget, k)?;
    }
    Ok(Performance {
        sinr: sinr_v,
        rate: rate_v,
        crb: crb_v,
        sum_rate: rate_v[0] + rate_v[1],
        sum_crb: crb_v[0] + crb_v[1],
    })
}

/// Root CRB in degrees.
pub fn root_crb_degrees(crb: f64) -> f64 {
    crb.sqrt().to_degrees()
}
