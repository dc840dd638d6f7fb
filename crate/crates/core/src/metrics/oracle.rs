//! Brute-force reference computations for the closed-form metrics.
//!
//! The Fisher-information oracles build the stacked transmit covariance
//! `R_X` and noise covariance `R_z` of a short CPI densely and evaluate
//! `J = 2 |alpha|^2 rho_s tr((I (x) adot) R_z^-1 (I (x) adot^H) R_X)`.
//! The SINR oracle simulates the received symbol stream.

use rand::Rng;

use super::{source_interval, Band, DuplexMode, LinkBudget, MetricError, TransmitDesign};
use crate::channel::{Channels, WidebandChannels};
use crate::linalg::{complex_gaussian, complex_gaussian_vec, outer, psd_sqrt, CMat, CVec, C64};

/// Largest `N_small` accepted by [`fim_oracle_narrowband`].
pub const MAX_NARROW_HALF: usize = 16;
/// Largest dense `R_X` dimension accepted by [`fim_oracle_wideband`].
pub const MAX_WIDE_ROWS: usize = 2000;

fn doppler_phases(nu: f64, sample_period: f64, len: usize) -> Vec<C64> {
    (1..=len)
        .map(|n| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * nu * n as f64 * sample_period))
        .collect()
}

/// `eta sum_l g_l^H Q g_l`, accumulated entrywise.
fn si_power_entrywise(q: &CMat, g_taps: &[CVec], eta: f64) -> f64 {
    let m = q.nrows();
    let mut s = C64::new(0.0, 0.0);
    for g in g_taps {
        for a in 0..m {
            for b in 0..m {
                s += g[a].conj() * q[(a, b)] * g[b];
            }
        }
    }
    eta * s.re
}

/// `2 |alpha|^2 rho_s Re tr(T R_X)` with `T = (I (x) adot) R_z^-1 (I (x) adot^H)`.
fn fim_trace(rz: &CMat, rx: &CMat, adot: &CVec, alpha2: f64, rho_s: f64) -> f64 {
    let m = adot.len();
    let len = rz.nrows();
    let rz_inv = rz.clone().try_inverse().expect("noise covariance is positive definite");
    let outer = adot * adot.adjoint();
    // tr(T R_X) = sum_{n,n'} (R_z^-1)_{n n'} tr(adot adot^H R_X[n', n])
    let mut acc = C64::new(0.0, 0.0);
    for n in 0..len {
        for np in 0..len {
            let z = rz_inv[(n, np)];
            if z == C64::new(0.0, 0.0) {
                continue;
            }
            let mut t = C64::new(0.0, 0.0);
            for a in 0..m {
                for b in 0..m {
                    t += outer[(a, b)] * rx[(np * m + b, n * m + a)];
                }
            }
            acc += z * t;
        }
    }
    2.0 * alpha2 * rho_s * acc.re
}

/// Dense Fisher information of `theta_k` over a CPI of `2 n_small` samples.
pub fn fim_oracle_narrowband<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    n_small: usize,
    sample_period: f64,
) -> Result<f64, MetricError> {
    if n_small > MAX_NARROW_HALF {
        return Err(MetricError::OracleTooLarge { rows: n_small, max: MAX_NARROW_HALF });
    }
    let m = ch.num_antennas();
    let len = 2 * n_small;
    let d = doppler_phases(ch.doppler(k), sample_period, len);
    let interval = |n: usize| usize::from(n >= n_small);

    // vec(X diag(d)) has uncorrelated columns with covariance |d_n|^2 Q_{k,i(n)}
    let mut rx = CMat::zeros(len * m, len * m);
    for n in 0..len {
        let q = &design.q[k][interval(n)];
        let phase = d[n] * d[n].conj();
        for a in 0..m {
            for b in 0..m {
                rx[(n * m + a, n * m + b)] = phase * q[(a, b)];
            }
        }
    }
    let mut rz = CMat::zeros(len, len);
    for n in 0..len {
        let phi = si_power_entrywise(&design.q[k][interval(n)], ch.si_taps(k), budget.eta);
        rz[(n, n)] = C64::new(budget.rho_si * phi + 1.0, 0.0);
    }
    Ok(fim_trace(&rz, &rx, &ch.steering_derivative(k), ch.alpha(k).norm_sqr(), budget.rho_s))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WidebandFim {
    /// Total Fisher information.
    pub fim: f64,
    /// Contribution of the autocorrelation part of `R_X`.
    pub auto: f64,
    /// Contribution of the DAM cross-correlation part of `R_X`.
    pub cross: f64,
    /// Largest entry of the cross part, to show it is not trivially zero.
    pub cross_magnitude: f64,
}

/// Dense Fisher information over `u_small` PRIs of `2 tau_small` samples each,
/// with DAM delay pre-compensation `kappa_l = L - l` on a single symbol stream.
pub fn fim_oracle_wideband<C: Channels>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    u_small: usize,
    tau_small: usize,
    sample_period: f64,
) -> Result<WidebandFim, MetricError> {
    if design.band != Band::Wide {
        return Err(MetricError::WrongBand { expected: Band::Wide });
    }
    let m = ch.num_antennas();
    let n0 = 2 * tau_small;
    let len = u_small * n0;
    if len * m > MAX_WIDE_ROWS {
        return Err(MetricError::OracleTooLarge { rows: len * m, max: MAX_WIDE_ROWS });
    }
    let taps = design.num_taps();
    let kappa = |l: usize| taps - l;
    let interval = |n: usize| usize::from(n % n0 >= tau_small);
    let d = doppler_phases(ch.doppler(k), sample_period, len);

    // x[n] = sum_l w_{i(n),l} c[n - kappa_l] + s[n] on one symbol stream c;
    // E[c[n - kappa_l] c*[n' - kappa_l']] = 1 iff n - kappa_l = n' - kappa_l'.
    // Same-sample same-tap products form the autocorrelation part, every
    // other matching pair the cross-correlation part.
    let mut auto = CMat::zeros(len * m, len * m);
    let mut cross = CMat::zeros(len * m, len * m);
    for n in 0..len {
        let i = interval(n);
        let phase = d[n] * d[n].conj();
        for a in 0..m {
            for b in 0..m {
                auto[(n * m + a, n * m + b)] += phase * design.r[k][i][(a, b)];
            }
        }
        for np in 0..len {
            let ip = interval(np);
            let phase = d[n] * d[np].conj();
            for l in 0..taps {
                for lp in 0..taps {
                    if n as isize - kappa(l) as isize != np as isize - kappa(lp) as isize {
                        continue;
                    }
                    let block = &design.beams[k][i][l] * design.beams[k][ip][lp].adjoint();
                    let target = if n == np && l == lp { &mut auto } else { &mut cross };
                    for a in 0..m {
                        for b in 0..m {
                            target[(n * m + a, np * m + b)] += phase * block[(a, b)];
                        }
                    }
                }
            }
        }
    }
    let mut rz = CMat::zeros(len, len);
    for n in 0..len {
        let phi = si_power_entrywise(&design.q[k][interval(n)], ch.si_taps(k), budget.eta);
        rz[(n, n)] = C64::new(budget.rho_si * phi + 1.0, 0.0);
    }
    let adot = ch.steering_derivative(k);
    let alpha2 = ch.alpha(k).norm_sqr();
    let auto_j = fim_trace(&rz, &auto, &adot, alpha2, budget.rho_s);
    let cross_j = fim_trace(&rz, &cross, &adot, alpha2, budget.rho_s);
    let total = fim_trace(&rz, &(&auto + &cross), &adot, alpha2, budget.rho_s);
    Ok(WidebandFim {
        fim: total,
        auto: auto_j,
        cross: cross_j,
        cross_magnitude: cross.iter().map(|z| z.norm()).fold(0.0, f64::max),
    })
}

/// Sample SINR of the symbols decoded by transceiver `k` in interval `i`.
///
/// Simulates the peer's DAM stream through its multipath channel (plain
/// single-tap transmission narrowband), the Swerling-II echo of the own
/// transmission with Doppler rotation, residual SI and receiver noise.
/// Dedicated-sensing signals of the peer are added and then pre-cancelled.
pub fn empirical_sinr<C: Channels, R: Rng + ?Sized>(
    design: &TransmitDesign,
    ch: &C,
    budget: &LinkBudget,
    k: usize,
    i: usize,
    num_symbols: usize,
    sample_period: f64,
    rng: &mut R,
) -> f64 {
    let m = ch.num_antennas();
    let peer = 1 - k;
    let src = source_interval(design.band, i);
    let peer_beams = &design.beams[peer][src];
    let own_beams = &design.beams[k][i];
    let h = ch.comm_taps(peer);
    let taps = peer_beams.len();
    let channel_taps = h.len();
    let a = ch.steering(k);
    let r_peer = psd_sqrt(&design.r[peer][src]);
    let r_own = psd_sqrt(&design.r[k][i]);
    let phi = si_power_entrywise(&design.q[k][i], ch.si_taps(k), budget.eta).max(0.0);
    let si_var = budget.rho_si * phi;
    let sqrt_c = budget.rho_c.sqrt();
    let sqrt_s = budget.rho_s.sqrt();
    let alpha_var = ch.alpha(k).norm_sqr();

    // symbol streams with enough history for pre-compensation and multipath
    let hist = taps + channel_taps + 1;
    let total = num_symbols + hist;
    let peer_c: Vec<C64> = (0..total).map(|_| complex_gaussian(rng, 1.0)).collect();
    let own_c: Vec<C64> = (0..total).map(|_| complex_gaussian(rng, 1.0)).collect();
    let white = |rng: &mut R| CVec::from_fn(m, |_, _| complex_gaussian(rng, 1.0));
    let peer_s: Vec<CVec> = (0..total).map(|_| &r_peer * white(rng)).collect();

    let peer_x = |t: usize| -> CVec {
        let mut x = peer_s[t].clone();
        for (l, w) in peer_beams.iter().enumerate() {
            x += w * peer_c[t - (taps - l)];
        }
        x
    };
    let gain: C64 = h.iter().zip(peer_beams).map(|(hl, w)| hl.dotc(w)).sum();

    let mut p_sig = 0.0;
    let mut p_int = 0.0;
    for n in hist..total {
        let mut received = C64::new(0.0, 0.0);
        let mut known = C64::new(0.0, 0.0);
        for (l, hl) in h.iter().enumerate() {
            received += sqrt_c * hl.dotc(&peer_x(n - l));
            known += sqrt_c * hl.dotc(&peer_s[n - l]);
        }
        let mut own = &r_own * white(rng);
        for (l, w) in own_beams.iter().enumerate() {
            own += w * own_c[n - (taps - l)];
        }
        let alpha = complex_gaussian(rng, alpha_var);
        let doppler = C64::from_polar(
            1.0,
            2.0 * std::f64::consts::PI * ch.doppler(k) * (n - hist + 1) as f64 * sample_period,
        );
        received += sqrt_s * alpha * doppler * a.dotc(&own);
        received += complex_gaussian(rng, si_var) + complex_gaussian(rng, 1.0);

        let decoded = received - known;
        let desired = sqrt_c * gain * peer_c[n - taps];
        p_sig += desired.norm_sqr();
        p_int += (decoded - desired).norm_sqr();
    }
    p_sig / p_int
}

/// Random PSD matrix with the given trace.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, m: usize, trace: f64) -> CMat {
    let g = CMat::from_fn(m, m, |_, _| complex_gaussian(rng, 1.0));
    let q = &g * g.adjoint();
    let t = q.trace().re;
    q.scale(trace / t)
}

/// Random feasible narrowband design `Q = w w^H + R` honoring the duplex pattern.
pub fn random_narrow_design<R: Rng + ?Sized>(rng: &mut R, m: usize, mode: DuplexMode) -> TransmitDesign {
    let mut beams: [[Vec<CVec>; 2]; 2] = Default::default();
    let mut q: [[CMat; 2]; 2] = Default::default();
    for k in 0..2 {
        let w = complex_gaussian_vec(rng, m, 1.0);
        let w = w.scale(rng.random_range(0.1..0.7) / w.norm());
        let tr = rng.random_range(0.05..0.4);
        let qq = outer(&w) + random_psd(rng, m, tr);
        let w2 = complex_gaussian_vec(rng, m, 1.0);
        let w2 = w2.scale(rng.random_range(0.1..0.7) / w2.norm());
        let tr2 = rng.random_range(0.05..0.4);
        let qq2 = outer(&w2) + random_psd(rng, m, tr2);
        for i in 0..2 {
            let (wi, qi) = match mode {
                DuplexMode::Full => (w.clone(), qq.clone()),
                DuplexMode::Half => (if i == 0 { w.clone() } else { w2.clone() }, if i == 0 { qq.clone() } else { qq2.clone() }),
            };
            if mode.silent(Band::Narrow, k, i) {
                beams[k][i] = vec![CVec::zeros(m)];
                q[k][i] = CMat::zeros(m, m);
            } else {
                beams[k][i] = vec![wi];
                q[k][i] = qi;
            }
        }
    }
    TransmitDesign::new(mode, Band::Narrow, beams, q).unwrap()
}

/// Beam for tap `l` of transceiver `k` projected orthogonal to all other taps.
fn zf_beam<R: Rng + ?Sized>(rng: &mut R, h: &[CVec], l: usize) -> CVec {
    let m = h[0].len();
    let mut v = complex_gaussian_vec(rng, m, 1.0);
    // Gram-Schmidt over the other taps, twice for accuracy
    let others: Vec<&CVec> = h.iter().enumerate().filter(|(j, _)| *j != l).map(|(_, x)| x).collect();
    let mut basis: Vec<CVec> = Vec::new();
    for o in others {
        let mut u = o.clone();
        for b in &basis {
            u -= b * b.dotc(&u);
        }
        basis.push(u.unscale(u.norm()));
    }
    for _ in 0..2 {
        for b in &basis {
            v -= b * b.dotc(&v);
        }
    }
    v
}

/// Random feasible DAM design whose beams zero-force all other taps.
pub fn random_wide_design<R: Rng + ?Sized>(rng: &mut R, ch: &WidebandChannels, mode: DuplexMode) -> TransmitDesign {
    let m = ch.num_antennas();
    let taps = ch.num_taps();
    let mut beams: [[Vec<CVec>; 2]; 2] = Default::default();
    let mut q: [[CMat; 2]; 2] = Default::default();
    for k in 0..2 {
        let draw = |rng: &mut R| -> (Vec<CVec>, CMat) {
            let ws: Vec<CVec> = (0..taps)
                .map(|l| {
                    let w = zf_beam(rng, &ch.h_taps[k], l);
                    let s = rng.random_range(0.05..0.4) / w.norm();
                    w.scale(s)
                })
                .collect();
            let tr = rng.random_range(0.05..0.3);
            let mut qq = random_psd(rng, m, tr);
            for w in &ws {
                qq += outer(w);
            }
            (ws, qq)
        };
        let first = draw(rng);
        let second = if mode == DuplexMode::Full { first.clone() } else { draw(rng) };
        for (i, (ws, qq)) in [first, second].into_iter().enumerate() {
            if mode.silent(Band::Wide, k, i) {
                beams[k][i] = vec![CVec::zeros(m); taps];
                q[k][i] = CMat::zeros(m, m);
            } else {
                beams[k][i] = ws;
                q[k][i] = qq;
            }
        }
    }
    TransmitDesign::new(mode, Band::Wide, beams, q).unwrap()
}
