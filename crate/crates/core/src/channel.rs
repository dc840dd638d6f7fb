//! Array steering vectors and random channel realizations for two
//! bidirectional transceivers `A` (index 0) and `B` (index 1).
//!
//! Narrowband channels are single-tap Rician; wideband channels have `L`
//! communication taps (Rician first tap, Rayleigh tail) and `L_si`
//! Rayleigh self-interference taps following an exponential power-delay profile.

use rand::Rng;

use crate::linalg::{complex_gaussian_vec, CVec, C64, J, ONE};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChannelError {
    #[error("antenna count must be at least 1")]
    NoAntennas,
    #[error("element spacing ratio must be positive, got {0}")]
    BadSpacing(f64),
    #[error("{taps} channel taps exceed {antennas} antennas; zero-forcing needs L <= M")]
    TooManyTaps { taps: usize, antennas: usize },
    #[error("power-delay profile needs at least one tap and a positive decay")]
    BadProfile,
    #[error("Rician factor must be nonnegative, got {0}")]
    NegativeRician(f64),
    #[error("modified Rician factor {beta} unreachable; the profile caps it below {max}")]
    UnreachableRician { beta: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    pub entries: CVec,
    pub theta: f64,
    pub spacing_ratio: f64,
}

fn check_array(m: usize, spacing_ratio: f64) -> Result<(), ChannelError> {
    if m == 0 {
        return Err(ChannelError::NoAntennas);
    }
    if !(spacing_ratio > 0.0) {
        return Err(ChannelError::BadSpacing(spacing_ratio));
    }
    Ok(())
}

fn phase(theta: f64, m: usize, spacing_ratio: f64) -> f64 {
    2.0 * std::f64::consts::PI * spacing_ratio * m as f64 * theta.sin()
}

/// Uniform linear array response; entry `m` is `exp(j 2 pi (d/lambda) m sin theta)`.
pub fn steering_vector(theta: f64, m: usize, spacing_ratio: f64) -> Result<SteeringVector, ChannelError> {
    check_array(m, spacing_ratio)?;
    let entries = CVec::from_fn(m, |i, _| C64::from_polar(1.0, phase(theta, i, spacing_ratio)));
    Ok(SteeringVector { entries, theta, spacing_ratio })
}

/// Derivative of [`steering_vector`] with respect to `theta`.
pub fn steering_derivative(theta: f64, m: usize, spacing_ratio: f64) -> Result<CVec, ChannelError> {
    check_array(m, spacing_ratio)?;
    let c = 2.0 * std::f64::consts::PI * spacing_ratio * theta.cos();
    Ok(CVec::from_fn(m, |i, _| {
        J * (c * i as f64) * C64::from_polar(1.0, phase(theta, i, spacing_ratio))
    }))
}

/// Read-only view shared by both channel families.
pub trait Channels {
    fn num_antennas(&self) -> usize;
    fn spacing_ratio(&self) -> f64;
    /// Channel from transceiver `k` to its peer, one vector per tap.
    fn comm_taps(&self, k: usize) -> &[CVec];
    /// Self-interference channel of transceiver `k`, one vector per tap.
    fn si_taps(&self, k: usize) -> &[CVec];
    fn theta(&self, k: usize) -> f64;
    fn alpha(&self, k: usize) -> C64;
    fn doppler(&self, k: usize) -> f64;

    fn steering(&self, k: usize) -> CVec {
        steering_vector(self.theta(k), self.num_antennas(), self.spacing_ratio())
            .expect("validated at construction")
            .entries
    }

    fn steering_derivative(&self, k: usize) -> CVec {
        steering_derivative(self.theta(k), self.num_antennas(), self.spacing_ratio())
            .expect("validated at construction")
    }
}

/// Geometry and fading parameters common to both bands.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    pub antennas: usize,
    pub spacing_ratio: f64,
    /// Target angles of A and B, radians.
    pub theta: [f64; 2],
    /// Rician factor, linear; `f64::INFINITY` gives a pure line-of-sight channel.
    pub rician: f64,
    /// Doppler shifts in Hz.
    pub doppler: [f64; 2],
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        check_array(self.antennas, self.spacing_ratio)?;
        if !(self.rician >= 0.0) {
            return Err(ChannelError::NegativeRician(self.rician));
        }
        Ok(())
    }
}

/// Doppler shift `2 v / lambda` for speed `v` (m/s) at carrier `fc` (Hz).
pub fn doppler_shift(speed: f64, carrier: f64) -> f64 {
    2.0 * speed * carrier / SPEED_OF_LIGHT
}

/// LOS and NLOS amplitude weights `sqrt(b/(b+1))`, `sqrt(1/(b+1))`.
fn rician_weights(beta: f64) -> (f64, f64) {
    if beta.is_infinite() {
        (1.0, 0.0)
    } else {
        ((beta / (beta + 1.0)).sqrt(), (1.0 / (beta + 1.0)).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NarrowbandChannels {
    pub h: [CVec; 2],
    pub g: [CVec; 2],
    pub theta: [f64; 2],
    pub alpha: [C64; 2],
    pub nu: [f64; 2],
    pub spacing_ratio: f64,
}

/// Draws `h_A, h_B` (Rician) then `g_A, g_B` (Rayleigh) from `rng`.
pub fn sample_narrowband<R: Rng + ?Sized>(
    params: &ChannelParams,
    rng: &mut R,
) -> Result<NarrowbandChannels, ChannelError> {
    params.validate()?;
    let m = params.antennas;
    let (los, nlos) = rician_weights(params.rician);
    let mut h = Vec::with_capacity(2);
    for k in 0..2 {
        let a = steering_vector(params.theta[k], m, params.spacing_ratio)?.entries;
        let w = complex_gaussian_vec(rng, m, 1.0);
        h.push(a.scale(los) + w.scale(nlos));
    }
    let g0 = complex_gaussian_vec(rng, m, 1.0);
    let g1 = complex_gaussian_vec(rng, m, 1.0);
    let h1 = h.pop().unwrap();
    let h0 = h.pop().unwrap();
    Ok(NarrowbandChannels {
        h: [h0, h1],
        g: [g0, g1],
        theta: params.theta,
        alpha: [ONE; 2],
        nu: params.doppler,
        spacing_ratio: params.spacing_ratio,
    })
}

impl Channels for NarrowbandChannels {
    fn num_antennas(&self) -> usize {
        self.h[0].len()
    }
    fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }
    fn comm_taps(&self, k: usize) -> &[CVec] {
        std::slice::from_ref(&self.h[k])
    }
    fn si_taps(&self, k: usize) -> &[CVec] {
        std::slice::from_ref(&self.g[k])
    }
    fn theta(&self, k: usize) -> f64 {
        self.theta[k]
    }
    fn alpha(&self, k: usize) -> C64 {
        self.alpha[k]
    }
    fn doppler(&self, k: usize) -> f64 {
        self.nu[k]
    }
}

/// Exponential profile `sigma_l^2 ∝ decay^l`, normalized to unit sum.
pub fn power_delay_profile(taps: usize, decay: f64) -> Result<Vec<f64>, ChannelError> {
    if taps == 0 || !(decay > 0.0) {
        return Err(ChannelError::BadProfile);
    }
    let raw: Vec<f64> = (0..taps).map(|l| decay.powi(l as i32)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// Rician factor of the aggregate channel when only the first tap has a
/// line-of-sight component with factor `beta0`.
pub fn modified_rician_factor(beta0: f64, pdp: &[f64]) -> f64 {
    let s0 = pdp[0];
    let tail: f64 = pdp[1..].iter().sum();
    if beta0.is_infinite() {
        return if tail == 0.0 { f64::INFINITY } else { s0 / tail };
    }
    beta0 * s0 / ((beta0 + 1.0) * tail + s0)
}

/// First-tap factor `beta0` that yields the aggregate factor `beta`.
pub fn first_tap_rician_factor(beta: f64, pdp: &[f64]) -> Result<f64, ChannelError> {
    if !(beta >= 0.0) {
        return Err(ChannelError::NegativeRician(beta));
    }
    let s0 = pdp[0];
    let tail: f64 = pdp[1..].iter().sum();
    if tail == 0.0 {
        return Ok(beta);
    }
    let max = s0 / tail;
    if beta >= max {
        return Err(ChannelError::UnreachableRician { beta, max });
    }
    Ok(beta * (tail + s0) / (s0 - beta * tail))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WidebandParams {
    pub base: ChannelParams,
    pub pdp: Vec<f64>,
    pub si_pdp: Vec<f64>,
    /// Self-interference delay in samples; does not enter any metric.
    pub tau_si: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WidebandChannels {
    pub h_taps: [Vec<CVec>; 2],
    pub g_taps: [Vec<CVec>; 2],
    pub pdp: Vec<f64>,
    pub theta: [f64; 2],
    pub alpha: [C64; 2],
    pub nu: [f64; 2],
    pub tau_si: usize,
    pub spacing_ratio: f64,
}

/// Draws the taps of `h_A`, `h_B`, then `g_A`, `g_B`. `base.rician` is the
/// first-tap factor.
pub fn sample_wideband<R: Rng + ?Sized>(
    params: &WidebandParams,
    rng: &mut R,
) -> Result<WidebandChannels, ChannelError> {
    let base = &params.base;
    base.validate()?;
    let m = base.antennas;
    if params.pdp.is_empty() || params.si_pdp.is_empty() {
        return Err(ChannelError::BadProfile);
    }
    if params.pdp.len() > m {
        return Err(ChannelError::TooManyTaps { taps: params.pdp.len(), antennas: m });
    }
    let (los, nlos) = rician_weights(base.rician);
    let mut h_taps: [Vec<CVec>; 2] = [Vec::new(), Vec::new()];
    for (k, taps) in h_taps.iter_mut().enumerate() {
        let a = steering_vector(base.theta[k], m, base.spacing_ratio)?.entries;
        let s0 = params.pdp[0];
        let w = complex_gaussian_vec(rng, m, s0);
        taps.push(a.scale(los * s0.sqrt()) + w.scale(nlos));
        for &p in &params.pdp[1..] {
            taps.push(complex_gaussian_vec(rng, m, p));
        }
    }
    let mut g_taps: [Vec<CVec>; 2] = [Vec::new(), Vec::new()];
    for taps in g_taps.iter_mut() {
        for &p in &params.si_pdp {
            taps.push(complex_gaussian_vec(rng, m, p));
        }
    }
    Ok(WidebandChannels {
        h_taps,
        g_taps,
        pdp: params.pdp.clone(),
        theta: base.theta,
        alpha: [ONE; 2],
        nu: base.doppler,
        tau_si: params.tau_si,
        spacing_ratio: base.spacing_ratio,
    })
}

impl WidebandChannels {
    pub fn num_taps(&self) -> usize {
        self.h_taps[0].len()
    }

    /// Single-tap narrowband view (first taps only).
    pub fn first_tap_narrowband(&self) -> NarrowbandChannels {
        NarrowbandChannels {
            h: [self.h_taps[0][0].clone(), self.h_taps[1][0].clone()],
            g: [self.g_taps[0][0].clone(), self.g_taps[1][0].clone()],
            theta: self.theta,
            alpha: self.alpha,
            nu: self.nu,
            spacing_ratio: self.spacing_ratio,
        }
    }
}

impl From<&NarrowbandChannels> for WidebandChannels {
    fn from(n: &NarrowbandChannels) -> Self {
        WidebandChannels {
            h_taps: [vec![n.h[0].clone()], vec![n.h[1].clone()]],
            g_taps: [vec![n.g[0].clone()], vec![n.g[1].clone()]],
            pdp: vec![1.0],
            theta: n.theta,
            alpha: n.alpha,
            nu: n.nu,
            tau_si: 0,
            spacing_ratio: n.spacing_ratio,
        }
    }
}

impl Channels for WidebandChannels {
    fn num_antennas(&self) -> usize {
        self.h_taps[0][0].len()
    }
    fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }
    fn comm_taps(&self, k: usize) -> &[CVec] {
        &self.h_taps[k]
    }
    fn si_taps(&self, k: usize) -> &[CVec] {
        &self.g_taps[k]
    }
    fn theta(&self, k: usize) -> f64 {
        self.theta[k]
    }
    fn alpha(&self, k: usize) -> C64 {
        self.alpha[k]
    }
    fn doppler(&self, k: usize) -> f64 {
        self.nu[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{outer, quad_form, CMat};
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(m: usize, rician: f64) -> ChannelParams {
        ChannelParams { antennas: m, spacing_ratio: 0.5, theta: [0.0, 0.3], rician, doppler: [200.0, 200.0] }
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 4, 0.5).unwrap();
        assert!(a.entries.iter().all(|z| (z - ONE).norm() == 0.0));
        let a = steering_vector(PI / 2.0, 2, 0.5).unwrap();
        assert!((a.entries[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        // entry m = exp(j pi m / 2) at theta = pi/6, computed as a rotation power
        let a = steering_vector(PI / 6.0, 3, 0.5).unwrap();
        let mut z = ONE;
        for m in 0..3 {
            assert!((a.entries[m] - z).norm() < 1e-12);
            z *= J;
        }
        assert_eq!(steering_vector(0.0, 0, 0.5).unwrap_err(), ChannelError::NoAntennas);
        assert!(matches!(steering_vector(0.0, 2, 0.0), Err(ChannelError::BadSpacing(_))));
    }

    #[test]
    fn derivative_examples() {
        let d = steering_derivative(0.0, 3, 0.5).unwrap();
        assert!((d[0]).norm() == 0.0);
        assert!((d[1] - J * PI).norm() < 1e-14);
        assert!((d[2] - J * 2.0 * PI).norm() < 1e-14);
        let d = steering_derivative(PI / 2.0, 5, 0.5).unwrap();
        assert!(d.iter().all(|z| z.norm() < 1e-14));
        // theta = pi/6: phase of entry 1 is pi sin(pi/6) = pi/2; checked against a central difference
        let d = steering_derivative(PI / 6.0, 2, 0.5).unwrap();
        let expect = J * PI * (PI / 6.0).cos() * J;
        assert!((d[1] - expect).norm() < 1e-12);
        let h = 1e-6;
        let fd = (steering_vector(PI / 6.0 + h, 2, 0.5).unwrap().entries[1]
            - steering_vector(PI / 6.0 - h, 2, 0.5).unwrap().entries[1])
            / (2.0 * h);
        assert!((fd - d[1]).norm() < 1e-6);
    }

    proptest! {
        #[test]
        fn steering_entries_unit_modulus(theta in -PI..PI, m in 1usize..16, sr in 0.05f64..2.0) {
            let a = steering_vector(theta, m, sr).unwrap();
            prop_assert_eq!(a.entries[0], ONE);
            for z in a.entries.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn derivative_matches_central_difference(theta in -1.5f64..1.5, m in 1usize..9, sr in 0.1f64..1.0) {
            let h = 1e-6;
            let ap = steering_vector(theta + h, m, sr).unwrap().entries;
            let am = steering_vector(theta - h, m, sr).unwrap().entries;
            let fd = (ap - am).unscale(2.0 * h);
            let d = steering_derivative(theta, m, sr).unwrap();
            for i in 0..m {
                prop_assert!((fd[i] - d[i]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn derivative_sign_does_not_change_quadratic_forms() {
        let mut rng = stream(1, 0, Purpose::Oracle);
        for _ in 0..20 {
            let m = 4;
            let g = CMat::from_fn(m, m, |_, _| crate::linalg::complex_gaussian(&mut rng, 1.0));
            let q = &g * g.adjoint();
            let d = steering_derivative(0.4, m, 0.5).unwrap();
            assert_eq!(quad_form(&q, &d), quad_form(&q, &(-d.clone())));
            assert!((outer(&d) - outer(&(-d))).norm() == 0.0);
        }
    }

    #[test]
    fn line_of_sight_limit_is_exact() {
        let mut rng = stream(2, 0, Purpose::Channel);
        let ch = sample_narrowband(&params(4, f64::INFINITY), &mut rng).unwrap();
        for k in 0..2 {
            let a = steering_vector(ch.theta[k], 4, 0.5).unwrap().entries;
            assert_eq!(ch.h[k], a);
        }
    }

    #[test]
    fn rayleigh_entry_variance() {
        let mut rng = stream(3, 0, Purpose::Channel);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let ch = sample_narrowband(&params(2, 0.0), &mut rng).unwrap();
            acc += ch.h[0][1].norm_sqr();
        }
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn rician_moments_within_three_standard_errors() {
        // mean of h entry is sqrt(b/(b+1)) a_m; the NLOS part has variance 1/(b+1)
        let beta = 1.0;
        let mut rng = stream(4, 0, Purpose::Channel);
        let n = 10_000;
        let a = steering_vector(0.0, 3, 0.5).unwrap().entries;
        let mut mean = C64::new(0.0, 0.0);
        let mut power = 0.0;
        for _ in 0..n {
            let ch = sample_narrowband(&params(3, beta), &mut rng).unwrap();
            mean += ch.h[0][2];
            power += ch.h[0][2].norm_sqr();
        }
        mean /= n as f64;
        power /= n as f64;
        let expect_mean = a[2] * (beta / (beta + 1.0)).sqrt();
        let se = (1.0 / (beta + 1.0) / n as f64).sqrt();
        assert!((mean - expect_mean).norm() < 3.0 * se * 1.5);
        // E|h|^2 = 1; |h|^2 has variance below 2 here
        assert!((power - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = params(4, 1.0);
        let a = sample_narrowband(&p, &mut stream(9, 1, Purpose::Channel)).unwrap();
        let b = sample_narrowband(&p, &mut stream(9, 1, Purpose::Channel)).unwrap();
        assert_eq!(a, b);
        let wp = WidebandParams {
            base: p.clone(),
            pdp: power_delay_profile(2, (-1.0f64).exp()).unwrap(),
            si_pdp: power_delay_profile(2, (-1.0f64).exp()).unwrap(),
            tau_si: 0,
        };
        let a = sample_wideband(&wp, &mut stream(9, 1, Purpose::Channel)).unwrap();
        let b = sample_wideband(&wp, &mut stream(9, 1, Purpose::Channel)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_delay_profile_examples() {
        assert_eq!(power_delay_profile(1, 0.3).unwrap(), vec![1.0]);
        assert_eq!(power_delay_profile(2, 1.0).unwrap(), vec![0.5, 0.5]);
        let p = power_delay_profile(4, (-1.0f64).exp()).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for l in 1..4 {
            assert!((p[l] / p[l - 1] - (-1.0f64).exp()).abs() < 1e-12);
        }
        assert_eq!(power_delay_profile(0, 1.0), Err(ChannelError::BadProfile));
    }

    #[test]
    fn wideband_rejects_more_taps_than_antennas() {
        let wp = WidebandParams {
            base: params(2, 1.0),
            pdp: power_delay_profile(3, 1.0).unwrap(),
            si_pdp: vec![1.0],
            tau_si: 0,
        };
        let err = sample_wideband(&wp, &mut stream(0, 0, Purpose::Channel)).unwrap_err();
        assert_eq!(err, ChannelError::TooManyTaps { taps: 3, antennas: 2 });
    }

    #[test]
    fn wideband_single_tap_line_of_sight() {
        let wp = WidebandParams { base: params(4, f64::INFINITY), pdp: vec![1.0], si_pdp: vec![1.0], tau_si: 0 };
        let ch = sample_wideband(&wp, &mut stream(0, 0, Purpose::Channel)).unwrap();
        let a = steering_vector(ch.theta[1], 4, 0.5).unwrap().entries;
        assert_eq!(ch.h_taps[1][0], a);
    }

    #[test]
    fn wideband_total_power() {
        let wp = WidebandParams {
            base: params(4, 1.0),
            pdp: power_delay_profile(3, (-1.0f64).exp()).unwrap(),
            si_pdp: power_delay_profile(2, (-1.0f64).exp()).unwrap(),
            tau_si: 0,
        };
        let mut rng = stream(5, 0, Purpose::Channel);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let ch = sample_wideband(&wp, &mut rng).unwrap();
            acc += ch.h_taps[0].iter().map(|h| h.norm_squared()).sum::<f64>() / 4.0;
        }
        assert!((acc / n as f64 - 1.0).abs() < 0.05);
    }

    /// Bisection on the forward map, independent of the closed-form inverse.
    fn bisect_beta0(beta: f64, pdp: &[f64]) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while modified_rician_factor(hi, pdp) < beta {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if modified_rician_factor(mid, pdp) < beta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn modified_rician_examples() {
        assert_eq!(modified_rician_factor(3.0, &[1.0]), 3.0);
        assert!((modified_rician_factor(1.0, &[0.5, 0.5]) - 1.0 / 3.0).abs() < 1e-15);
        let pdp = power_delay_profile(3, (-1.0f64).exp()).unwrap();
        for &beta in &[0.0, 0.1, 0.5, 1.0, 1.5] {
            let b0 = first_tap_rician_factor(beta, &pdp).unwrap();
            assert!((modified_rician_factor(b0, &pdp) - beta).abs() < 1e-10);
            let bis = bisect_beta0(beta, &pdp);
            assert!((bis - b0).abs() <= 1e-10 * (1.0 + b0), "{bis} vs {b0}");
        }
        let max = pdp[0] / (1.0 - pdp[0]);
        assert!(matches!(
            first_tap_rician_factor(max * 1.01, &pdp),
            Err(ChannelError::UnreachableRician { .. })
        ));
    }

    #[test]
    fn doppler_default() {
        assert!((doppler_shift(10.0, 3e9) - 200.138).abs() < 1e-2);
    }
}
