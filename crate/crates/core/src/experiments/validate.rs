//! Oracle checks of the closed-form metrics and the optimizer, with optional
//! fault injection so the checks themselves can be shown to bite.

use rand::Rng;

use super::config::{derive_timing, Scenario, Timing};
use super::ExperimentError;
use crate::channel::{power_delay_profile, sample_narrowband, sample_wideband, ChannelParams, Channels, WidebandParams};
use crate::conic::{solve, SolveStatus};
use crate::linalg::quad_form;
use crate::metrics::oracle::{empirical_sinr, fim_oracle_narrowband, fim_oracle_wideband, random_narrow_design, random_wide_design};
use crate::metrics::{
    crb, effective_gain, residual_si_power, sinr, Band, DuplexMode, LinkBudget, MetricError, TransmitDesign, ZF_TOL,
};
use crate::rng::{stream, Purpose};
use crate::sca::oracle::{random_iterate, sampled_subproblem_optimum};
use crate::sca::{narrowband, wideband, ScaOptions};

/// Deliberate defects for exercising the checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the residual-SI term in the CRB denominator.
    CrbSignFlip,
    /// Leak `1e-3` of a foreign tap into a wideband beam.
    ZfLeak,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn at_most(name: &str, measured: f64, threshold: f64, detail: String) -> Check {
    Check { name: name.into(), passed: measured <= threshold, measured, threshold, detail }
}

fn errored(name: &str, threshold: f64, e: impl std::fmt::Display) -> Check {
    Check { name: name.into(), passed: false, measured: f64::NAN, threshold, detail: e.to_string() }
}

fn mode_of(t: usize) -> DuplexMode {
    if t % 2 == 0 {
        DuplexMode::Full
    } else {
        DuplexMode::Half
    }
}

fn params(sc: &Scenario, m: usize) -> ChannelParams {
    ChannelParams {
        antennas: m,
        spacing_ratio: sc.config.spacing_ratio,
        theta: sc.theta,
        rician: sc.beta,
        doppler: sc.config.doppler_hz,
    }
}

fn wide_params(sc: &Scenario, m: usize, taps: usize) -> Result<WidebandParams, ExperimentError> {
    let decay = sc.config.wideband.pdp_decay;
    Ok(WidebandParams {
        base: params(sc, m),
        pdp: power_delay_profile(taps, decay)?,
        si_pdp: power_delay_profile(sc.config.wideband.si_taps, decay)?,
        tau_si: 0,
    })
}

/// Closed-form CRB, or its sign-flipped variant under [`Fault::CrbSignFlip`].
fn closed_form_crb<C: Channels>(
    d: &TransmitDesign,
    ch: &C,
    b: &LinkBudget,
    k: usize,
    fault: Option<Fault>,
) -> Result<f64, MetricError> {
    if fault != Some(Fault::CrbSignFlip) {
        return crb(d, ch, b, k);
    }
    let ad = ch.steering_derivative(k);
    let mut s = 0.0;
    for i in 0..2 {
        let phi = residual_si_power(&d.q[k][i], ch.si_taps(k), b.eta)?;
        s += ch.alpha(k).norm_sqr() * quad_form(&d.q[k][i], &ad) / (1.0 - b.rho_si * phi);
    }
    Ok(1.0 / (2.0 * b.rho_s * b.n_half as f64 * s))
}

fn fim_narrowband(sc: &Scenario, fault: Option<Fault>) -> Result<Check, ExperimentError> {
    let mut rng = stream(sc.config.sweep.master_seed, 0, Purpose::Oracle);
    let mut worst: f64 = 0.0;
    let pairs = sc.config.validate.fim_pairs;
    for t in 0..pairs {
        let m = 2 + t % 3;
        let ch = sample_narrowband(&params(sc, m), &mut rng)?;
        let d = random_narrow_design(&mut rng, m, mode_of(t));
        let n_small = 1 + t % 8;
        let b = LinkBudget { n_half: n_small, ..sc.budget(Band::Narrow) };
        for k in 0..2 {
            let c = closed_form_crb(&d, &ch, &b, k, fault)?;
            let j = fim_oracle_narrowband(&d, &ch, &b, k, n_small, sc.sample_period(Band::Narrow))?;
            worst = worst.max((c * j - 1.0).abs());
        }
    }
    Ok(at_most("fim_narrowband", worst, 1e-8, format!("{pairs} pairs, max |CRB * J_oracle - 1|")))
}

fn fim_wideband(sc: &Scenario, fault: Option<Fault>) -> Result<[Check; 2], ExperimentError> {
    let mut rng = stream(sc.config.sweep.master_seed, 1, Purpose::Oracle);
    let (mut worst, mut cross, mut structure): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    let v = &sc.config.validate;
    let n = v.fim_pairs.max(v.cross_designs);
    for t in 0..n {
        let m = 3 + t % 2;
        let taps = 2 + t % 2;
        let ch = sample_wideband(&wide_params(sc, m, taps)?, &mut rng)?;
        let mode = mode_of(t);
        let d = random_wide_design(&mut rng, &ch, mode);
        let (u, tau) = (2, 2);
        let b = LinkBudget { n_half: u * tau, ..sc.budget(Band::Wide) };
        for k in 0..2 {
            let f = fim_oracle_wideband(&d, &ch, &b, k, u, tau, sc.sample_period(Band::Wide))?;
            if t < v.fim_pairs {
                worst = worst.max((closed_form_crb(&d, &ch, &b, k, fault)? * f.fim - 1.0).abs());
            }
            if t < v.cross_designs {
                cross = cross.max(f.cross.abs());
                if mode == DuplexMode::Full {
                    structure = structure.min(f.cross_magnitude);
                }
            }
        }
    }
    Ok([
        at_most("fim_wideband", worst, 1e-8, format!("{} pairs, max |CRB * J_oracle - 1|", v.fim_pairs)),
        at_most(
            "cross_term",
            cross,
            1e-10,
            format!("{} designs, max |cross contribution|; smallest cross entry {structure:e}", v.cross_designs),
        ),
    ])
}

fn zf_precondition(sc: &Scenario, fault: Option<Fault>) -> Result<Check, ExperimentError> {
    let mut rng = stream(sc.config.sweep.master_seed, 2, Purpose::Oracle);
    let mut worst: f64 = 0.0;
    let mut rejected = 0;
    let m = sc.config.antennas;
    let taps = sc.config.wideband.taps;
    for t in 0..sc.config.validate.cross_designs {
        let ch = sample_wideband(&wide_params(sc, m, taps)?, &mut rng)?;
        let mut d = random_wide_design(&mut rng, &ch, mode_of(t));
        if fault == Some(Fault::ZfLeak) && taps > 1 {
            let h = &ch.h_taps[1][1];
            d.beams[1][0][0] += h.scale(1e-3 / h.norm_squared());
        }
        for k in 0..2 {
            worst = worst.max(d.zf_residual(&ch, k));
            for i in 0..2 {
                if sinr(&d, &ch, &sc.budget(Band::Wide), k, i).is_err() {
                    rejected += 1;
                }
            }
        }
    }
    let mut c = at_most("zf_precondition", worst, ZF_TOL, format!("max ZF residual; {rejected} SINR evaluations rejected"));
    c.passed &= rejected == 0;
    Ok(c)
}

fn surrogate_minorant(sc: &Scenario) -> Result<Check, ExperimentError> {
    let master = sc.config.sweep.master_seed;
    let mut rng = stream(master, 3, Purpose::Oracle);
    let points = sc.config.validate.surrogate_points;
    let mut worst = f64::INFINITY;
    let opts = ScaOptions { restarts: 1, ..sc.options.clone() };
    for (t, mode) in [DuplexMode::Full, DuplexMode::Half].into_iter().enumerate() {
        let ch = sc.narrow_channels(master, t as u64, sc.beta)?;
        let pb = narrowband::problem(&ch, sc.budget(Band::Narrow), 0.5, mode, opts.clone())?;
        let sub = pb.subproblem(&random_iterate(&pb.layout, &mut rng))?;
        for _ in 0..points {
            worst = worst.min(sub.minorant_gap(&pb, &random_iterate(&pb.layout, &mut rng))?);
        }
        let ch = sc.wide_channels(master, t as u64, sc.beta)?;
        let pb = wideband::problem(&ch, sc.budget(Band::Wide), 0.5, mode, opts.clone())?;
        let sub = pb.subproblem(&random_iterate(&pb.layout, &mut rng))?;
        for _ in 0..points {
            worst = worst.min(sub.minorant_gap(&pb, &random_iterate(&pb.layout, &mut rng))?);
        }
    }
    Ok(Check {
        name: "surrogate_minorant".into(),
        passed: worst >= -1e-9,
        measured: worst,
        threshold: -1e-9,
        detail: format!("{points} points per (band, mode), min exact - surrogate"),
    })
}

/// Largest shortfall of the barrier solver against rejection sampling over
/// random `M = 2` narrowband subproblems.
pub fn solver_shortfall(sc: &Scenario, subproblems: usize, samples: usize) -> Result<f64, ExperimentError> {
    let master = sc.config.sweep.master_seed;
    let mut worst = f64::NEG_INFINITY;
    let opts = ScaOptions { restarts: 1, ..sc.options.clone() };
    for t in 0..subproblems {
        let mut rng = stream(master, 1000 + t as u64, Purpose::Oracle);
        let p = ChannelParams { antennas: 2, ..params(sc, 2) };
        let ch = sample_narrowband(&p, &mut rng)?;
        let weight = rng.random_range(0.05..0.95);
        let pb = narrowband::problem(&ch, sc.budget(Band::Narrow), weight, mode_of(t), opts.clone())?;
        let sub = pb.subproblem(&random_iterate(&pb.layout, &mut rng))?;
        let x0 = sub
            .strictly_feasible_start()
            .ok_or_else(|| ExperimentError::Check(format!("subproblem {t}: no interior start")))?;
        let sol = solve(&sub.spec, &x0, &pb.options.solver).map_err(|e| ExperimentError::Check(e.to_string()))?;
        if sol.status != SolveStatus::Optimal {
            return Err(ExperimentError::Check(format!("subproblem {t}: solver status {:?}", sol.status)));
        }
        if let Some(best) = sampled_subproblem_optimum(&pb, &sub, samples, &mut rng) {
            worst = worst.max(best - sol.objective);
        }
    }
    Ok(worst)
}

fn empirical(sc: &Scenario) -> Result<Check, ExperimentError> {
    let mut rng = stream(sc.config.sweep.master_seed, 4, Purpose::Symbols);
    let v = &sc.config.validate;
    let m = sc.config.antennas;
    let mut worst: f64 = 0.0;
    for band in [Band::Narrow, Band::Wide] {
        let b = sc.budget(band);
        for t in 0..v.sinr_designs {
            let (k, i) = (t % 2, (t / 2) % 2);
            let (g, e) = match band {
                Band::Narrow => {
                    let ch = sample_narrowband(&params(sc, m), &mut rng)?;
                    let d = random_narrow_design(&mut rng, m, DuplexMode::Full);
                    (sinr(&d, &ch, &b, k, i)?, empirical_sinr(&d, &ch, &b, k, i, v.symbols, sc.sample_period(band), &mut rng))
                }
                Band::Wide => {
                    let ch = sample_wideband(&wide_params(sc, m, sc.config.wideband.taps)?, &mut rng)?;
                    let d = random_wide_design(&mut rng, &ch, DuplexMode::Full);
                    if effective_gain(&d, &ch, k, i).norm() == 0.0 {
                        continue;
                    }
                    (sinr(&d, &ch, &b, k, i)?, empirical_sinr(&d, &ch, &b, k, i, v.symbols, sc.sample_period(band), &mut rng))
                }
            };
            worst = worst.max((e / g - 1.0).abs());
        }
    }
    Ok(at_most(
        "empirical_sinr",
        worst,
        0.03,
        format!("{} designs per band at {} symbols, max relative error", v.sinr_designs, v.symbols),
    ))
}

fn timing(sc: &Scenario) -> Check {
    let c = &sc.config;
    let mut bad = Vec::new();
    match derive_timing(Band::Narrow, c.narrowband.bandwidth_hz, c.narrowband.coherence_time_s, c.distance_m) {
        Ok(Timing::Narrow { cpi }) if cpi == (c.narrowband.coherence_time_s * c.narrowband.bandwidth_hz).round() as u64 => {}
        other => bad.push(format!("narrowband {other:?}")),
    }
    match derive_timing(Band::Wide, c.wideband.bandwidth_hz, c.wideband.coherence_time_s, c.distance_m) {
        Ok(Timing::Wide { cpi, tau, pri, pris }) if pri == 2 * tau && cpi == pris * pri && pris >= 1 => {}
        other => bad.push(format!("wideband {other:?}")),
    }
    Check {
        name: "timing".into(),
        passed: bad.is_empty(),
        measured: bad.len() as f64,
        threshold: 0.0,
        detail: if bad.is_empty() { "2N, tau, N0, U identities".into() } else { bad.join("; ") },
    }
}

/// Runs every check; a check that cannot be evaluated is reported as failed.
pub fn validate(sc: &Scenario, fault: Option<Fault>) -> ValidationReport {
    let mut checks = Vec::new();
    let v = &sc.config.validate;
    checks.push(fim_narrowband(sc, fault).unwrap_or_else(|e| errored("fim_narrowband", 1e-8, e)));
    match fim_wideband(sc, fault) {
        Ok(c) => checks.extend(c),
        Err(e) => checks.extend([errored("fim_wideband", 1e-8, &e), errored("cross_term", 1e-10, &e)]),
    }
    checks.push(zf_precondition(sc, fault).unwrap_or_else(|e| errored("zf_precondition", ZF_TOL, e)));
    checks.push(surrogate_minorant(sc).unwrap_or_else(|e| errored("surrogate_minorant", -1e-9, e)));
    checks.push(match solver_shortfall(sc, v.subproblems, v.samples) {
        Ok(w) => at_most(
            "solver_vs_sampling",
            w,
            1e-3,
            format!("{} subproblems x {} samples, max sampled - solver", v.subproblems, v.samples),
        ),
        Err(e) => errored("solver_vs_sampling", 1e-3, e),
    });
    checks.push(empirical(sc).unwrap_or_else(|e| errored("empirical_sinr", 0.03, e)));
    checks.push(timing(sc));
    ValidationReport { checks }
}
