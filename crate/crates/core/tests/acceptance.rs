//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::Instant;

use rand::Rng;

use isacsim::channel::Channels;
use isacsim::conic::{solve, SolveStatus};
use isacsim::experiments::config::{derive_timing, Scenario, SystemConfig, Timing};
use isacsim::experiments::stats::{bootstrap, quantile};
use isacsim::experiments::sweep::{select, sweep, PointSpec, TradeoffPoint};
use isacsim::metrics::oracle::{
    empirical_sinr, fim_oracle_narrowband, fim_oracle_wideband, random_narrow_design, random_wide_design,
};
use isacsim::metrics::{crb, effective_gain, sinr, Band, DuplexMode, LinkBudget};
use isacsim::rng::{stream, Purpose};
use isacsim::sca::oracle::{random_iterate, sampled_subproblem_optimum};
use isacsim::sca::{narrowband, wideband, ScaOptions, StopReason};

const MODES: [DuplexMode; 2] = [DuplexMode::Full, DuplexMode::Half];
const BANDS: [Band; 2] = [Band::Narrow, Band::Wide];
/// One-sided bootstrap level of the statistical criteria.
const ALPHA: f64 = 0.05;
const RESAMPLES: usize = 10_000;

struct Outcome {
    passed: bool,
    summary: String,
}

fn desk() -> Scenario {
    Scenario::new(SystemConfig::desk()).expect("desk config is valid")
}

fn mode_of(t: usize) -> DuplexMode {
    MODES[t % 2]
}

/// Closed-form CRB against the inverse dense Fisher information.
fn crb_fim_equivalence(sc: &Scenario) -> Outcome {
    let master = sc.config.sweep.master_seed;
    let mut rng = stream(master, 1, Purpose::Oracle);
    let mut worst = [0.0f64; 2];
    for t in 0..50 {
        let m = 2 + t % 3;
        let n_small = 1 + t % 8;
        let b = LinkBudget { n_half: n_small, ..sc.budget(Band::Narrow) };
        let params = isacsim::channel::ChannelParams {
            antennas: m,
            spacing_ratio: 0.5,
            theta: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            rician: sc.beta,
            doppler: [0.0, 0.0],
        };
        let ch = isacsim::channel::sample_narrowband(&params, &mut rng).unwrap();
        let d = random_narrow_design(&mut rng, m, mode_of(t));
        for k in 0..2 {
            let j = fim_oracle_narrowband(&d, &ch, &b, k, n_small, 1e-5).unwrap();
            let c = crb(&d, &ch, &b, k).unwrap();
            worst[0] = worst[0].max((c - 1.0 / j).abs() * j);
        }

        let m = 3 + t % 2;
        let taps = 2 + t % (m - 1);
        let pdp = isacsim::channel::power_delay_profile(taps, (-1f64).exp()).unwrap();
        let wp = isacsim::channel::WidebandParams { base: params_with(&params, m), pdp: pdp.clone(), si_pdp: pdp, tau_si: 0 };
        let ch = isacsim::channel::sample_wideband(&wp, &mut rng).unwrap();
        let d = random_wide_design(&mut rng, &ch, mode_of(t));
        // N_small = u * tau
        let (u, tau) = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 4), (4, 2)][t % 6];
        let b = LinkBudget { n_half: u * tau, ..sc.budget(Band::Wide) };
        for k in 0..2 {
            let j = fim_oracle_wideband(&d, &ch, &b, k, u, tau, 1e-7).unwrap().fim;
            let c = crb(&d, &ch, &b, k).unwrap();
            worst[1] = worst[1].max((c - 1.0 / j).abs() * j);
        }
    }
    Outcome {
        passed: worst.iter().all(|&w| w < 1e-8),
        summary: format!("max relative error narrow {:.2e}, wide {:.2e} (tol 1e-8)", worst[0], worst[1]),
    }
}

fn params_with(p: &isacsim::channel::ChannelParams, m: usize) -> isacsim::channel::ChannelParams {
    isacsim::channel::ChannelParams { antennas: m, ..p.clone() }
}

/// DAM cross-correlation contributes nothing to the Fisher information.
fn cross_correlation(sc: &Scenario) -> Outcome {
    let master = sc.config.sweep.master_seed;
    let mut rng = stream(master, 2, Purpose::Oracle);
    let (mut worst, mut smallest_entry) = (0.0f64, f64::INFINITY);
    for t in 0..20 {
        let ch = sc.wide_channels(master, 100 + t as u64, sc.beta).unwrap();
        let d = random_wide_design(&mut rng, &ch, mode_of(t));
        let b = LinkBudget { n_half: 4, ..sc.budget(Band::Wide) };
        for k in 0..2 {
            let f = fim_oracle_wideband(&d, &ch, &b, k, 2, 2, sc.sample_period(Band::Wide)).unwrap();
            worst = worst.max(f.cross.abs());
            smallest_entry = smallest_entry.min(f.cross_magnitude);
        }
    }
    Outcome {
        passed: worst < 1e-10 && smallest_entry > 0.0,
        summary: format!("max |cross trace| {worst:.2e} (tol 1e-10); smallest max cross entry {smallest_entry:.2e}"),
    }
}

/// Monotone SCA trajectories ending at certified KKT points.
fn sca_certificates(sc: &Scenario) -> Outcome {
    let master = sc.config.sweep.master_seed;
    let options = ScaOptions { restarts: 1, ..sc.options.clone() };
    let mut lines = Vec::new();
    let mut passed = true;
    for band in BANDS {
        for mode in MODES {
            let (mut worst_drop, mut worst_kkt, mut max_iter, mut capped, mut errors) = (0.0f64, 0.0f64, 0, 0, 0);
            for w in [0.1, 0.5, 0.9] {
                for seed in 0..20u64 {
                    let res = match band {
                        Band::Narrow => {
                            let ch = sc.narrow_channels(master, seed, sc.beta).unwrap();
                            narrowband::run_sca(&ch, sc.budget(band), w, mode, options.clone(), master, seed)
                        }
                        Band::Wide => {
                            let ch = sc.wide_channels(master, seed, sc.beta).unwrap();
                            wideband::run_sca(&ch, sc.budget(band), w, mode, options.clone(), master, seed)
                        }
                    };
                    let Ok(res) = res else {
                        errors += 1;
                        continue;
                    };
                    let st = &res.state;
                    for p in st.trajectory.windows(2) {
                        worst_drop = worst_drop.max(p[0] - p[1]);
                    }
                    worst_kkt = worst_kkt.max(st.kkt_residual);
                    max_iter = max_iter.max(st.iterations);
                    capped += usize::from(st.stop == StopReason::MaxIter);
                }
            }
            let ok = errors == 0 && worst_drop <= 1e-9 && worst_kkt < 1e-4 && max_iter <= 50 && capped == 0;
            passed &= ok;
            lines.push(format!(
                "{band}/{mode}: drop {worst_drop:.1e}, kkt {worst_kkt:.1e}, iters <= {max_iter}, capped {capped}, errors {errors}"
            ));
        }
    }
    Outcome { passed, summary: lines.join("; ") }
}

/// Barrier solver against rejection sampling on small subproblems.
fn solver_optimality(sc: &Scenario) -> Outcome {
    let master = sc.config.sweep.master_seed;
    let options = ScaOptions { restarts: 1, ..sc.options.clone() };
    let (mut worst, mut unsampled, mut failures) = (f64::NEG_INFINITY, 0, 0);
    for t in 0..100u64 {
        let mut rng = stream(master, 5000 + t, Purpose::Oracle);
        let params = isacsim::channel::ChannelParams {
            antennas: 2,
            spacing_ratio: 0.5,
            theta: sc.theta,
            rician: sc.beta,
            doppler: [0.0, 0.0],
        };
        let ch = isacsim::channel::sample_narrowband(&params, &mut rng).unwrap();
        let w = rng.random_range(0.05..0.95);
        let pb = narrowband::problem(&ch, sc.budget(Band::Narrow), w, mode_of(t as usize), options.clone()).unwrap();
        let sub = pb.subproblem(&random_iterate(&pb.layout, &mut rng)).unwrap();
        let sol = sub.strictly_feasible_start().and_then(|x0| solve(&sub.spec, &x0, &pb.options.solver).ok());
        let Some(sol) = sol.filter(|s| s.status == SolveStatus::Optimal) else {
            failures += 1;
            continue;
        };
        match sampled_subproblem_optimum(&pb, &sub, 100_000, &mut rng) {
            Some(best) => worst = worst.max(best - sol.objective),
            None => unsampled += 1,
        }
    }
    Outcome {
        passed: failures == 0 && worst <= 1e-3,
        summary: format!(
            "max (sampled best - solver) {worst:.3e} (tol 1e-3); solver failures {failures}; subproblems with no feasible sample {unsampled}"
        ),
    }
}

/// Protocol constants at the full-scale system parameters.
fn timing_constants() -> Outcome {
    let narrow = derive_timing(Band::Narrow, 100e3, 1e-3, 300.0);
    let wide = derive_timing(Band::Wide, 100e6, 1e-3, 300.0);
    let ok = matches!(narrow, Ok(Timing::Narrow { cpi: 100 }))
        && matches!(wide, Ok(Timing::Wide { cpi: 100_000, tau: 100, pri: 200, pris: 500 }));
    Outcome { passed: ok, summary: format!("narrowband {narrow:?}; wideband {wide:?}") }
}

fn mean_at(xs: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&j| xs[j]).sum::<f64>() / idx.len() as f64
}

fn paired<'a>(rows: &'a [TradeoffPoint], band: Band, w: f64) -> (Vec<&'a TradeoffPoint>, Vec<&'a TradeoffPoint>) {
    let full: Vec<_> = select(rows, band, DuplexMode::Full, w).collect();
    let half: Vec<_> = select(rows, band, DuplexMode::Half, w).collect();
    assert!(full.iter().zip(&half).all(|(a, b)| a.spec.trial == b.spec.trial));
    (full, half)
}

/// Seed-level findings on the tradeoff and power allocation.
fn qualitative_findings(sc: &Scenario) -> Vec<(String, Outcome)> {
    let master = sc.config.sweep.master_seed;
    let trials = 20u64;
    let weights: Vec<f64> = sc.config.sweep.weights.clone();
    let mut specs = Vec::new();
    for mode in MODES {
        for &weight in &weights {
            for trial in 0..trials {
                specs.push(PointSpec { band: Band::Narrow, mode, beta_db: 0.0, weight, trial });
            }
        }
        for trial in 0..trials {
            specs.push(PointSpec { band: Band::Wide, mode, beta_db: 0.0, weight: 0.1, trial });
        }
    }
    let rows = sweep(sc, &specs);
    let failed = rows.iter().filter(|r| !r.ok()).count();
    let mut rng = stream(master, 6, Purpose::Bootstrap);
    let mut out = Vec::new();

    // (a) paired rate differences
    let diff = |w: f64| -> Vec<f64> {
        let (f, h) = paired(&rows, Band::Narrow, w);
        f.iter().zip(&h).map(|(a, b)| a.sum_rate - b.sum_rate).collect()
    };
    let (d9, d1) = (diff(0.9), diff(0.1));
    let lo9 = quantile(&bootstrap(d9.len(), RESAMPLES, &mut rng, |idx: &[usize]| mean_at(&d9, idx)), ALPHA);
    let hi1 = quantile(&bootstrap(d1.len(), RESAMPLES, &mut rng, |idx: &[usize]| mean_at(&d1, idx)), 1.0 - ALPHA);
    out.push((
        "6a".into(),
        Outcome {
            passed: failed == 0 && d9.len() == trials as usize && lo9 > 0.0 && hi1 < 0.0,
            summary: format!(
                "R_full - R_half: w=0.9 mean {:.3} (95% lower {lo9:.3} > 0); w=0.1 mean {:.3} (95% upper {hi1:.3} < 0); failed rows {failed}",
                d9.iter().sum::<f64>() / d9.len() as f64,
                d1.iter().sum::<f64>() / d1.len() as f64
            ),
        },
    ));

    // (b) relative CRB gap of the seed means at w = 0.1
    let (f, h) = paired(&rows, Band::Narrow, 0.1);
    let cf: Vec<f64> = f.iter().map(|r| r.sum_crb).collect();
    let ch: Vec<f64> = h.iter().map(|r| r.sum_crb).collect();
    let gap = |idx: &[usize]| {
        let a: f64 = idx.iter().map(|&j| cf[j]).sum();
        let b: f64 = idx.iter().map(|&j| ch[j]).sum();
        (a - b).abs() / b
    };
    let all: Vec<usize> = (0..cf.len()).collect();
    let point = gap(&all);
    let hi = quantile(&bootstrap(cf.len(), RESAMPLES, &mut rng, gap), 1.0 - ALPHA);
    out.push((
        "6b".into(),
        Outcome {
            passed: hi < 0.2,
            summary: format!("|C_full - C_half| / C_half at w=0.1: {point:.4} (95% upper {hi:.4} < 0.2)"),
        },
    ));

    // (c) narrowband dedicated-sensing power
    let mut worst_upper = 0.0f64;
    let mut worst_row = 0.0f64;
    let mut worst_at = String::new();
    for mode in MODES {
        for &w in &weights {
            let p: Vec<f64> = select(&rows, Band::Narrow, mode, w).map(TradeoffPoint::total_sensing_power).collect();
            let upper = quantile(&bootstrap(p.len(), RESAMPLES, &mut rng, |idx: &[usize]| mean_at(&p, idx)), 1.0 - ALPHA);
            worst_row = p.iter().fold(worst_row, |a, &b| a.max(b));
            if upper >= worst_upper {
                worst_upper = upper;
                worst_at = format!("{mode} w={w}");
            }
        }
    }
    out.push((
        "6c".into(),
        Outcome {
            passed: worst_upper < 1e-3,
            summary: format!(
                "narrowband sensing power: largest 95% upper mean bound {worst_upper:.2e} ({worst_at}), largest single run {worst_row:.2e} (tol 1e-3)"
            ),
        },
    ));

    // (d) wideband dedicated-sensing share at w = 0.1
    let mut lines = Vec::new();
    let mut passed = true;
    for mode in MODES {
        let s: Vec<f64> = select(&rows, Band::Wide, mode, 0.1).map(TradeoffPoint::sensing_fraction).collect();
        let lo = quantile(&bootstrap(s.len(), RESAMPLES, &mut rng, |idx: &[usize]| mean_at(&s, idx)), ALPHA);
        passed &= s.len() == trials as usize && lo > 0.1;
        lines.push(format!("{mode} mean {:.3} (95% lower {lo:.3})", s.iter().sum::<f64>() / s.len() as f64));
    }
    out.push(("6d".into(), Outcome { passed, summary: format!("wideband sensing share at w=0.1 > 0.1: {}", lines.join(", ")) }));
    out
}

/// Closed-form SINR against the symbol-level simulation.
fn empirical_sinr_agreement(sc: &Scenario) -> Outcome {
    let master = sc.config.sweep.master_seed;
    let mut rng = stream(master, 7, Purpose::Symbols);
    let mut worst = [0.0f64; 2];
    for (bi, band) in BANDS.into_iter().enumerate() {
        let b = sc.budget(band);
        for t in 0..20usize {
            let mode = mode_of(t);
            let k = (t / 2) % 2;
            let (g, e) = match band {
                Band::Narrow => {
                    let ch = sc.narrow_channels(master, 200 + t as u64, sc.beta).unwrap();
                    let d = random_narrow_design(&mut rng, ch.num_antennas(), mode);
                    let i = (0..2).find(|&i| effective_gain(&d, &ch, k, i).norm() > 0.0).unwrap();
                    let g = sinr(&d, &ch, &b, k, i).unwrap();
                    (g, empirical_sinr(&d, &ch, &b, k, i, 100_000, sc.sample_period(band), &mut rng))
                }
                Band::Wide => {
                    let ch = sc.wide_channels(master, 200 + t as u64, sc.beta).unwrap();
                    let d = random_wide_design(&mut rng, &ch, mode);
                    let i = (0..2).find(|&i| effective_gain(&d, &ch, k, i).norm() > 0.0).unwrap();
                    let g = sinr(&d, &ch, &b, k, i).unwrap();
                    (g, empirical_sinr(&d, &ch, &b, k, i, 100_000, sc.sample_period(band), &mut rng))
                }
            };
            worst[bi] = worst[bi].max((e / g - 1.0).abs());
        }
    }
    Outcome {
        passed: worst.iter().all(|&w| w < 0.03),
        summary: format!("max relative error narrow {:.4}, wide {:.4} (tol 0.03)", worst[0], worst[1]),
    }
}

fn report(id: &str, title: &str, start: Instant, o: &Outcome) {
    println!(
        "criterion {id} [{}] {title}: {} ({:.1} s)",
        if o.passed { "PASS" } else { "FAIL" },
        o.summary,
        start.elapsed().as_secs_f64()
    );
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let sc = desk();
    let mut all = true;
    let mut run = |id: &str, title: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        report(id, title, t, &o);
        all &= o.passed;
    };
    run("1", "CRB equals inverse dense Fisher information", &|| crb_fim_equivalence(&sc));
    run("2", "DAM cross-correlation term vanishes", &|| cross_correlation(&sc));
    run("3", "SCA monotone with KKT certificate", &|| sca_certificates(&sc));
    run("4", "solver beats rejection sampling", &|| solver_optimality(&sc));
    run("5", "protocol timing constants", &timing_constants);
    run("7", "closed-form SINR matches symbol simulation", &|| empirical_sinr_agreement(&sc));
    let t = Instant::now();
    for (id, o) in qualitative_findings(&sc) {
        report(&id, "desk-scale duplex findings", t, &o);
        all &= o.passed;
    }
    if all {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
}
