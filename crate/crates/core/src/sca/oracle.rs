//! Random-search references for the SCA subproblems and the trade-off
//! objective on tiny instances.

use rand::Rng;

use super::{Iterate, Layout, ScaProblem, ScaSubproblem};
use crate::channel::Channels;
use crate::linalg::{complex_gaussian_vec, CMat, CVec, C64};
use crate::metrics::POWER_BUDGET;

/// Random design inside the power budget. Half of the intervals put all
/// their power into the beams; total power is skewed towards the budget.
pub fn random_iterate<R: Rng + ?Sized>(layout: &Layout, rng: &mut R) -> Iterate {
    let m = layout.m;
    let mut q = vec![CMat::zeros(m, m); layout.blocks.len()];
    let mut v = vec![CVec::zeros(0); layout.blocks.len()];
    for k in 0..2 {
        let active = (0..2).filter(|&i| layout.active(k, i)).count().max(1);
        let share = POWER_BUDGET / active as f64;
        for i in 0..2 {
            let blocks = &layout.slot_blocks[k][i];
            if blocks.is_empty() || layout.blocks[blocks[0]].i != i {
                continue;
            }
            let total = share * rng.random::<f64>().powf(0.25);
            let beam_share = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>() };
            let weights: Vec<f64> = blocks.iter().map(|_| rng.random::<f64>() + 1e-3).collect();
            let wsum: f64 = weights.iter().sum();
            for (&b, wt) in blocks.iter().zip(&weights) {
                let tap_power = total * wt / wsum;
                let blk = &layout.blocks[b];
                let basis = &layout.bases[k][blk.l];
                let mut vb = complex_gaussian_vec(rng, blk.v_dim, 1.0);
                let norm = (basis * &vb).norm();
                if norm > 0.0 {
                    vb *= C64::new((beam_share * tap_power).sqrt() / norm, 0.0);
                }
                let w = basis * &vb;
                let rank = rng.random_range(1..=m);
                let mut r = CMat::zeros(m, m);
                for _ in 0..rank {
                    let u = complex_gaussian_vec(rng, m, 1.0);
                    r += &u * u.adjoint();
                }
                let tr = r.trace().re;
                r *= C64::new((1.0 - beam_share) * tap_power / tr, 0.0);
                q[b] = &w * w.adjoint() + r;
                v[b] = vb;
            }
        }
    }
    Iterate { q, v }
}

/// Best subproblem objective over `samples` random designs completed with
/// their best auxiliaries; designs that violate any constraint are rejected.
pub fn sampled_subproblem_optimum<C: Channels, R: Rng + ?Sized>(
    problem: &ScaProblem<'_, C>,
    sub: &ScaSubproblem,
    samples: usize,
    rng: &mut R,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    for _ in 0..samples {
        let design = random_iterate(&problem.layout, rng).to_params(&problem.layout);
        let Some(x) = sub.completed_point(&design) else { continue };
        if sub.spec.feasibility(&x).margin < -1e-12 {
            continue;
        }
        if let Some(f) = sub.spec.objective.value(&x) {
            best = Some(best.map_or(f, |b: f64| b.max(f)));
        }
    }
    best
}

/// Best true trade-off objective over `samples` random designs.
pub fn sampled_design_optimum<C: Channels, R: Rng + ?Sized>(
    problem: &ScaProblem<'_, C>,
    samples: usize,
    rng: &mut R,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    for _ in 0..samples {
        let it = random_iterate(&problem.layout, rng);
        let Ok(design) = problem.design(&it) else { continue };
        let Ok(perf) = problem.performance(&design) else { continue };
        let f = problem.objective(&perf);
        if f.is_finite() {
            best = Some(best.map_or(f, |b: f64| b.max(f)));
        }
    }
    best
}
