//! Narrowband trade-off: one beam per interval, parametrized directly.

use super::{Layout, ScaError, ScaOptions, ScaProblem, ScaResult};
use crate::channel::{Channels, NarrowbandChannels};
use crate::linalg::{hermitian_eigen, CMat, CVec};
use crate::metrics::{Band, DuplexMode, LinkBudget, TransmitDesign};

pub fn layout(m: usize, mode: DuplexMode) -> Layout {
    let id = CMat::identity(m, m);
    Layout::new(m, Band::Narrow, mode, [vec![id.clone()], vec![id]])
}

pub fn problem<'a>(
    ch: &'a NarrowbandChannels,
    budget: LinkBudget,
    weight: f64,
    mode: DuplexMode,
    options: ScaOptions,
) -> Result<ScaProblem<'a, NarrowbandChannels>, ScaError> {
    ScaProblem::new(ch, budget, weight, layout(ch.num_antennas(), mode), options)
}

/// Solves the weighted problem with restarts seeded from `(master, trial)`.
pub fn run_sca(
    ch: &NarrowbandChannels,
    budget: LinkBudget,
    weight: f64,
    mode: DuplexMode,
    options: ScaOptions,
    master: u64,
    trial: u64,
) -> Result<ScaResult, ScaError> {
    let pb = problem(ch, budget, weight, mode, options)?;
    let mut res = pb.run(master, trial)?;
    if weight == 0.0 {
        res.design = principal_beams(&res.design)?;
        res.state.performance = pb.performance(&res.design)?;
    }
    Ok(res)
}

/// With no rate term the beam/sensing split of `Q` is free; pick the
/// largest rank-one beam `Q` admits, so `R` keeps only the remainder.
/// `Q` and hence the objective are unchanged.
pub fn principal_beams(design: &TransmitDesign) -> Result<TransmitDesign, ScaError> {
    let mut beams = design.beams.clone();
    for (k, row) in beams.iter_mut().enumerate() {
        for (i, slot) in row.iter_mut().enumerate() {
            let q = &design.q[k][i];
            let (vals, vecs) = hermitian_eigen(q);
            let m = q.nrows();
            let top = vals[m - 1].max(0.0);
            slot[0] = if top > 0.0 { vecs.column(m - 1).scale(top.sqrt()) } else { CVec::zeros(m) };
        }
    }
    Ok(TransmitDesign::new(design.mode, design.band, beams, design.q.clone())?)
}
