//! Wideband trade-off with DAM: one beam per channel tap, each restricted
//! to the null space of the other taps so that the peer sees a single
//! effective tap.

use super::{Layout, ScaError, ScaOptions, ScaProblem, ScaResult};
use crate::channel::{Channels, WidebandChannels};
use crate::linalg::{hermitian_eigen, CMat, CVec, C64};
use crate::metrics::{Band, DuplexMode, LinkBudget};

/// Relative Gram eigenvalue below which the interfering taps count as dependent.
const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis (`m x (m - L + 1)`) of the vectors orthogonal to every
/// tap `h_{k,l'}`, `l' != l`. The identity for a single tap.
pub fn zf_nullspace_basis(k: usize, h_taps: &[CVec], l: usize) -> Result<CMat, ScaError> {
    let m = h_taps[l].len();
    let taps = h_taps.len();
    if taps > m {
        return Err(ScaError::TooFewAntennas { k, taps, antennas: m });
    }
    if taps == 1 {
        return Ok(CMat::identity(m, m));
    }
    let others: Vec<CVec> = h_taps.iter().enumerate().filter(|&(j, _)| j != l).map(|(_, h)| h.clone()).collect();
    let h = CMat::from_columns(&others);
    let gram = h.adjoint() * &h;
    let (vals, _) = hermitian_eigen(&gram);
    let max = vals.last().copied().unwrap_or(0.0);
    let min = vals.first().copied().unwrap_or(0.0);
    if !(max > 0.0) || min < RANK_TOL * max {
        return Err(ScaError::RankDeficient { k, l, min_eig: min });
    }
    let inv = gram.try_inverse().ok_or(ScaError::RankDeficient { k, l, min_eig: min })?;
    let proj = CMat::identity(m, m) - &h * inv * h.adjoint();
    // eigenvalues of the projector are 0 (taps - 1 times) and 1
    let (_, vecs) = hermitian_eigen(&proj);
    let dim = m - taps + 1;
    Ok(vecs.columns(m - dim, dim).into_owned())
}

/// Largest `|h_{k,l'}^H B_{k,l}|` entry over `l' != l`.
pub fn zf_basis_residual(h_taps: &[CVec], l: usize, basis: &CMat) -> f64 {
    h_taps
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != l)
        .flat_map(|(_, h)| (h.adjoint() * basis).iter().map(|z: &C64| z.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

pub fn layout(ch: &WidebandChannels, mode: DuplexMode) -> Result<Layout, ScaError> {
    let mut bases: [Vec<CMat>; 2] = Default::default();
    for (k, b) in bases.iter_mut().enumerate() {
        let h = ch.comm_taps(k);
        for l in 0..h.len() {
            b.push(zf_nullspace_basis(k, h, l)?);
        }
    }
    Ok(Layout::new(ch.num_antennas(), Band::Wide, mode, bases))
}

pub fn problem<'a>(
    ch: &'a WidebandChannels,
    budget: LinkBudget,
    weight: f64,
    mode: DuplexMode,
    options: ScaOptions,
) -> Result<ScaProblem<'a, WidebandChannels>, ScaError> {
    ScaProblem::new(ch, budget, weight, layout(ch, mode)?, options)
}

pub fn run_sca(
    ch: &WidebandChannels,
    budget: LinkBudget,
    weight: f64,
    mode: DuplexMode,
    options: ScaOptions,
    master: u64,
    trial: u64,
) -> Result<ScaResult, ScaError> {
    problem(ch, budget, weight, mode, options)?.run(master, trial)
}
