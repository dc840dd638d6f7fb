//! Successive convex approximation (SCA) of the weighted rate/CRB trade-off
//! `max w R - (1 - w) mu C`.
//!
//! The nonconvex problem is lifted with one SINR variable `r` per link, and
//! a sensing amplitude `g` and sensing information `d` per active interval:
//!
//! * `r <= gamma(w, Q)`, a quadratic-over-linear term, is replaced by its
//!   first-order lower bound around the current iterate;
//! * `g^2 <= |alpha|^2 adot^H Q adot` stays a convex quadratic cone;
//! * `d <= g^2 / (rho_SI Phi(Q) + 1)` is again replaced by its linear lower bound.
//!
//! Each subproblem is handed to [`crate::conic::solve`]. The expansion point
//! always uses the tightened auxiliaries (`r = gamma`, `g = sqrt(G)`,
//! `d = D`), so the tracked objective is the true one and cannot decrease.
//!
//! Tied and silent intervals are eliminated structurally: full-duplex
//! intervals share one covariance/beam set, silent intervals have no
//! variables. Beams are parametrized in per-tap coordinates `w = B v`; the
//! narrowband basis is the identity, the wideband basis spans the
//! zero-forcing null space (see [`wideband::zf_nullspace_basis`]).

pub mod narrowband;
pub mod oracle;
pub mod wideband;

use rand::Rng;

use crate::channel::Channels;
use crate::conic::{kkt_residual, solve, AffineExpr, InverseSumTerm, LogTerm, PsdBlock, PsdTerm, QuadCone,
    SolveStatus, SolverOptions, SpecError, SubproblemSpec};
use crate::linalg::{complex_gaussian_vec, psd_repair, hermitian_basis_entries, hermitian_from_params, hermitian_to_params,
    quad_form, quad_form_coeffs, CMat, CVec, C64, J, ONE};
use crate::metrics::{self, source_interval, Band, DesignError, DuplexMode, LinkBudget, MetricError, Performance,
    TransmitDesign, POWER_BUDGET};
use crate::rng::{stream, Purpose};

/// Lower bound on each lifted sensing-information variable.
pub const AUX_FLOOR: f64 = 1e-12;
/// Effective gains below this drop the rate variable of a link.
const GAIN_EPS: f64 = 1e-12;
/// Fraction of the per-interval budget held back by the initial and center points.
const POWER_MARGIN: f64 = 1e-3;
/// Isotropic margin added to `Q - w w^H` on over-relaxed points.
const PULL_BACK_MARGIN: f64 = 1e-9;
/// Floor on the sensing amplitude used as a linearization point.
const SENSE_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ScaError {
    #[error("weight {0} outside [0, 1]")]
    Weight(f64),
    #[error("transceiver {k}: {taps} taps need at least as many antennas ({antennas})")]
    TooFewAntennas { k: usize, taps: usize, antennas: usize },
    #[error("transceiver {k}, tap {l}: other taps are linearly dependent (Gram min eigenvalue {min_eig:e})")]
    RankDeficient { k: usize, l: usize, min_eig: f64 },
    #[error("linearization point has non-positive denominator {0}")]
    Linearization(f64),
    #[error("Q - sum w w^H has minimum eigenvalue {0:e}")]
    SensingCovariance(f64),
    #[error("no strictly feasible start for subproblem {0}")]
    NoStart(usize),
    #[error("subproblem {iteration}: {source}")]
    Spec {
        iteration: usize,
        #[source]
        source: SpecError,
    },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// First-order lower bound of `|a|^2 / b` around `(a_t, b_t)`:
/// `|a|^2 / b >= Re(conj(c_a) a) - c_b b` with `c_a = 2 a_t / b_t`, `c_b = |a_t|^2 / b_t^2`.
///
/// The bound is exact at `(a_t, b_t)` and valid for every `b > 0`.
pub fn linearize_quadratic_over_linear(a_t: C64, b_t: f64) -> Result<(C64, f64), ScaError> {
    if !(b_t > 0.0) {
        return Err(ScaError::Linearization(b_t));
    }
    Ok((a_t * (2.0 / b_t), a_t.norm_sqr() / (b_t * b_t)))
}

/// Dedicated-sensing covariance `Q - sum w w^H`; small negative eigenvalues
/// are clipped, larger ones rejected.
pub fn extract_sensing_covariance(q: &CMat, beams: &[CVec]) -> Result<CMat, ScaError> {
    metrics::sensing_covariance(q, beams)
        .map(|(r, _)| r)
        .map_err(ScaError::SensingCovariance)
}

/// `w R - (1 - w) mu C`; the CRB term is dropped at `w = 1`.
pub fn scalarized_objective(weight: f64, mu: f64, perf: &Performance) -> f64 {
    if weight >= 1.0 {
        weight * perf.sum_rate
    } else {
        weight * perf.sum_rate - (1.0 - weight) * mu * perf.sum_crb
    }
}

#[derive(Clone, Debug)]
pub struct ScaOptions {
    /// Stop when the objective changes by at most this fraction.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Random initializations; the best final objective is kept.
    pub restarts: u32,
    /// Rate/CRB scale factor.
    pub mu: f64,
    /// Share of the per-interval budget given to the initial beams.
    pub beam_fraction: f64,
    /// The relative-change stop also requires the KKT residual below this.
    pub kkt_tol: f64,
    /// Longest over-relaxed step tried along each SCA update (1 disables it).
    pub max_extrapolation: f64,
    pub solver: SolverOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            max_iter: 50,
            restarts: 5,
            mu: 1.5e4,
            beam_fraction: 0.1,
            kkt_tol: 5e-5,
            max_extrapolation: 16.0,
            solver: SolverOptions::default(),
        }
    }
}

/// Variables of one tap of one independent interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub k: usize,
    pub i: usize,
    pub l: usize,
    /// Offset of the `m^2` Hermitian parameters of `Q_{k,i,l}`.
    pub q_offset: usize,
    /// Offset of the interleaved real/imaginary parts of `v_{k,i,l}`.
    pub v_offset: usize,
    pub v_dim: usize,
}

/// Variable layout of the design part of every subproblem.
#[derive(Clone, Debug)]
pub struct Layout {
    pub m: usize,
    pub taps: usize,
    pub band: Band,
    pub mode: DuplexMode,
    /// Beam bases `B_{k,l}` (`m x v_dim`).
    pub bases: [Vec<CMat>; 2],
    pub blocks: Vec<Block>,
    /// Blocks carrying interval `(k, i)`, ordered by tap; empty when silent.
    pub slot_blocks: [[Vec<usize>; 2]; 2],
    pub design_vars: usize,
}

impl Layout {
    pub fn new(m: usize, band: Band, mode: DuplexMode, bases: [Vec<CMat>; 2]) -> Self {
        let taps = bases[0].len();
        let mut blocks = Vec::new();
        let mut slot_blocks: [[Vec<usize>; 2]; 2] = Default::default();
        let mut offset = 0;
        for k in 0..2 {
            for i in 0..2 {
                if mode.silent(band, k, i) {
                    continue;
                }
                if mode == DuplexMode::Full && i == 1 {
                    slot_blocks[k][1] = slot_blocks[k][0].clone();
                    continue;
                }
                for (l, basis) in bases[k].iter().enumerate() {
                    let v_dim = basis.ncols();
                    slot_blocks[k][i].push(blocks.len());
                    blocks.push(Block { k, i, l, q_offset: offset, v_offset: offset + m * m, v_dim });
                    offset += m * m + 2 * v_dim;
                }
            }
        }
        Self { m, taps, band, mode, bases, blocks, slot_blocks, design_vars: offset }
    }

    pub fn active(&self, k: usize, i: usize) -> bool {
        !self.slot_blocks[k][i].is_empty()
    }

    /// Per-interval power share: the budget split over the active intervals.
    fn interval_budget(&self, k: usize) -> f64 {
        let active = (0..2).filter(|&i| self.active(k, i)).count().max(1);
        POWER_BUDGET / active as f64
    }

    fn add_q(&self, expr: &mut AffineExpr, k: usize, i: usize, coeffs: &[f64], scale: f64) {
        for &b in &self.slot_blocks[k][i] {
            expr.add_block(self.blocks[b].q_offset, coeffs, scale);
        }
    }
}

/// Design part of an SCA iterate, one entry per [`Block`].
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub q: Vec<CMat>,
    pub v: Vec<CVec>,
}

impl Iterate {
    pub fn to_params(&self, layout: &Layout) -> Vec<f64> {
        let mut x = vec![0.0; layout.design_vars];
        for (b, blk) in layout.blocks.iter().enumerate() {
            let p = hermitian_to_params(&self.q[b]);
            x[blk.q_offset..blk.q_offset + p.len()].copy_from_slice(&p);
            for j in 0..blk.v_dim {
                x[blk.v_offset + 2 * j] = self.v[b][j].re;
                x[blk.v_offset + 2 * j + 1] = self.v[b][j].im;
            }
        }
        x
    }

    pub fn from_params(layout: &Layout, x: &[f64]) -> Self {
        let m = layout.m;
        let mut q = Vec::with_capacity(layout.blocks.len());
        let mut v = Vec::with_capacity(layout.blocks.len());
        for blk in &layout.blocks {
            q.push(hermitian_from_params(m, &x[blk.q_offset..blk.q_offset + m * m]));
            v.push(CVec::from_fn(blk.v_dim, |j, _| {
                C64::new(x[blk.v_offset + 2 * j], x[blk.v_offset + 2 * j + 1])
            }));
        }
        Self { q, v }
    }
}

/// Lifted auxiliary variables of a subproblem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuxIndex {
    pub r: [[Option<usize>; 2]; 2],
    pub g: [[Option<usize>; 2]; 2],
    pub d: [[Option<usize>; 2]; 2],
}

impl AuxIndex {
    pub fn count(&self) -> usize {
        [&self.r, &self.g, &self.d]
            .iter()
            .flat_map(|a| a.iter().flatten())
            .filter(|v| v.is_some())
            .count()
    }
}

#[derive(Clone, Debug)]
struct RateAux {
    var: usize,
    /// Surrogate SINR over the design variables.
    surrogate: AffineExpr,
}

#[derive(Clone, Debug)]
struct SenseAux {
    g: usize,
    d: usize,
    /// `|alpha|^2 adot^H Q adot`.
    information: AffineExpr,
    /// `rho_SI Phi(Q) + 1`.
    denominator: AffineExpr,
    slope: f64,
    curvature: f64,
}

/// One convex subproblem with the data needed to find an interior start.
#[derive(Clone, Debug)]
pub struct ScaSubproblem {
    pub spec: SubproblemSpec,
    pub aux: AuxIndex,
    design_vars: usize,
    anchor: Vec<f64>,
    center: Vec<f64>,
    rates: Vec<RateAux>,
    senses: Vec<SenseAux>,
}

impl ScaSubproblem {
    /// The anchor iterate with tightened auxiliaries: `r = gamma`, `g = sqrt(G)`, `d = D`.
    ///
    /// Feasible (on the boundary) by construction; used for KKT certificates.
    pub fn tightened_point(&self) -> Vec<f64> {
        self.complete(&self.anchor, |s, x| {
            let info = s.information.eval(x).max(0.0);
            let g = info.sqrt();
            (g, s.slope * g - s.curvature * s.denominator.eval(x))
        }, |r, x| r.surrogate.eval(x).max(0.0))
    }

    /// Smallest `exact - surrogate` over the SINR and sensing surrogates at
    /// `it`. Nonnegative up to rounding, since each surrogate is a global
    /// minorant of its exact counterpart.
    pub fn minorant_gap<C: Channels>(&self, problem: &ScaProblem<'_, C>, it: &Iterate) -> Result<f64, ScaError> {
        let design = problem.design(it)?;
        let x = it.to_params(&problem.layout);
        let slot = |index: &[[Option<usize>; 2]; 2], var: usize| {
            (0..4).map(|s| (s / 2, s % 2)).find(|&(k, i)| index[k][i] == Some(var)).expect("indexed auxiliary")
        };
        let mut gap = f64::INFINITY;
        for r in &self.rates {
            let (k, i) = slot(&self.aux.r, r.var);
            let exact = metrics::sinr(&design, problem.ch, &problem.budget, k, i)?;
            gap = gap.min(exact - r.surrogate.eval(&x));
        }
        for s in &self.senses {
            let (k, i) = slot(&self.aux.g, s.g);
            let exact = metrics::sensing_information(&design, problem.ch, &problem.budget, k, i)?;
            let g = s.information.eval(&x).max(0.0).sqrt();
            gap = gap.min(exact - (s.slope * g - s.curvature * s.denominator.eval(&x)));
        }
        Ok(gap)
    }

    /// A design with its best auxiliaries: `r` and `d` at their surrogate
    /// bounds, `g = sqrt(G)`. `None` when some surrogate bound falls below
    /// the variable's lower bound.
    pub fn completed_point(&self, design: &[f64]) -> Option<Vec<f64>> {
        if self.rates.iter().any(|r| r.surrogate.eval(design) < 0.0) {
            return None;
        }
        let mut ok = true;
        let x = self.complete(
            design,
            |s, x| {
                let g = s.information.eval(x).max(0.0).sqrt();
                let d = s.slope * g - s.curvature * s.denominator.eval(x);
                ok &= d >= AUX_FLOOR;
                (g, d)
            },
            |r, x| r.surrogate.eval(x),
        );
        ok.then_some(x)
    }

    fn complete(
        &self,
        design: &[f64],
        mut sense: impl FnMut(&SenseAux, &[f64]) -> (f64, f64),
        rate: impl Fn(&RateAux, &[f64]) -> f64,
    ) -> Vec<f64> {
        let mut x = design.to_vec();
        x.resize(self.spec.num_vars, 0.0);
        for r in &self.rates {
            x[r.var] = rate(r, design);
        }
        for s in &self.senses {
            let (g, d) = sense(s, design);
            x[s.g] = g;
            x[s.d] = d;
        }
        x
    }

    /// Interior point: the anchor pulled towards a strictly feasible center,
    /// auxiliaries placed midway inside their bounds. The pull is halved
    /// until every constraint holds strictly.
    pub fn strictly_feasible_start(&self) -> Option<Vec<f64>> {
        let mut eps = 0.1;
        for _ in 0..60 {
            let design: Vec<f64> = self
                .anchor
                .iter()
                .zip(&self.center)
                .map(|(a, c)| (1.0 - eps) * a + eps * c)
                .collect();
            if let Some(x) = self.interior_aux(&design) {
                if self.spec.feasibility(&x).margin > 0.0 {
                    return Some(x);
                }
            }
            eps *= 0.5;
        }
        None
    }

    fn interior_aux(&self, design: &[f64]) -> Option<Vec<f64>> {
        if self.rates.iter().any(|r| !(r.surrogate.eval(design) > 0.0)) {
            return None;
        }
        let mut ok = true;
        let x = self.complete(
            design,
            |s, x| {
                let gmax = s.information.eval(x).max(0.0).sqrt();
                let gmin = s.curvature * s.denominator.eval(x) / s.slope;
                let g = 0.5 * (gmin.max(0.0) + gmax);
                let dmax = s.slope * g - s.curvature * s.denominator.eval(x);
                if !(gmin < gmax && dmax > AUX_FLOOR) {
                    ok = false;
                }
                (g, AUX_FLOOR + 0.5 * (dmax - AUX_FLOOR))
            },
            |r, x| 0.5 * r.surrogate.eval(x),
        );
        ok.then_some(x)
    }

    pub fn design_part<'x>(&self, x: &'x [f64]) -> &'x [f64] {
        &x[..self.design_vars]
    }
}

/// Linearization data of an iterate.
#[derive(Clone, Debug, PartialEq)]
struct Expansion {
    gain: [[C64; 2]; 2],
    interference: [[f64; 2]; 2],
    amplitude: [[f64; 2]; 2],
    denominator: [[f64; 2]; 2],
}

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub sum_rate: f64,
    pub sum_crb: f64,
    pub kkt_residual: f64,
    pub newton_steps: usize,
    /// `||w_{k,i,l}||^2` in `[k][i][l]` order.
    pub tap_power: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    /// A subproblem solution did not improve the true objective.
    NoImprovement,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaState {
    pub iterations: usize,
    /// True objective after each accepted iterate, starting with the initial point.
    pub trajectory: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
    /// KKT residual of the lifted problem at the final iterate.
    pub kkt_residual: f64,
    pub performance: Performance,
    pub solver_status: Vec<SolveStatus>,
}

impl ScaState {
    pub fn objective(&self) -> f64 {
        *self.trajectory.last().expect("trajectory holds the initial point")
    }

    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIter
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartSummary {
    pub objective: f64,
    pub sum_rate: f64,
    pub sum_crb: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug)]
pub struct ScaResult {
    pub design: TransmitDesign,
    pub state: ScaState,
    /// Index of the kept restart.
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

/// Weighted trade-off problem on fixed channels.
pub struct ScaProblem<'a, C: Channels> {
    pub ch: &'a C,
    pub budget: LinkBudget,
    pub weight: f64,
    pub layout: Layout,
    pub options: ScaOptions,
    /// `rho_s a^H Q a + rho_SI eta sum g^H Q g` per receiver.
    interference_coeffs: [Vec<f64>; 2],
    /// `rho_SI eta sum g^H Q g` per receiver.
    si_coeffs: [Vec<f64>; 2],
    /// `|alpha|^2 adot^H Q adot` per receiver.
    information_coeffs: [Vec<f64>; 2],
    /// `B_{k,l}^H h_{k,l}`: effective channel in beam coordinates.
    gain_coeffs: [Vec<CVec>; 2],
}

impl<'a, C: Channels> ScaProblem<'a, C> {
    pub fn new(
        ch: &'a C,
        budget: LinkBudget,
        weight: f64,
        layout: Layout,
        options: ScaOptions,
    ) -> Result<Self, ScaError> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(ScaError::Weight(weight));
        }
        let m = layout.m;
        let mut interference_coeffs: [Vec<f64>; 2] = Default::default();
        let mut si_coeffs: [Vec<f64>; 2] = Default::default();
        let mut information_coeffs: [Vec<f64>; 2] = Default::default();
        let mut gain_coeffs: [Vec<CVec>; 2] = Default::default();
        for k in 0..2 {
            let mut si = vec![0.0; m * m];
            for g in ch.si_taps(k) {
                for (s, c) in si.iter_mut().zip(quad_form_coeffs(g)) {
                    *s += budget.rho_si * budget.eta * c;
                }
            }
            let a = quad_form_coeffs(&ch.steering(k));
            interference_coeffs[k] = si.iter().zip(&a).map(|(s, a)| s + budget.rho_s * a).collect();
            si_coeffs[k] = si;
            let alpha2 = ch.alpha(k).norm_sqr();
            information_coeffs[k] = quad_form_coeffs(&ch.steering_derivative(k))
                .into_iter()
                .map(|c| alpha2 * c)
                .collect();
            gain_coeffs[k] = layout.bases[k]
                .iter()
                .zip(ch.comm_taps(k))
                .map(|(b, h)| b.adjoint() * h)
                .collect();
        }
        Ok(Self {
            ch,
            budget,
            weight,
            layout,
            options,
            interference_coeffs,
            si_coeffs,
            information_coeffs,
            gain_coeffs,
        })
    }

    /// `(1 - w) mu / (2 rho_s N)`, the weight of `1 / sum_i d_{k,i}`.
    pub fn crb_weight(&self) -> f64 {
        (1.0 - self.weight) * self.options.mu / (2.0 * self.budget.rho_s * self.budget.n_half as f64)
    }

    pub fn design(&self, it: &Iterate) -> Result<TransmitDesign, ScaError> {
        let lay = &self.layout;
        let m = lay.m;
        let mut beams: [[Vec<CVec>; 2]; 2] = Default::default();
        let mut q: [[CMat; 2]; 2] = Default::default();
        for k in 0..2 {
            for i in 0..2 {
                let blocks = &lay.slot_blocks[k][i];
                if blocks.is_empty() {
                    beams[k][i] = vec![CVec::zeros(m); lay.taps];
                    q[k][i] = CMat::zeros(m, m);
                    continue;
                }
                let mut qs = CMat::zeros(m, m);
                for &b in blocks {
                    qs += &it.q[b];
                    beams[k][i].push(&lay.bases[k][lay.blocks[b].l] * &it.v[b]);
                }
                q[k][i] = qs;
            }
        }
        Ok(TransmitDesign::new(lay.mode, lay.band, beams, q)?)
    }

    pub fn performance(&self, design: &TransmitDesign) -> Result<Performance, ScaError> {
        Ok(metrics::evaluate(design, self.ch, &self.budget)?)
    }

    pub fn objective(&self, perf: &Performance) -> f64 {
        scalarized_objective(self.weight, self.options.mu, perf)
    }

    /// Random start: Gaussian beams using `beam_fraction` of each interval's
    /// share, the rest spread isotropically (minus a small margin).
    pub fn initial_iterate<R: Rng + ?Sized>(&self, rng: &mut R) -> Iterate {
        let lay = &self.layout;
        let m = lay.m;
        let mut q = vec![CMat::zeros(m, m); lay.blocks.len()];
        let mut v = vec![CVec::zeros(0); lay.blocks.len()];
        for k in 0..2 {
            let p = lay.interval_budget(k);
            for i in 0..2 {
                let blocks = &lay.slot_blocks[k][i];
                if blocks.is_empty() || lay.blocks[blocks[0]].i != i {
                    continue;
                }
                let mut power = 0.0;
                for &b in blocks {
                    v[b] = complex_gaussian_vec(rng, lay.blocks[b].v_dim, 1.0);
                    power += (&lay.bases[k][lay.blocks[b].l] * &v[b]).norm_squared();
                }
                let scale = if power > 0.0 { (self.options.beam_fraction * p / power).sqrt() } else { 0.0 };
                let iso = (1.0 - self.options.beam_fraction) * (1.0 - POWER_MARGIN) * p / (m * blocks.len()) as f64;
                for &b in blocks {
                    v[b] *= C64::new(scale, 0.0);
                    let w = &lay.bases[k][lay.blocks[b].l] * &v[b];
                    q[b] = &w * w.adjoint() + CMat::identity(m, m) * C64::new(iso, 0.0);
                }
            }
        }
        Iterate { q, v }
    }

    /// Zero beams and isotropic covariances strictly inside the budget.
    fn center(&self) -> Iterate {
        let lay = &self.layout;
        let m = lay.m;
        let mut q = Vec::with_capacity(lay.blocks.len());
        let mut v = Vec::with_capacity(lay.blocks.len());
        for blk in &lay.blocks {
            let taps = lay.slot_blocks[blk.k][blk.i].len();
            let iso = (1.0 - POWER_MARGIN) * lay.interval_budget(blk.k) / (m * taps) as f64;
            q.push(CMat::identity(m, m) * C64::new(iso, 0.0));
            v.push(CVec::zeros(blk.v_dim));
        }
        Iterate { q, v }
    }

    fn expansion(&self, design: &TransmitDesign) -> Result<Expansion, ScaError> {
        let mut e = Expansion {
            gain: [[C64::new(0.0, 0.0); 2]; 2],
            interference: [[1.0; 2]; 2],
            amplitude: [[0.0; 2]; 2],
            denominator: [[1.0; 2]; 2],
        };
        for k in 0..2 {
            let alpha2 = self.ch.alpha(k).norm_sqr();
            let adot = self.ch.steering_derivative(k);
            for i in 0..2 {
                let q = &design.q[k][i];
                e.gain[k][i] = metrics::effective_gain(design, self.ch, k, i);
                e.interference[k][i] = metrics::interference(design, self.ch, &self.budget, k, i)?;
                let phi = metrics::residual_si_power(q, self.ch.si_taps(k), self.budget.eta)?;
                e.denominator[k][i] = self.budget.rho_si * phi + 1.0;
                e.amplitude[k][i] = (alpha2 * quad_form(q, &adot)).max(0.0).sqrt();
            }
        }
        Ok(e)
    }

    /// Convex subproblem linearized at `it`.
    pub fn subproblem(&self, it: &Iterate) -> Result<ScaSubproblem, ScaError> {
        let design = self.design(it)?;
        let e = self.expansion(&design)?;
        let lay = &self.layout;
        let m = lay.m;
        let mut spec = SubproblemSpec::new(0);
        for blk in &lay.blocks {
            let tag = format!("{},{},{}", blk.k, blk.i, blk.l);
            for p in 0..m * m {
                spec.add_var(format!("Q[{tag}][{p}]"));
            }
            for j in 0..blk.v_dim {
                spec.add_var(format!("Re v[{tag}][{j}]"));
                spec.add_var(format!("Im v[{tag}][{j}]"));
            }
        }
        let trace: Vec<f64> = (0..m * m).map(|p| if p < m { 1.0 } else { 0.0 }).collect();

        for k in 0..2 {
            let mut power = AffineExpr::new(POWER_BUDGET);
            for i in 0..2 {
                lay.add_q(&mut power, k, i, &trace, -1.0);
            }
            spec.add_inequality(format!("power[{k}]"), power.compact());
        }

        // Q_{k,i,l} >= w w^H as [[Q, w], [w^H, 1]] >= 0
        for blk in &lay.blocks {
            let basis = &lay.bases[blk.k][blk.l];
            let mut constant = CMat::zeros(m + 1, m + 1);
            constant[(m, m)] = ONE;
            let mut terms = Vec::with_capacity(m * m + 2 * blk.v_dim);
            for p in 0..m * m {
                terms.push(PsdTerm { var: blk.q_offset + p, entries: hermitian_basis_entries(m, p) });
            }
            for j in 0..blk.v_dim {
                let col: Vec<C64> = (0..m).map(|a| basis[(a, j)]).collect();
                let re = col.iter().enumerate().flat_map(|(a, &b)| [(a, m, b), (m, a, b.conj())]).collect();
                let im = col
                    .iter()
                    .enumerate()
                    .flat_map(|(a, &b)| [(a, m, J * b), (m, a, -J * b.conj())])
                    .collect();
                terms.push(PsdTerm { var: blk.v_offset + 2 * j, entries: re });
                terms.push(PsdTerm { var: blk.v_offset + 2 * j + 1, entries: im });
            }
            spec.psd_blocks.push(PsdBlock {
                dim: m + 1,
                constant,
                terms,
                label: format!("schur[{},{},{}]", blk.k, blk.i, blk.l),
            });
        }

        let mut aux = AuxIndex::default();
        let mut rates = Vec::new();
        let mut senses = Vec::new();
        let crb_weight = self.crb_weight();
        for k in 0..2 {
            let peer = 1 - k;
            for i in 0..2 {
                let src = source_interval(lay.band, i);
                if self.weight > 0.0 && lay.active(peer, src) && e.gain[k][i].norm() > GAIN_EPS {
                    let (ca, cb) = linearize_quadratic_over_linear(e.gain[k][i], e.interference[k][i])?;
                    let rho_c = self.budget.rho_c;
                    let mut s = AffineExpr::new(-rho_c * cb);
                    for &b in &lay.slot_blocks[peer][src] {
                        let blk = &lay.blocks[b];
                        for (j, c) in self.gain_coeffs[peer][blk.l].iter().enumerate() {
                            // Re(conj(ca) conj(c) v) = Re(ca c) Re v + Im(ca c) Im v
                            let z = ca * c;
                            s.add(blk.v_offset + 2 * j, rho_c * z.re);
                            s.add(blk.v_offset + 2 * j + 1, rho_c * z.im);
                        }
                    }
                    lay.add_q(&mut s, k, i, &self.interference_coeffs[k], -rho_c * cb);
                    let s = s.compact();
                    let r = spec.add_var(format!("r[{k},{i}]"));
                    let mut con = s.clone();
                    con.add(r, -1.0);
                    spec.add_inequality(format!("rate[{k},{i}]"), con);
                    spec.add_inequality(format!("r>=0[{k},{i}]"), AffineExpr::with_terms(vec![(r, 1.0)], 0.0));
                    spec.objective.log_terms.push(LogTerm { weight: 0.5 * self.weight, var: r });
                    aux.r[k][i] = Some(r);
                    rates.push(RateAux { var: r, surrogate: s });
                }
            }
            if crb_weight > 0.0 {
                let mut ds = Vec::new();
                for i in 0..2 {
                    if !lay.active(k, i) {
                        continue;
                    }
                    let mut info = AffineExpr::new(0.0);
                    lay.add_q(&mut info, k, i, &self.information_coeffs[k], 1.0);
                    let mut den = AffineExpr::new(1.0);
                    lay.add_q(&mut den, k, i, &self.si_coeffs[k], 1.0);
                    let (info, den) = (info.compact(), den.compact());
                    let amp = e.amplitude[k][i].max(SENSE_EPS);
                    let (ca, cb) = linearize_quadratic_over_linear(C64::new(amp, 0.0), e.denominator[k][i])?;
                    let g = spec.add_var(format!("g[{k},{i}]"));
                    let d = spec.add_var(format!("d[{k},{i}]"));
                    spec.quad_cones.push(QuadCone { linear: info.clone(), square_var: g });
                    spec.add_inequality(format!("g>=0[{k},{i}]"), AffineExpr::with_terms(vec![(g, 1.0)], 0.0));
                    let mut con = AffineExpr::new(0.0);
                    con.add(g, ca.re);
                    for &(j, c) in &den.terms {
                        con.add(j, -cb * c);
                    }
                    con.constant -= cb * den.constant;
                    con.add(d, -1.0);
                    spec.add_inequality(format!("sense[{k},{i}]"), con);
                    spec.add_inequality(
                        format!("d>=floor[{k},{i}]"),
                        AffineExpr::with_terms(vec![(d, 1.0)], -AUX_FLOOR),
                    );
                    aux.g[k][i] = Some(g);
                    aux.d[k][i] = Some(d);
                    ds.push(d);
                    senses.push(SenseAux { g, d, information: info, denominator: den, slope: ca.re, curvature: cb });
                }
                if !ds.is_empty() {
                    spec.objective.inverse_terms.push(InverseSumTerm { weight: crb_weight, vars: ds });
                }
            }
        }
        Ok(ScaSubproblem {
            spec,
            aux,
            design_vars: lay.design_vars,
            anchor: it.to_params(lay),
            center: self.center().to_params(lay),
            rates,
            senses,
        })
    }

    /// KKT residual of the lifted problem at `it` (true constraints, since
    /// the surrogates are exact to first order at their expansion point).
    pub fn kkt_at(&self, it: &Iterate) -> Result<f64, ScaError> {
        let sub = self.subproblem(it)?;
        Ok(kkt_residual(&sub.spec, &sub.tightened_point()).residual)
    }

    fn row(&self, iteration: usize, it: &Iterate, design: &TransmitDesign, perf: &Performance, newton: usize)
        -> Result<TraceRow, ScaError> {
        let mut tap_power = Vec::new();
        for k in 0..2 {
            for i in 0..2 {
                tap_power.extend(design.beams[k][i].iter().map(|w| w.norm_squared()));
            }
        }
        Ok(TraceRow {
            iteration,
            objective: self.objective(perf),
            sum_rate: perf.sum_rate,
            sum_crb: perf.sum_crb,
            kkt_residual: self.kkt_at(it)?,
            newton_steps: newton,
            tap_power,
        })
    }

    /// Over-relaxation along the last SCA update: beams move to
    /// `v + s (v - v_prev)` and the dedicated-sensing parts `R = Q - w w^H` to
    /// `R + s (R - R_prev)` (clipped to PSD), for `s = 1, 3, 7, ...` while the
    /// true objective improves. Trial points are scaled into the power budget.
    fn extrapolate(&self, prev: &Iterate, next: &Iterate, f_next: f64)
        -> Option<(Iterate, TransmitDesign, Performance, f64)> {
        let lay = &self.layout;
        let sensing = |it: &Iterate| -> Vec<CMat> {
            lay.blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| {
                    let w = &lay.bases[blk.k][blk.l] * &it.v[b];
                    &it.q[b] - &w * w.adjoint()
                })
                .collect()
        };
        let (r_prev, r_next) = (sensing(prev), sensing(next));
        let mut best: Option<(Iterate, TransmitDesign, Performance, f64)> = None;
        let mut f_best = f_next;
        let mut step = 1.0;
        while step < self.options.max_extrapolation {
            let s = C64::new(step, 0.0);
            let mut trial = Iterate { q: Vec::with_capacity(lay.blocks.len()), v: Vec::with_capacity(lay.blocks.len()) };
            for (b, blk) in lay.blocks.iter().enumerate() {
                let v = &next.v[b] + (&next.v[b] - &prev.v[b]) * s;
                let r = &r_next[b] + (&r_next[b] - &r_prev[b]) * s;
                let (r, _) = psd_repair(&r);
                let w = &lay.bases[blk.k][blk.l] * &v;
                trial.q.push(&w * w.adjoint() + r + CMat::identity(lay.m, lay.m) * C64::new(PULL_BACK_MARGIN, 0.0));
                trial.v.push(v);
            }
            let Some(trial) = self.scale_into_budget(trial) else { break };
            let Ok(design) = self.design(&trial) else { break };
            let Ok(perf) = self.performance(&design) else { break };
            let f = self.objective(&perf);
            if !(f > f_best) {
                break;
            }
            f_best = f;
            best = Some((trial, design, perf, f));
            step = 2.0 * step + 1.0;
        }
        best
    }

    fn scale_into_budget(&self, mut it: Iterate) -> Option<Iterate> {
        let lay = &self.layout;
        for k in 0..2 {
            let mut power = 0.0;
            for i in 0..2 {
                for &b in &lay.slot_blocks[k][i] {
                    power += it.q[b].trace().re;
                }
            }
            if !power.is_finite() {
                return None;
            }
            let cap = POWER_BUDGET * (1.0 - 1e-12);
            if power > cap {
                let c = cap / power;
                for (b, blk) in lay.blocks.iter().enumerate() {
                    if blk.k == k {
                        it.q[b] *= C64::new(c, 0.0);
                        it.v[b] *= C64::new(c.sqrt(), 0.0);
                    }
                }
            }
        }
        Some(it)
    }

    /// Runs SCA from `start` until the relative objective change drops below
    /// `rel_tol`, a subproblem fails to improve, or `max_iter` is reached.
    pub fn run_from(&self, start: Iterate) -> Result<(TransmitDesign, Iterate, ScaState), ScaError> {
        let mut it = start;
        let mut design = self.design(&it)?;
        let mut perf = self.performance(&design)?;
        let mut trajectory = vec![self.objective(&perf)];
        let mut trace = vec![self.row(0, &it, &design, &perf, 0)?];
        let mut status = Vec::new();
        let mut stop = StopReason::MaxIter;
        for t in 1..=self.options.max_iter {
            let sub = self.subproblem(&it)?;
            let x0 = sub.strictly_feasible_start().ok_or(ScaError::NoStart(t))?;
            let sol = solve(&sub.spec, &x0, &self.options.solver)
                .map_err(|source| ScaError::Spec { iteration: t, source })?;
            status.push(sol.status);
            let next = Iterate::from_params(&self.layout, sub.design_part(&sol.values));
            let mut next_design = self.design(&next)?;
            let mut next_perf = self.performance(&next_design)?;
            let f_prev = *trajectory.last().unwrap();
            let mut f = self.objective(&next_perf);
            let mut next = next;
            if f >= f_prev {
                if let Some((x, d, p, fx)) = self.extrapolate(&it, &next, f) {
                    (next, next_design, next_perf, f) = (x, d, p, fx);
                }
            }
            if !(f >= f_prev) {
                stop = StopReason::NoImprovement;
                break;
            }
            it = next;
            design = next_design;
            perf = next_perf;
            trajectory.push(f);
            trace.push(self.row(t, &it, &design, &perf, sol.iterations)?);
            let small_change = (f - f_prev).abs() <= self.options.rel_tol * f_prev.abs().max(1e-12);
            if small_change && trace.last().unwrap().kkt_residual <= self.options.kkt_tol {
                stop = StopReason::Tolerance;
                break;
            }
        }
        let kkt = trace.last().unwrap().kkt_residual;
        let state = ScaState {
            iterations: trajectory.len() - 1,
            trajectory,
            trace,
            stop,
            kkt_residual: kkt,
            performance: perf,
            solver_status: status,
        };
        Ok((design, it, state))
    }

    /// Best of `options.restarts` random initializations; restart `r` draws
    /// from stream `(master, trial, Init(r))`.
    pub fn run(&self, master: u64, trial: u64) -> Result<ScaResult, ScaError> {
        let mut best: Option<(TransmitDesign, ScaState, usize)> = None;
        let mut restarts = Vec::new();
        for r in 0..self.options.restarts.max(1) {
            let mut rng = stream(master, trial, Purpose::Init(r));
            let start = self.initial_iterate(&mut rng);
            let (design, _, state) = self.run_from(start)?;
            restarts.push(RestartSummary {
                objective: state.objective(),
                sum_rate: state.performance.sum_rate,
                sum_crb: state.performance.sum_crb,
                iterations: state.iterations,
                kkt_residual: state.kkt_residual,
            });
            let better = best.as_ref().is_none_or(|(_, s, _)| state.objective() > s.objective());
            if better {
                best = Some((design, state, r as usize));
            }
        }
        let (design, state, best_restart) = best.expect("at least one restart");
        Ok(ScaResult { design, state, best_restart, restarts })
    }
}
