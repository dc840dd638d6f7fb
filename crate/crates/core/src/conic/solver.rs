//! Barrier path-following solver for [`SubproblemSpec`].
//!
//! Minimizes `-t f(x) - sum log a_i(x) - sum log(l_q(x) - x_s^2) - sum log det H_b(x)`
//! with damped Newton steps for a geometrically increasing barrier weight `t`.
//! Every iterate stays strictly feasible; linear equalities are removed by
//! restricting steps to their null space.

use nalgebra::{DMatrix, DVector};

use super::kkt::kkt_residual;
use super::spec::{SpecError, SubproblemSpec};
use crate::linalg::{hermitian_logdet, hermitian_pd_inverse_logdet, CMat};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Stop once the duality-gap estimate `degree / t` falls below this.
    pub tol: f64,
    pub initial_weight: f64,
    pub weight_growth: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    /// Cap on Newton steps over all centering rounds.
    pub max_newton_steps: usize,
    pub armijo: f64,
    pub backtrack: f64,
    /// Equalities must hold this tightly at the start point.
    pub equality_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            initial_weight: 1.0,
            weight_growth: 10.0,
            newton_tol: 1e-9,
            max_newton_steps: 200,
            armijo: 0.01,
            backtrack: 0.5,
            equality_tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleStart,
}

#[derive(Clone, Debug)]
pub struct SubproblemSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub barrier_weight: f64,
    pub duality_gap: f64,
    /// The barrier-augmented objective never decreased over an accepted step.
    pub monotone: bool,
}

/// Slack data of a strictly feasible point.
struct Slacks {
    lin: Vec<f64>,
    quad: Vec<f64>,
    psd_inv: Vec<CMat>,
    psd_logdet: Vec<f64>,
}

fn slacks(spec: &SubproblemSpec, x: &[f64]) -> Option<Slacks> {
    spec.objective.value(x)?;
    let mut lin = Vec::with_capacity(spec.inequalities.len());
    for e in &spec.inequalities {
        let s = e.eval(x);
        if !(s > 0.0) {
            return None;
        }
        lin.push(s);
    }
    let mut quad = Vec::with_capacity(spec.quad_cones.len());
    for q in &spec.quad_cones {
        let s = q.slack(x);
        if !(s > 0.0) {
            return None;
        }
        quad.push(s);
    }
    let mut psd_inv = Vec::with_capacity(spec.psd_blocks.len());
    let mut psd_logdet = Vec::with_capacity(spec.psd_blocks.len());
    for b in &spec.psd_blocks {
        let h = b.eval(x);
        let (inv, ld) = hermitian_pd_inverse_logdet(&h)?;
        psd_inv.push(inv);
        psd_logdet.push(ld);
    }
    Some(Slacks { lin, quad, psd_inv, psd_logdet })
}

/// Gradient and Hessian of the barrier-augmented function at weight `t`.
fn derivatives(spec: &SubproblemSpec, x: &[f64], t: f64, sl: &Slacks) -> (DVector<f64>, DMatrix<f64>) {
    let n = spec.num_vars;
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);

    let mut fg = vec![0.0; n];
    spec.objective.gradient(x, &mut fg);
    for j in 0..n {
        g[j] = -t * fg[j];
    }
    for term in &spec.objective.log_terms {
        let a = 1.0 + x[term.var];
        h[(term.var, term.var)] += t * term.weight / (std::f64::consts::LN_2 * a * a);
    }
    for term in &spec.objective.inverse_terms {
        let s: f64 = term.vars.iter().map(|&j| x[j]).sum();
        let c = t * 2.0 * term.weight / (s * s * s);
        for &a in &term.vars {
            for &b in &term.vars {
                h[(a, b)] += c;
            }
        }
    }

    for (e, &s) in spec.inequalities.iter().zip(&sl.lin) {
        for &(a, ca) in &e.terms {
            g[a] -= ca / s;
            for &(b, cb) in &e.terms {
                h[(a, b)] += ca * cb / (s * s);
            }
        }
    }

    for (q, &s) in spec.quad_cones.iter().zip(&sl.quad) {
        // grad of slack: linear coefficients minus 2 x_s on the squared variable
        let mut ds: Vec<(usize, f64)> = q.linear.terms.clone();
        ds.push((q.square_var, -2.0 * x[q.square_var]));
        for &(a, ca) in &ds {
            g[a] -= ca / s;
            for &(b, cb) in &ds {
                h[(a, b)] += ca * cb / (s * s);
            }
        }
        h[(q.square_var, q.square_var)] += 2.0 / s;
    }

    for (b, inv) in spec.psd_blocks.iter().zip(&sl.psd_inv) {
        let d = b.dim;
        // A_j = S H_j, stored densely per term
        let prods: Vec<CMat> = b
            .terms
            .iter()
            .map(|term| {
                let mut a = CMat::zeros(d, d);
                for &(r, c, z) in &term.entries {
                    for row in 0..d {
                        a[(row, c)] += inv[(row, r)] * z;
                    }
                }
                a
            })
            .collect();
        for (ta, aa) in b.terms.iter().zip(&prods) {
            g[ta.var] -= aa.trace().re;
        }
        for (ia, (ta, aa)) in b.terms.iter().zip(&prods).enumerate() {
            for (tb, ab) in b.terms.iter().zip(&prods).skip(ia) {
                let mut s = 0.0;
                for r in 0..d {
                    for c in 0..d {
                        s += (aa[(r, c)] * ab[(c, r)]).re;
                    }
                }
                h[(ta.var, tb.var)] += s;
                if !std::ptr::eq(ta, tb) {
                    h[(tb.var, ta.var)] += s;
                }
            }
        }
    }
    (g, h)
}

/// `phi(x + step dx) - phi(x)` evaluated term by term to avoid cancellation
/// at large barrier weights. `None` if the trial point is infeasible.
fn barrier_change(
    spec: &SubproblemSpec,
    x: &[f64],
    sl: &Slacks,
    dx: &[f64],
    step: f64,
    t: f64,
) -> Option<f64> {
    let trial: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + step * b).collect();
    let mut change = 0.0;

    // objective part: -t (f(trial) - f(x))
    let obj = &spec.objective;
    let mut df: f64 = obj.linear.iter().map(|&(j, c)| c * step * dx[j]).sum();
    for term in &obj.log_terms {
        let a = 1.0 + x[term.var];
        let rel = step * dx[term.var] / a;
        if !(rel > -1.0) {
            return None;
        }
        df += term.weight * rel.ln_1p() / std::f64::consts::LN_2;
    }
    for term in &obj.inverse_terms {
        let s: f64 = term.vars.iter().map(|&j| x[j]).sum();
        let ds: f64 = term.vars.iter().map(|&j| step * dx[j]).sum();
        let s_new = s + ds;
        if !(s_new > 0.0) {
            return None;
        }
        df += term.weight * ds / (s * s_new);
    }
    change -= t * df;

    for (e, &s) in spec.inequalities.iter().zip(&sl.lin) {
        let rel = step * e.directional(dx) / s;
        if !(rel > -1.0) {
            return None;
        }
        change -= rel.ln_1p();
    }
    for (q, &s) in spec.quad_cones.iter().zip(&sl.quad) {
        let xs = x[q.square_var];
        let d = step * dx[q.square_var];
        let ds = step * q.linear.directional(dx) - (2.0 * xs * d + d * d);
        let rel = ds / s;
        if !(rel > -1.0) {
            return None;
        }
        change -= rel.ln_1p();
    }
    for (b, &ld) in spec.psd_blocks.iter().zip(&sl.psd_logdet) {
        let ld_new = hermitian_logdet(&b.eval(&trial))?;
        change -= ld_new - ld;
    }
    Some(change)
}

/// Orthonormal basis of the null space of the equality constraints.
fn equality_nullspace(spec: &SubproblemSpec) -> Option<DMatrix<f64>> {
    if spec.equalities.is_empty() {
        return None;
    }
    let n = spec.num_vars;
    let p = spec.equalities.len();
    let mut a = DMatrix::zeros(p.max(n), n);
    for (i, e) in spec.equalities.iter().enumerate() {
        for &(j, c) in &e.terms {
            a[(i, j)] += c;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-12 * smax.max(1.0) * n as f64;
    let keep: Vec<usize> = (0..n)
        .filter(|&i| i >= svd.singular_values.len() || svd.singular_values[i] <= tol)
        .collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for r in 0..n {
            basis[(r, c)] = vt[(i, r)];
        }
    }
    Some(basis)
}

pub(crate) fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    if let Some(ch) = h.clone().cholesky() {
        return ch.solve(g);
    }
    let scale = h.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut ridge = 1e-14 * scale;
    for _ in 0..16 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            return ch.solve(g);
        }
        ridge *= 10.0;
    }
    // last resort: pseudo-inverse
    h.clone()
        .svd(true, true)
        .solve(g, 1e-14 * scale)
        .unwrap_or_else(|_| DVector::zeros(g.len()))
}

/// Runs the barrier method from a strictly feasible `start`.
pub fn solve(
    spec: &SubproblemSpec,
    start: &[f64],
    opts: &SolverOptions,
) -> Result<SubproblemSolution, SpecError> {
    spec.check()?;
    if start.len() != spec.num_vars {
        return Err(SpecError::StartLength(start.len(), spec.num_vars));
    }
    let feas = spec.feasibility(start);
    let mut x = start.to_vec();
    let sl0 = slacks(spec, &x);
    if !feas.strictly_feasible(opts.equality_tol) || sl0.is_none() {
        return Ok(SubproblemSolution {
            objective: spec.objective.value(&x).unwrap_or(f64::NAN),
            values: x,
            kkt_residual: f64::INFINITY,
            iterations: 0,
            status: SolveStatus::InfeasibleStart,
            barrier_weight: 0.0,
            duality_gap: f64::INFINITY,
            monotone: true,
        });
    }
    let null = equality_nullspace(spec);
    let degree = spec.barrier_degree().max(1.0);
    let mut t = opts.initial_weight;
    let mut steps = 0usize;
    let mut monotone = true;
    let mut status = SolveStatus::Optimal;
    let mut sl = sl0.unwrap();

    'outer: loop {
        // centering
        loop {
            if steps >= opts.max_newton_steps {
                status = SolveStatus::MaxIter;
                break 'outer;
            }
            let (g, h) = derivatives(spec, &x, t, &sl);
            let dx = match &null {
                None => -solve_spd(&h, &g),
                Some(nb) => {
                    let hz = nb.transpose() * &h * nb;
                    let gz = nb.transpose() * &g;
                    nb * (-solve_spd(&hz, &gz))
                }
            };
            steps += 1;
            let slope = g.dot(&dx);
            let decrement2 = -slope;
            if !(decrement2 > 0.0) || decrement2 / 2.0 <= opts.newton_tol {
                break;
            }
            let dxs = dx.as_slice();
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-14 {
                if let Some(change) = barrier_change(spec, &x, &sl, dxs, step, t) {
                    if change <= opts.armijo * step * slope {
                        accepted = Some((step, change));
                        break;
                    }
                }
                step *= opts.backtrack;
            }
            let Some((step, change)) = accepted else {
                // no measurable decrease left at this weight
                break;
            };
            if change > 0.0 {
                monotone = false;
            }
            for (xi, d) in x.iter_mut().zip(dxs) {
                *xi += step * d;
            }
            match slacks(spec, &x) {
                Some(s) => sl = s,
                None => unreachable!("line search keeps iterates strictly feasible"),
            }
        }
        if degree / t < opts.tol {
            break;
        }
        t *= opts.weight_growth;
    }

    let objective = spec.objective.value(&x).unwrap_or(f64::NAN);
    let kkt = kkt_residual(spec, &x).residual;
    Ok(SubproblemSolution {
        values: x,
        objective,
        kkt_residual: kkt,
        iterations: steps,
        status,
        barrier_weight: t,
        duality_gap: degree / t,
        monotone,
    })
}
