//! First-order optimality residual of a [`SubproblemSpec`] at a given point.
//!
//! Multipliers for the active constraints are recovered by least squares
//! from the stationarity condition `grad f + sum mu_i grad c_i = 0`; the
//! residual is the largest of the stationarity error, dual infeasibility
//! (negative multipliers, non-PSD matrix multipliers), complementarity and
//! primal infeasibility.

use nalgebra::{DMatrix, DVector};

use super::spec::SubproblemSpec;
use crate::linalg::{hermitian_eigen, hermitian_from_params, min_eigenvalue, trace_functional_coeffs, CMat};

/// Constraints whose slack is below this (relative) tolerance count as active.
pub const ACTIVITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KktReport {
    pub residual: f64,
    pub stationarity: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub primal_infeasibility: f64,
    pub active: usize,
}

enum Column {
    Scalar { slack: f64 },
    Free,
    Psd { offset: usize },
}

pub fn kkt_residual(spec: &SubproblemSpec, x: &[f64]) -> KktReport {
    kkt_report(spec, x, ACTIVITY_TOL)
}

pub fn kkt_report(spec: &SubproblemSpec, x: &[f64], activity_tol: f64) -> KktReport {
    let n = spec.num_vars;
    let mut grad = vec![0.0; n];
    spec.objective.gradient(x, &mut grad);
    let gscale = grad.iter().fold(1.0_f64, |m, v| m.max(v.abs()));

    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut kinds: Vec<Column> = Vec::new();
    let mut primal: f64 = 0.0;

    for e in &spec.inequalities {
        let s = e.eval(x);
        let scale = 1.0 + e.terms.iter().map(|&(j, c)| (c * x[j]).abs()).sum::<f64>() + e.constant.abs();
        primal = primal.max(-s / scale);
        if s <= activity_tol * scale {
            let mut col = vec![0.0; n];
            for &(j, c) in &e.terms {
                col[j] += c;
            }
            cols.push(col);
            kinds.push(Column::Scalar { slack: s });
        }
    }
    for q in &spec.quad_cones {
        let s = q.slack(x);
        let xs = x[q.square_var];
        let scale = 1.0 + q.linear.eval(x).abs() + xs * xs;
        primal = primal.max(-s / scale);
        if s <= activity_tol * scale {
            let mut col = vec![0.0; n];
            for &(j, c) in &q.linear.terms {
                col[j] += c;
            }
            col[q.square_var] -= 2.0 * xs;
            cols.push(col);
            kinds.push(Column::Scalar { slack: s });
        }
    }
    let mut psd_slack: Vec<(Vec<f64>, CMat)> = Vec::new();
    for b in &spec.psd_blocks {
        let h = b.eval(x);
        let (vals, vecs) = hermitian_eigen(&h);
        let scale = 1.0 + vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        primal = primal.max(-vals.first().copied().unwrap_or(0.0) / scale);
        let active: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= activity_tol * scale).collect();
        let r = active.len();
        if r == 0 {
            continue;
        }
        let mut v = CMat::zeros(b.dim, r);
        for (c, &i) in active.iter().enumerate() {
            v.set_column(c, &vecs.column(i));
        }
        let offset = cols.len();
        // column for parameter p of Y: Re tr(E_p V^H H_j V) per variable j
        let mut block_cols = vec![vec![0.0; n]; r * r];
        for term in &b.terms {
            let mut hj = CMat::zeros(b.dim, b.dim);
            for &(rr, cc, z) in &term.entries {
                hj[(rr, cc)] += z;
            }
            let w = v.adjoint() * hj * &v;
            for (p, c) in trace_functional_coeffs(&w).into_iter().enumerate() {
                block_cols[p][term.var] += c;
            }
        }
        for col in block_cols {
            cols.push(col);
            kinds.push(Column::Psd { offset });
        }
        let act_vals: Vec<f64> = active.iter().map(|&i| vals[i]).collect();
        psd_slack.push((act_vals, v));
    }
    for e in &spec.equalities {
        let mut col = vec![0.0; n];
        for &(j, c) in &e.terms {
            col[j] += c;
        }
        primal = primal.max(e.eval(x).abs());
        cols.push(col);
        kinds.push(Column::Free);
    }

    let g = DVector::from_vec(grad);
    let (mu, resid) = if cols.is_empty() {
        (DVector::zeros(0), g.clone())
    } else {
        let b = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
        let svd = b.clone().svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let mu = svd
            .solve(&(-&g), 1e-12 * smax.max(1.0))
            .unwrap_or_else(|_| DVector::zeros(cols.len()));
        let resid = &g + &b * &mu;
        (mu, resid)
    };
    let stationarity = resid.amax() / gscale;

    let mut dual: f64 = 0.0;
    let mut compl: f64 = 0.0;
    let mut psd_seen = 0usize;
    let mut c = 0usize;
    while c < kinds.len() {
        match kinds[c] {
            Column::Scalar { slack } => {
                dual = dual.max(-mu[c] / gscale);
                compl = compl.max((mu[c] * slack).abs() / gscale);
                c += 1;
            }
            Column::Free => c += 1,
            Column::Psd { offset } => {
                let (act_vals, _) = &psd_slack[psd_seen];
                let r = act_vals.len();
                let y = hermitian_from_params(r, &mu.as_slice()[offset..offset + r * r]);
                dual = dual.max(-min_eigenvalue(&y) / gscale);
                for (i, &lam) in act_vals.iter().enumerate() {
                    compl = compl.max((y[(i, i)].re * lam).abs() / gscale);
                }
                psd_seen += 1;
                c += r * r;
            }
        }
    }

    let residual = stationarity.max(dual).max(compl).max(primal);
    KktReport {
        residual,
        stationarity,
        dual_infeasibility: dual,
        complementarity: compl,
        primal_infeasibility: primal,
        active: kinds.len(),
    }
}
