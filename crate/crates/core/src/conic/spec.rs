//! Structured concave-maximization problems over real variables.
//!
//! ```txt
//!   maximize   sum_j c_j x_j + sum w_i log2(1 + x_{r_i}) - sum v_k / (sum_{j in S_k} x_j)
//!   subject to a_i(x) >= 0                 (affine)
//!              l_q(x) - x_{s_q}^2 >= 0     (quadratic-over-one cone)
//!              H_b(x) = C_b + sum x_j H_bj  PSD  (Hermitian blocks)
//!              e_i(x) = 0                  (affine)
//! ```

use serde_json::{json, Value};

use crate::linalg::{CMat, C64};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(constant: f64) -> Self {
        Self { terms: Vec::new(), constant }
    }

    pub fn with_terms(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn add(&mut self, var: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    /// Adds `scale * coefs[p]` on variable `offset + p`.
    pub fn add_block(&mut self, offset: usize, coefs: &[f64], scale: f64) -> &mut Self {
        for (p, &c) in coefs.iter().enumerate() {
            self.add(offset + p, scale * c);
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    /// Change of value along direction `dx` (constant excluded).
    pub fn directional(&self, dx: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * dx[j]).sum()
    }

    /// Merges repeated variables and drops zero coefficients; terms end up sorted by variable.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (j, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += c,
                _ => out.push((j, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

/// `weight * log2(1 + x_var)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogTerm {
    pub weight: f64,
    pub var: usize,
}

/// `-weight / sum_{j in vars} x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseSumTerm {
    pub weight: f64,
    pub vars: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Objective {
    pub linear: Vec<(usize, f64)>,
    pub log_terms: Vec<LogTerm>,
    pub inverse_terms: Vec<InverseSumTerm>,
}

impl Objective {
    /// Objective value, or `None` outside the domain of the log/inverse terms.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        let mut v: f64 = self.linear.iter().map(|&(j, c)| c * x[j]).sum();
        for t in &self.log_terms {
            let arg = 1.0 + x[t.var];
            if !(arg > 0.0) {
                return None;
            }
            v += t.weight * arg.log2();
        }
        for t in &self.inverse_terms {
            let s: f64 = t.vars.iter().map(|&j| x[j]).sum();
            if !(s > 0.0) {
                return None;
            }
            v -= t.weight / s;
        }
        Some(v)
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for &(j, c) in &self.linear {
            out[j] += c;
        }
        for t in &self.log_terms {
            out[t.var] += t.weight / ((1.0 + x[t.var]) * std::f64::consts::LN_2);
        }
        for t in &self.inverse_terms {
            let s: f64 = t.vars.iter().map(|&j| x[j]).sum();
            for &j in &t.vars {
                out[j] += t.weight / (s * s);
            }
        }
    }
}

/// `linear(x) - x_{square_var}^2 >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadCone {
    pub linear: AffineExpr,
    pub square_var: usize,
}

impl QuadCone {
    pub fn slack(&self, x: &[f64]) -> f64 {
        let s = x[self.square_var];
        self.linear.eval(x) - s * s
    }
}

/// One real-scaled Hermitian basis contribution `x_var * sum entries`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdTerm {
    pub var: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

/// Affine Hermitian matrix function `H(x) = constant + sum x_j H_j` constrained PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub dim: usize,
    pub constant: CMat,
    pub terms: Vec<PsdTerm>,
    pub label: String,
}

impl PsdBlock {
    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut h = self.constant.clone();
        for t in &self.terms {
            let v = x[t.var];
            if v != 0.0 {
                for &(r, c, z) in &t.entries {
                    h[(r, c)] += z * v;
                }
            }
        }
        h
    }

    /// `sum dx_j H_j`.
    pub fn directional(&self, dx: &[f64]) -> CMat {
        let mut h = CMat::zeros(self.dim, self.dim);
        for t in &self.terms {
            let v = dx[t.var];
            if v != 0.0 {
                for &(r, c, z) in &t.entries {
                    h[(r, c)] += z * v;
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubproblemSpec {
    pub num_vars: usize,
    pub var_names: Vec<String>,
    pub objective: Objective,
    /// Each expression must be `>= 0`.
    pub inequalities: Vec<AffineExpr>,
    pub inequality_labels: Vec<String>,
    pub quad_cones: Vec<QuadCone>,
    pub psd_blocks: Vec<PsdBlock>,
    /// Each expression must be `= 0`.
    pub equalities: Vec<AffineExpr>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("constraint `{0}` references variable {1} but the spec declares {2}")]
    UnknownVariable(String, usize, usize),
    #[error("start point has length {0}, spec declares {1} variables")]
    StartLength(usize, usize),
    #[error("psd block `{0}`: entry ({1},{2}) outside dimension {3}")]
    PsdEntry(String, usize, usize, usize),
}

impl SubproblemSpec {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            var_names: (0..num_vars).map(|j| format!("x{j}")).collect(),
            ..Default::default()
        }
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.var_names.push(name.into());
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_inequality(&mut self, label: impl Into<String>, expr: AffineExpr) {
        self.inequalities.push(expr);
        self.inequality_labels.push(label.into());
    }

    /// Barrier parameter: one per scalar constraint plus the block dimensions.
    pub fn barrier_degree(&self) -> f64 {
        (self.inequalities.len()
            + self.quad_cones.len()
            + self.psd_blocks.iter().map(|b| b.dim).sum::<usize>()) as f64
    }

    pub fn check(&self) -> Result<(), SpecError> {
        let n = self.num_vars;
        let chk = |name: &str, j: usize| {
            if j >= n {
                Err(SpecError::UnknownVariable(name.to_string(), j, n))
            } else {
                Ok(())
            }
        };
        for &(j, _) in &self.objective.linear {
            chk("objective", j)?;
        }
        for t in &self.objective.log_terms {
            chk("objective log term", t.var)?;
        }
        for t in &self.objective.inverse_terms {
            for &j in &t.vars {
                chk("objective inverse term", j)?;
            }
        }
        for (i, e) in self.inequalities.iter().enumerate() {
            let label = self.inequality_labels.get(i).cloned().unwrap_or_else(|| format!("ineq{i}"));
            for &(j, _) in &e.terms {
                chk(&label, j)?;
            }
        }
        for (i, q) in self.quad_cones.iter().enumerate() {
            chk(&format!("quad{i}"), q.square_var)?;
            for &(j, _) in &q.linear.terms {
                chk(&format!("quad{i}"), j)?;
            }
        }
        for b in &self.psd_blocks {
            for t in &b.terms {
                chk(&b.label, t.var)?;
                for &(r, c, _) in &t.entries {
                    if r >= b.dim || c >= b.dim {
                        return Err(SpecError::PsdEntry(b.label.clone(), r, c, b.dim));
                    }
                }
            }
        }
        for (i, e) in self.equalities.iter().enumerate() {
            for &(j, _) in &e.terms {
                chk(&format!("eq{i}"), j)?;
            }
        }
        Ok(())
    }

    /// Smallest strict-feasibility margin over all inequality-type constraints
    /// (minimum eigenvalue for PSD blocks) and the largest equality violation.
    pub fn feasibility(&self, x: &[f64]) -> Feasibility {
        let mut margin = f64::INFINITY;
        for e in &self.inequalities {
            margin = margin.min(e.eval(x));
        }
        for q in &self.quad_cones {
            margin = margin.min(q.slack(x));
        }
        for b in &self.psd_blocks {
            margin = margin.min(crate::linalg::min_eigenvalue(&b.eval(x)));
        }
        let eq_violation = self
            .equalities
            .iter()
            .map(|e| e.eval(x).abs())
            .fold(0.0, f64::max);
        Feasibility { margin, eq_violation }
    }

    /// Dense JSON dump for cross-checking with external tools.
    pub fn to_debug_json(&self) -> Value {
        let n = self.num_vars;
        let dense = |e: &AffineExpr| {
            let mut row = vec![0.0; n];
            for &(j, c) in &e.terms {
                row[j] += c;
            }
            json!({ "coefficients": row, "constant": e.constant })
        };
        let cmat = |m: &CMat| {
            let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
                .collect();
            rows
        };
        let psd: Vec<Value> = self
            .psd_blocks
            .iter()
            .map(|b| {
                let mut basis = Vec::new();
                for t in &b.terms {
                    let mut h = CMat::zeros(b.dim, b.dim);
                    for &(r, c, z) in &t.entries {
                        h[(r, c)] += z;
                    }
                    basis.push(json!({ "var": t.var, "matrix": cmat(&h) }));
                }
                json!({ "label": b.label, "dim": b.dim, "constant": cmat(&b.constant), "terms": basis })
            })
            .collect();
        json!({
            "num_vars": n,
            "var_names": self.var_names,
            "objective": {
                "linear": self.objective.linear,
                "log2_terms": self.objective.log_terms.iter().map(|t| json!({"weight": t.weight, "var": t.var})).collect::<Vec<_>>(),
                "inverse_sum_terms": self.objective.inverse_terms.iter().map(|t| json!({"weight": t.weight, "vars": t.vars})).collect::<Vec<_>>(),
            },
            "inequalities": self.inequalities.iter().zip(&self.inequality_labels).map(|(e, l)| {
                let mut v = dense(e);
                v["label"] = json!(l);
                v
            }).collect::<Vec<_>>(),
            "quad_cones": self.quad_cones.iter().map(|q| json!({"linear": dense(&q.linear), "square_var": q.square_var})).collect::<Vec<_>>(),
            "psd_blocks": psd,
            "equalities": self.equalities.iter().map(dense).collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feasibility {
    pub margin: f64,
    pub eq_violation: f64,
}

impl Feasibility {
    pub fn strictly_feasible(&self, eq_tol: f64) -> bool {
        self.margin > 0.0 && self.eq_violation <= eq_tol
    }
}
