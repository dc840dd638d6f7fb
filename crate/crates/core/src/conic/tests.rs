use super::*;
use crate::linalg::{hermitian_basis_entries, hermitian_from_params, CMat};

fn box_log_problem() -> SubproblemSpec {
    let mut s = SubproblemSpec::new(1);
    s.objective.log_terms.push(LogTerm { weight: 1.0, var: 0 });
    s.add_inequality("r >= 0", AffineExpr::with_terms(vec![(0, 1.0)], 0.0));
    s.add_inequality("r <= 3", AffineExpr::with_terms(vec![(0, -1.0)], 3.0));
    s
}

fn psd_block(m: usize, offset: usize, label: &str) -> PsdBlock {
    PsdBlock {
        dim: m,
        constant: CMat::zeros(m, m),
        terms: (0..m * m)
            .map(|p| PsdTerm { var: offset + p, entries: hermitian_basis_entries(m, p) })
            .collect(),
        label: label.into(),
    }
}

#[test]
fn log_box_reaches_upper_bound() {
    let s = box_log_problem();
    let sol = solve(&s, &[1.0], &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 2.0).abs() < 1e-7, "{}", sol.objective);
    assert!(sol.kkt_residual < 1e-6, "{}", sol.kkt_residual);
    assert!(sol.monotone);
}

#[test]
fn kkt_residual_separates_optimal_and_interior_points() {
    let s = box_log_problem();
    assert!(kkt_residual(&s, &[3.0]).residual < 1e-10);
    assert!(kkt_residual(&s, &[1.0]).residual >= 0.1);
}

#[test]
fn trace_over_psd_cone() {
    // maximize tr(diag(1,2) Q) subject to tr Q <= 1, Q PSD
    let m = 2;
    let mut s = SubproblemSpec::new(m * m);
    let a = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0.into(), 2.0.into()]));
    for (p, c) in crate::linalg::trace_functional_coeffs(&a).into_iter().enumerate() {
        if c != 0.0 {
            s.objective.linear.push((p, c));
        }
    }
    let mut budget = AffineExpr::new(1.0);
    budget.add(0, -1.0).add(1, -1.0);
    s.add_inequality("power", budget);
    s.psd_blocks.push(psd_block(m, 0, "Q"));
    let start = vec![0.25, 0.25, 0.0, 0.0];
    let sol = solve(&s, &start, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 2.0).abs() < 1e-7);
    let q = hermitian_from_params(m, &sol.values);
    assert!((q[(1, 1)].re - 1.0).abs() < 1e-6);
    assert!(sol.kkt_residual < 1e-5, "{}", sol.kkt_residual);
}

#[test]
fn equalities_are_kept_along_the_path() {
    // maximize x + 2y with x = y, 0 <= x, y <= 1
    let mut s = SubproblemSpec::new(2);
    s.objective.linear = vec![(0, 1.0), (1, 2.0)];
    for j in 0..2 {
        s.add_inequality("lo", AffineExpr::with_terms(vec![(j, 1.0)], 0.0));
        s.add_inequality("hi", AffineExpr::with_terms(vec![(j, -1.0)], 1.0));
    }
    s.equalities.push(AffineExpr::with_terms(vec![(0, 1.0), (1, -1.0)], 0.0));
    let sol = solve(&s, &[0.5, 0.5], &SolverOptions::default()).unwrap();
    assert!((sol.values[0] - sol.values[1]).abs() < 1e-12);
    assert!((sol.objective - 3.0).abs() < 1e-7);
    assert!(sol.kkt_residual < 1e-5);
}

#[test]
fn quadratic_cone_and_inverse_term() {
    // maximize g - 1/d subject to 4 - g^2 >= 0, 2 - d >= 0
    let mut s = SubproblemSpec::new(2);
    s.objective.linear.push((0, 1.0));
    s.objective.inverse_terms.push(InverseSumTerm { weight: 1.0, vars: vec![1] });
    s.quad_cones.push(QuadCone { linear: AffineExpr::new(4.0), square_var: 0 });
    s.add_inequality("d <= 2", AffineExpr::with_terms(vec![(1, -1.0)], 2.0));
    let sol = solve(&s, &[0.0, 1.0], &SolverOptions::default()).unwrap();
    assert!((sol.objective - 1.5).abs() < 1e-7, "{}", sol.objective);
    assert!(sol.kkt_residual < 1e-5);
}

#[test]
fn infeasible_start_is_reported() {
    let s = box_log_problem();
    let sol = solve(&s, &[4.0], &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::InfeasibleStart);
    assert_eq!(sol.values, vec![4.0]);
}

#[test]
fn malformed_spec_is_an_error() {
    let mut s = box_log_problem();
    s.add_inequality("bad", AffineExpr::with_terms(vec![(5, 1.0)], 0.0));
    assert!(matches!(solve(&s, &[1.0], &SolverOptions::default()), Err(SpecError::UnknownVariable(..))));
    let s = box_log_problem();
    assert_eq!(
        solve(&s, &[1.0, 2.0], &SolverOptions::default()).unwrap_err(),
        SpecError::StartLength(2, 1)
    );
}

#[test]
fn debug_json_is_dense() {
    let s = box_log_problem();
    let v = s.to_debug_json();
    assert_eq!(v["inequalities"][1]["coefficients"][0], -1.0);
    assert_eq!(v["inequalities"][1]["constant"], 3.0);
}
