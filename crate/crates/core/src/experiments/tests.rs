use super::config::{db_to_linear, linear_to_db, parse_weights};
use super::output::{write_points, RunMeta};
use super::sweep::{pareto_violations, sweep, SummaryRow};
use super::*;
use crate::metrics::{Band, DuplexMode};
use proptest::prelude::*;

fn tiny() -> SystemConfig {
    let mut c = SystemConfig::desk();
    c.antennas = 2;
    c.wideband.taps = 2;
    c.wideband.si_taps = 2;
    c.sweep.trials = 2;
    c.sweep.weights = vec![0.2, 0.8];
    c.sca.restarts = 2;
    c.validate = config::ValidateConfig {
        fim_pairs: 6,
        cross_designs: 4,
        surrogate_points: 10,
        subproblems: 2,
        samples: 500,
        sinr_designs: 2,
        symbols: 20_000,
    };
    c
}

fn meta() -> RunMeta {
    RunMeta { git_describe: "test".into(), config_hash: "hash".into(), master_seed: 1 }
}

#[test]
fn desk_file_matches_builtin_defaults() {
    let text = include_str!("../../../../configs/desk.json");
    assert_eq!(SystemConfig::from_json(text).unwrap(), SystemConfig::desk());
}

#[test]
fn unknown_keys_are_rejected() {
    let mut v: serde_json::Value = serde_json::to_value(SystemConfig::desk()).unwrap();
    v["antenas"] = 4.into();
    assert!(matches!(SystemConfig::from_json(&v.to_string()), Err(ExperimentError::Config(_))));
    let mut v: serde_json::Value = serde_json::to_value(SystemConfig::desk()).unwrap();
    v["wideband"]["decay"] = 0.5.into();
    assert!(SystemConfig::from_json(&v.to_string()).is_err());
}

#[test]
fn decibels_are_converted_once() {
    let sc = Scenario::new(SystemConfig::desk()).unwrap();
    assert!((sc.rho_c - 10f64.powf(1.5)).abs() < 1e-12);
    assert!((sc.rho_s - 10f64.powf(0.7)).abs() < 1e-12);
    assert!((sc.eta - 1e5).abs() < 1e-6);
    assert!((sc.rho_si - 1e-8).abs() < 1e-22);
    assert_eq!(sc.beta, 1.0);
    assert_eq!(sc.budget(Band::Narrow).n_half, 50);
    assert_eq!(sc.budget(Band::Wide).n_half, 500);
    // the stored config keeps its dB values
    assert_eq!(sc.config.rho_c_db, 15.0);
}

proptest! {
    #[test]
    fn decibel_round_trip(db in -100.0f64..100.0) {
        prop_assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-10);
    }

    #[test]
    fn timing_identities(w in 1e3f64..1e9, delta in 1e-5f64..1e-1, d in 1.0f64..1e4) {
        if let Ok(Timing::Wide { cpi, tau, pri, pris }) = derive_timing(Band::Wide, w, delta, d) {
            let samples = (delta * w).round() as u64;
            prop_assert_eq!(pri, 2 * tau);
            prop_assert_eq!(cpi, pris * pri);
            prop_assert!(pris >= 1 && cpi <= samples && samples < cpi + pri);
            prop_assert_eq!(tau, (d / crate::channel::SPEED_OF_LIGHT * w).round() as u64);
        }
        if let Ok(Timing::Narrow { cpi }) = derive_timing(Band::Narrow, w, delta, d) {
            prop_assert_eq!(cpi, (delta * w).round() as u64);
            prop_assert_eq!(cpi % 2, 0);
        }
    }
}

#[test]
fn timing_examples() {
    assert_eq!(derive_timing(Band::Narrow, 100e3, 1e-3, 300.0).unwrap(), Timing::Narrow { cpi: 100 });
    assert_eq!(
        derive_timing(Band::Wide, 100e6, 1e-3, 300.0).unwrap(),
        Timing::Wide { cpi: 100_000, tau: 100, pri: 200, pris: 500 }
    );
    let Timing::Wide { tau, pri, .. } = derive_timing(Band::Wide, 100e6, 1e-3, 150.0).unwrap() else { panic!() };
    assert_eq!((tau, pri), (50, 100));
    // desk-scale wideband
    assert_eq!(
        derive_timing(Band::Wide, 5e6, 2e-4, 300.0).unwrap(),
        Timing::Wide { cpi: 1000, tau: 5, pri: 10, pris: 100 }
    );
}

#[test]
fn timing_errors() {
    // 150 samples per CPI, PRI of 200
    assert!(matches!(derive_timing(Band::Wide, 100e6, 1.5e-6, 300.0), Err(ExperimentError::Timing(_))));
    assert!(derive_timing(Band::Wide, 1e3, 1e-3, 300.0).is_err());
    assert!(derive_timing(Band::Narrow, 101e3, 1e-3, 300.0).is_err());
    assert!(derive_timing(Band::Narrow, 0.0, 1e-3, 300.0).is_err());
    assert!(derive_timing(Band::Narrow, 1e5, -1e-3, 300.0).is_err());
    assert!(derive_timing(Band::Wide, 1e8, 1e-3, 0.0).is_err());
}

#[test]
fn weight_grids() {
    let w = parse_weights("0:1:0.1").unwrap();
    assert_eq!(w, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    assert_eq!(parse_weights("0.1, 0.9").unwrap(), vec![0.1, 0.9]);
    assert_eq!(parse_weights("0.5:0.5:0.1").unwrap(), vec![0.5]);
    for bad in ["", "0:1", "0:1:0", "1:0:0.1", "0:2:0.5", "a,b", "-0.1"] {
        assert!(parse_weights(bad).is_err(), "{bad}");
    }
}

#[test]
fn scenario_rejects_bad_values() {
    let mut c = SystemConfig::desk();
    c.sweep.weights.push(1.5);
    assert!(Scenario::new(c).is_err());
    let mut c = SystemConfig::desk();
    c.wideband.taps = 5;
    assert!(Scenario::new(c).is_err());
    let mut c = SystemConfig::desk();
    c.sweep.trials = 0;
    assert!(Scenario::new(c).is_err());
}

#[test]
fn config_hash_tracks_content() {
    let a = Scenario::new(SystemConfig::desk()).unwrap();
    let b = Scenario::new(SystemConfig::desk()).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.config_hash.len(), 64);
    let mut c = SystemConfig::desk();
    c.sweep.master_seed += 1;
    assert_ne!(Scenario::new(c).unwrap().config_hash, a.config_hash);
}

#[test]
fn sweeps_are_deterministic_and_sorted() {
    let sc = Scenario::new(tiny()).unwrap();
    let rows = tradeoff_sweep(&sc);
    assert_eq!(rows.len(), 2 * 2 * 2);
    let csv = |rows: &[TradeoffPoint]| {
        let mut buf = Vec::new();
        write_points(&mut buf, rows, 2, &meta()).unwrap();
        buf
    };
    assert_eq!(csv(&rows), csv(&tradeoff_sweep(&sc)));
    // scheduling order does not matter
    let mut specs: Vec<PointSpec> = rows.iter().map(|r| r.spec).collect();
    specs.reverse();
    assert_eq!(csv(&sweep(&sc, &specs)), csv(&rows));
    let keys: Vec<(DuplexMode, u64)> = rows.iter().map(|r| (r.spec.mode, r.spec.trial)).collect();
    assert_eq!(keys[0], (DuplexMode::Full, 0));
    assert_eq!(rows[0].spec.weight, 0.2);
    assert_eq!(rows[2].spec.weight, 0.8);
    assert_eq!(keys[4], (DuplexMode::Half, 0));

    let text = String::from_utf8(csv(&rows)).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("band,mode,beta_db,weight,seed,status,sum_rate"));
    assert!(header.ends_with("git_describe,config_hash,master_seed"));
    assert_eq!(text.lines().count(), rows.len() + 1);
}

#[test]
fn rows_respect_power_invariants() {
    let sc = Scenario::new(tiny()).unwrap();
    for r in power_report(&sc) {
        assert!(r.ok(), "{}", r.status);
        assert!(r.sum_rate.is_finite() && r.sum_rate >= 0.0);
        assert!(r.single_sum_rate <= r.sum_rate + 1e-12 || r.sum_crb < r.single_sum_crb);
        for k in 0..2 {
            let total: f64 = (0..2).map(|i| r.comm_power[k][i] + r.sensing_power[k][i]).sum();
            assert!(total <= 2.0 + 1e-8);
            for i in 0..2 {
                assert!(r.comm_power[k][i] >= 0.0 && r.sensing_power[k][i] >= 0.0);
            }
        }
    }
}

#[test]
fn power_split_matches_design_trace() {
    let sc = Scenario::new(tiny()).unwrap();
    let spec = PointSpec { band: Band::Wide, mode: DuplexMode::Full, beta_db: 0.0, weight: 0.3, trial: 0 };
    let res = sweep::solve_point(&sc, spec, sc.options.clone()).unwrap();
    let row = sweep::run_point(&sc, spec);
    for k in 0..2 {
        let split: f64 = (0..2).map(|i| row.comm_power[k][i] + row.sensing_power[k][i]).sum();
        assert!((split - res.design.total_power(k)).abs() < 1e-8);
    }
}

#[test]
fn pure_rate_rows_have_infinite_or_finite_crb() {
    let mut c = tiny();
    c.sweep.weights = vec![1.0];
    c.sweep.trials = 1;
    let sc = Scenario::new(c).unwrap();
    for r in tradeoff_sweep(&sc) {
        assert!(r.ok());
        assert!(r.sum_rate.is_finite() && r.sum_rate > 0.0);
        assert!(r.sum_crb > 0.0);
    }
}

#[test]
fn failing_rows_are_recorded() {
    let mut c = tiny();
    c.sweep.bands = vec![Band::Wide];
    // beyond what two exponentially decaying taps allow
    c.beta_db = 30.0;
    c.sweep.weights = vec![0.5];
    let sc = Scenario::new(c).unwrap();
    let rows = tradeoff_sweep(&sc);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| !r.ok() && r.status.contains("Rician") && r.sum_rate.is_nan()));
    let summary = summarize(&rows, 1);
    assert!(summary.iter().all(|s| s.failed == 2 && s.trials == 0));
}

#[test]
fn rician_grid_round_trips() {
    let mut c = tiny();
    c.sweep.betas_db = vec![-5.0, 10.0];
    c.sweep.rician_weights = vec![0.9];
    c.sweep.modes = vec![DuplexMode::Half];
    c.sweep.trials = 1;
    let sc = Scenario::new(c).unwrap();
    let rows = rician_sweep(&sc);
    let betas: Vec<f64> = rows.iter().map(|r| r.spec.beta_db).collect();
    assert_eq!(betas, vec![-5.0, 10.0]);
    for b in betas {
        assert!((linear_to_db(db_to_linear(b)) - b).abs() < 1e-12);
    }
}

#[test]
fn summaries_average_seeds() {
    let sc = Scenario::new(tiny()).unwrap();
    let rows = tradeoff_sweep(&sc);
    let summary = summarize(&rows, 3);
    assert_eq!(summary.len(), 4);
    let s = &summary[0];
    assert_eq!((s.trials, s.failed), (2, 0));
    assert!((s.mean_rate - (rows[0].sum_rate + rows[1].sum_rate) / 2.0).abs() < 1e-12);
    assert!(s.rate_ci.0 <= s.mean_rate + 1e-12 && s.mean_rate <= s.rate_ci.1 + 1e-12);
    assert_eq!(summarize(&rows, 3), summary);
}

fn summary_row(weight: f64, rate: f64, crb: f64) -> SummaryRow {
    SummaryRow {
        band: Band::Narrow,
        mode: DuplexMode::Full,
        beta_db: 0.0,
        weight,
        trials: 20,
        failed: 0,
        mean_rate: rate,
        se_rate: 0.1,
        rate_ci: (rate - 0.2, rate + 0.2),
        mean_crb: crb,
        se_crb: 1e-6,
        crb_ci: (crb, crb),
        mean_root_crb_deg: 0.0,
        mean_comm_power: 0.0,
        mean_sensing_power: 0.0,
        mean_sensing_fraction: 0.0,
        mean_iterations: 0.0,
        max_kkt_residual: 0.0,
    }
}

#[test]
fn pareto_check_flags_real_drops_only() {
    let ok = [summary_row(0.1, 5.0, 1e-5), summary_row(0.5, 4.95, 1.5e-5), summary_row(0.9, 6.0, f64::INFINITY)];
    assert!(pareto_violations(&ok).is_empty());
    let bad = [summary_row(0.1, 5.0, 2e-5), summary_row(0.5, 4.0, 1e-5)];
    assert_eq!(pareto_violations(&bad).len(), 2);
}

#[test]
fn convergence_trace_is_monotone_and_certified() {
    let sc = Scenario::new(tiny()).unwrap();
    let rows = convergence_trace(&sc, Band::Narrow, DuplexMode::Full, 0.5, 0).unwrap();
    assert!(rows.len() >= 2 && rows.len() <= 51);
    for p in rows.windows(2) {
        assert!(p[1].objective >= p[0].objective - 1e-9);
        assert_eq!(p[1].iteration, p[0].iteration + 1);
    }
    assert!(rows.last().unwrap().kkt_residual < 1e-4);
}

#[test]
fn validation_passes_and_canaries_fail() {
    let sc = Scenario::new(tiny()).unwrap();
    let clean = validate(&sc, None);
    assert!(clean.passed(), "{:#?}", clean.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    assert_eq!(clean.checks.len(), 8);

    let flipped = validate(&sc, Some(Fault::CrbSignFlip));
    assert!(!flipped.get("fim_narrowband").unwrap().passed);
    assert!(!flipped.get("fim_wideband").unwrap().passed);
    assert!(flipped.get("zf_precondition").unwrap().passed);

    let leaked = validate(&sc, Some(Fault::ZfLeak));
    let zf = leaked.get("zf_precondition").unwrap();
    assert!(!zf.passed && zf.measured > 1e-4);
    assert!(leaked.get("fim_narrowband").unwrap().passed);
}
