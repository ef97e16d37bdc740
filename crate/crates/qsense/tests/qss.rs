use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use qsense::esu::{theta_dynamical, EsuParams};
use qsense::qdyn::AcSignal;
use qsense::qss::*;
use qsense::rng::seeded;
use qsense::signal::SensingProblem;

const LO: f64 = 5e4;

fn plan8() -> &'static QssPlan {
    static P: OnceLock<QssPlan> = OnceLock::new();
    P.get_or_init(|| qss_plan(1.0, (LO, LO + 1500.0), &QssConfig::desk()).unwrap())
}

fn theta(plan: &QssPlan, b: f64, center: f64, omega: f64) -> f64 {
    let p = EsuParams {
        strength: b,
        duration: plan.duration,
        bin_center: center,
        signal_frequency: omega,
        pulses: 2,
    };
    theta_dynamical(&p).abs()
}

#[test]
fn padding_reaches_power_of_two() {
    for (width, n) in [(1500.0, 8), (3000.0, 16), (6000.0, 32)] {
        let plan = qss_plan(1.0, (LO, LO + width), &QssConfig::desk()).unwrap();
        assert_eq!(plan.n(), n, "width {width}");
        assert!(plan.odd.omega_max() >= LO + width);
        assert!(plan.odd.omega_max() <= LO + 2.0 * width + 4.0 * plan.beta);
    }
}

#[test]
fn plan_below_crossover_rejected() {
    assert!(matches!(
        qss_plan(1.0, (LO, LO + 100.0), &QssConfig::desk()),
        Err(qsense::Error::Precondition(_))
    ));
}

#[test]
fn default_constants() {
    let c = QssConfig::default();
    assert!((c.gamma - (19.0f64 / 18.0).sqrt()).abs() < 1e-15);
    assert!(
        (c.c_t - PI / (2.0 * qsense::signal::bump_mean_sq() * c.gamma * c.gamma)).abs()
            < 1e-9 * c.c_t
    );
    assert_eq!(QssConfig::desk().c_t, 2.0 * c.c_t);
    let bad = QssConfig { gamma: 1.0, ..c };
    assert!(bad.validate().is_err());
}

#[test]
fn plan_polynomial_separates_gap() {
    let plan = plan8();
    let (a, b) = plan.cos_gap;
    assert!(b > a);
    assert!(plan.polynomial.is_even());
    assert!(plan.eps_qsp_measured() <= 5.0 * plan.polynomial.eps * 1.01);
    assert!(plan.phases.residual < 1e-8);
}

#[test]
fn no_signal_runs_never_detect() {
    let plan = plan8();
    let mut rng = seeded(9);
    for _ in 0..20 {
        let out = run_plan(plan, None, 0.0, &mut rng).unwrap();
        assert!(!out.detected && !out.any_yes());
    }
}

#[test]
fn promised_signals_detected() {
    let plan = plan8();
    let mut rng = seeded(10);
    let mut hits = 0;
    for j in 0..6 {
        let w = LO + 17.0 + 211.0 * j as f64;
        let s = AcSignal::new(1.0 + 0.01 * j as f64, w, 0.7 * j as f64).unwrap();
        hits += run_plan(plan, Some(&s), 0.0, &mut rng).unwrap().detected as usize;
    }
    assert!(hits >= 5, "{hits}/6");
}

#[test]
fn subband_solver_falls_back_to_scan() {
    let mut rng = seeded(11);
    let s = AcSignal::new(1.0, 50.0, 0.3).unwrap();
    let out = qss_subband_solve(1.0, (40.0, 60.0), Some(&s), &QssConfig::desk(), &mut rng).unwrap();
    assert!(out
        .transcript
        .iter()
        .all(|e| e.label == "wait" || e.label == "cpmg"));
}

#[test]
fn decomposition_covers_promise() {
    let problem = SensingProblem::new(1.0, 10.0, 300.0, 2).unwrap();
    let d = decompose_subproblems(&problem, default_gamma()).unwrap();
    for &b in &[1.0, 1.03, 5.0, 40.0, 200.0, 1e4] {
        for &w in &[10.0, 19.9, 20.0, 150.0, 300.0] {
            assert!(d.covers(b, w), "B={b} w={w}");
        }
    }
    let (sum, closed) = d.tau_budget(&problem);
    assert!(sum <= closed);
}

#[test]
fn noisy_solver_without_signal_is_quiet() {
    let problem = SensingProblem::new(1.0, 5e4, 5e4 + 600.0, 1).unwrap();
    let mut rng = seeded(12);
    let out = qss_noisy_solve(
        &problem,
        None,
        1e-3,
        &QssConfig::desk(),
        &NoiseSchedule::default(),
        &mut rng,
    )
    .unwrap();
    assert!(!out.outcome.detected && out.positive_chunks.is_empty());
    assert_eq!(out.repeats % 2, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layout_geometry(lo in 1.0..1e4f64, beta in 0.1..10.0f64, quarters in 4.0..200.0f64, odd in any::<bool>()) {
        let parity = if odd { Parity::Odd } else { Parity::Even };
        let l = make_bins(lo, lo + quarters * beta, beta, parity).unwrap();
        prop_assert!(l.n.is_power_of_two());
        for k in 0..l.n {
            let c = l.center(k);
            prop_assert_eq!(l.bin_of(c), None);
            for (a, b) in l.intervals(k) {
                for w in [a + 1e-9 * beta, 0.5 * (a + b), b - 1e-9 * beta] {
                    prop_assert_eq!(l.bin_of(w), Some(k));
                    let d = (c - w).abs();
                    prop_assert!(d >= 0.5 * beta * (1.0 - 1e-6) && d <= 1.5 * beta * (1.0 + 1e-6));
                    for j in [k.wrapping_sub(1), k + 1] {
                        if j < l.n {
                            prop_assert!((l.center(j) - w).abs() >= 2.5 * beta * (1.0 - 1e-6));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn marked_angle_dominates(k in 0usize..8, u in 0.01..0.99f64, second in any::<bool>(), g in 0.0..1.0f64) {
        let plan = plan8();
        let layout = &plan.odd;
        let (a, b) = layout.intervals(k)[second as usize];
        let w = a + u * (b - a);
        let strength = 1.0 + g * (plan.config.gamma - 1.0);
        let marked = theta(plan, strength, layout.center(k), w);
        prop_assert!(marked <= PI / 2.0);
        for j in 0..layout.n {
            if j != k {
                prop_assert!(theta(plan, strength, layout.center(j), w) < marked);
            }
        }
    }
}
