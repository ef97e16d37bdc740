use std::f64::consts::PI;

use proptest::prelude::*;
use qsense::limits::*;
use qsense::qdyn::{hadamard, kron, pauli_x, pauli_y, pauli_z, to_dense, CMat, UnitaryMatrix};
use qsense::rng::seeded;
use qsense::C64;

const BAND: (f64, f64) = (20.0, 120.0);

fn width() -> f64 {
    BAND.1 - BAND.0
}

#[test]
fn zero_duration_is_indistinguishable() {
    let mut rng = seeded(1);
    let put = ProtocolUnderTest::random(2, 1, 0.0, 5.0, &mut rng).unwrap();
    let est = avg_distinguishability(&put, 1.0, BAND, 200, &mut rng).unwrap();
    assert_eq!(est.mean, 0.0);
}

#[test]
fn too_few_samples_rejected() {
    let mut rng = seeded(1);
    let put = ProtocolUnderTest::random(1, 1, 1.0, 5.0, &mut rng).unwrap();
    assert!(avg_distinguishability(&put, 1.0, BAND, 50, &mut rng).is_err());
}

#[test]
fn oversized_register_rejected() {
    let mut rng = seeded(1);
    assert!(matches!(
        ProtocolUnderTest::random(4, 1, 1.0, 5.0, &mut rng),
        Err(qsense::Error::TooLarge(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn short_time_bound_holds(seed in 0u64..1000, n_s in 1usize..=3, n_q in 0usize..=3, rate in 1.0f64..20.0) {
        prop_assume!(n_s + n_q >= 2);
        let b = 1.0;
        let mut rng = seeded(seed);
        let put = ProtocolUnderTest::random(n_s, n_q, 1.0 / (n_s as f64 * b), rate, &mut rng).unwrap();
        let est = avg_distinguishability(&put, b, BAND, 400, &mut rng).unwrap();
        prop_assert!(est.within(short_time_bound(n_s, b, width()), 3.0), "{est:?}");
    }

    #[test]
    fn long_time_bound_holds(seed in 0u64..1000, n_s in 1usize..=3, n_q in 0usize..=2, steps in 2.0f64..6.0) {
        prop_assume!(n_s + n_q >= 2);
        let b = 1.0;
        let tau = steps / (n_s as f64 * b);
        let mut rng = seeded(seed);
        let put = ProtocolUnderTest::random(n_s, n_q, tau, 4.0, &mut rng).unwrap();
        let est = avg_distinguishability(&put, b, BAND, 400, &mut rng).unwrap();
        prop_assert!(est.within(long_time_bound(n_s, b, width(), tau), 3.0), "{est:?}");
    }

    #[test]
    fn trailing_gates_do_not_change_distinguishability(seed in 0u64..1000, extra in 1usize..4) {
        let mut rng = seeded(seed);
        let put = ProtocolUnderTest::random(2, 1, 0.7, 6.0, &mut rng).unwrap();
        let trailing: Vec<UnitaryMatrix> = (0..extra).map(|_| haar_unitary(8, &mut rng)).collect();
        let longer = put.with_trailing(trailing).unwrap();
        let a = avg_distinguishability(&put, 1.0, BAND, 150, &mut seeded(seed + 1)).unwrap();
        let b = avg_distinguishability(&longer, 1.0, BAND, 150, &mut seeded(seed + 1)).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12 * a.mean.max(1e-300) + 1e-15);
    }

    #[test]
    fn average_qfi_bound_holds(seed in 0u64..1000, n_s in 1usize..=3, n_q in 0usize..=2, tau in 0.2f64..3.0) {
        prop_assume!(n_s + n_q >= 2);
        let mut rng = seeded(seed);
        let put = ProtocolUnderTest::random(n_s, n_q, tau, 5.0, &mut rng).unwrap();
        let est = avg_qfi(&put, BAND, 200, &mut rng).unwrap();
        prop_assert!(est.within(qfi_bound(n_s, width(), tau), 3.0), "{est:?}");
    }

    #[test]
    fn csp_bound_holds(seed in 0u64..1000, pieces in 1usize..20, duration in 0.1f64..5.0) {
        let mut rng = seeded(seed);
        let chis = vec![
            PiecewiseModulation::random(duration, pieces, &mut rng).unwrap(),
            PiecewiseModulation::random(duration, pieces, &mut rng).unwrap(),
        ];
        let b = 1.0;
        let est = csp_distinguishability(&chis, b, BAND, 500, &mut rng).unwrap();
        prop_assert!(est.within(csp_bound(2, b, width(), duration), 3.0), "{est:?}");
    }
}

#[test]
fn qfi_vanishes_without_sensing_gates() {
    let put = ProtocolUnderTest::new(2, 1, 3.0, vec![]).unwrap();
    let f = qfi_estimate(&put, 5.0, 0.3, default_fd_step(&put)).unwrap();
    assert!(f.abs() < 1e-8, "{f}");
}

#[test]
fn ramsey_qfi_matches_phase_derivative() {
    let h = UnitaryMatrix::from_qubit(&hadamard()).unwrap();
    for &(t, w, phi) in &[(2.0, 1.3, 0.0), (5.0, 0.7, 1.1), (0.4, 9.0, 2.5)] {
        let put = ProtocolUnderTest::new(1, 0, t, vec![(0.0, h.clone())]).unwrap();
        let f = qfi_estimate(&put, w, phi, default_fd_step(&put)).unwrap();
        let phase_per_b = ((w * t + phi).sin() - phi.sin()) / w;
        let expect = (2.0 * phase_per_b).powi(2);
        assert!(
            (f - expect).abs() < 1e-6 * expect.max(1e-3),
            "{f} vs {expect}"
        );
    }
}

#[test]
fn csp_zero_modulation_is_zero() {
    let mut rng = seeded(5);
    let chis = vec![PiecewiseModulation::constant(0.0, 2.0).unwrap()];
    let est = csp_distinguishability(&chis, 1.0, BAND, 200, &mut rng).unwrap();
    assert_eq!(est.mean, 0.0);
}

#[test]
fn csp_single_sensor_matches_quadrature() {
    // θ = a(ω) cos ψ with a = 2B sin(ωT/2)/ω; the φ average of 4 sin²(θ/2) is 2(1 − J₀(a))
    let (b, t) = (2.0, 1.5);
    let band = (1.0, 30.0);
    let w = band.1 - band.0;
    let integrand = |om: f64| 2.0 * (1.0 - libm::j0(2.0 * b * (0.5 * om * t).sin() / om));
    let exact = qsense::quad::integrate(integrand, band.0, band.1, 1e-12, 1e-14) / w;
    let chis = vec![PiecewiseModulation::constant(1.0, t).unwrap()];
    let est = csp_distinguishability(&chis, b, band, 20_000, &mut seeded(11)).unwrap();
    assert!(
        (est.mean - exact).abs() < 4.0 * est.stderr,
        "{est:?} vs {exact}"
    );
}

fn two_qubit(a: &CMat, b: &CMat) -> CMat {
    kron(a, b)
}

fn random_hamiltonian(seed: u64) -> CMat {
    let u = haar_unitary(4, &mut seeded(seed));
    let d = CMat::from_fn(4, 4, |i, j| {
        if i == j {
            C64::new(i as f64 - 1.3, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    u.matrix() * d * u.matrix().adjoint()
}

fn rk4_lindblad<F: Fn(f64) -> CMat>(
    h: &F,
    jumps: &[CMat],
    t_end: f64,
    rho0: &CMat,
    steps: usize,
) -> CMat {
    let rhs = |t: f64, r: &CMat| {
        let hh = h(t);
        let mut d = (&hh * r - r * &hh) * C64::new(0.0, -1.0);
        for l in jumps {
            let ll = l.adjoint() * l;
            d += l * r * l.adjoint() - (&ll * r + r * &ll) * C64::new(0.5, 0.0);
        }
        d
    };
    let dt = t_end / steps as f64;
    let c = |x: f64| C64::new(x, 0.0);
    let mut r = rho0.clone();
    for s in 0..steps {
        let t = s as f64 * dt;
        let k1 = rhs(t, &r);
        let k2 = rhs(t + 0.5 * dt, &(&r + &k1 * c(0.5 * dt)));
        let k3 = rhs(t + 0.5 * dt, &(&r + &k2 * c(0.5 * dt)));
        let k4 = rhs(t + dt, &(&r + &k3 * c(dt)));
        r += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0);
    }
    r
}

fn plus_plus() -> CMat {
    CMat::from_element(4, 4, C64::new(0.25, 0.0))
}

#[test]
fn lindblad_trivial_cases() {
    let h0 = random_hamiltonian(2);
    let h = |_t: f64| h0.clone();
    let zero = lindblad_bound_check(h, &dephasing_jumps(2, 0.0), 1.0, &plus_plus()).unwrap();
    assert_eq!((zero.measured, zero.bound), (0.0, 0.0));
    let instant = lindblad_bound_check(h, &dephasing_jumps(2, 0.1), 0.0, &plus_plus()).unwrap();
    assert_eq!((instant.measured, instant.bound), (0.0, 0.0));
}

#[test]
fn lindblad_matches_rk4_and_respects_bound() {
    let h0 = random_hamiltonian(7);
    let x = to_dense(&pauli_x());
    let y = to_dense(&pauli_y());
    let z = to_dense(&pauli_z());
    let h1 = two_qubit(&x, &y) + two_qubit(&z, &CMat::identity(2, 2));
    let h = |t: f64| &h0 + &h1 * C64::new((2.0 * t).cos(), 0.0);
    let jumps = dephasing_jumps(2, 0.1);
    let rho0 = plus_plus();
    let check = lindblad_bound_check(h, &jumps, 1.0, &rho0).unwrap();
    let closed = rk4_lindblad(&h, &[], 1.0, &rho0, 4000);
    let open = rk4_lindblad(&h, &jumps, 1.0, &rho0, 4000);
    let oracle = qsense::qdyn::trace_distance(&closed, &open).unwrap();
    assert!(
        (check.measured - oracle).abs() < 1e-8,
        "{} vs {oracle}",
        check.measured
    );
    assert!((check.bound - 0.1).abs() < 1e-12);
    assert!(check.holds());
    println!(
        "lindblad measured/bound = {:.4}",
        check.measured / check.bound
    );
}

#[test]
fn short_time_bound_value() {
    assert!((short_time_bound(2, 1.0, 100.0) - 8.0 * PI / 100.0).abs() < 1e-15);
}
