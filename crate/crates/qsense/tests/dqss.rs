use proptest::prelude::*;
use qsense::dqss::*;
use qsense::khz;
use qsense::qdyn::{expm_hermitian, CMat};
use qsense::rng::seeded;
use qsense::C64;

/// Dense state vector of register ⊗ sensor, sensor index fastest.
fn dense_trajectory(
    reg: &NvRegister,
    b: f64,
    k_star: usize,
    b_r0: f64,
    rounds: usize,
) -> Vec<Vec<f64>> {
    let n = reg.dim();
    let d = 2 * n;
    let segment = |seg: Segment| {
        let mut h = CMat::zeros(d, d);
        for k in 0..n {
            let hk = reg.drive_hamiltonian(k, seg.drive, seg.rabi);
            for r in 0..2 {
                for c in 0..2 {
                    h[(2 * k + r, 2 * k + c)] = hk[(r, c)];
                }
            }
        }
        expm_hermitian(&h, seg.duration).unwrap()
    };
    let u_oracle = segment(oracle_segment(reg, b, k_star));
    let u_r0 = segment(r0_segment(reg, b_r0));
    let mut walsh = CMat::zeros(d, d);
    for k in 0..n {
        for j in 0..n {
            let s = if (k & j).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            for q in 0..2 {
                walsh[(2 * k + q, 2 * j + q)] = C64::new(s / (n as f64).sqrt(), 0.0);
            }
        }
    }
    let round = &walsh * &u_r0 * &walsh * &u_oracle;
    let mut psi = nalgebra::DVector::<C64>::zeros(d);
    for k in 0..n {
        psi[2 * k] = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    }
    let pops = |v: &nalgebra::DVector<C64>| {
        (0..n)
            .map(|k| v[2 * k].norm_sqr() + v[2 * k + 1].norm_sqr())
            .collect()
    };
    let mut out = vec![pops(&psi)];
    for _ in 0..rounds {
        psi = &round * psi;
        out.push(pops(&psi));
    }
    out
}

#[test]
fn blocks_match_dense_state_vector_without_dephasing() {
    for n_q in 1..=4 {
        let reg = NvRegister::synthetic(n_q, 1.0).unwrap().with_gamma(0.0);
        let b = khz(0.3);
        let b_r0 = ansatz_b_r0(n_q, b);
        let k_star = (3 * n_q) % reg.dim();
        let rounds = max_grover_iterations(reg.dim()).max(2);
        let oracle = SegmentPropagators::new(&reg, &oracle_segment(&reg, b, k_star));
        let r0 = SegmentPropagators::new(&reg, &r0_segment(&reg, b_r0));
        let blocks = grover_trajectory(&oracle, &r0, rounds);
        let dense = dense_trajectory(&reg, b, k_star, b_r0, rounds);
        for (x, y) in blocks.iter().flatten().zip(dense.iter().flatten()) {
            assert!((x - y).abs() < 1e-9, "n_Q={n_q}: {x} vs {y}");
        }
    }
}

#[test]
fn state_stays_physical_under_dephasing() {
    let reg = NvRegister::synthetic(5, 0.05).unwrap();
    let b = khz(0.05);
    let oracle = SegmentPropagators::new(&reg, &oracle_segment(&reg, b, 7));
    let r0 = SegmentPropagators::new(&reg, &r0_segment(&reg, ansatz_b_r0(5, b)));
    let mut state = DensityBlockSet::initial(reg.dim());
    for _ in 0..max_grover_iterations(reg.dim()) {
        state.apply(&oracle);
        state.hadamard_all();
        state.apply(&r0);
        state.hadamard_all();
        assert!((state.trace() - 1.0).abs() < 1e-8);
        assert!(state.hermiticity_error() < 1e-8);
        assert!(state.register_populations().iter().all(|&p| p >= -1e-12));
    }
}

#[test]
fn register_frequencies_and_config_roundtrip() {
    let reg = NvRegister::new(vec![khz(1.0), khz(0.25)], khz(10.0), 0.0).unwrap();
    assert!((reg.frequency(0) - khz(10.625)).abs() < 1e-12);
    assert!((reg.frequency(3) - khz(9.375)).abs() < 1e-12);
    let back = NvRegister::from_config(&reg.to_config()).unwrap();
    assert!((back.frequency(2) - reg.frequency(2)).abs() < 1e-12);
    assert_eq!(max_grover_iterations(16), 3);
    assert_eq!(max_grover_iterations(2), 1);
}

#[test]
fn on_resonance_pi_pulse_flips_sensor() {
    let reg = NvRegister::synthetic(3, 1.0).unwrap().with_gamma(0.0);
    for k in 0..reg.dim() {
        assert!((detection_prob(&reg, khz(0.2), k, k).unwrap() - 1.0).abs() < 1e-12);
    }
    assert!(detection_prob(&reg, khz(0.2), 0, 8).is_err());
}

#[test]
fn grover_rounds_capped() {
    let reg = NvRegister::synthetic(4, 1.0).unwrap();
    assert!(matches!(
        grover_distribution(&reg, khz(0.1), 0, 4, khz(2.0)),
        Err(qsense::Error::Precondition(_))
    ));
    assert!(grover_distribution(&reg, khz(0.1), 0, 3, khz(2.0)).is_ok());
}

#[test]
fn improvement_grows_with_coherence() {
    let mut prev = 0.0;
    for t2 in [1.0, 10.0, 100.0, 1000.0] {
        let reg = NvRegister::synthetic(4, t2).unwrap();
        let b = khz(0.1);
        let rep = improvement(
            &reg,
            b,
            2,
            ansatz_b_r0(4, b),
            KStarSample::All,
            &mut seeded(0),
        )
        .unwrap();
        assert!(
            rep.i_mean >= prev * (1.0 - 1e-9),
            "T2={t2}: {} < {prev}",
            rep.i_mean
        );
        prev = rep.i_mean;
    }
}

#[test]
fn zero_rounds_is_conventional_within_overhead() {
    let reg = NvRegister::synthetic(3, 10.0).unwrap();
    let b = khz(0.2);
    let rep = improvement(&reg, b, 0, khz(1.0), KStarSample::All, &mut seeded(0)).unwrap();
    for g in &rep.g {
        assert!(g.iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }
}

#[test]
fn optimizer_respects_grid() {
    let reg = NvRegister::synthetic(3, 10.0).unwrap();
    let b = khz(0.1);
    let grid = OptimizerGrid::around_ansatz(&reg, b);
    let res = optimize(&reg, b, &grid, KStarSample::Random(4), &mut seeded(1)).unwrap();
    assert!(res.n_g <= grid.n_g_max);
    assert!(grid.b_r0.contains(&res.b_r0));
    assert_eq!(res.k_stars.len(), 4);
    let best = res.table.iter().flatten().fold(f64::MIN, |m, &v| m.max(v));
    assert_eq!(best, res.i_mean);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distributions_are_probabilities(n_q in 1usize..5, t2 in 0.5..1000.0f64, b_khz in 0.01..2.0f64, ks in 0usize..16, rounds in 0usize..4) {
        let reg = NvRegister::synthetic(n_q, t2).unwrap();
        let b = khz(b_khz);
        let k_star = ks % reg.dim();
        let n_g = rounds.min(max_grover_iterations(reg.dim()));
        let g = grover_distribution(&reg, b, k_star, n_g, ansatz_b_r0(n_q, b)).unwrap();
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(g.iter().all(|&x| x >= -1e-12));
        for p in detection_row(&reg, b, k_star) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
        }
    }
}
