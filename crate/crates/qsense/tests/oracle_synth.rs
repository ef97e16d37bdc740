use std::f64::consts::PI;

use qsense::oracle_synth::*;
use qsense::qdyn::CMat;
use qsense::C64;

const OMEGA0: f64 = 0.8;

/// Permutation matrix of |x⟩|y⟩ → |x⟩|y ⊕ f(x)⟩ written out from the table.
fn truth_table_oracle(n: usize, m: usize, table: &[u32]) -> CMat {
    let dim = 1 << (n + m);
    CMat::from_fn(dim, dim, |r, c| {
        let x = c / (1 << m);
        let y = c % (1 << m);
        let target = x * (1 << m) + (y ^ table[x] as usize);
        if r == target {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn max_entry(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn zero_function_is_identity_on_outputs() {
    let spec = BooleanFunctionSpec::new(2, 1, vec![0; 4]).unwrap();
    let o = synth_oracle(&spec, OMEGA0, OracleOpts::default()).unwrap();
    let eff = o.effective_oracle();
    assert!(max_entry(&eff, &CMat::identity(8, 8)) < 1e-6);
}

#[test]
fn off_resonant_tones_cancel() {
    let t = 2.0 * PI / OMEGA0;
    let b = PI * PI / (4.0 * t);
    for k in 0..8 {
        for x in 0..8 {
            if x != k {
                let phase = b * tone_phase(OMEGA0, k, x).unwrap();
                assert!(phase.abs() < 1e-8, "k={k} x={x}: {phase}");
            }
        }
    }
}

#[test]
fn and_matches_truth_table() {
    let spec = BooleanFunctionSpec::new(2, 1, vec![0, 0, 0, 1]).unwrap();
    let o = synth_oracle(&spec, OMEGA0, OracleOpts::default()).unwrap();
    assert!(
        max_entry(
            &o.effective_oracle(),
            &truth_table_oracle(2, 1, &spec.table)
        ) < 1e-4
    );
}

#[test]
fn every_one_and_two_bit_function() {
    for n in 1..=2 {
        for code in 0u32..1 << (1 << n) {
            let table: Vec<u32> = (0..1 << n).map(|x| (code >> x) & 1).collect();
            let spec = BooleanFunctionSpec::new(n, 1, table.clone()).unwrap();
            let o = synth_oracle(&spec, OMEGA0, OracleOpts::default()).unwrap();
            let dev = max_entry(&o.effective_oracle(), &truth_table_oracle(n, 1, &table));
            assert!(dev < 1e-4, "n={n} f={table:?}: deviation {dev}");
            for (input, fid) in o.sensor_fidelities().into_iter().enumerate() {
                assert!(
                    fid > 1.0 - 1e-6,
                    "n={n} f={table:?} input {input}: fidelity {fid}"
                );
            }
        }
    }
}

#[test]
fn three_bit_two_output_function() {
    let table = vec![3, 0, 1, 2, 2, 1, 0, 3];
    let spec = BooleanFunctionSpec::new(3, 2, table.clone()).unwrap();
    let o = synth_oracle(&spec, OMEGA0, OracleOpts::default()).unwrap();
    assert!(max_entry(&o.effective_oracle(), &truth_table_oracle(3, 2, &table)) < 1e-4);
    assert!(o.sensor_fidelities().iter().all(|&f| f > 1.0 - 1e-6));
}

/// Reorders the qubits of `u` (acting on `n` qubits) so that qubit j of `u`
/// lands at position `pos[j]`.
fn relabel(u: &CMat, pos: &[usize]) -> CMat {
    let n = pos.len();
    let map = |idx: usize| {
        let mut out = 0;
        for (j, &p) in pos.iter().enumerate() {
            let bit = (idx >> (n - 1 - j)) & 1;
            out |= bit << (n - 1 - p);
        }
        out
    };
    let dim = 1 << n;
    let mut v = CMat::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            v[(map(r), map(c))] = u[(r, c)];
        }
    }
    v
}

#[test]
fn two_outputs_compose_from_single_outputs() {
    let spec = BooleanFunctionSpec::new(2, 2, vec![1, 2, 3, 0]).unwrap();
    let joint = synth_oracle(&spec, OMEGA0, OracleOpts::default()).unwrap();
    // full register X X Y Y S S, output bit i in the lower qubit of Y and S for i = 0
    let mut product = CMat::identity(64, 64);
    for i in 0..2 {
        let single = synth_oracle(&spec.output(i).unwrap(), OMEGA0, OracleOpts::default()).unwrap();
        let (y, s) = (3 - i, 5 - i);
        let spare: Vec<usize> = (0..6).filter(|q| ![0, 1, y, s].contains(q)).collect();
        let padded = qsense::qdyn::kron(single.unitary.matrix(), &CMat::identity(4, 4));
        let placed = relabel(&padded, &[0, 1, y, s, spare[0], spare[1]]);
        product = placed * product;
    }
    assert!(max_entry(joint.unitary.matrix(), &product) < 1e-12);
}

#[test]
fn coarse_sampling_fails_certificate() {
    let spec = BooleanFunctionSpec::new(3, 1, vec![1; 8]).unwrap();
    let r = synth_oracle(
        &spec,
        OMEGA0,
        OracleOpts {
            trotter_steps: 2,
            tolerance: 1e-6,
        },
    );
    assert!(matches!(r, Err(qsense::Error::NoConvergence { .. })));
}

#[test]
fn oversized_specs_rejected() {
    assert!(BooleanFunctionSpec::new(4, 1, vec![0; 16]).is_err());
    assert!(BooleanFunctionSpec::new(2, 3, vec![0; 4]).is_err());
    assert!(BooleanFunctionSpec::new(2, 1, vec![0, 2, 0, 0]).is_err());
}
