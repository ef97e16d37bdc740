//! Boolean oracles from a multi-tone field.
//!
//! Input x of f: {0,1}ⁿ → {0,1}^m owns the tone ω_x = p_x ω₀, p_x the
//! (x+1)-th prime. Output bit i couples through sensor i:
//! H_f(t) = B Σ_x Σ_i f_i(x) cos(ω_x t) Z_{S,i}. Conditioned on |k⟩_X the
//! sensors run CPMG locked to ω_k over T = 2π/ω₀. Every tone completes whole
//! periods in T, so only x = k contributes, with phase ±(2BT/π) f_i(k) = ±(π/2) f_i(k)
//! at B = π²/(4T). The sequence is: sensing pass, W on each sensor, CNOT
//! sensor → output qubit, Wᵀ, then a second identical sensing pass that
//! returns the sensors to |+⟩.
//!
//! Register order, most significant first: X (n qubits), Y (m), S (m). Bit i
//! of y, and sensor i, sit in the i-th least significant qubit of Y and S.
//! π-pulses are ideal X gates, so the toggling-frame picture is exact and the
//! sensing passes are diagonal in the computational basis.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::qdyn::{kron, propagate_z_commuting, AcSignal, CMat, UnitaryMatrix};
use crate::signal::{filter_function, Modulation};
use crate::{finite, Error, Result, C64};

/// Tone multipliers for inputs 0..8.
pub const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

pub const MAX_INPUT_BITS: usize = 3;
pub const MAX_OUTPUT_BITS: usize = 2;

/// Truth table of f: {0,1}ⁿ → {0,1}^m; `table[x]` holds f(x) with bit i = f_i(x).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanFunctionSpec {
    pub n: usize,
    pub m: usize,
    pub table: Vec<u32>,
}

impl BooleanFunctionSpec {
    pub fn new(n: usize, m: usize, table: Vec<u32>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Invalid("need n >= 1 and m >= 1".into()));
        }
        if n > MAX_INPUT_BITS || m > MAX_OUTPUT_BITS {
            return Err(Error::TooLarge(n + 2 * m));
        }
        if table.len() != 1 << n {
            return Err(Error::Invalid(format!(
                "truth table has {} rows, need {}",
                table.len(),
                1 << n
            )));
        }
        if let Some(v) = table.iter().find(|&&v| v >> m != 0) {
            return Err(Error::Invalid(format!(
                "table value {v} does not fit in {m} bits"
            )));
        }
        Ok(BooleanFunctionSpec { n, m, table })
    }

    /// Parses `m·2ⁿ` characters of 0/1 (whitespace ignored): rows in ascending
    /// x, each row listing f_0(x) … f_{m−1}(x).
    pub fn from_bitstring(bits: &str, m: usize) -> Result<Self> {
        let bits: Vec<u32> = bits
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Invalid(format!(
                    "unexpected character {other:?} in truth table"
                ))),
            })
            .collect::<Result<_>>()?;
        if m == 0
            || !bits.len().is_multiple_of(m)
            || !(bits.len() / m).is_power_of_two()
            || bits.len() / m < 2
        {
            return Err(Error::Invalid(format!(
                "{} bits do not form a table with {m} outputs",
                bits.len()
            )));
        }
        let rows = bits.len() / m;
        let table = bits
            .chunks(m)
            .map(|row| row.iter().enumerate().map(|(i, b)| b << i).sum())
            .collect();
        BooleanFunctionSpec::new(rows.trailing_zeros() as usize, m, table)
    }

    pub fn bit(&self, x: usize, i: usize) -> u32 {
        (self.table[x] >> i) & 1
    }

    /// Restriction to output bit i as a single-output function.
    pub fn output(&self, i: usize) -> Result<Self> {
        BooleanFunctionSpec::new(
            self.n,
            1,
            (0..1 << self.n).map(|x| self.bit(x, i)).collect(),
        )
    }
}

/// Numerical controls for [`synth_oracle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOpts {
    /// Midpoint samples per interpulse interval in the sampled cross-check.
    pub trotter_steps: usize,
    /// Largest admitted gap between sampled and closed-form phases.
    pub tolerance: f64,
}

impl Default for OracleOpts {
    fn default() -> Self {
        OracleOpts {
            trotter_steps: 2048,
            tolerance: 1e-6,
        }
    }
}

/// Net unitary of the construction with its phase table and certificate.
#[derive(Clone, Debug)]
pub struct SynthesizedOracle {
    pub spec: BooleanFunctionSpec,
    pub omega0: f64,
    /// Sensing window 2π/ω₀.
    pub duration: f64,
    /// Field amplitude π²/(4T).
    pub strength: f64,
    /// `phases[k][i]`: sensor i's Z-rotation angle in one pass given |k⟩_X.
    pub phases: Vec<Vec<f64>>,
    pub unitary: UnitaryMatrix,
    pub trotter_steps: usize,
    /// Largest gap between sampled and closed-form phases.
    pub residual: f64,
}

pub fn tone(omega0: f64, x: usize) -> f64 {
    PRIMES[x] as f64 * omega0
}

/// CPMG locked to ω_k spanning 2π/ω₀.
pub fn conditional_cpmg(omega0: f64, k: usize) -> Result<Modulation> {
    Modulation::cpmg(tone(omega0, k), 2 * PRIMES[k])
}

/// Phase picked up from tone x under the CPMG conditioned on k, per unit
/// amplitude, from the closed-form filter: T·χ̃(ω_x)·cos(ω_x T/2).
pub fn tone_phase(omega0: f64, k: usize, x: usize) -> Result<f64> {
    let t = 2.0 * PI / omega0;
    let w = tone(omega0, x);
    Ok(t * filter_function(2 * PRIMES[k], tone(omega0, k), w)? * (0.5 * w * t).cos())
}

fn exact_phase(spec: &BooleanFunctionSpec, omega0: f64, b: f64, k: usize, i: usize) -> Result<f64> {
    let modulation = conditional_cpmg(omega0, k)?;
    let t = modulation.duration().unwrap();
    let mut theta = 0.0;
    for x in 0..1 << spec.n {
        if spec.bit(x, i) == 1 {
            let signal = AcSignal::new(b, tone(omega0, x), 0.0)?;
            theta += propagate_z_commuting(&signal, 1.0, (0.0, t), &modulation)?;
        }
    }
    Ok(theta)
}

fn sampled_phase(
    spec: &BooleanFunctionSpec,
    omega0: f64,
    b: f64,
    k: usize,
    i: usize,
    steps: usize,
) -> Result<f64> {
    let modulation = conditional_cpmg(omega0, k)?;
    let t = modulation.duration().unwrap();
    let mut edges = vec![0.0];
    edges.extend(modulation.switch_times());
    edges.push(t);
    let tones: Vec<f64> = (0..1 << spec.n)
        .filter(|&x| spec.bit(x, i) == 1)
        .map(|x| tone(omega0, x))
        .collect();
    let mut theta = 0.0;
    for e in edges.windows(2) {
        let h = (e[1] - e[0]) / steps as f64;
        let sign = modulation.value(0.5 * (e[0] + e[1]));
        for s in 0..steps {
            let tm = e[0] + (s as f64 + 0.5) * h;
            theta += sign * h * tones.iter().map(|w| (w * tm).cos()).sum::<f64>();
        }
    }
    Ok(b * theta)
}

/// W = (1/√2)[[1, 1], [i, −i]], mapping the post-sensing sensor states to |f⟩.
pub fn w_gate() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(
        2,
        2,
        &[
            C64::new(s, 0.0),
            C64::new(s, 0.0),
            C64::new(0.0, s),
            C64::new(0.0, -s),
        ],
    )
}

/// Lifts a single-qubit operator onto qubit `q` of an `n`-qubit register.
fn on_qubit(op: &CMat, q: usize, n: usize) -> CMat {
    let mut m = CMat::identity(1, 1);
    for j in 0..n {
        m = kron(
            &m,
            &if j == q {
                op.clone()
            } else {
                CMat::identity(2, 2)
            },
        );
    }
    m
}

/// Permutation matrix of CNOT with `control` and `target` qubits.
fn cnot(control: usize, target: usize, n: usize) -> CMat {
    let dim = 1usize << n;
    let (sc, st) = (n - 1 - control, n - 1 - target);
    let mut m = CMat::zeros(dim, dim);
    for c in 0..dim {
        let r = if (c >> sc) & 1 == 1 { c ^ (1 << st) } else { c };
        m[(r, c)] = C64::new(1.0, 0.0);
    }
    m
}

/// Builds the oracle of `spec` from tones at multiples of `omega0`.
///
/// The sensing passes use closed-form phase integrals per |k⟩_X. A midpoint
/// evaluation with `trotter_steps` samples per interpulse interval serves as
/// the convergence certificate; a gap above the tolerance is an error.
pub fn synth_oracle(
    spec: &BooleanFunctionSpec,
    omega0: f64,
    opts: OracleOpts,
) -> Result<SynthesizedOracle> {
    finite(omega0, "omega0")?;
    if omega0 <= 0.0 {
        return Err(Error::Invalid("omega0 must be positive".into()));
    }
    if opts.trotter_steps == 0 {
        return Err(Error::Invalid("trotter_steps must be >= 1".into()));
    }
    let (n, m) = (spec.n, spec.m);
    let duration = 2.0 * PI / omega0;
    let strength = PI * PI / (4.0 * duration);
    let mut phases = vec![vec![0.0; m]; 1 << n];
    let mut residual: f64 = 0.0;
    for (k, row) in phases.iter_mut().enumerate() {
        for (i, theta) in row.iter_mut().enumerate() {
            *theta = exact_phase(spec, omega0, strength, k, i)?;
            let sampled = sampled_phase(spec, omega0, strength, k, i, opts.trotter_steps)?;
            residual = residual.max((sampled - *theta).abs());
        }
    }
    if residual > opts.tolerance {
        return Err(Error::NoConvergence {
            steps: opts.trotter_steps,
            residual,
        });
    }

    let qubits = n + 2 * m;
    let dim = 1usize << qubits;
    // sensing pass: diagonal, e^{−iθ_{k,i} z_i} on each sensor given |k⟩_X
    let pass = CMat::from_fn(dim, dim, |r, c| {
        if r != c {
            return C64::new(0.0, 0.0);
        }
        let k = r >> (2 * m);
        let angle: f64 = (0..m)
            .map(|i| {
                let bit = (r >> i) & 1;
                let z = if bit == 0 { 1.0 } else { -1.0 };
                -phases[k][i] * z
            })
            .sum();
        C64::from_polar(1.0, angle)
    });
    let w = w_gate();
    let wt = w.transpose();
    let mut interlude = CMat::identity(dim, dim);
    for i in 0..m {
        let sensor = n + 2 * m - 1 - i;
        let output = n + m - 1 - i;
        interlude = on_qubit(&wt, sensor, qubits)
            * cnot(sensor, output, qubits)
            * on_qubit(&w, sensor, qubits)
            * interlude;
    }
    let unitary = UnitaryMatrix::new(&pass * interlude * &pass)?;
    Ok(SynthesizedOracle {
        spec: spec.clone(),
        omega0,
        duration,
        strength,
        phases,
        unitary,
        trotter_steps: opts.trotter_steps,
        residual,
    })
}

/// |x⟩|y⟩ → |x⟩|y ⊕ f(x)⟩ on X ⊗ Y.
pub fn ideal_oracle(spec: &BooleanFunctionSpec) -> CMat {
    let m = spec.m;
    let dim = 1usize << (spec.n + m);
    let mut o = CMat::zeros(dim, dim);
    for c in 0..dim {
        let (x, y) = (c >> m, c & ((1 << m) - 1));
        o[((x << m) | (y ^ spec.table[x] as usize), c)] = C64::new(1.0, 0.0);
    }
    o
}

impl SynthesizedOracle {
    /// ⟨+|^{⊗m} U |+⟩^{⊗m}: the action on X ⊗ Y with sensors prepared and
    /// post-selected in |+⟩.
    pub fn effective_oracle(&self) -> CMat {
        let m = self.spec.m;
        let s = 1usize << m;
        let dim = 1usize << (self.spec.n + m);
        let u = self.unitary.matrix();
        let norm = C64::new(1.0 / s as f64, 0.0);
        CMat::from_fn(dim, dim, |r, c| {
            let mut acc = C64::new(0.0, 0.0);
            for sr in 0..s {
                for sc in 0..s {
                    acc += u[(r * s + sr, c * s + sc)];
                }
            }
            acc * norm
        })
    }

    /// Overlap of the sensors' reduced state with |+⟩^{⊗m}, per basis input of X ⊗ Y.
    pub fn sensor_fidelities(&self) -> Vec<f64> {
        let v = self.effective_oracle();
        (0..v.ncols()).map(|c| v.column(c).norm_squared()).collect()
    }

    pub fn report(&self) -> OracleReport {
        let eff = self.effective_oracle();
        let max_deviation = (&eff - ideal_oracle(&self.spec))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let min_sensor_fidelity = self.sensor_fidelities().into_iter().fold(1.0, f64::min);
        OracleReport {
            n: self.spec.n,
            m: self.spec.m,
            table: self.spec.table.clone(),
            omega0: self.omega0,
            trotter_steps: self.trotter_steps,
            phase_residual: self.residual,
            max_deviation,
            min_sensor_fidelity,
        }
    }
}

/// Verification summary of a synthesized oracle against its truth table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub m: usize,
    pub table: Vec<u32>,
    pub omega0: f64,
    pub trotter_steps: usize,
    pub phase_residual: f64,
    pub max_deviation: f64,
    pub min_sensor_fidelity: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdyn::unitarity_deviation;

    #[test]
    fn bitstring_layout() {
        let f = BooleanFunctionSpec::from_bitstring("00 01 10 11", 2).unwrap();
        assert_eq!((f.n, f.m), (2, 2));
        assert_eq!(f.table, vec![0, 2, 1, 3]);
        assert!(BooleanFunctionSpec::from_bitstring("010", 1).is_err());
        assert!(BooleanFunctionSpec::from_bitstring("01x1", 1).is_err());
    }

    #[test]
    fn w_maps_sensed_states_to_basis() {
        let w = w_gate();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = CMat::from_column_slice(2, 1, &[C64::new(s, 0.0), C64::new(s, 0.0)]);
        let flipped = CMat::from_column_slice(2, 1, &[C64::new(0.0, -s), C64::new(0.0, s)]);
        let a = &w * plus;
        let b = &w * flipped;
        assert!((a[(0, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((b[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!(unitarity_deviation(&w) < 1e-15);
    }

    #[test]
    fn resonant_tone_gives_quarter_turn() {
        let omega0 = 1.3;
        let t = 2.0 * PI / omega0;
        for k in 0..8 {
            let p = tone_phase(omega0, k, k).unwrap() * PI * PI / (4.0 * t);
            assert!((p.abs() - 0.5 * PI).abs() < 1e-12, "k={k}: {p}");
        }
    }

    #[test]
    fn cnot_permutation() {
        let c = cnot(0, 1, 2);
        assert_eq!(c[(3, 2)], C64::new(1.0, 0.0));
        assert_eq!(c[(2, 3)], C64::new(1.0, 0.0));
        assert_eq!(c[(0, 0)], C64::new(1.0, 0.0));
    }
}
