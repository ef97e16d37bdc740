//! Propagation engine: unitaries, exact Z-commuting phases, sampled
//! time-ordered products, the dephasing block solver and distances.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::signal::Modulation;
use crate::{finite, quad, Error, Result, C64};

pub type CMat = DMatrix<C64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn hadamard() -> Mat2 {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Mat2::new(h, h, h, -h)
}

/// e^{−iθZ}.
pub fn rz(theta: f64) -> Mat2 {
    Mat2::new(
        C64::from_polar(1.0, -theta),
        ZERO,
        ZERO,
        C64::from_polar(1.0, theta),
    )
}

/// e^{−iφX}.
pub fn rx(phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    Mat2::new(
        C64::new(c, 0.0),
        C64::new(0.0, -s),
        C64::new(0.0, -s),
        C64::new(c, 0.0),
    )
}

pub fn to_dense(m: &Mat2) -> CMat {
    CMat::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Kronecker product, first factor most significant.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    CMat::from_fn(ra * rb, ca * cb, |i, j| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

/// Max-entry deviation of U†U from the identity.
pub fn unitarity_deviation(m: &CMat) -> f64 {
    let p = m.adjoint() * m;
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = if i == j { p[(i, j)] - ONE } else { p[(i, j)] };
            worst = worst.max(e.norm());
        }
    }
    worst
}

/// Max-entry |H − H†|.
pub fn hermitian_asymmetry(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Square matrix with U†U = 1 to 1e-10 per entry.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    m: CMat,
}

impl UnitaryMatrix {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dim(m.nrows(), m.ncols()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entry"));
        }
        let dev = unitarity_deviation(&m);
        if dev > Self::TOLERANCE {
            return Err(Error::NotUnitary(dev));
        }
        Ok(UnitaryMatrix { m })
    }

    pub fn from_qubit(m: &Mat2) -> Result<Self> {
        Self::new(to_dense(m))
    }

    pub fn identity(dim: usize) -> Self {
        UnitaryMatrix {
            m: CMat::identity(dim, dim),
        }
    }

    /// Product `self · other` (apply `other` first).
    pub fn mul(&self, other: &UnitaryMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Dim(self.dim(), other.dim()));
        }
        Ok(UnitaryMatrix {
            m: &self.m * &other.m,
        })
    }

    pub fn adjoint(&self) -> Self {
        UnitaryMatrix {
            m: self.m.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    /// 2×2 view; panics for other dimensions.
    pub fn qubit(&self) -> Mat2 {
        assert_eq!(self.dim(), 2, "not a single-qubit unitary");
        Mat2::new(
            self.m[(0, 0)],
            self.m[(0, 1)],
            self.m[(1, 0)],
            self.m[(1, 1)],
        )
    }
}

/// Oscillating field B cos(ωt + φ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcSignal {
    pub strength: f64,
    pub angular_frequency: f64,
    pub phase: f64,
}

impl AcSignal {
    /// Phase is wrapped into [0, 2π).
    pub fn new(strength: f64, angular_frequency: f64, phase: f64) -> Result<Self> {
        finite(strength, "strength")?;
        finite(angular_frequency, "angular frequency")?;
        finite(phase, "phase")?;
        if strength < 0.0 || angular_frequency <= 0.0 {
            return Err(Error::Invalid(format!(
                "need B >= 0 and omega > 0, got B={strength}, omega={angular_frequency}"
            )));
        }
        let mut phase = phase.rem_euclid(2.0 * PI);
        if phase >= 2.0 * PI {
            phase = 0.0;
        }
        Ok(AcSignal {
            strength,
            angular_frequency,
            phase,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        self.strength * (self.angular_frequency * t + self.phase).cos()
    }

    /// Same field observed from a clock started `dt` later.
    pub fn delayed(&self, dt: f64) -> Self {
        AcSignal::new(
            self.strength,
            self.angular_frequency,
            self.phase + self.angular_frequency * dt,
        )
        .expect("finite shift of a valid signal")
    }

    pub fn scaled(&self, factor: f64) -> Self {
        AcSignal {
            strength: self.strength * factor,
            ..*self
        }
    }
}

/// θ = w·B·∫_{t₀}^{t₁} χ(t) cos(ωt + φ) dt.
pub fn propagate_z_commuting(
    signal: &AcSignal,
    weight: f64,
    window: (f64, f64),
    modulation: &Modulation,
) -> Result<f64> {
    let (t0, t1) = window;
    finite(weight, "weight")?;
    finite(t0, "window start")?;
    finite(t1, "window end")?;
    if t1 <= t0 {
        return Err(Error::Invalid(format!("empty window [{t0}, {t1}]")));
    }
    if signal.strength == 0.0 || weight == 0.0 {
        return Ok(0.0);
    }
    let w = signal.angular_frequency;
    let phi = signal.phase;
    let prim = |t: f64| (w * t + phi).sin() / w;
    let integral = match *modulation {
        Modulation::Constant => prim(t1) - prim(t0),
        Modulation::CpmgSquare { target, pulses } => {
            let total = modulation.duration().unwrap();
            let lo = t0.max(0.0);
            let hi = t1.min(total);
            if lo == 0.0 && (hi - total).abs() <= 1e-12 * total {
                // full window: T·χ̃(ω)·cos(ωT/2 + φ), χ̃ real by symmetry about T/2
                let chi = crate::signal::filter_function(pulses, target, w)?;
                total * chi * (0.5 * w * total + phi).cos()
            } else if hi <= lo {
                0.0
            } else {
                let mut edges = vec![lo];
                edges.extend(
                    modulation
                        .switch_times()
                        .into_iter()
                        .filter(|&s| s > lo && s < hi),
                );
                edges.push(hi);
                edges
                    .windows(2)
                    .map(|e| modulation.value(0.5 * (e[0] + e[1])) * (prim(e[1]) - prim(e[0])))
                    .sum()
            }
        }
        Modulation::Bump { duration } => {
            let lo = t0.max(0.0);
            let hi = t1.min(duration);
            if hi <= lo {
                0.0
            } else {
                let f = |t: f64| modulation.value(t) * (w * t + phi).cos();
                let chunk = (PI / w).max((hi - lo) / 4096.0);
                // absolute floor relative to the envelope scale keeps the tolerance meaningful near zero
                let scale = crate::signal::bump_mean() * duration;
                quad::integrate_chunked(f, lo, hi, chunk, 1e-13, 1e-15 * scale)
            }
        }
    };
    Ok(weight * signal.strength * integral)
}

/// exp(−iHt) for a 2×2 Hermitian H via Pauli decomposition.
pub fn expm_qubit(h: &Mat2, t: f64) -> Mat2 {
    let a0 = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let az = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let ax = 0.5 * (h[(0, 1)].re + h[(1, 0)].re);
    let ay = 0.5 * (h[(1, 0)].im - h[(0, 1)].im);
    let r = (ax * ax + ay * ay + az * az).sqrt();
    let g = C64::from_polar(1.0, -a0 * t);
    let (s, c) = (r * t).sin_cos();
    // sin(rt)/r, finite as r → 0
    let k = if r * t.abs() < 1e-8 { t } else { s / r };
    let m = Mat2::new(
        C64::new(c, -k * az),
        C64::new(-k * ay, -k * ax),
        C64::new(k * ay, -k * ax),
        C64::new(c, k * az),
    );
    m * g
}

/// exp(−iHt) for a Hermitian H (analytic for 2×2, eigendecomposition otherwise).
pub fn expm_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::Dim(n, h.ncols()));
    }
    let asym = hermitian_asymmetry(h);
    if asym > 1e-10 {
        return Err(Error::NotHermitian(asym));
    }
    if n == 2 {
        let m = Mat2::new(h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
        return Ok(to_dense(&expm_qubit(&m, t)));
    }
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let phases = CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::from_polar(1.0, -eig.eigenvalues[i] * t)
        } else {
            ZERO
        }
    });
    Ok(v * phases * v.adjoint())
}

/// Midpoint exponential product ∏ exp(−iH(t_mid)Δt).
pub fn evolve_sampled<F>(hamiltonian: F, duration: f64, steps: usize) -> Result<UnitaryMatrix>
where
    F: Fn(f64) -> CMat,
{
    finite(duration, "duration")?;
    if steps == 0 {
        return Err(Error::Invalid("steps must be >= 1".into()));
    }
    let dt = duration / steps as f64;
    let mut u: Option<CMat> = None;
    for j in 0..steps {
        let h = hamiltonian((j as f64 + 0.5) * dt);
        let step = expm_hermitian(&h, dt)?;
        u = Some(match u {
            None => step,
            Some(prev) => step * prev,
        });
    }
    let m = u.unwrap();
    Ok(UnitaryMatrix { m })
}

/// Qubit specialization of [`evolve_sampled`] avoiding heap traffic per step.
pub fn evolve_sampled_qubit<F>(hamiltonian: F, duration: f64, steps: usize) -> Result<Mat2>
where
    F: Fn(f64) -> Mat2,
{
    finite(duration, "duration")?;
    if steps == 0 {
        return Err(Error::Invalid("steps must be >= 1".into()));
    }
    let dt = duration / steps as f64;
    let mut u = Mat2::identity();
    for j in 0..steps {
        let h = hamiltonian((j as f64 + 0.5) * dt);
        let asym = (h[(0, 1)] - h[(1, 0)].conj())
            .norm()
            .max(h[(0, 0)].im.abs())
            .max(h[(1, 1)].im.abs());
        if asym > 1e-10 {
            return Err(Error::NotHermitian(asym));
        }
        u = expm_qubit(&h, dt) * u;
    }
    Ok(u)
}

/// Step-doubling controls for the converged integrators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOpts {
    pub initial_steps: usize,
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Default for ConvergenceOpts {
    fn default() -> Self {
        ConvergenceOpts {
            initial_steps: 64,
            tolerance: 1e-9,
            max_steps: 1 << 22,
        }
    }
}

/// Certificate attached to a converged propagator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub steps: usize,
    /// Operator-norm change at the last doubling.
    pub residual: f64,
    /// Ratio of the last two residuals; ≈ 4 for a second-order scheme.
    pub richardson: Option<f64>,
}

/// Doubles the step count of `run` until successive results agree to `tolerance`.
pub fn converge<T, F, D>(mut run: F, distance: D, opts: ConvergenceOpts) -> Result<(T, Convergence)>
where
    F: FnMut(usize) -> Result<T>,
    D: Fn(&T, &T) -> f64,
{
    let mut steps = opts.initial_steps.max(1);
    let mut prev = run(steps)?;
    let mut last_residual: Option<f64> = None;
    loop {
        let next_steps = steps * 2;
        if next_steps > opts.max_steps {
            return Err(Error::NoConvergence {
                steps,
                residual: last_residual.unwrap_or(f64::INFINITY),
            });
        }
        let next = run(next_steps)?;
        let residual = distance(&prev, &next);
        let richardson = last_residual.map(|r| r / residual);
        if residual < opts.tolerance {
            return Ok((
                next,
                Convergence {
                    steps: next_steps,
                    residual,
                    richardson,
                },
            ));
        }
        last_residual = Some(residual);
        prev = next;
        steps = next_steps;
    }
}

pub fn evolve_converged<F>(
    hamiltonian: F,
    duration: f64,
    opts: ConvergenceOpts,
) -> Result<(UnitaryMatrix, Convergence)>
where
    F: Fn(f64) -> CMat,
{
    converge(
        |n| evolve_sampled(&hamiltonian, duration, n),
        |a, b| spectral_norm(&(a.matrix() - b.matrix())),
        opts,
    )
}

pub fn evolve_converged_qubit<F>(
    hamiltonian: F,
    duration: f64,
    opts: ConvergenceOpts,
) -> Result<(Mat2, Convergence)>
where
    F: Fn(f64) -> Mat2,
{
    converge(
        |n| evolve_sampled_qubit(&hamiltonian, duration, n),
        |a, b| spectral_norm_qubit(&(a - b)),
        opts,
    )
}

pub fn spectral_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Largest singular value of a 2×2 matrix in closed form.
pub fn spectral_norm_qubit(m: &Mat2) -> f64 {
    let fro2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (fro2 + disc)).sqrt()
}

/// ‖U − V‖ in spectral norm.
pub fn unitary_distance(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Dim(u.dim(), v.dim()));
    }
    Ok(spectral_norm(&(u.matrix() - v.matrix())))
}

/// ½‖ρ − σ‖₁.
pub fn trace_distance(rho: &CMat, sigma: &CMat) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::Dim(rho.nrows(), sigma.nrows()));
    }
    for m in [rho, sigma] {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix entry"));
        }
        let asym = hermitian_asymmetry(m);
        if asym > 1e-10 {
            return Err(Error::NotHermitian(asym));
        }
        let dev = (m.trace() - ONE).norm();
        if dev > 1e-8 {
            return Err(Error::Trace(dev));
        }
    }
    let diff = rho - sigma;
    let diff = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(diff);
    Ok(0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>())
}

/// Generator of one sensor block |k₁⟩⟨k₂| ⊗ ρ_S under
/// dρ/dt = −i(H_L ρ − ρ H_R) + (Γ/2)(ZρZ − ρ) − Γ_c ρ,
/// acting on the row-major vectorization (ρ₀₀, ρ₀₁, ρ₁₀, ρ₁₁).
///
/// `sensor_rate` is the sensor dephasing Γ; `coherence_rate` is Γ times the
/// Hamming distance between k₁ and k₂.
pub fn block_generator(left: &Mat2, right: &Mat2, sensor_rate: f64, coherence_rate: f64) -> Mat4 {
    let mut g = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let row = 2 * i + j;
            for k in 0..2 {
                // (H_L ρ)_{ij} = Σ_k H_L[i,k] ρ_{kj}
                g[(row, 2 * k + j)] += -I * left[(i, k)];
                // (ρ H_R)_{ij} = Σ_k ρ_{ik} H_R[k,j]
                g[(row, 2 * i + k)] += I * right[(k, j)];
            }
            let zz = if i == j { 0.0 } else { -sensor_rate };
            g[(row, row)] += C64::new(zz - coherence_rate, 0.0);
        }
    }
    g
}

/// exp(G·t) for the block generator.
///
/// Padé scaling-and-squaring rather than an eigendecomposition: the generator
/// is non-normal and becomes defective at critical damping.
pub fn block_propagator(
    left: &Mat2,
    right: &Mat2,
    sensor_rate: f64,
    coherence_rate: f64,
    duration: f64,
) -> Mat4 {
    let g = block_generator(left, right, sensor_rate, 0.0) * C64::new(duration, 0.0);
    let decay = (-coherence_rate * duration).exp();
    g.exp() * C64::new(decay, 0.0)
}

pub fn apply_block(prop: &Mat4, block: &Mat2) -> Mat2 {
    let v = nalgebra::Vector4::new(block[(0, 0)], block[(0, 1)], block[(1, 0)], block[(1, 1)]);
    let w = prop * v;
    Mat2::new(w[0], w[1], w[2], w[3])
}

/// Evolves one block for `duration` under left/right effective Hamiltonians,
/// sensor dephasing Γ and inter-configuration decay Γ·`hamming`.
pub fn dephasing_block_step(
    left_h: &Mat2,
    right_h: &Mat2,
    gamma: f64,
    hamming: u32,
    duration: f64,
    block: &Mat2,
) -> Result<Mat2> {
    finite(gamma, "gamma")?;
    finite(duration, "duration")?;
    for m in [left_h, right_h, block] {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("block entry"));
        }
    }
    if duration < 0.0 || gamma < 0.0 {
        return Err(Error::Invalid(
            "duration and gamma must be nonnegative".into(),
        ));
    }
    let p = block_propagator(left_h, right_h, gamma, gamma * hamming as f64, duration);
    Ok(apply_block(&p, block))
}

/// Instantaneous gates at increasing timestamps over a sensing window,
/// with the sensor coupled to the signal through `modulation` in between.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSchedule {
    duration: f64,
    gates: Vec<(f64, UnitaryMatrix)>,
    modulation: Modulation,
}

impl ControlSchedule {
    pub fn new(
        duration: f64,
        gates: Vec<(f64, UnitaryMatrix)>,
        modulation: Modulation,
    ) -> Result<Self> {
        finite(duration, "duration")?;
        if duration <= 0.0 {
            return Err(Error::Invalid("schedule duration must be positive".into()));
        }
        for (i, (t, g)) in gates.iter().enumerate() {
            finite(*t, "gate time")?;
            if *t < 0.0 || *t > duration {
                return Err(Error::Invalid(format!(
                    "gate time {t} outside [0, {duration}]"
                )));
            }
            if i > 0 && *t <= gates[i - 1].0 {
                return Err(Error::Invalid(format!(
                    "gate times not strictly increasing at index {i}"
                )));
            }
            if g.dim() != 2 {
                return Err(Error::Dim(g.dim(), 2));
            }
        }
        Ok(ControlSchedule {
            duration,
            gates,
            modulation,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn gates(&self) -> &[(f64, UnitaryMatrix)] {
        &self.gates
    }

    pub fn modulation(&self) -> &Modulation {
        &self.modulation
    }
}

/// Sensor propagator of a schedule under H(t) = χ(t)·B cos(ωt + φ)·Z.
///
/// Between gates the Hamiltonian commutes with itself, so each free
/// stretch is an exact Z rotation.
pub fn simulate_schedule(schedule: &ControlSchedule, signal: &AcSignal) -> Result<Mat2> {
    let mut u = Mat2::identity();
    let mut t = 0.0;
    let free = |a: f64, b: f64| -> Result<Mat2> {
        if b > a {
            Ok(rz(propagate_z_commuting(
                signal,
                1.0,
                (a, b),
                &schedule.modulation,
            )?))
        } else {
            Ok(Mat2::identity())
        }
    };
    for (tg, g) in &schedule.gates {
        u = g.qubit() * free(t, *tg)? * u;
        t = *tg;
    }
    Ok(free(t, schedule.duration)? * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_exponential_matches_eigen() {
        let h = Mat2::new(
            C64::new(0.3, 0.0),
            C64::new(0.2, -0.7),
            C64::new(0.2, 0.7),
            C64::new(-1.1, 0.0),
        );
        let a = to_dense(&expm_qubit(&h, 1.7));
        let dense = to_dense(&h);
        let eig = SymmetricEigen::new(dense);
        let v = &eig.eigenvectors;
        let d = CMat::from_fn(2, 2, |i, j| {
            if i == j {
                C64::from_polar(1.0, -1.7 * eig.eigenvalues[i])
            } else {
                ZERO
            }
        });
        let b = v * d * v.adjoint();
        assert!((a - b).camax() < 1e-13);
    }

    #[test]
    fn signal_phase_wraps() {
        let s = AcSignal::new(1.0, 2.0, -0.5).unwrap();
        assert!((s.phase - (2.0 * PI - 0.5)).abs() < 1e-15);
        assert!(AcSignal::new(-1.0, 2.0, 0.0).is_err());
        assert!(AcSignal::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn spectral_norm_closed_form() {
        let m = Mat2::new(
            C64::new(1.0, 2.0),
            C64::new(-0.5, 0.1),
            C64::new(0.3, 0.0),
            C64::new(0.0, -1.0),
        );
        assert!((spectral_norm_qubit(&m) - spectral_norm(&to_dense(&m))).abs() < 1e-12);
    }

    #[test]
    fn block_generator_layout() {
        // Γ = 0 generator must reproduce −i(Hρ − ρH) for a random ρ
        let h = Mat2::new(
            C64::new(0.4, 0.0),
            C64::new(0.1, 0.3),
            C64::new(0.1, -0.3),
            C64::new(-0.2, 0.0),
        );
        let r = Mat2::new(
            C64::new(0.7, 0.0),
            C64::new(0.2, 0.1),
            C64::new(0.2, -0.1),
            C64::new(0.3, 0.0),
        );
        let g = block_generator(&h, &h, 0.0, 0.0);
        let v = nalgebra::Vector4::new(r[(0, 0)], r[(0, 1)], r[(1, 0)], r[(1, 1)]);
        let w = g * v;
        let expect = (h * r - r * h) * (-I);
        assert!((w[1] - expect[(0, 1)]).norm() < 1e-15);
        assert!((w[2] - expect[(1, 0)]).norm() < 1e-15);
        assert!((w[0] - expect[(0, 0)]).norm() < 1e-15);
    }

    #[test]
    fn cpmg_full_window_matches_interval_sum() {
        let m = Modulation::cpmg(3.0, 40).unwrap();
        let total = m.duration().unwrap();
        for &(w, phi) in &[(2.9, 0.3), (3.0, 1.1), (9.02, 2.0), (1.3, 5.5)] {
            let s = AcSignal::new(0.7, w, phi).unwrap();
            let fast = propagate_z_commuting(&s, 1.0, (0.0, total), &m).unwrap();
            // splitting the window forces the interval sum
            let mid = 0.37 * total;
            let slow = propagate_z_commuting(&s, 1.0, (0.0, mid), &m).unwrap()
                + propagate_z_commuting(&s, 1.0, (mid, total), &m).unwrap();
            assert!((fast - slow).abs() < 1e-11, "w={w}: {fast} vs {slow}");
        }
    }
}
