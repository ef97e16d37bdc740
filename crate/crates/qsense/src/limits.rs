//! Numerical checks of the sensing lower bounds.
//!
//! A protocol is a list of gates on `n_s` sensors plus `n_q` ancillas, with
//! the field H(t) = B cos(ωt + φ) Σᵢ Zᵢ acting on the sensors in between.
//! That Hamiltonian is diagonal in the computational basis, so the free
//! stretches are exact phase multiplications and only the gates are dense.
//!
//! Qubit 0 is the most significant bit of a basis index; sensors occupy
//! qubits `0..n_s`.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::qdyn::{
    converge, kron, pauli_z, to_dense, trace_distance, CMat, ConvergenceOpts, UnitaryMatrix,
};
use crate::rng::Rng;
use crate::{finite, Error, Result, C64};

/// Largest number of sensors and of ancillas simulated by [`avg_distinguishability`].
pub const MAX_SENSORS: usize = 3;
pub const MAX_ANCILLAS: usize = 3;

/// Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: 0.0,
                stderr: 0.0,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    /// True when the estimate lies below `bound` within `sigmas` standard errors.
    pub fn within(&self, bound: f64, sigmas: f64) -> bool {
        self.mean <= bound + sigmas * self.stderr
    }
}

/// Gate sequence on sensors and ancillas with the field coupled to the sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolUnderTest {
    n_s: usize,
    n_q: usize,
    duration: f64,
    gates: Vec<(f64, UnitaryMatrix)>,
}

impl ProtocolUnderTest {
    /// Gates are full-register unitaries at nondecreasing times in [0, duration].
    pub fn new(
        n_s: usize,
        n_q: usize,
        duration: f64,
        gates: Vec<(f64, UnitaryMatrix)>,
    ) -> Result<Self> {
        finite(duration, "duration")?;
        if n_s == 0 {
            return Err(Error::Invalid("need at least one sensor".into()));
        }
        if n_s > MAX_SENSORS || n_q > MAX_ANCILLAS {
            return Err(Error::TooLarge(n_s + n_q));
        }
        if duration < 0.0 {
            return Err(Error::Invalid("duration must be nonnegative".into()));
        }
        let dim = 1usize << (n_s + n_q);
        for (i, (t, g)) in gates.iter().enumerate() {
            finite(*t, "gate time")?;
            if *t < 0.0 || *t > duration {
                return Err(Error::Invalid(format!(
                    "gate time {t} outside [0, {duration}]"
                )));
            }
            if i > 0 && *t < gates[i - 1].0 {
                return Err(Error::Invalid(format!("gate times decrease at index {i}")));
            }
            if g.dim() != dim {
                return Err(Error::Dim(g.dim(), dim));
            }
        }
        Ok(ProtocolUnderTest {
            n_s,
            n_q,
            duration,
            gates,
        })
    }

    /// Haar-random two-qubit gates on random qubit pairs: one at t = 0, then
    /// Poisson arrivals at `rate` over (0, duration).
    pub fn random(n_s: usize, n_q: usize, duration: f64, rate: f64, rng: &mut Rng) -> Result<Self> {
        let n = n_s + n_q;
        if n < 2 {
            return Err(Error::Invalid(
                "random protocols need at least two qubits".into(),
            ));
        }
        if n_s > MAX_SENSORS || n_q > MAX_ANCILLAS {
            return Err(Error::TooLarge(n));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Invalid("gate rate must be positive".into()));
        }
        let mut times = vec![0.0];
        let exp = Exp::new(rate).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut t: f64 = exp.sample(rng);
        while t < duration {
            times.push(t);
            t += exp.sample(rng);
        }
        let mut gates = Vec::with_capacity(times.len());
        for t in times {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            gates.push((t, embed_two_qubit(&haar_unitary(4, rng), a, b, n)?));
        }
        ProtocolUnderTest::new(n_s, n_q, duration, gates)
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn gates(&self) -> &[(f64, UnitaryMatrix)] {
        &self.gates
    }

    pub fn dim(&self) -> usize {
        1 << (self.n_s + self.n_q)
    }

    /// Same protocol followed by extra gates at the final time.
    pub fn with_trailing(&self, trailing: Vec<UnitaryMatrix>) -> Result<Self> {
        let mut gates = self.gates.clone();
        gates.extend(trailing.into_iter().map(|g| (self.duration, g)));
        ProtocolUnderTest::new(self.n_s, self.n_q, self.duration, gates)
    }

    /// Σᵢ Zᵢ over the sensors for each basis index.
    fn z_sums(&self) -> Vec<f64> {
        let n = self.n_s + self.n_q;
        (0..self.dim())
            .map(|x| {
                (0..self.n_s)
                    .map(|i| {
                        if (x >> (n - 1 - i)) & 1 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// Final state from |0…0⟩ under field strength `b` (any sign), frequency ω and phase φ.
    pub fn final_state(&self, b: f64, omega: f64, phi: f64) -> DVector<C64> {
        self.final_state_with(&self.z_sums(), b, omega, phi)
    }

    fn final_state_with(&self, z: &[f64], b: f64, omega: f64, phi: f64) -> DVector<C64> {
        let mut psi = DVector::from_element(self.dim(), C64::new(0.0, 0.0));
        psi[0] = C64::new(1.0, 0.0);
        let prim = |t: f64| (omega * t + phi).sin() / omega;
        let free = |psi: &mut DVector<C64>, t0: f64, t1: f64| {
            if t1 > t0 && b != 0.0 {
                let theta = b * (prim(t1) - prim(t0));
                for (amp, zs) in psi.iter_mut().zip(z) {
                    *amp *= C64::from_polar(1.0, -theta * zs);
                }
            }
        };
        let mut t = 0.0;
        for (tg, g) in &self.gates {
            free(&mut psi, t, *tg);
            psi = g.matrix() * psi;
            t = *tg;
        }
        free(&mut psi, t, self.duration);
        psi
    }
}

/// Haar-random unitary of dimension `dim` from the QR decomposition of a
/// complex Ginibre matrix with the phases of R's diagonal divided out.
pub fn haar_unitary(dim: usize, rng: &mut Rng) -> UnitaryMatrix {
    let g = CMat::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMat::from_fn(dim, dim, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        } else {
            C64::new(0.0, 0.0)
        }
    });
    UnitaryMatrix::new(q * phases).expect("QR factor is unitary")
}

/// Lifts a 4×4 gate on qubits (a, b) of an n-qubit register; `a` is the
/// high bit of the gate's local index.
pub fn embed_two_qubit(
    gate: &UnitaryMatrix,
    a: usize,
    b: usize,
    n: usize,
) -> Result<UnitaryMatrix> {
    if gate.dim() != 4 {
        return Err(Error::Dim(gate.dim(), 4));
    }
    if a == b || a >= n || b >= n {
        return Err(Error::Invalid(format!(
            "bad qubit pair ({a}, {b}) for {n} qubits"
        )));
    }
    let dim = 1usize << n;
    let (sa, sb) = (n - 1 - a, n - 1 - b);
    let local = |x: usize| (((x >> sa) & 1) << 1) | ((x >> sb) & 1);
    let rest = |x: usize| x & !((1 << sa) | (1 << sb));
    let g = gate.matrix();
    let m = CMat::from_fn(dim, dim, |r, c| {
        if rest(r) == rest(c) {
            g[(local(r), local(c))]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    UnitaryMatrix::new(m)
}

fn check_band(band: (f64, f64)) -> Result<f64> {
    finite(band.0, "band start")?;
    finite(band.1, "band end")?;
    if !(band.0 > 0.0 && band.1 > band.0) {
        return Err(Error::Invalid(format!("bad band [{}, {}]", band.0, band.1)));
    }
    Ok(band.1 - band.0)
}

fn draw_frequency_phase(band: (f64, f64), rng: &mut Rng) -> (f64, f64) {
    (
        rng.random_range(band.0..band.1),
        rng.random_range(0.0..2.0 * PI),
    )
}

/// Average distinguishability (1/|Δω|)∫dω ‖ψ₀ − ψ_ω‖² at B = B_min, by
/// Monte-Carlo over uniform ω in `band` and uniform φ.
pub fn avg_distinguishability(
    put: &ProtocolUnderTest,
    b_min: f64,
    band: (f64, f64),
    samples: usize,
    rng: &mut Rng,
) -> Result<Estimate> {
    finite(b_min, "B_min")?;
    check_band(band)?;
    if samples < 100 {
        return Err(Error::Precondition(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    let z = put.z_sums();
    let psi0 = put.final_state_with(&z, 0.0, 1.0, 0.0);
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let (w, phi) = draw_frequency_phase(band, rng);
            (&psi0 - put.final_state_with(&z, b_min, w, phi)).norm_squared()
        })
        .collect();
    Ok(Estimate::from_samples(&values))
}

/// 4π n_S B_min/|Δω|, valid for durations up to 1/(n_S B_min).
pub fn short_time_bound(n_s: usize, b_min: f64, width: f64) -> f64 {
    4.0 * PI * n_s as f64 * b_min / width
}

/// 4π (n_S B_min)³ τ²/|Δω|.
pub fn long_time_bound(n_s: usize, b_min: f64, width: f64, tau: f64) -> f64 {
    4.0 * PI * (n_s as f64 * b_min).powi(3) * tau * tau / width
}

/// 4π n_S² τ/|Δω| on the band-averaged QFI.
pub fn qfi_bound(n_s: usize, width: f64, tau: f64) -> f64 {
    4.0 * PI * (n_s * n_s) as f64 * tau / width
}

/// 2π (n_S B_min)² T/|Δω| for classically modulated sensing.
pub fn csp_bound(n_s: usize, b_min: f64, width: f64, duration: f64) -> f64 {
    2.0 * PI * (n_s as f64 * b_min).powi(2) * duration / width
}

/// Step that keeps the central-difference error far below the 1% check.
pub fn default_fd_step(put: &ProtocolUnderTest) -> f64 {
    1e-3 / (put.n_s as f64 * put.duration.max(1e-12))
}

/// QFI in B at B = 0, from central differences of the final state.
///
/// Runs steps h and h/2 and returns the Richardson combination; fails with
/// [`Error::Residual`] when the two disagree by 1% or more.
pub fn qfi_estimate(put: &ProtocolUnderTest, omega: f64, phi: f64, h: f64) -> Result<f64> {
    finite(omega, "omega")?;
    finite(phi, "phase")?;
    finite(h, "step")?;
    if omega <= 0.0 || h <= 0.0 {
        return Err(Error::Invalid("need omega > 0 and h > 0".into()));
    }
    let z = put.z_sums();
    let psi = put.final_state_with(&z, 0.0, omega, phi);
    let fisher = |step: f64| {
        let d = (put.final_state_with(&z, step, omega, phi)
            - put.final_state_with(&z, -step, omega, phi))
            / C64::new(2.0 * step, 0.0);
        4.0 * (d.norm_squared() - psi.dotc(&d).norm_sqr())
    };
    let f1 = fisher(h);
    let f2 = fisher(0.5 * h);
    // scale of the largest attainable value, (2 n_S τ)²
    let floor = 1e-10 * (2.0 * put.n_s as f64 * put.duration).powi(2);
    let residual = (f1 - f2).abs() / f2.abs().max(floor).max(f64::MIN_POSITIVE);
    if residual >= 0.01 {
        return Err(Error::Residual(residual));
    }
    Ok(((4.0 * f2 - f1) / 3.0).max(0.0))
}

/// Band average of [`qfi_estimate`] over uniform ω and φ.
pub fn avg_qfi(
    put: &ProtocolUnderTest,
    band: (f64, f64),
    samples: usize,
    rng: &mut Rng,
) -> Result<Estimate> {
    check_band(band)?;
    let h = default_fd_step(put);
    let values = (0..samples)
        .map(|_| {
            let (w, phi) = draw_frequency_phase(band, rng);
            qfi_estimate(put, w, phi, h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&values))
}

/// Piecewise-constant modulation χ(t) with values in [−1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseModulation {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseModulation {
    /// `breaks` runs from 0 to the duration and has one more entry than `values`.
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::Invalid("need one more break than values".into()));
        }
        if breaks[0] != 0.0
            || breaks.windows(2).any(|w| !(w[1] > w[0]))
            || !breaks.iter().all(|b| b.is_finite())
        {
            return Err(Error::Invalid("breaks must increase from 0".into()));
        }
        if values.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Invalid(
                "modulation values must lie in [-1, 1]".into(),
            ));
        }
        Ok(PiecewiseModulation { breaks, values })
    }

    pub fn constant(value: f64, duration: f64) -> Result<Self> {
        PiecewiseModulation::new(vec![0.0, duration], vec![value])
    }

    /// Equal-length pieces with values uniform in [−1, 1].
    pub fn random(duration: f64, pieces: usize, rng: &mut Rng) -> Result<Self> {
        let pieces = pieces.max(1);
        let breaks = (0..=pieces)
            .map(|j| duration * j as f64 / pieces as f64)
            .collect();
        let values = (0..pieces).map(|_| rng.random_range(-1.0..=1.0)).collect();
        PiecewiseModulation::new(breaks, values)
    }

    pub fn duration(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// ∫₀^T χ(t) cos(ωt + φ) dt.
    pub fn overlap(&self, omega: f64, phi: f64) -> f64 {
        let prim = |t: f64| (omega * t + phi).sin() / omega;
        self.breaks
            .windows(2)
            .zip(&self.values)
            .map(|(e, v)| v * (prim(e[1]) - prim(e[0])))
            .sum()
    }
}

/// Average distinguishability of classically modulated sensors,
/// U = exp(−i Σᵢ θᵢ Zᵢ) with θᵢ = B_min ∫χᵢ(t) cos(ωt + φ) dt.
///
/// Each sample takes the worst initial state, ‖1 − U‖² = maxᵦ 4 sin²(Σᵢ bᵢθᵢ / 2)
/// over signs b, which dominates every fixed probe state.
pub fn csp_distinguishability(
    chis: &[PiecewiseModulation],
    b_min: f64,
    band: (f64, f64),
    samples: usize,
    rng: &mut Rng,
) -> Result<Estimate> {
    finite(b_min, "B_min")?;
    check_band(band)?;
    if chis.is_empty() || chis.len() > 16 {
        return Err(Error::Invalid(format!(
            "need 1..=16 modulations, got {}",
            chis.len()
        )));
    }
    let n = chis.len();
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let (w, phi) = draw_frequency_phase(band, rng);
            let theta: Vec<f64> = chis.iter().map(|c| b_min * c.overlap(w, phi)).collect();
            // sin² is even, so fixing b₀ = +1 covers every sign pattern
            (0..1usize << (n - 1))
                .map(|mask| {
                    let s: f64 = theta[0]
                        + theta[1..]
                            .iter()
                            .enumerate()
                            .map(|(i, t)| if (mask >> i) & 1 == 1 { -t } else { *t })
                            .sum::<f64>();
                    4.0 * (0.5 * s).sin().powi(2)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(Estimate::from_samples(&values))
}

/// Measured trace distance between evolutions with and without dissipation,
/// alongside the bound T Σⱼ ‖Lⱼ†Lⱼ‖.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladCheck {
    pub measured: f64,
    pub bound: f64,
    pub steps: usize,
}

impl LindbladCheck {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound + 1e-12
    }
}

/// Pure dephasing Lⱼ = √(Γ/2) Zⱼ on each of `n` qubits, so coherences decay at rate Γ.
pub fn dephasing_jumps(n: usize, gamma: f64) -> Vec<CMat> {
    let z = to_dense(&pauli_z());
    (0..n)
        .map(|j| {
            let mut op = CMat::identity(1, 1);
            for k in 0..n {
                op = kron(
                    &op,
                    &if k == j {
                        z.clone()
                    } else {
                        CMat::identity(2, 2)
                    },
                );
            }
            op * C64::new((0.5 * gamma).sqrt(), 0.0)
        })
        .collect()
}

/// Liouvillian on the row-major vectorization, using vec(AρB) = (A ⊗ Bᵀ) vec(ρ).
fn liouvillian(h: &CMat, jumps: &[CMat]) -> CMat {
    let d = h.nrows();
    let id = CMat::identity(d, d);
    let mut l = (kron(h, &id) - kron(&id, &h.transpose())) * C64::new(0.0, -1.0);
    for j in jumps {
        let jj = j.adjoint() * j;
        l += kron(j, &j.conjugate())
            - (kron(&jj, &id) + kron(&id, &jj.transpose())) * C64::new(0.5, 0.0);
    }
    l
}

/// Fourth-order commutator-free Magnus steps: two exponentials per step of
/// weighted Liouvillians at the Gauss points.
fn evolve_density<F: Fn(f64) -> CMat>(
    h: &F,
    jumps: &[CMat],
    duration: f64,
    rho0: &CMat,
    steps: usize,
) -> CMat {
    let d = rho0.nrows();
    let dt = duration / steps as f64;
    let r3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * r3) / 12.0, (3.0 + 2.0 * r3) / 12.0);
    let mut v = DVector::from_iterator(d * d, (0..d * d).map(|k| rho0[(k / d, k % d)]));
    for s in 0..steps {
        let t0 = s as f64 * dt;
        let l1 = liouvillian(&h(t0 + c1 * dt), jumps);
        let l2 = liouvillian(&h(t0 + c2 * dt), jumps);
        let first = (&l1 * C64::new(a2 * dt, 0.0) + &l2 * C64::new(a1 * dt, 0.0)).exp();
        let second = (l1 * C64::new(a1 * dt, 0.0) + l2 * C64::new(a2 * dt, 0.0)).exp();
        v = second * (first * v);
    }
    CMat::from_fn(d, d, |i, j| v[i * d + j])
}

/// Evolves ρ₀ under H(t) with and without the jump operators and compares
/// the results. Fourth-order Magnus steps of the Liouvillian, step count doubled
/// until the final state changes by less than 1e-8 in trace norm.
pub fn lindblad_bound_check<F: Fn(f64) -> CMat>(
    hamiltonian: F,
    jumps: &[CMat],
    duration: f64,
    rho0: &CMat,
) -> Result<LindbladCheck> {
    finite(duration, "duration")?;
    let d = rho0.nrows();
    if rho0.ncols() != d {
        return Err(Error::Dim(rho0.ncols(), d));
    }
    if d > 8 {
        return Err(Error::TooLarge(d.trailing_zeros() as usize));
    }
    if duration < 0.0 {
        return Err(Error::Invalid("duration must be nonnegative".into()));
    }
    for j in jumps {
        if j.nrows() != d || j.ncols() != d {
            return Err(Error::Dim(j.nrows(), d));
        }
    }
    let bound = duration
        * jumps
            .iter()
            .map(|j| crate::qdyn::spectral_norm(&(j.adjoint() * j)))
            .sum::<f64>();
    if duration == 0.0 {
        return Ok(LindbladCheck {
            measured: 0.0,
            bound,
            steps: 0,
        });
    }
    let opts = ConvergenceOpts {
        initial_steps: 16,
        tolerance: 1e-8,
        max_steps: 1 << 16,
    };
    let dist = |a: &CMat, b: &CMat| {
        trace_distance(a, b)
            .map(|t| 2.0 * t)
            .unwrap_or(f64::INFINITY)
    };
    let (closed, c1) = converge(
        |n| Ok(evolve_density(&hamiltonian, &[], duration, rho0, n)),
        dist,
        opts,
    )?;
    let (open, c2) = converge(
        |n| Ok(evolve_density(&hamiltonian, jumps, duration, rho0, n)),
        dist,
        opts,
    )?;
    let measured = trace_distance(&closed, &open)?;
    Ok(LindbladCheck {
        measured,
        bound,
        steps: c1.steps.max(c2.steps),
    })
}
