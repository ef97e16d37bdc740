//! Elementary sensing unit: the bump-ramped transverse coupling that maps a
//! signal near bin center ω_k to a φ-independent rotation e^{−iθ_k Z}.
//!
//! Three propagators are provided for one block U^{(k)}:
//! - [`simulate_esu`]: the lab-frame Hamiltonian, integrated directly;
//! - [`simulate_esu_rwa`]: the rotating-wave Hamiltonian, integrated directly;
//! - [`simulate_esu_adiabatic`]: the rotating-wave dynamics in the adiabatic
//!   frame, with a Filon-type Magnus step whose cost does not grow with δT.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::qdyn::{
    converge, evolve_converged_qubit, expm_qubit, hadamard, pauli_x, pauli_y, rx, rz,
    spectral_norm_qubit, ControlSchedule, Convergence, ConvergenceOpts, Mat2, UnitaryMatrix,
};
use crate::signal::{bump_chi, bump_chi_prime, Modulation};
use crate::{finite, quad, Error, Result, C64};

/// One ESU block: signal at `signal_frequency` seen from the bin centered at
/// `bin_center`, ramped over `duration` with a `pulses`-interval schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsuParams {
    pub strength: f64,
    pub duration: f64,
    pub bin_center: f64,
    pub signal_frequency: f64,
    pub pulses: u32,
}

impl EsuParams {
    pub fn new(
        strength: f64,
        duration: f64,
        bin_center: f64,
        signal_frequency: f64,
        pulses: u32,
    ) -> Result<Self> {
        finite(strength, "strength")?;
        finite(duration, "duration")?;
        finite(bin_center, "bin_center")?;
        finite(signal_frequency, "signal_frequency")?;
        if strength < 0.0 || duration <= 0.0 || signal_frequency <= 0.0 {
            return Err(Error::Invalid("need B >= 0, T > 0, omega > 0".into()));
        }
        let d = bin_center - signal_frequency;
        if d == 0.0 || d.abs() > signal_frequency {
            return Err(Error::Invalid(format!(
                "detuning {d} must satisfy 0 < |delta| <= omega"
            )));
        }
        Ok(EsuParams {
            strength,
            duration,
            bin_center,
            signal_frequency,
            pulses,
        })
    }

    /// δ_k = ω_k − ω.
    pub fn detuning(&self) -> f64 {
        self.bin_center - self.signal_frequency
    }

    /// Sweep coordinate x = (|δ|³T/B²)^{1/2}.
    pub fn adiabaticity(&self) -> f64 {
        (self.detuning().abs().powi(3) * self.duration).sqrt() / self.strength
    }
}

/// sup |dχ/ds| of the bump.
pub fn bump_lipschitz() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        let n = 200_000;
        (1..n)
            .map(|i| bump_chi_prime(i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    })
}

/// Pulse-construction error bound (BT²(λ + ω) + Bω_kT²/2)/P with λ the
/// Lipschitz constant of χ in time.
pub fn schedule_error_bound(p: &EsuParams, pulses: u32) -> f64 {
    let t = p.duration;
    let lambda = bump_lipschitz() / t;
    (p.strength * t * t * (lambda + p.signal_frequency)
        + 0.5 * p.strength * p.bin_center.abs() * t * t)
        / pulses as f64
}

/// Gate sequence realizing the ESU from the bare coupling B cos(ωt + φ)·Z.
///
/// Each interval [t_j, t_{j+1}] of length T/P is sandwiched by the frame
/// R(t_j) = e^{iω_k t_j Z/2}·H and carries an X pair at
/// t_j + (1 + χ(t_j))Δt/2 and t_{j+1}, so the averaged coupling is χ(t_j).
/// Gates falling on the same timestamp are merged.
pub fn build_esu_schedule(p: &EsuParams) -> Result<ControlSchedule> {
    if p.pulses < 2 {
        return Err(Error::Invalid(format!(
            "pulse resolution {} must be >= 2",
            p.pulses
        )));
    }
    let n = p.pulses as usize;
    let t = p.duration;
    let dt = t / n as f64;
    let frame = |time: f64| rz(-0.5 * p.bin_center * time) * hadamard();
    let step = rx(0.5 * p.bin_center * dt);
    let x = pauli_x();
    // (time, gate) in application order
    let mut raw: Vec<(f64, Mat2)> = vec![(0.0, frame(0.0).adjoint())];
    for j in 0..n {
        let tj = j as f64 * dt;
        let chi = bump_chi(j as f64 / n as f64)?;
        let s = tj + 0.5 * (1.0 + chi) * dt;
        let end = if j + 1 == n { t } else { (j + 1) as f64 * dt };
        let flipped = s < end;
        if flipped {
            raw.push((s, x));
        }
        let close = if flipped { x } else { Mat2::identity() };
        let gate = if j + 1 == n {
            frame(tj) * close
        } else {
            step * close
        };
        raw.push((end, gate));
    }
    let tol = 1e-12 * t;
    let mut merged: Vec<(f64, Mat2)> = Vec::with_capacity(raw.len());
    for (time, g) in raw {
        match merged.last_mut() {
            Some((last, acc)) if (time - *last).abs() <= tol => *acc = g * *acc,
            _ => merged.push((time, g)),
        }
    }
    let gates = merged
        .into_iter()
        .map(|(time, g)| Ok((time.min(t), UnitaryMatrix::from_qubit(&g)?)))
        .collect::<Result<Vec<_>>>()?;
    ControlSchedule::new(t, gates, Modulation::Constant)
}

fn transverse(x: f64, y: f64) -> Mat2 {
    Mat2::new(
        C64::new(0.0, 0.0),
        C64::new(x, -y),
        C64::new(x, y),
        C64::new(0.0, 0.0),
    )
}

/// Fitted constant of ‖U_lab − U_RWA‖ ≤ C_RWA·(B/ω)(1 + BT), the maximum
/// ratio over B ∈ [0.5, 2], ω ∈ [20, 200], T ∈ [2, 6] rounded up.
pub const C_RWA: f64 = 1.2e-5;

/// C_RWA·(B/ω)(1 + BT).
pub fn rwa_error_bound(strength: f64, omega: f64, duration: f64) -> f64 {
    C_RWA * strength / omega * (1.0 + strength * duration)
}

/// Lab-frame H_ESU(t) = Bχ(t/T)cos(ωt+φ)(cos(ω_k t)X − sin(ω_k t)Y).
pub fn esu_hamiltonian(p: &EsuParams, phi: f64, t: f64) -> Mat2 {
    let chi = bump_chi((t / p.duration).clamp(0.0, 1.0)).unwrap_or(0.0);
    let f = p.strength * chi * (p.signal_frequency * t + phi).cos();
    let (s, c) = (p.bin_center * t).sin_cos();
    transverse(f * c, -f * s)
}

/// Rotating-frame H̃(t) = (δ/2)Z + (Bχ/2)(cos φ X + sin φ Y).
pub fn esu_rwa_hamiltonian(p: &EsuParams, phi: f64, t: f64) -> Mat2 {
    let chi = bump_chi((t / p.duration).clamp(0.0, 1.0)).unwrap_or(0.0);
    let b = 0.5 * p.strength * chi;
    let d = C64::new(0.5 * p.detuning(), 0.0);
    transverse(b * phi.cos(), b * phi.sin())
        + Mat2::new(d, C64::new(0.0, 0.0), C64::new(0.0, 0.0), -d)
}

/// Lab-frame block U^{(k)}(T), converged by step doubling.
pub fn simulate_esu(p: &EsuParams, phi: f64) -> Result<UnitaryMatrix> {
    Ok(simulate_esu_with(p, phi, ConvergenceOpts::default())?.0)
}

pub fn simulate_esu_with(
    p: &EsuParams,
    phi: f64,
    opts: ConvergenceOpts,
) -> Result<(UnitaryMatrix, Convergence)> {
    finite(phi, "phi")?;
    let (u, c) = evolve_converged_qubit(|t| esu_hamiltonian(p, phi, t), p.duration, opts)?;
    Ok((UnitaryMatrix::from_qubit(&u)?, c))
}

/// Rotating-wave block e^{iδTZ/2}·Ũ(T), integrated directly.
pub fn simulate_esu_rwa(
    p: &EsuParams,
    phi: f64,
    opts: ConvergenceOpts,
) -> Result<(Mat2, Convergence)> {
    finite(phi, "phi")?;
    let (u, c) = evolve_converged_qubit(|t| esu_rwa_hamiltonian(p, phi, t), p.duration, opts)?;
    Ok((rz(-0.5 * p.detuning() * p.duration) * u, c))
}

/// Mixing angle α = ½atan(b/δ) and its time derivative at s = t/T.
fn mixing(p: &EsuParams, s: f64) -> (f64, f64, f64) {
    let d = p.detuning();
    let chi = bump_chi(s.clamp(0.0, 1.0)).unwrap_or(0.0);
    let r = p.strength * chi / d;
    // excess over δ/2, (δ/2)(√(1+r²) − 1) without cancellation
    let energy = 0.5 * d * r * r / (1.0 + (1.0 + r * r).sqrt());
    let rdot = p.strength * bump_chi_prime(s) / (p.duration * d);
    (energy, 0.5 * r.atan(), 0.5 * rdot / (1.0 + r * r))
}

/// ∫₀^h (a + q s)e^{ics} ds.
fn linear_phase_integral(a: f64, q: f64, c: f64, h: f64) -> C64 {
    let z = c * h;
    let i = C64::new(0.0, 1.0);
    if z.abs() < 1e-3 {
        let i0 = h * (C64::new(1.0, 0.0) + i * (z / 2.0) - z * z / 6.0 - i * (z * z * z / 24.0));
        let i1 =
            h * h * (C64::new(0.5, 0.0) + i * (z / 3.0) - z * z / 8.0 - i * (z * z * z / 30.0));
        return i0 * a + i1 * q;
    }
    let e = C64::from_polar(1.0, z);
    let ic = i * c;
    let i0 = (e - 1.0) / ic;
    let i1 = e * h / ic - (e - 1.0) / (ic * ic);
    i0 * a + i1 * q
}

/// Rotating-wave block from `steps` Magnus steps in the adiabatic frame.
///
/// With Φ(t) = ∫E, the interaction-picture Hamiltonian is
/// −α̇(X sin 2Φ + Y cos 2Φ); per step, α̇ and Φ are taken linear and
/// J = ∫α̇e^{2iΦ} is integrated exactly, so the step may span many
/// periods of the fast phase.
pub fn esu_adiabatic_steps(p: &EsuParams, phi: f64, steps: usize) -> Result<Mat2> {
    finite(phi, "phi")?;
    if steps == 0 {
        return Err(Error::Invalid("steps must be >= 1".into()));
    }
    let t = p.duration;
    let h = t / steps as f64;
    let d = p.detuning();
    let mut w = Mat2::identity();
    // Φ = δt/2 + excess; only the excess is accumulated so that rounding
    // does not grow with δT
    let mut excess = 0.0;
    let (mut e_a, _, mut ad_a) = mixing(p, 0.0);
    for j in 0..steps {
        let s_a = j as f64 / steps as f64;
        let s_b = (j + 1) as f64 / steps as f64;
        let (e_m, _, _) = mixing(p, 0.5 * (s_a + s_b));
        let (e_b, _, ad_b) = mixing(p, s_b);
        let dex = (e_a + 4.0 * e_m + e_b) * h / 6.0;
        let c = d + 2.0 * dex / h;
        let phase = (d * s_a * t).rem_euclid(std::f64::consts::TAU) + 2.0 * excess;
        let jint =
            C64::from_polar(1.0, phase) * linear_phase_integral(ad_a, (ad_b - ad_a) / h, c, h);
        if jint.norm() > 0.0 {
            let gen = -(pauli_x() * C64::new(jint.im, 0.0) + pauli_y() * C64::new(jint.re, 0.0));
            w = expm_qubit(&gen, 1.0) * w;
        }
        excess += dex;
        e_a = e_b;
        ad_a = ad_b;
    }
    // rz(Φ(T))·W followed by the frame factor rz(−δT/2) leaves rz(excess)·W
    let u0 = rz(excess) * w;
    let frame = rz(0.5 * phi);
    Ok(frame * u0 * frame.adjoint())
}

/// [`esu_adiabatic_steps`] converged by step doubling.
pub fn simulate_esu_adiabatic(
    p: &EsuParams,
    phi: f64,
    opts: ConvergenceOpts,
) -> Result<(Mat2, Convergence)> {
    converge(
        |n| esu_adiabatic_steps(p, phi, n),
        |a, b| spectral_norm_qubit(&(a - b)),
        opts,
    )
}

/// (δ/2)∫₀ᵀ √(1 + (Bχ/δ)²) dt − δT/2.
pub fn theta_dynamical(p: &EsuParams) -> f64 {
    let d = p.detuning();
    let r = p.strength / d;
    let f = |s: f64| {
        let z = r * bump_chi(s.clamp(0.0, 1.0)).unwrap_or(0.0);
        let z2 = z * z;
        // √(1+z²) − 1 without cancellation
        z2 / (1.0 + (1.0 + z2).sqrt())
    };
    let scale = r * r * crate::signal::bump_mean_sq();
    0.5 * d * p.duration * quad::integrate(f, 0.0, 1.0, 1e-12, 1e-16 * scale)
}

/// (θ*, ε) with ε = min over θ and global phase of ‖U − e^{−iθZ}‖.
///
/// After scaling U to unit determinant, ε = √(2(1 − |U₀₀|)) and θ* = −arg U₀₀.
/// Global phase identifies θ with θ + π, so θ* is reported in (−π/2, π/2].
pub fn esu_error(u: &Mat2) -> (f64, f64) {
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let v = u * det.sqrt().inv();
    let mut a = v[(0, 0)];
    let eps = (2.0 * (1.0 - a.norm()).max(0.0)).sqrt();
    if a.norm() < 1e-14 {
        return (0.0, eps);
    }
    if a.re < 0.0 || (a.re == 0.0 && a.im > 0.0) {
        a = -a;
    }
    (-a.arg(), eps)
}

/// ‖U − e^{−iθZ}‖ for a given θ, without global-phase freedom.
pub fn distance_to_rotation(u: &Mat2, theta: f64) -> f64 {
    spectral_norm_qubit(&(u - rz(theta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(b: f64, t: f64, wk: f64, w: f64, pulses: u32) -> EsuParams {
        EsuParams::new(b, t, wk, w, pulses).unwrap()
    }

    #[test]
    fn error_of_known_unitaries() {
        let (th, e) = esu_error(&rz(0.3));
        assert!((th - 0.3).abs() < 1e-14 && e < 1e-7);
        let (_, e) = esu_error(&pauli_x());
        assert!((e - 2f64.sqrt()).abs() < 1e-14);
        let u = rz(-0.7) * C64::from_polar(1.0, 1.234);
        let (th, e) = esu_error(&u);
        assert!((th + 0.7).abs() < 1e-12 && e < 1e-7);
    }

    #[test]
    fn zero_strength_is_identity() {
        let p = params(0.0, 3.0, 11.0, 10.0, 64);
        let u = simulate_esu(&p, 0.4).unwrap().qubit();
        assert!(spectral_norm_qubit(&(u - Mat2::identity())) < 1e-12);
        assert_eq!(theta_dynamical(&p), 0.0);
    }

    #[test]
    fn schedule_is_strictly_ordered() {
        let p = params(0.3, 2.0, 11.0, 10.0, 50);
        let s = build_esu_schedule(&p).unwrap();
        assert!(s.gates().windows(2).all(|w| w[0].0 < w[1].0));
        assert!(s.gates().len() <= 2 * 50 + 1);
    }

    #[test]
    fn adiabatic_integrator_matches_rwa() {
        let p = params(0.5, 60.0, 11.0, 10.0, 2);
        let opts = ConvergenceOpts {
            initial_steps: 256,
            tolerance: 1e-10,
            max_steps: 1 << 22,
        };
        let (a, _) = simulate_esu_rwa(&p, 0.9, opts).unwrap();
        let (b, _) = simulate_esu_adiabatic(&p, 0.9, opts).unwrap();
        assert!(
            spectral_norm_qubit(&(a - b)) < 1e-7,
            "{}",
            spectral_norm_qubit(&(a - b))
        );
    }
}
