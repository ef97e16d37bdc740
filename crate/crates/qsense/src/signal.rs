//! Modulation profiles, sensing problems and filter functions.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{finite, quad, Error, Result};

/// Coupling modulation χ(t) applied over a sensing window starting at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulation {
    Constant,
    /// CPMG square wave locked to `target` with `pulses` π-pulses.
    CpmgSquare {
        target: f64,
        pulses: u32,
    },
    /// Smooth bump over `[0, duration]`.
    Bump {
        duration: f64,
    },
}

impl Modulation {
    pub fn cpmg(target: f64, pulses: u32) -> Result<Self> {
        finite(target, "cpmg target")?;
        if target <= 0.0 {
            return Err(Error::Invalid("cpmg target must be positive".into()));
        }
        if pulses < 2 || !pulses.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "cpmg pulse count {pulses} must be even and >= 2"
            )));
        }
        Ok(Modulation::CpmgSquare { target, pulses })
    }

    pub fn bump(duration: f64) -> Result<Self> {
        finite(duration, "bump duration")?;
        if duration <= 0.0 {
            return Err(Error::Invalid("bump duration must be positive".into()));
        }
        Ok(Modulation::Bump { duration })
    }

    /// Length of the window the profile is defined on; `None` for constant.
    pub fn duration(&self) -> Option<f64> {
        match *self {
            Modulation::Constant => None,
            Modulation::CpmgSquare { target, pulses } => Some(pulses as f64 * PI / target),
            Modulation::Bump { duration } => Some(duration),
        }
    }

    /// Pulse times of the square wave, `t_j = (j - 1/2)π/ω_t` for j = 1..P.
    pub fn switch_times(&self) -> Vec<f64> {
        match *self {
            Modulation::CpmgSquare { target, pulses } => (1..=pulses)
                .map(|j| (j as f64 - 0.5) * PI / target)
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Modulation::Constant => 1.0,
            Modulation::CpmgSquare { target, pulses } => {
                let total = pulses as f64 * PI / target;
                if !(0.0..=total).contains(&t) {
                    return 0.0;
                }
                // number of pulses at or before t
                let n = ((t * target / PI) + 0.5).floor().clamp(0.0, pulses as f64) as u32;
                if n.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            Modulation::Bump { duration } => {
                if !(0.0..=duration).contains(&t) {
                    0.0
                } else {
                    bump_chi((t / duration).clamp(0.0, 1.0)).unwrap_or(0.0)
                }
            }
        }
    }
}

/// Problem instance: detect B ≥ B_min at some ω ∈ [ω_min, ω_max] using n_S sensors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingProblem {
    pub b_min: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_s: u32,
}

impl SensingProblem {
    pub fn new(b_min: f64, omega_min: f64, omega_max: f64, n_s: u32) -> Result<Self> {
        finite(b_min, "b_min")?;
        finite(omega_min, "omega_min")?;
        finite(omega_max, "omega_max")?;
        if !(b_min > 0.0 && omega_min >= b_min && omega_max > omega_min) {
            return Err(Error::Invalid(format!(
                "need omega_max > omega_min >= b_min > 0, got b_min={b_min}, band=[{omega_min}, {omega_max}]"
            )));
        }
        if n_s == 0 {
            return Err(Error::Invalid("n_s must be positive".into()));
        }
        Ok(SensingProblem {
            b_min,
            omega_min,
            omega_max,
            n_s,
        })
    }

    pub fn width(&self) -> f64 {
        self.omega_max - self.omega_min
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.omega_min && omega <= self.omega_max
    }
}

/// Normalized CPMG filter function χ̃(ω) for `pulses` π-pulses locked to `target`.
///
/// Equals (1/T)∫₀ᵀ e^{iω(t−T/2)} χ(t) dt. Near odd harmonics of the target the
/// sec factor is rewritten as a Dirichlet ratio in the offset from the
/// harmonic, so no cancellation occurs.
pub fn filter_function(pulses: u32, target: f64, omega: f64) -> Result<f64> {
    finite(target, "target")?;
    finite(omega, "omega")?;
    if pulses < 2 || !pulses.is_multiple_of(2) {
        return Err(Error::Invalid(format!(
            "pulse count {pulses} must be even and >= 2"
        )));
    }
    if target <= 0.0 || omega <= 0.0 {
        return Err(Error::Invalid("frequencies must be positive".into()));
    }
    let p = pulses as f64;
    let x = omega / target;
    let a = 0.5 * PI * x;
    let c = a.cos();
    if c.abs() > 1e-3 {
        let pa = p * a;
        return Ok(pa.sin() / pa * (1.0 - 1.0 / c));
    }
    // near a = (2m+1)π/2 + e: sin(Pa)/cos(a) = (−1)^{k+m+1} sin(Pe)/sin(e), k = P(2m+1)/2
    let m = ((x - 1.0) / 2.0).round();
    let e = 0.5 * PI * (x - (2.0 * m + 1.0));
    let k = (pulses as u64 / 2) * (2 * m as u64 + 1);
    let sign = if (k + m as u64 + 1).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    let ratio = if e == 0.0 { p } else { (p * e).sin() / e.sin() };
    Ok((c - 1.0) / (p * a) * sign * ratio)
}

/// Ramsey filter sin(ωT/2)/(ωT/2).
pub fn ramsey_filter(omega: f64, duration: f64) -> f64 {
    let u = 0.5 * omega * duration;
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// Bump profile e^{−1/(s(1−s))}; exactly zero once the exponent passes −708.
pub fn bump_chi(s: f64) -> Result<f64> {
    finite(s, "s")?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Invalid(format!("bump argument {s} outside [0, 1]")));
    }
    let q = s * (1.0 - s);
    if q < 1.0 / 708.0 {
        Ok(0.0)
    } else {
        Ok((-1.0 / q).exp())
    }
}

/// dχ/ds of the bump.
pub fn bump_chi_prime(s: f64) -> f64 {
    let q = s * (1.0 - s);
    if !(0.0..=1.0).contains(&s) || q < 1.0 / 708.0 {
        return 0.0;
    }
    (-1.0 / q).exp() * (1.0 - 2.0 * s) / (q * q)
}

fn bump_point(s: f64) -> f64 {
    bump_chi(s.clamp(0.0, 1.0)).unwrap_or(0.0)
}

/// ∫₀¹ χ(s) ds.
pub fn bump_mean() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| quad::integrate(bump_point, 0.0, 1.0, 1e-14, 1e-18))
}

/// ∫₀¹ χ(s)² ds.
pub fn bump_mean_sq() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| quad::integrate(|s| bump_point(s).powi(2), 0.0, 1.0, 1e-14, 1e-20))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_values() {
        assert_eq!(bump_chi(0.0).unwrap(), 0.0);
        assert_eq!(bump_chi(1.0).unwrap(), 0.0);
        assert!((bump_chi(0.5).unwrap() - (-4.0f64).exp()).abs() < 1e-16);
        assert!(bump_chi(1.2).is_err());
    }

    #[test]
    fn resonance_limit() {
        for &p in &[2u32, 4, 6, 8, 20] {
            let v = filter_function(p, 1.0, 1.0).unwrap();
            let sign = if (p / 2) % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - sign * 2.0 / PI).abs() < 1e-12, "P={p} v={v}");
            // continuity across the switch between the two evaluation branches
            let near = filter_function(p, 1.0, 1.0 + 0.64e-3).unwrap();
            let far = filter_function(p, 1.0, 1.0 + 0.65e-3).unwrap();
            assert!((near - far).abs() < 1e-4 * p as f64);
        }
    }

    #[test]
    fn cpmg_profile() {
        let m = Modulation::cpmg(2.0, 4).unwrap();
        let t = m.switch_times();
        assert_eq!(t.len(), 4);
        assert_eq!(m.value(0.1), 1.0);
        assert_eq!(m.value(t[0] + 1e-9), -1.0);
        assert_eq!(m.value(t[1] + 1e-9), 1.0);
        assert_eq!(m.value(m.duration().unwrap() - 1e-9), 1.0);
        assert!(Modulation::cpmg(2.0, 3).is_err());
    }

    #[test]
    fn bump_integrals() {
        assert!((bump_mean() - 7.029_858_406_6e-3).abs() < 1e-12);
        assert!((bump_mean_sq() - 9.698_664_153e-5).abs() < 1e-13);
    }

    #[test]
    fn resonance_branch_matches_sine_sum() {
        for &pulses in &[8u32, 40, 1000] {
            let p = pulses as f64;
            for &m in &[0.0, 1.0, 2.0] {
                for &off in &[0.0, 1e-7, -3e-5, 4e-4] {
                    let x: f64 = 2.0 * m + 1.0 + off;
                    let a = 0.5 * PI * x;
                    let mut sum = 0.0;
                    for k in 0..pulses / 2 {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        sum += sign * ((p - 1.0 - 2.0 * k as f64) * a).sin();
                    }
                    let want = (a.cos() - 1.0) / (p * a) * 2.0 * sum;
                    let got = filter_function(pulses, 1.0, x).unwrap();
                    assert!(
                        (got - want).abs() < 1e-10,
                        "P={pulses} x={x}: {got} vs {want}"
                    );
                }
            }
        }
    }
}
