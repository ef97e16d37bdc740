//! Conventional detection: the CPMG subroutine, the Ramsey variant for
//! quasi-static signals, and the binned linear scan over a band.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::qdyn::{propagate_z_commuting, AcSignal};
use crate::rng::Rng;
use crate::signal::{Modulation, SensingProblem};
use crate::{finite, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub label: String,
    pub duration: f64,
    pub outcome: Option<bool>,
}

/// Result of a sensing protocol run with its time accounting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub detected: bool,
    pub elapsed_sensing_time: f64,
    pub transcript: Vec<TranscriptEntry>,
}

impl ProtocolOutcome {
    pub fn record(&mut self, label: impl Into<String>, duration: f64, outcome: Option<bool>) {
        self.elapsed_sensing_time += duration;
        self.transcript.push(TranscriptEntry {
            label: label.into(),
            duration,
            outcome,
        });
    }

    /// Appends another run's transcript; detection is OR-ed.
    pub fn extend(&mut self, other: ProtocolOutcome) {
        self.detected |= other.detected;
        self.elapsed_sensing_time += other.elapsed_sensing_time;
        self.transcript.extend(other.transcript);
    }

    /// True iff some checking measurement in the transcript returned 1.
    pub fn any_yes(&self) -> bool {
        self.transcript.iter().any(|e| e.outcome == Some(true))
    }
}

/// Pulse count, duration and half-width of one CPMG run at `target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpmgPlan {
    pub target: f64,
    pub pulses: u32,
    pub duration: f64,
    /// Bin width β = (ω_t/2)/⌈ω_t/B_min⌉.
    pub beta: f64,
}

pub fn cpmg_plan(b_min: f64, target: f64) -> Result<CpmgPlan> {
    finite(b_min, "b_min")?;
    finite(target, "target")?;
    if b_min <= 0.0 || target <= 0.0 {
        return Err(Error::Invalid("b_min and target must be positive".into()));
    }
    let n = (target / b_min).ceil().max(1.0);
    if n > u32::MAX as f64 / 2.0 {
        return Err(Error::Invalid("target/b_min too large".into()));
    }
    Ok(CpmgPlan {
        target,
        pulses: 2 * n as u32,
        duration: 2.0 * PI / target * n,
        beta: 0.5 * target / n,
    })
}

/// Runs the CPMG detection subroutine: M iterations of random wait, CPMG
/// phase accumulation and a Bernoulli readout with p = sin²θ.
pub fn cpmg_subroutine(
    b_min: f64,
    target: f64,
    signal: Option<&AcSignal>,
    m: u32,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    let plan = cpmg_plan(b_min, target)?;
    if target - plan.beta / 2.0 <= b_min {
        return Err(Error::Precondition(format!(
            "target - beta/2 = {} must exceed b_min = {b_min}",
            target - plan.beta / 2.0
        )));
    }
    if m == 0 {
        return Err(Error::Invalid("M must be >= 1".into()));
    }
    run_cpmg(b_min, &plan, signal, m, false, rng)
}

/// CPMG iterations without the window precondition; the caller guarantees
/// every frequency it wants covered is at least `b_min`.
pub(crate) fn run_cpmg(
    b_min: f64,
    plan: &CpmgPlan,
    signal: Option<&AcSignal>,
    m: u32,
    stop_on_yes: bool,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    let modulation = Modulation::CpmgSquare {
        target: plan.target,
        pulses: plan.pulses,
    };
    let max_wait = 2.0 * PI / b_min;
    let mut out = ProtocolOutcome::default();
    let mut clock = 0.0;
    for _ in 0..m {
        let wait = rng.random::<f64>() * max_wait;
        clock += wait;
        out.record("wait", wait, None);
        let theta = match signal {
            Some(s) => {
                propagate_z_commuting(&s.delayed(clock), 1.0, (0.0, plan.duration), &modulation)?
            }
            None => 0.0,
        };
        let p = theta.sin().powi(2);
        let z = rng.random::<f64>() < p;
        clock += plan.duration;
        out.record("cpmg", plan.duration, Some(z));
        if z {
            out.detected = true;
            if stop_on_yes {
                break;
            }
        }
    }
    Ok(out)
}

/// Probability sin²θ for one iteration with a given wait, phase taken from `signal`.
pub fn cpmg_iteration_probability(plan: &CpmgPlan, signal: &AcSignal, wait: f64) -> Result<f64> {
    let modulation = Modulation::CpmgSquare {
        target: plan.target,
        pulses: plan.pulses,
    };
    let theta = propagate_z_commuting(
        &signal.delayed(wait),
        1.0,
        (0.0, plan.duration),
        &modulation,
    )?;
    Ok(theta.sin().powi(2))
}

/// Ramsey protocol for ω_min < ω ≤ B_min: random wait in [0, 2π/ω_min],
/// free evolution for π/B_min, readout with p = sin²θ.
pub fn quasi_static_solve(
    b_min: f64,
    omega_min: f64,
    signal: Option<&AcSignal>,
    m: u32,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    finite(b_min, "b_min")?;
    finite(omega_min, "omega_min")?;
    if b_min <= 0.0 || omega_min <= 0.0 || m == 0 {
        return Err(Error::Invalid(
            "b_min, omega_min and M must be positive".into(),
        ));
    }
    if let Some(s) = signal {
        if !(s.angular_frequency > omega_min && s.angular_frequency <= b_min) {
            return Err(Error::Precondition(format!(
                "signal frequency {} outside ({omega_min}, {b_min}]",
                s.angular_frequency
            )));
        }
    }
    run_ramsey(b_min, omega_min, signal, m, false, rng)
}

pub(crate) fn run_ramsey(
    b_min: f64,
    omega_min: f64,
    signal: Option<&AcSignal>,
    m: u32,
    stop_on_yes: bool,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    let duration = PI / b_min;
    let max_wait = 2.0 * PI / omega_min;
    let mut out = ProtocolOutcome::default();
    let mut clock = 0.0;
    for _ in 0..m {
        let wait = rng.random::<f64>() * max_wait;
        clock += wait;
        out.record("wait", wait, None);
        let theta = match signal {
            Some(s) => propagate_z_commuting(
                &s.delayed(clock),
                1.0,
                (0.0, duration),
                &Modulation::Constant,
            )?,
            None => 0.0,
        };
        let z = rng.random::<f64>() < theta.sin().powi(2);
        clock += duration;
        out.record("ramsey", duration, Some(z));
        if z {
            out.detected = true;
            if stop_on_yes {
                break;
            }
        }
    }
    Ok(out)
}

/// Scan settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Iterations per bin.
    pub m: u32,
    /// Stop at the first YES (both inside a bin and across bins).
    pub abort_on_detection: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            m: 7,
            abort_on_detection: true,
        }
    }
}

/// Bin geometry of the linear scan for one problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    /// Collective coupling n_S·B_min.
    pub b_eff: f64,
    /// Low-frequency sub-band handled by the Ramsey variant, if any.
    pub ramsey_band: Option<(f64, f64)>,
    pub beta: f64,
    pub centers: Vec<f64>,
}

/// Minimum of β(ω) = (ω/2)/⌈ω/b⌉ over [lo, hi] (an infimum on each plateau).
pub fn min_beta(b: f64, lo: f64, hi: f64) -> f64 {
    let first = (lo / b).ceil().max(1.0) as u64;
    let last = (hi / b).ceil().max(1.0) as u64;
    (first..=last)
        .map(|n| lo.max((n as f64 - 1.0) * b) / (2.0 * n as f64))
        .fold(f64::INFINITY, f64::min)
}

pub fn scan_plan(problem: &SensingProblem) -> ScanPlan {
    let b_eff = problem.n_s as f64 * problem.b_min;
    let lo = problem.omega_min.max(b_eff);
    let ramsey_band = if problem.omega_min < b_eff {
        Some((problem.omega_min, b_eff.min(problem.omega_max)))
    } else {
        None
    };
    if lo >= problem.omega_max {
        return ScanPlan {
            b_eff,
            ramsey_band,
            beta: 0.0,
            centers: Vec::new(),
        };
    }
    let beta = min_beta(b_eff, lo, problem.omega_max);
    let n = ((problem.omega_max - lo) / beta).ceil() as usize;
    let centers = (1..=n).map(|j| lo + (j as f64 - 0.5) * beta).collect();
    ScanPlan {
        b_eff,
        ramsey_band,
        beta,
        centers,
    }
}

/// Linear scan solving the detection problem with the CPMG subroutine on
/// every bin (and the Ramsey variant below the collective coupling).
pub fn scan_solve(
    problem: &SensingProblem,
    signal: Option<&AcSignal>,
    options: ScanOptions,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    if options.m == 0 {
        return Err(Error::Invalid("M must be >= 1".into()));
    }
    let plan = scan_plan(problem);
    let collective = signal.map(|s| s.scaled(problem.n_s as f64));
    let mut out = ProtocolOutcome::default();
    if let Some((lo, hi)) = plan.ramsey_band {
        let in_band = collective.filter(|s| s.angular_frequency > lo && s.angular_frequency <= hi);
        let run = run_ramsey(
            plan.b_eff,
            lo,
            in_band.as_ref(),
            options.m,
            options.abort_on_detection,
            rng,
        )?;
        out.extend(run);
        if out.detected && options.abort_on_detection {
            return Ok(out);
        }
    }
    for &center in &plan.centers {
        // elapsed time shifts the signal phase seen by later bins
        let seen = collective.map(|s| s.delayed(out.elapsed_sensing_time));
        let cp = cpmg_plan(plan.b_eff, center)?;
        let run = run_cpmg(
            plan.b_eff,
            &cp,
            seen.as_ref(),
            options.m,
            options.abort_on_detection,
            rng,
        )?;
        out.extend(run);
        if out.detected && options.abort_on_detection {
            break;
        }
    }
    Ok(out)
}

/// τ divided by (1/(n_S B_min))·⌈|Δω|/(n_S B_min)⌉.
pub fn scan_time_constant(problem: &SensingProblem, tau: f64) -> f64 {
    let b = problem.n_s as f64 * problem.b_min;
    tau / ((1.0 / b) * (problem.width() / b).ceil())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn plan_formulas() {
        let p = cpmg_plan(1.0, 3.5).unwrap();
        assert_eq!(p.pulses, 8);
        assert!((p.duration - 2.0 * PI / 3.5 * 4.0).abs() < 1e-14);
        assert!((p.beta - 3.5 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn precondition() {
        let mut r = seeded(1);
        assert!(matches!(
            cpmg_subroutine(1.0, 1.1, None, 3, &mut r),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn min_beta_is_lower_envelope() {
        let (b, lo, hi) = (1.0, 1.3, 7.9);
        let m = min_beta(b, lo, hi);
        let mut w = lo;
        while w <= hi {
            let beta = 0.5 * w / (w / b).ceil();
            assert!(beta >= m - 1e-12);
            w += 1e-3;
        }
    }

    #[test]
    fn transcript_sums() {
        let mut r = seeded(5);
        let s = AcSignal::new(2.0, 5.0, 0.3).unwrap();
        let out = cpmg_subroutine(1.0, 5.0, Some(&s), 7, &mut r).unwrap();
        let total: f64 = out.transcript.iter().map(|e| e.duration).sum();
        assert!((total - out.elapsed_sensing_time).abs() < 1e-12);
        assert_eq!(out.detected, out.any_yes());
    }
}
