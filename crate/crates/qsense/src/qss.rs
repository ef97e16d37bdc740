//! Search-based sensing: interleaved bin layouts, Grover search over a
//! sensing oracle, the sub-band pipeline with conventional verification, the
//! decomposition of a full problem into restricted instances, and the
//! dephasing-limited chunked variant.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conventional::{scan_solve, ProtocolOutcome, ScanOptions};
use crate::esu::{esu_error, rwa_error_bound, simulate_esu_adiabatic, theta_dynamical, EsuParams};
use crate::qdyn::{
    apply_block, block_propagator, rx, trace_distance, AcSignal, CMat, ConvergenceOpts, Mat2,
    UnitaryMatrix,
};
use crate::qsp::{
    approx_shifted_sign_capped, symmetrize, synth_phases, PolynomialApprox, QspPhases,
    DEFAULT_DEGREE_CAP,
};
use crate::rng::Rng;
use crate::signal::{bump_mean_sq, SensingProblem};
use crate::{finite, Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Odd,
    Even,
}

/// N bins over [ω_min, ω_min + 4Nβ), each made of two width-β quarters.
///
/// Bin k (0-based) of the odd layout covers quarters 4k and 4k+2 and is
/// centered at ω_min + (4k + 3/2)β; the even layout covers 4k+1 and 4k+3
/// with center ω_min + (4k + 5/2)β.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinLayout {
    pub omega_min: f64,
    pub beta: f64,
    pub n: usize,
    pub parity: Parity,
}

impl BinLayout {
    fn first_quarter(&self) -> usize {
        match self.parity {
            Parity::Odd => 0,
            Parity::Even => 1,
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        let offset = match self.parity {
            Parity::Odd => 1.5,
            Parity::Even => 2.5,
        };
        self.omega_min + (4.0 * k as f64 + offset) * self.beta
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.center(k)).collect()
    }

    /// Upper edge ω_min + 4Nβ of the padded band.
    pub fn omega_max(&self) -> f64 {
        self.omega_min + 4.0 * self.n as f64 * self.beta
    }

    /// The two half-open quarters making up bin k.
    pub fn intervals(&self, k: usize) -> [(f64, f64); 2] {
        let q = |i: usize| {
            let a = self.omega_min + i as f64 * self.beta;
            (a, a + self.beta)
        };
        let base = 4 * k + self.first_quarter();
        [q(base), q(base + 2)]
    }

    /// Bin containing ω, if any; the top edge of the band counts as inside.
    pub fn bin_of(&self, omega: f64) -> Option<usize> {
        let u = (omega - self.omega_min) / self.beta;
        let quarters = 4 * self.n;
        if !(u >= 0.0) || u > quarters as f64 {
            return None;
        }
        let q = (u.floor() as usize).min(quarters - 1);
        let r = q % 4;
        if r % 2 == self.first_quarter() {
            Some(q / 4)
        } else {
            None
        }
    }
}

/// Layout over [lo, hi] with N the next power of two ≥ (hi − lo)/(4β);
/// padding extends the band upward.
pub fn make_bins(lo: f64, hi: f64, beta: f64, parity: Parity) -> Result<BinLayout> {
    finite(lo, "lo")?;
    finite(hi, "hi")?;
    finite(beta, "beta")?;
    if !(beta > 0.0 && hi > lo) {
        return Err(Error::Invalid("need beta > 0 and hi > lo".into()));
    }
    let ratio = (hi - lo) / (4.0 * beta);
    if ratio < 1.0 - 1e-12 {
        return Err(Error::Precondition(format!(
            "band width {} below 4*beta = {}",
            hi - lo,
            4.0 * beta
        )));
    }
    let n = ((ratio - 1e-12).ceil().max(1.0) as usize).next_power_of_two();
    Ok(BinLayout {
        omega_min: lo,
        beta,
        n,
        parity,
    })
}

/// ⌊π√N/4⌋.
pub fn grover_iterations(n: usize) -> usize {
    (PI * (n as f64).sqrt() / 4.0).floor() as usize
}

/// Register distribution after ⌊π√N/4⌋ rounds of R_s·O from |s⟩ ⊗ |0⟩.
///
/// `oracle` acts on register ⊗ sensor with the sensor as the fast index.
pub fn grover_probabilities(oracle: &UnitaryMatrix) -> Result<Vec<f64>> {
    let dim = oracle.dim();
    let n = dim / 2;
    if !dim.is_multiple_of(2) || !n.is_power_of_two() {
        return Err(Error::Invalid(format!(
            "oracle dimension {dim} is not 2N with N a power of two"
        )));
    }
    let amp = 1.0 / (n as f64).sqrt();
    let mut v = nalgebra::DVector::from_fn(
        dim,
        |i, _| if i % 2 == 0 { C64::new(amp, 0.0) } else { ZERO },
    );
    for _ in 0..grover_iterations(n) {
        v = oracle.matrix() * v;
        for s in 0..2 {
            let mean = (0..n).map(|k| v[2 * k + s]).sum::<C64>() / n as f64;
            for k in 0..n {
                v[2 * k + s] = mean * 2.0 - v[2 * k + s];
            }
        }
    }
    Ok((0..n)
        .map(|k| v[2 * k].norm_sqr() + v[2 * k + 1].norm_sqr())
        .collect())
}

/// Samples the register after the Grover rounds.
pub fn grover_search(oracle: &UnitaryMatrix, rng: &mut Rng) -> Result<usize> {
    Ok(sample_index(&grover_probabilities(oracle)?, rng))
}

fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            return k;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Constants and targets of the search pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QssConfig {
    /// β = C_β·B_min·√(ln x).
    pub c_beta: f64,
    /// T = C_T·β/B_min².
    pub c_t: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    /// Dynamic range γ of the strength promise B ∈ [B_min, γB_min].
    pub gamma: f64,
    /// Grover searches per parity.
    pub repetitions: u32,
    /// Below x = |Δω|/B_min the sub-band is handed to the linear scan.
    pub x0: f64,
    /// CPMG iterations per verification bin.
    pub verify_iterations: u32,
    /// Stop after the first verified YES.
    pub abort_on_detection: bool,
    /// Fraction of the cos-angle gap used as the sign-approximant window.
    pub gap_margin: f64,
}

/// γ = √(19/18).
pub fn default_gamma() -> f64 {
    (19.0f64 / 18.0).sqrt()
}

impl Default for QssConfig {
    /// Marked angles capped at π/4 through C_T = π/(2I₂γ²), I₂ = ∫χ².
    fn default() -> Self {
        let gamma = default_gamma();
        QssConfig {
            c_beta: 20.0 * gamma,
            c_t: PI / (2.0 * bump_mean_sq() * gamma * gamma),
            eps1: 0.05,
            eps2: 0.05,
            eps3: 0.05,
            gamma,
            repetitions: 3,
            x0: 190.0,
            verify_iterations: 7,
            abort_on_detection: false,
            gap_margin: 0.9,
        }
    }
}

impl QssConfig {
    /// Marked angles reach π/2, doubling the cos-angle gap of the default.
    pub fn desk() -> Self {
        let d = QssConfig::default();
        QssConfig {
            c_t: 2.0 * d.c_t,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.c_beta, "c_beta"),
            (self.c_t, "c_t"),
            (self.eps1, "eps1"),
            (self.eps2, "eps2"),
            (self.eps3, "eps3"),
            (self.gamma, "gamma"),
            (self.x0, "x0"),
            (self.gap_margin, "gap_margin"),
        ] {
            finite(v, name)?;
            if v <= 0.0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.gamma <= 1.0 {
            return Err(Error::Invalid("gamma must exceed 1".into()));
        }
        if self.x0 <= 1.0 {
            return Err(Error::Invalid("x0 must exceed 1".into()));
        }
        if self.gap_margin > 1.0 {
            return Err(Error::Invalid("gap_margin must be at most 1".into()));
        }
        if self.repetitions == 0 || self.verify_iterations == 0 {
            return Err(Error::Invalid(
                "repetitions and verify_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything fixed before any signal is seen: layouts, ESU duration, the
/// shifted-sign polynomial and its phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QssPlan {
    pub b_min: f64,
    pub band: (f64, f64),
    pub x: f64,
    pub beta: f64,
    /// ESU duration T.
    pub duration: f64,
    pub odd: BinLayout,
    pub even: BinLayout,
    pub rounds: usize,
    /// |cos θ| ≤ .0 for marked bins and ≥ .1 for unmarked ones.
    pub cos_gap: (f64, f64),
    pub polynomial: PolynomialApprox,
    pub phases: QspPhases,
    pub config: QssConfig,
}

fn theta_at(strength: f64, detuning: f64, duration: f64) -> f64 {
    // θ depends on (B, δ, T) only; the carrier is a placeholder
    let carrier = 2.0 * detuning.abs();
    let p = EsuParams {
        strength,
        duration,
        bin_center: carrier + detuning,
        signal_frequency: carrier,
        pulses: 2,
    };
    theta_dynamical(&p).abs()
}

/// Builds the plan for AC_γ[B_min, [lo, hi]] (B_min already collective).
pub fn qss_plan(b_min: f64, band: (f64, f64), config: &QssConfig) -> Result<QssPlan> {
    config.validate()?;
    finite(b_min, "b_min")?;
    let (lo, hi) = band;
    if !(b_min > 0.0 && lo > 0.0 && hi > lo) {
        return Err(Error::Invalid("need b_min > 0 and 0 < lo < hi".into()));
    }
    let x = (hi - lo) / b_min;
    if x < config.x0 {
        return Err(Error::Precondition(format!(
            "x = {x} below x0 = {}",
            config.x0
        )));
    }
    let beta = config.c_beta * b_min * x.ln().sqrt();
    let odd = make_bins(lo, hi, beta, Parity::Odd)?;
    let even = make_bins(lo, hi, beta, Parity::Even)?;
    let duration = config.c_t * beta / (b_min * b_min);
    let g = config.gamma;
    let marked_lo = theta_at(b_min, 1.5 * beta, duration);
    let marked_hi = theta_at(g * b_min, 0.5 * beta, duration);
    let unmarked_hi = theta_at(g * b_min, 2.5 * beta, duration);
    let a = marked_lo.cos().abs().max(marked_hi.cos().abs());
    let b = unmarked_hi.cos();
    if !(b > a) {
        return Err(Error::Precondition(format!(
            "no angle gap: marked |cos| up to {a}, unmarked down to {b}"
        )));
    }
    let n = odd.n;
    let eps_qsp = config.eps1 * config.eps1 / (2.0 * n as f64);
    let x_star = 0.5 * (a + b);
    let delta = config.gap_margin * (b - a);
    let q = approx_shifted_sign_capped(x_star, delta, eps_qsp / 5.0, DEFAULT_DEGREE_CAP)?;
    let polynomial = symmetrize(&q)?;
    let phases = synth_phases(&polynomial)?;
    Ok(QssPlan {
        b_min,
        band,
        x,
        beta,
        duration,
        odd,
        even,
        rounds: grover_iterations(n),
        cos_gap: (a, b),
        polynomial,
        phases,
        config: *config,
    })
}

/// One sensor block per bin: U_k(φ = 0) with its measured distance to a
/// pure Z rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct EsuBlocks {
    pub blocks: Vec<Mat2>,
    pub eps_sa: Vec<f64>,
}

impl QssPlan {
    pub fn n(&self) -> usize {
        self.odd.n
    }

    pub fn layout(&self, parity: Parity) -> &BinLayout {
        match parity {
            Parity::Odd => &self.odd,
            Parity::Even => &self.even,
        }
    }

    /// Number of ESU calls per oracle, L.
    pub fn degree(&self) -> usize {
        self.polynomial.degree()
    }

    /// Sensing time of one search, ⌊π√N/4⌋·L·T.
    pub fn search_time(&self) -> f64 {
        self.rounds as f64 * self.degree() as f64 * self.duration
    }

    /// Per-bin ESU blocks for `signal` (identity when absent or B = 0).
    pub fn esu_blocks(&self, parity: Parity, signal: Option<&AcSignal>) -> Result<EsuBlocks> {
        let layout = self.layout(parity);
        let n = layout.n;
        let Some(s) = signal.filter(|s| s.strength > 0.0) else {
            return Ok(EsuBlocks {
                blocks: vec![Mat2::identity(); n],
                eps_sa: vec![0.0; n],
            });
        };
        let mut blocks = Vec::with_capacity(n);
        let mut eps_sa = Vec::with_capacity(n);
        for center in layout.centers() {
            let p = EsuParams {
                strength: s.strength,
                duration: self.duration,
                bin_center: center,
                signal_frequency: s.angular_frequency,
                pulses: 2,
            };
            let u = if p.detuning() == 0.0 {
                // on-center signals only occur outside the promise; treat as unmarked identity
                Mat2::identity()
            } else {
                simulate_esu_adiabatic(&p, 0.0, ConvergenceOpts::default())?.0
            };
            eps_sa.push(esu_error(&u).1);
            blocks.push(u);
        }
        Ok(EsuBlocks { blocks, eps_sa })
    }

    /// max |P(x) − sgn(|x| − x*)| over |x| ∈ [0, a] ∪ [b, 1].
    pub fn eps_qsp_measured(&self) -> f64 {
        let (a, b) = self.cos_gap;
        let samples = 2000;
        let mut worst: f64 = 0.0;
        for j in 0..=samples {
            let t = j as f64 / samples as f64;
            worst = worst.max((self.polynomial.eval(a * t) + 1.0).abs());
            worst = worst.max((self.polynomial.eval(b + (1.0 - b) * t) - 1.0).abs());
        }
        worst
    }

    /// √N(√(2ε_QSP) + L(max ε_SA + ε_RWA)) with ε_RWA at the band's lowest
    /// carrier and the strongest promised signal.
    pub fn error_proxy(&self, max_eps_sa: f64) -> f64 {
        let b = self.config.gamma * self.b_min;
        let eps_rwa = rwa_error_bound(b, self.band.0, self.duration);
        (self.n() as f64).sqrt()
            * ((2.0 * self.eps_qsp_measured()).sqrt()
                + self.degree() as f64 * (max_eps_sa + eps_rwa))
    }

    /// Error budget ε₁ + ε₂ + ε₃.
    pub fn error_budget(&self) -> f64 {
        self.config.eps1 + self.config.eps2 + self.config.eps3
    }
}

/// ESU block seen with signal phase φ at the start of the call.
fn phased(u: &Mat2, phi: f64) -> Mat2 {
    // rz(φ/2)·U·rz(−φ/2): off-diagonals pick up e^{∓iφ}
    let e = C64::from_polar(1.0, -phi);
    Mat2::new(u[(0, 0)], u[(0, 1)] * e, u[(1, 0)] * e.conj(), u[(1, 1)])
}

/// Tracks the signal phase across consecutive ESU calls without forming ω·t.
struct PhaseClock {
    phase: f64,
    step: f64,
}

impl PhaseClock {
    fn new(signal: Option<&AcSignal>, start: f64, duration: f64) -> Self {
        match signal {
            Some(s) => PhaseClock {
                phase: (s.phase + (s.angular_frequency * start).rem_euclid(2.0 * PI))
                    .rem_euclid(2.0 * PI),
                step: (s.angular_frequency * duration).rem_euclid(2.0 * PI),
            },
            None => PhaseClock {
                phase: 0.0,
                step: 0.0,
            },
        }
    }

    fn next(&mut self) -> f64 {
        let p = self.phase;
        self.phase = (self.phase + self.step).rem_euclid(2.0 * PI);
        p
    }
}

/// Final register ⊗ sensor state of one noiseless search.
pub fn search_state(
    plan: &QssPlan,
    blocks: &EsuBlocks,
    signal: Option<&AcSignal>,
    start: f64,
) -> Vec<[C64; 2]> {
    let n = blocks.blocks.len();
    let amp = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    let mut v = vec![[amp, ZERO]; n];
    let angles = &plan.phases.angles;
    let gates: Vec<Mat2> = angles.iter().map(|&p| rx(p)).collect();
    let mut clock = PhaseClock::new(signal, start, plan.duration);
    let apply = |m: &Mat2, a: [C64; 2]| {
        [
            m[(0, 0)] * a[0] + m[(0, 1)] * a[1],
            m[(1, 0)] * a[0] + m[(1, 1)] * a[1],
        ]
    };
    for _ in 0..plan.rounds {
        for (j, g) in gates.iter().enumerate() {
            if j > 0 {
                let phi = clock.next();
                for (a, u) in v.iter_mut().zip(&blocks.blocks) {
                    *a = apply(&phased(u, phi), *a);
                }
            }
            for a in v.iter_mut() {
                *a = apply(g, *a);
            }
        }
        for s in 0..2 {
            let mean = v.iter().map(|a| a[s]).sum::<C64>() / n as f64;
            for a in v.iter_mut() {
                a[s] = mean * 2.0 - a[s];
            }
        }
    }
    v
}

/// Final register ⊗ sensor density matrix of one search with sensor
/// dephasing at rate `gamma` acting after every ESU call.
///
/// Blocks ρ_{kk'} are stored row-major; each ESU call applies U_k ρ U_{k'}†
/// and then the pure-dephasing block step over T.
pub fn search_state_dephased(
    plan: &QssPlan,
    blocks: &EsuBlocks,
    signal: Option<&AcSignal>,
    start: f64,
    gamma: f64,
) -> Result<Vec<Mat2>> {
    finite(gamma, "gamma")?;
    if gamma < 0.0 {
        return Err(Error::Invalid("gamma must be nonnegative".into()));
    }
    let n = blocks.blocks.len();
    let zero = Mat2::zeros();
    let dephase = block_propagator(&zero, &zero, gamma, 0.0, plan.duration);
    let mut rho = vec![Mat2::new(C64::new(1.0 / n as f64, 0.0), ZERO, ZERO, ZERO); n * n];
    let gates: Vec<Mat2> = plan.phases.angles.iter().map(|&p| rx(p)).collect();
    let mut clock = PhaseClock::new(signal, start, plan.duration);
    let conjugate = |rho: &mut Vec<Mat2>, w: &[Mat2]| {
        let adj: Vec<Mat2> = w.iter().map(|m| m.adjoint()).collect();
        for k in 0..n {
            for l in 0..n {
                rho[k * n + l] = w[k] * rho[k * n + l] * adj[l];
            }
        }
    };
    for _ in 0..plan.rounds {
        for (j, g) in gates.iter().enumerate() {
            if j > 0 {
                let phi = clock.next();
                let w: Vec<Mat2> = blocks.blocks.iter().map(|u| phased(u, phi)).collect();
                conjugate(&mut rho, &w);
                for b in rho.iter_mut() {
                    *b = apply_block(&dephase, b);
                }
            }
            conjugate(&mut rho, &vec![*g; n]);
        }
        // R ρ R with R = (2/N)J − 1 on the register
        let mut row = vec![zero; n];
        let mut col = vec![zero; n];
        let mut all = zero;
        for k in 0..n {
            for l in 0..n {
                row[k] += rho[k * n + l];
                col[l] += rho[k * n + l];
                all += rho[k * n + l];
            }
        }
        let c = C64::new(2.0 / n as f64, 0.0);
        for k in 0..n {
            for l in 0..n {
                let b = rho[k * n + l];
                rho[k * n + l] = all * (c * c) - row[k] * c - col[l] * c + b;
            }
        }
    }
    Ok(rho)
}

fn pure_probabilities(v: &[[C64; 2]]) -> Vec<f64> {
    v.iter()
        .map(|a| a[0].norm_sqr() + a[1].norm_sqr())
        .collect()
}

fn mixed_probabilities(rho: &[Mat2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            (rho[k * n + k][(0, 0)] + rho[k * n + k][(1, 1)])
                .re
                .max(0.0)
        })
        .collect()
}

/// Dense register ⊗ sensor density matrix from row-major blocks.
pub fn blocks_to_dense(rho: &[Mat2], n: usize) -> CMat {
    CMat::from_fn(2 * n, 2 * n, |i, j| {
        rho[(i / 2) * n + j / 2][(i % 2, j % 2)]
    })
}

/// |ψ⟩⟨ψ| of a pure search state.
pub fn pure_to_dense(v: &[[C64; 2]]) -> CMat {
    let flat: Vec<C64> = v.iter().flat_map(|a| [a[0], a[1]]).collect();
    let psi = nalgebra::DVector::from_vec(flat);
    &psi * psi.adjoint()
}

/// Trace distance between the dephased and noiseless outputs of one search,
/// together with the elapsed sensing time of that search.
pub fn dephasing_deviation(
    plan: &QssPlan,
    parity: Parity,
    signal: Option<&AcSignal>,
    gamma: f64,
) -> Result<(f64, f64)> {
    let blocks = plan.esu_blocks(parity, signal)?;
    let pure = pure_to_dense(&search_state(plan, &blocks, signal, 0.0));
    let mixed = blocks_to_dense(
        &search_state_dephased(plan, &blocks, signal, 0.0, gamma)?,
        blocks.blocks.len(),
    );
    Ok((trace_distance(&mixed, &pure)?, plan.search_time()))
}

/// Conventional check of one bin: a CPMG scan over each of its two quarters.
fn verify_bin(
    plan: &QssPlan,
    layout: &BinLayout,
    k: usize,
    signal: Option<&AcSignal>,
    start: f64,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    let mut out = ProtocolOutcome::default();
    let options = ScanOptions {
        m: plan.config.verify_iterations,
        abort_on_detection: true,
    };
    for (a, b) in layout.intervals(k) {
        let problem = SensingProblem::new(plan.b_min, a, b, 1)?;
        let seen = signal.map(|s| s.delayed(start + out.elapsed_sensing_time));
        out.extend(scan_solve(&problem, seen.as_ref(), options, rng)?);
        if out.detected {
            break;
        }
    }
    Ok(out)
}

/// Runs a prepared plan: M searches per parity, each followed by the
/// conventional check of the sampled bin. `gamma` > 0 dephases the sensor
/// during every ESU call.
pub fn run_plan(
    plan: &QssPlan,
    signal: Option<&AcSignal>,
    gamma: f64,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    let mut out = ProtocolOutcome::default();
    let odd = plan.esu_blocks(Parity::Odd, signal)?;
    let even = plan.esu_blocks(Parity::Even, signal)?;
    for _ in 0..plan.config.repetitions {
        for (parity, blocks) in [(Parity::Odd, &odd), (Parity::Even, &even)] {
            let start = out.elapsed_sensing_time;
            let probs = if gamma > 0.0 {
                mixed_probabilities(
                    &search_state_dephased(plan, blocks, signal, start, gamma)?,
                    blocks.blocks.len(),
                )
            } else {
                pure_probabilities(&search_state(plan, blocks, signal, start))
            };
            let k = sample_index(&probs, rng);
            let label = match parity {
                Parity::Odd => format!("grover odd -> bin {k}"),
                Parity::Even => format!("grover even -> bin {k}"),
            };
            out.record(label, plan.search_time(), None);
            let check = verify_bin(
                plan,
                plan.layout(parity),
                k,
                signal,
                out.elapsed_sensing_time,
                rng,
            )?;
            out.extend(check);
            if out.detected && plan.config.abort_on_detection {
                return Ok(out);
            }
        }
    }
    Ok(out)
}

/// Solves AC_γ[B_min, [lo, hi]] with collective coupling `b_min`; below x₀
/// the band is scanned conventionally instead.
pub fn qss_subband_solve(
    b_min: f64,
    band: (f64, f64),
    signal: Option<&AcSignal>,
    config: &QssConfig,
    rng: &mut Rng,
) -> Result<ProtocolOutcome> {
    config.validate()?;
    if (band.1 - band.0) / b_min < config.x0 {
        let problem = SensingProblem::new(b_min, band.0, band.1, 1)?;
        let options = ScanOptions {
            m: config.verify_iterations,
            abort_on_detection: config.abort_on_detection,
        };
        return scan_solve(&problem, signal, options, rng);
    }
    let plan = qss_plan(b_min, band, config)?;
    run_plan(&plan, signal, 0.0, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceKind {
    /// AC_γ with B ∈ [b_min, γ·b_min] and ω ≥ band width.
    Restricted,
    /// Strong signals, handled by the conventional scan.
    Conventional,
}

/// One sub-instance; strengths are per sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubInstance {
    pub kind: InstanceKind,
    pub b_min: f64,
    pub b_max: Option<f64>,
    pub band: (f64, f64),
}

impl SubInstance {
    pub fn covers(&self, strength: f64, omega: f64) -> bool {
        strength >= self.b_min
            && self.b_max.is_none_or(|m| strength <= m)
            && omega >= self.band.0
            && omega <= self.band.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub gamma: f64,
    pub n_s: u32,
    pub strength_levels: usize,
    pub frequency_levels: usize,
    pub instances: Vec<SubInstance>,
}

/// Splits a problem into AC_γ instances over strength intervals
/// [γ^{i−1}, γ^i]·B_min and octave bands [2^{j−1}, 2^j]·ω_min, plus the
/// conventional instance for collective couplings above |Δω|.
pub fn decompose_subproblems(problem: &SensingProblem, gamma: f64) -> Result<Decomposition> {
    finite(gamma, "gamma")?;
    if gamma <= 1.0 {
        return Err(Error::Invalid("gamma must exceed 1".into()));
    }
    let n_s = problem.n_s as f64;
    let b_eff = n_s * problem.b_min;
    let width = problem.width();
    let ratio = width / b_eff;
    // tolerate rounding when the ratio is an exact power of γ
    let i_max = if ratio <= 1.0 {
        0
    } else {
        (ratio.ln() / gamma.ln() - 1e-9).ceil().max(1.0) as usize
    };
    let j_max = ((problem.omega_max / problem.omega_min).log2() - 1e-12)
        .ceil()
        .max(1.0) as usize;
    let mut instances = Vec::with_capacity(i_max * j_max + 1);
    for i in 0..i_max {
        let b = problem.b_min * gamma.powi(i as i32);
        for j in 0..j_max {
            let lo = problem.omega_min * 2f64.powi(j as i32);
            let hi = (2.0 * lo).min(problem.omega_max);
            instances.push(SubInstance {
                kind: InstanceKind::Restricted,
                b_min: b,
                b_max: Some(gamma * b),
                band: (lo, hi),
            });
        }
    }
    instances.push(SubInstance {
        kind: InstanceKind::Conventional,
        b_min: (width / n_s).max(problem.b_min),
        b_max: None,
        band: (problem.omega_min, problem.omega_max),
    });
    Ok(Decomposition {
        gamma,
        n_s: problem.n_s,
        strength_levels: i_max,
        frequency_levels: j_max,
        instances,
    })
}

impl Decomposition {
    pub fn covers(&self, strength: f64, omega: f64) -> bool {
        self.instances.iter().any(|s| s.covers(strength, omega))
    }

    /// Σ_i (1/B_i)√(|Δω|/B_i) over strength levels (collective B_i) and the
    /// geometric closed form (1/B)√(|Δω|/B)·γ^{3/2}/(γ^{3/2} − 1).
    pub fn tau_budget(&self, problem: &SensingProblem) -> (f64, f64) {
        let b = self.n_s as f64 * problem.b_min;
        let w = problem.width();
        let unit = |bi: f64| (w / bi).sqrt() / bi;
        let sum = (0..self.strength_levels)
            .map(|i| unit(b * self.gamma.powi(i as i32)))
            .sum();
        let g = self.gamma.powf(1.5);
        (sum, unit(b) * g / (g - 1.0))
    }
}

/// Chunking constants of the dephasing-limited variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    /// |Δω_noise| = c·(n_S B_min)³·T_noise².
    pub c_width: f64,
    /// T_noise = c′/(Γ n_S).
    pub c_time: f64,
    /// Repeats per chunk: 1 + 2⌈c_r·ln(chunks)/2⌉.
    pub c_repeat: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule {
            c_width: 1.0,
            c_time: 0.1,
            c_repeat: 1.0,
        }
    }
}

impl NoiseSchedule {
    pub fn t_noise(&self, gamma: f64, n_s: u32) -> f64 {
        self.c_time / (gamma * n_s as f64)
    }

    pub fn chunk_width(&self, problem: &SensingProblem, gamma: f64) -> f64 {
        let b = problem.n_s as f64 * problem.b_min;
        self.c_width * b.powi(3) * self.t_noise(gamma, problem.n_s).powi(2)
    }

    pub fn repeats(&self, chunks: usize) -> u32 {
        1 + 2 * (self.c_repeat * (chunks as f64).ln() / 2.0).ceil().max(0.0) as u32
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyOutcome {
    pub outcome: ProtocolOutcome,
    pub chunk_width: f64,
    pub chunks: usize,
    pub repeats: u32,
    pub t_noise: f64,
    /// Chunks whose majority vote was YES.
    pub positive_chunks: Vec<usize>,
}

/// Chunked search under sensor dephasing Γ: each chunk is solved
/// `repeats` times with dephasing n_S·Γ on the collective sensor and
/// detection requires a majority of verified YES runs.
pub fn qss_noisy_solve(
    problem: &SensingProblem,
    signal: Option<&AcSignal>,
    gamma: f64,
    config: &QssConfig,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<NoisyOutcome> {
    finite(gamma, "gamma")?;
    if gamma <= 0.0 {
        return Err(Error::Invalid("gamma must be positive".into()));
    }
    config.validate()?;
    let b = problem.n_s as f64 * problem.b_min;
    let width = schedule.chunk_width(problem, gamma);
    let chunks = ((problem.width() / width) - 1e-12).ceil().max(1.0) as usize;
    let step = problem.width() / chunks as f64;
    let repeats = schedule.repeats(chunks);
    let collective = signal.map(|s| s.scaled(problem.n_s as f64));
    let mut out = ProtocolOutcome::default();
    let mut positive_chunks = Vec::new();
    for c in 0..chunks {
        let lo = problem.omega_min + c as f64 * step;
        let hi = if c + 1 == chunks {
            problem.omega_max
        } else {
            lo + step
        };
        let mut yes = 0;
        for _ in 0..repeats {
            let seen = collective.map(|s| s.delayed(out.elapsed_sensing_time));
            let run = if (hi - lo) / b < config.x0 {
                let sub = SensingProblem::new(b, lo, hi, 1)?;
                let options = ScanOptions {
                    m: config.verify_iterations,
                    abort_on_detection: true,
                };
                scan_solve(&sub, seen.as_ref(), options, rng)?
            } else {
                let plan = qss_plan(b, (lo, hi), config)?;
                run_plan(&plan, seen.as_ref(), problem.n_s as f64 * gamma, rng)?
            };
            if run.detected {
                yes += 1;
            }
            let detected = out.detected;
            out.extend(run);
            out.detected = detected;
        }
        if 2 * yes > repeats {
            positive_chunks.push(c);
            out.detected = true;
        }
    }
    Ok(NoisyOutcome {
        outcome: out,
        chunk_width: width,
        chunks,
        repeats,
        t_noise: schedule.t_noise(gamma, problem.n_s),
        positive_chunks,
    })
}
