//! NV-register demonstration: a sensor spin whose transition frequency is
//! set by the configuration of n_Q nuclear spins, driven by the signal
//! (oracle) and by a control tone at ω₀ (reflection), all under dephasing.
//!
//! The register-sensor density matrix is stored as N×N sensor blocks
//! ⟨k₁|ρ|k₂⟩. Drives leave register populations untouched, so each block
//! evolves on its own under a 4×4 generator; Hadamards on the register mix
//! blocks through a two-sided Walsh-Hadamard transform.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::qdyn::{apply_block, block_propagator, Mat2, Mat4};
use crate::rng::{seeded, Rng};
use crate::{finite, khz, to_khz, Error, Result, C64};

/// Seed of the synthetic coupling jitter.
pub const SYNTHETIC_SEED: u64 = 0x5EED_0A11;

/// Sensor spin plus n_Q nuclear spins with Ising couplings A_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NvRegister {
    pub couplings: Vec<f64>,
    pub delta0: f64,
    /// Dephasing rate Γ = 1/T₂ applied to every qubit.
    pub gamma: f64,
}

/// On-disk register description (kHz values are cyclic).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterConfig {
    pub n_q: usize,
    pub couplings_khz: Vec<f64>,
    pub delta0_khz: f64,
    pub t2_ms: f64,
}

impl NvRegister {
    pub fn new(couplings: Vec<f64>, delta0: f64, gamma: f64) -> Result<Self> {
        if couplings.is_empty() || couplings.len() > 12 {
            return Err(Error::Invalid(format!(
                "need 1..=12 couplings, got {}",
                couplings.len()
            )));
        }
        for &a in &couplings {
            finite(a, "coupling")?;
        }
        finite(delta0, "delta0")?;
        finite(gamma, "gamma")?;
        if gamma < 0.0 {
            return Err(Error::Invalid("gamma must be nonnegative".into()));
        }
        let reg = NvRegister {
            couplings,
            delta0,
            gamma,
        };
        let mut f = reg.frequencies();
        f.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let scale = reg.couplings.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if f.windows(2).any(|w| w[1] - w[0] <= 1e-12 * scale) {
            return Err(Error::Invalid(
                "conditional frequencies are not distinct".into(),
            ));
        }
        Ok(reg)
    }

    /// n_Q couplings log-spaced over [5, 60] kHz, each jittered by up to ±5%
    /// in log scale from [`SYNTHETIC_SEED`]; Δ₀ = 2.87 GHz.
    pub fn synthetic(n_q: usize, t2_ms: f64) -> Result<Self> {
        if n_q == 0 {
            return Err(Error::Invalid("n_q must be positive".into()));
        }
        let mut rng = seeded(SYNTHETIC_SEED ^ n_q as u64);
        let (lo, hi): (f64, f64) = (5.0, 60.0);
        let couplings = (0..n_q)
            .map(|i| {
                let u = if n_q == 1 {
                    0.0
                } else {
                    i as f64 / (n_q - 1) as f64
                };
                let jitter = 0.05 * (2.0 * rng.random::<f64>() - 1.0);
                khz((lo.ln() + u * (hi / lo).ln() + jitter).exp().clamp(lo, hi))
            })
            .collect();
        NvRegister::new(couplings, khz(2.87e6), 1.0 / t2_ms)
    }

    pub fn from_config(cfg: &RegisterConfig) -> Result<Self> {
        if cfg.couplings_khz.len() != cfg.n_q {
            return Err(Error::Invalid(format!(
                "n_q = {} but {} couplings given",
                cfg.n_q,
                cfg.couplings_khz.len()
            )));
        }
        if !(cfg.t2_ms > 0.0) {
            return Err(Error::Invalid("t2_ms must be positive".into()));
        }
        NvRegister::new(
            cfg.couplings_khz.iter().map(|&a| khz(a)).collect(),
            khz(cfg.delta0_khz),
            1.0 / cfg.t2_ms,
        )
    }

    pub fn to_config(&self) -> RegisterConfig {
        RegisterConfig {
            n_q: self.n_q(),
            couplings_khz: self.couplings.iter().map(|&a| to_khz(a)).collect(),
            delta0_khz: to_khz(self.delta0),
            t2_ms: if self.gamma > 0.0 {
                1.0 / self.gamma
            } else {
                f64::INFINITY
            },
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        NvRegister {
            gamma,
            ..self.clone()
        }
    }

    pub fn n_q(&self) -> usize {
        self.couplings.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_q()
    }

    /// ω_k = Δ₀ + Σ (−1)^{k_i} A_i/2 with k_i the i-th bit of k.
    pub fn frequency(&self, k: usize) -> f64 {
        self.delta0
            + self
                .couplings
                .iter()
                .enumerate()
                .map(|(i, a)| if (k >> i) & 1 == 0 { 0.5 * a } else { -0.5 * a })
                .sum::<f64>()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.frequency(k)).collect()
    }

    /// Rotating-frame sensor Hamiltonian δ_k|1⟩⟨1| + (Ω/2)X for a drive at `drive`.
    pub fn drive_hamiltonian(&self, k: usize, drive: f64, rabi: f64) -> Mat2 {
        sensor_hamiltonian(self.frequency(k) - drive, rabi)
    }
}

pub fn sensor_hamiltonian(detuning: f64, rabi: f64) -> Mat2 {
    let z = C64::new(0.0, 0.0);
    let x = C64::new(0.5 * rabi, 0.0);
    Mat2::new(z, x, x, C64::new(detuning, 0.0))
}

/// ⌊π√N/4⌋.
pub fn max_grover_iterations(n: usize) -> usize {
    (PI * (n as f64).sqrt() / 4.0).floor() as usize
}

/// B̂_R0 = (32·2^{−n_Q} + 10√(B/1 kHz)) kHz, in rad/ms.
pub fn ansatz_b_r0(n_q: usize, b: f64) -> f64 {
    khz(32.0 * 0.5f64.powi(n_q as i32) + 10.0 * to_khz(b).sqrt())
}

/// One constant drive applied to the sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub drive: f64,
    pub rabi: f64,
    pub duration: f64,
}

/// Per-pair block propagators of one segment (upper triangle k₁ ≤ k₂).
#[derive(Clone, Debug)]
pub struct SegmentPropagators {
    n: usize,
    props: Vec<Mat4>,
}

fn tri_index(n: usize, k1: usize, k2: usize) -> usize {
    // rows k1 = 0.. hold n, n-1, ... entries
    k1 * n - k1 * (k1 + 1) / 2 + k2
}

impl SegmentPropagators {
    pub fn new(reg: &NvRegister, seg: &Segment) -> Self {
        let n = reg.dim();
        let hs: Vec<Mat2> = (0..n)
            .map(|k| reg.drive_hamiltonian(k, seg.drive, seg.rabi))
            .collect();
        let mut props = Vec::with_capacity(n * (n + 1) / 2);
        for k1 in 0..n {
            for k2 in k1..n {
                let w = (k1 ^ k2).count_ones() as f64;
                props.push(block_propagator(
                    &hs[k1],
                    &hs[k2],
                    reg.gamma,
                    reg.gamma * w,
                    seg.duration,
                ));
            }
        }
        SegmentPropagators { n, props }
    }

    pub fn get(&self, k1: usize, k2: usize) -> &Mat4 {
        &self.props[tri_index(self.n, k1, k2)]
    }
}

/// Register-sensor state as N×N sensor blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityBlockSet {
    n: usize,
    blocks: Vec<Mat2>,
}

impl DensityBlockSet {
    /// |+⟩^{⊗n_Q} ⊗ |0⟩_S.
    pub fn initial(n: usize) -> Self {
        let v = C64::new(1.0 / n as f64, 0.0);
        let z = C64::new(0.0, 0.0);
        DensityBlockSet {
            n,
            blocks: vec![Mat2::new(v, z, z, z); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn block(&self, k1: usize, k2: usize) -> &Mat2 {
        &self.blocks[k1 * self.n + k2]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|k| self.block(k, k).trace().re).sum()
    }

    /// Largest |block(k₂,k₁) − block(k₁,k₂)†|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k1 in 0..self.n {
            for k2 in k1..self.n {
                let d = self.block(k2, k1) - self.block(k1, k2).adjoint();
                worst = worst.max(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        worst
    }

    /// Diagonal of the reduced register state.
    pub fn register_populations(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.block(k, k).trace().re).collect()
    }

    pub fn apply(&mut self, props: &SegmentPropagators) {
        let n = self.n;
        for k1 in 0..n {
            for k2 in k1..n {
                let b = apply_block(props.get(k1, k2), &self.blocks[k1 * n + k2]);
                if k1 == k2 {
                    // keep diagonal blocks exactly Hermitian
                    self.blocks[k1 * n + k2] = (b + b.adjoint()) * C64::new(0.5, 0.0);
                } else {
                    self.blocks[k2 * n + k1] = b.adjoint();
                    self.blocks[k1 * n + k2] = b;
                }
            }
        }
    }

    /// Hadamard on every register qubit: ρ → H^{⊗n} ρ H^{⊗n}.
    pub fn hadamard_all(&mut self) {
        let n = self.n;
        let norm = C64::new(1.0 / n as f64, 0.0);
        // rows
        let mut h = 1;
        while h < n {
            for i in (0..n).step_by(2 * h) {
                for a in i..i + h {
                    for c in 0..n {
                        let x = self.blocks[a * n + c];
                        let y = self.blocks[(a + h) * n + c];
                        self.blocks[a * n + c] = x + y;
                        self.blocks[(a + h) * n + c] = x - y;
                    }
                }
            }
            h *= 2;
        }
        // columns
        for r in 0..n {
            let row = &mut self.blocks[r * n..(r + 1) * n];
            let mut h = 1;
            while h < n {
                for i in (0..n).step_by(2 * h) {
                    for a in i..i + h {
                        let x = row[a];
                        let y = row[a + h];
                        row[a] = x + y;
                        row[a + h] = x - y;
                    }
                }
                h *= 2;
            }
        }
        for b in &mut self.blocks {
            *b *= norm;
        }
    }
}

/// Oracle segment: the signal at ω_{k*} with Rabi B for 2π/B.
pub fn oracle_segment(reg: &NvRegister, b: f64, k_star: usize) -> Segment {
    Segment {
        drive: reg.frequency(k_star),
        rabi: b,
        duration: 2.0 * PI / b,
    }
}

/// Reflection segment: control drive at ω₀ with Rabi B_R0 for 2π/B_R0.
pub fn r0_segment(reg: &NvRegister, b_r0: f64) -> Segment {
    Segment {
        drive: reg.frequency(0),
        rabi: b_r0,
        duration: 2.0 * PI / b_r0,
    }
}

/// Register populations after 0, 1, …, `rounds` Grover rounds.
pub fn grover_trajectory(
    oracle: &SegmentPropagators,
    r0: &SegmentPropagators,
    rounds: usize,
) -> Vec<Vec<f64>> {
    let mut state = DensityBlockSet::initial(oracle.n);
    let mut out = vec![state.register_populations()];
    for _ in 0..rounds {
        state.apply(oracle);
        state.hadamard_all();
        state.apply(r0);
        state.hadamard_all();
        out.push(state.register_populations());
    }
    out
}

fn check_index(reg: &NvRegister, k: usize) -> Result<()> {
    if k >= reg.dim() {
        return Err(Error::Invalid(format!(
            "configuration {k} out of range for N = {}",
            reg.dim()
        )));
    }
    Ok(())
}

fn check_rate(b: f64, what: &'static str) -> Result<()> {
    finite(b, what)?;
    if b <= 0.0 {
        return Err(Error::Invalid(format!("{what} must be positive")));
    }
    Ok(())
}

/// Grover outcome distribution G^{(k*)} after `n_g` rounds.
pub fn grover_distribution(
    reg: &NvRegister,
    b: f64,
    k_star: usize,
    n_g: usize,
    b_r0: f64,
) -> Result<Vec<f64>> {
    check_index(reg, k_star)?;
    check_rate(b, "B")?;
    check_rate(b_r0, "B_R0")?;
    let cap = max_grover_iterations(reg.dim());
    if n_g > cap {
        return Err(Error::Precondition(format!("N_G = {n_g} exceeds {cap}")));
    }
    let oracle = SegmentPropagators::new(reg, &oracle_segment(reg, b, k_star));
    let r0 = SegmentPropagators::new(reg, &r0_segment(reg, b_r0));
    Ok(grover_trajectory(&oracle, &r0, n_g).pop().unwrap())
}

/// Probability of reading |1⟩ after the signal at ω_{k*} drives the sensor
/// tuned to ω_k for π/B under sensor dephasing.
pub fn detection_prob(reg: &NvRegister, b: f64, k_star: usize, k: usize) -> Result<f64> {
    check_index(reg, k_star)?;
    check_index(reg, k)?;
    check_rate(b, "B")?;
    Ok(detection_prob_detuned(
        reg.frequency(k) - reg.frequency(k_star),
        b,
        reg.gamma,
    ))
}

pub fn detection_prob_detuned(detuning: f64, b: f64, gamma: f64) -> f64 {
    let h = sensor_hamiltonian(detuning, b);
    let prop = block_propagator(&h, &h, gamma, 0.0, PI / b);
    let z = C64::new(0.0, 0.0);
    let rho = apply_block(&prop, &Mat2::new(C64::new(1.0, 0.0), z, z, z));
    rho[(1, 1)].re.clamp(0.0, 1.0)
}

pub fn detection_row(reg: &NvRegister, b: f64, k_star: usize) -> Vec<f64> {
    let w = reg.frequency(k_star);
    (0..reg.dim())
        .map(|k| detection_prob_detuned(reg.frequency(k) - w, b, reg.gamma))
        .collect()
}

/// (π/2B)·N/Σ_k p_k; infinite when no configuration ever detects.
pub fn tau_conventional_from_row(p: &[f64], b: f64) -> f64 {
    let s: f64 = p.iter().sum();
    if s <= 0.0 {
        f64::INFINITY
    } else {
        PI / (2.0 * b) * p.len() as f64 / s
    }
}

/// (τ_Grover + τ_Check)/Σ_k G_k p_k with τ_Grover = N_G(2π/B + 2π/B_R0).
pub fn tau_dqss_from(g: &[f64], p: &[f64], b: f64, n_g: usize, b_r0: f64) -> f64 {
    let s: f64 = g.iter().zip(p).map(|(g, p)| g * p).sum();
    let t = n_g as f64 * (2.0 * PI / b + 2.0 * PI / b_r0) + PI / b;
    if s <= 0.0 {
        f64::INFINITY
    } else {
        t / s
    }
}

pub fn tau_conventional(reg: &NvRegister, b: f64, k_star: usize) -> Result<f64> {
    check_index(reg, k_star)?;
    check_rate(b, "B")?;
    Ok(tau_conventional_from_row(&detection_row(reg, b, k_star), b))
}

pub fn tau_dqss(reg: &NvRegister, b: f64, k_star: usize, n_g: usize, b_r0: f64) -> Result<f64> {
    let g = grover_distribution(reg, b, k_star, n_g, b_r0)?;
    Ok(tau_dqss_from(
        &g,
        &detection_row(reg, b, k_star),
        b,
        n_g,
        b_r0,
    ))
}

/// Which signal frequencies the improvement factor averages over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KStarSample {
    All,
    /// Uniform without replacement.
    Random(usize),
}

impl KStarSample {
    pub fn draw(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        match *self {
            KStarSample::All => (0..n).collect(),
            KStarSample::Random(m) if m >= n => (0..n).collect(),
            KStarSample::Random(m) => {
                let mut v = sample(rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub k_stars: Vec<usize>,
    /// Rows p^{(k*)} for each sampled k*.
    pub p: Vec<Vec<f64>>,
    /// Rows G^{(k*)} for each sampled k*.
    pub g: Vec<Vec<f64>>,
    pub tau_conv: Vec<f64>,
    pub tau_dqss: Vec<f64>,
    pub i_mean: f64,
    pub i_var: f64,
    pub b: f64,
    pub t2: f64,
    pub n_g: usize,
    pub b_r0: f64,
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var)
}

/// Improvement factor I = mean over k* of τ_conv/τ_dQSS.
pub fn improvement(
    reg: &NvRegister,
    b: f64,
    n_g: usize,
    b_r0: f64,
    sample: KStarSample,
    rng: &mut Rng,
) -> Result<ImprovementReport> {
    check_rate(b, "B")?;
    check_rate(b_r0, "B_R0")?;
    let cap = max_grover_iterations(reg.dim());
    if n_g > cap {
        return Err(Error::Precondition(format!("N_G = {n_g} exceeds {cap}")));
    }
    let k_stars = sample.draw(reg.dim(), rng);
    let r0 = SegmentPropagators::new(reg, &r0_segment(reg, b_r0));
    let mut rep = ImprovementReport {
        k_stars: k_stars.clone(),
        p: Vec::new(),
        g: Vec::new(),
        tau_conv: Vec::new(),
        tau_dqss: Vec::new(),
        i_mean: 0.0,
        i_var: 0.0,
        b,
        t2: 1.0 / reg.gamma,
        n_g,
        b_r0,
    };
    let mut ratios = Vec::new();
    for &ks in &k_stars {
        let p = detection_row(reg, b, ks);
        let g = if n_g == 0 {
            vec![1.0 / reg.dim() as f64; reg.dim()]
        } else {
            let oracle = SegmentPropagators::new(reg, &oracle_segment(reg, b, ks));
            grover_trajectory(&oracle, &r0, n_g).pop().unwrap()
        };
        let tc = tau_conventional_from_row(&p, b);
        let td = tau_dqss_from(&g, &p, b, n_g, b_r0);
        ratios.push(tc / td);
        rep.tau_conv.push(tc);
        rep.tau_dqss.push(td);
        rep.p.push(p);
        rep.g.push(g);
    }
    let (m, v) = mean_var(&ratios);
    rep.i_mean = m;
    rep.i_var = v;
    Ok(rep)
}

/// Search space of the (N_G, B_R0) optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerGrid {
    pub b_r0: Vec<f64>,
    pub n_g_max: usize,
}

/// B_R0 values B̂·10^{j/per_decade} for integer j, kept within [0.01, 50] kHz.
pub fn b_r0_grid_around(center: f64, per_decade: usize) -> Vec<f64> {
    let (lo, hi) = (khz(0.01), khz(50.0));
    let step = 10f64.powf(1.0 / per_decade as f64);
    let j_lo = ((lo / center).ln() / step.ln()).ceil() as i64;
    let j_hi = ((hi / center).ln() / step.ln()).floor() as i64;
    (j_lo..=j_hi)
        .map(|j| center * step.powi(j as i32))
        .collect()
}

impl OptimizerGrid {
    /// Default grid: 4 values per decade over [0.01, 50] kHz through the
    /// ansatz B̂_R0, N_G up to ⌊π√N/4⌋.
    pub fn around_ansatz(reg: &NvRegister, b: f64) -> Self {
        OptimizerGrid {
            b_r0: b_r0_grid_around(ansatz_b_r0(reg.n_q(), b), 4),
            n_g_max: max_grover_iterations(reg.dim()),
        }
    }

    /// Index of the grid point whose log-cell contains `value`.
    pub fn cell_of(&self, value: f64) -> usize {
        let mut best = 0;
        for (j, &g) in self.b_r0.iter().enumerate() {
            if (g.ln() - value.ln()).abs() < (self.b_r0[best].ln() - value.ln()).abs() {
                best = j;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub n_g: usize,
    pub b_r0: f64,
    pub i_mean: f64,
    pub i_var: f64,
    /// I for every (B_R0 index, N_G) pair, row-major in B_R0.
    pub table: Vec<Vec<f64>>,
    pub k_stars: Vec<usize>,
}

/// Exhaustive grid search for the (N_G, B_R0) pair maximizing the sampled I.
/// Ties go to smaller N_G, then smaller B_R0.
pub fn optimize(
    reg: &NvRegister,
    b: f64,
    grid: &OptimizerGrid,
    sample: KStarSample,
    rng: &mut Rng,
) -> Result<OptimizeResult> {
    check_rate(b, "B")?;
    if grid.b_r0.is_empty() {
        return Err(Error::Invalid("empty B_R0 grid".into()));
    }
    for &g in &grid.b_r0 {
        check_rate(g, "B_R0")?;
    }
    let cap = max_grover_iterations(reg.dim());
    let n_max = grid.n_g_max.min(cap);
    let k_stars = sample.draw(reg.dim(), rng);
    let rows: Vec<Vec<f64>> = k_stars
        .iter()
        .map(|&ks| detection_row(reg, b, ks))
        .collect();
    let conv: Vec<f64> = rows
        .iter()
        .map(|p| tau_conventional_from_row(p, b))
        .collect();
    let oracles: Vec<SegmentPropagators> = if n_max > 0 {
        k_stars
            .iter()
            .map(|&ks| SegmentPropagators::new(reg, &oracle_segment(reg, b, ks)))
            .collect()
    } else {
        Vec::new()
    };
    // ratios[r][n][k]
    let mut table = Vec::with_capacity(grid.b_r0.len());
    let mut spread = Vec::with_capacity(grid.b_r0.len());
    for &br in &grid.b_r0 {
        let mut per_ng = vec![Vec::with_capacity(k_stars.len()); n_max + 1];
        let r0 = if n_max > 0 {
            Some(SegmentPropagators::new(reg, &r0_segment(reg, br)))
        } else {
            None
        };
        for (i, _) in k_stars.iter().enumerate() {
            let traj = match &r0 {
                Some(r0) => grover_trajectory(&oracles[i], r0, n_max),
                None => vec![vec![1.0 / reg.dim() as f64; reg.dim()]],
            };
            for (n, g) in traj.iter().enumerate() {
                per_ng[n].push(conv[i] / tau_dqss_from(g, &rows[i], b, n, br));
            }
        }
        let stats: Vec<(f64, f64)> = per_ng.iter().map(|r| mean_var(r)).collect();
        table.push(stats.iter().map(|s| s.0).collect::<Vec<_>>());
        spread.push(stats.iter().map(|s| s.1).collect::<Vec<_>>());
    }
    let mut best = (0usize, 0usize);
    for n in 0..=n_max {
        for r in 0..grid.b_r0.len() {
            if table[r][n] > table[best.0][best.1] * (1.0 + 1e-12) {
                best = (r, n);
            }
        }
    }
    Ok(OptimizeResult {
        n_g: best.1,
        b_r0: grid.b_r0[best.0],
        i_mean: table[best.0][best.1],
        i_var: spread[best.0][best.1],
        table,
        k_stars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_follow_bits() {
        let reg = NvRegister::new(vec![1.0, 3.0], 10.0, 0.0).unwrap();
        assert_eq!(reg.frequency(0), 12.0);
        assert_eq!(reg.frequency(1), 11.0);
        assert_eq!(reg.frequency(2), 9.0);
        assert_eq!(reg.frequency(3), 8.0);
        assert!(NvRegister::new(vec![1.0, 1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn tri_index_is_dense() {
        let n = 5;
        let mut seen = vec![false; n * (n + 1) / 2];
        for a in 0..n {
            for b in a..n {
                let i = tri_index(n, a, b);
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn hadamard_twice_is_identity() {
        let reg = NvRegister::synthetic(3, 1e9).unwrap();
        let mut s = DensityBlockSet::initial(reg.dim());
        let seg = oracle_segment(&reg, khz(0.3), 5);
        s.apply(&SegmentPropagators::new(&reg, &seg));
        let before = s.clone();
        s.hadamard_all();
        s.hadamard_all();
        for k1 in 0..8 {
            for k2 in 0..8 {
                assert!((s.block(k1, k2) - before.block(k1, k2))
                    .iter()
                    .all(|z| z.norm() < 1e-14));
            }
        }
    }

    #[test]
    fn ansatz_value() {
        assert!((to_khz(ansatz_b_r0(5, khz(1.0))) - 11.0).abs() < 1e-12);
    }
}
