//! Shifted-sign polynomials and quantum signal processing.
//!
//! Convention: for phases Φ = (φ₀, …, φ_L) and signal rotation e^{−iθZ},
//! ⟨0| e^{−iφ_L X} e^{−iθZ} ⋯ e^{−iθZ} e^{−iφ₀X} |0⟩ = P(cos θ).
//! This is the Hadamard transform of the usual X-signal convention.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc_inv};

use crate::qdyn::{kron, rx, to_dense, CMat, Mat2, UnitaryMatrix};
use crate::{finite, Error, Result, C64};

/// Degree above which construction refuses to proceed.
pub const DEFAULT_DEGREE_CAP: usize = 4096;

/// Real polynomial in the Chebyshev basis with the sign-approximation
/// parameters it was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialApprox {
    pub coefficients: Vec<f64>,
    pub x_star: f64,
    pub delta: f64,
    pub eps: f64,
}

impl PolynomialApprox {
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        chebyshev_eval(&self.coefficients, x)
    }

    /// max |P| over 10⁴ Chebyshev points.
    pub fn sup_norm(&self) -> f64 {
        let n = 10_000;
        (0..n)
            .map(|j| self.eval((PI * (j as f64 + 0.5) / n as f64).cos()).abs())
            .fold(0.0, f64::max)
    }

    /// c in L = c·ln(1/ε)/Δ.
    pub fn degree_constant(&self) -> f64 {
        self.degree() as f64 * self.delta / (1.0 / self.eps).ln()
    }

    pub fn is_even(&self) -> bool {
        self.coefficients
            .iter()
            .skip(1)
            .step_by(2)
            .all(|c| c.abs() < 1e-14)
    }
}

/// Clenshaw evaluation of Σ c_k T_k(x).
pub fn chebyshev_eval(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    c.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// Chebyshev coefficients of the degree-(n−1) interpolant at first-kind nodes.
pub fn chebyshev_interpolate<F: Fn(f64) -> f64>(f: F, n: usize) -> Vec<f64> {
    let vals: Vec<f64> = (0..n)
        .map(|j| f((PI * (j as f64 + 0.5) / n as f64).cos()))
        .collect();
    (0..n)
        .map(|k| {
            let s: f64 = vals
                .iter()
                .enumerate()
                .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                .sum();
            if k == 0 {
                s / n as f64
            } else {
                2.0 * s / n as f64
            }
        })
        .collect()
}

/// Q ≈ sgn(x − x*) to within ε outside (x* − Δ/2, x* + Δ/2), with |Q| ≤ 1.
///
/// Q is the Chebyshev truncation of erf(κ(x − x*)), κ = 2·erfc⁻¹(ε/2)/Δ,
/// divided by 1 + ε/8 so the truncation tail cannot push it past 1.
pub fn approx_shifted_sign(x_star: f64, delta: f64, eps: f64) -> Result<PolynomialApprox> {
    approx_shifted_sign_capped(x_star, delta, eps, DEFAULT_DEGREE_CAP)
}

pub fn approx_shifted_sign_capped(
    x_star: f64,
    delta: f64,
    eps: f64,
    cap: usize,
) -> Result<PolynomialApprox> {
    finite(x_star, "x_star")?;
    finite(delta, "delta")?;
    finite(eps, "eps")?;
    if !(delta > 0.0 && eps > 0.0 && eps < 0.1) {
        return Err(Error::Invalid(format!(
            "need delta > 0 and 0 < eps < 0.1, got ({delta}, {eps})"
        )));
    }
    if x_star - 0.5 * delta < -1.0 || x_star + 0.5 * delta > 1.0 {
        return Err(Error::Invalid(format!(
            "failure window around {x_star} leaves [-1, 1]"
        )));
    }
    let kappa = 2.0 * erfc_inv(0.5 * eps) / delta;
    // coefficients of erf(κx) decay like exp(−k²/(4κ²))
    let estimate = (2.0 * kappa * (8.0 / eps).ln().sqrt()).ceil() as usize + 8;
    if estimate > cap {
        return Err(Error::DegreeCap {
            required: estimate,
            cap,
        });
    }
    let mut n = (2 * estimate).max(64);
    let c = loop {
        let c = chebyshev_interpolate(|x| erf(kappa * (x - x_star)), n);
        let tail: f64 = c[n * 3 / 4..].iter().map(|v| v.abs()).sum();
        if tail < 1e-3 * eps || n > 4 * cap {
            break c;
        }
        n *= 2;
    };
    let mut keep = c.len();
    let mut tail = 0.0;
    while keep > 1 && tail + c[keep - 1].abs() < eps / 8.0 {
        tail += c[keep - 1].abs();
        keep -= 1;
    }
    if keep - 1 > cap {
        return Err(Error::DegreeCap {
            required: keep - 1,
            cap,
        });
    }
    let scale = 1.0 / (1.0 + eps / 8.0);
    let coefficients = c[..keep].iter().map(|v| v * scale).collect();
    Ok(PolynomialApprox {
        coefficients,
        x_star,
        delta,
        eps,
    })
}

/// P(x) = (Q(x) + Q(−x) + 1)/(1 + ε), an even approximation of sgn(|x| − x*)
/// to within 5ε outside the two failure windows.
pub fn symmetrize(q: &PolynomialApprox) -> Result<PolynomialApprox> {
    if q.x_star.abs() < 0.5 * q.delta {
        return Err(Error::Precondition(format!(
            "failure windows overlap: |x_star| = {} < delta/2 = {}",
            q.x_star.abs(),
            0.5 * q.delta
        )));
    }
    let mut c: Vec<f64> = q
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { 2.0 * v } else { 0.0 })
        .collect();
    c[0] += 1.0;
    for v in &mut c {
        *v /= 1.0 + q.eps;
    }
    while c.len() > 1 && c[c.len() - 1] == 0.0 {
        c.pop();
    }
    let mut p = PolynomialApprox {
        coefficients: c,
        x_star: q.x_star.abs(),
        delta: q.delta,
        eps: 5.0 * q.eps,
    };
    let sup = p.sup_norm();
    if sup > 1.0 {
        for v in &mut p.coefficients {
            *v /= sup;
        }
    }
    Ok(p)
}

/// Δ_gap = (2/π²)(|θ_marked| − |θ|)².
pub fn delta_gap(theta_marked: f64, theta: f64) -> f64 {
    2.0 / (PI * PI) * (theta_marked.abs() - theta.abs()).powi(2)
}

/// Phase sequence Φ = (φ₀, …, φ_L) with its verified residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QspPhases {
    pub angles: Vec<f64>,
    /// max |⟨0|U_Φ(θ)|0⟩ − P(cos θ)| over the verification grid.
    pub residual: f64,
}

impl QspPhases {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// ⟨0|U_Φ(θ)|0⟩.
    pub fn value(&self, theta: f64) -> C64 {
        qsp_value(&self.angles, theta)
    }
}

pub fn qsp_value(angles: &[f64], theta: f64) -> C64 {
    let zl = C64::from_polar(1.0, -theta);
    let zr = zl.conj();
    let mut v = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    for (j, &p) in angles.iter().enumerate() {
        if j > 0 {
            v = [v[0] * zl, v[1] * zr];
        }
        v = x_rot(p, v);
    }
    v[0]
}

fn x_rot(p: f64, v: [C64; 2]) -> [C64; 2] {
    let (s, c) = p.sin_cos();
    let mis = C64::new(0.0, -s);
    [v[0] * c + v[1] * mis, v[0] * mis + v[1] * c]
}

/// e^{−iφ_L X} U ⋯ U e^{−iφ₀X} for an arbitrary 2×2 signal block U.
pub fn qsp_with_block(angles: &[f64], block: &Mat2) -> Mat2 {
    let mut u = Mat2::identity();
    for (j, &p) in angles.iter().enumerate() {
        if j > 0 {
            u = block * u;
        }
        u = rx(p) * u;
    }
    u
}

/// Per-bin conditional QSP blocks.
pub fn eval_cqsp_blocks(phases: &QspPhases, esu_blocks: &[Mat2]) -> Vec<Mat2> {
    esu_blocks
        .iter()
        .map(|b| qsp_with_block(&phases.angles, b))
        .collect()
}

/// Σ_k |k⟩⟨k| ⊗ CQSP_Φ(U_k) as a dense unitary on register ⊗ sensor.
pub fn eval_cqsp(phases: &QspPhases, esu_blocks: &[UnitaryMatrix]) -> Result<UnitaryMatrix> {
    let n = esu_blocks.len();
    let mut m = CMat::zeros(2 * n, 2 * n);
    for (k, b) in esu_blocks.iter().enumerate() {
        if b.dim() != 2 {
            return Err(Error::Dim(b.dim(), 2));
        }
        let blk = qsp_with_block(&phases.angles, &b.qubit());
        let mut e = CMat::zeros(n, n);
        e[(k, k)] = C64::new(1.0, 0.0);
        m += kron(&e, &to_dense(&blk));
    }
    UnitaryMatrix::new(m)
}

/// Options of the phase fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOpts {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub verification_points: usize,
}

impl Default for SynthOpts {
    fn default() -> Self {
        SynthOpts {
            tolerance: 1e-8,
            max_iterations: 200,
            verification_points: 1000,
        }
    }
}

/// Phases with ⟨0|U_Φ(θ)|0⟩ = P(cos θ) for real P of definite parity, |P| ≤ 1.
///
/// The phases are sought in the palindromic family φ_j = ψ_{min(j, L−j)}
/// with ±π/4 added to the two ends, for which ⟨0|U_Φ|0⟩ is real. Newton's
/// method on ψ matches the real part at ⌊L/2⌋ + 1 angles in (0, π/2),
/// starting from the sequence whose output vanishes identically. The result
/// is verified on an independent grid over the full circle. If max |P|
/// exceeds 1 − 10⁻⁶, P is first multiplied by 1 − 10⁻⁶.
pub fn synth_phases(p: &PolynomialApprox) -> Result<QspPhases> {
    synth_phases_with(&p.coefficients, SynthOpts::default())
}

pub fn synth_phases_with(coefficients: &[f64], opts: SynthOpts) -> Result<QspPhases> {
    let mut c: Vec<f64> = coefficients.to_vec();
    while c.len() > 1 && c[c.len() - 1].abs() < 1e-15 {
        c.pop();
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("polynomial coefficient"));
    }
    let l = c.len() - 1;
    if c.iter()
        .enumerate()
        .any(|(k, v)| (k + l) % 2 == 1 && v.abs() > 1e-14)
    {
        return Err(Error::Precondition(
            "polynomial must have definite parity".into(),
        ));
    }
    let approx = PolynomialApprox {
        coefficients: c.clone(),
        x_star: 0.0,
        delta: 1.0,
        eps: 0.05,
    };
    let sup = approx.sup_norm();
    if sup > 1.0 + 1e-9 {
        return Err(Error::Precondition(format!(
            "polynomial exceeds 1 on [-1, 1] (max {sup})"
        )));
    }
    if sup > 1.0 - 1e-6 {
        for v in &mut c {
            *v *= 1.0 - 1e-6;
        }
    }
    let target = |th: f64| chebyshev_eval(&c, th.cos());
    if l == 0 {
        let angles = vec![c[0].clamp(-1.0, 1.0).acos()];
        return verify(angles, &target, opts);
    }
    let angles = symmetric_newton(&c, opts.max_iterations);
    verify(angles, &target, opts)
}

/// Full phase sequence of the palindromic family.
fn expand_symmetric(psi: &[f64], l: usize) -> Vec<f64> {
    let mut phi: Vec<f64> = (0..=l).map(|j| psi[j.min(l - j)]).collect();
    phi[0] += PI / 4.0;
    phi[l] -= PI / 4.0;
    phi
}

fn verify<F: Fn(f64) -> f64>(angles: Vec<f64>, target: &F, opts: SynthOpts) -> Result<QspPhases> {
    let n = opts.verification_points.max(1);
    let golden = 0.618_033_988_749_894_9;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        // quasi-random angles over the full circle, independent of the fit grid
        let th = 2.0 * PI * ((j as f64 + 0.5) * golden).fract();
        worst = worst.max((qsp_value(&angles, th) - target(th)).norm());
    }
    if !(worst <= opts.tolerance) {
        return Err(Error::Synthesis(worst));
    }
    Ok(QspPhases {
        angles,
        residual: worst,
    })
}

/// ⟨0|U_Φ(θ)|0⟩ minus target and its gradient in Φ, one row per angle.
fn residual_jacobian(angles: &[f64], thetas: &[f64], targets: &[f64]) -> (Vec<C64>, DMatrix<C64>) {
    let n = angles.len();
    let m = thetas.len();
    let mut r = vec![C64::new(0.0, 0.0); m];
    let mut jac = DMatrix::zeros(m, n);
    let mut fwd = vec![[C64::new(0.0, 0.0); 2]; n];
    for (i, &th) in thetas.iter().enumerate() {
        let zl = C64::from_polar(1.0, -th);
        let zr = zl.conj();
        let mut v = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        for (j, &p) in angles.iter().enumerate() {
            if j > 0 {
                v = [v[0] * zl, v[1] * zr];
            }
            v = x_rot(p, v);
            fwd[j] = v;
        }
        r[i] = v[0] - targets[i];
        // row vector ⟨0| X_L Z ⋯ applied after X_j
        let mut w = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        for j in (0..n).rev() {
            jac[(i, j)] = C64::new(0.0, -1.0) * (w[0] * fwd[j][1] + w[1] * fwd[j][0]);
            w = x_rot(angles[j], w);
            w = [w[0] * zl, w[1] * zr];
        }
    }
    (r, jac)
}

fn symmetric_newton(c: &[f64], max_iterations: usize) -> Vec<f64> {
    let l = c.len() - 1;
    let m = l / 2 + 1;
    // the real part is even in θ and has the parity of P under θ → π − θ
    let thetas: Vec<f64> = (0..m)
        .map(|i| 0.5 * PI * (i as f64 + 0.5) / m as f64)
        .collect();
    let targets: Vec<f64> = thetas.iter().map(|t| chebyshev_eval(c, t.cos())).collect();
    let mut psi = vec![0.0; m];
    psi[0] = PI / 4.0;
    let eval = |psi: &[f64]| {
        let (r, jac) = residual_jacobian(&expand_symmetric(psi, l), &thetas, &targets);
        let res = DVector::from_iterator(m, r.iter().map(|z| z.re));
        let mut js = DMatrix::zeros(m, m);
        for j in 0..=l {
            for i in 0..m {
                js[(i, j.min(l - j))] += jac[(i, j)].re;
            }
        }
        (res, js)
    };
    let (mut res, mut js) = eval(&psi);
    let mut norm = res.amax();
    for _ in 0..max_iterations {
        if norm < 1e-14 {
            break;
        }
        let Some(step) = js.clone().lu().solve(&res) else {
            break;
        };
        // halve the step until the residual decreases
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let trial: Vec<f64> = psi
                .iter()
                .zip(step.iter())
                .map(|(p, s)| p - t * s)
                .collect();
            let (rn, jn) = eval(&trial);
            let nn = rn.amax();
            if nn < norm {
                psi = trial;
                res = rn;
                js = jn;
                norm = nn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    expand_symmetric(&psi, l)
}
