//! Simulation toolkit for AC-field sensing.
//!
//! Time is measured in milliseconds and every frequency-like quantity is an
//! angular frequency in rad/ms. Values quoted in kHz elsewhere (configs, CLI
//! flags) are cyclic and pass through [`khz`] on the way in.
//!
//! Modules, bottom-up:
//! - [`qdyn`]: propagators, block dephasing solver, distances
//! - [`signal`]: modulation profiles and filter functions
//! - [`conventional`]: CPMG detection, Ramsey variant, binned scan
//! - [`esu`]: elementary sensing unit (pulse construction, propagation, angles)
//! - [`qsp`]: shifted-sign polynomials and phase synthesis
//! - [`qss`]: bins, Grover search, the search-sensing pipeline and its noisy variant
//! - [`dqss`]: NV-register demonstration with dephasing
//! - [`limits`]: numerical checks of distinguishability and QFI bounds
//! - [`oracle_synth`]: Boolean oracles from prime-frequency tones

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conventional;
pub mod dqss;
pub mod esu;
pub mod limits;
pub mod oracle_synth;
pub mod qdyn;
pub mod qsp;
pub mod qss;
pub mod quad;
pub mod rng;
pub mod signal;

pub use num_complex::Complex64 as C64;

/// Converts a cyclic frequency in kHz to rad/ms.
pub fn khz(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * f
}

/// Converts rad/ms back to cyclic kHz.
pub fn to_khz(w: f64) -> f64 {
    w / (2.0 * std::f64::consts::PI)
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("trace deviates from one by {0:.3e}")]
    Trace(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    Dim(usize, usize),
    #[error("no convergence after {steps} steps (residual {residual:.3e})")]
    NoConvergence { steps: usize, residual: f64 },
    #[error("filter function has a pole at omega/omega_t = {0}")]
    Pole(f64),
    #[error("polynomial degree {required} exceeds cap {cap}")]
    DegreeCap { required: usize, cap: usize },
    #[error("phase synthesis residual {0:.3e} above tolerance")]
    Synthesis(f64),
    #[error("Hilbert space too large: {0} qubits")]
    TooLarge(usize),
    #[error("finite-difference residual {0:.3e} above 1%")]
    Residual(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}
