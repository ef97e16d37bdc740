//! Command-line front end for the qsense experiments.
//!
//! Every numeric flag accepts either a number or `sweep:<lo>:<hi>:<lin|log>:<count>`;
//! a run covers the cartesian product of all flag values (first flag
//! slowest). Each point draws from `rng::child(seed, point_index)` and
//! results are written in point order regardless of the thread count.
//!
//! Outputs land in `--out` (default `qsense-out`): `<command>.csv` with 12
//! significant digits and `<command>.jsonl` with one run record per protocol
//! invocation, each echoing the resolved configuration and seeds.
//!
//! Exit status: 0 success, 1 runtime failure, 2 configuration error,
//! 3 failed assertion or bound check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use qsense::conventional::{scan_solve, scan_time_constant, ProtocolOutcome, ScanOptions};
use qsense::dqss::{improvement, optimize, KStarSample, NvRegister, OptimizerGrid, RegisterConfig};
use qsense::limits::{self, Estimate, PiecewiseModulation, ProtocolUnderTest};
use qsense::oracle_synth::{synth_oracle, BooleanFunctionSpec, OracleOpts};
use qsense::qdyn::AcSignal;
use qsense::qss::{qss_noisy_solve, qss_plan, qss_subband_solve, NoiseSchedule, QssConfig};
use qsense::rng::{child, child_seed, Rng};
use qsense::signal::SensingProblem;
use qsense::{khz, to_khz};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "QSENSE_JOBS";

/// A numeric flag value: a single number or a sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Value(f64),
    Sweep {
        lo: f64,
        hi: f64,
        log: bool,
        count: usize,
    },
}

impl Param {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Param::Value(v) => vec![v],
            Param::Sweep { lo, count: 1, .. } => vec![lo],
            Param::Sweep { lo, hi, log, count } => (0..count)
                .map(|j| {
                    let u = j as f64 / (count - 1) as f64;
                    if j + 1 == count {
                        hi
                    } else if log {
                        (lo.ln() + u * (hi / lo).ln()).exp()
                    } else {
                        lo + u * (hi - lo)
                    }
                })
                .collect(),
        }
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let Some(rest) = s.strip_prefix("sweep:") else {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| format!("not a number: {s:?}"))?;
            if !v.is_finite() {
                return Err(format!("not finite: {s:?}"));
            }
            return Ok(Param::Value(v));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 4 {
            return Err(format!(
                "expected sweep:<lo>:<hi>:<lin|log>:<count>, got {s:?}"
            ));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| format!("bad sweep start {:?}", parts[0]))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| format!("bad sweep end {:?}", parts[1]))?;
        let log = match parts[2] {
            "lin" => false,
            "log" => true,
            other => return Err(format!("sweep scale must be lin or log, got {other:?}")),
        };
        let count: usize = parts[3]
            .parse()
            .map_err(|_| format!("bad sweep count {:?}", parts[3]))?;
        if count == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(format!("invalid sweep {s:?}"));
        }
        if log && !(lo > 0.0 && hi > 0.0) {
            return Err(format!("log sweep needs positive bounds, got {s:?}"));
        }
        Ok(Param::Sweep { lo, hi, log, count })
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Param::Value(v) => write!(f, "{v}"),
            Param::Sweep { lo, hi, log, count } => {
                write!(
                    f,
                    "sweep:{lo}:{hi}:{}:{count}",
                    if log { "log" } else { "lin" }
                )
            }
        }
    }
}

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Param::Value(v) => s.serialize_f64(v),
            _ => s.serialize_str(&self.to_string()),
        }
    }
}

/// Formats with 12 significant digits, trailing zeros trimmed.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let decimals = (11 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mantissa, exp) = s.split_once('e').unwrap();
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{exp}")
    }
}

#[derive(Parser, Debug)]
#[command(name = "qsense", version, about = "AC-field sensing experiments")]
pub struct Cli {
    /// Root seed; point i uses the derived seed child(seed, i).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "qsense-out")]
    pub out: PathBuf,
    /// Worker threads (default: $QSENSE_JOBS, else available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Linear CPMG scan over a band.
    Conventional(ConventionalArgs),
    /// Grover-search sensing on one sub-band.
    Qss(QssArgs),
    /// Chunked search under sensor dephasing.
    QssNoisy(QssNoisyArgs),
    /// Improvement factor of the NV-register demonstration.
    Dqss(DqssArgs),
    /// Full (N_G, B_R0) optimizer table of the NV-register demonstration.
    DqssOptimize(DqssArgs),
    /// Numerical checks of the distinguishability and QFI bounds.
    Limits(LimitsArgs),
    /// Boolean oracle synthesis and verification.
    Oracle(OracleArgs),
    /// Runs another subcommand from a JSON config file.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SignalArgs {
    /// Signal strength per sensor in kHz; 0 means no signal.
    #[arg(long, default_value = "0")]
    pub signal_khz: Param,
    /// Signal frequency in kHz (default: uniform in the band per trial).
    #[arg(long)]
    pub signal_f_khz: Option<Param>,
    /// Trials per point.
    #[arg(long, default_value = "10")]
    pub trials: Param,
    /// Include full transcripts in the run records.
    #[arg(long)]
    pub transcript: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConventionalArgs {
    #[arg(long, default_value = "1")]
    pub b_min_khz: Param,
    #[arg(long, default_value = "100")]
    pub f_min_khz: Param,
    #[arg(long, default_value = "200")]
    pub f_max_khz: Param,
    #[arg(long, default_value = "1")]
    pub n_s: Param,
    /// CPMG iterations per bin.
    #[arg(long, default_value = "7")]
    pub m: Param,
    #[command(flatten)]
    pub signal: SignalArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constants {
    /// Marked angles capped at π/4.
    Default,
    /// Marked angles reach π/2 (wider angle gap at small x).
    Desk,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct QssArgs {
    #[arg(long, default_value = "0.001")]
    pub b_min_khz: Param,
    #[arg(long, default_value = "100000")]
    pub f_lo_khz: Param,
    #[arg(long, default_value = "100010")]
    pub f_hi_khz: Param,
    #[arg(long, default_value = "1")]
    pub n_s: Param,
    #[arg(long, value_enum, default_value_t = Constants::Desk)]
    pub constants: Constants,
    #[command(flatten)]
    pub signal: SignalArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct QssNoisyArgs {
    #[arg(long, default_value = "0.001")]
    pub b_min_khz: Param,
    #[arg(long, default_value = "100000")]
    pub f_lo_khz: Param,
    #[arg(long, default_value = "100040")]
    pub f_hi_khz: Param,
    #[arg(long, default_value = "1")]
    pub n_s: Param,
    /// Sensor coherence time; Γ = 1/T₂.
    #[arg(long, default_value = "0.5")]
    pub t2_ms: Param,
    #[arg(long, default_value = "1")]
    pub c_width: Param,
    #[arg(long, default_value = "0.1")]
    pub c_time: Param,
    #[arg(long, default_value = "1")]
    pub c_repeat: Param,
    #[arg(long, value_enum, default_value_t = Constants::Desk)]
    pub constants: Constants,
    #[command(flatten)]
    pub signal: SignalArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DqssArgs {
    /// Nuclear spins in the synthetic register (ignored with --register).
    #[arg(long, default_value = "4")]
    pub nq: Param,
    /// Coherence time; overrides the register file when given.
    #[arg(long)]
    pub t2_ms: Option<Param>,
    /// Signal strength in kHz.
    #[arg(long, default_value = "0.1")]
    pub b_khz: Param,
    /// Grover rounds; with --b-r0-khz skips the optimizer.
    #[arg(long)]
    pub n_g: Option<Param>,
    #[arg(long)]
    pub b_r0_khz: Option<Param>,
    /// Signal frequencies averaged: `all` or a sample size.
    #[arg(long, default_value = "auto")]
    pub kstar: String,
    /// Register JSON: {n_q, couplings_khz, delta0_khz, t2_ms}.
    #[arg(long)]
    pub register: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitCheck {
    ShortTime,
    LongTime,
    Qfi,
    Csp,
    Lindblad,
    All,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LimitsArgs {
    #[arg(long, value_enum, default_value_t = LimitCheck::All)]
    pub check: LimitCheck,
    #[arg(long, default_value = "1000")]
    pub samples: Param,
    /// Random protocols per check.
    #[arg(long, default_value = "4")]
    pub protocols: Param,
    #[arg(long, default_value = "2")]
    pub n_s: Param,
    #[arg(long, default_value = "1")]
    pub n_q: Param,
    /// B_min in rad/ms.
    #[arg(long, default_value = "1")]
    pub b_min: Param,
    #[arg(long, default_value = "20")]
    pub band_lo: Param,
    #[arg(long, default_value = "120")]
    pub band_hi: Param,
    /// Duration of the long-time, QFI and classical-processing checks in units of 1/(n_S B_min).
    #[arg(long, default_value = "4")]
    pub tau_units: Param,
    /// Gate rate of the random protocols.
    #[arg(long, default_value = "5")]
    pub rate: Param,
    /// Pieces of the random modulations.
    #[arg(long, default_value = "8")]
    pub pieces: Param,
    /// Dephasing rate of the Lindblad check.
    #[arg(long, default_value = "0.1")]
    pub gamma: Param,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OracleArgs {
    /// Truth table as a bitstring (rows in ascending x, m bits each).
    #[arg(long, conflicts_with = "table_file")]
    pub table: Option<String>,
    /// File holding the truth-table bitstring.
    #[arg(long)]
    pub table_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Base tone ω₀ in rad/ms.
    #[arg(long, default_value = "1")]
    pub omega0: Param,
    #[arg(long, default_value = "2048")]
    pub trotter_steps: Param,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// JSON file: {"command": "...", "args": {"flag": value, ...}, "seed": n}.
    #[arg(long)]
    pub config: PathBuf,
}

/// Failure categories mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Assertion(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Assertion(_) => EXIT_ASSERTION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Assertion(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<qsense::Error> for CliError {
    fn from(e: qsense::Error) -> Self {
        use qsense::Error as E;
        match e {
            E::NonFinite(_)
            | E::Invalid(_)
            | E::Precondition(_)
            | E::TooLarge(_)
            | E::Dim(..)
            | E::DegreeCap { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Output of one sweep point.
struct PointResult {
    rows: Vec<Vec<String>>,
    records: Vec<Value>,
    /// Failed assertions at this point.
    failures: Vec<String>,
}

/// Cartesian product of named axes, first axis slowest.
fn grid(axes: &[(&'static str, Vec<f64>)]) -> Vec<BTreeMap<&'static str, f64>> {
    let mut points = vec![BTreeMap::new()];
    for (name, values) in axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for &v in values {
                let mut q = p.clone();
                q.insert(*name, v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

fn axis(name: &'static str, p: &Param) -> (&'static str, Vec<f64>) {
    (name, p.values())
}

fn count(v: f64, name: &str) -> CliResult<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!(
            "{name} must be a nonnegative integer, got {v}"
        )))
    }
}

/// Stage name of a transcript label: the text before any bin index.
fn stage_key(label: &str) -> String {
    let head = label.split(" -> ").next().unwrap_or(label);
    head.trim_end_matches(|c: char| c.is_ascii_digit() || c == ' ')
        .to_string()
}

fn stages(outcome: &ProtocolOutcome) -> Value {
    let mut map: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for e in &outcome.transcript {
        let slot = map.entry(stage_key(&e.label)).or_insert((0, 0.0));
        slot.0 += 1;
        slot.1 += e.duration;
    }
    Value::Object(
        map.into_iter()
            .map(|(k, (n, d))| (k, json!({"count": n, "duration_ms": d})))
            .collect(),
    )
}

fn outcome_record(outcome: &ProtocolOutcome, full: bool) -> Value {
    let mut v = json!({
        "detected": outcome.detected,
        "elapsed_ms": outcome.elapsed_sensing_time,
        "stages": stages(outcome),
    });
    if full {
        v["transcript"] = serde_json::to_value(&outcome.transcript).unwrap();
    }
    v
}

struct Context<'a> {
    command: &'static str,
    config: Value,
    seed: u64,
    out: &'a Path,
    jobs: usize,
}

impl Context<'_> {
    fn record(&self, index: usize, point: &BTreeMap<&'static str, f64>, extra: Value) -> Value {
        let mut r = json!({
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "point": {"index": index, "seed": child_seed(self.seed, index as u64), "values": point},
        });
        if let (Value::Object(base), Value::Object(more)) = (&mut r, extra) {
            base.extend(more);
        }
        r
    }
}

fn run_points<F>(
    ctx: &Context,
    header: &[&str],
    axes: Vec<(&'static str, Vec<f64>)>,
    eval: F,
) -> CliResult<()>
where
    F: Fn(usize, &BTreeMap<&'static str, f64>, &mut Rng) -> CliResult<PointResult> + Sync,
{
    let points = grid(&axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<CliResult<PointResult>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = child(ctx.seed, i as u64);
                eval(i, p, &mut rng)
            })
            .collect()
    });
    fs::create_dir_all(ctx.out)?;
    let mut csv = csv::Writer::from_path(ctx.out.join(format!("{}.csv", ctx.command)))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    csv.write_record(header)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut jsonl = fs::File::create(ctx.out.join(format!("{}.jsonl", ctx.command)))?;
    let mut failures = Vec::new();
    for r in results {
        let r = r?;
        for row in r.rows {
            csv.write_record(&row)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        for rec in r.records {
            writeln!(jsonl, "{}", serde_json::to_string(&rec).unwrap())?;
        }
        failures.extend(r.failures);
    }
    csv.flush()?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failures.join("; ")))
    }
}

fn optional_axis(name: &'static str, p: &Option<Param>) -> Option<(&'static str, Vec<f64>)> {
    p.as_ref().map(|p| axis(name, p))
}

fn draw_signal(
    strength: f64,
    fixed_frequency: Option<f64>,
    band: (f64, f64),
    rng: &mut Rng,
) -> CliResult<Option<AcSignal>> {
    if strength <= 0.0 {
        return Ok(None);
    }
    let w = fixed_frequency.unwrap_or_else(|| rng.random_range(band.0..=band.1));
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    Ok(Some(AcSignal::new(strength, w, phi)?))
}

fn conventional(ctx: &Context, a: &ConventionalArgs) -> CliResult<()> {
    let mut axes = vec![
        axis("b_min_khz", &a.b_min_khz),
        axis("f_min_khz", &a.f_min_khz),
        axis("f_max_khz", &a.f_max_khz),
        axis("n_s", &a.n_s),
        axis("m", &a.m),
        axis("signal_khz", &a.signal.signal_khz),
        axis("trials", &a.signal.trials),
    ];
    axes.extend(optional_axis("signal_f_khz", &a.signal.signal_f_khz));
    let header = [
        "point",
        "b_min_khz",
        "f_min_khz",
        "f_max_khz",
        "n_s",
        "m",
        "signal_khz",
        "trials",
        "detections",
        "mean_tau_ms",
        "tau_scale_ratio",
    ];
    run_points(ctx, &header, axes, |i, p, rng| {
        let n_s = count(p["n_s"], "n_s")? as u32;
        let problem = SensingProblem::new(
            khz(p["b_min_khz"]),
            khz(p["f_min_khz"]),
            khz(p["f_max_khz"]),
            n_s,
        )?;
        let options = ScanOptions {
            m: count(p["m"], "m")? as u32,
            abort_on_detection: true,
        };
        let trials = count(p["trials"], "trials")?;
        let band = (problem.omega_min, problem.omega_max);
        let mut records = Vec::with_capacity(trials);
        let (mut hits, mut tau) = (0usize, 0.0);
        for t in 0..trials {
            let signal = draw_signal(
                khz(p["signal_khz"]),
                p.get("signal_f_khz").map(|&f| khz(f)),
                band,
                rng,
            )?;
            let out = scan_solve(&problem, signal.as_ref(), options, rng)?;
            hits += out.detected as usize;
            tau += out.elapsed_sensing_time;
            records.push(ctx.record(i, p, json!({"trial": t, "signal": signal, "outcome": outcome_record(&out, a.signal.transcript)})));
        }
        let mean = if trials > 0 { tau / trials as f64 } else { 0.0 };
        let row = vec![
            i.to_string(),
            sig12(p["b_min_khz"]),
            sig12(p["f_min_khz"]),
            sig12(p["f_max_khz"]),
            n_s.to_string(),
            options.m.to_string(),
            sig12(p["signal_khz"]),
            trials.to_string(),
            hits.to_string(),
            sig12(mean),
            sig12(scan_time_constant(&problem, mean)),
        ];
        Ok(PointResult {
            rows: vec![row],
            records,
            failures: Vec::new(),
        })
    })
}

fn qss_config(c: Constants) -> QssConfig {
    match c {
        Constants::Default => QssConfig::default(),
        Constants::Desk => QssConfig::desk(),
    }
}

fn qss(ctx: &Context, a: &QssArgs) -> CliResult<()> {
    let mut axes = vec![
        axis("b_min_khz", &a.b_min_khz),
        axis("f_lo_khz", &a.f_lo_khz),
        axis("f_hi_khz", &a.f_hi_khz),
        axis("n_s", &a.n_s),
        axis("signal_khz", &a.signal.signal_khz),
        axis("trials", &a.signal.trials),
    ];
    axes.extend(optional_axis("signal_f_khz", &a.signal.signal_f_khz));
    let header = [
        "point",
        "b_min_khz",
        "f_lo_khz",
        "f_hi_khz",
        "n_s",
        "signal_khz",
        "trials",
        "bins",
        "degree",
        "detections",
        "mean_tau_ms",
    ];
    let config = qss_config(a.constants);
    run_points(ctx, &header, axes, |i, p, rng| {
        let n_s = count(p["n_s"], "n_s")?.max(1) as f64;
        let b = n_s * khz(p["b_min_khz"]);
        let band = (khz(p["f_lo_khz"]), khz(p["f_hi_khz"]));
        let (bins, degree) = match qss_plan(b, band, &config) {
            Ok(plan) => (plan.n(), plan.degree()),
            Err(qsense::Error::Precondition(_)) => (0, 0),
            Err(e) => return Err(e.into()),
        };
        let trials = count(p["trials"], "trials")?;
        let mut records = Vec::with_capacity(trials);
        let (mut hits, mut tau) = (0usize, 0.0);
        for t in 0..trials {
            let signal = draw_signal(
                khz(p["signal_khz"]),
                p.get("signal_f_khz").map(|&f| khz(f)),
                band,
                rng,
            )?;
            let collective = signal.map(|s| s.scaled(n_s));
            let out = qss_subband_solve(b, band, collective.as_ref(), &config, rng)?;
            hits += out.detected as usize;
            tau += out.elapsed_sensing_time;
            records.push(ctx.record(i, p, json!({"trial": t, "signal": signal, "outcome": outcome_record(&out, a.signal.transcript)})));
        }
        let mean = if trials > 0 { tau / trials as f64 } else { 0.0 };
        let row = vec![
            i.to_string(),
            sig12(p["b_min_khz"]),
            sig12(p["f_lo_khz"]),
            sig12(p["f_hi_khz"]),
            sig12(n_s),
            sig12(p["signal_khz"]),
            trials.to_string(),
            bins.to_string(),
            degree.to_string(),
            hits.to_string(),
            sig12(mean),
        ];
        Ok(PointResult {
            rows: vec![row],
            records,
            failures: Vec::new(),
        })
    })
}

fn qss_noisy(ctx: &Context, a: &QssNoisyArgs) -> CliResult<()> {
    let mut axes = vec![
        axis("b_min_khz", &a.b_min_khz),
        axis("f_lo_khz", &a.f_lo_khz),
        axis("f_hi_khz", &a.f_hi_khz),
        axis("n_s", &a.n_s),
        axis("t2_ms", &a.t2_ms),
        axis("c_width", &a.c_width),
        axis("c_time", &a.c_time),
        axis("c_repeat", &a.c_repeat),
        axis("signal_khz", &a.signal.signal_khz),
        axis("trials", &a.signal.trials),
    ];
    axes.extend(optional_axis("signal_f_khz", &a.signal.signal_f_khz));
    let header = [
        "point",
        "b_min_khz",
        "f_lo_khz",
        "f_hi_khz",
        "n_s",
        "t2_ms",
        "signal_khz",
        "trials",
        "chunks",
        "repeats",
        "detections",
        "mean_tau_ms",
    ];
    let config = qss_config(a.constants);
    run_points(ctx, &header, axes, |i, p, rng| {
        let n_s = count(p["n_s"], "n_s")? as u32;
        let problem = SensingProblem::new(
            khz(p["b_min_khz"]),
            khz(p["f_lo_khz"]),
            khz(p["f_hi_khz"]),
            n_s,
        )?;
        let t2 = p["t2_ms"];
        if !(t2 > 0.0) {
            return Err(CliError::Config("t2_ms must be positive".into()));
        }
        let schedule = NoiseSchedule {
            c_width: p["c_width"],
            c_time: p["c_time"],
            c_repeat: p["c_repeat"],
        };
        let trials = count(p["trials"], "trials")?;
        let band = (problem.omega_min, problem.omega_max);
        let mut records = Vec::with_capacity(trials);
        let (mut hits, mut tau, mut chunks, mut repeats) = (0usize, 0.0, 0usize, 0u32);
        for t in 0..trials {
            let signal = draw_signal(
                khz(p["signal_khz"]),
                p.get("signal_f_khz").map(|&f| khz(f)),
                band,
                rng,
            )?;
            let out =
                qss_noisy_solve(&problem, signal.as_ref(), 1.0 / t2, &config, &schedule, rng)?;
            hits += out.outcome.detected as usize;
            tau += out.outcome.elapsed_sensing_time;
            (chunks, repeats) = (out.chunks, out.repeats);
            records.push(ctx.record(
                i,
                p,
                json!({
                    "trial": t,
                    "signal": signal,
                    "chunks": out.chunks,
                    "repeats": out.repeats,
                    "chunk_width": out.chunk_width,
                    "t_noise_ms": out.t_noise,
                    "positive_chunks": out.positive_chunks,
                    "outcome": outcome_record(&out.outcome, a.signal.transcript),
                }),
            ));
        }
        let mean = if trials > 0 { tau / trials as f64 } else { 0.0 };
        let row = vec![
            i.to_string(),
            sig12(p["b_min_khz"]),
            sig12(p["f_lo_khz"]),
            sig12(p["f_hi_khz"]),
            n_s.to_string(),
            sig12(t2),
            sig12(p["signal_khz"]),
            trials.to_string(),
            chunks.to_string(),
            repeats.to_string(),
            hits.to_string(),
            sig12(mean),
        ];
        Ok(PointResult {
            rows: vec![row],
            records,
            failures: Vec::new(),
        })
    })
}

fn parse_kstar(s: &str, dim: usize) -> CliResult<KStarSample> {
    match s {
        "all" => Ok(KStarSample::All),
        "auto" => Ok(if dim <= 64 {
            KStarSample::All
        } else {
            KStarSample::Random(16)
        }),
        n => n
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(KStarSample::Random)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "--kstar must be all, auto or a positive count, got {n:?}"
                ))
            }),
    }
}

fn load_register(path: &Path) -> CliResult<RegisterConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn dqss(ctx: &Context, a: &DqssArgs, table: bool) -> CliResult<()> {
    let file = a.register.as_deref().map(load_register).transpose()?;
    let mut axes = Vec::new();
    if file.is_none() {
        axes.push(axis("nq", &a.nq));
    }
    axes.extend(optional_axis("t2_ms", &a.t2_ms));
    axes.push(axis("b_khz", &a.b_khz));
    axes.extend(optional_axis("n_g", &a.n_g));
    axes.extend(optional_axis("b_r0_khz", &a.b_r0_khz));
    if file.is_none() && a.t2_ms.is_none() {
        return Err(CliError::Config(
            "--t2-ms is required without --register".into(),
        ));
    }
    if a.n_g.is_some() != a.b_r0_khz.is_some() {
        return Err(CliError::Config("--n-g and --b-r0-khz go together".into()));
    }
    let header: &[&str] = if table {
        &["B_khz", "T2_ms", "n_Q", "N_G", "B_R0_khz", "I_mean"]
    } else {
        &[
            "B_khz", "T2_ms", "n_Q", "N_G", "B_R0_khz", "I_mean", "I_var",
        ]
    };
    run_points(ctx, header, axes, |i, p, rng| {
        let reg = match &file {
            Some(cfg) => {
                let r = NvRegister::from_config(cfg)?;
                match p.get("t2_ms") {
                    Some(&t2) if t2 > 0.0 => r.with_gamma(1.0 / t2),
                    Some(_) => return Err(CliError::Config("t2_ms must be positive".into())),
                    None => r,
                }
            }
            None => {
                let t2 = p["t2_ms"];
                if !(t2 > 0.0) {
                    return Err(CliError::Config("t2_ms must be positive".into()));
                }
                NvRegister::synthetic(count(p["nq"], "nq")?, t2)?
            }
        };
        let t2 = 1.0 / reg.gamma;
        let b = khz(p["b_khz"]);
        let sample = parse_kstar(&a.kstar, reg.dim())?;
        let base = vec![sig12(p["b_khz"]), sig12(t2), reg.n_q().to_string()];
        if let (Some(&ng), Some(&br)) = (p.get("n_g"), p.get("b_r0_khz")) {
            let rep = improvement(&reg, b, count(ng, "n_g")?, khz(br), sample, rng)?;
            let mut row = base.clone();
            row.extend([rep.n_g.to_string(), sig12(br), sig12(rep.i_mean)]);
            if !table {
                row.push(sig12(rep.i_var));
            }
            let record = ctx.record(
                i,
                p,
                json!({"register": reg.to_config(), "k_stars": rep.k_stars, "n_g": rep.n_g, "b_r0_khz": br,
                       "i_mean": rep.i_mean, "i_var": rep.i_var, "tau_conv_ms": rep.tau_conv, "tau_dqss_ms": rep.tau_dqss}),
            );
            return Ok(PointResult {
                rows: vec![row],
                records: vec![record],
                failures: Vec::new(),
            });
        }
        let grid = OptimizerGrid::around_ansatz(&reg, b);
        let res = optimize(&reg, b, &grid, sample, rng)?;
        let rows = if table {
            let mut rows = Vec::new();
            for (r, br) in grid.b_r0.iter().enumerate() {
                for (n, val) in res.table[r].iter().enumerate() {
                    let mut row = base.clone();
                    row.extend([n.to_string(), sig12(to_khz(*br)), sig12(*val)]);
                    rows.push(row);
                }
            }
            rows
        } else {
            let mut row = base.clone();
            row.extend([
                res.n_g.to_string(),
                sig12(to_khz(res.b_r0)),
                sig12(res.i_mean),
                sig12(res.i_var),
            ]);
            vec![row]
        };
        let record = ctx.record(
            i,
            p,
            json!({"register": reg.to_config(), "k_stars": res.k_stars, "n_g": res.n_g, "b_r0_khz": to_khz(res.b_r0),
                   "i_mean": res.i_mean, "i_var": res.i_var,
                   "grid_b_r0_khz": grid.b_r0.iter().map(|&g| to_khz(g)).collect::<Vec<_>>(), "n_g_max": grid.n_g_max}),
        );
        Ok(PointResult {
            rows,
            records: vec![record],
            failures: Vec::new(),
        })
    })
}

fn verdict(check: &str, protocol: usize, est: &Estimate, bound: f64) -> (Vec<String>, Value, bool) {
    let holds = est.within(bound, 3.0);
    let row = vec![
        check.to_string(),
        protocol.to_string(),
        sig12(est.mean),
        sig12(est.stderr),
        sig12(bound),
        holds.to_string(),
    ];
    let v = json!({"check": check, "protocol": protocol, "estimate": est.mean, "stderr": est.stderr,
                   "samples": est.samples, "bound": bound, "holds": holds});
    (row, v, holds)
}

fn limits_cmd(ctx: &Context, a: &LimitsArgs) -> CliResult<()> {
    let axes = vec![
        axis("samples", &a.samples),
        axis("protocols", &a.protocols),
        axis("n_s", &a.n_s),
        axis("n_q", &a.n_q),
        axis("b_min", &a.b_min),
        axis("band_lo", &a.band_lo),
        axis("band_hi", &a.band_hi),
        axis("tau_units", &a.tau_units),
        axis("rate", &a.rate),
        axis("pieces", &a.pieces),
        axis("gamma", &a.gamma),
    ];
    let header = [
        "point", "check", "protocol", "estimate", "stderr", "bound", "holds",
    ];
    let wants = |c: LimitCheck| a.check == LimitCheck::All || a.check == c;
    run_points(ctx, &header, axes, |i, p, rng| {
        let samples = count(p["samples"], "samples")?;
        let protocols = count(p["protocols"], "protocols")?;
        let (n_s, n_q) = (count(p["n_s"], "n_s")?, count(p["n_q"], "n_q")?);
        let b = p["b_min"];
        let band = (p["band_lo"], p["band_hi"]);
        let width = band.1 - band.0;
        let unit = 1.0 / (n_s.max(1) as f64 * b);
        let tau = p["tau_units"] * unit;
        let rate = p["rate"];
        let mut out = PointResult {
            rows: Vec::new(),
            records: Vec::new(),
            failures: Vec::new(),
        };
        let push = |name: &str, k: usize, est: &Estimate, bound: f64, out: &mut PointResult| {
            let (mut row, v, holds) = verdict(name, k, est, bound);
            row.insert(0, i.to_string());
            out.rows.push(row);
            out.records.push(ctx.record(i, p, v));
            if !holds {
                out.failures
                    .push(format!("{name} bound violated at point {i}, protocol {k}"));
            }
        };
        for k in 0..protocols {
            if wants(LimitCheck::ShortTime) {
                let put = ProtocolUnderTest::random(n_s, n_q, unit, rate, rng)?;
                let est = limits::avg_distinguishability(&put, b, band, samples, rng)?;
                push(
                    "short-time",
                    k,
                    &est,
                    limits::short_time_bound(n_s, b, width),
                    &mut out,
                );
            }
            if wants(LimitCheck::LongTime) {
                let put = ProtocolUnderTest::random(n_s, n_q, tau, rate, rng)?;
                let est = limits::avg_distinguishability(&put, b, band, samples, rng)?;
                push(
                    "long-time",
                    k,
                    &est,
                    limits::long_time_bound(n_s, b, width, tau),
                    &mut out,
                );
            }
            if wants(LimitCheck::Qfi) {
                let put = ProtocolUnderTest::random(n_s, n_q, tau, rate, rng)?;
                let est = limits::avg_qfi(&put, band, samples, rng)?;
                push("qfi", k, &est, limits::qfi_bound(n_s, width, tau), &mut out);
            }
            if wants(LimitCheck::Csp) {
                let pieces = count(p["pieces"], "pieces")?;
                let chis = (0..n_s)
                    .map(|_| PiecewiseModulation::random(tau, pieces, rng))
                    .collect::<qsense::Result<Vec<_>>>()?;
                let est = limits::csp_distinguishability(&chis, b, band, samples, rng)?;
                push(
                    "csp",
                    k,
                    &est,
                    limits::csp_bound(n_s, b, width, tau),
                    &mut out,
                );
            }
            if wants(LimitCheck::Lindblad) {
                let u = limits::haar_unitary(4, rng);
                let scale: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let d = qsense::qdyn::CMat::from_fn(4, 4, |r, c| {
                    if r == c {
                        qsense::C64::new(scale[r], 0.0)
                    } else {
                        qsense::C64::new(0.0, 0.0)
                    }
                });
                let h = u.matrix() * d * u.matrix().adjoint();
                let rho0 = qsense::qdyn::CMat::from_element(4, 4, qsense::C64::new(0.25, 0.0));
                let check = limits::lindblad_bound_check(
                    |_t| h.clone(),
                    &limits::dephasing_jumps(2, p["gamma"]),
                    1.0,
                    &rho0,
                )?;
                let est = Estimate {
                    mean: check.measured,
                    stderr: 0.0,
                    samples: 1,
                };
                push("lindblad", k, &est, check.bound, &mut out);
            }
        }
        Ok(out)
    })
}

fn oracle_cmd(ctx: &Context, a: &OracleArgs) -> CliResult<()> {
    let bits = match (&a.table, &a.table_file) {
        (Some(t), None) => t.clone(),
        (None, Some(path)) => fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        _ => {
            return Err(CliError::Config(
                "give exactly one of --table or --table-file".into(),
            ))
        }
    };
    let spec = BooleanFunctionSpec::from_bitstring(&bits, a.m)?;
    let axes = vec![
        axis("omega0", &a.omega0),
        axis("trotter_steps", &a.trotter_steps),
    ];
    let header = [
        "point",
        "n",
        "m",
        "omega0",
        "trotter_steps",
        "phase_residual",
        "max_deviation",
        "min_sensor_fidelity",
        "pass",
    ];
    let reports = std::sync::Mutex::new(Vec::new());
    let result = run_points(ctx, &header, axes, |i, p, _rng| {
        let steps = count(p["trotter_steps"], "trotter_steps")?;
        let o = synth_oracle(
            &spec,
            p["omega0"],
            OracleOpts {
                trotter_steps: steps,
                ..OracleOpts::default()
            },
        )?;
        let rep = o.report();
        let pass = rep.max_deviation < 1e-4 && rep.min_sensor_fidelity > 1.0 - 1e-6;
        let row = vec![
            i.to_string(),
            spec.n.to_string(),
            spec.m.to_string(),
            sig12(p["omega0"]),
            steps.to_string(),
            sig12(rep.phase_residual),
            sig12(rep.max_deviation),
            sig12(rep.min_sensor_fidelity),
            pass.to_string(),
        ];
        let record = ctx.record(i, p, json!({"report": rep, "pass": pass}));
        reports.lock().unwrap().push((i, rep));
        let failures = if pass {
            Vec::new()
        } else {
            vec![format!("oracle deviation at point {i}")]
        };
        Ok(PointResult {
            rows: vec![row],
            records: vec![record],
            failures,
        })
    });
    let mut reports = reports.into_inner().unwrap();
    reports.sort_by_key(|r| r.0);
    let reports: Vec<_> = reports.into_iter().map(|r| r.1).collect();
    if !reports.is_empty() {
        fs::create_dir_all(ctx.out)?;
        fs::write(
            ctx.out.join("oracle.json"),
            serde_json::to_string_pretty(&reports).unwrap() + "\n",
        )?;
    }
    result
}

fn sweep_argv(
    cli_seed: u64,
    out: &Path,
    jobs: Option<usize>,
    config: &Path,
) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(config)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    let command = v["command"]
        .as_str()
        .ok_or_else(|| CliError::Config("sweep config needs a \"command\" string".into()))?;
    if command == "sweep" {
        return Err(CliError::Config("sweep configs cannot nest".into()));
    }
    let seed = match &v["seed"] {
        Value::Null => cli_seed,
        s => s
            .as_u64()
            .ok_or_else(|| CliError::Config("seed must be a nonnegative integer".into()))?,
    };
    let mut argv = vec![
        "qsense".to_string(),
        "--seed".into(),
        seed.to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    if let Some(j) = jobs {
        argv.extend(["--jobs".into(), j.to_string()]);
    }
    argv.push(command.to_string());
    if let Some(args) = v.get("args") {
        let obj = args
            .as_object()
            .ok_or_else(|| CliError::Config("\"args\" must be an object".into()))?;
        for (k, val) in obj {
            let flag = format!("--{}", k.replace('_', "-"));
            match val {
                Value::Bool(true) => argv.push(flag),
                Value::Bool(false) | Value::Null => {}
                Value::String(s) => argv.extend([flag, s.clone()]),
                Value::Number(n) => argv.extend([flag, n.to_string()]),
                other => {
                    return Err(CliError::Config(format!(
                        "unsupported value for {k}: {other}"
                    )))
                }
            }
        }
    }
    Ok(argv)
}

fn default_jobs() -> usize {
    std::env::var(JOBS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let jobs = cli.jobs.filter(|&j| j > 0).unwrap_or_else(default_jobs);
    let (name, config): (&'static str, Value) = match &cli.command {
        Command::Conventional(a) => ("conventional", serde_json::to_value(a).unwrap()),
        Command::Qss(a) => ("qss", serde_json::to_value(a).unwrap()),
        Command::QssNoisy(a) => ("qss-noisy", serde_json::to_value(a).unwrap()),
        Command::Dqss(a) => ("dqss", serde_json::to_value(a).unwrap()),
        Command::DqssOptimize(a) => ("dqss-optimize", serde_json::to_value(a).unwrap()),
        Command::Limits(a) => ("limits", serde_json::to_value(a).unwrap()),
        Command::Oracle(a) => ("oracle", serde_json::to_value(a).unwrap()),
        Command::Sweep(a) => {
            let argv = sweep_argv(cli.seed, &cli.out, cli.jobs, &a.config)?;
            let inner = Cli::try_parse_from(&argv).map_err(|e| CliError::Config(e.to_string()))?;
            return dispatch(inner);
        }
    };
    let ctx = Context {
        command: name,
        config,
        seed: cli.seed,
        out: &cli.out,
        jobs,
    };
    match &cli.command {
        Command::Conventional(a) => conventional(&ctx, a),
        Command::Qss(a) => qss(&ctx, a),
        Command::QssNoisy(a) => qss_noisy(&ctx, a),
        Command::Dqss(a) => dqss(&ctx, a, false),
        Command::DqssOptimize(a) => dqss(&ctx, a, true),
        Command::Limits(a) => limits_cmd(&ctx, a),
        Command::Oracle(a) => oracle_cmd(&ctx, a),
        Command::Sweep(_) => unreachable!(),
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grammar() {
        let p: Param = "sweep:0.01:10:log:4".parse().unwrap();
        let v = p.values();
        assert_eq!(v.len(), 4);
        assert!((v[1] - 0.1).abs() < 1e-12 && v[3] == 10.0);
        let l: Param = "sweep:1:2:lin:3".parse().unwrap();
        assert_eq!(l.values(), vec![1.0, 1.5, 2.0]);
        assert!("sweep:1:2:cubic:3".parse::<Param>().is_err());
        assert!("sweep:0:2:log:3".parse::<Param>().is_err());
        assert_eq!("2.5".parse::<Param>().unwrap(), Param::Value(2.5));
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(12345.678), "12345.678");
        assert_eq!(sig12(2.0), "2");
        assert_eq!(sig12(6.02214076e23), "6.02214076e23");
        assert_eq!(sig12(-1.5e-7), "-1.5e-7");
    }

    #[test]
    fn grid_order_first_axis_slowest() {
        let g = grid(&[("a", vec![1.0, 2.0]), ("b", vec![3.0, 4.0])]);
        let flat: Vec<(f64, f64)> = g.iter().map(|p| (p["a"], p["b"])).collect();
        assert_eq!(flat, vec![(1.0, 3.0), (1.0, 4.0), (2.0, 3.0), (2.0, 4.0)]);
    }

    #[test]
    fn stage_keys_drop_indices() {
        assert_eq!(stage_key("grover odd -> bin 3"), "grover odd");
        assert_eq!(stage_key("cpmg"), "cpmg");
    }
}
