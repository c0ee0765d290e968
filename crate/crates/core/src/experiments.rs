//! Recovery-rate sweeps, explicit collisions and certificate cross-checks.
//!
//! Every random draw is seeded from the configuration: trial `t` at `m`
//! uses the ensemble seed `derive_seed(seed, [m, t])` and the signal seed
//! `derive_seed(seed, [m, t, 1])`, so results do not depend on scheduling.

use std::path::{Path, PathBuf};
use std::time::Instant;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::distance::{self, ambiguous_null_vector, certify_unique, distance_with, DistanceCriterion};
use crate::error::{Error, Result};
use crate::model::{
    complex_normal, derive_seed, measure, phase_equivalent, seeded_rng, Complex64, Field, MeasurementEnsemble,
    SparseVector,
};
use crate::numerics::{self, DEFAULT_RANK_TOL};
use crate::solution::{sparse_vector_json, SolutionSet};
use crate::solver_complex::{lifted_system, solve_l0_complex_with, ComplexSolveOptions};
use crate::solver_real::solve_l0_real;
use crate::{format, solver_real};

/// Signal entries below this magnitude are redrawn.
pub const MIN_SIGNAL_MAGNITUDE: f64 = 0.1;
/// Relative bound on `|| |Ax| - |Az| ||_inf` for a collision to count.
pub const COLLISION_TOL: f64 = 1e-10;
/// Collision pairs must differ by more than this, up to sign.
pub const COLLISION_EQUIV_TOL: f64 = 1e-6;
/// Forward-direction recovery trials in [`lemma31_bidirectional_check`].
pub const FORWARD_TRIALS: usize = 100;

fn default_tol() -> f64 {
    solver_real::DEFAULT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub field: Field,
    pub n: usize,
    pub k: usize,
    /// Inclusive.
    pub m_range: (usize, usize),
    pub trials_per_m: usize,
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Record wall-clock solve times. Off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.m_range;
        if self.trials_per_m == 0 {
            return Err(Error::invalid("trials_per_m must be at least 1"));
        }
        if self.k == 0 || self.k > self.n {
            return Err(Error::invalid(format!("k = {} outside 1..={}", self.k, self.n)));
        }
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("m_range [{lo}, {hi}] is empty or starts at 0")));
        }
        if self.k > lo {
            return Err(Error::invalid(format!("k = {} exceeds the smallest m = {lo}", self.k)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(())
    }

    /// Rows at this `m` come from a heuristic solver path.
    pub fn is_heuristic(&self, m: usize) -> bool {
        self.field == Field::Complex && self.k * self.k > m
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON config.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Mean solve time in milliseconds, rounded to 3 decimals; 0 unless timing is on.
    pub mean_ms: f64,
    /// Trials whose true support had a fragile rank decision.
    pub fragile: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

struct TrialOutcome {
    success: bool,
    fragile: bool,
    millis: f64,
}

/// A `k`-sparse signal with uniform support and normal values, each of
/// magnitude at least [`MIN_SIGNAL_MAGNITUDE`].
pub fn random_sparse_signal<R: Rng + ?Sized>(field: Field, n: usize, k: usize, rng: &mut R) -> Result<SparseVector> {
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    let mut support = sample(rng, n, k).into_vec();
    support.sort_unstable();
    let values = (0..k)
        .map(|_| loop {
            let v = match field {
                Field::Real => Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0),
                Field::Complex => complex_normal(rng),
            };
            if v.norm() >= MIN_SIGNAL_MAGNITUDE {
                break v;
            }
        })
        .collect();
    SparseVector::new(field, n, support, values)
}

/// Whether `sol` is a single class equal to `truth` up to phase.
pub fn is_exact_recovery(sol: &SolutionSet, truth: &SparseVector, tol: f64) -> bool {
    sol.is_unique() && sol.recovers(truth, tol * truth.norm_inf().max(1.0))
}

fn support_is_fragile(a: &MeasurementEnsemble, support: &[usize]) -> Result<bool> {
    let decision = match a.field() {
        Field::Real => {
            let sub = a.require_real()?.select_columns(support.iter());
            numerics::numerical_rank(&sub, DEFAULT_RANK_TOL)?
        }
        Field::Complex => {
            let sub = a.require_complex()?.select_columns(support.iter());
            numerics::numerical_rank(&lifted_system(&sub), DEFAULT_RANK_TOL)?
        }
    };
    Ok(decision.is_fragile())
}

fn solve_field(a: &MeasurementEnsemble, y: &crate::MeasurementVector, k: usize, tol: f64, seed: u64) -> Result<SolutionSet> {
    match a.field() {
        Field::Real => solve_l0_real(a, y, k, tol),
        Field::Complex => solve_l0_complex_with(
            a,
            y,
            k,
            &ComplexSolveOptions {
                tol,
                allow_heuristic: true,
                seed,
                ..ComplexSolveOptions::default()
            },
        ),
    }
}

fn run_trial(cfg: &SweepConfig, m: usize, trial: usize) -> Result<TrialOutcome> {
    let a = MeasurementEnsemble::generate(cfg.field, m, cfg.n, derive_seed(cfg.seed, &[m as u64, trial as u64]))?;
    let mut rng = seeded_rng(derive_seed(cfg.seed, &[m as u64, trial as u64, 1]));
    let x0 = random_sparse_signal(cfg.field, cfg.n, cfg.k, &mut rng)?;
    let y = measure(&a, &x0)?;
    let start = Instant::now();
    let sol = solve_field(&a, &y, cfg.k, cfg.tol, derive_seed(cfg.seed, &[m as u64, trial as u64, 2]))?;
    let millis = start.elapsed().as_secs_f64() * 1e3;
    Ok(TrialOutcome {
        success: is_exact_recovery(&sol, &x0, cfg.tol),
        fragile: support_is_fragile(&a, x0.support())?,
        millis,
    })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for m in cfg.m_range.0..=cfg.m_range.1 {
        let outcomes: Vec<TrialOutcome> = (0..cfg.trials_per_m)
            .into_par_iter()
            .map(|t| run_trial(cfg, m, t))
            .collect::<Result<_>>()?;
        let trials = outcomes.len();
        let successes = outcomes.iter().filter(|o| o.success).count();
        let mean_ms = if cfg.timing {
            let mean = outcomes.iter().map(|o| o.millis).sum::<f64>() / trials as f64;
            (mean * 1e3).round() / 1e3
        } else {
            0.0
        };
        rows.push(SweepRow {
            m,
            trials,
            successes,
            rate: successes as f64 / trials as f64,
            mean_ms,
            fragile: outcomes.iter().filter(|o| o.fragile).count(),
        });
    }
    Ok(SweepResult {
        config: cfg.clone(),
        rows,
    })
}

fn dense_real(n: usize, support: &[usize], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&i, &v) in support.iter().zip(values) {
        out[i] = v;
    }
    out
}

/// `|| |Ax| - |Az| ||_inf <= COLLISION_TOL * ||Ax||_inf` and `x != +-z`.
pub fn is_valid_collision(a: &MeasurementEnsemble, x: &SparseVector, z: &SparseVector) -> Result<bool> {
    let (yx, yz) = (measure(a, x)?, measure(a, z)?);
    let scale = yx.norm_inf();
    let gap = yx
        .magnitudes()
        .iter()
        .zip(yz.magnitudes())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    Ok(gap <= COLLISION_TOL * scale && !phase_equivalent(x, z, COLLISION_EQUIV_TOL))
}

/// Two `k`-sparse real vectors on disjoint supports with `Ax = Az`.
///
/// Support pairs are tried in lexicographic order; the first whose null
/// vector of `[A_I, -A_J]` has two nonzero blocks wins. The stacked pair has
/// unit norm and the first entry of `x` is positive.
pub fn build_collision_real(a: &MeasurementEnsemble, k: usize) -> Result<(SparseVector, SparseVector)> {
    let mat = a.require_real()?;
    let (m, n) = (a.m(), a.n());
    if k == 0 || m + 1 > 2 * k {
        return Err(Error::invalid(format!("collision construction needs m <= 2k - 1, got m = {m}, k = {k}")));
    }
    if 2 * k > n {
        return Err(Error::invalid(format!("two disjoint supports of size {k} need n >= {}, got {n}", 2 * k)));
    }
    for i in (0..n).combinations(k) {
        let rest: Vec<usize> = (0..n).filter(|c| i.binary_search(c).is_err()).collect();
        for j in rest.iter().copied().combinations(k) {
            let block = DMatrix::from_fn(m, 2 * k, |r, c| {
                if c < k {
                    mat[(r, i[c])]
                } else {
                    -mat[(r, j[c - k])]
                }
            });
            // Below m = 2k - 1 the null space has several dimensions; the sum of
            // its basis is generic enough to keep every entry nonzero.
            let basis = numerics::null_space(&block, DEFAULT_RANK_TOL)?;
            let mut w: DVector<f64> = if basis.ncols() > 1 {
                basis.column_sum()
            } else {
                numerics::null_space_vector(&block)?
            };
            let (xs, zs) = (w.rows(0, k), w.rows(k, k));
            if xs.amax() <= 1e-8 || zs.amax() <= 1e-8 {
                continue;
            }
            let lead = xs.iter().find(|v| v.abs() > 1e-8).copied().unwrap_or(1.0);
            w /= w.norm() * lead.signum();
            let x = SparseVector::from_dense_real(&dense_real(n, &i, &w.as_slice()[..k]), 0.0)?;
            let z = SparseVector::from_dense_real(&dense_real(n, &j, &w.as_slice()[k..]), 0.0)?;
            if is_valid_collision(a, &x, &z)? {
                return Ok((x, z));
            }
        }
    }
    Err(Error::Degenerate(format!("no disjoint support pair of size {k} yields a collision")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguitySource {
    /// Null vector of `[A_I, -A_J]` on disjoint supports.
    DisjointSupports,
    /// Non-trivial null vector of the distance witness `[A_I, P A_J]`.
    DistanceWitness,
}

#[derive(Debug, Clone)]
pub struct Ambiguity {
    pub x: SparseVector,
    pub z: SparseVector,
    pub source: AmbiguitySource,
    /// Classes returned by the real solver on `|Ax|` at `k_max = k`.
    pub solver_classes: usize,
    pub solver_k_star: Option<usize>,
}

impl Ambiguity {
    pub fn to_json(&self) -> Value {
        json!({
            "x": sparse_vector_json(&self.x),
            "z": sparse_vector_json(&self.z),
            "source": self.source,
            "solver_classes": self.solver_classes,
            "solver_k_star": self.solver_k_star,
        })
    }
}

/// Two non-equivalent vectors with at most `k` nonzeros and equal phaseless
/// measurements, if one can be constructed.
///
/// Disjoint supports are tried first when `m <= 2k - 1` and `2k <= n`.
/// Otherwise, or if no disjoint pair works, the distance search (ambiguity
/// criterion, sides of size at most `k`) supplies a witness `[A_I, P A_J]`
/// whose null vector `(u, v)` gives `x = u` on `I`, `z = -v` on `J`, so that
/// `A x = P A z`.
pub fn exhibit_ambiguity(a: &MeasurementEnsemble, k: usize) -> Result<Option<Ambiguity>> {
    let mat = a.require_real()?;
    let (m, n) = (a.m(), a.n());
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let disjoint = (m < 2 * k && 2 * k <= n)
        .then(|| build_collision_real(a, k).ok())
        .flatten()
        .map(|(x, z)| (x, z, AmbiguitySource::DisjointSupports));
    let pair = if disjoint.is_some() {
        disjoint
    } else {
        let report = distance_with(a, k, DistanceCriterion::Ambiguous)?;
        if report.d > m.min(2 * k) {
            None
        } else {
            let w = &report.witness;
            let signs = w.pattern.signs().expect("real witness");
            let block = distance::witness_matrix(mat, &w.i, &w.j, &signs);
            let basis = numerics::null_space(&block, DEFAULT_RANK_TOL)?;
            ambiguous_null_vector(&basis, &w.i, &w.j).and_then(|null| {
                let u = &null.as_slice()[..w.i.len()];
                let v: Vec<f64> = null.as_slice()[w.i.len()..].iter().map(|t| -t).collect();
                let x = SparseVector::from_dense_real(&dense_real(n, &w.i, u), 1e-12).ok()?;
                let z = SparseVector::from_dense_real(&dense_real(n, &w.j, &v), 1e-12).ok()?;
                Some((x, z, AmbiguitySource::DistanceWitness))
            })
        }
    };
    let Some((x, z, source)) = pair else {
        return Ok(None);
    };
    if !is_valid_collision(a, &x, &z)? {
        return Ok(None);
    }
    let y = measure(a, &x)?;
    let sol = solve_l0_real(a, &y, k.min(m), solver_real::DEFAULT_TOL)?;
    Ok(Some(Ambiguity {
        x,
        z,
        source,
        solver_classes: sol.classes.len(),
        solver_k_star: sol.k_star,
    }))
}

#[derive(Debug, Clone)]
pub struct Lemma31Check {
    pub k: usize,
    pub d: usize,
    /// `(d - 1) / 2`, the largest sparsity the distance supports.
    pub bound: usize,
    pub certified: bool,
    pub forward_engaged: bool,
    pub forward_trials: usize,
    pub forward_successes: usize,
    /// Vacuously true when the forward direction is not engaged.
    pub forward_ok: bool,
    pub converse_engaged: bool,
    pub ambiguity: Option<Ambiguity>,
    /// Vacuously true when the converse direction is not engaged.
    pub converse_ok: bool,
}

impl Lemma31Check {
    pub fn to_json(&self) -> Value {
        json!({
            "k": self.k,
            "d": self.d,
            "bound": self.bound,
            "certified": self.certified,
            "forward_engaged": self.forward_engaged,
            "forward_trials": self.forward_trials,
            "forward_successes": self.forward_successes,
            "forward_ok": self.forward_ok,
            "converse_engaged": self.converse_engaged,
            "converse_ok": self.converse_ok,
            "ambiguity": self.ambiguity.as_ref().map(Ambiguity::to_json),
        })
    }
}

/// Checks the sparsity bound `k <= (d - 1) / 2` in both directions with
/// [`FORWARD_TRIALS`] trials and seed 0.
pub fn lemma31_bidirectional_check(a: &MeasurementEnsemble, k: usize) -> Result<Lemma31Check> {
    lemma31_check_with(a, k, FORWARD_TRIALS, 0)
}

/// Forward: when `k` is certified, every random `k`-sparse signal must be
/// recovered uniquely. Converse: when `k` exceeds the bound, an ambiguity
/// must be exhibited.
pub fn lemma31_check_with(a: &MeasurementEnsemble, k: usize, trials: usize, seed: u64) -> Result<Lemma31Check> {
    a.require_real()?;
    if a.m() >= a.n() {
        return Err(Error::invalid(format!("needs m < n, got m = {}, n = {}", a.m(), a.n())));
    }
    if k == 0 || k > a.m() {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", a.m())));
    }
    let cert = certify_unique(a, k)?;
    let d = cert.distance.d;
    let bound = (d - 1) / 2;

    let forward_engaged = cert.certified;
    let mut forward_successes = 0;
    let forward_trials = if forward_engaged { trials } else { 0 };
    if forward_engaged {
        let outcomes: Vec<bool> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = seeded_rng(derive_seed(seed, &[k as u64, t as u64]));
                let x0 = random_sparse_signal(Field::Real, a.n(), k, &mut rng)?;
                let y = measure(a, &x0)?;
                let sol = solve_l0_real(a, &y, k, solver_real::DEFAULT_TOL)?;
                Ok(is_exact_recovery(&sol, &x0, solver_real::DEFAULT_TOL))
            })
            .collect::<Result<_>>()?;
        forward_successes = outcomes.iter().filter(|&&ok| ok).count();
    }

    let converse_engaged = k > bound;
    let ambiguity = if converse_engaged { exhibit_ambiguity(a, k)? } else { None };
    Ok(Lemma31Check {
        k,
        d,
        bound,
        certified: cert.certified,
        forward_engaged,
        forward_trials,
        forward_successes,
        forward_ok: forward_successes == forward_trials,
        converse_engaged,
        converse_ok: !converse_engaged || ambiguity.is_some(),
        ambiguity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Gnuplot,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Gnuplot => "dat",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "gnuplot" => Ok(OutputFormat::Gnuplot),
            other => Err(Error::invalid(format!("unknown output format '{other}'"))),
        }
    }
}

const CSV_HEADER: [&str; 6] = ["m", "trials", "successes", "rate", "mean_ms", "fragile"];

fn row_fields(r: &SweepRow) -> [String; 6] {
    [
        r.m.to_string(),
        r.trials.to_string(),
        r.successes.to_string(),
        r.rate.to_string(),
        r.mean_ms.to_string(),
        r.fragile.to_string(),
    ]
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(row_fields(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn parse_row<'a>(fields: impl Iterator<Item = &'a str>, line: usize) -> Result<SweepRow> {
    let fields: Vec<&str> = fields.collect();
    if fields.len() != 6 {
        return Err(Error::parse(line, format!("expected 6 fields, found {}", fields.len())));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(line, format!("'{s}': {e}")));
    let real = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(line, format!("'{s}': {e}")));
    Ok(SweepRow {
        m: int(fields[0])?,
        trials: int(fields[1])?,
        successes: int(fields[2])?,
        rate: real(fields[3])?,
        mean_ms: real(fields[4])?,
        fragile: int(fields[5])?,
    })
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::parse(1, format!("expected header '{}'", CSV_HEADER.join(","))));
    }
    reader
        .records()
        .enumerate()
        .map(|(idx, rec)| {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            parse_row(rec.iter(), line)
        })
        .collect()
}

pub fn to_json(result: &SweepResult) -> String {
    let rows: Vec<Value> = result
        .rows
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("row serializes");
            v["heuristic"] = json!(result.config.is_heuristic(r.m));
            v
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&json!({ "config": result.config, "rows": rows }))
        .expect("result serializes");
    out.push('\n');
    out
}

pub fn parse_json(text: &str) -> Result<SweepResult> {
    #[derive(Deserialize)]
    struct Doc {
        config: SweepConfig,
        rows: Vec<SweepRow>,
    }
    let doc: Doc = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
    Ok(SweepResult {
        config: doc.config,
        rows: doc.rows,
    })
}

/// Whitespace-separated columns with the full config in a header comment.
/// Heuristic rows carry a trailing `# heuristic` comment.
pub fn to_gnuplot(result: &SweepResult) -> String {
    let mut out = String::from("# sparse-pr recovery sweep\n");
    out.push_str(&format!("# config: {}\n", result.config.to_json_string()));
    out.push_str(&format!("# {}\n", CSV_HEADER.join(" ")));
    for r in &result.rows {
        out.push_str(&row_fields(r).join(" "));
        if result.config.is_heuristic(r.m) {
            out.push_str(" # heuristic");
        }
        out.push('\n');
    }
    out
}

pub fn parse_gnuplot(text: &str) -> Result<SweepResult> {
    let mut config = None;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if let Some(rest) = raw.trim().strip_prefix("# config:") {
            let cfg: SweepConfig =
                serde_json::from_str(rest.trim()).map_err(|e| Error::parse(line, e.to_string()))?;
            config = Some(cfg);
            continue;
        }
        let data = raw.split('#').next().unwrap_or("").trim();
        if data.is_empty() {
            continue;
        }
        rows.push(parse_row(data.split_whitespace(), line)?);
    }
    let config = config.ok_or_else(|| Error::parse(1, "missing '# config:' header"))?;
    Ok(SweepResult { config, rows })
}

pub fn render(result: &SweepResult, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => to_csv(&result.rows),
        OutputFormat::Json => to_json(result),
        OutputFormat::Gnuplot => to_gnuplot(result),
    }
}

/// Writes `sweep-<fingerprint>.<ext>` into `dir` and returns its path.
pub fn emit_results(result: &SweepResult, format: OutputFormat, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(format!("sweep-{}.{}", result.config.fingerprint(), format.extension()));
    format::write_file(&path, &render(result, format))?;
    Ok(path)
}
