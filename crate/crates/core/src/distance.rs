//! Phase-generalized minimum distance, spark checks and uniqueness certificates.
//!
//! For a real `m x n` matrix `A` (with `m < n`) and supports `I`, `J` with
//! `|I| + |J| <= m`, consider `M(I, J, P) = [A_I, P A_J]` for every admissible
//! sign pattern `P` (diagonal `+-1`, not a multiple of the identity). A null
//! vector `(u, v)` of `M` gives `x = u` on `I` and `z = -v` on `J` with
//! `Ax = P A z`, hence `|Ax| = |Az|`.
//!
//! The distance `d` is the smallest `|I| + |J|` for which such a null vector
//! exists, or `m + 1` when none does. Two deficiency criteria are offered:
//!
//! - [`DistanceCriterion::RankDeficient`]: any null vector counts, i.e. `M`
//!   loses column rank. This is the plain rank reading.
//! - [`DistanceCriterion::Ambiguous`]: only null vectors with `x != +-z`
//!   count. When `I` and `J` overlap, `M` can lose rank through null vectors
//!   with `x = z` or `x = -z`, which are the same signal up to sign and do
//!   not break uniqueness. For generic `A` with `m = 2k` and `k >= 2`, a
//!   pattern with a single flipped row already makes `[A_I, P A_I]` rank
//!   deficient this way, so only the ambiguity criterion reaches `m + 1`.
//!
//! Certificates use the ambiguity criterion. The identity pattern (plain
//! linear collisions `Ax = Az`) is not admissible, so certification also
//! requires every `2k` columns of `A` to be independent.
//!
//! Enumeration visits sizes `|I| + |J|` in increasing order, then `(I, J)`
//! lexicographically, then sign patterns by their bit encoding. Since
//! `(J, I, P)` is deficient exactly when `(I, J, P)` is, only `I <= J` is
//! evaluated. The reported witness is the first deficient triple in that
//! order, independent of thread scheduling.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{Field, MeasurementEnsemble, PhasePattern};
use crate::numerics::{self, Scalar, DEFAULT_RANK_TOL};

/// Max-abs tolerance when testing whether a unit null vector has `x = +-z`.
const TRIVIAL_NULL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceCriterion {
    RankDeficient,
    Ambiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "w", rename_all = "lowercase")]
pub enum OverlapClass {
    Disjoint,
    Full,
    Partial(usize),
}

impl OverlapClass {
    pub fn classify(i: &[usize], j: &[usize]) -> Self {
        let w = intersection(i, j).len();
        if w == 0 {
            OverlapClass::Disjoint
        } else if i == j {
            OverlapClass::Full
        } else {
            OverlapClass::Partial(w)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    pub pattern: PhasePattern,
}

impl Witness {
    pub fn sign_bits(&self) -> u64 {
        self.pattern.sign_bits().unwrap_or(0)
    }

    pub fn overlap(&self) -> OverlapClass {
        OverlapClass::classify(&self.i, &self.j)
    }

    /// `{I, J, P_bits}` with one-based indices.
    pub fn to_json(&self) -> Value {
        json!({
            "I": one_based(&self.i),
            "J": one_based(&self.j),
            "P_bits": self.sign_bits(),
            "P_admissible": self.pattern.is_admissible(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub m: usize,
    pub n: usize,
    pub max_support: usize,
    pub criterion: DistanceCriterion,
    pub d: usize,
    /// Rank of the witness matrix.
    pub min_rank: usize,
    pub witness: Witness,
    pub overlap: OverlapClass,
    /// Largest sparsity covered by the distance, `(d - 1) / 2`.
    pub certified_k: usize,
    /// Whether every size up to `m` was searched; otherwise `d` is a lower bound.
    pub exhaustive: bool,
    /// Some rank decision landed within 10x of the threshold.
    pub fragile: bool,
    pub triples_checked: u64,
}

impl DistanceReport {
    pub fn to_json(&self) -> Value {
        json!({
            "m": self.m,
            "n": self.n,
            "max_support": self.max_support,
            "criterion": self.criterion,
            "d": self.d,
            "min_rank": self.min_rank,
            "certified_k": self.certified_k,
            "witness": self.witness.to_json(),
            "overlap": self.overlap,
            "exhaustive": self.exhaustive,
            "fragile": self.fragile,
            "triples_checked": self.triples_checked,
        })
    }
}

fn one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|i| i + 1).collect()
}

fn intersection(i: &[usize], j: &[usize]) -> Vec<usize> {
    i.iter().copied().filter(|x| j.binary_search(x).is_ok()).collect()
}

fn difference(i: &[usize], j: &[usize]) -> Vec<usize> {
    i.iter().copied().filter(|x| j.binary_search(x).is_err()).collect()
}

fn check_indices(idx: &[usize], n: usize, name: &str) -> Result<()> {
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!("{name} must be strictly increasing")));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!("{name} index {bad} out of range for n = {n}")));
    }
    Ok(())
}

/// `[A_I, P A_J]`.
pub fn witness_matrix(a: &DMatrix<f64>, i: &[usize], j: &[usize], signs: &[f64]) -> DMatrix<f64> {
    let m = a.nrows();
    let mut out = DMatrix::zeros(m, i.len() + j.len());
    for (c, &col) in i.iter().enumerate() {
        out.set_column(c, &a.column(col));
    }
    for (c, &col) in j.iter().enumerate() {
        for r in 0..m {
            out[(r, i.len() + c)] = signs[r] * a[(r, col)];
        }
    }
    out
}

/// Numerical rank of `[A_I, P A_J]`.
pub fn witness_rank(a: &MeasurementEnsemble, i: &[usize], j: &[usize], pattern: &PhasePattern) -> Result<usize> {
    let mat = a.require_real()?;
    check_indices(i, a.n(), "I")?;
    check_indices(j, a.n(), "J")?;
    if pattern.m() != a.m() {
        return Err(Error::DimensionMismatch {
            what: "phase pattern length",
            expected: a.m(),
            got: pattern.m(),
        });
    }
    let signs = pattern
        .signs()
        .ok_or_else(|| Error::invalid("witness rank needs a real sign pattern"))?;
    Ok(numerics::numerical_rank(&witness_matrix(mat, i, j, &signs), DEFAULT_RANK_TOL)?.rank)
}

/// How a unit null vector `(u, v)` of `[A_I, P A_J]` relates `x = u` and `z = -v`.
#[derive(Debug, Clone, Copy)]
struct TrivialityDefect {
    /// Distance from `x = z`.
    same: f64,
    /// Distance from `x = -z`.
    opposite: f64,
}

fn triviality_defect(null: &DVector<f64>, i: &[usize], j: &[usize]) -> TrivialityDefect {
    let (u, v) = (null.rows(0, i.len()), null.rows(i.len(), j.len()));
    let mut off_overlap = 0.0f64;
    for (pos, idx) in i.iter().enumerate() {
        if j.binary_search(idx).is_err() {
            off_overlap = off_overlap.max(u[pos].abs());
        }
    }
    for (pos, idx) in j.iter().enumerate() {
        if i.binary_search(idx).is_err() {
            off_overlap = off_overlap.max(v[pos].abs());
        }
    }
    let (mut same, mut opposite) = (off_overlap, off_overlap);
    for (pi, idx) in i.iter().enumerate() {
        if let Ok(pj) = j.binary_search(idx) {
            // x = u, z = -v: x = z iff u + v = 0, x = -z iff u - v = 0.
            same = same.max((u[pi] + v[pj]).abs());
            opposite = opposite.max((u[pi] - v[pj]).abs());
        }
    }
    TrivialityDefect { same, opposite }
}

/// A null vector of `[A_I, P A_J]` with `x != +-z`, if the null space has one.
pub fn ambiguous_null_vector(null_basis: &DMatrix<f64>, i: &[usize], j: &[usize]) -> Option<DVector<f64>> {
    let cols: Vec<(DVector<f64>, TrivialityDefect)> = null_basis
        .column_iter()
        .map(|c| {
            let c = c.into_owned();
            let t = triviality_defect(&c, i, j);
            (c, t)
        })
        .collect();
    if let Some((c, _)) = cols
        .iter()
        .find(|(_, t)| t.same > TRIVIAL_NULL_TOL && t.opposite > TRIVIAL_NULL_TOL)
    {
        return Some(c.clone());
    }
    // A subspace outside both trivial subspaces but with every basis vector in
    // one of them: the sum of one from each side is in neither.
    let not_same = cols.iter().find(|(_, t)| t.same > TRIVIAL_NULL_TOL)?;
    let not_opposite = cols.iter().find(|(_, t)| t.opposite > TRIVIAL_NULL_TOL)?;
    let sum = &not_same.0 + &not_opposite.0;
    Some(sum.normalize())
}

struct Evaluation {
    deficient: bool,
    rank: usize,
    fragile: bool,
}

fn evaluate(
    a: &DMatrix<f64>,
    i: &[usize],
    j: &[usize],
    signs: &[f64],
    criterion: DistanceCriterion,
) -> Evaluation {
    let mat = witness_matrix(a, i, j, signs);
    let decision = numerics::decide_rank(&numerics::singular_values(&mat), DEFAULT_RANK_TOL);
    let cols = i.len() + j.len();
    let mut deficient = decision.rank < cols;
    if deficient && criterion == DistanceCriterion::Ambiguous {
        deficient = match numerics::null_space(&mat, DEFAULT_RANK_TOL) {
            Ok(basis) => ambiguous_null_vector(&basis, i, j).is_some(),
            Err(_) => true,
        };
    }
    Evaluation {
        deficient,
        rank: decision.rank,
        fragile: decision.is_fragile(),
    }
}

/// Sign patterns to try for a support pair; pairs with an empty side do not
/// depend on the pattern.
fn patterns_for(m: usize, i: &[usize], j: &[usize]) -> Vec<u64> {
    let first = u64::from(m >= 2);
    if i.is_empty() || j.is_empty() {
        vec![first]
    } else if m < 2 {
        Vec::new()
    } else {
        (1..(1u64 << (m - 1))).collect()
    }
}

fn support_pairs(n: usize, size: usize, max_support: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut pairs = Vec::new();
    for a in 0..=size.min(max_support) {
        let b = size - a;
        if b > max_support {
            continue;
        }
        for i in (0..n).combinations(a) {
            for j in (0..n).combinations(b) {
                if i <= j {
                    pairs.push((i.clone(), j));
                }
            }
        }
    }
    pairs.sort();
    pairs
}

struct PairOutcome {
    first_deficient: Option<(u64, usize)>,
    fragile: bool,
    evaluated: u64,
}

/// Phase-generalized minimum distance under the ambiguity criterion.
pub fn phase_gen_min_distance(a: &MeasurementEnsemble, max_support: usize) -> Result<DistanceReport> {
    distance_with(a, max_support, DistanceCriterion::Ambiguous)
}

/// Distance under the plain rank-deficiency criterion.
pub fn rank_deficiency_distance(a: &MeasurementEnsemble, max_support: usize) -> Result<DistanceReport> {
    distance_with(a, max_support, DistanceCriterion::RankDeficient)
}

pub fn distance_with(
    a: &MeasurementEnsemble,
    max_support: usize,
    criterion: DistanceCriterion,
) -> Result<DistanceReport> {
    if a.field() == Field::Complex {
        return Err(Error::Unsupported(
            "phase-generalized distance is only defined for real matrices".into(),
        ));
    }
    let mat = a.require_real()?;
    let (m, n) = (a.m(), a.n());
    if m >= n {
        return Err(Error::invalid(format!(
            "distance requires m < n, got m = {m}, n = {n}"
        )));
    }
    if m > 63 {
        return Err(Error::Unsupported(format!("m = {m} is too large to enumerate sign patterns")));
    }
    if max_support == 0 {
        return Err(Error::invalid("max_support must be positive"));
    }
    let max_support = max_support.min(m);
    let top = m.min(2 * max_support);

    let mut fragile = false;
    let mut checked = 0u64;
    for size in 1..=top {
        let pairs = support_pairs(n, size, max_support);
        let outcomes: Vec<PairOutcome> = pairs
            .par_iter()
            .map(|(i, j)| {
                let mut out = PairOutcome {
                    first_deficient: None,
                    fragile: false,
                    evaluated: 0,
                };
                for bits in patterns_for(m, i, j) {
                    let signs = PhasePattern::from_sign_bits(m, bits).signs().expect("real pattern");
                    let ev = evaluate(mat, i, j, &signs, criterion);
                    out.evaluated += 1;
                    out.fragile |= ev.fragile;
                    if ev.deficient {
                        out.first_deficient = Some((bits, ev.rank));
                        break;
                    }
                }
                out
            })
            .collect();
        checked += outcomes.iter().map(|o| o.evaluated).sum::<u64>();
        fragile |= outcomes.iter().any(|o| o.fragile);
        let hit = pairs
            .iter()
            .zip(&outcomes)
            .find_map(|(pair, o)| o.first_deficient.map(|(bits, rank)| (pair, bits, rank)));
        if let Some(((i, j), bits, rank)) = hit {
            let witness = Witness {
                i: i.clone(),
                j: j.clone(),
                pattern: PhasePattern::from_sign_bits(m, bits),
            };
            return Ok(DistanceReport {
                m,
                n,
                max_support,
                criterion,
                d: size,
                min_rank: rank,
                overlap: witness.overlap(),
                witness,
                certified_k: (size - 1) / 2,
                exhaustive: true,
                fragile,
                triples_checked: checked,
            });
        }
    }

    // No deficiency up to `top`: report the first full-rank triple of that size.
    let (i, j) = support_pairs(n, top, max_support)
        .into_iter()
        .find(|(i, j)| !patterns_for(m, i, j).is_empty())
        .ok_or_else(|| Error::Degenerate("no admissible support pair".into()))?;
    let bits = patterns_for(m, &i, &j)[0];
    let signs = PhasePattern::from_sign_bits(m, bits).signs().expect("real pattern");
    let rank = evaluate(mat, &i, &j, &signs, criterion).rank;
    let d = top + 1;
    let witness = Witness {
        i,
        j,
        pattern: PhasePattern::from_sign_bits(m, bits),
    };
    Ok(DistanceReport {
        m,
        n,
        max_support,
        criterion,
        d,
        min_rank: rank,
        overlap: witness.overlap(),
        witness,
        certified_k: (d - 1) / 2,
        exhaustive: top == m,
        fragile,
        triples_checked: checked,
    })
}

/// Rows of `A_S` restricted to `rows`, with optional column negation.
fn block(a: &DMatrix<f64>, rows: &[usize], cols: &[usize], sign: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| sign * a[(rows[r], cols[c])])
}

fn schur_complement(c: &DMatrix<f64>, w: usize) -> Option<DMatrix<f64>> {
    let (rows, cols) = c.shape();
    let pivot = c.view((0, 0), (w, w)).into_owned();
    if numerics::numerical_rank(&pivot, DEFAULT_RANK_TOL).ok()?.rank < w {
        return None;
    }
    let inv = pivot.try_inverse()?;
    let lower_left = c.view((w, 0), (rows - w, w));
    let upper_right = c.view((0, w), (w, cols - w));
    let lower_right = c.view((w, w), (rows - w, cols - w));
    Some(lower_right - lower_left * inv * upper_right)
}

/// Reduced block `B` of the overlap elimination: with `w = |I & J|`,
/// `rank [A_I, P A_J] = 2w + rank B` whenever both `w x w` pivot blocks are
/// invertible.
///
/// Rows are split by sign. On the `+1` rows the overlap columns are
/// eliminated against their first `w` rows, leaving `C'`; the `-1` rows give
/// `D'` the same way, with the `J \ I` columns negated. `B = [C'; D']`.
/// Returns `(w, B)`, or `None` when a side has fewer than `w` rows or a pivot
/// block is singular.
pub fn schur_reduced_block(
    a: &MeasurementEnsemble,
    i: &[usize],
    j: &[usize],
    pattern: &PhasePattern,
) -> Result<Option<(usize, DMatrix<f64>)>> {
    let mat = a.require_real()?;
    check_indices(i, a.n(), "I")?;
    check_indices(j, a.n(), "J")?;
    let signs = pattern
        .signs()
        .ok_or_else(|| Error::invalid("Schur reduction needs a real sign pattern"))?;
    if signs.len() != a.m() {
        return Err(Error::DimensionMismatch {
            what: "phase pattern length",
            expected: a.m(),
            got: signs.len(),
        });
    }
    let both = intersection(i, j);
    let only_i = difference(i, j);
    let only_j = difference(j, i);
    let w = both.len();
    let plus: Vec<usize> = (0..a.m()).filter(|&r| signs[r] > 0.0).collect();
    let minus: Vec<usize> = (0..a.m()).filter(|&r| signs[r] < 0.0).collect();
    if plus.len() < w || minus.len() < w {
        return Ok(None);
    }
    let side = |rows: &[usize], sign_j: f64| {
        let mut parts = vec![block(mat, rows, &both, 1.0), block(mat, rows, &only_i, 1.0)];
        parts.push(block(mat, rows, &only_j, sign_j));
        let cols: usize = parts.iter().map(|p| p.ncols()).sum();
        let mut out = DMatrix::zeros(rows.len(), cols);
        let mut at = 0;
        for p in parts {
            out.view_mut((0, at), (rows.len(), p.ncols())).copy_from(&p);
            at += p.ncols();
        }
        schur_complement(&out, w)
    };
    let (Some(c_red), Some(d_red)) = (side(&plus, 1.0), side(&minus, -1.0)) else {
        return Ok(None);
    };
    let cols = only_i.len() + only_j.len();
    let mut b = DMatrix::zeros(c_red.nrows() + d_red.nrows(), cols);
    b.view_mut((0, 0), c_red.shape()).copy_from(&c_red);
    b.view_mut((c_red.nrows(), 0), d_red.shape()).copy_from(&d_red);
    Ok(Some((w, b)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparkReport {
    pub s: usize,
    /// First column subset (ascending size, then lexicographic) that is rank deficient.
    pub deficient_columns: Option<Vec<usize>>,
    pub fragile: bool,
}

impl SparkReport {
    pub fn passes(&self) -> bool {
        self.deficient_columns.is_none()
    }
}

fn spark_generic<T: Scalar + Send + Sync>(mat: &DMatrix<T>, s: usize) -> SparkReport {
    let n = mat.ncols();
    let mut fragile = false;
    for size in 1..s {
        let subsets: Vec<Vec<usize>> = (0..n).combinations(size).collect();
        let decisions: Vec<(bool, bool)> = subsets
            .par_iter()
            .map(|cols| {
                let sub = mat.select_columns(cols.iter());
                let d = numerics::decide_rank(&numerics::singular_values(&sub), DEFAULT_RANK_TOL);
                (d.rank < size, d.is_fragile())
            })
            .collect();
        fragile |= decisions.iter().any(|&(_, f)| f);
        if let Some(pos) = decisions.iter().position(|&(def, _)| def) {
            return SparkReport {
                s,
                deficient_columns: Some(subsets[pos].clone()),
                fragile,
            };
        }
    }
    SparkReport {
        s,
        deficient_columns: None,
        fragile,
    }
}

/// Checks that every set of fewer than `s` columns is linearly independent.
pub fn spark_at_least(a: &MeasurementEnsemble, s: usize) -> Result<SparkReport> {
    let limit = a.m().min(a.n()) + 1;
    if s > limit {
        return Err(Error::invalid(format!("spark bound {s} exceeds min(m, n) + 1 = {limit}")));
    }
    Ok(match a.entries() {
        crate::model::Entries::Real(mat) => spark_generic(mat, s),
        crate::model::Entries::Complex(mat) => spark_generic(mat, s),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub k: usize,
    pub certified: bool,
    /// `k <= (d - 1) / 2`.
    pub distance_ok: bool,
    /// Every `2k` columns independent.
    pub spark_ok: bool,
    pub distance: DistanceReport,
    pub spark: Option<SparkReport>,
}

impl Certificate {
    pub fn fragile(&self) -> bool {
        self.distance.fragile || self.spark.as_ref().is_some_and(|s| s.fragile)
    }

    /// The obstruction, when not certified: the distance witness if the
    /// distance bound fails, else the dependent column set.
    pub fn limiting_witness(&self) -> Option<Value> {
        if !self.distance_ok {
            Some(json!({ "kind": "distance", "witness": self.distance.witness.to_json() }))
        } else if !self.spark_ok {
            let cols = self
                .spark
                .as_ref()
                .and_then(|s| s.deficient_columns.as_deref())
                .map(one_based);
            Some(json!({ "kind": "spark", "columns": cols }))
        } else {
            None
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "m": self.distance.m,
            "n": self.distance.n,
            "k": self.k,
            "d": self.distance.d,
            "min_rank": self.distance.min_rank,
            "certified": self.certified,
            "spark_ok": self.spark_ok,
            "witness": self.distance.witness.to_json(),
            "fragile": self.fragile(),
            "certified_k": self.distance.certified_k,
            "overlap": self.distance.overlap,
            "limiting_witness": self.limiting_witness(),
        })
    }
}

/// Certifies that every `k`-sparse real signal is determined by `|Ax|` up to sign.
pub fn certify_unique(a: &MeasurementEnsemble, k: usize) -> Result<Certificate> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let distance = phase_gen_min_distance(a, a.m())?;
    let distance_ok = k <= distance.certified_k;
    let spark = (2 * k <= a.m().min(a.n()))
        .then(|| spark_at_least(a, 2 * k + 1))
        .transpose()?;
    let spark_ok = spark.as_ref().is_some_and(SparkReport::passes);
    Ok(Certificate {
        k,
        certified: distance_ok && spark_ok,
        distance_ok,
        spark_ok,
        distance,
        spark,
    })
}
