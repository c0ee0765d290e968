//! Solution sets shared by the real and complex l0 solvers.

use serde::Serialize;
use serde_json::{json, Value};

use crate::model::{phase_equivalent, Field, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exhaustive sign enumeration with a linear solve (real field).
    Exhaustive,
    /// Rank-one lifted linear solve (complex field).
    Lifted,
    /// Gauss-Newton refinement from a lifted initial guess; heuristic.
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredClass {
    /// Canonical phase-class representative.
    pub vector: SparseVector,
    /// Max-abs residual of `||A x| - y|`.
    pub residual: f64,
    pub rank1_defect: Option<f64>,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub supports_tried: u64,
    pub patterns_tried: u64,
    pub degenerate_supports: u64,
}

impl SearchStats {
    pub fn merge(self, other: Self) -> Self {
        Self {
            supports_tried: self.supports_tried + other.supports_tried,
            patterns_tried: self.patterns_tried + other.patterns_tried,
            degenerate_supports: self.degenerate_supports + other.degenerate_supports,
        }
    }
}

/// All minimal-l0 solutions found, one entry per global-phase class.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub field: Field,
    pub n: usize,
    /// `None` when no solution exists up to the searched sparsity.
    pub k_star: Option<usize>,
    pub classes: Vec<RecoveredClass>,
    pub stats: SearchStats,
    /// Set when any accepted class came from a non-certified path.
    pub heuristic: bool,
}

impl SolutionSet {
    pub fn empty(field: Field, n: usize, stats: SearchStats) -> Self {
        Self {
            field,
            n,
            k_star: None,
            classes: Vec::new(),
            stats,
            heuristic: false,
        }
    }

    pub fn is_unique(&self) -> bool {
        self.classes.len() == 1
    }

    pub fn vectors(&self) -> impl Iterator<Item = &SparseVector> {
        self.classes.iter().map(|c| &c.vector)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.residual).collect()
    }

    /// True iff there is exactly one class and it matches `truth` up to phase.
    pub fn recovers(&self, truth: &SparseVector, tol: f64) -> bool {
        self.is_unique() && phase_equivalent(&self.classes[0].vector, truth, tol)
    }

    /// JSON view with one-based supports.
    pub fn to_json(&self) -> Value {
        let classes: Vec<Value> = self
            .classes
            .iter()
            .map(|c| {
                let mut obj = sparse_vector_json(&c.vector);
                if self.field == Field::Complex {
                    obj["rank1_defect"] = json!(c.rank1_defect);
                    obj["method"] = json!(c.method);
                }
                obj
            })
            .collect();
        json!({
            "field": self.field,
            "n": self.n,
            "k_star": self.k_star,
            "classes": classes,
            "residuals": self.residuals(),
            "stats": self.stats,
            "heuristic": self.heuristic,
        })
    }
}

/// `{support, values}` with one-based support; complex values as `[re, im]`.
pub fn sparse_vector_json(v: &SparseVector) -> Value {
    let support: Vec<usize> = v.support().iter().map(|i| i + 1).collect();
    let values: Vec<Value> = v
        .values()
        .iter()
        .map(|c| match v.field() {
            Field::Real => json!(c.re),
            Field::Complex => json!([c.re, c.im]),
        })
        .collect();
    json!({ "support": support, "values": values })
}

/// Canonicalizes, sorts and drops phase-equivalent duplicates.
pub(crate) fn dedup_classes(mut candidates: Vec<RecoveredClass>, tol: f64) -> Vec<RecoveredClass> {
    for c in &mut candidates {
        c.vector = c.vector.canonical();
    }
    candidates.sort_by(|a, b| {
        a.vector.support().cmp(b.vector.support()).then_with(|| {
            let av = a.vector.values().iter().flat_map(|v| [v.re, v.im]);
            let bv = b.vector.values().iter().flat_map(|v| [v.re, v.im]);
            av.zip(bv)
                .map(|(x, y)| x.total_cmp(&y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut kept: Vec<RecoveredClass> = Vec::new();
    for c in candidates {
        if !kept.iter().any(|k| phase_equivalent(&k.vector, &c.vector, tol)) {
            kept.push(c);
        }
    }
    kept
}
