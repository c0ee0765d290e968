//! Exact l0 phase retrieval over the reals.
//!
//! For each support `I` (by increasing size) and each sign assignment `s` on
//! the nonzero measurements, solve `A_I x_I = s * y` in the least-squares
//! sense and keep exact solutions. Rows with `y_i` at or below the tolerance
//! are the hard equations `a_i x = 0`. The sign of the first nonzero row is
//! fixed to `+1`, which quotients out the global sign. The search stops at
//! the first sparsity level that admits a solution.

use itertools::Itertools;
use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Field, MeasurementEnsemble, MeasurementVector, SparseVector};
use crate::numerics::LeastSquaresSolver;
use crate::solution::{dedup_classes, Method, RecoveredClass, SearchStats, SolutionSet};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Patterns per support are `2^(nonzeros - 1)`; beyond this the search is refused.
const MAX_FREE_SIGNS: usize = 24;

/// Absolute tolerance scaled to the measurement size: `tol * max(1, ||y||_inf)`.
pub fn effective_tol(y: &MeasurementVector, tol: f64) -> f64 {
    tol * y.norm_inf().max(1.0)
}

/// Number of measurements strictly above `tol`.
pub fn count_nonzero_measurements(y: &MeasurementVector, tol: f64) -> usize {
    y.magnitudes().iter().filter(|&&v| v > tol).count()
}

/// Max-abs residual `max_i ||A x|_i - y_i|`.
pub fn magnitude_residual(a: &MeasurementEnsemble, x: &SparseVector, y: &MeasurementVector) -> Result<f64> {
    let fitted = crate::model::measure(a, x)?;
    Ok(fitted
        .magnitudes()
        .iter()
        .zip(y.magnitudes())
        .map(|(f, t)| (f - t).abs())
        .fold(0.0, f64::max))
}

pub(crate) fn validate_problem(a: &MeasurementEnsemble, y: &MeasurementVector, k_max: usize, tol: f64) -> Result<()> {
    if y.len() != a.m() {
        return Err(Error::DimensionMismatch {
            what: "measurement vector length",
            expected: a.m(),
            got: y.len(),
        });
    }
    if k_max > a.m().min(a.n()) {
        return Err(Error::invalid(format!(
            "k_max = {k_max} exceeds min(m, n) = {}",
            a.m().min(a.n())
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    Ok(())
}

/// All minimal-sparsity real solutions of `y = |Ax|` with at most `k_max` nonzeros.
pub fn solve_l0_real(
    a: &MeasurementEnsemble,
    y: &MeasurementVector,
    k_max: usize,
    tol: f64,
) -> Result<SolutionSet> {
    let mat = a.require_real()?;
    validate_problem(a, y, k_max, tol)?;
    let (m, n) = (a.m(), a.n());
    let eff = effective_tol(y, tol);
    let nonzero_rows: Vec<usize> = (0..m).filter(|&i| y.magnitudes()[i] > eff).collect();

    if nonzero_rows.is_empty() {
        return Ok(SolutionSet {
            field: Field::Real,
            n,
            k_star: Some(0),
            classes: vec![RecoveredClass {
                vector: SparseVector::zero(Field::Real, n),
                residual: y.norm_inf(),
                rank1_defect: None,
                method: Method::Exhaustive,
            }],
            stats: SearchStats::default(),
            heuristic: false,
        });
    }
    let free_signs = nonzero_rows.len() - 1;
    if free_signs > MAX_FREE_SIGNS {
        return Err(Error::Unsupported(format!(
            "{} nonzero measurements need 2^{free_signs} sign patterns per support",
            nonzero_rows.len()
        )));
    }

    let mut stats = SearchStats::default();
    for k in 1..=k_max {
        let supports: Vec<Vec<usize>> = (0..n).combinations(k).collect();
        let per_support: Vec<(Vec<RecoveredClass>, SearchStats)> = supports
            .par_iter()
            .map(|support| solve_support(a, mat, y, support, &nonzero_rows, eff))
            .collect::<Result<_>>()?;
        let mut candidates = Vec::new();
        for (found, s) in per_support {
            stats = stats.merge(s);
            candidates.extend(found);
        }
        if !candidates.is_empty() {
            return Ok(SolutionSet {
                field: Field::Real,
                n,
                k_star: Some(k),
                classes: dedup_classes(candidates, eff),
                stats,
                heuristic: false,
            });
        }
    }
    Ok(SolutionSet::empty(Field::Real, n, stats))
}

fn solve_support(
    a: &MeasurementEnsemble,
    mat: &nalgebra::DMatrix<f64>,
    y: &MeasurementVector,
    support: &[usize],
    nonzero_rows: &[usize],
    eff: f64,
) -> Result<(Vec<RecoveredClass>, SearchStats)> {
    let mut stats = SearchStats {
        supports_tried: 1,
        ..SearchStats::default()
    };
    let solver = LeastSquaresSolver::new(mat.select_columns(support.iter()))?;
    // A minimal solution never sits on dependent columns: moving along the
    // null direction would zero out a coefficient and give a sparser one.
    if solver.is_degenerate() {
        stats.degenerate_supports = 1;
        return Ok((Vec::new(), stats));
    }
    let m = mat.nrows();
    let accept_residual = eff * (m as f64).sqrt();
    let mut found = Vec::new();
    let mut rhs = DVector::zeros(m);
    for bits in 0u64..(1u64 << (nonzero_rows.len() - 1)) {
        stats.patterns_tried += 1;
        for (t, &row) in nonzero_rows.iter().enumerate() {
            let flipped = t > 0 && (bits >> (t - 1)) & 1 == 1;
            let mag = y.magnitudes()[row];
            rhs[row] = if flipped { -mag } else { mag };
        }
        let ls = solver.solve(&rhs)?;
        if ls.residual_norm > accept_residual || ls.x.iter().any(|v| v.abs() <= eff) {
            continue;
        }
        let vector = SparseVector::real(a.n(), support.to_vec(), ls.x.iter().copied().collect())?;
        let residual = magnitude_residual(a, &vector, y)?;
        if residual <= eff {
            found.push(RecoveredClass {
                vector,
                residual,
                rank1_defect: None,
                method: Method::Exhaustive,
            });
        }
    }
    Ok((found, stats))
}
