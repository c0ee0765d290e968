//! Dense linear-algebra kernels with one tolerance policy.
//!
//! Rank decisions use singular values relative to the largest one, with a
//! default threshold of [`DEFAULT_RANK_TOL`]. Every decision records how close
//! it came to the threshold so callers can surface fragile results.

use nalgebra::{ComplexField, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Complex64;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// A decision is fragile when a kept or dropped singular value lies within
/// this factor of the threshold.
pub const FRAGILE_GAP: f64 = 10.0;

const HERMITIAN_TOL: f64 = 1e-12;

/// Scalar types the kernels accept: `f64` and `Complex64`.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}

impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankDecision {
    pub rank: usize,
    /// Smallest singular value counted in the rank.
    pub smallest_kept_sv: Option<f64>,
    /// Largest singular value below the threshold.
    pub largest_dropped_sv: Option<f64>,
    pub tol_used: f64,
}

impl RankDecision {
    /// True when the kept/dropped split sits within [`FRAGILE_GAP`] of the threshold.
    pub fn is_fragile(&self) -> bool {
        if self.tol_used == 0.0 {
            return false;
        }
        let kept_close = self
            .smallest_kept_sv
            .is_some_and(|s| s < FRAGILE_GAP * self.tol_used);
        let dropped_close = self
            .largest_dropped_sv
            .is_some_and(|s| s * FRAGILE_GAP > self.tol_used);
        kept_close || dropped_close
    }
}

fn check_finite<T: Scalar>(m: &DMatrix<T>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("matrix has non-finite entries"))
    }
}

/// Singular values in descending order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn decide_rank(sv: &[f64], tol_rel: f64) -> RankDecision {
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tol_used = tol_rel * sigma_max;
    let rank = sv.iter().take_while(|&&s| s > tol_used).count();
    RankDecision {
        rank,
        smallest_kept_sv: rank.checked_sub(1).map(|i| sv[i]),
        largest_dropped_sv: sv.get(rank).copied(),
        tol_used,
    }
}

/// Number of singular values above `tol_rel * sigma_max`.
pub fn numerical_rank<T: Scalar>(m: &DMatrix<T>, tol_rel: f64) -> Result<RankDecision> {
    if !(tol_rel > 0.0) {
        return Err(Error::invalid("relative tolerance must be positive"));
    }
    check_finite(m)?;
    Ok(decide_rank(&singular_values(m), tol_rel))
}

#[derive(Debug, Clone)]
pub struct LeastSquares<T: Scalar> {
    pub x: DVector<T>,
    pub residual_norm: f64,
    /// Set when `M` is numerically column-rank deficient; `x` is then the
    /// minimum-norm solution.
    pub degenerate: bool,
}

/// Reusable pseudo-inverse of a tall matrix, for solving many right-hand
/// sides against the same columns.
#[derive(Debug, Clone)]
pub struct LeastSquaresSolver<T: Scalar> {
    matrix: DMatrix<T>,
    pinv: DMatrix<T>,
    rank: RankDecision,
}

impl<T: Scalar> LeastSquaresSolver<T> {
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        check_finite(&matrix)?;
        let (rows, cols) = matrix.shape();
        if cols == 0 {
            return Ok(Self {
                pinv: DMatrix::zeros(0, rows),
                matrix,
                rank: decide_rank(&[], DEFAULT_RANK_TOL),
            });
        }
        let svd = matrix.clone().svd(true, true);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let rank = decide_rank(&sv, DEFAULT_RANK_TOL);
        let pinv = svd
            .pseudo_inverse(rank.tol_used.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Degenerate(e.to_string()))?;
        Ok(Self { matrix, pinv, rank })
    }

    pub fn is_degenerate(&self) -> bool {
        self.rank.rank < self.matrix.ncols()
    }

    pub fn rank(&self) -> &RankDecision {
        &self.rank
    }

    pub fn solve(&self, b: &DVector<T>) -> Result<LeastSquares<T>> {
        if b.len() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch {
                what: "right-hand side length",
                expected: self.matrix.nrows(),
                got: b.len(),
            });
        }
        let x = &self.pinv * b;
        let residual_norm = (&self.matrix * &x - b).norm();
        Ok(LeastSquares {
            x,
            residual_norm,
            degenerate: self.is_degenerate(),
        })
    }
}

/// Minimizes `||Mx - b||_2`.
pub fn least_squares<T: Scalar>(m: &DMatrix<T>, b: &DVector<T>) -> Result<LeastSquares<T>> {
    if m.nrows() < m.ncols() {
        return Err(Error::invalid(format!(
            "least squares needs at least as many rows as columns, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    LeastSquaresSolver::new(m.clone())?.solve(b)
}

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    pub fn top_vector(&self) -> DVector<Complex64> {
        self.eigenvectors.column(0).into_owned()
    }
}

/// Full eigendecomposition of a Hermitian matrix, sorted by descending eigenvalue.
pub fn hermitian_eig(x: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    if !x.is_square() || x.nrows() == 0 {
        return Err(Error::invalid("eigendecomposition needs a non-empty square matrix"));
    }
    check_finite(x)?;
    let scale = x.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let asym = (x - x.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if asym > HERMITIAN_TOL * scale {
        return Err(Error::invalid(format!("matrix is not Hermitian (asymmetry {asym:e})")));
    }
    let sym = (x + x.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let columns: Vec<_> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors: DMatrix::from_columns(&columns),
    })
}

/// Eigenvalues (descending) and a unit eigenvector for the largest one.
pub fn hermitian_top_eig(x: &DMatrix<Complex64>) -> Result<(Vec<f64>, DVector<Complex64>)> {
    let eig = hermitian_eig(x)?;
    let top = eig.top_vector();
    Ok((eig.eigenvalues, top))
}

/// Orthonormal basis of the numerical null space (columns).
pub fn null_space<T: Scalar>(m: &DMatrix<T>, tol_rel: f64) -> Result<DMatrix<T>> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    // Pad to square so the SVD exposes all right singular vectors.
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let decision = decide_rank(&sorted, tol_rel);
    let basis: Vec<DVector<T>> = order[decision.rank..]
        .iter()
        .map(|&i| v_t.row(i).adjoint())
        .collect();
    if basis.is_empty() {
        return Ok(DMatrix::zeros(cols, 0));
    }
    Ok(DMatrix::from_columns(&basis))
}

/// Unit vector spanning the direction of the smallest right singular value.
pub fn null_space_vector<T: Scalar>(m: &DMatrix<T>) -> Result<DVector<T>> {
    let basis = null_space(m, DEFAULT_RANK_TOL)?;
    if basis.ncols() == 0 {
        return Err(Error::Degenerate(format!(
            "{}x{} matrix has full column rank, no null vector",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(basis.column(basis.ncols() - 1).into_owned())
}
