//! l0 phase retrieval over the complex field by per-support rank-one lifting.
//!
//! On a support `I` of size `k`, `|a_i^T x|^2 = tr(a_i a_i^* X)` is linear in
//! the Hermitian matrix `X = x x^*`, which has `k^2` real unknowns. With
//! `m >= k^2` generic rows the lifted system pins down `X`, and `x` is read
//! off its top eigenpair. Accepted solutions are polished with damped
//! Gauss-Newton and checked against `y` directly.
//!
//! When `m < k^2` the lifted system is underdetermined. Those supports are
//! only searched when heuristic mode is enabled; their solutions come from
//! Gauss-Newton restarts and are labelled [`Method::Refined`].
//!
//! [`collision_probe_complex`] searches numerically for two non-equivalent
//! `k`-sparse vectors with equal phaseless measurements. Finding none is not
//! a proof of uniqueness.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    complex_normal, derive_seed, phase_equivalent, seeded_rng, Complex64, Field, MeasurementEnsemble,
    MeasurementVector, SparseVector,
};
use crate::numerics::{self, LeastSquaresSolver};
use crate::solution::{dedup_classes, Method, RecoveredClass, SearchStats, SolutionSet};
use crate::solver_real::{effective_tol, magnitude_residual, validate_problem};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Accept a lifted solution when `lambda_2 / lambda_1` is at most this.
pub const RANK1_TOL: f64 = 1e-6;
/// Negative eigenvalues down to `-PSD_TOL * lambda_1` are forgiven.
pub const PSD_TOL: f64 = 1e-8;
/// Probe verdict threshold on `|| |Au| - |Av| ||_2`.
pub const COLLISION_OBJECTIVE_TOL: f64 = 1e-8;
/// Probe pairs closer than this (max norm, unit inputs) are the same class.
pub const COLLISION_EQUIV_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexSolveOptions {
    pub tol: f64,
    /// Search supports with `m < k^2` by Gauss-Newton restarts.
    pub allow_heuristic: bool,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ComplexSolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            allow_heuristic: false,
            restarts: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftedSolveReport {
    pub support: Vec<usize>,
    /// Least-squares Hermitian solution of the lifted system.
    pub lifted: DMatrix<Complex64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `lambda_2 / lambda_1`, zero for `k = 1` or `lambda_1 <= 0`.
    pub rank1_defect: f64,
    pub lifted_residual: f64,
    /// The lifted system has fewer than `k^2` independent equations.
    pub underdetermined: bool,
    pub accepted: bool,
    pub x_hat: Option<SparseVector>,
}

/// Real coefficient matrix of the lifted equations on the columns `a_sub`.
///
/// Unknowns are ordered as the `k` diagonal entries of `X`, then for each
/// `j < l` (lexicographic) the real and imaginary parts of `X_jl`.
pub fn lifted_system(a_sub: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (m, k) = a_sub.shape();
    let mut out = DMatrix::zeros(m, k * k);
    for i in 0..m {
        for j in 0..k {
            out[(i, j)] = a_sub[(i, j)].norm_sqr();
        }
        for (p, (j, l)) in (0..k).tuple_combinations().enumerate() {
            let c = a_sub[(i, j)] * a_sub[(i, l)].conj();
            out[(i, k + 2 * p)] = 2.0 * c.re;
            out[(i, k + 2 * p + 1)] = -2.0 * c.im;
        }
    }
    out
}

fn unpack_hermitian(theta: &DVector<f64>, k: usize) -> DMatrix<Complex64> {
    let mut x = DMatrix::zeros(k, k);
    for j in 0..k {
        x[(j, j)] = Complex64::new(theta[j], 0.0);
    }
    for (p, (j, l)) in (0..k).tuple_combinations().enumerate() {
        let v = Complex64::new(theta[k + 2 * p], theta[k + 2 * p + 1]);
        x[(j, l)] = v;
        x[(l, j)] = v.conj();
    }
    x
}

/// Lifted solve on one support, with acceptance checks against `y`.
pub fn lifted_solve(
    a: &MeasurementEnsemble,
    y: &MeasurementVector,
    support: &[usize],
    tol: f64,
) -> Result<LiftedSolveReport> {
    let mat = a.require_complex()?;
    let a_sub = mat.select_columns(support.iter());
    let k = support.len();
    let m = a.m();
    let eff = effective_tol(y, tol);
    let system = LeastSquaresSolver::new(lifted_system(&a_sub))?;
    let underdetermined = m < k * k || system.is_degenerate();
    let y_sq = DVector::from_iterator(m, y.magnitudes().iter().map(|v| v * v));
    let ls = system.solve(&y_sq)?;
    let lifted = unpack_hermitian(&ls.x, k);
    let eig = numerics::hermitian_eig(&lifted)?;
    let lambda1 = eig.eigenvalues[0];
    let rank1_defect = if k > 1 && lambda1 > 0.0 {
        eig.eigenvalues[1].abs().max(eig.eigenvalues[1]) / lambda1
    } else {
        0.0
    };
    let lambda_min = *eig.eigenvalues.last().expect("non-empty spectrum");
    let lifted_residual = ls.residual_norm;
    // Residual in y^2 units: |y^2 - f^2| ~ 2 y |y - f|.
    let lifted_ok = lifted_residual <= 2.0 * eff * y.norm_inf().max(1.0) * (m as f64).sqrt();
    let spectrum_ok = lambda1 > 0.0 && lambda_min >= -PSD_TOL * lambda1 && rank1_defect <= RANK1_TOL;

    let mut report = LiftedSolveReport {
        support: support.to_vec(),
        lifted,
        eigenvalues: eig.eigenvalues.clone(),
        rank1_defect,
        lifted_residual,
        underdetermined,
        accepted: false,
        x_hat: None,
    };
    if underdetermined || !lifted_ok || !spectrum_ok {
        return Ok(report);
    }
    let x0 = eig.top_vector().scale(lambda1.sqrt());
    let polished = refine_gauss_newton(&a_sub, y.magnitudes(), &x0, &GaussNewtonOptions::polish(eff))?;
    let x_best = if polished.residual < magnitude_residual_dense(&a_sub, y.magnitudes(), &x0) {
        polished.x
    } else {
        x0
    };
    if let Some(v) = accept_candidate(a, y, support, &x_best, eff)? {
        report.accepted = true;
        report.x_hat = Some(v);
    }
    Ok(report)
}

fn magnitude_residual_dense(a_sub: &DMatrix<Complex64>, y: &[f64], x: &DVector<Complex64>) -> f64 {
    let r = a_sub * x;
    r.iter().zip(y).map(|(ri, yi)| (ri.norm() - yi).abs()).fold(0.0, f64::max)
}

/// Builds the sparse vector and keeps it if its support is genuinely `|I|`
/// and it reproduces `y` to `eff` in the max norm.
fn accept_candidate(
    a: &MeasurementEnsemble,
    y: &MeasurementVector,
    support: &[usize],
    x: &DVector<Complex64>,
    eff: f64,
) -> Result<Option<SparseVector>> {
    if x.iter().any(|v| v.norm() <= eff) {
        return Ok(None);
    }
    let v = SparseVector::complex(a.n(), support.to_vec(), x.iter().copied().collect())?;
    Ok((magnitude_residual(a, &v, y)? <= eff).then_some(v))
}

/// Complex l0 recovery with default options (exact path only).
pub fn solve_l0_complex(
    a: &MeasurementEnsemble,
    y: &MeasurementVector,
    k_max: usize,
    tol: f64,
) -> Result<SolutionSet> {
    solve_l0_complex_with(
        a,
        y,
        k_max,
        &ComplexSolveOptions {
            tol,
            ..ComplexSolveOptions::default()
        },
    )
}

pub fn solve_l0_complex_with(
    a: &MeasurementEnsemble,
    y: &MeasurementVector,
    k_max: usize,
    opts: &ComplexSolveOptions,
) -> Result<SolutionSet> {
    a.require_complex()?;
    validate_problem(a, y, k_max, opts.tol)?;
    let (m, n) = (a.m(), a.n());
    if k_max * k_max > m && !opts.allow_heuristic {
        return Err(Error::Unsupported(format!(
            "exact lifting needs m >= k^2, got m = {m} with k_max = {k_max}; enable heuristic mode"
        )));
    }
    let eff = effective_tol(y, opts.tol);
    if y.magnitudes().iter().all(|&v| v <= eff) {
        return Ok(SolutionSet {
            field: Field::Complex,
            n,
            k_star: Some(0),
            classes: vec![RecoveredClass {
                vector: SparseVector::zero(Field::Complex, n),
                residual: y.norm_inf(),
                rank1_defect: Some(0.0),
                method: Method::Lifted,
            }],
            stats: SearchStats::default(),
            heuristic: false,
        });
    }

    let mut stats = SearchStats::default();
    for k in 1..=k_max {
        let heuristic_level = k * k > m;
        let supports: Vec<Vec<usize>> = (0..n).combinations(k).collect();
        let results: Vec<(Option<RecoveredClass>, bool)> = supports
            .par_iter()
            .enumerate()
            .map(|(idx, support)| {
                if heuristic_level {
                    refined_support(a, y, support, opts, derive_seed(opts.seed, &[k as u64, idx as u64]))
                        .map(|c| (c, false))
                } else {
                    let rep = lifted_solve(a, y, support, opts.tol)?;
                    let degenerate = rep.underdetermined;
                    let class = rep.x_hat.map(|vector| RecoveredClass {
                        residual: magnitude_residual(a, &vector, y).unwrap_or(f64::INFINITY),
                        vector,
                        rank1_defect: Some(rep.rank1_defect),
                        method: Method::Lifted,
                    });
                    Ok((class, degenerate))
                }
            })
            .collect::<Result<_>>()?;
        stats.supports_tried += supports.len() as u64;
        stats.patterns_tried += supports.len() as u64;
        stats.degenerate_supports += results.iter().filter(|(_, d)| *d).count() as u64;
        let candidates: Vec<RecoveredClass> = results.into_iter().filter_map(|(c, _)| c).collect();
        if !candidates.is_empty() {
            return Ok(SolutionSet {
                field: Field::Complex,
                n,
                k_star: Some(k),
                classes: dedup_classes(candidates, eff),
                stats,
                heuristic: heuristic_level,
            });
        }
    }
    Ok(SolutionSet::empty(Field::Complex, n, stats))
}

/// Heuristic search on a support whose lifted system is underdetermined.
fn refined_support(
    a: &MeasurementEnsemble,
    y: &MeasurementVector,
    support: &[usize],
    opts: &ComplexSolveOptions,
    seed: u64,
) -> Result<Option<RecoveredClass>> {
    let mat = a.require_complex()?;
    let a_sub = mat.select_columns(support.iter());
    let k = support.len();
    let eff = effective_tol(y, opts.tol);
    let lifted = lifted_solve(a, y, support, opts.tol)?;
    let lambda1 = lifted.eigenvalues[0].max(0.0);
    let eig = numerics::hermitian_eig(&lifted.lifted)?;
    let mut starts = vec![eig.top_vector().scale(lambda1.sqrt())];
    let mut rng = seeded_rng(seed);
    let scale = y.norm_inf().max(f64::MIN_POSITIVE);
    for _ in 0..opts.restarts {
        starts.push(DVector::from_fn(k, |_, _| complex_normal(&mut rng) * scale));
    }
    let gn = GaussNewtonOptions::polish(eff);
    for start in starts {
        if start.norm() == 0.0 {
            continue;
        }
        let out = refine_gauss_newton(&a_sub, y.magnitudes(), &start, &gn)?;
        if out.diverged {
            continue;
        }
        if let Some(vector) = accept_candidate(a, y, support, &out.x, eff)? {
            return Ok(Some(RecoveredClass {
                residual: out.residual,
                vector,
                rank1_defect: Some(lifted.rank1_defect),
                method: Method::Refined,
            }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonOptions {
    pub iters: usize,
    /// Stop once `max_i ||a_i x| - y_i| <= tol`.
    pub tol: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self { iters: 200, tol: 1e-12 }
    }
}

impl GaussNewtonOptions {
    fn polish(eff: f64) -> Self {
        Self {
            iters: 200,
            tol: (eff * 1e-4).max(1e-15),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussNewtonReport {
    #[serde(skip)]
    pub x: DVector<Complex64>,
    /// `max_i ||a_i x| - y_i|` at the returned iterate.
    pub residual: f64,
    /// `sum_i (|a_i x|^2 - y_i^2)^2` after each accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub diverged: bool,
}

impl GaussNewtonReport {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the initial objective")
    }

    pub fn steps_accepted(&self) -> usize {
        self.objective_history.len() - 1
    }
}

fn gn_objective(a_sub: &DMatrix<Complex64>, y_sq: &[f64], x: &DVector<Complex64>) -> (f64, DVector<Complex64>) {
    let r = a_sub * x;
    let f = r.iter().zip(y_sq).map(|(ri, t)| (ri.norm_sqr() - t).powi(2)).sum();
    (f, r)
}

/// Damped Gauss-Newton on `sum_i (|a_i x|^2 - y_i^2)^2` over the real and
/// imaginary parts of `x`.
///
/// Each step solves the linearized problem with a pseudo-inverse (the global
/// phase direction is always in the Jacobian's null space), then halves the
/// step length until the objective decreases. Iteration stops on reaching
/// `tol`, when no decrease is found, or after `iters` steps.
pub fn refine_gauss_newton(
    a_sub: &DMatrix<Complex64>,
    y: &[f64],
    x_init: &DVector<Complex64>,
    opts: &GaussNewtonOptions,
) -> Result<GaussNewtonReport> {
    let (m, k) = a_sub.shape();
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            what: "measurement vector length",
            expected: m,
            got: y.len(),
        });
    }
    if x_init.len() != k {
        return Err(Error::DimensionMismatch {
            what: "initial point length",
            expected: k,
            got: x_init.len(),
        });
    }
    if x_init.norm() == 0.0 {
        return Err(Error::invalid("Gauss-Newton needs a nonzero starting point"));
    }
    let y_sq: Vec<f64> = y.iter().map(|v| v * v).collect();
    let mut x = x_init.clone();
    let (mut f, mut r) = gn_objective(a_sub, &y_sq, &x);
    let initial_residual = magnitude_residual_dense(a_sub, y, &x);
    let mut history = vec![f];
    let mut iterations = 0;

    while iterations < opts.iters && magnitude_residual_dense(a_sub, y, &x) > opts.tol {
        iterations += 1;
        let mut jac = DMatrix::zeros(m, 2 * k);
        let mut res = DVector::zeros(m);
        for i in 0..m {
            res[i] = r[i].norm_sqr() - y_sq[i];
            for j in 0..k {
                let g = r[i].conj() * a_sub[(i, j)];
                jac[(i, j)] = 2.0 * g.re;
                jac[(i, k + j)] = -2.0 * g.im;
            }
        }
        let svd = jac.svd(true, true);
        let sigma_max = svd.singular_values.max();
        let pinv = svd
            .pseudo_inverse(sigma_max * 1e-12)
            .map_err(|e| Error::Degenerate(e.to_string()))?;
        let step = -(pinv * res);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = DVector::from_fn(k, |j, _| {
                x[j] + Complex64::new(alpha * step[j], alpha * step[k + j])
            });
            let (ft, rt) = gn_objective(a_sub, &y_sq, &trial);
            if ft < f {
                accepted = Some((trial, ft, rt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, rn)) = accepted else {
            break;
        };
        x = xn;
        f = fnew;
        r = rn;
        history.push(f);
    }
    let residual = magnitude_residual_dense(a_sub, y, &x);
    Ok(GaussNewtonReport {
        x,
        residual,
        objective_history: history,
        iterations,
        diverged: residual > 10.0 * initial_residual.max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    CollisionFound,
    NoCollisionFound,
}

#[derive(Debug, Clone)]
pub struct CollisionProbe {
    /// Best pair found (unit-norm `u`); `None` only if no restart completed.
    pub pair: Option<(SparseVector, SparseVector)>,
    /// `|| |Au| - |Av| ||_2` for `pair`.
    pub objective: f64,
    pub restarts: usize,
    pub support_pairs: usize,
    pub verdict: ProbeVerdict,
}

/// Numerical search for a collision among `k`-sparse complex vectors.
///
/// For every ordered support pair `(I, J)` and each restart, a random unit `u`
/// on `I` is drawn and `|| |A_I u| - |A_J v| ||` is minimized over `v` from a
/// random start. Phase-equivalent results are ignored. Real ensembles are
/// probed over the complex field.
pub fn collision_probe_complex(
    a: &MeasurementEnsemble,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<CollisionProbe> {
    if restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    if k == 0 || k > a.n() {
        return Err(Error::invalid(format!("k = {k} outside 1..={}", a.n())));
    }
    let a = if a.field() == Field::Real { a.promoted() } else { a.clone() };
    let mat = a.require_complex()?;
    let n = a.n();
    let supports: Vec<Vec<usize>> = (0..n).combinations(k).collect();
    let pairs: Vec<(&Vec<usize>, &Vec<usize>)> = supports.iter().cartesian_product(supports.iter()).collect();
    let gn = GaussNewtonOptions { iters: 100, tol: 1e-12 };

    // Best non-equivalent (objective, pair) per support pair, reduced in pair order.
    let best: Vec<Option<(f64, SparseVector, SparseVector)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(pair_idx, (i, j))| {
            let a_i = mat.select_columns(i.iter());
            let a_j = mat.select_columns(j.iter());
            let mut best: Option<(f64, SparseVector, SparseVector)> = None;
            for restart in 0..restarts {
                let mut rng = seeded_rng(derive_seed(seed, &[pair_idx as u64, restart as u64]));
                let u = DVector::from_fn(k, |_, _| complex_normal(&mut rng)).normalize();
                let v0 = DVector::from_fn(k, |_, _| complex_normal(&mut rng));
                let target: Vec<f64> = (&a_i * &u).iter().map(|c| c.norm()).collect();
                let Ok(out) = refine_gauss_newton(&a_j, &target, &v0, &gn) else {
                    continue;
                };
                let fitted = &a_j * &out.x;
                let objective = fitted
                    .iter()
                    .zip(&target)
                    .map(|(f, t)| (f.norm() - t).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let (Ok(us), Ok(vs)) = (
                    SparseVector::from_dense(Field::Complex, &scatter(n, i, &u), 0.0),
                    SparseVector::from_dense(Field::Complex, &scatter(n, j, &out.x), 0.0),
                ) else {
                    continue;
                };
                if phase_equivalent(&us, &vs, COLLISION_EQUIV_TOL) {
                    continue;
                }
                if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
                    best = Some((objective, us, vs));
                }
            }
            best
        })
        .collect();

    let overall = best
        .into_iter()
        .flatten()
        .fold(None::<(f64, SparseVector, SparseVector)>, |acc, cur| match acc {
            Some(a) if a.0 <= cur.0 => Some(a),
            _ => Some(cur),
        });
    let (objective, pair) = match overall {
        Some((o, u, v)) => (o, Some((u, v))),
        None => (f64::INFINITY, None),
    };
    Ok(CollisionProbe {
        verdict: if objective <= COLLISION_OBJECTIVE_TOL {
            ProbeVerdict::CollisionFound
        } else {
            ProbeVerdict::NoCollisionFound
        },
        pair,
        objective,
        restarts,
        support_pairs: pairs.len(),
    })
}

fn scatter(n: usize, support: &[usize], values: &DVector<Complex64>) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (&i, &v) in support.iter().zip(values.iter()) {
        out[i] = v;
    }
    out
}

/// Exact `k = 1` ambiguity test: some two distinct columns have elementwise
/// proportional magnitude vectors (relative tolerance `1e-10`).
pub fn column_magnitude_collision_1sparse(a: &MeasurementEnsemble) -> bool {
    let mags: Vec<Vec<f64>> = (0..a.n())
        .map(|j| (0..a.m()).map(|i| a.entry(i, j).norm()).collect())
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    mags.iter().tuple_combinations().any(|(p, q)| {
        let scale = norm(p) * norm(q);
        if scale == 0.0 {
            return true;
        }
        (0..p.len())
            .tuple_combinations()
            .all(|(r, s)| (p[r] * q[s] - p[s] * q[r]).abs() <= 1e-10 * scale)
    })
}
