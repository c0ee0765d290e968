//! Property checks shared by the `properties` and `acceptance` targets.
//!
//! Each check runs a deterministic proptest runner for [`CASES`] cases and
//! returns the shrunk counterexample on failure.

use std::f64::consts::TAU;
use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;

use sparse_pr::distance::{
    self, certify_unique, distance_with, schur_reduced_block, witness_rank, DistanceCriterion,
};
use sparse_pr::experiments::{
    build_collision_real, is_valid_collision, lemma31_check_with, random_sparse_signal, render, run_sweep,
    OutputFormat, SweepConfig,
};
use sparse_pr::format;
use sparse_pr::model::{complex_normal, seeded_rng};
use sparse_pr::numerics::{self, Scalar, DEFAULT_RANK_TOL};
use sparse_pr::solver_complex::{
    column_magnitude_collision_1sparse, lifted_solve, refine_gauss_newton, solve_l0_complex, GaussNewtonOptions,
};
use sparse_pr::solver_real::{effective_tol, magnitude_residual, solve_l0_real};
use sparse_pr::{
    measure, phase_equivalent, Complex64, Field, MeasurementEnsemble, MeasurementVector, PhasePattern, SparseVector,
};

use super::oracle::{naive_oracle, same_classes};

pub const CASES: u32 = 100;
const TOL: f64 = 1e-8;

pub type Check = fn() -> Result<(), String>;

pub const ALL: &[(&str, Check)] = &[
    ("measure scales with |c|", measure_scaling),
    ("row phases leave magnitudes unchanged", phase_pattern_invariance),
    ("phase equivalence is an equivalence", phase_equivalence_relation),
    ("generation is deterministic", generate_determinism),
    ("rank invariant under permutation and row phases", rank_invariance),
    ("rank of adjoint", rank_adjoint),
    ("least squares exact on consistent systems", least_squares_consistent),
    ("Hermitian eigen ordering and residual", hermitian_eigen),
    ("distance at most m + 1", distance_bound),
    ("distance invariant under column permutation and sign", distance_invariance),
    ("Gaussian distance is 2k + 1 at m = 2k", gaussian_distance),
    ("witness reproduces min_rank", witness_consistency),
    ("Schur reduction rank identity", schur_consistency),
    ("certified sparsity is recovered", lemma_forward),
    ("uncertified sparsity has an ambiguity", lemma_converse),
    ("real solver soundness", real_soundness),
    ("real solver matches naive oracle", oracle_completeness),
    ("real classes are canonical", real_canonical),
    ("zero measurements give the zero class", zero_signal),
    ("lifted solve reproduces the Gram matrix", lifted_exactness),
    ("complex solver phase invariance", complex_phase_invariance),
    ("complex solver scaling", complex_scaling),
    ("Gauss-Newton objective non-increasing", gauss_newton_monotone),
    ("k = 1 complex uniqueness matches column test", k1_cross_validation),
    ("sweep output is deterministic", sweep_determinism),
    ("constructed collisions are valid", collision_validity),
    ("file formats round-trip", format_round_trip),
];

fn run<S>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(e: impl Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn field_of(complex: bool) -> Field {
    if complex {
        Field::Complex
    } else {
        Field::Real
    }
}

fn gaussian(field: Field, m: usize, n: usize, seed: u64) -> Result<MeasurementEnsemble, TestCaseError> {
    MeasurementEnsemble::generate(field, m, n, seed).map_err(fail)
}

fn signal(field: Field, n: usize, k: usize, seed: u64) -> Result<SparseVector, TestCaseError> {
    random_sparse_signal(field, n, k, &mut seeded_rng(seed ^ 0x5eed)).map_err(fail)
}

fn max_gap(a: &MeasurementVector, b: &MeasurementVector) -> f64 {
    a.magnitudes()
        .iter()
        .zip(b.magnitudes())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

pub fn measure_scaling() -> Result<(), String> {
    let s = (any::<u64>(), any::<bool>(), 1..6usize, 1..8usize, -3.0..3.0f64, -3.0..3.0f64);
    run(s, |(seed, complex, m, n, re, im)| {
        let field = field_of(complex);
        let a = gaussian(field, m, n, seed)?;
        let x = signal(field, n, 1 + seed as usize % n, seed)?;
        let c = Complex64::new(re, if complex { im } else { 0.0 });
        let lhs = measure(&a, &x.scaled(c).map_err(fail)?).map_err(fail)?;
        let rhs = measure(&a, &x).map_err(fail)?;
        for (l, r) in lhs.magnitudes().iter().zip(rhs.magnitudes()) {
            prop_assert!((l - c.norm() * r).abs() <= 1e-12 * (1.0 + c.norm()) * (1.0 + r));
        }
        Ok(())
    })
}

pub fn phase_pattern_invariance() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..6usize, 1..8usize), |(seed, complex, m, n)| {
        let field = field_of(complex);
        let a = gaussian(field, m, n, seed)?;
        let x = signal(field, n, 1 + seed as usize % n, seed)?;
        let mut rng = seeded_rng(seed.rotate_left(7));
        let rotated = if complex {
            let phases = (0..m).map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * TAU)).collect();
            let p = PhasePattern::new(Field::Complex, phases).map_err(fail)?;
            MeasurementEnsemble::from_complex(p.apply_complex(a.complex().unwrap()).map_err(fail)?)
        } else {
            let p = PhasePattern::from_sign_bits(m, rng.random::<u64>() & ((1 << (m - 1)) - 1).max(1));
            MeasurementEnsemble::from_real(p.apply_real(a.real().unwrap()).map_err(fail)?)
        }
        .map_err(fail)?;
        let y = measure(&a, &x).map_err(fail)?;
        let y_rot = measure(&rotated, &x).map_err(fail)?;
        prop_assert!(max_gap(&y, &y_rot) <= 1e-12 * (1.0 + y.norm_inf()));
        Ok(())
    })
}

pub fn phase_equivalence_relation() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..8usize, 0.0..TAU), |(seed, complex, n, theta)| {
        let field = field_of(complex);
        let k = 1 + seed as usize % n;
        let x = signal(field, n, k, seed)?;
        let w = signal(field, n, k, seed.wrapping_add(1))?;
        prop_assert!(phase_equivalent(&x, &x, 0.0));
        let c = if complex {
            Complex64::from_polar(1.0, theta)
        } else {
            Complex64::new(-1.0, 0.0)
        };
        let y = x.scaled(c).map_err(fail)?;
        prop_assert!(phase_equivalent(&x, &y, 1e-12));
        prop_assert!(phase_equivalent(&y, &x, 1e-12));
        for tol in [0.0, 1e-3, 0.5] {
            prop_assert_eq!(phase_equivalent(&x, &w, tol), phase_equivalent(&w, &x, tol));
        }
        // Negation is exact, so the chain x ~ -x ~ x holds at zero tolerance.
        let minus = |v: &SparseVector| v.scaled(Complex64::new(-1.0, 0.0));
        let u = minus(&x).map_err(fail)?;
        let v = minus(&u).map_err(fail)?;
        prop_assert!(phase_equivalent(&x, &u, 0.0) && phase_equivalent(&u, &v, 0.0));
        prop_assert!(phase_equivalent(&x, &v, 0.0));
        if phase_equivalent(&x, &w, 0.0) && phase_equivalent(&w, &u, 0.0) {
            prop_assert!(phase_equivalent(&x, &u, 0.0));
        }
        Ok(())
    })
}

pub fn generate_determinism() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..8usize, 1..8usize), |(seed, complex, m, n)| {
        let field = field_of(complex);
        let a = gaussian(field, m, n, seed)?;
        let b = gaussian(field, m, n, seed)?;
        prop_assert_eq!(a.to_complex_matrix(), b.to_complex_matrix());
        prop_assert_eq!(a.provenance(), b.provenance());
        Ok(())
    })
}

fn low_rank(complex: bool, m: usize, n: usize, r: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = seeded_rng(seed);
    let mut draw = |rows, cols| {
        DMatrix::from_fn(rows, cols, |_, _| {
            if complex {
                complex_normal(&mut rng)
            } else {
                Complex64::new(rng.sample::<f64, _>(rand_distr::StandardNormal), 0.0)
            }
        })
    };
    let left = draw(m, r);
    let right = draw(r, n);
    left * right
}

fn rank_of(mat: &DMatrix<Complex64>, complex: bool) -> Result<usize, TestCaseError> {
    let decision = if complex {
        numerics::numerical_rank(mat, DEFAULT_RANK_TOL)
    } else {
        numerics::numerical_rank(&mat.map(|v| v.re), DEFAULT_RANK_TOL)
    };
    decision.map(|d| d.rank).map_err(fail)
}

pub fn rank_invariance() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..7usize, 1..7usize), |(seed, complex, m, n)| {
        let r = seed as usize % (m.min(n) + 1);
        let mat = low_rank(complex, m, n, r, seed);
        prop_assert_eq!(rank_of(&mat, complex)?, r);
        let mut rng = seeded_rng(seed ^ 0xabc);
        let mut rows: Vec<usize> = (0..m).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let permuted = DMatrix::from_fn(m, n, |i, j| mat[(rows[i], cols[j])]);
        prop_assert_eq!(rank_of(&permuted, complex)?, r);
        let phased = DMatrix::from_fn(m, n, |i, j| {
            let p = if complex {
                Complex64::from_polar(1.0, TAU * (i as f64 + 0.37) / 7.0)
            } else {
                Complex64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
            };
            p * mat[(i, j)]
        });
        prop_assert_eq!(rank_of(&phased, complex)?, r);
        Ok(())
    })
}

pub fn rank_adjoint() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..7usize, 1..7usize), |(seed, complex, m, n)| {
        let r = seed as usize % (m.min(n) + 1);
        let mat = low_rank(complex, m, n, r, seed);
        prop_assert_eq!(rank_of(&mat, complex)?, rank_of(&mat.adjoint(), complex)?);
        Ok(())
    })
}

fn lsq_case<T: Scalar>(a: &DMatrix<T>, x: &DVector<T>) -> Result<(), TestCaseError> {
    let b = a * x;
    let ls = numerics::least_squares(a, &b).map_err(fail)?;
    prop_assert!(ls.residual_norm <= 1e-10 * b.norm().max(1.0));
    Ok(())
}

pub fn least_squares_consistent() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..6usize, 0..4usize), |(seed, complex, n, extra)| {
        let a = gaussian(field_of(complex), n + extra, n, seed)?;
        let mut rng = seeded_rng(seed ^ 0x77);
        match (a.real(), a.complex()) {
            (Some(mat), _) => lsq_case(mat, &DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5)),
            (_, Some(mat)) => lsq_case(mat, &DVector::from_fn(n, |_, _| complex_normal(&mut rng))),
            _ => unreachable!(),
        }
    })
}

pub fn hermitian_eigen() -> Result<(), String> {
    run((any::<u64>(), 1..7usize), |(seed, k)| {
        let mut rng = seeded_rng(seed);
        let b = DMatrix::from_fn(k, k, |_, _| complex_normal(&mut rng));
        let x = &b + b.adjoint();
        let (values, top) = numerics::hermitian_top_eig(&x).map_err(fail)?;
        prop_assert!(values.windows(2).all(|w| w[0] >= w[1]));
        let lambda = Complex64::new(values[0], 0.0);
        prop_assert!((&x * &top - &top * lambda).norm() <= 1e-10 * x.norm());
        Ok(())
    })
}

/// Gaussian real matrix with an optional planted degeneracy.
fn degenerate_real(m: usize, n: usize, seed: u64, kind: u8) -> Result<MeasurementEnsemble, TestCaseError> {
    let base = gaussian(Field::Real, m, n, seed)?;
    let mut mat = base.real().unwrap().clone();
    let mut rng = seeded_rng(seed ^ 0xd1);
    match kind % 4 {
        1 => {
            let col = mat.column(0).into_owned();
            mat.set_column(n - 1, &col);
        }
        2 => mat.column_mut(0).fill(0.0),
        3 => {
            // Equal magnitudes up to scale, different signs.
            let scale = 0.5 + rng.random::<f64>();
            for i in 0..m {
                let s = if rng.random::<bool>() { -1.0 } else { 1.0 };
                mat[(i, n - 1)] = s * scale * mat[(i, 0)];
            }
        }
        _ => {}
    }
    MeasurementEnsemble::from_real(mat).map_err(fail)
}

pub fn distance_bound() -> Result<(), String> {
    run((any::<u64>(), 1..5usize, 1..3usize, 0u8..4), |(seed, m, extra, kind)| {
        let a = degenerate_real(m, m + extra, seed, kind)?;
        let max_support = 1 + seed as usize % m;
        for criterion in [DistanceCriterion::Ambiguous, DistanceCriterion::RankDeficient] {
            let report = distance_with(&a, max_support, criterion).map_err(fail)?;
            prop_assert!(report.d <= m + 1, "d = {} for m = {}", report.d, m);
        }
        Ok(())
    })
}

pub fn distance_invariance() -> Result<(), String> {
    run((any::<u64>(), 1..5usize, 1..3usize, 0u8..4), |(seed, m, extra, kind)| {
        let n = m + extra;
        let a = degenerate_real(m, n, seed, kind)?;
        let mat = a.real().unwrap();
        let mut rng = seeded_rng(seed ^ 0x99);
        let mut cols: Vec<usize> = (0..n).collect();
        cols.shuffle(&mut rng);
        let signs: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { -1.0 } else { 1.0 }).collect();
        let b = MeasurementEnsemble::from_real(DMatrix::from_fn(m, n, |i, j| signs[j] * mat[(i, cols[j])]))
            .map_err(fail)?;
        for criterion in [DistanceCriterion::Ambiguous, DistanceCriterion::RankDeficient] {
            let da = distance_with(&a, m, criterion).map_err(fail)?.d;
            let db = distance_with(&b, m, criterion).map_err(fail)?.d;
            prop_assert_eq!(da, db);
        }
        Ok(())
    })
}

pub fn gaussian_distance() -> Result<(), String> {
    run((any::<u64>(), 1..=2usize, 1..=6usize), |(seed, k, extra)| {
        let m = 2 * k;
        let n = (m + extra).min(10);
        let a = gaussian(Field::Real, m, n, seed)?;
        let report = distance::phase_gen_min_distance(&a, m).map_err(fail)?;
        prop_assert_eq!(report.d, 2 * k + 1);
        Ok(())
    })
}

pub fn witness_consistency() -> Result<(), String> {
    run((any::<u64>(), 1..5usize, 1..3usize, 0u8..4), |(seed, m, extra, kind)| {
        let a = degenerate_real(m, m + extra, seed, kind)?;
        for criterion in [DistanceCriterion::Ambiguous, DistanceCriterion::RankDeficient] {
            let r = distance_with(&a, m, criterion).map_err(fail)?;
            let rank = witness_rank(&a, &r.witness.i, &r.witness.j, &r.witness.pattern).map_err(fail)?;
            prop_assert_eq!(rank, r.min_rank);
        }
        Ok(())
    })
}

pub fn schur_consistency() -> Result<(), String> {
    run((any::<u64>(), 3..=6usize, 1..3usize), |(seed, m, extra)| {
        let n = m + extra;
        let a = gaussian(Field::Real, m, n, seed)?;
        let mut rng = seeded_rng(seed ^ 0x5c);
        for _ in 0..5 {
            let size = rng.random_range(3..=m);
            let w = rng.random_range(1..=(size - 1) / 2);
            let only_i = rng.random_range(0..=size - 2 * w - 1);
            let only_j = size - 2 * w - only_i;
            let mut cols: Vec<usize> = (0..n).collect();
            cols.shuffle(&mut rng);
            let mut i: Vec<usize> = cols[..w + only_i].to_vec();
            let mut j: Vec<usize> = cols[..w].iter().chain(&cols[w + only_i..w + only_i + only_j]).copied().collect();
            i.sort_unstable();
            j.sort_unstable();
            let bits = rng.random_range(1..(1u64 << (m - 1)));
            let pattern = PhasePattern::from_sign_bits(m, bits);
            let Some((w_out, b)) = schur_reduced_block(&a, &i, &j, &pattern).map_err(fail)? else {
                continue;
            };
            prop_assert_eq!(w_out, w);
            let full = witness_rank(&a, &i, &j, &pattern).map_err(fail)?;
            let reduced = numerics::numerical_rank(&b, DEFAULT_RANK_TOL).map_err(fail)?.rank;
            prop_assert_eq!(full, 2 * w + reduced, "I = {:?}, J = {:?}, bits = {}", i, j, bits);
        }
        Ok(())
    })
}

pub fn lemma_forward() -> Result<(), String> {
    run((any::<u64>(), 2..=4usize, 1..=3usize), |(seed, m, extra)| {
        let a = gaussian(Field::Real, m, m + extra, seed)?;
        let k = 1 + seed as usize % (m / 2);
        let check = lemma31_check_with(&a, k, 100, seed).map_err(fail)?;
        if check.certified {
            prop_assert_eq!(check.forward_successes, 100);
        }
        prop_assert!(check.forward_ok);
        Ok(())
    })
}

pub fn lemma_converse() -> Result<(), String> {
    run((any::<u64>(), 1..=4usize, 1..=3usize, 0u8..4), |(seed, m, extra, kind)| {
        let n = m + extra;
        let a = degenerate_real(m, n, seed, kind)?;
        let d = certify_unique(&a, 1).map_err(fail)?.distance.d;
        let k = (d - 1) / 2 + 1;
        if k > m {
            return Ok(());
        }
        let check = lemma31_check_with(&a, k, 0, seed).map_err(fail)?;
        prop_assert!(check.converse_engaged);
        let disjoint = m < 2 * k && 2 * k <= n;
        let witnessed = distance_with(&a, k, DistanceCriterion::Ambiguous).map_err(fail)?.d <= m.min(2 * k);
        if disjoint || witnessed {
            let amb = check.ambiguity.as_ref();
            prop_assert!(amb.is_some(), "no ambiguity for m = {}, n = {}, k = {}", m, n, k);
            let amb = amb.unwrap();
            prop_assert!(is_valid_collision(&a, &amb.x, &amb.z).map_err(fail)?);
            prop_assert!(amb.x.sparsity() <= k && amb.z.sparsity() <= k);
        }
        Ok(())
    })
}

fn real_instance(seed: u64, m: usize, n: usize, k: usize, feasible: bool) -> Result<(MeasurementEnsemble, MeasurementVector), TestCaseError> {
    let a = gaussian(Field::Real, m, n, seed)?;
    let y = if feasible {
        measure(&a, &signal(Field::Real, n, k, seed)?).map_err(fail)?
    } else {
        let mut rng = seeded_rng(seed ^ 0xf00);
        MeasurementVector::new((0..m).map(|_| rng.random::<f64>() * 2.0).collect()).map_err(fail)?
    };
    Ok((a, y))
}

pub fn real_soundness() -> Result<(), String> {
    run((any::<u64>(), 1..=5usize, 1..=3usize, any::<bool>()), |(seed, m, extra, feasible)| {
        let n = m + extra;
        let k = 1 + seed as usize % m.min(2);
        let (a, y) = real_instance(seed, m, n, k, feasible)?;
        let sol = solve_l0_real(&a, &y, k, TOL).map_err(fail)?;
        let eff = effective_tol(&y, TOL);
        for class in &sol.classes {
            prop_assert!(magnitude_residual(&a, &class.vector, &y).map_err(fail)? <= eff);
        }
        if feasible {
            prop_assert!(sol.k_star.is_some());
        }
        Ok(())
    })
}

pub fn oracle_completeness() -> Result<(), String> {
    run((any::<u64>(), 1..=5usize, 2..=6usize, any::<bool>()), |(seed, m, n, feasible)| {
        let k = 1 + seed as usize % m.min(n).min(2);
        let (a, y) = real_instance(seed, m, n, k, feasible)?;
        check_against_oracle(&a, &y, k)
    })
}

pub fn check_against_oracle(a: &MeasurementEnsemble, y: &MeasurementVector, k: usize) -> Result<(), TestCaseError> {
    let sol = solve_l0_real(a, y, k, TOL).map_err(fail)?;
    let oracle = naive_oracle(a.real().unwrap(), y.magnitudes(), k, TOL);
    prop_assert_eq!(sol.k_star, oracle.k_star);
    let found: Vec<SparseVector> = sol.vectors().cloned().collect();
    prop_assert!(
        same_classes(&found, &oracle.classes, TOL * y.norm_inf().max(1.0)),
        "solver {:?} vs oracle {:?}",
        found,
        oracle.classes
    );
    Ok(())
}

pub fn real_canonical() -> Result<(), String> {
    run((any::<u64>(), 1..=4usize, 1..=3usize), |(seed, m, extra)| {
        let k = 1 + seed as usize % m.min(2);
        let (a, y) = real_instance(seed, m, m + extra, k, true)?;
        let sol = solve_l0_real(&a, &y, k, TOL).map_err(fail)?;
        for v in sol.vectors().filter(|v| !v.is_zero()) {
            prop_assert!(v.values()[0].re > 0.0);
            prop_assert_eq!(v.values()[0].im, 0.0);
        }
        Ok(())
    })
}

pub fn zero_signal() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..6usize, 1..8usize), |(seed, complex, m, n)| {
        let field = field_of(complex);
        let a = gaussian(field, m, n, seed)?;
        let y = MeasurementVector::zeros(m);
        let k = 1;
        let sol = if complex {
            solve_l0_complex(&a, &y, k, TOL)
        } else {
            solve_l0_real(&a, &y, k, TOL)
        }
        .map_err(fail)?;
        prop_assert_eq!(sol.k_star, Some(0));
        prop_assert_eq!(sol.classes.len(), 1);
        prop_assert!(sol.classes[0].vector.is_zero());
        Ok(())
    })
}

pub fn lifted_exactness() -> Result<(), String> {
    run((any::<u64>(), 1..=3usize, 0..=3usize, 0..=3usize), |(seed, k, extra_m, extra_n)| {
        let (m, n) = (k * k + extra_m, k + extra_n);
        let a = gaussian(Field::Complex, m, n, seed)?;
        let x0 = signal(Field::Complex, n, k, seed)?;
        let y = measure(&a, &x0).map_err(fail)?;
        let rep = lifted_solve(&a, &y, x0.support(), TOL).map_err(fail)?;
        let v = DVector::from_vec(x0.values().to_vec());
        let gram = &v * v.adjoint();
        prop_assert!((&rep.lifted - &gram).norm() <= 1e-8 * v.norm_squared());
        Ok(())
    })
}

fn complex_instance(seed: u64, k: usize, extra_n: usize) -> Result<(MeasurementEnsemble, SparseVector), TestCaseError> {
    let m = 4 * k - 2;
    let n = (k + 2 + extra_n).min(8);
    Ok((gaussian(Field::Complex, m, n, seed)?, signal(Field::Complex, n, k, seed)?))
}

pub fn complex_phase_invariance() -> Result<(), String> {
    run((any::<u64>(), 1..=2usize, 0..=3usize, 0.0..TAU), |(seed, k, extra_n, theta)| {
        let (a, x0) = complex_instance(seed, k, extra_n)?;
        let rotated = x0.scaled(Complex64::from_polar(1.0, theta)).map_err(fail)?;
        let s1 = solve_l0_complex(&a, &measure(&a, &x0).map_err(fail)?, k, TOL).map_err(fail)?;
        let s2 = solve_l0_complex(&a, &measure(&a, &rotated).map_err(fail)?, k, TOL).map_err(fail)?;
        prop_assert_eq!(s1.k_star, s2.k_star);
        let (v1, v2): (Vec<_>, Vec<_>) = (s1.vectors().cloned().collect(), s2.vectors().cloned().collect());
        prop_assert!(same_classes(&v1, &v2, 1e-8 * x0.norm_inf().max(1.0)));
        Ok(())
    })
}

pub fn complex_scaling() -> Result<(), String> {
    run((any::<u64>(), 1..=2usize, 0..=3usize, 0.1..10.0f64), |(seed, k, extra_n, c)| {
        let (a, x0) = complex_instance(seed, k, extra_n)?;
        let y = measure(&a, &x0).map_err(fail)?;
        let s1 = solve_l0_complex(&a, &y, k, TOL).map_err(fail)?;
        let s2 = solve_l0_complex(&a, &y.scaled(c).map_err(fail)?, k, TOL).map_err(fail)?;
        prop_assert_eq!(s1.k_star, s2.k_star);
        let scaled: Vec<SparseVector> = s1
            .vectors()
            .map(|v| v.scaled(Complex64::new(c, 0.0)))
            .collect::<Result<_, _>>()
            .map_err(fail)?;
        let v2: Vec<SparseVector> = s2.vectors().cloned().collect();
        prop_assert!(same_classes(&scaled, &v2, 1e-8 * c.max(1.0) * x0.norm_inf().max(1.0)));
        Ok(())
    })
}

pub fn gauss_newton_monotone() -> Result<(), String> {
    run((any::<u64>(), 2..=6usize, 1..=3usize), |(seed, m, k)| {
        let mut rng = seeded_rng(seed);
        let a_sub = DMatrix::from_fn(m, k, |_, _| complex_normal(&mut rng));
        let x = DVector::from_fn(k, |_, _| complex_normal(&mut rng));
        let y: Vec<f64> = (&a_sub * &x).iter().map(|v| v.norm()).collect();
        let start = DVector::from_fn(k, |_, _| complex_normal(&mut rng));
        let out = refine_gauss_newton(&a_sub, &y, &start, &GaussNewtonOptions::default()).map_err(fail)?;
        prop_assert!(out.objective_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(out.iterations <= 200);
        Ok(())
    })
}

pub fn k1_cross_validation() -> Result<(), String> {
    run((any::<u64>(), 2..=6usize, any::<bool>(), 0.2..5.0f64), |(seed, n, planted, scale)| {
        let a = gaussian(Field::Complex, 2, n, seed)?;
        let mut mat = a.complex().unwrap().clone();
        if planted {
            let mut rng = seeded_rng(seed ^ 0x31);
            for i in 0..2 {
                mat[(i, n - 1)] = mat[(i, 0)] * Complex64::from_polar(scale, rng.random::<f64>() * TAU);
            }
        }
        let a = MeasurementEnsemble::from_complex(mat).map_err(fail)?;
        let x = SparseVector::complex(n, vec![0], vec![complex_normal(&mut seeded_rng(seed)) + 0.5]).map_err(fail)?;
        let sol = solve_l0_complex(&a, &measure(&a, &x).map_err(fail)?, 1, TOL).map_err(fail)?;
        prop_assert_eq!(sol.is_unique(), !column_magnitude_collision_1sparse(&a));
        prop_assert_eq!(column_magnitude_collision_1sparse(&a), planted);
        Ok(())
    })
}

pub fn sweep_determinism() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..=2usize, 3..=6usize), |(seed, complex, k, n)| {
        let lo = if complex { k * k } else { k };
        let cfg = SweepConfig {
            field: field_of(complex),
            n,
            k,
            m_range: (lo, lo + 1),
            trials_per_m: 3,
            seed,
            tol: TOL,
            timing: false,
        };
        let first = run_sweep(&cfg).map_err(fail)?;
        let second = run_sweep(&cfg).map_err(fail)?;
        for format in [OutputFormat::Csv, OutputFormat::Json, OutputFormat::Gnuplot] {
            prop_assert_eq!(render(&first, format), render(&second, format));
        }
        Ok(())
    })
}

pub fn collision_validity() -> Result<(), String> {
    run((any::<u64>(), 1..=3usize, 0..=3usize, 0..=3usize), |(seed, k, m_drop, extra_n)| {
        let m = (2 * k - 1).saturating_sub(m_drop).max(1);
        let n = 2 * k + extra_n;
        let a = gaussian(Field::Real, m, n, seed)?;
        let (x, z) = build_collision_real(&a, k).map_err(fail)?;
        let (yx, yz) = (measure(&a, &x).map_err(fail)?, measure(&a, &z).map_err(fail)?);
        prop_assert!(max_gap(&yx, &yz) <= 1e-10 * yx.norm_inf());
        prop_assert!(!phase_equivalent(&x, &z, 1e-6));
        prop_assert!(x.support().iter().all(|i| !z.support().contains(i)));
        prop_assert_eq!(x.sparsity(), k);
        prop_assert_eq!(z.sparsity(), k);
        Ok(())
    })
}

pub fn format_round_trip() -> Result<(), String> {
    run((any::<u64>(), any::<bool>(), 1..6usize, 1..8usize), |(seed, complex, m, n)| {
        let field = field_of(complex);
        let a = gaussian(field, m, n, seed)?;
        let parsed = format::parse_matrix(&format::write_matrix(&a)).map_err(fail)?;
        prop_assert_eq!(parsed.field(), field);
        prop_assert_eq!(parsed.to_complex_matrix(), a.to_complex_matrix());
        let x = signal(field, n, 1 + seed as usize % n, seed)?;
        let xp = format::parse_sparse_vector(&format::write_sparse_vector(&x), Some(field)).map_err(fail)?;
        prop_assert_eq!(&xp, &x);
        let y = measure(&a, &x).map_err(fail)?;
        let yp = format::parse_measurements(&format::write_measurements(&y)).map_err(fail)?;
        prop_assert_eq!(yp, y);
        Ok(())
    })
}
