//! Independent real l0 oracle: every support, every square row subsystem,
//! every sign pattern, solved by LU and verified on all rows.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use sparse_pr::{phase_equivalent, SparseVector};

pub struct OracleAnswer {
    pub k_star: Option<usize>,
    pub classes: Vec<SparseVector>,
}

pub fn naive_oracle(a: &DMatrix<f64>, y: &[f64], k_max: usize, tol: f64) -> OracleAnswer {
    let (m, n) = a.shape();
    let eff = tol * y.iter().cloned().fold(1.0, f64::max);
    if y.iter().all(|&v| v <= eff) {
        return OracleAnswer {
            k_star: Some(0),
            classes: vec![SparseVector::real(n, vec![], vec![]).unwrap()],
        };
    }
    for k in 1..=k_max {
        let mut found: Vec<SparseVector> = Vec::new();
        for support in (0..n).combinations(k) {
            for rows in (0..m).combinations(k) {
                let sub = DMatrix::from_fn(k, k, |r, c| a[(rows[r], support[c])]);
                let lu = sub.lu();
                for bits in 0u32..(1 << k) {
                    let rhs = DVector::from_fn(k, |r, _| {
                        let s = if (bits >> r) & 1 == 1 { -1.0 } else { 1.0 };
                        s * y[rows[r]]
                    });
                    let Some(x) = lu.solve(&rhs) else { continue };
                    if x.iter().any(|v| !v.is_finite() || v.abs() <= eff) {
                        continue;
                    }
                    let fits = (0..m).all(|r| {
                        let dot: f64 = support.iter().zip(x.iter()).map(|(&c, v)| a[(r, c)] * v).sum();
                        (dot.abs() - y[r]).abs() <= eff
                    });
                    if !fits {
                        continue;
                    }
                    let v = SparseVector::real(n, support.clone(), x.iter().copied().collect()).unwrap();
                    if !found.iter().any(|f| phase_equivalent(f, &v, eff)) {
                        found.push(v);
                    }
                }
            }
        }
        if !found.is_empty() {
            return OracleAnswer {
                k_star: Some(k),
                classes: found,
            };
        }
    }
    OracleAnswer {
        k_star: None,
        classes: Vec::new(),
    }
}

/// Both lists contain the same classes up to sign, each matched once.
pub fn same_classes(lhs: &[SparseVector], rhs: &[SparseVector], tol: f64) -> bool {
    lhs.len() == rhs.len()
        && lhs.iter().all(|u| rhs.iter().filter(|v| phase_equivalent(u, v, tol)).count() == 1)
        && rhs.iter().all(|v| lhs.iter().filter(|u| phase_equivalent(u, v, tol)).count() == 1)
}
