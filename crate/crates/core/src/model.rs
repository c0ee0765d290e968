//! Domain types and the forward phaseless measurement operator `y = |Ax|`.
//!
//! Indices are zero-based everywhere inside the library. The text and JSON
//! formats exposed to users are one-based (see [`crate::format`]).

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Tolerance on `|p| = 1` when validating phase entries.
const UNIT_MODULUS_TOL: f64 = 1e-12;

/// Label recorded in [`Provenance`] for generated ensembles.
pub const GAUSSIAN_DISTRIBUTION: &str = "gaussian-chacha8-ziggurat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Real => f.write_str("real"),
            Field::Complex => f.write_str("complex"),
        }
    }
}

impl std::str::FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(Error::invalid(format!("unknown field `{other}`"))),
        }
    }
}

/// Mixes a base seed with a sequence of integers into a new seed.
///
/// Each part is folded in with the SplitMix64 finalizer, so the result only
/// depends on the values and their order, never on scheduling.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts
        .iter()
        .fold(mix(base), |acc, &p| mix(acc ^ mix(p.wrapping_add(0xA076_1D64_78BD_642F))))
}

/// Deterministic RNG used for every random draw in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws one standard complex normal sample (`E|z|^2 = 1`).
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Seeded { seed: u64, distribution: String },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entries {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

/// An `m x n` measurement matrix over a single field.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    entries: Entries,
    provenance: Provenance,
}

impl MeasurementEnsemble {
    pub fn from_real(entries: DMatrix<f64>) -> Result<Self> {
        check_shape(entries.nrows(), entries.ncols())?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        Ok(Self {
            entries: Entries::Real(entries),
            provenance: Provenance::Explicit,
        })
    }

    pub fn from_complex(entries: DMatrix<Complex64>) -> Result<Self> {
        check_shape(entries.nrows(), entries.ncols())?;
        if entries.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        Ok(Self {
            entries: Entries::Complex(entries),
            provenance: Provenance::Explicit,
        })
    }

    /// Builds a real ensemble from row slices.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::from_real(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn from_complex_rows(rows: &[&[Complex64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::from_complex(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    /// I.i.d. Gaussian ensemble, bit-reproducible from `(field, m, n, seed)`.
    ///
    /// Entries are drawn row-major from ChaCha8 seeded with `seed`, using the
    /// ziggurat standard normal sampler. Complex entries draw the real part
    /// then the imaginary part, each scaled by `1/sqrt(2)`.
    pub fn generate(field: Field, m: usize, n: usize, seed: u64) -> Result<Self> {
        check_shape(m, n)?;
        let mut rng = seeded_rng(seed);
        let entries = match field {
            Field::Real => {
                let row_major: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
                Entries::Real(DMatrix::from_row_slice(m, n, &row_major))
            }
            Field::Complex => {
                let row_major: Vec<Complex64> = (0..m * n).map(|_| complex_normal(&mut rng)).collect();
                Entries::Complex(DMatrix::from_row_slice(m, n, &row_major))
            }
        };
        Ok(Self {
            entries,
            provenance: Provenance::Seeded {
                seed,
                distribution: GAUSSIAN_DISTRIBUTION.to_string(),
            },
        })
    }

    pub fn field(&self) -> Field {
        match self.entries {
            Entries::Real(_) => Field::Real,
            Entries::Complex(_) => Field::Complex,
        }
    }

    pub fn m(&self) -> usize {
        match &self.entries {
            Entries::Real(a) => a.nrows(),
            Entries::Complex(a) => a.nrows(),
        }
    }

    pub fn n(&self) -> usize {
        match &self.entries {
            Entries::Real(a) => a.ncols(),
            Entries::Complex(a) => a.ncols(),
        }
    }

    pub fn entries(&self) -> &Entries {
        &self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn real(&self) -> Option<&DMatrix<f64>> {
        match &self.entries {
            Entries::Real(a) => Some(a),
            Entries::Complex(_) => None,
        }
    }

    /// The real matrix, or a field-mismatch error.
    pub fn require_real(&self) -> Result<&DMatrix<f64>> {
        self.real().ok_or(Error::FieldMismatch {
            expected: Field::Real,
            got: Field::Complex,
        })
    }

    pub fn complex(&self) -> Option<&DMatrix<Complex64>> {
        match &self.entries {
            Entries::Complex(a) => Some(a),
            Entries::Real(_) => None,
        }
    }

    pub fn require_complex(&self) -> Result<&DMatrix<Complex64>> {
        self.complex().ok_or(Error::FieldMismatch {
            expected: Field::Complex,
            got: Field::Real,
        })
    }

    /// Entries viewed over the complex field (copy for real ensembles).
    pub fn to_complex_matrix(&self) -> DMatrix<Complex64> {
        match &self.entries {
            Entries::Real(a) => a.map(|v| Complex64::new(v, 0.0)),
            Entries::Complex(a) => a.clone(),
        }
    }

    /// The same matrix reinterpreted over the complex field.
    pub fn promoted(&self) -> Self {
        Self {
            entries: Entries::Complex(self.to_complex_matrix()),
            provenance: self.provenance.clone(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        match &self.entries {
            Entries::Real(a) => Complex64::new(a[(i, j)], 0.0),
            Entries::Complex(a) => a[(i, j)],
        }
    }
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("matrix must be non-empty, got {m}x{n}")));
    }
    Ok(())
}

/// A vector stored by its support and nonzero values.
///
/// Real vectors keep their values in `Complex64` with zero imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    field: Field,
    n: usize,
    support: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseVector {
    pub fn new(field: Field, n: usize, support: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ambient dimension must be positive"));
        }
        if support.len() != values.len() {
            return Err(Error::invalid(format!(
                "support has {} indices but {} values were given",
                support.len(),
                values.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("support indices must be strictly increasing"));
        }
        if let Some(&last) = support.last() {
            if last >= n {
                return Err(Error::invalid(format!("support index {last} out of range for n = {n}")));
            }
        }
        for v in &values {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::invalid("non-finite value"));
            }
            if v.norm() == 0.0 {
                return Err(Error::invalid("support values must be nonzero"));
            }
            if field == Field::Real && v.im != 0.0 {
                return Err(Error::invalid("real vector with imaginary part"));
            }
        }
        Ok(Self {
            field,
            n,
            support,
            values,
        })
    }

    pub fn real(n: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let values = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        Self::new(Field::Real, n, support, values)
    }

    pub fn complex(n: usize, support: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        Self::new(Field::Complex, n, support, values)
    }

    pub fn zero(field: Field, n: usize) -> Self {
        Self {
            field,
            n,
            support: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Keeps the entries with magnitude above `tol`.
    pub fn from_dense(field: Field, dense: &[Complex64], tol: f64) -> Result<Self> {
        let mut support = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in dense.iter().enumerate() {
            if v.norm() > tol {
                let v = match field {
                    Field::Real => Complex64::new(v.re, 0.0),
                    Field::Complex => v,
                };
                support.push(i);
                values.push(v);
            }
        }
        Self::new(field, dense.len(), support, values)
    }

    pub fn from_dense_real(dense: &[f64], tol: f64) -> Result<Self> {
        let dense: Vec<Complex64> = dense.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_dense(Field::Real, &dense, tol)
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Number of nonzero entries.
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn get(&self, index: usize) -> Complex64 {
        match self.support.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> DVector<Complex64> {
        let mut out = DVector::from_element(self.n, Complex64::new(0.0, 0.0));
        for (&i, &v) in self.support.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn to_dense_real(&self) -> Option<DVector<f64>> {
        (self.field == Field::Real).then(|| self.to_dense().map(|v| v.re))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Multiplies every value by `c`. Real vectors only accept real `c`.
    pub fn scaled(&self, c: Complex64) -> Result<Self> {
        if self.field == Field::Real && c.im != 0.0 {
            return Err(Error::invalid("cannot scale a real vector by a complex scalar"));
        }
        if c.norm() == 0.0 {
            return Ok(Self::zero(self.field, self.n));
        }
        Self::new(
            self.field,
            self.n,
            self.support.clone(),
            self.values.iter().map(|&v| v * c).collect(),
        )
    }

    /// Representative of the phase class: first support entry real and positive.
    pub fn canonical(&self) -> Self {
        let Some(first) = self.values.first() else {
            return self.clone();
        };
        let rot = first.conj() / first.norm();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = v * rot;
                match (self.field, i) {
                    (_, 0) => Complex64::new(first.norm(), 0.0),
                    (Field::Real, _) => Complex64::new(w.re, 0.0),
                    (Field::Complex, _) => w,
                }
            })
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }

    /// The same vector viewed over the complex field.
    pub fn promoted(&self) -> Self {
        Self {
            field: Field::Complex,
            ..self.clone()
        }
    }
}

/// Diagonal matrix of unit-modulus phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePattern {
    field: Field,
    phases: Vec<Complex64>,
}

impl PhasePattern {
    pub fn new(field: Field, phases: Vec<Complex64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::invalid("phase pattern must be non-empty"));
        }
        for p in &phases {
            if (p.norm() - 1.0).abs() > UNIT_MODULUS_TOL {
                return Err(Error::invalid(format!("phase {p} is not unit modulus")));
            }
            if field == Field::Real && (p.im != 0.0 || p.re.abs() != 1.0) {
                return Err(Error::invalid("real phases must be +1 or -1"));
            }
        }
        Ok(Self { field, phases })
    }

    pub fn identity(field: Field, m: usize) -> Self {
        Self {
            field,
            phases: vec![Complex64::new(1.0, 0.0); m],
        }
    }

    /// Real sign pattern with the first row fixed to `+1`; bit `i` set means
    /// row `i + 1` (zero-based) is flipped to `-1`.
    pub fn from_sign_bits(m: usize, bits: u64) -> Self {
        let phases = (0..m)
            .map(|row| {
                let flipped = row > 0 && (bits >> (row - 1)) & 1 == 1;
                Complex64::new(if flipped { -1.0 } else { 1.0 }, 0.0)
            })
            .collect();
        Self {
            field: Field::Real,
            phases,
        }
    }

    /// Inverse of [`PhasePattern::from_sign_bits`], after quotienting the global flip.
    pub fn sign_bits(&self) -> Option<u64> {
        if self.field != Field::Real || self.phases.len() > 64 {
            return None;
        }
        let flip = self.phases[0].re < 0.0;
        let mut bits = 0u64;
        for (row, p) in self.phases.iter().enumerate().skip(1) {
            if (p.re < 0.0) != flip {
                bits |= 1 << (row - 1);
            }
        }
        Some(bits)
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn m(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[Complex64] {
        &self.phases
    }

    /// Real signs, when the pattern is real.
    pub fn signs(&self) -> Option<Vec<f64>> {
        (self.field == Field::Real).then(|| self.phases.iter().map(|p| p.re).collect())
    }

    /// False for multiples of the identity.
    pub fn is_admissible(&self) -> bool {
        let first = self.phases[0];
        self.phases.iter().any(|p| (p - first).norm() > UNIT_MODULUS_TOL)
    }

    /// Scales row `i` of `a` by the `i`-th phase.
    pub fn apply_real(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let signs = self
            .signs()
            .ok_or_else(|| Error::invalid("complex phases applied to a real matrix"))?;
        if a.nrows() != signs.len() {
            return Err(Error::DimensionMismatch {
                what: "phase pattern length",
                expected: a.nrows(),
                got: signs.len(),
            });
        }
        Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| signs[i] * a[(i, j)]))
    }

    pub fn apply_complex(&self, a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        if a.nrows() != self.phases.len() {
            return Err(Error::DimensionMismatch {
                what: "phase pattern length",
                expected: a.nrows(),
                got: self.phases.len(),
            });
        }
        Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| self.phases[i] * a[(i, j)]))
    }
}

/// Phaseless measurements `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    magnitudes: Vec<f64>,
}

impl MeasurementVector {
    pub fn new(magnitudes: Vec<f64>) -> Result<Self> {
        for (i, &v) in magnitudes.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("measurement {} is not finite", i + 1)));
            }
            if v < 0.0 {
                return Err(Error::invalid(format!("measurement {} is negative ({v})", i + 1)));
            }
        }
        Ok(Self { magnitudes })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            magnitudes: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn norm_inf(&self) -> f64 {
        self.magnitudes.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.magnitudes.iter().map(|v| v * c).collect())
    }
}

/// `y = |Ax|`, elementwise.
pub fn measure(a: &MeasurementEnsemble, x: &SparseVector) -> Result<MeasurementVector> {
    if a.field() != x.field() {
        return Err(Error::FieldMismatch {
            expected: a.field(),
            got: x.field(),
        });
    }
    if a.n() != x.n() {
        return Err(Error::DimensionMismatch {
            what: "signal length",
            expected: a.n(),
            got: x.n(),
        });
    }
    let magnitudes = match a.entries() {
        Entries::Real(mat) => (0..mat.nrows())
            .map(|i| {
                x.support()
                    .iter()
                    .zip(x.values())
                    .map(|(&j, v)| mat[(i, j)] * v.re)
                    .sum::<f64>()
                    .abs()
            })
            .collect(),
        Entries::Complex(mat) => (0..mat.nrows())
            .map(|i| {
                x.support()
                    .iter()
                    .zip(x.values())
                    .map(|(&j, &v)| mat[(i, j)] * v)
                    .sum::<Complex64>()
                    .norm()
            })
            .collect(),
    };
    MeasurementVector::new(magnitudes)
}

/// Whether `u = c v` for some unit-modulus `c`, to within `tol` in the max norm.
///
/// Real vectors only try `c = +1` and `c = -1`. Complex vectors use the
/// optimal phase `c = <v, u> / |<v, u>|`.
pub fn phase_equivalent(u: &SparseVector, v: &SparseVector, tol: f64) -> bool {
    if u.n() != v.n() || u.field() != v.field() {
        return false;
    }
    let du = u.to_dense();
    let dv = v.to_dense();
    let max_diff = |c: Complex64| {
        du.iter()
            .zip(dv.iter())
            .map(|(a, b)| (a - c * b).norm())
            .fold(0.0, f64::max)
    };
    match u.field() {
        Field::Real => {
            max_diff(Complex64::new(1.0, 0.0)) <= tol || max_diff(Complex64::new(-1.0, 0.0)) <= tol
        }
        Field::Complex => {
            let inner: Complex64 = dv.iter().zip(du.iter()).map(|(b, a)| b.conj() * a).sum();
            if inner.norm() == 0.0 {
                u.norm_inf() <= tol && v.norm_inf() <= tol
            } else {
                max_diff(inner / inner.norm()) <= tol
            }
        }
    }
}
