//! Dense complex linear algebra for the small Hilbert spaces used here
//! (dimension 1 through 8).
//!
//! Storage is row-major and always dense. The arithmetic operators
//! (`+`, `-`, `*`) panic on dimension mismatch; the free functions
//! [`matmul`], [`commutator`] and friends return a [`LinalgError`] instead.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

pub use num_complex::Complex64 as Complex;

/// Largest supported Hilbert-space dimension.
pub const MAX_DIM: usize = 8;

/// Off-diagonal Frobenius threshold for the Jacobi sweep, relative to `max(1, ‖A‖_F)`.
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 64;
/// Hermiticity tolerance accepted by [`hermitian_eigenvalues`].
const HERMITIAN_TOL: f64 = 1e-10;
/// Rounding slack below zero tolerated before a squared overlap is clamped.
const CLAMP_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension {0} outside the supported range 1..={MAX_DIM}")]
    UnsupportedDimension(usize),
    #[error("expected {expected} entries, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("non-finite entry")]
    NonFinite,
    #[error("matrix is not Hermitian (max |A - A†| = {0:e})")]
    NotHermitian(f64),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("Jacobi iteration did not converge (off-diagonal norm {0:e})")]
    NoConvergence(f64),
}

fn check_dim(dim: usize) -> Result<(), LinalgError> {
    if dim == 0 || dim > MAX_DIM {
        Err(LinalgError::UnsupportedDimension(dim))
    } else {
        Ok(())
    }
}

fn check_same(left: usize, right: usize) -> Result<(), LinalgError> {
    if left != right {
        Err(LinalgError::DimensionMismatch { left, right })
    } else {
        Ok(())
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        Self {
            dim,
            data: vec![Complex::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from a row-major vector of length `dim²`.
    pub fn from_vec(dim: usize, data: Vec<Complex>) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(LinalgError::WrongLength {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<Complex>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        check_dim(dim)?;
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::WrongLength {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(dim, data)
    }

    /// Real-valued rows, convenient for the spin operators.
    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let rows: Vec<Vec<Complex>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| Complex::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Result<Self, LinalgError> {
        check_dim(values.len())?;
        let dim = values.len();
        Ok(Self::from_fn(dim, |i, j| {
            if i == j {
                Complex::new(values[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        }))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: Complex) {
        self.data[i * self.dim + j] = value;
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| self.data[j * d + i].conj())
    }

    pub fn trace(&self) -> Complex {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn scale(&self, s: Complex) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, s: Complex, other: &CMatrix) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entry of `|A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut out = Self::identity(self.dim);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Matrix-vector product on raw amplitudes. `out` must not alias `v`.
    #[inline]
    pub fn apply_into(&self, v: &[Complex], out: &mut [Complex]) {
        let d = self.dim;
        debug_assert_eq!(v.len(), d);
        debug_assert_eq!(out.len(), d);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * d..(i + 1) * d];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector, LinalgError> {
        check_same(self.dim, psi.dim())?;
        let mut out = vec![Complex::new(0.0, 0.0); self.dim];
        self.apply_into(&psi.amps, &mut out);
        Ok(StateVector { amps: out })
    }

    fn mul_unchecked(&self, rhs: &CMatrix) -> CMatrix {
        let d = self.dim;
        let mut out = CMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == Complex::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        out
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self.get(i, j);
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &'a CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Add for CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: CMatrix) -> CMatrix {
        &self + &rhs
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &'a CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        CMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Sub for CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: CMatrix) -> CMatrix {
        &self - &rhs
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &'a CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.mul_unchecked(rhs)
    }
}

impl Mul for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        &self * &rhs
    }
}

impl Mul<f64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, s: f64) -> CMatrix {
        self.scale_re(s)
    }
}

impl Mul<f64> for CMatrix {
    type Output = CMatrix;
    fn mul(self, s: f64) -> CMatrix {
        self.scale_re(s)
    }
}

impl Mul<Complex> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, s: Complex) -> CMatrix {
        self.scale(s)
    }
}

impl Mul<Complex> for CMatrix {
    type Output = CMatrix;
    fn mul(self, s: Complex) -> CMatrix {
        self.scale(s)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_re(-1.0)
    }
}

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_re(-1.0)
    }
}

pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    check_same(a.dim, b.dim)?;
    Ok(a.mul_unchecked(b))
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn trace(a: &CMatrix) -> Complex {
    a.trace()
}

/// `[A, B] = AB - BA`
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    check_same(a.dim, b.dim)?;
    Ok(&a.mul_unchecked(b) - &b.mul_unchecked(a))
}

/// `{A, B} = AB + BA`
pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    check_same(a.dim, b.dim)?;
    Ok(&a.mul_unchecked(b) + &b.mul_unchecked(a))
}

/// Eigenvalues of a Hermitian matrix in ascending order, by cyclic complex Jacobi rotations.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>, LinalgError> {
    let scale = a.frobenius_norm().max(1.0);
    let defect = a.hermiticity_defect();
    if defect > HERMITIAN_TOL * scale {
        return Err(LinalgError::NotHermitian(defect));
    }
    let n = a.dim;
    // Work on the Hermitian part so rounding asymmetry cannot accumulate.
    let mut m = CMatrix::from_fn(n, |i, j| (a.get(i, j) + a.get(j, i).conj()) * 0.5);

    let off_norm = |m: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m.get(i, j).norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let tol = JACOBI_TOL * scale;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&m) < tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = m.get(p, q);
                let abs_b = b.norm();
                if abs_b == 0.0 {
                    continue;
                }
                let phase = b / abs_b;
                let app = m.get(p, p).re;
                let aqq = m.get(q, q).re;
                let theta = (aqq - app) / (2.0 * abs_b);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // G = diag(1, e^{-iα}) · [[c, s], [-s, c]] acting on the (p, q) plane.
                let ph = phase.conj();
                let g_pp = Complex::new(c, 0.0);
                let g_pq = Complex::new(s, 0.0);
                let g_qp = ph * (-s);
                let g_qq = ph * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, akp * g_pp + akq * g_qp);
                    m.set(k, q, akp * g_pq + akq * g_qq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, g_pp.conj() * apk + g_qp.conj() * aqk);
                    m.set(q, k, g_pq.conj() * apk + g_qq.conj() * aqk);
                }
                m.set(p, q, Complex::new(0.0, 0.0));
                m.set(q, p, Complex::new(0.0, 0.0));
                let (dp, dq) = (m.get(p, p).re, m.get(q, q).re);
                m.set(p, p, Complex::new(dp, 0.0));
                m.set(q, q, Complex::new(dq, 0.0));
            }
        }
    }
    if !converged {
        let off = off_norm(&m);
        if off >= tol {
            return Err(LinalgError::NoConvergence(off));
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Pure state amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex>,
}

impl StateVector {
    pub fn new(amps: Vec<Complex>) -> Result<Self, LinalgError> {
        check_dim(amps.len())?;
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self, LinalgError> {
        Self::new(amps.iter().map(|&x| Complex::new(x, 0.0)).collect())
    }

    /// Computational basis state `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim);
        let mut amps = vec![Complex::new(0.0, 0.0); dim];
        amps[k] = Complex::new(1.0, 0.0);
        Self { amps }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<(), LinalgError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(LinalgError::ZeroNorm);
        }
        let inv = 1.0 / n;
        for z in &mut self.amps {
            *z *= inv;
        }
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self, LinalgError> {
        self.normalize()?;
        Ok(self)
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Result<Complex, LinalgError> {
        check_same(self.dim(), other.dim())?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `⟨ψ|A|ψ⟩`
    pub fn expectation(&self, a: &CMatrix) -> Result<Complex, LinalgError> {
        check_same(self.dim(), a.dim())?;
        let d = self.dim();
        let mut acc = Complex::new(0.0, 0.0);
        for i in 0..d {
            let mut row = Complex::new(0.0, 0.0);
            for j in 0..d {
                row += a.get(i, j) * self.amps[j];
            }
            acc += self.amps[i].conj() * row;
        }
        Ok(acc)
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> CMatrix {
        let d = self.dim();
        CMatrix::from_fn(d, |i, j| self.amps[i] * self.amps[j].conj())
    }
}

/// `|⟨a|b⟩|²`, clamped to `[0, 1]`.
pub fn pure_overlap_sq(a: &StateVector, b: &StateVector) -> Result<f64, LinalgError> {
    let f = a.inner(b)?.norm_sqr();
    Ok(clamp_unit(f))
}

pub(crate) fn clamp_unit(x: f64) -> f64 {
    debug_assert!(x > -CLAMP_SLACK, "value {x} far below zero");
    x.clamp(0.0, 1.0)
}
