//! Dense complex matrix kernels and the real-vector-space machinery for spans
//! of anti-Hermitian matrices.
//!
//! Anti-Hermitian matrices form a *real* vector space; all span computations
//! here use the realified inner product `Re tr(X† Y)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Dense complex matrix, the container for every matrix-valued quantity.
pub type CMatrix = DMatrix<C64>;

/// Default relative tolerance for rank decisions in [`MatrixSpan`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Relative defect bound below which a matrix counts as anti-Hermitian.
pub const ANTIHERM_TOL: f64 = 1e-10;

pub fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn cone() -> C64 {
    C64::new(1.0, 0.0)
}

pub fn ci() -> C64 {
    C64::new(0.0, 1.0)
}

/// Largest entry magnitude.
pub fn max_norm(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Frobenius norm.
pub fn frob_norm(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Defect `‖X + X†‖_max`; zero for exactly anti-Hermitian matrices.
pub fn antiherm_defect(x: &CMatrix) -> f64 {
    max_norm(&(x + x.adjoint()))
}

/// Anti-Hermitian part `(X − X†)/2`.
pub fn antiherm_project(x: &CMatrix) -> CMatrix {
    (x - x.adjoint()).scale(0.5)
}

fn check_square(x: &CMatrix) -> Result<()> {
    if x.nrows() != x.ncols() {
        return Err(Error::DimMismatch(format!(
            "expected square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

fn check_same_shape(x: &CMatrix, y: &CMatrix) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::DimMismatch(format!(
            "shape mismatch: {}x{} vs {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(())
}

/// Square matrix refined by the anti-Hermiticity invariant
/// `‖X + X†‖_max ≤ 1e-10 (1 + ‖X‖_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AntiHermitian(CMatrix);

impl AntiHermitian {
    pub fn try_new(x: CMatrix) -> Result<Self> {
        check_square(&x)?;
        let defect = antiherm_defect(&x);
        if defect > ANTIHERM_TOL * (1.0 + max_norm(&x)) {
            return Err(Error::NotAntiHermitian { defect });
        }
        Ok(AntiHermitian(x))
    }

    /// Project onto the anti-Hermitian part, reporting the discarded defect.
    pub fn project(x: &CMatrix) -> Result<(Self, f64)> {
        check_square(x)?;
        let defect = antiherm_defect(x);
        Ok((AntiHermitian(antiherm_project(x)), defect))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }
}

impl std::ops::Deref for AntiHermitian {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

/// Commutator `XY − YX`.
pub fn commutator(x: &CMatrix, y: &CMatrix) -> Result<CMatrix> {
    check_square(x)?;
    check_square(y)?;
    check_same_shape(x, y)?;
    Ok(x * y - y * x)
}

/// Real inner product `Re tr(X† Y)` on matrices of identical shape.
pub fn frob_inner(x: &CMatrix, y: &CMatrix) -> Result<f64> {
    check_same_shape(x, y)?;
    Ok(x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a.conj() * b).re)
        .sum())
}

/// Outcome of a [`MatrixSpan::insert`].
#[derive(Debug, Clone, Copy)]
pub struct SpanInsert {
    pub added: bool,
    /// Relative residual `‖X − proj X‖_F / (1 + ‖X‖_F)` before insertion.
    pub residual: f64,
}

/// Orthonormalized basis of a real subspace of anti-Hermitian n×n matrices.
#[derive(Debug, Clone)]
pub struct MatrixSpan {
    n: usize,
    basis: Vec<CMatrix>,
    rank_tol: f64,
}

impl MatrixSpan {
    pub fn new(n: usize, rank_tol: f64) -> Self {
        MatrixSpan {
            n,
            basis: Vec::new(),
            rank_tol,
        }
    }

    pub fn with_default_tol(n: usize) -> Self {
        Self::new(n, DEFAULT_RANK_TOL)
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    fn check_shape(&self, x: &CMatrix) -> Result<()> {
        if x.nrows() != self.n || x.ncols() != self.n {
            return Err(Error::DimMismatch(format!(
                "span over {0}x{0} matrices, got {1}x{2}",
                self.n,
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Component of `x` orthogonal to the span (two Gram-Schmidt sweeps).
    fn orthogonal_part(&self, x: &CMatrix) -> CMatrix {
        let mut r = x.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = frob_inner(b, &r).expect("shape checked");
                r -= b.scale(c);
            }
        }
        r
    }

    /// Orthogonal projection of `x` onto the span.
    pub fn project(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check_shape(x)?;
        Ok(x - self.orthogonal_part(x))
    }

    /// Relative residual of `x` against the span.
    pub fn membership_residual(&self, x: &CMatrix) -> Result<f64> {
        self.check_shape(x)?;
        let r = self.orthogonal_part(x);
        Ok(frob_norm(&r) / (1.0 + frob_norm(x)))
    }

    /// Gram-Schmidt insertion with tolerance: appends the normalized
    /// orthogonal component when its relative residual exceeds `rank_tol`.
    pub fn insert(&mut self, x: &CMatrix) -> Result<SpanInsert> {
        self.check_shape(x)?;
        let defect = antiherm_defect(x);
        if defect > 1e-6 * (1.0 + max_norm(x)) {
            return Err(Error::NotAntiHermitian { defect });
        }
        let r = self.orthogonal_part(x);
        let rn = frob_norm(&r);
        let residual = rn / (1.0 + frob_norm(x));
        if residual > self.rank_tol && self.basis.len() < self.n * self.n {
            self.basis.push(r.unscale(rn));
            Ok(SpanInsert {
                added: true,
                residual,
            })
        } else {
            Ok(SpanInsert {
                added: false,
                residual,
            })
        }
    }
}

/// Exponential of an anti-Hermitian matrix via Hermitian eigendecomposition;
/// the result is unitary to machine precision.
pub fn expm_antihermitian(x: &CMatrix) -> Result<CMatrix> {
    check_square(x)?;
    let defect = antiherm_defect(x);
    if defect > 1e-8 * (1.0 + max_norm(x)) {
        return Err(Error::NotAntiHermitian { defect });
    }
    // X = iH with H Hermitian; exp(X) = Q diag(e^{iλ}) Q†.
    let h = antiherm_project(x).map(|z| z * C64::new(0.0, -1.0));
    let eig = h.symmetric_eigen();
    let phases = DVector::<C64>::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, l)),
    );
    let q = &eig.eigenvectors;
    Ok(q * CMatrix::from_diagonal(&phases) * q.adjoint())
}

/// Defect `‖U†U − I‖_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    max_norm(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Principal logarithm of a unitary matrix via the Cayley transform.
///
/// Errors with [`Error::LogBranch`] when an eigenvalue lies within 1e-6 of −1.
pub fn logm_unitary(u: &CMatrix) -> Result<CMatrix> {
    check_square(u)?;
    let defect = unitarity_defect(u);
    if defect > 1e-8 {
        return Err(Error::NotUnitary { defect });
    }
    let n = u.nrows();
    let id = CMatrix::identity(n, n);
    let ipu = &id + u;
    // σ_min(I + U) = min_k |1 + λ_k| for normal U.
    let svd = ipu.clone().svd(false, false);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin < 1e-6 {
        return Err(Error::LogBranch { dist: smin });
    }
    // A = i(I − U)(I + U)^{-1} is Hermitian with eigenvalues tan(φ/2).
    let inv = ipu.lu().try_inverse().ok_or(Error::Singular)?;
    let a = ((&id - u) * inv).map(|z| z * ci());
    let a = (&a + a.adjoint()).scale(0.5);
    let eig = a.symmetric_eigen();
    let diag = DVector::<C64>::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&t| C64::new(0.0, 2.0 * t.atan())),
    );
    let q = &eig.eigenvectors;
    Ok(antiherm_project(
        &(q * CMatrix::from_diagonal(&diag) * q.adjoint()),
    ))
}

/// Polar factor: the nearest unitary in Frobenius norm.
pub fn unitarize(m: &CMatrix) -> Result<CMatrix> {
    check_square(m)?;
    let svd = m.clone().svd(true, true);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin < 1e-14 * (1.0 + max_norm(m)) {
        return Err(Error::Singular);
    }
    let u = svd.u.ok_or(Error::Singular)?;
    let v_t = svd.v_t.ok_or(Error::Singular)?;
    Ok(u * v_t)
}

/// Elementary matrix E_{rc} (1-based in the math, 0-based here).
pub fn elementary(n: usize, r: usize, c: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(r, c)] = cone();
    m
}
