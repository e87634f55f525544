//! Local connections on a trivialized bundle over parameter space: curvature
//! by the structure equation and covariant derivatives of adjoint-valued
//! fields.

use std::sync::Arc;

use crate::matcore::{
    antiherm_defect, antiherm_project, commutator, max_norm, CMatrix,
};
use crate::{Error, Result};

/// A point in the d-dimensional real parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint(pub Vec<f64>);

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        ParamPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Copy with coordinate `j` shifted by `delta`.
    pub fn shifted(&self, j: usize, delta: f64) -> ParamPoint {
        let mut c = self.0.clone();
        c[j] += delta;
        ParamPoint(c)
    }

    /// Bit-exact cache key.
    pub fn key(&self) -> Vec<u64> {
        self.0.iter().map(|x| x.to_bits()).collect()
    }
}

impl From<Vec<f64>> for ParamPoint {
    fn from(v: Vec<f64>) -> Self {
        ParamPoint(v)
    }
}

pub type CoeffFn = dyn Fn(&ParamPoint, usize) -> Result<CMatrix> + Send + Sync;
/// `(p, j, i) -> ∂_j A_i(p)`.
pub type PartialFn = dyn Fn(&ParamPoint, usize, usize) -> Result<CMatrix> + Send + Sync;
pub type FieldFn = dyn Fn(&ParamPoint) -> Result<CMatrix> + Send + Sync;

/// Default finite-difference step scale for first-order partials.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Finite-difference stencil order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    Second,
    Fourth,
}

/// Evaluator producing the d anti-Hermitian coefficient matrices `A_i(p)`.
#[derive(Clone)]
pub struct ConnectionField {
    d: usize,
    n: usize,
    names: Vec<String>,
    base_step: f64,
    coeff_accuracy: f64,
    coeff: Arc<CoeffFn>,
    partial_hook: Option<Arc<PartialFn>>,
}

impl ConnectionField {
    pub fn new(d: usize, n: usize, names: Vec<String>, coeff: Arc<CoeffFn>) -> Self {
        assert_eq!(names.len(), d, "one name per coordinate");
        ConnectionField {
            d,
            n,
            names,
            base_step: DEFAULT_FD_STEP,
            coeff_accuracy: 1e-15,
            coeff,
            partial_hook: None,
        }
    }

    pub fn with_partial_hook(mut self, hook: Arc<PartialFn>) -> Self {
        self.partial_hook = Some(hook);
        self
    }

    pub fn with_base_step(mut self, h: f64) -> Self {
        self.base_step = h;
        self
    }

    /// Estimated absolute entry error of a coefficient evaluation; used to
    /// budget nested finite-difference steps downstream.
    pub fn with_coeff_accuracy(mut self, eps: f64) -> Self {
        self.coeff_accuracy = eps;
        self
    }

    pub fn base_dim(&self) -> usize {
        self.d
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn base_step(&self) -> f64 {
        self.base_step
    }

    pub fn coeff_accuracy(&self) -> f64 {
        self.coeff_accuracy
    }

    pub fn has_partial_hook(&self) -> bool {
        self.partial_hook.is_some()
    }

    fn check_point(&self, p: &ParamPoint) -> Result<()> {
        if p.dim() != self.d {
            return Err(Error::DimMismatch(format!(
                "point has {} coordinates, connection expects {}",
                p.dim(),
                self.d
            )));
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.d {
            return Err(Error::DimMismatch(format!(
                "coordinate index {i} out of range (d = {})",
                self.d
            )));
        }
        Ok(())
    }

    /// Coefficient matrix `A_i(p)`, validated anti-Hermitian to 1e-9.
    pub fn coeff(&self, p: &ParamPoint, i: usize) -> Result<CMatrix> {
        self.check_point(p)?;
        self.check_index(i)?;
        let a = (self.coeff)(p, i)?;
        if a.nrows() != self.n || a.ncols() != self.n {
            return Err(Error::DimMismatch(format!(
                "coefficient is {}x{}, fiber dimension is {}",
                a.nrows(),
                a.ncols(),
                self.n
            )));
        }
        let defect = antiherm_defect(&a);
        if defect > 1e-9 * (1.0 + max_norm(&a)) {
            return Err(Error::NotAntiHermitian { defect });
        }
        Ok(a)
    }

    /// Partial `∂_j A_i(p)` by the analytic hook when present, otherwise a
    /// 4th-order central difference with step `base_step · max(1, |p_j|)`.
    pub fn partial(&self, p: &ParamPoint, j: usize, i: usize) -> Result<CMatrix> {
        self.check_point(p)?;
        self.check_index(j)?;
        self.check_index(i)?;
        if let Some(hook) = &self.partial_hook {
            return hook(p, j, i);
        }
        let h = self.base_step * f64::max(1.0, p.coords()[j].abs());
        fd_partial(&|q| (self.coeff)(q, i), p, j, h, FdOrder::Fourth)
    }

    /// Curvature by the structure equation
    /// `F_ij = ∂_i A_j − ∂_j A_i + [A_i, A_j]`.
    pub fn curvature(&self, p: &ParamPoint) -> Result<CurvatureTensor> {
        self.check_point(p)?;
        let a: Vec<CMatrix> = (0..self.d)
            .map(|i| self.coeff(p, i))
            .collect::<Result<_>>()?;
        let mut upper = Vec::with_capacity(self.d * (self.d - 1) / 2);
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                let f = self.partial(p, i, j)? - self.partial(p, j, i)?
                    + commutator(&a[i], &a[j])?;
                upper.push(antiherm_project(&f));
            }
        }
        Ok(CurvatureTensor {
            at: p.clone(),
            d: self.d,
            n: self.n,
            upper,
        })
    }

    /// Covariant derivative `D_k T = ∂_k T + [A_k, T]` of an adjoint-valued
    /// field, with the partial taken by finite differences of step `h`.
    pub fn covariant_derivative_opts(
        &self,
        p: &ParamPoint,
        field: &FieldFn,
        k: usize,
        h: f64,
        order: FdOrder,
    ) -> Result<CMatrix> {
        self.check_point(p)?;
        self.check_index(k)?;
        let dt = fd_partial(&|q| field(q), p, k, h * f64::max(1.0, p.coords()[k].abs()), order)?;
        let ak = self.coeff(p, k)?;
        let t = field(p)?;
        Ok(antiherm_project(&(dt + commutator(&ak, &t)?)))
    }

    /// Covariant derivative with the default step and 4th-order stencil.
    pub fn covariant_derivative(
        &self,
        p: &ParamPoint,
        field: &FieldFn,
        k: usize,
    ) -> Result<CMatrix> {
        self.covariant_derivative_opts(p, field, k, self.base_step, FdOrder::Fourth)
    }

    /// Connection with coefficients conjugated by a constant unitary,
    /// `A_i ↦ g† A_i g`.
    pub fn conjugated(&self, g: &CMatrix) -> Result<ConnectionField> {
        if g.nrows() != self.n || g.ncols() != self.n {
            return Err(Error::DimMismatch("gauge matrix shape".into()));
        }
        let g = g.clone();
        let gd = g.adjoint();
        let inner = self.clone();
        let g2 = g.clone();
        let gd2 = gd.clone();
        let mut out = ConnectionField::new(
            self.d,
            self.n,
            self.names.clone(),
            Arc::new(move |p, i| Ok(&gd * inner.coeff(p, i)? * &g)),
        )
        .with_base_step(self.base_step)
        .with_coeff_accuracy(self.coeff_accuracy);
        if self.partial_hook.is_some() {
            let inner = self.clone();
            out = out.with_partial_hook(Arc::new(move |p, j, i| {
                Ok(&gd2 * inner.partial(p, j, i)? * &g2)
            }));
        }
        Ok(out)
    }
}

/// Antisymmetric tensor of anti-Hermitian curvature matrices at a point.
#[derive(Debug, Clone)]
pub struct CurvatureTensor {
    pub at: ParamPoint,
    d: usize,
    n: usize,
    /// Entries F_ij for i < j, row-major over the strict upper triangle.
    upper: Vec<CMatrix>,
}

impl CurvatureTensor {
    pub fn base_dim(&self) -> usize {
        self.d
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    fn upper_index(&self, i: usize, j: usize) -> usize {
        // offset of (i,j), i < j, in the packed strict upper triangle
        i * self.d - i * (i + 1) / 2 + (j - i - 1)
    }

    /// `F_ij`; antisymmetry `F_ij = −F_ji` holds exactly by construction.
    pub fn get(&self, i: usize, j: usize) -> CMatrix {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.upper[self.upper_index(i, j)].clone(),
            Ordering::Greater => -self.upper[self.upper_index(j, i)].clone(),
            Ordering::Equal => CMatrix::zeros(self.n, self.n),
        }
    }

    /// Strict-upper-triangle entries with their indices.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &CMatrix)> {
        let d = self.d;
        (0..d)
            .flat_map(move |i| ((i + 1)..d).map(move |j| (i, j)))
            .zip(self.upper.iter())
            .map(|((i, j), m)| (i, j, m))
    }
}

/// Central finite difference of a matrix-valued function along coordinate `j`.
pub fn fd_partial(
    f: &dyn Fn(&ParamPoint) -> Result<CMatrix>,
    p: &ParamPoint,
    j: usize,
    h: f64,
    order: FdOrder,
) -> Result<CMatrix> {
    match order {
        FdOrder::Second => {
            let fp = f(&p.shifted(j, h))?;
            let fm = f(&p.shifted(j, -h))?;
            Ok((fp - fm).unscale(2.0 * h))
        }
        FdOrder::Fourth => {
            let f1 = f(&p.shifted(j, h))?;
            let f2 = f(&p.shifted(j, 2.0 * h))?;
            let m1 = f(&p.shifted(j, -h))?;
            let m2 = f(&p.shifted(j, -2.0 * h))?;
            Ok((m2 - f2 + (f1 - m1).scale(8.0)).unscale(12.0 * h))
        }
    }
}

/// Wilczek-Zee coefficient `A_i = V†∂_iV` from a frame map, together with the
/// anti-Hermitian projection residual.
pub fn wz_coefficient_raw(
    frame: &FieldFn,
    p: &ParamPoint,
    i: usize,
    h: f64,
) -> Result<(CMatrix, f64)> {
    let v = frame(p)?;
    let n = v.ncols();
    let defect = max_norm(&(v.adjoint() * &v - CMatrix::identity(n, n)));
    if defect > 1e-8 {
        return Err(Error::FrameNotOrthonormal { defect });
    }
    let dv = fd_partial(&|q| frame(q), p, i, h * f64::max(1.0, p.coords()[i].abs()), FdOrder::Fourth)?;
    let raw = v.adjoint() * dv;
    let residual = antiherm_defect(&raw);
    Ok((antiherm_project(&raw), residual))
}

/// Connection induced on a degenerate-subspace frame `V(η)` via `A_i = V†∂_iV`,
/// with anti-Hermitization by projection.
pub fn connection_from_frame(
    frame: Arc<FieldFn>,
    d: usize,
    n: usize,
    names: Vec<String>,
    frame_step: f64,
) -> ConnectionField {
    let f = frame.clone();
    ConnectionField::new(
        d,
        n,
        names,
        Arc::new(move |p, i| Ok(wz_coefficient_raw(f.as_ref(), p, i, frame_step)?.0)),
    )
    .with_base_step(1e-3)
    .with_coeff_accuracy(1e-9)
}
