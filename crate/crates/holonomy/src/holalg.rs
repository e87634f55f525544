//! Holonomy algebra at a base point: the real span of curvature components and
//! their iterated covariant derivatives, closed under brackets, with a
//! structural breakdown (center, derived subalgebra, simple ideals,
//! irreducibility of the fiber action).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::connection::{
    ConnectionField, CurvatureTensor, FdOrder, FieldFn, ParamPoint,
};
use crate::matcore::{commutator, frob_inner, frob_norm, ci, CMatrix, MatrixSpan};
use crate::{Error, Result};

type RMatrix = DMatrix<f64>;

/// Hard limit on the covariant-derivative depth.
pub const MAX_DEPTH: usize = 12;

/// Parameters of the closure computation.
#[derive(Debug, Clone)]
pub struct ClosureConfig {
    /// Maximum covariant-derivative depth to explore (≤ [`MAX_DEPTH`]).
    pub depth_cap: usize,
    /// Relative rank tolerance for counting a candidate as a new direction.
    /// Nested finite differences floor candidate noise near 1e-7 even for
    /// analytic coefficients, so this is far looser than the exact-matrix
    /// span default.
    pub rank_tol: f64,
    /// Stencil order for the nested covariant-derivative differences.
    pub fd_order: FdOrder,
    /// Seed for the randomized parts of the structure analysis.
    pub seed: u64,
}

impl Default for ClosureConfig {
    fn default() -> Self {
        ClosureConfig {
            depth_cap: 6,
            rank_tol: 2e-6,
            fd_order: FdOrder::Fourth,
            seed: 0x686f6c,
        }
    }
}

/// Structural breakdown of a bracket-closed span.
#[derive(Debug, Clone)]
pub struct AlgebraStructure {
    /// Dimension of the center (elements commuting with the whole span).
    pub center_dim: usize,
    /// Orthonormal center basis.
    pub center_basis: Vec<CMatrix>,
    /// Dimension of the derived subalgebra, the span of all brackets.
    pub derived_dim: usize,
    /// Dimensions of the simple ideals of the derived subalgebra, ascending.
    pub ideal_dims: Vec<usize>,
    /// Complex dimension of the commutant of the span inside n×n matrices.
    pub commutant_dim: usize,
    /// Whether the span acts irreducibly on the fiber (commutant is scalar).
    pub irreducible: bool,
    /// Worst relative membership residual of a basis bracket; nonzero values
    /// above the span tolerance mean the input was not bracket-closed.
    pub bracket_residual: f64,
}

impl AlgebraStructure {
    fn trivial(n: usize) -> AlgebraStructure {
        AlgebraStructure {
            center_dim: 0,
            center_basis: Vec::new(),
            derived_dim: 0,
            ideal_dims: Vec::new(),
            commutant_dim: n * n,
            irreducible: false,
            bracket_residual: 0.0,
        }
    }
}

/// Result of [`holonomy_algebra`].
#[derive(Debug, Clone)]
pub struct HolonomyAlgebraReport {
    /// Orthonormal basis of the holonomy algebra at the base point.
    pub span: MatrixSpan,
    /// Deepest derivative level that contributed a new direction.
    pub depth_used: usize,
    /// Span dimension after each processed depth, starting at depth 0.
    pub dim_history: Vec<usize>,
    /// True when the iteration stopped because a depth added nothing (or the
    /// span filled u(n)), rather than by hitting the depth cap.
    pub stabilized: bool,
    /// Number of basis directions contributed by the curvature alone.
    pub curvature_dirs: usize,
    pub notes: Vec<String>,
    pub structure: AlgebraStructure,
}

impl HolonomyAlgebraReport {
    pub fn dim(&self) -> usize {
        self.span.dim()
    }
}

/// Insert brackets of all basis pairs until no pass adds a direction.
/// Returns whether anything was added.
pub fn bracket_close(span: &mut MatrixSpan) -> Result<bool> {
    let mut any = false;
    loop {
        let mut added = false;
        let basis = span.basis().to_vec();
        for i in 0..basis.len() {
            for j in (i + 1)..basis.len() {
                let b = commutator(&basis[i], &basis[j])?;
                if span.insert(&b)?.added {
                    added = true;
                }
            }
        }
        if !added {
            return Ok(any);
        }
        any = true;
    }
}

/// Finite-difference steps for differentiating level-ℓ fields, derived from
/// the estimated value noise at each level. Steps grow with depth: reusing a
/// first-order step for nested differences amplifies roundoff as ε/h^m.
fn step_schedule(eps0: f64, depth: usize) -> Vec<f64> {
    // Truncation heuristic: 5th-derivative scale of the smooth fields.
    const F5: f64 = 100.0;
    let mut steps = Vec::with_capacity(depth);
    let mut eps = eps0;
    for _ in 0..depth {
        // 4th-order central difference: error ≈ 1.5 ε/h + h⁴ F5/30; the
        // minimizer balances the two terms.
        let h = (eps * 45.0 / (4.0 * F5)).powf(0.2).clamp(1e-4, 5e-2);
        steps.push(h);
        eps = 1.5 * eps / h + h.powi(4) * F5 / 30.0;
    }
    steps
}

/// Estimated absolute noise of a curvature evaluation.
fn curvature_accuracy(conn: &ConnectionField) -> f64 {
    let ca = conn.coeff_accuracy().max(1e-15);
    if conn.has_partial_hook() {
        ca.max(1e-14)
    } else {
        let h = conn.base_step();
        1.5 * ca / h + h.powi(4) * 100.0 / 30.0
    }
}

struct Frontier {
    field: Arc<FieldFn>,
    level: usize,
}

/// Compute the holonomy algebra of `conn` at `p0` by spanning curvature
/// components and iterated covariant derivatives, bracket-closing after each
/// depth. Only independently-inserted elements are differentiated further.
pub fn holonomy_algebra(
    conn: &ConnectionField,
    p0: &ParamPoint,
    cfg: &ClosureConfig,
) -> Result<HolonomyAlgebraReport> {
    if cfg.depth_cap > MAX_DEPTH {
        return Err(Error::ParamRange(format!(
            "depth cap {} exceeds the maximum {MAX_DEPTH}",
            cfg.depth_cap
        )));
    }
    let d = conn.base_dim();
    let n = conn.fiber_dim();
    let steps = step_schedule(curvature_accuracy(conn), cfg.depth_cap.max(1));

    // Curvature tensors are shared across every nested evaluation point.
    let cache: Arc<Mutex<HashMap<Vec<u64>, Arc<CurvatureTensor>>>> =
        Arc::new(Mutex::new(HashMap::new()));
    let curv = {
        let conn = conn.clone();
        let cache = cache.clone();
        Arc::new(move |p: &ParamPoint| -> Result<Arc<CurvatureTensor>> {
            let key = p.key();
            if let Some(t) = cache.lock().unwrap().get(&key) {
                return Ok(t.clone());
            }
            let t = Arc::new(conn.curvature(p)?);
            cache.lock().unwrap().insert(key, t.clone());
            Ok(t)
        })
    };

    let mut span = MatrixSpan::new(n, cfg.rank_tol);
    let mut notes = Vec::new();
    let mut frontier: Vec<Frontier> = Vec::new();
    let mut dim_history = Vec::new();
    let mut depth_used = 0usize;

    // Depth 0: the curvature components at the base point.
    for i in 0..d {
        for j in (i + 1)..d {
            let curv = curv.clone();
            let field: Arc<FieldFn> = Arc::new(move |q| Ok(curv(q)?.get(i, j)));
            let value = field(p0)?;
            if span.insert(&value)?.added {
                frontier.push(Frontier { field, level: 0 });
            }
        }
    }
    if span.dim() == 0 {
        notes.push(
            "curvature vanishes at the base point; closure terminated at depth 0".into(),
        );
        return Ok(HolonomyAlgebraReport {
            span,
            depth_used: 0,
            dim_history: vec![0],
            stabilized: true,
            curvature_dirs: 0,
            notes,
            structure: AlgebraStructure::trivial(n),
        });
    }
    let curvature_dirs = span.dim();
    bracket_close(&mut span)?;
    dim_history.push(span.dim());

    let mut stabilized = span.dim() == n * n;
    for depth in 1..=cfg.depth_cap {
        if stabilized {
            break;
        }
        let mut added_any = false;
        let mut next = Vec::new();
        for f in &frontier {
            let h = steps[f.level];
            for k in 0..d {
                let conn = conn.clone();
                let inner = f.field.clone();
                let order = cfg.fd_order;
                let field: Arc<FieldFn> = Arc::new(move |q| {
                    conn.covariant_derivative_opts(q, inner.as_ref(), k, h, order)
                });
                let value = field(p0)?;
                if span.insert(&value)?.added {
                    added_any = true;
                    next.push(Frontier {
                        field,
                        level: depth,
                    });
                }
            }
        }
        if bracket_close(&mut span)? {
            added_any = true;
        }
        dim_history.push(span.dim());
        if added_any {
            depth_used = depth;
        } else {
            stabilized = true;
        }
        if span.dim() == n * n {
            stabilized = true;
        }
        frontier = next;
    }

    if span.dim() == n * n {
        notes.push(format!("span fills the full unitary algebra u({n})"));
    }
    let curvature_count = d * (d - 1) / 2;
    if span.dim() > curvature_dirs {
        notes.push(format!(
            "{} of {} directions come from covariant derivatives and bracket \
             closure; the {} curvature components alone span {}",
            span.dim() - curvature_dirs,
            span.dim(),
            curvature_count,
            curvature_dirs,
        ));
    }
    if !stabilized {
        notes.push(format!(
            "depth cap {} reached before stabilization",
            cfg.depth_cap
        ));
    }

    let structure = analyze_algebra(&span, cfg.seed)?;
    Ok(HolonomyAlgebraReport {
        span,
        depth_used,
        dim_history,
        stabilized,
        curvature_dirs,
        notes,
        structure,
    })
}

/// Real structure constants of an orthonormal basis: `ad[k][(j, l)]` is the
/// coefficient of basis j in `[B_k, B_l]`.
fn adjoint_matrices(basis: &[CMatrix]) -> Result<(Vec<RMatrix>, f64)> {
    let m = basis.len();
    let mut ads = Vec::with_capacity(m);
    let mut worst = 0.0f64;
    for bk in basis {
        let mut ad = RMatrix::zeros(m, m);
        for (l, bl) in basis.iter().enumerate() {
            let br = commutator(bk, bl)?;
            let mut rem = br.clone();
            for (j, bj) in basis.iter().enumerate() {
                let c = frob_inner(bj, &br)?;
                ad[(j, l)] = c;
                rem -= bj.scale(c);
            }
            worst = worst.max(frob_norm(&rem) / (1.0 + frob_norm(&br)));
        }
        ads.push(ad);
    }
    Ok((ads, worst))
}

/// Sizes of the eigenvalue clusters of a symmetric matrix, ascending.
fn eigen_cluster_sizes(t: &RMatrix) -> Vec<usize> {
    let mut evs: Vec<f64> = t.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    evs.sort_by(f64::total_cmp);
    let spread = evs.last().unwrap_or(&0.0).abs().max(evs.first().unwrap_or(&0.0).abs());
    let gap_tol = 1e-4 * (1.0 + spread);
    let mut sizes = Vec::new();
    let mut run = 0usize;
    for (idx, &e) in evs.iter().enumerate() {
        if idx > 0 && e - evs[idx - 1] > gap_tol {
            sizes.push(run);
            run = 0;
        }
        run += 1;
    }
    if run > 0 {
        sizes.push(run);
    }
    sizes.sort_unstable();
    sizes
}

/// Simple-ideal dimensions of a bracket-closed algebra given by its adjoint
/// matrices: eigenspace multiplicities of a random symmetric element of the
/// commutant of the adjoint representation.
fn ideal_dimensions(ads: &[RMatrix], seed: u64) -> Vec<usize> {
    let r = match ads.first() {
        Some(a) => a.nrows(),
        None => return Vec::new(),
    };
    if r == 0 {
        return Vec::new();
    }
    // Commutant equations: (I⊗ad_k − ad_kᵀ⊗I) vec(S) = 0 for every k.
    let id = RMatrix::identity(r, r);
    let mut stacked = RMatrix::zeros(ads.len() * r * r, r * r);
    for (k, ad) in ads.iter().enumerate() {
        let block = id.kronecker(ad) - ad.transpose().kronecker(&id);
        stacked.view_mut((k * r * r, 0), (r * r, r * r)).copy_from(&block);
    }
    let svd = stacked.svd(false, true);
    let smax = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1.0);
    let v_t = svd.v_t.expect("requested");
    let null_rows: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < 1e-7 * smax)
        .map(|(i, _)| i)
        .collect();
    if null_rows.is_empty() {
        return vec![r];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x69646561);
    let mut t = RMatrix::zeros(r, r);
    for &row in &null_rows {
        let g: f64 = rng.gen_range(-1.0..1.0);
        let s = RMatrix::from_fn(r, r, |a, b| v_t[(row, b * r + a)]);
        t += s.scale(g);
    }
    // The ad matrices are antisymmetric, so the commutant is closed under
    // transpose; symmetrizing stays inside it.
    let t = (&t + t.transpose()).scale(0.5);
    eigen_cluster_sizes(&t)
}

/// Complex dimension of the commutant of `basis` inside n×n matrices.
fn commutant_dimension(basis: &[CMatrix], n: usize) -> usize {
    if basis.is_empty() {
        return n * n;
    }
    let n2 = n * n;
    let id = CMatrix::identity(n, n);
    let mut stacked = CMatrix::zeros(basis.len() * n2, n2);
    for (k, b) in basis.iter().enumerate() {
        let block = id.kronecker(b) - b.transpose().kronecker(&id);
        stacked.view_mut((k * n2, 0), (n2, n2)).copy_from(&block);
    }
    let svd = stacked.svd(false, false);
    let smax = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1.0);
    svd.singular_values
        .iter()
        .filter(|s| **s < 1e-7 * smax)
        .count()
}

/// Analyze a bracket-closed span: center, derived subalgebra, simple ideals
/// of the derived subalgebra, and irreducibility of the fiber action.
pub fn analyze_algebra(span: &MatrixSpan, seed: u64) -> Result<AlgebraStructure> {
    let n = span.fiber_dim();
    let basis = span.basis();
    let m = basis.len();
    if m == 0 {
        return Ok(AlgebraStructure::trivial(n));
    }
    let (ads, bracket_residual) = adjoint_matrices(basis)?;

    // Center: kernel of K = Σ ad_kᵀ ad_k in span coordinates.
    let mut k = RMatrix::zeros(m, m);
    for ad in &ads {
        k += ad.transpose() * ad;
    }
    let eig = k.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max).max(1.0);
    let mut center_basis = Vec::new();
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        if l < 1e-8 * lmax {
            let v = eig.eigenvectors.column(idx);
            let mut c = CMatrix::zeros(n, n);
            for (j, b) in basis.iter().enumerate() {
                c += b.scale(v[j]);
            }
            center_basis.push(c);
        }
    }
    let center_dim = center_basis.len();

    // Derived subalgebra: span of all brackets, over exact matrices.
    let mut derived = MatrixSpan::new(n, 1e-7);
    for i in 0..m {
        for j in (i + 1)..m {
            derived.insert(&commutator(&basis[i], &basis[j])?)?;
        }
    }
    let derived_dim = derived.dim();

    let ideal_dims = if derived_dim == 0 {
        Vec::new()
    } else {
        let (derived_ads, _) = adjoint_matrices(derived.basis())?;
        ideal_dimensions(&derived_ads, seed)
    };

    let commutant_dim = commutant_dimension(basis, n);
    Ok(AlgebraStructure {
        center_dim,
        center_basis,
        derived_dim,
        ideal_dims,
        commutant_dim,
        irreducible: commutant_dim == 1,
        bracket_residual,
    })
}

/// Relative membership residual of a matrix against an orthonormal family.
pub fn residual_against(basis: &[CMatrix], x: &CMatrix) -> Result<f64> {
    let mut r = x.clone();
    for _ in 0..2 {
        for b in basis {
            let c = frob_inner(b, &r)?;
            r -= b.scale(c);
        }
    }
    Ok(frob_norm(&r) / (1.0 + frob_norm(x)))
}

/// `i·I_n`, the generator of the overall-phase center.
pub fn i_identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n).map(|z| z * ci())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{elementary, logm_unitary, max_norm, unitarize};
    use crate::models;
    use num_complex::Complex64 as C64;
    use std::sync::Arc as StdArc;

    fn base_point() -> ParamPoint {
        ParamPoint::new(vec![0.8, 0.5, 0.6, 0.4])
    }

    #[test]
    fn step_schedule_grows_with_depth() {
        let s = step_schedule(1e-14, 6);
        for w in s.windows(2) {
            assert!(w[1] >= w[0], "steps must not shrink with depth: {s:?}");
        }
        assert!(s[0] >= 1e-4 && s[5] <= 5e-2);
    }

    #[test]
    fn two_qubit_closure_dimensions() {
        let conn = models::builtin_two_qubit().to_connection();
        let rep = holonomy_algebra(&conn, &base_point(), &ClosureConfig::default()).unwrap();
        assert_eq!(rep.dim_history[0], 4, "curvature + brackets at depth 0");
        assert_eq!(rep.dim(), 7);
        assert!(rep.depth_used <= 2, "depth_used = {}", rep.depth_used);
        assert!(rep.stabilized);
        assert_eq!(rep.structure.center_dim, 1);
        assert_eq!(rep.structure.derived_dim, 6);
        assert_eq!(rep.structure.ideal_dims, vec![3, 3]);
        assert_eq!(rep.structure.commutant_dim, 2);
        assert!(!rep.structure.irreducible);
        // The center is exactly the overall phase i·I₄.
        let res = residual_against(&rep.structure.center_basis, &i_identity(4)).unwrap();
        assert!(res < 1e-8, "center residual {res:.3e}");
    }

    #[test]
    fn two_qubit_closure_without_analytic_partials() {
        // Strip the partial hook: the pure finite-difference route must find
        // the same algebra.
        let m = models::builtin_two_qubit();
        let mm = m.clone();
        let conn = ConnectionField::new(
            4,
            4,
            m.coordinates().to_vec(),
            StdArc::new(move |p, i| mm.coeff(p, i)),
        );
        let rep = holonomy_algebra(&conn, &base_point(), &ClosureConfig::default()).unwrap();
        assert_eq!(rep.dim(), 7);
        assert_eq!(rep.structure.ideal_dims, vec![3, 3]);
    }

    #[test]
    fn two_qubit_sqrt_swap_generator_is_in_span() {
        let conn = models::builtin_two_qubit().to_connection();
        let rep = holonomy_algebra(&conn, &base_point(), &ClosureConfig::default()).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        let mut u = CMatrix::identity(4, 4);
        u[(1, 1)] = C64::new(s, 0.0);
        u[(1, 2)] = C64::new(0.0, -s);
        u[(2, 1)] = C64::new(0.0, -s);
        u[(2, 2)] = C64::new(s, 0.0);
        let gen = logm_unitary(&u).unwrap();
        let res = rep.span.membership_residual(&gen).unwrap();
        assert!(res < 1e-10, "sqrt-SWAP generator residual {res:.3e}");
    }

    #[test]
    fn two_qubit_dim_is_base_point_independent() {
        let conn = models::builtin_two_qubit().to_connection();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let p = ParamPoint::new(vec![
                rng.gen_range(0.3..1.2),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.2..1.2),
                rng.gen_range(-3.0..3.0),
            ]);
            let rep = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
            assert_eq!(rep.dim(), 7, "dim at {:?}", p.coords());
        }
    }

    #[test]
    fn two_qubit_degenerate_point_gives_zero() {
        let conn = models::builtin_two_qubit().to_connection();
        let p = ParamPoint::new(vec![0.0, 0.5, 0.6, 0.4]);
        let rep = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
        assert_eq!(rep.dim(), 0);
        assert!(rep.stabilized);
        assert!(rep.notes.iter().any(|n| n.contains("vanishes")));
    }

    #[test]
    fn closure_is_gauge_invariant() {
        let conn = models::builtin_two_qubit().to_connection();
        let g = unitarize(&CMatrix::from_fn(4, 4, |r, c| {
            C64::new(((r * 7 + c * 3) as f64).sin(), ((r + 2 * c) as f64).cos())
        }))
        .unwrap();
        let conj = conn.conjugated(&g).unwrap();
        let p = base_point();
        let a = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
        let b = holonomy_algebra(&conj, &p, &ClosureConfig::default()).unwrap();
        assert_eq!(a.dim(), b.dim());
        assert_eq!(a.structure.ideal_dims, b.structure.ideal_dims);
        // The two spans are related by conjugation.
        for bas in a.span.basis() {
            let moved = g.adjoint() * bas * &g;
            let res = b.span.membership_residual(&moved).unwrap();
            assert!(res < 1e-6, "conjugated basis element residual {res:.3e}");
        }
    }

    #[test]
    fn abelian_demo_gives_u1() {
        let conn = models::builtin_abelian().to_connection();
        let p = ParamPoint::new(vec![0.4, -0.8]);
        let rep = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
        assert_eq!(rep.dim(), 1);
        assert_eq!(rep.structure.center_dim, 1);
        assert_eq!(rep.structure.derived_dim, 0);
        assert!(rep.structure.ideal_dims.is_empty());
        assert!(rep.stabilized);
    }

    /// Constant connection with A_1 = i σx, A_2 = i σy, plus an abelian
    /// x-dependent trace part: closure is all of u(2).
    fn u2_connection() -> ConnectionField {
        ConnectionField::new(
            2,
            2,
            vec!["x".into(), "y".into()],
            StdArc::new(|p: &ParamPoint, i| {
                let mut m = CMatrix::zeros(2, 2);
                if i == 0 {
                    m[(0, 1)] = ci();
                    m[(1, 0)] = ci();
                } else {
                    m[(0, 1)] = C64::new(1.0, 0.0);
                    m[(1, 0)] = C64::new(-1.0, 0.0);
                    let tr = ci() * p.coords()[0];
                    m[(0, 0)] += tr;
                    m[(1, 1)] += tr;
                }
                Ok(m)
            }),
        )
    }

    #[test]
    fn u2_example_is_irreducible() {
        let conn = u2_connection();
        let p = ParamPoint::new(vec![0.3, 0.9]);
        let rep = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
        assert_eq!(rep.dim(), 4);
        assert_eq!(rep.structure.center_dim, 1);
        assert_eq!(rep.structure.derived_dim, 3);
        assert_eq!(rep.structure.ideal_dims, vec![3]);
        assert_eq!(rep.structure.commutant_dim, 1);
        assert!(rep.structure.irreducible);
        assert!(rep.notes.iter().any(|n| n.contains("u(2)")));
    }

    #[test]
    fn scalar_center_only_model() {
        // n = 2, A_y = i x I: the span is exactly {i·I}.
        let conn = ConnectionField::new(
            2,
            2,
            vec!["x".into(), "y".into()],
            StdArc::new(|p: &ParamPoint, i| {
                let mut m = CMatrix::zeros(2, 2);
                if i == 1 {
                    let z = ci() * p.coords()[0];
                    m[(0, 0)] = z;
                    m[(1, 1)] = z;
                }
                Ok(m)
            }),
        );
        let p = ParamPoint::new(vec![0.6, 0.1]);
        let rep = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
        assert_eq!(rep.dim(), 1);
        assert_eq!(rep.structure.center_dim, 1);
        assert_eq!(rep.structure.derived_dim, 0);
        assert_eq!(rep.structure.commutant_dim, 4);
        assert!(!rep.structure.irreducible);
        let res = residual_against(&rep.structure.center_basis, &i_identity(2)).unwrap();
        assert!(res < 1e-9);
    }

    #[test]
    fn depth_cap_is_validated() {
        let conn = models::builtin_abelian().to_connection();
        let cfg = ClosureConfig {
            depth_cap: 13,
            ..ClosureConfig::default()
        };
        let p = ParamPoint::new(vec![0.1, 0.2]);
        assert!(matches!(
            holonomy_algebra(&conn, &p, &cfg),
            Err(Error::ParamRange(_))
        ));
    }

    #[test]
    fn analyze_full_su2_basis() {
        let mut span = MatrixSpan::with_default_tol(2);
        let sx = (elementary(2, 0, 1) + elementary(2, 1, 0)).map(|z| z * ci());
        let sy = elementary(2, 0, 1) - elementary(2, 1, 0);
        let sz = (elementary(2, 0, 0) - elementary(2, 1, 1)).map(|z| z * ci());
        for m in [&sx, &sy, &sz] {
            span.insert(m).unwrap();
        }
        let s = analyze_algebra(&span, 3).unwrap();
        assert_eq!(s.center_dim, 0);
        assert_eq!(s.derived_dim, 3);
        assert_eq!(s.ideal_dims, vec![3]);
        assert!(s.irreducible);
        assert!(s.bracket_residual < 1e-12);
        assert!(max_norm(&span.basis()[0]) > 0.0);
    }
}
