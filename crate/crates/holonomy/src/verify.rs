//! End-to-end reproduction checks for the optical two-qubit model: printed
//! curvature and covariant-derivative formulas, span dimensions, the
//! square-root-of-SWAP membership, the Bianchi identity, and (optionally)
//! the Fock-space oracle. Produces a machine-readable pass/fail table.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::connection::{ConnectionField, FdOrder, ParamPoint};
use crate::fock::{compare_two_qubit, oracle_connection, FockSpace, OracleModel};
use crate::holalg::{holonomy_algebra, i_identity, residual_against, ClosureConfig};
use crate::matcore::{frob_norm, logm_unitary, max_norm, CMatrix};
use crate::models::{self, Model};
use crate::Result;

/// One check of the verification table.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub label: String,
    pub passed: bool,
    /// Measured residual, deviation, or integer-valued quantity.
    pub measured: f64,
    /// Tolerance, or the expected integer for exact-match rows.
    pub bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let status = if r.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{status}  {:<52} measured {:<12.3e} bound {:.3e}\n",
                r.label, r.measured, r.bound
            ));
            if let Some(d) = &r.detail {
                out.push_str(&format!("      {d}\n"));
            }
        }
        out
    }
}

fn row_tol(label: &str, measured: f64, bound: f64) -> VerifyRow {
    VerifyRow {
        label: label.to_string(),
        passed: measured <= bound,
        measured,
        bound,
        detail: None,
    }
}

fn row_int(label: &str, got: usize, expected: usize) -> VerifyRow {
    VerifyRow {
        label: label.to_string(),
        passed: got == expected,
        measured: got as f64,
        bound: expected as f64,
        detail: None,
    }
}

/// The square-root-of-SWAP variant printed in the source: identity outside
/// the middle block, `(1/√2)[[1, −i], [−i, 1]]` on the inner two basis
/// states.
pub fn sqrt_swap() -> CMatrix {
    let s = 1.0 / 2.0f64.sqrt();
    let mut u = CMatrix::identity(4, 4);
    u[(1, 1)] = C64::new(s, 0.0);
    u[(2, 2)] = C64::new(s, 0.0);
    u[(1, 2)] = C64::new(0.0, -s);
    u[(2, 1)] = C64::new(0.0, -s);
    u
}

fn sample_point(rng: &mut StdRng) -> ParamPoint {
    ParamPoint::new(vec![
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    ])
}

/// A reference-data matrix of expressions evaluated at a point.
fn eval_grid(model: &Model, grid: &[Vec<String>], p: &ParamPoint) -> Result<CMatrix> {
    model.eval_reference(grid, p)
}

/// Check the four non-zero printed curvature components (plus the two zero
/// pairs) against the structure-equation curvature at `npts` random points.
fn curvature_rows(model: &Model, conn: &ConnectionField, rng: &mut StdRng, npts: usize) -> Result<Vec<VerifyRow>> {
    let reference = model.reference().expect("builtin model carries reference data");
    let mut worst = vec![0.0f64; reference.curvature.len()];
    for _ in 0..npts {
        let p = sample_point(rng);
        let f = conn.curvature(&p)?;
        for (k, cref) in reference.curvature.iter().enumerate() {
            let i = model.coord_index(&cref.i)?;
            let j = model.coord_index(&cref.j)?;
            let dev = max_norm(&(f.get(i, j) - eval_grid(model, &cref.matrix, &p)?));
            worst[k] = worst[k].max(dev);
        }
    }
    Ok(reference
        .curvature
        .iter()
        .zip(worst)
        .map(|(cref, w)| row_tol(&format!("F_({},{}) vs printed", cref.i, cref.j), w, 1e-6))
        .collect())
}

/// Check the printed first covariant derivatives of F_{r2,θ2}.
fn first_derivative_rows(
    model: &Model,
    conn: &ConnectionField,
    rng: &mut StdRng,
    npts: usize,
) -> Result<Vec<VerifyRow>> {
    let reference = model.reference().expect("builtin model carries reference data");
    let firsts: Vec<_> = reference
        .covariant_derivatives
        .iter()
        .filter(|d| d.wrt.len() == 1)
        .collect();
    let mut rows = Vec::new();
    for dref in firsts {
        let i = model.coord_index(&dref.i)?;
        let j = model.coord_index(&dref.j)?;
        let k = model.coord_index(&dref.wrt[0])?;
        let c = conn.clone();
        let field = move |q: &ParamPoint| c.curvature(q).map(|f| f.get(i, j));
        let mut worst = 0.0f64;
        for _ in 0..npts {
            let p = sample_point(rng);
            let d = conn.covariant_derivative(&p, &field, k)?;
            worst = worst.max(max_norm(&(d - eval_grid(model, &dref.matrix, &p)?)));
        }
        rows.push(row_tol(
            &format!("D_{} F_({},{}) vs printed", dref.wrt[0], dref.i, dref.j),
            worst,
            1e-6,
        ));
    }
    Ok(rows)
}

/// Compute D_{θ2}D_{θ2}F_{r2,θ2} numerically and compare with both the
/// printed matrix and the structure-equation form; the two differ in the
/// diagonal term (sinh³ r2 vs sinh³ 2r2) and the numeric value decides.
fn second_derivative_rows(model: &Model, conn: &ConnectionField) -> Result<Vec<VerifyRow>> {
    let reference = model.reference().expect("builtin model carries reference data");
    let dref = reference
        .covariant_derivatives
        .iter()
        .find(|d| d.wrt.len() == 2)
        .expect("second covariant derivative reference present");
    let i = model.coord_index(&dref.i)?;
    let j = model.coord_index(&dref.j)?;
    let k1 = model.coord_index(&dref.wrt[0])?;
    let k2 = model.coord_index(&dref.wrt[1])?;
    // A point where sinh³ r2 and sinh³ 2r2 are far apart.
    let p = ParamPoint::new(vec![0.6, 0.4, 0.3, -0.7]);

    let c1 = conn.clone();
    let inner = move |q: &ParamPoint| {
        let c2 = c1.clone();
        let field = move |r: &ParamPoint| c2.curvature(r).map(|f| f.get(i, j));
        c1.covariant_derivative(q, &field, k2)
    };
    // The inner value already carries FD noise, so the outer difference uses
    // a larger step.
    let numeric = conn.covariant_derivative_opts(&p, &inner, k1, 1e-2, FdOrder::Fourth)?;

    let printed = eval_grid(model, &dref.matrix, &p)?;
    let oracle = eval_grid(model, &models::oracle_second_derivative_grid(), &p)?;
    let dev_oracle = max_norm(&(&numeric - oracle));
    let dev_printed = max_norm(&(&numeric - printed));
    let mut rows = Vec::new();
    rows.push(VerifyRow {
        label: format!(
            "D_{}D_{} F_({},{}) vs structure-equation form",
            dref.wrt[0], dref.wrt[1], dref.i, dref.j
        ),
        passed: dev_oracle <= 1e-4,
        measured: dev_oracle,
        bound: 1e-4,
        detail: None,
    });
    rows.push(VerifyRow {
        label: "sinh^3 discrepancy in printed second derivative".into(),
        passed: dev_oracle <= 1e-4 && dev_printed > 1e-2,
        measured: dev_printed,
        bound: 1e-2,
        detail: Some(
            "printed diagonal has sinh(r2)^3; the structure-equation value is \
             sinh(2*r2)^3, which matches the numeric derivative and is used \
             downstream"
                .into(),
        ),
    });
    Ok(rows)
}

/// Bianchi identity `D_iF_jk + D_jF_ki + D_kF_ij = 0` at random points.
fn bianchi_row(conn: &ConnectionField, rng: &mut StdRng, npts: usize) -> Result<VerifyRow> {
    let d = conn.base_dim();
    let mut worst = 0.0f64;
    for _ in 0..npts {
        let p = sample_point(rng);
        let fmax = {
            let f = conn.curvature(&p)?;
            f.entries().map(|(_, _, m)| frob_norm(m)).fold(0.0, f64::max)
        };
        for i in 0..d {
            for j in (i + 1)..d {
                for k in (j + 1)..d {
                    let mut total = DMatrix::zeros(conn.fiber_dim(), conn.fiber_dim());
                    for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
                        let cc = conn.clone();
                        let field = move |q: &ParamPoint| cc.curvature(q).map(|f| f.get(b, c));
                        total += conn.covariant_derivative(&p, &field, a)?;
                    }
                    worst = worst.max(frob_norm(&total) / (1.0 + fmax));
                }
            }
        }
    }
    Ok(row_tol("Bianchi identity residual", worst, 1e-5))
}

/// Full verification table for the built-in two-qubit model.
pub fn verify_two_qubit(seed: u64) -> Result<VerifyReport> {
    let model = models::builtin_two_qubit();
    let conn = model.to_connection();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows = Vec::new();

    rows.extend(curvature_rows(&model, &conn, &mut rng, 20)?);
    rows.extend(first_derivative_rows(&model, &conn, &mut rng, 20)?);
    rows.extend(second_derivative_rows(&model, &conn)?);

    let base = ParamPoint::new(vec![0.8, 0.5, 0.6, 0.4]);
    let depth0 = holonomy_algebra(
        &conn,
        &base,
        &ClosureConfig {
            depth_cap: 0,
            ..ClosureConfig::default()
        },
    )?;
    rows.push(row_int("curvature-only span dimension", depth0.dim(), 4));
    rows.push(row_int("curvature-only center dimension", depth0.structure.center_dim, 1));
    rows.push(row_int(
        "curvature-only derived dimension",
        depth0.structure.derived_dim,
        3,
    ));

    let full = holonomy_algebra(&conn, &base, &ClosureConfig::default())?;
    rows.push(row_int("full holonomy algebra dimension", full.dim(), 7));
    rows.push(VerifyRow {
        label: "closure depth used".into(),
        passed: full.depth_used <= 2 && full.stabilized,
        measured: full.depth_used as f64,
        bound: 2.0,
        detail: None,
    });
    let center_res = if full.structure.center_dim == 1 {
        residual_against(&full.structure.center_basis, &i_identity(4))?
    } else {
        f64::INFINITY
    };
    rows.push(row_tol("center spanned by i*I4, residual", center_res, 1e-8));
    rows.push(VerifyRow {
        label: "derived ideals of dimensions {3,3}".into(),
        passed: full.structure.ideal_dims == vec![3, 3],
        measured: full.structure.ideal_dims.len() as f64,
        bound: 2.0,
        detail: Some(format!("ideal dims {:?}", full.structure.ideal_dims)),
    });
    rows.push(VerifyRow {
        label: "connection not irreducible".into(),
        passed: !full.structure.irreducible && full.structure.commutant_dim == 2,
        measured: full.structure.commutant_dim as f64,
        bound: 2.0,
        detail: Some(
            "the curvature-only span (dim 4, su(2)+u(1)) undercounts the \
             holonomy algebra; the full closure is su(2)+su(2)+u(1), still \
             reducible, yet it reaches entangling transformations"
                .into(),
        ),
    });

    let log_u = logm_unitary(&sqrt_swap())?;
    let membership = full.span.membership_residual(&log_u)?;
    rows.push(row_tol("sqrt-SWAP log membership residual", membership, 1e-10));

    rows.push(bianchi_row(&conn, &mut rng, 20)?);

    Ok(VerifyReport { rows })
}

/// Fock-oracle rows: entrywise comparison with the printed coefficients and
/// the gauge-invariant structure of both oracle connections.
pub fn verify_fock(cutoff: usize) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::new();
    let p = ParamPoint::new(vec![0.5, 0.3, 0.4, 0.7]);
    for r in compare_two_qubit(cutoff, &p)? {
        rows.push(row_tol(
            &format!("fock oracle {} vs printed (cutoff {})", r.coefficient, r.cutoff),
            r.max_abs_dev,
            1e-3,
        ));
    }

    // Rank tolerance above the cutoff-truncation bias, far below genuine
    // new directions.
    let cfg = ClosureConfig {
        rank_tol: 1e-4,
        ..ClosureConfig::default()
    };
    let space = FockSpace::new(2, cutoff)?;
    let conn = oracle_connection(&space, OracleModel::TwoQubit)?;
    let rep = holonomy_algebra(&conn, &p, &cfg)?;
    rows.push(row_int("fock two-qubit algebra dimension", rep.dim(), 7));
    let center_res = if rep.structure.center_dim == 1 {
        residual_against(&rep.structure.center_basis, &i_identity(4))?
    } else {
        f64::INFINITY
    };
    rows.push(row_tol("fock two-qubit center vs i*I4", center_res, 1e-6));
    rows.push(VerifyRow {
        label: "fock two-qubit ideals {3,3}".into(),
        passed: rep.structure.ideal_dims == vec![3, 3],
        measured: rep.structure.ideal_dims.len() as f64,
        bound: 2.0,
        detail: Some(format!("ideal dims {:?}", rep.structure.ideal_dims)),
    });

    let sspace = FockSpace::new(1, cutoff)?;
    let sconn = oracle_connection(&sspace, OracleModel::SingleQubit)?;
    let sp = ParamPoint::new(vec![0.4, 0.3, 0.3, 0.5]);
    let srep = holonomy_algebra(&sconn, &sp, &cfg)?;
    rows.push(row_int("fock single-qubit algebra dimension (u(2))", srep.dim(), 4));

    Ok(rows)
}
