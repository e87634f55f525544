//! Model registry: the built-in analytic two-qubit optical connection with its
//! paper-reference matrices, plus a JSON file format and expression DSL for
//! user-defined connections.

pub mod expr;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{ConnectionField, ParamPoint};
use crate::matcore::{antiherm_defect, max_norm, CMatrix};
use crate::{Error, Result};
use expr::Expr;

/// On-disk model description. All matrices are n×n grids of DSL expression
/// strings over the real coordinate variables.
/// Expression matrices for analytic partials, keyed [j][i] = ∂_j A_i.
pub type PartialGrids = BTreeMap<String, BTreeMap<String, Vec<Vec<String>>>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub fiber_dim: usize,
    pub coordinates: Vec<String>,
    /// coordinate name -> coefficient matrix A_i
    pub coefficients: BTreeMap<String, Vec<Vec<String>>>,
    /// Optional analytic partials: partials[j][i] = ∂_j A_i.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partials: Option<PartialGrids>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceData>,
}

/// Reference matrices for verification, stored as expressions so checks can
/// run at arbitrary points.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReferenceData {
    /// Every curvature component F_ij, i < j, including the zero ones.
    #[serde(default)]
    pub curvature: Vec<CurvatureRef>,
    #[serde(default)]
    pub covariant_derivatives: Vec<DerivativeRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureRef {
    pub i: String,
    pub j: String,
    pub matrix: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeRef {
    /// Outermost-first derivative directions, e.g. ["theta2","theta2"].
    pub wrt: Vec<String>,
    pub i: String,
    pub j: String,
    pub matrix: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A loaded, validated model: compiled expression matrices plus metadata.
#[derive(Clone)]
pub struct Model {
    file: ModelFile,
    coeffs: Vec<Vec<Vec<Expr>>>,
    partials: Option<Vec<Vec<Vec<Vec<Expr>>>>>,
}

/// Compiled n×n expression matrix evaluator.
fn eval_matrix(
    exprs: &[Vec<Expr>],
    names: &[String],
    p: &ParamPoint,
) -> Result<CMatrix> {
    let n = exprs.len();
    let mut m = CMatrix::zeros(n, n);
    for (r, row) in exprs.iter().enumerate() {
        for (c, e) in row.iter().enumerate() {
            m[(r, c)] = e.eval_with(&|name| {
                names
                    .iter()
                    .position(|nm| nm == name)
                    .map(|k| p.coords()[k])
            })?;
        }
    }
    Ok(m)
}

fn compile_matrix(grid: &[Vec<String>], n: usize, what: &str) -> Result<Vec<Vec<Expr>>> {
    if grid.len() != n || grid.iter().any(|row| row.len() != n) {
        return Err(Error::Model(format!(
            "{what}: expected {n}x{n} matrix of expressions"
        )));
    }
    grid.iter()
        .map(|row| row.iter().map(|s| expr::parse_expr(s)).collect())
        .collect()
}

impl Model {
    /// Validate and compile a model description. Checks that all expressions
    /// parse, shapes are n×n, and anti-Hermiticity holds at 100 random points.
    pub fn from_file(file: ModelFile) -> Result<Model> {
        let n = file.fiber_dim;
        let d = file.coordinates.len();
        if n == 0 || d == 0 {
            return Err(Error::Model("fiber_dim and coordinates must be nonempty".into()));
        }
        let mut coeffs = Vec::with_capacity(d);
        for name in &file.coordinates {
            let grid = file.coefficients.get(name).ok_or_else(|| {
                Error::Model(format!("missing coefficient matrix for coordinate `{name}`"))
            })?;
            coeffs.push(compile_matrix(grid, n, &format!("A_{name}"))?);
        }
        let partials = match &file.partials {
            None => None,
            Some(table) => {
                let mut all = Vec::with_capacity(d);
                for j in &file.coordinates {
                    let row = table.get(j).ok_or_else(|| {
                        Error::Model(format!("partials: missing row for `{j}`"))
                    })?;
                    let mut per_i = Vec::with_capacity(d);
                    for i in &file.coordinates {
                        let grid = row.get(i).ok_or_else(|| {
                            Error::Model(format!("partials: missing d_{j} A_{i}"))
                        })?;
                        per_i.push(compile_matrix(grid, n, &format!("d_{j} A_{i}"))?);
                    }
                    all.push(per_i);
                }
                Some(all)
            }
        };
        if let Some(reference) = &file.reference {
            for r in &reference.curvature {
                compile_matrix(&r.matrix, n, &format!("reference F_{{{},{}}}", r.i, r.j))?;
            }
            for r in &reference.covariant_derivatives {
                compile_matrix(&r.matrix, n, "reference covariant derivative")?;
            }
        }
        let model = Model {
            file,
            coeffs,
            partials,
        };
        model.check_anti_hermiticity(100)?;
        Ok(model)
    }

    /// Sample anti-Hermiticity of every coefficient at random points.
    fn check_anti_hermiticity(&self, samples: usize) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f64656c);
        let d = self.file.coordinates.len();
        for _ in 0..samples {
            let p = ParamPoint::new((0..d).map(|_| rng.gen_range(-1.2..1.2)).collect());
            for (i, grid) in self.coeffs.iter().enumerate() {
                let a = eval_matrix(grid, &self.file.coordinates, &p)?;
                let defect = antiherm_defect(&a);
                if defect > 1e-9 * (1.0 + max_norm(&a)) {
                    return Err(Error::Model(format!(
                        "coefficient A_{} is not anti-Hermitian at {:?} (defect {defect:.3e})",
                        self.file.coordinates[i],
                        p.coords(),
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn base_dim(&self) -> usize {
        self.file.coordinates.len()
    }

    pub fn fiber_dim(&self) -> usize {
        self.file.fiber_dim
    }

    pub fn coordinates(&self) -> &[String] {
        &self.file.coordinates
    }

    pub fn reference(&self) -> Option<&ReferenceData> {
        self.file.reference.as_ref()
    }

    pub fn file(&self) -> &ModelFile {
        &self.file
    }

    pub fn coord_index(&self, name: &str) -> Result<usize> {
        self.file
            .coordinates
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Model(format!("unknown coordinate `{name}`")))
    }

    /// Evaluate coefficient A_i at p.
    pub fn coeff(&self, p: &ParamPoint, i: usize) -> Result<CMatrix> {
        eval_matrix(&self.coeffs[i], &self.file.coordinates, p)
    }

    /// Evaluate a reference matrix (a grid of expressions) at p.
    pub fn eval_reference(&self, grid: &[Vec<String>], p: &ParamPoint) -> Result<CMatrix> {
        let compiled = compile_matrix(grid, self.file.fiber_dim, "reference")?;
        eval_matrix(&compiled, &self.file.coordinates, p)
    }

    /// The model as a [`ConnectionField`] evaluator.
    pub fn to_connection(&self) -> ConnectionField {
        let this = self.clone();
        let names = self.file.coordinates.clone();
        let d = self.base_dim();
        let n = self.fiber_dim();
        let mut conn = ConnectionField::new(
            d,
            n,
            names,
            Arc::new(move |p, i| this.coeff(p, i)),
        );
        if let Some(parts) = &self.partials {
            let parts = parts.clone();
            let names = self.file.coordinates.clone();
            conn = conn.with_partial_hook(Arc::new(move |p, j, i| {
                eval_matrix(&parts[j][i], &names, p)
            }));
        }
        conn
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.file)?)
    }

    pub fn from_json(src: &str) -> Result<Model> {
        let file: ModelFile = serde_json::from_str(src)?;
        Model::from_file(file)
    }
}

/// Load and validate a model from a JSON file on disk.
pub fn load_model(path: &std::path::Path) -> Result<Model> {
    let src = std::fs::read_to_string(path)?;
    Model::from_json(&src)
}

fn grid(n: usize, entries: &[(usize, usize, &str)]) -> Vec<Vec<String>> {
    let mut g = vec![vec!["0".to_string(); n]; n];
    for &(r, c, e) in entries {
        g[r][c] = e.to_string();
    }
    g
}

/// The two-qubit Optical Holonomic Computer connection over
/// (r2, theta2, r3, theta3), transcribed coefficient matrices with analytic
/// partials and reference curvature/derivative data attached.
pub fn builtin_two_qubit() -> Model {
    let coords = ["r2", "theta2", "r3", "theta3"];
    let mut coefficients = BTreeMap::new();
    // A_{r2}: constant-magnitude off-diagonal block on |00>,|11>.
    coefficients.insert(
        "r2".to_string(),
        grid(4, &[
            (0, 3, "-exp(-i*theta2)"),
            (3, 0, "exp(i*theta2)"),
        ]),
    );
    // A_{r3}: middle block scaled by 2 cosh^2 r2 - 1 (= cosh 2r2).
    coefficients.insert(
        "r3".to_string(),
        grid(4, &[
            (1, 2, "-exp(-i*theta3)*(2*cosh(r2)^2 - 1)"),
            (2, 1, "exp(i*theta3)*(2*cosh(r2)^2 - 1)"),
        ]),
    );
    coefficients.insert(
        "theta2".to_string(),
        grid(4, &[
            (0, 3, "exp(-i*theta2)*(i/2)*sinh(2*r2)"),
            (3, 0, "exp(i*theta2)*(i/2)*sinh(2*r2)"),
            (0, 0, "(i/2)*(cosh(2*r2) - 1)"),
            (1, 1, "i*(cosh(2*r2) - 1)"),
            (2, 2, "i*(cosh(2*r2) - 1)"),
            (3, 3, "(3*i/2)*(cosh(2*r2) - 1)"),
        ]),
    );
    coefficients.insert(
        "theta3".to_string(),
        grid(4, &[
            (1, 2, "exp(-i*theta3)*(i/2)*cosh(2*r2)*sin(2*r3)"),
            (2, 1, "exp(i*theta3)*(i/2)*cosh(2*r2)*sin(2*r3)"),
            (1, 1, "i*sin(r3)^2"),
            (2, 2, "-i*sin(r3)^2"),
        ]),
    );

    // Hand-differentiated partials d_j A_i; only the nonzero ones spelled out.
    let zero = grid(4, &[]);
    let mut partials: BTreeMap<String, BTreeMap<String, Vec<Vec<String>>>> = BTreeMap::new();
    for j in coords {
        let mut row = BTreeMap::new();
        for i in coords {
            row.insert(i.to_string(), zero.clone());
        }
        partials.insert(j.to_string(), row);
    }
    let set = |p: &mut BTreeMap<String, BTreeMap<String, Vec<Vec<String>>>>,
               j: &str,
               i: &str,
               g: Vec<Vec<String>>| {
        p.get_mut(j).unwrap().insert(i.to_string(), g);
    };
    set(&mut partials, "theta2", "r2", grid(4, &[
        (0, 3, "i*exp(-i*theta2)"),
        (3, 0, "i*exp(i*theta2)"),
    ]));
    set(&mut partials, "r2", "r3", grid(4, &[
        (1, 2, "-exp(-i*theta3)*2*sinh(2*r2)"),
        (2, 1, "exp(i*theta3)*2*sinh(2*r2)"),
    ]));
    set(&mut partials, "theta3", "r3", grid(4, &[
        (1, 2, "i*exp(-i*theta3)*(2*cosh(r2)^2 - 1)"),
        (2, 1, "i*exp(i*theta3)*(2*cosh(r2)^2 - 1)"),
    ]));
    set(&mut partials, "r2", "theta2", grid(4, &[
        (0, 3, "exp(-i*theta2)*i*cosh(2*r2)"),
        (3, 0, "exp(i*theta2)*i*cosh(2*r2)"),
        (0, 0, "i*sinh(2*r2)"),
        (1, 1, "2*i*sinh(2*r2)"),
        (2, 2, "2*i*sinh(2*r2)"),
        (3, 3, "3*i*sinh(2*r2)"),
    ]));
    set(&mut partials, "theta2", "theta2", grid(4, &[
        (0, 3, "exp(-i*theta2)*(1/2)*sinh(2*r2)"),
        (3, 0, "-exp(i*theta2)*(1/2)*sinh(2*r2)"),
    ]));
    set(&mut partials, "r2", "theta3", grid(4, &[
        (1, 2, "exp(-i*theta3)*i*sinh(2*r2)*sin(2*r3)"),
        (2, 1, "exp(i*theta3)*i*sinh(2*r2)*sin(2*r3)"),
    ]));
    set(&mut partials, "r3", "theta3", grid(4, &[
        (1, 2, "exp(-i*theta3)*i*cosh(2*r2)*cos(2*r3)"),
        (2, 1, "exp(i*theta3)*i*cosh(2*r2)*cos(2*r3)"),
        (1, 1, "i*sin(2*r3)"),
        (2, 2, "-i*sin(2*r3)"),
    ]));
    set(&mut partials, "theta3", "theta3", grid(4, &[
        (1, 2, "exp(-i*theta3)*(1/2)*cosh(2*r2)*sin(2*r3)"),
        (2, 1, "-exp(i*theta3)*(1/2)*cosh(2*r2)*sin(2*r3)"),
    ]));

    // Reference curvature: the four printed nonzero forms plus the two zero
    // pairs.
    let reference = ReferenceData {
        curvature: vec![
            CurvatureRef {
                i: "r2".into(),
                j: "r3".into(),
                matrix: grid(4, &[
                    (1, 2, "-exp(-i*theta3)*2*sinh(2*r2)"),
                    (2, 1, "exp(i*theta3)*2*sinh(2*r2)"),
                ]),
            },
            CurvatureRef {
                i: "r2".into(),
                j: "theta2".into(),
                matrix: grid(4, &[
                    (1, 1, "2*i*sinh(2*r2)"),
                    (2, 2, "2*i*sinh(2*r2)"),
                    (3, 3, "4*i*sinh(2*r2)"),
                ]),
            },
            CurvatureRef {
                i: "r2".into(),
                j: "theta3".into(),
                matrix: grid(4, &[
                    (1, 2, "exp(-i*theta3)*i*sin(2*r3)*sinh(2*r2)"),
                    (2, 1, "exp(i*theta3)*i*sin(2*r3)*sinh(2*r2)"),
                ]),
            },
            CurvatureRef {
                i: "r3".into(),
                j: "theta3".into(),
                matrix: grid(4, &[
                    (1, 1, "-i*sin(2*r3)*sinh(2*r2)^2"),
                    (2, 2, "i*sin(2*r3)*sinh(2*r2)^2"),
                ]),
            },
            CurvatureRef {
                i: "r3".into(),
                j: "theta2".into(),
                matrix: grid(4, &[]),
            },
            CurvatureRef {
                i: "theta2".into(),
                j: "theta3".into(),
                matrix: grid(4, &[]),
            },
        ],
        covariant_derivatives: vec![
            DerivativeRef {
                wrt: vec!["theta2".into()],
                i: "r2".into(),
                j: "theta2".into(),
                matrix: grid(4, &[
                    (0, 3, "-exp(-i*theta2)*2*sinh(2*r2)^2"),
                    (3, 0, "exp(i*theta2)*2*sinh(2*r2)^2"),
                ]),
                note: None,
            },
            DerivativeRef {
                wrt: vec!["r2".into()],
                i: "r2".into(),
                j: "theta2".into(),
                matrix: grid(4, &[
                    (0, 3, "-4*i*sinh(2*r2)*exp(-i*theta2)"),
                    (3, 0, "-4*i*sinh(2*r2)*exp(i*theta2)"),
                    (1, 1, "4*i*cosh(2*r2)"),
                    (2, 2, "4*i*cosh(2*r2)"),
                    (3, 3, "8*i*cosh(2*r2)"),
                ]),
                note: None,
            },
            DerivativeRef {
                wrt: vec!["theta2".into(), "theta2".into()],
                i: "r2".into(),
                j: "theta2".into(),
                matrix: grid(4, &[
                    (0, 0, "2*i*sinh(r2)^3"),
                    (3, 3, "-2*i*sinh(r2)^3"),
                    (0, 3, "exp(-i*theta2)*2*i*sinh(2*r2)^2*cosh(2*r2)"),
                    (3, 0, "exp(i*theta2)*2*i*sinh(2*r2)^2*cosh(2*r2)"),
                ]),
                note: Some(
                    "as printed; the structure-equation value carries sinh(2*r2)^3 \
                     on the diagonal instead of sinh(r2)^3"
                        .into(),
                ),
            },
        ],
    };

    let file = ModelFile {
        name: "two-qubit-optical".into(),
        fiber_dim: 4,
        coordinates: coords.iter().map(|s| s.to_string()).collect(),
        coefficients,
        partials: Some(partials),
        reference: Some(reference),
    };
    Model::from_file(file).expect("builtin two-qubit model must validate")
}

/// Structure-equation form of the printed second covariant derivative
/// (sinh^3(2 r2) on the diagonal); used downstream instead of the printed one.
pub fn oracle_second_derivative_grid() -> Vec<Vec<String>> {
    grid(4, &[
        (0, 0, "2*i*sinh(2*r2)^3"),
        (3, 3, "-2*i*sinh(2*r2)^3"),
        (0, 3, "exp(-i*theta2)*2*i*sinh(2*r2)^2*cosh(2*r2)"),
        (3, 0, "exp(i*theta2)*2*i*sinh(2*r2)^2*cosh(2*r2)"),
    ])
}

/// Abelian demo model: n = 1, A_x = 0, A_y = i·x, holonomy algebra u(1).
pub fn builtin_abelian() -> Model {
    let mut coefficients = BTreeMap::new();
    coefficients.insert("x".to_string(), vec![vec!["0".to_string()]]);
    coefficients.insert("y".to_string(), vec![vec!["i*x".to_string()]]);
    let file = ModelFile {
        name: "abelian-demo".into(),
        fiber_dim: 1,
        coordinates: vec!["x".into(), "y".into()],
        coefficients,
        partials: None,
        reference: None,
    };
    Model::from_file(file).expect("builtin abelian model must validate")
}

/// Look up a built-in analytic model by name.
pub fn builtin(name: &str) -> Option<Model> {
    match name {
        "two-qubit-optical" => Some(builtin_two_qubit()),
        "abelian-demo" => Some(builtin_abelian()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::frob_norm;
    use approx::assert_abs_diff_eq;

    #[test]
    fn builtin_two_qubit_loads() {
        let m = builtin_two_qubit();
        assert_eq!(m.base_dim(), 4);
        assert_eq!(m.fiber_dim(), 4);
    }

    #[test]
    fn a_r3_magnitude_at_r2_zero() {
        let m = builtin_two_qubit();
        let p = ParamPoint::new(vec![0.0, 0.3, 0.7, 0.9]);
        let a = m.coeff(&p, m.coord_index("r3").unwrap()).unwrap();
        // 2 cosh^2 0 - 1 = 1.
        assert_abs_diff_eq!(a[(1, 2)].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn a_theta2_vanishes_at_r2_zero() {
        let m = builtin_two_qubit();
        let p = ParamPoint::new(vec![0.0, 0.3, 0.7, 0.9]);
        let a = m.coeff(&p, m.coord_index("theta2").unwrap()).unwrap();
        assert!(max_norm(&a) < 1e-12);
    }

    #[test]
    fn a_r2_theta3_independent() {
        let m = builtin_two_qubit();
        let i = m.coord_index("r2").unwrap();
        let p1 = ParamPoint::new(vec![0.5, 0.3, 0.7, 0.9]);
        let p2 = ParamPoint::new(vec![0.5, 0.3, 0.7, -2.1]);
        let a1 = m.coeff(&p1, i).unwrap();
        let a2 = m.coeff(&p2, i).unwrap();
        assert!(frob_norm(&(a1 - a2)) < 1e-14);
    }

    #[test]
    fn partial_hook_matches_finite_differences() {
        let m = builtin_two_qubit();
        let with_hook = m.to_connection();
        // Same coefficients, hook stripped: pure FD route.
        let mm = m.clone();
        let fd_only = ConnectionField::new(
            4,
            4,
            m.coordinates().to_vec(),
            Arc::new(move |p, i| mm.coeff(p, i)),
        );
        let p = ParamPoint::new(vec![0.6, 0.4, 0.8, 1.1]);
        for j in 0..4 {
            for i in 0..4 {
                let a = with_hook.partial(&p, j, i).unwrap();
                let b = fd_only.partial(&p, j, i).unwrap();
                assert!(
                    frob_norm(&(a.clone() - &b)) < 1e-8,
                    "partial d_{j} A_{i} hook vs FD mismatch"
                );
            }
        }
    }

    #[test]
    fn abelian_demo_loads_and_round_trips() {
        let m = builtin_abelian();
        let json = m.to_json().unwrap();
        let m2 = Model::from_json(&json).unwrap();
        let p = ParamPoint::new(vec![0.37, -0.91]);
        for i in 0..2 {
            let a = m.coeff(&p, i).unwrap();
            let b = m2.coeff(&p, i).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn builtin_round_trip_is_bit_identical() {
        let m = builtin_two_qubit();
        let json = m.to_json().unwrap();
        let m2 = Model::from_json(&json).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = ParamPoint::new((0..4).map(|_| rng.gen_range(-1.2..1.2)).collect());
            for i in 0..4 {
                let a = m.coeff(&p, i).unwrap();
                let b = m2.coeff(&p, i).unwrap();
                assert_eq!(a, b, "coefficients must round-trip bit-exactly");
            }
        }
    }

    #[test]
    fn load_error_carries_offset() {
        let mut coefficients = BTreeMap::new();
        coefficients.insert("x".to_string(), vec![vec!["r2 +".to_string()]]);
        let file = ModelFile {
            name: "broken".into(),
            fiber_dim: 1,
            coordinates: vec!["x".into()],
            coefficients,
            partials: None,
            reference: None,
        };
        match Model::from_file(file) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            Err(other) => panic!("expected parse error, got {other:?}"),
            Ok(_) => panic!("expected parse error, got a model"),
        }
    }

    #[test]
    fn non_anti_hermitian_model_rejected() {
        let mut coefficients = BTreeMap::new();
        coefficients.insert("x".to_string(), vec![vec!["x".to_string()]]);
        let file = ModelFile {
            name: "bad".into(),
            fiber_dim: 1,
            coordinates: vec!["x".into()],
            coefficients,
            partials: None,
            reference: None,
        };
        assert!(matches!(Model::from_file(file), Err(Error::Model(_))));
    }
}
