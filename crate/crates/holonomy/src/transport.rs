//! Path-ordered transport of the connection along parameter-space loops,
//! integrated with a 4th-order Magnus scheme.
//!
//! Conventions, frozen by the regression tests: transport solves
//! `dΓ/dt = Γ A_i(γ) γ̇^i`, later times multiply on the right, so
//! `Γ(compose(a, b)) = Γ(a)·Γ(b)` and for a small coordinate rectangle
//! traversed i-then-j, `log Γ ≈ +ε² F_ij`.

use serde::{Deserialize, Serialize};

use crate::connection::{ConnectionField, ParamPoint};
use crate::matcore::{
    commutator, expm_antihermitian, max_norm, unitarity_defect, unitarize, CMatrix,
};
use crate::{Error, Result};

const JOINT_TOL: f64 = 1e-9;

/// One smooth stretch of a loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Segment {
    /// Straight line between two parameter points.
    Line { from: Vec<f64>, to: Vec<f64> },
    /// Sampled curve; each row is `[t, coordinates...]` with `t` ascending.
    /// Interpolated piecewise-linearly.
    Samples { points: Vec<Vec<f64>> },
}

impl Segment {
    pub fn start(&self) -> Result<&[f64]> {
        match self {
            Segment::Line { from, .. } => Ok(from),
            Segment::Samples { points } => points
                .first()
                .map(|row| &row[1..])
                .ok_or_else(|| Error::Loop("samples segment is empty".into())),
        }
    }

    pub fn end(&self) -> Result<&[f64]> {
        match self {
            Segment::Line { to, .. } => Ok(to),
            Segment::Samples { points } => points
                .last()
                .map(|row| &row[1..])
                .ok_or_else(|| Error::Loop("samples segment is empty".into())),
        }
    }

    pub fn reversed(&self) -> Segment {
        match self {
            Segment::Line { from, to } => Segment::Line {
                from: to.clone(),
                to: from.clone(),
            },
            Segment::Samples { points } => {
                let t0 = points.first().map(|r| r[0]).unwrap_or(0.0);
                let t1 = points.last().map(|r| r[0]).unwrap_or(0.0);
                let mut rev: Vec<Vec<f64>> = points
                    .iter()
                    .rev()
                    .map(|row| {
                        let mut r = row.clone();
                        r[0] = t0 + t1 - row[0];
                        r
                    })
                    .collect();
                // Pin the exact endpoint parameters against roundoff.
                if let Some(first) = rev.first_mut() {
                    first[0] = t0;
                }
                if let Some(last) = rev.last_mut() {
                    last[0] = t1;
                }
                Segment::Samples { points: rev }
            }
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        match self {
            Segment::Line { from, to } => {
                if from.len() != d || to.len() != d {
                    return Err(Error::Loop(format!(
                        "line endpoints must have {d} coordinates"
                    )));
                }
            }
            Segment::Samples { points } => {
                if points.len() < 2 {
                    return Err(Error::Loop("samples segment needs at least 2 rows".into()));
                }
                for row in points {
                    if row.len() != d + 1 {
                        return Err(Error::Loop(format!(
                            "sample rows must be [t, {d} coordinates]"
                        )));
                    }
                }
                for w in points.windows(2) {
                    if w[1][0] <= w[0][0] {
                        return Err(Error::Loop("sample parameters must be ascending".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-smooth path in parameter space; `closed` asserts the endpoints
/// coincide.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Loop {
    pub closed: bool,
    pub segments: Vec<Segment>,
}

impl Loop {
    /// Validate against the base-space dimension: shapes, joint continuity,
    /// and the closure flag.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Loop("loop has no segments".into()));
        }
        for s in &self.segments {
            s.check(d)?;
        }
        for w in self.segments.windows(2) {
            let gap = point_gap(w[0].end()?, w[1].start()?);
            if gap > JOINT_TOL {
                return Err(Error::Loop(format!(
                    "consecutive segments do not join (gap {gap:.3e})"
                )));
            }
        }
        if self.closed {
            let gap = point_gap(
                self.segments.last().unwrap().end()?,
                self.segments.first().unwrap().start()?,
            );
            if gap > JOINT_TOL {
                return Err(Error::Loop(format!(
                    "loop marked closed but endpoints differ by {gap:.3e}"
                )));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Result<ParamPoint> {
        Ok(ParamPoint::new(self.segments[0].start()?.to_vec()))
    }

    /// Concatenation; the other path must start where this one ends.
    pub fn compose(&self, other: &Loop) -> Result<Loop> {
        let gap = point_gap(
            self.segments.last().ok_or_else(|| Error::Loop("empty path".into()))?.end()?,
            other.segments.first().ok_or_else(|| Error::Loop("empty path".into()))?.start()?,
        );
        if gap > JOINT_TOL {
            return Err(Error::Loop(format!(
                "paths do not join for composition (gap {gap:.3e})"
            )));
        }
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        let closed = point_gap(
            segments.last().unwrap().end()?,
            segments.first().unwrap().start()?,
        ) <= JOINT_TOL;
        Ok(Loop { closed, segments })
    }

    /// The same path traversed backwards.
    pub fn reverse(&self) -> Loop {
        Loop {
            closed: self.closed,
            segments: self.segments.iter().rev().map(Segment::reversed).collect(),
        }
    }

    pub fn from_json(src: &str) -> Result<Loop> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn point_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Axis-aligned coordinate rectangle of side `eps` in directions `(i, j)`,
/// based at `p`, traversed i-then-j.
pub fn rect_loop(p: &ParamPoint, i: usize, j: usize, eps: f64) -> Loop {
    let p0 = p.coords().to_vec();
    let p1 = p.shifted(i, eps).coords().to_vec();
    let p2 = p.shifted(i, eps).shifted(j, eps).coords().to_vec();
    let p3 = p.shifted(j, eps).coords().to_vec();
    Loop {
        closed: true,
        segments: vec![
            Segment::Line { from: p0.clone(), to: p1.clone() },
            Segment::Line { from: p1, to: p2.clone() },
            Segment::Line { from: p2, to: p3.clone() },
            Segment::Line { from: p3, to: p0 },
        ],
    }
}

/// Result of a transport integration.
#[derive(Debug, Clone)]
pub struct Transport {
    /// Path-ordered holonomy, unitarized at the end.
    pub holonomy: CMatrix,
    /// Worst unitarity defect of the accumulated product before the final
    /// polar correction.
    pub drift: f64,
    /// Magnus steps actually taken.
    pub steps: usize,
}

/// Smooth linear pieces a loop decomposes into.
fn pieces(lp: &Loop) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut out = Vec::new();
    for s in &lp.segments {
        match s {
            Segment::Line { from, to } => out.push((from.clone(), to.clone())),
            Segment::Samples { points } => {
                for w in points.windows(2) {
                    out.push((w[0][1..].to_vec(), w[1][1..].to_vec()));
                }
            }
        }
    }
    Ok(out)
}

fn piece_len(p: &(Vec<f64>, Vec<f64>)) -> f64 {
    p.0.iter()
        .zip(&p.1)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
}

/// Integrate the transport of `conn` around `lp` with approximately `steps`
/// Magnus steps (at least 8, at least one per smooth piece; step boundaries
/// are aligned with the kinks of the path).
pub fn transport(conn: &ConnectionField, lp: &Loop, steps: usize) -> Result<Transport> {
    let d = conn.base_dim();
    lp.validate(d)?;
    let steps = steps.max(8);
    let pieces = pieces(lp)?;
    let total: f64 = pieces.iter().map(piece_len).sum();
    let n = conn.fiber_dim();
    let mut gamma = CMatrix::identity(n, n);
    let mut drift = 0.0f64;
    let mut taken = 0usize;
    // Gauss nodes for the 4th-order Magnus step.
    let c_lo = 0.5 - 3.0f64.sqrt() / 6.0;
    let c_hi = 0.5 + 3.0f64.sqrt() / 6.0;
    for piece in &pieces {
        let len = piece_len(piece);
        if len == 0.0 {
            continue;
        }
        let m = if total > 0.0 {
            ((steps as f64) * len / total).ceil() as usize
        } else {
            1
        }
        .max(1);
        let (from, to) = piece;
        let v: Vec<f64> = from.iter().zip(to).map(|(a, b)| b - a).collect();
        let at = |t: f64| {
            ParamPoint::new(
                from.iter()
                    .zip(to)
                    .map(|(a, b)| a + t * (b - a))
                    .collect(),
            )
        };
        // B(t) = Σ_i A_i(γ(t)) v_i on this piece.
        let b_of = |t: f64| -> Result<CMatrix> {
            let p = at(t);
            let mut b = CMatrix::zeros(n, n);
            for (i, &vi) in v.iter().enumerate() {
                if vi != 0.0 {
                    b += conn.coeff(&p, i)?.scale(vi);
                }
            }
            Ok(b)
        };
        let h = 1.0 / m as f64;
        for k in 0..m {
            let t0 = k as f64 * h;
            let b1 = b_of(t0 + c_lo * h)?;
            let b2 = b_of(t0 + c_hi * h)?;
            // Right-multiplying form of the 4th-order Magnus step: the
            // commutator carries the opposite sign to the dΓ/dt = BΓ case.
            let omega = (&b1 + &b2).scale(h / 2.0)
                + commutator(&b1, &b2)?.scale(h * h * 3.0f64.sqrt() / 12.0);
            gamma *= expm_antihermitian(&omega)?;
            taken += 1;
        }
        drift = drift.max(unitarity_defect(&gamma));
    }
    Ok(Transport {
        holonomy: unitarize(&gamma)?,
        drift,
        steps: taken,
    })
}

/// Transport with Richardson-style step doubling until successive holonomies
/// agree to `tol` (or 2^14 steps).
pub fn transport_refined(conn: &ConnectionField, lp: &Loop, tol: f64) -> Result<Transport> {
    let mut steps = 64usize;
    let mut prev = transport(conn, lp, steps)?;
    while steps < (1 << 14) {
        steps *= 2;
        let cur = transport(conn, lp, steps)?;
        let delta = max_norm(&(&cur.holonomy - &prev.holonomy));
        prev = cur;
        if delta <= tol {
            break;
        }
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{ci, frob_norm, logm_unitary};
    use crate::models;
    use std::sync::Arc;

    fn abelian() -> ConnectionField {
        models::builtin_abelian().to_connection()
    }

    fn two_qubit() -> ConnectionField {
        models::builtin_two_qubit().to_connection()
    }

    fn base_point() -> ParamPoint {
        ParamPoint::new(vec![0.8, 0.5, 0.6, 0.4])
    }

    #[test]
    fn degenerate_out_and_back_is_identity() {
        let conn = two_qubit();
        let p0 = base_point().coords().to_vec();
        let p1 = base_point().shifted(0, 0.4).coords().to_vec();
        let lp = Loop {
            closed: true,
            segments: vec![
                Segment::Line { from: p0.clone(), to: p1.clone() },
                Segment::Line { from: p1, to: p0 },
            ],
        };
        let t = transport(&conn, &lp, 128).unwrap();
        let n = 4;
        assert!(
            max_norm(&(&t.holonomy - CMatrix::identity(n, n))) < 1e-9,
            "retraced path must transport trivially"
        );
    }

    #[test]
    fn reverse_gives_inverse() {
        let conn = two_qubit();
        let lp = rect_loop(&base_point(), 0, 1, 0.5);
        let fwd = transport(&conn, &lp, 256).unwrap();
        let bwd = transport(&conn, &lp.reverse(), 256).unwrap();
        let prod = &bwd.holonomy * &fwd.holonomy;
        assert!(
            max_norm(&(prod - CMatrix::identity(4, 4))) < 1e-8,
            "reverse transport must invert"
        );
    }

    #[test]
    fn composition_homomorphism() {
        let conn = two_qubit();
        // Two loops sharing a base point: Γ(a then b) = Γ(b)·Γ(a).
        let a = rect_loop(&base_point(), 0, 1, 0.4);
        let b = rect_loop(&base_point(), 2, 3, 0.4);
        let ab = a.compose(&b).unwrap();
        let ga = transport(&conn, &a, 512).unwrap().holonomy;
        let gb = transport(&conn, &b, 512).unwrap().holonomy;
        let gab = transport(&conn, &ab, 1024).unwrap().holonomy;
        assert!(
            max_norm(&(&ga * &gb - gab)) < 1e-8,
            "composition must be a homomorphism"
        );
    }

    #[test]
    fn abelian_stokes() {
        // A_y = i·x gives constant curvature F_xy = i; for the rectangle of
        // side eps, log Γ = +i eps² under the frozen sign convention.
        let conn = abelian();
        let eps = 0.7;
        let lp = rect_loop(&ParamPoint::new(vec![0.2, -0.4]), 0, 1, eps);
        let t = transport_refined(&conn, &lp, 1e-10).unwrap();
        let lg = logm_unitary(&t.holonomy).unwrap();
        let expect = ci() * eps * eps;
        assert!(
            (lg[(0, 0)] - expect).norm() < 1e-6,
            "got {}, expected {}",
            lg[(0, 0)],
            expect
        );
    }

    #[test]
    fn small_loop_curvature_law() {
        let conn = two_qubit();
        let p = base_point();
        let f = conn.curvature(&p).unwrap().get(0, 1);
        let mut errs = Vec::new();
        let epses = [0.1, 0.05, 0.025];
        for &eps in &epses {
            let lp = rect_loop(&p, 0, 1, eps);
            let t = transport(&conn, &lp, 512).unwrap();
            let lg = logm_unitary(&t.holonomy).unwrap();
            errs.push(frob_norm(&(lg - f.scale(eps * eps))));
        }
        let slope = (errs[0] / errs[2]).ln() / (epses[0] / epses[2]).ln();
        assert!(
            slope >= 2.7,
            "error must shrink at third order: errs {errs:?}, slope {slope:.2}"
        );
        // Freeze the sign convention: +eps² F, not −eps² F.
        let eps = 0.05;
        let lp = rect_loop(&p, 0, 1, eps);
        let lg = logm_unitary(&transport(&conn, &lp, 512).unwrap().holonomy).unwrap();
        let plus = frob_norm(&(&lg - f.scale(eps * eps)));
        let minus = frob_norm(&(&lg + f.scale(eps * eps)));
        assert!(plus < minus, "sign convention regressed: s must be +1");
    }

    #[test]
    fn drift_stays_small() {
        let conn = two_qubit();
        let lp = rect_loop(&base_point(), 0, 1, 0.8);
        let t = transport(&conn, &lp, 512).unwrap();
        assert!(t.drift <= 1e-8, "drift {:.3e}", t.drift);
        assert!(t.steps >= 512);
    }

    #[test]
    fn refinement_converges() {
        let conn = two_qubit();
        let lp = rect_loop(&base_point(), 0, 1, 0.6);
        let coarse = transport(&conn, &lp, 8).unwrap();
        let fine = transport_refined(&conn, &lp, 1e-10).unwrap();
        // The refined answer differs from the coarse one but is stable.
        let finer = transport(&conn, &lp, fine.steps * 2).unwrap();
        assert!(max_norm(&(&fine.holonomy - &finer.holonomy)) < 1e-9);
        assert!(max_norm(&(&fine.holonomy - &coarse.holonomy)) > 0.0);
    }

    #[test]
    fn samples_segment_matches_line() {
        let conn = two_qubit();
        let p0 = base_point().coords().to_vec();
        let p1 = base_point().shifted(0, 0.5).shifted(1, 0.3).coords().to_vec();
        let line = Segment::Line { from: p0.clone(), to: p1.clone() };
        // The same straight path sampled at uneven parameters.
        let mids: Vec<Vec<f64>> = [0.0, 0.31, 0.5, 0.77, 1.0]
            .iter()
            .map(|&t| {
                let mut row = vec![t];
                row.extend(p0.iter().zip(&p1).map(|(a, b)| a + t * (b - a)));
                row
            })
            .collect();
        let back = Segment::Line { from: p1.clone(), to: p0.clone() };
        let l1 = Loop { closed: true, segments: vec![line, back.clone()] };
        let l2 = Loop {
            closed: true,
            segments: vec![Segment::Samples { points: mids }, back],
        };
        let g1 = transport(&conn, &l1, 256).unwrap().holonomy;
        let g2 = transport(&conn, &l2, 256).unwrap().holonomy;
        assert!(max_norm(&(g1 - g2)) < 1e-8);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let lp = rect_loop(&ParamPoint::new(vec![0.1, 0.2]), 0, 1, 0.3);
        let json = lp.to_json().unwrap();
        let lp2 = Loop::from_json(&json).unwrap();
        lp2.validate(2).unwrap();
        assert_eq!(lp2.segments.len(), 4);

        let broken = r#"{"closed": true, "segments": [
            {"type": "line", "from": [0.0, 0.0], "to": [1.0, 0.0]},
            {"type": "line", "from": [1.0, 0.5], "to": [0.0, 0.0]}
        ]}"#;
        let lp3 = Loop::from_json(broken).unwrap();
        assert!(matches!(lp3.validate(2), Err(Error::Loop(_))));

        let open = r#"{"closed": true, "segments": [
            {"type": "line", "from": [0.0, 0.0], "to": [1.0, 0.0]}
        ]}"#;
        assert!(matches!(
            Loop::from_json(open).unwrap().validate(2),
            Err(Error::Loop(_))
        ));
    }

    #[test]
    fn reversed_samples_preserve_parameters() {
        let seg = Segment::Samples {
            points: vec![
                vec![0.0, 1.0, 2.0],
                vec![0.4, 1.5, 2.5],
                vec![1.0, 2.0, 3.0],
            ],
        };
        let rev = seg.reversed();
        match &rev {
            Segment::Samples { points } => {
                assert_eq!(points[0][0], 0.0);
                assert!((points[1][0] - 0.6).abs() < 1e-12);
                assert_eq!(points[2][0], 1.0);
                assert_eq!(points[0][1..], [2.0, 3.0]);
                assert_eq!(points[2][1..], [1.0, 2.0]);
            }
            _ => panic!("reversal must stay a samples segment"),
        }
        rev.check(2).unwrap();
    }

    #[test]
    fn loop_holonomy_generator_lies_in_holonomy_algebra() {
        use crate::holalg::{holonomy_algebra, ClosureConfig};
        let conn = two_qubit();
        let p = base_point();
        let rep = holonomy_algebra(&conn, &p, &ClosureConfig::default()).unwrap();
        // Moderately sized composite loop through two coordinate planes.
        let lp = rect_loop(&p, 0, 1, 0.3)
            .compose(&rect_loop(&p, 2, 3, 0.3))
            .unwrap();
        let t = transport_refined(&conn, &lp, 1e-10).unwrap();
        let lg = logm_unitary(&t.holonomy).unwrap();
        let res = rep.span.membership_residual(&lg).unwrap();
        assert!(res < 1e-6, "loop log-holonomy residual {res:.3e}");
        let _ = Arc::new(());
    }
}
