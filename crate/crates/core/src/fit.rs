//! Least-squares circle fitting.
//!
//! An algebraic (Kåsa) fit on mean-centred points seeds a Levenberg-Marquardt
//! refinement of the geometric residuals `|p - c| - r`.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

const COLLINEAR_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// Root-mean-square geometric residual.
    pub rms_mm: f64,
}

pub fn fit_circle(points: &[[f64; 2]]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("circle fit needs 3 points, got {}", points.len())));
    }
    let pts: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
    if pts.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::Degenerate("non-finite point".into()));
    }
    let mean = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
    let centred: Vec<Vector2<f64>> = pts.iter().map(|p| p - mean).collect();
    check_spread(&centred)?;

    let (c0, r0) = algebraic(&centred)?;
    let (c, r) = polish(&centred, refine(&centred, c0, r0));
    let rms = (centred.iter().map(|p| ((p - c).norm() - r).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    let center = c + mean;
    Ok(CircleFit { center: [center.x, center.y], radius: r, rms_mm: rms })
}

/// Rejects point sets whose spread across their principal line is negligible.
fn check_spread(centred: &[Vector2<f64>]) -> Result<()> {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in centred {
        sxx += p.x * p.x;
        sxy += p.x * p.y;
        syy += p.y * p.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = ((tr * tr) / 4.0 - det).max(0.0).sqrt();
    let (big, small) = (tr / 2.0 + disc, (tr / 2.0 - disc).max(0.0));
    if big == 0.0 || (small / big).sqrt() < COLLINEAR_TOL {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    Ok(())
}

fn algebraic(pts: &[Vector2<f64>]) -> Result<(Vector2<f64>, f64)> {
    // x² + y² + D x + E y + F = 0
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in pts {
        let row = Vector3::new(p.x, p.y, 1.0);
        ata += row * row.transpose();
        atb -= row * p.norm_squared();
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::Degenerate("singular algebraic circle system".into()))?;
    let c = Vector2::new(-sol.x / 2.0, -sol.y / 2.0);
    let r2 = c.norm_squared() - sol.z;
    if !(r2 > 0.0) {
        return Err(Error::Degenerate("algebraic fit has no real radius".into()));
    }
    Ok((c, r2.sqrt()))
}

fn cost(pts: &[Vector2<f64>], c: Vector2<f64>, r: f64) -> f64 {
    pts.iter().map(|p| ((p - c).norm() - r).powi(2)).sum()
}

fn refine(pts: &[Vector2<f64>], mut c: Vector2<f64>, mut r: f64) -> (Vector2<f64>, f64) {
    let mut lambda = 1e-3;
    let mut current = cost(pts, c, r);
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for p in pts {
            let d = p - c;
            let dist = d.norm();
            if dist == 0.0 {
                continue;
            }
            let jac = Vector3::new(-d.x / dist, -d.y / dist, -1.0);
            let res = dist - r;
            jtj += jac * jac.transpose();
            jtr += jac * res;
        }
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&(-jtr)) else { break };
        let (nc, nr) = (c + Vector2::new(step.x, step.y), r + step.z);
        let next = cost(pts, nc, nr);
        if next <= current {
            c = nc;
            r = nr;
            current = next;
            lambda = (lambda / 10.0).max(1e-15);
            if step.norm() <= STEP_TOL * (1.0 + r.abs()) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (c, r.abs())
}

/// Undamped Gauss-Newton steps from the damped solution. The cost is too
/// flat near the optimum to compare reliably, the normal equations are not.
fn polish(pts: &[Vector2<f64>], (mut c, mut r): (Vector2<f64>, f64)) -> (Vector2<f64>, f64) {
    let mut last = f64::INFINITY;
    for _ in 0..20 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for p in pts {
            let d = p - c;
            let dist = d.norm();
            if dist == 0.0 {
                continue;
            }
            let jac = Vector3::new(-d.x / dist, -d.y / dist, -1.0);
            jtj += jac * jac.transpose();
            jtr += jac * (dist - r);
        }
        let Some(step) = jtj.lu().solve(&(-jtr)) else { break };
        let size = step.norm();
        if !(size < last) {
            break;
        }
        last = size;
        c += Vector2::new(step.x, step.y);
        r += step.z;
        if size <= 1e-15 * (1.0 + r.abs()) {
            break;
        }
    }
    (c, r.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arc(radius: f64, span_deg: f64, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let a = (span_deg * i as f64 / (n - 1) as f64).to_radians();
                [radius * a.cos(), radius * a.sin()]
            })
            .collect()
    }

    #[test]
    fn three_point_circle() {
        let fit = fit_circle(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert!(fit.center[0].abs() < 1e-12 && fit.center[1].abs() < 1e-12);
        assert!((fit.radius - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_arc_recovery() {
        let fit = fit_circle(&arc(71.1, 40.0, 50)).unwrap();
        assert!((fit.radius - 71.1).abs() < 1e-6);
        assert!(fit.rms_mm < 1e-8);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_circle(&[[0.0, 0.0], [1.0, 1.0]]), Err(Error::Degenerate(_))));
        assert!(matches!(fit_circle(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]), Err(Error::Degenerate(_))));
        assert!(matches!(fit_circle(&[[1.0, 1.0]; 5]), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn equivariant_under_rigid_motion(
            angle in 0.0f64..std::f64::consts::TAU,
            tx in -500.0f64..500.0,
            ty in -500.0f64..500.0,
            radius in 5.0f64..200.0,
        ) {
            let pts: Vec<[f64; 2]> = arc(radius, 70.0, 25)
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    let wobble = 0.05 * ((i * 7 % 5) as f64 - 2.0);
                    [p[0] + wobble, p[1] - wobble]
                })
                .collect();
            let base = fit_circle(&pts).unwrap();
            let (s, c) = angle.sin_cos();
            let moved: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty]).collect();
            let fit = fit_circle(&moved).unwrap();
            prop_assert!((fit.radius - base.radius).abs() < 1e-9);
            let expected = [c * base.center[0] - s * base.center[1] + tx, s * base.center[0] + c * base.center[1] + ty];
            prop_assert!((fit.center[0] - expected[0]).abs() < 1e-7);
            prop_assert!((fit.center[1] - expected[1]).abs() < 1e-7);
        }
    }
}
