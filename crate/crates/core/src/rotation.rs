//! Finite-rotation kinematics with the Cartesian rotation vector.
//!
//! All kernels are generic over [`Scalar`] so the beam element can
//! differentiate through them.

use nalgebra::{Matrix3, Vector3};

use crate::dual::{Scalar, M3, V3};
use crate::error::{Error, Result};

/// Below this rotation angle the trigonometric coefficients are evaluated by
/// their Taylor series. The series (kept to fifth order in θ²) is accurate to
/// machine precision up to this angle, while the closed forms lose at most a
/// few ulps of relative accuracy above it.
pub const SERIES_THRESHOLD: f64 = 0.05;

/// Coefficients `(sinθ/θ, (1−cosθ)/θ², (θ−sinθ)/θ³)` as functions of `t = θ²`.
pub fn rotation_coefficients<S: Scalar>(t: S) -> (S, S, S) {
    if t.value() < SERIES_THRESHOLD * SERIES_THRESHOLD {
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let a = t * (-1.0 / 6.0) + t2 * (1.0 / 120.0) - t3 * (1.0 / 5040.0)
            + t4 * (1.0 / 362_880.0)
            + 1.0;
        let b = t * (-1.0 / 24.0) + t2 * (1.0 / 720.0) - t3 * (1.0 / 40_320.0)
            + t4 * (1.0 / 3_628_800.0)
            + 0.5;
        let c = t * (-1.0 / 120.0) + t2 * (1.0 / 5040.0) - t3 * (1.0 / 362_880.0)
            + t4 * (1.0 / 39_916_800.0)
            + 1.0 / 6.0;
        (a, b, c)
    } else {
        let th = t.sqrt();
        let s = th.sin();
        let half = (th * 0.5).sin();
        let a = s / th;
        let b = half * half * 2.0 / t;
        let c = (th - s) / (th * t);
        (a, b, c)
    }
}

fn skew_sq<S: Scalar>(p: &V3<S>, t: S) -> M3<S> {
    // ψ̃² = ψψᵀ − θ² I
    let mut m = [[S::cst(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = p[i] * p[j];
        }
        m[i][i] = m[i][i] - t;
    }
    m
}

fn combine<S: Scalar>(p: &V3<S>, c1: S, c2: S, t: S) -> M3<S> {
    let sq = skew_sq(p, t);
    let mut m = [[S::cst(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = sq[i][j] * c2;
        }
        m[i][i] = m[i][i] + 1.0;
    }
    m[0][1] = m[0][1] - c1 * p[2];
    m[0][2] = m[0][2] + c1 * p[1];
    m[1][0] = m[1][0] + c1 * p[2];
    m[1][2] = m[1][2] - c1 * p[0];
    m[2][0] = m[2][0] - c1 * p[1];
    m[2][1] = m[2][1] + c1 * p[0];
    m
}

/// Rotation matrix `exp(ψ̃)` and spatial tangent operator `T(ψ)`.
///
/// `T` maps rotation-vector rates to spatial angular velocity:
/// `Ṙ Rᵀ = (T ψ̇)~`.
pub fn rotation_and_tangent<S: Scalar>(p: &V3<S>) -> (M3<S>, M3<S>) {
    let t = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    let (a, b, c) = rotation_coefficients(t);
    (combine(p, a, b, t), combine(p, b, c, t))
}

fn check_range(psi: &Vector3<f64>) -> Result<()> {
    let n = psi.norm();
    if !(n < 2.0 * std::f64::consts::PI) {
        return Err(Error::RotationRange { norm: n });
    }
    Ok(())
}

fn to_na(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

/// Rotation matrix of a Cartesian rotation vector (Rodrigues formula).
pub fn rotation_from_rotvec(psi: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_range(psi)?;
    let (r, _) = rotation_and_tangent(&[psi.x, psi.y, psi.z]);
    Ok(to_na(&r))
}

/// Spatial tangent operator `T(ψ)` of the rotation-vector parameterization.
pub fn tangent_operator(psi: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_range(psi)?;
    let (_, t) = rotation_and_tangent(&[psi.x, psi.y, psi.z]);
    Ok(to_na(&t))
}

/// Principal rotation vector (‖ψ‖ ≤ π) of a rotation matrix.
pub fn rotvec_from_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_th = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let th = cos_th.acos();
    let axial = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if th < 1e-4 {
        // sinθ/θ ≈ 1 − θ²/6
        return axial * 0.5 / (1.0 - th * th / 6.0);
    }
    if th < std::f64::consts::PI - 1e-4 {
        return axial * (th / (2.0 * th.sin()));
    }
    // Near π: R ≈ 2nnᵀ − I, recover the axis from the largest diagonal entry.
    let b = (r + Matrix3::identity()) * 0.5;
    let k = (0..3)
        .max_by(|&i, &j| b[(i, i)].partial_cmp(&b[(j, j)]).unwrap())
        .unwrap();
    let mut n = b.column(k).into_owned() / b[(k, k)].max(1e-300).sqrt();
    n.normalize_mut();
    if n.dot(&axial) < 0.0 {
        n = -n;
    }
    n * th
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
