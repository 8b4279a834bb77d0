//! Quaternion-based six-degree-of-freedom rigid-body dynamics.
//!
//! Frames: body `x` forward, `y` right, `z` down; inertial axes north-east-down
//! with gravity `(0, 0, +g)`. The quaternion `q = (q₀, q₁, q₂, q₃)` rotates
//! body vectors into inertial axes, so `q̇ = ½Ω(ω)q`, and the matrix returned by
//! [`quat_to_matrix`] is the inertial-to-body rotation `R_ζ`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::beam::{BeamMesh, NodalState};
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Rigid-body state of the aircraft reference frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidState {
    pub v_b: Vector3<f64>,
    pub omega_b: Vector3<f64>,
    pub q: Vector4<f64>,
    pub p_cg: Vector3<f64>,
}

impl Default for RigidState {
    fn default() -> Self {
        Self {
            v_b: Vector3::zeros(),
            omega_b: Vector3::zeros(),
            q: Vector4::new(1.0, 0.0, 0.0, 0.0),
            p_cg: Vector3::zeros(),
        }
    }
}

impl RigidState {
    /// Wings-level flight at speed `u` along inertial north, pitched by
    /// `theta` so that the body angle of attack equals `theta`.
    pub fn level_flight(u: f64, theta: f64, altitude: f64) -> Self {
        Self {
            v_b: Vector3::new(u * theta.cos(), 0.0, u * theta.sin()),
            omega_b: Vector3::zeros(),
            q: quat_from_euler(0.0, theta, 0.0),
            p_cg: Vector3::new(0.0, 0.0, -altitude),
        }
    }

    /// Pitch attitude angle [rad].
    pub fn pitch(&self) -> f64 {
        euler_from_quat(&self.q).1
    }

    pub fn altitude(&self) -> f64 {
        -self.p_cg.z
    }
}

/// Mass and inertia about the reference point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassProperties {
    pub m: f64,
    pub j0: Matrix3<f64>,
    pub dj: Matrix3<f64>,
}

impl MassProperties {
    pub fn j(&self) -> Matrix3<f64> {
        self.j0 + self.dj
    }

    /// Aircraft made of the wing mass line plus a point mass at the origin.
    pub fn from_wing(mesh: &BeamMesh, point_mass: f64) -> Self {
        Self {
            m: mesh.mass() + point_mass,
            j0: wing_inertia(mesh),
            dj: Matrix3::zeros(),
        }
    }
}

/// Quaternion kinematics `q̇ = ½Ω(ω)q`.
pub fn quat_rates(q: &Vector4<f64>, omega: &Vector3<f64>) -> Vector4<f64> {
    omega_matrix(omega) * q * 0.5
}

pub fn omega_matrix(w: &Vector3<f64>) -> Matrix4<f64> {
    let (p, q, r) = (w.x, w.y, w.z);
    Matrix4::new(
        0.0, -p, -q, -r, //
        p, 0.0, r, -q, //
        q, -r, 0.0, p, //
        r, q, -p, 0.0,
    )
}

/// Inertial-to-body rotation matrix `R_ζ`.
pub fn quat_to_matrix(q: &Vector4<f64>) -> Result<Matrix3<f64>> {
    let n = q.norm();
    if !(n > 1e-12) {
        return Err(Error::InvalidInput("zero quaternion".into()));
    }
    Ok(quat_to_matrix_unchecked(&(q / n)))
}

/// `R_ζ` for a quaternion assumed normalized.
pub fn quat_to_matrix_unchecked(q: &Vector4<f64>) -> Matrix3<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    // body-to-inertial rotation, transposed
    Matrix3::new(
        1.0 - 2.0 * (q2 * q2 + q3 * q3),
        2.0 * (q1 * q2 - q0 * q3),
        2.0 * (q1 * q3 + q0 * q2),
        2.0 * (q1 * q2 + q0 * q3),
        1.0 - 2.0 * (q1 * q1 + q3 * q3),
        2.0 * (q2 * q3 - q0 * q1),
        2.0 * (q1 * q3 - q0 * q2),
        2.0 * (q2 * q3 + q0 * q1),
        1.0 - 2.0 * (q1 * q1 + q2 * q2),
    )
    .transpose()
}

/// Quaternion from roll-pitch-yaw (Z-Y-X) Euler angles.
pub fn quat_from_euler(roll: f64, pitch: f64, yaw: f64) -> Vector4<f64> {
    let (sr, cr) = (roll * 0.5).sin_cos();
    let (sp, cp) = (pitch * 0.5).sin_cos();
    let (sy, cy) = (yaw * 0.5).sin_cos();
    Vector4::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )
}

/// Roll, pitch, yaw (Z-Y-X) of a unit quaternion.
pub fn euler_from_quat(q: &Vector4<f64>) -> (f64, f64, f64) {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    let roll = (2.0 * (q0 * q1 + q2 * q3)).atan2(1.0 - 2.0 * (q1 * q1 + q2 * q2));
    let pitch = (2.0 * (q0 * q2 - q1 * q3)).clamp(-1.0, 1.0).asin();
    let yaw = (2.0 * (q0 * q3 + q1 * q2)).atan2(1.0 - 2.0 * (q2 * q2 + q3 * q3));
    (roll, pitch, yaw)
}

/// Gravity force on mass `m` in body axes.
pub fn gravity_body(q: &Vector4<f64>, m: f64) -> Vector3<f64> {
    quat_to_matrix_unchecked(&q.normalize()) * Vector3::new(0.0, 0.0, m * GRAVITY)
}

/// `V̇_B = ΣF/m − ω × V_B`.
pub fn translational_rates(
    state: &RigidState,
    mass: &MassProperties,
    f_aero: &Vector3<f64>,
    f_grav: &Vector3<f64>,
    f_thrust: &Vector3<f64>,
) -> Vector3<f64> {
    (f_aero + f_grav + f_thrust) / mass.m - state.omega_b.cross(&state.v_b)
}

/// `ω̇ = J⁻¹(ΣM − ω × Jω)`.
pub fn rotational_rates(state: &RigidState, mass: &MassProperties, m_aero: &Vector3<f64>, m_thrust: &Vector3<f64>) -> Result<Vector3<f64>> {
    let j = mass.j();
    let w = state.omega_b;
    let rhs = m_aero + m_thrust - w.cross(&(j * w));
    j.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("aircraft inertia tensor".into()))
}

/// `ṗ_cg = R_ζᵀ V_B`.
pub fn cg_rates(state: &RigidState) -> Vector3<f64> {
    quat_to_matrix_unchecked(&state.q.normalize()).transpose() * state.v_b
}

/// Inertia change due to elastic displacement, evaluated with the element
/// mid-point rule.
pub fn inertia_correction(mesh: &BeamMesh, states: &[NodalState]) -> Matrix3<f64> {
    let mut dj = Matrix3::zeros();
    for (e, el) in mesh.elements.iter().enumerate() {
        let [a, b] = el.nodes;
        let w = el.section.mu * mesh.element_length(e);
        let u = (states[a].u + states[b].u) * 0.5;
        let r0 = mesh.element_midpoint(e);
        let uut = u * u.transpose();
        let r0u = r0 * u.transpose();
        let sym = (r0u + r0u.transpose()) * 0.5;
        dj += (Matrix3::identity() * u.norm_squared() - uut) * w;
        dj += (Matrix3::identity() * r0.dot(&u) - sym) * (2.0 * w);
    }
    dj
}

/// Undeformed inertia of the wing mass line (exact for linear elements) plus
/// the sectional rotary inertia, about the body origin.
pub fn wing_inertia(mesh: &BeamMesh) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for (e, el) in mesh.elements.iter().enumerate() {
        let [a, b] = el.nodes;
        let h = mesh.element_length(e);
        let (r1, r2) = (mesh.nodes[a], mesh.nodes[b]);
        let rr = (r1 * r1.transpose() + r2 * r2.transpose()) / 3.0
            + (r1 * r2.transpose() + r2 * r1.transpose()) / 6.0;
        let jl = Matrix3::identity() * rr.trace() - rr;
        j += jl * (el.section.mu * h);
        j += el.frame * el.section.j_rho * el.frame.transpose() * h;
    }
    j
}

/// Fixed-step fourth-order Runge–Kutta propagation of the rigid-body
/// equations with body-axis force and moment supplied by `loads`.
pub fn propagate_rk4<F>(state: &RigidState, mass: &MassProperties, dt: f64, steps: usize, mut loads: F) -> Result<Vec<RigidState>>
where
    F: FnMut(f64, &RigidState) -> (Vector3<f64>, Vector3<f64>),
{
    let rates = |t: f64, s: &RigidState, loads: &mut F| -> Result<[Vector3<f64>; 3]> {
        let (f, m) = loads(t, s);
        let zero = Vector3::zeros();
        let vd = translational_rates(s, mass, &f, &zero, &zero);
        let wd = rotational_rates(s, mass, &m, &zero)?;
        Ok([vd, wd, cg_rates(s)])
    };
    let add = |s: &RigidState, k: &([Vector3<f64>; 3], Vector4<f64>), h: f64| RigidState {
        v_b: s.v_b + k.0[0] * h,
        omega_b: s.omega_b + k.0[1] * h,
        p_cg: s.p_cg + k.0[2] * h,
        q: s.q + k.1 * h,
    };
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = *state;
    out.push(s);
    for n in 0..steps {
        let t = n as f64 * dt;
        let k1 = (rates(t, &s, &mut loads)?, quat_rates(&s.q, &s.omega_b));
        let s2 = add(&s, &k1, dt / 2.0);
        let k2 = (rates(t + dt / 2.0, &s2, &mut loads)?, quat_rates(&s2.q, &s2.omega_b));
        let s3 = add(&s, &k2, dt / 2.0);
        let k3 = (rates(t + dt / 2.0, &s3, &mut loads)?, quat_rates(&s3.q, &s3.omega_b));
        let s4 = add(&s, &k3, dt);
        let k4 = (rates(t + dt, &s4, &mut loads)?, quat_rates(&s4.q, &s4.omega_b));
        let mut next = s;
        for i in 0..3 {
            let comb = (k1.0[i] + k2.0[i] * 2.0 + k3.0[i] * 2.0 + k4.0[i]) * (dt / 6.0);
            match i {
                0 => next.v_b += comb,
                1 => next.omega_b += comb,
                _ => next.p_cg += comb,
            }
        }
        next.q += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0);
        next.q.normalize_mut();
        s = next;
        out.push(s);
    }
    Ok(out)
}
