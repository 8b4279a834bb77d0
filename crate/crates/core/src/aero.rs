//! Two-dimensional unsteady strip aerodynamics.
//!
//! Circulatory lift follows the Wagner indicial response realized with two
//! first-order lag states per strip (R. T. Jones coefficients); gust lift
//! follows the Küssner response with two more lag states. Non-circulatory
//! (apparent-mass) terms and a parabolic drag polar complete the model.
//!
//! Strip axes are (chordwise aft, spanwise, normal up).

use nalgebra::{Complex, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Indicial-function coefficients and section polar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeroConstants {
    pub psi1: f64,
    pub psi2: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub cd0: f64,
    pub e0: f64,
    pub cl_alpha: f64,
    /// Aspect ratio used by the induced-drag term at every strip.
    pub aspect_ratio: f64,
}

impl Default for AeroConstants {
    fn default() -> Self {
        Self {
            psi1: 0.165,
            psi2: 0.335,
            eps1: 0.0455,
            eps2: 0.3,
            phi1: 0.5792,
            phi2: 0.4208,
            beta1: 0.1393,
            beta2: 1.802,
            cd0: 0.01,
            e0: 0.95,
            cl_alpha: 2.0 * std::f64::consts::PI,
            aspect_ratio: 32.0,
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!("nondimensional time must be nonnegative, got {tau}")));
    }
    Ok(())
}

/// Wagner function `Φ(τ) = 1 − ψ₁e^(−ε₁τ) − ψ₂e^(−ε₂τ)`.
pub fn wagner_phi(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let c = AeroConstants::default();
    Ok(1.0 - c.psi1 * (-c.eps1 * tau).exp() - c.psi2 * (-c.eps2 * tau).exp())
}

/// Küssner function `Ψ(τ) = 1 − φ₁e^(−β₁τ) − φ₂e^(−β₂τ)`.
pub fn kussner_psi(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let c = AeroConstants::default();
    Ok(1.0 - c.phi1 * (-c.beta1 * tau).exp() - c.phi2 * (-c.beta2 * tau).exp())
}

/// Rational approximation of the Theodorsen function implied by the Wagner
/// coefficients.
pub fn theodorsen_jones(k: f64) -> Complex<f64> {
    let c = AeroConstants::default();
    let ik = Complex::new(0.0, k);
    Complex::new(1.0, 0.0) - ik * c.psi1 / (ik + c.eps1) - ik * c.psi2 / (ik + c.eps2)
}

/// Geometry of one aerodynamic strip.
#[derive(Clone, Debug, PartialEq)]
pub struct StripGeometry {
    /// Spanwise station [m].
    pub s: f64,
    /// Semi-chord [m].
    pub b: f64,
    /// Chord [m].
    pub c: f64,
    /// Elastic-axis offset aft of mid-chord [semi-chords].
    pub a: f64,
    /// Strip width [m].
    pub ds: f64,
    /// Strip axes (chordwise aft, spanwise, normal up) as columns in body
    /// coordinates.
    pub r_c: Matrix3<f64>,
}

impl StripGeometry {
    /// Undeformed strip of a straight wing along body `+y`.
    pub fn straight(s: f64, chord: f64, a: f64, ds: f64) -> Self {
        Self {
            s,
            b: chord / 2.0,
            c: chord,
            a,
            ds,
            r_c: Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, -1.0)),
        }
    }
}

/// Augmented aerodynamic states of one strip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AeroStripState {
    pub x1: f64,
    pub x2: f64,
    pub xg1: f64,
    pub xg2: f64,
    pub w34: f64,
}

impl AeroStripState {
    pub fn lag(&self) -> [f64; 4] {
        [self.x1, self.x2, self.xg1, self.xg2]
    }

    pub fn from_lag(x: [f64; 4]) -> Self {
        Self {
            x1: x[0],
            x2: x[1],
            xg1: x[2],
            xg2: x[3],
            w34: 0.0,
        }
    }
}

/// Discrete 1-minus-cosine gust.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GustSpec {
    /// Peak gust velocity [m/s].
    pub w_g0: f64,
    /// Gust gradient distance [m].
    #[serde(rename = "H_g")]
    pub h_g: f64,
    /// Gust onset time [s].
    pub t0: f64,
}

impl Default for GustSpec {
    fn default() -> Self {
        Self {
            w_g0: 5.0,
            h_g: 25.0,
            t0: 0.5,
        }
    }
}

impl GustSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_g > 0.0) {
            return Err(Error::InvalidInput(format!("gust gradient distance must be positive, got {}", self.h_g)));
        }
        if !(self.w_g0 >= 0.0) {
            return Err(Error::InvalidInput(format!("gust amplitude must be nonnegative, got {}", self.w_g0)));
        }
        Ok(())
    }

    pub fn none() -> Self {
        Self {
            w_g0: 0.0,
            ..Self::default()
        }
    }
}

/// Upward gust velocity at time `t` for flight speed `u`.
pub fn gust_velocity(t: f64, spec: &GustSpec, u: f64) -> f64 {
    let dt = t - spec.t0;
    let len = spec.h_g / u;
    if dt < 0.0 || dt > len {
        return 0.0;
    }
    0.5 * spec.w_g0 * (1.0 - (2.0 * std::f64::consts::PI * u * dt / spec.h_g).cos())
}

/// Air velocity relative to a strip, in strip axes.
///
/// `v_inf` is the freestream (air velocity relative to the aircraft) in
/// inertial axes, `r_zeta` the inertial-to-body rotation, `v_body` the body
/// motion velocity at the strip and `u_dot` the elastic velocity (both body
/// axes).
pub fn effective_velocity(
    strip: &StripGeometry,
    v_inf: &Vector3<f64>,
    r_zeta: &Matrix3<f64>,
    v_body: &Vector3<f64>,
    u_dot: &Vector3<f64>,
) -> Vector3<f64> {
    strip.r_c.transpose() * (r_zeta * v_inf - v_body - u_dot)
}

/// Effective angle of attack `atan2(V₃, V₁)`.
pub fn effective_aoa(v_eff: &Vector3<f64>) -> Result<f64> {
    if v_eff.x.abs() < 1e-9 {
        return Err(Error::DegenerateFlow(v_eff.x));
    }
    Ok(v_eff.z.atan2(v_eff.x))
}

/// Lag-state rates `[ẋ₁, ẋ₂, ẋg₁, ẋg₂]`.
pub fn aero_state_rates(state: &AeroStripState, w34: f64, w_gust: f64, u: f64, b: f64, c: &AeroConstants) -> [f64; 4] {
    let k = u / b;
    [
        -c.eps1 * k * state.x1 + w34,
        -c.eps2 * k * state.x2 + w34,
        -c.beta1 * k * state.xg1 + w_gust,
        -c.beta2 * k * state.xg2 + w_gust,
    ]
}

/// Section kinematics in the classical convention (plunge `h` positive down,
/// pitch `α` positive nose-up).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StripKinematics {
    pub h_dot: f64,
    pub h_ddot: f64,
    pub alpha: f64,
    pub alpha_dot: f64,
    pub alpha_ddot: f64,
    pub u: f64,
}

/// Sectional loads per unit span.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StripLoads {
    pub lift: f64,
    /// Pitching moment about the elastic axis, nose-up positive.
    pub moment: f64,
    pub drag: f64,
    pub lift_circulatory: f64,
    pub lift_gust: f64,
    /// Flow angle used to orient lift and drag.
    pub alpha: f64,
    pub w34: f64,
}

/// Three-quarter-chord downwash `ḣ + Uα + b(½ − a)α̇`.
pub fn downwash_34(kin: &StripKinematics, b: f64, a: f64) -> f64 {
    kin.h_dot + kin.u * kin.alpha + b * (0.5 - a) * kin.alpha_dot
}

/// Lift, moment and drag of a strip.
///
/// `w_gust` is the gust velocity normal to the chord; it only enters the
/// circulatory gust lift through the Küssner states.
pub fn strip_loads(
    strip: &StripGeometry,
    kin: &StripKinematics,
    state: &AeroStripState,
    c: &AeroConstants,
    rho: f64,
) -> StripLoads {
    let (b, a, u) = (strip.b, strip.a, kin.u);
    let pi = std::f64::consts::PI;
    let w34 = downwash_34(kin, b, a);
    let k = u / b;
    let l_nc = pi * rho * b * b * (kin.h_ddot + u * kin.alpha_dot - b * a * kin.alpha_ddot);
    let l_c = 2.0 * pi * rho * u * b
        * ((1.0 - c.psi1 - c.psi2) * w34 + c.eps1 * c.psi1 * k * state.x1 + c.eps2 * c.psi2 * k * state.x2);
    let l_g = 2.0 * pi * rho * u * b
        * (c.beta1 * c.phi1 * k * state.xg1 + c.beta2 * c.phi2 * k * state.xg2);
    let m_nc = pi * rho * b * b
        * (-b * a * kin.h_ddot - u * b * (0.5 - a) * kin.alpha_dot - b * b * (0.125 + a * a) * kin.alpha_ddot);
    let lift = l_nc + l_c + l_g;
    let moment = m_nc + b * (a + 0.5) * (l_c + l_g);
    let qc = 0.5 * rho * u * u * strip.c;
    let cl = if qc > 0.0 { lift / qc } else { 0.0 };
    let drag = qc * (c.cd0 + cl * cl / (pi * c.e0 * c.aspect_ratio));
    StripLoads {
        lift,
        moment,
        drag,
        lift_circulatory: l_c,
        lift_gust: l_g,
        alpha: kin.alpha,
        w34,
    }
}

/// Steady lag states for a constant downwash (all rates zero).
pub fn equilibrium_states(w34: f64, w_gust: f64, u: f64, b: f64, c: &AeroConstants) -> AeroStripState {
    let k = u / b;
    AeroStripState {
        x1: w34 / (c.eps1 * k),
        x2: w34 / (c.eps2 * k),
        xg1: w_gust / (c.beta1 * k),
        xg2: w_gust / (c.beta2 * k),
        w34,
    }
}

/// Force per unit span in body axes for a strip whose deformed axes are
/// `(e_aft, e_span, e_up)` and whose relative wind makes angle `α` with the
/// chord: lift normal to the wind, drag along it.
pub fn strip_force_body(loads: &StripLoads, e_aft: &Vector3<f64>, e_up: &Vector3<f64>) -> Vector3<f64> {
    let (s, c) = loads.alpha.sin_cos();
    let e_lift = -e_aft * s + e_up * c;
    let e_drag = e_aft * c + e_up * s;
    e_lift * loads.lift + e_drag * loads.drag
}
