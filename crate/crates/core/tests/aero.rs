use std::f64::consts::PI;

use aeroflex::aero::{
    aero_state_rates, AeroConstants, effective_aoa, effective_velocity, equilibrium_states, gust_velocity, kussner_psi,
    strip_loads, theodorsen_jones, wagner_phi, AeroStripState, GustSpec, StripGeometry, StripKinematics,
};
use aeroflex::Error;
use approx::assert_relative_eq;
use nalgebra::{Complex, Matrix3, Vector3};
use proptest::prelude::*;

const RHO: f64 = 0.0889;
const U: f64 = 25.0;

fn strip() -> StripGeometry {
    StripGeometry::straight(8.0, 1.0, 0.0, 0.32)
}

// ─── indicial functions ──────────────────────────────────────────────────────

#[test]
fn wagner_function_values() {
    assert_relative_eq!(wagner_phi(0.0).unwrap(), 0.5, epsilon = 1e-15);
    assert_relative_eq!(wagner_phi(1e4).unwrap(), 1.0, epsilon = 1e-12);
    let oracle = 1.0 - 0.165 * (-0.455f64).exp() - 0.335 * (-3.0f64).exp();
    assert_relative_eq!(wagner_phi(10.0).unwrap(), oracle, epsilon = 1e-15);
    assert_relative_eq!(wagner_phi(10.0).unwrap(), 0.8786, epsilon = 1e-4);
    assert!(matches!(wagner_phi(-1.0), Err(Error::InvalidInput(_))));
}

#[test]
fn kussner_function_values() {
    assert_relative_eq!(kussner_psi(0.0).unwrap(), 0.0, epsilon = 1e-15);
    assert_relative_eq!(kussner_psi(1e4).unwrap(), 1.0, epsilon = 1e-12);
    let oracle = 1.0 - 0.5792 * (-0.1393f64).exp() - 0.4208 * (-1.802f64).exp();
    assert_relative_eq!(kussner_psi(1.0).unwrap(), oracle, epsilon = 1e-15);
    assert_relative_eq!(kussner_psi(1.0).unwrap(), 0.4269, epsilon = 5e-4);
    assert!(kussner_psi(f64::NAN).is_err());
}

proptest! {
    #[test]
    fn indicial_functions_rise_monotonically(t in 0.0..200.0f64, dt in 1e-6..5.0f64) {
        prop_assert!(wagner_phi(t + dt).unwrap() > wagner_phi(t).unwrap());
        prop_assert!(kussner_psi(t + dt).unwrap() > kussner_psi(t).unwrap());
        prop_assert!(wagner_phi(t).unwrap() < 1.0);
    }
}

#[test]
fn theodorsen_limits() {
    assert_relative_eq!(theodorsen_jones(0.0).re, 1.0, epsilon = 1e-15);
    assert_relative_eq!(theodorsen_jones(0.0).im, 0.0, epsilon = 1e-15);
    let hi = theodorsen_jones(1e9);
    assert_relative_eq!(hi.re, 0.5, epsilon = 1e-9);
    assert!(hi.im.abs() < 1e-9);
}

/// Circulatory lift per unit downwash of the lag-state model under harmonic
/// motion, built only from `aero_state_rates` and `strip_loads` (both linear).
fn lag_model_transfer(k_red: f64) -> Complex<f64> {
    let c = AeroConstants::default();
    let g = strip();
    let omega = k_red * U / g.b;
    let norm = 2.0 * PI * RHO * U * g.b;
    let kin = |w: f64| StripKinematics {
        u: U,
        alpha: w / U,
        ..Default::default()
    };
    // lift sensitivity to the downwash and to each lag state
    let d_w = strip_loads(&g, &kin(1.0), &AeroStripState::default(), &c, RHO).lift_circulatory / norm;
    let mut total = Complex::new(d_w, 0.0);
    for j in 0..2 {
        let mut x = [0.0; 4];
        x[j] = 1.0;
        let d_x = strip_loads(&g, &kin(0.0), &AeroStripState::from_lag(x), &c, RHO).lift_circulatory / norm;
        // decay rate and input gain from the state equations
        let a = aero_state_rates(&AeroStripState::from_lag(x), 0.0, 0.0, U, g.b, &c)[j];
        let b = aero_state_rates(&AeroStripState::default(), 1.0, 0.0, U, g.b, &c)[j];
        total += d_x * b / (Complex::new(0.0, omega) - a);
    }
    total
}

#[test]
fn lag_states_reproduce_the_theodorsen_approximation() {
    for k in [0.0, 0.01, 0.05, 0.1, 0.3, 1.0, 3.0] {
        let a = lag_model_transfer(k);
        let b = theodorsen_jones(k);
        assert!((a - b).norm() < 1e-12, "k = {k}: {a} vs {b}");
    }
}

// ─── relative wind ───────────────────────────────────────────────────────────

#[test]
fn level_freestream_is_purely_chordwise() {
    let v = effective_velocity(
        &strip(),
        &Vector3::new(-U, 0.0, 0.0),
        &Matrix3::identity(),
        &Vector3::zeros(),
        &Vector3::zeros(),
    );
    assert_relative_eq!(v, Vector3::new(U, 0.0, 0.0), epsilon = 1e-15);
}

#[test]
fn upward_plunge_adds_one_metre_per_second_of_downwash() {
    // body z points down: u̇ = (0, 0, −1) is an upward section velocity, so
    // the relative wind gains a 1 m/s component against the strip normal
    let v = effective_velocity(
        &strip(),
        &Vector3::new(-U, 0.0, 0.0),
        &Matrix3::identity(),
        &Vector3::zeros(),
        &Vector3::new(0.0, 0.0, -1.0),
    );
    assert_relative_eq!(v, Vector3::new(U, 0.0, -1.0), epsilon = 1e-15);
    assert!(effective_aoa(&v).unwrap() < 0.0);
}

#[test]
fn pitch_rate_contribution_matches_hand_cross_product() {
    let omega = Vector3::new(0.0, 0.1, 0.0);
    let r = Vector3::new(8.0, 0.0, 0.0);
    // ω × r by hand: (ω_y r_z − ω_z r_y, ω_z r_x − ω_x r_z, ω_x r_y − ω_y r_x)
    let by_hand = Vector3::new(0.0, 0.0, -0.8);
    assert_relative_eq!(omega.cross(&r), by_hand, epsilon = 1e-15);
    let v = effective_velocity(
        &strip(),
        &Vector3::new(-U, 0.0, 0.0),
        &Matrix3::identity(),
        &omega.cross(&r),
        &Vector3::zeros(),
    );
    assert_relative_eq!(v, Vector3::new(U, 0.0, -0.8), epsilon = 1e-15);
}

#[test]
fn attitude_rotates_the_freestream_into_body_axes() {
    // 2° nose-up: the wind arrives from below the chord
    let th = 2f64.to_radians();
    let r_zeta = Matrix3::new(th.cos(), 0.0, -th.sin(), 0.0, 1.0, 0.0, th.sin(), 0.0, th.cos());
    let v = effective_velocity(&strip(), &Vector3::new(-U, 0.0, 0.0), &r_zeta, &Vector3::zeros(), &Vector3::zeros());
    assert_relative_eq!(effective_aoa(&v).unwrap(), th, epsilon = 1e-14);
}

#[test]
fn effective_angle_of_attack() {
    assert_eq!(effective_aoa(&Vector3::new(25.0, 0.0, 0.0)).unwrap(), 0.0);
    let two = 2f64.to_radians();
    assert_relative_eq!(
        effective_aoa(&Vector3::new(25.0, 0.0, 25.0 * two.tan())).unwrap(),
        two,
        epsilon = 1e-15
    );
    assert_relative_eq!(
        effective_aoa(&Vector3::new(25.0, 0.0, -2.5)).unwrap().to_degrees(),
        -5.710_593_137_499_643,
        epsilon = 1e-12
    );
    assert!(matches!(effective_aoa(&Vector3::new(0.0, 0.0, 1.0)), Err(Error::DegenerateFlow(_))));
}

// ─── state equations and loads ───────────────────────────────────────────────

#[test]
fn quiescent_states_have_zero_rates() {
    let r = aero_state_rates(&AeroStripState::default(), 0.0, 0.0, U, 0.5, &AeroConstants::default());
    assert_eq!(r, [0.0; 4]);
}

#[test]
fn equilibrium_states_are_stationary() {
    let c = AeroConstants::default();
    let s = equilibrium_states(2.5, 1.3, U, 0.5, &c);
    let r = aero_state_rates(&s, 2.5, 1.3, U, 0.5, &c);
    assert!(r.iter().all(|v| v.abs() < 1e-14), "{r:?}");
}

#[test]
fn steady_lift_recovers_thin_airfoil_theory() {
    let c = AeroConstants::default();
    let g = strip();
    let alpha = 0.1;
    let kin = StripKinematics {
        alpha,
        u: U,
        ..Default::default()
    };
    let st = equilibrium_states(U * alpha, 0.0, U, g.b, &c);
    let l = strip_loads(&g, &kin, &st, &c, RHO);
    let oracle = 2.0 * PI * RHO * U * g.b * (U * alpha);
    assert_relative_eq!(l.lift, oracle, max_relative = 1e-12);
    assert_relative_eq!(l.lift, 17.45, epsilon = 1e-2);
    let cl = l.lift / (0.5 * RHO * U * U * g.c);
    assert_relative_eq!(cl, 2.0 * PI * alpha, max_relative = 1e-12);
}

#[test]
fn zero_kinematics_leave_only_profile_drag() {
    let c = AeroConstants::default();
    let kin = StripKinematics {
        u: U,
        ..Default::default()
    };
    let l = strip_loads(&strip(), &kin, &AeroStripState::default(), &c, RHO);
    assert_eq!(l.lift, 0.0);
    assert_eq!(l.moment, 0.0);
    assert_relative_eq!(l.drag, 0.5 * RHO * U * U * 1.0 * 0.01, max_relative = 1e-14);
    assert_relative_eq!(l.drag, 0.278, epsilon = 1e-3);
}

// ─── gust ────────────────────────────────────────────────────────────────────

#[test]
fn one_minus_cosine_gust_profile() {
    let g = GustSpec::default();
    assert_eq!(gust_velocity(g.t0 - 1e-9, &g, U), 0.0);
    assert_relative_eq!(gust_velocity(g.t0 + 0.5, &g, U), 5.0, epsilon = 1e-12);
    assert!(gust_velocity(g.t0 + 1.0, &g, U).abs() < 1e-12);
    assert_eq!(gust_velocity(g.t0 + 1.5, &g, U), 0.0);
    assert!(GustSpec::none().validate().is_ok());
    assert_eq!(gust_velocity(g.t0 + 0.5, &GustSpec::none(), U), 0.0);
}

#[test]
fn step_downwash_response_tracks_wagner() {
    let c = AeroConstants::default();
    let g = strip();
    let norm = 2.0 * PI * RHO * U * g.b;
    let (w, dt) = (1.0, 1e-3);
    let mut x = [0.0; 4];
    let kin = StripKinematics {
        alpha: w / U,
        u: U,
        ..Default::default()
    };
    let rates = |x: &[f64; 4]| aero_state_rates(&AeroStripState::from_lag(*x), w, 0.0, U, g.b, &c);
    for n in 0..=200 {
        let tau = U * n as f64 * dt / g.b;
        let l = strip_loads(&g, &kin, &AeroStripState::from_lag(x), &c, RHO);
        assert!((l.lift_circulatory / (norm * w) - wagner_phi(tau).unwrap()).abs() < 1e-6, "τ = {tau}");
        let k1 = rates(&x);
        let k2 = rates(&std::array::from_fn(|i| x[i] + 0.5 * dt * k1[i]));
        let k3 = rates(&std::array::from_fn(|i| x[i] + 0.5 * dt * k2[i]));
        let k4 = rates(&std::array::from_fn(|i| x[i] + dt * k3[i]));
        x = std::array::from_fn(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
}
