use std::f64::consts::PI;

use aeroflex::beam::{
    assemble, modal_frequencies, scale_stiffness, sectional_loads, static_solve, static_solve_linear, strain_measures,
    wing_frame, BeamMesh, CrossSection, ModeKind, NodalState, StaticOptions, UniformLoad,
};
use aeroflex::rotation::{rotation_from_rotvec, rotvec_from_rotation, skew};
use approx::assert_relative_eq;
use nalgebra::{DVector, Matrix3, Vector3};
use proptest::prelude::*;

fn at_rest(mesh: &BeamMesh) -> Vec<NodalState> {
    vec![NodalState::at_rest(Vector3::zeros(), Vector3::zeros()); mesh.n_nodes()]
}

fn single_element(h: f64) -> BeamMesh {
    BeamMesh::straight(
        Vector3::zeros(),
        Vector3::new(0.0, h, 0.0),
        2,
        wing_frame(),
        &CrossSection::baseline(),
        vec![0],
    )
    .unwrap()
}

// ─── rotations ───────────────────────────────────────────────────────────────

#[test]
fn zero_rotation_vector_is_identity() {
    let r = rotation_from_rotvec(&Vector3::zeros()).unwrap();
    assert_relative_eq!(r, Matrix3::identity(), epsilon = 1e-15);
}

#[test]
fn quarter_turn_about_first_axis() {
    let r = rotation_from_rotvec(&Vector3::new(PI / 2.0, 0.0, 0.0)).unwrap();
    assert_relative_eq!(r * Vector3::y(), Vector3::z(), epsilon = 1e-14);
}

#[test]
fn small_rotation_vectors_use_the_series_branch_smoothly() {
    for t in [0.0, 1e-12, 1e-6, 0.049_999, 0.050_001, 0.3] {
        let psi = Vector3::new(0.3, -0.5, 0.8).normalize() * t;
        let r = rotation_from_rotvec(&psi).unwrap();
        // first-order oracle R ≈ I + ψ̃ + ψ̃²/2
        let k = skew(&psi);
        let approx = Matrix3::identity() + k + k * k * 0.5;
        assert!((r - approx).norm() <= t.powi(3) + 1e-15, "t = {t}");
    }
}

proptest! {
    #[test]
    fn rotation_matrices_are_proper_orthogonal(x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
        let psi = Vector3::new(x, y, z);
        prop_assume!(psi.norm() < 3.1);
        let r = rotation_from_rotvec(&psi).unwrap();
        prop_assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        prop_assert!((rotvec_from_rotation(&r) - psi).norm() < 1e-9);
    }
}

// ─── strains ─────────────────────────────────────────────────────────────────

#[test]
fn undeformed_element_has_zero_strain() {
    let mesh = single_element(0.32);
    let (g, k) = strain_measures(&mesh, 0, &at_rest(&mesh)).unwrap();
    assert_eq!(g, Vector3::zeros());
    assert_eq!(k, Vector3::zeros());
}

#[test]
fn rigidly_rotated_element_has_zero_strain() {
    let mesh = single_element(0.32);
    let psi = Vector3::new(0.4, -0.7, 1.1);
    let r = rotation_from_rotvec(&psi).unwrap();
    let shift = Vector3::new(1.0, 2.0, -3.0);
    let states: Vec<NodalState> = mesh
        .nodes
        .iter()
        .map(|x0| NodalState::at_rest(r * x0 - x0 + shift, psi))
        .collect();
    let (g, k) = strain_measures(&mesh, 0, &states).unwrap();
    assert!(g.norm() < 1e-13, "gamma = {g}");
    assert!(k.norm() < 1e-13, "kappa = {k}");
}

#[test]
fn circular_arc_curvature_converges_to_inverse_radius() {
    let radius = 10.0;
    let mut errors = Vec::new();
    for h in [0.4, 0.1, 0.025] {
        let mesh = single_element(h);
        let theta = h / radius;
        // arc bending upward (body −z) in the plane of section axes 1 and 3
        let tip = Vector3::new(0.0, radius * theta.sin(), -radius * (1.0 - theta.cos()));
        let states = vec![
            NodalState::at_rest(Vector3::zeros(), Vector3::zeros()),
            NodalState::at_rest(tip - mesh.nodes[1], Vector3::new(-theta, 0.0, 0.0)),
        ];
        let (g, k) = strain_measures(&mesh, 0, &states).unwrap();
        errors.push((k.norm() - 1.0 / radius).abs());
        assert!(g.norm() < 1e-3 * h, "gamma = {g}");
    }
    assert!(errors[2] < 1e-5, "errors = {errors:?}");
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "errors = {errors:?}");
}

// ─── constitutive law ───────────────────────────────────────────────────────

#[test]
fn unstrained_section_carries_no_load() {
    let (f, m) = sectional_loads(&Vector3::zeros(), &Vector3::zeros(), &CrossSection::baseline());
    assert_eq!(f, Vector3::zeros());
    assert_eq!(m, Vector3::zeros());
}

#[test]
fn bending_and_torsion_moments_of_the_baseline_section() {
    let sec = CrossSection::baseline();
    let (_, m) = sectional_loads(&Vector3::zeros(), &Vector3::new(0.0, 1e-3, 0.0), &sec);
    assert_relative_eq!(m, Vector3::new(0.0, 20.0, 0.0), epsilon = 1e-12);
    let (_, m) = sectional_loads(&Vector3::zeros(), &Vector3::new(1e-3, 0.0, 0.0), &sec);
    assert_relative_eq!(m, Vector3::new(10.0, 0.0, 0.0), epsilon = 1e-12);
}

#[test]
fn stiffness_scaling() {
    let sec = CrossSection::baseline();
    assert_eq!(scale_stiffness(&sec, 1.0).unwrap(), sec);
    assert_relative_eq!(scale_stiffness(&sec, 4.0).unwrap().ei2, 5e3);
    assert_relative_eq!(scale_stiffness(&sec, 0.001).unwrap().ei2, 2e7, max_relative = 1e-12);
    let soft = scale_stiffness(&sec, 4.0).unwrap();
    assert_eq!(soft.mu, sec.mu);
    assert_eq!(soft.j_t, sec.j_t);
    assert!(scale_stiffness(&sec, 0.0).is_err());
    assert!(scale_stiffness(&sec, -1.0).is_err());
    assert!(scale_stiffness(&sec, f64::NAN).is_err());
}

// ─── assembly ────────────────────────────────────────────────────────────────

#[test]
fn geometric_stiffness_vanishes_at_the_reference_state() {
    let mesh = BeamMesh::cantilever(16.0, 11, &CrossSection::baseline()).unwrap();
    let sys = assemble(&mesh, &at_rest(&mesh), 1.0).unwrap();
    assert!(sys.k_g.norm() <= 1e-9 * sys.k_e.norm());
    assert!((sys.k_tan() - &sys.k_e).norm() <= 1e-9 * sys.k_e.norm());
    assert!(sys.f_int.norm() < 1e-9);
    assert_relative_eq!(sys.k_e.clone(), sys.k_e.transpose(), max_relative = 1e-10);
}

#[test]
fn tangent_matches_finite_difference_of_internal_force() {
    let mesh = BeamMesh::cantilever(16.0, 7, &CrossSection::baseline()).unwrap();
    let map = mesh.dof_map();
    let x0 = DVector::from_fn(map.n, |i, _| 0.02 * ((i as f64) * 0.7).sin());
    let sys = assemble(&mesh, &map.unpack(&x0), 1.0).unwrap();
    let k = sys.k_tan();
    let h = 1e-6;
    for j in (0..map.n).step_by(5) {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = assemble(&mesh, &map.unpack(&xp), 1.0).unwrap().f_int;
        let fm = assemble(&mesh, &map.unpack(&xm), 1.0).unwrap().f_int;
        let fd = (fp - fm) / (2.0 * h);
        let col = k.column(j);
        assert!((&fd - col).norm() <= 1e-5 * col.norm().max(1.0), "column {j}");
    }
}

// ─── statics ─────────────────────────────────────────────────────────────────

#[test]
fn zero_load_leaves_the_beam_undeformed() {
    let mesh = BeamMesh::cantilever(16.0, 21, &CrossSection::baseline()).unwrap();
    let load = UniformLoad {
        force: Vector3::zeros(),
        follower: false,
    };
    let sol = static_solve(&mesh, &load, 1.0, &StaticOptions::default()).unwrap();
    assert!(sol.states.iter().all(|s| s.u.norm() < 1e-14 && s.psi.norm() < 1e-14));
}

#[test]
fn linear_tip_deflection_matches_cantilever_formula() {
    let (l, w, ei) = (16.0, 1.0, 2e4);
    let mesh = BeamMesh::cantilever(l, 51, &CrossSection::baseline()).unwrap();
    let load = UniformLoad {
        force: Vector3::new(0.0, 0.0, -w),
        follower: false,
    };
    let states = static_solve_linear(&mesh, &load, 1.0).unwrap();
    let tip = -states.last().unwrap().u.z;
    assert_relative_eq!(tip, w * l.powi(4) / (8.0 * ei), max_relative = 1e-2);
}

#[test]
fn small_loads_give_linear_response() {
    let mesh = BeamMesh::cantilever(16.0, 31, &CrossSection::baseline()).unwrap();
    let load = UniformLoad {
        force: Vector3::new(0.0, 0.0, -0.01),
        follower: false,
    };
    let lin = static_solve_linear(&mesh, &load, 1.0).unwrap();
    let non = static_solve(&mesh, &load, 1.0, &StaticOptions::default()).unwrap();
    let (a, b) = (lin.last().unwrap().u.z, non.states.last().unwrap().u.z);
    assert_relative_eq!(a, b, max_relative = 1e-3);
}

#[test]
fn large_loads_stiffen_the_nonlinear_solution() {
    let mesh = BeamMesh::cantilever(16.0, 51, &CrossSection::baseline()).unwrap();
    let load = UniformLoad {
        force: Vector3::new(0.0, 0.0, -12.0),
        follower: false,
    };
    let lin = static_solve_linear(&mesh, &load, 1.0).unwrap();
    let non = static_solve(&mesh, &load, 1.0, &StaticOptions::default()).unwrap();
    let tip_lin = -lin.last().unwrap().u.z;
    let tip_non = -non.states.last().unwrap().u.z;
    assert!(tip_lin / 16.0 > 0.15);
    assert!(tip_non < 0.98 * tip_lin, "{tip_non} vs {tip_lin}");
    assert!(non.residual_history.last().unwrap() < &1e-6);
}

// ─── modes ───────────────────────────────────────────────────────────────────

#[test]
fn baseline_cantilever_modes() {
    let mesh = BeamMesh::cantilever(16.0, 51, &CrossSection::baseline()).unwrap();
    let modes = modal_frequencies(&mesh, 1.0, 4).unwrap();
    assert_relative_eq!(modes[0].omega, 2.24, max_relative = 1e-2);
    assert_relative_eq!(modes[2].omega, 31.04, max_relative = 1e-2);
    assert_eq!(modes[0].label.kind, ModeKind::OutOfPlaneBending);
    assert_eq!(modes[2].label.kind, ModeKind::Torsion);
    assert!(modes.windows(2).all(|w| w[0].omega <= w[1].omega));
}

#[test]
fn softer_wing_lowers_frequencies_by_root_sigma() {
    let mesh = BeamMesh::cantilever(16.0, 31, &CrossSection::baseline()).unwrap();
    let stiff = modal_frequencies(&mesh, 1.0, 3).unwrap();
    let soft = modal_frequencies(&mesh, 4.0, 3).unwrap();
    for (a, b) in stiff.iter().zip(&soft) {
        assert_relative_eq!(b.omega, a.omega / 2.0, max_relative = 1e-9);
    }
}
