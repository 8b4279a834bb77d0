use aeroflex::analysis::{
    cantilever_model, eigen_modes, flight_modes, flutter_speed, gust_from_trim, lift_rotation_diagnostics,
    linearize, rigid_trim_alpha, run_parallel, sigma_sweep, trim_solve, FlightModeKind, Linearized, CHANNELS,
};
use aeroflex::aero::GustSpec;
use aeroflex::beam::{modal_frequencies, BeamMesh, CrossSection, NodalState};
use aeroflex::rigid::RigidState;
use aeroflex::{Error, FlutterBasis, RunConfig, TrimMode};
use approx::assert_relative_eq;
use nalgebra::{Complex, DMatrix, Vector3};

fn coarse_config(elements: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.aircraft.elements_per_side = elements;
    cfg
}

// ─── eigen-solution ──────────────────────────────────────────────────────────

/// Roots of `λ² + cλ + k = 0`, upper-half-plane member first.
fn quadratic_roots(c: f64, k: f64) -> [Complex<f64>; 2] {
    let d = Complex::new(c * c - 4.0 * k, 0.0).sqrt();
    [(-c + d) / 2.0, (-c - d) / 2.0]
}

#[test]
fn spring_mass_damper_fixture_has_closed_form_roots() {
    // two decoupled oscillators hidden behind an orthogonal change of basis,
    // plus one first-order state driven by (but not feeding back into) them
    let th: f64 = 0.6;
    let q = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    let (c_d, k_d) = ([0.4, 3.0], [9.0, 1.5]);
    let c2 = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&c_d)) * q.transpose();
    let k2 = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&k_d)) * q.transpose();
    let mut m = DMatrix::zeros(3, 3);
    let mut c = DMatrix::zeros(3, 3);
    let mut k = DMatrix::zeros(3, 3);
    m.view_mut((0, 0), (2, 2)).copy_from(&DMatrix::identity(2, 2));
    c.view_mut((0, 0), (2, 2)).copy_from(&c2);
    k.view_mut((0, 0), (2, 2)).copy_from(&k2);
    c[(2, 2)] = 1.0;
    k[(2, 2)] = 7.0;
    k[(2, 0)] = 0.3;
    c[(2, 1)] = -0.2;
    let lin = Linearized {
        m,
        c,
        k,
        second_order: vec![true, true, false],
    };
    let modes = eigen_modes(&lin).unwrap();
    let mut oracle: Vec<Complex<f64>> = vec![Complex::new(-7.0, 0.0)];
    for i in 0..2 {
        let r = quadratic_roots(c_d[i], k_d[i]);
        if r[0].im.abs() > 0.0 {
            oracle.push(if r[0].im > 0.0 { r[0] } else { r[1] });
        } else {
            oracle.extend(r);
        }
    }
    assert_eq!(modes.len(), oracle.len());
    for o in &oracle {
        let best = modes.iter().map(|m| (m.lambda - o).norm()).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-10, "root {o} missing: {:?}", modes.iter().map(|m| m.lambda).collect::<Vec<_>>());
    }
    assert!(modes.windows(2).all(|w| w[0].lambda.im.abs() <= w[1].lambda.im.abs()));
}

#[test]
fn undamped_beam_in_vacuum_has_imaginary_eigenvalues() {
    let cfg = coarse_config(20);
    let mut model = cantilever_model(&cfg, 1.0, 25.0, 0.0, false).unwrap();
    model.spec.aero = false;
    let eq = model.rest_snapshot(&RigidState::default());
    let full = linearize(&model, &eq).unwrap();
    let (m, k) = full.second_order_block();
    let n = m.nrows();
    let lin = Linearized {
        m,
        c: DMatrix::zeros(n, n),
        k,
        second_order: vec![true; n],
    };
    let modes = eigen_modes(&lin).unwrap();
    let reference = modal_frequencies(&model.mesh, 1.0, 4).unwrap();
    for (mode, r) in modes.iter().zip(&reference) {
        assert!(mode.lambda.re.abs() < 1e-6 * r.omega, "{}", mode.lambda);
        assert_relative_eq!(mode.lambda.im, r.omega, max_relative = 1e-6);
    }
}

#[test]
fn linearization_rejects_non_equilibria() {
    let cfg = coarse_config(4);
    let model = cantilever_model(&cfg, 1.0, 25.0, 0.05, false).unwrap();
    let rest = model.rest_snapshot(&RigidState::default());
    assert!(matches!(linearize(&model, &rest), Err(Error::InvalidInput(_))));
}

// ─── lift-vector rotation ────────────────────────────────────────────────────

fn full_wing() -> BeamMesh {
    BeamMesh::full_wing(16.0, 8, &CrossSection::baseline()).unwrap()
}

/// Both semi-spans rotated tip-up by `gamma` about the root.
fn dihedral_states(mesh: &BeamMesh, gamma: f64) -> Vec<NodalState> {
    mesh.nodes
        .iter()
        .map(|x| {
            let bent = Vector3::new(x.x, x.y * gamma.cos(), -x.y.abs() * gamma.sin());
            NodalState::at_rest(bent - x, Vector3::zeros())
        })
        .collect()
}

#[test]
fn undeformed_wing_loses_no_lift() {
    let mesh = full_wing();
    let lifts = vec![10.0; mesh.elements.len()];
    let d = lift_rotation_diagnostics(&mesh, &dihedral_states(&mesh, 0.0), &lifts).unwrap();
    assert_eq!(d.f_z_deficit, 0.0);
    assert_eq!(d.f_y, 0.0);
    assert_relative_eq!(d.f_z, 320.0, max_relative = 1e-12);
}

#[test]
fn uniform_dihedral_deficit_matches_closed_form() {
    let mesh = full_wing();
    let lifts = vec![10.0; mesh.elements.len()];
    let g = 10f64.to_radians();
    let d = lift_rotation_diagnostics(&mesh, &dihedral_states(&mesh, g), &lifts).unwrap();
    let total = d.f_z + d.f_z_deficit;
    assert_relative_eq!(d.f_z_deficit / total, 1.0 - g.cos(), max_relative = 1e-12);
    assert_relative_eq!(d.f_z_deficit / total, 0.0152, epsilon = 1e-4);
    assert!(d.gamma.iter().all(|v| (v - g).abs() < 1e-12));
    // symmetric: the semi-span side forces cancel, each pointing inboard
    assert!(d.f_y.abs() < 1e-12 * total);
    assert!(d.f_y_right < 0.0 && d.f_y_left > 0.0);
    assert_relative_eq!(d.f_y_left, 160.0 * g.sin(), max_relative = 1e-12);
}

#[test]
fn small_dihedral_deficit_grows_quadratically() {
    let mesh = full_wing();
    let lifts = vec![1.0; mesh.elements.len()];
    for g in [1e-3, 1e-2, 5e-2] {
        let d = lift_rotation_diagnostics(&mesh, &dihedral_states(&mesh, g), &lifts).unwrap();
        let ratio = d.f_z_deficit / (d.f_z + d.f_z_deficit);
        assert!((ratio - g * g / 2.0).abs() <= g.powi(4) / 24.0 * 1.01 + 1e-15, "Γ = {g}");
    }
}

#[test]
fn lift_rotation_checks_dimensions() {
    let mesh = full_wing();
    assert!(lift_rotation_diagnostics(&mesh, &dihedral_states(&mesh, 0.0), &[1.0]).is_err());
}

// ─── trim ────────────────────────────────────────────────────────────────────

#[test]
fn rigid_trim_matches_closed_form() {
    let cfg = RunConfig::default();
    let oracle = 726.0 / (27.8 * 32.0 * 2.0 * std::f64::consts::PI);
    assert_relative_eq!(rigid_trim_alpha(&cfg), oracle, max_relative = 5e-3);
    let t = trim_solve(&cfg, 25.0, 1.0, TrimMode::Rigid).unwrap();
    assert!(t.converged, "{:?}", t.residuals);
    assert!(t.residuals.0 < 1e-6 && t.residuals.1 < 1e-6);
    assert_relative_eq!(t.alpha_trim, 0.130, max_relative = 0.03);
    assert!(t.thrust_trim > 0.0);
}

#[test]
fn flexible_wing_needs_more_incidence() {
    let cfg = RunConfig::default();
    let rigid = trim_solve(&cfg, 25.0, 1.0, TrimMode::Rigid).unwrap();
    let flex = trim_solve(&cfg, 25.0, 1.0, TrimMode::Flexible).unwrap();
    assert!(flex.converged);
    assert!(flex.alpha_trim > rigid.alpha_trim, "{} vs {}", flex.alpha_trim, rigid.alpha_trim);
    assert!(flex.tip_deflection > 1.0);
}

#[test]
fn trim_beyond_maximum_lift_is_flagged() {
    let cfg = RunConfig::default();
    assert!(matches!(trim_solve(&cfg, 5.0, 1.0, TrimMode::Rigid), Err(Error::TrimUnreachable { .. })));
    assert!(trim_solve(&cfg, 25.0, -1.0, TrimMode::Flexible).is_err());
}

// ─── flutter ─────────────────────────────────────────────────────────────────

#[test]
fn baseline_flutter_speed_and_frequency() {
    let cfg = RunConfig::default();
    let f = flutter_speed(&cfg, 1.0, FlutterBasis::Undeformed).unwrap();
    assert_relative_eq!(f.v_f, 31.2, max_relative = 0.05);
    assert!((f.flutter_frequency - 22.0).abs() <= 3.0, "ω_f = {}", f.flutter_frequency);
    for &(v, re) in &f.damping_trace {
        if v <= f.v_f - 0.05 {
            assert!(re < 0.0, "unstable at {v}");
        } else if v >= f.v_f + 0.05 {
            assert!(re > 0.0, "stable at {v}");
        }
    }
    assert!(f.damping_trace.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn softer_wing_flutters_at_lower_speed() {
    let cfg = RunConfig::default();
    let f1 = flutter_speed(&cfg, 1.0, FlutterBasis::Undeformed).unwrap();
    let f4 = flutter_speed(&cfg, 4.0, FlutterBasis::Undeformed).unwrap();
    assert_relative_eq!(f4.v_f, f1.v_f / 2.0, max_relative = 0.02);
    assert!(flutter_speed(&cfg, 0.0, FlutterBasis::Undeformed).is_err());
}

#[test]
fn no_crossing_in_range_is_reported() {
    let mut cfg = RunConfig::default();
    cfg.analysis.flutter.v_max = 20.0;
    assert!(matches!(
        flutter_speed(&cfg, 1.0, FlutterBasis::Undeformed),
        Err(Error::NoFlutter { .. })
    ));
}

// ─── flight modes ────────────────────────────────────────────────────────────

#[test]
fn stiff_aircraft_has_a_lightly_damped_phugoid() {
    let cfg = RunConfig::default();
    let trim = trim_solve(&cfg, 25.0, 0.001, TrimMode::Flexible).unwrap();
    let modes = flight_modes(&cfg, &trim).unwrap();
    let phugoid = modes.iter().find(|m| m.kind == FlightModeKind::Phugoid).expect("phugoid");
    let zeta = -phugoid.lambda.re / phugoid.lambda.norm();
    assert!(zeta > 0.0 && zeta < 0.1, "ζ = {zeta}");
    let short = modes.iter().find(|m| m.kind == FlightModeKind::ShortPeriod).expect("short period");
    assert!(short.lambda.re < 0.0);
    assert_eq!(modes.iter().filter(|m| m.kind == FlightModeKind::Phugoid).count(), 1);
}

// ─── time simulation ─────────────────────────────────────────────────────────

#[test]
fn zero_amplitude_gust_leaves_channels_constant() {
    let mut cfg = coarse_config(4);
    cfg.gust = GustSpec::none();
    cfg.analysis.horizon = 0.5;
    let trim = trim_solve(&cfg, 25.0, 1.0, TrimMode::Flexible).unwrap();
    let (hist, err) = gust_from_trim(&cfg, &trim).unwrap();
    assert!(err.is_none());
    assert_eq!(hist.rows.len(), (0.5 / cfg.solver.dt).round() as usize + 1);
    for k in 1..CHANNELS.len() {
        let scale = hist.rows[0][k].abs().max(1.0);
        // altitude drifts only through the trim residual
        assert!(hist.peak_change(k) < 1e-6 * scale, "{}: {}", CHANNELS[k], hist.peak_change(k));
    }
}

#[test]
fn gust_raises_the_root_moment() {
    let mut cfg = coarse_config(4);
    cfg.analysis.horizon = 1.5;
    let trim = trim_solve(&cfg, 25.0, 1.0, TrimMode::Flexible).unwrap();
    let (hist, err) = gust_from_trim(&cfg, &trim).unwrap();
    assert!(err.is_none());
    assert!(hist.peak_change(2) > 1.0);
    assert!(hist.rows.windows(2).all(|w| w[1][0] > w[0][0]));
}

// ─── sweep ───────────────────────────────────────────────────────────────────

#[test]
fn parallel_results_arrive_in_order() {
    let mut seen = Vec::new();
    let out = run_parallel(17, 4, |i| i * i, |i, v| seen.push((i, *v)));
    assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
    assert_eq!(seen, (0..17).map(|i| (i, i * i)).collect::<Vec<_>>());
    assert!(run_parallel(0, 3, |i| i, |_, _| {}).is_empty());
}

#[test]
fn sweep_is_independent_of_the_worker_count() {
    let mut cfg = coarse_config(3);
    cfg.analysis.horizon = 0.3;
    let sigmas = [0.5, 1.0];
    let mut order = Vec::new();
    let serial = sigma_sweep(&cfg, &sigmas, 1, |r| order.push(r.sigma));
    let parallel = sigma_sweep(&cfg, &sigmas, 2, |_| {});
    assert_eq!(order, sigmas);
    assert_eq!(format!("{serial:?}"), format!("{parallel:?}"));
    for r in &serial {
        assert!(r.alpha_trim.is_some(), "{:?}", r.failures);
        assert!(r.gust_peak_root_moment.is_some(), "{:?}", r.failures);
    }
}
