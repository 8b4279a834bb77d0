//! Higher-level procedures built on the coupled model: trim, linearization
//! and eigen-stability, flutter-boundary search, lift-vector-rotation
//! diagnostics, flight-mode classification, gust simulation and the σ sweep.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{Complex, DMatrix, DVector, Vector3};
use serde::Serialize;

use crate::beam::{BeamMesh, NodalState};
use crate::config::{FlutterBasis, RunConfig, TrimMode};
use crate::coupled::{
    STAGNATION_TOL,
    newmark_newton_step, CoupledModel, CoupledState, ModelSpec, RigidMode, Snapshot, SolverSettings, StaticSettings,
    TailModel,
};
use crate::error::{Error, Result};
use crate::linalg::{general_eigen, sym_generalized_eigen};
use crate::rigid::{quat_to_matrix_unchecked, RigidState, GRAVITY};

/// Largest lift coefficient a trim may require.
pub const CL_MAX: f64 = 1.2;

/// Stiffness parameter used to represent a rigid structure.
pub const RIGID_SIGMA: f64 = 1e-4;

const TRIM_MAX_ITER: usize = 30;
/// Angle-of-attack update [rad] below which the trim iteration has stagnated.
const TRIM_STEP_TOL: f64 = 1e-8;
/// Relative lift and moment residual a converged trim must satisfy.
const TRIM_TOL: f64 = 1e-6;

fn static_settings() -> StaticSettings {
    StaticSettings {
        rel_tol: 1e-9,
        ..StaticSettings::default()
    }
}

fn model_spec(cfg: &RunConfig, gravity: bool, point_mass: f64, tail: Option<TailModel>) -> ModelSpec {
    ModelSpec {
        chord: cfg.aircraft.chord,
        ea_offset: cfg.aircraft.ea_offset,
        rho: cfg.flight.rho,
        consts: cfg.aero.clone(),
        aero: true,
        gravity,
        point_mass,
        tail,
    }
}

/// Clamped-root semi-span wing in a uniform stream of speed `u` at angle of
/// attack `alpha`.
pub fn cantilever_model(cfg: &RunConfig, sigma: f64, u: f64, alpha: f64, gravity: bool) -> Result<CoupledModel> {
    let a = &cfg.aircraft;
    let mesh = BeamMesh::cantilever(a.semi_span, a.elements_per_side + 1, &a.section())?.scaled(sigma)?;
    let rs = RigidState {
        v_b: Vector3::new(u * alpha.cos(), 0.0, u * alpha.sin()),
        ..RigidState::default()
    };
    CoupledModel::new(mesh, model_spec(cfg, gravity, 0.0, None), RigidMode::Prescribed(rs), u)
}

/// Free-flying aircraft: full-span wing, fuselage point mass and idealized
/// tail, untrimmed.
pub fn aircraft_model(cfg: &RunConfig, sigma: f64, u: f64) -> Result<CoupledModel> {
    let a = &cfg.aircraft;
    let mesh = BeamMesh::full_wing(a.semi_span, a.elements_per_side, &a.section())?.scaled(sigma)?;
    let tail = TailModel {
        arm: a.tail.arm,
        area: a.tail.area,
        lift_slope: a.tail.lift_slope,
        alpha_ref: 0.0,
        trim_load: 0.0,
    };
    CoupledModel::new(mesh, model_spec(cfg, true, a.fuselage_mass, Some(tail)), RigidMode::Free, u)
}

fn set_rigid(model: &CoupledModel, snap: &mut Snapshot, rs: &RigidState) {
    if let Some(r) = model.layout.rigid_base {
        snap.x.fixed_rows_mut::<3>(r).copy_from(&rs.v_b);
        snap.x.fixed_rows_mut::<3>(r + 3).copy_from(&rs.omega_b);
        snap.x.fixed_rows_mut::<4>(r + 6).copy_from(&rs.q);
        snap.x.fixed_rows_mut::<3>(r + 10).copy_from(&rs.p_cg);
        // steady motion: the only nonzero rate is the CG velocity
        for i in 0..13 {
            snap.xd[r + i] = 0.0;
        }
        let pd = quat_to_matrix_unchecked(&rs.q).transpose() * rs.v_b;
        snap.xd.fixed_rows_mut::<3>(r + 10).copy_from(&pd);
    }
}

/// Steady trim state of the free aircraft.
#[derive(Clone, Debug)]
pub struct TrimResult {
    pub alpha_trim: f64,
    pub thrust_trim: f64,
    /// Deformed structural state at trim.
    pub eta_trim: Vec<NodalState>,
    /// Tail lift closing the pitching moment [N] (positive up).
    pub tail_load: f64,
    pub converged: bool,
    /// `(|L − W|/W, |M_cg|/(W·c))` at the final iterate.
    pub residuals: (f64, f64),
    pub iterations: usize,
    /// Lift coefficient required for level flight.
    pub cl_required: f64,
    /// Vertical displacement of the wing tip (up positive) [m].
    pub tip_deflection: f64,
    /// Trimmed model (thrust and tail set) and its state.
    pub model: CoupledModel,
    pub state: Snapshot,
}

/// Serializable summary of a [`TrimResult`].
#[derive(Clone, Debug, Serialize)]
pub struct TrimReport {
    pub sigma: f64,
    pub airspeed: f64,
    pub alpha_trim: f64,
    pub thrust_trim: f64,
    pub tail_load: f64,
    pub converged: bool,
    pub lift_residual: f64,
    pub moment_residual: f64,
    pub iterations: usize,
    pub cl_required: f64,
    pub tip_deflection: f64,
    pub tip_deflection_over_span: f64,
}

impl TrimResult {
    pub fn report(&self, sigma: f64) -> TrimReport {
        TrimReport {
            sigma,
            airspeed: self.model.flight_speed,
            alpha_trim: self.alpha_trim,
            thrust_trim: self.thrust_trim,
            tail_load: self.tail_load,
            converged: self.converged,
            lift_residual: self.residuals.0,
            moment_residual: self.residuals.1,
            iterations: self.iterations,
            cl_required: self.cl_required,
            tip_deflection: self.tip_deflection,
            tip_deflection_over_span: self.tip_deflection / self.model.mesh.nodes.last().map_or(1.0, |p| p.y.abs()),
        }
    }
}

struct TrimEval {
    snap: Snapshot,
    /// Body-axis force balance without thrust: `[x, z]`.
    force: [f64; 2],
    pitch_moment: f64,
    aero_force: Vector3<f64>,
    rz: nalgebra::Matrix3<f64>,
}

impl TrimEval {
    /// Vertical (inertial, up) component of the aerodynamic plus thrust force.
    fn lift(&self, thrust: f64) -> f64 {
        -(self.rz.transpose() * (self.aero_force + Vector3::new(thrust, 0.0, 0.0))).z
    }
}

fn trim_eval(model: &CoupledModel, u: f64, alpha: f64, altitude: f64, start: &Snapshot) -> Result<TrimEval> {
    let rs = RigidState::level_flight(u, alpha, altitude);
    let mut snap = start.clone();
    set_rigid(model, &mut snap, &rs);
    let mut eq = model.static_equilibrium(&snap, &static_settings())?;
    set_rigid(model, &mut eq, &rs);
    let (f, m) = model.aero_resultants(&eq, 0.0);
    let rz = quat_to_matrix_unchecked(&rs.q);
    let grav = rz * Vector3::new(0.0, 0.0, model.mass.m * GRAVITY);
    Ok(TrimEval {
        snap: eq,
        force: [grav.x + f.x, grav.z + f.z],
        pitch_moment: m.y,
        aero_force: f,
        rz,
    })
}

/// Level-flight trim at speed `u`: Newton on `(α, T)` enforcing `L = W` and
/// zero net body force, with the static aeroelastic state reconverged at every
/// iterate (flexible mode) and the idealized tail closing `M_cg = 0`.
pub fn trim_solve(cfg: &RunConfig, u: f64, sigma: f64, mode: TrimMode) -> Result<TrimResult> {
    if !(u > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("trim needs positive speed and σ, got U = {u}, σ = {sigma}")));
    }
    let s_eff = match mode {
        TrimMode::Rigid => RIGID_SIGMA,
        TrimMode::Flexible => sigma,
    };
    let mut model = aircraft_model(cfg, s_eff, u)?;
    let w = model.mass.m * GRAVITY;
    let q_inf = 0.5 * cfg.flight.rho * u * u;
    let area = cfg.aircraft.wing_area();
    let cl_required = w / (q_inf * area);
    if cl_required > CL_MAX {
        return Err(Error::TrimUnreachable { cl: cl_required });
    }
    let alt = cfg.flight.altitude;
    let mut alpha = cl_required / cfg.aero.cl_alpha;
    let mut snap = model.rest_snapshot(&RigidState::level_flight(u, alpha, alt));
    let mut ev = trim_eval(&model, u, alpha, alt, &snap)?;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..TRIM_MAX_ITER {
        iterations = it + 1;
        // T enters the body-x balance linearly with unit coefficient and does
        // not affect the structure, so the Jacobian is block triangular.
        if ev.force[1].abs() < 1e-9 * w {
            converged = true;
            break;
        }
        let h = 1e-6;
        let evp = trim_eval(&model, u, alpha + h, alt, &ev.snap)?;
        let dfz = (evp.force[1] - ev.force[1]) / h;
        if dfz.abs() < 1e-300 {
            return Err(Error::Singular("trim Jacobian".into()));
        }
        let step = (-ev.force[1] / dfz).clamp(-0.1, 0.1);
        // the flexible residual has a round-off floor; an update this small
        // means the iteration has stagnated on it
        if step.abs() < TRIM_STEP_TOL {
            converged = true;
            break;
        }
        alpha += step;
        snap = ev.snap.clone();
        let previous = ev.force[1].abs();
        ev = trim_eval(&model, u, alpha, alt, &snap)?;
        // inside the acceptance tolerance and no longer contracting: the
        // residual sits on the noise floor of the inner static solve
        if ev.force[1].abs() < TRIM_TOL * w && ev.force[1].abs() > 0.5 * previous {
            converged = true;
            break;
        }
    }
    let thrust = -ev.force[0];
    model.thrust = thrust;
    let arm = cfg.aircraft.tail.arm;
    let tail_load = ev.pitch_moment / arm;
    if let Some(t) = model.spec.tail.as_mut() {
        t.alpha_ref = alpha;
        t.trim_load = tail_load;
    }
    let tail_moment = model
        .spec
        .tail
        .as_ref()
        .map_or(0.0, |t| t.moment(&Vector3::new(u * alpha.cos(), 0.0, u * alpha.sin()), &Vector3::zeros(), cfg.flight.rho));
    let m_res = (ev.pitch_moment + tail_moment).abs() / (w * cfg.aircraft.chord);
    let l_res = (ev.lift(thrust) - w).abs() / w;
    let state = ev.snap;
    let eta_trim = model.nodal_states(&state);
    let tip = model.tip_deflection(&state);
    Ok(TrimResult {
        alpha_trim: alpha,
        thrust_trim: thrust,
        eta_trim,
        tail_load,
        converged: converged && l_res < TRIM_TOL && m_res < TRIM_TOL,
        residuals: (l_res, m_res),
        iterations,
        cl_required,
        tip_deflection: tip,
        model,
        state,
    })
}

/// Closed-form rigid trim angle `W / (q∞ S C_Lα)`.
pub fn rigid_trim_alpha(cfg: &RunConfig) -> f64 {
    let u = cfg.flight.u;
    let w = cfg.aircraft.total_mass() * GRAVITY;
    w / (0.5 * cfg.flight.rho * u * u * cfg.aircraft.wing_area() * cfg.aero.cl_alpha)
}

/// Tangent matrices of the coupled residual about an equilibrium.
///
/// Rows and columns use the model's solver ordering; `second_order[i]`
/// marks unknowns whose second derivative appears (structural DOFs).
#[derive(Clone, Debug)]
pub struct Linearized {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub second_order: Vec<bool>,
}

/// Linearizes the model about `eq`, which must satisfy the residual.
pub fn linearize(model: &CoupledModel, eq: &Snapshot) -> Result<Linearized> {
    let ctx = model.default_context(eq, 0.0);
    let (g, s) = model.residual_with_scale(eq, &ctx)?;
    let rn = g.norm();
    if rn > STAGNATION_TOL * s.norm() + 1e-10 {
        return Err(Error::InvalidInput(format!(
            "linearization point is not an equilibrium (residual {rn:.3e}, scale {:.3e})",
            s.norm()
        )));
    }
    let (m, c, k) = model.tangent_matrices(eq, &ctx);
    Ok(Linearized {
        m,
        c,
        k,
        second_order: model.layout.second_order.clone(),
    })
}

/// First-order descriptor form `E ż = A z` with `z = [ξ, ξ̇, x₁]`, where
/// `ξ` are (possibly modal) second-order coordinates and `x₁` the retained
/// first-order unknowns.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Number of second-order coordinates `ξ`.
    pub n2: usize,
    /// Solver indices of the first-order unknowns, in `z` order.
    pub first_order: Vec<usize>,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    /// Position in `z` of solver unknown `global` (first-order only).
    pub fn index_of(&self, global: usize) -> Option<usize> {
        self.first_order.iter().position(|&g| g == global).map(|p| 2 * self.n2 + p)
    }
}

impl Linearized {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// Second-order block of the mass and stiffness matrices.
    pub fn second_order_block(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let i2: Vec<usize> = (0..self.n()).filter(|&i| self.second_order[i]).collect();
        (sub(&self.m, &i2, &i2), sub(&self.k, &i2, &i2))
    }

    /// Builds the descriptor system, optionally projecting the second-order
    /// unknowns onto the columns of `basis` and dropping the listed
    /// first-order unknowns.
    pub fn state_space(&self, basis: Option<&DMatrix<f64>>, drop: &[usize]) -> Result<StateSpace> {
        let n = self.n();
        let i2: Vec<usize> = (0..n).filter(|&i| self.second_order[i]).collect();
        let i1: Vec<usize> = (0..n).filter(|&i| !self.second_order[i] && !drop.contains(&i)).collect();
        let phi = match basis {
            Some(b) => {
                if b.nrows() != i2.len() {
                    return Err(Error::DimensionMismatch {
                        expected: i2.len(),
                        got: b.nrows(),
                    });
                }
                b.clone()
            }
            None => DMatrix::identity(i2.len(), i2.len()),
        };
        let r = phi.ncols();
        let n1 = i1.len();
        let pt = phi.transpose();
        let m22 = &pt * sub(&self.m, &i2, &i2) * &phi;
        let c22 = &pt * sub(&self.c, &i2, &i2) * &phi;
        let k22 = &pt * sub(&self.k, &i2, &i2) * &phi;
        let c21 = &pt * sub(&self.c, &i2, &i1);
        let k21 = &pt * sub(&self.k, &i2, &i1);
        let m12 = sub(&self.m, &i1, &i2) * &phi;
        let c12 = sub(&self.c, &i1, &i2) * &phi;
        let k12 = sub(&self.k, &i1, &i2) * &phi;
        let c11 = sub(&self.c, &i1, &i1);
        let k11 = sub(&self.k, &i1, &i1);
        let nz = 2 * r + n1;
        let mut e = DMatrix::zeros(nz, nz);
        let mut a = DMatrix::zeros(nz, nz);
        for i in 0..r {
            e[(i, i)] = 1.0;
            a[(i, r + i)] = 1.0;
        }
        e.view_mut((r, r), (r, r)).copy_from(&m22);
        e.view_mut((r, 2 * r), (r, n1)).copy_from(&c21);
        e.view_mut((2 * r, r), (n1, r)).copy_from(&m12);
        e.view_mut((2 * r, 2 * r), (n1, n1)).copy_from(&c11);
        a.view_mut((r, 0), (r, r)).copy_from(&(-k22));
        a.view_mut((r, r), (r, r)).copy_from(&(-c22));
        a.view_mut((r, 2 * r), (r, n1)).copy_from(&(-k21));
        a.view_mut((2 * r, 0), (n1, r)).copy_from(&(-k12));
        a.view_mut((2 * r, r), (n1, r)).copy_from(&(-c12));
        a.view_mut((2 * r, 2 * r), (n1, n1)).copy_from(&(-k11));
        Ok(StateSpace {
            e,
            a,
            n2: r,
            first_order: i1,
        })
    }
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Complex eigenvalue with its state-space eigenvector.
#[derive(Clone, Debug)]
pub struct EigenMode {
    pub lambda: Complex<f64>,
    pub vector: DVector<Complex<f64>>,
}

impl EigenMode {
    /// Damped natural frequency [rad/s].
    pub fn frequency(&self) -> f64 {
        self.lambda.im.abs()
    }
}

/// Eigen-solution of a descriptor system: eigenvalues sorted by `|Im λ|`
/// (then by real part), one member of each conjugate pair kept.
pub fn eigen_modes_of(ss: &StateSpace) -> Result<Vec<EigenMode>> {
    let lu = ss.e.clone().lu();
    let b = lu
        .solve(&ss.a)
        .ok_or_else(|| Error::Singular("descriptor mass partition is singular".into()))?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("descriptor mass partition is singular".into()));
    }
    let (vals, vecs) = general_eigen(&b)?;
    let mut modes: Vec<EigenMode> = vals
        .iter()
        .enumerate()
        .filter(|(_, l)| l.im >= -1e-9 * l.norm().max(1e-12))
        .map(|(j, &l)| EigenMode {
            lambda: if l.im.abs() <= 1e-9 * l.norm().max(1e-12) { Complex::new(l.re, 0.0) } else { l },
            vector: vecs.column(j).into_owned(),
        })
        .collect();
    modes.sort_by(|p, q| {
        p.lambda
            .im
            .abs()
            .total_cmp(&q.lambda.im.abs())
            .then(p.lambda.re.total_cmp(&q.lambda.re))
    });
    Ok(modes)
}

/// Eigenvalues of the full (unreduced) linearization.
pub fn eigen_modes(lin: &Linearized) -> Result<Vec<EigenMode>> {
    eigen_modes_of(&lin.state_space(None, &[])?)
}

/// Lowest `n` structural modes of the second-order block (aerodynamics
/// excluded), used as a reduction basis. Returns `(ω, Φ)`.
pub fn structural_basis(model: &CoupledModel, eq: &Snapshot, n: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut dry = model.clone();
    dry.spec.aero = false;
    let ctx = dry.default_context(eq, 0.0);
    let (m, _, k) = dry.tangent_matrices(eq, &ctx);
    let i2: Vec<usize> = (0..model.n()).filter(|&i| model.layout.second_order[i]).collect();
    let m2 = sub(&m, &i2, &i2);
    let k2 = sub(&k, &i2, &i2);
    let m2 = (&m2 + m2.transpose()) * 0.5;
    let k2 = (&k2 + k2.transpose()) * 0.5;
    let (vals, phi) = sym_generalized_eigen(&k2, &m2)?;
    let n = n.min(i2.len());
    let omegas = vals[..n].iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok((omegas, phi.columns(0, n).into_owned()))
}

/// Solver indices of the Küssner (gust) lag states.
pub fn gust_state_indices(model: &CoupledModel) -> Vec<usize> {
    model.layout.strip_base.iter().flat_map(|&b| [b + 2, b + 3]).collect()
}

/// Result of a flutter-boundary search.
#[derive(Clone, Debug, Serialize)]
pub struct FlutterResult {
    pub sigma: f64,
    #[serde(rename = "V_f")]
    pub v_f: f64,
    /// Frequency of the critical mode at `V_f` [rad/s].
    pub flutter_frequency: f64,
    pub basis: FlutterBasis,
    /// Index of the critical mode in the frequency-sorted eigenvalue list.
    pub critical_mode_id: usize,
    /// `(V, max Re λ)` samples of the search.
    pub damping_trace: Vec<(f64, f64)>,
    /// Root incidence held fixed for the prestressed equilibria [rad].
    pub alpha_root: f64,
}

#[derive(Clone, Debug)]
struct Stability {
    max_re: f64,
    freq: f64,
    mode: usize,
    alpha: f64,
}

struct FlutterProblem<'a> {
    cfg: &'a RunConfig,
    sigma: f64,
    basis: FlutterBasis,
    /// Root incidence held fixed over the airspeed sweep.
    alpha_root: f64,
    cached_basis: Mutex<Option<DMatrix<f64>>>,
}

/// Root incidence of the prestressed wing: the flexible-aircraft trim angle
/// of attack at the cruise speed.
pub fn prestress_incidence(cfg: &RunConfig, sigma: f64) -> Result<f64> {
    Ok(trim_solve(cfg, cfg.flight.u, sigma, TrimMode::Flexible)?.alpha_trim)
}

impl FlutterProblem<'_> {
    fn equilibrium(&self, v: f64) -> Result<(CoupledModel, Snapshot, f64)> {
        let (alpha, gravity) = match self.basis {
            FlutterBasis::Undeformed => (0.0, false),
            FlutterBasis::Prestressed => (self.alpha_root, self.cfg.analysis.flutter.gravity),
        };
        let model = cantilever_model(self.cfg, self.sigma, v, alpha, gravity)?;
        let snap = model.rest_snapshot(&RigidState::default());
        let eq = model.static_equilibrium(&snap, &static_settings())?;
        Ok((model, eq, alpha))
    }

    fn stability(&self, v: f64) -> Result<Stability> {
        let (model, eq, alpha) = self.equilibrium(v)?;
        let n_modes = self.cfg.analysis.flutter.n_modes;
        let phi = match self.basis {
            FlutterBasis::Undeformed => {
                let mut cache = self.cached_basis.lock().expect("basis cache");
                if cache.is_none() {
                    *cache = Some(structural_basis(&model, &eq, n_modes)?.1);
                }
                cache.clone().unwrap()
            }
            FlutterBasis::Prestressed => structural_basis(&model, &eq, n_modes)?.1,
        };
        let lin = linearize(&model, &eq)?;
        let ss = lin.state_space(Some(&phi), &gust_state_indices(&model))?;
        let modes = eigen_modes_of(&ss)?;
        let (mode, crit) = modes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.lambda.re.total_cmp(&b.1.lambda.re))
            .ok_or_else(|| Error::Eigen("empty spectrum".into()))?;
        Ok(Stability {
            max_re: crit.lambda.re,
            freq: crit.frequency(),
            mode,
            alpha,
        })
    }
}

/// Lowest airspeed at which an aeroelastic eigenvalue of the clamped
/// semi-span wing crosses into the right half-plane: sweep from `v_start` in
/// `v_step` increments, then bisect the first sign change.
pub fn flutter_speed(cfg: &RunConfig, sigma: f64, basis: FlutterBasis) -> Result<FlutterResult> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("σ must be positive, got {sigma}")));
    }
    let fc = &cfg.analysis.flutter;
    if fc.full_aircraft {
        return full_aircraft_flutter(cfg, sigma, basis);
    }
    let alpha_root = match basis {
        FlutterBasis::Undeformed => 0.0,
        FlutterBasis::Prestressed => prestress_incidence(cfg, sigma)?,
    };
    let prob = FlutterProblem {
        cfg,
        sigma,
        basis,
        alpha_root,
        cached_basis: Mutex::new(None),
    };
    let mut trace = Vec::new();
    let mut v = fc.v_start;
    // flutter onset is a crossing from a stable to an unstable sample; an
    // unstable band at the bottom of the sweep (high lift coefficient at low
    // dynamic pressure) that restabilizes is not an onset
    let mut last_stable: Option<f64> = None;
    let mut bracket = None;
    while v <= fc.v_max + 1e-9 {
        let st = prob.stability(v)?;
        trace.push((v, st.max_re));
        if st.max_re > 0.0 {
            if let Some(lo) = last_stable {
                bracket = Some((lo, v, st));
                break;
            }
        } else {
            last_stable = Some(v);
        }
        v += fc.v_step;
    }
    let Some((mut lo, mut hi, mut st_hi)) = bracket else {
        return Err(match last_stable {
            Some(_) => Error::NoFlutter { v_max: fc.v_max },
            None => Error::InvalidInput(format!(
                "wing is unstable over the whole sweep {}..{} m/s",
                fc.v_start, fc.v_max
            )),
        });
    };
    while hi - lo > fc.tolerance {
        let mid = 0.5 * (lo + hi);
        let st = prob.stability(mid)?;
        trace.push((mid, st.max_re));
        if st.max_re > 0.0 {
            hi = mid;
            st_hi = st;
        } else {
            lo = mid;
        }
    }
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    let v_f = 0.5 * (lo + hi);
    let st = prob.stability(v_f).unwrap_or(st_hi);
    Ok(FlutterResult {
        sigma,
        v_f,
        flutter_frequency: st.freq,
        basis,
        critical_mode_id: st.mode,
        damping_trace: trace,
        alpha_root: st.alpha,
    })
}

fn full_aircraft_flutter(cfg: &RunConfig, sigma: f64, basis: FlutterBasis) -> Result<FlutterResult> {
    let fc = &cfg.analysis.flutter;
    let eval = |v: f64| -> Result<(f64, f64, usize)> {
        let trim = trim_solve(cfg, v, sigma, TrimMode::Flexible)?;
        let modes = flight_modes(cfg, &trim)?;
        let (id, m) = modes
            .iter()
            .enumerate()
            .filter(|(_, m)| matches!(m.kind, FlightModeKind::Structural | FlightModeKind::Mixed))
            .max_by(|a, b| a.1.lambda.re.total_cmp(&b.1.lambda.re))
            .ok_or_else(|| Error::Eigen("no structural modes".into()))?;
        Ok((m.lambda.re, m.lambda.im.abs(), id))
    };
    let mut trace = Vec::new();
    let mut v = fc.v_start;
    let mut lo = None;
    let mut hi = None;
    while v <= fc.v_max + 1e-9 {
        match eval(v) {
            Ok((re, _, _)) => {
                trace.push((v, re));
                if re > 0.0 {
                    hi = Some(v);
                    break;
                }
                lo = Some(v);
            }
            // trim is unreachable at low speed; keep sweeping
            Err(Error::TrimUnreachable { .. }) => {}
            Err(e) => return Err(e),
        }
        v += fc.v_step;
    }
    let (Some(mut lo), Some(mut hi)) = (lo, hi) else {
        return Err(Error::NoFlutter { v_max: fc.v_max });
    };
    while hi - lo > fc.tolerance {
        let mid = 0.5 * (lo + hi);
        let (re, _, _) = eval(mid)?;
        trace.push((mid, re));
        if re > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    let v_f = 0.5 * (lo + hi);
    let (_, freq, id) = eval(v_f)?;
    Ok(FlutterResult {
        sigma,
        v_f,
        flutter_frequency: freq,
        basis,
        critical_mode_id: id,
        damping_trace: trace,
        alpha_root: f64::NAN,
    })
}

/// Vertical-lift bookkeeping of a deformed wing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftRotation {
    /// Net vertical lift `Σ L cosΓ ds` [N].
    pub f_z: f64,
    /// Lift lost to the rotation `Σ L (1 − cosΓ) ds` [N].
    pub f_z_deficit: f64,
    /// Net lateral force of both semi-spans [N] (body `y`).
    pub f_y: f64,
    /// Lateral force of the left and right semi-spans [N].
    pub f_y_left: f64,
    pub f_y_right: f64,
    /// Local dihedral of every element [rad] (positive tip-up).
    pub gamma: Vec<f64>,
}

/// Lift-vector rotation diagnostics from the deformed slope of each element
/// and its lift per unit span.
pub fn lift_rotation_diagnostics(mesh: &BeamMesh, states: &[NodalState], lifts: &[f64]) -> Result<LiftRotation> {
    if lifts.len() != mesh.elements.len() {
        return Err(Error::DimensionMismatch {
            expected: mesh.elements.len(),
            got: lifts.len(),
        });
    }
    if states.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            got: states.len(),
        });
    }
    let mut out = LiftRotation {
        f_z: 0.0,
        f_z_deficit: 0.0,
        f_y: 0.0,
        f_y_left: 0.0,
        f_y_right: 0.0,
        gamma: Vec::with_capacity(lifts.len()),
    };
    for (e, el) in mesh.elements.iter().enumerate() {
        let [a, b] = el.nodes;
        let d = (mesh.nodes[b] + states[b].u) - (mesh.nodes[a] + states[a].u);
        let right = mesh.element_midpoint(e).y >= 0.0;
        let outward = if right { d } else { -d };
        let gamma = (-outward.z).atan2(outward.y.abs());
        let l = lifts[e] * mesh.element_length(e);
        out.f_z += l * gamma.cos();
        out.f_z_deficit += l * (1.0 - gamma.cos());
        // the lift vector tilts inboard on a tip-up semi-span
        if right {
            out.f_y_right -= l * gamma.sin();
        } else {
            out.f_y_left += l * gamma.sin();
        }
        out.gamma.push(gamma);
    }
    out.f_y = out.f_y_left + out.f_y_right;
    Ok(out)
}

/// Flight-mode categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightModeKind {
    Phugoid,
    ShortPeriod,
    Structural,
    AeroLag,
    /// Rigid-body mode other than phugoid/short period (kinematic or lateral).
    RigidBody,
    /// Energy shares too close to call.
    Mixed,
}

#[derive(Clone, Debug)]
pub struct FlightMode {
    pub lambda: Complex<f64>,
    pub kind: FlightModeKind,
    /// Kinetic-energy shares `(structural, rigid)`.
    pub energy: (f64, f64),
    /// Share of the rigid kinetic energy in longitudinal motion.
    pub longitudinal: f64,
}

/// Mapping of a reduced state vector onto physical partitions.
#[derive(Clone, Debug)]
pub struct ModePartition {
    pub n2: usize,
    /// `z` index of `V_B.x` (followed by `V_B`, `ω_B`).
    pub rigid: Option<usize>,
    pub lag: Vec<usize>,
    pub mass: f64,
    pub inertia: nalgebra::Matrix3<f64>,
}

impl ModePartition {
    pub fn new(model: &CoupledModel, ss: &StateSpace, inertia: nalgebra::Matrix3<f64>) -> Self {
        let rigid = model.layout.rigid_base.and_then(|r| ss.index_of(r));
        let lag = model
            .layout
            .strip_base
            .iter()
            .flat_map(|&b| b..b + 4)
            .filter_map(|g| ss.index_of(g))
            .collect();
        Self {
            n2: ss.n2,
            rigid,
            lag,
            mass: model.mass.m,
            inertia,
        }
    }
}

/// Labels eigenmodes by kinetic-energy share. The phugoid is the
/// lowest-frequency oscillatory, rigid-dominated longitudinal pair whose
/// kinetic energy is mostly surge; the short period is the lowest such pair
/// dominated by heave and pitch. Modes whose
/// structural and rigid shares are within 10 % of each other are "mixed".
pub fn classify_flight_modes(modes: &[EigenMode], part: &ModePartition) -> Vec<FlightMode> {
    let mut out = Vec::with_capacity(modes.len());
    let mut have_phugoid = false;
    let mut have_short = false;
    // overdamped short-period candidates: (index, real part)
    let mut real_pitch_heave: Vec<(usize, f64)> = Vec::new();
    for m in modes {
        let z = &m.vector;
        let es: f64 = (0..part.n2).map(|i| z[part.n2 + i].norm_sqr()).sum();
        let (er, long, pitch_heave, surge) = match part.rigid {
            Some(r) => {
                let v: Vec<f64> = (0..3).map(|i| z[r + i].norm_sqr()).collect();
                let w: Vec<Complex<f64>> = (0..3).map(|i| z[r + 3 + i]).collect();
                let mut rot = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        rot += (w[i].conj() * w[j]).re * part.inertia[(i, j)];
                    }
                }
                let er = part.mass * (v[0] + v[1] + v[2]) + rot;
                let long = part.mass * (v[0] + v[2]) + part.inertia[(1, 1)] * w[1].norm_sqr();
                let ph = part.mass * v[2] + part.inertia[(1, 1)] * w[1].norm_sqr();
                (er, long, ph, part.mass * v[0])
            }
            None => (0.0, 0.0, 0.0, 0.0),
        };
        let tot = (es + er).max(1e-300);
        let (fs, fr) = (es / tot, er / tot);
        let lon = if er > 0.0 { long / er } else { 0.0 };
        let lag: f64 = part.lag.iter().map(|&i| z[i].norm_sqr()).sum();
        let rest: f64 = z.iter().map(|c| c.norm_sqr()).sum::<f64>() - lag;
        // neutral kinematic modes and the near-degenerate clusters of
        // identical strip lag poles carry only round-off imaginary parts
        let oscillatory = m.lambda.im.abs() > 1e-3 * m.lambda.norm() && m.lambda.norm() > 1e-3;
        let longitudinal = lon > 0.5;
        let kind = if lag > rest {
            FlightModeKind::AeroLag
        } else if !oscillatory {
            if fr >= fs {
                if longitudinal && pitch_heave >= surge && m.lambda.norm() > 1e-3 {
                    real_pitch_heave.push((out.len(), m.lambda.re));
                }
                FlightModeKind::RigidBody
            } else {
                FlightModeKind::Structural
            }
        } else if (fs - fr).abs() < 0.1 * fs.max(fr) {
            FlightModeKind::Mixed
        } else if fs > fr {
            FlightModeKind::Structural
        } else if longitudinal && surge > pitch_heave && !have_phugoid {
            have_phugoid = true;
            FlightModeKind::Phugoid
        } else if longitudinal && pitch_heave >= surge && !have_short {
            have_short = true;
            FlightModeKind::ShortPeriod
        } else {
            FlightModeKind::RigidBody
        };
        out.push(FlightMode {
            lambda: m.lambda,
            kind,
            energy: (fs, fr),
            longitudinal: lon,
        });
    }
    // a heavily damped pitch-heave motion splits into real roots; the
    // slowest of them then stands in for the short period
    if !have_short {
        if let Some(&(i, _)) = real_pitch_heave.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
            out[i].kind = FlightModeKind::ShortPeriod;
        }
    }
    out
}

/// Linearized flight modes of a trimmed aircraft.
pub fn flight_modes(cfg: &RunConfig, trim: &TrimResult) -> Result<Vec<FlightMode>> {
    let model = &trim.model;
    let (_, phi) = structural_basis(model, &trim.state, cfg.analysis.flight_modes)?;
    let lin = linearize(model, &trim.state)?;
    let ss = lin.state_space(Some(&phi), &gust_state_indices(model))?;
    let modes = eigen_modes_of(&ss)?;
    let part = ModePartition::new(model, &ss, model.inertia_at(&trim.state));
    Ok(classify_flight_modes(&modes, &part))
}

/// Names of the time-history channels, in CSV column order.
pub const CHANNELS: [&str; 9] = ["t", "tip_defl", "root_Mx", "alpha_eff_root", "pitch", "u", "w", "q_rate", "altitude"];

/// Time-marched response with derived output channels.
#[derive(Clone, Debug, Default)]
pub struct TimeHistory {
    pub dt: f64,
    /// One row per instant, columns as in [`CHANNELS`].
    pub rows: Vec<[f64; 9]>,
    /// Packed monolithic state at every instant.
    pub states: Vec<CoupledState>,
}

impl TimeHistory {
    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    /// Largest deviation of a channel from its initial value.
    pub fn peak_change(&self, k: usize) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        self.rows.iter().map(|r| (r[k] - first[k]).abs()).fold(0.0, f64::max)
    }
}

/// Output channels of a model state.
pub fn channels(model: &CoupledModel, snap: &Snapshot, t: f64) -> Result<[f64; 9]> {
    let rs = model.rigid_state(snap);
    let root = model.root_element();
    let alpha = model.strip_eval_at(root, snap, t).alpha_with_gust;
    Ok([
        t,
        model.tip_deflection(snap),
        model.root_bending_moment(snap)?,
        alpha,
        rs.pitch(),
        rs.v_b.x,
        rs.v_b.z,
        rs.omega_b.y,
        rs.altitude(),
    ])
}

/// Marches `init` over `horizon` seconds. On a step failure the history up
/// to the failure is returned together with the error.
pub fn simulate_partial(
    model: &CoupledModel,
    init: &Snapshot,
    settings: &SolverSettings,
    horizon: f64,
) -> (TimeHistory, Option<Error>) {
    let mut hist = TimeHistory {
        dt: settings.dt,
        ..TimeHistory::default()
    };
    if let Err(e) = settings.validate() {
        return (hist, Some(e));
    }
    let steps = (horizon / settings.dt).round() as usize;
    let mut snap = init.clone();
    match channels(model, &snap, 0.0) {
        Ok(row) => hist.rows.push(row),
        Err(e) => return (hist, Some(e)),
    }
    hist.states.push(model.to_coupled_state(&snap));
    for k in 0..steps {
        let t = k as f64 * settings.dt;
        match newmark_newton_step(model, &snap, t, settings) {
            Ok((next, _)) => snap = next,
            Err(e) => return (hist, Some(e)),
        }
        let t1 = (k + 1) as f64 * settings.dt;
        match channels(model, &snap, t1) {
            Ok(row) => hist.rows.push(row),
            Err(e) => return (hist, Some(e)),
        }
        hist.states.push(model.to_coupled_state(&snap));
    }
    (hist, None)
}

pub fn simulate(model: &CoupledModel, init: &Snapshot, settings: &SolverSettings, horizon: f64) -> Result<TimeHistory> {
    match simulate_partial(model, init, settings, horizon) {
        (h, None) => Ok(h),
        (_, Some(e)) => Err(e),
    }
}

/// Gust encounter of the trimmed aircraft. Returns the trim, the history and
/// any step failure (the history is then truncated).
pub fn gust_response(cfg: &RunConfig, sigma: f64) -> Result<(TrimResult, TimeHistory, Option<Error>)> {
    let trim = trim_solve(cfg, cfg.flight.u, sigma, TrimMode::Flexible)?;
    let (hist, err) = gust_from_trim(cfg, &trim)?;
    Ok((trim, hist, err))
}

pub fn gust_from_trim(cfg: &RunConfig, trim: &TrimResult) -> Result<(TimeHistory, Option<Error>)> {
    cfg.gust.validate()?;
    let mut model = trim.model.clone();
    model.gust = cfg.gust.clone();
    let mut init = trim.state.clone();
    model.consistent_rates(&mut init, 0.0)?;
    Ok(simulate_partial(&model, &init, &cfg.solver, cfg.analysis.horizon))
}

/// One row of the σ sweep; `None` marks a failed stage (see `failures`).
#[derive(Clone, Debug, Serialize)]
pub struct SweepRecord {
    pub sigma: f64,
    pub alpha_trim: Option<f64>,
    pub tip_deflection_over_span: Option<f64>,
    #[serde(rename = "V_f_undeformed")]
    pub v_f_undeformed: Option<f64>,
    #[serde(rename = "V_f_prestressed")]
    pub v_f_prestressed: Option<f64>,
    pub phugoid_eigenvalue: Option<(f64, f64)>,
    pub short_period_eigenvalue: Option<(f64, f64)>,
    pub gust_peak_root_moment: Option<f64>,
    pub gust_peak_tip_deflection: Option<f64>,
    /// `stage: message` for every failed stage.
    pub failures: Vec<String>,
}

/// Runs every stage for one σ, isolating failures per stage.
pub fn sweep_point(cfg: &RunConfig, sigma: f64) -> SweepRecord {
    let mut rec = SweepRecord {
        sigma,
        alpha_trim: None,
        tip_deflection_over_span: None,
        v_f_undeformed: None,
        v_f_prestressed: None,
        phugoid_eigenvalue: None,
        short_period_eigenvalue: None,
        gust_peak_root_moment: None,
        gust_peak_tip_deflection: None,
        failures: Vec::new(),
    };
    let trim = match trim_solve(cfg, cfg.flight.u, sigma, TrimMode::Flexible) {
        Ok(t) => {
            rec.alpha_trim = Some(t.alpha_trim);
            rec.tip_deflection_over_span = Some(t.tip_deflection / cfg.aircraft.semi_span);
            if !t.converged {
                rec.failures.push(format!("trim: not converged (residuals {:.2e}, {:.2e})", t.residuals.0, t.residuals.1));
            }
            Some(t)
        }
        Err(e) => {
            rec.failures.push(format!("trim: {e}"));
            None
        }
    };
    if let Some(trim) = &trim {
        match flight_modes(cfg, trim) {
            Ok(modes) => {
                let pick = |k: FlightModeKind| modes.iter().find(|m| m.kind == k).map(|m| (m.lambda.re, m.lambda.im));
                rec.phugoid_eigenvalue = pick(FlightModeKind::Phugoid);
                rec.short_period_eigenvalue = pick(FlightModeKind::ShortPeriod);
                if rec.phugoid_eigenvalue.is_none() {
                    rec.failures.push("modes: no phugoid identified".into());
                }
                if rec.short_period_eigenvalue.is_none() {
                    rec.failures.push("modes: no short period identified".into());
                }
            }
            Err(e) => rec.failures.push(format!("modes: {e}")),
        }
    }
    for basis in [FlutterBasis::Undeformed, FlutterBasis::Prestressed] {
        match flutter_speed(cfg, sigma, basis) {
            Ok(f) => match basis {
                FlutterBasis::Undeformed => rec.v_f_undeformed = Some(f.v_f),
                FlutterBasis::Prestressed => rec.v_f_prestressed = Some(f.v_f),
            },
            Err(e) => rec.failures.push(format!("flutter_{basis}: {e}")),
        }
    }
    if let Some(trim) = &trim {
        match gust_from_trim(cfg, trim) {
            Ok((h, err)) => {
                if let Some(e) = err {
                    rec.failures.push(format!("gust: {e}"));
                } else {
                    rec.gust_peak_root_moment = Some(h.peak_change(2));
                    rec.gust_peak_tip_deflection = Some(h.peak_change(1));
                }
            }
            Err(e) => rec.failures.push(format!("gust: {e}")),
        }
    }
    rec
}

/// Runs [`sweep_point`] for every σ on up to `jobs` threads. `on_record` is
/// called in σ-list order as soon as each prefix of records is complete.
pub fn sigma_sweep<F>(cfg: &RunConfig, sigmas: &[f64], jobs: usize, mut on_record: F) -> Vec<SweepRecord>
where
    F: FnMut(&SweepRecord),
{
    run_parallel(sigmas.len(), jobs, |i| sweep_point(cfg, sigmas[i]), |_, r| on_record(r))
}

/// Evaluates `f(0..n)` on up to `jobs` worker threads, delivering results to
/// `sink` strictly in index order. A panic in `f` is re-raised on the calling
/// thread.
pub fn run_parallel<T, F, S>(n: usize, jobs: usize, f: F, mut sink: S) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    S: FnMut(usize, &T),
{
    let jobs = jobs.clamp(1, n.max(1));
    let slots: Mutex<Vec<Option<std::thread::Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let done = std::sync::Condvar::new();
    let mut out = Vec::with_capacity(n);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(i)));
                let failed = r.is_err();
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                done.notify_all();
                if failed {
                    break;
                }
            });
        }
        let mut guard = slots.lock().unwrap_or_else(|e| e.into_inner());
        while out.len() < n {
            let i = out.len();
            match guard[i].take() {
                Some(Ok(r)) => {
                    drop(guard);
                    sink(i, &r);
                    out.push(r);
                    guard = slots.lock().unwrap_or_else(|e| e.into_inner());
                }
                Some(Err(panic)) => {
                    // stop handing out work, then propagate
                    next.store(n, Ordering::SeqCst);
                    drop(guard);
                    std::panic::resume_unwind(panic);
                }
                None => guard = done.wait(guard).unwrap_or_else(|e| e.into_inner()),
            }
        }
    });
    out
}
