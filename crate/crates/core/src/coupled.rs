//! Monolithic coupling of the beam, strip aerodynamics and rigid-body
//! dynamics, with implicit Newmark-β / Newton–Raphson time stepping.
//!
//! The model is written as a residual `g(Ẍ, Ẋ, X, t) = 0` over an unknown
//! vector `X` that interleaves nodal DOFs and strip lag states along the span
//! (so the coupled tangent is banded) followed by a dense border of 13
//! rigid-body states `[V_B, ω_B, q, p_cg]`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};

use crate::aero::{
    aero_state_rates, gust_velocity, strip_force_body, strip_loads, AeroConstants, AeroStripState, GustSpec,
    StripGeometry, StripKinematics, StripLoads,
};
use crate::beam::{element_force_tangent, element_mass, element_resultants, BeamMesh, ElementGeom, NodalState};
use crate::error::{Error, Result};
use crate::linalg::{BorderedBanded, MatrixSink};
use crate::rigid::{inertia_correction, omega_matrix, quat_to_matrix_unchecked, MassProperties, RigidState, GRAVITY};
use crate::rotation::rotation_and_tangent;

/// Number of rigid-body states in the packed vector.
pub const RIGID_STATES: usize = 13;

/// Relative residual below which a stagnating static Newton iteration is
/// accepted as converged at round-off level.
pub const STAGNATION_TOL: f64 = 1e-6;

/// Relative residual bound for accepting a stagnated time-step iteration.
const STEP_NOISE_TOL: f64 = 1e-3;

/// Index map of the solver unknown vector.
#[derive(Clone, Debug)]
pub struct Layout {
    pub node_base: Vec<Option<usize>>,
    pub strip_base: Vec<usize>,
    /// Size of the banded (structure + aero) block.
    pub n_band: usize,
    /// Start of the rigid-body block when the aircraft is free.
    pub rigid_base: Option<usize>,
    pub n: usize,
    pub bandwidth: usize,
    pub second_order: Vec<bool>,
}

impl Layout {
    fn new(mesh: &BeamMesh, free: bool) -> Self {
        let nn = mesh.n_nodes();
        let mut node_base = vec![None; nn];
        let mut strip_base = vec![0; mesh.elements.len()];
        let mut idx = 0;
        // nodes and strips are interleaved along the element chain
        for node in 0..nn {
            if !mesh.is_clamped(node) {
                node_base[node] = Some(idx);
                idx += 6;
            }
            if node < mesh.elements.len() {
                strip_base[node] = idx;
                idx += 4;
            }
        }
        let n_band = idx;
        let mut second_order = vec![false; n_band];
        for b in node_base.iter().flatten() {
            for k in 0..6 {
                second_order[b + k] = true;
            }
        }
        let (rigid_base, n) = if free { (Some(n_band), n_band + RIGID_STATES) } else { (None, n_band) };
        second_order.resize(n, false);
        let mut bw = 0;
        for (e, el) in mesh.elements.iter().enumerate() {
            let mut idx: Vec<usize> = vec![strip_base[e], strip_base[e] + 3];
            for &nd in &el.nodes {
                if let Some(b) = node_base[nd] {
                    idx.push(b);
                    idx.push(b + 5);
                }
            }
            let lo = idx.iter().min().unwrap();
            let hi = idx.iter().max().unwrap();
            bw = bw.max(hi - lo);
        }
        Self {
            node_base,
            strip_base,
            n_band,
            rigid_base,
            n,
            bandwidth: bw,
            second_order,
        }
    }
}

/// Idealized horizontal tail acting as a pure pitching-moment device about the
/// centre of gravity. Its lift is not part of the wing aerodynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct TailModel {
    pub arm: f64,
    pub area: f64,
    pub lift_slope: f64,
    /// Body angle of attack at which `trim_load` is defined.
    pub alpha_ref: f64,
    /// Tail lift at the reference condition [N] (positive up).
    pub trim_load: f64,
}

impl TailModel {
    /// Nose-up pitching moment of the tail.
    pub fn moment(&self, v_b: &Vector3<f64>, omega_b: &Vector3<f64>, rho: f64) -> f64 {
        let u = v_b.norm();
        if u < 1e-9 {
            return -self.arm * self.trim_load;
        }
        let alpha = v_b.z.atan2(v_b.x);
        let qd = 0.5 * rho * u * u;
        let d_alpha = alpha - self.alpha_ref + omega_b.y * self.arm / u;
        -self.arm * (self.trim_load + qd * self.area * self.lift_slope * d_alpha)
    }
}

/// Physical and modelling switches of a coupled model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub chord: f64,
    /// Elastic-axis offset aft of mid-chord [semi-chords].
    pub ea_offset: f64,
    pub rho: f64,
    pub consts: AeroConstants,
    pub aero: bool,
    pub gravity: bool,
    /// Point mass at the body origin (fuselage + payload).
    pub point_mass: f64,
    pub tail: Option<TailModel>,
}

/// How the body reference frame moves.
#[derive(Clone, Debug)]
pub enum RigidMode {
    /// Six-DOF free flight (13 rigid states are unknowns).
    Free,
    /// Body motion prescribed (e.g. a wind-tunnel cantilever).
    Prescribed(RigidState),
}

/// Per-evaluation context.
#[derive(Clone, Copy, Debug)]
pub struct EvalContext {
    pub t: f64,
    /// Aircraft inertia used by the rotational equations.
    pub inertia: Matrix3<f64>,
    /// Multiplier on aerodynamic and gravity forces (continuation parameter).
    pub load_factor: f64,
}

/// Coefficients multiplying `∂g/∂X`, `∂g/∂Ẋ` (second-order entries),
/// `∂g/∂Ẋ` (first-order entries) and `∂g/∂Ẍ` in an assembled tangent.
#[derive(Clone, Copy, Debug)]
pub struct TangentCoefs {
    pub k: f64,
    pub c2: f64,
    pub c1: f64,
    pub m: f64,
}

/// Values and rates of every unknown at one instant (solver ordering).
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub x: DVector<f64>,
    pub xd: DVector<f64>,
    pub xdd: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct CoupledModel {
    pub mesh: BeamMesh,
    pub spec: ModelSpec,
    pub strips: Vec<StripGeometry>,
    pub mass: MassProperties,
    pub rigid: RigidMode,
    pub thrust: f64,
    pub gust: GustSpec,
    /// Reference flight speed used for gust timing.
    pub flight_speed: f64,
    pub layout: Layout,
    geoms: Vec<ElementGeom>,
    masses: Vec<[[f64; 12]; 12]>,
}

const NLOC: usize = 56;
const NOUT: usize = 22;

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Pos,
    Rate2,
    Rate1,
    Acc,
}

/// Per-element intermediate results used by diagnostics and output channels.
#[derive(Clone, Copy, Debug, Default)]
pub struct StripEval {
    pub loads: StripLoads,
    /// Force per unit span in body axes.
    pub force: Vector3<f64>,
    /// Aerodynamic moment per unit span in body axes.
    pub moment: Vector3<f64>,
    /// Elastic-axis position in body axes.
    pub position: Vector3<f64>,
    pub e_span: Vector3<f64>,
    pub e_chord_fwd: Vector3<f64>,
    pub e_up: Vector3<f64>,
    /// Flow angle including the gust contribution.
    pub alpha_with_gust: f64,
    pub airspeed: f64,
}

impl CoupledModel {
    /// Builds a coupled model around an already σ-scaled mesh.
    pub fn new(mesh: BeamMesh, spec: ModelSpec, rigid: RigidMode, flight_speed: f64) -> Result<Self> {
        mesh.validate()?;
        if !(spec.rho > 0.0) || !(spec.chord > 0.0) {
            return Err(Error::InvalidInput("density and chord must be positive".into()));
        }
        let free = matches!(rigid, RigidMode::Free);
        let layout = Layout::new(&mesh, free);
        let strips = (0..mesh.elements.len())
            .map(|e| {
                let mid = mesh.element_midpoint(e);
                let mut s = StripGeometry::straight(mid.y, spec.chord, spec.ea_offset, mesh.element_length(e));
                let f = mesh.elements[e].frame;
                s.r_c = Matrix3::from_columns(&[-f.column(1).into_owned(), f.column(0).into_owned(), f.column(2).into_owned()]);
                s
            })
            .collect();
        let geoms = (0..mesh.elements.len()).map(|e| ElementGeom::new(&mesh, e)).collect();
        let masses = (0..mesh.elements.len()).map(|e| element_mass(&mesh, e)).collect();
        let mass = MassProperties::from_wing(&mesh, spec.point_mass);
        Ok(Self {
            mesh,
            spec,
            strips,
            mass,
            rigid,
            thrust: 0.0,
            gust: GustSpec::none(),
            flight_speed,
            layout,
            geoms,
            masses,
        })
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn is_free(&self) -> bool {
        self.layout.rigid_base.is_some()
    }

    /// Undeformed, at-rest snapshot with the given rigid state.
    pub fn rest_snapshot(&self, rigid: &RigidState) -> Snapshot {
        let n = self.n();
        let mut s = Snapshot {
            x: DVector::zeros(n),
            xd: DVector::zeros(n),
            xdd: DVector::zeros(n),
        };
        if let Some(r) = self.layout.rigid_base {
            s.x.fixed_rows_mut::<3>(r).copy_from(&rigid.v_b);
            s.x.fixed_rows_mut::<3>(r + 3).copy_from(&rigid.omega_b);
            s.x.fixed_rows_mut::<4>(r + 6).copy_from(&rigid.q);
            s.x.fixed_rows_mut::<3>(r + 10).copy_from(&rigid.p_cg);
        }
        s
    }

    pub fn default_context(&self, snap: &Snapshot, t: f64) -> EvalContext {
        EvalContext {
            t,
            inertia: self.inertia_at(snap),
            load_factor: 1.0,
        }
    }

    /// Aircraft inertia including the elastic correction for the snapshot.
    pub fn inertia_at(&self, snap: &Snapshot) -> Matrix3<f64> {
        self.mass.j0 + inertia_correction(&self.mesh, &self.nodal_states(snap))
    }

    /// Rigid-body state of a snapshot (the prescribed state if not free).
    pub fn rigid_state(&self, snap: &Snapshot) -> RigidState {
        match (&self.rigid, self.layout.rigid_base) {
            (_, Some(r)) => RigidState {
                v_b: snap.x.fixed_rows::<3>(r).into_owned(),
                omega_b: snap.x.fixed_rows::<3>(r + 3).into_owned(),
                q: snap.x.fixed_rows::<4>(r + 6).into_owned(),
                p_cg: snap.x.fixed_rows::<3>(r + 10).into_owned(),
            },
            (RigidMode::Prescribed(s), None) => *s,
            (RigidMode::Free, None) => unreachable!(),
        }
    }

    pub fn rigid_rates(&self, snap: &Snapshot) -> [Vector3<f64>; 2] {
        match self.layout.rigid_base {
            Some(r) => [
                snap.xd.fixed_rows::<3>(r).into_owned(),
                snap.xd.fixed_rows::<3>(r + 3).into_owned(),
            ],
            None => [Vector3::zeros(), Vector3::zeros()],
        }
    }

    pub fn nodal_states(&self, snap: &Snapshot) -> Vec<NodalState> {
        self.layout
            .node_base
            .iter()
            .map(|b| match *b {
                Some(b) => NodalState {
                    u: snap.x.fixed_rows::<3>(b).into_owned(),
                    psi: snap.x.fixed_rows::<3>(b + 3).into_owned(),
                    u_dot: snap.xd.fixed_rows::<3>(b).into_owned(),
                    psi_dot: snap.xd.fixed_rows::<3>(b + 3).into_owned(),
                    u_ddot: snap.xdd.fixed_rows::<3>(b).into_owned(),
                    psi_ddot: snap.xdd.fixed_rows::<3>(b + 3).into_owned(),
                },
                None => NodalState::default(),
            })
            .collect()
    }

    pub fn set_nodal_states(&self, snap: &mut Snapshot, states: &[NodalState]) {
        for (node, b) in self.layout.node_base.iter().enumerate() {
            if let Some(b) = *b {
                let s = &states[node];
                snap.x.fixed_rows_mut::<3>(b).copy_from(&s.u);
                snap.x.fixed_rows_mut::<3>(b + 3).copy_from(&s.psi);
                snap.xd.fixed_rows_mut::<3>(b).copy_from(&s.u_dot);
                snap.xd.fixed_rows_mut::<3>(b + 3).copy_from(&s.psi_dot);
                snap.xdd.fixed_rows_mut::<3>(b).copy_from(&s.u_ddot);
                snap.xdd.fixed_rows_mut::<3>(b + 3).copy_from(&s.psi_ddot);
            }
        }
    }

    pub fn strip_states(&self, snap: &Snapshot) -> Vec<AeroStripState> {
        self.layout
            .strip_base
            .iter()
            .map(|&b| AeroStripState::from_lag([snap.x[b], snap.x[b + 1], snap.x[b + 2], snap.x[b + 3]]))
            .collect()
    }

    /// Global (value-vector, index, kind) of every local input of element `e`.
    fn local_map(&self, e: usize) -> [Option<(usize, Kind)>; NLOC] {
        let mut out = [None; NLOC];
        let el = &self.mesh.elements[e];
        for (a, &nd) in el.nodes.iter().enumerate() {
            if let Some(b) = self.layout.node_base[nd] {
                for i in 0..6 {
                    out[6 * a + i] = Some((b + i, Kind::Pos));
                    out[12 + 6 * a + i] = Some((b + i, Kind::Rate2));
                    out[24 + 6 * a + i] = Some((b + i, Kind::Acc));
                }
            }
        }
        let sb = self.layout.strip_base[e];
        for i in 0..4 {
            out[36 + i] = Some((sb + i, Kind::Pos));
        }
        if let Some(r) = self.layout.rigid_base {
            for i in 0..10 {
                out[40 + i] = Some((r + i, Kind::Pos));
            }
            for i in 0..6 {
                out[50 + i] = Some((r + i, Kind::Rate1));
            }
        }
        out
    }

    /// Global row of every local output of element `e`.
    fn local_rows(&self, e: usize) -> [Option<usize>; NOUT] {
        let mut out = [None; NOUT];
        let el = &self.mesh.elements[e];
        for (a, &nd) in el.nodes.iter().enumerate() {
            if let Some(b) = self.layout.node_base[nd] {
                for i in 0..6 {
                    out[6 * a + i] = Some(b + i);
                }
            }
        }
        let sb = self.layout.strip_base[e];
        for i in 0..4 {
            out[12 + i] = Some(sb + i);
        }
        if let Some(r) = self.layout.rigid_base {
            for i in 0..6 {
                out[16 + i] = Some(r + i);
            }
        }
        out
    }

    fn gather_local(&self, e: usize, snap: &Snapshot) -> [f64; NLOC] {
        let map = self.local_map(e);
        let mut z = [0.0; NLOC];
        for (k, m) in map.iter().enumerate() {
            if let Some((i, kind)) = *m {
                z[k] = match kind {
                    Kind::Pos => snap.x[i],
                    Kind::Rate2 | Kind::Rate1 => snap.xd[i],
                    Kind::Acc => snap.xdd[i],
                };
            }
        }
        if self.layout.rigid_base.is_none() {
            let r = self.rigid_state(snap);
            for i in 0..3 {
                z[40 + i] = r.v_b[i];
                z[43 + i] = r.omega_b[i];
            }
            for i in 0..4 {
                z[46 + i] = r.q[i];
            }
        }
        z
    }

    /// Strip aerodynamics of element `e` from its local input vector.
    fn strip_eval(&self, e: usize, z: &[f64; NLOC], t: f64) -> StripEval {
        let el = &self.mesh.elements[e];
        let strip = &self.strips[e];
        let v3 = |o: usize| Vector3::new(z[o], z[o + 1], z[o + 2]);
        let (ua, pa, ub, pb) = (v3(0), v3(3), v3(6), v3(9));
        let (uda, pda, udb, pdb) = (v3(12), v3(15), v3(18), v3(21));
        let (udda, pdda, uddb, pddb) = (v3(24), v3(27), v3(30), v3(33));
        let v = v3(40);
        let w = v3(43);
        let q = Vector4::new(z[46], z[47], z[48], z[49]);
        let vd = v3(50);
        let wd = v3(53);

        let pm = (pa + pb) * 0.5;
        let (r, tm) = rotation_and_tangent(&[pm.x, pm.y, pm.z]);
        let r = Matrix3::from_fn(|i, j| r[i][j]);
        let tm = Matrix3::from_fn(|i, j| tm[i][j]);
        let rs = r * el.frame;
        let e_span: Vector3<f64> = rs.column(0).into_owned();
        let e_cf: Vector3<f64> = rs.column(1).into_owned();
        let e_up: Vector3<f64> = rs.column(2).into_owned();

        let pos = self.mesh.element_midpoint(e) + (ua + ub) * 0.5;
        let ud = (uda + udb) * 0.5;
        let udd = (udda + uddb) * 0.5;
        let v_pt = v + w.cross(&pos) + ud;
        let u_c = v_pt.dot(&e_cf);
        let v_n = -v_pt.dot(&e_up);
        let airspeed = (u_c * u_c + v_n * v_n).sqrt().max(1e-9);
        let alpha = v_n.atan2(u_c);
        let w_sec = w + tm * (pda + pdb) * 0.5;
        let wd_sec = wd + tm * (pdda + pddb) * 0.5;
        let a_pt = vd + w.cross(&v) + wd.cross(&pos) + w.cross(&w.cross(&pos)) + w.cross(&ud) * 2.0 + udd;

        let w_g = gust_velocity(t, &self.gust, self.flight_speed);
        let w_gn = if w_g != 0.0 {
            let rz = quat_to_matrix_unchecked(&q);
            (rz * Vector3::new(0.0, 0.0, -w_g)).dot(&e_up)
        } else {
            0.0
        };
        let kin = StripKinematics {
            h_dot: 0.0,
            h_ddot: -a_pt.dot(&e_up),
            alpha,
            alpha_dot: w_sec.dot(&e_span),
            alpha_ddot: wd_sec.dot(&e_span),
            u: airspeed,
        };
        let lag = AeroStripState::from_lag([z[36], z[37], z[38], z[39]]);
        let mut loads = strip_loads(strip, &kin, &lag, &self.spec.consts, self.spec.rho);
        let rates = aero_state_rates(&lag, loads.w34, w_gn, airspeed, strip.b, &self.spec.consts);
        loads.w34 = rates[0] + self.spec.consts.eps1 * airspeed / strip.b * lag.x1;
        let force = strip_force_body(&loads, &(-e_cf), &e_up);
        StripEval {
            loads,
            force,
            moment: e_span * loads.moment,
            position: pos,
            e_span,
            e_chord_fwd: e_cf,
            e_up,
            alpha_with_gust: (v_n + w_gn).atan2(u_c),
            airspeed,
        }
    }

    /// Local residual contributions (inertia, gravity, aerodynamics) of
    /// element `e`; see the module docs for the row layout.
    fn element_kernel(&self, e: usize, z: &[f64; NLOC], ctx: &EvalContext, abs: Option<&mut [f64; NOUT]>) -> [f64; NOUT] {
        let mut out = [0.0; NOUT];
        let mut mag = [0.0; NOUT];
        let el = &self.mesh.elements[e];
        let v3 = |o: usize| Vector3::new(z[o], z[o + 1], z[o + 2]);
        let v = v3(40);
        let w = v3(43);
        let q = Vector4::new(z[46], z[47], z[48], z[49]);
        let vd = v3(50);
        let wd = v3(53);
        let lf = ctx.load_factor;

        // inertia and gravity: M_e · A
        let g_b = if self.spec.gravity {
            quat_to_matrix_unchecked(&q) * Vector3::new(0.0, 0.0, GRAVITY * lf)
        } else {
            Vector3::zeros()
        };
        let a_ref = vd + w.cross(&v) - g_b;
        let mut acc = [0.0; 12];
        for a in 0..2 {
            let r = self.mesh.nodes[el.nodes[a]] + v3(6 * a);
            let ud = v3(12 + 6 * a);
            let at = v3(24 + 6 * a) + a_ref + wd.cross(&r) + w.cross(&w.cross(&r)) + w.cross(&ud) * 2.0;
            let ar = v3(27 + 6 * a) + wd;
            for i in 0..3 {
                acc[6 * a + i] = at[i];
                acc[6 * a + 3 + i] = ar[i];
            }
        }
        let me = &self.masses[e];
        for i in 0..12 {
            let mut s = 0.0;
            for j in 0..12 {
                s += me[i][j] * acc[j];
            }
            out[i] += s;
            mag[i] += s.abs();
        }

        if self.spec.aero {
            let ev = self.strip_eval(e, z, ctx.t);
            let ds = self.strips[e].ds;
            let f = ev.force * (ds * lf);
            let m = ev.moment * (ds * lf);
            let pm = (v3(3) + v3(9)) * 0.5;
            let (_, tm) = rotation_and_tangent(&[pm.x, pm.y, pm.z]);
            let tm = Matrix3::from_fn(|i, j| tm[i][j]);
            let mg = tm.transpose() * m * 0.5;
            for a in 0..2 {
                for i in 0..3 {
                    out[6 * a + i] -= 0.5 * f[i];
                    out[6 * a + 3 + i] -= mg[i];
                    mag[6 * a + i] += 0.5 * f[i].abs();
                    mag[6 * a + 3 + i] += mg[i].abs();
                }
            }
            let lag = AeroStripState::from_lag([z[36], z[37], z[38], z[39]]);
            let w_g = gust_velocity(ctx.t, &self.gust, self.flight_speed);
            let w_gn = if w_g != 0.0 {
                (quat_to_matrix_unchecked(&q) * Vector3::new(0.0, 0.0, -w_g)).dot(&ev.e_up)
            } else {
                0.0
            };
            let rates = aero_state_rates(&lag, ev.loads.w34, w_gn, ev.airspeed, self.strips[e].b, &self.spec.consts);
            for i in 0..4 {
                out[12 + i] -= rates[i];
                mag[12 + i] += rates[i].abs();
            }
            let mom = ev.position.cross(&f) + m;
            for i in 0..3 {
                out[16 + i] -= f[i];
                out[19 + i] -= mom[i];
                mag[16 + i] += f[i].abs();
                mag[19 + i] += mom[i].abs();
            }
        } else {
            // without aerodynamics the lag states decay as ẋ = −x
            for i in 0..4 {
                out[12 + i] += z[36 + i];
            }
        }
        if let Some(abs) = abs {
            for i in 0..NOUT {
                abs[i] += mag[i];
            }
        }
        out
    }

    /// Rigid-body rows `[m(V̇+ω×V) − F, Jω̇ + ω×Jω − M, q̇ − ½Ωq, ṗ − R_ζᵀV]`
    /// excluding the wing aerodynamic loads.
    fn rigid_kernel(&self, z: &[f64; 26], ctx: &EvalContext, abs: Option<&mut [f64; 13]>) -> [f64; 13] {
        let v3 = |o: usize| Vector3::new(z[o], z[o + 1], z[o + 2]);
        let v = v3(0);
        let w = v3(3);
        let q = Vector4::new(z[6], z[7], z[8], z[9]);
        let vd = v3(13);
        let wd = v3(16);
        let qd = Vector4::new(z[19], z[20], z[21], z[22]);
        let pd = v3(23);
        let m = self.mass.m;
        let j = ctx.inertia;
        let rz = quat_to_matrix_unchecked(&q);
        let grav = if self.spec.gravity {
            rz * Vector3::new(0.0, 0.0, m * GRAVITY * ctx.load_factor)
        } else {
            Vector3::zeros()
        };
        let thrust = Vector3::new(self.thrust, 0.0, 0.0);
        let inert = (vd + w.cross(&v)) * m;
        let f = inert - grav - thrust;
        let m_tail = match &self.spec.tail {
            Some(t) => Vector3::new(0.0, t.moment(&v, &w, self.spec.rho), 0.0),
            None => Vector3::zeros(),
        };
        let jw = j * wd + w.cross(&(j * w));
        let mm = jw - m_tail;
        let qk = omega_matrix(&w) * q * 0.5;
        let pk = rz.transpose() * v;
        let mut out = [0.0; 13];
        for i in 0..3 {
            out[i] = f[i];
            out[3 + i] = mm[i];
            out[10 + i] = pd[i] - pk[i];
        }
        for i in 0..4 {
            out[6 + i] = qd[i] - qk[i];
        }
        if let Some(abs) = abs {
            for i in 0..3 {
                abs[i] += inert[i].abs() + grav[i].abs() + thrust[i].abs();
                abs[3 + i] += jw[i].abs() + m_tail[i].abs();
                abs[10 + i] += pd[i].abs() + pk[i].abs();
            }
            for i in 0..4 {
                abs[6 + i] += qd[i].abs() + qk[i].abs();
            }
        }
        out
    }

    fn rigid_local(&self, snap: &Snapshot, r: usize) -> [f64; 26] {
        let mut z = [0.0; 26];
        for i in 0..13 {
            z[i] = snap.x[r + i];
            z[13 + i] = snap.xd[r + i];
        }
        z
    }

    /// Residual vector and the per-row magnitude of its forcing terms.
    pub fn residual_with_scale(&self, snap: &Snapshot, ctx: &EvalContext) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.n();
        let mut g = DVector::zeros(n);
        let mut s = DVector::zeros(n);
        let states = self.nodal_states(snap);
        for (e, el) in self.mesh.elements.iter().enumerate() {
            for &nd in &el.nodes {
                let nrm = states[nd].psi.norm();
                if !(nrm < 2.0 * std::f64::consts::PI) {
                    return Err(Error::RotationRange { norm: nrm });
                }
            }
            // elastic forces
            let mut xe = [0.0; 12];
            for (a, &nd) in el.nodes.iter().enumerate() {
                for i in 0..3 {
                    xe[6 * a + i] = states[nd].u[i];
                    xe[6 * a + 3 + i] = states[nd].psi[i];
                }
            }
            let (fi, _) = element_force_tangent(&self.geoms[e], &xe);
            let rows = self.local_rows(e);
            for i in 0..12 {
                if let Some(r) = rows[i] {
                    g[r] += fi[i];
                    s[r] += fi[i].abs();
                }
            }
            let z = self.gather_local(e, snap);
            let mut mag = [0.0; NOUT];
            let out = self.element_kernel(e, &z, ctx, Some(&mut mag));
            for i in 0..NOUT {
                if let Some(r) = rows[i] {
                    g[r] += out[i];
                    s[r] += mag[i];
                }
            }
            let sb = self.layout.strip_base[e];
            for i in 0..4 {
                g[sb + i] += snap.xd[sb + i];
                s[sb + i] += snap.xd[sb + i].abs();
            }
        }
        if let Some(r) = self.layout.rigid_base {
            let z = self.rigid_local(snap, r);
            let mut mag = [0.0; 13];
            let out = self.rigid_kernel(&z, ctx, Some(&mut mag));
            for i in 0..13 {
                g[r + i] += out[i];
                s[r + i] += mag[i];
            }
        }
        if g.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::Singular("non-finite residual".into()));
        }
        Ok((g, s))
    }

    pub fn residual(&self, snap: &Snapshot, ctx: &EvalContext) -> Result<DVector<f64>> {
        Ok(self.residual_with_scale(snap, ctx)?.0)
    }

    /// Scatters `k·∂g/∂X + c2·∂g/∂Ẋ₂ + c1·∂g/∂Ẋ₁ + m·∂g/∂Ẍ` into `sink`.
    pub fn tangent<S: MatrixSink>(&self, snap: &Snapshot, ctx: &EvalContext, coefs: TangentCoefs, sink: &mut S) {
        let states = self.nodal_states(snap);
        let coef = |k: Kind| match k {
            Kind::Pos => coefs.k,
            Kind::Rate2 => coefs.c2,
            Kind::Rate1 => coefs.c1,
            Kind::Acc => coefs.m,
        };
        for (e, el) in self.mesh.elements.iter().enumerate() {
            let rows = self.local_rows(e);
            if coefs.k != 0.0 {
                let mut xe = [0.0; 12];
                for (a, &nd) in el.nodes.iter().enumerate() {
                    for i in 0..3 {
                        xe[6 * a + i] = states[nd].u[i];
                        xe[6 * a + 3 + i] = states[nd].psi[i];
                    }
                }
                let (_, ke) = element_force_tangent(&self.geoms[e], &xe);
                for a in 0..12 {
                    let Some(ra) = rows[a] else { continue };
                    for b in 0..12 {
                        if let Some(rb) = rows[b] {
                            sink.add(ra, rb, coefs.k * ke[a][b]);
                        }
                    }
                }
            }
            let map = self.local_map(e);
            let z0 = self.gather_local(e, snap);
            for (j, m) in map.iter().enumerate() {
                let Some((col, kind)) = *m else { continue };
                let c = coef(kind);
                if c == 0.0 {
                    continue;
                }
                let h = 1e-6 * z0[j].abs().max(1.0);
                let mut zp = z0;
                let mut zm = z0;
                zp[j] += h;
                zm[j] -= h;
                let op = self.element_kernel(e, &zp, ctx, None);
                let om = self.element_kernel(e, &zm, ctx, None);
                for i in 0..NOUT {
                    if let Some(r) = rows[i] {
                        let d = (op[i] - om[i]) / (2.0 * h);
                        if d != 0.0 {
                            sink.add(r, col, c * d);
                        }
                    }
                }
            }
            if coefs.c1 != 0.0 {
                let sb = self.layout.strip_base[e];
                for i in 0..4 {
                    sink.add(sb + i, sb + i, coefs.c1);
                }
            }
        }
        if let Some(r) = self.layout.rigid_base {
            let z0 = self.rigid_local(snap, r);
            for j in 0..26 {
                let c = if j < 13 { coefs.k } else { coefs.c1 };
                if c == 0.0 {
                    continue;
                }
                let h = 1e-6 * z0[j].abs().max(1.0);
                let mut zp = z0;
                let mut zm = z0;
                zp[j] += h;
                zm[j] -= h;
                let op = self.rigid_kernel(&zp, ctx, None);
                let om = self.rigid_kernel(&zm, ctx, None);
                for i in 0..13 {
                    let d = (op[i] - om[i]) / (2.0 * h);
                    if d != 0.0 {
                        sink.add(r + i, r + (j % 13), c * d);
                    }
                }
            }
        }
    }

    /// Dense `(M_T, C_T, K_T)` with `C_T` holding both second- and first-order
    /// rate derivatives.
    pub fn tangent_matrices(&self, snap: &Snapshot, ctx: &EvalContext) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        let mut k = DMatrix::zeros(n, n);
        self.tangent(snap, ctx, TangentCoefs { k: 0.0, c2: 0.0, c1: 0.0, m: 1.0 }, &mut m);
        self.tangent(snap, ctx, TangentCoefs { k: 0.0, c2: 1.0, c1: 1.0, m: 0.0 }, &mut c);
        self.tangent(snap, ctx, TangentCoefs { k: 1.0, c2: 0.0, c1: 0.0, m: 0.0 }, &mut k);
        (m, c, k)
    }

    fn new_banded(&self, free_border: bool) -> BorderedBanded {
        let bw = self.layout.bandwidth;
        let m = if free_border { self.n() - self.layout.n_band } else { 0 };
        BorderedBanded::new(self.layout.n_band, m, bw, bw)
    }

    /// Strip evaluation of a single element.
    pub fn strip_eval_at(&self, e: usize, snap: &Snapshot, t: f64) -> StripEval {
        self.strip_eval(e, &self.gather_local(e, snap), t)
    }

    /// Strip evaluations for output and diagnostics.
    pub fn strip_evals(&self, snap: &Snapshot, t: f64) -> Vec<StripEval> {
        (0..self.mesh.elements.len())
            .map(|e| self.strip_eval(e, &self.gather_local(e, snap), t))
            .collect()
    }

    /// Total wing aerodynamic force and moment about the body origin.
    pub fn aero_resultants(&self, snap: &Snapshot, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let evals = self.strip_evals(snap, t);
        let mut f = Vector3::zeros();
        let mut m = Vector3::zeros();
        for (e, ev) in evals.iter().enumerate() {
            let ds = self.strips[e].ds;
            f += ev.force * ds;
            m += ev.position.cross(&(ev.force * ds)) + ev.moment * ds;
        }
        (f, m)
    }

    /// Steady solution of the structural and aerodynamic unknowns with the
    /// rigid-body state held fixed (all rates zero).
    pub fn static_equilibrium(&self, start: &Snapshot, opts: &StaticSettings) -> Result<Snapshot> {
        let mut lambda = 0.0f64;
        let mut step = 1.0f64;
        let mut snap = start.clone();
        snap.xd.fill(0.0);
        snap.xdd.fill(0.0);
        let mut history = Vec::new();
        // try the full load directly from the supplied start
        if let Ok(s) = self.static_newton(&snap, 1.0, opts, &mut history) {
            return Ok(s);
        }
        snap = start.clone();
        snap.xd.fill(0.0);
        snap.xdd.fill(0.0);
        for i in 0..self.layout.n_band {
            snap.x[i] = 0.0;
        }
        while lambda < 1.0 {
            let target = (lambda + step).min(1.0);
            match self.static_newton(&snap, target, opts, &mut history) {
                Ok(s) => {
                    snap = s;
                    lambda = target;
                    step = (step * 2.0).min(1.0);
                }
                Err(_) => {
                    step *= 0.5;
                    if step < opts.min_load_fraction {
                        return Err(Error::NonConvergence {
                            what: format!("static aeroelastic solve (reached load fraction {lambda:.4})"),
                            iterations: history.len(),
                            last: history.last().copied().unwrap_or(f64::NAN),
                            history,
                        });
                    }
                }
            }
        }
        Ok(snap)
    }

    fn static_newton(&self, start: &Snapshot, lf: f64, opts: &StaticSettings, history: &mut Vec<f64>) -> Result<Snapshot> {
        let mut snap = start.clone();
        let nb = self.layout.n_band;
        let mut ctx = self.default_context(&snap, 0.0);
        ctx.load_factor = lf;
        let mut growth = 0;
        let mut prev = f64::INFINITY;
        for _ in 0..opts.max_iter {
            let (g, s) = self.residual_with_scale(&snap, &ctx)?;
            let gb = g.rows(0, nb);
            let rn = gb.norm();
            let sn = s.rows(0, nb).norm();
            history.push(rn / sn.max(1e-300));
            if rn <= opts.rel_tol * sn + 1e-12 {
                return Ok(snap);
            }
            if rn > prev {
                growth += 1;
                if growth >= 5 {
                    break;
                }
            } else {
                growth = 0;
            }
            prev = rn;
            let mut k = self.new_banded(false);
            let mut filt = BandOnly { inner: &mut k, nb };
            self.tangent(&snap, &ctx, TangentCoefs { k: 1.0, c2: 0.0, c1: 0.0, m: 0.0 }, &mut filt);
            let rhs: Vec<f64> = gb.iter().map(|v| -v).collect();
            let dx = k.factor()?.solve(&rhs);
            let mut scale = 1.0;
            let max_rot = self
                .layout
                .node_base
                .iter()
                .flatten()
                .map(|&b| Vector3::new(dx[b + 3], dx[b + 4], dx[b + 5]).norm())
                .fold(0.0, f64::max);
            if max_rot > opts.max_rotation_step {
                scale = opts.max_rotation_step / max_rot;
            }
            for i in 0..nb {
                snap.x[i] += scale * dx[i];
            }
            // stagnation at round-off level: the residual cannot drop further
            if scale == 1.0 && rn <= STAGNATION_TOL * sn && stagnated(&dx, snap.x.rows(0, nb).iter()) {
                return Ok(snap);
            }
        }
        Err(Error::NonConvergence {
            what: "static Newton".into(),
            iterations: opts.max_iter,
            last: history.last().copied().unwrap_or(f64::NAN),
            history: history.clone(),
        })
    }

    /// Solves for accelerations / first-order rates consistent with the
    /// given positions and second-order velocities.
    pub fn consistent_rates(&self, snap: &mut Snapshot, t: f64) -> Result<()> {
        let ctx = self.default_context(snap, t);
        let n = self.n();
        for _ in 0..10 {
            let g = self.residual(snap, &ctx)?;
            if g.norm() < 1e-10 * (1.0 + snap.x.norm()) {
                break;
            }
            let mut a = self.new_banded(self.is_free());
            self.tangent(snap, &ctx, TangentCoefs { k: 0.0, c2: 0.0, c1: 1.0, m: 1.0 }, &mut a);
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let d = a.factor()?.solve(&rhs);
            for i in 0..n {
                if self.layout.second_order[i] {
                    snap.xdd[i] += d[i];
                } else {
                    snap.xd[i] += d[i];
                }
            }
        }
        Ok(())
    }

    /// Vertical tip displacement (up positive) of the last node.
    pub fn tip_deflection(&self, snap: &Snapshot) -> f64 {
        let last = self.mesh.n_nodes() - 1;
        match self.layout.node_base[last] {
            Some(b) => -snap.x[b + 2],
            None => 0.0,
        }
    }

    /// Index of the element at the right-hand root.
    pub fn root_element(&self) -> usize {
        let root = *self.mesh.clamped.first().unwrap_or(&0);
        self.mesh
            .elements
            .iter()
            .position(|el| el.nodes[0] == root)
            .unwrap_or(0)
    }

    /// Out-of-plane bending moment at the right-hand root (positive for
    /// upward bending).
    pub fn root_bending_moment(&self, snap: &Snapshot) -> Result<f64> {
        let states = self.nodal_states(snap);
        let (_, m) = element_resultants(&self.mesh, self.root_element(), &states)?;
        Ok(-m.y)
    }
}

/// True when a Newton increment is at round-off level relative to the iterate.
fn stagnated<'a>(dx: &[f64], x: impl Iterator<Item = &'a f64>) -> bool {
    let xmax = x.fold(0.0f64, |a, v| a.max(v.abs()));
    let dmax = dx.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    dmax <= 1e-12 * (1.0 + xmax)
}

/// Filters entries to the banded block only.
struct BandOnly<'a> {
    inner: &'a mut BorderedBanded,
    nb: usize,
}

impl MatrixSink for BandOnly<'_> {
    fn add(&mut self, i: usize, j: usize, v: f64) {
        if i < self.nb && j < self.nb {
            self.inner.add(i, j, v);
        }
    }
}

/// Newton settings for steady solves.
#[derive(Clone, Debug)]
pub struct StaticSettings {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub min_load_fraction: f64,
    /// Largest rotation-vector increment per Newton update [rad].
    pub max_rotation_step: f64,
}

impl Default for StaticSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            max_iter: 50,
            min_load_fraction: 1.0 / 64.0,
            max_rotation_step: 0.5,
        }
    }
}

/// Newmark-β integration settings.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
    pub newton_rel_tol: f64,
    pub max_newton_iter: usize,
    /// Rebuild the tangent only every third Newton iteration.
    pub modified_newton: bool,
    pub max_halvings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            beta: 0.25,
            gamma: 0.5,
            dt: 0.01,
            newton_rel_tol: 1e-8,
            max_newton_iter: 25,
            modified_newton: false,
            max_halvings: 4,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.5 && 2.0 * self.beta >= self.gamma) {
            return Err(Error::InvalidInput(format!(
                "Newmark parameters outside the unconditionally stable region (need 2β ≥ γ ≥ ½), got β = {}, γ = {}",
                self.beta, self.gamma
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.newton_rel_tol > 0.0) || self.max_newton_iter == 0 {
            return Err(Error::InvalidInput("Newton tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one accepted Newmark step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub iterations: usize,
    pub residual: f64,
    pub halvings: usize,
}

/// One implicit step of size `dt` from `prev` at time `t`.
fn newmark_attempt(model: &CoupledModel, prev: &Snapshot, t: f64, dt: f64, s: &SolverSettings) -> Result<(Snapshot, usize, f64)> {
    let (beta, gamma) = (s.beta, s.gamma);
    let a0 = 1.0 / (beta * dt * dt);
    let a1 = 1.0 / (beta * dt);
    let a2 = 1.0 / (2.0 * beta) - 1.0;
    let n = model.n();
    let so = &model.layout.second_order;
    let mut x = prev.x.clone();
    for i in 0..n {
        if so[i] {
            x[i] += dt * prev.xd[i] + 0.5 * dt * dt * prev.xdd[i];
        } else {
            x[i] += dt * prev.xd[i];
        }
    }
    let kin = |x: &DVector<f64>| {
        let mut sn = Snapshot {
            x: x.clone(),
            xd: DVector::zeros(n),
            xdd: DVector::zeros(n),
        };
        for i in 0..n {
            if so[i] {
                let acc = a0 * (x[i] - prev.x[i]) - a1 * prev.xd[i] - a2 * prev.xdd[i];
                sn.xdd[i] = acc;
                sn.xd[i] = prev.xd[i] + dt * ((1.0 - gamma) * prev.xdd[i] + gamma * acc);
            } else {
                sn.xd[i] = (x[i] - prev.x[i]) / (gamma * dt) - ((1.0 - gamma) / gamma) * prev.xd[i];
            }
        }
        sn
    };
    let mut snap = kin(&x);
    let ctx = EvalContext {
        t: t + dt,
        inertia: model.inertia_at(&snap),
        load_factor: 1.0,
    };
    let coefs = TangentCoefs {
        k: 1.0,
        c2: gamma / (beta * dt),
        c1: 1.0 / (gamma * dt),
        m: a0,
    };
    let mut lu = None;
    let mut last = f64::NAN;
    for it in 0..s.max_newton_iter {
        let (g, sc) = model.residual_with_scale(&snap, &ctx)?;
        let rn = g.norm();
        last = rn / sc.norm().max(1e-300);
        if rn <= s.newton_rel_tol * sc.norm() || rn <= 1e-12 {
            return Ok((snap, it, last));
        }
        if lu.is_none() || !s.modified_newton || it % 3 == 0 {
            let mut a = model.new_banded(model.is_free());
            model.tangent(&snap, &ctx, coefs, &mut a);
            lu = Some(a.factor()?);
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let dx = lu.as_ref().unwrap().solve(&rhs);
        for i in 0..n {
            x[i] += dx[i];
        }
        // a round-off-sized correction means the residual is pure noise; for
        // small motions that noise can be a sizeable fraction of the forcing
        if rn <= STEP_NOISE_TOL * sc.norm() && stagnated(&dx, x.iter()) {
            snap = kin(&x);
            return Ok((snap, it + 1, last));
        }
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
        snap = kin(&x);
    }
    Err(Error::NonConvergence {
        what: "Newmark Newton iteration".into(),
        iterations: s.max_newton_iter,
        last,
        history: vec![],
    })
}

fn renormalize_quaternion(model: &CoupledModel, snap: &mut Snapshot) {
    if let Some(r) = model.layout.rigid_base {
        let nq = snap.x.fixed_rows::<4>(r + 6).norm();
        if nq > 0.0 {
            for i in 0..4 {
                snap.x[r + 6 + i] /= nq;
            }
        }
    }
}

/// Advances `prev` by `settings.dt`, halving the step on Newton failure.
pub fn newmark_newton_step(model: &CoupledModel, prev: &Snapshot, t: f64, settings: &SolverSettings) -> Result<(Snapshot, StepReport)> {
    let mut halvings = 0;
    loop {
        let sub = 1usize << halvings;
        let dt = settings.dt / sub as f64;
        let mut cur = prev.clone();
        let mut ok = true;
        let mut iters = 0;
        let mut res = 0.0;
        let mut reason = String::new();
        for k in 0..sub {
            match newmark_attempt(model, &cur, t + k as f64 * dt, dt, settings) {
                Ok((mut s, it, r)) => {
                    renormalize_quaternion(model, &mut s);
                    cur = s;
                    iters += it;
                    res = r;
                }
                Err(e) => {
                    ok = false;
                    reason = e.to_string();
                    break;
                }
            }
        }
        if ok {
            return Ok((
                cur,
                StepReport {
                    iterations: iters,
                    residual: res,
                    halvings,
                },
            ));
        }
        if halvings >= settings.max_halvings {
            return Err(Error::StepFailure { t, halvings, reason });
        }
        halvings += 1;
    }
}

/// Named parts of a packed coupled state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateParts {
    pub eta: DVector<f64>,
    pub eta_dot: DVector<f64>,
    pub x_a: DVector<f64>,
    pub rigid: RigidState,
}

impl StateParts {
    pub fn zeros(n_eta: usize, n_aero: usize) -> Self {
        Self {
            eta: DVector::zeros(n_eta),
            eta_dot: DVector::zeros(n_eta),
            x_a: DVector::zeros(n_aero),
            rigid: RigidState {
                v_b: Vector3::zeros(),
                omega_b: Vector3::zeros(),
                q: Vector4::new(1.0, 0.0, 0.0, 0.0),
                p_cg: Vector3::zeros(),
            },
        }
    }
}

/// Packed monolithic state `[η, η̇, x_a, V_B, ω_B, q, p_cg]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub x: DVector<f64>,
    pub n_eta: usize,
    pub n_aero: usize,
}

/// Packed length `12·free nodes + 4·strips + 13`.
pub fn packed_dimension(free_nodes: usize, strips: usize) -> usize {
    12 * free_nodes + 4 * strips + RIGID_STATES
}

pub fn pack_state(parts: &StateParts) -> Result<CoupledState> {
    let ne = parts.eta.len();
    if parts.eta_dot.len() != ne {
        return Err(Error::DimensionMismatch {
            expected: ne,
            got: parts.eta_dot.len(),
        });
    }
    let na = parts.x_a.len();
    let mut x = DVector::zeros(2 * ne + na + RIGID_STATES);
    x.rows_mut(0, ne).copy_from(&parts.eta);
    x.rows_mut(ne, ne).copy_from(&parts.eta_dot);
    x.rows_mut(2 * ne, na).copy_from(&parts.x_a);
    let r = 2 * ne + na;
    x.fixed_rows_mut::<3>(r).copy_from(&parts.rigid.v_b);
    x.fixed_rows_mut::<3>(r + 3).copy_from(&parts.rigid.omega_b);
    x.fixed_rows_mut::<4>(r + 6).copy_from(&parts.rigid.q);
    x.fixed_rows_mut::<3>(r + 10).copy_from(&parts.rigid.p_cg);
    Ok(CoupledState { x, n_eta: ne, n_aero: na })
}

pub fn unpack_state(state: &CoupledState) -> Result<StateParts> {
    let (ne, na) = (state.n_eta, state.n_aero);
    let expected = 2 * ne + na + RIGID_STATES;
    if state.x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: state.x.len(),
        });
    }
    let r = 2 * ne + na;
    Ok(StateParts {
        eta: state.x.rows(0, ne).into_owned(),
        eta_dot: state.x.rows(ne, ne).into_owned(),
        x_a: state.x.rows(2 * ne, na).into_owned(),
        rigid: RigidState {
            v_b: state.x.fixed_rows::<3>(r).into_owned(),
            omega_b: state.x.fixed_rows::<3>(r + 3).into_owned(),
            q: state.x.fixed_rows::<4>(r + 6).into_owned(),
            p_cg: state.x.fixed_rows::<3>(r + 10).into_owned(),
        },
    })
}

impl CoupledModel {
    /// Packs a snapshot into the monolithic state layout.
    pub fn to_coupled_state(&self, snap: &Snapshot) -> CoupledState {
        let nb: Vec<usize> = self.layout.node_base.iter().flatten().copied().collect();
        let ne = 6 * nb.len();
        let mut parts = StateParts::zeros(ne, 4 * self.strips.len());
        for (k, &b) in nb.iter().enumerate() {
            for i in 0..6 {
                parts.eta[6 * k + i] = snap.x[b + i];
                parts.eta_dot[6 * k + i] = snap.xd[b + i];
            }
        }
        for (e, &sb) in self.layout.strip_base.iter().enumerate() {
            for i in 0..4 {
                parts.x_a[4 * e + i] = snap.x[sb + i];
            }
        }
        parts.rigid = self.rigid_state(snap);
        pack_state(&parts).expect("consistent dimensions")
    }
}

/// Total aerodynamic force and moment about the origin from per-strip loads
/// on a (possibly deformed) beam.
pub fn integrated_aero_loads(
    mesh: &BeamMesh,
    states: &[NodalState],
    loads: &[StripLoads],
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if loads.len() != mesh.elements.len() {
        return Err(Error::DimensionMismatch {
            expected: mesh.elements.len(),
            got: loads.len(),
        });
    }
    let mut f = Vector3::zeros();
    let mut m = Vector3::zeros();
    for (e, el) in mesh.elements.iter().enumerate() {
        let [a, b] = el.nodes;
        let pm = (states[a].psi + states[b].psi) * 0.5;
        let (r, _) = rotation_and_tangent(&[pm.x, pm.y, pm.z]);
        let rs = Matrix3::from_fn(|i, j| r[i][j]) * el.frame;
        let e_span: Vector3<f64> = rs.column(0).into_owned();
        let e_cf: Vector3<f64> = rs.column(1).into_owned();
        let e_up: Vector3<f64> = rs.column(2).into_owned();
        let ds = mesh.element_length(e);
        let fe = strip_force_body(&loads[e], &(-e_cf), &e_up) * ds;
        let pos = mesh.element_midpoint(e) + (states[a].u + states[b].u) * 0.5;
        f += fe;
        m += pos.cross(&fe) + e_span * (loads[e].moment * ds);
    }
    Ok((f, m))
}
