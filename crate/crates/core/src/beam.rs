//! Geometrically-exact beam finite elements.
//!
//! Two-noded elements with linear interpolation of displacement `u` and
//! Cartesian rotation vector `ψ`, one-point (mid-point) quadrature. The section
//! orientation is `R(ψ)·R₀`, where `R₀` holds the undeformed section axes
//! (1 = beam axis, 2 = chordwise forward, 3 = normal) in body coordinates.
//!
//! Strains at the element mid-point are
//! `γ = (R R₀)ᵀ x' − e₁` and `κ = R₀ᵀ Rᵀ T(ψ) ψ' − κ₀`; the element strain
//! energy `h/2·[γ;κ]ᵀ S [γ;κ]` is differentiated with hyper-dual numbers to
//! give the internal force and the consistent tangent `K_e + K_g`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::dual::{cmatvec3_t, matvec3, matvec3_t, HyperDual, Scalar, V3};
use crate::error::{Error, Result};
use crate::linalg::{sym_generalized_eigen, BorderedBanded, MatrixSink};
use crate::rotation::rotation_and_tangent;

/// Sectional stiffness and inertia properties in section axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub ea: f64,
    pub ga2: f64,
    pub ga3: f64,
    pub gj: f64,
    pub ei2: f64,
    pub ei3: f64,
    pub mu: f64,
    pub j_t: f64,
    /// Rotational inertia per unit length about the section axes.
    pub j_rho: Matrix3<f64>,
    /// Force-strain / moment-strain coupling block.
    pub s12: Matrix3<f64>,
}

impl CrossSection {
    /// Baseline HALE wing section. Axial and shear stiffnesses are set high
    /// (1e8 N) so the element behaves as an inextensible, shear-rigid beam.
    pub fn baseline() -> Self {
        Self::new(1e8, 1e8, 1e8, 1e4, 2e4, 4e6, 0.75, 0.1)
    }

    /// Section with diagonal stiffness; the bending rotary inertias default to
    /// `j_t/100`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(ea: f64, ga2: f64, ga3: f64, gj: f64, ei2: f64, ei3: f64, mu: f64, j_t: f64) -> Self {
        Self {
            ea,
            ga2,
            ga3,
            gj,
            ei2,
            ei3,
            mu,
            j_t,
            j_rho: Matrix3::from_diagonal(&Vector3::new(j_t, j_t / 100.0, j_t / 100.0)),
            s12: Matrix3::zeros(),
        }
    }

    /// Full 6×6 sectional stiffness `[S11 S12; S12ᵀ S22]`.
    pub fn stiffness_matrix(&self) -> Matrix6<f64> {
        let mut s = Matrix6::zeros();
        s[(0, 0)] = self.ea;
        s[(1, 1)] = self.ga2;
        s[(2, 2)] = self.ga3;
        s[(3, 3)] = self.gj;
        s[(4, 4)] = self.ei2;
        s[(5, 5)] = self.ei3;
        s.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.s12);
        s.fixed_view_mut::<3, 3>(3, 0).copy_from(&self.s12.transpose());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("EA", self.ea),
            ("GA2", self.ga2),
            ("GA3", self.ga3),
            ("GJ", self.gj),
            ("EI2", self.ei2),
            ("EI3", self.ei3),
            ("mu", self.mu),
            ("j_t", self.j_t),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("section property {name} must be positive, got {v}")));
            }
        }
        if self.stiffness_matrix().cholesky().is_none() {
            return Err(Error::InvalidInput("sectional stiffness matrix is not positive definite".into()));
        }
        Ok(())
    }
}

/// Divides every stiffness entry by `σ`; mass properties are unchanged.
pub fn scale_stiffness(section: &CrossSection, sigma: f64) -> Result<CrossSection> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let mut s = section.clone();
    s.ea /= sigma;
    s.ga2 /= sigma;
    s.ga3 /= sigma;
    s.gj /= sigma;
    s.ei2 /= sigma;
    s.ei3 /= sigma;
    s.s12 /= sigma;
    Ok(s)
}

/// Force and moment resultants `(F, M)` in section axes.
pub fn sectional_loads(gamma: &Vector3<f64>, kappa: &Vector3<f64>, section: &CrossSection) -> (Vector3<f64>, Vector3<f64>) {
    let s = section.stiffness_matrix();
    let e = nalgebra::Vector6::new(gamma.x, gamma.y, gamma.z, kappa.x, kappa.y, kappa.z);
    let f = s * e;
    (Vector3::new(f[0], f[1], f[2]), Vector3::new(f[3], f[4], f[5]))
}

#[derive(Clone, Debug)]
pub struct BeamElement {
    pub nodes: [usize; 2],
    /// Undeformed section axes as columns, in body coordinates.
    pub frame: Matrix3<f64>,
    pub kappa0: Vector3<f64>,
    pub section: CrossSection,
}

#[derive(Clone, Debug)]
pub struct BeamMesh {
    pub nodes: Vec<Vector3<f64>>,
    pub elements: Vec<BeamElement>,
    pub clamped: Vec<usize>,
}

/// Section axes of a straight wing along body `+y`: beam axis `+y`,
/// chordwise forward `+x`, normal up `−z`.
pub fn wing_frame() -> Matrix3<f64> {
    Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

impl BeamMesh {
    /// Straight uniform beam between two points with the given section axes
    /// (the first column must be the unit beam direction).
    pub fn straight(
        start: Vector3<f64>,
        end: Vector3<f64>,
        n_nodes: usize,
        frame: Matrix3<f64>,
        section: &CrossSection,
        clamped: Vec<usize>,
    ) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidInput("a beam mesh needs at least two nodes".into()));
        }
        let n_el = n_nodes - 1;
        let nodes = (0..n_nodes)
            .map(|i| start + (end - start) * (i as f64 / n_el as f64))
            .collect();
        let elements = (0..n_el)
            .map(|e| BeamElement {
                nodes: [e, e + 1],
                frame,
                kappa0: Vector3::zeros(),
                section: section.clone(),
            })
            .collect();
        let mesh = Self { nodes, elements, clamped };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Clamped-root semi-span cantilever along body `+y`.
    pub fn cantilever(semi_span: f64, n_nodes: usize, section: &CrossSection) -> Result<Self> {
        Self::straight(
            Vector3::zeros(),
            Vector3::new(0.0, semi_span, 0.0),
            n_nodes,
            wing_frame(),
            section,
            vec![0],
        )
    }

    /// Full span `−L..L` attached to the body frame at the mid-span node.
    pub fn full_wing(semi_span: f64, elements_per_side: usize, section: &CrossSection) -> Result<Self> {
        let n_nodes = 2 * elements_per_side + 1;
        Self::straight(
            Vector3::new(0.0, -semi_span, 0.0),
            Vector3::new(0.0, semi_span, 0.0),
            n_nodes,
            wing_frame(),
            section,
            vec![elements_per_side],
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (k, el) in self.elements.iter().enumerate() {
            let [a, b] = el.nodes;
            if a >= self.nodes.len() || b >= self.nodes.len() {
                return Err(Error::InvalidInput(format!("element {k} references a missing node")));
            }
            if (self.nodes[b] - self.nodes[a]).norm() <= 0.0 {
                return Err(Error::InvalidInput(format!("element {k} has zero length")));
            }
            el.section.validate()?;
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_length(&self, e: usize) -> f64 {
        let [a, b] = self.elements[e].nodes;
        (self.nodes[b] - self.nodes[a]).norm()
    }

    pub fn element_midpoint(&self, e: usize) -> Vector3<f64> {
        let [a, b] = self.elements[e].nodes;
        (self.nodes[a] + self.nodes[b]) * 0.5
    }

    pub fn is_clamped(&self, node: usize) -> bool {
        self.clamped.contains(&node)
    }

    /// Compact numbering of the unconstrained nodal DOFs (six per free node).
    pub fn dof_map(&self) -> DofMap {
        let mut base = Vec::with_capacity(self.nodes.len());
        let mut n = 0;
        for i in 0..self.nodes.len() {
            if self.is_clamped(i) {
                base.push(None);
            } else {
                base.push(Some(n));
                n += 6;
            }
        }
        DofMap { base, n }
    }

    /// Copy with every element's stiffness divided by `σ`.
    pub fn scaled(&self, sigma: f64) -> Result<Self> {
        let mut m = self.clone();
        for el in &mut m.elements {
            el.section = scale_stiffness(&el.section, sigma)?;
        }
        Ok(m)
    }

    /// Total structural mass.
    pub fn mass(&self) -> f64 {
        (0..self.elements.len())
            .map(|e| self.elements[e].section.mu * self.element_length(e))
            .sum()
    }
}

/// Map from node index to the first of its six DOFs in a global vector.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub base: Vec<Option<usize>>,
    pub n: usize,
}

impl DofMap {
    pub fn pack(&self, states: &[NodalState]) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for (i, b) in self.base.iter().enumerate() {
            if let Some(b) = *b {
                for k in 0..3 {
                    x[b + k] = states[i].u[k];
                    x[b + 3 + k] = states[i].psi[k];
                }
            }
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> Vec<NodalState> {
        self.base
            .iter()
            .map(|b| match *b {
                Some(b) => NodalState {
                    u: Vector3::new(x[b], x[b + 1], x[b + 2]),
                    psi: Vector3::new(x[b + 3], x[b + 4], x[b + 5]),
                    ..Default::default()
                },
                None => NodalState::default(),
            })
            .collect()
    }
}

/// Nodal displacement, rotation vector and their time derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NodalState {
    pub u: Vector3<f64>,
    pub psi: Vector3<f64>,
    pub u_dot: Vector3<f64>,
    pub psi_dot: Vector3<f64>,
    pub u_ddot: Vector3<f64>,
    pub psi_ddot: Vector3<f64>,
}

impl NodalState {
    pub fn at_rest(u: Vector3<f64>, psi: Vector3<f64>) -> Self {
        Self {
            u,
            psi,
            ..Default::default()
        }
    }
}

/// Element data needed by the strain-energy kernel.
#[derive(Clone, Debug)]
pub struct ElementGeom {
    pub h: f64,
    /// Undeformed tangent `x₀' = (r₂ − r₁)/h`.
    pub dx0: [f64; 3],
    pub frame: [[f64; 3]; 3],
    pub kappa0: [f64; 3],
    pub s: [[f64; 6]; 6],
}

impl ElementGeom {
    pub fn new(mesh: &BeamMesh, e: usize) -> Self {
        let el = &mesh.elements[e];
        let [a, b] = el.nodes;
        let d = mesh.nodes[b] - mesh.nodes[a];
        let h = d.norm();
        let sm = el.section.stiffness_matrix();
        Self {
            h,
            dx0: [d.x / h, d.y / h, d.z / h],
            frame: std::array::from_fn(|i| std::array::from_fn(|j| el.frame[(i, j)])),
            kappa0: [el.kappa0.x, el.kappa0.y, el.kappa0.z],
            s: std::array::from_fn(|i| std::array::from_fn(|j| sm[(i, j)])),
        }
    }
}

/// Mid-point strains for relative displacement `d = u₂ − u₁` and end rotations.
pub fn element_strains<S: Scalar>(g: &ElementGeom, d: &V3<S>, p1: &V3<S>, p2: &V3<S>) -> (V3<S>, V3<S>) {
    let inv_h = 1.0 / g.h;
    let xp: V3<S> = std::array::from_fn(|i| d[i] * inv_h + g.dx0[i]);
    let pm: V3<S> = std::array::from_fn(|i| (p1[i] + p2[i]) * 0.5);
    let pp: V3<S> = std::array::from_fn(|i| (p2[i] - p1[i]) * inv_h);
    let (r, t) = rotation_and_tangent(&pm);
    let rt_x = matvec3_t(&r, &xp);
    let gb = cmatvec3_t(&g.frame, &rt_x);
    let tpp = matvec3(&t, &pp);
    let kb = cmatvec3_t(&g.frame, &matvec3_t(&r, &tpp));
    let gamma = [gb[0] - 1.0, gb[1], gb[2]];
    let kappa = [kb[0] - g.kappa0[0], kb[1] - g.kappa0[1], kb[2] - g.kappa0[2]];
    (gamma, kappa)
}

/// Element strain energy.
pub fn element_energy<S: Scalar>(g: &ElementGeom, d: &V3<S>, p1: &V3<S>, p2: &V3<S>) -> S {
    let (gam, kap) = element_strains(g, d, p1, p2);
    let e = [gam[0], gam[1], gam[2], kap[0], kap[1], kap[2]];
    let mut acc = S::cst(0.0);
    for i in 0..6 {
        let mut row = S::cst(0.0);
        for j in 0..6 {
            if g.s[i][j] != 0.0 {
                row = row + e[j] * g.s[i][j];
            }
        }
        acc = acc + e[i] * row;
    }
    acc * (0.5 * g.h)
}

/// Element DOF ordering: `[u₁, ψ₁, u₂, ψ₂]`.
#[inline]
fn dof_to_var(k: usize) -> (usize, f64) {
    // returns (hyper-dual variable index, sign)
    match k {
        0..=2 => (k, -1.0),
        3..=5 => (k, 1.0),
        6..=8 => (k - 6, 1.0),
        _ => (k - 3, 1.0),
    }
}

/// Internal force vector and tangent stiffness of one element.
pub fn element_force_tangent(g: &ElementGeom, x: &[f64; 12]) -> ([f64; 12], [[f64; 12]; 12]) {
    type D = HyperDual<9>;
    let d: V3<D> = std::array::from_fn(|i| D::variable(x[6 + i] - x[i], i));
    let p1: V3<D> = std::array::from_fn(|i| D::variable(x[3 + i], 3 + i));
    let p2: V3<D> = std::array::from_fn(|i| D::variable(x[9 + i], 6 + i));
    let en = element_energy(g, &d, &p1, &p2);
    let mut f = [0.0; 12];
    let mut k = [[0.0; 12]; 12];
    for a in 0..12 {
        let (va, sa) = dof_to_var(a);
        f[a] = sa * en.g[va];
        for b in 0..12 {
            let (vb, sb) = dof_to_var(b);
            k[a][b] = sa * sb * en.h[va][vb];
        }
    }
    (f, k)
}

/// Internal force vector only (plain floating point).
pub fn element_force(g: &ElementGeom, x: &[f64; 12]) -> [f64; 12] {
    element_force_tangent(g, x).0
}

/// Consistent mass of a linear element, `[u₁, ψ₁, u₂, ψ₂]` ordering.
pub fn element_mass(mesh: &BeamMesh, e: usize) -> [[f64; 12]; 12] {
    let el = &mesh.elements[e];
    let h = mesh.element_length(e);
    let jb = el.frame * el.section.j_rho * el.frame.transpose();
    let mut m = [[0.0; 12]; 12];
    for a in 0..2 {
        for b in 0..2 {
            let w = if a == b { 2.0 } else { 1.0 } * h / 6.0;
            for i in 0..3 {
                m[6 * a + i][6 * b + i] = el.section.mu * w;
                for j in 0..3 {
                    m[6 * a + 3 + i][6 * b + 3 + j] = jb[(i, j)] * w;
                }
            }
        }
    }
    m
}

fn gather(states: &[NodalState], el: &BeamElement) -> [f64; 12] {
    let mut x = [0.0; 12];
    for (a, &n) in el.nodes.iter().enumerate() {
        for i in 0..3 {
            x[6 * a + i] = states[n].u[i];
            x[6 * a + 3 + i] = states[n].psi[i];
        }
    }
    x
}

/// Strain measures of an element at its mid-point.
pub fn strain_measures(mesh: &BeamMesh, e: usize, states: &[NodalState]) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let el = &mesh.elements[e];
    for &n in &el.nodes {
        check_rotation(&states[n].psi)?;
    }
    let g = ElementGeom::new(mesh, e);
    let x = gather(states, el);
    let d = [x[6] - x[0], x[7] - x[1], x[8] - x[2]];
    let (gam, kap) = element_strains(&g, &d, &[x[3], x[4], x[5]], &[x[9], x[10], x[11]]);
    Ok((Vector3::from(gam), Vector3::from(kap)))
}

/// Section resultants of an element at its mid-point, in section axes.
pub fn element_resultants(mesh: &BeamMesh, e: usize, states: &[NodalState]) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (g, k) = strain_measures(mesh, e, states)?;
    Ok(sectional_loads(&g, &k, &mesh.elements[e].section))
}

fn check_rotation(psi: &Vector3<f64>) -> Result<()> {
    let n = psi.norm();
    if !(n < 2.0 * std::f64::consts::PI) {
        return Err(Error::RotationRange { norm: n });
    }
    Ok(())
}

/// Scatter helper from element-local `[u₁,ψ₁,u₂,ψ₂]` into global DOFs.
pub fn element_dofs(map: &DofMap, el: &BeamElement) -> [Option<usize>; 12] {
    let mut out = [None; 12];
    for (a, &n) in el.nodes.iter().enumerate() {
        if let Some(b) = map.base[n] {
            for i in 0..6 {
                out[6 * a + i] = Some(b + i);
            }
        }
    }
    out
}

/// Assembled structural matrices over the unconstrained DOFs.
#[derive(Clone, Debug)]
pub struct TangentSystem {
    pub m_s: DMatrix<f64>,
    pub c_s: DMatrix<f64>,
    pub k_e: DMatrix<f64>,
    pub k_g: DMatrix<f64>,
    pub f_int: DVector<f64>,
    pub dofs: DofMap,
}

impl TangentSystem {
    pub fn k_tan(&self) -> DMatrix<f64> {
        &self.k_e + &self.k_g
    }
}

/// Assembles mass, stiffness and internal force for the given state.
///
/// `C_s` is the Coriolis matrix `2 M_uu ω̃` for a frame rotating at
/// `omega_b`; [`assemble`] uses a non-rotating frame so it is zero.
pub fn assemble_rotating(mesh: &BeamMesh, states: &[NodalState], sigma: f64, omega_b: &Vector3<f64>) -> Result<TangentSystem> {
    if states.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_nodes(),
            got: states.len(),
        });
    }
    if mesh.clamped.is_empty() {
        return Err(Error::Constraint(
            "no clamped node: the reduced stiffness is singular (rigid-body modes unconstrained)".into(),
        ));
    }
    let mesh = if sigma == 1.0 { mesh.clone() } else { mesh.scaled(sigma)? };
    let map = mesh.dof_map();
    let n = map.n;
    let mut m_s = DMatrix::zeros(n, n);
    let mut c_s = DMatrix::zeros(n, n);
    let mut k_e = DMatrix::zeros(n, n);
    let mut k_t = DMatrix::zeros(n, n);
    let mut f_int = DVector::zeros(n);
    let w = crate::rotation::skew(omega_b);
    for (e, el) in mesh.elements.iter().enumerate() {
        for &nd in &el.nodes {
            check_rotation(&states[nd].psi)?;
        }
        let g = ElementGeom::new(&mesh, e);
        let dofs = element_dofs(&map, el);
        let (f, kt) = element_force_tangent(&g, &gather(states, el));
        let (_, k0) = element_force_tangent(&g, &[0.0; 12]);
        let me = element_mass(&mesh, e);
        for a in 0..12 {
            let Some(ia) = dofs[a] else { continue };
            f_int[ia] += f[a];
            for b in 0..12 {
                let Some(ib) = dofs[b] else { continue };
                k_t[(ia, ib)] += kt[a][b];
                k_e[(ia, ib)] += k0[a][b];
                m_s[(ia, ib)] += me[a][b];
            }
        }
        // Coriolis coupling on translational DOFs: 2 m_ab ω̃
        for a in 0..2 {
            for b in 0..2 {
                let mab = me[6 * a][6 * b];
                for i in 0..3 {
                    for j in 0..3 {
                        if let (Some(ia), Some(ib)) = (dofs[6 * a + i], dofs[6 * b + j]) {
                            c_s[(ia, ib)] += 2.0 * mab * w[(i, j)];
                        }
                    }
                }
            }
        }
    }
    let k_g = k_t - &k_e;
    Ok(TangentSystem {
        m_s,
        c_s,
        k_e,
        k_g,
        f_int,
        dofs: map,
    })
}

/// Assembles the structural tangent system in a non-rotating frame.
pub fn assemble(mesh: &BeamMesh, states: &[NodalState], sigma: f64) -> Result<TangentSystem> {
    assemble_rotating(mesh, states, sigma, &Vector3::zeros())
}

/// External loading for [`static_solve`].
pub trait DistributedLoad {
    /// Consistent nodal force/moment `[F; M]` (body axes) for every node.
    fn nodal_loads(&self, mesh: &BeamMesh, states: &[NodalState]) -> Vec<[f64; 6]>;

    /// Whether the loads depend on the deformation (follower loads).
    fn is_follower(&self) -> bool {
        false
    }
}

/// Uniform load per unit length. A follower load is given in deformed
/// section axes and rotates with the section; a dead load is in body axes.
#[derive(Clone, Debug)]
pub struct UniformLoad {
    pub force: Vector3<f64>,
    pub follower: bool,
}

impl DistributedLoad for UniformLoad {
    fn nodal_loads(&self, mesh: &BeamMesh, states: &[NodalState]) -> Vec<[f64; 6]> {
        let mut out = vec![[0.0; 6]; mesh.n_nodes()];
        for (e, el) in mesh.elements.iter().enumerate() {
            let h = mesh.element_length(e);
            let [a, b] = el.nodes;
            let f = if self.follower {
                let pm = (states[a].psi + states[b].psi) * 0.5;
                let (r, _) = rotation_and_tangent(&[pm.x, pm.y, pm.z]);
                let r = Matrix3::from_fn(|i, j| r[i][j]);
                r * el.frame * self.force
            } else {
                self.force
            };
            for &n in &el.nodes {
                for i in 0..3 {
                    out[n][i] += f[i] * h * 0.5;
                }
            }
        }
        out
    }

    fn is_follower(&self) -> bool {
        self.follower
    }
}

/// Relative residual below which a stalled Newton iteration is accepted.
const STALL_TOL: f64 = 1e-6;
/// Contraction ratio above which an iteration counts as stalled.
const STALL_RATIO: f64 = 0.5;
const STALL_FLOOR_TOL: f64 = 1e-3;

/// Newton options for [`static_solve`]. The iteration stops at `rel_tol`,
/// or earlier when the residual has stalled below 1e-6 relative.
#[derive(Clone, Debug)]
pub struct StaticOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub min_load_fraction: f64,
}

impl Default for StaticOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 50,
            min_load_fraction: 1.0 / 64.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StaticSolution {
    pub states: Vec<NodalState>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

fn band_width(mesh: &BeamMesh, map: &DofMap) -> usize {
    let mut bw = 0;
    for el in &mesh.elements {
        let d = element_dofs(map, el);
        let idx: Vec<usize> = d.iter().flatten().copied().collect();
        if let (Some(lo), Some(hi)) = (idx.iter().min(), idx.iter().max()) {
            bw = bw.max(hi - lo);
        }
    }
    bw
}

fn load_vector(map: &DofMap, loads: &[[f64; 6]]) -> DVector<f64> {
    let mut f = DVector::zeros(map.n);
    for (i, b) in map.base.iter().enumerate() {
        if let Some(b) = *b {
            for k in 0..6 {
                f[b + k] = loads[i][k];
            }
        }
    }
    f
}

struct Assembled {
    f_int: DVector<f64>,
    k: BorderedBanded,
}

fn assemble_banded(mesh: &BeamMesh, map: &DofMap, states: &[NodalState], bw: usize, tangent: bool) -> Result<Assembled> {
    let mut k = BorderedBanded::new(map.n, 0, bw, bw);
    let mut f_int = DVector::zeros(map.n);
    for (e, el) in mesh.elements.iter().enumerate() {
        for &nd in &el.nodes {
            check_rotation(&states[nd].psi)?;
        }
        let g = ElementGeom::new(mesh, e);
        let dofs = element_dofs(map, el);
        let xs = gather(states, el);
        let (f, kt) = if tangent {
            element_force_tangent(&g, &xs)
        } else {
            (element_force(&g, &xs), element_force_tangent(&g, &[0.0; 12]).1)
        };
        for a in 0..12 {
            let Some(ia) = dofs[a] else { continue };
            f_int[ia] += f[a];
            for b in 0..12 {
                if let Some(ib) = dofs[b] {
                    k.add(ia, ib, kt[a][b]);
                }
            }
        }
    }
    Ok(Assembled { f_int, k })
}

/// Adds `−∂f_ext/∂η` (load stiffness of follower loads) by central differences.
fn add_load_stiffness(k: &mut BorderedBanded, mesh: &BeamMesh, map: &DofMap, states: &[NodalState], load: &dyn DistributedLoad, scale: f64, bw: usize) {
    let eps = 1e-7;
    let mut st = states.to_vec();
    for (node, b) in map.base.iter().enumerate() {
        let Some(b) = *b else { continue };
        for c in 0..6 {
            let orig = st[node];
            let bump = |s: &mut NodalState, v: f64| {
                if c < 3 {
                    s.u[c] += v
                } else {
                    s.psi[c - 3] += v
                }
            };
            bump(&mut st[node], eps);
            let fp = load_vector(map, &load.nodal_loads(mesh, &st));
            st[node] = orig;
            bump(&mut st[node], -eps);
            let fm = load_vector(map, &load.nodal_loads(mesh, &st));
            st[node] = orig;
            let col = b + c;
            for i in col.saturating_sub(bw)..(col + bw + 1).min(map.n) {
                let dv = (fp[i] - fm[i]) / (2.0 * eps);
                if dv != 0.0 {
                    k.add(i, col, -scale * dv);
                }
            }
        }
    }
}

fn newton_at_load(
    mesh: &BeamMesh,
    map: &DofMap,
    load: &dyn DistributedLoad,
    lambda: f64,
    start: &[NodalState],
    opts: &StaticOptions,
    bw: usize,
    history: &mut Vec<f64>,
) -> Option<(Vec<NodalState>, usize)> {
    let mut x = map.pack(start);
    let mut growth = 0;
    let mut prev = f64::INFINITY;
    for it in 0..opts.max_iter {
        let states = map.unpack(&x);
        let a = assemble_banded(mesh, map, &states, bw, true).ok()?;
        let f_ext = load_vector(map, &load.nodal_loads(mesh, &states)) * lambda;
        let r = &f_ext - &a.f_int;
        let rn = r.norm() / f_ext.norm().max(1e-300);
        history.push(rn);
        if !rn.is_finite() {
            return None;
        }
        if rn < opts.rel_tol {
            return Some((states, it));
        }
        // quadratic contraction has stopped at the round-off floor of the
        // internal forces (stiff axial terms cancel to about EA·ε per node)
        if rn <= STALL_TOL && it >= 2 && rn > STALL_RATIO * prev {
            return Some((states, it));
        }
        if rn > prev {
            growth += 1;
            if growth >= 5 {
                return None;
            }
        } else {
            growth = 0;
        }
        prev = rn;
        let mut k = a.k;
        if load.is_follower() {
            add_load_stiffness(&mut k, mesh, map, &states, load, lambda, bw);
        }
        let dx = k.factor().ok()?.solve(r.as_slice());
        let dmax = dx.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let xmax = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        x += DVector::from_vec(dx);
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // a correction at round-off size means the residual is pure noise,
        // which for very small loads can exceed the relative stall tolerance
        if it >= 1 && rn <= STALL_FLOOR_TOL && dmax <= 1e-12 * (1.0 + xmax) {
            return Some((map.unpack(&x), it + 1));
        }
    }
    None
}

/// Nonlinear static equilibrium `f_int(η) = f_ext(η)` by Newton iteration with
/// recursive load-step bisection on divergence.
pub fn static_solve(mesh: &BeamMesh, load: &dyn DistributedLoad, sigma: f64, opts: &StaticOptions) -> Result<StaticSolution> {
    if mesh.clamped.is_empty() {
        return Err(Error::Constraint("static solve needs at least one clamped node".into()));
    }
    let mesh = mesh.scaled(sigma)?;
    let map = mesh.dof_map();
    let bw = band_width(&mesh, &map);
    let zero = vec![NodalState::default(); mesh.n_nodes()];
    let mut history = Vec::new();
    if load_vector(&map, &load.nodal_loads(&mesh, &zero)).norm() == 0.0 && !load.is_follower() {
        return Ok(StaticSolution {
            states: zero,
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    let mut lambda = 0.0f64;
    let mut step = 1.0f64;
    let mut states = zero;
    let mut iterations = 0;
    while lambda < 1.0 {
        let target = (lambda + step).min(1.0);
        match newton_at_load(&mesh, &map, load, target, &states, opts, bw, &mut history) {
            Some((s, it)) => {
                states = s;
                iterations += it;
                lambda = target;
                step = (step * 2.0).min(1.0);
            }
            None => {
                step *= 0.5;
                if step < opts.min_load_fraction {
                    return Err(Error::NonConvergence {
                        what: format!("static solve (reached load fraction {lambda:.4})"),
                        iterations: history.len(),
                        last: history.last().copied().unwrap_or(f64::NAN),
                        history,
                    });
                }
            }
        }
    }
    Ok(StaticSolution {
        states,
        iterations,
        residual_history: history,
    })
}

/// Linear static solution `K_e η = f_ext(0)`.
pub fn static_solve_linear(mesh: &BeamMesh, load: &dyn DistributedLoad, sigma: f64) -> Result<Vec<NodalState>> {
    if mesh.clamped.is_empty() {
        return Err(Error::Constraint("static solve needs at least one clamped node".into()));
    }
    let mesh = mesh.scaled(sigma)?;
    let map = mesh.dof_map();
    let bw = band_width(&mesh, &map);
    let zero = vec![NodalState::default(); mesh.n_nodes()];
    let a = assemble_banded(&mesh, &map, &zero, bw, false)?;
    let f = load_vector(&map, &load.nodal_loads(&mesh, &zero));
    let x = a.k.factor()?.solve(f.as_slice());
    Ok(map.unpack(&DVector::from_vec(x)))
}

/// Dominant deformation type of a vibration mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    OutOfPlaneBending,
    InPlaneBending,
    Torsion,
    Axial,
}

impl ModeKind {
    pub fn describe(&self) -> &'static str {
        match self {
            ModeKind::OutOfPlaneBending => "out-of-plane bending",
            ModeKind::InPlaneBending => "in-plane bending",
            ModeKind::Torsion => "torsion",
            ModeKind::Axial => "axial/shear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeLabel {
    pub kind: ModeKind,
    /// 1-based order within its kind ("1st torsion" has order 1).
    pub order: usize,
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let suffix = match self.order {
            1 => "st",
            2 => "nd",
            3 => "rd",
            _ => "th",
        };
        write!(f, "{}{} {}", self.order, suffix, self.kind.describe())
    }
}

#[derive(Clone, Debug)]
pub struct Mode {
    /// Circular frequency [rad/s].
    pub omega: f64,
    pub shape: Vec<NodalState>,
    pub label: ModeLabel,
}

/// Strain-energy fractions `[axial/shear, torsion, out-of-plane, in-plane]`
/// of a small deformation.
pub fn strain_energy_fractions(mesh: &BeamMesh, shape: &[NodalState]) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for e in 0..mesh.elements.len() {
        let el = &mesh.elements[e];
        let h = mesh.element_length(e);
        let g = ElementGeom::new(mesh, e);
        let x = gather(shape, el);
        let d = [x[6] - x[0], x[7] - x[1], x[8] - x[2]];
        // linearized strains through a directional derivative
        let s = 1e-6;
        let ds = d.map(|v| v * s);
        let (ga, ka) = element_strains(&g, &ds, &[x[3] * s, x[4] * s, x[5] * s], &[x[9] * s, x[10] * s, x[11] * s]);
        let sec = &el.section;
        acc[0] += h * (sec.ea * ga[0].powi(2) + sec.ga2 * ga[1].powi(2) + sec.ga3 * ga[2].powi(2));
        acc[1] += h * sec.gj * ka[0].powi(2);
        acc[2] += h * sec.ei2 * ka[1].powi(2);
        acc[3] += h * sec.ei3 * ka[2].powi(2);
    }
    let tot: f64 = acc.iter().sum::<f64>().max(1e-300);
    acc.map(|v| v / tot)
}

/// Natural frequencies of the unloaded, non-rotating beam,
/// `K_e φ = ω² M_s φ` on the constrained system.
pub fn modal_frequencies(mesh: &BeamMesh, sigma: f64, n_modes: usize) -> Result<Vec<Mode>> {
    let zero = vec![NodalState::default(); mesh.n_nodes()];
    let sys = assemble(mesh, &zero, sigma)?;
    if n_modes > sys.dofs.n {
        return Err(Error::InvalidInput(format!(
            "requested {n_modes} modes but the reduced system has {} DOFs",
            sys.dofs.n
        )));
    }
    let (vals, vecs) = sym_generalized_eigen(&sys.k_e, &sys.m_s)?;
    let mut counts = [0usize; 4];
    let mut modes = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let shape = sys.dofs.unpack(&vecs.column(k).into_owned());
        let fr = strain_energy_fractions(mesh, &shape);
        let (imax, _) = fr
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let kind = match imax {
            0 => ModeKind::Axial,
            1 => ModeKind::Torsion,
            2 => ModeKind::OutOfPlaneBending,
            _ => ModeKind::InPlaneBending,
        };
        counts[imax] += 1;
        modes.push(Mode {
            omega: vals[k].max(0.0).sqrt(),
            shape,
            label: ModeLabel { kind, order: counts[imax] },
        });
    }
    Ok(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn element_tangent_matches_finite_difference_of_force() {
        let mesh = BeamMesh::cantilever(2.0, 2, &CrossSection::baseline()).unwrap();
        let g = ElementGeom::new(&mesh, 0);
        let x: [f64; 12] = [0.01, -0.02, 0.03, 0.1, -0.2, 0.05, 0.02, 0.01, 0.2, 0.3, 0.1, -0.4];
        let (_, k) = element_force_tangent(&g, &x);
        let h = 1e-6;
        for b in 0..12 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += h;
            xm[b] -= h;
            let fp = element_force(&g, &xp);
            let fm = element_force(&g, &xm);
            for a in 0..12 {
                let fd = (fp[a] - fm[a]) / (2.0 * h);
                let scale = k[a][b].abs().max(1e3);
                assert!((fd - k[a][b]).abs() < 1e-5 * scale, "K[{a}][{b}] = {} vs fd {}", k[a][b], fd);
            }
        }
    }

    #[test]
    fn baseline_section_is_positive_definite() {
        CrossSection::baseline().validate().unwrap();
        assert_relative_eq!(scale_stiffness(&CrossSection::baseline(), 4.0).unwrap().ei2, 5e3);
    }
}
