//! Bilinear and linear forms, ghost penalty stabilizers and block system composition.
//!
//! Unknowns are ordered `[u_1, u_2, p_1, p_2, mu]`, where `mu` is the optional
//! Lagrange multiplier enforcing zero-mean pressure. Blocks are kept in their own
//! index ranges: `A`, `S_u` on velocities, `B`, `B0`, `S_b` map velocities to
//! pressure test rows (`B[q, u] = b(u, q)`), `S_p` on pressures.
//!
//! On the interface the normal `n` points from side One into side Two, averages
//! are `{w} = (w_1 + w_2) / 2` and jumps `[w] = w_1 - w_2`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{build_macro_partition, MacroPartition};
use crate::geometry::{clip_segment, effective_values, ActiveMeshes, LevelSet, Side};
use crate::linalg::{CsrMatrix, Triplets};
use crate::mesh::BackgroundMesh;
use crate::quadrature::{quadrature_segment, QuadRule};
use crate::spaces::{DofMap, ElementPair};
use crate::{Error, Point, Result};

/// Volume quadrature degree (exact for products of RT1 functions).
pub const VOLUME_DEGREE: usize = 4;
/// Interface, boundary and face quadrature degree.
pub const SEGMENT_DEGREE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "unstab")]
    Unstabilized,
    #[serde(rename = "m1")]
    Method1,
    #[serde(rename = "m2")]
    Method2,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Unstabilized, Method::Method1, Method::Method2];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Unstabilized => "unstab",
            Method::Method1 => "m1",
            Method::Method2 => "m2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unstab" | "unstabilized" => Ok(Method::Unstabilized),
            "m1" | "method1" => Ok(Method::Method1),
            "m2" | "method2" => Ok(Method::Method2),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Faces carrying ghost penalty terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StabDomain {
    FullFaces,
    Macro { delta_1: f64, delta_2: f64 },
}

impl StabDomain {
    pub fn name(&self) -> &'static str {
        match self {
            StabDomain::FullFaces => "full",
            StabDomain::Macro { .. } => "macro",
        }
    }
}

/// Which bilinear form tests the divergence equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DivergenceForm {
    /// `b0` and `F0`: no boundary coupling in the pressure test rows.
    #[default]
    B0,
    /// `b` and `F`: adds `(u.n, q)` and `-(u_B, q)` on the velocity boundary.
    B,
}

/// Condition imposed on the outer box boundary in interface mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Pressure,
    Velocity,
}

/// Interface problem on the whole box, or fictitious domain where side Two is
/// the physical domain and the interface its velocity boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Interface(BoundaryKind),
    Fictitious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Diagonal inverse permeability per side.
    pub eta: [[f64; 2]; 2],
    pub kappa_gamma: f64,
    pub xi: f64,
    /// Boundary penalty `lambda_u = c / h`.
    pub c_lambda: f64,
    pub tau_u: f64,
    pub tau_p: f64,
    pub tau_b: f64,
    pub gamma: f64,
    pub method: Method,
    pub stab: StabDomain,
    pub divergence: DivergenceForm,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            eta: [[1.0, 1.0], [1.0, 1.0]],
            kappa_gamma: 1.0,
            xi: 0.125,
            c_lambda: 1.0,
            tau_u: 1.0,
            tau_p: 1.0,
            tau_b: 1.0,
            gamma: 1.0,
            method: Method::Unstabilized,
            stab: StabDomain::FullFaces,
            divergence: DivergenceForm::B0,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.eta.iter().flatten().any(|&e| !(e > 0.0)) {
            return bad(format!("eta must be positive, got {:?}", self.eta));
        }
        if !(self.kappa_gamma > 0.0) {
            return bad(format!(
                "kappa_gamma must be positive, got {}",
                self.kappa_gamma
            ));
        }
        if !(self.xi > 0.0 && self.xi <= 0.25) {
            return bad(format!("xi must lie in (0, 1/4], got {}", self.xi));
        }
        if !(self.c_lambda > 0.0) {
            return bad(format!("c must be positive, got {}", self.c_lambda));
        }
        if [self.tau_u, self.tau_p, self.tau_b]
            .iter()
            .any(|&t| !(t >= 0.0))
        {
            return bad("stabilization parameters must be non-negative".into());
        }
        if !(-1.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [-1, 1], got {}", self.gamma));
        }
        if let StabDomain::Macro { delta_1, delta_2 } = self.stab {
            if !(delta_1 > 0.0 && delta_1 <= 1.0 && delta_2 > 0.0 && delta_2 <= 1.0) {
                return bad(format!(
                    "delta must lie in (0, 1], got ({delta_1}, {delta_2})"
                ));
            }
        }
        Ok(())
    }
}

/// Source, boundary and interface data.
pub trait ProblemData: Sync {
    fn f(&self, _side: Side, _x: Point) -> Point {
        [0.0, 0.0]
    }
    fn g(&self, side: Side, x: Point) -> f64;
    fn p_hat(&self, _x: Point) -> f64 {
        0.0
    }
    fn p_b(&self, _x: Point) -> f64 {
        0.0
    }
    /// Prescribed normal velocity at `x` for outward normal `n`.
    fn u_b(&self, _x: Point, _n: Point) -> f64 {
        0.0
    }
}

/// Mesh, cut geometry, DOF maps and (optionally) macro-elements of one run.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: BackgroundMesh,
    pub active: ActiveMeshes,
    pub pair: ElementPair,
    pub mode: Mode,
    pub dofmaps: [DofMap; 2],
    pub macros: Option<MacroPartition>,
}

/// Start of each unknown block in the global vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Offsets {
    pub u: [usize; 2],
    pub p: [usize; 2],
    pub n_u: usize,
    pub n_p: usize,
}

impl Discretization {
    pub fn new(
        mesh: BackgroundMesh,
        level_set: &LevelSet,
        pair: ElementPair,
        mode: Mode,
        stab: StabDomain,
    ) -> Result<Self> {
        let active = ActiveMeshes::build(&mesh, level_set)?;
        let one = match mode {
            Mode::Interface(_) => DofMap::build(&mesh, &active, Side::One, pair),
            Mode::Fictitious => DofMap::empty(&mesh, Side::One, pair),
        };
        let two = DofMap::build(&mesh, &active, Side::Two, pair);
        let macros = match stab {
            StabDomain::FullFaces => None,
            StabDomain::Macro { delta_1, delta_2 } => {
                Some(build_macro_partition(&mesh, &active, delta_1, delta_2)?)
            }
        };
        Ok(Discretization {
            mesh,
            active,
            pair,
            mode,
            dofmaps: [one, two],
            macros,
        })
    }

    pub fn sides(&self) -> Vec<Side> {
        match self.mode {
            Mode::Interface(_) => Side::BOTH.to_vec(),
            Mode::Fictitious => vec![Side::Two],
        }
    }

    pub fn offsets(&self) -> Offsets {
        let (u1, u2) = (self.dofmaps[0].n_velocity, self.dofmaps[1].n_velocity);
        let (p1, p2) = (self.dofmaps[0].n_pressure, self.dofmaps[1].n_pressure);
        Offsets {
            u: [0, u1],
            p: [0, p1],
            n_u: u1 + u2,
            n_p: p1 + p2,
        }
    }

    /// Zero-mean pressure is imposed when no boundary or interface data fixes
    /// the pressure level.
    pub fn needs_mean_constraint(&self) -> bool {
        self.mode == Mode::Fictitious
    }

    /// Faces carrying stabilization on `side`, ascending.
    pub fn stabilized_faces(&self, side: Side) -> Vec<usize> {
        if !self.sides().contains(&side) {
            return Vec::new();
        }
        match &self.macros {
            None => self.active.faces[side.index()].clone(),
            Some(m) => m.side(side).stabilized_faces(),
        }
    }

    fn velocity_global(&self, side: Side, t: usize) -> Vec<usize> {
        let off = self.offsets().u[side.index()];
        self.dofmaps[side.index()]
            .velocity_dofs_of(t)
            .expect("element in active mesh")
            .iter()
            .map(|d| d + off)
            .collect()
    }

    fn pressure_global(&self, side: Side, t: usize) -> Vec<usize> {
        let off = self.offsets().p[side.index()];
        self.dofmaps[side.index()]
            .pressure_dofs_of(t)
            .expect("element in active mesh")
            .iter()
            .map(|d| d + off)
            .collect()
    }

    fn volume_rule(&self, side: Side, t: usize, degree: usize) -> Result<QuadRule> {
        let cut = self
            .active
            .cuts
            .get(t)
            .ok_or_else(|| Error::Internal(format!("missing cut geometry for element {t}")))?;
        Ok(cut.volume_rule(side, degree))
    }

    /// Interface segments of cut elements with the normal pointing from side One
    /// into side Two.
    fn interface_segments(&self) -> Vec<(usize, QuadRule, Point, f64)> {
        self.active
            .cut
            .iter()
            .filter_map(|&t| {
                let seg = self.active.cuts[t].interface.as_ref()?;
                let h = self.mesh.element_geometry(t).ok()?.diameter;
                Some((
                    t,
                    seg.rule(SEGMENT_DEGREE),
                    [-seg.normal[0], -seg.normal[1]],
                    h,
                ))
            })
            .collect()
    }

    /// Velocity-boundary pieces: `(side, element, rule, outward normal, h_T)`.
    fn velocity_boundary(&self) -> Vec<(Side, usize, QuadRule, Point, f64)> {
        match self.mode {
            Mode::Fictitious => self
                .active
                .cut
                .iter()
                .filter_map(|&t| {
                    let seg = self.active.cuts[t].interface.as_ref()?;
                    let h = self.mesh.element_geometry(t).ok()?.diameter;
                    Some((Side::Two, t, seg.rule(SEGMENT_DEGREE), seg.normal, h))
                })
                .collect(),
            Mode::Interface(BoundaryKind::Velocity) => self.box_boundary(),
            Mode::Interface(BoundaryKind::Pressure) => Vec::new(),
        }
    }

    fn pressure_boundary(&self) -> Vec<(Side, usize, QuadRule, Point, f64)> {
        match self.mode {
            Mode::Interface(BoundaryKind::Pressure) => self.box_boundary(),
            _ => Vec::new(),
        }
    }

    /// Box boundary faces split by side.
    fn box_boundary(&self) -> Vec<(Side, usize, QuadRule, Point, f64)> {
        let mut out = Vec::new();
        for (f, face) in self.mesh.faces.iter().enumerate() {
            if !face.is_boundary() {
                continue;
            }
            let (t, k) = (face.elements.0, face.local.0);
            let phi = effective_values(&self.mesh, t, &self.active.level_set);
            let tri = self.mesh.element_vertices(t);
            let (a, b) = ((k + 1) % 3, (k + 2) % 3);
            let normal = self.mesh.face_normal(f);
            let h = self
                .mesh
                .element_geometry(t)
                .map(|g| g.diameter)
                .unwrap_or(0.0);
            for side in self.sides() {
                if !self.active.contains(side, t) {
                    continue;
                }
                if let Some((p, q)) = clip_segment(tri[a], tri[b], phi[a], phi[b], side) {
                    let rule = quadrature_segment(p, q, SEGMENT_DEGREE);
                    if !rule.is_empty() {
                        out.push((side, t, rule, normal, h));
                    }
                }
            }
        }
        out
    }

    fn face_h(&self, f: usize) -> Result<f64> {
        let face = &self.mesh.faces[f];
        let a = self.mesh.element_geometry(face.elements.0)?.diameter;
        Ok(match face.elements.1 {
            Some(b) => 0.5 * (a + self.mesh.element_geometry(b)?.diameter),
            None => a,
        })
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Element-parallel triplet generation concatenated in element order.
fn collect_ordered<I, F>(items: &[I], nrows: usize, ncols: usize, f: F) -> Result<Triplets>
where
    I: Sync,
    F: Fn(&I) -> Result<Vec<(usize, usize, f64)>> + Sync + Send,
{
    let parts: Vec<Vec<(usize, usize, f64)>> = items.par_iter().map(f).collect::<Result<_>>()?;
    let mut t = Triplets::new(nrows, ncols);
    for part in parts {
        for (i, j, v) in part {
            t.push(i, j, v);
        }
    }
    Ok(t)
}

fn side_elements(disc: &Discretization) -> Vec<(Side, usize)> {
    disc.sides()
        .into_iter()
        .flat_map(|s| {
            disc.dofmaps[s.index()]
                .elements
                .iter()
                .map(move |&t| (s, t))
        })
        .collect()
}

/// `a(u, v)`: volume mass, interface average/jump terms and boundary penalty.
pub fn assemble_a(disc: &Discretization, params: &Params) -> Result<CsrMatrix> {
    let off = disc.offsets();
    let mesh = &disc.mesh;
    let mut trip = collect_ordered(&side_elements(disc), off.n_u, off.n_u, |&(side, t)| {
        let dofs = disc.velocity_global(side, t);
        let basis = disc.dofmaps[side.index()].velocity_basis(mesh, t)?;
        let eta = params.eta[side.index()];
        let n = dofs.len();
        let mut local = vec![0.0; n * n];
        for (x, w) in disc.volume_rule(side, t, VOLUME_DEGREE)?.iter() {
            let v = basis.values(x);
            for a in 0..n {
                for b in 0..n {
                    local[a * n + b] +=
                        w * (eta[0] * v[a][0] * v[b][0] + eta[1] * v[a][1] * v[b][1]);
                }
            }
        }
        Ok(scatter(&dofs, &dofs, &local))
    })?;

    if let Mode::Interface(_) = disc.mode {
        let segs = disc.interface_segments();
        trip.extend(collect_ordered(
            &segs,
            off.n_u,
            off.n_u,
            |(t, rule, normal, _)| {
                let (d1, d2) = (
                    disc.velocity_global(Side::One, *t),
                    disc.velocity_global(Side::Two, *t),
                );
                let b1 = disc.dofmaps[0].velocity_basis(mesh, *t)?;
                let b2 = disc.dofmaps[1].velocity_basis(mesh, *t)?;
                let dofs: Vec<usize> = d1.iter().chain(&d2).copied().collect();
                let n = dofs.len();
                let mut local = vec![0.0; n * n];
                for (x, w) in rule.iter() {
                    let tr1: Vec<f64> = b1.values(x).iter().map(|v| dot(*v, *normal)).collect();
                    let tr2: Vec<f64> = b2.values(x).iter().map(|v| dot(*v, *normal)).collect();
                    // coefficients of {v.n} and [v.n] for every local function
                    let avg: Vec<f64> = tr1
                        .iter()
                        .map(|v| 0.5 * v)
                        .chain(tr2.iter().map(|v| 0.5 * v))
                        .collect();
                    let jmp: Vec<f64> = tr1.iter().copied().chain(tr2.iter().map(|v| -v)).collect();
                    for a in 0..n {
                        for b in 0..n {
                            local[a * n + b] += w
                                * params.kappa_gamma
                                * (avg[a] * avg[b] + params.xi * jmp[a] * jmp[b]);
                        }
                    }
                }
                Ok(scatter(&dofs, &dofs, &local))
            },
        )?);
    }

    let bnd = disc.velocity_boundary();
    trip.extend(collect_ordered(
        &bnd,
        off.n_u,
        off.n_u,
        |(side, t, rule, normal, h)| {
            let dofs = disc.velocity_global(*side, *t);
            let basis = disc.dofmaps[side.index()].velocity_basis(mesh, *t)?;
            let lambda = params.c_lambda / h;
            let n = dofs.len();
            let mut local = vec![0.0; n * n];
            for (x, w) in rule.iter() {
                let tr: Vec<f64> = basis.values(x).iter().map(|v| dot(*v, *normal)).collect();
                for a in 0..n {
                    for b in 0..n {
                        local[a * n + b] += w * lambda * tr[a] * tr[b];
                    }
                }
            }
            Ok(scatter(&dofs, &dofs, &local))
        },
    )?);
    Ok(trip.to_csr())
}

/// Row-major local matrix to global triplets.
fn scatter(rows: &[usize], cols: &[usize], local: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            let v = local[a * cols.len() + b];
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// `(B, B0)` with `B0[q, u] = -(div u, q)` and `B = B0 + (u.n, q)` on the velocity boundary.
pub fn assemble_b_b0(disc: &Discretization) -> Result<(CsrMatrix, CsrMatrix)> {
    let off = disc.offsets();
    let mesh = &disc.mesh;
    let b0 = collect_ordered(&side_elements(disc), off.n_p, off.n_u, |&(side, t)| {
        let (ud, pd) = (disc.velocity_global(side, t), disc.pressure_global(side, t));
        let vb = disc.dofmaps[side.index()].velocity_basis(mesh, t)?;
        let pb = disc.dofmaps[side.index()].pressure_basis(mesh, t)?;
        let mut local = vec![0.0; pd.len() * ud.len()];
        for (x, w) in disc.volume_rule(side, t, VOLUME_DEGREE)?.iter() {
            let (dv, q) = (vb.divergences(x), pb.values(x));
            for a in 0..pd.len() {
                for b in 0..ud.len() {
                    local[a * ud.len() + b] -= w * q[a] * dv[b];
                }
            }
        }
        Ok(scatter(&pd, &ud, &local))
    })?;
    let mut b = b0.clone();
    let bnd = disc.velocity_boundary();
    b.extend(collect_ordered(
        &bnd,
        off.n_p,
        off.n_u,
        |(side, t, rule, normal, _)| {
            let (ud, pd) = (
                disc.velocity_global(*side, *t),
                disc.pressure_global(*side, *t),
            );
            let vb = disc.dofmaps[side.index()].velocity_basis(mesh, *t)?;
            let pb = disc.dofmaps[side.index()].pressure_basis(mesh, *t)?;
            let mut local = vec![0.0; pd.len() * ud.len()];
            for (x, w) in rule.iter() {
                let (v, q) = (vb.values(x), pb.values(x));
                for a in 0..pd.len() {
                    for bb in 0..ud.len() {
                        local[a * ud.len() + bb] += w * q[a] * dot(v[bb], *normal);
                    }
                }
            }
            Ok(scatter(&pd, &ud, &local))
        },
    )?);
    Ok((b.to_csr(), b0.to_csr()))
}

/// Face contributions shared by the three stabilizers.
struct FaceKernel<'a> {
    disc: &'a Discretization,
    face: usize,
}

impl FaceKernel<'_> {
    fn elements(&self) -> (usize, usize) {
        let f = &self.disc.mesh.faces[self.face];
        (f.elements.0, f.elements.1.expect("interior face"))
    }

    fn rule(&self) -> QuadRule {
        let [a, b] = self.disc.mesh.face_endpoints(self.face);
        quadrature_segment(a, b, SEGMENT_DEGREE)
    }
}

fn stabilizer_faces(disc: &Discretization) -> Vec<(Side, usize)> {
    disc.sides()
        .into_iter()
        .flat_map(|s| disc.stabilized_faces(s).into_iter().map(move |f| (s, f)))
        .collect()
}

/// `s_u`: full-vector jumps of normal derivatives of order `0..=k+1`, weight `tau_u h^(2j+1)`.
pub fn assemble_s_u(disc: &Discretization, params: &Params) -> Result<CsrMatrix> {
    let off = disc.offsets();
    let mesh = &disc.mesh;
    let orders = disc.pair.pressure_degree() + 1;
    let faces = stabilizer_faces(disc);
    if params.tau_u == 0.0 {
        return Ok(CsrMatrix::zeros(off.n_u, off.n_u));
    }
    Ok(collect_ordered(&faces, off.n_u, off.n_u, |&(side, f)| {
        let k = FaceKernel { disc, face: f };
        let (tp, tm) = k.elements();
        let dofs: Vec<usize> = disc
            .velocity_global(side, tp)
            .into_iter()
            .chain(disc.velocity_global(side, tm))
            .collect();
        let bp = disc.dofmaps[side.index()].velocity_basis(mesh, tp)?;
        let bm = disc.dofmaps[side.index()].velocity_basis(mesh, tm)?;
        let n = dofs.len();
        let nf = mesh.face_normal(f);
        let h = disc.face_h(f)?;
        let mut local = vec![0.0; n * n];
        for (x, w) in k.rule().iter() {
            for j in 0..=orders {
                let weight = w * params.tau_u * h.powi(2 * j as i32 + 1);
                let jump: Vec<Point> = bp
                    .normal_derivatives(x, nf, j)
                    .into_iter()
                    .chain(
                        bm.normal_derivatives(x, nf, j)
                            .into_iter()
                            .map(|v| [-v[0], -v[1]]),
                    )
                    .collect();
                for a in 0..n {
                    for b in 0..n {
                        local[a * n + b] += weight * dot(jump[a], jump[b]);
                    }
                }
            }
        }
        Ok(scatter(&dofs, &dofs, &local))
    })?
    .to_csr())
}

/// `s_p`: pressure derivative jumps of order `0..=k`, weight `tau_p h^(2j+gamma)`.
pub fn assemble_s_p(disc: &Discretization, params: &Params) -> Result<CsrMatrix> {
    let off = disc.offsets();
    let mesh = &disc.mesh;
    let orders = disc.pair.pressure_degree();
    if params.tau_p == 0.0 {
        return Ok(CsrMatrix::zeros(off.n_p, off.n_p));
    }
    Ok(
        collect_ordered(&stabilizer_faces(disc), off.n_p, off.n_p, |&(side, f)| {
            let k = FaceKernel { disc, face: f };
            let (tp, tm) = k.elements();
            let dofs: Vec<usize> = disc
                .pressure_global(side, tp)
                .into_iter()
                .chain(disc.pressure_global(side, tm))
                .collect();
            let bp = disc.dofmaps[side.index()].pressure_basis(mesh, tp)?;
            let bm = disc.dofmaps[side.index()].pressure_basis(mesh, tm)?;
            let n = dofs.len();
            let nf = mesh.face_normal(f);
            let h = disc.face_h(f)?;
            let mut local = vec![0.0; n * n];
            for (x, w) in k.rule().iter() {
                for j in 0..=orders {
                    let weight = w * params.tau_p * h.powf(2.0 * j as f64 + params.gamma);
                    let jump: Vec<f64> = bp
                        .normal_derivatives(x, nf, j)
                        .into_iter()
                        .chain(bm.normal_derivatives(x, nf, j).into_iter().map(|v| -v))
                        .collect();
                    for a in 0..n {
                        for b in 0..n {
                            local[a * n + b] += weight * jump[a] * jump[b];
                        }
                    }
                }
            }
            Ok(scatter(&dofs, &dofs, &local))
        })?
        .to_csr(),
    )
}

/// `S_b[q, u] = s_b(u, q)`: jumps of divergence derivatives against pressure
/// derivative jumps, orders `0..=k`, weight `tau_b h^(2j+gamma)`.
pub fn assemble_s_b(disc: &Discretization, params: &Params) -> Result<CsrMatrix> {
    let off = disc.offsets();
    let mesh = &disc.mesh;
    let orders = disc.pair.pressure_degree();
    if params.tau_b == 0.0 {
        return Ok(CsrMatrix::zeros(off.n_p, off.n_u));
    }
    Ok(
        collect_ordered(&stabilizer_faces(disc), off.n_p, off.n_u, |&(side, f)| {
            let k = FaceKernel { disc, face: f };
            let (tp, tm) = k.elements();
            let ud: Vec<usize> = disc
                .velocity_global(side, tp)
                .into_iter()
                .chain(disc.velocity_global(side, tm))
                .collect();
            let pd: Vec<usize> = disc
                .pressure_global(side, tp)
                .into_iter()
                .chain(disc.pressure_global(side, tm))
                .collect();
            let (vp, vm) = (
                disc.dofmaps[side.index()].velocity_basis(mesh, tp)?,
                disc.dofmaps[side.index()].velocity_basis(mesh, tm)?,
            );
            let (qp, qm) = (
                disc.dofmaps[side.index()].pressure_basis(mesh, tp)?,
                disc.dofmaps[side.index()].pressure_basis(mesh, tm)?,
            );
            let nf = mesh.face_normal(f);
            let h = disc.face_h(f)?;
            let mut local = vec![0.0; pd.len() * ud.len()];
            for (x, w) in k.rule().iter() {
                for j in 0..=orders {
                    let weight = w * params.tau_b * h.powf(2.0 * j as f64 + params.gamma);
                    let djump: Vec<f64> = vp
                        .div_normal_derivatives(x, nf, j)
                        .into_iter()
                        .chain(vm.div_normal_derivatives(x, nf, j).into_iter().map(|v| -v))
                        .collect();
                    let qjump: Vec<f64> = qp
                        .normal_derivatives(x, nf, j)
                        .into_iter()
                        .chain(qm.normal_derivatives(x, nf, j).into_iter().map(|v| -v))
                        .collect();
                    for a in 0..pd.len() {
                        for b in 0..ud.len() {
                            local[a * ud.len() + b] += weight * qjump[a] * djump[b];
                        }
                    }
                }
            }
            Ok(scatter(&pd, &ud, &local))
        })?
        .to_csr(),
    )
}

/// Right-hand sides of `F0`, plus the extra `-(u_B, q)` velocity-boundary term
/// used by the `b` variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub f_v: Vec<f64>,
    pub f_q: Vec<f64>,
    pub g_q: Vec<f64>,
}

/// Local vector contributions as `(global index, value)`.
type Entries = Vec<(usize, f64)>;
type MatrixEntries = Vec<(usize, usize, f64)>;

fn add_local(target: &mut [f64], parts: Vec<Vec<(usize, f64)>>) {
    for part in parts {
        for (i, v) in part {
            target[i] += v;
        }
    }
}

pub fn assemble_rhs<D: ProblemData + ?Sized>(
    disc: &Discretization,
    params: &Params,
    data: &D,
) -> Result<Rhs> {
    let off = disc.offsets();
    let mesh = &disc.mesh;
    let mut f_v = vec![0.0; off.n_u];
    let mut f_q = vec![0.0; off.n_p];
    let mut g_q = vec![0.0; off.n_p];

    let elems = side_elements(disc);
    let vol: Vec<(Entries, Entries)> = elems
        .par_iter()
        .map(|&(side, t)| -> Result<_> {
            let (ud, pd) = (disc.velocity_global(side, t), disc.pressure_global(side, t));
            let vb = disc.dofmaps[side.index()].velocity_basis(mesh, t)?;
            let pb = disc.dofmaps[side.index()].pressure_basis(mesh, t)?;
            let mut lv = vec![0.0; ud.len()];
            let mut lq = vec![0.0; pd.len()];
            for (x, w) in disc.volume_rule(side, t, VOLUME_DEGREE)?.iter() {
                let (f, g) = (data.f(side, x), data.g(side, x));
                if f != [0.0, 0.0] {
                    for (a, v) in vb.values(x).iter().enumerate() {
                        lv[a] += w * dot(f, *v);
                    }
                }
                for (a, q) in pb.values(x).iter().enumerate() {
                    lq[a] += w * g * q;
                }
            }
            Ok((
                ud.into_iter().zip(lv).collect(),
                pd.into_iter().zip(lq).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let (vparts, qparts): (Vec<_>, Vec<_>) = vol.into_iter().unzip();
    add_local(&mut f_v, vparts);
    add_local(&mut f_q, qparts);

    if let Mode::Interface(_) = disc.mode {
        let segs = disc.interface_segments();
        let parts = segs
            .par_iter()
            .map(|(t, rule, normal, _)| -> Result<Vec<(usize, f64)>> {
                let mut out = Vec::new();
                for (side, sign) in [(Side::One, 1.0), (Side::Two, -1.0)] {
                    let dofs = disc.velocity_global(side, *t);
                    let basis = disc.dofmaps[side.index()].velocity_basis(mesh, *t)?;
                    let mut local = vec![0.0; dofs.len()];
                    for (x, w) in rule.iter() {
                        let ph = data.p_hat(x);
                        for (a, v) in basis.values(x).iter().enumerate() {
                            local[a] -= w * ph * sign * dot(*v, *normal);
                        }
                    }
                    out.extend(dofs.into_iter().zip(local));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        add_local(&mut f_v, parts);
    }

    let vb = disc.velocity_boundary();
    let parts = vb
        .par_iter()
        .map(|(side, t, rule, normal, h)| -> Result<(Entries, Entries)> {
            let (ud, pd) = (
                disc.velocity_global(*side, *t),
                disc.pressure_global(*side, *t),
            );
            let basis = disc.dofmaps[side.index()].velocity_basis(mesh, *t)?;
            let pb = disc.dofmaps[side.index()].pressure_basis(mesh, *t)?;
            let lambda = params.c_lambda / h;
            let mut lv = vec![0.0; ud.len()];
            let mut lq = vec![0.0; pd.len()];
            for (x, w) in rule.iter() {
                let ub = data.u_b(x, *normal);
                for (a, v) in basis.values(x).iter().enumerate() {
                    lv[a] += w * lambda * ub * dot(*v, *normal);
                }
                for (a, q) in pb.values(x).iter().enumerate() {
                    lq[a] -= w * ub * q;
                }
            }
            Ok((
                ud.into_iter().zip(lv).collect(),
                pd.into_iter().zip(lq).collect(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (vparts, qparts): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    add_local(&mut f_v, vparts);
    add_local(&mut g_q, qparts);

    let pbnd = disc.pressure_boundary();
    let parts = pbnd
        .par_iter()
        .map(|(side, t, rule, normal, _)| -> Result<Vec<(usize, f64)>> {
            let ud = disc.velocity_global(*side, *t);
            let basis = disc.dofmaps[side.index()].velocity_basis(mesh, *t)?;
            let mut lv = vec![0.0; ud.len()];
            for (x, w) in rule.iter() {
                let pbv = data.p_b(x);
                for (a, v) in basis.values(x).iter().enumerate() {
                    lv[a] -= w * pbv * dot(*v, *normal);
                }
            }
            Ok(ud.into_iter().zip(lv).collect())
        })
        .collect::<Result<_>>()?;
    add_local(&mut f_v, parts);
    Ok(Rhs { f_v, f_q, g_q })
}

/// Pressure mass matrix on the cut domain and the mean-value row `(q, 1)`.
pub fn assemble_pressure_mass(disc: &Discretization) -> Result<(CsrMatrix, Vec<f64>)> {
    let off = disc.offsets();
    let mesh = &disc.mesh;
    let elems = side_elements(disc);
    let parts: Vec<(MatrixEntries, Entries)> = elems
        .par_iter()
        .map(|&(side, t)| -> Result<_> {
            let pd = disc.pressure_global(side, t);
            let pb = disc.dofmaps[side.index()].pressure_basis(mesh, t)?;
            let n = pd.len();
            let mut local = vec![0.0; n * n];
            let mut mean = vec![0.0; n];
            for (x, w) in disc.volume_rule(side, t, VOLUME_DEGREE)?.iter() {
                let q = pb.values(x);
                for a in 0..n {
                    mean[a] += w * q[a];
                    for b in 0..n {
                        local[a * n + b] += w * q[a] * q[b];
                    }
                }
            }
            Ok((
                scatter(&pd, &pd, &local),
                pd.into_iter().zip(mean).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut trip = Triplets::new(off.n_p, off.n_p);
    let mut mean = vec![0.0; off.n_p];
    for (m, r) in parts {
        for (i, j, v) in m {
            trip.push(i, j, v);
        }
        for (i, v) in r {
            mean[i] += v;
        }
    }
    Ok((trip.to_csr(), mean))
}

/// All assembled blocks of one discretization.
#[derive(Debug, Clone)]
pub struct SystemBlocks {
    pub offsets: Offsets,
    pub a: CsrMatrix,
    pub s_u: CsrMatrix,
    pub b: CsrMatrix,
    pub b0: CsrMatrix,
    pub s_p: CsrMatrix,
    pub s_b: CsrMatrix,
    pub rhs: Rhs,
    pub pressure_mass: CsrMatrix,
    /// `(q, 1)` row when the zero-mean constraint is active.
    pub mean: Option<Vec<f64>>,
}

impl SystemBlocks {
    pub fn dim(&self) -> usize {
        self.offsets.n_u + self.offsets.n_p + usize::from(self.mean.is_some())
    }
}

pub fn assemble_system<D: ProblemData + ?Sized>(
    disc: &Discretization,
    params: &Params,
    data: &D,
) -> Result<SystemBlocks> {
    params.validate()?;
    let a = assemble_a(disc, params)?;
    let (b, b0) = assemble_b_b0(disc)?;
    let zero = Params {
        tau_u: 0.0,
        tau_p: 0.0,
        tau_b: 0.0,
        ..*params
    };
    let stab = |m: Method| if params.method == m { params } else { &zero };
    let s_u = match params.method {
        Method::Unstabilized => assemble_s_u(disc, &zero)?,
        _ => assemble_s_u(disc, params)?,
    };
    let s_p = assemble_s_p(disc, stab(Method::Method1))?;
    let s_b = assemble_s_b(disc, stab(Method::Method2))?;
    let rhs = assemble_rhs(disc, params, data)?;
    let (pressure_mass, mean) = assemble_pressure_mass(disc)?;
    Ok(SystemBlocks {
        offsets: disc.offsets(),
        a,
        s_u,
        b,
        b0,
        s_p,
        s_b,
        rhs,
        pressure_mass,
        mean: disc.needs_mean_constraint().then_some(mean),
    })
}

/// Square system matrix and right-hand side of the chosen method:
///
/// * Unstabilized: `[[A, B^T], [-B0, 0]]`
/// * Method 1: `[[A + S_u, B^T], [-B0, S_p]]`
/// * Method 2: `[[A + S_u, B^T - S_b^T], [-B0 + S_b, 0]]`
///
/// With `DivergenceForm::B` the pressure rows use `-B` in place of `-B0` and the
/// right-hand side gains `-(u_B, q)`. The zero-mean constraint, when present,
/// adds one symmetric bordering row and column.
pub fn compose_system(
    blocks: &SystemBlocks,
    method: Method,
    divergence: DivergenceForm,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let (nu, np) = (blocks.offsets.n_u, blocks.offsets.n_p);
    let check = |m: &CsrMatrix, r: usize, c: usize, name: &str| {
        if (m.nrows, m.ncols) != (r, c) {
            Err(Error::Internal(format!(
                "{name} is {}x{}, expected {r}x{c}",
                m.nrows, m.ncols
            )))
        } else {
            Ok(())
        }
    };
    check(&blocks.a, nu, nu, "A")?;
    check(&blocks.s_u, nu, nu, "S_u")?;
    check(&blocks.b, np, nu, "B")?;
    check(&blocks.b0, np, nu, "B0")?;
    check(&blocks.s_p, np, np, "S_p")?;
    check(&blocks.s_b, np, nu, "S_b")?;
    if blocks.rhs.f_v.len() != nu || blocks.rhs.f_q.len() != np {
        return Err(Error::Internal("right-hand side length mismatch".into()));
    }
    let dim = blocks.dim();
    let mut e: Vec<(usize, usize, f64)> = Vec::new();
    e.extend(blocks.a.triplets());
    if method != Method::Unstabilized {
        e.extend(blocks.s_u.triplets());
    }
    // velocity rows: b(v, p) = B^T
    e.extend(
        blocks
            .b
            .triplets()
            .into_iter()
            .map(|(q, u, v)| (u, nu + q, v)),
    );
    let q_rows = match divergence {
        DivergenceForm::B0 => &blocks.b0,
        DivergenceForm::B => &blocks.b,
    };
    e.extend(
        q_rows
            .triplets()
            .into_iter()
            .map(|(q, u, v)| (nu + q, u, -v)),
    );
    match method {
        Method::Unstabilized => {}
        Method::Method1 => e.extend(
            blocks
                .s_p
                .triplets()
                .into_iter()
                .map(|(i, j, v)| (nu + i, nu + j, v)),
        ),
        Method::Method2 => {
            for (q, u, v) in blocks.s_b.triplets() {
                e.push((u, nu + q, -v));
                e.push((nu + q, u, v));
            }
        }
    }
    let mut rhs: Vec<f64> = blocks.rhs.f_v.clone();
    rhs.extend(blocks.rhs.f_q.iter().copied());
    if divergence == DivergenceForm::B {
        for (r, g) in rhs[nu..].iter_mut().zip(&blocks.rhs.g_q) {
            *r += g;
        }
    }
    if let Some(mean) = &blocks.mean {
        for (q, &m) in mean.iter().enumerate() {
            if m != 0.0 {
                e.push((nu + q, dim - 1, m));
                e.push((dim - 1, nu + q, m));
            }
        }
        rhs.push(0.0);
    }
    Ok((CsrMatrix::from_triplets(dim, dim, &e), rhs))
}
