//! H(div) velocity spaces (RT0, BDM1, RT1), discontinuous pressures (P0, P1) and
//! global degree-of-freedom maps on an active mesh.
//!
//! Reference DOFs on the triangle (0,0),(1,0),(0,1), with edge `k` opposite vertex
//! `k` running from vertex `k+1` to vertex `k+2`:
//!
//! * `int_e v.n` and, for BDM1/RT1, `int_e v.n l` with `l = 2s - 1` along the edge,
//! * for RT1, `int_T v_x` and `int_T v_y`.
//!
//! Physical DOFs are length-normalized: mean normal flux `|F|^-1 int_F v.n_F`
//! against the global face normal, the first Legendre moment with `l = -1` at
//! the lower-indexed vertex, and `|T|^-1 int_T v` for interior moments. The
//! physical basis is the contravariant Piola image of the reference basis
//! combined with these orientation signs and length factors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use std::sync::LazyLock as Lazy;

use crate::geometry::{ActiveMeshes, Side};
use crate::mesh::{BackgroundMesh, ElementGeometry};
use crate::poly::{div, Poly2, VecPoly};
use crate::quadrature::{quadrature_segment, quadrature_triangle};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VelocityKind {
    Rt0,
    Bdm1,
    Rt1,
}

/// Admissible velocity/pressure pair; the pressure degree follows from the velocity space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ElementPair {
    pub velocity: VelocityKind,
}

impl ElementPair {
    pub const RT0_P0: ElementPair = ElementPair {
        velocity: VelocityKind::Rt0,
    };
    pub const BDM1_P0: ElementPair = ElementPair {
        velocity: VelocityKind::Bdm1,
    };
    pub const RT1_P1: ElementPair = ElementPair {
        velocity: VelocityKind::Rt1,
    };
    pub const ALL: [ElementPair; 3] = [Self::RT0_P0, Self::BDM1_P0, Self::RT1_P1];

    pub fn new(velocity: VelocityKind, pressure_degree: usize) -> Result<Self> {
        let pair = ElementPair { velocity };
        if pair.pressure_degree() != pressure_degree {
            return Err(Error::InvalidArgument(format!(
                "{velocity:?} requires pressure degree {}, got {pressure_degree}",
                pair.pressure_degree()
            )));
        }
        Ok(pair)
    }

    pub fn pressure_degree(&self) -> usize {
        match self.velocity {
            VelocityKind::Rt0 | VelocityKind::Bdm1 => 0,
            VelocityKind::Rt1 => 1,
        }
    }

    pub fn face_dofs(&self) -> usize {
        match self.velocity {
            VelocityKind::Rt0 => 1,
            _ => 2,
        }
    }

    pub fn interior_dofs(&self) -> usize {
        match self.velocity {
            VelocityKind::Rt1 => 2,
            _ => 0,
        }
    }

    pub fn velocity_local_dim(&self) -> usize {
        3 * self.face_dofs() + self.interior_dofs()
    }

    pub fn pressure_local_dim(&self) -> usize {
        match self.pressure_degree() {
            0 => 1,
            _ => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.velocity {
            VelocityKind::Rt0 => "rt0p0",
            VelocityKind::Bdm1 => "bdm1p0",
            VelocityKind::Rt1 => "rt1p1",
        }
    }
}

impl fmt::Display for ElementPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rt0p0" => Ok(Self::RT0_P0),
            "bdm1p0" => Ok(Self::BDM1_P0),
            "rt1p1" => Ok(Self::RT1_P1),
            other => Err(Error::InvalidArgument(format!(
                "unknown element pair '{other}'"
            ))),
        }
    }
}

impl TryFrom<String> for ElementPair {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ElementPair> for String {
    fn from(p: ElementPair) -> String {
        p.name().to_string()
    }
}

const REF_VERTICES: [Point; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Reference basis dual to the reference DOFs.
pub struct RefElement {
    pub kind: VelocityKind,
    pub funcs: Vec<VecPoly>,
    pub divs: Vec<Poly2>,
}

fn ref_edge(e: usize) -> (Point, Point, Point, f64) {
    let (a, b) = (REF_VERTICES[(e + 1) % 3], REF_VERTICES[(e + 2) % 3]);
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
    (a, b, n, len)
}

fn spanning_set(kind: VelocityKind) -> Vec<VecPoly> {
    let (one, x, y, z) = (Poly2::constant(1.0), Poly2::x(), Poly2::y(), Poly2::ZERO);
    let p1: Vec<VecPoly> = vec![[one, z], [x, z], [y, z], [z, one], [z, x], [z, y]];
    match kind {
        VelocityKind::Rt0 => vec![[one, z], [z, one], [x, y]],
        VelocityKind::Bdm1 => p1,
        VelocityKind::Rt1 => {
            let xx = x.times(&x).unwrap();
            let xy = x.times(&y).unwrap();
            let yy = y.times(&y).unwrap();
            let mut s = p1;
            s.push([xx, xy]);
            s.push([xy, yy]);
            s
        }
    }
}

/// Reference DOF functionals applied to a vector polynomial.
fn ref_dofs(kind: VelocityKind, v: &VecPoly) -> Vec<f64> {
    let mut out = Vec::with_capacity(8);
    for e in 0..3 {
        let (a, b, n, len) = ref_edge(e);
        let rule = quadrature_segment(a, b, 6);
        let flux = |p: Point| v[0].eval(p) * n[0] + v[1].eval(p) * n[1];
        out.push(rule.integrate(flux));
        if kind != VelocityKind::Rt0 {
            out.push(rule.integrate(|p| {
                let s = ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt() / len;
                flux(p) * (2.0 * s - 1.0)
            }));
        }
    }
    if kind == VelocityKind::Rt1 {
        let rule = quadrature_triangle(REF_VERTICES[0], REF_VERTICES[1], REF_VERTICES[2], 4);
        out.push(rule.integrate(|p| v[0].eval(p)));
        out.push(rule.integrate(|p| v[1].eval(p)));
    }
    out
}

/// Inverse of a small dense matrix by Gauss-Jordan elimination with partial pivoting.
pub(crate) fn invert_small(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        let pivot = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let f = row[col];
            if r != col && f != 0.0 {
                row.iter_mut().zip(&pivot).for_each(|(x, p)| *x -= f * p);
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn build_ref_element(kind: VelocityKind) -> RefElement {
    let span = spanning_set(kind);
    let n = span.len();
    // vandermonde[k][m] = dof_k(span_m)
    let cols: Vec<Vec<f64>> = span.iter().map(|s| ref_dofs(kind, s)).collect();
    let vander: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|m| cols[m][k]).collect())
        .collect();
    let inv = invert_small(&vander).expect("unisolvent reference DOFs");
    let funcs: Vec<VecPoly> = (0..n)
        .map(|j| {
            let mut f = [Poly2::ZERO; 2];
            for (m, s) in span.iter().enumerate() {
                f[0] = f[0] + s[0] * inv[m][j];
                f[1] = f[1] + s[1] * inv[m][j];
            }
            f
        })
        .collect();
    let divs = funcs.iter().map(div).collect();
    RefElement { kind, funcs, divs }
}

static RT0: Lazy<RefElement> = Lazy::new(|| build_ref_element(VelocityKind::Rt0));
static BDM1: Lazy<RefElement> = Lazy::new(|| build_ref_element(VelocityKind::Bdm1));
static RT1: Lazy<RefElement> = Lazy::new(|| build_ref_element(VelocityKind::Rt1));

pub fn ref_element(kind: VelocityKind) -> &'static RefElement {
    match kind {
        VelocityKind::Rt0 => &RT0,
        VelocityKind::Bdm1 => &BDM1,
        VelocityKind::Rt1 => &RT1,
    }
}

/// Reference basis values and divergences at a reference point.
pub fn ref_basis(kind: VelocityKind, xr: Point) -> (Vec<Point>, Vec<f64>) {
    let el = ref_element(kind);
    (
        el.funcs
            .iter()
            .map(|f| [f[0].eval(xr), f[1].eval(xr)])
            .collect(),
        el.divs.iter().map(|d| d.eval(xr)).collect(),
    )
}

/// Contravariant Piola transform of reference values and divergences.
pub fn piola_map(
    geom: &ElementGeometry,
    values: &[Point],
    divs: &[f64],
) -> Result<(Vec<Point>, Vec<f64>)> {
    if geom.det == 0.0 || !geom.det.is_finite() {
        return Err(Error::InvalidElement("zero Jacobian in Piola map".into()));
    }
    let j = &geom.jacobian;
    let inv_det = 1.0 / geom.det;
    Ok((
        values
            .iter()
            .map(|v| {
                [
                    inv_det * (j[0][0] * v[0] + j[0][1] * v[1]),
                    inv_det * (j[1][0] * v[0] + j[1][1] * v[1]),
                ]
            })
            .collect(),
        divs.iter().map(|d| inv_det * d).collect(),
    ))
}

/// Physical velocity basis of one element.
#[derive(Debug, Clone)]
pub struct VelocityBasis {
    pub kind: VelocityKind,
    pub geom: ElementGeometry,
    /// Row-major `n x n`: physical function `k` is `sum_m mix[k][m] Piola(ref_m)`.
    mix: Vec<f64>,
    n: usize,
}

impl VelocityBasis {
    pub fn new(mesh: &BackgroundMesh, t: usize, pair: ElementPair) -> Result<Self> {
        let geom = mesh.element_geometry(t)?;
        let n = pair.velocity_local_dim();
        let nf = pair.face_dofs();
        let mut mix = vec![0.0; n * n];
        let tri = mesh.triangles[t];
        for e in 0..3 {
            let f = mesh.element_faces[t][e];
            let len = mesh.face_length(f);
            let s = mesh.face_orientation(t, e);
            mix[(nf * e) * n + nf * e] = len * s;
            if nf == 2 {
                let param = if tri[(e + 1) % 3] < tri[(e + 2) % 3] {
                    1.0
                } else {
                    -1.0
                };
                mix[(2 * e + 1) * n + 2 * e + 1] = len * s * param;
            }
        }
        if pair.interior_dofs() == 2 {
            let k = &geom.inverse;
            for d in 0..2 {
                for m in 0..2 {
                    mix[(6 + d) * n + 6 + m] = geom.area * k[m][d];
                }
            }
        }
        Ok(VelocityBasis {
            kind: pair.velocity,
            geom,
            mix,
            n,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn combine_vec(&self, reference: &[Point]) -> Vec<Point> {
        let j = &self.geom.jacobian;
        let inv_det = 1.0 / self.geom.det;
        let piola: Vec<Point> = reference
            .iter()
            .map(|v| {
                [
                    inv_det * (j[0][0] * v[0] + j[0][1] * v[1]),
                    inv_det * (j[1][0] * v[0] + j[1][1] * v[1]),
                ]
            })
            .collect();
        (0..self.n)
            .map(|k| {
                let row = &self.mix[k * self.n..(k + 1) * self.n];
                let mut out = [0.0; 2];
                for (c, p) in row.iter().zip(&piola) {
                    if *c != 0.0 {
                        out[0] += c * p[0];
                        out[1] += c * p[1];
                    }
                }
                out
            })
            .collect()
    }

    fn combine_scalar(&self, reference: &[f64]) -> Vec<f64> {
        let inv_det = 1.0 / self.geom.det;
        (0..self.n)
            .map(|k| {
                let row = &self.mix[k * self.n..(k + 1) * self.n];
                row.iter().zip(reference).map(|(c, r)| c * r).sum::<f64>() * inv_det
            })
            .collect()
    }

    fn ref_direction(&self, dir: Point) -> Point {
        let k = &self.geom.inverse;
        [
            k[0][0] * dir[0] + k[0][1] * dir[1],
            k[1][0] * dir[0] + k[1][1] * dir[1],
        ]
    }

    pub fn values(&self, x: Point) -> Vec<Point> {
        self.normal_derivatives(x, [0.0, 0.0], 0)
    }

    pub fn divergences(&self, x: Point) -> Vec<f64> {
        self.div_normal_derivatives(x, [0.0, 0.0], 0)
    }

    /// `(dir . grad)^order` of every basis function (polynomial extension outside the element).
    pub fn normal_derivatives(&self, x: Point, dir: Point, order: usize) -> Vec<Point> {
        let xr = self.geom.to_reference(x);
        let m = self.ref_direction(dir);
        let el = ref_element(self.kind);
        let reference: Vec<Point> = el
            .funcs
            .iter()
            .map(|f| {
                [
                    f[0].directional(m, order).eval(xr),
                    f[1].directional(m, order).eval(xr),
                ]
            })
            .collect();
        self.combine_vec(&reference)
    }

    pub fn div_normal_derivatives(&self, x: Point, dir: Point, order: usize) -> Vec<f64> {
        let xr = self.geom.to_reference(x);
        let m = self.ref_direction(dir);
        let el = ref_element(self.kind);
        let reference: Vec<f64> = el
            .divs
            .iter()
            .map(|d| d.directional(m, order).eval(xr))
            .collect();
        self.combine_scalar(&reference)
    }
}

/// Discontinuous pressure basis of one element: the constant for P0, barycentric
/// coordinates for P1.
#[derive(Debug, Clone)]
pub struct PressureBasis {
    pub degree: usize,
    pub geom: ElementGeometry,
}

impl PressureBasis {
    pub fn new(mesh: &BackgroundMesh, t: usize, pair: ElementPair) -> Result<Self> {
        Ok(PressureBasis {
            degree: pair.pressure_degree(),
            geom: mesh.element_geometry(t)?,
        })
    }

    fn ref_polys(&self) -> Vec<Poly2> {
        match self.degree {
            0 => vec![Poly2::constant(1.0)],
            _ => vec![
                Poly2([1.0, -1.0, -1.0, 0.0, 0.0, 0.0]),
                Poly2::x(),
                Poly2::y(),
            ],
        }
    }

    pub fn len(&self) -> usize {
        if self.degree == 0 {
            1
        } else {
            3
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self, x: Point) -> Vec<f64> {
        self.normal_derivatives(x, [0.0, 0.0], 0)
    }

    pub fn normal_derivatives(&self, x: Point, dir: Point, order: usize) -> Vec<f64> {
        let xr = self.geom.to_reference(x);
        let k = &self.geom.inverse;
        let m = [
            k[0][0] * dir[0] + k[0][1] * dir[1],
            k[1][0] * dir[0] + k[1][1] * dir[1],
        ];
        self.ref_polys()
            .iter()
            .map(|p| p.directional(m, order).eval(xr))
            .collect()
    }
}

/// Global numbering of velocity and pressure DOFs on one active mesh.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub pair: ElementPair,
    pub side: Side,
    /// Active elements, ascending.
    pub elements: Vec<usize>,
    /// Background element -> position in `elements`.
    pub position: Vec<Option<usize>>,
    /// Active faces (faces with at least one active neighbour), ascending.
    pub faces: Vec<usize>,
    /// First DOF of each background face, if active.
    pub face_dof_start: Vec<Option<usize>>,
    pub n_velocity: usize,
    pub n_pressure: usize,
    pub velocity_dofs: Vec<Vec<usize>>,
    pub pressure_dofs: Vec<Vec<usize>>,
    /// Per element and local face: +1 if the global face normal is outward.
    pub orientation: Vec<[f64; 3]>,
    /// Per local velocity DOF: the length factor (`|F|` or `|T|`) it carries.
    pub scaling: Vec<Vec<f64>>,
}

impl DofMap {
    pub fn build(
        mesh: &BackgroundMesh,
        active: &ActiveMeshes,
        side: Side,
        pair: ElementPair,
    ) -> Self {
        Self::from_elements(mesh, &active.elements[side.index()], side, pair)
    }

    pub fn empty(mesh: &BackgroundMesh, side: Side, pair: ElementPair) -> Self {
        Self::from_elements(mesh, &[], side, pair)
    }

    pub fn from_elements(
        mesh: &BackgroundMesh,
        elements: &[usize],
        side: Side,
        pair: ElementPair,
    ) -> Self {
        let mut position = vec![None; mesh.num_elements()];
        for (p, &t) in elements.iter().enumerate() {
            position[t] = Some(p);
        }
        let mut active_face = vec![false; mesh.faces.len()];
        for &t in elements {
            for &f in &mesh.element_faces[t] {
                active_face[f] = true;
            }
        }
        let faces: Vec<usize> = (0..mesh.faces.len()).filter(|&f| active_face[f]).collect();
        let nf = pair.face_dofs();
        let mut face_dof_start = vec![None; mesh.faces.len()];
        for (k, &f) in faces.iter().enumerate() {
            face_dof_start[f] = Some(k * nf);
        }
        let mut next = faces.len() * nf;
        let ni = pair.interior_dofs();
        let mut velocity_dofs = Vec::with_capacity(elements.len());
        let mut orientation = Vec::with_capacity(elements.len());
        let mut scaling = Vec::with_capacity(elements.len());
        for &t in elements {
            let mut dofs = Vec::with_capacity(pair.velocity_local_dim());
            let mut scale = Vec::with_capacity(pair.velocity_local_dim());
            for e in 0..3 {
                let f = mesh.element_faces[t][e];
                let start = face_dof_start[f].expect("active face");
                for m in 0..nf {
                    dofs.push(start + m);
                    scale.push(mesh.face_length(f));
                }
            }
            for _ in 0..ni {
                dofs.push(next);
                next += 1;
                scale.push(mesh.element_geometry(t).map(|g| g.area).unwrap_or(0.0));
            }
            velocity_dofs.push(dofs);
            scaling.push(scale);
            orientation.push([0, 1, 2].map(|e| mesh.face_orientation(t, e)));
        }
        let np = pair.pressure_local_dim();
        let pressure_dofs = (0..elements.len())
            .map(|p| (p * np..(p + 1) * np).collect())
            .collect();
        DofMap {
            pair,
            side,
            elements: elements.to_vec(),
            position,
            faces,
            face_dof_start,
            n_velocity: next,
            n_pressure: elements.len() * np,
            velocity_dofs,
            pressure_dofs,
            orientation,
            scaling,
        }
    }

    pub fn velocity_basis(&self, mesh: &BackgroundMesh, t: usize) -> Result<VelocityBasis> {
        VelocityBasis::new(mesh, t, self.pair)
    }

    pub fn pressure_basis(&self, mesh: &BackgroundMesh, t: usize) -> Result<PressureBasis> {
        PressureBasis::new(mesh, t, self.pair)
    }

    pub fn velocity_dofs_of(&self, t: usize) -> Option<&[usize]> {
        self.position[t].map(|p| self.velocity_dofs[p].as_slice())
    }

    pub fn pressure_dofs_of(&self, t: usize) -> Option<&[usize]> {
        self.position[t].map(|p| self.pressure_dofs[p].as_slice())
    }

    /// Velocity field of element `t` at `x` for coefficient vector `coeffs`.
    pub fn eval_velocity(
        &self,
        mesh: &BackgroundMesh,
        coeffs: &[f64],
        t: usize,
        x: Point,
    ) -> Result<(Point, f64)> {
        let dofs = self
            .velocity_dofs_of(t)
            .ok_or_else(|| Error::InvalidArgument(format!("element {t} not in active mesh")))?;
        let basis = self.velocity_basis(mesh, t)?;
        let (vals, divs) = (basis.values(x), basis.divergences(x));
        let mut u = [0.0; 2];
        let mut d = 0.0;
        for (k, &g) in dofs.iter().enumerate() {
            u[0] += coeffs[g] * vals[k][0];
            u[1] += coeffs[g] * vals[k][1];
            d += coeffs[g] * divs[k];
        }
        Ok((u, d))
    }

    pub fn eval_pressure(
        &self,
        mesh: &BackgroundMesh,
        coeffs: &[f64],
        t: usize,
        x: Point,
    ) -> Result<f64> {
        let dofs = self
            .pressure_dofs_of(t)
            .ok_or_else(|| Error::InvalidArgument(format!("element {t} not in active mesh")))?;
        let vals = self.pressure_basis(mesh, t)?.values(x);
        Ok(dofs.iter().zip(&vals).map(|(&g, v)| coeffs[g] * v).sum())
    }
}

/// Applies the physical DOF functionals to `field`.
pub fn interpolate<F: Fn(Point) -> Point>(
    mesh: &BackgroundMesh,
    dofmap: &DofMap,
    field: F,
) -> Vec<f64> {
    let mut coeffs = vec![0.0; dofmap.n_velocity];
    let nf = dofmap.pair.face_dofs();
    for &f in &dofmap.faces {
        let [a, b] = mesh.face_endpoints(f);
        let len = mesh.face_length(f);
        let n = mesh.face_normal(f);
        let rule = quadrature_segment(a, b, 9);
        let start = dofmap.face_dof_start[f].expect("active face");
        let flux = |p: Point| {
            let v = field(p);
            v[0] * n[0] + v[1] * n[1]
        };
        coeffs[start] = rule.integrate(flux) / len;
        if nf == 2 {
            coeffs[start + 1] = rule.integrate(|p| {
                let s = crate::mesh::dist(p, a) / len;
                flux(p) * (2.0 * s - 1.0)
            }) / len;
        }
    }
    if dofmap.pair.interior_dofs() == 2 {
        for (p, &t) in dofmap.elements.iter().enumerate() {
            let v = mesh.element_vertices(t);
            let rule = quadrature_triangle(v[0], v[1], v[2], 8);
            let area = rule.measure();
            let dofs = &dofmap.velocity_dofs[p];
            coeffs[dofs[6]] = rule.integrate(|x| field(x)[0]) / area;
            coeffs[dofs[7]] = rule.integrate(|x| field(x)[1]) / area;
        }
    }
    coeffs
}

/// Elementwise L2 projection of a scalar field onto the pressure space.
pub fn project_pressure<F: Fn(Point) -> f64>(
    mesh: &BackgroundMesh,
    dofmap: &DofMap,
    field: F,
) -> Result<Vec<f64>> {
    let mut coeffs = vec![0.0; dofmap.n_pressure];
    for (p, &t) in dofmap.elements.iter().enumerate() {
        let basis = dofmap.pressure_basis(mesh, t)?;
        let v = mesh.element_vertices(t);
        let rule = quadrature_triangle(v[0], v[1], v[2], 8);
        let n = basis.len();
        let mut mass = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for (x, w) in rule.iter() {
            let q = basis.values(x);
            let fx = field(x);
            for a in 0..n {
                rhs[a] += w * fx * q[a];
                for b in 0..n {
                    mass[a][b] += w * q[a] * q[b];
                }
            }
        }
        let inv = invert_small(&mass)
            .ok_or_else(|| Error::InvalidElement(format!("singular mass on {t}")))?;
        for a in 0..n {
            coeffs[dofmap.pressure_dofs[p][a]] = (0..n).map(|b| inv[a][b] * rhs[b]).sum();
        }
    }
    Ok(coeffs)
}
