//! Level-set interface, element classification and clipping, active meshes.
//!
//! The interface is approximated elementwise by the zero line of the linear
//! interpolant of the level set (one chord per cut element). Vertices with
//! `|phi| < 1e-12 h_T` are pushed into side one so that no vertex lies exactly
//! on the discrete interface.

use serde::{Deserialize, Serialize};

use crate::mesh::{dist, BackgroundMesh};
use crate::quadrature::{polygon_area, quadrature_polygon, quadrature_segment, QuadRule};
use crate::{Error, Point, Result};

const DEGENERACY_TOL: f64 = 1e-12;

/// Penetration depth (relative to `h_T`) of the exact circle into an element edge
/// whose endpoints lie on the same side, above which the linearization is rejected.
const HIDDEN_CROSSING_DEPTH: f64 = 0.1;

/// Subdomain label. `One` is `phi > 0`, `Two` is `phi < 0` (the region enclosed by a circle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::One, Side::Two];

    pub fn index(self) -> usize {
        match self {
            Side::One => 0,
            Side::Two => 1,
        }
    }

    pub fn of_value(phi: f64) -> Side {
        if phi > 0.0 {
            Side::One
        } else {
            Side::Two
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelSet {
    /// `phi(x) = |x - center| - radius`.
    Circle { center: Point, radius: f64 },
    /// `phi(x) = normal . x - offset`; used for tests.
    Plane { normal: Point, offset: f64 },
}

impl LevelSet {
    pub fn circle(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "circle radius must be positive, got {radius}"
            )));
        }
        Ok(LevelSet::Circle { center, radius })
    }

    pub fn value(&self, x: Point) -> f64 {
        match *self {
            LevelSet::Circle { center, radius } => dist(x, center) - radius,
            LevelSet::Plane { normal, offset } => normal[0] * x[0] + normal[1] * x[1] - offset,
        }
    }

    pub fn gradient(&self, x: Point) -> Point {
        match *self {
            LevelSet::Circle { center, .. } => {
                let r = dist(x, center);
                if r == 0.0 {
                    [0.0, 0.0]
                } else {
                    [(x[0] - center[0]) / r, (x[1] - center[1]) / r]
                }
            }
            LevelSet::Plane { normal, .. } => normal,
        }
    }

    pub fn translated(&self, shift: Point) -> Self {
        match *self {
            LevelSet::Circle { center, radius } => LevelSet::Circle {
                center: [center[0] + shift[0], center[1] + shift[1]],
                radius,
            },
            LevelSet::Plane { normal, offset } => LevelSet::Plane {
                normal,
                offset: offset + normal[0] * shift[0] + normal[1] * shift[1],
            },
        }
    }

    /// Depth by which the exact zero set dips across segment `a`-`b` when both
    /// endpoints are on the same side; zero if it does not.
    fn hidden_depth(&self, a: Point, b: Point) -> f64 {
        match *self {
            LevelSet::Circle { center, radius } => {
                let (da, db) = (dist(a, center) - radius, dist(b, center) - radius);
                if da <= 0.0 || db <= 0.0 {
                    return 0.0;
                }
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let s = (((center[0] - a[0]) * d[0] + (center[1] - a[1]) * d[1]) / len2)
                    .clamp(0.0, 1.0);
                let closest = [a[0] + s * d[0], a[1] + s * d[1]];
                (radius - dist(closest, center)).max(0.0)
            }
            LevelSet::Plane { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Inside1,
    Inside2,
    Cut,
}

/// Chord approximating the interface inside one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSegment {
    pub start: Point,
    pub end: Point,
    /// Unit normal pointing from side two into side one (along the level-set gradient).
    pub normal: Point,
}

impl InterfaceSegment {
    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }

    pub fn midpoint(&self) -> Point {
        [
            0.5 * (self.start[0] + self.end[0]),
            0.5 * (self.start[1] + self.end[1]),
        ]
    }

    pub fn rule(&self, degree: usize) -> QuadRule {
        quadrature_segment(self.start, self.end, degree)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutGeometry {
    pub element: usize,
    pub classification: Classification,
    /// Counterclockwise convex polygons, indexed by `Side::index`; empty if absent.
    pub parts: [Vec<Point>; 2],
    pub interface: Option<InterfaceSegment>,
}

impl CutGeometry {
    pub fn part(&self, side: Side) -> &[Point] {
        &self.parts[side.index()]
    }

    pub fn part_area(&self, side: Side) -> f64 {
        polygon_area(self.part(side))
    }

    pub fn volume_rule(&self, side: Side, degree: usize) -> QuadRule {
        quadrature_polygon(self.part(side), degree)
    }
}

/// Vertex level-set values after the degeneracy rule.
pub fn effective_values(mesh: &BackgroundMesh, t: usize, ls: &LevelSet) -> [f64; 3] {
    let verts = mesh.element_vertices(t);
    let tol = DEGENERACY_TOL * element_diameter(&verts);
    verts.map(|v| {
        let phi = ls.value(v);
        if phi.abs() < tol {
            tol
        } else {
            phi
        }
    })
}

fn element_diameter(v: &[Point; 3]) -> f64 {
    dist(v[0], v[1]).max(dist(v[1], v[2])).max(dist(v[2], v[0]))
}

pub fn classify_values(phi: [f64; 3]) -> Classification {
    if phi.iter().all(|&p| p > 0.0) {
        Classification::Inside1
    } else if phi.iter().all(|&p| p < 0.0) {
        Classification::Inside2
    } else {
        Classification::Cut
    }
}

pub fn classify_element(mesh: &BackgroundMesh, t: usize, ls: &LevelSet) -> Classification {
    classify_values(effective_values(mesh, t, ls))
}

/// Rejects elements where the exact interface crosses an edge twice deeply enough
/// that the chord approximation loses a whole piece of it.
fn check_resolved(mesh: &BackgroundMesh, t: usize, ls: &LevelSet) -> Result<()> {
    let verts = mesh.element_vertices(t);
    let h = element_diameter(&verts);
    if let LevelSet::Circle { center, radius } = *ls {
        if verts.iter().all(|&v| ls.value(v) > 0.0) && point_in_triangle(center, &verts) {
            return Err(Error::ResolveInterface {
                element: t,
                reason: format!("circle of radius {radius} hidden inside element of diameter {h}"),
            });
        }
    }
    for k in 0..3 {
        let depth = ls.hidden_depth(verts[k], verts[(k + 1) % 3]);
        if depth > HIDDEN_CROSSING_DEPTH * h {
            return Err(Error::ResolveInterface {
                element: t,
                reason: format!("edge cut twice by the interface (depth {depth:.3e})"),
            });
        }
    }
    Ok(())
}

fn point_in_triangle(p: Point, v: &[Point; 3]) -> bool {
    let cross = |a: Point, b: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    (0..3).all(|k| cross(v[k], v[(k + 1) % 3]) >= 0.0)
}

/// Splits the element along the chord of the linearized level set.
pub fn clip_element(mesh: &BackgroundMesh, t: usize, ls: &LevelSet) -> Result<CutGeometry> {
    check_resolved(mesh, t, ls)?;
    let verts = mesh.element_vertices(t);
    let phi = effective_values(mesh, t, ls);
    let classification = classify_values(phi);
    let mut parts: [Vec<Point>; 2] = [Vec::new(), Vec::new()];
    match classification {
        Classification::Inside1 => parts[0] = verts.to_vec(),
        Classification::Inside2 => parts[1] = verts.to_vec(),
        Classification::Cut => {}
    }
    if classification != Classification::Cut {
        return Ok(CutGeometry {
            element: t,
            classification,
            parts,
            interface: None,
        });
    }

    let mut roots = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (p, q) = (verts[i], verts[j]);
        parts[Side::of_value(phi[i]).index()].push(p);
        if (phi[i] > 0.0) != (phi[j] > 0.0) {
            let s = phi[i] / (phi[i] - phi[j]);
            let r = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            parts[0].push(r);
            parts[1].push(r);
            roots.push(r);
        }
    }
    if roots.len() != 2 {
        return Err(Error::ResolveInterface {
            element: t,
            reason: format!("{} sign-changing edges", roots.len()),
        });
    }

    // Gradient of the linear interpolant.
    let g = ElementLinear::new(&verts, phi).gradient;
    let d = [roots[1][0] - roots[0][0], roots[1][1] - roots[0][1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let mut normal = [d[1] / len, -d[0] / len];
    if normal[0] * g[0] + normal[1] * g[1] < 0.0 {
        normal = [-normal[0], -normal[1]];
    }
    Ok(CutGeometry {
        element: t,
        classification,
        parts,
        interface: Some(InterfaceSegment {
            start: roots[0],
            end: roots[1],
            normal,
        }),
    })
}

struct ElementLinear {
    gradient: Point,
}

impl ElementLinear {
    fn new(v: &[Point; 3], phi: [f64; 3]) -> Self {
        let (e1, e2) = (
            [v[1][0] - v[0][0], v[1][1] - v[0][1]],
            [v[2][0] - v[0][0], v[2][1] - v[0][1]],
        );
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let (d1, d2) = (phi[1] - phi[0], phi[2] - phi[0]);
        ElementLinear {
            gradient: [
                (d1 * e2[1] - d2 * e1[1]) / det,
                (e1[0] * d2 - e2[0] * d1) / det,
            ],
        }
    }
}

/// Portion of the segment `a`-`b` on `side`, using linear interpolation of the
/// (already degeneracy-corrected) endpoint values.
pub fn clip_segment(
    a: Point,
    b: Point,
    phi_a: f64,
    phi_b: f64,
    side: Side,
) -> Option<(Point, Point)> {
    let on = |phi: f64| Side::of_value(phi) == side;
    match (on(phi_a), on(phi_b)) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (ina, _) => {
            let s = phi_a / (phi_a - phi_b);
            let r = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            if ina {
                Some((a, r))
            } else {
                Some((r, b))
            }
        }
    }
}

/// Active meshes, cut set and ghost-penalty face sets for both sides.
#[derive(Debug, Clone)]
pub struct ActiveMeshes {
    pub level_set: LevelSet,
    /// Cut geometry for every background element.
    pub cuts: Vec<CutGeometry>,
    /// Sorted element indices of each active mesh.
    pub elements: [Vec<usize>; 2],
    pub contains: [Vec<bool>; 2],
    /// Sorted indices of cut elements.
    pub cut: Vec<usize>,
    /// Interior faces of cut elements shared by two elements of the active mesh.
    pub faces: [Vec<usize>; 2],
    /// `|T cap Omega_{h,i}| / |T|` for every background element.
    pub fraction: [Vec<f64>; 2],
}

impl ActiveMeshes {
    pub fn build(mesh: &BackgroundMesh, ls: &LevelSet) -> Result<Self> {
        let cuts = (0..mesh.num_elements())
            .map(|t| clip_element(mesh, t, ls))
            .collect::<Result<Vec<_>>>()?;
        let mut fraction = [vec![0.0; cuts.len()], vec![0.0; cuts.len()]];
        let mut contains = [vec![false; cuts.len()], vec![false; cuts.len()]];
        let mut elements = [Vec::new(), Vec::new()];
        let mut cut = Vec::new();
        for (t, c) in cuts.iter().enumerate() {
            let area = mesh.element_geometry(t)?.area;
            for side in Side::BOTH {
                let i = side.index();
                let part = c.part_area(side);
                fraction[i][t] = (part / area).clamp(0.0, 1.0);
                // Degenerate vertices can leave a sliver whose computed area rounds to zero.
                if part > 0.0 || c.classification == Classification::Cut {
                    contains[i][t] = true;
                    elements[i].push(t);
                }
            }
            if c.classification == Classification::Cut {
                cut.push(t);
            }
        }
        let mut faces = [Vec::new(), Vec::new()];
        for (f, face) in mesh.faces.iter().enumerate() {
            let (a, Some(b)) = face.elements else {
                continue;
            };
            let touches_cut = cuts[a].classification == Classification::Cut
                || cuts[b].classification == Classification::Cut;
            if !touches_cut {
                continue;
            }
            for side in Side::BOTH {
                let i = side.index();
                if contains[i][a] && contains[i][b] {
                    faces[i].push(f);
                }
            }
        }
        Ok(ActiveMeshes {
            level_set: *ls,
            cuts,
            elements,
            contains,
            cut,
            faces,
            fraction,
        })
    }

    pub fn contains(&self, side: Side, t: usize) -> bool {
        self.contains[side.index()][t]
    }

    /// Length of the discrete interface.
    pub fn interface_length(&self) -> f64 {
        self.cuts
            .iter()
            .filter_map(|c| c.interface.map(|s| s.length()))
            .sum()
    }

    pub fn side_area(&self, side: Side) -> f64 {
        self.cuts.iter().map(|c| c.part_area(side)).sum()
    }
}
