//! Structured background triangulation with element/face/vertex connectivity.

use std::collections::HashMap;
use std::io::Write;

use crate::{Error, Point, Result};

/// Axis-aligned rectangle `[min[0], max[0]] x [min[1], max[1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Rect { min, max }
    }

    pub fn unit() -> Self {
        Rect::new([0.0, 0.0], [1.0, 1.0])
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// An edge of the triangulation.
///
/// `vertices` are sorted by ascending global index. `elements.0` is the lower-indexed
/// adjacent element; the global face normal points out of it (into `elements.1` for
/// interior faces, out of the box for boundary faces).
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub vertices: [usize; 2],
    pub elements: (usize, Option<usize>),
    /// Local face index within each adjacent element (face `k` is opposite vertex `k`).
    pub local: (usize, Option<usize>),
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.elements.1.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    pub n: usize,
    pub bbox: Rect,
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub faces: Vec<Face>,
    /// `element_faces[t][k]` is the face opposite local vertex `k`.
    pub element_faces: Vec<[usize; 3]>,
    /// Maximum element diameter.
    pub h_global: f64,
}

/// Affine map `x = origin + J x_ref` from the reference triangle (0,0),(1,0),(0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    pub diameter: f64,
    pub origin: Point,
    /// Row-major Jacobian; columns are `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub inverse: [[f64; 2]; 2],
}

impl ElementGeometry {
    pub fn from_vertices(vertices: [Point; 3]) -> Result<Self> {
        let [a, b, c] = vertices;
        let jacobian = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        if det.abs() <= f64::MIN_POSITIVE || !det.is_finite() {
            return Err(Error::InvalidElement(format!(
                "zero Jacobian for vertices {vertices:?}"
            )));
        }
        let inverse = [
            [jacobian[1][1] / det, -jacobian[0][1] / det],
            [-jacobian[1][0] / det, jacobian[0][0] / det],
        ];
        let diameter = dist(a, b).max(dist(b, c)).max(dist(c, a));
        Ok(ElementGeometry {
            vertices,
            area: 0.5 * det.abs(),
            diameter,
            origin: a,
            jacobian,
            det,
            inverse,
        })
    }

    pub fn to_physical(&self, xr: Point) -> Point {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xr[0] + j[0][1] * xr[1],
            self.origin[1] + j[1][0] * xr[0] + j[1][1] * xr[1],
        ]
    }

    pub fn to_reference(&self, x: Point) -> Point {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let k = &self.inverse;
        [
            k[0][0] * d[0] + k[0][1] * d[1],
            k[1][0] * d[0] + k[1][1] * d[1],
        ]
    }

    pub fn centroid(&self) -> Point {
        let [a, b, c] = self.vertices;
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl BackgroundMesh {
    /// `n x n` squares, each split along its lower-left to upper-right diagonal.
    pub fn structured(n: usize, bbox: Rect) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "subdivision count must be >= 1".into(),
            ));
        }
        let (dx, dy) = (bbox.max[0] - bbox.min[0], bbox.max[1] - bbox.min[1]);
        if !(dx > 0.0 && dy > 0.0) || !dx.is_finite() || !dy.is_finite() {
            return Err(Error::InvalidArgument(format!("degenerate box {bbox:?}")));
        }

        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([
                    bbox.min[0] + dx * i as f64 / n as f64,
                    bbox.min[1] + dy * j as f64 / n as f64,
                ]);
            }
        }
        let vid = |i: usize, j: usize| j * (n + 1) + i;

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) =
                    (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut element_faces = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut ef = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    Some(&f) => {
                        // Elements are visited in ascending order, so `t` is the higher index.
                        faces[f].elements.1 = Some(t);
                        faces[f].local.1 = Some(k);
                        ef[k] = f;
                    }
                    None => {
                        lookup.insert(key, faces.len());
                        ef[k] = faces.len();
                        faces.push(Face {
                            vertices: [key.0, key.1],
                            elements: (t, None),
                            local: (k, None),
                        });
                    }
                }
            }
            element_faces.push(ef);
        }

        let h_global = (dx / n as f64).hypot(dy / n as f64);
        Ok(BackgroundMesh {
            n,
            bbox,
            vertices,
            triangles,
            faces,
            element_faces,
            h_global,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_vertices(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    pub fn element_geometry(&self, t: usize) -> Result<ElementGeometry> {
        if t >= self.triangles.len() {
            return Err(Error::InvalidArgument(format!(
                "element index {t} out of range"
            )));
        }
        ElementGeometry::from_vertices(self.element_vertices(t))
    }

    pub fn face_endpoints(&self, f: usize) -> [Point; 2] {
        let [a, b] = self.faces[f].vertices;
        [self.vertices[a], self.vertices[b]]
    }

    pub fn face_length(&self, f: usize) -> f64 {
        let [a, b] = self.face_endpoints(f);
        dist(a, b)
    }

    /// Unit normal pointing out of the lower-indexed adjacent element.
    pub fn face_normal(&self, f: usize) -> Point {
        let face = &self.faces[f];
        let [a, b] = self.face_endpoints(f);
        let len = dist(a, b);
        let mut n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
        let tri = self.triangles[face.elements.0];
        let opposite = self.vertices[tri[face.local.0]];
        let into = [opposite[0] - a[0], opposite[1] - a[1]];
        if n[0] * into[0] + n[1] * into[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// +1 if the global normal of `element_faces[t][k]` is outward for `t`, else -1.
    pub fn face_orientation(&self, t: usize, k: usize) -> f64 {
        if self.faces[self.element_faces[t][k]].elements.0 == t {
            1.0
        } else {
            -1.0
        }
    }

    /// Element across local face `k`, if any.
    pub fn neighbor(&self, t: usize, k: usize) -> Option<usize> {
        let face = &self.faces[self.element_faces[t][k]];
        match face.elements {
            (a, Some(b)) if a == t => Some(b),
            (a, Some(_)) => Some(a),
            _ => None,
        }
    }

    pub fn boundary_face_count(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    /// Plain-text dump: vertex count, vertex lines, triangle count, triangle lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", v[0], v[1])?;
        }
        writeln!(w, "{}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(n: usize) -> (usize, usize, usize) {
        let m = BackgroundMesh::structured(n, Rect::unit()).unwrap();
        (m.vertices.len(), m.faces.len(), m.triangles.len())
    }

    #[test]
    fn euler_counts() {
        assert_eq!(counts(1), (4, 5, 2));
        assert_eq!(counts(2), (9, 16, 8));
        assert_eq!(counts(4), (25, 56, 32));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(BackgroundMesh::structured(0, Rect::unit()).is_err());
        assert!(BackgroundMesh::structured(2, Rect::new([0.0, 0.0], [1.0, 0.0])).is_err());
    }

    #[test]
    fn reference_triangle_geometry() {
        let g = ElementGeometry::from_vertices([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((g.area - 0.5).abs() < 1e-15);
        assert!((g.diameter - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.det, 1.0);
    }

    #[test]
    fn n2_elements() {
        let m = BackgroundMesh::structured(2, Rect::unit()).unwrap();
        for t in 0..m.num_elements() {
            let g = m.element_geometry(t).unwrap();
            assert!((g.area - 0.125).abs() < 1e-15);
            assert!((g.det - 0.25).abs() < 1e-15);
        }
        assert!(m.element_geometry(8).is_err());
    }

    #[test]
    fn degenerate_triangle_is_invalid() {
        let r = ElementGeometry::from_vertices([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(r, Err(Error::InvalidElement(_))));
    }

    #[test]
    fn normals_point_out_of_lower_element() {
        let m = BackgroundMesh::structured(3, Rect::unit()).unwrap();
        for (f, face) in m.faces.iter().enumerate() {
            let n = m.face_normal(f);
            let [a, _] = m.face_endpoints(f);
            let c = m.element_geometry(face.elements.0).unwrap().centroid();
            assert!(n[0] * (c[0] - a[0]) + n[1] * (c[1] - a[1]) < 0.0);
            if let Some(hi) = face.elements.1 {
                assert!(hi > face.elements.0);
            }
            assert!(face.vertices[0] < face.vertices[1]);
        }
    }

    #[test]
    fn text_dump_has_header_counts() {
        let m = BackgroundMesh::structured(1, Rect::unit()).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "4");
        assert_eq!(lines[5], "2");
        assert_eq!(lines.len(), 8);
    }
}
