//! Quadrature on segments, triangles and convex polygons.

use crate::mesh::dist;
use crate::Point;

/// Points and weights; weights carry the measure of the region (area or arclength).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn empty() -> Self {
        QuadRule::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(Point) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    fn extend(&mut self, other: QuadRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton on P_n from the Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn points_for_degree(degree: usize) -> usize {
    degree.div_ceil(2) + 1
}

/// Gauss rule on the segment `a`-`b`, exact for polynomials up to `degree`.
pub fn quadrature_segment(a: Point, b: Point, degree: usize) -> QuadRule {
    let len = dist(a, b);
    if len <= 0.0 {
        return QuadRule::empty();
    }
    let (nodes, weights) = gauss_legendre(degree / 2 + 1);
    QuadRule {
        points: nodes
            .iter()
            .map(|&s| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])])
            .collect(),
        weights: weights.iter().map(|w| w * len).collect(),
    }
}

/// Collapsed (Duffy) Gauss product rule on a triangle.
pub fn quadrature_triangle(a: Point, b: Point, c: Point, degree: usize) -> QuadRule {
    let area2 = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
    if area2 <= 0.0 {
        return QuadRule::empty();
    }
    let m = points_for_degree(degree.max(1));
    let (nodes, weights) = gauss_legendre(m);
    let mut rule = QuadRule {
        points: Vec::with_capacity(m * m),
        weights: Vec::with_capacity(m * m),
    };
    for (s, ws) in nodes.iter().zip(&weights) {
        for (t, wt) in nodes.iter().zip(&weights) {
            // x = (1-s) a + s ((1-t) b + t c)
            let p = [
                (1.0 - s) * a[0] + s * ((1.0 - t) * b[0] + t * c[0]),
                (1.0 - s) * a[1] + s * ((1.0 - t) * b[1] + t * c[1]),
            ];
            rule.points.push(p);
            rule.weights.push(ws * wt * s * area2);
        }
    }
    rule
}

/// Fan triangulation of a convex polygon from its first vertex.
pub fn quadrature_polygon(polygon: &[Point], degree: usize) -> QuadRule {
    let mut rule = QuadRule::empty();
    if polygon.len() < 3 {
        return rule;
    }
    for k in 1..polygon.len() - 1 {
        rule.extend(quadrature_triangle(
            polygon[0],
            polygon[k],
            polygon[k + 1],
            degree,
        ));
    }
    rule
}

/// Signed area (positive for counterclockwise vertex order).
pub fn polygon_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (polygon[i], polygon[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}
