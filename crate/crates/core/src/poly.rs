//! Bivariate polynomials of total degree at most two.

use std::ops::{Add, Mul};

use crate::Point;

/// Coefficients of `1, x, y, x^2, xy, y^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Poly2(pub [f64; 6]);

impl Poly2 {
    pub const ZERO: Poly2 = Poly2([0.0; 6]);

    pub fn constant(c: f64) -> Self {
        Poly2([c, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn x() -> Self {
        Poly2([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn y() -> Self {
        Poly2([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn eval(&self, p: Point) -> f64 {
        let c = &self.0;
        let (x, y) = (p[0], p[1]);
        c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    }

    pub fn dx(&self) -> Poly2 {
        let c = &self.0;
        Poly2([c[1], 2.0 * c[3], c[4], 0.0, 0.0, 0.0])
    }

    pub fn dy(&self) -> Poly2 {
        let c = &self.0;
        Poly2([c[2], c[4], 2.0 * c[5], 0.0, 0.0, 0.0])
    }

    /// `(dir . grad)^order p`.
    pub fn directional(&self, dir: Point, order: usize) -> Poly2 {
        (0..order).fold(*self, |p, _| p.dx() * dir[0] + p.dy() * dir[1])
    }

    pub fn degree(&self) -> usize {
        let c = &self.0;
        if c[3..].iter().any(|&v| v != 0.0) {
            2
        } else if c[1] != 0.0 || c[2] != 0.0 {
            1
        } else {
            0
        }
    }

    /// Product, provided the total degree stays at most two.
    pub fn times(&self, other: &Poly2) -> Option<Poly2> {
        if self.degree() + other.degree() > 2 {
            return None;
        }
        let (a, b) = (&self.0, &other.0);
        Some(Poly2([
            a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[2] * b[0],
            a[0] * b[3] + a[1] * b[1] + a[3] * b[0],
            a[0] * b[4] + a[1] * b[2] + a[2] * b[1] + a[4] * b[0],
            a[0] * b[5] + a[2] * b[2] + a[5] * b[0],
        ]))
    }
}

impl Add for Poly2 {
    type Output = Poly2;
    fn add(self, rhs: Poly2) -> Poly2 {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Poly2(c)
    }
}

impl Mul<f64> for Poly2 {
    type Output = Poly2;
    fn mul(self, s: f64) -> Poly2 {
        Poly2(self.0.map(|c| c * s))
    }
}

/// Vector field with `Poly2` components.
pub type VecPoly = [Poly2; 2];

pub fn div(v: &VecPoly) -> Poly2 {
    v[0].dx() + v[1].dy()
}
