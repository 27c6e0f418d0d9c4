//! Manufactured benchmark problems.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::forms::{BoundaryKind, Mode, Params, ProblemData};
use crate::geometry::{LevelSet, Side};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Example {
    /// Circular interface, pressure prescribed on the box.
    #[serde(rename = "1")]
    One,
    /// Circular interface, normal velocity prescribed on the box.
    #[serde(rename = "1u")]
    OneU,
    /// Fictitious domain: a disk with normal velocity prescribed on its boundary.
    #[serde(rename = "2")]
    Two,
}

impl Example {
    pub fn name(&self) -> &'static str {
        match self {
            Example::One => "1",
            Example::OneU => "1u",
            Example::Two => "2",
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Example {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Example::One),
            "1u" => Ok(Example::OneU),
            "2" => Ok(Example::Two),
            other => Err(Error::InvalidArgument(format!("unknown example '{other}'"))),
        }
    }
}

pub const EXAMPLE1_RADIUS: f64 = 0.25;
pub const EXAMPLE2_RADIUS: f64 = 0.45;
pub const CENTER: Point = [0.5, 0.5];

/// Geometry, coefficients, data and exact solution of one benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub example: Example,
    pub center: Point,
    pub radius: f64,
    pub mode: Mode,
    pub eta: f64,
    pub kappa_gamma: f64,
    pub xi: f64,
}

impl ProblemSpec {
    pub fn example1() -> Self {
        let r = EXAMPLE1_RADIUS;
        ProblemSpec {
            example: Example::One,
            center: CENTER,
            radius: r,
            mode: Mode::Interface(BoundaryKind::Pressure),
            eta: 1.0,
            kappa_gamma: 2.0 * r / 3.0,
            xi: 0.125,
        }
    }

    pub fn example1u() -> Self {
        ProblemSpec {
            example: Example::OneU,
            mode: Mode::Interface(BoundaryKind::Velocity),
            ..Self::example1()
        }
    }

    pub fn example2() -> Self {
        ProblemSpec {
            example: Example::Two,
            center: CENTER,
            radius: EXAMPLE2_RADIUS,
            mode: Mode::Fictitious,
            eta: 1.0,
            kappa_gamma: 1.0,
            xi: 0.125,
        }
    }

    pub fn of(example: Example) -> Self {
        match example {
            Example::One => Self::example1(),
            Example::OneU => Self::example1u(),
            Example::Two => Self::example2(),
        }
    }

    /// Moves the interface; Example 1 solutions move with it.
    pub fn shifted(&self, shift: Point) -> Self {
        ProblemSpec {
            center: [self.center[0] + shift[0], self.center[1] + shift[1]],
            ..*self
        }
    }

    pub fn level_set(&self) -> LevelSet {
        LevelSet::Circle {
            center: self.center,
            radius: self.radius,
        }
    }

    /// Default parameters with this problem's coefficients.
    pub fn params(&self) -> Params {
        Params {
            eta: [[self.eta; 2]; 2],
            kappa_gamma: self.kappa_gamma,
            xi: self.xi,
            ..Params::default()
        }
    }

    pub fn p_hat_value(&self) -> f64 {
        19.0 / 12.0
    }

    fn rel(&self, x: Point) -> Point {
        [x[0] - self.center[0], x[1] - self.center[1]]
    }

    pub fn exact_u(&self, side: Side, x: Point) -> Point {
        match self.example {
            Example::One | Example::OneU => {
                let r2 = self.radius * self.radius;
                let c = match side {
                    Side::One => -1.0 / r2,
                    Side::Two => -2.0 / r2,
                };
                let d = self.rel(x);
                [c * d[0], c * d[1]]
            }
            Example::Two => {
                let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
                [2.0 * PI * a.cos() * b.cos(), -2.0 * PI * a.sin() * b.sin()]
            }
        }
    }

    pub fn exact_p(&self, side: Side, x: Point) -> f64 {
        match self.example {
            Example::One | Example::OneU => {
                let d = self.rel(x);
                let q = (d[0] * d[0] + d[1] * d[1]) / (self.radius * self.radius);
                match side {
                    Side::One => 0.5 * q + 1.5,
                    Side::Two => q,
                }
            }
            Example::Two => -(2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(),
        }
    }

    pub fn exact_grad_p(&self, side: Side, x: Point) -> Point {
        match self.example {
            Example::One | Example::OneU => {
                let r2 = self.radius * self.radius;
                let c = match side {
                    Side::One => 1.0 / r2,
                    Side::Two => 2.0 / r2,
                };
                let d = self.rel(x);
                [c * d[0], c * d[1]]
            }
            Example::Two => {
                let (a, b) = (2.0 * PI * x[0], 2.0 * PI * x[1]);
                [-2.0 * PI * a.cos() * b.cos(), 2.0 * PI * a.sin() * b.sin()]
            }
        }
    }

    pub fn exact_g(&self, side: Side, x: Point) -> f64 {
        match self.example {
            Example::One | Example::OneU => {
                let r2 = self.radius * self.radius;
                match side {
                    Side::One => -2.0 / r2,
                    Side::Two => -4.0 / r2,
                }
            }
            Example::Two => -8.0 * PI * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(),
        }
    }

    pub fn exact_f(&self, side: Side, x: Point) -> Point {
        let (u, gp) = (self.exact_u(side, x), self.exact_grad_p(side, x));
        // Zero for both examples up to rounding; evaluated rather than hard-coded.
        let f = [self.eta * u[0] + gp[0], self.eta * u[1] + gp[1]];
        if f[0].abs() + f[1].abs() < 1e-12 * (1.0 + gp[0].abs() + gp[1].abs()) {
            [0.0, 0.0]
        } else {
            f
        }
    }
}

impl ProblemData for ProblemSpec {
    fn f(&self, side: Side, x: Point) -> Point {
        self.exact_f(side, x)
    }

    fn g(&self, side: Side, x: Point) -> f64 {
        self.exact_g(side, x)
    }

    fn p_hat(&self, _x: Point) -> f64 {
        self.p_hat_value()
    }

    fn p_b(&self, x: Point) -> f64 {
        self.exact_p(Side::One, x)
    }

    fn u_b(&self, x: Point, n: Point) -> f64 {
        let side = match self.mode {
            Mode::Fictitious => Side::Two,
            Mode::Interface(_) => Side::One,
        };
        let u = self.exact_u(side, x);
        u[0] * n[0] + u[1] * n[1]
    }
}
