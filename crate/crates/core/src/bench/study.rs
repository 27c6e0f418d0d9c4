//! Solves, error norms, convergence orders and interface-position sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{Example, ProblemSpec};
use crate::forms::{
    assemble_system, compose_system, Discretization, DivergenceForm, Method, Params, StabDomain,
};
use crate::linalg::{
    self, diag_preconditioner, preconditioned_condition, ConditionOptions, CsrMatrix,
};
use crate::mesh::{BackgroundMesh, Rect};
use crate::spaces::ElementPair;
use crate::{Error, Point, Result};

/// Quadrature degree of error integrals.
const ERROR_DEGREE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConditionMode {
    #[default]
    None,
    Raw,
    /// Raw and diagonally preconditioned.
    Both,
}

/// One benchmark configuration, independent of mesh level and shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub example: Example,
    pub method: Method,
    pub pair: ElementPair,
    pub stab: StabDomain,
    pub tau_u: f64,
    pub tau_p: f64,
    pub tau_b: f64,
    pub gamma: f64,
    pub c_lambda: f64,
    pub divergence: DivergenceForm,
    pub condition: ConditionMode,
}

impl Case {
    pub fn new(example: Example, method: Method, pair: ElementPair) -> Self {
        Case {
            example,
            method,
            pair,
            stab: StabDomain::FullFaces,
            tau_u: 1.0,
            tau_p: 1.0,
            tau_b: 1.0,
            gamma: 1.0,
            c_lambda: 1.0,
            divergence: DivergenceForm::B0,
            condition: ConditionMode::None,
        }
    }

    pub fn with_stab(self, stab: StabDomain) -> Self {
        Case { stab, ..self }
    }

    pub fn with_condition(self, condition: ConditionMode) -> Self {
        Case { condition, ..self }
    }

    pub fn with_divergence(self, divergence: DivergenceForm) -> Self {
        Case { divergence, ..self }
    }

    pub fn params(&self, spec: &ProblemSpec) -> Params {
        Params {
            c_lambda: self.c_lambda,
            tau_u: self.tau_u,
            tau_p: self.tau_p,
            tau_b: self.tau_b,
            gamma: self.gamma,
            method: self.method,
            stab: self.stab,
            divergence: self.divergence,
            ..spec.params()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub l2_u: f64,
    pub l2_p: f64,
    pub l2_div: f64,
    pub linf_div: f64,
}

/// Per-run record; the CSV schema is a fixed subset of these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n: usize,
    pub h: f64,
    pub ndof_u: usize,
    pub ndof_p: usize,
    pub l2_u: f64,
    pub l2_p: f64,
    pub l2_div: f64,
    pub linf_div: f64,
    pub cond: Option<f64>,
    pub cond_pre: Option<f64>,
    pub method: Method,
    pub pair: ElementPair,
    pub stab: String,
    pub shift_x: f64,
    pub shift_y: f64,
    /// Relative residual of the linear solve.
    pub residual: f64,
    /// Max-norm residual of the pressure test rows at the solution.
    pub divergence_rows_residual: f64,
    /// Whether the zero-mean row is part of the system (and of `cond`).
    pub mean_constraint: bool,
}

/// Result of one solve with everything needed for further checks.
#[derive(Debug, Clone)]
pub struct Solved {
    pub report: ErrorReport,
    pub disc: Discretization,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub solution: Vec<f64>,
}

/// Errors of a solution vector laid out as `[u_1, u_2, p_1, p_2, ...]`.
pub fn compute_errors(
    disc: &Discretization,
    spec: &ProblemSpec,
    solution: &[f64],
) -> Result<ErrorMetrics> {
    let off = disc.offsets();
    if solution.len() < off.n_u + off.n_p {
        return Err(Error::Internal(
            "solution shorter than the unknown count".into(),
        ));
    }
    let mesh = &disc.mesh;
    let mut items = Vec::new();
    for side in disc.sides() {
        for &t in &disc.dofmaps[side.index()].elements {
            items.push((side, t));
        }
    }
    // [u err^2, p err, unused, area, div err^2, linf div err, p err^2]
    let parts: Vec<[f64; 7]> = items
        .par_iter()
        .map(|&(side, t)| -> Result<[f64; 7]> {
            let dm = &disc.dofmaps[side.index()];
            let (uo, po) = (off.u[side.index()], off.n_u + off.p[side.index()]);
            let uc: Vec<f64> = dm
                .velocity_dofs_of(t)
                .expect("active")
                .iter()
                .map(|&d| solution[uo + d])
                .collect();
            let pc: Vec<f64> = dm
                .pressure_dofs_of(t)
                .expect("active")
                .iter()
                .map(|&d| solution[po + d])
                .collect();
            let vb = dm.velocity_basis(mesh, t)?;
            let pb = dm.pressure_basis(mesh, t)?;
            let eval = |x: Point| {
                let (vals, divs, qs) = (vb.values(x), vb.divergences(x), pb.values(x));
                let mut u = [0.0; 2];
                let mut d = 0.0;
                for k in 0..uc.len() {
                    u[0] += uc[k] * vals[k][0];
                    u[1] += uc[k] * vals[k][1];
                    d += uc[k] * divs[k];
                }
                let p: f64 = pc.iter().zip(&qs).map(|(c, q)| c * q).sum();
                (u, d, p)
            };
            let cut = &disc.active.cuts[t];
            let mut acc = [0.0; 7];
            for (x, w) in cut.volume_rule(side, ERROR_DEGREE).iter() {
                let (u, d, p) = eval(x);
                let ue = spec.exact_u(side, x);
                let pe = spec.exact_p(side, x);
                let de = d - spec.exact_g(side, x);
                acc[0] += w * ((u[0] - ue[0]).powi(2) + (u[1] - ue[1]).powi(2));
                acc[1] += w * (p - pe);
                acc[3] += w;
                acc[4] += w * de * de;
                acc[5] = acc[5].max(de.abs());
                acc[6] += w * (p - pe).powi(2);
            }
            for &x in cut.part(side) {
                let (_, d, _) = eval(x);
                acc[5] = acc[5].max((d - spec.exact_g(side, x)).abs());
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut s = [0.0f64; 7];
    for a in &parts {
        for k in 0..7 {
            if k == 5 {
                s[5] = s[5].max(a[5]);
            } else {
                s[k] += a[k];
            }
        }
    }
    // With a zero-mean constraint the pressure is compared up to its mean offset.
    let p_sq = if disc.needs_mean_constraint() && s[3] > 0.0 {
        (s[6] - s[1] * s[1] / s[3]).max(0.0)
    } else {
        s[6]
    };
    Ok(ErrorMetrics {
        l2_u: s[0].sqrt(),
        l2_p: p_sq.sqrt(),
        l2_div: s[4].sqrt(),
        linf_div: s[5],
    })
}

/// Assembles, solves and evaluates one case on the `n x n` mesh with the interface moved by `shift`.
pub fn run_single(case: &Case, n: usize, shift: Point) -> Result<Solved> {
    run_single_with(case, n, shift, &ConditionOptions::default())
}

pub fn run_single_with(
    case: &Case,
    n: usize,
    shift: Point,
    cond_opts: &ConditionOptions,
) -> Result<Solved> {
    let spec = ProblemSpec::of(case.example).shifted(shift);
    let params = case.params(&spec);
    params.validate()?;
    let mesh = BackgroundMesh::structured(n, Rect::unit())?;
    let h = mesh.h_global;
    let disc = Discretization::new(mesh, &spec.level_set(), case.pair, spec.mode, case.stab)?;
    let blocks = assemble_system(&disc, &params, &spec)?;
    let (matrix, rhs) = compose_system(&blocks, case.method, case.divergence)?;
    let solve = linalg::solve(&matrix, &rhs)?;
    let metrics = compute_errors(&disc, &spec, &solve.solution)?;
    let off = disc.offsets();
    let r = matrix.matvec(&solve.solution);
    let divergence_rows_residual =
        (off.n_u..off.n_u + off.n_p).fold(0.0f64, |m, i| m.max((r[i] - rhs[i]).abs()));
    let (cond, cond_pre) = match case.condition {
        ConditionMode::None => (None, None),
        ConditionMode::Raw => (Some(linalg::condition_number(&matrix, cond_opts)?), None),
        ConditionMode::Both => {
            let p = diag_preconditioner(
                &blocks.a,
                &blocks.pressure_mass,
                usize::from(blocks.mean.is_some()),
            )?;
            (
                Some(linalg::condition_number(&matrix, cond_opts)?),
                Some(preconditioned_condition(&matrix, &p, cond_opts)?),
            )
        }
    };
    let report = ErrorReport {
        n,
        h,
        ndof_u: off.n_u,
        ndof_p: off.n_p,
        l2_u: metrics.l2_u,
        l2_p: metrics.l2_p,
        l2_div: metrics.l2_div,
        linf_div: metrics.linf_div,
        cond,
        cond_pre,
        method: case.method,
        pair: case.pair,
        stab: case.stab.name().to_string(),
        shift_x: shift[0],
        shift_y: shift[1],
        residual: solve.residual,
        divergence_rows_residual,
        mean_constraint: blocks.mean.is_some(),
    };
    Ok(Solved {
        report,
        disc,
        matrix,
        rhs,
        solution: solve.solution,
    })
}

/// One report per level, in level order.
pub fn refinement_study(case: &Case, levels: &[usize]) -> Result<Vec<ErrorReport>> {
    check_levels(levels)?;
    levels
        .iter()
        .map(|&n| run_single(case, n, [0.0, 0.0]).map(|s| s.report))
        .collect()
}

/// One report per shift, in shift order; shifts run concurrently.
pub fn interface_sweep(case: &Case, n: usize, shifts: &[Point]) -> Result<Vec<ErrorReport>> {
    let spec = ProblemSpec::of(case.example);
    for s in shifts {
        let c = [spec.center[0] + s[0], spec.center[1] + s[1]];
        let inside = c
            .iter()
            .all(|&v| v - spec.radius > 0.0 && v + spec.radius < 1.0);
        if !inside {
            return Err(Error::InvalidArgument(format!(
                "shift {s:?} moves the circle out of the box"
            )));
        }
    }
    shifts
        .par_iter()
        .map(|&s| run_single(case, n, s).map(|r| r.report))
        .collect()
}

/// `count` shifts `k h / count` along x, `k = 0..count`.
pub fn sweep_shifts(count: usize, h: f64) -> Vec<Point> {
    (0..count)
        .map(|k| [k as f64 * h / count as f64, 0.0])
        .collect()
}

fn check_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) || levels[0] == 0 {
        return Err(Error::InvalidArgument(format!(
            "levels must be positive and strictly increasing, got {levels:?}"
        )));
    }
    Ok(())
}

/// Orders between consecutive levels; `None` where an error is zero (saturated).
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<Option<f64>>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument(
            "eoc needs two or more matching errors and mesh sizes".into(),
        ));
    }
    if hs.windows(2).any(|w| !(w[0] > w[1]) || w[1] <= 0.0) {
        return Err(Error::InvalidArgument(
            "mesh sizes must be positive and strictly decreasing".into(),
        ));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            if e[0] <= 0.0 || e[1] <= 0.0 {
                None
            } else {
                Some((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            }
        })
        .collect())
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "slope needs two or more positive pairs".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("mesh sizes must differ".into()));
    }
    Ok(sxy / sxx)
}
