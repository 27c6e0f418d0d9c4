//! Command line driver: refinement studies and interface sweeps written as CSV.
//!
//! Output files in the output directory:
//!
//! * `reports.csv`: one row per (level, shift) with columns
//!   `h, ndof_u, ndof_p, l2_u, l2_p, l2_div, linf_div, cond, cond_pre, method, pair, stab, shift_x, shift_y`,
//! * `eoc.csv`: orders between consecutive levels and least-squares slopes
//!   (unshifted runs only),
//! * `sweep.csv`: min/max condition numbers per level (sweeps only),
//! * `<metric>.dat`: whitespace separated `h value` pairs for log-log plots,
//! * `geometry.csv`: per-element classification, fractions and macro roots of the finest level.
//!
//! Exit codes: 0 success, 2 configuration error, 3 geometry error, 4 solver error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::ProblemSpec;
use crate::bench::{
    eoc, fit_slope, run_single, sweep_shifts, Case, ConditionMode, ErrorReport, Example,
};
use crate::forms::{Discretization, DivergenceForm, Method, StabDomain};
use crate::geometry::Side;
use crate::mesh::{BackgroundMesh, Rect};
use crate::spaces::ElementPair;
use crate::{Error, Result};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CUTFEM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StabKind {
    Full,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CondKind {
    None,
    Raw,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DivKind {
    B0,
    B,
}

/// Effective configuration of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub example: Example,
    pub method: Method,
    pub pair: ElementPair,
    pub stab: StabKind,
    pub delta: f64,
    pub gamma: f64,
    pub tau_u: f64,
    pub tau_p: f64,
    pub tau_b: f64,
    pub c: f64,
    pub levels: Vec<usize>,
    /// Number of interface shifts in `[0, h)` along x; 0 disables the sweep.
    pub sweep: usize,
    pub cond: CondKind,
    pub divergence: DivKind,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            example: Example::One,
            method: Method::Method2,
            pair: ElementPair::RT0_P0,
            stab: StabKind::Full,
            delta: 0.25,
            gamma: 1.0,
            tau_u: 1.0,
            tau_p: 1.0,
            tau_b: 1.0,
            c: 1.0,
            levels: vec![8, 16, 32],
            sweep: 0,
            cond: CondKind::Raw,
            divergence: DivKind::B0,
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty()
            || self.levels[0] == 0
            || self.levels.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidArgument(format!(
                "levels must be positive and strictly increasing, got {:?}",
                self.levels
            )));
        }
        self.case()
            .params(&ProblemSpec::of(self.example))
            .validate()
    }

    pub fn case(&self) -> Case {
        let stab = match self.stab {
            StabKind::Full => StabDomain::FullFaces,
            StabKind::Macro => StabDomain::Macro {
                delta_1: self.delta,
                delta_2: self.delta,
            },
        };
        Case {
            tau_u: self.tau_u,
            tau_p: self.tau_p,
            tau_b: self.tau_b,
            gamma: self.gamma,
            c_lambda: self.c,
            divergence: match self.divergence {
                DivKind::B0 => DivergenceForm::B0,
                DivKind::B => DivergenceForm::B,
            },
            condition: match self.cond {
                CondKind::None => ConditionMode::None,
                CondKind::Raw => ConditionMode::Raw,
                CondKind::Both => ConditionMode::Both,
            },
            ..Case::new(self.example, self.method, self.pair).with_stab(stab)
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cutfem-darcy",
    version,
    about = "Unfitted mixed FEM benchmarks for Darcy interface problems"
)]
pub struct Cli {
    /// JSON file with RunConfig fields; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// 1, 1u (velocity prescribed on the box) or 2 (fictitious domain).
    #[arg(long)]
    pub example: Option<String>,
    /// unstab, m1 or m2.
    #[arg(long)]
    pub method: Option<String>,
    /// rt0p0, bdm1p0 or rt1p1.
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long, value_enum)]
    pub stab: Option<StabKind>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau_u: Option<f64>,
    #[arg(long)]
    pub tau_p: Option<f64>,
    #[arg(long)]
    pub tau_b: Option<f64>,
    /// Boundary penalty constant in lambda = c / h.
    #[arg(long)]
    pub c: Option<f64>,
    /// Comma separated subdivision counts, e.g. 8,16,32,64.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Number of interface shifts per level.
    #[arg(long)]
    pub sweep: Option<usize>,
    #[arg(long, value_enum)]
    pub cond: Option<CondKind>,
    #[arg(long, value_enum)]
    pub divergence: Option<DivKind>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Cli {
    /// Defaults, then the JSON file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &self.example {
            cfg.example = v.parse()?;
        }
        if let Some(v) = &self.method {
            cfg.method = v.parse()?;
        }
        if let Some(v) = &self.pair {
            cfg.pair = v.parse()?;
        }
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $( if let Some(v) = &self.$f { cfg.$g = v.clone(); } )* };
        }
        set!(stab => stab, delta => delta, gamma => gamma, tau_u => tau_u, tau_p => tau_p, tau_b => tau_b,
             c => c, levels => levels, sweep => sweep, cond => cond, divergence => divergence, out => output,
             seed => seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Paths and rows produced by one invocation.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub reports: Vec<ErrorReport>,
    pub files: Vec<PathBuf>,
}

pub const CSV_HEADER: [&str; 14] = [
    "h", "ndof_u", "ndof_p", "l2_u", "l2_p", "l2_div", "linf_div", "cond", "cond_pre", "method",
    "pair", "stab", "shift_x", "shift_y",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn csv_row(r: &ErrorReport) -> Vec<String> {
    vec![
        format!("{:e}", r.h),
        r.ndof_u.to_string(),
        r.ndof_p.to_string(),
        format!("{:e}", r.l2_u),
        format!("{:e}", r.l2_p),
        format!("{:e}", r.l2_div),
        format!("{:e}", r.linf_div),
        opt(r.cond),
        opt(r.cond_pre),
        r.method.to_string(),
        r.pair.to_string(),
        r.stab.clone(),
        format!("{:e}", r.shift_x),
        format!("{:e}", r.shift_y),
    ]
}

fn write_reports(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        w.write_record(csv_row(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn metric_series(reports: &[ErrorReport]) -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("l2_u", reports.iter().map(|r| r.l2_u).collect()),
        ("l2_p", reports.iter().map(|r| r.l2_p).collect()),
        ("l2_div", reports.iter().map(|r| r.l2_div).collect()),
        ("linf_div", reports.iter().map(|r| r.linf_div).collect()),
        ("cond", reports.iter().filter_map(|r| r.cond).collect()),
        (
            "cond_pre",
            reports.iter().filter_map(|r| r.cond_pre).collect(),
        ),
    ]
}

fn write_eoc(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let hs: Vec<f64> = reports.iter().map(|r| r.h).collect();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["metric", "n_coarse", "n_fine", "order"])
        .map_err(csv_err)?;
    for (name, values) in metric_series(reports) {
        if values.len() != hs.len() || hs.len() < 2 {
            continue;
        }
        for (k, o) in eoc(&values, &hs)?.iter().enumerate() {
            let order = o
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "saturated".into());
            w.write_record([
                name.to_string(),
                reports[k].n.to_string(),
                reports[k + 1].n.to_string(),
                order,
            ])
            .map_err(csv_err)?;
        }
        let slope = fit_slope(&hs, &values)
            .map(|s| format!("{s:.6}"))
            .unwrap_or_else(|_| "saturated".into());
        w.write_record([
            name.to_string(),
            reports[0].n.to_string(),
            reports[reports.len() - 1].n.to_string(),
            format!("fit:{slope}"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plots(dir: &Path, reports: &[ErrorReport], files: &mut Vec<PathBuf>) -> Result<()> {
    for (name, values) in metric_series(reports) {
        if values.len() != reports.len() || values.is_empty() {
            continue;
        }
        let path = dir.join(format!("{name}.dat"));
        let mut f = fs::File::create(&path)?;
        writeln!(f, "# h {name}")?;
        for (r, v) in reports.iter().zip(values) {
            writeln!(f, "{:e} {:e}", r.h, v)?;
        }
        files.push(path);
    }
    Ok(())
}

fn write_sweep(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "n",
        "shifts",
        "cond_min",
        "cond_max",
        "cond_ratio",
        "cond_pre_min",
        "cond_pre_max",
        "cond_pre_ratio",
    ])
    .map_err(csv_err)?;
    let mut levels: Vec<usize> = reports.iter().map(|r| r.n).collect();
    levels.dedup();
    for n in levels {
        let rows: Vec<&ErrorReport> = reports.iter().filter(|r| r.n == n).collect();
        let stats = |vals: Vec<f64>| -> [String; 3] {
            if vals.is_empty() {
                return [String::new(), String::new(), String::new()];
            }
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            [
                format!("{lo:e}"),
                format!("{hi:e}"),
                format!("{:e}", hi / lo),
            ]
        };
        let c = stats(rows.iter().filter_map(|r| r.cond).collect());
        let p = stats(rows.iter().filter_map(|r| r.cond_pre).collect());
        let mut rec = vec![n.to_string(), rows.len().to_string()];
        rec.extend(c);
        rec.extend(p);
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-element classification, fractions and macro roots.
pub fn write_geometry(path: &Path, disc: &Discretization) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "element",
        "classification",
        "fraction_1",
        "fraction_2",
        "root_1",
        "root_2",
    ])
    .map_err(csv_err)?;
    for (t, cut) in disc.active.cuts.iter().enumerate() {
        let root = |s: Side| {
            disc.macros
                .as_ref()
                .and_then(|m| m.side(s).root[t])
                .map(|r| r.to_string())
                .unwrap_or_default()
        };
        w.write_record([
            t.to_string(),
            format!("{:?}", cut.classification),
            format!("{:e}", disc.active.fraction[0][t]),
            format!("{:e}", disc.active.fraction[1][t]),
            root(Side::One),
            root(Side::Two),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every (level, shift) of the configuration and writes all artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output)?;
    let case = cfg.case();
    let mut reports = Vec::new();
    let mut finest = None;
    for &n in &cfg.levels {
        let h = BackgroundMesh::structured(n, Rect::unit())?.h_global;
        let shifts = if cfg.sweep == 0 {
            vec![[0.0, 0.0]]
        } else {
            sweep_shifts(cfg.sweep, h)
        };
        let solved: Vec<_> = {
            use rayon::prelude::*;
            shifts
                .par_iter()
                .map(|&s| run_single(&case, n, s).map_err(|e| level_error(e, n)))
                .collect::<Result<Vec<_>>>()?
        };
        for s in solved {
            reports.push(s.report.clone());
            finest = Some(s.disc);
        }
    }
    let mut files = Vec::new();
    let csv_path = cfg.output.join("reports.csv");
    write_reports(&csv_path, &reports)?;
    files.push(csv_path);
    if cfg.sweep == 0 {
        let path = cfg.output.join("eoc.csv");
        write_eoc(&path, &reports)?;
        files.push(path);
        write_plots(&cfg.output, &reports, &mut files)?;
    } else {
        let path = cfg.output.join("sweep.csv");
        write_sweep(&path, &reports)?;
        files.push(path);
    }
    if let Some(disc) = finest {
        let path = cfg.output.join("geometry.csv");
        write_geometry(&path, &disc)?;
        files.push(path);
    }
    let path = cfg.output.join("config.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(cfg).map_err(|e| Error::Internal(e.to_string()))?,
    )?;
    files.push(path);
    Ok(RunSummary { reports, files })
}

fn level_error(e: Error, n: usize) -> Error {
    match e {
        Error::ResolveInterface { element, reason } => Error::ResolveInterface {
            element,
            reason: format!("level n={n}: {reason}"),
        },
        other => other,
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_geometry() {
        3
    } else if e.is_solver() {
        4
    } else {
        2
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

/// Parses arguments, runs, prints a short summary and returns the exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads()
        .and_then(|_| cli.resolve())
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            for r in &summary.reports {
                println!(
                    "n={:<3} shift={:.4e} l2_u={:.3e} l2_p={:.3e} linf_div={:.3e} cond={}",
                    r.n,
                    r.shift_x,
                    r.l2_u,
                    r.l2_p,
                    r.linf_div,
                    opt(r.cond)
                );
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
