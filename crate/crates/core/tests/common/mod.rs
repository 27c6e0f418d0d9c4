//! Property checks shared by the proptest suites and the acceptance run.
//! Each check returns `Err(description)` on the first violated property.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use cutfem_darcy::aggregation::{build_macro_partition, classify_large};
use cutfem_darcy::bench::{eoc, fit_slope};
use cutfem_darcy::forms::{
    assemble_s_b, assemble_s_p, assemble_s_u, BoundaryKind, Discretization, Mode, Params,
    StabDomain,
};
use cutfem_darcy::geometry::{ActiveMeshes, LevelSet, Side};
use cutfem_darcy::linalg::{spectral_condition_number, CsrMatrix, DENSE_LIMIT};
use cutfem_darcy::mesh::{BackgroundMesh, ElementGeometry, Rect};
use cutfem_darcy::quadrature::{quadrature_segment, quadrature_triangle};
use cutfem_darcy::spaces::{piola_map, ref_basis, DofMap, ElementPair};
use cutfem_darcy::{Error, Point};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = std::result::Result<(), String>;

pub fn pair_of(i: usize) -> ElementPair {
    ElementPair::ALL[i % 3]
}

pub fn circle(center: Point, radius: f64) -> LevelSet {
    LevelSet::circle(center, radius).unwrap()
}

pub fn random_vec(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn to_dense(c: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(c.nrows, c.ncols);
    for (i, j, v) in c.triplets() {
        m[(i, j)] += v;
    }
    m
}

fn active(
    n: usize,
    center: Point,
    radius: f64,
) -> std::result::Result<(BackgroundMesh, ActiveMeshes), String> {
    let mesh = BackgroundMesh::structured(n, Rect::unit()).map_err(|e| e.to_string())?;
    let act = ActiveMeshes::build(&mesh, &circle(center, radius)).map_err(|e| e.to_string())?;
    Ok((mesh, act))
}

/// Both one-sided normal traces agree on every face shared by two active elements.
pub fn normal_continuity(
    n: usize,
    pair: ElementPair,
    center: Point,
    radius: f64,
    seed: u64,
) -> Check {
    let (mesh, act) = active(n, center, radius)?;
    for side in Side::BOTH {
        let dm = DofMap::build(&mesh, &act, side, pair);
        let coeffs = random_vec(seed ^ side.index() as u64, dm.n_velocity);
        for &f in &dm.faces {
            let face = &mesh.faces[f];
            let (Some(t2), t1) = (face.elements.1, face.elements.0) else {
                continue;
            };
            if dm.position[t1].is_none() || dm.position[t2].is_none() {
                continue;
            }
            let [a, b] = mesh.face_endpoints(f);
            let nf = mesh.face_normal(f);
            for (x, _) in quadrature_segment(a, b, 5).iter() {
                let (u1, _) = dm
                    .eval_velocity(&mesh, &coeffs, t1, x)
                    .map_err(|e| e.to_string())?;
                let (u2, _) = dm
                    .eval_velocity(&mesh, &coeffs, t2, x)
                    .map_err(|e| e.to_string())?;
                let jump = (u1[0] - u2[0]) * nf[0] + (u1[1] - u2[1]) * nf[1];
                let scale = 1.0 + u1[0].abs() + u1[1].abs();
                if jump.abs() > 1e-10 * scale {
                    return Err(format!("normal jump {jump:e} on face {f} ({pair}, n={n})"));
                }
            }
        }
    }
    Ok(())
}

/// Elementwise L2 projection of `div u_h` onto the pressure space, computed locally.
pub fn project_divergence(mesh: &BackgroundMesh, dm: &DofMap, coeffs: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; dm.n_pressure];
    for &t in &dm.elements {
        let basis = dm.pressure_basis(mesh, t).unwrap();
        let dofs = dm.pressure_dofs_of(t).unwrap();
        let v = mesh.element_vertices(t);
        let k = basis.len();
        let mut m = DMatrix::zeros(k, k);
        let mut r = DVector::zeros(k);
        for (x, w) in quadrature_triangle(v[0], v[1], v[2], 6).iter() {
            let psi = basis.values(x);
            let (_, d) = dm.eval_velocity(mesh, coeffs, t, x).unwrap();
            for a in 0..k {
                r[a] += w * d * psi[a];
                for b in 0..k {
                    m[(a, b)] += w * psi[a] * psi[b];
                }
            }
        }
        let sol = m.lu().solve(&r).unwrap();
        for a in 0..k {
            q[dofs[a]] = sol[a];
        }
    }
    q
}

fn psd(name: &str, s: &CsrMatrix) -> Check {
    let d = to_dense(s);
    let norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if norm == 0.0 {
        return Ok(());
    }
    let asym = (&d - d.transpose())
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if asym > 1e-13 * norm {
        return Err(format!("{name} asymmetric by {asym:e}"));
    }
    let eig = d.symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| {
        (a.min(v), b.max(v.abs()))
    });
    if lo < -1e-12 * hi {
        return Err(format!("{name} min eigenvalue {lo:e} vs max {hi:e}"));
    }
    Ok(())
}

/// S_u and S_p are symmetric positive semidefinite; S_b tested against the
/// elementwise divergence equals the S_p kernel with tau_b.
pub fn stabilizers_psd(
    n: usize,
    pair: ElementPair,
    center: Point,
    radius: f64,
    stab: StabDomain,
    seed: u64,
) -> Check {
    let mesh = BackgroundMesh::structured(n, Rect::unit()).map_err(|e| e.to_string())?;
    let disc = match Discretization::new(
        mesh,
        &circle(center, radius),
        pair,
        Mode::Interface(BoundaryKind::Pressure),
        stab,
    ) {
        Ok(d) => d,
        Err(Error::UnreachableElement { .. }) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let mut params = Params {
        stab,
        ..Params::default()
    };
    params.tau_u = 1.0;
    params.tau_p = 0.7;
    params.tau_b = 0.7;
    let s_u = assemble_s_u(&disc, &params).map_err(|e| e.to_string())?;
    let s_p = assemble_s_p(&disc, &params).map_err(|e| e.to_string())?;
    psd("S_u", &s_u)?;
    psd("S_p", &s_p)?;
    let s_b = assemble_s_b(&disc, &params).map_err(|e| e.to_string())?;
    let off = disc.offsets();
    let u = random_vec(seed, off.n_u);
    let mut q = Vec::with_capacity(off.n_p);
    for side in Side::BOTH {
        let dm = &disc.dofmaps[side.index()];
        let local = &u[off.u[side.index()]..off.u[side.index()] + dm.n_velocity];
        q.extend(project_divergence(&disc.mesh, dm, local));
    }
    let sbu = s_b.matvec(&u);
    let spq = s_p.matvec(&q);
    let lhs: f64 = q.iter().zip(&sbu).map(|(a, b)| a * b).sum();
    let rhs: f64 = q.iter().zip(&spq).map(|(a, b)| a * b).sum();
    if (lhs - rhs).abs() > 1e-9 * (1.0 + rhs.abs()) || rhs < -1e-12 {
        return Err(format!("S_b identity: {lhs:e} vs {rhs:e}"));
    }
    Ok(())
}

/// Rank of the divergence coupling on one element equals the pressure dimension.
pub fn div_surjectivity(vertices: [Point; 3], pair: ElementPair) -> Check {
    let geom = ElementGeometry::from_vertices(vertices).map_err(|e| e.to_string())?;
    let nv = pair.velocity_local_dim();
    let np = pair.pressure_local_dim();
    let mut m = DMatrix::<f64>::zeros(np, nv);
    let rule = quadrature_triangle([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], 6);
    for (xr, w) in rule.iter() {
        let (vals, divs) = ref_basis(pair.velocity, xr);
        let (_, d) = piola_map(&geom, &vals, &divs).map_err(|e| e.to_string())?;
        // Pressures in barycentric coordinates, which are reference coordinates here.
        let psi: Vec<f64> = if np == 1 {
            vec![1.0]
        } else {
            vec![1.0 - xr[0] - xr[1], xr[0], xr[1]]
        };
        for i in 0..np {
            for j in 0..nv {
                m[(i, j)] += w * geom.det.abs() * d[j] * psi[i];
            }
        }
    }
    let sv = m.singular_values();
    let top = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * top).count();
    if rank != np {
        return Err(format!("rank {rank} != {np} for {pair}"));
    }
    Ok(())
}

/// Euler relation, face counts, positivity, area sum and adjacency symmetry.
pub fn euler(n: usize, bbox: Rect) -> Check {
    let mesh = BackgroundMesh::structured(n, bbox).map_err(|e| e.to_string())?;
    let (v, e, t) = (mesh.vertices.len(), mesh.faces.len(), mesh.triangles.len());
    if v as i64 - e as i64 + t as i64 + 1 != 2 {
        return Err(format!("Euler fails: V={v} E={e} T={t}"));
    }
    if t != 2 * n * n || mesh.boundary_face_count() != 4 * n {
        return Err(format!(
            "counts: T={t}, boundary={}",
            mesh.boundary_face_count()
        ));
    }
    let mut total = 0.0;
    for k in 0..t {
        let g = mesh.element_geometry(k).map_err(|e| e.to_string())?;
        let [a, b, c] = mesh.element_vertices(k);
        let signed = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        if signed <= 0.0 {
            return Err(format!("element {k} not counterclockwise"));
        }
        total += g.area;
    }
    if (total - bbox.area()).abs() > 1e-12 * bbox.area() {
        return Err(format!("area sum {total} vs {}", bbox.area()));
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        let mut owners = vec![face.elements.0];
        owners.extend(face.elements.1);
        for &o in &owners {
            if !mesh.element_faces[o].contains(&f) {
                return Err(format!("face {f} not listed by element {o}"));
            }
        }
    }
    Ok(())
}

/// Each element's side parts (and their quadrature weights) partition its area.
pub fn partition_of_measure(n: usize, center: Point, radius: f64) -> Check {
    let (mesh, act) = active(n, center, radius)?;
    let mut total = 0.0;
    for (t, cut) in act.cuts.iter().enumerate() {
        let area = mesh.element_geometry(t).unwrap().area;
        let mut sum = 0.0;
        for side in Side::BOTH {
            let a = cut.part_area(side);
            let w = cut.volume_rule(side, 4).measure();
            if (a - w).abs() > 1e-12 * area {
                return Err(format!("element {t}: rule measure {w} vs part {a}"));
            }
            if !(0.0..=1.0).contains(&act.fraction[side.index()][t]) {
                return Err(format!("fraction out of range on {t}"));
            }
            sum += a;
        }
        if (sum - area).abs() > 1e-12 * area {
            return Err(format!("element {t}: parts {sum} vs area {area}"));
        }
        total += sum;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(format!("total measure {total}"));
    }
    Ok(())
}

/// Unique roots, large roots, disjoint covering members, same-root interior faces,
/// face-connected macros. An unreachable-element error must be confirmed by search.
pub fn macro_partition(n: usize, center: Point, radius: f64, delta: f64) -> Check {
    let (mesh, act) = active(n, center, radius)?;
    let part = match build_macro_partition(&mesh, &act, delta, delta) {
        Ok(p) => p,
        Err(Error::UnreachableElement { side, element }) => {
            return if reaches_large(&mesh, &act, side, element, delta) {
                Err(format!(
                    "element {element} reported unreachable but has a path"
                ))
            } else {
                Ok(())
            };
        }
        Err(e) => return Err(e.to_string()),
    };
    for side in Side::BOTH {
        let s = side.index();
        let m = part.side(side);
        let mut seen = BTreeSet::new();
        for (&root, members) in &m.members {
            if !classify_large(act.fraction[s][root], delta) {
                return Err(format!("root {root} is small"));
            }
            for &t in members {
                if !seen.insert(t) || m.root[t] != Some(root) {
                    return Err(format!("element {t} in two macros or wrong root"));
                }
            }
            if !connected(&mesh, members) {
                return Err(format!("macro {root} not face-connected"));
            }
        }
        let expected: BTreeSet<usize> = act.elements[s].iter().copied().collect();
        if seen != expected {
            return Err("members do not cover the active mesh".into());
        }
        for (&root, faces) in &m.interior_faces {
            for &f in faces {
                let face = &mesh.faces[f];
                let Some(t2) = face.elements.1 else {
                    return Err(format!("boundary face {f}"));
                };
                if m.root[face.elements.0] != Some(root) || m.root[t2] != Some(root) {
                    return Err(format!("face {f} joins different macros"));
                }
            }
        }
    }
    Ok(())
}

fn connected(mesh: &BackgroundMesh, members: &[usize]) -> bool {
    let set: BTreeSet<usize> = members.iter().copied().collect();
    let mut seen = BTreeSet::from([members[0]]);
    let mut queue = VecDeque::from([members[0]]);
    while let Some(t) = queue.pop_front() {
        for k in 0..3 {
            if let Some(nb) = mesh.neighbor(t, k) {
                if set.contains(&nb) && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
    }
    seen.len() == set.len()
}

fn reaches_large(
    mesh: &BackgroundMesh,
    act: &ActiveMeshes,
    side: Side,
    start: usize,
    delta: f64,
) -> bool {
    let s = side.index();
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(t) = queue.pop_front() {
        if classify_large(act.fraction[s][t], delta) {
            return true;
        }
        for k in 0..3 {
            if let Some(nb) = mesh.neighbor(t, k) {
                if act.contains[s][nb] && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
    }
    false
}

/// Total stabilized face count does not decrease when delta grows.
pub fn stabilized_face_monotonicity(
    n: usize,
    center: Point,
    radius: f64,
    d1: f64,
    d2: f64,
) -> Check {
    let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
    let (mesh, act) = active(n, center, radius)?;
    let count = |d: f64| -> Option<usize> {
        build_macro_partition(&mesh, &act, d, d).ok().map(|p| {
            Side::BOTH
                .iter()
                .map(|&s| p.side(s).stabilized_faces().len())
                .sum()
        })
    };
    match (count(lo), count(hi)) {
        (Some(a), Some(b)) if a > b => Err(format!("delta {lo}: {a} faces, delta {hi}: {b} faces")),
        _ => Ok(()),
    }
}

/// `eoc` and `fit_slope` recover the exponent of `c h^r` on dyadic levels.
pub fn eoc_recovery(rate: f64, c: f64, h0: f64, levels: usize) -> Check {
    let hs: Vec<f64> = (0..levels).map(|k| h0 / 2f64.powi(k as i32)).collect();
    let es: Vec<f64> = hs.iter().map(|h| c * h.powf(rate)).collect();
    let orders = eoc(&es, &hs).map_err(|e| e.to_string())?;
    for o in orders {
        let o = o.ok_or("unexpected saturation")?;
        if (o - rate).abs() > 1e-9 * (1.0 + rate.abs()) {
            return Err(format!("eoc {o} vs {rate}"));
        }
    }
    let s = fit_slope(&hs, &es).map_err(|e| e.to_string())?;
    if (s - rate).abs() > 1e-9 * (1.0 + rate.abs()) {
        return Err(format!("slope {s} vs {rate}"));
    }
    Ok(())
}

/// kappa(alpha C) = kappa(C) for a random well-posed matrix.
pub fn kappa_scale_invariance(dim: usize, seed: u64, alpha: f64) -> Check {
    let vals = random_vec(seed, dim * dim);
    let mut t = Vec::new();
    for i in 0..dim {
        for j in 0..dim {
            let v = vals[i * dim + j] + if i == j { dim as f64 } else { 0.0 };
            t.push((i, j, v));
        }
    }
    let c = CsrMatrix::from_triplets(dim, dim, &t);
    let k1 = spectral_condition_number(&c, DENSE_LIMIT).map_err(|e| e.to_string())?;
    let k2 = spectral_condition_number(&c.scale(alpha), DENSE_LIMIT).map_err(|e| e.to_string())?;
    if (k1 - k2).abs() > 1e-10 * k1 {
        return Err(format!("kappa {k1} vs scaled {k2}"));
    }
    Ok(())
}

/// Random parameters for one property case, used by the seeded acceptance sweep.
pub struct CaseRng(pub ChaCha8Rng);

impl CaseRng {
    pub fn new(seed: u64) -> Self {
        CaseRng(ChaCha8Rng::seed_from_u64(seed))
    }
    pub fn center(&mut self) -> Point {
        [self.0.gen_range(0.4..0.6), self.0.gen_range(0.4..0.6)]
    }
    pub fn radius(&mut self) -> f64 {
        self.0.gen_range(0.2..0.33)
    }
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        self.0.gen_range(lo..hi)
    }
    pub fn real(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.gen_range(lo..hi)
    }
    pub fn seed(&mut self) -> u64 {
        self.0.gen()
    }
    pub fn triangle(&mut self) -> [Point; 3] {
        loop {
            let v: Vec<Point> = (0..3)
                .map(|_| [self.real(-1.0, 1.0), self.real(-1.0, 1.0)])
                .collect();
            let area = 0.5
                * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
                    - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
            if area.abs() > 0.05 {
                return [v[0], v[1], v[2]];
            }
        }
    }
    pub fn rect(&mut self) -> Rect {
        let (x, y) = (self.real(-2.0, 2.0), self.real(-2.0, 2.0));
        Rect::new([x, y], [x + self.real(0.1, 3.0), y + self.real(0.1, 3.0)])
    }
}

/// Element ids of each side for brute-force classification oracles.
pub fn brute_force_sides(mesh: &BackgroundMesh, ls: &LevelSet) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::from([("cut", 0), ("one", 0), ("two", 0)]);
    for t in 0..mesh.num_elements() {
        let v = mesh.element_vertices(t);
        let h = mesh.element_geometry(t).unwrap().diameter;
        let phi: Vec<f64> = v
            .iter()
            .map(|&x| {
                let p = ls.value(x);
                if p.abs() < 1e-12 * h {
                    1e-12 * h
                } else {
                    p
                }
            })
            .collect();
        let pos = phi.iter().filter(|&&p| p > 0.0).count();
        match pos {
            3 => *counts.get_mut("one").unwrap() += 1,
            0 => *counts.get_mut("two").unwrap() += 1,
            _ => {
                *counts.get_mut("cut").unwrap() += 1;
                *counts.get_mut("one").unwrap() += 1;
                *counts.get_mut("two").unwrap() += 1;
            }
        }
    }
    counts
}
