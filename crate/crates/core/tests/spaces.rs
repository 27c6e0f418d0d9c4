//! Finite element space examples: counts, duality, Piola mapping, interpolation and scaling.

use cutfem_darcy::geometry::{ActiveMeshes, LevelSet, Side};
use cutfem_darcy::mesh::{BackgroundMesh, ElementGeometry, Rect};
use cutfem_darcy::quadrature::{quadrature_segment, quadrature_triangle};
use cutfem_darcy::spaces::{interpolate, piola_map, ref_basis, DofMap, ElementPair};
use cutfem_darcy::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn full(n: usize, pair: ElementPair) -> (BackgroundMesh, DofMap) {
    let mesh = BackgroundMesh::structured(n, Rect::unit()).unwrap();
    let all: Vec<usize> = (0..mesh.num_elements()).collect();
    let dm = DofMap::from_elements(&mesh, &all, Side::One, pair);
    (mesh, dm)
}

fn random_point(t: usize, mesh: &BackgroundMesh, rng: &mut ChaCha8Rng) -> Point {
    let v = mesh.element_vertices(t);
    let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
    if a + b > 1.0 {
        (a, b) = (1.0 - a, 1.0 - b);
    }
    [
        v[0][0] + a * (v[1][0] - v[0][0]) + b * (v[2][0] - v[0][0]),
        v[0][1] + a * (v[1][1] - v[0][1]) + b * (v[2][1] - v[0][1]),
    ]
}

#[test]
fn dof_counts() {
    assert_eq!(full(1, ElementPair::RT0_P0).1.n_velocity, 5);
    let (_, dm) = full(2, ElementPair::RT1_P1);
    assert_eq!((dm.n_velocity, dm.n_pressure), (48, 24));
    let (_, dm) = full(2, ElementPair::BDM1_P0);
    assert_eq!((dm.n_velocity, dm.n_pressure), (32, 8));
    let mesh = BackgroundMesh::structured(10, Rect::unit()).unwrap();
    let act = ActiveMeshes::build(&mesh, &LevelSet::circle([0.5, 0.5], 0.3).unwrap()).unwrap();
    let dm = DofMap::build(&mesh, &act, Side::Two, ElementPair::RT1_P1);
    assert_eq!(
        dm.n_velocity,
        2 * dm.faces.len() + 2 * act.elements[1].len()
    );
    assert_eq!(dm.n_pressure, 3 * act.elements[1].len());
}

/// Interpolating each basis function of a lone element returns the matching unit vector.
#[test]
fn physical_dof_functionals_are_dual_to_basis() {
    let mesh = BackgroundMesh::structured(3, Rect::new([0.2, -0.1], [1.4, 0.5])).unwrap();
    for pair in ElementPair::ALL {
        for t in [0, 7, 17] {
            let dm = DofMap::from_elements(&mesh, &[t], Side::Two, pair);
            let basis = dm.velocity_basis(&mesh, t).unwrap();
            let dofs = dm.velocity_dofs_of(t).unwrap().to_vec();
            for (k, &g) in dofs.iter().enumerate() {
                let c = interpolate(&mesh, &dm, |x| basis.values(x)[k]);
                for (i, &ci) in c.iter().enumerate() {
                    let expected = if i == g { 1.0 } else { 0.0 };
                    assert!((ci - expected).abs() < 1e-12, "{pair} t={t} k={k}: {ci}");
                }
            }
        }
    }
}

#[test]
fn piola_preserves_face_flux() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let reference = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    for pair in ElementPair::ALL {
        let v: [Point; 3] = [
            [0.1, 0.2],
            [rng.gen_range(0.8..1.2), rng.gen_range(-0.1..0.3)],
            [rng.gen_range(-0.2..0.4), 1.0],
        ];
        let geom = ElementGeometry::from_vertices(v).unwrap();
        for e in 0..3 {
            let (a, b) = (e, (e + 1) % 3);
            let flux = |p: [Point; 3], map: &dyn Fn(Point) -> Vec<Point>| -> Vec<f64> {
                let (pa, pb) = (p[a], p[b]);
                let t = [pb[0] - pa[0], pb[1] - pa[1]];
                let n = [t[1], -t[0]];
                let rule = quadrature_segment(pa, pb, 6);
                let len = t[0].hypot(t[1]);
                let mut out = vec![0.0; pair.velocity_local_dim()];
                for (x, w) in rule.iter() {
                    for (o, val) in out.iter_mut().zip(map(x)) {
                        *o += w * (val[0] * n[0] + val[1] * n[1]) / len;
                    }
                }
                out
            };
            let ref_flux = flux(reference, &|x| ref_basis(pair.velocity, x).0);
            let phys_flux = flux(v, &|x| {
                let xr = geom.to_reference(x);
                let (vals, divs) = ref_basis(pair.velocity, xr);
                piola_map(&geom, &vals, &divs).unwrap().0
            });
            for (r, p) in ref_flux.iter().zip(&phys_flux) {
                assert!(
                    (r - p * geom.det.signum()).abs() < 1e-12,
                    "{pair} edge {e}: {r} vs {p}"
                );
            }
        }
    }
}

#[test]
fn linear_fields_are_reproduced() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for pair in ElementPair::ALL {
        let (mesh, dm) = full(4, pair);
        let field = |x: Point| [x[0], x[1]];
        let c = interpolate(&mesh, &dm, field);
        for _ in 0..200 {
            let t = rng.gen_range(0..mesh.num_elements());
            let x = random_point(t, &mesh, &mut rng);
            let (u, div) = dm.eval_velocity(&mesh, &c, t, x).unwrap();
            assert!(
                (u[0] - x[0]).abs() < 1e-12 && (u[1] - x[1]).abs() < 1e-12,
                "{pair}"
            );
            assert!((div - 2.0).abs() < 1e-11);
        }
    }
}

#[test]
fn solenoidal_fields_interpolate_to_divergence_free() {
    // curl of psi = x^3 y^2 + x y^4
    let field = |x: Point| {
        let (a, b) = (x[0], x[1]);
        [
            2.0 * a.powi(3) * b + 4.0 * a * b.powi(3),
            -(3.0 * a * a * b * b + b.powi(4)),
        ]
    };
    for pair in ElementPair::ALL {
        let (mesh, dm) = full(5, pair);
        let c = interpolate(&mesh, &dm, field);
        for t in 0..mesh.num_elements() {
            let v = mesh.element_vertices(t);
            for (x, _) in quadrature_triangle(v[0], v[1], v[2], 4).iter() {
                let (_, div) = dm.eval_velocity(&mesh, &c, t, x).unwrap();
                assert!(div.abs() < 1e-11, "{pair} t={t}: {div}");
            }
        }
    }
}

#[test]
fn mass_matrix_scales_with_h_squared() {
    for pair in ElementPair::ALL {
        let mass = |n: usize| -> Vec<f64> {
            let (mesh, dm) = full(n, pair);
            let basis = dm.velocity_basis(&mesh, 0).unwrap();
            let v = mesh.element_vertices(0);
            let rule = quadrature_triangle(v[0], v[1], v[2], 6);
            let k = basis.len();
            let mut m = vec![0.0; k * k];
            for (x, w) in rule.iter() {
                let phi = basis.values(x);
                for i in 0..k {
                    for j in 0..k {
                        m[i * k + j] += w * (phi[i][0] * phi[j][0] + phi[i][1] * phi[j][1]);
                    }
                }
            }
            m
        };
        for n in [4, 8, 16] {
            let (coarse, fine) = (mass(n), mass(2 * n));
            let scale = coarse.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (c, f) in coarse.iter().zip(&fine) {
                if c.abs() > 1e-8 * scale {
                    assert!((c / f / 4.0 - 1.0).abs() < 0.05, "{pair} n={n}: {c} / {f}");
                }
            }
        }
    }
}
