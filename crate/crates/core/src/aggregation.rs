//! Macro-element partition of the active meshes.
//!
//! Every element with `|T cap Omega_i| >= delta_i |T|` roots a macro-element. Small
//! elements are attached breadth-first: in each round, every unassigned small
//! element that shares an interior face with an element assigned in an earlier
//! round joins the macro of that neighbour, preferring the neighbour with the
//! largest intersection fraction and then the lowest element index.

use std::collections::BTreeMap;

use crate::geometry::{ActiveMeshes, Side};
use crate::mesh::BackgroundMesh;
use crate::{Error, Result};

pub fn classify_large(fraction: f64, delta: f64) -> bool {
    fraction >= delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideMacros {
    pub delta: f64,
    /// Root element for every background element in the active mesh.
    pub root: Vec<Option<usize>>,
    pub members: BTreeMap<usize, Vec<usize>>,
    /// Faces joining two elements of the same macro, keyed by root.
    pub interior_faces: BTreeMap<usize, Vec<usize>>,
}

impl SideMacros {
    pub fn small_count(&self) -> usize {
        self.root
            .iter()
            .enumerate()
            .filter(|(t, r)| matches!(r, Some(r) if r != t))
            .count()
    }

    /// All stabilized faces, ascending.
    pub fn stabilized_faces(&self) -> Vec<usize> {
        let mut faces: Vec<usize> = self.interior_faces.values().flatten().copied().collect();
        faces.sort_unstable();
        faces
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroPartition {
    pub sides: [SideMacros; 2],
}

impl MacroPartition {
    pub fn side(&self, side: Side) -> &SideMacros {
        &self.sides[side.index()]
    }
}

pub fn build_macro_partition(
    mesh: &BackgroundMesh,
    active: &ActiveMeshes,
    delta_1: f64,
    delta_2: f64,
) -> Result<MacroPartition> {
    Ok(MacroPartition {
        sides: [
            build_side(mesh, active, Side::One, delta_1)?,
            build_side(mesh, active, Side::Two, delta_2)?,
        ],
    })
}

fn build_side(
    mesh: &BackgroundMesh,
    active: &ActiveMeshes,
    side: Side,
    delta: f64,
) -> Result<SideMacros> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let i = side.index();
    let fraction = &active.fraction[i];
    let mut root: Vec<Option<usize>> = vec![None; mesh.num_elements()];
    for &t in &active.elements[i] {
        if classify_large(fraction[t], delta) {
            root[t] = Some(t);
        }
    }

    loop {
        let mut joins = Vec::new();
        for &t in &active.elements[i] {
            if root[t].is_some() {
                continue;
            }
            let mut best: Option<usize> = None;
            for k in 0..3 {
                let Some(nb) = mesh.neighbor(t, k) else {
                    continue;
                };
                if !active.contains(side, nb) || root[nb].is_none() {
                    continue;
                }
                best = match best {
                    Some(b)
                        if fraction[b] > fraction[nb]
                            || (fraction[b] == fraction[nb] && b < nb) =>
                    {
                        Some(b)
                    }
                    _ => Some(nb),
                };
            }
            if let Some(b) = best {
                joins.push((t, root[b]));
            }
        }
        if joins.is_empty() {
            break;
        }
        for (t, r) in joins {
            root[t] = r;
        }
    }

    if let Some(&t) = active.elements[i].iter().find(|&&t| root[t].is_none()) {
        return Err(Error::UnreachableElement { side, element: t });
    }

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &t in &active.elements[i] {
        members
            .entry(root[t].expect("assigned"))
            .or_default()
            .push(t);
    }
    let mut interior_faces: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        let (a, Some(b)) = face.elements else {
            continue;
        };
        if let (Some(ra), Some(rb)) = (root[a], root[b]) {
            if ra == rb {
                interior_faces.entry(ra).or_default().push(f);
            }
        }
    }
    Ok(SideMacros {
        delta,
        root,
        members,
        interior_faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Classification, CutGeometry, LevelSet};
    use crate::mesh::Rect;

    #[test]
    fn large_classification_is_inclusive() {
        assert!(classify_large(1.0, 0.25));
        assert!(!classify_large(0.1, 0.25));
        assert!(classify_large(0.25, 0.25));
    }

    fn two_element_active(fractions: [f64; 2]) -> (BackgroundMesh, ActiveMeshes) {
        let mesh = BackgroundMesh::structured(1, Rect::unit()).unwrap();
        let cuts = (0..2)
            .map(|t| CutGeometry {
                element: t,
                classification: Classification::Cut,
                parts: [mesh.element_vertices(t).to_vec(), vec![]],
                interface: None,
            })
            .collect();
        let diag = mesh.faces.iter().position(|f| !f.is_boundary()).unwrap();
        let active = ActiveMeshes {
            level_set: LevelSet::Plane {
                normal: [1.0, 0.0],
                offset: 0.0,
            },
            cuts,
            elements: [vec![0, 1], vec![0, 1]],
            contains: [vec![true, true], vec![true, true]],
            cut: vec![0, 1],
            faces: [vec![diag], vec![diag]],
            fraction: [fractions.to_vec(), fractions.to_vec()],
        };
        (mesh, active)
    }

    #[test]
    fn small_element_joins_large_neighbour() {
        let (mesh, active) = two_element_active([1.0, 0.1]);
        let p = build_macro_partition(&mesh, &active, 0.25, 0.25).unwrap();
        let s = p.side(Side::One);
        assert_eq!(s.members.len(), 1);
        assert_eq!(s.members[&0], vec![0, 1]);
        assert_eq!(s.stabilized_faces().len(), 1);
        assert_eq!(s.small_count(), 1);
    }

    #[test]
    fn tiny_delta_gives_singletons() {
        let mesh = BackgroundMesh::structured(8, Rect::unit()).unwrap();
        let ls = LevelSet::circle([0.513, 0.507], 0.25).unwrap();
        let active = ActiveMeshes::build(&mesh, &ls).unwrap();
        let p = build_macro_partition(&mesh, &active, 1e-300, 1e-300).unwrap();
        for side in Side::BOTH {
            assert!(p.side(side).members.values().all(|m| m.len() == 1));
            assert!(p.side(side).stabilized_faces().is_empty());
        }
    }

    #[test]
    fn unreachable_small_elements() {
        let (mesh, active) = two_element_active([0.1, 0.1]);
        let err = build_macro_partition(&mesh, &active, 0.25, 0.25).unwrap_err();
        assert!(matches!(err, Error::UnreachableElement { element: 0, .. }));
    }

    #[test]
    fn delta_must_be_in_unit_interval() {
        let (mesh, active) = two_element_active([1.0, 1.0]);
        assert!(build_macro_partition(&mesh, &active, 0.0, 0.5).is_err());
        assert!(build_macro_partition(&mesh, &active, 0.5, 1.5).is_err());
    }
}
