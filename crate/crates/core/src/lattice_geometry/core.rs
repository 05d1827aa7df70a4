//! C-cores: vertices whose distance to the region boundary beats `C log` of
//! their distance to a base vertex.

use super::gauge::{regularize_gauge, shifted_half_gauge, GaugeFunction};
use super::graph::{l1_distance, LatticeGraph, VertexId, UNREACHED};
use super::region::RegionSpec;
use crate::error::{Error, Result};

/// Core membership test. The log term is `ln(max(d_base, 1))`, so vertices
/// at distance 0 or 1 from the base only need positive boundary distance.
pub fn core_predicate(d_boundary: f64, d_base: u64, c: f64) -> bool {
    let threshold = if d_base <= 1 { 0.0 } else { c * (d_base as f64).ln() };
    d_boundary > threshold
}

/// Membership mask of the C-core of `a` relative to the base point `v0`.
///
/// Boundary distance is measured by BFS inside `a` from its region-boundary
/// vertices; base distance is the `Z^d` graph metric (L1).
pub fn c_core_mask(a: &LatticeGraph, c: f64, v0: &[i32]) -> Result<Vec<bool>> {
    if !(c >= 0.0) {
        return Err(Error::arg(format!("core constant must be nonnegative, got {c}")));
    }
    if v0.len() != a.dim() || a.vertex_at(v0).is_none() {
        return Err(Error::arg(format!("base vertex {v0:?} is not in the region")));
    }
    let boundary: Vec<VertexId> = a.region_boundary().collect();
    let dist = a.bfs(&boundary, |_| true, None);
    Ok((0..a.num_vertices())
        .map(|v| {
            let db = if dist[v] == UNREACHED { f64::INFINITY } else { f64::from(dist[v]) };
            core_predicate(db, l1_distance(a.coord(v), v0), c)
        })
        .collect())
}

pub fn c_core(a: &LatticeGraph, c: f64, v0: &[i32]) -> Result<LatticeGraph> {
    Ok(a.induced(&c_core_mask(a, c, v0)?))
}

/// Outcome of checking that the shifted sub-wedge of the half gauge sits in
/// the C-core of the wedge, inside a finite truncation box.
#[derive(Debug, Clone)]
pub struct SubwedgeContainment {
    pub x0: usize,
    /// Sub-wedge vertices checked (those inside the box).
    pub checked: usize,
    /// Sub-wedge vertices found outside the core.
    pub violations: Vec<Vec<i32>>,
}

/// Regularize `h`, build the wedge in `[-m, m]^3`, extract its C-core with
/// base at the origin and test every vertex of `V_g + (x0, 0, 0)`.
pub fn check_subwedge_in_core(h: &GaugeFunction, c: f64, m: i32) -> Result<SubwedgeContainment> {
    let f = regularize_gauge(h);
    let (x0, g) = shifted_half_gauge(&f, c)?;
    let wedge = LatticeGraph::build(&RegionSpec::wedge(f), m)?;
    let mask = c_core_mask(&wedge, c, &[0, 0, 0])?;
    let sub = RegionSpec::subwedge(g);
    let mut checked = 0;
    let mut violations = Vec::new();
    let x0 = x0 as i32;
    for x in x0..=m {
        let Some(hg) = sub_gauge_value(&sub, x - x0) else { break };
        let zmax = hg.floor() as i32;
        let ymax = (x - x0).min(m);
        for y in -ymax..=ymax {
            for z in -zmax.min(m)..=zmax.min(m) {
                let p = [x, y, z];
                checked += 1;
                match wedge.vertex_at(&p) {
                    Some(v) if mask[v] => {}
                    _ => violations.push(p.to_vec()),
                }
            }
        }
    }
    Ok(SubwedgeContainment { x0: x0 as usize, checked, violations })
}

fn sub_gauge_value(sub: &RegionSpec, x: i32) -> Option<f64> {
    match &sub.shape {
        super::region::Shape::Subwedge(g) => g.get(x as usize),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_constant_gives_interior() {
        let a = LatticeGraph::lattice_box(2, 4).unwrap();
        let core = c_core(&a, 0.0, &[0, 0]).unwrap();
        assert_eq!(core.num_vertices(), 49);
        for v in 0..core.num_vertices() {
            assert!(core.coord(v).iter().all(|c| c.abs() < 4));
        }
    }

    #[test]
    fn predicate_direct() {
        assert!(core_predicate(5.0, 2, 1.0));
        assert!(!core_predicate(0.0, 1, 1.0));
        assert!(core_predicate(1.0, 0, f64::INFINITY));
        assert!(!core_predicate(1e9, 2, f64::INFINITY));
    }

    #[test]
    fn box_vertex_in_core() {
        // v = (1,1) in [-8,8]^2: boundary distance 7, base distance 2
        let a = LatticeGraph::lattice_box(2, 8).unwrap();
        let mask = c_core_mask(&a, 1.0, &[0, 0]).unwrap();
        assert!(mask[a.vertex_at(&[1, 1]).unwrap()]);
        // (7, 1): boundary distance 1, base distance 8 -> 1 > ln 8 fails
        assert!(!mask[a.vertex_at(&[7, 1]).unwrap()]);
    }

    #[test]
    fn infinite_constant_keeps_unit_ball() {
        let a = LatticeGraph::lattice_box(2, 5).unwrap();
        let mask = c_core_mask(&a, f64::INFINITY, &[0, 0]).unwrap();
        let kept: Vec<_> = (0..a.num_vertices()).filter(|&v| mask[v]).collect();
        assert_eq!(kept.len(), 5);
        for v in kept {
            assert!(a.l1(v, a.vertex_at(&[0, 0]).unwrap()) <= 1);
        }
    }

    #[test]
    fn base_outside_is_error() {
        let a = LatticeGraph::lattice_box(2, 2).unwrap();
        assert!(matches!(c_core(&a, 1.0, &[5, 5]), Err(Error::Argument(_))));
    }

    #[test]
    fn core_monotone_in_constant() {
        let h = GaugeFunction::log_power(2.0, 40).unwrap();
        let w = LatticeGraph::build(&RegionSpec::wedge(h), 20).unwrap();
        let mut prev = c_core_mask(&w, 0.0, &[0, 0, 0]).unwrap();
        for c in [0.5, 1.0, 2.0, 4.0] {
            let next = c_core_mask(&w, c, &[0, 0, 0]).unwrap();
            assert!(next.iter().zip(&prev).all(|(n, p)| !n || *p));
            prev = next;
        }
    }
}
