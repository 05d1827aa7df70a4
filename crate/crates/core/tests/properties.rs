use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wedgelab::bridging_transport::{bridge_sample, loop_erase, Strategy as Bridging};
use wedgelab::chemical_distance::{chemical_dist, shortest_bridge};
use wedgelab::cluster_analysis::{gaps, giant_cluster, label_clusters, strongly_open_edges, GiantCluster};
use wedgelab::flows_energy::{
    energy, flow_to_path_measure, path_measure_to_flow, psi, sample_outward_paths, EnergyGauge, PathMeasure,
};
use wedgelab::lattice_geometry::{
    c_core_mask, hm_partial_sum, lyons_partial_sum, regularize_gauge, GaugeFunction, LatticeGraph, RegionSpec,
    UNREACHED,
};
use wedgelab::percolation::{restrict, sample_bond};
use wedgelab::renormalization::block_event;
use wedgelab::resistance_solver::effective_resistance;

fn square(m: i32) -> Arc<LatticeGraph> {
    Arc::new(LatticeGraph::lattice_box(2, m).unwrap())
}

fn monotone_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..3.0, 1..40).prop_map(|steps| {
        let mut acc = 0.5;
        steps
            .into_iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn core_shrinks_as_constant_grows(r in 1.0f64..3.0, m in 3i32..8, c1 in 0.0f64..2.0, dc in 0.0f64..2.0) {
        let h = GaugeFunction::log_power(r, 2 * m as usize).unwrap();
        let wedge = LatticeGraph::build(&RegionSpec::wedge(h), m).unwrap();
        let small = c_core_mask(&wedge, c1, &[0, 0, 0]).unwrap();
        let large = c_core_mask(&wedge, c1 + dc, &[0, 0, 0]).unwrap();
        prop_assert!(large.iter().zip(&small).all(|(&l, &s)| !l || s));
    }

    #[test]
    fn regularization_is_lipschitz_minorant(values in monotone_values()) {
        let h = GaugeFunction::custom(values).unwrap();
        let f = regularize_gauge(&h);
        prop_assert!(f.values().iter().zip(h.values()).all(|(a, b)| a <= b));
        prop_assert!(f.values().windows(2).all(|w| w[1] - w[0] <= 1.0 + 1e-12 && w[1] >= w[0]));
        let again = regularize_gauge(&f);
        prop_assert_eq!(again.values(), f.values());
    }

    #[test]
    fn criteria_sums_ordered(values in monotone_values()) {
        let h = GaugeFunction::custom(values.iter().map(|v| v + 1.0).collect()).unwrap();
        let n = h.j_max();
        prop_assume!(n >= 1);
        let mut prev = 0.0;
        for j in 1..=n {
            let l = lyons_partial_sum(&h, j).unwrap();
            prop_assert!(l >= prev);
            prop_assert!(hm_partial_sum(&h, j).unwrap() >= l);
            prev = l;
        }
    }

    #[test]
    fn wedge_vertices_satisfy_inequalities(values in monotone_values(), m in 2i32..9) {
        let mut v = values;
        v.resize(2 * m as usize + 1, *v.last().unwrap());
        let h = GaugeFunction::custom(v).unwrap();
        let wedge = LatticeGraph::build(&RegionSpec::wedge(h.clone()), m).unwrap();
        for u in 0..wedge.num_vertices() {
            let c = wedge.coord(u);
            prop_assert!(c[0] >= 0);
            prop_assert!(f64::from(c[2].abs()) <= h.values()[c[0] as usize]);
        }
    }

    #[test]
    fn coupling_is_monotone(p1 in 0.0f64..1.0, dp in 0.0f64..1.0, seed in any::<u64>()) {
        let g = square(6);
        let p2 = (p1 + dp).min(1.0);
        let a = sample_bond(&g, p1, seed).unwrap();
        let b = sample_bond(&g, p2, seed).unwrap();
        prop_assert!(a.is_subset_of(&b));
    }

    #[test]
    fn restriction_equals_direct_sampling(m in 2i32..6, extra in 1i32..4, p in 0.0f64..1.0, seed in any::<u64>()) {
        let small = square(m);
        let big = square(m + extra);
        let direct = sample_bond(&small, p, seed).unwrap();
        let restricted = restrict(&sample_bond(&big, p, seed).unwrap(), &small).unwrap();
        prop_assert_eq!(direct.bits(), restricted.bits());
    }

    #[test]
    fn giant_and_gaps_partition_vertices(p in 0.55f64..1.0, seed in any::<u64>()) {
        let g = square(8);
        let c = sample_bond(&g, p, seed).unwrap();
        let lab = label_clusters(&c);
        let Some(giant) = giant_cluster(&lab, &g) else { return Ok(()) };
        let set = gaps(&c, &lab, Some(giant));
        for v in 0..g.num_vertices() {
            prop_assert_ne!(lab.label(v) == giant, set.gap_of(v).is_some());
        }
        prop_assert_eq!(set.gaps.iter().map(|x| x.vertices.len()).sum::<usize>() + lab.size(giant), g.num_vertices());
        prop_assert!(set.gaps.iter().all(|x| !x.giant_neighbors.is_empty()));
    }

    #[test]
    fn strong_openness_nests(p in 0.5f64..1.0, seed in any::<u64>(), k in 0u32..4) {
        let c = sample_bond(&square(6), p, seed).unwrap();
        let a = strongly_open_edges(&c, k);
        let b = strongly_open_edges(&c, k + 1);
        prop_assert!(b.iter().zip(a.iter()).all(|(x, y)| !*x || *y));
    }

    #[test]
    fn gaps_coarsen_with_p(p1 in 0.75f64..1.0, dp in 0.0f64..0.25, seed in any::<u64>()) {
        let g = square(8);
        let c1 = sample_bond(&g, p1, seed).unwrap();
        let c2 = sample_bond(&g, (p1 + dp).min(1.0), seed).unwrap();
        let (Some(g1), Some(g2)) = (GiantCluster::find(&c1), GiantCluster::find(&c2)) else { return Ok(()) };
        prop_assert!((0..g.num_vertices()).all(|v| !g1.contains(v) || g2.contains(v)));
        let s1 = gaps(&c1, &g1.labeling, Some(g1.id));
        let s2 = gaps(&c2, &g2.labeling, Some(g2.id));
        for gap in &s2.gaps {
            let host = s1.gap_of(gap.vertices[0]);
            prop_assert!(host.is_some());
            prop_assert!(gap.vertices.iter().all(|&v| s1.gap_of(v) == host));
        }
    }

    #[test]
    fn chemical_distance_is_a_metric_above_l1(p in 0.5f64..1.0, seed in any::<u64>(), a in 0usize..81, b in 0usize..81, c in 0usize..81) {
        let g = square(4);
        let cfg = sample_bond(&g, p, seed).unwrap();
        let d = |x, y| chemical_dist(&cfg, x, y).length;
        if let Some(dab) = d(a, b) {
            prop_assert!(u64::from(dab) >= g.l1(a, b));
            prop_assert_eq!(d(b, a), Some(dab));
            if let Some(dbc) = d(b, c) {
                prop_assert!(d(a, c).unwrap() <= dab + dbc);
            }
        } else {
            prop_assert_eq!(d(b, a), None);
        }
        let open = wedgelab::percolation::BondConfig::all_open(Arc::clone(&g));
        prop_assert_eq!(chemical_dist(&open, a, b).length.map(u64::from), Some(g.l1(a, b)));
    }

    #[test]
    fn bridges_are_shortest_open_paths(p in 0.6f64..1.0, seed in any::<u64>(), i in 0usize..1000, j in 0usize..1000) {
        let g = square(5);
        let cfg = sample_bond(&g, p, seed).unwrap();
        let Some(giant) = GiantCluster::find(&cfg) else { return Ok(()) };
        let verts = giant.vertices();
        let (a, b) = (verts[i % verts.len()], verts[j % verts.len()]);
        let r = shortest_bridge(&cfg, &giant, a, b).unwrap();
        let path = r.path.unwrap();
        let oracle = g.bfs(&[a], |e| cfg.is_open(e), None)[b];
        prop_assert_eq!(r.length, Some(oracle));
        prop_assert_eq!(path.len() as u32 - 1, oracle);
        prop_assert_eq!((path[0], *path.last().unwrap()), (a, b));
        prop_assert!(path.windows(2).all(|w| g.edge_between(w[0], w[1]).is_some_and(|e| cfg.is_open(e))));
    }

    #[test]
    fn path_measure_flow_round_trip(seed in any::<u64>(), count in 1usize..15) {
        let g = square(5);
        let v0 = g.vertex_at(&[0, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths = sample_outward_paths(&g, v0, count, usize::MAX, &mut rng);
        let weights: Vec<f64> = (0..count).map(|i| 1.0 + (seed.rotate_left(i as u32) % 7) as f64).collect();
        let mu = PathMeasure::normalized(Arc::clone(&g), v0, paths, weights).unwrap();
        let f = path_measure_to_flow(&mu);
        prop_assert!(f.conservation_error() <= 1e-12);
        let d = flow_to_path_measure(&f, 1e-9).unwrap();
        let back = path_measure_to_flow(&d.measure);
        for e in 0..g.num_edges() {
            prop_assert!((back.value(e) - d.acyclic.value(e)).abs() <= 1e-9);
        }
        prop_assert!((d.measure.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn energy_monotone_in_gauge(seed in any::<u64>(), q in 1.0f64..3.0, dq in 0.0f64..2.0) {
        let g = square(4);
        let v0 = g.vertex_at(&[0, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths = sample_outward_paths(&g, v0, 6, usize::MAX, &mut rng);
        let mu = PathMeasure::normalized(Arc::clone(&g), v0, paths, vec![1.0; 6]).unwrap();
        let f = path_measure_to_flow(&mu);
        // |F| <= 1, so x^(q + dq) <= x^q
        let hi = energy(&f, &EnergyGauge::power(q, q));
        let lo = energy(&f, &EnergyGauge::power(q + dq, q + dq));
        prop_assert!(lo <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn psi_alpha_ordering(d in 2u32..5, a in 0.0f64..3.0, da in 0.0f64..3.0, x in 1e-6f64..0.999) {
        // the denominator ln(1 + 1/x)^alpha grows with alpha iff ln(1 + 1/x) >= 1
        let crossover = 1.0 / (std::f64::consts::E - 1.0);
        if x <= crossover {
            prop_assert!(psi(d, a + da, x) <= psi(d, a, x));
        } else {
            prop_assert!(psi(d, a + da, x) >= psi(d, a, x));
        }
    }

    #[test]
    fn validated_gauge_subadditivity_bound(alpha in 1.0f64..2.0, xs in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let g = EnergyGauge::psi(2, alpha, 4.0).unwrap();
        let n = xs.len() as f64;
        let xs: Vec<f64> = xs.into_iter().map(|x| (x / n).max(1e-9)).collect();
        let lhs = g.eval(xs.iter().sum());
        let rhs = n.powf(g.l - 1.0) * xs.iter().map(|&x| g.eval(x)).sum::<f64>();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn loop_erasure_never_adds_traversals(walk in prop::collection::vec(0usize..8, 1..40)) {
        let out = loop_erase(&walk);
        let mut seen = std::collections::HashSet::new();
        prop_assert!(out.iter().all(|v| seen.insert(*v)));
        prop_assert_eq!(out[0], walk[0]);
        prop_assert_eq!(out.last(), walk.last());
        let count = |w: &[usize]| {
            let mut m: HashMap<(usize, usize), usize> = HashMap::new();
            for s in w.windows(2) {
                *m.entry((s[0].min(s[1]), s[0].max(s[1]))).or_default() += 1;
            }
            m
        };
        let before = count(&walk);
        for (e, k) in count(&out) {
            prop_assert!(k <= before.get(&e).copied().unwrap_or(0));
        }
    }

    #[test]
    fn rayleigh_monotone_under_coupling(p1 in 0.6f64..1.0, dp in 0.0f64..0.4, seed in any::<u64>()) {
        let g = square(5);
        let v0 = g.vertex_at(&[0, 0]).unwrap();
        let sinks = g.shell(&[0, 0], 5);
        let c1 = sample_bond(&g, p1, seed).unwrap();
        let c2 = sample_bond(&g, (p1 + dp).min(1.0), seed).unwrap();
        let r = |c: &wedgelab::percolation::BondConfig| {
            match GiantCluster::find(c) {
                Some(gc) if gc.contains(v0) => Some(effective_resistance(&g, &|e| c.is_open(e), v0, &sinks, 1e-10).unwrap().resistance),
                _ => None,
            }
        };
        if let (Some(r1), Some(r2)) = (r(&c1), r(&c2)) {
            prop_assert!(r1 >= r2 * (1.0 - 1e-7));
        }
    }

    #[test]
    fn block_event_monotone(p1 in 0.4f64..1.0, dp in 0.0f64..0.6, seed in any::<u64>()) {
        let g = square(5);
        let c1 = sample_bond(&g, p1, seed).unwrap();
        let c2 = sample_bond(&g, (p1 + dp).min(1.0), seed).unwrap();
        if block_event(&c1, &[0, 0], 8).unwrap() {
            prop_assert!(block_event(&c2, &[0, 0], 8).unwrap());
        }
    }

    #[test]
    fn bridged_measures_are_valid(p in 0.65f64..1.0, seed in any::<u64>(), boundary in any::<bool>()) {
        let g = square(8);
        let strategy = if boundary { Bridging::Boundary { k: 2 } } else { Bridging::Shortest };
        let gauge = EnergyGauge::psi(2, 1.5, 4.0).unwrap();
        match bridge_sample(&g, p, seed, strategy, 12, &gauge) {
            Ok(s) => {
                prop_assert!(s.support_ok && s.identity_ok);
                prop_assert!(s.conservation_error <= 1e-12);
                prop_assert!(s.quadratic.projected_square <= s.quadratic.cauchy_schwarz * (1.0 + 1e-12));
            }
            Err(wedgelab::Error::InsufficientData(_)) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

#[test]
fn unreached_marker_is_max() {
    assert_eq!(UNREACHED, u32::MAX);
}
