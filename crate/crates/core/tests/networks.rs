use cableperc::cluster::{level_cutsets, ClusterGraph};
use cableperc::resistance::{
    classical_nw_bound, effective_resistance, flow_through_cutsets, generalized_nw_bound, is_cutset, CutsetFamily,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense grounded-Laplacian solve.
fn dense_reff(n: usize, edges: &[(usize, usize)], s: usize, targets: &[usize]) -> f64 {
    let keep: Vec<usize> = (0..n).filter(|v| !targets.contains(v)).collect();
    let pos = |v: usize| keep.iter().position(|&k| k == v);
    let m = keep.len();
    let mut lap = DMatrix::<f64>::zeros(m, m);
    for &(a, b) in edges {
        if a == b {
            continue;
        }
        for (x, y) in [(a, b), (b, a)] {
            if let Some(i) = pos(x) {
                lap[(i, i)] += 1.0;
                if let Some(j) = pos(y) {
                    lap[(i, j)] -= 1.0;
                }
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(m);
    let si = pos(s).unwrap();
    rhs[si] = 1.0;
    lap.lu().solve(&rhs).unwrap()[si]
}

/// Connected random multigraph: a random tree plus extra edges.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            e.push((a, b));
        }
    }
    e
}

/// Random cutset: the edges leaving a random vertex set containing the source
/// and no target, padded with random extra edges.
fn random_cutset(rng: &mut ChaCha8Rng, g: &ClusterGraph, targets: &[usize]) -> Vec<usize> {
    let n = g.len();
    let mut side = vec![false; n];
    side[0] = true;
    for v in 1..n {
        if !targets.contains(&v) && rng.random_bool(0.4) {
            side[v] = true;
        }
    }
    let mut cut: Vec<usize> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(_, &(a, b))| side[a as usize] != side[b as usize])
        .map(|(i, _)| i)
        .collect();
    for _ in 0..rng.random_range(0..3) {
        cut.push(rng.random_range(0..g.edges.len()));
    }
    cut
}

#[test]
fn generalized_bound_is_sound_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..300 {
        let n = rng.random_range(3..30);
        let extra = rng.random_range(0..2 * n);
        let edges = random_graph(&mut rng, n, extra);
        let g = ClusterGraph::from_edges(n, &edges, 0).unwrap();
        let targets: Vec<usize> = (1..g.len()).filter(|_| rng.random_bool(0.2)).collect();
        let targets = if targets.is_empty() { vec![g.len() - 1] } else { targets };
        let exact = effective_resistance(&g, 0, &targets, 1e-13).unwrap().resistance.finite().unwrap();
        let local: Vec<(usize, usize)> = g.edges.iter().map(|&(a, b)| (a as usize, b as usize)).collect();
        let dense = dense_reff(g.len(), &local, 0, &targets);
        assert!((exact - dense).abs() <= 1e-8 * dense.max(1.0), "trial {trial}: cg {exact} dense {dense}");
        let m = rng.random_range(1..6);
        let sets: Vec<Vec<usize>> = (0..m).map(|_| random_cutset(&mut rng, &g, &targets)).collect();
        let fam = CutsetFamily::new(&g, sets, 0, &targets).unwrap();
        let bound = generalized_nw_bound(&fam).unwrap();
        worst = worst.max(bound - exact);
        assert!(bound <= exact + 1e-9, "trial {trial}: bound {bound} > R_eff {exact}");
    }
    assert!(worst <= 1e-9);
}

#[test]
fn classical_dominates_generalized_on_disjoint_lanes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..200 {
        let n = rng.random_range(4..40);
        let edges = random_graph(&mut rng, n, n);
        let g = ClusterGraph::from_edges(n, &edges, 0).unwrap();
        let dist = g.distances();
        let r = *dist.iter().max().unwrap() as usize;
        if r == 0 {
            continue;
        }
        let targets: Vec<usize> = (0..g.len()).filter(|&v| dist[v] as usize == r).collect();
        let lanes = level_cutsets(&g, r).unwrap();
        for lane in &lanes {
            assert!(is_cutset(&g, lane, 0, &targets));
        }
        let fam = CutsetFamily::new(&g, lanes, 0, &targets).unwrap();
        let classical = classical_nw_bound(&fam).unwrap();
        let generalized = generalized_nw_bound(&fam).unwrap();
        let exact = effective_resistance(&g, 0, &targets, 1e-13).unwrap();
        let reff = exact.resistance.finite().unwrap();
        assert!(classical >= generalized - 1e-12);
        assert!(classical <= reff + 1e-9);
        for f in flow_through_cutsets(&g, &exact, &fam) {
            assert!(f >= 1.0 - 1e-7);
        }
        checked += 1;
    }
    assert!(checked > 150);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_edges_never_raises_resistance(seed in any::<u64>(), n in 3usize..20, extra in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_graph(&mut rng, n, extra);
        let g = ClusterGraph::from_edges(n, &edges, 0).unwrap();
        let t = g.len() - 1;
        let before = effective_resistance(&g, 0, &[t], 1e-13).unwrap().resistance.finite().unwrap();
        let mut more = edges.clone();
        let a = rng.random_range(0..n);
        more.push((a, (a + rng.random_range(1..n)) % n));
        let h = ClusterGraph::from_edges(n, &more, 0).unwrap();
        let t2 = h.ids.iter().position(|&v| v == g.ids[t]).unwrap();
        let after = effective_resistance(&h, 0, &[t2], 1e-13).unwrap().resistance.finite().unwrap();
        prop_assert!(after <= before + 1e-9);
        // Reff never exceeds the graph distance
        let d = g.distances()[t] as f64;
        prop_assert!(before <= d + 1e-9);
    }
}
