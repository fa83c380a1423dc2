use cableperc::cluster::{arm_attempt, BfsScratch, ClusterGraph};
use cableperc::estimators::{dense_green, harvest, ExperimentConfig, HarvestPlan};
use cableperc::field::{sample_cable_clusters, sample_dgff, LazyCableEdges, OpenEdges};
use cableperc::lattice::{BoxGeometry, Spectrum};
use cableperc::loopsoup::{DiscreteLoop, FreeLoopSoupSampler, LoopSoupSampler, SoupConfig};
use cableperc::rng::Streams;
use cableperc::walk::{return_probability, simulate_walk};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn field_covariance_matches_dense_inverse() {
    let g = BoxGeometry::cube(2, 4).unwrap();
    let green = dense_green(&g);
    let streams = Streams::new(3);
    let n = 20_000;
    let mut acc = vec![vec![0.0; g.len()]; g.len()];
    for s in 0..n {
        let f = sample_dgff(&g, &streams, s);
        for x in 0..g.len() {
            for y in 0..g.len() {
                acc[x][y] += f.values[x] * f.values[y];
            }
        }
    }
    for x in 0..g.len() {
        for y in 0..g.len() {
            let c = acc[x][y] / n as f64;
            let se = ((green[x][x] * green[y][y] + green[x][y].powi(2)) / n as f64).sqrt();
            assert!((c - green[x][y]).abs() <= 4.5 * se, "({x},{y}) {c} vs {}", green[x][y]);
        }
    }
}

#[test]
fn edge_rule_frequency_on_a_pair() {
    // one edge; sample phi, open with prob 1 - exp(-2ab) when both are positive
    let g = BoxGeometry::cube(1, 2).unwrap();
    let streams = Streams::new(5);
    let n = 100_000u64;
    let mut opened = 0u64;
    let mut expected = 0.0;
    for s in 0..n {
        let f = sample_dgff(&g, &streams, s);
        let (a, b) = (f.values[0], f.values[1]);
        if a > 0.0 && b > 0.0 {
            expected += 1.0 - (-2.0 * a * b).exp();
        }
        opened += sample_cable_clusters(&f, &streams).open_count() as u64;
    }
    let p = opened as f64 / n as f64;
    let q = expected / n as f64;
    assert!((p - q).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{p} vs {q}");
}

#[test]
fn lazy_and_eager_edges_agree() {
    let g = BoxGeometry::cube(3, 6).unwrap();
    let streams = Streams::new(9);
    for s in 0..5 {
        let f = sample_dgff(&g, &streams, s);
        let eager = sample_cable_clusters(&f, &streams);
        let mut lazy = LazyCableEdges::new(&f, &streams);
        for slot in (0..g.edge_slots()).rev() {
            assert_eq!(eager.is_open(slot), lazy.is_open(slot));
        }
    }
}

fn count_class(soups: &[Vec<DiscreteLoop>], class: &DiscreteLoop) -> u64 {
    soups.iter().map(|s| s.iter().filter(|l| *l == class).count() as u64).sum()
}

#[test]
fn exact_and_free_soup_samplers_agree() {
    let g = BoxGeometry::cube(2, 4).unwrap();
    let cfg = SoupConfig { k_max: 60, ..SoupConfig::default() };
    let exact = LoopSoupSampler::new(&g, cfg.clone()).unwrap();
    let free = FreeLoopSoupSampler::new(&g, cfg).unwrap();
    let n = 20_000u64;
    let a = Streams::new(1);
    let b = Streams::new(2);
    let mut by_len = [[0u64; 3]; 2];
    let mut classes = [Vec::new(), Vec::new()];
    for s in 0..n {
        for (i, soup) in [exact.sample(&a, s), free.sample(&b, s)].into_iter().enumerate() {
            for l in &soup.loops {
                match l.k {
                    2 => by_len[i][0] += 1,
                    4 => by_len[i][1] += 1,
                    6 => by_len[i][2] += 1,
                    _ => {}
                }
            }
            classes[i].push(soup.loops);
        }
    }
    for k in 0..3 {
        let (x, y) = (by_len[0][k] as f64, by_len[1][k] as f64);
        assert!((x - y).abs() <= 4.5 * (x + y).sqrt(), "length {}: {x} vs {y}", 2 * k + 2);
    }
    let c = g.center();
    let y = g.neighbors(c).unwrap()[0];
    let back = DiscreteLoop::from_closed(&g, &[c, y, c]).unwrap();
    let (x, z) = (count_class(&classes[0][..], &back) as f64, count_class(&classes[1][..], &back) as f64);
    assert!((x - n as f64 / 32.0).abs() <= 4.0 * (n as f64 / 32.0).sqrt());
    assert!((z - n as f64 / 32.0).abs() <= 4.0 * (n as f64 / 32.0).sqrt());
}

#[test]
fn walk_monte_carlo_matches_exact_returns() {
    let g = ClusterGraph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)], 0).unwrap();
    let exact = return_probability(&g, 4).p2n[4];
    let dist = g.distances();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 200_000;
    let mut hits = 0u64;
    for _ in 0..n {
        let mut v = 0usize;
        for _ in 0..8 {
            let adj = g.adjacent(v);
            v = adj[rand::Rng::random_range(&mut rng, 0..adj.len())].0 as usize;
        }
        hits += (v == 0) as u64;
    }
    let p = hits as f64 / n as f64;
    assert!((p - exact).abs() <= 4.0 * (exact * (1.0 - exact) / n as f64).sqrt(), "{p} vs {exact}");
    let tr = simulate_walk(&g, &dist, 64, &[1, 2], &[0, 1, 8], &mut rng).unwrap();
    assert_eq!(tr.range[..2], [1, 2]);
    assert_eq!(tr.tau[0], Some(1));
}

#[test]
fn rejection_rate_matches_harvested_centre() {
    // same centre arm event, estimated by rejection and by the harvest's
    // one-origin column
    let mut cfg = ExperimentConfig::defaults("one-arm-extrinsic").unwrap();
    cfg.d = 5;
    cfg.side = 11;
    cfg.samples = 1000;
    cfg.margin = Some(1);
    let plan = HarvestPlan { arms: vec![4], ..HarvestPlan::default() };
    let h = harvest(&cfg, &plan).unwrap();
    let (hits, trials) = h.fields.iter().fold((0u128, 0u64), |a, f| (a.0 + f.extrinsic.single[0].sum, a.1 + f.extrinsic.single[0].count));
    let p1 = hits as f64 / trials as f64;

    let geom = cfg.geometry().unwrap();
    let spectrum = Spectrum::new(&geom);
    let streams = Streams::new(77);
    let mut scratch = BfsScratch::new(geom.len());
    let n = 1000u64;
    let mut acc = 0u64;
    for s in 0..n {
        acc += arm_attempt(&spectrum, &streams, s, 4, 0, &mut scratch).unwrap().cluster.is_some() as u64;
    }
    let p2 = acc as f64 / n as f64;
    let se = (p1 * (1.0 - p1) / trials as f64 + p2 * (1.0 - p2) / n as f64).sqrt();
    assert!((p1 - p2).abs() <= 4.0 * se, "harvest {p1} ({trials}) vs rejection {p2}");
}
