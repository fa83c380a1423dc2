//! Simple random walk on clusters: return probabilities, exit times, range,
//! and the critical Galton-Watson incipient infinite tree used to calibrate
//! the exponent fits.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterGraph;
use crate::error::{Error, Result};
use crate::stats::{loglog_slope, mean_se, Fit};

/// `p_{2n}(root, root)` for `0 <= n <= n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbs {
    pub p2n: Vec<f64>,
    /// Total mass discarded by pruning; zero for exact iteration.
    pub dropped: f64,
}

/// Iterate the transition operator from the point mass at the root.
pub fn return_probability(cluster: &ClusterGraph, n_max: usize) -> ReturnProbs {
    return_probability_pruned(cluster, n_max, 0.0)
}

/// As `return_probability`, dropping entries below `threshold` after every
/// step and accounting the discarded mass. Vertices too far to come back
/// before time `2 n_max` are always skipped, which loses nothing.
pub fn return_probability_pruned(cluster: &ClusterGraph, n_max: usize, threshold: f64) -> ReturnProbs {
    let n = cluster.len();
    if n == 1 {
        return ReturnProbs { p2n: vec![1.0; n_max + 1], dropped: 0.0 };
    }
    let dist = cluster.distances();
    let horizon = 2 * n_max;
    let mut mass = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    let mut active = vec![0usize];
    let mut touched = Vec::new();
    let mut in_next = vec![false; n];
    mass[0] = 1.0;
    let mut p2n = vec![1.0];
    let mut dropped = 0.0;
    for t in 1..=horizon {
        touched.clear();
        let left = (horizon - t) as u32;
        for &v in &active {
            let share = mass[v] / cluster.degree(v) as f64;
            mass[v] = 0.0;
            for &(w, _) in cluster.adjacent(v) {
                let w = w as usize;
                if dist[w] > left {
                    continue;
                }
                if !in_next[w] {
                    in_next[w] = true;
                    touched.push(w);
                }
                next[w] += share;
            }
        }
        active.clear();
        touched.sort_unstable();
        for &w in &touched {
            in_next[w] = false;
            let m = next[w];
            next[w] = 0.0;
            if m < threshold {
                dropped += m;
            } else {
                mass[w] = m;
                active.push(w);
            }
        }
        if t % 2 == 0 {
            p2n.push(mass[0]);
        }
    }
    ReturnProbs { p2n, dropped }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Exit time per requested radius; `None` when censored at the step budget.
    pub tau: Vec<Option<u64>>,
    /// Distinct vertices visited by time `n` per checkpoint (including `X_0`).
    pub range: Vec<u64>,
}

/// Walk `steps` steps from the root. `radii` and `checkpoints` must be sorted.
pub fn simulate_walk<R: Rng + ?Sized>(
    cluster: &ClusterGraph,
    dist: &[u32],
    steps: u64,
    radii: &[usize],
    checkpoints: &[u64],
    rng: &mut R,
) -> Result<Trajectory> {
    if cluster.len() < 2 {
        return Err(Error::pre("walks need a cluster with at least two vertices"));
    }
    let mut tau = vec![None; radii.len()];
    let mut range = Vec::with_capacity(checkpoints.len());
    let mut visited = vec![false; cluster.len()];
    visited[0] = true;
    let mut distinct = 1u64;
    let mut v = 0usize;
    let mut next_radius = 0;
    let mut next_check = 0;
    while next_check < checkpoints.len() && checkpoints[next_check] == 0 {
        range.push(1);
        next_check += 1;
    }
    while next_radius < radii.len() && radii[next_radius] == 0 {
        tau[next_radius] = Some(0);
        next_radius += 1;
    }
    for t in 1..=steps {
        let adj = cluster.adjacent(v);
        v = adj[rng.random_range(0..adj.len())].0 as usize;
        if !visited[v] {
            visited[v] = true;
            distinct += 1;
        }
        while next_radius < radii.len() && dist[v] as usize >= radii[next_radius] {
            tau[next_radius] = Some(t);
            next_radius += 1;
        }
        while next_check < checkpoints.len() && checkpoints[next_check] == t {
            range.push(distinct);
            next_check += 1;
        }
        if next_radius == radii.len() && next_check == checkpoints.len() {
            break;
        }
    }
    Ok(Trajectory { tau, range })
}

/// Pooled walk statistics over an ensemble of clusters.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct WalkStats {
    pub n_max: usize,
    /// `p_{2n}` per cluster.
    pub returns: Vec<Vec<f64>>,
    pub radii: Vec<usize>,
    /// Exit-time samples per radius; censored samples hold the step budget.
    pub tau: Vec<Vec<f64>>,
    pub censored: Vec<u64>,
    pub checkpoints: Vec<u64>,
    pub range: Vec<Vec<f64>>,
    /// Singleton clusters skipped.
    pub excluded: u64,
}

impl WalkStats {
    pub fn new(n_max: usize, radii: Vec<usize>, checkpoints: Vec<u64>) -> Self {
        Self {
            n_max,
            tau: vec![Vec::new(); radii.len()],
            censored: vec![0; radii.len()],
            range: vec![Vec::new(); checkpoints.len()],
            radii,
            checkpoints,
            ..Default::default()
        }
    }

    pub fn add_returns(&mut self, p: &ReturnProbs) {
        self.returns.push(p.p2n.clone());
    }

    pub fn add_trajectory(&mut self, tr: &Trajectory, steps: u64) {
        for (i, t) in tr.tau.iter().enumerate() {
            match t {
                Some(t) => self.tau[i].push(*t as f64),
                None => {
                    self.tau[i].push(steps as f64);
                    self.censored[i] += 1;
                }
            }
        }
        for (i, &r) in tr.range.iter().enumerate() {
            self.range[i].push(r as f64);
        }
    }

    pub fn merge(&mut self, other: WalkStats) {
        self.returns.extend(other.returns);
        for (a, b) in self.tau.iter_mut().zip(other.tau) {
            a.extend(b);
        }
        for (a, b) in self.censored.iter_mut().zip(other.censored) {
            *a += b;
        }
        for (a, b) in self.range.iter_mut().zip(other.range) {
            a.extend(b);
        }
        self.excluded += other.excluded;
    }

    /// Mean and standard error of `p_{2n}` across clusters.
    pub fn return_curve(&self) -> Vec<(f64, f64)> {
        (0..=self.n_max)
            .map(|n| {
                let xs: Vec<f64> = self.returns.iter().filter_map(|p| p.get(n).copied()).collect();
                mean_se(&xs)
            })
            .collect()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["quantity", "x", "mean", "se", "samples", "censored"])?;
        for (n, (m, se)) in self.return_curve().into_iter().enumerate() {
            out.write_record(&["p2n".to_string(), n.to_string(), m.to_string(), se.to_string(), self.returns.len().to_string(), "0".into()])?;
        }
        for (i, &r) in self.radii.iter().enumerate() {
            let (m, se) = mean_se(&self.tau[i]);
            out.write_record(&["tau".to_string(), r.to_string(), m.to_string(), se.to_string(), self.tau[i].len().to_string(), self.censored[i].to_string()])?;
        }
        for (i, &n) in self.checkpoints.iter().enumerate() {
            let (m, se) = mean_se(&self.range[i]);
            out.write_record(&["range".to_string(), n.to_string(), m.to_string(), se.to_string(), self.range[i].len().to_string(), "0".into()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Which part of each curve enters the fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitWindows {
    pub return_n: (usize, usize),
    pub exit_r: (usize, usize),
    pub range_n: (u64, u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFits {
    pub returns: Fit,
    pub exit: Fit,
    pub range: Fit,
    pub warnings: Vec<String>,
}

fn dyadic_in(lo: usize, hi: usize) -> Vec<usize> {
    (0..64).map(|k| 1usize << k).filter(|&n| n >= lo && n <= hi).collect()
}

/// Log-log slopes of the pooled return probability (at dyadic `n`), mean
/// exit time and mean range.
pub fn exponent_fit(stats: &WalkStats, win: &FitWindows) -> Result<ExponentFits> {
    let mut warnings = Vec::new();
    let curve = stats.return_curve();
    let ret: Vec<(f64, f64)> = dyadic_in(win.return_n.0.max(1), win.return_n.1.min(stats.n_max))
        .into_iter()
        .map(|n| (n as f64, curve[n].0))
        .collect();
    let exit: Vec<(f64, f64)> = stats
        .radii
        .iter()
        .enumerate()
        .filter(|(_, &r)| r >= win.exit_r.0 && r <= win.exit_r.1 && r > 0)
        .map(|(i, &r)| (r as f64, mean_se(&stats.tau[i]).0))
        .collect();
    let range: Vec<(f64, f64)> = stats
        .checkpoints
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= win.range_n.0 && n <= win.range_n.1 && n > 0)
        .map(|(i, &n)| (n as f64, mean_se(&stats.range[i]).0))
        .collect();
    for (name, pts) in [("return", &ret), ("exit", &exit), ("range", &range)] {
        let span = pts.iter().map(|p| p.0).fold(f64::NAN, f64::max) / pts.iter().map(|p| p.0).fold(f64::NAN, f64::min);
        if pts.len() < 3 || !(span >= 10.0) {
            warnings.push(format!("{name} fit uses {} points spanning a factor {span:.1}", pts.len()));
        }
    }
    if stats.censored.iter().any(|&c| c > 0) {
        warnings.push(format!("censored exit times: {:?}", stats.censored));
    }
    Ok(ExponentFits { returns: loglog_slope(&ret)?, exit: loglog_slope(&exit)?, range: loglog_slope(&range)?, warnings })
}

/// A sample of the critical Poisson(1) Galton-Watson tree conditioned to
/// survive (Kesten's tree), cut at graph distance `depth` from the root.
#[derive(Clone, Debug)]
pub struct KestenTree {
    pub graph: ClusterGraph,
    pub depth: usize,
    /// Vertices at the cut depth whose subtrees were discarded.
    pub truncated: u64,
}

pub fn kesten_tree<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> KestenTree {
    let poisson = Poisson::new(1.0).expect("rate 1 is valid");
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut level = vec![0usize; 1];
    let mut n = 1usize;
    // spine: vertex i at depth i; each spine vertex also gets Poisson(1)
    // ordinary children (size-biased offspring minus the spine child)
    let mut frontier: Vec<usize> = Vec::new();
    let mut spine = 0usize;
    for d in 0..depth {
        let extra = poisson.sample(rng) as usize;
        for _ in 0..extra {
            edges.push((spine, n));
            level.push(d + 1);
            frontier.push(n);
            n += 1;
        }
        edges.push((spine, n));
        level.push(d + 1);
        spine = n;
        n += 1;
    }
    let mut truncated = 0u64;
    let mut queue = std::collections::VecDeque::from(frontier);
    while let Some(v) = queue.pop_front() {
        if level[v] >= depth {
            truncated += 1;
            continue;
        }
        let kids = poisson.sample(rng) as usize;
        for _ in 0..kids {
            edges.push((v, n));
            level.push(level[v] + 1);
            queue.push_back(n);
            n += 1;
        }
    }
    // the spine end is always cut
    truncated += 1;
    let graph = ClusterGraph::from_edges(n, &edges, 0).expect("tree is valid");
    KestenTree { graph, depth, truncated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Streams};

    fn graph(n: usize, e: &[(usize, usize)]) -> ClusterGraph {
        ClusterGraph::from_edges(n, e, 0).unwrap()
    }

    #[test]
    fn small_return_probabilities() {
        assert_eq!(return_probability(&graph(2, &[(0, 1)]), 3).p2n, vec![1.0; 4]);
        let p = graph(3, &[(1, 0), (1, 2)]);
        let centre = ClusterGraph::from_edges(3, &[(1, 0), (1, 2)], 1).unwrap();
        assert_eq!(return_probability(&centre, 2).p2n[1], 1.0);
        assert_eq!(return_probability(&p, 1).p2n[1], 0.5);
        let cycle = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert!((return_probability(&cycle, 1).p2n[1] - 0.5).abs() < 1e-15);
        assert_eq!(return_probability(&graph(1, &[]), 2).p2n, vec![1.0; 3]);
    }

    #[test]
    fn reversibility() {
        // pi(x) p_n(x, y) = pi(y) p_n(y, x) on a small irregular graph
        let e = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (1, 5)];
        let n = 6;
        let g = graph(n, &e);
        let mut p = vec![vec![0.0; n]; n];
        for v in 0..n {
            for &(w, _) in g.adjacent(v) {
                p[v][w as usize] += 1.0 / g.degree(v) as f64;
            }
        }
        let mut pk = p.clone();
        for _ in 0..6 {
            for x in 0..n {
                for y in 0..n {
                    let l = g.degree(x) as f64 * pk[x][y];
                    let r = g.degree(y) as f64 * pk[y][x];
                    assert!((l - r).abs() < 1e-12);
                }
            }
            let mut next = vec![vec![0.0; n]; n];
            for x in 0..n {
                for z in 0..n {
                    for y in 0..n {
                        next[x][y] += pk[x][z] * p[z][y];
                    }
                }
            }
            pk = next;
        }
        // the operator iteration agrees with matrix powers
        let rp = return_probability(&g, 3).p2n;
        let mut m = p.clone();
        for t in 2..=6 {
            let mut next = vec![vec![0.0; n]; n];
            for x in 0..n {
                for z in 0..n {
                    for y in 0..n {
                        next[x][y] += m[x][z] * p[z][y];
                    }
                }
            }
            m = next;
            if t % 2 == 0 {
                assert!((rp[t / 2] - m[0][0]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn walk_on_path_and_pair() {
        let mut rng = Streams::new(2).rng(0, Purpose::Walk);
        let pair = graph(2, &[(0, 1)]);
        let d = pair.distances();
        let tr = simulate_walk(&pair, &d, 10, &[1], &[0, 1, 5, 10], &mut rng).unwrap();
        assert_eq!(tr.range, vec![1, 2, 2, 2]);
        assert_eq!(tr.tau, vec![Some(1)]);
        assert!(simulate_walk(&graph(1, &[]), &[0], 10, &[], &[], &mut rng).is_err());

        let r = 6;
        let path = graph(r + 1, &(0..r).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let d = path.distances();
        let mut sum = 0.0;
        let trials = 20_000;
        for _ in 0..trials {
            let tr = simulate_walk(&path, &d, 10_000, &[r], &[100], &mut rng).unwrap();
            sum += tr.tau[0].unwrap() as f64;
            assert!(tr.range[0] <= 101);
        }
        // from the reflecting end, E tau_r = r^2
        let mean = sum / trials as f64;
        assert!((mean - 36.0).abs() < 1.0, "mean exit time {mean}");
    }

    #[test]
    fn censoring_is_monotone_in_budget() {
        let mut e = Vec::new();
        for i in 0..30 {
            e.push((i, i + 1));
        }
        let g = graph(31, &e);
        let d = g.distances();
        let count = |steps: u64| {
            let mut rng = Streams::new(5).rng(1, Purpose::Walk);
            (0..200)
                .filter(|_| simulate_walk(&g, &d, steps, &[10], &[], &mut rng).unwrap().tau[0].is_some())
                .count()
        };
        let (a, b, c) = (count(20), count(100), count(1000));
        assert!(a <= b && b <= c);
    }

    #[test]
    fn pruning_accounts_dropped_mass() {
        let mut rng = Streams::new(3).rng(0, Purpose::Tree);
        let t = kesten_tree(60, &mut rng);
        let exact = return_probability(&t.graph, 200);
        let pruned = return_probability_pruned(&t.graph, 200, 1e-14);
        for (a, b) in exact.p2n.iter().zip(&pruned.p2n) {
            assert!((a - b).abs() <= pruned.dropped + 1e-15);
        }
    }

    #[test]
    fn kesten_tree_shape() {
        let mut rng = Streams::new(4).rng(0, Purpose::Tree);
        let t = kesten_tree(50, &mut rng);
        assert_eq!(t.graph.edges.len(), t.graph.len() - 1);
        let d = t.graph.distances();
        assert_eq!(*d.iter().max().unwrap(), 50);
        assert!(t.truncated >= 1);
    }

    #[test]
    fn fits_recover_power_laws() {
        let mut s = WalkStats::new(4096, vec![2, 4, 8, 16], vec![16, 64, 256, 1024]);
        s.returns.push((0..=4096).map(|n| if n == 0 { 1.0 } else { (n as f64).powf(-2.0 / 3.0) }).collect());
        for (i, &r) in [2.0f64, 4.0, 8.0, 16.0].iter().enumerate() {
            s.tau[i].push(r.powi(3));
        }
        for (i, &n) in [16.0f64, 64.0, 256.0, 1024.0].iter().enumerate() {
            s.range[i].push(n.powf(2.0 / 3.0));
        }
        let w = FitWindows { return_n: (4, 4096), exit_r: (2, 16), range_n: (16, 1024) };
        let f = exponent_fit(&s, &w).unwrap();
        assert!((f.returns.slope + 2.0 / 3.0).abs() < 1e-12);
        assert!((f.exit.slope - 3.0).abs() < 1e-12);
        assert!((f.range.slope - 2.0 / 3.0).abs() < 1e-12);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("quantity,x,mean,se,samples,censored"));
    }
}
