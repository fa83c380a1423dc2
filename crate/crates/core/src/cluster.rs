//! Clusters of open edges, intrinsic balls, lanes and arm conditioning.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sample_dgff_with, EdgeConfig, LazyCableEdges, OpenEdges, ProbEstimate};
use crate::lattice::{BoxGeometry, Spectrum};
use crate::rng::Streams;

/// A connected graph containing a root. Local ids follow BFS order from the
/// root, so the root is local id 0. Parallel edges are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterGraph {
    /// Original vertex id of each local id (box index for lattice clusters).
    pub ids: Vec<usize>,
    /// Edge list over local ids.
    pub edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    /// `(neighbour, edge index)` pairs, grouped per vertex.
    adj: Vec<(u32, u32)>,
}

impl ClusterGraph {
    /// Component of `root` in the graph on `0..n` with the given edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], root: usize) -> Result<Self> {
        if root >= n {
            return Err(Error::OutOfDomain { vertex: root, len: n });
        }
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::OutOfDomain { vertex: a.max(b), len: n });
            }
            if a == b {
                return Err(Error::pre("self-loops are not allowed"));
            }
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        let mut local = vec![u32::MAX; n];
        let mut ids = vec![root];
        local[root] = 0;
        let mut head = 0;
        while head < ids.len() {
            let v = ids[head];
            head += 1;
            for &w in &nbrs[v] {
                if local[w] == u32::MAX {
                    local[w] = ids.len() as u32;
                    ids.push(w);
                }
            }
        }
        let kept: Vec<(u32, u32)> = edges
            .iter()
            .filter(|&&(a, _)| local[a] != u32::MAX)
            .map(|&(a, b)| (local[a], local[b]))
            .collect();
        Ok(Self::build(ids, kept))
    }

    fn build(ids: Vec<usize>, edges: Vec<(u32, u32)>) -> Self {
        let n = ids.len();
        let mut deg = vec![0usize; n + 1];
        for &(a, b) in &edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![(0u32, 0u32); offsets[n]];
        for (e, &(a, b)) in edges.iter().enumerate() {
            adj[fill[a as usize]] = (b, e as u32);
            fill[a as usize] += 1;
            adj[fill[b as usize]] = (a, e as u32);
            fill[b as usize] += 1;
        }
        Self { ids, edges, offsets, adj }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn root(&self) -> usize {
        self.ids[0]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// `(neighbour, edge index)` pairs of local vertex `v`.
    pub fn adjacent(&self, v: usize) -> &[(u32, u32)] {
        &self.adj[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Graph distances from the root.
    pub fn distances(&self) -> Vec<u32> {
        self.distances_from(0)
    }

    pub fn distances_from(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        dist[src] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(v) = q.pop_front() {
            for &(w, _) in self.adjacent(v) {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[v] + 1;
                    q.push_back(w as usize);
                }
            }
        }
        dist
    }

    pub fn to_json(&self) -> ClusterJson {
        ClusterJson {
            root: self.root(),
            vertices: self.ids.clone(),
            edges: self.edges.iter().map(|&(a, b)| (self.ids[a as usize], self.ids[b as usize])).collect(),
        }
    }

    pub fn from_json(j: &ClusterJson) -> Result<Self> {
        let index: HashMap<usize, usize> = j.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let root = *index.get(&j.root).ok_or_else(|| Error::Format("root not among vertices".into()))?;
        let edges = j
            .edges
            .iter()
            .map(|(a, b)| match (index.get(a), index.get(b)) {
                (Some(&x), Some(&y)) => Ok((x, y)),
                _ => Err(Error::Format(format!("edge ({a}, {b}) leaves the vertex set"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = Self::from_edges(j.vertices.len(), &edges, root)?;
        if g.len() != j.vertices.len() {
            return Err(Error::Format("cluster is not connected".into()));
        }
        g.ids = g.ids.iter().map(|&i| j.vertices[i]).collect();
        Ok(g)
    }
}

/// Edge-list form with original vertex ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterJson {
    pub root: usize,
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

/// Breadth-first component of `root` among open edges.
pub fn extract_cluster<E: OpenEdges>(edges: &mut E, root: usize) -> Result<ClusterGraph> {
    let g = edges.geometry().clone();
    g.check(root)?;
    let mut local: HashMap<usize, u32> = HashMap::from([(root, 0)]);
    let mut ids = vec![root];
    let mut list = Vec::new();
    let mut head = 0;
    while head < ids.len() {
        let v = ids[head];
        head += 1;
        let mut found = Vec::with_capacity(2 * g.dim());
        g.for_each_neighbor(v, |w, slot| found.push((w, slot)));
        for (w, slot) in found {
            if !edges.is_open(slot) {
                continue;
            }
            let lw = *local.entry(w).or_insert_with(|| {
                ids.push(w);
                (ids.len() - 1) as u32
            });
            // record each edge once, from its lower endpoint
            if v < w {
                list.push((local[&v], lw));
            }
        }
    }
    list.sort_unstable_by_key(|&(a, b)| (a.min(b), a.max(b)));
    Ok(ClusterGraph::build(ids, list))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallProfile {
    pub volumes: Vec<u64>,
    pub spheres: Vec<u64>,
    /// Whether the sphere at `r_max` is nonempty.
    pub reaches: bool,
}

impl BallProfile {
    fn from_levels(levels: &[u64], r_max: usize) -> Self {
        let mut volumes = Vec::with_capacity(r_max + 1);
        let mut spheres = Vec::with_capacity(r_max + 1);
        let mut acc = 0;
        for r in 0..=r_max {
            let s = levels.get(r).copied().unwrap_or(0);
            acc += s;
            spheres.push(s);
            volumes.push(acc);
        }
        Self { reaches: spheres[r_max] > 0, volumes, spheres }
    }
}

pub fn bfs_profile(cluster: &ClusterGraph, r_max: usize) -> BallProfile {
    let mut levels = vec![0u64; r_max + 1];
    for d in cluster.distances() {
        if (d as usize) <= r_max {
            levels[d as usize] += 1;
        }
    }
    BallProfile::from_levels(&levels, r_max)
}

/// The intrinsic ball of radius `r` as a graph of its own, with root
/// distances. Distances inside the ball are unchanged, since geodesics to
/// ball vertices stay in the ball.
pub fn ball_subgraph(cluster: &ClusterGraph, r: usize) -> (ClusterGraph, Vec<u32>) {
    let dist = cluster.distances();
    let mut local = vec![u32::MAX; cluster.len()];
    let mut ids = Vec::new();
    let mut d = Vec::new();
    for v in 0..cluster.len() {
        if dist[v] as usize <= r {
            local[v] = ids.len() as u32;
            ids.push(cluster.ids[v]);
            d.push(dist[v]);
        }
    }
    let edges = cluster
        .edges
        .iter()
        .filter(|&&(a, b)| local[a as usize] != u32::MAX && local[b as usize] != u32::MAX)
        .map(|&(a, b)| (local[a as usize], local[b as usize]))
        .collect();
    (ClusterGraph::build(ids, edges), d)
}

/// Disjoint sets over `0..n`; a negative entry is minus the set size.
pub struct UnionFind {
    parent: Vec<i32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        assert!(n < i32::MAX as usize, "too many vertices for 32-bit union-find");
        Self { parent: vec![-1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] >= 0 {
            let p = self.parent[x] as usize;
            if self.parent[p] >= 0 {
                self.parent[x] = self.parent[p];
            }
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.parent[a] > self.parent[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[a] += self.parent[b];
        self.parent[b] = a as i32;
        true
    }

    pub fn size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        (-self.parent[r]) as usize
    }
}

pub fn components(config: &EdgeConfig) -> UnionFind {
    let g = &config.geom;
    let d = g.dim();
    let mut uf = UnionFind::new(g.len());
    for slot in config.open_slots() {
        if let Some(b) = g.slot_target(slot) {
            uf.union(slot / d, b);
        }
    }
    uf
}

/// Component size of every vertex at boundary distance at least `margin`.
pub fn cluster_tail_stat(config: &EdgeConfig, margin: usize) -> Vec<u64> {
    let g = &config.geom;
    let mut uf = components(config);
    (0..g.len())
        .filter(|&v| g.boundary_distance(v) >= margin)
        .map(|v| uf.size(v) as u64)
        .collect()
}

/// Reusable visited marks for many local searches on one box.
pub struct BfsScratch {
    stamp: Vec<u32>,
    epoch: u32,
    queue: Vec<(usize, u32)>,
}

impl BfsScratch {
    pub fn new(n: usize) -> Self {
        Self { stamp: vec![0; n], epoch: 0, queue: Vec::new() }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.queue.clear();
    }

    /// Intrinsic ball profile of `origin` up to radius `r_max`.
    pub fn ball<E: OpenEdges>(&mut self, edges: &mut E, origin: usize, r_max: usize) -> BallProfile {
        self.next_epoch();
        let g = edges.geometry().clone();
        let mut levels = vec![0u64; r_max + 1];
        self.stamp[origin] = self.epoch;
        self.queue.push((origin, 0));
        let mut head = 0;
        let mut found = Vec::with_capacity(2 * g.dim());
        while head < self.queue.len() {
            let (v, dv) = self.queue[head];
            head += 1;
            levels[dv as usize] += 1;
            if dv as usize == r_max {
                continue;
            }
            found.clear();
            g.for_each_neighbor(v, |w, slot| found.push((w, slot)));
            for &(w, slot) in &found {
                if self.stamp[w] != self.epoch && edges.is_open(slot) {
                    self.stamp[w] = self.epoch;
                    self.queue.push((w, dv + 1));
                }
            }
        }
        BallProfile::from_levels(&levels, r_max)
    }

    /// Largest l-infinity displacement from `origin` reached by its cluster,
    /// exploring only inside the cube of radius `cap` (so the answer is at
    /// most `cap`).
    pub fn reach<E: OpenEdges>(&mut self, edges: &mut E, origin: usize, cap: usize) -> usize {
        self.next_epoch();
        let g = edges.geometry().clone();
        self.stamp[origin] = self.epoch;
        self.queue.push((origin, 0));
        let mut head = 0;
        let mut best = 0;
        let mut found = Vec::with_capacity(2 * g.dim());
        while head < self.queue.len() {
            let (v, _) = self.queue[head];
            head += 1;
            found.clear();
            g.for_each_neighbor(v, |w, slot| found.push((w, slot)));
            for &(w, slot) in &found {
                if self.stamp[w] == self.epoch {
                    continue;
                }
                let disp = g.linf(origin, w);
                if disp > cap || !edges.is_open(slot) {
                    continue;
                }
                self.stamp[w] = self.epoch;
                best = best.max(disp);
                if best == cap {
                    return cap;
                }
                self.queue.push((w, 0));
            }
        }
        best
    }
}

/// Result of rejection sampling on `{root <-> boundary of the cube of radius n}`.
#[derive(Clone, Debug)]
pub struct ArmSamples {
    pub clusters: Vec<ClusterGraph>,
    /// Sample index of the field behind each accepted cluster.
    pub samples: Vec<u64>,
    pub accepted: u64,
    pub attempts: u64,
}

impl ArmSamples {
    pub fn is_empty(&self) -> bool {
        self.accepted == 0
    }

    /// Estimates `P(0 <-> boundary | phi_0 > 0)`, which is twice the
    /// unconditional arm probability.
    pub fn acceptance(&self) -> ProbEstimate {
        ProbEstimate::from_counts(self.accepted, self.attempts.max(1))
    }
}

#[derive(Clone, Debug)]
pub struct ArmRequest {
    pub n: usize,
    pub margin: usize,
    /// Stop after this many accepted clusters.
    pub target: u64,
    /// Maximum number of fields to draw.
    pub budget: u64,
    /// Sample index of the first field.
    pub first_sample: u64,
}

/// Draw fields (flipped so the centre is positive) until the centre's sign
/// cluster reaches l-infinity distance `n`.
pub fn condition_on_arm(geom: &BoxGeometry, req: &ArmRequest, streams: &Streams) -> Result<ArmSamples> {
    let allowed = geom.min_side() as f64 / 2.0 - req.margin as f64;
    if req.n as f64 > allowed {
        return Err(Error::pre(format!(
            "arm radius {} exceeds half the side minus the margin ({allowed})",
            req.n
        )));
    }
    let spectrum = Spectrum::new(geom);
    let mut out = ArmSamples { clusters: Vec::new(), samples: Vec::new(), accepted: 0, attempts: 0 };
    let mut scratch = BfsScratch::new(geom.len());
    while out.attempts < req.budget && out.accepted < req.target {
        let sample = req.first_sample + out.attempts;
        out.attempts += 1;
        if let Some(c) = arm_attempt(&spectrum, streams, sample, req.n, 0, &mut scratch)?.cluster {
            out.clusters.push(c);
            out.samples.push(sample);
            out.accepted += 1;
        }
    }
    Ok(out)
}

/// One rejection step of `condition_on_arm`.
#[derive(Clone, Debug)]
pub struct ArmAttempt {
    pub sample: u64,
    /// Intrinsic ball of the centre, whether or not the attempt is accepted.
    pub ball: BallProfile,
    pub cluster: Option<ClusterGraph>,
}

/// Draw field `sample` (flipped so the centre is positive), profile the
/// centre's ball up to `r_max` and extract its cluster if it reaches
/// l-infinity distance `n`.
pub fn arm_attempt(
    spectrum: &Spectrum,
    streams: &Streams,
    sample: u64,
    n: usize,
    r_max: usize,
    scratch: &mut BfsScratch,
) -> Result<ArmAttempt> {
    let geom = spectrum.geometry();
    let root = geom.center();
    let mut field = sample_dgff_with(spectrum, streams, sample);
    if field.values[root] < 0.0 {
        field.negate();
    }
    let mut lazy = LazyCableEdges::new(&field, streams);
    let ball = scratch.ball(&mut lazy, root, r_max);
    let cluster = if scratch.reach(&mut lazy, root, n) >= n {
        Some(extract_cluster(&mut lazy, root)?)
    } else {
        None
    };
    Ok(ArmAttempt { sample, ball, cluster })
}

/// Lanes of each level `1..=r`, as edge indices of the cluster.
///
/// Edge `(u, v)` with `d(u) = i - 1`, `d(v) = i` is in `lane(i)` when `v`
/// reaches the sphere of radius `r` through vertices at distance `>= i`.
pub fn level_cutsets(cluster: &ClusterGraph, r: usize) -> Result<Vec<Vec<usize>>> {
    let dist = cluster.distances();
    if !dist.iter().any(|&d| d as usize == r) {
        return Err(Error::pre(format!("sphere of radius {r} is empty")));
    }
    let n = cluster.len();
    let mut lanes = Vec::with_capacity(r);
    let mut good = vec![false; n];
    let mut q = VecDeque::new();
    for i in 1..=r {
        good.iter_mut().for_each(|g| *g = false);
        q.clear();
        for v in 0..n {
            if dist[v] as usize == r {
                good[v] = true;
                q.push_back(v);
            }
        }
        while let Some(v) = q.pop_front() {
            for &(w, _) in cluster.adjacent(v) {
                let w = w as usize;
                if !good[w] && dist[w] as usize >= i {
                    good[w] = true;
                    q.push_back(w);
                }
            }
        }
        let mut lane = Vec::new();
        for (e, &(a, b)) in cluster.edges.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            let (lo, hi) = if dist[a] < dist[b] { (a, b) } else { (b, a) };
            if dist[lo] as usize + 1 == i && dist[hi] as usize == i && good[hi] {
                lane.push(e);
            }
        }
        lanes.push(lane);
    }
    Ok(lanes)
}

/// Whether deleting `cut` separates the root from every vertex in `targets`.
pub fn separates(cluster: &ClusterGraph, cut: &[usize], targets: &[usize]) -> bool {
    let mut removed = vec![false; cluster.edges.len()];
    for &e in cut {
        removed[e] = true;
    }
    let mut seen = vec![false; cluster.len()];
    seen[0] = true;
    let mut q = VecDeque::from([0usize]);
    while let Some(v) = q.pop_front() {
        for &(w, e) in cluster.adjacent(v) {
            if !removed[e as usize] && !seen[w as usize] {
                seen[w as usize] = true;
                q.push_back(w as usize);
            }
        }
    }
    targets.iter().all(|&t| !seen[t])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_cable_clusters, sample_dgff};
    use proptest::prelude::*;

    fn path(n: usize) -> ClusterGraph {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        ClusterGraph::from_edges(n, &e, 0).unwrap()
    }

    #[test]
    fn extraction_cases() {
        let g = BoxGeometry::cube(2, 5).unwrap();
        let mut c = EdgeConfig::empty(&g);
        let root = g.center();
        assert_eq!(extract_cluster(&mut c, root).unwrap().len(), 1);
        c.set(g.slot_of(root, root + 1).unwrap(), true);
        let k = extract_cluster(&mut c, root).unwrap();
        assert_eq!(k.len(), 2);
        assert_eq!(k.edges.len(), 1);
        let mut full = EdgeConfig::full(&g);
        let k = extract_cluster(&mut full, root).unwrap();
        assert_eq!(k.len(), 25);
        assert_eq!(k.edges.len(), 40);
        assert!(extract_cluster(&mut full, 25).is_err());
    }

    #[test]
    fn profiles() {
        let p = bfs_profile(&path(6), 7);
        assert_eq!(p.volumes, vec![1, 2, 3, 4, 5, 6, 6, 6]);
        assert!(!p.reaches);
        let s = bfs_profile(&path(1), 3);
        assert_eq!(s.volumes, vec![1, 1, 1, 1]);
        assert_eq!(s.spheres, vec![1, 0, 0, 0]);
    }

    proptest! {
        #[test]
        fn bfs_matches_floyd_warshall(edges in proptest::collection::vec((0usize..20, 0usize..20), 0..60)) {
            let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
            let g = ClusterGraph::from_edges(20, &edges, 0).unwrap();
            let n = 20;
            let inf = u32::MAX / 4;
            let mut d = vec![vec![inf; n]; n];
            for i in 0..n { d[i][i] = 0; }
            for &(a, b) in &edges { d[a][b] = 1; d[b][a] = 1; }
            for k in 0..n { for i in 0..n { for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }}}
            let dist = g.distances();
            for (l, &v) in g.ids.iter().enumerate() {
                prop_assert_eq!(dist[l], d[0][v]);
            }
            prop_assert_eq!(g.len(), (0..n).filter(|&v| d[0][v] < inf).count());
            let p = bfs_profile(&g, 6);
            for r in 1..=6 {
                prop_assert_eq!(p.volumes[r], p.volumes[r - 1] + p.spheres[r]);
            }
        }

        #[test]
        fn lanes_are_cutsets(edges in proptest::collection::vec((0usize..25, 0usize..25), 10..80), r in 1usize..5) {
            let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
            let g = ClusterGraph::from_edges(25, &edges, 0).unwrap();
            let dist = g.distances();
            let sphere: Vec<usize> = (0..g.len()).filter(|&v| dist[v] as usize == r).collect();
            match level_cutsets(&g, r) {
                Ok(lanes) => {
                    prop_assert!(!sphere.is_empty());
                    for lane in &lanes {
                        prop_assert!(separates(&g, lane, &sphere));
                    }
                }
                Err(_) => prop_assert!(sphere.is_empty()),
            }
        }

        #[test]
        fn component_sizes_invariant_under_relabeling(
            edges in proptest::collection::vec((0usize..30, 0usize..30), 0..50),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..30).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let sizes = |edges: &[(usize, usize)]| {
                let mut uf = UnionFind::new(30);
                for &(a, b) in edges { uf.union(a, b); }
                (0..30).map(|v| uf.size(v)).collect::<Vec<_>>()
            };
            let a = sizes(&edges);
            let relabeled: Vec<_> = edges.iter().map(|&(x, y)| (perm[x], perm[y])).collect();
            let b = sizes(&relabeled);
            for v in 0..30 {
                prop_assert_eq!(a[v], b[perm[v]]);
            }
        }
    }

    #[test]
    fn lanes_of_path_and_tree() {
        let lanes = level_cutsets(&path(5), 4).unwrap();
        assert!(lanes.iter().all(|l| l.len() == 1));
        let tree = ClusterGraph::from_edges(7, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)], 0).unwrap();
        let lanes = level_cutsets(&tree, 2).unwrap();
        assert_eq!(lanes[0].len(), 2);
        assert_eq!(lanes[1].len(), 4);
        assert!(level_cutsets(&tree, 3).is_err());
    }

    #[test]
    fn tail_stat_cases() {
        let g = BoxGeometry::cube(2, 6).unwrap();
        let mut c = EdgeConfig::empty(&g);
        assert!(cluster_tail_stat(&c, 0).iter().all(|&s| s == 1));
        c.set(g.slot_of(0, 1).unwrap(), true);
        let s = cluster_tail_stat(&c, 0);
        assert_eq!(s.iter().filter(|&&x| x == 2).count(), 2);
        assert!(cluster_tail_stat(&EdgeConfig::full(&g), 0).iter().all(|&s| s == 36));
        assert_eq!(cluster_tail_stat(&c, 2).len(), 16);
    }

    #[test]
    fn local_searches_agree_with_extraction() {
        let g = BoxGeometry::cube(3, 9).unwrap();
        let s = Streams::new(4);
        let f = sample_dgff(&g, &s, 0);
        let mut c = sample_cable_clusters(&f, &s);
        let mut scratch = BfsScratch::new(g.len());
        for v in (0..g.len()).step_by(7) {
            let k = extract_cluster(&mut c, v).unwrap();
            let p = bfs_profile(&k, 6);
            assert_eq!(scratch.ball(&mut c, v, 6), p);
            let far = k.ids.iter().map(|&w| g.linf(v, w)).max().unwrap();
            assert_eq!(scratch.reach(&mut c, v, 3), far.min(3));
        }
    }

    #[test]
    fn arm_conditioning() {
        let g = BoxGeometry::cube(3, 9).unwrap();
        let s = Streams::new(8);
        let req = ArmRequest { n: 0, margin: 2, target: 5, budget: 5, first_sample: 0 };
        let out = condition_on_arm(&g, &req, &s).unwrap();
        assert_eq!((out.accepted, out.attempts), (5, 5));
        let req = ArmRequest { n: 2, margin: 2, target: 3, budget: 200, first_sample: 0 };
        let out = condition_on_arm(&g, &req, &s).unwrap();
        for k in &out.clusters {
            assert!(k.ids.iter().any(|&w| g.linf(g.center(), w) >= 2));
        }
        let req = ArmRequest { n: 4, margin: 2, target: 3, budget: 10, first_sample: 0 };
        assert!(condition_on_arm(&g, &req, &s).is_err());
        let req = ArmRequest { n: 2, margin: 2, target: 3, budget: 0, first_sample: 0 };
        let out = condition_on_arm(&g, &req, &s).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn json_roundtrip() {
        let tree = ClusterGraph::from_edges(7, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)], 0).unwrap();
        let j = tree.to_json();
        let text = serde_json::to_string(&j).unwrap();
        let back = ClusterGraph::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, tree);
    }
}
