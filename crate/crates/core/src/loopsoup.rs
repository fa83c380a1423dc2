//! Random-walk loop soup at intensity 1/2 on a box.
//!
//! A discrete loop class of length `k` and multiplicity `J` carries mass
//! `alpha (2d)^{-k} / J`. Rooted loops are sampled with mass
//! `alpha (2d)^{-k} / k` each and reduced to classes by canonical rotation;
//! the `k / J` distinct rotations of a class add up to the class mass.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::EdgeConfig;
use crate::lattice::{kernel_tables, killed_spectral_radius, ln_factorials, BoxGeometry, KernelTable};
use crate::rng::{Purpose, Streams};

pub const ALPHA: f64 = 0.5;

/// A loop class, stored as its lexicographically least rotation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiscreteLoop {
    pub k: usize,
    pub vertices: Vec<usize>,
    #[serde(rename = "J")]
    pub j: usize,
}

/// Length of the smallest period of the cyclic word (prefix function).
fn smallest_period(word: &[usize]) -> usize {
    let k = word.len();
    let mut pi = vec![0usize; k];
    for i in 1..k {
        let mut q = pi[i - 1];
        while q > 0 && word[i] != word[q] {
            q = pi[q - 1];
        }
        if word[i] == word[q] {
            q += 1;
        }
        pi[i] = q;
    }
    let p = k - pi[k - 1];
    if k % p == 0 {
        p
    } else {
        k
    }
}

/// Start index of the lexicographically least rotation.
fn least_rotation(word: &[usize]) -> usize {
    let n = word.len();
    let (mut i, mut j, mut k) = (0usize, 1usize, 0usize);
    while i < n && j < n && k < n {
        let a = word[(i + k) % n];
        let b = word[(j + k) % n];
        if a == b {
            k += 1;
            continue;
        }
        if a > b {
            i += k + 1;
        } else {
            j += k + 1;
        }
        if i == j {
            j += 1;
        }
        k = 0;
    }
    i.min(j)
}

impl DiscreteLoop {
    /// Build from a closed sequence `x_0, ..., x_k = x_0` of box vertices.
    /// A single vertex is a point loop.
    pub fn from_closed(geom: &BoxGeometry, seq: &[usize]) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::MalformedLoop("empty sequence".into()));
        }
        for &v in seq {
            if v >= geom.len() {
                return Err(Error::MalformedLoop(format!("vertex {v} outside the box")));
            }
        }
        if seq.len() == 1 {
            return Ok(Self { k: 0, vertices: seq.to_vec(), j: 1 });
        }
        if seq[0] != seq[seq.len() - 1] {
            return Err(Error::MalformedLoop("sequence does not close".into()));
        }
        for w in seq.windows(2) {
            if geom.l1(w[0], w[1]) != 1 {
                return Err(Error::MalformedLoop(format!("{} and {} are not adjacent", w[0], w[1])));
            }
        }
        Ok(Self::from_cycle(&seq[..seq.len() - 1]))
    }

    /// Canonical class of a rooted cyclic word (no repeated endpoint);
    /// adjacency is not checked.
    pub fn from_cycle(word: &[usize]) -> Self {
        let k = word.len();
        let s = least_rotation(word);
        let vertices: Vec<usize> = (0..k).map(|i| word[(s + i) % k]).collect();
        let j = k / smallest_period(&vertices);
        Self { k, vertices, j }
    }

    pub fn is_point(&self) -> bool {
        self.k == 0
    }

    pub fn multiplicity(&self) -> usize {
        self.j
    }

    /// Undirected edges traversed, as `(min, max)` vertex pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.k;
        (0..k).map(move |i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % k]);
            (a.min(b), a.max(b))
        })
    }
}

/// Multiplicity of a closed sequence.
pub fn multiplicity(geom: &BoxGeometry, seq: &[usize]) -> Result<usize> {
    Ok(DiscreteLoop::from_closed(geom, seq)?.j)
}

/// Expected number of copies of this class in the soup: `alpha (2d)^{-k} / J`.
pub fn loop_class_intensity(lp: &DiscreteLoop, d: usize, alpha: f64) -> f64 {
    alpha * (2.0 * d as f64).powi(-(lp.k as i32)) / lp.j as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoupConfig {
    pub k_max: usize,
    /// Bound on the per-vertex intensity of loops longer than `k_max`.
    pub tolerance: f64,
    /// Poisson rate of point loops per vertex.
    pub point_rate: f64,
    /// Bytes allowed for cached kernel tables.
    pub memory_budget: u64,
}

impl Default for SoupConfig {
    fn default() -> Self {
        Self { k_max: 40, tolerance: 1e-6, point_rate: 0.5, memory_budget: 1 << 30 }
    }
}

#[derive(Clone, Debug)]
pub struct LoopSoupSample {
    pub geom: BoxGeometry,
    pub loops: Vec<DiscreteLoop>,
    pub k_max: usize,
    pub residual: f64,
}

/// Upper bound on `sum_{k > k_max} p_k(x, x) / k` uniformly in `x`, using
/// `p_k(x, x) <= rho^k` with `rho` the spectral radius of the killed walk.
pub fn truncation_residual(geom: &BoxGeometry, k_max: usize) -> f64 {
    if geom.is_empty() {
        return 0.0;
    }
    let rho = killed_spectral_radius(geom);
    let r2 = rho * rho;
    let mut total = 0.0;
    let mut k = k_max + 2 - k_max % 2;
    let mut term = rho.powi(k as i32);
    loop {
        let t = term / k as f64;
        total += t;
        // remaining terms are at most a geometric series in rho^2
        if t * r2 / (1.0 - r2) < 1e-6 * total.max(1e-300) || term == 0.0 {
            return total + t * r2 / (1.0 - r2);
        }
        k += 2;
        term *= r2;
    }
}

fn check_horizon(geom: &BoxGeometry, cfg: &SoupConfig) -> Result<f64> {
    if cfg.k_max < 2 || cfg.k_max % 2 == 1 {
        return Err(Error::pre(format!("k_max must be even and at least 2, got {}", cfg.k_max)));
    }
    let residual = truncation_residual(geom, cfg.k_max);
    if !(residual < cfg.tolerance) {
        return Err(Error::TruncationResidual { residual, tolerance: cfg.tolerance });
    }
    Ok(residual)
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Samples soups with the bridge h-transform: from the current vertex with
/// `m` steps left, step to `z` with weight `p_{m-1}(z, root)`.
pub struct LoopSoupSampler {
    geom: BoxGeometry,
    cfg: SoupConfig,
    residual: f64,
    tables: Vec<KernelTable>,
    /// Cumulative rooted-loop means by even length, per root.
    cumulative: Vec<Vec<f64>>,
}

impl LoopSoupSampler {
    pub fn new(geom: &BoxGeometry, cfg: SoupConfig) -> Result<Self> {
        let residual = check_horizon(geom, &cfg)?;
        let need = KernelTable::bytes_for(geom, geom.len(), cfg.k_max);
        if need > cfg.memory_budget {
            return Err(Error::MemoryBudget { required: need, budget: cfg.memory_budget });
        }
        let mut tables = Vec::with_capacity(geom.len());
        let mut cumulative = Vec::with_capacity(geom.len());
        for x in 0..geom.len() {
            let t = kernel_tables(geom, &[x], cfg.k_max)?;
            let mut acc = 0.0;
            let cum: Vec<f64> = (1..=cfg.k_max / 2)
                .map(|h| {
                    let k = 2 * h;
                    acc += ALPHA * t.get(0, k, x) / k as f64;
                    acc
                })
                .collect();
            tables.push(t);
            cumulative.push(cum);
        }
        Ok(Self { geom: geom.clone(), cfg, residual, tables, cumulative })
    }

    /// Expected number of rooted loops of length `k` at `x`.
    pub fn rooted_mean(&self, x: usize, k: usize) -> f64 {
        ALPHA * self.tables[x].get(0, k, x) / k as f64
    }

    pub fn sample(&self, streams: &Streams, sample: u64) -> LoopSoupSample {
        let mut rng = streams.rng(sample, Purpose::LoopSoup);
        self.sample_with(&mut rng)
    }

    pub fn sample_with(&self, rng: &mut ChaCha8Rng) -> LoopSoupSample {
        let g = &self.geom;
        let mut loops = Vec::new();
        let mut path = Vec::with_capacity(self.cfg.k_max);
        let mut nbrs = Vec::with_capacity(2 * g.dim());
        for x in 0..g.len() {
            let cum = &self.cumulative[x];
            let total = *cum.last().unwrap_or(&0.0);
            let count = poisson(rng, total);
            for _ in 0..count {
                let u = rng.random::<f64>() * total;
                let h = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                let k = 2 * (h + 1);
                let table = &self.tables[x];
                path.clear();
                let mut cur = x;
                for m in (1..=k).rev() {
                    path.push(cur);
                    nbrs.clear();
                    let mut sum = 0.0;
                    g.for_each_neighbor(cur, |z, _| {
                        let w = table.get(0, m - 1, z);
                        sum += w;
                        nbrs.push((z, sum));
                    });
                    let u = rng.random::<f64>() * sum;
                    let pick = nbrs.iter().position(|&(_, c)| u < c).unwrap_or(nbrs.len() - 1);
                    cur = nbrs[pick].0;
                }
                debug_assert_eq!(cur, x);
                loops.push(DiscreteLoop::from_cycle(&path));
            }
            for _ in 0..poisson(rng, self.cfg.point_rate) {
                loops.push(DiscreteLoop { k: 0, vertices: vec![x], j: 1 });
            }
        }
        loops.sort();
        LoopSoupSample { geom: g.clone(), loops, k_max: self.cfg.k_max, residual: self.residual }
    }
}

pub fn sample_loop_soup(geom: &BoxGeometry, cfg: SoupConfig, streams: &Streams, sample: u64) -> Result<LoopSoupSample> {
    Ok(LoopSoupSampler::new(geom, cfg)?.sample(streams, sample))
}

/// Uniform closed walks of fixed length on the free lattice Z^d.
pub struct FreeBridges {
    d: usize,
    horizon: usize,
    lf: Vec<f64>,
    /// `ln_w[m][t]`: log number of closed walks of length `t` using `m` axes.
    ln_w: Vec<Vec<f64>>,
}

impl FreeBridges {
    pub fn new(d: usize, horizon: usize) -> Self {
        let lf = ln_factorials(horizon);
        let lc = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
        let mut ln_w = vec![vec![f64::NEG_INFINITY; horizon + 1]; d + 1];
        ln_w[0][0] = 0.0;
        for m in 1..=d {
            for t in (0..=horizon).step_by(2) {
                let terms: Vec<f64> = (0..=t)
                    .step_by(2)
                    .map(|s| lc(t, s) + lc(s, s / 2) + ln_w[m - 1][t - s])
                    .collect();
                ln_w[m][t] = log_sum_exp(&terms);
            }
        }
        Self { d, horizon, lf, ln_w }
    }

    /// `p_t(0, 0)` on the free lattice.
    pub fn return_prob(&self, t: usize) -> f64 {
        if t % 2 == 1 {
            return 0.0;
        }
        (self.ln_w[self.d][t] - t as f64 * (2.0 * self.d as f64).ln()).exp()
    }

    /// A uniformly random closed walk of length `k`, as signed axis moves
    /// `(axis, +1 | -1)`.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<(usize, i8)> {
        assert!(k % 2 == 0 && k <= self.horizon);
        let lc = |n: usize, s: usize| self.lf[n] - self.lf[s] - self.lf[n - s];
        let mut moves = Vec::with_capacity(k);
        let mut t = k;
        for axis in 0..self.d {
            let m = self.d - axis;
            let s = if m == 1 {
                t
            } else {
                let total = self.ln_w[m][t];
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = t;
                for s in (0..=t).step_by(2) {
                    acc += (lc(t, s) + lc(s, s / 2) + self.ln_w[m - 1][t - s] - total).exp();
                    if u < acc {
                        chosen = s;
                        break;
                    }
                }
                chosen
            };
            for i in 0..s {
                moves.push((axis, if i < s / 2 { 1 } else { -1 }));
            }
            t -= s;
        }
        moves.shuffle(rng);
        moves
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Walk the moves from `x` inside the box; `None` if the walk leaves it.
fn trace_in_box(geom: &BoxGeometry, x: usize, moves: &[(usize, i8)], out: &mut Vec<usize>) -> bool {
    out.clear();
    let mut coords = geom.coords(x);
    let mut v = x;
    for &(axis, s) in moves {
        out.push(v);
        let c = coords[axis] as i64 + s as i64;
        if c < 0 || c >= geom.sides()[axis] as i64 {
            return false;
        }
        coords[axis] = c as usize;
        if s > 0 {
            v += geom.strides()[axis];
        } else {
            v -= geom.strides()[axis];
        }
    }
    true
}

/// Soup sampler for large boxes: free-lattice rooted loops at every vertex,
/// kept when they stay in the box. Restricting the free rooted measure to
/// box loops gives the box soup exactly, without per-root kernel tables.
pub struct FreeLoopSoupSampler {
    geom: BoxGeometry,
    cfg: SoupConfig,
    residual: f64,
    bridges: FreeBridges,
    /// Cumulative per-root means by even length.
    cumulative: Vec<f64>,
}

impl FreeLoopSoupSampler {
    pub fn new(geom: &BoxGeometry, cfg: SoupConfig) -> Result<Self> {
        let residual = check_horizon(geom, &cfg)?;
        let bridges = FreeBridges::new(geom.dim(), cfg.k_max);
        let mut acc = 0.0;
        let cumulative = (1..=cfg.k_max / 2)
            .map(|h| {
                let k = 2 * h;
                acc += ALPHA * bridges.return_prob(k) / k as f64;
                acc
            })
            .collect();
        Ok(Self { geom: geom.clone(), cfg, residual, bridges, cumulative })
    }

    pub fn sample(&self, streams: &Streams, sample: u64) -> LoopSoupSample {
        let mut rng = streams.rng(sample, Purpose::LoopSoup);
        let g = &self.geom;
        let per_root = *self.cumulative.last().unwrap_or(&0.0);
        let mut loops = Vec::new();
        let mut path = Vec::new();
        if !g.is_empty() {
            let count = poisson(&mut rng, per_root * g.len() as f64);
            for _ in 0..count {
                let x = rng.random_range(0..g.len());
                let u = rng.random::<f64>() * per_root;
                let h = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
                let moves = self.bridges.sample(2 * (h + 1), &mut rng);
                if trace_in_box(g, x, &moves, &mut path) {
                    loops.push(DiscreteLoop::from_cycle(&path));
                }
            }
            let points = poisson(&mut rng, self.cfg.point_rate * g.len() as f64);
            for _ in 0..points {
                let x = rng.random_range(0..g.len());
                loops.push(DiscreteLoop { k: 0, vertices: vec![x], j: 1 });
            }
        }
        loops.sort();
        LoopSoupSample { geom: g.clone(), loops, k_max: self.cfg.k_max, residual: self.residual }
    }
}

/// Loops of length in `[k_min, k_max]` that visit `set`, sampled without
/// touching the rest of the box: rooted loops are proposed at vertices of
/// `set` only, the class is kept only in the rotation that is least among
/// its rotations rooted in `set`, then thinned by `1 / J`.
pub fn sample_loops_hitting<R: Rng>(
    geom: &BoxGeometry,
    set: &[usize],
    k_min: usize,
    bridges: &FreeBridges,
    k_max: usize,
    rng: &mut R,
) -> Vec<DiscreteLoop> {
    let mut member = std::collections::HashSet::with_capacity(set.len());
    member.extend(set.iter().copied());
    let lo = k_min.max(2) + k_min % 2;
    let mut out = Vec::new();
    let mut path = Vec::new();
    for &x in set {
        for k in (lo..=k_max).step_by(2) {
            let n = poisson(rng, ALPHA * bridges.return_prob(k));
            for _ in 0..n {
                let moves = bridges.sample(k, rng);
                if !trace_in_box(geom, x, &moves, &mut path) {
                    continue;
                }
                let best = (0..k)
                    .filter(|&s| member.contains(&path[s]))
                    .min_by(|&a, &b| {
                        (0..k)
                            .map(|i| path[(a + i) % k])
                            .cmp((0..k).map(|i| path[(b + i) % k]))
                    });
                if best != Some(0) {
                    continue;
                }
                let lp = DiscreteLoop::from_cycle(&path);
                if lp.j == 1 || rng.random::<f64>() * (lp.j as f64) < 1.0 {
                    out.push(lp);
                }
            }
        }
    }
    out.sort();
    out
}

/// Edges traversed by at least one loop of positive length.
pub fn fundamental_cluster_edges(soup: &LoopSoupSample) -> EdgeConfig {
    let g = &soup.geom;
    let mut config = EdgeConfig::empty(g);
    for lp in &soup.loops {
        for (a, b) in lp.edges() {
            if let Some(slot) = g.slot_of(a, b) {
                config.set(slot, true);
            }
        }
    }
    config
}

/// One loop per line: `{"k": .., "vertices": [..], "J": ..}`.
pub fn write_soup_jsonl(w: &mut impl Write, soup: &LoopSoupSample) -> Result<()> {
    for lp in &soup.loops {
        serde_json::to_writer(&mut *w, lp)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_soup_jsonl(r: impl BufRead, geom: &BoxGeometry) -> Result<Vec<DiscreteLoop>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lp: DiscreteLoop = serde_json::from_str(&line)?;
        let mut seq = lp.vertices.clone();
        if lp.k > 0 {
            seq.push(seq[0]);
        }
        let check = DiscreteLoop::from_closed(geom, &seq)?;
        if check != lp {
            return Err(Error::MalformedLoop(format!("line is not in canonical form: {line}")));
        }
        out.push(lp);
    }
    Ok(out)
}
