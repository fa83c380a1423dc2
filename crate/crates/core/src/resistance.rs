//! Effective resistance with unit conductances and Nash-Williams bounds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterGraph;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Resistance {
    Finite(f64),
    Infinite,
}

impl Resistance {
    pub fn finite(self) -> Option<f64> {
        match self {
            Resistance::Finite(r) => Some(r),
            Resistance::Infinite => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub resistance: Resistance,
    /// Node potentials under unit current; targets sit at 0.
    pub potentials: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual of the grounded system.
    pub residual: f64,
}

impl Solution {
    /// Current through edge `e` of `graph`, oriented from its first endpoint.
    pub fn flow(&self, graph: &ClusterGraph, e: usize) -> f64 {
        let (a, b) = graph.edges[e];
        self.potentials[a as usize] - self.potentials[b as usize]
    }
}

/// Unit current in at `source`, out at the grounded `targets` (local ids),
/// solved by Jacobi-preconditioned conjugate gradients.
pub fn effective_resistance(graph: &ClusterGraph, source: usize, targets: &[usize], tol: f64) -> Result<Solution> {
    if !(tol > 0.0) {
        return Err(Error::pre("tolerance must be positive"));
    }
    let n = graph.len();
    if source >= n {
        return Err(Error::OutOfDomain { vertex: source, len: n });
    }
    let mut grounded = vec![false; n];
    for &t in targets {
        if t < n {
            grounded[t] = true;
        }
    }
    if !grounded.iter().any(|&g| g) {
        return Ok(Solution { resistance: Resistance::Infinite, potentials: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    if grounded[source] {
        return Ok(Solution { resistance: Resistance::Finite(0.0), potentials: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for v in 0..n {
            if grounded[v] {
                out[v] = 0.0;
                continue;
            }
            let mut acc = graph.degree(v) as f64 * x[v];
            for &(w, _) in graph.adjacent(v) {
                if !grounded[w as usize] {
                    acc -= x[w as usize];
                }
            }
            out[v] = acc;
        }
    };
    let inv_diag: Vec<f64> = (0..n)
        .map(|v| if grounded[v] { 0.0 } else { 1.0 / graph.degree(v) as f64 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    r[source] = 1.0;
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 20 * n + 1000;
    let mut iterations = 0;
    let mut res = 1.0;
    while res > tol && iterations < max_iter {
        apply(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        iterations += 1;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(Solution { resistance: Resistance::Finite(x[source]), potentials: x, iterations, residual: res })
}

/// Whether removing `cut` (edge indices) separates `source` from all targets.
pub fn is_cutset(graph: &ClusterGraph, cut: &[usize], source: usize, targets: &[usize]) -> bool {
    let mut removed = vec![false; graph.edges.len()];
    for &e in cut {
        if e < removed.len() {
            removed[e] = true;
        }
    }
    let mut seen = vec![false; graph.len()];
    seen[source] = true;
    let mut q = VecDeque::from([source]);
    while let Some(v) = q.pop_front() {
        for &(w, e) in graph.adjacent(v) {
            if !removed[e as usize] && !seen[w as usize] {
                seen[w as usize] = true;
                q.push_back(w as usize);
            }
        }
    }
    targets.iter().all(|&t| !seen[t])
}

/// Edge cutsets between a source and a target set, with per-edge
/// multiplicities `n_e = #{i : e in A_i}`.
#[derive(Clone, Debug)]
pub struct CutsetFamily {
    pub sets: Vec<Vec<usize>>,
    pub multiplicity: Vec<u32>,
}

impl CutsetFamily {
    pub fn new(graph: &ClusterGraph, sets: Vec<Vec<usize>>, source: usize, targets: &[usize]) -> Result<Self> {
        for (i, set) in sets.iter().enumerate() {
            if set.iter().any(|&e| e >= graph.edges.len()) || !is_cutset(graph, set, source, targets) {
                return Err(Error::NotACutset { index: i });
            }
        }
        Ok(Self::new_unchecked(graph, sets))
    }

    /// Skip separation checks (for benchmarks on trusted families).
    pub fn new_unchecked(graph: &ClusterGraph, mut sets: Vec<Vec<usize>>) -> Self {
        let mut multiplicity = vec![0u32; graph.edges.len()];
        for set in &mut sets {
            set.sort_unstable();
            set.dedup();
            for &e in set.iter() {
                multiplicity[e] += 1;
            }
        }
        Self { sets, multiplicity }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// `m^2 / sum_e n_e^2`, a lower bound on the effective resistance even when
/// the cutsets overlap.
pub fn generalized_nw_bound(family: &CutsetFamily) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::pre("cutset family is empty"));
    }
    let m = family.len() as f64;
    let denom: f64 = family.multiplicity.iter().map(|&n| (n as f64) * (n as f64)).sum();
    Ok(m * m / denom)
}

/// `sum_i 1 / |A_i|` for pairwise disjoint cutsets.
pub fn classical_nw_bound(family: &CutsetFamily) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::pre("cutset family is empty"));
    }
    let mut owner = vec![usize::MAX; family.multiplicity.len()];
    for (i, set) in family.sets.iter().enumerate() {
        for &e in set {
            if owner[e] != usize::MAX {
                return Err(Error::OverlappingCutsets { first: owner[e], second: i });
            }
            owner[e] = i;
        }
    }
    Ok(family.sets.iter().map(|s| 1.0 / s.len() as f64).sum())
}

/// `sum_{e in A_i} |theta(e)|` for each cutset; each is at least 1 for a
/// unit flow.
pub fn flow_through_cutsets(graph: &ClusterGraph, sol: &Solution, family: &CutsetFamily) -> Vec<f64> {
    family
        .sets
        .iter()
        .map(|set| set.iter().map(|&e| sol.flow(graph, e).abs()).sum())
        .collect()
}
