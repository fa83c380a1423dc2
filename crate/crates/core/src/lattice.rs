//! Finite boxes of Z^d with absorbing boundary, killed heat kernels and
//! Dirichlet Green's functions.
//!
//! Vertices are stored with axis 0 varying fastest. The edge between `v` and
//! `v + e_axis` occupies slot `v * d + axis`; slots whose far endpoint lies
//! outside the box are unused.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxGeometry {
    sides: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl BoxGeometry {
    /// A box with the given interior side lengths. A zero side gives an
    /// empty box.
    pub fn new(sides: Vec<usize>) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::pre("box dimension must be positive"));
        }
        let mut strides = Vec::with_capacity(sides.len());
        let mut len: usize = 1;
        for &l in &sides {
            strides.push(len);
            len = len
                .checked_mul(l)
                .ok_or_else(|| Error::pre("box volume overflows usize"))?;
        }
        Ok(Self { sides, strides, len })
    }

    pub fn cube(d: usize, side: usize) -> Result<Self> {
        Self::new(vec![side; d])
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Number of interior vertices.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn min_side(&self) -> usize {
        self.sides.iter().copied().min().unwrap_or(0)
    }

    pub fn edge_slots(&self) -> usize {
        self.len * self.dim()
    }

    pub fn check(&self, v: usize) -> Result<()> {
        if v < self.len {
            Ok(())
        } else {
            Err(Error::OutOfDomain { vertex: v, len: self.len })
        }
    }

    /// Zero-based coordinates.
    pub fn coords(&self, v: usize) -> Vec<usize> {
        self.sides
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| (v / s) % l)
            .collect()
    }

    #[inline]
    pub fn coord(&self, v: usize, axis: usize) -> usize {
        (v / self.strides[axis]) % self.sides[axis]
    }

    pub fn index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dim() {
            return Err(Error::pre("coordinate length differs from box dimension"));
        }
        let mut v = 0;
        for ((&c, &l), &s) in coords.iter().zip(&self.sides).zip(&self.strides) {
            if c >= l {
                return Err(Error::OutOfDomain { vertex: usize::MAX, len: self.len });
            }
            v += c * s;
        }
        Ok(v)
    }

    /// Coordinates relative to the central vertex (exact centre for odd sides).
    pub fn centered(&self, v: usize) -> Vec<i64> {
        self.coords(v)
            .iter()
            .zip(&self.sides)
            .map(|(&c, &l)| c as i64 - ((l as i64 - 1) / 2))
            .collect()
    }

    pub fn from_centered(&self, x: &[i64]) -> Result<usize> {
        let mut c = Vec::with_capacity(x.len());
        for (&xi, &l) in x.iter().zip(&self.sides) {
            let ci = xi + (l as i64 - 1) / 2;
            if ci < 0 || ci >= l as i64 {
                return Err(Error::OutOfDomain { vertex: usize::MAX, len: self.len });
            }
            c.push(ci as usize);
        }
        self.index(&c)
    }

    pub fn center(&self) -> usize {
        self.sides
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| l.saturating_sub(1) / 2 * s)
            .sum()
    }

    pub fn neighbors(&self, v: usize) -> Result<Vec<usize>> {
        self.check(v)?;
        let mut out = Vec::with_capacity(2 * self.dim());
        self.for_each_neighbor(v, |w, _| out.push(w));
        Ok(out)
    }

    /// Visit in-box neighbours of `v` with the slot of the connecting edge.
    #[inline]
    pub fn for_each_neighbor(&self, v: usize, mut f: impl FnMut(usize, usize)) {
        let d = self.dim();
        for axis in 0..d {
            let s = self.strides[axis];
            let c = (v / s) % self.sides[axis];
            if c > 0 {
                f(v - s, (v - s) * d + axis);
            }
            if c + 1 < self.sides[axis] {
                f(v + s, v * d + axis);
            }
        }
    }

    /// Far endpoint of slot `slot`, if that edge lies inside the box.
    #[inline]
    pub fn slot_target(&self, slot: usize) -> Option<usize> {
        let d = self.dim();
        let (v, axis) = (slot / d, slot % d);
        let s = self.strides[axis];
        if (v / s) % self.sides[axis] + 1 < self.sides[axis] {
            Some(v + s)
        } else {
            None
        }
    }

    pub fn slot_of(&self, u: usize, v: usize) -> Option<usize> {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        let diff = b - a;
        let axis = self.strides.iter().position(|&s| s == diff)?;
        // strides can coincide when some side is 1
        for ax in axis..self.dim() {
            if self.strides[ax] == diff && self.sides[ax] > 1 {
                let slot = a * self.dim() + ax;
                if self.slot_target(slot) == Some(b) {
                    return Some(slot);
                }
            }
        }
        None
    }

    /// l-infinity distance to the absorbing layer just outside the box.
    pub fn boundary_distance(&self, v: usize) -> usize {
        self.sides
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| {
                let c = (v / s) % l;
                (c + 1).min(l - c)
            })
            .min()
            .unwrap_or(0)
    }

    /// Default bulk margin: distance at least a quarter of the smallest side.
    pub fn default_margin(&self) -> usize {
        self.min_side().div_ceil(4)
    }

    /// Vertices whose boundary distance is at least `margin`.
    pub fn deep_interior(&self, margin: usize) -> Vec<usize> {
        (0..self.len)
            .filter(|&v| self.boundary_distance(v) >= margin)
            .collect()
    }

    pub fn linf(&self, u: usize, v: usize) -> usize {
        self.sides
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| ((u / s) % l).abs_diff((v / s) % l))
            .max()
            .unwrap_or(0)
    }

    pub fn l1(&self, u: usize, v: usize) -> usize {
        self.sides
            .iter()
            .zip(&self.strides)
            .map(|(&l, &s)| ((u / s) % l).abs_diff((v / s) % l))
            .sum()
    }
}

/// Killed simple-random-walk kernels `p_t(x, .)` for `0 <= t <= horizon`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    geom: BoxGeometry,
    roots: Vec<usize>,
    horizon: usize,
    values: Vec<Vec<f64>>,
}

impl KernelTable {
    pub fn geometry(&self) -> &BoxGeometry {
        &self.geom
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `p_t(roots[i], y)`.
    #[inline]
    pub fn get(&self, i: usize, t: usize, y: usize) -> f64 {
        self.values[i][t * self.geom.len() + y]
    }

    /// The whole distribution `p_t(roots[i], .)`.
    pub fn row(&self, i: usize, t: usize) -> &[f64] {
        let n = self.geom.len();
        &self.values[i][t * n..(t + 1) * n]
    }

    /// Bytes a table with `roots` roots and this horizon occupies.
    pub fn bytes_for(geom: &BoxGeometry, roots: usize, horizon: usize) -> u64 {
        (geom.len() as u64) * (horizon as u64 + 1) * roots as u64 * 8
    }
}

pub fn killed_heat_kernel(geom: &BoxGeometry, x: usize, horizon: usize) -> Result<KernelTable> {
    kernel_tables(geom, &[x], horizon)
}

pub fn kernel_tables(geom: &BoxGeometry, roots: &[usize], horizon: usize) -> Result<KernelTable> {
    for &x in roots {
        geom.check(x)?;
    }
    let n = geom.len();
    let w = 1.0 / (2 * geom.dim()) as f64;
    let values = roots
        .iter()
        .map(|&x| {
            let mut table = vec![0.0; n * (horizon + 1)];
            table[x] = 1.0;
            for t in 0..horizon {
                let (prev, next) = table.split_at_mut((t + 1) * n);
                let prev = &prev[t * n..];
                let next = &mut next[..n];
                for (y, out) in next.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    geom.for_each_neighbor(y, |z, _| acc += prev[z]);
                    *out = acc * w;
                }
            }
            table
        })
        .collect();
    Ok(KernelTable { geom: geom.clone(), roots: roots.to_vec(), horizon, values })
}

/// Orthonormal Dirichlet eigenvectors of the path of `side` vertices:
/// `S[k][x] = sqrt(2/(L+1)) sin(pi (k+1)(x+1)/(L+1))`.
#[derive(Clone, Debug)]
pub struct SineBasis {
    side: usize,
    matrix: Vec<f64>,
    cosines: Vec<f64>,
}

impl SineBasis {
    pub fn new(side: usize) -> Self {
        let l1 = (side + 1) as f64;
        let norm = (2.0 / l1).sqrt();
        let mut matrix = vec![0.0; side * side];
        for k in 0..side {
            for x in 0..side {
                // reduce the angle argument exactly before taking the sine
                let m = ((k + 1) * (x + 1)) % (2 * (side + 1));
                matrix[k * side + x] = norm * (PI * m as f64 / l1).sin();
            }
        }
        let cosines = (0..side).map(|k| (PI * (k + 1) as f64 / l1).cos()).collect();
        Self { side, matrix, cosines }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn at(&self, k: usize, x: usize) -> f64 {
        self.matrix[k * self.side + x]
    }

    /// Row-major `side x side`; the matrix is symmetric.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// `cos(pi (k+1)/(L+1))` per mode.
    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }
}

/// Eigen-decomposition of `2d I - A` on a box.
#[derive(Clone, Debug)]
pub struct Spectrum {
    geom: BoxGeometry,
    bases: Vec<SineBasis>,
}

impl Spectrum {
    pub fn new(geom: &BoxGeometry) -> Self {
        Self {
            geom: geom.clone(),
            bases: geom.sides().iter().map(|&l| SineBasis::new(l)).collect(),
        }
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geom
    }

    pub fn bases(&self) -> &[SineBasis] {
        &self.bases
    }

    /// Eigenvalue of the mode whose multi-index is encoded like a vertex.
    pub fn eigenvalue(&self, mode: usize) -> f64 {
        let d = self.geom.dim();
        let mut lam = 2.0 * d as f64;
        for axis in 0..d {
            lam -= 2.0 * self.bases[axis].cosines()[self.geom.coord(mode, axis)];
        }
        lam
    }

    pub fn green(&self, x: usize, y: usize) -> f64 {
        let d = self.geom.dim();
        let cx = self.geom.coords(x);
        let cy = self.geom.coords(y);
        // per-axis products S[k][x]S[k][y] and cosines, then sum over modes
        let prods: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let b = &self.bases[a];
                (0..b.side()).map(|k| b.at(k, cx[a]) * b.at(k, cy[a])).collect()
            })
            .collect();
        let mut k = vec![0usize; d];
        let mut total = 0.0;
        loop {
            let mut num = 1.0;
            let mut lam = 2.0 * d as f64;
            for a in 0..d {
                num *= prods[a][k[a]];
                lam -= 2.0 * self.bases[a].cosines()[k[a]];
            }
            total += num / lam;
            let mut a = 0;
            loop {
                if a == d {
                    return total;
                }
                k[a] += 1;
                if k[a] < self.geom.sides()[a] {
                    break;
                }
                k[a] = 0;
                a += 1;
            }
        }
    }
}

/// `G(x, y) = (2d I - A)^{-1}(x, y)` on the box.
pub fn green_function(geom: &BoxGeometry, x: usize, y: usize) -> Result<f64> {
    geom.check(x)?;
    geom.check(y)?;
    Ok(Spectrum::new(geom).green(x, y))
}

/// Spectral radius of the killed walk, `(1/d) sum_j cos(pi/(L_j+1))`.
pub fn killed_spectral_radius(geom: &BoxGeometry) -> f64 {
    let d = geom.dim() as f64;
    geom.sides()
        .iter()
        .map(|&l| (PI / (l + 1) as f64).cos())
        .sum::<f64>()
        / d
}

/// `ln(n!)` for `n <= max`.
pub fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=max {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Free-lattice kernel `p_t(0, z)` for `0 <= t <= horizon`.
///
/// Steps are split between axes multinomially; the DP runs over axes and
/// uses the one-dimensional kernel on each.
pub fn free_kernel(z: &[i64], horizon: usize) -> Vec<f64> {
    let d = z.len();
    let lf = ln_factorials(horizon);
    let ln_binom = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
    let one_d = |s: usize, a: i64| -> f64 {
        let a = a.unsigned_abs() as usize;
        if a > s || (s - a) % 2 == 1 {
            return 0.0;
        }
        (ln_binom(s, (s + a) / 2) - s as f64 * std::f64::consts::LN_2).exp()
    };
    let mut g: Vec<f64> = (0..=horizon).map(|t| one_d(t, z[d - 1])).collect();
    for j in (0..d - 1).rev() {
        let m = (d - j) as f64;
        let (lp, lq) = ((1.0 / m).ln(), ((m - 1.0) / m).ln());
        let q: Vec<f64> = (0..=horizon).map(|s| one_d(s, z[j])).collect();
        let next: Vec<f64> = (0..=horizon)
            .map(|t| {
                let mut acc = 0.0;
                for s in 0..=t {
                    if q[s] == 0.0 || g[t - s] == 0.0 {
                        continue;
                    }
                    let w = (ln_binom(t, s) + s as f64 * lp + (t - s) as f64 * lq).exp();
                    acc += w * q[s] * g[t - s];
                }
                acc
            })
            .collect();
        g = next;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbor_counts() {
        let g = BoxGeometry::cube(2, 5).unwrap();
        assert_eq!(g.neighbors(g.center()).unwrap().len(), 4);
        let g = BoxGeometry::cube(2, 3).unwrap();
        assert_eq!(g.neighbors(0).unwrap().len(), 2);
        let g = BoxGeometry::cube(3, 5).unwrap();
        assert_eq!(g.neighbors(g.center()).unwrap().len(), 6);
        assert!(matches!(g.neighbors(125), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn index_roundtrip_and_symmetry() {
        let g = BoxGeometry::new(vec![3, 4, 2]).unwrap();
        assert_eq!(g.len(), 24);
        for v in 0..g.len() {
            assert_eq!(g.index(&g.coords(v)).unwrap(), v);
            assert_eq!(g.from_centered(&g.centered(v)).unwrap(), v);
            for w in g.neighbors(v).unwrap() {
                assert!(g.neighbors(w).unwrap().contains(&v));
                assert_eq!(g.l1(v, w), 1);
                let s = g.slot_of(v, w).unwrap();
                let (a, b) = (v.min(w), v.max(w));
                assert_eq!(s / 3, a);
                assert_eq!(g.slot_target(s), Some(b));
            }
        }
    }

    #[test]
    fn centered_origin() {
        let g = BoxGeometry::cube(3, 5).unwrap();
        assert_eq!(g.centered(g.center()), vec![0, 0, 0]);
        assert_eq!(g.boundary_distance(g.center()), 3);
        assert_eq!(g.boundary_distance(0), 1);
        assert_eq!(BoxGeometry::cube(7, 13).unwrap().default_margin(), 4);
    }

    #[test]
    fn kernel_basics() {
        let g = BoxGeometry::cube(2, 9).unwrap();
        let x = g.center();
        let k = killed_heat_kernel(&g, x, 12).unwrap();
        assert_eq!(k.get(0, 0, x), 1.0);
        assert!((k.get(0, 2, x) - 0.25).abs() < 1e-15);
        for t in 0..=12 {
            let mass: f64 = k.row(0, t).iter().sum();
            if t <= 4 {
                assert!((mass - 1.0).abs() < 1e-12);
            } else {
                assert!(mass < 1.0);
            }
            for y in 0..g.len() {
                if (g.l1(x, y) + t) % 2 == 1 {
                    assert_eq!(k.get(0, t, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn green_small_cases() {
        let g = BoxGeometry::cube(1, 1).unwrap();
        assert!((green_function(&g, 0, 0).unwrap() - 0.5).abs() < 1e-15);
        let g = BoxGeometry::cube(1, 2).unwrap();
        assert!((green_function(&g, 0, 0).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        assert!((green_function(&g, 0, 1).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn free_kernel_small_times() {
        for d in 1..5 {
            let p = free_kernel(&vec![0; d], 4);
            assert_eq!(p[1], 0.0);
            assert!((p[2] - 1.0 / (2 * d) as f64).abs() < 1e-14);
            let dd = d as f64;
            let paths = brute_closed_walks(d, 4) as f64;
            assert!((p[4] - paths / (2.0 * dd).powi(4)).abs() < 1e-14);
        }
        let p = free_kernel(&[1, 1], 2);
        assert!((p[2] - 2.0 / 16.0).abs() < 1e-15);
    }

    fn brute_closed_walks(d: usize, k: usize) -> u64 {
        fn rec(pos: &mut Vec<i64>, left: usize) -> u64 {
            if left == 0 {
                return pos.iter().all(|&x| x == 0) as u64;
            }
            let mut n = 0;
            for a in 0..pos.len() {
                for s in [-1, 1] {
                    pos[a] += s;
                    n += rec(pos, left - 1);
                    pos[a] -= s;
                }
            }
            n
        }
        rec(&mut vec![0; d], k)
    }
}
