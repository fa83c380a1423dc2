//! Deterministic truncated sums behind the loop estimates and the lattice
//! sum bounds, compared against their power-law bound forms.
//!
//! Loop sums use the free-lattice kernel and drop the multiplicity factor
//! (which can only shrink them). Bound constants are unknown, so every
//! check is about the ratio value / bound form staying stable across scales.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::free_kernel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSumReport {
    pub lemma: String,
    pub params: Vec<(String, f64)>,
    pub value: f64,
    /// Largest loop length or lattice radius included.
    pub horizon: usize,
    pub bound_form: String,
    pub bound: f64,
    pub ratio: f64,
    pub note: String,
}

impl TruncatedSumReport {
    fn new(lemma: &str, params: &[(&str, f64)], value: f64, horizon: usize, bound_form: &str, bound: f64, note: &str) -> Self {
        Self {
            lemma: lemma.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            horizon,
            bound_form: bound_form.into(),
            bound,
            ratio: value / bound,
            note: note.into(),
        }
    }
}

const NO_J: &str = "multiplicity dropped (J >= 1 only lowers the loop mass)";

fn norm(z: &[i64]) -> f64 {
    (z.iter().map(|x| (x * x) as f64).sum::<f64>()).sqrt()
}

/// `max(1, |z|)`, used where a bound form would otherwise be singular.
fn norm1(z: &[i64]) -> f64 {
    norm(z).max(1.0)
}

fn diff(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `sum_{k = L}^{K} k^i p_k(0, 0)`, compared with `L^{i + 1 - d/2}`.
pub fn one_point_loop_sum(d: usize, i: u32, l: usize, k_max: usize) -> Result<TruncatedSumReport> {
    if 2 * (i as usize + 1) >= d {
        return Err(Error::pre("one-point sum needs i + 1 < d/2"));
    }
    if k_max < l || l == 0 {
        return Err(Error::pre("need 1 <= L <= K_max"));
    }
    let p = free_kernel(&vec![0; d], k_max);
    let value: f64 = (l..=k_max).map(|k| (k as f64).powi(i as i32) * p[k]).sum();
    let bound = (l as f64).powf(i as f64 + 1.0 - d as f64 / 2.0);
    Ok(TruncatedSumReport::new(
        "2.6",
        &[("d", d as f64), ("i", i as f64), ("L", l as f64)],
        value,
        k_max,
        "L^(i+1-d/2)",
        bound,
        NO_J,
    ))
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    (0..n).map(|k| (0..=k).map(|t| a[t] * b[k - t]).sum()).collect()
}

/// `sum_{k = L}^{K} k^i sum_{t <= k} p_t(u, v) p_{k-t}(v, u)`, compared with
/// `|u-v|^{4+2i-2d}`; the second bound form `L^{1-d/2}|u-v|^{2-d}` is in the
/// note.
pub fn two_point_loop_sum(d: usize, i: u32, u: &[i64], v: &[i64], l: usize, k_max: usize) -> Result<TruncatedSumReport> {
    if u.len() != d || v.len() != d {
        return Err(Error::pre("points must have d coordinates"));
    }
    let uv = diff(v, u);
    let p = free_kernel(&uv, k_max);
    let c = convolve(&p, &p);
    let value: f64 = (l..=k_max).map(|k| (k as f64).powi(i as i32) * c[k]).sum();
    let r = norm1(&uv);
    let bound = r.powf(4.0 + 2.0 * i as f64 - 2.0 * d as f64);
    let alt = (l.max(1) as f64).powf(1.0 - d as f64 / 2.0) * r.powf(2.0 - d as f64);
    Ok(TruncatedSumReport::new(
        "2.8",
        &[("d", d as f64), ("i", i as f64), ("|u-v|", norm(&uv)), ("L", l as f64)],
        value,
        k_max,
        "|u-v|^(4+2i-2d)",
        bound,
        &format!("{NO_J}; ratio to L^(1-d/2)|u-v|^(2-d) = {:.6e}", value / alt),
    ))
}

/// Contribution of loops of length at most `|u-v|^{2(1-kappa)}` through
/// both points, compared with `exp(-|u-v|^{2 kappa} / 4)`.
pub fn small_loop_sum(d: usize, u: &[i64], v: &[i64], kappa: f64) -> Result<TruncatedSumReport> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::pre("kappa must lie in (0, 1)"));
    }
    let uv = diff(v, u);
    let r = norm(&uv);
    let k_top = r.powf(2.0 * (1.0 - kappa)).floor() as usize;
    let p = free_kernel(&uv, k_top);
    let c = convolve(&p, &p);
    let value: f64 = c.iter().sum();
    let bound = (-r.powf(2.0 * kappa) / 4.0).exp();
    Ok(TruncatedSumReport::new(
        "2.10",
        &[("d", d as f64), ("|u-v|", r), ("kappa", kappa)],
        value,
        k_top,
        "exp(-|u-v|^(2 kappa)/4)",
        bound,
        &format!("{NO_J}; reported constant 1"),
    ))
}

/// `sum_{t1 + t2 + t3 <= K} p_{t1}(u,v) p_{t2}(v,w) p_{t3}(w,u)`, compared
/// with `|u-v|^{2-d} |v-w|^{2-d} |w-u|^{2-d}`.
pub fn three_point_loop_sum(d: usize, u: &[i64], v: &[i64], w: &[i64], k_max: usize) -> Result<TruncatedSumReport> {
    if u.len() != d || v.len() != d || w.len() != d {
        return Err(Error::pre("points must have d coordinates"));
    }
    let (a, b, c) = (diff(v, u), diff(w, v), diff(u, w));
    let pa = free_kernel(&a, k_max);
    let pb = free_kernel(&b, k_max);
    let pc = free_kernel(&c, k_max);
    let ab = convolve(&pa, &pb);
    let abc = convolve(&ab, &pc);
    let value: f64 = abc.iter().sum();
    let e = 2.0 - d as f64;
    let bound = norm1(&a).powf(e) * norm1(&b).powf(e) * norm1(&c).powf(e);
    Ok(TruncatedSumReport::new(
        "2.7",
        &[("d", d as f64), ("|u-v|", norm(&a)), ("|v-w|", norm(&b)), ("|w-u|", norm(&c))],
        value,
        k_max,
        "|u-v|^(2-d)|v-w|^(2-d)|w-u|^(2-d)",
        bound,
        NO_J,
    ))
}

/// Number of points of Z^m with squared norm `s`, for `s <= max`.
fn squares_count(m: usize, max: usize) -> Vec<f64> {
    let mut n = vec![0.0; max + 1];
    n[0] = 1.0;
    for _ in 0..m {
        let mut next = vec![0.0; max + 1];
        for (s, &c) in n.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mut a = 0usize;
            while s + a * a <= max {
                next[s + a * a] += if a == 0 { c } else { 2.0 * c };
                a += 1;
            }
        }
        n = next;
    }
    n
}

/// `n^{alpha/2}` with `0^{alpha} := 0`.
fn half_power(n: usize, alpha: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64).powf(alpha / 2.0)
    }
}

fn power_table(max: usize, alpha: f64) -> Vec<f64> {
    (0..=max).map(|n| half_power(n, alpha)).collect()
}

/// `sum_{|z| <= R} |u-z|^{a1} |v-z|^{a2}` in Z^d with `u = 0`, `v = r e_1`.
pub fn lattice_sum_check(d: usize, alpha1: f64, alpha2: f64, r: i64, big_r: usize) -> Result<TruncatedSumReport> {
    if alpha1 > 0.0 || alpha2 > 0.0 || alpha1 + alpha2 >= -(d as f64) {
        return Err(Error::pre("need alpha1, alpha2 <= 0 and alpha1 + alpha2 < -d"));
    }
    let lo = alpha1.min(alpha2);
    let dist = (r.abs() as f64).max(1.0);
    let (form, bound) = if lo > -(d as f64) {
        ("|u-v|^(a1+a2+d)", dist.powf(alpha1 + alpha2 + d as f64))
    } else if lo < -(d as f64) {
        ("|u-v|^max(a1,a2)", dist.powf(alpha1.max(alpha2)))
    } else {
        return Err(Error::pre("min(alpha1, alpha2) = -d is not covered"));
    };
    let r2 = big_r * big_r;
    let counts = squares_count(d - 1, r2);
    let mut value = 0.0;
    let rr = big_r as i64;
    for x in -rr..=rr {
        let x2 = (x * x) as usize;
        let y2 = ((x - r) * (x - r)) as usize;
        for (s, &c) in counts.iter().enumerate().take(r2 - x2 + 1) {
            if c != 0.0 {
                value += c * half_power(x2 + s, alpha1) * half_power(y2 + s, alpha2);
            }
        }
    }
    Ok(TruncatedSumReport::new(
        "8.1",
        &[("d", d as f64), ("alpha1", alpha1), ("alpha2", alpha2), ("|u-v|", r.abs() as f64), ("R", big_r as f64)],
        value,
        big_r,
        form,
        bound,
        "|0|^(-k) := 0",
    ))
}

/// Counts of `(y1, y2) in Z^m x Z^m` by `(|y1|^2, |y2|^2, y1.y2)` with both
/// squared norms at most `max`. Rows are indexed by `(A, B)` and hold
/// `C in [-floor(sqrt(AB)), floor(sqrt(AB))]`.
pub struct PairCounts {
    max: usize,
    offsets: Vec<usize>,
    half: Vec<usize>,
    values: Vec<f64>,
}

impl PairCounts {
    pub fn new(m: usize, max: usize) -> Self {
        let side = max + 1;
        let mut offsets = vec![0usize; side * side + 1];
        let mut half = vec![0usize; side * side];
        for a in 0..side {
            for b in 0..side {
                let h = ((a * b) as f64).sqrt().floor() as usize;
                // guard against rounding in the square root
                let h = if (h + 1) * (h + 1) <= a * b { h + 1 } else if h * h > a * b { h - 1 } else { h };
                half[a * side + b] = h;
                offsets[a * side + b + 1] = offsets[a * side + b] + 2 * h + 1;
            }
        }
        let total = offsets[side * side];
        let mut values = vec![0.0; total];
        values[offsets[0]] = 1.0;
        let mut live = vec![false; side * side];
        live[0] = true;
        let root = (max as f64).sqrt().floor() as usize;
        for _ in 0..m {
            let mut next = vec![0.0; total];
            let mut next_live = vec![false; side * side];
            for a in 0..side {
                for b in 0..side {
                    let row = a * side + b;
                    if !live[row] {
                        continue;
                    }
                    let h = half[row] as i64;
                    let src = &values[offsets[row]..offsets[row + 1]];
                    for p in 0..=root {
                        let a2 = a + p * p;
                        if a2 > max {
                            break;
                        }
                        for q in 0..=root {
                            let b2 = b + q * q;
                            if b2 > max {
                                break;
                            }
                            let trow = a2 * side + b2;
                            next_live[trow] = true;
                            let th = half[trow] as i64;
                            let base = offsets[trow];
                            let shift = (p * q) as i64;
                            let dst = &mut next[base..offsets[trow + 1]];
                            let signs = if p == 0 && q == 0 { 1.0 } else { 2.0 };
                            if shift == 0 {
                                let start = (th - h) as usize;
                                for (dv, &sv) in dst[start..start + src.len()].iter_mut().zip(src) {
                                    *dv += signs * sv;
                                }
                            } else {
                                for s in [shift, -shift] {
                                    let start = (th - h + s) as usize;
                                    for (dv, &sv) in dst[start..start + src.len()].iter_mut().zip(src) {
                                        *dv += 2.0 * sv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            values = next;
            live = next_live;
        }
        Self { max, offsets, half, values }
    }

    /// Entries `(C, count)` of row `(A, B)`.
    pub fn row(&self, a: usize, b: usize) -> impl Iterator<Item = (i64, f64)> + '_ {
        let side = self.max + 1;
        let idx = a * side + b;
        let h = self.half[idx] as i64;
        self.values[self.offsets[idx]..self.offsets[idx + 1]]
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i as i64 - h, c))
    }
}

/// Tables shared by all double lattice sums with the same `(d, R, alpha3)`.
pub struct DoubleSumTables {
    d: usize,
    big_r: usize,
    alpha3: f64,
    /// `s3[(A * side + B) * (2R + 1) + delta]`:
    /// `sum_C N(A, B, C) |delta^2 + A + B - 2C|^{alpha3/2}`.
    s3: Vec<f64>,
    live: Vec<bool>,
}

impl DoubleSumTables {
    pub fn new(d: usize, alpha3: f64, big_r: usize) -> Self {
        let max = big_r * big_r;
        let counts = PairCounts::new(d - 1, max);
        let side = max + 1;
        let deltas = 2 * big_r + 1;
        let t3 = power_table(8 * max + 1, alpha3);
        let mut s3 = vec![0.0; side * side * deltas];
        let mut live = vec![false; side * side];
        for a in 0..side {
            for b in 0..side {
                let row: Vec<(i64, f64)> = counts.row(a, b).filter(|&(_, n)| n != 0.0).collect();
                if row.is_empty() {
                    continue;
                }
                live[a * side + b] = true;
                for delta in 0..deltas {
                    let base = (delta * delta + a + b) as i64;
                    let mut acc = 0.0;
                    for &(c, n) in &row {
                        acc += n * t3[(base - 2 * c) as usize];
                    }
                    s3[(a * side + b) * deltas + delta] = acc;
                }
            }
        }
        Self { d, big_r, alpha3, s3, live }
    }

    /// `sum_{|z1|, |z2| <= R, |z1| >= k_min} |u-z1|^{a1} |v-z2|^{a2} |z1-z2|^{a3}`
    /// with `u = 0`, `v = r e_1`.
    pub fn sum(&self, alpha1: f64, alpha2: f64, r: i64, k_min: usize) -> f64 {
        let big_r = self.big_r as i64;
        let max = self.big_r * self.big_r;
        let side = max + 1;
        let deltas = 2 * self.big_r + 1;
        let reach = (big_r + r.abs()) as usize;
        let t1 = power_table(max, alpha1);
        let t2 = power_table(reach * reach + max, alpha2);
        let mut total = 0.0;
        for a in 0..side {
            for b in 0..side {
                if !self.live[a * side + b] {
                    continue;
                }
                let s = &self.s3[(a * side + b) * deltas..(a * side + b + 1) * deltas];
                for x1 in -big_r..=big_r {
                    let n1 = (x1 * x1) as usize + a;
                    if n1 > max || n1 < k_min * k_min {
                        continue;
                    }
                    let w1 = t1[n1];
                    if w1 == 0.0 {
                        continue;
                    }
                    for x2 in -big_r..=big_r {
                        if (x2 * x2) as usize + b > max {
                            continue;
                        }
                        let n2 = ((x2 - r) * (x2 - r)) as usize + b;
                        total += w1 * t2[n2] * s[(x1 - x2).unsigned_abs() as usize];
                    }
                }
            }
        }
        total
    }
}

fn check_double_hypotheses(d: usize, a1: f64, a2: f64, a3: f64) -> Result<()> {
    let df = d as f64;
    let ok = a1 <= 0.0
        && a2 <= 0.0
        && a3 <= 0.0
        && a1.min(a2).min(a3) > -df
        && ((-2.0 * df < a2 + a3 && a2 + a3 < -df) || (-2.0 * df < a1 + a3 && a1 + a3 < -df))
        && a1 + a2 + a3 < -2.0 * df;
    if ok {
        Ok(())
    } else {
        Err(Error::pre("exponents violate the double-sum hypotheses"))
    }
}

/// Double lattice sum with `u = 0`, `v = r e_1`, compared with
/// `|u-v|^{a1+a2+a3+2d}`.
pub fn double_lattice_sum_check(tables: &DoubleSumTables, alpha1: f64, alpha2: f64, r: i64) -> Result<TruncatedSumReport> {
    check_double_hypotheses(tables.d, alpha1, alpha2, tables.alpha3)?;
    let value = tables.sum(alpha1, alpha2, r, 0);
    let e = alpha1 + alpha2 + tables.alpha3 + 2.0 * tables.d as f64;
    let bound = (r.abs() as f64).max(1.0).powf(e);
    Ok(TruncatedSumReport::new(
        "8.2",
        &[
            ("d", tables.d as f64),
            ("alpha1", alpha1),
            ("alpha2", alpha2),
            ("alpha3", tables.alpha3),
            ("|u-v|", r.abs() as f64),
            ("R", tables.big_r as f64),
        ],
        value,
        tables.big_r,
        "|u-v|^(a1+a2+a3+2d)",
        bound,
        "|0|^(-k) := 0",
    ))
}

/// `sum_{|z1| >= K} |z1|^{a1} |z2|^{a2} |z1-z2|^{a3}` (both points at 0),
/// compared with `K^{a1+a2+a3+2d}`.
pub fn restricted_double_sum(tables: &DoubleSumTables, alpha1: f64, alpha2: f64, k: usize) -> Result<TruncatedSumReport> {
    check_double_hypotheses(tables.d, alpha1, alpha2, tables.alpha3)?;
    let value = tables.sum(alpha1, alpha2, 0, k);
    let e = alpha1 + alpha2 + tables.alpha3 + 2.0 * tables.d as f64;
    Ok(TruncatedSumReport::new(
        "8.2-tail",
        &[("d", tables.d as f64), ("K", k as f64), ("R", tables.big_r as f64)],
        value,
        tables.big_r,
        "K^(a1+a2+a3+2d)",
        (k.max(1) as f64).powf(e),
        "|0|^(-k) := 0",
    ))
}

/// Outcome of one ratio-stability criterion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub reports: Vec<TruncatedSumReport>,
}

fn spread(reports: &[TruncatedSumReport]) -> f64 {
    let max = reports.iter().map(|r| r.ratio).fold(f64::MIN, f64::max);
    let min = reports.iter().map(|r| r.ratio).fold(f64::MAX, f64::min);
    max / min
}

fn e1(d: usize, r: i64) -> Vec<i64> {
    let mut v = vec![0; d];
    v[0] = r;
    v
}

fn point(d: usize, head: &[i64]) -> Vec<i64> {
    let mut v = vec![0; d];
    v[..head.len()].copy_from_slice(head);
    v
}

/// Kernel horizon for the loop-sum checks.
pub const LOOP_HORIZON: usize = 4096;

pub fn check_one_point() -> Result<LemmaCheck> {
    let reports = [4, 8, 16, 32]
        .iter()
        .map(|&l| one_point_loop_sum(8, 0, l, LOOP_HORIZON))
        .collect::<Result<Vec<_>>>()?;
    let s = spread(&reports);
    let monotone = reports.windows(2).all(|w| w[1].value <= w[0].value);
    Ok(LemmaCheck {
        name: "one-point loop sum, d=8, L in {4,8,16,32}".into(),
        passed: s < 3.0 && monotone,
        detail: format!("ratio spread {s:.3} (limit 3), nonincreasing in L: {monotone}"),
        reports,
    })
}

/// The point of `Z^d` with `|z| = r` whose coordinates are as equal as
/// possible: smallest largest coordinate, then largest support.
pub fn spread_point(d: usize, r: i64) -> Option<Vec<i64>> {
    fn go(d: usize, left: i64, cap: i64, cur: &mut Vec<i64>, best: &mut Option<Vec<i64>>) {
        if left == 0 {
            let mut z = cur.clone();
            z.resize(d, 0);
            let key = |z: &Vec<i64>| (z[0], std::cmp::Reverse(z.iter().filter(|&&x| x != 0).count()));
            if best.as_ref().is_none_or(|b| key(&z) < key(b)) {
                *best = Some(z);
            }
            return;
        }
        if cur.len() == d {
            return;
        }
        for x in (1..=cap.min(left.isqrt())).rev() {
            cur.push(x);
            go(d, left - x * x, x, cur, best);
            cur.pop();
        }
    }
    let mut best = None;
    go(d, r * r, r, &mut Vec::new(), &mut best);
    best
}

pub fn check_two_point() -> Result<LemmaCheck> {
    let d = 8;
    let grid = [2, 3, 4, 6];
    let reports = grid
        .iter()
        .map(|&r| two_point_loop_sum(d, 0, &vec![0; d], &e1(d, r), 1, LOOP_HORIZON))
        .collect::<Result<Vec<_>>>()?;
    let s = spread(&reports);
    let spread_out = grid
        .iter()
        .filter_map(|&r| spread_point(d, r))
        .map(|v| two_point_loop_sum(d, 0, &vec![0; d], &v, 1, LOOP_HORIZON))
        .collect::<Result<Vec<_>>>()?;
    Ok(LemmaCheck {
        name: "two-point loop sum, d=8, |u-v| in {2,3,4,6}".into(),
        passed: s < 5.0,
        detail: format!(
            "ratio spread {s:.3} along an axis (limit 5); with coordinates spread evenly: {:.3} (not asserted)",
            spread(&spread_out)
        ),
        reports,
    })
}

pub fn check_small_loops() -> Result<LemmaCheck> {
    let d = 8;
    let rep = small_loop_sum(d, &vec![0; d], &e1(d, 8), 0.5)?;
    Ok(LemmaCheck {
        name: "short loops through distant points, d=8, |u-v|=8, kappa=1/2".into(),
        passed: rep.value < rep.bound,
        detail: format!("value {:.3e} against exp(-2) = {:.3e}", rep.value, rep.bound),
        reports: vec![rep],
    })
}

pub fn three_point_configs(d: usize) -> Vec<[Vec<i64>; 3]> {
    let o = vec![0; d];
    vec![
        [o.clone(), point(d, &[2]), point(d, &[0, 2])],
        [o.clone(), point(d, &[2]), point(d, &[1, 1, 1, 1])],
        [o.clone(), point(d, &[3]), point(d, &[1, 3])],
        [o.clone(), point(d, &[4]), point(d, &[2, 3])],
        [o, point(d, &[2, 2]), point(d, &[0, 2, 2])],
    ]
}

pub fn check_three_point() -> Result<LemmaCheck> {
    let d = 8;
    let horizon = 2048;
    let mut reports = Vec::new();
    let mut symmetric = true;
    for [u, v, w] in three_point_configs(d) {
        let a = three_point_loop_sum(d, &u, &v, &w, horizon)?;
        let b = three_point_loop_sum(d, &v, &w, &u, horizon)?;
        symmetric &= ((a.value - b.value) / a.value).abs() < 1e-12;
        reports.push(a);
    }
    let s = spread(&reports);
    Ok(LemmaCheck {
        name: "three-point loop sum, d=8, five configurations".into(),
        passed: s < 10.0 && symmetric,
        detail: format!("ratio spread {s:.3} (limit 10), cyclic symmetry: {symmetric}"),
        reports,
    })
}

pub fn check_lattice_sum() -> Result<LemmaCheck> {
    let (d, a) = (7, -5.0);
    let mut reports = [2, 4, 8]
        .iter()
        .map(|&r| lattice_sum_check(d, a, a, r, 20))
        .collect::<Result<Vec<_>>>()?;
    let s = spread(&reports);
    let wide = lattice_sum_check(d, a, a, 2, 40)?;
    let inc = (wide.value - reports[0].value) / reports[0].value;
    let grows = wide.value >= reports[0].value;
    reports.push(wide);
    Ok(LemmaCheck {
        name: "single lattice sum, d=7, alpha=-5, |u-v| in {2,4,8}, R=20".into(),
        passed: s < 5.0 && grows && inc < 1e-3,
        detail: format!("ratio spread {s:.3} (limit 5); relative increase R=20 -> 40 at |u-v|=2: {inc:.3e} (limit 1e-3)"),
        reports,
    })
}

pub fn check_double_lattice_sum() -> Result<LemmaCheck> {
    let d = 21;
    let (a1, a3) = (8.0 - d as f64, 2.0 - d as f64);
    let tables = DoubleSumTables::new(d, a3, 16);
    let mut reports = [2, 4]
        .iter()
        .map(|&r| double_lattice_sum_check(&tables, a1, a1, r))
        .collect::<Result<Vec<_>>>()?;
    let s = spread(&reports);
    let wider = [1, 3, 6, 8]
        .iter()
        .map(|&r| double_lattice_sum_check(&tables, a1, a1, r).map(|rep| format!("{r}:{:.3e}", rep.ratio)))
        .collect::<Result<Vec<_>>>()?
        .join(" ");
    let tails = [4, 8, 16]
        .iter()
        .map(|&k| restricted_double_sum(&tables, a1, a1, k))
        .collect::<Result<Vec<_>>>()?;
    let decreasing = tails.windows(2).all(|w| w[1].value < w[0].value);
    reports.extend(tails);
    Ok(LemmaCheck {
        name: "double lattice sum, d=21, alphas (-13,-13,-19), |u-v| in {2,4}, R=16".into(),
        passed: s < 10.0 && decreasing,
        detail: format!(
            "ratio spread {s:.3} (limit 10); restricted sums strictly decreasing in K: {decreasing}; ratios at other |u-v| {wider} (not asserted)"
        ),
        reports,
    })
}

/// All ratio-stability checks.
pub fn lemma_suite() -> Result<Vec<LemmaCheck>> {
    Ok(vec![
        check_one_point()?,
        check_two_point()?,
        check_small_loops()?,
        check_three_point()?,
        check_lattice_sum()?,
        check_double_lattice_sum()?,
    ])
}

pub fn report_table(reports: &[TruncatedSumReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<9} {:<48} {:>14} {:>8} {:>14}  bound form", "lemma", "parameters", "value", "horizon", "ratio");
    for r in reports {
        let params = r
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(out, "{:<9} {:<48} {:>14.6e} {:>8} {:>14.6e}  {}", r.lemma, params, r.value, r.horizon, r.ratio, r.bound_form);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_base_case() {
        for d in [3, 5, 8] {
            let r = one_point_loop_sum(d, 0, 2, 2).unwrap();
            assert!((r.value - 1.0 / (2 * d) as f64).abs() < 1e-15);
        }
        assert!(one_point_loop_sum(4, 1, 2, 10).is_err());
        assert!(one_point_loop_sum(8, 0, 10, 4).is_err());
    }

    #[test]
    fn one_point_nonincreasing_in_l() {
        let vals: Vec<f64> = (2..20).map(|l| one_point_loop_sum(6, 0, l, 200).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn coincident_points() {
        let d = 5;
        let o = vec![0; d];
        let two = two_point_loop_sum(d, 0, &o, &o, 2, 200).unwrap();
        let one = one_point_loop_sum(d, 0, 2, 200).unwrap();
        assert!(two.value >= 2.0 * one.value);
        let v = point(d, &[2]);
        let three = three_point_loop_sum(d, &o, &v, &v, 200).unwrap();
        let pair = two_point_loop_sum(d, 0, &o, &v, 0, 200).unwrap();
        assert!(three.value >= pair.value);
    }

    #[test]
    fn three_point_cyclic_symmetry() {
        let d = 6;
        let [u, v, w] = three_point_configs(d).swap_remove(3);
        let a = three_point_loop_sum(d, &u, &v, &w, 300).unwrap().value;
        let b = three_point_loop_sum(d, &v, &w, &u, 300).unwrap().value;
        let c = three_point_loop_sum(d, &w, &u, &v, 300).unwrap().value;
        assert!(((a - b) / a).abs() < 1e-12 && ((a - c) / a).abs() < 1e-12);
    }

    #[test]
    fn lattice_sum_matches_brute_force() {
        // d = 3, small radius: direct enumeration
        let (d, a1, a2, r, big_r) = (3usize, -2.0, -1.5, 2i64, 6usize);
        let rep = lattice_sum_check(d, a1, a2, r, big_r).unwrap();
        let mut brute = 0.0;
        let rr = big_r as i64;
        for x in -rr..=rr {
            for y in -rr..=rr {
                for z in -rr..=rr {
                    if x * x + y * y + z * z > rr * rr {
                        continue;
                    }
                    let n1 = (x * x + y * y + z * z) as usize;
                    let n2 = ((x - r) * (x - r) + y * y + z * z) as usize;
                    brute += half_power(n1, a1) * half_power(n2, a2);
                }
            }
        }
        assert!(((rep.value - brute) / brute).abs() < 1e-12);
        assert!(lattice_sum_check(3, -1.0, -1.0, 2, 5).is_err());
        assert!(lattice_sum_check(3, 1.0, -5.0, 2, 5).is_err());
        assert!(lattice_sum_check(3, -3.0, -1.0, 2, 5).is_err());
    }

    #[test]
    fn double_sum_matches_brute_force() {
        let (d, a1, a2, a3, big_r) = (2usize, -0.5, -0.5, -1.0, 3usize);
        let tables = DoubleSumTables::new(d, a3, big_r);
        let rr = big_r as i64;
        let pts: Vec<(i64, i64)> = (-rr..=rr)
            .flat_map(|x| (-rr..=rr).map(move |y| (x, y)))
            .filter(|&(x, y)| x * x + y * y <= rr * rr)
            .collect();
        for (r, k) in [(0i64, 0usize), (1, 0), (2, 0), (0, 2)] {
            let mut brute = 0.0;
            for &(x1, y1) in &pts {
                if ((x1 * x1 + y1 * y1) as usize) < k * k {
                    continue;
                }
                for &(x2, y2) in &pts {
                    let n1 = (x1 * x1 + y1 * y1) as usize;
                    let n2 = ((x2 - r) * (x2 - r) + y2 * y2) as usize;
                    let n3 = ((x1 - x2) * (x1 - x2) + (y1 - y2) * (y1 - y2)) as usize;
                    brute += half_power(n1, a1) * half_power(n2, a2) * half_power(n3, a3);
                }
            }
            let v = tables.sum(a1, a2, r, k);
            assert!(((v - brute) / brute).abs() < 1e-12, "r={r} k={k}: {v} vs {brute}");
        }
    }

    #[test]
    fn double_sum_multi_coordinate_brute_force() {
        let (d, a1, a2, a3, big_r) = (4usize, -1.5, -1.0, -2.5, 2usize);
        let tables = DoubleSumTables::new(d, a3, big_r);
        let rr = big_r as i64;
        let mut pts = Vec::new();
        for a in -rr..=rr {
            for b in -rr..=rr {
                for c in -rr..=rr {
                    for e in -rr..=rr {
                        if a * a + b * b + c * c + e * e <= rr * rr {
                            pts.push([a, b, c, e]);
                        }
                    }
                }
            }
        }
        let sq = |z: [i64; 4]| z.iter().map(|x| x * x).sum::<i64>() as usize;
        for r in [0i64, 1, 3] {
            let mut brute = 0.0;
            for &z1 in &pts {
                for &z2 in &pts {
                    let n1 = sq(z1);
                    let n2 = sq([z2[0] - r, z2[1], z2[2], z2[3]]);
                    let n3 = sq([z1[0] - z2[0], z1[1] - z2[1], z1[2] - z2[2], z1[3] - z2[3]]);
                    brute += half_power(n1, a1) * half_power(n2, a2) * half_power(n3, a3);
                }
            }
            let v = tables.sum(a1, a2, r, 0);
            assert!(((v - brute) / brute).abs() < 1e-12, "r={r}: {v} vs {brute}");
        }
    }

    #[test]
    fn spread_points() {
        assert_eq!(spread_point(8, 2).unwrap(), vec![1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(spread_point(8, 3).unwrap(), vec![2, 1, 1, 1, 1, 1, 0, 0]);
        assert_eq!(spread_point(2, 3).unwrap(), vec![3, 0]);
        for r in [2, 3, 4, 6] {
            let z = spread_point(8, r).unwrap();
            assert_eq!(z.iter().map(|x| x * x).sum::<i64>(), r * r);
        }
    }

    #[test]
    fn double_sum_hypotheses() {
        let tables = DoubleSumTables::new(3, -1.0, 2);
        assert!(double_lattice_sum_check(&tables, -1.0, -1.0, 1).is_err());
    }

    #[test]
    fn pair_counts_total() {
        // every pair with both squared norms <= 4 in Z^2 is counted once
        let c = PairCounts::new(2, 4);
        let total: f64 = (0..=4).flat_map(|a| (0..=4).map(move |b| (a, b))).map(|(a, b)| c.row(a, b).map(|(_, n)| n).sum::<f64>()).sum();
        let per = (-2i64..=2).flat_map(|x| (-2i64..=2).map(move |y| x * x + y * y)).filter(|&s| s <= 4).count();
        assert_eq!(total, (per * per) as f64);
    }

    #[test]
    fn table_renders() {
        let r = one_point_loop_sum(8, 0, 4, 64).unwrap();
        let t = report_table(&[r]);
        assert!(t.contains("2.6"));
    }
}
