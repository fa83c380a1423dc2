//! Discrete Gaussian free field on a box and its cable-graph sign clusters.
//!
//! Covariance is `(2d I - A)^{-1}`. An edge whose endpoints are both
//! positive is open (the bridge inside it stays positive) with probability
//! `1 - exp(-2ab)`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, SineBasis, Spectrum};
use crate::rng::{EdgeCoins, Purpose, Streams};

#[derive(Clone, Debug)]
pub struct GffSample {
    pub geom: BoxGeometry,
    pub values: Vec<f64>,
    pub seed: u64,
    pub sample: u64,
}

impl GffSample {
    /// Global sign flip; the law of the field is invariant under it.
    pub fn negate(&mut self) {
        for v in &mut self.values {
            *v = -*v;
        }
    }
}

/// Columns processed together when transforming along a strided axis.
const CHUNK: usize = 512;

fn transform_axis(data: &mut [f64], geom: &BoxGeometry, axis: usize, basis: &SineBasis) {
    let l = geom.sides()[axis];
    let s = geom.strides()[axis];
    let m = basis.matrix();
    if l <= 1 {
        if l == 1 {
            let c = m[0];
            data.iter_mut().for_each(|x| *x *= c);
        }
        return;
    }
    if s == 1 {
        let mut tmp = vec![0.0; l];
        for block in data.chunks_exact_mut(l) {
            for (k, t) in tmp.iter_mut().enumerate() {
                let row = &m[k * l..(k + 1) * l];
                *t = row.iter().zip(block.iter()).map(|(a, b)| a * b).sum();
            }
            block.copy_from_slice(&tmp);
        }
        return;
    }
    let mut tmp = vec![0.0; l * CHUNK.min(s)];
    for block in data.chunks_exact_mut(l * s) {
        let mut c0 = 0;
        while c0 < s {
            let w = CHUNK.min(s - c0);
            let tmp = &mut tmp[..l * w];
            tmp.iter_mut().for_each(|t| *t = 0.0);
            for x in 0..l {
                let src = &block[x * s + c0..x * s + c0 + w];
                for k in 0..l {
                    let c = m[k * l + x];
                    let dst = &mut tmp[k * w..(k + 1) * w];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d += c * v;
                    }
                }
            }
            for k in 0..l {
                block[k * s + c0..k * s + c0 + w].copy_from_slice(&tmp[k * w..(k + 1) * w]);
            }
            c0 += w;
        }
    }
}

/// Map independent standard normals (one per mode) to the field:
/// scale by `lambda^{-1/2}` and apply the sine transform on every axis.
pub fn spectral_apply(spectrum: &Spectrum, xi: &mut [f64]) {
    let geom = spectrum.geometry();
    let d = geom.dim();
    if geom.is_empty() {
        return;
    }
    assert_eq!(xi.len(), geom.len());
    // odometer over modes keeps the eigenvalue update cheap
    let sides = geom.sides();
    let mut k = vec![0usize; d];
    let cos: Vec<&[f64]> = spectrum.bases().iter().map(|b| b.cosines()).collect();
    let mut partial = 2.0 * d as f64 - cos.iter().map(|c| 2.0 * c[0]).sum::<f64>();
    for x in xi.iter_mut() {
        *x /= partial.sqrt();
        let mut a = 0;
        while a < d {
            let old = cos[a][k[a]];
            k[a] += 1;
            if k[a] < sides[a] {
                partial += 2.0 * (old - cos[a][k[a]]);
                break;
            }
            k[a] = 0;
            partial += 2.0 * (old - cos[a][0]);
            a += 1;
        }
        // recompute occasionally to keep rounding from drifting
        if a > 0 {
            partial = 2.0 * d as f64 - (0..d).map(|j| 2.0 * cos[j][k[j]]).sum::<f64>();
        }
    }
    for (axis, basis) in spectrum.bases().iter().enumerate() {
        transform_axis(xi, geom, axis, basis);
    }
}

/// Exact sample of the Dirichlet GFF on the box.
pub fn sample_dgff(geom: &BoxGeometry, streams: &Streams, sample: u64) -> GffSample {
    let spectrum = Spectrum::new(geom);
    sample_dgff_with(&spectrum, streams, sample)
}

pub fn sample_dgff_with(spectrum: &Spectrum, streams: &Streams, sample: u64) -> GffSample {
    let geom = spectrum.geometry();
    let mut rng = streams.rng(sample, Purpose::Field);
    let mut values: Vec<f64> = (0..geom.len()).map(|_| rng.sample(StandardNormal)).collect();
    spectral_apply(spectrum, &mut values);
    GffSample { geom: geom.clone(), values, seed: streams.seed(), sample }
}

/// Probability that the cable bridge across an edge with endpoint values
/// `a`, `b` has no zero.
#[inline]
pub fn open_edge_prob(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        -(-2.0 * a * b).exp_m1()
    }
}

/// Probability that a Brownian bridge from `a` to `b` with variance rate
/// `sigma2` on `[0, t]` has no zero.
pub fn bridge_positivity(a: f64, b: f64, sigma2: f64, t: f64) -> Result<f64> {
    if !(sigma2 > 0.0) || !(t > 0.0) {
        return Err(Error::pre("variance rate and interval length must be positive"));
    }
    if a <= 0.0 || b <= 0.0 {
        return Ok(0.0);
    }
    Ok(-(-2.0 * a * b / (sigma2 * t)).exp_m1())
}

/// One bit per edge slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeConfig {
    pub geom: BoxGeometry,
    bits: Vec<u64>,
    pub seed: u64,
    pub sample: u64,
}

impl EdgeConfig {
    pub fn empty(geom: &BoxGeometry) -> Self {
        Self {
            geom: geom.clone(),
            bits: vec![0; geom.edge_slots().div_ceil(64)],
            seed: 0,
            sample: 0,
        }
    }

    /// Every in-box edge open.
    pub fn full(geom: &BoxGeometry) -> Self {
        let mut c = Self::empty(geom);
        for slot in 0..geom.edge_slots() {
            if geom.slot_target(slot).is_some() {
                c.set(slot, true);
            }
        }
        c
    }

    #[inline]
    pub fn is_open(&self, slot: usize) -> bool {
        self.bits[slot >> 6] >> (slot & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, slot: usize, open: bool) {
        let mask = 1u64 << (slot & 63);
        if open {
            self.bits[slot >> 6] |= mask;
        } else {
            self.bits[slot >> 6] &= !mask;
        }
    }

    pub fn open_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn open_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(i * 64 + b)
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }
}

/// Source of edge states that can be queried one slot at a time.
pub trait OpenEdges {
    fn geometry(&self) -> &BoxGeometry;
    fn is_open(&mut self, slot: usize) -> bool;
}

impl OpenEdges for EdgeConfig {
    fn geometry(&self) -> &BoxGeometry {
        &self.geom
    }

    fn is_open(&mut self, slot: usize) -> bool {
        EdgeConfig::is_open(self, slot)
    }
}

impl OpenEdges for &EdgeConfig {
    fn geometry(&self) -> &BoxGeometry {
        &self.geom
    }

    fn is_open(&mut self, slot: usize) -> bool {
        EdgeConfig::is_open(self, slot)
    }
}

/// Edge states of a field resolved on demand; identical to the states
/// `sample_cable_clusters` would produce for the same sample.
pub struct LazyCableEdges<'a> {
    field: &'a GffSample,
    coins: EdgeCoins,
}

impl<'a> LazyCableEdges<'a> {
    pub fn new(field: &'a GffSample, streams: &Streams) -> Self {
        Self { field, coins: streams.edge_coins(field.sample) }
    }
}

impl OpenEdges for LazyCableEdges<'_> {
    fn geometry(&self) -> &BoxGeometry {
        &self.field.geom
    }

    fn is_open(&mut self, slot: usize) -> bool {
        let g = &self.field.geom;
        let Some(b) = g.slot_target(slot) else { return false };
        let a = slot / g.dim();
        let (x, y) = (self.field.values[a], self.field.values[b]);
        if x <= 0.0 || y <= 0.0 {
            return false;
        }
        self.coins.coin(slot) < open_edge_prob(x, y)
    }
}

/// Open each positive-positive edge independently with `open_edge_prob`.
pub fn sample_cable_clusters(field: &GffSample, streams: &Streams) -> EdgeConfig {
    let g = &field.geom;
    let d = g.dim();
    let mut config = EdgeConfig::empty(g);
    config.seed = field.seed;
    config.sample = field.sample;
    let mut coins = streams.edge_coins(field.sample);
    const BLOCK: usize = 1 << 14;
    let mut buf = vec![0.0; BLOCK];
    let slots = g.edge_slots();
    let mut start = 0;
    while start < slots {
        let end = (start + BLOCK).min(slots);
        let mut filled = false;
        for slot in start..end {
            let a = slot / d;
            let x = field.values[a];
            if x <= 0.0 {
                continue;
            }
            let Some(b) = g.slot_target(slot) else { continue };
            let y = field.values[b];
            if y <= 0.0 {
                continue;
            }
            if !filled {
                coins.fill(start, &mut buf[..end - start]);
                filled = true;
            }
            if buf[slot - start] < open_edge_prob(x, y) {
                config.set(slot, true);
            }
        }
        start = end;
    }
    config
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProbEstimate {
    pub p: f64,
    pub stderr: f64,
    pub hits: u64,
    pub trials: u64,
}

impl ProbEstimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self { p, stderr: (p * (1.0 - p) / trials as f64).sqrt(), hits, trials }
    }
}

/// Split one unit-conductance edge into `m` pieces of conductance `m`,
/// sample the field on the `m - 1` new vertices given the endpoint values,
/// and count how often all of them are positive.
pub fn refinement_oracle<R: Rng + ?Sized>(
    m: usize,
    a: f64,
    b: f64,
    trials: u64,
    rng: &mut R,
) -> Result<ProbEstimate> {
    if m < 2 {
        return Err(Error::pre("refinement needs m >= 2"));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::pre("endpoint values must be positive"));
    }
    if trials == 0 {
        return Err(Error::pre("trials must be positive"));
    }
    let n = m - 1;
    // precision m * tridiag(-1, 2, -1) = L L^T with L lower bidiagonal
    let mut diag = vec![0.0; n];
    let mut sub = vec![0.0; n];
    let mf = m as f64;
    for i in 0..n {
        let d2 = 2.0 * mf - if i > 0 { sub[i] * sub[i] } else { 0.0 };
        diag[i] = d2.sqrt();
        if i + 1 < n {
            sub[i + 1] = -mf / diag[i];
        }
    }
    let mean: Vec<f64> = (1..m).map(|i| a + (b - a) * i as f64 / mf).collect();
    let mut z = vec![0.0; n];
    let mut hits = 0u64;
    for _ in 0..trials {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        // back substitution for L^T x = z gives x ~ N(0, Q^{-1})
        let mut ok = true;
        let mut next = 0.0;
        for i in (0..n).rev() {
            let up = if i + 1 < n { sub[i + 1] * next } else { 0.0 };
            let x = (z[i] - up) / diag[i];
            next = x;
            if mean[i] + x <= 0.0 {
                ok = false;
            }
        }
        hits += ok as u64;
    }
    Ok(ProbEstimate::from_counts(hits, trials))
}

fn write_header(w: &mut impl Write, magic: &[u8; 4], geom: &BoxGeometry, seed: u64, sample: u64) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(geom.dim() as u32).to_le_bytes())?;
    for &l in geom.sides() {
        w.write_all(&(l as u32).to_le_bytes())?;
    }
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&sample.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<(BoxGeometry, u64, u64)> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!("expected magic {:?}", String::from_utf8_lossy(magic))));
    }
    let d = read_u32(r)? as usize;
    if d == 0 || d > 64 {
        return Err(Error::Format(format!("implausible dimension {d}")));
    }
    let sides = (0..d).map(|_| read_u32(r).map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
    let geom = BoxGeometry::new(sides)?;
    Ok((geom, read_u64(r)?, read_u64(r)?))
}

/// Layout (little-endian): `b"GFF1"`, `u32` d, `d x u32` sides, `u64` seed,
/// `u64` sample index, then one `f32` per vertex in index order.
pub fn write_gff(w: &mut impl Write, field: &GffSample) -> Result<()> {
    write_header(w, b"GFF1", &field.geom, field.seed, field.sample)?;
    let mut buf = Vec::with_capacity(field.values.len() * 4);
    for &v in &field.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_gff(r: &mut impl Read) -> Result<GffSample> {
    let (geom, seed, sample) = read_header(r, b"GFF1")?;
    let mut buf = vec![0u8; geom.len() * 4];
    r.read_exact(&mut buf)?;
    let values = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(GffSample { geom, values, seed, sample })
}

/// Layout (little-endian): `b"EDG1"`, same header as the field, then one bit
/// per edge slot (`slot = v * d + axis`), least significant bit first.
pub fn write_edges(w: &mut impl Write, config: &EdgeConfig) -> Result<()> {
    write_header(w, b"EDG1", &config.geom, config.seed, config.sample)?;
    let nbytes = config.geom.edge_slots().div_ceil(8);
    let bytes: Vec<u8> = config.bits.iter().flat_map(|w| w.to_le_bytes()).take(nbytes).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_edges(r: &mut impl Read) -> Result<EdgeConfig> {
    let (geom, seed, sample) = read_header(r, b"EDG1")?;
    let slots = geom.edge_slots();
    let mut bytes = vec![0u8; slots.div_ceil(8)];
    r.read_exact(&mut bytes)?;
    let mut config = EdgeConfig::empty(&geom);
    for (i, chunk) in bytes.chunks(8).enumerate() {
        let mut w = [0u8; 8];
        w[..chunk.len()].copy_from_slice(chunk);
        config.bits[i] = u64::from_le_bytes(w);
    }
    for slot in 0..slots {
        if config.is_open(slot) && geom.slot_target(slot).is_none() {
            return Err(Error::Format(format!("slot {slot} has no edge but is marked open")));
        }
    }
    config.seed = seed;
    config.sample = sample;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::green_function;

    fn implied_covariance(geom: &BoxGeometry) -> Vec<f64> {
        let n = geom.len();
        let spectrum = Spectrum::new(geom);
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            spectral_apply(&spectrum, &mut e);
            for x in 0..n {
                for y in 0..n {
                    cov[x * n + y] += e[x] * e[y];
                }
            }
        }
        cov
    }

    #[test]
    fn spectral_covariance_matches_green() {
        for sides in [vec![4, 4], vec![3, 5], vec![2, 3, 4], vec![6]] {
            let g = BoxGeometry::new(sides).unwrap();
            let cov = implied_covariance(&g);
            let n = g.len();
            for x in 0..n {
                for y in 0..n {
                    let gr = green_function(&g, x, y).unwrap();
                    assert!((cov[x * n + y] - gr).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn edge_rule() {
        assert_eq!(open_edge_prob(-0.3, 5.0), 0.0);
        assert_eq!(open_edge_prob(0.7, 1.3), open_edge_prob(1.3, 0.7));
        assert!((open_edge_prob(1.0, 1.0) - 0.864_664_716_763_387_3).abs() < 1e-15);
        assert!((bridge_positivity(1.0, 1.0, 2.0, 1.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        assert_eq!(bridge_positivity(0.0, 1.0, 2.0, 1.0).unwrap(), 0.0);
        assert!(bridge_positivity(1.0, 1.0, 0.0, 1.0).is_err());
        assert!((bridge_positivity(30.0, 30.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_field_has_no_open_edges() {
        let g = BoxGeometry::cube(2, 6).unwrap();
        let s = Streams::new(1);
        let f = GffSample { geom: g.clone(), values: vec![-1.0; g.len()], seed: 1, sample: 0 };
        assert_eq!(sample_cable_clusters(&f, &s).open_count(), 0);
        let f = GffSample { geom: g.clone(), values: vec![50.0; g.len()], seed: 1, sample: 0 };
        assert_eq!(sample_cable_clusters(&f, &s), {
            let mut c = EdgeConfig::full(&g);
            c.seed = 1;
            c
        });
    }

    #[test]
    fn lazy_edges_match_scan() {
        let g = BoxGeometry::new(vec![7, 6, 5]).unwrap();
        let s = Streams::new(99);
        let f = sample_dgff(&g, &s, 3);
        let c = sample_cable_clusters(&f, &s);
        let mut lazy = LazyCableEdges::new(&f, &s);
        for slot in (0..g.edge_slots()).rev() {
            assert_eq!(lazy.is_open(slot), c.is_open(slot));
            if c.is_open(slot) {
                let a = slot / 3;
                assert!(f.values[a] > 0.0);
                assert!(f.values[g.slot_target(slot).unwrap()] > 0.0);
            }
        }
        assert!(c.open_count() > 0);
    }

    #[test]
    fn sampler_is_deterministic() {
        let g = BoxGeometry::cube(3, 5).unwrap();
        let s = Streams::new(5);
        assert_eq!(sample_dgff(&g, &s, 1).values, sample_dgff(&g, &s, 1).values);
        assert_ne!(sample_dgff(&g, &s, 1).values, sample_dgff(&g, &s, 2).values);
    }

    #[test]
    fn refinement_preconditions() {
        let mut rng = Streams::new(0).rng(0, Purpose::Misc);
        assert!(refinement_oracle(64, -1.0, 1.0, 10, &mut rng).is_err());
        assert!(refinement_oracle(64, 1.0, 1.0, 0, &mut rng).is_err());
        assert!(refinement_oracle(1, 1.0, 1.0, 10, &mut rng).is_err());
        let e = refinement_oracle(2, 10.0, 10.0, 1000, &mut rng).unwrap();
        assert!(e.p > 0.99);
    }

    #[test]
    fn binary_roundtrip() {
        let g = BoxGeometry::new(vec![5, 4, 3]).unwrap();
        let s = Streams::new(11);
        let f = sample_dgff(&g, &s, 2);
        let mut buf = Vec::new();
        write_gff(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 12 + 16 + 4 * g.len());
        let back = read_gff(&mut buf.as_slice()).unwrap();
        assert_eq!(back.geom, g);
        assert_eq!((back.seed, back.sample), (11, 2));
        for (a, b) in back.values.iter().zip(&f.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let c = sample_cable_clusters(&f, &s);
        let mut buf = Vec::new();
        write_edges(&mut buf, &c).unwrap();
        assert_eq!(read_edges(&mut buf.as_slice()).unwrap(), c);
        buf[0] = b'X';
        assert!(matches!(read_edges(&mut buf.as_slice()), Err(Error::Format(_))));
    }
}
