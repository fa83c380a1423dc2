//! Experiment drivers: configs, the parallel sampling harness, run records
//! and the named exponent experiments.
//!
//! Every sample `s` of a run draws its randomness from `Streams::new(seed)`
//! at sample index `s`, samples are mapped in parallel and reduced in index
//! order, so results do not depend on the worker count.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{arm_attempt, ball_subgraph, bfs_profile, components, level_cutsets, BfsScratch, ClusterGraph};
use crate::error::{Error, Result};
use crate::field::{open_edge_prob, sample_cable_clusters, sample_dgff_with, EdgeConfig, GffSample};
use crate::lattice::{free_kernel, green_function, BoxGeometry, Spectrum};
use crate::loopsoup::{
    fundamental_cluster_edges, loop_class_intensity, FreeLoopSoupSampler, LoopSoupSample, LoopSoupSampler,
    SoupConfig, ALPHA,
};
use crate::resistance::{
    classical_nw_bound, effective_resistance, generalized_nw_bound, CutsetFamily, Resistance,
};
use crate::rng::{Purpose, Streams};
use crate::stats::{loglog_slope, mean_se, median, quantile, weighted_loglog_slope};
use crate::walk::{exponent_fit, kesten_tree, return_probability_pruned, simulate_walk, FitWindows, WalkStats};

pub const EXPERIMENTS: &[&str] = &[
    "sample-gff",
    "loop-soup",
    "two-point",
    "cluster-tail",
    "volume",
    "second-moment",
    "one-arm-intrinsic",
    "one-arm-extrinsic",
    "large-loop",
    "resistance",
    "conditional-volume",
    "bjks",
    "ao",
    "gw-calibrate",
    "oracle",
    "validate",
];

/// Flat `key = value` configuration. `#` starts a comment; lists are comma
/// separated; `margin = auto` selects a quarter of the smallest side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub d: usize,
    pub side: usize,
    pub samples: u64,
    pub margin: Option<usize>,
    pub grid: Vec<u64>,
    pub fit: Vec<f64>,
    pub windows: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
    pub memory_budget: u64,
    pub cg_tolerance: f64,
    pub k_max: usize,
    pub loop_tolerance: f64,
    pub arm_radius: usize,
    pub accepted: u64,
    pub budget: u64,
    pub ball_radius: usize,
    pub lambdas: Vec<f64>,
    pub eps: Vec<f64>,
    pub n_max: usize,
    pub walk_steps: u64,
    pub walks: u64,
    pub tree_depth: usize,
    pub prune: f64,
    pub fit_return: Vec<f64>,
    pub fit_exit: Vec<f64>,
    pub fit_range: Vec<f64>,
}

/// `(key, type, unit, meaning)` in serialization order.
pub const SCHEMA: &[(&str, &str, &str, &str)] = &[
    ("experiment", "name", "-", "experiment to run"),
    ("d", "int", "dimensions", "lattice dimension"),
    ("side", "int", "sites", "side length of the cubic box"),
    ("samples", "int", "fields", "independent samples (fields, soups or trees)"),
    ("margin", "int|auto", "sites", "minimum boundary distance of harvested origins, or slack for arm conditioning"),
    ("grid", "int list", "sites|vertices|steps", "distances, radii, sizes or loop lengths, by experiment"),
    ("fit", "2 floats", "grid units", "fit window over the grid"),
    ("windows", "float list", "slope", "accepted slope deviation per fit"),
    ("seed", "int", "-", "master seed"),
    ("workers", "int", "threads", "worker threads; never changes results"),
    ("memory_budget", "int", "bytes", "memory allowed for all workers together"),
    ("cg_tolerance", "float", "relative residual", "conjugate-gradient stopping tolerance"),
    ("k_max", "int", "steps", "loop length truncation"),
    ("loop_tolerance", "float", "loops per vertex", "allowed truncation residual"),
    ("arm_radius", "int", "sites", "conditioning event: centre reaches l-infinity distance arm_radius"),
    ("accepted", "int", "clusters", "conditioned clusters wanted"),
    ("budget", "int", "fields", "maximum rejection attempts"),
    ("ball_radius", "int", "edges", "intrinsic radius for single-radius statistics"),
    ("lambdas", "float list", "-", "BJKS window parameters"),
    ("eps", "float list", "-", "small-volume thresholds"),
    ("n_max", "int", "steps/2", "return probabilities p_2n for n <= n_max"),
    ("walk_steps", "int", "steps", "length of each simulated walk"),
    ("walks", "int", "walks", "walks per cluster"),
    ("tree_depth", "int", "edges", "Kesten tree cut depth"),
    ("prune", "float", "probability", "drop walk masses below this during operator iteration"),
    ("fit_return", "2 floats", "n", "fit window for p_2n"),
    ("fit_exit", "2 floats", "edges", "fit window for exit times"),
    ("fit_range", "2 floats", "steps", "fit window for the range"),
];

fn list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn bad(key: &str, want: &str, value: &str) -> Error {
    Error::Config(format!("key `{key}`: expected {want}, got `{value}`"))
}

fn parse_num<T: std::str::FromStr>(key: &str, want: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, want, value))
}

fn parse_list<T: std::str::FromStr>(key: &str, want: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|x| parse_num(key, want, x)).collect()
}

fn dyadic(lo: u64, hi: u64) -> Vec<u64> {
    (0..63).map(|k| 1u64 << k).filter(|&x| x >= lo && x <= hi).collect()
}

impl ExperimentConfig {
    /// Defaults of a named experiment; the slope windows of the acceptance
    /// suite live here.
    pub fn defaults(experiment: &str) -> Result<Self> {
        if !EXPERIMENTS.contains(&experiment) {
            return Err(Error::Config(format!("unknown experiment `{experiment}`")));
        }
        let mut c = Self {
            experiment: experiment.to_string(),
            d: 7,
            side: 13,
            samples: 20,
            margin: None,
            grid: (0..=12).collect(),
            fit: vec![2.0, 12.0],
            windows: vec![],
            seed: 1,
            workers: 1,
            memory_budget: 4 << 30,
            cg_tolerance: 1e-10,
            k_max: 40,
            loop_tolerance: 1e-6,
            arm_radius: 3,
            accepted: 40,
            budget: 4000,
            ball_radius: 8,
            lambdas: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            eps: vec![0.4, 0.2, 0.1],
            n_max: 256,
            walk_steps: 4096,
            walks: 20,
            tree_depth: 256,
            prune: 0.0,
            fit_return: vec![4.0, 256.0],
            fit_exit: vec![2.0, 8.0],
            fit_range: vec![16.0, 4096.0],
        };
        match experiment {
            "sample-gff" => {
                c.d = 2;
                c.side = 16;
                c.samples = 1;
            }
            "loop-soup" => {
                c.d = 2;
                c.side = 8;
                c.samples = 1;
                c.k_max = 200;
                c.grid = vec![];
            }
            "two-point" => {
                c.d = 3;
                c.side = 64;
                c.samples = 200;
                c.grid = vec![1, 2, 3, 4, 6, 8, 11, 16];
                c.fit = vec![2.0, 16.0];
                c.windows = vec![0.15];
            }
            "cluster-tail" => {
                c.grid = dyadic(1, 256);
                c.fit = vec![4.0, 256.0];
                c.windows = vec![0.15];
            }
            "volume" => c.windows = vec![0.25],
            "second-moment" => c.windows = vec![0.5],
            "one-arm-intrinsic" => c.windows = vec![0.3],
            "one-arm-extrinsic" => {
                c.grid = (0..=5).collect();
                c.fit = vec![2.0, 5.0];
                c.windows = vec![0.4];
            }
            "large-loop" => {
                c.side = 7;
                c.samples = 200;
                c.k_max = 150;
                c.grid = vec![2, 4, 8, 16, 32, 64];
                c.fit = vec![4.0, 64.0];
                c.windows = vec![1.0];
                c.ball_radius = 2;
            }
            "resistance" => {
                c.margin = Some(3);
                c.grid = (1..=8).collect();
                c.fit = vec![2.0, 8.0];
                c.windows = vec![0.3];
            }
            "conditional-volume" => {
                c.margin = Some(3);
                c.grid = (0..=8).collect();
                c.fit = vec![2.0, 8.0];
                c.windows = vec![0.4];
            }
            "bjks" => {
                c.margin = Some(3);
                c.ball_radius = 4;
                c.grid = vec![];
            }
            "ao" => {
                c.margin = Some(3);
                c.grid = (1..=8).collect();
                c.windows = vec![0.25, 0.5, 0.25];
            }
            "oracle" | "validate" => {
                c.samples = 1;
                c.grid = vec![];
            }
            "gw-calibrate" => {
                c.samples = 400;
                c.grid = vec![2, 3, 4, 6, 8, 11, 16, 22];
                c.n_max = 8192;
                c.walk_steps = 16384;
                c.walks = 16;
                c.tree_depth = 256;
                c.prune = 1e-14;
                c.fit_return = vec![32.0, 8192.0];
                c.fit_exit = vec![4.0, 16.0];
                c.fit_range = vec![64.0, 16384.0];
                c.windows = vec![0.05, 0.2, 0.1];
            }
            _ => {}
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "experiment" => {
                if !EXPERIMENTS.contains(&v) {
                    return Err(bad(key, "an experiment name", v));
                }
                self.experiment = v.to_string();
            }
            "d" => self.d = parse_num(key, "a positive integer", v)?,
            "side" => self.side = parse_num(key, "a positive integer", v)?,
            "samples" => self.samples = parse_num(key, "an integer", v)?,
            "margin" => self.margin = if v == "auto" { None } else { Some(parse_num(key, "an integer or auto", v)?) },
            "grid" => self.grid = parse_list(key, "integers", v)?,
            "fit" => self.fit = parse_list(key, "two numbers", v)?,
            "windows" => self.windows = parse_list(key, "numbers", v)?,
            "seed" => self.seed = parse_num(key, "an unsigned integer", v)?,
            "workers" => self.workers = parse_num(key, "an integer", v)?,
            "memory_budget" => self.memory_budget = parse_num(key, "a byte count", v)?,
            "cg_tolerance" => self.cg_tolerance = parse_num(key, "a number", v)?,
            "k_max" => self.k_max = parse_num(key, "an integer", v)?,
            "loop_tolerance" => self.loop_tolerance = parse_num(key, "a number", v)?,
            "arm_radius" => self.arm_radius = parse_num(key, "an integer", v)?,
            "accepted" => self.accepted = parse_num(key, "an integer", v)?,
            "budget" => self.budget = parse_num(key, "an integer", v)?,
            "ball_radius" => self.ball_radius = parse_num(key, "an integer", v)?,
            "lambdas" => self.lambdas = parse_list(key, "numbers", v)?,
            "eps" => self.eps = parse_list(key, "numbers", v)?,
            "n_max" => self.n_max = parse_num(key, "an integer", v)?,
            "walk_steps" => self.walk_steps = parse_num(key, "an integer", v)?,
            "walks" => self.walks = parse_num(key, "an integer", v)?,
            "tree_depth" => self.tree_depth = parse_num(key, "an integer", v)?,
            "prune" => self.prune = parse_num(key, "a number", v)?,
            "fit_return" => self.fit_return = parse_list(key, "two numbers", v)?,
            "fit_exit" => self.fit_exit = parse_list(key, "two numbers", v)?,
            "fit_range" => self.fit_range = parse_list(key, "two numbers", v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "experiment" => self.experiment.clone(),
            "d" => self.d.to_string(),
            "side" => self.side.to_string(),
            "samples" => self.samples.to_string(),
            "margin" => self.margin.map_or("auto".into(), |m| m.to_string()),
            "grid" => list(&self.grid),
            "fit" => list(&self.fit),
            "windows" => list(&self.windows),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "memory_budget" => self.memory_budget.to_string(),
            "cg_tolerance" => self.cg_tolerance.to_string(),
            "k_max" => self.k_max.to_string(),
            "loop_tolerance" => self.loop_tolerance.to_string(),
            "arm_radius" => self.arm_radius.to_string(),
            "accepted" => self.accepted.to_string(),
            "budget" => self.budget.to_string(),
            "ball_radius" => self.ball_radius.to_string(),
            "lambdas" => list(&self.lambdas),
            "eps" => list(&self.eps),
            "n_max" => self.n_max.to_string(),
            "walk_steps" => self.walk_steps.to_string(),
            "walks" => self.walks.to_string(),
            "tree_depth" => self.tree_depth.to_string(),
            "prune" => self.prune.to_string(),
            "fit_return" => list(&self.fit_return),
            "fit_exit" => list(&self.fit_exit),
            "fit_range" => list(&self.fit_range),
            _ => unreachable!("schema and value_of list the same keys"),
        }
    }

    /// Parse a config file. The `experiment` key (if any) selects the
    /// defaults, then every other line overrides them.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", no + 1)));
            };
            let k = k.trim();
            if !SCHEMA.iter().any(|s| s.0 == k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("duplicate key `{k}`")));
            }
            pairs.push((k.to_string(), v.trim().to_string()));
        }
        let name = pairs
            .iter()
            .find(|(k, _)| k == "experiment")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Config("missing key `experiment`".into()))?;
        let mut cfg = Self::defaults(&name)?;
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Apply `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let Some((k, v)) = o.as_ref().split_once('=') else {
                return Err(Error::Config(format!("override `{}` is not key=value", o.as_ref())));
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, ty, unit, _) in SCHEMA {
            let _ = writeln!(out, "{key} = {}  # {ty}, {unit}", self.value_of(key));
        }
        out
    }

    pub fn geometry(&self) -> Result<BoxGeometry> {
        if self.d == 0 || self.side == 0 {
            return Err(Error::Config("d and side must be positive".into()));
        }
        BoxGeometry::cube(self.d, self.side)
    }

    fn margin_for(&self, geom: &BoxGeometry) -> usize {
        self.margin.unwrap_or_else(|| geom.default_margin())
    }

    fn window(w: &[f64], key: &str) -> Result<(f64, f64)> {
        match w {
            [lo, hi] if lo <= hi => Ok((*lo, *hi)),
            _ => Err(Error::Config(format!("key `{key}`: expected two increasing numbers"))),
        }
    }

    fn slope_window(&self, i: usize) -> f64 {
        self.windows.get(i).copied().unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.workers == 0 {
            return Err(Error::Config("samples and workers must be positive".into()));
        }
        Self::window(&self.fit, "fit")?;
        Self::window(&self.fit_return, "fit_return")?;
        Self::window(&self.fit_exit, "fit_exit")?;
        Self::window(&self.fit_range, "fit_range")?;
        let needs_grid = !matches!(self.experiment.as_str(), "sample-gff" | "loop-soup" | "bjks" | "oracle" | "validate");
        if needs_grid && self.grid.is_empty() {
            return Err(Error::Config("grid must be nonempty".into()));
        }
        if self.experiment == "bjks" && self.lambdas.is_empty() {
            return Err(Error::Config("lambdas must be nonempty".into()));
        }
        if self.experiment == "conditional-volume" && self.eps.is_empty() {
            return Err(Error::Config("eps must be nonempty".into()));
        }
        if self.experiment == "two-point" && self.grid.contains(&0) {
            return Err(Error::Config("two-point distances must be positive".into()));
        }
        if !(self.cg_tolerance > 0.0) {
            return Err(Error::Config("cg_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Serialize non-finite floats as `null` and read `null` back as NaN.
mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One grid point of one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub series: String,
    pub x: f64,
    #[serde(with = "nan_null")]
    pub value: f64,
    /// Error bar from the spread across independent fields or clusters.
    #[serde(with = "nan_null")]
    pub se_fields: f64,
    /// Error bar treating every harvested origin as independent.
    #[serde(with = "nan_null")]
    pub se_pooled: f64,
    /// Integer numerator: hit count or summed integer observable.
    pub tally: u128,
    pub trials: u64,
    pub censored: u64,
    /// One-origin-per-field estimate (the box centre), when available.
    #[serde(with = "nan_null")]
    pub single_value: f64,
    #[serde(with = "nan_null")]
    pub single_se: f64,
    pub single_trials: u64,
}

impl Point {
    fn plain(series: &str, x: f64, value: f64, se: f64, tally: u128, trials: u64) -> Self {
        Self {
            series: series.into(),
            x,
            value,
            se_fields: se,
            se_pooled: se,
            tally,
            trials,
            censored: 0,
            single_value: f64::NAN,
            single_se: f64::NAN,
            single_trials: 0,
        }
    }

    fn error_bar(&self) -> f64 {
        if self.se_fields.is_finite() && self.se_fields > 0.0 {
            self.se_fields
        } else {
            self.se_pooled
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub series: String,
    #[serde(with = "nan_null")]
    pub slope: f64,
    #[serde(with = "nan_null")]
    pub stderr: f64,
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
    pub target: f64,
    #[serde(with = "nan_null")]
    pub window: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub version: String,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub points: Vec<Point>,
    pub fits: Vec<SlopeFit>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub wall_seconds: f64,
}

impl RunRecord {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            schema: RECORD_SCHEMA,
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: cfg.experiment.clone(),
            config: cfg.clone(),
            points: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn fit(&self, series: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.series == series)
    }

    pub fn series(&self, series: &str) -> Vec<&Point> {
        self.points.iter().filter(|p| p.series == series).collect()
    }

    /// Integer tallies, the part of a record that must be bit-identical
    /// across reruns and worker counts.
    pub fn tallies(&self) -> Vec<(String, u128, u64, u64)> {
        self.points
            .iter()
            .map(|p| (format!("{}@{}", p.series, p.x), p.tally, p.trials, p.single_trials))
            .collect()
    }

    /// Append one JSON line; existing lines are never touched.
    pub fn append_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::to_string(self)?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
        let f = std::fs::File::open(path)?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RunRecord = serde_json::from_str(&line)?;
            if rec.schema != RECORD_SCHEMA {
                return Err(Error::Format(format!("unsupported record schema {}", rec.schema)));
            }
            out.push(rec);
        }
        Ok(out)
    }

    /// Columns: `series,x,value,se_fields,se_pooled,tally,trials,censored,
    /// single_value,single_se,single_trials`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "series",
            "x",
            "value",
            "se_fields",
            "se_pooled",
            "tally",
            "trials",
            "censored",
            "single_value",
            "single_se",
            "single_trials",
        ])?;
        for p in &self.points {
            out.write_record(&[
                p.series.clone(),
                p.x.to_string(),
                p.value.to_string(),
                p.se_fields.to_string(),
                p.se_pooled.to_string(),
                p.tally.to_string(),
                p.trials.to_string(),
                p.censored.to_string(),
                p.single_value.to_string(),
                p.single_se.to_string(),
                p.single_trials.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Log-log scatter of every series with positive values.
    pub fn write_svg(&self, mut w: impl Write) -> Result<()> {
        let pts: Vec<&Point> = self.points.iter().filter(|p| p.x > 0.0 && p.value > 0.0 && p.value.is_finite()).collect();
        let (wd, ht, m) = (640.0, 480.0, 60.0);
        writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{wd}" height="{ht}">"#)?;
        writeln!(w, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{} (log-log)</text>"#, wd / 2.0, self.experiment)?;
        if !pts.is_empty() {
            let lx = |p: &Point| p.x.ln();
            let ly = |p: &Point| p.value.ln();
            let (x0, x1) = pts.iter().map(|p| lx(p)).fold((f64::MAX, f64::MIN), |a, v| (a.0.min(v), a.1.max(v)));
            let (y0, y1) = pts.iter().map(|p| ly(p)).fold((f64::MAX, f64::MIN), |a, v| (a.0.min(v), a.1.max(v)));
            let sx = |v: f64| m + (v - x0) / (x1 - x0).max(1e-12) * (wd - 2.0 * m);
            let sy = |v: f64| ht - m - (v - y0) / (y1 - y0).max(1e-12) * (ht - 2.0 * m);
            writeln!(w, r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#, wd - 2.0 * m, ht - 2.0 * m)?;
            writeln!(w, r#"<text x="{m}" y="{}" font-size="11">x: {:.3} .. {:.3}</text>"#, ht - 20.0, x0.exp(), x1.exp())?;
            writeln!(w, r#"<text x="{m}" y="{}" font-size="11">y: {:.3e} .. {:.3e}</text>"#, ht - 6.0, y0.exp(), y1.exp())?;
            let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
            let mut names: Vec<&str> = Vec::new();
            for p in &pts {
                if !names.contains(&p.series.as_str()) {
                    names.push(&p.series);
                }
            }
            for (i, name) in names.iter().enumerate() {
                let c = colors[i % colors.len()];
                writeln!(w, r#"<text x="{}" y="{}" font-size="11" fill="{c}">{name}</text>"#, m + 8.0, m + 14.0 * (i as f64 + 1.0))?;
                for p in pts.iter().filter(|p| p.series == *name) {
                    writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(lx(p)), sy(ly(p)))?;
                }
            }
        }
        writeln!(w, "</svg>")?;
        Ok(())
    }
}

/// Per-field accumulator of an integer observable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Acc {
    pub sum: u128,
    pub sq: f64,
    pub count: u64,
}

impl Acc {
    pub fn add(&mut self, x: u64) {
        self.sum += x as u128;
        self.sq += (x as f64) * (x as f64);
        self.count += 1;
    }

    fn merge(&mut self, o: &Acc) {
        self.sum += o.sum;
        self.sq += o.sq;
        self.count += o.count;
    }
}

fn pooled(accs: &[Acc]) -> Acc {
    let mut t = Acc::default();
    for a in accs {
        t.merge(a);
    }
    t
}

fn mean_and_se(a: &Acc) -> (f64, f64) {
    if a.count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = a.count as f64;
    let m = a.sum as f64 / n;
    let var = (a.sq / n - m * m).max(0.0);
    (m, (var / n).sqrt())
}

/// Ratio estimator over fields and its standard error from the spread of
/// per-field sums.
fn across_fields(per_field: &[Acc]) -> f64 {
    let used: Vec<&Acc> = per_field.iter().filter(|a| a.count > 0).collect();
    let k = used.len();
    if k < 2 {
        return f64::NAN;
    }
    let total = pooled(per_field);
    let r = total.sum as f64 / total.count as f64;
    let nbar = total.count as f64 / k as f64;
    let s: f64 = used.iter().map(|a| (a.sum as f64 - r * a.count as f64).powi(2)).sum();
    (s / (k as f64 * (k as f64 - 1.0))).sqrt() / nbar
}

fn summarize(series: &str, x: f64, per_field: &[Acc], single: &[Acc]) -> Point {
    let total = pooled(per_field);
    let (value, se_pooled) = mean_and_se(&total);
    let s = pooled(single);
    let (single_value, single_se) = mean_and_se(&s);
    Point {
        series: series.into(),
        x,
        value,
        se_fields: across_fields(per_field),
        se_pooled,
        tally: total.sum,
        trials: total.count,
        censored: 0,
        single_value,
        single_se,
        single_trials: s.count,
    }
}

/// Weighted log-log fit of a series over `[lo, hi]`, weights from the
/// relative error bars.
pub fn fit_series(points: &[Point], series: &str, lo: f64, hi: f64, target: f64, window: f64) -> SlopeFit {
    let used: Vec<&Point> = points
        .iter()
        .filter(|p| p.series == series && p.x >= lo && p.x <= hi && p.x > 0.0 && p.value > 0.0 && p.value.is_finite())
        .collect();
    let xy: Vec<(f64, f64)> = used.iter().map(|p| (p.x, p.value)).collect();
    let w: Vec<f64> = used
        .iter()
        .map(|p| {
            let rel = p.error_bar() / p.value;
            if rel.is_finite() && rel > 0.0 {
                1.0 / (rel * rel)
            } else {
                1.0
            }
        })
        .collect();
    let (slope, stderr) = match weighted_loglog_slope(&xy, &w) {
        Ok(f) => (f.slope, f.stderr),
        Err(_) => (f64::NAN, f64::NAN),
    };
    SlopeFit {
        series: series.into(),
        slope,
        stderr,
        points: xy.len(),
        lo,
        hi,
        target,
        window,
        within: (slope - target).abs() <= window,
    }
}

struct Harness {
    geom: BoxGeometry,
    spectrum: Spectrum,
    streams: Streams,
    pool: rayon::ThreadPool,
}

/// Rough peak bytes of one worker holding a field, its edges and scratch.
pub fn field_bytes(geom: &BoxGeometry) -> u64 {
    let n = geom.len() as u64;
    n.saturating_mul(24).saturating_add(n.saturating_mul(geom.dim() as u64) / 8)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn harness(cfg: &ExperimentConfig) -> Result<Harness> {
    cfg.validate()?;
    let geom = cfg.geometry()?;
    let need = field_bytes(&geom).saturating_mul(cfg.workers as u64);
    if need > cfg.memory_budget {
        return Err(Error::MemoryBudget { required: need, budget: cfg.memory_budget });
    }
    Ok(Harness {
        spectrum: Spectrum::new(&geom),
        geom,
        streams: Streams::new(cfg.seed),
        pool: thread_pool(cfg.workers)?,
    })
}

fn par_map<T: Send>(pool: &rayon::ThreadPool, range: std::ops::Range<u64>, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    pool.install(|| range.into_par_iter().map(f).collect())
}

/// Which statistics a harvest collects at every deep-interior origin.
#[derive(Clone, Debug, Default)]
pub struct HarvestPlan {
    /// Thresholds `M` for `P(|C| >= M)`; a negative origin has `|C| = 0`.
    pub sizes: Vec<u64>,
    /// Intrinsic radii for ball volumes and the intrinsic arm (positive
    /// origins only).
    pub radii: Vec<u64>,
    /// Extrinsic radii `n` for `0 <-> boundary of the n-box` (positive
    /// origins whose n-box fits in the domain).
    pub arms: Vec<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct Tally {
    pub harvest: Vec<Acc>,
    pub single: Vec<Acc>,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self { harvest: vec![Acc::default(); n], single: vec![Acc::default(); n] }
    }

    fn add(&mut self, i: usize, x: u64, single: bool) {
        if single {
            self.single[i].add(x);
        } else {
            self.harvest[i].add(x);
        }
    }
}

/// Harvested statistics of one field.
#[derive(Clone, Debug, Default)]
pub struct FieldHarvest {
    pub tail: Tally,
    pub volume: Tally,
    pub volume_sq: Tally,
    pub arm: Tally,
    pub extrinsic: Tally,
}

#[derive(Clone, Debug)]
pub struct Harvest {
    pub plan: HarvestPlan,
    pub margin: usize,
    pub fields: Vec<FieldHarvest>,
}

impl Harvest {
    fn column(&self, pick: impl Fn(&FieldHarvest) -> &Tally, i: usize) -> (Vec<Acc>, Vec<Acc>) {
        let h = self.fields.iter().map(|f| pick(f).harvest[i]).collect();
        let s = self.fields.iter().map(|f| pick(f).single[i]).collect();
        (h, s)
    }

    fn points(&self, series: &str, grid: &[u64], pick: impl Fn(&FieldHarvest) -> &Tally + Copy) -> Vec<Point> {
        grid.iter()
            .enumerate()
            .map(|(i, &x)| {
                let (h, s) = self.column(pick, i);
                summarize(series, x as f64, &h, &s)
            })
            .collect()
    }
}

fn harvest_field(h: &Harness, plan: &HarvestPlan, margin: usize, sample: u64) -> FieldHarvest {
    let g = &h.geom;
    let field = sample_dgff_with(&h.spectrum, &h.streams, sample);
    let config = sample_cable_clusters(&field, &h.streams);
    let mut out = FieldHarvest {
        tail: Tally::new(plan.sizes.len()),
        volume: Tally::new(plan.radii.len()),
        volume_sq: Tally::new(plan.radii.len()),
        arm: Tally::new(plan.radii.len()),
        extrinsic: Tally::new(plan.arms.len()),
    };
    let mut origins: Vec<(usize, bool)> = g.deep_interior(margin).into_iter().map(|v| (v, false)).collect();
    origins.push((g.center(), true));
    if !plan.sizes.is_empty() {
        let mut uf = components(&config);
        for &(v, single) in &origins {
            let size = if field.values[v] > 0.0 { uf.size(v) as u64 } else { 0 };
            for (i, &m) in plan.sizes.iter().enumerate() {
                out.tail.add(i, (size >= m) as u64, single);
            }
        }
    }
    if plan.radii.is_empty() && plan.arms.is_empty() {
        return out;
    }
    let mut scratch = BfsScratch::new(g.len());
    let r_max = plan.radii.iter().copied().max().unwrap_or(0) as usize;
    let n_max = plan.arms.iter().copied().max().unwrap_or(0) as usize;
    for &(v, single) in &origins {
        if field.values[v] <= 0.0 {
            continue;
        }
        if !plan.radii.is_empty() {
            let ball = scratch.ball(&mut &config, v, r_max);
            for (i, &r) in plan.radii.iter().enumerate() {
                let vol = ball.volumes[r as usize];
                out.volume.add(i, vol, single);
                out.volume_sq.add(i, vol * vol, single);
                out.arm.add(i, (ball.spheres[r as usize] > 0) as u64, single);
            }
        }
        if !plan.arms.is_empty() {
            let cap = n_max.min(g.boundary_distance(v).saturating_sub(1));
            let reach = scratch.reach(&mut &config, v, cap);
            for (i, &n) in plan.arms.iter().enumerate() {
                if n as usize <= cap {
                    out.extrinsic.add(i, (reach >= n as usize) as u64, single);
                }
            }
        }
    }
    out
}

/// Harvest every field of a run; one field per sample index.
pub fn harvest(cfg: &ExperimentConfig, plan: &HarvestPlan) -> Result<Harvest> {
    let h = harness(cfg)?;
    let margin = cfg.margin_for(&h.geom);
    if plan.radii.iter().chain(&plan.sizes).chain(&plan.arms).any(|&x| x > u32::MAX as u64) {
        return Err(Error::Config("grid values too large".into()));
    }
    let fields = par_map(&h.pool, 0..cfg.samples, |s| Ok(harvest_field(&h, plan, margin, s)))?;
    Ok(Harvest { plan: plan.clone(), margin, fields })
}

fn finish(mut rec: RunRecord, start: Instant) -> RunRecord {
    rec.wall_seconds = start.elapsed().as_secs_f64();
    rec
}

fn nonincreasing(points: &[Point]) -> bool {
    points.windows(2).all(|w| w[1].value <= w[0].value)
}

fn harvest_notes(rec: &mut RunRecord, harvest: &Harvest) {
    rec.notes.push(format!(
        "harvested at every origin with boundary distance >= {} plus the centre as a one-origin-per-field estimate; se_fields uses the spread across {} fields, se_pooled treats origins as independent",
        harvest.margin,
        harvest.fields.len()
    ));
}

pub fn cluster_tail_record(cfg: &ExperimentConfig, harvest: &Harvest) -> RunRecord {
    let mut rec = RunRecord::new(cfg);
    rec.points = harvest.points("P(|C|>=M)", &harvest.plan.sizes, |f| &f.tail);
    rec.fits.push(fit_series(&rec.points, "P(|C|>=M)", cfg.fit[0], cfg.fit[1], -0.5, cfg.slope_window(0)));
    rec.checks.push(Check { name: "tail nonincreasing in M".into(), passed: nonincreasing(&rec.points), detail: String::new() });
    rec.notes.push("|C| = 0 when the origin is not in the positive level set".into());
    harvest_notes(&mut rec, harvest);
    rec
}

pub fn volume_record(cfg: &ExperimentConfig, harvest: &Harvest) -> RunRecord {
    let mut rec = RunRecord::new(cfg);
    rec.points = harvest.points("E|B(0,r)|", &harvest.plan.radii, |f| &f.volume);
    rec.fits.push(fit_series(&rec.points, "E|B(0,r)|", cfg.fit[0], cfg.fit[1], 1.0, cfg.slope_window(0)));
    let mono = rec.points.windows(2).all(|w| w[1].value >= w[0].value);
    rec.checks.push(Check { name: "volume nondecreasing in r".into(), passed: mono, detail: String::new() });
    rec.notes.push("origins conditioned on lying in the positive level set".into());
    harvest_notes(&mut rec, harvest);
    rec
}

pub fn second_moment_record(cfg: &ExperimentConfig, harvest: &Harvest) -> RunRecord {
    let mut rec = RunRecord::new(cfg);
    let second = harvest.points("E|B(0,r)|^2", &harvest.plan.radii, |f| &f.volume_sq);
    let first = harvest.points("E|B(0,r)|", &harvest.plan.radii, |f| &f.volume);
    let jensen = second.iter().zip(&first).all(|(s, f)| s.value >= f.value * f.value * (1.0 - 1e-12));
    rec.points = second;
    rec.points.extend(first);
    rec.fits.push(fit_series(&rec.points, "E|B(0,r)|^2", cfg.fit[0], cfg.fit[1], 3.0, cfg.slope_window(0)));
    rec.checks.push(Check { name: "second moment >= squared mean".into(), passed: jensen, detail: String::new() });
    harvest_notes(&mut rec, harvest);
    rec
}

pub fn intrinsic_arm_record(cfg: &ExperimentConfig, harvest: &Harvest) -> RunRecord {
    let mut rec = RunRecord::new(cfg);
    rec.points = harvest.points("P(dB(0,r)!=0)", &harvest.plan.radii, |f| &f.arm);
    rec.fits.push(fit_series(&rec.points, "P(dB(0,r)!=0)", cfg.fit[0], cfg.fit[1], -1.0, cfg.slope_window(0)));
    rec.checks.push(Check { name: "arm probability nonincreasing in r".into(), passed: nonincreasing(&rec.points), detail: String::new() });
    rec.notes.push("probabilities are conditional on a positive origin (twice the unconditional value)".into());
    harvest_notes(&mut rec, harvest);
    rec
}

pub fn extrinsic_arm_record(cfg: &ExperimentConfig, harvest: &Harvest) -> RunRecord {
    let mut rec = RunRecord::new(cfg);
    rec.points = harvest.points("P(0<->dB_n)", &harvest.plan.arms, |f| &f.extrinsic);
    rec.fits.push(fit_series(&rec.points, "P(0<->dB_n)", cfg.fit[0], cfg.fit[1], -2.0, cfg.slope_window(0)));
    rec.checks.push(Check { name: "arm probability nonincreasing in n".into(), passed: nonincreasing(&rec.points), detail: String::new() });
    rec.notes.push("probabilities are conditional on a positive origin; origins need their n-box inside the domain".into());
    harvest_notes(&mut rec, harvest);
    rec
}

fn harvest_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let mut plan = HarvestPlan::default();
    match cfg.experiment.as_str() {
        "cluster-tail" => plan.sizes = cfg.grid.clone(),
        "volume" | "second-moment" | "one-arm-intrinsic" => plan.radii = cfg.grid.clone(),
        "one-arm-extrinsic" => plan.arms = cfg.grid.clone(),
        other => return Err(Error::Config(format!("`{other}` is not a harvest experiment"))),
    }
    let h = harvest(cfg, &plan)?;
    let rec = match cfg.experiment.as_str() {
        "cluster-tail" => cluster_tail_record(cfg, &h),
        "volume" => volume_record(cfg, &h),
        "second-moment" => second_moment_record(cfg, &h),
        "one-arm-intrinsic" => intrinsic_arm_record(cfg, &h),
        _ => extrinsic_arm_record(cfg, &h),
    };
    Ok(finish(rec, start))
}

/// `P(x <-> y)` for `y = x + r e_a` over all deep-interior `x` and axes `a`.
pub fn two_point_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let h = harness(cfg)?;
    let g = &h.geom;
    let margin = cfg.margin_for(g);
    let grid = cfg.grid.clone();
    let per_field = par_map(&h.pool, 0..cfg.samples, |s| {
        let field = sample_dgff_with(&h.spectrum, &h.streams, s);
        let config = sample_cable_clusters(&field, &h.streams);
        let mut uf = components(&config);
        let mut t = Tally::new(grid.len());
        let mut origins: Vec<(usize, bool)> = g.deep_interior(margin).into_iter().map(|v| (v, false)).collect();
        origins.push((g.center(), true));
        for &(x, single) in &origins {
            let c = g.coords(x);
            for (i, &r) in grid.iter().enumerate() {
                let axes = if single { 0..1 } else { 0..g.dim() };
                for a in axes {
                    let ca = c[a] + r as usize;
                    if ca >= g.sides()[a] {
                        continue;
                    }
                    let y = x + r as usize * g.strides()[a];
                    if !single && g.boundary_distance(y) < margin {
                        continue;
                    }
                    let hit = field.values[x] > 0.0 && uf.find(x) == uf.find(y);
                    t.add(i, hit as u64, single);
                }
            }
        }
        Ok(t)
    })?;
    let mut rec = RunRecord::new(cfg);
    for (i, &r) in grid.iter().enumerate() {
        let hs: Vec<Acc> = per_field.iter().map(|t| t.harvest[i]).collect();
        let ss: Vec<Acc> = per_field.iter().map(|t| t.single[i]).collect();
        rec.points.push(summarize("P(x<->y)", r as f64, &hs, &ss));
    }
    rec.fits.push(fit_series(&rec.points, "P(x<->y)", cfg.fit[0], cfg.fit[1], 2.0 - cfg.d as f64, cfg.slope_window(0)));
    rec.checks.push(Check { name: "connection probability nonincreasing".into(), passed: nonincreasing(&rec.points), detail: String::new() });
    rec.notes.push(format!(
        "pairs (x, x + r e_a) with both ends at boundary distance >= {margin}; the single-origin column uses the centre and axis 0"
    ));
    Ok(finish(rec, start))
}

/// Clusters conditioned on the centre reaching l-infinity distance
/// `arm_radius`, one per accepted field, plus the centre's unconditioned
/// balls from every attempt up to the last acceptance.
#[derive(Clone, Debug)]
pub struct Conditioned {
    pub clusters: Vec<ClusterGraph>,
    pub samples: Vec<u64>,
    pub accepted: u64,
    pub attempts: u64,
    pub unconditioned: Vec<Vec<u64>>,
    pub r_max: usize,
}

impl Conditioned {
    /// Acceptance rate; estimates `P(0 <-> boundary | phi_0 > 0)`.
    pub fn acceptance(&self) -> (f64, f64) {
        let p = self.accepted as f64 / self.attempts.max(1) as f64;
        (p, (p * (1.0 - p) / self.attempts.max(1) as f64).sqrt())
    }
}

pub fn conditioned_ensemble(cfg: &ExperimentConfig) -> Result<Conditioned> {
    let h = harness(cfg)?;
    let margin = cfg.margin_for(&h.geom);
    let allowed = h.geom.min_side() as f64 / 2.0 - margin as f64;
    if cfg.arm_radius as f64 > allowed {
        return Err(Error::pre(format!(
            "arm radius {} exceeds half the side minus the margin ({allowed})",
            cfg.arm_radius
        )));
    }
    let r_max = cfg.grid.iter().copied().max().unwrap_or(0).max(cfg.ball_radius as u64) as usize;
    let chunk = (2 * cfg.workers) as u64;
    let mut out = Conditioned { clusters: Vec::new(), samples: Vec::new(), accepted: 0, attempts: 0, unconditioned: Vec::new(), r_max };
    let mut next = 0u64;
    'outer: while next < cfg.budget && out.accepted < cfg.accepted {
        let end = (next + chunk).min(cfg.budget);
        let attempts = par_map(&h.pool, next..end, |s| {
            let mut scratch = BfsScratch::new(h.geom.len());
            arm_attempt(&h.spectrum, &h.streams, s, cfg.arm_radius, r_max, &mut scratch)
        })?;
        next = end;
        for a in attempts {
            out.attempts += 1;
            out.unconditioned.push(a.ball.volumes.clone());
            if let Some(c) = a.cluster {
                out.clusters.push(c);
                out.samples.push(a.sample);
                out.accepted += 1;
                if out.accepted == cfg.accepted {
                    break 'outer;
                }
            }
        }
    }
    Ok(out)
}

fn ensemble_notes(rec: &mut RunRecord, ens: &Conditioned, cfg: &ExperimentConfig) {
    let (p, se) = ens.acceptance();
    rec.notes.push(format!(
        "conditioned on 0 <-> boundary of the {}-box (root-positive convention): accepted {} of {} attempts, rate {p:.5} +- {se:.5}",
        cfg.arm_radius, ens.accepted, ens.attempts
    ));
    if ens.accepted < cfg.accepted {
        rec.notes.push(format!("budget exhausted before reaching {} accepted clusters", cfg.accepted));
    }
}

fn median_point(series: &str, x: f64, xs: &[f64]) -> Point {
    let m = median(xs);
    let n = xs.len() as f64;
    // normal-theory error of the median, scale from the interquartile range
    let se = 1.2533 * (quantile(xs, 0.75) - quantile(xs, 0.25)) / 1.349 / n.sqrt();
    Point::plain(series, x, m, se, 0, xs.len() as u64)
}

fn mean_point(series: &str, x: f64, xs: &[f64]) -> Point {
    let (m, se) = mean_se(xs);
    Point::plain(series, x, m, se, 0, xs.len() as u64)
}

fn sphere_targets(dist: &[u32], r: usize) -> Vec<usize> {
    (0..dist.len()).filter(|&v| dist[v] as usize == r).collect()
}

pub fn resistance_record(cfg: &ExperimentConfig, ens: &Conditioned) -> Result<RunRecord> {
    let pool = thread_pool(cfg.workers)?;
    let radii: Vec<usize> = cfg.grid.iter().map(|&r| r as usize).collect();
    let rb = cfg.ball_radius;
    struct PerCluster {
        reff: Vec<Option<f64>>,
        nw: Option<(f64, f64)>,
    }
    let per = pool.install(|| {
        ens.clusters
            .par_iter()
            .map(|c| -> Result<PerCluster> {
                let mut reff = Vec::with_capacity(radii.len());
                for &r in &radii {
                    let (ball, dist) = ball_subgraph(c, r);
                    let targets = sphere_targets(&dist, r);
                    let sol = effective_resistance(&ball, 0, &targets, cfg.cg_tolerance)?;
                    reff.push(sol.resistance.finite().filter(|_| !targets.is_empty()));
                }
                let (ball, dist) = ball_subgraph(c, rb);
                let targets = sphere_targets(&dist, rb);
                let nw = if targets.is_empty() || rb == 0 {
                    None
                } else {
                    let sol = effective_resistance(&ball, 0, &targets, cfg.cg_tolerance)?;
                    let lanes = level_cutsets(&ball, rb)?;
                    let fam = CutsetFamily::new(&ball, lanes, 0, &targets)?;
                    match sol.resistance {
                        Resistance::Finite(r) => Some((generalized_nw_bound(&fam)?, r)),
                        Resistance::Infinite => None,
                    }
                };
                Ok(PerCluster { reff, nw })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rec = RunRecord::new(cfg);
    let mut violations = 0;
    for (i, &r) in radii.iter().enumerate() {
        let xs: Vec<f64> = per.iter().filter_map(|p| p.reff[i]).collect();
        violations += xs.iter().filter(|&&x| x > r as f64 * (1.0 + 1e-9)).count();
        if xs.is_empty() {
            continue;
        }
        rec.points.push(median_point("median R_eff", r as f64, &xs));
        let ratio: Vec<f64> = xs.iter().map(|x| x / r as f64).collect();
        rec.points.push(mean_point("mean R_eff/r", r as f64, &ratio));
    }
    let nw: Vec<(f64, f64)> = per.iter().filter_map(|p| p.nw).collect();
    let unsound = nw.iter().filter(|(b, r)| *b > r + 1e-9).count();
    let good = nw.iter().filter(|(b, r)| *b >= 0.05 * r).count();
    if !nw.is_empty() {
        let frac = good as f64 / nw.len() as f64;
        rec.points.push(Point::plain(
            "P(NW >= 0.05 R_eff)",
            rb as f64,
            frac,
            (frac * (1.0 - frac) / nw.len() as f64).sqrt(),
            good as u128,
            nw.len() as u64,
        ));
        let ratios: Vec<f64> = nw.iter().map(|(b, r)| b / r).collect();
        rec.points.push(median_point("median NW/R_eff", rb as f64, &ratios));
    }
    rec.fits.push(fit_series(&rec.points, "median R_eff", cfg.fit[0], cfg.fit[1], 1.0, cfg.slope_window(0)));
    rec.checks.push(Check {
        name: "R_eff(0, dB(0,r)) <= r".into(),
        passed: violations == 0,
        detail: format!("{violations} violations"),
    });
    rec.checks.push(Check {
        name: "lane NW bound <= R_eff".into(),
        passed: unsound == 0,
        detail: format!("{unsound} violations over {} clusters", nw.len()),
    });
    rec.checks.push(Check {
        name: "lane NW bound >= 0.05 R_eff on >= 80% of clusters (reported)".into(),
        passed: !nw.is_empty() && good * 5 >= nw.len() * 4,
        detail: format!("{good} of {}", nw.len()),
    });
    ensemble_notes(&mut rec, ens, cfg);
    Ok(rec)
}

pub fn conditional_volume_record(cfg: &ExperimentConfig, ens: &Conditioned) -> RunRecord {
    let mut rec = RunRecord::new(cfg);
    let profiles: Vec<Vec<u64>> = ens.clusters.iter().map(|c| bfs_profile(c, ens.r_max).volumes).collect();
    let as_acc = |vols: &[Vec<u64>], r: usize| -> Vec<Acc> {
        vols.iter()
            .map(|v| {
                let mut a = Acc::default();
                a.add(v[r]);
                a
            })
            .collect()
    };
    for &r in &cfg.grid {
        let r = r as usize;
        if r > ens.r_max {
            continue;
        }
        rec.points.push(summarize("E[|B(0,r)| | arm]", r as f64, &as_acc(&profiles, r), &[]));
        rec.points.push(summarize("E|B(0,r)| unconditioned", r as f64, &as_acc(&ens.unconditioned, r), &[]));
    }
    let rb = cfg.ball_radius.min(ens.r_max);
    let r2 = (rb * rb) as f64;
    let mut small = Vec::new();
    for &eps in &cfg.eps {
        let hits = profiles.iter().filter(|v| (v[rb] as f64) <= eps * r2).count() as u64;
        let n = profiles.len() as u64;
        let p = hits as f64 / n.max(1) as f64;
        small.push(p);
        rec.points.push(Point::plain("P(|B(0,r)| <= eps r^2 | arm)", eps, p, (p * (1.0 - p) / n.max(1) as f64).sqrt(), hits as u128, n));
    }
    rec.fits.push(fit_series(&rec.points, "E[|B(0,r)| | arm]", cfg.fit[0], cfg.fit[1], 2.0, cfg.slope_window(0)));
    let mut order: Vec<(f64, f64)> = cfg.eps.iter().copied().zip(small).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mono = order.windows(2).all(|w| w[1].1 <= w[0].1);
    rec.checks.push(Check {
        name: "small-volume probability decreases with eps".into(),
        passed: mono,
        detail: format!("r = {rb}: {order:?}"),
    });
    let cond = rec.series("E[|B(0,r)| | arm]");
    let unc = rec.series("E|B(0,r)| unconditioned");
    let above = cond.iter().zip(&unc).filter(|(c, u)| c.value >= u.value).count();
    rec.notes.push(format!("conditional mean >= unconditioned mean at {above} of {} radii (reported only)", cond.len()));
    ensemble_notes(&mut rec, ens, cfg);
    rec
}

pub fn bjks_record(cfg: &ExperimentConfig, ens: &Conditioned) -> Result<RunRecord> {
    let r = cfg.ball_radius;
    let pool = thread_pool(cfg.workers)?;
    let obs = pool.install(|| {
        ens.clusters
            .par_iter()
            .map(|c| -> Result<Option<(u64, f64)>> {
                let (ball, dist) = ball_subgraph(c, r);
                let targets = sphere_targets(&dist, r);
                if targets.is_empty() || r == 0 {
                    return Ok(None);
                }
                let sol = effective_resistance(&ball, 0, &targets, cfg.cg_tolerance)?;
                Ok(sol.resistance.finite().map(|x| (ball.len() as u64, x)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let obs: Vec<(u64, f64)> = obs.into_iter().flatten().filter(|o| o.1 > 0.0).collect();
    let mut rec = RunRecord::new(cfg);
    let n = obs.len() as u64;
    let rf = r as f64;
    let mut freqs = Vec::new();
    for &lambda in &cfg.lambdas {
        let hits = obs
            .iter()
            .filter(|(v, reff)| {
                let v = *v as f64;
                v >= rf * rf / lambda && v <= lambda * rf * rf && *reff >= rf / lambda
            })
            .count() as u64;
        let p = hits as f64 / n.max(1) as f64;
        freqs.push((lambda, p));
        rec.points.push(Point::plain("P(BJKS event)", lambda, p, (p * (1.0 - p) / n.max(1) as f64).sqrt(), hits as u128, n));
        rec.points.push(Point::plain("1-P(BJKS event)", lambda, 1.0 - p, (p * (1.0 - p) / n.max(1) as f64).sqrt(), (n - hits) as u128, n));
    }
    freqs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mono = freqs.windows(2).all(|w| w[1].1 >= w[0].1);
    let miss: Vec<(f64, f64)> = freqs.iter().filter(|f| f.1 < 1.0).map(|f| (f.0, 1.0 - f.1)).collect();
    let trend = match loglog_slope(&miss) {
        Ok(f) => f.slope < 0.0,
        // at most one lambda misses: the miss rate hits zero, faster than any power
        Err(_) => freqs.last().is_some_and(|f| f.1 == 1.0),
    };
    rec.checks.push(Check { name: "frequency nondecreasing in lambda".into(), passed: mono, detail: format!("{freqs:?}") });
    rec.checks.push(Check {
        name: "1 - frequency decays like a power of 1/lambda".into(),
        passed: mono && trend,
        detail: format!("{} clusters with a nonempty sphere at r = {r}", n),
    });
    if let Ok(f) = loglog_slope(&miss) {
        rec.fits.push(SlopeFit {
            series: "1-P(BJKS event)".into(),
            slope: f.slope,
            stderr: f.stderr,
            points: f.points,
            lo: miss.first().map_or(f64::NAN, |m| m.0),
            hi: miss.last().map_or(f64::NAN, |m| m.0),
            target: f64::NAN,
            window: f64::NAN,
            within: f.slope < 0.0,
        });
    }
    rec.notes.push("volume window lambda^-1 r^2 <= |B(0,r)| <= lambda r^2 (quadratic in r, as used for the conditional estimates)".into());
    ensemble_notes(&mut rec, ens, cfg);
    Ok(rec)
}

fn walk_radii(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut r: Vec<usize> = cfg.grid.iter().map(|&x| x as usize).collect();
    r.sort_unstable();
    r.dedup();
    r
}

fn checkpoints(steps: u64) -> Vec<u64> {
    dyadic(1, steps)
}

/// Walk statistics on one cluster, with the walk mass dropped by pruning.
fn walk_on(cfg: &ExperimentConfig, streams: &Streams, graph: &ClusterGraph, sample: u64) -> Result<(WalkStats, f64)> {
    let radii = walk_radii(cfg);
    let cps = checkpoints(cfg.walk_steps);
    let mut stats = WalkStats::new(cfg.n_max, radii.clone(), cps.clone());
    if graph.len() < 2 {
        stats.excluded += 1;
        return Ok((stats, 0.0));
    }
    let returns = return_probability_pruned(graph, cfg.n_max, cfg.prune);
    stats.add_returns(&returns);
    let dist = graph.distances();
    let mut rng = streams.rng(sample, Purpose::Walk);
    for _ in 0..cfg.walks {
        let tr = simulate_walk(graph, &dist, cfg.walk_steps, &radii, &cps, &mut rng)?;
        stats.add_trajectory(&tr, cfg.walk_steps);
    }
    Ok((stats, returns.dropped))
}

fn walk_record(cfg: &ExperimentConfig, stats: &WalkStats) -> Result<RunRecord> {
    let mut rec = RunRecord::new(cfg);
    let curve = stats.return_curve();
    for n in dyadic(1, cfg.n_max as u64) {
        let (m, se) = curve[n as usize];
        rec.points.push(Point::plain("p_2n", n as f64, m, se, 0, stats.returns.len() as u64));
    }
    for (i, &r) in stats.radii.iter().enumerate() {
        let (m, se) = mean_se(&stats.tau[i]);
        let mut p = Point::plain("E tau_r", r as f64, m, se, stats.tau[i].iter().map(|&t| t as u128).sum(), stats.tau[i].len() as u64);
        p.censored = stats.censored[i];
        rec.points.push(p);
    }
    for (i, &n) in stats.checkpoints.iter().enumerate() {
        let (m, se) = mean_se(&stats.range[i]);
        rec.points.push(Point::plain("E range_n", n as f64, m, se, stats.range[i].iter().map(|&t| t as u128).sum(), stats.range[i].len() as u64));
    }
    let (rl, rh) = ExperimentConfig::window(&cfg.fit_return, "fit_return")?;
    let (el, eh) = ExperimentConfig::window(&cfg.fit_exit, "fit_exit")?;
    let (gl, gh) = ExperimentConfig::window(&cfg.fit_range, "fit_range")?;
    let win = FitWindows { return_n: (rl as usize, rh as usize), exit_r: (el as usize, eh as usize), range_n: (gl as u64, gh as u64) };
    let targets = [-2.0 / 3.0, 3.0, 2.0 / 3.0];
    match exponent_fit(stats, &win) {
        Ok(fits) => {
            let all = [("p_2n", fits.returns, rl, rh), ("E tau_r", fits.exit, el, eh), ("E range_n", fits.range, gl, gh)];
            for (i, (name, f, lo, hi)) in all.into_iter().enumerate() {
                let window = cfg.slope_window(i);
                rec.fits.push(SlopeFit {
                    series: name.into(),
                    slope: f.slope,
                    stderr: f.stderr,
                    points: f.points,
                    lo,
                    hi,
                    target: targets[i],
                    window,
                    within: (f.slope - targets[i]).abs() <= window,
                });
            }
            rec.notes.extend(fits.warnings);
        }
        Err(e) => rec.notes.push(format!("exponent fit failed: {e}")),
    }
    if stats.excluded > 0 {
        rec.notes.push(format!("{} singleton clusters excluded", stats.excluded));
    }
    Ok(rec)
}

pub fn ao_record(cfg: &ExperimentConfig, ens: &Conditioned) -> Result<RunRecord> {
    let pool = thread_pool(cfg.workers)?;
    let streams = Streams::new(cfg.seed);
    let parts = pool.install(|| {
        ens.clusters
            .par_iter()
            .zip(&ens.samples)
            .map(|(c, &s)| walk_on(cfg, &streams, c, s))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut stats = WalkStats::new(cfg.n_max, walk_radii(cfg), checkpoints(cfg.walk_steps));
    for (p, _) in parts {
        stats.merge(p);
    }
    let mut rec = walk_record(cfg, &stats)?;
    ensemble_notes(&mut rec, ens, cfg);
    Ok(rec)
}

pub fn gw_calibrate(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    let pool = thread_pool(cfg.workers)?;
    let streams = Streams::new(cfg.seed);
    let parts = par_map(&pool, 0..cfg.samples, |s| {
        let mut rng = streams.rng(s, Purpose::Tree);
        let tree = kesten_tree(cfg.tree_depth, &mut rng);
        let (stats, dropped) = walk_on(cfg, &streams, &tree.graph, s)?;
        Ok((stats, dropped, tree.truncated, tree.graph.len()))
    })?;
    let mut stats = WalkStats::new(cfg.n_max, walk_radii(cfg), checkpoints(cfg.walk_steps));
    let (mut truncated, mut vertices, mut dropped) = (0, 0, 0.0f64);
    for (p, dr, t, n) in parts {
        stats.merge(p);
        dropped = dropped.max(dr);
        truncated += t;
        vertices += n;
    }
    let mut rec = walk_record(cfg, &stats)?;
    rec.notes.push(format!(
        "{} Kesten trees cut at depth {}: {vertices} vertices, {truncated} cut vertices; pruning threshold {} dropped at most {dropped:.3e} of the walk mass per tree",
        cfg.samples, cfg.tree_depth, cfg.prune
    ));
    Ok(finish(rec, start))
}

fn conditioned_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let ens = conditioned_ensemble(cfg)?;
    let rec = match cfg.experiment.as_str() {
        "resistance" => resistance_record(cfg, &ens)?,
        "conditional-volume" => conditional_volume_record(cfg, &ens),
        "bjks" => bjks_record(cfg, &ens)?,
        "ao" => ao_record(cfg, &ens)?,
        other => return Err(Error::Config(format!("`{other}` is not a conditioned experiment"))),
    };
    Ok(finish(rec, start))
}

fn soup_config(cfg: &ExperimentConfig) -> SoupConfig {
    SoupConfig { k_max: cfg.k_max, tolerance: cfg.loop_tolerance, memory_budget: cfg.memory_budget, ..SoupConfig::default() }
}

/// `P(some loop of length >= L meets B(0, r))` in the fundamental cluster
/// of the centre.
pub fn large_loop_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    let geom = cfg.geometry()?;
    let sampler = FreeLoopSoupSampler::new(&geom, soup_config(cfg))?;
    let streams = Streams::new(cfg.seed);
    let pool = thread_pool(cfg.workers)?;
    let centre = geom.center();
    let grid = cfg.grid.clone();
    let longest = par_map(&pool, 0..cfg.samples, |s| {
        let soup = sampler.sample(&streams, s);
        let config = fundamental_cluster_edges(&soup);
        let ball = ball_vertices(&geom, &config, centre, cfg.ball_radius);
        Ok(soup.loops.iter().filter(|lp| lp.vertices.iter().any(|v| ball.contains(v))).map(|lp| lp.k).max().unwrap_or(0))
    })?;
    let mut rec = RunRecord::new(cfg);
    let n = longest.len() as u64;
    for &l in &grid {
        let hits = longest.iter().filter(|&&k| k as u64 >= l && l > 0).count() as u64;
        let p = hits as f64 / n as f64;
        let mut pt = Point::plain("P(loop >= L meets B(0,r))", l as f64, p, (p * (1.0 - p) / n as f64).sqrt(), hits as u128, n);
        if l as usize > cfg.k_max {
            pt.censored = n;
        }
        rec.points.push(pt);
    }
    let fit_pts: Vec<Point> = rec.points.iter().filter(|p| p.censored == 0).cloned().collect();
    rec.fits.push(fit_series(&fit_pts, "P(loop >= L meets B(0,r))", cfg.fit[0], cfg.fit[1], 1.0 - cfg.d as f64 / 2.0, cfg.slope_window(0)));
    rec.checks.push(Check { name: "nonincreasing in L".into(), passed: nonincreasing(&fit_pts), detail: String::new() });
    rec.notes.push(format!("ball radius {} in the fundamental (loop) cluster of the centre; loops longer than k_max = {} are truncated", cfg.ball_radius, cfg.k_max));
    Ok(finish(rec, start))
}

fn ball_vertices(geom: &BoxGeometry, config: &EdgeConfig, root: usize, r: usize) -> HashSet<usize> {
    let mut seen = HashSet::from([root]);
    let mut frontier = vec![root];
    for _ in 0..r {
        let mut next = Vec::new();
        for &v in &frontier {
            geom.for_each_neighbor(v, |w, slot| {
                if config.is_open(slot) && seen.insert(w) {
                    next.push(w);
                }
            });
        }
        frontier = next;
    }
    seen
}

/// Sample fields; `sink` receives each field with its edge configuration.
pub fn sample_gff_experiment(cfg: &ExperimentConfig, mut sink: impl FnMut(&GffSample, &EdgeConfig) -> Result<()>) -> Result<RunRecord> {
    let start = Instant::now();
    let h = harness(cfg)?;
    let c = h.geom.center();
    let mut sq = Vec::new();
    let mut open = Acc::default();
    for s in 0..cfg.samples {
        let field = sample_dgff_with(&h.spectrum, &h.streams, s);
        let config = sample_cable_clusters(&field, &h.streams);
        sq.push(field.values[c] * field.values[c]);
        let mut a = Acc::default();
        a.sum = config.open_count() as u128;
        a.count = h.geom.edge_slots() as u64;
        open.merge(&a);
        sink(&field, &config)?;
    }
    let mut rec = RunRecord::new(cfg);
    rec.points.push(mean_point("phi(centre)^2", 0.0, &sq));
    rec.points.push(Point::plain("open edge slots", 0.0, open.sum as f64 / open.count as f64, f64::NAN, open.sum, open.count));
    rec.notes.push(format!("G(centre, centre) = {}", green_function(&h.geom, c, c)?));
    Ok(finish(rec, start))
}

/// Sample loop soups with the exact bridge sampler (falling back to the
/// free-bridge sampler when the kernel tables exceed the memory budget).
pub fn loop_soup_experiment(cfg: &ExperimentConfig, mut sink: impl FnMut(&LoopSoupSample) -> Result<()>) -> Result<RunRecord> {
    let start = Instant::now();
    cfg.validate()?;
    let geom = cfg.geometry()?;
    let streams = Streams::new(cfg.seed);
    let mut rec = RunRecord::new(cfg);
    let exact = match LoopSoupSampler::new(&geom, soup_config(cfg)) {
        Ok(x) => Ok(x),
        Err(Error::MemoryBudget { .. }) => Err(FreeLoopSoupSampler::new(&geom, soup_config(cfg))?),
        Err(e) => return Err(e),
    };
    let mut by_len = vec![0u64; cfg.k_max + 1];
    let mut residual = 0.0;
    for s in 0..cfg.samples {
        let soup = match &exact {
            Ok(x) => x.sample(&streams, s),
            Err(f) => f.sample(&streams, s),
        };
        residual = soup.residual;
        for lp in &soup.loops {
            by_len[lp.k] += 1;
        }
        sink(&soup)?;
    }
    for (k, &c) in by_len.iter().enumerate() {
        if c > 0 {
            rec.points.push(Point::plain("loops of length k", k as f64, c as f64 / cfg.samples as f64, f64::NAN, c as u128, cfg.samples));
        }
    }
    rec.notes.push(format!(
        "{} sampler, alpha = {ALPHA}, truncation residual <= {residual:.3e} loops per vertex",
        if exact.is_err() { "free-bridge" } else { "exact bridge" }
    ));
    Ok(finish(rec, start))
}

/// Run any named experiment without persisting samples.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    match cfg.experiment.as_str() {
        "sample-gff" => sample_gff_experiment(cfg, |_, _| Ok(())),
        "loop-soup" => loop_soup_experiment(cfg, |_| Ok(())),
        "two-point" => two_point_experiment(cfg),
        "cluster-tail" | "volume" | "second-moment" | "one-arm-intrinsic" | "one-arm-extrinsic" => harvest_experiment(cfg),
        "large-loop" => large_loop_experiment(cfg),
        "resistance" | "conditional-volume" | "bjks" | "ao" => conditioned_experiment(cfg),
        "gw-calibrate" => gw_calibrate(cfg),
        "oracle" => oracle_experiment(cfg),
        "validate" => validate_experiment(cfg),
        other => Err(Error::Config(format!("unknown experiment `{other}`"))),
    }
}

/// Deterministic lattice-sum checks; one point per truncated sum, its
/// ratio to the claimed bound form.
pub fn oracle_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let mut rec = RunRecord::new(cfg);
    for lc in crate::oracle::lemma_suite()? {
        for r in &lc.reports {
            let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let mut p = Point::plain(&format!("{} {}", r.lemma, params.join(" ")), r.horizon as f64, r.ratio, f64::NAN, 0, 1);
            p.single_value = r.value;
            rec.points.push(p);
        }
        rec.checks.push(check(&lc.name, lc.passed, lc.detail));
    }
    rec.notes.push("value = truncated sum (single_value column), x = horizon, value column = ratio to the bound form".into());
    Ok(finish(rec, start))
}

pub fn validate_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let mut rec = RunRecord::new(cfg);
    rec.checks = validation_suite()?;
    Ok(finish(rec, start))
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, detail: detail.into() }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Dense `(2d I - A)^{-1}` by Gauss-Jordan elimination, for small boxes.
pub fn dense_green(geom: &BoxGeometry) -> Vec<Vec<f64>> {
    let n = geom.len();
    let mut a = vec![vec![0.0; 2 * n]; n];
    for v in 0..n {
        a[v][v] = 2.0 * geom.dim() as f64;
        a[v][n + v] = 1.0;
        geom.for_each_neighbor(v, |w, _| a[v][w] -= 1.0);
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        a.swap(col, piv);
        let p = a[col][col];
        for x in a[col].iter_mut() {
            *x /= p;
        }
        let row = a[col].clone();
        for (i, r) in a.iter_mut().enumerate() {
            if i != col && r[col] != 0.0 {
                let f = r[col];
                for (x, y) in r.iter_mut().zip(&row) {
                    *x -= f * y;
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Exact checks with known closed-form answers; all must pass.
pub fn validation_suite() -> Result<Vec<Check>> {
    use crate::loopsoup::DiscreteLoop;
    let mut out = Vec::new();

    let g25 = BoxGeometry::cube(2, 5)?;
    let g23 = BoxGeometry::cube(2, 3)?;
    let g35 = BoxGeometry::cube(3, 5)?;
    out.push(check(
        "neighbour counts",
        g25.neighbors(g25.center())?.len() == 4 && g23.neighbors(0)?.len() == 2 && g35.neighbors(g35.center())?.len() == 6,
        "",
    ));

    let p: Vec<f64> = (1..=5).map(|d| free_kernel(&vec![0; d], 2)[2]).collect();
    out.push(check("p_2(x, x) = 1/(2d) on the free lattice", p.iter().enumerate().all(|(i, &v)| close(v, 1.0 / (2.0 * (i + 1) as f64), 1e-15)), format!("{p:?}")));

    let g1 = BoxGeometry::cube(1, 1)?;
    let g2 = BoxGeometry::cube(1, 2)?;
    out.push(check(
        "Green function of tiny boxes",
        close(green_function(&g1, 0, 0)?, 0.5, 1e-14) && close(green_function(&g2, 0, 0)?, 2.0 / 3.0, 1e-14) && close(green_function(&g2, 0, 1)?, 1.0 / 3.0, 1e-14),
        "",
    ));

    let g44 = BoxGeometry::cube(2, 4)?;
    let dense = dense_green(&g44);
    let spec = Spectrum::new(&g44);
    let mut worst: f64 = 0.0;
    for (x, row) in dense.iter().enumerate() {
        for (y, &val) in row.iter().enumerate() {
            worst = worst.max((spec.green(x, y) - val).abs());
        }
    }
    out.push(check("spectral Green function equals the dense inverse on 4x4", worst <= 1e-10, format!("max deviation {worst:.2e}")));

    out.push(check("edge rule 1 - exp(-2ab)", close(open_edge_prob(1.0, 1.0), 1.0 - (-2.0f64).exp(), 1e-15) && open_edge_prob(-1.0, 1.0) == 0.0, ""));

    let g33 = BoxGeometry::cube(2, 3)?;
    let x = g33.center();
    let y = g33.neighbors(x)?[0];
    let back = DiscreteLoop::from_closed(&g33, &[x, y, x])?;
    let square = DiscreteLoop::from_closed(&g33, &[0, 1, 4, 3, 0])?;
    let double = DiscreteLoop::from_closed(&g33, &[x, y, x, y, x])?;
    let vals = [
        loop_class_intensity(&back, 2, ALPHA),
        loop_class_intensity(&square, 2, ALPHA),
        loop_class_intensity(&double, 2, ALPHA),
    ];
    out.push(check(
        "loop intensities 1/32, 1/512, 1/1024",
        close(vals[0], 1.0 / 32.0, 1e-15) && close(vals[1], 1.0 / 512.0, 1e-15) && close(vals[2], 1.0 / 1024.0, 1e-15),
        format!("{vals:?}"),
    ));

    let gr = |n: usize, e: &[(usize, usize)]| ClusterGraph::from_edges(n, e, 0);
    let reff = |g: &ClusterGraph, t: usize| -> Result<f64> {
        Ok(effective_resistance(g, 0, &[t], 1e-12)?.resistance.finite().unwrap_or(f64::INFINITY))
    };
    let r = [
        reff(&gr(2, &[(0, 1)])?, 1)?,
        reff(&gr(2, &[(0, 1), (0, 1)])?, 1)?,
        reff(&gr(4, &[(0, 1), (1, 2), (2, 3)])?, 3)?,
        reff(&gr(3, &[(0, 1), (1, 2), (2, 0)])?, 1)?,
    ];
    out.push(check(
        "effective resistances 1, 1/2, 3, 2/3",
        close(r[0], 1.0, 1e-8) && close(r[1], 0.5, 1e-8) && close(r[2], 3.0, 1e-8) && close(r[3], 2.0 / 3.0, 1e-8),
        format!("{r:?}"),
    ));

    let path = gr(5, &[(0, 1), (1, 2), (2, 3), (3, 4)])?;
    let lanes = level_cutsets(&path, 4)?;
    let fam = CutsetFamily::new(&path, lanes, 0, &[4])?;
    let pair = gr(3, &[(0, 1), (1, 2), (1, 2)])?;
    let disjoint = CutsetFamily::new(&pair, vec![vec![0], vec![1, 2]], 0, &[2])?;
    let twice = CutsetFamily::new(&pair, vec![vec![1, 2], vec![1, 2]], 0, &[2])?;
    out.push(check(
        "Nash-Williams examples",
        close(generalized_nw_bound(&fam)?, 4.0, 1e-12)
            && close(classical_nw_bound(&disjoint)?, 1.5, 1e-12)
            && close(generalized_nw_bound(&twice)?, 0.5, 1e-12),
        "",
    ));

    let tree = gr(7, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)])?;
    let tl = level_cutsets(&tree, 2)?;
    out.push(check("lanes of a binary tree", tl[0].len() == 2 && tl[1].len() == 4, format!("{:?}", tl.iter().map(Vec::len).collect::<Vec<_>>())));

    let rp = |g: &ClusterGraph| return_probability_pruned(g, 1, 0.0).p2n[1];
    let centre = ClusterGraph::from_edges(3, &[(1, 0), (1, 2)], 1)?;
    out.push(check(
        "return probabilities 1, 1, 1/2",
        rp(&gr(2, &[(0, 1)])?) == 1.0 && rp(&centre) == 1.0 && close(rp(&gr(4, &[(0, 1), (1, 2), (2, 3), (3, 0)])?), 0.5, 1e-15),
        "",
    ));

    let s1 = loglog_slope(&[(1.0, 1.0), (2.0, 4.0), (4.0, 16.0)])?.slope;
    let s2 = loglog_slope(&[(1.0, 3.0), (2.0, 3.0), (4.0, 3.0)])?.slope;
    let s3 = loglog_slope(&[(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)])?.slope;
    out.push(check("log-log slopes 2, 0, -1", close(s1, 2.0, 1e-12) && close(s2, 0.0, 1e-12) && close(s3, -1.0, 1e-12), ""));

    let one = crate::oracle::one_point_loop_sum(8, 0, 2, 2)?;
    let small = crate::oracle::check_small_loops()?;
    out.push(check("loop sums: one-point base case and short loops", close(one.value, 1.0 / 16.0, 1e-15) && small.passed, small.detail));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_overrides() {
        for name in EXPERIMENTS {
            let c = ExperimentConfig::defaults(name).unwrap();
            let text = c.to_text();
            assert_eq!(ExperimentConfig::parse(&text).unwrap(), c, "{name}");
        }
        let mut c = ExperimentConfig::parse("experiment = two-point\nside = 32 # sites\n").unwrap();
        assert_eq!(c.side, 32);
        assert_eq!(c.d, 3);
        c.apply_overrides(&["side=16", "grid = 1,2"]).unwrap();
        assert_eq!((c.side, c.grid.clone()), (16, vec![1, 2]));
        assert!(matches!(ExperimentConfig::parse("experiment = volume\nbogus = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("experiment = volume\nd = x"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("d = 3"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("experiment = nope"), Err(Error::Config(_))));
        assert!(c.apply_overrides(&["nokey=1"]).is_err());
    }

    #[test]
    fn validation_rejects_bad_grids() {
        let mut c = ExperimentConfig::defaults("two-point").unwrap();
        c.grid = vec![0, 1];
        assert!(c.validate().is_err());
        c.grid.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::defaults("volume").unwrap();
        c.fit = vec![3.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn ratio_estimator_errors() {
        let mut a = Acc::default();
        a.add(1);
        a.add(0);
        let mut b = Acc::default();
        b.add(1);
        b.add(1);
        let p = summarize("s", 1.0, &[a, b], &[]);
        assert_eq!((p.tally, p.trials), (3, 4));
        assert!((p.value - 0.75).abs() < 1e-15);
        assert!((p.se_pooled - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
        assert!((p.se_fields - 0.25).abs() < 1e-12);
        assert!(p.single_value.is_nan());
    }

    #[test]
    fn fit_recovers_power_law() {
        let pts: Vec<Point> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&x: &f64| Point::plain("s", x, x.powf(-1.5), 0.01, 0, 10))
            .collect();
        let f = fit_series(&pts, "s", 1.0, 8.0, -1.5, 0.1);
        assert!((f.slope + 1.5).abs() < 1e-12 && f.within && f.points == 4);
        let f = fit_series(&pts, "s", 16.0, 32.0, -1.5, 0.1);
        assert!(f.slope.is_nan() && !f.within);
    }

    #[test]
    fn records_round_trip_through_jsonl_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        let mut cfg = ExperimentConfig::defaults("two-point").unwrap();
        cfg.side = 8;
        cfg.samples = 3;
        cfg.grid = vec![1, 2];
        cfg.margin = Some(2);
        let rec = run_experiment(&cfg).unwrap();
        rec.append_jsonl(&path).unwrap();
        rec.append_jsonl(&path).unwrap();
        let back = RunRecord::read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].tallies(), rec.tallies());
        let mut csv = Vec::new();
        rec.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 2);
        let mut svg = Vec::new();
        rec.write_svg(&mut svg).unwrap();
        assert!(String::from_utf8(svg).unwrap().starts_with("<svg"));
    }

    #[test]
    fn dense_green_matches_closed_forms() {
        let g = BoxGeometry::cube(1, 2).unwrap();
        let m = dense_green(&g);
        assert!((m[0][0] - 2.0 / 3.0).abs() < 1e-14 && (m[0][1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn validation_suite_passes() {
        for c in validation_suite().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
