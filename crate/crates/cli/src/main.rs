//! `cableperc` command line.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cableperc::estimators::{
    loop_soup_experiment, run_experiment, sample_gff_experiment, ExperimentConfig, RunRecord, SCHEMA,
};
use cableperc::field::{write_edges, write_gff};
use cableperc::loopsoup::write_soup_jsonl;
use cableperc::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cableperc", version, about = "Critical cable-graph percolation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample GFF fields and their open cable edges
    SampleGff(Common),
    /// Sample random-walk loop soups at intensity 1/2
    LoopSoup(Common),
    /// Two-point connection probabilities
    TwoPoint(Common),
    /// Cluster size tail P(|C| >= M)
    ClusterTail(Common),
    /// Intrinsic ball volumes E|B(0,r)|
    Volume(Common),
    /// Second moment E|B(0,r)|^2
    SecondMoment(Common),
    /// Intrinsic one-arm probability
    OneArmIntrinsic(Common),
    /// Extrinsic one-arm probability
    OneArmExtrinsic(Common),
    /// Large loops near the origin in the loop-soup cluster
    LargeLoop(Common),
    /// Effective resistance on arm-conditioned clusters
    Resistance(Common),
    /// Volumes of arm-conditioned clusters
    ConditionalVolume(Common),
    /// Volume and resistance window frequencies
    Bjks(Common),
    /// Random walks on arm-conditioned clusters
    Ao(Common),
    /// Deterministic lattice-sum checks
    Oracle(Common),
    /// Random walks on critical Kesten trees
    GwCalibrate(Common),
    /// Exact property and oracle checks
    Validate(Common),
    /// Print the config schema
    Schema,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Config file (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid=1,2,4`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Also write an SVG plot
    #[arg(long)]
    svg: bool,
    /// Print points and fits to stderr
    #[arg(short, long)]
    verbose: bool,
}

impl Command {
    fn split(&self) -> Option<(&'static str, &Common)> {
        use Command::*;
        Some(match self {
            SampleGff(c) => ("sample-gff", c),
            LoopSoup(c) => ("loop-soup", c),
            TwoPoint(c) => ("two-point", c),
            ClusterTail(c) => ("cluster-tail", c),
            Volume(c) => ("volume", c),
            SecondMoment(c) => ("second-moment", c),
            OneArmIntrinsic(c) => ("one-arm-intrinsic", c),
            OneArmExtrinsic(c) => ("one-arm-extrinsic", c),
            LargeLoop(c) => ("large-loop", c),
            Resistance(c) => ("resistance", c),
            ConditionalVolume(c) => ("conditional-volume", c),
            Bjks(c) => ("bjks", c),
            Ao(c) => ("ao", c),
            Oracle(c) => ("oracle", c),
            GwCalibrate(c) => ("gw-calibrate", c),
            Validate(c) => ("validate", c),
            Schema => return None,
        })
    }
}

fn load_config(name: &str, args: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let cfg = if text.lines().any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("experiment")) {
                ExperimentConfig::parse(&text)?
            } else {
                ExperimentConfig::parse(&format!("experiment = {name}\n{text}"))?
            };
            if cfg.experiment != name {
                return Err(Error::Config(format!("config is for `{}`, not `{name}`", cfg.experiment)));
            }
            cfg
        }
        None => ExperimentConfig::defaults(name)?,
    };
    let flags = [
        ("d", args.d.map(|v| v.to_string())),
        ("side", args.side.map(|v| v.to_string())),
        ("samples", args.samples.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.apply_overrides(&args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(name: &str, args: &Common) -> Result<RunRecord, Error> {
    let cfg = load_config(name, args)?;
    fs::create_dir_all(&args.out)?;
    let stem = args.out.join(name);
    let rec = match name {
        "sample-gff" => {
            let mut gff = BufWriter::new(File::create(stem.with_extension("gff"))?);
            let mut edges = BufWriter::new(File::create(stem.with_extension("edges"))?);
            let rec = sample_gff_experiment(&cfg, |f, e| {
                write_gff(&mut gff, f)?;
                write_edges(&mut edges, e)
            })?;
            gff.flush()?;
            edges.flush()?;
            rec
        }
        "loop-soup" => {
            let mut out = BufWriter::new(File::create(stem.with_extension("loops.jsonl"))?);
            let rec = loop_soup_experiment(&cfg, |s| write_soup_jsonl(&mut out, s))?;
            out.flush()?;
            rec
        }
        _ => run_experiment(&cfg)?,
    };
    rec.append_jsonl(&args.out.join("runs.jsonl"))?;
    rec.write_csv(BufWriter::new(File::create(stem.with_extension("csv"))?))?;
    if args.svg {
        rec.write_svg(BufWriter::new(File::create(stem.with_extension("svg"))?))?;
    }
    fs::write(stem.with_extension("config"), cfg.to_text())?;
    Ok(rec)
}

fn report(rec: &RunRecord, verbose: bool, out: &Path) {
    if verbose {
        for p in &rec.points {
            eprintln!("{:<32} {:>8} {:>14.6e} +- {:.2e}", p.series, p.x, p.value, p.se_fields);
        }
    }
    for f in &rec.fits {
        println!(
            "fit {}: slope {:.4} +- {:.4} over [{}, {}], target {} +- {} -> {}",
            f.series,
            f.slope,
            f.stderr,
            f.lo,
            f.hi,
            f.target,
            f.window,
            if f.within { "inside" } else { "outside" }
        );
    }
    for c in &rec.checks {
        println!("{} {}{}", if c.passed { "PASS" } else { "FAIL" }, c.name, if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) });
    }
    for n in &rec.notes {
        println!("note: {n}");
    }
    println!("wrote {} ({:.1} s)", out.display(), rec.wall_seconds);
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::MemoryBudget { .. } | Error::TruncationResidual { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some((name, args)) = cli.command.split() else {
        for (key, ty, unit, meaning) in SCHEMA {
            println!("{key:<16} {ty:<11} {unit:<20} {meaning}");
        }
        return ExitCode::SUCCESS;
    };
    match run(name, args) {
        Ok(rec) => {
            report(&rec, args.verbose, &args.out);
            if name == "validate" && rec.checks.iter().any(|c| !c.passed) {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
