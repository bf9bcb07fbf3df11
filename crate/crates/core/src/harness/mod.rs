//! Experiment pipeline: problem suites, calibration datasets, benchmarks,
//! parameter sweeps and coverage evaluation.
//!
//! Every result file is written next to a `.meta.json` companion holding
//! the full configuration and the build id.

mod bench;
mod calibration;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::ModelKind;
use crate::env::{generate_density_world, generate_maze_world, PlanningProblem};
use crate::error::{Error, Result};
use crate::predictor::{astar_predict, FilePredictor, PredictedPath};

pub use bench::{
    aggregate, read_runs_csv, run_benchmark, run_one, sweep, write_aggregate_csv, write_runs_csv,
    Aggregate, BenchmarkReport, RunResult, SweepCell, SweepReport,
};
pub use calibration::{
    build_calibration, eval_coverage, solve_problems, CalibrationBuild, CoverageReport,
    SolvedProblem,
};

/// Iteration budget used for planning runs and calibration solutions.
pub const DEFAULT_ITERATIONS: usize = 20_000;
pub const DESK_WORLDS: usize = 20;
pub const DESK_REPEATS: usize = 10;
pub const FULL_WORLDS: usize = 50;
pub const FULL_REPEATS: usize = 30;

/// Seed streams keep worlds, calibration problems, test problems and
/// planner runs independent of each other.
pub mod streams {
    pub const WORLDS: u64 = 1;
    pub const CALIBRATION: u64 = 2;
    pub const TEST: u64 = 3;
    pub const RUNS: u64 = 4;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for item `index` of `stream` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(base) ^ stream) ^ index)
}

/// Problem distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Density(u32),
    Maze,
}

impl Distribution {
    pub fn tag(&self) -> String {
        match self {
            Distribution::Density(d) => format!("density-{d}"),
            Distribution::Maze => "maze".into(),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<PlanningProblem> {
        match self {
            Distribution::Density(d) => generate_density_world(*d, seed),
            Distribution::Maze => Ok(generate_maze_world(seed)),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "maze" {
            return Ok(Distribution::Maze);
        }
        let d = s.strip_prefix("density-").unwrap_or(s);
        d.parse()
            .map(Distribution::Density)
            .map_err(|_| Error::InvalidArgument(format!("unknown distribution {s:?}")))
    }
}

/// A generated problem with its stable id.
#[derive(Clone, Debug)]
pub struct SuiteProblem {
    pub id: String,
    pub problem: PlanningProblem,
}

/// `n` problems from `dist`; problem `i` uses seed
/// `derive_seed(seed, WORLDS, i)` and id `<tag>-<i:03>`.
pub fn problem_suite(dist: Distribution, n: usize, seed: u64) -> Result<Vec<SuiteProblem>> {
    (0..n)
        .map(|i| {
            Ok(SuiteProblem {
                id: format!("{}-{i:03}", dist.tag()),
                problem: dist.generate(derive_seed(seed, streams::WORLDS, i as u64))?,
            })
        })
        .collect()
}

/// Which path predictor to use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorSpec {
    Astar,
    /// A JSON path file, or a directory holding `<problem_id>.json`.
    File(PathBuf),
}

impl PredictorSpec {
    pub fn predict(&self, problem: &PlanningProblem, problem_id: &str) -> Result<PredictedPath> {
        match self {
            PredictorSpec::Astar => astar_predict(problem),
            PredictorSpec::File(p) => FilePredictor::new(p).predict_for(problem, problem_id),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            PredictorSpec::Astar => "astar".into(),
            PredictorSpec::File(p) => format!("file:{}", p.display()),
        }
    }
}

impl FromStr for PredictorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "astar" => Ok(PredictorSpec::Astar),
            _ => s
                .strip_prefix("file:")
                .map(|p| PredictorSpec::File(PathBuf::from(p)))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown predictor {s:?}"))),
        }
    }
}

/// A planner entry in a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerSpec {
    Uniform,
    GoalBiased,
    Cp { alpha: f64, p_bias: f64 },
}

impl PlannerSpec {
    pub fn tag(&self) -> String {
        match self {
            PlannerSpec::Uniform => "uniform".into(),
            PlannerSpec::GoalBiased => "goal_biased".into(),
            PlannerSpec::Cp { alpha, p_bias } => format!("cp_a{alpha}_p{p_bias}"),
        }
    }
}

impl FromStr for PlannerSpec {
    type Err = Error;

    /// `uniform`, `goal_biased`, or `cp:<alpha>:<p_bias>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown planner {s:?}"));
        match s {
            "uniform" => Ok(PlannerSpec::Uniform),
            "goal_biased" | "goal-biased" => Ok(PlannerSpec::GoalBiased),
            _ => {
                let rest = s.strip_prefix("cp:").ok_or_else(bad)?;
                let (a, p) = rest.split_once(':').ok_or_else(bad)?;
                Ok(PlannerSpec::Cp {
                    alpha: a.parse().map_err(|_| bad())?,
                    p_bias: p.parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub distributions: Vec<Distribution>,
    pub n_worlds: usize,
    pub repeats: usize,
    pub planners: Vec<PlannerSpec>,
    pub iterations: usize,
    pub seed: u64,
    pub predictor: PredictorSpec,
    /// Run one task at a time on the calling thread.
    pub serial: bool,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 20 worlds, 10 repeats, N = 20,000.
    pub fn desk(model: ModelKind, distributions: Vec<Distribution>, planners: Vec<PlannerSpec>) -> Self {
        Self {
            model,
            distributions,
            n_worlds: DESK_WORLDS,
            repeats: DESK_REPEATS,
            planners,
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            predictor: PredictorSpec::Astar,
            serial: false,
            out_dir: None,
        }
    }

    pub fn full_scale(mut self) -> Self {
        self.n_worlds = FULL_WORLDS;
        self.repeats = FULL_REPEATS;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.n_worlds == 0 || self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "repeats, n_worlds and iterations must be >= 1".into(),
            ));
        }
        if self.planners.is_empty() || self.distributions.is_empty() {
            return Err(Error::InvalidArgument("no planners or distributions".into()));
        }
        for p in &self.planners {
            if let PlannerSpec::Cp { alpha, p_bias } = p {
                if !(*alpha > 0.0 && *alpha < 1.0) || !(0.0..1.0).contains(p_bias) {
                    return Err(Error::InvalidArgument(format!("bad cp planner {p:?}")));
                }
            }
        }
        Ok(())
    }
}

/// `git describe`-style identifier captured at build time.
pub fn build_id() -> String {
    format!(
        "{}-{}",
        env!("CARGO_PKG_VERSION"),
        option_env!("CPRRT_BUILD_ID").unwrap_or("unknown")
    )
}

/// Formats `x` with 9 significant digits.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x.is_infinite() {
            if x > 0.0 { "inf".into() } else { "-inf".into() }
        } else {
            "0".into()
        };
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-5..15).contains(&magnitude) {
        let decimals = (8 - magnitude).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // a carry can add a digit (9.9999999996 -> 10.00000000); reformat
        let again: f64 = s.parse().expect("formatted float");
        let m2 = again.abs().log10().floor() as i32;
        if m2 != magnitude {
            let decimals = (8 - m2).max(0) as usize;
            return format!("{again:.decimals$}");
        }
        s
    } else {
        format!("{x:.8e}")
    }
}

/// `x` rounded to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt_sig9(x).parse().expect("formatted float")
}

/// Writes `value` as pretty JSON to `<path>.meta.json` style companions.
pub fn write_meta<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Meta<'a, T> {
        build_id: String,
        config: &'a T,
    }
    let meta = Meta {
        build_id: build_id(),
        config: value,
    };
    std::fs::write(path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
