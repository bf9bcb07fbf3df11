use std::fs::File;
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    derive_seed, fmt_sig9, meta_path, problem_suite, round_sig9, streams, write_meta,
    ExperimentConfig, PlannerSpec, PredictorSpec, SuiteProblem,
};
use crate::conformal::{CalibrationModel, PredictionRegions};
use crate::dynamics::ModelParams;
use crate::env::PlanningProblem;
use crate::error::{Error, Result};
use crate::planner::{gamma_for_world, plan, PlannerConfig, SamplerConfig};

pub const RUN_COLUMNS: [&str; 9] = [
    "planner",
    "problem_id",
    "seed",
    "success",
    "time_s",
    "iters_to_first",
    "first_cost",
    "nodes",
    "fallbacks",
];

pub const AGGREGATE_COLUMNS: [&str; 12] = [
    "planner",
    "runs",
    "successes",
    "success_rate",
    "mean_time_s",
    "median_time_s",
    "std_time_s",
    "mean_iters_to_first",
    "median_iters_to_first",
    "mean_first_cost",
    "improvement_mean_pct",
    "improvement_median_pct",
];

/// One planning run. Floats are already rounded to 9 significant digits,
/// so aggregates over these rows equal aggregates over the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub planner: String,
    pub problem_id: String,
    pub seed: u64,
    pub success: bool,
    pub time_s: Option<f64>,
    pub iters_to_first: Option<usize>,
    pub first_cost: Option<f64>,
    pub nodes: usize,
    pub fallbacks: usize,
}

impl RunResult {
    fn record(&self) -> Vec<String> {
        let opt_f = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
        vec![
            self.planner.clone(),
            self.problem_id.clone(),
            self.seed.to_string(),
            self.success.to_string(),
            opt_f(self.time_s),
            self.iters_to_first.map(|v| v.to_string()).unwrap_or_default(),
            opt_f(self.first_cost),
            self.nodes.to_string(),
            self.fallbacks.to_string(),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| Error::Parse(format!("bad {what} in {r:?}"));
        let field = |i: usize| r.get(i).ok_or_else(|| bad(RUN_COLUMNS[i]));
        let opt_f = |i: usize| -> Result<Option<f64>> {
            let s = field(i)?;
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(RUN_COLUMNS[i]))
            }
        };
        Ok(Self {
            planner: field(0)?.to_string(),
            problem_id: field(1)?.to_string(),
            seed: field(2)?.parse().map_err(|_| bad("seed"))?,
            success: field(3)?.parse().map_err(|_| bad("success"))?,
            time_s: opt_f(4)?,
            iters_to_first: match field(5)? {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("iters_to_first"))?),
            },
            first_cost: opt_f(6)?,
            nodes: field(7)?.parse().map_err(|_| bad("nodes"))?,
            fallbacks: field(8)?.parse().map_err(|_| bad("fallbacks"))?,
        })
    }
}

/// Runs one planner on one problem in stop-at-first mode.
///
/// For the conformal planner the clock also covers path prediction and
/// region construction. A predictor failure degrades to uniform sampling.
#[allow(clippy::too_many_arguments)]
pub fn run_one(
    problem_id: &str,
    problem: &PlanningProblem,
    spec: &PlannerSpec,
    params: &ModelParams,
    q_hat: Option<f64>,
    predictor: &PredictorSpec,
    iterations: usize,
    seed: u64,
    gamma: Option<f64>,
) -> Result<RunResult> {
    let mut cfg = PlannerConfig::new(iterations, seed);
    cfg.stop_at_first = true;
    cfg.gamma = Some(gamma.unwrap_or_else(|| gamma_for_world(&problem.world, cfg.dimension)));

    let clock = Instant::now();
    let (sampler, regions) = match spec {
        PlannerSpec::Uniform => (SamplerConfig::uniform(), None),
        PlannerSpec::GoalBiased => (SamplerConfig::goal_biased(), None),
        PlannerSpec::Cp { p_bias, .. } => {
            let q_hat = q_hat.ok_or_else(|| {
                Error::InvalidArgument("cp planner needs a calibration model".into())
            })?;
            match predictor.predict(problem, problem_id) {
                Ok(path) => (SamplerConfig::cp(*p_bias), Some(PredictionRegions::new(path, q_hat)?)),
                Err(e) => {
                    log::warn!("{problem_id}: predictor failed ({e}); sampling uniformly");
                    (SamplerConfig::uniform(), None)
                }
            }
        }
    };
    let prep = clock.elapsed().as_secs_f64();
    let r = plan(problem, params, &sampler, &cfg, regions.as_ref())?;
    let time_s = r.stats.time_to_first.map(|t| round_sig9(prep + t));
    Ok(RunResult {
        planner: spec.tag(),
        problem_id: problem_id.to_string(),
        seed,
        success: time_s.is_some(),
        time_s,
        iters_to_first: r.stats.iterations_to_first,
        first_cost: r.best.map(|b| round_sig9(b.cost())),
        nodes: r.stats.nodes,
        fallbacks: r.stats.fallbacks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub planner: String,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_time_s: Option<f64>,
    pub median_time_s: Option<f64>,
    pub std_time_s: Option<f64>,
    pub mean_iters_to_first: Option<f64>,
    pub median_iters_to_first: Option<f64>,
    pub mean_first_cost: Option<f64>,
    /// `100 (uniform - this) / uniform` on mean time.
    pub improvement_mean_pct: Option<f64>,
    /// Same on median time.
    pub improvement_median_pct: Option<f64>,
}

impl Aggregate {
    fn record(&self) -> Vec<String> {
        let o = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
        vec![
            self.planner.clone(),
            self.runs.to_string(),
            self.successes.to_string(),
            fmt_sig9(self.success_rate),
            o(self.mean_time_s),
            o(self.median_time_s),
            o(self.std_time_s),
            o(self.mean_iters_to_first),
            o(self.median_iters_to_first),
            o(self.mean_first_cost),
            o(self.improvement_mean_pct),
            o(self.improvement_median_pct),
        ]
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

/// Sample standard deviation (0 for a single value).
fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Per-planner statistics in first-appearance order. Times, iterations
/// and costs are taken over successful runs.
pub fn aggregate(rows: &[RunResult]) -> Vec<Aggregate> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.planner.as_str()) {
            order.push(&r.planner);
        }
    }
    let mut out: Vec<Aggregate> = order
        .iter()
        .map(|tag| {
            let mine: Vec<&RunResult> = rows.iter().filter(|r| r.planner == *tag).collect();
            let times: Vec<f64> = mine.iter().filter_map(|r| r.time_s).collect();
            let iters: Vec<f64> = mine.iter().filter_map(|r| r.iters_to_first.map(|i| i as f64)).collect();
            let costs: Vec<f64> = mine.iter().filter_map(|r| r.first_cost).collect();
            let successes = mine.iter().filter(|r| r.success).count();
            Aggregate {
                planner: tag.to_string(),
                runs: mine.len(),
                successes,
                success_rate: successes as f64 / mine.len() as f64,
                mean_time_s: mean(&times),
                median_time_s: median(&times),
                std_time_s: std_dev(&times),
                mean_iters_to_first: mean(&iters),
                median_iters_to_first: median(&iters),
                mean_first_cost: mean(&costs),
                improvement_mean_pct: None,
                improvement_median_pct: None,
            }
        })
        .collect();
    let baseline = out
        .iter()
        .find(|a| a.planner == PlannerSpec::Uniform.tag())
        .map(|a| (a.mean_time_s, a.median_time_s));
    if let Some((base_mean, base_median)) = baseline {
        let pct = |base: Option<f64>, v: Option<f64>| match (base, v) {
            (Some(b), Some(v)) if b > 0.0 => Some(100.0 * (b - v) / b),
            _ => None,
        };
        for a in &mut out {
            a.improvement_mean_pct = pct(base_mean, a.mean_time_s);
            a.improvement_median_pct = pct(base_median, a.median_time_s);
        }
    }
    out
}

pub fn write_runs_csv(path: &Path, rows: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunResult>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.records().map(|r| RunResult::from_record(&r?)).collect()
}

pub fn write_aggregate_csv(path: &Path, aggs: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_COLUMNS)?;
    for a in aggs {
        w.write_record(a.record())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    /// Rows in task order: distribution, world, repeat, planner.
    pub rows: Vec<RunResult>,
    pub aggregates: Vec<Aggregate>,
}

struct Task<'a> {
    order: usize,
    problem: &'a SuiteProblem,
    gamma: f64,
    planner: usize,
    seed: u64,
}

/// Runs every (problem, repeat, planner) combination in stop-at-first
/// mode. With an output directory, rows are appended to `runs.csv` as
/// they finish (so an interrupted run keeps its partial results); the
/// file is rewritten in task order at the end, followed by
/// `aggregate.csv` and the metadata companions.
pub fn run_benchmark(cfg: &ExperimentConfig, calib: Option<&CalibrationModel>) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let params = ModelParams::new(cfg.model);
    let q_hats: Vec<Option<f64>> = cfg
        .planners
        .iter()
        .map(|p| match p {
            PlannerSpec::Cp { alpha, .. } => {
                let model = calib.ok_or_else(|| {
                    Error::InvalidArgument("cp planner needs a calibration model".into())
                })?;
                Ok(Some(model.with_alpha(*alpha)?.q_hat))
            }
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;

    let mut suites = Vec::new();
    for d in &cfg.distributions {
        suites.extend(problem_suite(*d, cfg.n_worlds, cfg.seed)?);
    }
    let gammas: Vec<f64> = suites
        .iter()
        .map(|s| gamma_for_world(&s.problem.world, PlannerConfig::new(1, 0).dimension))
        .collect();
    let mut tasks = Vec::new();
    for (w, sp) in suites.iter().enumerate() {
        let world_seed = derive_seed(cfg.seed, streams::RUNS, w as u64);
        for r in 0..cfg.repeats {
            let seed = derive_seed(world_seed, streams::RUNS, r as u64);
            for planner in 0..cfg.planners.len() {
                tasks.push(Task {
                    order: tasks.len(),
                    problem: sp,
                    gamma: gammas[w],
                    planner,
                    seed,
                });
            }
        }
    }

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let runs_path = cfg.out_dir.as_ref().map(|d| d.join("runs.csv"));
    let run_task = |t: &Task| -> (usize, Result<RunResult>) {
        let spec = &cfg.planners[t.planner];
        let res = run_one(
            &t.problem.id,
            &t.problem.problem,
            spec,
            &params,
            q_hats[t.planner],
            &cfg.predictor,
            cfg.iterations,
            t.seed,
            Some(t.gamma),
        );
        (t.order, res)
    };

    let (tx, rx) = mpsc::channel::<(usize, Result<RunResult>)>();
    let collected = std::thread::scope(|scope| -> Result<Vec<(usize, RunResult)>> {
        let collector = scope.spawn(|| -> Result<Vec<(usize, RunResult)>> {
            let mut file = match &runs_path {
                Some(p) => {
                    let mut w = csv::Writer::from_writer(File::create(p)?);
                    w.write_record(RUN_COLUMNS)?;
                    w.flush()?;
                    Some(w)
                }
                None => None,
            };
            let mut rows = Vec::new();
            let mut first_err = None;
            for (order, res) in rx {
                match res {
                    Ok(row) => {
                        if let Some(w) = file.as_mut() {
                            w.write_record(row.record())?;
                            w.flush()?;
                        }
                        rows.push((order, row));
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            match first_err {
                Some(e) => Err(e),
                None => Ok(rows),
            }
        });
        if cfg.serial {
            for t in &tasks {
                let _ = tx.send(run_task(t));
            }
        } else {
            tasks.par_iter().for_each_with(tx.clone(), |tx, t| {
                let _ = tx.send(run_task(t));
            });
        }
        drop(tx);
        collector.join().expect("collector thread")
    })?;

    let mut collected = collected;
    collected.sort_by_key(|(o, _)| *o);
    let rows: Vec<RunResult> = collected.into_iter().map(|(_, r)| r).collect();
    let aggregates = aggregate(&rows);
    if let (Some(dir), Some(runs)) = (&cfg.out_dir, &runs_path) {
        write_runs_csv(runs, &rows)?;
        write_meta(&meta_path(runs), &bench_meta(cfg, calib))?;
        let agg = dir.join("aggregate.csv");
        write_aggregate_csv(&agg, &aggregates)?;
        write_meta(&meta_path(&agg), &bench_meta(cfg, calib))?;
    }
    Ok(BenchmarkReport { rows, aggregates })
}

#[derive(Serialize)]
struct BenchMeta<'a> {
    experiment: &'a ExperimentConfig,
    calibration: Option<CalibrationSummary>,
}

#[derive(Serialize)]
struct CalibrationSummary {
    q_hat: String,
    alpha: f64,
    n_cal: usize,
    predictor: String,
    distribution: String,
}

fn bench_meta<'a>(cfg: &'a ExperimentConfig, calib: Option<&CalibrationModel>) -> BenchMeta<'a> {
    BenchMeta {
        experiment: cfg,
        calibration: calib.map(|c| CalibrationSummary {
            q_hat: fmt_sig9(c.q_hat),
            alpha: c.alpha,
            n_cal: c.n_cal,
            predictor: c.predictor_tag.clone(),
            distribution: c.distribution_tag.clone(),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub p_bias: f64,
    pub planner: String,
    pub success_rate: f64,
    pub improvement_mean_pct: Option<f64>,
    pub improvement_median_pct: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub benchmark: BenchmarkReport,
    pub cells: Vec<SweepCell>,
}

/// Benchmarks uniform RRT* plus one conformal planner per
/// (alpha, p_bias) cell; the improvement matrix goes to
/// `sweep_matrix.csv`.
pub fn sweep(
    base: &ExperimentConfig,
    calib: &CalibrationModel,
    alphas: &[f64],
    p_biases: &[f64],
) -> Result<SweepReport> {
    let mut cfg = base.clone();
    cfg.planners = vec![PlannerSpec::Uniform];
    for &alpha in alphas {
        for &p_bias in p_biases {
            cfg.planners.push(PlannerSpec::Cp { alpha, p_bias });
        }
    }
    let benchmark = run_benchmark(&cfg, Some(calib))?;
    let mut cells = Vec::new();
    for &alpha in alphas {
        for &p_bias in p_biases {
            let tag = PlannerSpec::Cp { alpha, p_bias }.tag();
            let a = benchmark
                .aggregates
                .iter()
                .find(|a| a.planner == tag)
                .expect("every planner has rows");
            cells.push(SweepCell {
                alpha,
                p_bias,
                planner: tag,
                success_rate: a.success_rate,
                improvement_mean_pct: a.improvement_mean_pct,
                improvement_median_pct: a.improvement_median_pct,
            });
        }
    }
    if let Some(dir) = &cfg.out_dir {
        let path = dir.join("sweep_matrix.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "alpha",
            "p_bias",
            "success_rate",
            "improvement_mean_pct",
            "improvement_median_pct",
        ])?;
        for c in &cells {
            let o = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
            w.write_record([
                fmt_sig9(c.alpha),
                fmt_sig9(c.p_bias),
                fmt_sig9(c.success_rate),
                o(c.improvement_mean_pct),
                o(c.improvement_median_pct),
            ])?;
        }
        w.flush()?;
        write_meta(&meta_path(&path), &bench_meta(&cfg, Some(calib)))?;
    }
    Ok(SweepReport { benchmark, cells })
}
