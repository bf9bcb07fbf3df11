use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, streams, Distribution, PredictorSpec};
use crate::conformal::{ncs, CalibrationModel, CalibrationRecord};
use crate::dynamics::{ModelKind, ModelParams, Trajectory};
use crate::env::{PlanningProblem, COLLISION_RESOLUTION};
use crate::error::{Error, Result};
use crate::planner::{gamma_for_world, plan, PlannerConfig, SamplerConfig};

/// A problem with an approximately optimal solution.
#[derive(Clone, Debug)]
pub struct SolvedProblem {
    pub id: String,
    pub problem: PlanningProblem,
    pub solution: Trajectory,
}

/// Draws problems from `dist` on seed stream `stream` and solves each with
/// uniform RRT* at `iters` iterations until `n` are solved. Unsolved
/// problems are resampled; more than `3 n` resamples is an error.
///
/// Returns the solved problems (in draw order) and the resample count.
pub fn solve_problems(
    dist: Distribution,
    model: ModelKind,
    n: usize,
    iters: usize,
    seed: u64,
    stream: u64,
    serial: bool,
) -> Result<(Vec<SolvedProblem>, usize)> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one problem".into()));
    }
    let params = ModelParams::new(model);
    let solve = |i: u64| -> Result<Option<SolvedProblem>> {
        let problem = dist.generate(derive_seed(seed, stream, i))?;
        let mut cfg = PlannerConfig::new(iters, derive_seed(seed, stream ^ (streams::RUNS << 8), i));
        cfg.gamma = Some(gamma_for_world(&problem.world, cfg.dimension));
        let r = plan(&problem, &params, &SamplerConfig::uniform(), &cfg, None)?;
        Ok(r.best.map(|solution| SolvedProblem {
            id: format!("{}-s{stream}-{i:04}", dist.tag()),
            problem,
            solution: solution.densified(COLLISION_RESOLUTION),
        }))
    };

    let mut solved = Vec::with_capacity(n);
    let mut resamples = 0;
    let mut next = 0u64;
    while solved.len() < n {
        let batch: Vec<u64> = (next..next + (n - solved.len()) as u64).collect();
        next += batch.len() as u64;
        let results: Vec<Result<Option<SolvedProblem>>> = if serial {
            batch.iter().map(|&i| solve(i)).collect()
        } else {
            batch.par_iter().map(|&i| solve(i)).collect()
        };
        for r in results {
            match r? {
                Some(s) => solved.push(s),
                None => {
                    resamples += 1;
                    log::warn!("{}: problem unsolved in {iters} iterations, resampling", dist);
                }
            }
        }
        if resamples > 3 * n {
            return Err(Error::Experiment(format!(
                "{resamples} resamples exceed 3 x {n}: {dist} too hard for {iters} iterations"
            )));
        }
    }
    Ok((solved, resamples))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationBuild {
    pub distribution: String,
    pub model: ModelKind,
    pub n_cal: usize,
    pub iterations: usize,
    pub seed: u64,
    pub resamples: usize,
    #[serde(skip)]
    pub records: Vec<CalibrationRecord>,
}

/// Calibration dataset: `n_cal` solved problems from the calibration stream.
pub fn build_calibration(
    dist: Distribution,
    model: ModelKind,
    n_cal: usize,
    iters: usize,
    seed: u64,
    serial: bool,
) -> Result<CalibrationBuild> {
    let (solved, resamples) =
        solve_problems(dist, model, n_cal, iters, seed, streams::CALIBRATION, serial)?;
    let records: Vec<CalibrationRecord> = solved
        .into_iter()
        .map(|s| CalibrationRecord {
            problem: s.problem,
            solution: s.solution,
        })
        .collect();
    for (i, r) in records.iter().enumerate() {
        if !r.verify() {
            return Err(Error::Experiment(format!("calibration record {i} failed verification")));
        }
    }
    Ok(CalibrationBuild {
        distribution: dist.tag(),
        model,
        n_cal,
        iterations: iters,
        seed,
        resamples,
        records,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub distribution: String,
    #[serde(serialize_with = "ser_inf")]
    pub q_hat: f64,
    pub alpha: f64,
    pub n_test: usize,
    pub covered: usize,
    pub coverage: f64,
    pub resamples: usize,
    pub predictor_failures: usize,
    pub scores: Vec<f64>,
    pub histogram: Vec<HistogramBin>,
}

fn ser_inf<S: serde::Serializer>(q: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if q.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*q)
    }
}

/// Fraction of fresh test problems whose approximately optimal solution
/// scores at most `q_hat`. Test problems come from a seed stream disjoint
/// from the calibration stream.
#[allow(clippy::too_many_arguments)]
pub fn eval_coverage(
    dist: Distribution,
    model: ModelKind,
    calib: &CalibrationModel,
    predictor: &PredictorSpec,
    n_test: usize,
    iters: usize,
    seed: u64,
    serial: bool,
) -> Result<CoverageReport> {
    let (solved, resamples) = solve_problems(dist, model, n_test, iters, seed, streams::TEST, serial)?;
    Ok(coverage_of(dist, calib, predictor, &solved, resamples))
}

/// Coverage of `calib` over already solved test problems.
pub(crate) fn coverage_of(
    dist: Distribution,
    calib: &CalibrationModel,
    predictor: &PredictorSpec,
    solved: &[SolvedProblem],
    resamples: usize,
) -> CoverageReport {
    let mut scores = Vec::with_capacity(solved.len());
    let mut failures = 0;
    for s in solved {
        match predictor.predict(&s.problem, &s.id) {
            Ok(path) => scores.push(ncs(&path, &s.solution)),
            Err(e) => {
                failures += 1;
                log::warn!("{}: predictor failed ({e}); not counted", s.id);
            }
        }
    }
    let covered = scores.iter().filter(|s| **s <= calib.q_hat).count();
    CoverageReport {
        distribution: dist.tag(),
        q_hat: calib.q_hat,
        alpha: calib.alpha,
        n_test: scores.len(),
        covered,
        coverage: covered as f64 / scores.len().max(1) as f64,
        resamples,
        predictor_failures: failures,
        histogram: histogram(&scores, 10),
        scores,
    }
}

fn histogram(scores: &[f64], bins: usize) -> Vec<HistogramBin> {
    if scores.is_empty() {
        return Vec::new();
    }
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for s in scores {
        let b = (((s - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[1.0, 2.0, 2.5, 10.0], 3);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(h[2].count, 1);
        assert!(histogram(&[], 3).is_empty());
        assert_eq!(histogram(&[4.0, 4.0], 2)[0].count, 2);
    }
}
