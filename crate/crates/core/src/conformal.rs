//! Split conformal calibration of path predictors.
//!
//! The nonconformity score of a predicted path `p` against a trajectory
//! `z` is the largest distance from a trajectory sample to the waypoint
//! whose Voronoi cell contains it. Calibrating over `N` solved problems
//! gives a radius `q_hat`; the point-wise sets
//! `C_k = { q in V(k) : |q - p(k)| <= q_hat }` then cover the optimal
//! trajectory with probability at least `1 - alpha`.
//!
//! Voronoi ties go to the lowest waypoint index everywhere in this module,
//! so the score route and the union-of-cells route agree exactly.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dynamics::Trajectory;
use crate::env::{PlanningProblem, Point, Rect, COLLISION_RESOLUTION};
use crate::error::{Error, Result};
use crate::predictor::{PathPredictor, PredictedPath};

/// Index of the waypoint nearest to `q`, lowest index on ties.
///
/// Panics on an empty waypoint list.
#[inline]
pub fn voronoi_index(points: &[Point], q: Point) -> usize {
    let mut best = 0;
    let mut best_d = points[0].distance_sq(q);
    for (k, p) in points.iter().enumerate().skip(1) {
        let d = p.distance_sq(q);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Score over an explicit sample sequence.
pub fn ncs_samples(path: &PredictedPath, samples: impl IntoIterator<Item = Point>) -> f64 {
    samples
        .into_iter()
        .map(|q| q.distance(path.points[voronoi_index(&path.points, q)]))
        .fold(0.0, f64::max)
}

/// Nonconformity score of `trajectory` against `path`, on positions only.
/// The trajectory should already be sampled at 0.25 m or finer.
pub fn ncs(path: &PredictedPath, trajectory: &Trajectory) -> f64 {
    ncs_samples(path, trajectory.positions())
}

/// Conformal rank `r = ceil((1 - alpha)(n + 1))`.
///
/// A 1e-9 slack absorbs the rounding of `1 - alpha` so that products
/// that are integers in exact arithmetic do not round up.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    (((1.0 - alpha) * (n as f64 + 1.0)) - 1e-9).ceil().max(1.0) as usize
}

/// `r`-th smallest score, or +∞ when `r > n`. Returns `(q_hat, r)`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> (f64, usize) {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = conformal_rank(sorted.len(), alpha);
    let q = if r <= sorted.len() {
        sorted[r - 1]
    } else {
        f64::INFINITY
    };
    (q, r)
}

/// One calibration example: a problem and an approximately optimal solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub problem: PlanningProblem,
    pub solution: Trajectory,
}

impl CalibrationRecord {
    /// Starts at the start position, ends in the goal disc, and every
    /// consecutive pair of states is segment-free at 0.25 m.
    pub fn verify(&self) -> bool {
        let states = &self.solution.states;
        let Some(last) = states.last() else {
            return false;
        };
        states[0].position().distance(self.problem.start) < 1e-9
            && self.problem.in_goal(last)
            && states.windows(2).all(|w| {
                self.problem.world.segment_free(
                    w[0].position(),
                    w[1].position(),
                    COLLISION_RESOLUTION,
                )
            })
    }
}

pub fn write_records(path: &Path, records: &[CalibrationRecord]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<CalibrationRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

fn ser_q_hat<S: Serializer>(q: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if q.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*q)
    }
}

fn de_q_hat<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Q {
        Num(f64),
        Str(String),
    }
    match Q::deserialize(d)? {
        Q::Num(v) => Ok(v),
        Q::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Q::Str(s) => Err(serde::de::Error::custom(format!("bad q_hat {s:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    #[serde(serialize_with = "ser_q_hat", deserialize_with = "de_q_hat")]
    pub q_hat: f64,
    pub alpha: f64,
    pub n_cal: usize,
    /// Ascending.
    pub scores: Vec<f64>,
    #[serde(rename = "predictor")]
    pub predictor_tag: String,
    #[serde(rename = "distribution")]
    pub distribution_tag: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CalibrationModel {
    /// Calibrates directly from scores.
    pub fn from_scores(
        mut scores: Vec<f64>,
        alpha: f64,
        predictor_tag: impl Into<String>,
        distribution_tag: impl Into<String>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} not in (0, 1)")));
        }
        if scores.is_empty() {
            return Err(Error::Calibration("no calibration scores".into()));
        }
        scores.sort_by(f64::total_cmp);
        let (q_hat, r) = conformal_quantile(&scores, alpha);
        let mut warnings = Vec::new();
        if r > scores.len() {
            let msg = format!(
                "rank {r} exceeds n_cal = {}; q_hat is infinite",
                scores.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(Self {
            q_hat,
            alpha,
            n_cal: scores.len(),
            scores,
            predictor_tag: predictor_tag.into(),
            distribution_tag: distribution_tag.into(),
            warnings,
        })
    }

    /// Same scores at a different miscoverage level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut m = Self::from_scores(
            self.scores.clone(),
            alpha,
            self.predictor_tag.clone(),
            self.distribution_tag.clone(),
        )?;
        m.warnings.splice(0..0, self.warnings.iter().cloned());
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Scores every record against the predictor's path and takes the
/// conformal quantile. Records on which the predictor fails are skipped
/// (and reported in `warnings`).
pub fn calibrate(
    records: &[CalibrationRecord],
    alpha: f64,
    predictor: &dyn PathPredictor,
    distribution_tag: &str,
) -> Result<CalibrationModel> {
    if records.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    let outcomes: Vec<Result<f64>> = records
        .par_iter()
        .map(|rec| {
            let path = predictor.predict(&rec.problem)?;
            let dense = rec.solution.densified(COLLISION_RESOLUTION);
            Ok(ncs(&path, &dense))
        })
        .collect();
    let mut scores = Vec::with_capacity(records.len());
    let mut skipped = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => scores.push(s),
            Err(e) => skipped.push(format!("record {i} skipped: predictor failed ({e})")),
        }
    }
    for s in &skipped {
        log::warn!("{s}");
    }
    if scores.is_empty() {
        return Err(Error::Calibration(
            "predictor failed on every calibration record".into(),
        ));
    }
    let mut model = CalibrationModel::from_scores(scores, alpha, predictor.tag(), distribution_tag)?;
    model.warnings.splice(0..0, skipped);
    Ok(model)
}

/// Point-wise prediction sets `C_k` around a predicted path.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRegions {
    pub path: PredictedPath,
    pub q_hat: f64,
}

impl PredictionRegions {
    pub fn new(path: PredictedPath, q_hat: f64) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::EmptyPath);
        }
        if !(q_hat >= 0.0) {
            return Err(Error::InvalidArgument(format!("q_hat {q_hat} must be >= 0")));
        }
        Ok(Self { path, q_hat })
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn waypoint(&self, k: usize) -> Point {
        self.path.points[k]
    }

    /// `q ∈ C_k`: `q` lies in the Voronoi cell of waypoint `k` (0-based)
    /// and within `q_hat` of it.
    #[inline]
    pub fn in_point_set(&self, k: usize, q: Point) -> bool {
        let pts = &self.path.points;
        if q.distance(pts[k]) > self.q_hat {
            return false;
        }
        // Same answer as `voronoi_index(pts, q) == k`; neighbours first since
        // they are the likeliest to claim `q`.
        let dk = q.distance_sq(pts[k]);
        let beats = |j: usize| {
            let dj = q.distance_sq(pts[j]);
            dj < dk || (dj == dk && j < k)
        };
        if (k > 0 && beats(k - 1)) || (k + 1 < pts.len() && beats(k + 1)) {
            return false;
        }
        !(0..pts.len()).any(|j| j + 1 != k && j != k && j != k + 1 && beats(j))
    }

    /// `q ∈ ∪_k C_k`, by scanning every point-wise set.
    pub fn in_union(&self, q: Point) -> bool {
        (0..self.len()).any(|k| self.in_point_set(k, q))
    }

    /// Score route: `ncs(path, z) <= q_hat`.
    pub fn trajectory_in_prediction_set(&self, trajectory: &Trajectory) -> bool {
        ncs(&self.path, trajectory) <= self.q_hat
    }

    /// Decomposed route: every sample lies in some `C_k`.
    pub fn trajectory_in_union(&self, trajectory: &Trajectory) -> bool {
        trajectory.positions().all(|q| self.in_union(q))
    }

    /// Axis-aligned box enclosing the ball around waypoint `k`, with the
    /// radius capped at `max_radius`, clipped to `clip`.
    pub fn ball_box(&self, k: usize, max_radius: f64, clip: &Rect) -> Option<Rect> {
        let c = self.path.points[k];
        let r = self.q_hat.min(max_radius);
        Rect::new(c.x - r, c.y - r, c.x + r, c.y + r).intersection(clip)
    }
}
