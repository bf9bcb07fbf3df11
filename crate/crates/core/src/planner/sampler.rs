//! Sampling distributions for RRT*.
//!
//! - uniform over free space,
//! - goal-biased: a Gaussian around the goal with a fixed probability,
//! - conformal: the mixture `(1 - p_bias) U(X_free) + p_bias U(A_k)` with
//!   `A_k = X_free ∩ C_k`.
//!
//! With `p_bias = 0` the conformal sampler consumes the random stream
//! exactly like the uniform one, so both grow identical trees.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conformal::PredictionRegions;
use crate::dynamics::{ModelKind, ModelParams, State};
use crate::env::{uniform_in_rect, PlanningProblem, Point, World};
use crate::error::{Error, Result};

/// Rejection cap for uniform free-space draws; only a (nearly) fully
/// occupied world can exhaust it.
const FREE_SAMPLE_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    GoalBiased,
    Cp,
}

/// How the conformal sampler picks the waypoint index `k` for a biased draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSelection {
    UniformRandom,
    Cyclic,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub p_bias: f64,
    pub goal_bias_prob: f64,
    pub goal_bias_std: f64,
    pub k_selection: KSelection,
    /// Rejection attempts per biased draw before falling back to uniform.
    pub max_attempts: usize,
}

impl SamplerConfig {
    pub fn uniform() -> Self {
        Self {
            kind: SamplerKind::Uniform,
            p_bias: 0.0,
            goal_bias_prob: 0.1,
            goal_bias_std: 10.0,
            k_selection: KSelection::UniformRandom,
            max_attempts: 200,
        }
    }

    pub fn goal_biased() -> Self {
        Self {
            kind: SamplerKind::GoalBiased,
            ..Self::uniform()
        }
    }

    pub fn cp(p_bias: f64) -> Self {
        Self {
            kind: SamplerKind::Cp,
            p_bias,
            ..Self::uniform()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_bias) {
            return Err(Error::InvalidArgument(format!(
                "p_bias {} not in [0, 1)",
                self.p_bias
            )));
        }
        if !(0.0..=1.0).contains(&self.goal_bias_prob) || !(self.goal_bias_std > 0.0) {
            return Err(Error::InvalidArgument("bad goal-bias parameters".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidArgument("max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        match self.kind {
            SamplerKind::Uniform => "uniform".into(),
            SamplerKind::GoalBiased => "goal_biased".into(),
            SamplerKind::Cp => format!("cp(p_bias={})", self.p_bias),
        }
    }
}

/// Uniform point in free space by rejection from the bounds.
pub fn uniform_free_point<R: Rng + ?Sized>(world: &World, rng: &mut R) -> Point {
    for _ in 0..FREE_SAMPLE_CAP {
        let p = uniform_in_rect(rng, world.bounds());
        if world.is_free(p) {
            return p;
        }
    }
    panic!("no free space found after {FREE_SAMPLE_CAP} draws");
}

/// Completes a position with non-positional components drawn uniformly
/// over their ranges.
pub fn random_state_at<R: Rng + ?Sized>(params: &ModelParams, p: Point, rng: &mut R) -> State {
    match params.model {
        ModelKind::Holonomic => State::holonomic(p.x, p.y),
        ModelKind::Dubins => State::dubins(p.x, p.y, rng.random_range(-PI..PI)),
        ModelKind::Car5D => {
            let theta = rng.random_range(-PI..PI);
            let v = rng.random_range(0.0..=params.v_max);
            let kappa = rng.random_range(-params.kappa_max..=params.kappa_max);
            State::car(p.x, p.y, theta, v, kappa)
        }
    }
}

/// Uniform point in `A_k`, or `None` when `attempts` rejections all fail.
pub fn sample_in_region<R: Rng + ?Sized>(
    regions: &PredictionRegions,
    k: usize,
    world: &World,
    attempts: usize,
    rng: &mut R,
) -> Option<Point> {
    let bounds = world.bounds();
    let bbox = regions.ball_box(k, bounds.diagonal(), bounds)?;
    (0..attempts)
        .map(|_| uniform_in_rect(rng, &bbox))
        .find(|q| regions.in_point_set(k, *q) && world.is_free(*q))
}

/// Gaussian draw around the goal center, resampled until free; `None`
/// after `attempts` failures.
pub fn goal_gaussian_point<R: Rng + ?Sized>(
    problem: &PlanningProblem,
    std: f64,
    attempts: usize,
    rng: &mut R,
) -> Option<Point> {
    let normal = Normal::new(0.0, std).expect("positive std");
    (0..attempts)
        .map(|_| {
            Point::new(
                problem.goal_center.x + normal.sample(rng),
                problem.goal_center.y + normal.sample(rng),
            )
        })
        .find(|p| problem.world.is_free(*p))
}

/// Stateful sampler for one planning run.
pub struct Sampler<'a> {
    cfg: &'a SamplerConfig,
    problem: &'a PlanningProblem,
    params: &'a ModelParams,
    regions: Option<&'a PredictionRegions>,
    cursor: usize,
    fallbacks: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(
        cfg: &'a SamplerConfig,
        problem: &'a PlanningProblem,
        params: &'a ModelParams,
        regions: Option<&'a PredictionRegions>,
    ) -> Result<Self> {
        cfg.validate()?;
        if (cfg.kind == SamplerKind::Cp) != regions.is_some() {
            return Err(Error::InvalidArgument(
                "prediction regions are required exactly for the cp sampler".into(),
            ));
        }
        if let (Some(r), KSelection::Fixed(k)) = (regions, cfg.k_selection) {
            if k >= r.len() {
                return Err(Error::InvalidArgument(format!(
                    "fixed k = {k} out of range for {} waypoints",
                    r.len()
                )));
            }
        }
        Ok(Self {
            cfg,
            problem,
            params,
            regions,
            cursor: 0,
            fallbacks: 0,
        })
    }

    /// Number of biased draws that fell back to uniform sampling.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> State {
        let world = &self.problem.world;
        let p = match self.cfg.kind {
            SamplerKind::Uniform => uniform_free_point(world, rng),
            SamplerKind::GoalBiased => {
                if rng.random::<f64>() < self.cfg.goal_bias_prob {
                    match goal_gaussian_point(
                        self.problem,
                        self.cfg.goal_bias_std,
                        self.cfg.max_attempts,
                        rng,
                    ) {
                        Some(p) => p,
                        None => {
                            self.fallbacks += 1;
                            uniform_free_point(world, rng)
                        }
                    }
                } else {
                    uniform_free_point(world, rng)
                }
            }
            SamplerKind::Cp => {
                let regions = self.regions.expect("checked in new");
                if self.cfg.p_bias > 0.0 && rng.random::<f64>() < self.cfg.p_bias {
                    let k = self.select_k(regions.len(), rng);
                    match sample_in_region(regions, k, world, self.cfg.max_attempts, rng) {
                        Some(p) => p,
                        None => {
                            self.fallbacks += 1;
                            uniform_free_point(world, rng)
                        }
                    }
                } else {
                    uniform_free_point(world, rng)
                }
            }
        };
        random_state_at(self.params, p, rng)
    }

    fn select_k<R: Rng + ?Sized>(&mut self, len: usize, rng: &mut R) -> usize {
        match self.cfg.k_selection {
            KSelection::UniformRandom => rng.random_range(0..len),
            KSelection::Cyclic => {
                let k = self.cursor % len;
                self.cursor += 1;
                k
            }
            KSelection::Fixed(k) => k,
        }
    }
}
