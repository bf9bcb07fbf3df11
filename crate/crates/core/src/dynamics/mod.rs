//! Robot models, steering primitives and trajectory cost.
//!
//! Three models share one [`State`] type:
//! - holonomic point, `x' = u`, steered along straight segments;
//! - Dubins car, `x' = [cos θ, sin θ, u]`, `|u| <= κ_max`, steered along
//!   prefixes of the shortest Dubins path;
//! - 5-D kinematic car, `x' = [v cos θ, v sin θ, v κ, u_v, u_κ]`, steered
//!   by LQR tracking of a straight reference.
//!
//! Every steered [`Trajectory`] is sampled at no more than
//! [`ModelParams::spacing`] meters between consecutive states and carries
//! one control record per step, so it can be re-integrated exactly.

pub mod dubins;
pub mod lqr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::Point;
use crate::error::Error;
pub use dubins::{wrap_angle, DubinsPath};
use lqr::{LqrGains, Stop};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Holonomic,
    Dubins,
    Car5D,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Holonomic => "holonomic",
            ModelKind::Dubins => "dubins",
            ModelKind::Car5D => "car5d",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "holonomic" => Ok(ModelKind::Holonomic),
            "dubins" => Ok(ModelKind::Dubins),
            "car5d" => Ok(ModelKind::Car5D),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

/// Model state. Headings are kept in [-π, π).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub enum State {
    Holonomic {
        x: f64,
        y: f64,
    },
    Dubins {
        x: f64,
        y: f64,
        theta: f64,
    },
    Car {
        x: f64,
        y: f64,
        theta: f64,
        v: f64,
        kappa: f64,
    },
}

impl State {
    pub fn holonomic(x: f64, y: f64) -> Self {
        State::Holonomic { x, y }
    }

    pub fn dubins(x: f64, y: f64, theta: f64) -> Self {
        State::Dubins {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn car(x: f64, y: f64, theta: f64, v: f64, kappa: f64) -> Self {
        State::Car {
            x,
            y,
            theta: wrap_angle(theta),
            v,
            kappa,
        }
    }

    /// The all-zero state of `model` placed at `p`.
    pub fn at(model: ModelKind, p: Point) -> Self {
        match model {
            ModelKind::Holonomic => State::holonomic(p.x, p.y),
            ModelKind::Dubins => State::dubins(p.x, p.y, 0.0),
            ModelKind::Car5D => State::car(p.x, p.y, 0.0, 0.0, 0.0),
        }
    }

    pub fn model(&self) -> ModelKind {
        match self {
            State::Holonomic { .. } => ModelKind::Holonomic,
            State::Dubins { .. } => ModelKind::Dubins,
            State::Car { .. } => ModelKind::Car5D,
        }
    }

    #[inline]
    pub fn position(&self) -> Point {
        match *self {
            State::Holonomic { x, y } | State::Dubins { x, y, .. } | State::Car { x, y, .. } => {
                Point::new(x, y)
            }
        }
    }

    pub fn heading(&self) -> Option<f64> {
        match *self {
            State::Holonomic { .. } => None,
            State::Dubins { theta, .. } | State::Car { theta, .. } => Some(theta),
        }
    }

    /// Same state with its position replaced.
    pub fn with_position(&self, p: Point) -> Self {
        match *self {
            State::Holonomic { .. } => State::Holonomic { x: p.x, y: p.y },
            State::Dubins { theta, .. } => State::Dubins {
                x: p.x,
                y: p.y,
                theta,
            },
            State::Car { theta, v, kappa, .. } => State::Car {
                x: p.x,
                y: p.y,
                theta,
                v,
                kappa,
            },
        }
    }

    pub fn components(&self) -> Vec<f64> {
        match *self {
            State::Holonomic { x, y } => vec![x, y],
            State::Dubins { x, y, theta } => vec![x, y, theta],
            State::Car {
                x,
                y,
                theta,
                v,
                kappa,
            } => vec![x, y, theta, v, kappa],
        }
    }

    fn pose(&self) -> dubins::Pose {
        let p = self.position();
        [p.x, p.y, self.heading().unwrap_or(0.0)]
    }

    pub(crate) fn as_car_array(&self) -> [f64; 5] {
        match *self {
            State::Car {
                x,
                y,
                theta,
                v,
                kappa,
            } => [x, y, theta, v, kappa],
            _ => {
                let p = self.pose();
                [p[0], p[1], p[2], 0.0, 0.0]
            }
        }
    }
}

impl TryFrom<Vec<f64>> for State {
    type Error = String;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        match v.as_slice() {
            &[x, y] => Ok(State::holonomic(x, y)),
            &[x, y, theta] => Ok(State::dubins(x, y, theta)),
            &[x, y, theta, vel, kappa] => Ok(State::car(x, y, theta, vel, kappa)),
            other => Err(format!("state with {} components", other.len())),
        }
    }
}

impl From<State> for Vec<f64> {
    fn from(s: State) -> Self {
        s.components()
    }
}

/// Control applied over one trajectory step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Control {
    /// Holonomic unit-speed velocity held for `duration` seconds.
    Velocity { vx: f64, vy: f64, duration: f64 },
    /// Dubins signed curvature held for `arc` meters of travel.
    Curvature { kappa: f64, arc: f64 },
    /// Car acceleration and curvature rate held for `duration` seconds.
    Accel {
        accel: f64,
        kappa_rate: f64,
        duration: f64,
    },
    /// Terminal correction of a car connection onto the exact target
    /// state (bounded by the connection tolerances).
    Snap,
}

/// Discretized trajectory. `controls[i]` drives `states[i]` to `states[i + 1]`.
///
/// Controls are not persisted; a trajectory read from JSON carries none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: ModelKind,
    pub states: Vec<State>,
    #[serde(skip)]
    pub controls: Vec<Control>,
    pub length: f64,
}

impl Trajectory {
    pub fn single(state: State) -> Self {
        Self {
            model: state.model(),
            states: vec![state],
            controls: Vec::new(),
            length: 0.0,
        }
    }

    /// Straight polyline through `points` (holonomic), length = sum of
    /// displacements.
    pub fn polyline(points: &[Point]) -> Self {
        let states: Vec<State> = points.iter().map(|p| State::holonomic(p.x, p.y)).collect();
        let mut controls = Vec::with_capacity(points.len().saturating_sub(1));
        let mut length = 0.0;
        for w in points.windows(2) {
            let d = w[0].distance(w[1]);
            let (vx, vy) = if d > 0.0 {
                ((w[1].x - w[0].x) / d, (w[1].y - w[0].y) / d)
            } else {
                (0.0, 0.0)
            };
            controls.push(Control::Velocity {
                vx,
                vy,
                duration: d,
            });
            length += d;
        }
        Self {
            model: ModelKind::Holonomic,
            states,
            controls,
            length,
        }
    }

    pub fn start(&self) -> &State {
        &self.states[0]
    }

    pub fn end(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn cost(&self) -> f64 {
        self.length
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.states.iter().map(State::position)
    }

    /// Appends `other`, whose first state must coincide with our last.
    pub fn append(&mut self, other: &Trajectory) {
        debug_assert!(self.end().position().distance(other.start().position()) < 1e-9);
        self.states.extend_from_slice(&other.states[1..]);
        self.controls.extend_from_slice(&other.controls);
        self.length += other.length;
    }

    /// Sum of straight-line distances between consecutive positions.
    pub fn polyline_length(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| w[0].position().distance(w[1].position()))
            .sum()
    }

    /// Returns a copy with extra states inserted so that consecutive
    /// positions are at most `spacing` apart (straight interpolation).
    pub fn densified(&self, spacing: f64) -> Trajectory {
        let mut out = Trajectory::single(self.states[0]);
        out.model = self.model;
        out.length = self.length;
        for w in self.states.windows(2) {
            let (a, b) = (w[0].position(), w[1].position());
            let n = (a.distance(b) / spacing).ceil().max(1.0) as usize;
            for i in 1..n {
                out.states
                    .push(w[1].with_position(a.lerp(b, i as f64 / n as f64)));
            }
            out.states.push(w[1]);
        }
        out.controls.clear();
        out
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }
}

/// Additive trajectory cost: arc length.
pub fn trajectory_cost(t: &Trajectory) -> f64 {
    t.cost()
}

/// Model and steering parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model: ModelKind,
    /// Maximum steer extension η, meters.
    pub step: f64,
    pub kappa_max: f64,
    pub v_max: f64,
    /// |u_v| bound, m/s².
    pub accel_max: f64,
    /// |u_κ| bound, 1/(m s).
    pub kappa_rate_max: f64,
    /// Maximum spacing between trajectory states, meters.
    pub spacing: f64,
    /// Weight on heading error in the car nearest-neighbor metric, m/rad.
    pub heading_weight: f64,
    pub lqr_dt: f64,
    /// Reference speed tracked by the LQR steer.
    pub v_ref: f64,
    pub lqr_q: [f64; 4],
    pub lqr_r: [f64; 2],
    /// Car connections succeed when the rollout ends this close to the target.
    pub connect_position_tol: f64,
    pub connect_heading_tol: f64,
}

impl ModelParams {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            step: 5.0,
            kappa_max: 0.2,
            v_max: 5.0,
            accel_max: 2.0,
            kappa_rate_max: 0.5,
            spacing: 0.25,
            heading_weight: 2.0,
            lqr_dt: 0.05,
            v_ref: 3.0,
            lqr_q: [1.0, 2.0, 0.5, 2.0],
            lqr_r: [1.0, 1.0],
            connect_position_tol: 0.5,
            connect_heading_tol: 0.3,
        }
    }

    pub fn turning_radius(&self) -> f64 {
        1.0 / self.kappa_max
    }

    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            self.step,
            self.kappa_max,
            self.v_max,
            self.accel_max,
            self.kappa_rate_max,
            self.spacing,
            self.heading_weight,
            self.lqr_dt,
            self.v_ref,
        ];
        if positive.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "model parameters must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SteerError {
    #[error("steering made no progress toward the target")]
    NoProgress,
}

/// Steering engine for one model; caches the LQR gains for the car.
#[derive(Clone, Debug)]
pub struct Steering {
    params: ModelParams,
    gains: Option<LqrGains>,
}

impl Steering {
    pub fn new(params: ModelParams) -> Self {
        let gains = (params.model == ModelKind::Car5D).then(|| lqr::solve_gains(&params));
        Self { params, gains }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn model(&self) -> ModelKind {
        self.params.model
    }

    /// Nearest-neighbor metric. Dubins is asymmetric (from `a` to `b`).
    pub fn distance(&self, a: &State, b: &State) -> f64 {
        distance(&self.params, a, b)
    }

    /// Dynamically feasible extension from `from` toward `toward`, at most
    /// η long.
    pub fn steer(&self, from: &State, toward: &State) -> Result<Trajectory, SteerError> {
        if from == toward {
            return Ok(Trajectory::single(*from));
        }
        match self.params.model {
            ModelKind::Holonomic => Ok(self.straight(from, toward, self.params.step)),
            ModelKind::Dubins => {
                let path = DubinsPath::shortest(
                    from.pose(),
                    toward.pose(),
                    self.params.turning_radius(),
                );
                Ok(dubins_trajectory(
                    &path,
                    path.length().min(self.params.step),
                    self.params.spacing,
                ))
            }
            ModelKind::Car5D => {
                let gains = self.gains.as_ref().expect("car gains");
                let r = lqr::rollout(
                    &self.params,
                    gains,
                    from,
                    toward,
                    Stop::ArcLength(self.params.step),
                );
                let traj = Trajectory {
                    model: ModelKind::Car5D,
                    states: r.states,
                    controls: r.controls,
                    length: r.length,
                };
                if traj.states.len() < 2
                    || self.distance(traj.end(), toward) >= self.distance(from, toward)
                {
                    return Err(SteerError::NoProgress);
                }
                Ok(traj)
            }
        }
    }

    /// Exact-cost connection length from `from` to `to`, if one exists.
    ///
    /// Holonomic and Dubins connections always exist and are computed
    /// in closed form; car connections require a rollout.
    pub fn connect_length(&self, from: &State, to: &State) -> Option<f64> {
        match self.params.model {
            ModelKind::Holonomic => Some(from.position().distance(to.position())),
            ModelKind::Dubins => Some(self.distance(from, to)),
            ModelKind::Car5D => self.connect(from, to).map(|t| t.length),
        }
    }

    /// Trajectory from `from` ending exactly at `to` (no η limit).
    pub fn connect(&self, from: &State, to: &State) -> Option<Trajectory> {
        if from == to {
            return Some(Trajectory::single(*from));
        }
        match self.params.model {
            ModelKind::Holonomic => Some(self.straight(from, to, f64::INFINITY)),
            ModelKind::Dubins => {
                let path =
                    DubinsPath::shortest(from.pose(), to.pose(), self.params.turning_radius());
                let mut t = dubins_trajectory(&path, path.length(), self.params.spacing);
                // closed-form endpoint differs from `to` only by rounding
                *t.states.last_mut().expect("non-empty") = *to;
                Some(t)
            }
            ModelKind::Car5D => {
                let gains = self.gains.as_ref().expect("car gains");
                let reach = from.position().distance(to.position());
                let r = lqr::rollout(
                    &self.params,
                    gains,
                    from,
                    to,
                    Stop::PassTarget {
                        max_arc: 2.0 * reach + self.params.step,
                    },
                );
                let end = *r.states.last().expect("non-empty");
                let gap = end.position().distance(to.position());
                let heading_gap =
                    wrap_angle(end.heading().unwrap_or(0.0) - to.heading().unwrap_or(0.0)).abs();
                if gap > self.params.connect_position_tol
                    || heading_gap > self.params.connect_heading_tol
                {
                    return None;
                }
                let mut states = r.states;
                let mut controls = r.controls;
                states.push(*to);
                controls.push(Control::Snap);
                Some(Trajectory {
                    model: ModelKind::Car5D,
                    states,
                    controls,
                    length: r.length + gap,
                })
            }
        }
    }

    fn straight(&self, from: &State, toward: &State, max_len: f64) -> Trajectory {
        let a = from.position();
        let b = toward.position();
        let d = a.distance(b);
        if d == 0.0 {
            return Trajectory::single(*from);
        }
        let len = d.min(max_len);
        let end = if len < d { a.lerp(b, len / d) } else { b };
        let n = (len / self.params.spacing).ceil().max(1.0) as usize;
        let (vx, vy) = ((b.x - a.x) / d, (b.y - a.y) / d);
        let mut states = Vec::with_capacity(n + 1);
        states.push(*from);
        for i in 1..n {
            states.push(State::holonomic(
                a.x + vx * len * i as f64 / n as f64,
                a.y + vy * len * i as f64 / n as f64,
            ));
        }
        states.push(State::holonomic(end.x, end.y));
        Trajectory {
            model: ModelKind::Holonomic,
            states,
            controls: vec![
                Control::Velocity {
                    vx,
                    vy,
                    duration: len / n as f64,
                };
                n
            ],
            length: len,
        }
    }
}

/// Samples the first `len` meters of `path` at spacing at most `spacing`,
/// with extra states at segment joints so each step has one curvature.
pub fn dubins_trajectory(path: &DubinsPath, len: f64, spacing: f64) -> Trajectory {
    let len = len.clamp(0.0, path.length());
    let mut breaks: Vec<f64> = Vec::new();
    let n = (len / spacing).ceil() as usize;
    for i in 0..=n {
        breaks.push(len * i as f64 / n.max(1) as f64);
    }
    for end in path.segment_ends() {
        if end > 0.0 && end < len {
            breaks.push(end);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let kappa = 1.0 / path.rho;
    let to_state = |p: dubins::Pose| State::dubins(p[0], p[1], p[2]);
    let mut states = vec![to_state(path.start)];
    let mut controls = Vec::new();
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        controls.push(Control::Curvature {
            kappa: kappa * path.segment_at(mid).sign(),
            arc: w[1] - w[0],
        });
        states.push(to_state(path.sample(w[1])));
    }
    Trajectory {
        model: ModelKind::Dubins,
        states,
        controls,
        length: len,
    }
}

/// Shortest Dubins path from `q0` to `q1` sampled at 0.25 m.
pub fn dubins_shortest_path(q0: &State, q1: &State, kappa_max: f64) -> Trajectory {
    let path = DubinsPath::shortest(q0.pose(), q1.pose(), 1.0 / kappa_max);
    dubins_trajectory(&path, path.length(), crate::env::COLLISION_RESOLUTION)
}

/// One-shot steer; builds a fresh [`Steering`] (and LQR gains) per call.
pub fn steer(params: &ModelParams, from: &State, toward: &State) -> Result<Trajectory, SteerError> {
    Steering::new(params.clone()).steer(from, toward)
}

/// Holonomic: Euclidean. Dubins: shortest Dubins length from `a` to `b`.
/// Car: Euclidean over (x, y, weighted heading).
pub fn distance(params: &ModelParams, a: &State, b: &State) -> f64 {
    match params.model {
        ModelKind::Holonomic => a.position().distance(b.position()),
        ModelKind::Dubins => {
            DubinsPath::shortest(a.pose(), b.pose(), params.turning_radius()).length()
        }
        ModelKind::Car5D => {
            let d = a.position().distance_sq(b.position());
            let dh = params.heading_weight
                * wrap_angle(b.heading().unwrap_or(0.0) - a.heading().unwrap_or(0.0));
            (d + dh * dh).sqrt()
        }
    }
}

#[cfg(test)]
mod tests;
