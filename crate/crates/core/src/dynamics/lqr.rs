//! LQR path tracking for the 5-D kinematic car.
//!
//! The car tracks a straight reference line at constant speed. In the
//! line frame the error state `[lateral, heading, speed, curvature]`
//! has linear dynamics
//!
//! ```text
//! lateral'   = v_ref * heading
//! heading'   = v_ref * curvature
//! speed'     = u_accel
//! curvature' = u_curvature_rate
//! ```
//!
//! which is Euler-discretized at the simulation step and solved with the
//! discrete Riccati recursion.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};

use super::dubins::wrap_angle;
use super::{Control, ModelParams, State};

const RICCATI_TOL: f64 = 1e-9;
const RICCATI_MAX_ITERS: usize = 200_000;

#[derive(Clone, Debug)]
pub struct LqrGains {
    pub k: Matrix2x4<f64>,
    pub iterations: usize,
}

/// Infinite-horizon discrete LQR gain via fixed-point Riccati iteration.
pub fn solve_gains(params: &ModelParams) -> LqrGains {
    let dt = params.lqr_dt;
    let v = params.v_ref;
    let mut a = Matrix4::<f64>::identity();
    a[(0, 1)] = v * dt;
    a[(1, 3)] = v * dt;
    let mut b = Matrix4x2::<f64>::zeros();
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    let q = Matrix4::from_diagonal(&Vector4::from(params.lqr_q));
    let r = Matrix2::from_diagonal(&Vector2::from(params.lqr_r));

    let mut p = q;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let btp = b.transpose() * p;
        let s = r + btp * b;
        let s_inv = s.try_inverse().expect("R + B'PB is positive definite");
        let next = q + a.transpose() * p * a - a.transpose() * p * b * s_inv * btp * a;
        let delta = (next - p).abs().max();
        p = next;
        if delta < RICCATI_TOL || iterations >= RICCATI_MAX_ITERS {
            break;
        }
    }
    let btp = b.transpose() * p;
    let k = (r + btp * b).try_inverse().expect("positive definite") * btp * a;
    LqrGains { k, iterations }
}

pub(crate) enum Stop {
    /// Stop once the accumulated arc length reaches this value.
    ArcLength(f64),
    /// Stop once the along-track coordinate reaches the target's.
    PassTarget { max_arc: f64 },
}

pub(crate) struct Rollout {
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    pub length: f64,
}

/// Car state derivative under constant controls.
#[inline]
pub(crate) fn car_derivative(s: [f64; 5], u: [f64; 2]) -> [f64; 5] {
    let [_, _, th, v, k] = s;
    [v * th.cos(), v * th.sin(), v * k, u[0], u[1]]
}

pub(crate) fn rk4_step(s: [f64; 5], u: [f64; 2], dt: f64) -> [f64; 5] {
    let add = |a: [f64; 5], b: [f64; 5], h: f64| {
        let mut out = a;
        for i in 0..5 {
            out[i] += b[i] * h;
        }
        out
    };
    let k1 = car_derivative(s, u);
    let k2 = car_derivative(add(s, k1, dt / 2.0), u);
    let k3 = car_derivative(add(s, k2, dt / 2.0), u);
    let k4 = car_derivative(add(s, k3, dt), u);
    let mut out = s;
    for i in 0..5 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Simulates the closed loop from `from` along the line toward `toward`.
pub(crate) fn rollout(
    params: &ModelParams,
    gains: &LqrGains,
    from: &State,
    toward: &State,
    stop: Stop,
) -> Rollout {
    let origin = from.position();
    let target = toward.position();
    let heading = (target.y - origin.y).atan2(target.x - origin.x);
    let (sh, ch) = heading.sin_cos();
    let goal_along = origin.distance(target);
    let max_arc = match stop {
        Stop::ArcLength(l) => l,
        Stop::PassTarget { max_arc } => max_arc,
    };
    let dt = params.lqr_dt;
    let max_steps = ((max_arc / (params.v_ref * dt)).ceil() as usize).max(1) * 4;

    let mut s = from.as_car_array();
    let mut states = vec![*from];
    let mut controls = Vec::new();
    let mut length = 0.0;

    for _ in 0..max_steps {
        let rel = (s[0] - origin.x, s[1] - origin.y);
        let along = ch * rel.0 + sh * rel.1;
        if matches!(stop, Stop::PassTarget { .. }) && along >= goal_along {
            break;
        }
        if length >= max_arc - 1e-12 {
            break;
        }
        let err = Vector4::new(
            -sh * rel.0 + ch * rel.1,
            wrap_angle(s[2] - heading),
            s[3] - params.v_ref,
            s[4],
        );
        let u = -(gains.k * err);
        // keep v in [0, v_max] and |kappa| <= kappa_max at the end of the step
        let accel = u[0]
            .clamp(-params.accel_max, params.accel_max)
            .clamp(-s[3] / dt, (params.v_max - s[3]) / dt);
        let rate = u[1]
            .clamp(-params.kappa_rate_max, params.kappa_rate_max)
            .clamp(
                (-params.kappa_max - s[4]) / dt,
                (params.kappa_max - s[4]) / dt,
            );
        let mut h = dt;
        let step_arc = s[3] * h + 0.5 * accel * h * h;
        if length + step_arc > max_arc {
            h = time_for_arc(s[3], accel, max_arc - length).min(dt);
        }
        if h <= 0.0 {
            break;
        }
        let next = rk4_step(s, [accel, rate], h);
        let arc = s[3] * h + 0.5 * accel * h * h;
        if arc <= 0.0 && s[3] <= 0.0 && accel <= 0.0 {
            // stalled at zero speed
            break;
        }
        length += arc;
        s = next;
        s[3] = s[3].clamp(0.0, params.v_max);
        s[4] = s[4].clamp(-params.kappa_max, params.kappa_max);
        controls.push(Control::Accel {
            accel,
            kappa_rate: rate,
            duration: h,
        });
        states.push(State::Car {
            x: s[0],
            y: s[1],
            theta: wrap_angle(s[2]),
            v: s[3],
            kappa: s[4],
        });
    }
    Rollout {
        states,
        controls,
        length,
    }
}

/// Smallest `t >= 0` with `v t + a t^2 / 2 = arc` (v >= 0).
fn time_for_arc(v: f64, a: f64, arc: f64) -> f64 {
    if arc <= 0.0 {
        return 0.0;
    }
    if a.abs() < 1e-12 {
        return if v > 0.0 { arc / v } else { f64::INFINITY };
    }
    let disc = v * v + 2.0 * a * arc;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    (-v + disc.sqrt()) / a
}
