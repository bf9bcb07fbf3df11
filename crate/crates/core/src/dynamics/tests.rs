use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dubins::{Segment, Word};
use super::*;

fn params(model: ModelKind) -> ModelParams {
    ModelParams::new(model)
}

/// Dense RK4 re-integration of one control step; independent of the
/// closed-form and rollout code under test.
fn reintegrate(start: &State, control: &Control) -> Option<State> {
    const SUB: usize = 40;
    match (*start, *control) {
        (State::Holonomic { x, y }, Control::Velocity { vx, vy, duration }) => {
            Some(State::holonomic(x + vx * duration, y + vy * duration))
        }
        (State::Dubins { x, y, theta }, Control::Curvature { kappa, arc }) => {
            let f = |s: [f64; 3]| [s[2].cos(), s[2].sin(), kappa];
            let mut s = [x, y, theta];
            let h = arc / SUB as f64;
            for _ in 0..SUB {
                let k1 = f(s);
                let k2 = f([s[0] + h / 2.0 * k1[0], s[1] + h / 2.0 * k1[1], s[2] + h / 2.0 * k1[2]]);
                let k3 = f([s[0] + h / 2.0 * k2[0], s[1] + h / 2.0 * k2[1], s[2] + h / 2.0 * k2[2]]);
                let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1], s[2] + h * k3[2]]);
                for i in 0..3 {
                    s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            Some(State::dubins(s[0], s[1], s[2]))
        }
        (
            State::Car {
                x,
                y,
                theta,
                v,
                kappa,
            },
            Control::Accel {
                accel,
                kappa_rate,
                duration,
            },
        ) => {
            let f = |s: [f64; 5]| {
                [
                    s[3] * s[2].cos(),
                    s[3] * s[2].sin(),
                    s[3] * s[4],
                    accel,
                    kappa_rate,
                ]
            };
            let mut s = [x, y, theta, v, kappa];
            let h = duration / SUB as f64;
            for _ in 0..SUB {
                let k1 = f(s);
                let mut t = s;
                (0..5).for_each(|i| t[i] = s[i] + h / 2.0 * k1[i]);
                let k2 = f(t);
                (0..5).for_each(|i| t[i] = s[i] + h / 2.0 * k2[i]);
                let k3 = f(t);
                (0..5).for_each(|i| t[i] = s[i] + h * k3[i]);
                let k4 = f(t);
                (0..5).for_each(|i| s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            }
            Some(State::car(s[0], s[1], s[2], s[3], s[4]))
        }
        (_, Control::Snap) => None,
        other => panic!("control/state mismatch {other:?}"),
    }
}

fn assert_consistent(t: &Trajectory) {
    assert_eq!(t.controls.len() + 1, t.states.len());
    for (i, c) in t.controls.iter().enumerate() {
        let Some(next) = reintegrate(&t.states[i], c) else {
            continue;
        };
        let stored = t.states[i + 1];
        let err = next.position().distance(stored.position());
        assert!(err < 1e-3, "step {i}: position error {err}");
        if let (Some(a), Some(b)) = (next.heading(), stored.heading()) {
            assert!(wrap_angle(a - b).abs() < 1e-3, "step {i}: heading error");
        }
    }
}

fn assert_spacing(t: &Trajectory, spacing: f64) {
    for w in t.states.windows(2) {
        assert!(w[0].position().distance(w[1].position()) <= spacing + 1e-9);
    }
}

#[test]
fn holonomic_steer_truncates() {
    let s = Steering::new(params(ModelKind::Holonomic));
    let t = s
        .steer(&State::holonomic(0.0, 0.0), &State::holonomic(10.0, 0.0))
        .unwrap();
    assert_eq!(*t.end(), State::holonomic(5.0, 0.0));
    assert!((t.length - 5.0).abs() < 1e-12);
    assert!((t.polyline_length() - t.length).abs() < 1e-9);
    assert_spacing(&t, 0.25);
    assert_consistent(&t);
}

#[test]
fn steer_to_self_is_single_state() {
    for model in [ModelKind::Holonomic, ModelKind::Dubins, ModelKind::Car5D] {
        let s = Steering::new(params(model));
        let x = State::at(model, Point::new(3.0, 4.0));
        let t = s.steer(&x, &x).unwrap();
        assert_eq!(t.states.len(), 1);
        assert_eq!(t.cost(), 0.0);
    }
}

#[test]
fn dubins_collinear_steer_is_straight() {
    let s = Steering::new(params(ModelKind::Dubins));
    let t = s
        .steer(&State::dubins(0.0, 0.0, 0.0), &State::dubins(10.0, 0.0, 0.3))
        .unwrap();
    let t2 = s
        .steer(&State::dubins(0.0, 0.0, 0.0), &State::dubins(10.0, 0.0, 0.0))
        .unwrap();
    assert!((t2.end().position().distance(Point::new(5.0, 0.0))) < 1e-9);
    assert!(t2.end().heading().unwrap().abs() < 1e-9);
    assert!(t.length <= 5.0 + 1e-9);
}

#[test]
fn dubins_steer_behind_makes_progress() {
    let s = Steering::new(params(ModelKind::Dubins));
    let from = State::dubins(0.0, 0.0, 0.0);
    let target = State::dubins(-8.0, 1.0, PI);
    let t = s.steer(&from, &target).unwrap();
    assert_consistent(&t);
    // re-integrate the whole control record from `from`
    let mut x = from;
    for c in &t.controls {
        x = reintegrate(&x, c).unwrap();
    }
    assert!(x.position().distance(t.end().position()) < 1e-3);
    assert!(s.distance(&x, &target) < s.distance(&from, &target));
    assert!(s.distance(t.end(), &target) < s.distance(&from, &target));
}

#[test]
fn distance_examples() {
    let h = Steering::new(params(ModelKind::Holonomic));
    assert_eq!(
        h.distance(&State::holonomic(0.0, 0.0), &State::holonomic(3.0, 4.0)),
        5.0
    );
    let d = Steering::new(params(ModelKind::Dubins));
    let a = State::dubins(1.0, 2.0, 0.7);
    let b = State::dubins(1.0 + 6.0 * 0.7f64.cos(), 2.0 + 6.0 * 0.7f64.sin(), 0.7);
    assert!((d.distance(&a, &b) - 6.0).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let expected = dubins_shortest_path(&a, &b, 0.2).length;
        assert!((d.distance(&a, &b) - expected).abs() < 1e-9);
    }
    let c = Steering::new(params(ModelKind::Car5D));
    let a = State::car(0.0, 0.0, 0.0, 1.0, 0.0);
    let b = State::car(3.0, 4.0, 0.5, 4.0, 0.1);
    assert!((c.distance(&a, &b) - (25.0f64 + 1.0).sqrt()).abs() < 1e-12);
}

#[test]
fn cost_is_additive() {
    let single = Trajectory::single(State::holonomic(1.0, 1.0));
    assert_eq!(trajectory_cost(&single), 0.0);
    let line = Trajectory::polyline(&[Point::new(0.0, 0.0), Point::new(5.0, 0.0)]);
    assert_eq!(trajectory_cost(&line), 5.0);

    let s = Steering::new(params(ModelKind::Dubins));
    let a = State::dubins(0.0, 0.0, 0.0);
    let t1 = s.steer(&a, &State::dubins(3.0, 8.0, 1.0)).unwrap();
    let t2 = s.steer(t1.end(), &State::dubins(-4.0, 2.0, 2.0)).unwrap();
    let mut joined = t1.clone();
    joined.append(&t2);
    assert!((joined.cost() - (t1.cost() + t2.cost())).abs() < 1e-9);
    assert_eq!(joined.states.len(), t1.states.len() + t2.states.len() - 1);
    assert_consistent(&joined);
}

#[test]
fn car_steer_makes_progress_and_is_consistent() {
    let s = Steering::new(params(ModelKind::Car5D));
    let from = State::car(0.0, 0.0, 0.0, 0.0, 0.0);
    for target in [
        State::car(20.0, 0.0, 0.0, 2.0, 0.0),
        State::car(10.0, 6.0, 0.5, 2.0, 0.0),
        State::car(2.0, -3.0, -1.0, 0.0, 0.0),
    ] {
        let t = s.steer(&from, &target).unwrap();
        assert!(t.length <= 5.0 + 1e-9);
        assert_eq!(*t.start(), from);
        assert_spacing(&t, 0.25);
        assert_consistent(&t);
        for st in &t.states {
            let State::Car { v, kappa, .. } = *st else {
                panic!()
            };
            assert!((0.0..=5.0).contains(&v));
            assert!(kappa.abs() <= 0.2 + 1e-12);
        }
    }
}

#[test]
fn car_connect_reaches_aligned_target() {
    let s = Steering::new(params(ModelKind::Car5D));
    let from = State::car(0.0, 0.0, 0.0, 3.0, 0.0);
    let to = State::car(4.0, 0.0, 0.0, 3.0, 0.0);
    let t = s.connect(&from, &to).unwrap();
    assert_eq!(*t.end(), to);
    assert!((t.length - 4.0).abs() < 0.5);
    // a target behind cannot be reached by a forward-only car
    assert!(s.connect(&from, &State::car(-4.0, 0.0, 0.0, 3.0, 0.0)).is_none());
}

#[test]
fn trajectory_json_shape() {
    let s = Steering::new(params(ModelKind::Dubins));
    let t = s
        .steer(&State::dubins(0.0, 0.0, 0.0), &State::dubins(4.0, 4.0, 1.0))
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
    assert_eq!(v["model"], "dubins");
    assert_eq!(v["states"][0].as_array().unwrap().len(), 3);
    let back: Trajectory = serde_json::from_value(v).unwrap();
    assert_eq!(back.states, t.states);
    assert!(back.controls.is_empty());
}

// ---------------------------------------------------------------------------
// Six-word oracle: explicit circle/tangent geometry, independent of the
// normalized closed-form solver.

#[derive(Clone, Copy)]
struct Pt(f64, f64);

fn center(p: [f64; 3], sign: f64, rho: f64) -> Pt {
    // left turn: center on the left of the heading
    Pt(p[0] - sign * rho * p[2].sin(), p[1] + sign * rho * p[2].cos())
}

/// Heading of a vehicle on a circle of center `c`, turn `sign`, at point `q`.
fn heading_on_circle(c: Pt, q: Pt, sign: f64, rho: f64) -> f64 {
    let s = (q.0 - c.0) / (sign * rho);
    let co = -(q.1 - c.1) / (sign * rho);
    s.atan2(co)
}

fn arc(sign: f64, from: f64, to: f64) -> f64 {
    (sign * (to - from)).rem_euclid(TAU)
}

fn oracle_word_length(q0: [f64; 3], q1: [f64; 3], rho: f64, word: Word) -> Option<f64> {
    let segs = word.segments();
    let s0 = segs[0].sign();
    let s2 = segs[2].sign();
    let c0 = center(q0, s0, rho);
    let c2 = center(q1, s2, rho);
    let (dx, dy) = (c2.0 - c0.0, c2.1 - c0.1);
    let dist = dx.hypot(dy);
    if segs[1] == Segment::Straight {
        let off = (s0 - s2) * rho;
        if dist < off.abs() || dist == 0.0 && off == 0.0 {
            if dist == 0.0 && off == 0.0 {
                // concentric identical circles: pure arc
                return Some(arc(s0, q0[2], q1[2]) * rho);
            }
            return None;
        }
        let psi = dy.atan2(dx);
        let phi = psi + (off / dist).asin();
        let straight = dist * (phi - psi).cos();
        Some((arc(s0, q0[2], phi) + arc(s2, phi, q1[2])) * rho + straight)
    } else {
        if dist > 4.0 * rho || dist == 0.0 {
            return None;
        }
        let h = (4.0 * rho * rho - dist * dist / 4.0).max(0.0).sqrt();
        let (ux, uy) = (dx / dist, dy / dist);
        let mut best: Option<f64> = None;
        for side in [-1.0, 1.0] {
            let cm = Pt(
                c0.0 + dx / 2.0 - side * uy * h,
                c0.1 + dy / 2.0 + side * ux * h,
            );
            let t1 = Pt((c0.0 + cm.0) / 2.0, (c0.1 + cm.1) / 2.0);
            let t2 = Pt((cm.0 + c2.0) / 2.0, (cm.1 + c2.1) / 2.0);
            let phi1 = heading_on_circle(c0, t1, s0, rho);
            let phi2 = heading_on_circle(c2, t2, s2, rho);
            let len = (arc(s0, q0[2], phi1) + arc(-s0, phi1, phi2) + arc(s2, phi2, q1[2])) * rho;
            best = Some(best.map_or(len, |b: f64| b.min(len)));
        }
        best
    }
}

fn random_pose<R: Rng>(rng: &mut R) -> State {
    State::dubins(
        rng.random_range(-30.0..30.0),
        rng.random_range(-30.0..30.0),
        rng.random_range(-PI..PI),
    )
}

#[test]
fn dubins_matches_six_word_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let kappa = 0.2;
    let rho = 1.0 / kappa;
    for _ in 0..1000 {
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let t = dubins_shortest_path(&a, &b, kappa);
        let q0 = [a.position().x, a.position().y, a.heading().unwrap()];
        let q1 = [b.position().x, b.position().y, b.heading().unwrap()];
        let lengths: Vec<f64> = Word::ALL
            .iter()
            .filter_map(|w| oracle_word_length(q0, q1, rho, *w))
            .collect();
        assert!(!lengths.is_empty());
        for l in &lengths {
            assert!(t.length <= l + 1e-7, "{} > {l}", t.length);
        }
        let best = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(t.length >= best - 1e-7);
        assert!(t.length >= a.position().distance(b.position()) - 1e-9);
        let end = t.end();
        assert!(end.position().distance(b.position()) < 1e-6);
        assert!(wrap_angle(end.heading().unwrap() - q1[2]).abs() < 1e-6);
        assert_spacing(&t, 0.25);
        assert_consistent(&t);
    }
}

#[test]
fn dubins_aligned_and_half_turn() {
    let t = dubins_shortest_path(&State::dubins(0.0, 0.0, 0.0), &State::dubins(10.0, 0.0, 0.0), 0.2);
    assert!((t.length - 10.0).abs() < 1e-9);
    for k in [0.05, 0.2, 1.0] {
        let t = dubins_shortest_path(&State::dubins(0.0, 0.0, 0.0), &State::dubins(0.0, 0.0, PI), k);
        assert!(t.length >= PI / k - 1e-9);
    }
}

fn any_state(model: ModelKind) -> impl Strategy<Value = State> {
    (
        -40.0f64..40.0,
        -40.0f64..40.0,
        -PI..PI,
        0.0f64..5.0,
        -0.2f64..0.2,
    )
        .prop_map(move |(x, y, th, v, k)| match model {
            ModelKind::Holonomic => State::holonomic(x, y),
            ModelKind::Dubins => State::dubins(x, y, th),
            ModelKind::Car5D => State::car(x, y, th, v, k),
        })
}

fn any_model() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::Holonomic),
        Just(ModelKind::Dubins),
        Just(ModelKind::Car5D)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn steer_invariants((model, from, toward) in any_model().prop_flat_map(|m| (Just(m), any_state(m), any_state(m)))) {
        let s = Steering::new(params(model));
        match s.steer(&from, &toward) {
            Ok(t) => {
                prop_assert!(t.length <= s.params().step + 1e-9);
                prop_assert_eq!(*t.start(), from);
                assert_spacing(&t, s.params().spacing);
                assert_consistent(&t);
                if t.states.len() > 1 {
                    prop_assert!(s.distance(t.end(), &toward) < s.distance(&from, &toward));
                }
                if model == ModelKind::Holonomic {
                    prop_assert!((t.polyline_length() - t.length).abs() < 1e-9);
                }
            }
            Err(SteerError::NoProgress) => prop_assert_eq!(model, ModelKind::Car5D),
        }
    }

    #[test]
    fn dubins_rigid_motion_invariance(
        a in any_state(ModelKind::Dubins),
        b in any_state(ModelKind::Dubins),
        rot in -PI..PI,
        tx in -50.0f64..50.0,
        ty in -50.0f64..50.0,
    ) {
        let tf = |s: &State| {
            let p = s.position();
            let (sn, cs) = rot.sin_cos();
            State::dubins(cs * p.x - sn * p.y + tx, sn * p.x + cs * p.y + ty, s.heading().unwrap() + rot)
        };
        let l0 = dubins_shortest_path(&a, &b, 0.2).length;
        let l1 = dubins_shortest_path(&tf(&a), &tf(&b), 0.2).length;
        prop_assert!((l0 - l1).abs() < 1e-9, "{} vs {}", l0, l1);
        prop_assert!(l0 >= a.position().distance(b.position()) - 1e-9);
    }
}
