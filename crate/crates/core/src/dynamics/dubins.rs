//! Shortest curvature-bounded paths for a forward-only unit-speed car.
//!
//! The six words are solved in the normalized frame (start at the origin
//! heading along +x after rotating by the chord angle, turning radius 1),
//! following the classic closed-form expressions.

use std::f64::consts::{PI, TAU};

/// Pose `[x, y, theta]`.
pub type Pose = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Left,
    Straight,
    Right,
}

impl Segment {
    /// Signed curvature multiplier (+1 left, 0 straight, -1 right).
    pub fn sign(self) -> f64 {
        match self {
            Segment::Left => 1.0,
            Segment::Straight => 0.0,
            Segment::Right => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Word {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

impl Word {
    pub const ALL: [Word; 6] = [Word::Lsl, Word::Rsr, Word::Lsr, Word::Rsl, Word::Rlr, Word::Lrl];

    pub fn segments(self) -> [Segment; 3] {
        use Segment::*;
        match self {
            Word::Lsl => [Left, Straight, Left],
            Word::Rsr => [Right, Straight, Right],
            Word::Lsr => [Left, Straight, Right],
            Word::Rsl => [Right, Straight, Left],
            Word::Rlr => [Right, Left, Right],
            Word::Lrl => [Left, Right, Left],
        }
    }
}

/// Wrap into [0, 2π); values within 1e-10 of 2π snap to 0 so that aligned
/// configurations do not pick up a spurious full turn.
fn mod2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if TAU - r < 1e-10 {
        0.0
    } else {
        r
    }
}

/// Wrap an angle into [-π, π).
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DubinsPath {
    pub start: Pose,
    pub rho: f64,
    pub word: Word,
    /// Segment lengths in units of the turning radius.
    pub params: [f64; 3],
}

struct Normalized {
    alpha: f64,
    beta: f64,
    d: f64,
    sa: f64,
    sb: f64,
    ca: f64,
    cb: f64,
    c_ab: f64,
    d_sq: f64,
}

impl Normalized {
    fn new(q0: Pose, q1: Pose, rho: f64) -> Self {
        let dx = q1[0] - q0[0];
        let dy = q1[1] - q0[1];
        let d = dx.hypot(dy) / rho;
        let theta = if d > 0.0 { mod2pi(dy.atan2(dx)) } else { 0.0 };
        let alpha = mod2pi(q0[2] - theta);
        let beta = mod2pi(q1[2] - theta);
        Self {
            alpha,
            beta,
            d,
            sa: alpha.sin(),
            sb: beta.sin(),
            ca: alpha.cos(),
            cb: beta.cos(),
            c_ab: (alpha - beta).cos(),
            d_sq: d * d,
        }
    }

    fn solve(&self, word: Word) -> Option<[f64; 3]> {
        let Normalized {
            alpha: a,
            beta: b,
            d,
            sa,
            sb,
            ca,
            cb,
            c_ab,
            d_sq,
        } = *self;
        match word {
            Word::Lsl => {
                let tmp0 = d + sa - sb;
                let p_sq = 2.0 + d_sq - 2.0 * c_ab + 2.0 * d * (sa - sb);
                if p_sq < 0.0 {
                    return None;
                }
                let tmp1 = (cb - ca).atan2(tmp0);
                Some([mod2pi(tmp1 - a), p_sq.sqrt(), mod2pi(b - tmp1)])
            }
            Word::Rsr => {
                let tmp0 = d - sa + sb;
                let p_sq = 2.0 + d_sq - 2.0 * c_ab + 2.0 * d * (sb - sa);
                if p_sq < 0.0 {
                    return None;
                }
                let tmp1 = (ca - cb).atan2(tmp0);
                Some([mod2pi(a - tmp1), p_sq.sqrt(), mod2pi(tmp1 - b)])
            }
            Word::Lsr => {
                let p_sq = -2.0 + d_sq + 2.0 * c_ab + 2.0 * d * (sa + sb);
                if p_sq < 0.0 {
                    return None;
                }
                let p = p_sq.sqrt();
                let tmp0 = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
                Some([mod2pi(tmp0 - a), p, mod2pi(tmp0 - b)])
            }
            Word::Rsl => {
                let p_sq = -2.0 + d_sq + 2.0 * c_ab - 2.0 * d * (sa + sb);
                if p_sq < 0.0 {
                    return None;
                }
                let p = p_sq.sqrt();
                let tmp0 = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
                Some([mod2pi(a - tmp0), p, mod2pi(b - tmp0)])
            }
            Word::Rlr => {
                let tmp0 = (6.0 - d_sq + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
                if tmp0.abs() > 1.0 {
                    return None;
                }
                let phi = (ca - cb).atan2(d - sa + sb);
                let p = mod2pi(TAU - tmp0.acos());
                let t = mod2pi(a - phi + mod2pi(p / 2.0));
                Some([t, p, mod2pi(a - b - t + mod2pi(p))])
            }
            Word::Lrl => {
                let tmp0 = (6.0 - d_sq + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
                if tmp0.abs() > 1.0 {
                    return None;
                }
                let phi = (ca - cb).atan2(d + sa - sb);
                let p = mod2pi(TAU - tmp0.acos());
                let t = mod2pi(-a - phi + p / 2.0);
                Some([t, p, mod2pi(mod2pi(b) - a - t + mod2pi(p))])
            }
        }
    }
}

impl DubinsPath {
    /// Path of a specific word, if that word is feasible for the pair.
    pub fn with_word(q0: Pose, q1: Pose, rho: f64, word: Word) -> Option<Self> {
        let n = Normalized::new(q0, q1, rho);
        n.solve(word).map(|params| Self {
            start: q0,
            rho,
            word,
            params,
        })
    }

    /// Shortest of the six words. At least one word is always feasible.
    pub fn shortest(q0: Pose, q1: Pose, rho: f64) -> Self {
        assert!(rho > 0.0, "turning radius must be positive");
        let n = Normalized::new(q0, q1, rho);
        let mut best: Option<(f64, Word, [f64; 3])> = None;
        for word in Word::ALL {
            if let Some(p) = n.solve(word) {
                let len = p[0] + p[1] + p[2];
                if best.is_none_or(|(b, _, _)| len < b) {
                    best = Some((len, word, p));
                }
            }
        }
        let (_, word, params) = best.expect("some Dubins word is always feasible");
        Self {
            start: q0,
            rho,
            word,
            params,
        }
    }

    /// Length in meters.
    pub fn length(&self) -> f64 {
        (self.params[0] + self.params[1] + self.params[2]) * self.rho
    }

    /// Arc-length offsets (meters) at which the segments end.
    pub fn segment_ends(&self) -> [f64; 3] {
        let a = self.params[0] * self.rho;
        let b = a + self.params[1] * self.rho;
        [a, b, self.length()]
    }

    /// Pose after travelling `s` meters along the path (clamped to [0, L]).
    pub fn sample(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length());
        let mut pose = self.start;
        let mut remaining = s;
        for (seg, &p) in self.word.segments().iter().zip(&self.params) {
            let seg_len = p * self.rho;
            let step = remaining.min(seg_len);
            pose = advance(pose, *seg, step, self.rho);
            remaining -= step;
            if remaining <= 0.0 {
                break;
            }
        }
        pose[2] = wrap_angle(pose[2]);
        pose
    }

    /// Segment kind active at arc length `s` (left-continuous at joints).
    pub fn segment_at(&self, s: f64) -> Segment {
        let ends = self.segment_ends();
        let segs = self.word.segments();
        if s <= ends[0] && self.params[0] > 0.0 {
            segs[0]
        } else if s <= ends[1] && self.params[1] > 0.0 {
            segs[1]
        } else {
            segs[2]
        }
    }
}

/// Exact motion along one segment of radius `rho` for `len` meters.
pub fn advance(pose: Pose, seg: Segment, len: f64, rho: f64) -> Pose {
    let [x, y, th] = pose;
    match seg {
        Segment::Straight => [x + len * th.cos(), y + len * th.sin(), th],
        Segment::Left => {
            let dth = len / rho;
            [
                x + rho * ((th + dth).sin() - th.sin()),
                y - rho * ((th + dth).cos() - th.cos()),
                th + dth,
            ]
        }
        Segment::Right => {
            let dth = len / rho;
            [
                x - rho * ((th - dth).sin() - th.sin()),
                y + rho * ((th - dth).cos() - th.cos()),
                th - dth,
            ]
        }
    }
}
