//! Path predictors: grid A* and externally generated waypoint files.
//!
//! Predicted paths are planar waypoint lists. They need not be feasible
//! for the robot; the conformal layer accounts for their error.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{PlanningProblem, Point, World};
use crate::error::{Error, Result};

/// Distance beyond which an external path's first point gets `x_init`
/// prepended.
const START_SNAP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSource {
    Astar,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedPath {
    pub points: Vec<Point>,
    pub source: PathSource,
}

impl PredictedPath {
    pub fn new(points: Vec<Point>, source: PathSource) -> Self {
        Self { points, source }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// First point at the start position, last point in the goal disc,
    /// at least two points.
    pub fn satisfies_endpoints(&self, problem: &PlanningProblem) -> bool {
        self.points.len() >= 2
            && self.points[0] == problem.start
            && problem.in_goal_point(*self.points.last().expect("non-empty"))
    }
}

pub trait PathPredictor: Send + Sync {
    fn predict(&self, problem: &PlanningProblem) -> Result<PredictedPath>;
    fn tag(&self) -> String;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AStarPredictor;

impl PathPredictor for AStarPredictor {
    fn predict(&self, problem: &PlanningProblem) -> Result<PredictedPath> {
        astar_predict(problem)
    }

    fn tag(&self) -> String {
        "astar".into()
    }
}

/// Reads paths from disk. A file is used for every problem; a directory
/// is looked up by problem id (`<dir>/<id>.json`).
#[derive(Clone, Debug)]
pub struct FilePredictor {
    pub location: PathBuf,
}

impl FilePredictor {
    pub fn new(location: impl Into<PathBuf>) -> Self {
        Self {
            location: location.into(),
        }
    }

    pub fn predict_for(&self, problem: &PlanningProblem, problem_id: &str) -> Result<PredictedPath> {
        if self.location.is_dir() {
            load_external_path(&self.location.join(format!("{problem_id}.json")), problem)
        } else {
            load_external_path(&self.location, problem)
        }
    }
}

impl PathPredictor for FilePredictor {
    fn predict(&self, problem: &PlanningProblem) -> Result<PredictedPath> {
        load_external_path(&self.location, problem)
    }

    fn tag(&self) -> String {
        format!("file:{}", self.location.display())
    }
}

/// Key ordered lexicographically by (f, h, cell index), smallest first.
#[derive(Clone, Copy, PartialEq)]
struct OpenKey {
    f: f64,
    h: f64,
    index: usize,
}

impl Eq for OpenKey {}

impl Ord for OpenKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for OpenKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The 1 m planning lattice: a node is usable iff its point is free.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub origin: Point,
    pub cols: usize,
    pub rows: usize,
    pub free: Vec<bool>,
}

impl Lattice {
    pub fn new(world: &World) -> Self {
        let b = world.bounds();
        let cols = b.width().floor() as usize + 1;
        let rows = b.height().floor() as usize + 1;
        let origin = b.min;
        let point = |c: usize, r: usize| Point::new(origin.x + c as f64, origin.y + r as f64);
        let mut free = vec![true; cols * rows];
        // Every lattice point lies in the bounds, so only obstacles can
        // occupy it. Index ranges are padded by one and settled by `contains`.
        let span = |lo: f64, hi: f64, o: f64, n: usize| {
            let a = ((lo - o).floor() - 1.0).max(0.0) as usize;
            let b = ((hi - o).ceil() + 1.0).max(0.0) as usize;
            a..(b + 1).min(n)
        };
        for ob in world.obstacles() {
            for r in span(ob.min.y, ob.max.y, origin.y, rows) {
                for c in span(ob.min.x, ob.max.x, origin.x, cols) {
                    if ob.contains(point(c, r)) {
                        free[r * cols + c] = false;
                    }
                }
            }
        }
        Self {
            origin,
            cols,
            rows,
            free,
        }
    }

    pub fn point(&self, index: usize) -> Point {
        Point::new(
            self.origin.x + (index % self.cols) as f64,
            self.origin.y + (index / self.cols) as f64,
        )
    }

    pub fn nearest_index(&self, p: Point) -> usize {
        let c = ((p.x - self.origin.x).round().max(0.0) as usize).min(self.cols - 1);
        let r = ((p.y - self.origin.y).round().max(0.0) as usize).min(self.rows - 1);
        r * self.cols + c
    }

    /// 8-connected neighbors with step costs 1 and √2.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let c = (index % self.cols) as i64;
        let r = (index / self.cols) as i64;
        const MOVES: [(i64, i64); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        MOVES.iter().filter_map(move |&(dc, dr)| {
            let (nc, nr) = (c + dc, r + dr);
            if nc < 0 || nr < 0 || nc >= self.cols as i64 || nr >= self.rows as i64 {
                return None;
            }
            let n = nr as usize * self.cols + nc as usize;
            self.free[n].then(|| {
                let cost = if dc != 0 && dr != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                (n, cost)
            })
        })
    }

    /// Target node: the free lattice node inside the goal disc nearest to
    /// the goal center (lowest index on ties).
    pub fn goal_index(&self, problem: &PlanningProblem) -> Option<usize> {
        let g = problem.goal_center;
        let r = problem.goal_radius;
        let mut best: Option<(f64, usize)> = None;
        let c0 = ((g.x - r - self.origin.x).floor().max(0.0)) as usize;
        let c1 = ((g.x + r - self.origin.x).ceil().max(0.0) as usize).min(self.cols - 1);
        let r0 = ((g.y - r - self.origin.y).floor().max(0.0)) as usize;
        let r1 = ((g.y + r - self.origin.y).ceil().max(0.0) as usize).min(self.rows - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let i = row * self.cols + col;
                let d = self.point(i).distance(g);
                if self.free[i] && d <= r && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

/// Grid A* from the start to the goal on the 1 m 8-connected lattice,
/// Euclidean heuristic, ties broken by (f, h, cell index).
pub fn astar_predict(problem: &PlanningProblem) -> Result<PredictedPath> {
    let lattice = Lattice::new(&problem.world);
    let (indices, _) = astar_on_lattice(&lattice, problem)?;
    let mut points: Vec<Point> = indices.iter().map(|&i| lattice.point(i)).collect();
    points[0] = problem.start;
    if points.len() == 1 {
        points.push(problem.goal_center);
    }
    Ok(PredictedPath::new(points, PathSource::Astar))
}

/// Node sequence and lattice cost of the A* path.
pub fn astar_on_lattice(lattice: &Lattice, problem: &PlanningProblem) -> Result<(Vec<usize>, f64)> {
    let start = lattice.nearest_index(problem.start);
    if !lattice.free[start] {
        return Err(Error::NoGridPath);
    }
    let goal = lattice.goal_index(problem).ok_or(Error::NoGridPath)?;
    let goal_pt = lattice.point(goal);
    let n = lattice.free.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let h = |i: usize| {
        let p = lattice.point(i);
        ((p.x - goal_pt.x).powi(2) + (p.y - goal_pt.y).powi(2)).sqrt()
    };
    let h0 = h(start);
    g[start] = 0.0;
    open.push(OpenKey {
        f: h0,
        h: h0,
        index: start,
    });
    while let Some(OpenKey { index, .. }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Ok((path, g[goal]));
        }
        for (next, step) in lattice.neighbors(index) {
            if closed[next] {
                continue;
            }
            let cand = g[index] + step;
            if cand < g[next] {
                g[next] = cand;
                parent[next] = index;
                let hn = h(next);
                open.push(OpenKey {
                    f: cand + hn,
                    h: hn,
                    index: next,
                });
            }
        }
    }
    Err(Error::NoGridPath)
}

/// Normalizes an external waypoint list against `problem`: clamp to the
/// bounds, prepend the start when the first point is more than 0.5 m
/// away, append the goal center when the last point misses the goal disc.
/// Points inside obstacles are kept.
pub fn normalize_external(points: &[Point], problem: &PlanningProblem) -> Result<PredictedPath> {
    let bounds = problem.world.bounds();
    let mut out: Vec<Point> = points.iter().map(|p| bounds.clamp(*p)).collect();
    match out.first() {
        Some(first) if first.distance(problem.start) <= START_SNAP => out[0] = problem.start,
        _ => out.insert(0, problem.start),
    }
    if !problem.in_goal_point(*out.last().expect("start inserted")) {
        out.push(problem.goal_center);
    }
    if out.len() < 2 {
        return Err(Error::EmptyPath);
    }
    Ok(PredictedPath::new(out, PathSource::External))
}

pub fn parse_external_path(text: &str) -> Result<Vec<Point>> {
    serde_json::from_str::<Vec<[f64; 2]>>(text)
        .map(|v| v.into_iter().map(Point::from).collect())
        .map_err(|e| Error::Parse(e.to_string()))
}

/// Reads a JSON array of `[x, y]` points and normalizes it.
pub fn load_external_path(file: &Path, problem: &PlanningProblem) -> Result<PredictedPath> {
    let text = std::fs::read_to_string(file)?;
    let points = parse_external_path(&text)?;
    normalize_external(&points, problem)
}

impl fmt::Display for PathSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathSource::Astar => "astar",
            PathSource::External => "external",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_density_world, Rect, GOAL_RADIUS};
    use std::collections::HashSet;

    fn empty_problem() -> PlanningProblem {
        PlanningProblem::new(
            World::empty(Rect::new(0.0, 0.0, 100.0, 100.0)),
            Point::new(0.0, 0.0),
            Point::new(100.0, 100.0),
            GOAL_RADIUS,
        )
    }

    /// Plain Dijkstra over the lattice (no heuristic, no tie rules);
    /// returns the (straight, diagonal) move counts of a cheapest path.
    fn dijkstra_cost(world: &World, start: Point, goal: Point) -> Option<(usize, usize)> {
        use std::cmp::Reverse;
        let cols = 101i64;
        let free = |c: i64, r: i64| {
            (0..cols).contains(&c) && (0..cols).contains(&r) && world.is_free(Point::new(c as f64, r as f64))
        };
        let key = |c: f64| Reverse((c * 1e9).round() as u64);
        let target = (goal.x.round() as i64, goal.y.round() as i64);
        let mut dist: std::collections::HashMap<(i64, i64), (f64, usize, usize)> = Default::default();
        let mut heap = BinaryHeap::new();
        let s = (start.x.round() as i64, start.y.round() as i64);
        dist.insert(s, (0.0, 0, 0));
        heap.push((key(0.0), s));
        let mut done = HashSet::new();
        while let Some((_, node)) = heap.pop() {
            if !done.insert(node) {
                continue;
            }
            let (cost, ns, nd) = dist[&node];
            if node == target {
                return Some((ns, nd));
            }
            for dc in -1..=1 {
                for dr in -1..=1 {
                    let next = (node.0 + dc, node.1 + dr);
                    if (dc, dr) == (0, 0) || !free(next.0, next.1) {
                        continue;
                    }
                    let diag = dc != 0 && dr != 0;
                    let cand = (
                        cost + if diag { 2f64.sqrt() } else { 1.0 },
                        ns + !diag as usize,
                        nd + diag as usize,
                    );
                    if dist.get(&next).is_none_or(|b| cand.0 < b.0 - 1e-9) {
                        dist.insert(next, cand);
                        heap.push((key(cand.0), next));
                    }
                }
            }
        }
        None
    }

    fn counts(points: &[Point]) -> (usize, usize) {
        let mut s = 0;
        let mut d = 0;
        for w in points.windows(2) {
            let dx = (w[1].x - w[0].x).abs();
            let dy = (w[1].y - w[0].y).abs();
            if dx > 0.5 && dy > 0.5 {
                d += 1;
            } else {
                s += 1;
            }
        }
        (s, d)
    }

    #[test]
    fn empty_map_is_all_diagonal() {
        let p = astar_predict(&empty_problem()).unwrap();
        assert_eq!(p.len(), 101);
        assert_eq!(counts(&p.points), (0, 100));
        assert!((p.length() - 100.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!(p.satisfies_endpoints(&empty_problem()));
        assert_eq!(p, astar_predict(&empty_problem()).unwrap());
    }

    #[test]
    fn astar_matches_dijkstra_on_density_worlds() {
        for seed in 0..6 {
            let problem = generate_density_world(30, 500 + seed).unwrap();
            let path = astar_predict(&problem).unwrap();
            let lattice = Lattice::new(&problem.world);
            let goal = lattice.point(lattice.goal_index(&problem).unwrap());
            let oracle = dijkstra_cost(&problem.world, problem.start, goal).unwrap();
            let (s, d) = counts(&path.points);
            let sq2 = std::f64::consts::SQRT_2;
            assert_eq!(s as f64 + d as f64 * sq2, oracle.0 as f64 + oracle.1 as f64 * sq2);
            for p in &path.points[1..] {
                assert!(problem.world.is_free(*p));
            }
            assert!(path.satisfies_endpoints(&problem));
        }
    }

    #[test]
    fn lattice_occupancy_matches_point_queries() {
        let shifted = World::new(
            Rect::new(-3.3, 0.7, 40.1, 35.9),
            vec![
                Rect::new(-3.3, 0.7, -2.3, 4.0),
                Rect::new(5.7, 9.7, 8.0, 12.7),
                Rect::new(10.0, 10.0, 10.0, 20.0),
                Rect::new(30.2, 30.2, 30.8, 30.8),
            ],
            None,
        );
        let mut worlds = vec![shifted];
        worlds.extend((0..4).map(|s| generate_density_world(30, 900 + s).unwrap().world));
        for world in &worlds {
            let lattice = Lattice::new(world);
            for (i, free) in lattice.free.iter().enumerate() {
                assert_eq!(*free, world.is_free(lattice.point(i)), "cell {i}");
            }
        }
    }

    #[test]
    fn unreachable_goal() {
        let world = World::new(
            Rect::new(0.0, 0.0, 100.0, 100.0),
            vec![Rect::new(50.0, 0.0, 52.0, 100.0)],
            None,
        );
        let problem = PlanningProblem::new(world, Point::new(0.0, 0.0), Point::new(100.0, 100.0), 3.0);
        assert!(matches!(astar_predict(&problem), Err(Error::NoGridPath)));
    }

    #[test]
    fn external_path_normalization() {
        let problem = empty_problem();
        let pts = parse_external_path("[[0,0],[50,50],[100,100]]").unwrap();
        let p = normalize_external(&pts, &problem).unwrap();
        assert_eq!(p.points, pts);

        let pts = parse_external_path("[[5,5],[50,50],[100,100]]").unwrap();
        let p = normalize_external(&pts, &problem).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.points[0], Point::new(0.0, 0.0));

        let pts = parse_external_path("[[0,0],[150,50],[100,100]]").unwrap();
        let p = normalize_external(&pts, &problem).unwrap();
        assert_eq!(p.points[1], Point::new(100.0, 50.0));

        let pts = parse_external_path("[[0,0],[50,50]]").unwrap();
        let p = normalize_external(&pts, &problem).unwrap();
        assert_eq!(*p.points.last().unwrap(), problem.goal_center);

        assert!(matches!(parse_external_path("[[0,0],[1]]"), Err(Error::Parse(_))));
        assert!(matches!(parse_external_path("nope"), Err(Error::Parse(_))));
    }

    #[test]
    fn external_path_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.json");
        std::fs::write(&f, "[[0.2,0.1],[40,60],[99,99]]").unwrap();
        let p = load_external_path(&f, &empty_problem()).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.points[0], Point::new(0.0, 0.0));
        assert_eq!(p.source, PathSource::External);
        assert!(load_external_path(&dir.path().join("missing.json"), &empty_problem()).is_err());
    }
}
