//! Planar workspaces with axis-aligned rectangular obstacles.
//!
//! A [`World`] owns its obstacle list plus a bucket index used by the
//! collision queries; a [`PlanningProblem`] pairs a world with a start
//! position and a closed goal disc. Both are immutable once built.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};

/// Default spacing for segment collision checks, meters.
pub const COLLISION_RESOLUTION: f64 = 0.25;
/// Cell size of the occupancy raster used to measure density.
pub const RASTER_CELL: f64 = 0.5;
/// Radius of the obstacle-free disc kept around the start position.
pub const START_CLEARANCE: f64 = 2.0;
/// Goal radius used by every generated problem.
pub const GOAL_RADIUS: f64 = 3.0;

const BUCKET_SIZE: f64 = 5.0;
const MAX_GENERATION_ATTEMPTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned rectangle, serialized as `[xmin, ymin, xmax, ymax]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            min: Point::new(xmin.min(xmax), ymin.min(ymax)),
            max: Point::new(xmin.max(xmax), ymin.max(ymax)),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed containment: boundary points count as inside.
    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Euclidean distance from `p` to the closed rectangle (0 inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        let cx = p.x.clamp(self.min.x, self.max.x);
        let cy = p.y.clamp(self.min.y, self.max.y);
        p.distance(Point::new(cx, cy))
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let min = Point::new(self.min.x.max(other.min.x), self.min.y.max(other.min.y));
        let max = Point::new(self.max.x.min(other.max.x), self.max.y.min(other.max.y));
        (min.x <= max.x && min.y <= max.y).then_some(Rect { min, max })
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(self.max)
    }
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Self {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.min.x, r.min.y, r.max.x, r.max.y]
    }
}

/// Uniform bucket grid over the world bounds; each bucket lists the
/// obstacles whose closed extent touches it.
#[derive(Clone, Debug)]
struct BucketIndex {
    origin: Point,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl BucketIndex {
    fn build(bounds: &Rect, obstacles: &[Rect]) -> Self {
        let cols = ((bounds.width() / BUCKET_SIZE).ceil() as usize).max(1);
        let rows = ((bounds.height() / BUCKET_SIZE).ceil() as usize).max(1);
        let mut index = Self {
            origin: bounds.min,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        };
        for (i, r) in obstacles.iter().enumerate() {
            let (c0, r0) = index.cell_of(r.min);
            let (c1, r1) = index.cell_of(r.max);
            for row in r0..=r1 {
                for col in c0..=c1 {
                    index.buckets[row * cols + col].push(i as u32);
                }
            }
        }
        index
    }

    #[inline]
    fn cell_of(&self, p: Point) -> (usize, usize) {
        // the casts floor non-negative values
        let c = (p.x - self.origin.x) / BUCKET_SIZE;
        let r = (p.y - self.origin.y) / BUCKET_SIZE;
        (
            (c.max(0.0) as usize).min(self.cols - 1),
            (r.max(0.0) as usize).min(self.rows - 1),
        )
    }

    #[inline]
    fn candidates(&self, p: Point) -> &[u32] {
        let (c, r) = self.cell_of(p);
        &self.buckets[r * self.cols + c]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "WorldRepr", into = "WorldRepr")]
pub struct World {
    bounds: Rect,
    obstacles: Vec<Rect>,
    density_label: Option<u32>,
    index: BucketIndex,
}

#[derive(Serialize, Deserialize)]
struct WorldRepr {
    bounds: Rect,
    obstacles: Vec<Rect>,
}

impl From<WorldRepr> for World {
    fn from(r: WorldRepr) -> Self {
        World::new(r.bounds, r.obstacles, None)
    }
}

impl From<World> for WorldRepr {
    fn from(w: World) -> Self {
        WorldRepr {
            bounds: w.bounds,
            obstacles: w.obstacles,
        }
    }
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.bounds == other.bounds && self.obstacles == other.obstacles
    }
}

impl World {
    /// Obstacles are clipped to the bounds; fully outside ones are dropped.
    pub fn new(bounds: Rect, obstacles: Vec<Rect>, density_label: Option<u32>) -> Self {
        let obstacles: Vec<Rect> = obstacles
            .iter()
            .filter_map(|o| o.intersection(&bounds))
            .collect();
        let index = BucketIndex::build(&bounds, &obstacles);
        Self {
            bounds,
            obstacles,
            density_label,
            index,
        }
    }

    pub fn empty(bounds: Rect) -> Self {
        Self::new(bounds, Vec::new(), None)
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    pub fn density_label(&self) -> Option<u32> {
        self.density_label
    }

    /// Inside the (closed) bounds and outside every (closed) obstacle.
    #[inline]
    pub fn is_free(&self, p: Point) -> bool {
        if !self.bounds.contains(p) {
            return false;
        }
        !self
            .index
            .candidates(p)
            .iter()
            .any(|&i| self.obstacles[i as usize].contains(p))
    }

    /// Samples `[a, b]` at spacing at most `resolution`, endpoints included.
    pub fn segment_free(&self, a: Point, b: Point, resolution: f64) -> bool {
        debug_assert!(resolution > 0.0);
        // canonical endpoint order makes the sample set independent of direction
        let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
        let len = a.distance(b);
        let n = (len / resolution).ceil().max(1.0) as usize;
        (0..=n).all(|i| self.is_free(a.lerp(b, i as f64 / n as f64)))
    }

    /// Fraction of 0.5 m raster cells whose center lies in an obstacle.
    pub fn rasterized_occupancy(&self) -> f64 {
        let raster = Raster::new(&self.bounds);
        let mut raster = raster;
        for o in &self.obstacles {
            raster.fill(o);
        }
        raster.occupancy()
    }

    /// Monte-Carlo estimate of the free area, deterministic given `seed`.
    pub fn free_area_estimate(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let free = (0..samples)
            .filter(|_| self.is_free(uniform_in_rect(&mut rng, &self.bounds)))
            .count();
        self.bounds.area() * free as f64 / samples.max(1) as f64
    }
}

pub(crate) fn uniform_in_rect<R: Rng + ?Sized>(rng: &mut R, r: &Rect) -> Point {
    Point::new(
        r.min.x + rng.random::<f64>() * r.width(),
        r.min.y + rng.random::<f64>() * r.height(),
    )
}

/// Occupancy raster at [`RASTER_CELL`] resolution; a cell is occupied iff
/// its center lies in some obstacle.
struct Raster {
    origin: Point,
    cols: usize,
    rows: usize,
    cells: Vec<bool>,
    occupied: usize,
}

impl Raster {
    fn new(bounds: &Rect) -> Self {
        let cols = (bounds.width() / RASTER_CELL).round() as usize;
        let rows = (bounds.height() / RASTER_CELL).round() as usize;
        Self {
            origin: bounds.min,
            cols,
            rows,
            cells: vec![false; cols * rows],
            occupied: 0,
        }
    }

    fn fill(&mut self, r: &Rect) {
        // centers at origin + (i + 0.5) * cell
        let lo = |v: f64, o: f64| ((v - o) / RASTER_CELL - 0.5).ceil().max(0.0) as usize;
        let hi = |v: f64, o: f64, n: usize| {
            let h = ((v - o) / RASTER_CELL - 0.5).floor();
            if h < 0.0 {
                None
            } else {
                Some((h as usize).min(n - 1))
            }
        };
        let (Some(c1), Some(r1)) = (
            hi(r.max.x, self.origin.x, self.cols),
            hi(r.max.y, self.origin.y, self.rows),
        ) else {
            return;
        };
        let c0 = lo(r.min.x, self.origin.x);
        let r0 = lo(r.min.y, self.origin.y);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cell = &mut self.cells[row * self.cols + col];
                if !*cell {
                    *cell = true;
                    self.occupied += 1;
                }
            }
        }
    }

    fn occupancy(&self) -> f64 {
        self.occupied as f64 / self.cells.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningProblem {
    #[serde(flatten)]
    pub world: World,
    pub start: Point,
    pub goal_center: Point,
    pub goal_radius: f64,
}

impl PlanningProblem {
    pub fn new(world: World, start: Point, goal_center: Point, goal_radius: f64) -> Self {
        Self {
            world,
            start,
            goal_center,
            goal_radius,
        }
    }

    /// Closed goal disc test on the positional part of `state`.
    pub fn in_goal(&self, state: &State) -> bool {
        self.in_goal_point(state.position())
    }

    pub fn in_goal_point(&self, p: Point) -> bool {
        p.distance(self.goal_center) <= self.goal_radius
    }

    pub fn validate(&self) -> Result<()> {
        for o in self.world.obstacles() {
            if !self.world.bounds().contains_rect(o) {
                return Err(Error::InvalidProblem(format!(
                    "obstacle {o:?} outside bounds"
                )));
            }
        }
        if !self.world.is_free(self.start) {
            return Err(Error::InvalidProblem("start position is occupied".into()));
        }
        if !(self.goal_radius > 0.0) {
            return Err(Error::InvalidProblem("goal radius must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Obstacle side lengths for density worlds, meters.
const OBSTACLE_SIDE: (f64, f64) = (4.0, 12.0);
/// Minimum distance to obstacles along some lattice route from start to
/// goal; rules out worlds whose only passages are slivers.
const PASSAGE_CLEARANCE: f64 = START_CLEARANCE;

fn default_bounds() -> Rect {
    Rect::new(0.0, 0.0, 100.0, 100.0)
}

/// Random rectangular clutter covering `density_percent` of the
/// 100 m × 100 m square (measured on the 0.5 m raster, overshoot < 1 point).
///
/// Rectangles touching the 2 m start disc or the goal disc are rejected,
/// and the whole layout is redrawn unless the 1 m lattice connects start
/// to goal through points at least `START_CLEARANCE` from every obstacle.
pub fn generate_density_world(density_percent: u32, seed: u64) -> Result<PlanningProblem> {
    if !(1..=60).contains(&density_percent) {
        return Err(Error::InvalidArgument(format!(
            "density {density_percent}% outside [1, 60]"
        )));
    }
    let bounds = default_bounds();
    let start = Point::new(0.0, 0.0);
    let goal = Point::new(100.0, 100.0);
    let target = density_percent as f64 / 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut raster = Raster::new(&bounds);
        let mut obstacles = Vec::new();
        let mut rejected = 0usize;
        while raster.occupancy() < target {
            let w = rng.random_range(OBSTACLE_SIDE.0..OBSTACLE_SIDE.1);
            let h = rng.random_range(OBSTACLE_SIDE.0..OBSTACLE_SIDE.1);
            let x = rng.random_range(bounds.min.x..bounds.max.x - w);
            let y = rng.random_range(bounds.min.y..bounds.max.y - h);
            let r = Rect::new(x, y, x + w, y + h);
            if r.distance_to(start) <= START_CLEARANCE || r.distance_to(goal) <= GOAL_RADIUS {
                rejected += 1;
                if rejected > 100_000 {
                    break;
                }
                continue;
            }
            raster.fill(&r);
            obstacles.push(r);
        }
        if raster.occupancy() < target {
            continue;
        }
        let world = World::new(bounds, obstacles, Some(density_percent));
        if lattice_connected(&world, start, goal, PASSAGE_CLEARANCE) {
            return Ok(PlanningProblem::new(world, start, goal, GOAL_RADIUS));
        }
    }
    Err(Error::Generation(format!(
        "could not keep start/goal clear and connected at {density_percent}% density"
    )))
}

/// 8-connected reachability between the lattice points nearest `a` and `b`
/// on the 1 m grid. A lattice point is usable iff it is free and at least
/// `clearance` from every obstacle.
fn lattice_connected(world: &World, a: Point, b: Point, clearance: f64) -> bool {
    let b0 = world.bounds();
    let cols = (b0.width().floor() as usize) + 1;
    let rows = (b0.height().floor() as usize) + 1;
    let at = |c: usize, r: usize| Point::new(b0.min.x + c as f64, b0.min.y + r as f64);
    let cell = |p: Point| {
        (
            ((p.x - b0.min.x).round().max(0.0) as usize).min(cols - 1),
            ((p.y - b0.min.y).round().max(0.0) as usize).min(rows - 1),
        )
    };
    let usable = |p: Point| {
        world.is_free(p) && world.obstacles().iter().all(|o| o.distance_to(p) >= clearance)
    };
    let (sc, sr) = cell(a);
    let (gc, gr) = cell(b);
    if !usable(at(sc, sr)) || !usable(at(gc, gr)) {
        return false;
    }
    let mut seen = vec![false; cols * rows];
    let mut queue = VecDeque::from([(sc, sr)]);
    seen[sr * cols + sc] = true;
    while let Some((c, r)) = queue.pop_front() {
        if (c, r) == (gc, gr) {
            return true;
        }
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                if nc < 0 || nr < 0 || nc >= cols as i64 || nr >= rows as i64 {
                    continue;
                }
                let (nc, nr) = (nc as usize, nr as usize);
                if !seen[nr * cols + nc] && usable(at(nc, nr)) {
                    seen[nr * cols + nc] = true;
                    queue.push_back((nc, nr));
                }
            }
        }
    }
    false
}

pub const MAZE_CELLS: usize = 10;
pub const MAZE_WALL: f64 = 2.0;

/// Which walls of a perfect maze remain, on a `MAZE_CELLS` square grid.
///
/// `east[r][c]` is the wall between cells (c, r) and (c + 1, r);
/// `north[r][c]` the wall between (c, r) and (c, r + 1).
#[derive(Clone, Debug, PartialEq)]
pub struct MazeLayout {
    pub east: Vec<Vec<bool>>,
    pub north: Vec<Vec<bool>>,
}

/// Recursive-backtracker perfect maze; deterministic given `seed`.
pub fn maze_layout(seed: u64) -> MazeLayout {
    let n = MAZE_CELLS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut east = vec![vec![true; n - 1]; n];
    let mut north = vec![vec![true; n]; n - 1];
    let mut visited = vec![vec![false; n]; n];
    let mut stack = vec![(0usize, 0usize)];
    visited[0][0] = true;
    while let Some(&(c, r)) = stack.last() {
        let mut options: Vec<(usize, usize)> = Vec::with_capacity(4);
        if c > 0 && !visited[r][c - 1] {
            options.push((c - 1, r));
        }
        if c + 1 < n && !visited[r][c + 1] {
            options.push((c + 1, r));
        }
        if r > 0 && !visited[r - 1][c] {
            options.push((c, r - 1));
        }
        if r + 1 < n && !visited[r + 1][c] {
            options.push((c, r + 1));
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let (nc, nr) = options[rng.random_range(0..options.len())];
        if nr == r {
            east[r][c.min(nc)] = false;
        } else {
            north[r.min(nr)][c] = false;
        }
        visited[nr][nc] = true;
        stack.push((nc, nr));
    }
    MazeLayout { east, north }
}

/// Corridor world built from [`maze_layout`]: 10 m cells separated by 2 m
/// thick walls, start at (0, 0), goal disc at (100, 100).
pub fn generate_maze_world(seed: u64) -> PlanningProblem {
    let bounds = default_bounds();
    let layout = maze_layout(seed);
    let n = MAZE_CELLS;
    let cell = bounds.width() / n as f64;
    let half = MAZE_WALL / 2.0;
    let mut walls = Vec::new();
    for r in 0..n {
        for c in 0..n - 1 {
            if layout.east[r][c] {
                let x = (c + 1) as f64 * cell;
                walls.push(Rect::new(
                    x - half,
                    (r as f64 * cell - half).max(bounds.min.y),
                    x + half,
                    ((r + 1) as f64 * cell + half).min(bounds.max.y),
                ));
            }
        }
    }
    for r in 0..n - 1 {
        for c in 0..n {
            if layout.north[r][c] {
                let y = (r + 1) as f64 * cell;
                walls.push(Rect::new(
                    (c as f64 * cell - half).max(bounds.min.x),
                    y - half,
                    ((c + 1) as f64 * cell + half).min(bounds.max.x),
                    y + half,
                ));
            }
        }
    }
    let world = World::new(bounds, walls, None);
    PlanningProblem::new(
        world,
        Point::new(0.0, 0.0),
        Point::new(100.0, 100.0),
        GOAL_RADIUS,
    )
}
