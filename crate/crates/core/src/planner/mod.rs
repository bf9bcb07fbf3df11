//! RRT* with pluggable samplers.
//!
//! Each iteration samples a state, finds its nearest tree node under the
//! model metric, steers toward it, checks the steered trajectory for
//! collisions, picks the cheapest collision-free parent among the nodes
//! within the shrinking radius `r_n`, and rewires those neighbors through
//! the new node when that lowers their cost-to-come.

pub mod kdtree;
pub mod sampler;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::PredictionRegions;
use crate::dynamics::{ModelKind, ModelParams, State, Steering, Trajectory};
use crate::env::{PlanningProblem, World, COLLISION_RESOLUTION};
use crate::error::{Error, Result};

pub use kdtree::KdTree;
pub use sampler::{KSelection, Sampler, SamplerConfig, SamplerKind};

/// Samples used to estimate the free area when `gamma` is not supplied.
pub const FREE_AREA_SAMPLES: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Iteration budget N.
    pub iterations: usize,
    /// Shrinking-ball constant; estimated from the free area when `None`.
    pub gamma: Option<f64>,
    /// Dimension d in the `r_n` rule. Near queries run on positions.
    pub dimension: usize,
    pub seed: u64,
    pub stop_at_first: bool,
    /// Euclidean candidates re-ranked by the exact metric in Nearest
    /// (Dubins and car only).
    pub metric_candidates: usize,
    /// Verify tree cost consistency after every iteration (slow).
    pub check_invariants: bool,
}

impl PlannerConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            gamma: None,
            dimension: 2,
            seed,
            stop_at_first: false,
            metric_candidates: 4,
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iteration budget must be >= 1".into()));
        }
        if self.dimension == 0 || self.metric_candidates == 0 {
            return Err(Error::InvalidArgument(
                "dimension and metric_candidates must be >= 1".into(),
            ));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!("gamma {g} must be positive")));
            }
        }
        Ok(())
    }
}

/// Volume of the unit ball in `d` dimensions.
fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// `γ = 2 (1 + 1/d)^{1/d} (μ(X_free) / ζ_d)^{1/d}`.
pub fn rrt_star_gamma(free_area: f64, d: usize) -> f64 {
    let inv = 1.0 / d as f64;
    2.0 * (1.0 + inv).powf(inv) * (free_area / unit_ball_volume(d)).powf(inv)
}

/// Gamma for a world from a seeded Monte-Carlo free-area estimate.
pub fn gamma_for_world(world: &World, d: usize) -> f64 {
    rrt_star_gamma(world.free_area_estimate(FREE_AREA_SAMPLES, 0), d)
}

/// `r_n = min(γ (log n / n)^{1/d}, η)`.
pub fn near_radius(gamma: f64, n: usize, d: usize, eta: f64) -> f64 {
    if n < 2 {
        return eta;
    }
    let n = n as f64;
    (gamma * (n.ln() / n).powf(1.0 / d as f64)).min(eta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub state: State,
    pub parent: Option<usize>,
    #[serde(skip)]
    pub incoming: Option<Trajectory>,
    pub cost: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Tree {
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    index: KdTree,
}

impl Tree {
    pub fn new(root: State) -> Self {
        let mut t = Self::default();
        t.nodes.push(Node {
            state: root,
            parent: None,
            incoming: None,
            cost: 0.0,
        });
        t.children.push(Vec::new());
        t.index.insert(root.position(), 0);
        t
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    /// Adds a node under `parent`; returns its id.
    pub fn add(&mut self, parent: usize, incoming: Trajectory) -> usize {
        let id = self.nodes.len();
        let state = *incoming.end();
        let cost = self.nodes[parent].cost + incoming.cost();
        self.nodes.push(Node {
            state,
            parent: Some(parent),
            incoming: Some(incoming),
            cost,
        });
        self.children.push(Vec::new());
        self.children[parent].push(id);
        self.index.insert(state.position(), id);
        id
    }

    /// Re-parents `id` and recomputes the cost of its whole subtree.
    pub fn reparent(&mut self, id: usize, parent: usize, incoming: Trajectory) {
        if let Some(old) = self.nodes[id].parent {
            self.children[old].retain(|c| *c != id);
        }
        self.children[parent].push(id);
        let node = &mut self.nodes[id];
        node.parent = Some(parent);
        node.incoming = Some(incoming);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let p = self.nodes[n].parent.expect("non-root");
            let c = self.nodes[p].cost
                + self.nodes[n].incoming.as_ref().map_or(0.0, Trajectory::cost);
            self.nodes[n].cost = c;
            stack.extend_from_slice(&self.children[n]);
        }
    }

    /// Checks root, cost consistency and acyclicity.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let root = &self.nodes[0];
        if root.parent.is_some() || root.cost != 0.0 {
            return Err("bad root".into());
        }
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            let p = n.parent.ok_or_else(|| format!("node {i} has no parent"))?;
            let inc = n.incoming.as_ref().ok_or_else(|| format!("node {i} has no edge"))?;
            let expect = self.nodes[p].cost + inc.cost();
            if (n.cost - expect).abs() > 1e-9 {
                return Err(format!("node {i}: cost {} != {expect}", n.cost));
            }
            let mut cur = i;
            for _ in 0..self.nodes.len() {
                match self.nodes[cur].parent {
                    Some(q) => cur = q,
                    None => break,
                }
            }
            if cur != 0 {
                return Err(format!("node {i} does not reach the root"));
            }
        }
        Ok(())
    }

    /// JSON dump: nodes with parent ids, states and costs.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            id: usize,
            parent: Option<usize>,
            state: &'a State,
            cost: f64,
        }
        let dump: Vec<Dump> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| Dump {
                id,
                parent: n.parent,
                state: &n.state,
                cost: n.cost,
            })
            .collect();
        Ok(serde_json::to_string(&dump)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub iterations: usize,
    pub iterations_to_first: Option<usize>,
    pub time_to_first: Option<f64>,
    pub elapsed: f64,
    pub nodes: usize,
    pub fallbacks: usize,
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub tree: Tree,
    pub best: Option<Trajectory>,
    pub stats: PlanStats,
}

/// Every state is free and consecutive states are joined by free segments.
pub fn trajectory_free(world: &World, t: &Trajectory) -> bool {
    t.states.iter().all(|s| world.is_free(s.position()))
        && t.states.windows(2).all(|w| {
            let (a, b) = (w[0].position(), w[1].position());
            a.distance(b) <= COLLISION_RESOLUTION || world.segment_free(a, b, COLLISION_RESOLUTION)
        })
}

/// Cheapest goal-reaching path in `tree`, backtracked to the root.
pub fn extract_solution(tree: &Tree, problem: &PlanningProblem) -> Option<Trajectory> {
    let best = tree
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| problem.in_goal(&n.state))
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)))?
        .0;
    let mut chain = vec![best];
    while let Some(p) = tree.nodes[*chain.last().expect("non-empty")].parent {
        chain.push(p);
    }
    let mut out = Trajectory::single(tree.nodes[0].state);
    for id in chain.into_iter().rev().skip(1) {
        out.append(tree.nodes[id].incoming.as_ref().expect("non-root edge"));
    }
    Some(out)
}

struct Rrt<'a> {
    problem: &'a PlanningProblem,
    steering: Steering,
    cfg: &'a PlannerConfig,
    gamma: f64,
    tree: Tree,
}

impl Rrt<'_> {
    fn model(&self) -> ModelKind {
        self.steering.model()
    }

    fn nearest(&self, x: &State) -> usize {
        let q = x.position();
        if self.model() == ModelKind::Holonomic {
            return self.tree.index.nearest(q).expect("tree has a root").0;
        }
        self.tree
            .index
            .k_nearest(q, self.cfg.metric_candidates)
            .into_iter()
            .map(|(id, _)| (self.steering.distance(&self.tree.nodes[id].state, x), id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .expect("tree has a root")
            .1
    }

    /// One iteration with sample `x_rand`; returns the new node id.
    fn extend(&mut self, x_rand: &State) -> Option<usize> {
        let world = &self.problem.world;
        let nearest = self.nearest(x_rand);
        let steered = self.steering.steer(&self.tree.nodes[nearest].state, x_rand).ok()?;
        if steered.states.len() < 2 || !trajectory_free(world, &steered) {
            return None;
        }
        let x_new = *steered.end();
        let eta = self.steering.params().step;
        let r = near_radius(self.gamma, self.tree.len(), self.cfg.dimension, eta);
        let near = self.tree.index.within_radius(x_new.position(), r);

        // ChooseParent: cheapest collision-free connection
        let mut cands: Vec<(f64, usize, Option<Trajectory>)> = Vec::with_capacity(near.len() + 1);
        cands.push((self.tree.nodes[nearest].cost + steered.cost(), nearest, Some(steered)));
        for &id in near.iter().filter(|&&id| id != nearest) {
            let from = &self.tree.nodes[id].state;
            if self.model() == ModelKind::Car5D {
                if let Some(t) = self.steering.connect(from, &x_new) {
                    cands.push((self.tree.nodes[id].cost + t.cost(), id, Some(t)));
                }
            } else if let Some(len) = self.steering.connect_length(from, &x_new) {
                cands.push((self.tree.nodes[id].cost + len, id, None));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen = None;
        for (_, id, traj) in cands {
            let traj = match traj {
                Some(t) => t,
                None => match self.steering.connect(&self.tree.nodes[id].state, &x_new) {
                    Some(t) => t,
                    None => continue,
                },
            };
            if id == nearest || trajectory_free(world, &traj) {
                chosen = Some((id, traj));
                break;
            }
        }
        let (parent, traj) = chosen.expect("nearest is always a valid parent");
        let new_id = self.tree.add(parent, traj);

        // Rewire
        let new_cost = self.tree.nodes[new_id].cost;
        for id in near {
            if id == parent {
                continue;
            }
            let target = self.tree.nodes[id].state;
            let old = self.tree.nodes[id].cost;
            let through = match self.steering.connect_length(&x_new, &target) {
                Some(len) => new_cost + len,
                None => continue,
            };
            if through >= old {
                continue;
            }
            let Some(traj) = self.steering.connect(&x_new, &target) else {
                continue;
            };
            if new_cost + traj.cost() < old && trajectory_free(world, &traj) {
                self.tree.reparent(id, new_id, traj);
                debug_assert!(self.tree.nodes[id].cost <= old);
            }
        }
        Some(new_id)
    }
}

/// Runs RRT* on `problem`. `regions` must be given exactly when the
/// sampler is conformal.
pub fn plan(
    problem: &PlanningProblem,
    params: &ModelParams,
    sampler_cfg: &SamplerConfig,
    cfg: &PlannerConfig,
    regions: Option<&PredictionRegions>,
) -> Result<PlanResult> {
    problem.validate()?;
    params.validate()?;
    cfg.validate()?;
    let mut sampler = Sampler::new(sampler_cfg, problem, params, regions)?;
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => gamma_for_world(&problem.world, cfg.dimension),
    };
    let root = root_state(params.model, problem);
    let mut rrt = Rrt {
        problem,
        steering: Steering::new(params.clone()),
        cfg,
        gamma,
        tree: Tree::new(root),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = PlanStats::default();
    let start = Instant::now();
    if problem.in_goal(&root) {
        stats.iterations_to_first = Some(0);
        stats.time_to_first = Some(0.0);
    }

    for j in 1..=cfg.iterations {
        if cfg.stop_at_first && stats.iterations_to_first.is_some() {
            break;
        }
        stats.iterations = j;
        let x_rand = sampler.sample(&mut rng);
        let added = rrt.extend(&x_rand);
        if cfg.check_invariants {
            if let Err(e) = rrt.tree.check_invariants() {
                panic!("tree invariant violated at iteration {j}: {e}");
            }
        }
        if let Some(id) = added {
            if stats.iterations_to_first.is_none() && problem.in_goal(&rrt.tree.nodes[id].state) {
                stats.iterations_to_first = Some(j);
                stats.time_to_first = Some(start.elapsed().as_secs_f64());
            }
        }
    }
    stats.elapsed = start.elapsed().as_secs_f64();
    stats.nodes = rrt.tree.len();
    stats.fallbacks = sampler.fallbacks();
    let best = extract_solution(&rrt.tree, problem);
    Ok(PlanResult {
        tree: rrt.tree,
        best,
        stats,
    })
}

/// Start state at the problem's start position; heading faces the goal.
pub fn root_state(model: ModelKind, problem: &PlanningProblem) -> State {
    let s = problem.start;
    let g = problem.goal_center;
    let theta = (g.y - s.y).atan2(g.x - s.x);
    match model {
        ModelKind::Holonomic => State::holonomic(s.x, s.y),
        ModelKind::Dubins => State::dubins(s.x, s.y, theta),
        ModelKind::Car5D => State::car(s.x, s.y, theta, 0.0, 0.0),
    }
}
