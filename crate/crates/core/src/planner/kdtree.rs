//! Incremental 2-D kd-tree over node positions.
//!
//! Points are inserted in tree order and never removed, so the structure
//! is a plain unbalanced kd-tree; random sample streams keep its expected
//! depth logarithmic. Ties on distance resolve to the lower id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::env::Point;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct KdNode {
    point: Point,
    id: usize,
    left: u32,
    right: u32,
}

#[derive(Clone, Debug, Default)]
pub struct KdTree {
    nodes: Vec<KdNode>,
}

/// Max-heap entry ordered by (distance, id).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    dist_sq: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn coord(p: Point, axis: usize) -> f64 {
    if axis == 0 {
        p.x
    } else {
        p.y
    }
}

impl KdTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn insert(&mut self, point: Point, id: usize) {
        let new = self.nodes.len() as u32;
        self.nodes.push(KdNode {
            point,
            id,
            left: NONE,
            right: NONE,
        });
        if new == 0 {
            return;
        }
        let mut cur = 0u32;
        let mut axis = 0;
        loop {
            let node = &self.nodes[cur as usize];
            let go_left = coord(point, axis) < coord(node.point, axis);
            let next = if go_left { node.left } else { node.right };
            if next == NONE {
                let node = &mut self.nodes[cur as usize];
                if go_left {
                    node.left = new;
                } else {
                    node.right = new;
                }
                return;
            }
            cur = next;
            axis ^= 1;
        }
    }

    /// Nearest stored point as `(id, squared distance)`.
    pub fn nearest(&self, q: Point) -> Option<(usize, f64)> {
        self.k_nearest(q, 1).into_iter().next()
    }

    /// The `k` nearest points, ascending by (distance, id).
    pub fn k_nearest(&self, q: Point, k: usize) -> Vec<(usize, f64)> {
        if self.nodes.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, 0, q, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.id, c.dist_sq)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_rec(&self, idx: u32, axis: usize, q: Point, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = &self.nodes[idx as usize];
        let cand = Candidate {
            dist_sq: node.point.distance_sq(q),
            id: node.id,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(cand);
        }
        let diff = coord(q, axis) - coord(node.point, axis);
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if near != NONE {
            self.knn_rec(near, axis ^ 1, q, k, heap);
        }
        // `<=` keeps equal-distance points on the far side reachable for the id tie-break
        if far != NONE && (heap.len() < k || diff * diff <= heap.peek().expect("non-empty").dist_sq)
        {
            self.knn_rec(far, axis ^ 1, q, k, heap);
        }
    }

    /// Ids of all points within `radius` of `q` (closed ball), ascending.
    pub fn within_radius(&self, q: Point, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            let r2 = radius * radius;
            let mut stack = vec![(0u32, 0usize)];
            while let Some((idx, axis)) = stack.pop() {
                let node = &self.nodes[idx as usize];
                if node.point.distance_sq(q) <= r2 {
                    out.push(node.id);
                }
                let diff = coord(q, axis) - coord(node.point, axis);
                if node.left != NONE && diff - radius < 0.0 {
                    stack.push((node.left, axis ^ 1));
                }
                if node.right != NONE && diff + radius >= 0.0 {
                    stack.push((node.right, axis ^ 1));
                }
            }
        }
        out.sort_unstable();
        out
    }
}
