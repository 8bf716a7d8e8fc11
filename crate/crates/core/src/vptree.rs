//! Vantage-point tree for exact k-nearest-neighbor queries under any metric.
//!
//! Nodes live in one array in pre-order: a node is followed by its inside
//! subtree (`inside_len` nodes) and then its outside subtree. Every object in
//! the inside subtree is strictly closer to the vantage object than `radius`;
//! everything in the outside subtree is at distance `>= radius`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::matrix::DataMatrix;

pub trait Metric: Sync {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Metric for Euclidean {
    #[inline]
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Sync> Metric for F {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpNode {
    pub index: usize,
    pub radius: f64,
    pub inside_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl Neighbor {
    #[inline]
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Up to `k` neighbors ordered by (distance, index).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub entries: Vec<Neighbor>,
}

impl NeighborList {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|n| n.index)
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|n| n.distance)
    }

    /// Distance to the furthest kept neighbor.
    pub fn tau(&self) -> f64 {
        self.entries.last().map_or(f64::INFINITY, |n| n.distance)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Max-heap of the current best candidates; `tau` is infinite until full.
struct Candidates {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn tau(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |n| n.distance)
        }
    }

    #[inline]
    fn offer(&mut self, cand: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(worst) = self.heap.peek() {
            if cand.key_cmp(worst) == Ordering::Less {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
    }

    fn into_list(self) -> NeighborList {
        NeighborList {
            entries: self.heap.into_sorted_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VpTree<'a, M: Metric = Euclidean> {
    data: &'a [f64],
    dim: usize,
    metric: M,
    nodes: Vec<VpNode>,
}

impl<'a, M: Metric> VpTree<'a, M> {
    /// Builds over the `data.len() / dim` rows of `data`. Vantage points are
    /// drawn uniformly at random from each subset using `seed`.
    pub fn build(data: &'a [f64], dim: usize, metric: M, seed: u64) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "data length must be a multiple of dim");
        let n = data.len() / dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items: Vec<(usize, f64)> = (0..n).map(|i| (i, 0.0)).collect();
        let mut nodes = vec![
            VpNode {
                index: 0,
                radius: 0.0,
                inside_len: 0,
            };
            n
        ];

        // Explicit stack: heavy duplication can make the tree arbitrarily deep.
        let mut stack = vec![(0usize, n)];
        while let Some((start, end)) = stack.pop() {
            if start >= end {
                continue;
            }
            let pick = rng.random_range(start..end);
            items.swap(start, pick);
            let vantage = items[start].0;
            let vp = &data[vantage * dim..(vantage + 1) * dim];
            let rest = &mut items[start + 1..end];
            for it in rest.iter_mut() {
                it.1 = metric.distance(vp, &data[it.0 * dim..(it.0 + 1) * dim]);
            }
            let (radius, inside_len) = if rest.is_empty() {
                (0.0, 0)
            } else {
                let mid = rest.len() / 2;
                rest.select_nth_unstable_by(mid, |a, b| a.1.total_cmp(&b.1));
                let radius = rest[mid].1;
                // Strictly-closer objects go inside, ties at the radius go outside.
                let mut split = 0;
                for j in 0..rest.len() {
                    if rest[j].1 < radius {
                        rest.swap(split, j);
                        split += 1;
                    }
                }
                (radius, split)
            };
            nodes[start] = VpNode {
                index: vantage,
                radius,
                inside_len,
            };
            let inside_start = start + 1;
            let outside_start = inside_start + inside_len;
            stack.push((outside_start, end));
            stack.push((inside_start, outside_start));
        }

        Self { data, dim, metric, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[VpNode] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn metric(&self) -> &M {
        &self.metric
    }

    /// The `k` objects nearest to object `query` (itself excluded). `k` is
    /// clamped to `n - 1`.
    pub fn knn(&self, query: usize, k: usize) -> NeighborList {
        let n = self.len();
        let k = if k + 1 > n {
            log::warn!("k = {k} exceeds n - 1 = {}; clamping", n.saturating_sub(1));
            n.saturating_sub(1)
        } else {
            k
        };
        self.search(self.point(query), k, Some(query))
    }

    /// The `k` objects nearest to an arbitrary point, optionally skipping one index.
    pub fn knn_point(&self, target: &[f64], k: usize, exclude: Option<usize>) -> NeighborList {
        self.search(target, k.min(self.len()), exclude)
    }

    fn search(&self, target: &[f64], k: usize, exclude: Option<usize>) -> NeighborList {
        let mut cands = Candidates::new(k);
        if k == 0 || self.nodes.is_empty() {
            return cands.into_list();
        }
        // (subtree start, subtree end, lower bound on any distance inside it)
        let mut stack: Vec<(usize, usize, f64)> = vec![(0, self.nodes.len(), 0.0)];
        while let Some((start, end, bound)) = stack.pop() {
            if start >= end || !admits(bound, cands.tau()) {
                continue;
            }
            let node = self.nodes[start];
            let dist = self.metric.distance(target, self.point(node.index));
            if Some(node.index) != exclude {
                cands.offer(Neighbor {
                    index: node.index,
                    distance: dist,
                });
            }
            let inside = (start + 1, start + 1 + node.inside_len);
            let outside = (inside.1, end);
            // Triangle inequality: inside objects are at least dist - radius
            // away, outside objects at least radius - dist.
            let inside_bound = dist - node.radius;
            let outside_bound = node.radius - dist;
            // Pushed last = searched first.
            if dist < node.radius {
                stack.push((outside.0, outside.1, outside_bound));
                stack.push((inside.0, inside.1, inside_bound));
            } else {
                stack.push((inside.0, inside.1, inside_bound));
                stack.push((outside.0, outside.1, outside_bound));
            }
        }
        cands.into_list()
    }
}

/// Whether a subtree whose members are at least `bound` away can still hold
/// a neighbor at distance `<= tau`. A relative slack keeps rounding in the
/// bound from pruning exact ties.
#[inline]
fn admits(bound: f64, tau: f64) -> bool {
    bound <= tau + 1e-9 * (tau.abs() + bound.abs())
}

impl<'a> VpTree<'a, Euclidean> {
    pub fn from_matrix(m: &'a DataMatrix, seed: u64) -> Self {
        Self::build(m.values(), m.d(), Euclidean, seed)
    }
}

/// Neighbor lists for every object: `graph[i]` holds the `k` nearest others.
pub fn knn_graph<M: Metric>(data: &DataMatrix, k: usize, metric: M, seed: u64) -> Vec<NeighborList> {
    let n = data.n();
    let k = if k + 1 > n {
        log::warn!("k = {k} exceeds n - 1 = {}; clamping", n - 1);
        n - 1
    } else {
        k
    };
    let tree = VpTree::build(data.values(), data.d(), metric, seed);
    (0..n).into_par_iter().map(|i| tree.search(tree.point(i), k, Some(i))).collect()
}
