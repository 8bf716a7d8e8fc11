//! The t-SNE gradient, split into attraction over the sparse input affinities
//! and repulsion over all pairs:
//!
//! `dC/dy_i = 4 (F_attr - F_rep)`, with
//! `F_attr = sum_j p_ij w_ij (y_i - y_j)`,
//! `F_rep = sum_j w_ij^2 (y_i - y_j) / Z`, `w_ij = 1 / (1 + |y_i - y_j|^2)`,
//! `Z = sum_{k != l} w_kl`.
//!
//! The repulsion can be computed exactly (all pairs), with a Barnes-Hut
//! point-cell traversal, or with a dual-tree cell-cell traversal.

use rayon::prelude::*;

use crate::affinity::{DenseAffinity, SparseAffinity};
use crate::config::{Algorithm, Condition};
use crate::error::{Error, Result};
use crate::matrix::Embedding;
use crate::spacetree::{summary_condition, SpaceTree};

/// Input affinities in either storage.
#[derive(Debug, Clone, Copy)]
pub enum Affinity<'a> {
    Dense(&'a DenseAffinity),
    Sparse(&'a SparseAffinity),
}

impl<'a> From<&'a DenseAffinity> for Affinity<'a> {
    fn from(p: &'a DenseAffinity) -> Self {
        Affinity::Dense(p)
    }
}

impl<'a> From<&'a SparseAffinity> for Affinity<'a> {
    fn from(p: &'a SparseAffinity) -> Self {
        Affinity::Sparse(p)
    }
}

impl Affinity<'_> {
    pub fn n(&self) -> usize {
        match self {
            Affinity::Dense(p) => p.n(),
            Affinity::Sparse(p) => p.n(),
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            Affinity::Dense(p) => p.total(),
            Affinity::Sparse(p) => p.total(),
        }
    }

    /// Calls `f(j, p_ij)` for every nonzero entry of row `i`.
    #[inline]
    pub fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Affinity::Dense(p) => p.row(i).iter().enumerate().filter(|&(j, &v)| j != i && v != 0.0).for_each(|(j, &v)| f(j, v)),
            Affinity::Sparse(p) => {
                let (c, v) = p.row(i);
                c.iter().zip(v).for_each(|(&j, &v)| f(j, v));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    /// `n x dims`, row-major.
    pub grad: Vec<f64>,
    pub dims: usize,
    /// The (estimated) normalization `Z`.
    pub z: f64,
}

impl GradientField {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.grad[i * self.dims..(i + 1) * self.dims]
    }

    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grad.iter().all(|g| g.is_finite()) && self.z.is_finite()
    }
}

/// Attractive and (normalized) repulsive halves; `grad = 4 (attr - rep)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceSplit {
    pub attr: Vec<f64>,
    pub rep: Vec<f64>,
    pub z: f64,
}

impl ForceSplit {
    pub fn gradient(&self, dims: usize) -> GradientField {
        GradientField {
            grad: self.attr.iter().zip(&self.rep).map(|(a, r)| 4.0 * (a - r)).collect(),
            dims,
            z: self.z,
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sums in a fixed order, independent of how the values were produced.
fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().sum()
}

/// `F_attr(i) = sum_j p_ij (1 + |y_i - y_j|^2)^-1 (y_i - y_j)` over the stored
/// nonzeros of `p`.
pub fn attractive_forces(p: Affinity<'_>, y: &Embedding) -> Vec<f64> {
    match (p, y.dims()) {
        (Affinity::Sparse(sp), 2) => sparse_attraction::<2>(sp, y),
        (Affinity::Sparse(sp), 3) => sparse_attraction::<3>(sp, y),
        _ => generic_attraction(p, y),
    }
}

fn sparse_attraction<const D: usize>(p: &SparseAffinity, y: &Embedding) -> Vec<f64> {
    let pts = to_arrays::<D>(y);
    let mut out = vec![0.0; y.n() * D];
    out.par_chunks_mut(D).enumerate().for_each(|(i, fi)| {
        let yi = pts[i];
        let (cols, vals) = p.row(i);
        let mut f = [0.0; D];
        for (&j, &pij) in cols.iter().zip(vals) {
            let yj = pts[j];
            let mut diff = [0.0; D];
            let mut d2 = 0.0;
            for k in 0..D {
                diff[k] = yi[k] - yj[k];
                d2 += diff[k] * diff[k];
            }
            let m = pij / (1.0 + d2);
            for k in 0..D {
                f[k] += m * diff[k];
            }
        }
        fi.copy_from_slice(&f);
    });
    out
}

fn generic_attraction(p: Affinity<'_>, y: &Embedding) -> Vec<f64> {
    let s = y.dims();
    let mut out = vec![0.0; y.n() * s];
    out.par_chunks_mut(s).enumerate().for_each(|(i, fi)| {
        let yi = y.point(i);
        p.for_each_in_row(i, |j, pij| {
            let yj = y.point(j);
            let w = 1.0 / (1.0 + sq_dist(yi, yj));
            let m = pij * w;
            for k in 0..s {
                fi[k] += m * (yi[k] - yj[k]);
            }
        });
    });
    out
}

/// Unnormalized repulsion `sum_j w_ij^2 (y_i - y_j)` and `Z`, all pairs.
pub fn exact_repulsive(y: &Embedding) -> (Vec<f64>, f64) {
    match y.dims() {
        1 => exact_repulsive_fixed::<1>(y),
        2 => exact_repulsive_fixed::<2>(y),
        3 => exact_repulsive_fixed::<3>(y),
        _ => exact_repulsive_any(y),
    }
}

fn to_arrays<const D: usize>(y: &Embedding) -> Vec<[f64; D]> {
    y.coords()
        .chunks_exact(D)
        .map(|c| {
            let mut p = [0.0; D];
            p.copy_from_slice(c);
            p
        })
        .collect()
}

fn exact_repulsive_fixed<const D: usize>(y: &Embedding) -> (Vec<f64>, f64) {
    let pts = to_arrays::<D>(y);
    let n = pts.len();
    let mut rep = vec![0.0; n * D];
    let mut zi = vec![0.0; n];
    rep.par_chunks_mut(D).zip(zi.par_iter_mut()).enumerate().for_each(|(i, (fi, z))| {
        let yi = pts[i];
        let mut acc = 0.0;
        let mut f = [0.0; D];
        for (j, yj) in pts.iter().enumerate() {
            if j == i {
                continue;
            }
            let mut diff = [0.0; D];
            let mut d2 = 0.0;
            for k in 0..D {
                diff[k] = yi[k] - yj[k];
                d2 += diff[k] * diff[k];
            }
            let w = 1.0 / (1.0 + d2);
            acc += w;
            let w2 = w * w;
            for k in 0..D {
                f[k] += w2 * diff[k];
            }
        }
        fi.copy_from_slice(&f);
        *z = acc;
    });
    (rep, ordered_sum(&zi))
}

fn exact_repulsive_any(y: &Embedding) -> (Vec<f64>, f64) {
    let (n, s) = (y.n(), y.dims());
    let mut rep = vec![0.0; n * s];
    let mut zi = vec![0.0; n];
    rep.par_chunks_mut(s).zip(zi.par_iter_mut()).enumerate().for_each(|(i, (fi, z))| {
        let yi = y.point(i);
        let mut acc = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let yj = y.point(j);
            let w = 1.0 / (1.0 + sq_dist(yi, yj));
            acc += w;
            let w2 = w * w;
            for k in 0..s {
                fi[k] += w2 * (yi[k] - yj[k]);
            }
        }
        *z = acc;
    });
    (rep, ordered_sum(&zi))
}

pub fn exact_force_split(p: Affinity<'_>, y: &Embedding) -> ForceSplit {
    let attr = attractive_forces(p, y);
    let (rep_z, z) = exact_repulsive(y);
    ForceSplit {
        attr,
        rep: rep_z.iter().map(|r| r / z).collect(),
        z,
    }
}

/// O(N^2) reference gradient.
pub fn exact_gradient(p: Affinity<'_>, y: &Embedding) -> GradientField {
    exact_force_split(p, y).gradient(y.dims())
}

/// Barnes-Hut estimate of the unnormalized repulsion and of `Z`.
pub fn bh_repulsive<const D: usize>(tree: &SpaceTree<D>, theta: f64, condition: Condition) -> (Vec<f64>, f64) {
    let n = tree.n();
    // Walk points in tree order so consecutive traversals share cells in
    // cache, then scatter back by index. Per-point sums are unaffected.
    let order = tree.points_in(tree.root());
    let mut by_pos = vec![([0.0; D], 0.0); n];
    by_pos
        .par_iter_mut()
        .zip(order.par_iter())
        .for_each_init(Vec::new, |stack, ((fi, z), &i)| {
            let yi = *tree.point(i);
            let mut acc = [0.0; D];
            let mut zacc = 0.0;
            stack.clear();
            stack.push(0usize);
            while let Some(ci) = stack.pop() {
                let cell = tree.cell(ci);
                if cell.count == 0 {
                    continue;
                }
                let mut d2 = 0.0;
                let mut diff = [0.0; D];
                for k in 0..D {
                    diff[k] = yi[k] - cell.com[k];
                    d2 += diff[k] * diff[k];
                }
                // Same decision as `check_summary`, reusing `d2`.
                let summarize = d2 > 0.0
                    && summary_condition(cell.diagonal(), d2, theta, condition)
                    && !(cell.is_leaf() && tree.points_in(cell).contains(&i));
                if summarize {
                    let w = 1.0 / (1.0 + d2);
                    let m = cell.count as f64;
                    zacc += m * w;
                    let mw2 = m * w * w;
                    for k in 0..D {
                        acc[k] += mw2 * diff[k];
                    }
                } else if cell.is_leaf() {
                    for &j in tree.points_in(cell) {
                        if j == i {
                            continue;
                        }
                        let yj = tree.point(j);
                        let mut d2 = 0.0;
                        let mut diff = [0.0; D];
                        for k in 0..D {
                            diff[k] = yi[k] - yj[k];
                            d2 += diff[k] * diff[k];
                        }
                        let w = 1.0 / (1.0 + d2);
                        zacc += w;
                        for k in 0..D {
                            acc[k] += w * w * diff[k];
                        }
                    }
                } else {
                    // Reverse so children are visited in index order.
                    let first = cell.first_child.unwrap();
                    for c in (first..first + (1usize << D)).rev() {
                        if tree.cell(c).count > 0 {
                            stack.push(c);
                        }
                    }
                }
            }
            *fi = acc;
            *z = zacc;
        });
    let mut rep = vec![0.0; n * D];
    let mut zi = vec![0.0; n];
    for (&i, (f, z)) in order.iter().zip(&by_pos) {
        rep[i * D..(i + 1) * D].copy_from_slice(f);
        zi[i] = *z;
    }
    (rep, ordered_sum(&zi))
}

struct DualTree<'t, const D: usize> {
    tree: &'t SpaceTree<D>,
    rho: f64,
    condition: Condition,
    /// Per-cell force shared by every point inside the cell.
    cell_force: Vec<[f64; D]>,
    /// Per-point force from leaf-level point pairs.
    point_force: Vec<[f64; D]>,
    z: f64,
    with_forces: bool,
}

impl<const D: usize> DualTree<'_, D> {
    fn pair_points(&mut self, i: usize, j: usize) {
        let (yi, yj) = (self.tree.point(i), self.tree.point(j));
        let mut d2 = 0.0;
        let mut diff = [0.0; D];
        for k in 0..D {
            diff[k] = yi[k] - yj[k];
            d2 += diff[k] * diff[k];
        }
        let w = 1.0 / (1.0 + d2);
        self.z += 2.0 * w;
        if self.with_forces {
            let w2 = w * w;
            for k in 0..D {
                self.point_force[i][k] += w2 * diff[k];
                self.point_force[j][k] -= w2 * diff[k];
            }
        }
    }

    fn visit_self(&mut self, a: usize) {
        let cell = self.tree.cell(a);
        if cell.count < 2 {
            return;
        }
        match cell.first_child {
            None => {
                let pts = self.tree.points_in(cell);
                for x in 0..pts.len() {
                    for y in (x + 1)..pts.len() {
                        self.pair_points(pts[x], pts[y]);
                    }
                }
            }
            Some(first) => {
                let kids = 1usize << D;
                for x in 0..kids {
                    self.visit_self(first + x);
                    for y in (x + 1)..kids {
                        self.visit_pair(first + x, first + y);
                    }
                }
            }
        }
    }

    fn visit_pair(&mut self, a: usize, b: usize) {
        let (ca, cb) = (self.tree.cell(a), self.tree.cell(b));
        if ca.count == 0 || cb.count == 0 {
            return;
        }
        let mut d2 = 0.0;
        let mut diff = [0.0; D];
        for k in 0..D {
            diff[k] = ca.com[k] - cb.com[k];
            d2 += diff[k] * diff[k];
        }
        let (ra, rb) = (ca.diagonal(), cb.diagonal());
        if d2 > 0.0 && summary_condition(ra.max(rb), d2, self.rho, self.condition) {
            let w = 1.0 / (1.0 + d2);
            let (na, nb) = (ca.count as f64, cb.count as f64);
            self.z += 2.0 * na * nb * w;
            if self.with_forces {
                let w2 = w * w;
                for k in 0..D {
                    self.cell_force[a][k] += nb * w2 * diff[k];
                    self.cell_force[b][k] -= na * w2 * diff[k];
                }
            }
            return;
        }
        match (ca.first_child, cb.first_child) {
            (None, None) => {
                let (pa, pb) = (self.tree.points_in(ca), self.tree.points_in(cb));
                for &i in pa {
                    for &j in pb {
                        self.pair_points(i, j);
                    }
                }
            }
            // Split the larger cell; a leaf is never split.
            (Some(fa), fb) if fb.is_none() || ra >= rb => {
                for c in 0..(1usize << D) {
                    self.visit_pair(fa + c, b);
                }
            }
            (_, Some(fb)) => {
                for c in 0..(1usize << D) {
                    self.visit_pair(a, fb + c);
                }
            }
            (Some(_), None) => unreachable!(),
        }
    }

    /// Adds each cell's accumulated force to every point below it.
    fn push_down(&self, out: &mut [f64]) {
        let mut stack = vec![(0usize, [0.0; D])];
        while let Some((ci, inherited)) = stack.pop() {
            let cell = self.tree.cell(ci);
            if cell.count == 0 {
                continue;
            }
            let mut acc = inherited;
            for k in 0..D {
                acc[k] += self.cell_force[ci][k];
            }
            match cell.first_child {
                Some(first) => {
                    for c in 0..(1usize << D) {
                        stack.push((first + c, acc));
                    }
                }
                None => {
                    for &i in self.tree.points_in(cell) {
                        for k in 0..D {
                            out[i * D + k] += acc[k];
                        }
                    }
                }
            }
        }
        for (i, f) in self.point_force.iter().enumerate() {
            for k in 0..D {
                out[i * D + k] += f[k];
            }
        }
    }
}

fn dual_tree_run<const D: usize>(tree: &SpaceTree<D>, rho: f64, condition: Condition, with_forces: bool) -> (Vec<f64>, f64) {
    let n = tree.n();
    let cells = if with_forces { tree.cells().len() } else { 0 };
    let mut dt = DualTree {
        tree,
        rho,
        condition,
        cell_force: vec![[0.0; D]; cells],
        point_force: vec![[0.0; D]; if with_forces { n } else { 0 }],
        z: 0.0,
        with_forces,
    };
    if n > 0 {
        dt.visit_self(0);
    }
    let mut rep = vec![0.0; if with_forces { n * D } else { 0 }];
    if with_forces {
        dt.push_down(&mut rep);
    }
    (rep, dt.z)
}

/// Dual-tree estimate of the unnormalized repulsion and of `Z`.
pub fn dual_tree_repulsive<const D: usize>(tree: &SpaceTree<D>, rho: f64, condition: Condition) -> (Vec<f64>, f64) {
    dual_tree_run(tree, rho, condition, true)
}

/// Dual-tree estimate of `Z` alone.
pub fn dual_tree_z<const D: usize>(tree: &SpaceTree<D>, rho: f64, condition: Condition) -> f64 {
    dual_tree_run(tree, rho, condition, false).1
}

fn finish(attr: Vec<f64>, rep_z: Vec<f64>, z: f64, dims: usize) -> Result<GradientField> {
    if !(z > 0.0) {
        return Err(Error::Numeric(format!("normalization estimate Z = {z} is not positive")));
    }
    let split = ForceSplit {
        attr,
        rep: rep_z.iter().map(|r| r / z).collect(),
        z,
    };
    Ok(split.gradient(dims))
}

fn tree_gradient<const D: usize>(
    p: Affinity<'_>,
    y: &Embedding,
    algorithm: Algorithm,
    tradeoff: f64,
    condition: Condition,
) -> Result<GradientField> {
    let tree = SpaceTree::<D>::build(y);
    let (rep_z, z) = match algorithm {
        Algorithm::DualTree => dual_tree_repulsive(&tree, tradeoff, condition),
        _ => bh_repulsive(&tree, tradeoff, condition),
    };
    finish(attractive_forces(p, y), rep_z, z, D)
}

/// Gradient for the chosen algorithm; `tradeoff` is theta (Barnes-Hut) or
/// rho (dual tree) and is ignored on the exact path.
pub fn gradient(
    p: Affinity<'_>,
    y: &Embedding,
    algorithm: Algorithm,
    tradeoff: f64,
    condition: Condition,
) -> Result<GradientField> {
    if p.n() != y.n() {
        return Err(Error::InvalidArgument(format!("affinities cover {} objects, embedding has {}", p.n(), y.n())));
    }
    match (algorithm, y.dims()) {
        (Algorithm::Exact, _) => {
            let (rep_z, z) = exact_repulsive(y);
            finish(attractive_forces(p, y), rep_z, z, y.dims())
        }
        (_, 2) => tree_gradient::<2>(p, y, algorithm, tradeoff, condition),
        (_, 3) => tree_gradient::<3>(p, y, algorithm, tradeoff, condition),
        (_, s) => Err(Error::InvalidArgument(format!("tree gradients support 2 or 3 output dimensions, got {s}"))),
    }
}

/// KL(P || Q) with sparse-P attraction terms and a tree estimate of `Z`.
/// `algorithm` selects the Barnes-Hut or dual-tree estimate; the exact
/// variant sums all pairs.
pub fn approx_kl_cost(p: &SparseAffinity, y: &Embedding, algorithm: Algorithm, tradeoff: f64, condition: Condition) -> Result<f64> {
    let z = match (algorithm, y.dims()) {
        (Algorithm::Exact, _) => exact_repulsive(y).1,
        (Algorithm::BarnesHut, 2) => bh_repulsive(&SpaceTree::<2>::build(y), tradeoff, condition).1,
        (Algorithm::BarnesHut, 3) => bh_repulsive(&SpaceTree::<3>::build(y), tradeoff, condition).1,
        (Algorithm::DualTree, 2) => dual_tree_z(&SpaceTree::<2>::build(y), tradeoff, condition),
        (Algorithm::DualTree, 3) => dual_tree_z(&SpaceTree::<3>::build(y), tradeoff, condition),
        (_, s) => return Err(Error::InvalidArgument(format!("tree estimates support 2 or 3 dimensions, got {s}"))),
    };
    Ok(kl_with_z(p, y, z))
}

/// `sum p_ij log(p_ij Z / w_ij)` over the stored nonzeros.
pub(crate) fn kl_with_z(p: &SparseAffinity, y: &Embedding, z: f64) -> f64 {
    let log_z = z.ln();
    let per_row: Vec<f64> = (0..p.n())
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = p.row(i);
            let yi = y.point(i);
            cols.iter()
                .zip(vals)
                .filter(|(_, &v)| v > 0.0)
                .map(|(&j, &pij)| pij * (pij.ln() + log_z + (1.0 + sq_dist(yi, y.point(j))).ln()))
                .sum()
        })
        .collect();
    ordered_sum(&per_row)
}
