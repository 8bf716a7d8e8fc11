//! Input similarities: Gaussian conditionals calibrated to a target
//! perplexity, symmetrized into a joint distribution over pairs.
//!
//! The dense form uses every other object as a neighbor and is the reference
//! for the sparse form, which restricts each conditional to a kNN list.

use rayon::prelude::*;

use crate::matrix::DataMatrix;
use crate::vptree::{Euclidean, Metric, NeighborList};

/// Target tolerance on the calibrated perplexity, in bits.
pub const PERPLEXITY_TOLERANCE_BITS: f64 = 1e-5;
/// Bisection keeps going below the public tolerance so that `beta` itself is
/// pinned down tightly, not just the entropy.
const STOP_TOLERANCE_BITS: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_STEPS: usize = 1100;

/// Result of calibrating one conditional distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Precision `1 / (2 sigma^2)`; 0 for the uniform fallback.
    pub beta: f64,
    pub probs: Vec<f64>,
    /// Achieved perplexity `2^H`.
    pub perplexity: f64,
}

/// Shannon entropy (nats) and normalized probabilities for precision `beta`
/// over squared distances already shifted so their minimum is 0.
fn entropy(shifted: &[f64], beta: f64, probs: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (p, &d) in probs.iter_mut().zip(shifted) {
        let w = (-beta * d).exp();
        *p = w;
        sum += w;
        weighted += w * d;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    sum.ln() + beta * weighted / sum
}

fn uniform(k: usize) -> Calibration {
    Calibration {
        beta: 0.0,
        probs: vec![1.0 / k as f64; k],
        perplexity: k as f64,
    }
}

/// Calibrates a conditional over squared distances so that its perplexity
/// matches `perplexity`, by doubling/halving `beta` from 1 to bracket the
/// target and then bisecting.
pub fn calibrate_squared(sq_dists: &[f64], perplexity: f64) -> Calibration {
    let k = sq_dists.len();
    assert!(k > 0, "need at least one neighbor");
    let dmin = sq_dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq_dists.iter().map(|d| d - dmin).collect();
    if shifted.iter().all(|&d| d == 0.0) {
        // Equal distances: the distribution is uniform for every beta.
        return uniform(k);
    }
    if perplexity > k as f64 {
        log::warn!("perplexity {perplexity} exceeds neighbor count {k}; using a uniform distribution");
        return uniform(k);
    }

    let target = perplexity.ln();
    let tol = STOP_TOLERANCE_BITS * std::f64::consts::LN_2;
    let mut probs = vec![0.0; k];
    let mut beta = 1.0;
    let mut h = entropy(&shifted, beta, &mut probs);
    let finish = |beta: f64, h: f64, probs: Vec<f64>| Calibration {
        beta,
        probs,
        perplexity: (h / std::f64::consts::LN_2).exp2(),
    };
    if (h - target).abs() < tol {
        return finish(beta, h, probs);
    }

    let (mut lo, mut hi);
    if h > target {
        // Too flat: sharpen.
        lo = beta;
        let mut steps = 0;
        loop {
            if steps >= MAX_BRACKET_STEPS || !(2.0 * beta).is_finite() {
                log::warn!("perplexity {perplexity} unreachable (ties at the nearest distance); using the sharpest kernel");
                let h = entropy(&shifted, lo, &mut probs);
                return finish(lo, h, probs);
            }
            beta *= 2.0;
            h = entropy(&shifted, beta, &mut probs);
            steps += 1;
            if (h - target).abs() < tol {
                return finish(beta, h, probs);
            }
            if h < target {
                hi = beta;
                break;
            }
            lo = beta;
        }
    } else {
        hi = beta;
        let mut steps = 0;
        loop {
            beta *= 0.5;
            h = entropy(&shifted, beta, &mut probs);
            steps += 1;
            if (h - target).abs() < tol {
                return finish(beta, h, probs);
            }
            if h > target {
                lo = beta;
                break;
            }
            hi = beta;
            if steps >= MAX_BRACKET_STEPS || beta == 0.0 {
                return uniform(k);
            }
        }
    }

    let mut best = (f64::INFINITY, beta);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        h = entropy(&shifted, mid, &mut probs);
        let err = (h - target).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err < tol || mid == lo || mid == hi {
            break;
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = entropy(&shifted, best.1, &mut probs);
    finish(best.1, h, probs)
}

/// Calibrates from plain (unsquared) distances.
pub fn find_sigma(distances: &[f64], perplexity: f64) -> Calibration {
    let sq: Vec<f64> = distances.iter().map(|d| d * d).collect();
    calibrate_squared(&sq, perplexity)
}

/// Dense joint distribution, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAffinity {
    n: usize,
    values: Vec<f64>,
}

impl DenseAffinity {
    pub fn from_values(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n);
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Symmetric sparse joint distribution in CSR form, column indices sorted
/// within each row, no diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseAffinity {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |k| v[k])
    }

    /// All stored `(i, j, p_ij)` triples, row by row.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &p)| (i, j, p))
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn total(&self) -> f64 {
        self.vals.iter().sum()
    }

    pub fn max_row_len(&self) -> usize {
        (0..self.n).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).max().unwrap_or(0)
    }

    /// Largest `|p_ij - p_ji|`, with a missing mirror counting as its full value.
    pub fn asymmetry(&self) -> f64 {
        self.iter().map(|(i, j, p)| (p - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        self.vals.iter_mut().for_each(|v| *v *= factor);
    }

    /// Keeps the strictly positive off-diagonal entries of a dense matrix.
    pub fn from_dense(p: &DenseAffinity) -> Self {
        let n = p.n();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for (j, &v) in p.row(i).iter().enumerate() {
                if j != i && v > 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn to_dense(&self) -> DenseAffinity {
        let mut values = vec![0.0; self.n * self.n];
        for (i, j, p) in self.iter() {
            values[i * self.n + j] = p;
        }
        DenseAffinity { n: self.n, values }
    }

    /// Symmetrizes per-object conditionals `(j, p_{j|i})` into
    /// `p_ij = (p_{j|i} + p_{i|j}) / 2n` over the union of both supports.
    pub fn from_conditionals(conditionals: &[Vec<(usize, f64)>]) -> Self {
        let n = conditionals.len();
        let mut len = vec![0usize; n];
        for (i, row) in conditionals.iter().enumerate() {
            len[i] += row.len();
            for &(j, _) in row {
                len[j] += 1;
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for l in &len {
            start.push(start.last().unwrap() + l);
        }
        let mut fill = start[..n].to_vec();
        let total = *start.last().unwrap();
        let mut pairs = vec![(0usize, 0.0f64); total];
        for (i, row) in conditionals.iter().enumerate() {
            for &(j, p) in row {
                assert_ne!(i, j, "conditional of object {i} contains itself");
                pairs[fill[i]] = (j, p);
                fill[i] += 1;
                pairs[fill[j]] = (i, p);
                fill[j] += 1;
            }
        }

        let denom = 2.0 * n as f64;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(total);
        let mut vals = Vec::with_capacity(total);
        row_ptr.push(0);
        for i in 0..n {
            let seg = &mut pairs[start[i]..start[i + 1]];
            seg.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < seg.len() {
                let j = seg[k].0;
                let mut sum = seg[k].1;
                k += 1;
                while k < seg.len() && seg[k].0 == j {
                    sum += seg[k].1;
                    k += 1;
                }
                cols.push(j);
                vals.push(sum / denom);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }
}

/// Calibrated conditional for each object over its own neighbor list.
pub fn sparse_conditionals(graph: &[NeighborList], perplexity: f64) -> Vec<(Calibration, Vec<usize>)> {
    graph
        .par_iter()
        .map(|nl| {
            let sq: Vec<f64> = nl.distances().map(|d| d * d).collect();
            (calibrate_squared(&sq, perplexity), nl.indices().collect())
        })
        .collect()
}

/// Sparse joint affinities from a kNN graph (normally `k = floor(3u)`).
pub fn sparse_p(graph: &[NeighborList], perplexity: f64) -> SparseAffinity {
    let conditionals: Vec<Vec<(usize, f64)>> = sparse_conditionals(graph, perplexity)
        .into_iter()
        .map(|(cal, idx)| idx.into_iter().zip(cal.probs).collect())
        .collect();
    SparseAffinity::from_conditionals(&conditionals)
}

/// Dense joint affinities using all `n - 1` other objects per conditional.
pub fn dense_p(data: &DataMatrix, perplexity: f64) -> DenseAffinity {
    dense_p_with_metric(data, perplexity, &Euclidean)
}

pub fn dense_p_with_metric<M: Metric>(data: &DataMatrix, perplexity: f64, metric: &M) -> DenseAffinity {
    let n = data.n();
    let cond: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.row(i);
            let sq: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = metric.distance(xi, data.row(j));
                    d * d
                })
                .collect();
            let cal = calibrate_squared(&sq, perplexity);
            let mut row = Vec::with_capacity(n);
            let mut it = cal.probs.into_iter();
            for j in 0..n {
                row.push(if j == i { 0.0 } else { it.next().unwrap() });
            }
            row
        })
        .collect();
    let denom = 2.0 * n as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = (cond[i][j] + cond[j][i]) / denom;
        }
    }
    DenseAffinity { n, values }
}

pub fn exaggerate(p: &SparseAffinity, alpha: f64) -> SparseAffinity {
    let mut out = p.clone();
    out.scale_in_place(alpha);
    out
}

pub fn unexaggerate(p: &SparseAffinity, alpha: f64) -> SparseAffinity {
    let mut out = p.clone();
    out.scale_in_place(1.0 / alpha);
    out
}
