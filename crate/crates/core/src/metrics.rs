//! Exact evaluation of an embedding: KL cost and leave-one-out 1-NN label error.

use std::fmt;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::gradient::{exact_repulsive, Affinity};
use crate::matrix::{Embedding, LabelVector};
use crate::vptree::{Euclidean, VpTree};

/// Above this size `knn_error` uses a vantage-point tree instead of brute force.
pub const BRUTE_FORCE_MAX: usize = 20_000;

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `KL(P || Q)` with `Z` summed over all pairs. Entries with `p_ij = 0` add nothing.
pub fn kl_cost(p: Affinity<'_>, y: &Embedding) -> f64 {
    let (_, z) = exact_repulsive(y);
    let log_z = z.ln();
    let rows: Vec<f64> = (0..p.n())
        .into_par_iter()
        .map(|i| {
            let yi = y.point(i);
            let mut acc = 0.0;
            p.for_each_in_row(i, |j, pij| {
                if pij > 0.0 {
                    acc += pij * (pij.ln() + log_z + (1.0 + sq_dist(yi, y.point(j))).ln());
                }
            });
            acc
        })
        .collect();
    rows.iter().sum()
}

/// Index of the nearest other point, ties to the lower index.
fn nearest_brute(y: &Embedding, i: usize) -> usize {
    let yi = y.point(i);
    let mut best = (f64::INFINITY, usize::MAX);
    for j in 0..y.n() {
        if j != i {
            let d = sq_dist(yi, y.point(j));
            if d < best.0 {
                best = (d, j);
            }
        }
    }
    best.1
}

/// Fraction of points whose nearest other embedded point carries a different
/// label.
pub fn knn_error(y: &Embedding, labels: &LabelVector) -> f64 {
    let n = y.n();
    assert_eq!(labels.len(), n, "label count must match the embedding");
    let labels = labels.as_slice();
    let wrong: usize = if n <= BRUTE_FORCE_MAX {
        (0..n).into_par_iter().filter(|&i| labels[nearest_brute(y, i)] != labels[i]).count()
    } else {
        let tree = VpTree::build(y.coords(), y.dims(), Euclidean, 0);
        (0..n)
            .into_par_iter()
            .filter(|&i| {
                let nn = tree.knn(i, 1);
                labels[nn.entries[0].index] != labels[i]
            })
            .count()
    };
    wrong as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kl_cost: f64,
    pub knn_error: Option<f64>,
    pub wall_time_seconds: f64,
    pub n: usize,
    pub config: RunConfig,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "algorithm,n,param,seconds,knn_error,final_kl,seed,perplexity,iterations,dims,condition";

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.algorithm,
            self.n,
            c.tradeoff(),
            self.wall_time_seconds,
            self.knn_error.map(|e| e.to_string()).unwrap_or_default(),
            self.kl_cost,
            c.seed,
            c.perplexity,
            c.iterations,
            c.output_dims,
            c.condition,
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::CSV_HEADER)?;
        write!(f, "{}", self.csv_row())
    }
}
