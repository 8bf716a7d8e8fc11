//! Raw data to embedding: PCA, nearest-neighbor graph, input affinities and
//! optimization.

use std::time::Instant;

use crate::affinity::{sparse_p, SparseAffinity};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, LabelVector};
use crate::metrics::{knn_error, EvalReport};
use crate::optimizer::{initialize, run_from, IterationRecord, RunResult};
use crate::pca::pca_reduce;
use crate::vptree::{knn_graph, Euclidean};

/// Seed offset for the vantage-point choices, kept apart from the
/// initialization stream.
const VPTREE_SEED_OFFSET: u64 = 0x5eed_0001;

/// Sparse input affinities for `data` after optional PCA.
pub fn input_affinities(data: &DataMatrix, config: &RunConfig) -> Result<SparseAffinity> {
    config.validate()?;
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidData(format!("need at least 2 objects, got {n}")));
    }
    let reduced;
    let x = if config.pca_target > 0 && data.d() > config.pca_target {
        reduced = pca_reduce(data, config.pca_target)?.0;
        &reduced
    } else {
        data
    };
    let k = config.neighbors().clamp(1, n - 1);
    let graph = knn_graph(x, k, Euclidean, config.seed.wrapping_add(VPTREE_SEED_OFFSET));
    Ok(sparse_p(&graph, config.perplexity))
}

#[derive(Debug, Clone)]
pub struct EmbedOutput {
    pub result: RunResult,
    pub report: EvalReport,
}

/// Full pipeline; the reported time covers everything from PCA to the final
/// iteration.
pub fn embed(data: &DataMatrix, labels: Option<&LabelVector>, config: &RunConfig) -> Result<EmbedOutput> {
    embed_with_observer(data, labels, config, |_| {})
}

pub fn embed_with_observer(
    data: &DataMatrix,
    labels: Option<&LabelVector>,
    config: &RunConfig,
    observer: impl FnMut(&IterationRecord),
) -> Result<EmbedOutput> {
    if let Some(l) = labels {
        l.check_len(data.n())?;
    }
    let start = Instant::now();
    let p = input_affinities(data, config)?;
    let y0 = initialize(data.n(), config.output_dims, config.seed);
    let result = run_from((&p).into(), config, y0, observer)?;
    let seconds = start.elapsed().as_secs_f64();
    let kl = match result.final_cost() {
        Some(c) => c,
        None => crate::optimizer::checkpoint_cost((&p).into(), &result.embedding, config)?,
    };
    let report = EvalReport {
        kl_cost: kl,
        knn_error: labels.map(|l| knn_error(&result.embedding, l)),
        wall_time_seconds: seconds,
        n: data.n(),
        config: config.clone(),
    };
    Ok(EmbedOutput { result, report })
}
