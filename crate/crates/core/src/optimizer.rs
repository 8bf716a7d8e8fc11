//! Gradient descent with momentum, per-parameter adaptive gains and early
//! exaggeration.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::affinity::{DenseAffinity, SparseAffinity};
use crate::config::{Algorithm, RunConfig};
use crate::error::{Error, Result};
use crate::gradient::{approx_kl_cost, gradient, Affinity, GradientField};
use crate::matrix::Embedding;
use crate::metrics::kl_cost;

pub const MIN_GAIN: f64 = 0.01;
pub const INIT_STD: f64 = 1e-2;
/// Largest `n` for which recorded costs are evaluated exactly.
pub const EXACT_COST_MAX: usize = 10_000;

/// I.i.d. `N(0, 1e-4)` coordinates.
pub fn initialize(n: usize, dims: usize, seed: u64) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).unwrap();
    let coords = (0..n * dims).map(|_| normal.sample(&mut rng)).collect();
    Embedding::new(n, dims, coords).expect("normal samples are finite")
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Unexaggerated KL cost, present on checkpoint iterations.
    pub cost: Option<f64>,
    pub grad_norm: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub y: Embedding,
    pub velocity: Vec<f64>,
    pub gains: Vec<f64>,
    /// Number of completed steps.
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
}

impl OptimizerState {
    pub fn new(y: Embedding) -> Self {
        let len = y.coords().len();
        Self {
            y,
            velocity: vec![0.0; len],
            gains: vec![1.0; len],
            iteration: 0,
            history: Vec::new(),
        }
    }

    /// One update with the momentum for the current iteration.
    pub fn step(&mut self, grad: &GradientField, config: &RunConfig) -> Result<()> {
        if grad.grad.len() != self.velocity.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient has {} entries, embedding has {}",
                grad.grad.len(),
                self.velocity.len()
            )));
        }
        if let Some(k) = grad.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                iteration: self.iteration,
                msg: format!("gradient entry {} (point {}) is {}", k, k / grad.dims.max(1), grad.grad[k]),
            });
        }
        let momentum = config.momentum_at(self.iteration);
        let eta = config.learning_rate;
        let y = self.y.coords_mut();
        for k in 0..y.len() {
            let (g, v) = (grad.grad[k], self.velocity[k]);
            let gain = if (g > 0.0) != (v > 0.0) { self.gains[k] + 0.2 } else { self.gains[k] * 0.8 };
            let gain = gain.max(MIN_GAIN);
            self.gains[k] = gain;
            let v = momentum * v - eta * gain * g;
            self.velocity[k] = v;
            y[k] += v;
        }
        self.iteration += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub embedding: Embedding,
    pub history: Vec<IterationRecord>,
}

impl RunResult {
    /// Last recorded cost.
    pub fn final_cost(&self) -> Option<f64> {
        self.history.iter().rev().find_map(|r| r.cost)
    }
}

enum Scaled {
    Dense(DenseAffinity),
    Sparse(SparseAffinity),
}

impl Scaled {
    fn new(p: Affinity<'_>, factor: f64) -> Self {
        match p {
            Affinity::Dense(d) => Scaled::Dense(d.scaled(factor)),
            Affinity::Sparse(s) => Scaled::Sparse(crate::affinity::exaggerate(s, factor)),
        }
    }

    fn view(&self) -> Affinity<'_> {
        match self {
            Scaled::Dense(d) => Affinity::Dense(d),
            Scaled::Sparse(s) => Affinity::Sparse(s),
        }
    }
}

/// Cost used for checkpoints: exact up to `EXACT_COST_MAX` points, tree
/// estimate above.
pub fn checkpoint_cost(p: Affinity<'_>, y: &Embedding, config: &RunConfig) -> Result<f64> {
    match p {
        Affinity::Sparse(s) if y.n() > EXACT_COST_MAX && config.algorithm != Algorithm::Exact => {
            approx_kl_cost(s, y, config.algorithm, config.tradeoff(), config.condition)
        }
        _ => Ok(kl_cost(p, y)),
    }
}

/// Runs the full schedule from the seeded Gaussian start.
pub fn run(p: Affinity<'_>, config: &RunConfig) -> Result<RunResult> {
    let y0 = initialize(p.n(), config.output_dims, config.seed);
    run_from(p, config, y0, |_| {})
}

/// Runs the full schedule from `y0`, calling `observer` on every checkpoint.
pub fn run_from(
    p: Affinity<'_>,
    config: &RunConfig,
    y0: Embedding,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<RunResult> {
    config.validate()?;
    if p.n() != y0.n() || y0.dims() != config.output_dims {
        return Err(Error::InvalidArgument(format!(
            "initial embedding is {}x{}, expected {}x{}",
            y0.n(),
            y0.dims(),
            p.n(),
            config.output_dims
        )));
    }
    let start = Instant::now();
    let mut state = OptimizerState::new(y0);
    let mut exaggerated =
        (config.exaggeration_iters > 0 && config.exaggeration != 1.0).then(|| Scaled::new(p, config.exaggeration));
    for it in 0..config.iterations {
        if it == config.exaggeration_iters {
            exaggerated = None;
        }
        let active = exaggerated.as_ref().map_or(p, Scaled::view);
        let grad = gradient(active, &state.y, config.algorithm, config.tradeoff(), config.condition).map_err(|e| match e {
            Error::Numeric(msg) => Error::NonFinite { iteration: it, msg },
            e => e,
        })?;
        state.step(&grad, config)?;
        let checkpoint = (it + 1) % config.cost_every == 0 || it + 1 == config.iterations;
        let cost = if checkpoint { Some(checkpoint_cost(p, &state.y, config)?) } else { None };
        let record = IterationRecord {
            iteration: it,
            cost,
            grad_norm: grad.norm(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(c) = cost {
            log::info!("iteration {}: cost {:.6} ({:.2} s)", it + 1, c, record.elapsed_seconds);
            observer(&record);
        }
        state.history.push(record);
    }
    if !state.y.is_finite() {
        return Err(Error::NonFinite {
            iteration: state.iteration,
            msg: "embedding diverged".into(),
        });
    }
    Ok(RunResult {
        embedding: state.y,
        history: state.history,
    })
}
