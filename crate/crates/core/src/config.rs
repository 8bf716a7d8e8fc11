use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How the repulsive half of the gradient is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// All pairs, O(N^2).
    Exact,
    /// Point-cell Barnes-Hut traversal of the space tree.
    BarnesHut,
    /// Cell-cell dual-tree traversal.
    DualTree,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Exact => "exact",
            Algorithm::BarnesHut => "bh",
            Algorithm::DualTree => "dual",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Algorithm::Exact),
            "bh" | "barnes-hut" => Ok(Algorithm::BarnesHut),
            "dual" | "dual-tree" => Ok(Algorithm::DualTree),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Form of the cell summary test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Condition {
    /// `size / distance < threshold`.
    #[default]
    Standard,
    /// `distance^2 / size < threshold`.
    PaperLiteral,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Standard => "standard",
            Condition::PaperLiteral => "paper-literal",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Condition::Standard),
            "paper-literal" => Ok(Condition::PaperLiteral),
            _ => Err(Error::InvalidArgument(format!("unknown condition {s:?}"))),
        }
    }
}

/// All knobs of one embedding run. `Default` gives the standard
/// Barnes-Hut-SNE experimental setup.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub perplexity: f64,
    pub theta: f64,
    pub rho: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub momentum_switch_iter: usize,
    pub learning_rate: f64,
    pub output_dims: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub condition: Condition,
    /// 0 disables PCA.
    pub pca_target: usize,
    /// Cost is recorded every this many iterations (and at the last one).
    pub cost_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            theta: 0.5,
            rho: 0.25,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch_iter: 250,
            learning_rate: 200.0,
            output_dims: 2,
            seed: 0,
            algorithm: Algorithm::BarnesHut,
            condition: Condition::Standard,
            pca_target: 50,
            cost_every: 50,
        }
    }
}

impl RunConfig {
    /// Number of neighbors used for the sparse input affinities, `floor(3u)`.
    pub fn neighbors(&self) -> usize {
        (3.0 * self.perplexity).floor() as usize
    }

    /// The speed/accuracy parameter for the configured algorithm.
    pub fn tradeoff(&self) -> f64 {
        match self.algorithm {
            Algorithm::Exact => 0.0,
            Algorithm::BarnesHut => self.theta,
            Algorithm::DualTree => self.rho,
        }
    }

    pub fn momentum_at(&self, iteration: usize) -> f64 {
        if iteration < self.momentum_switch_iter {
            self.momentum_early
        } else {
            self.momentum_late
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.perplexity > 0.0 && self.perplexity.is_finite()) {
            return bad(format!("perplexity must be > 0, got {}", self.perplexity));
        }
        if !(self.theta >= 0.0) || !(self.rho >= 0.0) {
            return bad(format!("theta and rho must be >= 0, got {} and {}", self.theta, self.rho));
        }
        if !(self.exaggeration >= 1.0) {
            return bad(format!("exaggeration must be >= 1, got {}", self.exaggeration));
        }
        for m in [self.momentum_early, self.momentum_late] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("momentum must lie in [0, 1), got {m}"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !matches!(self.output_dims, 2 | 3) {
            return bad(format!("output dimensionality must be 2 or 3, got {}", self.output_dims));
        }
        if self.cost_every == 0 {
            return bad("cost_every must be >= 1".into());
        }
        Ok(())
    }
}
