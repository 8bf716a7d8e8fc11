//! Benchmark records and sweeps over the trade-off parameter and data size.
//!
//! Results are CSV rows `algorithm,n,param,seconds,knn_error,final_kl,seed`.
//! Files are only ever appended to, and a resumed sweep skips every
//! (algorithm, n, param, seed) combination already present.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Algorithm, RunConfig};
use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, LabelVector};
use crate::pipeline::embed;

pub const HEADER: &str = "algorithm,n,param,seconds,knn_error,final_kl,seed";

pub const DEFAULT_THETA_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const DEFAULT_RHO_GRID: [f64; 10] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.75, 1.0];
pub const DEFAULT_SIZE_GRID: [usize; 4] = [1250, 2500, 5000, 10000];
/// Largest `n` at which sweeps include the exact algorithm unless told otherwise.
pub const DEFAULT_EXACT_CAP: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub param: f64,
    pub seconds: f64,
    pub knn_error: Option<f64>,
    pub final_kl: f64,
    pub seed: u64,
}

/// Identity of a run for resuming.
pub type RecordKey = (Algorithm, usize, u64, u64);

impl BenchRecord {
    pub fn key(&self) -> RecordKey {
        (self.algorithm, self.n, self.param.to_bits(), self.seed)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.algorithm,
            self.n,
            self.param,
            self.seconds,
            self.knn_error.map(|e| e.to_string()).unwrap_or_default(),
            self.final_kl,
            self.seed
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = || Error::InvalidData(format!("malformed benchmark row {line:?}"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            algorithm: f[0].parse().map_err(|_| bad())?,
            n: f[1].parse().map_err(|_| bad())?,
            param: num(f[2])?,
            seconds: num(f[3])?,
            knn_error: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            final_kl: num(f[5])?,
            seed: f[6].parse().map_err(|_| bad())?,
        })
    }
}

/// Reads every record in a benchmark CSV (header optional).
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.trim() == HEADER {
            continue;
        }
        out.push(BenchRecord::parse(&line)?);
    }
    Ok(out)
}

/// Destination for records: stdout or an append-only file.
pub struct BenchSink {
    path: Option<PathBuf>,
    done: HashSet<RecordKey>,
    header_written: bool,
}

impl BenchSink {
    pub fn stdout() -> Self {
        Self {
            path: None,
            done: HashSet::new(),
            header_written: false,
        }
    }

    /// Appends to `path`, writing the header if the file is new or empty.
    /// With `resume`, rows already in the file are reported by `is_done`.
    pub fn file(path: impl Into<PathBuf>, resume: bool) -> Result<Self> {
        let path = path.into();
        let existing = path.exists() && std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len() > 0;
        let done = if resume && existing {
            read_records(&path)?.iter().map(BenchRecord::key).collect()
        } else {
            HashSet::new()
        };
        Ok(Self {
            path: Some(path),
            done,
            header_written: existing,
        })
    }

    pub fn is_done(&self, key: &RecordKey) -> bool {
        self.done.contains(key)
    }

    pub fn write(&mut self, rec: &BenchRecord) -> Result<()> {
        let mut text = String::new();
        if !self.header_written {
            text.push_str(HEADER);
            text.push('\n');
            self.header_written = true;
        }
        text.push_str(&rec.to_csv());
        text.push('\n');
        match &self.path {
            None => {
                print!("{text}");
                std::io::stdout().flush().ok();
            }
            Some(p) => {
                let mut f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?;
                f.write_all(text.as_bytes()).map_err(|e| Error::io(p, e))?;
            }
        }
        self.done.insert(rec.key());
        Ok(())
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Embeds `repeats` times; seconds is the median, quality numbers come from
/// the first run (the rest are identical by determinism).
pub fn run_point(data: &DataMatrix, labels: Option<&LabelVector>, config: &RunConfig, repeats: usize) -> Result<BenchRecord> {
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut first = None;
    for _ in 0..repeats.max(1) {
        let out = embed(data, labels, config)?;
        times.push(out.report.wall_time_seconds);
        first.get_or_insert(out.report);
    }
    let report = first.unwrap();
    Ok(BenchRecord {
        algorithm: config.algorithm,
        n: data.n(),
        param: config.tradeoff(),
        seconds: median(&mut times),
        knn_error: report.knn_error,
        final_kl: report.kl_cost,
        seed: config.seed,
    })
}

/// Bench-time config: cost only at the last iteration so timing is not
/// dominated by O(N^2) checkpoints.
fn bench_config(base: &RunConfig, algorithm: Algorithm, param: f64) -> RunConfig {
    let mut c = base.clone();
    c.algorithm = algorithm;
    match algorithm {
        Algorithm::BarnesHut => c.theta = param,
        Algorithm::DualTree => c.rho = param,
        Algorithm::Exact => {}
    }
    c.cost_every = c.iterations.max(1);
    c
}

fn sweep(
    data: &DataMatrix,
    labels: Option<&LabelVector>,
    base: &RunConfig,
    points: &[(Algorithm, f64)],
    repeats: usize,
    sink: &mut BenchSink,
) -> Result<Vec<BenchRecord>> {
    let mut out = Vec::new();
    for &(alg, param) in points {
        let cfg = bench_config(base, alg, param);
        let key = (alg, data.n(), cfg.tradeoff().to_bits(), cfg.seed);
        if sink.is_done(&key) {
            log::info!("skipping completed {} n={} param={}", alg, data.n(), param);
            continue;
        }
        log::info!("running {} n={} param={}", alg, data.n(), param);
        let rec = run_point(data, labels, &cfg, repeats)?;
        sink.write(&rec)?;
        out.push(rec);
    }
    Ok(out)
}

fn sorted_grid(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// One run per grid value with `algorithm` (Barnes-Hut or dual tree), plus an
/// exact baseline row first when `n <= exact_cap`. Rows come out in
/// increasing parameter order.
pub fn bench_tradeoff(
    data: &DataMatrix,
    labels: Option<&LabelVector>,
    base: &RunConfig,
    algorithm: Algorithm,
    grid: &[f64],
    exact_cap: usize,
    repeats: usize,
    sink: &mut BenchSink,
) -> Result<Vec<BenchRecord>> {
    let mut points = Vec::new();
    if data.n() <= exact_cap {
        points.push((Algorithm::Exact, 0.0));
    }
    points.extend(sorted_grid(grid).into_iter().map(|p| (algorithm, p)));
    sweep(data, labels, base, &points, repeats, sink)
}

/// Nested subsets: one seeded shuffle, then the first `n` rows for each grid
/// size. Runs Barnes-Hut at `base.theta` and, up to `exact_cap`, the exact
/// algorithm.
pub fn bench_size(
    data: &DataMatrix,
    labels: Option<&LabelVector>,
    base: &RunConfig,
    sizes: &[usize],
    exact_cap: usize,
    repeats: usize,
    sink: &mut BenchSink,
) -> Result<Vec<BenchRecord>> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if let Some(&max) = sizes.last() {
        if max > data.n() {
            return Err(Error::InvalidArgument(format!("size grid reaches {max} but the data has {} rows", data.n())));
        }
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(base.seed));
    let mut out = Vec::new();
    for n in sizes {
        let idx = &order[..n];
        let sub = data.select_rows(idx)?;
        let sub_labels = labels.map(|l| l.select(idx));
        let mut points = Vec::new();
        if n <= exact_cap {
            points.push((Algorithm::Exact, 0.0));
        }
        points.push((Algorithm::BarnesHut, base.theta));
        out.extend(sweep(&sub, sub_labels.as_ref(), base, &points, repeats, sink)?);
    }
    Ok(out)
}
