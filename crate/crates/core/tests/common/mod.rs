#![allow(dead_code)]

use std::io::{Read, Write};
use std::path::Path;

use bhsne::{DataMatrix, Embedding, LabelVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const MNIST_SUBSET: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/mnist5000.csv.gz");

/// 5000 MNIST digits (500 per class), pixels in [0, 1].
pub fn load_mnist_subset() -> (DataMatrix, LabelVector) {
    let mut text = Vec::new();
    flate2::read::GzDecoder::new(std::fs::File::open(MNIST_SUBSET).unwrap())
        .read_to_end(&mut text)
        .unwrap();
    let mut tmp = tempfile::NamedTempFile::new().unwrap();
    tmp.write_all(&text).unwrap();
    let (data, labels) = bhsne::io::load_csv(tmp.path(), true).unwrap();
    (data, labels.unwrap())
}

pub fn uniform_matrix(n: usize, d: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DataMatrix::new(n, d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

pub fn gaussian_embedding(n: usize, dims: usize, scale: f64, seed: u64) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n * dims).map(|_| scale * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect::<Vec<f64>>();
    Embedding::new(n, dims, coords).unwrap()
}

pub fn uniform_embedding(n: usize, dims: usize, half_width: f64, seed: u64) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Embedding::new(n, dims, (0..n * dims).map(|_| rng.random_range(-half_width..half_width)).collect()).unwrap()
}

/// `clusters` isotropic Gaussian clusters (unit variance) with centers spread
/// `separation` standard deviations apart along distinct axes.
pub fn gaussian_clusters(per_cluster: usize, clusters: usize, d: usize, separation: f64, seed: u64) -> (DataMatrix, LabelVector) {
    assert!(clusters <= d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(per_cluster * clusters * d);
    let mut labels = Vec::new();
    for c in 0..clusters {
        for _ in 0..per_cluster {
            for k in 0..d {
                let center = if k == c { separation } else { 0.0 };
                values.push(center + { let z: f64 = StandardNormal.sample(&mut rng); z });
            }
            labels.push(c as i64);
        }
    }
    (DataMatrix::new(per_cluster * clusters, d, values).unwrap(), LabelVector(labels))
}

/// Writes one line straight to stderr so it shows even when test output is
/// captured.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    writeln!(err, "{line}").ok();
}

pub fn bin_path() -> &'static Path {
    Path::new(env!("CARGO_BIN_EXE_bhsne"))
}
