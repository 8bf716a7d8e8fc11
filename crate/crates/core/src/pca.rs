//! PCA preprocessing: project mean-centered data onto the leading
//! eigenvectors of its covariance matrix.
//!
//! Covariances up to [`JACOBI_MAX_DIM`] are diagonalised with cyclic Jacobi
//! rotations. Wider inputs go through a randomized range finder first so the
//! eigenproblem stays small.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::Result;
use crate::matrix::DataMatrix;

pub const JACOBI_MAX_DIM: usize = 4096;
const OVERSAMPLING: usize = 10;
const POWER_ITERATIONS: usize = 2;
const RANGE_FINDER_SEED: u64 = 0x5eed_9ca;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// Per-column mean of the input.
    pub mean: Vec<f64>,
    /// `d x k` row-major; column `j` is the `j`-th principal axis.
    pub basis: Vec<f64>,
    pub d: usize,
    pub k: usize,
    /// Covariance eigenvalues for the kept axes, descending. Empty for the
    /// identity model returned when no reduction was needed.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn identity(d: usize) -> Self {
        let mut basis = vec![0.0; d * d];
        for i in 0..d {
            basis[i * d + i] = 1.0;
        }
        Self {
            mean: vec![0.0; d],
            basis,
            d,
            k: d,
            explained_variance: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.explained_variance.is_empty()
    }

    /// Basis entry for input dimension `row`, component `col`.
    #[inline]
    pub fn axis(&self, row: usize, col: usize) -> f64 {
        self.basis[row * self.k + col]
    }

    pub fn transform(&self, data: &DataMatrix) -> Result<DataMatrix> {
        assert_eq!(data.d(), self.d, "dimension mismatch");
        if self.is_identity() {
            return Ok(data.clone());
        }
        let k = self.k;
        let mut out = vec![0.0; data.n() * k];
        out.par_chunks_mut(k).zip(data.values().par_chunks(self.d)).for_each(|(o, x)| {
            for (a, (&xa, &m)) in x.iter().zip(&self.mean).enumerate() {
                let c = xa - m;
                if c == 0.0 {
                    continue;
                }
                let row = &self.basis[a * k..(a + 1) * k];
                for (oj, bj) in o.iter_mut().zip(row) {
                    *oj += c * bj;
                }
            }
        });
        DataMatrix::new(data.n(), k, out)
    }
}

/// Reduces `data` to `target_dims` principal components. Inputs already at or
/// below the target come back unchanged together with an identity model.
pub fn pca_reduce(data: &DataMatrix, target_dims: usize) -> Result<(DataMatrix, PcaModel)> {
    if target_dims == 0 {
        return Err(crate::Error::InvalidArgument("PCA target dimensionality must be >= 1".into()));
    }
    let (n, d) = (data.n(), data.d());
    if d <= target_dims {
        return Ok((data.clone(), PcaModel::identity(d)));
    }

    let mean = column_means(data);
    // Column-major centered copy: column dot products are contiguous.
    let mut cols = vec![0.0; n * d];
    for (i, row) in data.rows().enumerate() {
        for (a, (&x, &m)) in row.iter().zip(&mean).enumerate() {
            cols[a * n + i] = x - m;
        }
    }

    let (values, vectors) = if d <= JACOBI_MAX_DIM {
        let cov = covariance(&cols, n, d);
        symmetric_eigen(cov, d)
    } else {
        randomized_eigen(&cols, n, d, target_dims)
    };

    let k = target_dims;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);

    let mut basis = vec![0.0; d * k];
    let mut explained_variance = Vec::with_capacity(k);
    for (j, &src) in order.iter().enumerate() {
        let v = &vectors[src * d..(src + 1) * d];
        // Largest-magnitude entry positive.
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best });
        let sign = if v[pivot.0] < 0.0 { -1.0 } else { 1.0 };
        for a in 0..d {
            basis[a * k + j] = sign * v[a];
        }
        explained_variance.push(values[src].max(0.0));
    }
    if explained_variance.iter().all(|&v| v == 0.0) {
        log::warn!("PCA input has zero variance; projection is identically zero");
    }

    let model = PcaModel {
        mean,
        basis,
        d,
        k,
        explained_variance,
    };
    let reduced = model.transform(data)?;
    Ok((reduced, model))
}

fn column_means(data: &DataMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; data.d()];
    for row in data.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let n = data.n() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the loop vectorizes.
    let mut acc = [0.0; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let rb = b.chunks_exact(4).remainder();
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Sample covariance (divisor n - 1) from column-major centered data.
fn covariance(cols: &[f64], n: usize, d: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    let upper: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|a| {
            let ca = &cols[a * n..(a + 1) * n];
            (a..d).map(|b| dot(ca, &cols[b * n..(b + 1) * n]) / denom).collect()
        })
        .collect();
    let mut cov = vec![0.0; d * d];
    for (a, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let b = a + off;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    cov
}

/// Eigen-decomposition of a symmetric `n x n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues (unsorted) and the matching
/// eigenvectors as rows of an `n x n` matrix.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return ((0..n).map(|i| a[i * n + i]).collect(), vt);
    }
    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];

    for sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                row_p.copy_from_slice(&a[p * n..(p + 1) * n]);
                row_q.copy_from_slice(&a[q * n..(q + 1) * n]);
                for k in 0..n {
                    let (g, h) = (row_p[k], row_q[k]);
                    row_p[k] = g - s * (h + g * tau);
                    row_q[k] = h + s * (g - h * tau);
                }
                row_p[p] = app - t * apq;
                row_q[q] = aqq + t * apq;
                row_p[q] = 0.0;
                row_q[p] = 0.0;
                a[p * n..(p + 1) * n].copy_from_slice(&row_p);
                a[q * n..(q + 1) * n].copy_from_slice(&row_q);
                for k in 0..n {
                    a[k * n + p] = row_p[k];
                    a[k * n + q] = row_q[k];
                }

                let (vp, vq) = rows_mut(&mut vt, n, p, q);
                for (g, h) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (gv, hv) = (*g, *h);
                    *g = gv - s * (hv + gv * tau);
                    *h = hv + s * (gv - hv * tau);
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), vt)
}

fn rows_mut(m: &mut [f64], n: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (lo, hi) = m.split_at_mut(q * n);
    (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
}

/// Modified Gram-Schmidt on `cols` column vectors of length `len`, stored
/// contiguously. Columns that collapse to zero are left zero.
fn orthonormalize(m: &mut [f64], len: usize, cols: usize) {
    for j in 0..cols {
        let (done, rest) = m.split_at_mut(j * len);
        let v = &mut rest[..len];
        for i in 0..j {
            let u = &done[i * len..(i + 1) * len];
            let r = dot(u, v);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= r * y);
        }
        let norm = dot(v, v).sqrt();
        if norm > 1e-300 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Randomized range finder (oversampling 10, two power iterations) followed
/// by an exact eigensolve of the small projected Gram matrix.
fn randomized_eigen(cols: &[f64], n: usize, d: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let l = (k + OVERSAMPLING).min(n).min(d);
    let mut rng = ChaCha8Rng::seed_from_u64(RANGE_FINDER_SEED);
    // omega: l column vectors of length d.
    let omega: Vec<f64> = (0..l * d).map(|_| StandardNormal.sample(&mut rng)).collect();

    // X * w for w of length d -> length n; X stored column-major.
    let apply = |w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (a, &wa) in w.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            let c = &cols[a * n..(a + 1) * n];
            out.iter_mut().zip(c).for_each(|(o, x)| *o += wa * x);
        }
        out
    };
    // X^T * u for u of length n -> length d.
    let apply_t = |u: &[f64]| -> Vec<f64> { (0..d).map(|a| dot(&cols[a * n..(a + 1) * n], u)).collect() };

    let mut q: Vec<f64> = omega.par_chunks(d).flat_map_iter(&apply).collect();
    orthonormalize(&mut q, n, l);
    for _ in 0..POWER_ITERATIONS {
        let mut z: Vec<f64> = q.par_chunks(n).flat_map_iter(&apply_t).collect();
        orthonormalize(&mut z, d, l);
        q = z.par_chunks(d).flat_map_iter(&apply).collect();
        orthonormalize(&mut q, n, l);
    }
    // B = Q^T X, rows of length d.
    let b: Vec<f64> = q.par_chunks(n).flat_map_iter(&apply_t).collect();
    let mut gram = vec![0.0; l * l];
    for i in 0..l {
        for j in i..l {
            let v = dot(&b[i * d..(i + 1) * d], &b[j * d..(j + 1) * d]);
            gram[i * l + j] = v;
            gram[j * l + i] = v;
        }
    }
    let (lambda, u) = symmetric_eigen(gram, l);
    let denom = (n - 1) as f64;
    let mut values = Vec::with_capacity(l);
    let mut vectors = vec![0.0; l * d];
    for j in 0..l {
        let s = lambda[j].max(0.0).sqrt();
        values.push(lambda[j].max(0.0) / denom);
        if s > 0.0 {
            let uj = &u[j * l..(j + 1) * l];
            let v = &mut vectors[j * d..(j + 1) * d];
            for (i, &ui) in uj.iter().enumerate() {
                let bi = &b[i * d..(i + 1) * d];
                v.iter_mut().zip(bi).for_each(|(x, y)| *x += ui * y / s);
            }
        }
    }
    (values, vectors)
}
