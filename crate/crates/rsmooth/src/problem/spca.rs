//! Sparse PCA: `min -tr(X^T B^T B X) + lambda ||X||_1` over `St(n, r)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{l1_composite, SmoothTerm, SmoothedProblem};
use crate::error::{Error, Result};
use crate::operator::power_iteration_norm;
use crate::rand_util::standard_normal_matrix;

/// A sparse-PCA instance over a data matrix `B` (m samples by n features)
/// whose columns have zero mean and unit norm. The smooth term is
/// `f(X) = -tr(X^T B^T B X)` with gradient `-2 B^T B X`; the rows of `B` can
/// be partitioned into contiguous blocks for minibatch gradients.
pub struct SpcaInstance {
    b: DMatrix<f64>,
    gram: DMatrix<f64>,
    lambda: f64,
    r: usize,
    seed: u64,
    /// Half-open row ranges of the batch partition.
    blocks: Vec<(usize, usize)>,
    gram_norm: f64,
}

impl SpcaInstance {
    /// Draws `B` from the standard Gaussian with the given seed, shifts each
    /// column to zero mean and normalizes it to unit length. Deterministic:
    /// the same seed reproduces `B` bitwise.
    pub fn generate(m: usize, n: usize, r: usize, lambda: f64, seed: u64) -> Result<Self> {
        if m < 1 || n < 1 || r < 1 || r > n {
            return Err(Error::invalid(
                "m, n, r",
                format!("require m, n, r >= 1 and r <= n, got m={m}, n={n}, r={r}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = standard_normal_matrix(m, n, &mut rng);
        center_and_normalize_columns(&mut b);
        Self::from_matrix(b, r, lambda, seed)
    }

    /// Wraps an existing data matrix (e.g. one loaded from a replay dump).
    pub fn from_matrix(b: DMatrix<f64>, r: usize, lambda: f64, seed: u64) -> Result<Self> {
        if r < 1 || r > b.ncols() {
            return Err(Error::invalid(
                "r",
                format!("require 1 <= r <= n = {}, got {r}", b.ncols()),
            ));
        }
        if lambda < 0.0 {
            return Err(Error::invalid(
                "lambda",
                format!("must be nonnegative, got {lambda}"),
            ));
        }
        let gram = b.tr_mul(&b);
        let gram_norm = power_iteration_norm(&gram, 1e-8, 10_000)?;
        let m = b.nrows();
        Ok(SpcaInstance {
            b,
            gram,
            lambda,
            r,
            seed,
            blocks: vec![(0, m)],
            gram_norm,
        })
    }

    /// Splits the rows of `B` into `p` contiguous blocks (the first `m mod p`
    /// blocks get one extra row when `p` does not divide `m`). Blocks are
    /// fixed for the lifetime of the instance and never reshuffled.
    pub fn with_batches(mut self, p: usize) -> Result<Self> {
        let m = self.b.nrows();
        if p < 1 || p > m {
            return Err(Error::invalid(
                "p",
                format!("batch count must satisfy 1 <= p <= m = {m}, got {p}"),
            ));
        }
        let base = m / p;
        let extra = m % p;
        let mut blocks = Vec::with_capacity(p);
        let mut lo = 0;
        for i in 0..p {
            let len = base + usize::from(i < extra);
            blocks.push((lo, lo + len));
            lo += len;
        }
        debug_assert_eq!(lo, m);
        self.blocks = blocks;
        Ok(self)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Spectral norm of `B^T B` (power-iteration estimate).
    pub fn gram_norm(&self) -> f64 {
        self.gram_norm
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    pub fn n(&self) -> usize {
        self.b.ncols()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Assembles the composite problem over `St(n, r)` with `A = I`.
    pub fn into_problem(self) -> Result<SmoothedProblem> {
        let (n, r, lambda) = (self.n(), self.r, self.lambda);
        l1_composite(Arc::new(self), n, r, lambda)
    }
}

fn center_and_normalize_columns(b: &mut DMatrix<f64>) {
    let m = b.nrows();
    for j in 0..b.ncols() {
        let mut col = b.column_mut(j);
        let mean = col.iter().sum::<f64>() / m as f64;
        for v in col.iter_mut() {
            *v -= mean;
        }
        let norm = col.norm();
        if norm > 0.0 {
            for v in col.iter_mut() {
                *v /= norm;
            }
        }
    }
}

impl SmoothTerm for SpcaInstance {
    fn value(&self, x: &DMatrix<f64>) -> f64 {
        -(&self.gram * x).dot(x)
    }

    fn grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.gram * x) * -2.0
    }

    fn grad_lipschitz(&self) -> f64 {
        2.0 * self.gram_norm
    }

    fn batch_count(&self) -> usize {
        self.blocks.len()
    }

    fn batch_weight(&self, p: usize) -> f64 {
        let (lo, hi) = self.blocks[p];
        (hi - lo) as f64 / self.b.nrows() as f64
    }

    fn batch_grad(&self, x: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
        let (lo, hi) = self.blocks[p];
        let rows = self.b.rows(lo, hi - lo);
        let bx = rows * x;
        let scale = -2.0 * self.b.nrows() as f64 / (hi - lo) as f64;
        rows.tr_mul(&bx) * scale
    }

    fn grad_norm_bound(&self) -> Option<f64> {
        // ||2 B^T B X||_F <= 2 ||B^T B||_2 sqrt(r) on the Stiefel manifold.
        Some(2.0 * self.gram_norm * (self.r as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Stiefel;
    use rand::SeedableRng;

    #[test]
    fn generated_columns_are_centered_and_normalized() {
        let inst = SpcaInstance::generate(80, 12, 3, 0.4, 31).unwrap();
        for j in 0..12 {
            let col = inst.data().column(j);
            let mean = col.iter().sum::<f64>() / 80.0;
            assert!(mean.abs() <= 1e-12);
            assert!((col.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic_bitwise() {
        let a = SpcaInstance::generate(30, 7, 2, 0.4, 33).unwrap();
        let b = SpcaInstance::generate(30, 7, 2, 0.4, 33).unwrap();
        assert_eq!(a.data(), b.data());
        let c = SpcaInstance::generate(30, 7, 2, 0.4, 34).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn generation_at_paper_scale_is_fast() {
        let t0 = std::time::Instant::now();
        let inst = SpcaInstance::generate(5000, 200, 10, 0.4, 35).unwrap();
        assert!(t0.elapsed().as_secs_f64() < 1.0);
        assert_eq!(inst.m(), 5000);
    }

    #[test]
    fn gradient_with_identity_data_is_minus_two_x() {
        // B = I (m = n): columns of I are already unit-norm but not centered;
        // bypass generation and wrap the matrix directly.
        let inst = SpcaInstance::from_matrix(DMatrix::identity(6, 6), 2, 0.0, 0).unwrap();
        let x = DMatrix::identity(6, 2);
        let g = inst.grad(&x);
        assert!((g - &x * -2.0).norm() <= 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let inst = SpcaInstance::generate(40, 9, 3, 0.4, 37).unwrap();
        let manifold = Stiefel::new(9, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(38);
        let x = manifold.random_point(&mut rng).into_matrix();
        let g = inst.grad(&x);
        let step = 1e-6;
        for i in 0..9 {
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[(i, j)] += step;
                xm[(i, j)] -= step;
                let fd = (inst.value(&xp) - inst.value(&xm)) / (2.0 * step);
                assert!(
                    (fd - g[(i, j)]).abs() <= 1e-5 * g[(i, j)].abs().max(1.0),
                    "fd {fd} vs {}",
                    g[(i, j)]
                );
            }
        }
    }

    #[test]
    fn batch_mean_is_exact_for_even_and_uneven_partitions() {
        for (m, p) in [(60, 6), (61, 6), (20, 20)] {
            let inst = SpcaInstance::generate(m, 8, 2, 0.4, 39)
                .unwrap()
                .with_batches(p)
                .unwrap();
            let manifold = Stiefel::new(8, 2).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
            let x = manifold.random_point(&mut rng).into_matrix();
            let full = inst.grad(&x);
            let mut acc = DMatrix::zeros(8, 2);
            let mut wsum = 0.0;
            for q in 0..p {
                acc += inst.batch_grad(&x, q) * inst.batch_weight(q);
                wsum += inst.batch_weight(q);
            }
            assert!((wsum - 1.0).abs() <= 1e-12);
            assert!(
                (acc - full).norm() <= 1e-12,
                "partition mean drifted for m={m}, p={p}"
            );
        }
    }

    #[test]
    fn batch_variance_is_finite_and_recorded() {
        let inst = SpcaInstance::generate(50, 6, 2, 0.4, 41)
            .unwrap()
            .with_batches(10)
            .unwrap();
        let problem = inst.into_problem().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x = problem.manifold().random_point(&mut rng);
        let var = problem.batch_variance(&x);
        assert!(var.is_finite() && var >= 0.0);
        let sigma2 = problem.estimate_sigma2(&mut rng, 20);
        assert!(sigma2 >= var);
    }
}
