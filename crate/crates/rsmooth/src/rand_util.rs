use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Standard Gaussian matrix, filled column by column so the layout of the
/// draws is independent of the RNG and platform.
pub(crate) fn standard_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}
