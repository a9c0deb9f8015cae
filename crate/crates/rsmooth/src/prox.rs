//! Weakly convex nonsmooth terms, proximal operators and Moreau envelopes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A proper, closed, `rho`-weakly convex and Lipschitz function `h` with a
/// closed-form proximal operator. `rho = 0` means convex.
pub trait WeaklyConvexFn: Send + Sync {
    fn eval(&self, y: &DMatrix<f64>) -> f64;

    /// `prox_{mu h}(y) = argmin_z h(z) + ||z - y||^2 / (2 mu)`, single-valued
    /// for `mu` in `(0, 1/rho)`.
    fn prox(&self, y: &DMatrix<f64>, mu: f64) -> DMatrix<f64>;

    /// Lipschitz constant `ell_h` under the Frobenius pairing.
    fn lipschitz(&self) -> f64;

    /// Weak-convexity modulus `rho >= 0`.
    fn weak_convexity(&self) -> f64;

    /// One element of the subdifferential, used by the subgradient baseline.
    fn subgradient(&self, y: &DMatrix<f64>) -> DMatrix<f64>;

    /// Lipschitz constant of `grad h_mu`, `max(1/mu, rho / (1 - rho mu))`.
    /// For the schedules used here `rho mu <= 1/2`, where the max is `1/mu`.
    fn envelope_grad_lipschitz(&self, mu: f64) -> f64 {
        let rho = self.weak_convexity();
        if rho == 0.0 {
            1.0 / mu
        } else {
            (1.0 / mu).max(rho / (1.0 - rho * mu))
        }
    }
}

/// A validated smoothing parameter for a given `h`: `mu` in `(0, 1/rho)`,
/// and `rho mu <= 1/2` so the reduced smoothness formula applies.
#[derive(Clone, Copy, Debug)]
pub struct MoreauParams {
    mu: f64,
}

impl MoreauParams {
    pub fn new(mu: f64, h: &dyn WeaklyConvexFn) -> Result<Self> {
        validate_mu(h, mu)?;
        let rho = h.weak_convexity();
        if rho > 0.0 && rho * mu > 0.5 + 1e-12 {
            return Err(Error::invalid(
                "mu",
                format!("rho * mu = {:.3e} exceeds 1/2; the reduced smoothness constant does not apply", rho * mu),
            ));
        }
        Ok(MoreauParams { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

fn validate_mu(h: &dyn WeaklyConvexFn, mu: f64) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::invalid("mu", format!("must be positive, got {mu}")));
    }
    let rho = h.weak_convexity();
    if rho > 0.0 && mu >= 1.0 / rho {
        return Err(Error::invalid(
            "mu",
            format!("must lie in (0, 1/rho) = (0, {:.3e}), got {mu}", 1.0 / rho),
        ));
    }
    Ok(())
}

/// Entrywise soft-thresholding: the proximal operator of `lambda ||.||_1`
/// with parameter `mu`, i.e. `sign(y) max(|y| - mu lambda, 0)`.
pub fn prox_l1(y: &DMatrix<f64>, mu: f64, lambda: f64) -> DMatrix<f64> {
    let t = mu * lambda;
    y.map(|v| soft_threshold(v, t))
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Moreau envelope value `h_mu(y) = h(prox(y)) + ||prox(y) - y||^2 / (2 mu)`.
/// Always `<= h(y)` since `z = y` is feasible in the infimum.
pub fn moreau_value(h: &dyn WeaklyConvexFn, y: &DMatrix<f64>, mu: f64) -> Result<f64> {
    validate_mu(h, mu)?;
    let p = h.prox(y, mu);
    Ok(h.eval(&p) + (&p - y).norm_squared() / (2.0 * mu))
}

/// Envelope gradient `grad h_mu(y) = (y - prox_{mu h}(y)) / mu`.
pub fn moreau_grad(h: &dyn WeaklyConvexFn, y: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
    validate_mu(h, mu)?;
    let p = h.prox(y, mu);
    Ok((y - p) / mu)
}

/// Checks the envelope ordering
/// `h_{mu2}(y) <= h_{mu1}(y) + ((mu1 - mu2) / mu2) * mu1 * ell_h^2 / 2`
/// for `0 < mu2 <= mu1 < 1/rho`, with slack `1e-10`. Used as a runtime
/// assertion by the solvers.
pub fn check_envelope_ordering(
    h: &dyn WeaklyConvexFn,
    y: &DMatrix<f64>,
    mu1: f64,
    mu2: f64,
) -> Result<bool> {
    validate_mu(h, mu1)?;
    validate_mu(h, mu2)?;
    if mu2 > mu1 {
        return Err(Error::invalid(
            "mu2",
            format!("requires mu2 <= mu1, got mu1 = {mu1}, mu2 = {mu2}"),
        ));
    }
    let lhs = moreau_value(h, y, mu2)?;
    let ell = h.lipschitz();
    let rhs = moreau_value(h, y, mu1)? + 0.5 * ((mu1 - mu2) / mu2) * mu1 * ell * ell;
    Ok(lhs <= rhs + 1e-10)
}

/// `lambda ||Y||_1` on matrices of a fixed shape; convex with exact Frobenius
/// Lipschitz constant `lambda sqrt(n r)`.
#[derive(Clone, Debug)]
pub struct L1Norm {
    weight: f64,
    entries: usize,
}

impl L1Norm {
    pub fn new(weight: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(Error::invalid(
                "weight",
                format!("must be positive, got {weight}"),
            ));
        }
        Ok(L1Norm {
            weight,
            entries: rows * cols,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl WeaklyConvexFn for L1Norm {
    fn eval(&self, y: &DMatrix<f64>) -> f64 {
        self.weight * y.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, y: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
        prox_l1(y, mu, self.weight)
    }

    fn lipschitz(&self) -> f64 {
        self.weight * (self.entries as f64).sqrt()
    }

    fn weak_convexity(&self) -> f64 {
        0.0
    }

    fn subgradient(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.weight;
        y.map(|v| {
            if v > 0.0 {
                w
            } else if v < 0.0 {
                -w
            } else {
                0.0
            }
        })
    }
}

/// The zero function; stands in for `h` when the sparsity weight is zero so
/// the smoothed objective degenerates cleanly to `f`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFn;

impl WeaklyConvexFn for ZeroFn {
    fn eval(&self, _y: &DMatrix<f64>) -> f64 {
        0.0
    }

    fn prox(&self, y: &DMatrix<f64>, _mu: f64) -> DMatrix<f64> {
        y.clone()
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn weak_convexity(&self) -> f64 {
        0.0
    }

    fn subgradient(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(y.nrows(), y.ncols())
    }

    fn envelope_grad_lipschitz(&self, _mu: f64) -> f64 {
        0.0
    }
}

/// `lambda ||Y||_1 - (rho/2) ||Y||_F^2`: a genuinely `rho`-weakly convex term.
/// On arguments of bounded Frobenius norm (radius `R`) it is Lipschitz with
/// constant `lambda sqrt(n r) + rho R'`, where `R'` covers both the arguments
/// and their proximal images.
///
/// On the Stiefel manifold with `A` the identity, `||X||_F^2 = r` is constant,
/// so this term induces the same minimizers as plain `lambda ||X||_1` while
/// exercising the `rho > 0` theory.
#[derive(Clone, Debug)]
pub struct WeaklyConvexL1 {
    weight: f64,
    curvature: f64,
    entries: usize,
    radius: f64,
}

impl WeaklyConvexL1 {
    pub fn new(weight: f64, curvature: f64, rows: usize, cols: usize, radius: f64) -> Result<Self> {
        if !(weight > 0.0) {
            return Err(Error::invalid(
                "weight",
                format!("must be positive, got {weight}"),
            ));
        }
        if !(curvature > 0.0) {
            return Err(Error::invalid(
                "curvature",
                format!("must be positive, got {curvature}"),
            ));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid(
                "radius",
                format!("must be positive, got {radius}"),
            ));
        }
        Ok(WeaklyConvexL1 {
            weight,
            curvature,
            entries: rows * cols,
            radius,
        })
    }
}

impl WeaklyConvexFn for WeaklyConvexL1 {
    fn eval(&self, y: &DMatrix<f64>) -> f64 {
        self.weight * y.iter().map(|v| v.abs()).sum::<f64>()
            - 0.5 * self.curvature * y.norm_squared()
    }

    fn prox(&self, y: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
        // argmin_z w|z| - (rho/2) z^2 + (z - y)^2 / (2 mu), entrywise:
        // soft-threshold then expand by 1 / (1 - mu rho).
        let t = mu * self.weight;
        let scale = 1.0 / (1.0 - mu * self.curvature);
        y.map(|v| soft_threshold(v, t) * scale)
    }

    fn lipschitz(&self) -> f64 {
        self.weight * (self.entries as f64).sqrt() + self.curvature * self.radius
    }

    fn weak_convexity(&self) -> f64 {
        self.curvature
    }

    fn subgradient(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.weight;
        let rho = self.curvature;
        y.map(|v| {
            let s = if v > 0.0 {
                w
            } else if v < 0.0 {
                -w
            } else {
                0.0
            };
            s - rho * v
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    /// Brute-force minimizer of the scalar prox objective on a grid; the
    /// independent oracle for the closed-form soft threshold.
    fn grid_prox_l1(y: f64, mu: f64, lambda: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        let lo = -3.0f64.max(y.abs() + 1.0);
        let n = (2.0 * lo.abs() / 1e-4) as usize;
        for i in 0..=n {
            let z = -lo.abs() + i as f64 * 1e-4;
            let obj = lambda * z.abs() + (z - y) * (z - y) / (2.0 * mu);
            if obj < best {
                best = obj;
                arg = z;
            }
        }
        arg
    }

    #[test]
    fn prox_l1_worked_scalars() {
        assert_relative_eq!(prox_l1(&scalar(2.0), 1.0, 1.0)[(0, 0)], 1.0);
        assert_relative_eq!(prox_l1(&scalar(0.3), 0.5, 1.0)[(0, 0)], 0.0);
        // Oracle-derived: grid search over z in [-3, 3], step 1e-4.
        let oracle = grid_prox_l1(-1.7, 0.25, 2.0);
        assert!((oracle - (-1.2)).abs() <= 1e-4);
        assert_relative_eq!(prox_l1(&scalar(-1.7), 0.25, 2.0)[(0, 0)], -1.2);
    }

    #[test]
    fn prox_l1_matches_grid_oracle_on_random_scalars() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let y = rng.random::<f64>() * 4.0 - 2.0;
            let mu = 0.05 + rng.random::<f64>();
            let lambda = 0.1 + rng.random::<f64>();
            let closed = prox_l1(&scalar(y), mu, lambda)[(0, 0)];
            let oracle = grid_prox_l1(y, mu, lambda);
            assert!(
                (closed - oracle).abs() <= 1e-4,
                "y={y} mu={mu} lambda={lambda}: {closed} vs {oracle}"
            );
        }
    }

    #[test]
    fn moreau_value_worked_examples() {
        let h = L1Norm::new(1.0, 1, 1).unwrap();
        assert_eq!(moreau_value(&h, &scalar(0.0), 0.7).unwrap(), 0.0);
        // prox(2) = 1 at mu = 1: value 1 + (1-2)^2/2 = 1.5
        assert_relative_eq!(moreau_value(&h, &scalar(2.0), 1.0).unwrap(), 1.5);
    }

    #[test]
    fn moreau_value_never_exceeds_h() {
        let h = L1Norm::new(0.8, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let y = crate::rand_util::standard_normal_matrix(3, 2, &mut rng);
            let mu = 0.05 + rng.random::<f64>();
            assert!(moreau_value(&h, &y, mu).unwrap() <= h.eval(&y) + 1e-12);
        }
    }

    #[test]
    fn moreau_grad_worked_examples() {
        let h = L1Norm::new(1.0, 1, 1).unwrap();
        assert_relative_eq!(moreau_grad(&h, &scalar(2.0), 1.0).unwrap()[(0, 0)], 1.0);
        assert_relative_eq!(moreau_grad(&h, &scalar(0.3), 0.5).unwrap()[(0, 0)], 0.6);
    }

    #[test]
    fn moreau_grad_matches_finite_differences() {
        let h = L1Norm::new(0.7, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let step = 1e-6;
        for _ in 0..200 {
            let y = crate::rand_util::standard_normal_matrix(2, 2, &mut rng);
            let mu = 0.1 + rng.random::<f64>();
            let g = moreau_grad(&h, &y, mu).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[(i, j)] += step;
                    ym[(i, j)] -= step;
                    let fd = (moreau_value(&h, &yp, mu).unwrap()
                        - moreau_value(&h, &ym, mu).unwrap())
                        / (2.0 * step);
                    assert!(
                        (fd - g[(i, j)]).abs() <= 1e-4,
                        "fd {fd} vs grad {}",
                        g[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn moreau_gradient_bounds() {
        // ||grad h_mu(y)|| <= ell_h and ||y - prox(y)|| <= mu ell_h.
        let h = L1Norm::new(0.9, 4, 3).unwrap();
        let ell = h.lipschitz();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..500 {
            let y = crate::rand_util::standard_normal_matrix(4, 3, &mut rng);
            let mu = 0.05 + 2.0 * rng.random::<f64>();
            let g = moreau_grad(&h, &y, mu).unwrap();
            assert!(g.norm() <= ell + 1e-12);
            let p = h.prox(&y, mu);
            assert!((&y - p).norm() <= mu * ell + 1e-12);
        }
    }

    #[test]
    fn envelope_ordering_equal_parameters_is_tight() {
        let h = L1Norm::new(1.0, 1, 1).unwrap();
        assert!(check_envelope_ordering(&h, &scalar(3.0), 0.8, 0.8).unwrap());
    }

    #[test]
    fn envelope_ordering_worked_example() {
        // y = 5, mu1 = 1, mu2 = 0.5: h_1(5) = 4.5, h_0.5(5) = 4.75,
        // bound = 4.5 + 0.5 * (0.5/0.5) * 1 * 1 = 5.0
        let h = L1Norm::new(1.0, 1, 1).unwrap();
        let y = scalar(5.0);
        assert_relative_eq!(moreau_value(&h, &y, 1.0).unwrap(), 4.5);
        assert_relative_eq!(moreau_value(&h, &y, 0.5).unwrap(), 4.75);
        assert!(check_envelope_ordering(&h, &y, 1.0, 0.5).unwrap());
    }

    #[test]
    fn envelope_ordering_rejects_swapped_parameters() {
        let h = L1Norm::new(1.0, 1, 1).unwrap();
        assert!(check_envelope_ordering(&h, &scalar(1.0), 0.5, 1.0).is_err());
    }

    #[test]
    fn envelope_ordering_random_sweep() {
        let h = L1Norm::new(0.6, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..1000 {
            let y = crate::rand_util::standard_normal_matrix(2, 3, &mut rng);
            let a = 0.05 + 2.0 * rng.random::<f64>();
            let b = 0.05 + 2.0 * rng.random::<f64>();
            let (mu1, mu2) = if a >= b { (a, b) } else { (b, a) };
            assert!(check_envelope_ordering(&h, &y, mu1, mu2).unwrap());
        }
    }

    #[test]
    fn prox_is_firmly_nonexpansive() {
        let h = L1Norm::new(1.3, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..200 {
            let a = crate::rand_util::standard_normal_matrix(3, 3, &mut rng);
            let b = crate::rand_util::standard_normal_matrix(3, 3, &mut rng);
            let mu = 0.05 + rng.random::<f64>();
            let pa = h.prox(&a, mu);
            let pb = h.prox(&b, mu);
            assert!((pa - pb).norm() <= (&a - &b).norm() + 1e-12);
        }
    }

    #[test]
    fn mu_validation() {
        let h = WeaklyConvexL1::new(1.0, 0.5, 2, 2, 2.0).unwrap();
        assert!(moreau_value(&h, &scalar(1.0), 2.5).is_err()); // mu >= 1/rho
        assert!(moreau_value(&h, &scalar(1.0), -0.1).is_err());
        assert!(MoreauParams::new(1.5, &h).is_err()); // rho mu > 1/2
        assert!(MoreauParams::new(0.9, &h).is_ok());
    }

    #[test]
    fn weakly_convex_l1_prox_matches_grid_oracle() {
        let h = WeaklyConvexL1::new(0.8, 0.5, 1, 1, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..20 {
            let y = rng.random::<f64>() * 4.0 - 2.0;
            let mu = 0.05 + 0.9 * rng.random::<f64>();
            let closed = h.prox(&scalar(y), mu)[(0, 0)];
            let mut best = f64::INFINITY;
            let mut arg = 0.0;
            for i in 0..120_000 {
                let z = -6.0 + i as f64 * 1e-4;
                let obj = 0.8 * z.abs() - 0.25 * z * z + (z - y) * (z - y) / (2.0 * mu);
                if obj < best {
                    best = obj;
                    arg = z;
                }
            }
            assert!((closed - arg).abs() <= 1e-3, "closed {closed} vs {arg}");
        }
    }

    #[test]
    fn weakly_convex_l1_gradient_matches_finite_differences() {
        let h = WeaklyConvexL1::new(0.7, 0.4, 2, 2, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let step = 1e-6;
        for _ in 0..100 {
            let y = crate::rand_util::standard_normal_matrix(2, 2, &mut rng);
            let mu = 0.05 + rng.random::<f64>();
            let g = moreau_grad(&h, &y, mu).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[(i, j)] += step;
                    ym[(i, j)] -= step;
                    let fd = (moreau_value(&h, &yp, mu).unwrap()
                        - moreau_value(&h, &ym, mu).unwrap())
                        / (2.0 * step);
                    assert!((fd - g[(i, j)]).abs() <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn subgradient_selector_is_zero_on_zero_entries() {
        let h = L1Norm::new(2.0, 2, 2).unwrap();
        let y = DMatrix::from_row_slice(2, 2, &[0.0, 1.5, -0.2, 0.0]);
        let g = h.subgradient(&y);
        assert_eq!(g[(0, 0)], 0.0);
        assert_eq!(g[(0, 1)], 2.0);
        assert_eq!(g[(1, 0)], -2.0);
        assert_eq!(g[(1, 1)], 0.0);
    }

    proptest::proptest! {
        #[test]
        fn prox_l1_optimality_never_beaten_by_grid(
            y in -3.0f64..3.0,
            mu in 0.05f64..2.0,
            lambda in 0.05f64..2.0,
        ) {
            let z = prox_l1(&scalar(y), mu, lambda)[(0, 0)];
            let obj = |v: f64| lambda * v.abs() + (v - y) * (v - y) / (2.0 * mu);
            let best = obj(z);
            for i in 0..600 {
                let v = -3.0 + i as f64 * 0.01;
                proptest::prop_assert!(best <= obj(v) + 1e-12);
            }
        }
    }
}
