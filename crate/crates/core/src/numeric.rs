//! Numerical helpers shared across the sampler and diagnostics: log
//! densities, truncated-normal proposals, precision-parameterized Gaussian
//! draws, and quantile utilities.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// log Gamma(x; shape, rate), full density.
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// log InverseGamma(x; shape, rate); if G ~ Gamma(shape, rate) then 1/G has
/// this density.
pub fn ln_inv_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// log N(x; mean, var).
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - 0.5 * (x - mean) * (x - mean) / var
}

/// log Dirichlet(x; alpha), full density including the multivariate beta
/// normalizer.
pub fn ln_dirichlet_pdf(x: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let mut out = ln_gamma(alpha.sum());
    for (xk, ak) in x.iter().zip(alpha.iter()) {
        out -= ln_gamma(*ak);
        out += (*ak - 1.0) * xk.ln();
    }
    out
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// log density of a normal truncated to (0, +inf).
pub fn ln_truncated_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let sd = var.sqrt();
    ln_normal_pdf(x, mean, var) - normal_cdf(mean / sd).ln()
}

/// Draw from a normal truncated to (0, +inf) by rejection; the proposals in
/// this crate always center on a strictly positive current value, so the
/// acceptance rate stays above one half.
pub fn sample_truncated_normal<R: Rng>(rng: &mut R, mean: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + sd * z;
        if x > 0.0 {
            return x;
        }
    }
}

/// Draw from Gamma(shape, rate).
pub fn sample_gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    GammaDist::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// Draw from InverseGamma(shape, rate).
pub fn sample_inv_gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    1.0 / sample_gamma(rng, shape, rate)
}

/// Draw a Dirichlet vector; `alpha` entries must be strictly positive.
pub fn sample_dirichlet<R: Rng>(rng: &mut R, alpha: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(alpha.len());
    let mut total = 0.0;
    for (k, a) in alpha.iter().enumerate() {
        let g = GammaDist::new(*a, 1.0)
            .expect("dirichlet concentration must be positive")
            .sample(rng);
        out[k] = g;
        total += g;
    }
    out /= total;
    out
}

/// Gaussian block parameterized by its precision matrix `prec` and linear
/// term `lin`; the distribution is N(prec^-1 lin, prec^-1).
pub struct GaussianBlock {
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
}

impl GaussianBlock {
    /// Factor the precision matrix. On Cholesky failure, retries once with a
    /// small diagonal jitter (the random-walk penalty alone is singular).
    pub fn new(mut prec: DMatrix<f64>, lin: &DVector<f64>) -> Result<Self> {
        let chol = match Cholesky::new(prec.clone()) {
            Some(c) => c,
            None => {
                let p = prec.nrows();
                let jitter = 1e-10 * (prec.trace() / p as f64).max(1.0);
                for i in 0..p {
                    prec[(i, i)] += jitter;
                }
                Cholesky::new(prec).ok_or_else(|| {
                    Error::LinAlg("conditional precision not positive definite".into())
                })?
            }
        };
        let mean = chol.solve(lin);
        Ok(GaussianBlock { chol, mean })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// One draw: mean + L^-T z with z standard normal and prec = L L^T.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let p = self.mean.len();
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let l_t = self.chol.l().transpose();
        let shift = l_t
            .solve_upper_triangular(&z)
            .expect("cholesky factor is invertible");
        &self.mean + shift
    }

    /// Full log density at `x`, including the normalizing constant.
    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let p = self.mean.len() as f64;
        let diff = x - &self.mean;
        let half_ln_det_prec: f64 = self.chol.l().diagonal().iter().map(|d| d.ln()).sum();
        let quad = (self.chol.l().transpose() * &diff).norm_squared();
        -0.5 * p * LN_2PI + half_ln_det_prec - 0.5 * quad
    }
}

/// dst += alpha * src for same-shape matrices.
pub fn mat_axpy(dst: &mut DMatrix<f64>, alpha: f64, src: &DMatrix<f64>) {
    dst.zip_apply(src, |d, s| *d += alpha * s);
}

/// log sum_i exp(x_i), guarded against empty input and -inf entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Type-7 (linear interpolation) quantile of `xs` at probability `q`.
/// Sorts a copy; fine for the posterior-summary sizes used here.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile probability out of range");
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Trapezoid-rule integral of `values` over `grid` (both length n >= 2,
/// grid strictly increasing).
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    assert_eq!(grid.len(), values.len());
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn gamma_pdf_matches_statrs() {
        use statrs::distribution::{Continuous, Gamma};
        let d = Gamma::new(2.5, 1.7).unwrap();
        assert_abs_diff_eq!(ln_gamma_pdf(0.9, 2.5, 1.7), d.ln_pdf(0.9), epsilon = 1e-12);
    }

    #[test]
    fn dirichlet_pdf_uniform_is_log_gamma_k() {
        // Dir(1,1,1) density is Gamma(3) = 2 everywhere on the simplex.
        let x = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let alpha = DVector::from_element(3, 1.0);
        assert_abs_diff_eq!(ln_dirichlet_pdf(&x, &alpha), 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn gaussian_block_roundtrip() {
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lin = DVector::from_vec(vec![1.0, -1.0]);
        let block = GaussianBlock::new(prec.clone(), &lin).unwrap();
        // mean solves prec * mean = lin
        let back = &prec * block.mean();
        assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back[1], -1.0, epsilon = 1e-12);
        // density at the mean equals the normalizer
        let at_mean = block.ln_pdf(block.mean());
        let det: f64 = prec.determinant();
        assert_abs_diff_eq!(at_mean, -LN_2PI + 0.5 * det.ln(), epsilon = 1e-12);
    }

    #[test]
    fn truncated_normal_sampler_stays_positive() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..1000 {
            assert!(sample_truncated_normal(&mut rng, 0.3, 0.5) > 0.0);
        }
    }

    #[test]
    fn quantile_type7_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile(&xs, 0.5), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile(&xs, 0.25), 1.75, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile(&xs, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile(&xs, 1.0), 4.0, epsilon = 1e-15);
    }
}
