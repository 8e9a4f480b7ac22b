//! Model selection and fit-quality metrics: AIC, BIC, DIC, CPO and the
//! pseudomarginal likelihood, R-MISE, allocation RMSE, posterior summaries,
//! and covariance eigen-analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::build_basis;
use crate::chain::ChainStore;
use crate::data::{BasisSet, FunctionalDataset};
use crate::error::{Error, Result};
use crate::identifiability::feature_permutations;
use crate::model::{
    integrated_curve_ln_pdf, loglik_conditional, mean_curve, pointwise_integrated_ln_pdf,
};
use crate::numeric::{log_sum_exp, quantile, trapezoid};

/// Plug-in parameter count d used by AIC and BIC.
pub fn param_count_d(n: usize, p: usize, k: usize, m: usize, r: usize) -> usize {
    (n + p) * k + 2 * m * k * p + 4 * k + (n + k) * m + 2 + p * r * k + k * r
}

fn basis_for(chain: &ChainStore, data: &FunctionalDataset) -> Result<BasisSet> {
    BasisSet::for_dataset(&chain.basis_spec, data)
}

fn plug_in_loglik(chain: &ChainStore, data: &FunctionalDataset) -> Result<f64> {
    let basis = basis_for(chain, data)?;
    let mean_state = chain.posterior_mean_state()?;
    loglik_conditional(&mean_state, data, &chain.dims, &basis)
}

/// BIC = 2 log L(posterior-mean parameters) - d log(total points).
/// Larger is better under the selection rule used here.
pub fn compute_bic(chain: &ChainStore, data: &FunctionalDataset) -> Result<f64> {
    let d = chain_param_count(chain);
    let ll = plug_in_loglik(chain, data)?;
    Ok(2.0 * ll - d as f64 * (data.total_points() as f64).ln())
}

/// AIC = -2 log L(posterior-mean parameters) + 2 d. Smaller is better.
pub fn compute_aic(chain: &ChainStore, data: &FunctionalDataset) -> Result<f64> {
    let d = chain_param_count(chain);
    let ll = plug_in_loglik(chain, data)?;
    Ok(-2.0 * ll + 2.0 * d as f64)
}

fn chain_param_count(chain: &ChainStore) -> usize {
    param_count_d(
        chain.dims.n_obs,
        chain.dims.n_basis,
        chain.dims.n_features,
        chain.dims.n_components,
        chain.dims.n_covariates,
    )
}

/// DIC (the multimodal-robust variant): -4 E[log f(Y|Theta)] + 2 log f^(Y),
/// both terms built from the MCMC-averaged pointwise integrated densities,
/// which condition on the allocations but marginalize the latent scores.
pub fn compute_dic(chain: &ChainStore, data: &FunctionalDataset) -> Result<f64> {
    if chain.samples.is_empty() {
        return Err(Error::validation("chain has no stored samples"));
    }
    let basis = basis_for(chain, data)?;
    let dims = &chain.dims;
    let l_samples = chain.samples.len();
    let mut expected_loglik = 0.0;
    let mut log_fhat_total = 0.0;
    // iterate point-major so each point's mixture average is a single pass
    for i in 0..data.n_obs() {
        for l in 0..data.curves[i].len() {
            let mut lps = Vec::with_capacity(l_samples);
            for s in &chain.samples {
                let state = s.to_state(dims);
                lps.push(pointwise_integrated_ln_pdf(&state, data, dims, &basis, i, l));
            }
            expected_loglik += lps.iter().sum::<f64>() / l_samples as f64;
            log_fhat_total += log_sum_exp(&lps) - (l_samples as f64).ln();
        }
    }
    Ok(-4.0 * expected_loglik + 2.0 * log_fhat_total)
}

/// Conditional predictive ordinates via the harmonic-mean identity, using
/// the integrated (chi-marginalized) per-curve densities, plus the log
/// pseudomarginal likelihood.
pub fn compute_cpo(chain: &ChainStore, data: &FunctionalDataset) -> Result<CpoReport> {
    if chain.samples.is_empty() {
        return Err(Error::validation("chain has no stored samples"));
    }
    let basis = basis_for(chain, data)?;
    let dims = &chain.dims;
    let l_samples = chain.samples.len() as f64;
    let mut log_cpo = Vec::with_capacity(data.n_obs());
    for i in 0..data.n_obs() {
        let mut neg_lps = Vec::with_capacity(chain.samples.len());
        for s in &chain.samples {
            let state = s.to_state(dims);
            neg_lps.push(-integrated_curve_ln_pdf(&state, data, dims, &basis, i)?);
        }
        // log CPO_i = log L - logsumexp(-log p)
        log_cpo.push(l_samples.ln() - log_sum_exp(&neg_lps));
    }
    let log_pml = log_cpo.iter().sum();
    Ok(CpoReport { log_cpo, log_pml })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoReport {
    pub log_cpo: Vec<f64>,
    pub log_pml: f64,
}

/// Relative mean integrated squared error between a true curve and an
/// estimate on a shared grid, as a percentage:
/// 100 * integral (f - fhat)^2 / integral f^2.
pub fn rmise(grid: &[f64], truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if grid.len() != truth.len() || grid.len() != estimate.len() {
        return Err(Error::shape("R-MISE inputs must share one grid"));
    }
    let sq_err: Vec<f64> = truth
        .iter()
        .zip(estimate)
        .map(|(f, g)| (f - g) * (f - g))
        .collect();
    let sq_truth: Vec<f64> = truth.iter().map(|f| f * f).collect();
    let denom = trapezoid(grid, &sq_truth);
    if denom <= 0.0 {
        return Err(Error::validation("R-MISE denominator integral must be positive"));
    }
    Ok(100.0 * trapezoid(grid, &sq_err) / denom)
}

/// R-MISE for covariate-adjusted mean surfaces: the double integral over
/// (t, x) by iterated trapezoid rule. `truth` and `estimate` are indexed
/// `[x_index][t_index]`.
pub fn rmise_surface(
    t_grid: &[f64],
    x_grid: &[f64],
    truth: &[Vec<f64>],
    estimate: &[Vec<f64>],
) -> Result<f64> {
    if truth.len() != x_grid.len() || estimate.len() != x_grid.len() {
        return Err(Error::shape("surface rows must match the x grid"));
    }
    let mut err_rows = Vec::with_capacity(x_grid.len());
    let mut truth_rows = Vec::with_capacity(x_grid.len());
    for (f_row, g_row) in truth.iter().zip(estimate) {
        if f_row.len() != t_grid.len() || g_row.len() != t_grid.len() {
            return Err(Error::shape("surface columns must match the t grid"));
        }
        let sq_err: Vec<f64> = f_row
            .iter()
            .zip(g_row)
            .map(|(f, g)| (f - g) * (f - g))
            .collect();
        let sq_truth: Vec<f64> = f_row.iter().map(|f| f * f).collect();
        err_rows.push(trapezoid(t_grid, &sq_err));
        truth_rows.push(trapezoid(t_grid, &sq_truth));
    }
    let denom = trapezoid(x_grid, &truth_rows);
    if denom <= 0.0 {
        return Err(Error::validation("R-MISE denominator integral must be positive"));
    }
    Ok(100.0 * trapezoid(x_grid, &err_rows) / denom)
}

/// Entrywise allocation RMSE after searching all feature permutations.
/// Returns the RMSE and the best permutation (output column j of the
/// estimate is compared against truth column perm[j]... the permutation is
/// applied to the estimate's columns).
pub fn rmse_alloc(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<(f64, Vec<usize>)> {
    if truth.shape() != estimate.shape() {
        return Err(Error::shape("allocation matrices must share a shape"));
    }
    let k = truth.ncols();
    let n = truth.nrows();
    let perms = feature_permutations(k)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in perms {
        let mut sq = 0.0;
        for i in 0..n {
            for j in 0..k {
                let d = estimate[(i, perm[j])] - truth[(i, j)];
                sq += d * d;
            }
        }
        let rmse = (sq / (n * k) as f64).sqrt();
        if best.as_ref().map_or(true, |(b, _)| rmse < *b) {
            best = Some((rmse, perm));
        }
    }
    Ok(best.expect("permutation list is never empty"))
}

/// Per-iteration covariance surfaces C(s, t) between features k1 and k2 on
/// a grid, plus eigenvalue draws when k1 == k2.
pub struct CovarianceEigen {
    /// One surface per stored iteration.
    pub surfaces: Vec<DMatrix<f64>>,
    /// Sorted (descending) eigenvalues per iteration; present when k1 == k2.
    pub eigenvalues: Option<Vec<Vec<f64>>>,
}

pub fn covariance_eigen(
    chain: &ChainStore,
    grid: &[f64],
    k1: usize,
    k2: usize,
) -> Result<CovarianceEigen> {
    let bm = build_basis(&chain.basis_spec, grid)?;
    let s_t = bm.transposed();
    let mut surfaces = Vec::with_capacity(chain.samples.len());
    let mut eigenvalues = (k1 == k2).then(Vec::new);
    for sample in &chain.samples {
        let mut outer = DMatrix::zeros(chain.dims.n_basis, chain.dims.n_basis);
        for m in 0..chain.dims.n_components {
            outer += &sample.phi[k1][m] * sample.phi[k2][m].transpose();
        }
        let surface = &s_t * outer * bm.values.clone();
        if let Some(eig) = eigenvalues.as_mut() {
            let sym = (&surface + surface.transpose()) * 0.5;
            let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().cloned().collect();
            vals.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
            eig.push(vals);
        }
        surfaces.push(surface);
    }
    Ok(CovarianceEigen {
        surfaces,
        eigenvalues,
    })
}

/// Pointwise posterior median and central 95% band of one feature's mean
/// curve at covariates `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn posterior_summary(
    chain: &ChainStore,
    grid: &[f64],
    feature: usize,
    x: &DVector<f64>,
) -> Result<CurveSummary> {
    if chain.samples.is_empty() {
        return Err(Error::validation("chain has no stored samples"));
    }
    if feature >= chain.dims.n_features {
        return Err(Error::shape("feature index out of range"));
    }
    let bm = build_basis(&chain.basis_spec, grid)?;
    let n_grid = grid.len();
    let mut draws = vec![Vec::with_capacity(chain.samples.len()); n_grid];
    for sample in &chain.samples {
        let state = sample.to_state(&chain.dims);
        let curve = mean_curve(&state, &chain.dims, feature, x, &bm)?;
        for (g, v) in curve.iter().enumerate() {
            draws[g].push(*v);
        }
    }
    let mut median = Vec::with_capacity(n_grid);
    let mut lower = Vec::with_capacity(n_grid);
    let mut upper = Vec::with_capacity(n_grid);
    for d in &draws {
        median.push(quantile(d, 0.5));
        lower.push(quantile(d, 0.025));
        upper.push(quantile(d, 0.975));
    }
    Ok(CurveSummary {
        grid: grid.to_vec(),
        median,
        lower,
        upper,
    })
}

/// Posterior summaries, information criteria, and predictive diagnostics
/// for one fitted chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub aic: f64,
    pub bic: f64,
    pub dic: f64,
    pub log_pml: f64,
    pub log_cpo: Vec<f64>,
    pub param_count: usize,
    /// Plug-in conditional log likelihood at the posterior mean.
    pub plug_in_loglik: f64,
    /// Posterior-mean allocation matrix, row per observation.
    pub mean_alloc: Vec<Vec<f64>>,
    /// Mean-curve summaries per feature, one list per requested covariate
    /// vector.
    pub mean_curves: Vec<Vec<CurveSummary>>,
    /// Posterior median of the leading covariance eigenvalues per feature.
    pub leading_eigenvalues: Vec<Vec<f64>>,
    /// Acceptance rates of the Metropolis-Hastings blocks.
    pub acceptance_rates: Vec<(String, f64)>,
}

/// Assemble the full report. `covariate_values` holds the covariate vectors
/// at which mean-curve bands are requested; `grid` is the evaluation grid.
pub fn fit_report(
    chain: &ChainStore,
    data: &FunctionalDataset,
    grid: &[f64],
    covariate_values: &[Vec<f64>],
    n_eigen: usize,
) -> Result<FitReport> {
    let dims = &chain.dims;
    let cpo = compute_cpo(chain, data)?;
    let mean_state = chain.posterior_mean_state()?;
    let basis = basis_for(chain, data)?;
    let plug_in = loglik_conditional(&mean_state, data, dims, &basis)?;

    let mut mean_curves = Vec::with_capacity(covariate_values.len());
    for x in covariate_values {
        if x.len() != dims.n_covariates {
            return Err(Error::shape(format!(
                "covariate vector has length {}, expected {}",
                x.len(),
                dims.n_covariates
            )));
        }
        let xv = DVector::from_row_slice(x);
        let mut per_feature = Vec::with_capacity(dims.n_features);
        for k in 0..dims.n_features {
            per_feature.push(posterior_summary(chain, grid, k, &xv)?);
        }
        mean_curves.push(per_feature);
    }

    let mut leading_eigenvalues = Vec::with_capacity(dims.n_features);
    for k in 0..dims.n_features {
        let eig = covariance_eigen(chain, grid, k, k)?;
        let draws = eig.eigenvalues.expect("diagonal surface has eigenvalues");
        let take = n_eigen.min(grid.len());
        let mut medians = Vec::with_capacity(take);
        for j in 0..take {
            let vals: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            medians.push(quantile(&vals, 0.5));
        }
        leading_eigenvalues.push(medians);
    }

    let mean_alloc = (0..dims.n_obs)
        .map(|i| {
            (0..dims.n_features)
                .map(|k| mean_state.alloc[(i, k)])
                .collect()
        })
        .collect();

    let acceptance_rates = vec![
        ("a1".to_string(), chain.accept.a1.rate()),
        ("a2".to_string(), chain.accept.a2.rate()),
        ("alloc".to_string(), chain.accept.alloc.rate()),
        ("pi".to_string(), chain.accept.pi.rate()),
        ("alpha3".to_string(), chain.accept.alpha3.rate()),
        ("alpha3".to_string(), chain.accept.alpha3.rate()),
        ("tempered".to_string(), chain.accept.tempered.rate()),
    ];

    Ok(FitReport {
        aic: compute_aic(chain, data)?,
        bic: compute_bic(chain, data)?,
        dic: compute_dic(chain, data)?,
        log_pml: cpo.log_pml,
        log_cpo: cpo.log_cpo,
        param_count: chain_param_count(chain),
        plug_in_loglik: plug_in,
        mean_alloc,
        mean_curves,
        leading_eigenvalues,
        acceptance_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn param_count_matches_documented_example() {
        assert_eq!(param_count_d(50, 8, 2, 3, 1), 396);
    }

    #[test]
    fn param_count_r_zero_drops_last_terms() {
        let with_r = param_count_d(10, 4, 2, 2, 0);
        let manual = (10 + 4) * 2 + 2 * 2 * 2 * 4 + 4 * 2 + (10 + 2) * 2 + 2;
        assert_eq!(with_r, manual);
    }

    #[test]
    fn param_count_increment_in_n_is_k_plus_m() {
        let base = param_count_d(40, 8, 3, 2, 1);
        let plus = param_count_d(41, 8, 3, 2, 1);
        assert_eq!(plus - base, 3 + 2);
    }

    #[test]
    fn rmise_reference_points() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let f: Vec<f64> = grid.iter().map(|t| 1.0 + t).collect();
        // exact recovery
        assert_abs_diff_eq!(rmise(&grid, &f, &f).unwrap(), 0.0, epsilon = 1e-12);
        // zero estimate: numerator equals denominator
        let zero = vec![0.0; grid.len()];
        assert_abs_diff_eq!(rmise(&grid, &f, &zero).unwrap(), 100.0, epsilon = 1e-9);
        // doubled estimate: (f - 2f)^2 = f^2
        let double: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        assert_abs_diff_eq!(rmise(&grid, &f, &double).unwrap(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn rmise_is_scale_free() {
        let grid: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let f: Vec<f64> = grid.iter().map(|t| (3.0 * t).sin() + 2.0).collect();
        let g: Vec<f64> = grid.iter().map(|t| (3.0 * t).sin() + 1.5).collect();
        let base = rmise(&grid, &f, &g).unwrap();
        let fs: Vec<f64> = f.iter().map(|v| -7.0 * v).collect();
        let gs: Vec<f64> = g.iter().map(|v| -7.0 * v).collect();
        let scaled = rmise(&grid, &fs, &gs).unwrap();
        assert_abs_diff_eq!(base, scaled, epsilon = 1e-9);
    }

    #[test]
    fn rmse_alloc_handles_permutation() {
        let truth = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.2, 0.8, 0.6, 0.4]);
        let mut swapped = truth.clone();
        swapped.swap_columns(0, 1);
        let (err, perm) = rmse_alloc(&truth, &swapped).unwrap();
        assert_abs_diff_eq!(err, 0.0, epsilon = 1e-15);
        assert_eq!(perm, vec![1, 0]);
        let (same, _) = rmse_alloc(&truth, &truth).unwrap();
        assert_abs_diff_eq!(same, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rmse_alloc_hand_computed_fixture() {
        let truth = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let est = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.1, 0.9]);
        // identity permutation: sq err = (0.04 + 0.04 + 0.01 + 0.01) = 0.10
        let (err, perm) = rmse_alloc(&truth, &est).unwrap();
        assert_eq!(perm, vec![0, 1]);
        assert_abs_diff_eq!(err, (0.10f64 / 4.0).sqrt(), epsilon = 1e-12);
    }
}
