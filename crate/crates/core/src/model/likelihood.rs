//! Mean structure, mixed membership covariance, and the conditional /
//! integrated likelihoods.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::basis::BasisMatrix;
use crate::data::{BasisSet, FunctionalDataset};
use crate::error::{Error, Result};
use crate::numeric::LN_2PI;

use super::{validate_simplex, ModelDims, ParameterState};

/// Feature mean curve S'(nu_k + eta_k x) on the grid of `basis`.
pub fn mean_curve(
    state: &ParameterState,
    dims: &ModelDims,
    k: usize,
    x: &DVector<f64>,
    basis: &BasisMatrix,
) -> Result<DVector<f64>> {
    if x.len() != dims.n_covariates {
        return Err(Error::shape(format!(
            "covariate vector has length {}, expected R = {}",
            x.len(),
            dims.n_covariates
        )));
    }
    let coef = &state.nu[k] + &state.eta[k] * x;
    Ok(basis.values.transpose() * coef)
}

/// Error-free mixed membership covariance V(t, z) on the grid of `basis`
/// for the base model (no covariate-dependent covariance).
pub fn mixed_cov(
    state: &ParameterState,
    dims: &ModelDims,
    z: &DVector<f64>,
    basis: &BasisMatrix,
) -> Result<DMatrix<f64>> {
    mixed_cov_with(state, dims, z, None, basis)
}

/// Mixed membership covariance with covariate-dependent pseudo-eigenfunctions
/// phi_km + xi_km x. Falls back to the base covariance when the extension is
/// absent.
pub fn mixed_cov_ext(
    state: &ParameterState,
    dims: &ModelDims,
    z: &DVector<f64>,
    x: &DVector<f64>,
    basis: &BasisMatrix,
) -> Result<DMatrix<f64>> {
    mixed_cov_with(state, dims, z, Some(x), basis)
}

fn mixed_cov_with(
    state: &ParameterState,
    dims: &ModelDims,
    z: &DVector<f64>,
    x: Option<&DVector<f64>>,
    basis: &BasisMatrix,
) -> Result<DMatrix<f64>> {
    if z.len() != dims.n_features {
        return Err(Error::shape("allocation vector has wrong length"));
    }
    validate_simplex(z, "allocation vector")?;
    let n = basis.num_points();
    let mut v = DMatrix::zeros(n, n);
    // V = sum_m (S' w_m)(S' w_m)' with w_m = sum_k z_k phi~_km.
    for m in 0..dims.n_components {
        let mut w = DVector::zeros(dims.n_basis);
        for k in 0..dims.n_features {
            let phi = match x {
                Some(xv) => state.effective_phi(k, m, xv),
                None => state.phi[k][m].clone(),
            };
            w.axpy(z[k], &phi, 1.0);
        }
        let curve = basis.values.transpose() * w;
        v.syger(1.0, &curve, &curve, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for i in 0..n {
        for j in (i + 1)..n {
            v[(i, j)] = v[(j, i)];
        }
    }
    Ok(v)
}

/// Fitted mean of curve `i` under the conditional (chi-inclusive) model:
/// sum_k Z_ik (S'(nu_k + eta_k x_i) + sum_m chi_im S' phi~_km).
pub fn fitted_curve(
    state: &ParameterState,
    data: &FunctionalDataset,
    dims: &ModelDims,
    basis: &BasisSet,
    i: usize,
) -> DVector<f64> {
    let x = data.covariates(i);
    let s_rows = &basis.rows[i];
    let mut coef = DVector::zeros(dims.n_basis);
    for k in 0..dims.n_features {
        let z = state.alloc[(i, k)];
        coef.axpy(z, &state.nu[k], 1.0);
        if dims.n_covariates > 0 {
            coef.axpy(z, &(&state.eta[k] * &x), 1.0);
        }
        for m in 0..dims.n_components {
            let phi = state.effective_phi(k, m, &x);
            coef.axpy(z * state.chi[(i, m)], &phi, 1.0);
        }
    }
    s_rows * coef
}

/// Log likelihood of the full conditional model (chi included): independent
/// Gaussian noise around the fitted curves.
pub fn loglik_conditional(
    state: &ParameterState,
    data: &FunctionalDataset,
    dims: &ModelDims,
    basis: &BasisSet,
) -> Result<f64> {
    if !(state.sigma2 > 0.0) {
        return Err(Error::validation("sigma2 must be positive"));
    }
    let mut out = 0.0;
    for i in 0..data.n_obs() {
        let fit = fitted_curve(state, data, dims, basis, i);
        let resid = &data.curves[i].values - fit;
        let n_i = resid.len() as f64;
        out += -0.5 * n_i * (LN_2PI + state.sigma2.ln())
            - 0.5 * resid.norm_squared() / state.sigma2;
    }
    Ok(out)
}

/// Log density of curve `i` under the integrated (chi-marginalized) model:
/// N(mean_i, V(t_i, z_i) + sigma2 I). A Cholesky failure triggers one retry
/// with jitter 1e-10 * trace / n added to the diagonal, then errors.
pub fn integrated_curve_ln_pdf(
    state: &ParameterState,
    data: &FunctionalDataset,
    dims: &ModelDims,
    basis: &BasisSet,
    i: usize,
) -> Result<f64> {
    let x = data.covariates(i);
    let s_rows = &basis.rows[i];
    let n_i = s_rows.nrows();

    let mut mean_coef = DVector::zeros(dims.n_basis);
    for k in 0..dims.n_features {
        let z = state.alloc[(i, k)];
        mean_coef.axpy(z, &state.nu[k], 1.0);
        if dims.n_covariates > 0 {
            mean_coef.axpy(z, &(&state.eta[k] * &x), 1.0);
        }
    }
    let resid = &data.curves[i].values - s_rows * mean_coef;

    let mut cov = DMatrix::zeros(n_i, n_i);
    for m in 0..dims.n_components {
        let mut w = DVector::zeros(dims.n_basis);
        for k in 0..dims.n_features {
            let phi = state.effective_phi(k, m, &x);
            w.axpy(state.alloc[(i, k)], &phi, 1.0);
        }
        let curve = s_rows * w;
        cov.syger(1.0, &curve, &curve, 1.0);
    }
    for r in 0..n_i {
        for c in (r + 1)..n_i {
            cov[(r, c)] = cov[(c, r)];
        }
        cov[(r, r)] += state.sigma2;
    }

    let chol = match Cholesky::new(cov.clone()) {
        Some(c) => c,
        None => {
            let jitter = 1e-10 * cov.trace() / n_i as f64;
            for r in 0..n_i {
                cov[(r, r)] += jitter;
            }
            Cholesky::new(cov).ok_or_else(|| {
                Error::LinAlg(format!(
                    "integrated covariance for curve {i} not positive definite after jitter retry"
                ))
            })?
        }
    };
    let ln_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let solved = chol.solve(&resid);
    Ok(-0.5 * (n_i as f64 * LN_2PI + ln_det + resid.dot(&solved)))
}

/// Log likelihood of the integrated (chi-marginalized) model across curves.
pub fn loglik_integrated(
    state: &ParameterState,
    data: &FunctionalDataset,
    dims: &ModelDims,
    basis: &BasisSet,
) -> Result<f64> {
    let mut out = 0.0;
    for i in 0..data.n_obs() {
        out += integrated_curve_ln_pdf(state, data, dims, basis, i)?;
    }
    Ok(out)
}

/// Pointwise integrated log density of y_il: the marginal of the integrated
/// model at one time point, a univariate normal with variance
/// sum_m (sum_k Z_ik phi~_km' B(t_il))^2 + sigma2. Conditions on Z but not
/// on chi; used by the DIC pointwise terms.
pub fn pointwise_integrated_ln_pdf(
    state: &ParameterState,
    data: &FunctionalDataset,
    dims: &ModelDims,
    basis: &BasisSet,
    i: usize,
    l: usize,
) -> f64 {
    let x = data.covariates(i);
    let b_row = basis.rows[i].row(l);
    let mut mean = 0.0;
    for k in 0..dims.n_features {
        let z = state.alloc[(i, k)];
        mean += z * b_row.transpose().dot(&state.nu[k]);
        if dims.n_covariates > 0 {
            mean += z * b_row.transpose().dot(&(&state.eta[k] * &x));
        }
    }
    let mut var = state.sigma2;
    for m in 0..dims.n_components {
        let mut w = 0.0;
        for k in 0..dims.n_features {
            let phi = state.effective_phi(k, m, &x);
            w += state.alloc[(i, k)] * b_row.transpose().dot(&phi);
        }
        var += w * w;
    }
    let y = data.curves[i].values[l];
    -0.5 * (LN_2PI + var.ln()) - 0.5 * (y - mean) * (y - mean) / var
}
