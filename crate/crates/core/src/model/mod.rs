//! Model parameters, likelihood evaluations, and the log prior/posterior.

mod likelihood;
mod prior;

pub use likelihood::{
    fitted_curve, integrated_curve_ln_pdf, loglik_conditional, loglik_integrated, mean_curve,
    mixed_cov, mixed_cov_ext, pointwise_integrated_ln_pdf,
};
pub use prior::{log_posterior, log_prior};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const SIMPLEX_TOL: f64 = 1e-12;

/// Core model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Number of observed curves N.
    pub n_obs: usize,
    /// Number of latent features K.
    pub n_features: usize,
    /// Number of basis functions P.
    pub n_basis: usize,
    /// Number of pseudo-eigencomponents M.
    pub n_components: usize,
    /// Number of covariates R (0 recovers the unadjusted model).
    pub n_covariates: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 || self.n_features == 0 || self.n_basis == 0 || self.n_components == 0 {
            return Err(Error::config(
                "N, K, P, and M must all be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Fixed hyperparameters and Metropolis-Hastings proposal scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub nu_gamma: f64,
    pub alpha_nu: f64,
    pub beta_nu: f64,
    pub alpha_eta: f64,
    pub beta_eta: f64,
    /// Dirichlet weights for pi, length K.
    pub c_pi: Vec<f64>,
    /// Exponential rate for alpha3.
    pub b_alpha3: f64,
    pub alpha0: f64,
    pub beta0: f64,
    /// Truncated-normal proposal scale factors for a1 / a2.
    pub eps1: f64,
    pub eps2: f64,
    /// Dirichlet random-walk concentrations for z rows and pi.
    pub a_z: f64,
    pub a_pi: f64,
    /// Truncated-normal proposal variance for alpha3.
    pub sigma2_alpha3: f64,
}

impl HyperParams {
    /// Weakly informative defaults for a K-feature model.
    pub fn defaults(n_features: usize) -> Self {
        HyperParams {
            alpha1: 2.0,
            beta1: 1.0,
            alpha2: 2.0,
            beta2: 0.5,
            nu_gamma: 3.0,
            alpha_nu: 1.0,
            beta_nu: 1.0,
            alpha_eta: 1.0,
            beta_eta: 1.0,
            c_pi: vec![1.0; n_features],
            b_alpha3: 1.0,
            alpha0: 1.0,
            beta0: 1.0,
            eps1: 0.5,
            eps2: 0.5,
            a_z: 100.0,
            a_pi: 100.0,
            sigma2_alpha3: 0.25,
        }
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        let positives = [
            self.alpha1,
            self.beta1,
            self.alpha2,
            self.beta2,
            self.nu_gamma,
            self.alpha_nu,
            self.beta_nu,
            self.alpha_eta,
            self.beta_eta,
            self.b_alpha3,
            self.alpha0,
            self.beta0,
            self.eps1,
            self.eps2,
            self.a_z,
            self.a_pi,
            self.sigma2_alpha3,
        ];
        if positives.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::validation("all hyperparameters must be positive"));
        }
        if self.alpha2 <= self.beta2 {
            return Err(Error::validation(format!(
                "alpha2 = {} must exceed beta2 = {} for stochastically decreasing component variances",
                self.alpha2, self.beta2
            )));
        }
        if self.c_pi.len() != dims.n_features {
            return Err(Error::shape(format!(
                "c_pi has length {} but K = {}",
                self.c_pi.len(),
                dims.n_features
            )));
        }
        if self.c_pi.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::validation("c_pi entries must be positive"));
        }
        Ok(())
    }

    pub fn c_pi_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.c_pi)
    }
}

/// Covariate-dependent covariance extension: pseudo-eigenfunction slopes
/// xi_km with their own multiplicative gamma process hierarchy, indexed per
/// covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct XiBlock {
    /// `[k][m]`: P x R slope matrix for component m of feature k.
    pub xi: Vec<Vec<DMatrix<f64>>>,
    /// `[k]`: R x M matrix of delta_{xi, m k r} shrinkage increments.
    pub delta: Vec<DMatrix<f64>>,
    /// K x R gamma-prior shapes a_{xi,1kr}.
    pub a1: DMatrix<f64>,
    /// K x R gamma-prior shapes a_{xi,2kr}.
    pub a2: DMatrix<f64>,
    /// `[k][r]`: P x M local precisions gamma_{xi,krpm}.
    pub gamma: Vec<Vec<DMatrix<f64>>>,
}

impl XiBlock {
    /// All-zero slopes with unit shrinkage; the extension then collapses to
    /// the base model exactly.
    pub fn zeros(dims: &ModelDims) -> Self {
        let (k, m, p, r) = (
            dims.n_features,
            dims.n_components,
            dims.n_basis,
            dims.n_covariates,
        );
        XiBlock {
            xi: (0..k)
                .map(|_| (0..m).map(|_| DMatrix::zeros(p, r)).collect())
                .collect(),
            delta: (0..k).map(|_| DMatrix::from_element(r, m, 1.0)).collect(),
            a1: DMatrix::from_element(k, r, 1.0),
            a2: DMatrix::from_element(k, r, 1.0),
            gamma: (0..k)
                .map(|_| (0..r).map(|_| DMatrix::from_element(p, m, 1.0)).collect())
                .collect(),
        }
    }

    /// Cumulative shrinkage product for component m of (feature k,
    /// covariate r).
    pub fn tau_tilde(&self, k: usize, r: usize, m: usize) -> f64 {
        (0..=m).map(|n| self.delta[k][(r, n)]).product()
    }

    /// Effective pseudo-eigenvector phi_km + xi_km x for one observation.
    pub fn shifted_phi(&self, phi_km: &DVector<f64>, k: usize, m: usize, x: &DVector<f64>) -> DVector<f64> {
        phi_km + &self.xi[k][m] * x
    }
}

/// One full point of the posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    /// `[k]`: population-level mean coefficients, length P.
    pub nu: Vec<DVector<f64>>,
    /// `[k]`: P x R covariate effect coefficients.
    pub eta: Vec<DMatrix<f64>>,
    /// `[k][m]`: pseudo-eigenvector coefficients, length P.
    pub phi: Vec<Vec<DVector<f64>>>,
    /// N x M latent component scores.
    pub chi: DMatrix<f64>,
    /// N x K allocation matrix; rows on the open unit simplex.
    pub alloc: DMatrix<f64>,
    /// Population allocation center, length K, on the simplex.
    pub pi: DVector<f64>,
    /// Dirichlet concentration for allocation rows.
    pub alpha3: f64,
    /// Observation noise variance.
    pub sigma2: f64,
    /// K x M shrinkage increments delta_{mk} (row k, column m-1).
    pub delta: DMatrix<f64>,
    /// Gamma-prior shapes for delta_{1k}.
    pub a1: DVector<f64>,
    /// Gamma-prior shapes for delta_{jk}, j >= 2.
    pub a2: DVector<f64>,
    /// `[k][m]`: local precisions gamma_{kpm}, length P.
    pub gamma: Vec<Vec<DVector<f64>>>,
    /// Smoothing precisions for nu, length K.
    pub tau_nu: DVector<f64>,
    /// K x R smoothing precisions for eta columns.
    pub tau_eta: DMatrix<f64>,
    /// Covariate-dependent covariance extension; None for the base model.
    pub xi: Option<XiBlock>,
}

impl ParameterState {
    /// Cumulative shrinkage product tilde tau_{mk} for component m (0-based)
    /// of feature k; always recomputed from delta.
    pub fn tau_tilde(&self, k: usize, m: usize) -> f64 {
        (0..=m).map(|n| self.delta[(k, n)]).product()
    }

    /// Effective pseudo-eigenvector for observation covariates `x`:
    /// phi_km when the extension is off, phi_km + xi_km x when on.
    pub fn effective_phi(&self, k: usize, m: usize, x: &DVector<f64>) -> DVector<f64> {
        match &self.xi {
            Some(block) => block.shifted_phi(&self.phi[k][m], k, m, x),
            None => self.phi[k][m].clone(),
        }
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        let (n, k, p, m, r) = (
            dims.n_obs,
            dims.n_features,
            dims.n_basis,
            dims.n_components,
            dims.n_covariates,
        );
        if self.nu.len() != k || self.nu.iter().any(|v| v.len() != p) {
            return Err(Error::shape("nu must be K vectors of length P"));
        }
        if self.eta.len() != k || self.eta.iter().any(|e| e.nrows() != p || e.ncols() != r) {
            return Err(Error::shape("eta must be K matrices of shape P x R"));
        }
        if self.phi.len() != k
            || self
                .phi
                .iter()
                .any(|fk| fk.len() != m || fk.iter().any(|v| v.len() != p))
        {
            return Err(Error::shape("phi must be K x M vectors of length P"));
        }
        if self.chi.nrows() != n || self.chi.ncols() != m {
            return Err(Error::shape("chi must be N x M"));
        }
        if self.alloc.nrows() != n || self.alloc.ncols() != k {
            return Err(Error::shape("allocation matrix must be N x K"));
        }
        for i in 0..n {
            validate_simplex(&self.alloc.row(i).transpose(), "allocation row")?;
        }
        validate_simplex(&self.pi, "pi")?;
        if !(self.alpha3 > 0.0) {
            return Err(Error::validation("alpha3 must be positive"));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::validation("sigma2 must be positive"));
        }
        if self.delta.nrows() != k || self.delta.ncols() != m {
            return Err(Error::shape("delta must be K x M"));
        }
        fn all_positive<'a, I: IntoIterator<Item = &'a f64>>(xs: I) -> bool {
            xs.into_iter().all(|v| *v > 0.0 && v.is_finite())
        }
        if !all_positive(self.delta.iter())
            || !all_positive(self.a1.iter())
            || !all_positive(self.a2.iter())
            || !all_positive(self.tau_nu.iter())
            || !all_positive(self.tau_eta.iter())
            || !all_positive(self.gamma.iter().flatten().flat_map(|v| v.iter()))
        {
            return Err(Error::validation(
                "shrinkage and smoothing parameters must be strictly positive",
            ));
        }
        if let Some(block) = &self.xi {
            if block.xi.len() != k
                || block
                    .xi
                    .iter()
                    .any(|bk| bk.len() != m || bk.iter().any(|x| x.nrows() != p || x.ncols() != r))
            {
                return Err(Error::shape("xi must be K x M matrices of shape P x R"));
            }
            if !all_positive(block.delta.iter().flat_map(|d| d.iter()))
                || !all_positive(block.a1.iter())
                || !all_positive(block.a2.iter())
                || !all_positive(block.gamma.iter().flatten().flat_map(|g| g.iter()))
            {
                return Err(Error::validation(
                    "xi shrinkage parameters must be strictly positive",
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_simplex(v: &DVector<f64>, what: &str) -> Result<()> {
    // The one-feature simplex degenerates to the single point {1}.
    let upper = if v.len() == 1 { 1.0 + SIMPLEX_TOL } else { 1.0 };
    if v.iter().any(|z| !(*z > 0.0 && *z < upper)) {
        return Err(Error::validation(format!(
            "{what} entries must lie strictly inside (0, 1)"
        )));
    }
    if (v.sum() - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::validation(format!(
            "{what} must sum to 1 within {SIMPLEX_TOL}"
        )));
    }
    Ok(())
}
