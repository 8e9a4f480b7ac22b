//! Full log prior and log posterior.
//!
//! The random-walk priors on nu and eta are improper (the penalty matrix has
//! rank P-1); their x-space normalizing constants are omitted, but the
//! tau^(P/2) factor is kept so that the gamma conditionals on the smoothing
//! precisions stay consistent with this density.

use nalgebra::DMatrix;

use crate::data::{BasisSet, FunctionalDataset};
use crate::error::Result;
use crate::numeric::{ln_dirichlet_pdf, ln_gamma_pdf, ln_inv_gamma_pdf, LN_2PI};

use super::{loglik_conditional, HyperParams, ModelDims, ParameterState};

/// Sum of all prior log densities at `state`.
pub fn log_prior(
    state: &ParameterState,
    dims: &ModelDims,
    hyper: &HyperParams,
    penalty: &DMatrix<f64>,
) -> Result<f64> {
    state.validate(dims)?;
    hyper.validate(dims)?;
    let (k_feat, p, m_comp, r_cov) = (
        dims.n_features,
        dims.n_basis,
        dims.n_components,
        dims.n_covariates,
    );
    let mut out = 0.0;

    // phi | gamma, tau~ and the local / global shrinkage hierarchy.
    for k in 0..k_feat {
        for m in 0..m_comp {
            let tau = state.tau_tilde(k, m);
            for pp in 0..p {
                let g = state.gamma[k][m][pp];
                let prec = g * tau;
                let v = state.phi[k][m][pp];
                out += -0.5 * LN_2PI + 0.5 * prec.ln() - 0.5 * v * v * prec;
                out += ln_gamma_pdf(g, hyper.nu_gamma / 2.0, hyper.nu_gamma / 2.0);
            }
        }
        out += ln_gamma_pdf(state.delta[(k, 0)], state.a1[k], 1.0);
        for j in 1..m_comp {
            out += ln_gamma_pdf(state.delta[(k, j)], state.a2[k], 1.0);
        }
        out += ln_gamma_pdf(state.a1[k], hyper.alpha1, hyper.beta1);
        out += ln_gamma_pdf(state.a2[k], hyper.alpha2, hyper.beta2);
    }

    // Random-walk smoothing kernels for nu and eta columns.
    for k in 0..k_feat {
        let tau = state.tau_nu[k];
        let quad = (penalty * &state.nu[k]).dot(&state.nu[k]);
        out += 0.5 * p as f64 * tau.ln() - 0.5 * tau * quad;
        out += ln_gamma_pdf(tau, hyper.alpha_nu, hyper.beta_nu);
        for r in 0..r_cov {
            let tau_e = state.tau_eta[(k, r)];
            let col = state.eta[k].column(r).clone_owned();
            let quad_e = (penalty * &col).dot(&col);
            out += 0.5 * p as f64 * tau_e.ln() - 0.5 * tau_e * quad_e;
            out += ln_gamma_pdf(tau_e, hyper.alpha_eta, hyper.beta_eta);
        }
    }

    // Latent component scores are standard normal a priori; the joint needs
    // their density for the chi conditional to match.
    for v in state.chi.iter() {
        out += -0.5 * LN_2PI - 0.5 * v * v;
    }

    // Allocation rows, population weights, concentration, noise variance.
    let alpha_dir = &state.pi * state.alpha3;
    for i in 0..dims.n_obs {
        out += ln_dirichlet_pdf(&state.alloc.row(i).transpose(), &alpha_dir);
    }
    out += ln_dirichlet_pdf(&state.pi, &hyper.c_pi_vector());
    out += hyper.b_alpha3.ln() - hyper.b_alpha3 * state.alpha3;
    out += ln_inv_gamma_pdf(state.sigma2, hyper.alpha0, hyper.beta0);

    // Covariate-dependent covariance extension.
    if let Some(block) = &state.xi {
        for k in 0..k_feat {
            for r in 0..r_cov {
                for m in 0..m_comp {
                    let tau = block.tau_tilde(k, r, m);
                    for pp in 0..p {
                        let g = block.gamma[k][r][(pp, m)];
                        let prec = g * tau;
                        let v = block.xi[k][m][(pp, r)];
                        out += -0.5 * LN_2PI + 0.5 * prec.ln() - 0.5 * v * v * prec;
                        out += ln_gamma_pdf(g, hyper.nu_gamma / 2.0, hyper.nu_gamma / 2.0);
                    }
                }
                out += ln_gamma_pdf(block.delta[k][(r, 0)], block.a1[(k, r)], 1.0);
                for j in 1..m_comp {
                    out += ln_gamma_pdf(block.delta[k][(r, j)], block.a2[(k, r)], 1.0);
                }
                out += ln_gamma_pdf(block.a1[(k, r)], hyper.alpha1, hyper.beta1);
                out += ln_gamma_pdf(block.a2[(k, r)], hyper.alpha2, hyper.beta2);
            }
        }
    }

    debug_assert!(!out.is_nan());
    Ok(out)
}

/// Conditional log likelihood plus log prior. Used by conditional-consistency
/// audits and multi-start ranking.
pub fn log_posterior(
    state: &ParameterState,
    data: &FunctionalDataset,
    dims: &ModelDims,
    hyper: &HyperParams,
    basis: &BasisSet,
    penalty: &DMatrix<f64>,
) -> Result<f64> {
    Ok(loglik_conditional(state, data, dims, basis)? + log_prior(state, dims, hyper, penalty)?)
}
