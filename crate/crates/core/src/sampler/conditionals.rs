//! Gibbs conditional distributions for every conjugate block. Each builder
//! returns the distribution parameters; the sweep draws from them and the
//! consistency audits evaluate their log densities, so a single code path
//! serves both.
//!
//! `beta_temper` is the inverse temperature multiplying the likelihood
//! information; 1.0 recovers the untempered conditionals.

use nalgebra::{DMatrix, DVector};

use crate::model::ParameterState;
use crate::numeric::mat_axpy;

use super::context::SweepContext;
use super::FitCache;

/// Shape/rate pair for a gamma conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCond {
    pub shape: f64,
    pub rate: f64,
}

/// Gaussian conditional in precision form: N(prec^-1 lin, prec^-1).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCond {
    pub prec: DMatrix<f64>,
    pub lin: DVector<f64>,
}

/// Scalar Gaussian conditional in precision form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGaussianCond {
    pub prec: f64,
    pub lin: f64,
}

/// Conditional for the pseudo-eigenvector phi_jm.
pub fn phi_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    cache: &FitCache,
    j: usize,
    m: usize,
    beta_temper: f64,
) -> GaussianCond {
    let dims = ctx.dims;
    let p = dims.n_basis;
    let m_comp = dims.n_components;
    let inv_s2 = beta_temper / state.sigma2;

    // Prior precision D^-1 = tau~_mj diag(gamma_j.m).
    let tau = state.tau_tilde(j, m);
    let mut prec = DMatrix::zeros(p, p);
    for pp in 0..p {
        prec[(pp, pp)] = tau * state.gamma[j][m][pp];
    }

    let mut lin = DVector::zeros(p);
    let eig_row = j * m_comp + m;
    for i in 0..dims.n_obs {
        let z = state.alloc[(i, j)];
        let chi = state.chi[(i, m)];
        let w = z * chi;
        if w != 0.0 {
            mat_axpy(&mut prec, inv_s2 * w * w, &ctx.basis.gram[i]);
        }
        let rows = &ctx.basis.rows[i];
        for l in 0..rows.nrows() {
            let excluded = w * cache.eig[i][(eig_row, l)];
            let resid = cache.residual(state, ctx.data, dims, i, l) + excluded;
            let coeff = inv_s2 * w * resid;
            if coeff != 0.0 {
                lin.axpy(coeff, &rows.row(l).transpose(), 1.0);
            }
        }
    }
    GaussianCond { prec, lin }
}

/// Conditional for the population mean coefficients nu_j.
pub fn nu_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    cache: &FitCache,
    j: usize,
    beta_temper: f64,
) -> GaussianCond {
    let dims = ctx.dims;
    let inv_s2 = beta_temper / state.sigma2;
    let mut prec = ctx.penalty * state.tau_nu[j];
    let mut lin = DVector::zeros(dims.n_basis);
    for i in 0..dims.n_obs {
        let z = state.alloc[(i, j)];
        mat_axpy(&mut prec, inv_s2 * z * z, &ctx.basis.gram[i]);
        let rows = &ctx.basis.rows[i];
        for l in 0..rows.nrows() {
            let b_row = rows.row(l);
            let nu_part = b_row.transpose().dot(&state.nu[j]);
            let resid = cache.residual(state, ctx.data, dims, i, l) + z * nu_part;
            lin.axpy(inv_s2 * z * resid, &b_row.transpose(), 1.0);
        }
    }
    GaussianCond { prec, lin }
}

/// Conditional for column d of the covariate-effect coefficients eta_j.
pub fn eta_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    cache: &FitCache,
    j: usize,
    d: usize,
    beta_temper: f64,
) -> GaussianCond {
    let dims = ctx.dims;
    let inv_s2 = beta_temper / state.sigma2;
    let mut prec = ctx.penalty * state.tau_eta[(j, d)];
    let mut lin = DVector::zeros(dims.n_basis);
    let eta_col = state.eta[j].column(d).clone_owned();
    for i in 0..dims.n_obs {
        let z = state.alloc[(i, j)];
        let x = ctx.data.design[(i, d)];
        let w = z * x;
        if w != 0.0 {
            mat_axpy(&mut prec, inv_s2 * w * w, &ctx.basis.gram[i]);
        }
        let rows = &ctx.basis.rows[i];
        for l in 0..rows.nrows() {
            let b_row = rows.row(l);
            let col_part = b_row.transpose().dot(&eta_col);
            let resid = cache.residual(state, ctx.data, dims, i, l) + w * col_part;
            let coeff = inv_s2 * w * resid;
            if coeff != 0.0 {
                lin.axpy(coeff, &b_row.transpose(), 1.0);
            }
        }
    }
    GaussianCond { prec, lin }
}

/// Conditional for column d of the covariance-slope matrix xi_km
/// (extension only; panics if the extension is absent).
pub fn xi_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    cache: &FitCache,
    k: usize,
    d: usize,
    m: usize,
    beta_temper: f64,
) -> GaussianCond {
    let block = state.xi.as_ref().expect("xi conditional requires the extension");
    let dims = ctx.dims;
    let p = dims.n_basis;
    let inv_s2 = beta_temper / state.sigma2;

    let tau = block.tau_tilde(k, d, m);
    let mut prec = DMatrix::zeros(p, p);
    for pp in 0..p {
        prec[(pp, pp)] = tau * block.gamma[k][d][(pp, m)];
    }

    let mut lin = DVector::zeros(p);
    let xi_col = block.xi[k][m].column(d).clone_owned();
    for i in 0..dims.n_obs {
        let z = state.alloc[(i, k)];
        let chi = state.chi[(i, m)];
        let x = ctx.data.design[(i, d)];
        let w = z * chi * x;
        if w != 0.0 {
            mat_axpy(&mut prec, inv_s2 * w * w, &ctx.basis.gram[i]);
        }
        let rows = &ctx.basis.rows[i];
        for l in 0..rows.nrows() {
            let b_row = rows.row(l);
            let col_part = b_row.transpose().dot(&xi_col);
            let resid = cache.residual(state, ctx.data, dims, i, l) + w * col_part;
            let coeff = inv_s2 * w * resid;
            if coeff != 0.0 {
                lin.axpy(coeff, &b_row.transpose(), 1.0);
            }
        }
    }
    GaussianCond { prec, lin }
}

/// Conditional for the latent score chi_im.
pub fn chi_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    cache: &FitCache,
    i: usize,
    m: usize,
    beta_temper: f64,
) -> ScalarGaussianCond {
    let dims = ctx.dims;
    let m_comp = dims.n_components;
    let inv_s2 = beta_temper / state.sigma2;
    let chi_im = state.chi[(i, m)];
    let mut prec = 1.0;
    let mut lin = 0.0;
    let n_i = ctx.basis.rows[i].nrows();
    for l in 0..n_i {
        let mut slope = 0.0;
        for k in 0..dims.n_features {
            slope += state.alloc[(i, k)] * cache.eig[i][(k * m_comp + m, l)];
        }
        prec += inv_s2 * slope * slope;
        let resid = cache.residual(state, ctx.data, dims, i, l) + chi_im * slope;
        lin += inv_s2 * slope * resid;
    }
    ScalarGaussianCond { prec, lin }
}

/// Inverse-gamma conditional for the noise variance.
pub fn sigma2_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    cache: &FitCache,
    beta_temper: f64,
) -> GammaCond {
    let total_points = ctx.data.total_points() as f64;
    let ss = cache.sum_squared_residuals(state, ctx.data, ctx.dims);
    GammaCond {
        shape: ctx.hyper.alpha0 + beta_temper * total_points / 2.0,
        rate: ctx.hyper.beta0 + beta_temper * ss / 2.0,
    }
}

/// Gamma conditional for the shrinkage increment delta at 0-based component
/// index `idx` of feature `k`.
pub fn delta_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
    idx: usize,
) -> GammaCond {
    let dims = ctx.dims;
    let p = dims.n_basis as f64;
    let m_comp = dims.n_components;
    let shape = if idx == 0 {
        state.a1[k] + p * m_comp as f64 / 2.0
    } else {
        state.a2[k] + p * (m_comp - idx) as f64 / 2.0
    };
    let mut rate = 1.0;
    for m in idx..m_comp {
        // product of the other increments up to component m
        let mut prod = 1.0;
        for n in 0..=m {
            if n != idx {
                prod *= state.delta[(k, n)];
            }
        }
        let mut quad = 0.0;
        for pp in 0..dims.n_basis {
            quad += state.gamma[k][m][pp] * state.phi[k][m][pp] * state.phi[k][m][pp];
        }
        rate += 0.5 * prod * quad;
    }
    GammaCond { shape, rate }
}

/// Gamma conditional for the local precision gamma_{kpm}.
pub fn gamma_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
    p: usize,
    m: usize,
) -> GammaCond {
    let nu_g = ctx.hyper.nu_gamma;
    let tau = state.tau_tilde(k, m);
    let v = state.phi[k][m][p];
    GammaCond {
        shape: (nu_g + 1.0) / 2.0,
        rate: (v * v * tau + nu_g) / 2.0,
    }
}

/// Gamma conditional for the smoothing precision of nu_k.
pub fn tau_nu_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
) -> GammaCond {
    let quad = (ctx.penalty * &state.nu[k]).dot(&state.nu[k]);
    GammaCond {
        shape: ctx.hyper.alpha_nu + ctx.dims.n_basis as f64 / 2.0,
        rate: ctx.hyper.beta_nu + 0.5 * quad,
    }
}

/// Gamma conditional for the smoothing precision of eta column (k, r).
pub fn tau_eta_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
    r: usize,
) -> GammaCond {
    let col = state.eta[k].column(r).clone_owned();
    let quad = (ctx.penalty * &col).dot(&col);
    GammaCond {
        shape: ctx.hyper.alpha_eta + ctx.dims.n_basis as f64 / 2.0,
        rate: ctx.hyper.beta_eta + 0.5 * quad,
    }
}

/// Gamma conditional for the xi shrinkage increment at component index `idx`
/// of (feature k, covariate r).
pub fn delta_xi_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
    r: usize,
    idx: usize,
) -> GammaCond {
    let block = state.xi.as_ref().expect("delta_xi requires the extension");
    let dims = ctx.dims;
    let p = dims.n_basis as f64;
    let m_comp = dims.n_components;
    let shape = if idx == 0 {
        block.a1[(k, r)] + p * m_comp as f64 / 2.0
    } else {
        block.a2[(k, r)] + p * (m_comp - idx) as f64 / 2.0
    };
    let mut rate = 1.0;
    for m in idx..m_comp {
        let mut prod = 1.0;
        for n in 0..=m {
            if n != idx {
                prod *= block.delta[k][(r, n)];
            }
        }
        let mut quad = 0.0;
        for pp in 0..dims.n_basis {
            let v = block.xi[k][m][(pp, r)];
            quad += block.gamma[k][r][(pp, m)] * v * v;
        }
        rate += 0.5 * prod * quad;
    }
    GammaCond { shape, rate }
}

/// Gamma conditional for the xi local precision gamma_{xi, krpm}.
pub fn gamma_xi_conditional(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
    r: usize,
    p: usize,
    m: usize,
) -> GammaCond {
    let block = state.xi.as_ref().expect("gamma_xi requires the extension");
    let nu_g = ctx.hyper.nu_gamma;
    let tau = block.tau_tilde(k, r, m);
    let v = block.xi[k][m][(p, r)];
    GammaCond {
        shape: (nu_g + 1.0) / 2.0,
        rate: (v * v * tau + nu_g) / 2.0,
    }
}
