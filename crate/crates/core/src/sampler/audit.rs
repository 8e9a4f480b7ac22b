//! Sampler correctness audits.
//!
//! For a conjugate block, the log-density difference of the implemented
//! conditional between two block values must equal the joint log-posterior
//! difference with everything else held fixed. For a Metropolis block, the
//! acceptance function must satisfy the detailed-balance identity
//! A(b|a) pi(a) Q(b|a) = A(a|b) pi(b) Q(a|b). Both checks run on randomly
//! generated state pairs and report the worst absolute error.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::penalty_matrix;
use crate::error::Result;
use crate::model::{log_posterior, HyperParams, ModelDims};
use crate::numeric::{
    ln_dirichlet_pdf, ln_gamma_pdf, ln_inv_gamma_pdf, ln_normal_pdf, ln_truncated_normal_pdf,
    sample_dirichlet, sample_gamma, GaussianBlock,
};

use super::conditionals as cond;
use super::mh;
use super::testing::{random_dataset, random_state_with};
use super::{FitCache, SweepContext};

/// Conjugate blocks covered by the conditional-consistency audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GibbsBlock {
    Phi,
    Delta,
    Gamma,
    Nu,
    Eta,
    TauNu,
    TauEta,
    Sigma2,
    Chi,
    Xi,
    DeltaXi,
    GammaXi,
}

impl GibbsBlock {
    pub const ALL_BASE: [GibbsBlock; 9] = [
        GibbsBlock::Phi,
        GibbsBlock::Delta,
        GibbsBlock::Gamma,
        GibbsBlock::Nu,
        GibbsBlock::Eta,
        GibbsBlock::TauNu,
        GibbsBlock::TauEta,
        GibbsBlock::Sigma2,
        GibbsBlock::Chi,
    ];

    pub const ALL_XI: [GibbsBlock; 3] = [GibbsBlock::Xi, GibbsBlock::DeltaXi, GibbsBlock::GammaXi];

    pub fn needs_extension(self) -> bool {
        matches!(self, GibbsBlock::Xi | GibbsBlock::DeltaXi | GibbsBlock::GammaXi)
    }

    pub fn name(self) -> &'static str {
        match self {
            GibbsBlock::Phi => "phi",
            GibbsBlock::Delta => "delta",
            GibbsBlock::Gamma => "gamma",
            GibbsBlock::Nu => "nu",
            GibbsBlock::Eta => "eta",
            GibbsBlock::TauNu => "tau_nu",
            GibbsBlock::TauEta => "tau_eta",
            GibbsBlock::Sigma2 => "sigma2",
            GibbsBlock::Chi => "chi",
            GibbsBlock::Xi => "xi",
            GibbsBlock::DeltaXi => "delta_xi",
            GibbsBlock::GammaXi => "gamma_xi",
        }
    }
}

/// Metropolis blocks covered by the detailed-balance audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MhBlock {
    A1,
    A2,
    AllocRow,
    Pi,
    Alpha3,
    A1Xi,
    A2Xi,
}

impl MhBlock {
    pub const ALL_BASE: [MhBlock; 5] = [
        MhBlock::A1,
        MhBlock::A2,
        MhBlock::AllocRow,
        MhBlock::Pi,
        MhBlock::Alpha3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MhBlock::A1 => "a1",
            MhBlock::A2 => "a2",
            MhBlock::AllocRow => "alloc_row",
            MhBlock::Pi => "pi",
            MhBlock::Alpha3 => "alpha3",
            MhBlock::A1Xi => "a1_xi",
            MhBlock::A2Xi => "a2_xi",
        }
    }
}

fn fresh_positive<R: Rng>(rng: &mut R) -> f64 {
    0.2 + sample_gamma(rng, 2.0, 1.5)
}

fn fresh_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// Worst |delta log conditional - delta log posterior| over `n_pairs`
/// random pairs for one block.
pub fn conditional_consistency_max_err(
    block: GibbsBlock,
    dims: &ModelDims,
    seed: u64,
    n_pairs: usize,
) -> Result<f64> {
    let hyper = HyperParams::defaults(dims.n_features);
    let penalty = penalty_matrix(dims.n_basis)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..n_pairs {
        let (data, basis) = random_dataset(dims, seed ^ (trial as u64).wrapping_mul(0x9e37));
        let mut state = random_state_with(dims, &mut rng, block.needs_extension());
        let ctx = SweepContext {
            data: &data,
            dims,
            hyper: &hyper,
            basis: &basis,
            penalty: &penalty,
        };
        let cache = FitCache::new(&state, &data, dims, &basis);

        // index choices
        let k = rng.gen_range(0..dims.n_features);
        let m = rng.gen_range(0..dims.n_components);
        let p = rng.gen_range(0..dims.n_basis);
        let r = rng.gen_range(0..dims.n_covariates.max(1));
        let i = rng.gen_range(0..dims.n_obs);

        // (log conditional difference, apply-new-value closure applied to a clone)
        let (dq, state_b) = match block {
            GibbsBlock::Phi => {
                let c = cond::phi_conditional(&ctx, &state, &cache, k, m, 1.0);
                let g = GaussianBlock::new(c.prec, &c.lin)?;
                let new = fresh_vector(&mut rng, dims.n_basis);
                let dq = g.ln_pdf(&new) - g.ln_pdf(&state.phi[k][m]);
                let mut b = state.clone();
                b.phi[k][m] = new;
                (dq, b)
            }
            GibbsBlock::Delta => {
                let c = cond::delta_conditional(&ctx, &state, k, m);
                let new = fresh_positive(&mut rng);
                let dq = ln_gamma_pdf(new, c.shape, c.rate)
                    - ln_gamma_pdf(state.delta[(k, m)], c.shape, c.rate);
                let mut b = state.clone();
                b.delta[(k, m)] = new;
                (dq, b)
            }
            GibbsBlock::Gamma => {
                let c = cond::gamma_conditional(&ctx, &state, k, p, m);
                let new = fresh_positive(&mut rng);
                let dq = ln_gamma_pdf(new, c.shape, c.rate)
                    - ln_gamma_pdf(state.gamma[k][m][p], c.shape, c.rate);
                let mut b = state.clone();
                b.gamma[k][m][p] = new;
                (dq, b)
            }
            GibbsBlock::Nu => {
                let c = cond::nu_conditional(&ctx, &state, &cache, k, 1.0);
                let g = GaussianBlock::new(c.prec, &c.lin)?;
                let new = fresh_vector(&mut rng, dims.n_basis);
                let dq = g.ln_pdf(&new) - g.ln_pdf(&state.nu[k]);
                let mut b = state.clone();
                b.nu[k] = new;
                (dq, b)
            }
            GibbsBlock::Eta => {
                let c = cond::eta_conditional(&ctx, &state, &cache, k, r, 1.0);
                let g = GaussianBlock::new(c.prec, &c.lin)?;
                let new = fresh_vector(&mut rng, dims.n_basis);
                let dq = g.ln_pdf(&new) - g.ln_pdf(&state.eta[k].column(r).clone_owned());
                let mut b = state.clone();
                b.eta[k].set_column(r, &new);
                (dq, b)
            }
            GibbsBlock::TauNu => {
                let c = cond::tau_nu_conditional(&ctx, &state, k);
                let new = fresh_positive(&mut rng);
                let dq = ln_gamma_pdf(new, c.shape, c.rate)
                    - ln_gamma_pdf(state.tau_nu[k], c.shape, c.rate);
                let mut b = state.clone();
                b.tau_nu[k] = new;
                (dq, b)
            }
            GibbsBlock::TauEta => {
                let c = cond::tau_eta_conditional(&ctx, &state, k, r);
                let new = fresh_positive(&mut rng);
                let dq = ln_gamma_pdf(new, c.shape, c.rate)
                    - ln_gamma_pdf(state.tau_eta[(k, r)], c.shape, c.rate);
                let mut b = state.clone();
                b.tau_eta[(k, r)] = new;
                (dq, b)
            }
            GibbsBlock::Sigma2 => {
                let c = cond::sigma2_conditional(&ctx, &state, &cache, 1.0);
                let new = fresh_positive(&mut rng);
                let dq = ln_inv_gamma_pdf(new, c.shape, c.rate)
                    - ln_inv_gamma_pdf(state.sigma2, c.shape, c.rate);
                let mut b = state.clone();
                b.sigma2 = new;
                (dq, b)
            }
            GibbsBlock::Chi => {
                let c = cond::chi_conditional(&ctx, &state, &cache, i, m, 1.0);
                let mean = c.lin / c.prec;
                let var = 1.0 / c.prec;
                let new: f64 = StandardNormal.sample(&mut rng);
                let dq = ln_normal_pdf(new, mean, var) - ln_normal_pdf(state.chi[(i, m)], mean, var);
                let mut b = state.clone();
                b.chi[(i, m)] = new;
                (dq, b)
            }
            GibbsBlock::Xi => {
                let c = cond::xi_conditional(&ctx, &state, &cache, k, r, m, 1.0);
                let g = GaussianBlock::new(c.prec, &c.lin)?;
                let new = fresh_vector(&mut rng, dims.n_basis);
                let cur = state.xi.as_ref().unwrap().xi[k][m].column(r).clone_owned();
                let dq = g.ln_pdf(&new) - g.ln_pdf(&cur);
                let mut b = state.clone();
                b.xi.as_mut().unwrap().xi[k][m].set_column(r, &new);
                (dq, b)
            }
            GibbsBlock::DeltaXi => {
                let c = cond::delta_xi_conditional(&ctx, &state, k, r, m);
                let new = fresh_positive(&mut rng);
                let cur = state.xi.as_ref().unwrap().delta[k][(r, m)];
                let dq = ln_gamma_pdf(new, c.shape, c.rate) - ln_gamma_pdf(cur, c.shape, c.rate);
                let mut b = state.clone();
                b.xi.as_mut().unwrap().delta[k][(r, m)] = new;
                (dq, b)
            }
            GibbsBlock::GammaXi => {
                let c = cond::gamma_xi_conditional(&ctx, &state, k, r, p, m);
                let new = fresh_positive(&mut rng);
                let cur = state.xi.as_ref().unwrap().gamma[k][r][(p, m)];
                let dq = ln_gamma_pdf(new, c.shape, c.rate) - ln_gamma_pdf(cur, c.shape, c.rate);
                let mut b = state.clone();
                b.xi.as_mut().unwrap().gamma[k][r][(p, m)] = new;
                (dq, b)
            }
        };

        let lp_a = log_posterior(&state, &data, dims, &hyper, &basis, &penalty)?;
        let lp_b = log_posterior(&state_b, &data, dims, &hyper, &basis, &penalty)?;
        let err = (dq - (lp_b - lp_a)).abs();
        worst = worst.max(err);
        // reuse the perturbed state for the next trial
        state = state_b;
        let _ = state;
    }
    Ok(worst)
}

/// Worst detailed-balance error in log space over `n_pairs` random pairs
/// for one Metropolis block. Both sides of
/// A(b|a) pi(a) Q(b|a) = A(a|b) pi(b) Q(a|b) go through the exact same
/// target and proposal-density code paths the sampler uses.
pub fn detailed_balance_max_err(
    block: MhBlock,
    dims: &ModelDims,
    seed: u64,
    n_pairs: usize,
) -> Result<f64> {
    let hyper = HyperParams::defaults(dims.n_features);
    let penalty = penalty_matrix(dims.n_basis)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..n_pairs {
        let (data, basis) = random_dataset(dims, seed ^ (trial as u64).wrapping_mul(0x51ed));
        let with_xi = matches!(block, MhBlock::A1Xi | MhBlock::A2Xi);
        let state = random_state_with(dims, &mut rng, with_xi);
        let ctx = SweepContext {
            data: &data,
            dims,
            hyper: &hyper,
            basis: &basis,
            penalty: &penalty,
        };
        let cache = FitCache::new(&state, &data, dims, &basis);
        let k = rng.gen_range(0..dims.n_features);
        let r = rng.gen_range(0..dims.n_covariates.max(1));
        let i = rng.gen_range(0..dims.n_obs);

        let (t_a, t_b, q_ab, q_ba) = match block {
            MhBlock::A1 => {
                let var = hyper.eps1 / hyper.beta1;
                let a = state.a1[k];
                let b = fresh_positive(&mut rng);
                (
                    mh::ln_target_a1(&ctx, &state, k, a),
                    mh::ln_target_a1(&ctx, &state, k, b),
                    ln_truncated_normal_pdf(b, a, var),
                    ln_truncated_normal_pdf(a, b, var),
                )
            }
            MhBlock::A2 => {
                let var = hyper.eps2 / hyper.beta2;
                let a = state.a2[k];
                let b = fresh_positive(&mut rng);
                (
                    mh::ln_target_a2(&ctx, &state, k, a),
                    mh::ln_target_a2(&ctx, &state, k, b),
                    ln_truncated_normal_pdf(b, a, var),
                    ln_truncated_normal_pdf(a, b, var),
                )
            }
            MhBlock::A1Xi => {
                let var = hyper.eps1 / hyper.beta1;
                let a = state.xi.as_ref().unwrap().a1[(k, r)];
                let b = fresh_positive(&mut rng);
                (
                    mh::ln_target_a1_xi(&ctx, &state, k, r, a),
                    mh::ln_target_a1_xi(&ctx, &state, k, r, b),
                    ln_truncated_normal_pdf(b, a, var),
                    ln_truncated_normal_pdf(a, b, var),
                )
            }
            MhBlock::A2Xi => {
                let var = hyper.eps2 / hyper.beta2;
                let a = state.xi.as_ref().unwrap().a2[(k, r)];
                let b = fresh_positive(&mut rng);
                (
                    mh::ln_target_a2_xi(&ctx, &state, k, r, a),
                    mh::ln_target_a2_xi(&ctx, &state, k, r, b),
                    ln_truncated_normal_pdf(b, a, var),
                    ln_truncated_normal_pdf(a, b, var),
                )
            }
            MhBlock::AllocRow => {
                let a = state.alloc.row(i).transpose();
                let b = sample_dirichlet(&mut rng, &(&a * hyper.a_z));
                (
                    mh::ln_target_alloc_row(&ctx, &state, &cache, i, &a, 1.0),
                    mh::ln_target_alloc_row(&ctx, &state, &cache, i, &b, 1.0),
                    ln_dirichlet_pdf(&b, &(&a * hyper.a_z)),
                    ln_dirichlet_pdf(&a, &(&b * hyper.a_z)),
                )
            }
            MhBlock::Pi => {
                let a = state.pi.clone();
                let b = sample_dirichlet(&mut rng, &(&a * hyper.a_pi));
                (
                    mh::ln_target_pi(&ctx, &state, &a),
                    mh::ln_target_pi(&ctx, &state, &b),
                    ln_dirichlet_pdf(&b, &(&a * hyper.a_pi)),
                    ln_dirichlet_pdf(&a, &(&b * hyper.a_pi)),
                )
            }
            MhBlock::Alpha3 => {
                let var = hyper.sigma2_alpha3;
                let a = state.alpha3;
                let b = fresh_positive(&mut rng);
                (
                    mh::ln_target_alpha3(&ctx, &state, a),
                    mh::ln_target_alpha3(&ctx, &state, b),
                    ln_truncated_normal_pdf(b, a, var),
                    ln_truncated_normal_pdf(a, b, var),
                )
            }
        };

        let fwd = mh::ln_accept(t_a, t_b, q_ab, q_ba) + t_a + q_ab;
        let rev = mh::ln_accept(t_b, t_a, q_ba, q_ab) + t_b + q_ba;
        worst = worst.max((fwd - rev).abs());
    }
    Ok(worst)
}

/// Cross-check that a Metropolis acceptance ratio agrees with the joint
/// posterior: for blocks whose target is a full conditional, the
/// target-density difference must match the log-posterior difference.
pub fn mh_target_consistency_max_err(
    block: MhBlock,
    dims: &ModelDims,
    seed: u64,
    n_pairs: usize,
) -> Result<f64> {
    let hyper = HyperParams::defaults(dims.n_features);
    let penalty = penalty_matrix(dims.n_basis)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..n_pairs {
        let (data, basis) = random_dataset(dims, seed ^ (trial as u64).wrapping_mul(0x2c1b));
        let with_xi = matches!(block, MhBlock::A1Xi | MhBlock::A2Xi);
        let state = random_state_with(dims, &mut rng, with_xi);
        let ctx = SweepContext {
            data: &data,
            dims,
            hyper: &hyper,
            basis: &basis,
            penalty: &penalty,
        };
        let cache = FitCache::new(&state, &data, dims, &basis);
        let k = rng.gen_range(0..dims.n_features);
        let r = rng.gen_range(0..dims.n_covariates.max(1));
        let i = rng.gen_range(0..dims.n_obs);

        let (dt, state_b) = match block {
            MhBlock::A1 => {
                let b = fresh_positive(&mut rng);
                let dt = mh::ln_target_a1(&ctx, &state, k, b)
                    - mh::ln_target_a1(&ctx, &state, k, state.a1[k]);
                let mut s = state.clone();
                s.a1[k] = b;
                (dt, s)
            }
            MhBlock::A2 => {
                let b = fresh_positive(&mut rng);
                let dt = mh::ln_target_a2(&ctx, &state, k, b)
                    - mh::ln_target_a2(&ctx, &state, k, state.a2[k]);
                let mut s = state.clone();
                s.a2[k] = b;
                (dt, s)
            }
            MhBlock::A1Xi => {
                let b = fresh_positive(&mut rng);
                let cur = state.xi.as_ref().unwrap().a1[(k, r)];
                let dt = mh::ln_target_a1_xi(&ctx, &state, k, r, b)
                    - mh::ln_target_a1_xi(&ctx, &state, k, r, cur);
                let mut s = state.clone();
                s.xi.as_mut().unwrap().a1[(k, r)] = b;
                (dt, s)
            }
            MhBlock::A2Xi => {
                let b = fresh_positive(&mut rng);
                let cur = state.xi.as_ref().unwrap().a2[(k, r)];
                let dt = mh::ln_target_a2_xi(&ctx, &state, k, r, b)
                    - mh::ln_target_a2_xi(&ctx, &state, k, r, cur);
                let mut s = state.clone();
                s.xi.as_mut().unwrap().a2[(k, r)] = b;
                (dt, s)
            }
            MhBlock::AllocRow => {
                let a = state.alloc.row(i).transpose();
                let b = sample_dirichlet(&mut rng, &(&a * hyper.a_z));
                let dt = mh::ln_target_alloc_row(&ctx, &state, &cache, i, &b, 1.0)
                    - mh::ln_target_alloc_row(&ctx, &state, &cache, i, &a, 1.0);
                let mut s = state.clone();
                s.alloc.row_mut(i).copy_from(&b.transpose());
                (dt, s)
            }
            MhBlock::Pi => {
                let b = sample_dirichlet(&mut rng, &(&state.pi * hyper.a_pi));
                let dt = mh::ln_target_pi(&ctx, &state, &b) - mh::ln_target_pi(&ctx, &state, &state.pi);
                let mut s = state.clone();
                s.pi = b;
                (dt, s)
            }
            MhBlock::Alpha3 => {
                let b = fresh_positive(&mut rng);
                let dt = mh::ln_target_alpha3(&ctx, &state, b)
                    - mh::ln_target_alpha3(&ctx, &state, state.alpha3);
                let mut s = state.clone();
                s.alpha3 = b;
                (dt, s)
            }
        };
        let lp_a = log_posterior(&state, &data, dims, &hyper, &basis, &penalty)?;
        let lp_b = log_posterior(&state_b, &data, dims, &hyper, &basis, &penalty)?;
        worst = worst.max((dt - (lp_b - lp_a)).abs());
    }
    Ok(worst)
}
