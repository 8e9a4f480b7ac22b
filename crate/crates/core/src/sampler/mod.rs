//! Blocked Metropolis-within-Gibbs sampler with tempered transitions.
//!
//! A sweep applies every block update once in a fixed scan order:
//! phi -> (xi) -> delta -> a1, a2 -> gamma -> (xi hierarchy) -> nu -> eta ->
//! tau -> allocation rows -> pi -> alpha3 -> sigma2 -> chi. The
//! covariate-dependent covariance blocks run only when the extension is
//! enabled, so a disabled extension consumes exactly the same random
//! numbers as the base model.

pub mod audit;
pub mod cache;
pub mod conditionals;
pub mod context;
pub mod mh;
pub mod tempered;
pub mod testing;

#[cfg(test)]
mod block_tests;

pub use cache::FitCache;
pub use context::SweepContext;
pub use tempered::{geometric_ladder, tempered_transition, TemperedOutcome};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::penalty_matrix;
use crate::chain::{AcceptanceStats, ChainSample, ChainStore};
use crate::data::{BasisSet, FunctionalDataset};
use crate::error::{Error, Result};
use crate::model::{log_posterior, HyperParams, ModelDims, ParameterState, XiBlock};
use crate::numeric::{sample_dirichlet, sample_gamma, sample_inv_gamma, GaussianBlock};

/// Tempered-transition schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemperingConfig {
    pub enabled: bool,
    /// Ladder half-length N_t; the move runs 2 N_t tempered sweeps.
    pub n_rungs: usize,
    /// Smallest inverse temperature in (0, 1].
    pub beta_min: f64,
    /// Apply the tempered move every `interval` sweeps.
    pub interval: usize,
}

impl Default for TemperingConfig {
    fn default() -> Self {
        TemperingConfig {
            enabled: false,
            n_rungs: 4,
            beta_min: 0.5,
            interval: 20,
        }
    }
}

/// Chain schedule and reproducibility settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Multi-start initialization: number of short exploratory runs.
    pub n_starts: usize,
    /// Sweeps per exploratory run.
    pub start_iters: usize,
    pub tempering: TemperingConfig,
    /// Enable the covariate-dependent covariance extension.
    pub covariance_adjusted: bool,
    /// Keep the shrinkage hierarchy in stored samples.
    pub store_hierarchy: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iter: 2000,
            burn_in: 1000,
            thin: 1,
            seed: 0,
            n_starts: 3,
            start_iters: 50,
            tempering: TemperingConfig::default(),
            covariance_adjusted: false,
            store_hierarchy: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::config(format!(
                "burn_in {} must be smaller than n_iter {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if self.n_starts == 0 {
            return Err(Error::config("n_starts must be at least 1"));
        }
        if self.tempering.enabled {
            if self.tempering.n_rungs == 0 {
                return Err(Error::config("tempering ladder needs at least one rung"));
            }
            if !(self.tempering.beta_min > 0.0 && self.tempering.beta_min <= 1.0) {
                return Err(Error::config("beta_min must lie in (0, 1]"));
            }
            if self.tempering.interval == 0 {
                return Err(Error::config("tempering interval must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One full scan over every block. `beta_temper` scales the likelihood
/// information in each conditional (1.0 for the untempered chain).
pub fn sweep<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    cache: &mut FitCache,
    rng: &mut R,
    beta_temper: f64,
    update_xi: bool,
    counters: &mut AcceptanceStats,
) -> Result<()> {
    let dims = ctx.dims;
    let (k_feat, p, m_comp, r_cov) = (
        dims.n_features,
        dims.n_basis,
        dims.n_components,
        dims.n_covariates,
    );
    let run_xi = update_xi && state.xi.is_some();

    // Pseudo-eigenvector coefficients.
    for j in 0..k_feat {
        for m in 0..m_comp {
            let cond = conditionals::phi_conditional(ctx, state, cache, j, m, beta_temper);
            let block = GaussianBlock::new(cond.prec, &cond.lin)?;
            state.phi[j][m] = block.sample(rng);
            cache.refresh_eigen_component(state, ctx.data, dims, ctx.basis, j, m);
        }
    }

    // Covariance slopes.
    if run_xi {
        for k in 0..k_feat {
            for m in 0..m_comp {
                for d in 0..r_cov {
                    let cond = conditionals::xi_conditional(ctx, state, cache, k, d, m, beta_temper);
                    let block = GaussianBlock::new(cond.prec, &cond.lin)?;
                    let draw = block.sample(rng);
                    state.xi.as_mut().unwrap().xi[k][m].set_column(d, &draw);
                    cache.refresh_eigen_component(state, ctx.data, dims, ctx.basis, k, m);
                }
            }
        }
    }

    // Shrinkage increments, their shapes, and local precisions.
    for k in 0..k_feat {
        for idx in 0..m_comp {
            let cond = conditionals::delta_conditional(ctx, state, k, idx);
            state.delta[(k, idx)] = sample_gamma(rng, cond.shape, cond.rate);
        }
    }
    for k in 0..k_feat {
        counters.a1.record(mh::step_a1(ctx, state, rng, k));
        counters.a2.record(mh::step_a2(ctx, state, rng, k));
    }
    for k in 0..k_feat {
        for m in 0..m_comp {
            for pp in 0..p {
                let cond = conditionals::gamma_conditional(ctx, state, k, pp, m);
                state.gamma[k][m][pp] = sample_gamma(rng, cond.shape, cond.rate);
            }
        }
    }

    if run_xi {
        for k in 0..k_feat {
            for r in 0..r_cov {
                for idx in 0..m_comp {
                    let cond = conditionals::delta_xi_conditional(ctx, state, k, r, idx);
                    state.xi.as_mut().unwrap().delta[k][(r, idx)] =
                        sample_gamma(rng, cond.shape, cond.rate);
                }
                counters.a1_xi.record(mh::step_a1_xi(ctx, state, rng, k, r));
                counters.a2_xi.record(mh::step_a2_xi(ctx, state, rng, k, r));
                for m in 0..m_comp {
                    for pp in 0..p {
                        let cond = conditionals::gamma_xi_conditional(ctx, state, k, r, pp, m);
                        state.xi.as_mut().unwrap().gamma[k][r][(pp, m)] =
                            sample_gamma(rng, cond.shape, cond.rate);
                    }
                }
            }
        }
    }

    // Mean structure.
    for j in 0..k_feat {
        let cond = conditionals::nu_conditional(ctx, state, cache, j, beta_temper);
        let block = GaussianBlock::new(cond.prec, &cond.lin)?;
        state.nu[j] = block.sample(rng);
        cache.refresh_mean_feature(state, ctx.data, dims, ctx.basis, j);
    }
    for j in 0..k_feat {
        for d in 0..r_cov {
            let cond = conditionals::eta_conditional(ctx, state, cache, j, d, beta_temper);
            let block = GaussianBlock::new(cond.prec, &cond.lin)?;
            let draw = block.sample(rng);
            state.eta[j].set_column(d, &draw);
            cache.refresh_mean_feature(state, ctx.data, dims, ctx.basis, j);
        }
    }

    // Smoothing precisions.
    for k in 0..k_feat {
        let cond = conditionals::tau_nu_conditional(ctx, state, k);
        state.tau_nu[k] = sample_gamma(rng, cond.shape, cond.rate);
        for r in 0..r_cov {
            let cond = conditionals::tau_eta_conditional(ctx, state, k, r);
            state.tau_eta[(k, r)] = sample_gamma(rng, cond.shape, cond.rate);
        }
    }

    // Allocation structure.
    for i in 0..dims.n_obs {
        counters
            .alloc
            .record(mh::step_alloc_row(ctx, state, cache, rng, i, beta_temper));
    }
    counters.pi.record(mh::step_pi(ctx, state, rng));
    counters.alpha3.record(mh::step_alpha3(ctx, state, rng));

    // Noise variance.
    let cond = conditionals::sigma2_conditional(ctx, state, cache, beta_temper);
    state.sigma2 = sample_inv_gamma(rng, cond.shape, cond.rate);

    // Latent scores.
    for i in 0..dims.n_obs {
        for m in 0..m_comp {
            let cond = conditionals::chi_conditional(ctx, state, cache, i, m, beta_temper);
            let mean = cond.lin / cond.prec;
            let sd = (1.0 / cond.prec).sqrt();
            let z: f64 = StandardNormal.sample(rng);
            state.chi[(i, m)] = mean + sd * z;
        }
    }

    Ok(())
}

/// Draw a full state from the prior. The smoothing `penalty` must be
/// positive definite here (pass a regularized penalty when a proper joint
/// is required, e.g. joint-distribution testing); the usual singular
/// random-walk penalty admits no prior draw for nu and eta.
pub fn draw_from_prior<R: Rng>(
    dims: &ModelDims,
    hyper: &HyperParams,
    penalty: &DMatrix<f64>,
    rng: &mut R,
    with_xi: bool,
) -> Result<ParameterState> {
    let (n, k_feat, p, m_comp, r_cov) = (
        dims.n_obs,
        dims.n_features,
        dims.n_basis,
        dims.n_components,
        dims.n_covariates,
    );
    let mut a1 = DVector::zeros(k_feat);
    let mut a2 = DVector::zeros(k_feat);
    let mut delta = DMatrix::zeros(k_feat, m_comp);
    let mut gamma = Vec::with_capacity(k_feat);
    for k in 0..k_feat {
        a1[k] = sample_gamma(rng, hyper.alpha1, hyper.beta1);
        a2[k] = sample_gamma(rng, hyper.alpha2, hyper.beta2);
        delta[(k, 0)] = sample_gamma(rng, a1[k], 1.0);
        for j in 1..m_comp {
            delta[(k, j)] = sample_gamma(rng, a2[k], 1.0);
        }
        let mut gk = Vec::with_capacity(m_comp);
        for _ in 0..m_comp {
            gk.push(DVector::from_fn(p, |_, _| {
                sample_gamma(rng, hyper.nu_gamma / 2.0, hyper.nu_gamma / 2.0)
            }));
        }
        gamma.push(gk);
    }

    let mut phi = Vec::with_capacity(k_feat);
    for k in 0..k_feat {
        let mut fk = Vec::with_capacity(m_comp);
        for m in 0..m_comp {
            let tau: f64 = (0..=m).map(|nn| delta[(k, nn)]).product();
            fk.push(DVector::from_fn(p, |pp, _| {
                let sd = (1.0 / (gamma[k][m][pp] * tau)).sqrt();
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            }));
        }
        phi.push(fk);
    }

    let mut tau_nu = DVector::zeros(k_feat);
    let mut tau_eta = DMatrix::zeros(k_feat, r_cov);
    let mut nu = Vec::with_capacity(k_feat);
    let mut eta = Vec::with_capacity(k_feat);
    let zero = DVector::zeros(p);
    for k in 0..k_feat {
        tau_nu[k] = sample_gamma(rng, hyper.alpha_nu, hyper.beta_nu);
        let block = GaussianBlock::new(penalty * tau_nu[k], &zero).map_err(|_| {
            Error::config("prior draws need a positive definite smoothing penalty")
        })?;
        nu.push(block.sample(rng));
        let mut ek = DMatrix::zeros(p, r_cov);
        for r in 0..r_cov {
            tau_eta[(k, r)] = sample_gamma(rng, hyper.alpha_eta, hyper.beta_eta);
            let block = GaussianBlock::new(penalty * tau_eta[(k, r)], &zero).map_err(|_| {
                Error::config("prior draws need a positive definite smoothing penalty")
            })?;
            ek.set_column(r, &block.sample(rng));
        }
        eta.push(ek);
    }

    let pi = sample_dirichlet(rng, &hyper.c_pi_vector());
    let alpha3 = -rng.gen::<f64>().ln() / hyper.b_alpha3;
    let mut alloc = DMatrix::zeros(n, k_feat);
    for i in 0..n {
        let mut row = sample_dirichlet(rng, &(&pi * alpha3));
        mh::clamp_to_interior(&mut row);
        alloc.row_mut(i).copy_from(&row.transpose());
    }
    let chi = DMatrix::from_fn(n, m_comp, |_, _| StandardNormal.sample(rng));
    let sigma2 = sample_inv_gamma(rng, hyper.alpha0, hyper.beta0);

    let xi = if with_xi {
        let mut block = XiBlock::zeros(dims);
        for k in 0..k_feat {
            for r in 0..r_cov {
                block.a1[(k, r)] = sample_gamma(rng, hyper.alpha1, hyper.beta1);
                block.a2[(k, r)] = sample_gamma(rng, hyper.alpha2, hyper.beta2);
                block.delta[k][(r, 0)] = sample_gamma(rng, block.a1[(k, r)], 1.0);
                for j in 1..m_comp {
                    block.delta[k][(r, j)] = sample_gamma(rng, block.a2[(k, r)], 1.0);
                }
                for m in 0..m_comp {
                    for pp in 0..p {
                        block.gamma[k][r][(pp, m)] =
                            sample_gamma(rng, hyper.nu_gamma / 2.0, hyper.nu_gamma / 2.0);
                    }
                }
            }
            for m in 0..m_comp {
                for r in 0..r_cov {
                    let tau = block.tau_tilde(k, r, m);
                    for pp in 0..p {
                        let sd = (1.0 / (block.gamma[k][r][(pp, m)] * tau)).sqrt();
                        let z: f64 = StandardNormal.sample(rng);
                        block.xi[k][m][(pp, r)] = sd * z;
                    }
                }
            }
        }
        Some(block)
    } else {
        None
    };

    Ok(ParameterState {
        nu,
        eta,
        phi,
        chi,
        alloc,
        pi,
        alpha3,
        sigma2,
        delta,
        a1,
        a2,
        gamma,
        tau_nu,
        tau_eta,
        xi,
    })
}

/// One randomized, data-informed starting point: feature means seeded from
/// ridge fits of randomly chosen curves, small random component structure,
/// and shrinkage parameters drawn from their priors.
fn random_start<R: Rng>(
    ctx: &SweepContext<'_>,
    rng: &mut R,
    with_xi: bool,
) -> Result<ParameterState> {
    let dims = ctx.dims;
    let (n, k_feat, p, m_comp, r_cov) = (
        dims.n_obs,
        dims.n_features,
        dims.n_basis,
        dims.n_components,
        dims.n_covariates,
    );

    // Pooled ridge fit for a baseline curve and residual scale.
    let mut gram_total = ctx.penalty.clone();
    for i in 0..n {
        gram_total += &ctx.basis.gram[i];
    }
    for d in 0..p {
        gram_total[(d, d)] += 1e-6;
    }
    let mut lin_total = DVector::zeros(p);
    for i in 0..n {
        lin_total += ctx.basis.rows[i].transpose() * &ctx.data.curves[i].values;
    }
    let pooled = GaussianBlock::new(gram_total, &lin_total)?;
    let pooled_coef = pooled.mean().clone();
    let mut ss = 0.0;
    for i in 0..n {
        let resid = &ctx.data.curves[i].values - &ctx.basis.rows[i] * &pooled_coef;
        ss += resid.norm_squared();
    }
    let resid_var = (ss / ctx.data.total_points() as f64).max(1e-4);

    // Per-curve ridge coefficients for feature seeds.
    let curve_coef = |i: usize| -> Result<DVector<f64>> {
        let mut g = ctx.basis.gram[i].clone() + ctx.penalty;
        for d in 0..p {
            g[(d, d)] += 1e-6;
        }
        let lin = ctx.basis.rows[i].transpose() * &ctx.data.curves[i].values;
        Ok(GaussianBlock::new(g, &lin)?.mean().clone())
    };
    let coefs: Vec<DVector<f64>> = (0..n).map(curve_coef).collect::<Result<_>>()?;

    // Farthest-point feature seeding: the first feature comes from a random
    // curve, later ones from the curve farthest (in coefficient space) from
    // everything already picked. The posterior is multimodal; well-separated
    // starts keep the short exploratory runs from collapsing onto one mode.
    let mut picked: Vec<usize> = vec![rng.gen_range(0..n)];
    while picked.len() < k_feat {
        let next = (0..n)
            .max_by(|a, b| {
                let da = picked
                    .iter()
                    .map(|j| (&coefs[*a] - &coefs[*j]).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                let db = picked
                    .iter()
                    .map(|j| (&coefs[*b] - &coefs[*j]).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db).expect("finite coefficient distances")
            })
            .expect("dataset is nonempty");
        picked.push(next);
    }
    let mut nu = Vec::with_capacity(k_feat);
    for pick in picked {
        let mut seed_coef = coefs[pick].clone();
        for v in seed_coef.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += 0.1 * resid_var.sqrt() * z;
        }
        nu.push(seed_coef);
    }
    let eta = (0..k_feat)
        .map(|_| {
            DMatrix::from_fn(p, r_cov, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                0.05 * z
            })
        })
        .collect();

    let mut a1 = DVector::zeros(k_feat);
    let mut a2 = DVector::zeros(k_feat);
    let mut delta = DMatrix::zeros(k_feat, m_comp);
    let mut gamma = Vec::with_capacity(k_feat);
    let mut phi = Vec::with_capacity(k_feat);
    for k in 0..k_feat {
        a1[k] = sample_gamma(rng, ctx.hyper.alpha1, ctx.hyper.beta1);
        a2[k] = sample_gamma(rng, ctx.hyper.alpha2, ctx.hyper.beta2);
        delta[(k, 0)] = sample_gamma(rng, a1[k], 1.0);
        for j in 1..m_comp {
            delta[(k, j)] = sample_gamma(rng, a2[k], 1.0);
        }
        let mut gk = Vec::with_capacity(m_comp);
        let mut fk = Vec::with_capacity(m_comp);
        for _ in 0..m_comp {
            gk.push(DVector::from_fn(p, |_, _| {
                sample_gamma(rng, ctx.hyper.nu_gamma / 2.0, ctx.hyper.nu_gamma / 2.0)
            }));
            fk.push(DVector::from_fn(p, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                0.3 * resid_var.sqrt() * z
            }));
        }
        gamma.push(gk);
        phi.push(fk);
    }

    let ones = DVector::from_element(k_feat, 1.0);
    let mut alloc = DMatrix::zeros(n, k_feat);
    for i in 0..n {
        let mut row = sample_dirichlet(rng, &ones);
        mh::clamp_to_interior(&mut row);
        alloc.row_mut(i).copy_from(&row.transpose());
    }

    let xi = if with_xi { Some(XiBlock::zeros(dims)) } else { None };

    Ok(ParameterState {
        nu,
        eta,
        phi,
        chi: DMatrix::from_fn(n, m_comp, |_, _| StandardNormal.sample(rng)),
        alloc,
        pi: DVector::from_element(k_feat, 1.0 / k_feat as f64),
        alpha3: 1.0,
        sigma2: (0.5 * resid_var).max(1e-4),
        delta,
        a1,
        a2,
        gamma,
        tau_nu: DVector::from_fn(k_feat, |_, _| sample_gamma(rng, ctx.hyper.alpha_nu, ctx.hyper.beta_nu)),
        tau_eta: DMatrix::from_fn(k_feat, r_cov, |_, _| {
            sample_gamma(rng, ctx.hyper.alpha_eta, ctx.hyper.beta_eta)
        }),
        xi,
    })
}

/// Multi-start initialization: run `n_starts` short chains from randomized
/// starting points and keep the state with the highest log posterior.
/// Returns the winner together with every start's final score.
pub fn initialize<R: Rng>(
    ctx: &SweepContext<'_>,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(ParameterState, Vec<f64>)> {
    let mut best: Option<(f64, ParameterState)> = None;
    let mut scores = Vec::with_capacity(config.n_starts);
    let mut scratch = AcceptanceStats::default();
    for _ in 0..config.n_starts {
        let mut state = random_start(ctx, rng, config.covariance_adjusted)?;
        let mut cache = FitCache::new(&state, ctx.data, ctx.dims, ctx.basis);
        for _ in 0..config.start_iters {
            sweep(
                ctx,
                &mut state,
                &mut cache,
                rng,
                1.0,
                config.covariance_adjusted,
                &mut scratch,
            )?;
        }
        let score = log_posterior(&state, ctx.data, ctx.dims, ctx.hyper, ctx.basis, ctx.penalty)?;
        scores.push(score);
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, state));
        }
    }
    Ok((best.expect("n_starts >= 1").1, scores))
}

/// Run one chain end to end: initialization, sweeps with optional tempered
/// transitions, and post-burn-in thinned storage. The basis domain defaults
/// to the observed time range.
pub fn run_chain(
    data: &FunctionalDataset,
    dims: &ModelDims,
    hyper: &HyperParams,
    config: &SamplerConfig,
) -> Result<ChainStore> {
    let spec = data.default_basis_spec(dims.n_basis)?;
    run_chain_with_basis(data, dims, hyper, config, &spec)
}

/// As [`run_chain`] with an explicit basis specification.
pub fn run_chain_with_basis(
    data: &FunctionalDataset,
    dims: &ModelDims,
    hyper: &HyperParams,
    config: &SamplerConfig,
    spec: &crate::basis::BasisSpec,
) -> Result<ChainStore> {
    config.validate()?;
    dims.validate()?;
    hyper.validate(dims)?;
    if data.n_obs() != dims.n_obs || data.n_covariates() != dims.n_covariates {
        return Err(Error::shape(format!(
            "dataset is {} x {} covariates but dims say {} x {}",
            data.n_obs(),
            data.n_covariates(),
            dims.n_obs,
            dims.n_covariates
        )));
    }
    let basis = BasisSet::for_dataset(spec, data)?;
    let penalty = penalty_matrix(dims.n_basis)?;
    let ctx = SweepContext {
        data,
        dims,
        hyper,
        basis: &basis,
        penalty: &penalty,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (mut state, _scores) = initialize(&ctx, config, &mut rng)?;
    let mut cache = FitCache::new(&state, data, dims, &basis);

    let ladder = geometric_ladder(config.tempering.n_rungs, config.tempering.beta_min);
    let mut counters = AcceptanceStats::default();
    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(config.n_iter);

    for iter in 0..config.n_iter {
        sweep(
            &ctx,
            &mut state,
            &mut cache,
            &mut rng,
            1.0,
            config.covariance_adjusted,
            &mut counters,
        )?;
        if config.tempering.enabled && (iter + 1) % config.tempering.interval == 0 {
            let outcome = tempered_transition(
                &ctx,
                &mut state,
                &mut cache,
                &mut rng,
                &ladder,
                config.covariance_adjusted,
                false,
            )?;
            counters.tempered.record(outcome.accepted);
        }
        trace.push(log_posterior(&state, data, dims, hyper, &basis, &penalty)?);
        if iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0 {
            samples.push(ChainSample::from_state(&state, config.store_hierarchy));
        }
    }

    Ok(ChainStore {
        dims: *dims,
        seed: config.seed,
        n_iter: config.n_iter,
        burn_in: config.burn_in,
        thin: config.thin,
        basis_spec: spec.clone(),
        samples,
        log_post_trace: trace,
        accept: counters,
    })
}
