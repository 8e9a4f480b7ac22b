//! Metropolis-Hastings blocks: shrinkage shapes a1/a2 (and their xi
//! analogues), allocation rows, population weights pi, and the
//! concentration alpha3. Targets and proposal densities are exposed so the
//! detailed-balance audits evaluate exactly what the sampler runs.

use nalgebra::DVector;
use rand::Rng;

use crate::model::ParameterState;
use crate::numeric::{
    ln_dirichlet_pdf, ln_gamma_pdf, ln_truncated_normal_pdf, sample_dirichlet,
    sample_truncated_normal,
};

use super::context::SweepContext;
use super::FitCache;

/// Log acceptance probability from target and proposal log densities:
/// min(0, target' - target + q_reverse - q_forward).
pub fn ln_accept(target_cur: f64, target_prop: f64, q_forward: f64, q_reverse: f64) -> f64 {
    (target_prop - target_cur + q_reverse - q_forward).min(0.0)
}

fn accept<R: Rng>(rng: &mut R, ln_a: f64) -> bool {
    if ln_a >= 0.0 {
        return true;
    }
    rng.gen::<f64>().ln() < ln_a
}

/// Unnormalized log target for a1_k: the Gamma(a1, 1) density of delta_1k
/// times the Gamma(alpha1, beta1) hyperprior.
pub fn ln_target_a1(ctx: &SweepContext<'_>, state: &ParameterState, k: usize, value: f64) -> f64 {
    if value <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma_pdf(state.delta[(k, 0)], value, 1.0)
        + ln_gamma_pdf(value, ctx.hyper.alpha1, ctx.hyper.beta1)
}

/// Unnormalized log target for a2_k: the Gamma(a2, 1) densities of
/// delta_{jk}, j >= 2, times the Gamma(alpha2, beta2) hyperprior.
pub fn ln_target_a2(ctx: &SweepContext<'_>, state: &ParameterState, k: usize, value: f64) -> f64 {
    if value <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut out = ln_gamma_pdf(value, ctx.hyper.alpha2, ctx.hyper.beta2);
    for j in 1..ctx.dims.n_components {
        out += ln_gamma_pdf(state.delta[(k, j)], value, 1.0);
    }
    out
}

/// Log target for one allocation row: Dirichlet(alpha3 pi) prior plus the
/// (tempered) Gaussian likelihood of curve i evaluated at `row`.
pub fn ln_target_alloc_row(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    cache: &FitCache,
    i: usize,
    row: &DVector<f64>,
    beta_temper: f64,
) -> f64 {
    if row.iter().any(|z| !(*z > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let conc = &state.pi * state.alpha3;
    let mut out = ln_dirichlet_pdf(row, &conc);
    let inv = beta_temper / (2.0 * state.sigma2);
    for l in 0..ctx.basis.rows[i].nrows() {
        let fit = cache.fitted_point_with_alloc(state, ctx.dims, i, l, row);
        let r = ctx.data.curves[i].values[l] - fit;
        out -= inv * r * r;
    }
    out
}

/// Log target for pi: Dirichlet(c_pi) prior times the Dirichlet(alpha3 pi)
/// densities of every allocation row.
pub fn ln_target_pi(ctx: &SweepContext<'_>, state: &ParameterState, pi: &DVector<f64>) -> f64 {
    if pi.iter().any(|v| !(*v > 0.0)) {
        return f64::NEG_INFINITY;
    }
    let mut out = ln_dirichlet_pdf(pi, &ctx.hyper.c_pi_vector());
    let conc = pi * state.alpha3;
    for i in 0..ctx.dims.n_obs {
        out += ln_dirichlet_pdf(&state.alloc.row(i).transpose(), &conc);
    }
    out
}

/// Log target for alpha3: Exp(b) prior times the Dirichlet(alpha3 pi)
/// densities of every allocation row.
pub fn ln_target_alpha3(ctx: &SweepContext<'_>, state: &ParameterState, value: f64) -> f64 {
    if value <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut out = -ctx.hyper.b_alpha3 * value;
    let conc = &state.pi * value;
    for i in 0..ctx.dims.n_obs {
        out += ln_dirichlet_pdf(&state.alloc.row(i).transpose(), &conc);
    }
    out
}

/// Truncated-normal random-walk step for a1_k. Returns whether the proposal
/// was accepted.
pub fn step_a1<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    rng: &mut R,
    k: usize,
) -> bool {
    let var = ctx.hyper.eps1 / ctx.hyper.beta1;
    let cur = state.a1[k];
    let prop = sample_truncated_normal(rng, cur, var);
    let ln_a = ln_accept(
        ln_target_a1(ctx, state, k, cur),
        ln_target_a1(ctx, state, k, prop),
        ln_truncated_normal_pdf(prop, cur, var),
        ln_truncated_normal_pdf(cur, prop, var),
    );
    let ok = accept(rng, ln_a);
    if ok {
        state.a1[k] = prop;
    }
    ok
}

/// Truncated-normal random-walk step for a2_k.
pub fn step_a2<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    rng: &mut R,
    k: usize,
) -> bool {
    let var = ctx.hyper.eps2 / ctx.hyper.beta2;
    let cur = state.a2[k];
    let prop = sample_truncated_normal(rng, cur, var);
    let ln_a = ln_accept(
        ln_target_a2(ctx, state, k, cur),
        ln_target_a2(ctx, state, k, prop),
        ln_truncated_normal_pdf(prop, cur, var),
        ln_truncated_normal_pdf(cur, prop, var),
    );
    let ok = accept(rng, ln_a);
    if ok {
        state.a2[k] = prop;
    }
    ok
}

/// Dirichlet random-walk step for one allocation row. The current row is
/// clamped to the interior of the simplex first (the proposal is undefined
/// on the boundary); clamping is logged.
pub fn step_alloc_row<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    cache: &FitCache,
    rng: &mut R,
    i: usize,
    beta_temper: f64,
) -> bool {
    let mut cur = state.alloc.row(i).transpose();
    if clamp_to_interior(&mut cur) {
        log::warn!("allocation row {i} clamped to the simplex interior");
        state.alloc.row_mut(i).copy_from(&cur.transpose());
    }
    let a_z = ctx.hyper.a_z;
    let prop = sample_dirichlet(rng, &(&cur * a_z));
    if prop.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return false;
    }
    let ln_a = ln_accept(
        ln_target_alloc_row(ctx, state, cache, i, &cur, beta_temper),
        ln_target_alloc_row(ctx, state, cache, i, &prop, beta_temper),
        ln_dirichlet_pdf(&prop, &(&cur * a_z)),
        ln_dirichlet_pdf(&cur, &(&prop * a_z)),
    );
    let ok = accept(rng, ln_a);
    if ok {
        state.alloc.row_mut(i).copy_from(&prop.transpose());
    }
    ok
}

/// Dirichlet random-walk step for pi.
pub fn step_pi<R: Rng>(ctx: &SweepContext<'_>, state: &mut ParameterState, rng: &mut R) -> bool {
    let a_pi = ctx.hyper.a_pi;
    let cur = state.pi.clone();
    let prop = sample_dirichlet(rng, &(&cur * a_pi));
    if prop.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return false;
    }
    let ln_a = ln_accept(
        ln_target_pi(ctx, state, &cur),
        ln_target_pi(ctx, state, &prop),
        ln_dirichlet_pdf(&prop, &(&cur * a_pi)),
        ln_dirichlet_pdf(&cur, &(&prop * a_pi)),
    );
    let ok = accept(rng, ln_a);
    if ok {
        state.pi = prop;
    }
    ok
}

/// Truncated-normal random-walk step for alpha3.
pub fn step_alpha3<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    rng: &mut R,
) -> bool {
    let var = ctx.hyper.sigma2_alpha3;
    let cur = state.alpha3;
    let prop = sample_truncated_normal(rng, cur, var);
    let ln_a = ln_accept(
        ln_target_alpha3(ctx, state, cur),
        ln_target_alpha3(ctx, state, prop),
        ln_truncated_normal_pdf(prop, cur, var),
        ln_truncated_normal_pdf(cur, prop, var),
    );
    let ok = accept(rng, ln_a);
    if ok {
        state.alpha3 = prop;
    }
    ok
}

/// xi-hierarchy analogue of the a1 target.
pub fn ln_target_a1_xi(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
    r: usize,
    value: f64,
) -> f64 {
    if value <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let block = state.xi.as_ref().expect("a1_xi requires the extension");
    ln_gamma_pdf(block.delta[k][(r, 0)], value, 1.0)
        + ln_gamma_pdf(value, ctx.hyper.alpha1, ctx.hyper.beta1)
}

/// xi-hierarchy analogue of the a2 target.
pub fn ln_target_a2_xi(
    ctx: &SweepContext<'_>,
    state: &ParameterState,
    k: usize,
    r: usize,
    value: f64,
) -> f64 {
    if value <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let block = state.xi.as_ref().expect("a2_xi requires the extension");
    let mut out = ln_gamma_pdf(value, ctx.hyper.alpha2, ctx.hyper.beta2);
    for j in 1..ctx.dims.n_components {
        out += ln_gamma_pdf(block.delta[k][(r, j)], value, 1.0);
    }
    out
}

pub fn step_a1_xi<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    rng: &mut R,
    k: usize,
    r: usize,
) -> bool {
    let var = ctx.hyper.eps1 / ctx.hyper.beta1;
    let cur = state.xi.as_ref().expect("extension required").a1[(k, r)];
    let prop = sample_truncated_normal(rng, cur, var);
    let ln_a = ln_accept(
        ln_target_a1_xi(ctx, state, k, r, cur),
        ln_target_a1_xi(ctx, state, k, r, prop),
        ln_truncated_normal_pdf(prop, cur, var),
        ln_truncated_normal_pdf(cur, prop, var),
    );
    let ok = accept(rng, ln_a);
    if ok {
        state.xi.as_mut().unwrap().a1[(k, r)] = prop;
    }
    ok
}

pub fn step_a2_xi<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    rng: &mut R,
    k: usize,
    r: usize,
) -> bool {
    let var = ctx.hyper.eps2 / ctx.hyper.beta2;
    let cur = state.xi.as_ref().expect("extension required").a2[(k, r)];
    let prop = sample_truncated_normal(rng, cur, var);
    let ln_a = ln_accept(
        ln_target_a2_xi(ctx, state, k, r, cur),
        ln_target_a2_xi(ctx, state, k, r, prop),
        ln_truncated_normal_pdf(prop, cur, var),
        ln_truncated_normal_pdf(cur, prop, var),
    );
    let ok = accept(rng, ln_a);
    if ok {
        state.xi.as_mut().unwrap().a2[(k, r)] = prop;
    }
    ok
}

/// Push boundary-touching entries to eps = 1e-8 and renormalize. Returns
/// whether anything changed.
pub fn clamp_to_interior(row: &mut DVector<f64>) -> bool {
    const EPS: f64 = 1e-8;
    let mut clamped = false;
    for v in row.iter_mut() {
        if !(*v > EPS) {
            *v = EPS;
            clamped = true;
        }
    }
    if clamped {
        let total = row.sum();
        *row /= total;
    }
    clamped
}
