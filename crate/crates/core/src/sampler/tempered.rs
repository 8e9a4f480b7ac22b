//! Tempered transitions: sweep up and down a ladder of flattened
//! likelihoods and accept or reject the whole trajectory at once.

use rand::Rng;

use crate::chain::AcceptanceStats;
use crate::error::Result;
use crate::model::{loglik_conditional, ParameterState};

use super::{sweep, FitCache, SweepContext};

/// Geometric inverse-temperature ladder from 1 down to `beta_min`, with
/// `n_rungs + 1` entries.
pub fn geometric_ladder(n_rungs: usize, beta_min: f64) -> Vec<f64> {
    assert!(n_rungs >= 1, "ladder needs at least one rung");
    assert!(beta_min > 0.0 && beta_min <= 1.0);
    (0..=n_rungs)
        .map(|h| beta_min.powf(h as f64 / n_rungs as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TemperedOutcome {
    pub accepted: bool,
    pub log_accept_ratio: f64,
    /// Untempered conditional log likelihood of every trajectory state
    /// Theta_0 ... Theta_{2 N_t}.
    pub loglik_trace: Vec<f64>,
    /// Trajectory states, recorded only when requested (used by the
    /// acceptance-ratio audits).
    pub states: Option<Vec<ParameterState>>,
}

/// One tempered-transition move. Runs 2 N_t sweeps under the tempered
/// conditionals (up the ladder then back down, with the coldest rung used
/// twice), then accepts the whole trajectory with the telescoping product
/// ratio. On rejection the state and cache are restored exactly.
pub fn tempered_transition<R: Rng>(
    ctx: &SweepContext<'_>,
    state: &mut ParameterState,
    cache: &mut FitCache,
    rng: &mut R,
    ladder: &[f64],
    update_xi: bool,
    record_states: bool,
) -> Result<TemperedOutcome> {
    let n_t = ladder.len() - 1;
    assert!(n_t >= 1, "ladder needs at least one rung");
    debug_assert!((ladder[0] - 1.0).abs() < 1e-15, "ladder must start at 1");

    // Inverse temperature used by the h-th transition, h = 1..=2*N_t:
    // beta_1 ... beta_{N_t}, beta_{N_t}, ..., beta_1.
    let beta_tilde = |h: usize| -> f64 {
        if h <= n_t {
            ladder[h]
        } else {
            ladder[2 * n_t - h + 1]
        }
    };

    let origin = state.clone();
    let mut scratch = AcceptanceStats::default();
    let mut trace = Vec::with_capacity(2 * n_t + 1);
    let mut states = record_states.then(Vec::new);

    let w0 = loglik_conditional(state, ctx.data, ctx.dims, ctx.basis)?;
    trace.push(w0);
    if let Some(s) = states.as_mut() {
        s.push(state.clone());
    }
    // Coefficient of w(Theta_h) in the telescoping log ratio; every
    // coefficient is an exact difference of ladder entries, so a constant
    // ladder yields exactly zero.
    let mut log_ratio = (beta_tilde(1) - ladder[0]) * w0;

    for h in 1..=(2 * n_t) {
        sweep(ctx, state, cache, rng, beta_tilde(h), update_xi, &mut scratch)?;
        let w = loglik_conditional(state, ctx.data, ctx.dims, ctx.basis)?;
        trace.push(w);
        if let Some(s) = states.as_mut() {
            s.push(state.clone());
        }
        let coeff = if h < 2 * n_t {
            beta_tilde(h + 1) - beta_tilde(h)
        } else {
            ladder[0] - beta_tilde(2 * n_t)
        };
        log_ratio += coeff * w;
    }

    let accepted = log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio;
    if !accepted {
        *state = origin;
        *cache = FitCache::new(state, ctx.data, ctx.dims, ctx.basis);
    }
    Ok(TemperedOutcome {
        accepted,
        log_accept_ratio: log_ratio,
        loglik_trace: trace,
        states,
    })
}
