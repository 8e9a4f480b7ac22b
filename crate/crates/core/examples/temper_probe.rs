//! Scratch probe: does tempering rescue a stuck chain? (not part of the suite)
use cafmm::diagnostics::{rmse_alloc};
use cafmm::model::HyperParams;
use cafmm::sampler::{run_chain_with_basis, SamplerConfig, TemperingConfig};
use cafmm::simulation::{generate, ScenarioKind, ScenarioSpec};
use std::time::Instant;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let n_rungs: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let beta_min: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let interval: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(25);
    let n_starts: usize = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(3);
    let g = generate(&ScenarioSpec::new(ScenarioKind::OneCov, 200, seed)).unwrap();
    let hyper = HyperParams::defaults(2);
    let config = SamplerConfig {
        n_iter: 20000, burn_in: 10000, thin: 50,
        seed: seed * 1000 + 17,
        n_starts, start_iters: 100,
        tempering: TemperingConfig { enabled: n_rungs > 0, n_rungs: n_rungs.max(1), beta_min, interval },
        ..SamplerConfig::default()
    };
    let t0 = Instant::now();
    let chain = run_chain_with_basis(&g.data, &g.dims, &hyper, &config, &g.basis_spec).unwrap();
    let mean_state = chain.posterior_mean_state().unwrap();
    let (rmse, _) = rmse_alloc(&g.truth.alloc, &mean_state.alloc).unwrap();
    println!(
        "seed={seed} rungs={n_rungs} beta_min={beta_min} interval={interval} starts={n_starts}: {:.0?} alloc RMSE {rmse:.4} temper acc {:.3} ({} moves)",
        t0.elapsed(), chain.accept.tempered.rate(), chain.accept.tempered.proposed
    );
}
