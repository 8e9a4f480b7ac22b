//! Scratch probe: mode stickiness across sampler seeds for one dataset.
use cafmm::diagnostics::rmse_alloc;
use cafmm::model::HyperParams;
use cafmm::sampler::{run_chain_with_basis, SamplerConfig};
use cafmm::simulation::{generate, ScenarioKind, ScenarioSpec};

fn main() {
    let data_seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let chain_seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let g = generate(&ScenarioSpec::new(ScenarioKind::OneCov, 200, data_seed)).unwrap();
    let hyper = HyperParams::defaults(2);
    let config = SamplerConfig {
        n_iter: 20000, burn_in: 10000, thin: 50, seed: chain_seed,
        n_starts: 5, start_iters: 2000, ..SamplerConfig::default()
    };
    let chain = run_chain_with_basis(&g.data, &g.dims, &hyper, &config, &g.basis_spec).unwrap();
    let mean_state = chain.posterior_mean_state().unwrap();
    let (rmse, _) = rmse_alloc(&g.truth.alloc, &mean_state.alloc).unwrap();
    let final_lp = chain.log_post_trace.last().unwrap();
    println!("data_seed={data_seed} chain_seed={chain_seed}: alloc RMSE {rmse:.4} final logpost {final_lp:.1}");
}
