//! Scratch probe: structure recovery at desk scale (not part of the test suite).
use cafmm::diagnostics::{rmise_surface, rmse_alloc, posterior_summary};
use cafmm::identifiability::{relabel_chain, rescale_separability};
use cafmm::model::{mean_curve, HyperParams};
use cafmm::sampler::{run_chain_with_basis, SamplerConfig};
use cafmm::simulation::{generate, ScenarioKind, ScenarioSpec};
use cafmm::basis::build_basis;
use nalgebra::DVector;
use std::time::Instant;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let iters: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let g = generate(&ScenarioSpec::new(ScenarioKind::OneCov, n, seed)).unwrap();
    let hyper = HyperParams::defaults(g.dims.n_features);
    let config = SamplerConfig {
        n_iter: iters,
        burn_in: iters / 2,
        thin: ((iters / 2) / 200).max(1),
        seed: seed * 1000 + 17,
        n_starts: 3,
        start_iters: 100,
        ..SamplerConfig::default()
    };
    let t0 = Instant::now();
    let chain = run_chain_with_basis(&g.data, &g.dims, &hyper, &config, &g.basis_spec).unwrap();
    let fit_time = t0.elapsed();
    let best = chain.best_sample_index().unwrap();
    let chain = relabel_chain(&chain, best).unwrap();
    let (chain, _skipped) = rescale_separability(&chain).unwrap();

    // allocation rmse
    let mean_state = chain.posterior_mean_state().unwrap();
    let (rmse, perm) = rmse_alloc(&g.truth.alloc, &mean_state.alloc).unwrap();

    // mean-structure R-MISE over (t, x) surface per feature
    let t_grid: Vec<f64> = (0..25).map(|i| i as f64 / 24.0).collect();
    let x_grid: Vec<f64> = (0..11).map(|i| -6.0 + 12.0 * i as f64 / 10.0).collect();
    let bm = build_basis(&g.basis_spec, &t_grid).unwrap();
    let mut total_rmise = 0.0;
    for k in 0..2 {
        let mut truth_surf = Vec::new();
        let mut est_surf = Vec::new();
        for x in &x_grid {
            let xv = DVector::from_vec(vec![*x]);
            let truth_curve = mean_curve(&g.truth, &g.dims, k, &xv, &bm).unwrap();
            truth_surf.push(truth_curve.iter().cloned().collect::<Vec<_>>());
            let summ = posterior_summary(&chain, &t_grid, perm[k], &xv).unwrap();
            est_surf.push(summ.median);
        }
        let r = rmise_surface(&t_grid, &x_grid, &truth_surf, &est_surf).unwrap();
        println!("feature {k}: mean R-MISE {r:.3}%");
        total_rmise += r / 2.0;
    }
    println!(
        "N={n} iters={iters} seed={seed}: fit {:.1?}s alloc RMSE {rmse:.4} mean R-MISE {total_rmise:.3}% accept z={:.2} pi={:.2} a3={:.2}",
        fit_time, chain.accept.alloc.rate(), chain.accept.pi.rate(), chain.accept.alpha3.rate()
    );
}
