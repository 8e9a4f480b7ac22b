//! Scratch probe: multi-start log-posterior spread on a stuck seed.
use cafmm::basis::penalty_matrix;
use cafmm::data::BasisSet;
use cafmm::model::HyperParams;
use cafmm::sampler::{initialize, SamplerConfig, SweepContext};
use cafmm::simulation::{generate, ScenarioKind, ScenarioSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let n_starts: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let start_iters: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(300);
    let g = generate(&ScenarioSpec::new(ScenarioKind::OneCov, 200, seed)).unwrap();
    let hyper = HyperParams::defaults(2);
    let basis = BasisSet::for_dataset(&g.basis_spec, &g.data).unwrap();
    let penalty = penalty_matrix(8).unwrap();
    let ctx = SweepContext { data: &g.data, dims: &g.dims, hyper: &hyper, basis: &basis, penalty: &penalty };
    let config = SamplerConfig { n_starts, start_iters, seed: seed * 1000 + 17, ..SamplerConfig::default() };
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (_state, scores) = initialize(&ctx, &config, &mut rng).unwrap();
    println!("seed={seed} start scores: {:?}", scores.iter().map(|s| (s / 1000.0 * 10.0).round() / 10.0).collect::<Vec<_>>());
}
