//! Deterministic fixtures shared by unit, property, and acceptance tests:
//! small random states and datasets with every constraint satisfied.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::BasisSpec;
use crate::data::{BasisSet, Curve, FunctionalDataset};
use crate::model::{ModelDims, ParameterState, XiBlock};
use crate::numeric::{sample_dirichlet, sample_gamma};

/// Compact dimensions used throughout the unit tests.
pub fn small_dims() -> ModelDims {
    ModelDims {
        n_obs: 5,
        n_features: 2,
        n_basis: 4,
        n_components: 2,
        n_covariates: 2,
    }
}

/// A valid random state with moderate parameter magnitudes.
pub fn random_state(dims: &ModelDims, seed: u64) -> ParameterState {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    random_state_with(dims, &mut rng, false)
}

/// As [`random_state`] but with the covariance extension populated.
pub fn random_state_with_xi(dims: &ModelDims, seed: u64) -> ParameterState {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    random_state_with(dims, &mut rng, true)
}

pub fn random_state_with<R: Rng>(dims: &ModelDims, rng: &mut R, with_xi: bool) -> ParameterState {
    let (n, k_feat, p, m_comp, r_cov) = (
        dims.n_obs,
        dims.n_features,
        dims.n_basis,
        dims.n_components,
        dims.n_covariates,
    );
    let normal = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
    let pos = |rng: &mut R| 0.2 + sample_gamma(rng, 2.0, 1.5);

    let nu = (0..k_feat)
        .map(|_| DVector::from_fn(p, |_, _| normal(rng)))
        .collect();
    let eta = (0..k_feat)
        .map(|_| DMatrix::from_fn(p, r_cov, |_, _| normal(rng)))
        .collect();
    let phi = (0..k_feat)
        .map(|_| {
            (0..m_comp)
                .map(|_| DVector::from_fn(p, |_, _| normal(rng)))
                .collect()
        })
        .collect();
    let gamma = (0..k_feat)
        .map(|_| {
            (0..m_comp)
                .map(|_| DVector::from_fn(p, |_, _| pos(rng)))
                .collect()
        })
        .collect();
    let ones = DVector::from_element(k_feat, 1.0);
    let mut alloc = DMatrix::zeros(n, k_feat);
    for i in 0..n {
        let mut row = sample_dirichlet(rng, &ones);
        crate::sampler::mh::clamp_to_interior(&mut row);
        alloc.row_mut(i).copy_from(&row.transpose());
    }
    let mut pi = sample_dirichlet(rng, &ones);
    crate::sampler::mh::clamp_to_interior(&mut pi);

    let xi = with_xi.then(|| {
        let mut block = XiBlock::zeros(dims);
        for k in 0..k_feat {
            for m in 0..m_comp {
                for r in 0..r_cov {
                    for pp in 0..p {
                        block.xi[k][m][(pp, r)] = 0.5 * normal(rng);
                    }
                }
            }
            for r in 0..r_cov {
                block.a1[(k, r)] = pos(rng);
                block.a2[(k, r)] = pos(rng);
                for m in 0..m_comp {
                    block.delta[k][(r, m)] = pos(rng);
                    for pp in 0..p {
                        block.gamma[k][r][(pp, m)] = pos(rng);
                    }
                }
            }
        }
        block
    });

    ParameterState {
        nu,
        eta,
        phi,
        chi: DMatrix::from_fn(n, m_comp, |_, _| normal(rng)),
        alloc,
        pi,
        alpha3: pos(rng),
        sigma2: pos(rng),
        delta: DMatrix::from_fn(k_feat, m_comp, |_, _| pos(rng)),
        a1: DVector::from_fn(k_feat, |_, _| pos(rng)),
        a2: DVector::from_fn(k_feat, |_, _| pos(rng)),
        gamma,
        tau_nu: DVector::from_fn(k_feat, |_, _| pos(rng)),
        tau_eta: DMatrix::from_fn(k_feat, r_cov, |_, _| pos(rng)),
        xi,
    }
}

/// A random dataset on [0, 1] with n_i > P points per curve, plus its
/// evaluated cubic basis.
pub fn random_dataset(dims: &ModelDims, seed: u64) -> (FunctionalDataset, BasisSet) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut curves = Vec::with_capacity(dims.n_obs);
    for i in 0..dims.n_obs {
        let n_i = dims.n_basis + 2 + (i % 2);
        let times: Vec<f64> = (0..n_i).map(|l| l as f64 / (n_i - 1) as f64).collect();
        let values = DVector::from_fn(n_i, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        });
        curves.push(Curve {
            id: format!("{i}"),
            times,
            values,
        });
    }
    let design = DMatrix::from_fn(dims.n_obs, dims.n_covariates, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let data = FunctionalDataset::new(curves, design).unwrap();
    let spec = BasisSpec::cubic(dims.n_basis, 0.0, 1.0);
    let basis = BasisSet::for_dataset(&spec, &data).unwrap();
    (data, basis)
}
