//! Iteration-major archive of sampled states with burn-in/thinning metadata.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::model::{ModelDims, ParameterState, XiBlock};
use crate::numeric::mat_axpy;

/// Accept/propose counter for one Metropolis-Hastings block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub accepted: u64,
    pub proposed: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub a1: Counter,
    pub a2: Counter,
    pub alloc: Counter,
    pub pi: Counter,
    pub alpha3: Counter,
    pub a1_xi: Counter,
    pub a2_xi: Counter,
    pub tempered: Counter,
}

/// Optional per-sample shrinkage hierarchy snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySample {
    pub delta: DMatrix<f64>,
    pub a1: DVector<f64>,
    pub a2: DVector<f64>,
    pub gamma: Vec<Vec<DVector<f64>>>,
    pub tau_nu: DVector<f64>,
    pub tau_eta: DMatrix<f64>,
}

/// One stored iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    pub nu: Vec<DVector<f64>>,
    pub eta: Vec<DMatrix<f64>>,
    pub phi: Vec<Vec<DVector<f64>>>,
    pub alloc: DMatrix<f64>,
    pub chi: DMatrix<f64>,
    pub pi: DVector<f64>,
    pub alpha3: f64,
    pub sigma2: f64,
    pub hierarchy: Option<HierarchySample>,
    /// Covariance-slope matrices when the extension is enabled: `[k][m]`, P x R.
    pub xi: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl ChainSample {
    pub fn from_state(state: &ParameterState, store_hierarchy: bool) -> Self {
        ChainSample {
            nu: state.nu.clone(),
            eta: state.eta.clone(),
            phi: state.phi.clone(),
            alloc: state.alloc.clone(),
            chi: state.chi.clone(),
            pi: state.pi.clone(),
            alpha3: state.alpha3,
            sigma2: state.sigma2,
            hierarchy: store_hierarchy.then(|| HierarchySample {
                delta: state.delta.clone(),
                a1: state.a1.clone(),
                a2: state.a2.clone(),
                gamma: state.gamma.clone(),
                tau_nu: state.tau_nu.clone(),
                tau_eta: state.tau_eta.clone(),
            }),
            xi: state.xi.as_ref().map(|b| b.xi.clone()),
        }
    }

    /// Rebuild a full parameter state, filling unstored hierarchy fields
    /// with neutral values. Suitable for likelihood and mean-structure
    /// evaluations, which never read the hierarchy.
    pub fn to_state(&self, dims: &ModelDims) -> ParameterState {
        let (k_feat, p, m_comp, r_cov) = (
            dims.n_features,
            dims.n_basis,
            dims.n_components,
            dims.n_covariates,
        );
        let hierarchy = self.hierarchy.clone().unwrap_or_else(|| HierarchySample {
            delta: DMatrix::from_element(k_feat, m_comp, 1.0),
            a1: DVector::from_element(k_feat, 1.0),
            a2: DVector::from_element(k_feat, 1.0),
            gamma: (0..k_feat)
                .map(|_| (0..m_comp).map(|_| DVector::from_element(p, 1.0)).collect())
                .collect(),
            tau_nu: DVector::from_element(k_feat, 1.0),
            tau_eta: DMatrix::from_element(k_feat, r_cov, 1.0),
        });
        let xi = self.xi.as_ref().map(|xi| {
            let mut block = XiBlock::zeros(dims);
            block.xi = xi.clone();
            block
        });
        ParameterState {
            nu: self.nu.clone(),
            eta: self.eta.clone(),
            phi: self.phi.clone(),
            chi: self.chi.clone(),
            alloc: self.alloc.clone(),
            pi: self.pi.clone(),
            alpha3: self.alpha3,
            sigma2: self.sigma2,
            delta: hierarchy.delta,
            a1: hierarchy.a1,
            a2: hierarchy.a2,
            gamma: hierarchy.gamma,
            tau_nu: hierarchy.tau_nu,
            tau_eta: hierarchy.tau_eta,
            xi,
        }
    }
}

/// Archive of one chain: stored samples, the full log-posterior trace, and
/// acceptance statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    pub dims: ModelDims,
    pub seed: u64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub basis_spec: BasisSpec,
    pub samples: Vec<ChainSample>,
    pub log_post_trace: Vec<f64>,
    pub accept: AcceptanceStats,
}

impl ChainStore {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Index of the stored sample nearest to the maximum of the
    /// log-posterior trace among stored iterations.
    pub fn best_sample_index(&self) -> Result<usize> {
        if self.samples.is_empty() {
            return Err(Error::validation("chain has no stored samples"));
        }
        // Stored iteration s corresponds to trace index
        // burn_in + (s + 1) * thin - 1.
        let mut best = 0usize;
        let mut best_lp = f64::NEG_INFINITY;
        for s in 0..self.samples.len() {
            let idx = self.burn_in + (s + 1) * self.thin - 1;
            let lp = self.log_post_trace.get(idx).copied().unwrap_or(f64::NEG_INFINITY);
            if lp > best_lp {
                best_lp = lp;
                best = s;
            }
        }
        Ok(best)
    }

    /// Posterior-mean parameters across stored samples (including chi),
    /// used by the plug-in information criteria.
    pub fn posterior_mean_state(&self) -> Result<ParameterState> {
        if self.samples.is_empty() {
            return Err(Error::validation("chain has no stored samples"));
        }
        let dims = self.dims;
        let mut mean = self.samples[0].to_state(&dims);
        let n = self.samples.len() as f64;
        let scale = 1.0 / n;
        // start from zeroed accumulators
        for k in 0..dims.n_features {
            mean.nu[k].fill(0.0);
            mean.eta[k].fill(0.0);
            for m in 0..dims.n_components {
                mean.phi[k][m].fill(0.0);
            }
        }
        mean.alloc.fill(0.0);
        mean.chi.fill(0.0);
        mean.pi.fill(0.0);
        mean.alpha3 = 0.0;
        mean.sigma2 = 0.0;
        if let Some(block) = mean.xi.as_mut() {
            for bk in block.xi.iter_mut() {
                for x in bk.iter_mut() {
                    x.fill(0.0);
                }
            }
        }
        for s in &self.samples {
            for k in 0..dims.n_features {
                mean.nu[k].axpy(scale, &s.nu[k], 1.0);
                mat_axpy(&mut mean.eta[k], scale, &s.eta[k]);
                for m in 0..dims.n_components {
                    mean.phi[k][m].axpy(scale, &s.phi[k][m], 1.0);
                }
            }
            mat_axpy(&mut mean.alloc, scale, &s.alloc);
            mat_axpy(&mut mean.chi, scale, &s.chi);
            mean.pi.axpy(scale, &s.pi, 1.0);
            mean.alpha3 += scale * s.alpha3;
            mean.sigma2 += scale * s.sigma2;
            if let (Some(block), Some(sx)) = (mean.xi.as_mut(), s.xi.as_ref()) {
                for k in 0..dims.n_features {
                    for m in 0..dims.n_components {
                        mat_axpy(&mut block.xi[k][m], scale, &sx[k][m]);
                    }
                }
            }
        }
        // allocation rows remain on the simplex under averaging up to
        // rounding; renormalize defensively is unnecessary, but pi and rows
        // can drift at the 1e-16 level, which the validators tolerate.
        Ok(mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::testing::{random_state, small_dims};

    #[test]
    fn sample_roundtrip_preserves_core_fields() {
        let dims = small_dims();
        let state = random_state(&dims, 7);
        let sample = ChainSample::from_state(&state, true);
        let back = sample.to_state(&dims);
        assert_eq!(back.nu, state.nu);
        assert_eq!(back.eta, state.eta);
        assert_eq!(back.phi, state.phi);
        assert_eq!(back.alloc, state.alloc);
        assert_eq!(back.chi, state.chi);
        assert_eq!(back.delta, state.delta);
        assert_eq!(back.sigma2, state.sigma2);
    }

    #[test]
    fn counter_rate() {
        let mut c = Counter::default();
        c.record(true);
        c.record(false);
        c.record(true);
        assert_eq!(c.rate(), 2.0 / 3.0);
    }
}
