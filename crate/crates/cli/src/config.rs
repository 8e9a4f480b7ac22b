//! Fit configuration file schema. Unknown keys are rejected; every default
//! is materialized into the run manifest so a run can be reproduced from it.

use cafmm::model::{HyperParams, ModelDims};
use cafmm::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub n_features: usize,
    pub n_components: usize,
    pub n_basis: usize,
}

/// Optional overrides of the hyperparameter defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperOverrides {
    pub alpha1: Option<f64>,
    pub beta1: Option<f64>,
    pub alpha2: Option<f64>,
    pub beta2: Option<f64>,
    pub nu_gamma: Option<f64>,
    pub alpha_nu: Option<f64>,
    pub beta_nu: Option<f64>,
    pub alpha_eta: Option<f64>,
    pub beta_eta: Option<f64>,
    pub c_pi: Option<Vec<f64>>,
    pub b_alpha3: Option<f64>,
    pub alpha0: Option<f64>,
    pub beta0: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub a_z: Option<f64>,
    pub a_pi: Option<f64>,
    pub sigma2_alpha3: Option<f64>,
}

impl HyperOverrides {
    pub fn apply(&self, n_features: usize) -> HyperParams {
        let mut h = HyperParams::defaults(n_features);
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { h.$field = v; })*
            };
        }
        set!(
            alpha1, beta1, alpha2, beta2, nu_gamma, alpha_nu, beta_nu, alpha_eta, beta_eta,
            b_alpha3, alpha0, beta0, eps1, eps2, a_z, a_pi, sigma2_alpha3
        );
        if let Some(c) = &self.c_pi {
            h.c_pi = c.clone();
        }
        h
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dims: DimsConfig,
    #[serde(default)]
    pub hyper: HyperOverrides,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

/// Fully materialized configuration stamped into the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub schema: String,
    pub dims: ModelDims,
    pub hyper: HyperParams,
    pub sampler: SamplerConfig,
}

pub const RUN_SCHEMA: &str = "cafmm-run-v1";
