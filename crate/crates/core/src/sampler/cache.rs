//! Per-observation fitted-curve caches kept in sync with the state during a
//! sweep. Every block update reads residuals through here; the refresh
//! methods are the single place a parameter change propagates from.

use nalgebra::{DMatrix, DVector};

use crate::data::{BasisSet, FunctionalDataset};
use crate::model::{ModelDims, ParameterState};

#[derive(Debug, Clone)]
pub struct FitCache {
    /// Per curve: K x n_i, row k holds (nu_k + eta_k x_i)' B(t_il).
    pub mu: Vec<DMatrix<f64>>,
    /// Per curve: (K*M) x n_i, row k*M + m holds the effective
    /// pseudo-eigenfunction (phi_km [+ xi_km x_i])' B(t_il).
    pub eig: Vec<DMatrix<f64>>,
}

impl FitCache {
    pub fn new(
        state: &ParameterState,
        data: &FunctionalDataset,
        dims: &ModelDims,
        basis: &BasisSet,
    ) -> Self {
        let n = data.n_obs();
        let mut cache = FitCache {
            mu: Vec::with_capacity(n),
            eig: Vec::with_capacity(n),
        };
        for i in 0..n {
            let n_i = basis.rows[i].nrows();
            cache.mu.push(DMatrix::zeros(dims.n_features, n_i));
            cache
                .eig
                .push(DMatrix::zeros(dims.n_features * dims.n_components, n_i));
        }
        for k in 0..dims.n_features {
            cache.refresh_mean_feature(state, data, dims, basis, k);
            for m in 0..dims.n_components {
                cache.refresh_eigen_component(state, data, dims, basis, k, m);
            }
        }
        cache
    }

    /// Recompute the mean rows for feature `k` after a nu/eta draw.
    pub fn refresh_mean_feature(
        &mut self,
        state: &ParameterState,
        data: &FunctionalDataset,
        dims: &ModelDims,
        basis: &BasisSet,
        k: usize,
    ) {
        for i in 0..data.n_obs() {
            let coef = if dims.n_covariates > 0 {
                &state.nu[k] + &state.eta[k] * data.covariates(i)
            } else {
                state.nu[k].clone()
            };
            let curve = &basis.rows[i] * coef;
            self.mu[i].set_row(k, &curve.transpose());
        }
    }

    /// Recompute the pseudo-eigenfunction rows for (k, m) after a phi or xi
    /// draw.
    pub fn refresh_eigen_component(
        &mut self,
        state: &ParameterState,
        data: &FunctionalDataset,
        dims: &ModelDims,
        basis: &BasisSet,
        k: usize,
        m: usize,
    ) {
        let row = k * dims.n_components + m;
        for i in 0..data.n_obs() {
            let coef = state.effective_phi(k, m, &data.covariates(i));
            let curve = &basis.rows[i] * coef;
            self.eig[i].set_row(row, &curve.transpose());
        }
    }

    /// Fitted conditional mean of point (i, l) under the current state.
    #[inline]
    pub fn fitted_point(
        &self,
        state: &ParameterState,
        dims: &ModelDims,
        i: usize,
        l: usize,
    ) -> f64 {
        let mu = &self.mu[i];
        let eig = &self.eig[i];
        let m_comp = dims.n_components;
        let mut fit = 0.0;
        for k in 0..dims.n_features {
            let mut fk = mu[(k, l)];
            for m in 0..m_comp {
                fk += state.chi[(i, m)] * eig[(k * m_comp + m, l)];
            }
            fit += state.alloc[(i, k)] * fk;
        }
        fit
    }

    /// Fitted point with an alternative allocation row; used by the z-row
    /// Metropolis target.
    #[inline]
    pub fn fitted_point_with_alloc(
        &self,
        state: &ParameterState,
        dims: &ModelDims,
        i: usize,
        l: usize,
        alloc_row: &DVector<f64>,
    ) -> f64 {
        let mu = &self.mu[i];
        let eig = &self.eig[i];
        let m_comp = dims.n_components;
        let mut fit = 0.0;
        for k in 0..dims.n_features {
            let mut fk = mu[(k, l)];
            for m in 0..m_comp {
                fk += state.chi[(i, m)] * eig[(k * m_comp + m, l)];
            }
            fit += alloc_row[k] * fk;
        }
        fit
    }

    /// Residual y_il minus the fitted point.
    #[inline]
    pub fn residual(
        &self,
        state: &ParameterState,
        data: &FunctionalDataset,
        dims: &ModelDims,
        i: usize,
        l: usize,
    ) -> f64 {
        data.curves[i].values[l] - self.fitted_point(state, dims, i, l)
    }

    /// Sum of squared residuals over every observed point.
    pub fn sum_squared_residuals(
        &self,
        state: &ParameterState,
        data: &FunctionalDataset,
        dims: &ModelDims,
    ) -> f64 {
        let mut acc = 0.0;
        for i in 0..data.n_obs() {
            for l in 0..data.curves[i].len() {
                let r = self.residual(state, data, dims, i, l);
                acc += r * r;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fitted_curve;
    use crate::sampler::testing::{random_dataset, random_state, small_dims};
    use approx::assert_abs_diff_eq;

    #[test]
    fn cached_fit_matches_direct_evaluation() {
        let dims = small_dims();
        let (data, basis) = random_dataset(&dims, 101);
        let state = random_state(&dims, 102);
        let cache = FitCache::new(&state, &data, &dims, &basis);
        for i in 0..data.n_obs() {
            let direct = fitted_curve(&state, &data, &dims, &basis, i);
            for l in 0..data.curves[i].len() {
                assert_abs_diff_eq!(
                    cache.fitted_point(&state, &dims, i, l),
                    direct[l],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn refresh_tracks_parameter_changes() {
        let dims = small_dims();
        let (data, basis) = random_dataset(&dims, 103);
        let mut state = random_state(&dims, 104);
        let mut cache = FitCache::new(&state, &data, &dims, &basis);
        state.nu[1][2] += 0.7;
        state.phi[0][1][0] -= 1.3;
        cache.refresh_mean_feature(&state, &data, &dims, &basis, 1);
        cache.refresh_eigen_component(&state, &data, &dims, &basis, 0, 1);
        let fresh = FitCache::new(&state, &data, &dims, &basis);
        for i in 0..data.n_obs() {
            assert_eq!(cache.mu[i], fresh.mu[i]);
            assert_eq!(cache.eig[i], fresh.eig[i]);
        }
    }
}
