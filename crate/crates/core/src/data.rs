//! Functional datasets: irregularly sampled curves plus a design matrix of
//! scalar covariates.

use nalgebra::{DMatrix, DVector};

use crate::basis::{build_basis, BasisMatrix, BasisSpec};
use crate::error::{Error, Result};

/// One observed sample path: values at (possibly irregular) time points.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub id: String,
    pub times: Vec<f64>,
    pub values: DVector<f64>,
}

impl Curve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// N curves and an N x R design matrix; R = 0 recovers the unadjusted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    pub curves: Vec<Curve>,
    pub design: DMatrix<f64>,
}

impl FunctionalDataset {
    pub fn new(curves: Vec<Curve>, design: DMatrix<f64>) -> Result<Self> {
        if design.nrows() != curves.len() {
            return Err(Error::shape(format!(
                "design matrix has {} rows for {} curves",
                design.nrows(),
                curves.len()
            )));
        }
        if let Some(c) = curves.iter().find(|c| c.is_empty()) {
            return Err(Error::validation(format!("curve {} has no observations", c.id)));
        }
        for c in &curves {
            if c.times.len() != c.values.len() {
                return Err(Error::shape(format!(
                    "curve {} has {} times but {} values",
                    c.id,
                    c.times.len(),
                    c.values.len()
                )));
            }
        }
        Ok(FunctionalDataset { curves, design })
    }

    pub fn n_obs(&self) -> usize {
        self.curves.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.design.ncols()
    }

    /// Total number of observed points across curves.
    pub fn total_points(&self) -> usize {
        self.curves.iter().map(Curve::len).sum()
    }

    /// Covariate row for curve `i` as a column vector of length R.
    pub fn covariates(&self, i: usize) -> DVector<f64> {
        self.design.row(i).transpose()
    }

    /// Observed time range across all curves; errors on an empty dataset.
    pub fn time_range(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.curves {
            for t in &c.times {
                lo = lo.min(*t);
                hi = hi.max(*t);
            }
        }
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok((lo, hi))
        } else {
            Err(Error::validation(
                "dataset has no usable time range (empty or degenerate)",
            ))
        }
    }

    /// Default basis domain: the min/max observed time across the dataset.
    pub fn default_basis_spec(&self, num_basis: usize) -> Result<BasisSpec> {
        let (lo, hi) = self.time_range()?;
        Ok(BasisSpec::cubic(num_basis, lo, hi))
    }
}

/// Basis evaluations for every curve of a dataset, plus per-curve Gram
/// matrices S_i' ... the quantities every posterior update consumes.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub spec: BasisSpec,
    /// Per curve: n_i x P, row l = B(t_il)'.
    pub rows: Vec<DMatrix<f64>>,
    /// Per curve: P x P Gram matrix sum_l B(t_il) B(t_il)'.
    pub gram: Vec<DMatrix<f64>>,
}

impl BasisSet {
    pub fn for_dataset(spec: &BasisSpec, data: &FunctionalDataset) -> Result<Self> {
        let mut rows = Vec::with_capacity(data.n_obs());
        let mut gram = Vec::with_capacity(data.n_obs());
        for c in &data.curves {
            let m: BasisMatrix = build_basis(spec, &c.times)?;
            let s_t = m.transposed();
            gram.push(s_t.transpose() * &s_t);
            rows.push(s_t);
        }
        Ok(BasisSet {
            spec: spec.clone(),
            rows,
            gram,
        })
    }

    pub fn num_basis(&self) -> usize {
        self.spec.num_basis
    }
}
