//! Read-only bundle of everything a block update needs besides the state.

use nalgebra::DMatrix;

use crate::data::{BasisSet, FunctionalDataset};
use crate::model::{HyperParams, ModelDims};

pub struct SweepContext<'a> {
    pub data: &'a FunctionalDataset,
    pub dims: &'a ModelDims,
    pub hyper: &'a HyperParams,
    pub basis: &'a BasisSet,
    pub penalty: &'a DMatrix<f64>,
}
