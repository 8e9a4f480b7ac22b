//! B-spline bases with equidistant interior knots and the first-order
//! random-walk penalty matrix used by the smoothing priors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Specification of a clamped B-spline basis on a closed interval.
///
/// Boundary knots are repeated `degree + 1` times so the basis spans
/// constants on the closed domain; interior knots are equidistant. The
/// number of interior knots is `num_basis - degree - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub num_basis: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl BasisSpec {
    /// Cubic basis with `num_basis` functions on `[t_min, t_max]`.
    pub fn cubic(num_basis: usize, t_min: f64, t_max: f64) -> Self {
        BasisSpec {
            degree: 3,
            num_basis,
            t_min,
            t_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_basis < self.degree + 1 {
            return Err(Error::config(format!(
                "num_basis {} must be at least degree + 1 = {}",
                self.num_basis,
                self.degree + 1
            )));
        }
        if !(self.t_min < self.t_max) {
            return Err(Error::config(format!(
                "empty basis domain [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    /// Clamped knot vector of length `num_basis + degree + 1`.
    fn knots(&self) -> Vec<f64> {
        let p = self.num_basis;
        let d = self.degree;
        let n_interior = p - d - 1;
        let mut knots = Vec::with_capacity(p + d + 1);
        for _ in 0..=d {
            knots.push(self.t_min);
        }
        let step = (self.t_max - self.t_min) / (n_interior + 1) as f64;
        for j in 1..=n_interior {
            knots.push(self.t_min + step * j as f64);
        }
        for _ in 0..=d {
            knots.push(self.t_max);
        }
        knots
    }

    /// Evaluate the basis vector B(t); errors if `t` lies outside the domain.
    /// Evaluation at `t_max` uses the right-limit convention, assigning full
    /// support to the last basis function for degree 0.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        self.validate()?;
        if t < self.t_min || t > self.t_max || !t.is_finite() {
            return Err(Error::Domain(format!(
                "evaluation point {t} outside basis domain [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        let knots = self.knots();
        let d = self.degree;
        let p = self.num_basis;

        // Knot span index: largest k in [d, p-1] with knots[k] <= t.
        let span = if t >= self.t_max {
            p - 1
        } else {
            let mut k = d;
            while k + 1 <= p - 1 && knots[k + 1] <= t {
                k += 1;
            }
            k
        };

        // Local de Boor triangle over the d + 1 active functions.
        let mut vals = vec![0.0_f64; d + 1];
        let mut left = vec![0.0_f64; d + 1];
        let mut right = vec![0.0_f64; d + 1];
        vals[0] = 1.0;
        for j in 1..=d {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = vals[r] / denom;
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }

        let mut out = DVector::zeros(p);
        for (r, v) in vals.iter().enumerate() {
            out[span - d + r] = *v;
        }
        Ok(out)
    }
}

/// Basis evaluations on a grid: `values` is P x n with column j = B(t_j).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub grid: DVector<f64>,
}

impl BasisMatrix {
    pub fn num_basis(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.values.ncols()
    }

    /// Row-major view S'(t): n x P with row l = B(t_l)'.
    pub fn transposed(&self) -> DMatrix<f64> {
        self.values.transpose()
    }
}

/// Evaluate the basis on a grid of time points.
pub fn build_basis(spec: &BasisSpec, grid: &[f64]) -> Result<BasisMatrix> {
    spec.validate()?;
    let mut values = DMatrix::zeros(spec.num_basis, grid.len());
    for (j, t) in grid.iter().enumerate() {
        values.set_column(j, &spec.eval(*t)?);
    }
    Ok(BasisMatrix {
        values,
        grid: DVector::from_row_slice(grid),
    })
}

/// First-order random-walk penalty: tridiagonal with diagonal
/// (1, 2, ..., 2, 1) and off-diagonal -1, so that v' P v equals the sum of
/// squared successive differences of v.
pub fn penalty_matrix(num_basis: usize) -> Result<DMatrix<f64>> {
    if num_basis < 2 {
        return Err(Error::config(format!(
            "penalty matrix needs at least 2 basis functions, got {num_basis}"
        )));
    }
    let mut p = DMatrix::zeros(num_basis, num_basis);
    for i in 0..num_basis {
        p[(i, i)] = if i == 0 || i == num_basis - 1 { 1.0 } else { 2.0 };
        if i + 1 < num_basis {
            p[(i, i + 1)] = -1.0;
            p[(i + 1, i)] = -1.0;
        }
    }
    Ok(p)
}

/// Rank-(P-1) factor L (P x (P-1)) with L L' equal to the penalty matrix;
/// L is the transpose of the first-difference matrix. Used to sample from
/// singular penalty covariances in the study generators.
pub fn penalty_factor(num_basis: usize) -> Result<DMatrix<f64>> {
    if num_basis < 2 {
        return Err(Error::config(format!(
            "penalty factor needs at least 2 basis functions, got {num_basis}"
        )));
    }
    let mut l = DMatrix::zeros(num_basis, num_basis - 1);
    for j in 0..num_basis - 1 {
        l[(j, j)] = 1.0;
        l[(j + 1, j)] = -1.0;
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent oracle: textbook Cox-de Boor recursion evaluated over the
    /// full triangle, written without the local-span optimization used by
    /// the implementation.
    fn cox_de_boor_oracle(knots: &[f64], i: usize, d: usize, t: f64, t_max: f64) -> f64 {
        if d == 0 {
            let upper_closed = knots[i + 1] >= t_max && t >= t_max;
            if (knots[i] <= t && t < knots[i + 1]) || (upper_closed && knots[i] < knots[i + 1]) {
                return 1.0;
            }
            return 0.0;
        }
        let mut out = 0.0;
        let denom_l = knots[i + d] - knots[i];
        if denom_l > 0.0 {
            out += (t - knots[i]) / denom_l * cox_de_boor_oracle(knots, i, d - 1, t, t_max);
        }
        let denom_r = knots[i + d + 1] - knots[i + 1];
        if denom_r > 0.0 {
            out +=
                (knots[i + d + 1] - t) / denom_r * cox_de_boor_oracle(knots, i + 1, d - 1, t, t_max);
        }
        out
    }

    #[test]
    fn degree_zero_is_indicator_basis() {
        let spec = BasisSpec {
            degree: 0,
            num_basis: 2,
            t_min: 0.0,
            t_max: 1.0,
        };
        let m = build_basis(&spec, &[0.25, 0.75]).unwrap();
        assert_eq!(m.values.column(0).as_slice(), &[1.0, 0.0]);
        assert_eq!(m.values.column(1).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn right_endpoint_assigns_last_function() {
        let spec = BasisSpec {
            degree: 0,
            num_basis: 3,
            t_min: 0.0,
            t_max: 1.0,
        };
        let col = spec.eval(1.0).unwrap();
        assert_eq!(col.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn cubic_column_matches_de_boor_oracle() {
        let spec = BasisSpec::cubic(8, 0.0, 1.0);
        let knots = spec.knots();
        for &t in &[0.0, 0.1, 0.37, 0.5, 0.73, 0.99, 1.0] {
            let col = spec.eval(t).unwrap();
            for i in 0..8 {
                let expect = cox_de_boor_oracle(&knots, i, 3, t, 1.0);
                assert_abs_diff_eq!(col[i], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn grid_point_outside_domain_errors() {
        let spec = BasisSpec::cubic(8, 0.0, 1.0);
        assert!(matches!(
            build_basis(&spec, &[0.5, 1.5]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn too_few_basis_functions_errors() {
        let spec = BasisSpec {
            degree: 3,
            num_basis: 3,
            t_min: 0.0,
            t_max: 1.0,
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn penalty_matrix_three_by_three() {
        let p = penalty_matrix(3).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(p, expect);
    }

    #[test]
    fn penalty_matrix_too_small_errors() {
        assert!(matches!(penalty_matrix(1), Err(Error::Config(_))));
    }

    #[test]
    fn penalty_quadratic_form_examples() {
        let p = penalty_matrix(3).unwrap();
        let ones = DVector::from_element(3, 1.0);
        assert_abs_diff_eq!((&p * &ones).dot(&ones), 0.0, epsilon = 1e-15);
        // (1-2)^2 + (2-4)^2 = 5
        let x = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        assert_abs_diff_eq!((&p * &x).dot(&x), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn penalty_factor_reconstructs_penalty() {
        for p in 2..9 {
            let l = penalty_factor(p).unwrap();
            let reconstructed = &l * l.transpose();
            assert_eq!(reconstructed, penalty_matrix(p).unwrap());
        }
    }

    #[test]
    fn build_basis_is_deterministic() {
        let spec = BasisSpec::cubic(8, 0.0, 1.0);
        let grid: Vec<f64> = (0..25).map(|i| i as f64 / 24.0).collect();
        let a = build_basis(&spec, &grid).unwrap();
        let b = build_basis(&spec, &grid).unwrap();
        assert_eq!(a.values, b.values);
    }

    proptest! {
        /// Partition of unity and local support on random specs and points.
        #[test]
        fn columns_sum_to_one_and_are_sparse(
            degree in 0usize..5,
            extra in 0usize..8,
            t01 in 0.0f64..=1.0,
        ) {
            let spec = BasisSpec {
                degree,
                num_basis: degree + 1 + extra,
                t_min: -1.0,
                t_max: 2.0,
            };
            let t = -1.0 + 3.0 * t01;
            let col = spec.eval(t).unwrap();
            let sum: f64 = col.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(col.iter().all(|v| *v >= 0.0));
            let nonzero = col.iter().filter(|v| **v != 0.0).count();
            prop_assert!(nonzero <= degree + 1);
        }

        /// v' P v equals the sum of squared successive differences exactly
        /// (to rounding), for any coefficient vector.
        #[test]
        fn penalty_matches_difference_sum(values in proptest::collection::vec(-10.0f64..10.0, 2..10)) {
            let p = penalty_matrix(values.len()).unwrap();
            let v = DVector::from_vec(values.clone());
            let quad = (&p * &v).dot(&v);
            let direct: f64 = values.windows(2).map(|w| (w[0] - w[1]) * (w[0] - w[1])).sum();
            prop_assert!((quad - direct).abs() < 1e-10);
        }
    }
}
