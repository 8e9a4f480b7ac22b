//! Sufficient-condition checks for an identifiable mean and covariance
//! structure, plus chain post-processing: label relabeling and the
//! two-feature separability rescaling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSample, ChainStore};
use crate::error::{Error, Result};

/// Relative tolerance on singular values for numerical rank decisions.
const RANK_TOL: f64 = 1e-10;

/// Outcome of the three sufficient-condition checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Design check: [1 X] has full column rank.
    pub design_ok: bool,
    /// Allocation check: N >= (K^2+K)/2 and the quadratic allocation matrix
    /// C has full column rank.
    pub allocation_ok: bool,
    /// Sampling check: every curve has more points than basis functions.
    pub sampling_ok: bool,
    pub design_rank: usize,
    pub design_required_rank: usize,
    pub c_rank: usize,
    pub c_required_rank: usize,
    pub n_obs: usize,
    pub min_obs_required: usize,
    /// Curves with n_i <= P.
    pub undersampled_curves: Vec<usize>,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.design_ok && self.allocation_ok && self.sampling_ok
    }
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let max = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|s| **s > RANK_TOL * max)
        .count()
}

/// Quadratic allocation matrix C: row i holds the squared loadings followed
/// by the doubled pairwise products, column-ordered (1,2), (1,3), ...,
/// (K-1,K).
pub fn build_c_matrix(alloc: &DMatrix<f64>) -> DMatrix<f64> {
    let n = alloc.nrows();
    let k = alloc.ncols();
    let cols = k * (k + 1) / 2;
    let mut c = DMatrix::zeros(n, cols);
    for i in 0..n {
        for j in 0..k {
            c[(i, j)] = alloc[(i, j)] * alloc[(i, j)];
        }
        let mut col = k;
        for j in 0..k {
            for j2 in (j + 1)..k {
                c[(i, col)] = 2.0 * alloc[(i, j)] * alloc[(i, j2)];
                col += 1;
            }
        }
    }
    c
}

/// Check the three sufficient conditions on a design matrix, an allocation
/// matrix, and the per-curve point counts. Report-only: never errors on a
/// failed condition.
pub fn check_assumptions(
    design: &DMatrix<f64>,
    alloc: &DMatrix<f64>,
    curve_lengths: &[usize],
    n_basis: usize,
) -> AssumptionReport {
    let n = alloc.nrows();
    let k = alloc.ncols();

    // Condition 1: intercept-augmented design has full column rank.
    let mut augmented = DMatrix::from_element(n, design.ncols() + 1, 1.0);
    augmented
        .view_mut((0, 1), (n, design.ncols()))
        .copy_from(design);
    let design_rank = numerical_rank(&augmented);
    let design_required_rank = design.ncols() + 1;

    // Condition 2: enough observations and full-rank quadratic allocations.
    let min_obs_required = k * (k + 1) / 2;
    let c = build_c_matrix(alloc);
    let c_rank = numerical_rank(&c);
    let c_required_rank = min_obs_required;

    // Condition 3: n_i > P for every curve.
    let undersampled_curves: Vec<usize> = curve_lengths
        .iter()
        .enumerate()
        .filter(|(_, n_i)| **n_i <= n_basis)
        .map(|(i, _)| i)
        .collect();

    AssumptionReport {
        design_ok: design_rank == design_required_rank,
        allocation_ok: n >= min_obs_required && c_rank == c_required_rank,
        sampling_ok: undersampled_curves.is_empty(),
        design_rank,
        design_required_rank,
        c_rank,
        c_required_rank,
        n_obs: n,
        min_obs_required,
        undersampled_curves,
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut base: Vec<usize> = (0..k).collect();
    fn heap(v: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if n <= 1 {
            out.push(v.clone());
            return;
        }
        for i in 0..n {
            heap(v, n - 1, out);
            if n % 2 == 0 {
                v.swap(i, n - 1);
            } else {
                v.swap(0, n - 1);
            }
        }
    }
    heap(&mut base, k, &mut out);
    out
}

/// All feature permutations of length K; guarded against factorial blowup.
pub fn feature_permutations(k: usize) -> Result<Vec<Vec<usize>>> {
    if k > 8 {
        return Err(Error::config(format!(
            "refusing to enumerate {k}! label permutations (K > 8)"
        )));
    }
    Ok(permutations(k))
}

/// Apply a feature permutation to one stored sample: column j of the output
/// allocation is column perm[j] of the input, and the feature-indexed
/// parameter blocks move with it.
pub fn permute_sample(sample: &ChainSample, perm: &[usize]) -> ChainSample {
    let k = perm.len();
    let mut out = sample.clone();
    for (new_idx, &old_idx) in perm.iter().enumerate() {
        out.nu[new_idx] = sample.nu[old_idx].clone();
        out.eta[new_idx] = sample.eta[old_idx].clone();
        out.phi[new_idx] = sample.phi[old_idx].clone();
        out.pi[new_idx] = sample.pi[old_idx];
        for i in 0..sample.alloc.nrows() {
            out.alloc[(i, new_idx)] = sample.alloc[(i, old_idx)];
        }
        if let (Some(h_out), Some(h_in)) = (out.hierarchy.as_mut(), sample.hierarchy.as_ref()) {
            for m in 0..h_in.delta.ncols() {
                h_out.delta[(new_idx, m)] = h_in.delta[(old_idx, m)];
            }
            h_out.a1[new_idx] = h_in.a1[old_idx];
            h_out.a2[new_idx] = h_in.a2[old_idx];
            h_out.gamma[new_idx] = h_in.gamma[old_idx].clone();
            h_out.tau_nu[new_idx] = h_in.tau_nu[old_idx];
            for r in 0..h_in.tau_eta.ncols() {
                h_out.tau_eta[(new_idx, r)] = h_in.tau_eta[(old_idx, r)];
            }
        }
        if let (Some(x_out), Some(x_in)) = (out.xi.as_mut(), sample.xi.as_ref()) {
            x_out[new_idx] = x_in[old_idx].clone();
        }
    }
    debug_assert_eq!(out.nu.len(), k);
    out
}

/// Squared Frobenius distance between allocation matrices.
fn alloc_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Greedy per-iteration relabeling against a fixed reference iteration:
/// each stored sample gets the feature permutation minimizing the squared
/// distance between its allocation matrix and the reference one.
pub fn relabel_chain(chain: &ChainStore, reference: usize) -> Result<ChainStore> {
    if reference >= chain.samples.len() {
        return Err(Error::config(format!(
            "reference iteration {reference} out of range ({} stored)",
            chain.samples.len()
        )));
    }
    let k = chain.dims.n_features;
    let perms = feature_permutations(k)?;
    let reference_alloc = chain.samples[reference].alloc.clone();
    let mut out = chain.clone();
    for sample in out.samples.iter_mut() {
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for perm in &perms {
            let mut permuted = DMatrix::zeros(sample.alloc.nrows(), k);
            for (new_idx, &old_idx) in perm.iter().enumerate() {
                for i in 0..sample.alloc.nrows() {
                    permuted[(i, new_idx)] = sample.alloc[(i, old_idx)];
                }
            }
            let d = alloc_distance(&permuted, &reference_alloc);
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, perm));
            }
        }
        let (_, perm) = best.expect("at least the identity permutation exists");
        if perm.iter().enumerate().any(|(i, p)| i != *p) {
            *sample = permute_sample(sample, perm);
        }
    }
    Ok(out)
}

/// Two-feature separability rescaling. Per iteration, affinely map the
/// first allocation column onto [0, 1] (so some observation sits at each
/// vertex) and move (nu, eta, phi) compensatingly: the new vertex
/// parameters are the old mixed structure evaluated at the extreme observed
/// allocations, which leaves every observation's mean and covariance
/// unchanged. Iterations with a degenerate allocation spread are skipped
/// and reported.
pub fn rescale_separability(chain: &ChainStore) -> Result<(ChainStore, Vec<usize>)> {
    if chain.dims.n_features != 2 {
        return Err(Error::config(
            "separability rescaling is implemented for K = 2 only".to_string(),
        ));
    }
    let mut out = chain.clone();
    let mut skipped = Vec::new();
    for (s, sample) in out.samples.iter_mut().enumerate() {
        let col: Vec<f64> = (0..sample.alloc.nrows())
            .map(|i| sample.alloc[(i, 0)])
            .collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            skipped.push(s);
            continue;
        }
        // Remap allocations.
        for i in 0..sample.alloc.nrows() {
            let z = (sample.alloc[(i, 0)] - lo) / (hi - lo);
            sample.alloc[(i, 0)] = z;
            sample.alloc[(i, 1)] = 1.0 - z;
        }
        // Compensate every parameter family entering the model through
        // sum_k z_k p_k: new p_1 is the structure at z_1 = hi, new p_2 at
        // z_1 = lo.
        let map_pair = |p1: &DVector<f64>, p2: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let diff = p1 - p2;
            (p2 + &diff * hi, p2 + &diff * lo)
        };
        let (nu1, nu2) = map_pair(&sample.nu[0], &sample.nu[1]);
        sample.nu[0] = nu1;
        sample.nu[1] = nu2;
        let eta_diff = &sample.eta[0] - &sample.eta[1];
        let eta1 = &sample.eta[1] + &eta_diff * hi;
        let eta2 = &sample.eta[1] + &eta_diff * lo;
        sample.eta[0] = eta1;
        sample.eta[1] = eta2;
        for m in 0..sample.phi[0].len() {
            let (p1, p2) = map_pair(&sample.phi[0][m], &sample.phi[1][m]);
            sample.phi[0][m] = p1;
            sample.phi[1][m] = p2;
        }
        if let Some(xi) = sample.xi.as_mut() {
            for m in 0..xi[0].len() {
                let diff = &xi[0][m] - &xi[1][m];
                let x1 = &xi[1][m] + &diff * hi;
                let x2 = &xi[1][m] + &diff * lo;
                xi[0][m] = x1;
                xi[1][m] = x2;
            }
        }
    }
    Ok((out, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ones_column_in_design_fails_first_condition() {
        let mut design = DMatrix::zeros(6, 2);
        for i in 0..6 {
            design[(i, 0)] = 1.0; // constant column collides with the intercept
            design[(i, 1)] = i as f64;
        }
        let alloc = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 0.3 + 0.1 * i as f64 } else { 0.7 - 0.1 * i as f64 });
        let report = check_assumptions(&design, &alloc, &[9; 6], 8);
        assert!(!report.design_ok);
        assert_eq!(report.design_rank, 2);
        assert_eq!(report.design_required_rank, 3);
    }

    #[test]
    fn worked_c_matrix_example_passes() {
        // Rows (1,0), (0,1), (0.5,0.5) give C = [[1,0,0],[0,1,0],[0.25,0.25,0.5]].
        let alloc = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        let c = build_c_matrix(&alloc);
        let expect = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.25, 0.25, 0.5],
        );
        assert_eq!(c, expect);
        let design = DMatrix::from_column_slice(3, 1, &[0.1, 0.7, -0.4]);
        let report = check_assumptions(&design, &alloc, &[9, 9, 9], 8);
        assert!(report.allocation_ok);
        assert_eq!(report.c_rank, 3);
    }

    #[test]
    fn too_few_observations_fail_allocation_check() {
        let alloc = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let design = DMatrix::from_column_slice(2, 1, &[0.4, -0.2]);
        let report = check_assumptions(&design, &alloc, &[9, 9], 8);
        assert!(!report.allocation_ok);
        assert_eq!(report.min_obs_required, 3);
    }

    #[test]
    fn undersampled_curves_reported() {
        let alloc = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.2, 0.8, 0.5, 0.5]);
        let design = DMatrix::from_column_slice(3, 1, &[0.4, -0.2, 1.1]);
        let report = check_assumptions(&design, &alloc, &[9, 8, 10], 8);
        assert!(!report.sampling_ok);
        assert_eq!(report.undersampled_curves, vec![1]);
    }

    #[test]
    fn c_row_sums_are_one() {
        // (sum_k z_k)^2 = 1 expands to exactly the C-row entries.
        let alloc = DMatrix::from_row_slice(
            4,
            3,
            &[0.2, 0.3, 0.5, 0.7, 0.2, 0.1, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.05, 0.9, 0.05],
        );
        let c = build_c_matrix(&alloc);
        for i in 0..4 {
            let s: f64 = c.row(i).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn check_is_permutation_invariant() {
        let alloc = DMatrix::from_row_slice(4, 2, &[0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.35, 0.65]);
        let mut swapped = alloc.clone();
        swapped.swap_columns(0, 1);
        let design = DMatrix::from_column_slice(4, 1, &[0.4, -0.2, 1.1, 0.9]);
        let a = check_assumptions(&design, &alloc, &[9; 4], 8);
        let b = check_assumptions(&design, &swapped, &[9; 4], 8);
        assert_eq!(a.allocation_ok, b.allocation_ok);
        assert_eq!(a.c_rank, b.c_rank);
    }

    #[test]
    fn vertex_and_uniform_c_rows() {
        let alloc = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let c = build_c_matrix(&alloc);
        assert_eq!(c.row(0).iter().cloned().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let ninth = 1.0 / 9.0;
        for j in 0..3 {
            assert_abs_diff_eq!(c[(1, j)], ninth, epsilon = 1e-15);
        }
        for j in 3..6 {
            assert_abs_diff_eq!(c[(1, j)], 2.0 * ninth, epsilon = 1e-15);
        }
    }

    #[test]
    fn permutation_guard_refuses_large_k() {
        assert!(feature_permutations(9).is_err());
        assert_eq!(feature_permutations(3).unwrap().len(), 6);
    }
}
