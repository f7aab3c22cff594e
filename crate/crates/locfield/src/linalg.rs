//! Incremental Gaussian linear algebra.
//!
//! The estimation pipeline consumes covariance matrices over nested,
//! nearest-first neighborhoods `S_1 ⊂ S_2 ⊂ ... ⊂ S_n`. Everything here
//! exploits that nesting: bordered Cholesky appends give conditional
//! means/variances and log-likelihood increments in `O(k^2)` per step, and
//! inverse downdates walk the quadratic forms `z_k' S_k^{-1} z_k` from
//! `S_n^{-1}` back down without refactoring.

use crate::covariance::{cov_value, NonstatModel};
use crate::data::{Dataset, NeighborOrdering};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative floor for the conditional variance of an append; below it the
/// bordered matrix is treated as numerically singular (e.g. near-duplicate
/// locations under a smooth covariance).
const COND_VAR_FLOOR_REL: f64 = 1e-12;

/// Growing Cholesky factor of a nested covariance sequence, tracking the
/// conditional statistics of an attached response vector.
///
/// After `k` appends the struct holds the factor `L` of the `k x k`
/// covariance `S_k`, the whitened responses `u = L^{-1} z`, and per-step
/// conditional means and variances of each response given all earlier ones.
#[derive(Debug, Clone, Default)]
pub struct CholSequence {
    /// Lower-triangular rows; row `k` has `k+1` entries.
    rows: Vec<Vec<f64>>,
    /// Whitened responses `u = L^{-1} z`.
    u: Vec<f64>,
    cond_means: Vec<f64>,
    cond_vars: Vec<f64>,
    /// Largest marginal variance seen, for the singularity floor.
    max_diag: f64,
}

impl CholSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of rows appended so far.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Border the factored matrix with one new point: `new_col` holds its
    /// covariances with the existing points (in append order), `new_diag`
    /// its marginal variance, and `z` its observed response.
    pub fn append(&mut self, new_col: &[f64], new_diag: f64, z: f64) -> Result<()> {
        let k = self.rows.len();
        if new_col.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: new_col.len(),
            });
        }
        self.max_diag = self.max_diag.max(new_diag);
        // Forward-substitute y = L^{-1} new_col.
        let mut y = vec![0.0; k];
        for i in 0..k {
            let row = &self.rows[i];
            let dot: f64 = row[..i].iter().zip(&y[..i]).map(|(l, y)| l * y).sum();
            y[i] = (new_col[i] - dot) / row[i];
        }
        let y_norm2: f64 = y.iter().map(|v| v * v).sum();
        let cond_var = new_diag - y_norm2;
        let floor = COND_VAR_FLOOR_REL * self.max_diag;
        if !(cond_var > floor) {
            return Err(Error::SingularAppend {
                index: k,
                cond_var,
            });
        }
        let d = cond_var.sqrt();
        // Conditional mean of z given the earlier responses is y'u.
        let mean: f64 = y.iter().zip(&self.u).map(|(a, b)| a * b).sum();
        self.u.push((z - mean) / d);
        self.cond_means.push(mean);
        self.cond_vars.push(cond_var);
        y.push(d);
        self.rows.push(y);
        Ok(())
    }

    /// Conditional means `E[z_k | z_1..z_{k-1}]` per step.
    pub fn cond_means(&self) -> &[f64] {
        &self.cond_means
    }

    /// Conditional variances `d_k^2` per step.
    pub fn cond_vars(&self) -> &[f64] {
        &self.cond_vars
    }

    /// Whitened responses `u = L^{-1} z`.
    pub fn whitened(&self) -> &[f64] {
        &self.u
    }

    /// Log-likelihood increment of step `k` (0-based):
    /// `-1/2 log 2pi - log d_k - e_k^2 / (2 d_k^2)` with
    /// `e_k = z_k - E[z_k | earlier]`.
    pub fn increment(&self, k: usize) -> f64 {
        -0.5 * LN_2PI - 0.5 * self.cond_vars[k].ln() - 0.5 * self.u[k] * self.u[k]
    }

    /// All increments so far; their sum is the joint log-likelihood of the
    /// appended responses under the appended covariance.
    pub fn increments(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.increment(k)).collect()
    }

    /// `z' S_k^{-1} z` over the first `k+1` responses, i.e. the running
    /// squared norm of the whitened responses.
    pub fn quad_form_prefix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.u.len());
        let mut acc = 0.0;
        for &ui in &self.u {
            acc += ui * ui;
            out.push(acc);
        }
        out
    }

    /// `log det S_k` for the current size.
    pub fn log_det(&self) -> f64 {
        self.cond_vars.iter().map(|v| v.ln()).sum()
    }

    /// Dense copy of the factor, for oracles and diagnostics.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        let k = self.len();
        let mut l = DMatrix::zeros(k, k);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                l[(i, j)] = v;
            }
        }
        l
    }
}

/// Covariance column of a new ordered point against the earlier ones.
fn ordered_col(
    model: &NonstatModel,
    data: &Dataset,
    ordering: &NeighborOrdering,
    k: usize,
) -> Result<(Vec<f64>, f64)> {
    let locs = data.locations();
    let pk = ordering.perm[k];
    let mut col = Vec::with_capacity(k);
    for j in 0..k {
        col.push(cov_value(model, &locs[ordering.perm[j]], &locs[pk])?);
    }
    let diag = cov_value(model, &locs[pk], &locs[pk])?;
    Ok((col, diag))
}

/// Log-likelihood increments `D_k = l(N_k) - l(N_{k-1})` of the first
/// `limit` responses along the ordering, under `model`. Their sum is the
/// joint log-likelihood of those responses.
pub fn loglik_increments(
    model: &NonstatModel,
    data: &Dataset,
    ordering: &NeighborOrdering,
    limit: usize,
) -> Result<Vec<f64>> {
    let m = limit.min(ordering.len());
    if m == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let mut seq = CholSequence::new();
    for k in 0..m {
        let (col, diag) = ordered_col(model, data, ordering, k)?;
        seq.append(&col, diag, data.responses()[ordering.perm[k]])?;
    }
    Ok(seq.increments())
}

/// Build the full [`CholSequence`] of a model along an ordering; exposes
/// conditional statistics to callers that need more than increments.
pub fn chol_sequence(
    model: &NonstatModel,
    data: &Dataset,
    ordering: &NeighborOrdering,
    limit: usize,
) -> Result<CholSequence> {
    let m = limit.min(ordering.len());
    if m == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let mut seq = CholSequence::new();
    for k in 0..m {
        let (col, diag) = ordered_col(model, data, ordering, k)?;
        seq.append(&col, diag, data.responses()[ordering.perm[k]])?;
    }
    Ok(seq)
}

/// Inverse of the principal submatrix: given `inv = S^{-1}`, drop one
/// row/column of `S` and return the inverse of what remains, via the
/// Schur-complement identity
/// `(S_sub)^{-1} = P - p p' / pi`
/// where (after moving `drop` last) `P` is the leading block of `inv`,
/// `p` its last column, `pi` its corner entry.
pub fn inverse_downdate(inv: &DMatrix<f64>, drop: usize) -> Result<DMatrix<f64>> {
    let n = inv.nrows();
    if inv.ncols() != n || drop >= n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if inv.ncols() != n { inv.ncols() } else { drop },
        });
    }
    let pivot = inv[(drop, drop)];
    if pivot <= 1e-14 {
        return Err(Error::Numerical(format!(
            "inverse downdate pivot {pivot:.3e} at index {drop} too small"
        )));
    }
    let mut out = DMatrix::zeros(n - 1, n - 1);
    for i in 0..n - 1 {
        let ii = if i < drop { i } else { i + 1 };
        for j in 0..n - 1 {
            let jj = if j < drop { j } else { j + 1 };
            out[(i, j)] = inv[(ii, jj)] - inv[(ii, drop)] * inv[(drop, jj)] / pivot;
        }
    }
    Ok(out)
}

/// The quadratic forms `q_k = z' S_k^{-1} z` over the nested leading
/// subsets `k = 1..n`, starting from the full inverse and downdating the
/// trailing point each step. Inputs are already along the neighborhood
/// ordering (`inv` over the ordered points, `z` the ordered responses).
pub fn quad_form_sequence(inv: &DMatrix<f64>, z: &[f64]) -> Result<Vec<f64>> {
    let n = inv.nrows();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: z.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let mut q = vec![0.0; n];
    let mut cur = inv.clone();
    for k in (1..=n).rev() {
        let zk = &z[..k];
        let mut acc = 0.0;
        for i in 0..k {
            let mut row = 0.0;
            for j in 0..k {
                row += cur[(i, j)] * zk[j];
            }
            acc += zk[i] * row;
        }
        q[k - 1] = acc;
        if k > 1 {
            cur = inverse_downdate(&cur, k - 1)?;
        }
    }
    Ok(q)
}

/// Kullback-Leibler divergence between mean-zero Gaussians,
/// `D(N(0,S1) || N(0,S2)) = 1/2 [tr(S2^{-1} S1) - n + log det S2 - log det S1]`.
pub fn kl_mean_zero(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let n = s1.nrows();
    if s1.ncols() != n || s2.nrows() != n || s2.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s2.nrows(),
        });
    }
    let c1 = nalgebra::Cholesky::new(s1.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("first KL operand".into()))?;
    let c2 = nalgebra::Cholesky::new(s2.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("second KL operand".into()))?;
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| -> f64 {
        (0..n).map(|i| c.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0
    };
    let trace = c2.solve(s1).trace();
    // Clamp tiny negative rounding noise at S1 ~= S2.
    Ok((0.5 * (trace - n as f64 + logdet(&c2) - logdet(&c1))).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{MaternParams, NonstatModel};
    use crate::data::{order_neighbors, Location};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Deterministic pseudo-random stream for test fixtures.
    struct Lcg(u64);
    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn synth_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = Lcg(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.next_f64() - 0.5);
        &b * b.transpose() + DMatrix::identity(n, n) * (0.5 + 0.1 * n as f64)
    }

    fn synth_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Lcg(seed);
        (0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect()
    }

    #[test]
    fn scalar_append_is_sqrt() {
        let mut seq = CholSequence::new();
        seq.append(&[], 4.0, 1.0).unwrap();
        assert_abs_diff_eq!(seq.l_matrix()[(0, 0)], 2.0);
        assert_abs_diff_eq!(seq.cond_vars()[0], 4.0);
        assert_abs_diff_eq!(seq.cond_means()[0], 0.0);
    }

    #[test]
    fn appended_factor_matches_dense_cholesky() {
        let n = 12;
        let spd = synth_spd(n, 17);
        let z = synth_vec(n, 18);
        let mut seq = CholSequence::new();
        for k in 0..n {
            let col: Vec<f64> = (0..k).map(|j| spd[(j, k)]).collect();
            seq.append(&col, spd[(k, k)], z[k]).unwrap();
        }
        let dense = nalgebra::Cholesky::new(spd.clone()).unwrap();
        let l = seq.l_matrix();
        for i in 0..n {
            for j in 0..=i {
                assert_relative_eq!(
                    l[(i, j)],
                    dense.l_dirty()[(i, j)],
                    max_relative = 1e-10,
                    epsilon = 1e-12
                );
            }
        }
        // And the factor reproduces the matrix.
        let prod = &l * l.transpose();
        for i in 0..n {
            for j in 0..n {
                assert_relative_eq!(prod[(i, j)], spd[(i, j)], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn duplicate_append_is_singular() {
        let mut seq = CholSequence::new();
        seq.append(&[], 1.0, 0.3).unwrap();
        // Same marginal variance, correlation 1 with the existing point.
        let err = seq.append(&[1.0], 1.0, 0.3).unwrap_err();
        assert!(matches!(err, Error::SingularAppend { index: 1, .. }));
    }

    #[test]
    fn increments_sum_to_dense_loglik() {
        // Stationary Matérn over deterministic scattered points.
        let p = MaternParams::new(1.3, 1.1, 0.3).unwrap();
        let model = NonstatModel::stationary_reparam_k(&p);
        let n = 20;
        let mut rng = Lcg(99);
        let locs: Vec<Location> = (0..n)
            .map(|_| Location::new_2d(rng.next_f64(), rng.next_f64()))
            .collect();
        let z = synth_vec(n, 7);
        let data = Dataset::new(locs.clone(), z.clone()).unwrap();
        let target = Location::new_2d(0.4, 0.6);
        let ordering = order_neighbors(&data, &target).unwrap();
        let inc = loglik_increments(&model, &data, &ordering, n).unwrap();
        let total: f64 = inc.iter().sum();

        // Dense oracle in the same order.
        let ordered: Vec<Location> = ordering.perm.iter().map(|&i| locs[i].clone()).collect();
        let sigma = crate::covariance::cov_matrix(&model, &ordered).unwrap();
        let zv = nalgebra::DVector::from_iterator(n, ordering.perm.iter().map(|&i| z[i]));
        let chol = nalgebra::Cholesky::new(sigma.clone()).unwrap();
        let logdet: f64 = (0..n)
            .map(|i| chol.l_dirty()[(i, i)].ln())
            .sum::<f64>()
            * 2.0;
        let quad = zv.dot(&chol.solve(&zv));
        let dense = -0.5 * (n as f64 * LN_2PI + logdet + quad);
        assert_relative_eq!(total, dense, max_relative = 1e-8);

        // First increment is the marginal log density of the nearest point.
        let z1 = z[ordering.perm[0]];
        let s11 = sigma[(0, 0)];
        let expected1 = -0.5 * (LN_2PI + s11.ln() + z1 * z1 / s11);
        assert_relative_eq!(inc[0], expected1, max_relative = 1e-12);
    }

    #[test]
    fn diagonal_covariance_gives_marginal_increments() {
        let n = 6;
        let z = synth_vec(n, 3);
        let vars = [0.7, 1.1, 0.4, 2.0, 1.5, 0.9];
        let mut seq = CholSequence::new();
        for k in 0..n {
            seq.append(&vec![0.0; k], vars[k], z[k]).unwrap();
        }
        for k in 0..n {
            let expected = -0.5 * (LN_2PI + vars[k].ln() + z[k] * z[k] / vars[k]);
            assert_relative_eq!(seq.increment(k), expected, max_relative = 1e-13);
        }
        // Quadratic-form prefixes are the running sums z_j^2 / var_j.
        let q = seq.quad_form_prefix();
        let mut acc = 0.0;
        for k in 0..n {
            acc += z[k] * z[k] / vars[k];
            assert_relative_eq!(q[k], acc, max_relative = 1e-13);
        }
    }

    #[test]
    fn downdate_identity_2x2() {
        let inv = DMatrix::identity(2, 2);
        let out = inverse_downdate(&inv, 1).unwrap();
        assert_eq!(out.nrows(), 1);
        assert_abs_diff_eq!(out[(0, 0)], 1.0);
    }

    #[test]
    fn downdate_matches_direct_submatrix_inverse() {
        let n = 20;
        let spd = synth_spd(n, 5);
        let inv = spd.clone().try_inverse().unwrap();
        for &drop in &[0usize, 7, 19] {
            let down = inverse_downdate(&inv, drop).unwrap();
            let sub = spd.clone().remove_row(drop).remove_column(drop);
            let direct = sub.try_inverse().unwrap();
            for i in 0..n - 1 {
                for j in 0..n - 1 {
                    assert_relative_eq!(
                        down[(i, j)],
                        direct[(i, j)],
                        max_relative = 1e-8,
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn downdates_commute() {
        let n = 12;
        let spd = synth_spd(n, 11);
        let inv = spd.try_inverse().unwrap();
        // Drop original indices 5 then 9 vs 9 then 5.
        let a = inverse_downdate(&inverse_downdate(&inv, 5).unwrap(), 8).unwrap();
        let b = inverse_downdate(&inverse_downdate(&inv, 9).unwrap(), 5).unwrap();
        for i in 0..n - 2 {
            for j in 0..n - 2 {
                assert_relative_eq!(a[(i, j)], b[(i, j)], max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn append_then_downdate_roundtrips() {
        let n = 10;
        let spd = synth_spd(n + 1, 23);
        let base = spd.clone().remove_row(n).remove_column(n);
        let inv_base = base.try_inverse().unwrap();
        let inv_full = spd.try_inverse().unwrap();
        let back = inverse_downdate(&inv_full, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_relative_eq!(
                    back[(i, j)],
                    inv_base[(i, j)],
                    max_relative = 1e-9,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn quad_forms_match_dense_oracle() {
        let n = 15;
        let spd = synth_spd(n, 41);
        let z = synth_vec(n, 42);
        let inv = spd.clone().try_inverse().unwrap();
        let q = quad_form_sequence(&inv, &z).unwrap();
        for k in 1..=n {
            let sub = spd.view((0, 0), (k, k)).into_owned();
            let zk = nalgebra::DVector::from_column_slice(&z[..k]);
            let direct = zk.dot(&(sub.try_inverse().unwrap() * &zk));
            assert_relative_eq!(q[k - 1], direct, max_relative = 1e-8);
        }
        assert_relative_eq!(q[0], z[0] * z[0] / spd[(0, 0)], max_relative = 1e-9);
        // Agreement with the Cholesky-append path.
        let mut seq = CholSequence::new();
        for k in 0..n {
            let col: Vec<f64> = (0..k).map(|j| spd[(j, k)]).collect();
            seq.append(&col, spd[(k, k)], z[k]).unwrap();
        }
        let via_chol = seq.quad_form_prefix();
        for k in 0..n {
            assert_relative_eq!(q[k], via_chol[k], max_relative = 1e-8);
        }
    }

    #[test]
    fn kl_divergence_identities() {
        // Equal inputs -> 0.
        let s = synth_spd(8, 2);
        assert_abs_diff_eq!(kl_mean_zero(&s, &s).unwrap(), 0.0, epsilon = 1e-12);
        // Scalar case: 1/2 (v1/v2 - 1 + log(v2/v1)).
        let s1 = DMatrix::from_element(1, 1, 2.0);
        let s2 = DMatrix::from_element(1, 1, 1.0);
        assert_relative_eq!(
            kl_mean_zero(&s1, &s2).unwrap(),
            0.5 * (1.0 + 0.5_f64.ln()),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            kl_mean_zero(&s1, &s2).unwrap(),
            0.153_426_409_720_027_35,
            max_relative = 1e-12
        );
        // S1 = cI, S2 = I: (n/2)(c - 1 - log c).
        let n = 6;
        let c = 1.7;
        let s1 = DMatrix::identity(n, n) * c;
        let s2 = DMatrix::identity(n, n);
        assert_relative_eq!(
            kl_mean_zero(&s1, &s2).unwrap(),
            n as f64 / 2.0 * (c - 1.0 - c.ln()),
            max_relative = 1e-12
        );
        // Non-negative on random SPD pairs, zero only at equality.
        for seed in 0..5 {
            let a = synth_spd(7, 100 + seed);
            let b = synth_spd(7, 200 + seed);
            let d = kl_mean_zero(&a, &b).unwrap();
            assert!(d > 0.0, "KL of distinct matrices should be positive");
        }
        // Non-PD input errors.
        let bad = DMatrix::from_element(2, 2, 1.0) * -1.0;
        assert!(kl_mean_zero(&bad, &s2.view((0, 2), (2, 2)).into_owned()).is_err());
    }
}
