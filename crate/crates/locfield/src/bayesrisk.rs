//! Exact L2 risk of the closed-form local variance estimate under a
//! polynomial prior on the standard-deviation profile.
//!
//! Fix a location `t0` and write the profile as a Taylor polynomial
//! `sigma(t) = c_0 + sum_{p=1}^N c_p (t - t0)^p`, where `c_0 = sigma(t0)` is
//! the quantity being estimated and the higher coefficients are independent
//! mean-zero nuisance parameters with vanishing third moments. Conditional
//! on the coefficients, the telescoped estimate
//! `sum_k w~_k z_k' S_k^{-1} z_k` is a quadratic form in a Gaussian vector,
//! so its mean and variance are exactly
//!
//! ```text
//! E[est | c]   = sum_{p,q}       c_p c_q             B^{p,q}
//! var[est | c] = sum_{p1,..,p4}  c_p1 c_p2 c_p3 c_p4 B^{p1,p2,p3,p4}
//! ```
//!
//! where, with `A = L^{-T} diag(w_i / sum w) L^{-1}` built from the Cholesky
//! factor `L` of the base covariance `S` on the distance-ordered design and
//! `D^p = diag((t_i - t0)^p)`,
//!
//! ```text
//! B^{p,q}           = tr[ A D^p  S D^q  ]
//! B^{p1,p2,p3,p4}   = 2 tr[ A D^{p1} S D^{p2} A D^{p3} S D^{p4} ].
//! ```
//!
//! Telescoping makes these the per-neighborhood double sums
//! `sum_k w~_k tr[S_k^{-1} D_k^p S_k D_k^q]` and
//! `2 sum_{j,k} w~_j w~_k tr[..]` with the smaller inverse zero-padded:
//! `A` expands to `sum_k w~_k P_k` where `P_k` is `S_k^{-1}` padded to full
//! size, and every padded trace collapses back to the leading block. The
//! matrix form costs a handful of `e x e` products per weight vector
//! (`e` = effective neighborhood) instead of a double sum of factorizations.
//!
//! Averaging the squared error over the prior splits the risk into an
//! expected-variance term and two bias terms, all closed-form — no
//! simulation or asymptotic approximation anywhere.

use crate::covariance::{matern_cov, MaternParams};
use crate::data::{order_locations, Location, NeighborOrdering, WeightVector};
use crate::error::{Error, Result};
use crate::kernels::{kernel_weights, KernelSpec};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Polynomial prior on the standard-deviation profile at a fixed location:
/// `sigma(t) = c0 + sum_{p=1}^N c_p (t - t0)^p` with `c0 > 0` deterministic
/// and the nuisance coefficients `c_p` independent, mean zero, with zero
/// third moments.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    c0: f64,
    tau2: Vec<f64>,
    m4: Vec<f64>,
}

impl PriorSpec {
    /// Gaussian nuisance coefficients `c_p ~ N(0, tau2[p-1])`.
    pub fn gaussian(c0: f64, tau2: Vec<f64>) -> Result<Self> {
        let m4 = tau2.iter().map(|&t| 3.0 * t * t).collect();
        Self::with_fourth_moments(c0, tau2, m4)
    }

    /// General independent mean-zero prior with explicit fourth moments
    /// `m4[p-1] = E[c_p^4]`.
    pub fn with_fourth_moments(c0: f64, tau2: Vec<f64>, m4: Vec<f64>) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::OutOfDomain {
                what: "prior coefficient c0",
                value: c0,
                lo: f64::MIN_POSITIVE,
                hi: f64::INFINITY,
            });
        }
        if m4.len() != tau2.len() {
            return Err(Error::Config(format!(
                "fourth-moment vector length {} does not match variance length {}",
                m4.len(),
                tau2.len()
            )));
        }
        for (p, (&v, &f)) in tau2.iter().zip(&m4).enumerate() {
            if !(v >= 0.0) || !v.is_finite() || !(f >= 0.0) || !f.is_finite() {
                return Err(Error::Config(format!(
                    "invalid prior moments at order {}: variance {v}, fourth moment {f}",
                    p + 1
                )));
            }
            // Jensen: E[c^4] >= (E[c^2])^2 for any distribution.
            if f < v * v * (1.0 - 1e-12) {
                return Err(Error::Config(format!(
                    "fourth moment {f} below squared variance at order {}",
                    p + 1
                )));
            }
        }
        Ok(Self { c0, tau2, m4 })
    }

    /// Polynomial order `N` (number of nuisance coefficients).
    pub fn order(&self) -> usize {
        self.tau2.len()
    }

    /// The deterministic zeroth coefficient `sigma(t0)`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Prior variance of `c_p`, `1 <= p <= N`.
    pub fn var(&self, p: usize) -> f64 {
        self.tau2[p - 1]
    }

    /// `E[c_{i1} c_{i2} c_{i3} c_{i4}]`, treating index 0 as the constant
    /// `c0`. Zero unless every nuisance index appears an even number of
    /// times (independence, zero odd moments).
    pub fn moment4(&self, idx: [usize; 4]) -> f64 {
        let mut m = 1.0;
        let mut handled = [false; 4];
        for i in 0..4 {
            if handled[i] {
                continue;
            }
            let v = idx[i];
            let mut count = 0u32;
            for j in i..4 {
                if idx[j] == v {
                    handled[j] = true;
                    count += 1;
                }
            }
            if v == 0 {
                m *= self.c0.powi(count as i32);
            } else {
                m *= match count {
                    2 => self.tau2[v - 1],
                    4 => self.m4[v - 1],
                    _ => return 0.0,
                };
            }
        }
        m
    }
}

/// Whether every nonzero index appears an even number of times — the
/// structural condition for `E[c_{i1}..c_{i4}]` to be nonzero under an
/// independent mean-zero prior with vanishing third moments.
fn paired_tuple(idx: [usize; 4]) -> bool {
    idx.iter()
        .all(|&v| v == 0 || idx.iter().filter(|&&u| u == v).count() % 2 == 0)
}

/// Which fourth-order table entries to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum B4Fill {
    /// Only tuples whose nuisance indices pair up — the only entries with a
    /// nonzero prior moment, and the only ones the risk ever reads.
    Paired,
    /// Every tuple; needed when contracting against a fixed coefficient
    /// vector rather than prior moments.
    Full,
}

/// Weight-independent factorization of a one-dimensional design: the base
/// covariance on the distance-ordered locations, the inverse of its
/// Cholesky factor, and cached offset powers `(t_i - t0)^p`.
pub struct TraceBasis {
    ordering: NeighborOrdering,
    sigma: DMatrix<f64>,
    /// `L^{-1}` with `sigma = L L^T`; lower triangular, so its leading
    /// `e x e` block inverts the factor of the leading covariance block.
    minv: DMatrix<f64>,
    /// Signed Taylor offsets `d_i = t_i - t0` along the ordering.
    d: Vec<f64>,
    /// `powers[p][i] = d_i^p` for `p = 0..=order`.
    powers: Vec<Vec<f64>>,
    order: usize,
}

impl TraceBasis {
    /// Factor the design for Taylor order `order` (the prior's `N`).
    /// `base` is the covariance of the unit-variance process being
    /// modulated.
    pub fn new(
        base: &MaternParams,
        locations: &[Location],
        t0: &Location,
        order: usize,
    ) -> Result<Self> {
        if t0.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: t0.dim(),
            });
        }
        let ordering = order_locations(locations, t0)?;
        let n = ordering.len();
        // Stored offsets are t0 - t_i; the Taylor variable is t_i - t0.
        let d: Vec<f64> = ordering.offsets.iter().map(|o| -o[0]).collect();
        let sigma = DMatrix::from_fn(n, n, |i, j| matern_cov(base, (d[i] - d[j]).abs()));
        let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite("base covariance at the design points".into())
        })?;
        let minv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let mut powers: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
        powers.push(vec![1.0; n]);
        for p in 1..=order {
            let prev = &powers[p - 1];
            powers.push((0..n).map(|i| prev[i] * d[i]).collect());
        }
        Ok(Self {
            ordering,
            sigma,
            minv,
            d,
            powers,
            order,
        })
    }

    pub fn n(&self) -> usize {
        self.ordering.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The distance ordering weights must be built along.
    pub fn ordering(&self) -> &NeighborOrdering {
        &self.ordering
    }

    /// `(e, A)` with `A = L^{-T} diag(w_i / sum w) L^{-1}` truncated to the
    /// effective neighborhood `e` (trailing zero weights contribute nothing
    /// because row `i` of `L^{-1}` is supported on the first `i` entries).
    fn a_matrix(&self, w: &WeightVector) -> Result<(usize, DMatrix<f64>)> {
        let n = self.n();
        if w.len() > n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.len(),
            });
        }
        let e = w.effective_len();
        if e == 0 {
            return Err(Error::DegenerateWeights("all weights zero"));
        }
        let s = w.sum();
        if s == 0.0 || !s.is_finite() {
            return Err(Error::DegenerateWeights("weights sum to zero"));
        }
        let me = self.minv.view((0, 0), (e, e));
        let mut scaled = me.clone_owned();
        for (r, &wr) in w.weights()[..e].iter().enumerate() {
            let f = wr / s;
            for c in 0..=r {
                scaled[(r, c)] *= f;
            }
        }
        Ok((e, me.transpose() * scaled))
    }

    /// Trace tables for a weight vector along this basis's ordering, with
    /// the fourth-order table restricted to prior-reachable tuples.
    pub fn tables(&self, w: &WeightVector) -> Result<TraceTables> {
        self.tables_with(w, B4Fill::Paired)
    }

    /// Trace tables with an explicit fourth-order fill policy. Skipped
    /// entries are stored as zero.
    pub fn tables_with(&self, w: &WeightVector, fill: B4Fill) -> Result<TraceTables> {
        let (e, a) = self.a_matrix(w)?;
        let np = self.order + 1;
        let se = self.sigma.view((0, 0), (e, e));
        // K_p = A D^p S: rows of S scaled by d^p, then one product each.
        let mut ks = Vec::with_capacity(np);
        for p in 0..np {
            let mut sp = se.clone_owned();
            for r in 0..e {
                let f = self.powers[p][r];
                for c in 0..e {
                    sp[(r, c)] *= f;
                }
            }
            ks.push(&a * sp);
        }
        // B^{p,q} = tr[A D^p S D^q] = sum_i (K_p)_{ii} d_i^q.
        let mut b2 = vec![0.0; np * np];
        for p in 0..np {
            for q in 0..np {
                let mut acc = 0.0;
                for i in 0..e {
                    acc += ks[p][(i, i)] * self.powers[q][i];
                }
                b2[p * np + q] = acc;
            }
        }
        // B^{p1..p4} = 2 tr[K_{p1} D^{p2} K_{p3} D^{p4}].
        let mut b4 = vec![0.0; np * np * np * np];
        for p1 in 0..np {
            for p2 in 0..np {
                for p3 in 0..np {
                    for p4 in 0..np {
                        if fill == B4Fill::Paired && !paired_tuple([p1, p2, p3, p4]) {
                            continue;
                        }
                        let (k1, k3) = (&ks[p1], &ks[p3]);
                        let (d2, d4) = (&self.powers[p2], &self.powers[p4]);
                        let mut acc = 0.0;
                        for i in 0..e {
                            let mut row = 0.0;
                            for j in 0..e {
                                row += k1[(i, j)] * d2[j] * k3[(j, i)];
                            }
                            acc += row * d4[i];
                        }
                        b4[((p1 * np + p2) * np + p3) * np + p4] = 2.0 * acc;
                    }
                }
            }
        }
        Ok(TraceTables { order: self.order, b2, b4 })
    }
}

/// Second- and fourth-order trace tables for one weight vector.
#[derive(Debug, Clone)]
pub struct TraceTables {
    order: usize,
    b2: Vec<f64>,
    b4: Vec<f64>,
}

impl TraceTables {
    pub fn order(&self) -> usize {
        self.order
    }

    /// `B^{p,q}`.
    pub fn b2(&self, p: usize, q: usize) -> f64 {
        let np = self.order + 1;
        self.b2[p * np + q]
    }

    /// `B^{p1,p2,p3,p4}` (zero where the fill policy skipped the entry).
    pub fn b4(&self, p1: usize, p2: usize, p3: usize, p4: usize) -> f64 {
        let np = self.order + 1;
        self.b4[((p1 * np + p2) * np + p3) * np + p4]
    }
}

/// Exact mean and variance of the estimate for a fixed coefficient vector
/// `coeffs = [c_0, c_1, .., c_N]` — no prior averaging, and independent of
/// the basis's table order.
pub fn conditional_moments(
    basis: &TraceBasis,
    w: &WeightVector,
    coeffs: &[f64],
) -> Result<(f64, f64)> {
    if coeffs.is_empty() {
        return Err(Error::Config("empty coefficient vector".into()));
    }
    let (e, a) = basis.a_matrix(w)?;
    let sig: Vec<f64> = (0..e)
        .map(|i| {
            let mut acc = 0.0;
            let mut dp = 1.0;
            for &c in coeffs {
                acc += c * dp;
                dp *= basis.d[i];
            }
            acc
        })
        .collect();
    // True covariance of the modulated responses on the effective block.
    let cov = DMatrix::from_fn(e, e, |i, j| sig[i] * basis.sigma[(i, j)] * sig[j]);
    let ac = a * cov;
    let mean = ac.trace();
    let mut sq = 0.0;
    for i in 0..e {
        for j in 0..e {
            sq += ac[(i, j)] * ac[(j, i)];
        }
    }
    Ok((mean, 2.0 * sq))
}

/// Exact risk decomposition at the basis location.
#[derive(Debug, Clone, Copy)]
pub struct RiskBreakdown {
    /// Prior-averaged squared error `E E[(est - sigma^2(t0))^2 | c]`.
    pub risk: f64,
    /// Prior-averaged squared bias (both bias terms).
    pub expected_bias_sq: f64,
    /// Prior-averaged conditional variance.
    pub variance_part: f64,
}

/// L2 Bayes risk of the local variance estimate from precomputed tables.
///
/// Three exact terms: the prior-averaged conditional variance (fourth-order
/// table contracted with prior moments), the quadratic bias term
/// `E[(sum_{p,q>=1} c_p c_q B^{p,q})^2]`, and the linear bias term
/// `4 c0^2 sum_p tau2_p (B^{0,p})^2`. The cross term between the two bias
/// pieces vanishes because third moments are zero.
pub fn bayes_risk(prior: &PriorSpec, tables: &TraceTables) -> Result<RiskBreakdown> {
    let n = prior.order();
    if n != tables.order() {
        return Err(Error::Config(format!(
            "prior order {n} does not match table order {}",
            tables.order()
        )));
    }
    let mut variance_part = 0.0;
    for p1 in 0..=n {
        for p2 in 0..=n {
            for p3 in 0..=n {
                for p4 in 0..=n {
                    let m = prior.moment4([p1, p2, p3, p4]);
                    if m != 0.0 {
                        variance_part += m * tables.b4(p1, p2, p3, p4);
                    }
                }
            }
        }
    }
    let mut bias_quad = 0.0;
    for p1 in 1..=n {
        for p2 in 1..=n {
            for p3 in 1..=n {
                for p4 in 1..=n {
                    let m = prior.moment4([p1, p2, p3, p4]);
                    if m != 0.0 {
                        bias_quad += m * tables.b2(p1, p2) * tables.b2(p3, p4);
                    }
                }
            }
        }
    }
    let mut bias_lin = 0.0;
    for p in 1..=n {
        bias_lin += prior.var(p) * tables.b2(0, p).powi(2);
    }
    bias_lin *= 4.0 * prior.c0 * prior.c0;
    let expected_bias_sq = bias_quad + bias_lin;
    Ok(RiskBreakdown {
        risk: variance_part + expected_bias_sq,
        expected_bias_sq,
        variance_part,
    })
}

/// Risk profile over a bandwidth grid for one kernel.
#[derive(Debug, Clone)]
pub struct RiskCurve {
    pub lambdas: Vec<f64>,
    pub risk: Vec<f64>,
    pub bias_sq: Vec<f64>,
    pub variance: Vec<f64>,
}

impl RiskCurve {
    /// Grid index of the smallest finite risk, if any bandwidth was
    /// feasible.
    pub fn argmin(&self) -> Option<usize> {
        self.risk
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite risks"))
            .map(|(i, _)| i)
    }
}

/// Evaluate the Bayes risk along a bandwidth grid.
///
/// A bandwidth whose weight vector degenerates (e.g. a hard threshold
/// narrower than the nearest design spacing) records `NaN` for that grid
/// point rather than aborting the curve.
pub fn risk_curve(
    basis: &TraceBasis,
    spec: KernelSpec,
    lambdas: &[f64],
    prior: &PriorSpec,
) -> Result<RiskCurve> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty bandwidth grid".into()));
    }
    if prior.order() != basis.order() {
        return Err(Error::Config(format!(
            "prior order {} does not match basis order {}",
            prior.order(),
            basis.order()
        )));
    }
    let m = lambdas.len();
    let mut curve = RiskCurve {
        lambdas: lambdas.to_vec(),
        risk: Vec::with_capacity(m),
        bias_sq: Vec::with_capacity(m),
        variance: Vec::with_capacity(m),
    };
    for &lambda in lambdas {
        let r = kernel_weights(spec, &basis.ordering, lambda, usize::MAX)
            .and_then(|w| basis.tables(&w))
            .and_then(|t| bayes_risk(prior, &t));
        match r {
            Ok(r) => {
                curve.risk.push(r.risk);
                curve.bias_sq.push(r.expected_bias_sq);
                curve.variance.push(r.variance_part);
            }
            Err(_) => {
                curve.risk.push(f64::NAN);
                curve.bias_sq.push(f64::NAN);
                curve.variance.push(f64::NAN);
            }
        }
    }
    Ok(curve)
}

/// One cell of a kernel-comparison grid: percent improvement of kernel `a`
/// over kernel `b`, each at its own risk-minimizing bandwidth.
#[derive(Debug, Clone, Copy)]
pub struct ImprovementCell {
    pub nu: f64,
    pub rho: f64,
    /// `100 (risk_b - risk_a) / risk_b`.
    pub pct_risk: f64,
    /// Same ratio for the expected squared bias at those bandwidths.
    pub pct_bias: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

/// Compare two kernels across a Matern `(nu, rho)` grid at a fixed design.
///
/// For each cell the Bayes risk is minimized over `lambdas` separately per
/// kernel (a risk-oracle bandwidth), and the improvement of `kernel_a` over
/// `kernel_b` is reported in percent. Cells are independent and run in
/// parallel.
#[allow(clippy::too_many_arguments)]
pub fn improvement_grid(
    nu_grid: &[f64],
    rho_grid: &[f64],
    kernel_a: KernelSpec,
    kernel_b: KernelSpec,
    lambdas: &[f64],
    prior: &PriorSpec,
    locations: &[Location],
    t0: &Location,
) -> Result<Vec<ImprovementCell>> {
    if nu_grid.is_empty() || rho_grid.is_empty() {
        return Err(Error::Config("empty parameter grid".into()));
    }
    let cells: Vec<(f64, f64)> = nu_grid
        .iter()
        .flat_map(|&nu| rho_grid.iter().map(move |&rho| (nu, rho)))
        .collect();
    cells
        .par_iter()
        .map(|&(nu, rho)| {
            let base = MaternParams::new(1.0, nu, rho)?;
            let basis = TraceBasis::new(&base, locations, t0, prior.order())?;
            let ca = risk_curve(&basis, kernel_a, lambdas, prior)?;
            let cb = risk_curve(&basis, kernel_b, lambdas, prior)?;
            let feasible = |c: &RiskCurve| {
                c.argmin().ok_or_else(|| {
                    Error::Calibration(format!(
                        "no feasible bandwidth in the grid at nu={nu}, rho={rho}"
                    ))
                })
            };
            let (ia, ib) = (feasible(&ca)?, feasible(&cb)?);
            Ok(ImprovementCell {
                nu,
                rho,
                pct_risk: 100.0 * (cb.risk[ib] - ca.risk[ia]) / cb.risk[ib],
                pct_bias: 100.0 * (cb.bias_sq[ib] - ca.bias_sq[ia]) / cb.bias_sq[ib],
                lambda_a: ca.lambdas[ia],
                lambda_b: cb.lambdas[ib],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::CounterRng;

    fn even_grid(n: usize) -> Vec<Location> {
        (0..n)
            .map(|i| Location::new_1d(i as f64 / n as f64))
            .collect()
    }

    fn test_basis(n: usize, nu: f64, rho: f64, t0: f64, order: usize) -> TraceBasis {
        let base = MaternParams::new(1.0, nu, rho).unwrap();
        TraceBasis::new(&base, &even_grid(n), &Location::new_1d(t0), order).unwrap()
    }

    #[test]
    fn b00_is_one_for_any_weight_vector() {
        let basis = test_basis(30, 0.8, 0.8, 0.5, 2);
        let schemes = [
            kernel_weights(
                KernelSpec::higher_order(1).unwrap(),
                basis.ordering(),
                0.1,
                usize::MAX,
            )
            .unwrap(),
            kernel_weights(
                KernelSpec::higher_order(3).unwrap(),
                basis.ordering(),
                0.27,
                usize::MAX,
            )
            .unwrap(),
            kernel_weights(KernelSpec::HardThreshold, basis.ordering(), 0.15, usize::MAX)
                .unwrap(),
            WeightVector::new((0..30).map(|i| 1.0 / (1.0 + i as f64)).collect()).unwrap(),
        ];
        for w in &schemes {
            let t = basis.tables(w).unwrap();
            assert!(
                (t.b2(0, 0) - 1.0).abs() < 1e-12,
                "B(0,0) = {} should be 1",
                t.b2(0, 0)
            );
        }
    }

    #[test]
    fn b0p_matches_weighted_design_moment() {
        let basis = test_basis(40, 1.2, 0.4, 0.31, 3);
        let w = kernel_weights(
            KernelSpec::higher_order(2).unwrap(),
            basis.ordering(),
            0.12,
            usize::MAX,
        )
        .unwrap();
        let t = basis.tables(&w).unwrap();
        let s: f64 = w.sum();
        for p in 1..=3usize {
            let direct: f64 = w
                .weights()
                .iter()
                .zip(&basis.d)
                .map(|(&wi, &di)| wi * di.powi(p as i32))
                .sum::<f64>()
                / s;
            let scale = direct.abs().max(1e-6);
            assert!(
                (t.b2(0, p) - direct).abs() < 1e-10 * scale.max(1.0),
                "B(0,{p}) = {} vs weighted moment {direct}",
                t.b2(0, p)
            );
            assert!(
                (t.b2(p, 0) - t.b2(0, p)).abs() <= 1e-10 * scale.max(1.0),
                "B({p},0) should equal B(0,{p})"
            );
        }
    }

    #[test]
    fn tables_contract_to_conditional_moments() {
        // Contracting the tables with a fixed coefficient vector must match
        // the direct quadratic-form mean/variance computed from the
        // modulated covariance — an exact algebraic identity.
        let basis = test_basis(25, 0.8, 0.8, 0.52, 2);
        let w = kernel_weights(
            KernelSpec::higher_order(1).unwrap(),
            basis.ordering(),
            0.2,
            usize::MAX,
        )
        .unwrap();
        let t = basis.tables_with(&w, B4Fill::Full).unwrap();
        let c = [2.0, 0.7, -0.4];
        let (mean, var) = conditional_moments(&basis, &w, &c).unwrap();
        let mut mean_tab = 0.0;
        for p in 0..=2 {
            for q in 0..=2 {
                mean_tab += c[p] * c[q] * t.b2(p, q);
            }
        }
        assert!(
            (mean - mean_tab).abs() < 1e-10 * mean.abs(),
            "table mean {mean_tab} vs direct {mean}"
        );
        let mut var_tab = 0.0;
        for p1 in 0..=2 {
            for p2 in 0..=2 {
                for p3 in 0..=2 {
                    for p4 in 0..=2 {
                        var_tab += c[p1] * c[p2] * c[p3] * c[p4] * t.b4(p1, p2, p3, p4);
                    }
                }
            }
        }
        assert!(
            (var - var_tab).abs() < 1e-9 * var.abs(),
            "table variance {var_tab} vs direct {var}"
        );
    }

    #[test]
    fn conditional_moments_match_monte_carlo() {
        let basis = test_basis(25, 0.8, 0.8, 0.52, 2);
        let w = kernel_weights(
            KernelSpec::higher_order(1).unwrap(),
            basis.ordering(),
            0.2,
            usize::MAX,
        )
        .unwrap();
        let c = [2.0, 0.7, -0.4];
        let (mean, var) = conditional_moments(&basis, &w, &c).unwrap();

        let n = basis.n();
        let e = w.effective_len();
        let l = nalgebra::Cholesky::new(basis.sigma.clone()).unwrap().l();
        let sig: Vec<f64> = (0..n)
            .map(|i| c[0] + c[1] * basis.d[i] + c[2] * basis.d[i] * basis.d[i])
            .collect();
        let wn: Vec<f64> = w.weights().iter().map(|&x| x / w.sum()).collect();
        let reps = 50_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        for r in 0..reps {
            let mut rng = CounterRng::replicate(9177, r as u64);
            let xi: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
            // z = diag(sig) L xi has the modulated covariance.
            let mut z = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += l[(i, j)] * xi[j];
                }
                z[i] = sig[i] * acc;
            }
            // Whiten under the base model and apply the weight profile.
            let mut est = 0.0;
            for (i, wni) in wn.iter().enumerate().take(e) {
                let mut u = 0.0;
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    u += basis.minv[(i, j)] * zj;
                }
                est += wni * u * u;
            }
            sum += est;
            sum2 += est * est;
            sum4 += (est - mean).powi(2) * (est - mean).powi(2);
        }
        let rf = reps as f64;
        let mc_mean = sum / rf;
        let mc_var = sum2 / rf - mc_mean * mc_mean;
        let se_mean = (mc_var / rf).sqrt();
        assert!(
            (mc_mean - mean).abs() < 4.0 * se_mean,
            "MC mean {mc_mean} vs exact {mean} (se {se_mean})"
        );
        // Standard error of a sample variance from empirical moments.
        let m4 = sum4 / rf;
        let se_var = ((m4 - mc_var * mc_var).max(0.0) / rf).sqrt();
        assert!(
            (mc_var - var).abs() < 4.0 * se_var,
            "MC variance {mc_var} vs exact {var} (se {se_var})"
        );
    }

    #[test]
    fn equal_weights_give_chi_square_variance() {
        // With all-ones weights the estimate is the full stationary scale
        // MLE, whose variance coefficient is 2/n.
        let n = 20;
        let basis = test_basis(n, 0.7, 0.3, 0.5, 0);
        let w = WeightVector::new(vec![1.0; n]).unwrap();
        let t = basis.tables(&w).unwrap();
        assert!(
            (t.b4(0, 0, 0, 0) - 2.0 / n as f64).abs() < 1e-12,
            "B(0,0,0,0) = {} should be 2/n = {}",
            t.b4(0, 0, 0, 0),
            2.0 / n as f64
        );
    }

    #[test]
    fn b4_trace_symmetries() {
        let basis = test_basis(30, 1.1, 0.6, 0.48, 2);
        let w = kernel_weights(
            KernelSpec::higher_order(2).unwrap(),
            basis.ordering(),
            0.15,
            usize::MAX,
        )
        .unwrap();
        let t = basis.tables_with(&w, B4Fill::Full).unwrap();
        let cases = [
            ([0, 1, 2, 2], [2, 2, 1, 0]), // reversal (transpose identity)
            ([1, 2, 1, 2], [2, 1, 2, 1]),
            ([0, 1, 2, 2], [2, 2, 0, 1]), // pair swap (cyclic identity)
            ([1, 0, 2, 1], [2, 1, 1, 0]),
        ];
        for (a, b) in cases {
            let (va, vb) = (t.b4(a[0], a[1], a[2], a[3]), t.b4(b[0], b[1], b[2], b[3]));
            let scale = va.abs().max(1e-12);
            assert!(
                (va - vb).abs() < 1e-10 * scale.max(1.0),
                "B{a:?} = {va} vs B{b:?} = {vb}"
            );
        }
    }

    #[test]
    fn order_zero_prior_risk_is_pure_variance() {
        let n = 20;
        let basis = test_basis(n, 0.7, 0.3, 0.5, 0);
        let w = WeightVector::new(vec![1.0; n]).unwrap();
        let t = basis.tables(&w).unwrap();
        let prior = PriorSpec::gaussian(1.7, vec![]).unwrap();
        let r = bayes_risk(&prior, &t).unwrap();
        assert_eq!(r.expected_bias_sq, 0.0);
        let expect = 1.7f64.powi(4) * 2.0 / n as f64;
        assert!(
            (r.risk - expect).abs() < 1e-12 * expect,
            "risk {} vs chi-square value {expect}",
            r.risk
        );
    }

    #[test]
    fn risk_finite_positive_across_matern_grid() {
        // Fourth-order prior with N(0, 4) nuisance coefficients at the
        // domain midpoint; smooth sixth-order kernel weights.
        let prior = PriorSpec::gaussian(2.0, vec![4.0; 4]).unwrap();
        let locs = even_grid(100);
        let t0 = Location::new_1d(0.5);
        let k6 = KernelSpec::higher_order(3).unwrap();
        for &nu in &[0.4, 0.8, 1.6] {
            for &rho in &[0.4, 0.8, 1.6] {
                let base = MaternParams::new(1.0, nu, rho).unwrap();
                let basis = TraceBasis::new(&base, &locs, &t0, 4).unwrap();
                for &lambda in &[0.05, 0.1, 0.3] {
                    let w = kernel_weights(k6, basis.ordering(), lambda, usize::MAX).unwrap();
                    let t = basis.tables(&w).unwrap();
                    let r = bayes_risk(&prior, &t).unwrap();
                    assert!(
                        r.risk.is_finite() && r.risk > 0.0,
                        "risk {} at nu={nu} rho={rho} lambda={lambda}",
                        r.risk
                    );
                    assert!(r.variance_part > -1e-10);
                    assert!(r.risk >= r.expected_bias_sq - 1e-12);
                }
            }
        }
    }

    #[test]
    fn higher_order_kernel_bias_vanishes_under_infill() {
        // A fourth-order kernel annihilates the p = 2 design moment in the
        // infill limit; densifying the design while shrinking the bandwidth
        // must shrink B(0,2) by better than 10x.
        let k4 = KernelSpec::higher_order(2).unwrap();
        let coarse = test_basis(50, 0.8, 0.8, 0.37, 2);
        let wc = kernel_weights(k4, coarse.ordering(), 0.2, usize::MAX).unwrap();
        let bc = coarse.tables(&wc).unwrap().b2(0, 2);
        let dense = test_basis(400, 0.8, 0.8, 0.37, 2);
        let wd = kernel_weights(k4, dense.ordering(), 0.05, usize::MAX).unwrap();
        let bd = dense.tables(&wd).unwrap().b2(0, 2);
        assert!(
            bd.abs() < 0.1 * bc.abs(),
            "B(0,2) dense {bd} should be under 10% of coarse {bc}"
        );
    }

    #[test]
    fn identical_kernels_give_zero_improvement() {
        let prior = PriorSpec::gaussian(2.0, vec![4.0, 4.0]).unwrap();
        let locs = even_grid(40);
        let k4 = KernelSpec::higher_order(2).unwrap();
        let lambdas = crate::numeric::log_space(0.05, 0.4, 5).unwrap();
        let cells = improvement_grid(
            &[0.8],
            &[0.6, 1.0],
            k4,
            k4,
            &lambdas,
            &prior,
            &locs,
            &Location::new_1d(0.5),
        )
        .unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert_eq!(c.pct_risk, 0.0);
            assert_eq!(c.pct_bias, 0.0);
            assert_eq!(c.lambda_a, c.lambda_b);
        }
    }

    #[test]
    fn sixth_order_kernel_beats_hard_threshold() {
        // Fourth-order N(0,4) prior, 100 even design points, midpoint
        // target: the smooth kernel's oracle-bandwidth risk comes in well
        // below hard thresholding.
        let prior = PriorSpec::gaussian(2.0, vec![4.0; 4]).unwrap();
        let locs = even_grid(100);
        let k6 = KernelSpec::higher_order(3).unwrap();
        let lambdas = crate::numeric::log_space(0.02, 0.5, 25).unwrap();
        let cells = improvement_grid(
            &[0.8],
            &[0.8],
            k6,
            KernelSpec::HardThreshold,
            &lambdas,
            &prior,
            &locs,
            &Location::new_1d(0.5),
        )
        .unwrap();
        assert_eq!(cells.len(), 1);
        let c = &cells[0];
        assert!(
            c.pct_risk > 5.0,
            "risk improvement {}% should be clearly positive",
            c.pct_risk
        );
        assert!(c.pct_risk < 100.0);
    }

    #[test]
    fn prior_moment_cases() {
        let prior = PriorSpec::gaussian(2.0, vec![1.5, 0.7]).unwrap();
        assert_eq!(prior.moment4([0, 0, 0, 0]), 16.0);
        assert_eq!(prior.moment4([0, 1, 0, 1]), 4.0 * 1.5);
        assert_eq!(prior.moment4([1, 1, 2, 2]), 1.5 * 0.7);
        assert_eq!(prior.moment4([1, 2, 1, 2]), 1.5 * 0.7);
        assert_eq!(prior.moment4([1, 1, 1, 1]), 3.0 * 1.5 * 1.5);
        assert_eq!(prior.moment4([0, 0, 0, 1]), 0.0);
        assert_eq!(prior.moment4([1, 1, 1, 2]), 0.0);
        assert_eq!(prior.moment4([0, 1, 2, 2]), 0.0);

        assert!(PriorSpec::gaussian(-1.0, vec![]).is_err());
        assert!(PriorSpec::with_fourth_moments(1.0, vec![2.0], vec![1.0]).is_err());
        assert!(PriorSpec::with_fourth_moments(1.0, vec![2.0], vec![4.0, 4.0]).is_err());
    }

    #[test]
    fn bayes_risk_matches_monte_carlo_mse() {
        // Full pipeline: draw nuisance coefficients from the prior, fields
        // from the modulated covariance, and compare the empirical mean
        // squared error of the estimate against the closed-form risk.
        let n = 25;
        let basis = test_basis(n, 0.8, 0.8, 0.52, 2);
        let w = kernel_weights(
            KernelSpec::higher_order(1).unwrap(),
            basis.ordering(),
            0.2,
            usize::MAX,
        )
        .unwrap();
        let prior = PriorSpec::gaussian(2.0, vec![1.0, 1.0]).unwrap();
        let t = basis.tables(&w).unwrap();
        let exact = bayes_risk(&prior, &t).unwrap();

        let l = nalgebra::Cholesky::new(basis.sigma.clone()).unwrap().l();
        let e = w.effective_len();
        let wn: Vec<f64> = w.weights().iter().map(|&x| x / w.sum()).collect();
        let target = prior.c0() * prior.c0();
        let (outer, inner) = (2000usize, 50usize);
        let mut outer_means = Vec::with_capacity(outer);
        for o in 0..outer {
            let mut rng = CounterRng::replicate(40_111, o as u64);
            let c = [
                prior.c0(),
                rng.next_normal(),
                rng.next_normal(),
            ];
            let sig: Vec<f64> = (0..n)
                .map(|i| c[0] + c[1] * basis.d[i] + c[2] * basis.d[i] * basis.d[i])
                .collect();
            let mut acc = 0.0;
            for _ in 0..inner {
                let xi: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
                let mut z = vec![0.0; n];
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..=i {
                        s += l[(i, j)] * xi[j];
                    }
                    z[i] = sig[i] * s;
                }
                let mut est = 0.0;
                for (i, wni) in wn.iter().enumerate().take(e) {
                    let mut u = 0.0;
                    for (j, zj) in z.iter().enumerate().take(i + 1) {
                        u += basis.minv[(i, j)] * zj;
                    }
                    est += wni * u * u;
                }
                acc += (est - target) * (est - target);
            }
            outer_means.push(acc / inner as f64);
        }
        let mse: f64 = outer_means.iter().sum::<f64>() / outer as f64;
        let sd: f64 = (outer_means
            .iter()
            .map(|m| (m - mse) * (m - mse))
            .sum::<f64>()
            / (outer as f64 - 1.0))
            .sqrt();
        let se = sd / (outer as f64).sqrt();
        let tol = (0.05 * exact.risk).max(3.0 * se);
        assert!(
            (mse - exact.risk).abs() < tol,
            "MC mse {mse} vs exact risk {} (tol {tol})",
            exact.risk
        );
    }

    #[test]
    fn risk_curve_handles_infeasible_bandwidths() {
        let prior = PriorSpec::gaussian(2.0, vec![1.0]).unwrap();
        let basis = test_basis(30, 0.8, 0.8, 0.52, 1);
        // The first bandwidth is narrower than the nearest design spacing,
        // so hard thresholding has an empty neighborhood there.
        let lambdas = [1e-4, 0.2, 0.4];
        let curve = risk_curve(&basis, KernelSpec::HardThreshold, &lambdas, &prior).unwrap();
        assert!(curve.risk[0].is_nan());
        assert!(curve.risk[1].is_finite() && curve.risk[2].is_finite());
        let i = curve.argmin().unwrap();
        assert!(i == 1 || i == 2);
    }
}
