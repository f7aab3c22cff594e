//! Distance kernels and weight construction for local likelihoods.
//!
//! Two weighting schemes are provided. The first evaluates a radial kernel
//! at scaled distances; besides a hard threshold ("everything within radius
//! lambda counts equally") it implements the higher-order Gaussian family
//!
//! ```text
//! K_2r(t) = s_r * { 2^(r-1) (r-1)! }^(-1) * H_{2r-1}(t) / t * phi(t) ,
//! ```
//!
//! where `H_j` are probabilists' Hermite polynomials, `phi` is the standard
//! normal density, and `s_r = (-1)^(r-1)` fixes the sign so every member
//! integrates to one. `K_2` is the Gaussian kernel itself; `K_2r` has
//! vanishing moments up to order `2r - 1`, which is what kills polynomial
//! bias of matching degree in the weighted estimators downstream.
//!
//! The second scheme skips kernels altogether and picks the weights that
//! minimize the leading variance proxy `sum_k w_k^2 exp(|t - t_k|^2 / 2L^2)`
//! subject to `sum w_k = 1` and the vanishing linear moment
//! `sum_k w_k (t - t_k) = 0`. The minimizer has the closed form
//! `w_k = (a + b . (t - t_k)) e_k` with `e_k = exp(-|t - t_k|^2 / 2L^2)`,
//! where `(a, b)` solve a small (d+1) x (d+1) moment system.

use nalgebra::{DMatrix, DVector};

use crate::data::{Location, NeighborOrdering, WeightVector};
use crate::error::{Error, Result};

/// 1 / sqrt(2 pi), the normal density normalizer.
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Relative threshold below which kernel weights are clamped to exact zero.
///
/// Weights this small contribute nothing at `f64` precision, but a nonzero
/// tail would force the likelihood sweep to factor hundreds of extra rows.
/// Clamping keeps effective neighborhoods finite without changing any
/// result beyond the last couple of ulps.
pub const WEIGHT_CLAMP_REL: f64 = 1e-14;

/// Standard normal density.
pub fn normal_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

/// Probabilists' Hermite polynomial `H_j(t)`, via the three-term recurrence
/// `H_{j+1} = t H_j - j H_{j-1}`. Supports `j <= 15` (orders above what any
/// kernel in the family needs); panics beyond that.
pub fn hermite(j: usize, t: f64) -> f64 {
    assert!(j <= 15, "Hermite order {j} out of supported range");
    let mut prev = 1.0; // H_0
    if j == 0 {
        return prev;
    }
    let mut cur = t; // H_1
    for k in 1..j {
        let next = t * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficient vector of `H_j` (index = power of `t`), exact integers.
fn hermite_coeffs(j: usize) -> Vec<f64> {
    let mut prev = vec![1.0]; // H_0
    if j == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0]; // H_1
    for k in 1..j {
        // H_{k+1} = t * H_k - k * H_{k-1}
        let mut next = vec![0.0; cur.len() + 1];
        for (p, &c) in cur.iter().enumerate() {
            next[p + 1] += c;
        }
        for (p, &c) in prev.iter().enumerate() {
            next[p] -= k as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// A radial weighting kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSpec {
    /// `K_2r` from the higher-order Gaussian family, `1 <= r <= 8`.
    HigherOrder(usize),
    /// Indicator of the unit ball: every neighbor within the bandwidth
    /// receives weight one.
    HardThreshold,
}

impl KernelSpec {
    pub fn higher_order(r: usize) -> Result<Self> {
        if !(1..=8).contains(&r) {
            return Err(Error::OutOfDomain {
                what: "kernel order r",
                value: r as f64,
                lo: 1.0,
                hi: 8.0,
            });
        }
        Ok(KernelSpec::HigherOrder(r))
    }
}

/// Evaluate the kernel at scaled distance `t`.
pub fn kernel_value(spec: KernelSpec, t: f64) -> f64 {
    match spec {
        KernelSpec::HardThreshold => {
            if t.abs() <= 1.0 {
                1.0
            } else {
                0.0
            }
        }
        KernelSpec::HigherOrder(r) => {
            assert!((1..=8).contains(&r), "kernel order {r} out of range");
            if r == 1 {
                return normal_pdf(t);
            }
            // H_{2r-1} is odd, so H_{2r-1}(t)/t is the even polynomial whose
            // coefficient at t^{2m} is the (2m+1)-coefficient of H_{2r-1}.
            // Evaluating that polynomial in u = t^2 avoids any special case
            // at t = 0.
            let coeffs = hermite_coeffs(2 * r - 1);
            let u = t * t;
            let mut ratio = 0.0;
            for m in (0..r).rev() {
                ratio = ratio * u + coeffs[2 * m + 1];
            }
            let scale = 1.0 / (2f64.powi(r as i32 - 1) * factorial(r - 1));
            let sign = if r % 2 == 1 { 1.0 } else { -1.0 };
            sign * scale * ratio * normal_pdf(t)
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
}

/// Kernel weights along a neighbor ordering: `w_k = K(dist_k / lambda)`.
///
/// At most `limit` nearest neighbors are considered (pass `usize::MAX` for
/// no cap). Weights below `WEIGHT_CLAMP_REL` of the largest magnitude are
/// clamped to exact zero so the effective neighborhood stays finite.
pub fn kernel_weights(
    spec: KernelSpec,
    ordering: &NeighborOrdering,
    lambda: f64,
    limit: usize,
) -> Result<WeightVector> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::OutOfDomain {
            what: "bandwidth lambda",
            value: lambda,
            lo: f64::MIN_POSITIVE,
            hi: f64::INFINITY,
        });
    }
    let m = ordering.len().min(limit);
    if m == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let mut w: Vec<f64> = ordering.dists[..m]
        .iter()
        .map(|&d| kernel_value(spec, d / lambda))
        .collect();
    clamp_small(&mut w)?;
    WeightVector::new(w)
}

/// Zero out entries below `WEIGHT_CLAMP_REL` of the max magnitude; error if
/// everything is zero.
fn clamp_small(w: &mut [f64]) -> Result<()> {
    let max_abs = w.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max_abs == 0.0 {
        return Err(Error::EmptyNeighborhood);
    }
    let floor = WEIGHT_CLAMP_REL * max_abs;
    for x in w.iter_mut() {
        if x.abs() < floor {
            *x = 0.0;
        }
    }
    Ok(())
}

/// Variance-minimizing constrained weights at the ordering's target,
/// considering at most `limit` nearest neighbors.
///
/// Solves the moment system
///
/// ```text
/// [ m0   m1^T ] [a]   [1]
/// [ m1   M2   ] [b] = [0] ,   m0 = sum_k e_k ,  m1 = sum_k e_k (t - t_k) ,
///                              M2 = sum_k e_k (t - t_k)(t - t_k)^T ,
/// ```
///
/// then sets `w_k = (a + b . (t - t_k)) e_k`. The constraints `sum w = 1`
/// and `sum w (t - t_k) = 0` hold by construction (up to solve roundoff),
/// and among all weight vectors satisfying them this one minimizes
/// `sum w_k^2 / e_k`.
pub fn constrained_weights(
    ordering: &NeighborOrdering,
    lambda: f64,
    limit: usize,
) -> Result<WeightVector> {
    let m = ordering.len().min(limit);
    constrained_weights_from_offsets(&ordering.offsets[..m], lambda)
}

/// Constrained weights given explicit offsets `t - t_k` along the ordering.
pub fn constrained_weights_from_offsets(
    offsets: &[Vec<f64>],
    lambda: f64,
) -> Result<WeightVector> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::OutOfDomain {
            what: "bandwidth lambda",
            value: lambda,
            lo: f64::MIN_POSITIVE,
            hi: f64::INFINITY,
        });
    }
    let m = offsets.len();
    if m == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let d = offsets[0].len();
    let two_l2 = 2.0 * lambda * lambda;
    let e: Vec<f64> = offsets
        .iter()
        .map(|o| {
            let r2: f64 = o.iter().map(|c| c * c).sum();
            (-r2 / two_l2).exp()
        })
        .collect();

    // Moment system of size (d+1):
    // row/col 0 is the normalization constraint, the rest the linear moment.
    let mut sys = DMatrix::zeros(d + 1, d + 1);
    let mut rhs = DVector::zeros(d + 1);
    rhs[0] = 1.0;
    for (o, &ek) in offsets.iter().zip(&e) {
        sys[(0, 0)] += ek;
        for i in 0..d {
            sys[(0, i + 1)] += ek * o[i];
            sys[(i + 1, 0)] += ek * o[i];
            for j in 0..d {
                sys[(i + 1, j + 1)] += ek * o[i] * o[j];
            }
        }
    }
    let lu = sys.clone().lu();
    let sol = lu.solve(&rhs).ok_or_else(|| {
        Error::DegenerateGeometry("singular moment system for constrained weights".into())
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateGeometry(
            "ill-conditioned moment system for constrained weights".into(),
        ));
    }
    let a = sol[0];
    let b = &sol.as_slice()[1..];
    let mut w: Vec<f64> = offsets
        .iter()
        .zip(&e)
        .map(|(o, &ek)| {
            let lin: f64 = b.iter().zip(o).map(|(bi, oi)| bi * oi).sum();
            (a + lin) * ek
        })
        .collect();
    clamp_small(&mut w)?;
    // The LU solve can "succeed" on a numerically singular moment system
    // (e.g. when the localization mass sits on an affinely degenerate point
    // set), leaving weights that violate the constraints. Verify the
    // constraint residuals directly, relative to their cancellation scale.
    let sum: f64 = w.iter().sum();
    let abs_sum: f64 = w.iter().map(|v| v.abs()).sum();
    if (sum - 1.0).abs() > 1e-10 * abs_sum.max(1.0) {
        return Err(Error::DegenerateGeometry(
            "constrained-weight normalization residual too large".into(),
        ));
    }
    for j in 0..d {
        let moment: f64 = w.iter().zip(offsets).map(|(wk, o)| wk * o[j]).sum();
        let scale: f64 = w
            .iter()
            .zip(offsets)
            .map(|(wk, o)| (wk * o[j]).abs())
            .sum();
        if moment.abs() > 1e-10 * scale.max(1.0) {
            return Err(Error::DegenerateGeometry(
                "constrained-weight moment residual too large".into(),
            ));
        }
    }
    WeightVector::new(w)
}

/// Bandwidth policy: a base bandwidth, optionally inflated near the
/// boundary of the observation domain.
#[derive(Debug, Clone)]
pub struct BandwidthPolicy {
    base: f64,
    /// Domain box per axis; present iff boundary correction is on.
    domain: Option<Vec<(f64, f64)>>,
}

impl BandwidthPolicy {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            base: lambda,
            domain: None,
        }
    }

    pub fn boundary_corrected(lambda: f64, domain: Vec<(f64, f64)>) -> Self {
        Self {
            base: lambda,
            domain: Some(domain),
        }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Bandwidth to use at `target`.
    pub fn at(&self, target: &Location) -> f64 {
        match &self.domain {
            None => self.base,
            Some(domain) => boundary_bandwidth(self.base, target, domain),
        }
    }

    /// Same policy with a different base bandwidth.
    pub fn with_base(&self, lambda: f64) -> Self {
        Self {
            base: lambda,
            domain: self.domain.clone(),
        }
    }
}

/// Boundary-corrected bandwidth
/// `lambda * prod_i g(d_i / lambda)`, `g(u) = sqrt(2) - (sqrt(2)-1) min(u, 1)`,
/// where `d_i` is the distance from `target` to the nearest domain face
/// along axis `i`.
///
/// Interior targets (`d_i >= lambda` on every axis) keep `lambda` exactly;
/// a 2-D corner doubles it and an edge multiplies it by `sqrt(2)`,
/// compensating for the half (quarter) of the kernel mass that falls
/// outside the observation window.
pub fn boundary_bandwidth(lambda: f64, target: &Location, domain: &[(f64, f64)]) -> f64 {
    debug_assert_eq!(target.dim(), domain.len());
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = lambda;
    for (c, (lo, hi)) in target.coords().iter().zip(domain) {
        let d = (c - lo).min(hi - c).max(0.0);
        let u = (d / lambda).min(1.0);
        out *= sqrt2 - (sqrt2 - 1.0) * u;
    }
    out
}
