//! The weighted local likelihood objective and its maximizers.
//!
//! For a target `t`, neighbors ordered nearest-first, and weights `w_k`,
//! the objective is `W(theta0) = sum_k w_k D_k(theta0)` where `D_k` is the
//! increment of the joint log-likelihood when the `k`-th nearest
//! observation joins the conditioning set, evaluated under the stationary
//! model with local parameter `theta0`. With all-ones weights the
//! increments telescope and `W` collapses to the full stationary
//! log-likelihood.
//!
//! Variance modulation admits a closed-form maximizer
//! (`sigma2_hat = sum_k w_k (q_k - q_{k-1}) / sum_k w_k`, with `q_k` the
//! quadratic forms under the unit-variance base model); everything else
//! uses a guarded scalar search.

use crate::covariance::{MaternParams, NonstatModel};
use crate::data::{order_neighbors, Dataset, Location, NeighborOrdering, ParamField, WeightVector};
use crate::error::{Error, Result};
use crate::kernels::{constrained_weights, kernel_weights, BandwidthPolicy, KernelSpec};
use crate::linalg::{chol_sequence, loglik_increments};
use crate::numeric::brent_max;
use rayon::prelude::*;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Objective value used in place of an evaluation error during scalar
/// search; finite so difference-based interpolation steps stay NaN-free.
const PENALTY: f64 = -1e300;

/// The local stationary family being fitted: which Matérn parameter is
/// free, what is pinned, and the search bounds for the free parameter.
#[derive(Debug, Clone)]
pub struct LocalModelFamily {
    kind: FamilyKind,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone)]
enum FamilyKind {
    /// Free local variance; smoothness and range pinned from `base`.
    VarianceScale { base: MaternParams },
    /// Free local smoothness; variance and range pinned.
    MaternSmoothness { sigma2: f64, rho: f64 },
}

impl LocalModelFamily {
    /// Variance-modulation family with default bounds `[1e-6, 1e6]`.
    pub fn variance_scale(base: MaternParams) -> Self {
        LocalModelFamily {
            kind: FamilyKind::VarianceScale { base },
            lo: 1e-6,
            hi: 1e6,
        }
    }

    /// Free-smoothness family with default bounds `[0.05, 10]`.
    pub fn matern_smoothness(sigma2: f64, rho: f64) -> Self {
        LocalModelFamily {
            kind: FamilyKind::MaternSmoothness { sigma2, rho },
            lo: 0.05,
            hi: 10.0,
        }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi) || !hi.is_finite() {
            return Err(Error::Config(format!(
                "invalid free-parameter bounds [{lo}, {hi}]"
            )));
        }
        self.lo = lo;
        self.hi = hi;
        Ok(self)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// The stationary model with the free parameter set to `theta0`.
    pub fn model_at(&self, theta0: f64) -> Result<NonstatModel> {
        let p = match &self.kind {
            FamilyKind::VarianceScale { base } => {
                MaternParams::new(theta0, base.nu, base.rho)?
            }
            FamilyKind::MaternSmoothness { sigma2, rho } => {
                MaternParams::new(*sigma2, theta0, *rho)?
            }
        };
        Ok(NonstatModel::stationary_reparam_k(&p))
    }

    /// Unit-variance base parameters, when the family is variance-scale.
    pub(crate) fn variance_base(&self) -> Option<MaternParams> {
        match &self.kind {
            FamilyKind::VarianceScale { base } => {
                Some(MaternParams::new(1.0, base.nu, base.rho).expect("validated"))
            }
            FamilyKind::MaternSmoothness { .. } => None,
        }
    }

    /// The global nonstationary model induced by a local parameter surface
    /// `theta(t)`. For the variance family `theta` is the local variance
    /// (must stay positive: the standard-deviation field takes its square
    /// root); for the smoothness family it is the local smoothness.
    pub fn field_model(&self, theta: ParamField) -> NonstatModel {
        match &self.kind {
            FamilyKind::VarianceScale { base } => NonstatModel::ReparamK {
                sigma: ParamField::from_fn(move |t| theta.eval(t).sqrt()),
                nu: ParamField::constant(base.nu),
                rho: ParamField::constant(base.rho),
            },
            FamilyKind::MaternSmoothness { sigma2, rho } => NonstatModel::SmoothnessOnly {
                sigma2: *sigma2,
                rho: *rho,
                nu: theta,
            },
        }
    }
}

/// Result of one local fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Maximizing value of the free parameter.
    pub theta_hat: f64,
    /// Objective value at the maximizer.
    pub objective: f64,
    /// Number of observations that actually entered the fit (weights past
    /// the clamped tail are excluded entirely).
    pub neighborhood_size: usize,
    /// The weights the fit used.
    pub weights_used: WeightVector,
}

/// Weighted local likelihood objective at `theta0` (passed as a length-1
/// slice; the slice shape leaves room for multivariate local models).
/// Weights are aligned with `order_neighbors(data, t)`.
pub fn wll_objective(
    theta0: &[f64],
    t: &Location,
    data: &Dataset,
    w: &WeightVector,
    fam: &LocalModelFamily,
) -> Result<f64> {
    let ordering = order_neighbors(data, t)?;
    wll_objective_ordered(theta0, data, &ordering, w, fam)
}

/// [`wll_objective`] with the neighbor ordering precomputed, so scalar
/// searches don't re-sort per evaluation.
pub fn wll_objective_ordered(
    theta0: &[f64],
    data: &Dataset,
    ordering: &NeighborOrdering,
    w: &WeightVector,
    fam: &LocalModelFamily,
) -> Result<f64> {
    let &[theta] = theta0 else {
        return Err(Error::Config(format!(
            "expected exactly one free parameter, got {}",
            theta0.len()
        )));
    };
    let m = w.effective_len().min(ordering.len());
    if m == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let model = fam.model_at(theta)?;
    let inc = loglik_increments(&model, data, ordering, m)?;
    Ok(inc.iter().zip(w.weights()).map(|(d, wk)| wk * d).sum())
}

/// Per-target cache for the variance-modulation family: conditional
/// variances and whitened-response increments under the unit-variance base
/// model, along the neighbor ordering. Every bandwidth and every weight
/// vector at this target reuses the same cache, making repeated variance
/// fits O(n) after the one-time O(n^3) build.
#[derive(Debug, Clone)]
pub struct VarianceProfile {
    /// `log d_k^2` of the unit model.
    log_d2: Vec<f64>,
    /// `q_k - q_{k-1} = u_k^2`: the per-step quadratic-form increments.
    qdiff: Vec<f64>,
}

impl VarianceProfile {
    /// Build from the unit-variance base model along the ordering,
    /// over at most `limit` nearest neighbors.
    pub fn build(
        data: &Dataset,
        ordering: &NeighborOrdering,
        base: &MaternParams,
        limit: usize,
    ) -> Result<Self> {
        let unit = MaternParams::new(1.0, base.nu, base.rho)?;
        let model = NonstatModel::stationary_reparam_k(&unit);
        let seq = chol_sequence(&model, data, ordering, limit)?;
        Ok(VarianceProfile {
            log_d2: seq.cond_vars().iter().map(|v| v.ln()).collect(),
            qdiff: seq.whitened().iter().map(|u| u * u).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.qdiff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qdiff.is_empty()
    }

    /// Closed-form maximizer `sum w_k (q_k - q_{k-1}) / sum w_k`.
    pub fn sigma2_hat(&self, w: &WeightVector) -> Result<f64> {
        let m = w.effective_len().min(self.len());
        if m == 0 {
            return Err(Error::EmptyNeighborhood);
        }
        let ws = &w.weights()[..m];
        let sum: f64 = ws.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::DegenerateWeights(
                "variance estimate needs positive total weight",
            ));
        }
        let num: f64 = ws.iter().zip(&self.qdiff).map(|(wk, q)| wk * q).sum();
        Ok(num / sum)
    }

    /// The weighted local likelihood of the variance family at `sigma2`,
    /// assembled from the cached unit-model pieces:
    /// `sum_k w_k [ -1/2 log 2pi - 1/2 log(sigma2 d_k^2) - (q_k - q_{k-1})/(2 sigma2) ]`.
    pub fn objective_at(&self, w: &WeightVector, sigma2: f64) -> Result<f64> {
        let m = w.effective_len().min(self.len());
        if m == 0 {
            return Err(Error::EmptyNeighborhood);
        }
        if !(sigma2 > 0.0) {
            return Err(Error::OutOfDomain {
                what: "variance sigma2",
                value: sigma2,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let ws = &w.weights()[..m];
        Ok(ws
            .iter()
            .zip(self.log_d2.iter().zip(&self.qdiff))
            .map(|(wk, (ld, q))| {
                wk * (-0.5 * LN_2PI - 0.5 * (ld + sigma2.ln()) - q / (2.0 * sigma2))
            })
            .sum())
    }
}

/// Closed-form local variance estimate at `t` (the exact maximizer of the
/// weighted local likelihood over the variance-scale family), clamped into
/// the family bounds.
pub fn variance_estimate(
    t: &Location,
    data: &Dataset,
    w: &WeightVector,
    base: &MaternParams,
) -> Result<FitResult> {
    let fam = LocalModelFamily::variance_scale(*base);
    let ordering = order_neighbors(data, t)?;
    variance_estimate_ordered(data, &ordering, w, &fam)
}

fn variance_estimate_ordered(
    data: &Dataset,
    ordering: &NeighborOrdering,
    w: &WeightVector,
    fam: &LocalModelFamily,
) -> Result<FitResult> {
    let base = fam
        .variance_base()
        .ok_or(Error::Config("variance estimate needs the variance-scale family".into()))?;
    let m = w.effective_len().min(ordering.len());
    let profile = VarianceProfile::build(data, ordering, &base, m)?;
    let raw = profile.sigma2_hat(w)?;
    let theta_hat = raw.clamp(fam.lo, fam.hi);
    let objective = profile.objective_at(w, theta_hat)?;
    Ok(FitResult {
        theta_hat,
        objective,
        neighborhood_size: m,
        weights_used: w.clone(),
    })
}

/// Maximize the weighted local likelihood over the family's free parameter
/// by guarded scalar search (golden section with parabolic refinement,
/// absolute tolerance 1e-6, ties to the smaller parameter).
pub fn fit_point(
    t: &Location,
    data: &Dataset,
    w: &WeightVector,
    fam: &LocalModelFamily,
) -> Result<FitResult> {
    let ordering = order_neighbors(data, t)?;
    fit_point_ordered(data, &ordering, w, fam)
}

/// [`fit_point`] with the ordering precomputed.
pub fn fit_point_ordered(
    data: &Dataset,
    ordering: &NeighborOrdering,
    w: &WeightVector,
    fam: &LocalModelFamily,
) -> Result<FitResult> {
    let m = w.effective_len().min(ordering.len());
    if m == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let f = |theta: f64| {
        wll_objective_ordered(&[theta], data, ordering, w, fam).unwrap_or(PENALTY)
    };
    let (theta_hat, objective) = brent_max(f, fam.lo, fam.hi, 1e-6)?;
    if !(objective > PENALTY) {
        return Err(Error::NoConvergence(
            "weighted local likelihood not evaluable anywhere in bounds",
        ));
    }
    Ok(FitResult {
        theta_hat,
        objective,
        neighborhood_size: m,
        weights_used: w.clone(),
    })
}

/// How per-node weights are constructed when fitting a surface.
#[derive(Debug, Clone)]
pub enum WeightScheme {
    /// Kernel weights from the given spec.
    Kernel(KernelSpec),
    /// Mean-constrained minimum-variance weights.
    Constrained,
}

/// Weight construction policy for surface fits: the scheme, the bandwidth
/// (optionally boundary-corrected), and an optional cap on neighborhood
/// size.
#[derive(Debug, Clone)]
pub struct SurfacePolicy {
    pub scheme: WeightScheme,
    pub bandwidth: BandwidthPolicy,
    /// Maximum neighbors per node (`None` = all observations).
    pub max_neighbors: Option<usize>,
}

impl SurfacePolicy {
    /// Build the weight vector for one grid node.
    pub fn weights_at(
        &self,
        t: &Location,
        ordering: &NeighborOrdering,
    ) -> Result<WeightVector> {
        let lambda = self.bandwidth.at(t);
        let limit = self.max_neighbors.unwrap_or(usize::MAX);
        match &self.scheme {
            WeightScheme::Kernel(spec) => kernel_weights(*spec, ordering, lambda, limit),
            WeightScheme::Constrained => constrained_weights(ordering, lambda, limit),
        }
    }
}

/// Fit every grid node, in parallel; per-node failures are recorded, not
/// fatal. Closed-form variance fits are used for the variance family (they
/// maximize the same objective the scalar search would).
pub fn fit_surface(
    grid: &[Location],
    data: &Dataset,
    fam: &LocalModelFamily,
    policy: &SurfacePolicy,
) -> Vec<(Location, Result<FitResult>)> {
    grid.par_iter()
        .map(|t| {
            let fit = (|| {
                let ordering = order_neighbors(data, t)?;
                let w = policy.weights_at(t, &ordering)?;
                if fam.variance_base().is_some() {
                    variance_estimate_ordered(data, &ordering, &w, fam)
                } else {
                    fit_point_ordered(data, &ordering, &w, fam)
                }
            })();
            (t.clone(), fit)
        })
        .collect()
}

/// Maximize the full joint (stationary) log-likelihood over the family's
/// free parameter: the baseline the local estimates are compared against.
pub fn stationary_mle(data: &Dataset, fam: &LocalModelFamily) -> Result<f64> {
    let f = |theta: f64| -> f64 {
        (|| -> Result<f64> {
            let model = fam.model_at(theta)?;
            let sigma = crate::covariance::cov_matrix(&model, data.locations())?;
            let n = sigma.nrows();
            let chol = nalgebra::Cholesky::new(sigma)
                .ok_or_else(|| Error::NotPositiveDefinite("stationary MLE covariance".into()))?;
            let logdet: f64 =
                (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
            let z = nalgebra::DVector::from_column_slice(data.responses());
            let quad = z.dot(&chol.solve(&z));
            Ok(-0.5 * (n as f64 * LN_2PI + logdet + quad))
        })()
        .unwrap_or(PENALTY)
    };
    let (theta_bar, best) = brent_max(f, fam.lo, fam.hi, 1e-6)?;
    if !(best > PENALTY) {
        return Err(Error::NoConvergence(
            "stationary likelihood not evaluable anywhere in bounds",
        ));
    }
    Ok(theta_bar)
}
