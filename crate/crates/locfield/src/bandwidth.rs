//! Data-driven bandwidth selection.
//!
//! The bandwidth λ controls the bias/variance trade-off of the weighted
//! local likelihood: small λ tracks genuine parameter variation but also
//! chases noise, large λ collapses the fit toward the stationary one. The
//! selectors here score a whole grid of candidate bandwidths:
//!
//! - [`select_lambda1`] measures the spatial roughness of the fitted
//!   parameter surface — the integrated squared gradient over a fixed
//!   estimation grid — and standardizes it against the roughness
//!   distribution under the best *stationary* fit, estimated by Monte
//!   Carlo.
//! - [`select_lambda2`] does the same with a local likelihood-ratio
//!   statistic: the summed gap, over the estimation grid, between the
//!   locally maximized objective and the same objective at the stationary
//!   fit.
//! - [`select_lambda_oracle`] (simulations only) inverts the KL divergence
//!   from the fitted global model to the true one.
//!
//! Both data-driven criteria have the form
//! `(observed statistic − mean under stationary fit) / (sd under
//! stationary fit)`, so a large value flags bandwidths at which the fitted
//! surface is more variable than estimation noise alone can explain.
//!
//! Calibration replays the entire fitting pipeline on `R` synthetic copies
//! of the data drawn from the stationary fit at the observation locations.
//! The expensive objects — neighbor orderings, weights, and Cholesky
//! factors of the ordered model covariance — depend on the geometry and
//! the candidate parameter only, never on responses, so the engine factors
//! once per grid node (and per candidate parameter value) and whitens the
//! observed responses together with every replicate against the same
//! factor. For the variance-modulation family the local maximizer is in
//! closed form and the per-bandwidth work collapses to weighted prefix
//! sums; other families are maximized over an even grid of candidate
//! parameter values so that the likelihood-ratio statistic keeps its exact
//! sign by argmax dominance.

use crate::covariance::{cov_matrix, MaternParams, NonstatModel};
use crate::data::{order_locations, Dataset, Location, ParamField, WeightVector};
use crate::error::{Error, Result};
use crate::kernels::BandwidthPolicy;
use crate::linalg::kl_mean_zero;
use crate::numeric::{interp_bilinear, interp_linear, log_space};
use crate::simulate::CounterRng;
use crate::wll::{
    fit_surface, stationary_mle, LocalModelFamily, SurfacePolicy, VarianceProfile, WeightScheme,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Ceiling for the oracle criterion `1 / KL`: a fit that reproduces the
/// truth exactly has infinite inverse divergence, which is capped here so
/// profiles stay finite and comparable.
pub const KL_CAP: f64 = 1e12;

/// Number of points in [`default_lambda_grid`].
pub const DEFAULT_LAMBDA_POINTS: usize = 25;

/// Shape and spacing of a regular estimation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridShape {
    OneD { n: usize, h: f64 },
    TwoD { nx: usize, ny: usize, hx: f64, hy: f64 },
}

/// A regular grid of target locations on which parameter surfaces are
/// fitted and compared. Both selectors and the oracle share one grid so
/// their profiles are comparable. In two dimensions nodes are stored
/// row-major over `(xs, ys)`: node `i * ny + j` sits at `(xs[i], ys[j])`.
#[derive(Debug, Clone)]
pub struct EstimationGrid {
    nodes: Vec<Location>,
    shape: GridShape,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n as f64 - 1.0);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

impl EstimationGrid {
    /// The default grid over the data's bounding box: 64 nodes in one
    /// dimension, 8 x 8 in two.
    pub fn default_for(data: &Dataset) -> Result<Self> {
        match data.dim() {
            1 => Self::regular(data, &[64]),
            2 => Self::regular(data, &[8, 8]),
            d => Err(Error::Config(format!(
                "no default estimation grid for dimension {d}"
            ))),
        }
    }

    /// Evenly spaced grid over the data's bounding box with the given node
    /// count per axis (at least 2 each).
    pub fn regular(data: &Dataset, counts: &[usize]) -> Result<Self> {
        let bbox = data.bounding_box();
        if counts.len() != bbox.len() {
            return Err(Error::DimensionMismatch {
                expected: bbox.len(),
                found: counts.len(),
            });
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::Config(
                "estimation grid needs at least 2 nodes per axis".into(),
            ));
        }
        for &(lo, hi) in &bbox {
            if !(hi > lo) {
                return Err(Error::Config(format!(
                    "degenerate domain extent [{lo}, {hi}] for estimation grid"
                )));
            }
        }
        match *counts {
            [n] => {
                let (lo, hi) = bbox[0];
                let xs = linspace(lo, hi, n);
                let nodes = xs.iter().map(|&x| Location::new_1d(x)).collect();
                Ok(EstimationGrid {
                    nodes,
                    shape: GridShape::OneD {
                        n,
                        h: (hi - lo) / (n as f64 - 1.0),
                    },
                    xs,
                    ys: Vec::new(),
                })
            }
            [nx, ny] => {
                let (x0, x1) = bbox[0];
                let (y0, y1) = bbox[1];
                let xs = linspace(x0, x1, nx);
                let ys = linspace(y0, y1, ny);
                let mut nodes = Vec::with_capacity(nx * ny);
                for &x in &xs {
                    for &y in &ys {
                        nodes.push(Location::new_2d(x, y));
                    }
                }
                Ok(EstimationGrid {
                    nodes,
                    shape: GridShape::TwoD {
                        nx,
                        ny,
                        hx: (x1 - x0) / (nx as f64 - 1.0),
                        hy: (y1 - y0) / (ny as f64 - 1.0),
                    },
                    xs,
                    ys,
                })
            }
            _ => Err(Error::Config(
                "estimation grids support 1 or 2 dimensions".into(),
            )),
        }
    }

    pub fn nodes(&self) -> &[Location] {
        &self.nodes
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Piecewise-(bi)linear interpolant of per-node `values` as a parameter
    /// field, with constant extrapolation outside the grid's bounding box.
    /// Used to turn a fitted surface into a global nonstationary model.
    pub fn interp_field(&self, values: &[f64]) -> Result<ParamField> {
        if values.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "non-finite surface value cannot be interpolated".into(),
            ));
        }
        match self.shape {
            GridShape::OneD { .. } => {
                let xs = self.xs.clone();
                let vs = values.to_vec();
                Ok(ParamField::from_fn(move |t: &Location| {
                    interp_linear(&xs, &vs, t.x())
                }))
            }
            GridShape::TwoD { .. } => {
                let xs = self.xs.clone();
                let ys = self.ys.clone();
                let vs = values.to_vec();
                Ok(ParamField::from_fn(move |t: &Location| {
                    interp_bilinear(&xs, &ys, &vs, t.x(), t.y())
                }))
            }
        }
    }
}

/// Integrated squared gradient of a surface sampled on a regular grid:
/// a Riemann sum of squared finite differences (central in the interior,
/// one-sided at the edges) times the trapezoid cell measure. Exact for
/// affine surfaces.
pub fn spatial_variation(values: &[f64], shape: &GridShape) -> Result<f64> {
    let check = |len: usize, counts: &[usize], spacings: &[f64]| -> Result<()> {
        let expected: usize = counts.iter().product();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: len,
            });
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::Config(
                "spatial variation needs at least 2 grid nodes per axis".into(),
            ));
        }
        if spacings.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::Config("invalid grid spacing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "non-finite surface value in spatial variation".into(),
            ));
        }
        Ok(())
    };
    match *shape {
        GridShape::OneD { n, h } => {
            check(values.len(), &[n], &[h])?;
            let mut acc = 0.0;
            for i in 0..n {
                let g = if i == 0 {
                    (values[1] - values[0]) / h
                } else if i == n - 1 {
                    (values[n - 1] - values[n - 2]) / h
                } else {
                    (values[i + 1] - values[i - 1]) / (2.0 * h)
                };
                let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                acc += g * g * w;
            }
            Ok(acc)
        }
        GridShape::TwoD { nx, ny, hx, hy } => {
            check(values.len(), &[nx, ny], &[hx, hy])?;
            let v = |i: usize, j: usize| values[i * ny + j];
            let mut acc = 0.0;
            for i in 0..nx {
                let wx = if i == 0 || i == nx - 1 { 0.5 * hx } else { hx };
                for j in 0..ny {
                    let gx = if i == 0 {
                        (v(1, j) - v(0, j)) / hx
                    } else if i == nx - 1 {
                        (v(nx - 1, j) - v(nx - 2, j)) / hx
                    } else {
                        (v(i + 1, j) - v(i - 1, j)) / (2.0 * hx)
                    };
                    let gy = if j == 0 {
                        (v(i, 1) - v(i, 0)) / hy
                    } else if j == ny - 1 {
                        (v(i, ny - 1) - v(i, ny - 2)) / hy
                    } else {
                        (v(i, j + 1) - v(i, j - 1)) / (2.0 * hy)
                    };
                    let wy = if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
                    acc += (gx * gx + gy * gy) * wx * wy;
                }
            }
            Ok(acc)
        }
    }
}

/// Monte Carlo summary of a statistic under a fixed model.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub mean: f64,
    /// Sample standard deviation over the usable replicates.
    pub sd: f64,
    /// Replicates that produced a finite statistic.
    pub replicates: usize,
    /// Replicates dropped after a statistic failure or non-finite value.
    pub dropped: usize,
}

/// Mean and standard deviation of `statistic` over `replicates` synthetic
/// datasets drawn from `model` at the given locations.
///
/// Replicate `r` colors an i.i.d. standard-normal vector (drawn in
/// location order from `CounterRng::replicate(seed, r)`) with the Cholesky
/// factor of the model covariance, so results are reproducible and
/// replicates are independent of evaluation order. A replicate whose
/// statistic errors or is non-finite is dropped; more than 20% drops is an
/// error.
pub fn calibrate<F>(
    statistic: F,
    model: &NonstatModel,
    locations: &[Location],
    replicates: usize,
    seed: u64,
) -> Result<CalibrationResult>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    if replicates < 2 {
        return Err(Error::Config(
            "calibration needs at least 2 replicates".into(),
        ));
    }
    let n = locations.len();
    let sigma = cov_matrix(model, locations)?;
    let chol = nalgebra::Cholesky::new(sigma).ok_or_else(|| {
        Error::NotPositiveDefinite("calibration covariance matrix".into())
    })?;
    let l = chol.l();
    let samples: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = CounterRng::replicate(seed, r as u64);
            let eps =
                nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.next_normal()));
            let z: Vec<f64> = (&l * eps).iter().copied().collect();
            Dataset::new(locations.to_vec(), z)
                .ok()
                .and_then(|ds| statistic(&ds).ok())
        })
        .collect();
    aggregate(&samples)
}

/// Summary of replicate statistics with the drop policy applied.
fn aggregate(samples: &[Option<f64>]) -> Result<CalibrationResult> {
    let total = samples.len();
    let kept: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.filter(|v| v.is_finite()))
        .collect();
    let dropped = total - kept.len();
    if dropped * 5 > total {
        return Err(Error::Calibration(format!(
            "{dropped} of {total} replicates failed"
        )));
    }
    if kept.len() < 2 {
        return Err(Error::Calibration(
            "fewer than two usable replicates".into(),
        ));
    }
    let k = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / k;
    let var = kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(CalibrationResult {
        mean,
        sd: var.sqrt(),
        replicates: kept.len(),
        dropped,
    })
}

/// Off-scale score for an observed statistic that falls outside a
/// degenerate calibration distribution.
const DEGENERATE_SCORE: f64 = 1e12;

/// `(observed - mean) / sd`. A collapsed spread (every replicate produced
/// the same value, which genuinely happens when a grid-valued surface is
/// flat under the stationary fit) scores 0 when the observed statistic
/// agrees with the degenerate distribution and ±[`DEGENERATE_SCORE`] when
/// it does not — beyond the scale of any regular score, but finite.
fn studentize(observed: f64, calib: &CalibrationResult) -> f64 {
    let floor = 1e-12 * calib.mean.abs().max(1.0);
    if calib.sd > floor {
        (observed - calib.mean) / calib.sd
    } else if (observed - calib.mean).abs() <= floor {
        0.0
    } else if observed > calib.mean {
        DEGENERATE_SCORE
    } else {
        -DEGENERATE_SCORE
    }
}

/// A selection criterion evaluated over a bandwidth grid.
#[derive(Debug, Clone)]
pub struct ProfileCurve {
    lambdas: Vec<f64>,
    statistic: Vec<f64>,
    criterion: Vec<f64>,
    standardized: Vec<f64>,
    argmax: usize,
}

impl ProfileCurve {
    fn assemble(lambdas: Vec<f64>, statistic: Vec<f64>, criterion: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty()
            || statistic.len() != lambdas.len()
            || criterion.len() != lambdas.len()
        {
            return Err(Error::Config(
                "profile curve needs equal-length nonempty lambda/criterion vectors".into(),
            ));
        }
        for (l, c) in lambdas.iter().zip(&criterion) {
            if !c.is_finite() {
                return Err(Error::Numerical(format!(
                    "selection criterion not finite at bandwidth {l}"
                )));
            }
        }
        let argmax = criterion
            .iter()
            .enumerate()
            .fold(0, |best, (i, &c)| if c > criterion[best] { i } else { best });
        let m = criterion.len() as f64;
        let mean = criterion.iter().sum::<f64>() / m;
        let sd = (criterion.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / m).sqrt();
        let standardized = if sd > 0.0 {
            criterion.iter().map(|c| (c - mean) / sd).collect()
        } else {
            vec![0.0; criterion.len()]
        };
        Ok(ProfileCurve {
            lambdas,
            statistic,
            criterion,
            standardized,
            argmax,
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Uncalibrated statistic on the observed data at each bandwidth (the
    /// roughness or likelihood-ratio value for the data-driven selectors,
    /// the raw KL divergence for the oracle).
    pub fn statistic(&self) -> &[f64] {
        &self.statistic
    }

    /// The quantity the selector maximizes.
    pub fn criterion(&self) -> &[f64] {
        &self.criterion
    }

    /// Criterion rescaled to mean 0, standard deviation 1 over the grid
    /// (population convention), for plotting profiles on one axis.
    pub fn standardized(&self) -> &[f64] {
        &self.standardized
    }

    pub fn argmax(&self) -> usize {
        self.argmax
    }

    /// The selected bandwidth.
    pub fn selected(&self) -> f64 {
        self.lambdas[self.argmax]
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

/// How the selectors construct weights and calibrate.
#[derive(Debug, Clone)]
pub struct SelectorConfig {
    pub scheme: WeightScheme,
    /// Scale the bandwidth up near the boundary of the data's bounding box.
    pub boundary_corrected: bool,
    /// Cap on neighborhood size per grid node (`None` = all observations).
    pub max_neighbors: Option<usize>,
    /// Calibration replicates `R`.
    pub replicates: usize,
    /// Candidate count for the free parameter when the family has no
    /// closed-form local maximizer; candidates are evenly spaced across the
    /// family bounds. Ignored by the variance-modulation family.
    pub theta_grid: usize,
    /// Seed of the calibration replicate streams.
    pub seed: u64,
}

impl SelectorConfig {
    pub fn new(scheme: WeightScheme, seed: u64) -> Self {
        SelectorConfig {
            scheme,
            boundary_corrected: false,
            max_neighbors: None,
            replicates: 50,
            theta_grid: 32,
            seed,
        }
    }

    /// Surface-fit policy at one candidate bandwidth.
    pub fn policy_for(&self, data: &Dataset, lambda: f64) -> SurfacePolicy {
        let bandwidth = if self.boundary_corrected {
            BandwidthPolicy::boundary_corrected(lambda, data.bounding_box())
        } else {
            BandwidthPolicy::fixed(lambda)
        };
        SurfacePolicy {
            scheme: self.scheme.clone(),
            bandwidth,
            max_neighbors: self.max_neighbors,
        }
    }
}

/// Roughness-based selector; see the module docs. Prefer [`select_lambdas`]
/// when both profiles are wanted — the two share all expensive work.
pub fn select_lambda1(
    data: &Dataset,
    fam: &LocalModelFamily,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambdas: &[f64],
) -> Result<ProfileCurve> {
    Ok(select_lambdas(data, fam, config, grid, lambdas)?.0)
}

/// Likelihood-ratio selector; see the module docs. Prefer
/// [`select_lambdas`] when both profiles are wanted.
pub fn select_lambda2(
    data: &Dataset,
    fam: &LocalModelFamily,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambdas: &[f64],
) -> Result<ProfileCurve> {
    Ok(select_lambdas(data, fam, config, grid, lambdas)?.1)
}

/// Both data-driven profiles (roughness, likelihood ratio) from one pass of
/// the calibration engine.
pub fn select_lambdas(
    data: &Dataset,
    fam: &LocalModelFamily,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambdas: &[f64],
) -> Result<(ProfileCurve, ProfileCurve)> {
    let stats = selector_statistics(data, fam, config, grid, lambdas)?;
    let p1 = profile_from_stats(lambdas, &stats.roughness)?;
    let p2 = profile_from_stats(lambdas, &stats.likelihood_ratio)?;
    Ok((p1, p2))
}

/// Per-dataset raw statistics; row 0 is the observed data, rows 1..=R the
/// calibration replicates.
struct RawStats {
    roughness: Vec<Vec<f64>>,
    likelihood_ratio: Vec<Vec<f64>>,
}

/// Per-node geometry shared by every dataset and bandwidth: the neighbor
/// ordering, one weight vector per bandwidth, and the largest neighborhood
/// any bandwidth uses (the Cholesky factor is built once to that size; all
/// smaller neighborhoods are prefixes of it).
struct NodeGeometry {
    ordering: crate::data::NeighborOrdering,
    weights: Vec<WeightVector>,
    m: usize,
}

fn validate_selector_inputs(config: &SelectorConfig, lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty bandwidth grid".into()));
    }
    if let Some(&l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::Config(format!("invalid bandwidth {l} in grid")));
    }
    if config.replicates < 2 {
        return Err(Error::Config(
            "calibration needs at least 2 replicates".into(),
        ));
    }
    Ok(())
}

fn node_geometry(
    data: &Dataset,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambdas: &[f64],
) -> Result<Vec<NodeGeometry>> {
    grid.nodes()
        .par_iter()
        .map(|t| {
            let ordering = order_locations(data.locations(), t)?;
            let mut weights = Vec::with_capacity(lambdas.len());
            for &l in lambdas {
                let w = config
                    .policy_for(data, l)
                    .weights_at(t, &ordering)
                    .map_err(|e| {
                        Error::Numerical(format!(
                            "no admissible weights at node {:?} for bandwidth {l}: {e}",
                            t.coords()
                        ))
                    })?;
                weights.push(w);
            }
            let m = weights
                .iter()
                .map(|w| w.effective_len())
                .max()
                .unwrap_or(0)
                .min(ordering.len());
            Ok(NodeGeometry {
                ordering,
                weights,
                m,
            })
        })
        .collect()
}

fn selector_statistics(
    data: &Dataset,
    fam: &LocalModelFamily,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambdas: &[f64],
) -> Result<RawStats> {
    validate_selector_inputs(config, lambdas)?;
    let n = data.len();
    let locs = data.locations();

    // Stationary fit of the observed data: the simulation template.
    let theta_bar = stationary_mle(data, fam)?;
    let template = fam.model_at(theta_bar)?;
    let sigma_tmpl = cov_matrix(&template, locs)?;
    let chol_tmpl = nalgebra::Cholesky::new(sigma_tmpl).ok_or_else(|| {
        Error::NotPositiveDefinite("stationary-fit covariance for calibration".into())
    })?;
    let l_tmpl = chol_tmpl.l();

    // responses[0] = observed data; responses[1 + r] = replicate r, drawn
    // with the same stream convention as `calibrate`.
    let mut responses: Vec<Vec<f64>> = Vec::with_capacity(config.replicates + 1);
    responses.push(data.responses().to_vec());
    for r in 0..config.replicates {
        let mut rng = CounterRng::replicate(config.seed, r as u64);
        let eps = nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.next_normal()));
        responses.push((&l_tmpl * eps).iter().copied().collect());
    }

    let geo = node_geometry(data, config, grid, lambdas)?;
    match fam.variance_base() {
        Some(base) => variance_statistics(data, fam, &base, &geo, &responses, lambdas, grid),
        None => smoothness_statistics(data, fam, config, &geo, &responses, lambdas, grid),
    }
}

/// Closed-form path for the variance-modulation family: one factor of the
/// ordered unit-model covariance per node serves every bandwidth and every
/// dataset, and the local maximizer is `clamp(q / s0)` with
/// `q = sum w_k u_k^2`, `s0 = sum w_k` over whitened responses `u`.
fn variance_statistics(
    data: &Dataset,
    fam: &LocalModelFamily,
    base: &MaternParams,
    geo: &[NodeGeometry],
    responses: &[Vec<f64>],
    lambdas: &[f64],
    grid: &EstimationGrid,
) -> Result<RawStats> {
    let n = data.len();
    let nd = responses.len();
    let l_cnt = lambdas.len();
    let (lo, hi) = fam.bounds();
    let locs = data.locations();

    let unit = NonstatModel::stationary_reparam_k(base);
    let sigma_unit = cov_matrix(&unit, locs)?;

    // Stationary variance fit per dataset: q_full / n, clamped into the
    // family bounds (the exact scale MLE given the unit correlation).
    let chol_full = nalgebra::Cholesky::new(sigma_unit.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite("unit-model covariance over the observations".into())
    })?;
    let bmat = DMatrix::from_fn(n, nd, |i, d| responses[d][i]);
    let u_full = chol_full
        .l()
        .solve_lower_triangular(&bmat)
        .ok_or_else(|| Error::Numerical("unit-model whitening failed".into()))?;
    let theta_bar: Vec<f64> = (0..nd)
        .map(|d| (u_full.column(d).norm_squared() / n as f64).clamp(lo, hi))
        .collect();

    struct NodeOut {
        /// Local variance estimates, indexed `lambda * nd + dataset`.
        sig2: Vec<f64>,
        /// Likelihood-ratio contributions, same indexing.
        lr: Vec<f64>,
    }

    let per_node: Vec<NodeOut> = geo
        .par_iter()
        .map(|g| -> Result<NodeOut> {
            let m = g.m;
            let sub = DMatrix::from_fn(m, m, |i, j| {
                sigma_unit[(g.ordering.perm[i], g.ordering.perm[j])]
            });
            let chol = nalgebra::Cholesky::new(sub).ok_or_else(|| {
                Error::NotPositiveDefinite(format!(
                    "ordered unit covariance at node {:?}",
                    g.ordering.target.coords()
                ))
            })?;
            let l = chol.l();
            let rhs = DMatrix::from_fn(m, nd, |k, d| responses[d][g.ordering.perm[k]]);
            let u = l
                .solve_lower_triangular(&rhs)
                .ok_or_else(|| Error::Numerical("node whitening failed".into()))?;

            let mut sig2 = vec![0.0; l_cnt * nd];
            let mut lr = vec![0.0; l_cnt * nd];
            for (li, w) in g.weights.iter().enumerate() {
                let e = w.effective_len().min(m);
                let ws = &w.weights()[..e];
                let s0: f64 = ws.iter().sum();
                if !(s0 > 0.0) {
                    return Err(Error::DegenerateWeights(
                        "variance fit needs positive total weight",
                    ));
                }
                for d in 0..nd {
                    let mut q = 0.0;
                    for (k, wk) in ws.iter().enumerate() {
                        let uk = u[(k, d)];
                        q += wk * uk * uk;
                    }
                    let s2 = (q / s0).clamp(lo, hi);
                    let bar = theta_bar[d];
                    // Objective gap in cancellation-free form (the constant
                    // and log-det terms drop out of the difference); clamped
                    // at zero against rounding, since s2 maximizes it.
                    let gap = if s2 == bar {
                        0.0
                    } else {
                        (-0.5 * (s0 * (s2.ln() - bar.ln()) + q * (1.0 / s2 - 1.0 / bar)))
                            .max(0.0)
                    };
                    sig2[li * nd + d] = s2;
                    lr[li * nd + d] = gap;
                }
            }
            Ok(NodeOut { sig2, lr })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut roughness = vec![vec![0.0; l_cnt]; nd];
    let mut likelihood_ratio = vec![vec![0.0; l_cnt]; nd];
    let mut surface = vec![0.0; geo.len()];
    for li in 0..l_cnt {
        for d in 0..nd {
            let mut acc = 0.0;
            for (node, out) in per_node.iter().enumerate() {
                surface[node] = out.sig2[li * nd + d];
                acc += out.lr[li * nd + d];
            }
            roughness[d][li] = spatial_variation(&surface, grid.shape())?;
            likelihood_ratio[d][li] = acc;
        }
    }
    Ok(RawStats {
        roughness,
        likelihood_ratio,
    })
}

/// Grid-search path for families without a closed-form local maximizer.
/// The free parameter is maximized over an even grid of candidates; the
/// stationary reference is snapped to the same grid, so the
/// likelihood-ratio statistic is nonnegative by construction (the local
/// maximum is taken over a set containing the reference).
fn smoothness_statistics(
    data: &Dataset,
    fam: &LocalModelFamily,
    config: &SelectorConfig,
    geo: &[NodeGeometry],
    responses: &[Vec<f64>],
    lambdas: &[f64],
    grid: &EstimationGrid,
) -> Result<RawStats> {
    let n = data.len();
    let nd = responses.len();
    let l_cnt = lambdas.len();
    let j_cnt = config.theta_grid;
    if j_cnt < 2 {
        return Err(Error::Config(
            "parameter grid needs at least 2 candidates".into(),
        ));
    }
    let (lo, hi) = fam.bounds();
    let thetas = linspace(lo, hi, j_cnt);
    let locs = data.locations();
    let n_nodes = geo.len();

    let bfull = DMatrix::from_fn(n, nd, |i, d| responses[d][i]);
    let ordered_resp: Vec<DMatrix<f64>> = geo
        .iter()
        .map(|g| DMatrix::from_fn(g.m, nd, |k, d| responses[d][g.ordering.perm[k]]))
        .collect();

    // Full-data stationary log-likelihood per (candidate, dataset), and the
    // per-node objective table indexed ((node * L + lambda) * nd + d) * J + j.
    // Candidates whose covariance fails to factor stay at -inf and are
    // never selected.
    let mut full_ll = vec![f64::NEG_INFINITY; j_cnt * nd];
    let mut table = vec![f64::NEG_INFINITY; n_nodes * l_cnt * nd * j_cnt];
    let idx = |node: usize, li: usize, d: usize, j: usize| {
        ((node * l_cnt + li) * nd + d) * j_cnt + j
    };

    for (j, &theta) in thetas.iter().enumerate() {
        let model = fam.model_at(theta)?;
        let sigma = cov_matrix(&model, locs)?;

        if let Some(chol) = nalgebra::Cholesky::new(sigma.clone()) {
            let l = chol.l();
            let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
            if let Some(u) = l.solve_lower_triangular(&bfull) {
                for d in 0..nd {
                    let q = u.column(d).norm_squared();
                    full_ll[j * nd + d] = -0.5 * (n as f64 * LN_2PI + logdet + q);
                }
            }
        }

        let cols: Vec<Option<Vec<f64>>> = geo
            .par_iter()
            .zip(&ordered_resp)
            .map(|(g, rhs)| {
                let m = g.m;
                let sub = DMatrix::from_fn(m, m, |a, b| {
                    sigma[(g.ordering.perm[a], g.ordering.perm[b])]
                });
                let chol = nalgebra::Cholesky::new(sub)?;
                let l = chol.l();
                let log_d2: Vec<f64> = (0..m).map(|k| 2.0 * l[(k, k)].ln()).collect();
                let u = l.solve_lower_triangular(rhs)?;
                let mut out = vec![0.0; l_cnt * nd];
                for (li, w) in g.weights.iter().enumerate() {
                    let e = w.effective_len().min(m);
                    let ws = &w.weights()[..e];
                    let s0: f64 = ws.iter().sum();
                    let s1: f64 = ws.iter().zip(&log_d2).map(|(wk, ld)| wk * ld).sum();
                    for d in 0..nd {
                        let mut q = 0.0;
                        for (k, wk) in ws.iter().enumerate() {
                            let uk = u[(k, d)];
                            q += wk * uk * uk;
                        }
                        out[li * nd + d] = -0.5 * (LN_2PI * s0 + s1 + q);
                    }
                }
                Some(out)
            })
            .collect();
        for (node, col) in cols.iter().enumerate() {
            if let Some(vals) = col {
                for li in 0..l_cnt {
                    for d in 0..nd {
                        table[idx(node, li, d, j)] = vals[li * nd + d];
                    }
                }
            }
        }
    }

    // Stationary reference candidate per dataset.
    let jbar: Vec<usize> = (0..nd)
        .map(|d| {
            let mut best = 0;
            for j in 1..j_cnt {
                if full_ll[j * nd + d] > full_ll[best * nd + d] {
                    best = j;
                }
            }
            if full_ll[best * nd + d].is_finite() {
                Ok(best)
            } else {
                Err(Error::Numerical(
                    "stationary likelihood not evaluable anywhere on the parameter grid"
                        .into(),
                ))
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut roughness = vec![vec![0.0; l_cnt]; nd];
    let mut likelihood_ratio = vec![vec![0.0; l_cnt]; nd];
    let mut surface = vec![0.0; n_nodes];
    for li in 0..l_cnt {
        for d in 0..nd {
            let mut acc = 0.0;
            for node in 0..n_nodes {
                let row = &table[idx(node, li, d, 0)..=idx(node, li, d, j_cnt - 1)];
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                let reference = row[jbar[d]];
                if !row[best].is_finite() || !reference.is_finite() {
                    return Err(Error::Numerical(format!(
                        "local objective not evaluable at node {:?} for bandwidth {}",
                        geo[node].ordering.target.coords(),
                        lambdas[li]
                    )));
                }
                surface[node] = thetas[best];
                acc += row[best] - reference;
            }
            roughness[d][li] = spatial_variation(&surface, grid.shape())?;
            likelihood_ratio[d][li] = acc;
        }
    }
    Ok(RawStats {
        roughness,
        likelihood_ratio,
    })
}

/// Studentize the observed row of a statistic table against the replicate
/// rows, bandwidth by bandwidth.
fn profile_from_stats(lambdas: &[f64], stats: &[Vec<f64>]) -> Result<ProfileCurve> {
    let real = &stats[0];
    let mut criterion = Vec::with_capacity(lambdas.len());
    for (li, &l) in lambdas.iter().enumerate() {
        let samples: Vec<Option<f64>> = stats[1..].iter().map(|row| Some(row[li])).collect();
        let calib = aggregate(&samples).map_err(|e| match e {
            Error::Calibration(m) => Error::Calibration(format!("at bandwidth {l}: {m}")),
            other => other,
        })?;
        log::debug!(
            "bandwidth {l:.6}: observed {:.6e}, calibration mean {:.6e} sd {:.6e}",
            real[li],
            calib.mean,
            calib.sd
        );
        criterion.push(studentize(real[li], &calib));
    }
    ProfileCurve::assemble(lambdas.to_vec(), real.clone(), criterion)
}

/// Fit the parameter surface on the estimation grid and fail loudly if any
/// node fails (selectors need a value at every node; for lenient per-node
/// error reporting use [`fit_surface`] directly).
pub fn fit_grid_surface(
    data: &Dataset,
    fam: &LocalModelFamily,
    policy: &SurfacePolicy,
    grid: &EstimationGrid,
) -> Result<Vec<f64>> {
    fit_surface(grid.nodes(), data, fam, policy)
        .into_iter()
        .map(|(t, r)| {
            r.map(|f| f.theta_hat).map_err(|e| {
                Error::Numerical(format!(
                    "surface fit failed at node {:?}: {e}",
                    t.coords()
                ))
            })
        })
        .collect()
}

/// Local variance surfaces at every bandwidth, reusing one conditional
/// profile per node (every bandwidth's neighborhood is a prefix of the
/// largest one, and the closed-form estimate only needs weighted prefix
/// sums). Returns `[lambda][node]`, identical to per-bandwidth
/// [`fit_grid_surface`] calls.
fn variance_oracle_surfaces(
    data: &Dataset,
    fam: &LocalModelFamily,
    base: &MaternParams,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambdas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = fam.bounds();
    let per_node: Vec<Vec<f64>> = grid
        .nodes()
        .par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let ordering = order_locations(data.locations(), t)?;
            let mut weights = Vec::with_capacity(lambdas.len());
            for &l in lambdas {
                weights.push(config.policy_for(data, l).weights_at(t, &ordering)?);
            }
            let m = weights
                .iter()
                .map(|w| w.effective_len())
                .max()
                .unwrap_or(0)
                .min(ordering.len());
            let profile = VarianceProfile::build(data, &ordering, base, m)?;
            weights
                .iter()
                .map(|w| profile.sigma2_hat(w).map(|r| r.clamp(lo, hi)))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut surfaces = vec![vec![0.0; per_node.len()]; lambdas.len()];
    for (node, vals) in per_node.iter().enumerate() {
        for (li, &v) in vals.iter().enumerate() {
            surfaces[li][node] = v;
        }
    }
    Ok(surfaces)
}

/// KL divergence from the fitted global model at one bandwidth to the true
/// model, both evaluated at the observation locations. The fitted model
/// interpolates the estimated surface over the estimation grid.
pub fn oracle_kl(
    data: &Dataset,
    truth: &NonstatModel,
    fam: &LocalModelFamily,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambda: f64,
) -> Result<f64> {
    let values = fit_grid_surface(data, fam, &config.policy_for(data, lambda), grid)?;
    let field = grid.interp_field(&values)?;
    let sigma_hat = cov_matrix(&fam.field_model(field), data.locations())?;
    let sigma_truth = cov_matrix(truth, data.locations())?;
    kl_mean_zero(&sigma_hat, &sigma_truth)
}

/// Oracle selector: maximize `1 / KL(fitted global model, truth)` over the
/// bandwidth grid (capped at [`KL_CAP`]; a fit recovering the truth exactly
/// hits the cap and is selected). Only available when the true model is
/// known, i.e. in simulation studies.
pub fn select_lambda_oracle(
    data: &Dataset,
    truth: &NonstatModel,
    fam: &LocalModelFamily,
    config: &SelectorConfig,
    grid: &EstimationGrid,
    lambdas: &[f64],
) -> Result<ProfileCurve> {
    if lambdas.is_empty() {
        return Err(Error::Config("empty bandwidth grid".into()));
    }
    let surfaces: Vec<Vec<f64>> = match fam.variance_base() {
        Some(base) => variance_oracle_surfaces(data, fam, &base, config, grid, lambdas)?,
        None => lambdas
            .par_iter()
            .map(|&l| fit_grid_surface(data, fam, &config.policy_for(data, l), grid))
            .collect::<Result<Vec<_>>>()?,
    };
    let sigma_truth = cov_matrix(truth, data.locations())?;
    let kls: Vec<f64> = surfaces
        .par_iter()
        .map(|values| -> Result<f64> {
            let field = grid.interp_field(values)?;
            let sigma_hat = cov_matrix(&fam.field_model(field), data.locations())?;
            kl_mean_zero(&sigma_hat, &sigma_truth)
        })
        .collect::<Result<Vec<_>>>()?;
    let criterion: Vec<f64> = kls.iter().map(|&kl| (1.0 / kl).min(KL_CAP)).collect();
    ProfileCurve::assemble(lambdas.to_vec(), kls, criterion)
}

/// Log-spaced bandwidth grid from twice the median nearest-neighbor
/// spacing up to half the domain diameter.
pub fn default_lambda_grid(data: &Dataset, points: usize) -> Result<Vec<f64>> {
    let locs = data.locations();
    let n = locs.len();
    if n < 2 {
        return Err(Error::Config(
            "bandwidth grid needs at least 2 observations".into(),
        ));
    }
    let mut nn = vec![f64::INFINITY; n];
    let mut diameter = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = locs[i].dist(&locs[j]);
            if d < nn[i] {
                nn[i] = d;
            }
            if d < nn[j] {
                nn[j] = d;
            }
            if d > diameter {
                diameter = d;
            }
        }
    }
    nn.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let median = if n % 2 == 1 {
        nn[n / 2]
    } else {
        0.5 * (nn[n / 2 - 1] + nn[n / 2])
    };
    let lo = 2.0 * median;
    let hi = 0.5 * diameter;
    if !(hi > lo) {
        return Err(Error::Config(format!(
            "degenerate bandwidth range [{lo}, {hi}]: spacing too close to the diameter"
        )));
    }
    log_space(lo, hi, points)
}
