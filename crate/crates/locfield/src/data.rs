//! Observation containers, neighbor orderings and weight vectors.
//!
//! Everything downstream (likelihood sweeps, risk tables, bandwidth
//! selection) consumes data through three small types: [`Dataset`] holds the
//! observations, [`NeighborOrdering`] fixes the distance ordering of the
//! observations around a target location, and [`WeightVector`] carries a
//! weight sequence along that ordering together with its telescoped form.
//!
//! The telescoped weights are the bridge between the two equivalent ways of
//! writing the weighted likelihood: a weighted sum of conditional increments
//! with weights `w`, or a weighted sum of full quadratic forms with weights
//! `w~` where `w~_k = (w_k - w_{k+1}) / sum(w)` for `k < n` and
//! `w~_n = w_n / sum(w)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A point in the observation domain, `d in {1, 2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    coords: Vec<f64>,
}

impl Location {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() > 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("non-finite coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn new_1d(x: f64) -> Self {
        Self { coords: vec![x] }
    }

    pub fn new_2d(x: f64, y: f64) -> Self {
        Self { coords: vec![x, y] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn x(&self) -> f64 {
        self.coords[0]
    }

    /// Second coordinate; panics on 1-D locations.
    pub fn y(&self) -> f64 {
        self.coords[1]
    }

    /// Euclidean distance.
    pub fn dist(&self, other: &Location) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Componentwise offset `self - other`.
    pub fn offset(&self, other: &Location) -> Vec<f64> {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Observations of a scalar field: locations plus responses.
#[derive(Debug, Clone)]
pub struct Dataset {
    locations: Vec<Location>,
    responses: Vec<f64>,
    dim: usize,
}

impl Dataset {
    /// Build a dataset, validating shape, finiteness and distinctness.
    ///
    /// Duplicate locations are rejected here because they make every
    /// covariance matrix over the set exactly singular; failing early gives
    /// a much better error than a Cholesky breakdown deep inside a fit.
    pub fn new(locations: Vec<Location>, responses: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if locations.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: locations.len(),
                found: responses.len(),
            });
        }
        let dim = locations[0].dim();
        for loc in &locations {
            if loc.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: loc.dim(),
                });
            }
        }
        if responses.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("non-finite response".into()));
        }
        // Sort indices lexicographically by coordinates; duplicates become
        // adjacent, so one linear scan finds them.
        let mut order: Vec<usize> = (0..locations.len()).collect();
        order.sort_by(|&a, &b| {
            locations[a]
                .coords()
                .partial_cmp(locations[b].coords())
                .expect("finite coords compare")
        });
        for pair in order.windows(2) {
            if locations[pair[0]].coords() == locations[pair[1]].coords() {
                let (i, j) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                return Err(Error::DuplicateLocations(i, j));
            }
        }
        Ok(Self {
            locations,
            responses,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Axis-aligned bounding box: `(min, max)` per coordinate.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bb = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for loc in &self.locations {
            for (axis, &c) in loc.coords().iter().enumerate() {
                bb[axis].0 = bb[axis].0.min(c);
                bb[axis].1 = bb[axis].1.max(c);
            }
        }
        bb
    }

    /// Read a dataset from CSV with header `x,z` (1-D) or `x,y,z` (2-D).
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::EmptyDataset)?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let dim = match cols.as_slice() {
            ["x", "z"] => 1,
            ["x", "y", "z"] => 2,
            _ => {
                return Err(Error::Csv {
                    line: 1,
                    msg: format!("expected header 'x,z' or 'x,y,z', got '{header}'"),
                })
            }
        };
        let mut locations = Vec::new();
        let mut responses = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Csv {
                    line: idx + 1,
                    msg: format!("expected {} fields, got {}", dim + 1, fields.len()),
                });
            }
            let mut nums = Vec::with_capacity(dim + 1);
            for f in &fields {
                nums.push(f.parse::<f64>().map_err(|e| Error::Csv {
                    line: idx + 1,
                    msg: format!("bad number '{f}': {e}"),
                })?);
            }
            let z = nums.pop().expect("at least one field");
            locations.push(Location::new(nums)?);
            responses.push(z);
        }
        Self::new(locations, responses)
    }

    /// Write the dataset in the same CSV layout `read_csv` accepts.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.dim == 1 { "x,z\n" } else { "x,y,z\n" });
        for (loc, z) in self.locations.iter().zip(&self.responses) {
            for c in loc.coords() {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{z}\n"));
        }
        out
    }
}

/// The observations ranked by distance from a target location.
///
/// `perm[k]` is the dataset index of the `(k+1)`-th nearest observation,
/// `dists[k]` its distance, and `offsets[k]` the componentwise offset
/// `target - t_{perm[k]}`; `dists` is nondecreasing. Ties are broken by
/// dataset index so the ordering is fully deterministic.
#[derive(Debug, Clone)]
pub struct NeighborOrdering {
    pub target: Location,
    pub perm: Vec<usize>,
    pub dists: Vec<f64>,
    pub offsets: Vec<Vec<f64>>,
}

impl NeighborOrdering {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

/// Rank all observations by distance from `target`.
pub fn order_neighbors(data: &Dataset, target: &Location) -> Result<NeighborOrdering> {
    order_locations(data.locations(), target)
}

/// Rank a bare location list by distance from `target` (no responses needed).
pub fn order_locations(locations: &[Location], target: &Location) -> Result<NeighborOrdering> {
    if locations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for l in locations {
        if l.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                found: l.dim(),
            });
        }
    }
    let dists: Vec<f64> = locations.iter().map(|l| l.dist(target)).collect();
    let mut perm: Vec<usize> = (0..locations.len()).collect();
    perm.sort_by(|&a, &b| {
        dists[a]
            .partial_cmp(&dists[b])
            .expect("finite distances")
            .then(a.cmp(&b))
    });
    let sorted = perm.iter().map(|&i| dists[i]).collect();
    let offsets = perm
        .iter()
        .map(|&i| target.offset(&locations[i]))
        .collect();
    Ok(NeighborOrdering {
        target: target.clone(),
        perm,
        dists: sorted,
        offsets,
    })
}

/// Telescope a weight sequence:
/// `w~_k = (w_k - w_{k+1}) / S` for `k < n`, `w~_n = w_n / S`, `S = sum(w)`.
///
/// This is exactly the transformation under which
/// `sum_k w_k (q_k - q_{k-1}) = S * sum_k w~_k q_k`
/// for any sequence `q` with `q_0 = 0`, so a weighted sum of likelihood
/// increments can be evaluated as a weighted sum of full quadratic forms.
pub fn telescope_weights(w: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::DegenerateWeights("empty weight vector"));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateWeights("non-finite weight"));
    }
    let sum: f64 = w.iter().sum();
    if sum == 0.0 {
        return Err(Error::DegenerateWeights("weights sum to zero"));
    }
    let n = w.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n - 1 {
        out.push((w[k] - w[k + 1]) / sum);
    }
    out.push(w[n - 1] / sum);
    Ok(out)
}

/// A weight sequence along a neighbor ordering plus its telescoped form.
#[derive(Debug, Clone)]
pub struct WeightVector {
    w: Vec<f64>,
    telescoped: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let telescoped = telescope_weights(&w)?;
        Ok(Self { w, telescoped })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn telescoped(&self) -> &[f64] {
        &self.telescoped
    }

    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Index one past the last nonzero weight: the effective neighborhood
    /// size. Zero-weight observations beyond it contribute nothing to any
    /// weighted sum and are skipped by the likelihood sweeps.
    pub fn effective_len(&self) -> usize {
        self.w
            .iter()
            .rposition(|&x| x != 0.0)
            .map_or(0, |p| p + 1)
    }
}

/// A scalar parameter field over the observation domain, used both for
/// simulation truths (e.g. a standard deviation profile) and for model
/// parameter functions.
#[derive(Clone)]
pub enum ParamField {
    Const(f64),
    Fn(Arc<dyn Fn(&Location) -> f64 + Send + Sync>),
}

impl ParamField {
    pub fn constant(v: f64) -> Self {
        ParamField::Const(v)
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&Location) -> f64 + Send + Sync + 'static,
    {
        ParamField::Fn(Arc::new(f))
    }

    pub fn eval(&self, at: &Location) -> f64 {
        match self {
            ParamField::Const(v) => *v,
            ParamField::Fn(f) => f(at),
        }
    }
}

impl fmt::Debug for ParamField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamField::Const(v) => write!(f, "ParamField::Const({v})"),
            ParamField::Fn(_) => write!(f, "ParamField::Fn(..)"),
        }
    }
}

/// A matrix-valued parameter field (local anisotropy), `d x d` per location.
#[derive(Clone)]
#[allow(clippy::type_complexity)]
pub enum MatrixField {
    Const(Vec<f64>),
    Fn(Arc<dyn Fn(&Location) -> Vec<f64> + Send + Sync>),
}

impl MatrixField {
    /// Constant isotropic field `a * I`.
    pub fn isotropic(a: f64, dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = a;
        }
        MatrixField::Const(m)
    }

    /// Row-major `d x d` matrix at `at`.
    pub fn eval(&self, at: &Location) -> Vec<f64> {
        match self {
            MatrixField::Const(m) => m.clone(),
            MatrixField::Fn(f) => f(at),
        }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&Location) -> Vec<f64> + Send + Sync + 'static,
    {
        MatrixField::Fn(Arc::new(f))
    }
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Const(m) => write!(f, "MatrixField::Const({m:?})"),
            MatrixField::Fn(_) => write!(f, "MatrixField::Fn(..)"),
        }
    }
}
