//! The pipelines behind the `locfield` command-line interface.
//!
//! Each command takes one parsed [`ExperimentConfig`], runs one pipeline,
//! and writes its results into an output directory. Every CSV gets a
//! header row and a `.prov` sidecar recording the command, the library
//! version, the effective seed, the SHA-256 of the CSV bytes, the SHA-256
//! of the configuration text, and the configuration echoed verbatim.
//! Outputs are deterministic: the same configuration and seed produce
//! byte-identical files.
//!
//! Randomness is split into two streams so they can never collide: the
//! sampling design is drawn with an offset seed, the responses (and the
//! selectors' calibration replicates, which use `seed + r`) with the seed
//! itself.

use crate::bandwidth::{EstimationGrid, GridShape, ProfileCurve};
use crate::bayesrisk::{improvement_grid, risk_curve, TraceBasis};
use crate::config::{ExperimentConfig, Family, LambdaGrid, RiskMode, WeightsKind};
use crate::covariance::{
    cov_matrix, gamma_integral_residual, verify_appendix_identities, MaternParams, NonstatModel,
};
use crate::data::{order_neighbors, Dataset, Location, ParamField, WeightVector};
use crate::error::{Error, Result};
use crate::kernels::kernel_value;
use crate::linalg::{inverse_downdate, kl_mean_zero, loglik_increments};
use crate::numeric::{adaptive_simpson, brent_max};
use crate::simulate::{gen_locations, sample_field};
use crate::svg::{heat_map, line_chart, Series};
use crate::wll::{
    fit_surface, stationary_mle, wll_objective, LocalModelFamily, VarianceProfile,
};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Offset separating the design stream from the response stream; replicate
/// streams `seed..seed+R` used by the selectors stay clear of the design.
const LOCATION_STREAM: u64 = 0x517c_c1b7_2722_0a95;

fn loc_seed(seed: u64) -> u64 {
    seed.wrapping_add(LOCATION_STREAM)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Write `name` under `out` together with its provenance sidecar.
fn emit(out: &Path, name: &str, body: &str, command: &str, cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    write_text(&out.join(name), body)?;
    if name.ends_with(".csv") {
        let prov = format!(
            "# locfield provenance\n\
             command = {command}\n\
             version = {}\n\
             seed = {seed}\n\
             output = {name}\n\
             output_sha256 = {}\n\
             config_sha256 = {}\n\
             \n\
             # --- configuration echo ---\n\
             {}",
            env!("CARGO_PKG_VERSION"),
            sha256_hex(body.as_bytes()),
            sha256_hex(cfg.text().as_bytes()),
            cfg.text()
        );
        write_text(&out.join(format!("{name}.prov")), &prov)?;
    }
    log::info!("wrote {}", out.join(name).display());
    Ok(())
}

/// Shortest round-trip decimal form; `NaN` for missing values.
fn fnum(v: f64) -> String {
    format!("{v:?}")
}

/// Load the dataset named by `data`, or simulate one from the model keys.
fn obtain_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    if let Some(path) = &cfg.data {
        log::info!("reading dataset from {}", path.display());
        return Dataset::read_csv(path);
    }
    let spec = cfg.location_spec()?;
    let model = cfg.truth_model()?;
    let locs = gen_locations(&spec, loc_seed(seed))?;
    let z = sample_field(&model, &locs, seed)?;
    log::info!("simulated {} observations", z.len());
    Dataset::new(locs, z)
}

fn estimation_grid(cfg: &ExperimentConfig, data: &Dataset) -> Result<EstimationGrid> {
    match &cfg.grid {
        Some(counts) => EstimationGrid::regular(data, counts),
        None => EstimationGrid::default_for(data),
    }
}

/// Simulate a dataset and write it as `dataset.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    if cfg.data.is_some() {
        return Err(Error::Config(
            "`simulate` generates data from the model keys; remove `data`".into(),
        ));
    }
    let ds = obtain_dataset(cfg, seed)?;
    emit(out, "dataset.csv", &ds.to_csv(), "simulate", cfg, seed)
}

/// The true parameter surface as a plain function, when `field` is set:
/// the variance family estimates `sigma(t)^2`, the smoothness family
/// `nu(t)` itself.
fn truth_theta(cfg: &ExperimentConfig) -> Option<impl Fn(&Location) -> f64 + '_> {
    let expr = cfg.field.as_ref()?;
    let square = cfg.family == Family::Variance;
    Some(move |t: &Location| {
        let v = expr.eval(t);
        if square {
            v * v
        } else {
            v
        }
    })
}

/// Scrub a message for embedding in a CSV cell.
fn csv_safe(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

/// Fit the local parameter surface and write `surface.csv` + `surface.svg`.
pub fn cmd_estimate(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let data = obtain_dataset(cfg, seed)?;
    let fam = cfg.family_def()?;
    let grid = estimation_grid(cfg, &data)?;

    let lambda = match cfg.lambda {
        Some(l) => l,
        None => {
            // No fixed bandwidth: let the likelihood-ratio selector pick one.
            let lambdas = cfg.lambda_grid.resolve(&data)?;
            let sc = cfg.selector_config(seed)?;
            let (_, p2) = crate::bandwidth::select_lambdas(&data, &fam, &sc, &grid, &lambdas)?;
            let l = p2.selected();
            log::info!("no `lambda` in config; likelihood-ratio selector chose {l:.6}");
            l
        }
    };

    let policy = cfg.selector_config(seed)?.policy_for(&data, lambda);
    let fits = fit_surface(grid.nodes(), &data, &fam, &policy);

    let dim = data.dim();
    let mut csv = String::from(if dim == 1 {
        "x,theta_hat,objective,k_effective,lambda_used,errors\n"
    } else {
        "x,y,theta_hat,objective,k_effective,lambda_used,errors\n"
    });
    let mut failures = 0usize;
    let mut first_error = None;
    let mut values = Vec::with_capacity(fits.len());
    for (loc, fit) in &fits {
        for c in loc.coords() {
            let _ = write!(csv, "{},", fnum(*c));
        }
        match fit {
            Ok(f) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},",
                    fnum(f.theta_hat),
                    fnum(f.objective),
                    f.neighborhood_size,
                    fnum(lambda)
                );
                values.push(f.theta_hat);
            }
            Err(e) => {
                failures += 1;
                if first_error.is_none() {
                    first_error = Some(e.to_string());
                }
                let _ = writeln!(csv, ",,,{},{}", fnum(lambda), csv_safe(&e.to_string()));
                values.push(f64::NAN);
            }
        }
    }
    if failures == fits.len() {
        return Err(Error::Numerical(format!(
            "every grid node failed; first error: {}",
            first_error.unwrap_or_default()
        )));
    }
    if failures > 0 {
        log::info!("{failures}/{} nodes failed; see the errors column", fits.len());
    }

    let title = match cfg.family {
        Family::Variance => "local variance",
        Family::Smoothness => "local smoothness",
    };
    let svg = match grid.shape() {
        GridShape::OneD { .. } => {
            let est: Vec<(f64, f64)> = grid
                .nodes()
                .iter()
                .zip(&values)
                .map(|(t, &v)| (t.x(), v))
                .collect();
            let mut series = vec![Series { label: "estimate", points: &est }];
            let truth_pts: Vec<(f64, f64)>;
            if let Some(f) = truth_theta(cfg) {
                truth_pts = grid.nodes().iter().map(|t| (t.x(), f(t))).collect();
                series.push(Series { label: "truth", points: &truth_pts });
            }
            line_chart(title, "t", "theta", &series)
        }
        GridShape::TwoD { nx, ny, .. } => {
            let xs: Vec<f64> = (0..*nx).map(|i| grid.nodes()[i * ny].x()).collect();
            let ys: Vec<f64> = (0..*ny).map(|j| grid.nodes()[j].y()).collect();
            heat_map(title, &xs, &ys, &values)
        }
    };

    emit(out, "surface.csv", &csv, "estimate", cfg, seed)?;
    emit(out, "surface.svg", &svg, "estimate", cfg, seed)
}

fn profile_csv(p: &ProfileCurve) -> String {
    let mut csv = String::from("lambda,criterion_raw,criterion_standardized,is_argmax\n");
    for (i, &l) in p.lambdas().iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fnum(l),
            fnum(p.criterion()[i]),
            fnum(p.standardized()[i]),
            u8::from(i == p.argmax())
        );
    }
    csv
}

/// Run the bandwidth selectors and write one profile CSV per criterion.
pub fn cmd_bandwidth(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let data = obtain_dataset(cfg, seed)?;
    let fam = cfg.family_def()?;
    let grid = estimation_grid(cfg, &data)?;
    let lambdas = cfg.lambda_grid.resolve(&data)?;
    let sc = cfg.selector_config(seed)?;

    let (p1, p2) = crate::bandwidth::select_lambdas(&data, &fam, &sc, &grid, &lambdas)?;
    log::info!("roughness selector: lambda = {:.6}", p1.selected());
    log::info!("likelihood-ratio selector: lambda = {:.6}", p2.selected());
    emit(out, "profile_lambda1.csv", &profile_csv(&p1), "bandwidth", cfg, seed)?;
    emit(out, "profile_lambda2.csv", &profile_csv(&p2), "bandwidth", cfg, seed)?;

    let mut oracle = None;
    if cfg.oracle {
        let truth = cfg.truth_model().map_err(|_| {
            Error::Config("the oracle profile needs the true model: set `field`".into())
        })?;
        let po = crate::bandwidth::select_lambda_oracle(&data, &truth, &fam, &sc, &grid, &lambdas)?;
        log::info!("oracle selector: lambda = {:.6}", po.selected());
        emit(out, "profile_oracle.csv", &profile_csv(&po), "bandwidth", cfg, seed)?;
        oracle = Some(po);
    }

    let c1: Vec<(f64, f64)> = p1
        .lambdas()
        .iter()
        .zip(p1.standardized())
        .map(|(&l, &v)| (l, v))
        .collect();
    let c2: Vec<(f64, f64)> = p2
        .lambdas()
        .iter()
        .zip(p2.standardized())
        .map(|(&l, &v)| (l, v))
        .collect();
    let mut series = vec![
        Series { label: "roughness", points: &c1 },
        Series { label: "likelihood ratio", points: &c2 },
    ];
    let co: Vec<(f64, f64)>;
    if let Some(po) = &oracle {
        co = po
            .lambdas()
            .iter()
            .zip(po.standardized())
            .map(|(&l, &v)| (l, v))
            .collect();
        series.push(Series { label: "oracle", points: &co });
    }
    let svg = line_chart("bandwidth profiles", "lambda", "standardized criterion", &series);
    emit(out, "profiles.svg", &svg, "bandwidth", cfg, seed)
}

/// Evenly spaced values including both endpoints.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * h })
        .collect()
}

/// Exact Bayes-risk evaluation: risk curves per kernel, or an improvement
/// heat map over a `(nu, rho)` grid.
pub fn cmd_bayes_risk(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<()> {
    let t0_val = cfg
        .target
        .ok_or_else(|| Error::Config("missing required key `target`".into()))?;
    let spec = cfg.location_spec()?;
    let locs = gen_locations(&spec, loc_seed(seed))?;
    if locs.first().map(Location::dim) != Some(1) {
        return Err(Error::Config(
            "bayes-risk expects a one-dimensional design (`locations = even`)".into(),
        ));
    }
    let t0 = Location::new_1d(t0_val);
    let prior = cfg.prior_spec()?;
    let lambdas = match cfg.lambda_grid {
        LambdaGrid::Auto { .. } => {
            // The default grid only looks at the design geometry.
            let probe = Dataset::new(locs.clone(), vec![0.0; locs.len()])?;
            cfg.lambda_grid.resolve(&probe)?
        }
        LambdaGrid::LogRange { .. } => {
            let probe = Dataset::new(locs.clone(), vec![0.0; locs.len()])?;
            cfg.lambda_grid.resolve(&probe)?
        }
    };

    match cfg.risk_mode {
        RiskMode::Curves => {
            let nu = cfg
                .nu
                .ok_or_else(|| Error::Config("missing required key `nu`".into()))?;
            let rho = cfg
                .rho
                .ok_or_else(|| Error::Config("missing required key `rho`".into()))?;
            let base = MaternParams::new(cfg.sigma2.unwrap_or(1.0), nu, rho)?;
            let basis = TraceBasis::new(&base, &locs, &t0, prior.order())?;
            let kernels = cfg.kernels.clone().unwrap_or_else(|| {
                vec![
                    WeightsKind::K2,
                    WeightsKind::K4,
                    WeightsKind::K6,
                    WeightsKind::K8,
                    WeightsKind::Hard,
                ]
            });
            let mut csv = String::from("lambda,kernel,risk,bias_sq,variance\n");
            let mut curves = Vec::new();
            for k in &kernels {
                let curve = risk_curve(&basis, k.kernel_spec()?, &lambdas, &prior)?;
                for (i, &l) in curve.lambdas.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{}",
                        fnum(l),
                        k.name(),
                        fnum(curve.risk[i]),
                        fnum(curve.bias_sq[i]),
                        fnum(curve.variance[i])
                    );
                }
                match curve.argmin() {
                    Some(i) => log::info!(
                        "{}: minimal risk {:.6} at lambda = {:.6}",
                        k.name(),
                        curve.risk[i],
                        curve.lambdas[i]
                    ),
                    None => log::info!("{}: no feasible bandwidth on the grid", k.name()),
                }
                curves.push((k.name(), curve));
            }
            let pts: Vec<Vec<(f64, f64)>> = curves
                .iter()
                .map(|(_, c)| c.lambdas.iter().copied().zip(c.risk.iter().copied()).collect())
                .collect();
            let series: Vec<Series> = curves
                .iter()
                .zip(&pts)
                .map(|((name, _), p)| Series { label: name, points: p })
                .collect();
            let svg = line_chart("Bayes risk", "lambda", "risk", &series);
            emit(out, "risk_curves.csv", &csv, "bayes-risk", cfg, seed)?;
            emit(out, "risk_curves.svg", &svg, "bayes-risk", cfg, seed)
        }
        RiskMode::Heatmap => {
            let (nlo, nhi, nn) = cfg
                .nu_grid
                .ok_or_else(|| Error::Config("missing required key `nu_grid`".into()))?;
            let (rlo, rhi, rn) = cfg
                .rho_grid
                .ok_or_else(|| Error::Config("missing required key `rho_grid`".into()))?;
            let nus = linspace(nlo, nhi, nn);
            let rhos = linspace(rlo, rhi, rn);
            let ka = cfg.kernel_a.unwrap_or(WeightsKind::K6);
            let kb = cfg.kernel_b.unwrap_or(WeightsKind::Hard);
            let cells = improvement_grid(
                &nus,
                &rhos,
                ka.kernel_spec()?,
                kb.kernel_spec()?,
                &lambdas,
                &prior,
                &locs,
                &t0,
            )?;
            let mut csv = String::from(
                "nu,rho,pct_risk_improvement,pct_bias_improvement,lambda_A,lambda_B\n",
            );
            for c in &cells {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    fnum(c.nu),
                    fnum(c.rho),
                    fnum(c.pct_risk),
                    fnum(c.pct_bias),
                    fnum(c.lambda_a),
                    fnum(c.lambda_b)
                );
            }
            let values: Vec<f64> = cells.iter().map(|c| c.pct_risk).collect();
            let title = format!("% risk improvement: {} over {}", ka.name(), kb.name());
            let svg = heat_map(&title, &nus, &rhos, &values);
            emit(out, "risk_heatmap.csv", &csv, "bayes-risk", cfg, seed)?;
            emit(out, "risk_heatmap.svg", &svg, "bayes-risk", cfg, seed)
        }
    }
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match run() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Deterministic low-discrepancy points in the unit square.
fn golden_points(n: usize) -> Vec<Location> {
    (0..n)
        .map(|i| {
            let a = (0.618_033_988_749_894_9 * (i + 1) as f64).fract();
            let b = (0.754_877_666_246_692_9 * (i + 1) as f64).fract();
            Location::new_2d(a, b)
        })
        .collect()
}

/// Run the internal consistency suites and print one line per check.
///
/// Returns `Ok(true)` when everything passed; the binary maps a failed
/// suite to the numerical-failure exit code.
pub fn cmd_selftest() -> Result<bool> {
    let mut checks = Vec::new();

    checks.push(check("quadrature identities", || {
        let mut worst = 0.0f64;
        for &nu in &[0.3, 0.8, 1.5, 2.5] {
            for &q in &[0.1, 1.0, 3.0] {
                let (_, _, r) = gamma_integral_residual(nu, q)?;
                worst = worst.max(r);
            }
        }
        let rep = verify_appendix_identities(0.6, 1.4, 0.7)?;
        let conv = rep.convolution_residual;
        Ok((
            worst < 1e-6 && conv < 1e-8,
            format!("max gamma residual {worst:.2e}, convolution residual {conv:.2e}"),
        ))
    }));

    checks.push(check("positive definiteness", || {
        let locs = golden_points(24);
        let model = NonstatModel::ReparamK {
            sigma: ParamField::from_fn(|t: &Location| 1.0 + 0.5 * (3.0 * t.x()).sin()),
            nu: ParamField::from_fn(|t: &Location| 0.6 + 0.8 * t.y()),
            rho: ParamField::from_fn(|t: &Location| 0.3 + 0.2 * t.x() * t.y()),
        };
        let sigma = cov_matrix(&model, &locs)?;
        let eigs = sigma.symmetric_eigenvalues();
        let min = eigs.min();
        let max = eigs.max();
        Ok((
            min >= -1e-8 * max,
            format!("eigenvalue ratio {:.2e}", min / max),
        ))
    }));

    checks.push(check("incremental linear algebra", || {
        let locs = golden_points(12);
        let p = MaternParams::new(1.3, 0.9, 0.4)?;
        let sigma = cov_matrix(&NonstatModel::stationary_reparam_k(&p), &locs)?;
        let inv = sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("matrix not invertible".into()))?;
        let down = inverse_downdate(&inv, 4)?;
        // Dense reference: invert the matrix with row/column 4 removed.
        let dense = sigma.clone().remove_row(4).remove_column(4);
        let dense_inv = dense
            .try_inverse()
            .ok_or_else(|| Error::Numerical("matrix not invertible".into()))?;
        let diff = (&down - &dense_inv).abs().max();
        let kl = kl_mean_zero(&sigma, &sigma)?;
        Ok((
            diff < 1e-8 && kl.abs() < 1e-10,
            format!("downdate error {diff:.2e}, self-divergence {kl:.2e}"),
        ))
    }));

    checks.push(check("variance closed form", || {
        let base = MaternParams::new(1.0, 0.8, 0.2)?;
        let locs: Vec<Location> = (0..30).map(|i| Location::new_1d(i as f64 / 29.0)).collect();
        let model = NonstatModel::ReparamK {
            sigma: ParamField::from_fn(|t: &Location| 1.5 + t.x()),
            nu: ParamField::constant(0.8),
            rho: ParamField::constant(0.2),
        };
        let z = sample_field(&model, &locs, 7)?;
        let data = Dataset::new(locs, z)?;
        let t = Location::new_1d(0.5);
        let ordering = order_neighbors(&data, &t)?;
        let w = WeightVector::new(
            ordering
                .dists
                .iter()
                .map(|d| (-d / 0.3).exp())
                .collect(),
        )?;
        let profile = VarianceProfile::build(&data, &ordering, &base, data.len())?;
        let closed = profile.sigma2_hat(&w)?;
        let (numeric, _) = brent_max(|s| profile.objective_at(&w, s).unwrap_or(f64::NEG_INFINITY),
            closed * 0.2, closed * 5.0, 1e-12)?;
        let rel = (closed - numeric).abs() / closed;
        Ok((rel < 1e-4, format!("closed vs numeric rel diff {rel:.2e}")))
    }));

    checks.push(check("kernel moment conditions", || {
        let mut worst = 0.0f64;
        for kind in [WeightsKind::K2, WeightsKind::K4, WeightsKind::K6, WeightsKind::K8] {
            let spec = kind.kernel_spec()?;
            let order = 2 * match kind {
                WeightsKind::K2 => 1,
                WeightsKind::K4 => 2,
                WeightsKind::K6 => 3,
                _ => 4,
            };
            for p in 0..order {
                let m = adaptive_simpson(
                    |t: f64| t.powi(p as i32) * kernel_value(spec, t),
                    -12.0,
                    12.0,
                    1e-12,
                    48,
                )?;
                let target = if p == 0 { 1.0 } else { 0.0 };
                worst = worst.max((m - target).abs());
            }
        }
        Ok((worst < 1e-8, format!("max moment deviation {worst:.2e}")))
    }));

    checks.push(check("weighted objective telescoping", || {
        let locs: Vec<Location> = (0..20).map(|i| Location::new_1d(i as f64 / 19.0)).collect();
        let base = MaternParams::new(1.0, 0.7, 0.3)?;
        let model = NonstatModel::stationary_reparam_k(&base);
        let z = sample_field(&model, &locs, 11)?;
        let data = Dataset::new(locs, z)?;
        let fam = LocalModelFamily::variance_scale(MaternParams::new(1.0, 0.7, 0.3)?);
        let t = Location::new_1d(0.4);
        let w = WeightVector::new(vec![1.0; data.len()])?;
        let theta = 1.3;
        let obj = wll_objective(&[theta], &t, &data, &w, &fam)?;
        // Reference: the joint log-likelihood of all observations under the
        // same model, summed from its conditional increments.
        let ordering = order_neighbors(&data, &t)?;
        let full: f64 = loglik_increments(&fam.model_at(theta)?, &data, &ordering, data.len())?
            .iter()
            .sum();
        let diff = (obj - full).abs();
        Ok((diff < 1e-8, format!("all-ones objective vs joint log-likelihood {diff:.2e}")))
    }));

    checks.push(check("stationary baseline finite", || {
        let locs: Vec<Location> = (0..25).map(|i| Location::new_1d(i as f64 / 24.0)).collect();
        let base = MaternParams::new(2.0, 0.7, 0.3)?;
        let model = NonstatModel::stationary_reparam_k(&base);
        let z = sample_field(&model, &locs, 13)?;
        let data = Dataset::new(locs, z)?;
        let fam = LocalModelFamily::variance_scale(MaternParams::new(1.0, 0.7, 0.3)?);
        let mle = stationary_mle(&data, &fam)?;
        let (lo, hi) = fam.bounds();
        Ok((
            mle.is_finite() && mle > lo && mle < hi,
            format!("stationary variance estimate {mle:.4}"),
        ))
    }));

    let mut all = true;
    println!("locfield self-test");
    println!("------------------");
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        all &= c.passed;
        println!("{status}  {:<32} {}", c.name, c.detail);
    }
    println!("------------------");
    println!(
        "{} of {} checks passed",
        checks.iter().filter(|c| c.passed).count(),
        checks.len()
    );
    Ok(all)
}
