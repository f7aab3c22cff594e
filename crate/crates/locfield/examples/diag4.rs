//! Temporary probe of the 2-D smoothness pipeline: correlation/RMSE of the
//! fitted surface at every candidate bandwidth (not part of the crate).

use locfield::bandwidth::{default_lambda_grid, select_lambdas, EstimationGrid, SelectorConfig};
use locfield::covariance::NonstatModel;
use locfield::data::{Dataset, Location, ParamField};
use locfield::simulate::{gen_locations, sample_field, LocationSpec};
use locfield::wll::{fit_surface, stationary_mle, LocalModelFamily, WeightScheme};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let surface = args.get(1).map(String::as_str).unwrap_or("ramp");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0xB0);
    let pts: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(12);
    let saddle = surface == "saddle";
    let truth_nu = move |t: &Location| {
        if saddle {
            1.5 + 0.9
                * (std::f64::consts::PI * t.x()).cos()
                * (std::f64::consts::PI * t.y()).cos()
        } else {
            1.5 + 0.9 * (std::f64::consts::PI * (t.x() + t.y()) / 2.0).cos()
        }
    };
    let truth = NonstatModel::SmoothnessOnly {
        sigma2: 1.0,
        rho: 0.5,
        nu: ParamField::from_fn(truth_nu),
    };
    let spec = LocationSpec::Uniform2d { n: 800, bounds: [(0.0, 1.0), (0.0, 1.0)] };
    let locs = gen_locations(&spec, seed).unwrap();
    let z = sample_field(&truth, &locs, seed + 1).unwrap();
    let data = Dataset::new(locs, z).unwrap();

    let fam = LocalModelFamily::matern_smoothness(1.0, 0.5)
        .with_bounds(0.5, 2.5)
        .unwrap();
    let grid = EstimationGrid::regular(&data, &[8, 8]).unwrap();
    let lambdas = default_lambda_grid(&data, pts).unwrap();
    let mut sc = SelectorConfig::new(WeightScheme::Constrained, seed + 2);
    sc.boundary_corrected = true;
    sc.max_neighbors = Some(150);
    sc.replicates = 50;
    sc.theta_grid = 32;

    let truth_vals: Vec<f64> = grid.nodes().iter().map(|t| truth_nu(t)).collect();
    let rmse = |a: &[f64], b: &[f64]| {
        (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
    };
    let stat = stationary_mle(&data, &fam).unwrap();
    let flat: Vec<f64> = vec![stat; truth_vals.len()];
    println!(
        "surface {surface} seed {seed:#x}: stationary mle {stat:.3}, rmse {:.3}",
        rmse(&flat, &truth_vals)
    );
    for &l in &lambdas {
        let policy = sc.policy_for(&data, l);
        let fits = fit_surface(grid.nodes(), &data, &fam, &policy);
        let est: Vec<f64> = fits
            .iter()
            .map(|(_, f)| f.as_ref().map(|x| x.theta_hat).unwrap_or(f64::NAN))
            .collect();
        let nfail = est.iter().filter(|v| v.is_nan()).count();
        let pinned = est
            .iter()
            .filter(|v| v.is_finite() && (**v <= 0.5 + 1e-6 || **v >= 2.5 - 1e-6))
            .count();
        println!(
            "lambda {l:.4}: corr {:+.3}, rmse {:.3}, pinned {pinned}/64, failed {nfail}",
            pearson(&est, &truth_vals),
            rmse(&est, &truth_vals)
        );
    }
    let (p1, p2) = select_lambdas(&data, &fam, &sc, &grid, &lambdas).unwrap();
    println!("selected: l1 {:.4}  l2 {:.4}", p1.selected(), p2.selected());
}
