//! Temporary Monte Carlo audit of the Bayes-risk formula at one design cell
//! (not part of the crate).

use locfield::bayesrisk::{bayes_risk, PriorSpec, TraceBasis};
use locfield::covariance::{matern_cov, MaternParams};
use locfield::data::Location;
use locfield::kernels::{kernel_weights, KernelSpec};
use locfield::simulate::CounterRng;
use nalgebra::DMatrix;

fn mc_risk(
    base: &MaternParams,
    locs: &[Location],
    t0: &Location,
    prior_c0: f64,
    tau: f64,
    order: usize,
    spec: KernelSpec,
    lambda: f64,
    outer: usize,
    inner: usize,
) -> (f64, f64) {
    let basis = TraceBasis::new(base, locs, t0, order).unwrap();
    let w = kernel_weights(spec, basis.ordering(), lambda, usize::MAX).unwrap();
    let n = locs.len();
    let d: Vec<f64> = {
        let ord = basis.ordering();
        ord.offsets.iter().map(|o| -o[0]).collect()
    };
    let sigma = DMatrix::from_fn(n, n, |i, j| matern_cov(base, (d[i] - d[j]).abs()));
    let chol = nalgebra::Cholesky::new(sigma.clone()).unwrap();
    let l = chol.l();
    let minv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .unwrap();
    let e = w.effective_len();
    let ws = w.sum();
    let wn: Vec<f64> = w.weights().iter().map(|&x| x / ws).collect();
    let target = prior_c0 * prior_c0;
    let mut outer_means = Vec::with_capacity(outer);
    for o in 0..outer {
        let mut rng = CounterRng::replicate(0xD1A6_3000, o as u64);
        let mut c = vec![prior_c0];
        for _ in 0..order {
            c.push(tau * rng.next_normal());
        }
        let sig: Vec<f64> = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                let mut dp = 1.0;
                for &cj in &c {
                    acc += cj * dp;
                    dp *= d[i];
                }
                acc
            })
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
                    u += minv[(i, j)] * zj;
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
    (mse, sd / (outer as f64).sqrt())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let nu: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let rho: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.2);
    let outer: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let base = MaternParams::new(1.0, nu, rho).unwrap();
    let locs: Vec<Location> = (0..100)
        .map(|i| Location::new_1d(i as f64 / 99.0))
        .collect();
    let t0 = Location::new_1d(0.5);
    let prior = PriorSpec::gaussian(2.0, vec![4.0; 4]).unwrap();
    let basis = TraceBasis::new(&base, &locs, &t0, 4).unwrap();
    for (name, spec, lambda) in [
        ("K6  ", KernelSpec::higher_order(3).unwrap(), 0.3253),
        ("hard", KernelSpec::HardThreshold, 0.2965),
    ] {
        let w = kernel_weights(spec, basis.ordering(), lambda, usize::MAX).unwrap();
        let t = basis.tables(&w).unwrap();
        let exact = bayes_risk(&prior, &t).unwrap();
        let (mc, se) = mc_risk(&base, &locs, &t0, 2.0, 2.0, 4, spec, lambda, outer, 50);
        println!(
            "{name} lambda={lambda}: exact risk {:.6} (bias2 {:.6} var {:.6}) vs MC {mc:.6} (se {se:.6}) -> gap {:.2} se",
            exact.risk,
            exact.expected_bias_sq,
            exact.variance_part,
            (mc - exact.risk).abs() / se
        );
    }
}
