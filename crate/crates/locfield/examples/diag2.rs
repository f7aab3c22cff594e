//! Temporary diagnostic for the risk-improvement grid (not part of the crate).

use locfield::bayesrisk::{improvement_grid, PriorSpec};
use locfield::data::Location;
use locfield::kernels::KernelSpec;
use locfield::numeric::log_space;
use locfield::simulate::{gen_locations, LocationSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lo: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let hi: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let pts: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(40);
    let b: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let locs = gen_locations(
        &LocationSpec::Even1d { n: 100, interval: (0.0, b) },
        0,
    )
    .unwrap();
    let t0 = Location::new_1d(0.5);
    let prior = PriorSpec::gaussian(2.0, vec![4.0; 4]).unwrap();
    let lambdas = log_space(lo, hi, pts).unwrap();
    let cells = improvement_grid(
        &[0.5, 1.25, 2.0],
        &[0.4, 0.8, 1.2],
        KernelSpec::higher_order(3).unwrap(),
        KernelSpec::HardThreshold,
        &lambdas,
        &prior,
        &locs,
        &t0,
    )
    .unwrap();
    println!("grid [{lo}, {hi}] x {pts}");
    println!("nu     rho    pct_risk  pct_bias  lambda_sm  lambda_hard");
    for c in &cells {
        println!(
            "{:5.2} {:5.2} {:9.2} {:9.2} {:10.4} {:10.4}",
            c.nu, c.rho, c.pct_risk, c.pct_bias, c.lambda_a, c.lambda_b
        );
    }
}
