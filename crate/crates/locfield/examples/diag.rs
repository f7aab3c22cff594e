//! Temporary diagnostic for the selector criteria (not part of the crate).

use locfield::bandwidth::{
    default_lambda_grid, oracle_kl, select_lambda_oracle, select_lambdas, EstimationGrid,
    SelectorConfig,
};
use locfield::covariance::{MaternParams, NonstatModel};
use locfield::data::{Dataset, Location, ParamField};
use locfield::kernels::KernelSpec;
use locfield::simulate::{gen_locations, sample_field, LocationSpec};
use locfield::wll::{LocalModelFamily, WeightScheme};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LOCFIELD_LOG", "info"))
        .format_timestamp(None)
        .init();
    let base = MaternParams::new(1.0, 0.5, 0.5).unwrap();
    let fam = LocalModelFamily::variance_scale(base);
    let truth = NonstatModel::ReparamK {
        sigma: ParamField::from_fn(|t: &Location| 2.0 * (t.x() / 0.015).sin() + 2.8),
        nu: ParamField::constant(0.5),
        rho: ParamField::constant(0.5),
    };
    let args: Vec<String> = std::env::args().collect();
    let hi: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let scheme_name = args.get(2).map(String::as_str).unwrap_or("k6");
    let n: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = LocationSpec::Even1d { n, interval: (0.0, 0.1) };
    let locs = gen_locations(&spec, seed).unwrap();
    let z = sample_field(&truth, &locs, 0xA9_00 + seed).unwrap();
    let data = Dataset::new(locs, z).unwrap();
    let grid = EstimationGrid::default_for(&data).unwrap();
    let mut lambdas = default_lambda_grid(&data, 25).unwrap();
    lambdas = locfield::numeric::log_space(lambdas[0], hi, 30).unwrap();
    let scheme = match scheme_name {
        "hard" => WeightScheme::Kernel(KernelSpec::HardThreshold),
        "k2" => WeightScheme::Kernel(KernelSpec::higher_order(1).unwrap()),
        "k4" => WeightScheme::Kernel(KernelSpec::higher_order(2).unwrap()),
        _ => WeightScheme::Kernel(KernelSpec::higher_order(3).unwrap()),
    };
    let mut sc = SelectorConfig::new(scheme, 0xA9_1000 + seed);
    sc.replicates = 50;
    let (p1, p2) = select_lambdas(&data, &fam, &sc, &grid, &lambdas).unwrap();
    let porc = select_lambda_oracle(&data, &truth, &fam, &sc, &grid, &lambdas).unwrap();
    println!("lambda    stat1        z1        stat2        z2        kl        1/crit_orc");
    for (i, &l) in lambdas.iter().enumerate() {
        let kl = oracle_kl(&data, &truth, &fam, &sc, &grid, l).unwrap();
        println!(
            "{:9.5} {:11.4e} {:9.3} {:11.4e} {:9.3} {:10.4e} {:10.4e}",
            l,
            p1.statistic()[i],
            p1.criterion()[i],
            p2.statistic()[i],
            p2.criterion()[i],
            kl,
            porc.criterion()[i],
        );
    }
    println!(
        "selected: l1={:.5} l2={:.5} orc={:.5}",
        p1.selected(),
        p2.selected(),
        porc.selected()
    );
}
