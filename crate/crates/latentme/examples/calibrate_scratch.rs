// Scratch probe for tuning the bundled calibration. Not part of the build.
use latentme::core::{ols_fit, Column, HcKind};
use latentme::correction::{corrected_estimator, EstimatorConfig};
use latentme::measurement::{score_with, EmConfig, Method};
use latentme::partition::sample_partitions;
use latentme::rng::derive_seed;
use latentme::simulation::*;

fn cell(dgp: &DgpSpec, n: usize, m: usize, method: Method, reps: usize, k: usize, seed: u64) {
    let em = EmConfig::default();
    let est = EstimatorConfig::default();
    let mut naive = 0.0;
    let mut corrected = 0.0;
    let mut un_iv = 0.0;
    let mut cor_mean = 0.0;
    let mut corr_sq = 0.0;
    let mut naive_sq = 0.0;
    for rep in 0..reps {
        let path = |stage: u64| derive_seed(seed, &[n as u64, m as u64, rep as u64, stage]);
        let x = draw_traits(dgp, n, path(0)).unwrap();
        let w = simulate_indicators(&x, dgp, m, path(1)).unwrap();
        let y = simulate_outcome(&x, dgp, path(2)).unwrap();
        let scores = score_with(&w, method, &em).unwrap();
        let nv = ols_fit(&y, &scores.to_column("s"), HcKind::Hc1).unwrap().slope();
        naive += nv;
        naive_sq += (nv - dgp.beta_x) * (nv - dgp.beta_x);
        let plan = sample_partitions(m, k.min(latentme::partition::partition_count(m) as usize), path(3)).unwrap();
        let fit = corrected_estimator(&y, &w, method, &plan, &est).unwrap();
        corrected += fit.point_estimate;
        corr_sq += (fit.point_estimate - dgp.beta_x) * (fit.point_estimate - dgp.beta_x);
        un_iv += fit.uncorrected_iv_median;
        cor_mean += fit.per_partition.iter().map(|p| p.correlation).sum::<f64>()
            / fit.per_partition.len() as f64;
    }
    let r = reps as f64;
    println!(
        "n={n} m={m} {method:?}: naive={:.4} (rmse {:.4}) corrected={:.4} (rmse {:.4}) unIV={:.4} splitcor={:.4}",
        naive / r,
        (naive_sq / r).sqrt(),
        corrected / r,
        (corr_sq / r).sqrt(),
        un_iv / r,
        cor_mean / r
    );
}

fn moc_cell(dgp: &DgpSpec, n: usize, m: usize, reps: usize, seed: u64) {
    use latentme::correction::method_of_composition;
    let em = EmConfig::default();
    let mut naive = 0.0;
    let mut moc = 0.0;
    let mut naive_sq = 0.0;
    let mut moc_sq = 0.0;
    let mut moc_below = 0usize;
    for rep in 0..reps {
        let path = |stage: u64| derive_seed(seed, &[n as u64, m as u64, rep as u64, stage]);
        let x = draw_traits(dgp, n, path(0)).unwrap();
        let w = simulate_indicators(&x, dgp, m, path(1)).unwrap();
        let y = simulate_outcome(&x, dgp, path(2)).unwrap();
        let scores = score_with(&w, Method::Irt, &em).unwrap();
        let nv = ols_fit(&y, &scores.to_column("s"), HcKind::Hc1).unwrap().slope();
        let mc = method_of_composition(&y, &scores, 200, path(4), HcKind::Hc1)
            .unwrap()
            .point_estimate;
        naive += nv;
        moc += mc;
        naive_sq += (nv - dgp.beta_x) * (nv - dgp.beta_x);
        moc_sq += (mc - dgp.beta_x) * (mc - dgp.beta_x);
        if mc.abs() < nv.abs() {
            moc_below += 1;
        }
    }
    let r = reps as f64;
    println!(
        "MOC n={n} m={m}: naive={:.4} (rmse {:.4}) moc={:.4} (rmse {:.4}) |moc|<|naive| in {}/{reps}",
        naive / r,
        (naive_sq / r).sqrt(),
        moc / r,
        (moc_sq / r).sqrt(),
        moc_below
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(50);
    let dgp = DgpSpec::synthetic_pool30();
    let t0 = std::time::Instant::now();
    cell(&dgp, 10_000, 30, Method::Sum, reps, 16, 1001);
    println!("  [{:?}]", t0.elapsed());
    let t0 = std::time::Instant::now();
    cell(&dgp, 1_000, 6, Method::Irt, reps, 16, 1002);
    println!("  [{:?}]", t0.elapsed());
    let t0 = std::time::Instant::now();
    cell(&dgp, 1_000, 12, Method::Irt, reps, 16, 1003);
    println!("  [{:?}]", t0.elapsed());
    let t0 = std::time::Instant::now();
    moc_cell(&dgp, 1_000, 6, reps, 1005);
    println!("  [{:?}]", t0.elapsed());
    let t0 = std::time::Instant::now();
    moc_cell(&dgp, 1_000, 12, reps, 1006);
    println!("  [{:?}]", t0.elapsed());
}
