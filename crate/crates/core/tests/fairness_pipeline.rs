//! Whole-pipeline behaviour on block graphs where same-group pairs are
//! more likely to connect than same-community pairs.

use fairgl::prelude::*;

const ZETAS: [f64; 4] = [0.02, 0.25, 0.3, 0.6];

fn run(seed: u64) -> [(f64, f64); 2] {
    let (p, n) = (40, 1000);
    let truth = generate_sbm(&SbmParams::new(p, 2, 2).with_zetas(ZETAS), seed).unwrap();
    let theta = generate_precision(&truth.adjacency, &PrecisionParams::default(), seed).unwrap();
    let data = sample_gaussian(&theta, n, seed).unwrap();
    let lambda = 0.5 * ((p as f64).ln() / n as f64).sqrt();
    let model = LossModel::fconcord(lambda, 0.001);
    let cfg = FitConfig { k: Some(2), ..Default::default() };
    let polys = [FairnessPolytope::unconstrained(p), FairnessPolytope::from_groups(&truth.groups, 1e-3).unwrap()];
    polys.map(|poly| {
        let res = fit(&model, &data, &poly, &cfg).unwrap();
        (
            clustering_error(&res.labels, &truth.communities).unwrap(),
            balance_from_groups(&res.labels, &truth.groups).unwrap(),
        )
    })
}

#[test]
fn parity_recovers_mixed_communities() {
    let runs: Vec<_> = (0..3).map(run).collect();
    let mean = |f: &dyn Fn(&[(f64, f64); 2]) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let (ce_plain, ce_fair) = (mean(&|r| r[0].0), mean(&|r| r[1].0));
    let (bal_plain, bal_fair) = (mean(&|r| r[0].1), mean(&|r| r[1].1));
    assert!(ce_fair < ce_plain - 0.1, "CE {ce_plain} -> {ce_fair}");
    assert!(bal_fair > 1.5 * bal_plain, "Balance {bal_plain} -> {bal_fair}");
}

#[test]
fn ground_truth_partition_is_fair_and_feasible() {
    let truth = generate_sbm(&SbmParams::new(24, 3, 2), 9).unwrap();
    assert!((balance_from_groups(&truth.communities, &truth.groups).unwrap() - 1.0).abs() < 1e-12);
    let poly = FairnessPolytope::from_groups(&truth.groups, 0.0).unwrap();
    let z = Mat::from_fn(24, 24, |i, j| f64::from(u8::from(truth.communities[i] == truth.communities[j])));
    assert!(poly.violation(&z) < 1e-12);
}
