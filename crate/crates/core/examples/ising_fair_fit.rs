//! Binary data: Gibbs-sampled Ising model on an SBM graph, fit with FBN.

use fairgl::prelude::*;

fn main() -> Result<()> {
    let (p, n, seed) = (20, 400, 5);
    let truth = generate_sbm(&SbmParams::new(p, 2, 2), seed)?;
    let params = generate_ising_params(&truth.adjacency, &IsingParams::default(), seed)?;
    let data = sample_ising(&params, n, &GibbsConfig::default(), seed)?.with_demographics(truth.groups.clone())?;

    let ones = data.observations().iter().filter(|&&v| v == 1.0).count();
    println!("{} x {} binary observations, {:.1}% ones", n, p, 100.0 * ones as f64 / (n * p) as f64);

    let lambda = 0.5 * ((p as f64).ln() / n as f64).sqrt();
    let res = fit_dataset(&LossModel::fbn(lambda, 0.05), &data, 1e-3, &FitConfig { k: Some(2), ..Default::default() })?;
    let edges = res.theta.off_diagonal().iter().filter(|v| v.abs() > 1e-5).count();
    println!("estimated edges: {edges} (true: {})", truth.adjacency.sum() as usize / 2);
    println!("CE {:.3}", clustering_error(&res.labels, &truth.communities)?);
    println!("Balance {:.3}", balance_from_groups(&res.labels, &truth.groups)?);
    println!("PCEE {:.3}", pcee(res.theta.values(), &params)?);
    Ok(())
}
