//! Selecting (ρ₁, ρ₂) over a small grid by the BIC score.

use fairgl::prelude::*;

fn main() -> Result<()> {
    let (p, n, seed) = (25, 250, 3);
    let truth = generate_sbm(&SbmParams::new(p, 2, 2), seed)?;
    let theta = generate_precision(&truth.adjacency, &PrecisionParams::default(), seed)?;
    let data = sample_gaussian(&theta, n, seed)?.with_demographics(truth.groups.clone())?;
    let cfg = FitConfig { k: Some(2), ..Default::default() };

    let mut grid = Vec::new();
    for rho1 in [0.02, 0.05, 0.1, 0.2] {
        for rho2 in [0.001, 0.01] {
            let res = fit_dataset(&LossModel::fconcord(rho1, rho2), &data, 1e-3, &cfg)?;
            let bic = bic_score(res.theta.values(), res.q.values(), &data, fairgl::evaluation::BIC_C).ok();
            let nnz = res.theta.off_diagonal().iter().filter(|v| v.abs() > 1e-5).count();
            println!("rho1 {rho1:<5} rho2 {rho2:<5} edges {nnz:>3}  BIC {}", bic.map_or("n/a".into(), |b| format!("{b:.1}")));
            grid.push(TuneCandidate { rho1, rho2, bic });
        }
    }
    let best = tune_select(&grid)?;
    println!("selected rho1 = {}, rho2 = {}", best.rho1, best.rho2);
    Ok(())
}
