//! A small seeded experiment: both setups over two seeds, written to a
//! temporary directory with per-cell JSON, summary.csv and table.txt.
//! Rerunning against the same directory reuses the stored cells.

use fairgl::cli::experiment::{run_experiment, ExperimentSpec, GridPoint};
use fairgl::losses::LossKind;

fn main() -> std::result::Result<(), Box<dyn std::error::Error>> {
    let mut spec = ExperimentSpec::new("demo", 24, 200, 2, 2, LossKind::Fconcord);
    spec.seeds = vec![1, 2];
    spec.grid = vec![GridPoint { rho1: 0.05, rho2: 0.05 }];

    let dir = tempfile::tempdir()?;
    let cells = run_experiment(&spec, Some(dir.path()))?;
    for c in &cells {
        println!("{:?} seed {} CE {:.3} Balance {:.3} iterations {}", c.setup, c.seed, c.ce, c.balance, c.iterations);
    }
    println!("{}", std::fs::read_to_string(dir.path().join("table.txt"))?);
    Ok(())
}
