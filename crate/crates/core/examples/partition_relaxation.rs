//! The Q-step on its own: minimise trace(Q·G) over relaxed partition
//! matrices, with and without a demographic-parity constraint.
//!
//! `G` rewards pairing nodes in the same planted community and, more
//! strongly, nodes in the same group. The unconstrained relaxation clusters
//! by group; parity recovers the mixed communities.

use fairgl::admm::center_off_diagonal;
use fairgl::prelude::*;

fn main() -> Result<()> {
    let groups = [1, 1, 1, 1, 2, 2, 2, 2];
    let communities = [1, 1, 2, 2, 1, 1, 2, 2];
    let p = groups.len();
    let g = Mat::from_fn(p, p, |i, j| {
        let mut v = 0.0;
        if communities[i] == communities[j] {
            v -= 1.0;
        }
        if groups[i] == groups[j] {
            v -= 1.5;
        }
        v
    });
    // Without centring every entry is negative and the all-ones matrix wins.
    let mut g = g;
    center_off_diagonal(&mut g);
    let cfg = QSolverConfig { max_iter: 5000, tol: 1e-9, ..Default::default() };

    for (name, poly) in [
        ("unconstrained", FairnessPolytope::unconstrained(p)),
        ("parity", FairnessPolytope::from_groups(&groups, 0.0)?),
    ] {
        let q = solve_q_subproblem(&g, &poly, &cfg)?;
        let labels = kmeans_partition(&spectral_embedding(&q, 2)?, 2, 10, 0)?;
        println!("{name}: trace(QG) = {:.3}, labels {:?}", (q.values().component_mul(&g)).sum(), labels.labels);
        println!(
            "  CE {:.3}, balance {:.3}, parity violation {:.1e}",
            clustering_error(&labels.labels, &communities)?,
            balance_from_groups(&labels.labels, &groups)?,
            poly.violation(q.values())
        );
    }

    let poly = FairnessPolytope::from_groups(&groups, 0.0)?;
    let basis = nullspace_basis(&poly.a1, 2)?;
    println!("exact parity leaves a {}-dimensional column space", basis.dim());
    Ok(())
}
