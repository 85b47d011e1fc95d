//! Joint estimation of sparse graphical models and fair community structure.
//!
//! A fit alternates between a sparse precision (or Ising parameter) matrix
//! `Θ`, its ℓ₁-penalised copy `Ω`, and a relaxed partition matrix `Q`
//! constrained to demographic parity. Three losses are available: a
//! CONCORD-type Gaussian pseudo-likelihood, a graphical-lasso likelihood, and
//! an Ising logistic pseudo-likelihood.
//!
//! ```no_run
//! use fairgl::prelude::*;
//!
//! let graph = generate_sbm(&SbmParams::new(30, 2, 2), 7).unwrap();
//! let theta = generate_precision(&graph.adjacency, &PrecisionParams::default(), 7).unwrap();
//! let data = sample_gaussian(&theta, 300, 7)
//!     .unwrap()
//!     .with_demographics(graph.groups.clone())
//!     .unwrap();
//! let model = LossModel::fconcord(0.1, 0.05);
//! let fit = fit_dataset(&model, &data, 1e-3, &FitConfig::default()).unwrap();
//! println!("{:?}", fit.labels);
//! ```

pub mod admm;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod fairness;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod qsolver;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::admm::{fit, fit_dataset, FitConfig};
    pub use crate::clustering::{kmeans_partition, select_k, spectral_embedding, CommunityLabels};
    pub use crate::error::{Error, Result};
    pub use crate::evaluation::{
        balance, balance_from_groups, bic_score, clustering_error, pcee, preference_ratio, tune_select, EvalReport, TuneCandidate,
    };
    pub use crate::fairness::{
        adjoint_graph_operator, build_fairness_constraints, build_group_matrix, graph_operator,
        nullspace_basis, FairnessPolytope, NullspaceBasis,
    };
    pub use crate::linalg::Mat;
    pub use crate::losses::{AdmmState, GMap, LossKind, LossModel};
    pub use crate::qsolver::{solve_q_subproblem, QSolver, QSolverConfig};
    pub use crate::synthetic::{
        generate_ising_params, generate_precision, generate_sbm, sample_gaussian, sample_ising,
        GibbsConfig, GroundTruth, IsingParams, PrecisionParams, SbmParams,
    };
    pub use crate::types::{
        sample_covariance, DataKind, Dataset, FitResult, PartitionRelaxation, PrecisionEstimate,
    };
}
