//! Dirichlet forms of reversible Markov chains, discretization of
//! continuous-state kernels onto finite meshes, and canonical-path comparison
//! bounds on spectral gaps, with the barbell walk as the running benchmark.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`chain`]: exact finite chains: validation, flows, Dirichlet forms.
//! 2. [`grid`]: product spaces, mesh partitions, kernel/measure projection,
//!    reversibilization, histogram densities, reference quadrature.
//! 3. [`paths`]: path families, the endpoint pseudometric, congestion
//!    ratios (finite and generalized), mesh lifting, assumption validators.
//! 4. [`spectral`]: spectral gaps, relaxation times, comparison bounds.
//! 5. [`benchmarks`]: barbell instances (discrete, continuous, split) with
//!    their canonical path families and prefilled validator configs.
//! 6. [`convergence`]: mesh-refinement studies turning limit statements
//!    into measured error curves.
//! 7. [`io`]: file formats (JSON chains, families, configs; CSV studies).

pub mod benchmarks;
pub mod chain;
pub mod convergence;
pub mod grid;
pub mod io;
pub mod paths;
pub mod rng;
pub mod spectral;

pub use chain::{
    dirichlet_form, edge_flow, total_variation, validate_chain, variance, FiniteChain, ScalarField,
    Tolerances, ValidationReport,
};
pub use grid::{
    build_partition, cell_of, discretize_kernel, discretize_measure, histogram_density,
    reference_dirichlet, reversibilize, DensityKernel, DiscretizedChain, MeshPartition, Point,
    ProductSpace,
};
pub use paths::{
    congestion_constant_general, congestion_ratio_finite, distance_w_edges, distance_w_paths,
    lift_path_family, naive_max_paths_per_edge, validate_assumptions, AssumptionConfig,
    AssumptionContext, AssumptionKind, AssumptionReport, Edge, Path, PathFamily, StatePathFamily,
};
pub use spectral::{comparison_bound, rayleigh_quotient, spectral_gap, SpectralResult};
