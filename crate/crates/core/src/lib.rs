//! QUBO formulations for three machine-learning selection problems and a
//! simulated-annealing sampler to solve them.

pub mod anneal;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod features;
pub mod instances;
pub mod io;
pub mod learners;
pub mod metrics;
mod normalize;
pub mod qubo;
pub mod rng;
pub mod synth;
pub mod timing;

pub use anneal::{
    brute_force_solve, simulated_anneal, solve_k_hot, AnnealConfig, KHotSolution, Sample, SampleSet,
};
pub use error::{Error, Result};
pub use qubo::{k_hot_constraint, Assignment, BinaryQuadraticProblem, ConstrainedQubo};
