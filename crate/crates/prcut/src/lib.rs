//! Probabilistic ratio-cut clustering toolkit.
//!
//! Minimizes the graph ratio-cut by treating cluster assignments as independent
//! categorical random variables. The expected ratio-cut of such a random
//! clustering has a closed form built on Poisson-binomial expectations, which
//! this crate evaluates exactly via Gauss-Legendre quadrature. Training uses a
//! tractable upper bound of that expectation with an analytic stochastic
//! gradient injected through a small feed-forward network.
//!
//! The crate also ships the classical pipeline used for comparison: k-NN
//! similarity graphs, dense spectral clustering with an in-repo symmetric
//! eigensolver, k-means, and label-agreement metrics (ACC / NMI / ARI / RC).

pub mod baselines;
pub mod cli;
pub mod data;
pub mod eigen;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod poisson;
pub mod quadrature;
pub mod trainer;
pub mod verify;

pub use graph::{KernelConfig, KernelKind, Partition, SparseSimilarity};
pub use poisson::BernoulliProfile;
pub use quadrature::QuadratureRule;
