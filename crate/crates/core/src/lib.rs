//! Exact diagonalization and macroscopic-quantumness measures for small
//! ferrimagnetic spin clusters.

pub mod analysis;
pub mod basis;
pub mod correlations;
pub mod distinguish;
pub mod eigen;
pub mod error;
pub mod fisher;
pub mod half;
pub mod hamiltonian;
pub mod models;
pub mod num;

pub use basis::{enumerate_sector, sector_dimension, SectorBasis, SectorCache, SpinCluster, SpinSite, Sublattice};
pub use eigen::{QuantumState, SolverOptions};
pub use error::{Error, Result};
pub use half::HalfInt;
pub use hamiltonian::SpinModel;
pub use num::{Complex, Real, Scalar};

pub type RealState = QuantumState<f64>;
pub type ComplexState = QuantumState<Complex<f64>>;
pub type RealOperator = hamiltonian::SparseOperator<f64>;
pub type ComplexOperator = hamiltonian::SparseOperator<Complex<f64>>;
pub type RealSuperposition = correlations::Superposition<f64>;
pub type ComplexSuperposition = correlations::Superposition<Complex<f64>>;
