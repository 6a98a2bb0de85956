//! Class statistics, covariance decomposition and symmetric solvers.

mod covariance;
mod incremental;
mod solve;

pub use covariance::{
    cmd_covariance, column_mean, estimate_class_stats, sample_mean_cov, ClassStats, CovarianceOperator,
    SampleCovariance, Scaled, Shifted,
};
pub use incremental::{block_inverse_extend, IncrementalInverse, DEFAULT_SCHUR_TOL};
pub use solve::{
    pseudo_solve, symmetric_eigen, symmetric_solve, Cholesky, SymmetricEigenDecomposition, PIVOT_REL_TOL,
};
