//! Dense matrices, norms, and the singular value decomposition everything else
//! is built on.

mod dense;
mod norms;
mod observation;
mod svd;

pub use dense::DenseMatrix;
pub use norms::{
    column_l1_max, entrywise_max_abs, lq_row_distance, max_row_norm, nuclear_norm, LqNorm,
};
pub use observation::{GroundTruthMatrix, ObservationMatrix};
pub use svd::{
    svd, svd_with, SpectralDecomposition, SvdOptions, DEFAULT_SVD_TOL, DEFAULT_SWEEPS_PER_DIM,
};
