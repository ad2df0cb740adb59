//! Singular value thresholding as a pre-processing stage for downstream
//! predictors, together with the individual-fairness constants it certifies,
//! the predictors used to exercise it, synthetic and MovieLens data sources,
//! and an experiment harness.

pub mod datagen;
pub mod error;
pub mod estimation;
pub mod fairness;
pub mod harness;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod predictors;

pub use error::{Error, Result};
pub use estimation::{svt, usvt, usvt_threshold, ShrinkageFn, SvtEstimate, UsvtParams};
pub use linalg::{DenseMatrix, GroundTruthMatrix, LqNorm, ObservationMatrix};
