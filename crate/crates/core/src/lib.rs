//! Robust two-view model fitting: minimal solvers, robust subspace recovery
//! and locally optimized RANSAC, plus synthetic scenes and a benchmark harness.
//!
//! ```
//! use robustfit::{run_ransac, synthesize, ModelKind, RansacConfig, SynthConfig};
//!
//! let ds = synthesize(&SynthConfig {
//!     n_inliers: 60,
//!     n_outliers: 20,
//!     seed: 3,
//!     ..SynthConfig::new(ModelKind::Homography)
//! })
//! .unwrap();
//! let report = run_ransac(&ds.correspondences, ds.image_size, ModelKind::Homography, &RansacConfig::default()).unwrap();
//! assert!(report.best.model.angle_to(&ds.truth_model) < 1e-6);
//! ```

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod geometry;
pub mod io;
pub mod numerics;
pub mod ransac;
pub mod solvers;
pub mod subspace;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    embedding, residual, sampson_distance, transfer_error, Correspondence, EmbeddingBlock,
    HomPoint, ImageSize, Label, ModelKind, ModelMatrix, NormalizationTransform, Vector9,
};
pub use io::{
    parse_correspondences, read_correspondences, write_correspondences, CorrespondenceFile,
    FormatError,
};
pub use ransac::{run_ransac, LoMethod, RansacConfig, RunReport, ScoredModel, Threshold};
pub use solvers::{dlt_refit, fundamental_7pt, homography_4pt, MinimalSample};
pub use subspace::{
    dpcp_irls, dpcp_irls_basis, dpcp_irls_group, huber_irls, IrlsConfig, SubspaceFit,
};
pub use synth::{synthesize, SynthConfig, SynthDataset};
