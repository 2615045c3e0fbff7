//! Local quadratic chart sampling for regression data augmentation.
//!
//! Each sample is drawn by fitting a second-order chart to a neighborhood of
//! the joint `[x, y]` data, perturbing the tangent coordinates and lifting the
//! perturbed point back through the chart.

pub mod basis;
pub mod chart;
pub mod error;
pub mod experiment;
pub mod intrinsic;
pub mod model;
pub mod neighbors;
pub mod sampler;
pub mod synthetic;

pub use basis::{center, fit_basis, CenteredNeighborhood, Mode, OrthonormalBasis};
pub use chart::{evaluate_chart, fit_chart, Order, QuadraticChart, Ridge};
pub use error::{CemsError, ErrorCategory, Result};
pub use intrinsic::{twonn_estimate, DimEstimate};
pub use model::{
    concat_sample, denormalize_targets, normalize, normalize_targets, Dataset, JointSample, NormalizationState,
};
pub use neighbors::{NeighborIndex, Neighborhood, Selection};
pub use sampler::{
    augment_dataset, cems_batch, cems_point, foma_sample, AugmentOptions, AugmentRun, AugmentedSamples, IntrinsicDim,
    Method, Provenance, SamplerConfig,
};
