//! Unsupervised important-object detection for first-person images.
//!
//! A segmentation agent projects coarse maps onto image regions; two
//! per-pixel recognition pathways (appearance only, and appearance plus
//! position) teach each other through those projections in alternating
//! rounds, starting from a spatial location prior. No labels are used for
//! training; ground truth only feeds evaluation.

pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod pathways;
pub mod prior;
pub mod regions;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use eval::{average_precision, fuse, max_f, pr_curve, Averaging, Metrics, PrCurve};
pub use grid::{
    bilinear_resize, make_coord_grids, BinaryMask, CoordGrids, ImageTensor, ProbMap, SampleRecord,
};
pub use pathways::{
    bce_loss_and_grad, extract_features, extract_features_with, FeatureOptions, FeatureStack, PathwayKind,
    PathwayModel, Sgd, TrainConfig,
};
pub use prior::{estimate_prior_location, gaussian_prior, PriorSpec};
pub use regions::{attach_regions, project, propose_regions, ProposerParams, RegionSet};
pub use synth::{generate_dataset, DistractorPolicy, SceneParams};
pub use training::{
    make_targets, predict_fused_image, run_round, schedule, train, train_with, Network, RoundKind,
    RoundRecord, TrainOptions, TrainState, TrainingSet,
};
