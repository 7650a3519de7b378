//! Bid-landscape forecasting: discretized winning-price distributions
//! learned from censored auction logs.

pub mod admnet;
pub mod cli;
pub mod error;
pub mod evalkit;
pub mod features;
pub mod linalg;
pub mod nllloss;
pub mod pricegrid;
pub mod synthgen;
pub mod trainer;

pub use admnet::{init_params, load_checkpoint, save_checkpoint, InteractionKind, ModelParams, NetConfig};
pub use error::{CheckpointError, Error, Result};
pub use evalkit::{EvalResult, Landscape, PointBidder};
pub use features::{BidObservation, Dataset, EncodedSample, FeatureSchema, FieldDecl, Outcome};
pub use nllloss::LossConfig;
pub use pricegrid::{BucketDistribution, PriceGrid};
pub use synthgen::{build_world, Oracle, SynthConfig, SynthWorld};
pub use trainer::{train, LossKind, TrainConfig, TrainReport};
