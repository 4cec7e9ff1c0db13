//! Spike-domain gesture decoding from multichannel brain recordings.
//!
//! The pipeline converts analog electrode signals into signed spike trains
//! (temporal-contrast coding), groups electrodes into spatial clusters
//! (k-means on 3-D coordinates, or a fixed montage), slides 3x3 kernels with
//! integrate-and-fire readouts over each cluster's spike raster while the
//! kernel weights adapt through an event-driven plasticity rule, and
//! classifies the resulting per-sample weight vectors with a KNN model.
//!
//! Modules follow the stages:
//!
//! - [`signal_io`]: trial ingestion, segmentation, normalization, synthetic data
//! - [`spike_encoding`]: temporal-contrast spike conversion
//! - [`spatial_clustering`]: seeded k-means, elbow selection, fixed montages
//! - [`conv_snn`]: convolutional spiking feature extraction
//! - [`classifier`]: stratified splits, KNN, confusion-matrix reports
//! - [`pipeline`]: config-driven end-to-end runs, cluster sweeps, manifests

pub mod classifier;
pub mod conv_snn;
pub mod error;
pub mod pipeline;
pub mod seeds;
pub mod signal_io;
pub mod spatial_clustering;
pub mod spike_encoding;

pub use error::{Error, Result};
