//! Rate versus generalization-error analysis for polynomial regression on
//! compressed observations.
//!
//! A source `X = beta^T Y* + N` is observed through a Gaussian test channel
//! `U = alpha (X + Phi)`; a decoder fits `beta` by least squares on `(U, Y)`
//! pairs and predicts `X` from fresh `Y`. The crate covers the source model
//! and its densities, the channel and its rates, the regression error and its
//! bounds, the finite-blocklength rate/loss frontier, and experiment runners.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod finite_blocklength;
pub mod linalg;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod source_model;
pub mod stats;
pub mod test_channel;

pub use error::{Error, Result};
pub use finite_blocklength::{
    dispersion_prob, estimate_moments, rate_loss_bound, region_curve, sample_info_loss, DispersionRegion,
    FrontierConfig, FrontierModel, GaussianCache, InfoLossSample, LossMode, MomentSummary, RateLossPoint,
};
pub use regression::{
    expected_gen_error, gen_error_conditional, gen_error_upper_bound, min_eig_bound_check, ols_fit, ruhe_check,
    GenErrorReport, TrainedPredictor,
};
pub use rng::{Stream, StreamFamily};
pub use source_model::{
    density_u, density_v, features, FeatureVector, MomentMatrix, PolynomialSource, SampleBatch, SideInfo,
};
pub use test_channel::{params_from_distortion, rates, RateSummary, TestChannelParams};

pub use nalgebra;
