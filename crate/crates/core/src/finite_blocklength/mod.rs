//! Finite-blocklength rate versus generalization-error analysis.
//!
//! Each replicate produces an information-loss vector
//! `[-log2(P(U|Y)/P(U)), log2(P(U|X)/P(U)), loss]`; its mean `J` and
//! covariance `V` drive a Gaussian dispersion region, and the achievable rate
//! at blocklength `n`, excess probability `epsilon` and loss level `l` is the
//! smallest `J1 + J2 + (b1 + b2)/sqrt(n) + 4 log2(n)/n` over shifts `b` in
//! that region whose loss coordinate `J3 + b3/sqrt(n) + 2 log2(n)/n` stays
//! within `l`.

mod dispersion;
mod frontier;
mod info_loss;

pub use dispersion::{dispersion_prob, DispersionRegion, GaussianCache, DEFAULT_CACHE_SIZE};
pub use frontier::{
    blocklength_correction, boundary_sweep, rate_loss_bound, region_curve, FrontierConfig, FrontierModel,
    RateLossPoint, BOUNDARY_PROB_TOL, MAX_BISECTIONS, RADIUS_TOL, SWEEP_DIRECTIONS,
};
pub use info_loss::{
    estimate_moments, sample_info_loss, InfoDensity, InfoLossBatch, InfoLossSample, LossMode, MomentSummary,
    DEFAULT_INFO_LOSS_SAMPLES, MIN_MOMENT_SAMPLES,
};
