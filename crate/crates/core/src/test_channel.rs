//! The Gaussian test channel `U = alpha (X + Phi)` and its rate formulas.
//!
//! Rates are in bits per sample. The decoder is assumed to know `alpha` and
//! `sigma_phi^2`; coded transmission is idealized, so `U` arrives intact.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::Stream;
use crate::source_model::polynomial_value;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestChannelParams {
    alpha: f64,
    sigma_phi2: f64,
    distortion: f64,
}

impl TestChannelParams {
    /// `alpha = (sigma^2 - D) / sigma^2`, `sigma_phi^2 = D sigma^2 / (sigma^2 - D)`.
    pub fn from_distortion(sigma2: f64, distortion: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(invalid(format!("sigma^2 must be positive, got {sigma2}")));
        }
        if !(distortion > 0.0 && distortion.is_finite()) {
            return Err(invalid(format!("distortion must be positive, got {distortion}")));
        }
        if distortion >= sigma2 {
            return Err(Error::InfeasibleDistortion { distortion, sigma2 });
        }
        Ok(Self {
            alpha: (sigma2 - distortion) / sigma2,
            sigma_phi2: distortion * sigma2 / (sigma2 - distortion),
            distortion,
        })
    }

    /// Explicit `(alpha, sigma_phi^2)`. The stored distortion is the
    /// reconstruction error `(1 - alpha)^2 sigma^2 + alpha^2 sigma_phi^2`.
    pub fn from_parts(alpha: f64, sigma_phi2: f64, sigma2: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(sigma_phi2 > 0.0 && sigma_phi2.is_finite()) {
            return Err(invalid(format!("sigma_phi^2 must be positive, got {sigma_phi2}")));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(invalid(format!("sigma^2 must be non-negative, got {sigma2}")));
        }
        Ok(Self {
            alpha,
            sigma_phi2,
            distortion: (1.0 - alpha).powi(2) * sigma2 + alpha * alpha * sigma_phi2,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma_phi2(&self) -> f64 {
        self.sigma_phi2
    }

    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    /// Same gain, different noise variance. Used to model an encoder whose
    /// channel noise disagrees with what the decoder assumes.
    pub fn with_sigma_phi2(&self, sigma_phi2: f64) -> Self {
        Self { sigma_phi2, ..*self }
    }

    /// `u_i = alpha (x_i + phi_i)`, `phi_i ~ N(0, sigma_phi^2)`.
    pub fn apply(&self, x: &[f64], rng: &mut Stream) -> Vec<f64> {
        x.iter().map(|&xi| self.apply_one(xi, rng)).collect()
    }

    #[inline]
    pub fn apply_one(&self, x: f64, rng: &mut Stream) -> f64 {
        self.alpha * (x + rng.gaussian(self.sigma_phi2))
    }

    /// `x_hat_i = u_i + (1 - alpha) beta_hat^T y*_i`.
    pub fn reconstruct(&self, u: &[f64], y: &[f64], beta_hat: &[f64]) -> Result<Vec<f64>> {
        if u.len() != y.len() {
            return Err(invalid(format!(
                "reconstruct needs equal lengths, got u: {} and y: {}",
                u.len(),
                y.len()
            )));
        }
        if beta_hat.is_empty() {
            return Err(invalid("beta_hat must be non-empty"));
        }
        Ok(u
            .iter()
            .zip(y)
            .map(|(&ui, &yi)| ui + (1.0 - self.alpha) * polynomial_value(beta_hat, yi))
            .collect())
    }
}

pub fn params_from_distortion(sigma2: f64, distortion: f64) -> Result<TestChannelParams> {
    TestChannelParams::from_distortion(sigma2, distortion)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    /// `R_{X|Y}(D) = 1/2 log2(sigma^2 / D)`.
    pub r_conditional: f64,
    /// `1/2 log2((sigma^2 + sigma_phi^2) / sigma_phi^2)`.
    pub r_wz: f64,
    /// `1/2 log2(1 + sigma^2 / sigma_phi^2)`.
    pub r_b: f64,
}

pub fn rates(sigma2: f64, channel: &TestChannelParams) -> RateSummary {
    let sp = channel.sigma_phi2();
    RateSummary {
        r_conditional: (0.5 * (sigma2 / channel.distortion()).log2()).max(0.0),
        r_wz: 0.5 * ((sigma2 + sp) / sp).log2(),
        r_b: 0.5 * (1.0 + sigma2 / sp).log2(),
    }
}

/// Conditional distortion-rate function of the Gaussian residual,
/// `sigma^2 2^(-2R)`.
pub fn conditional_distortion_rate(rate: f64, sigma2: f64) -> f64 {
    sigma2 * (-2.0 * rate).exp2()
}

/// Generic upper bound on `lim sup E[G^(1/2)]` for a coding rate `R`:
/// `sigma + 2 sqrt(D_{X|Y}(R)) = sigma + 2 sigma 2^(-R)`.
pub fn raginsky_sqrt_bound(rate: f64, sigma2: f64) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(invalid(format!("rate must be non-negative, got {rate}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid(format!("sigma^2 must be positive, got {sigma2}")));
    }
    let sigma = sigma2.sqrt();
    Ok(sigma + 2.0 * conditional_distortion_rate(rate, sigma2).sqrt())
}
