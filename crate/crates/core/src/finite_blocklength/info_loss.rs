use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::regression::{expected_gen_error, gen_error_conditional, train_once};
use crate::rng::StreamFamily;
use crate::source_model::{polynomial_value, PolynomialSource, UDensity};
use crate::stats::{compensated_sum, gaussian_ln_pdf, MeanEstimate};
use crate::test_channel::TestChannelParams;

pub const DEFAULT_INFO_LOSS_SAMPLES: usize = 200_000;
pub const MIN_MOMENT_SAMPLES: usize = 1000;

/// Redraws allowed per replicate when `P_U(u)` underflows.
const MAX_REDRAWS: u64 = 1000;

/// Which quantity fills the loss coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Squared error of the trained predictor on one fresh inference pair.
    #[default]
    PerSample,
    /// Exact conditional generalization error `G` of the trained predictor.
    Conditional,
}

impl LossMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::PerSample => "per-sample",
            LossMode::Conditional => "conditional",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoLossSample {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl InfoLossSample {
    pub fn as_array(&self) -> [f64; 3] {
        [self.v1, self.v2, self.v3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfoLossBatch {
    pub samples: Vec<InfoLossSample>,
    /// Draws discarded because `P_U(u)` underflowed.
    pub rejections: u64,
    /// Replicate average of the closed-form expected error, each replicate
    /// using its own training Gram matrix.
    pub closed_form: MeanEstimate,
    pub n: usize,
    pub mode: LossMode,
}

/// The two log-likelihood ratios of the information-loss vector, in bits.
#[derive(Clone, Debug)]
pub struct InfoDensity {
    pu: UDensity,
    alpha: f64,
    var_u_given_y: f64,
    var_u_given_x: f64,
    beta: Vec<f64>,
}

impl InfoDensity {
    pub fn new(source: &PolynomialSource, channel: &TestChannelParams) -> Result<Self> {
        let alpha = channel.alpha();
        Ok(Self {
            pu: UDensity::new(source, channel)?,
            alpha,
            var_u_given_y: alpha * alpha * (source.sigma2() + channel.sigma_phi2()),
            var_u_given_x: alpha * alpha * channel.sigma_phi2(),
            beta: source.beta().to_vec(),
        })
    }

    /// `[-log2(P(u|y)/P(u)), log2(P(u|x)/P(u))]`, or `None` when `P_U(u)`
    /// underflows.
    pub fn eval(&self, x: f64, y: f64, u: f64) -> Result<Option<[f64; 2]>> {
        let Some(ln_pu) = self.pu.ln_eval(u)? else {
            return Ok(None);
        };
        let ln_given_y = gaussian_ln_pdf(u, self.alpha * polynomial_value(&self.beta, y), self.var_u_given_y);
        let ln_given_x = gaussian_ln_pdf(u, self.alpha * x, self.var_u_given_x);
        Ok(Some([-(ln_given_y - ln_pu) / LN_2, (ln_given_x - ln_pu) / LN_2]))
    }
}

/// Draw `m` information-loss vectors.
///
/// `v1, v2` come from a single-letter `(X, Y, U)` draw on
/// `family.child("single-letter").stream(i)`, which does not depend on `n`.
/// `v3` comes from an independent length-`n` training sequence plus one fresh
/// inference pair on `family.child("training").stream(i)`.
pub fn sample_info_loss(
    source: &PolynomialSource,
    channel: &TestChannelParams,
    n: usize,
    m: usize,
    mode: LossMode,
    family: &StreamFamily,
) -> Result<InfoLossBatch> {
    if m == 0 {
        return Err(invalid("number of info-loss samples must be at least 1"));
    }
    let density = InfoDensity::new(source, channel)?;
    let moment = source.moment_matrix();
    let sigma2 = source.sigma2();
    let single = family.child("single-letter");
    let training = family.child("training");

    let rows = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = single.stream(i);
            let mut redraws = 0u64;
            let [v1, v2] = loop {
                let (x, y) = source.sample_one(&mut s);
                let u = channel.apply_one(x, &mut s);
                match density.eval(x, y, u)? {
                    Some(v) => break v,
                    None if redraws < MAX_REDRAWS => redraws += 1,
                    None => {
                        return Err(Error::NumericalFailure(format!(
                            "P_U underflowed on {MAX_REDRAWS} consecutive draws"
                        )))
                    }
                }
            };

            let mut t = training.stream(i);
            let predictor = train_once(source, channel, n, &mut t)?;
            let v3 = match mode {
                LossMode::PerSample => {
                    let (xt, yt) = source.sample_one(&mut t);
                    (xt - predictor.predict(yt)).powi(2)
                }
                LossMode::Conditional => gen_error_conditional(&predictor, source.beta(), &moment, sigma2)?,
            };
            let closed = expected_gen_error(n, sigma2, channel, &moment, &predictor.empirical_sigma)?;
            let sample = InfoLossSample { v1, v2, v3 };
            Ok((sample, closed, redraws))
        })
        .collect::<Result<Vec<_>>>()?;

    let rejections = rows.iter().map(|r| r.2).sum();
    let closed: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(InfoLossBatch {
        samples: rows.into_iter().map(|r| r.0).collect(),
        rejections,
        closed_form: MeanEstimate::from_slice(&closed),
        n,
        mode,
    })
}

/// Mean `J` and covariance `V` of the information-loss vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub j: [f64; 3],
    /// Unbiased sample covariance, symmetrized with eigenvalues floored at 0.
    pub v: DMatrix<f64>,
    pub m_samples: usize,
}

impl MomentSummary {
    pub fn std_errors(&self) -> [f64; 3] {
        let m = self.m_samples as f64;
        [0, 1, 2].map(|i| (self.v[(i, i)] / m).sqrt())
    }

    /// `J1 + J2`, the Monte Carlo Wyner-Ziv rate.
    pub fn rate(&self) -> f64 {
        self.j[0] + self.j[1]
    }

    pub fn rate_std_error(&self) -> f64 {
        let var = self.v[(0, 0)] + self.v[(1, 1)] + 2.0 * self.v[(0, 1)];
        (var.max(0.0) / self.m_samples as f64).sqrt()
    }
}

pub fn estimate_moments(samples: &[InfoLossSample]) -> Result<MomentSummary> {
    let m = samples.len();
    if m < MIN_MOMENT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_MOMENT_SAMPLES,
            got: m,
        });
    }
    if samples.iter().any(|s| !s.as_array().iter().all(|v| v.is_finite())) {
        return Err(Error::NumericalFailure("non-finite info-loss sample".into()));
    }
    let mf = m as f64;
    let j = [0, 1, 2].map(|c| compensated_sum(samples.iter().map(|s| s.as_array()[c])) / mf);
    let mut cov = DMatrix::zeros(3, 3);
    for a in 0..3 {
        for b in a..3 {
            let c = compensated_sum(samples.iter().map(|s| {
                let v = s.as_array();
                (v[a] - j[a]) * (v[b] - j[b])
            })) / (mf - 1.0);
            cov[(a, b)] = c;
            cov[(b, a)] = c;
        }
    }
    Ok(MomentSummary {
        j,
        v: linalg::project_psd(&cov),
        m_samples: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_channel::{params_from_distortion, rates};

    #[test]
    fn constant_input_has_zero_covariance() {
        let s = vec![InfoLossSample { v1: -0.2, v2: 0.7, v3: 16.5 }; 1500];
        let m = estimate_moments(&s).unwrap();
        assert_eq!(m.j, [-0.2, 0.7, 16.5]);
        assert!(m.v.iter().all(|&v| v.abs() < 1e-20));
    }

    #[test]
    fn too_few_samples_rejected() {
        let s = vec![InfoLossSample { v1: 0.0, v2: 0.0, v3: 0.0 }; 999];
        assert_eq!(
            estimate_moments(&s).unwrap_err(),
            Error::InsufficientSamples { needed: 1000, got: 999 }
        );
    }

    #[test]
    fn moments_of_known_gaussian() {
        // Oracle: samples built as mu + L z with a fixed L, so J = mu and
        // V = L L^T.
        let mu = [0.5, -1.0, 3.0];
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 2.0, 0.0, -0.3, 0.2, 0.7]);
        let truth = &l * l.transpose();
        let fam = StreamFamily::new(3, "known-gauss");
        let mut s = fam.stream(0);
        let m = 200_000;
        let samples: Vec<InfoLossSample> = (0..m)
            .map(|_| {
                let z = nalgebra::Vector3::new(s.standard_normal(), s.standard_normal(), s.standard_normal());
                let w = l.fixed_view::<3, 3>(0, 0) * z;
                InfoLossSample { v1: mu[0] + w[0], v2: mu[1] + w[1], v3: mu[2] + w[2] }
            })
            .collect();
        let est = estimate_moments(&samples).unwrap();
        let se = est.std_errors();
        for i in 0..3 {
            assert!((est.j[i] - mu[i]).abs() <= 3.0 * se[i], "J[{i}]");
            for k in 0..3 {
                let se_v = ((truth[(i, i)] * truth[(k, k)] + truth[(i, k)].powi(2)) / m as f64).sqrt();
                assert!((est.v[(i, k)] - truth[(i, k)]).abs() <= 3.0 * se_v, "V[{i},{k}]");
            }
        }
    }

    #[test]
    fn rate_components_match_wyner_ziv() {
        let src = PolynomialSource::reference();
        let ch = params_from_distortion(16.0, 8.0).unwrap();
        let batch = sample_info_loss(&src, &ch, 50, 20_000, LossMode::Conditional, &StreamFamily::new(8, "il")).unwrap();
        let m = estimate_moments(&batch.samples).unwrap();
        let rwz = rates(16.0, &ch).r_wz;
        assert!((m.rate() - rwz).abs() <= 3.0 * m.rate_std_error(), "{} vs {rwz}", m.rate());
        assert!(m.j[2] >= 16.0 - 3.0 * m.std_errors()[2]);
        assert_eq!(batch.rejections, 0);
    }

    #[test]
    fn v2_matches_direct_quadrature() {
        // Oracle: P_U(u) integrated directly over y, without the V density.
        let src = PolynomialSource::reference();
        let ch = params_from_distortion(16.0, 8.0).unwrap();
        let (x, y, u) = (4.5, 0.3, 2.0);
        let a = ch.alpha();
        let var = a * a * (16.0 + ch.sigma_phi2());
        let q = crate::quadrature::Integrator::with_tolerance(1e-13);
        let pu = q
            .integrate(|t| 0.5 * gaussian_ln_pdf(u, a * (2.0 + 3.0 * t + t * t), var).exp(), -1.0, 1.0)
            .unwrap()
            .value;
        let px = gaussian_ln_pdf(u, a * x, a * a * ch.sigma_phi2()).exp();
        let oracle = (px / pu).log2();
        let [_, v2] = InfoDensity::new(&src, &ch).unwrap().eval(x, y, u).unwrap().unwrap();
        assert!((v2 - oracle).abs() < 1e-6, "{v2} vs {oracle}");
    }

    #[test]
    fn per_sample_loss_matches_closed_form() {
        let src = PolynomialSource::reference();
        let ch = params_from_distortion(16.0, 8.0).unwrap();
        let batch = sample_info_loss(&src, &ch, 50, 20_000, LossMode::PerSample, &StreamFamily::new(6, "v3")).unwrap();
        let v3: Vec<f64> = batch.samples.iter().map(|s| s.v3).collect();
        let est = MeanEstimate::from_slice(&v3);
        let tol = 3.0 * (est.std_error.powi(2) + batch.closed_form.std_error.powi(2)).sqrt();
        assert!((est.mean - batch.closed_form.mean).abs() <= tol, "{} vs {}", est.mean, batch.closed_form.mean);
    }

    #[test]
    fn single_letter_part_is_shared_across_blocklengths() {
        let src = PolynomialSource::reference();
        let ch = params_from_distortion(16.0, 8.0).unwrap();
        let fam = StreamFamily::new(8, "crn");
        let a = sample_info_loss(&src, &ch, 20, 200, LossMode::PerSample, &fam).unwrap();
        let b = sample_info_loss(&src, &ch, 40, 200, LossMode::PerSample, &fam).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!((x.v1, x.v2), (y.v1, y.v2));
        }
    }

    #[test]
    fn unsupported_source_propagates() {
        let src = PolynomialSource::new(vec![1.0, 2.0], 1.0, crate::source_model::SideInfo::UniformSymmetric { half_width: 1.0 }).unwrap();
        let ch = params_from_distortion(1.0, 0.5).unwrap();
        let err = sample_info_loss(&src, &ch, 10, 10, LossMode::PerSample, &StreamFamily::new(1, "x")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedModel(_)));
    }
}
