//! Least-squares polynomial regression on channel outputs, its
//! generalization error, and the matrix inequalities behind the error bound.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::rng::{Stream, StreamFamily};
use crate::source_model::{polynomial_value, MomentMatrix, PolynomialSource};
use crate::stats::MeanEstimate;
use crate::test_channel::TestChannelParams;

/// Designs whose Gram matrix has a condition number at or above this are
/// rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Slack used by the inequality checks.
pub const INEQUALITY_TOL: f64 = 1e-9;

/// Rows are `[1, y_i, ..., y_i^(k-1)]`.
pub fn design_matrix(y: &[f64], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(y.len(), k, |i, j| y[i].powi(j as i32))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPredictor {
    pub beta_hat: Vec<f64>,
    pub n_train: usize,
    pub channel: TestChannelParams,
    /// `(1/n) Y* Y*^T` of the training set.
    pub empirical_sigma: DMatrix<f64>,
    pub condition: f64,
}

impl TrainedPredictor {
    #[inline]
    pub fn predict(&self, y: f64) -> f64 {
        polynomial_value(&self.beta_hat, y)
    }
}

struct Factored {
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
    gram: DMatrix<f64>,
    condition: f64,
}

fn factor_design(y: &[f64], k: usize) -> Result<Factored> {
    if k == 0 {
        return Err(invalid("model order k must be at least 1"));
    }
    if y.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("side information must be finite"));
    }
    let a = design_matrix(y, k);
    let gram = a.tr_mul(&a) / y.len() as f64;
    let qr = a.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (hi, lo) = sv.iter().fold((0.0_f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if !(condition < CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    Ok(Factored { qr, r, gram, condition })
}

/// `beta_hat = alpha^{-1} (Y* Y*^T)^{-1} Y* u`, solved through a Householder
/// QR factorization of the design.
pub fn ols_fit(u: &[f64], y: &[f64], channel: &TestChannelParams, k: usize) -> Result<TrainedPredictor> {
    if u.len() != y.len() {
        return Err(invalid(format!(
            "ols_fit needs equal lengths, got u: {} and y: {}",
            u.len(),
            y.len()
        )));
    }
    let f = factor_design(y, k)?;
    let mut rhs = DVector::from_column_slice(u);
    f.qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, k).into_owned();
    let coef = f
        .r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::NumericalFailure("singular triangular factor".into()))?;
    let beta_hat: Vec<f64> = coef.iter().map(|c| c / channel.alpha()).collect();
    if beta_hat.iter().any(|b| !b.is_finite()) {
        return Err(Error::NumericalFailure("non-finite regression coefficients".into()));
    }
    Ok(TrainedPredictor {
        beta_hat,
        n_train: y.len(),
        channel: *channel,
        empirical_sigma: f.gram,
        condition: f.condition,
    })
}

/// `Cov(beta_hat | y) = (sigma^2 + sigma_phi^2) (Y* Y*^T)^{-1}`.
pub fn conditional_cov(y: &[f64], channel: &TestChannelParams, sigma2: f64, k: usize) -> Result<DMatrix<f64>> {
    let f = factor_design(y, k)?;
    let r_inv = f
        .r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("singular triangular factor".into()))?;
    Ok(&r_inv * r_inv.transpose() * (sigma2 + channel.sigma_phi2()))
}

fn check_moment_dims(moment: &MomentMatrix, k: usize) -> Result<()> {
    if moment.dim() != k {
        return Err(invalid(format!(
            "moment matrix is {0}x{0} but the model has k = {k}",
            moment.dim()
        )));
    }
    Ok(())
}

/// `G = (beta - beta_hat)^T Sigma_tilde (beta - beta_hat) + sigma^2`.
pub fn gen_error_conditional(
    predictor: &TrainedPredictor,
    beta: &[f64],
    moment: &MomentMatrix,
    sigma2: f64,
) -> Result<f64> {
    if predictor.beta_hat.len() != beta.len() {
        return Err(invalid(format!(
            "beta has length {} but beta_hat has length {}",
            beta.len(),
            predictor.beta_hat.len()
        )));
    }
    check_moment_dims(moment, beta.len())?;
    let d = DVector::from_iterator(beta.len(), beta.iter().zip(&predictor.beta_hat).map(|(b, h)| b - h));
    let quad = d.dot(&(moment.matrix() * &d));
    Ok(quad.max(0.0) + sigma2)
}

/// `Tr(Sigma_tilde Sigma^{-1})`.
pub fn trace_ratio(moment: &MomentMatrix, empirical_sigma: &DMatrix<f64>) -> Result<f64> {
    check_moment_dims(moment, empirical_sigma.nrows())?;
    linalg::check_symmetric(empirical_sigma, "empirical_sigma")?;
    let condition = linalg::condition_number(empirical_sigma);
    if !(condition < CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    let chol = Cholesky::new(empirical_sigma.clone())
        .ok_or_else(|| Error::NumericalFailure("empirical Gram matrix is not positive definite".into()))?;
    Ok(chol.solve(moment.matrix()).trace())
}

/// `sigma^2 + (sigma^2 + sigma_phi^2) / n * Tr(Sigma_tilde Sigma^{-1})`.
pub fn expected_gen_error(
    n: usize,
    sigma2: f64,
    channel: &TestChannelParams,
    moment: &MomentMatrix,
    empirical_sigma: &DMatrix<f64>,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let tr = trace_ratio(moment, empirical_sigma)?;
    Ok(sigma2 + (sigma2 + channel.sigma_phi2()) / n as f64 * tr)
}

/// `C = lambda_max(Sigma_tilde) / lambda_min(Sigma_tilde)`.
pub fn condition_constant(moment: &MomentMatrix) -> Result<f64> {
    let ev = linalg::eigenvalues_desc(moment.matrix());
    let (hi, lo) = (ev[0], *ev.last().expect("non-empty"));
    if !(lo > 0.0) || !(hi / lo < CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
            limit: CONDITION_LIMIT,
        });
    }
    Ok(hi / lo)
}

/// `sigma^2 + (sigma^2 + sigma_phi^2) / n * k * C`.
pub fn gen_error_upper_bound(
    n: usize,
    k: usize,
    sigma2: f64,
    channel: &TestChannelParams,
    moment: &MomentMatrix,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    check_moment_dims(moment, k)?;
    let c = condition_constant(moment)?;
    Ok(sigma2 + (sigma2 + channel.sigma_phi2()) / n as f64 * k as f64 * c)
}

/// Finite-sample trace bound `k lambda_max(St) / (lambda_min(St) - ||St - S||)`,
/// or `None` while the denominator is not positive.
pub fn finite_sample_trace_bound(moment: &MomentMatrix, empirical_sigma: &DMatrix<f64>) -> Option<f64> {
    let st = moment.matrix();
    if st.shape() != empirical_sigma.shape() {
        return None;
    }
    let gap = linalg::spectral_norm_symmetric(&(st - empirical_sigma));
    let denom = linalg::min_eigenvalue(st) - gap;
    (denom > 0.0).then(|| st.nrows() as f64 * linalg::max_eigenvalue(st) / denom)
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    linalg::check_symmetric(a, "a")?;
    linalg::check_symmetric(b, "b")?;
    if a.shape() != b.shape() {
        return Err(invalid(format!("dimension mismatch: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `Tr(ab) <= sum_i lambda_i(a) lambda_i(b)`, eigenvalues in descending order.
pub fn ruhe_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    check_pair(a, b)?;
    let trace = a.component_mul(&b.transpose()).sum();
    let bound: f64 = linalg::eigenvalues_desc(a)
        .iter()
        .zip(linalg::eigenvalues_desc(b))
        .map(|(x, y)| x * y)
        .sum();
    Ok(trace <= bound + INEQUALITY_TOL)
}

/// `lambda_min(a) >= lambda_min(b) - ||a - b||_2`.
pub fn min_eig_bound_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    check_pair(a, b)?;
    let gap = linalg::spectral_norm_symmetric(&(a - b));
    Ok(linalg::min_eigenvalue(a) >= linalg::min_eigenvalue(b) - gap - INEQUALITY_TOL)
}

/// Replicate summary of the generalization error at one training length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenErrorReport {
    pub n: usize,
    pub replicates: usize,
    /// Replicate mean of the exact conditional error `G(beta_hat)`.
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    /// Replicate mean of the closed form evaluated with each replicate's
    /// own empirical Gram matrix.
    pub closed_form_conditional: f64,
    pub closed_form_conditional_std_error: f64,
    /// Closed form with the empirical Gram replaced by `Sigma_tilde`.
    pub expected_closed_form: f64,
    pub upper_bound: f64,
    pub min_gen_error: f64,
    pub sigma2: f64,
}

/// Train once on `n` fresh pairs sent through the channel.
pub fn train_once(
    source: &PolynomialSource,
    channel: &TestChannelParams,
    n: usize,
    rng: &mut Stream,
) -> Result<TrainedPredictor> {
    let batch = source.sample_pairs(n, rng)?;
    let u = channel.apply(&batch.x, rng);
    ols_fit(&u, &batch.y, channel, source.k())
}

/// Monte Carlo over independent training sets; replicate `i` uses
/// `family.stream(i)`.
pub fn simulate_gen_error(
    source: &PolynomialSource,
    channel: &TestChannelParams,
    n: usize,
    replicates: usize,
    family: &StreamFamily,
) -> Result<GenErrorReport> {
    if replicates < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: replicates,
        });
    }
    let moment = source.moment_matrix();
    let sigma2 = source.sigma2();
    let pairs = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = family.stream(i);
            let predictor = train_once(source, channel, n, &mut rng)?;
            let g = gen_error_conditional(&predictor, source.beta(), &moment, sigma2)?;
            let closed = expected_gen_error(n, sigma2, channel, &moment, &predictor.empirical_sigma)?;
            Ok((g, closed))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;

    let (g, closed): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let g_est = MeanEstimate::from_slice(&g);
    let closed_est = MeanEstimate::from_slice(&closed);
    let k = source.k();
    Ok(GenErrorReport {
        n,
        replicates,
        mc_estimate: g_est.mean,
        mc_std_error: g_est.std_error,
        closed_form_conditional: closed_est.mean,
        closed_form_conditional_std_error: closed_est.std_error,
        expected_closed_form: sigma2 + (sigma2 + channel.sigma_phi2()) * k as f64 / n as f64,
        upper_bound: gen_error_upper_bound(n, k, sigma2, channel, &moment)?,
        min_gen_error: g.iter().copied().fold(f64::INFINITY, f64::min),
        sigma2,
    })
}

/// Average squared loss of `predictor` on `m` fresh inference pairs.
pub fn inference_loss(
    predictor: &TrainedPredictor,
    source: &PolynomialSource,
    m: usize,
    rng: &mut Stream,
) -> Result<MeanEstimate> {
    let batch = source.sample_pairs(m, rng)?;
    let losses: Vec<f64> = batch
        .x
        .iter()
        .zip(&batch.y)
        .map(|(x, y)| (x - predictor.predict(*y)).powi(2))
        .collect();
    Ok(MeanEstimate::from_slice(&losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source_model::SideInfo;
    use crate::test_channel::params_from_distortion;

    fn channel8() -> TestChannelParams {
        params_from_distortion(16.0, 8.0).unwrap()
    }

    #[test]
    fn noiseless_interpolation_recovers_beta() {
        let ch = TestChannelParams::from_parts(0.5, 1e-12, 0.0).unwrap();
        let y = [-0.7, 0.1, 0.9];
        let beta = [2.0, 3.0, 1.0];
        let u: Vec<f64> = y.iter().map(|&y| ch.alpha() * polynomial_value(&beta, y)).collect();
        let p = ols_fit(&u, &y, &ch, 3).unwrap();
        for (h, b) in p.beta_hat.iter().zip(beta) {
            assert!((h - b).abs() < 1e-5);
        }
    }

    #[test]
    fn order_one_fit_is_scaled_mean() {
        let ch = channel8();
        let u = [1.0, 2.5, -0.5, 4.0, 3.25];
        let y = [0.3, -0.2, 0.9, 0.0, -0.6];
        let p = ols_fit(&u, &y, &ch, 1).unwrap();
        let expect = u.iter().sum::<f64>() / u.len() as f64 / ch.alpha();
        assert!((p.beta_hat[0] - expect).abs() < 1e-14 * expect.abs());
    }

    #[test]
    fn ols_error_paths() {
        let ch = channel8();
        assert_eq!(
            ols_fit(&[1.0, 2.0], &[0.1, 0.2], &ch, 3).unwrap_err(),
            Error::InsufficientData { needed: 3, got: 2 }
        );
        // Repeated design points make the Gram matrix singular.
        let y = [0.5; 10];
        let u = [1.0; 10];
        assert!(matches!(ols_fit(&u, &y, &ch, 3), Err(Error::IllConditioned { .. })));
        assert!(ols_fit(&[1.0], &[0.1, 0.2], &ch, 1).is_err());
    }

    #[test]
    fn conditional_cov_scalar_and_scaling() {
        let ch = channel8();
        let y = [0.1, -0.4, 0.8, 0.3];
        let c1 = conditional_cov(&y, &ch, 16.0, 1).unwrap();
        assert!((c1[(0, 0)] - 32.0 / 4.0).abs() < 1e-13);

        let c = conditional_cov(&y, &ch, 16.0, 2).unwrap();
        let doubled: Vec<f64> = y.iter().chain(&y).copied().collect();
        let c2 = conditional_cov(&doubled, &ch, 16.0, 2).unwrap();
        assert!((c2 * 2.0 - &c).norm() < 1e-12 * c.norm());
    }

    #[test]
    fn gen_error_conditional_examples() {
        let ch = channel8();
        let st = MomentMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let mut p = TrainedPredictor {
            beta_hat: vec![2.0, 3.0, 1.0],
            n_train: 10,
            channel: ch,
            empirical_sigma: DMatrix::identity(3, 3),
            condition: 1.0,
        };
        assert_eq!(gen_error_conditional(&p, &[2.0, 3.0, 1.0], &st, 16.0).unwrap(), 16.0);
        p.beta_hat = vec![1.0, 3.0, 1.0];
        assert_eq!(gen_error_conditional(&p, &[2.0, 3.0, 1.0], &st, 16.0).unwrap(), 17.0);
        assert!(gen_error_conditional(&p, &[2.0, 3.0], &st, 16.0).is_err());
    }

    #[test]
    fn expected_gen_error_with_matched_gram() {
        let ch = TestChannelParams::from_parts(0.5, 16.0, 16.0).unwrap();
        let m = PolynomialSource::reference().moment_matrix();
        let v = expected_gen_error(100, 16.0, &ch, &m, m.matrix()).unwrap();
        assert!((v - 16.96).abs() < 1e-12);
        let singular = DMatrix::from_element(3, 3, 1.0);
        assert!(matches!(
            expected_gen_error(100, 16.0, &ch, &m, &singular),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn upper_bound_identity_and_scaling() {
        let ch = channel8();
        let id = MomentMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let b = gen_error_upper_bound(50, 3, 16.0, &ch, &id).unwrap();
        assert!((b - (16.0 + 32.0 * 3.0 / 50.0)).abs() < 1e-12);

        let m = PolynomialSource::reference().moment_matrix();
        let b1 = gen_error_upper_bound(400, 3, 16.0, &ch, &m).unwrap() - 16.0;
        let b2 = gen_error_upper_bound(800, 3, 16.0, &ch, &m).unwrap() - 16.0;
        assert!((b1 / b2 - 2.0).abs() < 1e-12);

        let singular = MomentMatrix::from_matrix(DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(gen_error_upper_bound(10, 2, 16.0, &ch, &singular).is_err());
    }

    #[test]
    fn condition_constant_of_uniform_quadratic() {
        // Oracle: the moment matrix splits into the odd block {1/3} and the
        // even block [[1, 1/3], [1/3, 1/5]], whose eigenvalues are
        // 0.6 +- sqrt(0.36 - (1/5 - 1/9)).
        let c = condition_constant(&PolynomialSource::reference().moment_matrix()).unwrap();
        let disc = (0.36_f64 - (0.2 - 1.0 / 9.0)).sqrt();
        let oracle = (0.6 + disc) / (0.6 - disc);
        assert!((c - oracle).abs() < 1e-10 * oracle, "{c} vs {oracle}");
    }

    #[test]
    fn ruhe_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0]);
        assert!(ruhe_check(&id, &b).unwrap());
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!(ruhe_check(&a, &b).unwrap());
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(ruhe_check(&skew, &a), Err(Error::NotSymmetric("a")));
    }

    #[test]
    fn min_eig_examples() {
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        assert!(min_eig_bound_check(&b, &b).unwrap());
        let a = &b + DMatrix::identity(2, 2) * 0.25;
        assert!(min_eig_bound_check(&a, &b).unwrap());
        assert!(min_eig_bound_check(&b, &a).unwrap());
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(min_eig_bound_check(&b, &skew).is_err());
    }

    #[test]
    fn finite_sample_bound_collapses_to_asymptotic_constant() {
        let m = PolynomialSource::reference().moment_matrix();
        let b = finite_sample_trace_bound(&m, m.matrix()).unwrap();
        assert!((b - 3.0 * condition_constant(&m).unwrap()).abs() < 1e-9);
        let far = DMatrix::identity(3, 3) * 10.0;
        assert_eq!(finite_sample_trace_bound(&m, &far), None);
    }

    #[test]
    fn gaussian_side_info_fit_works() {
        let src = PolynomialSource::new(vec![1.0, -2.0], 4.0, SideInfo::Gaussian { variance: 2.0 }).unwrap();
        let ch = params_from_distortion(4.0, 1.0).unwrap();
        let mut rng = StreamFamily::new(9, "gauss-fit").stream(0);
        let p = train_once(&src, &ch, 20_000, &mut rng).unwrap();
        assert!((p.beta_hat[0] - 1.0).abs() < 0.1 && (p.beta_hat[1] + 2.0).abs() < 0.1);
    }
}
