use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::csv::{render, Cell};
use crate::error::Result;
use crate::regression::{gen_error_conditional, gen_error_upper_bound, simulate_gen_error, train_once};
use crate::rng::StreamFamily;
use crate::source_model::PolynomialSource;
use crate::stats::MeanEstimate;
use crate::test_channel::{conditional_distortion_rate, raginsky_sqrt_bound, rates, TestChannelParams};

pub const SWEEP_HEADER: [&str; 7] = [
    "n",
    "mc_gen_error_mean",
    "mc_gen_error_stderr",
    "closed_form_eq14",
    "upper_bound_eq17",
    "raginsky_sqrt_bound_squared",
    "sigma2",
];

pub const TRADEOFF_HEADER: [&str; 6] = [
    "D",
    "r_conditional",
    "r_wz",
    "empirical_distortion_true_beta",
    "empirical_distortion_trained",
    "gen_error_at_same_rate",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub mc_gen_error_mean: f64,
    pub mc_gen_error_stderr: f64,
    /// Replicate mean of the closed-form expected error, each replicate
    /// using its own empirical Gram matrix.
    pub closed_form: f64,
    pub closed_form_stderr: f64,
    pub upper_bound: f64,
    /// Squared generic bound at the channel's rate.
    pub raginsky_squared: f64,
    pub sigma2: f64,
    pub min_gen_error: f64,
}

impl SweepRow {
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Int(self.n as u64),
            Cell::Float(self.mc_gen_error_mean),
            Cell::Float(self.mc_gen_error_stderr),
            Cell::Float(self.closed_form),
            Cell::Float(self.upper_bound),
            Cell::Float(self.raginsky_squared),
            Cell::Float(self.sigma2),
        ]
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    render(&SWEEP_HEADER, rows.iter().map(SweepRow::cells))
}

/// Generalization error against training length, one row per `grids.n`.
/// Replicate `i` at length `n` draws from stream `i` of the family labelled
/// by `n`.
pub fn run_asymptotic_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let source = config.source_model()?;
    let channel = config.channel_params()?;
    let root = StreamFamily::new(config.seed, "asymptotic-sweep");
    let rate = rates(source.sigma2(), &channel).r_wz;
    let raginsky = raginsky_sqrt_bound(rate, source.sigma2())?.powi(2);
    config
        .grids
        .n
        .iter()
        .map(|&n| {
            let report = simulate_gen_error(&source, &channel, n, config.samples.replicates, &root.child(&format!("n={n}")))?;
            Ok(SweepRow {
                n,
                mc_gen_error_mean: report.mc_estimate,
                mc_gen_error_stderr: report.mc_std_error,
                closed_form: report.closed_form_conditional,
                closed_form_stderr: report.closed_form_conditional_std_error,
                upper_bound: report.upper_bound,
                raginsky_squared: raginsky,
                sigma2: report.sigma2,
                min_gen_error: report.min_gen_error,
            })
        })
        .collect()
}

/// `(squared generic bound, regression upper bound)` when the channel is
/// tuned to rate `rate`, i.e. `D = sigma^2 2^(-2R)`.
pub fn bounds_at_rate(source: &PolynomialSource, n: usize, rate: f64) -> Result<(f64, f64)> {
    let sigma2 = source.sigma2();
    let channel = TestChannelParams::from_distortion(sigma2, conditional_distortion_rate(rate, sigma2))?;
    let raginsky = raginsky_sqrt_bound(rate, sigma2)?.powi(2);
    let upper = gen_error_upper_bound(n, source.k(), sigma2, &channel, &source.moment_matrix())?;
    Ok((raginsky, upper))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub distortion: f64,
    pub r_conditional: f64,
    pub r_wz: f64,
    pub true_beta: MeanEstimate,
    pub trained: MeanEstimate,
    pub gen_error: f64,
}

impl TradeoffRow {
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Float(self.distortion),
            Cell::Float(self.r_conditional),
            Cell::Float(self.r_wz),
            Cell::Float(self.true_beta.mean),
            Cell::Float(self.trained.mean),
            Cell::Float(self.gen_error),
        ]
    }
}

pub fn tradeoff_csv(rows: &[TradeoffRow]) -> String {
    render(&TRADEOFF_HEADER, rows.iter().map(TradeoffRow::cells))
}

/// Reconstruction distortion `E[(X - X_hat)^2]` on `m` fresh pairs sent
/// through `encoder`, decoded with the true and the trained coefficients.
pub(crate) fn reconstruction_distortion(
    source: &PolynomialSource,
    encoder: &TestChannelParams,
    decoder: &TestChannelParams,
    beta_hat: &[f64],
    m: usize,
    rng: &mut crate::rng::Stream,
) -> Result<(MeanEstimate, MeanEstimate)> {
    let batch = source.sample_pairs(m, rng)?;
    let u = encoder.apply(&batch.x, rng);
    let sq = |xh: Vec<f64>| -> Vec<f64> { batch.x.iter().zip(xh).map(|(x, h)| (x - h).powi(2)).collect() };
    let exact = sq(decoder.reconstruct(&u, &batch.y, source.beta())?);
    let trained = sq(decoder.reconstruct(&u, &batch.y, beta_hat)?);
    Ok((MeanEstimate::from_slice(&exact), MeanEstimate::from_slice(&trained)))
}

/// Rates and distortions across `grids.distortion`, with the predictor
/// trained on `samples.train_n` pairs.
pub fn run_tradeoff(config: &ExperimentConfig) -> Result<Vec<TradeoffRow>> {
    let source = config.source_model()?;
    let sigma2 = source.sigma2();
    let moment = source.moment_matrix();
    let root = StreamFamily::new(config.seed, "tradeoff");
    config
        .grids
        .distortion
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let channel = TestChannelParams::from_distortion(sigma2, d)?;
            let family = root.child(&format!("D[{i}]"));
            let predictor = train_once(&source, &channel, config.samples.train_n, &mut family.stream(0))?;
            let (true_beta, trained) = reconstruction_distortion(
                &source,
                &channel,
                &channel,
                &predictor.beta_hat,
                config.samples.inference,
                &mut family.stream(1),
            )?;
            let r = rates(sigma2, &channel);
            Ok(TradeoffRow {
                distortion: d,
                r_conditional: r.r_conditional,
                r_wz: r.r_wz,
                true_beta,
                trained,
                gen_error: gen_error_conditional(&predictor, source.beta(), &moment, sigma2)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentKind;

    #[test]
    fn sweep_rows_follow_the_grid() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::AsymptoticSweep, 11);
        c.grids.n = vec![50, 400];
        c.samples.replicates = 400;
        let rows = run_asymptotic_sweep(&c).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![50, 400]);
        assert!(rows[0].mc_gen_error_mean > rows[1].mc_gen_error_mean);
        for r in &rows {
            assert!(r.min_gen_error >= 16.0);
            assert!(r.upper_bound >= r.closed_form);
        }
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("n,mc_gen_error_mean,mc_gen_error_stderr,closed_form_eq14,upper_bound_eq17,raginsky_sqrt_bound_squared,sigma2\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn bounds_at_rate_endpoints() {
        let src = PolynomialSource::reference();
        let (rag, up) = bounds_at_rate(&src, 200, 1.0).unwrap();
        assert!((rag - 64.0).abs() < 1e-12);
        assert!(up > 16.0 && up < rag);
        assert!(bounds_at_rate(&src, 200, 0.0).is_err());
    }

    #[test]
    fn tradeoff_rows_match_grid() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::Tradeoff, 5);
        c.grids.distortion = vec![2.0, 8.0];
        c.samples.inference = 20_000;
        c.samples.train_n = 500;
        let rows = run_tradeoff(&c).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!((r.r_conditional - r.r_wz).abs() < 1e-12);
            assert!(r.true_beta.within(r.distortion, 4.0), "{:?}", r.true_beta);
            assert!(r.gen_error >= 16.0);
        }
        assert!(tradeoff_csv(&rows).starts_with("D,r_conditional,r_wz,"));
    }
}
