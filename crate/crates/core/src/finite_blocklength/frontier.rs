use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dispersion::{DispersionRegion, GaussianCache, DEFAULT_CACHE_SIZE};
use super::info_loss::{estimate_moments, sample_info_loss, InfoLossBatch, LossMode, MomentSummary, DEFAULT_INFO_LOSS_SAMPLES};
use crate::error::{invalid, Error, Result};
use crate::rng::StreamFamily;
use crate::source_model::PolynomialSource;
use crate::test_channel::TestChannelParams;

/// Rays swept across the `(b1, b2)` quadrant.
pub const SWEEP_DIRECTIONS: usize = 64;
/// Bisection stops once the radius bracket is this narrow (in units of the
/// marginal standard deviations).
pub const RADIUS_TOL: f64 = 1e-4;
pub const MAX_BISECTIONS: usize = 60;
/// Largest allowed gap between the probability at a boundary point and
/// `1 - epsilon` under the default cache.
pub const BOUNDARY_PROB_TOL: f64 = 0.003;

const MAX_BRACKET_DOUBLINGS: usize = 64;

/// `2 log2(n) / n`.
pub fn blocklength_correction(n: usize) -> f64 {
    let n = n as f64;
    2.0 * n.log2() / n
}

/// One point of a finite-blocklength frontier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateLossPoint {
    pub l: f64,
    /// Bits per sample; `NaN` when infeasible.
    pub rate: f64,
    pub n: usize,
    pub epsilon: f64,
    pub feasible: bool,
    /// The minimizing shift `b`, when feasible.
    pub boundary: Option<[f64; 3]>,
}

impl RateLossPoint {
    fn infeasible(l: f64, n: usize, epsilon: f64) -> Self {
        Self {
            l,
            rate: f64::NAN,
            n,
            epsilon,
            feasible: false,
            boundary: None,
        }
    }
}

/// Points with `B3 <= b3`, as two coordinate columns.
struct Slice {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Slice {
    fn new(region: &DispersionRegion, b3: f64) -> Self {
        let [x, y, z] = region.coords();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for ((x, y), z) in x.iter().zip(y).zip(z) {
            if *z <= b3 {
                xs.push(*x);
                ys.push(*y);
            }
        }
        Self { x: xs, y: ys }
    }

    /// Smallest `r` with `#{x <= c0 + r d0, y <= c1 + r d1} >= need`: each
    /// point enters the orthant at `max((x - c0)/d0, (y - c1)/d1)`.
    fn entry_threshold(&self, corner: [f64; 2], d: [f64; 2], need: usize) -> f64 {
        let mut r: Vec<f64> = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| ((x - corner[0]) / d[0]).max((y - corner[1]) / d[1]))
            .collect();
        *r.select_nth_unstable_by(need - 1, f64::total_cmp).1
    }
}

/// Smallest radius on the dyadic bracket grid where `hit` turns true; `hit`
/// must be monotone and false at 0.
fn boundary_radius<F: Fn(f64) -> bool>(hit: F) -> Result<f64> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut doublings = 0;
    while !hit(hi) {
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::NumericalFailure("boundary radius could not be bracketed".into()));
        }
        lo = hi;
        hi *= 2.0;
    }
    let mut iterations = 0;
    while hi - lo > RADIUS_TOL {
        if iterations == MAX_BISECTIONS {
            return Err(Error::NumericalFailure(format!(
                "bisection bracket still {:e} wide after {MAX_BISECTIONS} iterations",
                hi - lo
            )));
        }
        let mid = 0.5 * (lo + hi);
        if hit(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(hi)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

/// Boundary points `(b1, b2, b3)` of the dispersion region at fixed `b3`, one
/// per sweep direction. Empty when even `b1, b2 -> inf` cannot reach
/// probability `1 - epsilon`.
///
/// Rays start from a corner placed a quarter standard deviation below the
/// `min(1/2, 1 - epsilon)` marginal quantiles, which lies outside the region,
/// and fan out over the open quadrant in standardized coordinates.
pub fn boundary_sweep(region: &DispersionRegion, epsilon: f64, b3: f64) -> Result<Vec<[f64; 3]>> {
    check_epsilon(epsilon)?;
    let total = region.len();
    let need = (((1.0 - epsilon) * total as f64).ceil() as usize).max(1);
    let slice = Slice::new(region, b3);
    if slice.x.len() < need {
        return Ok(Vec::new());
    }

    let level = (1.0 - epsilon).min(0.5);
    let scale = [region.scale(0), region.scale(1)];
    let corner = [0, 1].map(|i| region.marginal_quantile(i, level) - 0.25 * scale[i]);

    (0..SWEEP_DIRECTIONS)
        .into_par_iter()
        .map(|j| {
            let theta = (j as f64 + 0.5) / SWEEP_DIRECTIONS as f64 * std::f64::consts::FRAC_PI_2;
            let d = [scale[0] * theta.cos(), scale[1] * theta.sin()];
            let threshold = slice.entry_threshold(corner, d, need);
            let r = boundary_radius(|r| r >= threshold)?;
            Ok([corner[0] + r * d[0], corner[1] + r * d[1], b3])
        })
        .collect()
}

/// Achievable rate at blocklength `n`, excess probability `epsilon` and loss
/// level `l`.
///
/// `b3` is pinned at its largest admissible value
/// `sqrt(n) (l - J3 - 2 log2(n)/n)` and `b1 + b2` is minimized along the
/// boundary `{Pr(B <= (b1, b2, b3)) = 1 - epsilon}`. The rate is
/// `J1 + J2 + (b1 + b2)/sqrt(n) + 2 * 2 log2(n)/n`, floored at 0.
pub fn rate_loss_bound(
    moments: &MomentSummary,
    n: usize,
    epsilon: f64,
    l: f64,
    region: &DispersionRegion,
) -> Result<RateLossPoint> {
    check_epsilon(epsilon)?;
    if n < 2 {
        return Err(invalid(format!("blocklength must be at least 2, got {n}")));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(invalid(format!("loss level must be positive and finite, got {l}")));
    }
    let sqrt_n = (n as f64).sqrt();
    let correction = blocklength_correction(n);
    let b3 = sqrt_n * (l - moments.j[2] - correction);

    let best = boundary_sweep(region, epsilon, b3)?
        .into_iter()
        .min_by(|a, b| (a[0] + a[1]).total_cmp(&(b[0] + b[1])));
    Ok(match best {
        None => RateLossPoint::infeasible(l, n, epsilon),
        Some(b) => RateLossPoint {
            l,
            rate: (moments.rate() + (b[0] + b[1]) / sqrt_n + 2.0 * correction).max(0.0),
            n,
            epsilon,
            feasible: true,
            boundary: Some(b),
        },
    })
}

/// Sample sizes and the loss-coordinate convention for frontier runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierConfig {
    pub info_loss_samples: usize,
    pub cache_size: usize,
    pub loss_mode: LossMode,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        Self {
            info_loss_samples: DEFAULT_INFO_LOSS_SAMPLES,
            cache_size: DEFAULT_CACHE_SIZE,
            loss_mode: LossMode::PerSample,
        }
    }
}

/// Moments and dispersion region for one `(source, channel, n)`.
#[derive(Clone, Debug)]
pub struct FrontierModel {
    pub batch: InfoLossBatch,
    pub moments: MomentSummary,
    pub region: DispersionRegion,
    /// `L* = sigma^2`: no predictor has generalization error below it.
    pub loss_floor: f64,
}

impl FrontierModel {
    pub fn build(
        source: &PolynomialSource,
        channel: &TestChannelParams,
        n: usize,
        config: &FrontierConfig,
        family: &StreamFamily,
        cache: &GaussianCache,
    ) -> Result<Self> {
        let batch = sample_info_loss(source, channel, n, config.info_loss_samples, config.loss_mode, family)?;
        let moments = estimate_moments(&batch.samples)?;
        let region = DispersionRegion::new(&moments.v, cache)?;
        Ok(Self {
            batch,
            moments,
            region,
            loss_floor: source.sigma2(),
        })
    }

    pub fn n(&self) -> usize {
        self.batch.n
    }

    /// Levels below `L*` are infeasible for every `epsilon < 1`, since the
    /// generalization error never drops below it.
    pub fn point(&self, epsilon: f64, l: f64) -> Result<RateLossPoint> {
        let p = rate_loss_bound(&self.moments, self.n(), epsilon, l, &self.region)?;
        if l < self.loss_floor {
            return Ok(RateLossPoint::infeasible(l, self.n(), epsilon));
        }
        Ok(p)
    }

    pub fn curve(&self, epsilon: f64, l_grid: &[f64]) -> Result<Vec<RateLossPoint>> {
        check_l_grid(l_grid)?;
        l_grid.iter().map(|&l| self.point(epsilon, l)).collect()
    }
}

fn check_l_grid(l_grid: &[f64]) -> Result<()> {
    if l_grid.is_empty() {
        return Err(invalid("loss grid must be non-empty"));
    }
    if l_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(invalid("loss grid values must be positive and finite"));
    }
    if l_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("loss grid must be sorted ascending"));
    }
    Ok(())
}

/// Frontier for one `(n, epsilon)`: one moment estimate and one Gaussian
/// cache shared by every grid point.
pub fn region_curve(
    source: &PolynomialSource,
    channel: &TestChannelParams,
    n: usize,
    epsilon: f64,
    l_grid: &[f64],
    config: &FrontierConfig,
    family: &StreamFamily,
) -> Result<Vec<RateLossPoint>> {
    check_l_grid(l_grid)?;
    check_epsilon(epsilon)?;
    let cache = GaussianCache::draw(config.cache_size, &family.child("gaussian-cache"))?;
    let model = FrontierModel::build(source, channel, n, config, &family.child("info-loss"), &cache)?;
    model.curve(epsilon, l_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_blocklength::InfoLossSample;
    use nalgebra::DMatrix;

    fn synthetic(j: [f64; 3], v: DMatrix<f64>) -> MomentSummary {
        MomentSummary { j, v, m_samples: 100_000 }
    }

    fn region(v: &DMatrix<f64>, size: usize) -> DispersionRegion {
        let cache = GaussianCache::draw(size, &StreamFamily::new(2, "frontier-cache")).unwrap();
        DispersionRegion::new(v, &cache).unwrap()
    }

    fn example_v() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.4, -0.1, 0.05, -0.1, 0.9, 0.1, 0.05, 0.1, 500.0])
    }

    #[test]
    fn bisection_lands_on_level_set() {
        let v = example_v();
        let r = region(&v, 200_000);
        for eps in [0.1, 0.01] {
            let pts = boundary_sweep(&r, eps, 60.0).unwrap();
            assert_eq!(pts.len(), SWEEP_DIRECTIONS);
            for b in pts {
                let p = r.prob(b);
                assert!((p - (1.0 - eps)).abs() <= BOUNDARY_PROB_TOL, "eps {eps}: {p} at {b:?}");
            }
        }
    }

    #[test]
    fn epsilon_out_of_range_is_rejected() {
        let v = example_v();
        let r = region(&v, 1000);
        let m = synthetic([-0.2, 0.7, 16.0], v);
        assert!(rate_loss_bound(&m, 100, 0.0, 20.0, &r).is_err());
        assert!(rate_loss_bound(&m, 100, 1.0, 20.0, &r).is_err());
        assert!(rate_loss_bound(&m, 1, 0.1, 20.0, &r).is_err());
    }

    #[test]
    fn loss_below_mean_is_infeasible() {
        let v = example_v();
        let r = region(&v, 50_000);
        let m = synthetic([-0.2, 0.7, 16.5], v);
        let p = rate_loss_bound(&m, 1000, 0.1, 15.0, &r).unwrap();
        assert!(!p.feasible && p.rate.is_nan() && p.boundary.is_none());
    }

    #[test]
    fn monotone_in_loss_and_epsilon() {
        let v = example_v();
        let r = region(&v, 100_000);
        let m = synthetic([-0.2, 0.7, 16.5], v);
        let mut prev = [f64::INFINITY; 2];
        for i in 0..30 {
            let l = 16.5 + 0.2 * i as f64;
            let loose = rate_loss_bound(&m, 1000, 0.1, l, &r).unwrap();
            let tight = rate_loss_bound(&m, 1000, 0.01, l, &r).unwrap();
            if tight.feasible {
                assert!(loose.feasible && loose.rate <= tight.rate);
            }
            for (k, p) in [loose, tight].iter().enumerate() {
                if p.feasible {
                    assert!(p.rate <= prev[k], "l={l}");
                    prev[k] = p.rate;
                }
            }
        }
    }

    #[test]
    fn huge_blocklength_approaches_first_order_rate() {
        let v = example_v();
        let r = region(&v, 100_000);
        let m = synthetic([-0.2, 0.7, 16.5], v);
        let p = rate_loss_bound(&m, 100_000_000, 0.1, 17.0, &r).unwrap();
        assert!(p.feasible);
        assert!((p.rate - 0.5).abs() < 1e-3, "{}", p.rate);
    }

    #[test]
    fn model_enforces_loss_floor() {
        let src = PolynomialSource::reference();
        let ch = TestChannelParams::from_distortion(16.0, 8.0).unwrap();
        let cfg = FrontierConfig {
            info_loss_samples: 2000,
            cache_size: 20_000,
            loss_mode: LossMode::Conditional,
        };
        let fam = StreamFamily::new(4, "floor");
        let cache = GaussianCache::draw(cfg.cache_size, &fam).unwrap();
        let model = FrontierModel::build(&src, &ch, 200, &cfg, &fam, &cache).unwrap();
        assert!(!model.point(0.9, 15.99).unwrap().feasible);
        assert!(model.curve(0.1, &[17.0, 16.0]).is_err());
    }

    #[test]
    fn synthetic_samples_feed_the_pipeline() {
        let samples: Vec<InfoLossSample> = (0..2000)
            .map(|i| {
                let t = i as f64 / 2000.0;
                InfoLossSample { v1: -0.1 + 0.2 * t, v2: 0.6 - 0.1 * t, v3: 16.0 + t }
            })
            .collect();
        let m = estimate_moments(&samples).unwrap();
        let r = DispersionRegion::new(&m.v, &GaussianCache::draw(10_000, &StreamFamily::new(1, "s")).unwrap()).unwrap();
        let p = rate_loss_bound(&m, 500, 0.1, 18.0, &r).unwrap();
        assert!(p.feasible && p.rate.is_finite() && p.rate >= 0.0);
    }
}
