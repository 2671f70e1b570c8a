//! Fixtures shared by the criterion benchmarks in `benches/`.

use rateloss::finite_blocklength::{estimate_moments, sample_info_loss, DispersionRegion, GaussianCache, LossMode, MomentSummary};
use rateloss::{PolynomialSource, StreamFamily, TestChannelParams};

pub const SEED: u64 = 7;

/// Reference source with the `D = 8` channel.
pub fn reference() -> (PolynomialSource, TestChannelParams) {
    let source = PolynomialSource::reference();
    let channel = TestChannelParams::from_distortion(source.sigma2(), 8.0).expect("D = 8 is feasible");
    (source, channel)
}

/// Training pairs `(u, y)` of length `n` through the reference channel.
pub fn training_set(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (source, channel) = reference();
    let mut rng = StreamFamily::new(SEED, "bench-training").stream(0);
    let batch = source.sample_pairs(n, &mut rng).expect("n >= 1");
    (channel.apply(&batch.x, &mut rng), batch.y)
}

/// Moments from `m` info-loss samples at blocklength `n`, and a dispersion
/// region over a cache of `cache` vectors.
pub fn frontier_fixture(n: usize, m: usize, cache: usize) -> (MomentSummary, DispersionRegion) {
    let (source, channel) = reference();
    let fam = StreamFamily::new(SEED, "bench-frontier");
    let batch = sample_info_loss(&source, &channel, n, m, LossMode::PerSample, &fam).expect("reference model");
    let moments = estimate_moments(&batch.samples).expect("enough samples");
    let cache = GaussianCache::draw(cache, &fam.child("cache")).expect("non-empty cache");
    let region = DispersionRegion::new(&moments.v, &cache).expect("PSD covariance");
    (moments, region)
}
