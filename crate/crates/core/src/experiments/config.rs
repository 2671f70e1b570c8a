use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::finite_blocklength::{LossMode, DEFAULT_CACHE_SIZE, DEFAULT_INFO_LOSS_SAMPLES, MIN_MOMENT_SAMPLES};
use crate::source_model::{PolynomialSource, SideInfo};
use crate::test_channel::TestChannelParams;

/// Seed written into the shipped example configs.
pub const DOCUMENTED_SEED: u64 = 20_240_607;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AsymptoticSweep,
    Tradeoff,
    RateLossRegion,
    PropertySuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::AsymptoticSweep,
        ExperimentKind::Tradeoff,
        ExperimentKind::RateLossRegion,
        ExperimentKind::PropertySuite,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::AsymptoticSweep => "asymptotic-sweep",
            ExperimentKind::Tradeoff => "tradeoff",
            ExperimentKind::RateLossRegion => "rate-loss-region",
            ExperimentKind::PropertySuite => "property-suite",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A config file as written by hand: every key optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub loss_mode: Option<LossMode>,
    pub plot: Option<bool>,
    pub source: Option<SourceFile>,
    pub channel: Option<ChannelFile>,
    pub grids: Option<GridsFile>,
    pub samples: Option<SamplesFile>,
    pub faults: Option<Faults>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFile {
    pub k: Option<usize>,
    pub beta: Option<Vec<f64>>,
    pub sigma2: Option<f64>,
    pub y_dist: Option<SideInfo>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub distortion: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma_phi2: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsFile {
    pub n: Option<Vec<usize>>,
    pub epsilon: Option<Vec<f64>>,
    pub loss: Option<Vec<f64>>,
    pub distortion: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesFile {
    pub replicates: Option<usize>,
    pub inference: Option<usize>,
    pub info_loss: Option<usize>,
    pub gaussian_cache: Option<usize>,
    pub train_n: Option<usize>,
}

/// Deliberate encoder/decoder mismatches for negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Faults {
    /// The encoder applies `sigma_phi^2` scaled by this factor while the
    /// decoder keeps the nominal value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_phi2_factor: Option<f64>,
}

/// Values supplied on the command line; they win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub plot: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub k: usize,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub y_dist: SideInfo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Distortion { distortion: f64 },
    Parts { alpha: f64, sigma_phi2: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub n: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub loss: Vec<f64>,
    pub distortion: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub replicates: usize,
    pub inference: usize,
    pub info_loss: usize,
    pub gaussian_cache: usize,
    pub train_n: usize,
}

/// Fully resolved configuration; serializing it gives a file that reproduces
/// the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub loss_mode: LossMode,
    pub plot: bool,
    pub source: SourceSpec,
    pub channel: ChannelSpec,
    pub grids: Grids,
    pub samples: Samples,
    pub faults: Faults,
}

/// Loss and distortion grids scale with `sigma2`; at 16 they are
/// `15.5, 15.75, ..., 20` and `16 i / 21` for `i = 1..=20`.
fn default_grids(kind: ExperimentKind, sigma2: f64) -> Grids {
    let n = match kind {
        ExperimentKind::AsymptoticSweep => vec![200, 500, 1000, 5000],
        ExperimentKind::Tradeoff => vec![1000, 10_000],
        ExperimentKind::RateLossRegion => vec![1000, 2000],
        ExperimentKind::PropertySuite => vec![200, 1000],
    };
    Grids {
        n,
        epsilon: vec![0.1, 0.01],
        loss: (0..=18).map(|i| sigma2 * (31.0 / 32.0 + f64::from(i) / 64.0)).collect(),
        distortion: (1..=20).map(|i| sigma2 * f64::from(i) / 21.0).collect(),
    }
}

fn default_samples(kind: ExperimentKind) -> Samples {
    match kind {
        ExperimentKind::PropertySuite => Samples {
            replicates: 2000,
            inference: 100_000,
            info_loss: 20_000,
            gaussian_cache: 200_000,
            train_n: 10_000,
        },
        _ => Samples {
            replicates: 10_000,
            inference: 100_000,
            info_loss: DEFAULT_INFO_LOSS_SAMPLES,
            gaussian_cache: DEFAULT_CACHE_SIZE,
            train_n: 10_000,
        },
    }
}

struct Issues(Vec<String>);

impl Issues {
    fn check(&mut self, ok: bool, path: &str, msg: impl fmt::Display) {
        if !ok {
            self.0.push(format!("{path}: {msg}"));
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl ExperimentConfig {
    /// Paper setup for `kind` with the given seed.
    pub fn defaults(kind: ExperimentKind, seed: u64) -> Self {
        Self::resolve(ConfigFile::default(), kind, &Overrides { seed: Some(seed), ..Default::default() })
            .expect("built-in defaults are valid")
    }

    pub fn load(path: &Path, kind: ExperimentKind, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: cannot read: {e}", path.display())]))?;
        Self::from_toml_str(&text, kind, overrides)
    }

    pub fn from_toml_str(text: &str, kind: ExperimentKind, overrides: &Overrides) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            let msg = e.message().replace('\n', " ");
            Error::Config(vec![format!("<toml>: {}", msg.trim())])
        })?;
        Self::resolve(file, kind, overrides)
    }

    /// Fill defaults for `kind`, apply `overrides`, and validate, collecting
    /// every problem with its field path.
    pub fn resolve(file: ConfigFile, kind: ExperimentKind, overrides: &Overrides) -> Result<Self> {
        let mut issues = Issues(Vec::new());
        if let Some(k) = file.experiment {
            issues.check(k == kind, "experiment", format_args!("file is for `{k}` but `{kind}` was requested"));
        }
        let seed = overrides.seed.or(file.seed);
        issues.check(seed.is_some(), "seed", "missing; set `seed` in the config or pass --seed");

        let src = file.source.unwrap_or_default();
        let beta = src.beta.unwrap_or_else(|| vec![2.0, 3.0, 1.0]);
        let sigma2 = src.sigma2.unwrap_or(16.0);
        let y_dist = src.y_dist.unwrap_or(SideInfo::UniformSymmetric { half_width: 1.0 });
        issues.check(!beta.is_empty(), "source.beta", "must be non-empty");
        issues.check(beta.iter().all(|b| b.is_finite()), "source.beta", "entries must be finite");
        if let Some(k) = src.k {
            issues.check(k == beta.len(), "source.k", format_args!("is {k} but beta has {} entries", beta.len()));
        }
        issues.check(positive(sigma2), "source.sigma2", format_args!("must be positive, got {sigma2}"));
        if let Err(e) = y_dist.validate() {
            issues.0.push(format!("source.y_dist: {e}"));
        }

        let ch = file.channel.unwrap_or_default();
        let channel = match (ch.distortion, ch.alpha, ch.sigma_phi2) {
            (Some(d), None, None) => {
                issues.check(
                    d > 0.0 && d < sigma2,
                    "channel.distortion",
                    format_args!("must lie in (0, sigma2 = {sigma2}), got {d}"),
                );
                ChannelSpec::Distortion { distortion: d }
            }
            (None, Some(a), Some(s)) => {
                issues.check(a > 0.0 && a < 1.0, "channel.alpha", format_args!("must lie in (0, 1), got {a}"));
                issues.check(positive(s), "channel.sigma_phi2", format_args!("must be positive, got {s}"));
                ChannelSpec::Parts { alpha: a, sigma_phi2: s }
            }
            (None, None, None) => ChannelSpec::Distortion { distortion: 8.0 },
            _ => {
                issues.0.push("channel: give either `distortion` or both `alpha` and `sigma_phi2`".into());
                ChannelSpec::Distortion { distortion: 8.0 }
            }
        };

        let defaults = default_grids(kind, if positive(sigma2) { sigma2 } else { 16.0 });
        let g = file.grids.unwrap_or_default();
        let grids = Grids {
            n: g.n.unwrap_or(defaults.n),
            epsilon: g.epsilon.unwrap_or(defaults.epsilon),
            loss: g.loss.unwrap_or(defaults.loss),
            distortion: g.distortion.unwrap_or(defaults.distortion),
        };
        for (path, empty) in [
            ("grids.n", grids.n.is_empty()),
            ("grids.epsilon", grids.epsilon.is_empty()),
            ("grids.loss", grids.loss.is_empty()),
            ("grids.distortion", grids.distortion.is_empty()),
        ] {
            issues.check(!empty, path, "must be non-empty");
        }
        for (i, n) in grids.n.iter().enumerate() {
            issues.check(*n > beta.len().max(1), &format!("grids.n[{i}]"), "must exceed the model order k");
        }
        for (i, e) in grids.epsilon.iter().enumerate() {
            issues.check(*e > 0.0 && *e < 1.0, &format!("grids.epsilon[{i}]"), format_args!("must lie in (0, 1), got {e}"));
        }
        for (i, l) in grids.loss.iter().enumerate() {
            issues.check(positive(*l), &format!("grids.loss[{i}]"), format_args!("must be positive, got {l}"));
        }
        issues.check(grids.loss.windows(2).all(|w| w[0] <= w[1]), "grids.loss", "must be sorted ascending");
        for (i, d) in grids.distortion.iter().enumerate() {
            issues.check(
                *d > 0.0 && *d < sigma2,
                &format!("grids.distortion[{i}]"),
                format_args!("must lie in (0, sigma2 = {sigma2}), got {d}"),
            );
        }

        let defaults = default_samples(kind);
        let s = file.samples.unwrap_or_default();
        let samples = Samples {
            replicates: s.replicates.unwrap_or(defaults.replicates),
            inference: s.inference.unwrap_or(defaults.inference),
            info_loss: s.info_loss.unwrap_or(defaults.info_loss),
            gaussian_cache: s.gaussian_cache.unwrap_or(defaults.gaussian_cache),
            train_n: s.train_n.unwrap_or(defaults.train_n),
        };
        issues.check(samples.replicates >= 2, "samples.replicates", "must be at least 2");
        issues.check(samples.inference >= 2, "samples.inference", "must be at least 2");
        issues.check(
            samples.info_loss >= MIN_MOMENT_SAMPLES,
            "samples.info_loss",
            format_args!("must be at least {MIN_MOMENT_SAMPLES}"),
        );
        issues.check(samples.gaussian_cache >= 1, "samples.gaussian_cache", "must be at least 1");
        issues.check(samples.train_n > beta.len(), "samples.train_n", "must exceed the model order k");

        let faults = file.faults.unwrap_or_default();
        if let Some(f) = faults.sigma_phi2_factor {
            issues.check(positive(f), "faults.sigma_phi2_factor", format_args!("must be positive, got {f}"));
        }

        if !issues.0.is_empty() {
            return Err(Error::Config(issues.0));
        }
        let config = Self {
            experiment: kind,
            seed: seed.expect("checked above"),
            output_dir: overrides
                .output_dir
                .clone()
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from("output").join(kind.as_str())),
            loss_mode: file.loss_mode.unwrap_or_default(),
            plot: overrides.plot.or(file.plot).unwrap_or(true),
            source: SourceSpec {
                k: beta.len(),
                beta,
                sigma2,
                y_dist,
            },
            channel,
            grids,
            samples,
            faults,
        };
        // Catch anything the model constructors reject beyond the checks above.
        config.source_model().map_err(|e| Error::Config(vec![format!("source: {e}")]))?;
        config.channel_params().map_err(|e| Error::Config(vec![format!("channel: {e}")]))?;
        Ok(config)
    }

    pub fn source_model(&self) -> Result<PolynomialSource> {
        PolynomialSource::new(self.source.beta.clone(), self.source.sigma2, self.source.y_dist)
    }

    pub fn channel_params(&self) -> Result<TestChannelParams> {
        match self.channel {
            ChannelSpec::Distortion { distortion } => TestChannelParams::from_distortion(self.source.sigma2, distortion),
            ChannelSpec::Parts { alpha, sigma_phi2 } => TestChannelParams::from_parts(alpha, sigma_phi2, self.source.sigma2),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the resolved config text. The output directory is
    /// excluded so relocated reruns share a hash.
    pub fn sha256(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_seed() -> Overrides {
        Overrides { seed: Some(1), ..Default::default() }
    }

    #[test]
    fn defaults_are_the_reference_setup() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::defaults(kind, 7);
            assert_eq!(c.source.beta, vec![2.0, 3.0, 1.0]);
            assert_eq!(c.source_model().unwrap(), PolynomialSource::reference());
            assert_eq!(c.channel_params().unwrap().distortion(), 8.0);
        }
        assert_eq!(ExperimentConfig::defaults(ExperimentKind::Tradeoff, 1).grids.distortion.len(), 20);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::defaults(ExperimentKind::RateLossRegion, 99);
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml_str(&text, ExperimentKind::RateLossRegion, &Overrides::default()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.sha256(), c.sha256());
    }

    #[test]
    fn parts_channel_round_trips() {
        let text = "seed = 3\n[channel]\nalpha = 0.5\nsigma_phi2 = 16.0\n";
        let c = ExperimentConfig::from_toml_str(text, ExperimentKind::Tradeoff, &Overrides::default()).unwrap();
        assert_eq!(c.channel, ChannelSpec::Parts { alpha: 0.5, sigma_phi2: 16.0 });
        let back = ExperimentConfig::from_toml_str(&c.to_toml(), ExperimentKind::Tradeoff, &Overrides::default()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let err = ExperimentConfig::from_toml_str("", ExperimentKind::Tradeoff, &Overrides::default()).unwrap_err();
        let Error::Config(issues) = err else { panic!("{err:?}") };
        assert!(issues[0].starts_with("seed:"));
    }

    #[test]
    fn override_wins_over_file() {
        let c = ExperimentConfig::from_toml_str("seed = 5", ExperimentKind::Tradeoff, &Overrides { seed: Some(9), ..Default::default() })
            .unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn every_problem_is_listed_with_its_path() {
        let text = r#"
            experiment = "tradeoff"
            [source]
            beta = [1.0, 2.0]
            k = 3
            sigma2 = 4.0
            [channel]
            distortion = 5.0
            [grids]
            epsilon = [0.5, 1.5]
            distortion = []
        "#;
        let err = ExperimentConfig::from_toml_str(text, ExperimentKind::AsymptoticSweep, &with_seed()).unwrap_err();
        let Error::Config(issues) = err else { panic!("{err:?}") };
        for path in ["experiment:", "source.k:", "channel.distortion:", "grids.epsilon[1]:", "grids.distortion:"] {
            assert!(issues.iter().any(|i| i.starts_with(path)), "{path} missing from {issues:?}");
        }
    }

    #[test]
    fn unknown_keys_and_half_channels_rejected() {
        assert!(ExperimentConfig::from_toml_str("seed = 1\nbogus = 2", ExperimentKind::Tradeoff, &with_seed()).is_err());
        let err = ExperimentConfig::from_toml_str("[channel]\nalpha = 0.5", ExperimentKind::Tradeoff, &with_seed()).unwrap_err();
        assert!(matches!(err, Error::Config(ref v) if v[0].starts_with("channel:")));
    }

    #[test]
    fn gaussian_side_info_parses() {
        let text = "[source]\nbeta = [1.0, 2.0]\nsigma2 = 2.0\n[source.y_dist]\nkind = \"gaussian\"\nvariance = 3.0\n[channel]\ndistortion = 1.0";
        let c = ExperimentConfig::from_toml_str(text, ExperimentKind::AsymptoticSweep, &with_seed()).unwrap();
        assert_eq!(c.source.y_dist, SideInfo::Gaussian { variance: 3.0 });
        assert_eq!(c.source.k, 2);
    }
}
