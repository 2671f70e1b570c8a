//! Reproducible experiment runs: configuration, runners, CSV/SVG/JSON
//! artifacts and a checksummed run manifest.
//!
//! Every run writes `config.resolved.toml` (feed it back with the same seed
//! to reproduce the outputs byte for byte) and `manifest.toml`, which is
//! written with status `running` before any work starts and finalized with
//! output checksums afterwards.

pub mod config;
pub mod csv;
pub mod manifest;
pub mod property_suite;
pub mod region;
pub mod sweep;

use std::path::PathBuf;

pub use config::{ChannelSpec, ConfigFile, ExperimentConfig, ExperimentKind, Faults, Grids, Overrides, Samples, SourceSpec, DOCUMENTED_SEED};
pub use manifest::{OutputChecksum, RunManifest, RunStatus, MANIFEST_FILE, RESOLVED_CONFIG_FILE};
pub use property_suite::{run_property_suite, PropertyEntry, PropertyReport};
pub use region::{region_csv, region_svg, run_rate_loss_region, RegionOutcome, RegionRow, REGION_HEADER};
pub use sweep::{
    bounds_at_rate, run_asymptotic_sweep, run_tradeoff, sweep_csv, tradeoff_csv, SweepRow, TradeoffRow, SWEEP_HEADER,
    TRADEOFF_HEADER,
};

use crate::error::Result;

pub const SWEEP_FILE: &str = "asymptotic_sweep.csv";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";
pub const REGION_FILE: &str = "rate_loss_region.csv";
pub const REGION_PLOT_FILE: &str = "rate_loss_region.svg";
pub const PROPERTY_FILE: &str = "property_suite.json";

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
    /// Failed property-suite entries; zero for the other experiments.
    pub invariant_failures: usize,
}

struct Artifacts {
    files: Vec<(&'static str, Vec<u8>)>,
    notes: Vec<String>,
    invariant_failures: usize,
}

fn execute(config: &ExperimentConfig) -> Result<Artifacts> {
    let mut notes = Vec::new();
    let mut invariant_failures = 0;
    let files = match config.experiment {
        ExperimentKind::AsymptoticSweep => {
            vec![(SWEEP_FILE, sweep_csv(&run_asymptotic_sweep(config)?).into_bytes())]
        }
        ExperimentKind::Tradeoff => vec![(TRADEOFF_FILE, tradeoff_csv(&run_tradeoff(config)?).into_bytes())],
        ExperimentKind::RateLossRegion => {
            let outcome = run_rate_loss_region(config)?;
            for (n, m, rejected) in &outcome.moments {
                notes.push(format!(
                    "n={n}: J = [{:.6}, {:.6}, {:.6}], {} samples, {rejected} rejected draws",
                    m.j[0], m.j[1], m.j[2], m.m_samples
                ));
            }
            for r in outcome.failures() {
                notes.push(format!(
                    "numerical failure at n={} epsilon={} l={}: {}",
                    r.n,
                    r.epsilon,
                    r.l,
                    r.failure.as_deref().unwrap_or_default()
                ));
            }
            let mut files = vec![(REGION_FILE, region_csv(&outcome.rows).into_bytes())];
            if config.plot {
                files.push((REGION_PLOT_FILE, region_svg(&outcome).into_bytes()));
            }
            files
        }
        ExperimentKind::PropertySuite => {
            let report = run_property_suite(config)?;
            invariant_failures = report.failed;
            for e in report.entries.iter().filter(|e| !e.passed) {
                notes.push(format!("invariant failed: {} (statistic {}, threshold {})", e.name, e.statistic, e.threshold));
            }
            vec![(PROPERTY_FILE, report.to_json().into_bytes())]
        }
    };
    Ok(Artifacts {
        files,
        notes,
        invariant_failures,
    })
}

/// Run `config` and write its artifacts under `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(RESOLVED_CONFIG_FILE), config.to_toml())?;
    let mut manifest = RunManifest::begin(config);
    manifest.write(&dir)?;

    match execute(config) {
        Ok(artifacts) => {
            for (name, bytes) in &artifacts.files {
                std::fs::write(dir.join(name), bytes)?;
                manifest.record_output(name, bytes);
            }
            manifest.notes = artifacts.notes;
            manifest.finish(RunStatus::Complete);
            manifest.write(&dir)?;
            Ok(RunSummary {
                output_dir: dir,
                manifest,
                invariant_failures: artifacts.invariant_failures,
            })
        }
        Err(e) => {
            manifest.notes.push(format!("{}: {e}", e.code()));
            manifest.finish(RunStatus::Failed);
            manifest.write(&dir)?;
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_writes_manifest_and_checksums() {
        let dir = std::env::temp_dir().join(format!("rateloss-run-{}", std::process::id()));
        let mut c = ExperimentConfig::defaults(ExperimentKind::Tradeoff, 4);
        c.output_dir = dir.clone();
        c.grids.distortion = vec![4.0, 12.0];
        c.samples.inference = 2000;
        c.samples.train_n = 100;
        let summary = run(&c).unwrap();
        assert_eq!(summary.manifest.status, RunStatus::Complete);
        assert_eq!(summary.manifest.outputs.len(), 1);
        let on_disk = RunManifest::read(&dir).unwrap();
        assert_eq!(on_disk, summary.manifest);
        assert!(on_disk.verify(&dir).unwrap().is_empty());

        let again = ExperimentConfig::load(&dir.join(RESOLVED_CONFIG_FILE), ExperimentKind::Tradeoff, &Overrides::default()).unwrap();
        assert_eq!(again, c);
        let first = std::fs::read(dir.join(TRADEOFF_FILE)).unwrap();
        run(&again).unwrap();
        assert_eq!(std::fs::read(dir.join(TRADEOFF_FILE)).unwrap(), first);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn failed_run_is_recorded() {
        let dir = std::env::temp_dir().join(format!("rateloss-fail-{}", std::process::id()));
        let mut c = ExperimentConfig::defaults(ExperimentKind::RateLossRegion, 4);
        c.output_dir = dir.clone();
        c.source.beta = vec![1.0, 1.0];
        c.source.k = 2;
        let err = run(&c).unwrap_err();
        assert_eq!(err.code(), "INVALID_INPUT");
        let m = RunManifest::read(&dir).unwrap();
        assert_eq!(m.status, RunStatus::Failed);
        assert!(m.finished_unix_ms.is_some());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
