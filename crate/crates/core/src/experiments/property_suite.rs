use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sweep::{bounds_at_rate, reconstruction_distortion, run_asymptotic_sweep};
use crate::error::Result;
use crate::finite_blocklength::{
    boundary_sweep, blocklength_correction, DispersionRegion, FrontierConfig, FrontierModel, GaussianCache,
    BOUNDARY_PROB_TOL,
};
use crate::linalg;
use crate::quadrature::Integrator;
use crate::regression::{min_eig_bound_check, ruhe_check};
use crate::rng::{Stream, StreamFamily};
use crate::source_model::{features, MomentMatrix, SideInfo, UDensity, VDensity};
use crate::test_channel::{rates, TestChannelParams};

pub const MATRIX_INSTANCES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyEntry {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against `threshold`.
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub fault_sigma_phi2_factor: Option<f64>,
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub entries: Vec<PropertyEntry>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn entry(&self, name: &str) -> Option<&PropertyEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `statistic <= threshold`.
fn at_most(name: &str, statistic: f64, threshold: f64, detail: impl Into<String>) -> PropertyEntry {
    PropertyEntry {
        name: name.into(),
        passed: statistic <= threshold,
        statistic,
        threshold,
        detail: detail.into(),
    }
}

/// `statistic >= threshold`.
fn at_least(name: &str, statistic: f64, threshold: f64, detail: impl Into<String>) -> PropertyEntry {
    PropertyEntry {
        name: name.into(),
        passed: statistic >= threshold,
        statistic,
        threshold,
        detail: detail.into(),
    }
}

/// `G G^T` with i.i.d. standard normal `G`.
pub fn random_psd(dim: usize, rng: &mut Stream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
    &g * g.transpose()
}

/// `(G + G^T) / 2` with i.i.d. standard normal `G`.
pub fn random_symmetric(dim: usize, rng: &mut Stream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
    (&g + g.transpose()) * 0.5
}

/// Counts `(instances, failures)` of a matrix inequality over dims 2..=6.
pub fn matrix_inequality_trials(
    family: &StreamFamily,
    instances: usize,
    draw: fn(usize, &mut Stream) -> DMatrix<f64>,
    check: fn(&DMatrix<f64>, &DMatrix<f64>) -> Result<bool>,
) -> Result<(usize, usize)> {
    let mut failures = 0;
    for i in 0..instances {
        let mut rng = family.stream(i as u64);
        let dim = 2 + i % 5;
        let a = draw(dim, &mut rng);
        let b = draw(dim, &mut rng);
        if !check(&a, &b)? {
            failures += 1;
        }
    }
    Ok((instances, failures))
}

struct Suite {
    root: StreamFamily,
    entries: Vec<PropertyEntry>,
}

impl Suite {
    fn run(&mut self, name: &str, check: impl FnOnce(&StreamFamily) -> Result<Vec<PropertyEntry>>) {
        match check(&self.root.child(name)) {
            Ok(entries) => self.entries.extend(entries),
            Err(e) => self.entries.push(PropertyEntry {
                name: name.into(),
                passed: false,
                statistic: f64::NAN,
                threshold: f64::NAN,
                detail: format!("error: {e}"),
            }),
        }
    }
}

/// Evaluate every module invariant on the configured setup. Check failures
/// and errors become failed entries rather than errors.
pub fn run_property_suite(config: &ExperimentConfig) -> Result<PropertyReport> {
    let source = config.source_model()?;
    let channel = config.channel_params()?;
    let sigma2 = source.sigma2();
    let mut suite = Suite {
        root: StreamFamily::new(config.seed, "property-suite"),
        entries: Vec::new(),
    };

    suite.run("features_are_powers", |fam| {
        let mut rng = fam.stream(0);
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let y = rng.symmetric(2.0);
            for k in 1..=8 {
                let f = features(y, k)?;
                for (j, v) in f.as_slice().iter().enumerate() {
                    let p = y.powi(j as i32);
                    worst = worst.max((v - p).abs() / p.abs().max(1.0));
                }
            }
        }
        Ok(vec![at_most("features_are_powers", worst, 1e-12, "max relative error over 1000 y and k <= 8")])
    });

    suite.run("moment_matrix_psd", |_| {
        let mut worst = f64::INFINITY;
        for side in [SideInfo::UniformSymmetric { half_width: 1.0 }, SideInfo::Gaussian { variance: 1.0 }] {
            for k in 1..=8 {
                let m = MomentMatrix::from_side_info(&side, k);
                let ev = linalg::eigenvalues_desc(m.matrix());
                worst = worst.min(ev[ev.len() - 1] / ev[0]);
            }
        }
        Ok(vec![at_least("moment_matrix_psd", worst, -1e-12, "min normalized eigenvalue, k <= 8, uniform and gaussian")])
    });

    suite.run("density_v_normalized", |_| {
        let d = VDensity::new(&source)?;
        let mut mass = 0.0;
        for w in d.breakpoints().windows(2) {
            mass += Integrator::default().integrate(|v| d.eval(v), w[0], w[1])?.value;
        }
        Ok(vec![at_most("density_v_normalized", (mass - 1.0).abs(), 1e-6, format!("mass {mass}"))])
    });

    suite.run("density_u_normalized", |_| {
        let pu = UDensity::new(&source, &channel)?;
        let s = pu.spread().sqrt();
        let (lo, hi) = pu.v_density().support();
        let (a, b) = (channel.alpha() * (lo - 8.0 * s), channel.alpha() * (hi + 8.0 * s));
        let q = Integrator::with_tolerance(1e-10);
        let mass = q.integrate(|u| pu.eval(u).unwrap_or(f64::NAN), a, b)?.value;
        Ok(vec![at_most("density_u_normalized", (mass - 1.0).abs(), 1e-5, format!("mass {mass}"))])
    });

    suite.run("rate_identity", |_| {
        let mut worst = 0.0_f64;
        for &d in &config.grids.distortion {
            let r = rates(sigma2, &TestChannelParams::from_distortion(sigma2, d)?);
            worst = worst.max((r.r_conditional - r.r_wz).abs()).max((r.r_wz - r.r_b).abs());
        }
        Ok(vec![at_most("rate_identity", worst, 1e-12, "max |R_X|Y - R_WZ| and |R_WZ - R_b| over the D grid")])
    });

    suite.run("distortion_identity", |fam| {
        let encoder = match config.faults.sigma_phi2_factor {
            Some(f) => channel.with_sigma_phi2(channel.sigma_phi2() * f),
            None => channel,
        };
        let (exact, _) = reconstruction_distortion(
            &source,
            &encoder,
            &channel,
            source.beta(),
            config.samples.inference,
            &mut fam.stream(0),
        )?;
        let z = (exact.mean - channel.distortion()).abs() / exact.std_error;
        Ok(vec![at_most(
            "distortion_identity",
            z,
            3.0,
            format!("empirical {} vs D = {} (standard errors)", exact.mean, channel.distortion()),
        )])
    });

    suite.run("generalization_error", |_| {
        let rows = run_asymptotic_sweep(config)?;
        let mut out = Vec::new();
        let floor = rows.iter().map(|r| r.min_gen_error - sigma2).fold(f64::INFINITY, f64::min);
        out.push(at_least("gen_error_floor", floor, 0.0, "min over replicates of G - sigma2"));
        let z = rows
            .iter()
            .map(|r| (r.mc_gen_error_mean - r.closed_form).abs() / r.mc_gen_error_stderr)
            .fold(0.0, f64::max);
        out.push(at_most("closed_form_matches_mc", z, 3.0, "max |mc - closed form| in standard errors"));
        let rises = rows.windows(2).filter(|w| w[1].mc_gen_error_mean > w[0].mc_gen_error_mean).count();
        out.push(at_most("gen_error_decreasing_in_n", rises as f64, 0.0, "increases along the n grid"));
        let scaling = rows
            .windows(2)
            .map(|w| {
                let a = (w[0].closed_form - sigma2) * w[0].n as f64;
                let b = (w[1].closed_form - sigma2) * w[1].n as f64;
                (a / b - 1.0).abs()
            })
            .fold(0.0, f64::max);
        out.push(at_most("closed_form_inverse_n_scaling", scaling, 0.15, "max relative change of n (closed - sigma2)"));
        let gap = rows
            .iter()
            .map(|r| (r.upper_bound - r.closed_form).min(r.closed_form - (r.mc_gen_error_mean - 3.0 * r.mc_gen_error_stderr)))
            .fold(f64::INFINITY, f64::min);
        out.push(at_least("bound_ordering", gap, 0.0, "min of (upper - closed, closed - (mc - 3 se))"));
        Ok(out)
    });

    suite.run("generic_bound_dominates", |_| {
        let mut gap = f64::INFINITY;
        for &n in &config.grids.n {
            for i in 1..=20 {
                let (rag, up) = bounds_at_rate(&source, n, 0.1 * f64::from(i))?;
                gap = gap.min(rag - up);
            }
        }
        Ok(vec![at_least("generic_bound_dominates", gap, 0.0, "min squared generic bound minus upper bound, R in [0.1, 2]")])
    });

    suite.run("ruhe_inequality", |fam| {
        let (n, bad) = matrix_inequality_trials(fam, MATRIX_INSTANCES, random_psd, ruhe_check)?;
        Ok(vec![at_most("ruhe_inequality", bad as f64, 0.0, format!("failures over {n} PSD pairs, dims 2-6"))])
    });

    suite.run("min_eigenvalue_lemma", |fam| {
        let (n, bad) = matrix_inequality_trials(fam, MATRIX_INSTANCES, random_symmetric, min_eig_bound_check)?;
        Ok(vec![at_most("min_eigenvalue_lemma", bad as f64, 0.0, format!("failures over {n} symmetric pairs, dims 2-6"))])
    });

    suite.run("finite_blocklength", |fam| frontier_entries(config, &source, &channel, fam));

    let total = suite.entries.len();
    let passed = suite.entries.iter().filter(|e| e.passed).count();
    Ok(PropertyReport {
        seed: config.seed,
        fault_sigma_phi2_factor: config.faults.sigma_phi2_factor,
        total,
        passed,
        failed: total - passed,
        entries: suite.entries,
    })
}

fn frontier_entries(
    config: &ExperimentConfig,
    source: &crate::source_model::PolynomialSource,
    channel: &TestChannelParams,
    fam: &StreamFamily,
) -> Result<Vec<PropertyEntry>> {
    let sigma2 = source.sigma2();
    let n = *config.grids.n.last().expect("grid validated non-empty");
    let frontier = FrontierConfig {
        info_loss_samples: config.samples.info_loss,
        cache_size: config.samples.gaussian_cache,
        loss_mode: config.loss_mode,
    };
    let cache = GaussianCache::draw(frontier.cache_size, &fam.child("gaussian-cache"))?;
    let model = FrontierModel::build(source, channel, n, &frontier, &fam.child("info-loss"), &cache)?;
    let m = &model.moments;
    let se = m.std_errors();
    let mut out = Vec::new();

    let r_wz = rates(sigma2, channel).r_wz;
    out.push(at_most(
        "info_rate_matches_wyner_ziv",
        (m.rate() - r_wz).abs() / m.rate_std_error(),
        3.0,
        format!("J1 + J2 = {} vs R_WZ = {r_wz} (standard errors)", m.rate()),
    ));
    out.push(at_least(
        "loss_moment_floor",
        (m.j[2] - sigma2) / se[2],
        -3.0,
        format!("(J3 - sigma2) / se with J3 = {}", m.j[2]),
    ));
    let closed = model.batch.closed_form;
    out.push(at_most(
        "loss_moment_matches_closed_form",
        (m.j[2] - closed.mean).abs() / (se[2].powi(2) + closed.std_error.powi(2)).sqrt(),
        3.0,
        format!("J3 = {} vs closed form {} at n = {n}", m.j[2], closed.mean),
    ));

    let mut rng = fam.child("monotone").stream(0);
    let mut violations = 0;
    for _ in 0..200 {
        let b = [0, 1, 2].map(|i| rng.standard_normal() * m.v[(i, i)].sqrt());
        let p = model.region.prob(b);
        for i in 0..3 {
            let mut c = b;
            c[i] += rng.standard_normal().abs() * m.v[(i, i)].sqrt().max(1e-9);
            if model.region.prob(c) < p {
                violations += 1;
            }
        }
    }
    out.push(at_most("dispersion_monotone", f64::from(violations), 0.0, "decreases under 600 coordinate increases"));

    let l_top = *config.grids.loss.last().expect("grid validated non-empty");
    let b3 = (n as f64).sqrt() * (l_top - m.j[2] - blocklength_correction(n));
    let fresh = GaussianCache::draw(frontier.cache_size, &fam.child("gaussian-cache-fresh"))?;
    let other = DispersionRegion::new(&m.v, &fresh)?;
    let (mut tol_worst, mut crn_worst) = (0.0_f64, 0.0_f64);
    for &eps in &config.grids.epsilon {
        for b in boundary_sweep(&model.region, eps, b3)? {
            tol_worst = tol_worst.max((model.region.prob(b) - (1.0 - eps)).abs());
            crn_worst = crn_worst.max((other.prob(b) - (1.0 - eps)).abs());
        }
    }
    out.push(at_most(
        "boundary_probability_tolerance",
        tol_worst,
        BOUNDARY_PROB_TOL,
        format!("max |Pr(B <= b) - (1 - eps)| on the boundary at l = {l_top}"),
    ));
    out.push(at_most(
        "fresh_cache_stability",
        crn_worst,
        2.0 * BOUNDARY_PROB_TOL,
        "boundary points re-evaluated on an independent cache",
    ));

    let mut curves = Vec::new();
    for &eps in &config.grids.epsilon {
        curves.push((eps, model.curve(eps, &config.grids.loss)?));
    }
    let mut rises = 0;
    let mut below_floor = 0;
    for (_, c) in &curves {
        let feasible: Vec<f64> = c.iter().filter(|p| p.feasible).map(|p| p.rate).collect();
        rises += feasible.windows(2).filter(|w| w[1] > w[0]).count();
        below_floor += c.iter().filter(|p| p.feasible && p.l < sigma2).count();
    }
    out.push(at_most("rate_monotone_in_loss", rises as f64, 0.0, "rate increases along the loss grid"));
    out.push(at_most("loss_floor_infeasible", below_floor as f64, 0.0, "feasible points with l < sigma2"));

    let mut order = 0;
    for (ea, ca) in &curves {
        for (eb, cb) in &curves {
            if ea > eb {
                order += ca
                    .iter()
                    .zip(cb)
                    .filter(|(a, b)| b.feasible && (!a.feasible || a.rate > b.rate))
                    .count();
            }
        }
    }
    out.push(at_most("rate_monotone_in_epsilon", order as f64, 0.0, "points where a larger epsilon needs a higher rate"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentKind;

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(ExperimentKind::PropertySuite, 31);
        c.samples.replicates = 500;
        c.samples.info_loss = 5000;
        c.samples.gaussian_cache = 50_000;
        c.samples.inference = 50_000;
        c
    }

    #[test]
    fn default_suite_passes() {
        let r = run_property_suite(&quick()).unwrap();
        assert!(r.total >= 12);
        let failed: Vec<_> = r.entries.iter().filter(|e| !e.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
        assert!(r.to_json().contains("\"ruhe_inequality\""));
    }

    #[test]
    fn mismatched_noise_breaks_distortion_identity() {
        let mut c = quick();
        c.faults.sigma_phi2_factor = Some(2.0);
        let r = run_property_suite(&c).unwrap();
        assert!(!r.entry("distortion_identity").unwrap().passed);
        assert!(r.entry("ruhe_inequality").unwrap().passed);
        assert!(!r.all_passed());
    }

    #[test]
    fn random_matrices_have_the_requested_structure() {
        let mut rng = StreamFamily::new(1, "m").stream(0);
        let a = random_psd(4, &mut rng);
        assert!(linalg::check_psd(&a, "a").is_ok());
        let s = random_symmetric(5, &mut rng);
        assert!(linalg::check_symmetric(&s, "s").is_ok());
    }
}
