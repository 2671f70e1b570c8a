use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::csv::{render, Cell};
use crate::error::Result;
use crate::finite_blocklength::{FrontierConfig, FrontierModel, GaussianCache, MomentSummary};
use crate::rng::StreamFamily;

pub const REGION_HEADER: [&str; 5] = ["n", "epsilon", "l", "rate", "feasible"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub n: usize,
    pub epsilon: f64,
    pub l: f64,
    pub rate: f64,
    pub feasible: bool,
    /// Set when the point hit a numerical failure; the row is then reported
    /// as infeasible.
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RegionOutcome {
    pub rows: Vec<RegionRow>,
    /// Moment estimates and rejection counts, one per `grids.n`.
    pub moments: Vec<(usize, MomentSummary, u64)>,
    pub loss_floor: f64,
}

impl RegionOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &RegionRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }
}

pub fn region_csv(rows: &[RegionRow]) -> String {
    render(
        &REGION_HEADER,
        rows.iter().map(|r| {
            vec![
                Cell::Int(r.n as u64),
                Cell::Float(r.epsilon),
                Cell::Float(r.l),
                Cell::Float(r.rate),
                Cell::Bool(r.feasible),
            ]
        }),
    )
}

/// Frontier for every `(n, epsilon)` pair over `grids.loss`.
///
/// One Gaussian cache serves the whole run, and every `n` shares the same
/// single-letter draws, so the curves differ only through the loss
/// coordinate and the blocklength scaling.
pub fn run_rate_loss_region(config: &ExperimentConfig) -> Result<RegionOutcome> {
    let source = config.source_model()?;
    let channel = config.channel_params()?;
    let root = StreamFamily::new(config.seed, "rate-loss-region");
    let frontier = FrontierConfig {
        info_loss_samples: config.samples.info_loss,
        cache_size: config.samples.gaussian_cache,
        loss_mode: config.loss_mode,
    };
    let cache = GaussianCache::draw(frontier.cache_size, &root.child("gaussian-cache"))?;
    let info = root.child("info-loss");

    let mut rows = Vec::new();
    let mut moments = Vec::new();
    for &n in &config.grids.n {
        let model = FrontierModel::build(&source, &channel, n, &frontier, &info, &cache)?;
        for &epsilon in &config.grids.epsilon {
            for &l in &config.grids.loss {
                rows.push(match model.point(epsilon, l) {
                    Ok(p) => RegionRow {
                        n,
                        epsilon,
                        l,
                        rate: p.rate,
                        feasible: p.feasible,
                        failure: None,
                    },
                    Err(e) if !e.is_usage() => RegionRow {
                        n,
                        epsilon,
                        l,
                        rate: f64::NAN,
                        feasible: false,
                        failure: Some(e.to_string()),
                    },
                    Err(e) => return Err(e),
                });
            }
        }
        moments.push((n, model.moments, model.batch.rejections));
    }
    Ok(RegionOutcome {
        rows,
        moments,
        loss_floor: source.sigma2(),
    })
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
const DASHES: [&str; 3] = ["", "6 3", "2 3"];

/// Rate against loss level, one polyline per `(n, epsilon)` plus a dashed
/// vertical line at the loss floor.
pub fn region_svg(outcome: &RegionOutcome) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 190.0, 30.0, 55.0);
    let feasible: Vec<&RegionRow> = outcome.rows.iter().filter(|r| r.feasible && r.rate.is_finite()).collect();

    let mut x_lo = outcome.rows.iter().map(|r| r.l).fold(outcome.loss_floor, f64::min);
    let mut x_hi = outcome.rows.iter().map(|r| r.l).fold(outcome.loss_floor, f64::max);
    let mut y_lo = feasible.iter().map(|r| r.rate).fold(f64::INFINITY, f64::min);
    let mut y_hi = feasible.iter().map(|r| r.rate).fold(f64::NEG_INFINITY, f64::max);
    if !(y_lo.is_finite() && y_hi.is_finite()) {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        (x_lo, x_hi) = (x_lo - 0.5, x_hi + 0.5);
    }
    let pad = ((y_hi - y_lo) * 0.05).max(1e-3);
    let (y_lo, y_hi) = ((y_lo - pad).max(0.0), y_hi + pad);

    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y_lo) / (y_hi - y_lo) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (px(x_lo), px(x_hi), py(y_lo), py(y_hi));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2} {y1:.2} V{y0:.2} H{x1:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let t = f64::from(i) / 5.0;
        let (xv, yv) = (x_lo + t * (x_hi - x_lo), y_lo + t * (y_hi - y_lo));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xv:.2}</text>"#,
            px(xv),
            y0 + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            x0 - 6.0,
            py(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">generalization error level l</text>"#,
        0.5 * (x0 + x1),
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">rate (bits/sample)</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );

    let xf = px(outcome.loss_floor);
    let _ = writeln!(
        s,
        r##"<line x1="{xf:.2}" y1="{y0:.2}" x2="{xf:.2}" y2="{y1:.2}" stroke="#555" stroke-dasharray="4 4"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">L* = {}</text>"#,
        xf + 4.0,
        y1 + 12.0,
        outcome.loss_floor
    );

    let mut keys: Vec<(usize, f64)> = Vec::new();
    for r in &outcome.rows {
        if !keys.iter().any(|k| k.0 == r.n && k.1 == r.epsilon) {
            keys.push((r.n, r.epsilon));
        }
    }
    let ns: Vec<usize> = keys.iter().fold(Vec::new(), |mut v, k| {
        if !v.contains(&k.0) {
            v.push(k.0);
        }
        v
    });
    let eps: Vec<f64> = keys.iter().fold(Vec::new(), |mut v, k| {
        if !v.contains(&k.1) {
            v.push(k.1);
        }
        v
    });
    for (idx, (n, e)) in keys.iter().enumerate() {
        let color = PALETTE[ns.iter().position(|m| m == n).unwrap_or(0) % PALETTE.len()];
        let dash = DASHES[eps.iter().position(|m| m == e).unwrap_or(0) % DASHES.len()];
        let pts: Vec<String> = feasible
            .iter()
            .filter(|r| r.n == *n && r.epsilon == *e)
            .map(|r| format!("{:.2},{:.2}", px(r.l), py(r.rate)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8" stroke-dasharray="{dash}"/>"#,
                pts.join(" ")
            );
        }
        let ly = top + 10.0 + 18.0 * idx as f64;
        let lx = w - right + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.8" stroke-dasharray="{dash}"/>"#,
            lx + 28.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">n={n}, eps={e}</text>"#,
            lx + 34.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentKind;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::defaults(ExperimentKind::RateLossRegion, 21);
        c.grids.n = vec![200, 400];
        c.grids.loss = vec![15.0, 17.0, 19.0, 21.0, 23.0];
        c.samples.info_loss = 4000;
        c.samples.gaussian_cache = 50_000;
        c
    }

    #[test]
    fn region_grid_layout_and_floor() {
        let out = run_rate_loss_region(&small_config()).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 5);
        assert_eq!(out.failures().count(), 0);
        for r in &out.rows {
            if r.l < 16.0 {
                assert!(!r.feasible);
            }
            if r.feasible {
                assert!(r.rate >= 0.0 && r.rate.is_finite());
            }
        }
        let csv = region_csv(&out.rows);
        assert!(csv.starts_with("n,epsilon,l,rate,feasible\n"));
        let svg = region_svg(&out);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("L* = "));
    }

    #[test]
    fn svg_handles_all_infeasible() {
        let out = RegionOutcome {
            rows: vec![RegionRow { n: 10, epsilon: 0.1, l: 1.0, rate: f64::NAN, feasible: false, failure: None }],
            moments: Vec::new(),
            loss_floor: 1.0,
        };
        let svg = region_svg(&out);
        assert!(!svg.contains("NaN"));
    }
}
