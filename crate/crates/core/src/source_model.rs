//! The polynomial source `X = beta^T Y* + N` and its analytic densities.
//!
//! `Y*` is the feature vector `[1, Y, ..., Y^(k-1)]`, `N ~ N(0, sigma^2)` and
//! the side information `Y` is zero mean. [`VDensity`] and [`UDensity`] give
//! the laws of the noiseless part `V = beta^T Y*` and of the channel output
//! `U = alpha (V + N + Phi)` for the quadratic, uniform-`Y` case.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::Integrator;
use crate::rng::Stream;
use crate::test_channel::TestChannelParams;

/// Law of the side information `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SideInfo {
    /// Uniform on `[-half_width, half_width]`.
    UniformSymmetric { half_width: f64 },
    /// `N(0, variance)`.
    Gaussian { variance: f64 },
}

impl SideInfo {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SideInfo::UniformSymmetric { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                Err(invalid(format!("uniform half width must be positive, got {half_width}")))
            }
            SideInfo::Gaussian { variance } if !(variance > 0.0 && variance.is_finite()) => {
                Err(invalid(format!("gaussian variance must be positive, got {variance}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            SideInfo::UniformSymmetric { half_width } => rng.symmetric(half_width),
            SideInfo::Gaussian { variance } => rng.gaussian(variance),
        }
    }

    /// `E[Y^m]`.
    pub fn raw_moment(&self, m: u32) -> f64 {
        if m % 2 == 1 {
            return 0.0;
        }
        match *self {
            SideInfo::UniformSymmetric { half_width } => half_width.powi(m as i32) / f64::from(m + 1),
            SideInfo::Gaussian { variance } => {
                // sigma^m (m-1)!!
                let double_factorial: f64 = (1..m).step_by(2).map(f64::from).product();
                variance.powi(m as i32 / 2) * double_factorial
            }
        }
    }
}

/// Feature vector `[y^0, y^1, ..., y^(k-1)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, coefficients: &[f64]) -> f64 {
        self.0.iter().zip(coefficients).map(|(a, b)| a * b).sum()
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn features(y: f64, k: usize) -> Result<FeatureVector> {
    if !y.is_finite() {
        return Err(invalid(format!("feature input must be finite, got {y}")));
    }
    if k == 0 {
        return Err(invalid("feature order k must be at least 1"));
    }
    let mut out = Vec::with_capacity(k);
    let mut p = 1.0;
    for _ in 0..k {
        out.push(p);
        p *= y;
    }
    Ok(FeatureVector(out))
}

/// `sum_i c_i y^i` by Horner's rule.
#[inline]
pub fn polynomial_value(coefficients: &[f64], y: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

/// Paired training or inference draws.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `E[Y* Y*^T]`, entry `(i, j) = E[Y^(i+j)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix(DMatrix<f64>);

impl MomentMatrix {
    pub fn from_side_info(side_info: &SideInfo, k: usize) -> Self {
        Self(DMatrix::from_fn(k, k, |i, j| side_info.raw_moment((i + j) as u32)))
    }

    /// Wrap an arbitrary symmetric PSD matrix (used for synthetic checks).
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        crate::linalg::check_psd(&m, "moment")?;
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// The joint law of `(X, Y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSource {
    beta: Vec<f64>,
    sigma2: f64,
    side_info: SideInfo,
}

impl PolynomialSource {
    /// `sigma2 = 0` is accepted for noiseless checks.
    pub fn new(beta: Vec<f64>, sigma2: f64, side_info: SideInfo) -> Result<Self> {
        if beta.is_empty() {
            return Err(invalid("beta must have at least one coefficient"));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(invalid("beta coefficients must be finite"));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(invalid(format!("noise variance must be finite and non-negative, got {sigma2}")));
        }
        side_info.validate()?;
        Ok(Self {
            beta,
            sigma2,
            side_info,
        })
    }

    /// The setup used throughout the numerical study: `beta = [2, 3, 1]`,
    /// `sigma^2 = 16`, `Y ~ U[-1, 1]`.
    pub fn reference() -> Self {
        Self::new(
            vec![2.0, 3.0, 1.0],
            16.0,
            SideInfo::UniformSymmetric { half_width: 1.0 },
        )
        .expect("reference source is valid")
    }

    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn side_info(&self) -> SideInfo {
        self.side_info
    }

    /// `beta^T y*`.
    #[inline]
    pub fn regression_mean(&self, y: f64) -> f64 {
        polynomial_value(&self.beta, y)
    }

    /// Draw one `(x, y)` pair.
    #[inline]
    pub fn sample_one(&self, rng: &mut Stream) -> (f64, f64) {
        let y = self.side_info.sample(rng);
        let noise = if self.sigma2 > 0.0 { rng.gaussian(self.sigma2) } else { 0.0 };
        (self.regression_mean(y) + noise, y)
    }

    pub fn sample_pairs(&self, n: usize, rng: &mut Stream) -> Result<SampleBatch> {
        if n == 0 {
            return Err(invalid("sample size n must be at least 1"));
        }
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let (xi, yi) = self.sample_one(rng);
            x.push(xi);
            y.push(yi);
        }
        Ok(SampleBatch { x, y })
    }

    pub fn moment_matrix(&self) -> MomentMatrix {
        MomentMatrix::from_side_info(&self.side_info, self.k())
    }
}

/// Density of `V = beta^T Y*` for `k = 3`, `beta_2 > 0` and uniform `Y`.
///
/// Each root `y` of `beta_0 + beta_1 y + beta_2 y^2 = v` inside the support
/// of `Y` contributes `p_Y(y) / |beta_1 + 2 beta_2 y|`, and
/// `|beta_1 + 2 beta_2 y| = sqrt(beta_1^2 + 4 beta_2 (v - beta_0))`.
#[derive(Clone, Debug, PartialEq)]
pub struct VDensity {
    b0: f64,
    b1: f64,
    b2: f64,
    half_width: f64,
    breakpoints: Vec<f64>,
}

impl VDensity {
    pub fn new(source: &PolynomialSource) -> Result<Self> {
        let half_width = match source.side_info() {
            SideInfo::UniformSymmetric { half_width } => half_width,
            other => {
                return Err(Error::UnsupportedModel(format!(
                    "closed-form density of V needs uniform side information, got {other:?}"
                )))
            }
        };
        let [b0, b1, b2] = match *source.beta() {
            [b0, b1, b2] => [b0, b1, b2],
            _ => {
                return Err(Error::UnsupportedModel(format!(
                    "closed-form density of V needs k = 3, got k = {}",
                    source.k()
                )))
            }
        };
        if !(b2 > 0.0) {
            return Err(Error::UnsupportedModel(format!(
                "closed-form density of V needs beta_2 > 0, got {b2}"
            )));
        }

        let q = |y: f64| b0 + b1 * y + b2 * y * y;
        let mut breakpoints = vec![q(-half_width), q(half_width)];
        let vertex = -b1 / (2.0 * b2);
        if vertex.abs() < half_width {
            breakpoints.push(q(vertex));
        }
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();

        Ok(Self {
            b0,
            b1,
            b2,
            half_width,
            breakpoints,
        })
    }

    /// `[v_min, v_max]`.
    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().expect("non-empty"))
    }

    /// Sorted support endpoints plus the interior point where the density is
    /// singular or jumps; the density is smooth between consecutive entries.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// The value of `v` where the discriminant vanishes.
    pub fn singular_point(&self) -> f64 {
        self.b0 - self.b1 * self.b1 / (4.0 * self.b2)
    }

    pub fn eval(&self, v: f64) -> f64 {
        let disc = self.b1 * self.b1 + 4.0 * self.b2 * (v - self.b0);
        // The discriminant-zero boundary has measure zero; report 0 there.
        if !(disc > 0.0) {
            return 0.0;
        }
        let root = disc.sqrt();
        let y1 = (-self.b1 - root) / (2.0 * self.b2);
        let y2 = (-self.b1 + root) / (2.0 * self.b2);
        let hits = [y1, y2].iter().filter(|y| y.abs() <= self.half_width).count();
        hits as f64 / (2.0 * self.half_width * root)
    }
}

pub fn density_v(source: &PolynomialSource, v: f64) -> Result<f64> {
    Ok(VDensity::new(source)?.eval(v))
}

/// Density of `U = alpha (V + N + Phi)`: the law of `V` convolved with
/// `N(0, sigma^2 + sigma_phi^2)`, scaled by `alpha`.
#[derive(Clone, Debug)]
pub struct UDensity {
    v: VDensity,
    alpha: f64,
    spread: f64,
    integrator: Integrator,
}

impl UDensity {
    pub fn new(source: &PolynomialSource, channel: &TestChannelParams) -> Result<Self> {
        let v = VDensity::new(source)?;
        Ok(Self {
            v,
            alpha: channel.alpha(),
            spread: source.sigma2() + channel.sigma_phi2(),
            integrator: Integrator::default(),
        })
    }

    pub fn v_density(&self) -> &VDensity {
        &self.v
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `sigma^2 + sigma_phi^2`.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// `int P_V(v) exp(-(w - v)^2 / (2 s)) dv`, integrated piecewise between
    /// the breakpoints of `P_V` with a total absolute tolerance of `1e-8`.
    pub fn convolution(&self, w: f64) -> Result<f64> {
        let pieces = self.v.breakpoints().windows(2).count().max(1);
        let integrator = Integrator {
            abs_tol: self.integrator.abs_tol / pieces as f64,
            ..self.integrator
        };
        let mut total = 0.0;
        for edge in self.v.breakpoints().windows(2) {
            let r = integrator.integrate(
                |v| {
                    let d = w - v;
                    self.v.eval(v) * (-d * d / (2.0 * self.spread)).exp()
                },
                edge[0],
                edge[1],
            )?;
            total += r.value;
        }
        Ok(total)
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(invalid(format!("density argument must be finite, got {u}")));
        }
        let inner = self.convolution(u / self.alpha)?;
        Ok(inner.max(0.0) / (self.alpha * (2.0 * PI * self.spread).sqrt()))
    }

    /// `ln P_U(u)`; `None` when the density underflows.
    pub fn ln_eval(&self, u: f64) -> Result<Option<f64>> {
        let p = self.eval(u)?;
        Ok((p > f64::MIN_POSITIVE).then(|| p.ln()))
    }
}

pub fn density_u(source: &PolynomialSource, channel: &TestChannelParams, u: f64) -> Result<f64> {
    if !(channel.alpha() > 0.0) {
        return Err(invalid("channel gain alpha must be positive"));
    }
    UDensity::new(source, channel)?.eval(u)
}
