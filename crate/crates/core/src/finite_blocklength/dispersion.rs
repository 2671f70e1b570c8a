use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg;
use crate::rng::StreamFamily;

pub const DEFAULT_CACHE_SIZE: usize = 1_000_000;

const CHUNK: usize = 1 << 16;

/// Pre-drawn standard Gaussian 3-vectors, shared by every dispersion
/// evaluation so that nearby queries see common random numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCache {
    z: Vec<[f64; 3]>,
}

impl GaussianCache {
    /// Chunk `c` of `2^16` vectors is drawn from `family.stream(c)`.
    pub fn draw(size: usize, family: &StreamFamily) -> Result<Self> {
        if size == 0 {
            return Err(invalid("Gaussian cache size must be at least 1"));
        }
        let chunks = size.div_ceil(CHUNK);
        let z = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut s = family.stream(c as u64);
                let len = CHUNK.min(size - c * CHUNK);
                (0..len)
                    .map(|_| [s.standard_normal(), s.standard_normal(), s.standard_normal()])
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(Self { z })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// The cache mapped through a square-root factor of `V`, i.e. draws of
/// `B ~ N(0, V)` stored column-wise.
#[derive(Clone, Debug)]
pub struct DispersionRegion {
    coords: [Vec<f64>; 3],
    sorted: [Vec<f64>; 2],
    scale: [f64; 2],
}

impl DispersionRegion {
    pub fn new(v: &DMatrix<f64>, cache: &GaussianCache) -> Result<Self> {
        if v.shape() != (3, 3) {
            return Err(invalid(format!("dispersion covariance must be 3x3, got {:?}", v.shape())));
        }
        linalg::check_psd(v, "V")?;
        let l = linalg::psd_factor(v);
        let l = nalgebra::Matrix3::from_iterator(l.iter().copied());
        let mut coords = [
            Vec::with_capacity(cache.len()),
            Vec::with_capacity(cache.len()),
            Vec::with_capacity(cache.len()),
        ];
        for z in &cache.z {
            let b = l * Vector3::from(*z);
            coords[0].push(b[0]);
            coords[1].push(b[1]);
            coords[2].push(b[2]);
        }
        let sorted = [0, 1].map(|i| {
            let mut s = coords[i].clone();
            s.sort_unstable_by(f64::total_cmp);
            s
        });
        let scale = [0, 1].map(|i| {
            let sd = v[(i, i)].max(0.0).sqrt();
            sd.max(1e-9)
        });
        Ok(Self { coords, sorted, scale })
    }

    pub fn len(&self) -> usize {
        self.coords[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords[0].is_empty()
    }

    /// Empirical `Pr(B <= b)` componentwise.
    pub fn prob(&self, b: [f64; 3]) -> f64 {
        let [x, y, z] = &self.coords;
        let hits = x
            .iter()
            .zip(y)
            .zip(z)
            .filter(|((x, y), z)| **x <= b[0] && **y <= b[1] && **z <= b[2])
            .count();
        hits as f64 / self.len() as f64
    }

    pub(crate) fn coords(&self) -> &[Vec<f64>; 3] {
        &self.coords
    }

    /// Empirical `q`-quantile of coordinate `i` (0 or 1).
    pub(crate) fn marginal_quantile(&self, i: usize, q: f64) -> f64 {
        let s = &self.sorted[i];
        let idx = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
        s[idx]
    }

    pub(crate) fn scale(&self, i: usize) -> f64 {
        self.scale[i]
    }
}

pub fn dispersion_prob(v: &DMatrix<f64>, b: [f64; 3], cache: &GaussianCache) -> Result<f64> {
    Ok(DispersionRegion::new(v, cache)?.prob(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn cache(size: usize) -> GaussianCache {
        GaussianCache::draw(size, &StreamFamily::new(17, "dispersion")).unwrap()
    }

    #[test]
    fn identity_orthant_probabilities() {
        let c = cache(DEFAULT_CACHE_SIZE);
        let id = DMatrix::identity(3, 3);
        let p0 = dispersion_prob(&id, [0.0; 3], &c).unwrap();
        assert!((p0 - 0.125).abs() <= 0.002, "{p0}");
        let p1 = dispersion_prob(&id, [1e9, 1e9, 0.0], &c).unwrap();
        assert!((p1 - 0.5).abs() <= 0.002, "{p1}");
    }

    #[test]
    fn univariate_embedding_hits_normal_quantile() {
        let c = cache(DEFAULT_CACHE_SIZE);
        let eps = 1e-6;
        let v = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, eps * eps, eps * eps]));
        let p = dispersion_prob(&v, [1.6449, 1e9, 1e9], &c).unwrap();
        assert!((p - 0.95).abs() <= 0.002, "{p}");
    }

    #[test]
    fn rejects_bad_covariances() {
        let c = cache(100);
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, 1.0]));
        assert_eq!(dispersion_prob(&neg, [0.0; 3], &c), Err(Error::NotPositiveSemidefinite("V")));
        let skew = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(dispersion_prob(&skew, [0.0; 3], &c), Err(Error::NotSymmetric("V")));
        assert!(dispersion_prob(&DMatrix::identity(2, 2), [0.0; 3], &c).is_err());
    }

    #[test]
    fn cache_is_deterministic_and_chunked() {
        let fam = StreamFamily::new(5, "c");
        let a = GaussianCache::draw(CHUNK + 10, &fam).unwrap();
        let b = GaussianCache::draw(CHUNK + 10, &fam).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), CHUNK + 10);
        assert!(GaussianCache::draw(0, &fam).is_err());
    }
}
