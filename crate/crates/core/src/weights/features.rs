use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::linalg::dense;
use crate::rng::rng_from_seed;

/// Random Fourier features for the Gaussian kernel `exp(-‖x − x′‖²/σ²)`.
///
/// `ζ(x, (w, b)) = √2 cos(wᵀx + b)` with `w ~ N(0, (2/σ²) I)` and
/// `b ~ U[0, 2π]`, so that `E[ζ(x)ζ(x′)] = k(x, x′)`. The map returns
/// `(ζ(x, ω₁), …, ζ(x, ω_M)) / √M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFeatureMap {
    #[serde(with = "dense")]
    frequencies: DMatrix<f64>,
    offsets: Vec<f64>,
}

impl RandomFeatureMap {
    pub fn sample(sigma: f64, input_dim: usize, features: usize, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("bandwidth must be positive, got {sigma}")));
        }
        if features == 0 {
            return Err(Error::Parameter("random feature count must be at least 1".into()));
        }
        let mut rng = rng_from_seed(seed);
        let scale = std::f64::consts::SQRT_2 / sigma;
        let mut frequencies = DMatrix::zeros(features, input_dim);
        let mut offsets = Vec::with_capacity(features);
        for m in 0..features {
            for j in 0..input_dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                frequencies[(m, j)] = scale * z;
            }
            offsets.push(rng.random::<f64>() * std::f64::consts::TAU);
        }
        Ok(RandomFeatureMap { frequencies, offsets })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dims(self.input_dim(), x.len())?;
        let norm = (2.0 / self.len() as f64).sqrt();
        Ok(DVector::from_fn(self.len(), |m, _| {
            let phase: f64 = self
                .frequencies
                .row(m)
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum::<f64>()
                + self.offsets[m];
            norm * phase.cos()
        }))
    }

    /// `n × M` matrix whose rows are the feature vectors of `xs`.
    pub fn feature_matrix(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let mut q = DMatrix::zeros(xs.len(), self.len());
        for (i, x) in xs.iter().enumerate() {
            q.set_row(i, &self.features(x)?.transpose());
        }
        Ok(q)
    }

    /// Monte Carlo kernel estimate `v̂(x)ᵀv̂(x′)`.
    pub fn approx_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.features(x)?.dot(&self.features(y)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let a = RandomFeatureMap::sample(1.0, 3, 50, 9).unwrap();
        let b = RandomFeatureMap::sample(1.0, 3, 50, 9).unwrap();
        let c = RandomFeatureMap::sample(1.0, 3, 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn self_similarity_is_near_one() {
        // E[2cos²] = 1 and the average over many features concentrates.
        let map = RandomFeatureMap::sample(0.7, 2, 20_000, 1).unwrap();
        let k = map.approx_kernel(&[0.2, -0.1], &[0.2, -0.1]).unwrap();
        assert!((k - 1.0).abs() < 0.03, "{k}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RandomFeatureMap::sample(0.0, 1, 5, 0).is_err());
        assert!(RandomFeatureMap::sample(1.0, 1, 0, 0).is_err());
        let map = RandomFeatureMap::sample(1.0, 2, 5, 0).unwrap();
        assert!(map.features(&[1.0]).is_err());
    }
}
