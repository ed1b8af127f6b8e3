//! Score functions `α : X → ℝⁿ` over the training inputs.
//!
//! Every learner here produces a [`WeightModel`] whose [`WeightModel::alpha`]
//! returns one weight per training point. The structured estimator then
//! combines those weights with loss values only; no learner ever sees the
//! labels.
//!
//! | algorithm | score |
//! |---|---|
//! | ridge | `(K + nλI)⁻¹ v(x)` |
//! | L2-boosting | `C_t v(x)`, `C_t = (I − (ν/n)K) C_{t−1} + (ν/n) I`, `C₀ = 0` |
//! | PCR | `U Σ_λ† Uᵀ v(x)` (eigenvalues of `K` below `λ` dropped) |
//! | random features | `Q (QᵀQ + nλI)⁻¹ v̂_M(x)` |
//! | Nyström | `K_nM (K_nMᵀK_nM + nλK_MM)† ṽ_M(x)` |
//! | Nadaraya-Watson | `v(x) / 𝟙ᵀv(x)` |
//! | nearest neighbours | indicator of the `q` closest inputs |

mod features;

pub use features::RandomFeatureMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::kernels::{input_dim, KernelFamily, KernelSpec};
use crate::linalg::{dense, pinv_symmetric, sym_eigen, SpdSolver};
use crate::rng::rng_from_seed;

pub const MODEL_VERSION: u32 = 1;

/// Smallest admissible Nadaraya-Watson normalizer.
pub const NW_MIN_MASS: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightAlgorithm {
    Ridge { lambda: f64 },
    L2Boost { nu: f64, steps: usize },
    Pcr { lambda: f64 },
    RandomFeatures { features: usize, lambda: f64, seed: u64 },
    Nystrom { landmarks: usize, lambda: f64, seed: u64 },
    NadarayaWatson,
    NearestNeighbors { q: usize },
}

impl WeightAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            WeightAlgorithm::Ridge { .. } => "ridge",
            WeightAlgorithm::L2Boost { .. } => "l2boost",
            WeightAlgorithm::Pcr { .. } => "pcr",
            WeightAlgorithm::RandomFeatures { .. } => "random_features",
            WeightAlgorithm::Nystrom { .. } => "nystrom",
            WeightAlgorithm::NadarayaWatson => "nadaraya_watson",
            WeightAlgorithm::NearestNeighbors { .. } => "nearest_neighbors",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum WeightState {
    Ridge {
        solver: SpdSolver,
    },
    L2Boost {
        #[serde(with = "dense")]
        coefficients: DMatrix<f64>,
    },
    Pcr {
        #[serde(with = "dense")]
        vectors: DMatrix<f64>,
        inverse_values: Vec<f64>,
    },
    RandomFeatures {
        map: RandomFeatureMap,
        #[serde(with = "dense")]
        features: DMatrix<f64>,
        solver: SpdSolver,
    },
    Nystrom {
        landmarks: Vec<usize>,
        #[serde(with = "dense")]
        w: DMatrix<f64>,
    },
    NadarayaWatson,
    NearestNeighbors,
}

/// A fitted score function. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    version: u32,
    algorithm: WeightAlgorithm,
    kernel: KernelSpec,
    inputs: Vec<Vec<f64>>,
    state: WeightState,
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive, got {value}")))
    }
}

/// Fits any of the seven learners.
pub fn fit_weights(xs: &[Vec<f64>], kernel: &KernelSpec, algorithm: &WeightAlgorithm) -> Result<WeightModel> {
    match algorithm {
        WeightAlgorithm::Ridge { .. } | WeightAlgorithm::L2Boost { .. } | WeightAlgorithm::Pcr { .. } => {
            fit_weights_exact(xs, kernel, algorithm)
        }
        WeightAlgorithm::RandomFeatures { .. } | WeightAlgorithm::Nystrom { .. } => {
            fit_weights_approx(xs, kernel, algorithm)
        }
        WeightAlgorithm::NadarayaWatson | WeightAlgorithm::NearestNeighbors { .. } => {
            fit_weights_local(xs, kernel, algorithm)
        }
    }
}

fn model(xs: &[Vec<f64>], kernel: &KernelSpec, algorithm: &WeightAlgorithm, state: WeightState) -> WeightModel {
    WeightModel {
        version: MODEL_VERSION,
        algorithm: algorithm.clone(),
        kernel: *kernel,
        inputs: xs.to_vec(),
        state,
    }
}

/// Spectral-filter learners on the full Gram matrix: ridge, L2-boosting, PCR.
pub fn fit_weights_exact(xs: &[Vec<f64>], kernel: &KernelSpec, algorithm: &WeightAlgorithm) -> Result<WeightModel> {
    kernel.validate()?;
    let gram = kernel.gram(xs)?.into_matrix();
    let n = xs.len();
    let state = match *algorithm {
        WeightAlgorithm::Ridge { lambda } => {
            positive("ridge lambda", lambda)?;
            let mut a = gram;
            for i in 0..n {
                a[(i, i)] += n as f64 * lambda;
            }
            WeightState::Ridge { solver: SpdSolver::new(&a)? }
        }
        WeightAlgorithm::L2Boost { nu, steps } => {
            positive("l2boost step size", nu)?;
            if nu >= 1.0 / kernel.kappa_sq() {
                return Err(Error::Parameter(format!(
                    "l2boost step size must be below 1/κ² = {}, got {nu}",
                    1.0 / kernel.kappa_sq()
                )));
            }
            if steps < 1 {
                return Err(Error::Parameter("l2boost needs at least one step".into()));
            }
            let step = nu / n as f64;
            let mut c = DMatrix::<f64>::zeros(n, n);
            for _ in 0..steps {
                let kc = &gram * &c;
                c -= kc * step;
                for i in 0..n {
                    c[(i, i)] += step;
                }
            }
            WeightState::L2Boost { coefficients: c }
        }
        WeightAlgorithm::Pcr { lambda } => {
            positive("pcr threshold", lambda)?;
            let (values, vectors) = sym_eigen(&gram)?;
            let kept: Vec<usize> = (0..n).filter(|&i| values[i] >= lambda).collect();
            let mut kept_vectors = DMatrix::zeros(n, kept.len());
            for (dst, &src) in kept.iter().enumerate() {
                kept_vectors.set_column(dst, &vectors.column(src));
            }
            WeightState::Pcr {
                vectors: kept_vectors,
                inverse_values: kept.iter().map(|&i| 1.0 / values[i]).collect(),
            }
        }
        _ => {
            return Err(Error::Parameter(format!(
                "{} is not an exact kernel learner",
                algorithm.name()
            )))
        }
    };
    Ok(model(xs, kernel, algorithm, state))
}

/// Random-projection learners: random features and Nyström.
pub fn fit_weights_approx(xs: &[Vec<f64>], kernel: &KernelSpec, algorithm: &WeightAlgorithm) -> Result<WeightModel> {
    kernel.validate()?;
    let d = input_dim(xs)?;
    let n = xs.len();
    let state = match *algorithm {
        WeightAlgorithm::RandomFeatures { features, lambda, seed } => {
            positive("random features lambda", lambda)?;
            if kernel.family != KernelFamily::Gaussian {
                return Err(Error::Parameter("random features approximate the gaussian kernel only".into()));
            }
            let map = RandomFeatureMap::sample(kernel.sigma, d, features, seed)?;
            let q = map.feature_matrix(xs)?;
            let mut a = q.tr_mul(&q);
            crate::linalg::symmetrize(&mut a);
            for m in 0..features {
                a[(m, m)] += n as f64 * lambda;
            }
            WeightState::RandomFeatures { map, features: q, solver: SpdSolver::new(&a)? }
        }
        WeightAlgorithm::Nystrom { landmarks, lambda, seed } => {
            positive("nystrom lambda", lambda)?;
            if landmarks < 1 || landmarks > n {
                return Err(Error::Parameter(format!(
                    "nystrom landmark count must lie in [1, {n}], got {landmarks}"
                )));
            }
            let mut rng = rng_from_seed(seed);
            let picked = rand::seq::index::sample(&mut rng, n, landmarks).into_vec();
            let centers: Vec<Vec<f64>> = picked.iter().map(|&i| xs[i].clone()).collect();
            let k_nm = kernel.cross(xs, &centers)?;
            let mut k_mm = kernel.gram(&centers)?.into_matrix();
            k_mm *= n as f64 * lambda;
            let mut a = k_nm.tr_mul(&k_nm) + k_mm;
            crate::linalg::symmetrize(&mut a);
            let w = &k_nm * pinv_symmetric(&a)?;
            WeightState::Nystrom { landmarks: picked, w }
        }
        _ => {
            return Err(Error::Parameter(format!(
                "{} is not a random-projection learner",
                algorithm.name()
            )))
        }
    };
    Ok(model(xs, kernel, algorithm, state))
}

/// Local averaging learners: Nadaraya-Watson and nearest neighbours.
pub fn fit_weights_local(xs: &[Vec<f64>], kernel: &KernelSpec, algorithm: &WeightAlgorithm) -> Result<WeightModel> {
    kernel.validate()?;
    input_dim(xs)?;
    let state = match *algorithm {
        WeightAlgorithm::NadarayaWatson => WeightState::NadarayaWatson,
        WeightAlgorithm::NearestNeighbors { q } => {
            if q < 1 || q > xs.len() {
                return Err(Error::Parameter(format!(
                    "neighbour count must lie in [1, {}], got {q}",
                    xs.len()
                )));
            }
            WeightState::NearestNeighbors
        }
        _ => {
            return Err(Error::Parameter(format!(
                "{} is not a local averaging learner",
                algorithm.name()
            )))
        }
    };
    Ok(model(xs, kernel, algorithm, state))
}

impl WeightModel {
    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn algorithm(&self) -> &WeightAlgorithm {
        &self.algorithm
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Nyström landmark indices, in sampling order.
    pub fn landmarks(&self) -> Option<&[usize]> {
        match &self.state {
            WeightState::Nystrom { landmarks, .. } => Some(landmarks),
            _ => None,
        }
    }

    /// Score vector `α(x) ∈ ℝⁿ`.
    pub fn alpha(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dims(self.input_dim(), x.len())?;
        match &self.state {
            WeightState::Ridge { solver } => solver.solve_vec(&self.kernel.eval_vector(&self.inputs, x)?),
            WeightState::L2Boost { coefficients } => Ok(coefficients * self.kernel.eval_vector(&self.inputs, x)?),
            WeightState::Pcr { vectors, inverse_values } => {
                let v = self.kernel.eval_vector(&self.inputs, x)?;
                let mut coef = vectors.tr_mul(&v);
                for (c, inv) in coef.iter_mut().zip(inverse_values) {
                    *c *= inv;
                }
                Ok(vectors * coef)
            }
            WeightState::RandomFeatures { map, features, solver } => {
                let u = solver.solve_vec(&map.features(x)?)?;
                Ok(features * u)
            }
            WeightState::Nystrom { landmarks, w } => {
                let v = DVector::from_iterator(
                    landmarks.len(),
                    landmarks.iter().map(|&i| self.kernel.eval_unchecked(&self.inputs[i], x)),
                );
                Ok(w * v)
            }
            WeightState::NadarayaWatson => {
                let v = self.kernel.eval_vector(&self.inputs, x)?;
                let mass = v.sum();
                if !(mass > NW_MIN_MASS) {
                    return Err(Error::Degenerate(format!(
                        "Nadaraya-Watson normalizer {mass:e} is not above {NW_MIN_MASS:e}"
                    )));
                }
                Ok(v / mass)
            }
            WeightState::NearestNeighbors => {
                let WeightAlgorithm::NearestNeighbors { q } = self.algorithm else {
                    unreachable!("state and algorithm tags agree");
                };
                let kxx = self.kernel.eval_unchecked(x, x);
                let mut ranked: Vec<(f64, usize)> = self
                    .inputs
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| {
                        let d2 = kxx + self.kernel.eval_unchecked(xi, xi) - 2.0 * self.kernel.eval_unchecked(x, xi);
                        (d2, i)
                    })
                    .collect();
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut alpha = DVector::zeros(self.n());
                for &(_, i) in ranked.iter().take(q) {
                    alpha[i] = 1.0;
                }
                Ok(alpha)
            }
        }
    }

    /// Scores for several points, one column per point.
    pub fn alphas(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n(), xs.len());
        for (j, x) in xs.iter().enumerate() {
            out.set_column(j, &self.alpha(x)?);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: WeightModel = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if model.version != MODEL_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported weight model version {} (expected {MODEL_VERSION})",
                model.version
            )));
        }
        input_dim(&model.inputs)?;
        Ok(model)
    }
}
