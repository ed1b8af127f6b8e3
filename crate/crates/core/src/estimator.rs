//! End-to-end structured predictor `f(x) = argmin_z Σ_i α_i(x) Δ(z, y_i)`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{
    decode_exhaustive, decode_sgd, decode_simplex, decode_sphere, DecodeProblem, Decoded, SgdConfig, SimplexConfig,
    SphereConfig,
};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::losses::{FiniteEmbedding, LossSpec, Output, OutputSpace};
use crate::rng::derive_seed;
use crate::weights::{fit_weights, WeightAlgorithm, WeightModel};

pub const PREDICTOR_VERSION: u32 = 1;

/// How the inference problem is solved at prediction time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoderStrategy {
    /// Enumeration for finite output spaces, the sphere or simplex solver for
    /// those spaces, and the training labels as candidates otherwise.
    #[default]
    Auto,
    /// Enumeration over the given candidates, or the declared output list.
    Exhaustive {
        #[serde(default)]
        candidates: Option<Vec<Output>>,
    },
    /// Enumeration over the training labels.
    TrainingLabels,
    Sgd {
        #[serde(default)]
        config: SgdConfig,
        /// Starting point; defaults to the best training label.
        #[serde(default)]
        init: Option<Vec<f64>>,
    },
    Sphere {
        #[serde(default)]
        config: SphereConfig,
    },
    Simplex {
        #[serde(default)]
        config: SimplexConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub kernel: KernelSpec,
    /// Defaults to ridge with `λ = n^{-1/2}`.
    pub algorithm: Option<WeightAlgorithm>,
    pub decoder: DecoderStrategy,
    /// Base seed of the stochastic decoders.
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            kernel: KernelSpec::gaussian(1.0),
            algorithm: None,
            decoder: DecoderStrategy::Auto,
            seed: 0,
        }
    }
}

/// `λ = n^{-1/2}`.
pub fn default_lambda(n: usize) -> f64 {
    (n.max(1) as f64).powf(-0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPredictor {
    version: u32,
    model: WeightModel,
    labels: Vec<Output>,
    loss: LossSpec,
    decoder: DecoderStrategy,
    seed: u64,
}

pub fn fit(config: &PredictorConfig, loss: &LossSpec, inputs: &[Vec<f64>], labels: &[Output]) -> Result<StructuredPredictor> {
    if inputs.is_empty() {
        return Err(Error::Input("cannot fit on an empty dataset".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Input(format!("{} inputs but {} labels", inputs.len(), labels.len())));
    }
    if let Some((i, bad)) = labels.iter().enumerate().find(|(_, y)| !loss.labels.contains(y)) {
        return Err(Error::Input(format!("label {i} ({bad:?}) is not in {}", loss.labels.describe())));
    }
    let algorithm = config
        .algorithm
        .clone()
        .unwrap_or(WeightAlgorithm::Ridge { lambda: default_lambda(inputs.len()) });
    let model = fit_weights(inputs, &config.kernel, &algorithm)?;
    Ok(StructuredPredictor {
        version: PREDICTOR_VERSION,
        model,
        labels: labels.to_vec(),
        loss: loss.clone(),
        decoder: config.decoder.clone(),
        seed: config.seed,
    })
}

/// Seed stream for a test point, derived from its coordinates so single and
/// batch predictions agree.
fn point_seed(base: u64, x: &[f64]) -> u64 {
    let bits: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
    derive_seed(base, &bits)
}

impl StructuredPredictor {
    pub fn model(&self) -> &WeightModel {
        &self.model
    }

    pub fn labels(&self) -> &[Output] {
        &self.labels
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn decoder(&self) -> &DecoderStrategy {
        &self.decoder
    }

    /// True when decoding falls back to the training labels as candidates
    /// because the output space has no enumerable or continuous solver.
    pub fn uses_label_fallback(&self) -> bool {
        match &self.decoder {
            DecoderStrategy::Auto => !matches!(
                self.loss.outputs,
                OutputSpace::Sphere { .. } | OutputSpace::Simplex { .. }
            ) && !self.loss.outputs.is_finite(),
            DecoderStrategy::Exhaustive { candidates: None } => !self.loss.outputs.is_finite(),
            DecoderStrategy::TrainingLabels => true,
            _ => false,
        }
    }

    pub fn alpha(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.model.alpha(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Output> {
        Ok(self.predict_decoded(x)?.output)
    }

    pub fn predict_decoded(&self, x: &[f64]) -> Result<Decoded> {
        let alpha = self.model.alpha(x)?;
        self.decode(alpha.as_slice(), point_seed(self.seed, x))
    }

    /// Decodes an arbitrary score vector with this predictor's strategy.
    pub fn decode(&self, alpha: &[f64], seed: u64) -> Result<Decoded> {
        let problem = DecodeProblem::new_unchecked(alpha, &self.labels, &self.loss)?;
        let outputs = &self.loss.outputs;
        match &self.decoder {
            DecoderStrategy::Auto => match outputs {
                OutputSpace::Sphere { .. } => decode_sphere(&problem, &SphereConfig::default()),
                OutputSpace::Simplex { .. } => decode_simplex(&problem, &SimplexConfig::default()),
                space => match space.elements() {
                    Some(el) => decode_exhaustive(&problem, &el),
                    None => decode_exhaustive(&problem, &self.labels),
                },
            },
            DecoderStrategy::Exhaustive { candidates } => match candidates {
                Some(c) => decode_exhaustive(&problem, c),
                None => decode_exhaustive(&problem, &outputs.elements().unwrap_or_else(|| self.labels.clone())),
            },
            DecoderStrategy::TrainingLabels => decode_exhaustive(&problem, &self.labels),
            DecoderStrategy::Sgd { config, init } => {
                let start = match init {
                    Some(v) => v.clone(),
                    None => self.best_label_point(&problem)?,
                };
                decode_sgd(&problem, &start, config, seed)
            }
            DecoderStrategy::Sphere { config } => decode_sphere(&problem, config),
            DecoderStrategy::Simplex { config } => decode_simplex(&problem, config),
        }
    }

    /// Training label in the output space with the lowest objective.
    fn best_label_point(&self, problem: &DecodeProblem) -> Result<Vec<f64>> {
        let inside: Vec<Output> = self.labels.iter().filter(|y| self.loss.outputs.contains(y)).cloned().collect();
        if inside.is_empty() {
            return Err(Error::Input("no training label lies in the output space; give an initial point".into()));
        }
        let best = decode_exhaustive(problem, &inside)?;
        Ok(best.output.as_point()?.to_vec())
    }

    /// Parallel prediction; results are in input order and equal to
    /// [`predict`](Self::predict) on each point.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Output>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn predict_batch_decoded(&self, xs: &[Vec<f64>]) -> Result<Vec<Decoded>> {
        xs.par_iter().map(|x| self.predict_decoded(x)).collect()
    }

    /// Prediction through the explicit embedding: `g(x) = Σ_i α_i(x) φ(y_i)`,
    /// then `argmin_z ⟨ψ(z), g(x)⟩` over the embedding's outputs with ties to
    /// the lowest index.
    pub fn predict_explicit_finite(&self, x: &[f64], embedding: &FiniteEmbedding) -> Result<Output> {
        let index = self.explicit_label_indices(embedding)?;
        let alpha = self.model.alpha(x)?;
        let g = embedding.embed_mixture(&index, &alpha)?;
        let scores = embedding.scores(&g)?;
        let mut best = 0;
        for (k, s) in scores.iter().enumerate() {
            if *s < scores[best] {
                best = k;
            }
        }
        Ok(embedding.outputs()[best].clone())
    }

    fn explicit_label_indices(&self, embedding: &FiniteEmbedding) -> Result<Vec<usize>> {
        if let Some(bad) = embedding.outputs().iter().find(|z| !self.loss.outputs.contains(z)) {
            return Err(Error::Input(format!("embedding output {bad:?} is not in the loss's output space")));
        }
        self.labels
            .iter()
            .map(|y| {
                embedding
                    .label_index(y)
                    .ok_or_else(|| Error::Input(format!("training label {y:?} is missing from the embedding")))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: StructuredPredictor = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if p.version != PREDICTOR_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported predictor version {} (expected {PREDICTOR_VERSION})",
                p.version
            )));
        }
        // Re-validate the stored model through its own loader.
        let model = WeightModel::from_json(&p.model.to_json()?)?;
        if model.n() != p.labels.len() {
            return Err(Error::Serialization(format!(
                "model has {} training points but {} labels are stored",
                model.n(),
                p.labels.len()
            )));
        }
        Ok(p)
    }
}

/// `(1/m) Σ_j Δ(f(x_j), y_j)`.
pub fn empirical_risk(predictor: &StructuredPredictor, xs: &[Vec<f64>], ys: &[Output], loss: &LossSpec) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Input("empirical risk needs a nonempty test set".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::Input(format!("{} test inputs but {} labels", xs.len(), ys.len())));
    }
    let preds = predictor.predict_batch(xs)?;
    let mut total = 0.0;
    for (z, y) in preds.iter().zip(ys) {
        total += loss.eval(z, y)?;
    }
    Ok(total / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{constant_loss, finite_embedding, make_loss, LossId};
    use proptest::prelude::*;

    fn zero_one(t: usize) -> LossSpec {
        make_loss(&LossId::ZeroOne { classes: t }).unwrap()
    }

    fn grid_inputs(k: usize) -> Vec<Vec<f64>> {
        (0..k).map(|i| vec![-1.0 + 2.0 * i as f64 / (k - 1) as f64]).collect()
    }

    #[test]
    fn single_point_ridge_predicts_its_label() {
        let loss = zero_one(3);
        let p = fit(&PredictorConfig::default(), &loss, &[vec![0.2]], &[Output::Class(2)]).unwrap();
        for x in grid_inputs(11) {
            assert!(p.alpha(&x).unwrap()[0] > 0.0);
            assert_eq!(p.predict(&x).unwrap(), Output::Class(2));
        }
    }

    #[test]
    fn default_algorithm_is_ridge_with_root_n_lambda() {
        let loss = zero_one(2);
        let xs = grid_inputs(16);
        let ys: Vec<Output> = (0..16).map(|i| Output::Class(i % 2)).collect();
        let p = fit(&PredictorConfig::default(), &loss, &xs, &ys).unwrap();
        assert_eq!(p.model().algorithm(), &WeightAlgorithm::Ridge { lambda: 0.25 });
    }

    #[test]
    fn nearest_neighbor_memorizes() {
        let loss = zero_one(4);
        let xs = grid_inputs(12);
        let ys: Vec<Output> = (0..12).map(|i| Output::Class((i * 7) % 4)).collect();
        let cfg = PredictorConfig {
            algorithm: Some(WeightAlgorithm::NearestNeighbors { q: 1 }),
            ..PredictorConfig::default()
        };
        let p = fit(&cfg, &loss, &xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(&p.predict(x).unwrap(), y);
        }
        assert_eq!(empirical_risk(&p, &xs, &ys, &loss).unwrap(), 0.0);
    }

    #[test]
    fn far_away_point_falls_back_to_first_candidate() {
        let loss = zero_one(3);
        let cfg = PredictorConfig { kernel: KernelSpec::gaussian(0.1), ..PredictorConfig::default() };
        let p = fit(&cfg, &loss, &[vec![0.0], vec![0.1]], &[Output::Class(2), Output::Class(1)]).unwrap();
        let a = p.alpha(&[100.0]).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1e-300));
        assert_eq!(p.predict(&[100.0]).unwrap(), Output::Class(0));
    }

    #[test]
    fn sphere_task_single_label() {
        let loss = make_loss(&LossId::GeodesicSphereSq { dim: 3 }).unwrap();
        let y = vec![0.0, 0.6, 0.8];
        let p = fit(&PredictorConfig::default(), &loss, &[vec![0.5, 0.5]], &[Output::Point(y.clone())]).unwrap();
        let z = p.predict(&[-0.3, 0.9]).unwrap();
        let z = z.as_point().unwrap();
        let c: f64 = z.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(c.clamp(-1.0, 1.0).acos() < 1e-3);
    }

    #[test]
    fn explicit_path_agrees_on_a_grid() {
        let loss = zero_one(3);
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let ys: Vec<Output> = (0..30).map(|i| Output::Class((i * i) % 3)).collect();
        let p = fit(&PredictorConfig::default(), &loss, &xs, &ys).unwrap();
        let classes: Vec<Output> = (0..3).map(Output::Class).collect();
        let emb = finite_embedding(&loss, &classes, &classes).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let x = [-1.0 + i as f64 * 2.0 / 9.0, -1.0 + j as f64 * 2.0 / 9.0];
                let implicit = p.predict(&x).unwrap();
                assert_eq!(implicit, p.predict_explicit_finite(&x, &emb).unwrap());
                // 0-1 loss: argmin of (11ᵀ − I)g is the argmax of g.
                let alpha = p.alpha(&x).unwrap();
                let idx: Vec<usize> = ys.iter().map(|y| y.as_class().unwrap()).collect();
                let g = emb.embed_mixture(&idx, &alpha).unwrap();
                let mut arg = 0;
                for k in 1..3 {
                    if g[k] > g[arg] {
                        arg = k;
                    }
                }
                assert_eq!(implicit, Output::Class(arg));
            }
        }
    }

    #[test]
    fn explicit_path_rejects_mismatched_embeddings() {
        let loss = zero_one(3);
        let p = fit(&PredictorConfig::default(), &loss, &[vec![0.0]], &[Output::Class(2)]).unwrap();
        let two: Vec<Output> = (0..2).map(Output::Class).collect();
        let emb = finite_embedding(&loss, &two, &two).unwrap();
        assert!(p.predict_explicit_finite(&[0.0], &emb).is_err());
    }

    #[test]
    fn fit_validation() {
        let loss = zero_one(2);
        assert!(fit(&PredictorConfig::default(), &loss, &[], &[]).is_err());
        assert!(fit(&PredictorConfig::default(), &loss, &[vec![0.0]], &[]).is_err());
        assert!(fit(&PredictorConfig::default(), &loss, &[vec![0.0]], &[Output::Class(2)]).is_err());
    }

    #[test]
    fn constant_loss_risk() {
        let loss = constant_loss(0.7, OutputSpace::Classes { count: 2 }, OutputSpace::Classes { count: 2 }).unwrap();
        let xs = grid_inputs(5);
        let ys: Vec<Output> = (0..5).map(|i| Output::Class(i % 2)).collect();
        let p = fit(&PredictorConfig::default(), &loss, &xs, &ys).unwrap();
        assert!((empirical_risk(&p, &xs, &ys, &loss).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn label_fallback_is_flagged() {
        let loss = make_loss(&LossId::SquaredEuclidean { dim: 1, radius: None }).unwrap();
        let xs = grid_inputs(4);
        let ys: Vec<Output> = [0.5, -0.2, 0.1, 0.9].iter().map(|&v| Output::scalar(v)).collect();
        let p = fit(&PredictorConfig::default(), &loss, &xs, &ys).unwrap();
        assert!(p.uses_label_fallback());
        assert!(ys.contains(&p.predict(&[0.3]).unwrap()));
        let sgd = PredictorConfig {
            decoder: DecoderStrategy::Sgd { config: SgdConfig::default(), init: None },
            ..PredictorConfig::default()
        };
        let q = fit(&sgd, &loss, &xs, &ys).unwrap();
        assert!(!q.uses_label_fallback());
        // Squared loss decodes to the weighted mean Σα_i y_i / Σα_i when α ≥ 0.
        let a = q.alpha(&[0.3]).unwrap();
        let z = q.predict(&[0.3]).unwrap().as_point().unwrap()[0];
        let f = |t: f64| a.iter().zip(&ys).map(|(w, y)| w * (t - y.as_point().unwrap()[0]).powi(2)).sum::<f64>();
        assert!(f(z) <= f(ys[0].as_point().unwrap()[0]));
    }

    #[test]
    fn batch_equals_single_and_is_deterministic() {
        let loss = make_loss(&LossId::GeodesicSphereSq { dim: 2 }).unwrap();
        let xs = grid_inputs(9);
        let ys: Vec<Output> = (0..9).map(|i| Output::Point(vec![(i as f64).cos(), (i as f64).sin()])).collect();
        let cfg = PredictorConfig {
            decoder: DecoderStrategy::Sgd { config: SgdConfig { steps: 200, ..SgdConfig::default() }, init: None },
            seed: 42,
            ..PredictorConfig::default()
        };
        let p = fit(&cfg, &loss, &xs, &ys).unwrap();
        let tests = grid_inputs(7);
        let batch = p.predict_batch(&tests).unwrap();
        for (x, z) in tests.iter().zip(&batch) {
            assert_eq!(&p.predict(x).unwrap(), z);
        }
        assert_eq!(p.predict_batch(&tests).unwrap(), batch);
    }

    #[test]
    fn json_roundtrip() {
        let loss = zero_one(3);
        let xs = grid_inputs(6);
        let ys: Vec<Output> = (0..6).map(|i| Output::Class(i % 3)).collect();
        let p = fit(&PredictorConfig::default(), &loss, &xs, &ys).unwrap();
        let back = StructuredPredictor::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let bad = p.to_json().unwrap().replace("\"version\":1", "\"version\":7");
        assert!(StructuredPredictor::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn rescaling_weights_keeps_predictions(c in 0.001f64..1000.0, seed in 0u64..1000) {
            let loss = zero_one(4);
            let xs = grid_inputs(10);
            let ys: Vec<Output> = (0..10).map(|i| Output::Class(((i as u64 * 31 + seed) % 4) as usize)).collect();
            let p = fit(&PredictorConfig::default(), &loss, &xs, &ys).unwrap();
            let a = p.alpha(&[0.33]).unwrap();
            let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
            prop_assert_eq!(p.decode(a.as_slice(), 0).unwrap().output, p.decode(&scaled, 0).unwrap().output);
        }
    }
}
