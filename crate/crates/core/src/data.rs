//! Synthetic tasks with known ground truth.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_sphere, DecodeProblem, SphereConfig};
use crate::diagnostics::SyntheticDistribution;
use crate::error::{Error, Result};
use crate::losses::{LossSpec, Output};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Draws per independently seeded chunk in [`sample`].
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<Output>,
    pub task: String,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<Output>, task: impl Into<String>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Input(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        crate::kernels::input_dim(&inputs)?;
        Ok(Dataset { inputs, labels, task: task.into() })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Checks every label against the loss domain.
    pub fn validate_labels(&self, loss: &LossSpec) -> Result<()> {
        for (i, y) in self.labels.iter().enumerate() {
            if !loss.labels.contains(y) {
                return Err(Error::Input(format!("label {i} ({y:?}) is outside {}", loss.labels.describe())));
            }
        }
        Ok(())
    }

    /// Inputs as CSV with header `x0,x1,...`.
    pub fn write_inputs_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_inputs_csv(&self.inputs, writer)
    }

    /// Labels as a JSON array.
    pub fn write_labels_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &self.labels).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn read<R1: Read, R2: Read>(inputs: R1, labels: R2, task: impl Into<String>) -> Result<Self> {
        let inputs = read_inputs_csv(inputs)?;
        let labels: Vec<Output> = serde_json::from_reader(labels).map_err(|e| Error::Serialization(e.to_string()))?;
        Dataset::new(inputs, labels, task)
    }
}

pub fn write_inputs_csv<W: Write>(inputs: &[Vec<f64>], writer: W) -> Result<()> {
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    let d = inputs.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((0..d).map(|j| format!("x{j}"))).map_err(err)?;
    for x in inputs {
        w.write_record(x.iter().map(f64::to_string)).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn read_inputs_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Serialization(e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Input(format!("input row {}: {e}", i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

/// I.i.d. draws: support point by marginal, then label by conditional.
///
/// Draws are generated in chunks of fixed size with seeds derived from
/// `seed`, so the result does not depend on the thread count.
pub fn sample(dist: &SyntheticDistribution, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Parameter("sample size must be at least 1".into()));
    }
    let err = |e: rand::distr::weighted::Error| Error::Input(e.to_string());
    let marginal = WeightedIndex::new(dist.marginal()).map_err(err)?;
    let conditionals = dist
        .conditionals()
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(err))
        .collect::<Result<Vec<_>>>()?;
    let chunks = n.div_ceil(CHUNK);
    let draws: Vec<(usize, usize)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
            let len = CHUNK.min(n - c * CHUNK);
            let (marginal, conditionals) = (&marginal, &conditionals);
            (0..len)
                .map(move |_| {
                    let k = marginal.sample(&mut rng);
                    (k, conditionals[k].sample(&mut rng))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let inputs = draws.iter().map(|&(k, _)| dist.support()[k].clone()).collect();
    let labels = draws.iter().map(|&(_, j)| dist.labels()[j].clone()).collect();
    Dataset::new(inputs, labels, "finite")
}

/// Random field `x ↦ Σ_j a_j cos(⟨w_j, x⟩ + b_j)` with unit-scale frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CosineField {
    amplitudes: Vec<f64>,
    frequencies: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

const FIELD_TERMS: usize = 4;

impl CosineField {
    fn random(rng: &mut Rng, d: usize) -> Self {
        let amplitudes = (0..FIELD_TERMS).map(|_| rng.sample(StandardNormal)).collect();
        let frequencies = (0..FIELD_TERMS)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let phases = (0..FIELD_TERMS).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        CosineField { amplitudes, frequencies, phases }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.amplitudes
            .iter()
            .zip(&self.frequencies)
            .zip(&self.phases)
            .map(|((a, w), b)| a * (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b).cos())
            .sum()
    }

    /// `Σ_j |a_j|`, a bound on `|eval|`.
    fn amplitude_bound(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.abs()).sum()
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Rescales a probability row so it sums to one to the last bit where possible.
fn renormalize(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

fn uniform_box(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// `m` support points uniform on `[−1,1]^d` with uniform marginal and
/// `ρ(·|x) = softmax(s(x)/temperature)` for random smooth scores `s_t`.
pub fn gen_finite_classification(
    seed: u64,
    d: usize,
    classes: usize,
    m: usize,
    temperature: f64,
) -> Result<SyntheticDistribution> {
    if d == 0 || classes < 2 || m < 2 {
        return Err(Error::Parameter(format!("need d >= 1, T >= 2, m >= 2; got d={d}, T={classes}, m={m}")));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
    }
    let mut rng = rng_from_seed(seed);
    let fields: Vec<CosineField> = (0..classes).map(|_| CosineField::random(&mut rng, d)).collect();
    let support: Vec<Vec<f64>> = (0..m).map(|_| uniform_box(&mut rng, d)).collect();
    let conditionals = support
        .iter()
        .map(|x| {
            let s: Vec<f64> = fields.iter().map(|f| f.eval(x) / temperature).collect();
            renormalize(softmax(&s))
        })
        .collect();
    let marginal = vec![1.0 / m as f64; m];
    SyntheticDistribution::with_classes(support, renormalize(marginal), conditionals)
}

/// Binary task on `m` equispaced points of `[−1,1]` with uniform marginal
/// and `P(y = 1 | x) = 1/2 + a sin(ω π x)`.
///
/// The decision boundary crosses the support `⌈ω⌉` times or more, so the
/// Bayes classifier is never trivial and the excess risk of a learner decays
/// instead of hitting zero at moderate sample sizes.
pub fn gen_smooth_binary(m: usize, amplitude: f64, frequency: f64) -> Result<SyntheticDistribution> {
    if m < 2 {
        return Err(Error::Parameter(format!("need m >= 2, got {m}")));
    }
    if !(amplitude > 0.0 && amplitude <= 0.5) {
        return Err(Error::Parameter(format!("amplitude must be in (0, 1/2], got {amplitude}")));
    }
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::Parameter(format!("frequency must be positive, got {frequency}")));
    }
    let support: Vec<Vec<f64>> = (0..m).map(|i| vec![-1.0 + 2.0 * i as f64 / (m - 1) as f64]).collect();
    let conditionals = support
        .iter()
        .map(|x| {
            let p1 = 0.5 + amplitude * (frequency * std::f64::consts::PI * x[0]).sin();
            vec![1.0 - p1, p1]
        })
        .collect();
    SyntheticDistribution::with_classes(support, vec![1.0 / m as f64; m], conditionals)
}

/// Sphere-valued regression: `x` uniform on `[−1,1]^p`, `y` the image of
/// an isotropic tangent Gaussian at `μ(x)` under the exponential map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereTask {
    dim: usize,
    input_dim: usize,
    /// `None` means noiseless labels.
    concentration: Option<f64>,
    offset: Vec<f64>,
    fields: Vec<CosineField>,
}

pub const SPHERE_INPUT_DIM: usize = 2;

/// Sphere regression in ambient dimension `d` with noise concentration
/// `κ_c` (`None` for infinite) and inputs in `[−1,1]^2`.
pub fn gen_sphere_regression(seed: u64, d: usize, concentration: Option<f64>) -> Result<SphereTask> {
    gen_sphere_regression_with(seed, d, SPHERE_INPUT_DIM, concentration)
}

pub fn gen_sphere_regression_with(
    seed: u64,
    d: usize,
    input_dim: usize,
    concentration: Option<f64>,
) -> Result<SphereTask> {
    if d < 2 || input_dim == 0 {
        return Err(Error::Parameter(format!("need sphere dimension >= 2 and input dimension >= 1, got {d}, {input_dim}")));
    }
    if let Some(k) = concentration {
        if !(k > 0.0) {
            return Err(Error::Parameter(format!("concentration must be positive, got {k}")));
        }
    }
    let mut rng = rng_from_seed(seed);
    let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let offset = raw.iter().map(|v| 2.0 * v / norm).collect();
    let fields = (0..d).map(|_| CosineField::random(&mut rng, input_dim)).collect();
    Ok(SphereTask { dim: d, input_dim, concentration, offset, fields })
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

impl SphereTask {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn concentration(&self) -> Option<f64> {
        self.concentration
    }

    /// `μ(x) = normalize(c + u(x))` with `‖c‖ = 2` and `‖u(x)‖ ≤ 1`, so the
    /// normalization never divides by a small number.
    pub fn mean_direction(&self, x: &[f64]) -> Vec<f64> {
        let scale = (self.dim as f64).sqrt();
        let v = self
            .offset
            .iter()
            .zip(&self.fields)
            .map(|(c, f)| c + f.eval(x) / (f.amplitude_bound().max(1e-12) * scale))
            .collect();
        unit(v)
    }

    /// Bayes predictor under the squared geodesic loss. The noise is
    /// isotropic around `μ(x)`, so the intrinsic mean is `μ(x)` itself.
    pub fn fstar(&self, x: &[f64]) -> Vec<f64> {
        self.mean_direction(x)
    }

    fn perturb(&self, mu: &[f64], rng: &mut Rng) -> Vec<f64> {
        let Some(kappa) = self.concentration else {
            return mu.to_vec();
        };
        let sd = kappa.sqrt().recip();
        let raw: Vec<f64> = (0..self.dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let dot: f64 = raw.iter().zip(mu).map(|(a, b)| a * b).sum();
        let v: Vec<f64> = raw.iter().zip(mu).map(|(a, b)| a - dot * b).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r < 1e-300 {
            return mu.to_vec();
        }
        unit(mu.iter().zip(&v).map(|(m, t)| r.cos() * m + r.sin() * t / r).collect())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Parameter("sample size must be at least 1".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x = uniform_box(&mut rng, self.input_dim);
            let y = self.perturb(&self.mean_direction(&x), &mut rng);
            inputs.push(x);
            labels.push(Output::Point(y));
        }
        Dataset::new(inputs, labels, format!("sphere(d={})", self.dim))
    }

    /// Labels drawn at a fixed input, for estimating the conditional law.
    pub fn sample_at(&self, x: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mu = self.mean_direction(x);
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| self.perturb(&mu, &mut rng)).collect()
    }
}

/// Intrinsic (Fréchet) mean of unit vectors under the squared geodesic
/// distance, computed by the sphere decoder with uniform weights.
pub fn intrinsic_mean(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = crate::kernels::input_dim(points)?;
    let loss = crate::losses::make_loss(&crate::losses::LossId::GeodesicSphereSq { dim: d })?;
    let labels: Vec<Output> = points.iter().map(|p| Output::Point(p.clone())).collect();
    let alpha = vec![1.0 / points.len() as f64; points.len()];
    let problem = DecodeProblem::new(&alpha, &labels, &loss)?;
    let decoded = decode_sphere(&problem, &SphereConfig::default())?;
    Ok(decoded.output.as_point().map(<[f64]>::to_vec).unwrap_or_default())
}

/// Histogram-valued regression: `y ~ Dirichlet(c · softmax(s(x)))` with
/// smooth random scores and `x` uniform on `[−1,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramTask {
    bins: usize,
    input_dim: usize,
    concentration: f64,
    fields: Vec<CosineField>,
}

pub const HISTOGRAM_CONCENTRATION: f64 = 20.0;

pub fn gen_histogram_task(seed: u64, bins: usize, d: usize) -> Result<HistogramTask> {
    gen_histogram_task_with(seed, bins, d, HISTOGRAM_CONCENTRATION)
}

pub fn gen_histogram_task_with(seed: u64, bins: usize, d: usize, concentration: f64) -> Result<HistogramTask> {
    if bins < 2 || d == 0 {
        return Err(Error::Parameter(format!("need bins >= 2 and d >= 1, got {bins}, {d}")));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::Parameter(format!("Dirichlet concentration must be positive, got {concentration}")));
    }
    let mut rng = rng_from_seed(seed);
    let fields = (0..bins).map(|_| CosineField::random(&mut rng, d)).collect();
    Ok(HistogramTask { bins, input_dim: d, concentration, fields })
}

impl HistogramTask {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `E[y | x]`.
    pub fn mean_histogram(&self, x: &[f64]) -> Vec<f64> {
        let s: Vec<f64> = self.fields.iter().map(|f| f.eval(x)).collect();
        softmax(&s)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Parameter("sample size must be at least 1".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x = uniform_box(&mut rng, self.input_dim);
            let mean = self.mean_histogram(&x);
            let mut draws = Vec::with_capacity(self.bins);
            for m in &mean {
                let shape = (self.concentration * m).max(1e-300);
                let g = Gamma::new(shape, 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
                draws.push(g.sample(&mut rng));
            }
            let total: f64 = draws.iter().sum();
            let y = if total > 0.0 && total.is_finite() {
                draws.iter().map(|v| v / total).collect()
            } else {
                // All gamma draws underflowed; fall back on the conditional mean.
                mean
            };
            inputs.push(x);
            labels.push(Output::Point(y));
        }
        Dataset::new(inputs, labels, format!("histogram(bins={})", self.bins))
    }
}
