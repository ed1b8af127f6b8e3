//! Inference `f(x) = argmin_z Σ_i α_i(x) Δ(z, y_i)`.
//!
//! Finite output sets are decoded by enumeration. Continuous output spaces use
//! a projected stochastic subgradient method, Riemannian gradient descent on
//! the sphere, or exponentiated gradient on the simplex.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossSpec, Output, OutputSpace};
use crate::rng::rng_from_seed;

/// Weights, training labels and loss defining `F(z) = Σ_i α_i Δ(z, y_i)`.
#[derive(Debug, Clone, Copy)]
pub struct DecodeProblem<'a> {
    alpha: &'a [f64],
    labels: &'a [Output],
    loss: &'a LossSpec,
}

/// A decoded output with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub output: Output,
    pub objective: f64,
    /// Index into the candidate list for enumerative decoding.
    pub candidate: Option<usize>,
    /// Objective per iteration for iterative decoders.
    pub trace: Vec<f64>,
}

impl<'a> DecodeProblem<'a> {
    pub fn new(alpha: &'a [f64], labels: &'a [Output], loss: &'a LossSpec) -> Result<Self> {
        let p = Self::new_unchecked(alpha, labels, loss)?;
        if let Some(bad) = labels.iter().find(|y| !loss.labels.contains(y)) {
            return Err(Error::Input(format!("label {bad:?} is not in {}", loss.labels.describe())));
        }
        Ok(p)
    }

    /// Skips the label-domain check; labels are assumed validated upstream.
    pub(crate) fn new_unchecked(alpha: &'a [f64], labels: &'a [Output], loss: &'a LossSpec) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Input("decoding needs at least one training label".into()));
        }
        if alpha.len() != labels.len() {
            return Err(Error::Input(format!("{} weights for {} labels", alpha.len(), labels.len())));
        }
        if let Some(a) = alpha.iter().find(|a| !a.is_finite()) {
            return Err(Error::Numeric(format!("non-finite weight {a}")));
        }
        Ok(DecodeProblem { alpha, labels, loss })
    }

    pub fn alpha(&self) -> &[f64] {
        self.alpha
    }

    pub fn labels(&self) -> &[Output] {
        self.labels
    }

    pub fn loss(&self) -> &LossSpec {
        self.loss
    }

    /// `a = Σ_i |α_i|`.
    pub fn mass(&self) -> f64 {
        self.alpha.iter().map(|a| a.abs()).sum()
    }

    /// `F(z)`, summed in index order.
    pub fn objective(&self, z: &Output) -> Result<f64> {
        if !self.loss.outputs.contains(z) {
            return Err(Error::Input(format!("candidate {z:?} is not in {}", self.loss.outputs.describe())));
        }
        self.objective_unchecked(z)
    }

    fn objective_unchecked(&self, z: &Output) -> Result<f64> {
        let mut total = 0.0;
        for (a, y) in self.alpha.iter().zip(self.labels) {
            if *a != 0.0 {
                total += a * self.loss.eval(z, y)?;
            }
        }
        Ok(total)
    }

    fn point_objective(&self, z: &[f64]) -> Result<f64> {
        self.objective_unchecked(&Output::Point(z.to_vec()))
    }

    /// `∇F(z) = Σ_i α_i ∂_z Δ(z, y_i)`.
    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; z.len()];
        for (a, y) in self.alpha.iter().zip(self.labels) {
            if *a != 0.0 {
                for (gk, dk) in g.iter_mut().zip(self.loss.subgradient(z, y)?) {
                    *gk += a * dk;
                }
            }
        }
        Ok(g)
    }

    /// The law of the stochastic gradient at `z`: pairs `(P(i), ĝ_i)` with
    /// `P(i) = |α_i| / a` and `ĝ_i = sign(α_i) · a · ∂_z Δ(z, y_i)`.
    pub fn stochastic_gradient_terms(&self, z: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        let a = self.mass();
        if a == 0.0 {
            return Err(Error::Degenerate("all decoding weights are zero".into()));
        }
        let mut out = Vec::new();
        for (alpha, y) in self.alpha.iter().zip(self.labels) {
            if *alpha == 0.0 {
                continue;
            }
            let g = self.loss.subgradient(z, y)?;
            out.push((alpha.abs() / a, g.into_iter().map(|v| alpha.signum() * a * v).collect()));
        }
        Ok(out)
    }
}

/// Minimizes `F` over `candidates`; ties go to the lowest index.
pub fn decode_exhaustive(problem: &DecodeProblem, candidates: &[Output]) -> Result<Decoded> {
    if candidates.is_empty() {
        return Err(Error::Input("no decoding candidates".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, z) in candidates.iter().enumerate() {
        let f = problem.objective(z)?;
        if best.is_none_or(|(_, b)| f < b) {
            best = Some((k, f));
        }
    }
    let (k, objective) = best.expect("candidates are nonempty");
    Ok(Decoded { output: candidates[k].clone(), objective, candidate: Some(k), trace: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `γ_k = gamma`.
    Constant { gamma: f64 },
    /// `γ_k = gamma0 / √k`.
    InvSqrt { gamma0: f64 },
    /// `γ_k = gamma0 / k`.
    Inverse { gamma0: f64 },
}

impl StepSchedule {
    pub fn step(&self, k: usize) -> f64 {
        let k = k.max(1) as f64;
        match *self {
            StepSchedule::Constant { gamma } => gamma,
            StepSchedule::InvSqrt { gamma0 } => gamma0 / k.sqrt(),
            StepSchedule::Inverse { gamma0 } => gamma0 / k,
        }
    }

    fn validate(&self) -> Result<()> {
        let g = match *self {
            StepSchedule::Constant { gamma } => gamma,
            StepSchedule::InvSqrt { gamma0 } | StepSchedule::Inverse { gamma0 } => gamma0,
        };
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Parameter(format!("step size must be positive, got {g}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgdReturn {
    /// Iterate with the lowest objective (including the start).
    #[default]
    Best,
    /// Projection of the running average of the iterates.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub steps: usize,
    pub schedule: StepSchedule,
    pub ret: SgdReturn,
    /// Divide each step by `a = Σ|α_i|` so the schedule does not depend on
    /// the overall scale of the weights.
    pub scale_by_mass: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            steps: 1000,
            schedule: StepSchedule::InvSqrt { gamma0: 0.5 },
            ret: SgdReturn::Best,
            scale_by_mass: true,
        }
    }
}

/// Projected stochastic subgradient descent on `F`.
///
/// At step `k` an index `i` is drawn with probability `|α_i| / a`, and
/// `z ← Proj(z − γ_k ĝ)` with `ĝ = sign(α_i) · a · ∂_z Δ(z, y_i)`, an unbiased
/// estimate of a subgradient of `F`.
pub fn decode_sgd(problem: &DecodeProblem, init: &[f64], config: &SgdConfig, seed: u64) -> Result<Decoded> {
    config.schedule.validate()?;
    let space = &problem.loss.outputs;
    let a = problem.mass();
    if a == 0.0 {
        return Err(Error::Degenerate("all decoding weights are zero".into()));
    }
    let mut z = init.to_vec();
    space.project(&mut z)?;
    // Fail early when the loss has no subgradient.
    problem.loss.subgradient(&z, &problem.labels[0])?;
    let sampler = WeightedIndex::new(problem.alpha.iter().map(|v| v.abs()))
        .map_err(|e| Error::Degenerate(format!("cannot sample decoding weights: {e}")))?;
    let mut rng = rng_from_seed(seed);
    let scale = if config.scale_by_mass { 1.0 / a } else { 1.0 };
    let track = config.ret == SgdReturn::Best;

    let mut best_f = problem.point_objective(&z)?;
    let mut best = z.clone();
    let mut trace = vec![best_f];
    let mut sum = z.clone();
    for k in 1..=config.steps {
        let i = sampler.sample(&mut rng);
        let g = problem.loss.subgradient(&z, &problem.labels[i])?;
        let coef = config.schedule.step(k) * scale * problem.alpha[i].signum() * a;
        for (zk, gk) in z.iter_mut().zip(&g) {
            *zk -= coef * gk;
        }
        space.project(&mut z)?;
        for (s, v) in sum.iter_mut().zip(&z) {
            *s += v;
        }
        if track {
            let f = problem.point_objective(&z)?;
            trace.push(f);
            if f < best_f {
                best_f = f;
                best.clone_from(&z);
            }
        }
    }
    let (output, objective) = match config.ret {
        SgdReturn::Best => (best, best_f),
        SgdReturn::Average => {
            let mut avg: Vec<f64> = sum.iter().map(|s| s / (config.steps + 1) as f64).collect();
            space.project(&mut avg)?;
            let f = problem.point_objective(&avg)?;
            trace.push(f);
            (avg, f)
        }
    };
    Ok(Decoded { output: Output::Point(output), objective, candidate: None, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereConfig {
    /// Iteration cap for each descent.
    pub iterations: usize,
    /// Initial step before backtracking.
    pub step: f64,
    /// Number of seeds descended from.
    pub starts: usize,
    pub init: Option<Vec<f64>>,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig { iterations: 200, step: 1.0, starts: 16, init: None }
    }
}

const GENERIC_SEEDS: usize = 32;
const SPHERE_SEED: u64 = 0x5_1E7E;

/// Sufficient-decrease constant of the sphere line search; one half accepts
/// steps up to the inverse local curvature and rejects oscillating ones.
const ARMIJO: f64 = 0.5;
const MAX_HALVINGS: usize = 60;

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-12 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

/// Riemannian gradient descent on the unit sphere with Armijo backtracking.
///
/// Descends from the best `starts` seeds among the initial point, the
/// training labels and their antipodes, normalized sums and differences of
/// the heaviest labels, the normalized weighted mean, and a fixed set of
/// generic directions.
pub fn decode_sphere(problem: &DecodeProblem, config: &SphereConfig) -> Result<Decoded> {
    let dim = match problem.loss.outputs {
        OutputSpace::Sphere { dim } => dim,
        ref other => {
            return Err(Error::Capability(format!("sphere decoding on {}", other.describe())));
        }
    };
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(Error::Parameter(format!("step must be positive, got {}", config.step)));
    }
    let points: Vec<&[f64]> = problem.labels.iter().map(|y| y.as_point()).collect::<Result<_>>()?;
    let init = match &config.init {
        Some(v) => normalized(v).ok_or_else(|| Error::Input("initial point is zero".into()))?,
        None => points[0].to_vec(),
    };
    if init.len() != dim {
        return Err(Error::Input(format!("initial point has dimension {}, expected {dim}", init.len())));
    }
    if problem.mass() == 0.0 {
        let objective = problem.point_objective(&init)?;
        return Ok(Decoded { output: Output::Point(init), objective, candidate: None, trace: vec![objective] });
    }

    let mut seeds = vec![init];
    for p in &points {
        seeds.push(p.to_vec());
        seeds.push(p.iter().map(|v| -v).collect());
    }
    let mut heavy: Vec<usize> = (0..points.len()).collect();
    heavy.sort_by(|&i, &j| problem.alpha[j].abs().total_cmp(&problem.alpha[i].abs()));
    heavy.truncate(8);
    for (a, &i) in heavy.iter().enumerate() {
        for &j in &heavy[a + 1..] {
            for sign in [1.0, -1.0] {
                let mid: Vec<f64> = points[i].iter().zip(points[j]).map(|(u, v)| u + sign * v).collect();
                if let Some(m) = normalized(&mid) {
                    seeds.push(m.iter().map(|v| -v).collect());
                    seeds.push(m);
                }
            }
        }
    }
    let mut mean = vec![0.0; dim];
    for (a, p) in problem.alpha.iter().zip(&points) {
        for (m, v) in mean.iter_mut().zip(p.iter()) {
            *m += a * v;
        }
    }
    if let Some(m) = normalized(&mean) {
        seeds.push(m.iter().map(|v| -v).collect());
        seeds.push(m);
    }
    // Fixed generic directions so symmetric problems have seeds off the
    // critical set spanned by the labels.
    let mut rng = rng_from_seed(SPHERE_SEED);
    for _ in 0..GENERIC_SEEDS {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(v) = normalized(&v) {
            seeds.push(v);
        }
    }

    let mut scored: Vec<(f64, usize)> = seeds
        .iter()
        .enumerate()
        .map(|(k, s)| problem.point_objective(s).map(|f| (f, k)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    for &(_, k) in scored.iter().take(config.starts.max(1)) {
        let (z, f, trace) = riemannian_descent(problem, seeds[k].clone(), config)?;
        if best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((z, f, trace));
        }
    }
    let (z, objective, trace) = best.expect("at least one start");
    Ok(Decoded { output: Output::Point(z), objective, candidate: None, trace })
}

fn riemannian_descent(problem: &DecodeProblem, mut z: Vec<f64>, config: &SphereConfig) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let mut f = problem.point_objective(&z)?;
    let mut trace = vec![f];
    for _ in 0..config.iterations {
        let g = problem.gradient(&z)?;
        let radial: f64 = g.iter().zip(&z).map(|(a, b)| a * b).sum();
        let tangent: Vec<f64> = g.iter().zip(&z).map(|(a, b)| a - radial * b).collect();
        let gn2: f64 = tangent.iter().map(|v| v * v).sum();
        if gn2.sqrt() < 1e-12 {
            break;
        }
        let mut t = config.step;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = z.iter().zip(&tangent).map(|(a, b)| a - t * b).collect();
            let cand = normalized(&cand).ok_or_else(|| Error::Numeric("sphere iterate collapsed to zero".into()))?;
            let fc = problem.point_objective(&cand)?;
            if fc <= f - ARMIJO * t * gn2 {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                let done = f - fc <= 1e-15 * f.abs().max(1.0);
                z = cand;
                f = fc;
                trace.push(f);
                if done {
                    break;
                }
            }
            None => break,
        }
    }
    // Renormalize so the returned norm is 1 to working precision.
    let z = normalized(&z).ok_or_else(|| Error::Numeric("sphere iterate collapsed to zero".into()))?;
    let f = problem.point_objective(&z)?;
    Ok((z, f, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexConfig {
    pub iterations: usize,
    pub step: f64,
    /// Defaults to the uniform histogram.
    pub init: Option<Vec<f64>>,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        SimplexConfig { iterations: 500, step: 1.0, init: None }
    }
}

/// Exponentiated-gradient descent on the probability simplex with
/// backtracking on the step.
pub fn decode_simplex(problem: &DecodeProblem, config: &SimplexConfig) -> Result<Decoded> {
    let bins = match problem.loss.outputs {
        OutputSpace::Simplex { bins } => bins,
        ref other => {
            return Err(Error::Capability(format!("simplex decoding on {}", other.describe())));
        }
    };
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(Error::Parameter(format!("step must be positive, got {}", config.step)));
    }
    let init = config.init.clone().unwrap_or_else(|| vec![1.0 / bins as f64; bins]);
    if init.len() != bins || !(OutputSpace::Simplex { bins }).contains(&Output::Point(init.clone())) {
        return Err(Error::Input(format!("initial point is not a histogram over {bins} bins")));
    }
    let mut z = init;
    let mut f = problem.point_objective(&z)?;
    let mut trace = vec![f];
    if problem.mass() == 0.0 {
        return Ok(Decoded { output: Output::Point(z), objective: f, candidate: None, trace });
    }
    // Work in log space so small masses stay representable.
    let mut logz: Vec<f64> = z.iter().map(|v| v.max(1e-300).ln()).collect();
    let mut t = config.step;
    for _ in 0..config.iterations {
        let g = problem.gradient(&z)?;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand_log: Vec<f64> = logz.iter().zip(&g).map(|(l, gk)| l - t * gk).collect();
            let cand = softmax(&cand_log)?;
            let fc = problem.point_objective(&cand)?;
            // Mirror-descent sufficient decrease with the KL divergence as
            // the proximity term.
            let lin: f64 = g.iter().zip(z.iter().zip(&cand)).map(|(gk, (a, b))| gk * (b - a)).sum();
            let kl: f64 = cand
                .iter()
                .zip(&z)
                .filter(|(b, _)| **b > 0.0)
                .map(|(b, a)| b * (b.ln() - a.max(1e-300).ln()))
                .sum();
            if fc <= f + lin + kl / t && fc <= f {
                accepted = Some((cand_log, cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand_log, cand, fc)) = accepted else { break };
        let done = f - fc <= 1e-15 * f.abs().max(1.0);
        let norm = log_sum_exp(&cand_log);
        logz = cand_log.iter().map(|l| l - norm).collect();
        z = cand;
        f = fc;
        trace.push(f);
        if done {
            break;
        }
        t = (2.0 * t).min(config.step * 1e6);
    }
    let total: f64 = z.iter().sum();
    z.iter_mut().for_each(|v| *v /= total);
    if z.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Numeric("simplex iterate has invalid mass".into()));
    }
    let objective = problem.point_objective(&z)?;
    Ok(Decoded { output: Output::Point(z), objective, candidate: None, trace })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(v);
    let out: Vec<f64> = v.iter().map(|x| (x - lse).exp()).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("exponentiated-gradient step produced NaN".into()));
    }
    Ok(out)
}

/// Writes per-point objective traces as `point,iteration,objective` CSV.
pub fn write_traces<W: Write>(traces: &[(usize, Vec<f64>)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["point", "iteration", "objective"]).map_err(err)?;
    for (point, trace) in traces {
        for (it, f) in trace.iter().enumerate() {
            w.write_record([point.to_string(), it.to_string(), f.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}
