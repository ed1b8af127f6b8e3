//! Exact risks and theory checks on finitely supported distributions.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::sample;
use crate::error::{Error, Result};
use crate::estimator::{fit, DecoderStrategy, PredictorConfig};
use crate::kernels::{GramMatrix, KernelSpec};
use crate::linalg::sym_eigen;
use crate::losses::{FiniteEmbedding, LossSpec, Output};
use crate::rng::derive_seed;
use crate::weights::WeightAlgorithm;

/// Tolerance on probability vectors summing to one.
const PROB_TOL: f64 = 1e-12;

/// Joint law `ρ(x, y) = ρ(y|x) ρ_X(x)` with finite support on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDistribution {
    support: Vec<Vec<f64>>,
    marginal: Vec<f64>,
    labels: Vec<Output>,
    /// One row `ρ(·|x_k)` per support point.
    conditionals: Vec<Vec<f64>>,
}

fn check_probabilities(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Input(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::Input(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl SyntheticDistribution {
    pub fn new(
        support: Vec<Vec<f64>>,
        marginal: Vec<f64>,
        labels: Vec<Output>,
        conditionals: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if support.is_empty() || labels.is_empty() {
            return Err(Error::Input("distribution needs nonempty support and label sets".into()));
        }
        crate::kernels::input_dim(&support)?;
        if marginal.len() != support.len() || conditionals.len() != support.len() {
            return Err(Error::Input(format!(
                "{} support points, {} marginal entries, {} conditional rows",
                support.len(),
                marginal.len(),
                conditionals.len()
            )));
        }
        check_probabilities(&marginal, "marginal")?;
        for (k, row) in conditionals.iter().enumerate() {
            if row.len() != labels.len() {
                return Err(Error::Input(format!("conditional row {k} has {} entries, expected {}", row.len(), labels.len())));
            }
            check_probabilities(row, &format!("conditional row {k}"))?;
        }
        Ok(SyntheticDistribution { support, marginal, labels, conditionals })
    }

    /// Class labels `0..T` for the label set.
    pub fn with_classes(support: Vec<Vec<f64>>, marginal: Vec<f64>, conditionals: Vec<Vec<f64>>) -> Result<Self> {
        let t = conditionals.first().map_or(0, Vec::len);
        Self::new(support, marginal, (0..t).map(Output::Class).collect(), conditionals)
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn labels(&self) -> &[Output] {
        &self.labels
    }

    pub fn conditionals(&self) -> &[Vec<f64>] {
        &self.conditionals
    }

    pub fn m(&self) -> usize {
        self.support.len()
    }

    /// `Σ_y ρ(y|x_k) Δ(z, y)`.
    pub fn conditional_risk(&self, k: usize, z: &Output, loss: &LossSpec) -> Result<f64> {
        let mut total = 0.0;
        for (p, y) in self.conditionals[k].iter().zip(&self.labels) {
            if *p != 0.0 {
                total += p * loss.eval(z, y)?;
            }
        }
        Ok(total)
    }
}

/// Label index of the embedding for every label of the distribution.
fn label_map(dist: &SyntheticDistribution, embedding: &FiniteEmbedding) -> Result<Vec<usize>> {
    if embedding.labels().len() != dist.labels.len() {
        return Err(Error::Input(format!(
            "embedding has {} labels, distribution has {}",
            embedding.labels().len(),
            dist.labels.len()
        )));
    }
    dist.labels
        .iter()
        .map(|y| {
            embedding
                .label_index(y)
                .ok_or_else(|| Error::Input(format!("label {y:?} is missing from the embedding")))
        })
        .collect()
}

/// `g*(x_k) = Σ_y ρ(y|x_k) φ(y)` for every support point.
pub fn exact_gstar(dist: &SyntheticDistribution, embedding: &FiniteEmbedding) -> Result<Vec<DVector<f64>>> {
    let map = label_map(dist, embedding)?;
    Ok(dist
        .conditionals
        .iter()
        .map(|row| {
            let mut g = DVector::zeros(embedding.labels().len());
            for (p, &j) in row.iter().zip(&map) {
                g += embedding.phi(j) * *p;
            }
            g
        })
        .collect())
}

/// Bayes predictor over a finite output list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesPredictor {
    /// Index into the output list per support point.
    pub choices: Vec<usize>,
    pub outputs: Vec<Output>,
    /// `min_z Σ_y ρ(y|x_k) Δ(z, y)` per support point.
    pub values: Vec<f64>,
    pub risk: f64,
}

/// `f*(x_k) = argmin_z Σ_y ρ(y|x_k) Δ(z, y)` by enumeration (ties to the
/// lowest index) and the Bayes risk `Σ_k p_k min_z(...)`.
pub fn exact_fstar(dist: &SyntheticDistribution, loss: &LossSpec, outputs: &[Output]) -> Result<BayesPredictor> {
    if outputs.is_empty() {
        return Err(Error::Input("Bayes predictor needs a nonempty output list".into()));
    }
    let mut choices = Vec::with_capacity(dist.m());
    let mut values = Vec::with_capacity(dist.m());
    for k in 0..dist.m() {
        let mut best = (0, f64::INFINITY);
        for (i, z) in outputs.iter().enumerate() {
            let r = dist.conditional_risk(k, z, loss)?;
            if r < best.1 {
                best = (i, r);
            }
        }
        choices.push(best.0);
        values.push(best.1);
    }
    let risk = dist.marginal.iter().zip(&values).map(|(p, v)| p * v).sum();
    let chosen = choices.iter().map(|&i| outputs[i].clone()).collect();
    Ok(BayesPredictor { choices, outputs: chosen, values, risk })
}

/// `E(f) = Σ_k p_k Σ_y ρ(y|x_k) Δ(f(x_k), y)`.
pub fn structured_risk(f: &[Output], dist: &SyntheticDistribution, loss: &LossSpec) -> Result<f64> {
    if f.len() != dist.m() {
        return Err(Error::Input(format!("predictor table has {} entries for {} support points", f.len(), dist.m())));
    }
    let mut total = 0.0;
    for (k, z) in f.iter().enumerate() {
        total += dist.marginal[k] * dist.conditional_risk(k, z, loss)?;
    }
    Ok(total)
}

/// `E(f) − E(f*)` with `f*` taken over `outputs`.
pub fn structured_excess_risk(
    f: &[Output],
    dist: &SyntheticDistribution,
    loss: &LossSpec,
    outputs: &[Output],
) -> Result<f64> {
    Ok(structured_risk(f, dist, loss)? - exact_fstar(dist, loss, outputs)?.risk)
}

/// `R(g) − R(g*) = Σ_k p_k ‖g(x_k) − g*(x_k)‖²`.
pub fn surrogate_excess_risk(
    g: &[DVector<f64>],
    dist: &SyntheticDistribution,
    embedding: &FiniteEmbedding,
) -> Result<f64> {
    if g.len() != dist.m() {
        return Err(Error::Input(format!("surrogate table has {} entries for {} support points", g.len(), dist.m())));
    }
    let gstar = exact_gstar(dist, embedding)?;
    let mut total = 0.0;
    for ((gk, sk), p) in g.iter().zip(&gstar).zip(&dist.marginal) {
        if gk.len() != sk.len() {
            return Err(Error::Input(format!("surrogate vector has dimension {}, expected {}", gk.len(), sk.len())));
        }
        total += p * (gk - sk).norm_squared();
    }
    Ok(total)
}

/// `d(g) = argmin_i ⟨ψ(z_i), g⟩` over the embedding outputs.
pub fn decode_surrogate(g: &DVector<f64>, embedding: &FiniteEmbedding) -> Result<usize> {
    let scores = embedding.scores(g)?;
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = k;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonCheck {
    /// `E(d∘g) − E(f*)`.
    pub lhs: f64,
    /// `2 c √(R(g) − R(g*))`.
    pub rhs: f64,
    pub constant: f64,
    pub satisfied: bool,
}

/// Comparison inequality with `c = ‖V‖`, the embedding's bound.
pub fn check_comparison(
    g: &[DVector<f64>],
    dist: &SyntheticDistribution,
    loss: &LossSpec,
    embedding: &FiniteEmbedding,
) -> Result<ComparisonCheck> {
    check_comparison_with(g, dist, loss, embedding, embedding.closs_bound())
}

/// Comparison inequality with an explicit constant `c`.
pub fn check_comparison_with(
    g: &[DVector<f64>],
    dist: &SyntheticDistribution,
    loss: &LossSpec,
    embedding: &FiniteEmbedding,
    constant: f64,
) -> Result<ComparisonCheck> {
    let decoded: Vec<Output> = g
        .iter()
        .map(|gk| decode_surrogate(gk, embedding).map(|i| embedding.outputs()[i].clone()))
        .collect::<Result<_>>()?;
    let lhs = structured_excess_risk(&decoded, dist, loss, embedding.outputs())?;
    let surrogate = surrogate_excess_risk(g, dist, embedding)?;
    let rhs = 2.0 * constant * surrogate.max(0.0).sqrt();
    Ok(ComparisonCheck { lhs, rhs, constant, satisfied: lhs <= rhs + 1e-9 })
}

/// `Σ_i σ_i / (σ_i + λ)` over the eigenvalues of `K/n` (negative round-off
/// eigenvalues clamped to zero).
pub fn effective_dimension(gram: &GramMatrix, lambda: f64) -> Result<f64> {
    Ok(effective_dimension_curve(gram, &[lambda])?[0])
}

/// Effective dimension at several `λ` from one eigendecomposition.
pub fn effective_dimension_curve(gram: &GramMatrix, lambdas: &[f64]) -> Result<Vec<f64>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Parameter(format!("lambda must be positive, got {l}")));
    }
    let n = gram.n() as f64;
    let (values, _) = sym_eigen(&(gram.matrix() / n))?;
    Ok(lambdas
        .iter()
        .map(|&l| values.iter().map(|&s| s.max(0.0)).map(|s| s / (s + l)).sum())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    Ridge,
    /// Gradient descent with step `ν`; `λ` is mapped to `t = round(1/λ) ≥ 1`.
    L2Boost { nu: f64 },
    Pcr,
}

impl FilterSpec {
    /// `λ` actually used: `1/t` for L2-boosting, `λ` otherwise.
    pub fn effective_lambda(&self, lambda: f64) -> f64 {
        match self {
            FilterSpec::L2Boost { .. } => 1.0 / self.steps(lambda) as f64,
            _ => lambda,
        }
    }

    fn steps(&self, lambda: f64) -> u32 {
        (1.0 / lambda).round().clamp(1.0, u32::MAX as f64) as u32
    }

    /// `η_λ(σ)`.
    pub fn eta(&self, sigma: f64, lambda: f64) -> f64 {
        match *self {
            FilterSpec::Ridge => 1.0 / (sigma + lambda),
            // ν Σ_{j=0}^{t} (1 − νσ)^j = (1 − (1 − νσ)^{t+1}) / σ
            FilterSpec::L2Boost { nu } => {
                let t = self.steps(lambda);
                (1.0 - (1.0 - nu * sigma).powi(t as i32 + 1)) / sigma
            }
            FilterSpec::Pcr => {
                if sigma >= lambda {
                    1.0 / sigma
                } else {
                    0.0
                }
            }
        }
    }

    /// `1 − σ η_λ(σ)` in closed form, avoiding the cancellation of the
    /// direct expression when `σ ≫ λ`.
    pub fn residual(&self, sigma: f64, lambda: f64) -> f64 {
        match *self {
            FilterSpec::Ridge => lambda / (sigma + lambda),
            FilterSpec::L2Boost { nu } => (1.0 - nu * sigma).powi(self.steps(lambda) as i32 + 1),
            FilterSpec::Pcr => {
                if sigma >= lambda {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// The constants `(q₁, q₂)` the filter is known to satisfy.
    pub fn constants(&self) -> (f64, f64) {
        match *self {
            FilterSpec::Ridge => (1.0, 1.0),
            FilterSpec::L2Boost { nu } => (1.0 + 2.0 * nu, (nu - 1.0).exp() / nu),
            FilterSpec::Pcr => (2.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterCheck {
    pub q1_hat: f64,
    pub q2_hat: f64,
    pub q1: f64,
    pub q2: f64,
    /// Both estimates within the constants plus `1e-6`.
    pub within: bool,
}

/// Grid maxima of `(σ + λ) η_λ(σ)` and `(1 − σ η_λ(σ)) (σ + λ) / λ`.
pub fn check_filter(filter: &FilterSpec, sigmas: &[f64], lambdas: &[f64]) -> Result<FilterCheck> {
    if let FilterSpec::L2Boost { nu } = filter {
        if !(*nu > 0.0 && nu.is_finite()) {
            return Err(Error::Parameter(format!("step size must be positive, got {nu}")));
        }
    }
    if sigmas.iter().chain(lambdas).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Parameter("filter grids must be positive".into()));
    }
    let (mut q1_hat, mut q2_hat) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &l in lambdas {
        let l = filter.effective_lambda(l);
        for &s in sigmas {
            q1_hat = q1_hat.max((s + l) * filter.eta(s, l));
            q2_hat = q2_hat.max(filter.residual(s, l) * (s + l) / l);
        }
    }
    let (q1, q2) = filter.constants();
    Ok(FilterCheck { q1_hat, q2_hat, q1, q2, within: q1_hat <= q1 + 1e-6 && q2_hat <= q2 + 1e-6 })
}

/// `k` evenly spaced points `i/k · κ²`, `i = 1..k`.
pub fn sigma_grid(k: usize, kappa_sq: f64) -> Vec<f64> {
    (1..=k).map(|i| kappa_sq * i as f64 / k as f64).collect()
}

/// `k` log-spaced points between `lo` and `hi`.
pub fn log_grid(k: usize, lo: f64, hi: f64) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
}

/// Regularization schedule `λ_n = n^{-1/(2r+γ+1)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub r: f64,
    pub gamma: f64,
}

impl Schedule {
    pub fn new(r: f64, gamma: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("source exponent r must be >= 0, got {r}")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Parameter(format!("capacity exponent gamma must be in [0, 1], got {gamma}")));
        }
        Ok(Schedule { r, gamma })
    }

    pub fn exponent(&self) -> f64 {
        1.0 / (2.0 * self.r + self.gamma + 1.0)
    }

    pub fn lambda(&self, n: usize) -> f64 {
        (n as f64).powf(-self.exponent())
    }

    /// Gradient steps `t_n = ⌈n^{1/(2r+γ+1)}⌉`.
    pub fn steps(&self, n: usize) -> usize {
        (n as f64).powf(self.exponent()).ceil() as usize
    }

    /// Human-readable form, e.g. `n^(-1/2)`.
    pub fn describe(&self) -> String {
        let denom = 2.0 * self.r + self.gamma + 1.0;
        if denom.fract() == 0.0 {
            format!("lambda_n = n^(-1/{})", denom as i64)
        } else {
            format!("lambda_n = n^(-1/{denom})")
        }
    }
}

/// Learner family used by the rate experiment; its hyperparameter follows
/// the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateLearner {
    Ridge,
    L2Boost { nu: f64 },
    /// Eigenvalues of `K/n` below `λ_n` are dropped, i.e. `K` is thresholded at `nλ_n`.
    Pcr,
}

impl RateLearner {
    pub fn algorithm(&self, schedule: &Schedule, n: usize) -> WeightAlgorithm {
        let lambda = schedule.lambda(n);
        match *self {
            RateLearner::Ridge => WeightAlgorithm::Ridge { lambda },
            RateLearner::L2Boost { nu } => WeightAlgorithm::L2Boost { nu, steps: schedule.steps(n) },
            RateLearner::Pcr => WeightAlgorithm::Pcr { lambda: n as f64 * lambda },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateConfig {
    pub distribution: SyntheticDistribution,
    pub loss: LossSpec,
    pub outputs: Vec<Output>,
    pub kernel: KernelSpec,
    pub learner: RateLearner,
    pub schedule: Schedule,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub rep: usize,
    pub excess: f64,
    pub lambda: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub rows: Vec<RateRow>,
    pub points: Vec<RatePoint>,
    /// Least-squares slope of `log(mean excess)` against `log n`; absent when saturated.
    pub slope: Option<f64>,
    /// 95% confidence interval of the slope.
    pub slope_ci: Option<(f64, f64)>,
    /// Set when some mean excess risk is exactly zero.
    pub saturated: bool,
}

/// Two-sided 97.5% Student-t quantiles for 1..=30 degrees of freedom.
const T_QUANTILES: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
    2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

/// Least-squares line fit returning `(slope, 95% half-width)`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Input("slope fit needs at least two paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("slope fit needs distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let df = xs.len() - 2;
    if df == 0 {
        return Ok((slope, f64::INFINITY));
    }
    let resid: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let se = (resid / df as f64 / sxx).sqrt();
    let t = T_QUANTILES.get(df - 1).copied().unwrap_or(1.96);
    Ok((slope, t * se))
}

/// Runs every `(n, repetition)` cell: sample, fit with the scheduled
/// hyperparameter, and compute the exact excess risk of the predictor on the
/// support. Cells run in parallel; rows come back in `(n, rep)` order.
pub fn rate_experiment(config: &RateConfig) -> Result<RateResult> {
    if config.n_grid.len() < 4 || config.n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("n grid must be increasing with at least 4 points".into()));
    }
    if config.repetitions < 10 {
        return Err(Error::Parameter(format!("at least 10 repetitions required, got {}", config.repetitions)));
    }
    let bayes = exact_fstar(&config.distribution, &config.loss, &config.outputs)?;
    let cells: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.repetitions).map(move |r| (n, r)))
        .collect();
    let rows: Vec<RateRow> = cells
        .par_iter()
        .map(|&(n, rep)| {
            let seed = derive_seed(config.seed, &[n as u64, rep as u64]);
            let data = sample(&config.distribution, n, seed)?;
            let algorithm = config.learner.algorithm(&config.schedule, n);
            let pc = PredictorConfig {
                kernel: config.kernel,
                algorithm: Some(algorithm),
                decoder: DecoderStrategy::Exhaustive { candidates: Some(config.outputs.clone()) },
                seed,
            };
            let predictor = fit(&pc, &config.loss, &data.inputs, &data.labels)?;
            let preds = config
                .distribution
                .support()
                .iter()
                .map(|x| predictor.predict(x))
                .collect::<Result<Vec<_>>>()?;
            let excess = (structured_risk(&preds, &config.distribution, &config.loss)? - bayes.risk).max(0.0);
            Ok(RateRow { n, rep, excess, lambda: config.schedule.lambda(n), seed })
        })
        .collect::<Result<_>>()?;

    let points: Vec<RatePoint> = config
        .n_grid
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.excess).collect();
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            RatePoint { n, mean, stderr: (var / k).sqrt() }
        })
        .collect();
    let saturated = points.iter().any(|p| p.mean <= 0.0);
    let (slope, slope_ci) = if saturated {
        (None, None)
    } else {
        let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.mean.ln()).collect();
        let (s, half) = fit_slope(&xs, &ys)?;
        (Some(s), Some((s - half, s + half)))
    };
    Ok(RateResult { rows, points, slope, slope_ci, saturated })
}

impl RateResult {
    /// Rows as CSV with columns `n,rep,excess,lambda,seed`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record(["n", "rep", "excess", "lambda", "seed"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.rep.to_string(),
                r.excess.to_string(),
                r.lambda.to_string(),
                r.seed.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{finite_embedding, make_loss, LossId};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn classes(t: usize) -> Vec<Output> {
        (0..t).map(Output::Class).collect()
    }

    fn two_point(cond: Vec<Vec<f64>>) -> SyntheticDistribution {
        SyntheticDistribution::with_classes(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5], cond).unwrap()
    }

    fn setup(t: usize) -> (LossSpec, FiniteEmbedding) {
        let loss = make_loss(&LossId::ZeroOne { classes: t }).unwrap();
        let e = finite_embedding(&loss, &classes(t), &classes(t)).unwrap();
        (loss, e)
    }

    #[test]
    fn validation() {
        assert!(SyntheticDistribution::with_classes(vec![vec![0.0]], vec![0.9], vec![vec![1.0]]).is_err());
        assert!(SyntheticDistribution::with_classes(vec![vec![0.0]], vec![1.0], vec![vec![0.5, 0.6]]).is_err());
        assert!(SyntheticDistribution::with_classes(vec![vec![0.0]], vec![1.0], vec![vec![1.5, -0.5]]).is_err());
    }

    #[test]
    fn gstar_examples() {
        let (_, e) = setup(2);
        let d = two_point(vec![vec![1.0, 0.0], vec![0.3, 0.7]]);
        let g = exact_gstar(&d, &e).unwrap();
        assert_eq!(g[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(g[1].as_slice(), &[0.3, 0.7]);
        let (_, e3) = setup(3);
        let u = SyntheticDistribution::with_classes(vec![vec![0.0]], vec![1.0], vec![vec![1.0 / 3.0; 3]]).unwrap();
        let g = exact_gstar(&u, &e3).unwrap();
        assert!(g[0].iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(exact_gstar(&d, &e3).is_err());
    }

    #[test]
    fn fstar_examples() {
        let (loss, _) = setup(2);
        let d = two_point(vec![vec![1.0, 0.0], vec![0.3, 0.7]]);
        let b = exact_fstar(&d, &loss, &classes(2)).unwrap();
        assert_eq!(b.outputs, vec![Output::Class(0), Output::Class(1)]);
        assert_relative_eq!(b.values[1], 0.3, epsilon = 1e-15);
        assert_relative_eq!(b.risk, 0.15, epsilon = 1e-15);
        let det = two_point(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(exact_fstar(&det, &loss, &classes(2)).unwrap().risk, 0.0);
    }

    #[test]
    fn excess_risk_examples() {
        let (loss, _) = setup(2);
        let det = two_point(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c = classes(2);
        let fstar = exact_fstar(&det, &loss, &c).unwrap().outputs;
        assert_eq!(structured_excess_risk(&fstar, &det, &loss, &c).unwrap(), 0.0);
        let wrong = vec![Output::Class(1), Output::Class(0)];
        assert_eq!(structured_excess_risk(&wrong, &det, &loss, &c).unwrap(), 1.0);
        let half = vec![Output::Class(0), Output::Class(0)];
        assert_eq!(structured_excess_risk(&half, &det, &loss, &c).unwrap(), 0.5);
    }

    #[test]
    fn surrogate_examples() {
        let (_, e) = setup(2);
        let d = SyntheticDistribution::with_classes(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.25, 0.25, 0.5],
            vec![vec![0.5, 0.5], vec![0.1, 0.9], vec![1.0, 0.0]],
        )
        .unwrap();
        let gstar = exact_gstar(&d, &e).unwrap();
        assert_eq!(surrogate_excess_risk(&gstar, &d, &e).unwrap(), 0.0);
        let mut g = gstar.clone();
        g[0][0] += 1.0;
        assert_relative_eq!(surrogate_excess_risk(&g, &d, &e).unwrap(), 0.25, epsilon = 1e-15);
        let mut g2 = gstar;
        g2[0][0] += 2.0;
        assert_relative_eq!(surrogate_excess_risk(&g2, &d, &e).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn comparison_at_gstar_and_in_the_null_space() {
        let (loss, e) = setup(2);
        let d = two_point(vec![vec![0.2, 0.8], vec![0.6, 0.4]]);
        let gstar = exact_gstar(&d, &e).unwrap();
        let c = check_comparison(&gstar, &d, &loss, &e).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        assert!(c.satisfied);
        // For zero-one with T = 2, ψ(0) − ψ(1) ∝ (−1, 1); shifting g along
        // (1, 1) changes the surrogate risk but never the decoded output.
        let g: Vec<DVector<f64>> = gstar.iter().map(|v| v + DVector::from_vec(vec![0.3, 0.3])).collect();
        let c = check_comparison(&g, &d, &loss, &e).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.rhs > 0.0);
    }

    #[test]
    fn effective_dimension_examples() {
        let n = 5;
        let k = GramMatrix::from_matrix(DMatrix::identity(n, n) * n as f64, 5.0).unwrap();
        assert_relative_eq!(effective_dimension(&k, 0.5).unwrap(), n as f64 / 1.5, epsilon = 1e-12);
        let u: DVector<f64> = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let u = &u / u.norm();
        let s: f64 = 0.7;
        let rank1 = GramMatrix::from_matrix(&u * u.transpose() * (s * 3.0), 1.0).unwrap();
        assert_relative_eq!(effective_dimension(&rank1, 0.2).unwrap(), s / (s + 0.2), epsilon = 1e-12);
        assert!(effective_dimension(&rank1, 0.0).is_err());
    }

    #[test]
    fn filter_constants() {
        let sig = sigma_grid(1000, 1.0);
        let lam = log_grid(1000, 1e-4, 10.0);
        let r = check_filter(&FilterSpec::Ridge, &sig, &lam).unwrap();
        assert!((r.q1_hat - 1.0).abs() < 1e-12 && (r.q2_hat - 1.0).abs() < 1e-12);
        let p = check_filter(&FilterSpec::Pcr, &sig, &lam).unwrap();
        assert!(p.q1_hat <= 2.0 && p.q2_hat <= 2.0 && p.within);
        let b = check_filter(&FilterSpec::L2Boost { nu: 0.5 }, &sig, &lam).unwrap();
        assert!(b.q1_hat <= 2.0 && b.within, "{b:?}");
        assert_relative_eq!(b.q2, 0.5f64.exp().recip() * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn l2boost_filter_matches_iteration() {
        // η as a closed form equals ν Σ_{j=0}^{t} (1 − νσ)^j.
        let f = FilterSpec::L2Boost { nu: 0.3 };
        for &(s, t) in &[(0.2f64, 1usize), (0.7, 5), (0.05, 40)] {
            let direct: f64 = (0..=t).map(|j| 0.3 * (1.0 - 0.3 * s).powi(j as i32)).sum();
            assert_relative_eq!(f.eta(s, 1.0 / t as f64), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn residual_matches_direct_form() {
        for f in [FilterSpec::Ridge, FilterSpec::L2Boost { nu: 0.4 }, FilterSpec::Pcr] {
            for &(s, l) in &[(0.3, 0.5), (0.9, 0.1), (0.05, 0.2), (0.5, 0.5)] {
                assert!((f.residual(s, l) - (1.0 - s * f.eta(s, l))).abs() < 1e-12, "{f:?} {s} {l}");
            }
        }
    }

    #[test]
    fn schedules() {
        let s = Schedule::new(0.0, 1.0).unwrap();
        assert_eq!(s.exponent(), 0.5);
        assert_relative_eq!(s.lambda(400), 0.05, epsilon = 1e-15);
        assert_eq!(s.steps(400), 20);
        assert_eq!(s.describe(), "lambda_n = n^(-1/2)");
        assert!(Schedule::new(-1.0, 0.5).is_err());
        assert!(Schedule::new(0.0, 1.5).is_err());
        assert_eq!(RateLearner::Pcr.algorithm(&s, 100), WeightAlgorithm::Pcr { lambda: 10.0 });
    }

    #[test]
    fn slope_fit() {
        let xs: Vec<f64> = (1..6).map(|v| v as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let (s, h) = fit_slope(&xs, &ys).unwrap();
        assert_relative_eq!(s, -0.5, epsilon = 1e-12);
        assert!(h < 1e-6);
    }

    #[test]
    fn noiseless_nearest_neighbour_rates_saturate() {
        // Deterministic labels with nearest neighbours: the excess hits zero.
        let support: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let cond = (0..4).map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
        let dist = SyntheticDistribution::with_classes(support, vec![0.25; 4], cond).unwrap();
        let (loss, _) = setup(2);
        let base = RateConfig {
            distribution: dist,
            loss,
            outputs: classes(2),
            kernel: KernelSpec::gaussian(0.5),
            learner: RateLearner::Ridge,
            schedule: Schedule::new(0.0, 1.0).unwrap(),
            n_grid: vec![50, 100, 200, 400],
            repetitions: 10,
            seed: 1,
        };
        let res = rate_experiment(&base).unwrap();
        assert!(res.saturated);
        assert_eq!(res.slope, None);
        assert_eq!(res.rows.len(), 40);
        let again = rate_experiment(&base).unwrap();
        assert_eq!(again, res);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,rep,excess,lambda,seed\n50,0,0,"));
        assert!(rate_experiment(&RateConfig { repetitions: 3, ..base.clone() }).is_err());
        assert!(rate_experiment(&RateConfig { n_grid: vec![10, 5, 20, 30], ..base }).is_err());
    }

    proptest! {
        #[test]
        fn bayes_risk_is_below_every_table(
            m in 1usize..=4, t in 2usize..=3, raw in proptest::collection::vec(0.01f64..1.0, 12), w in proptest::collection::vec(0.01f64..1.0, 4)
        ) {
            let (loss, _) = setup(t);
            let support: Vec<Vec<f64>> = (0..m).map(|k| vec![k as f64]).collect();
            let ws: f64 = w[..m].iter().sum();
            let marginal: Vec<f64> = w[..m].iter().map(|v| v / ws).collect();
            let cond: Vec<Vec<f64>> = (0..m).map(|k| {
                let row = &raw[k * 3..k * 3 + t];
                let s: f64 = row.iter().sum();
                row.iter().map(|v| v / s).collect()
            }).collect();
            let d = SyntheticDistribution::with_classes(support, marginal, cond).unwrap();
            let bayes = exact_fstar(&d, &loss, &classes(t)).unwrap();
            // Enumerate all t^m deterministic predictors.
            for code in 0..t.pow(m as u32) {
                let table: Vec<Output> = (0..m).map(|k| Output::Class(code / t.pow(k as u32) % t)).collect();
                prop_assert!(bayes.risk <= structured_risk(&table, &d, &loss).unwrap() + 1e-15);
            }
        }

        #[test]
        fn effective_dimension_bounds(xs in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), 1..30), l in 1e-3f64..10.0) {
            let k = KernelSpec::gaussian(0.7).gram(&xs).unwrap();
            let d = effective_dimension_curve(&k, &[l, 2.0 * l]).unwrap();
            prop_assert!(d[0] <= 1.0 / l + 1e-9);
            prop_assert!(d[0] <= xs.len() as f64 + 1e-9);
            prop_assert!(d[1] <= d[0] + 1e-12);
        }
    }
}
