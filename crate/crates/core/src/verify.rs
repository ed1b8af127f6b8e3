//! Randomized suites checking the mathematical invariants of the library.
//!
//! Every suite is a pure function of its configuration and seed; the report
//! lists cases, failures and the worst observed margin.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_sgd, decode_sphere, DecodeProblem, SgdConfig, SphereConfig};
use crate::diagnostics::{
    check_comparison, check_filter, decode_surrogate, effective_dimension_curve, exact_fstar, exact_gstar,
    log_grid, sigma_grid, structured_risk, FilterSpec, SyntheticDistribution,
};
use crate::error::Result;
use crate::estimator::{fit, DecoderStrategy, PredictorConfig};
use crate::kernels::KernelSpec;
use crate::losses::{
    combine, finite_embedding, fourier_embedding, make_loss, restrict, CombineMode, FiniteEmbedding, LossId,
    LossSpec, Output,
};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::weights::{fit_weights, RandomFeatureMap, WeightAlgorithm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub comparison_cases: usize,
    pub fisher_cases: usize,
    pub loss_trick_cases: usize,
    pub filter_grid: usize,
    pub gram_cases: usize,
    pub nystrom_cases: usize,
    pub feature_seeds: usize,
    pub decode_cases: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            comparison_cases: 1000,
            fisher_cases: 200,
            loss_trick_cases: 20,
            filter_grid: 1000,
            gram_cases: 1000,
            nystrom_cases: 100,
            feature_seeds: 20,
            decode_cases: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed value of the suite's checked quantity.
    pub worst: f64,
    pub detail: String,
    pub passed: bool,
}

impl SuiteReport {
    fn new(name: &str, cases: usize, failures: usize, worst: f64, detail: String) -> Self {
        SuiteReport { name: name.into(), cases, failures, worst, detail, passed: failures == 0 }
    }
}

pub const SUITES: [&str; 11] = [
    "comparison",
    "fisher",
    "loss_trick",
    "filters",
    "effective_dimension",
    "nystrom",
    "random_features",
    "sphere_decoding",
    "finite_embedding",
    "fourier",
    "bayes_optimality",
];

/// Runs the named suites (all when `names` is empty) in a fixed order.
pub fn run(config: &VerifyConfig, names: &[String]) -> Result<Vec<SuiteReport>> {
    if let Some(bad) = names.iter().find(|n| !SUITES.contains(&n.as_str())) {
        return Err(crate::Error::Input(format!("unknown suite '{bad}'; known: {}", SUITES.join(", "))));
    }
    SUITES
        .iter()
        .filter(|s| names.is_empty() || names.iter().any(|n| n == *s))
        .map(|s| run_suite(config, s))
        .collect()
}

pub fn run_suite(config: &VerifyConfig, name: &str) -> Result<SuiteReport> {
    match name {
        "comparison" => comparison_suite(config),
        "fisher" => fisher_suite(config),
        "loss_trick" => loss_trick_suite(config),
        "filters" => filter_suite(config),
        "effective_dimension" => effective_dimension_suite(config),
        "nystrom" => nystrom_suite(config),
        "random_features" => random_feature_suite(config),
        "sphere_decoding" => sphere_decoding_suite(config),
        "finite_embedding" => finite_embedding_suite(),
        "fourier" => fourier_suite(),
        "bayes_optimality" => bayes_suite(config),
        other => Err(crate::Error::Input(format!("unknown suite '{other}'; known: {}", SUITES.join(", ")))),
    }
}

fn simplex_row(rng: &mut Rng, t: usize) -> Vec<f64> {
    // Occasional zeros exercise deterministic and degenerate conditionals.
    let raw: Vec<f64> = (0..t)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() + 1e-3 })
        .collect();
    let s: f64 = raw.iter().sum();
    if s == 0.0 {
        let mut e = vec![0.0; t];
        e[0] = 1.0;
        return e;
    }
    raw.iter().map(|v| v / s).collect()
}

/// Random distribution with `m ≤ 10` support points and the given labels.
fn random_distribution(rng: &mut Rng, labels: &[Output]) -> Result<SyntheticDistribution> {
    let m = rng.random_range(1..=10);
    let support = (0..m).map(|k| vec![k as f64]).collect();
    let mut marginal = simplex_row(rng, m);
    if marginal.iter().all(|p| *p == 0.0) {
        marginal[0] = 1.0;
    }
    let conditionals = (0..m).map(|_| simplex_row(rng, labels.len())).collect();
    SyntheticDistribution::new(support, marginal, labels.to_vec(), conditionals)
}

/// A random finite loss on `|Z|, |Y| ≤ 5`: zero-one, or a catalog loss
/// restricted to random points.
fn random_finite_loss(rng: &mut Rng) -> Result<(LossSpec, Vec<Output>, Vec<Output>)> {
    let t = rng.random_range(2..=5);
    match rng.random_range(0..4) {
        0 => {
            let loss = make_loss(&LossId::ZeroOne { classes: t })?;
            let c: Vec<Output> = (0..t).map(Output::Class).collect();
            Ok((loss, c.clone(), c))
        }
        1 => {
            let base = make_loss(&LossId::SquaredEuclidean { dim: 2, radius: None })?;
            let pts = |rng: &mut Rng, k: usize| -> Vec<Output> {
                (0..k).map(|_| Output::Point(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])).collect()
            };
            let k = rng.random_range(2..=5);
            let z = pts(rng, k);
            let y = pts(rng, t);
            Ok((restrict(&base, &z, &y)?, z, y))
        }
        2 => {
            let base = make_loss(&LossId::Absolute { lo: -1.0, hi: 1.0 })?;
            let pts = |rng: &mut Rng, k: usize| -> Vec<Output> {
                (0..k).map(|_| Output::scalar(rng.random_range(-1.0..1.0))).collect()
            };
            let k = rng.random_range(2..=5);
            let z = pts(rng, k);
            let y = pts(rng, t);
            Ok((restrict(&base, &z, &y)?, z, y))
        }
        _ => {
            let base = make_loss(&LossId::Hellinger { bins: 3 })?;
            let pts = |rng: &mut Rng, k: usize| -> Vec<Output> { (0..k).map(|_| Output::Point(simplex_row(rng, 3))).collect() };
            let k = rng.random_range(2..=5);
            let z = pts(rng, k);
            let y = pts(rng, t);
            Ok((restrict(&base, &z, &y)?, z, y))
        }
    }
}

fn perturb(rng: &mut Rng, g: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let scale = 10f64.powf(rng.random_range(-3.0..0.5));
    g.iter()
        .map(|v| v + DVector::from_fn(v.len(), |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

fn comparison_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let results: Vec<(bool, f64)> = (0..config.comparison_cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[1, case as u64]));
            let (loss, z, y) = random_finite_loss(&mut rng)?;
            let dist = random_distribution(&mut rng, &y)?;
            let emb = finite_embedding(&loss, &z, &y)?;
            let g = perturb(&mut rng, &exact_gstar(&dist, &emb)?);
            let c = check_comparison(&g, &dist, &loss, &emb)?;
            Ok((c.satisfied, c.lhs - c.rhs))
        })
        .collect::<Result<_>>()?;
    let failures = results.iter().filter(|r| !r.0).count();
    let worst = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(SuiteReport::new(
        "comparison",
        results.len(),
        failures,
        worst,
        format!("{failures} comparison-inequality violations; max lhs - rhs = {worst:.3e}"),
    ))
}

fn fisher_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let gaps: Vec<f64> = (0..config.fisher_cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[2, case as u64]));
            let (loss, z, y) = random_finite_loss(&mut rng)?;
            let dist = random_distribution(&mut rng, &y)?;
            let emb = finite_embedding(&loss, &z, &y)?;
            let decoded = exact_gstar(&dist, &emb)?
                .iter()
                .map(|g| decode_surrogate(g, &emb).map(|i| z[i].clone()))
                .collect::<Result<Vec<_>>>()?;
            let bayes = exact_fstar(&dist, &loss, &z)?;
            Ok((structured_risk(&decoded, &dist, &loss)? - bayes.risk).abs())
        })
        .collect::<Result<_>>()?;
    let failures = gaps.iter().filter(|g| **g > 1e-12).count();
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    Ok(SuiteReport::new(
        "fisher",
        gaps.len(),
        failures,
        worst,
        format!("max |E(d(g*)) - E(f*)| = {worst:.3e}"),
    ))
}

/// The seven weight learners at small sizes.
pub fn all_algorithms(n: usize, seed: u64) -> Vec<WeightAlgorithm> {
    vec![
        WeightAlgorithm::Ridge { lambda: 0.1 },
        WeightAlgorithm::L2Boost { nu: 0.5, steps: 10 },
        WeightAlgorithm::Pcr { lambda: 0.05 * n as f64 },
        WeightAlgorithm::RandomFeatures { features: 50, lambda: 0.1, seed },
        WeightAlgorithm::Nystrom { landmarks: n.div_ceil(2), lambda: 0.1, seed },
        WeightAlgorithm::NadarayaWatson,
        WeightAlgorithm::NearestNeighbors { q: 3.min(n) },
    ]
}

fn loss_trick_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let results: Vec<(usize, usize)> = (0..config.loss_trick_cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[3, case as u64]));
            let (loss, z, y) = random_finite_loss(&mut rng)?;
            let n = rng.random_range(5..=50);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let labels: Vec<Output> = (0..n).map(|_| y[rng.random_range(0..y.len())].clone()).collect();
            let tests: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)]).collect();
            let emb = finite_embedding(&loss, &z, &y)?;
            let (mut checked, mut mismatched) = (0, 0);
            for algorithm in all_algorithms(n, case as u64) {
                let pc = PredictorConfig {
                    kernel: KernelSpec::gaussian(0.7),
                    algorithm: Some(algorithm),
                    decoder: DecoderStrategy::Exhaustive { candidates: Some(z.clone()) },
                    seed: 0,
                };
                let predictor = fit(&pc, &loss, &xs, &labels)?;
                for x in &tests {
                    checked += 1;
                    if predictor.predict(x)? != predictor.predict_explicit_finite(x, &emb)? {
                        mismatched += 1;
                    }
                }
            }
            Ok((checked, mismatched))
        })
        .collect::<Result<_>>()?;
    let cases: usize = results.iter().map(|r| r.0).sum();
    let failures: usize = results.iter().map(|r| r.1).sum();
    Ok(SuiteReport::new(
        "loss_trick",
        cases,
        failures,
        failures as f64,
        format!("{failures} of {cases} implicit/explicit predictions differ across 7 learners"),
    ))
}

fn filter_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let k = config.filter_grid;
    let sigmas = sigma_grid(k, 1.0);
    let lambdas = log_grid(k, 1e-4, 10.0);
    let filters = [FilterSpec::Ridge, FilterSpec::Pcr, FilterSpec::L2Boost { nu: 0.5 }, FilterSpec::L2Boost { nu: 0.9 }];
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for f in &filters {
        let c = check_filter(f, &sigmas, &lambdas)?;
        failures += usize::from(!c.within);
        worst = worst.max((c.q1_hat - c.q1).max(c.q2_hat - c.q2));
        parts.push(format!("{f:?}: q1 {:.6}/{:.6}, q2 {:.6}/{:.6}", c.q1_hat, c.q1, c.q2_hat, c.q2));
    }
    Ok(SuiteReport::new("filters", filters.len(), failures, worst, parts.join("; ")))
}

fn effective_dimension_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let lambdas = log_grid(20, 1e-3, 10.0);
    let worst: Vec<(bool, f64)> = (0..config.gram_cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[5, case as u64]));
            let n = rng.random_range(1..=100);
            let d = rng.random_range(1..=4);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let kernel = match rng.random_range(0..3) {
                0 => KernelSpec::gaussian(rng.random_range(0.1..3.0)),
                1 => KernelSpec::laplacian(rng.random_range(0.1..3.0)),
                _ => KernelSpec::linear((d as f64).sqrt()),
            };
            let gram = kernel.gram(&xs)?;
            let curve = effective_dimension_curve(&gram, &lambdas)?;
            let bound_gap = curve
                .iter()
                .zip(&lambdas)
                .map(|(v, l)| v - gram.kappa_sq() / l)
                .fold(f64::NEG_INFINITY, f64::max);
            let monotone = curve.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            Ok((monotone && bound_gap <= 1e-9, bound_gap))
        })
        .collect::<Result<_>>()?;
    let failures = worst.iter().filter(|w| !w.0).count();
    let gap = worst.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(SuiteReport::new(
        "effective_dimension",
        worst.len(),
        failures,
        gap,
        format!("max d_eff - kappa^2/lambda = {gap:.3e}; monotonicity checked on 20 lambdas"),
    ))
}

fn nystrom_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let errs: Vec<f64> = (0..config.nystrom_cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[6, case as u64]));
            let n = rng.random_range(5..=40);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let kernel = KernelSpec::gaussian(rng.random_range(0.3..1.0));
            let lambda = rng.random_range(0.05..1.0);
            let ridge = fit_weights(&xs, &kernel, &WeightAlgorithm::Ridge { lambda })?;
            let nys = fit_weights(&xs, &kernel, &WeightAlgorithm::Nystrom { landmarks: n, lambda, seed: case as u64 })?;
            let mut worst: f64 = 0.0;
            for _ in 0..5 {
                let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let (a, b) = (ridge.alpha(&x)?, nys.alpha(&x)?);
                worst = worst.max((&a - &b).norm() / a.norm().max(1e-300));
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let failures = errs.iter().filter(|e| **e > 1e-8).count();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok(SuiteReport::new("nystrom", errs.len(), failures, worst, format!("max relative alpha gap at M = n: {worst:.3e}")))
}

fn random_feature_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let sups: Vec<f64> = (0..config.feature_seeds)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(config.seed, &[7, s as u64]);
            let mut rng = rng_from_seed(seed);
            let kernel = KernelSpec::gaussian(1.0);
            let map = RandomFeatureMap::sample(1.0, 3, 10_000, seed)?;
            let mut sup: f64 = 0.0;
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                sup = sup.max((map.approx_kernel(&x, &y)? - kernel.eval(&x, &y)?).abs());
            }
            Ok(sup)
        })
        .collect::<Result<_>>()?;
    let bad = sups.iter().filter(|s| **s >= 0.05).count();
    // Probabilistic guarantee: at least 95% of seeds must succeed.
    let failures = usize::from((sups.len() - bad) * 100 < 95 * sups.len());
    let worst = sups.iter().cloned().fold(0.0, f64::max);
    Ok(SuiteReport::new(
        "random_features",
        sups.len(),
        failures,
        worst,
        format!("{} of {} seeds with sup |k_hat - k| < 0.05 at M = 10^4", sups.len() - bad, sups.len()),
    ))
}

/// Objective of the circle problem at angle `t`.
fn circle_objective(alpha: &[f64], labels: &[Output], loss: &LossSpec, t: f64) -> Result<f64> {
    let z = Output::Point(vec![t.cos(), t.sin()]);
    let mut total = 0.0;
    for (a, y) in alpha.iter().zip(labels) {
        total += a * loss.eval(&z, y)?;
    }
    Ok(total)
}

fn sphere_decoding_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let loss = make_loss(&LossId::GeodesicSphereSq { dim: 2 })?;
    let gaps: Vec<f64> = (0..config.decode_cases)
        .into_par_iter()
        .map(|case| {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[8, case as u64]));
            let n = rng.random_range(2..=20);
            let labels: Vec<Output> = (0..n)
                .map(|_| {
                    let t: f64 = rng.random_range(0.0..TAU);
                    Output::Point(vec![t.cos(), t.sin()])
                })
                .collect();
            let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let problem = DecodeProblem::new(&alpha, &labels, &loss)?;
            let grid = (0..10_000)
                .map(|i| circle_objective(&alpha, &labels, &loss, TAU * i as f64 / 10_000.0))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let sphere = decode_sphere(&problem, &SphereConfig::default())?;
            let init = crate::decoder::decode_exhaustive(&problem, &labels)?;
            let init = init.output.as_point()?.to_vec();
            let sgd = decode_sgd(&problem, &init, &SgdConfig::default(), case as u64)?;
            Ok((sphere.objective - grid).max(sgd.objective - grid))
        })
        .collect::<Result<_>>()?;
    let failures = gaps.iter().filter(|g| **g > 1e-2).count();
    let worst = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SuiteReport::new(
        "sphere_decoding",
        gaps.len(),
        failures,
        worst,
        format!("max objective gap to a 10^4-point circle grid: {worst:.3e}"),
    ))
}

/// Every catalog loss on a finite domain, restricted where needed.
pub fn finite_catalog() -> Result<Vec<(String, FiniteEmbedding)>> {
    let classes = |t: usize| (0..t).map(Output::Class).collect::<Vec<_>>();
    let mut out = Vec::new();
    for t in [2, 3, 5] {
        let l = make_loss(&LossId::ZeroOne { classes: t })?;
        out.push((format!("zero_one({t})"), finite_embedding(&l, &classes(t), &classes(t))?));
    }
    let l = make_loss(&LossId::Constant { value: 1.5, classes: 3 })?;
    out.push(("constant(1.5)".into(), finite_embedding(&l, &classes(3), &classes(3))?));
    let hinge = make_loss(&LossId::Hinge)?;
    let zs = vec![Output::scalar(-1.0), Output::scalar(1.0)];
    let ys: Vec<Output> = (0..5).map(|i| Output::scalar(-1.0 + 0.5 * i as f64)).collect();
    out.push(("hinge".into(), finite_embedding(&hinge, &zs, &ys)?));
    let grid: Vec<Output> = (0..5).map(|i| Output::scalar(-1.0 + 0.5 * i as f64)).collect();
    for id in [LossId::Absolute { lo: -1.0, hi: 1.0 }, LossId::Huber { delta: 0.3, lo: -1.0, hi: 1.0 }] {
        let l = make_loss(&id)?;
        out.push((l.name().into(), finite_embedding(&l, &grid, &grid)?));
    }
    let pts: Vec<Output> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-0.5, 0.5]].iter().map(|p| Output::Point(p.to_vec())).collect();
    let sq = make_loss(&LossId::SquaredEuclidean { dim: 2, radius: Some(1.0) })?;
    out.push(("squared_euclidean".into(), finite_embedding(&sq, &pts, &pts)?));
    let hists: Vec<Output> = [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]
        .iter()
        .map(|p| Output::Point(p.to_vec()))
        .collect();
    let hel = make_loss(&LossId::Hellinger { bins: 3 })?;
    out.push(("hellinger".into(), finite_embedding(&hel, &hists, &hists)?));
    let circle: Vec<Output> = (0..6).map(|i| Output::Point(vec![(PI * i as f64 / 3.0).cos(), (PI * i as f64 / 3.0).sin()])).collect();
    let geo = make_loss(&LossId::GeodesicSphereSq { dim: 2 })?;
    out.push(("geodesic_sphere_sq".into(), finite_embedding(&geo, &circle, &circle)?));
    let kde = make_loss(&LossId::Kde { kernel: KernelSpec::gaussian(0.5), dim: 2 })?;
    out.push(("kde".into(), finite_embedding(&kde, &pts, &pts)?));
    let z1 = make_loss(&LossId::ZeroOne { classes: 3 })?;
    for (mode, name) in [(CombineMode::Sum, "sum"), (CombineMode::Product, "product")] {
        let c = combine(&z1, &make_loss(&LossId::Constant { value: 0.5, classes: 3 })?, mode);
        let pairs = c.outputs.elements().unwrap_or_default();
        out.push((format!("{name}(zero_one, constant)"), finite_embedding(&c, &pairs, &pairs)?));
    }
    Ok(out)
}

fn finite_embedding_suite() -> Result<SuiteReport> {
    let catalog = finite_catalog()?;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for (name, e) in &catalog {
        let err = e.reconstruction_error();
        worst = worst.max(err);
        let ok = err <= 1e-12 && e.phi_sup() <= 1.0 + 1e-12 && e.psi_sup() <= e.closs_bound() + 1e-12;
        if !ok {
            failures += 1;
            bad.push(name.clone());
        }
    }
    Ok(SuiteReport::new(
        "finite_embedding",
        catalog.len(),
        failures,
        worst,
        if bad.is_empty() {
            format!("max reconstruction error {worst:.3e}")
        } else {
            format!("failing: {}", bad.join(", "))
        },
    ))
}

fn fourier_suite() -> Result<SuiteReport> {
    let poisson = |u: f64| {
        let r: f64 = 0.95;
        (1.0 - r * r) / (1.0 - 2.0 * r * u.cos() + r * r)
    };
    let qs = [1, 2, 5, 10, 25, 50, 100, 200];
    let errors = qs
        .iter()
        .map(|&q| fourier_embedding(poisson, TAU, PI / 2.0, q).map(|e| e.reconstruction_error()))
        .collect::<Result<Vec<_>>>()?;
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let last = errors[errors.len() - 1];
    let failures = usize::from(!decreasing) + usize::from(last >= 1e-2);
    Ok(SuiteReport::new("fourier", qs.len(), failures, last, format!("sup errors over Q = {qs:?}: {errors:?}")))
}

fn bayes_suite(config: &VerifyConfig) -> Result<SuiteReport> {
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    let cases = 100;
    for case in 0..cases {
        let mut rng = rng_from_seed(derive_seed(config.seed, &[9, case as u64]));
        let t = rng.random_range(2..=3);
        let labels: Vec<Output> = (0..t).map(Output::Class).collect();
        let loss = make_loss(&LossId::ZeroOne { classes: t })?;
        let mut dist = random_distribution(&mut rng, &labels)?;
        if dist.m() > 4 {
            let m = 4;
            let marginal = vec![0.25; m];
            dist = SyntheticDistribution::new(
                dist.support()[..m].to_vec(),
                marginal,
                labels.clone(),
                dist.conditionals()[..m].to_vec(),
            )?;
        }
        let m = dist.m();
        let bayes = exact_fstar(&dist, &loss, &labels)?;
        for code in 0..t.pow(m as u32) {
            let table: Vec<Output> = (0..m).map(|k| Output::Class(code / t.pow(k as u32) % t)).collect();
            let gap = bayes.risk - structured_risk(&table, &dist, &loss)?;
            worst = worst.max(gap);
            if gap > 1e-15 {
                failures += 1;
            }
        }
    }
    Ok(SuiteReport::new(
        "bayes_optimality",
        cases,
        failures,
        worst,
        "Bayes risk against every deterministic table, m <= 4, |Z| <= 3".into(),
    ))
}
