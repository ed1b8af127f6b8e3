//! `ile`: experiment runner for structured prediction with loss embeddings.

mod config;
mod emit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::Loaded;
use emit::{json_summary, Artifacts, Table};
use ile::diagnostics::{effective_dimension_curve, log_grid, rate_experiment, structured_risk, RateConfig};
use ile::estimator::{empirical_risk, fit, PredictorConfig, StructuredPredictor};

#[derive(Parser)]
#[command(name = "ile", version, about = "Structured prediction experiments with implicit loss embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML, `version = 1`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "ILE_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Train a predictor and save it as model.json.
    Fit,
    /// Load a saved predictor and predict a CSV of inputs.
    Predict,
    /// Fit on a training sample and report risks on a fresh test sample.
    Eval,
    /// Excess-risk learning curve under a regularization schedule.
    Rates,
    /// Randomized checks of the library's theoretical guarantees.
    Verify,
    /// Effective-dimension curve of a sampled Gram matrix.
    Diag,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns `Ok(false)` when the command ran but reported failures.
fn run(cli: &Cli) -> Result<bool> {
    let loaded = match &cli.config {
        Some(p) => Loaded::read(p)?,
        None if cli.command == Command::Verify => Loaded::read_default()?,
        None => bail!("--config is required for this command"),
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("cannot configure the thread pool")?;
    }
    let seed = loaded.seed(cli.seed);
    let mut artifacts = Artifacts::default();
    let ok = match cli.command {
        Command::Fit => cmd_fit(&loaded, seed, &mut artifacts)?,
        Command::Predict => cmd_predict(&loaded, &mut artifacts)?,
        Command::Eval => cmd_eval(&loaded, seed, &mut artifacts)?,
        Command::Rates => cmd_rates(&loaded, seed, &mut artifacts)?,
        Command::Verify => cmd_verify(&loaded, seed, &mut artifacts)?,
        Command::Diag => cmd_diag(&loaded, seed, &mut artifacts)?,
    };
    for p in artifacts.write(&cli.out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(ok)
}

fn fit_predictor(loaded: &Loaded, n: usize, seed: u64) -> Result<(StructuredPredictor, ile::data::Dataset)> {
    let loss = loaded.loss()?;
    let data = loaded.dataset(n, seed, 0)?;
    data.validate_labels(&loss)?;
    let config = PredictorConfig {
        kernel: loaded.kernel(),
        algorithm: Some(loaded.algorithm(data.len())?),
        decoder: loaded.config.decoder.clone(),
        seed,
    };
    Ok((fit(&config, &loss, &data.inputs, &data.labels)?, data))
}

fn cmd_fit(loaded: &Loaded, seed: u64, artifacts: &mut Artifacts) -> Result<bool> {
    let n = match (&loaded.config.fit, loaded.task()?) {
        (Some(f), _) => *f.n.get_ref(),
        (None, config::TaskConfig::Files { .. }) => 0,
        (None, _) => bail!("{}: missing [fit] section", loaded.path.display()),
    };
    let (predictor, data) = fit_predictor(loaded, n, seed)?;
    let mut model = predictor.to_json()?.into_bytes();
    model.push(b'\n');
    artifacts.add("model.json", model);
    artifacts.add(
        "fit_summary.json",
        json_summary(
            "fit",
            &json!({
                "seed": seed,
                "n": data.len(),
                "task": data.task,
                "loss": predictor.loss().name(),
                "algorithm": predictor.model().algorithm(),
                "kernel": predictor.model().kernel(),
                "training_risk": empirical_risk(&predictor, &data.inputs, &data.labels, predictor.loss())?,
            }),
        )?,
    );
    println!("fitted {} on {} examples", predictor.model().algorithm().name(), data.len());
    Ok(true)
}

fn cmd_predict(loaded: &Loaded, artifacts: &mut Artifacts) -> Result<bool> {
    let section = loaded.section(&loaded.config.predict, "predict")?;
    let model_path = loaded.resolve(&section.model);
    let text = std::fs::read_to_string(&model_path).with_context(|| format!("cannot read model {}", model_path.display()))?;
    let predictor = StructuredPredictor::from_json(&text).with_context(|| format!("invalid model {}", model_path.display()))?;
    let inputs_path = loaded.resolve(&section.inputs);
    let file = std::fs::File::open(&inputs_path).with_context(|| format!("cannot open {}", inputs_path.display()))?;
    let xs = ile::data::read_inputs_csv(file).with_context(|| format!("invalid inputs {}", inputs_path.display()))?;
    let preds = predictor.predict_batch(&xs)?;
    let mut table = Table::new(&["index", "prediction"]);
    for (i, p) in preds.iter().enumerate() {
        table.push(vec![i.to_string(), serde_json::to_string(p)?]);
    }
    artifacts.add("predictions.csv", table.to_csv()?);
    println!("predicted {} inputs", xs.len());
    Ok(true)
}

fn cmd_eval(loaded: &Loaded, seed: u64, artifacts: &mut Artifacts) -> Result<bool> {
    let section = loaded.section(&loaded.config.eval, "eval")?;
    let (predictor, train) = fit_predictor(loaded, *section.n_train.get_ref(), seed)?;
    let test = loaded.dataset(*section.n_test.get_ref(), seed, 1)?;
    let loss = predictor.loss();
    let train_risk = empirical_risk(&predictor, &train.inputs, &train.labels, loss)?;
    let test_risk = empirical_risk(&predictor, &test.inputs, &test.labels, loss)?;
    let mut body = json!({
        "seed": seed,
        "task": train.task,
        "loss": loss.name(),
        "algorithm": predictor.model().algorithm(),
        "n_train": train.len(),
        "n_test": test.len(),
        "train_risk": train_risk,
        "test_risk": test_risk,
    });
    if let Some(dist) = loaded.distribution(seed)? {
        let outputs = loss.outputs.elements().ok_or_else(|| anyhow!("finite tasks need a finite output space"))?;
        let preds = predictor.predict_batch(dist.support())?;
        let risk = structured_risk(&preds, &dist, loss)?;
        let bayes = ile::diagnostics::exact_fstar(&dist, loss, &outputs)?.risk;
        body["exact_risk"] = json!(risk);
        body["bayes_risk"] = json!(bayes);
        body["excess_risk"] = json!(risk - bayes);
    }
    println!("test risk {test_risk:.6} on {} examples", test.len());
    artifacts.add("eval.json", json_summary("eval", &body)?);
    Ok(true)
}

fn cmd_rates(loaded: &Loaded, seed: u64, artifacts: &mut Artifacts) -> Result<bool> {
    let section = loaded.section(&loaded.config.rates, "rates")?;
    let schedule = loaded.schedule()?;
    let learner = loaded.config.schedule.as_ref().map(|s| s.learner).expect("schedule checked");
    let loss = loaded.loss()?;
    let dist = loaded
        .distribution(seed)?
        .ok_or_else(|| anyhow!("{}: rates need a finite task (finite_classification or smooth_binary)", loaded.path.display()))?;
    let outputs = loss.outputs.elements().ok_or_else(|| anyhow!("rates need a finite output space"))?;
    let config = RateConfig {
        distribution: dist,
        loss,
        outputs,
        kernel: loaded.kernel(),
        learner,
        schedule,
        n_grid: section.n_grid.get_ref().clone(),
        repetitions: *section.repetitions.get_ref(),
        seed,
    };
    println!("schedule: {} (r = {}, gamma = {})", schedule.describe(), schedule.r, schedule.gamma);
    println!("learner: {learner:?}; n grid {:?}; {} repetitions; seed {seed}", config.n_grid, config.repetitions);
    let result = rate_experiment(&config)?;
    let mut table = Table::new(&["n", "rep", "excess", "lambda", "seed"]);
    for r in &result.rows {
        table.push(vec![r.n.to_string(), r.rep.to_string(), r.excess.to_string(), r.lambda.to_string(), r.seed.to_string()]);
    }
    artifacts.add("rates.csv", table.to_csv()?);
    let mut points = Table::new(&["n", "mean", "stderr"]);
    for p in &result.points {
        points.push(vec![p.n.to_string(), p.mean.to_string(), p.stderr.to_string()]);
    }
    artifacts.add("rates_points.csv", points.to_csv()?);
    artifacts.add(
        "rates_summary.json",
        json_summary(
            "rates",
            &json!({
                "schedule": schedule.describe(),
                "r": schedule.r,
                "gamma": schedule.gamma,
                "learner": learner,
                "kernel": config.kernel,
                "loss": config.loss.name(),
                "n_grid": config.n_grid,
                "repetitions": config.repetitions,
                "seed": seed,
                "points": result.points,
                "slope": result.slope,
                "slope_ci": result.slope_ci,
                "saturated": result.saturated,
            }),
        )?,
    );
    for p in &result.points {
        println!("n = {:>6}: mean excess {:.4e} (stderr {:.2e})", p.n, p.mean, p.stderr);
    }
    match (result.slope, result.slope_ci) {
        (Some(s), Some((lo, hi))) => println!("slope {s:.4} (95% CI [{lo:.4}, {hi:.4}])"),
        _ => println!("slope undefined: excess risk saturated at zero"),
    }
    Ok(true)
}

fn cmd_verify(loaded: &Loaded, seed: u64, artifacts: &mut Artifacts) -> Result<bool> {
    let (mut config, suites) = loaded.verify_config()?;
    config.seed = seed;
    let reports = ile::verify::run(&config, &suites)?;
    for r in &reports {
        println!(
            "[{}] {}: {} ({} cases, {} failures)",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail,
            r.cases,
            r.failures
        );
    }
    let ok = reports.iter().all(|r| r.passed);
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("verify: {} of {} suites passed", reports.len() - failed, reports.len());
    artifacts.add("verify.json", json_summary("verify", &json!({ "seed": seed, "config": config, "suites": reports, "passed": ok }))?);
    Ok(ok)
}

fn cmd_diag(loaded: &Loaded, seed: u64, artifacts: &mut Artifacts) -> Result<bool> {
    let section = loaded.section(&loaded.config.diag, "diag")?;
    let data = loaded.dataset(*section.n.get_ref(), seed, 0)?;
    let gram = loaded.kernel().gram(&data.inputs)?;
    let lambdas = log_grid(section.points.max(1), *section.lambda_min.get_ref(), *section.lambda_max.get_ref());
    let curve = effective_dimension_curve(&gram, &lambdas)?;
    let mut table = Table::new(&["lambda", "d_eff", "kappa_sq_over_lambda", "n"]);
    for (l, d) in lambdas.iter().zip(&curve) {
        table.push(vec![l.to_string(), d.to_string(), (gram.kappa_sq() / l).to_string(), data.len().to_string()]);
    }
    artifacts.add("diag.csv", table.to_csv()?);
    println!("effective dimension at {} lambdas on n = {}", lambdas.len(), data.len());
    Ok(true)
}

impl Loaded {
    /// Configuration used by `verify` when no file is given.
    fn read_default() -> Result<Self> {
        Loaded::from_source("version = 1\n".into(), Path::new("<default>"))
    }
}
