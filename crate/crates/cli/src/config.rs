//! TOML experiment configuration and its validation.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use toml::Spanned;

use ile::data::{
    gen_finite_classification, gen_histogram_task_with, gen_smooth_binary, gen_sphere_regression, Dataset,
    HISTOGRAM_CONCENTRATION,
};
use ile::diagnostics::{RateLearner, Schedule, SyntheticDistribution};
use ile::estimator::DecoderStrategy;
use ile::kernels::KernelSpec;
use ile::losses::{make_loss, LossId, LossSpec};
use ile::rng::derive_seed;
use ile::verify::VerifyConfig;
use ile::weights::WeightAlgorithm;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: Spanned<u32>,
    #[serde(default)]
    pub seed: u64,
    pub task: Option<Spanned<TaskConfig>>,
    pub loss: Option<LossId>,
    pub kernel: Option<KernelSpec>,
    pub algorithm: Option<WeightAlgorithm>,
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub decoder: DecoderStrategy,
    pub fit: Option<FitSection>,
    pub predict: Option<PredictSection>,
    pub eval: Option<EvalSection>,
    pub rates: Option<RatesSection>,
    /// Suite selection (`suites = [...]`) and suite sizes.
    pub verify: Option<toml::Table>,
    pub diag: Option<DiagSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    FiniteClassification { dim: usize, classes: usize, support: usize, temperature: f64 },
    SmoothBinary { support: usize, amplitude: f64, frequency: f64 },
    Sphere { dim: usize, concentration: Option<f64> },
    Histogram { bins: usize, dim: usize, concentration: Option<f64> },
    Files { inputs: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub r: Spanned<f64>,
    pub gamma: Spanned<f64>,
    pub learner: RateLearner,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub n: Spanned<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub model: PathBuf,
    pub inputs: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_train: Spanned<usize>,
    pub n_test: Spanned<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub n_grid: Spanned<Vec<usize>>,
    pub repetitions: Spanned<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagSection {
    pub n: Spanned<usize>,
    pub lambda_min: Spanned<f64>,
    pub lambda_max: Spanned<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    50
}

/// A validated configuration together with its source text and location.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub source: String,
    pub path: PathBuf,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_source(source, path)
    }

    pub fn from_source(source: String, path: &Path) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(&source).map_err(|e| anyhow!("{}: {}", path.display(), e.to_string().trim_end()))?;
        let loaded = Loaded { config, source, path: path.to_path_buf() };
        loaded.validate()?;
        Ok(loaded)
    }

    /// Error pointing at the line of a spanned value.
    pub fn at<T>(&self, value: &Spanned<T>, message: impl std::fmt::Display) -> anyhow::Error {
        anyhow!("{}:{}: {message}", self.path.display(), line_of(&self.source, value.span().start))
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if *c.version.get_ref() != CONFIG_VERSION {
            return Err(self.at(&c.version, format!("unsupported config version {}, expected {CONFIG_VERSION}", c.version.get_ref())));
        }
        if let Some(s) = &c.schedule {
            if !(*s.r.get_ref() >= 0.0) {
                return Err(self.at(&s.r, format!("schedule r must be >= 0, got {}", s.r.get_ref())));
            }
            if !(0.0..=1.0).contains(s.gamma.get_ref()) {
                return Err(self.at(&s.gamma, format!("schedule gamma must be in [0, 1], got {}", s.gamma.get_ref())));
            }
        }
        if let Some(task) = &c.task {
            self.validate_task(task)?;
        }
        if let Some(f) = &c.fit {
            if *f.n.get_ref() == 0 {
                return Err(self.at(&f.n, "fit.n must be at least 1"));
            }
        }
        if let Some(e) = &c.eval {
            for v in [&e.n_train, &e.n_test] {
                if *v.get_ref() == 0 {
                    return Err(self.at(v, "sample sizes must be at least 1"));
                }
            }
        }
        if let Some(r) = &c.rates {
            let g = r.n_grid.get_ref();
            if g.len() < 4 || g.windows(2).any(|w| w[1] <= w[0]) || g[0] == 0 {
                return Err(self.at(&r.n_grid, "n_grid must be increasing, positive, with at least 4 points"));
            }
            if *r.repetitions.get_ref() < 10 {
                return Err(self.at(&r.repetitions, "repetitions must be at least 10"));
            }
        }
        if let Some(d) = &c.diag {
            if *d.n.get_ref() == 0 {
                return Err(self.at(&d.n, "diag.n must be at least 1"));
            }
            let (lo, hi) = (*d.lambda_min.get_ref(), *d.lambda_max.get_ref());
            if !(lo > 0.0) {
                return Err(self.at(&d.lambda_min, "lambda_min must be positive"));
            }
            if !(hi >= lo) {
                return Err(self.at(&d.lambda_max, "lambda_max must be at least lambda_min"));
            }
        }
        if let Some(k) = &c.kernel {
            k.validate().map_err(|e| anyhow!("{}: [kernel] {e}", self.path.display()))?;
        }
        if let Some(l) = &c.loss {
            make_loss(l).map_err(|e| anyhow!("{}: [loss] {e}", self.path.display()))?;
        }
        self.verify_config()?;
        Ok(())
    }

    fn validate_task(&self, task: &Spanned<TaskConfig>) -> Result<()> {
        let bad = |msg: String| Err(self.at(task, msg));
        match task.get_ref() {
            TaskConfig::FiniteClassification { dim, classes, support, temperature } => {
                if *dim == 0 || *classes < 2 || *support < 2 || !(*temperature > 0.0) {
                    return bad("finite_classification needs dim >= 1, classes >= 2, support >= 2, temperature > 0".into());
                }
            }
            TaskConfig::SmoothBinary { support, amplitude, frequency } => {
                if *support < 2 || !(*amplitude > 0.0 && *amplitude <= 0.5) || !(*frequency > 0.0) {
                    return bad("smooth_binary needs support >= 2, amplitude in (0, 0.5], frequency > 0".into());
                }
            }
            TaskConfig::Sphere { dim, concentration } => {
                if *dim < 2 || concentration.is_some_and(|k| !(k > 0.0)) {
                    return bad("sphere needs dim >= 2 and a positive concentration".into());
                }
            }
            TaskConfig::Histogram { bins, dim, concentration } => {
                if *bins < 2 || *dim == 0 || concentration.is_some_and(|k| !(k > 0.0)) {
                    return bad("histogram needs bins >= 2, dim >= 1 and a positive concentration".into());
                }
            }
            TaskConfig::Files { .. } => {}
        }
        Ok(())
    }

    pub fn seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed.unwrap_or(self.config.seed)
    }

    /// Resolves a path relative to the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    pub fn task(&self) -> Result<&TaskConfig> {
        self.config
            .task
            .as_ref()
            .map(Spanned::get_ref)
            .ok_or_else(|| anyhow!("{}: missing [task] section", self.path.display()))
    }

    pub fn kernel(&self) -> KernelSpec {
        self.config.kernel.unwrap_or_else(|| KernelSpec::gaussian(1.0))
    }

    /// The configured loss, or the natural loss of the task.
    pub fn loss(&self) -> Result<LossSpec> {
        let id = match (&self.config.loss, self.task()?) {
            (Some(id), _) => id.clone(),
            (None, TaskConfig::FiniteClassification { classes, .. }) => LossId::ZeroOne { classes: *classes },
            (None, TaskConfig::SmoothBinary { .. }) => LossId::ZeroOne { classes: 2 },
            (None, TaskConfig::Sphere { dim, .. }) => LossId::GeodesicSphereSq { dim: *dim },
            (None, TaskConfig::Histogram { bins, .. }) => LossId::Hellinger { bins: *bins },
            (None, TaskConfig::Files { .. }) => bail!("{}: a [loss] section is required for file tasks", self.path.display()),
        };
        Ok(make_loss(&id)?)
    }

    /// The finite distribution behind a finite task.
    pub fn distribution(&self, seed: u64) -> Result<Option<SyntheticDistribution>> {
        Ok(match self.task()? {
            TaskConfig::FiniteClassification { dim, classes, support, temperature } => Some(gen_finite_classification(
                derive_seed(seed, &[0]),
                *dim,
                *classes,
                *support,
                *temperature,
            )?),
            TaskConfig::SmoothBinary { support, amplitude, frequency } => {
                Some(gen_smooth_binary(*support, *amplitude, *frequency)?)
            }
            _ => None,
        })
    }

    /// `n` draws from the task; `stream` separates training and test samples.
    pub fn dataset(&self, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
        let draw_seed = derive_seed(seed, &[1, stream]);
        let data = match self.task()? {
            TaskConfig::Sphere { dim, concentration } => {
                gen_sphere_regression(derive_seed(seed, &[0]), *dim, *concentration)?.sample(n, draw_seed)?
            }
            TaskConfig::Histogram { bins, dim, concentration } => gen_histogram_task_with(
                derive_seed(seed, &[0]),
                *bins,
                *dim,
                concentration.unwrap_or(HISTOGRAM_CONCENTRATION),
            )?
            .sample(n, draw_seed)?,
            TaskConfig::Files { inputs, labels } => {
                let open = |p: &Path| {
                    let p = self.resolve(p);
                    std::fs::File::open(&p).with_context(|| format!("cannot open {}", p.display()))
                };
                let d = Dataset::read(open(inputs)?, open(labels)?, "files")?;
                if stream != 0 {
                    bail!("file tasks provide a single sample; eval and rates need a generated task");
                }
                d
            }
            _ => {
                let dist = self.distribution(seed)?.expect("finite task");
                ile::data::sample(&dist, n, draw_seed)?
            }
        };
        Ok(data)
    }

    pub fn algorithm(&self, n: usize) -> Result<WeightAlgorithm> {
        if let Some(a) = &self.config.algorithm {
            return Ok(a.clone());
        }
        if let Some(s) = &self.config.schedule {
            return Ok(s.learner.algorithm(&self.schedule()?, n));
        }
        Ok(WeightAlgorithm::Ridge { lambda: ile::estimator::default_lambda(n) })
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let s = self
            .config
            .schedule
            .as_ref()
            .ok_or_else(|| anyhow!("{}: missing [schedule] section", self.path.display()))?;
        Ok(Schedule::new(*s.r.get_ref(), *s.gamma.get_ref())?)
    }

    /// Suite sizes and the selected suite names (empty for all).
    pub fn verify_config(&self) -> Result<(VerifyConfig, Vec<String>)> {
        let err = |e: toml::de::Error| anyhow!("{}: [verify] {}", self.path.display(), e.to_string().trim_end());
        let mut table = self.config.verify.clone().unwrap_or_default();
        let suites: Vec<String> = match table.remove("suites") {
            Some(v) => v.try_into().map_err(err)?,
            None => Vec::new(),
        };
        if let Some(bad) = suites.iter().find(|s| !ile::verify::SUITES.contains(&s.as_str())) {
            bail!("{}: [verify] unknown suite '{bad}'; known: {}", self.path.display(), ile::verify::SUITES.join(", "));
        }
        table.insert("seed".into(), toml::Value::Integer(self.config.seed as i64));
        Ok((table.try_into().map_err(err)?, suites))
    }

    pub fn section<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section.as_ref().ok_or_else(|| anyhow!("{}: missing [{name}] section", self.path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Loaded> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        Loaded::read(&p)
    }

    #[test]
    fn minimal_config() {
        let l = parse("version = 1\n[task]\nkind = \"smooth_binary\"\nsupport = 10\namplitude = 0.3\nfrequency = 1.0\n").unwrap();
        assert_eq!(l.loss().unwrap().name(), "zero_one");
        assert_eq!(l.dataset(5, 0, 0).unwrap().len(), 5);
    }

    #[test]
    fn errors_name_lines() {
        let e = parse("version = 1\n[schedule]\nr = 0.0\ngamma = 1.5\nlearner = { kind = \"ridge\" }\n").err().unwrap();
        assert!(e.to_string().contains(":4: schedule gamma"), "{e}");
        let e = parse("version = 2\n").err().unwrap();
        assert!(e.to_string().contains(":1: unsupported config version"), "{e}");
        let e = parse("version = 1\nbogus = 3\n").err().unwrap();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse("version = 1\n[rates]\nn_grid = [1, 2, 3]\nrepetitions = 10\n").err().unwrap();
        assert!(e.to_string().contains(":3: n_grid"), "{e}");
    }
}
