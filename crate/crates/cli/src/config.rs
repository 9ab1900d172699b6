//! Flat `key=value` run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use relshift::cbow::TrainConfig;
use relshift::eval::{Exclusion, ExperimentPlan, Regime, ReportFormat, Scoring, Strategy};
use relshift::pipeline::SeedPolicy;
use relshift::projection::Direction;
use relshift::synth::{parse_schedule, staggered_schedule, SynthSpec};
use relshift::w2v::Format;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    File { path: PathBuf, line: usize, message: String },
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("missing required setting {0:?}")]
    Missing(&'static str),
}

/// Everything a run can be configured with. Keys cover the trainer, the
/// experiment plan, the synthetic generator (`synth.` prefix) and paths.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub seed_policy: SeedPolicy,
    /// Year of the slice a from-scratch `train` run stands for; mixed into
    /// the seed under the `per_year` policy.
    pub year: Option<i32>,
    pub lowercase: bool,
    pub format: Format,

    /// Regimes to evaluate; empty means every regime directory found.
    pub regimes: Vec<Regime>,
    pub strategies: Vec<Strategy>,
    pub scorings: Vec<Scoring>,
    /// Plan years; discovered from the snapshot directory when unset.
    pub years: Option<Vec<i32>>,
    pub lambda: f64,
    pub ks: Vec<usize>,
    pub direction: Direction,
    pub intercept: bool,
    pub exclude_source: bool,
    pub exclude_gold_sources: bool,
    pub report_format: ReportFormat,

    pub synth: SynthSpec,
    pub schedule: Schedule,

    pub corpus: Vec<PathBuf>,
    pub gold: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plan = ExperimentPlan::default();
        RunConfig {
            train: TrainConfig::default(),
            seed_policy: SeedPolicy::default(),
            year: None,
            lowercase: true,
            format: Format::Binary,
            regimes: Vec::new(),
            strategies: vec![Strategy::UpToNow, Strategy::Previous],
            scorings: vec![Scoring::InVocabOnly, Scoring::AllPairs],
            years: None,
            lambda: plan.lambda,
            ks: plan.ks,
            direction: plan.direction,
            intercept: plan.intercept,
            exclude_source: false,
            exclude_gold_sources: false,
            report_format: ReportFormat::Tsv,
            synth: SynthSpec::benchmark(),
            schedule: Schedule::Staggered(None),
            corpus: Vec::new(),
            gold: None,
            snapshot: None,
            snapshot_dir: None,
            output: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(str::trim).filter(|v| !v.is_empty()).map(|v| parse(key, v)).collect()
}

/// `1995..=2010` or a comma-separated list.
fn parse_years(key: &str, value: &str) -> Result<Vec<i32>, ConfigError> {
    match value.split_once("..=") {
        Some((a, b)) => Ok((parse::<i32>(key, a.trim())?..=parse::<i32>(key, b.trim())?).collect()),
        None => parse_list(key, value),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Active pairs per synthetic year.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// `initial` pairs (half by default) from the first year, the rest
    /// introduced over the later years.
    Staggered(Option<usize>),
    Explicit(Vec<Vec<usize>>),
}

impl Schedule {
    fn render(&self) -> String {
        match self {
            Schedule::Staggered(None) => "staggered".into(),
            Schedule::Staggered(Some(n)) => format!("staggered:{n}"),
            Schedule::Explicit(groups) => groups.iter().map(|y| join(y)).collect::<Vec<_>>().join("|"),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        if let Some(path) = path {
            let text =
                fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
            config.apply_text(&text, path)?;
        }
        Ok(config)
    }

    fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::File {
                    path: path.to_owned(),
                    line: i + 1,
                    message: format!("expected key=value, found {line:?}"),
                });
            };
            self.set(key.trim(), value.trim()).map_err(|e| ConfigError::File {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError::Value {
            key: pair.to_owned(),
            value: String::new(),
            reason: "expected key=value".into(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "dim" => t.dim = parse(key, value)?,
            "window" => t.window = parse(key, value)?,
            "negative" => t.negative = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "min_count" => t.min_count = parse(key, value)?,
            "expand_threshold" => {
                t.expand_threshold = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "lr_initial" => t.lr_initial = parse(key, value)?,
            "lr_min" => t.lr_min = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "unigram_power" => t.unigram_power = parse(key, value)?,
            "table_size" => t.table_size = parse(key, value)?,
            "workers" => t.workers = parse(key, value)?,
            "seed_policy" => self.seed_policy = parse(key, value)?,
            "year" => {
                self.year = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "lowercase" => self.lowercase = parse(key, value)?,
            "format" => self.format = parse(key, value)?,

            "regime" => {
                self.regimes = match value {
                    "auto" => Vec::new(),
                    v => parse_list(key, v)?,
                }
            }
            "strategy" => self.strategies = parse_list(key, value)?,
            "scoring" => self.scorings = parse_list(key, value)?,
            "years" => {
                self.years = match value {
                    "auto" => None,
                    v => Some(parse_years(key, v)?),
                }
            }
            "lambda" => self.lambda = parse(key, value)?,
            "ks" => self.ks = parse_list(key, value)?,
            "direction" => self.direction = parse(key, value)?,
            "intercept" => self.intercept = parse(key, value)?,
            "exclude_source" => self.exclude_source = parse(key, value)?,
            "exclude_gold_sources" => self.exclude_gold_sources = parse(key, value)?,
            "report_format" => self.report_format = parse(key, value)?,

            "synth.dim" => s.dim = parse(key, value)?,
            "synth.n_pairs" => s.n_pairs = parse(key, value)?,
            "synth.noise_sigma" => s.noise_sigma = parse(key, value)?,
            "synth.years" => s.years = parse(key, value)?,
            "synth.start_year" => s.start_year = parse(key, value)?,
            "synth.vocab_background" => s.vocab_background = parse(key, value)?,
            "synth.cooccur_strength" => s.cooccur_strength = parse(key, value)?,
            "synth.background_sentences" => s.background_sentences = parse(key, value)?,
            "synth.seed" => s.seed = parse(key, value)?,
            "synth.schedule" => {
                self.schedule = match value {
                    "staggered" => Schedule::Staggered(None),
                    v => match v.strip_prefix("staggered:") {
                        Some(initial) => Schedule::Staggered(Some(parse(key, initial)?)),
                        None => Schedule::Explicit(parse_schedule(v).map_err(|e| ConfigError::Value {
                            key: key.to_owned(),
                            value: v.to_owned(),
                            reason: e.to_string(),
                        })?),
                    },
                }
            }

            "corpus" => {
                self.corpus = value.split(',').map(str::trim).filter(|v| !v.is_empty()).map(PathBuf::from).collect()
            }
            "gold" => self.gold = Some(value.into()),
            "snapshot" => self.snapshot = Some(value.into()),
            "snapshot_dir" => self.snapshot_dir = Some(value.into()),
            "output" => self.output = Some(value.into()),
            _ => return Err(ConfigError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order. Feeding the
    /// result back through [`RunConfig::load`] reproduces the configuration.
    pub fn render(&self) -> String {
        let t = &self.train;
        let s = &self.synth;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut entries: Vec<(&str, String)> = vec![
            ("dim", t.dim.to_string()),
            ("window", t.window.to_string()),
            ("negative", t.negative.to_string()),
            ("epochs", t.epochs.to_string()),
            ("min_count", t.min_count.to_string()),
            ("expand_threshold", opt(t.expand_threshold.map(|v| v.to_string()))),
            ("lr_initial", t.lr_initial.to_string()),
            ("lr_min", t.lr_min.to_string()),
            ("seed", t.seed.to_string()),
            ("unigram_power", t.unigram_power.to_string()),
            ("table_size", t.table_size.to_string()),
            ("workers", t.workers.to_string()),
            ("seed_policy", self.seed_policy.name().into()),
            ("year", opt(self.year.map(|y| y.to_string()))),
            ("lowercase", self.lowercase.to_string()),
            ("format", self.format.name().into()),
            ("regime", if self.regimes.is_empty() { "auto".into() } else { join(&self.regimes) }),
            ("strategy", join(&self.strategies)),
            ("scoring", join(&self.scorings)),
            ("years", self.years.as_deref().map_or_else(|| "auto".into(), join)),
            ("lambda", self.lambda.to_string()),
            ("ks", join(&self.ks)),
            ("direction", self.direction.name().into()),
            ("intercept", self.intercept.to_string()),
            ("exclude_source", self.exclude_source.to_string()),
            ("exclude_gold_sources", self.exclude_gold_sources.to_string()),
            ("report_format", self.report_format.name().into()),
            ("synth.dim", s.dim.to_string()),
            ("synth.n_pairs", s.n_pairs.to_string()),
            ("synth.noise_sigma", s.noise_sigma.to_string()),
            ("synth.years", s.years.to_string()),
            ("synth.start_year", s.start_year.to_string()),
            ("synth.vocab_background", s.vocab_background.to_string()),
            ("synth.cooccur_strength", s.cooccur_strength.to_string()),
            ("synth.background_sentences", s.background_sentences.to_string()),
            ("synth.seed", s.seed.to_string()),
            ("synth.schedule", self.schedule.render()),
        ];
        if !self.corpus.is_empty() {
            entries.push(("corpus", join(&self.corpus.iter().map(|p| p.display()).collect::<Vec<_>>())));
        }
        for (key, value) in [
            ("gold", path(&self.gold)),
            ("snapshot", path(&self.snapshot)),
            ("snapshot_dir", path(&self.snapshot_dir)),
            ("output", path(&self.output)),
        ] {
            if let Some(v) = value {
                entries.push((key, v));
            }
        }
        let mut out = String::from("# resolved relshift configuration\n");
        for (k, v) in entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// The generator spec with the schedule resolved against the final
    /// pair and year counts.
    pub fn synth_spec(&self) -> SynthSpec {
        let s = &self.synth;
        let schedule = match &self.schedule {
            Schedule::Staggered(initial) => staggered_schedule(s.n_pairs, s.years, initial.unwrap_or(s.n_pairs / 2)),
            Schedule::Explicit(groups) => groups.clone(),
        };
        SynthSpec { schedule, ..s.clone() }
    }

    pub fn plan(&self, years: Vec<i32>, regime: Regime, strategy: Strategy, scoring: Scoring) -> ExperimentPlan {
        ExperimentPlan {
            years,
            regime,
            strategy,
            lambda: self.lambda,
            ks: self.ks.clone(),
            scoring,
            direction: self.direction,
            intercept: self.intercept,
            exclusion: Exclusion { source: self.exclude_source, gold_sources: self.exclude_gold_sources },
        }
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, key: &'static str) -> Result<&'a Path, ConfigError> {
        value.as_deref().ok_or(ConfigError::Missing(key))
    }
}
