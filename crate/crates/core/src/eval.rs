//! Diachronic evaluation: per-year projection fitting on snapshot `t`,
//! next-year prediction on snapshot `t+1`, under the four model regimes and
//! two training-pair strategies, with both scoring modes.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{nearest_neighbors, EmbeddingModel};
use crate::error::{Error, Result};
use crate::gold::{pairs_in, pairs_up_to, split_new_vs_ongoing, RelationPair};
use crate::projection::{assemble_design, fit_with, Direction, FitOptions, ProjectionMatrix};
use crate::scalar::Scalar;

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn name(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

/// How yearly snapshots were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    /// From scratch on each year alone.
    Separate,
    /// From scratch on all years up to the current one.
    Cumulative,
    /// Incremental updates with the first year's vocabulary frozen.
    IncrStatic,
    /// Incremental updates with vocabulary expansion.
    IncrDynamic,
}

named_enum!(Regime {
    Separate => "separate",
    Cumulative => "cumulative",
    IncrStatic => "incr_static",
    IncrDynamic => "incr_dynamic",
});

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Separate, Regime::Cumulative, Regime::IncrStatic, Regime::IncrDynamic];
}

/// Which gold pairs train the projection for step `t → t+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Every pair with year ≤ t.
    UpToNow,
    /// Pairs active in year t only.
    Previous,
}

named_enum!(Strategy {
    UpToNow => "up_to_now",
    Previous => "previous",
});

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scoring {
    /// Pairs with an out-of-vocabulary member are skipped.
    InVocabOnly,
    /// Pairs with an out-of-vocabulary member count as misses.
    AllPairs,
}

named_enum!(Scoring {
    InVocabOnly => "in_vocab_only",
    AllPairs => "all_pairs",
});

/// Tokens removed from neighbor candidates at prediction time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    /// The test pair's own input token.
    pub source: bool,
    /// Every input-side token in the gold data.
    pub gold_sources: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub years: Vec<i32>,
    pub regime: Regime,
    pub strategy: Strategy,
    pub lambda: f64,
    pub ks: Vec<usize>,
    pub scoring: Scoring,
    pub direction: Direction,
    pub intercept: bool,
    pub exclusion: Exclusion,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            years: (1995..=2010).collect(),
            regime: Regime::IncrDynamic,
            strategy: Strategy::UpToNow,
            lambda: 1.0,
            ks: vec![1, 5, 10],
            scoring: Scoring::AllPairs,
            direction: Direction::Forward,
            intercept: true,
            exclusion: Exclusion::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.years.len() < 2 {
            return Err(Error::Plan("a plan needs at least two years (one prediction step)".into()));
        }
        if self.years.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Plan("plan years must be strictly increasing".into()));
        }
        if self.ks.is_empty() || self.ks[0] == 0 || self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Plan("ks must be strictly increasing positive integers".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Plan(format!("invalid lambda {}", self.lambda)));
        }
        Ok(())
    }
}

/// Outcome for one test pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair: RelationPair,
    /// 0-based rank of the true output token, if within the largest k.
    pub rank: Option<usize>,
    pub oov: bool,
}

/// Accuracies and counts for one group of test pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Percent in `[0, 100]`, one per k.
    pub accuracy: Vec<f64>,
    pub hits: Vec<usize>,
    pub evaluated: usize,
    pub skipped: usize,
    pub oov_missed: usize,
}

impl Score {
    pub fn from_outcomes(outcomes: &[PairOutcome], ks: &[usize], scoring: Scoring) -> Score {
        let oov = outcomes.iter().filter(|o| o.oov).count();
        let evaluated = outcomes.len() - oov;
        let (skipped, oov_missed, denominator) = match scoring {
            Scoring::InVocabOnly => (oov, 0, evaluated),
            Scoring::AllPairs => (0, oov, outcomes.len()),
        };
        let hits: Vec<usize> =
            ks.iter().map(|&k| outcomes.iter().filter(|o| o.rank.is_some_and(|r| r < k)).count()).collect();
        let accuracy =
            hits.iter().map(|&h| if denominator == 0 { 0.0 } else { 100.0 * h as f64 / denominator as f64 }).collect();
        Score { accuracy, hits, evaluated, skipped, oov_missed }
    }

    /// Pairs in the accuracy denominator.
    pub fn denominator(&self) -> usize {
        self.evaluated + self.oov_missed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: Score,
    pub outcomes: Vec<PairOutcome>,
}

/// Scoring settings shared by every pair of one prediction run.
#[derive(Clone, Debug)]
pub struct PredictOptions<'a> {
    pub ks: &'a [usize],
    pub scoring: Scoring,
    pub direction: Direction,
    /// Tokens never returned as neighbors.
    pub exclude: &'a HashSet<String>,
    /// Also drop each pair's own input token from its neighbor list.
    pub exclude_source: bool,
}

impl<'a> PredictOptions<'a> {
    pub fn new(ks: &'a [usize], scoring: Scoring, exclude: &'a HashSet<String>) -> Self {
        PredictOptions { ks, scoring, direction: Direction::Forward, exclude, exclude_source: false }
    }
}

/// Map every test pair's input vector through `proj`, rank the vocabulary of
/// `model` by cosine and record whether the true output token is in the top k.
pub fn predict_year<F: Scalar>(
    model: &EmbeddingModel<F>,
    proj: &ProjectionMatrix<F>,
    test: &[RelationPair],
    opts: &PredictOptions<'_>,
) -> Result<Prediction> {
    let PredictOptions { ks, scoring, direction, exclude, exclude_source } = *opts;
    if test.is_empty() {
        return Err(Error::Plan("empty test set".into()));
    }
    let k_max = ks.iter().copied().max().unwrap_or(1).max(1);
    let mut outcomes = Vec::with_capacity(test.len());
    for pair in test {
        let (input, output) = direction.roles(pair);
        let (Some(src), true) = (model.get(input), model.contains(output)) else {
            outcomes.push(PairOutcome { pair: pair.clone(), rank: None, oov: true });
            continue;
        };
        let predicted = proj.apply(src)?;
        let rank = if exclude_source && !exclude.contains(input) {
            let mut ex = exclude.clone();
            ex.insert(input.to_owned());
            rank_of(model, &predicted, k_max, &ex, output)?
        } else {
            rank_of(model, &predicted, k_max, exclude, output)?
        };
        outcomes.push(PairOutcome { pair: pair.clone(), rank, oov: false });
    }
    Ok(Prediction { score: Score::from_outcomes(&outcomes, ks, scoring), outcomes })
}

fn rank_of<F: Scalar>(
    model: &EmbeddingModel<F>,
    query: &[F],
    k: usize,
    exclude: &HashSet<String>,
    target: &str,
) -> Result<Option<usize>> {
    match nearest_neighbors(model, query, k, exclude) {
        Ok(nn) => Ok(nn.position(target)),
        // a zero predicted vector ranks nothing
        Err(Error::Domain(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearResult {
    pub train_year: i32,
    pub test_year: i32,
    pub train_pairs: usize,
    pub train_skipped: usize,
    pub score: Score,
    /// Test pairs whose combination never occurred up to `train_year`.
    pub new: Score,
    pub ongoing: Score,
    pub outcomes: Vec<PairOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedStep {
    pub train_year: i32,
    pub test_year: i32,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub regime: Regime,
    pub strategy: Strategy,
    pub scoring: Scoring,
    pub ks: Vec<usize>,
    pub years: Vec<YearResult>,
    pub failed: Vec<FailedStep>,
    /// Macro average across year steps with a non-empty denominator.
    pub mean: Vec<f64>,
    /// Micro average over every pooled test pair.
    pub pooled: Vec<f64>,
    pub new_mean: Vec<f64>,
    pub ongoing_mean: Vec<f64>,
}

impl EvalReport {
    pub fn empty(regime: Regime, strategy: Strategy, scoring: Scoring, ks: Vec<usize>) -> Self {
        EvalReport {
            regime,
            strategy,
            scoring,
            ks,
            years: Vec::new(),
            failed: Vec::new(),
            mean: Vec::new(),
            pooled: Vec::new(),
            new_mean: Vec::new(),
            ongoing_mean: Vec::new(),
        }
    }

    /// Per-year accuracy series at `ks[k_index]`, for significance testing.
    pub fn series(&self, k_index: usize) -> Vec<f64> {
        self.years.iter().map(|y| y.score.accuracy[k_index]).collect()
    }

    pub fn mean_at(&self, k: usize) -> Option<f64> {
        let i = self.ks.iter().position(|&x| x == k)?;
        self.mean.get(i).copied()
    }

    fn finish(&mut self) {
        let nk = self.ks.len();
        let macro_mean = |pick: &dyn Fn(&YearResult) -> &Score| -> Vec<f64> {
            let scored: Vec<&Score> = self.years.iter().map(pick).filter(|s| s.denominator() > 0).collect();
            (0..nk)
                .map(|k| {
                    if scored.is_empty() {
                        0.0
                    } else {
                        scored.iter().map(|s| s.accuracy[k]).sum::<f64>() / scored.len() as f64
                    }
                })
                .collect()
        };
        self.mean = macro_mean(&|y| &y.score);
        self.new_mean = macro_mean(&|y| &y.new);
        self.ongoing_mean = macro_mean(&|y| &y.ongoing);
        let denominator: usize = self.years.iter().map(|y| y.score.denominator()).sum();
        self.pooled = (0..nk)
            .map(|k| {
                let hits: usize = self.years.iter().map(|y| y.score.hits[k]).sum();
                if denominator == 0 {
                    0.0
                } else {
                    100.0 * hits as f64 / denominator as f64
                }
            })
            .collect();
    }
}

/// Run every consecutive step `t → t+1` of the plan.
pub fn run_plan<F: Scalar>(
    plan: &ExperimentPlan,
    snapshots: &BTreeMap<i32, EmbeddingModel<F>>,
    gold: &[RelationPair],
) -> Result<EvalReport> {
    plan.validate()?;
    for year in &plan.years {
        if !snapshots.contains_key(year) {
            return Err(Error::Plan(format!("no {} snapshot for year {year}", plan.regime)));
        }
    }
    let mut exclude = HashSet::new();
    if plan.exclusion.gold_sources {
        for p in gold {
            exclude.insert(plan.direction.roles(p).0.to_owned());
        }
    }
    let predict_opts = PredictOptions {
        ks: &plan.ks,
        scoring: plan.scoring,
        direction: plan.direction,
        exclude: &exclude,
        exclude_source: plan.exclusion.source,
    };
    let fit_opts = FitOptions { lambda: plan.lambda, intercept: plan.intercept };

    let mut report = EvalReport::empty(plan.regime, plan.strategy, plan.scoring, plan.ks.clone());
    for step in plan.years.windows(2) {
        let (t, next) = (step[0], step[1]);
        let fail = |reason: String| FailedStep { train_year: t, test_year: next, reason };
        let train = match plan.strategy {
            Strategy::UpToNow => pairs_up_to(gold, t),
            Strategy::Previous => pairs_in(gold, t),
        };
        let test = pairs_in(gold, next);
        if test.is_empty() {
            report.failed.push(fail("no gold pairs in the test year".into()));
            continue;
        }
        let design = match assemble_design(&train, &snapshots[&t], plan.direction) {
            Ok(d) => d,
            Err(e) => {
                report.failed.push(fail(e.to_string()));
                continue;
            }
        };
        let proj = match fit_with(&design, fit_opts) {
            Ok(p) => p,
            Err(e) => {
                report.failed.push(fail(e.to_string()));
                continue;
            }
        };
        let prediction = predict_year(&snapshots[&next], &proj, &test, &predict_opts)?;
        let history = pairs_up_to(gold, t);
        let (new, ongoing) = split_new_vs_ongoing(&test, &history);
        let ids = |pairs: &[RelationPair]| pairs.iter().map(|p| p.id).collect::<HashSet<_>>();
        let (new_ids, ongoing_ids) = (ids(&new), ids(&ongoing));
        let subset = |wanted: &HashSet<usize>| {
            let sel: Vec<PairOutcome> =
                prediction.outcomes.iter().filter(|o| wanted.contains(&o.pair.id)).cloned().collect();
            Score::from_outcomes(&sel, &plan.ks, plan.scoring)
        };
        report.years.push(YearResult {
            train_year: t,
            test_year: next,
            train_pairs: design.len(),
            train_skipped: design.skipped.len(),
            new: subset(&new_ids),
            ongoing: subset(&ongoing_ids),
            score: prediction.score,
            outcomes: prediction.outcomes,
        });
    }
    report.finish();
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    JsonLines,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "jsonl" | "json-lines" => Ok(ReportFormat::JsonLines),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

impl ReportFormat {
    pub fn name(self) -> &'static str {
        match self {
            ReportFormat::Tsv => "tsv",
            ReportFormat::JsonLines => "jsonl",
        }
    }
}

pub const TSV_HEADER: &str = "regime\tstrategy\tscoring\tyear\tk\taccuracy\tevaluated\tskipped\toov_missed";

pub fn write_tsv<W: Write>(reports: &[EvalReport], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{TSV_HEADER}")?;
    for r in reports {
        let prefix = format!("{}\t{}\t{}", r.regime, r.strategy, r.scoring);
        for y in &r.years {
            for (i, k) in r.ks.iter().enumerate() {
                writeln!(
                    w,
                    "{prefix}\t{}\t{k}\t{}\t{}\t{}\t{}",
                    y.test_year, y.score.accuracy[i], y.score.evaluated, y.score.skipped, y.score.oov_missed
                )?;
            }
        }
        if r.years.is_empty() {
            continue;
        }
        let sum = |f: fn(&Score) -> usize| r.years.iter().map(|y| f(&y.score)).sum::<usize>();
        let (ev, sk, oov) = (sum(|s| s.evaluated), sum(|s| s.skipped), sum(|s| s.oov_missed));
        for (label, values) in [("mean", &r.mean), ("pooled", &r.pooled)] {
            for (k, acc) in r.ks.iter().zip(values) {
                writeln!(w, "{prefix}\t{label}\t{k}\t{acc}\t{ev}\t{sk}\t{oov}")?;
            }
        }
    }
    Ok(())
}

pub fn write_json_lines<W: Write>(reports: &[EvalReport], w: &mut W) -> std::io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_json_lines<R: BufRead>(reader: R) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(&line).map_err(|e| Error::parse_at_line(i + 1, e.to_string()))?);
    }
    Ok(reports)
}

pub fn emit_report(reports: &[EvalReport], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    match format {
        ReportFormat::Tsv => write_tsv(reports, &mut w),
        ReportFormat::JsonLines => write_json_lines(reports, &mut w),
    }
    .and_then(|()| w.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn load_json_lines(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_json_lines(BufReader::new(file))
}

/// Mean accuracies laid out as one row per regime and one column per
/// (scoring, strategy, k), one decimal place; missing cells are `-`.
pub fn summary_table(reports: &[EvalReport], ks: &[usize]) -> String {
    let mut cells: BTreeMap<(Regime, Scoring, Strategy), &EvalReport> = BTreeMap::new();
    for r in reports {
        cells.insert((r.regime, r.scoring, r.strategy), r);
    }
    let layout = [Scoring::InVocabOnly, Scoring::AllPairs]
        .into_iter()
        .flat_map(|sc| [Strategy::UpToNow, Strategy::Previous].map(move |st| (sc, st)))
        .collect::<Vec<_>>();

    let mut out = String::from("regime");
    for (sc, st) in &layout {
        for k in ks {
            out.push_str(&format!("\t{sc}/{st}@{k}"));
        }
    }
    out.push('\n');
    for regime in Regime::ALL {
        if !cells.keys().any(|(r, _, _)| *r == regime) {
            continue;
        }
        out.push_str(regime.name());
        for (sc, st) in &layout {
            for &k in ks {
                match cells.get(&(regime, *sc, *st)).and_then(|r| r.mean_at(k)) {
                    Some(v) => out.push_str(&format!("\t{v:.1}")),
                    None => out.push_str("\t-"),
                }
            }
        }
        out.push('\n');
    }
    out
}
