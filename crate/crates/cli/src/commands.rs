use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use relshift::cbow::{load_snapshot, save_snapshot, train_from_scratch};
use relshift::eval::{emit_report, run_plan, summary_table, EvalReport, Regime, ReportFormat};
use relshift::gold::{pairs_up_to, parse_pairs};
use relshift::pipeline::year_seed;
use relshift::projection::{assemble_design, fit_with, loo_cross_validate, FitOptions, LooOptions};
use relshift::stats::paired_t_test;
use relshift::synth::{gen_diachronic_corpus, gen_linear_pairs};
use relshift::w2v::{load_model, save_model, Format};
use relshift::{Corpus, EmbeddingModel, RelationPair};

use crate::config::{ConfigError, RunConfig};

/// `<output>.config`, or `<output>/run.config` for directory outputs.
fn write_resolved(config: &RunConfig, output: &Path, is_dir: bool) -> Result<PathBuf> {
    let path = if is_dir {
        output.join("run.config")
    } else {
        let mut name = output.as_os_str().to_owned();
        name.push(".config");
        PathBuf::from(name)
    };
    fs::write(&path, config.render()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn read_corpus(config: &RunConfig) -> Result<Corpus> {
    if config.corpus.is_empty() {
        return Err(ConfigError::Missing("corpus").into());
    }
    let parts =
        config.corpus.iter().map(|p| Corpus::from_path(p, config.lowercase)).collect::<relshift::Result<Vec<_>>>()?;
    Ok(Corpus::concat(&parts))
}

fn model_path(stem: &Path, format: Format) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(".");
    name.push(format.extension());
    PathBuf::from(name)
}

fn read_gold(config: &RunConfig) -> Result<Vec<RelationPair>> {
    let gold = parse_pairs(RunConfig::require(&config.gold, "gold")?)?;
    Ok(match config.year {
        Some(year) => pairs_up_to(&gold, year),
        None => gold,
    })
}

pub fn train(config: &RunConfig) -> Result<()> {
    let output = RunConfig::require(&config.output, "output")?;
    let corpus = read_corpus(config)?;
    let mut train = config.train.clone();
    if let Some(year) = config.year {
        train.seed = year_seed(&train, config.seed_policy, year);
    }
    let (state, stats) = train_from_scratch::<f32>(&corpus, train)?;
    ensure_parent(output)?;
    let paths = save_snapshot(&state, output, config.format)?;
    write_resolved(config, output, false)?;
    println!("vocabulary: {} tokens, dim {}", state.model.len(), state.model.dim());
    for (i, loss) in stats.epoch_losses.iter().enumerate() {
        println!("epoch {}: loss {loss:.4}", i + 1);
    }
    println!("wrote {}", paths.model.display());
    Ok(())
}

pub fn update(config: &RunConfig) -> Result<()> {
    let snapshot = RunConfig::require(&config.snapshot, "snapshot")?;
    let output = RunConfig::require(&config.output, "output")?;
    let corpus = read_corpus(config)?;
    let mut state = load_snapshot::<f32>(snapshot, config.format, config.train.clone())
        .with_context(|| format!("loading snapshot {}", snapshot.display()))?;
    let before = state.model.len();
    let report = state.incremental_update(&corpus);
    ensure_parent(output)?;
    let paths = save_snapshot(&state, output, config.format)?;
    write_resolved(config, output, false)?;
    println!("vocabulary: {before} -> {} tokens ({} added)", state.model.len(), report.added.len());
    if let Some(loss) = report.stats.epoch_losses.last() {
        println!("final epoch loss {loss:.4}");
    }
    println!("wrote {}", paths.model.display());
    Ok(())
}

pub fn project(config: &RunConfig) -> Result<()> {
    let snapshot = RunConfig::require(&config.snapshot, "snapshot")?;
    let output = RunConfig::require(&config.output, "output")?;
    let model: EmbeddingModel<f64> = load_model(model_path(snapshot, config.format), config.format)?;
    let pairs = read_gold(config)?;
    let design = assemble_design(&pairs, &model, config.direction)?;
    for (pair, reason) in &design.skipped {
        println!("skipped\t{}\t{}\t{}\t{reason}", pair.year, pair.source, pair.target);
    }
    println!(
        "fitting {} on {} pairs ({} skipped), lambda {}",
        config.direction.name(),
        design.len(),
        design.skipped.len(),
        config.lambda
    );
    let proj = fit_with(&design, FitOptions { lambda: config.lambda, intercept: config.intercept })?;
    ensure_parent(output)?;
    proj.save(output)?;
    write_resolved(config, output, false)?;
    println!("wrote {}", output.display());
    Ok(())
}

/// Year snapshots under `dir`, keyed by year: every `<year>.<ext>` file.
fn year_files(dir: &Path, format: Format) -> Result<BTreeMap<i32, PathBuf>> {
    let suffix = format!(".{}", format.extension());
    let mut found = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(year) = name.strip_suffix(&suffix).and_then(|y| y.parse::<i32>().ok()) {
            found.insert(year, path);
        }
    }
    Ok(found)
}

/// Snapshot files per regime: `<dir>/<regime>/<year>.<ext>`, or
/// `<dir>/<year>.<ext>` for a single configured regime.
fn discover(config: &RunConfig, dir: &Path) -> Result<Vec<(Regime, BTreeMap<i32, PathBuf>)>> {
    let nested: Vec<Regime> = Regime::ALL.into_iter().filter(|r| dir.join(r.name()).is_dir()).collect();
    if nested.is_empty() {
        let regime = match config.regimes.as_slice() {
            [one] => *one,
            _ => bail!(ConfigError::Value {
                key: "regime".into(),
                value: if config.regimes.is_empty() { "auto".into() } else { format!("{:?}", config.regimes) },
                reason: format!(
                    "{} has no regime subdirectories; name exactly one regime for a flat layout",
                    dir.display()
                ),
            }),
        };
        return Ok(vec![(regime, year_files(dir, config.format)?)]);
    }
    let wanted = if config.regimes.is_empty() { nested } else { config.regimes.clone() };
    wanted
        .into_iter()
        .map(|r| {
            let sub = dir.join(r.name());
            if !sub.is_dir() {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("no snapshots for {r} under {}", dir.display()),
                )
                .into());
            }
            Ok((r, year_files(&sub, config.format)?))
        })
        .collect()
}

pub fn evaluate(config: &RunConfig) -> Result<()> {
    let dir = RunConfig::require(&config.snapshot_dir, "snapshot_dir")?;
    let output = RunConfig::require(&config.output, "output")?;
    let gold = parse_pairs(RunConfig::require(&config.gold, "gold")?)?;
    let mut reports = Vec::new();
    for (regime, files) in discover(config, dir)? {
        let years: Vec<i32> = config.years.clone().unwrap_or_else(|| files.keys().copied().collect());
        let mut snaps: BTreeMap<i32, EmbeddingModel<f32>> = BTreeMap::new();
        for year in &years {
            let path = files.get(year).ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("no {regime} snapshot for {year} in {}", dir.display()),
                )
            })?;
            snaps.insert(*year, load_model(path, config.format)?);
        }
        for &strategy in &config.strategies {
            for &scoring in &config.scorings {
                let report = run_plan(&config.plan(years.clone(), regime, strategy, scoring), &snaps, &gold)?;
                for f in &report.failed {
                    eprintln!("{regime}/{strategy}: step {} -> {} failed: {}", f.train_year, f.test_year, f.reason);
                }
                reports.push(report);
            }
        }
    }
    ensure_parent(output)?;
    emit_report(&reports, output, config.report_format)?;
    write_resolved(config, output, false)?;
    print!("{}", summary_table(&reports, &config.ks));
    print_significance(&reports);
    Ok(())
}

/// Paired t-tests of incr_dynamic against every other regime evaluated
/// under the same strategy and scoring.
fn print_significance(reports: &[EvalReport]) {
    for dynamic in reports.iter().filter(|r| r.regime == Regime::IncrDynamic) {
        for other in reports.iter().filter(|r| {
            r.regime != Regime::IncrDynamic && r.strategy == dynamic.strategy && r.scoring == dynamic.scoring
        }) {
            for (i, k) in dynamic.ks.iter().enumerate() {
                if let Ok(t) = paired_t_test(&dynamic.series(i), &other.series(i)) {
                    println!(
                        "t-test incr_dynamic vs {} {}/{}@{k}: t = {:.3}, p = {:.4}",
                        other.regime,
                        dynamic.scoring,
                        dynamic.strategy,
                        t.statistic(),
                        t.p_value()
                    );
                }
            }
        }
    }
}

pub fn evaluate_loo(config: &RunConfig) -> Result<()> {
    let snapshot = RunConfig::require(&config.snapshot, "snapshot")?;
    let output = RunConfig::require(&config.output, "output")?;
    let model: EmbeddingModel<f64> = load_model(model_path(snapshot, config.format), config.format)?;
    let pairs = read_gold(config)?;
    let opts = LooOptions {
        fit: FitOptions { lambda: config.lambda, intercept: config.intercept },
        ks: config.ks.clone(),
        direction: config.direction,
        exclude_source: config.exclude_source,
        normalize: false,
    };
    let report = loo_cross_validate(&pairs, &model, &opts)?;
    let mut text = String::from("k\taccuracy\thits\tfolds\tfailed\tskipped\n");
    for (i, k) in report.ks.iter().enumerate() {
        text.push_str(&format!(
            "{k}\t{}\t{}\t{}\t{}\t{}\n",
            100.0 * report.accuracy[i],
            report.hits[i],
            report.folds,
            report.failed,
            report.skipped
        ));
    }
    ensure_parent(output)?;
    fs::write(output, &text).with_context(|| format!("writing {}", output.display()))?;
    write_resolved(config, output, false)?;
    for (i, k) in report.ks.iter().enumerate() {
        println!("LOO accuracy@{k}: {:.1}", 100.0 * report.accuracy[i]);
    }
    Ok(())
}

pub fn synth(config: &RunConfig, linear: bool) -> Result<()> {
    let output = RunConfig::require(&config.output, "output")?;
    let spec = config.synth_spec();
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    if linear {
        let data = gen_linear_pairs::<f64>(&spec)?;
        save_model(&data.model, model_path(&output.join("model"), config.format), config.format)?;
        let mut w = fs::File::create(output.join("pairs.tsv"))?;
        relshift::gold::write_pairs(&data.pairs, &mut w)?;
        w.flush()?;
        data.true_map.save(output.join("true_map.txt"))?;
        println!("wrote {} pairs and {} tokens to {}", data.pairs.len(), data.model.len(), output.display());
    } else {
        let data = gen_diachronic_corpus(&spec)?;
        data.write_to_dir(output)?;
        println!(
            "wrote {} yearly corpora and {} gold rows to {}",
            data.corpora.len(),
            data.gold.len(),
            output.display()
        );
    }
    write_resolved(config, output, true)?;
    Ok(())
}

/// Output format names accepted on the command line.
pub fn parse_report_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: relshift::Error| e.to_string())
}
