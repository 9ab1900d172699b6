//! Typed relation-pair gold data: yearly location–group pairs and pairs
//! converted from analogy test sets.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One gold instance of the relation. `id` is the instance's position in
/// its source file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationPair {
    pub id: usize,
    pub year: i32,
    pub source: String,
    pub target: String,
}

impl RelationPair {
    pub fn new(id: usize, year: i32, source: &str, target: &str) -> Self {
        RelationPair { id, year, source: normalize_entity(source), target: normalize_entity(target) }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.source, &self.target)
    }
}

/// Lowercase and join whitespace-separated words with `::`. Idempotent.
pub fn normalize_entity(name: &str) -> String {
    name.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join("::")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkipReason {
    SourceOov,
    TargetOov,
    BothOov,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::SourceOov => "source-OOV",
            SkipReason::TargetOov => "target-OOV",
            SkipReason::BothOov => "both-OOV",
        })
    }
}

/// Pairs kept against a vocabulary, plus the ones skipped and why.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSlice {
    pub pairs: Vec<RelationPair>,
    pub skipped: Vec<(RelationPair, SkipReason)>,
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<RelationPair>> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse_at_line(
                lineno,
                format!("expected year<TAB>source<TAB>target, found {} fields", fields.len()),
            ));
        }
        let year: i32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse_at_line(lineno, format!("invalid year {:?}", fields[0])))?;
        let pair = RelationPair::new(pairs.len(), year, fields[1], fields[2]);
        if pair.source.is_empty() || pair.target.is_empty() {
            return Err(Error::parse_at_line(lineno, "empty entity name"));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Parse a gold TSV (`year<TAB>source<TAB>target`, `#` comments).
/// Duplicate triples are kept as distinct instances.
pub fn parse_pairs(path: impl AsRef<Path>) -> Result<Vec<RelationPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(BufReader::new(file))
}

pub fn write_pairs<W: Write>(pairs: &[RelationPair], w: &mut W) -> std::io::Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.year, p.source, p.target)?;
    }
    Ok(())
}

pub fn emit_pairs(pairs: &[RelationPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_pairs(pairs, &mut w).and_then(|()| w.flush()).map_err(|e| Error::io(path, e))
}

/// Reject pairs whose year falls outside `span`.
pub fn check_span(pairs: &[RelationPair], span: RangeInclusive<i32>) -> Result<()> {
    match pairs.iter().find(|p| !span.contains(&p.year)) {
        Some(p) => Err(Error::Domain(format!(
            "pair {} ({} -> {}) has year {} outside {}..={}",
            p.id,
            p.source,
            p.target,
            p.year,
            span.start(),
            span.end()
        ))),
        None => Ok(()),
    }
}

pub fn pairs_up_to(pairs: &[RelationPair], year: i32) -> Vec<RelationPair> {
    pairs.iter().filter(|p| p.year <= year).cloned().collect()
}

pub fn pairs_in(pairs: &[RelationPair], year: i32) -> Vec<RelationPair> {
    pairs.iter().filter(|p| p.year == year).cloned().collect()
}

/// Split test pairs into (new, ongoing): a pair is ongoing when its
/// (source, target) combination occurs anywhere in `history`.
pub fn split_new_vs_ongoing(test: &[RelationPair], history: &[RelationPair]) -> (Vec<RelationPair>, Vec<RelationPair>) {
    let seen: HashSet<(&str, &str)> = history.iter().map(RelationPair::key).collect();
    test.iter().cloned().partition(|p| !seen.contains(&p.key()))
}

pub fn filter_by_vocab<F: Scalar>(pairs: &[RelationPair], model: &EmbeddingModel<F>) -> PairSlice {
    let mut slice = PairSlice::default();
    for p in pairs {
        match (model.contains(&p.source), model.contains(&p.target)) {
            (true, true) => slice.pairs.push(p.clone()),
            (false, true) => slice.skipped.push((p.clone(), SkipReason::SourceOov)),
            (true, false) => slice.skipped.push((p.clone(), SkipReason::TargetOov)),
            (false, false) => slice.skipped.push((p.clone(), SkipReason::BothOov)),
        }
    }
    slice
}

/// Unique (source, target) combinations, sources and targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub unique_pairs: usize,
    pub unique_sources: usize,
    pub unique_targets: usize,
}

pub fn count_unique(pairs: &[RelationPair]) -> PairCounts {
    let combos: BTreeSet<(&str, &str)> = pairs.iter().map(RelationPair::key).collect();
    let sources: BTreeSet<&str> = pairs.iter().map(|p| p.source.as_str()).collect();
    let targets: BTreeSet<&str> = pairs.iter().map(|p| p.target.as_str()).collect();
    PairCounts { unique_pairs: combos.len(), unique_sources: sources.len(), unique_targets: targets.len() }
}

/// Semantic sections of the Google analogy set whose members are all nouns.
pub const NOUN_SECTIONS: [&str; 5] =
    ["capital-common-countries", "capital-world", "city-in-state", "currency", "family"];

/// Convert analogy quadruples (`a b c d` under `: section` headers) from the
/// requested sections into unique `(a, b)` / `(c, d)` pairs with year 0.
/// With `noun_only`, requested sections outside [`NOUN_SECTIONS`] are ignored.
pub fn analogies_to_pairs<R: BufRead>(reader: R, sections: &[&str], noun_only: bool) -> Result<Vec<RelationPair>> {
    let wanted: HashSet<&str> = sections.iter().copied().filter(|s| !noun_only || NOUN_SECTIONS.contains(s)).collect();
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    let mut active = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix(':') {
            active = wanted.contains(name.trim());
            continue;
        }
        if !active {
            continue;
        }
        let words: Vec<&str> = trimmed.split_whitespace().collect();
        if words.len() != 4 {
            return Err(Error::parse_at_line(i + 1, format!("expected 4 tokens, found {}", words.len())));
        }
        for (a, b) in [(words[0], words[1]), (words[2], words[3])] {
            let pair = RelationPair::new(pairs.len(), 0, a, b);
            if seen.insert((pair.source.clone(), pair.target.clone())) {
                pairs.push(pair);
            }
        }
    }
    Ok(pairs)
}
