//! Synthetic data with planted relations: embedding sets with an exact
//! affine source → target map, and yearly corpora in which location / group
//! pairs co-occur through shared marker words.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::Corpus;
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::gold::{emit_pairs, RelationPair};
use crate::linalg::Matrix;
use crate::projection::ProjectionMatrix;
use crate::scalar::Scalar;

const LOCATION_MARKERS: [&str; 4] = ["in", "province", "region", "border"];
const GROUP_MARKERS: [&str; 4] = ["rebels", "militants", "fighters", "insurgents"];
const RELATION_MARKERS: [&str; 3] = ["attacked", "clashed", "fought"];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub dim: usize,
    pub n_pairs: usize,
    pub noise_sigma: f64,
    pub years: usize,
    /// Label of the first year.
    pub start_year: i32,
    /// Distractor tokens.
    pub vocab_background: usize,
    /// Planted sentences per active pair per year.
    pub cooccur_strength: usize,
    /// Background-only sentences per year.
    pub background_sentences: usize,
    pub seed: u64,
    /// Active pair indices for each year, first year first.
    pub schedule: Vec<Vec<usize>>,
}

impl SynthSpec {
    /// Five years, 40 pairs, dim 50, 200 background tokens: half the pairs
    /// are active from the first year, the rest start in later years.
    pub fn benchmark() -> Self {
        SynthSpec {
            dim: 50,
            n_pairs: 40,
            noise_sigma: 0.0,
            years: 5,
            start_year: 1,
            vocab_background: 200,
            cooccur_strength: 96,
            background_sentences: 1800,
            seed: 7,
            schedule: staggered_schedule(40, 5, 20),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config("synthetic dim must be at least 2".into()));
        }
        if self.schedule.len() != self.years {
            return Err(Error::Config(format!(
                "schedule covers {} years, spec has {}",
                self.schedule.len(),
                self.years
            )));
        }
        if let Some(&bad) = self.schedule.iter().flatten().find(|&&i| i >= self.n_pairs) {
            return Err(Error::Config(format!("scheduled pair {bad} out of range for {} pairs", self.n_pairs)));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn year_label(&self, index: usize) -> i32 {
        self.start_year + index as i32
    }
}

/// `initial` pairs active every year; the remaining pairs are introduced in
/// equal batches over the later years and stay active once introduced.
pub fn staggered_schedule(n_pairs: usize, years: usize, initial: usize) -> Vec<Vec<usize>> {
    let initial = initial.min(n_pairs);
    let later = n_pairs - initial;
    let per_year = if years > 1 { later.div_ceil(years - 1) } else { 0 };
    (0..years).map(|y| (0..(initial + per_year * y).min(n_pairs)).collect()).collect()
}

/// Parse `"0-19|0-24|0-29"`: one `|`-separated group per year, each a
/// comma-separated list of indices or inclusive ranges.
pub fn parse_schedule(text: &str) -> Result<Vec<Vec<usize>>> {
    let bad = |s: &str| Error::Config(format!("invalid schedule entry {s:?}"));
    text.split('|')
        .map(|year| {
            let mut active = Vec::new();
            for part in year.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                match part.split_once('-') {
                    Some((a, b)) => {
                        let a: usize = a.trim().parse().map_err(|_| bad(part))?;
                        let b: usize = b.trim().parse().map_err(|_| bad(part))?;
                        active.extend(a..=b);
                    }
                    None => active.push(part.parse().map_err(|_| bad(part))?),
                }
            }
            Ok(active)
        })
        .collect()
}

pub fn location_token(i: usize) -> String {
    format!("loc{i}")
}

pub fn group_token(i: usize) -> String {
    format!("grp{i}")
}

fn site_token(i: usize) -> String {
    format!("site{i}")
}

fn background_token(j: usize) -> String {
    format!("w{j}")
}

/// Background words come in topics of `TOPIC_SIZE` consecutive indices; a
/// background sentence draws all of its words from one topic.
const TOPIC_SIZE: usize = 10;

fn topic_word(rng: &mut ChaCha8Rng, topic: usize, vocab: usize) -> String {
    let lo = topic * TOPIC_SIZE;
    let hi = (lo + TOPIC_SIZE).min(vocab);
    background_token(rng.random_range(lo..hi))
}

/// Planted affine relation together with the model holding its vectors.
#[derive(Clone, Debug)]
pub struct LinearPairs<F> {
    pub model: EmbeddingModel<F>,
    pub pairs: Vec<RelationPair>,
    pub true_map: ProjectionMatrix<F>,
}

fn normal_vec<F: Scalar>(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<F> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            F::from_f64_lossy(z * scale)
        })
        .collect()
}

/// Random sources `src{i}`, targets `tgt{i} = apply(M, src{i}) + N(0, σ²)`
/// and `vocab_background` random distractors `bg{j}`, all in one model.
pub fn gen_linear_pairs<F: Scalar>(spec: &SynthSpec) -> Result<LinearPairs<F>> {
    if spec.dim < 2 {
        return Err(Error::Config("synthetic dim must be at least 2".into()));
    }
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coeffs = Vec::with_capacity((d + 1) * d);
    coeffs.extend(normal_vec::<F>(&mut rng, d, 1.0));
    coeffs.extend(normal_vec::<F>(&mut rng, d * d, 1.0 / (d as f64).sqrt()));
    let true_map = ProjectionMatrix::from_coeffs(Matrix::from_vec(d + 1, d, coeffs)?, 0.0)?;

    let mut model = EmbeddingModel::new(d);
    let mut pairs = Vec::with_capacity(spec.n_pairs);
    for i in 0..spec.n_pairs {
        let src = normal_vec::<F>(&mut rng, d, 1.0);
        let noise = normal_vec::<F>(&mut rng, d, spec.noise_sigma);
        let tgt: Vec<F> = true_map.apply(&src)?.into_iter().zip(noise).map(|(t, e)| t + e).collect();
        model.push(format!("src{i}"), &src, 1)?;
        model.push(format!("tgt{i}"), &tgt, 1)?;
        pairs.push(RelationPair::new(i, spec.start_year, &format!("src{i}"), &format!("tgt{i}")));
    }
    for j in 0..spec.vocab_background {
        model.push(format!("bg{j}"), &normal_vec::<F>(&mut rng, d, 1.0), 1)?;
    }
    Ok(LinearPairs { model, pairs, true_map })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiachronicCorpus {
    pub corpora: BTreeMap<i32, Corpus>,
    pub gold: Vec<RelationPair>,
}

impl DiachronicCorpus {
    pub fn corpus_path(dir: &Path, year: i32) -> PathBuf {
        dir.join(format!("corpus_{year}.txt"))
    }

    /// Write `corpus_<year>.txt` per year and `gold.tsv`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (&year, corpus) in &self.corpora {
            let path = Self::corpus_path(dir, year);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            corpus.write_to(&mut w).and_then(|()| w.flush()).map_err(|e| Error::io(&path, e))?;
        }
        emit_pairs(&self.gold, dir.join("gold.tsv"))
    }
}

/// Yearly corpora plus the matching gold pairs.
///
/// For each active pair `i` a year gets `cooccur_strength` planted sentences
/// cycling through four templates: location and group together around
/// relation markers, the location alone with location markers, the pair
/// again, and the group alone with group markers. Every template carries the
/// pair's `site{i}` word, and every token of a pair first occurs in the first
/// year the pair is scheduled.
pub fn gen_diachronic_corpus(spec: &SynthSpec) -> Result<DiachronicCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_c0de);
    let mut corpora = BTreeMap::new();
    let mut gold = Vec::new();
    let topics = spec.vocab_background.div_ceil(TOPIC_SIZE).max(1);
    let pick = |rng: &mut ChaCha8Rng, words: &[&str]| words[rng.random_range(0..words.len())].to_owned();

    for (y, active) in spec.schedule.iter().enumerate() {
        let year = spec.year_label(y);
        let mut sentences: Vec<Vec<String>> = Vec::new();
        for &i in active {
            gold.push(RelationPair::new(gold.len(), year, &location_token(i), &group_token(i)));
            for s in 0..spec.cooccur_strength {
                let mut sentence = match s % 4 {
                    0 | 2 => vec![
                        location_token(i),
                        pick(&mut rng, &LOCATION_MARKERS),
                        site_token(i),
                        pick(&mut rng, &RELATION_MARKERS),
                        group_token(i),
                        pick(&mut rng, &GROUP_MARKERS),
                    ],
                    1 => vec![
                        pick(&mut rng, &LOCATION_MARKERS),
                        location_token(i),
                        site_token(i),
                        pick(&mut rng, &LOCATION_MARKERS),
                    ],
                    _ => vec![
                        pick(&mut rng, &GROUP_MARKERS),
                        group_token(i),
                        site_token(i),
                        pick(&mut rng, &GROUP_MARKERS),
                    ],
                };
                if spec.vocab_background > 0 {
                    for _ in 0..2 {
                        let at = rng.random_range(0..=sentence.len());
                        sentence.insert(at, topic_word(&mut rng, i % topics, spec.vocab_background));
                    }
                }
                sentences.push(sentence);
            }
        }
        if spec.vocab_background > 0 {
            for _ in 0..spec.background_sentences {
                let len = rng.random_range(6..=10);
                let topic = rng.random_range(0..topics);
                sentences.push((0..len).map(|_| topic_word(&mut rng, topic, spec.vocab_background)).collect());
            }
        }
        sentences.shuffle(&mut rng);
        corpora.insert(year, Corpus::from_sentences(sentences));
    }
    Ok(DiachronicCorpus { corpora, gold })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staggered_schedule_grows() {
        let s = staggered_schedule(40, 5, 20);
        let sizes: Vec<usize> = s.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![20, 25, 30, 35, 40]);
    }

    #[test]
    fn schedule_text() {
        let s = parse_schedule("0-2|1,3").unwrap();
        assert_eq!(s, vec![vec![0, 1, 2], vec![1, 3]]);
        assert!(parse_schedule("a-b").is_err());
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SynthSpec::benchmark();
        spec.schedule[0].push(40);
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::benchmark();
        spec.dim = 1;
        assert!(gen_diachronic_corpus(&spec).is_err());
    }

    #[test]
    fn gold_rows_match_activations() {
        let spec = SynthSpec::benchmark();
        let data = gen_diachronic_corpus(&spec).unwrap();
        let activations: usize = spec.schedule.iter().map(Vec::len).sum();
        assert_eq!(data.gold.len(), activations);
    }

    #[test]
    fn late_pairs_absent_from_early_years() {
        let mut spec = SynthSpec::benchmark();
        spec.years = 5;
        spec.n_pairs = 4;
        spec.schedule = vec![vec![0], vec![0], vec![0, 3], vec![3], vec![3]];
        let data = gen_diachronic_corpus(&spec).unwrap();
        let has = |year: i32, token: &str| data.corpora[&year].counts().get(token) > 0;
        assert!(!has(1, "grp3") && !has(2, "grp3"));
        assert!(has(3, "grp3") && has(4, "grp3") && has(5, "grp3"));
    }
}
