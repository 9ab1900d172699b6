//! CBOW with negative sampling, trainable from scratch or incrementally on
//! successive corpora with frequency-thresholded vocabulary expansion.
//!
//! Incremental sessions continue from the previous weights. No rotation or
//! alignment is ever applied between sessions, so every snapshot shares the
//! coordinate system of the one before it.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{axpy, dot, Scalar};
use crate::w2v::{self, Format};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    /// Symmetric context half-width.
    pub window: usize,
    /// Negative samples per target.
    pub negative: usize,
    pub epochs: usize,
    /// Frequency floor for the initial from-scratch vocabulary.
    pub min_count: u64,
    /// Frequency floor for words added in incremental sessions.
    /// `None` freezes the vocabulary.
    pub expand_threshold: Option<u64>,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub unigram_power: f64,
    pub table_size: usize,
    /// 1 runs the deterministic single-worker loop; more runs lock-free
    /// parallel workers over corpus shards.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            window: 5,
            negative: 10,
            epochs: 5,
            min_count: 100,
            expand_threshold: Some(15),
            lr_initial: 0.025,
            lr_min: 1e-4,
            seed: 1,
            unigram_power: 0.75,
            table_size: 10_000_000,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.negative == 0 {
            return fail("negative must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_initial) {
            return fail("learning rates must satisfy 0 < lr_min < lr_initial");
        }
        if self.table_size == 0 {
            return fail("table_size must be positive");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        Ok(())
    }
}

/// Vocabulary produced by [`build_vocab`]: tokens by descending frequency
/// (ties by first occurrence) with full corpus counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pub tokens: Vec<String>,
    pub freqs: Vec<u64>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn build_vocab(corpus: &Corpus, min_count: u64) -> Vocab {
    let (tokens, freqs) = corpus.counts().ranked_at_least(min_count.max(1)).into_iter().unzip();
    Vocab { tokens, freqs }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(token: &str) -> u64 {
    token.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Initial input vector for `token`: uniform in `[-0.5/dim, 0.5/dim]`,
/// keyed by the token and the seed. The draw does not depend on the
/// token's vocabulary position, so a word starts from the same point in
/// every model trained with the same seed.
pub fn init_vector<F: Scalar>(token: &str, seed: u64, dim: usize) -> Vec<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ fnv1a(token)));
    let bound = 0.5 / dim as f64;
    (0..dim).map(|_| F::from_f64_lossy(rng.random_range(-bound..=bound))).collect()
}

/// Unigram table: token indices repeated proportionally to `freq^power`.
pub fn build_neg_table(freqs: &[u64], power: f64, size: usize) -> Vec<u32> {
    if freqs.is_empty() {
        return Vec::new();
    }
    let weights: Vec<f64> = freqs.iter().map(|&f| (f as f64).powf(power)).collect();
    let total: f64 = weights.iter().sum();
    let weights = if total > 0.0 { weights } else { vec![1.0; freqs.len()] };
    let total: f64 = weights.iter().sum();

    let mut table = Vec::with_capacity(size);
    let mut cumulative = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cumulative += w;
        let end = if i + 1 == weights.len() { size } else { ((cumulative / total) * size as f64).round() as usize };
        while table.len() < end {
            table.push(i as u32);
        }
    }
    table
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(x)`, stable for large `|x|`.
fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Row storage the update step writes through.
trait Rows<F> {
    fn read(&self, row: usize, out: &mut [F]);
    fn add(&mut self, row: usize, alpha: F, x: &[F]);
}

impl<F: Scalar> Rows<F> for Matrix<F> {
    fn read(&self, row: usize, out: &mut [F]) {
        out.copy_from_slice(self.row(row));
    }

    fn add(&mut self, row: usize, alpha: F, x: &[F]) {
        axpy(alpha, x, self.row_mut(row));
    }
}

/// Shared view used by parallel workers. Writes are unsynchronized
/// read-modify-write sequences: concurrent updates to the same component
/// may be lost (last write wins).
#[derive(Clone, Copy)]
struct AtomicRows<'a, F: Scalar> {
    cols: usize,
    data: &'a [F::Atomic],
}

impl<F: Scalar> Rows<F> for AtomicRows<'_, F> {
    fn read(&self, row: usize, out: &mut [F]) {
        let cells = &self.data[row * self.cols..(row + 1) * self.cols];
        for (o, c) in out.iter_mut().zip(cells) {
            *o = F::load(c);
        }
    }

    fn add(&mut self, row: usize, alpha: F, x: &[F]) {
        let cells = &self.data[row * self.cols..(row + 1) * self.cols];
        for (c, &xi) in cells.iter().zip(x) {
            F::store(c, F::load(c) + alpha * xi);
        }
    }
}

struct Scratch<F> {
    hidden: Vec<F>,
    grad: Vec<F>,
    row: Vec<F>,
}

impl<F: Scalar> Scratch<F> {
    fn new(dim: usize) -> Self {
        Scratch { hidden: vec![F::zero(); dim], grad: vec![F::zero(); dim], row: vec![F::zero(); dim] }
    }
}

/// One CBOW negative-sampling update. Negatives equal to `center` are
/// skipped. Returns the loss evaluated at the pre-update weights (exact when
/// the sampled indices are distinct).
fn cbow_update<F: Scalar>(
    input: &mut impl Rows<F>,
    output: &mut impl Rows<F>,
    context: &[usize],
    center: usize,
    negatives: impl IntoIterator<Item = usize>,
    lr: F,
    s: &mut Scratch<F>,
) -> f64 {
    s.hidden.iter_mut().for_each(|v| *v = F::zero());
    for &c in context {
        input.read(c, &mut s.row);
        axpy(F::one(), &s.row, &mut s.hidden);
    }
    let inv = F::one() / F::from_count(context.len());
    s.hidden.iter_mut().for_each(|v| *v *= inv);
    s.grad.iter_mut().for_each(|v| *v = F::zero());

    let mut loss = 0.0;
    let targets =
        std::iter::once((center, true)).chain(negatives.into_iter().filter(|&n| n != center).map(|n| (n, false)));
    for (target, positive) in targets {
        output.read(target, &mut s.row);
        let score = dot(&s.hidden, &s.row).as_f64();
        let (label, margin) = if positive { (1.0, score) } else { (0.0, -score) };
        loss += neg_log_sigmoid(margin);
        let g = lr * F::from_f64_lossy(label - sigmoid(score));
        axpy(g, &s.row, &mut s.grad);
        output.add(target, g, &s.hidden);
    }

    for &c in context {
        input.add(c, inv, &s.grad);
    }
    loss
}

/// Per-session training summary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionStats {
    /// Mean per-update loss for each epoch.
    pub epoch_losses: Vec<f64>,
    /// In-vocabulary tokens processed over all epochs.
    pub tokens: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport {
    pub added: Vec<String>,
    pub stats: SessionStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<F> {
    pub model: EmbeddingModel<F>,
    output: Matrix<F>,
    neg_table: Vec<u32>,
    pub config: TrainConfig,
    pub tokens_seen: u64,
    pub sessions: u64,
}

/// Fresh state over `vocab`: input rows from [`init_vector`], zero output
/// rows and a unigram table.
pub fn init_state<F: Scalar>(vocab: &Vocab, config: TrainConfig) -> Result<TrainState<F>> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::Domain("cannot initialize training on an empty vocabulary".into()));
    }
    let mut model = EmbeddingModel::new(config.dim);
    for (token, &freq) in vocab.tokens.iter().zip(&vocab.freqs) {
        model.push(token.clone(), &init_vector::<F>(token, config.seed, config.dim), freq)?;
    }
    let output = Matrix::zeros(model.len(), config.dim);
    let neg_table = build_neg_table(model.freqs(), config.unigram_power, config.table_size);
    Ok(TrainState { model, output, neg_table, config, tokens_seen: 0, sessions: 0 })
}

impl<F: Scalar> TrainState<F> {
    /// Resume from saved input and output weights.
    pub fn from_parts(model: EmbeddingModel<F>, output: Matrix<F>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if output.rows() != model.len() || output.cols() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.len() * model.dim(),
                actual: output.rows() * output.cols(),
            });
        }
        let config = TrainConfig { dim: model.dim(), ..config };
        let neg_table = build_neg_table(model.freqs(), config.unigram_power, config.table_size);
        Ok(TrainState { model, output, neg_table, config, tokens_seen: 0, sessions: 0 })
    }

    pub fn output_weights(&self) -> &Matrix<F> {
        &self.output
    }

    pub fn neg_table(&self) -> &[u32] {
        &self.neg_table
    }

    pub fn snapshot(&self) -> EmbeddingModel<F> {
        self.model.clone()
    }

    /// CBOW update with negatives drawn from the unigram table.
    pub fn cbow_step(&mut self, context: &[usize], center: usize, lr: F, rng: &mut impl Rng) -> f64 {
        let negatives: Vec<usize> = (0..self.config.negative)
            .map(|_| self.neg_table[rng.random_range(0..self.neg_table.len())] as usize)
            .collect();
        self.cbow_step_with(context, center, &negatives, lr)
    }

    /// CBOW update with explicitly supplied negative indices.
    pub fn cbow_step_with(&mut self, context: &[usize], center: usize, negatives: &[usize], lr: F) -> f64 {
        let mut scratch = Scratch::new(self.model.dim());
        cbow_update(
            self.model.vectors_mut(),
            &mut self.output,
            context,
            center,
            negatives.iter().copied(),
            lr,
            &mut scratch,
        )
    }

    /// Negative-sampling loss of one example, without updating anything.
    pub fn cbow_loss(&self, context: &[usize], center: usize, negatives: &[usize]) -> f64 {
        let dim = self.model.dim();
        let mut hidden = vec![0.0; dim];
        for &c in context {
            for (h, v) in hidden.iter_mut().zip(self.model.vector(c)) {
                *h += v.as_f64();
            }
        }
        hidden.iter_mut().for_each(|h| *h /= context.len() as f64);
        let score = |t: usize| -> f64 { hidden.iter().zip(self.output.row(t)).map(|(h, o)| h * o.as_f64()).sum() };
        neg_log_sigmoid(score(center))
            + negatives.iter().filter(|&&n| n != center).map(|&n| neg_log_sigmoid(-score(n))).sum::<f64>()
    }

    #[cfg(test)]
    pub(crate) fn output_mut(&mut self) -> &mut Matrix<F> {
        &mut self.output
    }

    fn index_corpus(&self, corpus: &Corpus) -> Vec<Vec<usize>> {
        corpus
            .sentences()
            .iter()
            .map(|s| s.iter().filter_map(|t| self.model.lookup(t)).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect()
    }

    fn learning_rate(&self, processed: u64, budget: u64) -> F {
        let (hi, lo) = (self.config.lr_initial, self.config.lr_min);
        let frac = processed as f64 / budget.max(1) as f64;
        F::from_f64_lossy((hi - (hi - lo) * frac).max(lo))
    }

    /// Run `config.epochs` passes over `corpus`. Out-of-vocabulary tokens are
    /// dropped before windowing; windows never cross sentence boundaries.
    /// The learning rate restarts at `lr_initial` and decays linearly to
    /// `lr_min` over this session's token budget.
    pub fn train_session(&mut self, corpus: &Corpus) -> SessionStats {
        let sentences = self.index_corpus(corpus);
        let per_epoch: u64 = sentences.iter().map(|s| s.len() as u64).sum();
        if per_epoch == 0 || self.neg_table.is_empty() {
            return SessionStats::default();
        }
        let budget = per_epoch * self.config.epochs as u64;
        let session_seed = splitmix(self.config.seed ^ splitmix(self.sessions.wrapping_add(1)));
        let epoch_losses = if self.config.workers <= 1 {
            self.train_serial(&sentences, budget, session_seed)
        } else {
            self.train_parallel(&sentences, budget, session_seed)
        };
        self.tokens_seen += budget;
        self.sessions += 1;
        SessionStats { epoch_losses, tokens: budget }
    }

    fn train_serial(&mut self, sentences: &[Vec<usize>], budget: u64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (window, negative) = (self.config.window, self.config.negative);
        let mut scratch = Scratch::new(self.model.dim());
        let mut context = Vec::with_capacity(2 * window);
        let mut negatives = Vec::with_capacity(negative);
        let mut processed = 0u64;
        let mut losses = Vec::with_capacity(self.config.epochs);

        for _ in 0..self.config.epochs {
            let (mut total, mut steps) = (0.0, 0usize);
            for sentence in sentences {
                for pos in 0..sentence.len() {
                    let lr = self.learning_rate(processed, budget);
                    processed += 1;
                    fill_context(sentence, pos, window, &mut context);
                    if context.is_empty() {
                        continue;
                    }
                    negatives.clear();
                    for _ in 0..negative {
                        let slot = rng.random_range(0..self.neg_table.len());
                        negatives.push(self.neg_table[slot] as usize);
                    }
                    total += cbow_update(
                        self.model.vectors_mut(),
                        &mut self.output,
                        &context,
                        sentence[pos],
                        negatives.iter().copied(),
                        lr,
                        &mut scratch,
                    );
                    steps += 1;
                }
            }
            losses.push(if steps == 0 { 0.0 } else { total / steps as f64 });
        }
        losses
    }

    fn train_parallel(&mut self, sentences: &[Vec<usize>], budget: u64, seed: u64) -> Vec<f64> {
        let dim = self.model.dim();
        let input: Vec<F::Atomic> = self.model.vectors().as_slice().iter().map(|&v| v.atomic()).collect();
        let output: Vec<F::Atomic> = self.output.as_slice().iter().map(|&v| v.atomic()).collect();
        let processed = AtomicU64::new(0);
        let workers = self.config.workers;
        let shard = sentences.len().div_ceil(workers).max(1);
        let mut losses = Vec::with_capacity(self.config.epochs);

        for epoch in 0..self.config.epochs {
            let parts: Vec<(f64, usize)> = sentences
                .par_chunks(shard)
                .enumerate()
                .map(|(w, chunk)| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(((epoch * workers + w) as u64) << 1)));
                    let mut inp = AtomicRows::<F> { cols: dim, data: &input };
                    let mut out = AtomicRows::<F> { cols: dim, data: &output };
                    let mut scratch = Scratch::new(dim);
                    let mut context = Vec::new();
                    let (mut total, mut steps) = (0.0, 0usize);
                    for sentence in chunk {
                        for pos in 0..sentence.len() {
                            let done = processed.fetch_add(1, Ordering::Relaxed);
                            let lr = self.learning_rate(done, budget);
                            fill_context(sentence, pos, self.config.window, &mut context);
                            if context.is_empty() {
                                continue;
                            }
                            let table = &self.neg_table;
                            let negatives: Vec<usize> = (0..self.config.negative)
                                .map(|_| table[rng.random_range(0..table.len())] as usize)
                                .collect();
                            total +=
                                cbow_update(&mut inp, &mut out, &context, sentence[pos], negatives, lr, &mut scratch);
                            steps += 1;
                        }
                    }
                    (total, steps)
                })
                .collect();
            let (total, steps) = parts.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            losses.push(if steps == 0 { 0.0 } else { total / steps as f64 });
        }

        let back = |cells: &[F::Atomic], m: &mut Matrix<F>| {
            for (v, c) in m.as_mut_slice().iter_mut().zip(cells) {
                *v = F::load(c);
            }
        };
        back(&input, self.model.vectors_mut());
        back(&output, &mut self.output);
        losses
    }

    /// Add new-corpus counts to known words and append unseen words whose
    /// new-corpus count reaches `expand_threshold`. Existing rows and indices
    /// are untouched; the unigram table is rebuilt from cumulative counts.
    pub fn expand_vocab(&mut self, corpus: &Corpus) -> Vec<String> {
        if corpus.is_empty() {
            return Vec::new();
        }
        let counts = corpus.counts();
        for token in counts.tokens() {
            if let Some(idx) = self.model.lookup(token) {
                let f = self.model.freq(idx);
                self.model.set_freq(idx, f + counts.get(token));
            }
        }
        let mut added = Vec::new();
        if let Some(threshold) = self.config.expand_threshold {
            let dim = self.model.dim();
            for (token, count) in counts.ranked_at_least(threshold.max(1)) {
                if self.model.contains(&token) {
                    continue;
                }
                let vector = init_vector::<F>(&token, self.config.seed, dim);
                self.model.push(token.clone(), &vector, count).expect("corpus tokens are whitespace-free and unique");
                self.output.push_row(&vec![F::zero(); dim]).expect("row width matches");
                added.push(token);
            }
        }
        self.neg_table = build_neg_table(self.model.freqs(), self.config.unigram_power, self.config.table_size);
        added
    }

    /// Expand the vocabulary, then train a session on `corpus`.
    pub fn incremental_update(&mut self, corpus: &Corpus) -> UpdateReport {
        let added = self.expand_vocab(corpus);
        let stats = self.train_session(corpus);
        UpdateReport { added, stats }
    }
}

fn fill_context(sentence: &[usize], pos: usize, window: usize, out: &mut Vec<usize>) {
    out.clear();
    let lo = pos.saturating_sub(window);
    let hi = (pos + window + 1).min(sentence.len());
    out.extend((lo..hi).filter(|&i| i != pos).map(|i| sentence[i]));
}

/// From-scratch training: vocabulary at `config.min_count`, fresh state,
/// one session.
pub fn train_from_scratch<F: Scalar>(corpus: &Corpus, config: TrainConfig) -> Result<(TrainState<F>, SessionStats)> {
    let vocab = build_vocab(corpus, config.min_count);
    let mut state = init_state(&vocab, config)?;
    let stats = state.train_session(corpus);
    Ok((state, stats))
}

/// File set written for one snapshot: `<stem>.<bin|txt>` input vectors,
/// `<stem>.freq` counts, `<stem>.out.<bin|txt>` output weights and
/// `<stem>.meta` counters.
#[derive(Clone, Debug)]
pub struct SnapshotPaths {
    pub model: PathBuf,
    pub freqs: PathBuf,
    pub output: PathBuf,
    pub meta: PathBuf,
}

impl SnapshotPaths {
    pub fn new(stem: impl AsRef<Path>, format: Format) -> Self {
        let stem = stem.as_ref().to_string_lossy().into_owned();
        let ext = format.extension();
        SnapshotPaths {
            model: format!("{stem}.{ext}").into(),
            freqs: format!("{stem}.freq").into(),
            output: format!("{stem}.out.{ext}").into(),
            meta: format!("{stem}.meta").into(),
        }
    }
}

pub fn save_snapshot<F: Scalar>(
    state: &TrainState<F>,
    stem: impl AsRef<Path>,
    format: Format,
) -> Result<SnapshotPaths> {
    let paths = SnapshotPaths::new(stem, format);
    w2v::save_model(&state.model, &paths.model, format)?;
    w2v::save_freqs(&state.model, &paths.freqs)?;
    let out =
        EmbeddingModel::from_parts(state.model.tokens().to_vec(), state.output.clone(), state.model.freqs().to_vec())?;
    w2v::save_model(&out, &paths.output, format)?;
    let meta = format!("tokens_seen={}\nsessions={}\n", state.tokens_seen, state.sessions);
    File::create(&paths.meta).and_then(|mut f| f.write_all(meta.as_bytes())).map_err(|e| Error::io(&paths.meta, e))?;
    Ok(paths)
}

/// Restore a training state. Missing output weights restart the output
/// layer at zero; missing counters restart at zero.
pub fn load_snapshot<F: Scalar>(stem: impl AsRef<Path>, format: Format, config: TrainConfig) -> Result<TrainState<F>> {
    let paths = SnapshotPaths::new(stem, format);
    let mut model: EmbeddingModel<F> = w2v::load_model(&paths.model, format)?;
    if paths.freqs.exists() {
        w2v::load_freqs(&mut model, &paths.freqs)?;
    }
    let output = if paths.output.exists() {
        let out: EmbeddingModel<F> = w2v::load_model(&paths.output, format)?;
        if out.tokens() != model.tokens() {
            return Err(Error::Parse {
                location: paths.output.display().to_string(),
                message: "output weights do not match the model vocabulary".into(),
            });
        }
        out.vectors().clone()
    } else {
        Matrix::zeros(model.len(), model.dim())
    };
    let mut state = TrainState::from_parts(model, output, config)?;
    if paths.meta.exists() {
        let file = File::open(&paths.meta).map_err(|e| Error::io(&paths.meta, e))?;
        let mut values = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&paths.meta, e))?;
            if let Some((k, v)) = line.split_once('=') {
                let v = v
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| Error::parse_at_line(i + 1, format!("invalid counter {line:?}")))?;
                values.insert(k.trim().to_owned(), v);
            }
        }
        state.tokens_seen = values.get("tokens_seen").copied().unwrap_or(0);
        state.sessions = values.get("sessions").copied().unwrap_or(0);
    }
    Ok(state)
}
