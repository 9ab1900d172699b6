//! In-memory embedding model with exact cosine nearest-neighbor search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, norm, Scalar};

/// Token table, vector matrix and per-token counts.
///
/// Row `i` of the vector matrix belongs to `tokens()[i]`. Tokens are stored
/// verbatim; no case folding happens here.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel<F> {
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix<F>,
    freqs: Vec<u64>,
}

impl<F: Scalar> EmbeddingModel<F> {
    pub fn new(dim: usize) -> Self {
        EmbeddingModel {
            dim,
            vocab: Vec::new(),
            index: HashMap::new(),
            vectors: Matrix::zeros(0, dim),
            freqs: Vec::new(),
        }
    }

    /// Build a model from parallel token / row / count lists, checking every
    /// invariant (unique tokens, row width, finite values).
    pub fn from_parts(vocab: Vec<String>, vectors: Matrix<F>, freqs: Vec<u64>) -> Result<Self> {
        if vectors.rows() != vocab.len() {
            return Err(Error::DimensionMismatch { expected: vocab.len(), actual: vectors.rows() });
        }
        if freqs.len() != vocab.len() {
            return Err(Error::DimensionMismatch { expected: vocab.len(), actual: freqs.len() });
        }
        if !vectors.is_finite() {
            return Err(Error::Domain("embedding contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, token) in vocab.iter().enumerate() {
            validate_token(token)?;
            if index.insert(token.clone(), i).is_some() {
                return Err(Error::Domain(format!("duplicate token {token:?}")));
            }
        }
        Ok(EmbeddingModel { dim: vectors.cols(), vocab, index, vectors, freqs })
    }

    /// Append a token. Returns its row index.
    pub fn push(&mut self, token: impl Into<String>, vector: &[F], freq: u64) -> Result<usize> {
        let token = token.into();
        validate_token(&token)?;
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite vector for {token:?}")));
        }
        if self.index.contains_key(&token) {
            return Err(Error::Domain(format!("duplicate token {token:?}")));
        }
        let idx = self.vocab.len();
        self.vectors.push_row(vector)?;
        self.index.insert(token.clone(), idx);
        self.vocab.push(token);
        self.freqs.push(freq);
        Ok(idx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.vocab
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.vocab[idx]
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn vector(&self, idx: usize) -> &[F] {
        self.vectors.row(idx)
    }

    pub fn get(&self, token: &str) -> Option<&[F]> {
        self.lookup(token).map(|i| self.vector(i))
    }

    pub fn vectors(&self) -> &Matrix<F> {
        &self.vectors
    }

    pub(crate) fn vectors_mut(&mut self) -> &mut Matrix<F> {
        &mut self.vectors
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn freq(&self, idx: usize) -> u64 {
        self.freqs[idx]
    }

    pub fn set_freq(&mut self, idx: usize, freq: u64) {
        self.freqs[idx] = freq;
    }

    /// Convert every component to another scalar type.
    pub fn cast<G: Scalar>(&self) -> EmbeddingModel<G> {
        EmbeddingModel {
            dim: self.dim,
            vocab: self.vocab.clone(),
            index: self.index.clone(),
            vectors: self.vectors.map(|v| G::from_f64_lossy(v.as_f64())),
            freqs: self.freqs.clone(),
        }
    }

    fn index_set(&self, exclude: &HashSet<String>) -> HashSet<usize> {
        exclude.iter().filter_map(|t| self.lookup(t)).collect()
    }
}

fn validate_token(token: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::Domain(format!("token {token:?} is empty or contains whitespace")));
    }
    Ok(())
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), actual: v.len() });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == F::zero() || nv == F::zero() {
        return Err(Error::Domain("cosine of a zero-norm vector".into()));
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-F::one()).min(F::one()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor<F> {
    pub token: String,
    pub index: usize,
    pub score: F,
}

/// Ranked neighbors, best first. Ties are broken by ascending vocabulary index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborList<F> {
    pub entries: Vec<Neighbor<F>>,
}

impl<F> NeighborList<F> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rank (0-based) of `token`, if present.
    pub fn position(&self, token: &str) -> Option<usize> {
        self.entries.iter().position(|n| n.token == token)
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.entries.iter().map(|n| n.token.as_str()).collect()
    }
}

// Heap element ordered so that the *worst* candidate is the maximum.
#[derive(Clone, Copy)]
struct Candidate<F> {
    score: F,
    index: usize,
}

impl<F: Scalar> Candidate<F> {
    fn better_than(&self, other: &Self) -> bool {
        match self.score.partial_cmp(&other.score) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => self.index < other.index,
        }
    }
}

impl<F: Scalar> PartialEq for Candidate<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<F: Scalar> Eq for Candidate<F> {}

impl<F: Scalar> PartialOrd for Candidate<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<F: Scalar> Ord for Candidate<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.index == other.index && self.score == other.score {
            Ordering::Equal
        } else if self.better_than(other) {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

fn top_k<F: Scalar>(k: usize, candidates: impl Iterator<Item = Candidate<F>>) -> Vec<Candidate<F>> {
    let mut heap: BinaryHeap<Candidate<F>> = BinaryHeap::with_capacity(k + 1);
    for c in candidates {
        if heap.len() < k {
            heap.push(c);
        } else if let Some(worst) = heap.peek() {
            if c.better_than(worst) {
                heap.pop();
                heap.push(c);
            }
        }
    }
    heap.into_sorted_vec()
}

fn score_row<F: Scalar>(row: &[F], query: &[F], query_norm: F) -> F {
    let n = norm(row);
    if n == F::zero() {
        return F::zero();
    }
    dot(row, query) / (n * query_norm)
}

fn check_query<F: Scalar>(model: &EmbeddingModel<F>, query: &[F], k: usize) -> Result<F> {
    if query.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), actual: query.len() });
    }
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let qn = norm(query);
    if qn == F::zero() || !qn.is_finite() {
        return Err(Error::Domain("nearest-neighbor query has zero norm".into()));
    }
    Ok(qn)
}

fn into_list<F: Scalar>(model: &EmbeddingModel<F>, ranked: Vec<Candidate<F>>) -> NeighborList<F> {
    NeighborList {
        entries: ranked
            .into_iter()
            .map(|c| Neighbor { token: model.token(c.index).to_owned(), index: c.index, score: c.score })
            .collect(),
    }
}

/// Exact top-`k` cosine neighbors of `query` over the whole vocabulary,
/// skipping every token in `exclude`.
pub fn nearest_neighbors<F: Scalar>(
    model: &EmbeddingModel<F>,
    query: &[F],
    k: usize,
    exclude: &HashSet<String>,
) -> Result<NeighborList<F>> {
    let qn = check_query(model, query, k)?;
    let skip = model.index_set(exclude);
    let ranked = top_k(
        k,
        (0..model.len())
            .filter(|i| !skip.contains(i))
            .map(|i| Candidate { score: score_row(model.vector(i), query, qn), index: i }),
    );
    Ok(into_list(model, ranked))
}

/// Same result as [`nearest_neighbors`], with the scan split into vocabulary
/// ranges of `chunk` rows searched in parallel and merged.
pub fn nearest_neighbors_par<F: Scalar>(
    model: &EmbeddingModel<F>,
    query: &[F],
    k: usize,
    exclude: &HashSet<String>,
    chunk: usize,
) -> Result<NeighborList<F>> {
    let qn = check_query(model, query, k)?;
    let skip = model.index_set(exclude);
    let chunk = chunk.max(1);
    let n_chunks = model.len().div_ceil(chunk);
    let partials: Vec<Vec<Candidate<F>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * chunk..((c + 1) * chunk).min(model.len());
            top_k(
                k,
                range
                    .filter(|i| !skip.contains(i))
                    .map(|i| Candidate { score: score_row(model.vector(i), query, qn), index: i }),
            )
        })
        .collect();
    let ranked = top_k(k, partials.into_iter().flatten());
    Ok(into_list(model, ranked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_words() -> EmbeddingModel<f64> {
        let mut m = EmbeddingModel::new(2);
        m.push("word1", &[1.0, 0.0], 1).unwrap();
        m.push("word2", &[0.9, 0.1], 1).unwrap();
        m.push("word3", &[0.0, 1.0], 1).unwrap();
        m
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c: f64 = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn neighbors_rank_by_cosine() {
        let m = three_words();
        let nn = nearest_neighbors(&m, &[1.0, 0.0], 2, &HashSet::new()).unwrap();
        assert_eq!(nn.tokens(), vec!["word1", "word2"]);
        assert_eq!(nn.entries[0].score, 1.0);
    }

    #[test]
    fn neighbors_respect_exclusion() {
        let m = three_words();
        let exclude: HashSet<String> = ["word1".to_string()].into();
        let nn = nearest_neighbors(&m, &[1.0, 0.0], 2, &exclude).unwrap();
        assert_eq!(nn.tokens(), vec!["word2", "word3"]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let mut m = EmbeddingModel::<f64>::new(2);
        m.push("b", &[2.0, 0.0], 1).unwrap();
        m.push("a", &[1.0, 0.0], 1).unwrap();
        m.push("c", &[0.0, 1.0], 1).unwrap();
        let nn = nearest_neighbors(&m, &[3.0, 0.0], 3, &HashSet::new()).unwrap();
        assert_eq!(nn.tokens(), vec!["b", "a", "c"]);
    }

    #[test]
    fn short_vocabulary_returns_fewer_than_k() {
        let m = three_words();
        let nn = nearest_neighbors(&m, &[0.0, 1.0], 10, &HashSet::new()).unwrap();
        assert_eq!(nn.len(), 3);
    }

    #[test]
    fn zero_query_is_domain_error() {
        let m = three_words();
        assert!(matches!(nearest_neighbors(&m, &[0.0, 0.0], 1, &HashSet::new()), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_duplicates_and_bad_rows() {
        let mut m = three_words();
        assert!(m.push("word1", &[0.0, 1.0], 1).is_err());
        assert!(m.push("x", &[0.0], 1).is_err());
        assert!(m.push("y", &[f64::NAN, 0.0], 1).is_err());
        assert!(m.push("has space", &[0.0, 1.0], 1).is_err());
    }
}
