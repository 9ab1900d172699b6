//! Sentence-per-line token corpora (plain UTF-8 or gzip).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

/// Whitespace-tokenized sentences. Tokens are opaque: entity tokens such as
/// `united::states_PROPN` are never split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Vec<String>>,
}

impl Corpus {
    pub fn from_sentences<I, S, T>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: Into<String>,
    {
        Corpus {
            sentences: sentences
                .into_iter()
                .map(|s| s.into_iter().map(Into::into).collect::<Vec<_>>())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    /// One sentence per line; blank lines are dropped.
    pub fn from_reader<R: BufRead>(reader: R, lowercase: bool) -> Result<Self> {
        let mut sentences = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let sentence: Vec<String> =
                line.split_whitespace().map(|t| if lowercase { t.to_lowercase() } else { t.to_owned() }).collect();
            if !sentence.is_empty() {
                sentences.push(sentence);
            }
        }
        Ok(Corpus { sentences })
    }

    /// Load a corpus file, transparently decompressing gzip input.
    pub fn from_path(path: impl AsRef<Path>, lowercase: bool) -> Result<Self> {
        let path = path.as_ref();
        let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let gz = file.fill_buf().map_err(|e| Error::io(path, e))?.starts_with(&[0x1f, 0x8b]);
        let reader: Box<dyn Read> = if gz { Box::new(GzDecoder::new(file)) } else { Box::new(file) };
        Self::from_reader(BufReader::new(reader), lowercase).map_err(|e| match e {
            Error::Stream(io) => Error::io(path, io),
            other => other,
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for s in &self.sentences {
            writeln!(w, "{}", s.join(" "))?;
        }
        Ok(())
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Corpus>) -> Corpus {
        Corpus { sentences: parts.into_iter().flat_map(|c| c.sentences.iter().cloned()).collect() }
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Token counts, with tokens listed in order of first occurrence.
    pub fn counts(&self) -> TokenCounts {
        let mut order = Vec::new();
        let mut counts: HashMap<String, u64> = HashMap::new();
        for token in self.sentences.iter().flatten() {
            match counts.get_mut(token) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(token.clone(), 1);
                    order.push(token.clone());
                }
            }
        }
        TokenCounts { order, counts }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TokenCounts {
    order: Vec<String>,
    counts: HashMap<String, u64>,
}

impl TokenCounts {
    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// Tokens in first-occurrence order.
    pub fn tokens(&self) -> &[String] {
        &self.order
    }

    /// Tokens with count `>= floor`, by descending count then first occurrence.
    pub fn ranked_at_least(&self, floor: u64) -> Vec<(String, u64)> {
        let mut kept: Vec<(usize, &String, u64)> = self
            .order
            .iter()
            .enumerate()
            .map(|(i, t)| (i, t, self.counts[t]))
            .filter(|&(_, _, c)| c >= floor)
            .collect();
        kept.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
        kept.into_iter().map(|(_, t, c)| (t.clone(), c)).collect()
    }
}
