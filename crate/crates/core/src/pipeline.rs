//! Yearly snapshot production for each model regime.

use std::collections::BTreeMap;

use crate::cbow::{train_from_scratch, TrainConfig};
use crate::corpus::Corpus;
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};
use crate::eval::Regime;
use crate::scalar::Scalar;

/// Seeds for the from-scratch regimes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeedPolicy {
    /// Each year's model mixes the year into the seed, so the from-scratch
    /// models start from unrelated layouts.
    #[default]
    PerYear,
    /// Every from-scratch model uses the configured seed. Initial vectors are
    /// keyed by token, so a word starts from the same point in every model.
    Shared,
}

impl std::str::FromStr for SeedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(SeedPolicy::Shared),
            "per_year" => Ok(SeedPolicy::PerYear),
            other => Err(Error::Config(format!("unknown seed policy {other:?}"))),
        }
    }
}

impl SeedPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SeedPolicy::PerYear => "per_year",
            SeedPolicy::Shared => "shared",
        }
    }
}

/// Seed of the from-scratch model for `year`.
pub fn year_seed(config: &TrainConfig, policy: SeedPolicy, year: i32) -> u64 {
    match policy {
        SeedPolicy::Shared => config.seed,
        SeedPolicy::PerYear => config.seed ^ (year as i64 as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    }
}

/// Train one snapshot per year of `corpora` under `regime`.
///
/// The first year is always a from-scratch model at `config.min_count`.
/// Incremental regimes then update it year by year; `IncrStatic` freezes
/// the vocabulary.
pub fn build_snapshots<F: Scalar>(
    regime: Regime,
    corpora: &BTreeMap<i32, Corpus>,
    config: &TrainConfig,
    policy: SeedPolicy,
) -> Result<BTreeMap<i32, EmbeddingModel<F>>> {
    config.validate()?;
    let mut snapshots = BTreeMap::new();
    match regime {
        Regime::Separate | Regime::Cumulative => {
            let mut seen: Vec<&Corpus> = Vec::new();
            for (&year, corpus) in corpora {
                seen.push(corpus);
                let training = match regime {
                    Regime::Separate => corpus.clone(),
                    _ => Corpus::concat(seen.iter().copied()),
                };
                let cfg = TrainConfig { seed: year_seed(config, policy, year), ..config.clone() };
                let (state, _) = train_from_scratch::<F>(&training, cfg)?;
                snapshots.insert(year, state.model);
            }
        }
        Regime::IncrStatic | Regime::IncrDynamic => {
            let mut years = corpora.iter();
            let Some((&first, corpus)) = years.next() else {
                return Err(Error::Plan("no corpora to train on".into()));
            };
            let cfg = TrainConfig {
                expand_threshold: match regime {
                    Regime::IncrStatic => None,
                    _ => config.expand_threshold,
                },
                ..config.clone()
            };
            let (mut state, _) = train_from_scratch::<F>(corpus, cfg)?;
            snapshots.insert(first, state.snapshot());
            for (&year, corpus) in years {
                state.incremental_update(corpus);
                snapshots.insert(year, state.snapshot());
            }
        }
    }
    Ok(snapshots)
}
