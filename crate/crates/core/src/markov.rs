//! First-order Markov chain over an ordered list of claim features, with a
//! fraud probability attached to every observed state.
//!
//! For a categorized claim `(x1, ..., xm)` in state `s` the chain score is
//!
//! ```text
//! P(x1) * P(x2 | x1) * ... * P(xm | x(m-1)) * P(Fraud | s)
//! ```
//!
//! Transitions use additive smoothing, `P(b | a) = (n(a,b) + α) / (n(a) + α·|B|)`
//! with `|B|` the number of training categories of the next feature. State
//! fraud probabilities use `(fraud(s) + α) / (total(s) + 2α)`.
//!
//! Normalizing the chain score against its not-fraud counterpart cancels the
//! transition product, so the normalized chain score and the per-state score
//! agree on every seen tuple. Both are exposed; the tests check the agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ClaimFeature, ClaimRecord, Dataset, Label};
use crate::discretize::{build_state_table, Categorizer, State, StateTable};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Smoothed distribution over the categories of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalRow {
    pub total: u64,
    pub counts: BTreeMap<String, u64>,
    pub probs: BTreeMap<String, f64>,
}

impl CategoricalRow {
    fn from_counts(counts: BTreeMap<String, u64>, vocab: &BTreeSet<String>, alpha: f64) -> Self {
        let total: u64 = counts.values().sum();
        let denom = total as f64 + alpha * vocab.len() as f64;
        let probs = vocab
            .iter()
            .map(|c| {
                let n = counts.get(c).copied().unwrap_or(0) as f64;
                let p = if denom > 0.0 { (n + alpha) / denom } else { 1.0 / vocab.len() as f64 };
                (c.clone(), p)
            })
            .collect();
        CategoricalRow { total, counts, probs }
    }

    /// Probability of `category`; categories outside the training vocabulary
    /// get the smoothed zero-count mass.
    pub fn prob(&self, category: &str, alpha: f64) -> f64 {
        match self.probs.get(category) {
            Some(&p) => p,
            None => {
                let denom = self.total as f64 + alpha * self.probs.len() as f64;
                if denom > 0.0 {
                    alpha / denom
                } else {
                    0.0
                }
            }
        }
    }
}

/// `P(to | from)` for one adjacent pair of features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub from: String,
    pub to: String,
    pub to_vocabulary: Vec<String>,
    pub rows: BTreeMap<String, CategoricalRow>,
}

impl TransitionTable {
    pub fn prob(&self, from: &str, to: &str, alpha: f64) -> f64 {
        match self.rows.get(from) {
            Some(row) => row.prob(to, alpha),
            // unseen source category: a zero-count row, i.e. uniform under smoothing
            None if alpha > 0.0 || self.to_vocabulary.iter().any(|c| c == to) => {
                1.0 / self.to_vocabulary.len() as f64
            }
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateStats {
    pub fraud: u64,
    pub total: u64,
    pub p_fraud: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovFraudModel {
    pub feature_order: Vec<String>,
    pub alpha: f64,
    pub threshold: f64,
    /// Training fraud fraction; the score of unseen states.
    pub global_prior: f64,
    pub initial: CategoricalRow,
    pub transitions: Vec<TransitionTable>,
    pub state_table: StateTable,
    /// Indexed by state id - 1.
    pub states: Vec<StateStats>,
}

/// Output of [`MarkovFraudModel::score_chain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainScore {
    /// `P(x1) * prod P(x(i+1) | xi) * P(Fraud | state)`.
    pub joint: f64,
    /// `joint / (joint + joint with P(NotFraud | state) as the last factor)`.
    pub normalized: f64,
}

pub fn fit_markov(
    tuples: &[Vec<String>],
    labels: &[Label],
    feature_order: &[String],
    alpha: f64,
) -> Result<MarkovFraudModel> {
    if tuples.is_empty() {
        return Err(Error::Input("cannot fit a Markov model on an empty training set".into()));
    }
    if tuples.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} tuples but {} labels",
            tuples.len(),
            labels.len()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing alpha must be >= 0, got {alpha}")));
    }
    if feature_order.is_empty() {
        return Err(Error::Config("Markov model needs at least one feature".into()));
    }

    let state_table = build_state_table(tuples, feature_order)?;
    let m = feature_order.len();

    let mut vocab: Vec<BTreeSet<String>> = vec![BTreeSet::new(); m];
    let mut first_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut pair_counts: Vec<BTreeMap<String, BTreeMap<String, u64>>> = vec![BTreeMap::new(); m - 1];
    let mut states = vec![(0u64, 0u64); state_table.len()];
    let mut frauds = 0u64;

    for (t, &label) in tuples.iter().zip(labels) {
        for (v, c) in vocab.iter_mut().zip(t) {
            if !v.contains(c) {
                v.insert(c.clone());
            }
        }
        *first_counts.entry(t[0].clone()).or_default() += 1;
        for (i, pair) in pair_counts.iter_mut().enumerate() {
            *pair
                .entry(t[i].clone())
                .or_default()
                .entry(t[i + 1].clone())
                .or_default() += 1;
        }
        let State::Known(id) = state_table.encode(t)? else {
            unreachable!("every training tuple is in the table");
        };
        let slot = &mut states[id.0 as usize - 1];
        slot.1 += 1;
        if label.is_fraud() {
            slot.0 += 1;
            frauds += 1;
        }
    }

    let initial = CategoricalRow::from_counts(first_counts, &vocab[0], alpha);
    let transitions = pair_counts
        .into_iter()
        .enumerate()
        .map(|(i, rows)| TransitionTable {
            from: feature_order[i].clone(),
            to: feature_order[i + 1].clone(),
            to_vocabulary: vocab[i + 1].iter().cloned().collect(),
            rows: rows
                .into_iter()
                .map(|(a, counts)| (a, CategoricalRow::from_counts(counts, &vocab[i + 1], alpha)))
                .collect(),
        })
        .collect();

    let states = states
        .into_iter()
        .map(|(fraud, total)| StateStats {
            fraud,
            total,
            p_fraud: if alpha == 0.0 {
                fraud as f64 / total as f64
            } else {
                (fraud as f64 + alpha) / (total as f64 + 2.0 * alpha)
            },
        })
        .collect();

    Ok(MarkovFraudModel {
        feature_order: feature_order.to_vec(),
        alpha,
        threshold: 0.5,
        global_prior: frauds as f64 / tuples.len() as f64,
        initial,
        transitions,
        state_table,
        states,
    })
}

impl MarkovFraudModel {
    pub fn state(&self, tuple: &[String]) -> Result<State> {
        self.state_table.encode(tuple)
    }

    /// Smoothed `P(Fraud | state)`; unseen states score at the training prior.
    pub fn score_state(&self, state: State) -> f64 {
        match state {
            State::Known(id) => self
                .states
                .get(id.0 as usize - 1)
                .map_or(self.global_prior, |s| s.p_fraud),
            State::Unseen => self.global_prior,
        }
    }

    pub fn p_not_fraud(&self, state: State) -> f64 {
        1.0 - self.score_state(state)
    }

    /// Product of the initial and transition factors for `tuple`.
    pub fn chain_prob(&self, tuple: &[String]) -> Result<f64> {
        self.check_arity(tuple)?;
        let mut p = self.initial.prob(&tuple[0], self.alpha);
        for (i, t) in self.transitions.iter().enumerate() {
            p *= t.prob(&tuple[i], &tuple[i + 1], self.alpha);
        }
        Ok(p)
    }

    pub fn score_chain(&self, tuple: &[String]) -> Result<ChainScore> {
        let chain = self.chain_prob(tuple)?;
        let p_fraud = self.score_state(self.state(tuple)?);
        let joint = chain * p_fraud;
        let complement = chain * (1.0 - p_fraud);
        let normalized = if joint + complement > 0.0 {
            joint / (joint + complement)
        } else {
            p_fraud
        };
        Ok(ChainScore { joint, normalized })
    }

    fn check_arity(&self, tuple: &[String]) -> Result<()> {
        if tuple.len() != self.feature_order.len() {
            return Err(Error::Input(format!(
                "tuple has {} categories, model expects {}",
                tuple.len(),
                self.feature_order.len()
            )));
        }
        Ok(())
    }
}

/// Fraud iff `score > threshold`.
pub fn classify(score: f64, threshold: f64) -> Label {
    Label::from_fraud(score > threshold)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Empirical per-state fraud probability.
    #[default]
    State,
    /// Normalized chain product.
    Chain,
}

/// A fitted Markov model together with the binning that turns raw claims into
/// its category tuples. This is what the model file holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovDetector {
    pub format_version: u32,
    pub kind: String,
    pub scoring: ScoringMode,
    pub categorizer: Categorizer,
    pub model: MarkovFraudModel,
}

pub const MARKOV_KIND: &str = "markov";

impl MarkovDetector {
    pub fn fit(
        train: &Dataset,
        features: &[ClaimFeature],
        bin_counts: &BTreeMap<ClaimFeature, usize>,
        alpha: f64,
        threshold: f64,
        scoring: ScoringMode,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold must be in [0, 1], got {threshold}")));
        }
        if train.is_empty() {
            return Err(Error::Input("cannot fit a Markov model on an empty training set".into()));
        }
        let categorizer = Categorizer::fit(&train.records, features, bin_counts)?;
        let tuples: Vec<Vec<String>> = train.records.iter().map(|r| categorizer.categorize(r)).collect();
        let mut model = fit_markov(&tuples, &train.labels(), &categorizer.feature_names(), alpha)?;
        model.threshold = threshold;
        Ok(MarkovDetector {
            format_version: FORMAT_VERSION,
            kind: MARKOV_KIND.into(),
            scoring,
            categorizer,
            model,
        })
    }

    pub fn score(&self, claim: &ClaimRecord) -> f64 {
        let tuple = self.categorizer.categorize(claim);
        match self.scoring {
            ScoringMode::State => self
                .model
                .state(&tuple)
                .map_or(self.model.global_prior, |s| self.model.score_state(s)),
            ScoringMode::Chain => self
                .model
                .score_chain(&tuple)
                .map_or(self.model.global_prior, |c| c.normalized),
        }
    }

    pub fn score_all(&self, claims: &[ClaimRecord]) -> Vec<f64> {
        use rayon::prelude::*;
        claims.par_iter().map(|c| self.score(c)).collect()
    }

    pub fn threshold(&self) -> f64 {
        self.model.threshold
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let d: MarkovDetector = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if d.kind != MARKOV_KIND {
            return Err(Error::Format(format!("expected a `{MARKOV_KIND}` model, found `{}`", d.kind)));
        }
        if d.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                d.format_version
            )));
        }
        Ok(d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
