//! Quantile binning of numeric features and dense numbering of category tuples.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{ClaimFeature, ClaimRecord, FeatureValue};
use crate::error::{Error, Result};

/// Cut points and labels for one numeric feature.
///
/// A value `v` falls in bin `i` when `cut[i-1] < v <= cut[i]`. Values at or
/// below the first cut take the first label, values above the last cut take
/// the last label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub feature: String,
    pub cuts: Vec<f64>,
    pub labels: Vec<String>,
}

impl BinningSpec {
    pub fn new(feature: impl Into<String>, cuts: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != cuts.len() + 1 {
            return Err(Error::Input(format!(
                "{} labels for {} cut points",
                labels.len(),
                cuts.len()
            )));
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("cut points must be finite and strictly increasing".into()));
        }
        Ok(BinningSpec {
            feature: feature.into(),
            cuts,
            labels,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.labels.len()
    }

    /// Index of the bin holding `value`.
    pub fn bin_index(&self, value: f64) -> usize {
        self.cuts.partition_point(|&c| c < value)
    }
}

/// Default label vocabulary for `k` bins of `feature`.
pub fn default_labels(feature: ClaimFeature, k: usize) -> Vec<String> {
    let words: &[&str] = match (feature, k) {
        (ClaimFeature::DaysStayed, 3) => &["short", "medium", "long"],
        (_, 3) => &["low", "medium", "high"],
        (_, 2) => &["low", "high"],
        _ => &[],
    };
    if words.is_empty() {
        (1..=k).map(|j| format!("q{j}")).collect()
    } else {
        words.iter().map(|w| w.to_string()).collect()
    }
}

/// Fits equal-count bins at the `j/k` empirical quantiles.
///
/// The `j`-th candidate cut is the order statistic at rank `ceil(j * n / k)`
/// (1-based). Cuts equal to an earlier cut or to the sample maximum are
/// dropped, since the bins they open would be empty; a surviving bin keeps
/// the label of the lowest quantile group it starts.
pub fn fit_bins(feature: &str, values: &[f64], k: usize, labels: &[String]) -> Result<BinningSpec> {
    if k < 1 {
        return Err(Error::Input("bin count must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::Input(format!("no values to bin for `{feature}`")));
    }
    if labels.len() != k {
        return Err(Error::Input(format!("{k} bins need {k} labels, got {}", labels.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite value in `{feature}`")));
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let max = sorted[n - 1];

    let mut cuts = Vec::new();
    let mut kept_labels = vec![labels[0].clone()];
    for (j, label) in labels.iter().enumerate().take(k).skip(1) {
        let rank = (j * n).div_ceil(k);
        let q = sorted[rank - 1];
        if q < max && cuts.last().is_none_or(|&last| q > last) {
            cuts.push(q);
            kept_labels.push(label.clone());
        }
    }
    BinningSpec::new(feature, cuts, kept_labels)
}

pub fn apply_bins(value: f64, spec: &BinningSpec) -> &str {
    &spec.labels[spec.bin_index(value)]
}

/// Turns claims into category tuples for a fixed feature order. Numeric
/// features go through a fitted [`BinningSpec`]; categorical ones pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorizer {
    pub features: Vec<ClaimFeature>,
    /// One spec per numeric feature, in feature order.
    pub bins: Vec<BinningSpec>,
}

impl Categorizer {
    /// Fits bins for each numeric feature on `records`. `bin_counts` overrides
    /// the default of 3 bins per numeric feature.
    pub fn fit(
        records: &[ClaimRecord],
        features: &[ClaimFeature],
        bin_counts: &BTreeMap<ClaimFeature, usize>,
    ) -> Result<Self> {
        let bins = features
            .iter()
            .filter(|f| f.is_numeric())
            .map(|&f| {
                let k = bin_counts.get(&f).copied().unwrap_or(3);
                let values: Vec<f64> = records
                    .iter()
                    .map(|r| match f.value(r) {
                        FeatureValue::Numeric(v) => v,
                        FeatureValue::Category(_) => unreachable!("numeric feature"),
                    })
                    .collect();
                fit_bins(f.name(), &values, k, &default_labels(f, k))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Categorizer {
            features: features.to_vec(),
            bins,
        })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name().to_string()).collect()
    }

    pub fn categorize(&self, record: &ClaimRecord) -> Vec<String> {
        let mut specs = self.bins.iter();
        self.features
            .iter()
            .map(|f| match f.value(record) {
                FeatureValue::Numeric(v) => match specs.next() {
                    Some(spec) => apply_bins(v, spec).to_string(),
                    None => v.to_string(),
                },
                FeatureValue::Category(c) => c.to_string(),
            })
            .collect()
    }
}

/// Dense state id, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

/// Result of looking a tuple up in a [`StateTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Known(StateId),
    Unseen,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateTableRepr {
    feature_order: Vec<String>,
    states: Vec<Vec<String>>,
}

/// Bijection between category tuples and ids `1..=K`, numbered in order of
/// first appearance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "StateTableRepr", try_from = "StateTableRepr")]
pub struct StateTable {
    feature_order: Vec<String>,
    tuples: Vec<Vec<String>>,
    ids: HashMap<Vec<String>, StateId>,
}

impl PartialEq for StateTable {
    fn eq(&self, other: &Self) -> bool {
        self.feature_order == other.feature_order && self.tuples == other.tuples
    }
}

impl From<StateTable> for StateTableRepr {
    fn from(t: StateTable) -> Self {
        StateTableRepr {
            feature_order: t.feature_order,
            states: t.tuples,
        }
    }
}

impl TryFrom<StateTableRepr> for StateTable {
    type Error = Error;

    fn try_from(r: StateTableRepr) -> Result<Self> {
        let mut table = StateTable::empty(r.feature_order);
        for t in r.states {
            let before = table.len();
            table.insert(t)?;
            if table.len() == before {
                return Err(Error::Format("state table lists a tuple twice".into()));
            }
        }
        Ok(table)
    }
}

impl StateTable {
    pub fn empty(feature_order: Vec<String>) -> Self {
        StateTable {
            feature_order,
            tuples: Vec::new(),
            ids: HashMap::new(),
        }
    }

    pub fn feature_order(&self) -> &[String] {
        &self.feature_order
    }

    /// Number of distinct states, K.
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    fn check_arity(&self, tuple: &[String]) -> Result<()> {
        if tuple.len() != self.feature_order.len() {
            return Err(Error::Input(format!(
                "tuple has {} categories, expected {}",
                tuple.len(),
                self.feature_order.len()
            )));
        }
        Ok(())
    }

    /// Returns the id of `tuple`, assigning the next id if it is new.
    pub fn insert(&mut self, tuple: Vec<String>) -> Result<StateId> {
        self.check_arity(&tuple)?;
        if let Some(&id) = self.ids.get(&tuple) {
            return Ok(id);
        }
        let id = StateId(self.tuples.len() as u32 + 1);
        self.ids.insert(tuple.clone(), id);
        self.tuples.push(tuple);
        Ok(id)
    }

    pub fn encode(&self, tuple: &[String]) -> Result<State> {
        self.check_arity(tuple)?;
        Ok(self
            .ids
            .get(tuple)
            .map_or(State::Unseen, |&id| State::Known(id)))
    }

    pub fn decode(&self, id: StateId) -> Option<&[String]> {
        let i = (id.0 as usize).checked_sub(1)?;
        self.tuples.get(i).map(Vec::as_slice)
    }

    /// Tuples in id order (index 0 holds state 1).
    pub fn tuples(&self) -> &[Vec<String>] {
        &self.tuples
    }
}

pub fn build_state_table(tuples: &[Vec<String>], feature_order: &[String]) -> Result<StateTable> {
    let mut table = StateTable::empty(feature_order.to_vec());
    for t in tuples {
        table.insert(t.clone())?;
    }
    Ok(table)
}

pub fn encode_state(tuple: &[String], table: &StateTable) -> Result<State> {
    table.encode(tuple)
}
