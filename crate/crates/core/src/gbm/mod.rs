//! Gradient-boosted regression trees for binary fraud classification.
//!
//! Boosting starts from the training log-odds `F0 = ln(p / (1 - p))`. Each
//! round fits a depth-limited least-squares tree to the residuals `y - p`,
//! sets every leaf to a Newton step on the Bernoulli deviance and adds the
//! tree scaled by the learning rate. Split search is exact: every feature and
//! every boundary between distinct sorted values is tried, the largest
//! squared-error reduction wins, and near-equal gains go to the lowest
//! feature index and then the lowest threshold.

mod encode;
mod loss;
mod tree;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use encode::{encode_features, CategoricalEncoding, FeatureEncoder, FeatureMatrix, UNSEEN_CODE};
pub use loss::{bernoulli_deviance, deviance_of_raw, negative_gradient, row_deviance, sigmoid, PROB_CLAMP};
pub use tree::{midpoint, Node, RegressionTree, GAIN_TIE_TOLERANCE};

use crate::data::{seeded_permutation, ClaimFeature, ClaimRecord, Dataset, Label};
use crate::error::{Error, Result};
use tree::{SortedColumns, TreeBuilder, TreeParams};

pub const FORMAT_VERSION: u32 = 1;
pub const GBM_KIND: &str = "gbm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub cv_folds: usize,
    pub min_leaf_count: usize,
    /// Seeds the cross-validation fold assignment. Fitting itself is deterministic.
    pub seed: u64,
}

impl Default for GbmHyperparams {
    fn default() -> Self {
        GbmHyperparams {
            n_trees: 300,
            max_depth: 5,
            learning_rate: 0.1,
            cv_folds: 10,
            min_leaf_count: 10,
            seed: 0,
        }
    }
}

impl GbmHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.min_leaf_count < 1 {
            return Err(Error::Config("min_leaf_count must be at least 1".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf_count,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    /// Initial log-odds.
    pub f0: f64,
    pub learning_rate: f64,
    /// Number of leading trees used for prediction.
    pub best_iteration: usize,
    pub n_features: usize,
    /// Mean training deviance after 0, 1, ..., n_trees trees.
    pub train_deviance: Vec<f64>,
    pub trees: Vec<RegressionTree>,
}

impl GbmModel {
    /// A model with no trees.
    pub fn constant(f0: f64, learning_rate: f64, n_features: usize) -> Self {
        GbmModel {
            f0,
            learning_rate,
            best_iteration: 0,
            n_features,
            train_deviance: Vec::new(),
            trees: Vec::new(),
        }
    }

    pub fn push_tree(&mut self, tree: RegressionTree) {
        self.trees.push(tree);
        self.best_iteration = self.trees.len();
    }

    /// Log-odds using the first `n_trees` trees.
    pub fn raw_score_with(&self, row: &[f64], n_trees: usize) -> f64 {
        self.f0
            + self.learning_rate
                * self.trees[..n_trees.min(self.trees.len())]
                    .iter()
                    .map(|t| t.predict(row))
                    .sum::<f64>()
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.raw_score_with(row, self.best_iteration)
    }

    /// Fraud probability from the first `best_iteration` trees, clamped to
    /// `[1e-15, 1 - 1e-15]` so it stays strictly inside (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::Input(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        Ok(sigmoid(self.raw_score(row)).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    }
}

pub fn predict_proba(model: &GbmModel, row: &[f64]) -> Result<f64> {
    model.predict_proba(row)
}

fn targets(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|l| l.as_target()).collect()
}

fn check_inputs(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::Input(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::Input("cannot fit on an empty training set".into()));
    }
    if (0..x.n_rows()).any(|i| x.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::Input("feature matrix contains non-finite values".into()));
    }
    Ok(())
}

/// Boosts on `rows` of `x`, optionally tracking the deviance on `eval_rows`
/// after every round.
fn boost(
    x: &FeatureMatrix,
    y: &[f64],
    rows: &[u32],
    eval_rows: &[u32],
    hp: &GbmHyperparams,
) -> Result<(GbmModel, Vec<f64>)> {
    let n = rows.len();
    let positives: f64 = rows.iter().map(|&r| y[r as usize]).sum();
    if positives == 0.0 || positives == n as f64 {
        return Err(Error::Input(
            "training labels are all identical; initial log-odds would be infinite".into(),
        ));
    }
    let base_rate = positives / n as f64;
    let f0 = (base_rate / (1.0 - base_rate)).ln();
    let params = hp.tree_params();
    let sorted = SortedColumns::new(x, rows);

    let mut model = GbmModel::constant(f0, hp.learning_rate, x.n_cols());
    let mut raw = vec![f0; x.n_rows()];
    let mut grad = vec![0.0; x.n_rows()];
    let mut hess = vec![0.0; x.n_rows()];
    let train_deviance = |raw: &[f64]| {
        rows.iter()
            .map(|&r| row_deviance(y[r as usize], raw[r as usize]))
            .sum::<f64>()
            / n as f64
    };
    model.train_deviance.push(train_deviance(&raw));

    let mut eval_raw = vec![f0; eval_rows.len()];
    let mut eval_curve = Vec::with_capacity(if eval_rows.is_empty() { 0 } else { hp.n_trees });

    for _ in 0..hp.n_trees {
        for &r in rows {
            let r = r as usize;
            let p = sigmoid(raw[r]);
            grad[r] = y[r] - p;
            hess[r] = p * (1.0 - p);
        }
        let tree = TreeBuilder::new(x, y, &raw, &grad, &hess, &sorted, &params).build();
        for &r in rows {
            let r = r as usize;
            raw[r] += hp.learning_rate * tree.predict(x.row(r));
        }
        model.train_deviance.push(train_deviance(&raw));

        if !eval_rows.is_empty() {
            for (f, &r) in eval_raw.iter_mut().zip(eval_rows) {
                *f += hp.learning_rate * tree.predict(x.row(r as usize));
            }
            let ys: Vec<f64> = eval_rows.iter().map(|&r| y[r as usize]).collect();
            let ps: Vec<f64> = eval_raw.iter().map(|&f| sigmoid(f)).collect();
            eval_curve.push(bernoulli_deviance(&ys, &ps)?);
        }
        model.push_tree(tree);
    }
    Ok((model, eval_curve))
}

/// Fits a boosted model on every row of `x`. `best_iteration` is set to the
/// number of trees; [`fit_gbm_with_cv`] replaces it with the CV choice.
pub fn fit_gbm(x: &FeatureMatrix, labels: &[Label], hp: &GbmHyperparams) -> Result<GbmModel> {
    hp.validate()?;
    let y = targets(labels);
    check_inputs(x, &y)?;
    let rows: Vec<u32> = (0..x.n_rows() as u32).collect();
    Ok(boost(x, &y, &rows, &[], hp)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    /// Mean held-out deviance after 1..=n_trees trees (index 0 is one tree).
    pub mean_deviance: Vec<f64>,
    /// 1-based argmin of `mean_deviance`, first index on ties; 0 with no trees.
    pub best_iteration: usize,
}

impl CvReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,mean_cv_deviance\n");
        for (i, d) in self.mean_deviance.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, d));
        }
        out
    }
}

/// Fold index of every row: a seeded permutation dealt round-robin, so fold
/// sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut fold = vec![0; n];
    for (pos, row) in seeded_permutation(n, seed).into_iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

pub fn cross_validate(x: &FeatureMatrix, labels: &[Label], hp: &GbmHyperparams) -> Result<CvReport> {
    hp.validate()?;
    let y = targets(labels);
    check_inputs(x, &y)?;
    let k = hp.cv_folds;
    if k < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    if x.n_rows() < k {
        return Err(Error::Input(format!("{} rows are too few for {k} folds", x.n_rows())));
    }
    let fold = fold_assignment(x.n_rows(), k, hp.seed);
    let curves = (0..k)
        .into_par_iter()
        .map(|f| {
            let (held, train): (Vec<u32>, Vec<u32>) =
                (0..x.n_rows() as u32).partition(|&r| fold[r as usize] == f);
            boost(x, &y, &train, &held, hp).map(|(_, curve)| curve)
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_deviance: Vec<f64> = (0..hp.n_trees)
        .map(|m| curves.iter().map(|c| c[m]).sum::<f64>() / k as f64)
        .collect();
    let best_iteration = mean_deviance
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &d)| match best {
            Some((_, bd)) if d >= bd => best,
            _ => Some((i, d)),
        })
        .map_or(0, |(i, _)| i + 1);
    Ok(CvReport {
        folds: k,
        mean_deviance,
        best_iteration,
    })
}

/// Cross-validates, then fits on all rows and keeps the CV-selected number of trees.
pub fn fit_gbm_with_cv(
    x: &FeatureMatrix,
    labels: &[Label],
    hp: &GbmHyperparams,
) -> Result<(GbmModel, CvReport)> {
    let cv = cross_validate(x, labels, hp)?;
    let mut model = fit_gbm(x, labels, hp)?;
    if hp.n_trees > 0 {
        model.best_iteration = cv.best_iteration;
    }
    Ok((model, cv))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeSelection {
    /// Predict with the CV-selected number of trees.
    #[default]
    Best,
    /// Predict with every fitted tree.
    All,
}

/// A fitted model with its feature encoder and decision threshold; the
/// contents of a GBM model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmDetector {
    pub format_version: u32,
    pub kind: String,
    pub threshold: f64,
    pub hyperparams: GbmHyperparams,
    pub encoder: FeatureEncoder,
    pub model: GbmModel,
}

impl GbmDetector {
    /// Encodes `train`, optionally cross-validates, and fits.
    pub fn fit(
        train: &Dataset,
        features: &[ClaimFeature],
        encoding: CategoricalEncoding,
        hp: &GbmHyperparams,
        use_cv: bool,
        selection: TreeSelection,
        threshold: f64,
    ) -> Result<(Self, Option<CvReport>)> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold must be in [0, 1], got {threshold}")));
        }
        let encoder = FeatureEncoder::fit(&train.records, features, encoding);
        let x = encoder.encode(&train.records);
        let labels = train.labels();
        let (mut model, cv) = if use_cv && hp.n_trees > 0 {
            let (m, cv) = fit_gbm_with_cv(&x, &labels, hp)?;
            (m, Some(cv))
        } else {
            (fit_gbm(&x, &labels, hp)?, None)
        };
        if selection == TreeSelection::All {
            model.best_iteration = model.trees.len();
        }
        Ok((
            GbmDetector {
                format_version: FORMAT_VERSION,
                kind: GBM_KIND.into(),
                threshold,
                hyperparams: hp.clone(),
                encoder,
                model,
            },
            cv,
        ))
    }

    pub fn score_all(&self, claims: &[ClaimRecord]) -> Vec<f64> {
        let x = self.encoder.encode(claims);
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| {
                self.model
                    .predict_proba(x.row(i))
                    .expect("encoder output matches model width")
            })
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let d: GbmDetector = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if d.kind != GBM_KIND {
            return Err(Error::Format(format!("expected a `{GBM_KIND}` model, found `{}`", d.kind)));
        }
        if d.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                d.format_version
            )));
        }
        if d.model.n_features != d.encoder.n_columns() {
            return Err(Error::Format("model width does not match its encoder".into()));
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

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fraud as F, NotFraud as N};

    fn toy() -> (FeatureMatrix, Vec<Label>) {
        // 20 rows, separable on column 0 at 9.5
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let labels = (0..20).map(|i| if i >= 10 { F } else { N }).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), labels)
    }

    fn hp(n_trees: usize, depth: usize) -> GbmHyperparams {
        GbmHyperparams {
            n_trees,
            max_depth: depth,
            learning_rate: 0.1,
            cv_folds: 4,
            min_leaf_count: 1,
            seed: 3,
        }
    }

    #[test]
    fn zero_trees_predict_base_rate() {
        let (x, mut y) = toy();
        y[0] = F; // 11 of 20
        let m = fit_gbm(&x, &y, &hp(0, 2)).unwrap();
        for i in 0..20 {
            assert!((m.predict_proba(x.row(i)).unwrap() - 0.55).abs() < 1e-12);
        }
        let zero_lr = fit_gbm(&x, &y, &GbmHyperparams { learning_rate: 0.0, ..hp(5, 2) }).unwrap();
        for i in 0..20 {
            assert_eq!(zero_lr.predict_proba(x.row(i)).unwrap(), m.predict_proba(x.row(i)).unwrap());
        }
    }

    #[test]
    fn separable_toy_set() {
        let (x, y) = toy();
        let m = fit_gbm(&x, &y, &hp(10, 2)).unwrap();
        assert_eq!(m.trees[0].root_split(), Some((0, 9.5)));
        for (i, &label) in y.iter().enumerate() {
            let p = m.predict_proba(x.row(i)).unwrap();
            assert_eq!(p > 0.5, label == F);
        }
        for w in m.train_deviance.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(m.trees.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn degenerate_labels_rejected() {
        let (x, _) = toy();
        assert!(fit_gbm(&x, &[N; 20], &hp(3, 2)).is_err());
        let bad = FeatureMatrix::from_rows(&[vec![f64::NAN], vec![1.0]]).unwrap();
        assert!(fit_gbm(&bad, &[F, N], &hp(1, 1)).is_err());
        assert!(fit_gbm(&x, &[F, N], &hp(1, 1)).is_err());
    }

    #[test]
    fn hand_built_stump() {
        let tree = RegressionTree::from_nodes(vec![
            Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: -2.0 },
            Node::Leaf { value: 2.0 },
        ])
        .unwrap();
        let mut m = GbmModel::constant(0.0, 0.5, 1);
        m.push_tree(tree);
        assert!((m.predict_proba(&[-1.0]).unwrap() - 0.268_941_421_369_995_1).abs() < 1e-12);
        assert!((m.predict_proba(&[1.0]).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!(m.predict_proba(&[1.0, 2.0]).is_err());

        let before = m.predict_proba(&[1.0]).unwrap();
        m.push_tree(RegressionTree::constant(0.0));
        assert_eq!(m.predict_proba(&[1.0]).unwrap(), before);
    }

    #[test]
    fn fold_sizes_balanced() {
        let fold = fold_assignment(105, 10, 9);
        let mut sizes = [0; 10];
        for f in fold {
            sizes[f] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert_eq!(sizes.iter().sum::<usize>(), 105);
    }

    #[test]
    fn cv_is_deterministic() {
        let (x, y) = toy();
        let a = cross_validate(&x, &y, &hp(6, 2)).unwrap();
        let b = cross_validate(&x, &y, &hp(6, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean_deviance.len(), 6);
        assert!((1..=6).contains(&a.best_iteration));
        let too_many = GbmHyperparams { cv_folds: 25, ..hp(2, 2) };
        assert!(cross_validate(&x, &y, &too_many).is_err());
    }
}
