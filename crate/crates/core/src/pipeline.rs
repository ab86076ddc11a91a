//! Training, evaluation and comparison steps shared by the CLI and the
//! Python bindings, plus the one-shot `run_paper` driver.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{GbmConfig, MarkovConfig, RunConfig};
use crate::data::{read_dataset, split_train_test, write_dataset, Dataset};
use crate::error::{Error, Result};
use crate::eval::{fmt4, fmt_raw, roc_svg, round_dp, round_sig15, EvaluationReport, RocCurve};
use crate::gbm::{CvReport, GbmDetector, GBM_KIND};
use crate::markov::{MarkovDetector, MARKOV_KIND};
use crate::synth::generate;

pub fn train_markov(train: &Dataset, cfg: &MarkovConfig) -> Result<MarkovDetector> {
    MarkovDetector::fit(
        train,
        &cfg.features,
        &cfg.bin_counts()?,
        cfg.alpha,
        cfg.threshold,
        cfg.scoring,
    )
}

pub fn train_gbm(train: &Dataset, cfg: &GbmConfig) -> Result<(GbmDetector, Option<CvReport>)> {
    GbmDetector::fit(
        train,
        &cfg.features,
        cfg.encoding,
        &cfg.hyperparams(),
        cfg.cross_validate,
        cfg.tree_selection,
        cfg.threshold,
    )
}

/// Either kind of fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Markov(MarkovDetector),
    Gbm(GbmDetector),
}

#[derive(Deserialize)]
struct KindProbe {
    kind: String,
}

impl Detector {
    pub fn from_toml(text: &str) -> Result<Self> {
        let probe: KindProbe = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        match probe.kind.as_str() {
            MARKOV_KIND => MarkovDetector::from_toml(text).map(Detector::Markov),
            GBM_KIND => GbmDetector::from_toml(text).map(Detector::Gbm),
            other => Err(Error::Format(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Detector::Markov(d) => d.save(path),
            Detector::Gbm(d) => d.save(path),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Detector::Markov(_) => MARKOV_KIND,
            Detector::Gbm(_) => GBM_KIND,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Detector::Markov(d) => d.threshold(),
            Detector::Gbm(d) => d.threshold,
        }
    }

    /// Fraud probability for every claim.
    pub fn score_all(&self, dataset: &Dataset) -> Vec<f64> {
        match self {
            Detector::Markov(d) => d.score_all(&dataset.records),
            Detector::Gbm(d) => d.score_all(&dataset.records),
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Scores `dataset`, then writes `<prefix>_metrics.json`, `<prefix>_report.txt`,
/// `<prefix>_roc.csv` and `<prefix>_roc.svg` into `out_dir`.
pub fn evaluate(
    detector: &Detector,
    dataset: &Dataset,
    threshold: Option<f64>,
    name: &str,
    out_dir: &Path,
    prefix: &str,
) -> Result<(EvaluationReport, RocCurve)> {
    let threshold = threshold.unwrap_or_else(|| detector.threshold());
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let scores = detector.score_all(dataset);
    let (report, curve) = EvaluationReport::build(name, &dataset.provenance, threshold, &dataset.labels(), &scores)?;
    create_dir(out_dir)?;
    write(&out_dir.join(format!("{prefix}_metrics.json")), report.to_json())?;
    write(&out_dir.join(format!("{prefix}_report.txt")), report.to_text())?;
    write(&out_dir.join(format!("{prefix}_roc.csv")), curve.to_csv())?;
    write(&out_dir.join(format!("{prefix}_roc.svg")), roc_svg(&[(name, &curve)]))?;
    Ok((report, curve))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub first: Option<f64>,
    pub second: Option<f64>,
    /// `second - first`.
    pub delta: Option<f64>,
    pub first_4dp: Option<f64>,
    pub second_4dp: Option<f64>,
    pub delta_4dp: Option<f64>,
}

/// Side-by-side metrics of two evaluations on the same test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: String,
    pub second: String,
    pub dataset: String,
    pub false_positives: (u64, u64),
    pub metrics: Vec<MetricDelta>,
}

impl Comparison {
    pub fn new(first: &EvaluationReport, second: &EvaluationReport) -> Self {
        let metrics = first
            .named()
            .iter()
            .zip(second.named())
            .map(|((name, a), (_, b))| {
                let delta = a.raw.zip(b.raw).map(|(x, y)| y - x);
                MetricDelta {
                    metric: name.to_string(),
                    first: a.raw,
                    second: b.raw,
                    delta: delta.map(round_sig15),
                    first_4dp: a.rounded,
                    second_4dp: b.rounded,
                    delta_4dp: delta.map(|d| round_dp(d, 4)),
                }
            })
            .collect();
        Comparison {
            first: first.model.clone(),
            second: second.model.clone(),
            dataset: first.dataset.clone(),
            false_positives: (first.confusion.fp, second.confusion.fp),
            metrics,
        }
    }

    pub fn metric(&self, name: &str) -> Option<&MetricDelta> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {}", self.dataset);
        let _ = writeln!(
            out,
            "{:<12}{:>12}{:>12}{:>12}   {:<20}{:<20}{:<20}",
            "Measure", self.first, self.second, "Delta", "raw first", "raw second", "raw delta"
        );
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{:<12}{:>12}{:>12}{:>12}   {:<20}{:<20}{:<20}",
                m.metric,
                fmt4(m.first_4dp),
                fmt4(m.second_4dp),
                fmt4(m.delta_4dp),
                fmt_raw(m.first),
                fmt_raw(m.second),
                fmt_raw(m.delta)
            );
        }
        let _ = writeln!(
            out,
            "{:<12}{:>12}{:>12}",
            "False pos.", self.false_positives.0, self.false_positives.1
        );
        out
    }
}

/// Evaluates two models on `dataset` and writes per-model reports plus
/// `comparison.json`, `comparison.txt` and `roc_comparison.svg`.
pub fn compare(
    first: (&str, &Detector),
    second: (&str, &Detector),
    dataset: &Dataset,
    out_dir: &Path,
) -> Result<Comparison> {
    let (a, ca) = evaluate(first.1, dataset, None, first.0, out_dir, first.0)?;
    let (b, cb) = evaluate(second.1, dataset, None, second.0, out_dir, second.0)?;
    let cmp = Comparison::new(&a, &b);
    write(&out_dir.join("comparison.json"), cmp.to_json())?;
    write(&out_dir.join("comparison.txt"), cmp.to_text())?;
    write(
        &out_dir.join("roc_comparison.svg"),
        roc_svg(&[(first.0, &ca), (second.0, &cb)]),
    )?;
    Ok(cmp)
}

pub fn write_cv_report(cv: &CvReport, path: &Path) -> Result<()> {
    write(path, cv.to_csv())
}

pub fn write_train_deviance(model: &GbmDetector, path: &Path) -> Result<()> {
    let mut out = String::from("iteration,train_deviance\n");
    for (i, d) in model.model.train_deviance.iter().enumerate() {
        let _ = writeln!(out, "{i},{d}");
    }
    write(path, out)
}

/// Everything `run_paper` produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
    pub markov: EvaluationReport,
    pub gbm: EvaluationReport,
    pub comparison: Comparison,
    pub cv: Option<CvReport>,
    /// Mean training deviance after each boosting round.
    pub gbm_train_deviance: Vec<f64>,
    pub markov_states: usize,
}

/// generate -> split -> train both models -> evaluate both -> compare.
///
/// Files written to `out_dir`: `resolved_config.toml`, `dataset.csv`,
/// `train.csv`, `test.csv`, `markov_model.toml`, `gbm_model.toml`,
/// `gbm_cv.csv` (when cross-validating), `gbm_train_deviance.csv`, the
/// per-model evaluation files and the comparison files.
pub fn run_paper(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    create_dir(out_dir)?;
    cfg.save(out_dir.join("resolved_config.toml"))?;

    let data = generate(&cfg.generate)?;
    write_dataset(&data, out_dir.join("dataset.csv"))?;
    let split = split_train_test(&data, cfg.split.ratio, cfg.split.seed)?;
    write_dataset(&split.train, out_dir.join("train.csv"))?;
    write_dataset(&split.test, out_dir.join("test.csv"))?;

    // file-backed datasets so reports name a stable source
    let train = read_dataset(out_dir.join("train.csv"))?;
    let mut test = read_dataset(out_dir.join("test.csv"))?;
    test.provenance = "test.csv".into();

    let markov = train_markov(&train, &cfg.markov)?;
    markov.save(out_dir.join("markov_model.toml"))?;
    let markov_states = markov.model.state_table.len();

    let (gbm, cv) = train_gbm(&train, &cfg.gbm)?;
    gbm.save(out_dir.join("gbm_model.toml"))?;
    if let Some(cv) = &cv {
        write_cv_report(cv, &out_dir.join("gbm_cv.csv"))?;
    }
    write_train_deviance(&gbm, &out_dir.join("gbm_train_deviance.csv"))?;
    let gbm_train_deviance = gbm.model.train_deviance.clone();

    let comparison = compare(
        (MARKOV_KIND, &Detector::Markov(markov)),
        (GBM_KIND, &Detector::Gbm(gbm)),
        &test,
        out_dir,
    )?;
    let read_report = |name: &str| -> Result<EvaluationReport> {
        let path = out_dir.join(format!("{name}_metrics.json"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    };

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        n_train: train.len(),
        n_test: test.len(),
        markov: read_report(MARKOV_KIND)?,
        gbm: read_report(GBM_KIND)?,
        comparison,
        cv,
        gbm_train_deviance,
        markov_states,
    })
}
