//! Confusion matrices, threshold metrics, ROC curves and AUC.
//!
//! Fraud is the positive class. Predictions follow the strict rule
//! `score > threshold`, and every ROC point is exactly the confusion matrix of
//! that rule at the point's threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }
}

pub fn confusion(labels: &[Label], predictions: &[Label]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Input(format!(
            "{} labels but {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Input("confusion matrix of an empty sample".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y.is_fraud(), p.is_fraud()) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// The five threshold metrics. `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    MetricsReport {
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.fp + cm.tn),
        precision: ratio(cm.tp, cm.tp + cm.fp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
    }
}

impl MetricsReport {
    pub fn named(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("precision", self.precision),
            ("accuracy", self.accuracy),
            ("f1", self.f1),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Claims scoring strictly above this value are flagged.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

fn class_counts(labels: &[Label], scores: &[f64]) -> Result<(u64, u64)> {
    if labels.len() != scores.len() {
        return Err(Error::Input(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    let pos = labels.iter().filter(|l| l.is_fraud()).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Input("ROC needs at least one fraud and one non-fraud claim".into()));
    }
    Ok((pos, neg))
}

/// ROC curve with one point per distinct score, in descending score order,
/// followed by a `-inf` sentinel. Tied scores move as one block. The first
/// point (threshold = max score) is (0, 0); the last is (1, 1).
pub fn roc(labels: &[Label], scores: &[f64]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_fraud() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
    }
    points.push(RocPoint {
        fpr: 1.0,
        tpr: 1.0,
        threshold: f64::NEG_INFINITY,
    });
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
            .sum()
    }

    /// Points as `fpr,tpr,threshold` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
        }
        out
    }
}

/// Trapezoidal AUC of the ROC curve of `scores`.
pub fn auc(labels: &[Label], scores: &[f64]) -> Result<f64> {
    Ok(roc(labels, scores)?.auc())
}

/// `P(score+ > score-) + 0.5 P(score+ = score-)` from mid-ranks.
pub fn auc_mann_whitney(labels: &[Label], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = class_counts(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_block = order[i..j].iter().filter(|&&k| labels[k].is_fraud()).count();
        rank_sum += mid_rank * pos_in_block as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Rounds to `dp` decimal places.
pub fn round_dp(x: f64, dp: i32) -> f64 {
    let f = 10f64.powi(dp);
    (x * f).round() / f
}

/// Rounds to 15 significant digits.
pub fn round_sig15(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.14e}").parse().unwrap_or(x)
}

/// One metric as reported: raw value and its 4-dp rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportedValue {
    pub raw: Option<f64>,
    pub rounded: Option<f64>,
}

impl ReportedValue {
    pub fn new(v: Option<f64>) -> Self {
        ReportedValue {
            raw: v.map(round_sig15),
            rounded: v.map(|x| round_dp(x, 4)),
        }
    }
}

/// Machine-readable evaluation report for one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub dataset: String,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub sensitivity: ReportedValue,
    pub specificity: ReportedValue,
    pub precision: ReportedValue,
    pub accuracy: ReportedValue,
    pub f1: ReportedValue,
    pub auc: ReportedValue,
}

impl EvaluationReport {
    pub fn build(
        model: &str,
        dataset: &str,
        threshold: f64,
        labels: &[Label],
        scores: &[f64],
    ) -> Result<(Self, RocCurve)> {
        let preds: Vec<Label> = scores
            .iter()
            .map(|&s| Label::from_fraud(s > threshold))
            .collect();
        let cm = confusion(labels, &preds)?;
        let m = metrics(&cm);
        let curve = roc(labels, scores)?;
        let report = EvaluationReport {
            model: model.to_string(),
            dataset: dataset.to_string(),
            threshold,
            confusion: cm,
            sensitivity: ReportedValue::new(m.sensitivity),
            specificity: ReportedValue::new(m.specificity),
            precision: ReportedValue::new(m.precision),
            accuracy: ReportedValue::new(m.accuracy),
            f1: ReportedValue::new(m.f1),
            auc: ReportedValue::new(Some(curve.auc())),
        };
        Ok((report, curve))
    }

    pub fn named(&self) -> [(&'static str, ReportedValue); 6] {
        [
            ("Sensitivity", self.sensitivity),
            ("Specificity", self.specificity),
            ("Precision", self.precision),
            ("Accuracy", self.accuracy),
            ("F1 Score", self.f1),
            ("AUC", self.auc),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plain-text confusion matrix (rows = prediction) and metric table.
    pub fn to_text(&self) -> String {
        let cm = &self.confusion;
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", self.model);
        let _ = writeln!(out, "dataset: {}", self.dataset);
        let _ = writeln!(out, "threshold: {}", self.threshold);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12}{:>12}{:>12}", "Prediction", "Fraud", "Not-Fraud");
        let _ = writeln!(out, "{:<12}{:>12}{:>12}", "Fraud", cm.tp, cm.fp);
        let _ = writeln!(out, "{:<12}{:>12}{:>12}", "Not-Fraud", cm.fn_, cm.tn);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12}{:>10}  Raw", "Measure", "Value");
        for (name, v) in self.named() {
            let _ = writeln!(out, "{:<12}{:>10}  {}", name, fmt4(v.rounded), fmt_raw(v.raw));
        }
        out
    }
}

pub(crate) fn fmt4(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

pub(crate) fn fmt_raw(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x}"))
}

/// Self-contained SVG plot of one or more ROC curves with the AUC in the legend.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    const W: f64 = 480.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
    let side = W - 2.0 * PAD;
    let x = |fpr: f64| PAD + fpr * side;
    let y = |tpr: f64| W - PAD - tpr * side;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{W}" viewBox="0 0 {W} {W}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{W}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{side}" height="{side}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text>"#,
            x(t),
            W - PAD + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.1}</text>"#,
            PAD - 6.0,
            y(t) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">False positive rate (1 - specificity)</text>"#,
        W / 2.0,
        W - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">True positive rate (sensitivity)</text>"#,
        W / 2.0,
        W / 2.0
    );
    for (k, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = thin(&curve.points)
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = W - PAD - 16.0 - 18.0 * (curves.len() - 1 - k) as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            x(0.45),
            x(0.52)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{} (AUC = {:.4})</text>"#,
            x(0.54),
            ly + 4.0,
            escape(name),
            curve.auc()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Drops points that would land within a fraction of a pixel of their
/// predecessor. Endpoints are always kept.
fn thin(points: &[RocPoint]) -> Vec<RocPoint> {
    let mut out: Vec<RocPoint> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let keep = match out.last() {
            None => true,
            Some(q) => i + 1 == points.len() || (p.fpr - q.fpr).abs() + (p.tpr - q.tpr).abs() > 1e-3,
        };
        if keep {
            out.push(*p);
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fraud as F, NotFraud as N};

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[F, N, F], &[F, N, F]).unwrap(), ConfusionMatrix::new(2, 0, 0, 1));
        assert_eq!(confusion(&[F, N], &[N, F]).unwrap(), ConfusionMatrix::new(0, 1, 1, 0));
        assert!(confusion(&[F], &[]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn perfect_matrix() {
        let m = metrics(&ConfusionMatrix::new(1, 0, 0, 1));
        for (_, v) in m.named() {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn undefined_metrics() {
        let m = metrics(&ConfusionMatrix::new(0, 0, 0, 5));
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(m.accuracy, Some(1.0));
    }

    #[test]
    fn four_point_roc() {
        let labels = [F, N, F, N];
        let scores = [0.8, 0.7, 0.6, 0.2];
        let c = roc(&labels, &scores).unwrap();
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(c.auc(), 0.75);
        assert_eq!(auc_mann_whitney(&labels, &scores).unwrap(), 0.75);
    }

    #[test]
    fn tied_and_separated_scores() {
        let labels = [F, N, F, N, N];
        let c = roc(&labels, &[0.3; 5]).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.auc(), 0.5);
        assert_eq!(auc_mann_whitney(&labels, &[0.3; 5]).unwrap(), 0.5);

        let sep = [0.9, 0.1, 0.8, 0.2, 0.3];
        let c = roc(&labels, &sep).unwrap();
        assert!(c.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(c.auc(), 1.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(roc(&[F, F], &[0.1, 0.2]).is_err());
        assert!(auc_mann_whitney(&[N], &[0.1]).is_err());
    }

    #[test]
    fn roc_points_match_strict_threshold_rule() {
        let labels = [F, N, F, N, F, N, N];
        let scores = [0.9, 0.9, 0.4, 0.1, 0.4, 0.7, 0.0];
        let c = roc(&labels, &scores).unwrap();
        for p in &c.points {
            let preds: Vec<Label> = scores.iter().map(|&s| Label::from_fraud(s > p.threshold)).collect();
            let cm = confusion(&labels, &preds).unwrap();
            assert_eq!(p.tpr, cm.tp as f64 / 3.0);
            assert_eq!(p.fpr, cm.fp as f64 / 4.0);
        }
    }

    #[test]
    fn report_rendering_is_stable() {
        let labels = [F, N, F, N];
        let scores = [0.8, 0.7, 0.6, 0.2];
        let (r, c) = EvaluationReport::build("m", "d", 0.65, &labels, &scores).unwrap();
        assert_eq!(r.confusion, ConfusionMatrix::new(1, 1, 1, 1));
        assert_eq!(r.auc.rounded, Some(0.75));
        assert!(r.to_text().contains("F1 Score"));
        let back: EvaluationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let svg = roc_svg(&[("m", &c)]);
        assert!(svg.contains("AUC = 0.7500"));
        assert_eq!(svg, roc_svg(&[("m", &c)]));
    }

    #[test]
    fn sig15_rounding() {
        assert_eq!(round_sig15(0.123_456_789_012_345_67), 0.123456789012346);
        assert_eq!(round_sig15(0.0), 0.0);
    }
}
