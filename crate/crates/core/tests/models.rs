use std::collections::BTreeMap;

use fraudchain::data::{read_dataset, write_dataset, ClaimFeature, Dataset};
use fraudchain::eval::{confusion, roc};
use fraudchain::gbm::{CategoricalEncoding, GbmDetector, GbmHyperparams, TreeSelection};
use fraudchain::markov::{classify, MarkovDetector, ScoringMode};
use fraudchain::pipeline::Detector;
use fraudchain::synth::{generate, GenConfig};

fn data(n: usize, seed: u64) -> Dataset {
    generate(&GenConfig {
        n_claims: n,
        seed,
        ..GenConfig::default()
    })
    .unwrap()
}

fn bins() -> BTreeMap<ClaimFeature, usize> {
    [(ClaimFeature::DaysStayed, 3), (ClaimFeature::NetAmount, 3)].into()
}

fn small_gbm(train: &Dataset, encoding: CategoricalEncoding) -> GbmDetector {
    let hp = GbmHyperparams {
        n_trees: 25,
        cv_folds: 3,
        seed: 1,
        ..GbmHyperparams::default()
    };
    GbmDetector::fit(train, &ClaimFeature::GBM, encoding, &hp, true, TreeSelection::Best, 0.5)
        .unwrap()
        .0
}

#[test]
fn markov_file_round_trip() {
    let train = data(3000, 1);
    let test = data(500, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    for scoring in [ScoringMode::State, ScoringMode::Chain] {
        let m = MarkovDetector::fit(&train, &ClaimFeature::MARKOV, &bins(), 1.0, 0.5, scoring).unwrap();
        m.save(&path).unwrap();
        let back = MarkovDetector::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.score_all(&test.records), m.score_all(&test.records));
        assert_eq!(back.to_toml().unwrap(), m.to_toml().unwrap());
    }
}

#[test]
fn gbm_file_round_trip() {
    let train = data(3000, 3);
    let test = data(500, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.toml");
    for enc in [CategoricalEncoding::Ordinal, CategoricalEncoding::OneHot] {
        let g = small_gbm(&train, enc);
        g.save(&path).unwrap();
        let back = GbmDetector::load(&path).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.score_all(&test.records), g.score_all(&test.records));
        match Detector::load(&path).unwrap() {
            Detector::Gbm(d) => assert_eq!(d, g),
            other => panic!("loaded as {}", other.kind()),
        }
    }
}

#[test]
fn refits_are_byte_identical() {
    let train = data(3000, 5);
    let a = small_gbm(&train, CategoricalEncoding::Ordinal).to_toml().unwrap();
    let b = small_gbm(&train, CategoricalEncoding::Ordinal).to_toml().unwrap();
    assert_eq!(a, b);
    let m = || {
        MarkovDetector::fit(&train, &ClaimFeature::MARKOV, &bins(), 1.0, 0.5, ScoringMode::State)
            .unwrap()
            .to_toml()
            .unwrap()
    };
    assert_eq!(m(), m());
}

#[test]
fn wrong_kind_and_corrupt_files_rejected() {
    let train = data(1000, 6);
    let m = MarkovDetector::fit(&train, &ClaimFeature::MARKOV, &bins(), 1.0, 0.5, ScoringMode::State).unwrap();
    let text = m.to_toml().unwrap();
    assert!(GbmDetector::from_toml(&text).is_err());
    assert!(MarkovDetector::from_toml(&text.replace("format_version = 1", "format_version = 99")).is_err());
    assert!(Detector::from_toml("kind = \"forest\"\n").is_err());
    assert!(Detector::from_toml("not toml at all [").is_err());
}

#[test]
fn dataset_file_round_trip() {
    let d = data(1000, 7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&d, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.records, d.records);
    assert_eq!(back.fraud_count(), d.fraud_count());
}

#[test]
fn markov_roc_matches_classify_sweep() {
    let train = data(4000, 8);
    let test = data(1500, 9);
    let m = MarkovDetector::fit(&train, &ClaimFeature::MARKOV, &bins(), 1.0, 0.5, ScoringMode::State).unwrap();
    let scores = m.score_all(&test.records);
    let labels = test.labels();
    let curve = roc(&labels, &scores).unwrap();
    let (pos, neg) = (test.fraud_count() as f64, test.not_fraud_count() as f64);
    for p in &curve.points {
        let preds: Vec<_> = scores.iter().map(|&s| classify(s, p.threshold)).collect();
        let cm = confusion(&labels, &preds).unwrap();
        assert_eq!(p.tpr, cm.tp as f64 / pos);
        assert_eq!(p.fpr, cm.fp as f64 / neg);
    }
}

#[test]
fn zero_trees_predict_the_base_rate() {
    let train = data(2000, 10);
    let hp = GbmHyperparams {
        n_trees: 0,
        ..GbmHyperparams::default()
    };
    let (g, cv) = GbmDetector::fit(
        &train,
        &ClaimFeature::GBM,
        CategoricalEncoding::Ordinal,
        &hp,
        true,
        TreeSelection::Best,
        0.5,
    )
    .unwrap();
    assert!(cv.is_none());
    for s in g.score_all(&data(50, 11).records) {
        assert!((s - train.fraud_rate()).abs() < 1e-12);
    }
}
