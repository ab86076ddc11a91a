use std::collections::BTreeSet;

use fraudchain::data::{
    read_dataset_from, split_train_test, train_size, write_dataset_to, BenefitType, ClaimRecord, Dataset,
    HospitalType, Label,
};
use fraudchain::eval::{auc, confusion, roc};
use fraudchain::markov::fit_markov;
use proptest::prelude::*;

fn arb_claim() -> impl Strategy<Value = ClaimRecord> {
    (
        "[A-Z][0-9]{1,6}",
        any::<bool>(),
        0u32..400,
        "[MS][0-9]{1,2}",
        any::<bool>(),
        0.0f64..1e7,
        "P[0-9]{4}",
        "D[0-9]{2}",
        0.0f64..1e7,
        any::<bool>(),
    )
        .prop_map(|(id, surg, days, diag, public, net, prov, dist, paid, fraud)| ClaimRecord {
            claim_id: id,
            benefit_type: if surg { BenefitType::Surgical } else { BenefitType::Medical },
            days_stayed: days,
            diagnosis_code: diag,
            hospital_type: if public { HospitalType::Public } else { HospitalType::Private },
            net_amount: net,
            provider_id: prov,
            hospital_district: dist,
            amount_paid_to_hospital: paid,
            label: Label::from_fraud(fraud),
        })
}

fn labelled_scores(max: usize) -> impl Strategy<Value = (Vec<Label>, Vec<f64>)> {
    prop::collection::vec((any::<bool>(), 0u8..20), 2..max).prop_map(|v| {
        let mut labels: Vec<Label> = v.iter().map(|&(f, _)| Label::from_fraud(f)).collect();
        labels[0] = Label::Fraud;
        labels[1] = Label::NotFraud;
        (labels, v.iter().map(|&(_, s)| f64::from(s) / 20.0).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_partition(n in 2usize..400, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let records: Vec<ClaimRecord> = (0..n)
            .map(|i| ClaimRecord { claim_id: format!("C{i}"), ..template() })
            .collect();
        let data = Dataset::new(records, "memory");
        let s = split_train_test(&data, ratio, seed).unwrap();
        prop_assert_eq!(s.train.len(), train_size(n, ratio));
        prop_assert_eq!(s.train.len() + s.test.len(), n);
        let ids: BTreeSet<&str> = s.train.records.iter().chain(&s.test.records).map(|r| r.claim_id.as_str()).collect();
        prop_assert_eq!(ids.len(), n);
    }

    #[test]
    fn csv_round_trip(mut records in prop::collection::vec(arb_claim(), 0..40)) {
        // ids must be unique in a file
        for (i, r) in records.iter_mut().enumerate() {
            r.claim_id = format!("{}-{i}", r.claim_id);
        }
        let data = Dataset::new(records, "memory");
        let mut buf = Vec::new();
        write_dataset_to(&data, &mut buf).unwrap();
        let back = read_dataset_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.records, data.records);
    }

    #[test]
    fn roc_invariant_under_monotone_transform((labels, scores) in labelled_scores(200)) {
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let a = roc(&labels, &scores).unwrap();
        let b = roc(&labels, &warped).unwrap();
        let pts = |c: &fraudchain::eval::RocCurve| c.points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>();
        prop_assert_eq!(pts(&a), pts(&b));
        prop_assert_eq!(auc(&labels, &scores).unwrap(), auc(&labels, &warped).unwrap());
    }

    #[test]
    fn confusion_recounts((labels, scores) in labelled_scores(300), t in 0.0f64..1.0) {
        let preds: Vec<Label> = scores.iter().map(|&s| Label::from_fraud(s > t)).collect();
        let cm = confusion(&labels, &preds).unwrap();
        let count = |l: Label, p: Label| labels.iter().zip(&preds).filter(|&(&a, &b)| a == l && b == p).count() as u64;
        prop_assert_eq!(cm.tp, count(Label::Fraud, Label::Fraud));
        prop_assert_eq!(cm.fp, count(Label::NotFraud, Label::Fraud));
        prop_assert_eq!(cm.fn_, count(Label::Fraud, Label::NotFraud));
        prop_assert_eq!(cm.tn, count(Label::NotFraud, Label::NotFraud));
        prop_assert_eq!(cm.total() as usize, labels.len());
    }

    #[test]
    fn smoothing_moves_toward_half(flags in prop::collection::vec(any::<bool>(), 1..60), alpha in 0.01f64..50.0) {
        let order = vec!["f".to_string()];
        let tuples = vec![vec!["x".to_string()]; flags.len()];
        let labels: Vec<Label> = flags.iter().map(|&f| Label::from_fraud(f)).collect();
        let raw = fit_markov(&tuples, &labels, &order, 0.0).unwrap();
        let smooth = fit_markov(&tuples, &labels, &order, alpha).unwrap();
        let s = |m: &fraudchain::markov::MarkovFraudModel| m.score_state(m.state(&tuples[0]).unwrap());
        let (r, m) = (s(&raw), s(&smooth));
        prop_assert!((m - 0.5).abs() <= (r - 0.5).abs() + 1e-15);
        prop_assert!((m - 0.5) * (r - 0.5) >= 0.0);
    }
}

fn template() -> ClaimRecord {
    ClaimRecord {
        claim_id: "C0".into(),
        benefit_type: BenefitType::Medical,
        days_stayed: 1,
        diagnosis_code: "M1".into(),
        hospital_type: HospitalType::Public,
        net_amount: 10.0,
        provider_id: "P0001".into(),
        hospital_district: "D01".into(),
        amount_paid_to_hospital: 9.5,
        label: Label::NotFraud,
    }
}
