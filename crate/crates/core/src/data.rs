//! Claim records, the dataset file format and the seeded train/test split.
//!
//! The on-disk format is comma-separated UTF-8 with the header
//!
//! ```text
//! claim_id,benefit_type,days_stayed,diagnosis_code,hospital_type,net_amount,provider_id,hospital_district,amount_paid_to_hospital,label
//! ```
//!
//! Extra columns after these are accepted and ignored. Money amounts are written
//! with the shortest decimal representation that parses back to the same `f64`,
//! so a write/read cycle is lossless.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: [&str; 10] = [
    "claim_id",
    "benefit_type",
    "days_stayed",
    "diagnosis_code",
    "hospital_type",
    "net_amount",
    "provider_id",
    "hospital_district",
    "amount_paid_to_hospital",
    "label",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BenefitType {
    Medical,
    Surgical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HospitalType {
    Private,
    Public,
}

/// Claim class. `Fraud` is the positive class everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Fraud,
    NotFraud,
}

impl Label {
    pub fn is_fraud(self) -> bool {
        self == Label::Fraud
    }

    /// 1.0 for fraud, 0.0 otherwise.
    pub fn as_target(self) -> f64 {
        if self.is_fraud() {
            1.0
        } else {
            0.0
        }
    }

    pub fn from_fraud(fraud: bool) -> Self {
        if fraud {
            Label::Fraud
        } else {
            Label::NotFraud
        }
    }
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $text,)+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!(
                        "expected one of {}, got `{}`",
                        [$($text),+].join("/"),
                        other
                    )),
                }
            }
        }
    };
}

text_enum!(BenefitType { Medical => "MEDICAL", Surgical => "SURGICAL" });
text_enum!(HospitalType { Private => "Private", Public => "Public" });
text_enum!(Label { Fraud => "FRAUD", NotFraud => "NOT_FRAUD" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub benefit_type: BenefitType,
    pub days_stayed: u32,
    pub diagnosis_code: String,
    pub hospital_type: HospitalType,
    pub net_amount: f64,
    pub provider_id: String,
    pub hospital_district: String,
    pub amount_paid_to_hospital: f64,
    pub label: Label,
}

/// The model inputs a claim exposes. Numeric features are binned for the
/// Markov model and passed through raw to the boosted trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimFeature {
    BenefitType,
    DaysStayed,
    DiagnosisCode,
    HospitalType,
    NetAmount,
    ProviderId,
    HospitalDistrict,
    AmountPaidToHospital,
}

/// A feature value pulled out of a claim.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue<'a> {
    Numeric(f64),
    Category(&'a str),
}

impl ClaimFeature {
    pub const ALL: [ClaimFeature; 8] = [
        ClaimFeature::BenefitType,
        ClaimFeature::DaysStayed,
        ClaimFeature::DiagnosisCode,
        ClaimFeature::HospitalType,
        ClaimFeature::NetAmount,
        ClaimFeature::ProviderId,
        ClaimFeature::HospitalDistrict,
        ClaimFeature::AmountPaidToHospital,
    ];

    /// The five chained features of the Markov state model.
    pub const MARKOV: [ClaimFeature; 5] = [
        ClaimFeature::BenefitType,
        ClaimFeature::DaysStayed,
        ClaimFeature::DiagnosisCode,
        ClaimFeature::HospitalType,
        ClaimFeature::NetAmount,
    ];

    /// Markov features plus provider, district and amount paid to the hospital.
    pub const GBM: [ClaimFeature; 8] = ClaimFeature::ALL;

    pub fn name(self) -> &'static str {
        match self {
            ClaimFeature::BenefitType => "benefit_type",
            ClaimFeature::DaysStayed => "days_stayed",
            ClaimFeature::DiagnosisCode => "diagnosis_code",
            ClaimFeature::HospitalType => "hospital_type",
            ClaimFeature::NetAmount => "net_amount",
            ClaimFeature::ProviderId => "provider_id",
            ClaimFeature::HospitalDistrict => "hospital_district",
            ClaimFeature::AmountPaidToHospital => "amount_paid_to_hospital",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            ClaimFeature::DaysStayed | ClaimFeature::NetAmount | ClaimFeature::AmountPaidToHospital
        )
    }

    pub fn value(self, claim: &ClaimRecord) -> FeatureValue<'_> {
        match self {
            ClaimFeature::BenefitType => FeatureValue::Category(claim.benefit_type.as_str()),
            ClaimFeature::DaysStayed => FeatureValue::Numeric(f64::from(claim.days_stayed)),
            ClaimFeature::DiagnosisCode => FeatureValue::Category(&claim.diagnosis_code),
            ClaimFeature::HospitalType => FeatureValue::Category(claim.hospital_type.as_str()),
            ClaimFeature::NetAmount => FeatureValue::Numeric(claim.net_amount),
            ClaimFeature::ProviderId => FeatureValue::Category(&claim.provider_id),
            ClaimFeature::HospitalDistrict => FeatureValue::Category(&claim.hospital_district),
            ClaimFeature::AmountPaidToHospital => {
                FeatureValue::Numeric(claim.amount_paid_to_hospital)
            }
        }
    }
}

impl fmt::Display for ClaimFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClaimFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClaimFeature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<ClaimRecord>,
    /// Where the records came from: a file path or a generator description.
    pub provenance: String,
}

impl Dataset {
    pub fn new(records: Vec<ClaimRecord>, provenance: impl Into<String>) -> Self {
        Dataset {
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fraud_count(&self) -> usize {
        self.records.iter().filter(|r| r.label.is_fraud()).count()
    }

    pub fn not_fraud_count(&self) -> usize {
        self.len() - self.fraud_count()
    }

    /// Fraud share in [0, 1]; 0 for an empty dataset.
    pub fn fraud_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.fraud_count() as f64 / self.len() as f64
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Checks the record invariants: unique ids, finite non-negative amounts.
    /// Reported row numbers are 1-based data rows offset by the header line.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            let row = i + 2;
            if !seen.insert(r.claim_id.as_str()) {
                return Err(row_error(row, "claim_id", format!("duplicate claim_id `{}`", r.claim_id)));
            }
            check_amount(row, "net_amount", r.net_amount)?;
            check_amount(row, "amount_paid_to_hospital", r.amount_paid_to_hospital)?;
        }
        Ok(())
    }
}

fn row_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Row {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn check_amount(row: usize, column: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        Err(row_error(row, column, format!("amount {v} is not finite")))
    } else if v < 0.0 {
        Err(row_error(row, column, format!("negative amount {v}")))
    } else {
        Ok(())
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_dataset_from(file)?;
    ds.provenance = path.display().to_string();
    Ok(ds)
}

/// Parses a dataset from any reader. Errors carry the 1-based file line.
pub fn read_dataset_from<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let mut columns = [0usize; HEADER.len()];
    for (slot, name) in columns.iter_mut().zip(HEADER) {
        let hits: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => *slot = *i,
            [] => return Err(Error::Header(format!("missing column `{name}`"))),
            _ => return Err(Error::Header(format!("duplicate column `{name}`"))),
        }
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(records.len() + 2);
        let field = |k: usize| rec.get(columns[k]).unwrap_or("");

        let claim_id = field(0).to_string();
        if claim_id.is_empty() {
            return Err(row_error(row, HEADER[0], "empty claim_id"));
        }
        if !seen.insert(claim_id.clone()) {
            return Err(row_error(row, HEADER[0], format!("duplicate claim_id `{claim_id}`")));
        }
        let benefit_type = field(1)
            .parse::<BenefitType>()
            .map_err(|m| row_error(row, HEADER[1], m))?;
        let days_stayed = field(2).parse::<u32>().map_err(|_| {
            row_error(
                row,
                HEADER[2],
                format!("expected a non-negative integer, got `{}`", field(2)),
            )
        })?;
        let hospital_type = field(4)
            .parse::<HospitalType>()
            .map_err(|m| row_error(row, HEADER[4], m))?;
        let net_amount = parse_amount(row, HEADER[5], field(5))?;
        let amount_paid_to_hospital = parse_amount(row, HEADER[8], field(8))?;
        let label = field(9).parse::<Label>().map_err(|m| row_error(row, HEADER[9], m))?;

        records.push(ClaimRecord {
            claim_id,
            benefit_type,
            days_stayed,
            diagnosis_code: field(3).to_string(),
            hospital_type,
            net_amount,
            provider_id: field(6).to_string(),
            hospital_district: field(7).to_string(),
            amount_paid_to_hospital,
            label,
        });
    }
    Ok(Dataset::new(records, String::new()))
}

fn parse_amount(row: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| row_error(row, column, format!("expected a number, got `{raw}`")))?;
    check_amount(row, column, v)?;
    Ok(v)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset_to(dataset, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset_to<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in &dataset.records {
        w.write_record([
            r.claim_id.as_str(),
            r.benefit_type.as_str(),
            &r.days_stayed.to_string(),
            &r.diagnosis_code,
            r.hospital_type.as_str(),
            &r.net_amount.to_string(),
            &r.provider_id,
            &r.hospital_district,
            &r.amount_paid_to_hospital.to_string(),
            r.label.as_str(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Dataset,
    pub test: Dataset,
    pub ratio: f64,
    pub seed: u64,
}

/// Number of training records for `n` records at `ratio`: `floor(ratio * n)`.
pub fn train_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).floor() as usize
}

/// Seeded uniform permutation of `0..n`.
///
/// Fisher-Yates over a ChaCha8 stream seeded with `seed`. The bounded draw is
/// the multiply-shift reduction `(u64 * (i + 1)) >> 64`, which keeps the
/// permutation stable across platforms and `rand` releases.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Plain (unstratified) random split: the first `floor(ratio * n)` records of a
/// seeded permutation form the training set.
pub fn split_train_test(dataset: &Dataset, ratio: f64, seed: u64) -> Result<SplitResult> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    if dataset.is_empty() {
        return Err(Error::Input("cannot split an empty dataset".into()));
    }
    let perm = seeded_permutation(dataset.len(), seed);
    let cut = train_size(dataset.len(), ratio);
    let pick = |ids: &[usize]| ids.iter().map(|&i| dataset.records[i].clone()).collect();
    let tag = |part: &str| format!("{} [{part} split ratio={ratio} seed={seed}]", dataset.provenance);
    Ok(SplitResult {
        train: Dataset::new(pick(&perm[..cut]), tag("train")),
        test: Dataset::new(pick(&perm[cut..]), tag("test")),
        ratio,
        seed,
    })
}
