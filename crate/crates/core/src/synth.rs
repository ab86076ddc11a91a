//! Seeded generator of imbalanced synthetic health-insurance claims.
//!
//! Feature marginals:
//!
//! * `benefit_type`: SURGICAL with probability 0.35.
//! * `days_stayed`: geometric, mean 4 days (medical) or ~2.3 days (surgical), capped at 60.
//! * `diagnosis_code`: the vocabulary is split into `M` codes and `S` codes. A claim
//!   draws from the block matching its benefit type 90% of the time, Zipf(1.1) within the block.
//! * `provider_id`: Zipf(0.9) over `P0001..`. Providers with index divisible by 3 are
//!   public hospitals. Each provider has a home district used for 85% of its claims.
//! * `net_amount`: log-normal, log-mean 10.0 (medical) or 10.5 (surgical), log-sd 0.7.
//! * `amount_paid_to_hospital`: `net_amount * exp(0.25 * e)` with `e` standard normal.
//!
//! Fraud score `s` (centered over the generated set before use):
//!
//! ```text
//! s = 0.7 * z_net                      standardized log net amount
//!   + 1.0 * [SURGICAL and days <= 1]   short surgical stay
//!   + 0.6 * [diagnosis index % 5 == 3]
//!   + 0.4 * [Private hospital]
//!   + 1.5 * [provider index % 10 == 7] risky provider
//!   + 0.8 * [district index % 6 == 0]  risky district
//!   + 0.8 * e                          hospital billing inflation
//! ```
//!
//! The first four terms are visible to the Markov features; the last three
//! only to the boosted trees. A claim's fraud log-odds are
//! `logit(fraud_rate) + signal_strength * s + c`, where the constant `c` is
//! solved by bisection so the expected fraud count is exactly
//! `n * fraud_rate` (`c = 0` when `signal_strength = 0`). With `exact_counts`
//! the `round(n * fraud_rate)` claims with the largest latent propensity
//! (log-odds plus standard logistic noise) are labelled fraud.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};

use crate::data::{BenefitType, ClaimRecord, Dataset, HospitalType, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n_claims: usize,
    pub fraud_rate: f64,
    pub signal_strength: f64,
    pub exact_counts: bool,
    pub seed: u64,
    pub n_diagnosis_codes: usize,
    pub n_providers: usize,
    pub n_districts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_claims: 10_000,
            fraud_rate: 0.0995,
            signal_strength: 1.5,
            exact_counts: true,
            seed: 7,
            n_diagnosis_codes: 40,
            n_providers: 300,
            n_districts: 30,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_claims == 0 {
            return bad("n_claims must be at least 1".into());
        }
        if !(self.fraud_rate > 0.0 && self.fraud_rate < 1.0) {
            return bad(format!("fraud_rate must be in (0, 1), got {}", self.fraud_rate));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad(format!(
                "signal_strength must be finite and >= 0, got {}",
                self.signal_strength
            ));
        }
        if self.n_diagnosis_codes < 2 {
            return bad("n_diagnosis_codes must be at least 2".into());
        }
        if self.n_providers == 0 || self.n_districts == 0 {
            return bad("n_providers and n_districts must be positive".into());
        }
        Ok(())
    }

    /// Fraud count under `exact_counts`.
    pub fn exact_fraud_count(&self) -> usize {
        (self.n_claims as f64 * self.fraud_rate).round() as usize
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn zipf_index(dist: &Zipf<f64>, rng: &mut impl Rng) -> usize {
    dist.sample(rng) as usize
}

/// Bisection for `c` with `mean(sigmoid(base + c + scores)) = target`.
fn calibrate_offset(base: f64, scores: &[f64], target: f64) -> f64 {
    let mean_p = |c: f64| scores.iter().map(|s| sigmoid(base + c + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let m_codes = config.n_diagnosis_codes / 2;
    let s_codes = config.n_diagnosis_codes - m_codes;
    let zipf = |n: usize, s: f64| Zipf::new(n as f64, s).expect("vocabulary size validated");
    let m_dist = zipf(m_codes, 1.1);
    let s_dist = zipf(s_codes, 1.1);
    let provider_dist = zipf(config.n_providers, 0.9);
    let medical_days = Geometric::new(0.2).expect("constant");
    let surgical_days = Geometric::new(0.3).expect("constant");

    let n = config.n_claims;
    let mut records = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);

    for i in 0..n {
        let surgical = rng.random_bool(0.35);
        let benefit_type = if surgical { BenefitType::Surgical } else { BenefitType::Medical };

        let days = if surgical {
            surgical_days.sample(&mut rng)
        } else {
            medical_days.sample(&mut rng)
        };
        let days_stayed = days.min(60) as u32;

        let own_block = rng.random_bool(0.9);
        let use_surgical_codes = surgical == own_block;
        let (prefix, diag_index) = if use_surgical_codes {
            ('S', zipf_index(&s_dist, &mut rng))
        } else {
            ('M', zipf_index(&m_dist, &mut rng))
        };

        let provider = zipf_index(&provider_dist, &mut rng);
        let hospital_type = if provider % 3 == 0 { HospitalType::Public } else { HospitalType::Private };
        let district = if rng.random_bool(0.85) {
            (provider * 7) % config.n_districts + 1
        } else {
            rng.random_range(1..=config.n_districts)
        };

        let log_mean = if surgical { 10.5 } else { 10.0 };
        let net_raw: f64 = LogNormal::new(log_mean, 0.7).expect("constant").sample(&mut rng);
        let net_amount = (net_raw * 100.0).round() / 100.0;
        let inflation: f64 = StandardNormal.sample(&mut rng);
        let paid_raw = net_raw * (0.25 * inflation).exp();
        let amount_paid_to_hospital = (paid_raw * 100.0).round() / 100.0;

        let z_net = (net_raw.ln() - log_mean) / 0.7;
        let indicator = |b: bool| if b { 1.0 } else { 0.0 };
        let score = 0.7 * z_net
            + 1.0 * indicator(surgical && days_stayed <= 1)
            + 0.6 * indicator(diag_index % 5 == 3)
            + 0.4 * indicator(hospital_type == HospitalType::Private)
            + 1.5 * indicator(provider % 10 == 7)
            + 0.8 * indicator(district % 6 == 0)
            + 0.8 * inflation;
        scores.push(score);

        records.push(ClaimRecord {
            claim_id: format!("C{:07}", i + 1),
            benefit_type,
            days_stayed,
            diagnosis_code: format!("{prefix}{diag_index}"),
            hospital_type,
            net_amount,
            provider_id: format!("P{provider:04}"),
            hospital_district: format!("D{district:02}"),
            amount_paid_to_hospital,
            label: Label::NotFraud,
        });
    }

    let mean = scores.iter().sum::<f64>() / n as f64;
    let base = logit(config.fraud_rate);
    let shifted: Vec<f64> = scores
        .iter()
        .map(|s| config.signal_strength * (s - mean))
        .collect();

    if config.exact_counts {
        let k = config.exact_fraud_count();
        let mut keyed: Vec<(f64, u64, usize)> = shifted
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                (base + s + logit(u), rng.next_u64(), i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        for &(_, _, i) in keyed.iter().take(k) {
            records[i].label = Label::Fraud;
        }
    } else {
        let offset = if config.signal_strength == 0.0 {
            0.0
        } else {
            calibrate_offset(base, &shifted, config.fraud_rate)
        };
        for (r, s) in records.iter_mut().zip(&shifted) {
            let p = sigmoid(base + offset + s);
            r.label = Label::from_fraud(rng.random::<f64>() < p);
        }
    }

    Ok(Dataset::new(
        records,
        format!(
            "synthetic n={} fraud_rate={} signal={} exact={} seed={}",
            config.n_claims, config.fraud_rate, config.signal_strength, config.exact_counts, config.seed
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> GenConfig {
        GenConfig {
            n_claims: n,
            ..GenConfig::default()
        }
    }

    #[test]
    fn exact_count_at_full_scale() {
        let c = GenConfig {
            n_claims: 382_587,
            fraud_rate: 0.0995,
            exact_counts: true,
            ..GenConfig::default()
        };
        // 382,587 * 0.0995 = 38,067.4
        assert_eq!(c.exact_fraud_count(), 38_067);
        let ds = generate(&c).unwrap();
        assert_eq!(ds.len(), 382_587);
        assert_eq!(ds.fraud_count(), 38_067);
        assert!((ds.fraud_rate() * 100.0 - 9.95).abs() < 0.005);
    }

    #[test]
    fn binomial_label_rate_without_exact_counts() {
        for seed in [1, 2, 3] {
            for signal in [0.0, 1.5] {
                let c = GenConfig {
                    n_claims: 20_000,
                    exact_counts: false,
                    signal_strength: signal,
                    seed,
                    ..GenConfig::default()
                };
                let ds = generate(&c).unwrap();
                let expected = c.n_claims as f64 * c.fraud_rate;
                let sd = (expected * (1.0 - c.fraud_rate)).sqrt();
                let got = ds.fraud_count() as f64;
                assert!((got - expected).abs() <= 4.0 * sd, "seed {seed} signal {signal}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate(&cfg(2_000)).unwrap();
        let b = generate(&cfg(2_000)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        for r in &a.records {
            assert!(r.days_stayed <= 60);
            assert!(r.net_amount >= 0.0 && r.amount_paid_to_hospital >= 0.0);
        }
        let c = generate(&GenConfig { seed: 8, ..cfg(2_000) }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn rejects_invalid_config() {
        for bad in [
            GenConfig { fraud_rate: 1.5, ..cfg(10) },
            GenConfig { fraud_rate: 0.0, ..cfg(10) },
            GenConfig { n_claims: 0, ..cfg(10) },
            GenConfig { signal_strength: -1.0, ..cfg(10) },
            GenConfig { n_providers: 0, ..cfg(10) },
        ] {
            assert!(matches!(generate(&bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn vocabulary_respected() {
        let ds = generate(&GenConfig {
            n_diagnosis_codes: 4,
            n_providers: 5,
            n_districts: 2,
            ..cfg(3_000)
        })
        .unwrap();
        for r in &ds.records {
            assert!(["M1", "M2", "S1", "S2"].contains(&r.diagnosis_code.as_str()), "{}", r.diagnosis_code);
            assert!(["D01", "D02"].contains(&r.hospital_district.as_str()));
            let p: usize = r.provider_id[1..].parse().unwrap();
            assert!((1..=5).contains(&p));
        }
    }
}
