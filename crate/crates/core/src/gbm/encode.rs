use serde::{Deserialize, Serialize};

use crate::data::{ClaimFeature, ClaimRecord, FeatureValue};
use crate::error::{Error, Result};

/// Code given to categories not seen when the encoder was fitted.
pub const UNSEEN_CODE: f64 = -1.0;

/// Dense row-major matrix of model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Input(format!(
                "{} values do not fill a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(FeatureMatrix { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Input("ragged rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    /// One column per categorical feature holding its first-appearance code.
    #[default]
    Ordinal,
    /// One 0/1 column per training category.
    OneHot,
}

/// Maps claims onto numeric columns. Numeric features pass through;
/// categories get codes `0, 1, 2, ...` in order of first appearance in the
/// fitting data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub features: Vec<ClaimFeature>,
    pub encoding: CategoricalEncoding,
    /// Per feature, its categories in code order. Empty for numeric features.
    pub categories: Vec<Vec<String>>,
}

impl FeatureEncoder {
    pub fn fit(records: &[ClaimRecord], features: &[ClaimFeature], encoding: CategoricalEncoding) -> Self {
        let categories = features
            .iter()
            .map(|&f| {
                let mut seen: Vec<String> = Vec::new();
                let mut index = std::collections::HashSet::new();
                for r in records {
                    if let FeatureValue::Category(c) = f.value(r) {
                        if index.insert(c) {
                            seen.push(c.to_string());
                        }
                    }
                }
                seen
            })
            .collect();
        FeatureEncoder {
            features: features.to_vec(),
            encoding,
            categories,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (f, cats) in self.features.iter().zip(&self.categories) {
            match (f.is_numeric(), self.encoding) {
                (true, _) | (false, CategoricalEncoding::Ordinal) => names.push(f.name().to_string()),
                (false, CategoricalEncoding::OneHot) => {
                    names.extend(cats.iter().map(|c| format!("{}={c}", f.name())))
                }
            }
        }
        names
    }

    pub fn n_columns(&self) -> usize {
        self.features
            .iter()
            .zip(&self.categories)
            .map(|(f, cats)| match (f.is_numeric(), self.encoding) {
                (false, CategoricalEncoding::OneHot) => cats.len(),
                _ => 1,
            })
            .sum()
    }

    fn lookups(&self) -> Vec<std::collections::HashMap<&str, usize>> {
        self.categories
            .iter()
            .map(|cats| cats.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect())
            .collect()
    }

    pub fn encode(&self, records: &[ClaimRecord]) -> FeatureMatrix {
        let lookups = self.lookups();
        let n_cols = self.n_columns();
        let mut data = Vec::with_capacity(records.len() * n_cols);
        for r in records {
            for ((f, cats), lookup) in self.features.iter().zip(&self.categories).zip(&lookups) {
                match f.value(r) {
                    FeatureValue::Numeric(v) => data.push(v),
                    FeatureValue::Category(c) => {
                        let code = lookup.get(c).copied();
                        match self.encoding {
                            CategoricalEncoding::Ordinal => {
                                data.push(code.map_or(UNSEEN_CODE, |k| k as f64))
                            }
                            CategoricalEncoding::OneHot => {
                                data.extend((0..cats.len()).map(|k| if Some(k) == code { 1.0 } else { 0.0 }))
                            }
                        }
                    }
                }
            }
        }
        FeatureMatrix {
            n_rows: records.len(),
            n_cols,
            data,
        }
    }
}

pub fn encode_features(claims: &[ClaimRecord], encoder: &FeatureEncoder) -> FeatureMatrix {
    encoder.encode(claims)
}
