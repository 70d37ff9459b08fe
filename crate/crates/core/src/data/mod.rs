//! Datasets, preprocessing transforms, stratified splitting and the planted
//! three-tier manifold generator.

mod preprocess;
mod split;
mod synthetic;

pub use preprocess::{
    inverse_transform, preprocess_apply, preprocess_apply_matrix, preprocess_fit, quantile,
    FeatureStats, PreprocessStats, DEFAULT_CLIP_QUANTILES,
};
pub use split::{stratified_folds, stratified_split};
pub use synthetic::{generate_synthetic_manifold, GeneratorConfig, PlantedGroundTruth};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// How a feature is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    /// Binary indicator; raw values in {0, 1}.
    Flag,
}

/// Labelled samples: `x` is `N x D`, `y` holds 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        y: Vec<u8>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
    ) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::data(alloc::format!(
                "{} labels for {} samples",
                y.len(),
                x.rows()
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::data(alloc::format!("label {bad} is not 0/1")));
        }
        if feature_names.len() != x.cols() || feature_kinds.len() != x.cols() {
            return Err(Error::data(alloc::format!(
                "{} feature names / {} kinds for {} columns",
                feature_names.len(),
                feature_kinds.len(),
                x.cols()
            )));
        }
        for (i, a) in feature_names.iter().enumerate() {
            if feature_names[..i].contains(a) {
                return Err(Error::data(alloc::format!("duplicate feature name '{a}'")));
            }
        }
        Ok(Dataset {
            x,
            y,
            feature_names,
            feature_kinds,
        })
    }

    /// Dataset with generated names `f0..f{D-1}`, every feature continuous.
    pub fn with_default_names(x: Matrix, y: Vec<u8>) -> Result<Self> {
        let names = (0..x.cols()).map(|j| alloc::format!("f{j}")).collect();
        let kinds = alloc::vec![FeatureKind::Continuous; x.cols()];
        Dataset::new(x, y, names, kinds)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn prevalence(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.n_positive() as f64 / self.len() as f64
        }
    }

    /// Rows at `idx`, in the order given.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
        }
    }

    /// Samples with label `label`.
    pub fn class(&self, label: u8) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.y[i] == label).collect();
        self.subset(&idx)
    }

    /// Row-wise concatenation; schemas must match.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::data("cannot concatenate datasets with different schemas"));
        }
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(Dataset {
            x: self.x.vcat(&other.x)?,
            y,
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
        })
    }

    /// Same schema, no rows.
    pub fn empty_like(&self) -> Dataset {
        Dataset {
            x: Matrix::zeros(0, self.n_features()),
            y: Vec::new(),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn rejects_bad_labels_and_names() {
        let x = Matrix::zeros(2, 2);
        assert!(Dataset::with_default_names(x.clone(), vec![0, 2]).is_err());
        assert!(Dataset::with_default_names(x.clone(), vec![0]).is_err());
        let dup = Dataset::new(
            x,
            vec![0, 1],
            vec!["a".to_string(), "a".to_string()],
            vec![FeatureKind::Continuous; 2],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn concat_and_class() {
        let a = Dataset::with_default_names(Matrix::filled(2, 3, 1.0), vec![0, 1]).unwrap();
        let b = Dataset::with_default_names(Matrix::filled(1, 3, 2.0), vec![1]).unwrap();
        let c = a.concat(&b).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.n_positive(), 2);
        assert_eq!(c.class(1).len(), 2);
        assert_eq!(a.concat(&a.empty_like()).unwrap(), a);
    }
}
