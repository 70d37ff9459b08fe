use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind};
use crate::{Error, Matrix, Result};

/// Default symmetric extreme-quantile clipping.
pub const DEFAULT_CLIP_QUANTILES: (f64, f64) = (0.005, 0.995);

/// Per-feature transform: clip → optional `ln(1+x)` → standardize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub log: bool,
    /// Mean in transformed (post-log) units.
    pub mean: f64,
    /// Standard deviation in transformed units; 1 for degenerate features.
    pub std: f64,
    /// Set when the feature had zero variance at fit time.
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default = "continuous")]
    pub kind: FeatureKind,
}

fn continuous() -> FeatureKind {
    FeatureKind::Continuous
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub features: Vec<FeatureStats>,
}

impl FeatureStats {
    /// Maps a raw value into standardized space.
    pub fn forward(&self, raw: f64) -> f64 {
        let clipped = raw.clamp(self.clip_lo, self.clip_hi);
        let t = if self.log { libm::log1p(clipped) } else { clipped };
        (t - self.mean) / self.std
    }

    /// Maps a standardized value back to raw units, inside the clip range.
    pub fn inverse(&self, z: f64) -> f64 {
        let t = z * self.std + self.mean;
        let raw = if self.log { libm::expm1(t) } else { t };
        raw.clamp(self.clip_lo, self.clip_hi)
    }

    /// Identity transform for a feature.
    pub fn identity(name: impl Into<String>) -> Self {
        FeatureStats {
            name: name.into(),
            clip_lo: f64::NEG_INFINITY,
            clip_hi: f64::INFINITY,
            log: false,
            mean: 0.0,
            std: 1.0,
            degenerate: false,
            kind: FeatureKind::Continuous,
        }
    }
}

impl PreprocessStats {
    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (the `(n - 1)·q` rule). `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Fits clip bounds, log flags and standardization statistics.
pub fn preprocess_fit(
    d: &Dataset,
    clip_quantiles: (f64, f64),
    log_features: &[String],
) -> Result<PreprocessStats> {
    let (qlo, qhi) = clip_quantiles;
    if !(0.0 <= qlo && qlo < qhi && qhi <= 1.0) {
        return Err(Error::invalid(format!(
            "clip quantiles must satisfy 0 <= lo < hi <= 1, got ({qlo}, {qhi})"
        )));
    }
    if d.is_empty() {
        return Err(Error::data("cannot fit preprocessing on an empty dataset"));
    }
    for name in log_features {
        if !d.feature_names.contains(name) {
            return Err(Error::data(format!("log feature '{name}' not in dataset")));
        }
    }
    let mut features = Vec::with_capacity(d.n_features());
    for (j, name) in d.feature_names.iter().enumerate() {
        let mut col = d.x.col(j);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("feature '{name}' has non-finite values")));
        }
        col.sort_by(f64::total_cmp);
        let kind = d.feature_kinds[j];
        // Flags are never clipped: their support is {0, 1}.
        let (clip_lo, clip_hi) = match kind {
            FeatureKind::Flag => (col[0], col[col.len() - 1]),
            FeatureKind::Continuous => (quantile(&col, qlo), quantile(&col, qhi)),
        };
        let log = log_features.contains(name);
        if log && clip_lo < 0.0 {
            return Err(Error::data(format!(
                "feature '{name}' has negative values entering the log transform (min after clipping {clip_lo})"
            )));
        }
        let transformed: Vec<f64> = d
            .x
            .col(j)
            .into_iter()
            .map(|v| {
                let c = v.clamp(clip_lo, clip_hi);
                if log {
                    libm::log1p(c)
                } else {
                    c
                }
            })
            .collect();
        let mean = crate::numerics::mean(&transformed);
        let var = transformed.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / transformed.len() as f64;
        let sd = libm::sqrt(var);
        let degenerate = !(sd > 1e-12);
        features.push(FeatureStats {
            name: name.clone(),
            clip_lo,
            clip_hi,
            log,
            mean,
            std: if degenerate { 1.0 } else { sd },
            degenerate,
            kind,
        });
    }
    Ok(PreprocessStats { features })
}

/// Applies fitted transforms to a dataset whose schema matches the fit.
pub fn preprocess_apply(d: &Dataset, s: &PreprocessStats) -> Result<Dataset> {
    let names: Vec<&str> = d.feature_names.iter().map(String::as_str).collect();
    if names != s.names() {
        return Err(Error::data(format!(
            "schema mismatch: dataset features {:?} vs fitted {:?}",
            names,
            s.names()
        )));
    }
    Ok(Dataset {
        x: preprocess_apply_matrix(&d.x, s)?,
        y: d.y.clone(),
        feature_names: d.feature_names.clone(),
        feature_kinds: d.feature_kinds.clone(),
    })
}

pub fn preprocess_apply_matrix(x: &Matrix, s: &PreprocessStats) -> Result<Matrix> {
    if x.cols() != s.features.len() {
        return Err(Error::shape(
            "preprocess_apply",
            (x.rows(), s.features.len()),
            x.shape(),
        ));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, f) in out.row_mut(i).iter_mut().zip(&s.features) {
            *v = f.forward(*v);
        }
    }
    Ok(out)
}

/// De-standardizes, undoes `ln(1+x)`, and clamps to the clip range.
pub fn inverse_transform(x_transformed: &Matrix, s: &PreprocessStats) -> Result<Matrix> {
    if x_transformed.cols() != s.features.len() {
        return Err(Error::shape(
            "inverse_transform",
            (x_transformed.rows(), s.features.len()),
            x_transformed.shape(),
        ));
    }
    let mut out = x_transformed.clone();
    for i in 0..out.rows() {
        for (v, f) in out.row_mut(i).iter_mut().zip(&s.features) {
            *v = f.inverse(*v);
        }
    }
    Ok(out)
}
