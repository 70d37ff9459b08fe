//! Probing of each representation tier, ranking metrics, the path ablation
//! and the augmentation harness.

mod metrics;
mod probe;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_folds, Dataset};
use crate::model::{full_forward, ModelParams};
use crate::numerics::{mean, sample_sd};
use crate::trainer::{train, TrainConfig};
use crate::{Error, Matrix, Result};

pub use metrics::{auc, auprc, best_f1, recall_at_specificity};
pub use probe::{Csr, LogisticProbe, ProbeConfig};

pub const DEFAULT_SPEC_TARGET: f64 = 0.90;

/// A probed representation (or concatenation of representations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "L0")]
    L0,
    #[serde(rename = "f1")]
    F1,
    #[serde(rename = "f2")]
    F2,
    #[serde(rename = "f1_hat")]
    F1Hat,
    #[serde(rename = "L0+f1")]
    L0F1,
    #[serde(rename = "L0+f2")]
    L0F2,
    #[serde(rename = "f1+f2")]
    F1F2,
}

impl Tier {
    pub const ALL: [Tier; 7] = [
        Tier::L0,
        Tier::F1,
        Tier::F2,
        Tier::F1Hat,
        Tier::L0F1,
        Tier::L0F2,
        Tier::F1F2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tier::L0 => "L0",
            Tier::F1 => "f1",
            Tier::F2 => "f2",
            Tier::F1Hat => "f1_hat",
            Tier::L0F1 => "L0+f1",
            Tier::L0F2 => "L0+f2",
            Tier::F1F2 => "f1+f2",
        }
    }

    pub fn from_name(name: &str) -> Option<Tier> {
        Tier::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn features(self, f: &TierFeatures) -> Result<Csr> {
        match self {
            Tier::L0 => Csr::from_blocks(&[&f.l0]),
            Tier::F1 => Csr::from_blocks(&[&f.f1]),
            Tier::F2 => Csr::from_blocks(&[&f.f2]),
            Tier::F1Hat => Csr::from_blocks(&[&f.f1_hat]),
            Tier::L0F1 => Csr::from_blocks(&[&f.l0, &f.f1]),
            Tier::L0F2 => Csr::from_blocks(&[&f.l0, &f.f2]),
            Tier::F1F2 => Csr::from_blocks(&[&f.f1, &f.f2]),
        }
    }
}

/// Per-sample representations at every tier.
#[derive(Debug, Clone, PartialEq)]
pub struct TierFeatures {
    pub l0: Matrix,
    pub f1: Matrix,
    pub f2: Matrix,
    pub f1_hat: Matrix,
}

pub fn extract_features(model: &ModelParams, data: &Dataset) -> Result<TierFeatures> {
    let dims = model.dims;
    let n = data.len();
    let dd = if dims.dense_enabled { dims.d_dense } else { 0 };
    let mut f = TierFeatures {
        l0: Matrix::zeros(n, dd),
        f1: Matrix::zeros(n, dims.d1),
        f2: Matrix::zeros(n, dims.d2),
        f1_hat: Matrix::zeros(n, dims.d1),
    };
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(2048) {
        let t = full_forward(&data.x.select_rows(chunk), model)?;
        for (r, &i) in chunk.iter().enumerate() {
            f.l0.row_mut(i).copy_from_slice(t.z_dense.row(r));
            f.f1.row_mut(i).copy_from_slice(t.z1.row(r));
            f.f2.row_mut(i).copy_from_slice(t.z2.row(r));
            f.f1_hat.row_mut(i).copy_from_slice(t.z1_hat.row(r));
        }
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub tier: String,
    pub auc: f64,
    pub auc_sd: f64,
    pub fold_aucs: Vec<f64>,
    /// `auc − auc(L0)` on the same folds, when L0 was probed.
    pub gain_vs_l0: Option<f64>,
    pub fold_count: usize,
}

/// Held-out AUC of a probe fitted on the remaining folds, per fold.
pub fn cross_validated_auc(x: &Csr, y: &[u8], folds: &[usize], k: usize, cfg: &ProbeConfig) -> Result<Vec<f64>> {
    if folds.len() != x.rows() || y.len() != x.rows() {
        return Err(Error::length("probe folds", x.rows(), folds.len()));
    }
    (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            let ytr: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let yte: Vec<u8> = test.iter().map(|&i| y[i]).collect();
            let probe = LogisticProbe::fit(&x.select_rows(&train), &ytr, cfg)?;
            auc(&probe.decision(&x.select_rows(&test))?, &yte)
        })
        .collect()
}

/// Stratified k-fold logistic probe of one feature matrix.
pub fn fit_linear_probe(
    x: &Csr,
    y: &[u8],
    k: usize,
    seed: u64,
    cfg: &ProbeConfig,
    tier: &str,
) -> Result<ProbeReport> {
    let folds = stratified_folds(y, k, seed)?;
    let aucs = cross_validated_auc(x, y, &folds, k, cfg)?;
    Ok(report(tier, aucs, None))
}

fn report(tier: &str, aucs: Vec<f64>, base: Option<f64>) -> ProbeReport {
    let m = mean(&aucs);
    ProbeReport {
        tier: tier.into(),
        auc: m,
        auc_sd: sample_sd(&aucs),
        fold_count: aucs.len(),
        gain_vs_l0: base.map(|b| m - b),
        fold_aucs: aucs,
    }
}

/// Probes each requested tier on identical stratified folds of `data`.
pub fn hierarchical_utility_report(
    model: &ModelParams,
    data: &Dataset,
    tiers: &[Tier],
    k: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeReport>> {
    let feats = extract_features(model, data)?;
    let folds = stratified_folds(&data.y, k, seed)?;
    let mut results: Vec<(Tier, Vec<f64>)> = Vec::new();
    for &t in tiers {
        let x = t.features(&feats)?;
        results.push((t, cross_validated_auc(&x, &data.y, &folds, k, cfg)?));
    }
    let base = results.iter().find(|(t, _)| *t == Tier::L0).map(|(_, a)| mean(a));
    Ok(results
        .into_iter()
        .map(|(t, a)| report(t.name(), a, base))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: Vec<ProbeReport>,
    pub ablated: Vec<ProbeReport>,
    /// Full-model `L0+f1` AUC minus ablated `f1+f2` AUC.
    pub gap: f64,
}

/// Trains a sparse-only twin of the model (dense path disabled) and probes
/// both. `full` may supply an already trained full model.
pub fn ablation_report(
    train_data: &Dataset,
    eval_data: &Dataset,
    train_cfg: &TrainConfig,
    full: Option<&ModelParams>,
    k: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<AblationReport> {
    let trained;
    let full_model = match full {
        Some(m) => m,
        None => {
            trained = train(train_data, train_cfg)?.params;
            &trained
        }
    };
    let mut ablated_cfg = train_cfg.clone();
    ablated_cfg.dims.dense_enabled = false;
    let ablated_model = train(train_data, &ablated_cfg)?.params;

    let full_tiers = [Tier::L0, Tier::F1, Tier::F2, Tier::L0F1, Tier::F1F2];
    let full_rep = hierarchical_utility_report(full_model, eval_data, &full_tiers, k, seed, cfg)?;
    let abl_rep = hierarchical_utility_report(
        &ablated_model,
        eval_data,
        &[Tier::F1, Tier::F2, Tier::F1F2],
        k,
        seed,
        cfg,
    )?;
    let pick = |r: &[ProbeReport], name: &str| r.iter().find(|p| p.tier == name).map(|p| p.auc).unwrap_or(0.0);
    let gap = pick(&full_rep, "L0+f1") - pick(&abl_rep, "f1+f2");
    Ok(AblationReport {
        full: full_rep,
        ablated: abl_rep,
        gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub auc: f64,
    pub auprc: f64,
    pub recall_at_spec: f64,
    pub best_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(v: &[f64]) -> Self {
        MeanSd {
            mean: mean(v),
            sd: sample_sd(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub method: String,
    pub auc: MeanSd,
    pub auprc: MeanSd,
    pub recall_at_spec: MeanSd,
    pub best_f1: MeanSd,
    /// `(mean AUPRC − baseline AUPRC) / baseline AUPRC`.
    pub delta_prc_relative: f64,
    pub baseline: RunMetrics,
    pub runs: Vec<RunMetrics>,
}

impl AugmentationReport {
    /// Relative AUPRC change of each run against the baseline.
    pub fn run_deltas(&self) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| (r.auprc - self.baseline.auprc) / self.baseline.auprc)
            .collect()
    }
}

/// Fits the logistic classifier on `train` (raw model inputs) and scores
/// `test`.
pub fn evaluate_classifier(train: &Dataset, test: &Dataset, spec_target: f64, cfg: &ProbeConfig) -> Result<RunMetrics> {
    let probe = LogisticProbe::fit(&Csr::from_dense(&train.x), &train.y, cfg)?;
    let s = probe.decision(&Csr::from_dense(&test.x))?;
    Ok(RunMetrics {
        auc: auc(&s, &test.y)?,
        auprc: auprc(&s, &test.y)?,
        recall_at_spec: recall_at_specificity(&s, &test.y, spec_target)?,
        best_f1: best_f1(&s, &test.y)?,
    })
}

/// Trains on `real_train ∪ synthetic[r]` for each run `r` and compares
/// against training on `real_train` alone, all scored on `test`.
pub fn augmentation_experiment(
    method: &str,
    real_train: &Dataset,
    test: &Dataset,
    synthetic: &[Dataset],
    spec_target: f64,
    cfg: &ProbeConfig,
) -> Result<AugmentationReport> {
    if synthetic.is_empty() {
        return Err(Error::invalid("augmentation needs at least one run"));
    }
    let baseline = evaluate_classifier(real_train, test, spec_target, cfg)?;
    let mut runs = Vec::with_capacity(synthetic.len());
    for s in synthetic {
        if s.n_features() != real_train.n_features() || s.feature_names != real_train.feature_names {
            return Err(Error::data("synthetic schema does not match the training data"));
        }
        let metrics = if s.is_empty() {
            baseline
        } else {
            evaluate_classifier(&real_train.concat(s)?, test, spec_target, cfg)?
        };
        runs.push(metrics);
    }
    let col = |f: fn(&RunMetrics) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    let auprc_runs = col(|r| r.auprc);
    let report = AugmentationReport {
        method: method.into(),
        auc: MeanSd::of(&col(|r| r.auc)),
        auprc: MeanSd::of(&auprc_runs),
        recall_at_spec: MeanSd::of(&col(|r| r.recall_at_spec)),
        best_f1: MeanSd::of(&col(|r| r.best_f1)),
        delta_prc_relative: (mean(&auprc_runs) - baseline.auprc) / baseline.auprc,
        baseline,
        runs,
    };
    Ok(report)
}

/// Copies of `count` training positives drawn with replacement, for the
/// oversampling sanity arm.
pub fn oversample_positives(train: &Dataset, count: usize, seed: u64, run: u32) -> Result<Dataset> {
    let pos: Vec<usize> = (0..train.len()).filter(|&i| train.y[i] == 1).collect();
    if pos.is_empty() {
        return Err(Error::data("no positives to oversample"));
    }
    let mut rng = crate::numerics::rng::stream_rng(seed, crate::numerics::Stream::Augment, run);
    let idx: Vec<usize> = (0..count)
        .map(|_| pos[rand::Rng::random_range(&mut rng, 0..pos.len())])
        .collect();
    Ok(train.subset(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{standard_normal, stream_rng, Stream};

    fn noise_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, Stream::Generator, 0);
        let x = Matrix::from_vec(n, p, (0..n * p).map(|_| standard_normal(&mut rng)).collect()).unwrap();
        let y = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
        Dataset::with_default_names(x, y).unwrap()
    }

    #[test]
    fn null_features_give_chance_auc() {
        let d = noise_dataset(900, 3, 1);
        let r = fit_linear_probe(&Csr::from_dense(&d.x), &d.y, 3, 0, &ProbeConfig::default(), "noise").unwrap();
        assert_eq!(r.fold_count, 3);
        assert!((r.auc - 0.5).abs() < 0.05, "auc {}", r.auc);
    }

    #[test]
    fn tier_names_round_trip() {
        for t in Tier::ALL {
            assert_eq!(Tier::from_name(t.name()), Some(t));
        }
        assert_eq!(Tier::from_name("L3"), None);
    }

    #[test]
    fn empty_synthetic_reproduces_baseline() {
        let train = noise_dataset(200, 3, 2);
        let test = noise_dataset(100, 3, 3);
        let r = augmentation_experiment("none", &train, &test, &[train.empty_like()], 0.9, &ProbeConfig::default())
            .unwrap();
        assert_eq!(r.runs[0], r.baseline);
        assert_eq!(r.delta_prc_relative, 0.0);
    }

    #[test]
    fn oversampling_draws_positives_only() {
        let d = noise_dataset(40, 2, 4);
        let o = oversample_positives(&d, 7, 0, 0).unwrap();
        assert_eq!(o.len(), 7);
        assert!(o.y.iter().all(|&y| y == 1));
    }
}
