//! Mini-batch Adam training with per-epoch sparsity diagnostics.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::model::{full_forward, ForwardTrace, ModelDims, ModelParams, ParamId};
use crate::numerics::rng::{shuffle, stream_rng, Stream};
use crate::numerics::{adam_step_in_place, AdamConfig, AdamState};
use crate::objective::{loss_gradients_trace, GradientOptions, LossBreakdown, LossWeights};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-epoch learning-rate multiplier: `lr_e = lr · gamma^e`.
    pub lr_decay_gamma: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossWeights,
    pub seed: u64,
    pub dims: ModelDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 256,
            lr: 3e-4,
            lr_decay_gamma: 0.985,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossWeights::default(),
            seed: 0,
            dims: ModelDims {
                input_dim: 32,
                d_dense: 8,
                d1: 256,
                k1: 8,
                d2: 32,
                k2: 4,
                dense_enabled: true,
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.lr_decay_gamma > 0.0 && self.lr_decay_gamma <= 1.0) {
            return Err(Error::invalid("lr_decay_gamma must lie in (0, 1]"));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("lr and weight_decay must be non-negative"));
        }
        self.loss.validate()?;
        self.dims.validate()
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * libm::pow(self.lr_decay_gamma, epoch as f64)
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Which sparse tier a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SparseTier {
    L1,
    L2,
}

/// Diagnostics of one epoch, accumulated over the epoch's training passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub dead_feature_ratio_l1: f64,
    pub dead_feature_ratio_l2: f64,
    /// Mean per-sample fraction of active units (bounded by `k / d`).
    pub active_fraction_l1: f64,
    pub active_fraction_l2: f64,
    pub energy_l1: f64,
    pub energy_l2: f64,
    /// Per-element reconstruction MSE on positives; `None` without positives.
    pub mse_pos: Option<f64>,
    pub mse_neg: Option<f64>,
    pub lr_used: f64,
}

/// Adam moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub states: Vec<AdamState>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        OptimizerState {
            states: ParamId::ALL
                .iter()
                .map(|&id| AdamState::for_param(params.tensor(id)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub reports: Vec<EpochReport>,
}

/// Training stopped on a non-finite loss or gradient.
#[derive(Debug, Clone)]
pub struct Diverged {
    pub epoch: usize,
    pub detail: String,
    /// Parameters before the failing step.
    pub last_good: ModelParams,
    pub reports: Vec<EpochReport>,
}

#[derive(Debug, Clone)]
pub enum TrainError {
    Invalid(Error),
    Diverged(Box<Diverged>),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Invalid(e) => write!(f, "{e}"),
            TrainError::Diverged(d) => {
                write!(f, "training diverged at epoch {}: {}", d.epoch, d.detail)
            }
        }
    }
}

impl core::error::Error for TrainError {}

impl From<Error> for TrainError {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Invalid(e) => e,
            TrainError::Diverged(d) => Error::Diverged {
                epoch: d.epoch,
                detail: d.detail,
            },
        }
    }
}

/// Running firing statistics of one sparse tier.
#[derive(Debug, Clone)]
struct TierAccumulator {
    fired: Vec<bool>,
    nnz: usize,
    energy: f64,
    samples: usize,
}

impl TierAccumulator {
    fn new(width: usize) -> Self {
        TierAccumulator {
            fired: vec![false; width],
            nnz: 0,
            energy: 0.0,
            samples: 0,
        }
    }

    fn observe(&mut self, code: &Matrix) {
        for row in code.iter_rows() {
            let mut count = 0;
            let mut sum = 0.0;
            for (unit, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    self.fired[unit] = true;
                    count += 1;
                    sum += v.abs();
                }
            }
            self.nnz += count;
            if count > 0 {
                self.energy += sum / count as f64;
            }
            self.samples += 1;
        }
    }

    fn dead_ratio(&self) -> f64 {
        if self.fired.is_empty() {
            return 0.0;
        }
        self.fired.iter().filter(|f| !**f).count() as f64 / self.fired.len() as f64
    }

    fn active_fraction(&self) -> f64 {
        if self.samples == 0 || self.fired.is_empty() {
            return 0.0;
        }
        self.nnz as f64 / (self.samples * self.fired.len()) as f64
    }

    fn energy(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.energy / self.samples as f64
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ClassMse {
    sum: [f64; 2],
    count: [usize; 2],
}

impl ClassMse {
    fn observe(&mut self, x: &Matrix, t: &ForwardTrace, y: &[u8]) {
        let d = x.cols().max(1) as f64;
        for (i, &label) in y.iter().enumerate() {
            let e: f64 = x
                .row(i)
                .iter()
                .zip(t.x_hat.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            self.sum[label as usize] += e / d;
            self.count[label as usize] += 1;
        }
    }

    fn get(&self, label: usize) -> Option<f64> {
        (self.count[label] > 0).then(|| self.sum[label] / self.count[label] as f64)
    }
}

fn add_scaled(acc: &mut LossBreakdown, b: &LossBreakdown, s: f64) {
    acc.recon += s * b.recon;
    acc.smooth += s * b.smooth;
    acc.dir += s * b.dir;
    acc.mag += s * b.mag;
    acc.tax1 += s * b.tax1;
    acc.tax2 += s * b.tax2;
    acc.total += s * b.total;
}

/// Trains from a fresh initialization.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> core::result::Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.n_features() != config.dims.input_dim {
        return Err(Error::invalid(alloc::format!(
            "dataset has {} features but model expects {}",
            dataset.n_features(),
            config.dims.input_dim
        ))
        .into());
    }
    let params = ModelParams::init(config.dims, config.seed)?;
    train_from(dataset, config, params)
}

/// Trains starting from `params`.
pub fn train_from(
    dataset: &Dataset,
    config: &TrainConfig,
    mut params: ModelParams,
) -> core::result::Result<TrainOutcome, TrainError> {
    config.validate()?;
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("cannot train on an empty dataset").into());
    }
    let n = dataset.len();
    let mut optimizer = OptimizerState::new(&params);
    let mut reports = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let adam = config.adam(lr);
        let mut rng = stream_rng(config.seed, Stream::Batching, epoch as u32);
        shuffle(&mut rng, &mut order);

        let mut loss = LossBreakdown::default();
        let mut l1 = TierAccumulator::new(config.dims.d1);
        let mut l2 = TierAccumulator::new(config.dims.d2);
        let mut mse = ClassMse::default();

        for batch in order.chunks(config.batch_size) {
            let xb = dataset.x.select_rows(batch);
            let yb: Vec<u8> = batch.iter().map(|&i| dataset.y[i]).collect();
            let step = loss_gradients_trace(&xb, &yb, &params, &config.loss, GradientOptions::default());
            let (b, grads, trace) = match step {
                Ok(v) if v.0.total.is_finite() => v,
                Ok(v) => {
                    return Err(diverged(epoch, alloc::format!("loss {}", v.0.total), params, reports))
                }
                Err(e) => return Err(diverged(epoch, alloc::format!("{e}"), params, reports)),
            };
            add_scaled(&mut loss, &b, batch.len() as f64 / n as f64);
            l1.observe(&trace.z1);
            l2.observe(&trace.z2);
            mse.observe(&xb, &trace, &yb);

            let snapshot = params.clone();
            for (k, id) in ParamId::ALL.into_iter().enumerate() {
                adam_step_in_place(params.tensor_mut(id), grads.get(id), &mut optimizer.states[k], &adam)?;
            }
            params.renormalize_decoder();
            if !params.is_finite() {
                return Err(diverged(epoch, "non-finite parameters".into(), snapshot, reports));
            }
        }

        reports.push(EpochReport {
            epoch,
            loss,
            dead_feature_ratio_l1: l1.dead_ratio(),
            dead_feature_ratio_l2: l2.dead_ratio(),
            active_fraction_l1: l1.active_fraction(),
            active_fraction_l2: l2.active_fraction(),
            energy_l1: l1.energy(),
            energy_l2: l2.energy(),
            mse_pos: mse.get(1),
            mse_neg: mse.get(0),
            lr_used: lr,
        });
    }
    Ok(TrainOutcome {
        params,
        optimizer,
        reports,
    })
}

fn diverged(epoch: usize, detail: String, last_good: ModelParams, reports: Vec<EpochReport>) -> TrainError {
    TrainError::Diverged(Box::new(Diverged {
        epoch,
        detail,
        last_good,
        reports,
    }))
}

/// Sparsity and reconstruction diagnostics from one full pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub dead_feature_ratio_l1: f64,
    pub dead_feature_ratio_l2: f64,
    pub active_fraction_l1: f64,
    pub active_fraction_l2: f64,
    /// Fraction of units that fire at least once (`1 − dead ratio`).
    pub utilization_l1: f64,
    pub utilization_l2: f64,
    pub energy_l1: f64,
    pub energy_l2: f64,
    pub mse_pos: Option<f64>,
    pub mse_neg: Option<f64>,
    /// Samples whose code uses the full budget.
    pub full_budget_fraction_l1: f64,
    pub full_budget_fraction_l2: f64,
    pub max_nnz_l1: usize,
    pub max_nnz_l2: usize,
}

const DIAG_CHUNK: usize = 2048;

/// Runs the model over `dataset` in chunks and summarizes both tiers.
pub fn diagnostics(model: &ModelParams, dataset: &Dataset) -> Result<Diagnostics> {
    if dataset.is_empty() {
        return Err(Error::data("diagnostics need a nonempty dataset"));
    }
    let dims = model.dims;
    let mut l1 = TierAccumulator::new(dims.d1);
    let mut l2 = TierAccumulator::new(dims.d2);
    let mut mse = ClassMse::default();
    let (mut full1, mut full2, mut max1, mut max2) = (0usize, 0usize, 0usize, 0usize);
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(DIAG_CHUNK) {
        let xb = dataset.x.select_rows(chunk);
        let yb: Vec<u8> = chunk.iter().map(|&i| dataset.y[i]).collect();
        let t = full_forward(&xb, model)?;
        l1.observe(&t.z1);
        l2.observe(&t.z2);
        mse.observe(&xb, &t, &yb);
        for (a1, a2) in t.active1.iter().zip(&t.active2) {
            full1 += usize::from(a1.len() == dims.k1);
            full2 += usize::from(a2.len() == dims.k2);
            max1 = max1.max(a1.len());
            max2 = max2.max(a2.len());
        }
    }
    let n = dataset.len() as f64;
    Ok(Diagnostics {
        dead_feature_ratio_l1: l1.dead_ratio(),
        dead_feature_ratio_l2: l2.dead_ratio(),
        active_fraction_l1: l1.active_fraction(),
        active_fraction_l2: l2.active_fraction(),
        utilization_l1: 1.0 - l1.dead_ratio(),
        utilization_l2: 1.0 - l2.dead_ratio(),
        energy_l1: l1.energy(),
        energy_l2: l2.energy(),
        mse_pos: mse.get(1),
        mse_neg: mse.get(0),
        full_budget_fraction_l1: full1 as f64 / n,
        full_budget_fraction_l2: full2 as f64 / n,
        max_nnz_l1: max1,
        max_nnz_l2: max2,
    })
}

/// Fraction of the tier's units that never fire on `dataset`.
pub fn dead_feature_ratio(model: &ModelParams, dataset: &Dataset, tier: SparseTier) -> Result<f64> {
    let d = diagnostics(model, dataset)?;
    Ok(match tier {
        SparseTier::L1 => d.dead_feature_ratio_l1,
        SparseTier::L2 => d.dead_feature_ratio_l2,
    })
}

/// Mean over samples of the mean nonzero activation magnitude.
pub fn activation_energy(model: &ModelParams, dataset: &Dataset, tier: SparseTier) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let d = diagnostics(model, dataset)?;
    Ok(match tier {
        SparseTier::L1 => d.energy_l1,
        SparseTier::L2 => d.energy_l2,
    })
}

/// Energy of a code matrix directly (mean over rows of mean nonzero |value|).
pub fn code_energy(code: &Matrix) -> f64 {
    let mut acc = TierAccumulator::new(code.cols());
    acc.observe(code);
    acc.energy()
}
