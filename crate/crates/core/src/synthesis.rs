//! Knowledge-steered synthesis: contextual carriers, module-targeted pushes
//! in the compository code, and projection onto the observed support.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind};
use crate::discovery::encode_l2;
use crate::model::{dense_forward, decode_innovation, full_forward, ModelParams};
use crate::numerics::rng::{standard_normal, stream_rng, uniform, Stream};
use crate::{Error, Matrix, Result};

pub const DEFAULT_ALPHA_RANGE: (f64, f64) = (1.2, 3.5);

/// Population statistics used to draw carrier inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierStats {
    pub mu_pop: Vec<f64>,
    pub sigma_pop: Vec<f64>,
}

impl CarrierStats {
    /// Per-feature mean and population standard deviation, with the
    /// deviation floored at `1e-12`.
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::data("carrier statistics need a nonempty dataset"));
        }
        let n = data.len() as f64;
        let d = data.n_features();
        let mut mu = vec![0.0; d];
        for row in data.x.iter_rows() {
            for (m, v) in mu.iter_mut().zip(row) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in data.x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mu) {
                *s += (v - m) * (v - m);
            }
        }
        let sigma = var.into_iter().map(|s| libm::sqrt(s / n).max(1e-12)).collect();
        Ok(CarrierStats {
            mu_pop: mu,
            sigma_pop: sigma,
        })
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.mu_pop.len() != d || self.sigma_pop.len() != d {
            return Err(Error::length("carrier stats", d, self.mu_pop.len()));
        }
        if self.sigma_pop.iter().any(|s| !(*s > 0.0)) || self.mu_pop.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("carrier sigma must be positive and mu finite"));
        }
        Ok(())
    }
}

/// Support of one feature in transformed space. For flags `lo` and `hi` are
/// the encodings of 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapBounds {
    pub features: Vec<FeatureBounds>,
}

impl SnapBounds {
    /// Observed per-feature min/max of the (transformed) training data.
    pub fn from_data(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::data("snap bounds need a nonempty dataset"));
        }
        let features = (0..train.n_features())
            .map(|j| {
                let col = train.x.col(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                FeatureBounds {
                    name: train.feature_names[j].clone(),
                    lo,
                    hi,
                    kind: train.feature_kinds[j],
                }
            })
            .collect();
        Ok(SnapBounds { features })
    }
}

/// Clamps continuous features to `[lo, hi]` and rounds flags to the nearer of
/// their two encodings (ties go to the encoding of 0).
pub fn snap(x: &Matrix, bounds: &SnapBounds) -> Result<Matrix> {
    if x.cols() != bounds.features.len() {
        return Err(Error::length("snap", bounds.features.len(), x.cols()));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, b) in out.row_mut(i).iter_mut().zip(&bounds.features) {
            *v = match b.kind {
                FeatureKind::Continuous => v.clamp(b.lo, b.hi),
                FeatureKind::Flag => {
                    if (*v - b.hi).abs() < (*v - b.lo).abs() {
                        b.hi
                    } else {
                        b.lo
                    }
                }
            };
        }
    }
    Ok(out)
}

/// Mean L2 activation over `rare` minus mean over `background` for each of
/// `neurons`, floored at zero.
pub fn derive_bias_profile(
    model: &ModelParams,
    rare: &Dataset,
    background: &Dataset,
    neurons: &[usize],
) -> Result<Vec<f64>> {
    if rare.is_empty() || background.is_empty() {
        return Err(Error::data("bias profile needs nonempty rare and background cohorts"));
    }
    if let Some(&bad) = neurons.iter().find(|&&j| j >= model.dims.d2) {
        return Err(Error::invalid(alloc::format!("neuron {bad} out of range")));
    }
    let mr = column_means(&encode_l2(model, rare)?);
    let mb = column_means(&encode_l2(model, background)?);
    Ok(neurons.iter().map(|&j| (mr[j] - mb[j]).max(0.0)).collect())
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = m.rows().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

fn carrier_inputs(stats: &CarrierStats, n: usize, seed: u64) -> Matrix {
    let d = stats.mu_pop.len();
    let mut q = Matrix::zeros(n, d);
    for i in 0..n {
        let mut rng = stream_rng(seed, Stream::Synthesis, i as u32);
        for (j, v) in q.row_mut(i).iter_mut().enumerate() {
            *v = standard_normal(&mut rng) * stats.sigma_pop[j] + stats.mu_pop[j];
        }
    }
    q
}

/// Dense-path reconstructions of `n` Gaussian draws around the population
/// statistics.
pub fn sample_carrier(model: &ModelParams, stats: &CarrierStats, n: usize, seed: u64) -> Result<Matrix> {
    stats.validate(model.dims.input_dim)?;
    let q = carrier_inputs(stats, n, seed);
    if !model.dims.dense_enabled {
        return Ok(Matrix::zeros(n, model.dims.input_dim));
    }
    Ok(dense_forward(&q, &model.dense)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringSpec {
    pub neurons: Vec<usize>,
    /// One push weight per entry of `neurons`.
    pub beta: Vec<f64>,
    pub alpha_range: (f64, f64),
    pub n_samples: usize,
    pub seed: u64,
}

impl SteeringSpec {
    fn validate(&self, d2: usize) -> Result<()> {
        if self.neurons.is_empty() {
            return Err(Error::invalid("steering module has no neurons"));
        }
        if let Some(&bad) = self.neurons.iter().find(|&&j| j >= d2) {
            return Err(Error::invalid(alloc::format!("neuron {bad} out of range (d2 = {d2})")));
        }
        if self.beta.len() != self.neurons.len() {
            return Err(Error::length("steering beta", self.neurons.len(), self.beta.len()));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("steering beta must be finite"));
        }
        let (lo, hi) = self.alpha_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("alpha range must satisfy lo <= hi"));
        }
        Ok(())
    }
}

/// Synthetic positives plus the intermediate quantities that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub data: Dataset,
    pub alphas: Vec<f64>,
    pub carriers: Matrix,
    pub z2_steered: Matrix,
}

/// Draws carriers, pushes the module neurons' L2 codes by `beta · alpha`,
/// decodes and snaps.
pub fn synthesize(
    model: &ModelParams,
    spec: &SteeringSpec,
    stats: &CarrierStats,
    bounds: &SnapBounds,
) -> Result<Synthesis> {
    let d = model.dims.input_dim;
    stats.validate(d)?;
    spec.validate(model.dims.d2)?;
    if bounds.features.len() != d {
        return Err(Error::length("snap bounds", d, bounds.features.len()));
    }
    let n = spec.n_samples;
    let carriers = sample_carrier(model, stats, n, spec.seed)?;
    let trace = full_forward(&carriers, model)?;
    let mut z2 = trace.z2;
    let mut alphas = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(spec.seed, Stream::Synthesis, (n + i) as u32);
        let (lo, hi) = spec.alpha_range;
        let alpha = if lo == hi { lo } else { uniform(&mut rng, lo, hi) };
        for (&j, &b) in spec.neurons.iter().zip(&spec.beta) {
            z2[(i, j)] += b * alpha;
        }
        alphas.push(alpha);
    }
    let innov = decode_innovation(&z2, model)?;
    let raw = carriers.add(&innov)?;
    let x = snap(&raw, bounds)?;
    let data = Dataset::new(
        x,
        vec![1; n],
        bounds.features.iter().map(|f| f.name.clone()).collect(),
        bounds.features.iter().map(|f| f.kind).collect(),
    )?;
    Ok(Synthesis {
        data,
        alphas,
        carriers,
        z2_steered: z2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn model() -> ModelParams {
        ModelParams::init(
            ModelDims {
                input_dim: 5,
                d_dense: 2,
                d1: 12,
                k1: 3,
                d2: 4,
                k2: 2,
                dense_enabled: true,
            },
            7,
        )
        .unwrap()
    }

    fn bounds(d: usize) -> SnapBounds {
        SnapBounds {
            features: (0..d)
                .map(|j| FeatureBounds {
                    name: alloc::format!("f{j}"),
                    lo: -100.0,
                    hi: 100.0,
                    kind: FeatureKind::Continuous,
                })
                .collect(),
        }
    }

    fn stats() -> CarrierStats {
        CarrierStats {
            mu_pop: vec![0.1, -0.2, 0.3, 0.0, 0.5],
            sigma_pop: vec![1.0; 5],
        }
    }

    #[test]
    fn snap_examples() {
        let b = SnapBounds {
            features: vec![
                FeatureBounds {
                    name: "c".into(),
                    lo: -1.0,
                    hi: 2.0,
                    kind: FeatureKind::Continuous,
                },
                FeatureBounds {
                    name: "f".into(),
                    lo: -0.5,
                    hi: 1.5,
                    kind: FeatureKind::Flag,
                },
            ],
        };
        let x = Matrix::from_rows(&[vec![0.3, 0.5], vec![5.0, 0.51], vec![-3.0, -9.0]]).unwrap();
        let s = snap(&x, &b).unwrap();
        assert_eq!(s.row(0), &[0.3, -0.5]);
        assert_eq!(s.row(1), &[2.0, 1.5]);
        assert_eq!(s.row(2), &[-1.0, -0.5]);
    }

    #[test]
    fn bias_profile_floors_negative_differentials() {
        let mut p = ModelParams::zeros(model().dims);
        p.comp.b_enc2.as_mut_slice().copy_from_slice(&[0.5, 0.0, 0.0, 0.0]);
        let d = Dataset::with_default_names(Matrix::zeros(3, 5), vec![1, 1, 1]).unwrap();
        let beta = derive_bias_profile(&p, &d, &d, &[0, 1]).unwrap();
        assert_eq!(beta, vec![0.0, 0.0]);
    }

    #[test]
    fn degenerate_sigma_gives_dense_image_of_mean() {
        let m = model();
        let s = CarrierStats {
            mu_pop: stats().mu_pop,
            sigma_pop: vec![1e-12; 5],
        };
        let c = sample_carrier(&m, &s, 4, 1).unwrap();
        let mu = Matrix::row_vector(s.mu_pop.clone());
        let image = dense_forward(&mu, &m.dense).unwrap().1;
        for i in 0..4 {
            for j in 0..5 {
                assert!((c[(i, j)] - image[(0, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn push_is_additive_and_deterministic() {
        let m = model();
        let spec = SteeringSpec {
            neurons: vec![1, 3],
            beta: vec![0.4, 0.2],
            alpha_range: (1.2, 3.5),
            n_samples: 6,
            seed: 11,
        };
        let a = synthesize(&m, &spec, &stats(), &bounds(5)).unwrap();
        assert_eq!(a, synthesize(&m, &spec, &stats(), &bounds(5)).unwrap());
        let doubled = SteeringSpec {
            beta: vec![0.8, 0.4],
            ..spec.clone()
        };
        let b = synthesize(&m, &doubled, &stats(), &bounds(5)).unwrap();
        assert_eq!(a.alphas, b.alphas);
        for i in 0..6 {
            for j in 0..4 {
                let diff = b.z2_steered[(i, j)] - a.z2_steered[(i, j)];
                let expect = match j {
                    1 => 0.4 * a.alphas[i],
                    3 => 0.2 * a.alphas[i],
                    _ => 0.0,
                };
                assert!((diff - expect).abs() < 1e-12);
            }
        }
        assert!(a.data.y.iter().all(|&y| y == 1));
        assert!(a.alphas.iter().all(|a| (1.2..=3.5).contains(a)));
    }

    #[test]
    fn zero_beta_gives_plain_model_samples() {
        let m = model();
        let spec = SteeringSpec {
            neurons: vec![0],
            beta: vec![0.0],
            alpha_range: (2.0, 2.0),
            n_samples: 3,
            seed: 0,
        };
        let s = synthesize(&m, &spec, &stats(), &bounds(5)).unwrap();
        let c = sample_carrier(&m, &stats(), 3, 0).unwrap();
        let t = full_forward(&c, &m).unwrap();
        let plain = c.add(&decode_innovation(&t.z2, &m).unwrap()).unwrap();
        assert_eq!(s.data.x, plain);
    }

    #[test]
    fn rejects_empty_module() {
        let spec = SteeringSpec {
            neurons: vec![],
            beta: vec![],
            alpha_range: (1.0, 2.0),
            n_samples: 1,
            seed: 0,
        };
        assert!(synthesize(&model(), &spec, &stats(), &bounds(5)).is_err());
    }
}
