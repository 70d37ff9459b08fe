//! Compository profiles, co-firing affinity, concept modules and their
//! taxonomy metrics.

mod louvain;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::model::{full_forward, ModelParams};
use crate::{Error, Matrix, Result};

pub use louvain::{louvain, modularity};

/// Default relative threshold for counting an atom as part of a profile.
pub const DEFAULT_THETA_ATOM: f64 = 0.05;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticProfile {
    pub neuron_id: usize,
    /// `(atom, weight)` ranked by `|weight|` descending.
    pub top_atoms: Vec<(usize, f64)>,
    /// `(feature, score)` ranked by `|score|` descending.
    pub feature_attribution: Vec<(String, f64)>,
}

/// Ranked atomic composition of L2 neuron `neuron_id`, projected to input
/// features through the atom decoder.
pub fn semantic_profile(
    model: &ModelParams,
    neuron_id: usize,
    top_n: usize,
    feature_names: &[String],
) -> Result<SemanticProfile> {
    let dims = model.dims;
    if neuron_id >= dims.d2 {
        return Err(Error::invalid(alloc::format!(
            "neuron {neuron_id} out of range (d2 = {})",
            dims.d2
        )));
    }
    if feature_names.len() != dims.input_dim {
        return Err(Error::length("semantic_profile", dims.input_dim, feature_names.len()));
    }
    let column = model.comp.w_dec2.col(neuron_id);
    let mut ranked: Vec<(usize, f64)> = column.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    ranked.truncate(top_n.min(dims.d1));

    let mut score = vec![0.0; dims.input_dim];
    for &(atom, weight) in &ranked {
        for (j, s) in score.iter_mut().enumerate() {
            *s += weight * model.atoms.w_dec1[(j, atom)];
        }
    }
    let mut attribution: Vec<(String, f64)> = feature_names.iter().cloned().zip(score).collect();
    attribution.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    Ok(SemanticProfile {
        neuron_id,
        top_atoms: ranked,
        feature_attribution: attribution,
    })
}

/// Co-firing frequencies of L2 neurons over a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    pub a: Matrix,
    pub cohort_size: usize,
}

impl AffinityMatrix {
    /// Neurons that fire at least once in the cohort.
    pub fn alive(&self) -> Vec<bool> {
        (0..self.a.rows()).map(|j| self.a[(j, j)] > 0.0).collect()
    }
}

/// Affinity from precomputed L2 codes (rows are samples).
pub fn affinity_from_codes(z2: &Matrix) -> Result<AffinityMatrix> {
    let n = z2.rows();
    if n == 0 {
        return Err(Error::data("affinity needs a nonempty cohort"));
    }
    let d2 = z2.cols();
    let mut counts = vec![0u64; d2 * d2];
    let mut active = Vec::new();
    for row in z2.iter_rows() {
        active.clear();
        active.extend(row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j));
        for (p, &j) in active.iter().enumerate() {
            for &k in &active[p..] {
                counts[j * d2 + k] += 1;
            }
        }
    }
    let mut a = Matrix::zeros(d2, d2);
    for j in 0..d2 {
        for k in j..d2 {
            let v = counts[j * d2 + k] as f64 / n as f64;
            a[(j, k)] = v;
            a[(k, j)] = v;
        }
    }
    Ok(AffinityMatrix { a, cohort_size: n })
}

/// L2 codes of every sample, computed in chunks.
pub fn encode_l2(model: &ModelParams, data: &Dataset) -> Result<Matrix> {
    let mut out = Matrix::zeros(data.len(), model.dims.d2);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let t = full_forward(&data.x.select_rows(chunk), model)?;
        for (r, &i) in chunk.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.z2.row(r));
        }
    }
    Ok(out)
}

pub fn affinity_matrix(model: &ModelParams, cohort: &Dataset) -> Result<AffinityMatrix> {
    if cohort.is_empty() {
        return Err(Error::data("affinity needs a nonempty cohort"));
    }
    affinity_from_codes(&encode_l2(model, cohort)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptModule {
    pub module_id: usize,
    pub neuron_ids: Vec<usize>,
    pub size: usize,
    pub avg_atom_count: f64,
    pub entropy: f64,
    pub intensity: f64,
    #[serde(default)]
    pub functional_label: String,
}

/// Communities of co-firing live neurons; modules are ordered by their
/// smallest neuron id. An all-zero matrix yields no modules.
pub fn detect_modules(affinity: &AffinityMatrix, resolution: f64, seed: u64) -> Result<Vec<ConceptModule>> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::invalid("resolution must be positive and finite"));
    }
    let a = &affinity.a;
    if !a.is_finite() || a.as_slice().iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("affinity must be finite and non-negative"));
    }
    let live: Vec<usize> = (0..a.rows()).filter(|&j| a[(j, j)] > 0.0).collect();
    if live.is_empty() {
        return Ok(Vec::new());
    }
    let mut sub = Matrix::zeros(live.len(), live.len());
    for (p, &j) in live.iter().enumerate() {
        for (q, &k) in live.iter().enumerate() {
            sub[(p, q)] = a[(j, k)];
        }
    }
    let labels = louvain(&sub, resolution, seed);
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (p, &l) in labels.iter().enumerate() {
        groups[l].push(live[p]);
    }
    groups.sort_by_key(|g| g[0]);
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(module_id, neuron_ids)| ConceptModule {
            module_id,
            size: neuron_ids.len(),
            neuron_ids,
            avg_atom_count: 0.0,
            entropy: 0.0,
            intensity: 0.0,
            functional_label: String::new(),
        })
        .collect())
}

/// Atoms above `theta_rel · max|w|` in a decoder column, with the Shannon
/// entropy (nats) of their normalized magnitudes.
pub fn column_profile_stats(column: &[f64], theta_rel: f64) -> (usize, f64) {
    let max = column.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return (0, 0.0);
    }
    let kept: Vec<f64> = column
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > theta_rel * max)
        .collect();
    let total: f64 = kept.iter().sum();
    let entropy = kept
        .iter()
        .map(|v| v / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * libm::log(p))
        .sum();
    (kept.len(), entropy)
}

/// Fills the taxonomy metrics of `module` from the decoder weights and the
/// cohort's L2 activations.
pub fn module_metrics(
    module: &ConceptModule,
    model: &ModelParams,
    cohort: &Dataset,
    theta_rel: f64,
) -> Result<ConceptModule> {
    if cohort.is_empty() {
        return Err(Error::data("module metrics need a nonempty cohort"));
    }
    module_metrics_from_codes(module, model, &encode_l2(model, cohort)?, theta_rel)
}

pub fn module_metrics_from_codes(
    module: &ConceptModule,
    model: &ModelParams,
    z2: &Matrix,
    theta_rel: f64,
) -> Result<ConceptModule> {
    if module.neuron_ids.is_empty() {
        return Err(Error::invalid("module has no neurons"));
    }
    if z2.rows() == 0 {
        return Err(Error::data("module metrics need a nonempty cohort"));
    }
    if let Some(&bad) = module.neuron_ids.iter().find(|&&j| j >= model.dims.d2) {
        return Err(Error::invalid(alloc::format!("neuron {bad} out of range")));
    }
    let mut count = 0.0;
    let mut entropy = 0.0;
    let mut intensity = 0.0;
    for &j in &module.neuron_ids {
        let (c, h) = column_profile_stats(&model.comp.w_dec2.col(j), theta_rel);
        count += c as f64;
        entropy += h;
        intensity += z2.iter_rows().map(|r| r[j].abs()).sum::<f64>();
    }
    let m = module.neuron_ids.len() as f64;
    let mut out = module.clone();
    out.size = module.neuron_ids.len();
    out.avg_atom_count = count / m;
    out.entropy = entropy / m;
    out.intensity = intensity / (m * z2.rows() as f64);
    Ok(out)
}

/// Per sample, the module with the largest summed L2 activation, or `None`
/// when no module neuron fires.
pub fn dominant_modules(z2: &Matrix, modules: &[ConceptModule]) -> Vec<Option<usize>> {
    z2.iter_rows()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for m in modules {
                let s: f64 = m.neuron_ids.iter().map(|&j| row[j]).sum();
                if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                    best = Some((m.module_id, s));
                }
            }
            best.map(|b| b.0)
        })
        .collect()
}
