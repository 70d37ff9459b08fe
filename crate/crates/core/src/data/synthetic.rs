//! Planted three-tier manifold.
//!
//! Every sample is `x = C·u + Σ_a s·d_a + ε` where `C` spans a rank-`r`
//! context subspace (dense Gaussian code `u`), `d_a` are unit atoms living in
//! the orthogonal complement of `C`, and `ε` is isotropic noise. Background
//! samples carry random singleton atoms; motif samples carry a motif's fixed
//! atom subset. Motif samples also shift their context code along a
//! motif-specific direction, so the label depends on atoms *in context*:
//! with `twin_motif` set, motif 1 reuses motif 0's atoms under the opposite
//! context shift and is labelled negative.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::numerics::rng::{gaussian_matrix, shuffle, standard_normal, stream_rng, uniform, Stream};
use crate::numerics::{dot, norm2};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n: usize,
    /// Input dimension `D`.
    pub d: usize,
    /// Context rank `r`.
    pub r: usize,
    /// Number of planted atoms `m`.
    pub m: usize,
    pub n_motifs: usize,
    pub atoms_per_motif: usize,
    /// Fraction of samples carrying the positive motif.
    pub prevalence: f64,
    pub noise_std: f64,
    /// Norm of each context basis column; 0 removes the context entirely.
    pub context_scale: f64,
    /// Length of the per-motif shift applied to the context code.
    pub context_shift: f64,
    /// Motif 1 copies motif 0's atoms under the opposite context shift.
    pub twin_motif: bool,
    /// Size of each negative motif cohort relative to the positive cohort.
    pub distractor_ratio: f64,
    /// Atom coefficient range; one draw per sample scales all its atoms.
    pub coef_range: (f64, f64),
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 20_000,
            d: 32,
            r: 8,
            m: 64,
            n_motifs: 4,
            atoms_per_motif: 3,
            prevalence: 0.02,
            noise_std: 0.05,
            context_scale: 2.0,
            context_shift: 1.5,
            twin_motif: true,
            distractor_ratio: 2.0,
            coef_range: (0.3, 0.7),
            seed: 0,
        }
    }
}

/// Everything needed to score recovery against the planted structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedGroundTruth {
    /// `D x r`, orthogonal columns of norm `context_scale`.
    pub context_basis: Matrix,
    /// `D x m`, unit-norm columns orthogonal to the context span.
    pub atom_dictionary: Matrix,
    pub motif_table: Vec<Vec<usize>>,
    /// Context-code shift per motif (`n_motifs x r`).
    pub motif_shifts: Matrix,
    pub motif_assignments: Vec<Option<usize>>,
    pub positive_motif_ids: Vec<usize>,
    /// Per-sample context code `u` (`n x r`).
    pub context_codes: Matrix,
    /// Per-sample active atoms and their coefficients.
    pub sample_atoms: Vec<Vec<(usize, f64)>>,
}

impl PlantedGroundTruth {
    /// Context component `C·u_i` of sample `i`.
    pub fn context_component(&self, i: usize) -> Vec<f64> {
        self.context_basis
            .matvec(self.context_codes.row(i))
            .expect("context codes match basis rank")
    }

    /// Sum of the dictionary columns of `motif`.
    pub fn motif_direction(&self, motif: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.atom_dictionary.rows()];
        for &a in &self.motif_table[motif] {
            for (vi, di) in v.iter_mut().zip(self.atom_dictionary.col(a)) {
                *vi += di;
            }
        }
        v
    }

    pub fn is_positive_motif(&self, motif: usize) -> bool {
        self.positive_motif_ids.contains(&motif)
    }
}

/// Orthonormalizes the columns of `m` in place (modified Gram-Schmidt).
fn orthonormalize_cols(m: &mut Matrix) -> Result<()> {
    let cols = m.cols();
    for j in 0..cols {
        let mut v = m.col(j);
        for k in 0..j {
            let q = m.col(k);
            let p = dot(&v, &q);
            for (vi, qi) in v.iter_mut().zip(&q) {
                *vi -= p * qi;
            }
        }
        let n = norm2(&v);
        if n < 1e-10 {
            return Err(Error::NonFinite("degenerate context basis draw".into()));
        }
        v.iter_mut().for_each(|x| *x /= n);
        m.set_col(j, &v);
    }
    Ok(())
}

fn validate(cfg: &GeneratorConfig) -> Result<()> {
    if cfg.n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(cfg.r < cfg.d && cfg.d < cfg.m) {
        return Err(Error::invalid(alloc::format!(
            "need r < D < m, got r={}, D={}, m={}",
            cfg.r,
            cfg.d,
            cfg.m
        )));
    }
    if cfg.r == 0 {
        return Err(Error::invalid("context rank must be at least 1"));
    }
    if cfg.atoms_per_motif < 2 {
        return Err(Error::invalid("atoms_per_motif must be at least 2"));
    }
    if cfg.n_motifs == 0 {
        return Err(Error::invalid("need at least one motif"));
    }
    if !(cfg.prevalence > 0.0 && cfg.prevalence < 0.5) {
        return Err(Error::invalid("prevalence must lie in (0, 0.5)"));
    }
    let distinct = cfg.n_motifs - usize::from(cfg.twin_motif && cfg.n_motifs >= 2);
    if distinct * cfg.atoms_per_motif > cfg.m {
        return Err(Error::invalid("not enough atoms for disjoint motifs"));
    }
    if cfg.noise_std < 0.0 || cfg.context_scale < 0.0 || cfg.distractor_ratio < 0.0 {
        return Err(Error::invalid("scales must be non-negative"));
    }
    Ok(())
}

/// Draws a planted dataset and its ground truth. Identical configs give
/// bit-identical output.
pub fn generate_synthetic_manifold(cfg: &GeneratorConfig) -> Result<(Dataset, PlantedGroundTruth)> {
    validate(cfg)?;
    let (n, d, r, m) = (cfg.n, cfg.d, cfg.r, cfg.m);
    let mut rng = stream_rng(cfg.seed, Stream::Generator, 0);

    let mut q = gaussian_matrix(&mut rng, d, r);
    orthonormalize_cols(&mut q)?;

    let mut atoms = gaussian_matrix(&mut rng, d, m);
    for a in 0..m {
        let mut v = atoms.col(a);
        for k in 0..r {
            let qk = q.col(k);
            let p = dot(&v, &qk);
            for (vi, qi) in v.iter_mut().zip(&qk) {
                *vi -= p * qi;
            }
        }
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        atoms.set_col(a, &v);
    }
    let context_basis = q.scale(cfg.context_scale);

    let mut order: Vec<usize> = (0..m).collect();
    shuffle(&mut rng, &mut order);
    let mut motif_table: Vec<Vec<usize>> = Vec::with_capacity(cfg.n_motifs);
    let mut next = 0;
    for k in 0..cfg.n_motifs {
        if k == 1 && cfg.twin_motif {
            motif_table.push(motif_table[0].clone());
            continue;
        }
        let mut set = order[next..next + cfg.atoms_per_motif].to_vec();
        set.sort_unstable();
        motif_table.push(set);
        next += cfg.atoms_per_motif;
    }

    let mut motif_shifts = Matrix::zeros(cfg.n_motifs, r);
    for k in 0..cfg.n_motifs {
        let dir: Vec<f64> = if k == 1 && cfg.twin_motif {
            motif_shifts.row(0).iter().map(|v| -v).collect()
        } else {
            let g: Vec<f64> = (0..r).map(|_| standard_normal(&mut rng)).collect();
            let gn = norm2(&g);
            g.iter().map(|v| v / gn * cfg.context_shift).collect()
        };
        motif_shifts.row_mut(k).copy_from_slice(&dir);
    }

    let n_pos = (libm::round(cfg.prevalence * n as f64) as usize).max(1);
    let n_neg_motif = libm::round(cfg.distractor_ratio * n_pos as f64) as usize;
    let total = n_pos + n_neg_motif * (cfg.n_motifs - 1);
    if total > n {
        return Err(Error::invalid("motif cohorts exceed the sample count"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut rng, &mut perm);
    let mut motif_assignments = vec![None; n];
    let mut cursor = 0;
    for k in 0..cfg.n_motifs {
        let count = if k == 0 { n_pos } else { n_neg_motif };
        for &i in &perm[cursor..cursor + count] {
            motif_assignments[i] = Some(k);
        }
        cursor += count;
    }

    let mut x = Matrix::zeros(n, d);
    let mut context_codes = Matrix::zeros(n, r);
    let mut sample_atoms = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let (clo, chi) = cfg.coef_range;
    for i in 0..n {
        let mut u: Vec<f64> = (0..r).map(|_| standard_normal(&mut rng)).collect();
        let active: Vec<(usize, f64)> = match motif_assignments[i] {
            Some(k) => {
                for (ui, s) in u.iter_mut().zip(motif_shifts.row(k)) {
                    *ui += s;
                }
                let c = uniform(&mut rng, clo, chi);
                motif_table[k].iter().map(|&a| (a, c)).collect()
            }
            None => {
                let a = rng_index(&mut rng, m);
                vec![(a, uniform(&mut rng, clo, chi))]
            }
        };
        let row = x.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let ctx: f64 = (0..r).map(|k| context_basis[(j, k)] * u[k]).sum();
            let atomic: f64 = active.iter().map(|&(a, c)| c * atoms[(j, a)]).sum();
            *v = ctx + atomic;
        }
        if cfg.noise_std > 0.0 {
            for v in row.iter_mut() {
                *v += cfg.noise_std * standard_normal(&mut rng);
            }
        }
        context_codes.row_mut(i).copy_from_slice(&u);
        sample_atoms.push(active);
        y.push(u8::from(motif_assignments[i] == Some(0)));
    }

    let dataset = Dataset::with_default_names(x, y)?;
    let truth = PlantedGroundTruth {
        context_basis,
        atom_dictionary: atoms,
        motif_table,
        motif_shifts,
        motif_assignments,
        positive_motif_ids: vec![0],
        context_codes,
        sample_atoms,
    };
    Ok((dataset, truth))
}

fn rng_index<R: rand::Rng + ?Sized>(rng: &mut R, m: usize) -> usize {
    rng.random_range(0..m)
}
