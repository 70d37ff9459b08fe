//! The three-tier architecture and its forward pass.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numerics::rng::{gaussian_matrix, stream_rng, Stream};
use crate::numerics::dot;
use crate::{Error, Matrix, Result};

/// Layer sizes and budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    /// Input dimension `D`.
    pub input_dim: usize,
    pub d_dense: usize,
    pub d1: usize,
    pub k1: usize,
    pub d2: usize,
    pub k2: usize,
    /// `false` removes the contextual path (`x_resid = x`, no `x_hat_ctx`).
    #[serde(default = "yes")]
    pub dense_enabled: bool,
}

fn yes() -> bool {
    true
}

impl ModelDims {
    /// Default layer sizes for a given input dimension.
    pub fn standard(input_dim: usize) -> Self {
        ModelDims {
            input_dim,
            d_dense: 32.min(input_dim.saturating_sub(1)).max(1),
            d1: 2048,
            k1: 12,
            d2: 128,
            k2: 4,
            dense_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ModelDims {
            input_dim,
            d_dense,
            d1,
            k1,
            d2,
            k2,
            ..
        } = *self;
        if input_dim == 0 || d_dense == 0 || k1 == 0 || k2 == 0 {
            return Err(Error::invalid("dimensions and budgets must be positive"));
        }
        if self.dense_enabled && d_dense >= input_dim {
            return Err(Error::invalid(alloc::format!(
                "dense bottleneck d_dense={d_dense} must be below D={input_dim}"
            )));
        }
        if d1 <= input_dim {
            return Err(Error::invalid(alloc::format!(
                "atomic layer must be overcomplete: d1={d1} <= D={input_dim}"
            )));
        }
        if d2 >= d1 {
            return Err(Error::invalid(alloc::format!(
                "compository layer must be narrower: d2={d2} >= d1={d1}"
            )));
        }
        if k1 > d1 || k2 > d2 {
            return Err(Error::invalid("top-k budget exceeds layer width"));
        }
        Ok(())
    }
}

/// Contextual path: strictly linear low-rank bottleneck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensePathParams {
    /// `d_dense x D`
    pub w_enc0: Matrix,
    /// `D x d_dense`
    pub w_dec0: Matrix,
    /// `1 x D`
    pub b_dec0: Matrix,
}

/// Gated top-k atomic layer. Magnitude weights are tied to the gate weights
/// through the per-unit log-scale `r_mag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedAtomParams {
    /// `d1 x D`
    pub w_gate: Matrix,
    /// `1 x d1`
    pub b_gate: Matrix,
    /// `1 x d1`
    pub r_mag: Matrix,
    /// `1 x d1`
    pub b_mag: Matrix,
    /// `D x d1`, unit-norm columns.
    pub w_dec1: Matrix,
    /// `1 x D`
    pub b_dec1: Matrix,
    pub k1: usize,
}

/// Compository layer over (detached) atomic codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositoryParams {
    /// `d2 x d1`
    pub w_enc2: Matrix,
    /// `1 x d2`
    pub b_enc2: Matrix,
    /// `d1 x d2`
    pub w_dec2: Matrix,
    /// `1 x d1`
    pub b_dec2: Matrix,
    pub k2: usize,
}

/// Identifies one learnable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    WEnc0,
    WDec0,
    BDec0,
    WGate,
    BGate,
    RMag,
    BMag,
    WDec1,
    BDec1,
    WEnc2,
    BEnc2,
    WDec2,
    BDec2,
}

impl ParamId {
    pub const ALL: [ParamId; 13] = [
        ParamId::WEnc0,
        ParamId::WDec0,
        ParamId::BDec0,
        ParamId::WGate,
        ParamId::BGate,
        ParamId::RMag,
        ParamId::BMag,
        ParamId::WDec1,
        ParamId::BDec1,
        ParamId::WEnc2,
        ParamId::BEnc2,
        ParamId::WDec2,
        ParamId::BDec2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::WEnc0 => "w_enc0",
            ParamId::WDec0 => "w_dec0",
            ParamId::BDec0 => "b_dec0",
            ParamId::WGate => "w_gate",
            ParamId::BGate => "b_gate",
            ParamId::RMag => "r_mag",
            ParamId::BMag => "b_mag",
            ParamId::WDec1 => "w_dec1",
            ParamId::BDec1 => "b_dec1",
            ParamId::WEnc2 => "w_enc2",
            ParamId::BEnc2 => "b_enc2",
            ParamId::WDec2 => "w_dec2",
            ParamId::BDec2 => "b_dec2",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn is_dense(self) -> bool {
        matches!(self, ParamId::WEnc0 | ParamId::WDec0 | ParamId::BDec0)
    }

    pub fn is_atomic(self) -> bool {
        matches!(
            self,
            ParamId::WGate
                | ParamId::BGate
                | ParamId::RMag
                | ParamId::BMag
                | ParamId::WDec1
                | ParamId::BDec1
        )
    }

    pub fn is_compository(self) -> bool {
        matches!(
            self,
            ParamId::WEnc2 | ParamId::BEnc2 | ParamId::WDec2 | ParamId::BDec2
        )
    }
}

/// All learnable tensors of the three tiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub dense: DensePathParams,
    pub atoms: GatedAtomParams,
    pub comp: CompositoryParams,
}

impl ModelParams {
    /// Random initialization: encoders start as transposed unit-norm decoders.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let ModelDims {
            input_dim: d,
            d_dense,
            d1,
            k1,
            d2,
            k2,
            ..
        } = dims;
        let mut rng = stream_rng(seed, Stream::Init, 0);

        let mut w_dec0 = gaussian_matrix(&mut rng, d, d_dense);
        w_dec0.normalize_cols();
        let w_enc0 = w_dec0.transpose();

        let mut w_dec1 = gaussian_matrix(&mut rng, d, d1);
        w_dec1.normalize_cols();
        let w_gate = w_dec1.transpose();

        let mut w_dec2 = gaussian_matrix(&mut rng, d1, d2);
        w_dec2.normalize_cols();
        let w_enc2 = w_dec2.transpose();

        Ok(ModelParams {
            dims,
            dense: DensePathParams {
                w_enc0,
                w_dec0,
                b_dec0: Matrix::zeros(1, d),
            },
            atoms: GatedAtomParams {
                w_gate,
                b_gate: Matrix::zeros(1, d1),
                r_mag: Matrix::zeros(1, d1),
                b_mag: Matrix::zeros(1, d1),
                w_dec1,
                b_dec1: Matrix::zeros(1, d),
                k1,
            },
            comp: CompositoryParams {
                w_enc2,
                b_enc2: Matrix::zeros(1, d2),
                w_dec2,
                b_dec2: Matrix::zeros(1, d1),
                k2,
            },
        })
    }

    /// All-zero tensors with the shapes implied by `dims`.
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            input_dim: d,
            d_dense,
            d1,
            k1,
            d2,
            k2,
            ..
        } = dims;
        ModelParams {
            dims,
            dense: DensePathParams {
                w_enc0: Matrix::zeros(d_dense, d),
                w_dec0: Matrix::zeros(d, d_dense),
                b_dec0: Matrix::zeros(1, d),
            },
            atoms: GatedAtomParams {
                w_gate: Matrix::zeros(d1, d),
                b_gate: Matrix::zeros(1, d1),
                r_mag: Matrix::zeros(1, d1),
                b_mag: Matrix::zeros(1, d1),
                w_dec1: Matrix::zeros(d, d1),
                b_dec1: Matrix::zeros(1, d),
                k1,
            },
            comp: CompositoryParams {
                w_enc2: Matrix::zeros(d2, d1),
                b_enc2: Matrix::zeros(1, d2),
                w_dec2: Matrix::zeros(d1, d2),
                b_dec2: Matrix::zeros(1, d1),
                k2,
            },
        }
    }

    pub fn tensor(&self, id: ParamId) -> &Matrix {
        match id {
            ParamId::WEnc0 => &self.dense.w_enc0,
            ParamId::WDec0 => &self.dense.w_dec0,
            ParamId::BDec0 => &self.dense.b_dec0,
            ParamId::WGate => &self.atoms.w_gate,
            ParamId::BGate => &self.atoms.b_gate,
            ParamId::RMag => &self.atoms.r_mag,
            ParamId::BMag => &self.atoms.b_mag,
            ParamId::WDec1 => &self.atoms.w_dec1,
            ParamId::BDec1 => &self.atoms.b_dec1,
            ParamId::WEnc2 => &self.comp.w_enc2,
            ParamId::BEnc2 => &self.comp.b_enc2,
            ParamId::WDec2 => &self.comp.w_dec2,
            ParamId::BDec2 => &self.comp.b_dec2,
        }
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Matrix {
        match id {
            ParamId::WEnc0 => &mut self.dense.w_enc0,
            ParamId::WDec0 => &mut self.dense.w_dec0,
            ParamId::BDec0 => &mut self.dense.b_dec0,
            ParamId::WGate => &mut self.atoms.w_gate,
            ParamId::BGate => &mut self.atoms.b_gate,
            ParamId::RMag => &mut self.atoms.r_mag,
            ParamId::BMag => &mut self.atoms.b_mag,
            ParamId::WDec1 => &mut self.atoms.w_dec1,
            ParamId::BDec1 => &mut self.atoms.b_dec1,
            ParamId::WEnc2 => &mut self.comp.w_enc2,
            ParamId::BEnc2 => &mut self.comp.b_enc2,
            ParamId::WDec2 => &mut self.comp.w_dec2,
            ParamId::BDec2 => &mut self.comp.b_dec2,
        }
    }

    /// Checks every tensor against the shapes implied by `dims`.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let reference = ModelParams::zeros(self.dims);
        for id in ParamId::ALL {
            let (want, got) = (reference.tensor(id).shape(), self.tensor(id).shape());
            if want != got {
                return Err(Error::shape(id.name(), want, got));
            }
        }
        if self.atoms.k1 != self.dims.k1 || self.comp.k2 != self.dims.k2 {
            return Err(Error::invalid("top-k budgets disagree with dims"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        ParamId::ALL.iter().all(|&id| self.tensor(id).is_finite())
    }

    /// Rescales every atomic decoder column to unit norm.
    pub fn renormalize_decoder(&mut self) {
        self.atoms.w_dec1.normalize_cols();
    }
}

/// Top-`k` positive entries of `values`: indices ordered by descending value,
/// ties broken toward the lower index. Non-positive entries are never
/// selected, so fewer than `k` indices come back when fewer are positive.
pub fn top_k_positive(values: &[f64], k: usize) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::with_capacity(k + 1);
    if k == 0 {
        return best;
    }
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0) {
            continue;
        }
        if best.len() == k && v <= values[best[k - 1]] {
            continue;
        }
        // Strict comparison keeps earlier (lower) indices ahead on ties.
        let pos = best
            .iter()
            .position(|&j| v > values[j])
            .unwrap_or(best.len());
        best.insert(pos, i);
        if best.len() > k {
            best.pop();
        }
    }
    best
}

/// Zeros all but the top-`k` positive entries.
pub fn top_k(candidate: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; candidate.len()];
    for i in top_k_positive(candidate, k) {
        out[i] = candidate[i];
    }
    out
}

fn check_cols(x: &Matrix, cols: usize, context: &'static str) -> Result<()> {
    if x.cols() != cols {
        return Err(Error::shape(context, (x.rows(), cols), x.shape()));
    }
    Ok(())
}

/// `z_dense = W_enc0 x`, `x_hat_ctx = W_dec0 z_dense + b_dec0`, row-wise.
pub fn dense_forward(x: &Matrix, p: &DensePathParams) -> Result<(Matrix, Matrix)> {
    check_cols(x, p.w_enc0.cols(), "dense_forward")?;
    let d = p.w_dec0.rows();
    let dd = p.w_enc0.rows();
    let mut z = Matrix::zeros(x.rows(), dd);
    let mut xc = Matrix::zeros(x.rows(), d);
    for i in 0..x.rows() {
        dense_sample(x.row(i), p, z.row_mut(i), xc.row_mut(i));
    }
    Ok((z, xc))
}

fn dense_sample(x: &[f64], p: &DensePathParams, z: &mut [f64], xc: &mut [f64]) {
    for (zk, w) in z.iter_mut().zip(p.w_enc0.iter_rows()) {
        *zk = dot(w, x);
    }
    for (j, out) in xc.iter_mut().enumerate() {
        *out = dot(p.w_dec0.row(j), z) + p.b_dec0.as_slice()[j];
    }
}

/// Encodes one residual row: returns selected indices (descending value) and
/// writes the sparse code into `z1`.
fn atom_sample(x_resid: &[f64], p: &GatedAtomParams, cand: &mut [f64], z1: &mut [f64]) -> Vec<usize> {
    let b_gate = p.b_gate.as_slice();
    let r_mag = p.r_mag.as_slice();
    let b_mag = p.b_mag.as_slice();
    for (a, c) in cand.iter_mut().enumerate() {
        let g = dot(p.w_gate.row(a), x_resid);
        *c = if g + b_gate[a] > 0.0 {
            (libm::exp(r_mag[a]) * g + b_mag[a]).max(0.0)
        } else {
            0.0
        };
    }
    let sel = top_k_positive(cand, p.k1);
    z1.iter_mut().for_each(|v| *v = 0.0);
    for &a in &sel {
        z1[a] = cand[a];
    }
    sel
}

/// Gated top-k encoding of residual rows.
pub fn gated_topk_encode(x_resid: &Matrix, p: &GatedAtomParams) -> Result<Matrix> {
    check_cols(x_resid, p.w_gate.cols(), "gated_topk_encode")?;
    let d1 = p.w_gate.rows();
    let mut z1 = Matrix::zeros(x_resid.rows(), d1);
    let mut cand = vec![0.0; d1];
    for i in 0..x_resid.rows() {
        atom_sample(x_resid.row(i), p, &mut cand, z1.row_mut(i));
    }
    Ok(z1)
}

/// Compository code for one row of `z1`; `z1_active` lists its nonzeros.
fn comp_sample(
    z1: &[f64],
    z1_active: &[usize],
    p: &CompositoryParams,
    pre: &mut [f64],
    z2: &mut [f64],
    z1_hat: &mut [f64],
) -> Vec<usize> {
    let b_enc2 = p.b_enc2.as_slice();
    for (j, v) in pre.iter_mut().enumerate() {
        let w = p.w_enc2.row(j);
        let mut acc = b_enc2[j];
        for &a in z1_active {
            acc += w[a] * z1[a];
        }
        *v = acc.max(0.0);
    }
    let sel = top_k_positive(pre, p.k2);
    z2.iter_mut().for_each(|v| *v = 0.0);
    for &j in &sel {
        z2[j] = pre[j];
    }
    decode_z2(z2, &sel, p, z1_hat);
    sel
}

fn decode_z2(z2: &[f64], active: &[usize], p: &CompositoryParams, z1_hat: &mut [f64]) {
    let d2 = p.w_dec2.cols();
    let w = p.w_dec2.as_slice();
    z1_hat.copy_from_slice(p.b_dec2.as_slice());
    for &j in active {
        let zj = z2[j];
        for (a, out) in z1_hat.iter_mut().enumerate() {
            *out += w[a * d2 + j] * zj;
        }
    }
}

fn nonzeros(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// `z2 = TopK(relu(W_enc2 z1 + b_enc2))`, `z1_hat = W_dec2 z2 + b_dec2`.
pub fn compository_encode(z1: &Matrix, p: &CompositoryParams) -> Result<(Matrix, Matrix)> {
    check_cols(z1, p.w_enc2.cols(), "compository_encode")?;
    let (d2, d1) = p.w_enc2.shape();
    let mut z2 = Matrix::zeros(z1.rows(), d2);
    let mut z1_hat = Matrix::zeros(z1.rows(), d1);
    let mut pre = vec![0.0; d2];
    for i in 0..z1.rows() {
        let active = nonzeros(z1.row(i));
        comp_sample(z1.row(i), &active, p, &mut pre, z2.row_mut(i), z1_hat.row_mut(i));
    }
    Ok((z2, z1_hat))
}

/// Every intermediate of a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `n x d_dense`; zero-width when the dense path is disabled.
    pub z_dense: Matrix,
    pub x_hat_cont: Matrix,
    /// `x − x_hat_cont`, with `x_hat_cont` treated as a constant.
    pub x_resid: Matrix,
    pub z1: Matrix,
    pub z2: Matrix,
    pub z1_hat: Matrix,
    pub x_hat_innov: Matrix,
    pub x_hat: Matrix,
    /// Selected atomic units per sample, descending by value.
    pub active1: Vec<Vec<usize>>,
    /// Selected compository units per sample, descending by value.
    pub active2: Vec<Vec<usize>>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.x_hat.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x_hat.rows() == 0
    }
}

/// Full three-tier forward pass.
pub fn full_forward(x: &Matrix, params: &ModelParams) -> Result<ForwardTrace> {
    let dims = params.dims;
    check_cols(x, dims.input_dim, "full_forward")?;
    let n = x.rows();
    let d = dims.input_dim;
    let dd = if dims.dense_enabled { dims.d_dense } else { 0 };
    let mut t = ForwardTrace {
        z_dense: Matrix::zeros(n, dd),
        x_hat_cont: Matrix::zeros(n, d),
        x_resid: Matrix::zeros(n, d),
        z1: Matrix::zeros(n, dims.d1),
        z2: Matrix::zeros(n, dims.d2),
        z1_hat: Matrix::zeros(n, dims.d1),
        x_hat_innov: Matrix::zeros(n, d),
        x_hat: Matrix::zeros(n, d),
        active1: Vec::with_capacity(n),
        active2: Vec::with_capacity(n),
    };
    let mut cand = vec![0.0; dims.d1];
    let mut pre = vec![0.0; dims.d2];
    let w_dec1 = params.atoms.w_dec1.as_slice();
    let b_dec1 = params.atoms.b_dec1.as_slice();
    for i in 0..n {
        let xi = x.row(i);
        if dims.dense_enabled {
            dense_sample(xi, &params.dense, t.z_dense.row_mut(i), t.x_hat_cont.row_mut(i));
        }
        {
            let xc = t.x_hat_cont.row(i).to_vec();
            for ((r, a), c) in t.x_resid.row_mut(i).iter_mut().zip(xi).zip(&xc) {
                *r = a - c;
            }
        }
        let sel1 = atom_sample(t.x_resid.row(i), &params.atoms, &mut cand, t.z1.row_mut(i));
        {
            let z1 = t.z1.row(i);
            let innov = t.x_hat_innov.row_mut(i);
            for (j, out) in innov.iter_mut().enumerate() {
                let w = &w_dec1[j * dims.d1..(j + 1) * dims.d1];
                let mut acc = b_dec1[j];
                for &a in &sel1 {
                    acc += w[a] * z1[a];
                }
                *out = acc;
            }
        }
        for j in 0..d {
            t.x_hat[(i, j)] = t.x_hat_cont[(i, j)] + t.x_hat_innov[(i, j)];
        }
        let mut z1_active = sel1.clone();
        z1_active.sort_unstable();
        let z1_row = t.z1.row(i).to_vec();
        let sel2 = comp_sample(
            &z1_row,
            &z1_active,
            &params.comp,
            &mut pre,
            t.z2.row_mut(i),
            t.z1_hat.row_mut(i),
        );
        t.active1.push(sel1);
        t.active2.push(sel2);
    }
    Ok(t)
}

/// Decodes compository codes to input space through both decoders:
/// `W_dec1 (W_dec2 z2 + b_dec2) + b_dec1`.
pub fn decode_innovation(z2: &Matrix, params: &ModelParams) -> Result<Matrix> {
    check_cols(z2, params.dims.d2, "decode_innovation")?;
    let d1 = params.dims.d1;
    let mut out = Matrix::zeros(z2.rows(), params.dims.input_dim);
    let mut z1_hat = vec![0.0; d1];
    for i in 0..z2.rows() {
        let row = z2.row(i);
        let active = nonzeros(row);
        decode_z2(row, &active, &params.comp, &mut z1_hat);
        let o = out.row_mut(i);
        for (j, v) in o.iter_mut().enumerate() {
            *v = dot(params.atoms.w_dec1.row(j), &z1_hat) + params.atoms.b_dec1.as_slice()[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_gaussian;

    fn dims() -> ModelDims {
        ModelDims {
            input_dim: 6,
            d_dense: 2,
            d1: 16,
            k1: 3,
            d2: 6,
            k2: 2,
            dense_enabled: true,
        }
    }

    #[test]
    fn topk_examples() {
        assert_eq!(top_k(&[3.0, 1.0, 2.0, 0.0], 2), vec![3.0, 0.0, 2.0, 0.0]);
        assert_eq!(top_k_positive(&[2.0, 2.0, 1.0], 1), vec![0]);
        assert_eq!(top_k_positive(&[0.0, -1.0, 0.5], 2), vec![2]);
        assert_eq!(top_k_positive(&[1.0, 3.0, 3.0, 2.0], 3), vec![1, 2, 3]);
    }

    #[test]
    fn topk_matches_sort_reference() {
        for seed in 0..50 {
            let v = seeded_gaussian(seed, 1, 40).unwrap();
            // Quantize to force ties.
            let v: Vec<f64> = v.as_slice().iter().map(|x| libm::round(x * 4.0) / 4.0).collect();
            for k in [1, 3, 7, 40] {
                let mut idx: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0).collect();
                idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
                idx.truncate(k);
                assert_eq!(top_k_positive(&v, k), idx);
            }
        }
    }

    #[test]
    fn dims_validation() {
        assert!(dims().validate().is_ok());
        assert!(ModelDims { d1: 6, ..dims() }.validate().is_err());
        assert!(ModelDims { d2: 16, ..dims() }.validate().is_err());
        assert!(ModelDims { d_dense: 6, ..dims() }.validate().is_err());
        assert!(ModelDims {
            d_dense: 6,
            dense_enabled: false,
            ..dims()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn zero_encoder_gives_bias() {
        let mut p = ModelParams::init(dims(), 1).unwrap();
        p.dense.w_enc0.fill(0.0);
        p.dense.b_dec0 = Matrix::row_vector((0..6).map(f64::from).collect());
        let x = seeded_gaussian(2, 4, 6).unwrap();
        let (_, xc) = dense_forward(&x, &p.dense).unwrap();
        for r in xc.iter_rows() {
            assert_eq!(r, p.dense.b_dec0.as_slice());
        }
    }

    #[test]
    fn square_inverse_dense_is_identity() {
        let d = 4;
        let a = Matrix::from_rows(&[
            vec![2.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 4.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let inv = a.map(|v| if v != 0.0 { 1.0 / v } else { 0.0 });
        let p = DensePathParams {
            w_enc0: a,
            w_dec0: inv,
            b_dec0: Matrix::zeros(1, d),
        };
        let x = seeded_gaussian(3, 5, d).unwrap();
        let (_, xc) = dense_forward(&x, &p).unwrap();
        for (u, v) in xc.as_slice().iter().zip(x.as_slice()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_matches_two_matmuls() {
        let p = ModelParams::init(dims(), 4).unwrap();
        let x = seeded_gaussian(5, 4, 6).unwrap();
        let (z, xc) = dense_forward(&x, &p.dense).unwrap();
        let z_ref = x.matmul(&p.dense.w_enc0.transpose()).unwrap();
        let xc_ref = z_ref.matmul(&p.dense.w_dec0.transpose()).unwrap();
        for (a, b) in z.as_slice().iter().zip(z_ref.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in xc.as_slice().iter().zip(xc_ref.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_is_affine() {
        let mut p = ModelParams::init(dims(), 6).unwrap();
        p.dense.b_dec0 = Matrix::row_vector(vec![0.3; 6]);
        let x = seeded_gaussian(7, 1, 6).unwrap();
        let y = seeded_gaussian(8, 1, 6).unwrap();
        let (a, b) = (1.7, -0.4);
        let comb = x.scale(a).add(&y.scale(b)).unwrap();
        let f = |m: &Matrix| dense_forward(m, &p.dense).unwrap().1;
        let lhs = f(&comb);
        let rhs = f(&x)
            .scale(a)
            .add(&f(&y).scale(b))
            .unwrap()
            .add(&p.dense.b_dec0.scale(1.0 - a - b))
            .unwrap();
        for (u, v) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_gates_give_zero_code() {
        let mut p = ModelParams::init(dims(), 1).unwrap();
        p.atoms.b_gate.fill(-1e6);
        let x = seeded_gaussian(2, 5, 6).unwrap();
        let z1 = gated_topk_encode(&x, &p.atoms).unwrap();
        assert!(z1.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn compository_reference() {
        let p = ModelParams::init(dims(), 9).unwrap();
        let mut c = p.comp.clone();
        c.b_enc2 = Matrix::row_vector(vec![0.1, -0.2, 0.0, 0.05, 0.0, -0.1]);
        let z1 = seeded_gaussian(10, 5, 16).unwrap().map(|v| v.max(0.0));
        let (z2, z1_hat) = compository_encode(&z1, &c).unwrap();
        for i in 0..5 {
            let pre: Vec<f64> = (0..6)
                .map(|j| (dot(c.w_enc2.row(j), z1.row(i)) + c.b_enc2.as_slice()[j]).max(0.0))
                .collect();
            let expect = top_k(&pre, 2);
            for (a, b) in z2.row(i).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
            let hat = c.w_dec2.matvec(&expect).unwrap();
            for (a, (b, bias)) in z1_hat.row(i).iter().zip(hat.iter().zip(c.b_dec2.as_slice())) {
                assert!((a - (b + bias)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compository_pre_activation_example() {
        let mut p = ModelParams::zeros(ModelDims {
            d2: 3,
            k2: 1,
            ..dims()
        });
        p.comp.b_enc2 = Matrix::row_vector(vec![0.5, -1.0, 0.7]);
        let z1 = Matrix::zeros(1, 16);
        let (z2, z1_hat) = compository_encode(&z1, &p.comp).unwrap();
        assert_eq!(z2.row(0), &[0.0, 0.0, 0.7]);
        assert!(z1_hat.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trace_is_additive_and_respects_budgets() {
        let p = ModelParams::init(dims(), 11).unwrap();
        let x = seeded_gaussian(12, 20, 6).unwrap();
        let t = full_forward(&x, &p).unwrap();
        for i in 0..20 {
            for j in 0..6 {
                let r = t.x_hat[(i, j)] - t.x_hat_cont[(i, j)] - t.x_hat_innov[(i, j)];
                assert!(r.abs() < 1e-12);
                assert_eq!(t.x_resid[(i, j)], x[(i, j)] - t.x_hat_cont[(i, j)]);
            }
            assert!(t.z1.row(i).iter().filter(|v| **v != 0.0).count() <= 3);
            assert!(t.z2.row(i).iter().filter(|v| **v != 0.0).count() <= 2);
        }
        // Batched pieces agree with the composite.
        let z1 = gated_topk_encode(&t.x_resid, &p.atoms).unwrap();
        assert_eq!(z1, t.z1);
        let (z2, z1_hat) = compository_encode(&t.z1, &p.comp).unwrap();
        assert_eq!(z2, t.z2);
        assert_eq!(z1_hat, t.z1_hat);
    }

    #[test]
    fn zero_sparse_path_reconstructs_context_only() {
        let mut p = ModelParams::zeros(dims());
        p.dense = ModelParams::init(dims(), 3).unwrap().dense;
        let x = seeded_gaussian(4, 3, 6).unwrap();
        let t = full_forward(&x, &p).unwrap();
        assert_eq!(t.x_hat, t.x_hat_cont);
    }

    #[test]
    fn decode_innovation_cases() {
        let mut p = ModelParams::init(dims(), 13).unwrap();
        p.comp.b_dec2 = Matrix::row_vector((0..16).map(|i| i as f64 * 0.01).collect());
        p.atoms.b_dec1 = Matrix::row_vector(vec![0.2; 6]);
        let zero = decode_innovation(&Matrix::zeros(1, 6), &p).unwrap();
        let expect = p.atoms.w_dec1.matvec(p.comp.b_dec2.as_slice()).unwrap();
        for (a, b) in zero.row(0).iter().zip(&expect) {
            assert!((a - (b + 0.2)).abs() < 1e-12);
        }
        p.comp.b_dec2.fill(0.0);
        p.atoms.b_dec1.fill(0.0);
        let mut one_hot = Matrix::zeros(1, 6);
        one_hot[(0, 4)] = 1.0;
        let out = decode_innovation(&one_hot, &p).unwrap();
        let expect = p.atoms.w_dec1.matvec(&p.comp.w_dec2.col(4)).unwrap();
        for (a, b) in out.row(0).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_innovation_matches_forward_when_z1_hat_equals_z1() {
        // One-hot decoder makes z1_hat a copy of one z2 entry; pick W_enc2 so
        // that z2 selects exactly the one atom z1 uses.
        let mut p = ModelParams::zeros(dims());
        p.atoms.w_dec1 = seeded_gaussian(20, 6, 16).unwrap();
        p.atoms.w_dec1.normalize_cols();
        p.atoms.w_gate = p.atoms.w_dec1.transpose();
        p.atoms.k1 = 1;
        p.dims.k1 = 1;
        let x = Matrix::from_vec(1, 6, p.atoms.w_dec1.col(7)).unwrap();
        let t0 = full_forward(&x, &p).unwrap();
        let a = t0.active1[0][0];
        p.comp.w_enc2[(0, a)] = 1.0;
        p.comp.w_dec2[(a, 0)] = 1.0;
        let t = full_forward(&x, &p).unwrap();
        assert_eq!(t.z1_hat, t.z1);
        let dec = decode_innovation(&t.z2, &p).unwrap();
        for (u, v) in dec.as_slice().iter().zip(t.x_hat_innov.as_slice()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
