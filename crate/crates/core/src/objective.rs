//! Tiered compositional objective and its analytic gradients.
//!
//! ```text
//! total = recon + λs·smooth + α·dir + β·mag + λ1·‖z1‖₁ + λ2·‖z2‖₁
//! ```
//!
//! Three quantities are detached: `x_hat_ctx` inside the residual, the
//! coherence targets `z1`, and the compository encoder input `z1`. Top-k and
//! gate selections contribute no gradient; gradients flow only through the
//! selected, nonzero coordinates.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{full_forward, ForwardTrace, ModelParams, ParamId};
use crate::numerics::{dot, norm2};
use crate::{Error, Matrix, Result};

/// Term weights of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub omega_rare: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_s: 0.01,
            alpha: 1.0,
            beta: 0.1,
            lambda_1: 1e-3,
            lambda_2: 1e-3,
            omega_rare: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_s,
            self.alpha,
            self.beta,
            self.lambda_1,
            self.lambda_2,
            self.omega_rare,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Batch-mean value of every term plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub smooth: f64,
    pub dir: f64,
    pub mag: f64,
    pub tax1: f64,
    pub tax2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.recon
            + w.lambda_s * self.smooth
            + w.alpha * self.dir
            + w.beta * self.mag
            + w.lambda_1 * self.tax1
            + w.lambda_2 * self.tax2
    }
}

/// Per-sample reconstruction weight `1 + y(ω − 1)`.
#[inline]
pub fn rare_weight(y: u8, omega_rare: f64) -> f64 {
    1.0 + f64::from(y) * (omega_rare - 1.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn batch_mean(m: &Matrix, f: impl Fn(&[f64]) -> f64) -> f64 {
    if m.rows() == 0 {
        return 0.0;
    }
    m.iter_rows().map(f).sum::<f64>() / m.rows() as f64
}

/// Mean of `w·‖x − x_hat‖²` with the rare-sample weight.
pub fn recon_loss(x: &Matrix, x_hat: &Matrix, y: &[u8], omega_rare: f64) -> Result<f64> {
    if x.shape() != x_hat.shape() || y.len() != x.rows() {
        return Err(Error::shape("recon_loss", x.shape(), x_hat.shape()));
    }
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..x.rows())
        .map(|i| rare_weight(y[i], omega_rare) * sq_dist(x.row(i), x_hat.row(i)))
        .sum();
    Ok(total / x.rows() as f64)
}

/// Mean contextual reconstruction energy `‖x_hat_ctx‖²`.
pub fn smooth_loss(x_hat_cont: &Matrix) -> f64 {
    batch_mean(x_hat_cont, |r| dot(r, r))
}

/// Cosine similarity with the zero-vector convention: undefined similarity
/// counts as 0, so the sample contributes 1 to the directional loss.
pub fn cosine_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// `1 − mean cos(z1_hat, z1)`.
pub fn dir_loss(z1_hat: &Matrix, z1: &Matrix) -> Result<f64> {
    if z1_hat.shape() != z1.shape() {
        return Err(Error::shape("dir_loss", z1.shape(), z1_hat.shape()));
    }
    if z1.rows() == 0 {
        return Ok(0.0);
    }
    let s: f64 = (0..z1.rows())
        .map(|i| cosine_or_zero(z1_hat.row(i), z1.row(i)))
        .sum();
    Ok(1.0 - s / z1.rows() as f64)
}

/// Mean of `(‖z1_hat‖ − ‖z1‖)²`.
pub fn mag_loss(z1_hat: &Matrix, z1: &Matrix) -> Result<f64> {
    if z1_hat.shape() != z1.shape() {
        return Err(Error::shape("mag_loss", z1.shape(), z1_hat.shape()));
    }
    if z1.rows() == 0 {
        return Ok(0.0);
    }
    let s: f64 = (0..z1.rows())
        .map(|i| {
            let d = norm2(z1_hat.row(i)) - norm2(z1.row(i));
            d * d
        })
        .sum();
    Ok(s / z1.rows() as f64)
}

/// Batch-mean L1 norms of both sparse codes.
pub fn sparsity_tax(z1: &Matrix, z2: &Matrix) -> (f64, f64) {
    let l1 = |r: &[f64]| r.iter().map(|v| v.abs()).sum::<f64>();
    (batch_mean(z1, l1), batch_mean(z2, l1))
}

/// Loss terms of a completed forward trace.
pub fn loss_breakdown(
    x: &Matrix,
    y: &[u8],
    trace: &ForwardTrace,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let (tax1, tax2) = sparsity_tax(&trace.z1, &trace.z2);
    let mut b = LossBreakdown {
        recon: recon_loss(x, &trace.x_hat, y, weights.omega_rare)?,
        smooth: smooth_loss(&trace.x_hat_cont),
        dir: dir_loss(&trace.z1_hat, &trace.z1)?,
        mag: mag_loss(&trace.z1_hat, &trace.z1)?,
        tax1,
        tax2,
        total: 0.0,
    };
    b.total = b.weighted_total(weights);
    Ok(b)
}

/// Loss without gradients.
pub fn total_loss(
    x: &Matrix,
    y: &[u8],
    params: &ModelParams,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let trace = full_forward(x, params)?;
    loss_breakdown(x, y, &trace, weights)
}

/// Gradient for every learnable tensor, indexed by [`ParamId`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            tensors: ParamId::ALL
                .iter()
                .map(|&id| {
                    let t = params.tensor(id);
                    Matrix::zeros(t.rows(), t.cols())
                })
                .collect(),
        }
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.index()]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.index()]
    }

    /// First parameter carrying a non-finite gradient, if any.
    pub fn first_non_finite(&self) -> Option<ParamId> {
        ParamId::ALL.into_iter().find(|&id| !self.get(id).is_finite())
    }
}

/// Gradient routing switches. The default detaches the residual; turning it
/// off lets reconstruction gradients leak into the dense path through
/// `x_resid`, which exists only to demonstrate the isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientOptions {
    pub detach_residual: bool,
}

impl Default for GradientOptions {
    fn default() -> Self {
        GradientOptions {
            detach_residual: true,
        }
    }
}

/// Loss, gradients for all parameters and the forward trace they came from.
pub fn loss_gradients_trace(
    x: &Matrix,
    y: &[u8],
    params: &ModelParams,
    weights: &LossWeights,
    opts: GradientOptions,
) -> Result<(LossBreakdown, Gradients, ForwardTrace)> {
    if x.rows() == 0 {
        return Err(Error::data("empty batch"));
    }
    if y.len() != x.rows() {
        return Err(Error::shape("total_loss_and_gradients", (x.rows(), 1), (y.len(), 1)));
    }
    weights.validate()?;
    let trace = full_forward(x, params)?;
    let breakdown = loss_breakdown(x, y, &trace, weights)?;
    let grads = backward(x, y, params, weights, &trace, opts);
    if let Some(id) = grads.first_non_finite() {
        return Err(Error::NonFinite(alloc::format!("gradient of {}", id.name())));
    }
    Ok((breakdown, grads, trace))
}

/// Loss breakdown and analytic gradients under the detach contract.
pub fn total_loss_and_gradients(
    x: &Matrix,
    y: &[u8],
    params: &ModelParams,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Gradients)> {
    loss_gradients_trace(x, y, params, weights, GradientOptions::default())
        .map(|(b, g, _)| (b, g))
}

fn backward(
    x: &Matrix,
    y: &[u8],
    p: &ModelParams,
    w: &LossWeights,
    t: &ForwardTrace,
    opts: GradientOptions,
) -> Gradients {
    let dims = p.dims;
    let (d, d1, d2) = (dims.input_dim, dims.d1, dims.d2);
    let inv_b = 1.0 / x.rows() as f64;
    let mut g = Gradients::zeros_like(p);

    let mut gx = vec![0.0; d];
    let mut g_resid = vec![0.0; d];
    let mut gctx = vec![0.0; d];
    let mut dh = vec![0.0; d1];

    let w_gate = p.atoms.w_gate.as_slice();
    let w_dec1 = p.atoms.w_dec1.as_slice();
    let r_mag = p.atoms.r_mag.as_slice();
    let w_dec2 = p.comp.w_dec2.as_slice();

    for i in 0..x.rows() {
        let xi = x.row(i);
        let weight = rare_weight(y[i], w.omega_rare);
        for j in 0..d {
            gx[j] = 2.0 * weight * (t.x_hat[(i, j)] - xi[j]) * inv_b;
        }

        // Innovation decoder and atomic encoder.
        for (bj, gj) in g.get_mut(ParamId::BDec1).as_mut_slice().iter_mut().zip(&gx) {
            *bj += gj;
        }
        g_resid.iter_mut().for_each(|v| *v = 0.0);
        let z1 = t.z1.row(i);
        let x_resid = t.x_resid.row(i);
        for &a in &t.active1[i] {
            let za = z1[a];
            let mut delta = w.lambda_1 * inv_b;
            {
                let gw = g.get_mut(ParamId::WDec1).as_mut_slice();
                for j in 0..d {
                    gw[j * d1 + a] += gx[j] * za;
                    delta += w_dec1[j * d1 + a] * gx[j];
                }
            }
            let scale = libm::exp(r_mag[a]);
            let gate_row = &w_gate[a * d..(a + 1) * d];
            let pre = dot(gate_row, x_resid);
            g.get_mut(ParamId::BMag).as_mut_slice()[a] += delta;
            g.get_mut(ParamId::RMag).as_mut_slice()[a] += delta * scale * pre;
            let coeff = delta * scale;
            let gw = g.get_mut(ParamId::WGate).row_mut(a);
            for (gv, xv) in gw.iter_mut().zip(x_resid) {
                *gv += coeff * xv;
            }
            if !opts.detach_residual {
                for (gr, wv) in g_resid.iter_mut().zip(gate_row) {
                    *gr += coeff * wv;
                }
            }
        }

        // Compository layer: coherence terms against the detached z1.
        let h = t.z1_hat.row(i);
        let (hn, tn) = (norm2(h), norm2(z1));
        dh.iter_mut().for_each(|v| *v = 0.0);
        if hn > 0.0 && tn > 0.0 {
            let cos = dot(h, z1) / (hn * tn);
            let c = w.alpha * inv_b;
            for a in 0..d1 {
                dh[a] -= c * (z1[a] / (hn * tn) - cos * h[a] / (hn * hn));
            }
        }
        if hn > 0.0 {
            let c = w.beta * inv_b * 2.0 * (hn - tn) / hn;
            for a in 0..d1 {
                dh[a] += c * h[a];
            }
        }
        for (bv, dv) in g.get_mut(ParamId::BDec2).as_mut_slice().iter_mut().zip(&dh) {
            *bv += dv;
        }
        let z2 = t.z2.row(i);
        for &jn in &t.active2[i] {
            let zj = z2[jn];
            let mut delta = w.lambda_2 * inv_b;
            {
                let gw = g.get_mut(ParamId::WDec2).as_mut_slice();
                for a in 0..d1 {
                    gw[a * d2 + jn] += dh[a] * zj;
                    delta += w_dec2[a * d2 + jn] * dh[a];
                }
            }
            g.get_mut(ParamId::BEnc2).as_mut_slice()[jn] += delta;
            let ge = g.get_mut(ParamId::WEnc2).row_mut(jn);
            for &a in &t.active1[i] {
                ge[a] += delta * z1[a];
            }
        }

        // Contextual path: reconstruction through x_hat plus stiffness.
        if dims.dense_enabled {
            let xc = t.x_hat_cont.row(i);
            for j in 0..d {
                gctx[j] = gx[j] + 2.0 * w.lambda_s * inv_b * xc[j] - g_resid[j];
            }
            for (bv, gv) in g.get_mut(ParamId::BDec0).as_mut_slice().iter_mut().zip(&gctx) {
                *bv += gv;
            }
            let zd = t.z_dense.row(i);
            {
                let gw = g.get_mut(ParamId::WDec0);
                for j in 0..d {
                    for (gv, zv) in gw.row_mut(j).iter_mut().zip(zd) {
                        *gv += gctx[j] * zv;
                    }
                }
            }
            let ge = g.get_mut(ParamId::WEnc0);
            for k in 0..dims.d_dense {
                let gz: f64 = (0..d).map(|j| p.dense.w_dec0[(j, k)] * gctx[j]).sum();
                for (gv, xv) in ge.row_mut(k).iter_mut().zip(xi) {
                    *gv += gz * xv;
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use crate::numerics::seeded_gaussian;

    fn rows(v: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn recon_examples() {
        let x = rows(&[&[1.0, 1.0]]);
        assert_eq!(recon_loss(&x, &x, &[1], 5.0).unwrap(), 0.0);
        let xh = rows(&[&[0.0, 0.0]]); // squared error 2
        assert_eq!(recon_loss(&x, &xh, &[1], 5.0).unwrap(), 10.0);
        let x2 = rows(&[&[1.0], &[1.0]]);
        let xh2 = rows(&[&[0.0], &[0.0]]);
        assert_eq!(recon_loss(&x2, &xh2, &[0, 1], 3.0).unwrap(), 2.0);
    }

    #[test]
    fn omega_one_is_plain_mse() {
        let x = seeded_gaussian(1, 8, 3).unwrap();
        let xh = seeded_gaussian(2, 8, 3).unwrap();
        let y = [0, 1, 0, 1, 1, 0, 0, 1];
        let plain: f64 = (0..8).map(|i| sq_dist(x.row(i), xh.row(i))).sum::<f64>() / 8.0;
        assert_eq!(recon_loss(&x, &xh, &y, 1.0).unwrap(), plain);
    }

    #[test]
    fn smooth_examples() {
        assert_eq!(smooth_loss(&Matrix::zeros(3, 2)), 0.0);
        assert_eq!(smooth_loss(&rows(&[&[3.0, 4.0]])), 25.0);
        let m = seeded_gaussian(3, 4, 5).unwrap();
        let ratio = smooth_loss(&m.scale(3.0)) / smooth_loss(&m);
        assert!((ratio - 9.0).abs() < 1e-12);
    }

    #[test]
    fn dir_examples() {
        let z = rows(&[&[1.0, 2.0, 0.0]]);
        assert!(dir_loss(&z, &z).unwrap().abs() < 1e-15);
        assert!((dir_loss(&z.scale(-1.0), &z).unwrap() - 2.0).abs() < 1e-15);
        let o = rows(&[&[0.0, 0.0, 5.0]]);
        assert!((dir_loss(&o, &z).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(dir_loss(&Matrix::zeros(1, 3), &z).unwrap(), 1.0);
    }

    #[test]
    fn mag_examples() {
        let a = rows(&[&[3.0, 0.0]]);
        let b = rows(&[&[0.0, 5.0]]);
        assert_eq!(mag_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mag_loss(&a, &b).unwrap(), 4.0);
        let c = rows(&[&[0.0, 2.0]]);
        assert_eq!(mag_loss(&Matrix::zeros(1, 2), &c).unwrap(), 4.0);
    }

    #[test]
    fn tax_examples() {
        assert_eq!(sparsity_tax(&Matrix::zeros(2, 3), &Matrix::zeros(2, 2)), (0.0, 0.0));
        let z1 = rows(&[&[1.0, -2.0, 0.0]]);
        let z2 = rows(&[&[0.5, 0.25]]);
        let (t1, t2) = sparsity_tax(&z1, &z2);
        assert_eq!(t1, 3.0);
        assert_eq!(sparsity_tax(&z1, &z2.scale(2.0)).1, 2.0 * t2);
    }

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
    fn breakdown_total_is_sum_of_parts() {
        let p = ModelParams::init(dims(), 1).unwrap();
        let x = seeded_gaussian(2, 8, 6).unwrap();
        let y = [0, 1, 0, 0, 1, 0, 0, 0];
        let w = LossWeights::default();
        let b = total_loss(&x, &y, &p, &w).unwrap();
        let manual = b.recon
            + w.lambda_s * b.smooth
            + w.alpha * b.dir
            + w.beta * b.mag
            + w.lambda_1 * b.tax1
            + w.lambda_2 * b.tax2;
        assert!((b.total - manual).abs() < 1e-12);
    }

    #[test]
    fn dead_sparse_path_only_trains_dense() {
        let mut p = ModelParams::zeros(dims());
        p.dense = ModelParams::init(dims(), 5).unwrap().dense;
        let w = LossWeights {
            lambda_s: 0.0,
            alpha: 0.0,
            beta: 0.0,
            lambda_1: 0.0,
            lambda_2: 0.0,
            omega_rare: 1.0,
        };
        let x = seeded_gaussian(6, 4, 6).unwrap();
        let (_, g) = total_loss_and_gradients(&x, &[0, 0, 1, 0], &p, &w).unwrap();
        assert!(g.get(ParamId::WGate).as_slice().iter().all(|&v| v == 0.0));
        assert!(g.get(ParamId::WDec0).max_abs() > 0.0);
    }

    #[test]
    fn smooth_gradient_stays_in_dense_path() {
        let p = ModelParams::init(dims(), 7).unwrap();
        let x = seeded_gaussian(8, 5, 6).unwrap();
        let y = [0, 0, 1, 0, 0];
        let base = LossWeights::default();
        let (_, g0) = total_loss_and_gradients(&x, &y, &p, &LossWeights { lambda_s: 0.0, ..base }).unwrap();
        let (_, g1) = total_loss_and_gradients(&x, &y, &p, &LossWeights { lambda_s: 5.0, ..base }).unwrap();
        for id in ParamId::ALL {
            if !id.is_dense() {
                assert_eq!(g0.get(id), g1.get(id), "{}", id.name());
            }
        }
        assert_ne!(g0.get(ParamId::WDec0), g1.get(ParamId::WDec0));
    }

    #[test]
    fn empty_batch_rejected() {
        let p = ModelParams::init(dims(), 1).unwrap();
        let x = Matrix::zeros(0, 6);
        assert!(total_loss_and_gradients(&x, &[], &p, &LossWeights::default()).is_err());
    }
}
