//! L2-regularized logistic regression over sparse features, fitted by
//! full-batch gradient descent on implicitly standardized columns.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    cols: usize,
}

impl Csr {
    pub fn from_dense(m: &Matrix) -> Self {
        Csr::from_blocks(&[m]).expect("single block")
    }

    /// Column-wise concatenation of dense blocks, keeping nonzeros only.
    pub fn from_blocks(blocks: &[&Matrix]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows());
        if blocks.iter().any(|b| b.rows() != rows) {
            return Err(Error::invalid("feature blocks differ in row count"));
        }
        let mut out = Csr {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            cols: blocks.iter().map(|b| b.cols()).sum(),
        };
        for i in 0..rows {
            let mut offset = 0;
            for b in blocks {
                for (j, &v) in b.row(i).iter().enumerate() {
                    if v != 0.0 {
                        out.indices.push(offset + j);
                        out.values.push(v);
                    }
                }
                offset += b.cols();
            }
            out.indptr.push(out.indices.len());
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Csr {
        let mut out = Csr {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            cols: self.cols,
        };
        for &i in idx {
            for (j, v) in self.row(i) {
                out.indices.push(j);
                out.values.push(v);
            }
            out.indptr.push(out.indices.len());
        }
        out
    }

    pub fn vcat(&self, other: &Csr) -> Result<Csr> {
        if self.cols != other.cols {
            return Err(Error::length("csr vcat", self.cols, other.cols));
        }
        let mut out = self.clone();
        let base = out.indices.len();
        out.indices.extend_from_slice(&other.indices);
        out.values.extend_from_slice(&other.values);
        out.indptr.extend(other.indptr[1..].iter().map(|p| p + base));
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub l2_reg: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2_reg: 1e-4,
            max_iter: 5000,
            grad_tol: 1e-6,
        }
    }
}

/// A fitted logistic model in the original feature coordinates' frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    mean: Vec<f64>,
    /// Reciprocal standard deviation; zero for constant columns.
    inv_sd: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub loss_trace: Vec<f64>,
}

struct Standardized<'a> {
    x: &'a Csr,
    mean: &'a [f64],
    inv_sd: &'a [f64],
}

impl Standardized<'_> {
    /// `X' w + b` for standardized `X'`.
    fn margins(&self, w: &[f64], b: f64, out: &mut [f64]) {
        let scaled: Vec<f64> = w.iter().zip(self.inv_sd).map(|(w, s)| w * s).collect();
        let shift: f64 = scaled.iter().zip(self.mean).map(|(a, m)| a * m).sum();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.x.row(i).map(|(j, v)| v * scaled[j]).sum::<f64>() - shift + b;
        }
    }

    /// `X'^T r`.
    fn transpose_apply(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &ri) in r.iter().enumerate() {
            if ri != 0.0 {
                for (j, v) in self.x.row(i) {
                    out[j] += v * ri;
                }
            }
        }
        let total: f64 = r.iter().sum();
        for ((o, m), s) in out.iter_mut().zip(self.mean).zip(self.inv_sd) {
            *o = (*o - m * total) * s;
        }
    }
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

fn objective(margins: &[f64], y: &[u8], w: &[f64], l2: f64) -> f64 {
    let n = margins.len() as f64;
    let data: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &yi)| if yi != 0 { log1p_exp(-m) } else { log1p_exp(m) })
        .sum();
    data / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

impl LogisticProbe {
    pub fn fit(x: &Csr, y: &[u8], cfg: &ProbeConfig) -> Result<Self> {
        let n = x.rows();
        if y.len() != n {
            return Err(Error::length("probe labels", n, y.len()));
        }
        let pos = y.iter().filter(|&&v| v != 0).count();
        if pos == 0 || pos == n {
            return Err(Error::data("probe training split has a single class"));
        }
        let p = x.cols();
        let mut mean = vec![0.0; p];
        let mut sq = vec![0.0; p];
        for i in 0..n {
            for (j, v) in x.row(i) {
                mean[j] += v;
                sq[j] += v * v;
            }
        }
        let nf = n as f64;
        let mut inv_sd = vec![0.0; p];
        for j in 0..p {
            mean[j] /= nf;
            let var = (sq[j] / nf - mean[j] * mean[j]).max(0.0);
            let sd = libm::sqrt(var);
            inv_sd[j] = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
        }
        let s = Standardized {
            x,
            mean: &mean,
            inv_sd: &inv_sd,
        };

        // Curvature bound: logistic Hessian ≤ (1/4) X'^T X' / n + l2 (bias
        // direction included as a constant column).
        let mut v = vec![1.0; p];
        let mut lambda: f64 = 1.0;
        let mut xv = vec![0.0; n];
        let mut tmp = vec![0.0; p];
        if p > 0 {
            for _ in 0..30 {
                let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
                if norm == 0.0 {
                    break;
                }
                v.iter_mut().for_each(|a| *a /= norm);
                s.margins(&v, 0.0, &mut xv);
                s.transpose_apply(&xv, &mut tmp);
                lambda = libm::sqrt(tmp.iter().map(|a| a * a).sum::<f64>()) / nf;
                core::mem::swap(&mut v, &mut tmp);
            }
        }
        let lipschitz = 0.25 * lambda.max(1.0) + cfg.l2_reg;
        let base_step = 1.0 / (1.1 * lipschitz);

        // Gradient descent with Barzilai-Borwein step lengths, backtracked
        // until the sufficient-decrease condition holds, so the objective
        // never increases.
        let mut w = vec![0.0; p];
        let mut b = 0.0;
        let mut margins = vec![0.0; n];
        let mut resid = vec![0.0; n];
        let mut grad = vec![0.0; p + 1];
        s.margins(&w, b, &mut margins);
        let mut loss = objective(&margins, y, &w, cfg.l2_reg);
        let mut trace = vec![loss];
        let mut iterations = 0;
        let mut cand_w = vec![0.0; p];
        let mut cand_m = vec![0.0; n];
        let mut prev: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        while iterations < cfg.max_iter {
            for ((r, &m), &yi) in resid.iter_mut().zip(&margins).zip(y) {
                *r = (sigmoid(m) - f64::from(yi)) / nf;
            }
            s.transpose_apply(&resid, &mut grad[..p]);
            for (g, wj) in grad.iter_mut().zip(&w) {
                *g += cfg.l2_reg * wj;
            }
            grad[p] = resid.iter().sum();
            let gsq: f64 = grad.iter().map(|g| g * g).sum();
            if libm::sqrt(gsq) < cfg.grad_tol {
                break;
            }
            let mut step = base_step;
            if let Some((pw, pb, pg)) = &prev {
                let mut ss = (b - pb) * (b - pb);
                let mut sy = (b - pb) * (grad[p] - pg[p]);
                for j in 0..p {
                    let dw = w[j] - pw[j];
                    ss += dw * dw;
                    sy += dw * (grad[j] - pg[j]);
                }
                if sy > 0.0 && ss > 0.0 {
                    step = (ss / sy).clamp(base_step * 1e-3, base_step * 1e4);
                }
            }
            let mut accepted = false;
            for _ in 0..60 {
                for ((c, wj), g) in cand_w.iter_mut().zip(&w).zip(&grad) {
                    *c = wj - step * g;
                }
                let cand_b = b - step * grad[p];
                s.margins(&cand_w, cand_b, &mut cand_m);
                let cand_loss = objective(&cand_m, y, &cand_w, cfg.l2_reg);
                if cand_loss <= loss - 1e-4 * step * gsq {
                    prev = Some((w.clone(), b, grad.clone()));
                    core::mem::swap(&mut w, &mut cand_w);
                    core::mem::swap(&mut margins, &mut cand_m);
                    b = cand_b;
                    loss = cand_loss;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            trace.push(loss);
            if !accepted {
                break;
            }
        }
        Ok(LogisticProbe {
            mean,
            inv_sd,
            weights: w,
            bias: b,
            iterations,
            loss_trace: trace,
        })
    }

    /// Decision scores (log-odds) for each row.
    pub fn decision(&self, x: &Csr) -> Result<Vec<f64>> {
        if x.cols() != self.weights.len() {
            return Err(Error::length("probe features", self.weights.len(), x.cols()));
        }
        let s = Standardized {
            x,
            mean: &self.mean,
            inv_sd: &self.inv_sd,
        };
        let mut out = vec![0.0; x.rows()];
        s.margins(&self.weights, self.bias, &mut out);
        Ok(out)
    }
}
