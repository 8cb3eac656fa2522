//! Generator (dual-channel masked attention + GCN blocks + Gram posterior)
//! and the GCN discriminator, as tape-recorded forward passes.

mod checkpoint;
mod discriminator;
mod generator;

pub use checkpoint::{read_param_file, write_param_file, ParamFile};
pub use discriminator::Discriminator;
pub use generator::{Generator, HeadIds, LayerIds};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conndata::{Connectome, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::tensorgrad::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub n: usize,
    pub series_len: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub t_max: usize,
    pub d: usize,
    /// Adds each layer's input back onto its GCN block output.
    pub residual: bool,
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not a multiple of heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.d == 0 || self.t_max % self.d != 0 {
            return Err(Error::Config(format!(
                "d = {} does not divide T = {}",
                self.d, self.t_max
            )));
        }
        if self.n < 2 || self.series_len < 2 || self.layers == 0 {
            return Err(Error::Config("n, series_len must be >= 2 and layers >= 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// Embedding rows: one per t in {0, d, …, T}.
    pub fn n_embeddings(&self) -> usize {
        self.t_max / self.d + 1
    }

    /// Embedding row for a generator / discriminator step, which must lie
    /// on the skip grid.
    pub fn embedding_row(&self, t: usize) -> Result<usize> {
        if t % self.d != 0 || t > self.t_max {
            return Err(Error::Index {
                t,
                lo: 0,
                hi: self.t_max,
            });
        }
        Ok(t / self.d)
    }
}

pub(crate) fn gaussian_tensor<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize, std: f64) -> Tensor {
    Tensor::matrix(
        r,
        c,
        (0..r * c).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
    )
}

/// Direct (strictly above the mean off-diagonal value) and indirect pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborPartition {
    n: usize,
    direct: Vec<bool>,
    indirect: Vec<bool>,
}

impl NeighborPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direct(&self) -> &[bool] {
        &self.direct
    }

    pub fn indirect(&self) -> &[bool] {
        &self.indirect
    }

    pub fn num_direct(&self, i: usize) -> usize {
        self.direct[i * self.n..(i + 1) * self.n].iter().filter(|&&b| b).count()
    }

    pub fn num_indirect(&self, i: usize) -> usize {
        self.indirect[i * self.n..(i + 1) * self.n]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

pub fn partition_neighbors(a: &Connectome) -> NeighborPartition {
    let n = a.n();
    let tau = a.upper().iter().sum::<f64>() / (n * (n - 1) / 2).max(1) as f64;
    let mut direct = vec![false; n * n];
    let mut indirect = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if a.get(i, j) > tau {
                    direct[i * n + j] = true;
                } else {
                    indirect[i * n + j] = true;
                }
            }
        }
    }
    NeighborPartition { n, direct, indirect }
}

/// Tape handles of one attention head.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub q: Var,
    pub k1: Var,
    pub k2: Var,
    pub v: Var,
    /// Row block of the output projection belonging to this head.
    pub o: Var,
}

fn row_scale(n: usize, m: usize, count: impl Fn(usize) -> usize) -> Tensor {
    let mut t = Tensor::zeros(n, m);
    for i in 0..n {
        let s = 1.0 / (count(i).max(1) as f64).sqrt();
        t.data_mut()[i * m..(i + 1) * m].fill(s);
    }
    t
}

/// Σ_heads [Att(Q,K1; direct) + Att(Q,K2; indirect)]·V·W_O + F.
///
/// Head outputs are concatenated and projected; that equals summing each
/// head's output times its row block of W_O, which is what is recorded.
pub fn dmsa_forward(tape: &mut Tape, x: Var, part: &NeighborPartition, heads: &[HeadVars]) -> Result<Var> {
    let n = part.n();
    if tape.value(x).rows() != n {
        return Err(Error::Dimension {
            op: "dmsa",
            left: tape.value(x).shape().to_vec(),
            right: vec![n, n],
        });
    }
    let sd = tape.constant(row_scale(n, n, |i| part.num_direct(i)));
    let si = tape.constant(row_scale(n, n, |i| part.num_indirect(i)));
    let mut out = x;
    for h in heads {
        let q = tape.matmul(x, h.q)?;
        let k1 = tape.matmul(x, h.k1)?;
        let k2 = tape.matmul(x, h.k2)?;
        let v = tape.matmul(x, h.v)?;
        let l1 = tape.matmul_nt(q, k1)?;
        let l1 = tape.mul(l1, sd)?;
        let a1 = tape.masked_softmax(l1, part.direct())?;
        let l2 = tape.matmul_nt(q, k2)?;
        let l2 = tape.mul(l2, si)?;
        let a2 = tape.masked_softmax(l2, part.indirect())?;
        let att = tape.add(a1, a2)?;
        let z = tape.matmul(att, v)?;
        let proj = tape.matmul(z, h.o)?;
        out = tape.add(out, proj)?;
    }
    Ok(out)
}

/// Â·X·W + e with Â the already-normalized adjacency.
pub fn gcn_layer(tape: &mut Tape, x: Var, a_hat: Var, w: Var, e: Var) -> Result<Var> {
    let ax = tape.matmul(a_hat, x)?;
    let axw = tape.matmul(ax, w)?;
    tape.bias_add(axw, e)
}

/// LM(ReLU(GCN2(ReLU(GCN1(F) + e)) + e)) + e, with LM affine.
#[allow(clippy::too_many_arguments)]
pub fn generator_block(
    tape: &mut Tape,
    x: Var,
    a_hat: Var,
    g1: Var,
    g2: Var,
    lm_w: Var,
    lm_b: Var,
    e: Var,
) -> Result<Var> {
    let h1 = gcn_layer(tape, x, a_hat, g1, e)?;
    let h1 = tape.relu(h1);
    let h2 = gcn_layer(tape, h1, a_hat, g2, e)?;
    let h2 = tape.relu(h2);
    let lm = tape.matmul(h2, lm_w)?;
    let lm = tape.bias_add(lm, lm_b)?;
    tape.bias_add(lm, e)
}

/// σ(F·Fᵀ) with the diagonal forced to 0.
pub fn pcd(tape: &mut Tape, f: Var) -> Result<Var> {
    let n = tape.value(f).rows();
    let gram = tape.matmul_nt(f, f)?;
    let s = tape.sigmoid(gram);
    let mut off = Tensor::filled(n, n, 1.0);
    for i in 0..n {
        off.set(i, i, 0.0);
    }
    let off = tape.constant(off);
    tape.mul(s, off)
}

/// Standardizes every ROI series to zero mean and unit variance (a
/// constant series becomes all zeros).
pub fn normalize_input(f: &TimeSeriesPanel) -> Tensor {
    let s = f.s();
    let mut out = f.values().to_vec();
    for xs in out.chunks_mut(s) {
        let m = xs.iter().sum::<f64>() / s as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / s as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        xs.iter_mut().for_each(|x| *x = (*x - m) / sd);
    }
    Tensor::matrix(f.n(), s, out)
}
