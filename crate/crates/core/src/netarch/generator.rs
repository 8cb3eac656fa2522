use rand::Rng;

use super::{
    dmsa_forward, gaussian_tensor, generator_block, normalize_input, partition_neighbors, pcd, ArchConfig, HeadVars,
};
use crate::conndata::{Connectome, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::symdiffusion::{Denoiser, NoiseSchedule, SymmetricNoise};
use crate::tensorgrad::{BoundParams, ParamId, ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadIds {
    pub q: ParamId,
    pub k1: ParamId,
    pub k2: ParamId,
    pub v: ParamId,
    pub o: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerIds {
    pub heads: Vec<HeadIds>,
    pub g1: ParamId,
    pub g2: ParamId,
    pub lm_w: ParamId,
    pub lm_b: ParamId,
}

/// Generator weights plus the id layout used to find them on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub arch: ArchConfig,
    pub params: ParamSet,
    w_in: ParamId,
    layers: Vec<LayerIds>,
    emb: ParamId,
}

/// Names and shapes in parameter order. `init` gives each entry's std.
fn layout(arch: &ArchConfig) -> Vec<(String, usize, usize, f64)> {
    let (m, hd, s) = (arch.model_dim, arch.head_dim(), arch.series_len);
    let fan = |k: usize| 1.0 / (k as f64).sqrt();
    let mut v = vec![("w_in".to_string(), s, m, 0.125 * fan(s))];
    for l in 0..arch.layers {
        for h in 0..arch.heads {
            for w in ["w_q", "w_k1", "w_k2", "w_v"] {
                v.push((format!("layer{l}.head{h}.{w}"), m, hd, fan(m)));
            }
            v.push((format!("layer{l}.head{h}.w_o"), hd, m, 0.1 * fan(m)));
        }
        v.push((format!("layer{l}.gcn1"), m, m, fan(m)));
        v.push((format!("layer{l}.gcn2"), m, m, fan(m)));
        v.push((format!("layer{l}.lm_w"), m, m, 0.1 * fan(m)));
        v.push((format!("layer{l}.lm_b"), 1, m, 0.0));
    }
    v.push(("emb_g".to_string(), arch.n_embeddings(), m, 0.01));
    v
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamSet::new();
        for (name, r, c, std) in layout(&arch) {
            params.push(name, gaussian_tensor(rng, r, c, std));
        }
        Self::from_params(arch, params)
    }

    /// Wraps existing weights after checking names and shapes.
    pub fn from_params(arch: ArchConfig, params: ParamSet) -> Result<Self> {
        arch.validate()?;
        let expect = layout(&arch);
        if expect.len() != params.len() {
            return Err(Error::Version(format!(
                "generator expects {} tensors, got {}",
                expect.len(),
                params.len()
            )));
        }
        for (k, (name, r, c, _)) in expect.iter().enumerate() {
            if params.name(k) != name || params.values()[k].shape() != [*r, *c] {
                return Err(Error::Version(format!(
                    "generator tensor {k}: expected {name} {r}x{c}, got {} {:?}",
                    params.name(k),
                    params.values()[k].shape()
                )));
            }
        }
        let mut next = 0;
        let mut id = || {
            next += 1;
            ParamId(next - 1)
        };
        let w_in = id();
        let layers = (0..arch.layers)
            .map(|_| LayerIds {
                heads: (0..arch.heads)
                    .map(|_| HeadIds {
                        q: id(),
                        k1: id(),
                        k2: id(),
                        v: id(),
                        o: id(),
                    })
                    .collect(),
                g1: id(),
                g2: id(),
                lm_w: id(),
                lm_b: id(),
            })
            .collect();
        let emb = id();
        Ok(Generator {
            arch,
            params,
            w_in,
            layers,
            emb,
        })
    }

    pub fn layers(&self) -> &[LayerIds] {
        &self.layers
    }

    pub fn input(&self, f: &TimeSeriesPanel) -> Result<Tensor> {
        if f.n() != self.arch.n || f.s() != self.arch.series_len {
            return Err(Error::Dimension {
                op: "generator input",
                left: vec![self.arch.n, self.arch.series_len],
                right: vec![f.n(), f.s()],
            });
        }
        Ok(normalize_input(f))
    }

    /// Records Ȧ_0 = G(A'_{t+d}, F, t) on `tape`. `input` is the
    /// normalized n×S panel.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        a_next: &Connectome,
        input: Var,
        t: usize,
    ) -> Result<Var> {
        let row = self.arch.embedding_row(t)?;
        if t + self.arch.d > self.arch.t_max {
            return Err(Error::Index {
                t,
                lo: 0,
                hi: self.arch.t_max - self.arch.d,
            });
        }
        let e = tape.row_select(bound.var(self.emb), row)?;
        let part = partition_neighbors(a_next);
        let a = tape.constant(a_next.to_tensor());
        let a_hat = tape.gcn_normalize(a)?;
        let mut x = tape.matmul(input, bound.var(self.w_in))?;
        for layer in &self.layers {
            let heads: Vec<HeadVars> = layer
                .heads
                .iter()
                .map(|h| HeadVars {
                    q: bound.var(h.q),
                    k1: bound.var(h.k1),
                    k2: bound.var(h.k2),
                    v: bound.var(h.v),
                    o: bound.var(h.o),
                })
                .collect();
            let att = dmsa_forward(tape, x, &part, &heads)?;
            let block = generator_block(
                tape,
                att,
                a_hat,
                bound.var(layer.g1),
                bound.var(layer.g2),
                bound.var(layer.lm_w),
                bound.var(layer.lm_b),
                e,
            )?;
            x = if self.arch.residual {
                tape.add(att, block)?
            } else {
                block
            };
        }
        pcd(tape, x)
    }

    /// (Ȧ_0, A'_t): the prediction and its re-noising to step t with
    /// `noise` (ignored at t = 0, where A'_0 = Ȧ_0).
    #[allow(clippy::too_many_arguments)]
    pub fn forward_pair(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        a_next: &Connectome,
        input: Var,
        t: usize,
        noise: &SymmetricNoise,
        sched: &NoiseSchedule,
    ) -> Result<(Var, Var)> {
        let a0 = self.forward(tape, bound, a_next, input, t)?;
        if t == 0 {
            return Ok((a0, a0));
        }
        let eb = sched.eta_bar(t);
        let scaled = tape.scale(a0, eb.sqrt());
        let mut n = noise.0.to_tensor();
        n.data_mut().iter_mut().for_each(|v| *v *= (1.0 - eb).sqrt());
        let n = tape.constant(n);
        Ok((a0, tape.add(scaled, n)?))
    }

    /// Ȧ_0 without recording gradients.
    pub fn predict_clean(&self, a_next: &Connectome, input: &Tensor, t: usize) -> Result<Connectome> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let out = self.forward(&mut tape, &bound, a_next, x, t)?;
        Ok(Connectome::symmetrize(tape.value(out)))
    }
}

impl Denoiser for Generator {
    fn predict(&self, a_next: &Connectome, f: &TimeSeriesPanel, t: usize) -> Result<Connectome> {
        self.predict_clean(a_next, &self.input(f)?, t)
    }
}
