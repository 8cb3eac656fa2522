use rand::Rng;

use super::{gaussian_tensor, gcn_layer, ArchConfig};
use crate::error::{Error, Result};
use crate::tensorgrad::{BoundParams, ParamId, ParamSet, Tape, Tensor, Var};

/// Three GCN layers over one-hot node features, row mean, affine readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub arch: ArchConfig,
    pub params: ParamSet,
}

const W1: ParamId = ParamId(0);
const W2: ParamId = ParamId(1);
const W3: ParamId = ParamId(2);
const READOUT: ParamId = ParamId(3);
const READOUT_B: ParamId = ParamId(4);
const EMB: ParamId = ParamId(5);

fn layout(arch: &ArchConfig) -> Vec<(&'static str, usize, usize, f64)> {
    let (n, m) = (arch.n, arch.model_dim);
    let fan = |k: usize| 1.0 / (k as f64).sqrt();
    vec![
        ("disc.gcn1", n, m, fan(n)),
        ("disc.gcn2", m, m, fan(m)),
        ("disc.gcn3", m, m, fan(m)),
        ("disc.readout_w", m, 1, fan(m)),
        ("disc.readout_b", 1, 1, 0.0),
        ("emb_d", arch.n_embeddings(), m, 0.01),
    ]
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(arch: ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamSet::new();
        for (name, r, c, std) in layout(&arch) {
            params.push(name, gaussian_tensor(rng, r, c, std));
        }
        Ok(Discriminator { arch, params })
    }

    pub fn from_params(arch: ArchConfig, params: ParamSet) -> Result<Self> {
        arch.validate()?;
        let expect = layout(&arch);
        let ok = expect.len() == params.len()
            && expect
                .iter()
                .enumerate()
                .all(|(k, (name, r, c, _))| params.name(k) == *name && params.values()[k].shape() == [*r, *c]);
        if !ok {
            return Err(Error::Version(
                "discriminator tensors do not match the architecture".into(),
            ));
        }
        Ok(Discriminator { arch, params })
    }

    /// Raw least-squares score of a (possibly noisy) matrix at step t.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams, a: Var, t: usize) -> Result<Var> {
        let row = self.arch.embedding_row(t)?;
        let e = tape.row_select(bound.var(EMB), row)?;
        let a_hat = tape.gcn_normalize(a)?;
        let x0 = tape.constant(Tensor::identity(self.arch.n));
        let h = gcn_layer(tape, x0, a_hat, bound.var(W1), e)?;
        let h = tape.relu(h);
        let h = gcn_layer(tape, h, a_hat, bound.var(W2), e)?;
        let h = tape.relu(h);
        let h = gcn_layer(tape, h, a_hat, bound.var(W3), e)?;
        let pooled = tape.mean_rows(h)?;
        let s = tape.matmul(pooled, bound.var(READOUT))?;
        tape.add(s, bound.var(READOUT_B))
    }

    pub fn score(&self, a: &Tensor, t: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let av = tape.constant(a.clone());
        let s = self.forward(&mut tape, &bound, av, t)?;
        Ok(tape.value(s).data()[0])
    }
}
