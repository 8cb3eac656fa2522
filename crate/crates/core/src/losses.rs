//! Least-squares adversarial losses, reconstruction loss and the
//! spatially connected consistency loss.
//!
//! Adversarial and reconstruction terms take an explicit `scale` (d/T in
//! training). The consistency loss is unscaled.

use serde::{Deserialize, Serialize};

use crate::conndata::Connectome;
use crate::error::{Error, Result};
use crate::graphmetrics::{betweenness, binarize};
use crate::tensorgrad::{Tape, Tensor, Var};

/// Loss values of one step (or the mean over an epoch).
///
/// `l_scc_bc` is the weighted betweenness contribution λ_bc·Σ|ΔBC|, so the
/// full consistency loss is `l_scc_corr + l_scc_bc`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_d: f64,
    pub l_g: f64,
    pub l_mse: f64,
    pub l_scc_corr: f64,
    pub l_scc_bc: f64,
    pub lambda_mse: f64,
    pub lambda_scc: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "epoch,l_d,l_g,l_mse,l_scc_corr,l_scc_bc";

    pub fn csv_row(&self, epoch: usize) -> String {
        format!(
            "{epoch},{},{},{},{},{}",
            self.l_d, self.l_g, self.l_mse, self.l_scc_corr, self.l_scc_bc
        )
    }

    pub fn all_finite(&self) -> bool {
        [self.l_d, self.l_g, self.l_mse, self.l_scc_corr, self.l_scc_bc]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("l_d", self.l_d),
            ("l_g", self.l_g),
            ("l_mse", self.l_mse),
            ("l_scc_corr", self.l_scc_corr),
            ("l_scc_bc", self.l_scc_bc),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(k, _)| k)
    }

    /// Entrywise mean of `reports` (weights taken from the first one).
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let Some(first) = reports.first() else {
            return LossReport::default();
        };
        let k = reports.len() as f64;
        let avg = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        LossReport {
            l_d: avg(|r| r.l_d),
            l_g: avg(|r| r.l_g),
            l_mse: avg(|r| r.l_mse),
            l_scc_corr: avg(|r| r.l_scc_corr),
            l_scc_bc: avg(|r| r.l_scc_bc),
            lambda_mse: first.lambda_mse,
            lambda_scc: first.lambda_scc,
        }
    }
}

fn check_scores(tape: &Tape, op: &'static str, scores: &[Var]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Contract(format!("{op}: empty batch")));
    }
    for &s in scores {
        if !tape.value(s).is_scalar() {
            return Err(Error::Dimension {
                op,
                left: tape.value(s).shape().to_vec(),
                right: vec![1, 1],
            });
        }
    }
    Ok(())
}

/// Σ (s − target)² / len.
fn mean_sq_dev(tape: &mut Tape, scores: &[Var], target: f64) -> Result<Var> {
    let c = tape.constant(Tensor::scalar(target));
    let mut acc: Option<Var> = None;
    for &s in scores {
        let d = tape.sub(s, c)?;
        let sq = tape.mul(d, d)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, sq)?,
            None => sq,
        });
    }
    let total = acc.expect("non-empty");
    Ok(tape.scale(total, 1.0 / scores.len() as f64))
}

/// scale·[mean((D(real) − 1)²) + mean(D(fake)²)].
pub fn disc_loss(tape: &mut Tape, real: &[Var], fake: &[Var], scale: f64) -> Result<Var> {
    check_scores(tape, "disc_loss", real)?;
    check_scores(tape, "disc_loss", fake)?;
    let r = mean_sq_dev(tape, real, 1.0)?;
    let f = mean_sq_dev(tape, fake, 0.0)?;
    let sum = tape.add(r, f)?;
    Ok(tape.scale(sum, scale))
}

/// scale·mean((D(fake) − 1)²).
pub fn gen_adv_loss(tape: &mut Tape, fake: &[Var], scale: f64) -> Result<Var> {
    check_scores(tape, "gen_adv_loss", fake)?;
    let f = mean_sq_dev(tape, fake, 1.0)?;
    Ok(tape.scale(f, scale))
}

/// scale·mean over off-diagonal entries of (pred − target)².
pub fn recon_loss(tape: &mut Tape, pred: Var, target: Var, scale: f64) -> Result<Var> {
    let (p, q) = (tape.value(pred), tape.value(target));
    if p.shape() != q.shape() || !p.is_matrix() || p.rows() != p.cols() || p.rows() < 2 {
        return Err(Error::Dimension {
            op: "recon_loss",
            left: p.shape().to_vec(),
            right: q.shape().to_vec(),
        });
    }
    let n = p.rows();
    let mut off = Tensor::filled(n, n, 1.0);
    for i in 0..n {
        off.set(i, i, 0.0);
    }
    let off = tape.constant(off);
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    let sq = tape.mul(sq, off)?;
    let s = tape.sum(sq);
    Ok(tape.scale(s, scale / (n * (n - 1)) as f64))
}

/// Pearson correlation over the strict upper triangle; 0 if either side
/// is constant.
pub fn pearson(a: &Connectome, b: &Connectome) -> f64 {
    crate::graphmetrics::pearson(&a.upper(), &b.upper())
}

/// Σ_k |BC_k(pred) − BC_k(target)| on graphs binarized at `density`.
pub fn bc_discrepancy(pred: &Connectome, target: &Connectome, density: f64) -> Result<f64> {
    if pred.n() != target.n() {
        return Err(Error::Dimension {
            op: "bc_discrepancy",
            left: vec![pred.n(), pred.n()],
            right: vec![target.n(), target.n()],
        });
    }
    let bp = betweenness(&binarize(pred, density)?);
    let bt = betweenness(&binarize(target, density)?);
    Ok(bp.iter().zip(&bt).map(|(x, y)| (x - y).abs()).sum())
}

/// Consistency loss term values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SccTerms {
    pub corr: f64,
    pub bc: f64,
}

/// (1 − r(pred, target)) + λ_bc·Σ|ΔBC|. The betweenness part enters as a
/// constant: it adds to the value but carries no gradient.
pub fn scc_loss(
    tape: &mut Tape,
    pred: Var,
    target: &Connectome,
    lambda_bc: f64,
    density: f64,
) -> Result<(Var, SccTerms)> {
    let p = Connectome::symmetrize(tape.value(pred));
    let bc = lambda_bc * bc_discrepancy(&p, target, density)?;
    let t = tape.constant(target.to_tensor());
    let r = tape.pearson(pred, t)?;
    let one_minus = tape.scale(r, -1.0);
    let c = tape.constant(Tensor::scalar(1.0 + bc));
    let loss = tape.add(one_minus, c)?;
    let corr = 1.0 - tape.value(r).item();
    Ok((loss, SccTerms { corr, bc }))
}
