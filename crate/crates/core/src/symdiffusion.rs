//! Symmetric forward diffusion on connectomes and the few-step sampler.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conndata::{Connectome, TimeSeriesPanel};
use crate::error::{Error, Result};

/// Linear variance schedule over t = 1..=T with η̃_0 = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    t_max: usize,
    beta: Vec<f64>,
    eta: Vec<f64>,
    eta_bar: Vec<f64>,
}

pub fn build_schedule(t_max: usize, beta_1: f64, beta_t: f64) -> Result<NoiseSchedule> {
    if t_max == 0 {
        return Err(Error::Config("schedule needs T >= 1".into()));
    }
    if !(beta_1 > 0.0 && beta_1 <= beta_t && beta_t < 1.0) {
        return Err(Error::Config(format!(
            "need 0 < beta_1 <= beta_T < 1, got {beta_1} and {beta_t}"
        )));
    }
    let beta: Vec<f64> = (0..t_max)
        .map(|k| {
            if t_max == 1 {
                beta_1
            } else {
                beta_1 + (beta_t - beta_1) * k as f64 / (t_max - 1) as f64
            }
        })
        .collect();
    let eta: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut eta_bar = Vec::with_capacity(t_max + 1);
    eta_bar.push(1.0);
    for e in &eta {
        eta_bar.push(eta_bar.last().unwrap() * e);
    }
    Ok(NoiseSchedule {
        t_max,
        beta,
        eta,
        eta_bar,
    })
}

impl NoiseSchedule {
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// β_t for 1 ≤ t ≤ T.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn eta(&self, t: usize) -> f64 {
        self.eta[t - 1]
    }

    /// η̃_t for 0 ≤ t ≤ T.
    pub fn eta_bar(&self, t: usize) -> f64 {
        self.eta_bar[t]
    }

    fn check(&self, t: usize, lo: usize) -> Result<()> {
        if t < lo || t > self.t_max {
            Err(Error::Index { t, lo, hi: self.t_max })
        } else {
            Ok(())
        }
    }
}

/// S = (ε + εᵀ)/2 with diag(ε) = 0; off-diagonal variance 1/2.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricNoise(pub Connectome);

impl SymmetricNoise {
    pub fn zeros(n: usize) -> Self {
        SymmetricNoise(Connectome::zeros(n))
    }
}

pub fn sample_symmetric_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SymmetricNoise {
    let mut eps = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                eps[i * n + j] = rng.sample(StandardNormal);
            }
        }
    }
    let mut s = Connectome::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            s.set_pair(i, j, 0.5 * (eps[i * n + j] + eps[j * n + i]));
        }
    }
    SymmetricNoise(s)
}

fn combine(a: &Connectome, ca: f64, noise: &SymmetricNoise, cn: f64) -> Result<Connectome> {
    let n = a.n();
    if noise.0.n() != n {
        return Err(Error::Dimension {
            op: "diffuse",
            left: vec![n, n],
            right: vec![noise.0.n(), noise.0.n()],
        });
    }
    let mut out = Connectome::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            out.set_pair(i, j, ca * a.get(i, j) + cn * noise.0.get(i, j));
        }
    }
    Ok(out)
}

/// A_{t+1} = √(1−β_t)·A_t + (√β_t/2)(ε + εᵀ).
pub fn diffuse_step(a_t: &Connectome, t: usize, noise: &SymmetricNoise, sched: &NoiseSchedule) -> Result<Connectome> {
    sched.check(t, 1)?;
    let b = sched.beta(t);
    combine(a_t, (1.0 - b).sqrt(), noise, b.sqrt())
}

/// A_t = √η̃_t·A_0 + (√(1−η̃_t)/2)(ε + εᵀ); t = 0 returns A_0.
pub fn diffuse_to(a0: &Connectome, t: usize, noise: &SymmetricNoise, sched: &NoiseSchedule) -> Result<Connectome> {
    sched.check(t, 0)?;
    if t == 0 {
        return Ok(a0.clone());
    }
    let eb = sched.eta_bar(t);
    combine(a0, eb.sqrt(), noise, (1.0 - eb).sqrt())
}

/// Posterior re-noising of a predicted clean matrix to step t.
pub fn renoise_prediction(
    a0_hat: &Connectome,
    t: usize,
    noise: &SymmetricNoise,
    sched: &NoiseSchedule,
) -> Result<Connectome> {
    diffuse_to(a0_hat, t, noise, sched)
}

/// Anything that predicts the clean matrix from (A'_{t+d}, F, t).
pub trait Denoiser {
    fn predict(&self, a_next: &Connectome, f: &TimeSeriesPanel, t: usize) -> Result<Connectome>;
}

/// Few-step sampler. Starts from A_T = (ε + εᵀ)/2 and makes exactly T/d
/// generator calls at t = T−d, T−2d, …, 0. Every intermediate A'_t (and
/// the start) is passed to `observe`.
pub fn sample_sc_with<G, R>(
    gen: &G,
    f: &TimeSeriesPanel,
    sched: &NoiseSchedule,
    d: usize,
    rng: &mut R,
    mut observe: impl FnMut(usize, &Connectome),
) -> Result<Connectome>
where
    G: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    let t_max = sched.t_max();
    if d == 0 || t_max % d != 0 {
        return Err(Error::Config(format!("skip step {d} does not divide T = {t_max}")));
    }
    let n = f.n();
    let mut a = sample_symmetric_noise(n, rng).0;
    observe(t_max, &a);
    let mut t = t_max;
    while t > 0 {
        t -= d;
        let a0_hat = gen.predict(&a, f, t)?;
        a = if t > 0 {
            let eps = sample_symmetric_noise(n, rng);
            renoise_prediction(&a0_hat, t, &eps, sched)?
        } else {
            a0_hat
        };
        observe(t, &a);
    }
    Ok(a.clamp_unit())
}

pub fn sample_sc<G, R>(gen: &G, f: &TimeSeriesPanel, sched: &NoiseSchedule, d: usize, rng: &mut R) -> Result<Connectome>
where
    G: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    sample_sc_with(gen, f, sched, d, rng, |_, _| {})
}
