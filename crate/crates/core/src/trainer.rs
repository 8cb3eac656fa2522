//! Alternating diffusion-GAN training with checkpointing and exact resume.
//!
//! RNG use is fixed per step: the step index k ∈ {d, …, T} first, then per
//! batch item the augmentation shift (when enabled) and three symmetric
//! noise draws for A_t, A_k and the re-noised prediction. Batch items run
//! in parallel, but every reduction happens in batch order, so results do
//! not depend on the thread count.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conndata::{split_indices, write_atomic, Connectome, Group, SubjectRecord, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::graphmetrics::{metric_errors, MetricReport};
use crate::losses::{disc_loss, gen_adv_loss, recon_loss, scc_loss, LossReport};
use crate::netarch::{
    normalize_input, read_param_file, write_param_file, ArchConfig, Discriminator, Generator, ParamFile,
};
use crate::symdiffusion::{
    build_schedule, diffuse_to, sample_sc, sample_symmetric_noise, NoiseSchedule, SymmetricNoise,
};
use crate::tensorgrad::{AdamState, BoundParams, ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoGan,
    NoScc,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::NoGan, Ablation::NoScc];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoGan => "no_gan",
            Ablation::NoScc => "no_scc",
        }
    }

    fn gan(self) -> bool {
        self != Ablation::NoGan
    }

    fn scc(self) -> bool {
        self != Ablation::NoScc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "T")]
    pub t_max: usize,
    pub d: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub model_dim: usize,
    pub heads: usize,
    pub lambda_bc: f64,
    pub seed: u64,
    pub density: f64,
    pub beta_1: f64,
    #[serde(rename = "beta_T")]
    pub beta_t: f64,
    pub ablation: Ablation,
    /// Skip connection around each generator layer's GCN block.
    pub residual: bool,
    /// Random circular time shift of each training series.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            t_max: 100,
            d: 10,
            layers: 3,
            epochs: 200,
            batch_size: 16,
            lr: 1e-3,
            model_dim: 64,
            heads: 4,
            lambda_bc: 0.1,
            seed: 0,
            density: 0.2,
            beta_1: 1e-4,
            beta_t: 0.02,
            ablation: Ablation::Full,
            residual: true,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t_max == 0 || self.t_max % self.d != 0 {
            return Err(Error::Config(format!("d = {} must divide T = {}", self.d, self.t_max)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if !(self.lambda_bc >= 0.0 && self.lambda_bc.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_bc must be non-negative, got {}",
                self.lambda_bc
            )));
        }
        build_schedule(self.t_max, self.beta_1, self.beta_t)?;
        Ok(())
    }

    pub fn arch(&self, n: usize, series_len: usize) -> ArchConfig {
        ArchConfig {
            n,
            series_len,
            model_dim: self.model_dim,
            heads: self.heads,
            layers: self.layers,
            t_max: self.t_max,
            d: self.d,
            residual: self.residual,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        build_schedule(self.t_max, self.beta_1, self.beta_t)
    }

    /// SHA-256 of the canonical JSON with the epoch budget blanked, so a
    /// checkpoint can be resumed under a longer budget.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.epochs = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))?;
        c.validate()?;
        Ok(c)
    }
}

/// One subject ready for the network: standardized series and target SC.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub group: Group,
    pub input: Tensor,
    pub target: Connectome,
}

impl Sample {
    pub fn from_record(r: &SubjectRecord) -> Result<Self> {
        Ok(Sample {
            id: r.id.clone(),
            group: r.group,
            input: normalize_input(r.series()?),
            target: r.sc()?.clone(),
        })
    }
}

/// Seeded 80/20 split of `records` into (train, validation) samples.
pub fn prepare_split(records: &[SubjectRecord], seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let groups: Vec<Group> = records.iter().map(|r| r.group).collect();
    let (tr, va) = split_indices(&groups, seed);
    let take = |ix: &[usize]| {
        ix.iter()
            .map(|&i| Sample::from_record(&records[i]))
            .collect::<Result<Vec<_>>>()
    };
    Ok((take(&tr)?, take(&va)?))
}

/// Columns rotated left by `shift`.
fn roll_columns(x: &Tensor, shift: usize) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = x.row(i);
        out.extend_from_slice(&row[shift..]);
        out.extend_from_slice(&row[..shift]);
    }
    Tensor::matrix(r, c, out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCounters {
    pub steps: u64,
    pub d_updates: u64,
    pub g_updates: u64,
}

/// Everything needed to continue training bit-for-bit.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub counters: UpdateCounters,
    /// Mean loss report of every completed epoch.
    pub history: Vec<LossReport>,
    sched: NoiseSchedule,
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct ItemDraw {
    shift: usize,
    noise_t: SymmetricNoise,
    noise_k: SymmetricNoise,
    noise_fake: SymmetricNoise,
}

struct ItemPass {
    tape: Tape,
    bound: BoundParams,
    a0: Var,
    fake: Var,
    real: Connectome,
}

fn sum_grads(per_item: Vec<Vec<Tensor>>) -> Vec<Tensor> {
    let mut it = per_item.into_iter();
    let mut acc = it.next().expect("non-empty batch");
    for g in it {
        for (a, b) in acc.iter_mut().zip(g) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }
    acc
}

impl TrainState {
    /// Fresh state for panels of `n` ROIs and `series_len` points.
    pub fn new(config: TrainConfig, n: usize, series_len: usize) -> Result<Self> {
        config.validate()?;
        let arch = config.arch(n, series_len);
        let generator = Generator::new(arch.clone(), &mut seeded(config.seed, 1))?;
        let discriminator = Discriminator::new(arch, &mut seeded(config.seed, 2))?;
        let adam_g = AdamState::new(&generator.params, config.lr);
        let adam_d = AdamState::new(&discriminator.params, config.lr);
        Ok(TrainState {
            sched: config.schedule()?,
            rng: seeded(config.seed, 3),
            config,
            generator,
            discriminator,
            adam_g,
            adam_d,
            epoch: 0,
            counters: UpdateCounters::default(),
            history: Vec::new(),
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    fn scale(&self) -> f64 {
        self.config.d as f64 / self.config.t_max as f64
    }

    /// One alternating update on `batch`.
    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::Contract("train_step: empty batch".into()));
        }
        let cfg = self.config.clone();
        let arch = &self.generator.arch;
        for s in batch {
            if s.input.shape() != [arch.n, arch.series_len] || s.target.n() != arch.n {
                return Err(Error::Dimension {
                    op: "train_step",
                    left: vec![arch.n, arch.series_len],
                    right: s.input.shape().to_vec(),
                });
            }
        }
        let n = arch.n;
        let step = self.counters.steps as usize;
        let k = self.rng.random_range(1..=cfg.t_max / cfg.d) * cfg.d;
        let t = k - cfg.d;
        let draws: Vec<ItemDraw> = batch
            .iter()
            .map(|s| ItemDraw {
                shift: if cfg.augment {
                    self.rng.random_range(0..s.input.cols())
                } else {
                    0
                },
                noise_t: sample_symmetric_noise(n, &mut self.rng),
                noise_k: sample_symmetric_noise(n, &mut self.rng),
                noise_fake: sample_symmetric_noise(n, &mut self.rng),
            })
            .collect();
        let scale = self.scale();
        let inv_b = 1.0 / batch.len() as f64;

        // Generator forward on the pre-update weights; tapes stay alive for
        // the generator half-step.
        let gen = &self.generator;
        let sched = &self.sched;
        let mut passes: Vec<ItemPass> = batch
            .par_iter()
            .zip(draws.par_iter())
            .map(|(s, dr)| -> Result<ItemPass> {
                let real = diffuse_to(&s.target, t, &dr.noise_t, sched)?;
                let a_k = diffuse_to(&s.target, k, &dr.noise_k, sched)?;
                let mut tape = Tape::new();
                let bound = gen.params.bind(&mut tape, true);
                let input = if dr.shift == 0 {
                    s.input.clone()
                } else {
                    roll_columns(&s.input, dr.shift)
                };
                let x = tape.constant(input);
                let (a0, fake) = gen.forward_pair(&mut tape, &bound, &a_k, x, t, &dr.noise_fake, sched)?;
                Ok(ItemPass {
                    tape,
                    bound,
                    a0,
                    fake,
                    real,
                })
            })
            .collect::<Result<_>>()?;

        let mut report = LossReport {
            lambda_mse: 1.0,
            lambda_scc: if cfg.ablation.scc() { 1.0 } else { 0.0 },
            ..LossReport::default()
        };

        if cfg.ablation.gan() {
            let g_sum = self.generator.params.checksum();
            let disc = &self.discriminator;
            let items: Vec<(f64, Vec<Tensor>)> = passes
                .par_iter()
                .map(|p| -> Result<(f64, Vec<Tensor>)> {
                    let mut tape = Tape::new();
                    let bound = disc.params.bind(&mut tape, true);
                    let real = tape.constant(p.real.to_tensor());
                    let fake = tape.constant(p.tape.value(p.fake).clone());
                    let sr = disc.forward(&mut tape, &bound, real, t)?;
                    let sf = disc.forward(&mut tape, &bound, fake, t)?;
                    let l = disc_loss(&mut tape, &[sr], &[sf], scale)?;
                    let lv = tape.value(l).item();
                    let l = tape.scale(l, inv_b);
                    let grads = tape.backward(l)?;
                    Ok((lv, bound.collect(&grads, &disc.params)))
                })
                .collect::<Result<_>>()?;
            report.l_d = items.iter().map(|(l, _)| l).sum::<f64>() * inv_b;
            if !report.l_d.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    step,
                    what: "l_d".into(),
                });
            }
            let grads = sum_grads(items.into_iter().map(|(_, g)| g).collect());
            self.adam_d.update(&mut self.discriminator.params, &grads)?;
            self.counters.d_updates += 1;
            if self.generator.params.checksum() != g_sum {
                return Err(Error::Contract("discriminator update changed generator weights".into()));
            }
        }

        let d_sum = self.discriminator.params.checksum();
        let disc = &self.discriminator;
        let gen = &self.generator;
        let items: Vec<(LossReport, Vec<Tensor>)> = passes
            .par_iter_mut()
            .zip(batch.par_iter())
            .map(|(p, s)| -> Result<(LossReport, Vec<Tensor>)> {
                let tape = &mut p.tape;
                let mut r = LossReport::default();
                let target = tape.constant(s.target.to_tensor());
                let mse = recon_loss(tape, p.a0, target, scale)?;
                r.l_mse = tape.value(mse).item();
                let mut total = mse;
                if cfg.ablation.gan() {
                    let dbound = disc.params.bind(tape, false);
                    let sf = disc.forward(tape, &dbound, p.fake, t)?;
                    let lg = gen_adv_loss(tape, &[sf], scale)?;
                    r.l_g = tape.value(lg).item();
                    total = tape.add(total, lg)?;
                }
                if cfg.ablation.scc() {
                    let (ls, terms) = scc_loss(tape, p.a0, &s.target, cfg.lambda_bc, cfg.density)?;
                    r.l_scc_corr = terms.corr;
                    r.l_scc_bc = terms.bc;
                    total = tape.add(total, ls)?;
                }
                let total = tape.scale(total, inv_b);
                let grads = tape.backward(total)?;
                Ok((r, p.bound.collect(&grads, &gen.params)))
            })
            .collect::<Result<_>>()?;
        let reports: Vec<LossReport> = items.iter().map(|(r, _)| *r).collect();
        let m = LossReport::mean(&reports);
        report.l_g = m.l_g;
        report.l_mse = m.l_mse;
        report.l_scc_corr = m.l_scc_corr;
        report.l_scc_bc = m.l_scc_bc;
        if let Some(what) = report.first_non_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                step,
                what: what.into(),
            });
        }
        let grads = sum_grads(items.into_iter().map(|(_, g)| g).collect());
        self.adam_g.update(&mut self.generator.params, &grads)?;
        self.counters.g_updates += 1;
        if self.discriminator.params.checksum() != d_sum {
            return Err(Error::Contract("generator update changed discriminator weights".into()));
        }
        self.counters.steps += 1;
        Ok(report)
    }

    /// One pass over `train` in a freshly shuffled order. Returns the mean
    /// report, which is also appended to the history.
    pub fn run_epoch(&mut self, train: &[Sample]) -> Result<LossReport> {
        if train.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut reports = Vec::new();
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            reports.push(self.train_step(&batch)?);
        }
        let mean = LossReport::mean(&reports);
        self.history.push(mean);
        self.epoch += 1;
        Ok(mean)
    }

    /// Training-log CSV for every completed epoch.
    pub fn log_csv(&self) -> String {
        let mut s = String::from(LossReport::CSV_HEADER);
        s.push('\n');
        for (e, r) in self.history.iter().enumerate() {
            writeln!(s, "{}", r.csv_row(e)).expect("string write");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            kind: CHECKPOINT_KIND.into(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            arch: self.generator.arch.clone(),
            epoch: self.epoch,
            rng: RngState {
                seed: hex::encode(self.rng.get_seed()),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            adam_g_step: self.adam_g.step_count(),
            adam_d_step: self.adam_d.step_count(),
            counters: self.counters,
            history: self.history.clone(),
            generator_checksum: self.generator.params.checksum(),
        };
        let mut blocks = Vec::new();
        push_params(&mut blocks, "", &self.generator.params);
        push_params(&mut blocks, "", &self.discriminator.params);
        push_moments(&mut blocks, "adam_g", &self.generator.params, &self.adam_g);
        push_moments(&mut blocks, "adam_d", &self.discriminator.params, &self.adam_d);
        let meta = serde_json::to_value(meta).map_err(|e| Error::Contract(e.to_string()))?;
        write_param_file(path, &ParamFile { meta, blocks })
    }

    /// Loads a checkpoint written by [`TrainState::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let file = read_param_file(path)?;
        let meta: CheckpointMeta = serde_json::from_value(file.meta)
            .map_err(|e| Error::Version(format!("{}: not a training checkpoint ({e})", path.display())))?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(Error::Version(format!(
                "{}: unexpected kind {}",
                path.display(),
                meta.kind
            )));
        }
        if meta.config.hash() != meta.config_hash {
            return Err(Error::Version(format!(
                "{}: stored config hash is stale",
                path.display()
            )));
        }
        meta.config.validate()?;
        let mut blocks = file.blocks.into_iter().peekable();
        let mut take_until = |stop: &str| {
            let mut ps = ParamSet::new();
            while let Some((name, _)) = blocks.peek() {
                if name.starts_with(stop) {
                    break;
                }
                let (name, t) = blocks.next().expect("peeked");
                ps.push(name, t);
            }
            ps
        };
        let generator = Generator::from_params(meta.arch.clone(), take_until("disc."))?;
        let discriminator = Discriminator::from_params(meta.arch.clone(), take_until("adam_g."))?;
        let mut moments = |prefix: &str, params: &ParamSet| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
            let mut m = Vec::new();
            let mut v = Vec::new();
            for which in ["m", "v"] {
                for (i, name) in params.names().iter().enumerate() {
                    let (got, t) = blocks
                        .next()
                        .ok_or_else(|| Error::Version("checkpoint truncated".into()))?;
                    let want = format!("{prefix}.{which}.{name}");
                    if got != want || t.shape() != params.values()[i].shape() {
                        return Err(Error::Version(format!("expected block {want}, found {got}")));
                    }
                    if which == "m" { &mut m } else { &mut v }.push(t.into_data());
                }
            }
            Ok((m, v))
        };
        let (gm, gv) = moments("adam_g", &generator.params)?;
        let (dm, dv) = moments("adam_d", &discriminator.params)?;
        if generator.params.checksum() != meta.generator_checksum {
            return Err(Error::Version(format!(
                "{}: generator checksum mismatch",
                path.display()
            )));
        }
        let seed: [u8; 32] = hex::decode(&meta.rng.seed)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Version("bad rng seed".into()))?;
        let word_pos: u128 = meta
            .rng
            .word_pos
            .parse()
            .map_err(|_| Error::Version("bad rng position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(meta.rng.stream);
        rng.set_word_pos(word_pos);
        let lr = meta.config.lr;
        Ok(TrainState {
            sched: meta.config.schedule()?,
            adam_g: AdamState::from_parts(lr, meta.adam_g_step, gm, gv),
            adam_d: AdamState::from_parts(lr, meta.adam_d_step, dm, dv),
            config: meta.config,
            generator,
            discriminator,
            epoch: meta.epoch,
            rng,
            counters: meta.counters,
            history: meta.history,
        })
    }

    /// Loads and checks the stored config against `config` (ignoring the
    /// epoch budget). The returned state uses `config.epochs`.
    pub fn resume(path: &Path, config: &TrainConfig) -> Result<Self> {
        let mut st = Self::load(path)?;
        if st.config.hash() != config.hash() {
            return Err(Error::Version(format!(
                "{}: config hash {} does not match {}",
                path.display(),
                st.config.hash(),
                config.hash()
            )));
        }
        st.config.epochs = config.epochs;
        Ok(st)
    }
}

fn push_params(blocks: &mut Vec<(String, Tensor)>, prefix: &str, ps: &ParamSet) {
    for (name, t) in ps.names().iter().zip(ps.values()) {
        blocks.push((format!("{prefix}{name}"), t.clone()));
    }
}

fn push_moments(blocks: &mut Vec<(String, Tensor)>, prefix: &str, ps: &ParamSet, adam: &AdamState) {
    for (which, mom) in [("m", adam.first_moments()), ("v", adam.second_moments())] {
        for ((name, t), data) in ps.names().iter().zip(ps.values()).zip(mom) {
            blocks.push((
                format!("{prefix}.{which}.{name}"),
                Tensor::matrix(t.rows(), t.cols(), data.clone()),
            ));
        }
    }
}

const CHECKPOINT_KIND: &str = "train-state";

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    config_hash: String,
    config: TrainConfig,
    arch: ArchConfig,
    epoch: usize,
    rng: RngState,
    adam_g_step: u64,
    adam_d_step: u64,
    counters: UpdateCounters,
    history: Vec<LossReport>,
    generator_checksum: String,
}

/// Progress notification after each epoch.
#[derive(Clone, Copy, Debug)]
pub struct EpochEvent<'a> {
    pub epoch: usize,
    pub report: &'a LossReport,
    pub state: &'a TrainState,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const DIVERGED_FILE: &str = "diverged.ckpt";
pub const LOG_FILE: &str = "train_log.csv";

/// Runs epochs until `state.config.epochs` are complete. With `out`, the
/// checkpoint and training log are rewritten atomically after every
/// epoch, and on a numeric failure the current state is saved to
/// `diverged.ckpt` before the error is returned.
pub fn train(
    state: &mut TrainState,
    train: &[Sample],
    out: Option<&Path>,
    mut observe: impl FnMut(EpochEvent<'_>),
) -> Result<()> {
    while state.epoch < state.config.epochs {
        let report = match state.run_epoch(train) {
            Ok(r) => r,
            Err(e) => {
                if let (Some(dir), Error::NonFiniteLoss { .. } | Error::Divergence { .. }) = (out, &e) {
                    state.save(&dir.join(DIVERGED_FILE))?;
                }
                return Err(e);
            }
        };
        if let Some(dir) = out {
            state.save(&dir.join(CHECKPOINT_FILE))?;
            write_atomic(&dir.join(LOG_FILE), state.log_csv().as_bytes())?;
        }
        observe(EpochEvent {
            epoch: state.epoch,
            report: &report,
            state,
        });
    }
    Ok(())
}

/// Per-subject sampling RNG: the seed with the subject's position as stream.
pub fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    seeded(seed, index as u64)
}

/// Samples every subject of `samples` (sampling RNG stream = position) and
/// scores it against the target.
pub fn evaluate(
    gen: &Generator,
    samples: &[Sample],
    sched: &NoiseSchedule,
    seed: u64,
    density: f64,
) -> Result<Vec<(Connectome, MetricReport)>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = subject_rng(seed, i);
            let pred = sample_from_input(gen, &s.input, sched, &mut rng)?;
            let m = metric_errors(&pred, &s.target, density)?;
            Ok((pred, m))
        })
        .collect()
}

/// The sampler run directly on an already standardized input.
pub fn sample_from_input<R: Rng + ?Sized>(
    gen: &Generator,
    input: &Tensor,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Connectome> {
    struct Fixed<'a>(&'a Generator, &'a Tensor);
    impl crate::symdiffusion::Denoiser for Fixed<'_> {
        fn predict(&self, a: &Connectome, _f: &TimeSeriesPanel, t: usize) -> Result<Connectome> {
            self.0.predict_clean(a, self.1, t)
        }
    }
    let dummy = TimeSeriesPanel::new(gen.arch.n, 1, vec![0.0; gen.arch.n])?;
    sample_sc(&Fixed(gen, input), &dummy, sched, gen.arch.d, rng)
}
