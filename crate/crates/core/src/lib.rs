//! Symmetric diffusion-GAN prediction of structural connectomes from
//! regional fMRI time series, with the synthetic data, training, sampling
//! and graph-metric evaluation around it.

pub mod analysis;
pub mod conndata;
pub mod error;
pub mod graphmetrics;
pub mod losses;
pub mod netarch;
pub mod symdiffusion;
pub mod tensorgrad;
pub mod trainer;

pub use analysis::{analyze, AnalysisReport};
pub use conndata::{Connectome, Group, LabeledVolume, Manifest, SubjectRecord, SynthConfig, TimeSeriesPanel};
pub use error::{Error, Result};
pub use graphmetrics::{BinaryGraph, MetricReport};
pub use losses::LossReport;
pub use netarch::{ArchConfig, Discriminator, Generator};
pub use symdiffusion::{Denoiser, NoiseSchedule, SymmetricNoise};
pub use tensorgrad::{AdamState, ParamSet, Tape, Tensor};
pub use trainer::{Ablation, Sample, TrainConfig, TrainState};
