//! Connectome data model, file formats, atlas pooling and the synthetic
//! planted-mapping generator.

mod io;
mod npm;
mod synth;

pub use io::write_atomic;
pub use io::{
    load_connectome, load_manifest, load_matrix, load_panel, load_volume, save_manifest, save_matrix, save_volume,
    Manifest, ManifestEntry, F2SV_MAGIC, F2SV_VERSION,
};
pub use npm::npm_parcellate;
pub use synth::{block_atlas, synth_dataset, SynthConfig, SynthDataset};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorgrad::Tensor;

/// Symmetric n×n matrix with an exactly zero diagonal.
///
/// Clean connectomes also keep entries in `[0, 1]`; noisy diffusion
/// intermediates share the type but may leave that range.
#[derive(Clone, Debug, PartialEq)]
pub struct Connectome {
    n: usize,
    values: Vec<f64>,
}

impl Connectome {
    /// Validates symmetry and the zero diagonal.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Dimension {
                op: "connectome",
                left: vec![n, n],
                right: vec![values.len()],
            });
        }
        for i in 0..n {
            let d = values[i * n + i];
            if d != 0.0 {
                return Err(Error::Validation {
                    i,
                    j: i,
                    reason: format!("diagonal is {d}, expected 0"),
                });
            }
            for j in i + 1..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !a.is_finite() {
                    return Err(Error::Validation {
                        i,
                        j,
                        reason: format!("non-finite value {a}"),
                    });
                }
                if a.to_bits() != b.to_bits() {
                    return Err(Error::Validation {
                        i,
                        j,
                        reason: format!("asymmetric: {a} vs {b} at ({j},{i})"),
                    });
                }
            }
        }
        Ok(Connectome { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Connectome {
            n,
            values: vec![0.0; n * n],
        }
    }

    /// Builds from the strict upper triangle, row by row.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != n * (n - 1) / 2 {
            return Err(Error::Dimension {
                op: "from_upper",
                left: vec![n * (n - 1) / 2],
                right: vec![upper.len()],
            });
        }
        let mut c = Connectome::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                c.set_pair(i, j, upper[k]);
                k += 1;
            }
        }
        Ok(c)
    }

    /// Mirrors the upper triangle of an arbitrary square tensor and zeroes
    /// the diagonal.
    pub fn symmetrize(t: &Tensor) -> Self {
        let n = t.rows();
        let mut c = Connectome::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                c.set_pair(i, j, t.get(i, j));
            }
        }
        c
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Sets both (i, j) and (j, i). Diagonal writes are ignored.
    pub fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        if i != j {
            self.values[i * self.n + j] = v;
            self.values[j * self.n + i] = v;
        }
    }

    /// Strict upper triangle, row-major.
    pub fn upper(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.values[i * n + i + 1..(i + 1) * n]);
        }
        out
    }

    /// Errors unless every entry lies in `[0, 1]`.
    pub fn check_unit_range(&self) -> Result<()> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let v = self.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation {
                        i,
                        j,
                        reason: format!("value {v} outside [0,1]"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn clamp_unit(&self) -> Self {
        Connectome {
            n: self.n,
            values: self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.n, self.n, self.values.clone())
    }

    /// Simultaneous row/column relabeling: output (p[i], p[j]) = input (i, j).
    pub fn permuted(&self, p: &[usize]) -> Self {
        let mut c = Connectome::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                c.values[p[i] * self.n + p[j]] = self.get(i, j);
            }
        }
        c
    }
}

/// n ROI time series of length s, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesPanel {
    n: usize,
    s: usize,
    values: Vec<f64>,
}

impl TimeSeriesPanel {
    pub fn new(n: usize, s: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * s {
            return Err(Error::Dimension {
                op: "timeseries",
                left: vec![n, s],
                right: vec![values.len()],
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite time series value at ROI {}, time {}",
                k / s,
                k % s
            )));
        }
        Ok(TimeSeriesPanel { n, s, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.s..(i + 1) * self.s]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.n, self.s, self.values.clone())
    }
}

/// X×Y×Z×S signal grid with an X×Y×Z integer atlas (0 = background).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVolume {
    dims: [usize; 4],
    atlas: Vec<i32>,
    signal: Vec<f64>,
}

impl LabeledVolume {
    pub fn new(dims: [usize; 4], atlas: Vec<i32>, signal: Vec<f64>) -> Result<Self> {
        let vox = dims[0] * dims[1] * dims[2];
        if dims.contains(&0) {
            return Err(Error::Config(format!("volume dims must be positive, got {dims:?}")));
        }
        if atlas.len() != vox || signal.len() != vox * dims[3] {
            return Err(Error::Dimension {
                op: "volume",
                left: dims.to_vec(),
                right: vec![atlas.len(), signal.len()],
            });
        }
        if let Some(&bad) = atlas.iter().find(|&&l| l < 0) {
            return Err(Error::Data(format!("negative atlas label {bad}")));
        }
        Ok(LabeledVolume { dims, atlas, signal })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn atlas(&self) -> &[i32] {
        &self.atlas
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    /// Series of one voxel (S values, contiguous).
    pub fn voxel_series(&self, v: usize) -> &[f64] {
        let s = self.dims[3];
        &self.signal[v * s..(v + 1) * s]
    }

    pub fn max_label(&self) -> usize {
        self.atlas.iter().copied().max().unwrap_or(0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "MCI")]
    Mci,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Nc => "NC",
            Group::Mci => "MCI",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub group: Group,
    pub volume: Option<LabeledVolume>,
    pub timeseries: Option<TimeSeriesPanel>,
    pub empirical_sc: Option<Connectome>,
}

impl SubjectRecord {
    /// Ingestion rule: exactly one of volume / time series must be present.
    /// A volume is pooled through NPM; the record then carries the series.
    pub fn ingest(mut self) -> Result<Self> {
        match (&self.volume, &self.timeseries) {
            (Some(v), None) => {
                self.timeseries = Some(npm_parcellate(v)?);
                Ok(self)
            }
            (None, Some(_)) => Ok(self),
            _ => Err(Error::Data(format!(
                "subject {}: exactly one of volume and timeseries is required",
                self.id
            ))),
        }
    }

    pub fn series(&self) -> Result<&TimeSeriesPanel> {
        self.timeseries
            .as_ref()
            .ok_or_else(|| Error::Data(format!("subject {} has no time series", self.id)))
    }

    pub fn sc(&self) -> Result<&Connectome> {
        self.empirical_sc
            .as_ref()
            .ok_or_else(|| Error::Data(format!("subject {} has no empirical SC", self.id)))
    }
}

const SPLIT_SALT: u64 = 0x5a17_0c0d_e5e1_f00d;

/// Seeded, group-stratified 80/20 split. Returns (train, validation) indices,
/// each sorted ascending.
pub fn split_indices(groups: &[Group], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for g in [Group::Nc, Group::Mci] {
        let mut idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        idx.shuffle(&mut rng);
        let n_val = (idx.len() as f64 * 0.2).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}
