use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::io::{save_manifest, save_matrix, save_volume};
use super::{Connectome, Group, LabeledVolume, Manifest, ManifestEntry, SubjectRecord, TimeSeriesPanel};
use crate::error::{Error, Result};

/// Parameters of the planted-mapping generator.
///
/// SC comes from a latent geometric template: ROIs scattered around
/// well-separated module centers in the unit cube, a Gaussian distance
/// kernel, per-subject positional jitter and a weak uniform background.
/// MCI subjects get `group_delta` added on ten planted edges between
/// modules: four mutually linked hubs, each with one spoke. Time series
/// follow `x[τ+1] = ρ·Â·x[τ] + ν·noise` with Â the degree-normalized SC,
/// and are painted into a block-atlas volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n: usize,
    pub s: usize,
    pub seed: u64,
    /// Kernel peak; the strongest possible template edge.
    pub peak: f64,
    /// Target fraction of within-module pairs. Sets the module count
    /// k = round(n / (1 + density·(n−1))).
    pub density: f64,
    /// Std of ROI positions around their module center.
    pub spread: f64,
    /// Kernel length scale in units of `spread`.
    pub width: f64,
    /// Minimum distance between module centers.
    pub separation: f64,
    /// Upper bound of the uniform background added to every pair.
    pub background: f64,
    /// Std of the per-subject positional jitter.
    pub jitter: f64,
    /// Strength added to each planted edge in the MCI group.
    pub group_delta: f64,
    /// Spectral radius of the dynamics matrix; must stay ≤ 0.95.
    pub rho: f64,
    pub nu: f64,
    pub burn_in: usize,
    /// Voxels per ROI block along each axis.
    pub block: [usize; 3],
    /// Atlas grid in blocks; `None` picks the smallest near-cubic grid.
    pub grid: Option<[usize; 3]>,
    pub voxel_noise: f64,
    /// Write volumes (pooled at load time) instead of ROI series.
    pub store_volumes: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 240,
            n: 16,
            s: 1024,
            seed: 0,
            peak: 1.0,
            density: 0.2,
            spread: 0.015,
            width: 12.0,
            separation: 0.5,
            background: 0.02,
            jitter: 0.01,
            group_delta: 0.3,
            rho: 0.9,
            nu: 1.0,
            burn_in: 50,
            block: [2, 1, 1],
            grid: None,
            voxel_noise: 0.0,
            store_volumes: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 4 {
            return bad(format!("n must be at least 4, got {}", self.n));
        }
        if self.s < 2 * self.n {
            return bad(format!("s must be at least 2n = {}, got {}", 2 * self.n, self.s));
        }
        if self.n_subjects < 2 {
            return bad(format!("need at least 2 subjects, got {}", self.n_subjects));
        }
        if !(self.rho > 0.0 && self.rho <= 0.95) {
            return bad(format!("rho must lie in (0, 0.95], got {}", self.rho));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return bad(format!("density must lie in (0, 1), got {}", self.density));
        }
        if !(self.spread > 0.0 && self.width > 0.0 && self.separation >= 0.0) {
            return bad("spread and width must be positive and separation non-negative".into());
        }
        if !(self.peak > 0.2 && self.peak <= 1.0) {
            return bad(format!("peak must lie in (0.2, 1], got {}", self.peak));
        }
        if self.block.contains(&0) {
            return bad("block sizes must be positive".into());
        }
        let grid = self.grid();
        if grid.contains(&0) || self.n > grid.iter().product() {
            return bad(format!("{} ROIs do not fit a {grid:?} block grid", self.n));
        }
        Ok(())
    }

    /// Module count: round(n / (1 + density·(n−1))).
    pub fn modules(&self) -> usize {
        ((self.n as f64 / (1.0 + self.density * (self.n - 1) as f64)).round() as usize).clamp(1, self.n)
    }

    pub fn grid(&self) -> [usize; 3] {
        self.grid.unwrap_or_else(|| {
            let side = (1..).find(|k| k * k * k >= self.n).unwrap();
            let mut g = [side, side, side];
            // Drop layers that would be entirely background.
            while g[2] > 1 && g[0] * g[1] * (g[2] - 1) >= self.n {
                g[2] -= 1;
            }
            g
        })
    }
}

/// Block atlas: ROI r (label r + 1) fills block r of the grid in x-fastest
/// order; leftover blocks are background.
pub fn block_atlas(n: usize, grid: [usize; 3], block: [usize; 3]) -> ([usize; 3], Vec<i32>) {
    let dims = [grid[0] * block[0], grid[1] * block[1], grid[2] * block[2]];
    let mut atlas = vec![0i32; dims[0] * dims[1] * dims[2]];
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let (bx, by, bz) = (x / block[0], y / block[1], z / block[2]);
                let cell = bx + grid[0] * (by + grid[1] * bz);
                if cell < n {
                    atlas[(x * dims[1] + y) * dims[2] + z] = cell as i32 + 1;
                }
            }
        }
    }
    (dims, atlas)
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub subjects: Vec<SubjectRecord>,
    /// The ten MCI-strengthened edges, `(i, j)` with `i < j`.
    pub planted_edges: Vec<(usize, usize)>,
    /// Per-ROI time series before painting, one per subject.
    pub planted_series: Vec<TimeSeriesPanel>,
}

struct Template {
    pos: Vec<[f64; 3]>,
    ell: f64,
    edges: Vec<(usize, usize)>,
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

fn template(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Template> {
    let n = cfg.n;
    let k = cfg.modules();
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(k);
    for _ in 0..PLACEMENT_ATTEMPTS {
        centers = (0..k).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let ok = (0..k).all(|a| (a + 1..k).all(|b| dist2(&centers[a], &centers[b]).sqrt() >= cfg.separation));
        if ok {
            break;
        }
        centers.clear();
    }
    if centers.is_empty() {
        return Err(Error::Config(format!(
            "cannot place {k} modules {} apart in the unit cube",
            cfg.separation
        )));
    }
    // ROI r belongs to module r mod k.
    let pos: Vec<[f64; 3]> = (0..n)
        .map(|r| centers[r % k].map(|c| c + cfg.spread * gaussian(rng)))
        .collect();
    let ell = cfg.width * cfg.spread;

    // Planted edges join different modules where possible; inside a module
    // the template is already near the peak and the group delta would clip.
    let between = |&(i, j): &(usize, usize)| i % k != j % k;
    let mut edges: Vec<(usize, usize)> = if n >= 8 {
        // Four mutually linked hubs, each with one spoke.
        const HUBS: [(usize, usize); 10] = [
            (0, 1),
            (0, 2),
            (0, 3),
            (1, 2),
            (1, 3),
            (2, 3),
            (0, 4),
            (1, 5),
            (2, 6),
            (3, 7),
        ];
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best: (usize, Vec<(usize, usize)>) = (0, Vec::new());
        for _ in 0..PLACEMENT_ATTEMPTS {
            perm.shuffle(rng);
            let cand: Vec<(usize, usize)> = HUBS.iter().map(|&(a, b)| ordered(perm[a], perm[b])).collect();
            let score = cand.iter().filter(|e| between(e)).count();
            if best.1.is_empty() || score > best.0 {
                best = (score, cand);
            }
            if score == HUBS.len() {
                break;
            }
        }
        best.1
    } else {
        let mut all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        all.shuffle(rng);
        all.sort_by_key(|e| !between(e));
        all.truncate(10);
        all
    };
    edges.sort_unstable();
    Ok(Template { pos, ell, edges })
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn subject_sc(cfg: &SynthConfig, tpl: &Template, group: Group, rng: &mut ChaCha8Rng) -> Connectome {
    let n = cfg.n;
    let pos: Vec<[f64; 3]> = tpl
        .pos
        .iter()
        .map(|p| [0, 1, 2].map(|k| p[k] + cfg.jitter * gaussian(rng)))
        .collect();
    let mut sc = Connectome::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let k = cfg.peak * (-dist2(&pos[i], &pos[j]) / (2.0 * tpl.ell * tpl.ell)).exp();
            let bg = cfg.background * rng.random::<f64>();
            sc.set_pair(i, j, k + bg);
        }
    }
    if group == Group::Mci {
        for &(i, j) in &tpl.edges {
            sc.set_pair(i, j, sc.get(i, j) + cfg.group_delta);
        }
    }
    sc.clamp_unit()
}

/// Simulates `x[τ+1] = ρ·D^{-1/2} A D^{-1/2} x[τ] + ν·noise`. For a
/// non-negative A with positive degrees that normalized matrix has spectral
/// radius exactly 1, so ρ is the radius of the dynamics.
fn simulate(cfg: &SynthConfig, sc: &Connectome, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, s) = (cfg.n, cfg.s);
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| sc.get(i, j)).sum::<f64>()).collect();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if deg[i] > 0.0 && deg[j] > 0.0 {
                m[i * n + j] = cfg.rho * sc.get(i, j) / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    let mut x: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
    let mut next = vec![0.0; n];
    let mut step = |x: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for i in 0..n {
            let row = &m[i * n..(i + 1) * n];
            next[i] = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + cfg.nu * gaussian(rng);
        }
        std::mem::swap(x, &mut next);
    };
    for _ in 0..cfg.burn_in {
        step(&mut x, rng);
    }
    let mut out = vec![0.0; n * s];
    for t in 0..s {
        for i in 0..n {
            out[i * s + t] = x[i];
        }
        step(&mut x, rng);
    }
    out
}

fn paint(cfg: &SynthConfig, series: &[f64], rng: &mut ChaCha8Rng) -> Result<LabeledVolume> {
    let s = cfg.s;
    let (dims, atlas) = block_atlas(cfg.n, cfg.grid(), cfg.block);
    let mut signal = vec![0.0; atlas.len() * s];
    for (v, &label) in atlas.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let r = label as usize - 1;
        let out = &mut signal[v * s..(v + 1) * s];
        out.copy_from_slice(&series[r * s..(r + 1) * s]);
        if cfg.voxel_noise > 0.0 {
            for x in out.iter_mut() {
                *x += cfg.voxel_noise * gaussian(rng);
            }
        }
    }
    LabeledVolume::new([dims[0], dims[1], dims[2], s], atlas, signal)
}

/// Deterministic given `cfg.seed`. Subject k draws from its own ChaCha
/// stream, so generation order does not matter.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tpl = template(cfg, &mut rng)?;
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    let mut planted_series = Vec::with_capacity(cfg.n_subjects);
    for k in 0..cfg.n_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64 + 1);
        let group = if k % 2 == 0 { Group::Nc } else { Group::Mci };
        let sc = subject_sc(cfg, &tpl, group, &mut rng);
        let series = simulate(cfg, &sc, &mut rng);
        let volume = paint(cfg, &series, &mut rng)?;
        planted_series.push(TimeSeriesPanel::new(cfg.n, cfg.s, series)?);
        subjects.push(
            SubjectRecord {
                id: format!("sub{k:04}"),
                group,
                volume: Some(volume),
                timeseries: None,
                empirical_sc: Some(sc),
            }
            .ingest()?,
        );
    }
    Ok(SynthDataset {
        config: cfg.clone(),
        subjects,
        planted_edges: tpl.edges,
        planted_series,
    })
}

impl SynthDataset {
    /// Writes `manifest.json` plus per-subject SC CSVs and either F2SV
    /// volumes or time-series CSVs.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        let cfg = &self.config;
        let mut entries = Vec::with_capacity(self.subjects.len());
        for sub in &self.subjects {
            let sc_rel = format!("sc/{}.csv", sub.id);
            let sc = sub.sc()?;
            save_matrix(&dir.join(&sc_rel), sc.n(), sc.n(), sc.values())?;
            let mut entry = ManifestEntry {
                id: sub.id.clone(),
                group: sub.group,
                volume: None,
                timeseries: None,
                sc: Some(sc_rel),
            };
            if cfg.store_volumes {
                let rel = format!("vol/{}.f2sv", sub.id);
                let vol = sub.volume.as_ref().expect("synthetic subjects carry volumes");
                save_volume(&dir.join(&rel), vol)?;
                entry.volume = Some(rel);
            } else {
                let rel = format!("ts/{}.csv", sub.id);
                let ts = sub.series()?;
                save_matrix(&dir.join(&rel), ts.n(), ts.s(), ts.values())?;
                entry.timeseries = Some(rel);
            }
            entries.push(entry);
        }
        let manifest = Manifest {
            n: cfg.n,
            s: cfg.s,
            seed: cfg.seed,
            planted_edges: self.planted_edges.clone(),
            subjects: entries,
        };
        save_manifest(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}
