use super::{LabeledVolume, TimeSeriesPanel};
use crate::error::{Error, Result};

/// Atlas-mean pooling: row i, column τ is the mean signal over voxels
/// labeled i + 1 at time τ. Labels run 1..=n where n is the largest label;
/// every one of them must own at least one voxel.
pub fn npm_parcellate(volume: &LabeledVolume) -> Result<TimeSeriesPanel> {
    let n = volume.max_label();
    let s = volume.dims()[3];
    let mut counts = vec![0usize; n];
    let mut sums = vec![0.0; n * s];
    for (v, &label) in volume.atlas().iter().enumerate() {
        if label == 0 {
            continue;
        }
        let r = label as usize - 1;
        counts[r] += 1;
        let row = &mut sums[r * s..(r + 1) * s];
        for (acc, x) in row.iter_mut().zip(volume.voxel_series(v)) {
            *acc += x;
        }
    }
    let missing: Vec<u32> = (0..n).filter(|&r| counts[r] == 0).map(|r| r as u32 + 1).collect();
    if n == 0 || !missing.is_empty() {
        return Err(Error::AtlasCoverage { missing });
    }
    for r in 0..n {
        let c = counts[r] as f64;
        for x in &mut sums[r * s..(r + 1) * s] {
            *x /= c;
        }
    }
    TimeSeriesPanel::new(n, s, sums)
}
