use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Connectome, Group, LabeledVolume, SubjectRecord, TimeSeriesPanel};
use crate::error::{Error, Result};

pub const F2SV_MAGIC: &[u8; 4] = b"F2SV";
pub const F2SV_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 16;

/// Writes a row-major matrix as CSV, one line per row. Values use the
/// shortest decimal form that parses back to the same bits.
pub fn save_matrix(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(rows * cols * 20);
    for r in 0..rows {
        for (c, v) in values[r * cols..(r + 1) * cols].iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Parses a CSV matrix into (rows, cols, row-major values).
pub fn load_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("{}:{}: bad number {field:?}", path.display(), ln + 1)))?;
            values.push(v);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Data(format!(
                    "{}:{}: expected {c} columns, found {width}",
                    path.display(),
                    ln + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), values))
}

/// Loads and validates a connectome CSV.
pub fn load_connectome(path: &Path) -> Result<Connectome> {
    let (r, c, v) = load_matrix(path)?;
    if r != c {
        return Err(Error::Dimension {
            op: "load_connectome",
            left: vec![r],
            right: vec![c],
        });
    }
    Connectome::new(r, v)
}

pub fn load_panel(path: &Path) -> Result<TimeSeriesPanel> {
    let (r, c, v) = load_matrix(path)?;
    TimeSeriesPanel::new(r, c, v)
}

pub fn save_volume(path: &Path, vol: &LabeledVolume) -> Result<()> {
    let dims = vol.dims();
    let mut buf = Vec::with_capacity(HEADER_LEN + vol.atlas().len() * 4 + vol.signal().len() * 8);
    buf.extend_from_slice(F2SV_MAGIC);
    buf.extend_from_slice(&F2SV_VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Config(format!("volume dim {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for l in vol.atlas() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for x in vol.signal() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    write_atomic(path, &buf)
}

pub fn load_volume(path: &Path) -> Result<LabeledVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_volume(&bytes)
}

fn take<'a>(bytes: &'a [u8], at: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    bytes.get(at..at + len).ok_or_else(|| Error::Format {
        offset: bytes.len(),
        msg: format!("truncated while reading {what} ({len} bytes at offset {at})"),
    })
}

pub(crate) fn parse_volume(bytes: &[u8]) -> Result<LabeledVolume> {
    if take(bytes, 0, 4, "magic")? != F2SV_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic, expected F2SV".into(),
        });
    }
    let version = u16::from_le_bytes(take(bytes, 4, 2, "version")?.try_into().unwrap());
    if version != F2SV_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let mut dims = [0usize; 4];
    for (k, d) in dims.iter_mut().enumerate() {
        let at = 6 + 4 * k;
        *d = u32::from_le_bytes(take(bytes, at, 4, "dims")?.try_into().unwrap()) as usize;
        if *d == 0 {
            return Err(Error::Format {
                offset: at,
                msg: "zero dimension".into(),
            });
        }
    }
    let vox = dims[0] * dims[1] * dims[2];
    let atlas_bytes = take(bytes, HEADER_LEN, vox * 4, "atlas")?;
    let atlas: Vec<i32> = atlas_bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(k) = atlas.iter().position(|&l| l < 0) {
        return Err(Error::Format {
            offset: HEADER_LEN + 4 * k,
            msg: format!("negative atlas label {}", atlas[k]),
        });
    }
    let sig_at = HEADER_LEN + vox * 4;
    let sig_bytes = take(bytes, sig_at, vox * dims[3] * 8, "signal")?;
    let end = sig_at + sig_bytes.len();
    if bytes.len() != end {
        return Err(Error::Format {
            offset: end,
            msg: format!("{} trailing bytes", bytes.len() - end),
        });
    }
    let signal = sig_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LabeledVolume::new(dims, atlas, signal)
}

/// Dataset index stored next to the per-subject files. Paths are relative
/// to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub s: usize,
    pub seed: u64,
    /// MCI-strengthened edges, `(i, j)` with `i < j`. Empty for real data.
    #[serde(default)]
    pub planted_edges: Vec<(usize, usize)>,
    pub subjects: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub group: Group,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeseries: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sc: Option<String>,
}

pub fn save_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

impl Manifest {
    pub fn groups(&self) -> Vec<Group> {
        self.subjects.iter().map(|s| s.group).collect()
    }

    /// Reads every subject's files and applies the ingestion rule.
    pub fn load_subjects(&self, dir: &Path) -> Result<Vec<SubjectRecord>> {
        self.subjects.iter().map(|e| e.load(dir)).collect()
    }
}

impl ManifestEntry {
    pub fn load(&self, dir: &Path) -> Result<SubjectRecord> {
        let rel = |p: &String| -> PathBuf { dir.join(p) };
        let volume = self.volume.as_ref().map(|p| load_volume(&rel(p))).transpose()?;
        let timeseries = self.timeseries.as_ref().map(|p| load_panel(&rel(p))).transpose()?;
        let empirical_sc = self.sc.as_ref().map(|p| load_connectome(&rel(p))).transpose()?;
        if let Some(sc) = &empirical_sc {
            sc.check_unit_range()?;
        }
        SubjectRecord {
            id: self.id.clone(),
            group: self.group,
            volume,
            timeseries,
            empirical_sc,
        }
        .ingest()
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
