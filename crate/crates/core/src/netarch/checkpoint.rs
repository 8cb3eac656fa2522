//! Parameter files: one JSON header line, then each tensor as CSV rows in
//! the order the header lists them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conndata::write_atomic;
use crate::error::{Error, Result};
use crate::tensorgrad::Tensor;

const FORMAT: &str = "symconn-params";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamFile {
    /// Caller-defined metadata (architecture, step count, …).
    pub meta: serde_json::Value,
    pub blocks: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    meta: serde_json::Value,
    blocks: Vec<BlockInfo>,
}

#[derive(Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    shape: [usize; 2],
}

pub fn write_param_file(path: &Path, file: &ParamFile) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        meta: file.meta.clone(),
        blocks: file
            .blocks
            .iter()
            .map(|(name, t)| BlockInfo {
                name: name.clone(),
                shape: [t.rows(), t.cols()],
            })
            .collect(),
    };
    let mut out = serde_json::to_string(&header).map_err(|e| Error::Data(e.to_string()))?;
    out.push('\n');
    for (_, t) in &file.blocks {
        for r in 0..t.rows() {
            for (c, v) in t.row(r).iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_param_file(path: &Path) -> Result<ParamFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty parameter file", path.display())))?;
    let header: Header =
        serde_json::from_str(first).map_err(|e| Error::Data(format!("{}: bad header: {e}", path.display())))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Version(format!(
            "{}: unsupported parameter file {} v{}",
            path.display(),
            header.format,
            header.version
        )));
    }
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for b in header.blocks {
        let [r, c] = b.shape;
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::Data(format!("{}: truncated in block {}", path.display(), b.name)))?;
            let before = data.len();
            for field in line.split(',') {
                data.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("{}:{}: bad number {field:?}", path.display(), ln + 1)))?,
                );
            }
            if data.len() - before != c {
                return Err(Error::Data(format!(
                    "{}:{}: block {} expects {c} columns",
                    path.display(),
                    ln + 1,
                    b.name
                )));
            }
        }
        blocks.push((b.name, Tensor::matrix(r, c, data)));
    }
    if lines.next().is_some() {
        return Err(Error::Data(format!(
            "{}: trailing rows after last block",
            path.display()
        )));
    }
    Ok(ParamFile {
        meta: header.meta,
        blocks,
    })
}
