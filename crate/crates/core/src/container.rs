//! `docclean-ckpt-v1` tensor container.
//!
//! Layout: a UTF-8 manifest
//!
//! ```text
//! docclean-ckpt-v1
//! meta <key> <value>
//! tensor <name> f32 <d0,d1,..> <offset> <length>
//! end
//! ```
//!
//! zero-padded to a 64-byte boundary, followed by the little-endian f32
//! payloads. Offsets are relative to the payload start and 64-byte aligned.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{CheckpointError, Error, Result};
use crate::tensor::ParamTensor;

pub const FORMAT_VERSION: &str = "docclean-ckpt-v1";
const ALIGN: usize = 64;
const VERSION_PREFIX: &str = "docclean-ckpt-";

fn align(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, ParamTensor<f32>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&ParamTensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = format!("{FORMAT_VERSION}\n");
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(Error::Config(format!("invalid metadata entry `{k}`")));
            }
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0;
        for (name, t) in &self.tensors {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(Error::Config(format!("invalid tensor name `{name}`")));
            }
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            let length = t.data.len() * 4;
            manifest.push_str(&format!("tensor {name} f32 {} {offset} {length}\n", dims.join(",")));
            offset = align(offset + length);
        }
        manifest.push_str("end\n");
        let start = align(manifest.len());
        let mut bytes = manifest.into_bytes();
        bytes.resize(start, 0);
        for (_, t) in &self.tensors {
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.resize(start + align(bytes.len() - start), 0);
        }
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let end_marker = b"\nend\n";
        let manifest_end = bytes
            .windows(end_marker.len())
            .position(|w| w == end_marker)
            .map(|p| p + end_marker.len());
        let first_line = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
        let first_line = String::from_utf8_lossy(first_line);
        if first_line != FORMAT_VERSION {
            if first_line.starts_with(VERSION_PREFIX) {
                return Err(CheckpointError::Version {
                    found: first_line.into_owned(),
                    expected: FORMAT_VERSION.into(),
                });
            }
            return Err(CheckpointError::Manifest {
                line: 1,
                msg: "missing format header".into(),
            });
        }
        let manifest_end = manifest_end.ok_or_else(|| CheckpointError::Manifest {
            line: 0,
            msg: "no `end` line".into(),
        })?;
        let text = std::str::from_utf8(&bytes[..manifest_end]).map_err(|e| CheckpointError::Manifest {
            line: 0,
            msg: format!("manifest is not UTF-8: {e}"),
        })?;

        let mut meta = BTreeMap::new();
        let mut entries: Vec<Entry> = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let lineno = i + 1;
            let bad = |msg: String| CheckpointError::Manifest { line: lineno, msg };
            if line == "end" {
                break;
            }
            let (kind, rest) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("unrecognized line `{line}`")))?;
            match kind {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                "tensor" => {
                    let fields: Vec<&str> = rest.split(' ').collect();
                    let [name, dtype, shape, offset, length] = fields[..] else {
                        return Err(bad(format!("expected 5 tensor fields, got {}", fields.len())));
                    };
                    if dtype != "f32" {
                        return Err(CheckpointError::Dtype(dtype.to_string()));
                    }
                    let shape = shape
                        .split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| bad(format!("bad shape `{shape}`: {e}")))?;
                    let offset: usize = offset.parse().map_err(|e| bad(format!("bad offset: {e}")))?;
                    let length: usize = length.parse().map_err(|e| bad(format!("bad length: {e}")))?;
                    if length != shape.iter().product::<usize>() * 4 {
                        return Err(bad(format!("length {length} does not match shape {shape:?}")));
                    }
                    if offset % ALIGN != 0 {
                        return Err(bad(format!("offset {offset} is not {ALIGN}-byte aligned")));
                    }
                    if let Some(prev) = entries.last() {
                        if offset < prev.offset + prev.length {
                            return Err(bad(format!("tensor `{name}` overlaps `{}`", prev.name)));
                        }
                    }
                    if entries.iter().any(|e| e.name == name) {
                        return Err(bad(format!("duplicate tensor `{name}`")));
                    }
                    entries.push(Entry {
                        name: name.to_string(),
                        shape,
                        offset,
                        length,
                    });
                }
                _ => return Err(bad(format!("unrecognized line `{line}`"))),
            }
        }

        // Whole manifest validated; only now touch the payload.
        let start = align(manifest_end);
        let available = bytes.len().saturating_sub(start);
        if let Some(e) = entries.iter().find(|e| e.offset + e.length > available) {
            return Err(CheckpointError::Truncated {
                name: e.name.clone(),
                needed: (e.offset + e.length) as u64,
                available: available as u64,
            });
        }
        let tensors = entries
            .into_iter()
            .map(|e| {
                let raw = &bytes[start + e.offset..start + e.offset + e.length];
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                (e.name, ParamTensor { shape: e.shape, data })
            })
            .collect();
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        // Write-then-rename so a crash never leaves a half-written file.
        let tmp = path.with_extension("ckpt.partial");
        fs::write(&tmp, bytes).map_err(|source| Error::Io {
            path: tmp.clone(),
            source,
        })?;
        fs::rename(&tmp, path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_bytes(&bytes)?)
    }
}
