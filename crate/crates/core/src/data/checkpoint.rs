//! Checkpoint container: a line-oriented text header followed by a binary
//! payload of little-endian f64 arrays and bit-packed masks.
//!
//! Header grammar (one item per line, UTF-8, LF):
//!
//! ```text
//! ticketlab-checkpoint v1
//! payload-sha256 <hex>
//! seed <u64>                 (optional)
//! config <escaped string>    (optional; \n and \\ escaped)
//! group <name> <d0>x<d1>x... (repeated, lexicographic by name)
//! mask <name> <bit count>    (repeated, lexicographic by name)
//! end
//! ```
//!
//! The payload holds every group's f64 values in header order, then each
//! mask bit-packed LSB-first and padded to a byte boundary. Loads verify the
//! version, the shape/length bookkeeping and the payload checksum, so a
//! flipped byte fails loudly instead of corrupting a rewind. Writes go
//! through a temp file and rename.

use crate::error::{CoreError, Result};
use crate::params::{ParamAccess, ParamSnapshot};
use crate::pruning::PruneMask;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &str = "ticketlab-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointGroup {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub seed: Option<u64>,
    pub config_echo: Option<String>,
    pub groups: BTreeMap<String, CheckpointGroup>,
    pub masks: BTreeMap<String, Vec<bool>>,
}

impl Checkpoint {
    pub fn from_model(model: &impl ParamAccess) -> Self {
        let groups = model
            .group_names()
            .into_iter()
            .map(|name| {
                let values = model.group(&name).to_vec();
                let shape = model.group_shape(&name);
                (name, CheckpointGroup { shape, values })
            })
            .collect();
        Checkpoint { seed: None, config_echo: None, groups, masks: BTreeMap::new() }
    }

    pub fn with_mask(mut self, mask: &PruneMask) -> Self {
        for name in mask.group_names() {
            self.masks.insert(name.to_string(), mask.group(name).unwrap().to_vec());
        }
        self
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        self.groups.iter().map(|(n, g)| (n.clone(), g.values.clone())).collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], count: usize) -> Vec<bool> {
    (0..count).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut payload = Vec::new();
    for group in ckpt.groups.values() {
        for v in &group.values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    for bits in ckpt.masks.values() {
        payload.extend_from_slice(&pack_bits(bits));
    }
    let digest = Sha256::digest(&payload);

    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("payload-sha256 {digest:x}\n"));
    if let Some(seed) = ckpt.seed {
        header.push_str(&format!("seed {seed}\n"));
    }
    if let Some(cfg) = &ckpt.config_echo {
        header.push_str(&format!("config {}\n", escape(cfg)));
    }
    for (name, group) in &ckpt.groups {
        let dims: Vec<String> = group.shape.iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("group {name} {}\n", dims.join("x")));
    }
    for (name, bits) in &ckpt.masks {
        header.push_str(&format!("mask {name} {}\n", bits.len()));
    }
    header.push_str("end\n");

    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(header.as_bytes())?;
        f.write_all(&payload)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let end_marker = b"end\n";
    let header_end = find_header_end(&bytes)
        .ok_or_else(|| CoreError::Format("missing end-of-header marker".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| CoreError::Format("header is not UTF-8".into()))?;
    let payload = &bytes[header_end + end_marker.len()..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(CoreError::Format(format!(
            "version mismatch: got {magic:?}, want {MAGIC:?}"
        )));
    }
    let mut ckpt = Checkpoint::default();
    let mut expect_sha = None;
    let mut group_order: Vec<String> = Vec::new();
    let mut mask_order: Vec<(String, usize)> = Vec::new();
    let mut shapes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for line in lines {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "payload-sha256" => expect_sha = Some(rest.to_string()),
            "seed" => {
                ckpt.seed = Some(rest.parse().map_err(|_| {
                    CoreError::Format(format!("unparseable seed {rest:?}"))
                })?);
            }
            "config" => ckpt.config_echo = Some(unescape(rest)),
            "group" => {
                let (name, dims) = rest
                    .split_once(' ')
                    .ok_or_else(|| CoreError::Format(format!("malformed group line {line:?}")))?;
                let shape: Vec<usize> = dims
                    .split('x')
                    .map(|d| d.parse().map_err(|_| {
                        CoreError::Format(format!("bad dimension in group line {line:?}"))
                    }))
                    .collect::<Result<_>>()?;
                group_order.push(name.to_string());
                shapes.insert(name.to_string(), shape);
            }
            "mask" => {
                let (name, count) = rest
                    .split_once(' ')
                    .ok_or_else(|| CoreError::Format(format!("malformed mask line {line:?}")))?;
                let count: usize = count.parse().map_err(|_| {
                    CoreError::Format(format!("bad bit count in mask line {line:?}"))
                })?;
                mask_order.push((name.to_string(), count));
            }
            other => {
                return Err(CoreError::Format(format!("unknown header key {other:?}")));
            }
        }
    }
    let expect_sha =
        expect_sha.ok_or_else(|| CoreError::Format("header missing payload checksum".into()))?;
    let digest = format!("{:x}", Sha256::digest(payload));
    if digest != expect_sha {
        return Err(CoreError::Format(format!(
            "payload checksum mismatch: stored {expect_sha}, computed {digest}"
        )));
    }

    let mut offset = 0usize;
    for name in group_order {
        let shape = shapes.remove(&name).unwrap();
        let len: usize = shape.iter().product();
        let need = len * 8;
        if payload.len() < offset + need {
            return Err(CoreError::Format(format!(
                "payload truncated in group {name} at byte {offset}"
            )));
        }
        let values = payload[offset..offset + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += need;
        ckpt.groups.insert(name, CheckpointGroup { shape, values });
    }
    for (name, count) in mask_order {
        let need = count.div_ceil(8);
        if payload.len() < offset + need {
            return Err(CoreError::Format(format!(
                "payload truncated in mask {name} at byte {offset}"
            )));
        }
        ckpt.masks.insert(name, unpack_bits(&payload[offset..offset + need], count));
        offset += need;
    }
    if offset != payload.len() {
        return Err(CoreError::Format(format!(
            "payload has {} trailing bytes after offset {offset}",
            payload.len() - offset
        )));
    }
    Ok(ckpt)
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    // The marker sits at a line start; scan line boundaries only.
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos..].starts_with(b"end\n") {
            return Some(pos);
        }
        match bytes[pos..].iter().position(|&b| b == b'\n') {
            Some(nl) => pos += nl + 1,
            None => return None,
        }
    }
    None
}
