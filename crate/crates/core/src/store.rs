//! Hierarchical store of chunked, optionally compressed n-d arrays.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/.group.json                 {"node_type": "group", "attributes": {...}}
//! <root>/<group>/.group.json
//! <root>/<group>/<array>/.array.json shape, chunks, dtype, codec, fill_value,
//!                                    attributes, checksums (CRC32 per chunk)
//! <root>/<group>/<array>/c.0.1.0     one file per chunk, named by grid index
//! ```
//!
//! A chunk file holds the full chunk volume (edge chunks padded with the
//! fill value) encoded little-endian in the array dtype, then passed
//! through the codec. JSON documents use sorted keys so identical contents
//! give identical bytes. Every file is written to a temporary name and
//! renamed into place. Writers take an advisory `.lock` file per array.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::checkpoint::write_atomic;
use crate::dtype::DType;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type Attributes = BTreeMap<String, serde_json::Value>;

const GROUP_FILE: &str = ".group.json";
const ARRAY_FILE: &str = ".array.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    Raw,
    Deflate,
}

impl Codec {
    fn encode(self, bytes: Vec<u8>) -> Result<Vec<u8>> {
        match self {
            Codec::Raw => Ok(bytes),
            Codec::Deflate => {
                let mut enc = DeflateEncoder::new(Vec::new(), Compression::new(6));
                enc.write_all(&bytes)?;
                Ok(enc.finish()?)
            }
        }
    }

    fn decode(self, bytes: &[u8], expected: usize) -> Result<Vec<u8>> {
        match self {
            Codec::Raw => Ok(bytes.to_vec()),
            Codec::Deflate => {
                let mut out = Vec::with_capacity(expected);
                DeflateDecoder::new(bytes)
                    .read_to_end(&mut out)
                    .map_err(|e| Error::Integrity(format!("deflate stream: {e}")))?;
                Ok(out)
            }
        }
    }
}

/// Checks one path segment against `[A-Za-z0-9._-]+`; `.`, `..` and the
/// reserved metadata names are refused.
pub fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
        && !matches!(name, "." | ".." | GROUP_FILE | ARRAY_FILE | LOCK_FILE);
    if ok {
        Ok(())
    } else {
        Err(Error::Name(name.to_string()))
    }
}

/// Splits and validates a slash-separated node path; `""` is the root.
fn segments(path: &str) -> Result<Vec<&str>> {
    let trimmed = path.trim_matches('/');
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = trimmed.split('/').collect();
    for p in &parts {
        validate_name(p)?;
    }
    Ok(parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupMeta {
    node_type: String,
    #[serde(default)]
    attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayMeta {
    node_type: String,
    pub shape: Vec<usize>,
    pub chunks: Vec<usize>,
    pub dtype: DType,
    pub codec: Codec,
    pub fill_value: f64,
    #[serde(default)]
    pub attributes: Attributes,
    /// CRC32 of each stored chunk file, keyed by file name.
    #[serde(default)]
    pub checksums: BTreeMap<String, u32>,
}

/// Shape, chunking and encoding of a new array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySpec {
    pub shape: Vec<usize>,
    pub chunks: Vec<usize>,
    pub dtype: DType,
    pub codec: Codec,
    pub fill_value: f64,
}

impl ArraySpec {
    /// Raw codec, fill value zero.
    pub fn new(shape: &[usize], chunks: &[usize], dtype: DType) -> Self {
        Self {
            shape: shape.to_vec(),
            chunks: chunks.to_vec(),
            dtype,
            codec: Codec::Raw,
            fill_value: 0.0,
        }
    }

    pub fn codec(mut self, codec: Codec) -> Self {
        self.codec = codec;
        self
    }

    pub fn fill(mut self, fill_value: f64) -> Self {
        self.fill_value = fill_value;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.shape.is_empty() || self.shape.len() != self.chunks.len() {
            return Err(Error::param(format!(
                "chunks {:?} do not match shape {:?}",
                self.chunks, self.shape
            )));
        }
        for (d, (&s, &c)) in self.shape.iter().zip(&self.chunks).enumerate() {
            if s == 0 || c == 0 || c > s {
                return Err(Error::param(format!(
                    "axis {d}: chunk extent {c} must be between 1 and the array extent {s}"
                )));
            }
        }
        if !self.fill_value.is_finite() || !self.dtype.represents(self.fill_value) {
            return Err(Error::param(format!("fill value {} does not fit {}", self.fill_value, self.dtype)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Group,
    Array { shape: Vec<usize>, chunks: Vec<usize>, dtype: DType, codec: Codec },
}

/// One line of [`Store::list_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEntry {
    /// Path relative to the listed node; empty for the node itself.
    pub path: String,
    pub depth: usize,
    pub kind: NodeKind,
}

impl fmt::Display for TreeEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.path.rsplit('/').next().unwrap_or("");
        write!(f, "{:indent$}{name}", "", indent = 2 * self.depth)?;
        match &self.kind {
            NodeKind::Group => write!(f, "/"),
            NodeKind::Array { shape, dtype, .. } => write!(f, " {shape:?} {dtype}"),
        }
    }
}

/// Text rendering of a listing, one entry per line.
pub fn render_tree(entries: &[TreeEntry]) -> String {
    entries.iter().map(|e| format!("{e}\n")).collect()
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Held while a process writes to the store; dropping it releases the lock.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn acquire(path: PathBuf, what: &str) -> Result<StoreLock> {
    match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(mut f) => {
            writeln!(f, "{}", std::process::id())?;
            Ok(StoreLock { path })
        }
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Conflict(format!(
            "{what} is locked by another writer ({}); remove the file if no writer is running",
            path.display()
        ))),
        Err(e) => Err(e.into()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Corruption(format!("{}: {e}", path.display())))
}

impl Store {
    /// Opens the store at `root`, creating it when absent.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let meta = root.join(GROUP_FILE);
        if !meta.exists() {
            write_json(
                &meta,
                &GroupMeta {
                    node_type: "group".into(),
                    attributes: Attributes::new(),
                },
            )?;
        }
        Ok(Self { root })
    }

    /// Opens an existing store.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join(GROUP_FILE).is_file() {
            return Err(Error::NotFound(format!("no store at {}", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Store-wide writer lock.
    pub fn lock(&self) -> Result<StoreLock> {
        acquire(self.root.join(LOCK_FILE), "store")
    }

    fn dir(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.root.clone(), |p, s| p.join(s))
    }

    fn is_group(&self, parts: &[&str]) -> bool {
        self.dir(parts).join(GROUP_FILE).is_file()
    }

    fn is_array(&self, parts: &[&str]) -> bool {
        self.dir(parts).join(ARRAY_FILE).is_file()
    }

    pub fn group_exists(&self, path: &str) -> bool {
        segments(path).map(|p| self.is_group(&p)).unwrap_or(false)
    }

    pub fn array_exists(&self, path: &str) -> bool {
        segments(path).map(|p| self.is_array(&p)).unwrap_or(false)
    }

    /// Creates one group; the parent must exist. Existing groups are left
    /// untouched.
    pub fn create_group(&self, path: &str) -> Result<()> {
        let parts = segments(path)?;
        if parts.is_empty() || self.is_group(&parts) {
            return Ok(());
        }
        if self.is_array(&parts) {
            return Err(Error::Conflict(format!("`{path}` is an array")));
        }
        let parent = &parts[..parts.len() - 1];
        if !self.is_group(parent) {
            return Err(Error::NotFound(format!("parent group of `{path}`")));
        }
        let dir = self.dir(&parts);
        fs::create_dir_all(&dir)?;
        write_json(
            &dir.join(GROUP_FILE),
            &GroupMeta {
                node_type: "group".into(),
                attributes: Attributes::new(),
            },
        )
    }

    /// Creates `path` and any missing ancestors.
    pub fn create_groups(&self, path: &str) -> Result<()> {
        let parts = segments(path)?;
        for i in 1..=parts.len() {
            self.create_group(&parts[..i].join("/"))?;
        }
        Ok(())
    }

    pub fn group_attributes(&self, path: &str) -> Result<Attributes> {
        let parts = segments(path)?;
        if !self.is_group(&parts) {
            return Err(Error::NotFound(format!("group `{path}`")));
        }
        Ok(read_json::<GroupMeta>(&self.dir(&parts).join(GROUP_FILE))?.attributes)
    }

    pub fn set_group_attributes(&self, path: &str, attributes: Attributes) -> Result<()> {
        let parts = segments(path)?;
        if !self.is_group(&parts) {
            return Err(Error::NotFound(format!("group `{path}`")));
        }
        write_json(
            &self.dir(&parts).join(GROUP_FILE),
            &GroupMeta {
                node_type: "group".into(),
                attributes,
            },
        )
    }

    /// Writes array metadata only; unwritten chunks read as the fill value.
    pub fn create_array(&self, path: &str, spec: &ArraySpec) -> Result<StoredArray> {
        let parts = segments(path)?;
        let Some((_, parent)) = parts.split_last() else {
            return Err(Error::Name(String::new()));
        };
        spec.validate()?;
        if self.is_array(&parts) || self.is_group(&parts) {
            return Err(Error::Conflict(format!("`{path}` already exists")));
        }
        if !self.is_group(parent) {
            return Err(Error::NotFound(format!("parent group of `{path}`")));
        }
        let dir = self.dir(&parts);
        fs::create_dir_all(&dir)?;
        let meta = ArrayMeta {
            node_type: "array".into(),
            shape: spec.shape.clone(),
            chunks: spec.chunks.clone(),
            dtype: spec.dtype,
            codec: spec.codec,
            fill_value: spec.fill_value,
            attributes: Attributes::new(),
            checksums: BTreeMap::new(),
        };
        write_json(&dir.join(ARRAY_FILE), &meta)?;
        Ok(StoredArray {
            dir,
            path: parts.join("/"),
            meta,
        })
    }

    pub fn open_array(&self, path: &str) -> Result<StoredArray> {
        let parts = segments(path)?;
        if !self.is_array(&parts) {
            return Err(Error::NotFound(format!("array `{path}`")));
        }
        let dir = self.dir(&parts);
        let meta: ArrayMeta = read_json(&dir.join(ARRAY_FILE))?;
        Ok(StoredArray {
            dir,
            path: parts.join("/"),
            meta,
        })
    }

    /// Deletes an array with its chunks. Groups are never removed.
    pub fn remove_array(&self, path: &str) -> Result<()> {
        let parts = segments(path)?;
        if !self.is_array(&parts) {
            return Err(Error::NotFound(format!("array `{path}`")));
        }
        fs::remove_dir_all(self.dir(&parts))?;
        Ok(())
    }

    /// Depth-first listing below `path`, children sorted by name.
    pub fn list_tree(&self, path: &str) -> Result<Vec<TreeEntry>> {
        let parts = segments(path)?;
        let mut out = Vec::new();
        if self.is_array(&parts) {
            let a = self.open_array(path)?;
            out.push(TreeEntry {
                path: String::new(),
                depth: 0,
                kind: a.kind(),
            });
            return Ok(out);
        }
        if !self.is_group(&parts) {
            return Err(Error::NotFound(format!("node `{path}`")));
        }
        out.push(TreeEntry {
            path: String::new(),
            depth: 0,
            kind: NodeKind::Group,
        });
        self.walk(&self.dir(&parts), "", 1, &mut out)?;
        Ok(out)
    }

    fn walk(&self, dir: &Path, prefix: &str, depth: usize, out: &mut Vec<TreeEntry>) -> Result<()> {
        let mut names: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        for name in names {
            let child = dir.join(&name);
            let rel = if prefix.is_empty() { name.clone() } else { format!("{prefix}/{name}") };
            if child.join(GROUP_FILE).is_file() {
                out.push(TreeEntry {
                    path: rel.clone(),
                    depth,
                    kind: NodeKind::Group,
                });
                self.walk(&child, &rel, depth + 1, out)?;
            } else if child.join(ARRAY_FILE).is_file() {
                let meta: ArrayMeta = read_json(&child.join(ARRAY_FILE))?;
                out.push(TreeEntry {
                    path: rel,
                    depth,
                    kind: NodeKind::Array {
                        shape: meta.shape,
                        chunks: meta.chunks,
                        dtype: meta.dtype,
                        codec: meta.codec,
                    },
                });
            }
        }
        Ok(())
    }
}

/// Handle to one array. Reads reload the metadata so they see the latest
/// checksums.
#[derive(Debug, Clone)]
pub struct StoredArray {
    dir: PathBuf,
    path: String,
    meta: ArrayMeta,
}

/// Calls `f` with every multi-index of a box of the given extents,
/// excluding the last axis, in row-major order.
fn for_each_row(extents: &[usize], mut f: impl FnMut(&[usize])) {
    let outer = &extents[..extents.len() - 1];
    if outer.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; outer.len()];
    loop {
        f(&idx);
        let mut d = outer.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < outer[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

fn flat(idx: &[usize], strides: &[usize]) -> usize {
    idx.iter().zip(strides).map(|(i, s)| i * s).sum()
}

impl StoredArray {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn shape(&self) -> &[usize] {
        &self.meta.shape
    }

    pub fn chunks(&self) -> &[usize] {
        &self.meta.chunks
    }

    pub fn dtype(&self) -> DType {
        self.meta.dtype
    }

    pub fn codec(&self) -> Codec {
        self.meta.codec
    }

    pub fn fill_value(&self) -> f64 {
        self.meta.fill_value
    }

    pub fn attributes(&self) -> &Attributes {
        &self.meta.attributes
    }

    fn kind(&self) -> NodeKind {
        NodeKind::Array {
            shape: self.meta.shape.clone(),
            chunks: self.meta.chunks.clone(),
            dtype: self.meta.dtype,
            codec: self.meta.codec,
        }
    }

    pub fn set_attributes(&mut self, attributes: Attributes) -> Result<()> {
        let _lock = acquire(self.dir.join(LOCK_FILE), &format!("array `{}`", self.path))?;
        self.meta = read_json(&self.dir.join(ARRAY_FILE))?;
        self.meta.attributes = attributes;
        write_json(&self.dir.join(ARRAY_FILE), &self.meta)
    }

    /// Number of chunks along each axis.
    pub fn chunk_grid(&self) -> Vec<usize> {
        self.meta.shape.iter().zip(&self.meta.chunks).map(|(s, c)| s.div_ceil(*c)).collect()
    }

    pub fn chunk_name(index: &[usize]) -> String {
        let mut s = String::from("c");
        for i in index {
            s.push('.');
            s.push_str(&i.to_string());
        }
        s
    }

    fn chunk_volume(&self) -> usize {
        self.meta.chunks.iter().product()
    }

    fn check_region(&self, offsets: &[usize], extents: &[usize]) -> Result<()> {
        let rank = self.meta.shape.len();
        if offsets.len() != rank || extents.len() != rank {
            return Err(Error::Range(format!(
                "region of rank {} in an array of rank {rank}",
                offsets.len().max(extents.len())
            )));
        }
        for d in 0..rank {
            if extents[d] == 0 || offsets[d] + extents[d] > self.meta.shape[d] {
                return Err(Error::Range(format!(
                    "axis {d}: [{}, {}) outside 0..{}",
                    offsets[d],
                    offsets[d] + extents[d],
                    self.meta.shape[d]
                )));
            }
        }
        Ok(())
    }

    fn read_chunk(&self, meta: &ArrayMeta, index: &[usize]) -> Result<Vec<f64>> {
        let name = Self::chunk_name(index);
        let Some(&crc) = meta.checksums.get(&name) else {
            return Ok(vec![meta.fill_value; self.chunk_volume()]);
        };
        let path = self.dir.join(&name);
        let stored = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Integrity(format!("chunk {} of `{}` is missing", name, self.path)),
            _ => Error::Io(e),
        })?;
        let actual = crc32fast::hash(&stored);
        if actual != crc {
            return Err(Error::Integrity(format!(
                "chunk {name} of `{}`: checksum {actual:08x}, expected {crc:08x}",
                self.path
            )));
        }
        let expected = self.chunk_volume() * meta.dtype.size();
        let raw = meta.codec.decode(&stored, expected)?;
        if raw.len() != expected {
            return Err(Error::Integrity(format!(
                "chunk {name} of `{}` decodes to {} bytes, expected {expected}",
                self.path,
                raw.len()
            )));
        }
        meta.dtype.decode(&raw)
    }

    /// Chunk indices overlapping the region, row-major.
    fn touched(&self, offsets: &[usize], extents: &[usize]) -> Vec<Vec<usize>> {
        let c = &self.meta.chunks;
        let lo: Vec<usize> = offsets.iter().zip(c).map(|(o, c)| o / c).collect();
        let hi: Vec<usize> = (0..c.len()).map(|d| (offsets[d] + extents[d] - 1) / c[d]).collect();
        let span: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| h - l + 1).collect();
        let mut out = Vec::new();
        let mut ext = span.clone();
        ext.push(1);
        for_each_row(&ext, |idx| out.push(idx.iter().zip(&lo).map(|(i, l)| i + l).collect()));
        out
    }

    /// Copies between a chunk buffer and a region buffer over their overlap.
    fn transfer(&self, chunk_idx: &[usize], chunk: &mut [f64], offsets: &[usize], extents: &[usize], region: &mut [f64], into_chunk: bool) {
        let c = &self.meta.chunks;
        let rank = c.len();
        let start: Vec<usize> = (0..rank).map(|d| (chunk_idx[d] * c[d]).max(offsets[d])).collect();
        let end: Vec<usize> = (0..rank).map(|d| ((chunk_idx[d] + 1) * c[d]).min(offsets[d] + extents[d])).collect();
        let ext: Vec<usize> = start.iter().zip(&end).map(|(s, e)| e - s).collect();
        let (cs, rs) = (strides(c), strides(extents));
        let run = ext[rank - 1];
        let mut ci = vec![0; rank];
        let mut ri = vec![0; rank];
        for_each_row(&ext, |idx| {
            for d in 0..rank {
                let g = start[d] + if d + 1 < rank { idx[d] } else { 0 };
                ci[d] = g - chunk_idx[d] * c[d];
                ri[d] = g - offsets[d];
            }
            let (a, b) = (flat(&ci, &cs), flat(&ri, &rs));
            if into_chunk {
                chunk[a..a + run].copy_from_slice(&region[b..b + run]);
            } else {
                region[b..b + run].copy_from_slice(&chunk[a..a + run]);
            }
        });
    }

    pub fn read_region(&self, offsets: &[usize], extents: &[usize]) -> Result<Tensor> {
        self.check_region(offsets, extents)?;
        let meta: ArrayMeta = read_json(&self.dir.join(ARRAY_FILE))?;
        let mut region = vec![meta.fill_value; extents.iter().product()];
        for idx in self.touched(offsets, extents) {
            let mut chunk = self.read_chunk(&meta, &idx)?;
            self.transfer(&idx, &mut chunk, offsets, extents, &mut region, false);
        }
        Tensor::from_vec(extents, region)
    }

    pub fn read_all(&self) -> Result<Tensor> {
        let zeros = vec![0; self.meta.shape.len()];
        self.read_region(&zeros, &self.meta.shape.clone())
    }

    /// Writes `data` (shaped like the region) at `offsets`. Partially
    /// covered chunks are read, patched and rewritten.
    pub fn write_region(&mut self, offsets: &[usize], data: &Tensor) -> Result<()> {
        let extents = data.shape().to_vec();
        self.check_region(offsets, &extents)?;
        if let Some(v) = data.data().iter().find(|&&v| !self.meta.dtype.represents(v)) {
            return Err(Error::data(format!("value {v} does not fit {}", self.meta.dtype)));
        }
        let _lock = acquire(self.dir.join(LOCK_FILE), &format!("array `{}`", self.path))?;
        let mut meta: ArrayMeta = read_json(&self.dir.join(ARRAY_FILE))?;
        let mut region = data.data().to_vec();
        for idx in self.touched(offsets, &extents) {
            let mut chunk = self.read_chunk(&meta, &idx)?;
            self.transfer(&idx, &mut chunk, offsets, &extents, &mut region, true);
            let stored = meta.codec.encode(meta.dtype.encode(&chunk)?)?;
            let name = Self::chunk_name(&idx);
            write_atomic(&self.dir.join(&name), &stored)?;
            meta.checksums.insert(name, crc32fast::hash(&stored));
        }
        write_json(&self.dir.join(ARRAY_FILE), &meta)?;
        self.meta = meta;
        Ok(())
    }

    pub fn write_all(&mut self, data: &Tensor) -> Result<()> {
        if data.shape() != self.meta.shape.as_slice() {
            return Err(Error::Range(format!(
                "data shape {:?} differs from array shape {:?}",
                data.shape(),
                self.meta.shape
            )));
        }
        self.write_region(&vec![0; self.meta.shape.len()], data)
    }

    /// Raw stored bytes of one chunk, if written.
    pub fn chunk_bytes(&self, index: &[usize]) -> Result<Option<Vec<u8>>> {
        let path = self.dir.join(Self::chunk_name(index));
        match fs::read(path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn chunk_path(&self, index: &[usize]) -> PathBuf {
        self.dir.join(Self::chunk_name(index))
    }
}
