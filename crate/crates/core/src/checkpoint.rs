//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TSEG"             magic
//! u32                format version (1)
//! u64 n, n bytes     JSON header: graph descriptor and monitor value
//! u32                tensor count
//! per tensor:
//!   u32 n, n bytes   UTF-8 name ("node.weight", "node.running_mean", ...)
//!   u32              rank
//!   u64 * rank       extents
//!   f64 * len        values
//! ```
//!
//! Parameters come first in graph order, followed by batch-norm buffers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphDescriptor, NetworkGraph};

pub const MAGIC: &[u8; 4] = b"TSEG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    topology: GraphDescriptor,
    monitor: Option<MonitorValue>,
}

pub fn encode(graph: &NetworkGraph, monitor: Option<&MonitorValue>) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        topology: graph.descriptor(),
        monitor: monitor.cloned(),
    })?;
    let tensors: Vec<_> = graph
        .named_parameters()
        .into_iter()
        .chain(graph.named_buffers())
        .collect();
    let payload: usize = tensors.iter().map(|(n, t)| 12 + n.len() + 8 * (t.rank() + t.len())).sum();
    let mut out = Vec::with_capacity(20 + header.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        usize::try_from(n).map_err(|_| self.fail(format!("{what} {n} too large")))
    }
}

/// Decodes a checkpoint, returning the graph and the stored monitor value.
pub fn decode(bytes: &[u8]) -> Result<(NetworkGraph, Option<MonitorValue>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a checkpoint (bad magic)".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let hlen = r.len("header length")?;
    let at = r.pos;
    let header: Header = serde_json::from_slice(r.take(hlen, "header")?).map_err(|e| Error::Format {
        offset: at as u64,
        message: format!("bad header: {e}"),
    })?;
    let mut graph = NetworkGraph::from_descriptor(&header.topology).map_err(|e| Error::Format {
        offset: at as u64,
        message: format!("bad topology: {e}"),
    })?;
    let expected: Vec<(String, Vec<usize>)> = graph
        .named_parameters()
        .into_iter()
        .chain(graph.named_buffers())
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let count = r.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(r.fail(format!(
            "{count} tensors stored, topology needs {}",
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (name, shape) in &expected {
        let n = r.u32("name length")? as usize;
        let at = r.pos;
        let got = r.take(n, "name")?;
        if got != name.as_bytes() {
            return Err(Error::Format {
                offset: at as u64,
                message: format!("expected tensor `{name}`, found `{}`", String::from_utf8_lossy(got)),
            });
        }
        let rank = r.u32("rank")? as usize;
        let at = r.pos;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.len("extent")?);
        }
        if &dims != shape {
            return Err(Error::Format {
                offset: at as u64,
                message: format!("tensor `{name}` has shape {dims:?}, expected {shape:?}"),
            });
        }
        let len: usize = dims.iter().product();
        let raw = r.take(len * 8, "tensor data")?;
        values.push(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after last tensor"));
    }
    let mut values = values.into_iter();
    let mut targets = graph.parameters_mut();
    for t in targets.iter_mut() {
        t.data_mut().copy_from_slice(&values.next().expect("count checked"));
    }
    drop(targets);
    for t in graph.buffers_mut() {
        t.data_mut().copy_from_slice(&values.next().expect("count checked"));
    }
    Ok((graph, header.monitor))
}

/// Writes to a sibling temp file and renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save(graph: &NetworkGraph, path: impl AsRef<Path>, monitor: Option<&MonitorValue>) -> Result<()> {
    write_atomic(path.as_ref(), &encode(graph, monitor)?)
}

pub fn load(path: impl AsRef<Path>) -> Result<NetworkGraph> {
    Ok(load_with_monitor(path)?.0)
}

pub fn load_with_monitor(path: impl AsRef<Path>) -> Result<(NetworkGraph, Option<MonitorValue>)> {
    let bytes = fs::read(path.as_ref())?;
    decode(&bytes)
}

/// Whether lower or higher monitored values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// Names ending in `loss` are minimized, everything else maximized.
    pub fn for_monitor(name: &str) -> Self {
        if name.ends_with("loss") {
            Direction::Minimize
        } else {
            Direction::Maximize
        }
    }
}

/// Tracks the best value seen for one monitored quantity.
#[derive(Debug, Clone)]
pub struct MonitorTracker {
    pub direction: Direction,
    pub min_delta: f64,
    best: Option<f64>,
}

impl MonitorTracker {
    pub fn new(monitor: &str, min_delta: f64) -> Self {
        Self {
            direction: Direction::for_monitor(monitor),
            min_delta,
            best: None,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// An improvement beats the best so far by at least `min_delta`.
    pub fn is_improvement(&self, value: f64) -> bool {
        let Some(best) = self.best else {
            return !value.is_nan();
        };
        let gain = match self.direction {
            Direction::Minimize => best - value,
            Direction::Maximize => value - best,
        };
        gain > 0.0 && gain >= self.min_delta
    }

    /// Records `value`; returns whether it was an improvement.
    pub fn observe(&mut self, value: f64) -> bool {
        let better = self.is_improvement(value);
        if better {
            self.best = Some(value);
        }
        better
    }
}

/// Saves the graph whenever the monitored value improves.
#[derive(Debug, Clone)]
pub struct CheckpointManager {
    path: PathBuf,
    monitor: String,
    tracker: MonitorTracker,
}

impl CheckpointManager {
    pub fn new(path: impl Into<PathBuf>, monitor: impl Into<String>) -> Self {
        let monitor = monitor.into();
        Self {
            path: path.into(),
            tracker: MonitorTracker::new(&monitor, 0.0),
            monitor,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn monitor(&self) -> &str {
        &self.monitor
    }

    pub fn best(&self) -> Option<f64> {
        self.tracker.best()
    }

    /// Returns whether the file was written.
    pub fn observe(&mut self, graph: &NetworkGraph, value: f64) -> Result<bool> {
        if !self.tracker.observe(value) {
            return Ok(false);
        }
        let mv = MonitorValue {
            name: self.monitor.clone(),
            value,
        };
        save(graph, &self.path, Some(&mv))?;
        Ok(true)
    }
}
