//! Disk-backed block storage, one directory per simulated node.
//!
//! Every block lives in its own file named by its decimal id. The on-disk
//! layout is
//!
//! ```text
//! "RNB1" | version u8 = 1 | dtype u8 = 1 | order u8 | reserved u8
//! order x u64 LE extents
//! product(extents) x (f32 LE re, f32 LE im), row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{DenseTensor, C32};

pub const MAGIC: &[u8; 4] = b"RNB1";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_COMPLEX64: u8 = 1;
/// Bytes per stored element (two little-endian f32).
pub const ELEMENT_BYTES: u64 = 8;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"RNB1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("unsupported dtype code {0}")]
    Dtype(u8),
    #[error("truncated block: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("invalid block contents: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("block file {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("block {0} is missing or was deleted")]
    MissingBlock(BlockId),
    #[error("node {node} store quota exceeded: {requested} more bytes on top of {used} (quota {quota})")]
    QuotaExceeded {
        node: usize,
        used: u64,
        requested: u64,
        quota: u64,
    },
    #[error("node {node} does not exist (store has {nodes} nodes)")]
    NoSuchNode { node: usize, nodes: usize },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub u64);

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handle to a stored block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRef {
    pub block_id: BlockId,
    pub home_node: usize,
    pub extents: Vec<usize>,
    /// File size: header plus eight bytes per element.
    pub bytes: u64,
}

pub fn header_bytes(order: usize) -> u64 {
    8 + 8 * order as u64
}

pub fn block_file_bytes(extents: &[usize]) -> u64 {
    header_bytes(extents.len()) + ELEMENT_BYTES * extents.iter().product::<usize>() as u64
}

pub fn encode_block(t: &DenseTensor) -> Vec<u8> {
    assert!(t.order() <= u8::MAX as usize, "block order exceeds 255");
    let mut buf = Vec::with_capacity(block_file_bytes(t.extents()) as usize);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&[FORMAT_VERSION, DTYPE_COMPLEX64, t.order() as u8, 0]);
    for &e in t.extents() {
        buf.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for z in t.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    buf
}

pub fn decode_block(buf: &[u8]) -> Result<DenseTensor, FormatError> {
    let need = |needed: usize| {
        if buf.len() < needed {
            Err(FormatError::Truncated {
                needed,
                have: buf.len(),
            })
        } else {
            Ok(())
        }
    };
    need(8)?;
    let magic: [u8; 4] = buf[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if buf[4] != FORMAT_VERSION {
        return Err(FormatError::Version(buf[4]));
    }
    if buf[5] != DTYPE_COMPLEX64 {
        return Err(FormatError::Dtype(buf[5]));
    }
    let order = buf[6] as usize;
    let header = header_bytes(order) as usize;
    need(header)?;

    let mut extents = Vec::with_capacity(order);
    for d in 0..order {
        let at = 8 + 8 * d;
        let e = u64::from_le_bytes(buf[at..at + 8].try_into().unwrap());
        extents.push(usize::try_from(e).map_err(|_| FormatError::Invalid(format!("extent {e} too large")))?);
    }
    let count = extents
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| FormatError::Invalid("element count overflows".into()))?;
    let total = count
        .checked_mul(ELEMENT_BYTES as usize)
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| FormatError::Invalid("payload size overflows".into()))?;
    need(total)?;
    if buf.len() > total {
        return Err(FormatError::Trailing(buf.len() - total));
    }

    let data = buf[header..total]
        .chunks_exact(8)
        .map(|c| {
            C32::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect();
    DenseTensor::new(extents, data).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write_block_file(path: &Path, t: &DenseTensor) -> Result<u64, StoreError> {
    let buf = encode_block(t);
    fs::write(path, &buf).map_err(io_err(path))?;
    Ok(buf.len() as u64)
}

pub fn read_block_file(path: &Path) -> Result<DenseTensor, StoreError> {
    let buf = fs::read(path).map_err(io_err(path))?;
    decode_block(&buf).map_err(|source| StoreError::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Default)]
pub struct StoreConfig {
    /// Root directory; a temporary directory is created when unset.
    pub root: Option<PathBuf>,
    pub nodes: usize,
    /// Optional per-node byte quota.
    pub quota_bytes: Option<u64>,
    /// Re-home a block into the requester's directory on remote reads.
    pub migrate: bool,
}

/// Counter snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMetrics {
    pub serializations: u64,
    pub deserializations: u64,
    pub remote_transfers: u64,
    pub peak_store_bytes: Vec<u64>,
}

impl StoreMetrics {
    /// Counter differences `self - earlier`; peaks are taken from `self`.
    pub fn since(&self, earlier: &StoreMetrics) -> StoreMetrics {
        StoreMetrics {
            serializations: self.serializations - earlier.serializations,
            deserializations: self.deserializations - earlier.deserializations,
            remote_transfers: self.remote_transfers - earlier.remote_transfers,
            peak_store_bytes: self.peak_store_bytes.clone(),
        }
    }
}

#[derive(Debug)]
struct Entry {
    home: usize,
    bytes: u64,
}

#[derive(Debug)]
struct Ledger {
    live: HashMap<BlockId, Entry>,
    node_bytes: Vec<u64>,
    peak_bytes: Vec<u64>,
}

#[derive(Debug)]
pub struct BlockStore {
    root: PathBuf,
    _temp: Option<tempfile::TempDir>,
    nodes: usize,
    quota: Option<u64>,
    migrate: bool,
    next_id: AtomicU64,
    serializations: AtomicU64,
    deserializations: AtomicU64,
    remote_transfers: AtomicU64,
    ledger: Mutex<Ledger>,
}

impl BlockStore {
    pub fn open(config: StoreConfig) -> Result<Self, StoreError> {
        assert!(config.nodes > 0, "store needs at least one node");
        let (root, temp) = match config.root {
            Some(root) => (root, None),
            None => {
                let dir = tempfile::Builder::new()
                    .prefix("tessera-store-")
                    .tempdir()
                    .map_err(io_err(&std::env::temp_dir()))?;
                (dir.path().to_path_buf(), Some(dir))
            }
        };
        for node in 0..config.nodes {
            let dir = root.join(format!("node-{node}"));
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self {
            root,
            _temp: temp,
            nodes: config.nodes,
            quota: config.quota_bytes,
            migrate: config.migrate,
            next_id: AtomicU64::new(0),
            serializations: AtomicU64::new(0),
            deserializations: AtomicU64::new(0),
            remote_transfers: AtomicU64::new(0),
            ledger: Mutex::new(Ledger {
                live: HashMap::new(),
                node_bytes: vec![0; config.nodes],
                peak_bytes: vec![0; config.nodes],
            }),
        })
    }

    /// Store with `nodes` nodes under a fresh temporary directory.
    pub fn temporary(nodes: usize) -> Result<Self, StoreError> {
        Self::open(StoreConfig {
            nodes,
            ..StoreConfig::default()
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn block_path(&self, node: usize, id: BlockId) -> PathBuf {
        self.root.join(format!("node-{node}")).join(id.0.to_string())
    }

    fn check_node(&self, node: usize) -> Result<(), StoreError> {
        if node >= self.nodes {
            return Err(StoreError::NoSuchNode {
                node,
                nodes: self.nodes,
            });
        }
        Ok(())
    }

    fn reserve(&self, ledger: &mut Ledger, node: usize, bytes: u64) -> Result<(), StoreError> {
        let used = ledger.node_bytes[node];
        if let Some(quota) = self.quota {
            if used + bytes > quota {
                return Err(StoreError::QuotaExceeded {
                    node,
                    used,
                    requested: bytes,
                    quota,
                });
            }
        }
        ledger.node_bytes[node] = used + bytes;
        ledger.peak_bytes[node] = ledger.peak_bytes[node].max(used + bytes);
        Ok(())
    }

    pub fn put(&self, node: usize, t: &DenseTensor) -> Result<BlockRef, StoreError> {
        self.check_node(node)?;
        let bytes = block_file_bytes(t.extents());
        let id = BlockId(self.next_id.fetch_add(1, Ordering::Relaxed));
        {
            let mut ledger = self.ledger.lock().unwrap();
            self.reserve(&mut ledger, node, bytes)?;
            ledger.live.insert(id, Entry { home: node, bytes });
        }
        let path = self.block_path(node, id);
        if let Err(e) = write_block_file(&path, t) {
            let mut ledger = self.ledger.lock().unwrap();
            ledger.live.remove(&id);
            ledger.node_bytes[node] -= bytes;
            return Err(e);
        }
        self.serializations.fetch_add(1, Ordering::Relaxed);
        Ok(BlockRef {
            block_id: id,
            home_node: node,
            extents: t.extents().to_vec(),
            bytes,
        })
    }

    pub fn get(&self, requesting_node: usize, r: &BlockRef) -> Result<DenseTensor, StoreError> {
        self.check_node(requesting_node)?;
        let home = self.home_of(r.block_id)?;
        let path = self.block_path(home, r.block_id);
        let t = read_block_file(&path)?;
        self.deserializations.fetch_add(1, Ordering::Relaxed);
        if requesting_node != home {
            self.remote_transfers.fetch_add(1, Ordering::Relaxed);
            if self.migrate {
                self.rehome(r.block_id, home, requesting_node)?;
            }
        }
        Ok(t)
    }

    fn rehome(&self, id: BlockId, from: usize, to: usize) -> Result<(), StoreError> {
        let src = self.block_path(from, id);
        let dst = self.block_path(to, id);
        {
            let mut ledger = self.ledger.lock().unwrap();
            let Some(bytes) = ledger.live.get(&id).filter(|e| e.home == from).map(|e| e.bytes) else {
                // deleted or already moved by a concurrent reader
                return Ok(());
            };
            self.reserve(&mut ledger, to, bytes)?;
            ledger.node_bytes[from] -= bytes;
            ledger.live.get_mut(&id).unwrap().home = to;
        }
        fs::copy(&src, &dst).map_err(io_err(&dst))?;
        fs::remove_file(&src).map_err(io_err(&src))?;
        Ok(())
    }

    pub fn delete(&self, r: &BlockRef) -> Result<(), StoreError> {
        let entry = {
            let mut ledger = self.ledger.lock().unwrap();
            let entry = ledger
                .live
                .remove(&r.block_id)
                .ok_or(StoreError::MissingBlock(r.block_id))?;
            ledger.node_bytes[entry.home] -= entry.bytes;
            entry
        };
        let path = self.block_path(entry.home, r.block_id);
        fs::remove_file(&path).map_err(io_err(&path))
    }

    /// Current home of a live block (differs from `BlockRef::home_node` after migration).
    pub fn home_of(&self, id: BlockId) -> Result<usize, StoreError> {
        self.ledger
            .lock()
            .unwrap()
            .live
            .get(&id)
            .map(|e| e.home)
            .ok_or(StoreError::MissingBlock(id))
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.ledger.lock().unwrap().live.contains_key(&id)
    }

    pub fn node_bytes(&self, node: usize) -> u64 {
        self.ledger.lock().unwrap().node_bytes[node]
    }

    pub fn live_blocks(&self) -> usize {
        self.ledger.lock().unwrap().live.len()
    }

    pub fn metrics(&self) -> StoreMetrics {
        StoreMetrics {
            serializations: self.serializations.load(Ordering::Relaxed),
            deserializations: self.deserializations.load(Ordering::Relaxed),
            remote_transfers: self.remote_transfers.load(Ordering::Relaxed),
            peak_store_bytes: self.ledger.lock().unwrap().peak_bytes.clone(),
        }
    }
}
