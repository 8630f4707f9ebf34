//! Named parameter collections and their on-disk container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "PFCP" | u32 version | u64 config_len | config utf-8 bytes
//! | u32 n_tensors | per tensor:
//!     u32 name_len | name utf-8 | u32 ndim | u32 dims[ndim] | f64 values[]
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::{Tensor, TensorError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PFCP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("tensor error: {0}")]
    Tensor(#[from] TensorError),
}

/// Ordered map of named gradient-tracking leaves.
#[derive(Default)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

/// Plain-data copy of a ParamStore. Being Send + Sync it can cross thread
/// boundaries for parallel evaluation, where each worker rebuilds leaves.
#[derive(Clone, Debug)]
pub struct ParamSnapshot {
    pub entries: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub config_text: String,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new parameter; the name must be unused.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<(), TensorError> {
        if self.map.contains_key(name) {
            return Err(TensorError::InvalidArg("duplicate parameter name"));
        }
        self.map.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor, TensorError> {
        self.map.get(name).ok_or_else(|| TensorError::MissingGrad { name: name.to_string() })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    pub fn zero_grads(&self) {
        for t in self.map.values() {
            t.zero_grad();
        }
    }

    pub fn snapshot(&self, config_text: &str) -> ParamSnapshot {
        ParamSnapshot {
            entries: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), v.shape().to_vec(), v.to_vec()))
                .collect(),
            config_text: config_text.to_string(),
        }
    }

    pub fn from_snapshot(snap: &ParamSnapshot) -> Result<Self, TensorError> {
        let mut store = Self::new();
        for (name, shape, values) in &snap.entries {
            store.insert(name, Tensor::leaf(shape.clone(), values.clone(), true)?)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path, config_text: &str) -> Result<(), CheckpointError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(config_text.len() as u64).to_le_bytes());
        buf.extend_from_slice(config_text.as_bytes());
        buf.extend_from_slice(&(self.map.len() as u32).to_le_bytes());
        for (name, tensor) in &self.map {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            let shape = tensor.shape();
            buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                buf.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in tensor.values().iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        // Write-then-rename keeps a crash from leaving a torn file behind.
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads a checkpoint, returning the parameters and the config text the
    /// model was trained with.
    pub fn load(path: &Path) -> Result<(Self, String), CheckpointError> {
        let mut f = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        let magic = cur.take::<4>()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = u32::from_le_bytes(cur.take::<4>()?);
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let config_len = u64::from_le_bytes(cur.take::<8>()?) as usize;
        let config_bytes = cur.take_slice(config_len)?;
        let config_text = String::from_utf8(config_bytes.to_vec())
            .map_err(|_| CheckpointError::Corrupt("config text is not utf-8".into()))?;
        let n_tensors = u32::from_le_bytes(cur.take::<4>()?);
        let mut store = Self::new();
        for _ in 0..n_tensors {
            let name_len = u32::from_le_bytes(cur.take::<4>()?) as usize;
            let name = String::from_utf8(cur.take_slice(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Corrupt("tensor name is not utf-8".into()))?;
            let ndim = u32::from_le_bytes(cur.take::<4>()?) as usize;
            if ndim > 8 {
                return Err(CheckpointError::Corrupt(format!("tensor {name} claims {ndim} dims")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u32::from_le_bytes(cur.take::<4>()?) as usize);
            }
            let count: usize = shape.iter().product();
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(f64::from_le_bytes(cur.take::<8>()?));
            }
            store
                .insert(&name, Tensor::leaf(shape, values, true)?)
                .map_err(|_| CheckpointError::Corrupt(format!("duplicate tensor {name}")))?;
        }
        if cur.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} trailing bytes after last tensor",
                bytes.len() - cur.pos
            )));
        }
        Ok((store, config_text))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let s = self.take_slice(N)?;
        Ok(s.try_into().unwrap())
    }

    fn take_slice(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "file truncated at byte {} (wanted {} more)",
                self.pos, n
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("stem.w", Tensor::leaf(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-300, 7.0], true).unwrap())
            .unwrap();
        s.insert("head.b", Tensor::leaf(vec![1], vec![0.125], true).unwrap()).unwrap();
        s
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pfcp");
        let store = sample_store();
        store.save(&path, "lr = 5e-5\nseed = 3\n").unwrap();
        let (loaded, config) = ParamStore::load(&path).unwrap();
        assert_eq!(config, "lr = 5e-5\nseed = 3\n");
        assert_eq!(loaded.len(), 2);
        for (name, t) in store.iter() {
            let l = loaded.get(name).unwrap();
            assert_eq!(l.shape(), t.shape());
            assert_eq!(l.to_vec(), t.to_vec());
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.pfcp");
        std::fs::write(&path, b"NOPEronger than eight").unwrap();
        assert!(matches!(ParamStore::load(&path), Err(CheckpointError::BadMagic(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pfcp");
        sample_store().save(&path, "x = 1").unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(ParamStore::load(&path), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pfcp");
        sample_store().save(&path, "").unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0, 1, 2]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(ParamStore::load(&path), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::leaf(vec![1], vec![0.0], true).unwrap()).unwrap();
        assert!(s.insert("w", Tensor::leaf(vec![1], vec![1.0], true).unwrap()).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let store = sample_store();
        let snap = store.snapshot("cfg");
        let rebuilt = ParamStore::from_snapshot(&snap).unwrap();
        assert_eq!(rebuilt.scalar_count(), store.scalar_count());
        assert_eq!(rebuilt.get("stem.w").unwrap().to_vec(), store.get("stem.w").unwrap().to_vec());
        fn is_sync<T: Sync + Send>(_: &T) {}
        is_sync(&snap);
    }
}
