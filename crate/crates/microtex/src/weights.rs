//! The MTEXW001 weight file: little-endian, magic `MTEXW001`, a `u32` entry
//! count, then per entry a `u16`-prefixed UTF-8 name, a `u8` rank, `u32`
//! dims and `f32` values, closed by the IEEE CRC32 of everything after the
//! magic. Kernels are stored as `conv{s}_{i}` (out, in, kh, kw) and their
//! biases as separate `conv{s}_{i}.bias` entries.

use std::collections::BTreeMap;
use std::path::Path;

use microtex_core::{ConvKernel, VggConfig, WeightStore};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"MTEXW001";

/// One named array as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

pub fn entries_of(store: &WeightStore) -> Vec<Entry> {
    let mut out = Vec::with_capacity(store.layers().len() * 2);
    for (name, k) in store.layers() {
        out.push(Entry {
            name: name.clone(),
            dims: k.shape().iter().map(|&d| d as u32).collect(),
            values: k.weights().to_vec(),
        });
        out.push(Entry { name: format!("{name}.bias"), dims: vec![k.bias().len() as u32], values: k.bias().to_vec() });
    }
    out
}

pub fn encode_entries(entries: &[Entry]) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    body.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.name.as_bytes();
        let name_len =
            u16::try_from(name.len()).map_err(|_| CliError::Format(format!("name {} is too long", e.name)))?;
        let rank = u8::try_from(e.dims.len()).map_err(|_| CliError::Format(format!("{} has too many dims", e.name)))?;
        let count: usize = e.dims.iter().map(|&d| d as usize).product();
        if count != e.values.len() {
            return Err(CliError::Format(format!("{}: dims imply {count} values, got {}", e.name, e.values.len())));
        }
        body.extend_from_slice(&name_len.to_le_bytes());
        body.extend_from_slice(name);
        body.push(rank);
        for d in &e.dims {
            body.extend_from_slice(&d.to_le_bytes());
        }
        for v in &e.values {
            body.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&body);
    let mut out = Vec::with_capacity(8 + body.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn encode(store: &WeightStore) -> Result<Vec<u8>> {
    encode_entries(&entries_of(store))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Corruption(format!("file truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses and CRC-checks a file into its raw entries.
pub fn decode_entries(bytes: &[u8]) -> Result<Vec<Entry>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CliError::Format("bad magic, expected MTEXW001".into()));
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(CliError::Corruption("file truncated".into()));
    }
    let (body, crc) = bytes[MAGIC.len()..].split_at(bytes.len() - MAGIC.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(CliError::Corruption(format!("CRC32 mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    let mut c = Cursor { bytes: body, pos: 0 };
    let count = c.u32("entry count")?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(c.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| CliError::Format("entry name is not UTF-8".into()))?
            .to_owned();
        let rank = c.take(1, "rank")?[0] as usize;
        let dims = (0..rank).map(|_| c.u32("dims")).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        let n = n.filter(|n| n.checked_mul(4).is_some_and(|b| b <= body.len()));
        let n = n.ok_or_else(|| CliError::Corruption(format!("{name}: dims {dims:?} exceed the file size")))?;
        let values = c.take(n * 4, &name)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        entries.push(Entry { name, dims, values });
    }
    if c.pos != body.len() {
        return Err(CliError::Corruption(format!("{} trailing bytes after the last entry", body.len() - c.pos)));
    }
    Ok(entries)
}

/// Assembles entries into a store validated against `config`.
pub fn store_from_entries(entries: Vec<Entry>, config: &VggConfig) -> Result<WeightStore> {
    let mut kernels: BTreeMap<String, Entry> = BTreeMap::new();
    let mut biases: BTreeMap<String, Entry> = BTreeMap::new();
    for e in entries {
        if e.values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Schema(format!("{} contains non-finite values", e.name)));
        }
        let (map, key) = match e.name.strip_suffix(".bias") {
            Some(layer) => (&mut biases, layer.to_owned()),
            None => (&mut kernels, e.name.clone()),
        };
        if map.insert(key, e).is_some() {
            return Err(CliError::Schema("duplicate entry name".into()));
        }
    }
    let mut named = BTreeMap::new();
    for (name, k) in kernels {
        let b = biases.remove(&name).ok_or_else(|| CliError::Schema(format!("missing {name}.bias")))?;
        if k.dims.len() != 4 || b.dims.len() != 1 {
            return Err(CliError::Schema(format!(
                "{name}: kernel must be 4-D and bias 1-D, got {:?} and {:?}",
                k.dims, b.dims
            )));
        }
        let d: Vec<usize> = k.dims.iter().map(|&d| d as usize).collect();
        let kernel = ConvKernel::new(d[0], d[1], d[2], d[3], k.values, b.values)
            .map_err(|e| CliError::Schema(format!("{name}: {e}")))?;
        named.insert(name, kernel);
    }
    if let Some(orphan) = biases.keys().next() {
        return Err(CliError::Schema(format!("bias {orphan}.bias has no kernel")));
    }
    WeightStore::from_named(config.clone(), named).map_err(|e| match e {
        microtex_core::Error::Schema(m) => CliError::Schema(m),
        other => CliError::Schema(other.to_string()),
    })
}

pub fn decode(bytes: &[u8], config: &VggConfig) -> Result<WeightStore> {
    store_from_entries(decode_entries(bytes)?, config)
}

/// Loads a VGG16 weight file.
pub fn load_weights(path: &Path) -> Result<WeightStore> {
    load_weights_for(path, &VggConfig::vgg16())
}

pub fn load_weights_for(path: &Path, config: &VggConfig) -> Result<WeightStore> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, config)
}

pub fn save_weights(path: &Path, store: &WeightStore) -> Result<()> {
    std::fs::write(path, encode(store)?).map_err(|e| CliError::io(path, e))
}
