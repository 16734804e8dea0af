//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `FUMECKPT`, `u32` version, `u16`-prefixed
//! variant name, `u64` seed, `u32` tensor count, then per tensor a
//! `u16`-prefixed name, `u8` kind (0 trainable, 1 buffer), `u8` rank, `u64`
//! extents and `f64` values. Tensors appear in store order, so equal
//! networks serialize to equal bytes.

use std::fs;
use std::path::Path;

use super::model::FumeNet;
use super::variant::Variant;
use crate::error::{Error, Result};
use crate::kernels::ParamKind;

const MAGIC: &[u8; 8] = b"FUMECKPT";
const VERSION: u32 = 1;

pub fn to_bytes(net: &FumeNet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let name = net.variant().name().as_bytes();
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&net.seed().to_le_bytes());
    let store = net.params();
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, e) in store.iter() {
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(match e.kind {
            ParamKind::Trainable => 0,
            ParamKind::Buffer => 1,
        });
        out.push(e.value.shape().len() as u8);
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}

/// Rebuild the network recorded in `bytes` and restore every tensor.
pub fn from_bytes(bytes: &[u8]) -> Result<FumeNet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let variant: Variant = r
        .string()?
        .parse()
        .map_err(|e| Error::Checkpoint(format!("{e}")))?;
    let seed = r.u64()?;
    let mut net = FumeNet::build(variant, seed)?;
    let count = r.u32()? as usize;
    if count != net.params().len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors recorded, variant {variant} has {}",
            net.params().len()
        )));
    }
    for _ in 0..count {
        let name = r.string()?;
        let kind = r.u8()?;
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let store = net.params_mut();
        let id = store
            .id(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
        let expected_kind = match store.entry(id).kind {
            ParamKind::Trainable => 0,
            ParamKind::Buffer => 1,
        };
        if kind != expected_kind || store.value(id).shape() != shape {
            return Err(Error::Checkpoint(format!("tensor `{name}` has kind {kind} shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        for (dst, chunk) in store.value_mut(id).data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(net)
}

pub fn save(net: &FumeNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<FumeNet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
