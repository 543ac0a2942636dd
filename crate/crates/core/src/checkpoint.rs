//! Binary network checkpoints.
//!
//! Little-endian layout: magic, version, the network config, then each layer
//! as name, shape, weights and bias. Values are stored as raw `f64` bits, so a
//! save/load round trip is exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AffectNet, HiddenWidths, NetConfig, Variant};
use crate::numeric::{LinearParams, Matrix, ParamStore};

pub const MAGIC: &[u8; 8] = b"AFFCKPT\0";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size overflows usize".into()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("layer size overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn to_bytes(net: &AffectNet) -> Vec<u8> {
    let c = net.config();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    for v in [
        c.embed_dim,
        c.au_feat_dim,
        c.ce_feat_dim,
        c.va_feat_dim,
        c.translator_dim,
        c.hidden.extractor,
        c.hidden.head,
    ] {
        w.usize(v);
    }
    w.u8(match c.variant {
        Variant::Streaming => 0,
        Variant::Parallel => 1,
    });
    w.u8(u8::from(c.adapter));
    w.u64(c.seed);

    w.usize(net.params().len());
    for (name, p) in net.params().iter() {
        w.usize(name.len());
        w.0.extend_from_slice(name.as_bytes());
        w.usize(p.in_dim());
        w.usize(p.out_dim());
        w.f64s(p.weight.as_slice());
        w.f64s(&p.bias);
    }
    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<AffectNet> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let variant = match r.u8()? {
        0 => Variant::Streaming,
        1 => Variant::Parallel,
        other => return Err(Error::Checkpoint(format!("bad variant tag {other}"))),
    };
    let adapter = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Checkpoint(format!("bad adapter flag {other}"))),
    };
    let seed = r.u64()?;
    let config = NetConfig {
        embed_dim: dims[0],
        au_feat_dim: dims[1],
        ce_feat_dim: dims[2],
        va_feat_dim: dims[3],
        translator_dim: dims[4],
        hidden: HiddenWidths {
            extractor: dims[5],
            head: dims[6],
        },
        variant,
        adapter,
        seed,
    };

    let layers = r.usize()?;
    let mut params = ParamStore::new();
    for _ in 0..layers {
        let len = r.usize()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("layer name is not UTF-8".into()))?
            .to_owned();
        let (rows, cols) = (r.usize()?, r.usize()?);
        let size = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("layer `{name}` too large")))?;
        let weight = Matrix::from_vec(rows, cols, r.f64s(size)?)?;
        let bias = r.f64s(cols)?;
        params
            .insert(&name, LinearParams::new(weight, bias)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    AffectNet::from_parts(config, params)
}

pub fn save(net: &AffectNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<AffectNet> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}

/// Loads a checkpoint and checks it was built for `expected`'s variant,
/// adapter setting and embedding width.
pub fn load_matching(path: impl AsRef<Path>, expected: &NetConfig) -> Result<AffectNet> {
    let net = load(path)?;
    let c = net.config();
    if c.variant != expected.variant || c.adapter != expected.adapter || c.embed_dim != expected.embed_dim {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint is {} (adapter {}, embed {}), requested {} (adapter {}, embed {})",
            c.variant,
            c.adapter,
            c.embed_dim,
            expected.variant,
            expected.adapter,
            expected.embed_dim
        )));
    }
    Ok(net)
}
