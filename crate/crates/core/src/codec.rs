//! Binary model file format.
//!
//! ```text
//! magic        8 bytes   "CTRBMODL"
//! version      u32       1
//! schema       32 bytes  FieldSchema::digest
//! arch         u8        0 = FM, 1 = NFM
//! n, d         u64, u64
//! bias range   u64, u64  start, length
//! layers       u32 count, then per layer: inputs u64, outputs u64, activation u8
//! provenance   u32 count, then per entry: key (u32 len + utf8), value (u32 len + utf8)
//! tensors      u64 count, then that many f64 in storage order
//! ```
//!
//! All integers and floats are little-endian.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Activation, Arch, ModelParams};
use crate::schema::FieldSchema;

pub const MAGIC: &[u8; 8] = b"CTRBMODL";
pub const VERSION: u32 = 1;

/// Free-form key/value header, e.g. which debiasing variant produced a model.
pub type Provenance = BTreeMap<String, String>;

pub fn serialize(params: &ModelParams) -> Vec<u8> {
    serialize_with(params, &Provenance::new())
}

pub fn serialize_with(params: &ModelParams, provenance: &Provenance) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(params.schema_digest());
    out.push(match params.arch {
        Arch::Fm => 0,
        Arch::Nfm => 1,
    });
    let bias = params.bias_features();
    for v in [params.num_features(), params.dim(), bias.start, bias.len()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&(params.layers().len() as u32).to_le_bytes());
    for l in params.layers() {
        out.extend_from_slice(&(l.inputs as u64).to_le_bytes());
        out.extend_from_slice(&(l.outputs as u64).to_le_bytes());
        out.push(match l.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
    }
    out.extend_from_slice(&(provenance.len() as u32).to_le_bytes());
    for (k, v) in provenance {
        for s in [k, v] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
    }
    out.extend_from_slice(&(params.num_params() as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// SHA-256 of the serialized parameters (without provenance).
pub fn model_digest(params: &ModelParams) -> [u8; 32] {
    Sha256::digest(serialize(params)).into()
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(alloc::format!("{what} does not fit in usize")))
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format(alloc::format!("{what} is not UTF-8")))
    }
}

/// Decodes a model file. With `schema` given, the stored schema digest must
/// match it.
pub fn deserialize(bytes: &[u8], schema: Option<&FieldSchema>) -> Result<ModelParams> {
    deserialize_with_provenance(bytes, schema).map(|(p, _)| p)
}

pub fn deserialize_with_provenance(
    bytes: &[u8],
    schema: Option<&FieldSchema>,
) -> Result<(ModelParams, Provenance)> {
    let mut r = Reader { buf: bytes };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(alloc::format!("unsupported format version {version}")));
    }
    let digest: [u8; 32] = r.take(32, "schema digest")?.try_into().unwrap();
    if let Some(s) = schema {
        if s.digest() != digest {
            return Err(Error::DigestMismatch);
        }
    }
    let arch = match r.u8("arch")? {
        0 => Arch::Fm,
        1 => Arch::Nfm,
        t => return Err(Error::Format(alloc::format!("unknown arch tag {t}"))),
    };
    let n = r.u64("feature count")?;
    let d = r.u64("embedding dimension")?;
    let bias_start = r.u64("bias range")?;
    let bias_len = r.u64("bias range")?;
    let n_layers = r.u32("layer count")? as usize;
    let mut shapes = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let inputs = r.u64("layer shape")?;
        let outputs = r.u64("layer shape")?;
        let act = match r.u8("activation")? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            t => return Err(Error::Format(alloc::format!("unknown activation tag {t}"))),
        };
        shapes.push((inputs, outputs, act));
    }
    let n_meta = r.u32("provenance")? as usize;
    let mut provenance = Provenance::new();
    for _ in 0..n_meta {
        let k = r.string("provenance key")?;
        let v = r.string("provenance value")?;
        provenance.insert(k, v);
    }
    let count = r.u64("tensor length")?;
    let raw = r.take(count.checked_mul(8).ok_or(Error::Truncated("tensor data"))?, "tensor data")?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if !r.buf.is_empty() {
        return Err(Error::Format(alloc::format!("{} trailing bytes", r.buf.len())));
    }
    let params = ModelParams::from_parts(arch, n, d, &shapes, values, digest, bias_start..bias_start + bias_len)?;
    Ok((params, provenance))
}
