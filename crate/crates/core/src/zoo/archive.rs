//! Binary weight archive.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "NNWA"            4 bytes magic
//! version           u32 (= 1)
//! layer_count       u32
//! per layer:
//!   name_len        u16
//!   name            UTF-8 bytes
//!   tensor_count    u8
//!   per tensor:
//!     rank          u8
//!     dims          u64 x rank
//!     values        f32 x product(dims), row-major
//! crc32             u32 over every preceding byte
//! ```
//!
//! Every layer of the model gets a record, including parameter-free ones.

use std::path::Path;

use crate::error::{ArchiveError, Error, Result};
use crate::nn::Model;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::zoo::spec::ModelSpec;

pub const MAGIC: &[u8; 4] = b"NNWA";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightArchive {
    pub version: u32,
    pub records: Vec<LayerRecord>,
}

impl WeightArchive {
    pub fn from_model(model: &Model) -> Self {
        Self {
            version: VERSION,
            records: model
                .nodes()
                .iter()
                .map(|n| LayerRecord {
                    name: n.name.clone(),
                    tensors: n.layer.params().into_iter().cloned().collect(),
                })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for rec in &self.records {
            let name = rec.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Serialize(format!("layer name '{}' too long", rec.name)))?;
            let count = u8::try_from(rec.tensors.len())
                .map_err(|_| Error::Serialize(format!("layer '{}' has too many tensors", rec.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(count);
            for t in &rec.tensors {
                out.push(t.dims().len() as u8);
                for &d in t.dims() {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for &v in t.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses and checksums a complete archive.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < MAGIC.len() + 12 {
            return Err(if bytes.starts_with(MAGIC) || bytes.len() < 4 {
                ArchiveError::Truncated
            } else {
                ArchiveError::BadMagic
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);

        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(ArchiveError::Version(version));
        }
        if stored != computed {
            return Err(ArchiveError::Checksum { stored, computed });
        }
        let layer_count = r.u32()? as usize;
        let mut records = Vec::with_capacity(layer_count.min(4096));
        for _ in 0..layer_count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| ArchiveError::Malformed("layer name is not UTF-8".into()))?
                .to_string();
            let count = r.u8()? as usize;
            let mut tensors = Vec::with_capacity(count);
            for _ in 0..count {
                let rank = r.u8()? as usize;
                let dims = (0..rank)
                    .map(|_| r.u64().map(|d| d as usize))
                    .collect::<Result<Vec<_>, _>>()?;
                let numel = dims
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d))
                    .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                    .ok_or(ArchiveError::Truncated)?;
                let raw = r.take(numel * 4)?;
                let values = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                let t = Tensor::from_vec(&dims, values).map_err(|e| ArchiveError::Layer {
                    layer: name.clone(),
                    reason: e.to_string(),
                })?;
                tensors.push(t);
            }
            records.push(LayerRecord { name, tensors });
        }
        if r.remaining() != 0 {
            return Err(ArchiveError::Malformed(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { version, records })
    }

    /// Builds `spec` and installs these weights. Nothing is returned unless every record matches.
    pub fn into_model(self, spec: &ModelSpec) -> Result<Model> {
        let mut model = spec.build(&mut RngState::new(0))?;
        if self.records.len() != model.nodes().len() {
            return Err(ArchiveError::Malformed(format!(
                "archive has {} layers, model '{}' has {}",
                self.records.len(),
                spec.name,
                model.nodes().len()
            ))
            .into());
        }
        for (node, rec) in model.nodes().iter().zip(&self.records) {
            if node.name != rec.name {
                return Err(ArchiveError::Layer {
                    layer: node.name.clone(),
                    reason: format!("archive has layer '{}' in its place", rec.name),
                }
                .into());
            }
            let params = node.layer.params();
            if params.len() != rec.tensors.len() {
                return Err(ArchiveError::Layer {
                    layer: node.name.clone(),
                    reason: format!("expected {} tensors, archive has {}", params.len(), rec.tensors.len()),
                }
                .into());
            }
            for (p, t) in params.iter().zip(&rec.tensors) {
                if p.dims() != t.dims() {
                    return Err(ArchiveError::Layer {
                        layer: node.name.clone(),
                        reason: format!("expected shape {:?}, archive has {:?}", p.dims(), t.dims()),
                    }
                    .into());
                }
            }
        }
        for (node, rec) in model.nodes_mut().iter_mut().zip(self.records) {
            for (p, t) in node.layer.params_mut().into_iter().zip(rec.tensors) {
                *p = t;
            }
        }
        Ok(model)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        if n > self.remaining() {
            return Err(ArchiveError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ArchiveError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ArchiveError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ArchiveError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_weights(model: &Model) -> Result<Vec<u8>> {
    WeightArchive::from_model(model).to_bytes()
}

pub fn load_weights(bytes: &[u8], spec: &ModelSpec) -> Result<Model> {
    WeightArchive::from_bytes(bytes)?.into_model(spec)
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_weights(model: &Model, path: &Path) -> Result<()> {
    write_atomic(path, &save_weights(model)?)
}

pub fn read_weights(path: &Path, spec: &ModelSpec) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_weights(&bytes, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::builders::{residual_style, ResidualProfile};
    use proptest::prelude::*;

    fn sample() -> (ModelSpec, Model) {
        let spec = residual_style([1, 12, 12], 3, &ResidualProfile::desk()).unwrap();
        let model = spec.build(&mut RngState::new(21)).unwrap();
        (spec, model)
    }

    #[test]
    fn header_layout() {
        let (_, m) = sample();
        let bytes = save_weights(&m).unwrap();
        assert_eq!(&bytes[..4], b"NNWA");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, m.nodes().len());
        let name_len = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
        assert_eq!(&bytes[14..14 + name_len], b"rescale");
        assert_eq!(bytes[14 + name_len], 0);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (spec, m) = sample();
        let a = save_weights(&m).unwrap();
        let loaded = load_weights(&a, &spec).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(save_weights(&loaded).unwrap(), a);
    }

    #[test]
    fn altered_dim_names_layer() {
        let (spec, m) = sample();
        let mut archive = WeightArchive::from_model(&m);
        let idx = archive.records.iter().position(|r| r.name == "head").unwrap();
        let w = &archive.records[idx].tensors[0];
        let (rows, cols) = (w.dims()[0], w.dims()[1]);
        archive.records[idx].tensors[0] = Tensor::zeros(&[rows + 1, cols]).unwrap();
        let bytes = archive.to_bytes().unwrap();
        let err = load_weights(&bytes, &spec).unwrap_err();
        assert!(err.to_string().contains("head"), "{err}");
    }

    #[test]
    fn truncated_and_corrupted_streams_are_rejected() {
        let (spec, m) = sample();
        let bytes = save_weights(&m).unwrap();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(load_weights(&bytes[..cut], &spec).is_err(), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x01;
        assert!(matches!(
            WeightArchive::from_bytes(&flipped),
            Err(ArchiveError::Checksum { .. })
        ));
        let mut bad_version = bytes.clone();
        bad_version[4] = 2;
        assert_eq!(WeightArchive::from_bytes(&bad_version), Err(ArchiveError::Version(2)));
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert_eq!(WeightArchive::from_bytes(&bad_magic), Err(ArchiveError::BadMagic));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let (spec, m) = sample();
        let path = dir.path().join("w.nnwa");
        write_weights(&m, &path).unwrap();
        assert_eq!(read_weights(&path, &spec).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn any_single_byte_flip_is_detected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
            let (_, m) = sample();
            let mut bytes = save_weights(&m).unwrap();
            let i = pos.index(bytes.len());
            bytes[i] ^= 1 << bit;
            prop_assert!(WeightArchive::from_bytes(&bytes).is_err());
        }
    }
}
