//! Bit-exact binary formats for tensors and named weight collections.
//!
//! `TensorFile` layout (all integers little-endian regardless of host):
//!
//! ```text
//! magic   4 bytes  "LASF"
//! version u16      1
//! dtype   u8       0 (f32)
//! rank    u8       4
//! extents rank x u32
//! payload product(extents) x f32, row-major
//! ```
//!
//! `WeightArchive` layout:
//!
//! ```text
//! magic   4 bytes  "LASW"
//! version u16      1
//! count   u32      number of entries
//! entry   u16 name length, UTF-8 name, then a complete TensorFile blob
//! ```
//!
//! Entry names are unique and iteration order is file order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::path::Path;

pub const TENSOR_MAGIC: [u8; 4] = *b"LASF";
pub const ARCHIVE_MAGIC: [u8; 4] = *b"LASW";
pub const FORMAT_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
const RANK: u8 = 4;

/// Serializes a tensor to the TensorFile byte layout.
pub fn tensor_to_bytes(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 4 * t.numel());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(RANK);
    for d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, len: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < *at + len {
        return Err(Error::Format(format!(
            "truncated {what}: need {} bytes at offset {}, have {}",
            len,
            *at,
            bytes.len()
        )));
    }
    let slice = &bytes[*at..*at + len];
    *at += len;
    Ok(slice)
}

/// Parses one TensorFile blob starting at `*at`, advancing the cursor.
pub fn tensor_from_bytes(bytes: &[u8], at: &mut usize) -> Result<Tensor<f32>> {
    let magic = take(bytes, at, 4, "tensor header")?;
    if magic != TENSOR_MAGIC {
        return Err(Error::Format(format!(
            "bad tensor magic {:02x?} (expected {:02x?})",
            magic, TENSOR_MAGIC
        )));
    }
    let version = u16::from_le_bytes(take(bytes, at, 2, "tensor header")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "unsupported tensor format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let dtype = take(bytes, at, 1, "tensor header")?[0];
    if dtype != DTYPE_F32 {
        return Err(Error::Version(format!("unsupported dtype code {dtype} (expected 0 = f32)")));
    }
    let rank = take(bytes, at, 1, "tensor header")?[0];
    if rank != RANK {
        return Err(Error::Format(format!("unsupported rank {rank} (this format stores rank 4)")));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        let raw = u32::from_le_bytes(take(bytes, at, 4, "tensor extents")?.try_into().unwrap());
        *d = raw as usize;
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Format(format!("zero extent in stored dims {dims:?}")));
    }
    let numel: usize = dims.iter().product();
    let payload = take(bytes, at, 4 * numel, "tensor payload")?;
    let mut data = Vec::with_capacity(numel);
    for chunk in payload.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Tensor::new(dims, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    std::fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path)?;
    let mut at = 0;
    let t = tensor_from_bytes(&bytes, &mut at)?;
    if at != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor payload",
            bytes.len() - at
        )));
    }
    Ok(t)
}

/// Ordered, uniquely named collection of parameter tensors.
#[derive(Clone, Debug, Default)]
pub struct WeightArchive {
    entries: Vec<(String, Tensor<f32>)>,
}

impl WeightArchive {
    pub fn new() -> Self {
        WeightArchive { entries: Vec::new() }
    }

    pub fn push(&mut self, name: &str, tensor: Tensor<f32>) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Format(format!("duplicate archive entry '{name}'")));
        }
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(Error::Format(format!(
                "entry name length {} outside the format's u16 field",
                name.len()
            )));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor<f32>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&ARCHIVE_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&tensor_to_bytes(tensor));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut at = 0;
        let magic = take(bytes, &mut at, 4, "archive header")?;
        if magic != ARCHIVE_MAGIC {
            return Err(Error::Format(format!(
                "bad archive magic {:02x?} (expected {:02x?})",
                magic, ARCHIVE_MAGIC
            )));
        }
        let version =
            u16::from_le_bytes(take(bytes, &mut at, 2, "archive header")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version(format!(
                "unsupported archive format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let count =
            u32::from_le_bytes(take(bytes, &mut at, 4, "archive header")?.try_into().unwrap());
        let mut archive = WeightArchive::new();
        for _ in 0..count {
            let name_len =
                u16::from_le_bytes(take(bytes, &mut at, 2, "entry name")?.try_into().unwrap());
            let name_bytes = take(bytes, &mut at, name_len as usize, "entry name")?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let tensor = tensor_from_bytes(bytes, &mut at)?;
            archive.push(&name, tensor)?;
        }
        if at != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after final archive entry",
                bytes.len() - at
            )));
        }
        Ok(archive)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Checks names, order, and extents against an expected manifest.
    pub fn validate_manifest(&self, manifest: &[(String, [usize; 4])]) -> Result<()> {
        if self.entries.len() != manifest.len() {
            return Err(Error::Config(format!(
                "archive holds {} entries, module expects {}",
                self.entries.len(),
                manifest.len()
            )));
        }
        for ((name, tensor), (want_name, want_dims)) in self.entries.iter().zip(manifest) {
            if name != want_name {
                return Err(Error::Config(format!(
                    "archive entry '{name}' where '{want_name}' was expected"
                )));
            }
            if tensor.dims() != *want_dims {
                return Err(Error::Config(format!(
                    "entry '{name}' has extents {:?}, expected {:?}",
                    tensor.dims(),
                    want_dims
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededGen;

    #[test]
    fn unit_tensor_byte_layout_is_pinned() {
        let t = Tensor::new([1, 1, 1, 1], vec![1.0f32]).unwrap();
        let bytes = tensor_to_bytes(&t);
        let expect: Vec<u8> = vec![
            b'L', b'A', b'S', b'F', // magic
            0x01, 0x00, // version 1
            0x00, // dtype f32
            0x04, // rank
            0x01, 0x00, 0x00, 0x00, // extents
            0x01, 0x00, 0x00, 0x00, //
            0x01, 0x00, 0x00, 0x00, //
            0x01, 0x00, 0x00, 0x00, //
            0x00, 0x00, 0x80, 0x3f, // 1.0f32 little-endian
        ];
        assert_eq!(bytes, expect);
    }

    #[test]
    fn tensor_roundtrip_is_bit_exact() {
        let t = SeededGen::new(3).tensor_symmetric([2, 3, 4, 5], 10.0);
        let bytes = tensor_to_bytes(&t);
        let mut at = 0;
        let back = tensor_from_bytes(&bytes, &mut at).unwrap();
        assert_eq!(at, bytes.len());
        assert!(t.bit_eq(&back));
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let t = Tensor::new([1, 1, 1, 1], vec![1.0f32]).unwrap();
        let mut bytes = tensor_to_bytes(&t);
        bytes[0] = b'X';
        let mut at = 0;
        assert!(matches!(tensor_from_bytes(&bytes, &mut at), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let t = Tensor::new([1, 1, 1, 2], vec![1.0f32, 2.0]).unwrap();
        let bytes = tensor_to_bytes(&t);
        let mut at = 0;
        assert!(matches!(
            tensor_from_bytes(&bytes[..bytes.len() - 3], &mut at),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn wrong_version_and_dtype_are_version_errors() {
        let t = Tensor::new([1, 1, 1, 1], vec![1.0f32]).unwrap();
        let mut bytes = tensor_to_bytes(&t);
        bytes[4] = 2;
        let mut at = 0;
        assert!(matches!(tensor_from_bytes(&bytes, &mut at), Err(Error::Version(_))));
        let mut bytes = tensor_to_bytes(&t);
        bytes[6] = 9;
        at = 0;
        assert!(matches!(tensor_from_bytes(&bytes, &mut at), Err(Error::Version(_))));
    }

    #[test]
    fn archive_roundtrip_preserves_order_and_bits() {
        let mut gen = SeededGen::new(5);
        let mut archive = WeightArchive::new();
        archive.push("b.weight", gen.tensor_symmetric([2, 2, 1, 1], 1.0)).unwrap();
        archive.push("a.weight", gen.tensor_symmetric([1, 4, 1, 1], 1.0)).unwrap();
        let bytes = archive.to_bytes();
        let back = WeightArchive::from_bytes(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.entries()[0].0, "b.weight");
        assert_eq!(back.entries()[1].0, "a.weight");
        assert!(back.get("a.weight").unwrap().bit_eq(archive.get("a.weight").unwrap()));
    }

    #[test]
    fn archive_rejects_duplicates_and_bad_magic() {
        let mut archive = WeightArchive::new();
        archive.push("x", Tensor::zeros([1, 1, 1, 1])).unwrap();
        assert!(archive.push("x", Tensor::zeros([1, 1, 1, 1])).is_err());
        assert!(archive.push("", Tensor::zeros([1, 1, 1, 1])).is_err());
        assert!(archive.push(&"n".repeat(70_000), Tensor::zeros([1, 1, 1, 1])).is_err());
        let mut bytes = archive.to_bytes();
        bytes[3] = b'Q';
        assert!(matches!(WeightArchive::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
