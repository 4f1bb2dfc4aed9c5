//! Named parameter storage and its binary checkpoint encoding.
//!
//! Blob layout, all integers and floats little-endian:
//!
//! ```text
//! "HCR1"                      magic
//! u32                         tensor count
//! repeated:
//!   u32 + bytes               UTF-8 name
//!   u8                        rank (1 or 2)
//!   u64 x rank                dimensions
//!   f64 x product(dims)       payload, row-major
//! ```

use std::collections::HashMap;

use thiserror::Error;

use crate::tensor::{Shape, Tensor};

pub const BLOB_MAGIC: &[u8; 4] = b"HCR1";

/// Upper bound on the element count of a single decoded tensor, so a corrupt
/// header cannot request an absurd allocation.
const MAX_BLOB_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BlobError {
    #[error("bad magic, expected HCR1")]
    BadMagic,
    #[error("blob truncated at byte {0}")]
    Truncated(usize),
    #[error("tensor name is not UTF-8")]
    BadName,
    #[error("unsupported tensor rank {0}")]
    BadRank(u8),
    #[error("tensor {0} is too large")]
    TooLarge(String),
    #[error("duplicate tensor name {0}")]
    DuplicateName(String),
    #[error("{0} trailing bytes after last tensor")]
    TrailingBytes(usize),
}

/// Insertion-ordered set of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics if the name is already taken.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.tensors.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn element_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.element_count() * 8);
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in self.names.iter().zip(&self.tensors) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let dims = tensor.shape().dims();
            out.push(dims.len() as u8);
            for d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for x in tensor.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self, BlobError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BLOB_MAGIC {
            return Err(BlobError::BadMagic);
        }
        let count = r.u32()?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| BlobError::BadName)?
                .to_owned();
            let rank = r.take(1)?[0];
            let shape = match rank {
                1 => Shape::Vector(r.dim(&name)?),
                2 => {
                    let rows = r.dim(&name)?;
                    let cols = r.dim(&name)?;
                    if (rows as u64).saturating_mul(cols as u64) > MAX_BLOB_ELEMENTS {
                        return Err(BlobError::TooLarge(name));
                    }
                    Shape::Matrix(rows, cols)
                }
                other => return Err(BlobError::BadRank(other)),
            };
            let payload = r.take(shape.len() * 8)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if store.by_name.contains_key(&name) {
                return Err(BlobError::DuplicateName(name));
            }
            let tensor = match shape {
                Shape::Vector(_) => Tensor::vector(data),
                Shape::Matrix(rows, cols) => {
                    Tensor::matrix(rows, cols, data).expect("payload sized from shape")
                }
            };
            store.insert(name, tensor);
        }
        if r.pos != bytes.len() {
            return Err(BlobError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BlobError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(BlobError::Truncated(self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, BlobError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dim(&mut self, name: &str) -> Result<usize, BlobError> {
        let d = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if d > MAX_BLOB_ELEMENTS {
            return Err(BlobError::TooLarge(name.to_owned()));
        }
        Ok(d as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-300, -0.0]).unwrap());
        s.insert("b", Tensor::vector(vec![f64::MIN_POSITIVE, 7.0]));
        s
    }

    #[test]
    fn blob_starts_with_magic_and_count() {
        let blob = sample_store().to_blob();
        assert_eq!(&blob[..4], b"HCR1");
        assert_eq!(u32::from_le_bytes(blob[4..8].try_into().unwrap()), 2);
        // name "w", rank 2, dims 2 and 3
        assert_eq!(u32::from_le_bytes(blob[8..12].try_into().unwrap()), 1);
        assert_eq!(blob[12], b'w');
        assert_eq!(blob[13], 2);
        assert_eq!(u64::from_le_bytes(blob[14..22].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(blob[22..30].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(blob[30..38].try_into().unwrap()), 1.0);
    }

    #[test]
    fn decode_errors() {
        let blob = sample_store().to_blob();
        assert_eq!(ParamStore::from_blob(b"HCR2\0\0\0\0"), Err(BlobError::BadMagic));
        assert!(matches!(
            ParamStore::from_blob(&blob[..blob.len() - 1]),
            Err(BlobError::Truncated(_))
        ));
        let mut extra = blob.clone();
        extra.push(0);
        assert_eq!(ParamStore::from_blob(&extra), Err(BlobError::TrailingBytes(1)));
    }

    #[test]
    fn huge_dimension_is_rejected_without_allocating() {
        let mut blob = b"HCR1".to_vec();
        blob.extend_from_slice(&1u32.to_le_bytes());
        blob.extend_from_slice(&1u32.to_le_bytes());
        blob.push(b'x');
        blob.push(1);
        blob.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(ParamStore::from_blob(&blob), Err(BlobError::TooLarge(_))));
    }

    proptest! {
        #[test]
        fn blob_roundtrip(values in proptest::collection::vec(-1e6f64..1e6, 1..40), rows in 1usize..5) {
            let mut s = ParamStore::new();
            s.insert("v", Tensor::vector(values.clone()));
            let cols = values.len();
            s.insert("m", Tensor::matrix(rows, cols, values.repeat(rows)).unwrap());
            let back = ParamStore::from_blob(&s.to_blob()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
