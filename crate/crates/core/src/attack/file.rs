//! Sidecar index that marks the poisoned frames of a saved dataset.
//!
//! ```text
//! "RFTP" | count u32 | per entry: dataset index u32 | original label u8
//! ```

use std::path::Path;

use super::PoisonedDataset;
use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::sigsynth::ModulationScheme;

const MAGIC: &[u8; 4] = b"RFTP";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoisonIndex {
    pub entries: Vec<(usize, ModulationScheme)>,
}

impl From<&PoisonedDataset> for PoisonIndex {
    fn from(p: &PoisonedDataset) -> Self {
        PoisonIndex { entries: p.originals.iter().map(|(&i, (l, _))| (i, *l)).collect() }
    }
}

pub fn encode_poison_index(index: &PoisonIndex) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 5 * index.entries.len());
    buf.extend_from_slice(MAGIC);
    buf.put_u32(index.entries.len() as u32);
    for &(i, label) in &index.entries {
        buf.put_u32(i as u32);
        buf.put_u8(label.id());
    }
    buf
}

pub fn decode_poison_index(bytes: &[u8]) -> Result<PoisonIndex> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let n = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n.min(bytes.len() / 5));
    for _ in 0..n {
        let i = r.u32()? as usize;
        entries.push((i, ModulationScheme::from_id(r.u8()?)?));
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after poison index".into()));
    }
    Ok(PoisonIndex { entries })
}

pub fn save_poison_index(index: &PoisonIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_poison_index(index)).map_err(|e| Error::io(path, e))
}

pub fn load_poison_index(path: impl AsRef<Path>) -> Result<PoisonIndex> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_poison_index(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let idx = PoisonIndex { entries: vec![(3, ModulationScheme::Qam16), (70000, ModulationScheme::Gfsk)] };
        let bytes = encode_poison_index(&idx);
        assert_eq!(bytes.len(), 8 + 10);
        assert_eq!(&bytes[..4], b"RFTP");
        assert_eq!(decode_poison_index(&bytes).unwrap(), idx);
        assert!(decode_poison_index(&bytes[..bytes.len() - 1]).is_err());
    }
}
