//! Binary dataset container.
//!
//! ```text
//! "RFTJ" | version u16 | frame count u32 | samples per frame u16
//! per frame: label u8 | original_label u8 | poisoned u8 | snr_db f32 | 128 x (I f32, Q f32)
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{ComplexSample, IQFrame, LabeledDataset, ModulationScheme, FRAME_LEN};
use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RFTJ";
const VERSION: u16 = 1;

pub fn encode_dataset(ds: &LabeledDataset) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + ds.len() * (7 + FRAME_LEN * 8));
    buf.extend_from_slice(MAGIC);
    buf.put_u16(VERSION);
    buf.put_u32(ds.len() as u32);
    buf.put_u16(FRAME_LEN as u16);
    for f in ds {
        buf.put_u8(f.label.id());
        buf.put_u8(f.original_label.id());
        buf.put_u8(f.poisoned as u8);
        buf.put_f32(f.snr_db as f32);
        for s in &f.samples {
            buf.put_f32(s.re as f32);
            buf.put_f32(s.im as f32);
        }
    }
    buf
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let count = r.u32()? as usize;
    let spf = r.u16()? as usize;
    if spf != FRAME_LEN {
        return Err(Error::Format(format!("samples per frame {spf}, expected {FRAME_LEN}")));
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let label = ModulationScheme::from_id(r.u8()?)?;
        let original_label = ModulationScheme::from_id(r.u8()?)?;
        let poisoned = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("poisoned flag {v} is not 0/1"))),
        };
        let snr_db = r.f32()? as f64;
        let mut samples = Vec::with_capacity(FRAME_LEN);
        for _ in 0..FRAME_LEN {
            let re = r.f32()? as f64;
            let im = r.f32()? as f64;
            samples.push(ComplexSample::new(re, im));
        }
        let frame = IQFrame {
            samples,
            label,
            snr_db,
            poisoned,
            original_label,
        };
        frame.validate().map_err(|e| Error::Format(e.to_string()))?;
        frames.push(frame);
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after last frame".into()));
    }
    Ok(LabeledDataset::new(frames))
}

pub fn save_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dataset(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::{generate_dataset, DatasetSpec};

    #[test]
    fn header_layout() {
        let ds = generate_dataset(&DatasetSpec {
            frames_per_scheme_per_snr: 2,
            snr_grid_db: vec![10.0],
            ..Default::default()
        })
        .unwrap();
        let bytes = encode_dataset(&ds);
        assert_eq!(&bytes[..4], b"RFTJ");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 4);
        assert_eq!(u16::from_le_bytes([bytes[10], bytes[11]]), 128);
        assert_eq!(bytes.len(), 12 + 4 * (3 + 4 + 128 * 8));
    }

    #[test]
    fn generated_dataset_round_trips_exactly() {
        let ds = generate_dataset(&DatasetSpec {
            frames_per_scheme_per_snr: 5,
            ..Default::default()
        })
        .unwrap();
        let bytes = encode_dataset(&ds);
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(encode_dataset(&back), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let ds = generate_dataset(&DatasetSpec {
            frames_per_scheme_per_snr: 1,
            snr_grid_db: vec![0.0],
            ..Default::default()
        })
        .unwrap();
        let mut bytes = encode_dataset(&ds);
        assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
    }
}
