//! Binary IR bank (`SIRB`) and filter bank (`VFLT`) files.
//!
//! Both are little-endian. An IR bank file is
//! `"SIRB", version u32, fs u32, K u32, M u32, L u32, c f64` followed by
//! `M*L*K` f64 taps (microphone-major, then loudspeaker, then tap).
//! A filter file is `"VFLT", version u32, L u32, J u32, V u32, mu f64,
//! gamma f64, design speed f64` followed by `L*J` f64 taps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frames::FilterBank;
use crate::ir::IrBank;
use crate::szc::VastFilterBank;

pub const FORMAT_VERSION: u32 = 1;

pub fn encode_bank(bank: &IrBank) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + bank.raw().len() * 8);
    out.extend_from_slice(b"SIRB");
    for v in [
        FORMAT_VERSION,
        bank.sample_rate,
        bank.taps() as u32,
        bank.mics() as u32,
        bank.speakers() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&bank.reference_speed.to_le_bytes());
    for t in bank.raw() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(format!("truncated file: needed {end} bytes, have {}", self.buf.len()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> std::result::Result<(), String> {
        if self.take(4)? != magic {
            return Err(format!("not a {} file (bad magic)", String::from_utf8_lossy(magic)));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        Ok(())
    }

    fn finish(&self) -> std::result::Result<(), String> {
        if self.pos != self.buf.len() {
            return Err(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}

pub fn decode_bank(bytes: &[u8]) -> std::result::Result<IrBank, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(b"SIRB")?;
    let fs = r.u32()?;
    let k = r.u32()? as usize;
    let m = r.u32()? as usize;
    let l = r.u32()? as usize;
    let c = r.f64()?;
    let data = r.f64s(m * l * k)?;
    r.finish()?;
    IrBank::from_raw(m, l, k, fs, c, data).map_err(|e| e.to_string())
}

pub fn encode_filters(f: &VastFilterBank) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"VFLT");
    for v in [
        FORMAT_VERSION,
        f.filters.speakers() as u32,
        f.filters.len() as u32,
        f.rank as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [f.mu, f.gamma, f.design_speed] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in f.filters.stacked() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn decode_filters(bytes: &[u8]) -> std::result::Result<VastFilterBank, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(b"VFLT")?;
    let l = r.u32()? as usize;
    let j = r.u32()? as usize;
    let rank = r.u32()? as usize;
    let mu = r.f64()?;
    let gamma = r.f64()?;
    let design_speed = r.f64()?;
    let taps = r.f64s(l * j)?;
    r.finish()?;
    if l == 0 || j == 0 {
        return Err("filter file has no taps".into());
    }
    let filters = FilterBank::new(taps.chunks(j).map(<[f64]>::to_vec).collect()).map_err(|e| e.to_string())?;
    Ok(VastFilterBank {
        filters,
        rank,
        mu,
        gamma,
        design_speed,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_bank(path: &Path, bank: &IrBank) -> Result<()> {
    write_file(path, &encode_bank(bank))
}

pub fn read_bank(path: &Path) -> Result<IrBank> {
    decode_bank(&read(path)?).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write_filters(path: &Path, f: &VastFilterBank) -> Result<()> {
    write_file(path, &encode_filters(f))
}

pub fn read_filters(path: &Path) -> Result<VastFilterBank> {
    decode_filters(&read(path)?).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_header_layout() {
        let bank = IrBank::from_raw(1, 2, 2, 16000, 343.5, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_bank(&bank);
        assert_eq!(&bytes[..4], b"SIRB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16000);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 343.5);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 2.0);
        assert_eq!(bytes.len(), 32 + 4 * 8);
        assert_eq!(decode_bank(&bytes).unwrap(), bank);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bank = IrBank::from_raw(1, 1, 3, 16000, 343.0, vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = encode_bank(&bank);
        assert!(decode_bank(&bytes[..bytes.len() - 1])
            .unwrap_err()
            .contains("truncated"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_bank(&bad).unwrap_err().contains("magic"));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_bank(&extra).is_err());
    }

    #[test]
    fn filter_header_layout() {
        let f = VastFilterBank {
            filters: FilterBank::new(vec![vec![1.0, 0.5], vec![-0.25, 0.0]]).unwrap(),
            rank: 3,
            mu: 1.0,
            gamma: 0.0,
            design_speed: 345.0,
        };
        let bytes = encode_filters(&f);
        assert_eq!(&bytes[..4], b"VFLT");
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 20 + 24 + 4 * 8);
        assert_eq!(decode_filters(&bytes).unwrap(), f);
    }
}
