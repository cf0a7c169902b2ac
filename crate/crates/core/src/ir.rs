//! Impulse responses and loudspeaker-to-microphone IR banks.

use crate::error::{Error, Result};

/// A finite impulse response sampled at `sample_rate`, valid for sound
/// travelling at `reference_speed`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    /// Sound speed in m/s the taps correspond to.
    pub reference_speed: f64,
}

impl ImpulseResponse {
    pub fn new(taps: Vec<f64>, sample_rate: u32, reference_speed: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::config("impulse response must have at least one tap"));
        }
        if let Some(i) = taps.iter().position(|t| !t.is_finite()) {
            return Err(Error::domain(format!("impulse response tap {i} is not finite")));
        }
        Ok(Self {
            taps,
            sample_rate,
            reference_speed,
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }
}

/// IRs for every (microphone, loudspeaker) pair, all sharing one length.
///
/// Taps are stored microphone-major, then loudspeaker, then tap, which is
/// also the on-disk layout of the bank cache files.
#[derive(Debug, Clone, PartialEq)]
pub struct IrBank {
    mics: usize,
    speakers: usize,
    taps: usize,
    pub sample_rate: u32,
    pub reference_speed: f64,
    data: Vec<f64>,
}

impl IrBank {
    pub fn from_raw(
        mics: usize,
        speakers: usize,
        taps: usize,
        sample_rate: u32,
        reference_speed: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if mics == 0 || speakers == 0 || taps == 0 {
            return Err(Error::config(format!(
                "IR bank dimensions must be positive (M={mics}, L={speakers}, K={taps})"
            )));
        }
        if data.len() != mics * speakers * taps {
            return Err(Error::config(format!(
                "IR bank holds {} taps, expected M*L*K = {}",
                data.len(),
                mics * speakers * taps
            )));
        }
        Ok(Self {
            mics,
            speakers,
            taps,
            sample_rate,
            reference_speed,
            data,
        })
    }

    /// Builds a bank from nested `[m][l]` impulse responses.
    pub fn from_irs(irs: Vec<Vec<ImpulseResponse>>) -> Result<Self> {
        let mics = irs.len();
        let speakers = irs.first().map_or(0, Vec::len);
        let first = irs
            .first()
            .and_then(|row| row.first())
            .ok_or_else(|| Error::config("IR bank is empty"))?;
        let (taps, fs, speed) = (first.len(), first.sample_rate, first.reference_speed);
        let mut data = Vec::with_capacity(mics * speakers * taps);
        for (m, row) in irs.iter().enumerate() {
            if row.len() != speakers {
                return Err(Error::config(format!(
                    "microphone {m} has {} loudspeaker IRs, expected {speakers}",
                    row.len()
                )));
            }
            for (l, ir) in row.iter().enumerate() {
                if ir.len() != taps {
                    return Err(Error::config(format!(
                        "IR ({m},{l}) has {} taps, bank uses K={taps}",
                        ir.len()
                    )));
                }
                data.extend_from_slice(&ir.taps);
            }
        }
        Self::from_raw(mics, speakers, taps, fs, speed, data)
    }

    pub fn mics(&self) -> usize {
        self.mics
    }

    pub fn speakers(&self) -> usize {
        self.speakers
    }

    /// IR length K.
    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn ir(&self, m: usize, l: usize) -> &[f64] {
        let start = (m * self.speakers + l) * self.taps;
        &self.data[start..start + self.taps]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn to_ir(&self, m: usize, l: usize) -> ImpulseResponse {
        ImpulseResponse {
            taps: self.ir(m, l).to_vec(),
            sample_rate: self.sample_rate,
            reference_speed: self.reference_speed,
        }
    }

    /// A new bank restricted to the given microphone rows, in that order.
    pub fn select_mics(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.speakers * self.taps);
        for &m in rows {
            if m >= self.mics {
                return Err(Error::config(format!(
                    "microphone index {m} out of range (bank has {})",
                    self.mics
                )));
            }
            let start = m * self.speakers * self.taps;
            data.extend_from_slice(&self.data[start..start + self.speakers * self.taps]);
        }
        Self::from_raw(
            rows.len(),
            self.speakers,
            self.taps,
            self.sample_rate,
            self.reference_speed,
            data,
        )
    }
}
