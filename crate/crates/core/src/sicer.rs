//! Sinc interpolation compression/expansion of impulse responses.
//!
//! An IR measured at sound speed `c_old` is mapped to `c_new` by evaluating
//! its band-limited interpolant on a grid scaled by `alpha = c_new / c_old`:
//!
//! ```text
//! h_new[i] = alpha * sum_k sinc(alpha * i - k) * h[k],   i = 0 .. I-1
//! ```
//!
//! with the normalized sinc and no window, so `alpha = 1` is the identity.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ir::{ImpulseResponse, IrBank};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Physically plausible sound speeds in air, m/s.
pub const MIN_SPEED: f64 = 250.0;
pub const MAX_SPEED: f64 = 400.0;

pub fn check_speed(c: f64) -> Result<()> {
    if !(MIN_SPEED..=MAX_SPEED).contains(&c) {
        return Err(Error::domain(format!(
            "sound speed {c} m/s outside [{MIN_SPEED}, {MAX_SPEED}]"
        )));
    }
    Ok(())
}

/// `alpha = c_new / c_old`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRatio {
    c_new: f64,
    c_old: f64,
}

impl SpeedRatio {
    pub fn new(c_new: f64, c_old: f64) -> Result<Self> {
        check_speed(c_new)?;
        check_speed(c_old)?;
        Ok(Self { c_new, c_old })
    }

    pub fn alpha(&self) -> f64 {
        self.c_new / self.c_old
    }

    pub fn c_new(&self) -> f64 {
        self.c_new
    }

    pub fn c_old(&self) -> f64 {
        self.c_old
    }
}

/// Normalized sinc, exact at integers.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x == x.round() {
        0.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Output length `min(ceil(K / alpha), frame_len + 1)`.
pub fn output_len(k: usize, alpha: f64, frame_len: usize) -> usize {
    let full = (k as f64 / alpha).ceil() as usize;
    let cap = frame_len + 1;
    if full > cap {
        log::warn!("resampled IR length {full} clamped to N+1={cap}");
    }
    full.min(cap).max(1)
}

/// Applies `alpha * S(alpha)` to `taps`, producing `out_len` samples.
pub fn resample_taps(taps: &[f64], alpha: f64, out_len: usize) -> Vec<f64> {
    (0..out_len)
        .map(|i| {
            let a = alpha * i as f64;
            let n = a.floor();
            let frac = a - n;
            if frac == 0.0 {
                // Row i is a unit vector (or zero past the last tap).
                let k = n as usize;
                return taps.get(k).map_or(0.0, |h| alpha * h);
            }
            // sin(pi*(a - k)) = (-1)^(n - k) * sin(pi * frac)
            let s = (PI * frac).sin() / PI;
            let parity = n as i64;
            let mut acc = 0.0;
            for (k, &h) in taps.iter().enumerate() {
                if h == 0.0 {
                    continue;
                }
                let sign = if (parity - k as i64) % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * s / (a - k as f64) * h;
            }
            alpha * acc
        })
        .collect()
}

/// Maps `h` (valid at `ratio.c_old()`) to `ratio.c_new()`.
pub fn resample_ir(h: &ImpulseResponse, ratio: SpeedRatio, frame_len: usize) -> Result<ImpulseResponse> {
    if h.is_empty() {
        return Err(Error::config("cannot resample an empty impulse response"));
    }
    if (h.reference_speed - ratio.c_old()).abs() > 1e-9 {
        return Err(Error::config(format!(
            "IR is valid at {} m/s but the ratio expects c_old={} m/s",
            h.reference_speed,
            ratio.c_old()
        )));
    }
    let alpha = ratio.alpha();
    let out_len = output_len(h.len(), alpha, frame_len);
    Ok(ImpulseResponse {
        taps: resample_taps(&h.taps, alpha, out_len),
        sample_rate: h.sample_rate,
        reference_speed: ratio.c_new(),
    })
}

/// Resamples every IR of a bank; all outputs share one length I.
pub fn resample_bank(bank: &IrBank, ratio: SpeedRatio, frame_len: usize) -> Result<IrBank> {
    if (bank.reference_speed - ratio.c_old()).abs() > 1e-9 {
        return Err(Error::config(format!(
            "bank is valid at {} m/s but the ratio expects c_old={} m/s",
            bank.reference_speed,
            ratio.c_old()
        )));
    }
    let alpha = ratio.alpha();
    let out_len = output_len(bank.taps(), alpha, frame_len);
    let pairs: Vec<(usize, usize)> = (0..bank.mics())
        .flat_map(|m| (0..bank.speakers()).map(move |l| (m, l)))
        .collect();
    let one = |&(m, l): &(usize, usize)| resample_taps(bank.ir(m, l), alpha, out_len);
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = pairs.par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = pairs.iter().map(one).collect();
    IrBank::from_raw(
        bank.mics(),
        bank.speakers(),
        out_len,
        bank.sample_rate,
        ratio.c_new(),
        rows.concat(),
    )
}
