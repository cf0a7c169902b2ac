//! Image-source room impulse responses parameterized by sound speed.
//!
//! Rigid-box image method with one frequency-independent reflection
//! coefficient for all walls, derived from the reverberation time with
//! Sabine's formula. Fractional arrival times are rendered with a
//! Hann-windowed sinc (8 ms wide), amplitudes follow `1 / (4 pi d)`.

use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{ImpulseResponse, IrBank};
use crate::sicer::check_speed;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub type Position = [f64; 3];

fn distance(a: Position, b: Position) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Box dimensions (Lx, Ly, Lz) in metres.
    pub dimensions: Position,
    /// Reverberation time in seconds; 0 means free field.
    pub rt60: f64,
    pub sample_rate: u32,
    /// IR length K in taps.
    pub ir_len: usize,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::domain(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions
            )));
        }
        if !(self.rt60 >= 0.0) {
            return Err(Error::domain(format!("rt60 must be >= 0, got {}", self.rt60)));
        }
        if self.sample_rate == 0 || self.ir_len == 0 {
            return Err(Error::config("sample rate and IR length must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, p: Position) -> bool {
        p.iter().zip(&self.dimensions).all(|(&x, &d)| x > 0.0 && x < d)
    }

    /// Uniform wall reflection coefficient for sound speed `c`.
    pub fn reflection_coefficient(&self, c: f64) -> Result<f64> {
        if self.rt60 == 0.0 {
            return Ok(0.0);
        }
        let [lx, ly, lz] = self.dimensions;
        let volume = lx * ly * lz;
        let surface = 2.0 * (lx * ly + lx * lz + ly * lz);
        let absorption = 24.0 * volume * LN_10 / (c * self.rt60 * surface);
        if !(absorption > 0.0 && absorption <= 1.0) {
            return Err(Error::domain(format!(
                "rt60 = {} s implies wall absorption {absorption:.3}, outside (0, 1]",
                self.rt60
            )));
        }
        Ok((1.0 - absorption).sqrt())
    }
}

/// Loudspeaker and microphone positions.
///
/// IR banks built from a geometry order their microphone rows as bright
/// zone, dark zone, then the observation microphone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub loudspeakers: Vec<Position>,
    pub bright_mics: Vec<Position>,
    pub dark_mics: Vec<Position>,
    pub observation_mic: Position,
}

impl ArrayGeometry {
    pub fn all_mics(&self) -> Vec<Position> {
        let mut all = self.bright_mics.clone();
        all.extend_from_slice(&self.dark_mics);
        all.push(self.observation_mic);
        all
    }

    pub fn bright_rows(&self) -> Vec<usize> {
        (0..self.bright_mics.len()).collect()
    }

    pub fn dark_rows(&self) -> Vec<usize> {
        let b = self.bright_mics.len();
        (b..b + self.dark_mics.len()).collect()
    }

    /// Bright then dark rows.
    pub fn control_rows(&self) -> Vec<usize> {
        (0..self.bright_mics.len() + self.dark_mics.len()).collect()
    }

    pub fn observation_row(&self) -> usize {
        self.bright_mics.len() + self.dark_mics.len()
    }

    pub fn validate(&self, room: &RoomSpec) -> Result<()> {
        if self.loudspeakers.is_empty() || self.bright_mics.is_empty() || self.dark_mics.is_empty() {
            return Err(Error::config("geometry needs loudspeakers and both zones"));
        }
        let mics = self.all_mics();
        let named = self
            .loudspeakers
            .iter()
            .map(|p| ("loudspeaker", p))
            .chain(mics.iter().map(|p| ("microphone", p)));
        for (what, p) in named {
            if !room.contains(*p) {
                return Err(Error::domain(format!("{what} at {p:?} is not inside the room")));
            }
        }
        Ok(())
    }

    /// Uniform line of `count` loudspeakers along x, centred on `center`.
    pub fn line_array(center: Position, count: usize, spacing: f64) -> Vec<Position> {
        let offset = (count as f64 - 1.0) / 2.0;
        (0..count)
            .map(|i| [center[0] + (i as f64 - offset) * spacing, center[1], center[2]])
            .collect()
    }

    /// The `count` points of a horizontal hexagonal lattice closest to
    /// `center` (37 points fill three complete rings).
    pub fn hex_zone(center: Position, count: usize, spacing: f64) -> Vec<Position> {
        let reach = (count as f64).sqrt().ceil() as i64 + 1;
        // Sort by radius, then angle, so the selection is deterministic.
        let mut lattice: Vec<(f64, f64, f64, f64)> = Vec::new();
        for a in -reach..=reach {
            for b in -reach..=reach {
                let x = spacing * (a as f64 + 0.5 * b as f64);
                let y = spacing * (b as f64 * 3f64.sqrt() / 2.0);
                let r = (x * x + y * y).sqrt();
                lattice.push(((r / spacing * 1e6).round(), y.atan2(x), x, y));
            }
        }
        lattice.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
        lattice
            .into_iter()
            .take(count)
            .map(|(_, _, x, y)| [center[0] + x, center[1] + y, center[2]])
            .collect()
    }
}

/// Piecewise-constant ground-truth sound speed over frames:
/// `c(tau) = start + step * floor((tau - 1) / period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSchedule {
    pub start_speed: f64,
    pub change_step: f64,
    pub change_period: usize,
    pub frames: usize,
}

impl ScenarioSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.change_period == 0 || self.frames == 0 {
            return Err(Error::config("schedule needs a positive change period and frame count"));
        }
        for tau in 1..=self.frames {
            check_speed(self.speed_at(tau))?;
        }
        Ok(())
    }

    /// True sound speed of 1-based frame `tau`.
    pub fn speed_at(&self, tau: usize) -> f64 {
        let steps = (tau.max(1) - 1) / self.change_period;
        self.start_speed + self.change_step * steps as f64
    }

    /// Distinct speeds in order of appearance.
    pub fn speeds(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for tau in 1..=self.frames {
            let c = self.speed_at(tau);
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
        out
    }

    /// 1-based frames at which the speed differs from the previous frame.
    pub fn change_frames(&self) -> Vec<usize> {
        (2..=self.frames)
            .filter(|&t| self.speed_at(t) != self.speed_at(t - 1))
            .collect()
    }
}

/// Width of the fractional-delay interpolator in seconds.
const INTERP_WIDTH_S: f64 = 0.004 * 2.0;

/// IR from `src` to `mic` at sound speed `c`.
pub fn simulate_ir(room: &RoomSpec, src: Position, mic: Position, c: f64) -> Result<ImpulseResponse> {
    room.validate()?;
    check_speed(c)?;
    for (what, p) in [("source", src), ("microphone", mic)] {
        if !room.contains(p) {
            return Err(Error::domain(format!("{what} at {p:?} is not inside the room")));
        }
    }
    let beta = room.reflection_coefficient(c)?;
    let fs = room.sample_rate as f64;
    let k = room.ir_len;
    let metres_per_tap = c / fs;
    let window = (INTERP_WIDTH_S * fs / 2.0).round() as i64 * 2;
    let half = window / 2;

    // Image orders whose shortest path could still land inside K taps.
    let orders: [i64; 3] = if beta == 0.0 {
        [0, 0, 0]
    } else {
        room.dimensions
            .map(|d| (k as f64 * metres_per_tap / (2.0 * d)).ceil() as i64)
    };

    let mut taps = vec![0.0; k];
    for mx in -orders[0]..=orders[0] {
        for my in -orders[1]..=orders[1] {
            for mz in -orders[2]..=orders[2] {
                for q in 0..=1i64 {
                    for j in 0..=1i64 {
                        for w in 0..=1i64 {
                            let reflections =
                                (mx - q).abs() + mx.abs() + (my - j).abs() + my.abs() + (mz - w).abs() + mz.abs();
                            let gain_refl = if reflections == 0 {
                                1.0
                            } else if beta == 0.0 {
                                continue;
                            } else {
                                beta.powi(reflections as i32)
                            };
                            let image = [
                                (1 - 2 * q) as f64 * src[0] + 2.0 * mx as f64 * room.dimensions[0],
                                (1 - 2 * j) as f64 * src[1] + 2.0 * my as f64 * room.dimensions[1],
                                (1 - 2 * w) as f64 * src[2] + 2.0 * mz as f64 * room.dimensions[2],
                            ];
                            let dist = distance(image, mic);
                            let delay = dist / metres_per_tap;
                            if delay.floor() >= k as f64 {
                                continue;
                            }
                            let gain = gain_refl / (4.0 * PI * dist.max(1e-3));
                            render_arrival(&mut taps, delay, gain, half);
                        }
                    }
                }
            }
        }
    }
    ImpulseResponse::new(taps, room.sample_rate, c)
}

/// Adds a Hann-windowed sinc pulse centred at fractional tap `delay`.
fn render_arrival(taps: &mut [f64], delay: f64, gain: f64, half: i64) {
    let base = delay.floor() as i64;
    for idx in (base - half + 1)..=(base + half) {
        if idx < 0 || idx as usize >= taps.len() {
            continue;
        }
        let t = idx as f64 - delay;
        let win = 0.5 * (1.0 + (PI * t / half as f64).cos());
        taps[idx as usize] += gain * win * crate::sicer::sinc(t);
    }
}

/// One IR bank per speed over `geometry.all_mics()` x loudspeakers.
pub fn simulate_bank(room: &RoomSpec, geometry: &ArrayGeometry, c: f64) -> Result<IrBank> {
    geometry.validate(room)?;
    let mics = geometry.all_mics();
    let pairs: Vec<(Position, Position)> = mics
        .iter()
        .flat_map(|&m| geometry.loudspeakers.iter().map(move |&l| (l, m)))
        .collect();
    let one = |&(src, mic): &(Position, Position)| simulate_ir(room, src, mic, c).map(|ir| ir.taps);
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<Vec<f64>>> = pairs.par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<Vec<f64>>> = pairs.iter().map(one).collect();
    IrBank::from_raw(
        mics.len(),
        geometry.loudspeakers.len(),
        room.ir_len,
        room.sample_rate,
        c,
        rows?.concat(),
    )
}

/// Ground-truth banks for every requested speed, in the given order.
pub fn simulate_ground_truth_banks(
    room: &RoomSpec,
    geometry: &ArrayGeometry,
    speeds: &[f64],
) -> Result<Vec<(f64, IrBank)>> {
    speeds
        .iter()
        .map(|&c| simulate_bank(room, geometry, c).map(|b| (c, b)))
        .collect()
}
