//! Frame-wise sound speed estimation from one observation microphone and
//! the filter-update controller built on it.
//!
//! For a candidate speed `c`, the observation IRs known at `c_old` are
//! resampled with `alpha = c / c_old` and the current and previous
//! loudspeaker feed frames are pushed through them. The estimate is the
//! grid candidate whose predicted frame is closest (squared error) to the
//! measured one.

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::frames::{energy, fft_size, FilterBank};
use crate::ir::IrBank;
use crate::sicer::{check_speed, output_len, resample_taps};
use crate::szc::{VastDesign, VastFilterBank};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Speeds are compared and cached on a 1e-6 m/s lattice.
pub fn speed_key(c: f64) -> i64 {
    (c * 1e6).round() as i64
}

fn quantize(c: f64) -> f64 {
    speed_key(c) as f64 / 1e6
}

/// Search range and step sizes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub step: f64,
    pub adaptive: bool,
    /// Half-width of the adaptive window around the previous estimate.
    pub c_width: f64,
    pub step_adapt: f64,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min < self.c_max) {
            return Err(Error::config(format!(
                "search range needs c_min < c_max, got [{}, {}]",
                self.c_min, self.c_max
            )));
        }
        check_speed(self.c_min)?;
        check_speed(self.c_max)?;
        if !(self.step > 0.0) || (self.adaptive && !(self.step_adapt > 0.0 && self.c_width > 0.0)) {
            return Err(Error::config("grid steps and adaptive width must be positive"));
        }
        Ok(())
    }

    /// Search window for the next frame given the previous estimate.
    pub fn window(&self, prev: Option<f64>) -> (f64, f64, f64) {
        match prev {
            Some(p) if self.adaptive => (
                (p - self.c_width).max(self.c_min),
                (p + self.c_width).min(self.c_max),
                self.step_adapt,
            ),
            _ => (self.c_min, self.c_max, self.step),
        }
    }

    /// Candidates `lo, lo + step, ...` up to `hi` inclusive.
    pub fn candidates(&self, prev: Option<f64>) -> Vec<f64> {
        let (lo, hi, step) = self.window(prev);
        if hi < lo {
            return Vec::new();
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| quantize(lo + k as f64 * step)).collect()
    }
}

struct CandidateModel {
    /// Resampled observation IRs, one per loudspeaker.
    irs: Vec<Vec<f64>>,
    spectra: Vec<Vec<Complex<f64>>>,
}

/// The observation microphone's IRs at `c_old` plus a per-candidate cache
/// of their resampled versions.
pub struct ObservationModel {
    reference: Vec<Vec<f64>>,
    c_old: f64,
    frame_len: usize,
    fft_len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    cache: HashMap<i64, Arc<CandidateModel>>,
    cache_capacity: usize,
}

/// Spectra of `[y_l[tau-1], y_l[tau]]` for one frame, shared by all candidates.
pub struct FeedSpectra {
    spectra: Vec<Vec<Complex<f64>>>,
    energy: f64,
}

impl FeedSpectra {
    /// Energy of the current feed frames.
    pub fn energy(&self) -> f64 {
        self.energy
    }
}

impl ObservationModel {
    /// `bank` row `row` holds the observation microphone's IRs at `bank.reference_speed`.
    pub fn new(bank: &IrBank, row: usize, frame_len: usize) -> Result<Self> {
        if row >= bank.mics() {
            return Err(Error::config(format!("observation row {row} out of range")));
        }
        if bank.taps() > frame_len + 1 {
            return Err(Error::config(format!(
                "observation IRs have K={} taps, frame length N={frame_len} allows at most N+1",
                bank.taps()
            )));
        }
        let reference = (0..bank.speakers()).map(|l| bank.ir(row, l).to_vec()).collect();
        Self::from_irs(reference, bank.reference_speed, frame_len)
    }

    pub fn from_irs(reference: Vec<Vec<f64>>, c_old: f64, frame_len: usize) -> Result<Self> {
        check_speed(c_old)?;
        if reference.is_empty() || reference.iter().any(Vec::is_empty) {
            return Err(Error::config(
                "observation model needs one non-empty IR per loudspeaker",
            ));
        }
        let fft_len = fft_size(2 * frame_len);
        let mut planner = FftPlanner::new();
        Ok(Self {
            reference,
            c_old,
            frame_len,
            fft_len,
            fwd: planner.plan_fft_forward(fft_len),
            inv: planner.plan_fft_inverse(fft_len),
            cache: HashMap::new(),
            cache_capacity: 4096,
        })
    }

    pub fn c_old(&self) -> f64 {
        self.c_old
    }

    pub fn speakers(&self) -> usize {
        self.reference.len()
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Resampled observation IRs for candidate `c`.
    pub fn resampled(&mut self, c: f64) -> Result<Vec<Vec<f64>>> {
        Ok(self.entry(c)?.irs.clone())
    }

    fn entry(&mut self, c: f64) -> Result<Arc<CandidateModel>> {
        check_speed(c)?;
        let key = speed_key(c);
        if let Some(e) = self.cache.get(&key) {
            return Ok(Arc::clone(e));
        }
        if self.cache.len() >= self.cache_capacity {
            self.cache.clear();
        }
        let alpha = quantize(c) / self.c_old;
        let k = self.reference[0].len();
        let out_len = output_len(k, alpha, self.frame_len);
        if out_len > self.frame_len + 1 {
            return Err(Error::config("resampled IR does not fit the frame buffer"));
        }
        let irs: Vec<Vec<f64>> = self
            .reference
            .iter()
            .map(|h| resample_taps(h, alpha, out_len))
            .collect();
        let spectra = irs.iter().map(|h| self.forward(h, &[])).collect();
        let e = Arc::new(CandidateModel { irs, spectra });
        self.cache.insert(key, Arc::clone(&e));
        Ok(e)
    }

    fn forward(&self, a: &[f64], b: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (dst, &v) in buf.iter_mut().zip(a.iter().chain(b)) {
            dst.re = v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// Transforms the feeds of one frame; `previous` holds `y_l[tau-1]`.
    pub fn prepare(&self, current: &[Vec<f64>], previous: &[Vec<f64>]) -> Result<FeedSpectra> {
        let (l, n) = (self.speakers(), self.frame_len);
        if current.len() != l || previous.len() != l {
            return Err(Error::config(format!(
                "expected {l} feed frames for frames tau and tau-1"
            )));
        }
        if current.iter().chain(previous).any(|y| y.len() != n) {
            return Err(Error::config(format!("feed frames must have N={n} samples")));
        }
        let spectra = previous.iter().zip(current).map(|(p, c)| self.forward(p, c)).collect();
        let energy = current.iter().map(|y| energy(y)).sum();
        Ok(FeedSpectra { spectra, energy })
    }

    fn predict_with(&self, model: &CandidateModel, feeds: &FeedSpectra) -> Vec<f64> {
        let mut acc = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (h, y) in model.spectra.iter().zip(&feeds.spectra) {
            for ((a, hv), yv) in acc.iter_mut().zip(h).zip(y) {
                *a += hv * yv;
            }
        }
        self.inv.process(&mut acc);
        let scale = 1.0 / self.fft_len as f64;
        // Samples N..2N-1 of h * [y[tau-1], y[tau]] are the head of h * y[tau]
        // plus the tail of h * y[tau-1].
        acc[self.frame_len..2 * self.frame_len]
            .iter()
            .map(|c| c.re * scale)
            .collect()
    }

    /// Modeled observation frame at candidate speed `c`.
    pub fn predict_frame(&mut self, c: f64, feeds: &FeedSpectra) -> Result<Vec<f64>> {
        let model = self.entry(c)?;
        Ok(self.predict_with(&model, feeds))
    }

    /// Squared error between `measured` and the prediction at `c`.
    pub fn frame_cost(&mut self, c: f64, measured: &[f64], feeds: &FeedSpectra) -> Result<f64> {
        let model = self.entry(c)?;
        Ok(self.cost_with(&model, measured, feeds))
    }

    fn cost_with(&self, model: &CandidateModel, measured: &[f64], feeds: &FeedSpectra) -> f64 {
        self.predict_with(model, feeds)
            .iter()
            .zip(measured)
            .map(|(p, m)| (m - p) * (m - p))
            .sum()
    }

    /// Costs of every candidate, in candidate order.
    pub fn sweep(&mut self, candidates: &[f64], measured: &[f64], feeds: &FeedSpectra) -> Result<Vec<f64>> {
        if measured.len() != self.frame_len {
            return Err(Error::config(format!(
                "measured frame has {} samples, expected N={}",
                measured.len(),
                self.frame_len
            )));
        }
        let models = candidates.iter().map(|&c| self.entry(c)).collect::<Result<Vec<_>>>()?;
        let this = &*self;
        #[cfg(feature = "parallel")]
        let costs = models.par_iter().map(|m| this.cost_with(m, measured, feeds)).collect();
        #[cfg(not(feature = "parallel"))]
        let costs = models.iter().map(|m| this.cost_with(m, measured, feeds)).collect();
        Ok(costs)
    }
}

/// Outcome of one grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub estimate: f64,
    pub cost: f64,
    /// The optimum sits on an edge of the searched window.
    pub at_boundary: bool,
}

/// Picks the minimal-cost candidate; exact ties go to the candidate nearest
/// `anchor`, then to the smaller speed.
pub fn select_minimum(candidates: &[f64], costs: &[f64], anchor: f64) -> Option<(usize, f64)> {
    let mut best: Option<usize> = None;
    for (i, (&c, &cost)) in candidates.iter().zip(costs).enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let (bc, bcost) = (candidates[b], costs[b]);
                cost < bcost
                    || (cost == bcost
                        && ((c - anchor).abs() < (bc - anchor).abs()
                            || ((c - anchor).abs() == (bc - anchor).abs() && c < bc)))
            }
        };
        if better {
            best = Some(i);
        }
    }
    best.map(|i| (i, costs[i]))
}

pub fn grid_search(
    model: &mut ObservationModel,
    grid: &GridConfig,
    prev: Option<f64>,
    measured: &[f64],
    feeds: &FeedSpectra,
) -> Result<SearchResult> {
    let candidates = grid.candidates(prev);
    if candidates.is_empty() {
        return Err(Error::config("search window contains no candidates"));
    }
    let costs = model.sweep(&candidates, measured, feeds)?;
    let (lo, hi, _) = grid.window(prev);
    let anchor = prev.unwrap_or(0.5 * (lo + hi));
    let (idx, cost) = select_minimum(&candidates, &costs, anchor).expect("non-empty candidates");
    let at_boundary = idx == 0 || idx + 1 == candidates.len();
    if at_boundary {
        log::debug!(
            "estimate {} on the edge of the search window [{lo}, {hi}]",
            candidates[idx]
        );
    }
    Ok(SearchResult {
        estimate: candidates[idx],
        cost,
        at_boundary,
    })
}

/// Per-frame estimator output.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub estimate: f64,
    /// `None` when the frame was skipped as silent.
    pub cost: Option<f64>,
    pub low_energy: bool,
}

/// Grid-search estimator with its running state.
pub struct SpeedEstimator {
    model: ObservationModel,
    grid: GridConfig,
    prev: Option<f64>,
    energy_floor: f64,
    history: Vec<FrameEstimate>,
}

impl SpeedEstimator {
    /// `energy_floor`: frames whose feed energy is below it keep the previous estimate.
    pub fn new(model: ObservationModel, grid: GridConfig, energy_floor: f64) -> Result<Self> {
        grid.validate()?;
        Ok(Self {
            model,
            grid,
            prev: None,
            energy_floor,
            history: Vec::new(),
        })
    }

    pub fn model(&mut self) -> &mut ObservationModel {
        &mut self.model
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn previous(&self) -> Option<f64> {
        self.prev
    }

    pub fn history(&self) -> &[FrameEstimate] {
        &self.history
    }

    pub fn estimate(&mut self, measured: &[f64], feeds: &FeedSpectra) -> Result<FrameEstimate> {
        let out = if feeds.energy() < self.energy_floor {
            FrameEstimate {
                estimate: self.prev.unwrap_or(self.model.c_old()),
                cost: None,
                low_energy: true,
            }
        } else {
            let r = grid_search(&mut self.model, &self.grid, self.prev, measured, feeds)?;
            FrameEstimate {
                estimate: r.estimate,
                cost: Some(r.cost),
                low_energy: false,
            }
        };
        self.prev = Some(out.estimate);
        self.history.push(out.clone());
        Ok(out)
    }
}

/// Redesigns control filters from SICER-resampled control IRs whenever the
/// supplied speed drifts at least `c_thresh` away from the design speed.
pub struct FilterController {
    control_bank: IrBank,
    bright_rows: Vec<usize>,
    dark_rows: Vec<usize>,
    design: VastDesign,
    frame_len: usize,
    c_filt: f64,
    c_thresh: f64,
    designs: HashMap<i64, VastFilterBank>,
}

impl FilterController {
    /// `control_bank` holds the bright and dark rows at `c_old`.
    pub fn new(
        control_bank: IrBank,
        bright_rows: Vec<usize>,
        dark_rows: Vec<usize>,
        design: VastDesign,
        frame_len: usize,
        c_thresh: f64,
    ) -> Self {
        let c_filt = control_bank.reference_speed;
        Self {
            control_bank,
            bright_rows,
            dark_rows,
            design,
            frame_len,
            c_filt,
            c_thresh,
            designs: HashMap::new(),
        }
    }

    pub fn c_old(&self) -> f64 {
        self.control_bank.reference_speed
    }

    /// Speed the installed filters were designed for.
    pub fn c_filt(&self) -> f64 {
        self.c_filt
    }

    /// Filters designed at speed `c` from the resampled reference bank.
    pub fn design_for(&mut self, c: f64) -> Result<VastFilterBank> {
        if let Some(d) = self.designs.get(&speed_key(c)) {
            return Ok(d.clone());
        }
        let ratio = crate::sicer::SpeedRatio::new(c, self.c_old())?;
        let bank = crate::sicer::resample_bank(&self.control_bank, ratio, self.frame_len)?;
        let mut d = self.design.design(&bank, &self.bright_rows, &self.dark_rows)?;
        d.design_speed = c;
        self.designs.insert(speed_key(c), d.clone());
        Ok(d)
    }

    /// Initial filters at `c_old`.
    pub fn initial_filters(&mut self) -> Result<VastFilterBank> {
        self.design_for(self.c_old())
    }

    /// Returns new filters (to install from the next frame) when `c_hat`
    /// crosses the threshold. A failed design keeps the old filters.
    pub fn observe(&mut self, c_hat: f64) -> Option<VastFilterBank> {
        if (c_hat - self.c_filt).abs() < self.c_thresh {
            return None;
        }
        match self.design_for(c_hat) {
            Ok(d) => {
                self.c_filt = c_hat;
                Some(d)
            }
            Err(e) => {
                log::error!("filter redesign at {c_hat} m/s failed, keeping previous filters: {e}");
                None
            }
        }
    }
}

/// Filters shaped for feeds: passes `x` through loudspeaker `l` unfiltered.
pub fn passthrough(speakers: usize, filter_len: usize, l: usize) -> Result<FilterBank> {
    FilterBank::unit_impulse(speakers, filter_len, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_full() -> GridConfig {
        GridConfig {
            c_min: 326.0,
            c_max: 360.0,
            step: 0.25,
            adaptive: true,
            c_width: 3.0,
            step_adapt: 0.1,
        }
    }

    #[test]
    fn candidate_counts() {
        let g = grid_full();
        let full = g.candidates(None);
        assert_eq!(full.len(), 137);
        assert_eq!(full[0], 326.0);
        assert_eq!(*full.last().unwrap(), 360.0);

        let adapt = g.candidates(Some(343.0));
        assert_eq!(adapt.len(), 61);
        assert_eq!(adapt[0], 340.0);
        assert_eq!(adapt[30], 343.0);
        assert_eq!(*adapt.last().unwrap(), 346.0);
        assert!(adapt.contains(&345.0));

        // Window is clipped to the global range.
        let edge = g.candidates(Some(358.5));
        assert_eq!(edge[0], 355.5);
        assert_eq!(*edge.last().unwrap(), 360.0);
    }

    #[test]
    fn non_adaptive_ignores_previous() {
        let g = GridConfig {
            adaptive: false,
            ..grid_full()
        };
        assert_eq!(g.candidates(Some(343.0)).len(), 137);
    }

    #[test]
    fn ties_prefer_anchor_then_smaller() {
        let c = [340.0, 341.0, 342.0, 343.0];
        assert_eq!(select_minimum(&c, &[1.0, 0.5, 0.5, 0.7], 343.0), Some((2, 0.5)));
        assert_eq!(select_minimum(&c, &[0.0, 1.0, 0.0, 1.0], 341.0), Some((0, 0.0)));
        assert_eq!(select_minimum(&c, &[2.0, 2.0, 2.0, 2.0], 341.6), Some((2, 2.0)));
        assert_eq!(select_minimum(&[], &[], 0.0), None);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(GridConfig {
            c_min: 350.0,
            c_max: 340.0,
            ..grid_full()
        }
        .validate()
        .is_err());
        assert!(GridConfig {
            step: 0.0,
            ..grid_full()
        }
        .validate()
        .is_err());
        assert!(GridConfig {
            c_max: 500.0,
            ..grid_full()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn zero_feeds_predict_silence() {
        let mut model = ObservationModel::from_irs(vec![vec![0.2, 0.5, -0.1]; 2], 343.0, 8).unwrap();
        let zeros = vec![vec![0.0; 8]; 2];
        let f = model.prepare(&zeros, &zeros).unwrap();
        let p = model.predict_frame(341.0, &f).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(f.energy(), 0.0);
        let measured = vec![1.0; 8];
        assert!((model.frame_cost(341.0, &measured, &f).unwrap() - 8.0).abs() < 1e-12);
    }
}
