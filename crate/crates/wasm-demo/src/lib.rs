//! Three small demos driven from `www/index.html`: SICER against direct
//! simulation, the estimator cost over candidate speeds, and a short
//! tracking run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use speedtrack::estimator::{GridConfig, ObservationModel};
use speedtrack::experiment::{track_with_filters, ExperimentConfig, Preset, Scenario};
use speedtrack::frames::FilterBank;
use speedtrack::roomsim::{simulate_ir, RoomSpec};
use speedtrack::sicer::{resample_ir, SpeedRatio};

const SOURCE: [f64; 3] = [2.25, 1.0, 1.2];
const MIC: [f64; 3] = [1.75, 1.9, 1.2];
const C_OLD: f64 = 343.0;

fn free_field() -> RoomSpec {
    RoomSpec {
        dimensions: [4.5, 4.5, 2.2],
        rt60: 0.0,
        sample_rate: 16000,
        ir_len: 160,
    }
}

/// Directly simulated IR at `c`, the 343 m/s IR resampled to `c`, and the
/// relative l2 gap between them.
pub struct Comparison {
    pub direct: Vec<f64>,
    pub resampled: Vec<f64>,
    pub rel_error: f64,
}

pub fn compare_sicer(c: f64) -> speedtrack::Result<Comparison> {
    let room = free_field();
    let base = simulate_ir(&room, SOURCE, MIC, C_OLD)?;
    let direct = simulate_ir(&room, SOURCE, MIC, c)?.taps;
    let mut resampled = resample_ir(&base, SpeedRatio::new(c, C_OLD)?, 4000)?.taps;
    resampled.resize(direct.len(), 0.0);
    let err: f64 = direct.iter().zip(&resampled).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = direct.iter().map(|v| v * v).sum();
    Ok(Comparison {
        direct,
        resampled,
        rel_error: (err / norm).sqrt(),
    })
}

/// Cost of every candidate on `[326, 360]` in 0.25 m/s steps for one frame
/// observed at `c_true`. Returns `(candidates, costs)`.
pub fn cost_curve(c_true: f64, seed: u64) -> speedtrack::Result<(Vec<f64>, Vec<f64>)> {
    let cfg = ExperimentConfig::preset(Preset::Desk);
    let room = RoomSpec {
        rt60: 0.1,
        ir_len: 128,
        ..free_field()
    };
    let geometry = cfg.geometry.build();
    let n = cfg.frames.length;
    let irs = geometry
        .loudspeakers
        .iter()
        .map(|&src| simulate_ir(&room, src, geometry.observation_mic, C_OLD).map(|ir| ir.taps))
        .collect::<speedtrack::Result<Vec<_>>>()?;
    let mut model = ObservationModel::from_irs(irs, C_OLD, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let prev: Vec<Vec<f64>> = (0..model.speakers()).map(|_| frame()).collect();
    let cur: Vec<Vec<f64>> = (0..model.speakers()).map(|_| frame()).collect();
    let spectra = model.prepare(&cur, &prev)?;
    let measured = model.predict_frame(c_true, &spectra)?;
    let grid = GridConfig {
        adaptive: false,
        ..cfg.estimator.grid
    };
    let candidates = grid.candidates(None);
    let costs = model.sweep(&candidates, &measured, &spectra)?;
    Ok((candidates, costs))
}

/// Tracks a stepped speed schedule through the reverberant desk room with
/// the reference loudspeaker playing white noise. Returns `(true, estimate)`
/// per frame.
pub fn tracking_run(start: f64, step: f64, period: usize, frames: usize) -> speedtrack::Result<(Vec<f64>, Vec<f64>)> {
    let text = format!(
        "[schedule]\nstart_speed = {start:?}\nchange_step = {step:?}\nchange_period = {period}\nframes = {frames}\n"
    );
    let scenario = Scenario::simulate(ExperimentConfig::from_overrides(Preset::Desk, &text)?)?;
    let cfg = &scenario.config;
    let filters = FilterBank::unit_impulse(cfg.speakers(), cfg.vast.filter_len, cfg.vast_design().reference)?;
    let rows = track_with_filters(&scenario, &filters)?;
    Ok(rows.iter().map(|r| (r.true_c, r.estimate)).unzip())
}

fn js_err(e: speedtrack::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `[rel_error, direct..., resampled...]`, both halves the same length.
#[wasm_bindgen]
pub fn sicer_comparison(c: f64) -> Result<Vec<f64>, JsError> {
    let cmp = compare_sicer(c).map_err(js_err)?;
    let mut out = vec![cmp.rel_error];
    out.extend(cmp.direct);
    out.extend(cmp.resampled);
    Ok(out)
}

/// Candidates followed by their costs.
#[wasm_bindgen]
pub fn cost_landscape(c_true: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    let (mut cands, costs) = cost_curve(c_true, u64::from(seed)).map_err(js_err)?;
    cands.extend(costs);
    Ok(cands)
}

/// True speeds followed by estimates.
#[wasm_bindgen]
pub fn track(start: f64, step: f64, period: u32, frames: u32) -> Result<Vec<f64>, JsError> {
    let (mut truth, est) = tracking_run(start, step, period as usize, frames as usize).map_err(js_err)?;
    truth.extend(est);
    Ok(truth)
}
