//! Closed-loop simulation of the estimator and filter controller.

use std::collections::HashMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ObservationMode};
use super::metrics::{acoustic_contrast, metrics_csv, nsdp, MetricRow};
use super::signal::{add_noise, load_signal, SignalSource};
use crate::error::{Error, Result};
use crate::estimator::{speed_key, FilterController, ObservationModel, SpeedEstimator};
use crate::frames::{frame_convolve, propagate, render_feeds, ConvolutionState, FeedStates, FilterBank, PlantStates};
use crate::io;
use crate::ir::IrBank;
use crate::roomsim::{simulate_bank, ArrayGeometry};

/// Filter strategy compared in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    /// Filters redesigned from the online estimate.
    Proposed,
    /// Filters designed once at the reference speed.
    Nc,
    /// Filters redesigned from resampled IRs at the true speed.
    OracleSicer,
    /// Filters redesigned from the true-speed IRs at every speed change.
    Gt,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Proposed, Arm::Nc, Arm::OracleSicer, Arm::Gt];

    pub fn label(&self) -> &'static str {
        match self {
            Arm::Proposed => "proposed",
            Arm::Nc => "nc",
            Arm::OracleSicer => "oracle-sicer",
            Arm::Gt => "gt",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        Arm::ALL.into_iter().find(|a| a.label() == s)
    }
}

/// IR banks split into the rows each part of the loop needs.
struct SpeedBanks {
    full: IrBank,
    control: IrBank,
    observation: IrBank,
}

/// Configuration, geometry, IR banks and input frames of one study.
pub struct Scenario {
    pub config: ExperimentConfig,
    pub geometry: ArrayGeometry,
    pub input: Vec<Vec<f64>>,
    banks: HashMap<i64, SpeedBanks>,
}

pub fn bank_path(dir: &Path, c: f64) -> PathBuf {
    dir.join("irs").join(format!("bank_c{c:.3}.sirb"))
}

pub fn filter_path(dir: &Path, c: f64) -> PathBuf {
    dir.join("filters").join(format!("vast_c{c:.3}.vflt"))
}

impl Scenario {
    /// Simulates every needed IR bank in memory.
    pub fn simulate(config: ExperimentConfig) -> Result<Self> {
        let geometry = config.geometry.build();
        let banks = config
            .bank_speeds()
            .into_iter()
            .map(|c| simulate_bank(&config.room, &geometry, c))
            .collect::<Result<Vec<_>>>()?;
        Self::with_banks(config, banks)
    }

    /// Loads the IR banks written by `simulate-irs`.
    pub fn from_disk(config: ExperimentConfig) -> Result<Self> {
        let mut banks = Vec::new();
        for c in config.bank_speeds() {
            let path = bank_path(&config.output_dir, c);
            if !path.exists() {
                return Err(Error::Io {
                    path: path.clone(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "IR bank missing; run `speedtrack simulate-irs <config>` first",
                    ),
                });
            }
            banks.push(io::read_bank(&path)?);
        }
        Self::with_banks(config, banks)
    }

    pub fn with_banks(config: ExperimentConfig, banks: Vec<IrBank>) -> Result<Self> {
        config.validate()?;
        let geometry = config.geometry.build();
        let mics = geometry.all_mics().len();
        let mut map = HashMap::new();
        for bank in banks {
            if bank.mics() != mics
                || bank.speakers() != geometry.loudspeakers.len()
                || bank.taps() != config.room.ir_len
                || bank.sample_rate != config.room.sample_rate
            {
                return Err(Error::config(format!(
                    "IR bank at {} m/s is {}x{}x{} @ {} Hz but the configuration needs {mics}x{}x{} @ {} Hz; re-run simulate-irs",
                    bank.reference_speed,
                    bank.mics(),
                    bank.speakers(),
                    bank.taps(),
                    bank.sample_rate,
                    geometry.loudspeakers.len(),
                    config.room.ir_len,
                    config.room.sample_rate
                )));
            }
            let control = bank.select_mics(&geometry.control_rows())?;
            let observation = bank.select_mics(&[geometry.observation_row()])?;
            map.insert(
                speed_key(bank.reference_speed),
                SpeedBanks {
                    full: bank,
                    control,
                    observation,
                },
            );
        }
        for c in config.bank_speeds() {
            if !map.contains_key(&speed_key(c)) {
                return Err(Error::config(format!("no IR bank for {c} m/s")));
            }
        }
        let input = load_signal(
            &SignalSource::parse(&config.signal.source),
            config.room.sample_rate,
            config.frames.length,
            config.schedule.frames,
            config.seed,
        )?;
        Ok(Self {
            config,
            geometry,
            input,
            banks: map,
        })
    }

    /// Replaces the input signal frames.
    pub fn set_input(&mut self, input: Vec<Vec<f64>>) -> Result<()> {
        let n = self.config.frames.length;
        if input.len() != self.config.schedule.frames || input.iter().any(|f| f.len() != n) {
            return Err(Error::config(format!(
                "input must be {} frames of {n} samples",
                self.config.schedule.frames
            )));
        }
        self.input = input;
        Ok(())
    }

    fn banks(&self, c: f64) -> Result<&SpeedBanks> {
        self.banks
            .get(&speed_key(c))
            .ok_or_else(|| Error::config(format!("no IR bank for {c} m/s")))
    }

    /// Full bank (bright, dark, observation rows) at speed `c`.
    pub fn bank(&self, c: f64) -> Result<&IrBank> {
        Ok(&self.banks(c)?.full)
    }

    fn reference_controller(&self, c_thresh: f64) -> Result<FilterController> {
        let refb = self.banks(self.config.schedule.c_old)?;
        Ok(FilterController::new(
            refb.control.clone(),
            self.geometry.bright_rows(),
            self.geometry.dark_rows(),
            self.config.vast_design(),
            self.config.frames.length,
            c_thresh,
        ))
    }

    fn estimator(&self) -> Result<SpeedEstimator> {
        let refb = self.banks(self.config.schedule.c_old)?;
        let model = ObservationModel::new(&refb.observation, 0, self.config.frames.length)?;
        SpeedEstimator::new(model, self.config.estimator.grid.clone(), self.config.energy_floor())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRow {
    pub frame: usize,
    pub true_c: f64,
    pub estimate: f64,
    pub cost: Option<f64>,
    pub filter_updated: bool,
    pub low_energy: bool,
}

pub const TRACKING_HEADER: &str = "frame,true_c,estimate_c,cost_min,filter_updated,low_energy_flag";

pub fn tracking_csv(rows: &[TrackingRow]) -> String {
    let mut out = String::from(TRACKING_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.3},{:.3},{},{},{}",
            r.frame,
            r.true_c,
            r.estimate,
            r.cost.map(|c| format!("{c:.6e}")).unwrap_or_default(),
            u8::from(r.filter_updated),
            u8::from(r.low_energy)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: Arm,
    pub tracking: Vec<TrackingRow>,
    pub metrics: Vec<MetricRow>,
    /// Design speed of the filters used in each frame.
    pub filter_speeds: Vec<f64>,
}

impl ArmResult {
    pub fn tracking_csv(&self) -> String {
        tracking_csv(&self.tracking)
    }

    pub fn metrics_csv(&self) -> String {
        metrics_csv(self.arm.label(), &self.metrics)
    }

    pub fn update_count(&self) -> usize {
        self.tracking.iter().filter(|r| r.filter_updated).count()
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let label = self.arm.label();
        io::write_file(
            &run_dir.join(format!("tracking_{label}.csv")),
            self.tracking_csv().as_bytes(),
        )?;
        io::write_file(
            &run_dir.join(format!("metrics_{label}.csv")),
            self.metrics_csv().as_bytes(),
        )
    }
}

/// Runs one arm with the configured update threshold.
pub fn run_arm(scenario: &Scenario, arm: Arm) -> Result<ArmResult> {
    run_arm_with_threshold(scenario, arm, scenario.config.estimator.c_thresh)
}

pub fn run_arm_with_threshold(scenario: &Scenario, arm: Arm, c_thresh: f64) -> Result<ArmResult> {
    let cfg = &scenario.config;
    let n = cfg.frames.length;
    let schedule = cfg.schedule.schedule();
    let speakers = scenario.geometry.loudspeakers.len();
    let bright = scenario.geometry.bright_mics.len();
    let design = cfg.vast_design();
    let delay = design.modeling_delay;

    let mut controller = scenario.reference_controller(c_thresh)?;
    let mut estimator = scenario.estimator()?;
    let mut gt_designs: HashMap<i64, crate::szc::VastFilterBank> = HashMap::new();
    let mut gt_design = |c: f64| -> Result<crate::szc::VastFilterBank> {
        if let Some(d) = gt_designs.get(&speed_key(c)) {
            return Ok(d.clone());
        }
        let bank = &scenario.banks(c)?.control;
        let d = design.design(bank, &scenario.geometry.bright_rows(), &scenario.geometry.dark_rows())?;
        gt_designs.insert(speed_key(c), d.clone());
        Ok(d)
    };

    let mut filters = controller.initial_filters()?;

    let mut feed_states = FeedStates::new(speakers, n, design.filter_len)?;
    let mut plant_states = PlantStates::new(bright + scenario.geometry.dark_mics.len(), speakers, n, cfg.room.ir_len)?;
    let mut obs_states = PlantStates::new(1, speakers, n, cfg.room.ir_len)?;
    let mut desired_states = vec![ConvolutionState::new(n, cfg.room.ir_len + delay)?; bright];
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut prev_feeds = vec![vec![0.0; n]; speakers];

    let mut tracking = Vec::with_capacity(schedule.frames);
    let mut metrics = Vec::with_capacity(schedule.frames);
    let mut filter_speeds = Vec::with_capacity(schedule.frames);

    for tau in 1..=schedule.frames {
        let c_true = schedule.speed_at(tau);
        let banks = scenario.banks(c_true)?;
        filter_speeds.push(filters.design_speed);

        let x = &scenario.input[tau - 1];
        let feeds = render_feeds(&filters.filters, x, &mut feed_states)?;
        let control = propagate(&banks.control, &feeds, &mut plant_states)?;

        let spectra = estimator.model().prepare(&feeds, &prev_feeds)?;
        let mut measured = match cfg.estimator.observation {
            ObservationMode::Plant => propagate(&banks.observation, &feeds, &mut obs_states)?.remove(0),
            ObservationMode::Model => estimator.model().predict_frame(c_true, &spectra)?,
        };
        if let Some(snr) = cfg.estimator.noise_snr_db {
            add_noise(&mut measured, snr, &mut noise_rng);
        }
        let est = estimator.estimate(&measured, &spectra)?;

        let desired = (0..bright)
            .map(|m| {
                let mut kernel = vec![0.0; delay];
                kernel.extend_from_slice(banks.control.ir(m, design.reference));
                frame_convolve(&kernel, x, &mut desired_states[m])
            })
            .collect::<Result<Vec<_>>>()?;
        let (p_bright, p_dark) = control.split_at(bright);
        metrics.push(MetricRow {
            frame: tau,
            ac: acoustic_contrast(p_bright, p_dark),
            nsdp: nsdp(&desired, p_bright),
        });

        // Redesigned filters take effect from the next frame in every arm.
        let next = match arm {
            Arm::Proposed => controller.observe(est.estimate),
            Arm::OracleSicer => controller.observe(c_true),
            Arm::Gt if speed_key(filters.design_speed) != speed_key(c_true) => Some(gt_design(c_true)?),
            Arm::Nc | Arm::Gt => None,
        };
        let updated = next.is_some();
        if let Some(f) = next {
            filters = f;
        }
        tracking.push(TrackingRow {
            frame: tau,
            true_c: c_true,
            estimate: est.estimate,
            cost: est.cost,
            filter_updated: updated,
            low_energy: est.low_energy,
        });
        prev_feeds = feeds;
    }

    Ok(ArmResult {
        arm,
        tracking,
        metrics,
        filter_speeds,
    })
}

/// Tracking-only loop with fixed feed filters (no zone metrics).
pub fn track_with_filters(scenario: &Scenario, filters: &FilterBank) -> Result<Vec<TrackingRow>> {
    let cfg = &scenario.config;
    let n = cfg.frames.length;
    let schedule = cfg.schedule.schedule();
    let mut estimator = scenario.estimator()?;
    let mut feed_states = FeedStates::new(filters.speakers(), n, filters.len())?;
    let mut obs_states = PlantStates::new(1, filters.speakers(), n, cfg.room.ir_len)?;
    let mut prev = vec![vec![0.0; n]; filters.speakers()];
    let mut rows = Vec::new();
    for tau in 1..=schedule.frames {
        let c_true = schedule.speed_at(tau);
        let feeds = render_feeds(filters, &scenario.input[tau - 1], &mut feed_states)?;
        let spectra = estimator.model().prepare(&feeds, &prev)?;
        let measured = match cfg.estimator.observation {
            ObservationMode::Plant => {
                propagate(&scenario.banks(c_true)?.observation, &feeds, &mut obs_states)?.remove(0)
            }
            ObservationMode::Model => estimator.model().predict_frame(c_true, &spectra)?,
        };
        let est = estimator.estimate(&measured, &spectra)?;
        rows.push(TrackingRow {
            frame: tau,
            true_c: c_true,
            estimate: est.estimate,
            cost: est.cost,
            filter_updated: false,
            low_energy: est.low_energy,
        });
        prev = feeds;
    }
    Ok(rows)
}

/// Writes one IR bank per needed speed to `<output_dir>/irs`.
pub fn simulate_irs(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let geometry = config.geometry.build();
    let mut written = Vec::new();
    for c in config.bank_speeds() {
        let bank = simulate_bank(&config.room, &geometry, c)?;
        let path = bank_path(&config.output_dir, c);
        io::write_bank(&path, &bank)?;
        log::info!("wrote {}", path.display());
        written.push(path);
    }
    Ok(written)
}

/// Designs VAST filters from the stored bank of every needed speed and
/// writes them to `<output_dir>/filters`.
pub fn design_filters(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::from_disk(config.clone())?;
    let design = config.vast_design();
    let mut written = Vec::new();
    for c in config.bank_speeds() {
        let banks = scenario.banks(c)?;
        let filters = design.design(
            &banks.control,
            &scenario.geometry.bright_rows(),
            &scenario.geometry.dark_rows(),
        )?;
        let path = filter_path(&config.output_dir, c);
        io::write_filters(&path, &filters)?;
        log::info!("wrote {}", path.display());
        written.push(path);
    }
    Ok(written)
}

/// Runs the given arms on stored IR banks; traces go to `<output_dir>/run`.
pub fn run_to_disk(config: &ExperimentConfig, arms: &[Arm]) -> Result<PathBuf> {
    let scenario = Scenario::from_disk(config.clone())?;
    let run_dir = config.output_dir.join("run");
    io::write_file(&run_dir.join("config.toml"), config.to_toml().as_bytes())?;
    for &arm in arms {
        let result = run_arm(&scenario, arm)?;
        result.write(&run_dir)?;
        log::info!("{}: {} filter updates", arm.label(), result.update_count());
    }
    Ok(run_dir)
}

/// Per-method averages of a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub frames: usize,
    pub mean_ac: Option<f64>,
    pub mean_nsdp: Option<f64>,
    pub nonfinite_frames: usize,
    pub rmse_speed: Option<f64>,
    pub updates: Option<usize>,
}

pub const SUMMARY_HEADER: &str = "method,frames,mean_AC_dB,mean_nSDP_dB,nonfinite_frames,rmse_c,filter_updates";

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn tracking_stats(path: &Path) -> Result<(f64, usize)> {
    let text = read_text(path)?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(TRACKING_HEADER) {
        return Err(bad("missing tracking header".into()));
    }
    let (mut sq, mut n, mut updates) = (0.0, 0usize, 0usize);
    for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(format!("line {}: expected 6 fields", i + 2)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2)));
        let err = num(f[2])? - num(f[1])?;
        sq += err * err;
        n += 1;
        updates += usize::from(f[4] == "1");
    }
    Ok(((sq / n.max(1) as f64).sqrt(), updates))
}

/// Summarizes every `metrics_<method>.csv` in `run_dir`.
pub fn summarize_run(run_dir: &Path) -> Result<Vec<MethodSummary>> {
    let entries = std::fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("metrics_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::io(
            run_dir,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no metrics_*.csv files; run `speedtrack run` first",
            ),
        ));
    }
    let mut out = Vec::new();
    for path in files {
        let rows = super::metrics::parse_metrics_csv(&read_text(&path)?).map_err(|message| Error::Format {
            path: path.clone(),
            message,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let method = stem.trim_start_matches("metrics_").to_string();
        let ac: Vec<f64> = rows.iter().filter_map(|r| r.2).collect();
        let sdp: Vec<f64> = rows.iter().filter_map(|r| r.3).collect();
        let nonfinite = rows.iter().filter(|r| r.2.is_none() || r.3.is_none()).count();
        let tracking = run_dir.join(format!("tracking_{method}.csv"));
        let (rmse, updates) = if tracking.exists() {
            let (r, u) = tracking_stats(&tracking)?;
            (Some(r), Some(u))
        } else {
            (None, None)
        };
        out.push(MethodSummary {
            method,
            frames: rows.len(),
            mean_ac: mean(&ac),
            mean_nsdp: mean(&sdp),
            nonfinite_frames: nonfinite,
            rmse_speed: rmse,
            updates,
        });
    }
    Ok(out)
}

pub fn summary_csv(rows: &[MethodSummary]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.frames,
            opt(r.mean_ac),
            opt(r.mean_nsdp),
            r.nonfinite_frames,
            opt(r.rmse_speed),
            r.updates.map(|u| u.to_string()).unwrap_or_default()
        );
    }
    out
}
