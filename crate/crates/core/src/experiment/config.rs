//! Experiment configuration.
//!
//! Configuration files are TOML with one table per section. A file only
//! needs to list the keys it changes: it is merged over a preset, either
//! the desk-scale default or the full-scale preset (`--full`) with the
//! study's original dimensions.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::GridConfig;
use crate::roomsim::{ArrayGeometry, Position, RoomSpec, ScenarioSchedule};
use crate::szc::VastDesign;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub room: RoomSpec,
    pub geometry: GeometryConfig,
    pub schedule: ScheduleConfig,
    pub signal: SignalConfig,
    pub frames: FrameConfig,
    pub vast: VastConfig,
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub loudspeaker_count: usize,
    pub loudspeaker_spacing: f64,
    pub array_center: Position,
    pub zone_mics: usize,
    pub zone_spacing: f64,
    pub bright_center: Position,
    pub dark_center: Position,
    pub observation_mic: Position,
    /// Explicit positions override the generated layouts when non-empty.
    #[serde(default)]
    pub loudspeakers: Vec<Position>,
    #[serde(default)]
    pub bright_mics: Vec<Position>,
    #[serde(default)]
    pub dark_mics: Vec<Position>,
}

impl GeometryConfig {
    pub fn build(&self) -> ArrayGeometry {
        let or = |explicit: &Vec<Position>, generated: Vec<Position>| {
            if explicit.is_empty() {
                generated
            } else {
                explicit.clone()
            }
        };
        ArrayGeometry {
            loudspeakers: or(
                &self.loudspeakers,
                ArrayGeometry::line_array(self.array_center, self.loudspeaker_count, self.loudspeaker_spacing),
            ),
            bright_mics: or(
                &self.bright_mics,
                ArrayGeometry::hex_zone(self.bright_center, self.zone_mics, self.zone_spacing),
            ),
            dark_mics: or(
                &self.dark_mics,
                ArrayGeometry::hex_zone(self.dark_center, self.zone_mics, self.zone_spacing),
            ),
            observation_mic: self.observation_mic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Speed at which the reference IRs are known and initial filters designed.
    pub c_old: f64,
    pub start_speed: f64,
    pub change_step: f64,
    pub change_period: usize,
    pub frames: usize,
}

impl ScheduleConfig {
    pub fn schedule(&self) -> ScenarioSchedule {
        ScenarioSchedule {
            start_speed: self.start_speed,
            change_step: self.change_step,
            change_period: self.change_period,
            frames: self.frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    /// `"white"` or a path to a WAV file.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Frame length N in samples.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VastConfig {
    pub filter_len: usize,
    /// 0 selects the full rank `L*J`.
    pub rank: usize,
    pub mu: f64,
    pub gamma: f64,
    /// 1-based index of the loudspeaker acting as the desired source.
    pub reference_loudspeaker: usize,
    /// Defaults to `floor(J / 2)`.
    #[serde(default)]
    pub modeling_delay: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    /// Stream the feeds through the ground-truth observation IRs.
    Plant,
    /// Synthesize each frame with the resampling model at the true speed.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(flatten)]
    pub grid: GridConfig,
    /// Filter update threshold in m/s; `inf` disables updates.
    pub c_thresh: f64,
    /// Silence floor relative to a full-scale frame (energy N).
    pub energy_floor: f64,
    pub observation: ObservationMode,
    /// Additive white measurement noise; absent means noise-free.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
}

const DESK: &str = r#"
version = 1
seed = 1
output_dir = "out"

[room]
dimensions = [4.5, 4.5, 2.2]
rt60 = 0.1
sample_rate = 16000
ir_len = 128

[geometry]
loudspeaker_count = 4
loudspeaker_spacing = 0.3
array_center = [2.25, 1.0, 1.2]
zone_mics = 8
zone_spacing = 0.09
bright_center = [1.75, 1.9, 1.2]
dark_center = [2.75, 1.9, 1.2]
observation_mic = [1.75, 1.78, 1.2]

[schedule]
c_old = 343.0
start_speed = 333.0
change_step = 2.0
change_period = 8
frames = 88

[signal]
source = "white"

[frames]
length = 256

[vast]
filter_len = 64
rank = 0
mu = 1.0
gamma = 0.0
reference_loudspeaker = 2

[estimator]
c_min = 326.0
c_max = 360.0
step = 0.25
adaptive = true
c_width = 3.0
step_adapt = 0.1
c_thresh = 1.0
energy_floor = 1e-8
observation = "plant"
"#;

const FULL: &str = r#"
[room]
ir_len = 800

[geometry]
loudspeaker_count = 16
loudspeaker_spacing = 0.06
zone_mics = 37
bright_center = [1.55, 2.2, 1.2]
dark_center = [2.95, 2.2, 1.2]
observation_mic = [1.55, 1.9, 1.2]

[frames]
length = 4000

[vast]
filter_len = 500
reference_loudspeaker = 8
"#;

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::config(format!("{origin}: {e}")))
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        Self::from_overrides(preset, "").expect("built-in presets are valid")
    }

    /// Parses `text` as overrides on top of `preset`.
    pub fn from_overrides(preset: Preset, text: &str) -> Result<Self> {
        let mut table = parse_table(DESK, "desk preset")?;
        if preset == Preset::Full {
            merge(&mut table, parse_table(FULL, "full preset")?);
        }
        merge(&mut table, parse_table(text, "configuration")?);
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_overrides(preset, &text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        // Relative paths in the file resolve against its directory.
        if let Some(dir) = path.parent() {
            if cfg.output_dir.is_relative() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
            if cfg.signal.source != "white" && Path::new(&cfg.signal.source).is_relative() {
                cfg.signal.source = dir.join(&cfg.signal.source).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn speakers(&self) -> usize {
        self.geometry.build().loudspeakers.len()
    }

    pub fn modeling_delay(&self) -> usize {
        self.vast.modeling_delay.unwrap_or(self.vast.filter_len / 2)
    }

    pub fn vast_design(&self) -> VastDesign {
        let full = self.speakers() * self.vast.filter_len;
        VastDesign {
            filter_len: self.vast.filter_len,
            rank: if self.vast.rank == 0 { full } else { self.vast.rank },
            mu: self.vast.mu,
            gamma: self.vast.gamma,
            reference: self.vast.reference_loudspeaker.saturating_sub(1),
            modeling_delay: self.modeling_delay(),
        }
    }

    /// Silence floor as an absolute feed energy.
    pub fn energy_floor(&self) -> f64 {
        self.estimator.energy_floor * self.frames.length as f64
    }

    /// Every speed an IR bank is needed for: `c_old` plus the schedule.
    pub fn bank_speeds(&self) -> Vec<f64> {
        let mut speeds = vec![self.schedule.c_old];
        for c in self.schedule.schedule().speeds() {
            if !speeds.contains(&c) {
                speeds.push(c);
            }
        }
        speeds
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.room.validate().map_err(|e| Error::config(e.to_string()))?;
        let n = self.frames.length;
        let (k, j) = (self.room.ir_len, self.vast.filter_len);
        if n == 0 || j == 0 {
            return Err(Error::config("frame length and filter length must be positive"));
        }
        if k > n + 1 {
            return Err(Error::config(format!("IR length K={k} violates K-1 <= N={n}")));
        }
        if j > n + 1 {
            return Err(Error::config(format!("filter length J={j} violates J-1 <= N={n}")));
        }
        let d = self.modeling_delay();
        if d >= j {
            return Err(Error::config(format!("modeling delay {d} must be below J={j}")));
        }
        if k + d > n + 1 {
            return Err(Error::config(format!(
                "desired kernel length K+delay={} exceeds N+1={}",
                k + d,
                n + 1
            )));
        }
        let geometry = self.geometry.build();
        geometry
            .validate(&self.room)
            .map_err(|e| Error::config(e.to_string()))?;
        let l = geometry.loudspeakers.len();
        if self.vast.reference_loudspeaker == 0 || self.vast.reference_loudspeaker > l {
            return Err(Error::config(format!(
                "reference_loudspeaker {} outside 1..={l}",
                self.vast.reference_loudspeaker
            )));
        }
        if self.vast.rank > l * j {
            return Err(Error::config(format!("rank {} exceeds L*J={}", self.vast.rank, l * j)));
        }
        if !(self.vast.mu >= 0.0 && self.vast.gamma >= 0.0) {
            return Err(Error::config("mu and gamma must be non-negative"));
        }
        self.schedule
            .schedule()
            .validate()
            .map_err(|e| Error::config(e.to_string()))?;
        crate::sicer::check_speed(self.schedule.c_old).map_err(|e| Error::config(e.to_string()))?;
        self.estimator.grid.validate()?;
        if !(self.estimator.c_thresh >= 0.0) || !(self.estimator.energy_floor >= 0.0) {
            return Err(Error::config("c_thresh and energy_floor must be non-negative"));
        }
        Ok(())
    }
}
