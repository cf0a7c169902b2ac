//! Experiment runner: configuration, input signals, metrics and the
//! closed-loop simulation of every method arm.

pub mod config;
pub mod metrics;
pub mod runner;
pub mod signal;

pub use config::{ExperimentConfig, ObservationMode, Preset};
pub use metrics::{acoustic_contrast, nsdp, Db, MetricRow};
pub use runner::{
    design_filters, run_arm, run_arm_with_threshold, run_to_disk, simulate_irs, summarize_run, summary_csv,
    track_with_filters, Arm, ArmResult, MethodSummary, Scenario, TrackingRow,
};
pub use signal::{load_signal, SignalSource};
