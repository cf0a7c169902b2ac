use std::path::Path;
use std::process::{Command, Output};

fn speedtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speedtrack"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.toml");
    let out = dir.join("out");
    std::fs::write(
        &path,
        format!(
            "output_dir = {:?}\n[schedule]\nframes = 12\n{extra}",
            out.display().to_string()
        ),
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn full_pipeline_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");

    let sim = speedtrack(&["simulate-irs", &cfg]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let bank = dir.path().join("out/irs/bank_c343.000.sirb");
    assert_eq!(&std::fs::read(&bank).unwrap()[..4], b"SIRB");

    let design = speedtrack(&["design-filters", &cfg]);
    assert!(design.status.success(), "{}", String::from_utf8_lossy(&design.stderr));
    let filt = dir.path().join("out/filters/vast_c343.000.vflt");
    assert_eq!(&std::fs::read(&filt).unwrap()[..4], b"VFLT");

    let run = speedtrack(&["run", &cfg, "--arm", "proposed", "--arm", "nc"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let run_dir = String::from_utf8(run.stdout).unwrap().trim().to_string();
    let tracking = std::fs::read_to_string(Path::new(&run_dir).join("tracking_proposed.csv")).unwrap();
    assert_eq!(
        tracking.lines().next().unwrap(),
        "frame,true_c,estimate_c,cost_min,filter_updated,low_energy_flag"
    );
    assert_eq!(tracking.lines().count(), 13);
    let metrics = std::fs::read_to_string(Path::new(&run_dir).join("metrics_nc.csv")).unwrap();
    assert_eq!(
        metrics.lines().next().unwrap(),
        "frame,method,AC_dB,nSDP_dB,AC_flag,nSDP_flag"
    );

    let summary = speedtrack(&["metrics", &run_dir]);
    assert!(summary.status.success());
    let text = String::from_utf8(summary.stdout).unwrap();
    assert!(text.starts_with("method,frames,mean_AC_dB,mean_nSDP_dB,nonfinite_frames,rmse_c,filter_updates\n"));
    assert_eq!(text.lines().count(), 3);
    assert!(Path::new(&run_dir).join("summary.csv").is_file());
}

#[test]
fn missing_banks_are_reported_as_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = speedtrack(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate-irs"));
}

#[test]
fn invalid_configurations_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[frames]\nlength = 32\n");
    let out = speedtrack(&["simulate-irs", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = write_config(dir.path(), "[room]\nwalls = 6\n");
    assert_eq!(speedtrack(&["simulate-irs", &cfg]).status.code(), Some(2));

    assert_eq!(speedtrack(&["run", &cfg, "--arm", "bogus"]).status.code(), Some(2));
}

#[test]
fn unreadable_inputs_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml").display().to_string();
    assert_eq!(speedtrack(&["simulate-irs", &missing]).status.code(), Some(3));
    let empty_run = dir.path().display().to_string();
    assert_eq!(speedtrack(&["metrics", &empty_run]).status.code(), Some(3));
}
