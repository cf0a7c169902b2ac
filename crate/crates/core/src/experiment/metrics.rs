//! Acoustic contrast and normalized signal distortion power.

use std::fmt::Write;

/// A dB value that may be infinite or undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Db {
    Finite(f64),
    PosInf,
    NegInf,
    Undefined,
}

impl Db {
    fn from_ratio(num: f64, den: f64) -> Db {
        match (num == 0.0, den == 0.0) {
            (true, true) => Db::Undefined,
            (false, true) => Db::PosInf,
            (true, false) => Db::NegInf,
            (false, false) => Db::Finite(10.0 * (num / den).log10()),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Db::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// CSV value field; empty for non-finite results.
    pub fn field(&self) -> String {
        self.value().map(|v| format!("{v:.6}")).unwrap_or_default()
    }

    pub fn flag(&self) -> &'static str {
        match self {
            Db::Finite(_) => "ok",
            Db::PosInf => "pos_inf",
            Db::NegInf => "neg_inf",
            Db::Undefined => "undefined",
        }
    }
}

fn stacked_energy(frames: &[Vec<f64>]) -> f64 {
    frames.iter().flatten().map(|v| v * v).sum()
}

/// `10 log10(M_D/M_B * |p_B|^2 / |p_D|^2)` over stacked zone frames.
pub fn acoustic_contrast(bright: &[Vec<f64>], dark: &[Vec<f64>]) -> Db {
    let (mb, md) = (bright.len() as f64, dark.len() as f64);
    let eb = stacked_energy(bright);
    let ed = stacked_energy(dark);
    if eb == 0.0 && ed == 0.0 {
        return Db::Undefined;
    }
    Db::from_ratio(md * eb, mb * ed)
}

/// `10 log10(|d_B - p_B|^2 / |d_B|^2)`.
pub fn nsdp(desired: &[Vec<f64>], reproduced: &[Vec<f64>]) -> Db {
    let den = stacked_energy(desired);
    if den == 0.0 {
        return Db::Undefined;
    }
    let num: f64 = desired
        .iter()
        .flatten()
        .zip(reproduced.iter().flatten())
        .map(|(d, p)| (d - p) * (d - p))
        .sum();
    Db::from_ratio(num, den)
}

/// One row of the per-frame metrics trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub frame: usize,
    pub ac: Db,
    pub nsdp: Db,
}

pub const METRICS_HEADER: &str = "frame,method,AC_dB,nSDP_dB,AC_flag,nSDP_flag";

pub fn metrics_csv(method: &str, rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{method},{},{},{},{}",
            r.frame,
            r.ac.field(),
            r.nsdp.field(),
            r.ac.flag(),
            r.nsdp.flag()
        );
    }
    out
}

/// Parsed metrics file row: (frame, method, AC, nSDP).
pub type ParsedMetric = (usize, String, Option<f64>, Option<f64>);

pub fn parse_metrics_csv(text: &str) -> Result<Vec<ParsedMetric>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.starts_with("frame,method,AC_dB,nSDP_dB") => {}
        _ => return Err("missing metrics header".into()),
    }
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 4 {
                return Err(format!("line {}: expected at least 4 fields", i + 2));
            }
            let num = |s: &str| -> Result<Option<f64>, String> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|e| format!("line {}: {e}", i + 2))
                }
            };
            let frame = f[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?;
            Ok((frame, f[1].to_string(), num(f[2])?, num(f[3])?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contrast_examples() {
        let b = vec![vec![10f64.sqrt(), 0.0]];
        let d = vec![vec![1.0, 0.0]];
        assert!((acoustic_contrast(&b, &d).value().unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(acoustic_contrast(&b, &b).value().unwrap(), 0.0);
        assert_eq!(acoustic_contrast(&b, &[vec![0.0, 0.0]]), Db::PosInf);
    }

    #[test]
    fn contrast_matches_hand_formula_for_37_mics() {
        let bright: Vec<Vec<f64>> = (0..37).map(|m| vec![0.1 * m as f64, 1.0]).collect();
        let dark: Vec<Vec<f64>> = (0..37).map(|m| vec![0.01 * m as f64, 0.5]).collect();
        let eb: f64 = (0..37).map(|m| (0.1 * m as f64).powi(2) + 1.0).sum();
        let ed: f64 = (0..37).map(|m| (0.01 * m as f64).powi(2) + 0.25).sum();
        let want = 10.0 * (37.0 / 37.0 * eb / ed).log10();
        assert!((acoustic_contrast(&bright, &dark).value().unwrap() - want).abs() < 1e-12);
        // Unequal mic counts scale by M_D / M_B.
        let ac = acoustic_contrast(&[vec![1.0], vec![1.0]], &[vec![1.0]]);
        assert!((ac.value().unwrap() - 10.0 * (1.0f64 * 2.0 / (2.0 * 1.0)).log10()).abs() < 1e-12);
    }

    #[test]
    fn nsdp_examples() {
        let d = vec![vec![1.0, -2.0], vec![0.5, 0.0]];
        assert_eq!(nsdp(&d, &[vec![0.0; 2], vec![0.0; 2]]).value(), Some(0.0));
        assert_eq!(nsdp(&d, &d), Db::NegInf);
        let twice: Vec<Vec<f64>> = d.iter().map(|v| v.iter().map(|x| 2.0 * x).collect()).collect();
        assert_eq!(nsdp(&d, &twice).value(), Some(0.0));
        assert_eq!(nsdp(&[vec![0.0]], &[vec![1.0]]), Db::Undefined);
    }

    #[test]
    fn sentinels_serialize_as_empty_fields() {
        let rows = vec![
            MetricRow {
                frame: 1,
                ac: Db::Finite(12.5),
                nsdp: Db::NegInf,
            },
            MetricRow {
                frame: 2,
                ac: Db::PosInf,
                nsdp: Db::Undefined,
            },
        ];
        let csv = metrics_csv("gt", &rows);
        assert_eq!(
            csv,
            "frame,method,AC_dB,nSDP_dB,AC_flag,nSDP_flag\n1,gt,12.500000,,ok,neg_inf\n2,gt,,,pos_inf,undefined\n"
        );
        assert!(csv
            .split([',', '\n'])
            .all(|f| !f.contains("inf") || f.ends_with("_inf")));
        let parsed = parse_metrics_csv(&csv).unwrap();
        assert_eq!(parsed[0], (1, "gt".to_string(), Some(12.5), None));
        assert_eq!(parsed[1].2, None);
    }
}
