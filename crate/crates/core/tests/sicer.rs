use proptest::prelude::*;
use speedtrack::sicer::{resample_ir, resample_taps, sinc, SpeedRatio};
use speedtrack::ImpulseResponse;

fn ir(taps: Vec<f64>, c: f64) -> ImpulseResponse {
    ImpulseResponse::new(taps, 16000, c).unwrap()
}

/// Random taps smoothed by a 31-tap Hann-windowed low-pass at 0.4 of Nyquist.
fn lowpassed(noise: &[f64]) -> Vec<f64> {
    let half = 15i64;
    let kernel: Vec<f64> = (-half..=half)
        .map(|t| {
            let w = 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / (half + 1) as f64).cos());
            0.4 * sinc(0.4 * t as f64) * w
        })
        .collect();
    let mut out = vec![0.0; noise.len()];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, k) in kernel.iter().enumerate() {
            let src = i as i64 + j as i64 - half;
            if src >= 0 && (src as usize) < noise.len() {
                *o += k * noise[src as usize];
            }
        }
    }
    // Fade the ends so the support is finite on both sides.
    let len = out.len();
    for (i, o) in out.iter_mut().enumerate() {
        let edge = i.min(len - 1 - i) as f64;
        *o *= (edge / 16.0).min(1.0);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_ratio_is_identity(taps in prop::collection::vec(-1.0f64..1.0, 1..600)) {
        let k = taps.len();
        let out = resample_ir(&ir(taps.clone(), 343.0), SpeedRatio::new(343.0, 343.0).unwrap(), k + 10).unwrap();
        prop_assert_eq!(out.len(), k);
        for (a, b) in out.taps.iter().zip(&taps) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn delayed_impulse_moves_to_scaled_delay(d in 0usize..400, c_new in 322.42f64..363.58) {
        let mut taps = vec![0.0; 420];
        taps[d] = 1.0;
        let ratio = SpeedRatio::new(c_new, 343.0).unwrap();
        let out = resample_ir(&ir(taps, 343.0), ratio, 1000).unwrap();
        let peak = out.taps.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
        let expected = (d as f64 / ratio.alpha()).round() as i64;
        prop_assert!((peak as i64 - expected).abs() <= 1, "peak {peak}, expected {expected}");
    }

    #[test]
    fn impulse_at_zero_keeps_alpha(alpha in 0.9f64..1.1) {
        let out = resample_taps(&[1.0, 0.0, 0.0], alpha, 5);
        prop_assert_eq!(out[0], alpha);
    }

    #[test]
    fn round_trip_of_band_limited_ir(noise in prop::collection::vec(-1.0f64..1.0, 200), alpha in 0.94f64..1.06) {
        let h = lowpassed(&noise);
        let there = resample_taps(&h, alpha, (h.len() as f64 / alpha).ceil() as usize + 8);
        let back = resample_taps(&there, 1.0 / alpha, h.len());
        let err: f64 = back.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = h.iter().map(|v| v * v).sum();
        prop_assert!((err / norm).sqrt() <= 0.05, "relative error {}", (err / norm).sqrt());
    }
}
