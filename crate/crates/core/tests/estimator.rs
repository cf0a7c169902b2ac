use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speedtrack::estimator::{grid_search, select_minimum, GridConfig, ObservationModel, SpeedEstimator};
use speedtrack::frames::{buff, convolve_direct, propagate, PlantStates};
use speedtrack::sicer::{output_len, resample_taps};
use speedtrack::IrBank;

const N: usize = 64;

fn grid(adaptive: bool) -> GridConfig {
    GridConfig {
        c_min: 326.0,
        c_max: 360.0,
        step: 0.25,
        adaptive,
        c_width: 3.0,
        step_adapt: 0.1,
    }
}

fn random_irs(rng: &mut ChaCha8Rng, speakers: usize, taps: usize) -> Vec<Vec<f64>> {
    (0..speakers)
        .map(|_| {
            // Decaying random IR with a clear onset.
            let onset = rng.random_range(2..taps / 2);
            (0..taps)
                .map(|t| {
                    if t < onset {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0) * (-(t as f64 - onset as f64) / 12.0).exp()
                    }
                })
                .collect()
        })
        .collect()
}

fn random_frames(rng: &mut ChaCha8Rng, speakers: usize) -> Vec<Vec<f64>> {
    (0..speakers)
        .map(|_| (0..N).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Samples N..2N-1 of `h * [prev, cur]`, i.e. the head of `h * cur` plus
/// the buffered tail of `h * prev`, by direct convolution.
fn direct_prediction(irs: &[Vec<f64>], c: f64, prev: &[Vec<f64>], cur: &[Vec<f64>]) -> Vec<f64> {
    let alpha = c / 343.0;
    let mut out = vec![0.0; N];
    for ((h, p), y) in irs.iter().zip(prev).zip(cur) {
        let h = resample_taps(h, alpha, output_len(h.len(), alpha, N));
        let head = convolve_direct(&h, y);
        let tail = buff(&convolve_direct(&h, p)[N..], h.len() - 1, N).unwrap();
        for (i, o) in out.iter_mut().enumerate() {
            *o += head[i] + tail[i];
        }
    }
    out
}

fn setup(seed: u64) -> (Vec<Vec<f64>>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speakers = rng.random_range(1..=3);
    let taps = rng.random_range(16..=48);
    (random_irs(&mut rng, speakers, taps), rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prediction_matches_direct_convolution(seed in any::<u64>(), c in 330.0f64..356.0) {
        // Candidate speeds live on a 1e-6 m/s lattice.
        let c = (c * 1e6).round() / 1e6;
        let (irs, mut rng) = setup(seed);
        let (prev, cur) = (random_frames(&mut rng, irs.len()), random_frames(&mut rng, irs.len()));
        let mut model = ObservationModel::from_irs(irs.clone(), 343.0, N).unwrap();
        let spectra = model.prepare(&cur, &prev).unwrap();
        let fast = model.predict_frame(c, &spectra).unwrap();
        let slow = direct_prediction(&irs, c, &prev, &cur);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn on_model_frames_are_recovered_exactly(seed in any::<u64>(), step in 0usize..=136, adaptive in any::<bool>()) {
        let (irs, mut rng) = setup(seed);
        let truth = 326.0 + 0.25 * step as f64;
        let (prev, cur) = (random_frames(&mut rng, irs.len()), random_frames(&mut rng, irs.len()));
        let measured = direct_prediction(&irs, truth, &prev, &cur);
        let mut model = ObservationModel::from_irs(irs, 343.0, N).unwrap();
        let spectra = model.prepare(&cur, &prev).unwrap();
        let energy: f64 = measured.iter().map(|v| v * v).sum();
        let at_truth = model.frame_cost(truth, &measured, &spectra).unwrap();
        prop_assert!(at_truth <= 1e-18 * energy.max(1e-300) + 1e-24);
        let r = grid_search(&mut model, &grid(adaptive), None, &measured, &spectra).unwrap();
        prop_assert_eq!(r.estimate, truth);
        // An adaptive window around a nearby previous estimate also finds it.
        let prev_est = ((truth + rng.random_range(-2.9..2.9)) * 10.0).round() / 10.0;
        let prev_est = prev_est.clamp(326.0, 360.0);
        let g = grid(true);
        let (lo, hi, _) = g.window(Some(prev_est));
        let on_adaptive_grid = ((truth - lo) / 0.1 - ((truth - lo) / 0.1).round()).abs() < 1e-6;
        if truth >= lo && truth <= hi && on_adaptive_grid {
            let r = grid_search(&mut model, &g, Some(prev_est), &measured, &spectra).unwrap();
            prop_assert_eq!(r.estimate, truth);
        }
    }

    #[test]
    fn adaptive_estimates_stay_in_window(seed in any::<u64>(), prev in 326.0f64..360.0) {
        let (irs, mut rng) = setup(seed);
        let (p, cur) = (random_frames(&mut rng, irs.len()), random_frames(&mut rng, irs.len()));
        let measured: Vec<f64> = (0..N).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut model = ObservationModel::from_irs(irs, 343.0, N).unwrap();
        let spectra = model.prepare(&cur, &p).unwrap();
        let r = grid_search(&mut model, &grid(true), Some(prev), &measured, &spectra).unwrap();
        prop_assert!(r.estimate >= (prev - 3.0).max(326.0) - 1e-6);
        prop_assert!(r.estimate <= (prev + 3.0).min(360.0) + 1e-6);
    }

    #[test]
    fn estimates_do_not_depend_on_evaluation_order(seed in any::<u64>()) {
        let (irs, mut rng) = setup(seed);
        let frames: Vec<Vec<Vec<f64>>> = (0..4).map(|_| random_frames(&mut rng, irs.len())).collect();
        let truths = [333.0, 333.5, 334.0, 334.0];
        let run = || {
            let model = ObservationModel::from_irs(irs.clone(), 343.0, N).unwrap();
            let mut est = SpeedEstimator::new(model, grid(true), 1e-12).unwrap();
            let mut out = Vec::new();
            for t in 1..frames.len() {
                let measured = direct_prediction(&irs, truths[t], &frames[t - 1], &frames[t]);
                let spectra = est.model().prepare(&frames[t], &frames[t - 1]).unwrap();
                out.push(est.estimate(&measured, &spectra).unwrap());
            }
            out
        };
        let a = run();
        prop_assert_eq!(&a, &run());
        // Sequential reference: one candidate at a time, same selection rule.
        let mut model = ObservationModel::from_irs(irs.clone(), 343.0, N).unwrap();
        let measured = direct_prediction(&irs, truths[1], &frames[0], &frames[1]);
        let spectra = model.prepare(&frames[1], &frames[0]).unwrap();
        let cands = grid(true).candidates(None);
        let costs: Vec<f64> = cands.iter().map(|&c| model.frame_cost(c, &measured, &spectra).unwrap()).collect();
        let (idx, _) = select_minimum(&cands, &costs, 343.0).unwrap();
        prop_assert_eq!(cands[idx], a[0].estimate);
    }
}

#[test]
fn silent_frames_hold_the_previous_estimate() {
    let (irs, mut rng) = setup(3);
    let model = ObservationModel::from_irs(irs.clone(), 343.0, N).unwrap();
    let mut est = SpeedEstimator::new(model, grid(true), 1e-6).unwrap();
    let silent = vec![vec![0.0; N]; irs.len()];
    let noise: Vec<f64> = (0..N).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spectra = est.model().prepare(&silent, &silent).unwrap();
    // A silent first frame reports c_old and anchors the next window there.
    let first = est.estimate(&noise, &spectra).unwrap();
    assert_eq!((first.estimate, first.cost, first.low_energy), (343.0, None, true));

    let frames = [random_frames(&mut rng, irs.len()), random_frames(&mut rng, irs.len())];
    let measured = direct_prediction(&irs, 341.2, &frames[0], &frames[1]);
    let spectra = est.model().prepare(&frames[1], &frames[0]).unwrap();
    assert_eq!(est.estimate(&measured, &spectra).unwrap().estimate, 341.2);
    let spectra = est.model().prepare(&silent, &frames[1]).unwrap();
    let held = est.estimate(&noise, &spectra).unwrap();
    assert_eq!((held.estimate, held.low_energy), (341.2, true));
}

#[test]
fn unit_ratio_prediction_matches_plant_propagation() {
    let (irs, mut rng) = setup(11);
    let (l, k) = (irs.len(), irs[0].len());
    let bank = IrBank::from_raw(1, l, k, 16000, 343.0, irs.concat()).unwrap();
    let mut model = ObservationModel::new(&bank, 0, N).unwrap();
    let mut states = PlantStates::new(1, l, N, k).unwrap();
    let mut prev = vec![vec![0.0; N]; l];
    for _ in 0..4 {
        let cur = random_frames(&mut rng, l);
        let spectra = model.prepare(&cur, &prev).unwrap();
        let predicted = model.predict_frame(343.0, &spectra).unwrap();
        let plant = propagate(&bank, &cur, &mut states).unwrap().remove(0);
        for (a, b) in predicted.iter().zip(&plant) {
            assert!((a - b).abs() <= 1e-10);
        }
        prev = cur;
    }
}
