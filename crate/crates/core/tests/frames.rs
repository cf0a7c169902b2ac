use proptest::prelude::*;
use speedtrack::frames::{convolve_direct, frame_convolve, ConvolutionState};

fn framed(kernel: &[f64], signal: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut state = ConvolutionState::new(n, kernel.len()).unwrap();
    let mut out = Vec::new();
    let mut tails = Vec::new();
    for frame in signal.chunks(n) {
        out.extend(frame_convolve(kernel, frame, &mut state).unwrap());
        tails.push(state.tail().to_vec());
    }
    (out, tails)
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (1usize..=96, 1usize..=5).prop_flat_map(|(n, frames)| {
        (
            prop::collection::vec(-1.0f64..1.0, 1..=n + 1),
            prop::collection::vec(-1.0f64..1.0, n * frames),
            Just(n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stream_equivalence((kernel, signal, n) in instance()) {
        let (out, _) = framed(&kernel, &signal, n);
        let direct = convolve_direct(&kernel, &signal);
        for (a, b) in out.iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn linearity((kernel, x, n) in instance(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = x.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let mixed: Vec<f64> = x.iter().zip(&z).map(|(x, z)| a * x + b * z).collect();
        let (yx, _) = framed(&kernel, &x, n);
        let (yz, _) = framed(&kernel, &z, n);
        let (ym, _) = framed(&kernel, &mixed, n);
        for ((m, p), q) in ym.iter().zip(&yx).zip(&yz) {
            prop_assert!((m - (a * p + b * q)).abs() <= 1e-12 * (1.0 + m.abs()) * kernel.len() as f64);
        }
    }

    #[test]
    fn tail_sparsity((kernel, signal, n) in instance()) {
        let (_, tails) = framed(&kernel, &signal, n);
        for tail in tails {
            prop_assert_eq!(tail.len(), n);
            prop_assert!(tail[kernel.len() - 1..].iter().all(|&v| v == 0.0));
        }
    }
}
