//! Writes the speech-like test signal used by the acceptance suite:
//! voiced syllables (pulse train through three formant resonators),
//! short fricatives and pauses, 16 kHz PCM16 mono.
//!
//! cargo run --example make_speechlike -- tests/data/speechlike.wav

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 16000.0;

/// Two-pole resonator at `freq` Hz with bandwidth `bw` Hz.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64) -> Self {
        let r = (-PI * bw / FS).exp();
        let a1 = 2.0 * r * (2.0 * PI * freq / FS).cos();
        let a2 = -r * r;
        Self {
            a1,
            a2,
            gain: 1.0 - r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
];

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "speechlike.wav".into());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let total = (1.5 * FS) as usize;
    let mut out = Vec::with_capacity(total);
    let mut phase = 0.0;
    while out.len() < total {
        // Syllable: optional fricative onset, voiced nucleus, pause.
        if rng.random_bool(0.4) {
            let len = rng.random_range(400..1200);
            let mut hp_prev = 0.0;
            for i in 0..len {
                let n: f64 = rng.random_range(-1.0..1.0);
                let hp = n - hp_prev;
                hp_prev = n;
                let env = (PI * i as f64 / len as f64).sin();
                out.push(0.08 * env * hp);
            }
        }
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let mut formants: Vec<Resonator> = vowel.iter().map(|&f| Resonator::new(f, 80.0 + 0.05 * f)).collect();
        let len = rng.random_range(1800..4000);
        let f0_start = rng.random_range(100.0..180.0);
        let f0_end = f0_start * rng.random_range(0.8..1.2);
        for i in 0..len {
            let t = i as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * t;
            phase += f0 / FS;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            let src = pulse + 0.01 * rng.random_range(-1.0..1.0);
            let y: f64 = formants.iter_mut().map(|r| r.step(src)).sum();
            let env = (PI * t).sin().powf(0.6);
            out.push(2.0 * env * y);
        }
        let pause = rng.random_range(300..1400);
        out.extend(std::iter::repeat_n(0.0, pause));
    }
    out.truncate(total);
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: FS as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).expect("create wav");
    for v in out {
        w.write_sample((v / peak * 0.7 * 32767.0).round() as i16)
            .expect("write sample");
    }
    w.finalize().expect("finalize wav");
}
