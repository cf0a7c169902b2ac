//! Boundary-exact frame-based multichannel convolution.
//!
//! Every (kernel, signal) pair owns a one-frame tail buffer. A frame's
//! output is the head of the full convolution of the current input frame
//! plus the tail left over from the previous frame, so concatenated frame
//! outputs equal the direct convolution of the whole signal.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::ir::IrBank;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Products of operand lengths below this use the direct O(MN) loop.
const FFT_MIN_WORK: usize = 1 << 15;

/// One frame of a sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub samples: Vec<f64>,
    /// 1-based frame index within the stream.
    pub index: u64,
    pub sample_rate: u32,
}

impl SignalFrame {
    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }
}

pub fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Full linear convolution (length `a.len() + b.len() - 1`).
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if a.len().min(b.len()) > 32 && a.len() * b.len() >= FFT_MIN_WORK {
        convolve_fft(a, b)
    } else {
        convolve_direct(a, b)
    }
}

pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (o, &bj) in out[i..].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
    out
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let size = fft_size(out_len);
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(size), p.plan_fft_inverse(size))
    });
    // Pack both real inputs into one complex transform.
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|i| Complex::new(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect();
    fwd.process(&mut buf);
    let mut prod = vec![Complex::new(0.0, 0.0); size];
    for k in 0..size {
        let z = buf[k];
        let zc = buf[(size - k) % size].conj();
        let fa = (z + zc) * 0.5;
        let fb = (z - zc) * Complex::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / size as f64;
    prod[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Smallest length >= `n` whose prime factors are 2, 3 and 5.
pub(crate) fn fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Extracts the last `tail_len` samples of `v` and zero-pads them to `out_len`.
pub fn buff(v: &[f64], tail_len: usize, out_len: usize) -> Result<Vec<f64>> {
    if tail_len > out_len {
        return Err(Error::config(format!(
            "tail length K-1={tail_len} exceeds frame length N={out_len}"
        )));
    }
    if v.len() < tail_len {
        return Err(Error::config(format!(
            "input length M={} shorter than tail length K-1={tail_len}",
            v.len()
        )));
    }
    let mut out = vec![0.0; out_len];
    out[..tail_len].copy_from_slice(&v[v.len() - tail_len..]);
    Ok(out)
}

/// Tail buffer of one streaming convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionState {
    tail: Vec<f64>,
    kernel_len: usize,
}

impl ConvolutionState {
    pub fn new(frame_len: usize, kernel_len: usize) -> Result<Self> {
        check_kernel(kernel_len, frame_len)?;
        Ok(Self {
            tail: vec![0.0; frame_len],
            kernel_len,
        })
    }

    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len
    }

    pub fn frame_len(&self) -> usize {
        self.tail.len()
    }

    pub fn reset(&mut self) {
        self.tail.iter_mut().for_each(|t| *t = 0.0);
    }
}

fn check_kernel(kernel_len: usize, frame_len: usize) -> Result<()> {
    if kernel_len == 0 {
        return Err(Error::config("kernel must have at least one tap"));
    }
    if kernel_len > frame_len + 1 {
        return Err(Error::config(format!(
            "kernel length {kernel_len} exceeds N+1={} (tail must fit in one frame buffer)",
            frame_len + 1
        )));
    }
    Ok(())
}

/// Convolves one frame with `kernel`, consuming and refreshing the tail.
pub fn frame_convolve(kernel: &[f64], frame: &[f64], state: &mut ConvolutionState) -> Result<Vec<f64>> {
    let n = state.frame_len();
    if frame.len() != n {
        return Err(Error::config(format!(
            "frame has {} samples, stream uses N={n}",
            frame.len()
        )));
    }
    check_kernel(kernel.len(), n)?;
    if kernel.len() != state.kernel_len {
        return Err(Error::config(format!(
            "kernel has {} taps but state was built for {}",
            kernel.len(),
            state.kernel_len
        )));
    }
    Ok(convolve_into_frame(kernel, frame, state))
}

fn convolve_into_frame(kernel: &[f64], frame: &[f64], state: &mut ConvolutionState) -> Vec<f64> {
    let n = frame.len();
    let full = convolve(kernel, frame);
    let mut out = full[..n].to_vec();
    for (o, t) in out.iter_mut().zip(&state.tail) {
        *o += t;
    }
    let tail_len = kernel.len() - 1;
    state.tail.iter_mut().for_each(|t| *t = 0.0);
    state.tail[..tail_len].copy_from_slice(&full[full.len() - tail_len..]);
    out
}

/// Loudspeaker control filters, one FIR of length J per loudspeaker.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn new(filters: Vec<Vec<f64>>) -> Result<Self> {
        let j = filters.first().map_or(0, Vec::len);
        if j == 0 {
            return Err(Error::config("filter bank needs at least one non-empty filter"));
        }
        if filters.iter().any(|f| f.len() != j) {
            return Err(Error::config("all control filters must share one length J"));
        }
        if filters.iter().flatten().any(|q| !q.is_finite()) {
            return Err(Error::domain("control filter taps must be finite"));
        }
        Ok(Self { filters })
    }

    /// Every filter zero except a unit impulse on loudspeaker `active`.
    pub fn unit_impulse(speakers: usize, len: usize, active: usize) -> Result<Self> {
        if active >= speakers {
            return Err(Error::config(format!(
                "active loudspeaker {active} out of range (L={speakers})"
            )));
        }
        let mut filters = vec![vec![0.0; len]; speakers];
        filters[active][0] = 1.0;
        Self::new(filters)
    }

    pub fn speakers(&self) -> usize {
        self.filters.len()
    }

    pub fn len(&self) -> usize {
        self.filters[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn filter(&self, l: usize) -> &[f64] {
        &self.filters[l]
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    /// Stacked `[q_1; ...; q_L]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.filters.concat()
    }
}

/// Per-loudspeaker tail buffers for feed synthesis `y_l = q_l * x`.
#[derive(Debug, Clone)]
pub struct FeedStates {
    states: Vec<ConvolutionState>,
}

impl FeedStates {
    pub fn new(speakers: usize, frame_len: usize, filter_len: usize) -> Result<Self> {
        let state = ConvolutionState::new(frame_len, filter_len)?;
        Ok(Self {
            states: vec![state; speakers],
        })
    }

    pub fn states(&self) -> &[ConvolutionState] {
        &self.states
    }
}

/// Computes every loudspeaker feed for one input frame.
///
/// Replacing `filters` between calls keeps the tails produced by the
/// previous filters; they are added to the next frame unchanged.
pub fn render_feeds(filters: &FilterBank, input: &[f64], states: &mut FeedStates) -> Result<Vec<Vec<f64>>> {
    if filters.speakers() != states.states.len() {
        return Err(Error::config(format!(
            "filter bank has {} loudspeakers, feed states {}",
            filters.speakers(),
            states.states.len()
        )));
    }
    filters
        .filters
        .iter()
        .zip(states.states.iter_mut())
        .map(|(q, st)| frame_convolve(q, input, st))
        .collect()
}

/// Tail buffers for every (microphone, loudspeaker) propagation path.
#[derive(Debug, Clone)]
pub struct PlantStates {
    speakers: usize,
    states: Vec<ConvolutionState>,
}

impl PlantStates {
    pub fn new(mics: usize, speakers: usize, frame_len: usize, ir_len: usize) -> Result<Self> {
        let state = ConvolutionState::new(frame_len, ir_len)?;
        Ok(Self {
            speakers,
            states: vec![state; mics * speakers],
        })
    }

    pub fn for_bank(bank: &IrBank, frame_len: usize) -> Result<Self> {
        Self::new(bank.mics(), bank.speakers(), frame_len, bank.taps())
    }

    pub fn state(&self, m: usize, l: usize) -> &ConvolutionState {
        &self.states[m * self.speakers + l]
    }

    pub fn mics(&self) -> usize {
        self.states.len() / self.speakers
    }
}

/// Microphone frames `p_m = sum_l h_{m,l} * y_l`, evaluated with the bank's
/// IRs and one tail buffer per path.
///
/// The bank may change between frames (a moving plant); as for filters,
/// the tails from the previous IRs are consumed by the next frame.
pub fn propagate(bank: &IrBank, feeds: &[Vec<f64>], states: &mut PlantStates) -> Result<Vec<Vec<f64>>> {
    let (mics, speakers) = (bank.mics(), bank.speakers());
    if feeds.len() != speakers {
        return Err(Error::config(format!(
            "{} feeds for a bank with L={speakers}",
            feeds.len()
        )));
    }
    if states.speakers != speakers || states.mics() != mics {
        return Err(Error::config("plant states do not match the IR bank dimensions"));
    }
    let n = states.states[0].frame_len();
    if feeds.iter().any(|y| y.len() != n) {
        return Err(Error::config(format!("every feed must have N={n} samples")));
    }
    check_kernel(bank.taps(), n)?;
    if states.states[0].kernel_len != bank.taps() {
        return Err(Error::config(format!(
            "bank IR length {} differs from plant state length {}",
            bank.taps(),
            states.states[0].kernel_len
        )));
    }

    let mic_frame = |(m, row): (usize, &mut [ConvolutionState])| -> Vec<f64> {
        let mut acc = vec![0.0; n];
        for (l, st) in row.iter_mut().enumerate() {
            let part = convolve_into_frame(bank.ir(m, l), &feeds[l], st);
            for (a, p) in acc.iter_mut().zip(&part) {
                *a += p;
            }
        }
        acc
    };

    #[cfg(feature = "parallel")]
    let out = states
        .states
        .par_chunks_mut(speakers)
        .enumerate()
        .map(mic_frame)
        .collect();
    #[cfg(not(feature = "parallel"))]
    let out = states.states.chunks_mut(speakers).enumerate().map(mic_frame).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn buff_examples() {
        assert_eq!(
            buff(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, 4).unwrap(),
            vec![4.0, 5.0, 0.0, 0.0]
        );
        assert_eq!(buff(&[7.0], 1, 3).unwrap(), vec![7.0, 0.0, 0.0]);
        let v = convolve_direct(&[1.0, 1.0], &[1.0, 2.0]);
        assert_eq!(v, vec![1.0, 3.0, 2.0]);
        assert_eq!(buff(&v, 1, 2).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn buff_rejects_bad_lengths() {
        let e = buff(&[1.0], 2, 4).unwrap_err();
        assert!(e.to_string().contains("M=1"), "{e}");
        let e = buff(&[1.0, 2.0, 3.0], 3, 2).unwrap_err();
        assert!(e.to_string().contains("N=2"), "{e}");
    }

    #[test]
    fn two_frame_example() {
        let mut st = ConvolutionState::new(2, 2).unwrap();
        let a = frame_convolve(&[1.0, 1.0], &[1.0, 2.0], &mut st).unwrap();
        let b = frame_convolve(&[1.0, 1.0], &[3.0, 4.0], &mut st).unwrap();
        assert_eq!(a, vec![1.0, 3.0]);
        assert_eq!(b, vec![5.0, 7.0]);
        assert_eq!(st.tail(), &[4.0, 0.0]);
    }

    #[test]
    fn identity_and_null_kernels() {
        let x = vec![0.5, -1.0, 2.0, 3.5];
        let mut st = ConvolutionState::new(4, 1).unwrap();
        assert_eq!(frame_convolve(&[1.0], &x, &mut st).unwrap(), x);
        assert!(st.tail().iter().all(|&t| t == 0.0));

        let mut st = ConvolutionState::new(4, 3).unwrap();
        assert_eq!(frame_convolve(&[0.0; 3], &x, &mut st).unwrap(), vec![0.0; 4]);
        assert!(st.tail().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn kernel_longer_than_buffer_is_rejected() {
        assert!(matches!(ConvolutionState::new(4, 6), Err(Error::Config(_))));
        let mut st = ConvolutionState::new(4, 5).unwrap();
        assert!(frame_convolve(&[1.0; 5], &[0.0; 4], &mut st).is_ok());
        assert!(frame_convolve(&[1.0; 4], &[0.0; 4], &mut st).is_err());
    }

    #[test]
    fn fft_and_direct_agree() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) / 17.0).collect();
        let b: Vec<f64> = (0..211).map(|i| ((i * 13 % 59) as f64 - 29.0) / 7.0).collect();
        let d = convolve_direct(&a, &b);
        let f = convolve_fft(&a, &b);
        assert_eq!(d.len(), f.len());
        for (x, y) in d.iter().zip(&f) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn fft_sizes_are_smooth() {
        assert_eq!(fft_size(1), 1);
        assert_eq!(fft_size(7), 8);
        assert_eq!(fft_size(4799), 4800);
        assert_eq!(fft_size(1025), 1080);
    }

    #[test]
    fn render_feeds_examples() {
        let x = vec![1.0, 0.0, 0.0, 0.0];
        let bank = FilterBank::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut st = FeedStates::new(2, 4, 2).unwrap();
        let y = render_feeds(&bank, &x, &mut st).unwrap();
        assert_eq!(y[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(y[1], vec![0.0, 1.0, 0.0, 0.0]);

        let zero = FilterBank::new(vec![vec![0.0; 3]; 3]).unwrap();
        let mut st = FeedStates::new(3, 4, 3).unwrap();
        let y = render_feeds(&zero, &[0.3, -2.0, 1.0, 4.0], &mut st).unwrap();
        assert!(y.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_impulse_on_reference_passes_input() {
        let bank = FilterBank::unit_impulse(16, 7, 7).unwrap();
        let mut st = FeedStates::new(16, 6, 7).unwrap();
        let x = vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let y = render_feeds(&bank, &x, &mut st).unwrap();
        for (l, yl) in y.iter().enumerate() {
            if l == 7 {
                assert_eq!(yl, &x);
            } else {
                assert!(yl.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn stale_tail_survives_filter_swap() {
        let old = FilterBank::new(vec![vec![0.0, 1.0]]).unwrap();
        let new = FilterBank::new(vec![vec![2.0, 0.0]]).unwrap();
        let mut st = FeedStates::new(1, 2, 2).unwrap();
        let a = render_feeds(&old, &[1.0, 3.0], &mut st).unwrap();
        assert_eq!(a[0], vec![0.0, 1.0]);
        // Old filter leaves 3.0 in the tail; the new filter's output is added to it.
        let b = render_feeds(&new, &[1.0, 1.0], &mut st).unwrap();
        assert_eq!(b[0], vec![5.0, 2.0]);
    }

    #[test]
    fn propagate_cancellation_and_identity() {
        let h = vec![0.5, -0.25, 0.125];
        let neg: Vec<f64> = h.iter().map(|v| -v).collect();
        let bank = IrBank::from_raw(1, 2, 3, 16000, 343.0, [h.clone(), neg].concat()).unwrap();
        let mut st = PlantStates::for_bank(&bank, 4).unwrap();
        let y = vec![1.0, 2.0, -1.0, 0.5];
        for _ in 0..3 {
            let p = propagate(&bank, &[y.clone(), y.clone()], &mut st).unwrap();
            assert!(p[0].iter().all(|&v| v == 0.0));
        }

        let bank = IrBank::from_raw(1, 1, 1, 16000, 343.0, vec![1.0]).unwrap();
        let mut st = PlantStates::for_bank(&bank, 4).unwrap();
        let p = propagate(&bank, std::slice::from_ref(&y), &mut st).unwrap();
        assert_eq!(p[0], y);
    }

    #[test]
    fn propagate_rejects_mismatched_feeds() {
        let bank = IrBank::from_raw(1, 2, 3, 16000, 343.0, vec![0.0; 6]).unwrap();
        let mut st = PlantStates::for_bank(&bank, 4).unwrap();
        assert!(propagate(&bank, &[vec![0.0; 4]], &mut st).is_err());
        assert!(propagate(&bank, &[vec![0.0; 4], vec![0.0; 3]], &mut st).is_err());
    }
}
