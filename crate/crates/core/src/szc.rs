//! Variable-span trade-off (VAST) sound zone filter design.
//!
//! With stacked filters `q = [q_1; ...; q_L]` of length `LJ`, the reproduced
//! bright/dark zone signals are `H_B q` and `H_D q`, where every block
//! `H_{m,l}` is the `(K+J-1) x J` convolution matrix of `h_{m,l}`. Filters
//! minimize
//!
//! ```text
//! xi(q) = q' R_B q + mu q' R_D q - 2 q' r_B + |d_B|^2
//! R_B = H_B' H_B,  R_D = H_D' H_D,  r_B = H_B' d_B
//! ```
//!
//! restricted to the span of the `V` dominant generalized eigenvectors of
//! `(R_B, R_D + gamma I)`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::frames::{fft_size, FilterBank};
use crate::ir::IrBank;

/// Desired bright-zone signals for a unit impulse input: the reference
/// loudspeaker's IRs delayed by a modeling delay.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredField {
    /// One length `K+J-1` vector per bright microphone.
    pub signals: Vec<Vec<f64>>,
    pub virtual_source: usize,
    pub modeling_delay: usize,
}

impl DesiredField {
    pub fn energy(&self) -> f64 {
        self.signals.iter().flatten().map(|v| v * v).sum()
    }
}

/// `d_m = h_{m, ref}` shifted right by `delay` taps, padded to `K+J-1`.
pub fn build_desired(
    bank: &IrBank,
    rows: &[usize],
    reference: usize,
    delay: usize,
    filter_len: usize,
) -> Result<DesiredField> {
    if reference >= bank.speakers() {
        return Err(Error::config(format!(
            "reference loudspeaker {reference} out of range (L={})",
            bank.speakers()
        )));
    }
    if filter_len == 0 || delay + 1 > filter_len {
        return Err(Error::config(format!(
            "modeling delay {delay} must be at most J-1={}",
            filter_len as i64 - 1
        )));
    }
    let k = bank.taps();
    let len = k + filter_len - 1;
    let signals = rows
        .iter()
        .map(|&m| {
            if m >= bank.mics() {
                return Err(Error::config(format!("microphone row {m} out of range")));
            }
            let mut d = vec![0.0; len];
            d[delay..delay + k].copy_from_slice(bank.ir(m, reference));
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DesiredField {
        signals,
        virtual_source: reference,
        modeling_delay: delay,
    })
}

/// Zone statistics needed by the filter design and its cost.
#[derive(Debug, Clone)]
pub struct ZoneCovariances {
    pub bright: DMatrix<f64>,
    pub dark: DMatrix<f64>,
    pub cross: DVector<f64>,
    pub desired_energy: f64,
}

struct Spectra {
    size: usize,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Spectra {
    fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    fn inverse(&self, mut buf: Vec<Complex<f64>>) -> Vec<f64> {
        self.inv.process(&mut buf);
        let s = 1.0 / self.size as f64;
        buf.into_iter().map(|c| c.re * s).collect()
    }
}

/// `sum_{m in rows} H_m' H_m` as an `LJ x LJ` matrix.
pub fn zone_covariance(bank: &IrBank, rows: &[usize], filter_len: usize) -> Result<DMatrix<f64>> {
    check_rows(bank, rows)?;
    let (l_count, j) = (bank.speakers(), filter_len);
    let fft = Spectra::new(fft_size(bank.taps() + j - 1));
    // Cross-spectra conj(H_l) H_l', summed over microphones.
    let mut acc = vec![vec![Complex::new(0.0, 0.0); fft.size]; l_count * l_count];
    for &m in rows {
        let spec: Vec<_> = (0..l_count).map(|l| fft.forward(bank.ir(m, l))).collect();
        for a in 0..l_count {
            for b in a..l_count {
                let dst = &mut acc[a * l_count + b];
                for ((d, x), y) in dst.iter_mut().zip(&spec[a]).zip(&spec[b]) {
                    *d += x.conj() * y;
                }
            }
        }
    }
    let n = l_count * j;
    let mut r = DMatrix::zeros(n, n);
    for a in 0..l_count {
        for b in a..l_count {
            // corr[d] = sum_t h_a[t] h_b[t + d]; entry (j1, j2) = corr[j1 - j2].
            let corr = fft.inverse(std::mem::take(&mut acc[a * l_count + b]));
            let lag = |d: i64| corr[d.rem_euclid(fft.size as i64) as usize];
            for j1 in 0..j {
                for j2 in 0..j {
                    let v = lag(j1 as i64 - j2 as i64);
                    r[(a * j + j1, b * j + j2)] = v;
                    r[(b * j + j2, a * j + j1)] = v;
                }
            }
        }
    }
    Ok(symmetrize(r))
}

/// `sum_m H_m' d_m`.
pub fn cross_correlation(
    bank: &IrBank,
    rows: &[usize],
    desired: &DesiredField,
    filter_len: usize,
) -> Result<DVector<f64>> {
    check_rows(bank, rows)?;
    if desired.signals.len() != rows.len() {
        return Err(Error::config(format!(
            "{} desired signals for {} bright microphones",
            desired.signals.len(),
            rows.len()
        )));
    }
    let (l_count, j, k) = (bank.speakers(), filter_len, bank.taps());
    if desired.signals.iter().any(|d| d.len() != k + j - 1) {
        return Err(Error::config(format!(
            "desired signals must have K+J-1={} samples",
            k + j - 1
        )));
    }
    let fft = Spectra::new(fft_size(k + j - 1));
    let mut acc = vec![vec![Complex::new(0.0, 0.0); fft.size]; l_count];
    for (&m, d) in rows.iter().zip(&desired.signals) {
        let dspec = fft.forward(d);
        for (l, dst) in acc.iter_mut().enumerate() {
            let hspec = fft.forward(bank.ir(m, l));
            for ((a, h), x) in dst.iter_mut().zip(&hspec).zip(&dspec) {
                *a += h.conj() * x;
            }
        }
    }
    let mut out = DVector::zeros(l_count * j);
    for (l, spec) in acc.into_iter().enumerate() {
        let corr = fft.inverse(spec);
        for jj in 0..j {
            out[l * j + jj] = corr[jj];
        }
    }
    Ok(out)
}

pub fn build_covariances(
    bank: &IrBank,
    bright_rows: &[usize],
    dark_rows: &[usize],
    desired: &DesiredField,
    filter_len: usize,
) -> Result<ZoneCovariances> {
    Ok(ZoneCovariances {
        bright: zone_covariance(bank, bright_rows, filter_len)?,
        dark: zone_covariance(bank, dark_rows, filter_len)?,
        cross: cross_correlation(bank, bright_rows, desired, filter_len)?,
        desired_energy: desired.energy(),
    })
}

fn check_rows(bank: &IrBank, rows: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::config("zone has no microphones"));
    }
    if let Some(&m) = rows.iter().find(|&&m| m >= bank.mics()) {
        return Err(Error::config(format!(
            "microphone row {m} out of range (M={})",
            bank.mics()
        )));
    }
    Ok(())
}

fn symmetrize(r: DMatrix<f64>) -> DMatrix<f64> {
    (&r + r.transpose()) * 0.5
}

/// Generalized eigenstructure of `(R_B, R_D + gamma I)`, reusable across
/// ranks and trade-off weights.
#[derive(Debug, Clone)]
pub struct VastSolver {
    /// Descending generalized eigenvalues.
    pub eigenvalues: DVector<f64>,
    /// Columns `u_v`, normalized so `u' R'_D u = 1`.
    pub eigenvectors: DMatrix<f64>,
    /// `u_v' r_B`.
    projections: DVector<f64>,
    pub gamma: f64,
}

impl VastSolver {
    pub fn new(bright: &DMatrix<f64>, dark: &DMatrix<f64>, cross: &DVector<f64>, gamma: f64) -> Result<Self> {
        let n = bright.nrows();
        if bright.ncols() != n || dark.shape() != (n, n) || cross.len() != n {
            return Err(Error::config(format!(
                "covariance shapes disagree: R_B {:?}, R_D {:?}, r_B {}",
                bright.shape(),
                dark.shape(),
                cross.len()
            )));
        }
        if !(gamma >= 0.0) {
            return Err(Error::config(format!("gamma must be >= 0, got {gamma}")));
        }
        let regularized = dark + DMatrix::identity(n, n) * gamma;
        let chol = Cholesky::new(symmetrize(regularized)).ok_or(Error::SingularDarkCovariance { gamma })?;
        let lower = chol.l();
        // C = L^-1 R_B L^-T
        let left = lower
            .solve_lower_triangular(bright)
            .ok_or(Error::SingularDarkCovariance { gamma })?;
        let reduced = lower
            .solve_lower_triangular(&left.transpose())
            .ok_or(Error::SingularDarkCovariance { gamma })?;
        let eig = SymmetricEigen::new(symmetrize(reduced));

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let tolerance = -1e-8 * eigenvalues.amax().max(1.0);
        if let Some(&v) = eigenvalues.iter().find(|&&v| v < tolerance) {
            return Err(Error::NegativeEigenvalue { value: v, tolerance });
        }
        let sorted = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let eigenvectors = lower
            .transpose()
            .solve_upper_triangular(&sorted)
            .ok_or(Error::SingularDarkCovariance { gamma })?;
        let projections = eigenvectors.transpose() * cross;
        Ok(Self {
            eigenvalues,
            eigenvectors,
            projections,
            gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rank-`rank` stacked filter vector for weight `mu`.
    pub fn solve(&self, rank: usize, mu: f64) -> Result<DVector<f64>> {
        if rank == 0 || rank > self.dim() {
            return Err(Error::config(format!("rank V={rank} outside [1, LJ={}]", self.dim())));
        }
        if !(mu >= 0.0) {
            return Err(Error::config(format!("mu must be >= 0, got {mu}")));
        }
        let mut q = DVector::zeros(self.dim());
        for v in 0..rank {
            let denom = self.eigenvalues[v] + mu;
            if denom == 0.0 {
                continue;
            }
            q.axpy(self.projections[v] / denom, &self.eigenvectors.column(v), 1.0);
        }
        Ok(q)
    }
}

/// Designed control filters plus their design parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VastFilterBank {
    pub filters: FilterBank,
    pub rank: usize,
    pub mu: f64,
    pub gamma: f64,
    pub design_speed: f64,
}

pub fn vast_solve(
    cov: &ZoneCovariances,
    speakers: usize,
    rank: usize,
    mu: f64,
    gamma: f64,
    design_speed: f64,
) -> Result<VastFilterBank> {
    let solver = VastSolver::new(&cov.bright, &cov.dark, &cov.cross, gamma)?;
    let q = solver.solve(rank, mu)?;
    Ok(VastFilterBank {
        filters: split_filters(q.as_slice(), speakers)?,
        rank,
        mu,
        gamma,
        design_speed,
    })
}

pub fn split_filters(q: &[f64], speakers: usize) -> Result<FilterBank> {
    if speakers == 0 || !q.len().is_multiple_of(speakers) {
        return Err(Error::config(format!(
            "{} filter taps do not split over {speakers} loudspeakers",
            q.len()
        )));
    }
    FilterBank::new(q.chunks(q.len() / speakers).map(<[f64]>::to_vec).collect())
}

/// `xi(q)` evaluated with the supplied dark-zone matrix.
pub fn mse_cost(
    q: &DVector<f64>,
    bright: &DMatrix<f64>,
    dark: &DMatrix<f64>,
    cross: &DVector<f64>,
    desired_energy: f64,
    mu: f64,
) -> f64 {
    (q.transpose() * bright * q)[0] + mu * (q.transpose() * dark * q)[0] - 2.0 * q.dot(cross) + desired_energy
}

/// Everything needed to design filters from an IR bank.
#[derive(Debug, Clone, PartialEq)]
pub struct VastDesign {
    pub filter_len: usize,
    pub rank: usize,
    pub mu: f64,
    pub gamma: f64,
    pub reference: usize,
    pub modeling_delay: usize,
}

impl VastDesign {
    /// Designs filters for `bank`, whose bright and dark rows are given.
    pub fn design(&self, bank: &IrBank, bright_rows: &[usize], dark_rows: &[usize]) -> Result<VastFilterBank> {
        let desired = build_desired(bank, bright_rows, self.reference, self.modeling_delay, self.filter_len)?;
        let cov = build_covariances(bank, bright_rows, dark_rows, &desired, self.filter_len)?;
        let rank = self.rank.min(bank.speakers() * self.filter_len);
        vast_solve(&cov, bank.speakers(), rank, self.mu, self.gamma, bank.reference_speed)
    }
}
