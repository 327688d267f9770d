//! Exact per-realization performance of linear ZF and MMSE cancelers.
//!
//! For a drawn channel `H_c = H * D` and equal per-tone transmit power `p`
//! over noise `sigma_v^2`:
//!
//! - single-wire SNR: `eta_i = p |d_i|^2 / sigma_v^2`;
//! - ZF SNR loss: `gamma_i = [(H^H H)^-1]_ii`, output SINR `eta_i / gamma_i`;
//! - MMSE: `gamma_i = [(H^H H + (sigma_v^2/p) |D|^-2)^-1]_ii`, output SINR
//!   `eta_i / gamma_i - 1` via the estimation-error covariance.
//!
//! Diagonals of inverses come from an LU solve with a condition estimate;
//! channels conditioned worse than 1e12 are rejected as singular.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::asymptotics::{log2_1p, CancelerKind};
use crate::channel::ChannelRealization;
use crate::linalg;

#[derive(Debug, Error, PartialEq)]
pub enum CancelerError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular channel: condition estimate {cond:.3e} exceeds 1e12")]
    SingularChannel { cond: f64 },
    #[error("invalid gain: direct gain of user {user} is zero")]
    InvalidGain { user: usize },
}

/// Per-user single-wire SNR `eta_i` (linear power ratios).
#[derive(Debug, Clone, PartialEq)]
pub struct SingleWireSnr(pub Vec<f64>);

impl SingleWireSnr {
    /// `eta_i = p |d_i|^2 / sigma_v^2` for a drawn realization.
    pub fn from_realization(realization: &ChannelRealization, p: f64, noise_var: f64) -> Self {
        assert!(p > 0.0 && noise_var > 0.0, "p and noise_var must be positive");
        SingleWireSnr(
            realization
                .direct_gains()
                .iter()
                .map(|d| p * d.norm_sqr() / noise_var)
                .collect(),
        )
    }
}

/// Exact per-realization canceler performance.
#[derive(Debug, Clone, PartialEq)]
pub struct CancelerReport {
    pub canceler: CancelerKind,
    /// Per-user output SINR (linear).
    pub sinr: Vec<f64>,
    /// Per-user spectral efficiency `log2(1 + sinr)` in bits/s/Hz.
    pub rate: Vec<f64>,
    /// Average SNR-loss parameter `(1/M) tr` of the inverse Gram.
    pub gamma_bar: f64,
    /// Per-user SNR-loss diagonal.
    pub gamma: Vec<f64>,
}

impl CancelerReport {
    /// CSV with header `user,sinr_linear,sinr_db,rate_bps_hz` and a trailer
    /// row `gamma_bar,<value>`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "user,sinr_linear,sinr_db,rate_bps_hz")?;
        for (u, (&s, &r)) in self.sinr.iter().zip(&self.rate).enumerate() {
            let db = if s > 0.0 { 10.0 * s.log10() } else { f64::NEG_INFINITY };
            writeln!(w, "{},{},{},{}", u, s, db, r)?;
        }
        writeln!(w, "gamma_bar,{}", self.gamma_bar)
    }
}

/// Output SINR of an arbitrary linear equalizer `F` applied to the composite
/// channel:
///
/// ```text
/// sinr_i = p |[F H_c]_ii|^2 / (p sum_{j != i} |[F H_c]_ij|^2 + sigma_v^2 [F F^H]_ii)
/// ```
///
/// Degenerate rows (zero signal and zero denominator) report 0.
pub fn sinr_linear(
    realization: &ChannelRealization,
    equalizer: &DMatrix<Complex64>,
    p: f64,
    noise_var: f64,
) -> Result<Vec<f64>, CancelerError> {
    let m = realization.users();
    if equalizer.nrows() != m || equalizer.ncols() != m {
        return Err(CancelerError::DimensionMismatch {
            expected: m,
            got: equalizer.nrows().max(equalizer.ncols()),
        });
    }
    assert!(p > 0.0 && noise_var > 0.0, "p and noise_var must be positive");
    let effective = equalizer * realization.composite_matrix();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let signal = p * effective[(i, i)].norm_sqr();
        let interference: f64 = (0..m)
            .filter(|&j| j != i)
            .map(|j| effective[(i, j)].norm_sqr())
            .sum::<f64>()
            * p;
        let noise_gain: f64 = equalizer.row(i).iter().map(|z| z.norm_sqr()).sum();
        let denom = interference + noise_var * noise_gain;
        out.push(if denom == 0.0 { 0.0 } else { signal / denom });
    }
    Ok(out)
}

fn gamma_diagonal(gram_reg: &DMatrix<Complex64>) -> Result<(Vec<f64>, f64), CancelerError> {
    let inv = linalg::invert(gram_reg)
        .map_err(|e| CancelerError::SingularChannel { cond: e.cond })?;
    let gamma: Vec<f64> = (0..gram_reg.nrows()).map(|i| inv[(i, i)].re).collect();
    let gamma_bar = gamma.iter().sum::<f64>() / gamma.len() as f64;
    Ok((gamma, gamma_bar))
}

/// Exact ZF report: `gamma_i` is the diagonal of `(H^H H)^-1`.
pub fn zf_report(
    realization: &ChannelRealization,
    p: f64,
    noise_var: f64,
) -> Result<CancelerReport, CancelerError> {
    let eta = SingleWireSnr::from_realization(realization, p, noise_var);
    let h = realization.normalized_matrix();
    let (gamma, gamma_bar) = gamma_diagonal(&linalg::gram(&h))?;
    let sinr: Vec<f64> = eta.0.iter().zip(&gamma).map(|(&e, &g)| e / g).collect();
    let rate = sinr.iter().map(|&s| log2_1p(s)).collect();
    Ok(CancelerReport {
        canceler: CancelerKind::Zf,
        sinr,
        rate,
        gamma_bar,
        gamma,
    })
}

/// Exact MMSE report via the estimation-error covariance
/// `C_e = sigma_v^2 (H^H H + (sigma_v^2/p) |D|^-2)^-1`:
/// `sinr_i = p |d_i|^2 / [C_e]_ii - 1 = eta_i / gamma_i - 1`.
///
/// The general unequal-gain regularizer is used here; the unified
/// `(1/eta) I` form only coincides with it when all direct gains are equal.
pub fn mmse_report(
    realization: &ChannelRealization,
    p: f64,
    noise_var: f64,
) -> Result<CancelerReport, CancelerError> {
    let m = realization.users();
    let d = realization.direct_gains();
    for (i, di) in d.iter().enumerate() {
        if di.norm_sqr() == 0.0 {
            return Err(CancelerError::InvalidGain { user: i });
        }
    }
    let eta = SingleWireSnr::from_realization(realization, p, noise_var);
    let h = realization.normalized_matrix();
    let mut reg = linalg::gram(&h);
    for i in 0..m {
        reg[(i, i)] += Complex64::new(noise_var / (p * d[i].norm_sqr()), 0.0);
    }
    let (gamma, gamma_bar) = gamma_diagonal(&reg)?;
    let sinr: Vec<f64> = eta
        .0
        .iter()
        .zip(&gamma)
        .map(|(&e, &g)| (e / g - 1.0).max(0.0))
        .collect();
    let rate = sinr.iter().map(|&s| log2_1p(s)).collect();
    Ok(CancelerReport {
        canceler: CancelerKind::Mmse,
        sinr,
        rate,
        gamma_bar,
        gamma,
    })
}

/// Single-wire spectral efficiency `log2(1 + eta_i)`.
pub fn single_wire_rate(eta: &SingleWireSnr) -> Vec<f64> {
    eta.0.iter().map(|&e| log2_1p(e)).collect()
}

/// Jensen lower bound on the average spectral efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct JensenBound {
    pub rate: Vec<f64>,
    /// Set where the MMSE bound degenerated (`gamma_bar >= eta`); the rate is
    /// reported as 0 there.
    pub degenerate: Vec<bool>,
}

/// Jensen bound from the mean SNR loss: `log2(1 + eta/gamma_bar)` for ZF,
/// `log2(eta/gamma_bar)` for MMSE (clamped to 0 and flagged when the log
/// argument drops to 1 or below).
pub fn jensen_rate_bound(eta: &SingleWireSnr, mean_gamma_bar: f64, kind: CancelerKind) -> JensenBound {
    assert!(mean_gamma_bar > 0.0, "mean_gamma_bar must be positive");
    let mut rate = Vec::with_capacity(eta.0.len());
    let mut degenerate = vec![false; eta.0.len()];
    for (i, &e) in eta.0.iter().enumerate() {
        match kind {
            CancelerKind::Zf => rate.push(log2_1p(e / mean_gamma_bar)),
            CancelerKind::Mmse => {
                if mean_gamma_bar >= e {
                    degenerate[i] = true;
                    rate.push(0.0);
                } else {
                    rate.push((e / mean_gamma_bar).log2());
                }
            }
        }
    }
    JensenBound { rate, degenerate }
}
