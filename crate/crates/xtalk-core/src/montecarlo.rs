//! Trial orchestration and convergence experiments.
//!
//! The key construction is a sequence of growing matrices that keeps the
//! per-user total FEXT power constant: an `n x n` draw whose off-diagonal
//! entries are scaled by `sqrt((M-1)/(n-1))`, so the system of interest
//! (size `M`) is one element of a sequence whose SNR loss converges to the
//! deterministic equivalents of [`crate::asymptotics`]. Ensemble statistics
//! measure how fast that convergence happens.
//!
//! Trials are embarrassingly parallel. All randomness is keyed by
//! `(seed, trial_index, entry)` and per-trial values are reduced in trial
//! order, so results never depend on thread scheduling.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::asymptotics::{
    gamma_deterministic, AsymptoticQuery, CancelerKind, GammaEquivalent, Regularizer,
};
use crate::cancelers::{mmse_report, zf_report, CancelerError};
use crate::channel::{
    draw_fext_matrix, sigma_total, ChannelError, ChannelRealization, FextModelParams, RngSpec,
};
use crate::linalg;

#[derive(Debug, Error, PartialEq)]
pub enum MonteCarloError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Canceler(#[from] CancelerError),
    #[error("singular matrix: condition estimate {cond:.3e} exceeds 1e12")]
    Singular { cond: f64 },
    #[error("deterministic equivalent diverges for sigma2 = {sigma2} with an unbounded regularizer")]
    DivergentReference { sigma2: f64 },
}

/// Specification of a convergence run: which sequence sizes to evaluate and
/// which base coupling model to draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    /// System size of interest (the `M` whose FEXT power is preserved).
    pub m_target: usize,
    /// Sequence sizes to evaluate; each must be at least 2.
    pub n_values: Vec<usize>,
    pub base_fext: FextModelParams,
}

/// Ensemble statistics of `gamma_bar` over one batch of trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    pub mean_gamma_bar: f64,
    /// Sample standard deviation (0 for a single trial).
    pub std_gamma_bar: f64,
    /// `sqrt(E|gamma_bar - gamma_o|^2) / E[gamma_bar]`, the RMS deviation
    /// around the supplied deterministic equivalent over the mean.
    pub coeff_variation: f64,
    pub trials: usize,
}

/// Streaming mean/variance accumulator (Welford), with a deterministic
/// pairwise merge so parallel reductions reproduce the serial result.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n-1 denominator); 0 below two samples.
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Fold per-trial values (ordered by trial index) into [`EnsembleStats`]
/// against a reference `gamma_o`.
pub fn ensemble_stats(values: &[f64], gamma_det: f64) -> EnsembleStats {
    let mut w = Welford::default();
    let mut sq_dev = 0.0;
    for &v in values {
        w.push(v);
        let d = v - gamma_det;
        sq_dev += d * d;
    }
    let mean = w.mean();
    EnsembleStats {
        mean_gamma_bar: mean,
        std_gamma_bar: w.sample_variance().sqrt(),
        coeff_variation: (sq_dev / values.len() as f64).sqrt() / mean,
        trials: values.len(),
    }
}

/// Draw one element of the constant-power sequence: an `n x n` normalized
/// matrix whose off-diagonal entries carry the base distribution scaled by
/// `sqrt((m_target - 1)/(n - 1))`, holding the per-user total FEXT power at
/// `(m_target - 1) E|q|^2` for every `n`.
///
/// Unit direct gains are attached so the result plugs into the canceler and
/// trace machinery unchanged.
pub fn build_sigma_n(
    n: usize,
    m_target: usize,
    fext: &FextModelParams,
    rng: RngSpec,
) -> Result<ChannelRealization, MonteCarloError> {
    if n < 2 {
        return Err(MonteCarloError::Channel(ChannelError::InvalidDimension(n)));
    }
    if m_target < 2 {
        return Err(MonteCarloError::Channel(ChannelError::InvalidDimension(m_target)));
    }
    let factor = ((m_target - 1) as f64 / (n - 1) as f64).sqrt();
    let q = draw_fext_matrix(n, fext, rng);
    let d = DVector::from_element(n, Complex64::new(1.0, 0.0));
    let mut realization = ChannelRealization::new(d, q)?;
    // Scale realized entries rather than distribution parameters, so any
    // admissible coupling law plugs in unchanged.
    realization.scale_fext(factor);
    Ok(realization)
}

/// Draw an `m`-user normalized realization whose total FEXT power is scaled
/// to exactly `sigma2` (unit direct gains).
pub fn realization_with_sigma2(
    m: usize,
    sigma2: f64,
    base_fext: &FextModelParams,
    rng: RngSpec,
) -> Result<ChannelRealization, MonteCarloError> {
    if m < 2 {
        return Err(MonteCarloError::Channel(ChannelError::InvalidDimension(m)));
    }
    assert!(sigma2 >= 0.0, "sigma2 must be nonnegative");
    let base = sigma_total(base_fext, m);
    let q = draw_fext_matrix(m, base_fext, rng);
    let d = DVector::from_element(m, Complex64::new(1.0, 0.0));
    let mut realization = ChannelRealization::new(d, q)?;
    realization.scale_fext((sigma2 / base).sqrt());
    Ok(realization)
}

/// Normalized SNR-loss trace of one sequence element:
/// `(1/n) tr[(S^H S + (1/xi) I)^-1]`, where the infinite regularizer drops
/// the identity term (ZF).
pub fn gamma_tilde(
    realization: &ChannelRealization,
    xi: Regularizer,
) -> Result<f64, MonteCarloError> {
    let n = realization.users();
    let s = realization.normalized_matrix();
    let mut gram = linalg::gram(&s);
    if let Regularizer::Finite(xi) = xi {
        assert!(xi > 0.0, "finite regularizer must be positive");
        for i in 0..n {
            gram[(i, i)] += Complex64::new(1.0 / xi, 0.0);
        }
    }
    let inv = linalg::invert(&gram).map_err(|e| MonteCarloError::Singular { cond: e.cond })?;
    Ok((0..n).map(|i| inv[(i, i)].re).sum::<f64>() / n as f64)
}

/// One row of a convergence experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub n: usize,
    pub gamma_det: f64,
    pub stats: EnsembleStats,
}

/// Run `trials` independent sequence draws at every `n` in the spec and
/// aggregate against the deterministic equivalent for the spec's total FEXT
/// power.
///
/// Trials run in parallel; per-trial values are collected in trial order
/// before the statistics fold, so the output is schedule-independent.
pub fn convergence_experiment(
    spec: &SequenceSpec,
    xi: Regularizer,
    trials: usize,
    seed: u64,
) -> Result<Vec<ConvergencePoint>, MonteCarloError> {
    assert!(trials >= 1, "need at least one trial");
    let sigma2 = sigma_total(&spec.base_fext, spec.m_target);
    let gamma_det = reference_gamma(sigma2, xi)?;

    let mut out = Vec::with_capacity(spec.n_values.len());
    for &n in &spec.n_values {
        let values: Result<Vec<f64>, MonteCarloError> = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                let r = build_sigma_n(n, spec.m_target, &spec.base_fext, RngSpec::new(seed, trial))?;
                gamma_tilde(&r, xi)
            })
            .collect();
        out.push(ConvergencePoint {
            n,
            gamma_det,
            stats: ensemble_stats(&values?, gamma_det),
        });
    }
    Ok(out)
}

fn reference_gamma(sigma2: f64, xi: Regularizer) -> Result<f64, MonteCarloError> {
    match gamma_deterministic(AsymptoticQuery { sigma2, xi }).gamma {
        GammaEquivalent::Finite(g) => Ok(g),
        GammaEquivalent::Divergent { .. } => Err(MonteCarloError::DivergentReference { sigma2 }),
    }
}

/// Write convergence rows as CSV:
/// `n,trials,mean_gamma,std_gamma,gamma_det,coeff_var`.
pub fn write_convergence_csv<W: Write>(points: &[ConvergencePoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,trials,mean_gamma,std_gamma,gamma_det,coeff_var")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.n,
            p.stats.trials,
            p.stats.mean_gamma_bar,
            p.stats.std_gamma_bar,
            p.gamma_det,
            p.stats.coeff_variation
        )?;
    }
    Ok(())
}

/// One paired point (deterministic equivalent vs empirical mean) of the
/// accuracy scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub canceler: CancelerKind,
    pub m: usize,
    pub sigma2: f64,
    pub gamma_det: f64,
    pub gamma_emp: f64,
}

/// Accuracy scatter over `(m, sigma2)` grids for both cancelers at a fixed
/// single-wire SNR: empirical mean `gamma_bar` over `trials` realizations
/// against the deterministic equivalent. Emits `|m| * |sigma2| * 2` rows.
///
/// The ZF deterministic equivalent is reported as infinite past the
/// critical power.
pub fn scatter_experiment(
    m_values: &[usize],
    sigma2_grid: &[f64],
    eta_db: f64,
    trials: usize,
    base_fext: &FextModelParams,
    seed: u64,
) -> Result<Vec<ScatterRow>, MonteCarloError> {
    assert!(!m_values.is_empty() && !sigma2_grid.is_empty(), "grids must be non-empty");
    let eta = 10f64.powf(eta_db / 10.0);
    let mut rows = Vec::with_capacity(m_values.len() * sigma2_grid.len() * 2);
    for &m in m_values {
        for &sigma2 in sigma2_grid {
            let reports: Result<Vec<(f64, f64)>, MonteCarloError> = (0..trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let r = realization_with_sigma2(m, sigma2, base_fext, RngSpec::new(seed, trial))?;
                    let zf = zf_report(&r, eta, 1.0)?;
                    let mmse = mmse_report(&r, eta, 1.0)?;
                    Ok((zf.gamma_bar, mmse.gamma_bar))
                })
                .collect();
            let reports = reports?;
            let mean_zf = reports.iter().map(|r| r.0).sum::<f64>() / trials as f64;
            let mean_mmse = reports.iter().map(|r| r.1).sum::<f64>() / trials as f64;
            let det_zf = match gamma_deterministic(AsymptoticQuery {
                sigma2,
                xi: Regularizer::Infinite,
            })
            .gamma
            {
                GammaEquivalent::Finite(g) => g,
                GammaEquivalent::Divergent { .. } => f64::INFINITY,
            };
            let det_mmse = reference_gamma(sigma2, Regularizer::Finite(eta))?;
            rows.push(ScatterRow {
                canceler: CancelerKind::Zf,
                m,
                sigma2,
                gamma_det: det_zf,
                gamma_emp: mean_zf,
            });
            rows.push(ScatterRow {
                canceler: CancelerKind::Mmse,
                m,
                sigma2,
                gamma_det: det_mmse,
                gamma_emp: mean_mmse,
            });
        }
    }
    Ok(rows)
}

/// Write scatter rows as CSV: `canceler,m,sigma2,gamma_det,gamma_emp`.
pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "canceler,m,sigma2,gamma_det,gamma_emp")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.canceler, r.m, r.sigma2, r.gamma_det, r.gamma_emp
        )?;
    }
    Ok(())
}
