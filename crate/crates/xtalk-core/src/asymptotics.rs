//! Deterministic equivalents for the SNR loss of linear cancelers.
//!
//! As the number of jointly decoded users grows (with the per-user total
//! FEXT power `sigma^2` held constant), the average SNR loss `gamma_bar`
//! of the regularized canceler family converges to a deterministic value
//! `gamma_o`: the unique positive root of a cubic in `t`,
//!
//! ```text
//! sigma^4 t^3 + 2 sigma^2 t^2 + (1 + xi - xi*sigma^2) t - xi = 0
//! ```
//!
//! where the regularizer `xi` is the single-wire SNR `eta` for MMSE and
//! `xi -> inf` for ZF. This module provides:
//!
//! - the cubic solver ([`gamma_deterministic`]) with residual reporting;
//! - ZF and MMSE closed forms ([`zf_gamma_asymptotic`],
//!   [`mmse_snr_asymptotic`]) including the divergent-ZF regime;
//! - closed-form regime approximations and their labels
//!   ([`mmse_regime_approx`]);
//! - the derivative of the MMSE output SNR in `sigma^2` and its extremal
//!   point ([`mmse_snr_derivative`], [`mmse_extremal_sigma`]);
//! - the i.i.d.-matrix (wireless) limit ([`wireless_mmse_snr`]);
//! - the general variance-profile Stieltjes fixed point
//!   ([`stieltjes_fixed_point`]) and the single-parameter sandwich bounds
//!   ([`variance_profile_bounds`]).
//!
//! Root finding uses a safeguarded, bracketed Newton iteration; the closed
//! Cardano expression is kept as a cross-check because its branch selection
//! is numerically fragile near `sigma^2 = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AsymptoticsError {
    #[error("derivative singular: implicit-function denominator {denominator} within 1e-12 of zero")]
    DerivativeSingular { denominator: f64 },
    #[error("fixed point did not converge within {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("invalid variance profile: {0}")]
    InvalidProfile(String),
}

/// Regularizer `xi` of the unified SNR-loss trace: finite for MMSE
/// (`xi = eta`), infinite for ZF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularizer {
    Finite(f64),
    Infinite,
}

/// Query for a deterministic equivalent: total FEXT power and regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticQuery {
    pub sigma2: f64,
    pub xi: Regularizer,
}

/// A deterministic-equivalent SNR loss, which may diverge (ZF with
/// `sigma^2 >= 1`). The divergent case carries the growth rate
/// `lim sqrt(t/xi) = sqrt(sigma^2 - 1) / sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaEquivalent {
    Finite(f64),
    Divergent { rate: f64 },
}

impl GammaEquivalent {
    pub fn finite(&self) -> Option<f64> {
        match self {
            GammaEquivalent::Finite(g) => Some(*g),
            GammaEquivalent::Divergent { .. } => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, GammaEquivalent::Divergent { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticResult {
    pub gamma: GammaEquivalent,
    /// Output SNR `xi / gamma - 1` for finite regularizers; this is the MMSE
    /// deterministic SNR when the query used `xi = eta`.
    pub rho: Option<f64>,
    /// Cubic residual of the returned root, relative to the largest monomial.
    pub residual: f64,
}

// ---------------------------------------------------------------------------
// Cubic machinery
// ---------------------------------------------------------------------------

/// Monic-free cubic `c3 t^3 + c2 t^2 + c1 t + c0` evaluated with the residual
/// normalization used for root acceptance: residual relative to the largest
/// monomial magnitude at the root.
fn cubic_residual(c: [f64; 4], t: f64) -> f64 {
    let monomials = [c[3] * t * t * t, c[2] * t * t, c[1] * t, c[0]];
    let value: f64 = monomials.iter().sum();
    let scale = monomials.iter().fold(0.0f64, |a, m| a.max(m.abs())).max(f64::MIN_POSITIVE);
    (value / scale).abs()
}

/// Find the unique positive root of a cubic known to satisfy
/// `f(0) < 0 < f(inf)` by safeguarded Newton within a doubling bracket.
fn positive_root(c: [f64; 4], hi_guess: f64) -> f64 {
    let f = |t: f64| ((c[3] * t + c[2]) * t + c[1]) * t + c[0];
    let df = |t: f64| (3.0 * c[3] * t + 2.0 * c[2]) * t + c[1];

    let mut lo = 0.0f64;
    let mut hi = hi_guess.max(1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
        assert!(hi.is_finite(), "positive root bracket expansion overflowed");
    }

    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let ft = f(t);
        if ft < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = df(t);
        let newton = t - ft / d;
        let next = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 1e-15 * t.abs() {
            return next;
        }
        t = next;
    }
    t
}

/// All real roots of `c3 t^3 + c2 t^2 + c1 t + c0 = 0` via the trigonometric
/// and hyperbolic forms of the closed cubic solution. Used as an independent
/// cross-check of the Newton route.
pub(crate) fn cubic_real_roots(c: [f64; 4]) -> Vec<f64> {
    let [d, c1, b, a] = c;
    if a == 0.0 {
        if b == 0.0 {
            if c1 == 0.0 {
                return vec![];
            }
            return vec![-d / c1];
        }
        let disc = c1 * c1 - 4.0 * b * d;
        if disc < 0.0 {
            return vec![];
        }
        let s = disc.sqrt();
        return vec![(-c1 + s) / (2.0 * b), (-c1 - s) / (2.0 * b)];
    }
    // Depressed form t = x - b/(3a): x^3 + px + q = 0.
    let bb = b / a;
    let p = (c1 / a) - bb * bb / 3.0;
    let q = 2.0 * bb * bb * bb / 27.0 - bb * c1 / (a * 3.0) + d / a;
    let shift = -bb / 3.0;
    let disc = 0.25 * q * q + p * p * p / 27.0;
    let mut roots = Vec::with_capacity(3);
    if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-0.5 * q + s).cbrt();
        let v = (-0.5 * q - s).cbrt();
        roots.push(u + v + shift);
    } else if p == 0.0 {
        roots.push((-q).cbrt() + shift);
    } else {
        // Three real roots.
        let r = (-p * p * p / 27.0).sqrt();
        let phi = (-0.5 * q / r).clamp(-1.0, 1.0).acos();
        let two_r = 2.0 * (-p / 3.0).sqrt();
        for k in 0..3 {
            roots.push(two_r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift);
        }
    }
    roots
}

fn gamma_cubic_coeffs(sigma2: f64, xi: f64) -> [f64; 4] {
    // [c0, c1, c2, c3] for sigma^4 t^3 + 2 sigma^2 t^2 + (1+xi-xi sigma^2) t - xi
    [-xi, 1.0 + xi - xi * sigma2, 2.0 * sigma2, sigma2 * sigma2]
}

fn mmse_cubic_coeffs(eta: f64, sigma2: f64) -> [f64; 4] {
    let s = eta - eta * sigma2 - 2.0;
    let q = 1.0 - 2.0 * eta;
    let p = eta * eta * sigma2 * sigma2 + eta * sigma2 + eta;
    [-p, q, -s, 1.0]
}

// ---------------------------------------------------------------------------
// Deterministic equivalents
// ---------------------------------------------------------------------------

/// Deterministic-equivalent SNR loss `gamma_o` for total FEXT power
/// `sigma^2` and regularizer `xi`.
///
/// Finite `xi` solves the cubic; the infinite regularizer routes to the ZF
/// closed form instead of pushing a huge float through the `sigma^4 t^3`
/// term.
pub fn gamma_deterministic(query: AsymptoticQuery) -> AsymptoticResult {
    assert!(query.sigma2 >= 0.0, "sigma2 must be nonnegative");
    match query.xi {
        Regularizer::Infinite => {
            let gamma = zf_gamma_asymptotic(query.sigma2);
            AsymptoticResult {
                gamma,
                rho: None,
                residual: 0.0,
            }
        }
        Regularizer::Finite(xi) => {
            assert!(xi > 0.0, "finite regularizer must be positive");
            let t = if query.sigma2 == 0.0 {
                // Cubic degenerates to (1 + xi) t - xi = 0.
                xi / (1.0 + xi)
            } else {
                let coeffs = gamma_cubic_coeffs(query.sigma2, xi);
                positive_root(coeffs, upper_bracket(query.sigma2, xi))
            };
            let residual = cubic_residual(gamma_cubic_coeffs(query.sigma2, xi), t);
            AsymptoticResult {
                gamma: GammaEquivalent::Finite(t),
                rho: Some(xi / t - 1.0),
                residual,
            }
        }
    }
}

fn upper_bracket(sigma2: f64, xi: f64) -> f64 {
    // t <= 1/(1-sigma2) for sigma2 < 1; t <= xi generally. Either bound may
    // be loose; the doubling bracket in `positive_root` repairs any slack.
    if sigma2 < 1.0 {
        (1.0 / (1.0 - sigma2)).min(xi.max(1.0))
    } else {
        xi.max(1.0)
    }
}

/// ZF deterministic equivalent: `1 / (1 - sigma^2)` below the critical FEXT
/// power, divergent at and above it with rate `sqrt(sigma^2 - 1) / sigma^2`.
pub fn zf_gamma_asymptotic(sigma2: f64) -> GammaEquivalent {
    assert!(sigma2 >= 0.0, "sigma2 must be nonnegative");
    if sigma2 < 1.0 {
        GammaEquivalent::Finite(1.0 / (1.0 - sigma2))
    } else {
        GammaEquivalent::Divergent {
            rate: (sigma2 - 1.0).sqrt() / sigma2,
        }
    }
}

/// Deterministic equivalent of the MMSE output SNR: the unique positive root
/// of `rho^3 - S rho^2 + Q rho - P = 0` with
/// `S = eta - eta*sigma^2 - 2`, `Q = 1 - 2*eta`,
/// `P = eta^2 sigma^4 + eta sigma^2 + eta`.
pub fn mmse_snr_asymptotic(eta: f64, sigma2: f64) -> f64 {
    assert!(eta > 0.0, "eta must be positive");
    assert!(sigma2 >= 0.0, "sigma2 must be nonnegative");
    let coeffs = mmse_cubic_coeffs(eta, sigma2);
    positive_root(coeffs, eta * (1.0 + sigma2) + 1.0)
}

/// Positive root of the MMSE cubic through the closed Cardano-form solution,
/// scanning the three branches for the real positive one. Cross-check route;
/// the bracketed Newton solver is the primary.
pub fn mmse_snr_cardano(eta: f64, sigma2: f64) -> Option<f64> {
    let coeffs = mmse_cubic_coeffs(eta, sigma2);
    let mut best: Option<f64> = None;
    for r in cubic_real_roots(coeffs) {
        if r > 0.0 && cubic_residual(coeffs, r) < 1e-6 {
            best = Some(match best {
                Some(b) => b.max(r),
                None => r,
            });
        }
    }
    best
}

/// Regime labels for the closed-form MMSE SNR approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// `eta < 0.01`: `rho ~ (1 + sigma^2) eta`.
    LowSnr,
    /// `eta > 100`, `sigma^2 < 1`: `rho ~ (1 - sigma^2) eta`.
    HighSnrSub,
    /// `eta > 100`, `sigma^2 ~ 1`: `rho ~ sigma^4 eta^(2/3)`.
    HighSnrCrit,
    /// `eta > 100`, `sigma^2 > 1`: `rho ~ sigma^2/sqrt(sigma^2-1) sqrt(eta)`.
    HighSnrSuper,
    /// `sigma^2 < 0.01`: first-order Taylor `rho ~ eta + eta(1-eta)/(eta+1) sigma^2`.
    SmallSigma,
    /// `sigma^2 >= 100`: `rho ~ sqrt(eta sigma^2)`.
    LargeSigma,
    /// No closed-form regime applies; the exact root is returned.
    General,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::LowSnr => "LOW_SNR",
            Regime::HighSnrSub => "HIGH_SNR_SUB",
            Regime::HighSnrCrit => "HIGH_SNR_CRIT",
            Regime::HighSnrSuper => "HIGH_SNR_SUPER",
            Regime::SmallSigma => "SMALL_SIGMA",
            Regime::LargeSigma => "LARGE_SIGMA",
            Regime::General => "GENERAL",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeApprox {
    pub value: f64,
    pub regime: Regime,
}

/// Closed-form approximation of the MMSE SNR with its regime label.
///
/// Labels are advisory: outside every asymptotic band the exact cubic root
/// is returned with the `General` label.
pub fn mmse_regime_approx(eta: f64, sigma2: f64) -> RegimeApprox {
    assert!(eta > 0.0, "eta must be positive");
    if eta < 0.01 {
        return RegimeApprox {
            value: (1.0 + sigma2) * eta,
            regime: Regime::LowSnr,
        };
    }
    if eta > 100.0 {
        if (sigma2 - 1.0).abs() < 0.05 {
            return RegimeApprox {
                value: sigma2 * sigma2 * eta.powf(2.0 / 3.0),
                regime: Regime::HighSnrCrit,
            };
        }
        if sigma2 < 1.0 {
            return RegimeApprox {
                value: (1.0 - sigma2) * eta,
                regime: Regime::HighSnrSub,
            };
        }
        return RegimeApprox {
            value: sigma2 / (sigma2 - 1.0).sqrt() * eta.sqrt(),
            regime: Regime::HighSnrSuper,
        };
    }
    if sigma2 < 0.01 {
        return RegimeApprox {
            value: eta + eta * (1.0 - eta) / (eta + 1.0) * sigma2,
            regime: Regime::SmallSigma,
        };
    }
    if sigma2 >= 100.0 {
        return RegimeApprox {
            value: (eta * sigma2).sqrt(),
            regime: Regime::LargeSigma,
        };
    }
    RegimeApprox {
        value: mmse_snr_asymptotic(eta, sigma2),
        regime: Regime::General,
    }
}

/// Implicit derivative `d rho_o / d sigma^2` of the MMSE cubic at the root
/// `rho`:
///
/// ```text
/// rho' = (-eta rho^2 + 2 eta^2 sigma^2 + eta) / (3 rho^2 - 2 S rho + Q)
/// ```
pub fn mmse_snr_derivative(eta: f64, sigma2: f64, rho: f64) -> Result<f64, AsymptoticsError> {
    let s = eta - eta * sigma2 - 2.0;
    let q = 1.0 - 2.0 * eta;
    let num = -eta * rho * rho + 2.0 * eta * eta * sigma2 + eta;
    let den = 3.0 * rho * rho - 2.0 * s * rho + q;
    if den.abs() < 1e-12 {
        return Err(AsymptoticsError::DerivativeSingular { denominator: den });
    }
    Ok(num / den)
}

/// Location and value of the MMSE SNR minimum over `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalPoint {
    pub sigma_star2: f64,
    pub rho_star: f64,
}

/// Extremal point of `rho_o(sigma^2)` for fixed `eta`.
///
/// Returns `None` for `eta <= 1` where the SNR is monotone increasing in the
/// FEXT power. For `eta > 1` the minimum lies in the interval
/// `(1 - 1/eta, 1 - 2/eta + sqrt(1 - 2/eta + 2/eta^2))` and is located by
/// bisection on the derivative.
pub fn mmse_extremal_sigma(eta: f64) -> Option<ExtremalPoint> {
    assert!(eta > 0.0, "eta must be positive");
    if eta <= 1.0 {
        return None;
    }
    let lo_bound = 1.0 - 1.0 / eta;
    let hi_bound = 1.0 - 2.0 / eta + (1.0 - 2.0 / eta + 2.0 / (eta * eta)).sqrt();
    let g = |s2: f64| {
        let rho = mmse_snr_asymptotic(eta, s2);
        mmse_snr_derivative(eta, s2, rho).unwrap_or(f64::NAN)
    };

    // Scan for the sign change, then bisect.
    let span = hi_bound - lo_bound;
    let a = lo_bound + 1e-9 * span;
    let b = hi_bound - 1e-9 * span;
    let steps = 256;
    let mut bracket = None;
    let mut prev_x = a;
    let mut prev_g = g(a);
    for k in 1..=steps {
        let x = a + span * k as f64 / steps as f64;
        let gx = g(x.min(b));
        if prev_g < 0.0 && gx >= 0.0 {
            bracket = Some((prev_x, x.min(b)));
            break;
        }
        prev_x = x;
        prev_g = gx;
    }
    let (mut a, mut b) = bracket?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if g(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-14 * b.abs() {
            break;
        }
    }
    let sigma_star2 = 0.5 * (a + b);
    Some(ExtremalPoint {
        sigma_star2,
        rho_star: mmse_snr_asymptotic(eta, sigma_star2),
    })
}

/// MMSE output SNR of the fully i.i.d. (wireless) matrix limit:
/// `-0.5 + 0.5 sqrt(1 + 4 eta sigma^2)` as a function of the product
/// `eta * sigma^2`.
pub fn wireless_mmse_snr(eta_sigma2: f64) -> f64 {
    assert!(eta_sigma2 >= 0.0, "product must be nonnegative");
    -0.5 + 0.5 * (1.0 + 4.0 * eta_sigma2).sqrt()
}

// ---------------------------------------------------------------------------
// General variance-profile fixed point
// ---------------------------------------------------------------------------

/// Per-entry variance map `sigma_ij^2(n)` with zero diagonal, for the
/// heterogeneous deterministic equivalent.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    var: DMatrix<f64>,
}

impl VarianceProfile {
    pub fn new(var: DMatrix<f64>) -> Result<Self, AsymptoticsError> {
        if var.nrows() != var.ncols() || var.nrows() < 2 {
            return Err(AsymptoticsError::InvalidProfile(format!(
                "profile must be square with n >= 2, got {}x{}",
                var.nrows(),
                var.ncols()
            )));
        }
        for i in 0..var.nrows() {
            if var[(i, i)] != 0.0 {
                return Err(AsymptoticsError::InvalidProfile(format!(
                    "diagonal entry ({i},{i}) must be zero"
                )));
            }
        }
        if var.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(AsymptoticsError::InvalidProfile(
                "entries must be finite and nonnegative".to_string(),
            ));
        }
        Ok(Self { var })
    }

    /// Homogeneous profile matching total FEXT power `sigma^2`: off-diagonal
    /// entries `n/(n-1) * sigma^2`.
    pub fn homogeneous(n: usize, sigma2: f64) -> Result<Self, AsymptoticsError> {
        if n < 2 {
            return Err(AsymptoticsError::InvalidProfile(format!("n must be >= 2, got {n}")));
        }
        let v = n as f64 / (n - 1) as f64 * sigma2;
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { v }))
    }

    pub fn dim(&self) -> usize {
        self.var.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.var
    }
}

/// Converged solution of the coupled diagonal fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub t: Vec<f64>,
    pub t_tilde: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl FixedPointResult {
    pub fn mean_t(&self) -> f64 {
        self.t.iter().sum::<f64>() / self.t.len() as f64
    }
}

const FP_DAMPING: f64 = 0.5;
const FP_TOL: f64 = 1e-12;
const FP_MAX_ITER: usize = 100_000;

/// Solve the coupled Stieltjes fixed point of the deterministic equivalent
/// at evaluation point `z = -1/xi` for a general variance profile:
///
/// ```text
/// t_i     = 1 / [ (1/xi)(1 + (1/n) sum_k var[i][k] tt_k) + 1/(1 + (1/n) sum_k var[k][i] t_k) ]
/// tt_j    = 1 / [ (1/xi)(1 + (1/n) sum_k var[k][j] t_k)  + 1/(1 + (1/n) sum_k var[j][k] tt_k) ]
/// ```
///
/// Damped iteration (`x <- (1-a) x + a f(x)`, `a = 0.5`) from
/// `t = tt = min(xi, 1)`; converged when the largest elementwise update
/// falls below 1e-12.
pub fn stieltjes_fixed_point(
    profile: &VarianceProfile,
    xi: f64,
) -> Result<FixedPointResult, AsymptoticsError> {
    if !(xi > 0.0) {
        return Err(AsymptoticsError::OutOfDomain(format!("xi must be > 0, got {xi}")));
    }
    let n = profile.dim();
    let nf = n as f64;
    let var = profile.entries();

    let init = xi.min(1.0);
    let mut t = vec![init; n];
    let mut tt = vec![init; n];
    let mut new_t = vec![0.0; n];
    let mut new_tt = vec![0.0; n];

    let mut residual = f64::INFINITY;
    for iter in 1..=FP_MAX_ITER {
        // Row sums against tt for t, column sums against t for tt.
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for k in 0..n {
                row += var[(i, k)] * tt[k];
                col += var[(k, i)] * t[k];
            }
            new_t[i] = 1.0 / ((1.0 + row / nf) / xi + 1.0 / (1.0 + col / nf));
            new_tt[i] = 1.0 / ((1.0 + col / nf) / xi + 1.0 / (1.0 + row / nf));
        }

        let mut max_update = 0.0f64;
        residual = 0.0;
        for i in 0..n {
            residual = residual.max((new_t[i] - t[i]).abs()).max((new_tt[i] - tt[i]).abs());
            let ut = FP_DAMPING * (new_t[i] - t[i]);
            let utt = FP_DAMPING * (new_tt[i] - tt[i]);
            t[i] += ut;
            tt[i] += utt;
            max_update = max_update.max(ut.abs()).max(utt.abs());
        }
        if max_update < FP_TOL {
            return Ok(FixedPointResult {
                t,
                t_tilde: tt,
                iterations: iter,
                residual,
            });
        }
    }
    Err(AsymptoticsError::NoConvergence {
        iterations: FP_MAX_ITER,
        residual,
    })
}

/// Sandwich bounds on the deterministic SNR loss from the extreme entry
/// variances of a profile: `gamma_o <= 1/(1 - sigma_u^2)` always, and
/// `gamma_o >= 1/(1 - sigma_l^2)` in the large-`xi` limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBounds {
    pub upper: f64,
    pub lower: f64,
}

pub fn variance_profile_bounds(sigma_u2: f64, sigma_l2: f64) -> Result<GammaBounds, AsymptoticsError> {
    if !(sigma_u2 < 1.0) {
        return Err(AsymptoticsError::OutOfDomain(format!(
            "upper variance must satisfy sigma_u^2 < 1, got {sigma_u2}"
        )));
    }
    if !(0.0..=sigma_u2).contains(&sigma_l2) {
        return Err(AsymptoticsError::OutOfDomain(format!(
            "need 0 <= sigma_l^2 <= sigma_u^2, got sigma_l^2 = {sigma_l2}, sigma_u^2 = {sigma_u2}"
        )));
    }
    Ok(GammaBounds {
        upper: 1.0 / (1.0 - sigma_u2),
        lower: 1.0 / (1.0 - sigma_l2),
    })
}

/// Canceler selector shared by the exact and asymptotic paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CancelerKind {
    Zf,
    Mmse,
}

impl std::fmt::Display for CancelerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CancelerKind::Zf => "ZF",
            CancelerKind::Mmse => "MMSE",
        })
    }
}

/// log2(1 + x) through ln_1p, exact at 0 and accurate for tiny x.
pub(crate) fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Deterministic-equivalent spectral efficiency in bits/s/Hz:
/// `log2(1 + eta/gamma_o)` for ZF (0 when divergent), `log2(1 + rho_o)` for
/// MMSE.
pub fn asymptotic_rate(eta: f64, sigma2: f64, kind: CancelerKind) -> f64 {
    assert!(eta > 0.0, "eta must be positive");
    match kind {
        CancelerKind::Zf => match zf_gamma_asymptotic(sigma2) {
            GammaEquivalent::Finite(g) => log2_1p(eta / g),
            GammaEquivalent::Divergent { .. } => 0.0,
        },
        CancelerKind::Mmse => log2_1p(mmse_snr_asymptotic(eta, sigma2)),
    }
}

/// Deterministic-equivalent output SINR fed to bit loading: `eta/gamma_o`
/// for ZF (0 when divergent), `rho_o` for MMSE.
pub fn asymptotic_sinr(eta: f64, sigma2: f64, kind: CancelerKind) -> f64 {
    match kind {
        CancelerKind::Zf => match zf_gamma_asymptotic(sigma2) {
            GammaEquivalent::Finite(g) => eta / g,
            GammaEquivalent::Divergent { .. } => 0.0,
        },
        CancelerKind::Mmse => mmse_snr_asymptotic(eta, sigma2),
    }
}
