//! Stochastic wireline channel generation.
//!
//! A binder of `m` twisted pairs is modeled by a complex channel matrix
//! `H_c = H * D` where `D` is the diagonal of direct gains and `H = I + Q`
//! holds the normalized far-end crosstalk (FEXT): `q_ij = [H_c]_ij / [H_c]_jj`
//! off the diagonal and exactly zero on it.
//!
//! Direct gains follow the exponential cable model `exp(-l*r)` with `r`
//! either a constant or a per-frequency table. FEXT couplings follow the
//! log-normal coupling model
//!
//! ```text
//! q_ij = K_fext * f * sqrt(l_ij) * 10^(-chi/20) * exp(j*phi)
//! ```
//!
//! with `chi` Gaussian in dB (mean `2.33 * sigma_db`, std dev `sigma_db`) and
//! `phi` uniform on `[0, 2*pi)`.
//!
//! Reproducibility: every matrix entry draws from its own counter-derived
//! random stream keyed by `(seed, trial_index, entry)`, so a realization is a
//! pure function of its [`RngSpec`] no matter how the entries are evaluated.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// dB mean of the coupling dispersion is tied to its std dev by the cable
/// model: `mu_dB = 2.33 * sigma_dB`.
pub const COUPLING_MEAN_FACTOR_DB: f64 = 2.33;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("invalid dimension: need at least 2 users, got {0}")]
    InvalidDimension(usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

fn require(ok: bool, name: &'static str, reason: &str) -> Result<(), ChannelError> {
    if ok {
        Ok(())
    } else {
        Err(ChannelError::InvalidParam {
            name,
            reason: reason.to_string(),
        })
    }
}

/// Cable attenuation constant `r` (1/meter), either frequency-flat or a
/// piecewise-linear table over frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Attenuation {
    /// Single constant `r` for all frequencies.
    Constant(f64),
    /// `(f_hz, r_per_m)` breakpoints, linearly interpolated in `f`, clamped
    /// at the table ends.
    Table(Vec<(f64, f64)>),
}

impl Attenuation {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match self {
            Attenuation::Constant(r) => {
                require(r.is_finite() && *r >= 0.0, "attenuation", "r must be >= 0")
            }
            Attenuation::Table(rows) => {
                require(!rows.is_empty(), "attenuation", "table must be non-empty")?;
                for w in rows.windows(2) {
                    require(
                        w[0].0 < w[1].0,
                        "attenuation",
                        "table frequencies must be strictly increasing",
                    )?;
                }
                for (f, r) in rows {
                    require(
                        f.is_finite() && *f > 0.0 && r.is_finite() && *r >= 0.0,
                        "attenuation",
                        "table entries must be finite with f > 0, r >= 0",
                    )?;
                }
                Ok(())
            }
        }
    }

    /// Attenuation constant at frequency `f_hz`, interpolating table models.
    pub fn per_m_at(&self, f_hz: f64) -> f64 {
        match self {
            Attenuation::Constant(r) => *r,
            Attenuation::Table(rows) => {
                if f_hz <= rows[0].0 {
                    return rows[0].1;
                }
                if f_hz >= rows[rows.len() - 1].0 {
                    return rows[rows.len() - 1].1;
                }
                let k = rows.partition_point(|(f, _)| *f < f_hz);
                let (f0, r0) = rows[k - 1];
                let (f1, r1) = rows[k];
                r0 + (f_hz - f0) / (f1 - f0) * (r1 - r0)
            }
        }
    }
}

/// Direct-path model for one user: loop length and cable attenuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectModelParams {
    pub loop_length_m: f64,
    pub attenuation: Attenuation,
}

impl DirectModelParams {
    pub fn new(loop_length_m: f64, attenuation: Attenuation) -> Result<Self, ChannelError> {
        require(
            loop_length_m.is_finite() && loop_length_m >= 0.0,
            "loop_length_m",
            "must be >= 0",
        )?;
        attenuation.validate()?;
        Ok(Self {
            loop_length_m,
            attenuation,
        })
    }
}

/// Direct channel gain `exp(-l * r(f))`.
///
/// The cable model is real-valued; the gain is returned with zero phase
/// since only its magnitude enters any SINR expression.
pub fn direct_gain(params: &DirectModelParams, f_hz: f64) -> Complex64 {
    let r = params.attenuation.per_m_at(f_hz);
    Complex64::new((-params.loop_length_m * r).exp(), 0.0)
}

/// Coupling length between pairs, either a single binder-wide value or
/// per-user loop lengths combined pairwise by `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingLength {
    Equal(f64),
    PerUser(Vec<f64>),
}

impl CouplingLength {
    /// Coupling length `l_ij` for the pair `(i, j)`.
    pub fn between(&self, i: usize, j: usize) -> f64 {
        match self {
            CouplingLength::Equal(l) => *l,
            CouplingLength::PerUser(ls) => ls[i].min(ls[j]),
        }
    }

    /// The binder-wide length when all pairs share one; `None` for
    /// heterogeneous binders.
    pub fn equal(&self) -> Option<f64> {
        match self {
            CouplingLength::Equal(l) => Some(*l),
            CouplingLength::PerUser(_) => None,
        }
    }
}

/// Parametric FEXT coupling model at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FextModelParams {
    /// Cable coupling constant (1.59e-10 for 24 AWG).
    pub k_fext: f64,
    /// Std dev of the dB dispersion; 0 makes the magnitude deterministic.
    pub sigma_db: f64,
    pub coupling: CouplingLength,
    pub frequency_hz: f64,
}

impl FextModelParams {
    pub fn new(
        k_fext: f64,
        sigma_db: f64,
        coupling: CouplingLength,
        frequency_hz: f64,
    ) -> Result<Self, ChannelError> {
        require(k_fext.is_finite() && k_fext > 0.0, "k_fext", "must be > 0")?;
        require(
            sigma_db.is_finite() && sigma_db >= 0.0,
            "sigma_db",
            "must be >= 0",
        )?;
        require(
            frequency_hz.is_finite() && frequency_hz > 0.0,
            "frequency_hz",
            "must be > 0",
        )?;
        match &coupling {
            CouplingLength::Equal(l) => require(*l > 0.0, "coupling_length_m", "must be > 0")?,
            CouplingLength::PerUser(ls) => {
                require(!ls.is_empty(), "coupling_length_m", "must be non-empty")?;
                for l in ls {
                    require(*l > 0.0, "coupling_length_m", "lengths must be > 0")?;
                }
            }
        }
        Ok(Self {
            k_fext,
            sigma_db,
            coupling,
            frequency_hz,
        })
    }

    /// dB mean of the dispersion variable `chi`.
    pub fn mu_db(&self) -> f64 {
        COUPLING_MEAN_FACTOR_DB * self.sigma_db
    }

    /// Closed-form second moment `E|q_ij|^2` for coupling length `l_ij`.
    ///
    /// With `chi ~ N(mu, sigma^2)` in dB, `E[10^(-chi/10)] =
    /// exp(a*mu + a^2*sigma^2/2)` for `a = -ln(10)/10`.
    pub fn mean_sq_coupling(&self, l_ij_m: f64) -> f64 {
        let scale = self.k_fext * self.frequency_hz * l_ij_m.sqrt();
        let a = -0.1 * std::f64::consts::LN_10;
        let mu = self.mu_db();
        let s = self.sigma_db;
        scale * scale * (a * mu + 0.5 * a * a * s * s).exp()
    }
}

/// Deterministic part of the coupling magnitude at a fixed dispersion value
/// `chi_db`: `K_fext * f * sqrt(l) * 10^(-chi/20)`.
pub fn fext_magnitude(params: &FextModelParams, l_ij_m: f64, chi_db: f64) -> f64 {
    params.k_fext * params.frequency_hz * l_ij_m.sqrt() * 10f64.powf(-0.05 * chi_db)
}

/// Seed material for one trial. Identical `(seed, trial_index)` always
/// reproduces the identical realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub trial_index: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64, trial_index: u64) -> Self {
        Self { seed, trial_index }
    }

    /// Independent substream for one matrix entry, derived by counter-based
    /// splitting. Entry streams are pure functions of their indices, so draw
    /// order and parallel scheduling cannot change results.
    pub fn entry_rng(&self, entry: u64) -> ChaCha8Rng {
        let a = splitmix64(self.seed ^ splitmix64(self.trial_index));
        let b = splitmix64(a ^ splitmix64(entry.wrapping_mul(0xA076_1D64_78BD_642F)));
        ChaCha8Rng::seed_from_u64(b)
    }
}

/// One drawn channel: direct gains `d` and normalized FEXT matrix `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    d: DVector<Complex64>,
    q: DMatrix<Complex64>,
}

impl ChannelRealization {
    /// Assemble from parts, enforcing the zero-diagonal invariant on `q`.
    pub fn new(d: DVector<Complex64>, q: DMatrix<Complex64>) -> Result<Self, ChannelError> {
        if d.len() < 2 {
            return Err(ChannelError::InvalidDimension(d.len()));
        }
        require(
            q.nrows() == d.len() && q.ncols() == d.len(),
            "q",
            "must be m x m with m = len(d)",
        )?;
        require(
            (0..q.nrows()).all(|i| q[(i, i)] == Complex64::new(0.0, 0.0)),
            "q",
            "diagonal must be exactly zero",
        )?;
        Ok(Self { d, q })
    }

    pub fn users(&self) -> usize {
        self.d.len()
    }

    pub fn direct_gains(&self) -> &DVector<Complex64> {
        &self.d
    }

    pub fn fext(&self) -> &DMatrix<Complex64> {
        &self.q
    }

    /// Normalized channel matrix `H = I + Q` (unit diagonal by construction).
    pub fn normalized_matrix(&self) -> DMatrix<Complex64> {
        let mut h = self.q.clone();
        for i in 0..h.nrows() {
            h[(i, i)] = Complex64::new(1.0, 0.0);
        }
        h
    }

    /// Composite channel `H_c = H * D`, i.e. `[H_c]_ij = (delta_ij + q_ij) * d_j`.
    pub fn composite_matrix(&self) -> DMatrix<Complex64> {
        let mut hc = self.normalized_matrix();
        for j in 0..hc.ncols() {
            let dj = self.d[j];
            for i in 0..hc.nrows() {
                hc[(i, j)] *= dj;
            }
        }
        hc
    }

    /// Scale all off-diagonal couplings in place (diagonal of `q` stays zero).
    pub(crate) fn scale_fext(&mut self, factor: f64) {
        self.q.iter_mut().for_each(|z| *z *= factor);
    }

    /// Dump `H_c` as CSV with header `i,j,re,im`, one row per entry.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let hc = self.composite_matrix();
        writeln!(w, "i,j,re,im")?;
        for i in 0..hc.nrows() {
            for j in 0..hc.ncols() {
                writeln!(w, "{},{},{},{}", i, j, hc[(i, j)].re, hc[(i, j)].im)?;
            }
        }
        Ok(())
    }
}

/// Draw one normalized coupling `q_ij` for an equal-length binder.
///
/// The disturber direct gain cancels in the normalization, so the draw only
/// involves the coupling model itself.
pub fn draw_fext_coupling<R: Rng>(params: &FextModelParams, rng: &mut R) -> Complex64 {
    let l = params.coupling.between(0, 1);
    draw_coupling_with_length(params, l, rng)
}

fn draw_coupling_with_length<R: Rng>(
    params: &FextModelParams,
    l_ij_m: f64,
    rng: &mut R,
) -> Complex64 {
    let chi = if params.sigma_db == 0.0 {
        0.0
    } else {
        Normal::new(params.mu_db(), params.sigma_db)
            .expect("sigma_db validated at construction")
            .sample(rng)
    };
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(fext_magnitude(params, l_ij_m, chi), phi)
}

/// Draw a full m-user channel realization.
///
/// Off-diagonal couplings are i.i.d. (per-pair lengths permitting), the
/// diagonal of `q` is exactly zero, and the direct gains are evaluated from
/// the per-user models at the FEXT model frequency.
pub fn generate_realization(
    directs: &[DirectModelParams],
    fext: &FextModelParams,
    rng: RngSpec,
) -> Result<ChannelRealization, ChannelError> {
    let m = directs.len();
    if m < 2 {
        return Err(ChannelError::InvalidDimension(m));
    }
    if let CouplingLength::PerUser(ls) = &fext.coupling {
        require(
            ls.len() == m,
            "coupling_length_m",
            "per-user lengths must match user count",
        )?;
    }
    let d = DVector::from_iterator(
        m,
        directs.iter().map(|p| direct_gain(p, fext.frequency_hz)),
    );
    let q = draw_fext_matrix(m, fext, rng);
    ChannelRealization::new(d, q)
}

pub(crate) fn draw_fext_matrix(m: usize, fext: &FextModelParams, rng: RngSpec) -> DMatrix<Complex64> {
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex64::new(0.0, 0.0)
        } else {
            let mut entry_rng = rng.entry_rng((i * m + j) as u64);
            draw_coupling_with_length(fext, fext.coupling.between(i, j), &mut entry_rng)
        }
    })
}

/// Total average FEXT power `sigma^2 = (m - 1) * E|q_ij|^2`, in closed form.
///
/// For heterogeneous binders the per-pair second moments are averaged over
/// the off-diagonal positions before scaling.
pub fn sigma_total(fext: &FextModelParams, m: usize) -> f64 {
    assert!(m >= 2, "sigma_total requires at least 2 users");
    match &fext.coupling {
        CouplingLength::Equal(l) => (m - 1) as f64 * fext.mean_sq_coupling(*l),
        CouplingLength::PerUser(ls) => {
            debug_assert_eq!(ls.len(), m);
            let mut sum = 0.0;
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        sum += fext.mean_sq_coupling(fext.coupling.between(i, j));
                    }
                }
            }
            sum / m as f64
        }
    }
}

/// Channel scenario as read from a TOML config file.
///
/// ```toml
/// users = 20
/// loop_length_m = 100.0           # or a per-user list
/// k_fext = 1.59e-10
/// sigma_db = 5.0
/// seed = 42
///
/// [attenuation]
/// r_per_m = 0.007                 # or: table = [[1.0e6, 0.003], ...]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelScenario {
    pub users: usize,
    pub loop_length_m: LoopLengths,
    pub attenuation: AttenuationConfig,
    pub k_fext: f64,
    pub sigma_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoopLengths {
    Equal(f64),
    PerUser(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuationConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_per_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<(f64, f64)>>,
}

impl ChannelScenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ChannelError> {
        let scenario: ChannelScenario =
            toml::from_str(text).map_err(|e| ChannelError::InvalidParam {
                name: "scenario",
                reason: e.to_string(),
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.users < 2 {
            return Err(ChannelError::InvalidDimension(self.users));
        }
        if let LoopLengths::PerUser(ls) = &self.loop_length_m {
            require(
                ls.len() == self.users,
                "loop_length_m",
                "per-user list must match `users`",
            )?;
        }
        self.attenuation_model()?.validate()?;
        require(
            self.k_fext.is_finite() && self.k_fext > 0.0,
            "k_fext",
            "must be > 0",
        )?;
        require(
            self.sigma_db.is_finite() && self.sigma_db >= 0.0,
            "sigma_db",
            "must be >= 0",
        )?;
        Ok(())
    }

    pub fn attenuation_model(&self) -> Result<Attenuation, ChannelError> {
        match (&self.attenuation.r_per_m, &self.attenuation.table) {
            (Some(r), None) => Ok(Attenuation::Constant(*r)),
            (None, Some(t)) => Ok(Attenuation::Table(t.clone())),
            _ => Err(ChannelError::InvalidParam {
                name: "attenuation",
                reason: "exactly one of `r_per_m` or `table` must be set".to_string(),
            }),
        }
    }

    pub fn loop_length(&self, user: usize) -> f64 {
        match &self.loop_length_m {
            LoopLengths::Equal(l) => *l,
            LoopLengths::PerUser(ls) => ls[user],
        }
    }

    /// Per-user direct-path models.
    pub fn direct_params(&self) -> Result<Vec<DirectModelParams>, ChannelError> {
        let att = self.attenuation_model()?;
        (0..self.users)
            .map(|u| DirectModelParams::new(self.loop_length(u), att.clone()))
            .collect()
    }

    /// FEXT model at one tone frequency.
    pub fn fext_params(&self, f_hz: f64) -> Result<FextModelParams, ChannelError> {
        let coupling = match &self.loop_length_m {
            LoopLengths::Equal(l) => CouplingLength::Equal(*l),
            LoopLengths::PerUser(ls) => CouplingLength::PerUser(ls.clone()),
        };
        FextModelParams::new(self.k_fext, self.sigma_db, coupling, f_hz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn equal_fext(k: f64, sigma_db: f64, l: f64, f: f64) -> FextModelParams {
        FextModelParams::new(k, sigma_db, CouplingLength::Equal(l), f).unwrap()
    }

    fn flat_directs(m: usize) -> Vec<DirectModelParams> {
        vec![DirectModelParams::new(0.0, Attenuation::Constant(0.0)).unwrap(); m]
    }

    #[test]
    fn direct_gain_zero_length_is_unity() {
        let p = DirectModelParams::new(0.0, Attenuation::Constant(5.0)).unwrap();
        assert_eq!(direct_gain(&p, 1e6), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn direct_gain_exponential() {
        let p = DirectModelParams::new(100.0, Attenuation::Constant(0.01)).unwrap();
        assert_relative_eq!(direct_gain(&p, 1e6).re, (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn direct_gain_table_interpolation() {
        // Hand interpolation between the two bracketing breakpoints:
        // r(10 MHz) = 0.004 + (10-1)/(20-1) * (0.012-0.004) = 0.0077894736842...
        let p = DirectModelParams::new(
            590.0,
            Attenuation::Table(vec![(1e6, 0.004), (20e6, 0.012)]),
        )
        .unwrap();
        let r = 0.004 + (10e6 - 1e6) / (20e6 - 1e6) * (0.012 - 0.004);
        assert_relative_eq!(p.attenuation.per_m_at(10e6), r, max_relative = 1e-15);
        assert_relative_eq!(
            direct_gain(&p, 10e6).re,
            (-590.0 * r).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(direct_gain(&p, 10e6).re, 0.010094248490890850, max_relative = 1e-12);
        // Clamped outside the table.
        assert_eq!(p.attenuation.per_m_at(1e3), 0.004);
        assert_eq!(p.attenuation.per_m_at(1e9), 0.012);
    }

    #[test]
    fn coupling_magnitude_deterministic_when_sigma_zero() {
        let p = equal_fext(1.59e-10, 0.0, 100.0, 1e7);
        let mut rng = RngSpec::new(1, 0).entry_rng(0);
        let q = draw_fext_coupling(&p, &mut rng);
        assert_relative_eq!(q.norm(), 1.59e-10 * 1e7 * 10.0, max_relative = 1e-14);
    }

    #[test]
    fn coupling_magnitude_at_mean_dispersion() {
        // K*f*sqrt(l)*10^(-0.05*2.33) for sigma_db = 1, chi at its mean.
        let p = equal_fext(1.59e-10, 1.0, 100.0, 1e7);
        let mag = fext_magnitude(&p, 100.0, p.mu_db());
        assert_relative_eq!(mag, 0.012158979446177470, max_relative = 1e-12);
    }

    #[test]
    fn coupling_second_moment_matches_sampling() {
        let p = equal_fext(1.59e-10, 5.0, 100.0, 1e7);
        let expect = p.mean_sq_coupling(100.0);
        let spec = RngSpec::new(0xFEE1_600D, 0);
        let n = 1_000_000u64;
        let mean = (0..n)
            .map(|k| {
                let mut rng = spec.entry_rng(k);
                draw_fext_coupling(&p, &mut rng).norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - expect).abs() / expect < 0.01,
            "sampled {mean} vs closed form {expect}"
        );
    }

    #[test]
    fn coupling_phase_is_uniform() {
        // Chi-squared uniformity over 16 bins; critical value for 15 dof at
        // 1% significance is 30.578.
        let p = equal_fext(1.59e-10, 5.0, 100.0, 1e7);
        let spec = RngSpec::new(0xD15C_0BA1, 7);
        let n = 100_000usize;
        let mut bins = [0u64; 16];
        for k in 0..n {
            let mut rng = spec.entry_rng(k as u64);
            let q = draw_fext_coupling(&p, &mut rng);
            let phi = q.arg().rem_euclid(std::f64::consts::TAU);
            let b = ((phi / std::f64::consts::TAU * 16.0) as usize).min(15);
            bins[b] += 1;
        }
        let expect = n as f64 / 16.0;
        let chi2: f64 = bins
            .iter()
            .map(|&c| {
                let d = c as f64 - expect;
                d * d / expect
            })
            .sum();
        assert!(chi2 < 30.578, "chi-squared statistic {chi2} exceeds 1% critical value");
    }

    #[test]
    fn realization_diagonal_is_exactly_zero() {
        let fext = equal_fext(1.59e-10, 5.0, 100.0, 1e7);
        let r = generate_realization(&flat_directs(8), &fext, RngSpec::new(3, 1)).unwrap();
        for i in 0..8 {
            assert_eq!(r.fext()[(i, i)], Complex64::new(0.0, 0.0));
            assert_eq!(r.normalized_matrix()[(i, i)], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn realization_is_deterministic() {
        let fext = equal_fext(1.59e-10, 5.0, 100.0, 1e7);
        let a = generate_realization(&flat_directs(5), &fext, RngSpec::new(42, 9)).unwrap();
        let b = generate_realization(&flat_directs(5), &fext, RngSpec::new(42, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate_realization(&flat_directs(5), &fext, RngSpec::new(42, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_sigma_gives_equal_magnitudes() {
        let fext = equal_fext(1.59e-10, 0.0, 100.0, 1e7);
        let r = generate_realization(&flat_directs(2), &fext, RngSpec::new(1, 0)).unwrap();
        assert_relative_eq!(
            r.fext()[(0, 1)].norm(),
            r.fext()[(1, 0)].norm(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_single_user() {
        let fext = equal_fext(1.59e-10, 1.0, 100.0, 1e7);
        let err = generate_realization(&flat_directs(1), &fext, RngSpec::new(1, 0)).unwrap_err();
        assert_eq!(err, ChannelError::InvalidDimension(1));
    }

    #[test]
    fn empirical_total_power_matches_sigma_total() {
        let fext = equal_fext(1.59e-10, 5.0, 100.0, 1e7);
        let m = 20;
        let expect = sigma_total(&fext, m);
        let trials = 500;
        let mut acc = 0.0;
        for t in 0..trials {
            let r = generate_realization(&flat_directs(m), &fext, RngSpec::new(77, t)).unwrap();
            acc += r.fext().iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let mean_sq = acc / (trials as f64 * (m * (m - 1)) as f64);
        let emp = (m - 1) as f64 * mean_sq;
        assert!(
            (emp - expect).abs() / expect < 0.02,
            "empirical {emp} vs closed form {expect}"
        );
    }

    #[test]
    fn sigma_total_scales_linearly_in_users() {
        let fext = equal_fext(1.59e-10, 2.0, 50.0, 1e7);
        let e1 = sigma_total(&fext, 2);
        assert_relative_eq!(e1, fext.mean_sq_coupling(50.0), max_relative = 1e-15);
        assert_relative_eq!(sigma_total(&fext, 11), 10.0 * e1, max_relative = 1e-12);
    }

    #[test]
    fn sigma_total_grows_with_frequency_and_crosses_unity() {
        // 24 AWG-style parameters on a long loop: total FEXT power grows with
        // frequency and exceeds 1 in the upper G.fast band.
        let mut prev = 0.0;
        for k in 1..=10 {
            let f = 21.2e6 * k as f64;
            let fext = equal_fext(1.59e-10, 3.0, 500.0, f);
            let s2 = sigma_total(&fext, 10);
            assert!(s2 > prev, "sigma_total must increase with f");
            prev = s2;
        }
        assert!(prev > 1.0, "sigma_total at 212 MHz should exceed 1, got {prev}");
        let mid = sigma_total(&equal_fext(1.59e-10, 3.0, 500.0, 1e8), 10);
        assert_relative_eq!(mid, 0.28881722546368394, max_relative = 1e-12);
    }

    #[test]
    fn sigma_total_closed_form_matches_sampling() {
        let fext = equal_fext(1.59e-10, 3.0, 500.0, 1e8);
        let expect = sigma_total(&fext, 10);
        let spec = RngSpec::new(0xCAD5_5CAD, 0);
        let n = 1_000_000u64;
        let mean = (0..n)
            .map(|k| {
                let mut rng = spec.entry_rng(k);
                draw_fext_coupling(&fext, &mut rng).norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!(((9.0 * mean) - expect).abs() / expect < 0.01);
    }

    #[test]
    fn heterogeneous_lengths_use_pairwise_min() {
        let c = CouplingLength::PerUser(vec![100.0, 300.0, 200.0]);
        assert_eq!(c.between(0, 1), 100.0);
        assert_eq!(c.between(1, 2), 200.0);
        assert_eq!(c.between(2, 1), 200.0);
    }

    #[test]
    fn csv_dump_has_header_and_all_entries() {
        let fext = equal_fext(1.59e-10, 1.0, 100.0, 1e7);
        let r = generate_realization(&flat_directs(3), &fext, RngSpec::new(5, 0)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,j,re,im");
        assert_eq!(lines.len(), 1 + 9);
        assert!(lines[1].starts_with("0,0,"));
    }

    #[test]
    fn scenario_round_trip() {
        let text = r#"
users = 4
loop_length_m = 150.0
k_fext = 1.59e-10
sigma_db = 5.0
seed = 7

[attenuation]
r_per_m = 0.007
"#;
        let sc = ChannelScenario::from_toml_str(text).unwrap();
        assert_eq!(sc.users, 4);
        assert_eq!(sc.loop_length(2), 150.0);
        let fext = sc.fext_params(1e7).unwrap();
        assert_eq!(fext.coupling.equal(), Some(150.0));
        let directs = sc.direct_params().unwrap();
        assert_eq!(directs.len(), 4);
    }

    #[test]
    fn scenario_rejects_unknown_keys() {
        let text = r#"
users = 4
loop_length_m = 150.0
k_fext = 1.59e-10
sigma_db = 5.0
seed = 7
bogus_key = 1

[attenuation]
r_per_m = 0.007
"#;
        let err = ChannelScenario::from_toml_str(text).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("bogus_key"), "diagnostic must name the key: {msg}");
    }
}
