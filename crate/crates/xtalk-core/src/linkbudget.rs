//! DMT link budget: tone grids, PSD masks, Shannon-gap bit loading and
//! rate-reach sweeps.
//!
//! Per-tone SINRs (exact Monte Carlo or deterministic equivalents) are
//! converted to loadable bits through the effective gap
//! `gap_db + margin_db - coding_gain_db` and the bit cap, then aggregated
//! over the tone grid into bits/second.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{asymptotic_sinr, log2_1p, CancelerKind};
use crate::cancelers::{mmse_report, zf_report};
use crate::channel::{
    direct_gain, sigma_total, ChannelScenario, DirectModelParams, RngSpec,
};
use crate::montecarlo::MonteCarloError;

#[derive(Debug, Error, PartialEq)]
pub enum LinkBudgetError {
    #[error("frequency {f_hz} Hz is outside the band plan")]
    OutOfBand { f_hz: f64 },
    #[error("invalid dimension: expected {expected} per-tone values, got {got}")]
    InvalidDimension { expected: usize, got: usize },
    #[error("invalid band plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
}

/// Band plan: tone grid, PSD mask and link-budget terms.
///
/// ```toml
/// tone_spacing_hz = 51750.0
/// f_start_hz = 2.2e6
/// f_stop_hz = 212e6
/// psd_mask = [[30e6, -65.0], [106e6, -76.0], [212e6, -79.0]]
/// noise_psd_dbm_hz = -140.0
/// margin_db = 6.0
/// coding_gain_db = 5.0
/// shannon_gap_db = 9.75
/// bit_cap = 12
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandPlan {
    pub tone_spacing_hz: f64,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    /// `(f_upper_hz, psd_dbm_hz)` segments; a tone at `f` uses the first
    /// segment with `f <= f_upper_hz`, so a breakpoint frequency itself gets
    /// the level of the band it closes.
    pub psd_mask: Vec<(f64, f64)>,
    pub noise_psd_dbm_hz: f64,
    pub margin_db: f64,
    pub coding_gain_db: f64,
    pub shannon_gap_db: f64,
    pub bit_cap: u32,
}

impl BandPlan {
    pub fn from_toml_str(text: &str) -> Result<Self, LinkBudgetError> {
        let plan: BandPlan =
            toml::from_str(text).map_err(|e| LinkBudgetError::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), LinkBudgetError> {
        if !(self.tone_spacing_hz > 0.0) {
            return Err(LinkBudgetError::InvalidPlan("tone_spacing_hz must be > 0".into()));
        }
        if !(self.f_start_hz >= 0.0 && self.f_stop_hz > self.f_start_hz) {
            return Err(LinkBudgetError::InvalidPlan(
                "need 0 <= f_start_hz < f_stop_hz".into(),
            ));
        }
        if self.psd_mask.is_empty() {
            return Err(LinkBudgetError::InvalidPlan("psd_mask must be non-empty".into()));
        }
        if self.psd_mask.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(LinkBudgetError::InvalidPlan(
                "psd_mask breakpoints must be strictly increasing".into(),
            ));
        }
        if self.bit_cap == 0 {
            return Err(LinkBudgetError::InvalidPlan("bit_cap must be > 0".into()));
        }
        Ok(())
    }

    /// Number of tones: midpoints `f_start + (k + 0.5) * spacing` inside the
    /// band.
    pub fn tone_count(&self) -> usize {
        ((self.f_stop_hz - self.f_start_hz) / self.tone_spacing_hz).floor() as usize
    }

    pub fn tone_midpoints(&self) -> Vec<f64> {
        (0..self.tone_count())
            .map(|k| self.f_start_hz + (k as f64 + 0.5) * self.tone_spacing_hz)
            .collect()
    }

    /// Transmit PSD (dBm/Hz) at `f`: the first mask segment whose upper edge
    /// is at or above `f`.
    pub fn psd_at(&self, f_hz: f64) -> Result<f64, LinkBudgetError> {
        if f_hz < self.f_start_hz || f_hz > self.f_stop_hz {
            return Err(LinkBudgetError::OutOfBand { f_hz });
        }
        self.psd_mask
            .iter()
            .find(|(f_upper, _)| f_hz <= *f_upper)
            .map(|(_, psd)| *psd)
            .ok_or(LinkBudgetError::OutOfBand { f_hz })
    }
}

/// Effective Shannon gap, linear. Clamped at 1 (0 dB) when the coding gain
/// exceeds gap plus margin, with the clamp flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveGap {
    pub linear: f64,
    pub clamped: bool,
}

/// `gap_eff_dB = shannon_gap_db + margin_db - coding_gain_db`, returned
/// linear.
pub fn effective_gap(plan: &BandPlan) -> EffectiveGap {
    let db = plan.shannon_gap_db + plan.margin_db - plan.coding_gain_db;
    let linear = 10f64.powf(db / 10.0);
    if linear < 1.0 {
        EffectiveGap { linear: 1.0, clamped: true }
    } else {
        EffectiveGap { linear, clamped: false }
    }
}

/// Loadable bits on one tone: `min(bit_cap, log2(1 + sinr/gap))`, floored
/// at 0.
pub fn bits_per_tone(sinr_linear: f64, plan: &BandPlan) -> f64 {
    assert!(sinr_linear >= 0.0, "sinr must be nonnegative");
    let gap = effective_gap(plan).linear;
    log2_1p(sinr_linear / gap).min(plan.bit_cap as f64).max(0.0)
}

/// Single-wire SNR on one tone:
/// `eta(f) = 10^((psd(f) - noise_psd)/10) * |direct_gain(f)|^2`.
pub fn tone_sw_snr(
    plan: &BandPlan,
    direct: &DirectModelParams,
    f_hz: f64,
) -> Result<f64, LinkBudgetError> {
    let psd = plan.psd_at(f_hz)?;
    let gain = direct_gain(direct, f_hz).norm_sqr();
    Ok(10f64.powf((psd - plan.noise_psd_dbm_hz) / 10.0) * gain)
}

/// Aggregate data rate `tone_spacing * sum(bits)` in bits/second.
pub fn aggregate_rate(per_tone_bits: &[f64], plan: &BandPlan) -> Result<f64, LinkBudgetError> {
    let expected = plan.tone_count();
    if per_tone_bits.len() != expected {
        return Err(LinkBudgetError::InvalidDimension {
            expected,
            got: per_tone_bits.len(),
        });
    }
    Ok(plan.tone_spacing_hz * per_tone_bits.iter().sum::<f64>())
}

/// Where a rate figure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    ExactMc,
    Asymptotic,
}

impl std::fmt::Display for RateSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RateSource::ExactMc => "EXACT_MC",
            RateSource::Asymptotic => "ASYMPTOTIC",
        })
    }
}

/// Which evaluation paths a sweep should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    ExactMc,
    Asymptotic,
    Both,
}

impl SweepMode {
    fn sources(self) -> &'static [RateSource] {
        match self {
            SweepMode::ExactMc => &[RateSource::ExactMc],
            SweepMode::Asymptotic => &[RateSource::Asymptotic],
            SweepMode::Both => &[RateSource::ExactMc, RateSource::Asymptotic],
        }
    }
}

/// One point of a rate-reach curve: mean user rate at one loop length.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReachPoint {
    pub loop_length_m: f64,
    pub canceler: CancelerKind,
    pub source: RateSource,
    /// bits/second per user, averaged over users and trials.
    pub rate_bps: f64,
}

/// Per-tone mean spectral efficiency entry (bits on that tone).
#[derive(Debug, Clone, PartialEq)]
pub struct ToneEfficiencyPoint {
    pub f_hz: f64,
    pub canceler: CancelerKind,
    pub source: RateSource,
    pub bits: f64,
}

fn tone_exact_bits(
    scenario: &ChannelScenario,
    plan: &BandPlan,
    directs: &[DirectModelParams],
    f_hz: f64,
    eta: f64,
    trials: usize,
    tone_index: usize,
    tone_count: usize,
) -> Result<(f64, f64), LinkBudgetError> {
    // Per-trial, per-user bits averaged; noise variance normalized to 1 and
    // the transmit scale folded into eta via p = eta (unit direct gains are
    // NOT assumed: the realization carries the true gains, and p/noise is
    // chosen so that eta_1 matches the tone budget for the reference user).
    let fext = scenario.fext_params(f_hz)?;
    let d1 = direct_gain(&directs[0], f_hz).norm_sqr();
    let p = eta / d1;
    let mut zf_acc = 0.0;
    let mut mmse_acc = 0.0;
    for trial in 0..trials as u64 {
        let rng = RngSpec::new(scenario.seed, trial * tone_count as u64 + tone_index as u64);
        let r = crate::channel::generate_realization(directs, &fext, rng)
            .map_err(MonteCarloError::Channel)?;
        let zf = zf_report(&r, p, 1.0).map_err(MonteCarloError::Canceler)?;
        let mmse = mmse_report(&r, p, 1.0).map_err(MonteCarloError::Canceler)?;
        zf_acc += zf.sinr.iter().map(|&s| bits_per_tone(s, plan)).sum::<f64>() / zf.sinr.len() as f64;
        mmse_acc +=
            mmse.sinr.iter().map(|&s| bits_per_tone(s, plan)).sum::<f64>() / mmse.sinr.len() as f64;
    }
    Ok((zf_acc / trials as f64, mmse_acc / trials as f64))
}

/// Spectral efficiency across the tone grid for one scenario, in loadable
/// bits per tone.
pub fn spectral_efficiency(
    scenario: &ChannelScenario,
    plan: &BandPlan,
    trials: usize,
    mode: SweepMode,
) -> Result<Vec<ToneEfficiencyPoint>, LinkBudgetError> {
    scenario.validate()?;
    plan.validate()?;
    let directs = scenario.direct_params()?;
    let tones = plan.tone_midpoints();
    let tone_count = tones.len();
    let per_tone: Result<Vec<Vec<ToneEfficiencyPoint>>, LinkBudgetError> = tones
        .par_iter()
        .enumerate()
        .map(|(k, &f)| {
            let eta = tone_sw_snr(plan, &directs[0], f)?;
            let sigma2 = sigma_total(&scenario.fext_params(f)?, scenario.users);
            let mut rows = Vec::new();
            for &source in mode.sources() {
                match source {
                    RateSource::Asymptotic => {
                        for kind in [CancelerKind::Zf, CancelerKind::Mmse] {
                            rows.push(ToneEfficiencyPoint {
                                f_hz: f,
                                canceler: kind,
                                source,
                                bits: bits_per_tone(asymptotic_sinr(eta, sigma2, kind), plan),
                            });
                        }
                    }
                    RateSource::ExactMc => {
                        let (zf_bits, mmse_bits) = tone_exact_bits(
                            scenario, plan, &directs, f, eta, trials, k, tone_count,
                        )?;
                        rows.push(ToneEfficiencyPoint {
                            f_hz: f,
                            canceler: CancelerKind::Zf,
                            source,
                            bits: zf_bits,
                        });
                        rows.push(ToneEfficiencyPoint {
                            f_hz: f,
                            canceler: CancelerKind::Mmse,
                            source,
                            bits: mmse_bits,
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect();
    Ok(per_tone?.into_iter().flatten().collect())
}

/// Rate-reach sweep: mean user rate at each loop length, for both cancelers
/// and the requested evaluation paths.
///
/// Every user sits at the swept length. Per tone, the total FEXT power is
/// computed analytically from the coupling model; the exact path averages
/// canceler reports over seeded trials.
pub fn rate_reach_sweep(
    lengths_m: &[f64],
    scenario: &ChannelScenario,
    plan: &BandPlan,
    trials: usize,
    mode: SweepMode,
) -> Result<Vec<RateReachPoint>, LinkBudgetError> {
    assert!(!lengths_m.is_empty(), "length grid must be non-empty");
    scenario.validate()?;
    plan.validate()?;
    let mut out = Vec::new();
    for &length in lengths_m {
        let mut sc = scenario.clone();
        sc.loop_length_m = crate::channel::LoopLengths::Equal(length);
        let points = spectral_efficiency(&sc, plan, trials, mode)?;
        for &source in mode.sources() {
            for kind in [CancelerKind::Zf, CancelerKind::Mmse] {
                let bits: Vec<f64> = points
                    .iter()
                    .filter(|p| p.canceler == kind && p.source == source)
                    .map(|p| p.bits)
                    .collect();
                let rate = aggregate_rate(&bits, plan)?;
                out.push(RateReachPoint {
                    loop_length_m: length,
                    canceler: kind,
                    source,
                    rate_bps: rate,
                });
            }
        }
    }
    Ok(out)
}

/// Rate-reach CSV: `length_m,canceler,source,mean_rate_mbps`.
pub fn write_rate_reach_csv<W: Write>(points: &[RateReachPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "length_m,canceler,source,mean_rate_mbps")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            p.loop_length_m,
            p.canceler,
            p.source,
            p.rate_bps / 1e6
        )?;
    }
    Ok(())
}

/// Spectral-efficiency CSV: `f_mhz,canceler,source,bits_per_tone`.
pub fn write_spectral_csv<W: Write>(
    points: &[ToneEfficiencyPoint],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "f_mhz,canceler,source,bits_per_tone")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.f_hz / 1e6, p.canceler, p.source, p.bits)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Attenuation, AttenuationConfig, LoopLengths};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gfast_plan() -> BandPlan {
        BandPlan {
            tone_spacing_hz: 51750.0,
            f_start_hz: 2.2e6,
            f_stop_hz: 212e6,
            psd_mask: vec![(30e6, -65.0), (106e6, -76.0), (212e6, -79.0)],
            noise_psd_dbm_hz: -140.0,
            margin_db: 6.0,
            coding_gain_db: 5.0,
            shannon_gap_db: 9.75,
            bit_cap: 12,
        }
    }

    fn binder_scenario(users: usize, length: f64) -> ChannelScenario {
        ChannelScenario {
            users,
            loop_length_m: LoopLengths::Equal(length),
            attenuation: AttenuationConfig {
                r_per_m: None,
                table: Some(vec![
                    (1e6, 0.00288),
                    (10e6, 0.00911),
                    (50e6, 0.02036),
                    (100e6, 0.02880),
                    (150e6, 0.03527),
                    (212e6, 0.04193),
                ]),
            },
            k_fext: 1.59e-10,
            sigma_db: 5.0,
            seed: 7,
        }
    }

    #[test]
    fn effective_gap_table_values() {
        let plan = gfast_plan();
        let g = effective_gap(&plan);
        assert!(!g.clamped);
        assert_relative_eq!(g.linear, 11.885022274370185, max_relative = 1e-12);
        let mut zero = plan.clone();
        zero.shannon_gap_db = 0.0;
        zero.margin_db = 0.0;
        zero.coding_gain_db = 0.0;
        assert_eq!(effective_gap(&zero).linear, 1.0);
        let mut clamped = plan;
        clamped.coding_gain_db = 20.0;
        let g = effective_gap(&clamped);
        assert!(g.clamped);
        assert_eq!(g.linear, 1.0);
    }

    #[test]
    fn bits_per_tone_known_points() {
        let plan = gfast_plan();
        assert_eq!(bits_per_tone(0.0, &plan), 0.0);
        let gap = effective_gap(&plan).linear;
        assert_relative_eq!(bits_per_tone(gap, &plan), 1.0, max_relative = 1e-14);
        // 60 dB SINR saturates the 12-bit cap.
        assert_eq!(bits_per_tone(1e6, &plan), 12.0);
    }

    #[test]
    fn psd_mask_breakpoint_is_inclusive() {
        let plan = gfast_plan();
        assert_eq!(plan.psd_at(30e6).unwrap(), -65.0);
        assert_eq!(plan.psd_at(30e6 + 1.0).unwrap(), -76.0);
        assert_eq!(plan.psd_at(106e6).unwrap(), -76.0);
        assert!(matches!(
            plan.psd_at(1e6),
            Err(LinkBudgetError::OutOfBand { .. })
        ));
        assert!(plan.psd_at(213e6).is_err());
    }

    #[test]
    fn tone_sw_snr_composition() {
        let plan = gfast_plan();
        // Flat unity gain, matched PSDs.
        let mut flat = plan.clone();
        flat.psd_mask = vec![(212e6, -140.0)];
        let d0 = DirectModelParams::new(0.0, Attenuation::Constant(0.0)).unwrap();
        assert_relative_eq!(tone_sw_snr(&flat, &d0, 10e6).unwrap(), 1.0, max_relative = 1e-12);
        // -65 over -140 with unit gain: 75 dB.
        let eta = tone_sw_snr(&plan, &d0, 10e6).unwrap();
        assert_relative_eq!(eta, 10f64.powf(7.5), max_relative = 1e-12);
        // Composition with table attenuation at 50 MHz, 100 m: independent
        // hand arithmetic of the same budget.
        let sc = binder_scenario(2, 100.0);
        let direct = sc.direct_params().unwrap()[0].clone();
        let got = tone_sw_snr(&plan, &direct, 50e6).unwrap();
        let r: f64 = 0.02036;
        let expect = 10f64.powf((-76.0 + 140.0) / 10.0) * (-2.0 * 100.0 * r).exp();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn aggregate_rate_values() {
        let plan = gfast_plan();
        let n = plan.tone_count();
        assert_eq!(aggregate_rate(&vec![0.0; n], &plan).unwrap(), 0.0);
        assert!(matches!(
            aggregate_rate(&[1.0, 2.0], &plan),
            Err(LinkBudgetError::InvalidDimension { .. })
        ));
        // 2048 capped tones at G.fast spacing: 2048 * 12 * 51750 bps.
        let mut small = plan.clone();
        small.f_start_hz = 0.0;
        small.f_stop_hz = 2048.0 * 51750.0;
        assert_eq!(small.tone_count(), 2048);
        let rate = aggregate_rate(&vec![12.0; 2048], &small).unwrap();
        assert_relative_eq!(rate, 1.271808e9, max_relative = 1e-12);
        // Single VDSL tone.
        let mut one = plan;
        one.tone_spacing_hz = 4312.5;
        one.f_start_hz = 0.0;
        one.f_stop_hz = 4312.5;
        assert_eq!(aggregate_rate(&[1.0], &one).unwrap(), 4312.5);
    }

    #[test]
    fn zero_length_zero_fext_hits_cap_on_both_paths() {
        // Zero-length loops: |d| = 1 and sqrt(l) = 0 kills the coupling, so
        // sigma2 = 0 and both paths sit at the cap-limited maximum.
        let plan = BandPlan {
            f_stop_hz: 10e6,
            psd_mask: vec![(212e6, -65.0)],
            ..gfast_plan()
        };
        // A zero coupling length sits outside the FEXT model domain, so the
        // sweep uses the smallest positive length; attenuation and coupling
        // are both negligible there.
        let sc = binder_scenario(4, 100.0);
        let pts = rate_reach_sweep(&[f64::MIN_POSITIVE], &sc, &plan, 2, SweepMode::Both).unwrap();
        let cap_rate = plan.tone_count() as f64 * 12.0 * plan.tone_spacing_hz;
        for p in &pts {
            assert_relative_eq!(p.rate_bps, cap_rate, max_relative = 1e-12);
        }
    }

    #[test]
    fn rates_non_increasing_in_length_and_sources_agree() {
        let plan = gfast_plan();
        let sc = binder_scenario(10, 100.0);
        let lengths = [100.0, 200.0, 300.0];
        let pts = rate_reach_sweep(&lengths, &sc, &plan, 3, SweepMode::Both).unwrap();
        for kind in [CancelerKind::Zf, CancelerKind::Mmse] {
            for src in [RateSource::ExactMc, RateSource::Asymptotic] {
                let series: Vec<f64> = pts
                    .iter()
                    .filter(|p| p.canceler == kind && p.source == src)
                    .map(|p| p.rate_bps)
                    .collect();
                assert_eq!(series.len(), lengths.len());
                for w in series.windows(2) {
                    assert!(w[1] <= w[0] * (1.0 + 1e-9), "{kind}/{src}: rate grew with length");
                }
            }
        }
        // MMSE asymptotic within 10% of exact MC.
        for (&l, _) in lengths.iter().zip(0..) {
            let get = |src| {
                pts.iter()
                    .find(|p| {
                        p.loop_length_m == l && p.canceler == CancelerKind::Mmse && p.source == src
                    })
                    .unwrap()
                    .rate_bps
            };
            let exact = get(RateSource::ExactMc);
            let asym = get(RateSource::Asymptotic);
            assert!(
                (asym - exact).abs() / exact < 0.10,
                "length {l}: asym {asym} vs exact {exact}"
            );
        }
    }

    #[test]
    fn zf_asymptotic_vanishes_past_critical_power_while_mmse_positive() {
        let plan = gfast_plan();
        let sc = binder_scenario(20, 400.0);
        let pts = spectral_efficiency(&sc, &plan, 1, SweepMode::Asymptotic).unwrap();
        let mut saw_critical = false;
        for f in plan.tone_midpoints() {
            let sigma2 = sigma_total(&sc.fext_params(f).unwrap(), sc.users);
            if sigma2 >= 1.0 {
                saw_critical = true;
                let zf = pts
                    .iter()
                    .find(|p| p.f_hz == f && p.canceler == CancelerKind::Zf)
                    .unwrap();
                let mmse = pts
                    .iter()
                    .find(|p| p.f_hz == f && p.canceler == CancelerKind::Mmse)
                    .unwrap();
                assert_eq!(zf.bits, 0.0, "ZF bits must vanish at sigma2 = {sigma2}");
                assert!(mmse.bits > 0.0, "MMSE bits must stay positive");
            }
        }
        assert!(saw_critical, "test scenario never crossed sigma2 = 1");
    }

    #[test]
    fn spectral_series_zf_below_mmse() {
        let plan = gfast_plan();
        let sc = binder_scenario(10, 200.0);
        let pts = spectral_efficiency(&sc, &plan, 1, SweepMode::Asymptotic).unwrap();
        let tones = plan.tone_count();
        assert_eq!(pts.len(), tones * 2);
        for pair in pts.chunks(2) {
            let (zf, mmse) = (&pair[0], &pair[1]);
            assert_eq!(zf.canceler, CancelerKind::Zf);
            assert!(zf.bits <= mmse.bits + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bits_monotone_and_capped(a in 0.0f64..1e9, b in 0.0f64..1e9) {
            let plan = gfast_plan();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let bl = bits_per_tone(lo, &plan);
            let bh = bits_per_tone(hi, &plan);
            prop_assert!(bl <= bh);
            prop_assert!(bh <= 12.0);
        }
    }
}
