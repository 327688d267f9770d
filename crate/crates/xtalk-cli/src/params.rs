//! Resolved experiment parameters, execution and the run manifest.
//!
//! Every run reduces to a [`Params`] value that contains *all* inputs
//! affecting the output bytes (embedded scenario and plan included). The
//! manifest written next to each CSV records the tool version, the SHA-256
//! of the canonical parameter serialization and the parameters themselves,
//! so `xtalk rerun <manifest>` reproduces the CSV byte for byte.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use xtalk_core::asymptotics::{
    asymptotic_rate, gamma_deterministic, mmse_regime_approx, mmse_snr_asymptotic,
    AsymptoticQuery, CancelerKind, GammaEquivalent, Regularizer,
};
use xtalk_core::channel::{
    generate_realization, ChannelScenario, CouplingLength, FextModelParams, RngSpec,
};
use xtalk_core::linkbudget::{
    rate_reach_sweep, spectral_efficiency, write_rate_reach_csv, write_spectral_csv, BandPlan,
    SweepMode,
};
use xtalk_core::montecarlo::{
    convergence_experiment, scatter_experiment, write_convergence_csv, write_scatter_csv,
    SequenceSpec,
};

use crate::CliError;

/// Base coupling shape used by the convergence and scatter commands, where
/// the total FEXT power is retargeted onto realized draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FextShape {
    pub k_fext: f64,
    pub sigma_db: f64,
    pub coupling_length_m: f64,
    pub frequency_hz: f64,
}

impl Default for FextShape {
    fn default() -> Self {
        Self {
            k_fext: 1.59e-10,
            sigma_db: 5.0,
            coupling_length_m: 100.0,
            frequency_hz: 1.0e7,
        }
    }
}

impl FextShape {
    pub fn from_scenario(sc: &ChannelScenario) -> Result<Self, CliError> {
        let fext = sc
            .fext_params(1.0e7)
            .map_err(|e| CliError::config(e.to_string()))?;
        let coupling_length_m = fext.coupling.equal().ok_or_else(|| {
            CliError::config(
                "convergence/scatter need an equal-length binder scenario".to_string(),
            )
        })?;
        Ok(Self {
            k_fext: sc.k_fext,
            sigma_db: sc.sigma_db,
            coupling_length_m,
            frequency_hz: 1.0e7,
        })
    }

    fn to_params(&self) -> Result<FextModelParams, CliError> {
        FextModelParams::new(
            self.k_fext,
            self.sigma_db,
            CouplingLength::Equal(self.coupling_length_m),
            self.frequency_hz,
        )
        .map_err(|e| CliError::config(e.to_string()))
    }
}

/// Fully resolved inputs of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Params {
    AsymptoticSweep {
        eta_db: Vec<f64>,
        sigma2: Vec<f64>,
    },
    Convergence {
        sigma2: f64,
        m: usize,
        n_grid: Vec<usize>,
        canceler: CancelerKind,
        /// Single-wire SNR (linear) for the MMSE regularizer; unused for ZF.
        eta: Option<f64>,
        trials: usize,
        seed: u64,
        base: FextShape,
    },
    Scatter {
        m_values: Vec<usize>,
        sigma2: Vec<f64>,
        eta_db: f64,
        trials: usize,
        seed: u64,
        base: FextShape,
    },
    RateReach {
        scenario: ChannelScenario,
        plan: BandPlan,
        lengths_m: Vec<f64>,
        trials: usize,
        mode: SweepMode,
    },
    SpectralEfficiency {
        scenario: ChannelScenario,
        plan: BandPlan,
        trials: usize,
        mode: SweepMode,
    },
    DumpChannel {
        scenario: ChannelScenario,
        frequency_hz: f64,
        trial: u64,
    },
}

impl Params {
    pub fn command_name(&self) -> &'static str {
        match self {
            Params::AsymptoticSweep { .. } => "asymptotic-sweep",
            Params::Convergence { .. } => "convergence",
            Params::Scatter { .. } => "scatter",
            Params::RateReach { .. } => "rate-reach",
            Params::SpectralEfficiency { .. } => "spectral-efficiency",
            Params::DumpChannel { .. } => "dump-channel",
        }
    }

    /// Canonical serialization used for the manifest hash.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }

    /// Execute and return the CSV bytes.
    pub fn run(&self) -> Result<String, CliError> {
        match self {
            Params::AsymptoticSweep { eta_db, sigma2 } => run_asymptotic_sweep(eta_db, sigma2),
            Params::Convergence {
                sigma2,
                m,
                n_grid,
                canceler,
                eta,
                trials,
                seed,
                base,
            } => run_convergence(*sigma2, *m, n_grid, *canceler, *eta, *trials, *seed, base),
            Params::Scatter {
                m_values,
                sigma2,
                eta_db,
                trials,
                seed,
                base,
            } => {
                let base_fext = base.to_params()?;
                let rows = scatter_experiment(m_values, sigma2, *eta_db, *trials, &base_fext, *seed)
                    .map_err(|e| CliError::numerical("montecarlo", e.to_string()))?;
                let mut buf = Vec::new();
                write_scatter_csv(&rows, &mut buf)?;
                Ok(String::from_utf8(buf).expect("csv is utf8"))
            }
            Params::RateReach {
                scenario,
                plan,
                lengths_m,
                trials,
                mode,
            } => {
                let points = rate_reach_sweep(lengths_m, scenario, plan, *trials, *mode)
                    .map_err(map_linkbudget_error)?;
                let mut buf = Vec::new();
                write_rate_reach_csv(&points, &mut buf)?;
                Ok(String::from_utf8(buf).expect("csv is utf8"))
            }
            Params::SpectralEfficiency {
                scenario,
                plan,
                trials,
                mode,
            } => {
                let points = spectral_efficiency(scenario, plan, *trials, *mode)
                    .map_err(map_linkbudget_error)?;
                let mut buf = Vec::new();
                write_spectral_csv(&points, &mut buf)?;
                Ok(String::from_utf8(buf).expect("csv is utf8"))
            }
            Params::DumpChannel {
                scenario,
                frequency_hz,
                trial,
            } => {
                let directs = scenario
                    .direct_params()
                    .map_err(|e| CliError::config(e.to_string()))?;
                let fext = scenario
                    .fext_params(*frequency_hz)
                    .map_err(|e| CliError::config(e.to_string()))?;
                let r = generate_realization(&directs, &fext, RngSpec::new(scenario.seed, *trial))
                    .map_err(|e| CliError::numerical("channel", e.to_string()))?;
                let mut buf = Vec::new();
                r.write_csv(&mut buf)?;
                Ok(String::from_utf8(buf).expect("csv is utf8"))
            }
        }
    }
}

fn map_linkbudget_error(e: xtalk_core::linkbudget::LinkBudgetError) -> CliError {
    use xtalk_core::linkbudget::LinkBudgetError::*;
    match e {
        OutOfBand { .. } | InvalidPlan(_) | InvalidDimension { .. } | Channel(_) => {
            CliError::config(e.to_string())
        }
        MonteCarlo(inner) => CliError::numerical("linkbudget", inner.to_string()),
    }
}

fn run_asymptotic_sweep(eta_db: &[f64], sigma2: &[f64]) -> Result<String, CliError> {
    let mut out = String::from("eta_db,sigma2,gamma_zf,rho_mmse,rate_zf,rate_mmse,regime\n");
    for &edb in eta_db {
        let eta = 10f64.powf(edb / 10.0);
        for &s2 in sigma2 {
            let gamma_zf = match gamma_deterministic(AsymptoticQuery {
                sigma2: s2,
                xi: Regularizer::Infinite,
            })
            .gamma
            {
                GammaEquivalent::Finite(g) => g,
                GammaEquivalent::Divergent { .. } => f64::INFINITY,
            };
            let rho = mmse_snr_asymptotic(eta, s2);
            let rate_zf = asymptotic_rate(eta, s2, CancelerKind::Zf);
            let rate_mmse = asymptotic_rate(eta, s2, CancelerKind::Mmse);
            let regime = mmse_regime_approx(eta, s2).regime;
            out.push_str(&format!(
                "{edb},{s2},{gamma_zf},{rho},{rate_zf},{rate_mmse},{regime}\n"
            ));
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_convergence(
    sigma2: f64,
    m: usize,
    n_grid: &[usize],
    canceler: CancelerKind,
    eta: Option<f64>,
    trials: usize,
    seed: u64,
    base: &FextShape,
) -> Result<String, CliError> {
    let xi = match canceler {
        CancelerKind::Zf => Regularizer::Infinite,
        CancelerKind::Mmse => {
            let eta = eta.ok_or_else(|| {
                CliError::config("mmse convergence requires --eta".to_string())
            })?;
            Regularizer::Finite(eta)
        }
    };
    // Retarget the base coupling so the drawn ensemble has exactly the
    // requested total FEXT power at the target size.
    let mut base_fext = base.to_params()?;
    let current = xtalk_core::channel::sigma_total(&base_fext, m);
    base_fext.k_fext *= (sigma2 / current).sqrt();
    let spec = SequenceSpec {
        m_target: m,
        n_values: n_grid.to_vec(),
        base_fext,
    };
    let points = convergence_experiment(&spec, xi, trials, seed)
        .map_err(|e| CliError::numerical("montecarlo", e.to_string()))?;
    let mut buf = Vec::new();
    write_convergence_csv(&points, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf8"))
}

/// Run manifest: everything needed to reproduce a CSV byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub run: ManifestRun,
    pub params: Params,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRun {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub output: String,
}

pub fn params_hash(params: &Params) -> String {
    let mut hasher = Sha256::new();
    hasher.update(params.canonical_toml().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(params: Params, output: &str) -> Self {
        let config_sha256 = params_hash(&params);
        Manifest {
            run: ManifestRun {
                tool: "xtalk".to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                config_sha256,
                output: output.to_string(),
            },
            params,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let m: Manifest = toml::from_str(text)
            .map_err(|e| CliError::config(format!("invalid manifest: {e}")))?;
        let expect = params_hash(&m.params);
        if expect != m.run.config_sha256 {
            return Err(CliError::config(format!(
                "manifest hash mismatch: recorded {}, computed {expect}",
                m.run.config_sha256
            )));
        }
        Ok(m)
    }
}
