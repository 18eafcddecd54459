//! TOML experiment configuration.
//!
//! All powers enter in dBm (except the per-phase-shifter draw, which is
//! small enough that Watts read better) and are converted to SI units here,
//! once. The `schema_version` field guards against stale files.

use serde::{Deserialize, Serialize};

use dma_ee_core::channel::{AttenuationProfile, ChannelDims, StatsConfig};
use dma_ee_core::dma::{AmConfig, FeasibleSet};
use dma_ee_core::metrics::{dbm_to_watts, PowerModel};
use dma_ee_core::opt_inst::AoConfig;
use dma_ee_core::opt_stat::StatConfig;
use dma_ee_core::waterfill::SolverConfig;

use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// Root of the experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dims: DimsSection,
    pub channel: ChannelSection,
    pub power: PowerSection,
    pub sweep: SweepSection,
    pub run: RunSection,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsSection {
    pub users: usize,
    pub antennas_per_user: usize,
    pub microstrips: usize,
    pub elements_per_strip: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub sparsity: f64,
    pub decay: f64,
    pub large_scale_gain_db: f64,
    #[serde(default)]
    pub attenuation_alpha: f64,
    #[serde(default)]
    pub attenuation_enabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    /// Amplifier efficiency `ρ` (so `ξ = 1/ρ`).
    pub amplifier_efficiency: f64,
    pub static_user_dbm: f64,
    pub static_bs_dbm: f64,
    pub per_rf_chain_dbm: f64,
    /// Per-phase-shifter draw in Watts (hybrid baseline).
    pub per_phase_shifter_w: f64,
    pub noise_dbm: f64,
    pub bandwidth_hz: f64,
    /// Budget used when the sweep axis is not the power budget.
    pub max_transmit_dbm: f64,
}

/// What the experiment sweeps over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PowerBudget,
    Microstrips,
    FeasibleSets,
    Architectures,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    #[serde(default)]
    pub power_budget_dbm: Vec<f64>,
    #[serde(default)]
    pub microstrip_counts: Vec<usize>,
    #[serde(default)]
    pub feasible_sets: Vec<String>,
    #[serde(default)]
    pub architectures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiRegime {
    Instantaneous,
    Statistical,
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub csi: CsiRegime,
    #[serde(default)]
    pub se_oriented: bool,
    #[serde(default = "default_architectures")]
    pub architectures: Vec<String>,
    #[serde(default = "default_feasible_sets")]
    pub feasible_sets: Vec<String>,
    /// Monte-Carlo trials for DE validation and optional re-evaluation.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seeds")]
    pub seeds: u32,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    /// Worker threads; 0 means all cores.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub mc_reeval: bool,
}

fn default_architectures() -> Vec<String> {
    vec!["dma".into()]
}
fn default_feasible_sets() -> Vec<String> {
    vec!["uc".into()]
}
fn default_trials() -> usize {
    1000
}
fn default_seeds() -> u32 {
    1
}
fn default_base_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub outer_tol_rel: f64,
    pub max_outer: usize,
    pub dinkelbach_tol: f64,
    pub max_dinkelbach: usize,
    pub kkt_tol: f64,
    pub bisection_tol: f64,
    pub block_tol: f64,
    pub max_block_iters: usize,
    pub am_delta: f64,
    pub am_tol: f64,
    pub am_max_iters: usize,
    pub de_tol: f64,
    pub de_max_iters: usize,
    pub subspace_tol: f64,
    pub max_subspace_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let ao = AoConfig::default();
        let stat = StatConfig::default();
        SolverSection {
            outer_tol_rel: ao.outer_tol_rel,
            max_outer: ao.max_outer,
            dinkelbach_tol: ao.dinkelbach_tol,
            max_dinkelbach: ao.max_dinkelbach,
            kkt_tol: ao.solver.kkt_tol,
            bisection_tol: ao.solver.bisection_tol,
            block_tol: ao.solver.block_tol,
            max_block_iters: ao.solver.max_block_iters,
            am_delta: ao.am.delta,
            am_tol: ao.am.tol,
            am_max_iters: ao.am.max_iters,
            de_tol: stat.de_tol,
            de_max_iters: stat.de_max_iters,
            subspace_tol: stat.subspace_tol,
            max_subspace_iters: stat.max_subspace_iters,
        }
    }
}

/// Architectures the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Dma,
    FullyDigital,
    Hybrid,
}

impl Architecture {
    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "dma" => Ok(Architecture::Dma),
            "fully_digital" => Ok(Architecture::FullyDigital),
            "hybrid" => Ok(Architecture::Hybrid),
            other => Err(HarnessError::Config(format!(
                "run.architectures: unknown architecture `{other}` \
                 (expected dma, fully_digital, or hybrid)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Dma => "dma",
            Architecture::FullyDigital => "fully_digital",
            Architecture::Hybrid => "hybrid",
        }
    }
}

/// Feasible-set names used in configs and CSV output.
pub fn parse_feasible_set(name: &str) -> Result<FeasibleSet, HarnessError> {
    match name {
        "uc" => Ok(FeasibleSet::Unconstrained),
        "ao" => Ok(FeasibleSet::default_amplitude_only()),
        "ba" => Ok(FeasibleSet::default_binary_amplitude()),
        "lp" => Ok(FeasibleSet::LorentzianPhase),
        other => Err(HarnessError::Config(format!(
            "feasible_sets: unknown set `{other}` (expected uc, ao, ba, or lp)"
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(format!("parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let field = |name: &str, msg: String| HarnessError::Config(format!("{name}: {msg}"));
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        self.channel_dims()
            .validate()
            .map_err(|e| field("dims", e.to_string()))?;
        if !(self.channel.sparsity > 0.0 && self.channel.sparsity <= 1.0) {
            return Err(field("channel.sparsity", "must lie in (0, 1]".into()));
        }
        if !(self.channel.decay > 0.0) {
            return Err(field("channel.decay", "must be > 0".into()));
        }
        if !(self.channel.attenuation_alpha >= 0.0) {
            return Err(field("channel.attenuation_alpha", "must be >= 0".into()));
        }
        self.power_model(self.power.max_transmit_dbm)
            .map_err(|e| field("power", e.to_string()))?;

        let m = self.dims.microstrips * self.dims.elements_per_strip;
        match self.sweep.axis {
            SweepAxis::PowerBudget => {
                if self.sweep.power_budget_dbm.is_empty() {
                    return Err(field("sweep.power_budget_dbm", "must be nonempty".into()));
                }
            }
            SweepAxis::Microstrips => {
                if self.sweep.microstrip_counts.is_empty() {
                    return Err(field("sweep.microstrip_counts", "must be nonempty".into()));
                }
                for &k in &self.sweep.microstrip_counts {
                    if k == 0 || m % k != 0 {
                        return Err(field(
                            "sweep.microstrip_counts",
                            format!("{k} does not divide the {m} total elements"),
                        ));
                    }
                }
            }
            SweepAxis::FeasibleSets => {
                if self.sweep.feasible_sets.is_empty() {
                    return Err(field("sweep.feasible_sets", "must be nonempty".into()));
                }
                for s in &self.sweep.feasible_sets {
                    parse_feasible_set(s)?;
                }
            }
            SweepAxis::Architectures => {
                if self.sweep.architectures.is_empty() {
                    return Err(field("sweep.architectures", "must be nonempty".into()));
                }
                for a in &self.sweep.architectures {
                    Architecture::parse(a)?;
                }
            }
        }
        for a in &self.run.architectures {
            Architecture::parse(a)?;
        }
        for s in &self.run.feasible_sets {
            parse_feasible_set(s)?;
        }
        if self.run.seeds == 0 {
            return Err(field("run.seeds", "at least one seed required".into()));
        }
        if self.run.trials == 0 {
            return Err(field("run.trials", "at least one trial required".into()));
        }
        Ok(())
    }

    pub fn channel_dims(&self) -> ChannelDims {
        ChannelDims::uniform(
            self.dims.users,
            self.dims.antennas_per_user,
            self.dims.microstrips,
            self.dims.elements_per_strip,
        )
    }

    pub fn stats_config(&self) -> StatsConfig {
        StatsConfig {
            sparsity: self.channel.sparsity,
            decay: self.channel.decay,
            large_scale_gain_db: self.channel.large_scale_gain_db,
        }
    }

    pub fn attenuation_profile(&self) -> Result<AttenuationProfile, HarnessError> {
        if self.channel.attenuation_enabled {
            AttenuationProfile::new(self.channel.attenuation_alpha)
                .map_err(|e| HarnessError::Config(format!("channel.attenuation_alpha: {e}")))
        } else {
            Ok(AttenuationProfile::disabled())
        }
    }

    /// Power model at a given budget, SE-oriented if requested.
    pub fn power_model(&self, max_transmit_dbm: f64) -> Result<PowerModel, HarnessError> {
        let pm = PowerModel::uniform(
            self.dims.users,
            self.power.amplifier_efficiency,
            dbm_to_watts(self.power.static_user_dbm),
            dbm_to_watts(self.power.static_bs_dbm),
            dbm_to_watts(self.power.per_rf_chain_dbm),
            self.power.per_phase_shifter_w,
            dbm_to_watts(max_transmit_dbm),
            dbm_to_watts(self.power.noise_dbm),
            self.power.bandwidth_hz,
        )
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(if self.run.se_oriented { pm.se_oriented() } else { pm })
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            kkt_tol: self.solver.kkt_tol,
            bisection_tol: self.solver.bisection_tol,
            block_tol: self.solver.block_tol,
            max_block_iters: self.solver.max_block_iters,
        }
    }

    pub fn ao_config(&self) -> AoConfig {
        AoConfig {
            outer_tol_rel: self.solver.outer_tol_rel,
            max_outer: self.solver.max_outer,
            dinkelbach_tol: self.solver.dinkelbach_tol,
            max_dinkelbach: self.solver.max_dinkelbach,
            solver: self.solver_config(),
            am: AmConfig {
                delta: self.solver.am_delta,
                tol: self.solver.am_tol,
                max_iters: self.solver.am_max_iters,
            },
        }
    }

    pub fn stat_config(&self) -> StatConfig {
        StatConfig {
            ao: self.ao_config(),
            de_tol: self.solver.de_tol,
            de_max_iters: self.solver.de_max_iters,
            subspace_tol: self.solver.subspace_tol,
            max_subspace_iters: self.solver.max_subspace_iters,
            mc_reeval_trials: if self.run.mc_reeval { Some(self.run.trials) } else { None },
            mc_seed: dma_ee_core::channel::derive_seed(self.run.base_seed, 0x4d43),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use tests_support::MINI_TOML;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINI_TOML).unwrap();
        assert_eq!(cfg.run.architectures, vec!["dma"]);
        assert_eq!(cfg.run.feasible_sets, vec!["uc"]);
        assert_eq!(cfg.solver.max_outer, 50);
        assert!(!cfg.run.se_oriented);
    }

    #[test]
    fn divisibility_rule_is_enforced() {
        let mut cfg = ExperimentConfig::from_toml(MINI_TOML).unwrap();
        cfg.sweep.axis = SweepAxis::Microstrips;
        cfg.sweep.microstrip_counts = vec![1, 2, 4];
        cfg.validate().unwrap();
        cfg.sweep.microstrip_counts = vec![3];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("microstrip_counts"), "{err}");
    }

    #[test]
    fn schema_and_field_errors_are_specific() {
        let mut cfg = ExperimentConfig::from_toml(MINI_TOML).unwrap();
        cfg.schema_version = 99;
        assert!(cfg.validate().unwrap_err().to_string().contains("schema_version"));

        let mut cfg = ExperimentConfig::from_toml(MINI_TOML).unwrap();
        cfg.channel.sparsity = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("sparsity"));

        let mut cfg = ExperimentConfig::from_toml(MINI_TOML).unwrap();
        cfg.sweep.power_budget_dbm.clear();
        assert!(cfg.validate().unwrap_err().to_string().contains("power_budget_dbm"));

        let mut cfg = ExperimentConfig::from_toml(MINI_TOML).unwrap();
        cfg.run.architectures = vec!["laser".into()];
        assert!(cfg.validate().unwrap_err().to_string().contains("laser"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINI_TOML.replace("[run]", "[run]\nwarp_drive = true");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
