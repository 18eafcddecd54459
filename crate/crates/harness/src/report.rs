//! Deterministic-equivalent accuracy report.
//!
//! Runs the fixed-point rate and a Monte-Carlo estimate side by side over
//! the configured power sweep (uniform full-power loadings, the closed-form
//! subspace for those loadings) and reports per-point values plus the worst
//! relative gap.

use dma_ee_core::channel::{derive_seed, generate_channel_stats};
use dma_ee_core::metrics::ergodic_se_monte_carlo;
use dma_ee_core::opt_stat::{
    deterministic_equivalent, optimal_subspace_stat, PowerAllocations,
};

use crate::config::ExperimentConfig;
use crate::HarnessError;

/// One sweep point of the validation.
#[derive(Debug, Clone, PartialEq)]
pub struct DePoint {
    pub budget_dbm: f64,
    pub rate_de: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub rel_gap: f64,
}

/// Validation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct DeReport {
    pub points: Vec<DePoint>,
    pub max_rel_gap: f64,
    /// Set when the Monte-Carlo error dominates the gaps (too few trials).
    pub insufficient_trials: bool,
    pub trials: usize,
}

/// Relative DE-vs-MC gap with the convention that two zero rates agree.
pub fn relative_gap(rate_de: f64, mc_mean: f64) -> f64 {
    if mc_mean == 0.0 && rate_de == 0.0 {
        0.0
    } else if mc_mean == 0.0 {
        f64::INFINITY
    } else {
        (rate_de - mc_mean).abs() / mc_mean
    }
}

/// Compare the fixed-point rate against Monte-Carlo across the power sweep.
pub fn validate_de(cfg: &ExperimentConfig) -> Result<DeReport, HarnessError> {
    cfg.validate()?;
    let budgets: Vec<f64> = if cfg.sweep.power_budget_dbm.is_empty() {
        vec![cfg.power.max_transmit_dbm]
    } else {
        cfg.sweep.power_budget_dbm.clone()
    };
    let dims = cfg.channel_dims();
    let profile = cfg.attenuation_profile()?;
    let stats = generate_channel_stats(&dims, &cfg.stats_config(), cfg.run.base_seed)
        .map_err(|e| HarnessError::Scenario(e.to_string()))?;
    let sc = cfg.stat_config();
    let trials = cfg.run.trials;

    let mut points = Vec::new();
    let mut max_rel_gap: f64 = 0.0;
    let mut noisy = trials < 2;
    for &dbm in &budgets {
        let pm = cfg.power_model(dbm)?;
        let allocs = PowerAllocations::uniform(&dims.antennas_per_user, pm.max_transmit);
        let (basis, _) = optimal_subspace_stat(
            &allocs.per_user.clone(),
            &stats,
            &profile,
            pm.noise_power,
            dims.microstrips,
        )
        .map_err(|e| HarnessError::Scenario(e.to_string()))?;
        let de = deterministic_equivalent(
            &allocs,
            &basis,
            &stats,
            &profile,
            pm.noise_power,
            sc.de_tol,
            sc.de_max_iters,
        )
        .map_err(|e| HarnessError::Scenario(e.to_string()))?;
        let covs = allocs.to_covariances(&stats);
        let (mc_mean, mc_stderr) = ergodic_se_monte_carlo(
            &stats,
            &basis,
            &covs,
            pm.noise_power,
            &profile,
            trials,
            derive_seed(cfg.run.base_seed, 0xDE),
        )
        .map_err(|e| HarnessError::Scenario(e.to_string()))?;
        let rel_gap = relative_gap(de.rate_de, mc_mean);
        max_rel_gap = max_rel_gap.max(rel_gap);
        if mc_mean > 0.0 && mc_stderr > 0.02 * mc_mean {
            noisy = true;
        }
        points.push(DePoint { budget_dbm: dbm, rate_de: de.rate_de, mc_mean, mc_stderr, rel_gap });
    }
    Ok(DeReport { points, max_rel_gap, insufficient_trials: noisy, trials })
}

/// Plain-text table for the CLI.
pub fn render_report(report: &DeReport) -> String {
    let mut out = String::new();
    out.push_str("budget_dbm,rate_de,mc_mean,mc_stderr,rel_gap\n");
    for p in &report.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            crate::csvio::format_float(p.budget_dbm),
            crate::csvio::format_float(p.rate_de),
            crate::csvio::format_float(p.mc_mean),
            crate::csvio::format_float(p.mc_stderr),
            crate::csvio::format_float(p.rel_gap),
        ));
    }
    out.push_str(&format!(
        "# max relative gap: {:.3}% over {} trials{}\n",
        100.0 * report.max_rel_gap,
        report.trials,
        if report.insufficient_trials { " (WARNING: too few trials, stderr dominates)" } else { "" }
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests_support::mini_config;

    #[test]
    fn gap_convention_handles_zero_rates() {
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert!(relative_gap(1.0, 0.0).is_infinite());
        assert!((relative_gap(1.05, 1.0) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn mini_validation_runs_and_flags_single_trial() {
        let mut cfg = mini_config();
        cfg.run.trials = 400;
        let report = validate_de(&cfg).unwrap();
        assert_eq!(report.points.len(), 2);
        for p in &report.points {
            assert!(p.rate_de > 0.0);
            assert!(p.mc_mean > 0.0);
        }

        cfg.run.trials = 1;
        let report = validate_de(&cfg).unwrap();
        assert!(report.insufficient_trials);
        let text = render_report(&report);
        assert!(text.contains("WARNING"));
    }
}
