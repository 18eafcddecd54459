//! Water-filling power allocation with a linear power cost.
//!
//! Maximizes `Σ_i log2(1 + s_i·p_i) − cost·Σ_i p_i` over `p ≥ 0` with
//! `Σ_i p_i ≤ budget`. The stationarity condition puts every active mode at
//! a common water level `w`: `p_i = max(0, w − 1/s_i)` with
//! `w = 1/(ln2·(cost + λ))`. If the unconstrained level already fits the
//! budget the multiplier `λ` is zero; otherwise the level is found by
//! bisection on the monotone total-power curve.

use crate::error::{Error, Result};

/// Tolerances of the inner covariance/allocation solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Acceptable KKT residual of a returned allocation.
    pub kkt_tol: f64,
    /// Absolute tolerance of the water-level bisection.
    pub bisection_tol: f64,
    /// Relative objective change that stops the block-coordinate sweep.
    pub block_tol: f64,
    /// Maximum block-coordinate sweeps.
    pub max_block_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { kkt_tol: 1e-8, bisection_tol: 1e-12, block_tol: 1e-11, max_block_iters: 300 }
    }
}

const LN2: f64 = std::f64::consts::LN_2;

/// Gains below this carry no usable signal and never receive power.
const GAIN_FLOOR: f64 = 1e-280;

fn loaded_power(gains: &[f64], level: f64) -> f64 {
    gains
        .iter()
        .filter(|&&s| s > GAIN_FLOOR)
        .map(|&s| (level - 1.0 / s).max(0.0))
        .sum()
}

fn load(gains: &[f64], level: f64) -> Vec<f64> {
    gains
        .iter()
        .map(|&s| if s > GAIN_FLOOR { (level - 1.0 / s).max(0.0) } else { 0.0 })
        .collect()
}

/// Optimal per-mode powers for gains `s`, marginal power cost `cost`
/// (`η·ξ` in the Dinkelbach subproblems; zero means SE-oriented), and a
/// total-power `budget`.
pub fn allocate(gains: &[f64], cost: f64, budget: f64, bisection_tol: f64) -> Result<Vec<f64>> {
    if !(cost >= 0.0) || !(budget >= 0.0) {
        return Err(Error::validation("cost and budget must be nonnegative"));
    }
    if gains.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::validation("mode gains must be finite and nonnegative"));
    }
    let s_max = gains.iter().cloned().fold(0.0f64, f64::max);
    if s_max <= GAIN_FLOOR || budget == 0.0 {
        return Ok(vec![0.0; gains.len()]);
    }

    if cost > 0.0 {
        let unconstrained = 1.0 / (LN2 * cost);
        if loaded_power(gains, unconstrained) <= budget {
            return Ok(load(gains, unconstrained));
        }
    }

    // budget binds: bisect the level so the loaded power meets the budget
    let mut lo = 0.0f64;
    let mut hi = budget + 1.0 / s_max;
    // the analytic bracket can fall short by rounding when 1/s_max ≫ budget
    for _ in 0..8 {
        if loaded_power(gains, hi) >= budget {
            break;
        }
        hi = hi * 2.0 + 1.0;
    }
    if loaded_power(gains, hi) < budget {
        return Err(Error::numerical("water-level bracket failed to cover the budget"));
    }
    for _ in 0..200 {
        if hi - lo <= bisection_tol * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if loaded_power(gains, mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut level = 0.5 * (lo + hi);
    // on the active set the loaded power is linear in the level, so one
    // closed-form step pins the total to the budget exactly
    let active: Vec<f64> = gains
        .iter()
        .filter(|&&s| s > GAIN_FLOOR && level - 1.0 / s > 0.0)
        .map(|&s| 1.0 / s)
        .collect();
    if !active.is_empty() {
        let exact = (budget + active.iter().sum::<f64>()) / active.len() as f64;
        let same_active = gains
            .iter()
            .filter(|&&s| s > GAIN_FLOOR)
            .all(|&s| (exact - 1.0 / s > 0.0) == (level - 1.0 / s > 0.0));
        if same_active {
            level = exact;
        }
    }
    Ok(load(gains, level))
}

/// Normalized KKT residual of an allocation.
///
/// Checks primal feasibility, the shared level `ν_i = 1/(p_i + 1/s_i)`
/// across active modes, that inactive modes sit below it, dual feasibility
/// `λ = ν̄/ln2 − cost ≥ 0`, and complementary slackness `λ·(budget − Σp)`
/// in product form so no brittle binary slack test is needed.
pub fn kkt_residual(gains: &[f64], powers: &[f64], cost: f64, budget: f64) -> f64 {
    let total: f64 = powers.iter().sum();
    let mut feasibility: f64 = ((total - budget) / budget.max(1e-300)).max(0.0);
    for &p in powers {
        feasibility = feasibility.max(-p);
    }

    let active_floor = 1e-14 * budget.max(1.0);
    let mut levels = Vec::new();
    for (&s, &p) in gains.iter().zip(powers) {
        if s > GAIN_FLOOR && p > active_floor {
            levels.push(1.0 / (p + 1.0 / s));
        }
    }
    if levels.is_empty() {
        // nothing loaded: every mode's marginal value must be below the cost,
        // or there is simply no budget
        if budget == 0.0 {
            return feasibility;
        }
        let s_max = gains.iter().cloned().fold(0.0f64, f64::max);
        return feasibility.max((s_max / LN2 - cost).max(0.0) / (cost + s_max / LN2).max(1e-300));
    }
    let mean = levels.iter().sum::<f64>() / levels.len() as f64;
    let mut residual = feasibility;
    for l in &levels {
        residual = residual.max((l - mean).abs() / mean);
    }
    for (&s, &p) in gains.iter().zip(powers) {
        if s > GAIN_FLOOR && p <= active_floor {
            residual = residual.max((s - mean).max(0.0) / mean);
        }
    }
    // dual feasibility: the water level may only exceed the cost level
    residual = residual.max((LN2 * cost - mean).max(0.0) / mean);
    // complementary slackness: λ and the budget slack cannot both be large
    let lambda_scaled = (mean - LN2 * cost).max(0.0) / mean;
    let slack_scaled = (budget - total).max(0.0) / budget.max(1e-300);
    residual.max(lambda_scaled * slack_scaled)
}
