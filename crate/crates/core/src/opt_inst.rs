//! EE maximization with instantaneous CSI.
//!
//! The alternating optimizer cycles two blocks until the EE settles:
//!
//! 1. transmit covariances by Dinkelbach ratio iterations — the inner
//!    subtractive problem `max R(P) − η·W(P)` is solved by block-coordinate
//!    water-filling over users on the whitened per-user channels;
//! 2. the receive subspace in closed form — the top-`K` eigenvectors of the
//!    aggregate received covariance.
//!
//! The loop works on the unconstrained row-space basis; only at the end is
//! a feasible weight matrix synthesized and the reported EE re-evaluated on
//! the actual row space of the constrained weights.

use nalgebra::Cholesky;

use crate::channel::ChannelRealization;
use crate::dma::{row_space_basis, synthesize_weights, AmConfig, FeasibleSet, WeightMatrix};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, is_orthonormal, top_k_eigvecs};
use crate::metrics::{
    fixed_power, instantaneous_se, received_covariance, total_power, EEResult, PowerModel,
    TransmitCovariances,
};
use crate::waterfill::{allocate, kkt_residual, SolverConfig};
use crate::CMat;

/// Final state of a Dinkelbach run.
#[derive(Debug, Clone)]
pub struct DinkelbachState {
    /// Converged ratio `η = R/W` (EE divided by bandwidth).
    pub eta: f64,
    /// `η` after every update; nondecreasing from the first iterate on.
    pub eta_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Progress of the outer alternating optimization.
#[derive(Debug, Clone)]
pub struct AoTrace {
    /// EE (bits/Joule) after every outer iteration, pre-projection.
    pub ee_per_iteration: Vec<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
}

/// Tuning knobs of the alternating optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AoConfig {
    /// Relative EE change that stops the outer loop.
    pub outer_tol_rel: f64,
    pub max_outer: usize,
    /// Absolute `|Δη|` that stops a Dinkelbach run.
    pub dinkelbach_tol: f64,
    pub max_dinkelbach: usize,
    pub solver: SolverConfig,
    pub am: AmConfig,
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig {
            outer_tol_rel: 1e-4,
            max_outer: 50,
            dinkelbach_tol: 1e-6,
            max_dinkelbach: 100,
            solver: SolverConfig::default(),
            am: AmConfig::default(),
        }
    }
}

/// Everything the alternating optimizer produces.
#[derive(Debug, Clone)]
pub struct AoOutcome {
    pub weights: WeightMatrix,
    pub covariances: TransmitCovariances,
    pub trace: AoTrace,
    /// EE evaluated on the row space of the synthesized (constrained)
    /// weights — the honest number.
    pub result: EEResult,
    /// Unconstrained basis the optimizer converged to.
    pub subspace: CMat,
    /// EE at `subspace` before weight synthesis.
    pub pre_projection_ee: f64,
    /// Fit residual of the weight synthesis.
    pub am_residual: f64,
    /// State of the last Dinkelbach run.
    pub dinkelbach: DinkelbachState,
}

/// Closed-form receive subspace: top-`K` eigenvectors of the aggregate
/// `(1/σ²) Σ_u G_u P_u G_u^H`, descending eigenvalues, deterministic phases.
pub fn optimal_subspace(
    channels: &ChannelRealization,
    covs: &TransmitCovariances,
    noise_power: f64,
    k: usize,
) -> Result<CMat> {
    let m = channels.num_elements();
    if k > m {
        return Err(Error::validation(format!("subspace dimension {k} exceeds {m} elements")));
    }
    let eye = CMat::identity(m, m);
    let aggregate = received_covariance(&eye, channels, covs, noise_power)?;
    top_k_eigvecs(&aggregate, k)
}

/// Inner Dinkelbach subproblem: approximately maximize
/// `log2 det(I + (1/σ²) Σ_u V̄2^H G_u P_u G_u^H V̄2) − η Σ_u ξ_u tr(P_u)`
/// over `tr(P_u) ≤ P_max`, `P_u ⪰ 0`, by cyclic per-user water-filling on
/// the interference-whitened channels. The returned point satisfies the KKT
/// conditions of every per-user subproblem to `cfg.kkt_tol`.
pub fn solve_inner(
    eta: f64,
    basis: &CMat,
    channels: &ChannelRealization,
    pm: &PowerModel,
    cfg: &SolverConfig,
) -> Result<TransmitCovariances> {
    if eta < 0.0 {
        return Err(Error::validation("eta must be nonnegative"));
    }
    if !is_orthonormal(basis, 1e-8) {
        return Err(Error::validation("basis columns must be orthonormal"));
    }
    let users = channels.num_users();
    if users != pm.num_users() {
        return Err(Error::validation("channel/power-model user counts differ"));
    }
    let k = basis.ncols();
    let sigma = pm.noise_power.sqrt();
    // effective per-user channels B_u = V̄2^H G_u / σ
    let effective: Vec<CMat> =
        channels.per_user.iter().map(|g| (basis.adjoint() * g).unscale(sigma)).collect();

    let mut covs = TransmitCovariances::zeros(
        &channels.per_user.iter().map(|g| g.ncols()).collect::<Vec<_>>(),
    );
    let mut modes: Vec<(CMat, Vec<f64>, Vec<f64>)> = Vec::new(); // per user: basis, gains, powers
    for _ in 0..users {
        modes.push((CMat::zeros(0, 0), Vec::new(), Vec::new()));
    }

    let objective = |covs: &TransmitCovariances| -> Result<f64> {
        let mut s = CMat::zeros(k, k);
        for (b, p) in effective.iter().zip(&covs.per_user) {
            s += b * p * b.adjoint();
        }
        let mut rate = crate::linalg::log2_det_i_plus(&s)?;
        for (u, xi) in pm.amplifier_inefficiency.iter().enumerate() {
            rate -= eta * xi * covs.trace_of(u);
        }
        Ok(rate)
    };

    let mut prev_obj = objective(&covs)?;
    let mut converged = false;
    for _ in 0..cfg.max_block_iters {
        for u in 0..users {
            // interference from all other users, at current iterates
            let mut t = CMat::identity(k, k);
            for (v, (b, p)) in effective.iter().zip(&covs.per_user).enumerate() {
                if v != u {
                    t += b * p * b.adjoint();
                }
            }
            let chol = Cholesky::new(hermitian_part(&t))
                .ok_or_else(|| Error::numerical("interference covariance not PD"))?;
            let whitened = chol.l().solve_lower_triangular(&effective[u]).ok_or_else(|| {
                Error::numerical("triangular solve failed while whitening")
            })?;
            let svd = whitened.svd(false, true);
            let v_t = svd.v_t.ok_or_else(|| Error::numerical("SVD did not return V^H"))?;
            let r = svd.singular_values.len();
            let gains: Vec<f64> =
                svd.singular_values.iter().map(|s| s * s).collect();
            let cost = eta * pm.amplifier_inefficiency[u];
            let powers = allocate(&gains, cost, pm.max_transmit, cfg.bisection_tol)?;
            let mode_basis = v_t.rows(0, r).adjoint();
            let mut p = CMat::zeros(mode_basis.nrows(), mode_basis.nrows());
            for (i, &pi) in powers.iter().enumerate() {
                if pi > 0.0 {
                    let col = mode_basis.column(i);
                    p += (col * col.adjoint()).scale(pi);
                }
            }
            covs.per_user[u] = hermitian_part(&p);
            modes[u] = (mode_basis, gains, powers);
        }
        let obj = objective(&covs)?;
        if (obj - prev_obj).abs() <= cfg.block_tol * obj.abs().max(1.0) {
            prev_obj = obj;
            converged = true;
            break;
        }
        prev_obj = obj;
    }
    let _ = prev_obj;
    if !converged {
        return Err(Error::NonConvergence {
            iterations: cfg.max_block_iters,
            residual: f64::NAN,
        });
    }

    // verify per-user KKT at the final interference state
    for u in 0..users {
        let (_, gains, powers) = &modes[u];
        let cost = eta * pm.amplifier_inefficiency[u];
        let res = kkt_residual(gains, powers, cost, pm.max_transmit);
        if res > cfg.kkt_tol {
            return Err(Error::NonConvergence { iterations: cfg.max_block_iters, residual: res });
        }
    }
    Ok(covs)
}

/// Dinkelbach ratio iterations for the transmit covariances at a fixed
/// basis. `rf_chains`/`phase_shifters` select the power denominator of the
/// architecture being optimized. Terminates at `|Δη| ≤ tol`; the η trace is
/// nondecreasing and at exit `|R − η·W| ≤ tol·W` holds for the final point.
#[allow(clippy::too_many_arguments)]
pub fn dinkelbach_covariances(
    basis: &CMat,
    channels: &ChannelRealization,
    pm: &PowerModel,
    rf_chains: usize,
    phase_shifters: usize,
    tol: f64,
    max_iters: usize,
    cfg: &SolverConfig,
) -> Result<(TransmitCovariances, DinkelbachState)> {
    let mut eta = 0.0f64;
    let mut trace = Vec::new();
    let mut covs = TransmitCovariances::zeros(
        &channels.per_user.iter().map(|g| g.ncols()).collect::<Vec<_>>(),
    );
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        covs = solve_inner(eta, basis, channels, pm, cfg)?;
        let rate = instantaneous_se(basis, channels, &covs, pm.noise_power)?;
        let power = total_power(&covs, pm, rf_chains, phase_shifters);
        let next = if rate > 0.0 { rate / power } else { 0.0 };
        trace.push(next);
        if (next - eta).abs() <= tol {
            eta = next;
            converged = true;
            break;
        }
        eta = next;
    }
    Ok((covs, DinkelbachState { eta, eta_trace: trace, iterations, converged }))
}

/// Row-space basis of possibly rank-deficient weights: right singular
/// vectors of the nonzero singular directions only.
fn effective_row_basis(weights: &WeightMatrix) -> Result<CMat> {
    match row_space_basis(weights) {
        Ok(b) => Ok(b),
        Err(_) => {
            let dense = weights.dense();
            let svd = dense.svd(false, true);
            let v_t = svd.v_t.ok_or_else(|| Error::numerical("SVD did not return V^H"))?;
            let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
            if rank == 0 {
                return Err(Error::numerical("synthesized weights are identically zero"));
            }
            Ok(v_t.rows(0, rank).adjoint())
        }
    }
}

/// Alternating EE maximization with instantaneous CSI.
///
/// Initializes the basis from the uniform-power aggregate `Σ_u G_u G_u^H`,
/// alternates [`dinkelbach_covariances`] and [`optimal_subspace`] until the
/// EE change is below `cfg.outer_tol_rel`, then synthesizes constrained
/// weights for `set` and reports the EE on their actual row space.
pub fn ao_instantaneous(
    channels: &ChannelRealization,
    pm: &PowerModel,
    k: usize,
    set: &FeasibleSet,
    cfg: &AoConfig,
) -> Result<AoOutcome> {
    pm.validate()?;
    set.validate()?;
    let m = channels.num_elements();
    if k == 0 || k > m || m % k != 0 {
        return Err(Error::validation(format!(
            "{k} microstrips do not evenly split {m} elements"
        )));
    }

    // uniform-power initialization of the subspace
    let mut aggregate = CMat::zeros(m, m);
    for g in &channels.per_user {
        aggregate += g * g.adjoint();
    }
    let mut basis = top_k_eigvecs(&aggregate, k)?;

    let mut ee_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut covs = TransmitCovariances::zeros(
        &channels.per_user.iter().map(|g| g.ncols()).collect::<Vec<_>>(),
    );
    let mut dinkelbach = DinkelbachState {
        eta: 0.0,
        eta_trace: Vec::new(),
        iterations: 0,
        converged: false,
    };
    let mut outer_iterations = 0;
    for _ in 0..cfg.max_outer {
        outer_iterations += 1;
        let (p, state) = dinkelbach_covariances(
            &basis,
            channels,
            pm,
            k,
            0,
            cfg.dinkelbach_tol,
            cfg.max_dinkelbach,
            &cfg.solver,
        )?;
        covs = p;
        dinkelbach = state;
        basis = optimal_subspace(channels, &covs, pm.noise_power, k)?;
        let rate = instantaneous_se(&basis, channels, &covs, pm.noise_power)?;
        let power = total_power(&covs, pm, k, 0);
        let ee = pm.bandwidth * rate / power;
        let prev = ee_trace.last().copied();
        ee_trace.push(ee);
        if let Some(prev) = prev {
            if (ee - prev).abs() <= cfg.outer_tol_rel * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    let pre_projection_ee = ee_trace.last().copied().unwrap_or(0.0);

    let am = synthesize_weights(&basis, set, &cfg.am)?;
    let constrained_basis = effective_row_basis(&am.weights)?;
    let rate = instantaneous_se(&constrained_basis, channels, &covs, pm.noise_power)?;
    let power = total_power(&covs, pm, k, 0);
    let result = EEResult::new(rate, power, pm.bandwidth)?;

    Ok(AoOutcome {
        weights: am.weights,
        covariances: covs,
        trace: AoTrace { ee_per_iteration: ee_trace, converged, outer_iterations },
        result,
        subspace: basis,
        pre_projection_ee,
        am_residual: am.residual,
        dinkelbach,
    })
}

/// EE of an architecture at a fixed combining subspace, used by the
/// baselines: Dinkelbach covariances for the given power denominator, then
/// the EE at those covariances.
#[allow(clippy::too_many_arguments)]
pub fn optimize_at_basis(
    basis: &CMat,
    channels: &ChannelRealization,
    pm: &PowerModel,
    rf_chains: usize,
    phase_shifters: usize,
    cfg: &AoConfig,
) -> Result<(TransmitCovariances, DinkelbachState, EEResult)> {
    let (covs, state) = dinkelbach_covariances(
        basis,
        channels,
        pm,
        rf_chains,
        phase_shifters,
        cfg.dinkelbach_tol,
        cfg.max_dinkelbach,
        &cfg.solver,
    )?;
    let rate = instantaneous_se(basis, channels, &covs, pm.noise_power)?;
    let power = total_power(&covs, pm, rf_chains, phase_shifters);
    let result = EEResult::new(rate, power, pm.bandwidth)?;
    Ok((covs, state, result))
}

/// Fixed transmit-independent power for the DMA architecture, kept here so
/// the harness prints the same denominator the optimizer used.
pub fn dma_fixed_power(pm: &PowerModel, k: usize) -> f64 {
    fixed_power(pm, k, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{log2_det_i_plus, random_complex_gaussian, random_orthonormal};
    use crate::C64;
    use crate::metrics::dbm_to_watts;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pm_with(num_users: usize, rho: f64, fixed: (f64, f64, f64), p_max: f64) -> PowerModel {
        PowerModel::uniform(num_users, rho, fixed.0, fixed.1, fixed.2, 0.03, p_max, 1.0, 1e7)
            .unwrap()
    }

    fn random_channels<R: rand::Rng>(
        m: usize,
        antennas: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> ChannelRealization {
        ChannelRealization {
            per_user: antennas
                .iter()
                .map(|&n| random_complex_gaussian(m, n, rng) * C64::new(scale, 0.0))
                .collect(),
        }
    }

    #[test]
    fn subspace_of_diagonal_aggregate_is_canonical() {
        // G = diag(√3, 1), P = I, σ² = 1 makes the aggregate diag(3, 1)
        let g = CMat::from_fn(2, 2, |r, c| {
            if r == c {
                C64::new(if r == 0 { 3f64.sqrt() } else { 1.0 }, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let channels = ChannelRealization { per_user: vec![g] };
        let covs = TransmitCovariances { per_user: vec![CMat::identity(2, 2)] };
        let basis = optimal_subspace(&channels, &covs, 1.0, 1).unwrap();
        assert!((basis[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(basis[(1, 0)].norm() < 1e-12);
        let se = instantaneous_se(&basis, &channels, &covs, 1.0).unwrap();
        assert_relative_eq!(se, 2.0, epsilon = 1e-12);

        assert!(optimal_subspace(&channels, &covs, 1.0, 3).is_err());
    }

    #[test]
    fn full_subspace_reaches_fully_digital_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let channels = random_channels(4, &[2, 2], 1.0, &mut rng);
        let covs = TransmitCovariances {
            per_user: vec![CMat::identity(2, 2) * C64::new(0.3, 0.0); 2],
        };
        let basis = optimal_subspace(&channels, &covs, 1.0, 4).unwrap();
        let se = instantaneous_se(&basis, &channels, &covs, 1.0).unwrap();
        let eye = CMat::identity(4, 4);
        let full = received_covariance(&eye, &channels, &covs, 1.0).unwrap();
        assert_relative_eq!(se, log2_det_i_plus(&full).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn subspace_beats_random_bases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let channels = random_channels(6, &[2, 2], 1.0, &mut rng);
            let covs = TransmitCovariances {
                per_user: vec![CMat::identity(2, 2) * C64::new(0.5, 0.0); 2],
            };
            let basis = optimal_subspace(&channels, &covs, 1.0, 2).unwrap();
            let best = instantaneous_se(&basis, &channels, &covs, 1.0).unwrap();
            for _ in 0..1000 {
                let cand = random_orthonormal(6, 2, &mut rng);
                let se = instantaneous_se(&cand, &channels, &covs, 1.0).unwrap();
                assert!(se <= best + 1e-9, "random basis beat the closed form: {se} > {best}");
            }
        }
    }

    #[test]
    fn inner_solver_waterfills_single_user() {
        // diagonal effective channel with gains (4, 1), η = 0, large budget
        let g = CMat::from_fn(2, 2, |r, c| {
            if r == c {
                C64::new(if r == 0 { 2.0 } else { 1.0 }, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let channels = ChannelRealization { per_user: vec![g] };
        let pm = pm_with(1, 1.0, (0.4, 0.5, 0.1), 10.0);
        let covs =
            solve_inner(0.0, &CMat::identity(2, 2), &channels, &pm, &SolverConfig::default())
                .unwrap();
        let p = &covs.per_user[0];
        // water level 5.625 over gains (4, 1)
        assert_relative_eq!(p[(0, 0)].re, 5.375, epsilon = 1e-8);
        assert_relative_eq!(p[(1, 1)].re, 4.625, epsilon = 1e-8);
        assert!(p[(0, 1)].norm() < 1e-10);
        // KKT: 1/(p_i + 1/s_i) equal across active modes
        let l0 = 1.0 / (p[(0, 0)].re + 0.25);
        let l1 = 1.0 / (p[(1, 1)].re + 1.0);
        assert_relative_eq!(l0, l1, epsilon = 1e-8);
    }

    #[test]
    fn inner_solver_shuts_off_at_huge_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let channels = random_channels(4, &[2, 2], 1.0, &mut rng);
        let pm = pm_with(2, 1.0, (0.4, 0.5, 0.1), 10.0);
        let basis = random_orthonormal(4, 2, &mut rng);
        let covs = solve_inner(1e9, &basis, &channels, &pm, &SolverConfig::default()).unwrap();
        assert!(covs.per_user.iter().all(|p| p.norm() == 0.0));
    }

    #[test]
    fn inner_solver_matches_projected_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let channels = random_channels(2, &[2, 2], 1.0, &mut rng);
        let pm = pm_with(2, 1.0, (0.4, 0.5, 0.1), 1.5);
        let basis = CMat::identity(2, 2);
        let eta = 0.4;
        let covs = solve_inner(eta, &basis, &channels, &pm, &SolverConfig::default()).unwrap();

        let objective = |covs: &TransmitCovariances| -> f64 {
            let s = received_covariance(&basis, &channels, covs, pm.noise_power).unwrap();
            let mut v = log2_det_i_plus(&s).unwrap();
            for u in 0..2 {
                v -= eta * pm.amplifier_inefficiency[u] * covs.trace_of(u);
            }
            v
        };

        // projected gradient ascent oracle
        let mut p = TransmitCovariances::zeros(&[2, 2]);
        let step = 0.05;
        for _ in 0..20_000 {
            let mut s = CMat::identity(2, 2);
            for (g, pu) in channels.per_user.iter().zip(&p.per_user) {
                s += g * pu * g.adjoint();
            }
            let sinv = s.try_inverse().unwrap();
            for u in 0..2 {
                let g = &channels.per_user[u];
                let grad = (g.adjoint() * &sinv * g).unscale(std::f64::consts::LN_2)
                    - CMat::identity(2, 2) * C64::new(eta * pm.amplifier_inefficiency[u], 0.0);
                let cand = hermitian_part(&(&p.per_user[u] + grad.scale(step)));
                // project onto {PSD, trace ≤ P_max} via eigenvalue clipping
                let eig = crate::linalg::sorted_hermitian_eigen(&cand).unwrap();
                let mut vals: Vec<f64> = eig.0.iter().map(|&v| v.max(0.0)).collect();
                let total: f64 = vals.iter().sum();
                if total > pm.max_transmit {
                    // water-shift projection onto the simplex
                    let mut mu_lo = 0.0;
                    let mut mu_hi = vals.iter().cloned().fold(0.0f64, f64::max);
                    for _ in 0..100 {
                        let mu = 0.5 * (mu_lo + mu_hi);
                        let s: f64 = vals.iter().map(|v| (v - mu).max(0.0)).sum();
                        if s > pm.max_transmit {
                            mu_lo = mu;
                        } else {
                            mu_hi = mu;
                        }
                    }
                    let mu = 0.5 * (mu_lo + mu_hi);
                    vals.iter_mut().for_each(|v| *v = (*v - mu).max(0.0));
                }
                let mut next = CMat::zeros(2, 2);
                for (i, &v) in vals.iter().enumerate() {
                    let col = eig.1.column(i);
                    next += (col * col.adjoint()).scale(v);
                }
                p.per_user[u] = hermitian_part(&next);
            }
        }
        let ours = objective(&covs);
        let oracle = objective(&p);
        assert!(
            (ours - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()),
            "objectives differ: block {ours:.9} vs gradient {oracle:.9}"
        );
        assert!(ours >= oracle - 1e-6);
    }

    #[test]
    fn dinkelbach_matches_scalar_grid_search() {
        // EE(p) = log2(1+p)/(p+1) with unit channel, unit noise, fixed power 1
        let channels =
            ChannelRealization { per_user: vec![CMat::from_element(1, 1, C64::new(1.0, 0.0))] };
        let pm = pm_with(1, 1.0, (0.4, 0.5, 0.1), 10.0);
        let basis = CMat::identity(1, 1);
        let (covs, state) = dinkelbach_covariances(
            &basis,
            &channels,
            &pm,
            1,
            0,
            1e-12,
            200,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(state.converged);
        let p_star = covs.trace_of(0);

        let mut best = (0.0, f64::NEG_INFINITY);
        let grid = 1_000_000;
        for i in 0..=grid {
            let p = 10.0 * i as f64 / grid as f64;
            let ee = (1.0 + p).log2() / (p + 1.0);
            if ee > best.1 {
                best = (p, ee);
            }
        }
        assert!((state.eta - best.1).abs() < 1e-4, "eta {} vs grid {}", state.eta, best.1);
        assert!((p_star - best.0).abs() < 1e-4, "p {} vs grid {}", p_star, best.0);
    }

    #[test]
    fn dinkelbach_zero_channel_is_silent() {
        let channels = ChannelRealization { per_user: vec![CMat::zeros(2, 2)] };
        let pm = pm_with(1, 1.0, (0.4, 0.5, 0.1), 10.0);
        let basis = CMat::identity(2, 2).columns(0, 1).clone_owned();
        let (covs, state) = dinkelbach_covariances(
            &basis,
            &channels,
            &pm,
            1,
            0,
            1e-6,
            100,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(state.eta, 0.0);
        assert!(covs.per_user[0].norm() == 0.0);
    }

    #[test]
    fn dinkelbach_eta_trace_is_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let channels = random_channels(4, &[2, 2], 1.0, &mut rng);
            let pm = pm_with(2, 0.5, (0.4, 0.5, 0.1), 2.0);
            let basis = random_orthonormal(4, 2, &mut rng);
            let (_, state) = dinkelbach_covariances(
                &basis,
                &channels,
                &pm,
                2,
                0,
                1e-8,
                100,
                &SolverConfig::default(),
            )
            .unwrap();
            for w in state.eta_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "eta decreased: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn ao_trace_is_nondecreasing_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let channels = random_channels(4, &[2, 2], 1.0, &mut rng);
            let pm = pm_with(2, 0.5, (0.4, 0.5, 0.1), 2.0);
            let out = ao_instantaneous(
                &channels,
                &pm,
                2,
                &FeasibleSet::Unconstrained,
                &AoConfig::default(),
            )
            .unwrap();
            for w in out.trace.ee_per_iteration.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0),
                    "EE decreased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn single_strip_synthesis_is_lossless() {
        // K = 1: the structure constraint is vacuous, so the unconstrained
        // fit recovers the subspace and post-projection EE matches
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let channels = random_channels(4, &[2], 1.0, &mut rng);
        let pm = pm_with(1, 0.5, (0.4, 0.5, 0.1), 2.0);
        let out = ao_instantaneous(
            &channels,
            &pm,
            1,
            &FeasibleSet::Unconstrained,
            &AoConfig::default(),
        )
        .unwrap();
        assert!(out.am_residual < 1e-8);
        assert_relative_eq!(
            out.result.ee_bits_per_joule,
            out.pre_projection_ee,
            max_relative = 1e-6
        );
    }

    #[test]
    fn se_oriented_mode_uses_full_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let channels = random_channels(4, &[2, 2], 1.0, &mut rng);
        let pm = pm_with(2, 0.5, (0.4, 0.5, 0.1), 2.0).se_oriented();
        let out = ao_instantaneous(
            &channels,
            &pm,
            2,
            &FeasibleSet::Unconstrained,
            &AoConfig::default(),
        )
        .unwrap();
        for u in 0..2 {
            assert_relative_eq!(
                out.covariances.trace_of(u),
                pm.max_transmit,
                max_relative = 1e-6
            );
        }

        // the SE-oriented optimum agrees with a pure SE maximizer (η = 0)
        let se_covs =
            solve_inner(0.0, &out.subspace, &channels, &pm, &SolverConfig::default()).unwrap();
        let se_direct =
            instantaneous_se(&out.subspace, &channels, &se_covs, pm.noise_power).unwrap();
        let se_dink = instantaneous_se(&out.subspace, &channels, &out.covariances, pm.noise_power)
            .unwrap();
        assert_relative_eq!(se_direct, se_dink, max_relative = 1e-6);
    }

    #[test]
    fn section_defaults_shape_sanity() {
        // smoke test at the experiment scale: one outer AO run stays sane
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let channels = random_channels(16, &[2, 2], 1e-5, &mut rng);
        let pm = PowerModel::uniform(
            2,
            0.3,
            dbm_to_watts(20.0),
            dbm_to_watts(40.0),
            dbm_to_watts(30.0),
            0.03,
            dbm_to_watts(30.0),
            dbm_to_watts(-96.0),
            1e7,
        )
        .unwrap();
        let out = ao_instantaneous(
            &channels,
            &pm,
            4,
            &FeasibleSet::LorentzianPhase,
            &AoConfig::default(),
        )
        .unwrap();
        assert!(out.result.se_bits_per_s_per_hz > 0.0);
        assert!(out.result.ee_bits_per_joule > 0.0);
        assert!(out.weights.in_set(&FeasibleSet::LorentzianPhase, 1e-9));
    }
}
