//! EE maximization with statistical CSI.
//!
//! Knowing only the channel statistics, the transmit covariances factor as
//! `P_u = V_u Λ_u V_u^H`: the directions are the transmit eigenbasis (that
//! choice is optimal for the jointly-correlated model) and only the diagonal
//! loadings `Λ_u` remain to optimize. The ergodic rate is replaced by its
//! deterministic equivalent
//!
//! ```text
//! R_DE = Σ_u log2|I + Ξ_u Λ_u| + log2|I_K + Ψ| − (1/ln2) Σ_u γ_u^T Ω_u ψ_u
//! ```
//!
//! where `(γ, ψ)` solve the coupled fixed point
//!
//! ```text
//! γ_{u,m} = (1/σ²) û_{u,m}^H (I_K + Ψ)^{-1} û_{u,m}
//! ψ_{u,n} = λ_{u,n} / (1 + ξ_{u,n} λ_{u,n})
//! ```
//!
//! with `Û_u = V̄2^H Diag(a) U_u`, `Ξ_u = diag(Ω_u^T γ_u)`, and
//! `Ψ = (1/σ²) Σ_u Û_u diag(Ω_u ψ_u) Û_u^H`. Power allocation runs
//! Dinkelbach ratio iterations whose inner step water-fills the separable
//! first term against fixed cross-terms, refreshing the fixed point after
//! every loading update; the subspace update takes the top-`K` eigenvectors
//! of `A = (1/σ²) Σ_u Diag(a) U_u diag(Ω_u ψ_u) U_u^H Diag(a)`.

use crate::channel::{AttenuationProfile, ChannelStats};
use crate::dma::{row_space_basis, synthesize_weights, FeasibleSet, WeightMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_part, is_orthonormal, log2_det_i_plus, solve_hermitian, subspace_distance,
    top_k_eigvecs,
};
use crate::metrics::{
    ergodic_se_monte_carlo, fixed_power, EEResult, PowerModel, TransmitCovariances,
};
use crate::opt_inst::{AoConfig, AoTrace, DinkelbachState};
use crate::waterfill::allocate;
use crate::{C64, CMat, RVec};

/// Per-user diagonal power loadings `Λ_u` (in the transmit eigenbasis).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocations {
    pub per_user: Vec<RVec>,
}

impl PowerAllocations {
    pub fn zeros(antennas_per_user: &[usize]) -> Self {
        PowerAllocations { per_user: antennas_per_user.iter().map(|&n| RVec::zeros(n)).collect() }
    }

    /// Uniform loading that spends the full budget of every user.
    pub fn uniform(antennas_per_user: &[usize], budget: f64) -> Self {
        PowerAllocations {
            per_user: antennas_per_user
                .iter()
                .map(|&n| RVec::from_element(n, budget / n as f64))
                .collect(),
        }
    }

    pub fn total_of(&self, u: usize) -> f64 {
        self.per_user[u].sum()
    }

    pub fn validate(&self, max_transmit: f64) -> Result<()> {
        for (u, l) in self.per_user.iter().enumerate() {
            if l.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::validation(format!("negative loading for user {u}")));
            }
            if l.sum() > max_transmit + 1e-9 {
                return Err(Error::validation(format!("loading of user {u} exceeds the budget")));
            }
        }
        Ok(())
    }

    /// Full covariances `P_u = V_u Λ_u V_u^H`.
    pub fn to_covariances(&self, stats: &ChannelStats) -> TransmitCovariances {
        let per_user = self
            .per_user
            .iter()
            .zip(&stats.users)
            .map(|(l, s)| {
                let v = &s.transmit_basis;
                let mut p = CMat::zeros(l.len(), l.len());
                for i in 0..l.len() {
                    if l[i] > 0.0 {
                        let col = v.column(i);
                        p += (col * col.adjoint()).scale(l[i]);
                    }
                }
                hermitian_part(&p)
            })
            .collect();
        TransmitCovariances { per_user }
    }
}

/// Optimal transmit directions: the transmit eigenbasis of every user.
pub fn optimal_directions(stats: &ChannelStats) -> Vec<CMat> {
    stats.users.iter().map(|s| s.transmit_basis.clone()).collect()
}

/// Converged deterministic-equivalent state.
#[derive(Debug, Clone)]
pub struct DeSolution {
    /// `γ_u`, one `M`-vector per user.
    pub gamma: Vec<RVec>,
    /// `ψ_u`, one `N_u`-vector per user.
    pub psi: Vec<RVec>,
    /// Diagonal of `Ξ_u = diag(Ω_u^T γ_u)` per user.
    pub xi_diag: Vec<RVec>,
    /// `Ψ = Σ_u Ψ_u`, `K×K` Hermitian.
    pub psi_total: CMat,
    /// Deterministic-equivalent rate (bits/s/Hz).
    pub rate_de: f64,
    pub iterations: usize,
    /// Fixed-point residual `‖ψ^(ℓ) − ψ^(ℓ−1)‖_F` at exit.
    pub residual: f64,
}

fn receive_maps(stats: &ChannelStats, basis: &CMat, profile: &AttenuationProfile) -> Vec<CMat> {
    let gains = profile.element_gains(&stats.dims);
    stats
        .users
        .iter()
        .map(|s| {
            let mut atten = s.receive_basis.clone();
            for r in 0..atten.nrows() {
                let a = gains[r];
                if a != 1.0 {
                    for c in 0..atten.ncols() {
                        atten[(r, c)] *= C64::new(a, 0.0);
                    }
                }
            }
            basis.adjoint() * atten
        })
        .collect()
}

fn psi_matrix(maps: &[CMat], stats: &ChannelStats, psi: &[RVec], noise_power: f64) -> CMat {
    let k = maps[0].nrows();
    let mut total = CMat::zeros(k, k);
    for (u, map) in maps.iter().enumerate() {
        let weights = &stats.users[u].coupling * &psi[u];
        for m in 0..map.ncols() {
            let w = weights[m];
            if w != 0.0 {
                let col = map.column(m);
                total += (col * col.adjoint()).scale(w / noise_power);
            }
        }
    }
    hermitian_part(&total)
}

/// Solve the deterministic-equivalent fixed point for the given loadings
/// and receive subspace, starting from `ψ = 0`.
pub fn deterministic_equivalent(
    allocs: &PowerAllocations,
    basis: &CMat,
    stats: &ChannelStats,
    profile: &AttenuationProfile,
    noise_power: f64,
    tol: f64,
    max_iters: usize,
) -> Result<DeSolution> {
    if !is_orthonormal(basis, 1e-8) {
        return Err(Error::validation("basis columns must be orthonormal"));
    }
    allocs.validate(f64::INFINITY)?;
    if allocs.per_user.len() != stats.users.len() {
        return Err(Error::validation("allocation/stats user counts differ"));
    }
    let users = stats.users.len();
    let k = basis.ncols();
    let maps = receive_maps(stats, basis, profile);

    let mut psi: Vec<RVec> = allocs.per_user.iter().map(|l| RVec::zeros(l.len())).collect();
    let mut gamma: Vec<RVec> = maps.iter().map(|m| RVec::zeros(m.ncols())).collect();
    let mut xi: Vec<RVec> = psi.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // γ from the current ψ
        let psi_mat = psi_matrix(&maps, stats, &psi, noise_power);
        let resolvent_arg = CMat::identity(k, k) + &psi_mat;
        for (u, map) in maps.iter().enumerate() {
            let solved = solve_hermitian(&resolvent_arg, map)?;
            let g = &mut gamma[u];
            for m in 0..map.ncols() {
                let mut acc = 0.0;
                for r in 0..k {
                    acc += (map[(r, m)].conj() * solved[(r, m)]).re;
                }
                g[m] = (acc / noise_power).max(0.0);
            }
        }
        // ψ from the new γ
        residual = 0.0;
        for u in 0..users {
            let xi_u = stats.users[u].coupling.transpose() * &gamma[u];
            let l = &allocs.per_user[u];
            for n in 0..l.len() {
                let next = l[n] / (1.0 + xi_u[n] * l[n]);
                let d = next - psi[u][n];
                residual += d * d;
                psi[u][n] = next;
            }
            xi[u] = xi_u;
        }
        residual = residual.sqrt();
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(Error::NonConvergence { iterations, residual });
    }

    let psi_mat = psi_matrix(&maps, stats, &psi, noise_power);
    let mut rate = log2_det_i_plus(&psi_mat)?;
    for u in 0..users {
        let l = &allocs.per_user[u];
        for n in 0..l.len() {
            rate += (1.0 + xi[u][n] * l[n]).log2();
        }
        rate -= gamma[u].dot(&(&stats.users[u].coupling * &psi[u])) / std::f64::consts::LN_2;
    }

    Ok(DeSolution {
        gamma,
        psi,
        xi_diag: xi,
        psi_total: psi_mat,
        rate_de: rate.max(0.0),
        iterations,
        residual,
    })
}

/// The matrix `A = (1/σ²) Σ_u Diag(a) U_u diag(Ω_u ψ_u) U_u^H Diag(a)`
/// whose top eigenvectors solve the statistical subspace problem.
pub fn statistical_aggregate(
    psi: &[RVec],
    stats: &ChannelStats,
    profile: &AttenuationProfile,
    noise_power: f64,
) -> Result<CMat> {
    if psi.len() != stats.users.len() {
        return Err(Error::validation("psi/stats user counts differ"));
    }
    let m = stats.dims.total_elements();
    let eye = CMat::identity(m, m);
    let maps = receive_maps(stats, &eye, profile);
    Ok(psi_matrix(&maps, stats, psi, noise_power))
}

/// Closed-form subspace update for statistical CSI: top-`K` eigenvectors of
/// [`statistical_aggregate`]. The boolean flags the degenerate `A = 0` case
/// (then any basis is optimal and a deterministic canonical one is
/// returned).
pub fn optimal_subspace_stat(
    psi: &[RVec],
    stats: &ChannelStats,
    profile: &AttenuationProfile,
    noise_power: f64,
    k: usize,
) -> Result<(CMat, bool)> {
    for (u, p) in psi.iter().enumerate() {
        if p.iter().any(|&x| x < 0.0) {
            return Err(Error::validation(format!("psi of user {u} has negative entries")));
        }
    }
    let a = statistical_aggregate(psi, stats, profile, noise_power)?;
    let m = a.nrows();
    if k > m {
        return Err(Error::validation(format!("subspace dimension {k} exceeds {m} elements")));
    }
    let degenerate = a.norm() == 0.0;
    let basis = top_k_eigvecs(&a, k)?;
    Ok((basis, degenerate))
}

/// Configuration of the statistical-CSI optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct StatConfig {
    pub ao: AoConfig,
    /// Fixed-point tolerance of the deterministic equivalent.
    pub de_tol: f64,
    pub de_max_iters: usize,
    /// Chordal-distance tolerance of the subspace alternation.
    pub subspace_tol: f64,
    pub max_subspace_iters: usize,
    /// Monte-Carlo re-evaluation of the final point (trials), if wanted.
    pub mc_reeval_trials: Option<usize>,
    pub mc_seed: u64,
}

impl Default for StatConfig {
    fn default() -> Self {
        StatConfig {
            ao: AoConfig::default(),
            de_tol: 1e-10,
            de_max_iters: 20_000,
            subspace_tol: 1e-6,
            max_subspace_iters: 100,
            mc_reeval_trials: None,
            mc_seed: 0,
        }
    }
}

struct DeContext<'a> {
    stats: &'a ChannelStats,
    profile: &'a AttenuationProfile,
    pm: &'a PowerModel,
    rf_chains: usize,
    phase_shifters: usize,
    cfg: &'a StatConfig,
}

impl DeContext<'_> {
    fn de(&self, allocs: &PowerAllocations, basis: &CMat) -> Result<DeSolution> {
        deterministic_equivalent(
            allocs,
            basis,
            self.stats,
            self.profile,
            self.pm.noise_power,
            self.cfg.de_tol,
            self.cfg.de_max_iters,
        )
    }

    fn power(&self, allocs: &PowerAllocations) -> f64 {
        let mut w = fixed_power(self.pm, self.rf_chains, self.phase_shifters);
        for (u, xi) in self.pm.amplifier_inefficiency.iter().enumerate() {
            w += xi * allocs.total_of(u);
        }
        w
    }

    /// Maximize `R_DE(Λ) − η·W(Λ)` by water-filling the separable first
    /// term against fixed `γ` and refreshing the fixed point after every
    /// loading update. Accepts a step only if the true objective improves,
    /// so the result is never worse than the warm start.
    fn maximize_subtracted(
        &self,
        eta: f64,
        basis: &CMat,
        start: &PowerAllocations,
        start_de: &DeSolution,
    ) -> Result<(PowerAllocations, DeSolution)> {
        let mut allocs = start.clone();
        let mut de = start_de.clone();
        let mut obj = de.rate_de - eta * self.power(&allocs);
        for _ in 0..self.cfg.ao.max_dinkelbach {
            let mut next = allocs.clone();
            for (u, lam) in next.per_user.iter_mut().enumerate() {
                let gains: Vec<f64> = de.xi_diag[u].iter().cloned().collect();
                let cost = eta * self.pm.amplifier_inefficiency[u];
                let p = allocate(
                    &gains,
                    cost,
                    self.pm.max_transmit,
                    self.cfg.ao.solver.bisection_tol,
                )?;
                for (i, &pi) in p.iter().enumerate() {
                    lam[i] = pi;
                }
            }
            let next_de = self.de(&next, basis)?;
            let next_obj = next_de.rate_de - eta * self.power(&next);
            if next_obj <= obj + 1e-12 * obj.abs().max(1.0) {
                if next_obj > obj {
                    allocs = next;
                    de = next_de;
                }
                break;
            }
            allocs = next;
            de = next_de;
            obj = next_obj;
        }
        Ok((allocs, de))
    }
}

/// Dinkelbach ratio iterations for the power loadings at a fixed subspace.
/// Warm-starts from `start` so the η trace is nondecreasing; terminates at
/// `|Δη| ≤ tol` with the root condition `|R_DE − η·W| ≤ tol·W`.
#[allow(clippy::too_many_arguments)]
pub fn dinkelbach_allocations(
    basis: &CMat,
    stats: &ChannelStats,
    profile: &AttenuationProfile,
    pm: &PowerModel,
    rf_chains: usize,
    phase_shifters: usize,
    start: Option<&PowerAllocations>,
    cfg: &StatConfig,
) -> Result<(PowerAllocations, DinkelbachState)> {
    let ctx = DeContext { stats, profile, pm, rf_chains, phase_shifters, cfg };
    let antennas: Vec<usize> = stats.dims.antennas_per_user.clone();
    let mut allocs = match start {
        Some(a) => a.clone(),
        None => PowerAllocations::zeros(&antennas),
    };
    let mut de = ctx.de(&allocs, basis)?;
    let mut eta = {
        let w = ctx.power(&allocs);
        if de.rate_de > 0.0 {
            de.rate_de / w
        } else {
            0.0
        }
    };
    let tol = cfg.ao.dinkelbach_tol;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.ao.max_dinkelbach {
        iterations += 1;
        let (next, next_de) = ctx.maximize_subtracted(eta, basis, &allocs, &de)?;
        allocs = next;
        de = next_de;
        let w = ctx.power(&allocs);
        let next_eta = if de.rate_de > 0.0 { de.rate_de / w } else { 0.0 };
        trace.push(next_eta);
        if (next_eta - eta).abs() <= tol {
            eta = next_eta;
            converged = true;
            break;
        }
        eta = next_eta;
    }
    Ok((allocs, DinkelbachState { eta, eta_trace: trace, iterations, converged }))
}

/// Everything the statistical-CSI optimizer produces.
#[derive(Debug, Clone)]
pub struct AoStatOutcome {
    pub weights: WeightMatrix,
    pub allocations: PowerAllocations,
    pub trace: AoTrace,
    /// Deterministic-equivalent EE on the row space of the constrained
    /// weights — the reported number.
    pub result: EEResult,
    pub subspace: CMat,
    pub pre_projection_ee: f64,
    pub am_residual: f64,
    /// Final fixed-point state on the constrained row space.
    pub de: DeSolution,
    /// Monte-Carlo re-evaluation of the final point, when requested.
    pub mc_result: Option<EEResult>,
    pub dinkelbach: DinkelbachState,
}

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

/// Alternating EE maximization with statistical CSI.
///
/// Per outer round: Dinkelbach loadings at the current subspace, then the
/// subspace/fixed-point alternation (each candidate accepted only if the EE
/// improves), until the EE change falls below `cfg.ao.outer_tol_rel`.
/// Finishes with constrained weight synthesis; the reported EE comes from
/// the deterministic equivalent on the synthesized row space, with an
/// optional Monte-Carlo cross-check.
pub fn ao_statistical(
    stats: &ChannelStats,
    profile: &AttenuationProfile,
    pm: &PowerModel,
    k: usize,
    set: &FeasibleSet,
    cfg: &StatConfig,
) -> Result<AoStatOutcome> {
    stats.validate()?;
    pm.validate()?;
    set.validate()?;
    let m = stats.dims.total_elements();
    if k == 0 || k > m || m % k != 0 {
        return Err(Error::validation(format!(
            "{k} microstrips do not evenly split {m} elements"
        )));
    }
    let ctx = DeContext { stats, profile, pm, rf_chains: k, phase_shifters: 0, cfg };

    // uniform full-power loadings seed the subspace
    let mut allocs = PowerAllocations::uniform(&stats.dims.antennas_per_user, pm.max_transmit);
    let seed_psi: Vec<RVec> = allocs.per_user.clone();
    let (mut basis, _) = optimal_subspace_stat(&seed_psi, stats, profile, pm.noise_power, k)?;

    let mut ee_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut outer_iterations = 0;
    let mut dinkelbach =
        DinkelbachState { eta: 0.0, eta_trace: Vec::new(), iterations: 0, converged: false };

    for outer in 0..cfg.ao.max_outer {
        outer_iterations += 1;
        let warm = if outer == 0 { None } else { Some(&allocs) };
        let (next_allocs, state) =
            dinkelbach_allocations(&basis, stats, profile, pm, k, 0, warm, cfg)?;
        allocs = next_allocs;
        dinkelbach = state;
        let mut de = ctx.de(&allocs, &basis)?;
        let mut ee = pm.bandwidth * de.rate_de / ctx.power(&allocs);

        // subspace / fixed-point alternation, accepting improvements only
        for _ in 0..cfg.max_subspace_iters {
            let (candidate, degenerate) =
                optimal_subspace_stat(&de.psi, stats, profile, pm.noise_power, k)?;
            if degenerate {
                break;
            }
            let cand_de = ctx.de(&allocs, &candidate)?;
            let cand_ee = pm.bandwidth * cand_de.rate_de / ctx.power(&allocs);
            let distance = subspace_distance(&basis, &candidate);
            let improved = cand_ee >= ee;
            if improved {
                basis = candidate;
                de = cand_de;
                ee = cand_ee;
            }
            if distance <= cfg.subspace_tol || !improved {
                break;
            }
        }

        let prev = ee_trace.last().copied();
        ee_trace.push(ee);
        if let Some(prev) = prev {
            if (ee - prev).abs() <= cfg.ao.outer_tol_rel * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    let pre_projection_ee = ee_trace.last().copied().unwrap_or(0.0);

    let am = synthesize_weights(&basis, set, &cfg.ao.am)?;
    let constrained_basis = effective_row_basis(&am.weights)?;
    let final_de = ctx.de(&allocs, &constrained_basis)?;
    let power = ctx.power(&allocs);
    let result = EEResult::new(final_de.rate_de, power, pm.bandwidth)?;

    let mc_result = match cfg.mc_reeval_trials {
        Some(trials) if trials > 0 => {
            let covs = allocs.to_covariances(stats);
            let (mean, _) = ergodic_se_monte_carlo(
                stats,
                &constrained_basis,
                &covs,
                pm.noise_power,
                profile,
                trials,
                cfg.mc_seed,
            )?;
            Some(EEResult::new(mean, power, pm.bandwidth)?)
        }
        _ => None,
    };

    Ok(AoStatOutcome {
        weights: am.weights,
        allocations: allocs,
        trace: AoTrace { ee_per_iteration: ee_trace, converged, outer_iterations },
        result,
        subspace: basis,
        pre_projection_ee,
        am_residual: am.residual,
        de: final_de,
        mc_result,
        dinkelbach,
    })
}
