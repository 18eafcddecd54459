//! Jointly-correlated Rayleigh channel synthesis and sampling.
//!
//! The uplink channel of user `u` is `G_u = U_u G̃_u V_u^H`, where `U_u` and
//! `V_u` are deterministic unitary eigenbases and the beam-domain matrix
//! `G̃_u` has independent zero-mean complex Gaussian entries whose variances
//! are collected in the coupling matrix `Ω_u = E[G̃_u ⊙ G̃_u*]`.
//!
//! Real propagation software is replaced by a seeded synthetic generator
//! with two knobs: `sparsity` controls how many beam pairs couple at all and
//! `decay` controls how fast the coupled energies fall off. The decay also
//! biases which receive beams are active, so different users share their
//! strongest receive directions the way co-located scatterers would make
//! them do. The receive basis itself is drawn once per seed and shared by
//! all users, matching its physical role as a property of the array.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, is_orthonormal, random_complex_gaussian, random_orthonormal};
use crate::{C64, CMat, RMat, RVec};

/// Array and user-population dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelDims {
    /// Number of uplink users `U`.
    pub num_users: usize,
    /// Antennas per user, one entry per user.
    pub antennas_per_user: Vec<usize>,
    /// Number of microstrips `K` (one RF chain each).
    pub microstrips: usize,
    /// Metamaterial elements per microstrip `L`.
    pub elements_per_strip: usize,
}

impl ChannelDims {
    /// All users carry the same number of antennas.
    pub fn uniform(num_users: usize, antennas: usize, microstrips: usize, elements: usize) -> Self {
        ChannelDims {
            num_users,
            antennas_per_user: vec![antennas; num_users],
            microstrips,
            elements_per_strip: elements,
        }
    }

    /// Total number of metamaterial elements `M = K·L`.
    pub fn total_elements(&self) -> usize {
        self.microstrips * self.elements_per_strip
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::validation("at least one user required"));
        }
        if self.antennas_per_user.len() != self.num_users {
            return Err(Error::validation(format!(
                "antennas_per_user has {} entries for {} users",
                self.antennas_per_user.len(),
                self.num_users
            )));
        }
        if self.antennas_per_user.iter().any(|&n| n == 0) {
            return Err(Error::validation("every user needs at least one antenna"));
        }
        if self.microstrips == 0 || self.elements_per_strip == 0 {
            return Err(Error::validation("microstrips and elements per strip must be >= 1"));
        }
        Ok(())
    }
}

/// Per-user second-order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannelStats {
    /// Receive eigenbasis `U_u`, unitary `M×M`.
    pub receive_basis: CMat,
    /// Transmit eigenbasis `V_u`, unitary `N_u×N_u`.
    pub transmit_basis: CMat,
    /// Eigenmode coupling matrix `Ω_u`, nonnegative `M×N_u`, linear power.
    pub coupling: RMat,
    /// Large-scale gain (linear power scale).
    pub large_scale_gain: f64,
}

/// Statistical CSI for the whole cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub dims: ChannelDims,
    pub users: Vec<UserChannelStats>,
}

impl ChannelStats {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let m = self.dims.total_elements();
        if self.users.len() != self.dims.num_users {
            return Err(Error::validation("user count mismatch between dims and stats"));
        }
        for (u, s) in self.users.iter().enumerate() {
            let n = self.dims.antennas_per_user[u];
            if s.receive_basis.shape() != (m, m) || s.transmit_basis.shape() != (n, n) {
                return Err(Error::validation(format!("eigenbasis shape mismatch for user {u}")));
            }
            if !is_orthonormal(&s.receive_basis, 1e-10) || !is_orthonormal(&s.transmit_basis, 1e-10)
            {
                return Err(Error::validation(format!("eigenbasis of user {u} is not unitary")));
            }
            if s.coupling.shape() != (m, n) {
                return Err(Error::validation(format!("coupling shape mismatch for user {u}")));
            }
            if s.coupling.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(Error::validation(format!("coupling of user {u} has negative entries")));
            }
            if s.coupling.sum() <= 0.0 {
                return Err(Error::validation(format!("coupling of user {u} carries no energy")));
            }
        }
        Ok(())
    }
}

/// One instantaneous realization `G_u` per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub per_user: Vec<CMat>,
}

impl ChannelRealization {
    pub fn num_users(&self) -> usize {
        self.per_user.len()
    }

    /// Number of receive elements `M` (rows of every `G_u`).
    pub fn num_elements(&self) -> usize {
        self.per_user.first().map_or(0, |g| g.nrows())
    }
}

/// Deterministic per-element waveguide attenuation.
///
/// Element `l` of every microstrip sees an amplitude gain `exp(−alpha·l)`;
/// a disabled profile is the identity. The microstrip count trade-off comes
/// from propagation loss growing with the number of elements per strip, but
/// no closed form exists for it, so the exponent stays a config knob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationProfile {
    pub alpha: f64,
    pub enabled: bool,
}

impl AttenuationProfile {
    pub fn disabled() -> Self {
        AttenuationProfile { alpha: 0.0, enabled: false }
    }

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::validation("attenuation exponent must be >= 0"));
        }
        Ok(AttenuationProfile { alpha, enabled: true })
    }

    /// Amplitude gain of every element, indexed `(k−1)·L + l − 1`.
    pub fn element_gains(&self, dims: &ChannelDims) -> RVec {
        let m = dims.total_elements();
        let l_per = dims.elements_per_strip;
        RVec::from_fn(m, |i, _| {
            if self.enabled {
                let l = (i % l_per) + 1;
                (-self.alpha * l as f64).exp()
            } else {
                1.0
            }
        })
    }
}

/// Knobs of the synthetic statistics generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsConfig {
    /// Fraction of beam pairs that couple, in `(0, 1]`.
    pub sparsity: f64,
    /// Exponential fall-off rate of the coupled energies (> 0).
    pub decay: f64,
    /// Large-scale gain in dB (applied identically to every user).
    pub large_scale_gain_db: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { sparsity: 0.25, decay: 0.8, large_scale_gain_db: -120.0 }
    }
}

/// SplitMix64 step; used to derive independent sub-seeds from `(seed, tag)`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Synthesize jointly-correlated channel statistics.
///
/// Deterministic for a fixed `(dims, cfg, seed)`. The receive basis is drawn
/// once and shared across users; transmit bases are per user. Per user,
/// `⌈sparsity·M·N_u⌉` coupling entries are selected by weighted sampling
/// without replacement (receive-beam weight `exp(−decay·m)`), the `j`-th
/// selected entry gets magnitude `exp(−decay·j)`, and the matrix is scaled so
/// the expected squared Frobenius norm of `G_u` equals `M·N_u·gain`.
pub fn generate_channel_stats(
    dims: &ChannelDims,
    cfg: &StatsConfig,
    seed: u64,
) -> Result<ChannelStats> {
    dims.validate()?;
    if !(cfg.sparsity > 0.0 && cfg.sparsity <= 1.0) {
        return Err(Error::validation("sparsity must lie in (0, 1]"));
    }
    if !(cfg.decay > 0.0) {
        return Err(Error::validation("decay must be > 0"));
    }
    let m = dims.total_elements();
    let gain = 10f64.powf(cfg.large_scale_gain_db / 10.0);

    let mut rx_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let receive_basis = random_orthonormal(m, m, &mut rx_rng);

    let mut users = Vec::with_capacity(dims.num_users);
    for u in 0..dims.num_users {
        let n = dims.antennas_per_user[u];
        let mut tx_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1 + u as u64));
        let transmit_basis = random_orthonormal(n, n, &mut tx_rng);

        let mut cp_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 10_000 + u as u64));
        let coupling = synth_coupling(m, n, cfg, gain, &mut cp_rng);

        users.push(UserChannelStats {
            receive_basis: receive_basis.clone(),
            transmit_basis,
            coupling,
            large_scale_gain: gain,
        });
    }
    Ok(ChannelStats { dims: dims.clone(), users })
}

fn synth_coupling<R: Rng>(m: usize, n: usize, cfg: &StatsConfig, gain: f64, rng: &mut R) -> RMat {
    let total = m * n;
    let count = ((cfg.sparsity * total as f64).ceil() as usize).clamp(1, total);

    // weighted sampling without replacement, receive-beam weight e^{−decay·m}
    let mut weights: Vec<f64> = (0..total).map(|p| (-cfg.decay * (p % m) as f64).exp()).collect();
    let mut omega = RMat::zeros(m, n);
    for j in 0..count {
        let wsum: f64 = weights.iter().sum();
        let mut target = rng.random::<f64>() * wsum;
        let mut pick = total - 1;
        for (p, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            target -= w;
            if target <= 0.0 {
                pick = p;
                break;
            }
        }
        let (row, col) = (pick % m, pick / m);
        omega[(row, col)] = (-cfg.decay * j as f64).exp();
        weights[pick] = 0.0;
    }

    let scale = m as f64 * n as f64 * gain / omega.sum();
    omega * scale
}

/// Draw one instantaneous realization `G_u = Diag(a)·U_u·G̃_u·V_u^H`.
///
/// Beam-domain entries are independent `CN(0, Ω_{m,n})`; users use
/// independent sub-streams of `seed`, so the result is deterministic for a
/// fixed seed and identical no matter how calls are scheduled.
pub fn sample_channel_realization(
    stats: &ChannelStats,
    profile: &AttenuationProfile,
    seed: u64,
) -> ChannelRealization {
    let gains = profile.element_gains(&stats.dims);
    let per_user = stats
        .users
        .iter()
        .enumerate()
        .map(|(u, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 77_000 + u as u64));
            let (m, n) = s.coupling.shape();
            let mut beam = random_complex_gaussian(m, n, &mut rng);
            for c in 0..n {
                for r in 0..m {
                    beam[(r, c)] *= C64::new(s.coupling[(r, c)].sqrt(), 0.0);
                }
            }
            let mut g = &s.receive_basis * beam * s.transmit_basis.adjoint();
            for r in 0..m {
                let a = gains[r];
                if a != 1.0 {
                    for c in 0..n {
                        g[(r, c)] *= C64::new(a, 0.0);
                    }
                }
            }
            g
        })
        .collect();
    ChannelRealization { per_user }
}

/// Empirical coupling matrices: the mean of `|U_u^H G_u V_u|²` entrywise
/// over the given realizations (attenuation assumed disabled).
pub fn estimate_coupling(
    samples: &[ChannelRealization],
    stats: &ChannelStats,
) -> Result<Vec<RMat>> {
    if samples.is_empty() {
        return Err(Error::validation("at least one realization required"));
    }
    let m = stats.dims.total_elements();
    let mut acc: Vec<RMat> =
        stats.users.iter().map(|s| RMat::zeros(m, s.coupling.ncols())).collect();
    for sample in samples {
        if sample.per_user.len() != stats.users.len() {
            return Err(Error::validation("realization has a different user count"));
        }
        for (u, g) in sample.per_user.iter().enumerate() {
            let s = &stats.users[u];
            if g.shape() != (m, s.coupling.ncols()) {
                return Err(Error::validation(format!("realization of user {u} has wrong shape")));
            }
            if !all_finite(g) {
                return Err(Error::validation(format!("realization of user {u} is not finite")));
            }
            let beam = s.receive_basis.adjoint() * g * &s.transmit_basis;
            for c in 0..beam.ncols() {
                for r in 0..beam.nrows() {
                    acc[u][(r, c)] += beam[(r, c)].norm_sqr();
                }
            }
        }
    }
    let inv = 1.0 / samples.len() as f64;
    Ok(acc.into_iter().map(|a| a * inv).collect())
}
