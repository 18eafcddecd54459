//! Spectral efficiency, power consumption, and energy efficiency for the
//! DMA receiver and the two conventional-array baselines.
//!
//! All powers are stored in Watts; dBm/dB conversions happen once at the
//! config boundary via [`dbm_to_watts`] and [`db_to_linear`]. Log-dets of
//! `I + S` go through Cholesky for stability. The DMA spectral efficiency is
//! evaluated on the row-space basis `V̄2` of the weight matrix,
//!
//! ```text
//! R = log2 |I_K + (1/σ²) Σ_u V̄2^H G_u P_u G_u^H V̄2|
//! ```
//!
//! which the projector identity `Q^H (Q Q^H)^{-1} Q = V̄2 V̄2^H` makes equal
//! to the rate of the full filter-and-combine front end.

use rayon::prelude::*;

use crate::channel::{
    sample_channel_realization, AttenuationProfile, ChannelRealization, ChannelStats,
};
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_part, is_orthonormal, log2_det_i_plus, log2_det_pd, sorted_hermitian_eigen,
    top_k_eigvecs,
};
use crate::{C64, CMat};

/// `x` dBm in Watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `x` dB as a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Power constants of the uplink (Watts, Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    /// Amplifier inefficiency `ξ_u = 1/ρ_u`, one entry per user. Zero puts
    /// the optimizers in SE-oriented mode.
    pub amplifier_inefficiency: Vec<f64>,
    /// Static circuit power `W_c,u` per user.
    pub static_user: Vec<f64>,
    /// Static base-station power `W_BS`.
    pub static_bs: f64,
    /// Dynamic power per RF chain `W_S`.
    pub per_rf_chain: f64,
    /// Power per phase shifter `W_p` (hybrid baseline only).
    pub per_phase_shifter: f64,
    /// Per-user transmit power budget `P_max`.
    pub max_transmit: f64,
    /// Noise power `σ²`.
    pub noise_power: f64,
    /// Bandwidth `B`.
    pub bandwidth: f64,
}

impl PowerModel {
    /// Identical users with amplifier efficiency `rho`.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        num_users: usize,
        rho: f64,
        static_user: f64,
        static_bs: f64,
        per_rf_chain: f64,
        per_phase_shifter: f64,
        max_transmit: f64,
        noise_power: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::validation("amplifier efficiency must be > 0"));
        }
        let pm = PowerModel {
            amplifier_inefficiency: vec![1.0 / rho; num_users],
            static_user: vec![static_user; num_users],
            static_bs,
            per_rf_chain,
            per_phase_shifter,
            max_transmit,
            noise_power,
            bandwidth,
        };
        pm.validate()?;
        Ok(pm)
    }

    pub fn num_users(&self) -> usize {
        self.amplifier_inefficiency.len()
    }

    /// Copy with `ξ_u = 0`: the EE objective then has a constant
    /// denominator and the optimizers maximize plain spectral efficiency.
    pub fn se_oriented(&self) -> PowerModel {
        let mut pm = self.clone();
        pm.amplifier_inefficiency.iter_mut().for_each(|x| *x = 0.0);
        pm
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplifier_inefficiency.is_empty()
            || self.amplifier_inefficiency.len() != self.static_user.len()
        {
            return Err(Error::validation("per-user power vectors are empty or mismatched"));
        }
        if self.amplifier_inefficiency.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::validation("amplifier inefficiency must be >= 0"));
        }
        if self.static_user.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::validation("static user power must be > 0"));
        }
        for (name, v) in [
            ("static_bs", self.static_bs),
            ("per_rf_chain", self.per_rf_chain),
            ("max_transmit", self.max_transmit),
            ("noise_power", self.noise_power),
            ("bandwidth", self.bandwidth),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("{name} must be > 0")));
            }
        }
        if !(self.per_phase_shifter >= 0.0) {
            return Err(Error::validation("per_phase_shifter must be >= 0"));
        }
        Ok(())
    }
}

/// Per-user transmit covariance matrices `P_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariances {
    pub per_user: Vec<CMat>,
}

impl TransmitCovariances {
    pub fn zeros(antennas_per_user: &[usize]) -> Self {
        TransmitCovariances {
            per_user: antennas_per_user.iter().map(|&n| CMat::zeros(n, n)).collect(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn trace_of(&self, u: usize) -> f64 {
        self.per_user[u].diagonal().iter().map(|z| z.re).sum()
    }

    /// Hermitian to 1e-10, eigenvalues ≥ −1e-10, per-user trace within the
    /// budget (slack 1e-9).
    pub fn validate(&self, max_transmit: f64) -> Result<()> {
        for (u, p) in self.per_user.iter().enumerate() {
            if p.nrows() != p.ncols() {
                return Err(Error::validation(format!("covariance of user {u} is not square")));
            }
            if (p - p.adjoint()).norm() > 1e-10 {
                return Err(Error::validation(format!("covariance of user {u} is not Hermitian")));
            }
            let (eigs, _) = sorted_hermitian_eigen(p)?;
            if eigs.iter().any(|&e| e < -1e-10) {
                return Err(Error::validation(format!("covariance of user {u} is not PSD")));
            }
            let tr = self.trace_of(u);
            if tr > max_transmit + 1e-9 {
                return Err(Error::validation(format!(
                    "covariance of user {u} exceeds the power budget ({tr} > {max_transmit})"
                )));
            }
        }
        Ok(())
    }
}

/// A single SE / power / EE evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EEResult {
    pub se_bits_per_s_per_hz: f64,
    pub power_watts: f64,
    pub ee_bits_per_joule: f64,
}

impl EEResult {
    pub fn new(se: f64, power: f64, bandwidth: f64) -> Result<Self> {
        if !(power > 0.0) {
            return Err(Error::validation("total power must be > 0"));
        }
        Ok(EEResult {
            se_bits_per_s_per_hz: se,
            power_watts: power,
            ee_bits_per_joule: bandwidth * se / power,
        })
    }
}

/// Covariance of the combined received signal, `(1/σ²) Σ_u F^H G_u P_u G_u^H F`
/// for a front-end map `F` (identity for the raw aggregate).
pub fn received_covariance(
    front: &CMat,
    channels: &ChannelRealization,
    covs: &TransmitCovariances,
    noise_power: f64,
) -> Result<CMat> {
    if channels.num_users() != covs.num_users() {
        return Err(Error::validation("channel/covariance user counts differ"));
    }
    let k = front.ncols();
    let mut s = CMat::zeros(k, k);
    for (g, p) in channels.per_user.iter().zip(&covs.per_user) {
        if g.nrows() != front.nrows() || g.ncols() != p.nrows() {
            return Err(Error::validation("channel and covariance shapes are inconsistent"));
        }
        let a = front.adjoint() * g;
        s += &a * p * a.adjoint();
    }
    Ok(hermitian_part(&s).unscale(noise_power))
}

/// Instantaneous SE through the row-space basis `V̄2` (`M×K` orthonormal):
/// `log2 det(I_K + (1/σ²) Σ_u V̄2^H G_u P_u G_u^H V̄2)`.
pub fn instantaneous_se(
    basis: &CMat,
    channels: &ChannelRealization,
    covs: &TransmitCovariances,
    noise_power: f64,
) -> Result<f64> {
    if !is_orthonormal(basis, 1e-8) {
        return Err(Error::validation("basis columns must be orthonormal"));
    }
    covs.validate(f64::INFINITY)?;
    let s = received_covariance(basis, channels, covs, noise_power)?;
    Ok(log2_det_i_plus(&s)?.max(0.0))
}

/// Total consumed power:
/// `Σ_u (ξ_u tr(P_u) + W_c,u) + W_BS + rf_chains·W_S + phase_shifters·W_p`.
pub fn total_power(
    covs: &TransmitCovariances,
    pm: &PowerModel,
    rf_chains: usize,
    phase_shifters: usize,
) -> f64 {
    let mut w = fixed_power(pm, rf_chains, phase_shifters);
    for u in 0..covs.num_users().min(pm.num_users()) {
        w += pm.amplifier_inefficiency[u] * covs.trace_of(u);
    }
    w
}

/// The transmit-independent part of [`total_power`].
pub fn fixed_power(pm: &PowerModel, rf_chains: usize, phase_shifters: usize) -> f64 {
    pm.static_user.iter().sum::<f64>()
        + pm.static_bs
        + rf_chains as f64 * pm.per_rf_chain
        + phase_shifters as f64 * pm.per_phase_shifter
}

/// EE of the DMA receiver: SE through `basis`, one RF chain per microstrip
/// (`K = basis.ncols()`), no phase shifters.
pub fn dma_ee(
    basis: &CMat,
    channels: &ChannelRealization,
    covs: &TransmitCovariances,
    pm: &PowerModel,
) -> Result<EEResult> {
    let se = instantaneous_se(basis, channels, covs, pm.noise_power)?;
    let power = total_power(covs, pm, basis.ncols(), 0);
    EEResult::new(se, power, pm.bandwidth)
}

/// EE of the fully-digital baseline: full `M`-dimensional rate, one RF
/// chain per antenna element.
pub fn fully_digital_ee(
    channels: &ChannelRealization,
    covs: &TransmitCovariances,
    pm: &PowerModel,
) -> Result<EEResult> {
    let m = channels.num_elements();
    covs.validate(f64::INFINITY)?;
    let eye = CMat::identity(m, m);
    let s = received_covariance(&eye, channels, covs, pm.noise_power)?;
    let se = log2_det_i_plus(&s)?.max(0.0);
    let power = total_power(covs, pm, m, 0);
    EEResult::new(se, power, pm.bandwidth)
}

/// Hybrid analog/digital combiner `W = W_RF · W_BB` with unit-modulus RF
/// entries.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridCombiner {
    pub rf: CMat,
    pub bb: CMat,
}

impl HybridCombiner {
    pub fn new(rf: CMat, bb: CMat) -> Result<Self> {
        if rf.ncols() != bb.nrows() || bb.nrows() != bb.ncols() {
            return Err(Error::validation("combiner factor shapes are inconsistent"));
        }
        if rf.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::validation("RF combiner entries must be unit modulus"));
        }
        Ok(HybridCombiner { rf, bb })
    }

    pub fn dense(&self) -> CMat {
        &self.rf * &self.bb
    }
}

/// EE of the hybrid A/D baseline with combiner `W` (`M×K`, full column
/// rank): `log2 det(I + (1/σ²) R_n^{-1} W^H (Σ G_u P_u G_u^H) W)` with
/// `R_n = W^H W`, power with `K` chains and `K·M` phase shifters.
pub fn hybrid_ad_ee(
    channels: &ChannelRealization,
    covs: &TransmitCovariances,
    pm: &PowerModel,
    w: &CMat,
) -> Result<EEResult> {
    covs.validate(f64::INFINITY)?;
    let k = w.ncols();
    let m = w.nrows();
    let rn = hermitian_part(&(w.adjoint() * w));
    let log_det_rn =
        log2_det_pd(&rn).map_err(|_| Error::numerical("hybrid combiner is rank deficient"))?;
    let s = received_covariance(w, channels, covs, pm.noise_power)?;
    let se = (log2_det_pd(&(rn + s))? - log_det_rn).max(0.0);
    let power = total_power(covs, pm, k, k * m);
    EEResult::new(se, power, pm.bandwidth)
}

/// Phase-extraction combiner design: `W_RF` takes the entrywise phases of
/// the top-`K` eigenvectors of the aggregate received covariance (zeros map
/// to phase 0), and `W_BB` re-orthonormalizes so `W_RF·W_BB` has orthonormal
/// columns.
pub fn design_hybrid_combiner(
    channels: &ChannelRealization,
    covs: &TransmitCovariances,
    noise_power: f64,
    k: usize,
) -> Result<HybridCombiner> {
    covs.validate(f64::INFINITY)?;
    let m = channels.num_elements();
    let eye = CMat::identity(m, m);
    let s = received_covariance(&eye, channels, covs, noise_power)?;
    let v3 = top_k_eigvecs(&s, k)?;
    let rf = v3.map(|z| {
        let n = z.norm();
        if n > 1e-300 {
            z / C64::new(n, 0.0)
        } else {
            C64::new(1.0, 0.0)
        }
    });
    let qr = rf.clone().qr();
    let bb = qr
        .r()
        .try_inverse()
        .ok_or_else(|| Error::numerical("phase-extracted combiner is rank deficient"))?;
    HybridCombiner::new(rf, bb)
}

/// Monte-Carlo estimate of the ergodic SE over `trials` realizations with
/// per-trial seeds `seed + t`. Returns `(mean, standard error)`; the
/// reduction is an indexed sum, so the result does not depend on the
/// parallel schedule.
pub fn ergodic_se_monte_carlo(
    stats: &ChannelStats,
    basis: &CMat,
    covs: &TransmitCovariances,
    noise_power: f64,
    profile: &AttenuationProfile,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::validation("at least one trial required"));
    }
    if !is_orthonormal(basis, 1e-8) {
        return Err(Error::validation("basis columns must be orthonormal"));
    }
    covs.validate(f64::INFINITY)?;
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let real = sample_channel_realization(stats, profile, seed.wrapping_add(t as u64));
            let s = received_covariance(basis, &real, covs, noise_power)?;
            Ok(log2_det_i_plus(&s)?.max(0.0))
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / trials as f64;
    let stderr = if trials > 1 {
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}
