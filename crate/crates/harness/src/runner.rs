//! Scenario grid construction and execution.
//!
//! A run expands the sweep axis × CSI regimes × architectures (× feasible
//! sets for the DMA) × seeds into a job list, executes it with bounded data
//! parallelism, and returns records ordered by (scenario index, seed) no
//! matter how the pool schedules them. A job that errors or panics becomes
//! a zeroed record with `converged = false` instead of poisoning the sweep.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;

use dma_ee_core::channel::{
    derive_seed, generate_channel_stats, sample_channel_realization, AttenuationProfile,
    ChannelDims, ChannelRealization, ChannelStats,
};
use dma_ee_core::metrics::{
    design_hybrid_combiner, fixed_power, hybrid_ad_ee, EEResult, PowerModel, TransmitCovariances,
};
use dma_ee_core::opt_inst::{ao_instantaneous, optimal_subspace, optimize_at_basis, AoConfig};
use dma_ee_core::opt_stat::{
    ao_statistical, deterministic_equivalent, dinkelbach_allocations, optimal_subspace_stat,
    statistical_aggregate, PowerAllocations, StatConfig,
};
use dma_ee_core::{CMat, C64};

use crate::config::{
    parse_feasible_set, Architecture, CsiRegime, ExperimentConfig, SweepAxis,
};
use crate::HarnessError;

/// One row of the output table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub scenario: String,
    pub axis_value: f64,
    pub csi: String,
    pub architecture: String,
    pub feasible_set: String,
    pub se_bits_per_s_per_hz: f64,
    pub power_watts: f64,
    pub ee_bits_per_joule: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Measured per-job wall time. Diagnostic only: excluded from the CSV
    /// so identical configs produce identical output bytes.
    pub wall_time_s: f64,
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<ResultRecord>,
    /// Jobs that errored or panicked (recorded as zeroed rows).
    pub failed_jobs: usize,
}

#[derive(Debug, Clone)]
struct JobSpec {
    scenario: String,
    axis_value: f64,
    csi: CsiRegime,
    architecture: Architecture,
    set_name: String,
    microstrips: usize,
    budget_dbm: f64,
    seed: u64,
}

fn one_csi(csi: CsiRegime) -> Vec<CsiRegime> {
    match csi {
        CsiRegime::Both => vec![CsiRegime::Instantaneous, CsiRegime::Statistical],
        one => vec![one],
    }
}

fn csi_name(csi: CsiRegime) -> &'static str {
    match csi {
        CsiRegime::Instantaneous => "instantaneous",
        CsiRegime::Statistical => "statistical",
        CsiRegime::Both => "both",
    }
}

fn build_grid(cfg: &ExperimentConfig) -> Result<Vec<JobSpec>, HarnessError> {
    let base_architectures: Vec<Architecture> = cfg
        .run
        .architectures
        .iter()
        .map(|a| Architecture::parse(a))
        .collect::<Result<_, _>>()?;
    let base_sets = cfg.run.feasible_sets.clone();
    let default_k = cfg.dims.microstrips;
    let default_budget = cfg.power.max_transmit_dbm;

    // axis points: (label, axis value, overrides)
    struct Point {
        label: String,
        value: f64,
        microstrips: usize,
        budget_dbm: f64,
        architectures: Vec<Architecture>,
        sets: Vec<String>,
    }
    let points: Vec<Point> = match cfg.sweep.axis {
        SweepAxis::PowerBudget => cfg
            .sweep
            .power_budget_dbm
            .iter()
            .map(|&dbm| Point {
                label: format!("power_{dbm}dBm"),
                value: dbm,
                microstrips: default_k,
                budget_dbm: dbm,
                architectures: base_architectures.clone(),
                sets: base_sets.clone(),
            })
            .collect(),
        SweepAxis::Microstrips => cfg
            .sweep
            .microstrip_counts
            .iter()
            .map(|&k| Point {
                label: format!("microstrips_{k}"),
                value: k as f64,
                microstrips: k,
                budget_dbm: default_budget,
                architectures: base_architectures.clone(),
                sets: base_sets.clone(),
            })
            .collect(),
        SweepAxis::FeasibleSets => cfg
            .sweep
            .feasible_sets
            .iter()
            .enumerate()
            .map(|(i, s)| Point {
                label: format!("set_{s}"),
                value: i as f64,
                microstrips: default_k,
                budget_dbm: default_budget,
                architectures: vec![Architecture::Dma],
                sets: vec![s.clone()],
            })
            .collect(),
        SweepAxis::Architectures => cfg
            .sweep
            .architectures
            .iter()
            .enumerate()
            .map(|(i, a)| Point {
                label: format!("arch_{a}"),
                value: i as f64,
                microstrips: default_k,
                budget_dbm: default_budget,
                architectures: vec![Architecture::parse(a).expect("validated")],
                sets: base_sets.clone(),
            })
            .collect(),
    };

    let mut jobs = Vec::new();
    for point in &points {
        for &csi in &one_csi(cfg.run.csi) {
            for &arch in &point.architectures {
                let sets: Vec<String> = if arch == Architecture::Dma {
                    point.sets.clone()
                } else {
                    vec!["-".to_string()]
                };
                for set_name in sets {
                    for s in 0..cfg.run.seeds {
                        jobs.push(JobSpec {
                            scenario: point.label.clone(),
                            axis_value: point.value,
                            csi,
                            architecture: arch,
                            set_name: set_name.clone(),
                            microstrips: point.microstrips,
                            budget_dbm: point.budget_dbm,
                            seed: cfg.run.base_seed + s as u64,
                        });
                    }
                }
            }
        }
    }
    Ok(jobs)
}

fn job_stats(cfg: &ExperimentConfig, job: &JobSpec) -> Result<ChannelStats, HarnessError> {
    let dims = ChannelDims::uniform(
        cfg.dims.users,
        cfg.dims.antennas_per_user,
        job.microstrips,
        cfg.dims.microstrips * cfg.dims.elements_per_strip / job.microstrips,
    );
    generate_channel_stats(&dims, &cfg.stats_config(), job.seed)
        .map_err(|e| HarnessError::Scenario(e.to_string()))
}

struct JobOutcome {
    se: f64,
    power: f64,
    ee: f64,
    iterations: usize,
    converged: bool,
}

/// Hybrid A/D baseline with instantaneous CSI: alternate Dinkelbach
/// covariances (at the current orthonormalized combiner) with
/// phase-extraction combiner redesign until the EE settles.
pub fn optimize_hybrid_instantaneous(
    channels: &ChannelRealization,
    pm: &PowerModel,
    k: usize,
    cfg: &AoConfig,
) -> Result<(EEResult, usize, bool), dma_ee_core::Error> {
    let uniform = TransmitCovariances {
        per_user: channels
            .per_user
            .iter()
            .map(|g| CMat::identity(g.ncols(), g.ncols()))
            .collect(),
    };
    let m = channels.num_elements();
    let mut basis = optimal_subspace(channels, &uniform, pm.noise_power, k)?;
    let mut best: Option<EEResult> = None;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.max_outer.min(15) {
        iterations += 1;
        let (covs, _, _) = optimize_at_basis(&basis, channels, pm, k, k * m, cfg)?;
        let comb = design_hybrid_combiner(channels, &covs, pm.noise_power, k)?;
        let result = hybrid_ad_ee(channels, &covs, pm, &comb.dense())?;
        basis = comb.dense();
        if let Some(prev) = best {
            if (result.ee_bits_per_joule - prev.ee_bits_per_joule).abs()
                <= cfg.outer_tol_rel * prev.ee_bits_per_joule.abs().max(f64::MIN_POSITIVE)
            {
                best = Some(if result.ee_bits_per_joule > prev.ee_bits_per_joule {
                    result
                } else {
                    prev
                });
                converged = true;
                break;
            }
            best = Some(if result.ee_bits_per_joule > prev.ee_bits_per_joule {
                result
            } else {
                prev
            });
        } else {
            best = Some(result);
        }
    }
    Ok((best.expect("at least one iteration"), iterations, converged))
}

/// Hybrid A/D baseline with statistical CSI: Dinkelbach loadings at the
/// orthonormalized combiner, combiner re-extracted from the fixed-point
/// aggregate, until the DE-based EE settles.
pub fn optimize_hybrid_statistical(
    stats: &ChannelStats,
    profile: &AttenuationProfile,
    pm: &PowerModel,
    k: usize,
    cfg: &StatConfig,
) -> Result<(EEResult, usize, bool), dma_ee_core::Error> {
    let m = stats.dims.total_elements();
    let seed_psi = PowerAllocations::uniform(&stats.dims.antennas_per_user, pm.max_transmit);
    let (mut basis, _) =
        optimal_subspace_stat(&seed_psi.per_user.clone(), stats, profile, pm.noise_power, k)?;
    let mut allocs: Option<PowerAllocations> = None;
    let mut best: Option<EEResult> = None;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.ao.max_outer.min(15) {
        iterations += 1;
        let (next, _) = dinkelbach_allocations(
            &basis,
            stats,
            profile,
            pm,
            k,
            k * m,
            allocs.as_ref(),
            cfg,
        )?;
        let de = deterministic_equivalent(
            &next,
            &basis,
            stats,
            profile,
            pm.noise_power,
            cfg.de_tol,
            cfg.de_max_iters,
        )?;
        let mut power = fixed_power(pm, k, k * m);
        for (u, xi) in pm.amplifier_inefficiency.iter().enumerate() {
            power += xi * next.total_of(u);
        }
        let result = EEResult::new(de.rate_de, power, pm.bandwidth)?;

        // re-extract phases from the fixed-point aggregate
        let a = statistical_aggregate(&de.psi, stats, profile, pm.noise_power)?;
        let v3 = dma_ee_core::linalg::top_k_eigvecs(&a, k)?;
        let rf = v3.map(|z| {
            let n = z.norm();
            if n > 1e-300 {
                z / C64::new(n, 0.0)
            } else {
                C64::new(1.0, 0.0)
            }
        });
        let qr = rf.clone().qr();
        if let Some(bb) = qr.r().try_inverse() {
            basis = rf * bb;
        }
        allocs = Some(next);

        if let Some(prev) = best {
            let better = if result.ee_bits_per_joule > prev.ee_bits_per_joule { result } else { prev };
            if (result.ee_bits_per_joule - prev.ee_bits_per_joule).abs()
                <= cfg.ao.outer_tol_rel * prev.ee_bits_per_joule.abs().max(f64::MIN_POSITIVE)
            {
                best = Some(better);
                converged = true;
                break;
            }
            best = Some(better);
        } else {
            best = Some(result);
        }
    }
    Ok((best.expect("at least one iteration"), iterations, converged))
}

fn execute(cfg: &ExperimentConfig, job: &JobSpec) -> Result<JobOutcome, HarnessError> {
    let stats = job_stats(cfg, job)?;
    let profile = cfg.attenuation_profile()?;
    let pm = cfg.power_model(job.budget_dbm)?;
    let k = job.microstrips;
    let scen = |e: dma_ee_core::Error| HarnessError::Scenario(e.to_string());

    match job.csi {
        CsiRegime::Instantaneous => {
            let real = sample_channel_realization(&stats, &profile, derive_seed(job.seed, 0x0517));
            match job.architecture {
                Architecture::Dma => {
                    let set = parse_feasible_set(&job.set_name)?;
                    let out =
                        ao_instantaneous(&real, &pm, k, &set, &cfg.ao_config()).map_err(scen)?;
                    Ok(JobOutcome {
                        se: out.result.se_bits_per_s_per_hz,
                        power: out.result.power_watts,
                        ee: out.result.ee_bits_per_joule,
                        iterations: out.trace.outer_iterations,
                        converged: out.trace.converged,
                    })
                }
                Architecture::FullyDigital => {
                    let m = real.num_elements();
                    let eye = CMat::identity(m, m);
                    let (_, state, result) =
                        optimize_at_basis(&eye, &real, &pm, m, 0, &cfg.ao_config())
                            .map_err(scen)?;
                    Ok(JobOutcome {
                        se: result.se_bits_per_s_per_hz,
                        power: result.power_watts,
                        ee: result.ee_bits_per_joule,
                        iterations: state.iterations,
                        converged: state.converged,
                    })
                }
                Architecture::Hybrid => {
                    let (result, iterations, converged) =
                        optimize_hybrid_instantaneous(&real, &pm, k, &cfg.ao_config())
                            .map_err(scen)?;
                    Ok(JobOutcome {
                        se: result.se_bits_per_s_per_hz,
                        power: result.power_watts,
                        ee: result.ee_bits_per_joule,
                        iterations,
                        converged,
                    })
                }
            }
        }
        CsiRegime::Statistical => match job.architecture {
            Architecture::Dma => {
                let set = parse_feasible_set(&job.set_name)?;
                let out = ao_statistical(&stats, &profile, &pm, k, &set, &cfg.stat_config())
                    .map_err(scen)?;
                Ok(JobOutcome {
                    se: out.result.se_bits_per_s_per_hz,
                    power: out.result.power_watts,
                    ee: out.result.ee_bits_per_joule,
                    iterations: out.trace.outer_iterations,
                    converged: out.trace.converged,
                })
            }
            Architecture::FullyDigital => {
                let m = stats.dims.total_elements();
                let eye = CMat::identity(m, m);
                let sc = cfg.stat_config();
                let (allocs, state) =
                    dinkelbach_allocations(&eye, &stats, &profile, &pm, m, 0, None, &sc)
                        .map_err(scen)?;
                let de = deterministic_equivalent(
                    &allocs,
                    &eye,
                    &stats,
                    &profile,
                    pm.noise_power,
                    sc.de_tol,
                    sc.de_max_iters,
                )
                .map_err(scen)?;
                let mut power = fixed_power(&pm, m, 0);
                for (u, xi) in pm.amplifier_inefficiency.iter().enumerate() {
                    power += xi * allocs.total_of(u);
                }
                Ok(JobOutcome {
                    se: de.rate_de,
                    power,
                    ee: pm.bandwidth * de.rate_de / power,
                    iterations: state.iterations,
                    converged: state.converged,
                })
            }
            Architecture::Hybrid => {
                let (result, iterations, converged) = optimize_hybrid_statistical(
                    &stats,
                    &profile,
                    &pm,
                    k,
                    &cfg.stat_config(),
                )
                .map_err(scen)?;
                Ok(JobOutcome {
                    se: result.se_bits_per_s_per_hz,
                    power: result.power_watts,
                    ee: result.ee_bits_per_joule,
                    iterations,
                    converged,
                })
            }
        },
        CsiRegime::Both => unreachable!("expanded before execution"),
    }
}

/// Execute the configured sweep. Deterministic for a fixed config; records
/// are ordered by (scenario index, seed).
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let jobs = build_grid(cfg)?;
    let outcomes: Vec<(ResultRecord, bool)> = jobs
        .par_iter()
        .map(|job| {
            let started = Instant::now();
            let outcome = catch_unwind(AssertUnwindSafe(|| execute(cfg, job)));
            let wall = started.elapsed().as_secs_f64();
            let (result, failed) = match outcome {
                Ok(Ok(o)) => (o, false),
                Ok(Err(_)) | Err(_) => (
                    JobOutcome { se: 0.0, power: 0.0, ee: 0.0, iterations: 0, converged: false },
                    true,
                ),
            };
            (
                ResultRecord {
                    scenario: job.scenario.clone(),
                    axis_value: job.axis_value,
                    csi: csi_name(job.csi).to_string(),
                    architecture: job.architecture.name().to_string(),
                    feasible_set: job.set_name.clone(),
                    se_bits_per_s_per_hz: result.se,
                    power_watts: result.power,
                    ee_bits_per_joule: result.ee,
                    iterations: result.iterations,
                    converged: result.converged,
                    seed: job.seed,
                    wall_time_s: wall,
                },
                failed,
            )
        })
        .collect();
    let failed_jobs = outcomes.iter().filter(|(_, f)| *f).count();
    Ok(RunReport { records: outcomes.into_iter().map(|(r, _)| r).collect(), failed_jobs })
}

/// Run inside a dedicated thread pool when `jobs > 0`.
pub fn run_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> Result<RunReport, HarnessError> {
    if jobs == 0 {
        return run(cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Scenario(format!("thread pool: {e}")))?;
    pool.install(|| run(cfg))
}
