//! Energy-efficiency optimization for dynamic-metasurface-antenna (DMA)
//! massive MIMO uplink receivers.
//!
//! The crate models a base station whose receive aperture is a stack of
//! microstrips loaded with tunable metamaterial elements. Each microstrip
//! feeds one RF chain with a linear combination of its elements, so the
//! analog front end is a block-structured weight matrix acting on many more
//! observations than there are chains. The library provides:
//!
//! - [`channel`]: a seeded jointly-correlated Rayleigh channel generator
//!   (eigenbases plus a beam-domain coupling matrix) and samplers.
//! - [`dma`]: the structured weight matrix, the four per-entry feasible sets
//!   with exact projections, and the alternating-minimization synthesis that
//!   fits a constrained weight matrix to a target row space.
//! - [`metrics`]: spectral efficiency, power, and energy efficiency for the
//!   DMA receiver and for fully-digital / hybrid analog-digital baselines.
//! - [`opt_inst`]: EE maximization with instantaneous CSI (Dinkelbach ratio
//!   iterations over transmit covariances, closed-form subspace updates,
//!   outer alternating optimization).
//! - [`opt_stat`]: EE maximization with statistical CSI (optimal transmit
//!   directions, deterministic-equivalent ergodic-rate engine, Dinkelbach
//!   power allocation, subspace alternation).
//!
//! All randomized operations are pure functions of their inputs and a seed;
//! Monte-Carlo loops derive per-trial seeds so results do not depend on the
//! parallel schedule.

pub mod channel;
pub mod dma;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod opt_inst;
pub mod opt_stat;
pub mod waterfill;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type RVec = nalgebra::DVector<f64>;
