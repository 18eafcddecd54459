//! Structured DMA weight matrix, feasible-set projections, the time-domain
//! front-end filter, and alternating-minimization weight synthesis.
//!
//! The weight matrix `Q` is `K×(K·L)` and block diagonal: row `k` touches
//! only the `L` elements of microstrip `k` (entries `q_{k,l}`). Each entry is
//! confined to one of four feasible sets, and fitting a constrained `Q` to a
//! target row space `V3` runs the cyclic updates
//!
//! ```text
//! Q ← Π_structure(Ū D̄ V3^H),   Ū ← procrustes(Q, D̄ V3^H),   D̄ ← diag-fit(Ū^H Q, V3^H)
//! ```
//!
//! each of which is an exact minimizer of `‖Q − Ū D̄ V3^H‖_F` in its block,
//! so the objective never increases.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, is_orthonormal};
use crate::{C64, CMat, CVec, RVec};

/// Admissible values for a single metamaterial gain.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// The whole complex plane.
    Unconstrained,
    /// Real amplitude interval `[lo, hi]`.
    AmplitudeOnly { lo: f64, hi: f64 },
    /// Finite set of nonnegative real amplitudes.
    BinaryAmplitude(Vec<f64>),
    /// Lorentzian-constrained phase circle `{(j + e^{jφ})/2 : φ ∈ [0, 2π]}`.
    LorentzianPhase,
}

/// Center of the Lorentzian circle, `j/2`.
const LORENTZIAN_CENTER: C64 = Complex { re: 0.0, im: 0.5 };
const LORENTZIAN_RADIUS: f64 = 0.5;

impl FeasibleSet {
    /// Amplitude-only interval used in the experiments, `[0.001, 5]`.
    pub fn default_amplitude_only() -> Self {
        FeasibleSet::AmplitudeOnly { lo: 1e-3, hi: 5.0 }
    }

    /// Binary-amplitude set used in the experiments, `{0, 0.1}`.
    pub fn default_binary_amplitude() -> Self {
        FeasibleSet::BinaryAmplitude(vec![0.0, 0.1])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Unconstrained | FeasibleSet::LorentzianPhase => Ok(()),
            FeasibleSet::AmplitudeOnly { lo, hi } => {
                if !(0.0 < *lo && lo <= hi) {
                    Err(Error::validation("amplitude interval requires 0 < lo <= hi"))
                } else {
                    Ok(())
                }
            }
            FeasibleSet::BinaryAmplitude(vals) => {
                if vals.is_empty() {
                    Err(Error::validation("binary-amplitude set must be nonempty"))
                } else if vals.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    Err(Error::validation("binary-amplitude values must be nonnegative"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Membership test up to `tol` in Euclidean distance.
    pub fn contains(&self, q: C64, tol: f64) -> bool {
        (project_entry(q, self) - q).norm() <= tol
    }
}

/// Closest feasible value to `m` in `|q − m|²`.
///
/// Unconstrained passes `m` through; the amplitude interval clamps the real
/// part; the finite set picks the nearest member; the Lorentzian circle
/// projects radially, mapping the center itself to `(j + 1)/2`.
pub fn project_entry(m: C64, set: &FeasibleSet) -> C64 {
    match set {
        FeasibleSet::Unconstrained => m,
        FeasibleSet::AmplitudeOnly { lo, hi } => C64::new(m.re.clamp(*lo, *hi), 0.0),
        FeasibleSet::BinaryAmplitude(vals) => {
            let mut best = C64::new(vals[0], 0.0);
            let mut best_d = (best - m).norm_sqr();
            for &v in &vals[1..] {
                let q = C64::new(v, 0.0);
                let d = (q - m).norm_sqr();
                if d < best_d {
                    best = q;
                    best_d = d;
                }
            }
            best
        }
        FeasibleSet::LorentzianPhase => {
            let offset = m - LORENTZIAN_CENTER;
            let r = offset.norm();
            if r < 1e-300 {
                LORENTZIAN_CENTER + C64::new(LORENTZIAN_RADIUS, 0.0)
            } else {
                LORENTZIAN_CENTER + offset * Complex::new(LORENTZIAN_RADIUS / r, 0.0)
            }
        }
    }
}

/// Block-structured DMA weight matrix, stored as its `K×L` gains.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    gains: CMat,
}

impl WeightMatrix {
    pub fn from_gains(gains: CMat) -> Self {
        WeightMatrix { gains }
    }

    pub fn microstrips(&self) -> usize {
        self.gains.nrows()
    }

    pub fn elements_per_strip(&self) -> usize {
        self.gains.ncols()
    }

    pub fn num_elements(&self) -> usize {
        self.gains.len()
    }

    pub fn gains(&self) -> &CMat {
        &self.gains
    }

    /// Dense `K×(K·L)` form with hard zeros off the blocks.
    pub fn dense(&self) -> CMat {
        let (k, l) = self.gains.shape();
        let mut q = CMat::zeros(k, k * l);
        for row in 0..k {
            for e in 0..l {
                q[(row, row * l + e)] = self.gains[(row, e)];
            }
        }
        q
    }

    /// Every gain lies in `set` (distance tolerance `tol`).
    pub fn in_set(&self, set: &FeasibleSet, tol: f64) -> bool {
        self.gains.iter().all(|&q| set.contains(q, tol))
    }
}

/// Causal filter taps shared by all metamaterial elements.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTaps {
    taps: Vec<C64>,
}

impl FilterTaps {
    pub fn new(taps: Vec<C64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::validation("at least one filter tap required"));
        }
        if taps[0].norm() == 0.0 {
            return Err(Error::validation("leading filter tap must be nonzero"));
        }
        Ok(FilterTaps { taps })
    }

    /// Memoryless filter `h = [1]`.
    pub fn identity() -> Self {
        FilterTaps { taps: vec![C64::new(1.0, 0.0)] }
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }
}

/// DMA front end: `z[i] = Q · Σ_τ h[τ] · y[i−τ]`.
///
/// `history[τ]` holds `y[i−τ]`, so `history[0]` is the current input.
pub fn apply_dma(
    history: &[CVec],
    taps: &FilterTaps,
    weights: &WeightMatrix,
) -> Result<CVec> {
    let m = weights.num_elements();
    if history.len() < taps.taps.len() {
        return Err(Error::validation(format!(
            "history of {} samples is too short for {} taps",
            history.len(),
            taps.taps.len()
        )));
    }
    for y in &history[..taps.taps.len()] {
        if y.len() != m {
            return Err(Error::validation("input vector length does not match element count"));
        }
    }
    let mut filtered = CVec::zeros(m);
    for (tap, y) in taps.taps.iter().zip(history) {
        filtered += y * *tap;
    }
    let (k, l) = weights.gains.shape();
    let mut z = CVec::zeros(k);
    for row in 0..k {
        let mut acc = C64::new(0.0, 0.0);
        for e in 0..l {
            acc += weights.gains[(row, e)] * filtered[row * l + e];
        }
        z[row] = acc;
    }
    Ok(z)
}

/// Entrywise projection of a dense `K×(K·L)` target onto the structured,
/// set-constrained weights: in-block entries are projected with
/// [`project_entry`], off-block entries are dropped. Separability makes this
/// the exact Frobenius-nearest structured matrix.
pub fn project_structure(target: &CMat, set: &FeasibleSet) -> Result<WeightMatrix> {
    let k = target.nrows();
    let m = target.ncols();
    if k == 0 || m == 0 || m % k != 0 {
        return Err(Error::validation(format!(
            "target of shape {k}×{m} does not match a K×(K·L) layout"
        )));
    }
    let l = m / k;
    let gains = CMat::from_fn(k, l, |row, e| project_entry(target[(row, row * l + e)], set));
    Ok(WeightMatrix::from_gains(gains))
}

/// Closest unitary `U` to `M1 ≈ U·M2` in Frobenius norm: `Ũ Ṽ^H` from the
/// SVD of `M1·M2^H`.
pub fn procrustes_unitary(m1: &CMat, m2: &CMat) -> Result<CMat> {
    if m1.shape() != m2.shape() {
        return Err(Error::validation("procrustes operands must share a shape"));
    }
    if !all_finite(m1) || !all_finite(m2) {
        return Err(Error::validation("procrustes operands must be finite"));
    }
    let prod = m1 * m2.adjoint();
    let svd = prod.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::numerical("SVD did not return U"))?;
    let v_t = svd.v_t.ok_or_else(|| Error::numerical("SVD did not return V^H"))?;
    Ok(u * v_t)
}

/// Positive diagonal `D` minimizing `‖M1 − D·M2‖_F`, floored at `delta`.
///
/// Entry `i` is `max(Re(⟨m1_i, m2_i⟩)/‖m2_i‖², delta)` over the `i`-th rows.
/// A zero row in `M2` gets the floor and raises the returned flag.
pub fn fit_diagonal(m1: &CMat, m2: &CMat, delta: f64) -> Result<(RVec, bool)> {
    if m1.shape() != m2.shape() {
        return Err(Error::validation("diagonal fit operands must share a shape"));
    }
    if !(delta > 0.0) {
        return Err(Error::validation("delta must be > 0"));
    }
    let k = m1.nrows();
    let mut d = RVec::zeros(k);
    let mut floored_zero_row = false;
    for i in 0..k {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..m1.ncols() {
            num += (m1[(i, j)] * m2[(i, j)].conj()).re;
            den += m2[(i, j)].norm_sqr();
        }
        if den <= 0.0 {
            d[i] = delta;
            floored_zero_row = true;
        } else {
            d[i] = (num / den).max(delta);
        }
    }
    Ok((d, floored_zero_row))
}

/// Convergence knobs of the alternating weight synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmConfig {
    /// Floor for the diagonal entries.
    pub delta: f64,
    /// Stop once `‖Q^(ℓ) − Q^(ℓ−1)‖_F` falls below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for AmConfig {
    fn default() -> Self {
        AmConfig { delta: 1e-3, tol: 1e-6, max_iters: 500 }
    }
}

/// Result of [`synthesize_weights`].
#[derive(Debug, Clone)]
pub struct AmOutcome {
    pub weights: WeightMatrix,
    /// Final objective `‖Q − Ū D̄ V3^H‖_F`.
    pub residual: f64,
    pub iterations: usize,
    /// Objective after every sub-update, for monotonicity checks.
    pub objective_trace: Vec<f64>,
}

/// Fit a structured, set-constrained weight matrix to the target row space.
///
/// `v3` must be `M×K` with orthonormal columns. Starting from `Ū = D̄ = I`,
/// the three exact block minimizers run cyclically until the weight change
/// drops below `cfg.tol` or `cfg.max_iters` is hit.
pub fn synthesize_weights(v3: &CMat, set: &FeasibleSet, cfg: &AmConfig) -> Result<AmOutcome> {
    set.validate()?;
    let m = v3.nrows();
    let k = v3.ncols();
    if k == 0 || m % k != 0 {
        return Err(Error::validation(format!(
            "target basis of shape {m}×{k} does not match a K×(K·L) layout"
        )));
    }
    if !is_orthonormal(v3, 1e-9) {
        return Err(Error::validation("target basis columns must be orthonormal"));
    }
    let v3h = v3.adjoint();

    let mut u_bar = CMat::identity(k, k);
    let mut d_bar = RVec::from_element(k, 1.0);
    let mut weights = project_structure(&scale_rows(&v3h, &d_bar), set)?;
    let mut trace = Vec::new();

    let objective = |q: &WeightMatrix, u: &CMat, d: &RVec| -> f64 {
        (q.dense() - u * scale_rows(&v3h, d)).norm()
    };

    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let prev_dense = weights.dense();

        let target = &u_bar * scale_rows(&v3h, &d_bar);
        weights = project_structure(&target, set)?;
        trace.push(objective(&weights, &u_bar, &d_bar));

        u_bar = procrustes_unitary(&weights.dense(), &scale_rows(&v3h, &d_bar))?;
        trace.push(objective(&weights, &u_bar, &d_bar));

        let (d, _) = fit_diagonal(&(u_bar.adjoint() * weights.dense()), &v3h, cfg.delta)?;
        d_bar = d;
        trace.push(objective(&weights, &u_bar, &d_bar));

        if (weights.dense() - prev_dense).norm() <= cfg.tol {
            break;
        }
    }
    let residual = objective(&weights, &u_bar, &d_bar);
    Ok(AmOutcome { weights, residual, iterations, objective_trace: trace })
}

fn scale_rows(m: &CMat, d: &RVec) -> CMat {
    let mut out = m.clone();
    for i in 0..d.len() {
        let s = C64::new(d[i], 0.0);
        for j in 0..out.ncols() {
            out[(i, j)] *= s;
        }
    }
    out
}

/// Orthonormal basis of the row space of the dense weights: the first `K`
/// right singular vectors. Errors when the smallest singular value drops
/// below `1e-10` (degenerate weights).
pub fn row_space_basis(weights: &WeightMatrix) -> Result<CMat> {
    let dense = weights.dense();
    let k = dense.nrows();
    let svd = dense.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::numerical("SVD did not return V^H"))?;
    let min_sv = svd.singular_values.iter().take(k).cloned().fold(f64::INFINITY, f64::min);
    if !(min_sv > 1e-10) {
        return Err(Error::numerical(format!(
            "weight matrix is rank deficient (smallest singular value {min_sv:.3e})"
        )));
    }
    Ok(v_t.rows(0, k).adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_complex_gaussian, random_orthonormal, subspace_distance};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn apply_dma_scalar_case() {
        let w = WeightMatrix::from_gains(CMat::from_element(1, 1, c(2.0, -1.0)));
        let y = CVec::from_element(1, c(0.5, 0.5));
        let z = apply_dma(&[y.clone()], &FilterTaps::identity(), &w).unwrap();
        assert_relative_eq!((z[0] - c(2.0, -1.0) * y[0]).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn apply_dma_sums_along_strip() {
        let w = WeightMatrix::from_gains(CMat::from_element(1, 2, c(1.0, 0.0)));
        let y = CVec::from_vec(vec![c(3.0, 1.0), c(-1.0, 2.0)]);
        let z = apply_dma(&[y], &FilterTaps::identity(), &w).unwrap();
        assert_relative_eq!((z[0] - c(2.0, 3.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn apply_dma_matches_dense_filter_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gains = random_complex_gaussian(2, 2, &mut rng);
        let w = WeightMatrix::from_gains(gains);
        let taps =
            FilterTaps::new(vec![c(1.0, 0.2), c(-0.3, 0.7)]).unwrap();
        let y0 = random_complex_gaussian(4, 1, &mut rng).column(0).clone_owned();
        let y1 = random_complex_gaussian(4, 1, &mut rng).column(0).clone_owned();
        let z = apply_dma(&[y0.clone(), y1.clone()], &taps, &w).unwrap();
        // dense oracle: Q · (h0·y0 + h1·y1)
        let dense = w.dense();
        let oracle = &dense * (&y0 * taps.taps()[0] + &y1 * taps.taps()[1]);
        assert!((z - oracle).norm() < 1e-12);
    }

    #[test]
    fn apply_dma_rejects_short_history() {
        let w = WeightMatrix::from_gains(CMat::from_element(1, 1, c(1.0, 0.0)));
        let taps = FilterTaps::new(vec![c(1.0, 0.0), c(0.5, 0.0)]).unwrap();
        let y = CVec::from_element(1, c(1.0, 0.0));
        assert!(apply_dma(&[y], &taps, &w).is_err());
    }

    #[test]
    fn entry_projection_known_points() {
        // Lorentzian circle: j is the top of the circle
        let p = project_entry(c(0.0, 1.0), &FeasibleSet::LorentzianPhase);
        assert!((p - c(0.0, 1.0)).norm() < 1e-15);
        // center maps to the stated tie-break
        let p = project_entry(c(0.0, 0.5), &FeasibleSet::LorentzianPhase);
        assert!((p - c(0.5, 0.5)).norm() < 1e-15);
        // binary amplitude picks the closer member
        let p = project_entry(c(0.07, 0.0), &FeasibleSet::default_binary_amplitude());
        assert_relative_eq!(p.re, 0.1, epsilon = 1e-15);
        // amplitude interval clamps the real part
        let p = project_entry(c(2.0, 3.0), &FeasibleSet::default_amplitude_only());
        assert!((p - c(2.0, 0.0)).norm() < 1e-15);
        let p = project_entry(c(-4.0, 1.0), &FeasibleSet::default_amplitude_only());
        assert!((p - c(1e-3, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn lorentzian_projection_beats_dense_phase_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m = random_complex_gaussian(1, 1, &mut rng)[(0, 0)];
            let p = project_entry(m, &FeasibleSet::LorentzianPhase);
            let mut best = f64::INFINITY;
            for i in 0..100_000 {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / 100_000.0;
                let q = (c(0.0, 1.0) + c(phi.cos(), phi.sin())) * c(0.5, 0.0);
                best = best.min((q - m).norm_sqr());
            }
            assert!((p - m).norm_sqr() <= best + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn projection_is_optimal_on_grids(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let m = c(re, im);
            // amplitude interval: dense real grid
            let set = FeasibleSet::default_amplitude_only();
            let p = project_entry(m, &set);
            let mut best = f64::INFINITY;
            let mut x = 1e-3;
            while x <= 5.0 {
                best = best.min((c(x, 0.0) - m).norm_sqr());
                x += 1e-3;
            }
            prop_assert!((p - m).norm_sqr() <= best + 1e-9);

            // Lorentzian circle: phase grid
            let p = project_entry(m, &FeasibleSet::LorentzianPhase);
            let mut best = f64::INFINITY;
            for i in 0..6283 {
                let phi = i as f64 * 1e-3;
                let q = (c(0.0, 1.0) + c(phi.cos(), phi.sin())) * c(0.5, 0.0);
                best = best.min((q - m).norm_sqr());
            }
            prop_assert!((p - m).norm_sqr() <= best + 1e-9);

            // binary amplitude: exhaustive
            let set = FeasibleSet::default_binary_amplitude();
            let p = project_entry(m, &set);
            let best = [0.0f64, 0.1]
                .iter()
                .map(|&v| (c(v, 0.0) - m).norm_sqr())
                .fold(f64::INFINITY, f64::min);
            prop_assert!((p - m).norm_sqr() <= best + 1e-12);
        }
    }

    #[test]
    fn structure_projection_is_idempotent_and_separable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gains = random_complex_gaussian(2, 3, &mut rng);
        let w = WeightMatrix::from_gains(gains);
        let again = project_structure(&w.dense(), &FeasibleSet::Unconstrained).unwrap();
        assert_eq!(w, again);

        // dense random target: distance equals the off-block mass
        let target = random_complex_gaussian(2, 6, &mut rng);
        let proj = project_structure(&target, &FeasibleSet::Unconstrained).unwrap();
        let diff = (proj.dense() - &target).norm();
        let mut off = 0.0;
        for r in 0..2 {
            for col in 0..6 {
                if col / 3 != r {
                    off += target[(r, col)].norm_sqr();
                }
            }
        }
        assert_relative_eq!(diff, off.sqrt(), epsilon = 1e-12);

        // finite set: agrees with exhaustive per-entry search
        let set = FeasibleSet::BinaryAmplitude(vec![0.0, 0.1, 0.4]);
        let proj = project_structure(&target, &set).unwrap();
        for r in 0..2 {
            for e in 0..3 {
                let t = target[(r, r * 3 + e)];
                let best = [0.0, 0.1, 0.4]
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        (c(*a, 0.0) - t).norm_sqr().total_cmp(&(c(*b, 0.0) - t).norm_sqr())
                    })
                    .unwrap();
                assert_eq!(proj.gains()[(r, e)], c(best, 0.0));
            }
        }

        assert!(project_structure(&random_complex_gaussian(2, 5, &mut rng), &set).is_err());
    }

    #[test]
    fn procrustes_recovers_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m2 = random_complex_gaussian(3, 9, &mut rng);
        let u = procrustes_unitary(&m2, &m2).unwrap();
        assert!((u - CMat::identity(3, 3)).norm() < 1e-9);

        let r = random_orthonormal(3, 3, &mut rng);
        let m1 = &r * &m2;
        let u = procrustes_unitary(&m1, &m2).unwrap();
        assert!((u - r).norm() < 1e-9);

        let a = random_complex_gaussian(3, 9, &mut rng);
        let b = random_complex_gaussian(3, 9, &mut rng);
        let u = procrustes_unitary(&a, &b).unwrap();
        assert!(is_orthonormal(&u, 1e-10));
    }

    #[test]
    fn diagonal_fit_known_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m2 = random_complex_gaussian(3, 6, &mut rng);
        let (d, warn) = fit_diagonal(&m2, &m2, 1e-3).unwrap();
        assert!(!warn);
        for i in 0..3 {
            assert_relative_eq!(d[i], 1.0, epsilon = 1e-12);
        }
        let (d, _) = fit_diagonal(&(-&m2), &m2, 1e-3).unwrap();
        for i in 0..3 {
            assert_relative_eq!(d[i], 1e-3, epsilon = 1e-15);
        }
        let (d, _) = fit_diagonal(&(&m2 * c(3.0, 0.0)), &m2, 1e-3).unwrap();
        for i in 0..3 {
            assert_relative_eq!(d[i], 3.0, epsilon = 1e-12);
        }
        let zero = CMat::zeros(3, 6);
        let (d, warn) = fit_diagonal(&m2, &zero, 1e-3).unwrap();
        assert!(warn);
        assert!(d.iter().all(|&x| x == 1e-3));
    }

    #[test]
    fn synthesis_recovers_structured_row_space() {
        // V3 taken from an actual structured Q: the unconstrained fit drives
        // the residual to ~0 and the objective never increases
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gains = random_complex_gaussian(2, 3, &mut rng);
        let q_true = WeightMatrix::from_gains(gains);
        let v3 = row_space_basis(&q_true).unwrap();
        let out =
            synthesize_weights(&v3, &FeasibleSet::Unconstrained, &AmConfig::default()).unwrap();
        assert!(out.residual < 1e-8, "residual {}", out.residual);
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let recovered = row_space_basis(&out.weights).unwrap();
        assert!(subspace_distance(&v3, &recovered) < 1e-6);
    }

    #[test]
    fn synthesis_scalar_fixed_point() {
        let v3 = CMat::from_element(1, 1, c(1.0, 0.0));
        let out =
            synthesize_weights(&v3, &FeasibleSet::Unconstrained, &AmConfig::default()).unwrap();
        assert!((out.weights.gains()[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn synthesis_objective_monotone_for_every_set() {
        let sets = [
            FeasibleSet::Unconstrained,
            FeasibleSet::default_amplitude_only(),
            FeasibleSet::default_binary_amplitude(),
            FeasibleSet::LorentzianPhase,
        ];
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v3 = random_orthonormal(8, 2, &mut rng);
            for set in &sets {
                let out = synthesize_weights(&v3, set, &AmConfig::default()).unwrap();
                for w in out.objective_trace.windows(2) {
                    assert!(
                        w[1] <= w[0] + 1e-12,
                        "objective rose {} -> {} for {set:?} seed {seed}",
                        w[0],
                        w[1]
                    );
                }
                assert!(out.weights.in_set(set, 1e-9));
            }
        }
    }

    #[test]
    fn synthesis_rejects_non_orthonormal_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v3 = random_complex_gaussian(6, 2, &mut rng);
        assert!(synthesize_weights(&v3, &FeasibleSet::Unconstrained, &AmConfig::default()).is_err());
    }

    #[test]
    fn row_space_of_canonical_weights() {
        let w = WeightMatrix::from_gains(CMat::from_fn(2, 1, |_, _| c(1.0, 0.0)));
        // dense form is [e1 | e2] = I_2 padded; basis spans the first coords
        let basis = row_space_basis(&w).unwrap();
        let target = CMat::identity(2, 2);
        assert!(subspace_distance(&basis, &target) < 1e-12);
    }

    #[test]
    fn row_space_satisfies_projector_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let gains = random_complex_gaussian(3, 4, &mut rng);
            let w = WeightMatrix::from_gains(gains);
            let q = w.dense();
            let basis = row_space_basis(&w).unwrap();
            let gram = (&q * q.adjoint()).try_inverse().unwrap();
            let projector = q.adjoint() * gram * &q;
            let alt = &basis * basis.adjoint();
            assert!((projector - alt).norm() < 1e-9);
        }
    }

    #[test]
    fn row_space_invariant_to_row_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gains = random_complex_gaussian(3, 4, &mut rng);
        let w = WeightMatrix::from_gains(gains);
        let q = w.dense();
        let basis = row_space_basis(&w).unwrap();
        // invertible row mixing preserves the span (checked on the dense SVD)
        let t = random_complex_gaussian(3, 3, &mut rng);
        let mixed = &t * &q;
        let svd = mixed.svd(false, true);
        let mixed_basis = svd.v_t.unwrap().rows(0, 3).adjoint();
        assert!(subspace_distance(&basis, &mixed_basis) < 1e-8);
    }

    #[test]
    fn row_space_rejects_dead_strip() {
        let mut gains = CMat::from_element(2, 2, c(1.0, 0.0));
        gains[(1, 0)] = c(0.0, 0.0);
        gains[(1, 1)] = c(0.0, 0.0);
        let w = WeightMatrix::from_gains(gains);
        assert!(row_space_basis(&w).is_err());
    }
}
