//! Radial reduction of `-Δψ + Vψ = λψ` on ℝ⁴.
//!
//! Writing `ψ = f(r)·Y_ℓ` with `Y_ℓ` a degree-ℓ harmonic on S³ gives
//!
//! ```text
//! f'' + (3/r) f' + (λ - V(r) - ℓ(ℓ+2)/r²) f = 0 .
//! ```
//!
//! The Liouville substitution `u = r^{3/2} f` turns this into
//! `-u'' + (((ℓ+1)² - 1/4)/r² + V) u = λu`, a two-dimensional problem with
//! integer order `ℓ+1`; the free solutions are `J_{ℓ+1}(kr)/r`, `Y_{ℓ+1}(kr)/r`
//! (`r^ℓ` and `r^{-ℓ-2}` at zero energy). Degree-ℓ harmonics on S³ span a
//! space of dimension `(ℓ+1)²`: homogeneous harmonic polynomials of degree ℓ
//! in four variables number `C(ℓ+3,3) - C(ℓ+1,3) = (ℓ+1)²`.
//!
//! Phase shifts are absolute rather than unwrapped after the fact: the
//! number of zeros of `f` inside the matching radius fixes the branch of
//! `δ`, so `δ_ℓ(λ)` is continuous in `λ`, tends to 0 at high energy and
//! equals `π·n_ℓ` (plus `π` for a threshold s-resonance) at `λ → 0⁺`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bessel::{bessel_pair, BesselError, BesselPair};
use crate::ode::{Dop853, OdeError, OdeStats, StepAction};
use crate::potential::{PotentialEcho, RadialPotential};

/// `|a/b|` below which the ℓ-sector zero-energy solution counts as a pure
/// decaying (threshold) solution.
pub const GROWTH_RATIO_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RadialError {
    #[error("ODE integration failed for ell = {ell}, lambda = {lambda}: {source}")]
    Ode { ell: usize, lambda: f64, source: OdeError },
    #[error("free-region fit residual {residual:e} exceeds {tol:e} (ell = {ell})")]
    Matching { ell: usize, residual: f64, tol: f64 },
    #[error("matching radius {r_match} lies inside the support {support}")]
    MatchInsideSupport { r_match: f64, support: f64 },
    #[error("Bessel evaluation failed: {0}")]
    Bessel(#[from] BesselError),
    #[error("wavenumber must be positive, got {0}")]
    InvalidWavenumber(f64),
    #[error("lambda grid must be positive and strictly increasing")]
    InvalidGrid,
    #[error("phase jumps above {jump_max} remain after {passes} refinement passes (largest {largest} near lambda = {lambda})")]
    Refinement { jump_max: f64, passes: usize, largest: f64, lambda: f64 },
    #[error("({ell}, {lambda}) lies outside the table")]
    OutsideTable { ell: usize, lambda: f64 },
}

/// Numerical settings of the radial integrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialOptions {
    /// Relative tolerance of the Runge–Kutta integrator.
    pub rtol: f64,
    /// Start radius `r₀` in units of the range.
    pub origin_offset: f64,
    /// Distance of the matching radius beyond the support, in ranges.
    pub match_offset: f64,
    /// Distance of the zero-energy residual check beyond the support.
    pub check_offset: f64,
    /// Admissible relative residual of the zero-energy free-region fit.
    pub fit_tol: f64,
    /// WKB suppression `∫κ` required before a late start is allowed.
    pub wkb_suppression: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, origin_offset: 1e-6, match_offset: 1.0, check_offset: 3.0, fit_tol: 1e-7, wkb_suppression: 20.0 }
    }
}

impl RadialOptions {
    fn solver(&self, h_max: f64) -> Dop853 {
        Dop853 { rtol: self.rtol, atol: self.rtol * 1e-3, h_max, max_steps: 2_000_000 }
    }

    #[must_use]
    pub fn match_radius(&self, v: &RadialPotential) -> f64 {
        v.support_radius + self.match_offset * v.range
    }
}

/// Zero-energy solution of one angular sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroEnergySolution {
    pub ell: usize,
    pub grid: Vec<f64>,
    /// `f(r)`, normalised by `f ~ r^ℓ` at the origin.
    pub values: Vec<f64>,
    pub a_coeff: f64,
    pub b_coeff: f64,
    /// Strict sign changes of `values`.
    pub node_count: usize,
    /// `∫₀^∞ V f r³ dr`.
    pub v_moment: f64,
    pub r_match: f64,
    pub r_check: f64,
    /// Relative residual of the free-region fit at `r_check`.
    pub fit_residual: f64,
}

impl ZeroEnergySolution {
    /// `|a/b|`, infinite when `b = 0`.
    #[must_use]
    pub fn growth_ratio(&self) -> f64 {
        if self.b_coeff == 0.0 {
            f64::INFINITY
        } else {
            (self.a_coeff / self.b_coeff).abs()
        }
    }

    #[must_use]
    pub fn is_threshold(&self) -> bool {
        self.growth_ratio() < GROWTH_RATIO_TOL
    }

    /// Radius of the sign change of `a r^ℓ + b r^{-ℓ-2}` beyond the sampled
    /// grid, if there is one.
    #[must_use]
    pub fn far_node(&self) -> Option<f64> {
        if self.a_coeff * self.b_coeff >= 0.0 {
            return None;
        }
        let r = (-self.b_coeff / self.a_coeff).powf(1.0 / (2.0 * self.ell as f64 + 2.0));
        (r > self.r_check).then_some(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub ell: usize,
    pub lambda: f64,
    pub delta: f64,
}

/// A phase shift with the intermediate data of its computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDetail {
    pub point: PhasePoint,
    /// The matching-formula value in `(-π/2, π/2]`.
    pub delta_mod_pi: f64,
    /// Zeros of the regular solution in `(0, r_m)`.
    pub nodes: usize,
    pub r_start: f64,
    pub r_match: f64,
    pub steps: usize,
}

struct Trajectory {
    /// `(f, f', ∫V f r³)` at the end point, up to the factor `exp(log_scale)`.
    state: [f64; 3],
    log_scale: f64,
    nodes: usize,
    steps: usize,
}

/// Right-hand side on the segment `[lo, hi]`; the potential is sampled
/// strictly inside it so a jump at either end is never seen.
fn rhs(v: &RadialPotential, ell: usize, lambda: f64, lo: f64, hi: f64) -> impl Fn(f64, &[f64; 3]) -> [f64; 3] + '_ {
    let cent = (ell * (ell + 2)) as f64;
    let pad = (hi - lo) * 1e-9;
    move |r: f64, y: &[f64; 3]| {
        let vr = v.value(r.clamp(lo + pad, hi - pad));
        let fpp = -3.0 / r * y[1] + (vr - lambda + cent / (r * r)) * y[0];
        [y[1], fpp, vr * y[0] * r * r * r]
    }
}

/// Integrates from `r_start` to `r_end`, splitting at the potential's
/// breakpoints, keeping the amplitude near one by rescaling, and counting
/// sign changes of `f`. `record` receives every accepted `(r, f)` with `f`
/// in the current scaling and the current log-scale.
#[allow(clippy::too_many_arguments)]
fn propagate(
    v: &RadialPotential,
    ell: usize,
    lambda: f64,
    r_start: f64,
    y_start: [f64; 3],
    r_end: f64,
    opts: &RadialOptions,
    mut record: impl FnMut(f64, f64, f64),
) -> Result<Trajectory, RadialError> {
    let kmax = (lambda.max(0.0) + v.min_value().abs()).sqrt();
    let h_max = if kmax > 0.0 { (1.0 / kmax).min(0.25 * v.range) } else { 0.25 * v.range };
    let solver = opts.solver(h_max);
    let nu = ell as f64 + 1.0;

    let mut cuts: Vec<f64> = v.breakpoints().into_iter().filter(|&b| b > r_start && b < r_end).collect();
    cuts.push(r_end);

    let mut y = y_start;
    let mut x = r_start;
    let mut log_scale = 0.0;
    let mut nodes = 0usize;
    let mut last_sign = y[0].signum();
    let mut stats = OdeStats::default();
    let mut h_guess = 0.0;
    record(x, y[0], log_scale);
    for &end in &cuts {
        let mut pending = 0.0f64;
        let f = rhs(v, ell, lambda, x, end);
        let y_end = solver
            .integrate(
                &f,
                x,
                y,
                end,
                h_guess,
                |r, s| {
                    if s[0] != 0.0 {
                        let sign = s[0].signum();
                        if last_sign != 0.0 && sign != last_sign {
                            nodes += 1;
                        }
                        last_sign = sign;
                    }
                    record(r, s[0], log_scale + pending);
                    let amp = s[0].hypot(r * s[1] / nu);
                    if !(0.25..=4.0).contains(&amp) && amp > 0.0 {
                        pending += amp.ln();
                        StepAction::Rescale(1.0 / amp)
                    } else {
                        StepAction::Continue
                    }
                },
                &mut stats,
            )
            .map_err(|source| RadialError::Ode { ell, lambda, source })?;
        log_scale += pending;
        y = y_end;
        h_guess = (end - x).min(h_max) * 0.1;
        x = end;
    }
    Ok(Trajectory { state: y, log_scale, nodes, steps: stats.accepted })
}

/// Frobenius data `(f, f')` at `r₀`, divided by `r₀^ℓ`.
fn frobenius_start(v: &RadialPotential, ell: usize, lambda: f64, r0: f64) -> [f64; 3] {
    let l = ell as f64;
    let c = -(lambda - v.value(0.0)) / (4.0 * (l + 2.0));
    let f = 1.0 + c * r0 * r0;
    let fp = l / r0 + (l + 2.0) * c * r0;
    let moment = v.value(0.0) * r0.powi(4) / (l + 4.0);
    [f, fp, moment]
}

/// Zero-energy solution of sector `ell` with default options.
///
/// # Errors
/// Integration failure or a free-region fit residual above tolerance.
pub fn integrate_zero_energy(v: &RadialPotential, ell: usize) -> Result<ZeroEnergySolution, RadialError> {
    integrate_zero_energy_with(v, ell, &RadialOptions::default())
}

/// # Errors
/// See [`integrate_zero_energy`].
pub fn integrate_zero_energy_with(v: &RadialPotential, ell: usize, opts: &RadialOptions) -> Result<ZeroEnergySolution, RadialError> {
    let r0 = opts.origin_offset * v.range;
    let r1 = v.support_radius + opts.match_offset * v.range;
    let r2 = v.support_radius + opts.check_offset * v.range;
    let l = ell as f64;
    let origin_scale = l * r0.ln();

    let mut grid = Vec::new();
    let mut raw = Vec::new();
    let t1 = propagate(v, ell, 0.0, r0, frobenius_start(v, ell, 0.0, r0), r1, opts, |r, f, ls| {
        grid.push(r);
        raw.push((f, ls));
    })?;
    let [f1, fp1, moment1] = t1.state;

    // f = a r^ℓ + b r^{-ℓ-2}, f' = ℓ a r^{ℓ-1} - (ℓ+2) b r^{-ℓ-3}
    let (a_s, b_s) = fit_free_region(ell, r1, f1, fp1);

    let t2 = propagate(v, ell, 0.0, r1, t1.state, r2, opts, |r, f, ls| {
        grid.push(r);
        raw.push((f, ls + t1.log_scale));
    })?;
    let scale2 = (t2.log_scale).exp();
    let f2 = t2.state[0] * scale2;
    let model = a_s * r2.powf(l) + b_s * r2.powf(-l - 2.0);
    let size = (a_s * r2.powf(l)).abs() + (b_s * r2.powf(-l - 2.0)).abs();
    let fit_residual = if size > 0.0 { (f2 - model).abs() / size } else { 0.0 };
    if fit_residual > opts.fit_tol {
        return Err(RadialError::Matching { ell, residual: fit_residual, tol: opts.fit_tol });
    }

    let total = (origin_scale + t1.log_scale).exp();
    let values: Vec<f64> = raw.iter().map(|&(f, ls)| f * (origin_scale + ls).exp()).collect();
    // Drop the duplicate sample at r1 from the second leg.
    let mut dedup_grid = Vec::with_capacity(grid.len());
    let mut dedup_values = Vec::with_capacity(values.len());
    for (r, f) in grid.into_iter().zip(values) {
        if dedup_grid.last().is_some_and(|&last: &f64| r <= last) {
            continue;
        }
        dedup_grid.push(r);
        dedup_values.push(f);
    }
    let node_count = count_sign_changes(&dedup_values);

    Ok(ZeroEnergySolution {
        ell,
        grid: dedup_grid,
        values: dedup_values,
        a_coeff: a_s * total,
        b_coeff: b_s * total,
        node_count,
        v_moment: moment1 * total,
        r_match: r1,
        r_check: r2,
        fit_residual,
    })
}

fn fit_free_region(ell: usize, r: f64, f: f64, fp: f64) -> (f64, f64) {
    let l = ell as f64;
    let det = -(2.0 * l + 2.0) / (r * r * r);
    let a = (f * (-(l + 2.0) * r.powf(-l - 3.0)) - r.powf(-l - 2.0) * fp) / det;
    let b = (r.powf(l) * fp - l * r.powf(l - 1.0) * f) / det;
    (a, b)
}

fn count_sign_changes(values: &[f64]) -> usize {
    let mut last = 0.0;
    let mut count = 0;
    for &f in values {
        if f != 0.0 {
            let s = f.signum();
            if last != 0.0 && s != last {
                count += 1;
            }
            last = s;
        }
    }
    count
}

/// Number of negative eigenvalues in sector `ell`, by Sturm oscillation:
/// zeros of the zero-energy solution on `(0, ∞)`, including the analytic
/// sign change of the free-region tail beyond the sampled grid. A sector
/// sitting exactly at a threshold contributes no far node.
///
/// # Errors
/// Propagates integration failures.
pub fn count_bound_states_ell(v: &RadialPotential, ell: usize) -> Result<usize, RadialError> {
    let z = integrate_zero_energy(v, ell)?;
    Ok(bound_states_from(&z))
}

/// Node count of a zero-energy solution, far node included.
#[must_use]
pub fn bound_states_from(z: &ZeroEnergySolution) -> usize {
    let far = usize::from(!z.is_threshold() && z.far_node().is_some());
    z.node_count + far
}

/// Phase shift `δ_ℓ(k²)` with default options.
///
/// # Errors
/// Nonpositive `k`, integration or Bessel failures.
pub fn phase_shift(v: &RadialPotential, ell: usize, k: f64) -> Result<PhasePoint, RadialError> {
    phase_shift_with(v, ell, k, &RadialOptions::default()).map(|d| d.point)
}

/// WKB start radius: the smallest radius from which the centrifugal barrier
/// still suppresses the decaying solution by `exp(-2·suppression)`, for
/// the worst-case well depth. Returns `r0` when no late start is possible.
fn late_start(v: &RadialPotential, ell: usize, lambda: f64, r0: f64, r_end: f64, suppression: f64) -> f64 {
    let nu = ell as f64 + 1.0;
    let a2 = nu * nu - 0.25;
    let a = a2.sqrt();
    let b = (lambda + v.min_value().abs()).sqrt();
    let turning = if b > 0.0 { a / b } else { f64::INFINITY };
    let top = turning.min(r_end);
    // S(r) = ∫_r^{turning} sqrt(a²/s² - b²) ds
    let s_of = |r: f64| {
        if b == 0.0 {
            return a * (top / r).ln();
        }
        let q = (1.0 - (b * r / a).powi(2)).max(0.0).sqrt();
        a * (((1.0 + q) * a / (b * r)).ln() - q)
    };
    let s_top = if b == 0.0 { 0.0 } else { s_of(top) };
    let barrier = |r: f64| s_of(r) - s_top;
    if top <= r0 || barrier(r0) <= suppression {
        return r0;
    }
    let (mut lo, mut hi) = (r0, top);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if barrier(mid) > suppression {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// # Errors
/// See [`phase_shift`].
pub fn phase_shift_with(v: &RadialPotential, ell: usize, k: f64, opts: &RadialOptions) -> Result<PhaseDetail, RadialError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(RadialError::InvalidWavenumber(k));
    }
    let lambda = k * k;
    let r_m = opts.match_radius(v);
    if r_m <= v.support_radius {
        return Err(RadialError::MatchInsideSupport { r_match: r_m, support: v.support_radius });
    }
    if v.is_zero() {
        let point = PhasePoint { ell, lambda, delta: 0.0 };
        return Ok(PhaseDetail { point, delta_mod_pi: 0.0, nodes: 0, r_start: r_m, r_match: r_m, steps: 0 });
    }
    let r0 = opts.origin_offset * v.range;
    let r_s = late_start(v, ell, lambda, r0, r_m, opts.wkb_suppression);
    let y0 = if r_s <= r0 {
        frobenius_start(v, ell, lambda, r0)
    } else {
        let nu = ell as f64 + 1.0;
        let a2 = nu * nu - 0.25;
        let kappa2 = a2 / (r_s * r_s) + v.value(r_s) - lambda;
        let kappa = kappa2.max(0.0).sqrt();
        let dkappa = -a2 / (kappa * r_s.powi(3));
        let log_deriv = kappa - dkappa / (2.0 * kappa) - 1.5 / r_s;
        [1.0, log_deriv, 0.0]
    };
    let traj = propagate(v, ell, lambda, r_s.max(r0), y0, r_m, opts, |_, _, _| {})?;
    let [f, fp, _] = traj.state;
    let w = r_m * f;
    let wp = f + r_m * fp;

    let order = u32::try_from(ell + 1).expect("ell fits in u32");
    let x = k * r_m;
    let bp = bessel_pair(order, x)?;
    let num = bp.j * wp - k * bp.jp * w;
    let den = bp.y * wp - k * bp.yp * w;
    let mut delta_mod = num.atan2(den);
    if delta_mod > FRAC_PI_2 {
        delta_mod -= PI;
    } else if delta_mod <= -FRAC_PI_2 {
        delta_mod += PI;
    }
    let shift = traj.nodes as f64 - nodal_cell(&bp, order, x, delta_mod);
    let delta = delta_mod + shift * PI;
    Ok(PhaseDetail {
        point: PhasePoint { ell, lambda, delta },
        delta_mod_pi: delta_mod,
        nodes: traj.nodes,
        r_start: r_s,
        r_match: r_m,
        steps: traj.steps,
    })
}

/// `⌈(θ + δ - π/2)/π⌉`: the number of zeros of `cos(θ(x) + δ)` for
/// `x ∈ (0, k·r_m)`. Near the origin `θ = -π/2 + atan(J/|Y|)` and the
/// offset is kept apart from `-π/2`, since both it and `δ` can be far
/// below the rounding unit of `π/2` in high partial waves.
fn nodal_cell(bp: &BesselPair, order: u32, x: f64, delta: f64) -> f64 {
    if bp.j > 0.0 && bp.y < 0.0 && x <= f64::from(order).max(1.0) {
        let eta = (bp.j / -bp.y).atan();
        return if eta + delta > 0.0 { 0.0 } else { -1.0 };
    }
    ((bp.phase(order, x) + delta - FRAC_PI_2) / PI).ceil()
}

/// Options for tabulating phase shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub radial: RadialOptions,
    /// Stop a λ column once `(ℓ+1)²|δ_ℓ|` drops below this for two shells
    /// in a row beyond `ℓ ≥ k·r_m`.
    pub shell_tol: f64,
    /// Refine the λ grid where adjacent samples of some `δ_ℓ` differ by more.
    pub jump_max: f64,
    pub max_refinements: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { radial: RadialOptions::default(), shell_tol: 1e-12, jump_max: PI / 4.0, max_refinements: 12 }
    }
}

/// One λ column of the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseColumn {
    pub lambda: f64,
    /// `δ_ℓ(λ)` for `ℓ = 0..deltas.len()`.
    pub deltas: Vec<f64>,
    /// Bound on `Σ_{ℓ ≥ deltas.len()} (ℓ+1)²|δ_ℓ|`.
    pub tail_bound: f64,
    /// Whether the ℓ truncation met the geometric-decay criterion.
    pub certified: bool,
}

/// Low-energy behaviour of one partial wave below the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LowEnergyModel {
    /// `cot δ₀ = A/λ + ln(λ)/π + B`.
    SWave { a: f64, b: f64, model_residual: f64 },
    /// `δ_ℓ(0) + c·λ^{ℓ+1}` through the two lowest samples.
    Power { coeff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowEnergyLimit {
    pub ell: usize,
    /// `δ_ℓ(0⁺)`.
    pub delta_zero: f64,
    pub model: LowEnergyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementPass {
    pub pass: usize,
    pub inserted: usize,
    pub largest_jump: f64,
}

/// Phase shifts `δ_ℓ(λ)` on a λ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShiftTable {
    pub potential: PotentialEcho,
    pub options: TableOptions,
    pub ell_cap: usize,
    pub r_match: f64,
    pub columns: Vec<PhaseColumn>,
    pub low_energy: Vec<LowEnergyLimit>,
    /// Whether the ℓ=0 zero-energy solution sat at threshold (resonance).
    pub s_wave_threshold: bool,
    pub refinement_history: Vec<RefinementPass>,
}

impl PhaseShiftTable {
    #[must_use]
    pub fn lambdas(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.lambda).collect()
    }

    #[must_use]
    pub fn lambda_min(&self) -> f64 {
        self.columns.first().map_or(0.0, |c| c.lambda)
    }

    #[must_use]
    pub fn lambda_max(&self) -> f64 {
        self.columns.last().map_or(0.0, |c| c.lambda)
    }

    /// Largest ℓ stored in any column, plus one.
    #[must_use]
    pub fn ell_count(&self) -> usize {
        self.columns.iter().map(|c| c.deltas.len()).max().unwrap_or(0)
    }

    /// `δ_ℓ` at column `i`; shells beyond the column's truncation are zero.
    #[must_use]
    pub fn delta(&self, i: usize, ell: usize) -> f64 {
        self.columns[i].deltas.get(ell).copied().unwrap_or(0.0)
    }

    /// `Σ_ℓ (ℓ+1)² δ_ℓ` at column `i`.
    #[must_use]
    pub fn weighted_sum(&self, i: usize) -> f64 {
        self.columns[i].deltas.iter().enumerate().map(|(l, d)| ((l + 1) * (l + 1)) as f64 * d).sum()
    }

    /// `Σ_ℓ (ℓ+1)² δ_ℓ(0⁺)`.
    #[must_use]
    pub fn weighted_sum_at_zero(&self) -> f64 {
        self.low_energy.iter().map(|l| ((l.ell + 1) * (l.ell + 1)) as f64 * l.delta_zero).sum()
    }

    /// `δ_ℓ(λ)` by linear interpolation on the grid.
    ///
    /// # Errors
    /// `λ` outside `[λ_min, λ_max]`.
    pub fn interpolate(&self, ell: usize, lambda: f64) -> Result<f64, RadialError> {
        let n = self.columns.len();
        if n == 0 || !(lambda >= self.lambda_min() && lambda <= self.lambda_max()) {
            return Err(RadialError::OutsideTable { ell, lambda });
        }
        let j = self.columns.partition_point(|c| c.lambda <= lambda);
        if j == 0 {
            return Ok(self.delta(0, ell));
        }
        if j >= n {
            return Ok(self.delta(n - 1, ell));
        }
        let (l0, l1) = (self.columns[j - 1].lambda, self.columns[j].lambda);
        let t = (lambda - l0) / (l1 - l0);
        Ok((1.0 - t) * self.delta(j - 1, ell) + t * self.delta(j, ell))
    }

    /// `δ_ℓ(λ)` for `0 < λ < λ_min` from the low-energy model.
    #[must_use]
    pub fn below_grid(&self, ell: usize, lambda: f64) -> f64 {
        let Some(limit) = self.low_energy.get(ell) else {
            return 0.0;
        };
        let l1 = self.lambda_min();
        let d1 = self.delta(0, ell);
        match limit.model {
            LowEnergyModel::Power { coeff } => {
                let p = ell as i32 + 1;
                d1 + coeff * (lambda.powi(p) - l1.powi(p))
            }
            LowEnergyModel::SWave { a, b, .. } => {
                let m = |x: f64| a / x + x.ln() / PI + b;
                d1 + arccot_positive(m(lambda)) - arccot_positive(m(l1))
            }
        }
    }

    /// CSV rows `(ell, lambda, delta)`.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ell,lambda,delta\n");
        for ell in 0..self.ell_count() {
            for (i, c) in self.columns.iter().enumerate() {
                if ell < c.deltas.len() {
                    out.push_str(&format!("{ell},{:.17e},{:.17e}\n", c.lambda, self.delta(i, ell)));
                }
            }
        }
        out
    }
}

/// `arccot` with values in `(0, π)`; `±∞` map to `0` and `π`.
#[must_use]
pub fn arccot_positive(m: f64) -> f64 {
    if m == f64::INFINITY {
        0.0
    } else if m == f64::NEG_INFINITY {
        PI
    } else {
        FRAC_PI_2 - m.atan()
    }
}

fn compute_column(v: &RadialPotential, lambda: f64, ell_cap: usize, opts: &TableOptions) -> Result<PhaseColumn, RadialError> {
    let k = lambda.sqrt();
    let kr = k * opts.radial.match_radius(v);
    let mut deltas = Vec::new();
    let mut prev_weight = f64::INFINITY;
    let mut quiet = 0;
    let mut certified = false;
    let mut tail_bound = 0.0;
    for ell in 0..=ell_cap {
        let d = if v.is_zero() { 0.0 } else { phase_shift_with(v, ell, k, &opts.radial)?.point.delta };
        deltas.push(d);
        let weight = ((ell + 1) * (ell + 1)) as f64 * d.abs();
        if ell as f64 >= kr && weight < opts.shell_tol && weight <= prev_weight {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= 2 {
            let ratio = if prev_weight > 0.0 { weight / prev_weight } else { 0.0 };
            if ratio < 1.0 {
                certified = true;
                tail_bound = if ratio > 0.0 { weight * ratio / (1.0 - ratio) } else { 0.0 };
                break;
            }
        }
        prev_weight = weight;
    }
    if !certified {
        // Geometric bound from the last two shells, flagged as uncertified.
        let n = deltas.len();
        if n >= 2 {
            let w1 = ((n - 1) * (n - 1)) as f64 * deltas[n - 2].abs();
            let w2 = (n * n) as f64 * deltas[n - 1].abs();
            let q = if w1 > 0.0 { w2 / w1 } else { 0.0 };
            tail_bound = if q < 1.0 { w2 * q / (1.0 - q) } else { f64::INFINITY };
        }
    }
    Ok(PhaseColumn { lambda, deltas, tail_bound, certified })
}

/// Phase-shift table with default options.
///
/// # Errors
/// See [`phase_shift_table_with`].
pub fn phase_shift_table(v: &RadialPotential, ell_max: usize, lambda_grid: &[f64]) -> Result<PhaseShiftTable, RadialError> {
    phase_shift_table_with(v, ell_max, lambda_grid, &TableOptions::default())
}

/// Computes `δ_ℓ(λ)` for `ℓ ≤ ell_max` (fewer where the shells have
/// decayed), refining the λ grid until no adjacent jump exceeds
/// `jump_max`, and attaches the low-energy limits.
///
/// # Errors
/// Invalid grids, integration failures, or jumps surviving all passes.
pub fn phase_shift_table_with(
    v: &RadialPotential,
    ell_max: usize,
    lambda_grid: &[f64],
    opts: &TableOptions,
) -> Result<PhaseShiftTable, RadialError> {
    if lambda_grid.len() < 2 || lambda_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) || lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RadialError::InvalidGrid);
    }
    let mut columns: Vec<PhaseColumn> = lambda_grid.par_iter().map(|&l| compute_column(v, l, ell_max, opts)).collect::<Result<_, _>>()?;
    let mut history = Vec::new();

    for pass in 1..=opts.max_refinements + 1 {
        let mut largest = 0.0f64;
        let mut at = 0.0;
        let mut inserts = Vec::new();
        for (i, w) in columns.windows(2).enumerate() {
            let n = w[0].deltas.len().max(w[1].deltas.len());
            let jump = (0..n)
                .map(|l| (w[0].deltas.get(l).copied().unwrap_or(0.0) - w[1].deltas.get(l).copied().unwrap_or(0.0)).abs())
                .fold(0.0, f64::max);
            if jump > largest {
                largest = jump;
                at = w[0].lambda;
            }
            if jump > opts.jump_max {
                inserts.push((i, (w[0].lambda * w[1].lambda).sqrt()));
            }
        }
        if inserts.is_empty() {
            break;
        }
        if pass > opts.max_refinements {
            return Err(RadialError::Refinement { jump_max: opts.jump_max, passes: opts.max_refinements, largest, lambda: at });
        }
        history.push(RefinementPass { pass, inserted: inserts.len(), largest_jump: largest });
        let new_cols: Vec<PhaseColumn> = inserts.par_iter().map(|&(_, l)| compute_column(v, l, ell_max, opts)).collect::<Result<_, _>>()?;
        for ((i, _), col) in inserts.iter().zip(new_cols).rev() {
            columns.insert(i + 1, col);
        }
    }

    let zero = if v.is_zero() { None } else { Some(integrate_zero_energy_with(v, 0, &opts.radial)?) };
    let s_wave_threshold = zero.as_ref().is_some_and(ZeroEnergySolution::is_threshold);
    let low_energy = low_energy_limits(&columns, zero.as_ref());

    Ok(PhaseShiftTable {
        potential: PotentialEcho::from(v),
        options: *opts,
        ell_cap: ell_max,
        r_match: opts.radial.match_radius(v),
        columns,
        low_energy,
        s_wave_threshold,
        refinement_history: history,
    })
}

fn low_energy_limits(columns: &[PhaseColumn], zero: Option<&ZeroEnergySolution>) -> Vec<LowEnergyLimit> {
    let n_ell = columns.iter().map(|c| c.deltas.len()).max().unwrap_or(0);
    let get = |i: usize, l: usize| columns.get(i).and_then(|c| c.deltas.get(l)).copied().unwrap_or(0.0);
    let (l1, l2) = (columns[0].lambda, columns[1].lambda);
    (0..n_ell)
        .map(|ell| {
            let (d1, d2) = (get(0, ell), get(1, ell));
            if ell == 0 {
                if let Some(z) = zero {
                    let threshold = z.is_threshold();
                    let a = if threshold { 0.0 } else { 4.0 * z.a_coeff / (PI * z.b_coeff) };
                    let b = d1.tan().recip() - a / l1 - l1.ln() / PI;
                    let predicted = a / l2 + l2.ln() / PI + b;
                    let model_residual = (arccot_positive(predicted) - arccot_positive(d2.tan().recip())).abs();
                    let m_zero = if a > 0.0 && !threshold { f64::INFINITY } else { f64::NEG_INFINITY };
                    let delta_zero = d1 + arccot_positive(m_zero) - arccot_positive(d1.tan().recip());
                    return LowEnergyLimit { ell, delta_zero, model: LowEnergyModel::SWave { a, b, model_residual } };
                }
            }
            let p = ell as i32 + 1;
            let span = l2.powi(p) - l1.powi(p);
            let coeff = if span > 0.0 { (d2 - d1) / span } else { 0.0 };
            LowEnergyLimit { ell, delta_zero: d1 - coeff * l1.powi(p), model: LowEnergyModel::Power { coeff } }
        })
        .collect()
}

/// Geometric λ grid with `per_decade` points per decade, endpoints included.
#[must_use]
pub fn geometric_grid(lambda_min: f64, lambda_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (lambda_max / lambda_min).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let (a, b) = (lambda_min.ln(), lambda_max.ln());
    (0..=n).map(|i| if i == n { lambda_max } else { (a + (b - a) * i as f64 / n as f64).exp() }).collect()
}

/// Change of `δ_ℓ(k²)` when the integrator tolerance is divided by `2⁸`,
/// which for an eighth-order method is equivalent to halving every step.
///
/// # Errors
/// See [`phase_shift`].
pub fn step_halving_change(v: &RadialPotential, ell: usize, k: f64, opts: &RadialOptions) -> Result<f64, RadialError> {
    let coarse = phase_shift_with(v, ell, k, opts)?.point.delta;
    let fine_opts = RadialOptions { rtol: opts.rtol / 256.0, ..*opts };
    let fine = phase_shift_with(v, ell, k, &fine_opts)?.point.delta;
    Ok((coarse - fine).abs())
}

/// Angle between the `(a, b)` coefficient vectors obtained with the
/// matching radius one and three ranges beyond the support.
///
/// # Errors
/// See [`integrate_zero_energy`].
pub fn matching_radius_angle(v: &RadialPotential, ell: usize) -> Result<f64, RadialError> {
    let near = integrate_zero_energy_with(v, ell, &RadialOptions { match_offset: 1.0, check_offset: 3.0, ..Default::default() })?;
    let far = integrate_zero_energy_with(v, ell, &RadialOptions { match_offset: 3.0, check_offset: 5.0, ..Default::default() })?;
    let cross = near.a_coeff * far.b_coeff - near.b_coeff * far.a_coeff;
    let dot = near.a_coeff * far.a_coeff + near.b_coeff * far.b_coeff;
    Ok(cross.atan2(dot).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_j_zero;
    use crate::potential::{make_potential, Family};

    /// Closed-form square-well phase shift: interior `J_{ℓ+1}(qr)/r` with
    /// `q = √(k² + g)` matched to the exterior pair at `r = R`.
    fn square_well_oracle(g: f64, radius: f64, ell: usize, k: f64) -> f64 {
        let nu = (ell + 1) as u32;
        let q = (k * k + g).sqrt();
        let inner = bessel_pair(nu, q * radius).unwrap();
        let outer = bessel_pair(nu, k * radius).unwrap();
        // log-derivative of w = r f = J(qr)
        let gamma = q * inner.jp / inner.j;
        let num = outer.j * gamma - k * outer.jp;
        let den = outer.y * gamma - k * outer.yp;
        (num / den).atan()
    }

    fn wrap(d: f64) -> f64 {
        d - (d / PI).round() * PI
    }

    #[test]
    fn free_solution_is_constant() {
        let v = make_potential(Family::SquareWell, 0.0, 1.0).unwrap();
        let z = integrate_zero_energy(&v, 0).unwrap();
        assert!((z.a_coeff - 1.0).abs() < 1e-9);
        assert!(z.b_coeff.abs() < 1e-9);
        assert_eq!(z.node_count, 0);
        for ell in 0..4 {
            assert_eq!(count_bound_states_ell(&v, ell).unwrap(), 0);
            assert_eq!(phase_shift(&v, ell, 1.3).unwrap().delta, 0.0);
        }
    }

    #[test]
    fn threshold_square_well_has_no_growing_branch() {
        let j01 = bessel_j_zero(0, 1).unwrap();
        let v = make_potential(Family::SquareWell, j01 * j01, 1.0).unwrap();
        let z = integrate_zero_energy(&v, 0).unwrap();
        assert!(z.a_coeff.abs() < 1e-6 * z.b_coeff.abs(), "a = {}, b = {}", z.a_coeff, z.b_coeff);
        assert!(z.is_threshold());
    }

    #[test]
    fn node_counts_match_bessel_zeros() {
        let v10 = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        assert_eq!(integrate_zero_energy(&v10, 0).unwrap().node_count, 1);
        let v40 = make_potential(Family::SquareWell, 40.0, 1.0).unwrap();
        assert_eq!(count_bound_states_ell(&v40, 0).unwrap(), 2);
        let v16 = make_potential(Family::SquareWell, 16.0, 1.0).unwrap();
        assert_eq!(count_bound_states_ell(&v16, 1).unwrap(), 1);
        assert_eq!(count_bound_states_ell(&v16, 2).unwrap(), 0);
        // Just below a threshold the far node is absent, just above it appears.
        let j11 = bessel_j_zero(1, 1).unwrap().powi(2);
        let below = make_potential(Family::SquareWell, j11 * 0.999, 1.0).unwrap();
        let above = make_potential(Family::SquareWell, j11 * 1.001, 1.0).unwrap();
        assert_eq!(count_bound_states_ell(&below, 1).unwrap(), 0);
        assert_eq!(count_bound_states_ell(&above, 1).unwrap(), 1);
    }

    #[test]
    fn zero_energy_fit_residual_and_nodes() {
        let v = make_potential(Family::Gaussian, 12.0, 1.0).unwrap();
        for ell in 0..3 {
            let z = integrate_zero_energy(&v, ell).unwrap();
            assert!(z.fit_residual < 1e-7);
            assert_eq!(z.node_count, count_sign_changes(&z.values));
            assert_eq!(z.grid.len(), z.values.len());
            assert!(z.grid.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn square_well_phase_matches_closed_form() {
        for &g in &[2.0, 10.0, 40.0] {
            let v = make_potential(Family::SquareWell, g, 1.0).unwrap();
            for &k in &[0.05, 0.7, 3.0, 11.0] {
                for ell in 0..3 {
                    let num = phase_shift(&v, ell, k).unwrap().delta;
                    let oracle = square_well_oracle(g, 1.0, ell, k);
                    assert!(wrap(num - oracle).abs() < 1e-8, "g={g} k={k} l={ell}: {num} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn attractive_s_wave_is_positive_at_small_k() {
        let v = make_potential(Family::SquareWell, 2.0, 1.0).unwrap();
        assert!(phase_shift(&v, 0, 0.05).unwrap().delta > 0.0);
    }

    #[test]
    fn absolute_phase_counts_bound_states() {
        let v = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        let low = phase_shift(&v, 0, 0.01).unwrap().delta;
        assert!((low - PI).abs() < 0.05, "{low}");
        let v40 = make_potential(Family::SquareWell, 40.0, 1.0).unwrap();
        let low = phase_shift(&v40, 0, 0.01).unwrap().delta;
        assert!((low - 2.0 * PI).abs() < 0.05, "{low}");
    }

    #[test]
    fn high_energy_decay_is_born_like() {
        let v = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=20 {
            let k = 10.0 * 10f64.powf(i as f64 / 20.0);
            let d = phase_shift(&v, 0, k).unwrap().delta;
            worst = worst.max(d.abs() * k);
        }
        // Born: δ₀ ≈ (g/2k)(1 - J₀(2k)...) so k|δ| stays bounded near g/2.
        assert!(worst < 10.0, "k|δ| up to {worst}");
    }

    #[test]
    fn late_start_agrees_with_origin_start() {
        let v = make_potential(Family::Gaussian, 12.0, 1.0).unwrap();
        for &(ell, k) in &[(30usize, 3.0), (80, 12.0)] {
            let late = phase_shift_with(&v, ell, k, &RadialOptions::default()).unwrap();
            let eager = phase_shift_with(&v, ell, k, &RadialOptions { wkb_suppression: 1e9, ..Default::default() }).unwrap();
            assert!(late.r_start > eager.r_start);
            assert!((late.point.delta - eager.point.delta).abs() < 1e-12 + 1e-8 * eager.point.delta.abs());
        }
    }

    #[test]
    fn step_halving_and_matching_radius() {
        let v = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        for &(ell, k) in &[(0usize, 0.3), (1, 2.0), (3, 8.0)] {
            assert!(step_halving_change(&v, ell, k, &RadialOptions::default()).unwrap() <= 1e-8);
        }
        let g = make_potential(Family::Gaussian, 4.0, 1.0).unwrap();
        for ell in 0..3 {
            assert!(matching_radius_angle(&v, ell).unwrap() <= 1e-8);
            assert!(matching_radius_angle(&g, ell).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn table_levinson_per_wave() {
        let v = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        let grid = geometric_grid(1e-3, 4000.0, 10);
        let t = phase_shift_table(&v, 60, &grid).unwrap();
        let d0 = t.low_energy[0].delta_zero;
        assert!((d0 - PI).abs() < 1e-9, "δ₀(0+) = {d0}");
        let last = t.columns.len() - 1;
        assert!(t.delta(last, 0).abs() < 0.1, "{:?} {:?}", t.columns[last], t.refinement_history);
        for l in 1..t.low_energy.len() {
            assert!(t.low_energy[l].delta_zero.abs() < 1e-6);
        }
        for w in t.columns.windows(2) {
            for l in 0..w[0].deltas.len().min(w[1].deltas.len()) {
                assert!((w[0].deltas[l] - w[1].deltas[l]).abs() < FRAC_PI_2);
            }
        }
        if let LowEnergyModel::SWave { model_residual, .. } = t.low_energy[0].model {
            assert!(model_residual < 1e-3, "model residual {model_residual}");
        } else {
            panic!("s-wave model expected");
        }
    }

    #[test]
    fn threshold_table_reflects_resonance() {
        let j01 = bessel_j_zero(0, 1).unwrap();
        let v = make_potential(Family::SquareWell, j01 * j01, 1.0).unwrap();
        let grid = geometric_grid(1e-3, 100.0, 10);
        let t = phase_shift_table(&v, 30, &grid).unwrap();
        assert!(t.s_wave_threshold);
        assert!((t.low_energy[0].delta_zero - PI).abs() < 1e-9);
    }

    #[test]
    fn free_table_is_zero() {
        let v = make_potential(Family::SquareWell, 0.0, 1.0).unwrap();
        let t = phase_shift_table(&v, 10, &geometric_grid(0.01, 10.0, 5)).unwrap();
        assert!(t.columns.iter().all(|c| c.deltas.iter().all(|&d| d == 0.0)));
        assert!(t.low_energy.iter().all(|l| l.delta_zero == 0.0));
    }
}
