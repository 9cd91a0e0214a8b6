//! Partial-wave scattering matrix, the trace `Tr(S*S')`, and the Levinson
//! integral.
//!
//! For radial `V` the scattering matrix acts on degree-ℓ harmonics as
//! `e^{2iδ_ℓ(λ)}`, so `Tr(S(λ)*S'(λ)) = 2i Σ (ℓ+1)² δ_ℓ'(λ) = 2πi Φ'(λ)`
//! with `Φ = π⁻¹ Σ (ℓ+1)² δ_ℓ`. Writing `c₁ = 2πi·a`, the integrand
//! `(2πi)⁻¹(Tr - c₁)` is `Ψ'` for `Ψ(λ) = Φ(λ) - aλ`; `Ψ` is smooth in
//! `u = ln λ` and is the quantity that gets differentiated.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::{levinson_constants, moment_integrals, LevinsonConstants, PotentialEcho, PotentialError, RadialPotential};
use crate::radialode::{geometric_grid, phase_shift_table_with, PhaseShiftTable, RadialError, RadialOptions, TableOptions};
use crate::resonance::{detect_resonance, ResonanceError};
use crate::spectral::{total_bound_states, SpectralError};

#[derive(Debug, Error)]
pub enum SmatrixError {
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Resonance(#[from] ResonanceError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("the table needs at least five λ samples for differencing, got {0}")]
    TooFewSamples(usize),
}

/// `e^{2iδ_ℓ(λ)}` with `δ` interpolated linearly on the table.
///
/// # Errors
/// `λ` outside the tabulated range.
pub fn s_eigenvalue(table: &PhaseShiftTable, ell: usize, lambda: f64) -> Result<Complex64, SmatrixError> {
    let d = table.interpolate(ell, lambda)?;
    Ok(Complex64::from_polar(1.0, 2.0 * d))
}

/// Weights of the first derivative at `z` from the values at `x`
/// (Fornberg's recursion).
#[must_use]
pub fn fornberg_weights(z: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Derivative of samples `y(x)` at every node with `width`-point
/// stencils, centred in the interior and shifted inward at the ends.
#[must_use]
pub fn stencil_derivative(x: &[f64], y: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let half = width / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half).min(n - width);
            let w = fornberg_weights(x[i], &x[lo..lo + width]);
            w.iter().zip(&y[lo..lo + width]).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Default points per finite-difference stencil.
pub const STENCIL: usize = 9;

/// `Tr(S*S')` on the table grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCurve {
    pub lambda_grid: Vec<f64>,
    pub trace_values: Vec<Complex64>,
    pub c1: Complex64,
    /// `Ψ(λ) = Φ(λ) - aλ`.
    pub psi: Vec<f64>,
    /// `dΨ/du` with `u = ln λ`.
    pub dpsi_du: Vec<f64>,
    pub ell_max: usize,
    /// Bound on the omitted shells' share of `Φ`, per sample.
    pub tail_bounds: Vec<f64>,
    pub tail_bound: f64,
    pub certified: bool,
    /// Largest change of `Tr` relative to `max(|Tr|, |c₁|)` when the λ step
    /// is doubled.
    pub richardson_change: f64,
    /// λ at which `richardson_change` is attained.
    pub richardson_at: f64,
    /// Largest `|Re Tr|`.
    pub max_real_part: f64,
}

impl TraceCurve {
    /// `(2πi)⁻¹(Tr - c₁)` at sample `i`.
    #[must_use]
    pub fn reduced(&self, i: usize) -> f64 {
        self.dpsi_du[i] / self.lambda_grid[i]
    }

    /// CSV rows `(lambda, re, im, ell_max, tail_bound)`.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,re,im,ell_max,tail_bound\n");
        for (i, l) in self.lambda_grid.iter().enumerate() {
            let t = self.trace_values[i];
            out.push_str(&format!("{l:.17e},{:.17e},{:.17e},{},{:.6e}\n", t.re, t.im, self.ell_max, self.tail_bounds[i]));
        }
        out
    }

    /// Whether `|Tr - c₁|` decreases along a subsample of `per_decade`
    /// points per decade of `[from, λ_max]`. The subsample spacing keeps the
    /// comparison above the `sin(2kR)` ripple of compact wells.
    #[must_use]
    pub fn decreasing_beyond(&self, from: f64, per_decade: usize) -> bool {
        let lmax = *self.lambda_grid.last().expect("nonempty");
        if from >= lmax {
            return true;
        }
        let targets = geometric_grid(from, lmax, per_decade);
        let mut idx: Vec<usize> = targets
            .iter()
            .map(|&t| {
                let j = self.lambda_grid.partition_point(|&l| l < t);
                if j == 0 {
                    0
                } else if j == self.lambda_grid.len() || (t / self.lambda_grid[j - 1]).ln() < (self.lambda_grid[j] / t).ln() {
                    j - 1
                } else {
                    j
                }
            })
            .collect();
        idx.dedup();
        idx.windows(2).all(|w| (self.trace_values[w[1]] - self.c1).norm() < (self.trace_values[w[0]] - self.c1).norm())
    }
}

/// Trace curve from a phase-shift table.
///
/// # Errors
/// Fewer than `2·stencil` samples.
pub fn trace_derivative(table: &PhaseShiftTable, constants: &LevinsonConstants, stencil: usize) -> Result<TraceCurve, SmatrixError> {
    let lambdas = table.lambdas();
    let n = lambdas.len();
    if n < 2 * stencil {
        return Err(SmatrixError::TooFewSamples(n));
    }
    let a = constants.c1.im / (2.0 * PI);
    let u: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let psi: Vec<f64> = (0..n).map(|i| table.weighted_sum(i) / PI - a * lambdas[i]).collect();
    let dpsi_du = stencil_derivative(&u, &psi, stencil);
    let trace_values: Vec<Complex64> = (0..n).map(|i| constants.c1 + Complex64::new(0.0, 2.0 * PI * dpsi_du[i] / lambdas[i])).collect();

    let mut richardson_change = 0.0f64;
    let mut richardson_at = lambdas[0];
    {
        let ue: Vec<f64> = u.iter().step_by(2).copied().collect();
        let pe: Vec<f64> = psi.iter().step_by(2).copied().collect();
        let coarse = stencil_derivative(&ue, &pe, stencil);
        for (k, dc) in coarse.iter().enumerate().take(coarse.len() - 2).skip(2) {
            let i = 2 * k;
            let diff = 2.0 * PI * (dc - dpsi_du[i]).abs() / lambdas[i];
            let scale = trace_values[i].norm().max(constants.c1.norm());
            if scale > 0.0 && diff / scale > richardson_change {
                richardson_change = diff / scale;
                richardson_at = lambdas[i];
            }
        }
    }
    let tail_bounds: Vec<f64> = table.columns.iter().map(|c| c.tail_bound / PI).collect();
    Ok(TraceCurve {
        lambda_grid: lambdas,
        max_real_part: trace_values.iter().map(|t| t.re.abs()).fold(0.0, f64::max),
        trace_values,
        c1: constants.c1,
        psi,
        dpsi_du,
        ell_max: table.ell_count().saturating_sub(1),
        tail_bound: tail_bounds.iter().copied().fold(0.0, f64::max),
        tail_bounds,
        certified: table.columns.iter().all(|c| c.certified),
        richardson_change,
        richardson_at,
    })
}

/// The pieces of `(2πi)⁻¹ ∫₀^∞ (Tr - c₁) dλ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevinsonIntegral {
    pub value: f64,
    /// Trapezoid rule on `[λ_min, Λ]`.
    pub grid_part: f64,
    /// `Ψ(λ_min) - Ψ(0⁺)` from the low-energy limits.
    pub low_end: f64,
    /// `∫_Λ^∞` of the fit `A λ^{-3/2}`, i.e. `2A/√Λ`.
    pub tail_estimate: f64,
    pub tail_amplitude: f64,
    /// RMS misfit of the tail model over the last decade, relative to the
    /// RMS of the data.
    pub tail_fit_residual: f64,
    /// `|Ψ(Λ) - Ψ(Λ/10)|`.
    pub last_decade_change: f64,
    /// Good fit, or a last decade flat to [`TAIL_NEGLIGIBLE`].
    pub tail_reliable: bool,
    /// `Ψ(Λ) - Ψ(λ_min)` without differencing, for comparison.
    pub direct_difference: f64,
    pub lambda_cutoff: f64,
}

/// Relative misfit above which the tail fit is declared unreliable.
pub const TAIL_FIT_TOL: f64 = 0.5;

/// Change of `Ψ` over the last decade below which the tail is negligible
/// whatever its shape.
pub const TAIL_NEGLIGIBLE: f64 = 1e-4;

/// Integrates the reduced trace: trapezoid rule in `u = ln λ` on the grid,
/// the low-energy limits below it and a power-law tail above it.
#[must_use]
pub fn levinson_integral(curve: &TraceCurve, table: &PhaseShiftTable) -> LevinsonIntegral {
    let n = curve.lambda_grid.len();
    let u: Vec<f64> = curve.lambda_grid.iter().map(|l| l.ln()).collect();
    let grid_part: f64 = (1..n).map(|i| 0.5 * (u[i] - u[i - 1]) * (curve.dpsi_du[i] + curve.dpsi_du[i - 1])).sum();
    let low_end = curve.psi[0] - table.weighted_sum_at_zero() / PI;
    let lambda_cutoff = curve.lambda_grid[n - 1];

    let start = lambda_cutoff / 10.0;
    let fit: Vec<(f64, f64)> =
        (0..n).filter(|&i| curve.lambda_grid[i] >= start).map(|i| (curve.lambda_grid[i], curve.reduced(i))).collect();
    let num: f64 = fit.iter().map(|(l, y)| y * l.powf(-1.5)).sum();
    let den: f64 = fit.iter().map(|(l, _)| l.powi(-3)).sum();
    let amplitude = if den > 0.0 { num / den } else { 0.0 };
    let rms = |f: &dyn Fn(f64, f64) -> f64| (fit.iter().map(|&(l, y)| f(l, y).powi(2)).sum::<f64>() / fit.len().max(1) as f64).sqrt();
    let data_rms = rms(&|_, y| y);
    let misfit = rms(&|l, y| y - amplitude * l.powf(-1.5));
    let tail_fit_residual = if data_rms > 0.0 { misfit / data_rms } else { 0.0 };
    let tail_estimate = 2.0 * amplitude / lambda_cutoff.sqrt();
    let first = curve.lambda_grid.partition_point(|&l| l < start).min(n - 1);
    let last_decade_change = (curve.psi[n - 1] - curve.psi[first]).abs();
    LevinsonIntegral {
        value: grid_part + low_end + tail_estimate,
        grid_part,
        low_end,
        tail_estimate,
        tail_amplitude: amplitude,
        tail_fit_residual,
        last_decade_change,
        tail_reliable: fit.len() >= 3 && (tail_fit_residual < TAIL_FIT_TOL || last_decade_change < TAIL_NEGLIGIBLE),
        direct_difference: curve.psi[n - 1] - curve.psi[0],
        lambda_cutoff,
    }
}

/// Grid and truncation settings of a Levinson evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevinsonOptions {
    /// Defaults to `10⁻⁴·g`.
    pub lambda_min: Option<f64>,
    /// Defaults to `400·max(1, g)`.
    pub lambda_max: Option<f64>,
    pub points_per_decade: usize,
    /// Points per stencil for `dΨ/du`.
    pub stencil: usize,
    pub ell_cap: usize,
    pub bound_state_ell_cap: usize,
    pub table: TableOptions,
    pub richardson_tol: f64,
}

impl Default for LevinsonOptions {
    fn default() -> Self {
        Self {
            lambda_min: None,
            lambda_max: None,
            points_per_decade: 320,
            stencil: STENCIL,
            ell_cap: 4000,
            bound_state_ell_cap: 200,
            table: TableOptions { radial: RadialOptions { rtol: 1e-12, ..RadialOptions::default() }, ..TableOptions::default() },
            richardson_tol: 1e-6,
        }
    }
}

impl LevinsonOptions {
    #[must_use]
    pub fn grid(&self, v: &RadialPotential) -> Vec<f64> {
        let g = v.coupling.abs();
        let lmin = self.lambda_min.unwrap_or(if g > 0.0 { 1e-4 * g } else { 1e-4 });
        let lmax = self.lambda_max.unwrap_or(400.0 * g.max(1.0));
        geometric_grid(lmin, lmax, self.points_per_decade)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevinsonReport {
    pub potential: PotentialEcho,
    #[serde(rename = "N_total")]
    pub n_total: usize,
    #[serde(rename = "dim_Ps")]
    pub dim_ps: usize,
    pub integral: f64,
    pub integral_parts: LevinsonIntegral,
    pub c1: Complex64,
    pub beta2: f64,
    pub lhs: f64,
    /// `integral - beta2 + dim_Ps`.
    pub rhs: f64,
    pub residual: f64,
    /// `integral + beta2 + dim_Ps`.
    pub rhs_plus_beta2: f64,
    pub residual_plus_beta2: f64,
    pub lambda_cutoff: f64,
    pub tail_estimate: f64,
    pub lambda_min: f64,
    pub grid_points: usize,
    pub ell_max: usize,
    pub ell_tail_bound: f64,
    pub richardson_change: f64,
    pub max_real_part: f64,
    pub certified: bool,
    pub notes: Vec<String>,
    pub options: LevinsonOptions,
}

/// Everything a Levinson evaluation produces.
#[derive(Debug, Clone)]
pub struct LevinsonRun {
    pub report: LevinsonReport,
    pub table: PhaseShiftTable,
    pub curve: TraceCurve,
    pub constants: LevinsonConstants,
}

/// Bound states, resonance, phase shifts and the trace integral of one
/// potential, assembled into both readings of the identity.
///
/// # Errors
/// Propagates failures of every stage.
pub fn levinson_run(v: &RadialPotential, opts: &LevinsonOptions) -> Result<LevinsonRun, SmatrixError> {
    let bound = total_bound_states(v, opts.bound_state_ell_cap)?;
    let resonance = detect_resonance(v)?;
    let constants = levinson_constants(&moment_integrals(v)?);
    let grid = opts.grid(v);
    let table = phase_shift_table_with(v, opts.ell_cap, &grid, &opts.table)?;
    let curve = trace_derivative(&table, &constants, opts.stencil)?;
    let parts = levinson_integral(&curve, &table);

    let n = bound.n_total;
    let dim = resonance.dim_ps;
    let lhs = if n == 0 { 0.0 } else { -(n as f64) };
    let rhs = parts.value - constants.beta2 + dim as f64;
    let rhs_plus = parts.value + constants.beta2 + dim as f64;
    let mut notes = bound.warnings.clone();
    if !curve.certified {
        notes.push("ell truncation not certified at some lambda".into());
    }
    if !parts.tail_reliable {
        notes.push(format!("tail fit misfit {:.3} above {TAIL_FIT_TOL}", parts.tail_fit_residual));
    }
    if curve.richardson_change > opts.richardson_tol {
        notes.push(format!("step-doubling change {:.3e} above {:.1e}", curve.richardson_change, opts.richardson_tol));
    }
    let certified = bound.certified() && curve.certified && parts.tail_reliable && curve.richardson_change <= opts.richardson_tol;
    let report = LevinsonReport {
        potential: PotentialEcho::from(v),
        n_total: n,
        dim_ps: dim,
        integral: parts.value,
        integral_parts: parts,
        c1: constants.c1,
        beta2: constants.beta2,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        rhs_plus_beta2: rhs_plus,
        residual_plus_beta2: (lhs - rhs_plus).abs(),
        lambda_cutoff: parts.lambda_cutoff,
        tail_estimate: parts.tail_estimate,
        lambda_min: table.lambda_min(),
        grid_points: table.columns.len(),
        ell_max: curve.ell_max,
        ell_tail_bound: curve.tail_bound,
        richardson_change: curve.richardson_change,
        max_real_part: curve.max_real_part,
        certified,
        notes,
        options: *opts,
    };
    Ok(LevinsonRun { report, table, curve, constants })
}

/// [`levinson_run`] reduced to its report.
///
/// # Errors
/// See [`levinson_run`].
pub fn levinson_verdict(v: &RadialPotential) -> Result<LevinsonReport, SmatrixError> {
    levinson_run(v, &LevinsonOptions::default()).map(|r| r.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_potential, Family};
    use crate::radialode::phase_shift_table;
    use proptest::prelude::*;

    #[test]
    fn fornberg_is_exact_on_quartics() {
        let x = [0.0, 0.3, 0.35, 1.0, 1.7];
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t.powi(3) - t.powi(4);
        let df = |t: f64| -2.0 + 1.5 * t * t - 4.0 * t.powi(3);
        for &z in &x {
            let w = fornberg_weights(z, &x);
            let d: f64 = w.iter().zip(&x).map(|(a, &b)| a * f(b)).sum();
            assert!((d - df(z)).abs() < 1e-11, "{d} vs {}", df(z));
        }
    }

    #[test]
    fn free_case_is_trivial() {
        let v = make_potential(Family::SquareWell, 0.0, 1.0).unwrap();
        let t = phase_shift_table(&v, 20, &geometric_grid(1e-3, 100.0, 10)).unwrap();
        assert_eq!(s_eigenvalue(&t, 3, 2.0).unwrap(), Complex64::new(1.0, 0.0));
        let c = levinson_constants(&moment_integrals(&v).unwrap());
        let curve = trace_derivative(&t, &c, STENCIL).unwrap();
        assert!(curve.trace_values.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        let i = levinson_integral(&curve, &t);
        assert_eq!((i.value, i.tail_estimate), (0.0, 0.0));
        assert!(matches!(s_eigenvalue(&t, 0, 1e4), Err(SmatrixError::Radial(RadialError::OutsideTable { .. }))));
    }

    #[test]
    fn square_well_born_limit_and_identity() {
        let v = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        let run = levinson_run(&v, &LevinsonOptions::default()).unwrap();
        let c = &run.curve;
        let i400 = c.lambda_grid.partition_point(|&l| l < 400.0);
        let rel = (c.trace_values[i400] - c.c1).norm() / c.c1.norm();
        assert!(rel < 0.05, "|Tr - c1|/|c1| = {rel}");
        assert!(c.max_real_part < 1e-10);
        let lmax = *c.lambda_grid.last().unwrap();
        assert!(c.decreasing_beyond(lmax / 10.0, 10));
        let r = &run.report;
        assert!(r.certified, "{:?}", r.notes);
        assert_eq!(r.n_total, 1);
        assert!(r.residual_plus_beta2 < 0.05, "{r:#?}");
        assert!((r.integral_parts.grid_part - r.integral_parts.direct_difference).abs() < 1e-3);
        for (i, l) in c.lambda_grid.iter().enumerate().step_by(37) {
            let s = s_eigenvalue(&run.table, 0, *l).unwrap();
            assert!((s.norm() - 1.0).abs() < 1e-15);
            assert!((s.arg() - (2.0 * run.table.delta(i, 0)).sin().atan2((2.0 * run.table.delta(i, 0)).cos())).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn s_eigenvalue_is_unimodular(ell in 0usize..4, t in 0.0f64..1.0) {
            let v = make_potential(Family::Gaussian, 5.0, 1.0).unwrap();
            let grid = geometric_grid(0.01, 50.0, 8);
            let table = phase_shift_table(&v, 30, &grid).unwrap();
            let l = (0.01f64.ln() + t * (50.0f64.ln() - 0.01f64.ln())).exp().clamp(0.01, 50.0);
            let s = s_eigenvalue(&table, ell, l).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-14);
        }
    }
}
