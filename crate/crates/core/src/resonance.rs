//! Zero-energy s-resonances: detection, threshold couplings, the resonance
//! constants and a Birman–Schwinger cross-check.
//!
//! In four dimensions a zero-energy solution of sector ℓ behaves like
//! `a + b r^{-2}` (ℓ = 0) or `a r^ℓ + b r^{-ℓ-2}` beyond the support. With
//! `a = 0` the ℓ ≥ 1 solutions are square integrable (zero eigenvalues);
//! only the s-wave tail `r^{-2}` fails to be, so resonances are s-waves.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::{PotentialEcho, RadialPotential, SPHERE_VOLUME};
use crate::quadrature::gauss_legendre;
use crate::radialode::{integrate_zero_energy, RadialError, ZeroEnergySolution, GROWTH_RATIO_TOL};

/// Admissible relative mismatch of the Green's-function tail relation.
pub const GREEN_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ResonanceError {
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error("near-threshold, not certified: |a/b| = {ratio:e}")]
    NearThreshold { ratio: f64 },
    #[error("no s-resonance: |a/b| = {ratio:e}")]
    NoResonance { ratio: f64 },
    #[error("tail relation violated: tail_b = {tail_b}, -overlap/(4π²) = {predicted}")]
    TailMismatch { tail_b: f64, predicted: f64 },
    #[error("resonance with vanishing overlap")]
    VanishingOverlap,
    #[error("a_coeff has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("profile is negative at r = {0}; the Birman–Schwinger oracle needs an attractive shape")]
    NotAttractive(f64),
    #[error("Birman–Schwinger threshold moved by {shift:e} under refinement")]
    NotConverged { shift: f64 },
    #[error("first threshold {g_star} lies above g_max = {g_max}")]
    AboveMaximum { g_star: f64, g_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceStatus {
    Absent,
    Resonant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub potential: PotentialEcho,
    pub status: ResonanceStatus,
    #[serde(rename = "dim_Ps")]
    pub dim_ps: usize,
    pub a_coeff: f64,
    pub b_coeff: f64,
    pub growth_ratio: f64,
    /// `r^{-2}` coefficient of ψ: 1 for a resonance (ψ = f/b), otherwise the
    /// coefficient of the origin-normalised solution.
    pub tail_b: f64,
    /// `∫_{ℝ⁴} V ψ dx = 2π² ∫ V ψ r³ dr`.
    pub overlap: f64,
    /// `-overlap²/(8π²)`.
    pub c2: Complex64,
    pub threshold_coupling: Option<f64>,
    /// `|tail_b + overlap/(4π²)| / |tail_b|`.
    pub tail_residual: f64,
    pub fit_residual: f64,
    pub tolerance: f64,
}

fn report_from(v: &RadialPotential, z: &ZeroEnergySolution, resonant: bool) -> ResonanceReport {
    let (tail_b, moment) = if resonant { (1.0, z.v_moment / z.b_coeff) } else { (z.b_coeff, z.v_moment) };
    let overlap = SPHERE_VOLUME * moment;
    let c2 = Complex64::new(-overlap * overlap / (8.0 * PI * PI), 0.0);
    let predicted = -overlap / (4.0 * PI * PI);
    let tail_residual = if tail_b == 0.0 { predicted.abs() } else { (tail_b - predicted).abs() / tail_b.abs() };
    ResonanceReport {
        potential: PotentialEcho::from(v),
        status: if resonant { ResonanceStatus::Resonant } else { ResonanceStatus::Absent },
        dim_ps: usize::from(resonant),
        a_coeff: z.a_coeff,
        b_coeff: z.b_coeff,
        growth_ratio: z.growth_ratio(),
        tail_b,
        overlap,
        c2,
        threshold_coupling: None,
        tail_residual,
        fit_residual: z.fit_residual,
        tolerance: GROWTH_RATIO_TOL,
    }
}

/// Classifies the s-wave zero-energy solution.
///
/// # Errors
/// [`ResonanceError::NearThreshold`] for `tol ≤ |a/b| < 10·tol`, and
/// integration failures.
pub fn detect_resonance(v: &RadialPotential) -> Result<ResonanceReport, ResonanceError> {
    let z = integrate_zero_energy(v, 0)?;
    let ratio = z.growth_ratio();
    if (GROWTH_RATIO_TOL..10.0 * GROWTH_RATIO_TOL).contains(&ratio) {
        return Err(ResonanceError::NearThreshold { ratio });
    }
    Ok(report_from(v, &z, ratio < GROWTH_RATIO_TOL))
}

/// Resonance data of a potential at threshold, with the tail relation
/// `tail_b = -overlap/(4π²)` (the 4D Green's function `1/(4π²|x-y|²)`
/// seen from far away) enforced.
///
/// # Errors
/// No resonance, vanishing overlap, or a tail-relation breach.
pub fn resonance_constants(v: &RadialPotential) -> Result<ResonanceReport, ResonanceError> {
    let report = detect_resonance(v)?;
    if report.dim_ps == 0 {
        return Err(ResonanceError::NoResonance { ratio: report.growth_ratio });
    }
    if report.overlap == 0.0 {
        return Err(ResonanceError::VanishingOverlap);
    }
    if report.tail_residual > GREEN_TOL {
        return Err(ResonanceError::TailMismatch { tail_b: report.tail_b, predicted: -report.overlap / (4.0 * PI * PI) });
    }
    Ok(report)
}

/// The scalar `s` with `N(0)B(0) = s·P_s`: `(2/c₂)·overlap²/(16π²)` for a
/// resonance, zero otherwise.
#[must_use]
pub fn ns_b0_product_check(report: &ResonanceReport) -> f64 {
    if report.dim_ps == 0 {
        return 0.0;
    }
    let o2 = report.overlap * report.overlap;
    (2.0 / report.c2.re) * (o2 / (16.0 * PI * PI))
}

/// `a_coeff` of the s-wave zero-energy solution at coupling `g`.
///
/// # Errors
/// Integration failures.
pub fn growth_coefficient(template: &RadialPotential, g: f64) -> Result<f64, ResonanceError> {
    Ok(integrate_zero_energy(&template.with_coupling(g), 0)?.a_coeff)
}

/// Bisection of `g ↦ a_coeff(g)` to relative width `10⁻¹⁰`.
///
/// # Errors
/// No sign change on the bracket, or integration failures.
pub fn find_threshold_coupling(template: &RadialPotential, bracket: (f64, f64)) -> Result<f64, ResonanceError> {
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let mut f_lo = growth_coefficient(template, lo)?;
    let f_hi = growth_coefficient(template, hi)?;
    if f_lo * f_hi > 0.0 {
        return Err(ResonanceError::NoSignChange { lo, hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    while hi - lo > 1e-10 * hi.abs().max(lo.abs()) {
        let mid = 0.5 * (lo + hi);
        let f_mid = growth_coefficient(template, mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A sweep of `a_coeff` over a coupling bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub potential: PotentialEcho,
    pub couplings: Vec<f64>,
    pub a_coeffs: Vec<f64>,
    pub threshold_coupling: Option<f64>,
}

/// Samples `a_coeff` on `points` equispaced couplings and bisects the first
/// sign change.
///
/// # Errors
/// Integration failures.
pub fn resonance_scan(template: &RadialPotential, bracket: (f64, f64), points: usize) -> Result<ResonanceScan, ResonanceError> {
    let n = points.max(2);
    let couplings: Vec<f64> = (0..n).map(|i| bracket.0 + (bracket.1 - bracket.0) * i as f64 / (n - 1) as f64).collect();
    let a_coeffs = couplings.iter().map(|&g| growth_coefficient(template, g)).collect::<Result<Vec<_>, _>>()?;
    let mut threshold = None;
    for i in 1..n {
        if a_coeffs[i - 1] * a_coeffs[i] <= 0.0 {
            threshold = Some(find_threshold_coupling(template, (couplings[i - 1], couplings[i]))?);
            break;
        }
    }
    Ok(ResonanceScan { potential: PotentialEcho::from(template), couplings, a_coeffs, threshold_coupling: threshold })
}

/// Nyström discretisation of the Birman–Schwinger kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsGrid {
    /// Panels per range unit on `[0, support]`.
    pub panels_per_range: usize,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Admissible relative shift of `g*` when the panels are doubled.
    pub refinement_tol: f64,
}

impl Default for BsGrid {
    fn default() -> Self {
        Self { panels_per_range: 64, order: 6, refinement_tol: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsThreshold {
    pub g_star: f64,
    pub mu_max: f64,
    pub refinement_shift: f64,
    pub nodes: usize,
}

fn bs_mu_max(v: &RadialPotential, panels: usize, order: usize) -> Result<(f64, usize), ResonanceError> {
    let (x, w) = gauss_legendre(order);
    let s = v.support_radius;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in 0..panels {
        let (a, b) = (s * p as f64 / panels as f64, s * (p + 1) as f64 / panels as f64);
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(0.5 * (a + b) + 0.5 * (b - a) * xi);
            weights.push(0.5 * (b - a) * wi);
        }
    }
    let mut scale = Vec::with_capacity(nodes.len());
    for (&r, &wt) in nodes.iter().zip(&weights) {
        let p = v.profile(r);
        if p < 0.0 {
            return Err(ResonanceError::NotAttractive(r));
        }
        scale.push((wt * r * r * r * p).sqrt());
    }
    let n = nodes.len();
    // M_ij = s_i s_j / (2 max(r_i, r_j)²) is semi-separable on the sorted
    // nodes, so a product costs O(n); the kernel is positive, and power
    // iteration converges to the top of the spectrum.
    let apply = |x: &[f64], out: &mut [f64]| {
        let mut inner = 0.0;
        for i in 0..n {
            inner += scale[i] * x[i];
            out[i] = inner / (2.0 * nodes[i] * nodes[i]);
        }
        let mut outer = 0.0;
        for i in (0..n).rev() {
            out[i] = scale[i] * (out[i] + outer);
            outer += scale[i] * x[i] / (2.0 * nodes[i] * nodes[i]);
        }
    };
    let mut x: Vec<f64> = scale.clone();
    let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((0.0, n));
    }
    x.iter_mut().for_each(|a| *a /= norm);
    let mut y = vec![0.0; n];
    let mut mu = 0.0;
    for _ in 0..10_000 {
        apply(&x, &mut y);
        let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        for (a, b) in x.iter_mut().zip(&y) {
            *a = b / ny;
        }
        if (next - mu).abs() <= 1e-15 * next.abs() {
            mu = next;
            break;
        }
        mu = next;
    }
    Ok((mu, n))
}

/// First s-wave threshold coupling `g* = 1/μ_max` of the zero-energy
/// Birman–Schwinger kernel `p^{1/2}(r) (2 max(r,r')²)^{-1} p^{1/2}(r')`
/// on `r³dr`, which is the ℓ = 0 average of `1/(4π²|x-y|²)` times `2π²`.
///
/// # Errors
/// Negative profile values, a refinement shift above tolerance, or
/// `g* > g_max`.
pub fn bs_threshold_oracle(template: &RadialPotential, g_max: f64, grid: &BsGrid) -> Result<BsThreshold, ResonanceError> {
    let panels = ((template.support_radius / template.range) * grid.panels_per_range as f64).ceil() as usize;
    let (mu_coarse, _) = bs_mu_max(template, panels, grid.order)?;
    let (mu_fine, nodes) = bs_mu_max(template, 2 * panels, grid.order)?;
    let shift = (mu_fine - mu_coarse).abs() / mu_fine;
    if shift > grid.refinement_tol {
        return Err(ResonanceError::NotConverged { shift });
    }
    let g_star = 1.0 / mu_fine;
    if g_star > g_max {
        return Err(ResonanceError::AboveMaximum { g_star, g_max });
    }
    Ok(BsThreshold { g_star, mu_max: mu_fine, refinement_shift: shift, nodes })
}
