//! Edge symbols of the wave operator on the boundary hexagon, their
//! determinants and winding numbers.
//!
//! The pointwise determinant of `S(λ)` has phase `2πΦ(λ)`, which grows like
//! `aλ` at high energy. Edges Γ₂ and Γ₆ therefore carry the regularised
//! determinant `exp(2πi(Φ - aλ + β₂ λ/(1+λ)))`, which has the same winding
//! on every finite stretch up to a bounded correction and tends to `1` at
//! both ends exactly when the Levinson identity holds.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::{LevinsonConstants, RadialPotential};
use crate::quadrature;
use crate::radialode::PhaseShiftTable;
use crate::smatrix::{levinson_integral, levinson_run, trace_derivative, LevinsonOptions, LevinsonRun, SmatrixError, STENCIL};

#[derive(Debug, Error)]
pub enum HexagonError {
    #[error(transparent)]
    Smatrix(#[from] SmatrixError),
    #[error("phase table has {columns} columns and {limits} low-energy limits; both must be nonempty")]
    Coverage { columns: usize, limits: usize },
    #[error("edge {edge}: phase jump {jump:.3} rad near parameter {param} survives {depth} bisections")]
    UnresolvedJump { edge: usize, param: f64, jump: f64, depth: usize },
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] quadrature::QuadratureError),
}

/// `½(1 + tanh(πx) - i·sech(πx))`.
#[must_use]
pub fn varphi(x: f64) -> Complex64 {
    if x > 30.0 {
        return Complex64::new(1.0, 0.0);
    }
    if x < -30.0 {
        return Complex64::new(0.0, 0.0);
    }
    let t = (PI * x).tanh();
    let sech = 1.0 / (PI * x).cosh();
    Complex64::new(0.5 * (1.0 + t), -0.5 * sech)
}

/// `-tanh(πs) + i·sech(πs)`.
#[must_use]
pub fn phi_edge(s: f64) -> Complex64 {
    if s.abs() > 30.0 {
        return Complex64::new(-s.signum(), 0.0);
    }
    Complex64::new(-(PI * s).tanh(), 1.0 / (PI * s).cosh())
}

/// Which variable parametrises an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeParameter {
    S,
    Ell,
    Xi,
}

/// Direction of travel along the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

impl Orientation {
    #[must_use]
    pub fn flipped(self) -> Self {
        match self {
            Self::Increasing => Self::Decreasing,
            Self::Decreasing => Self::Increasing,
        }
    }
}

/// One sampled edge, in the order of travel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCurve {
    pub edge_id: usize,
    pub parameter: EdgeParameter,
    pub orientation: Orientation,
    /// Compactified coordinate in `[-1, 1]`; the parameter is a scaled
    /// `atanh` of it, so `±1` are the infinite endpoints.
    pub t_grid: Vec<f64>,
    pub param_grid: Vec<f64>,
    pub det_values: Vec<Complex64>,
    pub unwrapped_arg: Vec<f64>,
}

impl EdgeCurve {
    fn from_samples(edge_id: usize, parameter: EdgeParameter, orientation: Orientation, samples: Vec<(f64, f64, Complex64)>) -> Self {
        let mut curve = Self {
            edge_id,
            parameter,
            orientation,
            t_grid: samples.iter().map(|s| s.0).collect(),
            param_grid: samples.iter().map(|s| s.1).collect(),
            det_values: samples.iter().map(|s| s.2).collect(),
            unwrapped_arg: Vec::new(),
        };
        curve.unwrapped_arg = unwrap(&curve.det_values);
        curve
    }

    /// The same edge travelled the other way.
    #[must_use]
    pub fn reversed(&self) -> Self {
        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        let det: Vec<Complex64> = self.det_values.iter().rev().copied().collect();
        Self {
            edge_id: self.edge_id,
            parameter: self.parameter,
            orientation: self.orientation.flipped(),
            t_grid: rev(&self.t_grid),
            param_grid: rev(&self.param_grid),
            unwrapped_arg: unwrap(&det),
            det_values: det,
        }
    }

    #[must_use]
    pub fn first(&self) -> Complex64 {
        self.det_values[0]
    }

    #[must_use]
    pub fn last(&self) -> Complex64 {
        *self.det_values.last().expect("nonempty")
    }

    /// Largest `||det| - 1|`.
    #[must_use]
    pub fn modulus_error(&self) -> f64 {
        self.det_values.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// CSV rows `(edge_id, param, re_det, im_det, unwrapped_arg)`.
    #[must_use]
    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        for (i, z) in self.det_values.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.edge_id, self.param_grid[i], z.re, z.im, self.unwrapped_arg[i]
            ));
        }
        out
    }
}

/// CSV of several edges with a single header.
#[must_use]
pub fn curves_to_csv(curves: &[EdgeCurve]) -> String {
    let mut out = String::from("edge_id,param,re_det,im_det,unwrapped_arg\n");
    for c in curves {
        out.push_str(&c.to_csv_rows());
    }
    out
}

fn increments(det: &[Complex64]) -> Vec<f64> {
    det.windows(2).map(|w| (w[1] * w[0].conj()).arg()).collect()
}

fn unwrap(det: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(det.len());
    let Some(first) = det.first() else { return out };
    let mut acc = first.arg();
    out.push(acc);
    for d in increments(det) {
        acc += d;
        out.push(acc);
    }
    out
}

/// Pairwise sum whose recursion tree is mirror-symmetric, so that the
/// negated reversal of `x` sums to exactly minus the sum of `x`.
fn mirror_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        n => {
            let h = n / 2;
            let pair = mirror_sum(&x[..h]) + mirror_sum(&x[n - h..]);
            if n % 2 == 1 {
                pair + x[h]
            } else {
                pair
            }
        }
    }
}

/// Jump above which adjacent samples are refined.
pub const MAX_JUMP: f64 = PI / 2.0;

/// `Δarg/2π` along the edge's orientation.
///
/// # Errors
/// An adjacent phase jump above [`MAX_JUMP`], which refinement during
/// sampling should have removed.
pub fn winding(curve: &EdgeCurve) -> Result<f64, HexagonError> {
    let inc = increments(&curve.det_values);
    if let Some((i, d)) = inc.iter().enumerate().find(|(_, d)| d.abs() > MAX_JUMP) {
        return Err(HexagonError::UnresolvedJump { edge: curve.edge_id, param: curve.param_grid[i], jump: *d, depth: 0 });
    }
    Ok(mirror_sum(&inc) / (2.0 * PI))
}

/// `(2πi)⁻¹ ∫ 4i/(4s²+1) ds` over the real line, by adaptive quadrature after
/// `s = t/(1-t²)`.
///
/// # Errors
/// Quadrature failure.
pub fn analytic_gamma4_winding() -> Result<f64, HexagonError> {
    let f = |t: f64| {
        let d = 1.0 - t * t;
        let s = t / d;
        let ds = (1.0 + t * t) / (d * d);
        4.0 / (4.0 * s * s + 1.0) * ds
    };
    let q = quadrature::integrate(f, -1.0, 1.0, 1e-13, 1e-15)?;
    Ok(q.value / (2.0 * PI))
}

/// `Φ(λ) - aλ + β₂ λ/(1+λ)` in turns, on `[0, ∞]`.
#[derive(Debug, Clone)]
pub struct RegularizedPhase<'a> {
    table: &'a PhaseShiftTable,
    a: f64,
    beta2: f64,
    lambdas: Vec<f64>,
    psi: Vec<f64>,
    phi_zero: f64,
    tail_amplitude: f64,
}

impl<'a> RegularizedPhase<'a> {
    /// # Errors
    /// An empty table or too few samples for the tail fit.
    pub fn new(table: &'a PhaseShiftTable, constants: &LevinsonConstants) -> Result<Self, HexagonError> {
        if table.columns.is_empty() || table.low_energy.is_empty() {
            return Err(HexagonError::Coverage { columns: table.columns.len(), limits: table.low_energy.len() });
        }
        let a = constants.c1.im / (2.0 * PI);
        let lambdas = table.lambdas();
        let psi = (0..lambdas.len()).map(|i| table.weighted_sum(i) / PI - a * lambdas[i]).collect();
        let stencil = STENCIL.min(lambdas.len() / 2).max(1);
        let tail_amplitude = match trace_derivative(table, constants, stencil) {
            Ok(curve) => levinson_integral(&curve, table).tail_amplitude,
            Err(SmatrixError::TooFewSamples(_)) => 0.0,
            Err(e) => return Err(e.into()),
        };
        Ok(Self { table, a, beta2: constants.beta2, lambdas, psi, phi_zero: table.weighted_sum_at_zero() / PI, tail_amplitude })
    }

    /// `Ψ = Φ - aλ`.
    #[must_use]
    pub fn psi(&self, lambda: f64) -> f64 {
        let n = self.lambdas.len();
        let (lmin, lmax) = (self.lambdas[0], self.lambdas[n - 1]);
        if lambda <= 0.0 {
            self.phi_zero
        } else if lambda < lmin {
            let phi: f64 =
                (0..self.table.low_energy.len()).map(|l| ((l + 1) * (l + 1)) as f64 * self.table.below_grid(l, lambda)).sum::<f64>() / PI;
            phi - self.a * lambda
        } else if lambda <= lmax {
            let j = self.lambdas.partition_point(|&l| l <= lambda);
            if j >= n {
                return self.psi[n - 1];
            }
            let t = (lambda - self.lambdas[j - 1]) / (self.lambdas[j] - self.lambdas[j - 1]);
            (1.0 - t) * self.psi[j - 1] + t * self.psi[j]
        } else {
            let inv = if lambda.is_finite() { lambda.sqrt().recip() } else { 0.0 };
            self.psi[n - 1] + 2.0 * self.tail_amplitude * (lmax.sqrt().recip() - inv)
        }
    }

    #[must_use]
    pub fn turns(&self, lambda: f64) -> f64 {
        let rho = if lambda.is_finite() { lambda / (1.0 + lambda) } else { 1.0 };
        self.psi(lambda) + self.beta2 * rho
    }

    #[must_use]
    pub fn det(&self, lambda: f64) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * self.turns(lambda))
    }

    /// `δ_ℓ(λ)` from the table or its low-energy model.
    #[must_use]
    pub fn delta(&self, ell: usize, lambda: f64) -> f64 {
        if lambda < self.table.lambda_min() {
            self.table.below_grid(ell, lambda)
        } else {
            self.table.interpolate(ell, lambda).unwrap_or(0.0)
        }
    }

    /// `Φ(0⁺)`.
    #[must_use]
    pub fn phi_zero(&self) -> f64 {
        self.phi_zero
    }

    /// Regularising factor `exp(2πi(-aλ + β₂ρ))` at finite λ.
    #[must_use]
    pub fn counterterm(&self, lambda: f64) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * (-self.a * lambda + self.beta2 * lambda / (1.0 + lambda)))
    }
}

/// Sampling controls for the six edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeGrid {
    /// Uniform samples in the compactified coordinate before refinement.
    pub samples_per_edge: usize,
    pub max_bisections: usize,
}

impl Default for EdgeGrid {
    fn default() -> Self {
        Self { samples_per_edge: 401, max_bisections: 30 }
    }
}

/// Samples `det(t)` on `[t0, t1]`, bisecting wherever adjacent arguments
/// jump by more than [`MAX_JUMP`].
fn sample_edge(
    edge: usize,
    t0: f64,
    t1: f64,
    grid: &EdgeGrid,
    param: &dyn Fn(f64) -> f64,
    det: &dyn Fn(f64) -> Complex64,
) -> Result<Vec<(f64, f64, Complex64)>, HexagonError> {
    sample_lifted(edge, t0, t1, grid, &[], param, det, None)
}

/// [`sample_edge`] with extra initial nodes `seeds` and, optionally, a
/// continuous phase `lift` (in turns) of `det`. With a lift the jump test
/// uses the lifted difference, so a segment that turns through whole
/// multiples of 2π is still refined.
#[allow(clippy::too_many_arguments)]
fn sample_lifted(
    edge: usize,
    t0: f64,
    t1: f64,
    grid: &EdgeGrid,
    seeds: &[f64],
    param: &dyn Fn(f64) -> f64,
    det: &dyn Fn(f64) -> Complex64,
    lift: Option<&dyn Fn(f64) -> f64>,
) -> Result<Vec<(f64, f64, Complex64)>, HexagonError> {
    let n = grid.samples_per_edge.max(2);
    let (lo, hi) = (t0.min(t1), t0.max(t1));
    let mut nodes: Vec<f64> = (1..n - 1).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect();
    nodes.extend(seeds.iter().copied().filter(|&t| t > lo && t < hi));
    if t1 > t0 {
        nodes.sort_by(f64::total_cmp);
    } else {
        nodes.sort_by(|a, b| b.total_cmp(a));
    }
    nodes.dedup();
    nodes.push(t1);

    let point = |t: f64| {
        let p = param(t);
        (t, p, det(p), lift.map_or(f64::NAN, |f| f(p)))
    };
    let jump = |a: &(f64, f64, Complex64, f64), b: &(f64, f64, Complex64, f64)| {
        if lift.is_some() {
            2.0 * PI * (b.3 - a.3)
        } else {
            (b.2 * a.2.conj()).arg()
        }
    };
    let mut out = vec![point(t0)];
    for t in nodes {
        let mut stack = vec![(point(t), 0usize)];
        while let Some((right, depth)) = stack.pop() {
            let left = *out.last().expect("nonempty");
            let j = jump(&left, &right);
            if j.abs() <= MAX_JUMP {
                out.push(right);
                continue;
            }
            if depth >= grid.max_bisections {
                return Err(HexagonError::UnresolvedJump { edge, param: left.1, jump: j, depth });
            }
            let mid = point(0.5 * (left.0 + right.0));
            stack.push((right, depth + 1));
            stack.push((mid, depth + 1));
        }
    }
    Ok(out.into_iter().map(|(t, p, d, _)| (t, p, d)).collect())
}

/// `s = ½·atanh(t)`, infinite at `t = ±1`.
fn s_of(t: f64) -> f64 {
    if t >= 1.0 {
        f64::INFINITY
    } else if t <= -1.0 {
        f64::NEG_INFINITY
    } else {
        0.5 * t.atanh()
    }
}

/// `(2is-1)/(2is+1)`, equal to `1` at `s = ±∞`.
#[must_use]
pub fn gamma4_factor(s: f64) -> Complex64 {
    if !s.is_finite() {
        return Complex64::new(1.0, 0.0);
    }
    let z = Complex64::new(0.0, 2.0 * s);
    (z - 1.0) / (z + 1.0)
}

/// The six edges plus the checks tying them together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexagonSymbolSet {
    pub curves: Vec<EdgeCurve>,
    pub dim_ps: usize,
    /// `Φ(0⁺)`.
    pub phi_zero: f64,
    /// Regularised phase at `λ = ∞`, in turns.
    pub turns_at_infinity: f64,
    /// Largest deviation of the partial-wave block determinant of Γ₁ from
    /// `det S(1)` over the sampled `s`.
    pub block_det_deviation: f64,
    /// Mismatch at the end of Γⱼ and the start of Γⱼ₊₁, in turns.
    pub vertex_gaps: [f64; 6],
    pub max_modulus_error: f64,
}

/// `s` values at which the Γ₁ block determinant is formed.
pub const BLOCK_CHECK_S: [f64; 3] = [-1.3, 0.0, 2.1];

/// Product over partial waves of the 2×2 blocks
/// `I + ½(e^{2iδ_ℓ} - 1)[[1, φ(s)], [conj φ(s), 1]]`, each raised to `(ℓ+1)²`.
#[must_use]
pub fn gamma1_block_det(phase: &RegularizedPhase<'_>, s: f64) -> Complex64 {
    let phi = phi_edge(s);
    let mut det = Complex64::new(1.0, 0.0);
    for ell in 0..phase.table.ell_count() {
        let sl = Complex64::from_polar(1.0, 2.0 * phase.delta(ell, 1.0));
        let c = 0.5 * (sl - 1.0);
        let block = (1.0 + c) * (1.0 + c) - c * phi * c * phi.conj();
        det *= block.powu(((ell + 1) * (ell + 1)) as u32);
    }
    det
}

fn turn_gap(a: Complex64, b: Complex64) -> f64 {
    (a * b.conj()).arg().abs() / (2.0 * PI)
}

/// Samples the six edge determinants.
///
/// # Errors
/// An empty table or a phase jump that bisection cannot resolve.
pub fn edge_symbols(
    table: &PhaseShiftTable,
    constants: &LevinsonConstants,
    dim_ps: usize,
    grid: &EdgeGrid,
) -> Result<HexagonSymbolSet, HexagonError> {
    let phase = RegularizedPhase::new(table, constants)?;
    let one = Complex64::new(1.0, 0.0);
    let det1 = phase.det(1.0);
    let lmax = table.lambda_max().max(1.0);
    let lmin = table.lambda_min().min(1.0);
    // Γ₂ reaches Λ and Γ₆ reaches λ_min at t = 0.9.
    let c2 = 0.5 * lmax.ln() / 0.9f64.atanh();
    let c6 = -0.5 * lmin.ln() / 0.9f64.atanh();
    let ell_of = |c: f64| {
        move |t: f64| {
            if t >= 1.0 {
                f64::INFINITY
            } else {
                c * t.atanh()
            }
        }
    };
    let gamma4 = |s: f64| if dim_ps == 0 { one } else { gamma4_factor(s) };

    let xi_of = |t: f64| if t >= 1.0 { f64::INFINITY } else { t.atanh() };
    let l2 = ell_of(c2);
    let l6 = ell_of(c6);
    // Every table column is a node, so the piecewise-linear phase between
    // columns is resolved by bisection alone.
    let lambdas = table.lambdas();
    let seeds2: Vec<f64> = lambdas.iter().filter(|&&l| l > 1.0).map(|l| (0.5 * l.ln() / c2).tanh()).collect();
    let seeds6: Vec<f64> = lambdas.iter().filter(|&&l| l < 1.0).map(|l| (-0.5 * l.ln() / c6).tanh()).collect();
    let curves = vec![
        EdgeCurve::from_samples(1, EdgeParameter::S, Orientation::Increasing, sample_edge(1, -1.0, 1.0, grid, &s_of, &|_| det1)?),
        EdgeCurve::from_samples(
            2,
            EdgeParameter::Ell,
            Orientation::Increasing,
            sample_lifted(2, 0.0, 1.0, grid, &seeds2, &l2, &|l| phase.det((2.0 * l).exp()), Some(&|l| phase.turns((2.0 * l).exp())))?,
        ),
        EdgeCurve::from_samples(3, EdgeParameter::Xi, Orientation::Decreasing, sample_edge(3, 1.0, 0.0, grid, &xi_of, &|_| one)?),
        EdgeCurve::from_samples(4, EdgeParameter::S, Orientation::Decreasing, sample_edge(4, 1.0, -1.0, grid, &s_of, &gamma4)?),
        EdgeCurve::from_samples(5, EdgeParameter::Xi, Orientation::Increasing, sample_edge(5, 0.0, 1.0, grid, &xi_of, &|_| one)?),
        EdgeCurve::from_samples(
            6,
            EdgeParameter::Ell,
            Orientation::Decreasing,
            sample_lifted(6, 1.0, 0.0, grid, &seeds6, &l6, &|l| phase.det((-2.0 * l).exp()), Some(&|l| phase.turns((-2.0 * l).exp())))?,
        ),
    ];

    let counter = phase.counterterm(1.0);
    let block_det_deviation = BLOCK_CHECK_S.iter().map(|&s| (gamma1_block_det(&phase, s) * counter - det1).norm()).fold(0.0, f64::max);
    let mut vertex_gaps = [0.0; 6];
    for j in 0..6 {
        vertex_gaps[j] = turn_gap(curves[j].last(), curves[(j + 1) % 6].first());
    }
    Ok(HexagonSymbolSet {
        max_modulus_error: curves.iter().map(EdgeCurve::modulus_error).fold(0.0, f64::max),
        curves,
        dim_ps,
        phi_zero: phase.phi_zero(),
        turns_at_infinity: phase.turns(f64::INFINITY),
        block_det_deviation,
        vertex_gaps,
    })
}

/// Tolerance on `|winding - nearest integer|` for a certified report.
pub const ROUNDING_TOL: f64 = 0.05;
/// Tolerance on vertex gaps away from `λ = ∞`, in turns.
pub const VERTEX_TOL: f64 = 1e-6;
/// Tolerance on the gap at the `λ = ∞` vertex, in turns. This gap equals the
/// Levinson residual, so it carries the same tolerance.
pub const INFINITY_VERTEX_TOL: f64 = 0.05;
/// Agreement required between the unwrapped and direct Γ₂+Γ₆ windings.
pub const ROUTE_TOL: f64 = 1e-6;
/// Allowed deviation of the Γ₁ block determinant from `det S(1)`.
pub const BLOCK_TOL: f64 = 1e-9;

/// Windings and the index decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindingReport {
    pub per_edge: Vec<(usize, f64)>,
    pub total: f64,
    pub rounded_total: i64,
    #[serde(rename = "index_WS")]
    pub index_ws: i64,
    #[serde(rename = "index_WR")]
    pub index_wr: i64,
    #[serde(rename = "index_Wminus")]
    pub index_wminus: i64,
    #[serde(rename = "N_total")]
    pub n_total: usize,
    #[serde(rename = "dim_Ps")]
    pub dim_ps: usize,
    /// `Σ windings + N` before rounding.
    pub total_plus_n: f64,
    /// `|Wind(Γ₄) - dim_Ps|` before rounding.
    pub gamma4_error: f64,
    /// Wind(Γ₂) + Wind(Γ₆) by unwrapping the sampled edges.
    pub gamma26_unwrapped: f64,
    /// The same number from the regularised phase at `λ = ∞` and `λ = 0⁺`.
    pub gamma26_direct: f64,
    pub route_difference: f64,
    /// Sum of the windings of the scattering part Γ₁, Γ₂, Γ₆.
    pub ws_winding: f64,
    pub vertex_gaps: [f64; 6],
    pub block_det_deviation: f64,
    pub certified: bool,
    pub notes: Vec<String>,
}

/// Windings of the six edges and the identities among them.
///
/// # Errors
/// A curve with an unresolved phase jump.
pub fn index_report(set: &HexagonSymbolSet, n_total: usize) -> Result<WindingReport, HexagonError> {
    let mut per_edge = Vec::with_capacity(6);
    for c in &set.curves {
        per_edge.push((c.edge_id, winding(c)?));
    }
    let w = |id: usize| per_edge.iter().find(|(e, _)| *e == id).map_or(0.0, |p| p.1);
    let total = mirror_sum(&per_edge.iter().map(|p| p.1).collect::<Vec<_>>());
    let rounded_total = total.round() as i64;
    let index_wr = w(4).round() as i64;
    let dim = set.dim_ps as i64;
    let gamma26_unwrapped = w(2) + w(6);
    let gamma26_direct = set.turns_at_infinity - set.phi_zero;
    let route_difference = (gamma26_unwrapped - gamma26_direct).abs();
    let total_plus_n = total + n_total as f64;
    let gamma4_error = (w(4) - set.dim_ps as f64).abs();
    let ws_winding = w(1) + w(2) + w(6);

    let mut notes = Vec::new();
    if (total - rounded_total as f64).abs() >= ROUNDING_TOL {
        notes.push(format!("total winding {total:.6} is not within {ROUNDING_TOL} of an integer"));
    }
    if rounded_total != -(n_total as i64) {
        notes.push(format!("rounded total {rounded_total} differs from -N = {}", -(n_total as i64)));
    }
    if index_wr != dim {
        notes.push(format!("Wind(Γ₄) rounds to {index_wr}, dim_Ps is {dim}"));
    }
    if route_difference > ROUTE_TOL {
        notes.push(format!("Γ₂+Γ₆ unwrapped and direct windings differ by {route_difference:.3e}"));
    }
    for (j, g) in set.vertex_gaps.iter().enumerate() {
        let tol = if j == 1 { INFINITY_VERTEX_TOL } else { VERTEX_TOL };
        if *g > tol {
            notes.push(format!("vertex Γ{}→Γ{} gap {g:.3e} turns above {tol:.0e}", j + 1, (j + 1) % 6 + 1));
        }
    }
    if set.block_det_deviation > BLOCK_TOL {
        notes.push(format!("Γ₁ block determinant deviates by {:.3e}", set.block_det_deviation));
    }
    if set.max_modulus_error > 1e-8 {
        notes.push(format!("|det| deviates from 1 by {:.3e}", set.max_modulus_error));
    }
    Ok(WindingReport {
        per_edge,
        total,
        rounded_total,
        index_ws: rounded_total - dim,
        index_wr,
        index_wminus: rounded_total,
        n_total,
        dim_ps: set.dim_ps,
        total_plus_n,
        gamma4_error,
        gamma26_unwrapped,
        gamma26_direct,
        route_difference,
        ws_winding,
        vertex_gaps: set.vertex_gaps,
        block_det_deviation: set.block_det_deviation,
        certified: notes.is_empty(),
        notes,
    })
}

/// Everything a hexagon evaluation produces.
#[derive(Debug, Clone)]
pub struct HexagonRun {
    pub symbols: HexagonSymbolSet,
    pub report: WindingReport,
    pub levinson: LevinsonRun,
}

/// Phase shifts, bound states and resonance of `v`, then the six edges and
/// their windings.
///
/// # Errors
/// Propagates failures of every stage.
pub fn hexagon_run(v: &RadialPotential, opts: &LevinsonOptions, grid: &EdgeGrid) -> Result<HexagonRun, HexagonError> {
    let run = levinson_run(v, opts)?;
    let symbols = edge_symbols(&run.table, &run.constants, run.report.dim_ps, grid)?;
    let report = index_report(&symbols, run.report.n_total)?;
    Ok(HexagonRun { symbols, report, levinson: run })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_potential, Family};
    use proptest::prelude::*;

    #[test]
    fn varphi_values_and_limits() {
        assert!((varphi(0.0) - Complex64::new(0.5, -0.5)).norm() < 1e-15);
        assert_eq!(varphi(40.0), Complex64::new(1.0, 0.0));
        assert_eq!(varphi(-40.0), Complex64::new(0.0, 0.0));
        assert!((varphi(29.0) - 1.0).norm() < 1e-15);
        for x in [-2.0, -0.3, 0.0, 1.0, 5.0] {
            assert!(((2.0 * varphi(x) - 1.0).norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_edge_values_and_limits() {
        assert!((phi_edge(0.0) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(phi_edge(100.0), Complex64::new(-1.0, 0.0));
        assert_eq!(phi_edge(-100.0), Complex64::new(1.0, 0.0));
        for s in [-1.0, 0.0, 0.7] {
            assert!((1.0 - phi_edge(s) - 2.0 * varphi(s)).norm() < 1e-15);
        }
    }

    #[test]
    fn analytic_winding_is_one() {
        assert!((analytic_gamma4_winding().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gamma4_factor_at_zero_and_infinity() {
        assert!((gamma4_factor(0.0) + 1.0).norm() < 1e-15);
        assert_eq!(gamma4_factor(f64::INFINITY), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn winding_of_gamma4_and_constant_curves() {
        let grid = EdgeGrid::default();
        let c = EdgeCurve::from_samples(
            4,
            EdgeParameter::S,
            Orientation::Decreasing,
            sample_edge(4, 1.0, -1.0, &grid, &s_of, &gamma4_factor).unwrap(),
        );
        assert!((winding(&c).unwrap() - 1.0).abs() < 1e-12);
        let flat = EdgeCurve::from_samples(
            3,
            EdgeParameter::Xi,
            Orientation::Decreasing,
            sample_edge(3, 1.0, 0.0, &grid, &|t| t, &|_| Complex64::new(1.0, 0.0)).unwrap(),
        );
        assert_eq!(winding(&flat).unwrap(), 0.0);
    }

    #[test]
    fn refinement_resolves_fast_rotation() {
        // Initial spacing below half a turn, so nothing aliases.
        let grid = EdgeGrid { samples_per_edge: 20, max_bisections: 30 };
        let turns = 7.25;
        let s = sample_edge(1, 0.0, 1.0, &grid, &|t| t, &|t| Complex64::from_polar(1.0, 2.0 * PI * turns * t)).unwrap();
        let c = EdgeCurve::from_samples(1, EdgeParameter::S, Orientation::Increasing, s);
        assert!((winding(&c).unwrap() - turns).abs() < 1e-12);
        let stingy = EdgeGrid { samples_per_edge: 20, max_bisections: 0 };
        assert!(matches!(
            sample_edge(1, 0.0, 1.0, &stingy, &|t| t, &|t| Complex64::from_polar(1.0, 2.0 * PI * turns * t)),
            Err(HexagonError::UnresolvedJump { .. })
        ));
    }

    #[test]
    fn free_hexagon_is_trivial() {
        let v = make_potential(Family::SquareWell, 0.0, 1.0).unwrap();
        let opts = LevinsonOptions { points_per_decade: 20, ..LevinsonOptions::default() };
        let run = hexagon_run(&v, &opts, &EdgeGrid::default()).unwrap();
        for c in &run.symbols.curves {
            assert!(c.det_values.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
        }
        let r = &run.report;
        assert!(r.per_edge.iter().all(|p| p.1 == 0.0));
        assert_eq!((r.rounded_total, r.index_ws, r.index_wr, r.index_wminus), (0, 0, 0, 0));
        assert!(r.certified, "{:?}", r.notes);
    }

    #[test]
    fn square_well_index_decomposition() {
        let v = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        let run = hexagon_run(&v, &LevinsonOptions::default(), &EdgeGrid::default()).unwrap();
        let r = &run.report;
        assert!(r.certified, "{r:#?}");
        assert_eq!((r.rounded_total, r.index_ws, r.index_wr), (-1, -1, 0));
        assert!(r.total_plus_n.abs() < ROUNDING_TOL);
        assert!(r.route_difference < ROUTE_TOL);
        assert!(run.symbols.block_det_deviation < BLOCK_TOL);
        let csv = curves_to_csv(&run.symbols.curves);
        assert!(csv.starts_with("edge_id,param,re_det,im_det,unwrapped_arg\n"));
        assert_eq!(csv.lines().count(), 1 + run.symbols.curves.iter().map(|c| c.det_values.len()).sum::<usize>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reversal_negates_winding(turns in -5.0f64..5.0, n in 3usize..50, seed in 0.0f64..1.0) {
            let grid = EdgeGrid { samples_per_edge: n, max_bisections: 30 };
            let f = move |t: f64| Complex64::from_polar(1.0, 2.0 * PI * (turns * t + seed * (7.0 * t).sin()));
            let c = EdgeCurve::from_samples(2, EdgeParameter::Ell, Orientation::Increasing, sample_edge(2, 0.0, 1.0, &grid, &|t| t, &f).unwrap());
            let r = c.reversed();
            prop_assert_eq!(r.orientation, Orientation::Decreasing);
            prop_assert_eq!(winding(&r).unwrap(), -winding(&c).unwrap());
        }

        #[test]
        fn varphi_modulus_identity(x in -40.0f64..40.0) {
            prop_assert!(((2.0 * varphi(x) - 1.0).norm() - 1.0).abs() < 1e-14);
            prop_assert!((1.0 - phi_edge(x) - 2.0 * varphi(x)).norm() < 1e-14);
        }
    }
}
