//! Spherically symmetric potentials on ℝ⁴, their moment integrals and the
//! Levinson constants `c₁`, `β₂`.
//!
//! Sign convention: a positive coupling `g` is attractive, `V(r) = -g·p(r)`
//! with a nonnegative profile `p`. Every family is truncated to exactly zero
//! beyond `support_radius`, so the free region needed for phase-shift
//! matching exists for all of them.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate_panels, QuadratureError};

/// `Vol(S³)`.
pub const SPHERE_VOLUME: f64 = 2.0 * PI * PI;

/// Relative size of a Gaussian or exponential profile at the cutoff.
pub const CUTOFF_FRACTION: f64 = 1e-14;

/// Decay exponent certified for every (compactly supported) family.
pub const CERTIFIED_DECAY: f64 = 16.0;

const MOMENT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("coupling must be finite, got {0}")]
    InvalidCoupling(f64),
    #[error("tabulated profile: {0}")]
    InvalidTable(String),
    #[error("family {0} needs a table; use RadialPotential::tabulated")]
    TableRequired(Family),
    #[error("unknown potential family '{0}'")]
    UnknownFamily(String),
    #[error("cannot read table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("moment quadrature: {0}")]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SquareWell,
    Gaussian,
    Exponential,
    Tabulated,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::SquareWell => "square_well",
            Self::Gaussian => "gaussian",
            Self::Exponential => "exponential",
            Self::Tabulated => "tabulated",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = PotentialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "squarewell" | "square" | "well" => Ok(Self::SquareWell),
            "gaussian" | "gauss" => Ok(Self::Gaussian),
            "exponential" | "exp" => Ok(Self::Exponential),
            "tabulated" | "table" => Ok(Self::Tabulated),
            _ => Err(PotentialError::UnknownFamily(s.to_string())),
        }
    }
}

/// Piecewise cubic Hermite interpolant with Fritsch–Butland slopes; it
/// never overshoots the data, so it introduces no spurious oscillations.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    /// # Errors
    /// Fewer than two points, unequal lengths, non-finite values or a grid
    /// that is not strictly increasing.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, PotentialError> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(PotentialError::InvalidTable("need at least two (r, V) pairs".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(PotentialError::InvalidTable("non-finite entry".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PotentialError::InvalidTable("radial grid must be strictly increasing".into()));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut slope = vec![0.0; n];
        if n == 2 {
            slope[0] = delta[0];
            slope[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slope[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            slope[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slope[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, slope })
    }

    #[must_use]
    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Interpolated value; constant extrapolation outside the knots.
    #[must_use]
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.slope[i] + h01 * self.y[i + 1] + h11 * h * self.slope[i + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// A radial potential `V(r) = -g·p(r)` on ℝ⁴.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPotential {
    pub family: Family,
    pub coupling: f64,
    pub range: f64,
    pub support_radius: f64,
    /// Certified `ρ` with `|V(r)| ≤ C(1+r)^{-ρ}`.
    pub decay_exponent: f64,
    /// The constant `C` of the decay certificate.
    pub decay_constant: f64,
    table: Option<Arc<MonotoneCubic>>,
}

/// Instantiates an analytic family.
///
/// # Errors
/// Nonpositive range, non-finite coupling, or [`Family::Tabulated`].
pub fn make_potential(family: Family, coupling: f64, range: f64) -> Result<RadialPotential, PotentialError> {
    RadialPotential::new(family, coupling, range)
}

impl RadialPotential {
    /// # Errors
    /// See [`make_potential`].
    pub fn new(family: Family, coupling: f64, range: f64) -> Result<Self, PotentialError> {
        check_scalars(coupling, range)?;
        let support_radius = match family {
            Family::SquareWell => range,
            Family::Gaussian => range * (-CUTOFF_FRACTION.ln()).sqrt(),
            Family::Exponential => range * (-CUTOFF_FRACTION.ln()),
            Family::Tabulated => return Err(PotentialError::TableRequired(family)),
        };
        Ok(Self::assemble(family, coupling, range, support_radius, None, 1.0))
    }

    /// Tabulated potential from samples `(r_i, V_i)`; the stored profile is
    /// `-V_i`, so that `coupling = 1` reproduces the table.
    ///
    /// # Errors
    /// Negative radii, non-monotone grids or invalid scalars.
    pub fn tabulated(coupling: f64, range: f64, r: Vec<f64>, v: Vec<f64>) -> Result<Self, PotentialError> {
        check_scalars(coupling, range)?;
        if r.iter().any(|&x| x < 0.0) {
            return Err(PotentialError::InvalidTable("negative radius".into()));
        }
        let profile: Vec<f64> = v.iter().map(|x| -x).collect();
        let spline = MonotoneCubic::new(r, profile)?;
        let support = *spline.knots().last().expect("at least two knots");
        if support <= 0.0 {
            return Err(PotentialError::InvalidTable("table must extend to positive radius".into()));
        }
        let max_profile = spline.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self::assemble(Family::Tabulated, coupling, range, support, Some(Arc::new(spline)), max_profile))
    }

    /// Reads a two-column CSV `(r, V(r))` with a header row.
    ///
    /// # Errors
    /// I/O failures, malformed rows and the checks of [`Self::tabulated`].
    pub fn from_table_file(coupling: f64, range: f64, path: &Path) -> Result<Self, PotentialError> {
        let io_err = |source| PotentialError::Io { path: path.display().to_string(), source };
        let mut reader =
            csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(err) => io_err(err),
                other => PotentialError::InvalidTable(format!("{other:?}")),
            })?;
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| PotentialError::InvalidTable(e.to_string()))?;
            if record.len() != 2 {
                return Err(PotentialError::InvalidTable(format!("row {} has {} columns", line + 2, record.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|_| PotentialError::InvalidTable(format!("row {}: bad number '{s}'", line + 2)));
            r.push(parse(&record[0])?);
            v.push(parse(&record[1])?);
        }
        Self::tabulated(coupling, range, r, v)
    }

    fn assemble(
        family: Family,
        coupling: f64,
        range: f64,
        support_radius: f64,
        table: Option<Arc<MonotoneCubic>>,
        max_profile: f64,
    ) -> Self {
        let decay_constant = coupling.abs() * max_profile * (1.0 + support_radius).powf(CERTIFIED_DECAY);
        Self { family, coupling, range, support_radius, decay_exponent: CERTIFIED_DECAY, decay_constant, table }
    }

    /// Same shape with a different coupling.
    #[must_use]
    pub fn with_coupling(&self, coupling: f64) -> Self {
        let mut out = self.clone();
        out.coupling = coupling;
        let max_profile = self.max_profile();
        out.decay_constant = coupling.abs() * max_profile * (1.0 + self.support_radius).powf(CERTIFIED_DECAY);
        out
    }

    /// The shape function `p(r)`, zero beyond the support.
    #[must_use]
    pub fn profile(&self, r: f64) -> f64 {
        if r >= self.support_radius {
            return 0.0;
        }
        let x = r / self.range;
        match self.family {
            Family::SquareWell => 1.0,
            Family::Gaussian => (-x * x).exp(),
            Family::Exponential => (-x).exp(),
            Family::Tabulated => self.table.as_ref().map_or(0.0, |t| t.eval(r)),
        }
    }

    /// `V(r)`.
    #[must_use]
    pub fn value(&self, r: f64) -> f64 {
        let p = self.profile(r);
        if p == 0.0 {
            0.0
        } else {
            -self.coupling * p
        }
    }

    #[must_use]
    pub fn is_zero(&self) -> bool {
        self.coupling == 0.0
    }

    /// `sup |p|`.
    #[must_use]
    pub fn max_profile(&self) -> f64 {
        match &self.table {
            Some(t) => t.values().iter().fold(0.0f64, |m, v| m.max(v.abs())),
            None => 1.0,
        }
    }

    /// A lower bound for `V`, used for step-size and WKB bounds.
    #[must_use]
    pub fn min_value(&self) -> f64 {
        -(self.coupling.abs() * self.max_profile())
    }

    /// Radii in `(0, support]` where `V` or its derivatives jump.
    #[must_use]
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = match (&self.family, &self.table) {
            (Family::Tabulated, Some(t)) => t.knots().iter().copied().filter(|&x| x > 0.0).collect(),
            _ => Vec::new(),
        };
        pts.push(self.support_radius);
        pts.dedup();
        pts
    }

    /// `sup_r r²|V(r)|`, the quantity the centrifugal barrier `ℓ(ℓ+2)` must
    /// dominate for a sector to be certified empty.
    #[must_use]
    pub fn max_r2_abs_v(&self) -> f64 {
        let n = 20_000;
        let s = self.support_radius;
        let mut best = 0.0f64;
        for i in 1..=n {
            let r = s * i as f64 / n as f64;
            let r = if i == n { s * (1.0 - 1e-15) } else { r };
            best = best.max(r * r * self.value(r).abs());
        }
        for &b in &self.breakpoints() {
            let r = b * (1.0 - 1e-15);
            best = best.max(r * r * self.value(r).abs());
        }
        // Margin for the sampling gap of smooth profiles.
        best * (1.0 + 1e-6)
    }
}

fn check_scalars(coupling: f64, range: f64) -> Result<(), PotentialError> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(PotentialError::InvalidRange(range));
    }
    if !coupling.is_finite() {
        return Err(PotentialError::InvalidCoupling(coupling));
    }
    Ok(())
}

/// `∫_{ℝ⁴} V dx` and `∫_{ℝ⁴} V² dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct MomentIntegrals {
    pub I1: f64,
    pub I2: f64,
    /// Quadrature error estimates for `(I1, I2)`.
    pub error_estimates: (f64, f64),
}

/// Radially reduced moments `2π² ∫₀^∞ Vᵏ r³ dr` for `k = 1, 2`.
///
/// # Errors
/// Quadrature non-convergence with the achieved error estimate.
pub fn moment_integrals(v: &RadialPotential) -> Result<MomentIntegrals, PotentialError> {
    if v.is_zero() {
        return Ok(MomentIntegrals { I1: 0.0, I2: 0.0, error_estimates: (0.0, 0.0) });
    }
    let mut panels = vec![0.0];
    panels.extend(v.breakpoints());
    let q1 = integrate_panels(|r| v.value(r) * r.powi(3), &panels, MOMENT_REL_TOL, 0.0)?;
    let q2 = integrate_panels(|r| v.value(r).powi(2) * r.powi(3), &panels, MOMENT_REL_TOL, 0.0)?;
    Ok(MomentIntegrals {
        I1: SPHERE_VOLUME * q1.value,
        I2: SPHERE_VOLUME * q2.value,
        error_estimates: (SPHERE_VOLUME * q1.error, SPHERE_VOLUME * q2.error),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevinsonConstants {
    pub c1: Complex64,
    pub beta2: f64,
}

/// `c₁ = -(2πi)·Vol(S³)/(2(2π)⁴)·I₁ = -(i/8π)·I₁` and
/// `β₂ = -Vol(S³)/(4(2π)⁴)·I₂ = -I₂/(32π²)`.
#[must_use]
pub fn levinson_constants(m: &MomentIntegrals) -> LevinsonConstants {
    let two_pi4 = (2.0 * PI).powi(4);
    let c1 = Complex64::new(0.0, -2.0 * PI) * (SPHERE_VOLUME / (2.0 * two_pi4)) * m.I1;
    let beta2 = -SPHERE_VOLUME / (4.0 * two_pi4) * m.I2;
    LevinsonConstants { c1, beta2 }
}

/// Parameter echo of a potential for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialEcho {
    pub family: Family,
    pub coupling: f64,
    pub range: f64,
    pub support_radius: f64,
    pub decay_exponent: f64,
    pub decay_constant: f64,
    pub table_points: Option<usize>,
}

impl From<&RadialPotential> for PotentialEcho {
    fn from(v: &RadialPotential) -> Self {
        Self {
            family: v.family,
            coupling: v.coupling,
            range: v.range,
            support_radius: v.support_radius,
            decay_exponent: v.decay_exponent,
            decay_constant: v.decay_constant,
            table_points: v.table.as_ref().map(|t| t.knots().len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_well_values() {
        let v = make_potential(Family::SquareWell, 5.0, 1.0).unwrap();
        assert_eq!(v.value(0.5), -5.0);
        assert_eq!(v.value(1.5), 0.0);
        let zero = make_potential(Family::SquareWell, 0.0, 1.0).unwrap();
        assert!(zero.is_zero());
        assert_eq!(zero.value(0.3), 0.0);
    }

    #[test]
    fn gaussian_value() {
        let v = make_potential(Family::Gaussian, 3.0, 1.0).unwrap();
        let expected = -3.0 * (-1.0f64).exp();
        assert!((v.value(1.0) - expected).abs() < 1e-15);
        assert!((v.value(1.0) + 1.103_638_323_514_327).abs() < 1e-12);
        assert!(v.profile(v.support_radius * 0.999_999) < 1.01 * CUTOFF_FRACTION);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(make_potential(Family::SquareWell, 1.0, 0.0), Err(PotentialError::InvalidRange(_))));
        assert!(make_potential(Family::SquareWell, 1.0, -1.0).is_err());
        assert!(make_potential(Family::Tabulated, 1.0, 1.0).is_err());
        assert!(RadialPotential::tabulated(1.0, 1.0, vec![-0.1, 0.5], vec![-1.0, 0.0]).is_err());
        assert!(RadialPotential::tabulated(1.0, 1.0, vec![0.0, 0.5, 0.4], vec![-1.0, -0.5, 0.0]).is_err());
    }

    #[test]
    fn closed_form_moments() {
        for g in [1.0, 8.0, 10.0] {
            let v = make_potential(Family::SquareWell, g, 1.0).unwrap();
            let m = moment_integrals(&v).unwrap();
            let i1 = -g * PI * PI / 2.0;
            let i2 = g * g * PI * PI / 2.0;
            assert!((m.I1 - i1).abs() <= 1e-10 * i1.abs());
            assert!((m.I2 - i2).abs() <= 1e-10 * i2);
        }
        let v = make_potential(Family::Gaussian, 2.0, 1.0).unwrap();
        let m = moment_integrals(&v).unwrap();
        assert!((m.I1 + 2.0 * PI * PI).abs() <= 1e-10 * 2.0 * PI * PI);
        // ∫ r³ e^{-2r²} dr = 1/8
        assert!((m.I2 - 4.0 * SPHERE_VOLUME / 8.0).abs() <= 1e-10 * m.I2);
        let v = make_potential(Family::Exponential, 1.5, 0.5).unwrap();
        let m = moment_integrals(&v).unwrap();
        // ∫ r³ e^{-r/R} dr = 6R⁴
        let i1 = -1.5 * SPHERE_VOLUME * 6.0 * 0.5f64.powi(4);
        assert!((m.I1 - i1).abs() <= 1e-10 * i1.abs());
    }

    #[test]
    fn constants_of_square_well_eight() {
        let v = make_potential(Family::SquareWell, 8.0, 1.0).unwrap();
        let c = levinson_constants(&moment_integrals(&v).unwrap());
        // Independent reduction: c1 = -(i/8π) I1 with I1 = -4π².
        assert!(c.c1.re.abs() < 1e-15);
        assert!((c.c1.im - PI / 2.0).abs() < 1e-12);
        assert!((c.beta2 + 1.0).abs() < 1e-12);
        let zero = levinson_constants(&MomentIntegrals { I1: 0.0, I2: 0.0, error_estimates: (0.0, 0.0) });
        assert_eq!(zero.c1, Complex64::new(0.0, 0.0));
        assert_eq!(zero.beta2, 0.0);
    }

    #[test]
    fn closed_form_scalings_agree() {
        let m = MomentIntegrals { I1: -3.7, I2: 2.9, error_estimates: (0.0, 0.0) };
        let c = levinson_constants(&m);
        assert!((c.c1.im - 3.7 / (8.0 * PI)).abs() < 1e-15);
        assert!((c.beta2 + 2.9 / (32.0 * PI * PI)).abs() < 1e-15);
    }

    /// Radial reduction against a plain 4D Monte-Carlo estimate of ∫V dx.
    #[test]
    fn monte_carlo_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for v in [make_potential(Family::SquareWell, 3.0, 1.0).unwrap(), make_potential(Family::Gaussian, 2.0, 0.8).unwrap()] {
            let half = v.support_radius.min(4.0 * v.range);
            let cube = (2.0 * half).powi(4);
            let n = 400_000;
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for _ in 0..n {
                let x: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-half..half));
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                let f = v.value(r) * cube;
                sum += f;
                sum2 += f * f;
            }
            let mean = sum / n as f64;
            let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
            let exact = moment_integrals(&v).unwrap().I1;
            // The Gaussian cube truncation removes far less than one standard error.
            assert!((mean - exact).abs() < 3.0 * se, "{:?}: MC {mean} ± {se} vs {exact}", v.family);
        }
    }

    #[test]
    fn monotone_cubic_does_not_overshoot() {
        let x = vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
        let y = vec![1.0, 1.0, 0.9, 0.2, 0.0, 0.0];
        let s = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi) - yi).abs() < 1e-15);
        }
        let mut prev = s.eval(0.0);
        for i in 1..=3000 {
            let t = 3.0 * i as f64 / 3000.0;
            let v = s.eval(t);
            assert!(v <= prev + 1e-15 && (-1e-15..=1.0 + 1e-15).contains(&v), "t={t} v={v}");
            prev = v;
        }
    }

    #[test]
    fn tabulated_reproduces_table_and_reads_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("well.csv");
        std::fs::write(&path, "r,V\n0.0,-4.0\n0.5,-3.0\n1.0,-1.0\n1.5,0.0\n").unwrap();
        let v = RadialPotential::from_table_file(1.0, 1.0, &path).unwrap();
        assert!((v.value(0.5) + 3.0).abs() < 1e-15);
        assert_eq!(v.value(1.6), 0.0);
        assert_eq!(v.support_radius, 1.5);
        assert!(v.breakpoints().contains(&1.0));
        let doubled = RadialPotential::from_table_file(2.0, 1.0, &path).unwrap();
        assert!((doubled.value(0.5) + 6.0).abs() < 1e-14);
        std::fs::write(&path, "r,V\n0.0,-4.0\n-0.5,-3.0\n").unwrap();
        assert!(RadialPotential::from_table_file(1.0, 1.0, &path).is_err());
    }

    #[test]
    fn decay_certificate_holds() {
        for fam in [Family::SquareWell, Family::Gaussian, Family::Exponential] {
            let v = make_potential(fam, 7.0, 1.3).unwrap();
            assert!(v.decay_exponent > 12.0);
            for i in 0..5000 {
                let r = 50.0 * i as f64 / 5000.0;
                assert!(v.value(r).abs() <= v.decay_constant * (1.0 + r).powf(-v.decay_exponent) * (1.0 + 1e-12));
            }
        }
    }

    proptest! {
        #[test]
        fn moments_scale_with_coupling(alpha in prop::sample::select(vec![-2.0, 0.5, 3.0]), g in 0.5f64..20.0, r in 0.3f64..3.0) {
            for fam in [Family::SquareWell, Family::Gaussian] {
                let v = make_potential(fam, g, r).unwrap();
                let m = moment_integrals(&v).unwrap();
                let ms = moment_integrals(&v.with_coupling(alpha * g)).unwrap();
                prop_assert!((ms.I1 - alpha * m.I1).abs() <= 1e-10 * (alpha * m.I1).abs());
                prop_assert!((ms.I2 - alpha * alpha * m.I2).abs() <= 1e-10 * alpha * alpha * m.I2);
            }
        }

        #[test]
        fn c1_imaginary_beta2_nonpositive(g in -30.0f64..30.0, r in 0.2f64..4.0, fam in prop::sample::select(vec![Family::SquareWell, Family::Gaussian, Family::Exponential])) {
            let v = make_potential(fam, g, r).unwrap();
            let m = moment_integrals(&v).unwrap();
            prop_assert!(m.I2 >= 0.0);
            let c = levinson_constants(&m);
            prop_assert_eq!(c.c1.re, 0.0);
            prop_assert!(c.beta2 <= 0.0);
        }
    }
}
