//! Bound-state counting with degeneracies, and a finite-difference
//! eigensolver used as an independent oracle for the node counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::{PotentialEcho, RadialPotential};
use crate::radialode::{bound_states_from, integrate_zero_energy, RadialError, ZeroEnergySolution, GROWTH_RATIO_TOL};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error("grid does not resolve the well: {0}")]
    Grid(String),
    #[error("eigenvalues depend on the box size (ell = {ell}): {detail}")]
    BoxSensitivity { ell: usize, detail: String },
}

/// Count of one angular sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorCount {
    pub ell: usize,
    pub count: usize,
    pub degeneracy: usize,
    /// A decaying zero-energy solution: a zero eigenvalue for `ℓ ≥ 1`.
    pub zero_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundStateReport {
    pub potential: PotentialEcho,
    pub per_ell: Vec<SectorCount>,
    pub ell_max_used: usize,
    /// Why the sectors beyond `ell_max_used` are empty, if that is proven.
    pub truncation_certificate: Option<String>,
    #[serde(rename = "N_total")]
    pub n_total: usize,
    /// Zero eigenvalues (ℓ ≥ 1 threshold sectors), counted with degeneracy
    /// and kept out of `N_total`.
    pub zero_modes: usize,
    /// Whether the counts are nonincreasing in ℓ.
    pub monotone_in_ell: bool,
    pub warnings: Vec<String>,
}

impl BoundStateReport {
    /// Counts are certified when the ℓ tail is proven empty and no sector
    /// sits at a zero-energy threshold.
    #[must_use]
    pub fn certified(&self) -> bool {
        self.truncation_certificate.is_some() && self.zero_modes == 0
    }

    #[must_use]
    pub fn count(&self, ell: usize) -> usize {
        self.per_ell.iter().find(|s| s.ell == ell).map_or(0, |s| s.count)
    }
}

/// Counts `N = Σ (ℓ+1)² n_ℓ`, stopping at the first empty sector whose
/// centrifugal barrier dominates the well, `ℓ(ℓ+2) ≥ sup r²|V|`: then
/// `ℓ(ℓ+2)/r² ≥ |V|` everywhere, the sector operator is nonnegative, and
/// so is every higher one.
///
/// # Errors
/// Propagates radial integration failures.
pub fn total_bound_states(v: &RadialPotential, ell_cap: usize) -> Result<BoundStateReport, SpectralError> {
    let barrier = v.max_r2_abs_v();
    let mut per_ell = Vec::new();
    let mut certificate = None;
    let mut warnings = Vec::new();
    let mut zero_modes = 0;
    for ell in 0..=ell_cap {
        let z: ZeroEnergySolution = integrate_zero_energy(v, ell)?;
        let count = bound_states_from(&z);
        let zero_mode = ell >= 1 && z.growth_ratio() < GROWTH_RATIO_TOL;
        let degeneracy = (ell + 1) * (ell + 1);
        if zero_mode {
            zero_modes += degeneracy;
            warnings.push(format!("ell = {ell}: zero-eigenvalue threshold — identity not certified"));
        }
        per_ell.push(SectorCount { ell, count, degeneracy, zero_mode });
        let l = ell as f64;
        if count == 0 && l * (l + 2.0) >= barrier {
            certificate = Some(format!(
                "ell = {ell}: zero-energy solution nodeless and ell(ell+2) = {} >= sup r^2|V| = {barrier:.6e}",
                ell * (ell + 2)
            ));
            break;
        }
    }
    if certificate.is_none() {
        warnings.push(format!("ell cap {ell_cap} reached without a truncation certificate"));
    }
    let n_total = per_ell.iter().map(|s| s.count * s.degeneracy).sum();
    let monotone_in_ell = per_ell.windows(2).all(|w| w[1].count <= w[0].count);
    Ok(BoundStateReport {
        potential: PotentialEcho::from(v),
        ell_max_used: per_ell.last().map_or(0, |s| s.ell),
        per_ell,
        truncation_certificate: certificate,
        n_total,
        zero_modes,
        monotone_in_ell,
        warnings,
    })
}

/// Discretisation of the finite-difference oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_range: f64,
    /// Box radius; `None` picks `max(20·range, support + 10·range)`.
    pub r_max: Option<f64>,
    /// Relative eigenvalue change tolerated when the box is doubled.
    pub box_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points_per_range: 1000.0, r_max: None, box_tol: 1e-6 }
    }
}

impl GridSpec {
    #[must_use]
    pub fn box_radius(&self, v: &RadialPotential) -> f64 {
        self.r_max.unwrap_or_else(|| (20.0 * v.range).max(v.support_radius + 10.0 * v.range))
    }
}

/// Symmetric tridiagonal matrix `-d²/dr² + W(r)` on a uniform grid with
/// Dirichlet ends.
struct Tridiagonal {
    diag: Vec<f64>,
    off2: f64,
}

impl Tridiagonal {
    fn liouville(v: &RadialPotential, ell: usize, h: f64, n: usize) -> Self {
        let cent = ((ell + 1) * (ell + 1)) as f64 - 0.25;
        let diag = (1..=n)
            .map(|i| {
                let r = i as f64 * h;
                // Cell average: a jump of V at a node contributes half of each side.
                let vr = 0.5 * (v.value(r - 0.25 * h) + v.value(r + 0.25 * h));
                2.0 / (h * h) + cent / (r * r) + vr
            })
            .collect();
        Self { diag, off2: 1.0 / (h * h * h * h) }
    }

    /// Number of eigenvalues below `sigma` (Sturm sequence of the LDLᵀ pivots).
    fn count_below(&self, sigma: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for (i, &d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - sigma } else { d - sigma - self.off2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + sigma.abs());
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn eigenvalues_below(&self, lower: f64, sigma: f64) -> Vec<f64> {
        let n = self.count_below(sigma);
        (0..n)
            .map(|k| {
                let (mut lo, mut hi) = (lower, sigma);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.count_below(mid) > k {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }
}

fn fd_eigenvalues_in_box(v: &RadialPotential, ell: usize, points_per_range: f64, r_max: f64) -> Vec<f64> {
    let h = v.range / points_per_range;
    let n = (r_max / h).round() as usize - 1;
    let t = Tridiagonal::liouville(v, ell, h, n);
    let edge = 1e-8 * v.coupling.abs();
    t.eigenvalues_below(v.min_value() - 1.0, -edge)
}

/// Negative eigenvalues (below `-10⁻⁸·|g|`) of sector `ell`, ascending,
/// from the Liouville form `-u'' + (((ℓ+1)² - 1/4)/r² + V)u` discretised
/// by second-order differences. Levels from steps `h` and `h/2` are
/// Richardson-extrapolated, `(4E(h/2) - E(h))/3`; the box is doubled once
/// to confirm that the reported levels are not box artifacts.
///
/// # Errors
/// Under-resolved grids, boxes shorter than ten ranges, or box sensitivity.
pub fn fd_eigensolver(v: &RadialPotential, ell: usize, grid: &GridSpec) -> Result<Vec<f64>, SpectralError> {
    if grid.points_per_range < 200.0 {
        return Err(SpectralError::Grid(format!("{} points per range < 200", grid.points_per_range)));
    }
    let r_max = grid.box_radius(v);
    if r_max < 10.0 * v.range || r_max <= v.support_radius {
        return Err(SpectralError::Grid(format!("box radius {r_max} shorter than ten ranges or the support")));
    }
    if v.is_zero() {
        return Ok(Vec::new());
    }
    let coarse = fd_eigenvalues_in_box(v, ell, grid.points_per_range, r_max);
    let fine = fd_eigenvalues_in_box(v, ell, 2.0 * grid.points_per_range, r_max);
    let wide = fd_eigenvalues_in_box(v, ell, grid.points_per_range, 2.0 * r_max);
    if coarse.len() != wide.len() || coarse.len() != fine.len() {
        return Err(SpectralError::BoxSensitivity {
            ell,
            detail: format!("{} levels in the box, {} at half step, {} in the doubled box", coarse.len(), fine.len(), wide.len()),
        });
    }
    for (a, b) in coarse.iter().zip(&wide) {
        if (a - b).abs() > grid.box_tol * a.abs() {
            return Err(SpectralError::BoxSensitivity { ell, detail: format!("level {a} moves to {b}") });
        }
    }
    Ok(coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
}

/// CSV rows `(ell, index, energy)`.
#[must_use]
pub fn eigenvalues_csv(levels: &[(usize, Vec<f64>)]) -> String {
    let mut out = String::from("ell,index,energy\n");
    for (ell, values) in levels {
        for (i, e) in values.iter().enumerate() {
            out.push_str(&format!("{ell},{i},{e:.17e}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_pair;
    use crate::potential::{make_potential, Family};
    use crate::radialode::count_bound_states_ell;

    /// Square-well levels from interior `J_ν(qr)` matched to exterior
    /// `K_ν(κr)`: `q J_ν'(q)/J_ν(q) = κ K_ν'(κ)/K_ν(κ)`, with the modified
    /// Bessel ratio from its continued fraction.
    fn square_well_levels(g: f64, ell: usize) -> Vec<f64> {
        let nu = (ell + 1) as u32;
        let k_ratio = |x: f64| {
            // K_n(x) = ∫₀^∞ exp(-x cosh t) cosh(nt) dt
            let k = |n: f64| {
                let f = |t: f64| (-x * t.cosh()).exp() * (n * t).cosh();
                let mut s = 0.0;
                let h = 0.002;
                let mut t = 0.0;
                while t < 40.0 {
                    s += h / 6.0 * (f(t) + 4.0 * f(t + 0.5 * h) + f(t + h));
                    t += h;
                }
                s
            };
            let n = f64::from(nu);
            let kn = k(n);
            let knm1 = k(n - 1.0);
            // K_ν' = -K_{ν-1} - (ν/x) K_ν
            (-knm1 - n / x * kn) / kn * x
        };
        let mismatch = |e: f64| {
            let q = (g + e).sqrt();
            let kappa = (-e).sqrt();
            let b = bessel_pair(nu, q).unwrap();
            q * b.jp - k_ratio(kappa) * b.j
        };
        let n = 400;
        let mut out = Vec::new();
        let es: Vec<f64> = (1..n).map(|i| -g + g * i as f64 / n as f64).collect();
        for w in es.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            if mismatch(a) * mismatch(b) < 0.0 {
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if mismatch(a) * mismatch(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
        }
        out
    }

    #[test]
    fn free_operator_has_no_levels() {
        let v = make_potential(Family::SquareWell, 0.0, 1.0).unwrap();
        assert!(fd_eigensolver(&v, 0, &GridSpec::default()).unwrap().is_empty());
        let r = total_bound_states(&v, 10).unwrap();
        assert_eq!(r.n_total, 0);
        assert!(r.certified());
    }

    #[test]
    fn square_well_totals() {
        let cases = [(10.0, 1usize), (16.0, 5), (40.0, 15), (2.0, 0)];
        for (g, n) in cases {
            let v = make_potential(Family::SquareWell, g, 1.0).unwrap();
            let r = total_bound_states(&v, 20).unwrap();
            assert_eq!(r.n_total, n, "g = {g}: {r:?}");
            assert!(r.certified() && r.monotone_in_ell);
            let sum: usize = r.per_ell.iter().map(|s| s.count * s.degeneracy).sum();
            assert_eq!(sum, r.n_total);
        }
    }

    #[test]
    fn fd_counts_match_nodes() {
        let pots = [
            make_potential(Family::SquareWell, 10.0, 1.0).unwrap(),
            make_potential(Family::SquareWell, 40.0, 1.0).unwrap(),
            make_potential(Family::Gaussian, 12.0, 1.0).unwrap(),
        ];
        for v in &pots {
            for ell in 0..=3 {
                let fd = fd_eigensolver(v, ell, &GridSpec::default()).unwrap();
                assert_eq!(fd.len(), count_bound_states_ell(v, ell).unwrap(), "{:?} ell={ell}", v.family);
            }
        }
    }

    #[test]
    fn fd_levels_match_transcendental_equation() {
        for (g, ell) in [(10.0, 0usize), (40.0, 0), (16.0, 1)] {
            let v = make_potential(Family::SquareWell, g, 1.0).unwrap();
            let fd = fd_eigensolver(&v, ell, &GridSpec::default()).unwrap();
            let exact = square_well_levels(g, ell);
            assert_eq!(fd.len(), exact.len());
            for (a, b) in fd.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-6 * b.abs(), "g={g} ell={ell}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn fd_levels_stable_under_grid_halving() {
        for (g, ell) in [(10.0, 0usize), (40.0, 0), (16.0, 1)] {
            let v = make_potential(Family::SquareWell, g, 1.0).unwrap();
            let a = fd_eigensolver(&v, ell, &GridSpec::default()).unwrap();
            let b = fd_eigensolver(&v, ell, &GridSpec { points_per_range: 2000.0, ..GridSpec::default() }).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-6 * y.abs(), "g={g}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn fd_preconditions() {
        let v = make_potential(Family::SquareWell, 10.0, 1.0).unwrap();
        let coarse = GridSpec { points_per_range: 100.0, ..GridSpec::default() };
        assert!(matches!(fd_eigensolver(&v, 0, &coarse), Err(SpectralError::Grid(_))));
        let short = GridSpec { r_max: Some(5.0), ..GridSpec::default() };
        assert!(matches!(fd_eigensolver(&v, 0, &short), Err(SpectralError::Grid(_))));
    }

    #[test]
    fn uncertified_when_cap_is_too_low() {
        let v = make_potential(Family::SquareWell, 40.0, 1.0).unwrap();
        let r = total_bound_states(&v, 1).unwrap();
        assert!(!r.certified());
        assert!(!r.warnings.is_empty());
    }
}
