//! Experiment configuration: a TOML file with an inline or referenced
//! potential spec, grids, tolerances and per-subcommand options.
//!
//! ```toml
//! out = "results"
//! ell_max = 8
//!
//! [potential]
//! family = "square_well"
//! coupling = 10.0
//! range = 1.0
//!
//! [lambda]
//! points_per_decade = 320
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hexagon::EdgeGrid;
use crate::potential::{make_potential, Family, PotentialError, RadialPotential};
use crate::radialode::{geometric_grid, RadialOptions, TableOptions};
use crate::smatrix::LevinsonOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("potential spec line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Potential description; `table_path` is required for `tabulated`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub family: Family,
    #[serde(default)]
    pub coupling: f64,
    #[serde(default = "one")]
    pub range: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self { family: Family::SquareWell, coupling: 0.0, range: 1.0, table_path: None }
    }
}

impl PotentialSpec {
    /// Parses the plain `key = value` format with keys `family`,
    /// `coupling`, `range` and `table_path`. `#` starts a comment; values
    /// may be quoted.
    ///
    /// # Errors
    /// Unknown, repeated or malformed keys, or a missing `family`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut family = None;
        let mut spec = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Spec { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let key = key.trim();
            let value = value.trim().trim_matches(|c| c == '"' || c == '\'');
            if seen.contains(&key) {
                return Err(err(format!("repeated key '{key}'")));
            }
            seen.push(key);
            let number = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            match key {
                "family" => family = Some(value.parse::<Family>().map_err(|e| err(e.to_string()))?),
                "coupling" => spec.coupling = number(value)?,
                "range" => spec.range = number(value)?,
                "table_path" => spec.table_path = Some(PathBuf::from(value)),
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        spec.family = family.ok_or(ConfigError::Spec { line: 0, message: "missing key 'family'".into() })?;
        Ok(spec)
    }

    /// Relative table paths resolve against `base`.
    ///
    /// # Errors
    /// Invalid parameters or an unreadable table.
    pub fn build(&self, base: &Path) -> Result<RadialPotential, ConfigError> {
        match (self.family, &self.table_path) {
            (Family::Tabulated, Some(p)) => Ok(RadialPotential::from_table_file(self.coupling, self.range, &base.join(p))?),
            (Family::Tabulated, None) => Err(ConfigError::Invalid("family tabulated needs table_path".into())),
            (_, Some(_)) => Err(ConfigError::Invalid(format!("table_path given for family {}", self.family))),
            (f, None) => Ok(make_potential(f, self.coupling, self.range)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaGrid {
    /// Defaults to `10⁻⁴·g`.
    pub min: Option<f64>,
    /// Defaults to `400·max(1, g)`.
    pub max: Option<f64>,
    pub points_per_decade: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        let d = LevinsonOptions::default();
        Self { min: None, max: None, points_per_decade: d.points_per_decade }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance of the radial integrator.
    pub rtol: f64,
    /// Admissible Levinson and winding residual.
    pub identity: f64,
    /// Admissible trace change under λ-step doubling.
    pub richardson: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = LevinsonOptions::default();
        Self { rtol: d.table.radial.rtol, identity: crate::verify::LEVINSON_TOL, richardson: d.richardson_tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    pub bracket: [f64; 2],
    pub points: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { bracket: [4.0, 7.0], points: 31 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HexagonOptions {
    pub samples_per_edge: usize,
    pub max_bisections: usize,
}

impl Default for HexagonOptions {
    fn default() -> Self {
        let g = EdgeGrid::default();
        Self { samples_per_edge: g.samples_per_edge, max_bisections: g.max_bisections }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub potential: Option<PotentialSpec>,
    /// Plain-text potential spec, relative to the config file.
    pub potential_file: Option<PathBuf>,
    pub lambda: LambdaGrid,
    /// Highest partial wave of the phase-shift table.
    pub ell_max: usize,
    /// Highest sector searched for bound states.
    pub bound_state_ell_max: usize,
    pub tol: Tolerances,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub scan: ScanOptions,
    pub hexagon: HexagonOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let d = LevinsonOptions::default();
        Self {
            potential: None,
            potential_file: None,
            lambda: LambdaGrid::default(),
            ell_max: d.ell_cap,
            bound_state_ell_max: d.bound_state_ell_cap,
            tol: Tolerances::default(),
            out: None,
            threads: None,
            scan: ScanOptions::default(),
            hexagon: HexagonOptions::default(),
        }
    }
}

impl ExperimentConfig {
    /// # Errors
    /// Unreadable files, TOML errors, unknown keys, or failed validation.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let io = |source| ConfigError::Io { path: path.display().to_string(), source };
        let text = fs::read_to_string(path).map_err(io)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Toml { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(file) = cfg.potential_file.take() {
            if cfg.potential.is_some() {
                return Err(ConfigError::Invalid("give either [potential] or potential_file, not both".into()));
            }
            let file = base.join(file);
            let text = fs::read_to_string(&file).map_err(|source| ConfigError::Io { path: file.display().to_string(), source })?;
            let mut spec = PotentialSpec::parse(&text)?;
            let spec_base = file.parent().unwrap_or(Path::new("."));
            spec.table_path = spec.table_path.map(|p| spec_base.join(p));
            cfg.potential = Some(spec);
        } else if let Some(spec) = cfg.potential.as_mut() {
            spec.table_path = spec.table_path.take().map(|p| base.join(p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// # Errors
    /// Nonpositive tolerances, a non-increasing λ range or scan bracket,
    /// or too few grid points.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, t) in [("tol.rtol", self.tol.rtol), ("tol.identity", self.tol.identity), ("tol.richardson", self.tol.richardson)] {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("{name} must be positive, got {t}"));
            }
        }
        if self.tol.rtol >= 1e-3 {
            return bad(format!("tol.rtol must be below 1e-3, got {}", self.tol.rtol));
        }
        for (name, v) in [("lambda.min", self.lambda.min), ("lambda.max", self.lambda.max)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        let g = self.potential.as_ref().map_or(0.0, |p| p.coupling.abs());
        let lmin = self.lambda.min.unwrap_or(if g > 0.0 { 1e-4 * g } else { 1e-4 });
        let lmax = self.lambda.max.unwrap_or(400.0 * g.max(1.0));
        if lmax <= lmin {
            return bad(format!("lambda grid must increase, got min {lmin} and max {lmax}"));
        }
        if self.lambda.points_per_decade < 2 {
            return bad("lambda.points_per_decade must be at least 2".into());
        }
        let [a, b] = self.scan.bracket;
        if !(a.is_finite() && b.is_finite() && b > a) {
            return bad(format!("scan.bracket must increase, got [{a}, {b}]"));
        }
        if self.scan.points < 2 {
            return bad("scan.points must be at least 2".into());
        }
        if self.hexagon.samples_per_edge < 2 {
            return bad("hexagon.samples_per_edge must be at least 2".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    /// The configured potential; the free well when none is given.
    ///
    /// # Errors
    /// Invalid potential parameters or table.
    pub fn potential(&self) -> Result<RadialPotential, ConfigError> {
        self.potential.clone().unwrap_or_default().build(Path::new("."))
    }

    #[must_use]
    pub fn radial_options(&self) -> RadialOptions {
        RadialOptions { rtol: self.tol.rtol, ..RadialOptions::default() }
    }

    #[must_use]
    pub fn levinson_options(&self) -> LevinsonOptions {
        let d = LevinsonOptions::default();
        LevinsonOptions {
            lambda_min: self.lambda.min,
            lambda_max: self.lambda.max,
            points_per_decade: self.lambda.points_per_decade,
            ell_cap: self.ell_max,
            bound_state_ell_cap: self.bound_state_ell_max,
            table: TableOptions { radial: self.radial_options(), ..d.table },
            richardson_tol: self.tol.richardson,
            ..d
        }
    }

    #[must_use]
    pub fn edge_grid(&self) -> EdgeGrid {
        EdgeGrid { samples_per_edge: self.hexagon.samples_per_edge, max_bisections: self.hexagon.max_bisections }
    }

    /// λ grid of the configured potential.
    ///
    /// # Errors
    /// Invalid potential parameters.
    pub fn lambda_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let v = self.potential()?;
        let o = self.levinson_options();
        let g = v.coupling.abs();
        let lmin = o.lambda_min.unwrap_or(if g > 0.0 { 1e-4 * g } else { 1e-4 });
        let lmax = o.lambda_max.unwrap_or(400.0 * g.max(1.0));
        Ok(geometric_grid(lmin, lmax, o.points_per_decade))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn plain_spec_parses() {
        let s = PotentialSpec::parse("# well\nfamily = square_well\ncoupling = 10\nrange = \"2.0\"\n").unwrap();
        assert_eq!(s, PotentialSpec { family: Family::SquareWell, coupling: 10.0, range: 2.0, table_path: None });
    }

    #[test]
    fn plain_spec_rejects_unknown_and_repeated_keys() {
        assert!(matches!(PotentialSpec::parse("family = gaussian\ndepth = 3"), Err(ConfigError::Spec { line: 2, .. })));
        assert!(matches!(PotentialSpec::parse("family = gaussian\nrange = 1\nrange = 2"), Err(ConfigError::Spec { line: 3, .. })));
        assert!(PotentialSpec::parse("coupling = 3").is_err());
        assert!(PotentialSpec::parse("family = lorentzian").is_err());
    }

    #[test]
    fn toml_rejects_unknown_keys() {
        assert!(toml::from_str::<ExperimentConfig>("elll_max = 3").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[tol]\nrtol = 1e-9\nfoo = 1").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[potential]\nfamily = \"gaussian\"\nwidth = 2").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::default();
        c.validate().unwrap();
        c.tol.rtol = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.lambda.min = Some(10.0);
        c.lambda.max = Some(1.0);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.scan.bracket = [7.0, 4.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn load_resolves_potential_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = fs::File::create(dir.path().join("well.txt")).unwrap();
        writeln!(spec, "family = gaussian\ncoupling = 4").unwrap();
        let cfg_path = dir.path().join("exp.toml");
        fs::write(&cfg_path, "potential_file = \"well.txt\"\nell_max = 5\n[lambda]\npoints_per_decade = 40\n").unwrap();
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        let v = cfg.potential().unwrap();
        assert_eq!(v.family, Family::Gaussian);
        assert_eq!(v.coupling, 4.0);
        assert_eq!(cfg.levinson_options().ell_cap, 5);
        let grid = cfg.lambda_grid().unwrap();
        assert!((grid[0] - 4e-4).abs() < 1e-15 && (grid.last().unwrap() - 1600.0).abs() < 1e-9);
    }
}
