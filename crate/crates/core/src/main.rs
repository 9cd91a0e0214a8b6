use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use levinson4d::config::{ConfigError, ExperimentConfig};
use levinson4d::hexagon::{curves_to_csv, hexagon_run, ROUNDING_TOL};
use levinson4d::potential::PotentialEcho;
use levinson4d::radialode::{count_bound_states_ell, phase_shift_table_with, PhaseShiftTable};
use levinson4d::resonance::resonance_scan;
use levinson4d::smatrix::levinson_run;
use levinson4d::spectral::{fd_eigensolver, total_bound_states, GridSpec};
use levinson4d::verify::{self, exit_code, run_case, Case, Check, CheckKind, Suite};

const SCHEMA_VERSION: &str = "1.0";
const EXIT_IDENTITY: u8 = 1;
const EXIT_NUMERICS: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "levinson4d", version, about = "Levinson index identity lab for radial potentials in four dimensions")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "LEVINSON4D_OUT")]
    out: Option<PathBuf>,
    /// Highest partial wave of the phase-shift table.
    #[arg(long, global = true)]
    ell_max: Option<usize>,
    /// Upper end of the λ grid.
    #[arg(long, global = true)]
    lambda_max: Option<f64>,
    /// Admissible identity residual.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bound-state counts per ℓ with finite-difference levels.
    BoundStates,
    /// Phase-shift table as CSV.
    PhaseShifts,
    /// Sweep of the zero-energy growth coefficient over a coupling bracket.
    ResonanceScan,
    /// Levinson identity report and the trace curve.
    Levinson,
    /// Hexagon edge symbols and the winding report.
    Hexagon,
    /// Acceptance checks on the configured potential.
    Verify {
        /// Gate on the identity with `-β₂` as printed instead of `+β₂`.
        #[arg(long)]
        literal_beta2: bool,
        /// Run the full acceptance suite instead of the configured potential.
        #[arg(long)]
        suite: bool,
    },
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'static str,
    command: &'static str,
    generated_at: String,
    config: &'a ExperimentConfig,
    potential: Option<PotentialEcho>,
    report: T,
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn write(&self, name: &str, body: &str) -> Result<(), (u8, String)> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| (EXIT_NUMERICS, format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn json<T: Serialize>(
        &self,
        name: &str,
        command: &'static str,
        cfg: &ExperimentConfig,
        potential: Option<PotentialEcho>,
        report: T,
    ) -> Result<(), (u8, String)> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config: cfg,
            potential,
            report,
        };
        let body = serde_json::to_string_pretty(&env).map_err(numerics)? + "\n";
        self.write(name, &body)
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = common.ell_max {
        cfg.ell_max = v;
    }
    if common.lambda_max.is_some() {
        cfg.lambda.max = common.lambda_max;
    }
    if let Some(t) = common.tol {
        cfg.tol.identity = t;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if common.out.is_some() {
        cfg.out.clone_from(&common.out);
    }
    cfg.validate()?;
    cfg.potential()?;
    Ok(cfg)
}

/// Outcome of a subcommand: an exit status, or a failure message with one.
type Outcome = Result<u8, (u8, String)>;

fn numerics<E: std::fmt::Display>(e: E) -> (u8, String) {
    (EXIT_NUMERICS, e.to_string())
}

fn status(identity_ok: bool, certified: bool) -> u8 {
    if !identity_ok {
        EXIT_IDENTITY
    } else if certified {
        0
    } else {
        EXIT_NUMERICS
    }
}

#[derive(Serialize)]
struct BoundStatesOut {
    #[serde(flatten)]
    report: levinson4d::spectral::BoundStateReport,
    certified: bool,
    fd_levels: Vec<FdLevels>,
}

#[derive(Serialize)]
struct FdLevels {
    ell: usize,
    node_count: usize,
    energies: Vec<f64>,
}

fn bound_states(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let v = cfg.potential().map_err(numerics)?;
    let report = total_bound_states(&v, cfg.bound_state_ell_max).map_err(numerics)?;
    let grid = GridSpec::default();
    let mut fd_levels = Vec::new();
    for s in report.per_ell.iter().filter(|s| s.count > 0 || s.ell <= 3) {
        let energies = fd_eigensolver(&v, s.ell, &grid).map_err(numerics)?;
        fd_levels.push(FdLevels { ell: s.ell, node_count: count_bound_states_ell(&v, s.ell).map_err(numerics)?, energies });
    }
    let agree = fd_levels.iter().all(|l| l.node_count == l.energies.len());
    let certified = report.certified();
    let levels: Vec<(usize, Vec<f64>)> = fd_levels.iter().map(|l| (l.ell, l.energies.clone())).collect();
    out.write("eigenvalues.csv", &levinson4d::spectral::eigenvalues_csv(&levels))?;
    out.json("bound_states.json", "bound-states", cfg, Some(PotentialEcho::from(&v)), BoundStatesOut { report, certified, fd_levels })?;
    Ok(status(agree, certified))
}

#[derive(Serialize)]
struct PhaseShiftsOut<'a> {
    lambda_points: usize,
    ell_count: usize,
    low_energy: &'a [levinson4d::radialode::LowEnergyLimit],
    refinements: &'a [levinson4d::radialode::RefinementPass],
}

fn phase_shifts(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let v = cfg.potential().map_err(numerics)?;
    let grid = cfg.lambda_grid().map_err(numerics)?;
    let table: PhaseShiftTable = phase_shift_table_with(&v, cfg.ell_max, &grid, &cfg.levinson_options().table).map_err(numerics)?;
    out.write("phase_shifts.csv", &table.to_csv())?;
    let report = PhaseShiftsOut {
        lambda_points: table.columns.len(),
        ell_count: table.ell_count(),
        low_energy: &table.low_energy,
        refinements: &table.refinement_history,
    };
    out.json("phase_shifts.json", "phase-shifts", cfg, Some(PotentialEcho::from(&v)), report)?;
    Ok(0)
}

fn scan(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let mut spec = cfg.potential.clone().unwrap_or_default();
    spec.coupling = 1.0;
    let template = spec.build(Path::new(".")).map_err(numerics)?;
    let [a, b] = cfg.scan.bracket;
    let s = resonance_scan(&template, (a, b), cfg.scan.points).map_err(numerics)?;
    let mut csv = String::from("coupling,a_coeff\n");
    for (g, c) in s.couplings.iter().zip(&s.a_coeffs) {
        csv.push_str(&format!("{g:.17e},{c:.17e}\n"));
    }
    out.write("resonance_scan.csv", &csv)?;
    let found = s.threshold_coupling.is_some();
    if let Some(g) = s.threshold_coupling {
        println!("g* = {g:.12}");
    }
    out.json("resonance_scan.json", "resonance-scan", cfg, None, s)?;
    Ok(if found { 0 } else { EXIT_NUMERICS })
}

fn levinson(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let v = cfg.potential().map_err(numerics)?;
    let run = levinson_run(&v, &cfg.levinson_options()).map_err(numerics)?;
    let r = &run.report;
    println!("-N = {}, integral = {:.8}, β₂ = {:.8}, dim_Ps = {}", r.lhs, r.integral, r.beta2, r.dim_ps);
    println!("residual (integral - β₂ + dim_Ps) = {:.3e}", r.residual);
    println!("residual (integral + β₂ + dim_Ps) = {:.3e}", r.residual_plus_beta2);
    out.write("trace.csv", &run.curve.to_csv())?;
    out.write("phase_shifts.csv", &run.table.to_csv())?;
    let code = status(r.residual_plus_beta2 <= cfg.tol.identity, r.certified);
    out.json("levinson.json", "levinson", cfg, None, &run.report)?;
    Ok(code)
}

fn hexagon(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let v = cfg.potential().map_err(numerics)?;
    let run = hexagon_run(&v, &cfg.levinson_options(), &cfg.edge_grid()).map_err(numerics)?;
    let w = &run.report;
    for (edge, wind) in &w.per_edge {
        println!("Wind(Γ{edge}) = {wind:.8}");
    }
    println!("Σ = {:.8}, N = {}, index_WS = {}, index_WR = {}", w.total, w.n_total, w.index_ws, w.index_wr);
    out.write("edges.csv", &curves_to_csv(&run.symbols.curves))?;
    let ok = w.rounded_total == -(w.n_total as i64) && w.total_plus_n.abs() <= cfg.tol.identity.min(ROUNDING_TOL);
    out.json("hexagon.json", "hexagon", cfg, Some(PotentialEcho::from(&v)), w)?;
    Ok(status(ok, w.certified))
}

#[derive(Serialize)]
struct VerifyOut<'a> {
    literal_beta2: bool,
    suite: bool,
    exit_code: i32,
    checks: &'a [Check],
}

fn verify_cmd(cfg: &ExperimentConfig, out: &Output, literal_beta2: bool, suite: bool) -> Outcome {
    let opts = cfg.levinson_options();
    let grid = cfg.edge_grid();
    let (checks, potential) = if suite {
        let s = Suite::compute(&opts, &grid).map_err(numerics)?;
        (verify::acceptance_checks(&s, literal_beta2).map_err(numerics)?, None)
    } else {
        let v = cfg.potential().map_err(numerics)?;
        let run = run_case(&Case { label: v.family.to_string(), potential: v.clone() }, &opts, &grid).map_err(numerics)?;
        let mut checks = verify::potential_checks(&run, literal_beta2);
        for c in &mut checks {
            if c.kind == CheckKind::Identity && c.tolerance > 0.0 && c.criterion == 6 {
                c.tolerance = cfg.tol.identity;
                c.passed = c.value <= c.tolerance;
            }
        }
        let fd = GridSpec::default();
        for ell in 0..=3 {
            let nodes = count_bound_states_ell(&v, ell).map_err(numerics)?;
            let levels = fd_eigensolver(&v, ell, &fd).map_err(numerics)?.len();
            checks.push(
                Check::holds(2, format!("ℓ={ell}: node count = FD count"), CheckKind::Identity, nodes == levels)
                    .detail(format!("{nodes} vs {levels}")),
            );
        }
        if v.is_zero() {
            let max_delta = run.hexagon.levinson.table.columns.iter().flat_map(|c| c.deltas.iter()).fold(0.0f64, |m, d| m.max(d.abs()));
            checks.push(Check::at_most(1, "V = 0: max |δ_ℓ|", CheckKind::Identity, max_delta, 0.0));
            checks.push(Check::at_most(1, "V = 0: Levinson residual", CheckKind::Identity, run.hexagon.levinson.report.residual, 1e-8));
        }
        (checks, Some(PotentialEcho::from(&v)))
    };
    for c in &checks {
        println!("{c}");
    }
    let code = exit_code(&checks);
    let report = VerifyOut { literal_beta2, suite, exit_code: code, checks: &checks };
    out.json("verify.json", "verify", cfg, potential, report)?;
    Ok(u8::try_from(code).unwrap_or(EXIT_NUMERICS))
}

/// Parses `args`, runs the subcommand and returns the exit status.
fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let info = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            return if info { 0 } else { EXIT_CONFIG };
        }
    };
    let cfg = match load_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    let out = Output { dir };
    let outcome = pool.install(|| match cli.command {
        Command::BoundStates => bound_states(&cfg, &out),
        Command::PhaseShifts => phase_shifts(&cfg, &out),
        Command::ResonanceScan => scan(&cfg, &out),
        Command::Levinson => levinson(&cfg, &out),
        Command::Hexagon => hexagon(&cfg, &out),
        Command::Verify { literal_beta2, suite } => verify_cmd(&cfg, &out, literal_beta2, suite),
    });
    match outcome {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn cli(args: &[&str]) -> u8 {
        run(std::iter::once("levinson4d").chain(args.iter().copied()))
    }

    fn path(dir: &Path, name: &str) -> String {
        dir.join(name).display().to_string()
    }

    fn json(path: &Path) -> Value {
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    }

    fn without_timestamp(path: &Path) -> String {
        fs::read_to_string(path).unwrap().lines().filter(|l| !l.contains("\"generated_at\"")).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn verify_free_case_exits_zero() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(cli(&["verify", "--out", &path(dir.path(), "v")]), 0);
        let v = json(&dir.path().join("v/verify.json"));
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert!(v["generated_at"].is_string());
        let checks = v["report"]["checks"].as_array().unwrap();
        assert!(checks.len() > 10);
        for c in checks {
            assert_eq!(c["value"].as_f64(), Some(0.0), "{c}");
        }
    }

    #[test]
    fn unknown_config_key_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.toml"), "[potential]\nfamily = \"gaussian\"\ndepth = 3.0\n").unwrap();
        assert_eq!(cli(&["levinson", "--config", &path(dir.path(), "c.toml")]), EXIT_CONFIG);
        fs::write(dir.path().join("d.toml"), "lambda_points = 10\n").unwrap();
        assert_eq!(cli(&["hexagon", "--config", &path(dir.path(), "d.toml")]), EXIT_CONFIG);
    }

    #[test]
    fn invalid_values_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(cli(&["levinson", "--tol=-1"]), EXIT_CONFIG);
        assert_eq!(cli(&["levinson", "--config", &path(dir.path(), "missing.toml")]), EXIT_CONFIG);
        fs::write(dir.path().join("c.toml"), "[scan]\nbracket = [7.0, 4.0]\n").unwrap();
        assert_eq!(cli(&["resonance-scan", "--config", &path(dir.path(), "c.toml")]), EXIT_CONFIG);
        assert_eq!(cli(&["levinson", "--no-such-flag"]), EXIT_CONFIG);
        assert_eq!(cli(&["levinson", "--threads", "0"]), EXIT_CONFIG);
        assert_eq!(cli(&["--help"]), 0);
    }

    #[test]
    fn levinson_square_well_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = path(dir.path(), "sw.toml");
        fs::write(&cfg, "[potential]\nfamily = \"square_well\"\ncoupling = 10.0\nrange = 1.0\n").unwrap();
        let (a, b) = (path(dir.path(), "a"), path(dir.path(), "b"));
        assert_eq!(cli(&["levinson", "--config", &cfg, "--out", &a]), 0);
        let v = json(&dir.path().join("a/levinson.json"));
        let r = &v["report"];
        assert_eq!(r["N_total"], 1);
        assert!(r["residual_plus_beta2"].as_f64().unwrap() <= 0.05);
        assert_eq!(v["config"]["potential"]["coupling"], 10.0);
        assert_eq!(r["options"]["points_per_decade"], 320);
        assert!(fs::read_to_string(dir.path().join("a/trace.csv")).unwrap().lines().count() > 1000);

        assert_eq!(cli(&["levinson", "--config", &cfg, "--out", &b, "--threads", "2"]), 0);
        assert_eq!(
            without_timestamp(&dir.path().join("a/levinson.json"))
                .replace(&format!("\"{a}\""), &format!("\"{b}\""))
                .replace("\"threads\": null", "\"threads\": 2"),
            without_timestamp(&dir.path().join("b/levinson.json"))
        );
        assert_eq!(fs::read(dir.path().join("a/trace.csv")).unwrap(), fs::read(dir.path().join("b/trace.csv")).unwrap());
    }

    #[test]
    fn resonance_scan_finds_bessel_zero() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("well.txt"), "family = square_well\nrange = 1\n").unwrap();
        fs::write(dir.path().join("c.toml"), "potential_file = \"well.txt\"\n[scan]\nbracket = [4.0, 7.0]\npoints = 7\n").unwrap();
        assert_eq!(cli(&["resonance-scan", "--config", &path(dir.path(), "c.toml"), "--out", &path(dir.path(), "r")]), 0);
        let v = json(&dir.path().join("r/resonance_scan.json"));
        let g = v["report"]["threshold_coupling"].as_f64().unwrap();
        assert!((g - 5.783_185_962_946_784).abs() < 1e-6, "{g}");
        assert_eq!(fs::read_to_string(dir.path().join("r/resonance_scan.csv")).unwrap().lines().count(), 8);
    }

    #[test]
    fn output_directory_from_environment() {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var("LEVINSON4D_OUT", dir.path().join("env_out"));
        let code = cli(&["bound-states"]);
        std::env::remove_var("LEVINSON4D_OUT");
        assert_eq!(code, 0);
        let v = json(&dir.path().join("env_out/bound_states.json"));
        assert_eq!(v["report"]["N_total"], 0);
        assert_eq!(v["report"]["certified"], true);
    }

    #[test]
    fn hexagon_and_phase_shifts_emit_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = path(dir.path(), "g.toml");
        fs::write(&cfg, "[potential]\nfamily = \"gaussian\"\ncoupling = 4.0\n[lambda]\npoints_per_decade = 40\n[tol]\nrichardson = 1e-2\n")
            .unwrap();
        assert_eq!(cli(&["phase-shifts", "--config", &cfg, "--out", &path(dir.path(), "p"), "--ell-max", "6"]), 0);
        assert!(fs::read_to_string(dir.path().join("p/phase_shifts.csv")).unwrap().lines().count() > 100);
        assert_eq!(cli(&["hexagon", "--config", &cfg, "--out", &path(dir.path(), "h")]), 0);
        let edges = fs::read_to_string(dir.path().join("h/edges.csv")).unwrap();
        assert!(edges.starts_with("edge_id,param,re_det,im_det,unwrapped_arg\n"));
        assert_eq!(json(&dir.path().join("h/hexagon.json"))["report"]["rounded_total"], 0);

        // A six-wave cap leaves the high-energy asymptote unresolved.
        assert_ne!(cli(&["hexagon", "--config", &cfg, "--out", &path(dir.path(), "t"), "--ell-max", "6"]), 0);
        assert_eq!(json(&dir.path().join("t/hexagon.json"))["report"]["certified"], false);
    }
}
