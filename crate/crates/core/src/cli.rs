//! Command-line front end: `solve`, `infsup`, `coercivity`, `signcheck`,
//! `convergence` and `check`.
//!
//! Exit codes: 0 success, 1 failed verdict or solver failure, 2 bad
//! configuration.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::convection_residual;
use crate::coercivity::{
    check_mapped_coercivity, check_sign_condition, compute_tau, estimate_alpha, estimate_cn,
    estimate_infsup, infsup_spectrum, lab_setup, random_pressure, random_velocity, residual_map,
    ThetaMap, DEFAULT_RADIUS_GRID, SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::harness::{
    cavity_problem, error_norms, run_convergence, CaseId, ConvergenceConfig, ManufacturedCase,
};
use crate::linalg::{sym_eigen, to_dense};
use crate::mesh::Mesh;
use crate::solver::{
    energy_bound, solve_nonlinear, NewtonOptions, Problem, ProblemData, ProblemKind, ProblemSpec,
    RieszMap, SaddleState,
};
use crate::sparse::dot;
use crate::stabilization::{PressureStab, StabilizationConfig, VelocityStab};

#[derive(Parser, Debug)]
#[command(
    name = "stabfem",
    version,
    about = "Stabilized equal-order finite elements and mapped-coercivity checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem and write the solution with its Newton log (JSON)
    Solve(Flags),
    /// Stabilized inf-sup constant and c_T (JSON)
    Infsup(Flags),
    /// Sampled mapped coercivity of the linear operator (JSON)
    Coercivity(Flags),
    /// Sign condition of the nonlinear operator outside the a priori radius (JSON)
    Signcheck(Flags),
    /// Manufactured-solution convergence table (CSV)
    Convergence(Flags),
    /// Run the whole property suite; exit 0 iff every check passes (JSON)
    Check(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Infsup(_) => "infsup",
            Command::Coercivity(_) => "coercivity",
            Command::Signcheck(_) => "signcheck",
            Command::Convergence(_) => "convergence",
            Command::Check(_) => "check",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Solve(f)
            | Command::Infsup(f)
            | Command::Coercivity(f)
            | Command::Signcheck(f)
            | Command::Convergence(f)
            | Command::Check(f) => f,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// JSON file with any of the options below; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// stokes | gstokes | oseen | nse
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Unit square with n×n cells (split into triangles)
    #[arg(long, conflicts_with = "mesh")]
    n: Option<usize>,
    /// Mesh file in the plain-text format
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Polynomial degree, 1 or 2
    #[arg(long, allow_hyphen_values = true)]
    k: Option<i64>,
    /// none | bp | bh | lps
    #[arg(long)]
    stab: Option<PressureStab>,
    /// none | lps | supg
    #[arg(long)]
    vstab: Option<VelocityStab>,
    #[arg(long = "delta0-p", allow_hyphen_values = true)]
    delta0_p: Option<f64>,
    #[arg(long = "delta0-v", allow_hyphen_values = true)]
    delta0_v: Option<f64>,
    /// stokes_trig | nse_trig | gstokes_div | cavity
    #[arg(long = "case")]
    case: Option<String>,
    /// Comma-separated mesh levels, e.g. 8,16,32
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    levels: Option<Vec<i64>>,
    #[arg(long, allow_hyphen_values = true)]
    samples: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated radius factors for `signcheck`
    #[arg(
        long = "radius-grid",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    radius_grid: Option<Vec<f64>>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit wall-clock times and the generation time from reports
    #[arg(long = "no-timestamp")]
    no_timestamp: bool,
}

/// Options as read from a JSON config file. Every key is optional and
/// unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub problem: Option<ProblemKind>,
    pub mu: Option<f64>,
    pub n: Option<usize>,
    pub mesh: Option<PathBuf>,
    pub k: Option<i64>,
    pub stab: Option<PressureStab>,
    pub vstab: Option<VelocityStab>,
    pub delta0_p: Option<f64>,
    pub delta0_v: Option<f64>,
    pub case: Option<String>,
    pub levels: Option<Vec<i64>>,
    pub samples: Option<i64>,
    pub seed: Option<u64>,
    pub radius_grid: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub no_timestamp: Option<bool>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    fn overlay(mut self, f: &Flags) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {$(
                if f.$field.is_some() {
                    self.$field = f.$field.clone();
                }
            )*};
        }
        take!(
            problem,
            mu,
            n,
            mesh,
            k,
            stab,
            vstab,
            delta0_p,
            delta0_v,
            case,
            levels,
            samples,
            seed,
            radius_grid,
            out
        );
        if f.no_timestamp {
            self.no_timestamp = Some(true);
        }
        if self.mesh.is_some() && f.n.is_some() {
            self.mesh = None;
        } else if self.n.is_some() && f.mesh.is_some() {
            self.n = None;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
enum CaseSel {
    Manufactured(CaseId),
    Cavity,
}

/// Fully resolved and range-checked settings; echoed into every report.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    command: String,
    problem: ProblemKind,
    mu: f64,
    n: Option<usize>,
    mesh: Option<PathBuf>,
    k: usize,
    stab: StabilizationConfig,
    case: CaseSel,
    levels: Vec<usize>,
    samples: usize,
    seed: u64,
    radius_grid: Vec<f64>,
    #[serde(skip)]
    out: Option<PathBuf>,
    #[serde(skip)]
    no_timestamp: bool,
}

const DEFAULT_N: usize = 8;
const DEFAULT_SAMPLES: usize = 100;
const DEFAULT_SEED: u64 = 2024;
const DEFAULT_LEVELS: [usize; 3] = [8, 16, 32];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn default_case(kind: ProblemKind) -> CaseId {
    match kind {
        ProblemKind::Stokes => CaseId::StokesTrig,
        ProblemKind::GStokes => CaseId::GstokesDiv,
        ProblemKind::Oseen | ProblemKind::Nse => CaseId::NseTrig,
    }
}

impl Settings {
    fn resolve(command: &str, rc: RunConfig) -> Result<Self> {
        if let Some(c) = &rc.command {
            if c != command {
                return Err(config_err(format!(
                    "config file is for '{c}', not '{command}'"
                )));
            }
        }
        let default_kind = if command == "signcheck" {
            ProblemKind::Nse
        } else {
            ProblemKind::Stokes
        };
        let problem = rc.problem.unwrap_or(default_kind);
        let mu = rc.mu.unwrap_or(1.0);
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(config_err(format!(
                "mu must be positive and finite, got {mu}"
            )));
        }
        if rc.n.is_some() && rc.mesh.is_some() {
            return Err(config_err("give either n or mesh, not both"));
        }
        let n = match (rc.n, &rc.mesh) {
            (Some(n), _) => Some(n),
            (None, None) => Some(DEFAULT_N),
            (None, Some(_)) => None,
        };
        if let Some(n) = n {
            if !(1..=256).contains(&n) {
                return Err(config_err(format!("n must be in 1..=256, got {n}")));
            }
        }
        let k = rc.k.unwrap_or(1);
        if !(k == 1 || k == 2) {
            return Err(config_err(format!("k must be 1 or 2, got {k}")));
        }
        let mut stab = StabilizationConfig::pressure(rc.stab.unwrap_or(PressureStab::Bp));
        stab.velocity = rc.vstab.unwrap_or(VelocityStab::None);
        for (name, v, slot) in [
            ("delta0_p", rc.delta0_p, &mut stab.delta0_p),
            ("delta0_v", rc.delta0_v, &mut stab.delta0_v),
        ] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(config_err(format!(
                        "{name} must be nonnegative and finite, got {v}"
                    )));
                }
                *slot = v;
            }
        }
        let case = match rc.case.as_deref() {
            None => CaseSel::Manufactured(default_case(problem)),
            Some("cavity") => CaseSel::Cavity,
            Some(id) => CaseSel::Manufactured(id.parse()?),
        };
        if let CaseSel::Manufactured(id) = case {
            let kind = ManufacturedCase::new(id).kind();
            let compatible =
                kind == problem || (problem == ProblemKind::Oseen && id == CaseId::NseTrig);
            if !compatible && command != "convergence" {
                return Err(config_err(format!(
                    "case {} does not match problem {problem:?}",
                    id.name()
                )));
            }
        }
        if case == CaseSel::Cavity && problem != ProblemKind::Nse {
            return Err(config_err("the cavity case needs --problem nse"));
        }
        let levels = match rc.levels {
            None => DEFAULT_LEVELS.to_vec(),
            Some(ls) => {
                if ls.is_empty() || ls.iter().any(|&l| !(1..=256).contains(&l)) {
                    return Err(config_err(format!(
                        "levels must lie in 1..=256, got {ls:?}"
                    )));
                }
                if ls.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_err(format!(
                        "levels must be strictly increasing, got {ls:?}"
                    )));
                }
                ls.into_iter().map(|l| l as usize).collect()
            }
        };
        let samples = rc.samples.unwrap_or(DEFAULT_SAMPLES as i64);
        if !(1..=100_000).contains(&samples) {
            return Err(config_err(format!(
                "samples must be in 1..=100000, got {samples}"
            )));
        }
        let radius_grid = rc
            .radius_grid
            .unwrap_or_else(|| DEFAULT_RADIUS_GRID.to_vec());
        if radius_grid.is_empty() || radius_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(config_err(format!(
                "radius grid must be positive, got {radius_grid:?}"
            )));
        }
        Ok(Settings {
            command: command.into(),
            problem,
            mu,
            n,
            mesh: rc.mesh,
            k: k as usize,
            stab,
            case,
            levels,
            samples: samples as usize,
            seed: rc.seed.unwrap_or(DEFAULT_SEED),
            radius_grid,
            out: rc.out,
            no_timestamp: rc.no_timestamp.unwrap_or(false),
        })
    }

    fn mesh(&self) -> Result<Mesh> {
        match (&self.mesh, self.n) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_err(format!("cannot read mesh {}: {e}", path.display())))?;
                Mesh::parse(&text)
            }
            (None, Some(n)) => Mesh::unit_square(n, self.stab.needs_patches()),
            (None, None) => unreachable!("resolve always sets a mesh source"),
        }
    }

    fn spec(&self, kind: ProblemKind) -> ProblemSpec {
        ProblemSpec {
            kind,
            mu: self.mu,
            stab: self.stab,
        }
    }

    fn data(&self) -> ProblemData {
        match self.case {
            CaseSel::Cavity => ProblemData::default(),
            CaseSel::Manufactured(id) => {
                let case = ManufacturedCase::new(id);
                let mut data = case.data(self.mu);
                if self.problem == ProblemKind::Oseen {
                    data.advection = Some(Box::new(move |x, y| case.velocity(x, y)));
                }
                data
            }
        }
    }

    /// The configured problem with its case data.
    fn problem(&self, mesh: &Mesh) -> Result<Problem> {
        match self.case {
            CaseSel::Cavity => cavity_problem(mesh, self.k, self.mu, self.stab),
            CaseSel::Manufactured(_) => {
                Problem::assemble(mesh, self.k, self.spec(self.problem), &self.data())
            }
        }
    }

    /// Stokes operator with homogeneous data (the linear lab setting).
    fn linear_problem(&self, mesh: &Mesh) -> Result<Problem> {
        Problem::assemble(
            mesh,
            self.k,
            self.spec(ProblemKind::Stokes),
            &ProblemData::default(),
        )
    }
}

/// Report envelope shared by the JSON outputs.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    command: &'a str,
    config: &'a Settings,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
    #[serde(flatten)]
    body: T,
}

struct Timer(Option<std::time::Instant>);

impl Timer {
    fn start(enabled: bool) -> Self {
        Timer(enabled.then(std::time::Instant::now))
    }

    fn elapsed(&self) -> Option<f64> {
        self.0.map(|t| t.elapsed().as_secs_f64())
    }
}

enum Outcome {
    Pass,
    Fail(String),
}

fn emit(settings: &Settings, text: &str) -> Result<()> {
    match &settings.out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn emit_json<T: Serialize>(settings: &Settings, timer: &Timer, body: T) -> Result<()> {
    let stamp = !settings.no_timestamp;
    let env = Envelope {
        schema: SCHEMA_VERSION,
        command: &settings.command,
        config: settings,
        generated_at_unix: stamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        }),
        wall_time_s: if stamp { timer.elapsed() } else { None },
        body,
    };
    let mut text = serde_json::to_string_pretty(&env)
        .map_err(|e| Error::Solver(format!("serializing report: {e}")))?;
    text.push('\n');
    emit(settings, &text)
}

fn cmd_solve(s: &Settings, timer: &Timer) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Body<'a> {
        vertices: usize,
        cells: usize,
        velocity_dofs: usize,
        pressure_dofs: usize,
        log: crate::solver::SolveLog,
        #[serde(skip_serializing_if = "Option::is_none")]
        errors: Option<crate::harness::ErrorNorms>,
        nodes: &'a [[f64; 2]],
        solution: SaddleState,
    }
    let mesh = s.mesh()?;
    let problem = s.problem(&mesh)?;
    let (x, mut log) = solve_nonlinear(&problem, &NewtonOptions::default())?;
    if s.no_timestamp {
        log.wall_time_s = None;
    }
    let errors = match s.case {
        CaseSel::Manufactured(id) => {
            Some(error_norms(&problem.spaces, &x, &ManufacturedCase::new(id)))
        }
        CaseSel::Cavity => None,
    };
    let converged = log.converged;
    let last = log.residuals.last().copied().unwrap_or(f64::NAN);
    emit_json(
        s,
        timer,
        Body {
            vertices: mesh.num_vertices(),
            cells: mesh.num_cells(),
            velocity_dofs: problem.spaces.velocity.dim(),
            pressure_dofs: problem.spaces.pressure.dim(),
            log,
            errors,
            nodes: problem.spaces.nodes(),
            solution: x,
        },
    )?;
    Ok(if converged {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("Newton did not converge (final residual {last:e})"))
    })
}

fn cmd_infsup(s: &Settings, timer: &Timer) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Body {
        alpha: f64,
        infsup: crate::coercivity::InfSupEstimate,
        stable: bool,
    }
    let problem = s.linear_problem(&s.mesh()?)?;
    let alpha = estimate_alpha(&problem.blocks)?;
    let infsup = estimate_infsup(
        &problem.spaces,
        &problem.blocks,
        &problem.t,
        s.samples,
        s.seed,
    )?;
    let stable = infsup.gamma_stab > 0.0 && infsup.c_t.is_finite();
    emit_json(
        s,
        timer,
        Body {
            alpha,
            infsup,
            stable,
        },
    )?;
    Ok(Outcome::Pass)
}

fn cmd_coercivity(s: &Settings, timer: &Timer) -> Result<Outcome> {
    let problem = s.linear_problem(&s.mesh()?)?;
    let lab = lab_setup(&problem, s.samples, s.seed)?;
    let report = check_mapped_coercivity(
        &problem.spaces,
        &problem.blocks,
        &problem.t,
        &lab.constants,
        &lab.infsup,
        s.samples,
        s.seed,
    )?;
    let pass = report.pass;
    let msg = report
        .note
        .clone()
        .unwrap_or_else(|| format!("beta_min = {:?}", report.beta_min));
    emit_json(s, timer, report)?;
    Ok(if pass {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("mapped coercivity failed: {msg}"))
    })
}

fn cmd_signcheck(s: &Settings, timer: &Timer) -> Result<Outcome> {
    let problem = s.problem(&s.mesh()?)?;
    let lab = lab_setup(&problem, s.samples, s.seed)?;
    let report = check_sign_condition(
        &problem,
        &lab.constants,
        &lab.infsup,
        &s.radius_grid,
        s.samples,
        s.seed,
    )?;
    let pass = report.pass;
    let msg = report
        .note
        .clone()
        .unwrap_or_else(|| format!("min margin = {:?}", report.min_margin));
    emit_json(s, timer, report)?;
    Ok(if pass {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("sign condition failed: {msg}"))
    })
}

fn cmd_convergence(s: &Settings) -> Result<Outcome> {
    let CaseSel::Manufactured(id) = s.case else {
        return Err(config_err("convergence needs a manufactured case"));
    };
    if s.mesh.is_some() {
        return Err(config_err(
            "convergence runs on unit-square levels; --mesh is not accepted",
        ));
    }
    let cfg = ConvergenceConfig {
        mu: s.mu,
        k: s.k,
        stab: s.stab,
    };
    let table = run_convergence(&ManufacturedCase::new(id), &cfg, &s.levels)?;
    emit(s, &table.to_csv())?;
    Ok(match table.failure {
        None => Outcome::Pass,
        Some(f) => Outcome::Fail(f),
    })
}

/// One entry of the `check` report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, pass: bool, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        CheckResult {
            name: name.into(),
            pass,
            value: finite(value),
            threshold: finite(threshold),
            detail: detail.into(),
        }
    }

    fn error(name: &str, e: &Error) -> Self {
        CheckResult {
            name: name.into(),
            pass: false,
            value: None,
            threshold: None,
            detail: e.to_string(),
        }
    }
}

fn run_check<F: FnOnce() -> Result<CheckResult>>(name: &str, f: F) -> CheckResult {
    f().unwrap_or_else(|e| CheckResult::error(name, &e))
}

/// The property suite behind `check`, on the configured mesh and
/// stabilization. Linear checks use the Stokes operator with homogeneous
/// data; nonlinear ones use `nse_trig` data at the configured `mu`.
fn property_suite(s: &Settings) -> Result<Vec<CheckResult>> {
    let mesh = s.mesh()?;
    let linear = s.linear_problem(&mesh)?;
    let case = ManufacturedCase::new(CaseId::NseTrig);
    let nse = Problem::assemble(&mesh, s.k, s.spec(ProblemKind::Nse), &case.data(s.mu))?;
    let (spaces, blocks, t) = (&linear.spaces, &linear.blocks, &linear.t);
    let mut out = Vec::new();

    out.push(run_check("alpha", || {
        let a = estimate_alpha(blocks)?;
        let rel = (a - s.mu).abs() / s.mu;
        Ok(CheckResult::new(
            "alpha",
            rel <= 1e-8,
            rel,
            1e-8,
            format!("alpha = {a}, relative deviation from mu"),
        ))
    }));

    out.push(run_check("t_psd", || {
        let (vals, _) = sym_eigen(&to_dense(t))?;
        let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = vals.first().copied().unwrap_or(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let worst = (0..s.samples)
            .map(|_| {
                let p = random_pressure(spaces, &blocks.m_q, &mut rng);
                t.bilinear(&p, &p)
            })
            .fold(f64::INFINITY, f64::min);
        let pass = min >= -1e-10 * norm && worst >= -1e-12;
        Ok(CheckResult::new(
            "t_psd",
            pass,
            min,
            -1e-10 * norm,
            format!(
                "smallest eigenvalue of T; ||T|| = {norm:e}, min sampled p'Tp/|p|^2 = {worst:e}"
            ),
        ))
    }));

    out.push(run_check("skew", || {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let (mut skew, mut stab_min) = (0.0f64, f64::INFINITY);
        for _ in 0..s.samples {
            let u = random_velocity(spaces, blocks, &mut rng);
            let c = dot(&convection_residual(spaces, &u)?, &u);
            skew = skew.max(c.abs());
            let sv = dot(&nse.stabilizer.velocity_residual(spaces, &u)?, &u);
            stab_min = stab_min.min(c + sv);
        }
        let pass = skew <= 1e-10 && stab_min >= -1e-12;
        Ok(CheckResult::new(
            "skew",
            pass,
            skew,
            1e-10,
            format!("max |<C(u),u>| at |u|_V = 1; min <C(u)+S(u),u> = {stab_min:e}"),
        ))
    }));

    out.push(run_check("cn_homogeneity", || {
        let cn = estimate_cn(spaces, blocks, &nse.stabilizer, s.samples, s.seed)?;
        let max = cn.max_ratio.iter().copied().fold(0.0f64, f64::max);
        let min = cn.max_ratio.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
        if s.stab.velocity == VelocityStab::None {
            Ok(CheckResult::new(
                "cn_homogeneity",
                spread <= 0.05,
                spread,
                0.05,
                format!("relative spread of the ratios {:?}", cn.max_ratio),
            ))
        } else {
            let again = estimate_cn(spaces, blocks, &nse.stabilizer, s.samples, s.seed)?;
            let pass = cn.c_n.is_finite() && again.max_ratio == cn.max_ratio;
            Ok(CheckResult::new(
                "cn_homogeneity",
                pass,
                cn.c_n,
                f64::INFINITY,
                format!(
                    "velocity stabilization: c_N finite and reproducible; ratios {:?}",
                    cn.max_ratio
                ),
            ))
        }
    }));

    let infsup = estimate_infsup(spaces, blocks, t, s.samples, s.seed)?;
    out.push(CheckResult::new(
        "infsup",
        infsup.gamma_stab > 0.0 && infsup.c_t.is_finite(),
        infsup.gamma_stab,
        0.0,
        format!("gamma_stab > 0 and c_T finite (c_T = {})", infsup.c_t),
    ));

    out.push(run_check("theta_infsup", || {
        if !infsup.kappa.is_finite() {
            return Ok(CheckResult::new(
                "theta_infsup",
                false,
                f64::NAN,
                1.0,
                "Theta undefined without inf-sup",
            ));
        }
        let theta = ThetaMap::new(spaces, blocks, infsup.kappa)?;
        let spec = infsup_spectrum(blocks, t, &spaces.pressure.mean)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let mut ps = spec.vectors;
        ps.extend((0..s.samples).map(|_| random_pressure(spaces, &blocks.m_q, &mut rng)));
        let mut worst = f64::INFINITY;
        for p in &ps {
            let bt = dot(&blocks.b.mul_vec(&theta.apply(p)?), p);
            let v = (bt + infsup.kappa * t.bilinear(p, p)) / blocks.m_q.bilinear(p, p);
            worst = worst.min(v);
        }
        Ok(CheckResult::new(
            "theta_infsup",
            worst >= 1.0 - 1e-8,
            worst,
            1.0 - 1e-8,
            "min of (<B Theta p, p> + kappa t(p,p)) / |p|^2 over eigenbasis and samples",
        ))
    }));

    let lab = lab_setup(&linear, s.samples, s.seed)?;
    let nse_lab = lab_setup(&nse, s.samples, s.seed)?;
    out.push(run_check("mapped_coercivity", || {
        let rep = check_mapped_coercivity(
            spaces,
            blocks,
            t,
            &lab.constants,
            &lab.infsup,
            s.samples,
            s.seed,
        )?;
        let vel = rep.beta_min_velocity.unwrap_or(f64::NEG_INFINITY);
        let pass = rep.pass && vel >= lab.alpha - 1e-10;
        Ok(CheckResult::new(
            "mapped_coercivity",
            pass,
            rep.beta_min.unwrap_or(f64::NAN),
            0.0,
            rep.note
                .unwrap_or_else(|| format!("beta_min > 0; velocity slice {vel} >= alpha - 1e-10")),
        ))
    }));

    out.push(run_check("psi_lower_bound", || {
        let c = &nse_lab.constants;
        if !nse_lab.infsup.kappa.is_finite() {
            return Ok(CheckResult::new(
                "psi_lower_bound",
                false,
                f64::NAN,
                0.0,
                "Theta undefined without inf-sup",
            ));
        }
        let theta = ThetaMap::new(spaces, blocks, nse_lab.infsup.kappa)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let mut worst = f64::INFINITY;
        for i in 0..s.samples {
            let scale = 10f64.powi(i as i32 % 5 - 2);
            let u: Vec<f64> = random_velocity(spaces, blocks, &mut rng)
                .iter()
                .map(|v| scale * v)
                .collect();
            let p = random_pressure(spaces, &blocks.m_q, &mut rng);
            let tau = compute_tau(scale, c)?;
            let tp = theta.apply(&p)?;
            let w: Vec<f64> = u.iter().zip(&tp).map(|(a, b)| a - tau * b).collect();
            let pairing = blocks.m_v.bilinear(&w, &u) + blocks.m_q.bilinear(&p, &p);
            worst = worst.min(pairing - 0.25 * (scale * scale + 1.0));
        }
        Ok(CheckResult::new(
            "psi_lower_bound",
            worst >= -1e-10,
            worst,
            -1e-10,
            "min of <Psi(x), x> - |x|^2/4 with tau = tau(u)",
        ))
    }));

    out.push(run_check("sign_condition", || {
        let rep = check_sign_condition(
            &nse,
            &nse_lab.constants,
            &nse_lab.infsup,
            &s.radius_grid,
            s.samples,
            s.seed,
        )?;
        Ok(CheckResult::new(
            "sign_condition",
            rep.pass,
            rep.min_margin.unwrap_or(f64::NAN),
            f64::NAN,
            rep.note.unwrap_or_else(|| {
                format!(
                    "all {} margins above -1e-8 (1 + |x|^2) max(1, |f|')",
                    rep.sign_condition.len()
                )
            }),
        ))
    }));

    let solved = solve_nonlinear(&nse, &NewtonOptions::default());
    out.push(match &solved {
        Ok((_, log)) => CheckResult::new(
            "newton",
            log.converged && log.iterations <= 25,
            log.residuals.last().copied().unwrap_or(f64::NAN),
            log.tolerance,
            format!(
                "{} Newton steps, converged = {}",
                log.iterations, log.converged
            ),
        ),
        Err(e) => CheckResult::error("newton", e),
    });

    let riesz = RieszMap::new(&nse.spaces, &nse.blocks)?;
    let f_dual = riesz.dual_norm(&nse.f);
    out.push(match &solved {
        Ok((x, _)) => {
            let (un, bound) = energy_bound(&nse, &riesz, x);
            CheckResult::new(
                "energy_bound",
                un <= bound + 1e-8,
                un,
                bound + 1e-8,
                "|u_h|_V <= |f|_V' / mu",
            )
        }
        Err(e) => CheckResult::error("energy_bound", e),
    });

    out.push(run_check("residual_map", || {
        let zero = SaddleState::zeros(&nse.spaces);
        let r0 = residual_map(&nse, &riesz, &zero)?;
        let origin = (r0.norm - f_dual).abs() <= 1e-10 * f_dual.max(1.0);
        let tol = 1e-8 * f_dual.max(1.0);
        let at_solution = match &solved {
            Ok((x, _)) => residual_map(&nse, &riesz, x)?.norm,
            Err(_) => f64::NAN,
        };
        Ok(CheckResult::new(
            "residual_map",
            origin && at_solution <= tol,
            at_solution,
            tol,
            format!(
                "|R(x_h)| at the Newton solution; |R(0)| = {:e} vs |f|' = {f_dual:e}",
                r0.norm
            ),
        ))
    }));

    Ok(out)
}

fn cmd_check(s: &Settings, timer: &Timer) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Body {
        checks: Vec<CheckResult>,
        pass: bool,
    }
    let checks = property_suite(s)?;
    let pass = checks.iter().all(|c| c.pass);
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect();
    emit_json(s, timer, Body { checks, pass })?;
    Ok(if pass {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("failed checks: {}", failed.join(", ")))
    })
}

/// Whether an error stems from the user's configuration (exit 2) rather
/// than from a numerical failure (exit 1).
fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::InvalidMesh(_)
            | Error::Unsupported(_)
    )
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let name = cli.command.name();
    let flags = cli.command.flags().clone();
    let settings = (|| -> Result<Settings> {
        let base = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    config_err(format!("cannot read config {}: {e}", path.display()))
                })?;
                RunConfig::from_json(&text)?
            }
            None => RunConfig::default(),
        };
        Settings::resolve(name, base.overlay(&flags))
    })();
    let settings = match settings {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let timer = Timer::start(!settings.no_timestamp);
    let outcome = match &cli.command {
        Command::Solve(_) => cmd_solve(&settings, &timer),
        Command::Infsup(_) => cmd_infsup(&settings, &timer),
        Command::Coercivity(_) => cmd_coercivity(&settings, &timer),
        Command::Signcheck(_) => cmd_signcheck(&settings, &timer),
        Command::Convergence(_) => cmd_convergence(&settings),
        Command::Check(_) => cmd_check(&settings, &timer),
    };
    match outcome {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("{name}: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> Result<Settings> {
        let mut full = vec!["stabfem"];
        full.extend_from_slice(args);
        let cli = Cli::try_parse_from(full).expect("parses");
        Settings::resolve(
            cli.command.name(),
            RunConfig::default().overlay(cli.command.flags()),
        )
    }

    #[test]
    fn negative_mu_names_mu() {
        let e = resolve(&["solve", "--problem", "nse", "--mu", "-1"]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("mu"));
    }

    #[test]
    fn defaults_and_ranges() {
        let s = resolve(&["check"]).unwrap();
        assert_eq!((s.n, s.k, s.samples), (Some(DEFAULT_N), 1, DEFAULT_SAMPLES));
        assert_eq!(s.stab.pressure, PressureStab::Bp);
        assert!(resolve(&["check", "--k", "3"]).is_err());
        assert!(resolve(&["check", "--samples", "0"]).is_err());
        assert!(resolve(&["convergence", "--levels", "8,8"]).is_err());
        assert!(resolve(&["check", "--delta0-p", "-0.1"]).is_err());
        assert_eq!(resolve(&["signcheck"]).unwrap().problem, ProblemKind::Nse);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"mu": 0.5, "bogus": 1}"#).is_err());
        let rc = RunConfig::from_json(r#"{"mu": 0.5, "stab": "lps", "n": 4}"#).unwrap();
        assert_eq!(rc.stab, Some(PressureStab::Lps));
    }

    #[test]
    fn flags_override_file() {
        let rc = RunConfig::from_json(r#"{"mu": 0.5, "n": 4, "seed": 3}"#).unwrap();
        let cli = Cli::try_parse_from(["stabfem", "infsup", "--mu", "2"]).unwrap();
        let s = Settings::resolve("infsup", rc.overlay(cli.command.flags())).unwrap();
        assert_eq!((s.mu, s.n, s.seed), (2.0, Some(4), 3));
    }

    #[test]
    fn case_must_match_problem() {
        assert!(resolve(&["solve", "--problem", "stokes", "--case", "nse_trig"]).is_err());
        assert!(resolve(&["solve", "--problem", "oseen", "--case", "nse_trig"]).is_ok());
        assert!(resolve(&["solve", "--problem", "stokes", "--case", "cavity"]).is_err());
        assert!(resolve(&["solve", "--case", "nope"]).is_err());
    }
}
