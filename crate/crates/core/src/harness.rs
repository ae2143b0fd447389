//! Manufactured solutions, error norms, convergence tables and the cavity.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_space::Spaces;
use crate::mesh::Mesh;
use crate::solver::{
    solve_nonlinear, NewtonOptions, Problem, ProblemData, ProblemKind, ProblemSpec, SaddleState,
};
use crate::stabilization::StabilizationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    StokesTrig,
    NseTrig,
    GstokesDiv,
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stokes_trig" => Ok(CaseId::StokesTrig),
            "nse_trig" => Ok(CaseId::NseTrig),
            "gstokes_div" => Ok(CaseId::GstokesDiv),
            other => Err(Error::Config(format!(
                "unknown manufactured case '{other}' (expected stokes_trig, nse_trig or gstokes_div)"
            ))),
        }
    }
}

impl CaseId {
    pub fn name(self) -> &'static str {
        match self {
            CaseId::StokesTrig => "stokes_trig",
            CaseId::NseTrig => "nse_trig",
            CaseId::GstokesDiv => "gstokes_div",
        }
    }
}

/// Closed-form solution. Velocity is the curl of
/// `ψ = sin²(πx) sin²(πy)`, plus `(sin πx sin πy, 0)` for `gstokes_div`;
/// pressure `sin(πx) cos(πy)` has zero mean on the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub id: CaseId,
}

pub fn manufactured_solution(id: &str) -> Result<ManufacturedCase> {
    Ok(ManufacturedCase { id: id.parse()? })
}

impl ManufacturedCase {
    pub fn new(id: CaseId) -> Self {
        Self { id }
    }

    pub fn kind(&self) -> ProblemKind {
        match self.id {
            CaseId::StokesTrig => ProblemKind::Stokes,
            CaseId::NseTrig => ProblemKind::Nse,
            CaseId::GstokesDiv => ProblemKind::GStokes,
        }
    }

    fn extra(&self) -> bool {
        self.id == CaseId::GstokesDiv
    }

    pub fn velocity(&self, x: f64, y: f64) -> [f64; 2] {
        let (a, b) = (PI * x, PI * y);
        let mut u = [
            PI * a.sin().powi(2) * (2.0 * b).sin(),
            -PI * (2.0 * a).sin() * b.sin().powi(2),
        ];
        if self.extra() {
            u[0] += a.sin() * b.sin();
        }
        u
    }

    /// `grad[c][d] = ∂_d u_c`.
    pub fn velocity_grad(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let (a, b) = (PI * x, PI * y);
        let p2 = PI * PI;
        let mut g = [
            [
                p2 * (2.0 * a).sin() * (2.0 * b).sin(),
                2.0 * p2 * a.sin().powi(2) * (2.0 * b).cos(),
            ],
            [
                -2.0 * p2 * (2.0 * a).cos() * b.sin().powi(2),
                -p2 * (2.0 * a).sin() * (2.0 * b).sin(),
            ],
        ];
        if self.extra() {
            g[0][0] += PI * a.cos() * b.sin();
            g[0][1] += PI * a.sin() * b.cos();
        }
        g
    }

    pub fn velocity_laplacian(&self, x: f64, y: f64) -> [f64; 2] {
        let (a, b) = (PI * x, PI * y);
        let p3 = PI * PI * PI;
        let mut l = [
            2.0 * p3 * (2.0 * a).cos() * (2.0 * b).sin()
                - 4.0 * p3 * a.sin().powi(2) * (2.0 * b).sin(),
            4.0 * p3 * (2.0 * a).sin() * b.sin().powi(2)
                - 2.0 * p3 * (2.0 * a).sin() * (2.0 * b).cos(),
        ];
        if self.extra() {
            l[0] -= 2.0 * PI * PI * a.sin() * b.sin();
        }
        l
    }

    pub fn pressure(&self, x: f64, y: f64) -> f64 {
        (PI * x).sin() * (PI * y).cos()
    }

    pub fn pressure_grad(&self, x: f64, y: f64) -> [f64; 2] {
        let (a, b) = (PI * x, PI * y);
        [PI * a.cos() * b.cos(), -PI * a.sin() * b.sin()]
    }

    pub fn divergence(&self, x: f64, y: f64) -> f64 {
        if self.extra() {
            PI * (PI * x).cos() * (PI * y).sin()
        } else {
            0.0
        }
    }

    /// Strong-form force `−μΔu + ∇p`, plus `(u·∇)u + ½ u div u` for `nse_trig`.
    pub fn force(&self, mu: f64, x: f64, y: f64) -> [f64; 2] {
        let l = self.velocity_laplacian(x, y);
        let gp = self.pressure_grad(x, y);
        let mut f = [-mu * l[0] + gp[0], -mu * l[1] + gp[1]];
        if self.id == CaseId::NseTrig {
            let u = self.velocity(x, y);
            let g = self.velocity_grad(x, y);
            let div = g[0][0] + g[1][1];
            for c in 0..2 {
                f[c] += u[0] * g[c][0] + u[1] * g[c][1] + 0.5 * div * u[c];
            }
        }
        f
    }

    pub fn data(&self, mu: f64) -> ProblemData {
        let case = *self;
        ProblemData {
            force: Some(Box::new(move |x, y| case.force(mu, x, y))),
            divergence: self
                .extra()
                .then(|| Box::new(move |x, y| case.divergence(x, y)) as _),
            advection: None,
            dirichlet: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub u_l2: f64,
    pub u_h1: f64,
    pub p_l2: f64,
}

/// `‖u_h − u*‖_{L²}`, `‖∇(u_h − u*)‖_{L²}`, `‖p_h − p*‖_{L²}` with the
/// spaces' degree-`2k+2` rule.
pub fn error_norms(spaces: &Spaces, x: &SaddleState, case: &ManufacturedCase) -> ErrorNorms {
    let (mut eu, mut eg, mut ep) = (0.0, 0.0, 0.0);
    for cell in 0..spaces.mesh().num_cells() {
        let tab = spaces.tabulate(cell, &spaces.quad);
        for q in 0..tab.nq() {
            let [px, py] = tab.x[q];
            let (uv, ug) = spaces.velocity_at(&x.u, cell, &tab, q);
            let (pv, _) = spaces.scalar_at(&x.p, cell, &tab, q);
            let ue = case.velocity(px, py);
            let ge = case.velocity_grad(px, py);
            let w = tab.jxw[q];
            eu += w * ((uv[0] - ue[0]).powi(2) + (uv[1] - ue[1]).powi(2));
            for c in 0..2 {
                for d in 0..2 {
                    eg += w * (ug[c][d] - ge[c][d]).powi(2);
                }
            }
            ep += w * (pv - case.pressure(px, py)).powi(2);
        }
    }
    ErrorNorms {
        u_l2: eu.sqrt(),
        u_h1: eg.sqrt(),
        p_l2: ep.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub errors: ErrorNorms,
    pub eoc_u_l2: Option<f64>,
    pub eoc_u_h1: Option<f64>,
    pub eoc_p_l2: Option<f64>,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub case: CaseId,
    pub rows: Vec<ConvergenceRow>,
    /// Set when a level failed; rows before it are kept.
    pub failure: Option<String>,
}

pub const CSV_HEADER: &str = "n,h,eu_l2,eu_h1,ep_l2,eoc_u_l2,eoc_u_h1,eoc_p_l2";

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6e},{:.6e},{:.6e},{:.6e},{},{},{}",
                r.n,
                r.h,
                r.errors.u_l2,
                r.errors.u_h1,
                r.errors.p_l2,
                opt(r.eoc_u_l2),
                opt(r.eoc_u_h1),
                opt(r.eoc_p_l2)
            );
        }
        s
    }

    pub fn last_eoc(&self) -> Option<(f64, f64, f64)> {
        let r = self.rows.last()?;
        Some((r.eoc_u_l2?, r.eoc_u_h1?, r.eoc_p_l2?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub mu: f64,
    pub k: usize,
    pub stab: StabilizationConfig,
}

fn eoc(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Solves `case` on unit-square meshes with `n ∈ levels` and tabulates
/// errors and experimental orders of convergence.
pub fn run_convergence(
    case: &ManufacturedCase,
    cfg: &ConvergenceConfig,
    levels: &[usize],
) -> Result<ConvergenceTable> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "levels must be nonempty and strictly increasing".into(),
        ));
    }
    let spec = ProblemSpec {
        kind: case.kind(),
        mu: cfg.mu,
        stab: cfg.stab,
    };
    let mut table = ConvergenceTable {
        case: case.id,
        rows: Vec::new(),
        failure: None,
    };
    for &n in levels {
        let outcome = (|| -> Result<ConvergenceRow> {
            let mesh = Mesh::unit_square(n, cfg.stab.needs_patches())?;
            let problem = Problem::assemble(&mesh, cfg.k, spec, &case.data(cfg.mu))?;
            let (x, log) = solve_nonlinear(&problem, &NewtonOptions::default())?;
            if !log.converged {
                return Err(Error::Solver(format!(
                    "Newton did not converge on n = {n} (final residual {:e})",
                    log.residuals.last().copied().unwrap_or(f64::NAN)
                )));
            }
            Ok(ConvergenceRow {
                n,
                h: mesh.h_max(),
                errors: error_norms(&problem.spaces, &x, case),
                eoc_u_l2: None,
                eoc_u_h1: None,
                eoc_p_l2: None,
                newton_iterations: log.iterations,
            })
        })();
        match outcome {
            Ok(mut row) => {
                if let Some(prev) = table.rows.last() {
                    row.eoc_u_l2 = Some(eoc(prev.errors.u_l2, row.errors.u_l2));
                    row.eoc_u_h1 = Some(eoc(prev.errors.u_h1, row.errors.u_h1));
                    row.eoc_p_l2 = Some(eoc(prev.errors.p_l2, row.errors.p_l2));
                }
                table.rows.push(row);
            }
            Err(e) => {
                table.failure = Some(format!("n = {n}: {e}"));
                break;
            }
        }
    }
    Ok(table)
}

/// Regularized lid velocity `(16x²(1−x)², 0)` on `y = 1`, no-slip elsewhere.
pub fn cavity_lid(x: f64, y: f64) -> [f64; 2] {
    if (y - 1.0).abs() < 1e-12 {
        [16.0 * x * x * (1.0 - x).powi(2), 0.0]
    } else {
        [0.0, 0.0]
    }
}

pub fn cavity_problem(
    mesh: &Mesh,
    k: usize,
    mu: f64,
    stab: StabilizationConfig,
) -> Result<Problem> {
    let spec = ProblemSpec {
        kind: ProblemKind::Nse,
        mu,
        stab,
    };
    let data = ProblemData {
        dirichlet: Some(Box::new(cavity_lid)),
        ..ProblemData::default()
    };
    Problem::assemble(mesh, k, spec, &data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fourth-order central differences of the closed forms.
    fn fd_grad(f: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> [f64; 2] {
        let h = 1e-3;
        let d = |g: &dyn Fn(f64) -> f64| {
            (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h)
        };
        [d(&|s| f(x + s, y)), d(&|s| f(x, y + s))]
    }

    #[test]
    fn closed_forms_match_finite_differences() {
        for id in [CaseId::StokesTrig, CaseId::NseTrig, CaseId::GstokesDiv] {
            let c = ManufacturedCase::new(id);
            for &(x, y) in &[(0.13, 0.71), (0.5, 0.5), (0.82, 0.27)] {
                let g = c.velocity_grad(x, y);
                for comp in 0..2 {
                    let fd = fd_grad(|a, b| c.velocity(a, b)[comp], x, y);
                    assert!((fd[0] - g[comp][0]).abs() < 1e-7 && (fd[1] - g[comp][1]).abs() < 1e-7);
                    let lap_fd = fd_grad(|a, b| c.velocity_grad(a, b)[comp][0], x, y)[0]
                        + fd_grad(|a, b| c.velocity_grad(a, b)[comp][1], x, y)[1];
                    assert!((lap_fd - c.velocity_laplacian(x, y)[comp]).abs() < 1e-6);
                }
                let gp = fd_grad(|a, b| c.pressure(a, b), x, y);
                let ge = c.pressure_grad(x, y);
                assert!((gp[0] - ge[0]).abs() < 1e-8 && (gp[1] - ge[1]).abs() < 1e-8);
                assert!((g[0][0] + g[1][1] - c.divergence(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nse_force_at_center() {
        let c = ManufacturedCase::new(CaseId::NseTrig);
        for mu in [1.0, 0.1] {
            let f = c.force(mu, 0.5, 0.5);
            assert!(f[0].abs() < 1e-12);
            assert!((f[1] + PI).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_case_is_rejected() {
        assert!(manufactured_solution("taylor_green").is_err());
        assert_eq!(
            manufactured_solution("gstokes_div").unwrap().id,
            CaseId::GstokesDiv
        );
    }

    #[test]
    fn csv_header_and_blank_first_eoc() {
        let t = ConvergenceTable {
            case: CaseId::StokesTrig,
            rows: vec![ConvergenceRow {
                n: 4,
                h: 0.25,
                errors: ErrorNorms {
                    u_l2: 1.0,
                    u_h1: 2.0,
                    p_l2: 3.0,
                },
                eoc_u_l2: None,
                eoc_u_h1: None,
                eoc_p_l2: None,
                newton_iterations: 0,
            }],
            failure: None,
        };
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert!(lines.next().unwrap().ends_with(",,,"));
    }
}
