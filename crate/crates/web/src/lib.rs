//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Every export returns a JSON string; errors become JS exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use stabfem::coercivity::{check_sign_condition, estimate_infsup, lab_setup};
use stabfem::harness::{cavity_problem, CaseId, ManufacturedCase};
use stabfem::mesh::Mesh;
use stabfem::solver::{
    solve_nonlinear, NewtonOptions, Problem, ProblemData, ProblemKind, ProblemSpec,
};
use stabfem::stabilization::{PressureStab, StabilizationConfig, VelocityStab};

const MAX_N: usize = 48;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

fn check_n(n: usize) -> Result<(), JsValue> {
    if (2..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(js_err(format!("n must be in 2..={MAX_N}")))
    }
}

#[derive(Serialize)]
struct CavityOut {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    /// Velocity and pressure at the vertices.
    velocity: Vec<[f64; 2]>,
    pressure: Vec<f64>,
    residuals: Vec<f64>,
    converged: bool,
}

/// Regularized lid-driven cavity with P1-P1, returning nodal fields.
#[wasm_bindgen]
pub fn solve_cavity(n: usize, mu: f64, pressure: &str, velocity: &str) -> Result<String, JsValue> {
    check_n(n)?;
    let p: PressureStab = pressure.parse().map_err(js_err)?;
    let v: VelocityStab = velocity.parse().map_err(js_err)?;
    let stab = StabilizationConfig::pressure(p).with_velocity(v);
    let mesh = Mesh::unit_square(n, stab.needs_patches()).map_err(js_err)?;
    let problem = cavity_problem(&mesh, 1, mu, stab).map_err(js_err)?;
    let (x, log) = solve_nonlinear(&problem, &NewtonOptions::default()).map_err(js_err)?;
    let nv = mesh.num_vertices();
    to_json(&CavityOut {
        vertices: mesh.vertices().to_vec(),
        cells: mesh.cells().to_vec(),
        velocity: (0..nv).map(|i| [x.u[2 * i], x.u[2 * i + 1]]).collect(),
        pressure: x.p[..nv].to_vec(),
        residuals: log.residuals,
        converged: log.converged,
    })
}

#[derive(Serialize)]
struct SweepPoint {
    delta0_p: f64,
    gamma_stab: f64,
    c_t: Option<f64>,
}

/// Stabilized inf-sup constant as a function of the pressure weight.
#[wasm_bindgen]
pub fn infsup_sweep(n: usize, pressure: &str, deltas: Vec<f64>) -> Result<String, JsValue> {
    check_n(n)?;
    let kind: PressureStab = pressure.parse().map_err(js_err)?;
    let mesh = Mesh::unit_square(n, kind == PressureStab::Lps).map_err(js_err)?;
    let mut out = Vec::with_capacity(deltas.len());
    for d in deltas {
        let mut stab = StabilizationConfig::pressure(kind);
        stab.delta0_p = d;
        let spec = ProblemSpec {
            kind: ProblemKind::Stokes,
            mu: 1.0,
            stab,
        };
        let p = Problem::assemble(&mesh, 1, spec, &ProblemData::default()).map_err(js_err)?;
        let est = estimate_infsup(&p.spaces, &p.blocks, &p.t, 20, 1).map_err(js_err)?;
        out.push(SweepPoint {
            delta0_p: d,
            gamma_stab: est.gamma_stab,
            c_t: est.c_t.is_finite().then_some(est.c_t),
        });
    }
    to_json(&out)
}

#[derive(Serialize)]
struct MarginPoint {
    radius: f64,
    relative_margin: f64,
    pass: bool,
}

#[derive(Serialize)]
struct MarginsOut {
    r: f64,
    points: Vec<MarginPoint>,
    pass: bool,
    note: Option<String>,
}

/// Sign-condition margins `⟨A(x) − b, SΨ(x)⟩ / ‖x‖²` for the manufactured
/// Navier-Stokes data.
#[wasm_bindgen]
pub fn sign_margins(
    n: usize,
    mu: f64,
    velocity: &str,
    samples: usize,
    seed: u64,
) -> Result<String, JsValue> {
    check_n(n)?;
    let v: VelocityStab = velocity.parse().map_err(js_err)?;
    let stab = StabilizationConfig::pressure(PressureStab::Bp).with_velocity(v);
    let mesh = Mesh::unit_square(n, stab.needs_patches()).map_err(js_err)?;
    let case = ManufacturedCase::new(CaseId::NseTrig);
    let spec = ProblemSpec {
        kind: ProblemKind::Nse,
        mu,
        stab,
    };
    let p = Problem::assemble(&mesh, 1, spec, &case.data(mu)).map_err(js_err)?;
    let lab = lab_setup(&p, samples.max(1), seed).map_err(js_err)?;
    let grid = [1.0, 2.0, 5.0, 10.0];
    let rep = check_sign_condition(&p, &lab.constants, &lab.infsup, &grid, samples.max(1), seed)
        .map_err(js_err)?;
    to_json(&MarginsOut {
        r: lab.constants.r,
        points: rep
            .sign_condition
            .iter()
            .map(|s| MarginPoint {
                radius: s.norm,
                relative_margin: s.margin / (s.norm * s.norm),
                pass: s.margin >= s.threshold,
            })
            .collect(),
        pass: rep.pass,
        note: rep.note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_return_json() {
        let cav: serde_json::Value =
            serde_json::from_str(&solve_cavity(6, 0.1, "bp", "supg").unwrap()).unwrap();
        assert_eq!(cav["converged"], true);
        assert_eq!(cav["velocity"].as_array().unwrap().len(), 49);
        let sweep: serde_json::Value =
            serde_json::from_str(&infsup_sweep(4, "bp", vec![0.01, 0.1]).unwrap()).unwrap();
        let g: Vec<f64> = sweep
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["gamma_stab"].as_f64().unwrap())
            .collect();
        assert!(g[1] >= g[0] && g[0] > 0.0);
        let m: serde_json::Value =
            serde_json::from_str(&sign_margins(4, 1.0, "none", 5, 3).unwrap()).unwrap();
        assert_eq!(m["pass"], true);
        assert_eq!(m["points"].as_array().unwrap().len(), 20);
    }
}
