//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so the verdict lines are always shown.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stabfem::assembly::convection_residual;
use stabfem::coercivity::{
    check_mapped_coercivity, check_sign_condition, estimate_alpha, estimate_cn, estimate_infsup,
    lab_setup, random_velocity, residual_map, DEFAULT_RADIUS_GRID,
};
use stabfem::harness::{
    cavity_problem, run_convergence, CaseId, ConvergenceConfig, ManufacturedCase,
};
use stabfem::linalg::{sym_eigen, to_dense, SparseCholesky};
use stabfem::mesh::Mesh;
use stabfem::solver::{
    solve_nonlinear, NewtonOptions, Problem, ProblemData, ProblemKind, ProblemSpec, RieszMap,
};
use stabfem::sparse::dot;
use stabfem::stabilization::{PressureStab, StabilizationConfig, VelocityStab};

type Verdict = Result<String, String>;

/// Id, title, time budget in seconds, check.
type Criterion = (&'static str, &'static str, f64, fn() -> Verdict);

fn stab(p: PressureStab, v: VelocityStab) -> StabilizationConfig {
    StabilizationConfig::pressure(p).with_velocity(v)
}

fn problem(
    n: usize,
    k: usize,
    kind: ProblemKind,
    mu: f64,
    st: StabilizationConfig,
    data: &ProblemData,
) -> Problem {
    let mesh = Mesh::unit_square(n, st.needs_patches()).expect("mesh");
    Problem::assemble(&mesh, k, ProblemSpec { kind, mu, stab: st }, data).expect("assembly")
}

fn stokes(n: usize, k: usize, mu: f64, st: StabilizationConfig) -> Problem {
    problem(n, k, ProblemKind::Stokes, mu, st, &ProblemData::default())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_alpha() -> Verdict {
    let mut worst: f64 = 0.0;
    for mu in [1.0, 0.01] {
        for n in [4, 8] {
            let p = stokes(n, 1, mu, stab(PressureStab::Bp, VelocityStab::None));
            let a = estimate_alpha(&p.blocks).map_err(|e| e.to_string())?;
            let rel = (a - mu).abs() / mu;
            worst = worst.max(rel);
            ensure(rel <= 1e-8, || format!("mu = {mu}, n = {n}: alpha = {a}"))?;
        }
    }
    Ok(format!("max relative deviation {worst:.1e}"))
}

fn c2_t_psd() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lines = Vec::new();
    for kind in [PressureStab::Bp, PressureStab::Bh, PressureStab::Lps] {
        for n in [8, 16] {
            let p = stokes(n, 1, 1.0, stab(kind, VelocityStab::None));
            let (vals, _) = sym_eigen(&to_dense(&p.t)).map_err(|e| e.to_string())?;
            let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let min = vals[0];
            ensure(min >= -1e-10 * norm, || {
                format!("{kind:?} n = {n}: eigenvalue {min:e}, |T| = {norm:e}")
            })?;
            for _ in 0..100 {
                let q: Vec<f64> = (0..p.num_pressure())
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let qq = p.blocks.m_q.bilinear(&q, &q);
                let tq = p.t.bilinear(&q, &q);
                ensure(tq >= -1e-12 * qq, || {
                    format!("{kind:?} n = {n}: p'Tp = {tq:e}")
                })?;
            }
            lines.push(format!("{kind:?}/{n}: {min:.1e}"));
        }
    }
    Ok(format!("min eigenvalues {}", lines.join(", ")))
}

fn c3_skew() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_skew, mut worst_stab) = (0.0f64, f64::INFINITY);
    for k in [1, 2] {
        for v in [VelocityStab::None, VelocityStab::Lps, VelocityStab::Supg] {
            let p = problem(
                8,
                k,
                ProblemKind::Nse,
                1.0,
                stab(PressureStab::Bp, v),
                &ProblemData::default(),
            );
            for _ in 0..100 {
                let amp = 10f64.powf(rng.random_range(-1.0..1.0));
                let u: Vec<f64> = random_velocity(&p.spaces, &p.blocks, &mut rng)
                    .iter()
                    .map(|x| amp * x)
                    .collect();
                let un = p.blocks.m_v.bilinear(&u, &u).sqrt();
                let c = dot(
                    &convection_residual(&p.spaces, &u).map_err(|e| e.to_string())?,
                    &u,
                );
                let rel = c.abs() / un.powi(3);
                worst_skew = worst_skew.max(rel);
                ensure(rel <= 1e-10, || {
                    format!("k = {k}: |<C(u),u>| / |u|^3 = {rel:e}")
                })?;
                let s = dot(
                    &p.stabilizer
                        .velocity_residual(&p.spaces, &u)
                        .map_err(|e| e.to_string())?,
                    &u,
                );
                worst_stab = worst_stab.min(c + s);
                ensure(c + s >= -1e-12, || {
                    format!("k = {k}, {v:?}: <C(u)+S(u),u> = {:e}", c + s)
                })?;
            }
        }
    }
    Ok(format!(
        "max |<C(u),u>|/|u|^3 = {worst_skew:.1e}, min <C(u)+S(u),u> = {worst_stab:.1e}"
    ))
}

fn c4_cn() -> Verdict {
    let mut out = Vec::new();
    for v in [VelocityStab::None, VelocityStab::Lps, VelocityStab::Supg] {
        let p = problem(
            8,
            1,
            ProblemKind::Nse,
            1.0,
            stab(PressureStab::Bp, v),
            &ProblemData::default(),
        );
        let a =
            estimate_cn(&p.spaces, &p.blocks, &p.stabilizer, 50, 4).map_err(|e| e.to_string())?;
        let b =
            estimate_cn(&p.spaces, &p.blocks, &p.stabilizer, 50, 4).map_err(|e| e.to_string())?;
        ensure(a.max_ratio == b.max_ratio, || {
            format!("{v:?}: not reproducible")
        })?;
        ensure(a.c_n.is_finite() && a.c_n > 0.0, || {
            format!("{v:?}: c_N = {}", a.c_n)
        })?;
        if v == VelocityStab::None {
            let hi = a.max_ratio.iter().copied().fold(0.0, f64::max);
            let lo = a.max_ratio.iter().copied().fold(f64::INFINITY, f64::min);
            ensure(hi <= 1.05 * lo, || {
                format!("ratios {:?} differ by more than 5%", a.max_ratio)
            })?;
        }
        out.push(format!("{v:?}: {:.3e}", a.c_n));
    }
    Ok(format!("c_N {}", out.join(", ")))
}

fn c5_infsup() -> Verdict {
    let mut gammas = Vec::new();
    for n in [8, 16, 32] {
        let bp = stokes(n, 1, 1.0, stab(PressureStab::Bp, VelocityStab::None));
        let g = estimate_infsup(&bp.spaces, &bp.blocks, &bp.t, 20, 5)
            .map_err(|e| e.to_string())?
            .gamma_stab;
        let none = stokes(n, 1, 1.0, stab(PressureStab::None, VelocityStab::None));
        let g0 = estimate_infsup(&none.spaces, &none.blocks, &none.t, 20, 5)
            .map_err(|e| e.to_string())?
            .gamma_stab;
        ensure(g > 0.0 && g > g0, || {
            format!("n = {n}: gamma(bp) = {g}, gamma(none) = {g0}")
        })?;
        gammas.push(g);
    }
    let hi = gammas.iter().copied().fold(0.0, f64::max);
    let lo = gammas.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(hi / lo <= 2.0, || format!("gamma spread {gammas:?}"))?;
    Ok(format!(
        "gamma_stab(bp) at n = 8/16/32: {:.4} {:.4} {:.4}",
        gammas[0], gammas[1], gammas[2]
    ))
}

fn c6_mapped() -> Verdict {
    let mut out = Vec::new();
    for kind in [PressureStab::Bp, PressureStab::Bh, PressureStab::Lps] {
        let p = stokes(8, 1, 1.0, stab(kind, VelocityStab::None));
        let lab = lab_setup(&p, 100, 6).map_err(|e| e.to_string())?;
        let rep = check_mapped_coercivity(
            &p.spaces,
            &p.blocks,
            &p.t,
            &lab.constants,
            &lab.infsup,
            200,
            6,
        )
        .map_err(|e| e.to_string())?;
        let beta = rep.beta_min.unwrap_or(f64::NAN);
        let vel = rep.beta_min_velocity.unwrap_or(f64::NAN);
        ensure(beta > 0.0, || format!("{kind:?}: beta_min = {beta}"))?;
        ensure(vel >= lab.alpha - 1e-10, || {
            format!("{kind:?}: p = 0 slice {vel} < alpha {}", lab.alpha)
        })?;
        out.push(format!("{kind:?}: {beta:.3}"));
    }
    Ok(format!("beta_min {}", out.join(", ")))
}

fn c7_convergence() -> Verdict {
    let mut out = Vec::new();
    for (id, mu) in [(CaseId::StokesTrig, 1.0), (CaseId::NseTrig, 0.1)] {
        let cfg = ConvergenceConfig {
            mu,
            k: 1,
            stab: stab(PressureStab::Bp, VelocityStab::None),
        };
        let table = run_convergence(&ManufacturedCase::new(id), &cfg, &[8, 16, 32])
            .map_err(|e| e.to_string())?;
        if let Some(f) = &table.failure {
            return Err(format!("{}: {f}", id.name()));
        }
        for row in table.rows.iter().skip(1) {
            let (l2, h1, p) = (
                row.eoc_u_l2.unwrap(),
                row.eoc_u_h1.unwrap(),
                row.eoc_p_l2.unwrap(),
            );
            ensure((0.8..=1.2).contains(&h1), || {
                format!("{} n = {}: H1 EOC {h1}", id.name(), row.n)
            })?;
            ensure((1.6..=2.2).contains(&l2), || {
                format!("{} n = {}: L2 EOC {l2}", id.name(), row.n)
            })?;
            ensure(p >= 0.8, || {
                format!("{} n = {}: pressure EOC {p}", id.name(), row.n)
            })?;
        }
        let (l2, h1, p) = table.last_eoc().unwrap();
        out.push(format!(
            "{}: u_H1 {h1:.2}, u_L2 {l2:.2}, p_L2 {p:.2}",
            id.name()
        ));
    }
    Ok(out.join("; "))
}

/// `‖f‖_{V'}` computed directly: `sqrt(f_iᵀ M_ii⁻¹ f_i)` over interior DOFs.
fn dual_norm(p: &Problem) -> f64 {
    let fi = p.spaces.velocity.restrict(&p.f);
    let chol = SparseCholesky::new(&p.blocks.m_v_ii).expect("SPD");
    dot(&fi, &chol.solve(&fi)).sqrt()
}

fn c8_energy() -> Verdict {
    let case = ManufacturedCase::new(CaseId::NseTrig);
    let mut out = Vec::new();
    for mu in [1.0, 0.1] {
        let p = problem(
            16,
            1,
            ProblemKind::Nse,
            mu,
            stab(PressureStab::Bp, VelocityStab::None),
            &case.data(mu),
        );
        let (x, log) = solve_nonlinear(&p, &NewtonOptions::default()).map_err(|e| e.to_string())?;
        ensure(log.converged, || {
            format!("mu = {mu}: Newton did not converge")
        })?;
        let un = p.blocks.m_v.bilinear(&x.u, &x.u).sqrt();
        let fd = dual_norm(&p);
        let alpha = estimate_alpha(&p.blocks).map_err(|e| e.to_string())?;
        let r1 = 4.0 * fd / alpha;
        ensure(un <= fd / mu + 1e-8, || {
            format!("mu = {mu}: |u| = {un} > |f|'/mu = {}", fd / mu)
        })?;
        ensure(un <= r1 / 4.0 + 1e-8, || {
            format!("mu = {mu}: |u| = {un} > r1/4 = {}", r1 / 4.0)
        })?;
        out.push(format!("mu = {mu}: |u|_V = {un:.4} <= {:.4}", fd / mu));
    }
    Ok(out.join("; "))
}

fn c9_sign() -> Verdict {
    let case = ManufacturedCase::new(CaseId::NseTrig);
    let mut out = Vec::new();
    for v in [VelocityStab::None, VelocityStab::Lps, VelocityStab::Supg] {
        let p = problem(
            8,
            1,
            ProblemKind::Nse,
            1.0,
            stab(PressureStab::Bp, v),
            &case.data(1.0),
        );
        let lab = lab_setup(&p, 100, 9).map_err(|e| e.to_string())?;
        let rep = check_sign_condition(
            &p,
            &lab.constants,
            &lab.infsup,
            &DEFAULT_RADIUS_GRID,
            100,
            9,
        )
        .map_err(|e| e.to_string())?;
        ensure(rep.sign_condition.len() == 400, || {
            format!("{} samples", rep.sign_condition.len())
        })?;
        let fd = dual_norm(&p);
        let base = if lab.constants.r > 0.0 {
            lab.constants.r
        } else {
            1.0
        };
        let mut worst = f64::INFINITY;
        for s in &rep.sign_condition {
            let rho = s.radius_factor * base;
            ensure((s.norm - rho).abs() <= 1e-12 * rho, || {
                format!("sample radius {} != {rho}", s.norm)
            })?;
            let floor = -1e-8 * (1.0 + rho * rho) * fd.max(1.0);
            worst = worst.min(s.margin / (rho * rho));
            ensure(s.margin >= floor, || {
                format!("{v:?}: margin {} at radius {rho}", s.margin)
            })?;
        }
        ensure(rep.pass, || format!("{v:?}: report verdict false"))?;
        out.push(format!("{v:?}: min margin/|x|^2 {worst:.3}"));
    }
    Ok(out.join(", "))
}

fn c10_cavity() -> Verdict {
    let mesh = Mesh::unit_square(16, false).map_err(|e| e.to_string())?;
    let p = cavity_problem(&mesh, 1, 0.05, stab(PressureStab::Bp, VelocityStab::Supg))
        .map_err(|e| e.to_string())?;
    let (x, log) = solve_nonlinear(&p, &NewtonOptions::default()).map_err(|e| e.to_string())?;
    let last = *log.residuals.last().unwrap();
    ensure(
        log.converged && last <= 1e-8 && log.iterations <= 25,
        || {
            format!(
                "converged = {}, {} steps, residual {last:e}",
                log.converged, log.iterations
            )
        },
    )?;
    let riesz = RieszMap::new(&p.spaces, &p.blocks).map_err(|e| e.to_string())?;
    let r = residual_map(&p, &riesz, &x)
        .map_err(|e| e.to_string())?
        .norm;
    ensure(r <= 1e-8, || format!("|R(x_h)| = {r:e}"))?;
    // and the converse: a perturbed state is not a zero of R
    let mut y = x.clone();
    let mid = p.spaces.velocity.interior_dofs[p.num_interior() / 2];
    y.u[mid] += 1e-3;
    let ry = residual_map(&p, &riesz, &y)
        .map_err(|e| e.to_string())?
        .norm;
    ensure(ry > 1e-6, || {
        format!("|R| of a perturbed state is only {ry:e}")
    })?;
    Ok(format!(
        "{} Newton steps, residual {last:.1e}, |R(x_h)| = {r:.1e}",
        log.iterations
    ))
}

fn c11_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("check{i}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_stabfem"))
            .args([
                "check",
                "--n",
                "8",
                "--k",
                "1",
                "--stab",
                "bp",
                "--no-timestamp",
                "--out",
            ])
            .arg(&path)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("run {i} exited with {status}"))?;
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || "reports differ".into())?;
    Ok(format!("two runs, {} identical bytes", outputs[0].len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1", "coercivity constant equals mu", 5.0, c1_alpha),
        (
            "2",
            "pressure stabilization is positive semidefinite",
            10.0,
            c2_t_psd,
        ),
        (
            "3",
            "skew convection, nonnegative velocity stabilization",
            10.0,
            c3_skew,
        ),
        ("4", "growth constant of the nonlinearity", 20.0, c4_cn),
        (
            "5",
            "stabilized inf-sup constant is uniform",
            60.0,
            c5_infsup,
        ),
        ("6", "linear mapped coercivity", 30.0, c6_mapped),
        ("7", "convergence rates", 180.0, c7_convergence),
        ("8", "a priori energy bound", 60.0, c8_energy),
        ("9", "sign condition outside the radius", 60.0, c9_sign),
        (
            "10",
            "cavity Newton solve and residual map",
            60.0,
            c10_cavity,
        ),
        (
            "11",
            "byte-identical check reports",
            f64::INFINITY,
            c11_determinism,
        ),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let verdict = f();
        let secs = t.elapsed().as_secs_f64();
        let verdict = verdict.and_then(|msg| {
            if secs <= budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {secs:.1} s, budget {budget} s"))
            }
        });
        match verdict {
            Ok(msg) => println!("PASS criterion {id:>2} ({name}): {msg} [{secs:.2} s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}): {msg} [{secs:.2} s]");
            }
        }
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
