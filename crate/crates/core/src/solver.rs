//! Linear and nonlinear saddle-point solves, Riesz maps and dual norms.
//!
//! Unknowns of the algebraic system are `z = [u_interior, p, λ]` where `λ`
//! is the multiplier of the zero-mean pressure constraint:
//!
//! ```text
//! [ L + N'(u)  −Bᵀ   0 ] [u]   [f]
//! [ B           T    m ] [p] = [g]
//! [ 0           mᵀ   0 ] [λ]   [0]
//! ```

use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    advection_matrix, advection_residual, assemble_stokes_blocks, convection_jacobian,
    convection_residual, OperatorBlocks,
};
use crate::error::{Error, Result};
use crate::fe_space::{build_spaces, Spaces};
use crate::linalg::{solve_refined, sym_eigen, SparseCholesky, SparseLu};
use crate::mesh::Mesh;
use crate::sparse::{dot, norm2, CsrMatrix, TripletBuilder};
use crate::stabilization::{StabilizationConfig, Stabilizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Stokes,
    /// Stokes with prescribed divergence `div u = g`.
    GStokes,
    Oseen,
    Nse,
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stokes" => Ok(ProblemKind::Stokes),
            "gstokes" => Ok(ProblemKind::GStokes),
            "oseen" => Ok(ProblemKind::Oseen),
            "nse" => Ok(ProblemKind::Nse),
            _ => Err(Error::Config(format!(
                "unknown problem '{s}' (stokes, gstokes, oseen, nse)"
            ))),
        }
    }
}

impl ProblemKind {
    pub fn is_nonlinear(self) -> bool {
        self == ProblemKind::Nse
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub mu: f64,
    pub stab: StabilizationConfig,
}

pub type ScalarFn = Box<dyn Fn(f64, f64) -> f64>;
pub type VectorFn = Box<dyn Fn(f64, f64) -> [f64; 2]>;

/// Analytic data of a problem. Missing entries are zero.
#[derive(Default)]
pub struct ProblemData {
    pub force: Option<VectorFn>,
    pub divergence: Option<ScalarFn>,
    /// Oseen advection field; projected onto discretely solenoidal fields.
    pub advection: Option<VectorFn>,
    /// Dirichlet values, sampled at boundary nodes only.
    pub dirichlet: Option<VectorFn>,
}

/// Coefficient vectors of a discrete solution. `u` carries all velocity
/// DOFs including boundary values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: f64,
}

impl SaddleState {
    pub fn zeros(spaces: &Spaces) -> Self {
        Self {
            u: vec![0.0; spaces.velocity.dim()],
            p: vec![0.0; spaces.pressure.dim()],
            lambda: 0.0,
        }
    }
}

/// A fully assembled problem on fixed spaces.
pub struct Problem {
    pub spec: ProblemSpec,
    pub spaces: Spaces,
    pub blocks: OperatorBlocks,
    pub t: CsrMatrix,
    pub stabilizer: Stabilizer,
    /// Velocity load on all DOFs.
    pub f: Vec<f64>,
    /// Pressure load `∫ g q`.
    pub g: Vec<f64>,
    /// Discretely solenoidal advection field (Oseen only).
    pub advection: Option<Vec<f64>>,
    /// Boundary values on boundary DOFs, zero elsewhere.
    pub lift: Vec<f64>,
}

impl Problem {
    pub fn assemble(
        mesh: &Mesh,
        k: usize,
        spec: ProblemSpec,
        data: &ProblemData,
    ) -> Result<Problem> {
        let spaces = build_spaces(mesh, k)?;
        Self::on_spaces(spaces, spec, data)
    }

    pub fn on_spaces(spaces: Spaces, spec: ProblemSpec, data: &ProblemData) -> Result<Problem> {
        if !(spec.mu > 0.0 && spec.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu must be positive, got {}",
                spec.mu
            )));
        }
        let blocks = assemble_stokes_blocks(&spaces, spec.mu)?;
        let stabilizer = Stabilizer::new(&spaces, spec.stab)?;
        let t = stabilizer.pressure_matrix(&spaces);
        let f = match &data.force {
            Some(f) => spaces.load_velocity(f),
            None => vec![0.0; spaces.velocity.dim()],
        };
        let g = match &data.divergence {
            Some(g) => spaces.load_scalar(g),
            None => vec![0.0; spaces.pressure.dim()],
        };
        let mut lift = vec![0.0; spaces.velocity.dim()];
        if let Some(d) = &data.dirichlet {
            for (node, x) in spaces.nodes().iter().enumerate() {
                if spaces.is_boundary_node(node) {
                    let v = d(x[0], x[1]);
                    lift[2 * node] = v[0];
                    lift[2 * node + 1] = v[1];
                }
            }
        }
        let advection = match (spec.kind, &data.advection) {
            (ProblemKind::Oseen, Some(b)) => {
                let raw = spaces.interpolate_velocity(b);
                Some(solenoidal_projection(&spaces, &blocks, &raw)?)
            }
            (ProblemKind::Oseen, None) => {
                return Err(Error::Config(
                    "the Oseen problem needs an advection field".into(),
                ))
            }
            _ => None,
        };
        Ok(Problem {
            spec,
            spaces,
            blocks,
            t,
            stabilizer,
            f,
            g,
            advection,
            lift,
        })
    }

    pub fn num_interior(&self) -> usize {
        self.spaces.velocity.num_interior()
    }

    pub fn num_pressure(&self) -> usize {
        self.spaces.pressure.dim()
    }

    pub fn system_dim(&self) -> usize {
        self.num_interior() + self.num_pressure() + 1
    }

    pub fn pack(&self, x: &SaddleState) -> Vec<f64> {
        let mut z = self.spaces.velocity.restrict(&x.u);
        z.extend_from_slice(&x.p);
        z.push(x.lambda);
        z
    }

    pub fn unpack(&self, z: &[f64]) -> SaddleState {
        let ni = self.num_interior();
        let np = self.num_pressure();
        let mut u = self.spaces.velocity.extend(&z[..ni]);
        for (v, l) in u.iter_mut().zip(&self.lift) {
            *v += l;
        }
        SaddleState {
            u,
            p: z[ni..ni + np].to_vec(),
            lambda: z[ni + np],
        }
    }

    /// Convection (or Oseen advection), plus the velocity stabilization for
    /// Navier-Stokes, on all velocity DOFs.
    pub fn nonlinear_part(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut r = match (self.spec.kind, &self.advection) {
            (ProblemKind::Nse, _) => convection_residual(&self.spaces, u)?,
            (ProblemKind::Oseen, Some(b)) => advection_residual(&self.spaces, b, u)?,
            _ => vec![0.0; u.len()],
        };
        if self.spec.kind.is_nonlinear() {
            let s = self.stabilizer.velocity_residual(&self.spaces, u)?;
            r.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        }
        Ok(r)
    }

    /// `A(x) − b` without the multiplier: velocity part on all DOFs and
    /// pressure part.
    pub fn operator_residual(&self, u: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut ru = self.blocks.l.mul_vec(u);
        let btp = self.blocks.b.tr_mul_vec(p);
        let n = self.nonlinear_part(u)?;
        for i in 0..ru.len() {
            ru[i] += n[i] - btp[i] - self.f[i];
        }
        let bu = self.blocks.b.mul_vec(u);
        let tp = self.t.mul_vec(p);
        let rp = (0..p.len()).map(|i| bu[i] + tp[i] - self.g[i]).collect();
        Ok((ru, rp))
    }

    /// Algebraic residual `F(z)` of the full system.
    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = self.unpack(z);
        let (ru, rp) = self.operator_residual(&x.u, &x.p)?;
        let mut out = self.spaces.velocity.restrict(&ru);
        let m = &self.spaces.pressure.mean;
        out.extend(rp.iter().zip(m).map(|(r, mi)| r + mi * x.lambda));
        out.push(dot(m, &x.p));
        Ok(out)
    }

    /// Jacobian of [`Problem::residual`] with stabilization weights frozen.
    pub fn jacobian(&self, z: &[f64]) -> Result<CsrMatrix> {
        let x = self.unpack(z);
        let interior = &self.spaces.velocity.interior_dofs;
        let mut a = self.blocks.l_ii.clone();
        let lin = match (self.spec.kind, &self.advection) {
            (ProblemKind::Nse, _) => Some(convection_jacobian(&self.spaces, &x.u)?),
            (ProblemKind::Oseen, Some(b)) => Some(advection_matrix(&self.spaces, b)?),
            _ => None,
        };
        if let Some(lin) = lin {
            a = a.add_scaled(&lin.select(interior, interior), 1.0);
        }
        if self.spec.kind.is_nonlinear() {
            let s = self.stabilizer.velocity_jacobian(&self.spaces, &x.u)?;
            if s.nnz() > 0 {
                a = a.add_scaled(&s.select(interior, interior), 1.0);
            }
        }
        Ok(saddle_matrix(
            &a,
            &self.blocks.b_i,
            &self.t,
            &self.spaces.pressure.mean,
        ))
    }

    /// Euclidean norm of the data `(f_interior, g)` used in the stopping test.
    pub fn data_norm(&self) -> f64 {
        let fi = self.spaces.velocity.restrict(&self.f);
        (dot(&fi, &fi) + dot(&self.g, &self.g)).sqrt()
    }
}

/// `[a −bᵀ 0; b t m; 0 mᵀ 0]`.
pub fn saddle_matrix(a: &CsrMatrix, b: &CsrMatrix, t: &CsrMatrix, m: &[f64]) -> CsrMatrix {
    let ni = a.nrows();
    let np = t.nrows();
    let n = ni + np + 1;
    let mut tr = TripletBuilder::with_capacity(n, n, a.nnz() + 2 * b.nnz() + t.nnz() + 2 * np);
    tr.push_block(a, 0, 0, 1.0);
    for (i, j, v) in b.iter() {
        tr.push(j, ni + i, -v);
        tr.push(ni + i, j, v);
    }
    tr.push_block(t, ni, ni, 1.0);
    for (i, &mi) in m.iter().enumerate() {
        tr.push(ni + i, ni + np, mi);
        tr.push(ni + np, ni + i, mi);
    }
    tr.build()
}

const MAX_LINEAR_RESIDUAL: f64 = 1e-8;

fn solve_system(
    mat: &CsrMatrix,
    rhs: &[f64],
    diagnose: impl Fn() -> String,
) -> Result<(Vec<f64>, f64)> {
    let lu = SparseLu::new(mat).map_err(|e| match e {
        Error::Solver(msg) => Error::Solver(format!("{msg}; {}", diagnose())),
        other => other,
    })?;
    let (x, rel) = solve_refined(mat, &lu, rhs, 3);
    if !(rel <= MAX_LINEAR_RESIDUAL) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver(format!(
            "singular saddle-point system (relative residual {rel:e}); {}",
            diagnose()
        )));
    }
    Ok((x, rel))
}

/// Describes the smallest zero-mean mode of `B M_V⁻¹ Bᵀ + T` when the
/// pressure space is small enough for a dense eigensolve.
pub fn pressure_mode_diagnostic(blocks: &OperatorBlocks, t: &CsrMatrix, mean: &[f64]) -> String {
    if mean.len() > 2000 {
        return "pressure space too large for a near-null mode diagnostic".into();
    }
    match crate::coercivity::infsup_spectrum(blocks, t, mean) {
        Ok(spec) => {
            let mode = &spec.vectors[0];
            let (imax, vmax) = mode.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
                if v.abs() > acc.1 {
                    (i, v.abs())
                } else {
                    acc
                }
            });
            format!(
                "near-null pressure mode: generalized eigenvalue {:e} of (B M_V^-1 B^T + T, M_Q) on zero-mean pressures, \
                 largest amplitude {vmax:.3e} at pressure DOF {imax}",
                spec.values[0]
            )
        }
        Err(e) => format!("near-null mode diagnostic unavailable: {e}"),
    }
}

/// Solves the linear stabilized system with homogeneous Dirichlet data:
/// `L u − Bᵀ p = f`, `B u + T p = g`, `mᵀ p = 0`. `f` is given on all
/// velocity DOFs; boundary entries are ignored.
pub fn solve_linear_saddle(
    spaces: &Spaces,
    blocks: &OperatorBlocks,
    t: &CsrMatrix,
    f: &[f64],
    g: &[f64],
) -> Result<SaddleState> {
    if f.len() != spaces.velocity.dim() || g.len() != spaces.pressure.dim() {
        return Err(Error::Dimension(
            "load vectors do not match the spaces".into(),
        ));
    }
    let mean = &spaces.pressure.mean;
    let mat = saddle_matrix(&blocks.l_ii, &blocks.b_i, t, mean);
    let mut rhs = spaces.velocity.restrict(f);
    rhs.extend_from_slice(g);
    rhs.push(0.0);
    let (z, _) = solve_system(&mat, &rhs, || pressure_mode_diagnostic(blocks, t, mean))?;
    let ni = spaces.velocity.num_interior();
    let np = spaces.pressure.dim();
    Ok(SaddleState {
        u: spaces.velocity.extend(&z[..ni]),
        p: z[ni..ni + np].to_vec(),
        lambda: z[ni + np],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub rtol: f64,
    pub max_halvings: u32,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            rtol: 1e-8,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    /// `‖F(z_k)‖`, starting with the initial (Stokes) guess.
    pub residuals: Vec<f64>,
    /// Accepted step length per Newton step.
    pub damping: Vec<f64>,
    /// Relative residual of each linear solve, the initial guess first.
    pub linear_residuals: Vec<f64>,
    pub tolerance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: Option<f64>,
}

/// Damped Newton for the full system, started from the Stokes solution of
/// the same data. Divergence is reported through `converged = false`.
pub fn solve_nonlinear(problem: &Problem, opts: &NewtonOptions) -> Result<(SaddleState, SolveLog)> {
    let clock = Clock::start();
    let tol = opts.rtol * problem.data_norm().max(1.0);
    let mean = &problem.spaces.pressure.mean;
    let newton_err = |iteration: usize, e: Error| Error::Newton {
        iteration,
        source: Box::new(e),
    };

    // Stokes guess: only the linear operator, same data and lifting
    let stokes = saddle_matrix(&problem.blocks.l_ii, &problem.blocks.b_i, &problem.t, mean);
    let zero = vec![0.0; problem.system_dim()];
    let r0 = {
        let x = problem.unpack(&zero);
        let mut ru = problem.blocks.l.mul_vec(&x.u);
        ru.iter_mut().zip(&problem.f).for_each(|(a, f)| *a -= f);
        let bu = problem.blocks.b.mul_vec(&x.u);
        let mut r = problem.spaces.velocity.restrict(&ru);
        r.extend(bu.iter().zip(&problem.g).map(|(a, g)| a - g));
        r.push(0.0);
        r
    };
    let neg: Vec<f64> = r0.iter().map(|v| -v).collect();
    let (mut z, lin0) = solve_system(&stokes, &neg, || {
        pressure_mode_diagnostic(&problem.blocks, &problem.t, mean)
    })
    .map_err(|e| newton_err(0, e))?;

    let mut fz = problem.residual(&z)?;
    let mut norm = norm2(&fz);
    let mut log = SolveLog {
        residuals: vec![norm],
        damping: Vec::new(),
        linear_residuals: vec![lin0],
        tolerance: tol,
        iterations: 0,
        converged: norm <= tol,
        wall_time_s: None,
    };
    for it in 1..=opts.max_iter {
        if log.converged {
            break;
        }
        let jac = problem.jacobian(&z).map_err(|e| newton_err(it, e))?;
        let rhs: Vec<f64> = fz.iter().map(|v| -v).collect();
        let (dz, lin) = solve_system(&jac, &rhs, || "Newton Jacobian is singular".into())
            .map_err(|e| newton_err(it, e))?;
        log.linear_residuals.push(lin);
        let mut accepted = None;
        for h in 0..=opts.max_halvings {
            let step = 0.5f64.powi(h as i32);
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + step * d).collect();
            let ft = problem.residual(&trial)?;
            let nt = norm2(&ft);
            if nt < norm {
                accepted = Some((step, trial, ft, nt));
                break;
            }
        }
        let Some((step, trial, ft, nt)) = accepted else {
            break;
        };
        z = trial;
        fz = ft;
        norm = nt;
        log.iterations = it;
        log.damping.push(step);
        log.residuals.push(norm);
        log.converged = norm <= tol;
    }
    log.wall_time_s = clock.elapsed();
    Ok((problem.unpack(&z), log))
}

/// Riesz maps of the velocity norm (interior DOFs) and of `L²` on the
/// pressure space.
pub struct RieszMap {
    interior: Vec<usize>,
    nv: usize,
    chol_v: SparseCholesky,
    chol_q: SparseCholesky,
    mean: Vec<f64>,
}

impl RieszMap {
    pub fn new(spaces: &Spaces, blocks: &OperatorBlocks) -> Result<Self> {
        Ok(Self {
            interior: spaces.velocity.interior_dofs.clone(),
            nv: spaces.velocity.dim(),
            chol_v: SparseCholesky::new(&blocks.m_v_ii)?,
            chol_q: SparseCholesky::new(&blocks.m_q)?,
            mean: spaces.pressure.mean.clone(),
        })
    }

    /// Representative `u_f` (zero on the boundary) with `M_V u_f = f` on
    /// interior DOFs.
    pub fn velocity(&self, f: &[f64]) -> Vec<f64> {
        let fi: Vec<f64> = self.interior.iter().map(|&d| f[d]).collect();
        let ui = self.chol_v.solve(&fi);
        let mut u = vec![0.0; self.nv];
        for (&d, v) in self.interior.iter().zip(ui) {
            u[d] = v;
        }
        u
    }

    /// `‖f‖_{V'} = sqrt(fᵀ M_V⁻¹ f)` over interior DOFs.
    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        let u = self.velocity(f);
        dot(f, &u).max(0.0).sqrt()
    }

    /// Zero-mean representative of a pressure functional: `M_Q⁻¹ r` minus
    /// its mean. Functionals that are multiples of `m` map to zero.
    pub fn pressure(&self, r: &[f64]) -> Vec<f64> {
        let mut y = self.chol_q.solve(r);
        let area: f64 = self.mean.iter().sum();
        let c = dot(&self.mean, &y) / area;
        y.iter_mut().for_each(|v| *v -= c);
        y
    }
}

pub fn riesz_dual_norm(spaces: &Spaces, blocks: &OperatorBlocks, f: &[f64]) -> Result<f64> {
    if f.len() != spaces.velocity.dim() {
        return Err(Error::Dimension(
            "load vector does not match the velocity space".into(),
        ));
    }
    Ok(RieszMap::new(spaces, blocks)?.dual_norm(f))
}

/// Dense `B_i M_V⁻¹ B_iᵀ` on all pressure DOFs.
pub fn schur_complement_dense(blocks: &OperatorBlocks) -> Result<Mat<f64>> {
    let chol = SparseCholesky::new(&blocks.m_v_ii)?;
    let np = blocks.b_i.nrows();
    let ni = blocks.b_i.ncols();
    let mut x = Vec::with_capacity(np);
    for j in 0..np {
        let mut col = vec![0.0; ni];
        for (c, v) in blocks.b_i.row(j) {
            col[c] = v;
        }
        x.push(chol.solve(&col));
    }
    let mut s = Mat::<f64>::zeros(np, np);
    for i in 0..np {
        for j in 0..np {
            s[(i, j)] = blocks.b_i.row(i).map(|(c, v)| v * x[j][c]).sum();
        }
    }
    Ok(s)
}

/// Closest (in the velocity norm) zero-trace field to `raw` whose discrete
/// divergence vanishes against every pressure basis function.
pub fn solenoidal_projection(
    spaces: &Spaces,
    blocks: &OperatorBlocks,
    raw: &[f64],
) -> Result<Vec<f64>> {
    let mut bi = spaces.velocity.restrict(raw);
    let div = blocks.b_i.mul_vec(&bi);
    let s = schur_complement_dense(blocks)?;
    let (vals, vecs) = sym_eigen(&s)?;
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let np = vals.len();
    let mut y = vec![0.0; np];
    for (k, &lam) in vals.iter().enumerate() {
        if lam > 1e-10 * top {
            let c: f64 = (0..np).map(|i| vecs[(i, k)] * div[i]).sum::<f64>() / lam;
            for i in 0..np {
                y[i] += c * vecs[(i, k)];
            }
        }
    }
    let chol = SparseCholesky::new(&blocks.m_v_ii)?;
    let corr = chol.solve(&blocks.b_i.tr_mul_vec(&y));
    bi.iter_mut().zip(&corr).for_each(|(a, c)| *a -= c);
    let out = spaces.velocity.extend(&bi);
    let res = blocks
        .b
        .mul_vec(&out)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if res > 1e-10 * norm2(&bi).max(1.0) {
        return Err(Error::Solver(format!(
            "advection field could not be made discretely solenoidal (max |Bb| = {res:e})"
        )));
    }
    Ok(out)
}

/// `(‖u‖_V, μ⁻¹‖f‖_{V'})` for a state with homogeneous boundary data.
pub fn energy_bound(problem: &Problem, riesz: &RieszMap, x: &SaddleState) -> (f64, f64) {
    let unorm = problem.blocks.m_v.bilinear(&x.u, &x.u).max(0.0).sqrt();
    (unorm, riesz.dual_norm(&problem.f) / problem.spec.mu)
}

struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed(&self) -> Option<f64> {
        #[cfg(not(target_arch = "wasm32"))]
        {
            Some(self.start.elapsed().as_secs_f64())
        }
        #[cfg(target_arch = "wasm32")]
        {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stabilization::PressureStab;

    fn stokes_spec(stab: PressureStab) -> ProblemSpec {
        ProblemSpec {
            kind: ProblemKind::Stokes,
            mu: 1.0,
            stab: StabilizationConfig::pressure(stab),
        }
    }

    #[test]
    fn homogeneous_data_gives_zero() {
        let mesh = Mesh::unit_square(4, false).unwrap();
        let p = Problem::assemble(
            &mesh,
            1,
            stokes_spec(PressureStab::Bp),
            &ProblemData::default(),
        )
        .unwrap();
        let x = solve_linear_saddle(&p.spaces, &p.blocks, &p.t, &p.f, &p.g).unwrap();
        assert!(x.u.iter().chain(&x.p).all(|&v| v == 0.0));
        let (_, log) = solve_nonlinear(&p, &NewtonOptions::default()).unwrap();
        assert!(log.converged && log.iterations == 0);
    }

    #[test]
    fn riesz_of_gram_image_recovers_norm() {
        let mesh = Mesh::unit_square(6, false).unwrap();
        let s = build_spaces(&mesh, 2).unwrap();
        let b = assemble_stokes_blocks(&s, 1.0).unwrap();
        let w = s.velocity.extend(
            &(0..s.velocity.num_interior())
                .map(|i| (i as f64 * 0.37).sin())
                .collect::<Vec<_>>(),
        );
        let f = b.m_v.mul_vec(&w);
        let got = riesz_dual_norm(&s, &b, &f).unwrap();
        let want = b.m_v.bilinear(&w, &w).sqrt();
        assert!((got - want).abs() <= 1e-10 * want);
        assert_eq!(
            riesz_dual_norm(&s, &b, &vec![0.0; s.velocity.dim()]).unwrap(),
            0.0
        );
    }

    #[test]
    fn mu_is_named_in_errors() {
        let mesh = Mesh::unit_square(2, false).unwrap();
        let mut spec = stokes_spec(PressureStab::None);
        spec.mu = -1.0;
        let err = Problem::assemble(&mesh, 1, spec, &ProblemData::default())
            .err()
            .unwrap();
        assert!(err.to_string().contains("mu"));
    }

    #[test]
    fn projected_advection_is_solenoidal() {
        let mesh = Mesh::unit_square(6, false).unwrap();
        let s = build_spaces(&mesh, 1).unwrap();
        let b = assemble_stokes_blocks(&s, 1.0).unwrap();
        let raw = s.interpolate_velocity(|x, y| [x * (1.0 - x) * y, 0.3 * y * y * x]);
        let sol = solenoidal_projection(&s, &b, &raw).unwrap();
        assert!(b.b.mul_vec(&sol).iter().all(|v| v.abs() < 1e-12));
    }
}
