//! Pressure stabilization `T` and nonlinear velocity stabilization `S`.
//!
//! Pressure terms:
//! * `Bp`  – Brezzi-Pitkäranta, `δ₀ Σ_K h_K² ∫_K ∇p·∇q`;
//! * `Bh`  – Becker-Hansbo, `∫ I_h¹(pq) − pq` (P1 only);
//! * `Lps` – local projection, `δ₀ Σ_P h_P² ∫_P (∇p − π∇p)·(∇q − π∇q)`.
//!
//! Velocity terms use a solution-dependent weight per patch (LPS) or per
//! cell (streamline diffusion). In the Jacobian the weight is frozen at the
//! current iterate.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_space::{PatchProjection, Spaces};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureStab {
    None,
    Bp,
    Bh,
    Lps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityStab {
    None,
    Lps,
    Supg,
}

impl FromStr for PressureStab {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PressureStab::None),
            "bp" => Ok(PressureStab::Bp),
            "bh" => Ok(PressureStab::Bh),
            "lps" => Ok(PressureStab::Lps),
            _ => Err(Error::Config(format!(
                "unknown pressure stabilization '{s}' (none, bp, bh, lps)"
            ))),
        }
    }
}

impl FromStr for VelocityStab {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(VelocityStab::None),
            "lps" => Ok(VelocityStab::Lps),
            "supg" => Ok(VelocityStab::Supg),
            _ => Err(Error::Config(format!(
                "unknown velocity stabilization '{s}' (none, lps, supg)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationConfig {
    pub pressure: PressureStab,
    pub velocity: VelocityStab,
    pub delta0_p: f64,
    pub delta0_v: f64,
    pub clamp_eps: f64,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        Self {
            pressure: PressureStab::None,
            velocity: VelocityStab::None,
            delta0_p: 0.1,
            delta0_v: 0.3,
            clamp_eps: 1e-8,
        }
    }
}

impl StabilizationConfig {
    pub fn pressure(kind: PressureStab) -> Self {
        Self {
            pressure: kind,
            ..Self::default()
        }
    }

    pub fn with_velocity(mut self, kind: VelocityStab) -> Self {
        self.velocity = kind;
        self
    }

    pub fn needs_patches(&self) -> bool {
        self.pressure == PressureStab::Lps || self.velocity == VelocityStab::Lps
    }

    pub fn validate(&self, spaces: &Spaces) -> Result<()> {
        if !(self.delta0_p >= 0.0 && self.delta0_p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta0_p must be >= 0, got {}",
                self.delta0_p
            )));
        }
        if !(self.delta0_v >= 0.0 && self.delta0_v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta0_v must be >= 0, got {}",
                self.delta0_v
            )));
        }
        if self.pressure == PressureStab::Bh && spaces.degree() != 1 {
            return Err(Error::Unsupported(
                "Becker-Hansbo stabilization is defined for k = 1 only".into(),
            ));
        }
        if self.needs_patches() && spaces.mesh().patches().is_none() {
            return Err(Error::Config(
                "local projection stabilization needs a mesh with macro patches".into(),
            ));
        }
        if self.velocity == VelocityStab::Supg && !(self.clamp_eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clamp_eps must be > 0 for streamline diffusion, got {}",
                self.clamp_eps
            )));
        }
        Ok(())
    }
}

/// Stabilization weight of one patch or cell, with the quantities its
/// upper bound is stated in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabWeight {
    pub delta: f64,
    pub h: f64,
    /// `‖∇u‖_{L²(P)}` for LPS, `‖u‖_{L∞(K)}` for streamline diffusion.
    pub norm: f64,
}

/// Precomputed data for evaluating `T` and `S` on fixed spaces.
#[derive(Debug, Clone)]
pub struct Stabilizer {
    cfg: StabilizationConfig,
    /// Per patch: node list and dense fluctuation matrix.
    fluctuation: Vec<(Vec<usize>, Vec<f64>)>,
}

impl Stabilizer {
    pub fn new(spaces: &Spaces, cfg: StabilizationConfig) -> Result<Self> {
        cfg.validate(spaces)?;
        let fluctuation = if cfg.needs_patches() {
            let proj = PatchProjection::new(spaces)?;
            (0..proj.num_patches())
                .map(|p| proj.fluctuation_matrix(spaces, p))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self { cfg, fluctuation })
    }

    pub fn config(&self) -> &StabilizationConfig {
        &self.cfg
    }

    pub fn pressure_matrix(&self, spaces: &Spaces) -> CsrMatrix {
        let np = spaces.pressure.dim();
        let mesh = spaces.mesh();
        let n = spaces.local_dim();
        let mut t = TripletBuilder::with_capacity(np, np, mesh.num_cells() * n * n);
        match self.cfg.pressure {
            PressureStab::None => {}
            PressureStab::Bp => {
                for cell in 0..mesh.num_cells() {
                    let tab = spaces.tabulate(cell, &spaces.quad);
                    let loc = spaces.cell_nodes(cell);
                    let s = self.cfg.delta0_p * mesh.h(cell).powi(2);
                    let mut k = [[0.0; 6]; 6];
                    for q in 0..tab.nq() {
                        for i in 0..n {
                            for j in 0..n {
                                let (gi, gj) = (tab.grad[q][i], tab.grad[q][j]);
                                k[i][j] += tab.jxw[q] * (gi[0] * gj[0] + gi[1] * gj[1]);
                            }
                        }
                    }
                    for i in 0..n {
                        for j in 0..n {
                            t.push(loc[i], loc[j], s * k[i][j]);
                        }
                    }
                }
            }
            PressureStab::Bh => {
                // ∫_K I(φ_iφ_j) − φ_iφ_j = |K|/3 δ_ij − |K|/12 (1 + δ_ij)
                for cell in 0..mesh.num_cells() {
                    let a = mesh.area(cell);
                    let loc = spaces.cell_nodes(cell);
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = if i == j { a / 6.0 } else { -a / 12.0 };
                            t.push(loc[i], loc[j], v);
                        }
                    }
                }
            }
            PressureStab::Lps => {
                let patches = mesh.patches().expect("validated");
                for (patch, (nodes, f)) in self.fluctuation.iter().enumerate() {
                    let s = self.cfg.delta0_p * patches.diameter(patch).powi(2);
                    let m = nodes.len();
                    for i in 0..m {
                        for j in 0..m {
                            t.push(nodes[i], nodes[j], s * f[i * m + j]);
                        }
                    }
                }
            }
        }
        t.build()
    }

    /// Weights `δ_P(u)` (LPS, per patch) or `δ_K(u)` (streamline diffusion,
    /// per cell). Empty when no velocity stabilization is configured.
    pub fn velocity_weights(&self, spaces: &Spaces, u: &[f64]) -> Vec<StabWeight> {
        let mesh = spaces.mesh();
        match self.cfg.velocity {
            VelocityStab::None => Vec::new(),
            VelocityStab::Lps => {
                let patches = mesh.patches().expect("validated");
                (0..patches.len())
                    .map(|patch| {
                        let mut g2 = 0.0;
                        for &cell in patches.children(patch) {
                            let tab = spaces.tabulate(cell, &spaces.quad);
                            for q in 0..tab.nq() {
                                let (_, g) = spaces.velocity_at(u, cell, &tab, q);
                                g2 += tab.jxw[q]
                                    * (g[0][0].powi(2)
                                        + g[0][1].powi(2)
                                        + g[1][0].powi(2)
                                        + g[1][1].powi(2));
                            }
                        }
                        let norm = g2.sqrt();
                        let h = patches.diameter(patch);
                        StabWeight {
                            delta: self.cfg.delta0_v * h.min(norm),
                            h,
                            norm,
                        }
                    })
                    .collect()
            }
            VelocityStab::Supg => (0..mesh.num_cells())
                .map(|cell| {
                    let tab = spaces.tabulate(cell, &spaces.quad_nonlinear);
                    let mut linf: f64 = 0.0;
                    for q in 0..tab.nq() {
                        let (v, _) = spaces.velocity_at(u, cell, &tab, q);
                        linf = linf.max(v[0].hypot(v[1]));
                    }
                    for &vtx in &mesh.cells()[cell] {
                        linf = linf.max(u[2 * vtx].hypot(u[2 * vtx + 1]));
                    }
                    let h = mesh.h(cell);
                    StabWeight {
                        delta: self.cfg.delta0_v * h / linf.max(self.cfg.clamp_eps),
                        h,
                        norm: linf,
                    }
                })
                .collect(),
        }
    }

    /// `⟨S(u), φ_i⟩` on all velocity DOFs.
    pub fn velocity_residual(&self, spaces: &Spaces, u: &[f64]) -> Result<Vec<f64>> {
        check_len(spaces, u)?;
        let mut r = vec![0.0; spaces.velocity.dim()];
        let weights = self.velocity_weights(spaces, u);
        match self.cfg.velocity {
            VelocityStab::None => {}
            VelocityStab::Lps => {
                for ((nodes, f), w) in self.fluctuation.iter().zip(&weights) {
                    let m = nodes.len();
                    for i in 0..m {
                        for c in 0..2 {
                            let s: f64 = (0..m).map(|j| f[i * m + j] * u[2 * nodes[j] + c]).sum();
                            r[2 * nodes[i] + c] += w.delta * s;
                        }
                    }
                }
            }
            VelocityStab::Supg => {
                let rule = &spaces.quad_nonlinear;
                for (cell, w) in weights.iter().enumerate() {
                    let tab = spaces.tabulate(cell, rule);
                    let loc = spaces.cell_nodes(cell);
                    for q in 0..tab.nq() {
                        let (uv, ug) = spaces.velocity_at(u, cell, &tab, q);
                        let a = [
                            uv[0] * ug[0][0] + uv[1] * ug[0][1],
                            uv[0] * ug[1][0] + uv[1] * ug[1][1],
                        ];
                        for (i, &node) in loc.iter().enumerate() {
                            let gi = tab.grad[q][i];
                            let stream = uv[0] * gi[0] + uv[1] * gi[1];
                            let s = w.delta * tab.jxw[q] * stream;
                            r[2 * node] += s * a[0];
                            r[2 * node + 1] += s * a[1];
                        }
                    }
                }
            }
        }
        Ok(r)
    }

    /// Derivative of the velocity stabilization with the weights frozen at `u`.
    pub fn velocity_jacobian(&self, spaces: &Spaces, u: &[f64]) -> Result<CsrMatrix> {
        check_len(spaces, u)?;
        let nv = spaces.velocity.dim();
        let mut t = TripletBuilder::new(nv, nv);
        let weights = self.velocity_weights(spaces, u);
        match self.cfg.velocity {
            VelocityStab::None => {}
            VelocityStab::Lps => {
                for ((nodes, f), w) in self.fluctuation.iter().zip(&weights) {
                    let m = nodes.len();
                    for i in 0..m {
                        for j in 0..m {
                            for c in 0..2 {
                                t.push(2 * nodes[i] + c, 2 * nodes[j] + c, w.delta * f[i * m + j]);
                            }
                        }
                    }
                }
            }
            VelocityStab::Supg => {
                let rule = &spaces.quad_nonlinear;
                let n = spaces.local_dim();
                for (cell, w) in weights.iter().enumerate() {
                    let tab = spaces.tabulate(cell, rule);
                    let loc = spaces.cell_nodes(cell);
                    let mut local = [[[[0.0; 2]; 6]; 2]; 6];
                    for q in 0..tab.nq() {
                        let (uv, ug) = spaces.velocity_at(u, cell, &tab, q);
                        let a = [
                            uv[0] * ug[0][0] + uv[1] * ug[0][1],
                            uv[0] * ug[1][0] + uv[1] * ug[1][1],
                        ];
                        let jw = w.delta * tab.jxw[q];
                        for i in 0..n {
                            let gi = tab.grad[q][i];
                            let stream_i = uv[0] * gi[0] + uv[1] * gi[1];
                            for j in 0..n {
                                let pj = tab.phi[q][j];
                                let gj = tab.grad[q][j];
                                let stream_j = uv[0] * gj[0] + uv[1] * gj[1];
                                for c in 0..2 {
                                    for d in 0..2 {
                                        let da =
                                            pj * ug[c][d] + if c == d { stream_j } else { 0.0 };
                                        local[i][c][j][d] +=
                                            jw * (da * stream_i + a[c] * pj * gi[d]);
                                    }
                                }
                            }
                        }
                    }
                    for i in 0..n {
                        for c in 0..2 {
                            for j in 0..n {
                                for d in 0..2 {
                                    t.push(2 * loc[i] + c, 2 * loc[j] + d, local[i][c][j][d]);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(t.build())
    }
}

fn check_len(spaces: &Spaces, u: &[f64]) -> Result<()> {
    if u.len() != spaces.velocity.dim() {
        return Err(Error::Dimension(format!(
            "velocity vector has length {}, space has {}",
            u.len(),
            spaces.velocity.dim()
        )));
    }
    Ok(())
}

/// Pressure stabilization matrix `T` for the configured kind.
pub fn assemble_pressure_stab(spaces: &Spaces, cfg: &StabilizationConfig) -> Result<CsrMatrix> {
    Ok(Stabilizer::new(spaces, *cfg)?.pressure_matrix(spaces))
}

pub fn velocity_stab_residual(
    spaces: &Spaces,
    u: &[f64],
    cfg: &StabilizationConfig,
) -> Result<Vec<f64>> {
    Stabilizer::new(spaces, *cfg)?.velocity_residual(spaces, u)
}

pub fn velocity_stab_jacobian(
    spaces: &Spaces,
    u: &[f64],
    cfg: &StabilizationConfig,
) -> Result<CsrMatrix> {
    Stabilizer::new(spaces, *cfg)?.velocity_jacobian(spaces, u)
}
