//! Saddle-point blocks and the skew-symmetrized convection operator.

use crate::error::{Error, Result};
use crate::fe_space::Spaces;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Assembled linear blocks. All matrices act on full DOF vectors; the
/// `*_ii` variants are restricted to interior velocity DOFs.
#[derive(Debug, Clone)]
pub struct OperatorBlocks {
    pub mu: f64,
    /// Viscous block `μ ∫∇u:∇v`.
    pub l: CsrMatrix,
    /// Divergence block, rows = pressure, cols = velocity: `∫ q div v`.
    pub b: CsrMatrix,
    /// Gram matrix of the velocity norm `∫∇u:∇v`.
    pub m_v: CsrMatrix,
    /// Pressure mass matrix.
    pub m_q: CsrMatrix,
    pub l_ii: CsrMatrix,
    pub b_i: CsrMatrix,
    pub m_v_ii: CsrMatrix,
}

pub fn assemble_stokes_blocks(spaces: &Spaces, mu: f64) -> Result<OperatorBlocks> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "mu must be positive, got {mu}"
        )));
    }
    let nv = spaces.velocity.dim();
    let np = spaces.pressure.dim();
    let mesh = spaces.mesh();
    let n = spaces.local_dim();
    let cap = mesh.num_cells() * n * n;
    let mut mv = TripletBuilder::with_capacity(nv, nv, 2 * cap);
    let mut mq = TripletBuilder::with_capacity(np, np, cap);
    let mut bt = TripletBuilder::with_capacity(np, nv, 2 * cap);

    for cell in 0..mesh.num_cells() {
        let tab = spaces.tabulate(cell, &spaces.quad);
        let loc = spaces.cell_nodes(cell);
        let mut kloc = [[0.0; 6]; 6];
        let mut mloc = [[0.0; 6]; 6];
        let mut bloc = [[[0.0; 2]; 6]; 6];
        for q in 0..tab.nq() {
            let w = tab.jxw[q];
            for i in 0..n {
                for j in 0..n {
                    let (gi, gj) = (tab.grad[q][i], tab.grad[q][j]);
                    kloc[i][j] += w * (gi[0] * gj[0] + gi[1] * gj[1]);
                    mloc[i][j] += w * tab.phi[q][i] * tab.phi[q][j];
                    bloc[i][j][0] += w * tab.phi[q][i] * gj[0];
                    bloc[i][j][1] += w * tab.phi[q][i] * gj[1];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (gi, gj) = (loc[i], loc[j]);
                mq.push(gi, gj, mloc[i][j]);
                for c in 0..2 {
                    mv.push(2 * gi + c, 2 * gj + c, kloc[i][j]);
                    bt.push(gi, 2 * gj + c, bloc[i][j][c]);
                }
            }
        }
    }
    let m_v = mv.build();
    let l = m_v.scaled(mu);
    let b = bt.build();
    let interior = &spaces.velocity.interior_dofs;
    let all_p: Vec<usize> = (0..np).collect();
    Ok(OperatorBlocks {
        mu,
        l_ii: l.select(interior, interior),
        b_i: b.select(&all_p, interior),
        m_v_ii: m_v.select(interior, interior),
        l,
        b,
        m_v,
        m_q: mq.build(),
    })
}

/// `⟨(w·∇)u + ½ (div w) u, φ_i⟩` for all velocity DOFs. With `w = u` this
/// is the convection residual `⟨C(u), φ_i⟩`.
pub fn advection_residual(spaces: &Spaces, w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len(spaces, w)?;
    check_len(spaces, u)?;
    let mut r = vec![0.0; spaces.velocity.dim()];
    let rule = &spaces.quad_nonlinear;
    for cell in 0..spaces.mesh().num_cells() {
        let tab = spaces.tabulate(cell, rule);
        let loc = spaces.cell_nodes(cell);
        for q in 0..tab.nq() {
            let (wv, wg) = spaces.velocity_at(w, cell, &tab, q);
            let (uv, ug) = spaces.velocity_at(u, cell, &tab, q);
            let divw = wg[0][0] + wg[1][1];
            let mut f = [0.0; 2];
            for c in 0..2 {
                f[c] = wv[0] * ug[c][0] + wv[1] * ug[c][1] + 0.5 * divw * uv[c];
            }
            for (i, &node) in loc.iter().enumerate() {
                let s = tab.jxw[q] * tab.phi[q][i];
                r[2 * node] += s * f[0];
                r[2 * node + 1] += s * f[1];
            }
        }
    }
    Ok(r)
}

/// `⟨C(u), φ_i⟩` with `C(u) = (u·∇)u + ½ u div u`.
pub fn convection_residual(spaces: &Spaces, u: &[f64]) -> Result<Vec<f64>> {
    advection_residual(spaces, u, u)
}

/// Matrix of `δ ↦ ⟨(w·∇)δ + ½ (div w) δ, φ_i⟩` (advection by a frozen field).
pub fn advection_matrix(spaces: &Spaces, w: &[f64]) -> Result<CsrMatrix> {
    linearized(spaces, w, true, false)
}

/// Exact derivative of the convection residual at `u`:
/// `δ ↦ ⟨(δ·∇)u + (u·∇)δ + ½ δ div u + ½ u div δ, φ_i⟩`.
pub fn convection_jacobian(spaces: &Spaces, u: &[f64]) -> Result<CsrMatrix> {
    linearized(spaces, u, true, true)
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

fn linearized(spaces: &Spaces, u: &[f64], transport: bool, reaction: bool) -> Result<CsrMatrix> {
    check_len(spaces, u)?;
    let nv = spaces.velocity.dim();
    let n = spaces.local_dim();
    let mesh = spaces.mesh();
    let mut t = TripletBuilder::with_capacity(nv, nv, mesh.num_cells() * 4 * n * n);
    let rule = &spaces.quad_nonlinear;
    for cell in 0..mesh.num_cells() {
        let tab = spaces.tabulate(cell, rule);
        let loc = spaces.cell_nodes(cell);
        // local[i][c][j][d]: row (node i, comp c), column (node j, comp d)
        let mut local = [[[[0.0; 2]; 6]; 2]; 6];
        for q in 0..tab.nq() {
            let (uv, ug) = spaces.velocity_at(u, cell, &tab, q);
            let divu = ug[0][0] + ug[1][1];
            let w = tab.jxw[q];
            for i in 0..n {
                let pi = tab.phi[q][i] * w;
                for j in 0..n {
                    let pj = tab.phi[q][j];
                    let gj = tab.grad[q][j];
                    if transport {
                        // (u·∇)δ + ½ div(u) δ, δ = φ_j e_d
                        let adv = uv[0] * gj[0] + uv[1] * gj[1] + 0.5 * divu * pj;
                        local[i][0][j][0] += pi * adv;
                        local[i][1][j][1] += pi * adv;
                    }
                    if reaction {
                        // (δ·∇)u + ½ u div δ, δ = φ_j e_d
                        for c in 0..2 {
                            for d in 0..2 {
                                local[i][c][j][d] += pi * (pj * ug[c][d] + 0.5 * uv[c] * gj[d]);
                            }
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
    Ok(t.build())
}
