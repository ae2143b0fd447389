//! Equal-order Lagrange spaces on triangles.
//!
//! Velocity and pressure share one scalar node set. A velocity DOF is
//! `2 * node + component`; pressure DOFs are the nodes themselves.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, DIRICHLET_MARKER};
use crate::quadrature::QuadRule;

/// Largest number of scalar basis functions on one cell (P2).
pub const MAX_LOCAL: usize = 6;

/// Values and physical gradients of the local scalar basis at the points of
/// a quadrature rule, together with the integration weights.
#[derive(Debug, Clone)]
pub struct CellTab {
    pub n: usize,
    pub jxw: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    pub phi: Vec<[f64; MAX_LOCAL]>,
    pub grad: Vec<[[f64; 2]; MAX_LOCAL]>,
}

impl CellTab {
    pub fn nq(&self) -> usize {
        self.jxw.len()
    }
}

#[derive(Debug, Clone)]
pub struct VelocitySpace {
    /// Velocity DOFs not on the Dirichlet boundary, ascending.
    pub interior_dofs: Vec<usize>,
    interior_index: Vec<usize>,
    dim: usize,
}

impl VelocitySpace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_interior(&self) -> usize {
        self.interior_dofs.len()
    }

    /// Position of `dof` in `interior_dofs`, if it is free.
    pub fn interior_index(&self, dof: usize) -> Option<usize> {
        match self.interior_index[dof] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    /// Restriction of a full vector to the interior DOFs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Full vector with the interior values set and zeros on the boundary.
    pub fn extend(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.dim];
        for (&d, &v) in self.interior_dofs.iter().zip(interior) {
            full[d] = v;
        }
        full
    }
}

#[derive(Debug, Clone)]
pub struct PressureSpace {
    /// `mean[i] = ∫ φ_i`, so that `mean · p = ∫ p`.
    pub mean: Vec<f64>,
}

impl PressureSpace {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Subtracts the constant that makes `∫ p = 0`.
    pub fn remove_mean(&self, p: &mut [f64]) {
        let area: f64 = self.mean.iter().sum();
        let c = crate::sparse::dot(&self.mean, p) / area;
        p.iter_mut().for_each(|v| *v -= c);
    }
}

#[derive(Debug, Clone)]
pub struct Spaces {
    mesh: Mesh,
    k: usize,
    nodes: Vec<[f64; 2]>,
    cell_nodes: Vec<[usize; MAX_LOCAL]>,
    boundary_node: Vec<bool>,
    pub velocity: VelocitySpace,
    pub pressure: PressureSpace,
    /// Rule of exactness degree `2k + 2` for linear terms and errors.
    pub quad: QuadRule,
    /// Rule used for the convective and SUPG terms.
    pub quad_nonlinear: QuadRule,
}

/// Builds equal-order P`k` velocity and pressure spaces on `mesh`.
pub fn build_spaces(mesh: &Mesh, k: usize) -> Result<Spaces> {
    if !(1..=2).contains(&k) {
        return Err(Error::Unsupported(format!(
            "polynomial degree {k}; only 1 and 2 are available"
        )));
    }
    let on_dirichlet = mesh.dirichlet_vertices();
    let mut nodes: Vec<[f64; 2]> = mesh.vertices().to_vec();
    let mut boundary_node = on_dirichlet;
    let mut cell_nodes = Vec::with_capacity(mesh.num_cells());

    if k == 1 {
        for c in mesh.cells() {
            let mut l = [usize::MAX; MAX_LOCAL];
            l[..3].copy_from_slice(c);
            cell_nodes.push(l);
        }
    } else {
        let mut dirichlet_edges = std::collections::BTreeSet::new();
        for e in mesh.boundary_edges() {
            if e.marker == DIRICHLET_MARKER {
                let [a, b] = e.vertices;
                dirichlet_edges.insert((a.min(b), a.max(b)));
            }
        }
        let mut edge_node: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for c in mesh.cells() {
            let mut l = [usize::MAX; MAX_LOCAL];
            l[..3].copy_from_slice(c);
            for e in 0..3 {
                let (a, b) = (c[e], c[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_node.entry(key).or_insert_with(|| {
                    let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                    nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                    boundary_node.push(dirichlet_edges.contains(&key));
                    nodes.len() - 1
                });
                l[3 + e] = id;
            }
            cell_nodes.push(l);
        }
    }

    let dim = 2 * nodes.len();
    let mut interior_dofs = Vec::new();
    let mut interior_index = vec![usize::MAX; dim];
    for dof in 0..dim {
        if !boundary_node[dof / 2] {
            interior_index[dof] = interior_dofs.len();
            interior_dofs.push(dof);
        }
    }

    let quad = QuadRule::with_degree(2 * k + 2);
    let quad_nonlinear = QuadRule::with_degree(if k == 1 { 4 } else { 8 });
    let mut spaces = Spaces {
        mesh: mesh.clone(),
        k,
        nodes,
        cell_nodes,
        boundary_node,
        velocity: VelocitySpace {
            interior_dofs,
            interior_index,
            dim,
        },
        pressure: PressureSpace { mean: Vec::new() },
        quad,
        quad_nonlinear,
    };
    let mut mean = vec![0.0; spaces.num_nodes()];
    for cell in 0..mesh.num_cells() {
        let tab = spaces.tabulate(cell, &spaces.quad);
        let loc = spaces.cell_nodes(cell);
        for q in 0..tab.nq() {
            for (i, &node) in loc.iter().enumerate() {
                mean[node] += tab.jxw[q] * tab.phi[q][i];
            }
        }
    }
    spaces.pressure.mean = mean;
    Ok(spaces)
}

/// Local scalar basis at barycentric point `l`: values and derivatives
/// with respect to the three barycentric coordinates.
fn reference_basis(k: usize, l: [f64; 3]) -> ([f64; MAX_LOCAL], [[f64; 3]; MAX_LOCAL]) {
    let mut phi = [0.0; MAX_LOCAL];
    let mut dphi = [[0.0; 3]; MAX_LOCAL];
    if k == 1 {
        for i in 0..3 {
            phi[i] = l[i];
            dphi[i][i] = 1.0;
        }
    } else {
        for i in 0..3 {
            phi[i] = l[i] * (2.0 * l[i] - 1.0);
            dphi[i][i] = 4.0 * l[i] - 1.0;
        }
        for e in 0..3 {
            let (a, b) = (e, (e + 1) % 3);
            phi[3 + e] = 4.0 * l[a] * l[b];
            dphi[3 + e][a] = 4.0 * l[b];
            dphi[3 + e][b] = 4.0 * l[a];
        }
    }
    (phi, dphi)
}

/// Gradients of the barycentric coordinates of a triangle.
pub fn barycentric_gradients(v: [[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let two_a =
        (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(v[j][1] - v[k][1]) / two_a, (v[k][0] - v[j][0]) / two_a];
    }
    g
}

impl Spaces {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary_node[node]
    }

    /// Scalar basis functions per cell.
    pub fn local_dim(&self) -> usize {
        if self.k == 1 {
            3
        } else {
            6
        }
    }

    /// Global scalar node numbers of cell `cell`.
    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        &self.cell_nodes[cell][..self.local_dim()]
    }

    pub fn tabulate(&self, cell: usize, rule: &QuadRule) -> CellTab {
        let v = self.mesh.cell_coords(cell);
        let area = self.mesh.area(cell);
        let gl = barycentric_gradients(v);
        let n = self.local_dim();
        let nq = rule.len();
        let mut tab = CellTab {
            n,
            jxw: Vec::with_capacity(nq),
            x: Vec::with_capacity(nq),
            phi: Vec::with_capacity(nq),
            grad: Vec::with_capacity(nq),
        };
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let (phi, dphi) = reference_basis(self.k, *l);
            let mut grad = [[0.0; 2]; MAX_LOCAL];
            for i in 0..n {
                for (b, gb) in gl.iter().enumerate() {
                    grad[i][0] += dphi[i][b] * gb[0];
                    grad[i][1] += dphi[i][b] * gb[1];
                }
            }
            tab.jxw.push(w * area);
            tab.x.push([
                l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
                l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
            ]);
            tab.phi.push(phi);
            tab.grad.push(grad);
        }
        tab
    }

    /// Velocity value and gradient `[du/dx, du/dy]` per component at
    /// quadrature point `q` of a tabulated cell.
    pub fn velocity_at(
        &self,
        u: &[f64],
        cell: usize,
        tab: &CellTab,
        q: usize,
    ) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for (i, &node) in self.cell_nodes(cell).iter().enumerate() {
            for c in 0..2 {
                let coef = u[2 * node + c];
                val[c] += coef * tab.phi[q][i];
                grad[c][0] += coef * tab.grad[q][i][0];
                grad[c][1] += coef * tab.grad[q][i][1];
            }
        }
        (val, grad)
    }

    /// Scalar value and gradient at quadrature point `q`.
    pub fn scalar_at(&self, p: &[f64], cell: usize, tab: &CellTab, q: usize) -> (f64, [f64; 2]) {
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (i, &node) in self.cell_nodes(cell).iter().enumerate() {
            val += p[node] * tab.phi[q][i];
            grad[0] += p[node] * tab.grad[q][i][0];
            grad[1] += p[node] * tab.grad[q][i][1];
        }
        (val, grad)
    }

    pub fn interpolate_scalar(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }

    pub fn interpolate_velocity(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        self.nodes.iter().flat_map(|p| f(p[0], p[1])).collect()
    }

    /// Velocity load vector `∫ f·φ_i` on all velocity DOFs.
    pub fn load_velocity(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let rule = QuadRule::with_degree(8);
        let mut b = vec![0.0; self.velocity.dim()];
        for cell in 0..self.mesh.num_cells() {
            let tab = self.tabulate(cell, &rule);
            let loc = self.cell_nodes(cell);
            for q in 0..tab.nq() {
                let fx = f(tab.x[q][0], tab.x[q][1]);
                for (i, &node) in loc.iter().enumerate() {
                    let w = tab.jxw[q] * tab.phi[q][i];
                    b[2 * node] += w * fx[0];
                    b[2 * node + 1] += w * fx[1];
                }
            }
        }
        b
    }

    /// Scalar load vector `∫ g φ_i` on the pressure space.
    pub fn load_scalar(&self, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let rule = QuadRule::with_degree(8);
        let mut b = vec![0.0; self.num_nodes()];
        for cell in 0..self.mesh.num_cells() {
            let tab = self.tabulate(cell, &rule);
            for q in 0..tab.nq() {
                let gx = g(tab.x[q][0], tab.x[q][1]);
                for (i, &node) in self.cell_nodes(cell).iter().enumerate() {
                    b[node] += tab.jxw[q] * tab.phi[q][i] * gx;
                }
            }
        }
        b
    }

    /// `∫_K I_h¹(pq)` on cell `cell`, i.e. `(|K|/3) Σ p_i q_i` over the
    /// vertices. Defined for P1 only.
    pub fn nodal_interpolant_integral(&self, p: &[f64], q: &[f64], cell: usize) -> Result<f64> {
        if self.k != 1 {
            return Err(Error::Unsupported(
                "the nodal interpolant of products is defined for P1 only".into(),
            ));
        }
        let s: f64 = self.cell_nodes(cell).iter().map(|&i| p[i] * q[i]).sum();
        Ok(self.mesh.area(cell) / 3.0 * s)
    }
}

/// Vector field sampled at the quadrature points of every cell, cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadField {
    pub nq: usize,
    pub values: Vec<[f64; 2]>,
}

impl QuadField {
    pub fn at(&self, cell: usize, q: usize) -> [f64; 2] {
        self.values[cell * self.nq + q]
    }

    /// Samples `f(cell, q, x)` on every quadrature point.
    pub fn sample(
        spaces: &Spaces,
        rule: &QuadRule,
        mut f: impl FnMut(usize, usize, [f64; 2]) -> [f64; 2],
    ) -> Self {
        let mut values = Vec::with_capacity(spaces.mesh().num_cells() * rule.len());
        for cell in 0..spaces.mesh().num_cells() {
            let tab = spaces.tabulate(cell, rule);
            for q in 0..tab.nq() {
                values.push(f(cell, q, tab.x[q]));
            }
        }
        QuadField {
            nq: rule.len(),
            values,
        }
    }

    /// Gradient of a scalar finite element function.
    pub fn gradient(spaces: &Spaces, rule: &QuadRule, p: &[f64]) -> Self {
        let mut values = Vec::with_capacity(spaces.mesh().num_cells() * rule.len());
        for cell in 0..spaces.mesh().num_cells() {
            let tab = spaces.tabulate(cell, rule);
            for q in 0..tab.nq() {
                values.push(spaces.scalar_at(p, cell, &tab, q).1);
            }
        }
        QuadField {
            nq: rule.len(),
            values,
        }
    }
}

/// L² projection onto vector fields that are polynomials of degree `k-1`
/// on each macro patch and discontinuous across patches.
#[derive(Debug, Clone)]
pub struct PatchProjection {
    k: usize,
    centroid: Vec<[f64; 2]>,
    scale: Vec<f64>,
    /// Inverse Gram matrix of the scalar patch basis, row-major 3x3 (only
    /// the leading entry is used for k = 1).
    gram_inv: Vec<[[f64; 3]; 3]>,
}

impl PatchProjection {
    pub fn new(spaces: &Spaces) -> Result<Self> {
        let patches = spaces.mesh().patches().ok_or_else(|| {
            Error::Config("local projection needs a mesh with macro patches".into())
        })?;
        let k = spaces.degree();
        let mesh = spaces.mesh();
        let rule = &spaces.quad;
        let mut centroid = Vec::with_capacity(patches.len());
        let mut scale = Vec::with_capacity(patches.len());
        let mut gram_inv = Vec::with_capacity(patches.len());
        for patch in 0..patches.len() {
            let kids = patches.children(patch);
            let mut area = 0.0;
            let mut c = [0.0; 2];
            for &cell in kids {
                let a = mesh.area(cell);
                let v = mesh.cell_coords(cell);
                area += a;
                c[0] += a * (v[0][0] + v[1][0] + v[2][0]) / 3.0;
                c[1] += a * (v[0][1] + v[1][1] + v[2][1]) / 3.0;
            }
            c = [c[0] / area, c[1] / area];
            let h = patches.diameter(patch);
            centroid.push(c);
            scale.push(h);
            let nb = Self::basis_len(k);
            let mut g = [[0.0; 3]; 3];
            for &cell in kids {
                let tab = spaces.tabulate(cell, rule);
                for q in 0..tab.nq() {
                    let d = basis_at(k, c, h, tab.x[q]);
                    for a in 0..nb {
                        for b in 0..nb {
                            g[a][b] += tab.jxw[q] * d[a] * d[b];
                        }
                    }
                }
            }
            gram_inv.push(if nb == 1 {
                let mut inv = [[0.0; 3]; 3];
                inv[0][0] = 1.0 / g[0][0];
                inv
            } else {
                invert3(g)
            });
        }
        Ok(Self {
            k,
            centroid,
            scale,
            gram_inv,
        })
    }

    fn basis_len(k: usize) -> usize {
        if k == 1 {
            1
        } else {
            3
        }
    }

    /// Dimension of the scalar polynomial space on one patch.
    pub fn local_len(&self) -> usize {
        Self::basis_len(self.k)
    }

    pub fn num_patches(&self) -> usize {
        self.centroid.len()
    }

    /// Scalar patch basis evaluated at `x` (unused trailing entries are 0).
    pub fn basis(&self, patch: usize, x: [f64; 2]) -> [f64; 3] {
        basis_at(self.k, self.centroid[patch], self.scale[patch], x)
    }

    pub fn gram_inverse(&self, patch: usize) -> &[[f64; 3]; 3] {
        &self.gram_inv[patch]
    }

    /// Patchwise L² projection of a vector field sampled with `rule`.
    pub fn project(&self, spaces: &Spaces, rule: &QuadRule, w: &QuadField) -> QuadField {
        let patches = spaces.mesh().patches().expect("checked at construction");
        let nb = self.local_len();
        let mut out = QuadField {
            nq: w.nq,
            values: vec![[0.0; 2]; w.values.len()],
        };
        for patch in 0..self.num_patches() {
            let mut mom = [[0.0; 2]; 3];
            let tabs: Vec<_> = patches
                .children(patch)
                .iter()
                .map(|&cell| (cell, spaces.tabulate(cell, rule)))
                .collect();
            for (cell, tab) in &tabs {
                for q in 0..tab.nq() {
                    let d = self.basis(patch, tab.x[q]);
                    let wq = w.at(*cell, q);
                    for a in 0..nb {
                        mom[a][0] += tab.jxw[q] * d[a] * wq[0];
                        mom[a][1] += tab.jxw[q] * d[a] * wq[1];
                    }
                }
            }
            let gi = &self.gram_inv[patch];
            let mut coef = [[0.0; 2]; 3];
            for a in 0..nb {
                for b in 0..nb {
                    coef[a][0] += gi[a][b] * mom[b][0];
                    coef[a][1] += gi[a][b] * mom[b][1];
                }
            }
            for (cell, tab) in &tabs {
                for q in 0..tab.nq() {
                    let d = self.basis(patch, tab.x[q]);
                    let mut v = [0.0; 2];
                    for a in 0..nb {
                        v[0] += coef[a][0] * d[a];
                        v[1] += coef[a][1] * d[a];
                    }
                    out.values[cell * w.nq + q] = v;
                }
            }
        }
        out
    }

    /// Fluctuation form `∫_P (∇φ_i − π∇φ_i)·(∇φ_j − π∇φ_j)` of the scalar
    /// basis on patch `patch`. Returns the patch node list and the dense
    /// matrix over it, row-major.
    pub fn fluctuation_matrix(&self, spaces: &Spaces, patch: usize) -> (Vec<usize>, Vec<f64>) {
        let patches = spaces.mesh().patches().expect("checked at construction");
        let kids = patches.children(patch);
        let mut nodes: Vec<usize> = kids
            .iter()
            .flat_map(|&c| spaces.cell_nodes(c).iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        let m = nodes.len();
        let nb = self.local_len();
        let mut stiff = vec![0.0; m * m];
        // moments[(a * 2 + c) * m + i] = ∫ d_a ∂_c φ_i
        let mut moments = vec![0.0; nb * 2 * m];
        let rule = &spaces.quad;
        for &cell in kids {
            let tab = spaces.tabulate(cell, rule);
            let loc: Vec<usize> = spaces
                .cell_nodes(cell)
                .iter()
                .map(|n| nodes.binary_search(n).unwrap())
                .collect();
            for q in 0..tab.nq() {
                let d = self.basis(patch, tab.x[q]);
                for (i, &li) in loc.iter().enumerate() {
                    let gi = tab.grad[q][i];
                    for (j, &lj) in loc.iter().enumerate() {
                        let gj = tab.grad[q][j];
                        stiff[li * m + lj] += tab.jxw[q] * (gi[0] * gj[0] + gi[1] * gj[1]);
                    }
                    for a in 0..nb {
                        for c in 0..2 {
                            moments[(a * 2 + c) * m + li] += tab.jxw[q] * d[a] * gi[c];
                        }
                    }
                }
            }
        }
        let gi = &self.gram_inv[patch];
        for c in 0..2 {
            for a in 0..nb {
                for b in 0..nb {
                    let g = gi[a][b];
                    if g == 0.0 {
                        continue;
                    }
                    for i in 0..m {
                        let mi = moments[(a * 2 + c) * m + i];
                        for j in 0..m {
                            stiff[i * m + j] -= mi * g * moments[(b * 2 + c) * m + j];
                        }
                    }
                }
            }
        }
        (nodes, stiff)
    }
}

fn basis_at(k: usize, c: [f64; 2], h: f64, x: [f64; 2]) -> [f64; 3] {
    if k == 1 {
        [1.0, 0.0, 0.0]
    } else {
        [1.0, (x[0] - c[0]) / h, (x[1] - c[1]) / h]
    }
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let c00 = cof(1, 2, 1, 2);
    let c01 = -cof(1, 2, 0, 2);
    let c02 = cof(1, 2, 0, 1);
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let adj = [
        [c00, -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [c01, cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [c02, -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = adj[i][j] / det;
        }
    }
    inv
}
