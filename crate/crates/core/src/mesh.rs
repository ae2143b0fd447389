//! Conforming triangle meshes with an optional macro-patch level.
//!
//! A mesh produced by [`Mesh::refine_uniform`] remembers, for every fine
//! cell, the coarse cell it came from. Those coarse cells are the patches
//! on which the local projection spaces live.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Boundary marker of the homogeneous Dirichlet boundary.
pub const DIRICHLET_MARKER: i32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: i32,
}

/// Coarse cells of the macro triangulation, each tiled by its children.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroPatches {
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    area: Vec<f64>,
    diameter: Vec<f64>,
}

impl MacroPatches {
    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    /// Coarse cell containing fine cell `cell`.
    pub fn parent(&self, cell: usize) -> usize {
        self.parent[cell]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn children(&self, patch: usize) -> &[usize] {
        &self.children[patch]
    }

    /// Area of the coarse cell.
    pub fn area(&self, patch: usize) -> f64 {
        self.area[patch]
    }

    /// Diameter (longest edge) of the coarse cell.
    pub fn diameter(&self, patch: usize) -> f64 {
        self.diameter[patch]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    h: Vec<f64>,
    patches: Option<MacroPatches>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn longest_edge(v: [[f64; 2]; 3]) -> f64 {
    dist(v[0], v[1]).max(dist(v[1], v[2])).max(dist(v[2], v[0]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh from raw parts. Clockwise cells are reoriented; the
    /// result satisfies every structural invariant or an error is returned.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        mut cells: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Mesh> {
        let nv = vertices.len();
        let scale = bounding_scale(&vertices);
        for (k, cell) in cells.iter_mut().enumerate() {
            if cell.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} references a vertex past {nv}"
                )));
            }
            let a = signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if a.abs() <= 1e-14 * scale * scale {
                return Err(Error::InvalidMesh(format!("cell {k} has zero area")));
            }
            if a < 0.0 {
                cell.swap(1, 2);
            }
        }
        let h = cells
            .iter()
            .map(|c| longest_edge([vertices[c[0]], vertices[c[1]], vertices[c[2]]]))
            .collect();
        let mesh = Mesh {
            vertices,
            cells,
            boundary,
            h,
            patches: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Structured mesh of the unit square with `(n+1)^2` vertices and
    /// `2n^2` right triangles, all diagonals running south-west to
    /// north-east. With `with_macro` the mesh is one uniform refinement of
    /// the `n/2` mesh and carries the coarse cells as patches.
    pub fn unit_square(n: usize, with_macro: bool) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if with_macro && n % 2 == 1 {
            return Err(Error::InvalidArgument(format!(
                "a macro hierarchy needs an even n, got {n}"
            )));
        }
        if !with_macro {
            return Ok(structured_square(n));
        }
        let fine = structured_square(n / 2).refine_uniform();
        Ok(fine.renumber_to_lattice(n))
    }

    /// Splits every cell into four similar children through the edge
    /// midpoints. The children of input cell `k` form patch `k` of the
    /// result.
    pub fn refine_uniform(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                vertices.len() - 1
            })
        };

        let mut cells = Vec::with_capacity(4 * self.cells.len());
        let mut parent = Vec::with_capacity(4 * self.cells.len());
        let mut children = Vec::with_capacity(self.cells.len());
        for (k, &[a, b, c]) in self.cells.iter().enumerate() {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            let first = cells.len();
            cells.push([a, ab, ca]);
            cells.push([ab, b, bc]);
            cells.push([ca, bc, c]);
            cells.push([ab, bc, ca]);
            parent.extend([k; 4]);
            children.push((first..first + 4).collect());
        }

        let mut boundary = Vec::with_capacity(2 * self.boundary.len());
        for e in &self.boundary {
            let [a, b] = e.vertices;
            let m = mid(a, b, &mut vertices);
            boundary.push(BoundaryEdge {
                vertices: [a, m],
                marker: e.marker,
            });
            boundary.push(BoundaryEdge {
                vertices: [m, b],
                marker: e.marker,
            });
        }

        let h = cells
            .iter()
            .map(|c| longest_edge([vertices[c[0]], vertices[c[1]], vertices[c[2]]]))
            .collect();
        let area = (0..self.cells.len()).map(|k| self.area(k)).collect();
        Mesh {
            vertices,
            cells,
            boundary,
            h,
            patches: Some(MacroPatches {
                parent,
                children,
                area,
                diameter: self.h.clone(),
            }),
        }
    }

    /// Reorders the vertices of a unit-square lattice mesh to row-major
    /// lattice order and snaps coordinates to `i/n` exactly.
    fn renumber_to_lattice(self, n: usize) -> Mesh {
        let nf = n as f64;
        let lattice = |p: [f64; 2]| -> usize {
            let i = (p[0] * nf).round() as usize;
            let j = (p[1] * nf).round() as usize;
            j * (n + 1) + i
        };
        let map: Vec<usize> = self.vertices.iter().map(|&p| lattice(p)).collect();
        let mut vertices = vec![[0.0; 2]; self.vertices.len()];
        for (&p, &new) in self.vertices.iter().zip(&map) {
            let (i, j) = (new % (n + 1), new / (n + 1));
            vertices[new] = [i as f64 / nf, j as f64 / nf];
            debug_assert!((vertices[new][0] - p[0]).abs() < 1e-12);
        }
        let cells = self
            .cells
            .iter()
            .map(|c| [map[c[0]], map[c[1]], map[c[2]]])
            .collect();
        let boundary = self
            .boundary
            .iter()
            .map(|e| BoundaryEdge {
                vertices: [map[e.vertices[0]], map[e.vertices[1]]],
                marker: e.marker,
            })
            .collect();
        Mesh {
            vertices,
            cells,
            boundary,
            h: self.h,
            patches: self.patches,
        }
    }

    /// Parses the line-oriented ASCII format: `NV NC NB`, then `NV` lines
    /// `x y`, `NC` lines `i j k`, `NB` lines `i j marker`. Indices are
    /// 0-based and `#` starts a comment.
    pub fn parse(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            match lines.next() {
                Some((no, l)) => Ok((no, l.split_whitespace().collect())),
                None => Err(Error::Parse {
                    line: text.lines().count() + 1,
                    msg: format!("unexpected end of input, expected {what}"),
                }),
            }
        };

        let (no, head) = next("header `NV NC NB`")?;
        if head.len() != 3 {
            return Err(Error::Parse {
                line: no,
                msg: format!("header needs 3 counts, found {}", head.len()),
            });
        }
        let counts: Vec<usize> = head
            .iter()
            .map(|t| parse_token::<usize>(t, no))
            .collect::<Result<_>>()?;
        let (nv, nc, nb) = (counts[0], counts[1], counts[2]);

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (no, t) = next("vertex line")?;
            if t.len() != 2 {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("vertex line needs 2 coordinates, found {}", t.len()),
                });
            }
            let x = parse_token::<f64>(t[0], no)?;
            let y = parse_token::<f64>(t[1], no)?;
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Parse {
                    line: no,
                    msg: "non-finite coordinate".into(),
                });
            }
            vertices.push([x, y]);
        }

        let scale = bounding_scale(&vertices);
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (no, t) = next("cell line")?;
            if t.len() != 3 {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("cell line needs 3 indices, found {}", t.len()),
                });
            }
            let mut c = [0usize; 3];
            for (slot, tok) in c.iter_mut().zip(&t) {
                *slot = parse_index(tok, nv, no)?;
            }
            let a = signed_area(vertices[c[0]], vertices[c[1]], vertices[c[2]]);
            if a.abs() <= 1e-14 * scale * scale {
                return Err(Error::Parse {
                    line: no,
                    msg: "cell has zero area".into(),
                });
            }
            cells.push(c);
        }

        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (no, t) = next("boundary line")?;
            if t.len() != 3 {
                return Err(Error::Parse {
                    line: no,
                    msg: format!("boundary line needs `i j marker`, found {} fields", t.len()),
                });
            }
            let a = parse_index(t[0], nv, no)?;
            let b = parse_index(t[1], nv, no)?;
            let marker = parse_token::<i32>(t[2], no)?;
            boundary.push(BoundaryEdge {
                vertices: [a, b],
                marker,
            });
        }
        if let Some((no, _)) = lines.next() {
            return Err(Error::Parse {
                line: no,
                msg: "trailing content after the declared counts".into(),
            });
        }
        Mesh::new(vertices, cells, boundary).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })
    }

    /// Emits the ASCII format read by [`Mesh::parse`]. Coordinates use the
    /// shortest representation that round-trips bit-exactly.
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {}",
            self.vertices.len(),
            self.cells.len(),
            self.boundary.len()
        );
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", v[0], v[1]);
        }
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
        }
        for e in &self.boundary {
            let _ = writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], e.marker);
        }
        s
    }

    /// Checks orientation, conformity, boundary consistency, cell
    /// diameters and the patch tiling.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        let mut edges: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (k, c) in self.cells.iter().enumerate() {
            if c.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidMesh(format!("cell {k} out of range")));
            }
            if self.area(k) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} is not counterclockwise"
                )));
            }
            for e in 0..3 {
                let (a, b) = (c[e], c[(e + 1) % 3]);
                edges.entry(edge_key(a, b)).or_default().push((a, b));
            }
            let h = longest_edge(self.cell_coords(k));
            if (h - self.h[k]).abs() > 1e-15 * h.max(1.0) {
                return Err(Error::InvalidMesh(format!("stale diameter on cell {k}")));
            }
        }
        for (key, uses) in &edges {
            match uses.len() {
                1 => {}
                2 if uses[0] != uses[1] => {}
                2 => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {key:?} is shared with inconsistent orientation"
                    )))
                }
                m => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {key:?} is shared by {m} cells"
                    )))
                }
            }
        }
        for e in &self.boundary {
            let [a, b] = e.vertices;
            if a >= nv || b >= nv {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {a}-{b} out of range"
                )));
            }
            match edges.get(&edge_key(a, b)) {
                Some(uses) if uses.len() == 1 => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge {a}-{b} is not a boundary edge of the mesh"
                    )))
                }
            }
        }
        if let Some(p) = &self.patches {
            if p.parent.len() != self.cells.len() {
                return Err(Error::InvalidMesh("patch map has wrong length".into()));
            }
            for (patch, kids) in p.children.iter().enumerate() {
                let sum: f64 = kids.iter().map(|&k| self.area(k)).sum();
                if (sum - p.area[patch]).abs() > 1e-12 * p.area[patch] {
                    return Err(Error::InvalidMesh(format!(
                        "children of patch {patch} do not tile it"
                    )));
                }
                if kids.iter().any(|&k| p.parent[k] != patch) {
                    return Err(Error::InvalidMesh(format!("patch {patch} is inconsistent")));
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Diameter of cell `k` (its longest edge).
    pub fn h(&self, k: usize) -> f64 {
        self.h[k]
    }

    pub fn diameters(&self) -> &[f64] {
        &self.h
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn patches(&self) -> Option<&MacroPatches> {
        self.patches.as_ref()
    }

    pub fn cell_coords(&self, k: usize) -> [[f64; 2]; 3] {
        let c = self.cells[k];
        [
            self.vertices[c[0]],
            self.vertices[c[1]],
            self.vertices[c[2]],
        ]
    }

    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.cell_coords(k);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.cells.len()).map(|k| self.area(k)).sum()
    }

    /// Vertices lying on an edge with the Dirichlet marker.
    pub fn dirichlet_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.vertices.len()];
        for e in self
            .boundary
            .iter()
            .filter(|e| e.marker == DIRICHLET_MARKER)
        {
            on[e.vertices[0]] = true;
            on[e.vertices[1]] = true;
        }
        on
    }
}

fn bounding_scale(vertices: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in vertices {
        for d in 0..2 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    let s = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

fn parse_token<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<T>().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot read `{tok}`"),
    })
}

fn parse_index(tok: &str, nv: usize, line: usize) -> Result<usize> {
    let i = parse_token::<usize>(tok, line)?;
    if i >= nv {
        return Err(Error::Parse {
            line,
            msg: format!("vertex index {i} out of range (NV = {nv})"),
        });
    }
    Ok(i)
}

fn structured_square(n: usize) -> Mesh {
    let nf = n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / nf, j as f64 / nf]);
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            cells.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut boundary = Vec::with_capacity(4 * n);
    let mut push = |a, b| {
        boundary.push(BoundaryEdge {
            vertices: [a, b],
            marker: DIRICHLET_MARKER,
        })
    };
    for i in 0..n {
        push(idx(i, 0), idx(i + 1, 0));
    }
    for j in 0..n {
        push(idx(n, j), idx(n, j + 1));
    }
    for i in (0..n).rev() {
        push(idx(i + 1, n), idx(i, n));
    }
    for j in (0..n).rev() {
        push(idx(0, j + 1), idx(0, j));
    }
    let h = cells
        .iter()
        .map(|c: &[usize; 3]| longest_edge([vertices[c[0]], vertices[c[1]], vertices[c[2]]]))
        .collect();
    Mesh {
        vertices,
        cells,
        boundary,
        h,
        patches: None,
    }
}
