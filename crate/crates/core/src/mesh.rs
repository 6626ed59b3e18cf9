//! Simplicial meshes of intervals and axis-aligned rectangles.

use crate::error::{invalid, Result};

/// A conforming simplicial mesh of a bounded domain in one or two dimensions.
///
/// Node coordinates are stored with stride `dim`, element connectivity with
/// stride `dim + 1`. Meshes are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    measure: f64,
}

impl Mesh {
    /// Builds a mesh from raw coordinates and connectivity, validating it.
    pub fn from_parts(dim: usize, coords: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return invalid(format!("mesh dimension {dim} is not supported"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return invalid("coordinate array length is not a multiple of the dimension");
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return invalid("mesh coordinates must be finite");
        }
        let nv = dim + 1;
        if cells.is_empty() || !cells.len().is_multiple_of(nv) {
            return invalid("connectivity length is not a multiple of the simplex size");
        }
        let n_nodes = coords.len() / dim;
        let mut used = vec![false; n_nodes];
        for &i in &cells {
            if i >= n_nodes {
                return invalid(format!("element references node {i} of {n_nodes}"));
            }
            used[i] = true;
        }
        if let Some(orphan) = used.iter().position(|u| !u) {
            return invalid(format!("node {orphan} belongs to no element"));
        }
        let mut mesh = Self {
            dim,
            coords,
            cells,
            measure: 0.0,
        };
        let mut total = 0.0;
        for e in 0..mesh.n_elements() {
            let m = mesh.element_measure(e);
            if !(m > 0.0) {
                return invalid(format!("element {e} is degenerate"));
            }
            total += m;
        }
        mesh.measure = total;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    /// `|Ω|`, the sum of element measures.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Node indices of element `e` (length `dim + 1`).
    pub fn element(&self, e: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.cells[e * nv..(e + 1) * nv]
    }

    /// Node coordinate as a planar point (second component zero in 1-D).
    pub fn point(&self, i: usize) -> [f64; 2] {
        let p = self.node(i);
        if self.dim == 1 {
            [p[0], 0.0]
        } else {
            [p[0], p[1]]
        }
    }

    pub fn element_measure(&self, e: usize) -> f64 {
        let v = self.element(e);
        match self.dim {
            1 => (self.node(v[1])[0] - self.node(v[0])[0]).abs(),
            _ => {
                let (a, b, c) = (self.point(v[0]), self.point(v[1]), self.point(v[2]));
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
            }
        }
    }

    /// Largest element diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| {
                let v = self.element(e);
                let mut d: f64 = 0.0;
                for i in 0..v.len() {
                    for j in i + 1..v.len() {
                        let (a, b) = (self.point(v[i]), self.point(v[j]));
                        d = d.max((a[0] - b[0]).hypot(a[1] - b[1]));
                    }
                }
                d
            })
            .fold(0.0, f64::max)
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| f(self.node(i))).collect()
    }
}

/// Uniform partition of `(a, b)` into `n` elements.
pub fn build_interval_mesh(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return invalid(format!(
            "interval endpoints must satisfy a < b, got ({a}, {b})"
        ));
    }
    if n < 2 {
        return invalid(format!("interval mesh needs at least 2 elements, got {n}"));
    }
    let h = (b - a) / n as f64;
    let mut coords: Vec<f64> = (0..=n).map(|i| a + h * i as f64).collect();
    coords[n] = b;
    let cells = (0..n).flat_map(|i| [i, i + 1]).collect();
    Mesh::from_parts(1, coords, cells)
}

/// Rectangle `(0, lx) × (0, ly)` with every grid cell split into two triangles
/// along its lower-left to upper-right diagonal.
pub fn build_rect_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return invalid(format!("rectangle sides must be positive, got {lx} x {ly}"));
    }
    if nx < 1 || ny < 1 {
        return invalid(format!("rectangle mesh needs nx, ny >= 1, got {nx} x {ny}"));
    }
    let mut coords = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push(lx * i as f64 / nx as f64);
            coords.push(ly * j as f64 / ny as f64);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            cells.extend_from_slice(&[p00, p10, p11]);
            cells.extend_from_slice(&[p00, p11, p01]);
        }
    }
    Mesh::from_parts(2, coords, cells)
}

/// The contracted mesh `ε·Ω`: every coordinate multiplied by `eps`.
pub fn scale_mesh(mesh: &Mesh, eps: f64) -> Result<Mesh> {
    if !(eps > 0.0 && eps.is_finite()) {
        return invalid(format!("contraction factor must be positive, got {eps}"));
    }
    let coords = mesh.coords.iter().map(|c| c * eps).collect();
    Mesh::from_parts(mesh.dim, coords, mesh.cells.clone())
}
