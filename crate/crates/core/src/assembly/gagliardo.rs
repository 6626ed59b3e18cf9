//! Dense assembly of the halved Gagliardo form
//! `a(u, v) = ½ ∬_{Ω×Ω} (u(x) - u(y)) (v(x) - v(y)) / |x - y|^{n+2s} dx dy`
//! for P1 elements.
//!
//! Element pairs are integrated according to how they touch:
//!
//! * identical elements: `u(x) - u(y) = ∇u · (x - y)`, so only the tensor
//!   moment `∬ z zᵀ |z|^{-n-2s}` is needed. In 1-D it is closed form; in 2-D it
//!   reduces to an angular integral using the fact that `T ∩ (T + z)` is a
//!   homothetic copy of `T` scaled by `1 - |z| σ(z/|z|)`.
//! * pairs sharing a vertex or an edge: both elements are parametrized from the
//!   shared vertex and the product domain is split Duffy-style. The integrand
//!   is then `ξ^{n+1-2s}` times a function of the remaining variables, and the
//!   `ξ` integral is done exactly. Edge pairs keep a point singularity in the
//!   remaining cube, which is removed by a second radial split with a
//!   Gauss–Jacobi rule in the radius.
//! * disjoint pairs: tensor Gauss rules; pairs closer than `near_factor`
//!   diameters use composite rules on `2^{n·split_levels}` sub-elements.
//!
//! Every local contribution is a positive-weight sum of `c cᵀ` terms where
//! `c` annihilates constants, so `K` is symmetric, positive semidefinite and
//! `K 𝟙 = 0` up to rounding.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::params::FractionalParams;
use crate::quadrature::{gauss_jacobi, gauss_legendre, triangle_rule};

/// Quadrature controls for [`assemble_gagliardo_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Gauss order per element (tensorized for pairs).
    pub gauss_order: usize,
    /// Refinement levels of the composite rule used on near-field pairs.
    pub split_levels: usize,
    /// Pairs whose centroid distance is below this many diameters are
    /// near-field. The defaults avoid values that uniform meshes attain
    /// exactly, so the classification is unaffected by rounding under scaling.
    pub near_factor: f64,
    /// Points per direction for the regularized touching-pair integrals.
    pub touch_order: usize,
    /// Points per smooth arc of the angular integral for identical triangles.
    pub angular_order: usize,
}

impl QuadratureOptions {
    pub fn for_dim(dim: usize) -> Self {
        match dim {
            1 => Self {
                gauss_order: 4,
                split_levels: 2,
                near_factor: 3.5,
                touch_order: 16,
                angular_order: 24,
            },
            _ => Self {
                gauss_order: 4,
                split_levels: 1,
                near_factor: 2.25,
                touch_order: 8,
                angular_order: 24,
            },
        }
    }
}

/// Assembles `K` with the default quadrature for the mesh dimension.
pub fn assemble_gagliardo(mesh: &Mesh, params: &FractionalParams) -> Result<DMatrix<f64>> {
    assemble_gagliardo_with(mesh, params, &QuadratureOptions::for_dim(mesh.dim()))
}

pub fn assemble_gagliardo_with(
    mesh: &Mesh,
    params: &FractionalParams,
    opts: &QuadratureOptions,
) -> Result<DMatrix<f64>> {
    if params.n() != mesh.dim() {
        return Err(Error::Invalid(format!(
            "parameters are for dimension {} but the mesh has dimension {}",
            params.n(),
            mesh.dim()
        )));
    }
    if opts.gauss_order == 0 || opts.touch_order == 0 || opts.angular_order == 0 {
        return Err(Error::Invalid("quadrature orders must be positive".into()));
    }
    let ctx = Context::new(mesh, params.s(), opts);
    let n_el = mesh.n_elements();
    let mut k = DMatrix::<f64>::zeros(mesh.n_nodes(), mesh.n_nodes());

    const CHUNK: usize = 32;
    let rows: Vec<usize> = (0..n_el).collect();
    for chunk in rows.chunks(CHUNK) {
        let blocks: Vec<Vec<LocalBlock>> = chunk.par_iter().map(|&a| ctx.row(a)).collect();
        for row in &blocks {
            for blk in row {
                blk.scatter(&mut k);
            }
        }
    }
    // a(φ_i, 1) = 0 exactly; rebuilding the diagonal from the off-diagonal
    // entries keeps constants in the kernel to rounding.
    for i in 0..k.nrows() {
        let off: f64 = (0..k.ncols()).filter(|&j| j != i).map(|j| k[(i, j)]).sum();
        k[(i, i)] = -off;
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "Gagliardo assembly produced non-finite entries".into(),
        ));
    }
    Ok(k)
}

/// Tensor moment `∬_{T×T} z zᵀ |z|^{-n-2s} dz` for an element, as a 2×2 matrix
/// (only the `[0][0]` entry is used in 1-D). Exposed for testing.
pub fn self_moment(mesh: &Mesh, e: usize, s: f64, angular_order: usize) -> [[f64; 2]; 2] {
    let g = Geom::new(mesh, e);
    g.self_moment(s, &gauss_legendre(angular_order))
}

const MAX_DOF: usize = 6;

#[derive(Clone)]
struct LocalBlock {
    dofs: [usize; MAX_DOF],
    len: usize,
    mat: [[f64; MAX_DOF]; MAX_DOF],
}

impl LocalBlock {
    fn new(dofs: &[usize]) -> Self {
        let mut d = [0; MAX_DOF];
        d[..dofs.len()].copy_from_slice(dofs);
        Self {
            dofs: d,
            len: dofs.len(),
            mat: [[0.0; MAX_DOF]; MAX_DOF],
        }
    }

    #[inline]
    fn add_outer(&mut self, c: &[f64; MAX_DOF], w: f64) {
        let c = &c[..self.len];
        for (row, &ci) in self.mat.iter_mut().zip(c) {
            for (m, &cj) in row.iter_mut().zip(c) {
                *m += w * ci * cj;
            }
        }
    }

    fn scale(&mut self, f: f64) {
        for row in self.mat.iter_mut().take(self.len) {
            for v in row.iter_mut().take(self.len) {
                *v *= f;
            }
        }
    }

    fn scatter(&self, k: &mut DMatrix<f64>) {
        for i in 0..self.len {
            for j in 0..self.len {
                k[(self.dofs[i], self.dofs[j])] += self.mat[i][j];
            }
        }
    }
}

/// Element geometry with barycentric data.
#[derive(Clone)]
struct Geom {
    dim: usize,
    nodes: [usize; 3],
    verts: [[f64; 2]; 3],
    grads: [[f64; 2]; 3],
    measure: f64,
    centroid: [f64; 2],
    diam: f64,
}

impl Geom {
    fn new(mesh: &Mesh, e: usize) -> Self {
        let dim = mesh.dim();
        let idx = mesh.element(e);
        let mut nodes = [0; 3];
        let mut verts = [[0.0; 2]; 3];
        for (k, &i) in idx.iter().enumerate() {
            nodes[k] = i;
            verts[k] = mesh.point(i);
        }
        let mut grads = [[0.0; 2]; 3];
        let measure = mesh.element_measure(e);
        if dim == 1 {
            let h = verts[1][0] - verts[0][0];
            grads[0] = [-1.0 / h, 0.0];
            grads[1] = [1.0 / h, 0.0];
        } else {
            let [x0, y0] = verts[0];
            let [x1, y1] = verts[1];
            let [x2, y2] = verts[2];
            let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
            grads[0] = [(y1 - y2) / det, (x2 - x1) / det];
            grads[1] = [(y2 - y0) / det, (x0 - x2) / det];
            grads[2] = [(y0 - y1) / det, (x1 - x0) / det];
        }
        let nv = dim + 1;
        let mut centroid = [0.0; 2];
        for v in verts.iter().take(nv) {
            centroid[0] += v[0] / nv as f64;
            centroid[1] += v[1] / nv as f64;
        }
        let mut diam: f64 = 0.0;
        for i in 0..nv {
            for j in i + 1..nv {
                diam = diam.max(dist(verts[i], verts[j]));
            }
        }
        Self {
            dim,
            nodes,
            verts,
            grads,
            measure,
            centroid,
            diam,
        }
    }

    fn nv(&self) -> usize {
        self.dim + 1
    }

    fn local_index(&self, node: usize) -> Option<usize> {
        self.nodes[..self.nv()].iter().position(|&n| n == node)
    }

    fn self_moment(&self, s: f64, arc_rule: &crate::quadrature::Rule1d) -> [[f64; 2]; 2] {
        if self.dim == 1 {
            let h = self.measure;
            let m = 2.0 * h.powf(3.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
            return [[m, 0.0], [0.0, 0.0]];
        }
        // σ(ω) = Σ_i max(0, ∇λ_i · ω); breakpoints where ω ⟂ ∇λ_i.
        let tau = std::f64::consts::TAU;
        let mut breaks: Vec<f64> = Vec::with_capacity(7);
        for g in &self.grads {
            let base = g[1].atan2(g[0]);
            for off in [0.5, -0.5] {
                breaks.push((base + off * std::f64::consts::PI).rem_euclid(tau));
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.push(breaks[0] + tau);
        let mut acc = [[0.0; 2]; 2];
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi - lo <= 0.0 {
                continue;
            }
            for (t, wt) in arc_rule.iter() {
                let th = lo + (hi - lo) * t;
                let om = [th.cos(), th.sin()];
                let sigma: f64 = self
                    .grads
                    .iter()
                    .map(|g| (g[0] * om[0] + g[1] * om[1]).max(0.0))
                    .sum();
                let f = wt * (hi - lo) * sigma.powf(2.0 * s - 2.0);
                acc[0][0] += f * om[0] * om[0];
                acc[0][1] += f * om[0] * om[1];
                acc[1][1] += f * om[1] * om[1];
            }
        }
        let c = self.measure * 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s));
        acc[1][0] = acc[0][1];
        for row in acc.iter_mut() {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        acc
    }
}

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Reference rule in barycentric coordinates, weights summing to 1.
struct BaryRule {
    bary: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl BaryRule {
    fn interval(order: usize, levels: usize) -> Self {
        let g = gauss_legendre(order);
        let parts = 1usize << levels;
        let mut bary = Vec::new();
        let mut weights = Vec::new();
        for p in 0..parts {
            let (lo, len) = (p as f64 / parts as f64, 1.0 / parts as f64);
            for (t, w) in g.iter() {
                let x = lo + len * t;
                bary.push([1.0 - x, x, 0.0]);
                weights.push(w * len);
            }
        }
        Self { bary, weights }
    }

    fn triangle(order: usize, levels: usize) -> Self {
        let base = triangle_rule(order);
        let mut tris = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
        for _ in 0..levels {
            let mut next = Vec::with_capacity(tris.len() * 4);
            for t in &tris {
                let mid = |a: [f64; 3], b: [f64; 3]| {
                    [
                        0.5 * (a[0] + b[0]),
                        0.5 * (a[1] + b[1]),
                        0.5 * (a[2] + b[2]),
                    ]
                };
                let (m01, m12, m02) = (mid(t[0], t[1]), mid(t[1], t[2]), mid(t[0], t[2]));
                next.push([t[0], m01, m02]);
                next.push([m01, t[1], m12]);
                next.push([m02, m12, t[2]]);
                next.push([m01, m12, m02]);
            }
            tris = next;
        }
        let frac = 1.0 / tris.len() as f64;
        let mut bary = Vec::new();
        let mut weights = Vec::new();
        for t in &tris {
            for (p, w) in base.points.iter().zip(&base.weights) {
                let mut b = [0.0; 3];
                for k in 0..3 {
                    b[k] = t[0][k] + (t[1][k] - t[0][k]) * p[0] + (t[2][k] - t[0][k]) * p[1];
                }
                bary.push(b);
                weights.push(2.0 * w * frac);
            }
        }
        Self { bary, weights }
    }
}

/// Quadrature points of one element in physical space.
struct PointSet {
    x: Vec<[f64; 2]>,
    w: Vec<f64>,
    bary: Vec<[f64; 3]>,
}

impl PointSet {
    fn map(g: &Geom, rule: &BaryRule) -> Self {
        let nv = g.nv();
        let mut x = Vec::with_capacity(rule.bary.len());
        for b in &rule.bary {
            let mut p = [0.0; 2];
            for (bk, v) in b.iter().zip(&g.verts[..nv]) {
                p[0] += bk * v[0];
                p[1] += bk * v[1];
            }
            x.push(p);
        }
        Self {
            x,
            w: rule.weights.iter().map(|w| w * g.measure).collect(),
            bary: rule.bary.clone(),
        }
    }
}

struct Context {
    dim: usize,
    s: f64,
    p: f64,
    geoms: Vec<Geom>,
    far: Vec<PointSet>,
    near: Vec<PointSet>,
    near_factor: f64,
    touch: crate::quadrature::Rule1d,
    radial: crate::quadrature::Rule1d,
    moments: Vec<[[f64; 2]; 2]>,
}

impl Context {
    fn new(mesh: &Mesh, s: f64, opts: &QuadratureOptions) -> Self {
        let dim = mesh.dim();
        let geoms: Vec<Geom> = (0..mesh.n_elements()).map(|e| Geom::new(mesh, e)).collect();
        let (far_rule, near_rule) = if dim == 1 {
            (
                BaryRule::interval(opts.gauss_order, 0),
                BaryRule::interval(opts.gauss_order, opts.split_levels),
            )
        } else {
            (
                BaryRule::triangle(opts.gauss_order, 0),
                BaryRule::triangle(opts.gauss_order, opts.split_levels),
            )
        };
        let arc = gauss_legendre(opts.angular_order);
        Self {
            dim,
            s,
            p: dim as f64 + 2.0 * s,
            far: geoms.iter().map(|g| PointSet::map(g, &far_rule)).collect(),
            near: geoms.iter().map(|g| PointSet::map(g, &near_rule)).collect(),
            moments: geoms.iter().map(|g| g.self_moment(s, &arc)).collect(),
            geoms,
            near_factor: opts.near_factor,
            touch: gauss_legendre(opts.touch_order),
            radial: gauss_jacobi(opts.touch_order, 2.0 - 2.0 * s),
        }
    }

    /// All pair contributions `(a, b)` with `b >= a`.
    fn row(&self, a: usize) -> Vec<LocalBlock> {
        let ga = &self.geoms[a];
        let mut out = Vec::with_capacity(self.geoms.len() - a);
        out.push(self.identical(a));
        for b in a + 1..self.geoms.len() {
            let gb = &self.geoms[b];
            let shared: Vec<usize> = ga.nodes[..ga.nv()]
                .iter()
                .copied()
                .filter(|n| gb.local_index(*n).is_some())
                .collect();
            let blk = match shared.len() {
                0 => {
                    let d = dist(ga.centroid, gb.centroid);
                    let near = d < self.near_factor * ga.diam.max(gb.diam);
                    if near {
                        self.disjoint(ga, gb, &self.near[a], &self.near[b])
                    } else {
                        self.disjoint(ga, gb, &self.far[a], &self.far[b])
                    }
                }
                _ => self.touching(ga, gb, &shared),
            };
            out.push(blk);
        }
        out
    }

    fn identical(&self, a: usize) -> LocalBlock {
        let g = &self.geoms[a];
        let nv = g.nv();
        let mut blk = LocalBlock::new(&g.nodes[..nv]);
        let m = &self.moments[a];
        for i in 0..nv {
            for j in 0..nv {
                let (gi, gj) = (g.grads[i], g.grads[j]);
                let v = gi[0] * (m[0][0] * gj[0] + m[0][1] * gj[1])
                    + gi[1] * (m[1][0] * gj[0] + m[1][1] * gj[1]);
                blk.mat[i][j] = 0.5 * v;
            }
        }
        blk
    }

    fn disjoint(&self, ga: &Geom, gb: &Geom, pa: &PointSet, pb: &PointSet) -> LocalBlock {
        let (na, nb) = (ga.nv(), gb.nv());
        let mut dofs = [0usize; MAX_DOF];
        dofs[..na].copy_from_slice(&ga.nodes[..na]);
        dofs[na..na + nb].copy_from_slice(&gb.nodes[..nb]);
        let mut blk = LocalBlock::new(&dofs[..na + nb]);
        let half_p = -0.5 * self.p;
        let mut c = [0.0; MAX_DOF];
        for (i, x) in pa.x.iter().enumerate() {
            c[..na].copy_from_slice(&pa.bary[i][..na]);
            for (j, y) in pb.x.iter().enumerate() {
                let dx = x[0] - y[0];
                let dy = x[1] - y[1];
                let kern = (dx * dx + dy * dy).powf(half_p);
                for k in 0..nb {
                    c[na + k] = -pb.bary[j][k];
                }
                blk.add_outer(&c, pa.w[i] * pb.w[j] * kern);
            }
        }
        blk
    }

    fn touching(&self, ga: &Geom, gb: &Geom, shared: &[usize]) -> LocalBlock {
        let order = |g: &Geom| -> [usize; 3] {
            // local indices: shared nodes first (in the given order), then the rest
            let mut o = [0usize; 3];
            let mut k = 0;
            for &n in shared {
                o[k] = g.local_index(n).unwrap();
                k += 1;
            }
            for l in 0..g.nv() {
                if !shared.contains(&g.nodes[l]) {
                    o[k] = l;
                    k += 1;
                }
            }
            o
        };
        let (oa, ob) = (order(ga), order(gb));
        let (na, nb) = (ga.nv(), gb.nv());
        let ns = shared.len();

        // union dofs: shared, a-only, b-only; gradient rows for each
        let mut dofs = Vec::with_capacity(MAX_DOF);
        let mut grad_a = Vec::with_capacity(MAX_DOF);
        let mut grad_b = Vec::with_capacity(MAX_DOF);
        for k in 0..ns {
            dofs.push(shared[k]);
            grad_a.push(ga.grads[oa[k]]);
            grad_b.push(gb.grads[ob[k]]);
        }
        for &l in &oa[ns..na] {
            dofs.push(ga.nodes[l]);
            grad_a.push(ga.grads[l]);
            grad_b.push([0.0, 0.0]);
        }
        for &l in &ob[ns..nb] {
            dofs.push(gb.nodes[l]);
            grad_a.push([0.0, 0.0]);
            grad_b.push(gb.grads[l]);
        }
        let nd = dofs.len();
        let mut blk = LocalBlock::new(&dofs);

        // reference maps x = P + J x̂ anchored at the first shared vertex
        let pv = ga.verts[oa[0]];
        let jac = |g: &Geom, o: &[usize; 3]| -> [[f64; 2]; 2] {
            let v1 = g.verts[o[1]];
            let c0 = [v1[0] - pv[0], v1[1] - pv[1]];
            if g.dim == 1 {
                [c0, [0.0, 0.0]]
            } else {
                let v2 = g.verts[o[2]];
                [c0, [v2[0] - v1[0], v2[1] - v1[1]]]
            }
        };
        let (ja, jb) = (jac(ga, &oa), jac(gb, &ob));
        let det_ref = if self.dim == 1 {
            ga.measure * gb.measure
        } else {
            (2.0 * ga.measure) * (2.0 * gb.measure)
        };
        let xi_factor = 1.0 / (self.dim as f64 + 2.0 - 2.0 * self.s);
        let half_p = -0.5 * self.p;

        let mut c = [0.0; MAX_DOF];
        // integrand at ξ = 1 for reference points x̂, ŷ with region weight j
        let mut eval = |xh: [f64; 2], yh: [f64; 2], weight: f64, blk: &mut LocalBlock| {
            let da = [
                ja[0][0] * xh[0] + ja[1][0] * xh[1],
                ja[0][1] * xh[0] + ja[1][1] * xh[1],
            ];
            let db = [
                jb[0][0] * yh[0] + jb[1][0] * yh[1],
                jb[0][1] * yh[0] + jb[1][1] * yh[1],
            ];
            let (dx, dy) = (da[0] - db[0], da[1] - db[1]);
            let kern = (dx * dx + dy * dy).powf(half_p);
            for k in 0..nd {
                c[k] = grad_a[k][0] * da[0] + grad_a[k][1] * da[1]
                    - (grad_b[k][0] * db[0] + grad_b[k][1] * db[1]);
            }
            blk.add_outer(&c, weight * kern);
        };

        if self.dim == 1 {
            for (eta, w) in self.touch.iter() {
                eval([1.0, 0.0], [eta, 0.0], w, &mut blk);
                eval([eta, 0.0], [1.0, 0.0], w, &mut blk);
            }
        } else if ns == 1 {
            for (e1, w1) in self.touch.iter() {
                for (e2, w2) in self.touch.iter() {
                    for (e3, w3) in self.touch.iter() {
                        let w = w1 * w2 * w3 * e2;
                        eval([1.0, e1], [e2, e2 * e3], w, &mut blk);
                        eval([e2, e2 * e1], [1.0, e3], w, &mut blk);
                    }
                }
            }
        } else {
            // shared edge: singular corner at (η1, η2, η3) = (0, 1, 0)
            let rho_pow = 2.0 * self.s;
            for (rho, wr) in self.radial.iter() {
                let corr = rho.powf(rho_pow);
                for (t1, w1) in self.touch.iter() {
                    for (t2, w2) in self.touch.iter() {
                        let base = wr * w1 * w2 * corr;
                        for k in 0..3 {
                            let mut wv = [rho * t1, rho * t2, 0.0];
                            // w_k = ρ, others ρ t
                            match k {
                                0 => wv = [rho, rho * t1, rho * t2],
                                1 => wv = [rho * t1, rho, rho * t2],
                                _ => wv[2] = rho,
                            }
                            let (e1, e2, e3) = (wv[0], 1.0 - wv[1], wv[2]);
                            let w = base * e2;
                            eval([1.0, e1], [e2, e2 * e3], w, &mut blk);
                            eval([e2, e2 * e1], [1.0, e3], w, &mut blk);
                        }
                    }
                }
            }
        }
        blk.scale(xi_factor * det_ref);
        blk
    }
}
