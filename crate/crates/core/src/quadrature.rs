//! Gauss rules on the unit interval and the reference triangle.

use nalgebra::{DMatrix, SymmetricEigen};

/// A one-dimensional rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre rule with `n` points on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Rule1d {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z_old = z;
            z = z_old - p1 / dp;
            if (z - z_old).abs() <= 1e-15 {
                break;
            }
        }
        // recompute the derivative at the converged root
        let (mut p1, mut p2) = (1.0, 0.0);
        for j in 1..=n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
        }
        dp = nf * (z * p1 - p2) / (z * z - 1.0);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        points[i] = 0.5 * (1.0 - z);
        points[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Rule1d { points, weights }
}

/// Gauss–Jacobi rule with `n` points for `∫_0^1 x^beta f(x) dx`, `beta > -1`.
///
/// Nodes and weights come from the eigen-decomposition of the Jacobi matrix
/// (Golub–Welsch). The returned weights already include `x^beta`.
pub fn gauss_jacobi(n: usize, beta: f64) -> Rule1d {
    assert!(n >= 1 && beta > -1.0);
    // Jacobi polynomials on [-1, 1] with weight (1 - t)^0 (1 + t)^beta.
    let (a, b) = (0.0_f64, beta);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        jac[(k, k)] = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if k + 1 < n {
            let k1 = kf + 1.0;
            let s1 = 2.0 * k1 + a + b;
            let num = 4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + a + b);
            let den = s1 * s1 * (s1 + 1.0) * (s1 - 1.0);
            let off = (num / den).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mu0 = 1.0 / (beta + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (1.0 + t), mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Rule1d {
        points: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// A rule on the reference triangle `{(0,0), (1,0), (0,1)}` (area 1/2).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Collapsed (Duffy) tensor Gauss rule with `n × n` points. Exact for
/// polynomials of total degree `2n - 2`.
pub fn triangle_rule(n: usize) -> TriangleRule {
    let g = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (x, wx) in g.iter() {
        for (y, wy) in g.iter() {
            points.push([x, y * (1.0 - x)]);
            weights.push(wx * wy * (1.0 - x));
        }
    }
    TriangleRule { points, weights }
}
