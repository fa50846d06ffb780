//! Pointwise derivative data.
//!
//! Jets live in fixed-size arrays so that hot loops over quadrature nodes
//! never allocate. Ambient dimensions up to [`MAX_DIM`] are supported.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

pub const MAX_DIM: usize = 6;

pub type Vector = [f64; MAX_DIM];
pub type Matrix = [[f64; MAX_DIM]; MAX_DIM];

pub const ZERO_VEC: Vector = [0.0; MAX_DIM];
pub const ZERO_MAT: Matrix = [[0.0; MAX_DIM]; MAX_DIM];

pub fn dot(dim: usize, a: &Vector, b: &Vector) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        s += a[i] * b[i];
    }
    s
}

pub fn norm2(dim: usize, a: &Vector) -> f64 {
    dot(dim, a, a)
}

pub fn mat_vec(dim: usize, m: &Matrix, v: &Vector) -> Vector {
    let mut out = ZERO_VEC;
    for i in 0..dim {
        let mut s = 0.0;
        for j in 0..dim {
            s += m[i][j] * v[j];
        }
        out[i] = s;
    }
    out
}

pub fn bilinear(dim: usize, m: &Matrix, a: &Vector, b: &Vector) -> f64 {
    dot(dim, a, &mat_vec(dim, m, b))
}

pub fn vec_from_slice(x: &[f64]) -> Vector {
    let mut v = ZERO_VEC;
    v[..x.len()].copy_from_slice(x);
    v
}

/// Symmetric (dim x dim) tensor, used for Hessians, T1(u) and Schouten tensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetricTensor {
    pub dim: usize,
    pub m: Matrix,
}

impl SymmetricTensor {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, m: ZERO_MAT }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = ZERO_MAT;
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Self { dim, m }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * other.m[i][j];
            }
        }
        s
    }

    pub fn norm2(&self) -> f64 {
        self.inner(self)
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        mat_vec(self.dim, &self.m, v)
    }

    pub fn eval(&self, a: &Vector, b: &Vector) -> f64 {
        bilinear(self.dim, &self.m, a, b)
    }

    /// Second elementary symmetric function of the eigenvalues.
    pub fn sigma2(&self) -> f64 {
        let t = self.trace();
        0.5 * (t * t - self.norm2())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] *= s;
            }
        }
        out
    }

    pub fn add_scaled_identity(&mut self, s: f64) {
        for i in 0..self.dim {
            self.m[i][i] += s;
        }
    }

    /// self += s * a ⊗ b (symmetrized when a != b is the caller's job).
    pub fn add_outer(&mut self, s: f64, a: &Vector, b: &Vector) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] += s * a[i] * b[j];
            }
        }
    }

    /// Largest absolute asymmetry |m_ij - m_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.m[i][j] - self.m[j][i]).abs());
            }
        }
        worst
    }
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub dim: usize,
    pub value: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

impl Jet2 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            value: 0.0,
            grad: ZERO_VEC,
            hess: ZERO_MAT,
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self {
            value: c,
            ..Self::zeros(dim)
        }
    }

    /// Jet of the coordinate function x^i at `point`.
    pub fn coordinate(dim: usize, i: usize, point: &[f64]) -> Self {
        let mut j = Self::constant(dim, point[i]);
        j.grad[i] = 1.0;
        j
    }

    /// Jet of r^2 = |x|^2 at `point`.
    pub fn radius_squared(dim: usize, point: &[f64]) -> Self {
        let mut j = Self::zeros(dim);
        for k in 0..dim {
            j.value += point[k] * point[k];
            j.grad[k] = 2.0 * point[k];
            j.hess[k][k] = 2.0;
        }
        j
    }

    pub fn laplacian(&self) -> f64 {
        (0..self.dim).map(|i| self.hess[i][i]).sum()
    }

    pub fn grad_norm2(&self) -> f64 {
        norm2(self.dim, &self.grad)
    }

    pub fn grad_dot(&self, other: &Jet2) -> f64 {
        dot(self.dim, &self.grad, &other.grad)
    }

    pub fn hess_tensor(&self) -> SymmetricTensor {
        SymmetricTensor {
            dim: self.dim,
            m: self.hess,
        }
    }

    /// ∇²u(a, b)
    pub fn hess_eval(&self, a: &Vector, b: &Vector) -> f64 {
        bilinear(self.dim, &self.hess, a, b)
    }

    /// Frobenius product of Hessians.
    pub fn hess_dot(&self, other: &Jet2) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.hess[i][j] * other.hess[i][j];
            }
        }
        s
    }

    /// Product rule.
    pub fn mul_jet(&self, other: &Jet2) -> Jet2 {
        let d = self.dim;
        let mut out = Jet2::zeros(d);
        out.value = self.value * other.value;
        for i in 0..d {
            out.grad[i] = self.grad[i] * other.value + self.value * other.grad[i];
        }
        for i in 0..d {
            for j in 0..d {
                out.hess[i][j] = self.hess[i][j] * other.value
                    + self.value * other.hess[i][j]
                    + self.grad[i] * other.grad[j]
                    + self.grad[j] * other.grad[i];
            }
        }
        out
    }

    /// Jet of f(u) given f(u), f'(u), f''(u).
    pub fn compose(&self, f0: f64, f1: f64, f2: f64) -> Jet2 {
        let d = self.dim;
        let mut out = Jet2::zeros(d);
        out.value = f0;
        for i in 0..d {
            out.grad[i] = f1 * self.grad[i];
        }
        for i in 0..d {
            for j in 0..d {
                out.hess[i][j] = f1 * self.hess[i][j] + f2 * self.grad[i] * self.grad[j];
            }
        }
        out
    }

    /// u^p for u > 0.
    pub fn powf(&self, p: f64) -> Jet2 {
        let u = self.value;
        let up = u.powf(p);
        self.compose(up, p * up / u, p * (p - 1.0) * up / (u * u))
    }

    pub fn ln(&self) -> Jet2 {
        let u = self.value;
        self.compose(u.ln(), 1.0 / u, -1.0 / (u * u))
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.compose(e, e, e)
    }

    pub fn recip(&self) -> Jet2 {
        let u = self.value;
        self.compose(1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u))
    }

    /// Boundary decomposition at a unit vector `point`.
    pub fn boundary(&self, point: &[f64]) -> BoundaryJet {
        let d = self.dim;
        let p = vec_from_slice(point);
        let normal = dot(d, &self.grad, &p);
        let mut tgrad = ZERO_VEC;
        for i in 0..d {
            tgrad[i] = self.grad[i] - normal * p[i];
        }
        let tlap = self.laplacian() - self.hess_eval(&p, &p) - (d as f64 - 1.0) * normal;
        BoundaryJet {
            dim: d,
            point: p,
            value: self.value,
            tgrad,
            tlap,
            normal,
        }
    }

    /// Total order on jet contents, used to canonicalize argument order.
    pub fn total_cmp(&self, other: &Jet2) -> Ordering {
        let d = self.dim;
        let mut ord = self.value.total_cmp(&other.value);
        for i in 0..d {
            ord = ord.then(self.grad[i].total_cmp(&other.grad[i]));
        }
        for i in 0..d {
            for j in i..d {
                ord = ord.then(self.hess[i][j].total_cmp(&other.hess[i][j]));
            }
        }
        ord
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut out = self;
        out.value += o.value;
        for i in 0..self.dim {
            out.grad[i] += o.grad[i];
            for j in 0..self.dim {
                out.hess[i][j] += o.hess[i][j];
            }
        }
        out
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self * -1.0
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, s: f64) -> Jet2 {
        let mut out = self;
        out.value *= s;
        for i in 0..self.dim {
            out.grad[i] *= s;
            for j in 0..self.dim {
                out.hess[i][j] *= s;
            }
        }
        out
    }
}

/// Jet2 plus third derivatives (only produced by polynomial fields).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3 {
    pub jet: Jet2,
    pub third: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl Jet3 {
    pub fn dim(&self) -> usize {
        self.jet.dim
    }

    /// Gradient of the Laplacian, ∂_i Δu.
    pub fn grad_laplacian(&self) -> Vector {
        let d = self.dim();
        let mut g = ZERO_VEC;
        for (i, gi) in g.iter_mut().enumerate().take(d) {
            *gi = (0..d).map(|k| self.third[i][k][k]).sum();
        }
        g
    }
}

/// Boundary data on S^n: value, tangential gradient (embedded), tangential
/// Laplacian, and outward normal derivative. Linear in the underlying function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryJet {
    pub dim: usize,
    pub point: Vector,
    pub value: f64,
    pub tgrad: Vector,
    pub tlap: f64,
    pub normal: f64,
}

impl BoundaryJet {
    pub fn n(&self) -> usize {
        self.dim - 1
    }

    pub fn tgrad_norm2(&self) -> f64 {
        norm2(self.dim, &self.tgrad)
    }

    pub fn tgrad_dot(&self, other: &BoundaryJet) -> f64 {
        dot(self.dim, &self.tgrad, &other.tgrad)
    }

    /// Full ambient gradient inner product ⟨∇u, ∇v⟩ = ⟨∇̄u, ∇̄v⟩ + ηu ηv.
    pub fn grad_dot(&self, other: &BoundaryJet) -> f64 {
        self.tgrad_dot(other) + self.normal * other.normal
    }

    pub fn constant(dim: usize, point: &[f64], c: f64) -> Self {
        Jet2::constant(dim, c).boundary(point)
    }

    pub fn coordinate(dim: usize, i: usize, point: &[f64]) -> Self {
        Jet2::coordinate(dim, i, point).boundary(point)
    }

    pub fn total_cmp(&self, other: &BoundaryJet) -> Ordering {
        let mut ord = self.value.total_cmp(&other.value);
        for i in 0..self.dim {
            ord = ord.then(self.tgrad[i].total_cmp(&other.tgrad[i]));
        }
        ord.then(self.tlap.total_cmp(&other.tlap))
            .then(self.normal.total_cmp(&other.normal))
    }
}

impl Add for BoundaryJet {
    type Output = BoundaryJet;
    fn add(self, o: BoundaryJet) -> BoundaryJet {
        let mut out = self;
        out.value += o.value;
        for i in 0..self.dim {
            out.tgrad[i] += o.tgrad[i];
        }
        out.tlap += o.tlap;
        out.normal += o.normal;
        out
    }
}

impl Mul<f64> for BoundaryJet {
    type Output = BoundaryJet;
    fn mul(self, s: f64) -> BoundaryJet {
        let mut out = self;
        out.value *= s;
        for i in 0..self.dim {
            out.tgrad[i] *= s;
        }
        out.tlap *= s;
        out.normal *= s;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_of_coordinate_function() {
        let mut p = [0.0; 5];
        p[0] = 1.0;
        let b = BoundaryJet::coordinate(5, 0, &p);
        assert_eq!(b.normal, 1.0);
        assert_eq!(b.tgrad_norm2(), 0.0);
        assert_eq!(b.tlap, -4.0);

        let mut q = [0.0; 5];
        q[1] = 1.0;
        let b = BoundaryJet::coordinate(5, 0, &q);
        assert_eq!(b.value, 0.0);
        assert_eq!(b.normal, 0.0);
        assert_eq!(b.tgrad_norm2(), 1.0);
        assert_eq!(b.tlap, 0.0);
    }

    #[test]
    fn product_rule_matches_r_squared() {
        let p = [0.1, -0.2, 0.3, 0.05];
        let mut r2 = Jet2::zeros(4);
        for i in 0..4 {
            let x = Jet2::coordinate(4, i, &p);
            r2 = r2 + x.mul_jet(&x);
        }
        assert_eq!(r2, Jet2::radius_squared(4, &p));
    }

    #[test]
    fn sigma2_of_diagonal() {
        let mut t = SymmetricTensor::zeros(3);
        t.m[0][0] = 1.0;
        t.m[1][1] = 2.0;
        t.m[2][2] = 3.0;
        assert_eq!(t.sigma2(), 11.0);
    }
}
