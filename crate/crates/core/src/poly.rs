//! Dense multivariate polynomials in a graded monomial basis.
//!
//! Monomials are ordered by total degree, so the monomials of degree <= k form
//! a prefix of the basis. Evaluation builds all monomial values with one
//! multiplication each (every monomial is a parent times one variable), after
//! which values and derivatives are plain dot products against precomputed
//! derivative coefficient vectors.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet2, Jet3, MAX_DIM};

pub type Exponents = [u8; MAX_DIM];

#[derive(Debug)]
pub struct MonomialBasis {
    pub dim: usize,
    pub degree: usize,
    exps: Vec<Exponents>,
    /// (parent index, variable) for every monomial except the constant.
    parent: Vec<(usize, usize)>,
    /// Number of monomials of total degree <= k, for k = 0..=degree.
    prefix: Vec<usize>,
    index: HashMap<Exponents, usize>,
}

fn compositions(dim: usize, total: usize, out: &mut Vec<Exponents>) {
    fn rec(dim: usize, pos: usize, left: usize, cur: &mut Exponents, out: &mut Vec<Exponents>) {
        if pos == dim - 1 {
            cur[pos] = left as u8;
            out.push(*cur);
            cur[pos] = 0;
            return;
        }
        for k in (0..=left).rev() {
            cur[pos] = k as u8;
            rec(dim, pos + 1, left - k, cur, out);
        }
        cur[pos] = 0;
    }
    let mut cur = [0u8; MAX_DIM];
    rec(dim, 0, total, &mut cur, out);
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        let mut exps = Vec::new();
        let mut prefix = Vec::with_capacity(degree + 1);
        for d in 0..=degree {
            compositions(dim, d, &mut exps);
            prefix.push(exps.len());
        }
        let index: HashMap<Exponents, usize> =
            exps.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut parent = vec![(0, 0); exps.len()];
        for (i, e) in exps.iter().enumerate().skip(1) {
            let var = e.iter().position(|&k| k > 0).unwrap();
            let mut p = *e;
            p[var] -= 1;
            parent[i] = (index[&p], var);
        }
        Self {
            dim,
            degree,
            exps,
            parent,
            prefix,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    /// Number of monomials of total degree <= k.
    pub fn count_upto(&self, k: usize) -> usize {
        self.prefix[k.min(self.degree)]
    }

    pub fn exponents(&self, i: usize) -> &Exponents {
        &self.exps[i]
    }

    pub fn total_degree(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&k| k as usize).sum()
    }

    pub fn index_of(&self, e: &Exponents) -> Option<usize> {
        self.index.get(e).copied()
    }

    /// Values of the first `count` monomials at `x`.
    pub fn values_into(&self, x: &[f64], count: usize, out: &mut [f64]) {
        out[0] = 1.0;
        for i in 1..count {
            let (p, v) = self.parent[i];
            out[i] = out[p] * x[v];
        }
    }

    /// Coefficients of ∂_k p, expressed in this basis (length count_upto(degree-1)).
    fn derivative(&self, coef: &[f64], k: usize, src_len: usize) -> Vec<f64> {
        let out_len = if self.degree == 0 {
            1
        } else {
            self.count_upto(self.degree - 1)
        };
        let mut out = vec![0.0; out_len.max(1)];
        for (i, &c) in coef.iter().enumerate().take(src_len) {
            let e = self.exps[i];
            if c == 0.0 || e[k] == 0 {
                continue;
            }
            let mut f = e;
            f[k] -= 1;
            let j = self.index[&f];
            out[j] += c * e[k] as f64;
        }
        out
    }
}

thread_local! {
    static SHARED_BASES: std::cell::RefCell<HashMap<(usize, usize), Arc<MonomialBasis>>> =
        std::cell::RefCell::new(HashMap::new());
}

/// Bases are immutable; share them between polynomials of equal shape.
pub fn basis(dim: usize, degree: usize) -> Arc<MonomialBasis> {
    SHARED_BASES.with(|m| {
        m.borrow_mut()
            .entry((dim, degree))
            .or_insert_with(|| Arc::new(MonomialBasis::new(dim, degree)))
            .clone()
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coef: f64,
}

/// Polynomial with cached derivative coefficient vectors.
#[derive(Clone, Debug)]
pub struct Polynomial {
    basis: Arc<MonomialBasis>,
    coef: Vec<f64>,
    grad: Vec<Vec<f64>>,
    /// Upper-triangular (i <= j) second derivatives, row-major.
    hess: Vec<Vec<f64>>,
}

fn tri_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

impl Polynomial {
    pub fn from_coefficients(basis: Arc<MonomialBasis>, coef: Vec<f64>) -> Result<Self> {
        if coef.len() != basis.len() {
            return Err(Error::Validation(format!(
                "expected {} coefficients, got {}",
                basis.len(),
                coef.len()
            )));
        }
        if let Some(i) = coef.iter().position(|c| !c.is_finite()) {
            return Err(Error::Validation(format!("coefficient {i} is not finite")));
        }
        let d = basis.dim;
        let grad: Vec<Vec<f64>> = (0..d)
            .map(|k| basis.derivative(&coef, k, coef.len()))
            .collect();
        let mut hess = Vec::with_capacity(d * (d + 1) / 2);
        let glen = grad[0].len();
        for i in 0..d {
            for j in i..d {
                let mut h = basis.derivative(&grad[i], j, glen);
                let hl = if basis.degree >= 2 {
                    basis.count_upto(basis.degree - 2)
                } else {
                    1
                };
                h.truncate(hl);
                hess.push(h);
            }
        }
        Ok(Self {
            basis,
            coef,
            grad,
            hess,
        })
    }

    pub fn from_terms(dim: usize, terms: &[Term]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Validation(format!("unsupported dimension {dim}")));
        }
        let mut degree = 0usize;
        for t in terms {
            if t.exponents.len() != dim {
                return Err(Error::Validation(format!(
                    "term exponent vector has length {}, expected {dim}",
                    t.exponents.len()
                )));
            }
            degree = degree.max(t.exponents.iter().map(|&k| k as usize).sum());
        }
        if degree > 40 {
            return Err(Error::Validation(format!("degree {degree} too large")));
        }
        let b = basis(dim, degree);
        let mut coef = vec![0.0; b.len()];
        for t in terms {
            let mut e = [0u8; MAX_DIM];
            for (k, &x) in t.exponents.iter().enumerate() {
                e[k] = x as u8;
            }
            coef[b.index_of(&e).unwrap()] += t.coef;
        }
        Self::from_coefficients(b, coef)
    }

    pub fn terms(&self) -> Vec<Term> {
        let d = self.basis.dim;
        self.coef
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| Term {
                exponents: self.basis.exponents(i)[..d].iter().map(|&k| k as u32).collect(),
                coef: c,
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn map_coefficients(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_coefficients(self.basis.clone(), self.coef.iter().map(|&c| f(c)).collect())
            .expect("finite coefficients")
    }

    /// p + s
    pub fn add_constant(&self, s: f64) -> Self {
        let mut c = self.coef.clone();
        c[0] += s;
        Self::from_coefficients(self.basis.clone(), c).expect("finite coefficients")
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut m = vec![0.0; self.basis.len()];
        self.basis.values_into(x, m.len(), &mut m);
        dotp(&self.coef, &m)
    }

    pub fn jet(&self, x: &[f64]) -> Jet2 {
        let n = self.basis.len();
        let mut m = vec![0.0; n];
        self.basis.values_into(x, n, &mut m);
        self.jet_from_monomials(&m)
    }

    /// Jet given precomputed monomial values (at least `basis.len()` of them).
    pub fn jet_from_monomials(&self, m: &[f64]) -> Jet2 {
        let d = self.basis.dim;
        let mut j = Jet2::zeros(d);
        j.value = dotp(&self.coef, m);
        for k in 0..d {
            j.grad[k] = dotp(&self.grad[k], m);
        }
        for a in 0..d {
            for b in a..d {
                let h = dotp(&self.hess[tri_index(d, a, b)], m);
                j.hess[a][b] = h;
                j.hess[b][a] = h;
            }
        }
        j
    }

    pub fn jet3(&self, x: &[f64]) -> Jet3 {
        let d = self.basis.dim;
        let n = self.basis.len();
        let mut m = vec![0.0; n];
        self.basis.values_into(x, n, &mut m);
        let jet = self.jet_from_monomials(&m);
        let mut third = [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM];
        for a in 0..d {
            for b in a..d {
                let h = &self.hess[tri_index(d, a, b)];
                for c in 0..d {
                    let t = self.basis.derivative(h, c, h.len());
                    let v = dotp(&t, &m);
                    third[a][b][c] = v;
                    third[b][a][c] = v;
                }
            }
        }
        Jet3 { jet, third }
    }
}

fn dotp(c: &[f64], m: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in c.iter().zip(m) {
        s += a * b;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_graded_with_parents_first() {
        let b = MonomialBasis::new(5, 4);
        assert_eq!(b.len(), 126);
        assert_eq!(b.count_upto(2), 21);
        for i in 1..b.len() {
            assert!(b.parent[i].0 < i);
            assert!(b.total_degree(b.parent[i].0) + 1 == b.total_degree(i));
        }
    }

    #[test]
    fn r_squared_jet() {
        let terms: Vec<Term> = (0..5)
            .map(|i| {
                let mut e = vec![0; 5];
                e[i] = 2;
                Term {
                    exponents: e,
                    coef: 1.0,
                }
            })
            .collect();
        let p = Polynomial::from_terms(5, &terms).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4, 0.05];
        let j = p.jet(&x);
        assert_eq!(j, Jet2::radius_squared(5, &x));
    }

    #[test]
    fn third_derivatives_of_cubic() {
        // x0^2 x1 -> d^3/dx0 dx0 dx1 = 2
        let p = Polynomial::from_terms(
            3,
            &[Term {
                exponents: vec![2, 1, 0],
                coef: 1.0,
            }],
        )
        .unwrap();
        let j = p.jet3(&[0.3, 0.4, 0.5]);
        assert_eq!(j.third[0][0][1], 2.0);
        assert_eq!(j.third[0][1][0], 2.0);
        assert_eq!(j.third[1][0][0], 2.0);
        assert_eq!(j.third[1][1][0], 0.0);
    }
}
