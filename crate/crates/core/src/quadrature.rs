//! Tensor-product quadrature on S^n and B^{n+1}.
//!
//! Sphere rules recurse on the last coordinate: x = (√(1−t²) y, t) with
//! y ∈ S^{k−2}, so dσ_{k−1} = (1−t²)^{(k−3)/2} dt dσ_{k−2}; each level is a
//! Gauss–Gegenbauer rule and the circle uses an even number of equispaced
//! angles. The resulting rule is invariant under x → −x, which lets the ball
//! rule use Gauss–Jacobi nodes in s = ρ² (odd radial powers integrate to zero
//! against the sphere factor anyway).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::MAX_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Ball,
    Sphere,
}

/// Neumaier's variant of compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Γ(x) for x a positive multiple of 1/2, given as 2x.
pub(crate) fn gamma_half(two_x: u32) -> f64 {
    assert!(two_x > 0);
    if two_x % 2 == 0 {
        (1..two_x / 2).map(|k| k as f64).product()
    } else {
        // Γ(k + 1/2) = (2k)! √π / (4^k k!)
        let k = (two_x - 1) / 2;
        let mut g = std::f64::consts::PI.sqrt();
        for j in 0..k {
            g *= j as f64 + 0.5;
        }
        g
    }
}

/// Volume of the unit sphere S^n.
pub fn sphere_volume(n: usize) -> f64 {
    // ω_n = 2 π^{(n+1)/2} / Γ((n+1)/2)
    2.0 * std::f64::consts::PI.powf((n as f64 + 1.0) / 2.0) / gamma_half(n as u32 + 1)
}

/// Gauss–Jacobi rule for (1−x)^α (1+x)^β on [−1, 1] with α, β multiples of 1/2.
pub fn gauss_jacobi(q: usize, two_alpha: u32, two_beta: u32) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let a = two_alpha as f64 / 2.0;
    let b = two_beta as f64 / 2.0;
    let ab = a + b;
    let alpha_k = |k: usize| -> f64 {
        let k = k as f64;
        if k == 0.0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * k + ab) * (2.0 * k + ab + 2.0))
        }
    };
    let beta_k = |k: usize| -> f64 {
        let k = k as f64;
        4.0 * k * (k + a) * (k + b) * (k + ab)
            / ((2.0 * k + ab).powi(2) * (2.0 * k + ab + 1.0) * (2.0 * k + ab - 1.0))
    };
    let mu0 = 2f64.powf(ab + 1.0) * gamma_half(two_alpha + 2) * gamma_half(two_beta + 2)
        / gamma_half(two_alpha + two_beta + 4);

    let mut jm = DMatrix::<f64>::zeros(q, q);
    for k in 0..q {
        jm[(k, k)] = alpha_k(k);
        if k + 1 < q {
            let s = beta_k(k + 1).sqrt();
            jm[(k, k + 1)] = s;
            jm[(k + 1, k)] = s;
        }
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jm).eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.total_cmp(y));

    // Newton polish on the monic recurrence, then Christoffel weights from the
    // orthonormal recurrence.
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (mut p0, mut p1) = (0.0, 1.0);
            let (mut d0, mut d1) = (0.0, 0.0);
            for k in 0..q {
                let bk = if k == 0 { 0.0 } else { beta_k(k) };
                let p2 = (*x - alpha_k(k)) * p1 - bk * p0;
                let d2 = p1 + (*x - alpha_k(k)) * d1 - bk * d0;
                p0 = p1;
                p1 = p2;
                d0 = d1;
                d1 = d2;
            }
            if d1 != 0.0 {
                let dx = p1 / d1;
                if dx.is_finite() {
                    *x -= dx;
                }
            }
        }
    }
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let mut s = 1.0;
            let (mut pm, mut p) = (0.0, 1.0);
            for k in 0..q - 1 {
                let sb = if k == 0 { 0.0 } else { beta_k(k).sqrt() };
                let pn = ((x - alpha_k(k)) * p - sb * pm) / beta_k(k + 1).sqrt();
                pm = p;
                p = pn;
                s += p * p;
            }
            mu0 / s
        })
        .collect();

    if two_alpha == two_beta {
        let mut xs = nodes.clone();
        let mut ws = weights.clone();
        for i in 0..q {
            let j = q - 1 - i;
            xs[i] = 0.5 * (nodes[i] - nodes[j]);
            ws[i] = 0.5 * (weights[i] + weights[j]);
        }
        if q % 2 == 1 {
            xs[q / 2] = 0.0;
        }
        return (xs, ws);
    }
    (nodes, weights)
}

/// Shape of a sphere rule. `polar_degree` raises the resolution along the
/// polar axis only; `axis` rotates the polar axis (default: last coordinate).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereRuleSpec {
    pub degree: usize,
    pub polar_degree: Option<usize>,
    pub axis: Option<Vec<f64>>,
}

impl SphereRuleSpec {
    pub fn isotropic(degree: usize) -> Self {
        Self {
            degree,
            polar_degree: None,
            axis: None,
        }
    }

    pub fn aligned(degree: usize, polar_degree: usize, axis: &[f64]) -> Self {
        Self {
            degree,
            polar_degree: Some(polar_degree),
            axis: Some(axis.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRuleSpec {
    pub sphere: SphereRuleSpec,
    /// Radial exactness (in x); defaults to the sphere degree.
    pub radial_degree: Option<usize>,
}

impl BallRuleSpec {
    pub fn isotropic(degree: usize) -> Self {
        Self {
            sphere: SphereRuleSpec::isotropic(degree),
            radial_degree: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub domain: Domain,
    pub dim: usize,
    pub exactness_degree: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn check_dim(n: usize) -> Result<()> {
    if !(1..MAX_DIM).contains(&n) {
        return Err(Error::Validation(format!(
            "unsupported dimension n = {n} (need 1 <= n <= {})",
            MAX_DIM - 1
        )));
    }
    Ok(())
}

/// Nodes and weights on S^{k−1} ⊂ R^k with `top` points along the last axis.
fn sphere_points(k: usize, degree: usize, top_degree: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if k == 2 {
        let mut m = top_degree.max(degree) + 1;
        if m % 2 == 1 {
            m += 1;
        }
        let w = 2.0 * std::f64::consts::PI / m as f64;
        let pts = (0..m)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
        return (pts, vec![w; m]);
    }
    let (inner_pts, inner_w) = sphere_points(k - 1, degree, degree);
    let q = (top_degree + 1).div_ceil(2);
    let (ts, tw) = gauss_jacobi(q, k as u32 - 3, k as u32 - 3);
    let mut pts = Vec::with_capacity(q * inner_pts.len());
    let mut ws = Vec::with_capacity(q * inner_pts.len());
    for (t, wt) in ts.iter().zip(&tw) {
        let s = (1.0 - t * t).max(0.0).sqrt();
        for (y, wy) in inner_pts.iter().zip(&inner_w) {
            let mut p: Vec<f64> = y.iter().map(|v| v * s).collect();
            p.push(*t);
            pts.push(p);
            ws.push(wt * wy);
        }
    }
    (pts, ws)
}

/// Householder reflection sending e_last to `axis` (unit), as a row-major matrix.
fn reflection_to(axis: &[f64]) -> Vec<Vec<f64>> {
    let d = axis.len();
    let mut v: Vec<f64> = axis.iter().map(|a| -a).collect();
    v[d - 1] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut h = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            h[i][j] = if i == j { 1.0 } else { 0.0 };
            if vv > 1e-300 {
                h[i][j] -= 2.0 * v[i] * v[j] / vv;
            }
        }
    }
    h
}

fn rules_cache() -> &'static Mutex<HashMap<String, Arc<QuadratureRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<QuadratureRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

const CHUNK: usize = 8192;

impl QuadratureRule {
    /// Rule exact on polynomials of total degree <= `exactness_degree`.
    pub fn build(domain: Domain, n: usize, exactness_degree: usize) -> Result<Self> {
        match domain {
            Domain::Sphere => Self::sphere_with(n, &SphereRuleSpec::isotropic(exactness_degree)),
            Domain::Ball => Self::ball_with(n, &BallRuleSpec::isotropic(exactness_degree)),
        }
    }

    pub fn sphere(n: usize, degree: usize) -> Result<Self> {
        Self::build(Domain::Sphere, n, degree)
    }

    pub fn ball(n: usize, degree: usize) -> Result<Self> {
        Self::build(Domain::Ball, n, degree)
    }

    /// Shared, memoized rules.
    pub fn cached(domain: Domain, n: usize, degree: usize) -> Result<Arc<Self>> {
        let key = format!("{domain:?}/{n}/{degree}");
        if let Some(r) = rules_cache().lock().unwrap().get(&key) {
            return Ok(r.clone());
        }
        let rule = Arc::new(Self::build(domain, n, degree)?);
        rules_cache().lock().unwrap().insert(key, rule.clone());
        Ok(rule)
    }

    pub fn sphere_with(n: usize, spec: &SphereRuleSpec) -> Result<Self> {
        check_dim(n)?;
        if spec.degree < 1 {
            return Err(Error::Validation("exactness degree must be >= 1".into()));
        }
        let d = n + 1;
        let top = spec.polar_degree.unwrap_or(spec.degree).max(spec.degree);
        let (pts, ws) = sphere_points(d, spec.degree, top);
        let mut nodes = Vec::with_capacity(pts.len() * d);
        let refl = match &spec.axis {
            Some(a) => {
                if a.len() != d {
                    return Err(Error::Validation(format!(
                        "axis has length {}, expected {d}",
                        a.len()
                    )));
                }
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (na - 1.0).abs() > 1e-12 {
                    return Err(Error::Validation("axis must be a unit vector".into()));
                }
                Some(reflection_to(a))
            }
            None => None,
        };
        for p in &pts {
            match &refl {
                Some(h) => {
                    for row in h.iter() {
                        nodes.push(row.iter().zip(p).map(|(a, b)| a * b).sum());
                    }
                }
                None => nodes.extend_from_slice(p),
            }
        }
        Ok(Self {
            domain: Domain::Sphere,
            dim: d,
            exactness_degree: spec.degree,
            nodes,
            weights: ws,
        })
    }

    pub fn ball_with(n: usize, spec: &BallRuleSpec) -> Result<Self> {
        let sphere = Self::sphere_with(n, &spec.sphere)?;
        let rdeg = spec.radial_degree.unwrap_or(spec.sphere.degree);
        let q = (rdeg / 2 + 1).div_ceil(2).max(1);
        let (zs, zw) = gauss_jacobi(q, 0, n as u32 - 1);
        let scale = 2f64.powf(-(n as f64 + 3.0) / 2.0);
        let d = n + 1;
        let mut nodes = Vec::with_capacity(q * sphere.nodes.len());
        let mut weights = Vec::with_capacity(q * sphere.weights.len());
        for (z, wz) in zs.iter().zip(&zw) {
            let rho = (0.5 * (1.0 + z)).sqrt();
            for i in 0..sphere.len() {
                for x in sphere.node(i) {
                    nodes.push(rho * x);
                }
                weights.push(wz * scale * sphere.weights[i]);
            }
        }
        debug_assert_eq!(nodes.len(), weights.len() * d);
        Ok(Self {
            domain: Domain::Ball,
            dim: d,
            exactness_degree: spec.sphere.degree.min(rdeg),
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n(&self) -> usize {
        self.dim - 1
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        let mut s = Neumaier::default();
        for &w in &self.weights {
            s.add(w);
        }
        s.total()
    }

    /// Σ w_i f(x_i) with compensated summation in node order.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        Ok(self.integrate_multi(1, |x, out| out[0] = f(x))?[0])
    }

    /// Integrates k functions at once; `f(x, out)` fills `out[..k]`.
    /// Node evaluation runs in parallel into a buffer, the reduction is serial,
    /// so results do not depend on the thread count.
    pub fn integrate_multi<F>(&self, k: usize, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let mut sums = vec![Neumaier::default(); k];
        let mut buf = vec![0.0; CHUNK * k];
        let total = self.len();
        let mut start = 0;
        while start < total {
            let end = (start + CHUNK).min(total);
            let len = end - start;
            buf[..len * k]
                .par_chunks_mut(k)
                .enumerate()
                .for_each(|(i, out)| f(self.node(start + i), out));
            for i in 0..len {
                let w = self.weights[start + i];
                for (c, s) in sums.iter_mut().enumerate() {
                    let v = buf[i * k + c];
                    if !v.is_finite() {
                        return Err(Error::Numeric(format!(
                            "integrand component {c} is {v} at node {} = {:?}",
                            start + i,
                            self.node(start + i)
                        )));
                    }
                    s.add(w * v);
                }
            }
            start = end;
        }
        Ok(sums.iter().map(|s| s.total()).collect())
    }

    /// Evaluate a function at every node (parallel), in node order.
    pub fn map_nodes<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        (0..self.len()).into_par_iter().map(|i| f(self.node(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gamma_half_values() {
        assert_eq!(gamma_half(2), 1.0);
        assert_eq!(gamma_half(8), 6.0);
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(5) - 0.75 * PI.sqrt() * 1.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_volumes() {
        assert!((sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_volume(4) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
        assert!((sphere_volume(5) - PI.powi(3)).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_small() {
        let (x, w) = gauss_jacobi(2, 0, 0);
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ball_second_moment() {
        let rule = QuadratureRule::ball(4, 2).unwrap();
        let v = rule.integrate(|x| x[0] * x[0]).unwrap();
        assert!((v - 8.0 * PI * PI / 105.0).abs() < 1e-14);
    }
}
