//! Conformal self-maps of the unit ball and boundary balancing.
//!
//! A map is Φ(x) = R·T_b(x) with R orthogonal and
//! T_b(x) = ((1 − |b|²)(x − b) − |x − b|² b) / D(x),  D(x) = 1 − 2⟨x,b⟩ + |b|²|x|².
//! T_b sends b to 0, T_b⁻¹ = T_{−b}, and DT_b is λ(x) times an orthogonal
//! matrix with λ = (1 − |b|²)/D, so |J_Φ| = λ^{n+1}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::jet::{norm2, vec_from_slice, Jet2, Matrix, Vector, MAX_DIM, ZERO_MAT, ZERO_VEC};
use crate::quadrature::{QuadratureRule, SphereRuleSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct MobiusMap {
    dim: usize,
    rotation: Matrix,
    base: Vector,
}

#[derive(Serialize, Deserialize)]
struct MobiusMapJson {
    rotation: Vec<Vec<f64>>,
    base_point: Vec<f64>,
}

impl Serialize for MobiusMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MobiusMapJson {
            rotation: (0..self.dim)
                .map(|i| self.rotation[i][..self.dim].to_vec())
                .collect(),
            base_point: self.base[..self.dim].to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MobiusMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MobiusMapJson::deserialize(d)?;
        MobiusMap::new(&raw.rotation, &raw.base_point).map_err(serde::de::Error::custom)
    }
}

const ORTHO_TOL: f64 = 1e-10;

impl MobiusMap {
    pub fn new(rotation: &[Vec<f64>], base_point: &[f64]) -> Result<Self> {
        let dim = base_point.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::Validation(format!("unsupported dimension {dim}")));
        }
        if rotation.len() != dim || rotation.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation(format!(
                "rotation must be {dim}x{dim} to match the base point"
            )));
        }
        let mut r = ZERO_MAT;
        for i in 0..dim {
            r[i][..dim].copy_from_slice(&rotation[i]);
        }
        Self::from_parts(dim, r, vec_from_slice(base_point))
    }

    pub fn from_parts(dim: usize, rotation: Matrix, base: Vector) -> Result<Self> {
        if base.iter().chain(rotation.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite map parameters".into()));
        }
        let b2 = norm2(dim, &base);
        if b2 >= 1.0 {
            return Err(Error::Validation(format!(
                "base point must lie in the open ball, |b| = {}",
                b2.sqrt()
            )));
        }
        for i in 0..dim {
            for j in 0..dim {
                let g: f64 = (0..dim).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > ORTHO_TOL {
                    return Err(Error::Validation(format!(
                        "rotation is not orthogonal (RᵀR - I has entry {:e})",
                        g - want
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            rotation,
            base,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut r = ZERO_MAT;
        for (i, row) in r.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Self {
            dim,
            rotation: r,
            base: ZERO_VEC,
        }
    }

    /// Pure boost T_b.
    pub fn boost(base_point: &[f64]) -> Result<Self> {
        let dim = base_point.len();
        Self::from_parts(dim, Self::identity(dim).rotation, vec_from_slice(base_point))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base[..self.dim]
    }

    fn denom(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let b2 = norm2(d, &self.base);
        let mut xb = 0.0;
        let mut x2 = 0.0;
        for i in 0..d {
            xb += x[i] * self.base[i];
            x2 += x[i] * x[i];
        }
        1.0 - 2.0 * xb + b2 * x2
    }

    fn boost_apply(&self, x: &[f64]) -> Vector {
        let d = self.dim;
        let b = &self.base;
        let b2 = norm2(d, b);
        let mut xmb2 = 0.0;
        for i in 0..d {
            xmb2 += (x[i] - b[i]) * (x[i] - b[i]);
        }
        let den = self.denom(x);
        let mut out = ZERO_VEC;
        for i in 0..d {
            out[i] = ((1.0 - b2) * (x[i] - b[i]) - xmb2 * b[i]) / den;
        }
        out
    }

    fn rotate(&self, v: &Vector) -> Vector {
        let d = self.dim;
        let mut out = ZERO_VEC;
        for i in 0..d {
            out[i] = (0..d).map(|k| self.rotation[i][k] * v[k]).sum();
        }
        out
    }

    pub fn apply(&self, x: &[f64]) -> Vector {
        self.rotate(&self.boost_apply(x))
    }

    /// Conformal factor λ with DΦᵀDΦ = λ² I.
    pub fn conformal_factor(&self, x: &[f64]) -> f64 {
        (1.0 - norm2(self.dim, &self.base)) / self.denom(x)
    }

    /// |J_Φ| = λ^{n+1}.
    pub fn jacobian_det(&self, x: &[f64]) -> f64 {
        self.conformal_factor(x).powi(self.dim as i32)
    }

    pub fn inverse(&self) -> Self {
        let d = self.dim;
        let mut rt = ZERO_MAT;
        for i in 0..d {
            for j in 0..d {
                rt[i][j] = self.rotation[j][i];
            }
        }
        let rb = self.rotate(&self.base);
        let mut nb = ZERO_VEC;
        for i in 0..d {
            nb[i] = -rb[i];
        }
        Self {
            dim: d,
            rotation: rt,
            base: nb,
        }
    }

    /// Jet of D(x) = 1 − 2⟨x,b⟩ + |b|²|x|².
    fn denom_jet(&self, x: &[f64]) -> Jet2 {
        let d = self.dim;
        let b2 = norm2(d, &self.base);
        let mut j = Jet2::constant(d, self.denom(x));
        for i in 0..d {
            j.grad[i] = -2.0 * self.base[i] + 2.0 * b2 * x[i];
            j.hess[i][i] = 2.0 * b2;
        }
        j
    }

    /// Jet of λ(x).
    pub fn factor_jet(&self, x: &[f64]) -> Jet2 {
        let b2 = norm2(self.dim, &self.base);
        self.denom_jet(x).recip() * (1.0 - b2)
    }

    /// Jet of log λ(x).
    pub fn log_factor_jet(&self, x: &[f64]) -> Jet2 {
        let b2 = norm2(self.dim, &self.base);
        let mut j = -self.denom_jet(x).ln();
        j.value += (1.0 - b2).ln();
        j
    }

    /// Jets of the components Φ^k at x.
    pub fn component_jets(&self, x: &[f64]) -> [Jet2; MAX_DIM] {
        let d = self.dim;
        let b = &self.base;
        let b2 = norm2(d, b);
        let inv_den = self.denom_jet(x).recip();
        let mut xmb2 = 0.0;
        for i in 0..d {
            xmb2 += (x[i] - b[i]) * (x[i] - b[i]);
        }
        let mut boosted = [Jet2::zeros(d); MAX_DIM];
        for k in 0..d {
            // N^k = (1 − |b|²)(x^k − b^k) − |x − b|² b^k
            let mut nk = Jet2::constant(d, (1.0 - b2) * (x[k] - b[k]) - xmb2 * b[k]);
            for i in 0..d {
                nk.grad[i] = -2.0 * (x[i] - b[i]) * b[k];
                nk.hess[i][i] = -2.0 * b[k];
            }
            nk.grad[k] += 1.0 - b2;
            boosted[k] = nk.mul_jet(&inv_den);
        }
        let mut out = [Jet2::zeros(d); MAX_DIM];
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = Jet2::zeros(d);
            for (k, bk) in boosted.iter().enumerate().take(d) {
                let r = self.rotation[i][k];
                if r != 0.0 {
                    acc = acc + *bk * r;
                }
            }
            *o = acc;
        }
        out
    }

    /// Differential DΦ at x (row i = gradient of Φ^i).
    pub fn differential(&self, x: &[f64]) -> Matrix {
        let jets = self.component_jets(x);
        let mut m = ZERO_MAT;
        for i in 0..self.dim {
            m[i] = jets[i].grad;
        }
        m
    }

    /// Composition self ∘ other as a single map.
    pub fn compose(&self, other: &MobiusMap) -> Result<MobiusMap> {
        let d = self.dim;
        // (self ∘ other)⁻¹(0) is the new base point.
        let c = other.inverse().apply(&self.inverse().apply(&ZERO_VEC[..d])[..d]);
        let shift = MobiusMap::boost(&c[..d])?.inverse();
        let mut q = ZERO_MAT;
        for j in 0..d {
            let mut e = ZERO_VEC;
            e[j] = 1.0;
            let y = self.apply(&other.apply(&shift.apply(&e[..d])[..d])[..d]);
            for i in 0..d {
                q[i][j] = y[i];
            }
        }
        MobiusMap::from_parts(d, orthonormalize(d, &q), c)
    }
}

/// Seeded map with a random orthogonal part and a base point drawn uniformly
/// from the ball of the given radius.
pub fn random_map(dim: usize, seed: u64, radius: f64) -> Result<MobiusMap> {
    use rand::{Rng, SeedableRng};
    if !(0.0..1.0).contains(&radius) {
        return Err(Error::Validation(format!("radius {radius} outside [0,1)")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut m = ZERO_MAT;
    for row in m.iter_mut().take(dim) {
        for v in row.iter_mut().take(dim) {
            *v = rng.random_range(-1.0..=1.0);
        }
    }
    let mut b = ZERO_VEC;
    loop {
        for v in b.iter_mut().take(dim) {
            *v = rng.random_range(-1.0..=1.0);
        }
        if norm2(dim, &b) <= 1.0 {
            break;
        }
    }
    for v in b.iter_mut() {
        *v *= radius;
    }
    MobiusMap::from_parts(dim, orthonormalize(dim, &m), b)
}

/// Nearest orthogonal matrix (polar factor).
fn orthonormalize(dim: usize, m: &Matrix) -> Matrix {
    let a = nalgebra::DMatrix::from_fn(dim, dim, |i, j| m[i][j]);
    let svd = a.svd(true, true);
    let p = svd.u.unwrap() * svd.v_t.unwrap();
    let mut out = ZERO_MAT;
    for i in 0..dim {
        for j in 0..dim {
            out[i][j] = p[(i, j)];
        }
    }
    out
}

/// Chain rule: jet of u∘Φ at x from the jet of u at Φ(x) and the jets of Φ.
pub fn compose_jet(inner: &Jet2, phi: &[Jet2; MAX_DIM]) -> Jet2 {
    let d = inner.dim;
    let mut out = Jet2::constant(d, inner.value);
    for j in 0..d {
        out.grad[j] = (0..d).map(|k| inner.grad[k] * phi[k].grad[j]).sum();
    }
    for a in 0..d {
        for b in a..d {
            let mut s = 0.0;
            for k in 0..d {
                let mut t = 0.0;
                for m in 0..d {
                    t += inner.hess[k][m] * phi[m].grad[b];
                }
                s += phi[k].grad[a] * t + inner.grad[k] * phi[k].hess[a][b];
            }
            out.hess[a][b] = s;
            out.hess[b][a] = s;
        }
    }
    out
}

/// Density whose first moments the balancing procedure drives to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityKind {
    /// u^{4n/(n−3)}, the boundary volume density for n ∈ {4,5}.
    Quartic,
    /// e^{3u}, the boundary volume density for n = 3.
    Exponential,
    /// u^{2n/(n−1)}, the boundary density of the quadratic trace problem.
    Escobar,
}

impl DensityKind {
    pub fn natural(n: usize) -> Self {
        if n == 3 {
            DensityKind::Exponential
        } else {
            DensityKind::Quartic
        }
    }

    pub fn eval(&self, n: usize, u: f64) -> f64 {
        match self {
            DensityKind::Quartic => u.powf(4.0 * n as f64 / (n as f64 - 3.0)),
            DensityKind::Exponential => (3.0 * u).exp(),
            DensityKind::Escobar => u.powf(2.0 * n as f64 / (n as f64 - 1.0)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport {
    pub map: MobiusMap,
    pub iterations: usize,
    /// |∮ x dμ_Φ| / mass for the pulled-back measure, measured on the working rule.
    pub moment_norm: f64,
    pub mass: f64,
}

#[derive(Clone, Debug)]
pub struct BalanceOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub density: Option<DensityKind>,
    /// Sphere rule for the moments; defaults to degree 24 (isotropic).
    pub rule: Option<SphereRuleSpec>,
}

impl BalanceOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            density: None,
            rule: None,
        }
    }
}

/// First moment vector and mass of the pushforward of ρ dσ under `inv`, i.e.
/// ∮ inv(y) ρ(y) dσ(y) over a fixed rule in y.
fn pushed_moment(rule: &QuadratureRule, rho_w: &[f64], inv: &MobiusMap) -> (Vector, f64) {
    let d = inv.dim;
    let mut sums = vec![crate::quadrature::Neumaier::default(); d + 1];
    for (i, &rw) in rho_w.iter().enumerate() {
        let y = inv.apply(rule.node(i));
        for k in 0..d {
            sums[k].add(y[k] * rw);
        }
        sums[d].add(rw);
    }
    let mut m = ZERO_VEC;
    for k in 0..d {
        m[k] = sums[k].total();
    }
    (m, sums[d].total())
}

/// Find Φ such that the boundary measure of the pullback of `field` has
/// vanishing first moments. The returned map is the one to feed into
/// [`crate::fields::pullback_factor`].
pub fn balance(field: &ScalarField, opts: &BalanceOptions) -> Result<BalanceReport> {
    let dim = field.dim();
    let n = dim - 1;
    if opts.tol <= 0.0 || !opts.tol.is_finite() {
        return Err(Error::Validation("tolerance must be positive".into()));
    }
    let kind = opts.density.unwrap_or(DensityKind::natural(n));
    let spec = opts
        .rule
        .clone()
        .unwrap_or_else(|| SphereRuleSpec::isotropic(24));
    let rule = QuadratureRule::sphere_with(n, &spec)?;
    let mut rho_w = Vec::with_capacity(rule.len());
    for i in 0..rule.len() {
        let x = rule.node(i);
        let u = field.value_at(x);
        if kind != DensityKind::Exponential && !(u > 0.0) {
            return Err(Error::Domain(format!(
                "field must be positive on the boundary, found {u} at node {i}"
            )));
        }
        let r = kind.eval(n, u) * rule.weight(i);
        if !r.is_finite() {
            return Err(Error::Numeric(format!("density not finite at node {i}")));
        }
        rho_w.push(r);
    }
    balance_weights(dim, &rule, &rho_w, opts)
}

/// Balancing for an arbitrary positive density given as node weights ρ(y_i) w_i.
pub fn balance_weights(
    dim: usize,
    rule: &QuadratureRule,
    rho_w: &[f64],
    opts: &BalanceOptions,
) -> Result<BalanceReport> {
    // inv = Φ⁻¹; we update inv ← T_a ∘ inv, which moves mass away from the
    // direction of the current center of mass.
    let mut inv = MobiusMap::identity(dim);
    let (mut m, mass) = pushed_moment(rule, rho_w, &inv);
    let mut norm = norm2(dim, &m).sqrt() / mass;
    let mut iterations = 0;
    while norm >= opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                iterations,
                detail: format!("moment norm {norm:e} above tolerance {:e}", opts.tol),
            });
        }
        iterations += 1;
        let mut step = 0.5;
        let mut accepted = None;
        for _ in 0..60 {
            let mut a = ZERO_VEC;
            for k in 0..dim {
                a[k] = step * m[k] / mass;
            }
            let cand = MobiusMap::boost(&a[..dim])?.compose(&inv)?;
            let (m2, _) = pushed_moment(rule, rho_w, &cand);
            let n2 = norm2(dim, &m2).sqrt() / mass;
            if n2 < norm {
                accepted = Some((cand, m2, n2));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, m2, n2)) => {
                inv = cand;
                m = m2;
                norm = n2;
            }
            None => {
                return Err(Error::Convergence {
                    iterations,
                    detail: format!("no decrease of the moment norm from {norm:e}"),
                })
            }
        }
    }
    Ok(BalanceReport {
        map: inv.inverse(),
        iterations,
        moment_norm: norm,
        mass,
    })
}

/// Moment vector of the pulled-back density ρ_Φ(x) = |J_Φ|^{n/(n+1)} ρ(Φx) on
/// the given rule, as a post-hoc check that does not reuse the solver's rule.
pub fn pulled_back_moment(
    field: &ScalarField,
    map: &MobiusMap,
    kind: DensityKind,
    rule: &QuadratureRule,
) -> Result<(Vec<f64>, f64)> {
    let dim = field.dim();
    let n = dim - 1;
    let vals = rule.integrate_multi(dim + 1, |x, out| {
        let y = map.apply(x);
        let lam = map.conformal_factor(x);
        let rho = lam.powi(n as i32) * kind.eval(n, field.value_at(&y[..dim]));
        for k in 0..dim {
            out[k] = x[k] * rho;
        }
        out[dim] = rho;
    })?;
    Ok((vals[..dim].to_vec(), vals[dim]))
}

pub fn vector_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::dot;

    fn sample_map() -> MobiusMap {
        let th: f64 = 0.7;
        let rot = vec![
            vec![th.cos(), -th.sin(), 0.0, 0.0],
            vec![th.sin(), th.cos(), 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        MobiusMap::new(&rot, &[0.2, -0.1, 0.3, 0.05]).unwrap()
    }

    #[test]
    fn inverse_round_trip() {
        let m = sample_map();
        let inv = m.inverse();
        let x = [0.3, 0.1, -0.4, 0.2];
        let y = m.apply(&x);
        let z = inv.apply(&y[..4]);
        for k in 0..4 {
            assert!((z[k] - x[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn base_point_goes_to_origin() {
        let m = MobiusMap::boost(&[0.3, 0.2, 0.0]).unwrap();
        let y = m.apply(&[0.3, 0.2, 0.0]);
        assert!(norm2(3, &y) < 1e-30);
    }

    #[test]
    fn differential_is_conformal() {
        let m = sample_map();
        let x = [0.1, 0.5, -0.2, 0.3];
        let dm = m.differential(&x);
        let lam = m.conformal_factor(&x);
        for i in 0..4 {
            for j in 0..4 {
                let g: f64 = (0..4).map(|k| dm[k][i] * dm[k][j]).sum();
                let want = if i == j { lam * lam } else { 0.0 };
                assert!((g - want).abs() < 1e-12, "{i}{j}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let a = sample_map();
        let b = MobiusMap::boost(&[-0.3, 0.1, 0.2, 0.4]).unwrap();
        let c = a.compose(&b).unwrap();
        let x = [0.2, -0.3, 0.1, 0.5];
        let want = a.apply(&b.apply(&x)[..4]);
        let got = c.apply(&x);
        for k in 0..4 {
            assert!((want[k] - got[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_vectors_stay_on_sphere() {
        let m = sample_map();
        let x = [0.5, 0.5, 0.5, 0.5];
        let y = m.apply(&x);
        assert!((dot(4, &y, &y) - 1.0).abs() < 1e-14);
    }
}
