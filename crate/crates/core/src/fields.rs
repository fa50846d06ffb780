//! Analytic conformal factors on the closed unit ball with exact jets.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{norm2, vec_from_slice, BoundaryJet, Jet2, Jet3, Vector, MAX_DIM, ZERO_MAT};
use crate::mobius::{compose_jet, MobiusMap};
use crate::operators;
use crate::poly::{basis, Polynomial, Term};

/// Boundary points must be unit vectors to this tolerance.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub enum ScalarField {
    Constant { dim: usize, value: f64 },
    Polynomial(Polynomial),
    /// a |r x − ξ|^{1−n}
    EscobarBubble { dim: usize, a: f64, r: f64, xi: Vector },
    /// λ_Φ^{(n−3)/4}, the pullback of the constant 1.
    FlatFactor(MobiusMap),
    /// log λ_Φ, the critical pullback of 0.
    CriticalFlatLog(MobiusMap),
    /// λ_Φ^{(n−3)/4} (u∘Φ) for n ≥ 4, u∘Φ + log λ_Φ for n = 3.
    Pullback { map: MobiusMap, inner: Arc<ScalarField> },
    /// scale·u + offset
    Affine { scale: f64, offset: f64, inner: Arc<ScalarField> },
    /// u + v
    Sum(Arc<ScalarField>, Arc<ScalarField>),
}

impl ScalarField {
    pub fn constant(dim: usize, value: f64) -> Self {
        ScalarField::Constant { dim, value }
    }

    pub fn bubble(dim: usize, a: f64, r: f64, xi: &[f64]) -> Result<Self> {
        if xi.len() != dim {
            return Err(Error::Validation(format!("ξ has length {}, expected {dim}", xi.len())));
        }
        let xi = vec_from_slice(xi);
        if (norm2(dim, &xi).sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::Validation("ξ must be a unit vector".into()));
        }
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Validation(format!("bubble parameter r = {r} outside [0,1)")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Validation(format!("bubble amplitude a = {a} must be positive")));
        }
        Ok(ScalarField::EscobarBubble { dim, a, r, xi })
    }

    /// Pointwise sum; two polynomial-type fields merge into one polynomial.
    pub fn plus(&self, other: &ScalarField) -> Self {
        if let (ScalarField::Constant { dim, value: a }, ScalarField::Constant { value: b, .. }) = (self, other) {
            return ScalarField::constant(*dim, a + b);
        }
        if let (Some(a), Some(b)) = (self.as_polynomial(), other.as_polynomial()) {
            let mut terms = a.terms();
            terms.extend(b.terms());
            if let Ok(p) = Polynomial::from_terms(self.dim(), &terms) {
                return ScalarField::Polynomial(p);
            }
        }
        ScalarField::Sum(Arc::new(self.clone()), Arc::new(other.clone()))
    }

    pub fn dim(&self) -> usize {
        match self {
            ScalarField::Constant { dim, .. } | ScalarField::EscobarBubble { dim, .. } => *dim,
            ScalarField::Polynomial(p) => p.dim(),
            ScalarField::FlatFactor(m) | ScalarField::CriticalFlatLog(m) => m.dim(),
            ScalarField::Pullback { map, .. } => map.dim(),
            ScalarField::Affine { inner, .. } => inner.dim(),
            ScalarField::Sum(a, _) => a.dim(),
        }
    }

    /// Boundary dimension n.
    pub fn n(&self) -> usize {
        self.dim() - 1
    }

    pub fn scaled(&self, scale: f64) -> Self {
        self.affine(scale, 0.0)
    }

    pub fn shifted(&self, offset: f64) -> Self {
        self.affine(1.0, offset)
    }

    /// scale·u + offset, folded into the representation where possible.
    pub fn affine(&self, scale: f64, offset: f64) -> Self {
        match self {
            ScalarField::Constant { dim, value } => ScalarField::constant(*dim, scale * value + offset),
            ScalarField::Polynomial(p) => {
                ScalarField::Polynomial(p.map_coefficients(|c| scale * c).add_constant(offset))
            }
            ScalarField::Affine {
                scale: s0,
                offset: o0,
                inner,
            } => ScalarField::Affine {
                scale: scale * s0,
                offset: scale * o0 + offset,
                inner: inner.clone(),
            },
            other => ScalarField::Affine {
                scale,
                offset,
                inner: Arc::new(other.clone()),
            },
        }
    }

    /// Jet anywhere in the closed ball; no domain check.
    pub fn jet_at(&self, x: &[f64]) -> Jet2 {
        let dim = self.dim();
        match self {
            ScalarField::Constant { value, .. } => Jet2::constant(dim, *value),
            ScalarField::Polynomial(p) => p.jet(x),
            ScalarField::EscobarBubble { a, r, xi, .. } => {
                let n = (dim - 1) as f64;
                let mut s = Jet2::zeros(dim);
                for i in 0..dim {
                    let w = r * x[i] - xi[i];
                    s.value += w * w;
                    s.grad[i] = 2.0 * r * w;
                    s.hess[i][i] = 2.0 * r * r;
                }
                s.powf((1.0 - n) / 2.0) * *a
            }
            ScalarField::FlatFactor(m) => m.factor_jet(x).powf(operators::weight(dim - 1)),
            ScalarField::CriticalFlatLog(m) => m.log_factor_jet(x),
            ScalarField::Pullback { map, inner } => {
                let y = map.apply(x);
                let phi = map.component_jets(x);
                let composed = compose_jet(&inner.jet_at(&y[..dim]), &phi);
                if dim - 1 == 3 {
                    composed + map.log_factor_jet(x)
                } else {
                    map.factor_jet(x)
                        .powf(operators::weight(dim - 1))
                        .mul_jet(&composed)
                }
            }
            ScalarField::Affine {
                scale,
                offset,
                inner,
            } => {
                let mut j = inner.jet_at(x) * *scale;
                j.value += offset;
                j
            }
            ScalarField::Sum(a, b) => a.jet_at(x) + b.jet_at(x),
        }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant { value, .. } => *value,
            ScalarField::Polynomial(p) => p.value(x),
            ScalarField::Affine {
                scale,
                offset,
                inner,
            } => scale * inner.value_at(x) + offset,
            ScalarField::Sum(a, b) => a.value_at(x) + b.value_at(x),
            _ => self.jet_at(x).value,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Validation(format!(
                "point has {} coordinates, field lives in dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("point is not finite".into()));
        }
        Ok(x.iter().map(|v| v * v).sum::<f64>())
    }

    /// Jet at an interior point.
    pub fn evaluate_jet(&self, x: &[f64]) -> Result<Jet2> {
        let r2 = self.check_point(x)?;
        if r2 >= 1.0 {
            return Err(Error::Domain(format!("|x| = {} is outside the open ball", r2.sqrt())));
        }
        Ok(self.jet_at(x))
    }

    /// Boundary decomposition at a unit vector.
    pub fn boundary_jet(&self, p: &[f64]) -> Result<BoundaryJet> {
        let r2 = self.check_point(p)?;
        if (r2.sqrt() - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("|p| = {} is not a unit vector", r2.sqrt())));
        }
        Ok(self.jet_at(p).boundary(p))
    }

    pub fn has_third_jet(&self) -> bool {
        match self {
            ScalarField::Constant { .. } | ScalarField::Polynomial(_) => true,
            ScalarField::Affine { inner, .. } => inner.has_third_jet(),
            ScalarField::Sum(a, b) => a.has_third_jet() && b.has_third_jet(),
            _ => false,
        }
    }

    /// Jet with third derivatives; only polynomial-type fields carry them.
    pub fn jet3_at(&self, x: &[f64]) -> Result<Jet3> {
        let dim = self.dim();
        match self {
            ScalarField::Constant { value, .. } => Ok(Jet3 {
                jet: Jet2::constant(dim, *value),
                third: [ZERO_MAT; MAX_DIM],
            }),
            ScalarField::Polynomial(p) => Ok(p.jet3(x)),
            ScalarField::Affine {
                scale,
                offset,
                inner,
            } => {
                let mut j = inner.jet3_at(x)?;
                j.jet = j.jet * *scale;
                j.jet.value += offset;
                for plane in j.third.iter_mut() {
                    for row in plane.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= scale;
                        }
                    }
                }
                Ok(j)
            }
            ScalarField::Sum(a, b) => {
                let (ja, jb) = (a.jet3_at(x)?, b.jet3_at(x)?);
                let mut third = ja.third;
                for (pa, pb) in third.iter_mut().zip(&jb.third) {
                    for (ra, rb) in pa.iter_mut().zip(pb) {
                        for (va, vb) in ra.iter_mut().zip(rb) {
                            *va += vb;
                        }
                    }
                }
                Ok(Jet3 {
                    jet: ja.jet + jb.jet,
                    third,
                })
            }
            _ => Err(Error::Capability(
                "third derivatives are only available for polynomial fields".into(),
            )),
        }
    }

    /// Polynomial view, if the field is exactly a polynomial.
    pub fn as_polynomial(&self) -> Option<Polynomial> {
        match self {
            ScalarField::Polynomial(p) => Some(p.clone()),
            ScalarField::Constant { dim, value } => Polynomial::from_terms(
                *dim,
                &[Term {
                    exponents: vec![0; *dim],
                    coef: *value,
                }],
            )
            .ok(),
            ScalarField::Affine {
                scale,
                offset,
                inner,
            } => inner
                .as_polynomial()
                .map(|p| p.map_coefficients(|c| scale * c).add_constant(*offset)),
            ScalarField::Sum(a, b) => {
                let mut terms = a.as_polynomial()?.terms();
                terms.extend(b.as_polynomial()?.terms());
                Polynomial::from_terms(a.dim(), &terms).ok()
            }
            _ => None,
        }
    }

    pub fn to_spec(&self) -> FieldSpec {
        FieldSpec {
            params: self.to_params(),
            n: self.n(),
        }
    }

    fn to_params(&self) -> FieldParams {
        match self {
            ScalarField::Constant { value, .. } => FieldParams::Constant { c: *value },
            ScalarField::Polynomial(p) => FieldParams::Polynomial { terms: p.terms() },
            ScalarField::EscobarBubble { dim, a, r, xi } => FieldParams::EscobarBubble {
                a: *a,
                r: *r,
                xi: xi[..*dim].to_vec(),
            },
            ScalarField::FlatFactor(m) => FieldParams::FlatFactor { map: m.clone() },
            ScalarField::CriticalFlatLog(m) => FieldParams::CriticalFlatLog { map: m.clone() },
            ScalarField::Pullback { map, inner } => FieldParams::Pullback {
                map: map.clone(),
                field: Box::new(inner.to_params()),
            },
            ScalarField::Affine {
                scale,
                offset,
                inner,
            } => FieldParams::Affine {
                scale: *scale,
                offset: *offset,
                field: Box::new(inner.to_params()),
            },
            ScalarField::Sum(a, b) => FieldParams::Sum {
                fields: vec![a.to_params(), b.to_params()],
            },
        }
    }
}

/// Pullback of `field` by `map`: λ^{(n−3)/4} u∘Φ, or u∘Φ + log λ when n = 3.
pub fn pullback_factor(map: &MobiusMap, field: &ScalarField) -> Result<ScalarField> {
    if map.dim() != field.dim() {
        return Err(Error::Validation(format!(
            "map dimension {} does not match field dimension {}",
            map.dim(),
            field.dim()
        )));
    }
    if let ScalarField::Constant { dim, value } = field {
        if *value == 1.0 && *dim != 4 {
            return Ok(ScalarField::FlatFactor(map.clone()));
        }
        if *value == 0.0 && *dim == 4 {
            return Ok(ScalarField::CriticalFlatLog(map.clone()));
        }
    }
    Ok(ScalarField::Pullback {
        map: map.clone(),
        inner: Arc::new(field.clone()),
    })
}

fn default_degree() -> usize {
    4
}

/// JSON parameters of a field, tagged by `variant`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "variant", content = "params")]
pub enum FieldParams {
    Constant {
        c: f64,
    },
    Polynomial {
        terms: Vec<Term>,
    },
    EscobarBubble {
        a: f64,
        r: f64,
        xi: Vec<f64>,
    },
    FlatFactor {
        map: MobiusMap,
    },
    CriticalFlatLog {
        map: MobiusMap,
    },
    RandomSmooth {
        seed: u64,
        #[serde(default = "default_degree")]
        degree: usize,
        amplitude: f64,
        #[serde(default)]
        shift: f64,
    },
    Pullback {
        map: MobiusMap,
        field: Box<FieldParams>,
    },
    Affine {
        scale: f64,
        offset: f64,
        field: Box<FieldParams>,
    },
    Sum {
        fields: Vec<FieldParams>,
    },
}

/// {"variant": ..., "params": {...}, "n": ...}
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldSpec {
    #[serde(flatten)]
    pub params: FieldParams,
    pub n: usize,
}

impl FieldSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Validation(format!("bad field spec: {e}")))
    }

    pub fn build(&self) -> Result<ScalarField> {
        if !(3..=5).contains(&self.n) {
            return Err(Error::Validation(format!("n = {} is not in {{3,4,5}}", self.n)));
        }
        build_params(&self.params, self.n + 1)
    }
}

fn build_params(p: &FieldParams, dim: usize) -> Result<ScalarField> {
    let check_map = |m: &MobiusMap| {
        if m.dim() != dim {
            Err(Error::Validation(format!(
                "map has dimension {}, expected {dim}",
                m.dim()
            )))
        } else {
            Ok(())
        }
    };
    match p {
        FieldParams::Constant { c } => {
            if !c.is_finite() {
                return Err(Error::Validation("constant is not finite".into()));
            }
            Ok(ScalarField::constant(dim, *c))
        }
        FieldParams::Polynomial { terms } => Ok(ScalarField::Polynomial(Polynomial::from_terms(dim, terms)?)),
        FieldParams::EscobarBubble { a, r, xi } => ScalarField::bubble(dim, *a, *r, xi),
        FieldParams::FlatFactor { map } => {
            check_map(map)?;
            Ok(ScalarField::FlatFactor(map.clone()))
        }
        FieldParams::CriticalFlatLog { map } => {
            check_map(map)?;
            Ok(ScalarField::CriticalFlatLog(map.clone()))
        }
        FieldParams::RandomSmooth {
            seed,
            degree,
            amplitude,
            shift,
        } => random_smooth(dim, *seed, *degree, *amplitude, *shift),
        FieldParams::Pullback { map, field } => {
            check_map(map)?;
            Ok(ScalarField::Pullback {
                map: map.clone(),
                inner: Arc::new(build_params(field, dim)?),
            })
        }
        FieldParams::Affine {
            scale,
            offset,
            field,
        } => {
            if !scale.is_finite() || !offset.is_finite() {
                return Err(Error::Validation("affine parameters must be finite".into()));
            }
            Ok(build_params(field, dim)?.affine(*scale, *offset))
        }
        FieldParams::Sum { fields } => {
            let mut it = fields.iter();
            let first = it
                .next()
                .ok_or_else(|| Error::Validation("sum of no fields".into()))?;
            it.try_fold(build_params(first, dim)?, |acc, f| Ok(acc.plus(&build_params(f, dim)?)))
        }
    }
}

/// Polynomial of total degree ≤ `degree` with coefficients uniform in
/// [−amplitude, amplitude], drawn in basis order, plus `shift`.
pub fn random_smooth(dim: usize, seed: u64, degree: usize, amplitude: f64, shift: f64) -> Result<ScalarField> {
    if !(1..=MAX_DIM).contains(&dim) || degree > 12 {
        return Err(Error::Validation(format!(
            "random field needs dimension ≤ {MAX_DIM} and degree ≤ 12"
        )));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() || !shift.is_finite() {
        return Err(Error::Validation("amplitude must be finite and ≥ 0".into()));
    }
    let b = basis(dim, degree);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef: Vec<f64> = (0..b.len())
        .map(|_| rng.random_range(-1.0..=1.0) * amplitude)
        .collect();
    coef[0] += shift;
    Ok(ScalarField::Polynomial(Polynomial::from_coefficients(b, coef)?))
}

// ---------------------------------------------------------------------------
// Sampling and cone membership

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / base as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; MAX_DIM] = [2, 3, 5, 7, 11, 13];

/// Quasi-random (Halton, rejection) points in the open ball.
pub fn interior_samples(dim: usize, count: usize) -> Vec<Vector> {
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let mut x = [0.0; MAX_DIM];
        for (k, xk) in x.iter_mut().enumerate().take(dim) {
            *xk = 2.0 * radical_inverse(i, PRIMES[k]) - 1.0;
        }
        i += 1;
        if norm2(dim, &x) < 1.0 {
            out.push(x);
        }
    }
    out
}

/// Quasi-random points on the unit sphere, from radially projected ball samples.
pub fn boundary_samples(dim: usize, count: usize) -> Vec<Vector> {
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let mut x = [0.0; MAX_DIM];
        for (k, xk) in x.iter_mut().enumerate().take(dim) {
            *xk = 2.0 * radical_inverse(i, PRIMES[k]) - 1.0;
        }
        i += 1;
        let r2 = norm2(dim, &x);
        if (0.01..1.0).contains(&r2) {
            let r = r2.sqrt();
            for v in x.iter_mut().take(dim) {
                *v /= r;
            }
            out.push(x);
        }
    }
    out
}

pub const DEFAULT_INTERIOR_SAMPLES: usize = 4096;
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 2048;

#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    pub n: usize,
    /// Minimum of σ₁(u) over interior and boundary samples (closed ball).
    pub sigma1_min: f64,
    pub sigma1_argmin: Vec<f64>,
    pub h_min: f64,
    pub h_argmin: Vec<f64>,
    pub sigma1_ok: bool,
    pub h_ok: bool,
    pub member: bool,
    pub interior_points: usize,
    pub boundary_points: usize,
}

/// Sampled test of σ₁(u) ≥ 0 on the closed ball and H(u) > 0 on the sphere.
/// σ₁ is compared against −1e−12 so that exact zeros at constants pass.
pub fn cone_membership(field: &ScalarField, interior: usize, boundary: usize) -> Result<ConeReport> {
    if interior == 0 || boundary == 0 {
        return Err(Error::Validation("cone membership needs non-empty sample grids".into()));
    }
    let dim = field.dim();
    let n = dim - 1;
    let mut s_min = f64::INFINITY;
    let mut s_arg = vec![0.0; dim];
    let mut h_min = f64::INFINITY;
    let mut h_arg = vec![0.0; dim];
    for x in interior_samples(dim, interior) {
        let s = operators::sigma1(n, &field.jet_at(&x[..dim]));
        if !s.is_finite() {
            return Err(Error::Numeric(format!("σ₁ not finite at {:?}", &x[..dim])));
        }
        if s < s_min {
            s_min = s;
            s_arg = x[..dim].to_vec();
        }
    }
    for p in boundary_samples(dim, boundary) {
        let j = field.jet_at(&p[..dim]);
        let s = operators::sigma1(n, &j);
        let h = operators::h(n, &j.boundary(&p[..dim]));
        if !s.is_finite() || !h.is_finite() {
            return Err(Error::Numeric(format!("cone data not finite at {:?}", &p[..dim])));
        }
        if s < s_min {
            s_min = s;
            s_arg = p[..dim].to_vec();
        }
        if h < h_min {
            h_min = h;
            h_arg = p[..dim].to_vec();
        }
    }
    let sigma1_ok = s_min >= -1e-12;
    let h_ok = h_min > 0.0;
    Ok(ConeReport {
        n,
        sigma1_min: s_min,
        sigma1_argmin: s_arg,
        h_min,
        h_argmin: h_arg,
        sigma1_ok,
        h_ok,
        member: sigma1_ok && h_ok,
        interior_points: interior,
        boundary_points: boundary,
    })
}

/// Seeded perturbation of the flat field inside the cone:
/// base + amplitude·(p − A r²) where p is a random polynomial without constant
/// term, scaled to unit ℓ¹ coefficient norm. The r² term makes u
/// superharmonic, which is what σ₁ ≥ 0 needs; A is picked from a grid on
/// [0, 16] to maximise the smaller of the sampled σ₁ and H margins. Base is
/// 1 (n ≥ 4) or 0 (n = 3).
pub fn perturbed_constant(n: usize, seed: u64, degree: usize, amplitude: f64) -> Result<ScalarField> {
    let dim = n + 1;
    let b = basis(dim, degree.max(2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    coef[0] = 0.0;
    let l1: f64 = coef.iter().map(|c| c.abs()).sum();
    coef.iter_mut().for_each(|c| *c /= l1);
    let base = if n == 3 { 0.0 } else { 1.0 };
    let r2_idx: Vec<usize> = (0..dim)
        .map(|k| {
            let mut e = [0u8; MAX_DIM];
            e[k] = 2;
            b.index_of(&e).unwrap()
        })
        .collect();
    let build = |a: f64| -> Result<ScalarField> {
        let mut c: Vec<f64> = coef.iter().map(|v| amplitude * v).collect();
        c[0] += base;
        for &i in &r2_idx {
            c[i] -= amplitude * a;
        }
        Ok(ScalarField::Polynomial(Polynomial::from_coefficients(b.clone(), c)?))
    };
    if amplitude == 0.0 {
        return build(0.0);
    }
    let mut ranked = Vec::new();
    for k in 0..=64 {
        let a = 0.25 * k as f64;
        let r = cone_membership(&build(a)?, 1024, 512)?;
        ranked.push((r.sigma1_min.min(r.h_min), a));
    }
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0));
    for (margin, a) in ranked.into_iter().take(4) {
        if margin <= 0.0 {
            break;
        }
        let f = build(a)?;
        if cone_membership(&f, DEFAULT_INTERIOR_SAMPLES, DEFAULT_BOUNDARY_SAMPLES)?.member {
            return Ok(f);
        }
    }
    Err(Error::Precondition(format!(
        "could not place a perturbation of amplitude {amplitude} inside the cone"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_round_trip() {
        let s = r#"{"variant":"Polynomial","params":{"terms":[{"exponents":[1,0,0,0,0],"coef":1.0}]},"n":4}"#;
        let spec = FieldSpec::from_json(s).unwrap();
        let f = spec.build().unwrap();
        let j = f.evaluate_jet(&[0.3, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(j.value, 0.3);
        assert_eq!(j.grad[0], 1.0);
        let back: FieldSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn nested_spec_parses() {
        let s = r#"{"variant":"Affine","params":{"scale":2.0,"offset":1.0,
            "field":{"variant":"Constant","params":{"c":3.0}}},"n":3}"#;
        let f = FieldSpec::from_json(s).unwrap().build().unwrap();
        assert_eq!(f.value_at(&[0.0; 4]), 7.0);
    }

    #[test]
    fn domain_errors() {
        let f = ScalarField::constant(5, 2.0);
        assert!(matches!(f.evaluate_jet(&[1.0, 0.0, 0.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(f.boundary_jet(&[0.5, 0.0, 0.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(ScalarField::bubble(5, 1.0, 1.0, &[1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn random_smooth_is_reproducible() {
        let a = random_smooth(5, 9, 4, 0.1, 0.0).unwrap();
        let b = random_smooth(5, 9, 4, 0.1, 0.0).unwrap();
        let x = [0.1, 0.2, 0.3, -0.2, 0.1];
        assert_eq!(a.value_at(&x).to_bits(), b.value_at(&x).to_bits());
    }

    #[test]
    fn cone_examples() {
        let one = cone_membership(&ScalarField::constant(5, 1.0), 64, 64).unwrap();
        assert_eq!(one.sigma1_min, 0.0);
        assert_eq!(one.h_min, 0.25);
        assert!(one.member);
        let x1 = Polynomial::from_terms(
            5,
            &[Term {
                exponents: vec![1, 0, 0, 0, 0],
                coef: 1.0,
            }],
        )
        .unwrap();
        let rep = cone_membership(&ScalarField::Polynomial(x1), 64, 64).unwrap();
        assert_eq!(rep.sigma1_min, -1.25);
        assert!(!rep.member);
        let zero = cone_membership(&ScalarField::constant(4, 0.0), 64, 64).unwrap();
        assert!(zero.member && zero.h_min == 1.0);
    }
}
