//! Integral energies on the ball: 𝓔₁, 𝓔₂ in several equivalent forms, the
//! critical 𝓕₂/𝓖₂, boundary volumes and second-variation defects.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{boundary_samples, interior_samples, ScalarField};
use crate::jet::{BoundaryJet, Jet2};
use crate::operators::{self as op, weight};
use crate::quadrature::{sphere_volume, Domain, QuadratureRule};

/// Ball and sphere rules of matching dimension.
#[derive(Clone, Debug)]
pub struct Rules {
    pub ball: Arc<QuadratureRule>,
    pub sphere: Arc<QuadratureRule>,
}

impl Rules {
    pub fn new(n: usize, degree: usize) -> Result<Self> {
        Ok(Self {
            ball: QuadratureRule::cached(Domain::Ball, n, degree)?,
            sphere: QuadratureRule::cached(Domain::Sphere, n, degree)?,
        })
    }

    pub fn from_rules(ball: QuadratureRule, sphere: QuadratureRule) -> Result<Self> {
        if ball.dim != sphere.dim {
            return Err(Error::Validation("ball and sphere rules differ in dimension".into()));
        }
        Ok(Self {
            ball: Arc::new(ball),
            sphere: Arc::new(sphere),
        })
    }

    pub fn n(&self) -> usize {
        self.sphere.n()
    }

    pub fn degree(&self) -> usize {
        self.ball.exactness_degree.min(self.sphere.exactness_degree)
    }

    pub fn omega(&self) -> f64 {
        sphere_volume(self.n())
    }

    fn check(&self, field: &ScalarField) -> Result<usize> {
        if field.dim() != self.ball.dim {
            return Err(Error::Validation(format!(
                "field lives in dimension {}, rules in dimension {}",
                field.dim(),
                self.ball.dim
            )));
        }
        Ok(self.n())
    }
}

pub fn default_degree(n: usize) -> usize {
    if n >= 5 {
        20
    } else {
        24
    }
}

fn require_noncritical(n: usize) -> Result<()> {
    if n == 4 || n == 5 {
        Ok(())
    } else {
        Err(Error::Validation(format!("this functional needs n ∈ {{4,5}}, got {n}")))
    }
}

fn require_critical(n: usize) -> Result<()> {
    if n == 3 {
        Ok(())
    } else {
        Err(Error::Validation(format!("this functional needs n = 3, got {n}")))
    }
}

/// Interior and boundary integrals of vector-valued integrands of one field.
fn integrate_field<FI, FB>(
    rules: &Rules,
    field: &ScalarField,
    k: usize,
    interior: FI,
    boundary: FB,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    FI: Fn(&[f64], &Jet2, &mut [f64]) + Sync,
    FB: Fn(&[f64], &Jet2, &BoundaryJet, &mut [f64]) + Sync,
{
    let a = rules.ball.integrate_multi(k, |x, out| interior(x, &field.jet_at(x), out))?;
    let b = rules.sphere.integrate_multi(k, |x, out| {
        let j = field.jet_at(x);
        boundary(x, &j, &j.boundary(x), out)
    })?;
    Ok((a, b))
}

// ---------------------------------------------------------------------------
// Quadratic trace energy

/// 𝓔₁(u) = ∫|∇u|² + (n−1)/2 ∮u².
pub fn e1(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.check(field)? as f64;
    let (a, b) = integrate_field(
        rules,
        field,
        1,
        |_, j, o| o[0] = j.grad_norm2(),
        |_, j, _, o| o[0] = j.value * j.value,
    )?;
    Ok(a[0] + (n - 1.0) / 2.0 * b[0])
}

/// ∮|u|^{2n/(n−1)}.
pub fn escobar_volume(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.check(field)? as f64;
    let p = 2.0 * n / (n - 1.0);
    rules.sphere.integrate(|x| field.value_at(x).abs().powf(p))
}

/// Sharp constant side of the Escobar inequality, (n−1)/2 ω^{1/n} V^{(n−1)/n}.
pub fn escobar_bound(n: usize, volume: f64) -> f64 {
    let nf = n as f64;
    (nf - 1.0) / 2.0 * sphere_volume(n).powf(1.0 / nf) * volume.powf((nf - 1.0) / nf)
}

/// 𝓔₁ after scaling u so that ∮|u|^{2n/(n−1)} = ω_n.
pub fn e1_normalized(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.n() as f64;
    let v = escobar_volume(field, rules)?;
    if !(v > 0.0) {
        return Err(Error::Domain("field vanishes on the boundary".into()));
    }
    let s2 = (rules.omega() / v).powf((n - 1.0) / n);
    Ok(e1(field, rules)? * s2)
}

// ---------------------------------------------------------------------------
// Quartic trace energy

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum E2Formula {
    Direct,
    Pregeometric,
    Geometric,
    Positive,
    Alternate,
    /// ((n−3)/4)³ times the geometric σ₂/H₂ total curvature of g_u.
    Sigma2,
}

impl E2Formula {
    pub const ALL: [E2Formula; 6] = [
        E2Formula::Direct,
        E2Formula::Pregeometric,
        E2Formula::Geometric,
        E2Formula::Positive,
        E2Formula::Alternate,
        E2Formula::Sigma2,
    ];

    /// The five formulas that make sense for any sign of u.
    pub const EXPANDED: [E2Formula; 5] = [
        E2Formula::Direct,
        E2Formula::Pregeometric,
        E2Formula::Geometric,
        E2Formula::Positive,
        E2Formula::Alternate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            E2Formula::Direct => "direct",
            E2Formula::Pregeometric => "pregeometric",
            E2Formula::Geometric => "geometric",
            E2Formula::Positive => "positive",
            E2Formula::Alternate => "alternate",
            E2Formula::Sigma2 => "sigma2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        E2Formula::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown formula '{s}'")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub n: usize,
    pub values: BTreeMap<String, f64>,
    /// max |v_i − v_j| over the reported formulas.
    pub discrepancy: f64,
    pub degree: usize,
}

impl EnergyReport {
    pub fn value(&self, f: E2Formula) -> Option<f64> {
        self.values.get(f.name()).copied()
    }

    /// Reference value (the direct formula when present).
    pub fn primary(&self) -> f64 {
        self.values
            .get("direct")
            .or_else(|| self.values.values().next())
            .copied()
            .unwrap_or(f64::NAN)
    }
}

/// (σ₁ + ½|∇u|²)|∇u|², shared by three of the formulas.
fn e2_common_interior(n: usize, j: &Jet2) -> f64 {
    let g2 = j.grad_norm2();
    (op::sigma1(n, j) + 0.5 * g2) * g2
}

fn e2_interior(n: usize, f: E2Formula, j: &Jet2) -> f64 {
    let nf = n as f64;
    match f {
        E2Formula::Direct => j.value * op::l4_cubic(n, j),
        E2Formula::Pregeometric | E2Formula::Geometric | E2Formula::Positive => e2_common_interior(n, j),
        E2Formula::Alternate => {
            let g2 = j.grad_norm2();
            2.0 / 3.0 * op::t1(n, j).eval(&j.grad, &j.grad) + nf / 6.0 * g2 * g2
        }
        E2Formula::Sigma2 => {
            let c = weight(n);
            let s2 = op::sigma2_geometric(n, j).unwrap_or(f64::NAN);
            c * c * c * s2 * j.value.powf(4.0 * (nf + 1.0) / (nf - 3.0))
        }
    }
}

fn e2_boundary(n: usize, f: E2Formula, j: &Jet2, b: &BoundaryJet) -> f64 {
    let nf = n as f64;
    let c = weight(n);
    let u = b.value;
    let eu = b.normal;
    let g2 = b.tgrad_norm2();
    let hh = op::h(n, b);
    match f {
        E2Formula::Direct => u * op::b3_cubic(n, b),
        E2Formula::Pregeometric => {
            let t = op::t1(n, j);
            let t_grad_eta = t.eval(&j.grad, &b.point);
            u * hh * op::t1_eta_eta(n, b) - 0.5 * u * t_grad_eta - 0.25 * u * j.grad_norm2() * eu
                + nf / 3.0 * u * hh * hh * hh
        }
        E2Formula::Geometric => {
            c * u * u * op::t1_eta_eta(n, b) + c * u * hh * g2
                - (nf - 3.0) * (nf - 5.0) / 16.0 * u * u * g2
                + (nf - 3.0) / 12.0 * u * eu * eu * eu
                + nf * (nf - 3.0) / 8.0 * u * u * eu * eu
                + nf * (nf - 3.0) * (nf - 3.0) / 16.0 * u * u * u * eu
                + nf / 3.0 * c * c * c * u.powi(4)
        }
        E2Formula::Positive => {
            c * u * hh * g2 + c * c * u * u * g2 + (nf - 3.0) / 12.0 * u * eu * eu * eu
                + nf / 3.0 * c * c * c * u.powi(4)
        }
        E2Formula::Alternate => {
            (nf - 3.0) / 6.0 * u * hh * g2 + 4.0 / 3.0 * c * c * u * u * g2 + nf / 3.0 * c * c * c * u.powi(4)
        }
        E2Formula::Sigma2 => {
            let h2 = op::h2_geometric(n, j, &b.point[..j.dim]).unwrap_or(f64::NAN);
            c * c * c * h2 * u.powf(4.0 * nf / (nf - 3.0))
        }
    }
}

/// 𝓔₂ through the requested formulas on one rule pair.
pub fn e2_report(field: &ScalarField, rules: &Rules, formulas: &[E2Formula]) -> Result<EnergyReport> {
    let n = rules.check(field)?;
    require_noncritical(n)?;
    if formulas.is_empty() {
        return Err(Error::Validation("no formulas requested".into()));
    }
    if formulas.contains(&E2Formula::Sigma2) {
        let pos_ball = rules.ball.map_nodes(|x| field.value_at(x)).into_iter().all(|u| u > 0.0);
        let pos_sphere = rules.sphere.map_nodes(|x| field.value_at(x)).into_iter().all(|u| u > 0.0);
        if !(pos_ball && pos_sphere) {
            return Err(Error::Domain(
                "the geometric formula needs a positive conformal factor".into(),
            ));
        }
    }
    let k = formulas.len();
    let (a, b) = integrate_field(
        rules,
        field,
        k,
        |_, j, o| {
            for (slot, f) in o.iter_mut().zip(formulas) {
                *slot = e2_interior(n, *f, j);
            }
        },
        |_, j, bj, o| {
            for (slot, f) in o.iter_mut().zip(formulas) {
                *slot = e2_boundary(n, *f, j, bj);
            }
        },
    )?;
    let mut values = BTreeMap::new();
    let totals: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    for (f, v) in formulas.iter().zip(&totals) {
        values.insert(f.name().to_string(), *v);
    }
    let mut discrepancy: f64 = 0.0;
    for x in &totals {
        for y in &totals {
            discrepancy = discrepancy.max((x - y).abs());
        }
    }
    Ok(EnergyReport {
        n,
        values,
        discrepancy,
        degree: rules.degree(),
    })
}

/// 𝓔₂ by the direct formula.
pub fn e2(field: &ScalarField, rules: &Rules) -> Result<f64> {
    Ok(e2_report(field, rules, &[E2Formula::Direct])?.primary())
}

/// Conjectured sharp constant: n!/((n+1−k)!(2k−1)!!) ω^{(2k−1)/n} V^{(n+1−2k)/n}.
pub fn sharp_constant_conjecture(n: usize, k: usize, volume: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::Validation(format!("k = {k} out of range for n = {n}")));
    }
    let fact = |m: usize| (1..=m).map(|i| i as f64).product::<f64>();
    let dfact = (1..=2 * k - 1).step_by(2).map(|i| i as f64).product::<f64>();
    let nf = n as f64;
    let kf = k as f64;
    Ok(fact(n) / (fact(n + 1 - k) * dfact)
        * sphere_volume(n).powf((2.0 * kf - 1.0) / nf)
        * volume.powf((nf + 1.0 - 2.0 * kf) / nf))
}

/// Boundary volume: ∮u^{4n/(n−3)} for n ∈ {4,5}, ∮e^{3u} for n = 3.
pub fn boundary_volume(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.check(field)?;
    if n == 3 {
        return rules.sphere.integrate(|x| (3.0 * field.value_at(x)).exp());
    }
    let p = 4.0 * n as f64 / (n as f64 - 3.0);
    let mut bad = None;
    for i in 0..rules.sphere.len() {
        let u = field.value_at(rules.sphere.node(i));
        if !(u > 0.0) {
            bad = Some((i, u));
            break;
        }
    }
    if let Some((i, u)) = bad {
        return Err(Error::Domain(format!("u = {u} ≤ 0 at boundary node {i}")));
    }
    rules.sphere.integrate(|x| field.value_at(x).powf(p))
}

/// The constant that normalizes the boundary volume to ω_n: a factor s with
/// ∮(su)^{4n/(n−3)} = ω_n, or a shift s with ∮e^{3(u+s)} = ω₃.
pub fn normalization_constant(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.n();
    let v = boundary_volume(field, rules)?;
    let omega = rules.omega();
    if n == 3 {
        Ok((omega / v).ln() / 3.0)
    } else {
        Ok((omega / v).powf((n as f64 - 3.0) / (4.0 * n as f64)))
    }
}

pub fn normalize(field: &ScalarField, rules: &Rules) -> Result<ScalarField> {
    let s = normalization_constant(field, rules)?;
    Ok(if rules.n() == 3 {
        field.shifted(s)
    } else {
        field.scaled(s)
    })
}

// ---------------------------------------------------------------------------
// Critical energies (n = 3)

/// 𝓕₂ in weak form.
pub fn f2(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.check(field)?;
    require_critical(n)?;
    let (a, b) = integrate_field(
        rules,
        field,
        1,
        |_, j, o| {
            let g2 = j.grad_norm2();
            o[0] = -0.25 * (0.5 * g2 * g2 + g2 * j.laplacian());
        },
        |_, _, b, o| {
            let eu = b.normal;
            let g2 = b.tgrad_norm2();
            o[0] = 0.25 * g2 * eu + eu * eu * eu / 12.0 + 0.5 * g2 + b.value;
        },
    )?;
    Ok(a[0] + b[0])
}

/// 𝓕₂ assembled from the multilinear operators L_{4,j}, B_{3,j}.
pub fn f2_lemma_form(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.check(field)?;
    require_critical(n)?;
    let (a, b) = integrate_field(
        rules,
        field,
        1,
        |_, j, o| o[0] = j.value * (op::l43(j, j, j) / 24.0 + op::l42(j, j) / 6.0),
        |_, _, b, o| {
            o[0] = b.value * (op::b33(b, b, b) / 24.0 + op::b32(b, b) / 6.0 + 0.5 * op::b31(b)) + b.value
        },
    )?;
    Ok(a[0] + b[0])
}

/// 𝓖₂ = 𝓕₂ − (ω₃/3) log(∮e^{3u}/ω₃).
pub fn g2(field: &ScalarField, rules: &Rules) -> Result<f64> {
    let f = f2(field, rules)?;
    let v = boundary_volume(field, rules)?;
    let omega = rules.omega();
    Ok(f - omega / 3.0 * (v / omega).ln())
}

// ---------------------------------------------------------------------------
// Self-adjoint pairings (n = 3)

fn p3_density(t: &Jet2, u: &Jet2, v: &Jet2, w: &Jet2) -> f64 {
    -(t.grad_dot(u) * v.grad_dot(w) + t.grad_dot(v) * u.grad_dot(w) + t.grad_dot(w) * u.grad_dot(v))
}

fn p2_interior(t: &Jet2, u: &Jet2, v: &Jet2) -> f64 {
    -0.5 * (t.grad_dot(u) * v.laplacian() + t.grad_dot(v) * u.laplacian() + u.grad_dot(v) * t.laplacian())
}

fn p2_boundary(t: &BoundaryJet, u: &BoundaryJet, v: &BoundaryJet) -> f64 {
    0.5 * (t.tgrad_dot(u) * v.normal
        + t.tgrad_dot(v) * u.normal
        + u.tgrad_dot(v) * t.normal
        + t.normal * u.normal * v.normal)
}

/// Weak pairings P₃(t,u,v,w), P₂(t,u,v), P₁(t,u).
pub fn pairing3(t: &ScalarField, u: &ScalarField, v: &ScalarField, w: &ScalarField, rules: &Rules) -> Result<f64> {
    rules
        .ball
        .integrate(|x| p3_density(&t.jet_at(x), &u.jet_at(x), &v.jet_at(x), &w.jet_at(x)))
}

pub fn pairing2(t: &ScalarField, u: &ScalarField, v: &ScalarField, rules: &Rules) -> Result<f64> {
    let dim = t.dim();
    let a = rules
        .ball
        .integrate(|x| p2_interior(&t.jet_at(x), &u.jet_at(x), &v.jet_at(x)))?;
    let b = rules.sphere.integrate(|x| {
        let p = &x[..dim];
        p2_boundary(&t.jet_at(p).boundary(p), &u.jet_at(p).boundary(p), &v.jet_at(p).boundary(p))
    })?;
    Ok(a + b)
}

pub fn pairing1(t: &ScalarField, u: &ScalarField, rules: &Rules) -> Result<f64> {
    let dim = t.dim();
    rules.sphere.integrate(|x| {
        let p = &x[..dim];
        t.jet_at(p).boundary(p).tgrad_dot(&u.jet_at(p).boundary(p))
    })
}

// ---------------------------------------------------------------------------
// Variations

fn tangent_check(residual: f64, scale: f64, tol: f64) -> Result<()> {
    if residual.abs() > tol * scale.max(1.0) {
        return Err(Error::Precondition(format!(
            "direction violates the volume constraint: residual {residual:e}"
        )));
    }
    Ok(())
}

pub const TANGENT_TOL: f64 = 1e-8;

/// Defect of the second-variation inequality for 𝓔₂ on 𝒱 (n ∈ {4,5}):
/// ∫uv L₄(uv,u,u) + ∮uv B₃(uv,u,u) − (n+1)/(n−3) ω⁻¹ 𝓔₂(u) ∮v²u^{4n/(n−3)}.
pub fn second_variation_e2(u: &ScalarField, v: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.check(u)?;
    require_noncritical(n)?;
    let nf = n as f64;
    let p = 4.0 * nf / (nf - 3.0);
    let dim = u.dim();
    let m = rules.sphere.integrate_multi(2, |x, o| {
        let uu = u.value_at(x);
        let vv = v.value_at(x);
        let w = uu.abs().powf(p);
        o[0] = vv * w;
        o[1] = vv.abs() * w;
    })?;
    tangent_check(m[0], m[1], TANGENT_TOL)?;
    let inner = rules.ball.integrate(|x| {
        let ju = u.jet_at(x);
        let uv = ju.mul_jet(&v.jet_at(x));
        uv.value * op::l4_polarized(n, &uv, &ju, &ju)
    })?;
    let bdry = rules.sphere.integrate_multi(2, |x, o| {
        let pnt = &x[..dim];
        let ju = u.jet_at(pnt);
        let jv = v.jet_at(pnt);
        let bu = ju.boundary(pnt);
        let buv = ju.mul_jet(&jv).boundary(pnt);
        o[0] = buv.value * op::b3_polarized(n, &buv, &bu, &bu);
        o[1] = jv.value * jv.value * ju.value.powf(p);
    })?;
    let energy = e2(u, rules)?;
    Ok(inner + bdry[0] - (nf + 1.0) / (nf - 3.0) / rules.omega() * energy * bdry[1])
}

/// Defect of the second-variation inequality for 𝓖₂ (n = 3):
/// ½P₃(v,v,u,u) + P₂(v,v,u) + P₁(v,v) − 3ω₃ ∮v²e^{3u} / ∮e^{3u}.
pub fn second_variation_g2(u: &ScalarField, v: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.check(u)?;
    require_critical(n)?;
    let dim = u.dim();
    let m = rules.sphere.integrate_multi(4, |x, o| {
        let e = (3.0 * u.value_at(x)).exp();
        let vv = v.value_at(x);
        o[0] = vv * e;
        o[1] = vv.abs() * e;
        o[2] = vv * vv * e;
        o[3] = e;
    })?;
    tangent_check(m[0], m[1], TANGENT_TOL)?;
    let inner = rules.ball.integrate_multi(1, |x, o| {
        let ju = u.jet_at(x);
        let jv = v.jet_at(x);
        o[0] = 0.5 * p3_density(&jv, &jv, &ju, &ju) + p2_interior(&jv, &jv, &ju);
    })?;
    let bdry = rules.sphere.integrate(|x| {
        let pnt = &x[..dim];
        let bu = u.jet_at(pnt).boundary(pnt);
        let bv = v.jet_at(pnt).boundary(pnt);
        p2_boundary(&bv, &bv, &bu) + bv.tgrad_norm2()
    })?;
    Ok(inner[0] + bdry - 3.0 * rules.omega() * m[2] / m[3])
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EulerResidual {
    /// sup |L₄(u,u,u)| over interior samples.
    pub interior: f64,
    /// sup |B₃(u,u,u) − ω⁻¹𝓔₂(u) u^{3(n+1)/(n−3)}| over boundary samples.
    pub boundary: f64,
}

pub fn euler_residual(field: &ScalarField, rules: &Rules, samples: usize) -> Result<EulerResidual> {
    let n = rules.check(field)?;
    require_noncritical(n)?;
    let nf = n as f64;
    let dim = field.dim();
    let lambda = e2(field, rules)? / rules.omega();
    let mut interior: f64 = 0.0;
    for x in interior_samples(dim, samples) {
        interior = interior.max(op::l4_cubic(n, &field.jet_at(&x[..dim])).abs());
    }
    let mut boundary: f64 = 0.0;
    for p in boundary_samples(dim, samples) {
        let b = field.jet_at(&p[..dim]).boundary(&p[..dim]);
        let r = op::b3_cubic(n, &b) - lambda * b.value.powf(3.0 * (nf + 1.0) / (nf - 3.0));
        boundary = boundary.max(r.abs());
    }
    Ok(EulerResidual { interior, boundary })
}

/// d𝓔₂(u)[v] = 4(∫v L₄(u,u,u) + ∮v B₃(u,u,u)) for several directions at once.
pub fn e2_gradient(u: &ScalarField, directions: &[ScalarField], rules: &Rules) -> Result<Vec<f64>> {
    let n = rules.check(u)?;
    require_noncritical(n)?;
    let k = directions.len();
    let (a, b) = integrate_field(
        rules,
        u,
        k,
        |x, j, o| {
            let l = op::l4_cubic(n, j);
            for (slot, v) in o.iter_mut().zip(directions) {
                *slot = 4.0 * v.value_at(x) * l;
            }
        },
        |x, _, b, o| {
            let l = op::b3_cubic(n, b);
            for (slot, v) in o.iter_mut().zip(directions) {
                *slot = 4.0 * v.value_at(x) * l;
            }
        },
    )?;
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

/// d𝓖₂(u)[v] for several directions.
pub fn g2_gradient(u: &ScalarField, directions: &[ScalarField], rules: &Rules) -> Result<Vec<f64>> {
    let n = rules.check(u)?;
    require_critical(n)?;
    let k = directions.len();
    let dim = u.dim();
    let a = rules.ball.integrate_multi(k, |x, o| {
        let j = u.jet_at(x);
        let d = op::l43(&j, &j, &j) / 6.0 + 0.5 * op::l42(&j, &j);
        for (slot, v) in o.iter_mut().zip(directions) {
            *slot = v.value_at(x) * d;
        }
    })?;
    let mut b = rules.sphere.integrate_multi(k + 1, |x, o| {
        let p = &x[..dim];
        let bj = u.jet_at(p).boundary(p);
        let d = op::b33(&bj, &bj, &bj) / 6.0 + 0.5 * op::b32(&bj, &bj) + op::b31(&bj) + 1.0;
        let e = (3.0 * bj.value).exp();
        for (slot, v) in o[..k].iter_mut().zip(directions) {
            *slot = v.value_at(p) * d;
        }
        o[k] = e;
    })?;
    let mass = b.pop().unwrap();
    let omega = rules.omega();
    let moments = rules.sphere.integrate_multi(k, |x, o| {
        let e = (3.0 * u.value_at(x)).exp();
        for (slot, v) in o.iter_mut().zip(directions) {
            *slot = v.value_at(x) * e;
        }
    })?;
    Ok((0..k).map(|i| a[i] + b[i] - omega * moments[i] / mass).collect())
}
