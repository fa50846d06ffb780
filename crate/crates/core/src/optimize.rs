//! Projected gradient descent for 𝓔₂ on the volume-normalized cone (n = 4, 5)
//! and for 𝓖₂ on the cone (n = 3), with a flatness metric for the result.
//!
//! The search space is u = s·u₀ + Σ c_α x^α (noncritical) or u = u₀ + Σ c_α x^α
//! (critical), where u₀ is the starting field when it is not a polynomial and
//! the constant 1 (resp. 0) otherwise. Coefficients range over all monomials
//! of total degree ≤ `degree`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    boundary_samples, cone_membership, interior_samples, perturbed_constant, pullback_factor, FieldSpec,
    ScalarField,
};
use crate::functionals::{self as fun, default_degree, Rules};
use crate::jet::{Jet2, Vector};
use crate::mobius::{balance, BalanceOptions, MobiusMap};
use crate::operators as op;
use nalgebra::{DMatrix, DVector};
use crate::poly::{basis, MonomialBasis, Polynomial};

const MAX_BASIS_DEGREE: usize = 8;
/// Rescaling solves the volume constraint exactly up to quadrature rounding.
const VOLUME_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepRule {
    pub initial: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease parameter.
    pub slope: f64,
    pub max_backtracks: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            shrink: 0.5,
            slope: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OptimizationConfig {
    /// Total degree of the polynomial correction.
    pub degree: usize,
    /// Starting field; a seeded perturbation of the constant when absent.
    pub init: Option<FieldSpec>,
    /// Amplitude of the seeded starting perturbation.
    pub init_amplitude: f64,
    pub step: StepRule,
    /// Initial hinge-penalty weight; multiplied by 10 after any step whose
    /// sampled cone violation exceeds `constraint_tol`.
    pub cone_penalty: f64,
    /// Stop once the gradient norm falls below this.
    pub gradient_tol: f64,
    /// Tolerated sampled violation of σ₁ ≥ 0 and H > 0. Flat metrics have
    /// σ₁ ≡ 0, so minimizers sit on the edge of the cone and polynomial
    /// approximations of them cross it slightly.
    pub constraint_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Quadrature degree used inside the loop; final values use the default.
    pub quad_degree: Option<usize>,
    /// Record the flatness metric every this many iterations (0: start and end only).
    pub flatness_every: usize,
    /// Interior and boundary sample counts for the cone penalty.
    pub cone_samples: (usize, usize),
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            degree: 4,
            init: None,
            init_amplitude: 0.05,
            step: StepRule::default(),
            cone_penalty: 10.0,
            gradient_tol: 1e-6,
            constraint_tol: 1e-6,
            max_iter: 500,
            seed: 0,
            quad_degree: None,
            flatness_every: 0,
            cone_samples: (512, 256),
        }
    }
}

impl OptimizationConfig {
    fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.degree > MAX_BASIS_DEGREE {
            return Err(Error::Validation(format!(
                "basis degree {} outside 1..={MAX_BASIS_DEGREE}",
                self.degree
            )));
        }
        if !(self.cone_penalty >= 0.0) {
            return Err(Error::Validation("cone penalty weight must be ≥ 0".into()));
        }
        let s = &self.step;
        if !(s.initial > 0.0) || !(s.shrink > 0.0 && s.shrink < 1.0) || !(s.slope > 0.0 && s.slope < 1.0) {
            return Err(Error::Validation("step rule needs initial > 0 and shrink, slope in (0,1)".into()));
        }
        if self.cone_samples.0 == 0 || self.cone_samples.1 == 0 {
            return Err(Error::Validation("cone penalty needs sample points".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// 𝓔₂ or 𝓖₂ without the penalty.
    pub energy: f64,
    /// Penalized objective.
    pub objective: f64,
    /// |Vol/ω − 1| (noncritical), 0 for n = 3.
    pub constraint_residual: f64,
    pub min_sigma1: f64,
    pub min_h: f64,
    pub gradient_norm: f64,
    /// Accepted step length (0 on the initial record).
    pub step: f64,
    pub penalty_weight: f64,
    pub flatness: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct OptimizationTrace {
    pub n: usize,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// Energy and flatness of the final field at the default quadrature degree.
    pub final_energy: f64,
    pub final_flatness: f64,
}

impl OptimizationTrace {
    /// JSON lines, one record per iteration.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.iterations {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// flatness

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FlatnessReport {
    pub sigma2_sup: f64,
    pub h2_sup: f64,
    /// Sampled sup-distance of the balanced, normalized field to the constant.
    pub distance: f64,
    pub total: f64,
    pub map: MobiusMap,
}

/// Balances and normalizes the field, then measures how far it is from the
/// flat metric: sup |σ₂| + sup |H₂ − H₂(flat)| + sup |ũ − ũ_flat| on sample
/// grids. Zero exactly on flat configurations.
pub fn flatness_report(field: &ScalarField, rules: &Rules, samples: (usize, usize)) -> Result<FlatnessReport> {
    let n = rules.n();
    let dim = n + 1;
    let bal = balance(field, &BalanceOptions::new(1e-12, 200))?;
    let u = fun::normalize(&pullback_factor(&bal.map, field)?, rules)?;
    let flat_value = if n == 3 { 0.0 } else { 1.0 };
    let mut e0 = vec![0.0; dim];
    e0[0] = 1.0;
    let h2_flat = if n == 3 {
        1.0
    } else {
        op::h2_geometric(n, &Jet2::constant(dim, 1.0), &e0)?
    };
    let mut sigma2_sup: f64 = 0.0;
    let mut distance: f64 = 0.0;
    for x in interior_samples(dim, samples.0) {
        let j = u.jet_at(&x[..dim]);
        let s = if n == 3 {
            (-4.0 * j.value).exp() * op::critical_sigma2_scaled(&j)
        } else {
            op::sigma2_geometric(n, &j)?
        };
        sigma2_sup = sigma2_sup.max(s.abs());
        distance = distance.max((j.value - flat_value).abs());
    }
    let mut h2_sup: f64 = 0.0;
    for p in boundary_samples(dim, samples.1) {
        let p = &p[..dim];
        let j = u.jet_at(p);
        let h2 = if n == 3 {
            (-3.0 * j.value).exp() * op::critical_h2_scaled(&j.boundary(p))
        } else {
            op::h2_geometric(n, &j, p)?
        };
        h2_sup = h2_sup.max((h2 - h2_flat).abs());
        distance = distance.max((j.value - flat_value).abs());
    }
    for v in [sigma2_sup, h2_sup, distance] {
        if !v.is_finite() {
            return Err(Error::Numeric("flatness metric is not finite".into()));
        }
    }
    Ok(FlatnessReport {
        sigma2_sup,
        h2_sup,
        distance,
        total: sigma2_sup + h2_sup + distance,
        map: bal.map,
    })
}

pub const FLATNESS_SAMPLES: (usize, usize) = (4096, 2048);

pub fn flatness_metric(field: &ScalarField, rules: &Rules) -> Result<f64> {
    Ok(flatness_report(field, rules, FLATNESS_SAMPLES)?.total)
}

// ---------------------------------------------------------------------------
// search space

struct Space {
    n: usize,
    dim: usize,
    basis: Arc<MonomialBasis>,
    anchor: ScalarField,
    critical: bool,
}

#[derive(Clone)]
struct Point {
    scale: f64,
    coef: Vec<f64>,
}

impl Space {
    fn field(&self, p: &Point) -> Result<ScalarField> {
        let poly = ScalarField::Polynomial(Polynomial::from_coefficients(self.basis.clone(), p.coef.clone())?);
        let base = if self.critical {
            self.anchor.clone()
        } else {
            self.anchor.scaled(p.scale)
        };
        Ok(base.plus(&poly))
    }

    /// Values of all basis monomials at x.
    fn monomials(&self, x: &[f64], out: &mut [f64]) {
        self.basis.values_into(x, self.basis.len(), out);
    }

    fn monomial_jet(&self, k: usize, x: &[f64]) -> Jet2 {
        let mut c = vec![0.0; self.basis.len()];
        c[k] = 1.0;
        Polynomial::from_coefficients(self.basis.clone(), c).unwrap().jet(x)
    }
}

/// Splits a starting field into anchor + polynomial correction.
fn decompose(n: usize, init: &ScalarField, b: &Arc<MonomialBasis>) -> Result<(ScalarField, Point)> {
    let dim = n + 1;
    let anchor_value = if n == 3 { 0.0 } else { 1.0 };
    let Some(p) = init.as_polynomial() else {
        return Ok((
            init.clone(),
            Point {
                scale: 1.0,
                coef: vec![0.0; b.len()],
            },
        ));
    };
    let mut coef = vec![0.0; b.len()];
    for t in p.terms() {
        let mut e = [0u8; crate::jet::MAX_DIM];
        for (k, &v) in t.exponents.iter().enumerate() {
            e[k] = v as u8;
        }
        let i = b.index_of(&e).ok_or_else(|| {
            Error::Validation(format!(
                "starting polynomial has degree {} above the basis degree {}",
                p.degree(),
                b.degree
            ))
        })?;
        coef[i] += t.coef;
    }
    coef[0] -= anchor_value;
    Ok((
        ScalarField::constant(dim, anchor_value),
        Point { scale: 1.0, coef },
    ))
}

struct Evaluation {
    energy: f64,
    objective: f64,
    constraint: f64,
    min_sigma1: f64,
    min_h: f64,
    field: ScalarField,
}

struct Penalty {
    sigma: f64,
    h: f64,
    min_sigma1: f64,
    min_h: f64,
}

impl Penalty {
    fn total(&self) -> f64 {
        self.sigma + self.h
    }
}

struct Problem {
    space: Space,
    rules: Rules,
    interior: Vec<Vector>,
    boundary: Vec<Vector>,
}

impl Problem {
    /// Rescales (noncritical) or shifts (critical) onto the normalization
    /// and evaluates the penalized objective. `None` if the field leaves the
    /// domain of the functional.
    fn evaluate(&self, p: &mut Point, weight: f64) -> Result<Option<Evaluation>> {
        let sp = &self.space;
        let field = sp.field(p)?;
        let s = match fun::normalization_constant(&field, &self.rules) {
            Ok(s) if s.is_finite() => s,
            Ok(_) | Err(Error::Domain(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if sp.critical {
            p.coef[0] += s;
        } else {
            p.scale *= s;
            p.coef.iter_mut().for_each(|c| *c *= s);
        }
        let field = sp.field(p)?;
        let (energy, constraint) = if sp.critical {
            (fun::g2(&field, &self.rules)?, 0.0)
        } else {
            let v = fun::boundary_volume(&field, &self.rules)?;
            (fun::e2(&field, &self.rules)?, (v / self.rules.omega() - 1.0).abs())
        };
        let pen = self.penalty(&field);
        if !energy.is_finite() {
            return Ok(None);
        }
        Ok(Some(Evaluation {
            energy,
            objective: energy + weight * pen.total(),
            constraint,
            min_sigma1: pen.min_sigma1,
            min_h: pen.min_h,
            field,
        }))
    }

    /// Mean squared hinge violations of σ₁ ≥ 0 and H > 0 on the sample grids.
    fn penalty(&self, field: &ScalarField) -> Penalty {
        let n = self.space.n;
        let dim = self.space.dim;
        let mut pen_i = 0.0;
        let mut min_s = f64::INFINITY;
        for x in &self.interior {
            let s = op::sigma1(n, &field.jet_at(&x[..dim]));
            min_s = min_s.min(s);
            pen_i += s.min(0.0).powi(2);
        }
        let mut pen_b = 0.0;
        let mut pen_h = 0.0;
        let mut min_h = f64::INFINITY;
        for p in &self.boundary {
            let p = &p[..dim];
            let j = field.jet_at(p);
            let s = op::sigma1(n, &j);
            min_s = min_s.min(s);
            pen_b += s.min(0.0).powi(2);
            let h = op::h(n, &j.boundary(p));
            min_h = min_h.min(h);
            pen_h += h.min(0.0).powi(2);
        }
        let nb = self.boundary.len() as f64;
        Penalty {
            sigma: pen_i / self.interior.len() as f64 + pen_b / nb,
            h: pen_h / nb,
            min_sigma1: min_s,
            min_h,
        }
    }

    /// Gradient in coefficient space of c ↦ objective(normalize(u(c))) at a
    /// normalized point. Rescaling by s = (ω/Vol)^{1/p} contributes
    /// −(∂_s objective)/(pω)·∇Vol, and ∂_s is read off from homogeneity:
    /// degree 4 for 𝓔₂ and the σ₁ hinge, degree 2 for the H hinge.
    fn gradient(&self, ev: &Evaluation, weight: f64) -> Result<Vec<f64>> {
        let field = &ev.field;
        let n = self.space.n;
        let omega = self.rules.omega();
        let (mut g, constraint) = self.energy_gradient(field)?;
        let mut ds = 4.0 * ev.energy;
        if weight > 0.0 {
            let pen = self.penalty(field);
            if pen.total() > 0.0 {
                let pg = self.penalty_gradient(field);
                g.iter_mut().zip(&pg).for_each(|(a, b)| *a += weight * b);
                ds += weight * (4.0 * pen.sigma + 2.0 * pen.h);
            }
        }
        if let Some(dv) = constraint {
            let pw = 4.0 * n as f64 / (n as f64 - 3.0);
            let f = ds / (pw * omega);
            g.iter_mut().zip(&dv).for_each(|(a, b)| *a -= f * b);
        }
        Ok(g)
    }

    /// Coefficient gradient of 𝓔₂ (with the gradient of the boundary volume)
    /// or of 𝓖₂, without normalization or penalty.
    fn energy_gradient(&self, field: &ScalarField) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let sp = &self.space;
        let n = sp.n;
        let dim = sp.dim;
        let k = sp.basis.len();
        let omega = self.rules.omega();
        let g;
        let mut constraint = None;
        if sp.critical {
            let interior = self.rules.ball.integrate_multi(k, |x, o| {
                let d = op::critical_sigma2_scaled(&field.jet_at(x));
                sp.monomials(x, o);
                o.iter_mut().for_each(|v| *v *= d);
            })?;
            let mass = self.rules.sphere.integrate(|x| (3.0 * field.value_at(&x[..dim])).exp())?;
            let boundary = self.rules.sphere.integrate_multi(k, |x, o| {
                let p = &x[..dim];
                let j = field.jet_at(p);
                let d = op::critical_h2_scaled(&j.boundary(p)) - omega * (3.0 * j.value).exp() / mass;
                sp.monomials(p, o);
                o.iter_mut().for_each(|v| *v *= d);
            })?;
            g = interior.iter().zip(&boundary).map(|(a, b)| a + b).collect::<Vec<_>>();
        } else {
            let interior = self.rules.ball.integrate_multi(k, |x, o| {
                let d = 4.0 * op::l4_cubic(n, &field.jet_at(x));
                sp.monomials(x, o);
                o.iter_mut().for_each(|v| *v *= d);
            })?;
            let pw = 4.0 * n as f64 / (n as f64 - 3.0);
            let boundary = self.rules.sphere.integrate_multi(2 * k, |x, o| {
                let p = &x[..dim];
                let j = field.jet_at(p);
                let d = 4.0 * op::b3_cubic(n, &j.boundary(p));
                let dv = pw * j.value.powf(pw - 1.0);
                let (a, b) = o.split_at_mut(k);
                sp.monomials(p, a);
                b.copy_from_slice(a);
                a.iter_mut().for_each(|v| *v *= d);
                b.iter_mut().for_each(|v| *v *= dv);
            })?;
            g = (0..k).map(|i| interior[i] + boundary[i]).collect();
            constraint = Some(boundary[k..].to_vec());
        }
        Ok((g, constraint))
    }

    /// Inverse of a fixed metric for the descent direction: the energy
    /// Hessian at `p` by central differences of the gradient, with eigenvalues
    /// replaced by their absolute values and floored at 1e−3 of the largest.
    /// Monomial coordinates are badly scaled; without this, plain descent
    /// needs thousands of iterations.
    fn inverse_metric(&self, p: &Point) -> Result<DMatrix<f64>> {
        let k = self.space.basis.len();
        let h = 1e-4;
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            let mut col: Vec<f64> = Vec::new();
            for sign in [1.0, -1.0] {
                let mut q = p.clone();
                q.coef[j] += sign * h;
                let g = self.energy_gradient(&self.space.field(&q)?)?.0;
                if col.is_empty() {
                    col = g;
                } else {
                    col.iter_mut().zip(&g).for_each(|(a, b)| *a = (*a - b) / (2.0 * h));
                }
            }
            for i in 0..k {
                hess[(i, j)] = col[i];
            }
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(top > 0.0) || !top.is_finite() {
            return Ok(DMatrix::identity(k, k));
        }
        let floor = 1e-3 * top;
        let inv = eig.eigenvalues.map(|l| 1.0 / l.abs().max(floor));
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
    }

    /// σ₁ is quadratic and H affine in the jet, so the symmetric difference
    /// (q(J + Φ) − q(J − Φ))/2 is the exact directional derivative.
    fn penalty_gradient(&self, field: &ScalarField) -> Vec<f64> {
        let sp = &self.space;
        let n = sp.n;
        let dim = sp.dim;
        let k = sp.basis.len();
        let mut g = vec![0.0; k];
        let ni = self.interior.len() as f64;
        let nb = self.boundary.len() as f64;
        let mut add = |x: &[f64], boundary: bool| {
            let j = field.jet_at(x);
            let s = op::sigma1(n, &j);
            let h = if boundary { op::h(n, &j.boundary(x)) } else { 1.0 };
            if s >= 0.0 && h >= 0.0 {
                return;
            }
            let w = if boundary { nb } else { ni };
            for (a, slot) in g.iter_mut().enumerate() {
                let phi = sp.monomial_jet(a, x);
                if s < 0.0 {
                    let ds = (op::sigma1(n, &(j.clone() + phi.clone())) - op::sigma1(n, &(j.clone() - phi.clone()))) / 2.0;
                    *slot += 2.0 * s * ds / w;
                }
                if h < 0.0 {
                    let dh = (op::h(n, &(j.clone() + phi.clone()).boundary(x))
                        - op::h(n, &(j.clone() - phi).boundary(x)))
                        / 2.0;
                    *slot += 2.0 * h * dh / w;
                }
            }
        };
        for x in &self.interior {
            add(&x[..dim], false);
        }
        for p in &self.boundary {
            add(&p[..dim], true);
        }
        g
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn setup(n: usize, cfg: &OptimizationConfig) -> Result<(Problem, Point, Rules)> {
    cfg.validate()?;
    let critical = n == 3;
    let dim = n + 1;
    let init = match &cfg.init {
        Some(spec) => {
            if spec.n != n {
                return Err(Error::Validation(format!(
                    "starting field is for n = {}, optimizing for n = {n}",
                    spec.n
                )));
            }
            spec.build()?
        }
        None => perturbed_constant(n, cfg.seed, cfg.degree.min(4), cfg.init_amplitude)?,
    };
    let final_rules = Rules::new(n, default_degree(n))?;
    let init = fun::normalize(&init, &final_rules).map_err(|e| match e {
        Error::Domain(d) => Error::Precondition(format!("starting field cannot be normalized: {d}")),
        other => other,
    })?;
    let cone = cone_membership(&init, crate::fields::DEFAULT_INTERIOR_SAMPLES, crate::fields::DEFAULT_BOUNDARY_SAMPLES)?;
    if !cone.member {
        return Err(Error::Precondition(format!(
            "starting field is outside the cone: min σ1 = {:e}, min H = {:e}",
            cone.sigma1_min, cone.h_min
        )));
    }
    // degree 12 matches the default rules to rounding on degree-4 polynomial
    // fields near constants; other starting fields keep the default rules
    let loop_degree = if init.as_polynomial().is_some() && cfg.degree <= 4 { 12 } else { default_degree(n) };
    let b = basis(dim, cfg.degree);
    let (anchor, point) = decompose(n, &init, &b)?;
    let problem = Problem {
        space: Space {
            n,
            dim,
            basis: b,
            anchor,
            critical,
        },
        rules: Rules::new(n, cfg.quad_degree.unwrap_or(loop_degree))?,
        interior: interior_samples(dim, cfg.cone_samples.0),
        boundary: boundary_samples(dim, cfg.cone_samples.1),
    };
    Ok((problem, point, final_rules))
}

fn run(n: usize, cfg: &OptimizationConfig) -> Result<(ScalarField, OptimizationTrace)> {
    let critical = n == 3;
    let (problem, mut point, final_rules) = setup(n, cfg)?;
    let mut weight = cfg.cone_penalty;
    let mut trace = OptimizationTrace {
        n,
        ..Default::default()
    };
    let mut cur = problem
        .evaluate(&mut point, weight)?
        .ok_or_else(|| Error::Precondition("starting field is outside the domain of the energy".into()))?;
    let flat_samples = (1024, 512);
    // built on the first step so that stationary starts skip the Hessian
    let mut precond: Option<DMatrix<f64>> = None;
    let direction = |m: &DMatrix<f64>, g: &[f64]| -> Vec<f64> { (m * DVector::from_column_slice(g)).as_slice().to_vec() };
    let mut grad = problem.gradient(&cur, weight)?;
    let mut gnorm = norm(&grad);
    let record = |it: usize, ev: &Evaluation, gnorm: f64, step: f64, weight: f64, with_flatness: bool| -> Result<IterationRecord> {
        Ok(IterationRecord {
            iteration: it,
            energy: ev.energy,
            objective: ev.objective,
            constraint_residual: ev.constraint,
            min_sigma1: ev.min_sigma1,
            min_h: ev.min_h,
            gradient_norm: gnorm,
            step,
            penalty_weight: weight,
            flatness: if with_flatness {
                Some(flatness_report(&ev.field, &problem.rules, flat_samples)?.total)
            } else {
                None
            },
        })
    };
    trace.iterations.push(record(0, &cur, gnorm, 0.0, weight, true)?);
    let mut converged = gnorm < cfg.gradient_tol;
    let mut it = 0;
    while !converged && it < cfg.max_iter {
        it += 1;
        if precond.is_none() {
            precond = Some(problem.inverse_metric(&point)?);
        }
        let dir = direction(precond.as_ref().expect("built above"), &grad);
        let mut t = cfg.step.initial;
        let mut accepted = None;
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        for _ in 0..=cfg.step.max_backtracks {
            let mut trial = Point {
                scale: point.scale,
                coef: point.coef.iter().zip(&dir).map(|(c, d)| c - t * d).collect(),
            };
            if let Some(ev) = problem.evaluate(&mut trial, weight)? {
                if ev.objective <= cur.objective - cfg.step.slope * t * slope {
                    accepted = Some((trial, ev));
                    break;
                }
            }
            t *= cfg.step.shrink;
        }
        let Some((next, ev)) = accepted else {
            // no representable decrease left: the gradient is at rounding level
            if gnorm < cfg.gradient_tol.max(1e-5) {
                converged = true;
                break;
            }
            return Err(Error::LineSearch {
                detail: format!("no sufficient decrease at iteration {it} (gradient norm {gnorm:e})"),
                trace: Box::new(trace),
            });
        };
        point = next;
        cur = ev;
        if cur.min_sigma1 < -cfg.constraint_tol || cur.min_h < -cfg.constraint_tol {
            weight = (weight * 10.0).max(1.0);
            cur.objective = cur.energy + weight * problem.penalty(&cur.field).total();
        }
        if cur.constraint > VOLUME_TOL {
            return Err(Error::Convergence {
                iterations: it,
                detail: format!("volume constraint residual {:e} after rescaling", cur.constraint),
            });
        }
        grad = problem.gradient(&cur, weight)?;
        gnorm = norm(&grad);
        converged = gnorm < cfg.gradient_tol;
        let with_flatness = cfg.flatness_every > 0 && it % cfg.flatness_every == 0;
        trace.iterations.push(record(it, &cur, gnorm, t, weight, with_flatness)?);
    }
    trace.converged = converged;
    let field = cur.field;
    trace.final_energy = if critical {
        fun::g2(&field, &final_rules)?
    } else {
        fun::e2(&fun::normalize(&field, &final_rules)?, &final_rules)?
    };
    trace.final_flatness = flatness_metric(&field, &final_rules)?;
    if let Some(last) = trace.iterations.last_mut() {
        last.flatness = Some(trace.final_flatness);
    }
    Ok((field, trace))
}

/// Minimizes 𝓔₂ over the volume-normalized cone, n ∈ {4, 5}.
pub fn minimize_e2(cfg: &OptimizationConfig, n: usize) -> Result<(ScalarField, OptimizationTrace)> {
    if !(n == 4 || n == 5) {
        return Err(Error::Validation(format!("𝓔₂ minimization needs n ∈ {{4,5}}, got {n}")));
    }
    run(n, cfg)
}

/// Minimizes 𝓖₂ over the cone on B⁴.
pub fn minimize_g2(cfg: &OptimizationConfig) -> Result<(ScalarField, OptimizationTrace)> {
    run(3, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldParams;
    use crate::poly::Term;
    use std::f64::consts::PI;

    fn fd_check(n: usize, seed: u64) -> f64 {
        let cfg = OptimizationConfig {
            seed,
            init_amplitude: 0.1,
            degree: 3,
            quad_degree: Some(12),
            ..Default::default()
        };
        let (problem, mut point, _) = setup(n, &cfg).unwrap();
        let ev = problem.evaluate(&mut point, 0.0).unwrap().unwrap();
        let g = problem.gradient(&ev, 0.0).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..g.len() {
            let f = |d: f64| {
                let mut q = point.clone();
                q.coef[k] += d;
                problem.evaluate(&mut q, 0.0).unwrap().unwrap().objective
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (n, seed) in [(4, 1), (5, 2), (3, 3)] {
            let w = fd_check(n, seed);
            assert!(w < 1e-5, "n = {n}: relative gradient error {w:e}");
        }
    }

    fn start(n: usize, params: FieldParams, max_iter: usize) -> OptimizationConfig {
        OptimizationConfig {
            init: Some(FieldSpec { params, n }),
            max_iter,
            ..Default::default()
        }
    }

    #[test]
    fn constant_start_is_stationary() {
        let (_, tr) = minimize_e2(&start(4, FieldParams::Constant { c: 1.0 }, 5), 4).unwrap();
        let first = &tr.iterations[0];
        assert!(first.gradient_norm <= 1e-8, "{}", first.gradient_norm);
        assert!((first.energy - PI * PI / 18.0).abs() < 1e-10);
        assert!(tr.converged);
    }

    #[test]
    fn zero_start_is_stationary_for_g2() {
        let (_, tr) = minimize_g2(&start(3, FieldParams::Constant { c: 0.0 }, 5)).unwrap();
        assert!(tr.converged);
        assert!(tr.final_energy.abs() < 1e-12);
    }

    #[test]
    fn flat_starts_begin_at_the_minimum() {
        let map = crate::mobius::random_map(5, 7, 0.3).unwrap();
        let (_, tr) = minimize_e2(&start(4, FieldParams::FlatFactor { map }, 0), 4).unwrap();
        let first = &tr.iterations[0];
        assert!((first.energy - PI * PI / 18.0).abs() < 1e-6, "{}", first.energy);
        assert!(first.gradient_norm < 1e-4, "{}", first.gradient_norm);

        let map = crate::mobius::random_map(4, 8, 0.3).unwrap();
        let (_, tr) = minimize_g2(&start(3, FieldParams::CriticalFlatLog { map }, 0)).unwrap();
        assert!(tr.iterations[0].energy.abs() < 1e-6, "{}", tr.iterations[0].energy);
    }

    #[test]
    fn outside_the_cone_is_a_precondition_error() {
        // harmonic perturbations make σ1 negative wherever the gradient is nonzero
        let terms = vec![
            Term { exponents: vec![0, 0, 0, 0, 0], coef: 1.0 },
            Term { exponents: vec![1, 1, 0, 0, 0], coef: 0.05 },
        ];
        let cfg = start(4, FieldParams::Polynomial { terms }, 5);
        assert!(matches!(minimize_e2(&cfg, 4), Err(Error::Precondition(_))));
    }
}
