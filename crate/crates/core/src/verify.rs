//! Named numerical checks of the operator identities, energy formulas and
//! inequalities. Every check returns a residual and compares it with a
//! tolerance; "evidence" checks only report a margin.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fields::{
    boundary_samples, interior_samples, perturbed_constant, pullback_factor, random_smooth, ScalarField,
};
use crate::functionals::{self as fun, default_degree, E2Formula, Rules};
use crate::jet::{dot, BoundaryJet, Jet2, Jet3, Vector, ZERO_VEC};
use crate::mobius::{balance, random_map, BalanceOptions};
use crate::operators::{self as op, weight};
use crate::poly::{Polynomial, Term};
use crate::quadrature::{BallRuleSpec, QuadratureRule, SphereRuleSpec};

pub const IDENTITY_TOL: f64 = 1e-8;
pub const COMPOSED_TOL: f64 = 1e-6;
pub const EXACT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckConfig {
    pub seed: u64,
    /// Quadrature degree; defaults per dimension.
    pub degree: Option<usize>,
    /// Overrides every check's tolerance.
    pub tol: Option<f64>,
    /// Pointwise sample count for pointwise identities.
    pub samples: usize,
    /// Overrides the number of random fields a check draws.
    pub fields: Option<usize>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            degree: None,
            tol: None,
            samples: 256,
            fields: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub n: usize,
    pub residual: f64,
    pub tolerance: f64,
    /// None for evidence checks, which never pass or fail.
    pub passed: Option<bool>,
    pub evidence: bool,
    pub inputs: Value,
    pub detail: Value,
    pub runtime: f64,
}

impl CheckResult {
    /// Counts as a failure for the exit code.
    pub fn failed(&self) -> bool {
        self.passed == Some(false)
    }
}

/// What a check measured, before judgement.
struct Outcome {
    residual: f64,
    detail: Value,
    fields: Vec<Value>,
}

impl Outcome {
    fn new(residual: f64, detail: Value) -> Self {
        Self {
            residual,
            detail,
            fields: Vec::new(),
        }
    }

    fn with_fields(mut self, fields: &[&ScalarField]) -> Self {
        self.fields = fields
            .iter()
            .map(|f| serde_json::to_value(f.to_spec()).unwrap_or(Value::Null))
            .collect();
        self
    }
}

struct Ctx<'a> {
    n: usize,
    dim: usize,
    rules: Rules,
    cfg: &'a CheckConfig,
}

impl Ctx<'_> {
    fn seed(&self, k: u64) -> u64 {
        self.cfg
            .seed
            .wrapping_mul(1_000_003)
            .wrapping_add(self.n as u64 * 7919)
            .wrapping_add(k)
    }

    fn random(&self, k: u64, degree: usize, amplitude: f64, shift: f64) -> Result<ScalarField> {
        random_smooth(self.dim, self.seed(k), degree, amplitude, shift)
    }

    /// Generic test field: positive for n ≥ 4, centred for n = 3.
    fn generic(&self, k: u64, degree: usize) -> Result<ScalarField> {
        if self.n == 3 {
            self.random(k, degree, 0.4, 0.0)
        } else {
            self.random(k, degree, 0.25, 1.0)
        }
    }

    fn count(&self, default: usize) -> usize {
        self.cfg.fields.unwrap_or(default)
    }

    fn interior(&self) -> Vec<Vector> {
        interior_samples(self.dim, self.cfg.samples)
    }

    fn boundary(&self) -> Vec<Vector> {
        boundary_samples(self.dim, self.cfg.samples)
    }

    fn omega(&self) -> f64 {
        self.rules.omega()
    }
}

type RunFn = fn(&Ctx) -> Result<Outcome>;

pub struct CheckSpec {
    pub name: &'static str,
    pub dims: &'static [usize],
    pub tolerance: f64,
    pub evidence: bool,
    pub summary: &'static str,
    run: RunFn,
}

const NONCRIT: &[usize] = &[4, 5];
const CRIT: &[usize] = &[3];
const ALL_N: &[usize] = &[3, 4, 5];

macro_rules! check {
    ($name:expr, $dims:expr, $tol:expr, $run:expr, $summary:expr) => {
        CheckSpec {
            name: $name,
            dims: $dims,
            tolerance: $tol,
            evidence: false,
            summary: $summary,
            run: $run,
        }
    };
}

static REGISTRY: &[CheckSpec] = &[
    check!("fsa_symmetry", ALL_N, IDENTITY_TOL, fsa_symmetry,
        "interior+boundary pairing of (L4;B3) is symmetric; critical pairings match their weak forms"),
    check!("conformal_covariance_L4B3", ALL_N, IDENTITY_TOL, conformal_covariance,
        "pointwise transformation of L4, B3 (or the critical σ2, H2 densities) under Möbius pullback"),
    check!("divergence_form_equivalence", NONCRIT, IDENTITY_TOL, divergence_form,
        "divergence form of L4 from 3-jets equals the 2-jet form"),
    check!("commutator_L4", NONCRIT, IDENTITY_TOL, commutator_l4,
        "closed-form [L4,x^i] equals L4(x^i u,u,u) − x^i L4(u,u,u)"),
    check!("commutator_B3", NONCRIT, IDENTITY_TOL, commutator_b3,
        "closed-form [B3,x^i] equals B3(x^i u,u,u) − x^i B3(u,u,u)"),
    check!("integral_nablar", NONCRIT, IDENTITY_TOL, integral_nablar,
        "integral of u(T1 − n/2 σ1)(∇u,∇r²) in terms of |∇u|² and boundary data"),
    check!("critical_integral_nablar", CRIT, IDENTITY_TOL, critical_integral_nablar,
        "integral of (T1 − 3/2 σ1)(∇u,∇r²) on B⁴ equals 3∫σ1 − ∮T1(η,η)"),
    check!("divT1", NONCRIT, IDENTITY_TOL, div_t1,
        "divergence of uT1, pointwise from 3-jets and integrated against the boundary"),
    check!("int_T1eta", NONCRIT, IDENTITY_TOL, int_t1_eta,
        "boundary integral of u²T1(η,η)"),
    check!("fourLaplacian", NONCRIT, IDENTITY_TOL, four_laplacian,
        "divergence of u|∇u|²∇u against T1 and σ1"),
    check!("energy_equivalence", NONCRIT, IDENTITY_TOL, energy_equivalence,
        "the five expanded formulas for E2 agree on random polynomial fields"),
    check!("cocycle_F2", CRIT, IDENTITY_TOL, cocycle_f2,
        "F2(u+v) = F2(v) + F2 in the metric e^{2v}dx² of u"),
    check!("mobius_invariance_F2", CRIT, IDENTITY_TOL, mobius_invariance_f2,
        "F2 and G2 are invariant under Möbius pullback; F2(log λ) = 0"),
    check!("escobar_inequality", NONCRIT, 0.0, escobar_inequality,
        "normalized E1 exceeds the sharp trace constant on random fields"),
    check!("escobar_equality_bubbles", NONCRIT, 1e-7, escobar_equality_bubbles,
        "normalized E1 of a|rx − ξ|^{1−n} equals the sharp trace constant"),
    check!("escobar_minimizer_argument", NONCRIT, IDENTITY_TOL, escobar_minimizer_argument,
        "k=1 classification quantity vanishes at constants and is positive for harmonic non-constants"),
    check!("nonsharp_positivity", NONCRIT, 0.0, nonsharp_positivity,
        "E2 on normalized cone fields exceeds the explicit positive lower bound"),
    check!("critical_lower_bound", CRIT, 0.0, critical_lower_bound,
        "G2 on cone fields exceeds the explicit lower bound"),
    check!("euler_at_constant", NONCRIT, EXACT_TOL, euler_at_constant,
        "Euler–Lagrange residuals of u ≡ 1"),
    check!("euler_at_flat_factor", NONCRIT, COMPOSED_TOL, euler_at_flat_factor,
        "Euler–Lagrange residuals of a balanced, normalized flat factor"),
    check!("balanced_spectral", NONCRIT, IDENTITY_TOL, balanced_spectral,
        "commutator sum at u ≡ 1 equals 4/(n−3) E2 by two routes"),
    check!("critical_balanced_spectral", CRIT, IDENTITY_TOL, critical_balanced_spectral,
        "critical commutator sum at u ≡ 0 equals 3ω₃ by two routes"),
    check!("final_stability_at_constant", ALL_N, EXACT_TOL, final_stability_at_constant,
        "spectral defect equals minus the final stability bound; both vanish at constants"),
    check!("sharp_constant_consistency", NONCRIT, EXACT_TOL, sharp_constant_consistency,
        "S2 of the flat ball equals the conjectured sharp constant; k=1 gives Escobar"),
    CheckSpec {
        name: "conjecture1_evidence",
        dims: NONCRIT,
        tolerance: f64::NAN,
        evidence: true,
        summary: "sampled margins E2 − E2(1) over normalized cone fields",
        run: conjecture1_evidence,
    },
    CheckSpec {
        name: "conjecture3_evidence",
        dims: CRIT,
        tolerance: f64::NAN,
        evidence: true,
        summary: "sampled values of G2 over cone fields",
        run: conjecture3_evidence,
    },
];

pub fn registry() -> &'static [CheckSpec] {
    REGISTRY
}

fn lookup(name: &str) -> Result<&'static CheckSpec> {
    REGISTRY
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::Registry(name.to_string()))
}

pub fn run_check(name: &str, n: usize, cfg: &CheckConfig) -> Result<CheckResult> {
    let spec = lookup(name)?;
    if !spec.dims.contains(&n) {
        return Err(Error::Validation(format!(
            "check '{name}' applies to n ∈ {:?}, not n = {n}",
            spec.dims
        )));
    }
    let degree = cfg.degree.unwrap_or(default_degree(n));
    let start = Instant::now();
    let cx = Ctx {
        n,
        dim: n + 1,
        rules: Rules::new(n, degree)?,
        cfg,
    };
    let out = (spec.run)(&cx)?;
    let tolerance = if spec.evidence {
        f64::NAN
    } else {
        cfg.tol.unwrap_or(spec.tolerance)
    };
    let passed = if spec.evidence {
        None
    } else {
        Some(out.residual <= tolerance)
    };
    Ok(CheckResult {
        name: name.to_string(),
        n,
        residual: out.residual,
        tolerance,
        passed,
        evidence: spec.evidence,
        inputs: json!({
            "seed": cfg.seed,
            "degree": degree,
            "samples": cfg.samples,
            "fields": out.fields,
        }),
        detail: out.detail,
        runtime: start.elapsed().as_secs_f64(),
    })
}

/// `*` matches any run of characters; everything else is literal.
fn wildcard_match(pattern: &str, name: &str) -> bool {
    fn rec(p: &[u8], s: &[u8]) -> bool {
        match p.split_first() {
            None => s.is_empty(),
            Some((b'*', rest)) => (0..=s.len()).any(|k| rec(rest, &s[k..])),
            Some((c, rest)) => s.first() == Some(c) && rec(rest, &s[1..]),
        }
    }
    rec(pattern.as_bytes(), name.as_bytes())
}

/// Registered names selected by a comma-separated filter of names or
/// wildcard patterns; "all" selects everything. A plain name that is not
/// registered is an error.
pub fn select(filter: &str) -> Result<Vec<&'static str>> {
    let mut out = Vec::new();
    for pat in filter.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if pat == "all" {
            out.extend(REGISTRY.iter().map(|c| c.name));
            continue;
        }
        let hits: Vec<_> = REGISTRY
            .iter()
            .filter(|c| wildcard_match(pat, c.name))
            .map(|c| c.name)
            .collect();
        if hits.is_empty() && !pat.contains('*') {
            return Err(Error::Registry(pat.to_string()));
        }
        out.extend(hits);
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|n| seen.insert(*n));
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteSummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub evidence: usize,
    /// Largest residual/tolerance ratio among non-evidence checks.
    pub worst: Option<(String, usize, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
    pub summary: SuiteSummary,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }
}

/// Runs every selected check for every requested dimension it applies to.
/// A check that errors is reported as failed with the error in its detail.
pub fn run_suite(filter: &str, ns: &[usize], cfg: &CheckConfig) -> Result<SuiteReport> {
    run_suite_with(filter, ns, cfg, |_| {})
}

/// As [`run_suite`], calling `sink` on each result as soon as it is ready.
pub fn run_suite_with(
    filter: &str,
    ns: &[usize],
    cfg: &CheckConfig,
    mut sink: impl FnMut(&CheckResult),
) -> Result<SuiteReport> {
    let names = select(filter)?;
    let mut results = Vec::new();
    for name in names {
        let spec = lookup(name)?;
        for &n in ns {
            if !spec.dims.contains(&n) {
                continue;
            }
            let r = match run_check(name, n, cfg) {
                Ok(r) => r,
                Err(e) => CheckResult {
                    name: name.to_string(),
                    n,
                    residual: f64::NAN,
                    tolerance: cfg.tol.unwrap_or(spec.tolerance),
                    passed: if spec.evidence { None } else { Some(false) },
                    evidence: spec.evidence,
                    inputs: json!({ "seed": cfg.seed, "degree": cfg.degree }),
                    detail: json!({ "error": e.to_string() }),
                    runtime: 0.0,
                },
            };
            sink(&r);
            results.push(r);
        }
    }
    let mut summary = SuiteSummary {
        total: results.len(),
        passed: 0,
        failed: 0,
        evidence: 0,
        worst: None,
    };
    let mut worst_ratio = f64::NEG_INFINITY;
    for r in &results {
        match r.passed {
            None => summary.evidence += 1,
            Some(true) => summary.passed += 1,
            Some(false) => summary.failed += 1,
        }
        if !r.evidence {
            let ratio = if r.residual.is_nan() {
                f64::INFINITY
            } else if r.tolerance > 0.0 {
                r.residual / r.tolerance
            } else if r.residual > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio > worst_ratio {
                worst_ratio = ratio;
                summary.worst = Some((r.name.clone(), r.n, r.residual));
            }
        }
    }
    Ok(SuiteReport { results, summary })
}

// ---------------------------------------------------------------------------
// helpers

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn bjet(f: &ScalarField, p: &[f64]) -> BoundaryJet {
    f.jet_at(p).boundary(p)
}

fn fields_vec(cx: &Ctx, count: u64, degree: usize) -> Result<Vec<ScalarField>> {
    (0..count).map(|k| cx.generic(k, degree)).collect()
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |m: f64, x| if x.is_nan() { f64::NAN } else { m.max(x) })
}

// ---------------------------------------------------------------------------
// formal self-adjointness

fn fsa_symmetry(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let dim = cx.dim;
    let fs = fields_vec(cx, 4, 3)?;
    let r = &cx.rules;
    if n != 3 {
        let q = |t: &ScalarField, u: &ScalarField, v: &ScalarField, w: &ScalarField| -> Result<f64> {
            let a = r.ball.integrate(|x| {
                t.value_at(x) * op::l4_polarized(n, &u.jet_at(x), &v.jet_at(x), &w.jet_at(x))
            })?;
            let b = r.sphere.integrate(|x| {
                let p = &x[..dim];
                t.value_at(p) * op::b3_polarized(n, &bjet(u, p), &bjet(v, p), &bjet(w, p))
            })?;
            Ok(a + b)
        };
        let [a, b, c, d] = [&fs[0], &fs[1], &fs[2], &fs[3]];
        let vals = [q(a, b, c, d)?, q(b, a, c, d)?, q(c, b, a, d)?, q(d, b, c, a)?];
        let residual = max_of(vals.iter().map(|v| rel(*v, vals[0])));
        return Ok(Outcome::new(residual, json!({ "pairings": vals })).with_fields(&[a, b, c, d]));
    }
    let [t, u, v, w] = [&fs[0], &fs[1], &fs[2], &fs[3]];
    let a3 = |t: &ScalarField, u: &ScalarField, v: &ScalarField, w: &ScalarField| -> Result<f64> {
        let a = r
            .ball
            .integrate(|x| t.value_at(x) * op::l43(&u.jet_at(x), &v.jet_at(x), &w.jet_at(x)))?;
        let b = r.sphere.integrate(|x| {
            let p = &x[..dim];
            t.value_at(p) * op::b33(&bjet(u, p), &bjet(v, p), &bjet(w, p))
        })?;
        Ok(a + b)
    };
    let a2 = |t: &ScalarField, u: &ScalarField, v: &ScalarField| -> Result<f64> {
        let a = r.ball.integrate(|x| t.value_at(x) * op::l42(&u.jet_at(x), &v.jet_at(x)))?;
        let b = r.sphere.integrate(|x| {
            let p = &x[..dim];
            t.value_at(p) * op::b32(&bjet(u, p), &bjet(v, p))
        })?;
        Ok(a + b)
    };
    let a1 = |t: &ScalarField, u: &ScalarField| -> Result<f64> {
        let a = r.ball.integrate(|x| t.value_at(x) * op::l41(&u.jet_at(x)))?;
        let b = r.sphere.integrate(|x| {
            let p = &x[..dim];
            t.value_at(p) * op::b31(&bjet(u, p))
        })?;
        Ok(a + b)
    };
    let s3 = a3(t, u, v, w)?;
    let s2 = a2(t, u, v)?;
    let s1 = a1(t, u)?;
    let w3 = fun::pairing3(t, u, v, w, r)?;
    let w2 = fun::pairing2(t, u, v, r)?;
    let w1 = fun::pairing1(t, u, r)?;
    let sw3 = a3(u, t, v, w)?;
    let sw2 = a2(u, t, v)?;
    let sw1 = a1(u, t)?;
    let residual = max_of([
        rel(s3, w3),
        rel(s2, w2),
        rel(s1, w1),
        rel(s3, sw3),
        rel(s2, sw2),
        rel(s1, sw1),
    ]);
    Ok(Outcome::new(
        residual,
        json!({
            "strong": [s3, s2, s1],
            "weak": [w3, w2, w1],
            "swapped": [sw3, sw2, sw1],
        }),
    )
    .with_fields(&[t, u, v, w]))
}

// ---------------------------------------------------------------------------
// conformal covariance

fn conformal_covariance(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let dim = cx.dim;
    let nf = n as f64;
    let map = random_map(dim, cx.seed(100), 0.3)?;
    let interior = cx.interior();
    let boundary = cx.boundary();
    if n == 3 {
        let u = cx.generic(0, 3)?;
        let w = pullback_factor(&map, &u)?;
        let mut res: f64 = 0.0;
        for x in &interior {
            let x = &x[..dim];
            let y = map.apply(x);
            let lam = map.conformal_factor(x);
            let lhs = op::critical_sigma2_scaled(&w.jet_at(x));
            let rhs = lam.powi(4) * op::critical_sigma2_scaled(&u.jet_at(&y[..dim]));
            res = res.max(rel(lhs, rhs));
        }
        for p in &boundary {
            let p = &p[..dim];
            let y = map.apply(p);
            let lam = map.conformal_factor(p);
            let lhs = op::critical_h2_scaled(&bjet(&w, p));
            let rhs = lam.powi(3) * op::critical_h2_scaled(&bjet(&u, &y[..dim]));
            res = res.max(rel(lhs, rhs));
        }
        return Ok(Outcome::new(res, json!({ "map": map })).with_fields(&[&u]));
    }
    let fs = fields_vec(cx, 3, 3)?;
    let pb: Vec<ScalarField> = fs.iter().map(|f| pullback_factor(&map, f)).collect::<Result<_>>()?;
    let li = (3.0 * nf + 7.0) / 4.0;
    let lb = 3.0 * (nf + 1.0) / 4.0;
    let mut res_l: f64 = 0.0;
    for x in &interior {
        let x = &x[..dim];
        let y = map.apply(x);
        let y = &y[..dim];
        let lam = map.conformal_factor(x);
        let lhs = op::l4_polarized(n, &pb[0].jet_at(x), &pb[1].jet_at(x), &pb[2].jet_at(x));
        let rhs = lam.powf(li) * op::l4_polarized(n, &fs[0].jet_at(y), &fs[1].jet_at(y), &fs[2].jet_at(y));
        res_l = res_l.max(rel(lhs, rhs));
        let lhs = op::l4_cubic(n, &pb[0].jet_at(x));
        let rhs = lam.powf(li) * op::l4_cubic(n, &fs[0].jet_at(y));
        res_l = res_l.max(rel(lhs, rhs));
    }
    let mut res_b: f64 = 0.0;
    for p in &boundary {
        let p = &p[..dim];
        let y = map.apply(p);
        let y = &y[..dim];
        let lam = map.conformal_factor(p);
        let lhs = op::b3_polarized(n, &bjet(&pb[0], p), &bjet(&pb[1], p), &bjet(&pb[2], p));
        let rhs = lam.powf(lb) * op::b3_polarized(n, &bjet(&fs[0], y), &bjet(&fs[1], y), &bjet(&fs[2], y));
        res_b = res_b.max(rel(lhs, rhs));
    }
    Ok(Outcome::new(
        res_l.max(res_b),
        json!({ "map": map, "interior_residual": res_l, "boundary_residual": res_b }),
    )
    .with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

// ---------------------------------------------------------------------------
// pointwise forms of L4

/// L4(u,u,u) = ½δ(|∇u|²du) − (n−3)/16 [uΔ|∇u|² − δ(Δ(u²)du)], evaluated
/// from third derivatives.
fn l4_divergence_form(n: usize, j3: &Jet3) -> f64 {
    let j = &j3.jet;
    let d = j.dim;
    let u = j.value;
    let g2 = j.grad_norm2();
    let lap = j.laplacian();
    let glap = j3.grad_laplacian();
    let hg = j.hess_tensor().apply(&j.grad);
    let a = 2.0 * dot(d, &hg, &j.grad) + g2 * lap;
    let lap_grad2 = 2.0 * j.hess_dot(j) + 2.0 * dot(d, &j.grad, &glap);
    let mut grad_lap_u2 = ZERO_VEC;
    for k in 0..d {
        grad_lap_u2[k] = 2.0 * lap * j.grad[k] + 2.0 * u * glap[k] + 4.0 * hg[k];
    }
    let lap_u2 = 2.0 * u * lap + 2.0 * g2;
    let div = dot(d, &grad_lap_u2, &j.grad) + lap_u2 * lap;
    0.5 * a - (n as f64 - 3.0) / 16.0 * (u * lap_grad2 - div)
}

fn divergence_form(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 4)?;
    let mut res: f64 = 0.0;
    for f in &fs {
        for x in cx.interior() {
            let j3 = f.jet3_at(&x[..dim])?;
            res = res.max(rel(l4_divergence_form(n, &j3), op::l4_cubic(n, &j3.jet)));
        }
    }
    Ok(Outcome::new(res, json!({ "points": cx.cfg.samples })).with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

fn commutator_l4(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 3)?;
    let mut res: f64 = 0.0;
    for f in &fs {
        for x in cx.interior() {
            let x = &x[..dim];
            let j = f.jet_at(x);
            for i in 0..dim {
                res = res.max(rel(op::commutator_l4(n, &j, i), op::commutator_l4_polarized(n, &j, i, x)));
            }
        }
    }
    Ok(Outcome::new(res, json!({ "points": cx.cfg.samples })).with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

fn commutator_b3(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 3)?;
    let mut res: f64 = 0.0;
    for f in &fs {
        for p in cx.boundary() {
            let p = &p[..dim];
            let j = f.jet_at(p);
            let b = j.boundary(p);
            for i in 0..dim {
                res = res.max(rel(op::commutator_b3(n, &b, i), op::commutator_b3_polarized(n, &j, i, p)));
            }
        }
    }
    Ok(Outcome::new(res, json!({ "points": cx.cfg.samples })).with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

/// (T1 − (n/2)σ1 g)(a, b).
fn t1_shifted(n: usize, j: &Jet2, a: &Vector, b: &Vector) -> f64 {
    op::t1(n, j).eval(a, b) - n as f64 / 2.0 * op::sigma1(n, j) * dot(j.dim, a, b)
}

fn grad_r2(dim: usize, x: &[f64]) -> Vector {
    let mut g = ZERO_VEC;
    for k in 0..dim {
        g[k] = 2.0 * x[k];
    }
    g
}

// ---------------------------------------------------------------------------
// integral identities

fn integral_nablar(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let nf = n as f64;
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 3)?;
    let mut res: f64 = 0.0;
    let mut pairs = Vec::new();
    for f in &fs {
        let v = cx.rules.ball.integrate_multi(2, |x, o| {
            let j = f.jet_at(x);
            o[0] = j.value * t1_shifted(n, &j, &j.grad, &grad_r2(dim, x));
            o[1] = j.value * j.value * j.grad_norm2();
        })?;
        let b = cx.rules.sphere.integrate(|x| {
            let b = bjet(f, &x[..dim]);
            let u2 = b.value * b.value;
            (nf - 4.0) / 6.0 * u2 * b.tgrad_norm2() - nf / 6.0 * u2 * b.normal * b.normal
        })?;
        let lhs = -4.0 / (3.0 * (nf - 3.0)) * v[0];
        let rhs = -nf * (nf - 5.0) / 6.0 * v[1] + b;
        res = res.max(rel(lhs, rhs));
        pairs.push([lhs, rhs]);
    }
    Ok(Outcome::new(res, json!({ "lhs_rhs": pairs })).with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

fn critical_integral_nablar(cx: &Ctx) -> Result<Outcome> {
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 3)?;
    let mut res: f64 = 0.0;
    let mut pairs = Vec::new();
    for f in &fs {
        let v = cx.rules.ball.integrate_multi(2, |x, o| {
            let j = f.jet_at(x);
            o[0] = t1_shifted(3, &j, &j.grad, &grad_r2(dim, x));
            o[1] = op::sigma1(3, &j);
        })?;
        let b = cx.rules.sphere.integrate(|x| op::t1_eta_eta(3, &bjet(f, &x[..dim])))?;
        // δ(T1(∇r²)) = ⟨δT1,∇r²⟩ + 2 tr T1 with tr T1 = 3σ1, so the σ1 term
        // enters with a plus sign; u = x¹ gives 0 on the left and 0 here.
        let (lhs, rhs) = (v[0], 3.0 * v[1] - b);
        res = res.max(rel(lhs, rhs));
        pairs.push([lhs, rhs, -3.0 * v[1] - b]);
        // pointwise: (T1 − 3/2 σ1)(∇u,∇r²) = ∇²u(∇u,∇r²) + ½⟨∇u,∇r²⟩Δu
        for x in cx.interior() {
            let x = &x[..dim];
            let j = f.jet_at(x);
            let gr = grad_r2(dim, x);
            let a = t1_shifted(3, &j, &j.grad, &gr);
            let b = j.hess_eval(&j.grad, &gr) + 0.5 * dot(dim, &j.grad, &gr) * j.laplacian();
            res = res.max(rel(a, b));
        }
    }
    Ok(Outcome::new(res, json!({ "lhs_rhs_minus_sign_variant": pairs })).with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

/// δ(uT1)_k computed literally from third derivatives.
fn div_u_t1_literal(n: usize, j3: &Jet3) -> Vector {
    let j = &j3.jet;
    let d = j.dim;
    let nf = n as f64;
    let c = weight(n);
    let u = j.value;
    let t = op::t1(n, j);
    let glap = j3.grad_laplacian();
    let lap = j.laplacian();
    let mut out = ZERO_VEC;
    for k in 0..d {
        // ∂_k(σ1 + ½|∇u|²) with σ1 + ½|∇u|² = −cuΔu − (n−1)/4 |∇u|²
        let ds = -c * j.grad[k] * lap
            - c * u * glap[k]
            - (nf - 1.0) / 2.0 * (0..d).map(|b| j.grad[b] * j.hess[b][k]).sum::<f64>();
        let mut div_t = ds;
        for a in 0..d {
            div_t += c * j.grad[a] * j.hess[a][k] + c * u * j3.third[a][a][k]
                - (nf + 1.0) / 4.0 * (j.hess[a][a] * j.grad[k] + j.grad[a] * j.hess[a][k]);
        }
        let t_grad_k: f64 = (0..d).map(|a| j.grad[a] * t.m[a][k]).sum();
        out[k] = t_grad_k + u * div_t;
    }
    out
}

/// −(n+5)/(n−3) T1(∇u) + 4n/(n−3) σ1 ∇u.
fn div_u_t1_closed(n: usize, j: &Jet2) -> Vector {
    let nf = n as f64;
    let tg = op::t1(n, j).apply(&j.grad);
    let s = op::sigma1(n, j);
    let mut out = ZERO_VEC;
    for k in 0..j.dim {
        out[k] = -(nf + 5.0) / (nf - 3.0) * tg[k] + 4.0 * nf / (nf - 3.0) * s * j.grad[k];
    }
    out
}

fn div_t1(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 3)?;
    let mut res_point: f64 = 0.0;
    let mut res_int: f64 = 0.0;
    for f in &fs {
        for x in cx.interior() {
            let j3 = f.jet3_at(&x[..dim])?;
            let a = div_u_t1_literal(n, &j3);
            let b = div_u_t1_closed(n, &j3.jet);
            for k in 0..dim {
                res_point = res_point.max(rel(a[k], b[k]));
            }
        }
        let lhs = cx.rules.ball.integrate_multi(dim, |x, o| {
            let v = div_u_t1_closed(n, &f.jet_at(x));
            o.copy_from_slice(&v[..dim]);
        })?;
        let rhs = cx.rules.sphere.integrate_multi(dim, |x, o| {
            let p = &x[..dim];
            let j = f.jet_at(p);
            let eta = j.boundary(p).point;
            let t = op::t1(n, &j).apply(&eta);
            for k in 0..dim {
                o[k] = j.value * t[k];
            }
        })?;
        for k in 0..dim {
            res_int = res_int.max(rel(lhs[k], rhs[k]));
        }
    }
    Ok(Outcome::new(
        res_point.max(res_int),
        json!({ "pointwise_residual": res_point, "integrated_residual": res_int }),
    )
    .with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

fn int_t1_eta(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let nf = n as f64;
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 3)?;
    let mut res: f64 = 0.0;
    let mut pairs = Vec::new();
    for f in &fs {
        let v = cx.rules.sphere.integrate_multi(2, |x, o| {
            let b = bjet(f, &x[..dim]);
            let u = b.value;
            o[0] = u * u * op::t1_eta_eta(n, &b);
            o[1] = (nf - 4.0) / 2.0 * u * u * b.tgrad_norm2() - nf / 2.0 * u * u * b.normal * b.normal
                - nf * (nf - 3.0) / 4.0 * u * u * u * b.normal;
        })?;
        res = res.max(rel(v[0], v[1]));
        pairs.push(v);
    }
    Ok(Outcome::new(res, json!({ "lhs_rhs": pairs })).with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

fn four_laplacian_density(n: usize, j: &Jet2) -> f64 {
    let g2 = j.grad_norm2();
    2.0 * op::t1(n, j).eval(&j.grad, &j.grad) - 3.0 * g2 * op::sigma1(n, j) + (n as f64 - 3.0) / 2.0 * g2 * g2
}

fn four_laplacian(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let c = weight(n);
    let dim = cx.dim;
    let fs = fields_vec(cx, 3, 3)?;
    let mut res: f64 = 0.0;
    let mut pairs = Vec::new();
    for f in &fs {
        // c δ(u|∇u|²du) = c(|∇u|⁴ + 2u∇²u(∇u,∇u) + u|∇u|²Δu)
        for x in cx.interior() {
            let j = f.jet_at(&x[..dim]);
            let g2 = j.grad_norm2();
            let lit = c * (g2 * g2 + 2.0 * j.value * j.hess_eval(&j.grad, &j.grad) + j.value * g2 * j.laplacian());
            res = res.max(rel(lit, four_laplacian_density(n, &j)));
        }
        let lhs = cx.rules.ball.integrate(|x| four_laplacian_density(n, &f.jet_at(x)))?;
        let rhs = cx.rules.sphere.integrate(|x| {
            let b = bjet(f, &x[..dim]);
            let u = b.value;
            let g = b.tgrad_norm2();
            c * (u * op::h(n, &b) * g - c * u * u * g + u * b.normal.powi(3))
        })?;
        res = res.max(rel(lhs, rhs));
        pairs.push([lhs, rhs]);
    }
    Ok(Outcome::new(res, json!({ "lhs_rhs": pairs })).with_fields(&[&fs[0], &fs[1], &fs[2]]))
}

fn energy_equivalence(cx: &Ctx) -> Result<Outcome> {
    let count = cx.count(10) as u64;
    let mut res: f64 = 0.0;
    let mut worst = Value::Null;
    let mut sigma2_gap: f64 = 0.0;
    let mut fields = Vec::new();
    for k in 0..count {
        let f = cx.random(k, 4, 0.2, 1.0)?;
        let rep = fun::e2_report(&f, &cx.rules, &E2Formula::EXPANDED)?;
        let scale = rep.values.values().fold(1.0f64, |m, v| m.max(v.abs()));
        let r = rep.discrepancy / scale;
        if r >= res {
            res = r;
            worst = serde_json::to_value(&rep)?;
        }
        if let Ok(g) = fun::e2_report(&f, &cx.rules, &[E2Formula::Sigma2]) {
            sigma2_gap = sigma2_gap.max(rel(g.primary(), rep.primary()));
        }
        fields.push(f);
    }
    let refs: Vec<&ScalarField> = fields.iter().collect();
    Ok(Outcome::new(
        res,
        json!({ "fields": count, "worst_report": worst, "geometric_formula_gap": sigma2_gap }),
    )
    .with_fields(&refs))
}

// ---------------------------------------------------------------------------
// critical functional

/// F2 in the metric e^{2v}dx² evaluated through the transformed operators.
fn f2_after(u: &ScalarField, v: &ScalarField, rules: &Rules) -> Result<f64> {
    let dim = u.dim();
    let a = rules.ball.integrate(|x| {
        let (ju, jv) = (u.jet_at(x), v.jet_at(x));
        let l3 = |a: &Jet2, b: &Jet2, c: &Jet2| op::l43(a, b, c);
        let dens = l3(&ju, &ju, &ju) / 24.0
            + (op::l42(&ju, &ju) + l3(&ju, &ju, &jv)) / 6.0
            + 0.5 * (op::l41(&ju) + op::l42(&ju, &jv) + 0.5 * l3(&ju, &jv, &jv))
            + (op::l41(&jv) + 0.5 * op::l42(&jv, &jv) + l3(&jv, &jv, &jv) / 6.0);
        ju.value * dens
    })?;
    let b = rules.sphere.integrate(|x| {
        let p = &x[..dim];
        let (bu, bv) = (bjet(u, p), bjet(v, p));
        let dens = op::b33(&bu, &bu, &bu) / 24.0
            + (op::b32(&bu, &bu) + op::b33(&bu, &bu, &bv)) / 6.0
            + 0.5 * (op::b31(&bu) + op::b32(&bu, &bv) + 0.5 * op::b33(&bu, &bv, &bv))
            + op::critical_h2_scaled(&bv);
        bu.value * dens
    })?;
    Ok(a + b)
}

fn cocycle_f2(cx: &Ctx) -> Result<Outcome> {
    let mut res: f64 = 0.0;
    let mut rows = Vec::new();
    let mut fields = Vec::new();
    for k in 0..2u64 {
        let u = cx.random(2 * k, 3, 0.3, 0.0)?;
        let v = cx.random(2 * k + 1, 3, 0.3, 0.0)?;
        let lhs = fun::f2(&u.plus(&v), &cx.rules)?;
        let fv = fun::f2(&v, &cx.rules)?;
        let fa = f2_after(&u, &v, &cx.rules)?;
        res = res.max(rel(lhs, fv + fa));
        rows.push([lhs, fv, fa]);
        fields.push(u);
        fields.push(v);
    }
    let refs: Vec<&ScalarField> = fields.iter().collect();
    Ok(Outcome::new(res, json!({ "f2_sum_v_after": rows })).with_fields(&refs))
}

fn mobius_invariance_f2(cx: &Ctx) -> Result<Outcome> {
    let map = random_map(cx.dim, cx.seed(100), 0.3)?;
    let u = cx.generic(0, 3)?;
    let pb = pullback_factor(&map, &u)?;
    // log λ and e^{3u} are not polynomial; resolve them well past the default
    let fine = Rules::new(3, cx.rules.degree().max(48))?;
    let r = &fine;
    let (f_u, f_pb) = (fun::f2(&u, r)?, fun::f2(&pb, r)?);
    let (g_u, g_pb) = (fun::g2(&u, r)?, fun::g2(&pb, r)?);
    let flat = ScalarField::CriticalFlatLog(map.clone());
    let f_flat = fun::f2(&flat, r)?;
    let g_flat = fun::g2(&flat, r)?;
    let res = max_of([rel(f_u, f_pb), rel(g_u, g_pb), f_flat.abs(), g_flat.abs()]);
    Ok(Outcome::new(
        res,
        json!({ "map": map, "f2": [f_u, f_pb], "g2": [g_u, g_pb], "f2_flat_log": f_flat, "g2_flat_log": g_flat }),
    )
    .with_fields(&[&u]))
}

// ---------------------------------------------------------------------------
// Escobar's inequality

fn escobar_inequality(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let sharp = (n as f64 - 1.0) / 2.0 * cx.omega();
    let count = cx.count(20) as u64;
    let mut margins = Vec::new();
    let mut fields = Vec::new();
    for k in 0..count {
        let f = cx.random(k, 3, 0.15, 1.0)?;
        margins.push(fun::e1_normalized(&f, &cx.rules)? - sharp);
        fields.push(f);
    }
    let min = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let refs: Vec<&ScalarField> = fields.iter().collect();
    Ok(Outcome::new((-min).max(0.0), json!({ "min_margin": min, "margins": margins })).with_fields(&refs))
}

/// Rules resolved along the axis through the bubble's concentration point.
pub fn bubble_rules(n: usize, xi: &[f64]) -> Result<Rules> {
    let sphere = SphereRuleSpec::aligned(8, 200, xi);
    let ball = BallRuleSpec {
        sphere: sphere.clone(),
        radial_degree: Some(200),
    };
    Rules::from_rules(QuadratureRule::ball_with(n, &ball)?, QuadratureRule::sphere_with(n, &sphere)?)
}

fn escobar_equality_bubbles(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let sharp = (n as f64 - 1.0) / 2.0 * cx.omega();
    let map = random_map(cx.dim, cx.seed(7), 0.0)?;
    let mut xi = vec![0.0; cx.dim];
    xi[0] = 1.0;
    let xi: Vec<f64> = map.apply(&xi)[..cx.dim].to_vec();
    let rules = bubble_rules(n, &xi)?;
    let mut res: f64 = 0.0;
    let mut rows = Vec::new();
    let mut fields = Vec::new();
    for (k, r) in [0.0, 0.2, 0.4, 0.6, 0.8].into_iter().enumerate() {
        let f = ScalarField::bubble(cx.dim, 0.5 + 0.25 * k as f64, r, &xi)?;
        let e = fun::e1_normalized(&f, &rules)?;
        res = res.max((e - sharp).abs());
        rows.push(json!({ "r": r, "e1_normalized": e }));
        fields.push(f);
    }
    let refs: Vec<&ScalarField> = fields.iter().collect();
    Ok(Outcome::new(res, json!({ "sharp": sharp, "bubbles": rows })).with_fields(&refs))
}

/// 1 + a x^i + b x^i x^j + c((x^i)² − (x^j)²) + d((x^i)³ − 3x^i(x^j)²), harmonic.
fn harmonic_field(dim: usize, seed: u64) -> Result<ScalarField> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let i = rng.random_range(0..dim);
    let j = (i + 1 + rng.random_range(0..dim - 1)) % dim;
    let mut c = [0.0; 4];
    for v in c.iter_mut() {
        *v = rng.random_range(-0.2..=0.2);
    }
    let mono = |pi: u32, pj: u32, coef: f64| {
        let mut e = vec![0u32; dim];
        e[i] = pi;
        e[j] += pj;
        Term { exponents: e, coef }
    };
    let terms = [
        mono(0, 0, 1.0),
        mono(1, 0, c[0]),
        mono(1, 1, c[1]),
        mono(2, 0, c[2]),
        mono(0, 2, -c[2]),
        mono(3, 0, c[3]),
        mono(1, 2, -3.0 * c[3]),
    ];
    Ok(ScalarField::Polynomial(Polynomial::from_terms(dim, &terms)?))
}

fn escobar_minimizer_argument(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let dim = cx.dim;
    let k = 2.0 / (n as f64 - 1.0);
    let quantity_on = |f: &ScalarField, rules: &Rules| -> Result<[f64; 3]> {
        let v = rules.ball.integrate_multi(3, |x, o| {
            let j = f.jet_at(x);
            let r2: f64 = x.iter().map(|t| t * t).sum();
            let g2 = j.grad_norm2();
            o[0] = (1.0 - r2) * g2;
            o[1] = g2;
            o[2] = j.value * dot(dim, &j.grad, &grad_r2(dim, x));
        })?;
        Ok([v[0] + k * v[1], v[0], v[2]])
    };
    let quantity = |f: &ScalarField| quantity_on(f, &cx.rules);
    let q_const = quantity(&ScalarField::constant(dim, 1.0))?[0];
    let mut res = q_const.abs();
    let mut min_q = f64::INFINITY;
    let mut fields = Vec::new();
    for s in 0..4u64 {
        fields.push(harmonic_field(dim, cx.seed(s))?);
    }
    let mut xi = vec![0.0; dim];
    xi[dim - 1] = 1.0;
    fields.push(ScalarField::bubble(dim, 1.0, 0.3, &xi)?);
    let along_xi = bubble_rules(n, &xi)?;
    let mut rows = Vec::new();
    for f in &fields {
        let [q, lhs, rhs] = match f {
            ScalarField::EscobarBubble { .. } => quantity_on(f, &along_xi)?,
            _ => quantity(f)?,
        };
        // harmonic u: ∫(1 − r²)|∇u|² = ∫u⟨∇u,∇r²⟩
        res = res.max(rel(lhs, rhs));
        min_q = min_q.min(q);
        rows.push([q, lhs, rhs]);
    }
    if !(min_q > 0.0) {
        res = res.max(min_q.abs().max(f64::MIN_POSITIVE) + 1.0);
    }
    let refs: Vec<&ScalarField> = fields.iter().collect();
    Ok(Outcome::new(
        res,
        json!({ "constant": q_const, "min_nonconstant": min_q, "quantity_lhs_rhs": rows }),
    )
    .with_fields(&refs))
}

// ---------------------------------------------------------------------------
// non-sharp bounds

fn cone_fields(cx: &Ctx, count: usize) -> Result<Vec<(f64, ScalarField)>> {
    (0..count)
        .map(|k| {
            // amplitudes spread geometrically over [0.01, 0.3]
            let t = if count > 1 { k as f64 / (count - 1) as f64 } else { 0.5 };
            let amp = 0.01 * 30f64.powf(t);
            let f = perturbed_constant(cx.n, cx.seed(k as u64), 3, amp)?;
            Ok((amp, fun::normalize(&f, &cx.rules)?))
        })
        .collect()
}

fn nonsharp_positivity(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let nf = n as f64;
    let c = weight(n);
    let dim = cx.dim;
    let mut worst = f64::NEG_INFINITY;
    let mut min_e = f64::INFINITY;
    let mut rows = Vec::new();
    let fields = cone_fields(cx, cx.count(10))?;
    for (amp, f) in &fields {
        let e = fun::e2(f, &cx.rules)?;
        let a = cx.rules.ball.integrate(|x| 0.5 * f.jet_at(x).grad_norm2().powi(2))?;
        let b = cx.rules.sphere.integrate(|x| {
            let b = bjet(f, &x[..dim]);
            let u2 = b.value * b.value;
            c * c * (u2 * b.tgrad_norm2() + (nf + 1.0) * (nf - 3.0) / 16.0 * u2 * u2)
        })?;
        let bound = a + b;
        worst = worst.max(bound - e);
        min_e = min_e.min(e);
        rows.push(json!({ "amplitude": amp, "e2": e, "lower_bound": bound }));
    }
    let res = if min_e > 0.0 { worst.max(0.0) } else { min_e.abs() + worst.abs() };
    let refs: Vec<&ScalarField> = fields.iter().map(|(_, f)| f).collect();
    Ok(Outcome::new(res, json!({ "min_e2": min_e, "samples": rows })).with_fields(&refs))
}

fn critical_lower_bound(cx: &Ctx) -> Result<Outcome> {
    let dim = cx.dim;
    let omega = cx.omega();
    let mut worst = f64::NEG_INFINITY;
    let mut rows = Vec::new();
    let fields = cone_fields(cx, cx.count(10))?;
    for (amp, f) in &fields {
        let g = fun::g2(f, &cx.rules)?;
        let m = cx.rules.sphere.integrate_multi(2, |x, o| {
            let b = bjet(f, &x[..dim]);
            o[0] = b.tgrad_norm2();
            o[1] = b.value;
        })?;
        let mean = m[1] / omega;
        let vol = cx.rules.sphere.integrate(|x| (3.0 * (f.value_at(x) - mean)).exp())?;
        let bound = -omega / 12.0 + 0.25 * m[0] - omega / 3.0 * (vol / omega).ln();
        worst = worst.max(bound - g);
        rows.push(json!({ "amplitude": amp, "g2": g, "lower_bound": bound }));
    }
    let refs: Vec<&ScalarField> = fields.iter().map(|(_, f)| f).collect();
    Ok(Outcome::new(worst.max(0.0), json!({ "samples": rows })).with_fields(&refs))
}

// ---------------------------------------------------------------------------
// Euler equation

fn euler_at_constant(cx: &Ctx) -> Result<Outcome> {
    let one = ScalarField::constant(cx.dim, 1.0);
    let r = fun::euler_residual(&one, &cx.rules, cx.cfg.samples)?;
    Ok(Outcome::new(r.interior.max(r.boundary), serde_json::to_value(r)?).with_fields(&[&one]))
}

fn euler_at_flat_factor(cx: &Ctx) -> Result<Outcome> {
    let map = random_map(cx.dim, cx.seed(100), 0.3)?;
    let flat = ScalarField::FlatFactor(map.clone());
    let bal = balance(&flat, &BalanceOptions::new(1e-10, 100))?;
    let balanced = fun::normalize(&pullback_factor(&bal.map, &flat)?, &cx.rules)?;
    let raw = fun::euler_residual(&flat, &cx.rules, cx.cfg.samples)?;
    let r = fun::euler_residual(&balanced, &cx.rules, cx.cfg.samples)?;
    let res = max_of([r.interior, r.boundary, raw.interior, raw.boundary]);
    Ok(Outcome::new(
        res,
        json!({ "map": map, "balancing_map": bal.map, "moment_norm": bal.moment_norm,
                "balanced": r, "unbalanced": raw }),
    )
    .with_fields(&[&balanced]))
}

// ---------------------------------------------------------------------------
// spectral estimates

/// Σ_i {∫u x^i [L4,x^i] + ∮u x^i [B3,x^i]} by the closed forms and by
/// polarization.
fn commutator_sum(n: usize, u: &ScalarField, rules: &Rules) -> Result<(f64, f64)> {
    let dim = u.dim();
    let a = rules.ball.integrate_multi(2, |x, o| {
        let j = u.jet_at(x);
        o[0] = 0.0;
        o[1] = 0.0;
        for i in 0..dim {
            o[0] += j.value * x[i] * op::commutator_l4(n, &j, i);
            o[1] += j.value * x[i] * op::commutator_l4_polarized(n, &j, i, x);
        }
    })?;
    let b = rules.sphere.integrate_multi(2, |x, o| {
        let p = &x[..dim];
        let j = u.jet_at(p);
        let bj = j.boundary(p);
        o[0] = 0.0;
        o[1] = 0.0;
        for i in 0..dim {
            o[0] += j.value * p[i] * op::commutator_b3(n, &bj, i);
            o[1] += j.value * p[i] * op::commutator_b3_polarized(n, &j, i, p);
        }
    })?;
    Ok((a[0] + b[0], a[1] + b[1]))
}

fn balanced_spectral(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let one = ScalarField::constant(cx.dim, 1.0);
    let (closed, polar) = commutator_sum(n, &one, &cx.rules)?;
    let rhs = 4.0 / (n as f64 - 3.0) * fun::e2(&one, &cx.rules)?;
    let mut res = max_of([rel(closed, rhs), rel(polar, rhs), rel(closed, polar)]);
    // the two routes also agree away from constants
    let u = cx.generic(0, 3)?;
    let (c2, p2) = commutator_sum(n, &u, &cx.rules)?;
    res = res.max(rel(c2, p2));
    Ok(Outcome::new(
        res,
        json!({ "closed_form": closed, "polarized": polar, "rhs": rhs, "generic_routes": [c2, p2] }),
    )
    .with_fields(&[&one, &u]))
}

/// Σ_i {½∫x^i L43(x^i,u,u) + ∫x^i L42(x^i,u) + ½∮x^i B33(x^i,u,u) + ∮x^i B32(x^i,u) + ∮x^i B31(x^i)}
/// through the operators and through the coordinate formulas.
fn critical_commutator_sum(u: &ScalarField, rules: &Rules) -> Result<(f64, f64)> {
    let dim = u.dim();
    let a = rules.ball.integrate_multi(2, |x, o| {
        let j = u.jet_at(x);
        o[0] = 0.0;
        o[1] = 0.0;
        for i in 0..dim {
            let xi = Jet2::coordinate(dim, i, x);
            o[0] += x[i] * (0.5 * op::l43(&xi, &j, &j) + op::l42(&xi, &j));
            let lemma = 2.0 * j.grad[i] * j.laplacian() + 4.0 * j.hess_eval(&j.grad, &xi.grad);
            o[1] += x[i] * 0.5 * lemma;
        }
    })?;
    let b = rules.sphere.integrate_multi(2, |x, o| {
        let p = &x[..dim];
        let bu = bjet(u, p);
        o[0] = 0.0;
        o[1] = 0.0;
        for i in 0..dim {
            let bx = BoundaryJet::coordinate(dim, i, p);
            o[0] += p[i] * (0.5 * op::b33(&bx, &bu, &bu) + op::b32(&bx, &bu) + op::b31(&bx));
            let b33 = -p[i] * (bu.tgrad_norm2() + 3.0 * bu.normal * bu.normal) - 2.0 * bx.tgrad_dot(&bu) * bu.normal;
            let b32 = -p[i] * bu.tlap - bu.tgrad_dot(&bx);
            o[1] += p[i] * (0.5 * b33 + b32 + 3.0 * p[i]);
        }
    })?;
    Ok((a[0] + b[0], a[1] + b[1]))
}

fn critical_balanced_spectral(cx: &Ctx) -> Result<Outcome> {
    let zero = ScalarField::constant(cx.dim, 0.0);
    let (ops, lemma) = critical_commutator_sum(&zero, &cx.rules)?;
    let rhs = 3.0 * cx.omega();
    let mut res = max_of([rel(ops, rhs), rel(lemma, rhs), rel(ops, lemma)]);
    let u = cx.generic(0, 3)?;
    let (o2, l2) = critical_commutator_sum(&u, &cx.rules)?;
    res = res.max(rel(o2, l2));
    Ok(Outcome::new(
        res,
        json!({ "operators": ops, "coordinate_formulas": lemma, "rhs": rhs, "generic_routes": [o2, l2] }),
    )
    .with_fields(&[&zero, &u]))
}

/// Right-hand side of the final stability estimate (nonnegative for n ≤ 5).
pub fn final_stability_rhs(u: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.n();
    let nf = n as f64;
    let dim = u.dim();
    if n == 3 {
        let a = rules.ball.integrate(|x| op::sigma1(3, &u.jet_at(x)))?;
        let b = rules.sphere.integrate(|x| {
            let b = bjet(u, &x[..dim]);
            op::t1_eta_eta(3, &b) + 0.5 * b.tgrad_norm2() + 1.5 * b.normal * b.normal
        })?;
        // −3∫σ1 (not +3∫σ1) so that the defect identity holds; this equals 3∫|∇u|²
        return Ok(-3.0 * a + b);
    }
    let a = rules.ball.integrate(|x| {
        let j = u.jet_at(x);
        let g2 = j.grad_norm2();
        2.0 * nf / (3.0 * (nf - 3.0)) * g2 * g2 + 8.0 / (3.0 * (nf - 3.0)) * op::t1(n, &j).eval(&j.grad, &j.grad)
            - nf * (nf - 5.0) / 6.0 * j.value * j.value * g2
    })?;
    let b = rules.sphere.integrate(|x| {
        let b = bjet(u, &x[..dim]);
        let g = b.tgrad_norm2();
        2.0 / 3.0 * b.value * op::h(n, &b) * g + (nf - 3.0) / 3.0 * b.value * b.value * g
    })?;
    Ok(a + b)
}

/// Spectral defect: commutator sum minus its lower bound (4/(n−3)E2 or 3ω₃).
pub fn spectral_defect(u: &ScalarField, rules: &Rules) -> Result<f64> {
    let n = rules.n();
    if n == 3 {
        Ok(critical_commutator_sum(u, rules)?.0 - 3.0 * rules.omega())
    } else {
        Ok(commutator_sum(n, u, rules)?.0 - 4.0 / (n as f64 - 3.0) * fun::e2(u, rules)?)
    }
}

fn final_stability_at_constant(cx: &Ctx) -> Result<Outcome> {
    let consts: [f64; 2] = if cx.n == 3 { [0.0, 0.7] } else { [1.0, 2.0] };
    let mut res: f64 = 0.0;
    let mut rows = Vec::new();
    for c in consts {
        let f = ScalarField::constant(cx.dim, c);
        let rhs = final_stability_rhs(&f, &cx.rules)?;
        let defect = spectral_defect(&f, &cx.rules)?;
        res = res.max(rhs.abs()).max(defect.abs());
        rows.push(json!({ "constant": c, "rhs": rhs, "spectral_defect": defect }));
    }
    // away from constants the defect equals minus the right-hand side
    let u = cx.generic(0, 3)?;
    let rhs = final_stability_rhs(&u, &cx.rules)?;
    let defect = spectral_defect(&u, &cx.rules)?;
    res = res.max(rel(defect, -rhs));
    Ok(Outcome::new(
        res,
        json!({ "constants": rows, "generic": { "rhs": rhs, "spectral_defect": defect } }),
    )
    .with_fields(&[&u]))
}

fn sharp_constant_consistency(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let c = weight(n);
    let omega = cx.omega();
    let one = ScalarField::constant(cx.dim, 1.0);
    let rep = fun::e2_report(&one, &cx.rules, &[E2Formula::Direct, E2Formula::Sigma2])?;
    let s2 = rep.value(E2Formula::Sigma2).unwrap() / (c * c * c);
    let conj = fun::sharp_constant_conjecture(n, 2, omega)?;
    let k1 = fun::sharp_constant_conjecture(n, 1, omega)?;
    let escobar = (n as f64 - 1.0) / 2.0 * omega;
    // E1 = (n−1)/2 · S1, as E2 = c³ S2
    let res = max_of([rel(s2, conj), rel(rep.primary() / (c * c * c), conj), rel((n as f64 - 1.0) / 2.0 * k1, escobar)]);
    Ok(Outcome::new(
        res,
        json!({ "s2_flat": s2, "conjectured": conj, "k1": k1, "escobar": escobar }),
    ))
}

// ---------------------------------------------------------------------------
// evidence

fn conjecture1_evidence(cx: &Ctx) -> Result<Outcome> {
    let n = cx.n;
    let c = weight(n);
    let target = c * c * c * fun::sharp_constant_conjecture(n, 2, cx.omega())?;
    let fields = cone_fields(cx, cx.count(100))?;
    let mut rows = Vec::new();
    let mut best = (f64::INFINITY, 0.0);
    for (amp, f) in &fields {
        let m = fun::e2(f, &cx.rules)? - target;
        if m < best.0 {
            best = (m, *amp);
        }
        rows.push([*amp, m]);
    }
    Ok(Outcome::new(
        best.0,
        json!({ "target": target, "min_margin": best.0, "amplitude_at_min": best.1, "amplitude_margin": rows }),
    ))
}

fn conjecture3_evidence(cx: &Ctx) -> Result<Outcome> {
    let fields = cone_fields(cx, cx.count(100))?;
    let mut rows = Vec::new();
    let mut best = (f64::INFINITY, 0.0);
    for (amp, f) in &fields {
        let g = fun::g2(f, &cx.rules)?;
        if g < best.0 {
            best = (g, *amp);
        }
        rows.push([*amp, g]);
    }
    Ok(Outcome::new(
        best.0,
        json!({ "min_g2": best.0, "amplitude_at_min": best.1, "amplitude_g2": rows }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard() {
        assert!(wildcard_match("commutator*", "commutator_L4"));
        assert!(!wildcard_match("commutator*", "critical_commutator"));
        assert!(wildcard_match("*nablar", "critical_integral_nablar"));
        assert!(wildcard_match("divT1", "divT1"));
    }

    #[test]
    fn select_rules() {
        assert_eq!(select("commutator*").unwrap(), vec!["commutator_L4", "commutator_B3"]);
        assert!(matches!(select("unknown_name"), Err(Error::Registry(_))));
        assert_eq!(select("all").unwrap().len(), registry().len());
    }
}
