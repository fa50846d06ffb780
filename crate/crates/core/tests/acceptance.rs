//! Acceptance criteria AC1–AC9, one PASS/FAIL/REPORT line each.
//!
//! Runs as a plain binary (`harness = false`). Pass `ac3 ac7` to run a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ballconf::fields::{pullback_factor, random_smooth, FieldParams, FieldSpec};
use ballconf::functionals::{self as fun, default_degree, Rules};
use ballconf::mobius::{balance, random_map, BalanceOptions, DensityKind};
use ballconf::optimize::{minimize_e2, minimize_g2, OptimizationConfig};
use ballconf::poly::Term;
use ballconf::quadrature::sphere_volume;
use ballconf::verify::{run_check, run_suite_with, CheckConfig, CheckResult};
use ballconf::{Result, ScalarField};

enum Verdict {
    Pass(String),
    Fail(String),
    Report(String),
}

fn verdict(ok: bool, msg: String) -> Verdict {
    if ok {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn check(name: &str, n: usize, cfg: &CheckConfig) -> Result<CheckResult> {
    run_check(name, n, cfg)
}

fn ac1() -> Result<Verdict> {
    let r4 = Rules::new(4, default_degree(4))?;
    let r5 = Rules::new(5, default_degree(5))?;
    let e4 = fun::e2(&ScalarField::constant(5, 1.0), &r4)?;
    let e5 = fun::e2(&ScalarField::constant(6, 1.0), &r5)?;
    // 𝓔₂ = c³ 𝓢₂ with c = (n − 3)/4
    let s2 = e4 * 64.0;
    let rhs = fun::sharp_constant_conjecture(4, 2, sphere_volume(4))?;
    let errs = [
        rel(e4, PI * PI / 18.0),
        rel(e5, 5.0 * PI.powi(3) / 24.0),
        rel(s2, 32.0 * PI * PI / 9.0),
        rel(rhs, 32.0 * PI * PI / 9.0),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok(verdict(
        worst <= 1e-10,
        format!("E2(1) n=4 {e4:.16e}, n=5 {e5:.16e}, S2(dx²) on B⁵ {s2:.16e}; worst relative error {worst:.2e}"),
    ))
}

fn ac2() -> Result<Verdict> {
    let cfg = CheckConfig {
        fields: Some(50),
        tol: Some(1e-8),
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for n in [4, 5] {
        let r = check("energy_equivalence", n, &cfg)?;
        worst = worst.max(r.residual);
        ok &= r.passed == Some(true);
    }
    Ok(verdict(ok && worst <= 1e-8, format!("50 fields per n ∈ {{4,5}}, max formula discrepancy {worst:.2e}")))
}

const IDENTITY_CHECKS: &str = "fsa_symmetry,conformal_covariance_L4B3,cocycle_F2,commutator_L4,commutator_B3,\
integral_nablar,critical_integral_nablar,divT1,int_T1eta,fourLaplacian,divergence_form_equivalence";

fn ac3() -> Result<Verdict> {
    let cfg = CheckConfig {
        tol: Some(1e-8),
        ..Default::default()
    };
    let rep = run_suite_with(IDENTITY_CHECKS, &[3, 4, 5], &cfg, |_| {})?;
    let failed: Vec<String> = rep
        .results
        .iter()
        .filter(|r| r.passed != Some(true) || r.residual > 1e-8)
        .map(|r| format!("{} n={} ({:.2e})", r.name, r.n, r.residual))
        .collect();
    let worst = rep.results.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(verdict(
        failed.is_empty(),
        format!(
            "{} identity checks over n ∈ {{3,4,5}}, worst residual {worst:.2e}{}",
            rep.results.len(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    ))
}

fn ac4() -> Result<Verdict> {
    let cfg = CheckConfig::default();
    let mut ok = true;
    let mut eq_worst: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    for n in [4, 5] {
        let eq = check("escobar_equality_bubbles", n, &cfg)?;
        ok &= eq.passed == Some(true) && eq.residual <= 1e-7;
        eq_worst = eq_worst.max(eq.residual);
        let ineq = check("escobar_inequality", n, &cfg)?;
        let m = ineq.detail["min_margin"].as_f64().unwrap_or(f64::NAN);
        let count = ineq.detail["margins"].as_array().map_or(0, |a| a.len());
        ok &= m > 0.0 && count >= 20;
        min_margin = min_margin.min(m);
    }
    Ok(verdict(
        ok,
        format!("bubbles r ≤ 0.8: max |E1 − (n−1)/2·ω_n| {eq_worst:.2e}; 20 random fields per n, min margin {min_margin:.3e}"),
    ))
}

fn ac5() -> Result<Verdict> {
    let mut ok = true;
    let mut worst_moment: f64 = 0.0;
    let mut worst_iters = 0;
    for n in [4, 5] {
        let dim = n + 1;
        let mut xi = vec![0.0; dim];
        xi[0] = 0.6;
        xi[dim - 1] = 0.8;
        for r in [0.0, 0.2, 0.4, 0.6, 0.8] {
            let f = ScalarField::bubble(dim, 1.0, r, &xi)?;
            // the bubble's own density u^{2n/(n−1)}: a Möbius image of the uniform measure
            let mut opts = BalanceOptions::new(1e-8, 50);
            opts.density = Some(DensityKind::Escobar);
            let b = balance(&f, &opts)?;
            ok &= b.moment_norm < 1e-8 && b.iterations <= 50;
            worst_moment = worst_moment.max(b.moment_norm);
            worst_iters = worst_iters.max(b.iterations);
        }
    }
    // 𝓔₂ invariance under pullback (n = 4)
    let rules4 = Rules::new(4, 32)?;
    let u = random_smooth(5, 5, 3, 0.1, 1.0)?;
    let phi = random_map(5, 17, 0.3)?;
    let e = fun::e2(&u, &rules4)?;
    let e_pull = fun::e2(&pullback_factor(&phi, &u)?, &rules4)?;
    let e_gap = (e - e_pull).abs();
    // 𝓖₂ invariance under pullback (n = 3)
    let rules3 = Rules::new(3, 48)?;
    let w = random_smooth(4, 6, 3, 0.2, 0.0)?;
    let psi = random_map(4, 18, 0.3)?;
    let g = fun::g2(&w, &rules3)?;
    let g_pull = fun::g2(&pullback_factor(&psi, &w)?, &rules3)?;
    let g_gap = (g - g_pull).abs();
    ok &= e_gap <= 1e-8 && g_gap <= 1e-8;
    Ok(verdict(
        ok,
        format!(
            "bubble balancing: max moment {worst_moment:.2e} in ≤ {worst_iters} iterations; \
             |ΔE2| under pullback {e_gap:.2e}, |ΔG2| {g_gap:.2e}"
        ),
    ))
}

fn ac6() -> Result<Verdict> {
    let cfg = CheckConfig::default();
    let mut ok = true;
    let mut at_const: f64 = 0.0;
    let mut at_flat: f64 = 0.0;
    for n in [4, 5] {
        let c = check("euler_at_constant", n, &cfg)?;
        ok &= c.residual <= 1e-10;
        at_const = at_const.max(c.residual);
        let f = check("euler_at_flat_factor", n, &cfg)?;
        ok &= f.residual <= 1e-6;
        at_flat = at_flat.max(f.residual);
    }
    Ok(verdict(ok, format!("Euler residual at constants {at_const:.2e}, at balanced flat factors {at_flat:.2e}")))
}

/// The first 20 monomials of degree 1, 2, 3 minus their boundary mean
/// (odd monomials already have mean zero).
fn admissible_basis(n: usize) -> Vec<ScalarField> {
    let dim = n + 1;
    let mut out = Vec::new();
    for i in 0..dim {
        let mut e = vec![0u32; dim];
        e[i] = 1;
        out.push(vec![Term { exponents: e, coef: 1.0 }]);
    }
    for i in 0..dim {
        for j in i..dim {
            let mut e = vec![0u32; dim];
            e[i] += 1;
            e[j] += 1;
            let mut terms = vec![Term { exponents: e, coef: 1.0 }];
            if i == j {
                // ∮x_i² = ω/(n+1)
                terms.push(Term { exponents: vec![0; dim], coef: -1.0 / dim as f64 });
            }
            out.push(terms);
        }
    }
    for i in 0..dim {
        for j in i..dim {
            for k in j..dim {
                let mut e = vec![0u32; dim];
                e[i] += 1;
                e[j] += 1;
                e[k] += 1;
                out.push(vec![Term { exponents: e, coef: 1.0 }]);
            }
        }
    }
    out.truncate(20);
    out.into_iter()
        .map(|terms| {
            FieldSpec { params: FieldParams::Polynomial { terms }, n }
                .build()
                .expect("valid terms")
        })
        .collect()
}

fn ac7() -> Result<Verdict> {
    let mut ok = true;
    let mut min_defect = f64::INFINITY;
    let mut along_x: f64 = 0.0;
    for n in [3, 4, 5] {
        let rules = Rules::new(n, default_degree(n))?;
        let u = ScalarField::constant(n + 1, if n == 3 { 0.0 } else { 1.0 });
        for (k, v) in admissible_basis(n).iter().enumerate() {
            let d = if n == 3 {
                fun::second_variation_g2(&u, v, &rules)?
            } else {
                fun::second_variation_e2(&u, v, &rules)?
            };
            ok &= d >= -1e-8;
            min_defect = min_defect.min(d);
            if k <= n {
                ok &= d.abs() <= 1e-8;
                along_x = along_x.max(d.abs());
            }
        }
    }
    let cfg = CheckConfig::default();
    let mut stab: f64 = 0.0;
    for n in [3, 4, 5] {
        let r = check("final_stability_at_constant", n, &cfg)?;
        ok &= r.passed == Some(true) && r.residual <= 1e-10;
        stab = stab.max(r.residual);
    }
    Ok(verdict(
        ok,
        format!(
            "second variation at constants: min defect {min_defect:.3e} over 20 directions per n, \
             max |defect| along x^i {along_x:.2e}; final stability estimate at constants {stab:.2e}"
        ),
    ))
}

fn ac8() -> Result<Verdict> {
    let start = Instant::now();
    let target = PI * PI / 18.0;
    let mut ok = true;
    let mut worst_gap: f64 = 0.0;
    let mut worst_flat: f64 = 0.0;
    let mut worst_iters = 0;
    for seed in 0..10 {
        let cfg = OptimizationConfig {
            seed,
            init_amplitude: 0.05,
            max_iter: 500,
            ..Default::default()
        };
        let (_, tr) = minimize_e2(&cfg, 4)?;
        let gap = (tr.final_energy - target).abs();
        ok &= gap <= 1e-4 && tr.final_flatness < 1e-3;
        worst_gap = worst_gap.max(gap);
        worst_flat = worst_flat.max(tr.final_flatness);
        worst_iters = worst_iters.max(tr.iterations.len() - 1);
    }
    let mut g2_worst: f64 = 0.0;
    let mut g2_flat: f64 = 0.0;
    for seed in 0..10 {
        let cfg = OptimizationConfig {
            seed,
            ..Default::default()
        };
        let (_, tr) = minimize_g2(&cfg)?;
        ok &= tr.final_energy.abs() < 1e-4 && tr.final_flatness < 1e-3;
        g2_worst = g2_worst.max(tr.final_energy.abs());
        g2_flat = g2_flat.max(tr.final_flatness);
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    ok &= minutes <= 30.0;
    Ok(verdict(
        ok,
        format!(
            "E2 (n=4, 10 starts): max |E − π²/18| {worst_gap:.2e}, max flatness {worst_flat:.2e}, ≤ {worst_iters} iterations; \
             G2 (10 starts): max |G2| {g2_worst:.2e}, max flatness {g2_flat:.2e}; {minutes:.1} min"
        ),
    ))
}

fn ac9() -> Result<Verdict> {
    let cfg = CheckConfig {
        fields: Some(100),
        ..Default::default()
    };
    let mut parts = Vec::new();
    for (name, ns) in [("conjecture1_evidence", &[4usize, 5][..]), ("conjecture3_evidence", &[3][..])] {
        for &n in ns {
            let r = check(name, n, &cfg)?;
            let amp = r.detail["amplitude_at_min"].as_f64().unwrap_or(f64::NAN);
            parts.push(format!("{name} n={n}: min margin {:.3e} at perturbation amplitude {amp:.3}", r.residual));
        }
    }
    Ok(Verdict::Report(parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Verdict>); 9] = [
        ("AC1", ac1),
        ("AC2", ac2),
        ("AC3", ac3),
        ("AC4", ac4),
        ("AC5", ac5),
        ("AC6", ac6),
        ("AC7", ac7),
        ("AC8", ac8),
        ("AC9", ac9),
    ];
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.to_ascii_lowercase().starts_with("ac"))
        .map(|a| a.to_ascii_uppercase())
        .collect();
    let mut failures = 0;
    for (name, f) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == name) {
            continue;
        }
        let t = Instant::now();
        let line = match f() {
            Ok(Verdict::Pass(m)) => format!("{name} PASS   {m}"),
            Ok(Verdict::Report(m)) => format!("{name} REPORT {m}"),
            Ok(Verdict::Fail(m)) => {
                failures += 1;
                format!("{name} FAIL   {m}")
            }
            Err(e) => {
                failures += 1;
                format!("{name} FAIL   error: {e}")
            }
        };
        println!("{line} [{:.1}s]", t.elapsed().as_secs_f64());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
