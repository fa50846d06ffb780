//! Pointwise curvature operators on the flat ball.
//!
//! Noncritical (n = 4, 5) operators act on the conformal factor u of
//! g_u = u^{8/(n−3)} dx²; critical (n = 3) operators act on the log-factor u of
//! e^{2u} dx². All functions take the boundary dimension n explicitly and
//! work on [`Jet2`]/[`BoundaryJet`] data only.

use crate::error::{Error, Result};
use crate::jet::{dot, BoundaryJet, Jet2, Jet3, SymmetricTensor, Vector, ZERO_VEC};

/// c = (n − 3)/4, the weight that recurs throughout.
pub fn weight(n: usize) -> f64 {
    (n as f64 - 3.0) / 4.0
}

fn check_noncritical(n: usize) {
    debug_assert!(n == 4 || n == 5, "noncritical operator called with n = {n}");
}

pub fn sigma1(n: usize, j: &Jet2) -> f64 {
    if n == 3 {
        return -j.laplacian() - j.grad_norm2();
    }
    let nf = n as f64;
    -weight(n) * j.value * j.laplacian() - (nf + 1.0) / 4.0 * j.grad_norm2()
}

pub fn t1(n: usize, j: &Jet2) -> SymmetricTensor {
    let d = j.dim;
    if n == 3 {
        let mut t = j.hess_tensor();
        t.add_outer(-1.0, &j.grad, &j.grad);
        t.add_scaled_identity(-(j.laplacian() + 0.5 * j.grad_norm2()));
        return t;
    }
    let nf = n as f64;
    let c = weight(n);
    let mut t = SymmetricTensor::zeros(d);
    for a in 0..d {
        for b in 0..d {
            t.m[a][b] = c * j.value * j.hess[a][b] - (nf + 1.0) / 4.0 * j.grad[a] * j.grad[b];
        }
    }
    t.add_scaled_identity(sigma1(n, j) + 0.5 * j.grad_norm2());
    t
}

pub fn h(n: usize, b: &BoundaryJet) -> f64 {
    if n == 3 {
        return b.normal + 1.0;
    }
    b.normal + weight(n) * b.value
}

/// T_1(u)(η, η) in terms of boundary data.
pub fn t1_eta_eta(n: usize, b: &BoundaryJet) -> f64 {
    let g2 = b.tgrad_norm2();
    let eu = b.normal;
    if n == 3 {
        return -b.tlap - 3.0 * eu - 0.5 * g2 - 1.5 * eu * eu;
    }
    let nf = n as f64;
    let c = weight(n);
    -c * b.value * b.tlap - (nf - 1.0) / 4.0 * g2 - nf / 2.0 * eu * eu - nf * c * b.value * eu
}

/// L_4(u,u,u) from the 2-jet.
pub fn l4_cubic(n: usize, j: &Jet2) -> f64 {
    check_noncritical(n);
    let nf = n as f64;
    let c = weight(n);
    let lap = j.laplacian();
    let g2 = j.grad_norm2();
    0.5 * c * j.value * (lap * lap - j.hess_dot(j))
        + (nf - 1.0) / 4.0 * g2 * lap
        + (nf + 1.0) / 4.0 * j.hess_eval(&j.grad, &j.grad)
}

/// B_3(u,u,u) = H T_1(η,η) + (n/3) H³.
pub fn b3_cubic(n: usize, b: &BoundaryJet) -> f64 {
    check_noncritical(n);
    let hh = h(n, b);
    hh * t1_eta_eta(n, b) + n as f64 / 3.0 * hh * hh * hh
}

/// B_3(u,u,u) through the expansion in (ηu + cu).
pub fn b3_expanded(n: usize, b: &BoundaryJet) -> f64 {
    check_noncritical(n);
    let nf = n as f64;
    let c = weight(n);
    let hh = b.normal + c * b.value;
    -nf / 6.0 * hh * hh * hh
        + hh * (-c * b.value * b.tlap - (nf - 1.0) / 4.0 * b.tgrad_norm2()
            + nf * c * c / 2.0 * b.value * b.value)
}

/// Fully symmetric trilinear form of a cubic Q via inclusion–exclusion.
/// Arguments are sorted first so every permutation yields identical bits.
pub fn polarize3<J, Q>(q: Q, a: &J, b: &J, c: &J, cmp: fn(&J, &J) -> std::cmp::Ordering) -> f64
where
    J: Copy + std::ops::Add<Output = J>,
    Q: Fn(&J) -> f64,
{
    let mut v = [*a, *b, *c];
    v.sort_by(cmp);
    let [a, b, c] = v;
    (q(&(a + b + c)) - q(&(a + b)) - q(&(a + c)) - q(&(b + c)) + q(&a) + q(&b) + q(&c)) / 6.0
}

pub fn l4_polarized(n: usize, a: &Jet2, b: &Jet2, c: &Jet2) -> f64 {
    polarize3(|j| l4_cubic(n, j), a, b, c, Jet2::total_cmp)
}

pub fn b3_polarized(n: usize, a: &BoundaryJet, b: &BoundaryJet, c: &BoundaryJet) -> f64 {
    polarize3(|j| b3_cubic(n, j), a, b, c, BoundaryJet::total_cmp)
}

fn unit(dim: usize, i: usize) -> Vector {
    let mut e = ZERO_VEC;
    e[i] = 1.0;
    let _ = dim;
    e
}

/// [L_4, x^i](u,u,u) in closed form.
pub fn commutator_l4(n: usize, j: &Jet2, i: usize) -> f64 {
    check_noncritical(n);
    let e = unit(j.dim, i);
    let t = t1(n, j);
    8.0 / (3.0 * (n as f64 - 3.0))
        * (t.eval(&j.grad, &e) - n as f64 / 2.0 * sigma1(n, j) * j.grad[i])
}

/// L_4(x^i u, u, u) − x^i L_4(u,u,u) through polarization.
pub fn commutator_l4_polarized(n: usize, j: &Jet2, i: usize, point: &[f64]) -> f64 {
    let x = Jet2::coordinate(j.dim, i, point);
    let xu = x.mul_jet(j);
    l4_polarized(n, &xu, j, j) - point[i] * l4_cubic(n, j)
}

/// [B_3, x^i](u,u,u) in closed form.
pub fn commutator_b3(n: usize, b: &BoundaryJet, i: usize) -> f64 {
    check_noncritical(n);
    let nf = n as f64;
    let c = weight(n);
    let x = b.point[i];
    let hh = h(n, b);
    // ∇̄x^i = e_i − x^i p, so ⟨∇̄u, ∇̄x^i⟩ = (∇̄u)_i.
    let gx = b.tgrad[i];
    x * b.value / 3.0 * (t1_eta_eta(n, b) + nf * c * b.value * hh) - (nf - 2.0) / 3.0 * b.value * hh * gx
}

/// B_3(x^i u, u, u) − x^i B_3(u,u,u) through polarization. Needs the ambient
/// jet to form the product x^i u.
pub fn commutator_b3_polarized(n: usize, j: &Jet2, i: usize, point: &[f64]) -> f64 {
    let x = Jet2::coordinate(j.dim, i, point);
    let xu = x.mul_jet(j).boundary(point);
    let ub = j.boundary(point);
    b3_polarized(n, &xu, &ub, &ub) - point[i] * b3_cubic(n, &ub)
}

/// Schouten tensor of g_u = u^{8/(n−3)} dx² in Euclidean components.
pub fn schouten(n: usize, j: &Jet2) -> Result<SymmetricTensor> {
    check_noncritical(n);
    let u = j.value;
    if !(u > 0.0) {
        return Err(Error::Domain(format!("conformal factor must be positive, got {u}")));
    }
    let k = n as f64 - 3.0;
    let mut p = SymmetricTensor::zeros(j.dim);
    for a in 0..j.dim {
        for b in 0..j.dim {
            p.m[a][b] = -4.0 / k / u * j.hess[a][b]
                + 4.0 * (n as f64 + 1.0) / (k * k) / (u * u) * j.grad[a] * j.grad[b];
        }
    }
    p.add_scaled_identity(-8.0 / (k * k) / (u * u) * j.grad_norm2());
    Ok(p)
}

/// σ_2 of g_u, i.e. σ_2 of u^{−8/(n−3)} P.
pub fn sigma2_geometric(n: usize, j: &Jet2) -> Result<f64> {
    let p = schouten(n, j)?;
    let s = j.value.powf(-8.0 / (n as f64 - 3.0));
    Ok(p.scaled(s).sigma2())
}

/// H_2 of g_u on the boundary, from the ambient jet at a unit vector `point`.
pub fn h2_geometric(n: usize, j: &Jet2, point: &[f64]) -> Result<f64> {
    let p = schouten(n, j)?;
    let u = j.value;
    let nf = n as f64;
    let k = nf - 3.0;
    let b = j.boundary(point);
    let eta = b.point;
    let tan_trace = u.powf(-8.0 / k) * (p.trace() - p.eval(&eta, &eta));
    let hg = h(n, &b) / (weight(n) * u.powf((nf + 1.0) / k));
    Ok(hg * tan_trace + nf / 3.0 * hg * hg * hg)
}

// ---------------------------------------------------------------------------
// Critical dimension (n = 3)

/// L_{4,3}(u,v,w) = δ(⟨∇u,∇v⟩dw + ⟨∇u,∇w⟩dv + ⟨∇v,∇w⟩du); the divergence
/// only needs second derivatives.
pub fn l43(u: &Jet2, v: &Jet2, w: &Jet2) -> f64 {
    fn term(a: &Jet2, b: &Jet2, c: &Jet2) -> f64 {
        let d = a.dim;
        a.grad_dot(b) * c.laplacian()
            + dot(d, &a.hess_tensor().apply(&b.grad), &c.grad)
            + dot(d, &b.hess_tensor().apply(&a.grad), &c.grad)
    }
    term(u, v, w) + term(u, w, v) + term(v, w, u)
}

/// L_{4,2}(u,v) on flat space; the third-derivative terms cancel, leaving
/// ΔuΔv − ⟨∇²u, ∇²v⟩.
pub fn l42(u: &Jet2, v: &Jet2) -> f64 {
    u.laplacian() * v.laplacian() - u.hess_dot(v)
}

/// L_{4,2}(u,v) = −½(Δ⟨∇u,∇v⟩ − δ(Δu dv + Δv du)) evaluated literally from 3-jets.
pub fn l42_from_third(u: &Jet3, v: &Jet3) -> f64 {
    let d = u.dim();
    let (ju, jv) = (&u.jet, &v.jet);
    let mut lap_inner = 0.0;
    for i in 0..d {
        for k in 0..d {
            lap_inner += u.third[i][k][k] * jv.grad[i]
                + 2.0 * ju.hess[i][k] * jv.hess[i][k]
                + ju.grad[i] * v.third[i][k][k];
        }
    }
    let glu = u.grad_laplacian();
    let glv = v.grad_laplacian();
    let div = dot(d, &glu, &jv.grad)
        + dot(d, &glv, &ju.grad)
        + 2.0 * ju.laplacian() * jv.laplacian();
    -0.5 * (lap_inner - div)
}

/// L_{4,1} = −δ(T_1(∇u)) with the background Newton tensor, which vanishes
/// for dx².
pub fn l41(_u: &Jet2) -> f64 {
    0.0
}

pub fn b33(u: &BoundaryJet, v: &BoundaryJet, w: &BoundaryJet) -> f64 {
    -(u.grad_dot(v) * w.normal + u.grad_dot(w) * v.normal + v.grad_dot(w) * u.normal)
}

pub fn b32(u: &BoundaryJet, v: &BoundaryJet) -> f64 {
    -(u.tlap * v.normal + v.tlap * u.normal) - u.tgrad_dot(v) - 3.0 * u.normal * v.normal
}

/// B_{3,1}(u) = T_1(η,η)ηu − HΔ̄u with T_1 = 0 and H = 1 on the flat ball.
pub fn b31(u: &BoundaryJet) -> f64 {
    -u.tlap
}

pub fn critical_l4j(j: usize, args: &[Jet2]) -> f64 {
    match j {
        1 => l41(&args[0]),
        2 => l42(&args[0], &args[1]),
        3 => l43(&args[0], &args[1], &args[2]),
        _ => panic!("L_4,j needs j in 1..=3"),
    }
}

pub fn critical_b3j(j: usize, args: &[BoundaryJet]) -> f64 {
    match j {
        1 => b31(&args[0]),
        2 => b32(&args[0], &args[1]),
        3 => b33(&args[0], &args[1], &args[2]),
        _ => panic!("B_3,j needs j in 1..=3"),
    }
}

/// e^{4u} σ_2(e^{2u}dx²) = L_{4,1}(u) + ½L_{4,2}(u,u) + ⅙L_{4,3}(u,u,u).
pub fn critical_sigma2_scaled(u: &Jet2) -> f64 {
    l41(u) + 0.5 * l42(u, u) + l43(u, u, u) / 6.0
}

/// e^{3u} H_2(e^{2u}dx²) = 1 + B_{3,1}(u) + ½B_{3,2}(u,u) + ⅙B_{3,3}(u,u,u).
pub fn critical_h2_scaled(u: &BoundaryJet) -> f64 {
    1.0 + b31(u) + 0.5 * b32(u, u) + b33(u, u, u) / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1_jet(dim: usize, p: &[f64]) -> Jet2 {
        Jet2::coordinate(dim, 0, p)
    }

    #[test]
    fn spec_examples_noncritical() {
        let p = [0.3, 0.0, 0.0, 0.0, 0.0];
        let j = x1_jet(5, &p);
        assert_eq!(sigma1(4, &j), -1.25);
        let t = t1(4, &j);
        assert!((t.m[0][0] + 2.0).abs() < 1e-15);
        assert!((t.m[1][1] + 0.75).abs() < 1e-15);
        assert!((commutator_l4(4, &j, 0) - 4.0 / 3.0).abs() < 1e-14);

        let mut e1 = [0.0; 5];
        e1[0] = 1.0;
        let b = Jet2::coordinate(5, 0, &e1).boundary(&e1);
        assert_eq!(h(4, &b), 1.25);
        assert!((t1_eta_eta(4, &b) + 2.0).abs() < 1e-15);
        assert!((b3_cubic(4, &b) - 5.0 / 48.0).abs() < 1e-15);

        let one = Jet2::constant(5, 1.0).boundary(&e1);
        assert!((b3_cubic(4, &one) - 1.0 / 48.0).abs() < 1e-16);
        assert!((commutator_b3(4, &one, 0) - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn l4_of_r_squared() {
        let p = [0.1, 0.2, 0.3, -0.1, 0.4];
        let j = Jet2::radius_squared(5, &p);
        let r2: f64 = p.iter().map(|x| x * x).sum();
        assert!((l4_cubic(4, &j) - 50.0 * r2).abs() < 1e-13);
    }

    #[test]
    fn critical_examples() {
        let p = [0.2, 0.1, 0.0, 0.3];
        assert_eq!(sigma1(3, &x1_jet(4, &p)), -1.0);
        let e = [0.0, 0.0, 1.0, 0.0];
        let x = BoundaryJet::coordinate(4, 2, &e);
        assert_eq!(b31(&x), 3.0);
    }

    #[test]
    fn commutator_routes_agree_on_simple_fields() {
        let p = [0.3, 0.0, 0.0, 0.0, 0.0];
        let j = x1_jet(5, &p);
        assert!((commutator_l4_polarized(4, &j, 0, &p) - 4.0 / 3.0).abs() < 1e-13);

        let mut e1 = [0.0; 5];
        e1[0] = 1.0;
        let one = Jet2::constant(5, 1.0);
        assert!((commutator_b3_polarized(4, &one, 0, &e1) - 1.0 / 12.0).abs() < 1e-14);
    }
}
