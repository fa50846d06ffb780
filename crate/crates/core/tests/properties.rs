use ballconf::cli::to_json;
use ballconf::fields::{random_smooth, FieldSpec};
use ballconf::jet::{Jet2, ZERO_MAT, ZERO_VEC};
use ballconf::mobius::random_map;
use ballconf::operators as op;
use ballconf::quadrature::QuadratureRule;
use proptest::prelude::*;

fn jet_strategy(dim: usize) -> impl Strategy<Value = Jet2> {
    (
        0.5f64..2.0,
        prop::collection::vec(-1.0f64..1.0, dim),
        prop::collection::vec(-1.0f64..1.0, dim * dim),
    )
        .prop_map(move |(value, g, h)| {
            let mut grad = ZERO_VEC;
            let mut hess = ZERO_MAT;
            for a in 0..dim {
                grad[a] = g[a];
                for b in 0..dim {
                    hess[a][b] = 0.5 * (h[a * dim + b] + h[b * dim + a]);
                }
            }
            Jet2 { dim, value, grad, hess }
        })
}

fn ball_point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_map(|v| {
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r >= 0.95 {
            v.iter().map(|x| x * 0.95 / r).collect()
        } else {
            v
        }
    })
}

fn sphere_point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|v| {
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / r).collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn critical_newton_tensor_trace_is_three_sigma1(j in jet_strategy(4)) {
        let tr = op::t1(3, &j).trace();
        prop_assert!((tr - 3.0 * op::sigma1(3, &j)).abs() < 1e-12 * (1.0 + tr.abs()));
    }

    #[test]
    fn polarization_is_bitwise_symmetric(a in jet_strategy(5), b in jet_strategy(5), c in jet_strategy(5)) {
        let v = op::l4_polarized(4, &a, &b, &c);
        prop_assert_eq!(v.to_bits(), op::l4_polarized(4, &c, &a, &b).to_bits());
        prop_assert_eq!(v.to_bits(), op::l4_polarized(4, &b, &c, &a).to_bits());
        prop_assert_eq!(v.to_bits(), op::l4_polarized(4, &b, &a, &c).to_bits());
    }

    #[test]
    fn polarization_restricts_to_the_cubic(j in jet_strategy(6)) {
        let q = op::l4_cubic(5, &j);
        prop_assert!((op::l4_polarized(5, &j, &j, &j) - q).abs() < 1e-11 * (1.0 + q.abs()));
    }

    #[test]
    fn interior_commutator_closed_form(j in jet_strategy(5), p in ball_point(5), i in 0usize..5) {
        let closed = op::commutator_l4(4, &j, i);
        let pol = op::commutator_l4_polarized(4, &j, i, &p);
        prop_assert!((closed - pol).abs() < 1e-10 * (1.0 + closed.abs()), "{} vs {}", closed, pol);
    }

    #[test]
    fn boundary_commutator_closed_form(j in jet_strategy(6), p in sphere_point(6), i in 0usize..6) {
        let closed = op::commutator_b3(5, &j.boundary(&p), i);
        let pol = op::commutator_b3_polarized(5, &j, i, &p);
        prop_assert!((closed - pol).abs() < 1e-10 * (1.0 + closed.abs()), "{} vs {}", closed, pol);
    }

    #[test]
    fn mobius_maps_preserve_ball_and_sphere(seed in 0u64..10_000, x in ball_point(5), s in sphere_point(5)) {
        let phi = random_map(5, seed, 0.8).unwrap();
        let y = phi.apply(&x);
        prop_assert!(y[..5].iter().map(|v| v * v).sum::<f64>() < 1.0 + 1e-12);
        let z = phi.apply(&s);
        prop_assert!((z[..5].iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        let back = phi.inverse().apply(&y[..5]);
        for k in 0..5 {
            prop_assert!((back[k] - x[k]).abs() < 1e-11);
        }
    }

    #[test]
    fn mobius_maps_are_conformal(seed in 0u64..10_000, x in ball_point(4)) {
        let phi = random_map(4, seed, 0.6).unwrap();
        let d = phi.differential(&x);
        let lam = phi.conformal_factor(&x);
        for a in 0..4 {
            for b in 0..4 {
                let g: f64 = (0..4).map(|k| d[k][a] * d[k][b]).sum();
                let want = if a == b { lam * lam } else { 0.0 };
                prop_assert!((g - want).abs() < 1e-10 * lam * lam);
            }
        }
    }

    #[test]
    fn field_specs_round_trip(seed in 0u64..10_000, n in 3usize..6) {
        let f = random_smooth(n + 1, seed, 3, 0.2, 1.0).unwrap();
        let text = serde_json::to_string(&f.to_spec()).unwrap();
        let g = FieldSpec::from_json(&text).unwrap().build().unwrap();
        let x = vec![0.1; n + 1];
        prop_assert_eq!(f.value_at(&x).to_bits(), g.value_at(&x).to_bits());
    }

    #[test]
    fn seventeen_digit_output_round_trips(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let s = to_json(&v).unwrap();
        let back: f64 = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }
}

#[test]
fn quadrature_is_independent_of_thread_count() {
    let rule = QuadratureRule::ball(4, 16).unwrap();
    let f = |x: &[f64]| (x[0] * 3.0).sin() * x[1].exp() + x[2] * x[3] * x[4];
    let pool = |t| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
    let one = pool(1).install(|| rule.integrate(f).unwrap());
    let many = pool(7).install(|| rule.integrate(f).unwrap());
    assert_eq!(one.to_bits(), many.to_bits());
}
