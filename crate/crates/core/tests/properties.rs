use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;

use koebe_core::domain::{component_area, component_diam, kappa, validate_domain, ComplementComponent, RawDomain};
use koebe_core::fixtures::rectangle;
use koebe_core::gap::gr_pair;
use koebe_core::geom::{cross_ratio, ExtPoint, Mobius, PlanePoint};
use koebe_core::grid::{build_quotient_grid, curve_length, ExtendedMetric, Window};
use koebe_core::koebe::roundness;

fn p(x: f64, y: f64) -> PlanePoint {
    PlanePoint::new(x, y)
}

fn similarity() -> impl Strategy<Value = Mobius> {
    (0.1f64..10.0, 0.0f64..std::f64::consts::TAU, -20.0f64..20.0, -20.0f64..20.0)
        .prop_map(|(r, t, x, y)| Mobius::affine(Complex64::from_polar(r, t), Complex64::new(x, y)).unwrap())
}

fn pair() -> impl Strategy<Value = (ComplementComponent, ComplementComponent)> {
    (0.2f64..2.0, 0.2f64..2.0, 0.5f64..4.0, 0.1f64..3.0).prop_map(|(ra, rb, gap, h)| {
        let a = ComplementComponent::disk("a", p(ra + rb + gap, 0.3), ra);
        let b = ComplementComponent::polygon("b", rectangle(PlanePoint::ORIGIN, rb, h));
        (a, b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gap_ratio_is_similarity_invariant((a, b) in pair(), t in similarity()) {
        let s = validate_domain(RawDomain { components: vec![a.clone(), b.clone()] }).unwrap();
        let m = s.map_mobius(&t).unwrap();
        let g0 = gr_pair(&a, &b).unwrap();
        let g1 = gr_pair(m.get("a").unwrap(), m.get("b").unwrap()).unwrap();
        prop_assert!(g0 >= 1.0);
        prop_assert!((g0 - g1).abs() <= 1e-9 * g0, "{} vs {}", g0, g1);
    }

    #[test]
    fn kappa_is_scale_free(w in 0.1f64..5.0, h in 0.1f64..5.0, t in similarity()) {
        let c = ComplementComponent::polygon("r", rectangle(p(1.0, -2.0), w, h));
        let s = validate_domain(RawDomain { components: vec![c.clone()] }).unwrap();
        let m = s.map_mobius(&t).unwrap();
        let k0 = kappa(&c).unwrap();
        let k1 = kappa(m.get("r").unwrap()).unwrap();
        assert_relative_eq!(k0, w * h / (w * w + h * h), max_relative = 1e-12);
        assert_relative_eq!(k0, k1, max_relative = 1e-9);
        prop_assert!(component_area(&c).unwrap() <= component_diam(&c).unwrap().powi(2));
    }

    #[test]
    fn mobius_preserves_cross_ratio(t in similarity(), inv in proptest::bool::ANY) {
        let t = if inv { t.compose(&Mobius::inversion_about(p(0.3, -7.0))) } else { t };
        let z = [p(0.0, 0.0), p(1.0, 0.5), p(-2.0, 1.0), p(0.5, 3.0)];
        let w = z.map(|q| t.apply_finite(q));
        let (c0, c1) = (cross_ratio(z), cross_ratio(w));
        prop_assert!((c0 - c1).norm() <= 1e-8 * c0.norm().max(1.0));
        let back = t.inverse().apply(t.apply(ExtPoint::Finite(z[1]))).finite().unwrap();
        prop_assert!(back.dist(z[1]) <= 1e-9);
    }

    #[test]
    fn roundness_is_similarity_invariant(a in 1.0f64..3.0, t in similarity()) {
        let pts: Vec<PlanePoint> = koebe_core::fixtures::ellipse(a, 1.0, 128);
        let img: Vec<PlanePoint> = pts.iter().map(|&q| t.apply_finite(q)).collect();
        let r0 = roundness(&pts).unwrap().value;
        let r1 = roundness(&img).unwrap().value;
        prop_assert!((r0 - r1).abs() <= 1e-9);
    }

    #[test]
    fn component_is_charged_once(visits in 1usize..6, c in 0.1f64..10.0) {
        let s = validate_domain(RawDomain {
            components: vec![ComplementComponent::disk("d", PlanePoint::ORIGIN, 0.3)],
        })
        .unwrap();
        let g = build_quotient_grid(&s, Window::square(PlanePoint::ORIGIN, 1.0), 16).unwrap();
        let d = g.component_node(0);
        let (nbr, _) = g.neighbors(d)[0];
        let mut walk = vec![d];
        for _ in 0..visits {
            walk.push(nbr as usize);
            walk.push(d);
        }
        let mut m = ExtendedMetric::zeros(&g);
        m.weights[d] = c;
        prop_assert_eq!(curve_length(&g, &m, &walk).unwrap(), c);
    }
}
