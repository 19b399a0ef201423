use finsler_core::dsl::parse_expr;
use finsler_core::dynamics::{parallel_transport, Polyline};
use finsler_core::verify::angle;
use finsler_core::{catalog_metric, BerwaldMetric, MetricDefinition, Params, ToleranceProfile};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.1f64..5.0).prop_map(|c| format!("{c}")),
        (0usize..2).prop_map(|i| format!("x{i}")),
        (0usize..2).prop_map(|i| format!("y{i}")),
    ]
}

fn expression() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop::sample::select(vec!["+", "-", "*", "/"]))
                .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
            inner.clone().prop_map(|a| format!("sqrt({a})")),
            inner.clone().prop_map(|a| format!("abs({a})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (inner, 1u32..4).prop_map(|(a, e)| format!("({a})^{e}")),
        ]
    })
}

fn metric(name: &str) -> MetricDefinition {
    catalog_metric(name, &Params::new()).unwrap()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.6f64..0.6, 2)
}

fn direction() -> impl Strategy<Value = Vec<f64>> {
    (0.0f64..std::f64::consts::TAU).prop_map(|t| vec![t.cos(), t.sin()])
}

fn unit(m: &MetricDefinition, x: &[f64], d: &[f64]) -> Vec<f64> {
    let f = m.eval_norm(x, d).unwrap();
    d.iter().map(|v| v / f).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_reparse(src in expression(), x in point(), y in point()) {
        let a = parse_expr(&src, 2).unwrap();
        let b = parse_expr(&a.root.to_string(), 2).unwrap();
        prop_assert!(a.root.same_structure(&b.root));
        match (a.eval(&x, &y), b.eval(&x, &y)) {
            (Ok(u), Ok(v)) => prop_assert!(u == v || (u.is_nan() && v.is_nan())),
            (Err(_), Err(_)) => {}
            (u, v) => prop_assert!(false, "{u:?} vs {v:?}"),
        }
    }

    #[test]
    fn norms_are_positively_homogeneous(
        which in 0usize..6,
        x in point(),
        d in direction(),
        lam in 0.01f64..50.0,
    ) {
        let name = ["euclidean", "minkowski_quartic", "poincare_disk", "round_sphere_chart", "randers_flat", "randers_shear"][which];
        let m = metric(name);
        let f = m.eval_norm(&x, &d).unwrap();
        let scaled: Vec<f64> = d.iter().map(|v| lam * v).collect();
        let g = m.eval_norm(&x, &scaled).unwrap();
        prop_assert!((g - lam * f).abs() <= 1e-12 * lam * f, "{name}: {g} vs {}", lam * f);
        prop_assert!(f > 0.0);
    }

    #[test]
    fn transport_is_linear(
        pts in prop::collection::vec(point(), 2..4),
        w1 in direction(),
        w2 in direction(),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let prof = ToleranceProfile::default();
        let m = BerwaldMetric::certify(&metric("poincare_disk"), &prof, 1).unwrap();
        let curve = Polyline::new(pts).unwrap();
        let t1 = parallel_transport(&m, &curve, &w1, &prof).unwrap().final_vector;
        let t2 = parallel_transport(&m, &curve, &w2, &prof).unwrap().final_vector;
        let w: Vec<f64> = w1.iter().zip(&w2).map(|(p, q)| a * p + b * q).collect();
        prop_assume!(w.iter().any(|v| v.abs() > 1e-3));
        let t = parallel_transport(&m, &curve, &w, &prof).unwrap().final_vector;
        for i in 0..2 {
            prop_assert!((t[i] - (a * t1[i] + b * t2[i])).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn angles_satisfy_metric_axioms(
        which in 0usize..3,
        p in prop::collection::vec(-0.4f64..0.4, 2),
        du in direction(),
        dv in direction(),
        dw in direction(),
    ) {
        let m = metric(["euclidean", "minkowski_quartic", "poincare_disk"][which]);
        let prof = ToleranceProfile::default();
        let (u, v, w) = (unit(&m, &p, &du), unit(&m, &p, &dv), unit(&m, &p, &dw));
        let uv = angle(&m, &p, &u, &v, &prof).unwrap().limit;
        let vu = angle(&m, &p, &v, &u, &prof).unwrap().limit;
        let vw = angle(&m, &p, &v, &w, &prof).unwrap().limit;
        let uw = angle(&m, &p, &u, &w, &prof).unwrap().limit;
        prop_assert!((uv - vu).abs() < 1e-6);
        prop_assert!(uw <= uv + vw + 1e-6);
        prop_assert!(uv >= -1e-9 && uv <= 2.0 + 1e-9);
        prop_assert!(angle(&m, &p, &u, &u, &prof).unwrap().limit.abs() < 1e-9);
    }
}
