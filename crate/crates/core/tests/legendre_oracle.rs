use bfly_core::legendre::{derivative, evaluate_with_predecessor, DegreeSweep, Parity};
use bfly_core::oracle::legendre_exact;
use bfly_core::quadrature::build_rule;

#[test]
fn sweep_matches_exact_values_at_fixed_point() {
    for parity in [Parity::Even, Parity::Odd] {
        let mut sweep = DegreeSweep::new(0, 0.3, parity).unwrap();
        for j in 0..=25 {
            let l = sweep.degree_at(j);
            let got = sweep.next_value().to_f64();
            let exact = legendre_exact(0, l, 0.3).to_f64();
            assert!(
                (got - exact).abs() <= 1e-12 * exact.abs(),
                "l={l}: {got} vs {exact}"
            );
        }
    }
}

#[test]
fn sweep_matches_exact_values_at_nodes() {
    for m in [0u32, 5, 100] {
        let rule = build_rule(m, 100, Parity::Even).unwrap();
        let picks: Vec<f64> = (0..10).map(|i| rule.nodes[i * 11]).collect();
        for &x in &picks {
            for parity in [Parity::Even, Parity::Odd] {
                let mut sweep = DegreeSweep::new(m, x, parity).unwrap();
                let values: Vec<(u32, f64, f64)> = (0..100)
                    .map(|j| {
                        let l = sweep.degree_at(j);
                        (
                            l,
                            sweep.next_value().to_f64(),
                            legendre_exact(m, l, x).to_f64(),
                        )
                    })
                    .collect();
                let scale = values.iter().map(|v| v.2.abs()).fold(0.0, f64::max);
                for (l, got, exact) in values {
                    assert!(
                        (got - exact).abs() <= 1e-12 * scale,
                        "m={m} l={l} x={x}: {got} vs {exact}"
                    );
                }
            }
        }
    }
}

#[test]
fn derivative_matches_central_differences() {
    let h = 1e-6;
    for m in [0u32, 1, 4, 13] {
        for l in (m..=m + 40).step_by(3) {
            for &x in &[-0.7, -0.2, 0.0, 0.2, 0.7] {
                let (p, q) = evaluate_with_predecessor(m, l, x, None).unwrap();
                let d = derivative(m, l, x, p, q).unwrap();
                let value = |t: f64| evaluate_with_predecessor(m, l, t, None).unwrap().0.to_f64();
                let fd = (value(x + h) - value(x - h)) / (2.0 * h);
                let scale = d.abs().max((l as f64).powi(2) * p.to_f64().abs()).max(1.0);
                assert!(
                    (d - fd).abs() <= 1e-6 * scale,
                    "m={m} l={l} x={x}: {d} vs {fd}"
                );
            }
        }
    }
}
