use elastic_pwm::converter::{find_fixed_points, ConverterModel, Stability};

/// Sign changes of `stage_map(x) - x` on a dense grid, refined by bisection.
fn oracle(m: &ConverterModel<f64>) -> Vec<f64> {
    let g = |x: f64| m.stage_map(x) - x;
    let n = 1_000_000;
    let mut roots = Vec::new();
    for i in 0..n {
        let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
        if g(a) == 0.0 {
            roots.push(a);
        } else if g(a) * g(b) < 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if g(lo) * g(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    roots
}

#[test]
fn default_stage_matches_dense_oracle() {
    let m = ConverterModel::<f64>::compensated();
    let found = find_fixed_points(&m).unwrap();
    let want = oracle(&m);
    assert_eq!(found.points.len(), want.len());
    for (p, w) in found.points.iter().zip(&want) {
        assert!((p.x - w).abs() < 1e-6, "{} vs {}", p.x, w);
    }
    let kinds: Vec<_> = found.points.iter().map(|p| p.stability).collect();
    assert_eq!(kinds, [Stability::Stable, Stability::Unstable, Stability::Stable]);
}

#[test]
fn shifted_cubics_match_oracle() {
    for c0 in [5.0, 10.0, 20.0] {
        let m = ConverterModel::from_cubic([107.27, -53.25, 52.92, c0], 98.0);
        let found = find_fixed_points(&m).unwrap();
        let want = oracle(&m);
        assert_eq!(found.points.len(), want.len(), "c0 = {c0}");
        for (p, w) in found.points.iter().zip(&want) {
            assert!((p.x - w).abs() < 1e-6);
            let slope = m.stage_map_slope(p.x);
            assert_eq!(p.stability == Stability::Stable, slope < 1.0);
        }
    }
}
