use elastic_pwm::converter::ConverterModel;
use elastic_pwm::perceptron::{perceptron_eval, EvalPath, PerceptronConfig};
use elastic_pwm::signals::{Level, PwmSignal, SupplyProfile};
use elastic_pwm::transient::{simulate_vac, slowest_period, trace_metrics, VacConfig};
use elastic_pwm::{vac_equilibrium, WeightVector};
use proptest::prelude::*;

fn weights3() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..=7, 3).prop_filter("one enabled cell", |w| w.iter().any(|&x| x > 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn high_time_over_whole_periods(f in 1e3f64..1e9, duty in 0.0f64..=1.0, ph in 0.0f64..1.0, n in 1u32..50) {
        let s = PwmSignal::with_phase(f, duty, ph / f).unwrap();
        let t0 = 0.37 / f;
        let total = s.high_time(t0, t0 + n as f64 * s.period());
        let want = duty * n as f64 * s.period();
        prop_assert!((total - want).abs() <= 1e-12 * want.max(s.period()));
    }

    #[test]
    fn state_integral_matches_duty(duty in 0.05f64..0.95, n in 1usize..4) {
        // midpoint-rule integral of the level over n periods
        let s = PwmSignal::new(1e6, duty).unwrap();
        let steps = 20_000 * n;
        let dt = n as f64 * s.period() / steps as f64;
        let high = (0..steps)
            .filter(|&i| s.state_at((i as f64 + 0.5) * dt) == Level::High)
            .count() as f64 * dt;
        prop_assert!((high - duty * n as f64 * s.period()).abs() <= 2.0 * dt);
    }

    #[test]
    fn sinusoid_is_periodic(mean in 1.0f64..3.0, amp in 0.0f64..0.9, period in 1e-7f64..1e-3, t in 0.0f64..1e-3) {
        let p = SupplyProfile::sinusoid(mean, amp, period, 2e-3).unwrap();
        prop_assert!((p.value_at(t) - p.value_at(t + period)).abs() <= 1e-12 * mean);
    }

    #[test]
    fn equilibrium_ratio_ignores_supply(d in prop::collection::vec(0.0f64..=1.0, 3), w in weights3(), vdd in 0.5f64..5.0) {
        let w = WeightVector::new(w, 3).unwrap();
        let a = vac_equilibrium(&d, &w, vdd).unwrap() / vdd;
        let b = vac_equilibrium(&d, &w, 2.5).unwrap() / 2.5;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn transient_average_tracks_equilibrium(d in prop::collection::vec(0.05f64..0.95, 3), w in weights3(), vdd in 1.0f64..3.5) {
        let cfg = VacConfig::small(3, 3);
        let w = WeightVector::new(w, 3).unwrap();
        let inputs: Vec<_> = d.iter().map(|&x| PwmSignal::new(100e6, x).unwrap()).collect();
        let supply = SupplyProfile::constant(vdd).unwrap();
        let tr = simulate_vac(&cfg, &inputs, &w, &supply, 2e-6, vdd).unwrap();
        let m = trace_metrics(&tr, slowest_period(&inputs));
        let eq = vac_equilibrium(&d, &w, vdd).unwrap();
        prop_assert!((m.average_v - eq).abs() <= m.swing / 2.0 + 0.01 * vdd, "{} vs {}", m.average_v, eq);
    }

    #[test]
    fn clamp_floors_waveform(d in prop::collection::vec(0.0f64..=1.0, 3), w in weights3(), f in 1e5f64..1e8) {
        let cfg = VacConfig::small(3, 3).with_compensation(0.7);
        let w = WeightVector::new(w, 3).unwrap();
        let inputs: Vec<_> = d.iter().map(|&x| PwmSignal::new(f, x).unwrap()).collect();
        let supply = SupplyProfile::constant(2.5).unwrap();
        let tr = simulate_vac(&cfg, &inputs, &w, &supply, 3e-6, 2.5).unwrap();
        for p in tr.points(400) {
            prop_assert!(p.v_cap >= 0.7 - 1e-12);
        }
    }

    #[test]
    fn power_is_positive(d in prop::collection::vec(0.0f64..=1.0, 3), w in weights3()) {
        let w = WeightVector::new(w, 3).unwrap();
        let inputs: Vec<_> = d.iter().map(|&x| PwmSignal::new(100e6, x).unwrap()).collect();
        let supply = SupplyProfile::constant(2.5).unwrap();
        let small = simulate_vac(&VacConfig::small(3, 3), &inputs, &w, &supply, 2e-6, 2.5).unwrap();
        let large = simulate_vac(&VacConfig::large(3, 3), &inputs, &w, &supply, 200e-6, 2.5).unwrap();
        let ps = trace_metrics(&small, slowest_period(&inputs)).avg_power;
        let pl = trace_metrics(&large, slowest_period(&inputs)).avg_power;
        prop_assert!(ps > 0.0 && pl > 0.0 && ps > pl);
    }

    #[test]
    fn perceptron_is_monotone(base in prop::collection::vec(0.0f64..0.9, 3), bump in 0.0f64..0.1, i in 0usize..3, w in weights3()) {
        let cfg = PerceptronConfig::<f64>::behavioral();
        let w = WeightVector::new(w, 3).unwrap();
        let mut up = base.clone();
        up[i] += bump;
        let lo = perceptron_eval(&cfg, &base, &w, 2.5).unwrap();
        let hi = perceptron_eval(&cfg, &up, &w, 2.5).unwrap();
        prop_assert!(hi >= lo - 1e-15);
    }

    #[test]
    fn single_input_full_weight_is_stage_map(x in 0.0f64..=1.0) {
        let m = ConverterModel::<f64>::compensated();
        let w = WeightVector::new(vec![1], 1).unwrap();
        let v = vac_equilibrium(&[x], &w, 2.5).unwrap();
        prop_assert!((m.v_to_dc(v, 2.5).duty().unwrap() - m.stage_map(x)).abs() < 1e-12);
    }

    #[test]
    fn stage_iteration_basins(x0 in 0.0f64..1.0) {
        let m = ConverterModel::<f64>::compensated();
        let y = m.iterate(x0, 50);
        if x0 < 0.84 {
            prop_assert!((y - 0.25).abs() < 1e-3 + 5e-4);
        } else if x0 > 0.86 {
            prop_assert_eq!(y, 0.98);
        }
    }
}

#[test]
fn transient_paths_agree_above_ripple_threshold() {
    let b = PerceptronConfig::<f64>::behavioral();
    let w = WeightVector::max_weights(3, 3).unwrap();
    for f in [10e6, 100e6] {
        let t = b.with_path(EvalPath::Transient { frequency: f, horizon: None });
        for x in [0.2, 0.4, 0.6] {
            let inputs: Vec<_> = (0..3).map(|_| PwmSignal::new(f, x).unwrap()).collect();
            let supply = SupplyProfile::constant(2.5).unwrap();
            let tr = simulate_vac(&b.vac, &inputs, &w, &supply, 30.0 * b.vac.time_constant() + 20.0 / f, 2.5).unwrap();
            let swing = trace_metrics(&tr, Some(1.0 / f)).swing;
            let yb = perceptron_eval(&b, &[x; 3], &w, 2.5).unwrap();
            let yt = perceptron_eval(&t, &[x; 3], &w, 2.5).unwrap();
            assert!((yb - yt).abs() <= swing / 2.0 / 2.5 + 0.01, "{f} {x}: {yb} vs {yt}");
        }
    }
}
