use bbconv::config::{parse_scenario, scenario_to_toml};
use bbconv::control::{design_defaults, ControllerKind, ControllerSpec};
use bbconv::converter::{
    active_affine, output_voltage, phase_affine, phase_dynamics, ConverterParams, PhaseTopology,
    StateVector,
};
use bbconv::io::{read_trace_csv, trace_to_csv};
use bbconv::pwm::{duty_for_ratio, quantize_duty, schedule_period, DutyCommand};
use bbconv::sim::{self, integrate, SimConfig};
use proptest::prelude::*;

fn params_strategy() -> impl Strategy<Value = ConverterParams> {
    (
        0.5f64..20.0,
        1e-8f64..1e-5,
        1e-8f64..1e-4,
        0.0f64..1.0,
        0.0f64..0.2,
        0.5f64..100.0,
        0.0f64..0.2,
        0.0f64..0.2,
    )
        .prop_map(|(vin, l, c, r_l, r_esr, r_load, ron_a, ron_b)| {
            let mut p = ConverterParams::lumped(vin, l, c, r_l, r_esr, r_load);
            p.r_on1 = ron_a;
            p.r_on2 = ron_b;
            p.r_on3 = ron_b;
            p.r_on4 = ron_a;
            p
        })
}

fn phase_strategy() -> impl Strategy<Value = PhaseTopology> {
    prop_oneof![
        Just(PhaseTopology::On),
        Just(PhaseTopology::Off),
        Just(PhaseTopology::Dead)
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn affine_form_reproduces_dynamics(
        p in params_strategy(),
        phase in phase_strategy(),
        i in -5.0f64..5.0,
        v in -1.0f64..20.0,
    ) {
        let x = StateVector::new(i, v);
        let f = phase_dynamics(&p, phase, x);
        let g = active_affine(&p, phase, x).eval(x);
        prop_assert!(close(f.0, g.0, 1e-12), "{f:?} vs {g:?}");
        prop_assert!(close(f.1, g.1, 1e-12), "{f:?} vs {g:?}");
    }

    #[test]
    fn output_voltage_is_affine_in_state(
        p in params_strategy(),
        phase in prop_oneof![Just(PhaseTopology::On), Just(PhaseTopology::Off)],
        a in (-3.0f64..3.0, 0.0f64..10.0),
        b in (-3.0f64..3.0, 0.0f64..10.0),
        w in 0.0f64..1.0,
    ) {
        let xa = StateVector::new(a.0, a.1);
        let xb = StateVector::new(b.0, b.1);
        let mix = StateVector::new(w * a.0 + (1.0 - w) * b.0, w * a.1 + (1.0 - w) * b.1);
        let lhs = output_voltage(&p, phase, mix);
        let rhs = w * output_voltage(&p, phase, xa) + (1.0 - w) * output_voltage(&p, phase, xb);
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn phase_matrices_are_stable(p in params_strategy(), phase in phase_strategy()) {
        for (re, _) in phase_affine(&p, phase).eigenvalues() {
            prop_assert!(re <= 0.0, "eigenvalue real part {re}");
        }
    }

    #[test]
    fn quantization_is_idempotent_and_bounded(d in 0.0f64..=1.0, bits in 1u32..16) {
        let q = quantize_duty(d, bits);
        prop_assert_eq!(quantize_duty(q, bits), q);
        prop_assert!((q - d).abs() <= 0.5f64.powi(bits as i32 + 1) + 1e-15);
    }

    #[test]
    fn schedule_covers_one_period(
        d in 0.1f64..0.9,
        t_dead in 0.0f64..1.5e-9,
    ) {
        let mut p = ConverterParams::lumped(2.5, 280e-9, 250e-9, 0.5, 1e-4, 10.0);
        p.t_dead = t_dead;
        let s = schedule_period(&DutyCommand::continuous(d), &p).unwrap();
        prop_assert!((s.total() - p.period()).abs() <= 1e-12 * p.period());
        prop_assert_eq!(*s.boundaries().last().unwrap(), p.period());
        prop_assert!(s.segments.iter().all(|seg| seg.duration > 0.0));
    }

    #[test]
    fn duty_for_ratio_inverts_ideal_ratio(vin in 0.1f64..50.0, vout in 0.1f64..50.0) {
        let d = duty_for_ratio(vin, vout);
        prop_assert!(d > 0.0 && d < 1.0);
        prop_assert!(close(vin * d / (1.0 - d), vout, 1e-12));
        prop_assert_eq!(d > 0.5, vout > vin);
    }

    #[test]
    fn exact_step_matches_series(
        p in params_strategy(),
        phase in phase_strategy(),
        i in 0.01f64..3.0,
        v in 0.0f64..10.0,
        frac in 0.01f64..1.0,
    ) {
        let sys = phase_affine(&p, phase);
        let x = StateVector::new(i, v);
        let dt = frac * p.period();
        let a = integrate::exact_step(&sys, x, dt);
        let h = dt / 64.0;
        let b = (0..64).fold(x, |x, _| integrate::rk4_step(&sys, x, h));
        prop_assert!(close(a.i_l, b.i_l, 1e-7), "{a:?} vs {b:?}");
        prop_assert!(close(a.v_c, b.v_c, 1e-7), "{a:?} vs {b:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn config_round_trip(
        p in params_strategy(),
        kind in prop_oneof![
            Just(ControllerKind::OpenLoop),
            Just(ControllerKind::AnalogType3),
            Just(ControllerKind::Digital2p2z)
        ],
        v_ref in 1.0f64..10.0,
        spp in 8u32..128,
        dec in 1u32..32,
        t_end in 1e-7f64..1e-3,
    ) {
        let controller = design_defaults(&p, kind, v_ref).unwrap();
        let s = bbconv::Scenario {
            name: "prop".into(),
            params: p,
            controller,
            sim: SimConfig {
                steps_per_period: spp,
                record_decimation: dec,
                ..SimConfig::new(t_end)
            },
            events: Vec::new(),
        };
        let back = parse_scenario(&scenario_to_toml(&s)).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn csv_is_stable_and_round_trips(d in 0.2f64..0.8, periods in 1u32..20) {
        let p = ConverterParams::lumped(2.5, 280e-9, 250e-9, 0.5, 1e-4, 10.0);
        let sim = SimConfig::new(periods as f64 * p.period());
        let ctrl = ControllerSpec::open_loop(d);
        let a = trace_to_csv(&sim::run(&p, &ctrl, &sim, &[]).unwrap());
        let b = trace_to_csv(&sim::run(&p, &ctrl, &sim, &[]).unwrap());
        prop_assert_eq!(&a, &b);
        let back = read_trace_csv(a.as_bytes()).unwrap();
        prop_assert_eq!(trace_to_csv(&back), a);
        prop_assert!(back.samples.windows(2).all(|w| w[1].t > w[0].t));
    }
}
