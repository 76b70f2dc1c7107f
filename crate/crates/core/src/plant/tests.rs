use super::*;
use proptest::prelude::*;

fn quiet() -> Plant {
    Plant::noiseless()
}

fn run(p: &ProcessParams, d: &DisturbanceState) -> CycleRecord {
    quiet().run_cycle(0, p, d, 1).unwrap()
}

#[test]
fn nominal_maps_to_nominal() {
    let r = run(&ProcessParams::NOMINAL, &DisturbanceState::NONE);
    assert!((r.true_quality.mass - 5.0).abs() < 1e-12);
    assert!((r.true_quality.length - 98.5).abs() < 1e-12);
    assert!(r.measured_quality.is_none());
    assert_eq!(r.melt_temp_realized, 230.0);
}

#[test]
fn melt_plus_20_loses_1_27_percent() {
    let p = ProcessParams::NOMINAL.with(ParamKind::MeltTemp, 250.0).unwrap();
    let m = run(&p, &DisturbanceState::NONE).true_quality.mass;
    assert!((m - 5.0 * (1.0 - 0.0127)).abs() < 1e-12, "{m}");
    // A +20 °C disturbance offset on the realized melt is the same physical state.
    let d = DisturbanceState { melt_temp_offset: 20.0, ..DisturbanceState::NONE };
    let m2 = run(&ProcessParams::NOMINAL, &d).true_quality.mass;
    assert!((m2 - m).abs() < 1e-15);
}

#[test]
fn hold_plus_40_increases_mass() {
    let p = ProcessParams::NOMINAL.with(ParamKind::HoldPressure, 440.0).unwrap();
    let m = run(&p, &DisturbanceState::NONE).true_quality.mass;
    // 5 * (1 + 0.05 * tanh(0.2)), evaluated independently.
    assert!((m - 5.049343830056225).abs() < 1e-12, "{m}");
    assert!(m > 5.0);
}

#[test]
fn out_of_range_is_an_error() {
    let mut p = ProcessParams::NOMINAL;
    p.melt_temp = 300.0;
    let e = quiet().run_cycle(0, &p, &DisturbanceState::NONE, 0).unwrap_err();
    assert!(matches!(e, Error::Range { .. }));
}

#[test]
fn non_finite_is_a_fault_not_a_clamp() {
    let mut plant = quiet();
    plant.config.viscosity_temp_scale = 0.0;
    // exp(-0/0) = NaN propagates through the peak pressure into the trace
    let e = plant.run_cycle(0, &ProcessParams::NOMINAL, &DisturbanceState::NONE, 0).unwrap_err();
    assert!(matches!(e, Error::NumericalFault(_)), "{e}");
}

#[test]
fn trace_shape_and_marks() {
    let r = run(&ProcessParams::NOMINAL, &DisturbanceState::NONE);
    assert_eq!(r.cycle_time, 30.0);
    assert_eq!(r.trace.len(), 3000);
    r.trace.validate().unwrap();
    // fill time 60/50 = 1.2 s, hold 5 s, cool 15 s
    assert_eq!(r.trace.phase_marks, [0, 120, 620, 2120]);
    let peak = 0.9 * 400.0 + 80.0;
    assert!((r.trace.peak_pressure() - peak).abs() < 1e-9);
}

#[test]
fn long_cycle_extends_trace() {
    let p = ProcessParams::new(230.0, 400.0, 10.0, 10.0, 25.0, 40.0).unwrap();
    let r = run(&p, &DisturbanceState::NONE);
    // 6 + 10 + 25 + 2 s ejection
    assert!((r.cycle_time - 43.0).abs() < 1e-12);
    assert_eq!(r.trace.len(), 4300);
}

#[test]
fn zero_hold_time_starts_decay_at_fill_end() {
    let plant = quiet();
    let shape = TraceShape {
        fill_time: 1.2,
        hold_time: 0.0,
        cool_time: 15.0,
        cycle_time: 30.0,
        peak_pressure: 440.0,
        mold_temp: 40.0,
        mold_peak_temp: 95.0,
    };
    let t = plant.synthesize_trace(&shape, None).unwrap();
    let k = 120;
    assert_eq!(t.phase_marks[1], t.phase_marks[2]);
    assert!((t.mold_pressure[k] - 440.0).abs() < 1e-9);
    // one sample later we are already on the cooling exponential
    let expected = 440.0 * (-0.01f64 / 4.0).exp();
    assert!((t.mold_pressure[k + 1] - expected).abs() < 1e-9);

    let held = plant
        .synthesize_trace(&TraceShape { hold_time: 5.0, ..shape }, None)
        .unwrap();
    assert!((held.mold_pressure[k + 1] - 440.0 * 0.98f64.powf(0.01)).abs() < 1e-9);
}

#[test]
fn sequence_without_hook_is_constant() {
    let plant = quiet();
    let recs = plant
        .run_sequence(
            &ProcessParams::NOMINAL,
            5,
            &DisturbanceProfile::none(),
            |_| Ok(()),
            None::<fn(&[CycleRecord]) -> Result<Option<ProcessParams>>>,
            &SeedTree::new(3),
        )
        .unwrap();
    assert_eq!(recs.len(), 5);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.cycle_index, i);
        assert_eq!(r.true_quality, recs[0].true_quality);
    }
}

#[test]
fn step_disturbance_drops_mass_from_onset() {
    let plant = quiet();
    let d = DisturbanceProfile::step(DisturbanceTarget::MeltTempOffset, 20.0, 3);
    let recs = plant
        .run_sequence(
            &ProcessParams::NOMINAL,
            6,
            &d,
            |_| Ok(()),
            None::<fn(&[CycleRecord]) -> Result<Option<ProcessParams>>>,
            &SeedTree::new(3),
        )
        .unwrap();
    for r in &recs[..3] {
        assert!((r.true_quality.mass - 5.0).abs() < 1e-12);
    }
    for r in &recs[3..] {
        let rel = r.true_quality.mass / 5.0 - 1.0;
        assert!((rel + 0.0127).abs() < 1e-12, "{rel}");
    }
}

#[test]
fn hook_can_change_params_and_bad_params_name_the_cycle() {
    let plant = quiet();
    let recs = plant
        .run_sequence(
            &ProcessParams::NOMINAL,
            3,
            &DisturbanceProfile::none(),
            |_| Ok(()),
            Some(|h: &[CycleRecord]| {
                Ok(Some(ProcessParams::NOMINAL.with(ParamKind::HoldPressure, 400.0 + 10.0 * h.len() as f64)?))
            }),
            &SeedTree::new(0),
        )
        .unwrap();
    assert_eq!(recs[2].params.hold_pressure, 420.0);

    let err = plant
        .run_sequence(
            &ProcessParams::NOMINAL,
            5,
            &DisturbanceProfile::none(),
            |_| Ok(()),
            Some(|h: &[CycleRecord]| {
                let mut p = ProcessParams::NOMINAL;
                if h.len() == 2 {
                    p.hold_pressure = 1000.0;
                }
                Ok(Some(p))
            }),
            &SeedTree::new(0),
        )
        .unwrap_err();
    assert!(matches!(err, Error::HookRange { cycle: 1, .. }), "{err}");
}

#[test]
fn age_part_relaxes_towards_asymptote() {
    let plant = quiet();
    let q = nominal_quality(&plant);
    assert_eq!(plant.age_part(&q, 0.0).unwrap(), q);
    let hour = plant.age_part(&q, 3600.0).unwrap();
    assert!((hour.length - 98.30828634489885).abs() < 1e-9, "{}", hour.length);
    assert_eq!(hour.mass, q.mass);
    let inf = plant.age_part(&q, 1e9).unwrap();
    assert!((inf.length - q.length * (1.0 - 0.004)).abs() < 1e-12);
    assert!(plant.age_part(&q, -1.0).is_err());
}

#[test]
fn noisy_cycle_is_deterministic_per_seed() {
    let plant = Plant::default();
    let a = plant.run_cycle(4, &ProcessParams::NOMINAL, &DisturbanceState::NONE, 99).unwrap();
    let b = plant.run_cycle(4, &ProcessParams::NOMINAL, &DisturbanceState::NONE, 99).unwrap();
    let c = plant.run_cycle(4, &ProcessParams::NOMINAL, &DisturbanceState::NONE, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.true_quality, c.true_quality);
}

#[test]
fn three_level_factorial_spans_at_least_1_4_percent() {
    let plant = quiet();
    let mut masses = Vec::new();
    for t in [220.0, 230.0, 240.0] {
        for p in [350.0, 400.0, 450.0] {
            for v in [40.0, 50.0, 60.0] {
                let params = ProcessParams { melt_temp: t, hold_pressure: p, inject_speed: v, ..ProcessParams::NOMINAL };
                masses.push(plant.quality(&params, &DisturbanceState::NONE).unwrap().mass);
            }
        }
    }
    let (lo, hi) = masses.iter().fold((f64::MAX, f64::MIN), |(a, b), &m| (a.min(m), b.max(m)));
    assert!((hi - lo) / 5.0 >= 0.014, "{}", (hi - lo) / 5.0);
}

#[test]
fn hidden_viscosity_compensation_keeps_peak() {
    // A hotter melt from a stiffer lot leaves the viscosity, hence the peak
    // cavity pressure, unchanged while the part still loses mass.
    let x = 15.0;
    let d = DisturbanceState { melt_temp_offset: x, viscosity_factor: (x / 60.0f64).exp(), checkring_leak: 0.0 };
    let r = run(&ProcessParams::NOMINAL, &d);
    let base = run(&ProcessParams::NOMINAL, &DisturbanceState::NONE);
    assert!((r.trace.peak_pressure() - base.trace.peak_pressure()).abs() < 1e-9);
    assert!(r.true_quality.mass < 0.99 * 5.0);
}

proptest! {
    #[test]
    fn mass_increases_with_hold_pressure(
        p in 200.0f64..599.0, dp in 0.5f64..50.0,
        t in 200.0f64..280.0, v in 10.0f64..120.0,
    ) {
        let plant = quiet();
        let hi = (p + dp).min(600.0);
        let a = ProcessParams { hold_pressure: p, melt_temp: t, inject_speed: v, ..ProcessParams::NOMINAL };
        let b = ProcessParams { hold_pressure: hi, ..a };
        let ma = plant.quality(&a, &DisturbanceState::NONE).unwrap().mass;
        let mb = plant.quality(&b, &DisturbanceState::NONE).unwrap().mass;
        prop_assert!(mb > ma);
    }

    #[test]
    fn mass_decreases_with_melt_above_nominal(
        t in 230.0f64..259.5, dt in 0.5f64..30.0,
        p in 200.0f64..600.0, v in 10.0f64..120.0,
    ) {
        let plant = quiet();
        let a = ProcessParams { melt_temp: t, hold_pressure: p, inject_speed: v, ..ProcessParams::NOMINAL };
        let b = ProcessParams { melt_temp: (t + dt).min(260.0), ..a };
        let ma = plant.quality(&a, &DisturbanceState::NONE).unwrap().mass;
        let mb = plant.quality(&b, &DisturbanceState::NONE).unwrap().mass;
        prop_assert!(mb < ma);
    }

    #[test]
    fn trace_length_matches_cycle_time(
        v in 10.0f64..120.0, h in 1.0f64..10.0, c in 5.0f64..25.0,
    ) {
        let plant = quiet();
        let p = ProcessParams { inject_speed: v, hold_time: h, cool_time: c, ..ProcessParams::NOMINAL };
        let r = plant.run_cycle(0, &p, &DisturbanceState::NONE, 0).unwrap();
        prop_assert_eq!(r.trace.len(), (r.cycle_time * 100.0 - 1e-9).ceil() as usize);
        prop_assert!(r.trace.validate().is_ok());
    }
}
