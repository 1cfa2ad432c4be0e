use ctrlrepair::plant::{sample_initial, simulate, ExpertController, PlantId, PlantModel};
use ctrlrepair::signal::ControlPatch;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn plant() -> impl Strategy<Value = PlantId> {
    prop::sample::select(PlantId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn controls_stay_in_bounds_with_and_without_patches(
        id in plant(),
        seed in any::<u64>(),
        lo in 0.0f64..0.8,
        width in 0.05f64..0.2,
        knots in prop::collection::vec(-100.0f64..100.0, 4),
    ) {
        let m = PlantModel::for_id(id);
        let ctrl = ExpertController::new(&m);
        let (x0, u) = sample_initial(&m, &mut ChaCha8Rng::seed_from_u64(seed));
        let t_lo = (lo * m.horizon / m.dt).round() * m.dt;
        let t_hi = ((lo + width) * m.horizon / m.dt).round() * m.dt;
        let patch = ControlPatch::new(t_lo, t_hi, knots, m.bounds).unwrap();
        let plain = simulate(&m, &ctrl, &u, &[], &x0).unwrap();
        let patched = simulate(&m, &ctrl, &u, &[patch], &x0).unwrap();
        for tr in [&plain, &patched] {
            prop_assert!(tr.c.samples().all(|c| m.bounds.contains(c[0])));
        }
        // identical up to the first patched sample
        let first = (t_lo / m.dt).round() as usize;
        for i in 0..first {
            prop_assert_eq!(plain.c.sample(i), patched.c.sample(i));
            prop_assert_eq!(plain.x.sample(i), patched.x.sample(i));
        }
    }

    #[test]
    fn states_are_continuous_across_input_switches(id in plant(), seed in any::<u64>()) {
        let m = PlantModel::for_id(id);
        let ctrl = ExpertController::new(&m);
        let (x0, u) = sample_initial(&m, &mut ChaCha8Rng::seed_from_u64(seed));
        let tr = simulate(&m, &ctrl, &u, &[], &x0).unwrap();
        let mut f = vec![0.0; m.state_dim()];
        let mut switches = 0;
        for i in 1..tr.len() {
            if u.sample(i) == u.sample(i - 1) {
                continue;
            }
            switches += 1;
            // one step may move no further than a few times the local slope allows
            let mut slope: f64 = 0.0;
            for x in [tr.x.sample(i - 1), tr.x.sample(i)] {
                for v in [u.sample(i - 1), u.sample(i)] {
                    m.derivative(x, tr.c.sample(i - 1)[0], v, &mut f);
                    slope = f.iter().fold(slope, |a, d| a.max(d.abs()));
                }
            }
            for (a, b) in tr.x.sample(i).iter().zip(tr.x.sample(i - 1)) {
                prop_assert!((a - b).abs() <= 3.0 * slope * m.dt + 1e-9, "jump at {i}: {b} -> {a}");
            }
        }
        prop_assert!(switches > 0 || u.len() < 2);
    }
}
