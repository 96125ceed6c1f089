use ergokit::config::{ExperimentConfig, MAX_SEED};
use ergokit::induced::{spreading, FirstTime, TableTime};
use ergokit::lift::return_stats;
use ergokit::markov::{invariant_stats, MassDistribution, MassSpec};
use ergokit::report::{Report, ReportRow, Verdict, CSV_HEADER};
use ergokit::schedules::ScheduleAssignment;
use ergokit::systems::{FiniteMap, Sample, ShiftSystem, Sidedness, StreamKey, TargetSet, Window};
use proptest::prelude::*;

fn finite_map() -> impl Strategy<Value = (Vec<usize>, Vec<Option<u64>>)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(1..=n, n),
            prop::collection::vec(prop::option::of(1u64..6), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spreading_covers_base_and_is_bounded((succ, r) in finite_map(), mask in any::<u16>()) {
        let map = FiniteMap::new(succ.clone()).unwrap();
        let r = TableTime(r);
        let u: Vec<usize> = (1..=succ.len()).filter(|&x| mask >> (x - 1) & 1 == 1 && r.get(x).is_some()).collect();
        let s = spreading(&map, &u, &r).unwrap();
        prop_assert!(u.iter().all(|x| s.contains(x)));
        let budget: u64 = u.iter().map(|&x| r.get(x).unwrap()).sum();
        prop_assert!(s.len() as u64 <= budget);
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn reciprocal_product_is_last_return_over_n(p in 0.15f64..0.85, n in 1u64..3000, id in 0u64..1000) {
        let s = ShiftSystem::coin(p, Sidedness::OneSided).unwrap();
        let x = s.sample_point(StreamKey::new(11, id), Window::forward(n as usize + 400));
        let time = FirstTime(ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1])));
        let st = return_stats(&s, &time, &x, n, 300).unwrap();
        let w = &x.window().forward;
        let ones: Vec<u64> = (1..n).filter(|&i| w[i as usize] == 1).collect();
        prop_assert_eq!(st.visits, ones.len() as u64);
        if let Some(&last) = ones.last() {
            prop_assert!((st.product - last as f64 / n as f64).abs() < 1e-12);
            prop_assert!(st.product <= 1.0);
        }
    }

    #[test]
    fn explicit_masses_normalize(raw in prop::collection::vec(0.01f64..1.0, 1..40)) {
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mean: f64 = weights.iter().enumerate().map(|(j, w)| (j + 1) as f64 * w).sum();
        let m = MassDistribution::new(MassSpec::Explicit { weights, tail_ratio: None }).unwrap();
        prop_assert!(m.certificate.holds(1e-9));
        let st = invariant_stats(&m);
        prop_assert!((st.mean_return - mean).abs() < 1e-9);
        prop_assert!(st.entropy >= 0.0);
    }

    #[test]
    fn geometric_mean_is_reciprocal(p in 0.01f64..0.99) {
        let st = invariant_stats(&MassDistribution::geometric(p).unwrap());
        prop_assert!((st.mean_return * p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn config_round_trips(seed in 0..=MAX_SEED, samples in 1u64..1_000_000, p in 0.0f64..1.0) {
        let mut cfg = ExperimentConfig::new("kac-bernoulli", seed);
        cfg.params.samples = Some(samples);
        cfg.params.p = Some(p);
        prop_assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let big = ExperimentConfig { seed: MAX_SEED + 1 + seed % 1000, ..ExperimentConfig::new("kac-bernoulli", 0) };
        prop_assert!(big.validate().is_err());
    }

    #[test]
    fn csv_rows_sorted_and_lf(qs in prop::collection::vec("[a-z_]{1,8}", 1..20)) {
        let rows = qs
            .iter()
            .map(|q| ReportRow {
                experiment: "e".into(),
                quantity: q.clone(),
                value: "1.0".into(),
                error: String::new(),
                meta: "seed=1".into(),
                verdict: Verdict::Info,
            })
            .collect();
        let csv = String::from_utf8(Report::new("e", 1, rows).to_csv().unwrap()).unwrap();
        prop_assert!(!csv.contains('\r'));
        let mut lines = csv.lines();
        prop_assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let got: Vec<String> = lines.map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
        let mut want = qs.clone();
        want.sort();
        prop_assert_eq!(got, want);
    }
}
