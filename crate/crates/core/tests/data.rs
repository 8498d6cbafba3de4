use std::collections::HashSet;

use htgnn_core::data::{
    generate_bearing_like, generate_bridge_like, window_count, BearingGenConfig, BridgeGenConfig, Dataset,
};
use proptest::prelude::*;

fn small_bearing(snr: Option<f64>) -> BearingGenConfig {
    BearingGenConfig {
        speeds: vec![10.0, 30.0, 50.0],
        loads: vec![[5.0, 20.0], [25.0, 25.0]],
        snr_db: snr,
        ..BearingGenConfig::default()
    }
}

proptest! {
    #[test]
    fn window_count_matches_enumeration(n in 1usize..400, len in 1usize..100, stride in 1usize..20) {
        let starts = (0..n).step_by(stride).filter(|s| s + len <= n).count();
        prop_assert_eq!(window_count(n, len, stride), starts);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn splits_never_share_windows(data_seed in 0u64..100, split_seed in 0u64..100, bridge in any::<bool>()) {
        let ds = if bridge {
            generate_bridge_like(&BridgeGenConfig { days: 4, runs_per_day: 2, ..BridgeGenConfig::default() }, data_seed).unwrap()
        } else {
            generate_bearing_like(&small_bearing(Some(35.0)), data_seed).unwrap()
        };
        let split = ds.split(split_seed).unwrap();
        let key = |w: &htgnn_core::data::SensorWindow| (w.meta.condition, w.meta.start);
        let tr: HashSet<_> = split.train.iter().map(key).collect();
        let va: HashSet<_> = split.val.iter().map(key).collect();
        let te: HashSet<_> = split.test.iter().map(key).collect();
        prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        prop_assert_eq!(tr.len() + va.len() + te.len(), ds.windows().unwrap().len());
    }

    #[test]
    fn generated_signals_are_finite_and_bounded(seed in 0u64..1000) {
        let cfg = small_bearing(None);
        let ceiling: f64 = cfg.harmonics.iter().map(|a| a.abs()).sum();
        let ds = generate_bearing_like(&cfg, seed).unwrap();
        for s in &ds.series {
            prop_assert!(s.x_h.data().iter().all(|v| v.is_finite() && v.abs() <= ceiling));
            prop_assert!(s.x_l.data().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
        let bridge = generate_bridge_like(&BridgeGenConfig { days: 2, runs_per_day: 2, ..BridgeGenConfig::default() }, seed).unwrap();
        for s in &bridge.series {
            for m in [&s.x_l, &s.x_h, &s.w, &s.y] {
                prop_assert!(m.data().iter().all(|v| v.is_finite()));
            }
        }
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let a = generate_bearing_like(&small_bearing(Some(35.0)), 3).unwrap();
    let b = generate_bearing_like(&small_bearing(Some(35.0)), 3).unwrap();
    let c = generate_bearing_like(&small_bearing(Some(35.0)), 4).unwrap();
    assert_eq!(a.series, b.series);
    assert_ne!(a.series, c.series);
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for ds in [
        generate_bearing_like(&small_bearing(Some(35.0)), 1).unwrap(),
        generate_bridge_like(&BridgeGenConfig { days: 2, runs_per_day: 2, ..BridgeGenConfig::default() }, 1).unwrap(),
    ] {
        let path = dir.path().join(format!("{:?}", ds.manifest.kind));
        ds.write(&path).unwrap();
        let back = Dataset::read(&path).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.series, ds.series);
    }
}

#[test]
fn truncated_csv_is_a_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_bearing_like(&small_bearing(None), 0).unwrap();
    ds.write(dir.path()).unwrap();
    let file = dir.path().join(&ds.manifest.conditions[0].file);
    let text = std::fs::read_to_string(&file).unwrap();
    let header = text.lines().next().unwrap();
    let cut = header.rsplit_once(',').unwrap().0;
    std::fs::write(&file, format!("{cut}\n")).unwrap();
    assert!(Dataset::read(dir.path()).is_err());
}
