use chrono::{Duration, TimeZone, Utc};
use evcast::data::{
    aggregate_to_hourly, ingest_sessions, make_windows, prepare_dataset, split_dataset,
    synthetic_series, FitScope, HourlySeries, SessionRecord, SyntheticSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ramp(n: usize) -> HourlySeries {
    let start = Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap();
    HourlySeries::new(start, (0..n).map(|i| (i as f64 * 0.37).sin() + 2.0).collect()).unwrap()
}

proptest! {
    #[test]
    fn aggregation_conserves_energy(
        sessions in prop::collection::vec((0i64..200_000, 1i64..40_000, 0.0f64..80.0), 1..40)
    ) {
        let origin = Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap();
        let records: Vec<SessionRecord> = sessions
            .iter()
            .enumerate()
            .map(|(i, &(start, len, kwh))| {
                let s = origin + Duration::seconds(start);
                SessionRecord::new(i.to_string(), s, s + Duration::seconds(len), kwh).unwrap()
            })
            .collect();
        let series = aggregate_to_hourly(&records).unwrap();
        let total: f64 = records.iter().map(|r| r.energy_kwh).sum();
        prop_assert!((series.values().iter().sum::<f64>() - total).abs() <= 1e-9);
        prop_assert!(series.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn windows_read_back_series_values(n in 2usize..80, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = rng.random_range(1..n);
        let h = rng.random_range(1..=n - l);
        let series = ramp(n);
        let ds = make_windows(series.clone(), l, h).unwrap();
        for i in 0..ds.len() {
            for j in 0..l {
                prop_assert_eq!(ds.input(i)[j], series.values()[i + j]);
            }
            for j in 0..h {
                prop_assert_eq!(ds.target(i)[j], series.values()[i + l + j]);
            }
        }
    }
}

#[test]
fn window_count_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let l = rng.random_range(1..50);
        let h = rng.random_range(1..50);
        let n = rng.random_range(l + h..l + h + 200);
        assert_eq!(make_windows(ramp(n), l, h).unwrap().len(), n - l - h + 1);
    }
}

#[test]
fn splits_are_chronological_disjoint_and_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n_windows = rng.random_range(3..400);
        let ds = split_dataset(make_windows(ramp(n_windows + 5), 3, 3).unwrap(), rng.random()).unwrap();
        let s = ds.split();
        assert_eq!(s.train.len(), n_windows * 8 / 10);
        assert_eq!(s.validation.len(), n_windows / 10);
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), n_windows);
        assert_eq!((s.train.start, s.train.end, s.validation.end, s.test.end), (0, s.validation.start, s.test.start, n_windows));
        if !s.validation.is_empty() {
            assert!(ds.origin(s.train.end - 1) < ds.origin(s.validation.start));
        }
        assert!(ds.origin(s.validation.end.max(1) - 1) < ds.origin(s.test.start));
        let mut order = ds.train_order().to_vec();
        order.sort_unstable();
        assert_eq!(order, s.train.clone().collect::<Vec<_>>());
    }
}

#[test]
fn all_data_normalization_stays_in_unit_interval() {
    let raw = synthetic_series(&SyntheticSpec::default()).unwrap();
    let ds = prepare_dataset(&raw, 48, 24, FitScope::AllData, 0).unwrap();
    assert!(ds.values().iter().all(|v| (0.0..=1.0).contains(v)));
    let n = ds.normalizer().unwrap();
    for (x, y) in raw.values().iter().zip(ds.values()) {
        assert!((n.denormalize(*y) - x).abs() <= 1e-12);
    }
}

#[test]
fn ingest_then_aggregate() {
    let csv = "session_id,start_time,end_time,energy_kwh\n\
               a,2019-01-01T10:00:00Z,2019-01-01T12:00:00Z,4.0\n\
               b,2019-01-01T11:30:00Z,2019-01-01T12:30:00Z,1.0\n\
               c,2019-01-01T13:00:00Z,2019-01-01T12:00:00Z,1.0\n";
    let report = ingest_sessions(csv.as_bytes()).unwrap();
    assert_eq!(report.rejected.len(), 1);
    assert_eq!(report.rejected[0].line, 4);
    let series = aggregate_to_hourly(&report.records).unwrap();
    assert_eq!(series.values(), &[2.0, 2.5, 0.5]);
}
