mod common;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use proptest::prelude::*;

use common::*;
use schoolsense::analytics::{
    comfort_band, daily_comfort, detect_outliers, fill_gaps, Acceptability, ComfortConfig, OutlierConfig, Series,
};
use schoolsense::fleetsim::fixtures;
use schoolsense::ingest::{parse_payload, BusMapper, BusMessage, IngestError};
use schoolsense::model::{align, AggregationType, Granularity, ResourceId};

const T0: i64 = 1_506_816_000_000; // 2017-10-01T00:00:00Z

fn agg_strategy() -> impl Strategy<Value = AggregationType> {
    prop_oneof![Just(AggregationType::Average), Just(AggregationType::Total), Just(AggregationType::Power)]
}

/// Distinct timestamps within `span_ms` of `T0`, values in [0, 40).
fn log_strategy(max_len: usize, span_ms: i64) -> impl Strategy<Value = Vec<(i64, f64)>> {
    prop::collection::btree_map(0..span_ms, 0.0..40.0f64, 1..max_len)
        .prop_map(|m| m.into_iter().map(|(t, v)| (T0 + t, (v * 1000.0).round() / 1000.0)).collect())
}

fn submit_all(dir: &std::path::Path, agg: AggregationType, log: &[(i64, f64)]) -> (schoolsense::engine::Engine<f64>, ResourceId) {
    let d = descriptor(0, agg);
    let mut e = engine_at(dir, directory(std::slice::from_ref(&d)));
    for (ts, v) in log {
        e.submit(&reading(&d, *ts, *v)).unwrap();
    }
    e.flush().unwrap();
    (e, d.resource_id)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn align_contains_and_nests(t in -4_000_000_000_000i64..8_000_000_000_000i64) {
        let mut prev: Option<schoolsense::IntervalKey> = None;
        for g in Granularity::ALL {
            let k = align(t, g);
            prop_assert!(k.start <= t && t < k.start + k.width_ms());
            prop_assert_eq!(k.start, start_of(t, g));
            if let Some(p) = prev {
                // finer interval lies wholly inside the coarser one
                prop_assert!(k.start <= p.start && p.start + p.width_ms() <= k.start + k.width_ms());
            }
            prev = Some(k);
        }
    }

    #[test]
    fn submission_order_is_irrelevant(agg in agg_strategy(), log in log_strategy(120, 4 * HOUR), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (ea, _) = submit_all(a.path(), agg, &log);
        let mut shuffled = log.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (eb, _) = submit_all(b.path(), agg, &shuffled);
        prop_assert_eq!(ea.store().export_summaries().unwrap(), eb.store().export_summaries().unwrap());
    }

    #[test]
    fn summaries_match_brute_force(agg in agg_strategy(), log in log_strategy(300, 3 * DAY)) {
        let dir = tempfile::tempdir().unwrap();
        let (e, id) = submit_all(dir.path(), agg, &log);
        let want = oracle(&log, agg);
        for g in Granularity::ALL {
            let got = e.store().summaries(&id, g, T0 - 400 * DAY, T0 + 400 * DAY).unwrap();
            if let Err(m) = check_against_oracle(&got, &want[&g], 1e-9) {
                return Err(TestCaseError::fail(format!("{g}: {m}")));
            }
        }
    }

    #[test]
    fn energy_is_additive(log in log_strategy(300, DAY)) {
        let dir = tempfile::tempdir().unwrap();
        let (e, id) = submit_all(dir.path(), AggregationType::Power, &log);
        let sum = |g| -> f64 {
            e.store().summaries(&id, g, T0, T0 + DAY).unwrap().iter().map(|s| s.energy_wh.unwrap()).sum()
        };
        let (day, hour, five) = (sum(Granularity::Day), sum(Granularity::Hour), sum(Granularity::FiveMin));
        prop_assert!(close(day, hour, 1e-9), "{} vs {}", day, hour);
        prop_assert!(close(hour, five, 1e-9), "{} vs {}", hour, five);
    }

    #[test]
    fn resubmission_changes_nothing(log in log_strategy(60, 2 * HOUR)) {
        let dir = tempfile::tempdir().unwrap();
        let d = descriptor(0, AggregationType::Average);
        let mut e = engine_at(dir.path(), directory(std::slice::from_ref(&d)));
        for (ts, v) in &log {
            e.submit(&reading(&d, *ts, *v)).unwrap();
        }
        let before = e.store().export_summaries().unwrap();
        for (ts, v) in &log {
            prop_assert!(e.submit(&reading(&d, *ts, *v + 1.0)).unwrap().is_empty());
        }
        prop_assert_eq!(before, e.store().export_summaries().unwrap());
    }

    #[test]
    fn raw_ranges_split_cleanly(log in log_strategy(200, 2 * DAY), cut1 in 0..2 * DAY, cut2 in 0..2 * DAY) {
        let dir = tempfile::tempdir().unwrap();
        let (e, id) = submit_all(dir.path(), AggregationType::Average, &log);
        let (a, b) = (T0 + cut1.min(cut2), T0 + cut1.max(cut2) + 1);
        let (t0, t2) = (T0 - 1, T0 + 2 * DAY + 1);
        let key = |r: &schoolsense::Reading| (r.timestamp, r.value.to_bits());
        let mut parts: Vec<_> = e.store().get_raw(&id, t0, a).unwrap().iter().map(key).collect();
        parts.extend(e.store().get_raw(&id, a, b).unwrap().iter().map(key));
        parts.extend(e.store().get_raw(&id, b, t2).unwrap().iter().map(key));
        parts.sort();
        let mut whole: Vec<_> = e.store().get_raw(&id, t0, t2).unwrap().iter().map(key).collect();
        whole.sort();
        prop_assert_eq!(parts, whole);
    }
}

fn series_from(points: &[(i64, f64)]) -> Series<f64> {
    Series::new(ResourceId::new("x").unwrap(), "", points.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn outlier_flags_match_oracle(
        vals in prop::collection::vec(prop_oneof![8 => 40.0..60.0f64, 1 => -100.0..200.0f64], 10..80),
        w in 4i64..20,
    ) {
        let pts: Vec<(i64, f64)> = vals.iter().enumerate().map(|(i, v)| (i as i64 * 1000, *v)).collect();
        let s = series_from(&pts);
        let (clean, flags) = detect_outliers(&s, OutlierConfig { window_ms: w * 1000, min_points: 4 }).unwrap();
        let want = outlier_oracle(&pts, w * 1000, 4);
        let got: Vec<bool> = (0..pts.len()).map(|i| flags.iter().any(|f| f.index == i)).collect();
        for i in 0..pts.len() {
            prop_assert_eq!(got[i], want[i].unwrap_or(false), "point {}", i);
        }
        for f in &flags {
            // replacement lies within the in-fence window values
            let ts = pts[f.index].0;
            let win: Vec<f64> = pts.iter().filter(|(t, _)| *t >= ts - w * 1000 && *t < ts).map(|p| p.1).collect();
            let mut sorted = win.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (q1, q3) = (q7(&sorted, 0.25), q7(&sorted, 0.75));
            let (lo, hi) = (q1 - 3.0 * (q3 - q1), q3 + 3.0 * (q3 - q1));
            let inside: Vec<f64> = win.into_iter().filter(|v| *v >= lo && *v <= hi).collect();
            let (mn, mx) = inside.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            prop_assert!(f.replacement >= mn && f.replacement <= mx);
            prop_assert_eq!(clean.points[f.index].value, f.replacement);
        }
    }

    #[test]
    fn gap_fill_keeps_values_and_closes_gaps(
        present in prop::collection::btree_map(0i64..300, -10.0..40.0f64, 1..120),
        w_slots in 1i64..50,
    ) {
        let pts: Vec<(i64, f64)> = present.iter().map(|(k, v)| (T0 + k * FIVE_MIN, *v)).collect();
        let s = series_from(&pts);
        let filled = fill_gaps(&s, w_slots * FIVE_MIN).unwrap();
        let first = pts[0].0;
        let last = pts.last().unwrap().0;
        prop_assert_eq!(filled.points.len() as i64, (last - first) / FIVE_MIN + 1);
        for (i, p) in filled.points.iter().enumerate() {
            prop_assert_eq!(p.ts, first + i as i64 * FIVE_MIN);
            match present.get(&((p.ts - T0) / FIVE_MIN)) {
                Some(v) => prop_assert!(!p.synthetic && p.value == *v),
                None => prop_assert!(p.synthetic && p.value.is_finite()),
            }
        }
    }

    #[test]
    fn comfort_band_monotone(a in 10.0..33.5f64, b in 10.0..33.5f64, wind in 0.0..0.59f64) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (x, y) = (comfort_band(lo, wind, Acceptability::Eighty), comfort_band(hi, wind, Acceptability::Eighty));
        if hi > lo + 1e-9 {
            prop_assert!(y.comfort > x.comfort);
        }
        prop_assert!((x.upper - x.lower - 7.0).abs() < 1e-9);
        prop_assert!(x.applicable && y.applicable);
    }

    #[test]
    fn daily_score_bounded_and_monotone(temps in prop::collection::vec(15.0..32.0f64, 8), fix in 0usize..8) {
        let site = fixtures::site("P", chrono_tz::UTC);
        let day = NaiveDate::from_ymd_opt(2018, 3, 6).unwrap();
        let outdoor: BTreeMap<NaiveDate, f64> = (1..=7).map(|k| (day - chrono::Duration::days(k), 20.0)).collect();
        let slots = schoolsense::analytics::school_hour_slots(&site, day);
        let build = |ts: &[f64]| {
            let pts: Vec<(i64, f64)> = slots.iter().zip(ts).map(|((a, _), v)| (*a + 60_000, *v)).collect();
            series_from(&pts)
        };
        let score = |s: &Series<f64>| daily_comfort(s, &outdoor, None, day, &site, "R", ComfortConfig::default()).unwrap().score;
        let before = score(&build(&temps));
        prop_assert!((0.0..=1.0).contains(&before));
        let mut better = temps.clone();
        better[fix] = 24.0; // band centre for a 20 °C prevailing mean
        prop_assert!(score(&build(&better)) >= before);
    }

    #[test]
    fn mapper_is_total(topic in "[a-z0-9/]{0,12}", payload in "[-0-9.e@a]{0,16}") {
        let d = descriptor(1, AggregationType::Average);
        let mapper = BusMapper::new(directory(std::slice::from_ref(&d)));
        let r = mapper.parse_bus_message::<f64>(&BusMessage::new(topic, payload), 0);
        let classified = matches!(
            r,
            Ok(_) | Err(IngestError::MalformedTopic(_)) | Err(IngestError::MalformedPayload(_)) | Err(IngestError::UnknownResource { .. })
        );
        prop_assert!(classified);
    }

    #[test]
    fn bus_messages_round_trip(v in -1.0e6..1.0e6f64, ts in 0i64..4_000_000_000_000) {
        let d = descriptor(1, AggregationType::Average);
        let mapper = BusMapper::new(directory(std::slice::from_ref(&d)));
        let msg = BusMessage::new("dev1/temperature", format!("{v}@{ts}"));
        let r = mapper.parse_bus_message::<f64>(&msg, 0).unwrap();
        prop_assert_eq!(schoolsense::ingest::format_bus_message(&r, true), msg.clone());
        prop_assert_eq!(parse_payload::<f64>(&msg.payload).unwrap(), (v, Some(ts)));
    }

    #[test]
    fn polling_never_repeats(batches in prop::collection::vec(prop::collection::vec(0i64..1000, 0..20), 1..6)) {
        use schoolsense::ingest::{poll_cycle, PollSource, VendorRecord};
        let d = descriptor(1, AggregationType::Average);
        let mapper = BusMapper::new(directory(std::slice::from_ref(&d)));
        let mut src = PollSource::new("v", 300, 0).unwrap();
        let mut emitted = Vec::new();
        for b in batches {
            let before = src.cursor;
            let recs: Vec<VendorRecord> =
                b.iter().map(|ts| VendorRecord { device: "dev1".into(), sensor: "temperature".into(), value: 1.0, ts: *ts }).collect();
            let (out, _) = poll_cycle::<f64, _, std::convert::Infallible>(&mut src, &mapper, |_| Ok(recs)).unwrap();
            prop_assert!(out.iter().all(|r| r.timestamp > before));
            prop_assert!(out.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
            emitted.extend(out.iter().map(|r| r.timestamp));
        }
        prop_assert!(emitted.windows(2).all(|w| w[0] <= w[1]));
    }
}
