use proptest::prelude::*;

use super::*;

fn row(fire: &str, offset: i32, p: f64, label: bool) -> PredictionRow {
    PredictionRow {
        fire_id: fire.into(),
        minute_offset: offset,
        image_probability: p,
        image_label: label,
    }
}

/// A fire with probabilities given per offset; offsets outside `probs` are
/// negative predictions.
fn fire_log(fire: &str, first_hit: Option<i32>) -> Vec<PredictionRow> {
    (-39..40)
        .map(|o| {
            let p = match first_hit {
                Some(h) if o >= h => 0.9,
                _ => 0.1,
            };
            row(fire, o, p, o >= 0)
        })
        .collect()
}

fn run(arm: &str, seed: u64, f1: f64, ttd: Option<f64>) -> RunMetrics {
    RunMetrics {
        arm: arm.into(),
        seed,
        accuracy: f1,
        precision: f1,
        recall: f1,
        f1,
        ttd_mean: ttd,
        ttd_sd: ttd.map(|_| 0.0),
        censored_fire_count: 0,
        fire_count: 1,
    }
}

#[test]
fn perfect_positives() {
    let log = PredictionLog::new((0..5).map(|i| row("a", i, 1.0, true)).collect()).unwrap();
    assert_eq!(
        confusion_counts(&log, 0.5).unwrap(),
        ConfusionCounts {
            tp: 5,
            fp: 0,
            tn: 0,
            fn_: 0
        }
    );
}

#[test]
fn probabilities_equal_to_labels_are_error_free() {
    let log = PredictionLog::new((0..6).map(|i| row("a", i, f64::from(i % 2), i % 2 == 1)).collect()).unwrap();
    let c = confusion_counts(&log, 0.5).unwrap();
    assert_eq!(c.fp + c.fn_, 0);
    assert_eq!(prf_metrics(&c), PrfMetrics { accuracy: 1.0, precision: 1.0, recall: 1.0, f1: 1.0 });
}

#[test]
fn ten_row_fixture() {
    // (p, label): TP at 0.9/0.5, FP at 0.7, FN at 0.2, the rest TN.
    let rows = [
        (0.9, true),
        (0.5, true),
        (0.7, false),
        (0.2, true),
        (0.1, false),
        (0.3, false),
        (0.49, false),
        (0.0, false),
        (0.05, false),
        (0.4, false),
    ];
    let log = PredictionLog::new(rows.iter().enumerate().map(|(i, &(p, y))| row("f", i as i32, p, y)).collect()).unwrap();
    let c = confusion_counts(&log, 0.5).unwrap();
    assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, tn: 6, fn_: 1 });
    let m = prf_metrics(&c);
    assert!((m.accuracy - 0.8).abs() < 1e-12);
    assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn degenerate_denominators() {
    let m = prf_metrics(&ConfusionCounts { tp: 0, fp: 0, tn: 3, fn_: 2 });
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    assert!((m.accuracy - 0.6).abs() < 1e-12);
}

#[test]
fn log_validation() {
    assert!(PredictionLog::new(vec![row("a", 0, 1.2, true)]).is_err());
    assert!(PredictionLog::new(vec![row("a", 0, 0.2, true), row("a", 0, 0.3, true)]).is_err());
    assert!(confusion_counts(&PredictionLog::default(), 0.5).is_err());
    let log = PredictionLog::new(vec![row("a", 0, 0.2, true)]).unwrap();
    assert!(confusion_counts(&log, 1.0).is_err());
}

#[test]
fn detection_times() {
    let mut rows = fire_log("a", Some(0));
    rows.extend(fire_log("b", Some(3)));
    rows.extend(fire_log("c", None));
    rows.extend(fire_log("d", Some(-10)));
    let t = time_to_detection(&PredictionLog::new(rows).unwrap(), 0.5, 40).unwrap();
    assert_eq!(t.per_fire["a"], Some(0));
    assert_eq!(t.per_fire["b"], Some(3));
    assert_eq!(t.per_fire["c"], None);
    assert_eq!(t.per_fire["d"], Some(0));
    assert_eq!(t.censored, 1);
    assert_eq!(t.mean, Some(1.0));
    assert!((t.sd.unwrap() - 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn missing_positive_frames_name_the_fire() {
    let rows: Vec<_> = fire_log("gap", Some(5)).into_iter().filter(|r| r.minute_offset != 17).collect();
    let err = time_to_detection(&PredictionLog::new(rows).unwrap(), 0.5, 40).unwrap_err().to_string();
    assert!(err.contains("gap") && err.contains("17"), "{err}");
}

#[test]
fn all_censored_has_no_mean() {
    let t = time_to_detection(&PredictionLog::new(fire_log("x", None)).unwrap(), 0.5, 40).unwrap();
    assert_eq!((t.mean, t.censored), (None, 1));
}

#[test]
fn aggregation_of_runs() {
    let one = aggregate_runs(&[run("a", 0, 0.7, Some(3.0))]).unwrap();
    assert_eq!(one.f1.sd, 0.0);
    let two = aggregate_runs(&[run("a", 0, 0.7, Some(3.0)), run("a", 1, 0.8, None)]).unwrap();
    assert!((two.f1.mean - 0.75).abs() < 1e-12);
    assert!((two.f1.sd - 0.070_710_678_118_654_75).abs() < 1e-12);
    assert_eq!(two.ttd.unwrap().mean, 3.0);
    let same: Vec<_> = (0..8).map(|s| run("a", s, 0.6, Some(2.0))).collect();
    let r = aggregate_runs(&same).unwrap();
    assert_eq!((r.accuracy.sd, r.precision.sd, r.recall.sd, r.f1.sd, r.ttd.unwrap().sd), (0.0, 0.0, 0.0, 0.0, 0.0));
    assert!(aggregate_runs(&[]).is_err());
    assert!(aggregate_runs(&[run("a", 0, 0.5, None), run("b", 0, 0.5, None)]).is_err());
}

#[test]
fn table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let reports: Vec<MetricsReport> = ["baseline", "random_weather", "real_weather"]
        .iter()
        .enumerate()
        .map(|(i, arm)| {
            aggregate_runs(&[
                run(arm, 0, 0.1 + 0.123_456_789 * i as f64, Some(1.0 / 3.0)),
                run(arm, 1, 0.7 / 3.0, if i == 2 { None } else { Some(2.5) }),
            ])
            .unwrap()
        })
        .collect();
    let (t, r) = (dir.path().join("t.csv"), dir.path().join("r.csv"));
    write_table(&t, &reports).unwrap();
    write_runs(&r, &reports).unwrap();
    let back = read_table(&t, &r).unwrap();
    assert_eq!(back, reports);
    let text = std::fs::read_to_string(&t).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 13);
}

#[test]
fn tampered_tables_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let reports = vec![aggregate_runs(&[run("baseline", 0, 0.5, Some(1.0))]).unwrap()];
    let (t, r) = (dir.path().join("t.csv"), dir.path().join("r.csv"));
    write_table(&t, &reports).unwrap();
    write_runs(&r, &reports).unwrap();
    let text = std::fs::read_to_string(&t).unwrap().replace(",0.5,", ",0.6,");
    std::fs::write(&t, text).unwrap();
    assert!(read_table(&t, &r).is_err());
}

#[test]
fn prediction_log_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("log.csv");
    let log = PredictionLog::new(vec![row("a", -3, 0.123_456_789_012_345_67, false), row("b", 4, 1.0 / 3.0, true)]).unwrap();
    log.write_csv(&p).unwrap();
    assert_eq!(PredictionLog::read_csv(&p).unwrap(), log);
    assert_eq!(
        std::fs::read_to_string(&p).unwrap().lines().next().unwrap(),
        "fire_id,minute_offset,image_probability,image_label"
    );
}

#[test]
fn prediction_file_names() {
    for arm in Arm::ALL {
        assert_eq!(parse_prediction_file(&prediction_file(arm, 17)), Some((arm, 17)));
    }
    assert_eq!(parse_prediction_file("table.csv"), None);
}

#[test]
fn plots_are_svg() {
    let reports = vec![aggregate_runs(&[run("baseline", 0, 0.5, Some(1.0))]).unwrap()];
    let svg = metric_distributions_svg(&reports);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let h = ttd_histogram_svg(&[("a".into(), vec![0, 1, 5, 39], 2)], 40, 2);
    assert!(h.contains("2 undetected"));
}

fn arb_log() -> impl Strategy<Value = PredictionLog> {
    proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 79), 1..6).prop_map(|fires| {
        let rows = fires
            .iter()
            .enumerate()
            .flat_map(|(f, probs)| {
                probs
                    .iter()
                    .enumerate()
                    .map(move |(i, &p)| row(&format!("fire{f}"), i as i32 - 39, p, i >= 39))
            })
            .collect();
        PredictionLog::new(rows).unwrap()
    })
}

proptest! {
    #[test]
    fn metrics_match_brute_force(log in arb_log(), threshold in 0.05f64..0.95) {
        let c = confusion_counts(&log, threshold).unwrap();
        let mut tp = 0.0; let mut fp = 0.0; let mut tn = 0.0; let mut fneg = 0.0;
        for r in &log.rows {
            let pred = r.image_probability >= threshold;
            if pred && r.image_label { tp += 1.0 } else if pred { fp += 1.0 } else if r.image_label { fneg += 1.0 } else { tn += 1.0 }
        }
        let m = prf_metrics(&c);
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rc = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        let f1 = if p + rc > 0.0 { 2.0 * p * rc / (p + rc) } else { 0.0 };
        prop_assert!((m.accuracy - (tp + tn) / (tp + tn + fp + fneg)).abs() < 1e-12);
        prop_assert!((m.precision - p).abs() < 1e-12);
        prop_assert!((m.recall - rc).abs() < 1e-12);
        prop_assert!((m.f1 - f1).abs() < 1e-12);
    }

    #[test]
    fn ttd_matches_a_scan_and_is_monotone(log in arb_log(), t1 in 0.05f64..0.95, t2 in 0.05f64..0.95) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a = time_to_detection(&log, lo, 40).unwrap();
        let b = time_to_detection(&log, hi, 40).unwrap();
        for (fire, hit) in &a.per_fire {
            let mut scan = None;
            for o in 0..40 {
                let r = log.rows.iter().find(|r| &r.fire_id == fire && r.minute_offset == o).unwrap();
                if r.image_probability >= lo { scan = Some(o); break; }
            }
            prop_assert_eq!(*hit, scan);
            let later = b.per_fire[fire];
            match (hit, later) {
                (Some(x), Some(y)) => prop_assert!(y >= *x),
                (None, Some(_)) => prop_assert!(false, "raising the threshold detected a censored fire"),
                _ => {}
            }
        }
    }

    #[test]
    fn aggregates_match_recomputation(f1s in proptest::collection::vec(0.0f64..1.0, 1..10)) {
        let runs: Vec<_> = f1s.iter().enumerate().map(|(i, &f)| run("a", i as u64, f, Some(f * 10.0))).collect();
        let r = aggregate_runs(&runs).unwrap();
        let n = f1s.len() as f64;
        let mean = f1s.iter().sum::<f64>() / n;
        let sd = if f1s.len() == 1 { 0.0 } else { (f1s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
        prop_assert!((r.f1.mean - mean).abs() < 1e-12);
        prop_assert!((r.f1.sd - sd).abs() < 1e-12);
        prop_assert!((r.ttd.unwrap().mean - 10.0 * mean).abs() < 1e-12);
    }
}
