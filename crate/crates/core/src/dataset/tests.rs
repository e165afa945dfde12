use super::synthetic::{generate_synthetic_dataset, Coupling, SyntheticSpec};
use super::*;
use crate::weather::{interpolate_series, select_stations, RawWeatherRecord, StationRegistry, WeatherSeries, WeatherStation, WeatherStore, ATTRIBUTE_SCHEMA};
use chrono::TimeZone;

fn small_spec(coupling: Coupling, n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_fires: n,
        coupling,
        seed,
        ..SyntheticSpec::default()
    }
}

fn toy_prep(spec: &SyntheticSpec) -> FramePrep {
    FramePrep {
        tiling: spec.tiling,
        ..FramePrep::default()
    }
}

#[test]
fn loads_a_complete_sequence_from_disk() {
    let corpus = generate_synthetic_dataset(&small_spec(Coupling::None, 2, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write(dir.path(), FrameFormat::Png).unwrap();
    let (manifest, seqs, pipeline) = load_corpus_dir(dir.path()).unwrap();
    assert_eq!(manifest, corpus.manifest);
    assert!(pipeline.is_some());
    let seq = &seqs[0];
    assert_eq!(seq.frames.len(), 80);
    assert_eq!(seq.frames.iter().filter(|f| f.label).count(), 40);
    assert_eq!(seq.frames.iter().filter(|f| !f.label).count(), 40);
    let zero = seq.frames.iter().find(|f| f.minute_offset == 0).unwrap();
    assert!(zero.label);
    // PNG is lossless, so pixels survive the round trip exactly
    assert_eq!(seq, &corpus.sequences[0]);
}

#[test]
fn missing_offset_is_named() {
    let corpus = generate_synthetic_dataset(&small_spec(Coupling::None, 1, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write(dir.path(), FrameFormat::Jpeg).unwrap();
    let e = &corpus.manifest[0];
    std::fs::remove_file(dir.path().join(&e.fire_id).join(format!("{}.jpg", frame_stem(&e.camera_id, 7)))).unwrap();
    let err = load_fire_sequence(e, dir.path()).unwrap_err().to_string();
    assert!(err.contains("+07"), "{err}");

    // a second file for the same offset
    let src = dir.path().join(&e.fire_id).join(format!("{}.jpg", frame_stem(&e.camera_id, -3)));
    std::fs::copy(&src, dir.path().join(&e.fire_id).join(format!("{}_-3.png", e.camera_id))).unwrap();
    let err = load_fire_sequence(e, dir.path()).unwrap_err().to_string();
    assert!(err.contains("duplicate offsets -03"), "{err}");
}

#[test]
fn frame_names() {
    assert_eq!(frame_stem("c1", -40), "c1_-040");
    assert_eq!(frame_stem("c1", 7), "c1_+007");
    assert_eq!(parse_frame_name("c1", "c1_+007.jpg"), Some((7, false)));
    assert_eq!(parse_frame_name("c1", "c1_-012_mask.png"), Some((-12, true)));
    assert_eq!(parse_frame_name("c1", "c2_+007.jpg"), None);
    assert_eq!(parse_frame_name("c1", "c1_7.jpg"), None);
}

#[test]
fn positive_frame_without_mask_is_rejected() {
    let mut corpus = generate_synthetic_dataset(&small_spec(Coupling::None, 1, 3)).unwrap();
    let prep = toy_prep(&corpus.spec);
    corpus.sequences[0].masks[45] = None;
    assert!(prepare_sequence(&corpus.sequences[0], &prep).is_err());
}

fn ramp_fixture() -> (FireSequence, WeatherPipeline) {
    let t0 = Utc.with_ymd_and_hms(2020, 9, 1, 12, 0, 0).unwrap();
    let corpus = generate_synthetic_dataset(&small_spec(Coupling::None, 1, 4)).unwrap();
    let mut seq = corpus.sequences[0].clone();
    seq.ignition = t0;
    seq.camera.latitude = 33.0;
    seq.camera.longitude = -117.0;
    seq.camera.view_azimuth = 0.0;
    let schema: Vec<String> = ATTRIBUTE_SCHEMA.iter().map(|s| s.to_string()).collect();
    let mut stations = Vec::new();
    let mut series = Vec::new();
    for j in 0..3 {
        let id = format!("S{j}");
        stations.push(WeatherStation {
            station_id: id.clone(),
            latitude: 33.0 + 0.01 * (j + 1) as f64,
            longitude: -117.0,
            elevation: None,
            network: "HPWREN".into(),
        });
        let records = (0..11)
            .map(|i| {
                let m = -50 + 10 * i as i64;
                let mut values = vec![None; 23];
                for (a, v) in values.iter_mut().enumerate().take(6) {
                    // ramp in time; direction kept away from the 0/360 seam
                    *v = Some(if a == 4 { 90.0 + m as f64 } else { 10.0 * a as f64 + 0.1 * m as f64 + 5.0 });
                }
                RawWeatherRecord {
                    station_id: id.clone(),
                    timestamp: t0 + Duration::minutes(m),
                    values,
                }
            })
            .collect();
        series.push(WeatherSeries::new(&id, schema.clone(), records, 600).unwrap());
    }
    let pipeline = WeatherPipeline::new(StationRegistry::new(stations).unwrap(), WeatherStore::new(series).unwrap());
    (seq, pipeline)
}

#[test]
fn weather_alignment_interpolates_each_frame() {
    let (seq, pipeline) = ramp_fixture();
    let raw = align_weather_to_frames(&seq, &pipeline, None).unwrap();
    assert_eq!(raw.len(), 80);
    let sel = select_stations(&seq.camera, &pipeline.registry, 3).unwrap();
    for (f, v) in seq.frames.iter().zip(&raw) {
        let t = seq.frame_time(f.minute_offset);
        assert_eq!(v.timestamp, t);
        let per: Vec<Vec<f64>> = sel
            .station_ids
            .iter()
            .map(|id| interpolate_series(pipeline.store.get(id).unwrap(), &crate::weather::FUSED_ATTRIBUTES, t).unwrap())
            .collect();
        let temp = per.iter().map(|p| p[0]).sum::<f64>() / 3.0;
        assert!((v.values[0] - temp).abs() < 1e-9);
        let m = f.minute_offset as f64;
        assert!((v.values[0] - (5.0 + 0.1 * m)).abs() < 1e-9);
        assert!((v.values[4] - (90.0 + m)).abs() < 1e-9);
    }
}

#[test]
fn constant_weather_gives_identical_vectors() {
    let (seq, mut pipeline) = ramp_fixture();
    let series: Vec<WeatherSeries> = pipeline
        .store
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for r in &mut s.records {
                for (a, v) in r.values.iter_mut().enumerate().take(6) {
                    *v = Some(3.0 + a as f64);
                }
            }
            s
        })
        .collect();
    pipeline.store = WeatherStore::new(series).unwrap();
    let raw = align_weather_to_frames(&seq, &pipeline, None).unwrap();
    assert_eq!(raw.len(), 80);
    assert!(raw.windows(2).all(|w| w[0].values == w[1].values));
}

#[test]
fn coverage_gap_names_the_frame() {
    let (mut seq, pipeline) = ramp_fixture();
    seq.ignition += Duration::minutes(30);
    let err = align_weather_to_frames(&seq, &pipeline, None).unwrap_err().to_string();
    assert!(err.contains("frame +") || err.contains("frame -"), "{err}");
    assert!(err.contains("extrapolation"), "{err}");
}

#[test]
fn pairing_yields_79_samples() {
    let corpus = generate_synthetic_dataset(&small_spec(Coupling::None, 1, 5)).unwrap();
    let seq = &corpus.sequences[0];
    let prepared = prepare_sequence(seq, &toy_prep(&corpus.spec)).unwrap();
    let weather = align_weather_to_frames(seq, &corpus.pipeline(), None).unwrap();
    let samples = pair_consecutive_frames(&prepared, Some(&weather)).unwrap();
    assert_eq!(samples.len(), 79);
    assert_eq!(samples[0].offset, -39);
    let s0 = samples.iter().find(|s| s.offset == 0).unwrap();
    assert!(!s0.previous.image.minute_offset.ge(&0));
    assert!(s0.image_label);
    for s in &samples {
        assert_eq!(s.previous.grid.minute_offset, s.offset - 1);
        assert_eq!(s.weather.as_ref().unwrap().timestamp, seq.frame_time(s.offset));
        assert_eq!(s.tile_labels.len(), 6);
        assert_eq!(s.image_label, s.tile_labels.iter().any(|&t| t));
    }
}

#[test]
fn no_plume_before_ignition_without_coupling() {
    let corpus = generate_synthetic_dataset(&small_spec(Coupling::None, 3, 6)).unwrap();
    for seq in &corpus.sequences {
        for (f, m) in seq.frames.iter().zip(&seq.masks) {
            assert_eq!(m.is_some(), f.minute_offset >= 0);
            if let Some(m) = m {
                assert!(m.pixels().any(|p| p[0] > 0), "empty mask at {}", f.minute_offset);
            }
        }
    }
    assert!(corpus.truth.iter().all(|t| t.onset_delay == 0 && t.decoy_onset.is_none()));
}

#[test]
fn generation_is_byte_identical() {
    let spec = small_spec(Coupling::Discriminative, 3, 7);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec).unwrap().write(a.path(), FrameFormat::Jpeg).unwrap();
    generate_synthetic_dataset(&spec).unwrap().write(b.path(), FrameFormat::Jpeg).unwrap();
    let files = |d: &Path| {
        let mut v: Vec<(PathBuf, Vec<u8>)> = walk(d)
            .into_iter()
            .map(|p| (p.strip_prefix(d).unwrap().to_path_buf(), std::fs::read(&p).unwrap()))
            .collect();
        v.sort();
        v
    };
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() > 3 * 80);
    assert_eq!(fa, fb);
}

fn walk(d: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(d).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn untileable_dims_are_rejected() {
    let mut spec = small_spec(Coupling::None, 1, 0);
    spec.tiling.stride = 20;
    assert!(generate_synthetic_dataset(&spec).is_err());
}

/// Area under the ROC curve by exhaustive pair comparison.
fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
        }
    }
    wins / pairs
}

/// Plain batch-gradient logistic regression.
fn logistic_probe(x: &[[f64; 8]], y: &[bool]) -> Vec<f64> {
    let mut w = [0.0; 9];
    for _ in 0..500 {
        let mut g = [0.0; 9];
        for (xi, &yi) in x.iter().zip(y) {
            let z = w[8] + (0..8).map(|k| w[k] * xi[k]).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - if yi { 1.0 } else { 0.0 };
            for k in 0..8 {
                g[k] += err * xi[k];
            }
            g[8] += err;
        }
        for k in 0..9 {
            w[k] -= 0.5 * g[k] / x.len() as f64;
        }
    }
    x.iter().map(|xi| w[8] + (0..8).map(|k| w[k] * xi[k]).sum::<f64>()).collect()
}

#[test]
fn discriminative_coupling_certified_by_probes() {
    let spec = small_spec(Coupling::Discriminative, 16, 8);
    let corpus = generate_synthetic_dataset(&spec).unwrap();
    let split = DatasetSplit {
        train: corpus.manifest.iter().map(|e| e.fire_id.clone()).collect(),
        ..Default::default()
    };
    let pc = build_corpus(&corpus.sequences, &split, Some(&corpus.pipeline()), &toy_prep(&spec), 0.05).unwrap();
    let labels: Vec<bool> = pc.train.iter().map(|s| s.image_label).collect();
    let x: Vec<[f64; 8]> = pc.train.iter().map(|s| s.weather.as_ref().unwrap().values).collect();
    let weather_auc = auc(&logistic_probe(&x, &labels), &labels);
    let means: Vec<f64> = pc.train.iter().map(|s| s.current.image.pixels.mean().unwrap() as f64).collect();
    let a = auc(&means, &labels);
    let pixel_auc = a.max(1.0 - a);
    assert!(weather_auc > 0.9, "weather probe AUC {weather_auc}");
    assert!(pixel_auc < 0.65, "pixel-mean probe AUC {pixel_auc}");
}

#[test]
fn corpus_uses_training_statistics_only() {
    let spec = small_spec(Coupling::Discriminative, 8, 9);
    let corpus = generate_synthetic_dataset(&spec).unwrap();
    let pc = build_corpus(&corpus.sequences, &corpus.split, Some(&corpus.pipeline()), &toy_prep(&spec), 0.05).unwrap();
    assert_eq!(pc.train.len(), corpus.split.train.len() * 79);
    assert_eq!(pc.val.len() + pc.test.len(), (corpus.split.val.len() + corpus.split.test.len()) * 79);
    let st = pc.weather_stats.as_ref().unwrap();
    let train_seqs: Vec<_> = corpus
        .sequences
        .iter()
        .filter(|s| corpus.split.train.contains(&s.fire_id))
        .collect();
    let raw: Vec<WeatherVector> = train_seqs
        .iter()
        .flat_map(|s| align_weather_to_frames(s, &corpus.pipeline(), None).unwrap())
        .collect();
    let t_mean = raw.iter().map(|v| v.values[0]).sum::<f64>() / raw.len() as f64;
    assert!((st.components["air_temperature"].mean - t_mean).abs() < 1e-9);
    for s in &pc.train {
        assert!(s.weather.as_ref().unwrap().normalized);
        assert_eq!(s.image_label, s.tile_labels.iter().any(|&t| t));
    }
}

#[test]
fn sparse_attributes_fail_the_completeness_check() {
    let spec = small_spec(Coupling::None, 2, 10);
    let corpus = generate_synthetic_dataset(&spec).unwrap();
    let mut pipeline = corpus.pipeline();
    let series: Vec<WeatherSeries> = pipeline
        .store
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for (i, r) in s.records.iter_mut().enumerate() {
                if i % 4 == 0 {
                    r.values[3] = None;
                }
            }
            s
        })
        .collect();
    pipeline.store = WeatherStore::new(series).unwrap();
    let err = build_corpus(&corpus.sequences, &corpus.split, Some(&pipeline), &toy_prep(&spec), 0.05)
        .unwrap_err()
        .to_string();
    assert!(err.contains("wind_gust"), "{err}");
}
