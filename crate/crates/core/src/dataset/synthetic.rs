//! Procedural fire sequences with matching masks and station fixtures.
//!
//! Plumes are soft elliptical blobs that grow and rise from a point on the
//! terrain. With [`Coupling::Discriminative`] the image stream is made
//! ambiguous: the plume's visible onset lags ignition by a random delay, and
//! some fires carry an unlabeled plume-like decoy before ignition that
//! vanishes at ignition. Relative humidity at the camera's stations drops
//! across the ignition time, so weather carries the label.

use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    make_splits, write_fire_sequence, write_manifest, DatasetSplit, FireSequence, FrameFormat, ManifestEntry,
    SplitRequest, MANIFEST_FILE, WEATHER_DIR, build_corpus, FramePrep, PreparedCorpus, DEFAULT_MAX_MISSING,
};
use crate::error::{Error, Result};
use crate::image::{RawFrame, TilingSpec, FIRST_OFFSET, LAST_OFFSET};
use crate::weather::{
    fixture, CameraPose, RawWeatherRecord, StationRegistry, WeatherSeries, WeatherStation, WeatherStore,
    ATTRIBUTE_SCHEMA, NOMINAL_CADENCE_SECS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    #[default]
    None,
    Discriminative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlumeParams {
    /// Radius at visible age zero, pixels.
    pub initial_radius: f64,
    /// Radius growth per minute.
    pub growth: f64,
    pub max_radius: f64,
    pub max_opacity: f64,
    /// Minutes for opacity to reach its maximum.
    pub opacity_ramp: f64,
    pub intensity: f64,
}

impl Default for PlumeParams {
    fn default() -> Self {
        Self {
            initial_radius: 2.5,
            growth: 0.15,
            max_radius: 8.0,
            max_opacity: 0.75,
            opacity_ramp: 2.0,
            intensity: 215.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticWeather {
    pub humidity_base: f64,
    pub humidity_jitter: f64,
    /// Drop in relative humidity across ignition under discriminative coupling.
    pub humidity_drop: f64,
    /// Per-record station noise on relative humidity.
    pub humidity_noise: f64,
    /// Fraction of cells missing in the attributes outside the fused six.
    pub sparse_missing_fraction: f64,
}

impl Default for SyntheticWeather {
    fn default() -> Self {
        Self {
            humidity_base: 45.0,
            humidity_jitter: 2.0,
            humidity_drop: 25.0,
            humidity_noise: 1.0,
            sparse_missing_fraction: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_fires: usize,
    /// Model-resolution geometry; frames are generated at this width.
    pub tiling: TilingSpec,
    /// Rows of sky above the model crop.
    pub sky_rows: usize,
    pub coupling: Coupling,
    pub seed: u64,
    pub plume: PlumeParams,
    /// Fraction of fires with a pre-ignition decoy (discriminative only).
    pub decoy_fraction: f64,
    /// Visible onset delay is uniform on `0..=max_onset_delay` minutes
    /// (discriminative only).
    pub max_onset_delay: i32,
    /// Per-fire multiplicative background brightness range.
    pub brightness_range: [f64; 2],
    pub pixel_noise: f64,
    pub weather: SyntheticWeather,
    pub split_fractions: [f64; 3],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_fires: 20,
            tiling: TilingSpec {
                tile_size: 16,
                stride: 12,
                rows: 2,
                cols: 3,
            },
            sky_rows: 4,
            coupling: Coupling::None,
            seed: 0,
            plume: PlumeParams::default(),
            decoy_fraction: 0.5,
            max_onset_delay: 4,
            brightness_range: [0.55, 1.45],
            pixel_noise: 3.0,
            weather: SyntheticWeather::default(),
            split_fractions: [0.5, 0.25, 0.25],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.tiling.validate()?;
        if self.n_fires == 0 || self.n_fires > 1000 {
            return Err(Error::Dataset("synthetic corpus needs between 1 and 1000 fires".into()));
        }
        if self.tiling.height() < 12 || self.tiling.width() < 12 {
            return Err(Error::Dataset(format!(
                "{}x{} frames are too small to draw plumes",
                self.tiling.height(),
                self.tiling.width()
            )));
        }
        if !(0.0..=1.0).contains(&self.decoy_fraction) || self.max_onset_delay < 0 || self.max_onset_delay > LAST_OFFSET {
            return Err(Error::Dataset("decoy fraction or onset delay out of range".into()));
        }
        if self.brightness_range[0] <= 0.0 || self.brightness_range[1] < self.brightness_range[0] {
            return Err(Error::Dataset("invalid brightness range".into()));
        }
        Ok(())
    }

    pub fn image_height(&self) -> usize {
        self.tiling.height() + self.sky_rows
    }

    pub fn image_width(&self) -> usize {
        self.tiling.width()
    }
}

/// Generator ground truth kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireTruth {
    pub fire_id: String,
    pub onset_delay: i32,
    pub decoy_onset: Option<i32>,
    pub brightness: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub manifest: Vec<ManifestEntry>,
    pub sequences: Vec<FireSequence>,
    pub registry: StationRegistry,
    pub store: WeatherStore,
    pub split: DatasetSplit,
    pub truth: Vec<FireTruth>,
}

impl SyntheticCorpus {
    pub fn pipeline(&self) -> crate::weather::WeatherPipeline {
        crate::weather::WeatherPipeline::new(self.registry.clone(), self.store.clone())
    }

    pub fn frame_prep(&self) -> FramePrep {
        FramePrep {
            tiling: self.spec.tiling,
            ..FramePrep::default()
        }
    }

    /// Aligned samples for the generated split, with weather.
    pub fn prepare(&self) -> Result<PreparedCorpus> {
        self.prepare_with(&self.frame_prep(), DEFAULT_MAX_MISSING)
    }

    pub fn prepare_with(&self, prep: &FramePrep, max_missing_fraction: f64) -> Result<PreparedCorpus> {
        build_corpus(&self.sequences, &self.split, Some(&self.pipeline()), prep, max_missing_fraction)
    }

    /// Writes manifest, frames, masks and weather fixtures under `dir`.
    pub fn write(&self, dir: &Path, format: FrameFormat) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_manifest(&dir.join(MANIFEST_FILE), &self.manifest)?;
        for seq in &self.sequences {
            write_fire_sequence(seq, dir, format)?;
        }
        fixture::write_dir(&dir.join(WEATHER_DIR), &self.registry, &self.store)
    }
}

struct Blob {
    x: f64,
    base_y: f64,
}

impl Blob {
    /// Centre and axis lengths at a given age.
    fn geometry(&self, p: &PlumeParams, age: f64) -> (f64, f64, f64, f64) {
        let r = (p.initial_radius + p.growth * age).min(p.max_radius);
        let cy = self.base_y - 0.6 * r;
        (self.x, cy, r * 0.5, r * 0.65)
    }

    fn opacity(&self, p: &PlumeParams, age: f64) -> f64 {
        p.max_opacity * ((age + 1.0) / p.opacity_ramp.max(1.0)).min(1.0)
    }

    /// Normalised squared distance from the blob centre.
    fn dist2(&self, p: &PlumeParams, age: f64, row: f64, col: f64) -> f64 {
        let (cx, cy, sx, sy) = self.geometry(p, age);
        ((col - cx) / sx).powi(2) + ((row - cy) / sy).powi(2)
    }

    fn alpha(&self, p: &PlumeParams, age: f64, row: f64, col: f64) -> f64 {
        self.opacity(p, age) * (-0.5 * self.dist2(p, age, row, col)).exp()
    }

    /// Geometric extent: within two standard deviations.
    fn covers(&self, p: &PlumeParams, age: f64, row: f64, col: f64) -> bool {
        self.dist2(p, age, row, col) <= 4.0
    }
}

struct FirePlan {
    brightness: f64,
    horizon: usize,
    sky: [f64; 3],
    ground: [f64; 3],
    texture: Vec<f64>,
    plume: Blob,
    onset_delay: i32,
    decoy: Option<(Blob, i32)>,
    smoke: [f64; 3],
}

fn random_blob(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, horizon: usize) -> Blob {
    let w = spec.image_width() as f64;
    let h = spec.image_height() as f64;
    let margin = spec.plume.max_radius * 0.5;
    Blob {
        x: rng.random_range(margin..(w - margin)),
        base_y: rng.random_range((horizon as f64 + 2.0).min(h - 2.0)..(h - 1.0)),
    }
}

fn plan_fire(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> FirePlan {
    let (h, w) = (spec.image_height(), spec.image_width());
    let brightness = rng.random_range(spec.brightness_range[0]..=spec.brightness_range[1]);
    let crop_h = spec.tiling.height();
    let horizon = spec.sky_rows + rng.random_range(crop_h / 5..=crop_h * 2 / 5);
    let sky = [
        rng.random_range(140.0..170.0),
        rng.random_range(160.0..185.0),
        rng.random_range(190.0..215.0),
    ];
    let ground = [
        rng.random_range(70.0..100.0),
        rng.random_range(65.0..90.0),
        rng.random_range(45.0..70.0),
    ];
    // coarse texture upsampled from a quarter-resolution grid
    let (th, tw) = (h.div_ceil(4) + 1, w.div_ceil(4) + 1);
    let coarse: Vec<f64> = (0..th * tw).map(|_| rng.random_range(-12.0..12.0)).collect();
    let texture = (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            coarse[(r / 4) * tw + c / 4]
        })
        .collect();
    let plume = random_blob(rng, spec, horizon);
    let discriminative = spec.coupling == Coupling::Discriminative;
    let onset_delay = if discriminative {
        rng.random_range(0..=spec.max_onset_delay)
    } else {
        0
    };
    let decoy = if discriminative && rng.random_bool(spec.decoy_fraction) {
        let b = random_blob(rng, spec, horizon);
        Some((b, FIRST_OFFSET + rng.random_range(0..=spec.max_onset_delay)))
    } else {
        None
    };
    let g = rng.random_range(200.0..225.0) * spec.plume.intensity / 215.0;
    FirePlan {
        brightness,
        horizon,
        sky,
        ground,
        texture,
        plume,
        onset_delay,
        decoy,
        smoke: [g, g, g + 5.0],
    }
}

fn render_frame(plan: &FirePlan, spec: &SyntheticSpec, offset: i32, rng: &mut ChaCha8Rng) -> (RgbImage, Option<GrayImage>) {
    let (h, w) = (spec.image_height(), spec.image_width());
    let p = &spec.plume;
    let noise = Normal::new(0.0, spec.pixel_noise.max(1e-12)).expect("finite sd");
    let plume_age = (offset >= plan.onset_delay).then(|| (offset - plan.onset_delay) as f64);
    let decoy = plan
        .decoy
        .as_ref()
        .filter(|(_, start)| offset >= *start && offset < 0)
        .map(|(b, start)| (b, (offset - start) as f64));

    let mut img: RgbImage = ImageBuffer::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            let mut px = [0.0; 3];
            for (k, v) in px.iter_mut().enumerate() {
                let base = if r < plan.horizon {
                    plan.sky[k] - 0.8 * (plan.horizon - r) as f64
                } else {
                    plan.ground[k] + plan.texture[r * w + c]
                };
                *v = base * plan.brightness;
            }
            let mut a = 0.0;
            if let Some(age) = plume_age {
                a = plan.plume.alpha(p, age, rf, cf);
            }
            if let Some((b, age)) = decoy {
                a = 1.0 - (1.0 - a) * (1.0 - b.alpha(p, age, rf, cf));
            }
            let mut out = [0u8; 3];
            for k in 0..3 {
                let v = (1.0 - a) * px[k] + a * plan.smoke[k] + noise.sample(rng);
                out[k] = v.round().clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(c as u32, r as u32, Rgb(out));
        }
    }
    let mask = (offset >= 0).then(|| {
        let age = (offset - plan.onset_delay).max(0) as f64;
        ImageBuffer::from_fn(w as u32, h as u32, |c, r| {
            Luma([if plan.plume.covers(p, age, r as f64, c as f64) { 255 } else { 0 }])
        })
    });
    (img, mask)
}

#[derive(Clone, Copy)]
struct StationWeather {
    temperature: f64,
    humidity: f64,
    speed: f64,
    direction: f64,
    dew_point: f64,
    drops: bool,
}

fn station_series(
    id: &str,
    ignition: DateTime<Utc>,
    w: &StationWeather,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) -> Result<WeatherSeries> {
    let cfg = &spec.weather;
    let n_records = 13;
    let start = ignition - Duration::minutes(60);
    let rh_noise = Normal::new(0.0, cfg.humidity_noise.max(1e-12)).expect("finite sd");
    let records = (0..n_records)
        .map(|i| {
            let t = start + Duration::seconds(NOMINAL_CADENCE_SECS * i as i64);
            let after = t >= ignition;
            let mut values: Vec<Option<f64>> = vec![None; ATTRIBUTE_SCHEMA.len()];
            let rh = w.humidity - if after && w.drops { cfg.humidity_drop } else { 0.0 } + rh_noise.sample(rng);
            let speed = (w.speed + rng.random_range(-0.3..0.3)).max(0.0);
            values[0] = Some(w.temperature + rng.random_range(-0.5..0.5));
            values[1] = Some(rh.clamp(1.0, 100.0));
            values[2] = Some(speed);
            values[3] = Some(speed + rng.random_range(1.0..3.0));
            values[4] = Some((w.direction + rng.random_range(-10.0..10.0)).rem_euclid(360.0));
            values[5] = Some(w.dew_point + rng.random_range(-0.3..0.3));
            for (a, v) in values.iter_mut().enumerate().skip(6) {
                if !rng.random_bool(cfg.sparse_missing_fraction.clamp(0.0, 1.0)) {
                    *v = Some(100.0 * a as f64 + rng.random_range(0.0..10.0));
                }
            }
            RawWeatherRecord {
                station_id: id.to_string(),
                timestamp: t,
                values,
            }
        })
        .collect();
    WeatherSeries::new(
        id,
        ATTRIBUTE_SCHEMA.iter().map(|s| s.to_string()).collect(),
        records,
        NOMINAL_CADENCE_SECS,
    )
}

fn offset_point(lat: f64, lon: f64, bearing_deg: f64, km: f64) -> (f64, f64) {
    let b = bearing_deg.to_radians();
    let dlat = km * b.cos() / 111.195;
    let dlon = km * b.sin() / (111.195 * lat.to_radians().cos());
    (lat + dlat, lon + dlon)
}

/// Deterministic corpus for `spec`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let epoch = Utc.with_ymd_and_hms(2019, 6, 1, 0, 0, 0).single().expect("valid date");

    let mut manifest = Vec::with_capacity(spec.n_fires);
    let mut sequences = Vec::with_capacity(spec.n_fires);
    let mut stations = Vec::new();
    let mut series = Vec::new();
    let mut truth = Vec::new();
    for i in 0..spec.n_fires {
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let fire_id = format!("synth_{i:04}");
        let camera_id = format!("cam{i:04}");
        let ignition = epoch + Duration::days(i as i64) + Duration::minutes(10 * rng.random_range(48i64..108));
        let camera = CameraPose {
            camera_id: camera_id.clone(),
            // cameras sit on a 0.5-degree grid so stations never mix across fires
            latitude: 30.0 + 0.5 * (i / 16) as f64 + rng.random_range(-0.05..0.05),
            longitude: -124.0 + 0.5 * (i % 16) as f64 + rng.random_range(-0.05..0.05),
            view_azimuth: rng.random_range(0.0..360.0),
            field_of_view: Some(110.0),
        };

        let plan = plan_fire(&mut rng, spec);
        let mut frames = Vec::with_capacity(80);
        let mut masks = Vec::with_capacity(80);
        for o in FIRST_OFFSET..=LAST_OFFSET {
            let (img, mask) = render_frame(&plan, spec, o, &mut rng);
            frames.push(RawFrame::new(&camera_id, o, img)?);
            masks.push(mask);
        }

        let cfg = &spec.weather;
        let local = StationWeather {
            temperature: rng.random_range(15.0..35.0),
            humidity: cfg.humidity_base + rng.random_range(-cfg.humidity_jitter..=cfg.humidity_jitter),
            speed: rng.random_range(1.0..6.0),
            direction: rng.random_range(0.0..360.0),
            dew_point: rng.random_range(0.0..15.0),
            drops: spec.coupling == Coupling::Discriminative,
        };
        // three stations ahead of the camera, one closer behind it
        for j in 0..4 {
            let (bearing, km) = if j < 3 {
                (camera.view_azimuth + rng.random_range(-40.0..40.0), rng.random_range(2.0..15.0))
            } else {
                (camera.view_azimuth + 180.0 + rng.random_range(-30.0..30.0), rng.random_range(0.5..1.5))
            };
            let (lat, lon) = offset_point(camera.latitude, camera.longitude, bearing, km);
            let sid = format!("{camera_id}_ws{j}");
            stations.push(WeatherStation {
                station_id: sid.clone(),
                latitude: lat,
                longitude: lon,
                elevation: Some(rng.random_range(100.0..1800.0)),
                network: ["HPWREN", "SDGE", "SCE"][j % 3].to_string(),
            });
            let w = if j < 3 {
                StationWeather { ..local }
            } else {
                StationWeather {
                    humidity: rng.random_range(20.0..70.0),
                    drops: false,
                    ..local
                }
            };
            series.push(station_series(&sid, ignition, &w, spec, &mut rng)?);
        }

        truth.push(FireTruth {
            fire_id: fire_id.clone(),
            onset_delay: plan.onset_delay,
            decoy_onset: plan.decoy.as_ref().map(|d| d.1),
            brightness: plan.brightness,
        });
        manifest.push(ManifestEntry {
            fire_id: fire_id.clone(),
            camera_id: camera_id.clone(),
            ignition,
            latitude: camera.latitude,
            longitude: camera.longitude,
            view_azimuth: camera.view_azimuth,
            field_of_view: camera.field_of_view,
            split: None,
        });
        sequences.push(FireSequence {
            fire_id,
            camera,
            ignition,
            frames,
            masks,
        });
    }

    let ids: Vec<String> = manifest.iter().map(|e| e.fire_id.clone()).collect();
    let split = make_splits(&ids, &SplitRequest::Fractions(spec.split_fractions), spec.seed)?;
    for e in &mut manifest {
        e.split = split.split_of(&e.fire_id);
    }

    Ok(SyntheticCorpus {
        spec: spec.clone(),
        manifest,
        sequences,
        registry: StationRegistry::new(stations)?,
        store: WeatherStore::new(series)?,
        split,
        truth,
    })
}
