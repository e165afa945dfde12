//! Fire sequences, frame/weather alignment, sample pairing and splits.

mod split;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{
    label_tiles, normalize_image, resize_crop, resize_crop_mask, tile_image, GroundTruthMask, ImageNorm,
    PreparedImage, RawFrame, TileGrid, TilingSpec, FIRST_OFFSET, LAST_OFFSET,
};
use crate::weather::{
    filter_attributes_pooled, CameraPose, NormStats, TimeWindow, WeatherPipeline, WeatherVector, FUSED_ATTRIBUTES,
};

pub use split::{make_splits, split_counts, DatasetSplit, Split, SplitRequest, REFERENCE_FRACTIONS};

pub const FRAMES_PER_FIRE: usize = (LAST_OFFSET - FIRST_OFFSET + 1) as usize;
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const WEATHER_DIR: &str = "weather";
/// Largest fraction of missing records tolerated for a fused attribute.
pub const DEFAULT_MAX_MISSING: f64 = 0.05;

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub fire_id: String,
    pub camera_id: String,
    pub ignition: DateTime<Utc>,
    pub latitude: f64,
    pub longitude: f64,
    pub view_azimuth: f64,
    pub field_of_view: Option<f64>,
    pub split: Option<Split>,
}

impl ManifestEntry {
    pub fn camera(&self) -> CameraPose {
        CameraPose {
            camera_id: self.camera_id.clone(),
            latitude: self.latitude,
            longitude: self.longitude,
            view_azimuth: self.view_azimuth,
            field_of_view: self.field_of_view,
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = crate::error::csv_reader(path)?;
    let entries = r
        .deserialize::<ManifestEntry>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut ids: Vec<&str> = entries.iter().map(|e| e.fire_id.as_str()).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::parse(path, format!("fire {} listed twice", w[0])));
    }
    for e in &entries {
        e.camera().validate()?;
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = crate::error::csv_writer(path)?;
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Split recorded in the manifest, if every row has one.
pub fn manifest_split(entries: &[ManifestEntry]) -> Option<DatasetSplit> {
    let mut s = DatasetSplit::default();
    for e in entries {
        match e.split? {
            Split::Train => s.train.push(e.fire_id.clone()),
            Split::Val => s.val.push(e.fire_id.clone()),
            Split::Test => s.test.push(e.fire_id.clone()),
        }
    }
    Some(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireSequence {
    pub fire_id: String,
    pub camera: CameraPose,
    pub ignition: DateTime<Utc>,
    /// Ordered by offset, one per minute from −40 to +39.
    pub frames: Vec<RawFrame>,
    /// Raw-resolution smoke masks, parallel to `frames`.
    pub masks: Vec<Option<GrayImage>>,
}

impl FireSequence {
    pub fn frame_time(&self, offset: i32) -> DateTime<Utc> {
        self.ignition + Duration::minutes(offset as i64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != self.masks.len() {
            return Err(Error::Dataset(format!("{}: frame/mask count mismatch", self.fire_id)));
        }
        check_offsets(&self.fire_id, self.frames.iter().map(|f| f.minute_offset))?;
        if let Some(f) = self.frames.iter().find(|f| f.label != (f.minute_offset >= 0)) {
            return Err(Error::Dataset(format!(
                "{}: frame {:+} label disagrees with its offset",
                self.fire_id, f.minute_offset
            )));
        }
        Ok(())
    }
}

fn check_offsets(fire_id: &str, offsets: impl Iterator<Item = i32>) -> Result<()> {
    let mut count: BTreeMap<i32, usize> = BTreeMap::new();
    let mut out_of_range = Vec::new();
    for o in offsets {
        if (FIRST_OFFSET..=LAST_OFFSET).contains(&o) {
            *count.entry(o).or_default() += 1;
        } else {
            out_of_range.push(o);
        }
    }
    let missing: Vec<String> = (FIRST_OFFSET..=LAST_OFFSET)
        .filter(|o| !count.contains_key(o))
        .map(fmt_offset)
        .collect();
    let dup: Vec<String> = count.iter().filter(|(_, &n)| n > 1).map(|(o, _)| fmt_offset(*o)).collect();
    let mut problems = Vec::new();
    if !missing.is_empty() {
        problems.push(format!("missing offsets {}", missing.join(", ")));
    }
    if !dup.is_empty() {
        problems.push(format!("duplicate offsets {}", dup.join(", ")));
    }
    if !out_of_range.is_empty() {
        problems.push(format!("offsets out of range {out_of_range:?}"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Dataset(format!("fire {fire_id}: {}", problems.join("; "))))
    }
}

/// `+07`-style two-digit rendering used in messages.
pub fn fmt_offset(o: i32) -> String {
    format!("{o:+03}")
}

/// File stem for a frame, e.g. `cam1_-040`.
pub fn frame_stem(camera_id: &str, offset: i32) -> String {
    let sign = if offset < 0 { '-' } else { '+' };
    format!("{camera_id}_{sign}{:03}", offset.abs())
}

fn parse_frame_name(camera_id: &str, name: &str) -> Option<(i32, bool)> {
    let rest = name.strip_prefix(camera_id)?.strip_prefix('_')?;
    let (stem, is_mask) = match rest.strip_suffix("_mask.png") {
        Some(s) => (s, true),
        None => {
            let lower = rest.to_ascii_lowercase();
            let ext = [".jpg", ".jpeg", ".png"].into_iter().find(|e| lower.ends_with(e))?;
            (&rest[..rest.len() - ext.len()], false)
        }
    };
    let sign = match stem.as_bytes().first()? {
        b'+' => 1,
        b'-' => -1,
        _ => return None,
    };
    let digits = &stem[1..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((sign * digits.parse::<i32>().ok()?, is_mask))
}

/// Reads `<root>/<fire_id>/<camera_id>_<±MMM>.jpg` frames and optional
/// `_mask.png` siblings.
pub fn load_fire_sequence(entry: &ManifestEntry, root: &Path) -> Result<FireSequence> {
    let dir = root.join(&entry.fire_id);
    let listing = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut frames: Vec<(i32, PathBuf)> = Vec::new();
    let mut masks: BTreeMap<i32, PathBuf> = BTreeMap::new();
    for item in listing {
        let path = item.map_err(|e| Error::io(&dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        match parse_frame_name(&entry.camera_id, name) {
            Some((o, true)) => {
                if masks.insert(o, path.clone()).is_some() {
                    return Err(Error::Dataset(format!(
                        "fire {}: duplicate masks for offset {}",
                        entry.fire_id,
                        fmt_offset(o)
                    )));
                }
            }
            Some((o, false)) => frames.push((o, path)),
            None => {}
        }
    }
    check_offsets(&entry.fire_id, frames.iter().map(|f| f.0))?;
    frames.sort_by_key(|f| f.0);

    let mut raw = Vec::with_capacity(frames.len());
    let mut mask_imgs = Vec::with_capacity(frames.len());
    for (o, path) in frames {
        let img = image::open(&path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        raw.push(RawFrame::new(&entry.camera_id, o, img)?);
        mask_imgs.push(match masks.get(&o) {
            Some(p) => Some(
                image::open(p)
                    .map_err(|e| Error::Image(format!("{}: {e}", p.display())))?
                    .to_luma8(),
            ),
            None => None,
        });
    }
    let seq = FireSequence {
        fire_id: entry.fire_id.clone(),
        camera: entry.camera(),
        ignition: entry.ignition,
        frames: raw,
        masks: mask_imgs,
    };
    seq.validate()?;
    Ok(seq)
}

/// Writes frames and masks in the directory layout read by
/// [`load_fire_sequence`].
pub fn write_fire_sequence(seq: &FireSequence, root: &Path, format: FrameFormat) -> Result<()> {
    let dir = root.join(&seq.fire_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (f, m) in seq.frames.iter().zip(&seq.masks) {
        let stem = frame_stem(&seq.camera.camera_id, f.minute_offset);
        let path = dir.join(format!("{stem}.{}", format.extension()));
        match format {
            FrameFormat::Jpeg => {
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                let mut enc = image::codecs::jpeg::JpegEncoder::new_with_quality(std::io::BufWriter::new(file), 95);
                enc.encode_image(&f.pixels)?;
            }
            FrameFormat::Png => f.pixels.save(&path)?,
        }
        if let Some(m) = m {
            m.save(dir.join(format!("{stem}_mask.png")))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    #[default]
    Jpeg,
    Png,
}

impl FrameFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            FrameFormat::Jpeg => "jpg",
            FrameFormat::Png => "png",
        }
    }
}

/// One frame at model resolution: raw pixels and mask for augmentation, and
/// the normalized tile grid with tile labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    pub image: PreparedImage,
    pub mask: GroundTruthMask,
    pub grid: TileGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FramePrep {
    pub tiling: TilingSpec,
    pub norm: ImageNorm,
    pub min_overlap_px: usize,
}

impl Default for FramePrep {
    fn default() -> Self {
        Self {
            tiling: TilingSpec::full_scale(),
            norm: ImageNorm::default(),
            min_overlap_px: 1,
        }
    }
}

impl FramePrep {
    /// Normalize, tile and label an image at model resolution.
    pub fn grid(&self, image: &PreparedImage, mask: &GroundTruthMask) -> Result<TileGrid> {
        let mut grid = tile_image(&normalize_image(image, &self.norm)?, &self.tiling)?;
        grid.labels = label_tiles(&grid, mask, self.min_overlap_px)?;
        Ok(grid)
    }

    pub fn frame(&self, raw: &RawFrame, mask: Option<&GrayImage>) -> Result<PreparedFrame> {
        let image = resize_crop(raw, &self.tiling)?;
        let mask = match mask {
            Some(m) => resize_crop_mask(m, &self.tiling)?,
            None if raw.label => {
                return Err(Error::Dataset(format!(
                    "camera {} frame {} is positive but has no mask",
                    raw.camera_id,
                    fmt_offset(raw.minute_offset)
                )))
            }
            None => GroundTruthMask::empty(self.tiling.height(), self.tiling.width()),
        };
        let grid = self.grid(&image, &mask)?;
        Ok(PreparedFrame { image, mask, grid })
    }
}

#[derive(Debug, Clone)]
pub struct PreparedSequence {
    pub fire_id: String,
    pub ignition: DateTime<Utc>,
    pub frames: Vec<Arc<PreparedFrame>>,
}

pub fn prepare_sequence(seq: &FireSequence, prep: &FramePrep) -> Result<PreparedSequence> {
    seq.validate()?;
    let frames = seq
        .frames
        .iter()
        .zip(&seq.masks)
        .map(|(f, m)| {
            prep.frame(f, m.as_ref())
                .map(Arc::new)
                .map_err(|e| Error::Dataset(format!("fire {}: {e}", seq.fire_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSequence {
        fire_id: seq.fire_id.clone(),
        ignition: seq.ignition,
        frames,
    })
}

/// One weather vector per frame at `ignition + offset`. Raw vectors when
/// `stats` is `None`.
pub fn align_weather_to_frames(
    seq: &FireSequence,
    pipeline: &WeatherPipeline,
    stats: Option<&NormStats>,
) -> Result<Vec<WeatherVector>> {
    seq.frames
        .iter()
        .map(|f| {
            let t = seq.frame_time(f.minute_offset);
            let v = match stats {
                Some(s) => pipeline.build(&seq.camera, t, s),
                None => pipeline.raw_vector(&seq.camera, t),
            };
            v.map_err(|e| {
                Error::Dataset(format!(
                    "fire {} frame {} ({t}): {e}",
                    seq.fire_id,
                    fmt_offset(f.minute_offset)
                ))
            })
        })
        .collect()
}

/// A (previous, current) frame pair with the current frame's weather.
#[derive(Debug, Clone)]
pub struct AlignedSample {
    pub fire_id: String,
    pub offset: i32,
    /// Capture time of the current frame.
    pub time: DateTime<Utc>,
    pub previous: Arc<PreparedFrame>,
    pub current: Arc<PreparedFrame>,
    pub weather: Option<WeatherVector>,
    pub image_label: bool,
    pub tile_labels: Vec<bool>,
}

/// Consecutive pairs; the first frame has no predecessor and yields no
/// sample.
pub fn pair_consecutive_frames(seq: &PreparedSequence, weather: Option<&[WeatherVector]>) -> Result<Vec<AlignedSample>> {
    if let Some(w) = weather {
        if w.len() != seq.frames.len() {
            return Err(Error::Dataset(format!(
                "fire {}: {} weather vectors for {} frames",
                seq.fire_id,
                w.len(),
                seq.frames.len()
            )));
        }
    }
    Ok(seq
        .frames
        .windows(2)
        .enumerate()
        .map(|(i, pair)| {
            let cur = &pair[1];
            AlignedSample {
                fire_id: seq.fire_id.clone(),
                offset: cur.grid.minute_offset,
                time: seq.ignition + Duration::minutes(i64::from(cur.grid.minute_offset)),
                previous: pair[0].clone(),
                current: cur.clone(),
                weather: weather.map(|w| w[i + 1].clone()),
                image_label: cur.grid.minute_offset >= 0,
                tile_labels: cur.grid.labels.clone(),
            }
        })
        .collect())
}

/// Aligned samples for every split plus the weather statistics fitted on the
/// training fires.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub split: DatasetSplit,
    pub train: Vec<AlignedSample>,
    pub val: Vec<AlignedSample>,
    pub test: Vec<AlignedSample>,
    pub weather_stats: Option<NormStats>,
    pub prep: FramePrep,
}

impl PreparedCorpus {
    pub fn samples(&self, split: Split) -> &[AlignedSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Builds the corpus. Frames are prepared once per fire; weather is checked
/// for attribute completeness, aligned, and z-scored with training-split
/// statistics.
pub fn build_corpus(
    sequences: &[FireSequence],
    split: &DatasetSplit,
    pipeline: Option<&WeatherPipeline>,
    prep: &FramePrep,
    max_missing_fraction: f64,
) -> Result<PreparedCorpus> {
    let leaks = split.leaks();
    if !leaks.is_empty() {
        return Err(Error::Dataset(format!("fires in more than one split: {}", leaks.join(", "))));
    }
    let mut raw_weather: Vec<Option<Vec<WeatherVector>>> = Vec::with_capacity(sequences.len());
    for seq in sequences {
        if split.split_of(&seq.fire_id).is_none() {
            return Err(Error::Dataset(format!("fire {} is not assigned to a split", seq.fire_id)));
        }
        raw_weather.push(match pipeline {
            Some(p) => {
                check_weather_attributes(seq, p, max_missing_fraction)?;
                Some(align_weather_to_frames(seq, p, None)?)
            }
            None => None,
        });
    }
    let weather_stats = match pipeline {
        Some(_) => {
            let train: Vec<&WeatherVector> = sequences
                .iter()
                .zip(&raw_weather)
                .filter(|(s, _)| split.split_of(&s.fire_id) == Some(Split::Train))
                .flat_map(|(_, w)| w.iter().flatten())
                .collect();
            Some(NormStats::fit(train)?)
        }
        None => None,
    };

    let mut corpus = PreparedCorpus {
        split: split.clone(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        weather_stats,
        prep: *prep,
    };
    for (seq, raw) in sequences.iter().zip(raw_weather) {
        let normalized = match (&raw, &corpus.weather_stats) {
            (Some(r), Some(st)) => Some(
                r.iter()
                    .map(|v| crate::weather::normalize_weather(v, st))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let prepared = prepare_sequence(seq, prep)?;
        let samples = pair_consecutive_frames(&prepared, normalized.as_deref())?;
        match split.split_of(&seq.fire_id).expect("checked above") {
            Split::Train => corpus.train.extend(samples),
            Split::Val => corpus.val.extend(samples),
            Split::Test => corpus.test.extend(samples),
        }
    }
    Ok(corpus)
}

/// Errors when a fused attribute is too sparse at the camera's stations over
/// the sequence window.
fn check_weather_attributes(seq: &FireSequence, pipeline: &WeatherPipeline, max_missing: f64) -> Result<()> {
    let sel = crate::weather::select_stations(&seq.camera, &pipeline.registry, pipeline.stations_per_camera)?;
    let series: Vec<_> = sel
        .station_ids
        .iter()
        .map(|id| {
            pipeline
                .store
                .get(id)
                .cloned()
                .ok_or_else(|| Error::Dataset(format!("fire {}: no series for station {id}", seq.fire_id)))
        })
        .collect::<Result<_>>()?;
    let window = TimeWindow::new(seq.frame_time(FIRST_OFFSET - 10), seq.frame_time(LAST_OFFSET + 10))?;
    let kept = filter_attributes_pooled(&series, window, max_missing)
        .map_err(|e| Error::Dataset(format!("fire {}: {e}", seq.fire_id)))?;
    let dropped: Vec<&str> = FUSED_ATTRIBUTES.iter().copied().filter(|a| !kept.iter().any(|k| k == a)).collect();
    if dropped.is_empty() {
        Ok(())
    } else {
        Err(Error::Dataset(format!(
            "fire {}: attributes {} exceed the missing-data threshold",
            seq.fire_id,
            dropped.join(", ")
        )))
    }
}

/// Corpus directory layout: manifest, frame directories, weather fixtures.
pub fn load_corpus_dir(root: &Path) -> Result<(Vec<ManifestEntry>, Vec<FireSequence>, Option<WeatherPipeline>)> {
    let manifest = read_manifest(&root.join(MANIFEST_FILE))?;
    let sequences = manifest
        .iter()
        .map(|e| load_fire_sequence(e, root))
        .collect::<Result<Vec<_>>>()?;
    let wdir = root.join(WEATHER_DIR);
    let pipeline = if wdir.exists() {
        let (registry, store) = crate::weather::fixture::read_dir(&wdir)?;
        Some(WeatherPipeline::new(registry, store))
    } else {
        None
    };
    Ok((manifest, sequences, pipeline))
}

#[cfg(test)]
mod tests;
