//! Frame preparation: resize/crop, normalization, augmentation and tiling.

mod augment;
mod tiling;

use image::{imageops, imageops::FilterType, GrayImage, ImageBuffer, Luma, Rgb32FImage, RgbImage};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{augment, augment_mask, AugmentParams, AugmentRanges};
pub use tiling::{label_tiles, tile_image, TileGrid, TilingSpec};

/// Earliest and latest minute offsets of a sequence.
pub const FIRST_OFFSET: i32 = -40;
pub const LAST_OFFSET: i32 = 39;

#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub camera_id: String,
    pub minute_offset: i32,
    pub pixels: RgbImage,
    pub label: bool,
}

impl RawFrame {
    /// Label is derived from the offset: smoke is present from ignition on.
    pub fn new(camera_id: impl Into<String>, minute_offset: i32, pixels: RgbImage) -> Result<Self> {
        if !(FIRST_OFFSET..=LAST_OFFSET).contains(&minute_offset) {
            return Err(Error::Image(format!(
                "minute offset {minute_offset} outside [{FIRST_OFFSET}, {LAST_OFFSET}]"
            )));
        }
        Ok(Self {
            camera_id: camera_id.into(),
            minute_offset,
            pixels,
            label: minute_offset >= 0,
        })
    }
}

/// H×W×3 image at the tiling resolution. Values are in `[0, 255]` until
/// [`normalize_image`] is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImage {
    pub pixels: Array3<f32>,
    pub minute_offset: i32,
    pub camera_id: String,
    pub normalized: bool,
}

impl PreparedImage {
    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }
}

/// Binary smoke mask aligned with a [`PreparedImage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    pub mask: Array2<bool>,
}

impl GroundTruthMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            mask: Array2::from_elem((height, width), false),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.mask.dim()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        Self {
            mask: Array2::from_shape_fn((h as usize, w as usize), |(r, c)| img.get_pixel(c as u32, r as u32)[0] >= 128),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        let (h, w) = self.dim();
        ImageBuffer::from_fn(w as u32, h as u32, |c, r| {
            Luma([if self.mask[[r as usize, c as usize]] { 255 } else { 0 }])
        })
    }
}

fn target_height(h: u32, w: u32, target_w: usize) -> usize {
    (h as f64 * target_w as f64 / w as f64).round() as usize
}

/// Resize to the target width preserving aspect ratio, then keep the bottom
/// `spec.height()` rows.
pub fn resize_crop(raw: &RawFrame, spec: &TilingSpec) -> Result<PreparedImage> {
    let (th, tw) = (spec.height(), spec.width());
    let (w, h) = raw.pixels.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Image("empty frame".into()));
    }
    let rh = target_height(h, w, tw);
    if rh < th {
        return Err(Error::Image(format!(
            "{h}x{w} frame resizes to {rh}x{tw}, shorter than the {th} rows required"
        )));
    }
    let resized = if (h as usize, w as usize) == (rh, tw) {
        raw.pixels.clone()
    } else {
        imageops::resize(&raw.pixels, tw as u32, rh as u32, FilterType::Triangle)
    };
    let top = rh - th;
    let pixels = Array3::from_shape_fn((th, tw, 3), |(r, c, k)| {
        resized.get_pixel(c as u32, (r + top) as u32)[k] as f32
    });
    Ok(PreparedImage {
        pixels,
        minute_offset: raw.minute_offset,
        camera_id: raw.camera_id.clone(),
        normalized: false,
    })
}

/// Same geometry as [`resize_crop`] for a mask (nearest-neighbour).
pub fn resize_crop_mask(mask: &GrayImage, spec: &TilingSpec) -> Result<GroundTruthMask> {
    let (th, tw) = (spec.height(), spec.width());
    let (w, h) = mask.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Image("empty mask".into()));
    }
    let rh = target_height(h, w, tw);
    if rh < th {
        return Err(Error::Image(format!("{h}x{w} mask too small for {th}x{tw}")));
    }
    let resized = if (h as usize, w as usize) == (rh, tw) {
        mask.clone()
    } else {
        imageops::resize(mask, tw as u32, rh as u32, FilterType::Nearest)
    };
    let top = (rh - th) as u32;
    let cropped = imageops::crop_imm(&resized, 0, top, tw as u32, th as u32).to_image();
    Ok(GroundTruthMask::from_gray(&cropped))
}

/// Fixed per-channel statistics used by [`normalize_image`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageNorm {
    pub mean: [f32; 3],
    pub sd: [f32; 3],
}

impl Default for ImageNorm {
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            sd: [0.229, 0.224, 0.225],
        }
    }
}

/// `(x/255 - mean) / sd` per channel.
pub fn normalize_image(img: &PreparedImage, norm: &ImageNorm) -> Result<PreparedImage> {
    if img.normalized {
        return Err(Error::Image("image is already normalized".into()));
    }
    if let Some(bad) = img.pixels.iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::Image(format!("pixel value {bad} outside [0, 255]")));
    }
    let mut pixels = img.pixels.clone();
    for mut px in pixels.lanes_mut(ndarray::Axis(2)) {
        for k in 0..3 {
            px[k] = (px[k] / 255.0 - norm.mean[k]) / norm.sd[k];
        }
    }
    Ok(PreparedImage {
        pixels,
        normalized: true,
        ..img.clone()
    })
}

pub fn denormalize_image(img: &PreparedImage, norm: &ImageNorm) -> Result<PreparedImage> {
    if !img.normalized {
        return Err(Error::Image("image is not normalized".into()));
    }
    let mut pixels = img.pixels.clone();
    for mut px in pixels.lanes_mut(ndarray::Axis(2)) {
        for k in 0..3 {
            px[k] = (px[k] * norm.sd[k] + norm.mean[k]) * 255.0;
        }
    }
    Ok(PreparedImage {
        pixels,
        normalized: false,
        ..img.clone()
    })
}

pub(crate) fn to_rgb32f(pixels: &Array3<f32>) -> Rgb32FImage {
    let (h, w, _) = pixels.dim();
    ImageBuffer::from_fn(w as u32, h as u32, |c, r| {
        let (r, c) = (r as usize, c as usize);
        image::Rgb([pixels[[r, c, 0]], pixels[[r, c, 1]], pixels[[r, c, 2]]])
    })
}

pub(crate) fn from_rgb32f(img: &Rgb32FImage) -> Array3<f32> {
    let (w, h) = img.dimensions();
    Array3::from_shape_fn((h as usize, w as usize, 3), |(r, c, k)| img.get_pixel(c as u32, r as u32)[k])
}

/// Quantise a prepared (unnormalized) image back to 8-bit.
pub fn to_rgb8(img: &PreparedImage) -> RgbImage {
    ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |c, r| {
        let px = |k: usize| img.pixels[[r as usize, c as usize, k]].round().clamp(0.0, 255.0) as u8;
        image::Rgb([px(0), px(1), px(2)])
    })
}
