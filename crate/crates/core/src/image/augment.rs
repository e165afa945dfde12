use image::{imageops, imageops::FilterType};
use ndarray::{s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{from_rgb32f, to_rgb32f, GroundTruthMask, PreparedImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentRanges {
    pub flip_probability: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Additive brightness shift bound, as a fraction of 255.
    pub brightness: f64,
    /// Contrast factor is drawn from `1 ± contrast`.
    pub contrast: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            scale_min: 0.9,
            scale_max: 1.0,
            brightness: 0.05,
            contrast: 0.1,
        }
    }
}

/// One draw of augmentation parameters. Applying the same parameters to the
/// previous frame, the current frame and the mask keeps them aligned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub flip: bool,
    pub scale: f64,
    pub brightness: f32,
    pub contrast: f32,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            flip: false,
            scale: 1.0,
            brightness: 0.0,
            contrast: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn sample(seed: u64, ranges: &AugmentRanges) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flip = rng.random_bool(ranges.flip_probability.clamp(0.0, 1.0));
        let scale = if ranges.scale_max > ranges.scale_min {
            rng.random_range(ranges.scale_min..=ranges.scale_max)
        } else {
            ranges.scale_min
        };
        let b = ranges.brightness * 255.0;
        let brightness = if b > 0.0 { rng.random_range(-b..=b) as f32 } else { 0.0 };
        let contrast = if ranges.contrast > 0.0 {
            rng.random_range(1.0 - ranges.contrast..=1.0 + ranges.contrast) as f32
        } else {
            1.0
        };
        Self {
            flip,
            scale,
            brightness,
            contrast,
        }
    }

    fn scaled_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let sh = ((h as f64 * self.scale).round() as usize).clamp(1, h);
        let sw = ((w as f64 * self.scale).round() as usize).clamp(1, w);
        (sh, sw)
    }
}

/// Placement of the shrunken image: bottom rows, horizontally centred.
fn placement(h: usize, w: usize, sh: usize, sw: usize) -> (usize, usize) {
    (h - sh, (w - sw) / 2)
}

/// Flip, shrink-and-pad, then brightness/contrast jitter. Identity parameters
/// return the input unchanged.
pub fn augment(img: &PreparedImage, params: &AugmentParams) -> PreparedImage {
    if params.is_identity() {
        return img.clone();
    }
    let (h, w, _) = img.pixels.dim();
    let mut px = img.pixels.clone();
    if params.flip {
        px.invert_axis(Axis(1));
    }
    let (sh, sw) = params.scaled_dims(h, w);
    if (sh, sw) != (h, w) {
        // Float resizing clamps to [0, 1], so resample in unit range.
        let lo = px.fold(f32::INFINITY, |a, &b| a.min(b));
        let span = (px.fold(f32::NEG_INFINITY, |a, &b| a.max(b)) - lo).max(f32::EPSILON);
        let unit = px.mapv(|x| (x - lo) / span);
        let small = from_rgb32f(&imageops::resize(&to_rgb32f(&unit), sw as u32, sh as u32, FilterType::Triangle))
            .mapv(|x| x * span + lo);
        let mut fill = [0f32; 3];
        for (k, f) in fill.iter_mut().enumerate() {
            *f = small.index_axis(Axis(2), k).mean().unwrap_or(0.0);
        }
        let mut out = Array3::from_shape_fn((h, w, 3), |(_, _, k)| fill[k]);
        let (r0, c0) = placement(h, w, sh, sw);
        out.slice_mut(s![r0..r0 + sh, c0..c0 + sw, ..]).assign(&small);
        px = out;
    }
    let (lo, hi) = if img.normalized { (f32::MIN, f32::MAX) } else { (0.0, 255.0) };
    let centre = if img.normalized { 0.0 } else { 127.5 };
    px.mapv_inplace(|x| ((x - centre) * params.contrast + centre + params.brightness).clamp(lo, hi));
    PreparedImage {
        pixels: px,
        ..img.clone()
    }
}

/// Geometric part of [`augment`] applied to a mask.
pub fn augment_mask(mask: &GroundTruthMask, params: &AugmentParams) -> GroundTruthMask {
    let (h, w) = mask.dim();
    let mut m = mask.mask.clone();
    if params.flip {
        m.invert_axis(Axis(1));
    }
    let (sh, sw) = params.scaled_dims(h, w);
    if (sh, sw) != (h, w) {
        let gray = GroundTruthMask { mask: m }.to_gray();
        let small = GroundTruthMask::from_gray(&imageops::resize(&gray, sw as u32, sh as u32, FilterType::Nearest));
        let mut out = Array2::from_elem((h, w), false);
        let (r0, c0) = placement(h, w, sh, sw);
        out.slice_mut(s![r0..r0 + sh, c0..c0 + sw]).assign(&small.mask);
        m = out;
    }
    GroundTruthMask { mask: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{label_tiles, tile_image, TilingSpec};

    fn image() -> PreparedImage {
        PreparedImage {
            pixels: Array3::from_shape_fn((28, 40, 3), |(r, c, k)| ((r * 7 + c * 3 + k * 50) % 256) as f32),
            minute_offset: 5,
            camera_id: "c".into(),
            normalized: false,
        }
    }

    #[test]
    fn shrinking_preserves_intensity() {
        let img = PreparedImage {
            pixels: Array3::from_elem((28, 40, 3), 200.0),
            ..image()
        };
        let params = AugmentParams {
            scale: 0.9,
            ..AugmentParams::identity()
        };
        let out = augment(&img, &params);
        assert!(out.pixels.iter().all(|&v| (v - 200.0).abs() < 1e-3));
        let src = image();
        let out = augment(&src, &params);
        let (a, b) = (src.pixels.mean().unwrap(), out.pixels.mean().unwrap());
        assert!((a - b).abs() < 10.0, "{a} vs {b}");
    }

    #[test]
    fn disabled_is_bit_identical() {
        let img = image();
        assert_eq!(augment(&img, &AugmentParams::identity()), img);
    }

    #[test]
    fn same_seed_same_output() {
        let img = image();
        let r = AugmentRanges::default();
        let a = augment(&img, &AugmentParams::sample(42, &r));
        let b = augment(&img, &AugmentParams::sample(42, &r));
        assert_eq!(a, b);
        assert_eq!(a.pixels.dim(), img.pixels.dim());
        assert!(a.pixels.iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn scale_within_bounds_for_many_seeds() {
        let r = AugmentRanges::default();
        let params: Vec<_> = (0..1000).map(|s| AugmentParams::sample(s, &r)).collect();
        assert!(params.iter().all(|p| (0.9..=1.0).contains(&p.scale)));
        let flips = params.iter().filter(|p| p.flip).count();
        assert!((400..600).contains(&flips), "{flips}");
    }

    #[test]
    fn flip_mirrors_tile_columns() {
        let spec = TilingSpec::new(16, 12, 2, 3).unwrap();
        let p = AugmentParams {
            flip: true,
            ..AugmentParams::identity()
        };
        let img = image();
        let flipped = augment(&img, &p);
        let g = tile_image(&img, &spec).unwrap();
        let f = tile_image(&flipped, &spec).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                let mut t = g.tiles.slice(s![r * 3 + c, .., .., ..]).to_owned();
                t.invert_axis(Axis(1));
                assert_eq!(t, f.tiles.slice(s![r * 3 + (2 - c), .., .., ..]));
            }
        }
        let mut mask = GroundTruthMask::empty(28, 40);
        mask.mask[[3, 2]] = true;
        let fl = label_tiles(&f, &augment_mask(&mask, &p), 1).unwrap();
        assert_eq!(fl, vec![false, false, true, false, false, false]);
    }

    #[test]
    fn mask_stays_aligned_under_shrink() {
        let p = AugmentParams {
            scale: 0.9,
            ..AugmentParams::identity()
        };
        let mut mask = GroundTruthMask::empty(28, 40);
        for r in 10..20 {
            for c in 10..20 {
                mask.mask[[r, c]] = true;
            }
        }
        let m = augment_mask(&mask, &p);
        let n = m.count();
        assert!((70..=100).contains(&n), "{n}");
    }
}
