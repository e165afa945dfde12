use ndarray::{s, Array3, Array4};
use serde::{Deserialize, Serialize};

use super::{GroundTruthMask, PreparedImage};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Square tiles laid out on a uniform-stride grid that exactly covers the
/// image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingSpec {
    pub tile_size: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TilingSpec {
    /// 224-px tiles at stride 204 on a 1040×1856 image: 5×9 tiles.
    pub fn full_scale() -> Self {
        Self {
            tile_size: 224,
            stride: 204,
            rows: 5,
            cols: 9,
        }
    }

    pub fn new(tile_size: usize, stride: usize, rows: usize, cols: usize) -> Result<Self> {
        let spec = Self {
            tile_size,
            stride,
            rows,
            cols,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::Image("tiling dimensions must be positive".into()));
        }
        if self.stride == 0 || self.stride > self.tile_size {
            return Err(Error::Image(format!(
                "stride {} must be in 1..={} to cover the image",
                self.stride, self.tile_size
            )));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.tile_size + (self.rows - 1) * self.stride
    }

    pub fn width(&self) -> usize {
        self.tile_size + (self.cols - 1) * self.stride
    }

    pub fn num_tiles(&self) -> usize {
        self.rows * self.cols
    }

    /// Pixel origins `(row, col)` in row-major tile order.
    pub fn origins(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r * self.stride, c * self.stride)))
            .collect()
    }
}

/// Tiles of one image, row-major, shape `[tiles, tile, tile, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub spec: TilingSpec,
    pub tiles: Array4<f32>,
    pub origins: Vec<(usize, usize)>,
    pub labels: Vec<bool>,
    pub minute_offset: i32,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        self.tiles.mapv(f64::from).into_dyn()
    }

    /// Paste tiles back at their origins; later tiles overwrite overlaps.
    pub fn reassemble(&self) -> Array3<f32> {
        let ts = self.spec.tile_size;
        let mut out = Array3::zeros((self.spec.height(), self.spec.width(), 3));
        for (i, &(r, c)) in self.origins.iter().enumerate() {
            out.slice_mut(s![r..r + ts, c..c + ts, ..])
                .assign(&self.tiles.slice(s![i, .., .., ..]));
        }
        out
    }
}

pub fn tile_image(img: &PreparedImage, spec: &TilingSpec) -> Result<TileGrid> {
    spec.validate()?;
    if (img.height(), img.width()) != (spec.height(), spec.width()) {
        return Err(Error::Image(format!(
            "image is {}x{}, tiling expects {}x{}",
            img.height(),
            img.width(),
            spec.height(),
            spec.width()
        )));
    }
    let ts = spec.tile_size;
    let origins = spec.origins();
    let mut tiles = Array4::zeros((origins.len(), ts, ts, 3));
    for (i, &(r, c)) in origins.iter().enumerate() {
        tiles
            .slice_mut(s![i, .., .., ..])
            .assign(&img.pixels.slice(s![r..r + ts, c..c + ts, ..]));
    }
    Ok(TileGrid {
        spec: *spec,
        tiles,
        labels: vec![false; origins.len()],
        origins,
        minute_offset: img.minute_offset,
    })
}

/// A tile is positive when at least `min_overlap_px` mask pixels fall in it.
pub fn label_tiles(grid: &TileGrid, mask: &GroundTruthMask, min_overlap_px: usize) -> Result<Vec<bool>> {
    let spec = grid.spec;
    if mask.dim() != (spec.height(), spec.width()) {
        return Err(Error::Image(format!(
            "mask is {:?}, image is {}x{}",
            mask.dim(),
            spec.height(),
            spec.width()
        )));
    }
    let ts = spec.tile_size;
    Ok(grid
        .origins
        .iter()
        .map(|&(r, c)| {
            let n = mask.mask.slice(s![r..r + ts, c..c + ts]).iter().filter(|&&m| m).count();
            n >= min_overlap_px.max(1)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(spec: &TilingSpec, seed: u64) -> PreparedImage {
        PreparedImage {
            pixels: Array3::from_shape_fn((spec.height(), spec.width(), 3), |(r, c, k)| {
                ((r * 31 + c * 17 + k * 7 + seed as usize) % 251) as f32
            }),
            minute_offset: 0,
            camera_id: "c".into(),
            normalized: false,
        }
    }

    #[test]
    fn full_scale_grid_geometry() {
        let spec = TilingSpec::full_scale();
        assert_eq!((spec.height(), spec.width()), (1040, 1856));
        let grid = tile_image(&image(&spec, 0), &spec).unwrap();
        assert_eq!(grid.len(), 45);
        assert_eq!(grid.origins[44], (816, 1632));
        let rows: Vec<usize> = grid.origins.iter().step_by(9).map(|o| o.0).collect();
        assert_eq!(rows, vec![0, 204, 408, 612, 816]);
        let cols: Vec<usize> = grid.origins[..9].iter().map(|o| o.1).collect();
        assert_eq!(cols, (0..9).map(|i| i * 204).collect::<Vec<_>>());
    }

    #[test]
    fn first_tile_is_top_left_crop_and_every_pixel_is_covered() {
        let spec = TilingSpec::full_scale();
        let img = image(&spec, 3);
        let grid = tile_image(&img, &spec).unwrap();
        assert_eq!(grid.tiles.slice(s![0, .., .., ..]), img.pixels.slice(s![0..224, 0..224, ..]));
        assert_eq!(grid.reassemble(), img.pixels);
    }

    #[test]
    fn wrong_dimensions_are_rejected() {
        let spec = TilingSpec::full_scale();
        let img = image(&TilingSpec::new(16, 12, 2, 3).unwrap(), 0);
        assert!(tile_image(&img, &spec).is_err());
    }

    #[test]
    fn tile_labels_from_mask() {
        let spec = TilingSpec::full_scale();
        let grid = tile_image(&image(&spec, 0), &spec).unwrap();
        let mut mask = GroundTruthMask::empty(1040, 1856);
        assert!(label_tiles(&grid, &mask, 1).unwrap().iter().all(|l| !l));
        mask.mask[[0, 0]] = true;
        let l = label_tiles(&grid, &mask, 1).unwrap();
        assert_eq!(l.iter().positions(), vec![0]);
        let mut mask = GroundTruthMask::empty(1040, 1856);
        mask.mask[[210, 210]] = true;
        let l = label_tiles(&grid, &mask, 1).unwrap();
        // brute force: tiles whose extent contains the pixel
        let want: Vec<usize> = grid
            .origins
            .iter()
            .enumerate()
            .filter(|(_, (r, c))| (*r..r + 224).contains(&210) && (*c..c + 224).contains(&210))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(want, vec![0, 1, 9, 10]);
        assert_eq!(l.iter().positions(), want);
        assert!(label_tiles(&grid, &GroundTruthMask::empty(10, 10), 1).is_err());
    }

    trait Positions {
        fn positions(self) -> Vec<usize>;
    }
    impl<'a, I: Iterator<Item = &'a bool>> Positions for I {
        fn positions(self) -> Vec<usize> {
            self.enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
        }
    }

    proptest! {
        #[test]
        fn overlaps_agree_and_reassembly_is_exact(ts in 4usize..12, rows in 1usize..4, cols in 1usize..4, seed in 0u64..100) {
            let stride = (ts * 3 / 4).max(1);
            let spec = TilingSpec::new(ts, stride, rows, cols).unwrap();
            let img = image(&spec, seed);
            let grid = tile_image(&img, &spec).unwrap();
            prop_assert_eq!(grid.len(), rows * cols);
            prop_assert_eq!(&grid.reassemble(), &img.pixels);
            for (i, &(r, c)) in grid.origins.iter().enumerate() {
                prop_assert_eq!(grid.tiles.slice(s![i, .., .., ..]), img.pixels.slice(s![r..r + ts, c..c + ts, ..]));
            }
        }

        #[test]
        fn labels_are_monotone(px in prop::collection::vec((0usize..28, 0usize..40), 0..20), extra in (0usize..28, 0usize..40), min in 1usize..4) {
            let spec = TilingSpec::new(16, 12, 2, 3).unwrap();
            let grid = tile_image(&image(&spec, 0), &spec).unwrap();
            let mut mask = GroundTruthMask::empty(28, 40);
            for (r, c) in &px {
                mask.mask[[*r, *c]] = true;
            }
            let before = label_tiles(&grid, &mask, min).unwrap();
            mask.mask[[extra.0, extra.1]] = true;
            let after = label_tiles(&grid, &mask, min).unwrap();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(!b || *a);
            }
        }
    }
}
