//! Downsampled, patch-normalized pixel values as a holistic descriptor.

use rayon::prelude::*;

use super::pgm::GrayImage;
use super::STD_FLOOR;
use crate::error::{Result, VprError};
use crate::model::DescriptorSet;
use crate::vecmath::{pairwise_sum, pairwise_sum_by};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelDescriptorConfig {
    pub target_width: usize,
    pub target_height: usize,
    /// Side of the non-overlapping normalization patches; 0 disables normalization.
    pub patch_size: usize,
}

impl Default for PixelDescriptorConfig {
    fn default() -> Self {
        PixelDescriptorConfig {
            target_width: 64,
            target_height: 32,
            patch_size: 8,
        }
    }
}

impl PixelDescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_width < 4 || self.target_height < 4 {
            return Err(VprError::invalid(format!(
                "target size {}x{} below the 4x4 minimum",
                self.target_width, self.target_height
            )));
        }
        if self.patch_size > 0
            && (!self.target_width.is_multiple_of(self.patch_size)
                || !self.target_height.is_multiple_of(self.patch_size))
        {
            return Err(VprError::invalid(format!(
                "patch size {} must divide {}x{}",
                self.patch_size, self.target_width, self.target_height
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.target_width * self.target_height
    }
}

/// Box-filter resize; each output pixel is the exact area-weighted mean of the
/// source pixels it covers.
///
/// Coordinates are scaled so that all overlaps are integers: along x, output
/// pixel `x` spans `[x·W, (x+1)·W)` and source pixel `s` spans `[s·w, (s+1)·w)`
/// for source width `W` and output width `w`. The weighted sum is accumulated
/// in integers and divided once.
pub fn area_resize(img: &GrayImage, width: usize, height: usize) -> Result<Vec<f64>> {
    if width == 0 || height == 0 {
        return Err(VprError::invalid("resize target must be non-empty"));
    }
    let xs = axis_weights(img.width(), width);
    let ys = axis_weights(img.height(), height);
    let area = (img.width() * img.height()) as f64;
    let mut out = Vec::with_capacity(width * height);
    for wy in &ys {
        for wx in &xs {
            let mut acc: u64 = 0;
            for &(sy, ky) in wy {
                let mut row: u64 = 0;
                for &(sx, kx) in wx {
                    row += kx * u64::from(img.get(sx, sy));
                }
                acc += ky * row;
            }
            out.push(acc as f64 / area);
        }
    }
    Ok(out)
}

/// For every output cell along one axis, the covered source cells and their integer overlaps.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst)
        .map(|x| {
            let lo = x * src;
            let hi = (x + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .map(|s| {
                    let overlap = hi.min((s + 1) * dst) - lo.max(s * dst);
                    (s, overlap as u64)
                })
                .collect()
        })
        .collect()
}

/// Shifts each `patch × patch` block to zero mean and scales it to unit
/// population variance, with the standard deviation floored at [`STD_FLOOR`].
pub fn normalize_patches(values: &mut [f64], width: usize, height: usize, patch: usize) {
    let mut block = Vec::with_capacity(patch * patch);
    for by in (0..height).step_by(patch) {
        for bx in (0..width).step_by(patch) {
            block.clear();
            for y in by..by + patch {
                block.extend_from_slice(&values[y * width + bx..y * width + bx + patch]);
            }
            let n = block.len() as f64;
            let mean = pairwise_sum(&block) / n;
            let var = pairwise_sum_by(&block, &|v| (v - mean) * (v - mean)) / n;
            let std = var.sqrt().max(STD_FLOOR);
            for y in by..by + patch {
                for v in &mut values[y * width + bx..y * width + bx + patch] {
                    *v = (*v - mean) / std;
                }
            }
        }
    }
}

pub fn pixel_descriptor(img: &GrayImage, cfg: &PixelDescriptorConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut v = area_resize(img, cfg.target_width, cfg.target_height)?;
    if cfg.patch_size > 0 {
        normalize_patches(&mut v, cfg.target_width, cfg.target_height, cfg.patch_size);
    }
    Ok(v)
}

/// One descriptor row per image, in input order.
pub fn describe_images(images: &[GrayImage], cfg: &PixelDescriptorConfig) -> Result<DescriptorSet> {
    cfg.validate()?;
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| pixel_descriptor(img, cfg))
        .collect::<Result<_>>()?;
    DescriptorSet::from_rows(&rows)
}
