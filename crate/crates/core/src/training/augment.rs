//! Driver-image augmentation: zero pad, random crop, random horizontal flip.

use std::sync::Once;

use rand::Rng;

use super::config::AugmentConfig;
use crate::error::{Error, Result};
use crate::model::Resolution;
use crate::tensor::Tensor;

/// Mirrors a `C×H×W` tensor left to right.
pub fn hflip(image: &Tensor) -> Tensor {
    let (c, h, w) = dims(image);
    let src = image.data();
    let mut data = Vec::with_capacity(src.len());
    for row in src.chunks(w).take(c * h) {
        data.extend(row.iter().rev());
    }
    Tensor::new(image.shape().to_vec(), data).expect("same shape")
}

fn dims(image: &Tensor) -> (usize, usize, usize) {
    let s = image.shape();
    (s[0], s[1], s[2])
}

/// Pads by `pad` zeros on every side, crops `target` at `offset = (y, x)` of
/// the padded image, then optionally flips.
pub fn augment_with(image: &Tensor, target: Resolution, pad: usize, offset: (usize, usize), flip: bool) -> Result<Tensor> {
    if image.rank() != 3 {
        return Err(Error::Data(format!("expected a C×H×W image, got {:?}", image.shape())));
    }
    let (c, h, w) = dims(image);
    if h < target.height || w < target.width {
        return Err(Error::Data(format!("image {h}x{w} is smaller than the target {target}")));
    }
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let (oy, ox) = offset;
    if oy + target.height > ph || ox + target.width > pw {
        return Err(Error::Data(format!("crop offset {offset:?} leaves the padded image")));
    }
    let src = image.data();
    let mut data = vec![0.0; c * target.height * target.width];
    for ch in 0..c {
        for y in 0..target.height {
            let sy = (oy + y) as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..target.width {
                let sx = (ox + x) as isize - pad as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                data[(ch * target.height + y) * target.width + x] = src[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    let out = Tensor::new(vec![c, target.height, target.width], data)?;
    Ok(if flip { hflip(&out) } else { out })
}

static THREE_AUGMENT_WARNING: Once = Once::new();

/// Random augmentation of a driver image.
pub fn augment(image: &Tensor, rng: &mut impl Rng, config: &AugmentConfig, target: Resolution) -> Result<Tensor> {
    if config.three_augment {
        THREE_AUGMENT_WARNING.call_once(|| log::warn!("3-Augment is not implemented; flag ignored"));
    }
    let (pad, offset) = if config.crop {
        let (_, h, w) = dims(image);
        let max_y = h + 2 * config.pad - target.height;
        let max_x = w + 2 * config.pad - target.width;
        (config.pad, (rng.gen_range(0..=max_y), rng.gen_range(0..=max_x)))
    } else {
        (0, (0, 0))
    };
    let flip = config.flip && rng.gen_bool(0.5);
    augment_with(image, target, pad, offset, flip)
}
