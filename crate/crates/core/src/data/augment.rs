use advreg_autodiff::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugConfig {
    /// Output (height, width).
    pub crop: (usize, usize),
    /// Rotation angle interval in degrees.
    pub rotation_deg: (f64, f64),
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// When false only a center crop is applied.
    pub enabled: bool,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            crop: (56, 56),
            rotation_deg: (0.0, 360.0),
            flip_horizontal: true,
            flip_vertical: true,
            enabled: true,
        }
    }
}

impl AugConfig {
    /// 300×300 → 270×270 crops with full-circle rotations and flips.
    pub fn large_scale() -> Self {
        Self {
            crop: (270, 270),
            ..Self::default()
        }
    }

    pub fn disabled(crop: (usize, usize)) -> Self {
        Self {
            crop,
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self, image: (usize, usize)) -> Result<()> {
        if self.crop.0 == 0 || self.crop.1 == 0 || self.crop.0 > image.0 || self.crop.1 > image.1 {
            return Err(Error::Config(format!(
                "crop {}x{} does not fit a {}x{} image",
                self.crop.0, self.crop.1, image.0, image.1
            )));
        }
        let (lo, hi) = self.rotation_deg;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("invalid rotation range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

fn dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    match image.shape() {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::Config(format!("expected a [C,H,W] image, got {other:?}"))),
    }
}

pub fn crop(image: &Tensor, top: usize, left: usize, size: (usize, usize)) -> Result<Tensor> {
    let (c, h, w) = dims(image)?;
    if top + size.0 > h || left + size.1 > w {
        return Err(Error::Config(format!(
            "crop {}x{} at ({top}, {left}) exceeds {h}x{w}",
            size.0, size.1
        )));
    }
    let src = image.data();
    let mut out = Vec::with_capacity(c * size.0 * size.1);
    for ci in 0..c {
        for y in top..top + size.0 {
            let row = (ci * h + y) * w;
            out.extend_from_slice(&src[row + left..row + left + size.1]);
        }
    }
    Ok(Tensor::new(vec![c, size.0, size.1], out)?)
}

pub fn center_crop(image: &Tensor, size: (usize, usize)) -> Result<Tensor> {
    let (_, h, w) = dims(image)?;
    if size.0 > h || size.1 > w {
        return Err(Error::Config(format!(
            "crop {}x{} does not fit a {h}x{w} image",
            size.0, size.1
        )));
    }
    crop(image, (h - size.0) / 2, (w - size.1) / 2, size)
}

/// Rotation about the image center with bilinear interpolation; samples
/// falling outside the source are zero.
pub fn rotate(image: &Tensor, degrees: f64) -> Result<Tensor> {
    let (c, h, w) = dims(image)?;
    if degrees == 0.0 {
        return Ok(image.clone());
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            // Inverse map from output to source coordinates.
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ci in 0..c {
                let at = |yy: isize, xx: isize| -> f64 {
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        0.0
                    } else {
                        src[(ci * h + yy as usize) * w + xx as usize]
                    }
                };
                let v = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                    + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
                out[(ci * h + y) * w + x] = v;
            }
        }
    }
    Ok(Tensor::new(vec![c, h, w], out)?)
}

/// Mirrors left-right.
pub fn flip_horizontal(image: &Tensor) -> Result<Tensor> {
    let (_, _, w) = dims(image)?;
    let data = image
        .data()
        .chunks(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    Ok(Tensor::new(image.shape().to_vec(), data)?)
}

/// Mirrors top-bottom.
pub fn flip_vertical(image: &Tensor) -> Result<Tensor> {
    let (c, h, w) = dims(image)?;
    let src = image.data();
    let mut data = Vec::with_capacity(src.len());
    for ci in 0..c {
        for y in (0..h).rev() {
            let row = (ci * h + y) * w;
            data.extend_from_slice(&src[row..row + w]);
        }
    }
    Ok(Tensor::new(image.shape().to_vec(), data)?)
}

/// Random crop, then rotation about the crop center, then independent 50%
/// horizontal and vertical flips. A disabled config center-crops only.
pub fn augment(image: &Tensor, aug: &AugConfig, rng: &mut StreamRng) -> Result<Tensor> {
    let (_, h, w) = dims(image)?;
    aug.validate((h, w))?;
    if !aug.enabled {
        return center_crop(image, aug.crop);
    }
    let top = rng.random_range(0..=h - aug.crop.0);
    let left = rng.random_range(0..=w - aug.crop.1);
    let (lo, hi) = aug.rotation_deg;
    let angle = if lo < hi { rng.random_range(lo..hi) } else { lo };
    let flip_h = rng.random_bool(0.5);
    let flip_v = rng.random_bool(0.5);

    let mut out = crop(image, top, left, aug.crop)?;
    out = rotate(&out, angle)?;
    if aug.flip_horizontal && flip_h {
        out = flip_horizontal(&out)?;
    }
    if aug.flip_vertical && flip_v {
        out = flip_vertical(&out)?;
    }
    Ok(out)
}
