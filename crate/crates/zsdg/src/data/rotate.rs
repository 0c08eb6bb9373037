//! Image rotation and rotated-domain synthesis.
//!
//! Rotation is about the image center, counter-clockwise, by inverse
//! mapping with bilinear interpolation. The canvas keeps its size; source
//! samples that fall outside the bounds contribute zero (zero padding), so
//! corners clip. Quarter turns on square canvases are grid-aligned and are
//! applied as exact index permutations.

use crate::data::{Domain, LabeledImageSet};
use crate::error::{Error, Result};

/// The six standard domain angles: 0° to 75° in 15° steps.
pub const DEFAULT_ANGLES: [f64; 6] = [0.0, 15.0, 30.0, 45.0, 60.0, 75.0];

/// Rotate one `H×W×C` image counter-clockwise by `degrees`.
pub fn rotate_image(
    image: &[f64],
    (height, width, channels): (usize, usize, usize),
    degrees: f64,
) -> Vec<f64> {
    debug_assert_eq!(image.len(), height * width * channels);
    let turn = degrees.rem_euclid(360.0);
    if turn == 0.0 {
        return image.to_vec();
    }
    if turn == 180.0 {
        let mut out = vec![0.0; image.len()];
        for r in 0..height {
            for c in 0..width {
                let (sr, sc) = (height - 1 - r, width - 1 - c);
                for ch in 0..channels {
                    out[(r * width + c) * channels + ch] =
                        image[(sr * width + sc) * channels + ch];
                }
            }
        }
        return out;
    }
    if (turn == 90.0 || turn == 270.0) && height == width {
        let n = height;
        let mut out = vec![0.0; image.len()];
        for r in 0..n {
            for c in 0..n {
                // counter-clockwise quarter turn: dst(r,c) = src(c, n-1-r)
                let (sr, sc) = if turn == 90.0 {
                    (c, n - 1 - r)
                } else {
                    (n - 1 - c, r)
                };
                for ch in 0..channels {
                    out[(r * n + c) * channels + ch] = image[(sr * n + sc) * channels + ch];
                }
            }
        }
        return out;
    }

    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; image.len()];
    let sample = |y: isize, x: isize, ch: usize| -> f64 {
        if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
            0.0
        } else {
            image[(y as usize * width + x as usize) * channels + ch]
        }
    };
    for r in 0..height {
        for c in 0..width {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            // inverse map: rotate the destination point back into the source
            let sx = cx + cos * dx - sin * dy;
            let sy = cy + sin * dx + cos * dy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..channels {
                let v = (1.0 - fy) * (1.0 - fx) * sample(y0, x0, ch)
                    + (1.0 - fy) * fx * sample(y0, x0 + 1, ch)
                    + fy * (1.0 - fx) * sample(y0 + 1, x0, ch)
                    + fy * fx * sample(y0 + 1, x0 + 1, ch);
                out[(r * width + c) * channels + ch] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// One rotated copy of `base` per angle, tagged `D0..D{k-1}`. Every domain
/// keeps the base image count, order, and labels, so domains stay
/// index-aligned by base image.
pub fn build_rotated_domains(base: &LabeledImageSet, angles: &[f64]) -> Result<Vec<Domain>> {
    if base.is_empty() {
        return Err(Error::usage("cannot rotate an empty image set"));
    }
    if angles.is_empty() {
        return Err(Error::usage("need at least one rotation angle"));
    }
    let dims = base.dims();
    let pixel = base.pixel_count();
    let mut domains = Vec::with_capacity(angles.len());
    for (i, &angle) in angles.iter().enumerate() {
        let mut images = Vec::with_capacity(base.len() * pixel);
        for j in 0..base.len() {
            images.extend(rotate_image(base.image(j), dims, angle));
        }
        let data = LabeledImageSet::new(
            dims,
            images,
            base.label_ids().to_vec(),
            base.vocab().to_vec(),
        )?;
        domains.push(Domain {
            tag: format!("D{i}"),
            data,
        });
    }
    Ok(domains)
}
