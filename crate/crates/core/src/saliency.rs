//! Region-level saliency: gradient norms, a Sobel stand-in, average pooling
//! onto the region grid, and sum-to-one normalization.

use crate::error::{Error, Result};
use crate::tensor_io::{FloatTensor, ImageTensor};

/// Grid sides the mixer samples from.
pub const GRID_SIDES: [usize; 4] = [2, 4, 8, 16];

/// A square `side × side` grid of equally sized pixel regions.
///
/// Region indices are row-major. A grid built with [`Grid::new`] has
/// one-pixel regions and is only meaningful at region level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    side: usize,
    region_h: usize,
    region_w: usize,
}

impl Grid {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::Shape("grid side must be positive".into()));
        }
        Ok(Self {
            side,
            region_h: 1,
            region_w: 1,
        })
    }

    /// Grid over an `height × width` image; both must be divisible by `side`.
    pub fn for_image(side: usize, height: usize, width: usize) -> Result<Self> {
        if side == 0 || !height.is_multiple_of(side) || !width.is_multiple_of(side) || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "{height}x{width} is not divisible into a {side}x{side} grid"
            )));
        }
        Ok(Self {
            side,
            region_h: height / side,
            region_w: width / side,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of regions.
    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn region_h(&self) -> usize {
        self.region_h
    }

    pub fn region_w(&self) -> usize {
        self.region_w
    }

    pub fn height(&self) -> usize {
        self.side * self.region_h
    }

    pub fn width(&self) -> usize {
        self.side * self.region_w
    }

    /// `(row, col)` of a region on the grid.
    #[inline]
    pub fn coords(&self, region: usize) -> (usize, usize) {
        (region / self.side, region % self.side)
    }

    /// Top-left pixel of a region.
    #[inline]
    pub fn origin(&self, region: usize) -> (usize, usize) {
        let (r, c) = self.coords(region);
        (r * self.region_h, c * self.region_w)
    }

    /// Unordered 4-connected pairs `(i, j)` with `i < j`; right neighbors
    /// and down neighbors interleaved in row-major order of `i`.
    pub fn neighbors(&self) -> Vec<(usize, usize)> {
        let g = self.side;
        let mut out = Vec::with_capacity(2 * g * g.saturating_sub(1));
        for i in 0..g * g {
            let (r, c) = self.coords(i);
            if c + 1 < g {
                out.push((i, i + 1));
            }
            if r + 1 < g {
                out.push((i, i + g));
            }
        }
        out
    }

    pub fn check_image(&self, image: &ImageTensor) -> Result<()> {
        if image.height() != self.height() || image.width() != self.width() {
            return Err(Error::Shape(format!(
                "image is {}x{}, grid covers {}x{}",
                image.height(),
                image.width(),
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }
}

/// Region saliency: nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DownsampledSaliency(Vec<f64>);

impl DownsampledSaliency {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("saliency vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("saliency entries must be finite and nonnegative".into()));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("saliency sums to {total}, expected 1")));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Output of [`normalize_sum1`]; `degenerate` is set when the input had no
/// mass and the uniform vector was substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub saliency: DownsampledSaliency,
    pub degenerate: bool,
}

fn spatial_dims(t: &FloatTensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((1, h, w)),
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::Shape(format!("expected [H,W] or [C,H,W], got {s:?}"))),
    }
}

/// Per-pixel ℓ2 norm across channels of a `[C,H,W]` (or `[H,W]`) gradient.
pub fn grad_l2_saliency(grad: &FloatTensor) -> Result<FloatTensor> {
    let (c, h, w) = spatial_dims(grad)?;
    let plane = h * w;
    let data = grad.data();
    let out = (0..plane)
        .map(|p| {
            let sq: f32 = (0..c).map(|k| data[k * plane + p] * data[k * plane + p]).sum();
            sq.sqrt()
        })
        .collect();
    FloatTensor::new(vec![h, w], out)
}

/// Sobel gradient magnitude of the channel-mean image with replicated
/// borders. Used when no model gradient is available.
pub fn proxy_saliency(image: &ImageTensor) -> FloatTensor {
    let (c, h, w) = (image.channels(), image.height(), image.width());
    let mut gray = vec![0.0f32; h * w];
    for k in 0..c {
        for (p, g) in gray.iter_mut().enumerate() {
            *g += image.data()[k * h * w + p];
        }
    }
    for g in &mut gray {
        *g /= c as f32;
    }
    let at = |y: isize, x: isize| -> f32 {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        gray[y * w + x]
    };
    let mut out = vec![0.0f32; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    FloatTensor::new(vec![h, w], out).expect("sobel of a valid image is finite")
}

/// Average pooling of an `[H,W]` map onto the grid; row-major regions.
pub fn downsample_avg(map: &FloatTensor, grid: &Grid) -> Result<Vec<f64>> {
    let (h, w) = match *map.shape() {
        [h, w] => (h, w),
        [1, h, w] => (h, w),
        ref s => return Err(Error::Shape(format!("saliency map must be [H,W], got {s:?}"))),
    };
    let g = grid.side();
    if h % g != 0 || w % g != 0 {
        return Err(Error::Shape(format!("{h}x{w} map is not divisible by grid {g}")));
    }
    let (rh, rw) = (h / g, w / g);
    let data = map.data();
    let mut out = vec![0.0f64; g * g];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for (x, &v) in row.iter().enumerate() {
            out[(y / rh) * g + x / rw] += v as f64;
        }
    }
    let area = (rh * rw) as f64;
    for v in &mut out {
        *v /= area;
    }
    Ok(out)
}

pub fn normalize_sum1(values: &[f64]) -> Result<Normalized> {
    if values.is_empty() {
        return Err(Error::Shape("cannot normalize an empty vector".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain("saliency must be finite and nonnegative".into()));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Ok(Normalized {
            saliency: DownsampledSaliency::uniform(values.len()),
            degenerate: true,
        });
    }
    Ok(Normalized {
        saliency: DownsampledSaliency(values.iter().map(|v| v / total).collect()),
        degenerate: false,
    })
}

/// Downsample then normalize.
pub fn region_saliency(map: &FloatTensor, grid: &Grid) -> Result<Normalized> {
    normalize_sum1(&downsample_avg(map, grid)?)
}

/// Interprets a caller-supplied map: `[H,W]` is saliency as-is, `[C,H,W]` is
/// a gradient reduced with [`grad_l2_saliency`].
pub fn saliency_from_map(map: &FloatTensor) -> Result<FloatTensor> {
    match map.rank() {
        2 => Ok(map.clone()),
        3 => grad_l2_saliency(map),
        r => Err(Error::Shape(format!("saliency map must have rank 2 or 3, got {r}"))),
    }
}
