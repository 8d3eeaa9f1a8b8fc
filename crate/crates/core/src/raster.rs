//! Orthographic projection, tube silhouettes, edge bands and Canny edges.
//!
//! Pixel `(col, row)` is centered on image coordinate `(x, y) = (col, row)`.
//! Depth is dropped by the projection.

use crate::error::{BraidError, Result};
use crate::synth::SyntheticBraid;
use crate::types::{GrayImage, Point3, StrandSet};

/// Ratio between the outer and inner silhouette radius of the edge band.
pub const EDGE_RADIUS_RATIO: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectionSpec {
    pub width: usize,
    pub height: usize,
}

impl ProjectionSpec {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(BraidError::InvalidConfig(format!("projection size {width}x{height}")));
        }
        Ok(Self { width, height })
    }

    /// Nearest pixel of a projected point, if it lands inside the image.
    pub fn pixel_of(&self, p: Point3) -> Option<(usize, usize)> {
        let (c, r) = (p.x.round(), p.y.round());
        (c >= 0.0 && r >= 0.0 && c < self.width as f64 && r < self.height as f64).then_some((c as usize, r as usize))
    }

    fn check(&self, img: &GrayImage) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return Err(BraidError::DimensionMismatch(self.width, self.height, img.width(), img.height()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyConfig {
    pub gaussian_sigma: f64,
    /// Hysteresis thresholds as fractions of the strongest gradient.
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        Self { gaussian_sigma: 1.4, low_threshold: 0.1, high_threshold: 0.3 }
    }
}

impl CannyConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gaussian_sigma > 0.0
            && self.low_threshold > 0.0
            && self.low_threshold < self.high_threshold
            && self.high_threshold <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(BraidError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Coverage of a pixel at distance `d` from a silhouette of radius `r`.
#[inline]
fn coverage(d: f64, r: f64, softness: f64) -> f64 {
    if softness == 0.0 {
        if d <= r {
            1.0
        } else {
            0.0
        }
    } else {
        ((r + softness - d) / softness).clamp(0.0, 1.0)
    }
}

/// Max-blend the swept disc of `points` (radii `radii`) into `buf`.
pub(crate) fn sweep_into(buf: &mut [f64], spec: ProjectionSpec, points: &[Point3], radii: &[f64], softness: f64) {
    sweep_pair_into(buf, None, spec, points, radii, softness);
}

/// Like [`sweep_into`], optionally also sweeping radii scaled by
/// `1 / EDGE_RADIUS_RATIO` into `inner` in the same pass.
fn sweep_pair_into(
    buf: &mut [f64],
    mut inner: Option<&mut [f64]>,
    spec: ProjectionSpec,
    points: &[Point3],
    radii: &[f64],
    softness: f64,
) {
    let segments: Vec<(usize, usize)> =
        if points.len() == 1 { vec![(0, 0)] } else { (1..points.len()).map(|k| (k - 1, k)).collect() };
    let (w, h) = (spec.width as isize, spec.height as isize);
    for (i, j) in segments {
        let (p, q) = (points[i], points[j]);
        let (rp, rq) = (radii[i], radii[j]);
        let reach = rp.max(rq) + softness;
        let reach2 = reach * reach;
        let c0 = ((p.x.min(q.x) - reach).floor() as isize).max(0);
        let c1 = ((p.x.max(q.x) + reach).ceil() as isize).min(w - 1);
        let r0 = ((p.y.min(q.y) - reach).floor() as isize).max(0);
        let r1 = ((p.y.max(q.y) + reach).ceil() as isize).min(h - 1);
        if c0 > c1 || r0 > r1 {
            continue;
        }
        let (dx, dy) = (q.x - p.x, q.y - p.y);
        let len2 = dx * dx + dy * dy;
        let inv_len2 = if len2 > 0.0 { 1.0 / len2 } else { 0.0 };
        for row in r0..=r1 {
            let y = row as f64;
            let start = row as usize * spec.width;
            let along_y = (y - p.y) * dy;
            for col in c0..=c1 {
                let x = col as f64;
                let u = (((x - p.x) * dx + along_y) * inv_len2).clamp(0.0, 1.0);
                let (ex, ey) = (p.x + u * dx - x, p.y + u * dy - y);
                let d2 = ex * ex + ey * ey;
                if d2 > reach2 {
                    continue;
                }
                let d = d2.sqrt();
                let r = rp + u * (rq - rp);
                let idx = start + col as usize;
                let v = coverage(d, r, softness);
                if v > buf[idx] {
                    buf[idx] = v;
                }
                if let Some(inner) = inner.as_deref_mut() {
                    let v = coverage(d, r / EDGE_RADIUS_RATIO, softness);
                    if v > inner[idx] {
                        inner[idx] = v;
                    }
                }
            }
        }
    }
}

/// Silhouette of tubes of per-point radius `radii[s][k]` around each strand.
///
/// Inside the sweep the value is 1; with `softness > 0` it falls off
/// linearly to 0 over `softness` pixels outside the radius. Overlaps take
/// the maximum.
pub fn rasterize_tube(strands: &StrandSet, radii: &[Vec<f64>], spec: ProjectionSpec, softness: f64) -> Result<GrayImage> {
    if radii.len() != strands.len() {
        return Err(BraidError::LengthMismatch(format!("{} radius lists for {} strands", radii.len(), strands.len())));
    }
    if !(softness >= 0.0 && softness.is_finite()) {
        return Err(BraidError::InvalidConfig(format!("softness {softness}")));
    }
    let mut buf = vec![0.0; spec.width * spec.height];
    for (s, r) in strands.strands().iter().zip(radii) {
        if r.len() != s.len() {
            return Err(BraidError::LengthMismatch(format!("strand {} has {} points but {} radii", s.id(), s.len(), r.len())));
        }
        sweep_into(&mut buf, spec, s.points(), r, softness);
    }
    Ok(GrayImage::from_raw(spec.width, spec.height, buf))
}

/// Edge band of the braid: full-radius silhouette minus the silhouette at
/// `r / 1.4`, clamped to `[0, 1]`.
pub fn edge_image_synthetic(braid: &SyntheticBraid, spec: ProjectionSpec, softness: f64) -> GrayImage {
    let mut buf = Vec::new();
    edge_band_into(&mut buf, braid, spec, softness);
    GrayImage::from_raw(spec.width, spec.height, buf)
}

pub(crate) fn edge_band_into(buf: &mut Vec<f64>, braid: &SyntheticBraid, spec: ProjectionSpec, softness: f64) {
    let mut inner = Vec::new();
    edge_band_with_scratch(buf, &mut inner, braid, spec, softness);
}

/// Edge band into `buf`, reusing `inner` as scratch for the inner silhouette.
pub(crate) fn edge_band_with_scratch(
    buf: &mut Vec<f64>,
    inner: &mut Vec<f64>,
    braid: &SyntheticBraid,
    spec: ProjectionSpec,
    softness: f64,
) {
    let n = spec.width * spec.height;
    buf.clear();
    buf.resize(n, 0.0);
    inner.clear();
    inner.resize(n, 0.0);
    for (c, r) in braid.centerlines.iter().zip(&braid.radius_profile) {
        sweep_pair_into(buf, Some(inner), spec, c.points(), r, softness);
    }
    for (o, i) in buf.iter_mut().zip(inner.iter()) {
        if *o != 0.0 {
            *o = (*o - i).clamp(0.0, 1.0);
        }
    }
}

/// Split strands by whether at least `threshold` of their projected points
/// land on mask pixels brighter than 0.5.
pub fn mask_strands(
    strands: &StrandSet,
    mask: &GrayImage,
    spec: ProjectionSpec,
    threshold: f64,
) -> Result<(StrandSet, StrandSet)> {
    spec.check(mask)?;
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for s in strands.strands() {
        let hits = s.points().iter().filter(|&&p| spec.pixel_of(p).is_some_and(|(c, r)| mask.get(c, r) > 0.5)).count();
        if hits as f64 >= threshold * s.len() as f64 {
            inside.push(s.clone());
        } else {
            outside.push(s.clone());
        }
    }
    Ok((StrandSet::new(inside)?, StrandSet::new(outside)?))
}

/// Pixelwise product, e.g. luminance restricted to a mask.
pub fn multiply(a: &GrayImage, b: &GrayImage) -> Result<GrayImage> {
    if !a.same_size(b) {
        return Err(BraidError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let px = a.pixels().iter().zip(b.pixels()).map(|(x, y)| x * y).collect();
    Ok(GrayImage::from_raw(a.width(), a.height(), px))
}

fn gaussian_blur(img: &GrayImage, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.pixels();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let xx = (x + i as isize - radius).clamp(0, w - 1);
                acc += k * src[(y * w + xx) as usize];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let yy = (y + i as isize - radius).clamp(0, h - 1);
                acc += k * tmp[(yy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Binary Canny edge map: Gaussian blur, Sobel gradients, non-maximum
/// suppression and double-threshold hysteresis (8-connected).
pub fn canny(image: &GrayImage, cfg: &CannyConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let (w, h) = (image.width(), image.height());
    let blurred = gaussian_blur(image, cfg.gaussian_sigma);
    let at = |x: isize, y: isize| blurred[(y.clamp(0, h as isize - 1) as usize) * w + x.clamp(0, w as isize - 1) as usize];

    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let sx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let sy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = sx.hypot(sy);
        }
    }
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max <= 1e-12 {
        return Ok(GrayImage::zeros(w, h));
    }

    // Non-maximum suppression along the quantized gradient direction. Ties
    // keep the pixel on the low-index side so plateaus stay one pixel wide.
    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v <= 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            if v > m(x - dx, y - dy) && v >= m(x + dx, y + dy) {
                thin[i] = v / max;
            }
        }
    }

    let mut out = vec![0.0; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= cfg.high_threshold).collect();
    for &i in &stack {
        out[i] = 1.0;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] >= cfg.low_threshold {
                    out[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    Ok(GrayImage::from_raw(w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, BraidParams};
    use crate::types::{Strand, StrandId};

    fn point_strand(x: f64, y: f64) -> StrandSet {
        let s = Strand::new(StrandId(0), vec![Point3::new(x, y, 0.0), Point3::new(x, y, 1.0)]).unwrap();
        StrandSet::new(vec![s]).unwrap()
    }

    #[test]
    fn hard_disc() {
        let spec = ProjectionSpec::new(21, 21).unwrap();
        let img = rasterize_tube(&point_strand(10.0, 10.0), &[vec![3.0, 3.0]], spec, 0.0).unwrap();
        for row in 0..21 {
            for col in 0..21 {
                let d = ((col as f64 - 10.0).powi(2) + (row as f64 - 10.0).powi(2)).sqrt();
                assert_eq!(img.get(col, row), if d <= 3.0 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn soft_edge_is_fractional() {
        let spec = ProjectionSpec::new(21, 21).unwrap();
        let img = rasterize_tube(&point_strand(10.0, 10.0), &[vec![3.0, 3.0]], spec, 2.0).unwrap();
        assert_eq!(img.get(13, 10), 1.0);
        assert_eq!(img.get(14, 10), 0.5);
        assert_eq!(img.get(15, 10), 0.0);
    }

    #[test]
    fn empty_set_and_length_mismatch() {
        let spec = ProjectionSpec::new(8, 8).unwrap();
        let img = rasterize_tube(&StrandSet::empty(), &[], spec, 1.0).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
        assert!(rasterize_tube(&point_strand(1.0, 1.0), &[vec![1.0]], spec, 0.0).is_err());
    }

    #[test]
    fn vertical_tube_edge_band_width() {
        let mut params = BraidParams::new(0.0, 0.0, 200);
        params.n_bunches = 2;
        params.noise = vec![0.0; 2];
        params.shift_x = vec![30.0; 200];
        let braid = generate(&params, 0).unwrap();
        let spec = ProjectionSpec::new(61, 12).unwrap();
        let edges = edge_image_synthetic(&braid, spec, 0.0);
        let lit: Vec<usize> = (0..61).filter(|&c| edges.get(c, 5) > 0.0).collect();
        assert_eq!(lit, vec![23, 24, 36, 37]);
    }

    #[test]
    fn braid_outside_image_gives_no_edges() {
        let mut params = BraidParams::new(20.0, 10.0, 100);
        params.shift_x = vec![-500.0; 100];
        let braid = generate(&params, 0).unwrap();
        let edges = edge_image_synthetic(&braid, ProjectionSpec::new(64, 64).unwrap(), 1.0);
        assert!(edges.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn canny_constant_and_step() {
        let cfg = CannyConfig::default();
        let flat = GrayImage::filled(16, 16, 0.4);
        assert!(canny(&flat, &cfg).unwrap().pixels().iter().all(|&v| v == 0.0));

        let px = (0..32 * 16).map(|i| if i % 32 >= 16 { 1.0 } else { 0.0 }).collect();
        let step = GrayImage::new(32, 16, px).unwrap();
        let edges = canny(&step, &cfg).unwrap();
        assert!(edges.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
        for row in 0..16 {
            let cols: Vec<usize> = (0..32).filter(|&c| edges.get(c, row) == 1.0).collect();
            assert_eq!(cols, vec![15], "row {row}");
        }
    }

    #[test]
    fn mask_partition() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let set = StrandSet::new(vec![Strand::new(StrandId(4), pts).unwrap()]).unwrap();
        let spec = ProjectionSpec::new(10, 1).unwrap();
        let px = (0..10).map(|c| if c < 6 { 1.0 } else { 0.0 }).collect();
        let mask = GrayImage::new(10, 1, px).unwrap();
        let (inside, outside) = mask_strands(&set, &mask, spec, 0.5).unwrap();
        assert_eq!((inside.len(), outside.len()), (1, 0));
        let (inside, outside) = mask_strands(&set, &GrayImage::zeros(10, 1), spec, 0.5).unwrap();
        assert_eq!((inside.len(), outside.len()), (0, 1));
        assert!(mask_strands(&set, &GrayImage::zeros(3, 3), spec, 0.5).is_err());
    }
}
