//! Geometric and raster data types shared by every stage of the pipeline.
//!
//! Coordinates follow image conventions: `x` grows rightward, `y` grows
//! downward along image rows (the braiding direction), and `z` points toward
//! the camera. Strands and mid-lines are stored root-first, i.e. with the
//! smallest `y` at index 0.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Violations of the data-type invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("duplicate strand id {0}")]
    DuplicateId(StrandId),
    #[error("strand {id} has {len} points, need at least 2")]
    DegenerateStrand { id: StrandId, len: usize },
    #[error("strand {id} has a non-finite coordinate at point {index}")]
    NonFiniteCoordinate { id: StrandId, index: usize },
    #[error("strand {id} repeats point {index}")]
    RepeatedPoint { id: StrandId, index: usize },
    #[error("image size {width}x{height} does not match {len} pixels")]
    ImageSize { width: usize, height: usize, len: usize },
    #[error("pixel {index} value {value} outside [0, 1]")]
    PixelRange { index: usize, value: f64 },
    #[error("invalid mid-line: {0}")]
    MidLine(String),
}

/// A point in image space: pixels for `x`/`y`, depth units for `z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance_squared(self, other: Self) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(self, other: Self) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(self.y * other.z - self.z * other.y, self.z * other.x - self.x * other.z, self.x * other.y - self.y * other.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > 1e-12).then(|| self.scale(1.0 / n))
    }
}

impl std::ops::Add for Point3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Point3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Opaque strand identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrandId(pub u64);

impl fmt::Display for StrandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// An ordered 3D polyline with at least two distinct consecutive points.
#[derive(Debug, Clone, PartialEq)]
pub struct Strand {
    id: StrandId,
    points: Vec<Point3>,
}

impl Strand {
    pub fn new(id: StrandId, points: Vec<Point3>) -> Result<Self, GeometryError> {
        check_points(id, &points)?;
        Ok(Self { id, points })
    }

    pub fn id(&self) -> StrandId {
        self.id
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed strand; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Sum of segment lengths.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

fn check_points(id: StrandId, points: &[Point3]) -> Result<(), GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegenerateStrand { id, len: points.len() });
    }
    if let Some(index) = points.iter().position(|p| !p.is_finite()) {
        return Err(GeometryError::NonFiniteCoordinate { id, index });
    }
    if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
        return Err(GeometryError::RepeatedPoint { id, index: i + 1 });
    }
    Ok(())
}

/// Free-function form of [`Strand::arc_length`].
pub fn arc_length(strand: &Strand) -> f64 {
    strand.arc_length()
}

/// A collection of strands with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrandSet {
    strands: Vec<Strand>,
}

impl StrandSet {
    pub fn new(strands: Vec<Strand>) -> Result<Self, GeometryError> {
        let mut seen = HashSet::with_capacity(strands.len());
        for s in &strands {
            if !seen.insert(s.id()) {
                return Err(GeometryError::DuplicateId(s.id()));
            }
        }
        Ok(Self { strands })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn strands(&self) -> &[Strand] {
        &self.strands
    }

    pub fn into_strands(self) -> Vec<Strand> {
        self.strands
    }

    pub fn len(&self) -> usize {
        self.strands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strands.is_empty()
    }

    pub fn get(&self, id: StrandId) -> Option<&Strand> {
        self.strands.iter().find(|s| s.id() == id)
    }

    pub fn point_count(&self) -> usize {
        self.strands.iter().map(Strand::len).sum()
    }

    /// All points of all strands, strand order then point order.
    pub fn points(&self) -> impl Iterator<Item = Point3> + '_ {
        self.strands.iter().flat_map(|s| s.points().iter().copied())
    }

    pub fn ids(&self) -> impl Iterator<Item = StrandId> + '_ {
        self.strands.iter().map(Strand::id)
    }
}

/// Raw strand data that has not been validated yet, as produced by parsers.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStrand {
    pub id: StrandId,
    pub points: Vec<Point3>,
}

/// Check every [`StrandSet`] invariant on unvalidated data.
pub fn validate(raw: &[RawStrand]) -> Result<(), GeometryError> {
    let mut seen = HashSet::with_capacity(raw.len());
    for s in raw {
        if !seen.insert(s.id) {
            return Err(GeometryError::DuplicateId(s.id));
        }
        check_points(s.id, &s.points)?;
    }
    Ok(())
}

/// A `width × height` grid of values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(GeometryError::ImageSize { width, height, len: pixels.len() });
        }
        if let Some(index) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(GeometryError::PixelRange { index, value: pixels[index] });
        }
        Ok(Self { width, height, pixels })
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// # Panics
    /// Panics if either dimension is zero or `value` is outside `[0, 1]`.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert!((0.0..=1.0).contains(&value), "pixel value out of range");
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Elementwise map; results are clamped into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { width: self.width, height: self.height, pixels: self.pixels.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect() }
    }

    // Crate-internal constructor for buffers whose range is guaranteed by construction.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, pixels.len());
        debug_assert!(pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        Self { width, height, pixels }
    }
}

/// A 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Self) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Hand-drawn braid center path with the braid width measured on the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MidLineAnnotation {
    polyline: Vec<Point2>,
    width_px: f64,
}

impl MidLineAnnotation {
    /// Builds an annotation, reversing the polyline if it was drawn bottom-up.
    pub fn new(mut polyline: Vec<Point2>, width_px: f64) -> Result<Self, GeometryError> {
        if polyline.len() < 2 {
            return Err(GeometryError::MidLine(format!("{} points, need at least 2", polyline.len())));
        }
        if !(width_px.is_finite() && width_px > 0.0) {
            return Err(GeometryError::MidLine(format!("width {width_px} must be positive")));
        }
        if polyline.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(GeometryError::MidLine("non-finite coordinate".into()));
        }
        if polyline[0].y > polyline[polyline.len() - 1].y {
            polyline.reverse();
        }
        if polyline.windows(2).any(|w| w[1].y < w[0].y) {
            return Err(GeometryError::MidLine("not monotone along the braiding direction".into()));
        }
        if polyline.windows(2).all(|w| w[0] == w[1]) {
            return Err(GeometryError::MidLine("zero length".into()));
        }
        Ok(Self { polyline, width_px })
    }

    pub fn polyline(&self) -> &[Point2] {
        &self.polyline
    }

    pub fn width_px(&self) -> f64 {
        self.width_px
    }

    pub fn length(&self) -> f64 {
        self.polyline.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// `n` points spaced evenly by arc length, endpoints included.
    pub fn resample(&self, n: usize) -> Vec<Point2> {
        let total = self.length();
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for k in 0..n {
            let target = if n == 1 { 0.0 } else { total * k as f64 / (n - 1) as f64 };
            loop {
                let a = self.polyline[seg];
                let b = self.polyline[seg + 1];
                let len = a.distance(b);
                if seg_start + len >= target || seg + 2 == self.polyline.len() {
                    let u = if len > 0.0 { ((target - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
                    out.push(Point2::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)));
                    break;
                }
                seg_start += len;
                seg += 1;
            }
        }
        out
    }

    /// Shortest distance from `p` to the polyline.
    pub fn distance_to(&self, p: Point2) -> f64 {
        self.polyline.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let u = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.distance(Point2::new(a.x + u * dx, a.y + u * dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strand(id: u64, pts: &[(f64, f64, f64)]) -> Strand {
        Strand::new(StrandId(id), pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap()
    }

    #[test]
    fn arc_length_of_segments() {
        assert_eq!(strand(0, &[(0.0, 0.0, 0.0), (3.0, 4.0, 0.0)]).arc_length(), 5.0);
        assert_eq!(strand(0, &[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0)]).arc_length(), 2.0);
    }

    #[test]
    fn validate_reports_each_violation() {
        assert_eq!(validate(&[]), Ok(()));
        let ok = RawStrand { id: StrandId(1), points: vec![Point3::default(), Point3::new(1.0, 0.0, 0.0)] };
        assert_eq!(validate(&[ok.clone(), ok.clone()]), Err(GeometryError::DuplicateId(StrandId(1))));
        let nan = RawStrand { id: StrandId(2), points: vec![Point3::default(), Point3::new(f64::NAN, 0.0, 0.0)] };
        assert!(matches!(validate(&[nan]), Err(GeometryError::NonFiniteCoordinate { index: 1, .. })));
        let short = RawStrand { id: StrandId(3), points: vec![Point3::default()] };
        assert!(matches!(validate(&[short]), Err(GeometryError::DegenerateStrand { len: 1, .. })));
    }

    #[test]
    fn constructors_reject_bad_data() {
        assert!(Strand::new(StrandId(0), vec![Point3::default(), Point3::default()]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(MidLineAnnotation::new(vec![Point2::new(0.0, 0.0)], 3.0).is_err());
        assert!(MidLineAnnotation::new(vec![Point2::new(0.0, 0.0), Point2::new(0.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn midline_is_stored_root_first() {
        let m = MidLineAnnotation::new(vec![Point2::new(0.0, 10.0), Point2::new(0.0, 0.0)], 4.0).unwrap();
        assert_eq!(m.polyline()[0].y, 0.0);
        let r = m.resample(11);
        assert_eq!(r.len(), 11);
        assert!((r[3].y - 3.0).abs() < 1e-12);
        assert_eq!(r[10], Point2::new(0.0, 10.0));
    }
}
