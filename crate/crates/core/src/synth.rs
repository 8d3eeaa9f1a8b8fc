//! Procedural sinusoidal braid geometry.
//!
//! Each bunch `i` of an `n`-bunch braid follows a center curve with phase
//! `φ = w·s·t + 2πi/n`:
//!
//! ```text
//! x = a·sin(φ) + x'
//! y = t + y'
//! z = b·sin(2φ) + z'
//! r = (1 + noise_i)·radius
//! ```
//!
//! where `t = k·t_step` at point `k` and `s` is a global t-scale. With zero
//! shifts, `w = 1`, `s = 1` and three bunches this is exactly the classic
//! three-strand braid mid-line family. Each center curve is then dressed with
//! a ring of parallel strands on the tube of the local radius.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BraidError, Result};
use crate::types::{Point3, Strand, StrandId, StrandSet};

/// Surface strands per bunch, in addition to the center curve.
pub const RING_STRANDS: usize = 6;

/// Learnable and fixed parameters of the synthetic braid.
#[derive(Debug, Clone, PartialEq)]
pub struct BraidParams {
    /// Horizontal amplitude (braid width).
    pub a: f64,
    /// Depth amplitude.
    pub b: f64,
    /// Angular frequency.
    pub w: f64,
    /// Parameter increment per point.
    pub t_step: f64,
    /// Global multiplier on `t` inside the phase.
    pub t_scale: f64,
    pub n_points: usize,
    pub n_bunches: usize,
    pub radius: f64,
    /// Per-point horizontal offsets `x'`, length `n_points`.
    pub shift_x: Vec<f64>,
    /// Per-point vertical offsets `y'`, length `n_points`.
    pub shift_y: Vec<f64>,
    /// Depth offset `z'`.
    pub shift_z: f64,
    /// Per-bunch radius variation, length `n_bunches`.
    pub noise: Vec<f64>,
}

impl BraidParams {
    /// Classic braid defaults with zero shifts and zero noise.
    pub fn new(a: f64, b: f64, n_points: usize) -> Self {
        Self {
            a,
            b,
            w: 1.0,
            t_step: 0.05,
            t_scale: 1.0,
            n_points,
            n_bunches: 3,
            radius: 7.0,
            shift_x: vec![0.0; n_points],
            shift_y: vec![0.0; n_points],
            shift_z: 0.0,
            noise: vec![0.0; 3],
        }
    }

    /// Fill `noise` with values uniform in `[-amplitude, amplitude]`.
    pub fn with_random_noise(mut self, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.noise = (0..self.n_bunches).map(|_| rng.gen_range(-amplitude..=amplitude)).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BraidError::InvalidParams(msg));
        let scalars = [self.a, self.b, self.w, self.t_step, self.t_scale, self.radius, self.shift_z];
        if scalars.iter().any(|v| !v.is_finite()) {
            return bad("non-finite scalar".into());
        }
        if self.a < 0.0 {
            return bad(format!("a = {} must be >= 0", self.a));
        }
        if self.w <= 0.0 {
            return bad(format!("w = {} must be > 0", self.w));
        }
        if self.t_step <= 0.0 || self.t_scale <= 0.0 {
            return bad("t_step and t_scale must be > 0".into());
        }
        if self.radius <= 0.0 {
            return bad(format!("radius = {} must be > 0", self.radius));
        }
        if self.n_points < 2 {
            return bad(format!("n_points = {} must be >= 2", self.n_points));
        }
        if self.n_bunches < 2 {
            return bad(format!("n_bunches = {} must be >= 2", self.n_bunches));
        }
        if self.shift_x.len() != self.n_points || self.shift_y.len() != self.n_points {
            return bad("shift vectors must have n_points entries".into());
        }
        if self.shift_x.iter().chain(&self.shift_y).any(|v| !v.is_finite()) {
            return bad("non-finite shift".into());
        }
        if self.noise.len() != self.n_bunches {
            return bad("noise must have n_bunches entries".into());
        }
        if self.noise.iter().any(|n| !(n.abs() < 1.0)) {
            return bad("noise entries must satisfy |noise| < 1".into());
        }
        Ok(())
    }

    fn phase(&self, k: usize, bunch: usize) -> f64 {
        self.w * self.t_scale * (k as f64 * self.t_step) + TAU * bunch as f64 / self.n_bunches as f64
    }

    /// Center-curve point `k` of `bunch`.
    pub fn centerline_point(&self, bunch: usize, k: usize) -> Point3 {
        let phi = self.phase(k, bunch);
        Point3::new(
            self.a * phi.sin() + self.shift_x[k],
            k as f64 * self.t_step + self.shift_y[k],
            self.b * (2.0 * phi).sin() + self.shift_z,
        )
    }

    /// Center-curve depth samples of `bunch`, used by the depth regularizer.
    pub fn depth_profile(&self, bunch: usize) -> Vec<f64> {
        (0..self.n_points).map(|k| self.centerline_point(bunch, k).z).collect()
    }

    pub fn bunch_radius(&self, bunch: usize) -> f64 {
        (1.0 + self.noise[bunch]) * self.radius
    }
}

/// Generated braid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBraid {
    pub params: BraidParams,
    /// One center curve per bunch.
    pub centerlines: Vec<Strand>,
    /// Center curves plus their surface rings.
    pub tube_strands: StrandSet,
    pub bunch_of: BTreeMap<StrandId, usize>,
    /// `radius_profile[bunch][k]` is the tube radius at center point `k`.
    pub radius_profile: Vec<Vec<f64>>,
}

impl SyntheticBraid {
    pub fn n_bunches(&self) -> usize {
        self.centerlines.len()
    }

    pub fn local_radius(&self, bunch: usize, k: usize) -> f64 {
        self.radius_profile[bunch][k]
    }

    /// Largest `y` reached by any center curve end.
    pub fn bottom_y(&self) -> f64 {
        self.centerlines.iter().map(|c| c.points()[c.len() - 1].y).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Classic analytic mid-lines evaluated at the given `t` values.
///
/// Bunch `i` is `x = a·sin(t + 2πi/n)`, `y = t`, `z = b·sin(2(t + 2πi/n))`.
pub fn midlines_eq1(a: f64, b: f64, t_values: &[f64], n_bunches: usize) -> Result<Vec<Strand>> {
    if t_values.is_empty() {
        return Err(BraidError::Empty("t_values"));
    }
    if n_bunches < 2 {
        return Err(BraidError::InvalidParams(format!("n_bunches = {n_bunches} must be >= 2")));
    }
    if t_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BraidError::InvalidParams("t_values must be strictly increasing".into()));
    }
    (0..n_bunches)
        .map(|i| {
            let offset = TAU * i as f64 / n_bunches as f64;
            let points =
                t_values.iter().map(|&t| Point3::new(a * (t + offset).sin(), t, b * (2.0 * (t + offset)).sin())).collect();
            Ok(Strand::new(StrandId(i as u64), points)?)
        })
        .collect()
}

/// Expand `params` into center curves and tube strands.
///
/// `seed` rotates each bunch's ring of surface strands by a random angle;
/// output is a pure function of `(params, seed)`.
pub fn generate(params: &BraidParams, seed: u64) -> Result<SyntheticBraid> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_bunch = RING_STRANDS + 1;
    let mut centerlines = Vec::with_capacity(params.n_bunches);
    let mut tube = Vec::with_capacity(params.n_bunches * per_bunch);
    let mut bunch_of = BTreeMap::new();
    let mut radius_profile = Vec::with_capacity(params.n_bunches);

    for bunch in 0..params.n_bunches {
        let center: Vec<Point3> = (0..params.n_points).map(|k| params.centerline_point(bunch, k)).collect();
        let radius = vec![params.bunch_radius(bunch); params.n_points];
        let base_id = (bunch * per_bunch) as u64;
        let centerline = Strand::new(StrandId(base_id), center.clone())?;

        let frames = transport_frames(&center);
        let ring_offset = rng.gen_range(0.0..TAU);
        tube.push(centerline.clone());
        bunch_of.insert(StrandId(base_id), bunch);
        for j in 0..RING_STRANDS {
            let theta = ring_offset + TAU * j as f64 / RING_STRANDS as f64;
            let (c, s) = (theta.cos(), theta.sin());
            let points =
                center.iter().zip(&frames).zip(&radius).map(|((&p, &(n, b)), &r)| p + n.scale(r * c) + b.scale(r * s)).collect();
            let id = StrandId(base_id + 1 + j as u64);
            tube.push(Strand::new(id, points)?);
            bunch_of.insert(id, bunch);
        }
        centerlines.push(centerline);
        radius_profile.push(radius);
    }

    Ok(SyntheticBraid { params: params.clone(), centerlines, tube_strands: StrandSet::new(tube)?, bunch_of, radius_profile })
}

/// Unit tangent at each point of a polyline (central differences).
pub(crate) fn tangents(points: &[Point3]) -> Vec<Point3> {
    let n = points.len();
    let mut last = Point3::new(0.0, 1.0, 0.0);
    (0..n)
        .map(|k| {
            let d = points[(k + 1).min(n - 1)] - points[k.saturating_sub(1)];
            if let Some(t) = d.normalized() {
                last = t;
            }
            last
        })
        .collect()
}

/// Rotation-minimizing `(normal, binormal)` pairs along a polyline.
pub(crate) fn transport_frames(points: &[Point3]) -> Vec<(Point3, Point3)> {
    let tangents = tangents(points);
    let t0 = tangents[0];
    let seed_axis = if t0.z.abs() < 0.9 { Point3::new(0.0, 0.0, 1.0) } else { Point3::new(1.0, 0.0, 0.0) };
    let mut normal = (seed_axis - t0.scale(seed_axis.dot(t0))).normalized().expect("axis chosen off tangent");
    tangents
        .iter()
        .map(|&t| {
            let projected = normal - t.scale(normal.dot(t));
            if let Some(n) = projected.normalized() {
                normal = n;
            } else {
                // Tangent flipped onto the old normal; any perpendicular will do.
                let axis = if t.z.abs() < 0.9 { Point3::new(0.0, 0.0, 1.0) } else { Point3::new(1.0, 0.0, 0.0) };
                normal = (axis - t.scale(axis.dot(t))).normalized().expect("axis chosen off tangent");
            }
            (normal, t.cross(normal))
        })
        .collect()
}

/// Distance from `p` to the nearest center point of `bunch`, with its index.
/// Ties go to the smaller index.
///
/// # Panics
/// Panics if `bunch` is out of range.
pub fn centerline_distance(p: Point3, braid: &SyntheticBraid, bunch: usize) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (k, &c) in braid.centerlines[bunch].points().iter().enumerate() {
        let d2 = p.distance_squared(c);
        if d2 < best.0 {
            best = (d2, k);
        }
    }
    (best.0.sqrt(), best.1)
}
