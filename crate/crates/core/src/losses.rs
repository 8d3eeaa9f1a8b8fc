//! Point-cloud, projection and depth-regularization losses.

use crate::error::{BraidError, Result};
use crate::synth::BraidParams;
use crate::types::{GrayImage, Point3, StrandSet};

/// Anchor value of the depth-amplitude penalty `|b - anchor|`.
pub const DEFAULT_B_ANCHOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the point-cloud Chamfer term in the total.
    pub lambda_pc: f64,
    /// Weight of `|b - b_anchor|` inside the regularizer.
    pub lambda_b: f64,
    /// Weight of the projection term in the total.
    pub lambda_proj: f64,
    /// Weight of the regularizer in the total.
    pub lambda_reg: f64,
    /// Log clamp for the cross-entropy, in `(0, 0.5)`.
    pub bce_epsilon: f64,
    pub b_anchor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_pc: 1.0, lambda_b: 1.0, lambda_proj: 1e-4, lambda_reg: 1e-3, bce_epsilon: 1e-7, b_anchor: DEFAULT_B_ANCHOR }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_pc >= 0.0
            && self.lambda_b >= 0.0
            && self.lambda_proj >= 0.0
            && self.lambda_reg >= 0.0
            && self.bce_epsilon > 0.0
            && self.bce_epsilon < 0.5
            && self.b_anchor.is_finite();
        if ok {
            Ok(())
        } else {
            Err(BraidError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Individual loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_pc: f64,
    pub l_proj: f64,
    pub l_reg: f64,
    pub l_total: f64,
}

impl LossReport {
    pub fn combine(l_pc: f64, l_proj: f64, l_reg: f64, weights: &LossWeights) -> Self {
        Self {
            l_pc,
            l_proj,
            l_reg,
            l_total: weights.lambda_pc * l_pc + weights.lambda_proj * l_proj + weights.lambda_reg * l_reg,
        }
    }
}

/// Average occupancy the grid resolution aims for.
const POINTS_PER_CELL: f64 = 3.0;

/// Uniform grid over a point cloud answering exact nearest-neighbor queries.
#[derive(Debug, Clone)]
pub struct PointGrid {
    origin: Point3,
    cell: f64,
    dims: [usize; 3],
    /// Start offsets into `points` per cell, length `cells + 1`.
    starts: Vec<usize>,
    points: Vec<Point3>,
}

impl PointGrid {
    /// Returns `None` for an empty cloud.
    pub fn new(points: &[Point3]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let extent = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
        let cell = Self::cell_size(extent, points.len());
        let dims = extent.map(|e| ((e / cell).floor() as usize + 1).max(1));

        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; n_cells + 1];
        let keys: Vec<usize> = points
            .iter()
            .map(|&p| {
                let c = Self::coords(lo, cell, dims, p);
                (c[2] * dims[1] + c[1]) * dims[0] + c[0]
            })
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut sorted = vec![Point3::default(); points.len()];
        for (&k, &p) in keys.iter().zip(points) {
            sorted[fill[k]] = p;
            fill[k] += 1;
        }
        Some(Self { origin: lo, cell, dims, starts: counts, points: sorted })
    }

    /// Cell edge giving roughly `POINTS_PER_CELL` points per cell.
    fn cell_size(extent: [f64; 3], n: usize) -> f64 {
        let max_extent = extent.iter().copied().fold(0.0, f64::max);
        if max_extent <= 0.0 {
            return 1.0;
        }
        let cells = |h: f64| extent.iter().map(|e| (e / h).floor() + 1.0).product::<f64>();
        let target = (n as f64 / POINTS_PER_CELL).max(1.0);
        let (mut lo, mut hi) = (max_extent / target.max(1.0) / 4.0, max_extent * 2.0);
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if cells(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn coords(origin: Point3, cell: f64, dims: [usize; 3], p: Point3) -> [usize; 3] {
        let f = |v: f64, o: f64, d: usize| (((v - o) / cell).floor().max(0.0) as usize).min(d - 1);
        [f(p.x, origin.x, dims[0]), f(p.y, origin.y, dims[1]), f(p.z, origin.z, dims[2])]
    }

    /// Smallest squared distance from `q` to the cloud.
    pub fn nearest_squared(&self, q: Point3) -> f64 {
        let c = Self::coords(self.origin, self.cell, self.dims, q);
        // Gap from `q` to the nearest face of its (clamped) cell.
        let slack = [(q.x, self.origin.x, 0), (q.y, self.origin.y, 1), (q.z, self.origin.z, 2)]
            .iter()
            .map(|&(v, o, axis)| {
                let lo = o + c[axis] as f64 * self.cell;
                (v - lo).min(lo + self.cell - v).max(0.0)
            })
            .fold(f64::INFINITY, f64::min);
        let max_ring = self.dims.iter().max().copied().unwrap_or(1);
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            if ring > 0 {
                let bound = (ring - 1) as f64 * self.cell + slack;
                if best <= bound * bound {
                    break;
                }
            }
            self.visit_ring(c, ring, |p| {
                let d = q.distance_squared(p);
                if d < best {
                    best = d;
                }
            });
        }
        best
    }

    fn visit_ring(&self, c: [usize; 3], ring: usize, mut f: impl FnMut(Point3)) {
        let r = ring as isize;
        let range = |axis: usize| {
            let lo = (c[axis] as isize - r).max(0);
            let hi = (c[axis] as isize + r).min(self.dims[axis] as isize - 1);
            lo..=hi
        };
        for z in range(2) {
            let dz = (z - c[2] as isize).abs();
            for y in range(1) {
                let dy = (y - c[1] as isize).abs();
                for x in range(0) {
                    let dx = (x - c[0] as isize).abs();
                    if dx.max(dy).max(dz) != r {
                        continue;
                    }
                    let k = ((z as usize * self.dims[1]) + y as usize) * self.dims[0] + x as usize;
                    for &p in &self.points[self.starts[k]..self.starts[k + 1]] {
                        f(p);
                    }
                }
            }
        }
    }

    /// Mean nearest-neighbor distance from `queries` to this cloud.
    pub fn mean_nearest(&self, queries: &[Point3]) -> f64 {
        let sum: f64 = queries.iter().map(|&q| self.nearest_squared(q).sqrt()).sum();
        sum / queries.len() as f64
    }
}

/// Symmetric Chamfer distance between two point sets.
pub fn chamfer_points(s1: &[Point3], s2: &[Point3]) -> Result<f64> {
    let g1 = PointGrid::new(s1).ok_or(BraidError::Empty("first point set"))?;
    let g2 = PointGrid::new(s2).ok_or(BraidError::Empty("second point set"))?;
    Ok(g2.mean_nearest(s1) + g1.mean_nearest(s2))
}

/// Chamfer distance over all points of two strand sets; strand identity is ignored.
pub fn chamfer(s1: &StrandSet, s2: &StrandSet) -> Result<f64> {
    let p1: Vec<Point3> = s1.points().collect();
    let p2: Vec<Point3> = s2.points().collect();
    chamfer_points(&p1, &p2)
}

#[inline]
fn bce_term(target: f64, pred: f64, eps: f64) -> f64 {
    let p = pred.clamp(eps, 1.0 - eps);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(BraidError::InvalidConfig(format!("bce epsilon {eps} outside (0, 0.5)")))
    }
}

/// Mean pixelwise binary cross-entropy of predicted edges against real edges.
pub fn projection_bce(real: &GrayImage, synth: &GrayImage, eps: f64) -> Result<f64> {
    if !real.same_size(synth) {
        return Err(BraidError::DimensionMismatch(real.width(), real.height(), synth.width(), synth.height()));
    }
    check_eps(eps)?;
    let sum: f64 = real.pixels().iter().zip(synth.pixels()).map(|(&t, &p)| bce_term(t, p, eps)).sum();
    Ok(sum / real.pixels().len() as f64)
}

/// Real edge image prepared for repeated cross-entropy evaluation against
/// predictions that are zero almost everywhere.
#[derive(Debug, Clone)]
pub struct BceTarget {
    real: GrayImage,
    eps: f64,
    zero_terms: Vec<f64>,
    zero_sum: f64,
}

impl BceTarget {
    pub fn new(real: GrayImage, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let zero_terms: Vec<f64> = real.pixels().iter().map(|&t| bce_term(t, 0.0, eps)).collect();
        let zero_sum = zero_terms.iter().sum();
        Ok(Self { real, eps, zero_terms, zero_sum })
    }

    pub fn image(&self) -> &GrayImage {
        &self.real
    }

    /// Same value as [`projection_bce`] up to summation order.
    pub fn eval(&self, synth: &[f64]) -> f64 {
        let targets = self.real.pixels();
        let mut correction = 0.0;
        for (i, &p) in synth.iter().enumerate() {
            if p != 0.0 {
                correction += bce_term(targets[i], p, self.eps) - self.zero_terms[i];
            }
        }
        (self.zero_sum + correction) / targets.len() as f64
    }
}

/// Sample standard deviation of the forward-difference derivative of `z`
/// plus `lambda·|b - 10|`.
pub fn depth_regularizer(z: &[f64], delta_t: f64, b: f64, lambda: f64) -> Result<f64> {
    depth_regularizer_anchored(z, delta_t, b, lambda, DEFAULT_B_ANCHOR)
}

pub fn depth_regularizer_anchored(z: &[f64], delta_t: f64, b: f64, lambda: f64, b_anchor: f64) -> Result<f64> {
    if z.len() < 3 {
        return Err(BraidError::LengthMismatch(format!("depth profile needs >= 3 samples, got {}", z.len())));
    }
    if !(delta_t > 0.0) {
        return Err(BraidError::InvalidParams(format!("delta_t = {delta_t} must be > 0")));
    }
    let deriv: Vec<f64> = z.windows(2).map(|w| (w[1] - w[0]) / delta_t).collect();
    let mean = deriv.iter().sum::<f64>() / deriv.len() as f64;
    let var = deriv.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (deriv.len() - 1) as f64;
    // Spread within the rounding error of the differences counts as none.
    let scale = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let resolution = 8.0 * f64::EPSILON * scale / delta_t;
    let std = if var.sqrt() <= resolution { 0.0 } else { var.sqrt() };
    Ok(std + lambda * (b - b_anchor).abs())
}

/// Regularizer summed over the bunches of `params`.
pub fn braid_regularizer(params: &BraidParams, weights: &LossWeights) -> Result<f64> {
    (0..params.n_bunches)
        .map(|i| {
            depth_regularizer_anchored(&params.depth_profile(i), params.t_step, params.b, weights.lambda_b, weights.b_anchor)
        })
        .sum()
}

/// All three terms and their weighted total.
///
/// `s1` is the synthetic braid, `s2` the observed strands, `real`/`synth`
/// the real and predicted edge images, `depths` one depth profile per bunch.
pub fn total(
    s1: &StrandSet,
    s2: &StrandSet,
    real: &GrayImage,
    synth: &GrayImage,
    depths: &[Vec<f64>],
    params: &BraidParams,
    weights: &LossWeights,
) -> Result<LossReport> {
    weights.validate()?;
    let l_pc = chamfer(s1, s2)?;
    let l_proj = projection_bce(real, synth, weights.bce_epsilon)?;
    let l_reg = depths
        .iter()
        .map(|z| depth_regularizer_anchored(z, params.t_step, params.b, weights.lambda_b, weights.b_anchor))
        .sum::<Result<f64>>()?;
    Ok(LossReport::combine(l_pc, l_proj, l_reg, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cloud(pts: &[(f64, f64, f64)]) -> Vec<Point3> {
        pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()
    }

    #[test]
    fn chamfer_hand_values() {
        assert_eq!(chamfer_points(&cloud(&[(0.0, 0.0, 0.0)]), &cloud(&[(3.0, 4.0, 0.0)])).unwrap(), 10.0);
        let a = cloud(&[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)]);
        assert_eq!(chamfer_points(&a, &cloud(&[(0.0, 0.0, 0.0)])).unwrap(), 0.5);
        assert_eq!(chamfer_points(&a, &a).unwrap(), 0.0);
        assert!(chamfer_points(&a, &[]).is_err());
    }

    #[test]
    fn grid_handles_queries_outside_the_cloud() {
        let pts = cloud(&[(0.0, 0.0, 0.0), (10.0, 0.0, 0.0), (0.0, 10.0, 0.0), (5.0, 5.0, 0.0)]);
        let g = PointGrid::new(&pts).unwrap();
        assert_eq!(g.nearest_squared(Point3::new(-3.0, -4.0, 7.0)), 9.0 + 16.0 + 49.0);
        assert_eq!(g.nearest_squared(Point3::new(5.0, 5.0, 1.0)), 1.0);
    }

    #[test]
    fn bce_closed_forms() {
        let half = GrayImage::filled(4, 3, 0.5);
        assert_abs_diff_eq!(projection_bce(&half, &half, 1e-7).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        let ones = GrayImage::filled(4, 3, 1.0);
        let zeros = GrayImage::zeros(4, 3);
        assert_abs_diff_eq!(projection_bce(&ones, &zeros, 1e-7).unwrap(), -(1e-7f64).ln(), epsilon = 1e-9);
        assert!(projection_bce(&ones, &GrayImage::zeros(3, 3), 1e-7).is_err());
    }

    #[test]
    fn bce_target_matches_direct_evaluation() {
        let real = GrayImage::new(3, 2, vec![1.0, 0.0, 0.3, 1.0, 0.0, 0.0]).unwrap();
        let synth = GrayImage::new(3, 2, vec![0.0, 0.2, 0.9, 1.0, 0.0, 0.5]).unwrap();
        let direct = projection_bce(&real, &synth, 1e-7).unwrap();
        let target = BceTarget::new(real, 1e-7).unwrap();
        assert_abs_diff_eq!(target.eval(synth.pixels()), direct, epsilon = 1e-12);
    }

    #[test]
    fn regularizer_hand_values() {
        let linear: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 1.0).collect();
        assert_eq!(depth_regularizer(&linear, 0.05, 10.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(depth_regularizer(&linear, 0.05, 12.0, 1.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(depth_regularizer(&[0.0, 1.0, 0.0], 1.0, 10.0, 1.0).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        assert!(depth_regularizer(&[0.0, 1.0], 1.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn total_without_image_terms_is_chamfer() {
        let s = crate::synth::generate(&BraidParams::new(20.0, 10.0, 40), 0).unwrap();
        let other = crate::synth::generate(&BraidParams::new(22.0, 10.0, 40), 0).unwrap();
        let weights = LossWeights { lambda_proj: 0.0, lambda_reg: 0.0, ..LossWeights::default() };
        let img = GrayImage::zeros(8, 8);
        let depths: Vec<Vec<f64>> = (0..3).map(|i| s.params.depth_profile(i)).collect();
        let report = total(&s.tube_strands, &other.tube_strands, &img, &img, &depths, &s.params, &weights).unwrap();
        assert_eq!(report.l_total, report.l_pc);
        assert_eq!(report.l_pc, chamfer(&s.tube_strands, &other.tube_strands).unwrap());
    }
}
