//! Rebuilding coarse braid strands around a fitted synthetic braid.
//!
//! The pipeline isolates strands under the braid mask, allocates them to
//! bunches, pulls stray points back onto each bunch's tube, reattaches the
//! untouched tails below the braid and finally downsamples and smooths.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{BraidError, Result};
use crate::raster::{mask_strands, ProjectionSpec};
use crate::synth::{centerline_distance, SyntheticBraid};
use crate::types::{GrayImage, Point3, Strand, StrandId, StrandSet};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    /// Inclusion radius as a multiple of the braid radius.
    pub inclusion_factor: f64,
    pub downsample_keep_every: usize,
    pub smooth_window: usize,
    pub balance: bool,
    /// Fraction of projected points that must fall on the mask.
    pub mask_threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { inclusion_factor: 1.2, downsample_keep_every: 2, smooth_window: 5, balance: true, mask_threshold: 0.5 }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BraidError::InvalidConfig(m.into()));
        if !(self.inclusion_factor > 1.0) {
            return bad("inclusion_factor must be > 1");
        }
        if self.downsample_keep_every < 1 {
            return bad("downsample_keep_every must be >= 1");
        }
        if self.smooth_window.is_multiple_of(2) {
            return bad("smooth_window must be odd");
        }
        if !(0.0..=1.0).contains(&self.mask_threshold) {
            return bad("mask_threshold must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Assignment of braid-region strands to bunches.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Allocation {
    pub bunch_of: BTreeMap<StrandId, usize>,
    pub rejected: BTreeSet<StrandId>,
}

impl Allocation {
    pub fn members(&self, bunch: usize) -> impl Iterator<Item = StrandId> + '_ {
        self.bunch_of.iter().filter(move |(_, &b)| b == bunch).map(|(&id, _)| id)
    }

    pub fn sizes(&self, n_bunches: usize) -> Vec<usize> {
        let mut sizes = vec![0; n_bunches];
        for &b in self.bunch_of.values() {
            sizes[b] += 1;
        }
        sizes
    }
}

/// Include strands that come within `inclusion_factor · radius` of any
/// center curve and assign each to the bunch nearest its top point.
pub fn allocate(coarse_braid: &StrandSet, braid: &SyntheticBraid, cfg: &RefineConfig) -> Allocation {
    let n = braid.n_bunches();
    let reach = cfg.inclusion_factor * braid.params.radius;
    let mut alloc = Allocation::default();
    // Distance from each included strand's top point to every center curve.
    let mut tops: BTreeMap<StrandId, Vec<f64>> = BTreeMap::new();

    for s in coarse_braid.strands() {
        let near = s.points().iter().any(|&p| (0..n).any(|b| centerline_distance(p, braid, b).0 <= reach));
        if !near {
            alloc.rejected.insert(s.id());
            continue;
        }
        let top = s.points()[0];
        let dists: Vec<f64> = (0..n).map(|b| centerline_distance(top, braid, b).0).collect();
        let best = argmin(&dists);
        alloc.bunch_of.insert(s.id(), best);
        tops.insert(s.id(), dists);
    }

    if cfg.balance {
        balance(&mut alloc, &tops, n);
    }
    alloc
}

fn argmin(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &d)| if d < v[best] { i } else { best })
}

/// Move the cheapest strands from the largest to the smallest bunch until
/// sizes differ by at most one. Cost is the extra top-point distance.
fn balance(alloc: &mut Allocation, tops: &BTreeMap<StrandId, Vec<f64>>, n: usize) {
    loop {
        let sizes = alloc.sizes(n);
        let large = (0..n).fold(0, |b, i| if sizes[i] > sizes[b] { i } else { b });
        let small = (0..n).fold(0, |b, i| if sizes[i] < sizes[b] { i } else { b });
        if sizes[large] - sizes[small] <= 1 {
            return;
        }
        let mover = alloc
            .members(large)
            .map(|id| (tops[&id][small] - tops[&id][large], id))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
            .map(|(_, id)| id)
            .expect("largest bunch is non-empty");
        alloc.bunch_of.insert(mover, small);
    }
}

/// Pull every point of `strands` that lies outside its bunch tube radially
/// back onto the tube surface; points inside are kept.
pub fn reconstruct_bunch(strands: &StrandSet, braid: &SyntheticBraid, bunch: usize) -> Result<StrandSet> {
    let center = braid.centerlines[bunch].points();
    let out = strands
        .strands()
        .iter()
        .map(|s| {
            let pts = s.points();
            // Walk downward from the point closest to the center curve, then upward.
            let seed = (0..pts.len())
                .min_by(|&i, &j| {
                    centerline_distance(pts[i], braid, bunch).0.total_cmp(&centerline_distance(pts[j], braid, bunch).0)
                })
                .unwrap_or(0);
            let mut moved = pts.to_vec();
            for i in (seed..pts.len()).chain((0..seed).rev()) {
                let (d, k) = centerline_distance(pts[i], braid, bunch);
                let r = braid.local_radius(bunch, k);
                if d > r {
                    let c = center[k];
                    moved[i] = c + (pts[i] - c).scale(r / d);
                }
            }
            dedup_consecutive(&mut moved);
            Ok(Strand::new(s.id(), moved)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StrandSet::new(out)?)
}

// Two points snapped onto the same surface spot collapse into one.
fn dedup_consecutive(points: &mut Vec<Point3>) {
    points.dedup();
}

/// Replace allocated strands by their reconstructions and reattach the
/// original points past the reconstructed prefix, translated so they keep
/// their original offset from the new junction point.
pub fn replace_and_attach(original: &StrandSet, reconstructed: &StrandSet, allocation: &Allocation) -> Result<StrandSet> {
    for s in reconstructed.strands() {
        if !allocation.bunch_of.contains_key(&s.id()) {
            return Err(BraidError::UnexpectedReconstruction(s.id()));
        }
    }
    let mut out = Vec::with_capacity(original.len());
    for s in original.strands() {
        if !allocation.bunch_of.contains_key(&s.id()) {
            out.push(s.clone());
            continue;
        }
        let rec = reconstructed.get(s.id()).ok_or(BraidError::MissingReconstruction(s.id()))?;
        let prefix = braid_prefix_len(s, rec);
        let mut points = rec.points().to_vec();
        if prefix < s.len() {
            let shift = points[points.len() - 1] - s.points()[prefix - 1];
            points.extend(s.points()[prefix..].iter().map(|&p| p + shift));
        }
        out.push(Strand::new(s.id(), points)?);
    }
    Ok(StrandSet::new(out)?)
}

// Original points covered by a reconstruction. Reconstructions keep point
// counts except for collapsed duplicates, which only ever shorten them.
fn braid_prefix_len(original: &Strand, rec: &Strand) -> usize {
    rec.len().min(original.len())
}

/// Keep every `k`-th point (plus the last), then apply a centered moving
/// average whose window shrinks symmetrically at the ends.
pub fn downsample_smooth(strands: &StrandSet, cfg: &RefineConfig) -> Result<StrandSet> {
    cfg.validate()?;
    map_strands(strands, |pts| smooth(&downsample(pts, cfg.downsample_keep_every), cfg.smooth_window))
}

/// The reverse order, smoothing first; exposed for comparison only.
pub fn smooth_then_downsample(strands: &StrandSet, cfg: &RefineConfig) -> Result<StrandSet> {
    cfg.validate()?;
    map_strands(strands, |pts| downsample(&smooth(pts, cfg.smooth_window), cfg.downsample_keep_every))
}

fn map_strands(strands: &StrandSet, f: impl Fn(&[Point3]) -> Vec<Point3>) -> Result<StrandSet> {
    let out = strands
        .strands()
        .iter()
        .map(|s| {
            let mut pts = f(s.points());
            dedup_consecutive(&mut pts);
            Ok(Strand::new(s.id(), pts)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StrandSet::new(out)?)
}

pub fn downsample(points: &[Point3], keep_every: usize) -> Vec<Point3> {
    let mut out: Vec<Point3> = points.iter().step_by(keep_every.max(1)).copied().collect();
    if !(points.len() - 1).is_multiple_of(keep_every.max(1)) {
        out.push(points[points.len() - 1]);
    }
    out
}

pub fn smooth(points: &[Point3], window: usize) -> Vec<Point3> {
    let n = points.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let span = &points[i - h..=i + h];
            let sum = span.iter().fold(Point3::default(), |acc, &p| acc + p);
            sum.scale(1.0 / span.len() as f64)
        })
        .collect()
}

/// Number of leading points at or above the bottom of the braid.
fn braid_region_len(s: &Strand, bottom_y: f64) -> usize {
    let inside = s.points().iter().take_while(|p| p.y <= bottom_y).count();
    inside.max(2).min(s.len())
}

/// Full refinement: mask selection, allocation, per-bunch reconstruction,
/// tail reattachment and post-processing. Every input strand id appears
/// exactly once in the output.
pub fn refine_all(
    coarse_full: &StrandSet,
    mask: &GrayImage,
    braid: &SyntheticBraid,
    cfg: &RefineConfig,
    spec: ProjectionSpec,
) -> Result<(StrandSet, Allocation)> {
    cfg.validate()?;
    let (inside, _) = mask_strands(coarse_full, mask, spec, cfg.mask_threshold)?;
    let allocation = allocate(&inside, braid, cfg);
    let bottom = braid.bottom_y();

    let mut rebuilt = Vec::new();
    for bunch in 0..braid.n_bunches() {
        let members = allocation
            .members(bunch)
            .map(|id| {
                let s = coarse_full.get(id).expect("allocated ids come from the input");
                Strand::new(id, s.points()[..braid_region_len(s, bottom)].to_vec())
            })
            .collect::<Result<Vec<_>, _>>()?;
        rebuilt.extend(reconstruct_bunch(&StrandSet::new(members)?, braid, bunch)?.into_strands());
    }
    let rebuilt = StrandSet::new(rebuilt)?;
    let replaced = replace_and_attach(coarse_full, &rebuilt, &allocation)?;
    Ok((downsample_smooth(&replaced, cfg)?, allocation))
}
