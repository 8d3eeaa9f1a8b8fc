//! Synthetic coarse inputs with known ground truth.
//!
//! Strands are traced on the ground-truth tube and jittered with isotropic
//! Gaussian noise; the mask is the thresholded tube silhouette and the edge
//! image is the braid's own edge band.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{BraidError, Result};
use crate::raster::{edge_image_synthetic, rasterize_tube, ProjectionSpec};
use crate::synth::{generate, transport_frames, BraidParams};
use crate::types::{GrayImage, MidLineAnnotation, Point2, Strand, StrandId, StrandSet};

/// Simulated observation of a braid.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub strands: StrandSet,
    pub mask: GrayImage,
    pub edges: GrayImage,
}

pub fn simulate_coarse(
    truth: &BraidParams,
    noise_sigma: f64,
    strands_per_bunch: usize,
    spec: ProjectionSpec,
    seed: u64,
) -> Result<Simulation> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(BraidError::InvalidConfig(format!("noise sigma {noise_sigma}")));
    }
    let braid = generate(truth, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0a2_5e00_0001);

    let mut strands = Vec::with_capacity(truth.n_bunches * strands_per_bunch);
    for (bunch, center) in braid.centerlines.iter().enumerate() {
        let frames = transport_frames(center.points());
        for j in 0..strands_per_bunch {
            let theta = rng.gen_range(0.0..TAU);
            let (c, s) = (theta.cos(), theta.sin());
            let points = center
                .points()
                .iter()
                .zip(&frames)
                .zip(&braid.radius_profile[bunch])
                .map(|((&p, &(n, b)), &r)| {
                    let mut q = p + n.scale(r * c) + b.scale(r * s);
                    // Always drawn, so strand angles do not depend on sigma.
                    let mut jitter = || noise_sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                    q.x += jitter();
                    q.y += jitter();
                    q.z += jitter();
                    q
                })
                .collect();
            strands.push(Strand::new(StrandId((bunch * strands_per_bunch + j) as u64), points)?);
        }
    }

    let silhouette = rasterize_tube(&StrandSet::new(braid.centerlines.clone())?, &braid.radius_profile, spec, 0.0)?;
    Ok(Simulation {
        strands: StrandSet::new(strands)?,
        mask: silhouette.map(|v| if v > 0.5 { 1.0 } else { 0.0 }),
        edges: edge_image_synthetic(&braid, spec, 0.0),
    })
}

/// A straight vertical mid-line through the image center.
pub fn default_midline(spec: ProjectionSpec, width_px: f64) -> MidLineAnnotation {
    let x = (spec.width as f64 / 2.0).floor();
    let margin = (spec.height as f64 * 0.05).floor();
    MidLineAnnotation::new(vec![Point2::new(x, margin), Point2::new(x, spec.height as f64 - 1.0 - margin)], width_px)
        .expect("image is at least one pixel tall")
}

/// Ground-truth braid parameters laid out along `midline` at depth `z_shift`.
pub fn params_along(midline: &MidLineAnnotation, n_points: usize, z_shift: f64) -> BraidParams {
    let mut p = BraidParams::new(midline.width_px() / 1.75, 10.0, n_points);
    let path = midline.resample(n_points);
    p.shift_x = path.iter().map(|q| q.x).collect();
    p.shift_y = path.iter().enumerate().map(|(k, q)| q.y - k as f64 * p.t_step).collect();
    p.shift_z = z_shift;
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::centerline_distance;

    fn truth() -> (BraidParams, ProjectionSpec) {
        let spec = ProjectionSpec::new(128, 256).unwrap();
        (params_along(&default_midline(spec, 35.0), 120, 0.0), spec)
    }

    #[test]
    fn noiseless_points_lie_on_the_tube() {
        let (p, spec) = truth();
        let sim = simulate_coarse(&p, 0.0, 4, spec, 1).unwrap();
        let braid = generate(&p, 1).unwrap();
        assert_eq!(sim.strands.len(), 12);
        for (i, s) in sim.strands.strands().iter().enumerate() {
            for q in s.points() {
                let (d, _) = centerline_distance(*q, &braid, i / 4);
                assert!((d - 7.0).abs() < 1e-6, "{d}");
            }
        }
        assert!(sim.mask.pixels().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(sim.mask.pixels().contains(&1.0));
    }

    #[test]
    fn same_seed_same_output() {
        let (p, spec) = truth();
        assert_eq!(simulate_coarse(&p, 0.5, 3, spec, 9).unwrap(), simulate_coarse(&p, 0.5, 3, spec, 9).unwrap());
        assert_ne!(simulate_coarse(&p, 0.5, 3, spec, 9).unwrap(), simulate_coarse(&p, 0.5, 3, spec, 10).unwrap());
    }
}
