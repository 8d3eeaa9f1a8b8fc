use std::f64::consts::TAU;

use braid_core::io::{format_strands, parse_strands};
use braid_core::losses::{chamfer_points, depth_regularizer};
use braid_core::synth::RING_STRANDS;
use braid_core::*;
use proptest::prelude::*;

fn brute_chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    let one_way = |from: &[Point3], to: &[Point3]| {
        from.iter().map(|p| to.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min)).sum::<f64>() / from.len() as f64
    };
    one_way(a, b) + one_way(b, a)
}

fn point() -> impl Strategy<Value = Point3> {
    (-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(point(), 1..max)
}

fn rotate(p: Point3, angle: f64, shift: Point3) -> Point3 {
    let (c, s) = (angle.cos(), angle.sin());
    Point3::new(c * p.x - s * p.z, p.y, s * p.x + c * p.z) + shift
}

fn strand_points() -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(point(), 2..40).prop_filter("distinct consecutive points", |v| v.windows(2).all(|w| w[0] != w[1]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_matches_brute_force(a in cloud(200), b in cloud(200)) {
        let fast = chamfer_points(&a, &b).unwrap();
        let slow = brute_chamfer(&a, &b);
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn chamfer_is_symmetric_and_self_zero(a in cloud(120), b in cloud(120)) {
        prop_assert_eq!(chamfer_points(&a, &b).unwrap(), chamfer_points(&b, &a).unwrap());
        prop_assert_eq!(chamfer_points(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_ignores_common_rigid_motion(a in cloud(80), b in cloud(80), angle in 0.0..TAU, shift in point()) {
        let before = chamfer_points(&a, &b).unwrap();
        let ra: Vec<_> = a.iter().map(|&p| rotate(p, angle, shift)).collect();
        let rb: Vec<_> = b.iter().map(|&p| rotate(p, angle, shift)).collect();
        let after = chamfer_points(&ra, &rb).unwrap();
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
    }

    #[test]
    fn arc_length_survives_rigid_motion(pts in strand_points(), angle in 0.0..TAU, shift in point()) {
        let s = Strand::new(StrandId(0), pts.clone()).unwrap();
        let moved: Vec<_> = pts.iter().map(|&p| rotate(p, angle, shift)).collect();
        if let Ok(m) = Strand::new(StrandId(0), moved) {
            prop_assert!((arc_length(&s) - arc_length(&m)).abs() <= 1e-9 * arc_length(&s).max(1.0));
        }
    }

    #[test]
    fn regularizer_shift_and_scale(z in prop::collection::vec(-20.0..20.0f64, 3..60), c in 0.1..10.0f64, k in -100.0..100.0f64) {
        let base = depth_regularizer(&z, 0.05, 10.0, 1.0).unwrap();
        let shifted: Vec<_> = z.iter().map(|v| v + k).collect();
        let scaled: Vec<_> = z.iter().map(|v| v * c).collect();
        prop_assert!((depth_regularizer(&shifted, 0.05, 10.0, 1.0).unwrap() - base).abs() <= 1e-6 * base.max(1.0));
        prop_assert!((depth_regularizer(&scaled, 0.05, 10.0, 1.0).unwrap() - c * base).abs() <= 1e-9 * (c * base).max(1.0));
    }

    #[test]
    fn strand_files_round_trip(sets in prop::collection::vec(strand_points(), 0..5)) {
        let strands: Vec<_> = sets
            .into_iter()
            .enumerate()
            .map(|(i, mut p)| {
                if p[0].y > p[p.len() - 1].y {
                    p.reverse();
                }
                Strand::new(StrandId(i as u64 * 3), p).unwrap()
            })
            .collect();
        let set = StrandSet::new(strands).unwrap();
        prop_assert_eq!(parse_strands(&format_strands(&set)).unwrap(), set);
    }

    #[test]
    fn wider_tubes_cover_more(r in 0.5..10.0f64, extra in 0.1..5.0f64, soft in 0.0..2.0f64) {
        let spec = ProjectionSpec::new(48, 48).unwrap();
        let line = StrandSet::new(vec![Strand::new(StrandId(0), vec![Point3::new(10.0, 5.0, 0.0), Point3::new(30.0, 40.0, 0.0)]).unwrap()]).unwrap();
        let thin = rasterize_tube(&line, &[vec![r, r]], spec, soft).unwrap();
        let thick = rasterize_tube(&line, &[vec![r + extra, r + extra]], spec, soft).unwrap();
        prop_assert!(thin.pixels().iter().zip(thick.pixels()).all(|(a, b)| a <= b));
    }

    #[test]
    fn hard_raster_is_a_union_of_discs(pts in prop::collection::vec((2.0..38.0f64, 2.0..38.0f64), 2..6), r in 0.5..6.0f64) {
        let pts: Vec<_> = pts.into_iter().map(|(x, y)| Point3::new(x, y, 0.0)).collect();
        prop_assume!(pts.windows(2).all(|w| w[0] != w[1]));
        let spec = ProjectionSpec::new(40, 40).unwrap();
        let set = StrandSet::new(vec![Strand::new(StrandId(0), pts.clone()).unwrap()]).unwrap();
        let img = rasterize_tube(&set, &[vec![r; pts.len()]], spec, 0.0).unwrap();
        for row in 0..40 {
            for col in 0..40 {
                let q = Point3::new(col as f64, row as f64, 0.0);
                // Oracle: dense sampling of each segment.
                let d = pts
                    .windows(2)
                    .flat_map(|w| (0..=2000).map(move |i| w[0] + (w[1] - w[0]).scale(i as f64 / 2000.0)))
                    .map(|c| c.distance(q))
                    .fold(f64::INFINITY, f64::min);
                let v = img.get(col, row);
                if d < r - 0.05 {
                    prop_assert_eq!(v, 1.0);
                } else if d > r + 0.05 {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }
}

#[test]
fn edge_band_is_dark_inside_the_inner_silhouette() {
    let spec = ProjectionSpec::new(128, 256).unwrap();
    let mut p = BraidParams::new(20.0, 10.0, 120);
    p.shift_x = vec![64.0; 120];
    p.shift_y = (0..120).map(|k| 20.0 + 1.8 * k as f64 - 0.05 * k as f64).collect();
    let braid = generate(&p, 3).unwrap();
    let edges = edge_image_synthetic(&braid, spec, 0.0);
    let inner_radii: Vec<Vec<f64>> = braid.radius_profile.iter().map(|r| r.iter().map(|v| v / 1.4).collect()).collect();
    let inner = rasterize_tube(&StrandSet::new(braid.centerlines.clone()).unwrap(), &inner_radii, spec, 0.0).unwrap();
    let outer = rasterize_tube(&StrandSet::new(braid.centerlines.clone()).unwrap(), &braid.radius_profile, spec, 0.0).unwrap();
    for i in 0..edges.pixels().len() {
        let (e, inn, out) = (edges.pixels()[i], inner.pixels()[i], outer.pixels()[i]);
        if inn == 1.0 {
            assert_eq!(e, 0.0);
        }
        assert_eq!(e, out - inn);
    }
    assert!(edges.pixels().contains(&1.0));
}

#[test]
fn generated_rings_sit_at_the_bunch_radius() {
    let p = BraidParams::new(20.0, 10.0, 80).with_random_noise(0.1, 5);
    let braid = generate(&p, 11).unwrap();
    assert_eq!(braid.tube_strands.len(), 3 * (RING_STRANDS + 1));
    for s in braid.tube_strands.strands() {
        let bunch = braid.bunch_of[&s.id()];
        for (k, q) in s.points().iter().enumerate() {
            let c = braid.centerlines[bunch].points()[k];
            let d = q.distance(c);
            assert!(d < 1e-9 || (d - braid.local_radius(bunch, k)).abs() < 1e-9);
        }
    }
}

#[test]
fn simulated_noise_has_the_requested_spread() {
    let spec = ProjectionSpec::new(256, 512).unwrap();
    let truth = simulate::params_along(&simulate::default_midline(spec, 35.0), 200, 0.0);
    let braid = generate(&truth, 2).unwrap();
    let clean = simulate_coarse(&truth, 0.0, 8, spec, 2).unwrap();
    let noisy = simulate_coarse(&truth, 0.5, 8, spec, 2).unwrap();
    assert_eq!(clean.strands.point_count(), noisy.strands.point_count());
    // With the same seed the ring angles match, so the offsets are the noise itself.
    let offsets: Vec<f64> =
        clean.strands.points().zip(noisy.strands.points()).flat_map(|(a, b)| [b.x - a.x, b.y - a.y, b.z - a.z]).collect();
    let n = offsets.len() as f64;
    let mean = offsets.iter().sum::<f64>() / n;
    let sd = (offsets.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.02, "{mean}");
    assert!((sd - 0.5).abs() < 0.02, "{sd}");
    assert_eq!(braid.n_bunches(), 3);
}
