//! Browser bindings for the braid demo page.
//!
//! Each exported function has a plain Rust twin in [`demo`] so the logic
//! runs and tests natively.

use wasm_bindgen::prelude::*;

pub mod demo {
    use std::f64::consts::TAU;

    use braid_core::refine::smooth_then_downsample;
    use braid_core::simulate::{default_midline, params_along};
    use braid_core::{
        downsample_smooth, edge_image_synthetic, fit_from, generate, simulate_coarse, BraidParams, FitConfig, LossWeights,
        Point3, ProjectionSpec, RefineConfig, Strand, StrandId, StrandSet,
    };

    const BUNCH_RGB: [[u8; 3]; 3] = [[230, 57, 70], [69, 123, 230], [60, 190, 110]];

    fn braid_params(spec: ProjectionSpec, a: f64, b: f64, w: f64, radius: f64) -> BraidParams {
        let mut p = params_along(&default_midline(spec, 1.75 * a), spec.height / 2, 0.0);
        p.b = b;
        p.w = w;
        p.radius = radius;
        p
    }

    /// RGBA pixels of the braid's edge band with its center curves drawn on top.
    pub fn render(a: f64, b: f64, w: f64, radius: f64, width: usize, height: usize, seed: u64) -> Result<Vec<u8>, String> {
        let spec = ProjectionSpec::new(width, height).map_err(|e| e.to_string())?;
        let braid = generate(&braid_params(spec, a, b, w, radius), seed).map_err(|e| e.to_string())?;
        let edges = edge_image_synthetic(&braid, spec, 1.0);
        let mut rgba: Vec<u8> = edges
            .pixels()
            .iter()
            .flat_map(|&v| {
                let g = (20.0 + 215.0 * v).round() as u8;
                [g, g, g, 255]
            })
            .collect();
        for (bunch, c) in braid.centerlines.iter().enumerate() {
            for &p in c.points() {
                if let Some((col, row)) = spec.pixel_of(p) {
                    let i = 4 * (row * width + col);
                    rgba[i..i + 3].copy_from_slice(&BUNCH_RGB[bunch % 3]);
                }
            }
        }
        Ok(rgba)
    }

    /// Fit a and b to a small simulated braid. Returns `[a, b, loss_0, .., loss_n]`.
    pub fn short_fit(a0: f64, b0: f64, epochs: usize, seed: u64) -> Result<Vec<f64>, String> {
        let spec = ProjectionSpec::new(96, 192).map_err(|e| e.to_string())?;
        let truth = braid_params(spec, 20.0, 10.0, 1.0, 5.0);
        let sim = simulate_coarse(&truth, 0.5, 4, spec, seed).map_err(|e| e.to_string())?;
        let mut start = truth.clone();
        start.a = a0;
        start.b = b0;
        let cfg = FitConfig { epochs, seed, lr: 1e-2, lr_drop_epochs: vec![epochs / 2], ..FitConfig::default() };
        let trace = fit_from(start, &sim.strands, &sim.edges, &LossWeights::default(), &cfg).map_err(|e| e.to_string())?;
        let mut out = vec![trace.final_params.a, trace.final_params.b];
        out.extend(trace.reports.iter().map(|r| r.l_total));
        Ok(out)
    }

    fn peak_to_peak(set: &StrandSet) -> f64 {
        let xs = set.strands()[0].points().iter().map(|p| p.x);
        xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min)
    }

    /// Peak-to-peak x of a sinusoid: original, downsample-then-smooth, smooth-then-downsample.
    pub fn order_comparison(period: f64, keep_every: usize, window: usize) -> Result<Vec<f64>, String> {
        if period.is_nan() || period <= 0.0 {
            return Err("period must be > 0".into());
        }
        let n = (3.0 * period).ceil().max(8.0) as usize;
        let pts = (0..n).map(|i| Point3::new(10.0 * (TAU * i as f64 / period).sin(), i as f64, 0.0)).collect();
        let strand = Strand::new(StrandId(0), pts).map_err(|e| e.to_string())?;
        let set = StrandSet::new(vec![strand]).map_err(|e| e.to_string())?;
        let cfg = RefineConfig { downsample_keep_every: keep_every, smooth_window: window, ..RefineConfig::default() };
        let ours = downsample_smooth(&set, &cfg).map_err(|e| e.to_string())?;
        let other = smooth_then_downsample(&set, &cfg).map_err(|e| e.to_string())?;
        Ok(vec![peak_to_peak(&set), peak_to_peak(&ours), peak_to_peak(&other)])
    }
}

/// RGBA image of a braid for a `<canvas>` of `width` x `height`.
#[wasm_bindgen]
pub fn render_braid(a: f64, b: f64, w: f64, radius: f64, width: u32, height: u32, seed: u32) -> Result<Vec<u8>, JsError> {
    demo::render(a, b, w, radius, width as usize, height as usize, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fit_braid(a0: f64, b0: f64, epochs: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    demo::short_fit(a0, b0, epochs as usize, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare_orders(period: f64, keep_every: u32, window: u32) -> Result<Vec<f64>, JsError> {
    demo::order_comparison(period, keep_every as usize, window as usize).map_err(|e| JsError::new(&e))
}
