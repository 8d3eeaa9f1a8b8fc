//! Fitting the synthetic braid to observed strands and edges.
//!
//! Each epoch regenerates the braid, evaluates the weighted loss, estimates
//! the gradient of every learnable scalar by central differences and takes
//! one Adam step. Adam runs in scaled coordinates `θ = (p - p₀) / scale`, so
//! a unit step in `θ` moves parameter `p` by `scale` of its natural units.

use std::time::Instant;

use crate::error::{BraidError, Result};
use crate::losses::{braid_regularizer, BceTarget, LossReport, LossWeights, PointGrid};
use crate::raster::{edge_band_into, ProjectionSpec};
use crate::synth::{generate, BraidParams, SyntheticBraid};
use crate::types::{GrayImage, MidLineAnnotation, Point2, Point3, StrandSet};

/// Scalar parameters that the optimizer may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    A,
    B,
    W,
    TScale,
    Radius,
    ShiftZ,
}

impl Param {
    pub const ALL: [Param; 6] = [Param::A, Param::B, Param::W, Param::TScale, Param::Radius, Param::ShiftZ];

    pub fn name(self) -> &'static str {
        match self {
            Param::A => "a",
            Param::B => "b",
            Param::W => "w",
            Param::TScale => "t_scale",
            Param::Radius => "radius",
            Param::ShiftZ => "z_shift",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn get(self, params: &BraidParams) -> f64 {
        match self {
            Param::A => params.a,
            Param::B => params.b,
            Param::W => params.w,
            Param::TScale => params.t_scale,
            Param::Radius => params.radius,
            Param::ShiftZ => params.shift_z,
        }
    }

    pub fn set(self, params: &mut BraidParams, value: f64) {
        match self {
            Param::A => params.a = value,
            Param::B => params.b = value,
            Param::W => params.w = value,
            Param::TScale => params.t_scale = value,
            Param::Radius => params.radius = value,
            Param::ShiftZ => params.shift_z = value,
        }
    }

    fn default_fd_step(self) -> f64 {
        match self {
            Param::W | Param::TScale => 1e-3,
            _ => 1e-2,
        }
    }

    fn default_scale(self) -> f64 {
        match self {
            Param::W | Param::TScale => 2.0,
            _ => 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Central-difference half step per parameter, in parameter units.
    pub fd_step: [f64; 6],
    /// Parameter units per optimizer unit.
    pub param_scale: [f64; 6],
    pub learnable: Vec<Param>,
    pub seed: u64,
    /// Center points per bunch.
    pub n_points: usize,
    pub n_bunches: usize,
    /// Half-width of the uniform per-bunch radius noise.
    pub noise_amplitude: f64,
    /// Falloff of the rendered edge band in pixels.
    pub softness: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-4,
            lr_drop_epochs: vec![100, 133],
            lr_drop_factor: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            fd_step: Param::ALL.map(Param::default_fd_step),
            param_scale: Param::ALL.map(Param::default_scale),
            learnable: vec![Param::A, Param::B, Param::W, Param::TScale, Param::ShiftZ],
            seed: 0,
            n_points: 200,
            n_bunches: 3,
            noise_amplitude: 0.1,
            softness: 1.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BraidError::InvalidConfig(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr = {} must be > 0", self.lr));
        }
        if !(self.lr_drop_factor > 0.0) {
            return bad("lr_drop_factor must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam constants out of range".into());
        }
        if self.fd_step.iter().chain(&self.param_scale).any(|v| !(*v > 0.0)) {
            return bad("fd_step and param_scale entries must be > 0".into());
        }
        if self.n_points < 3 || self.n_bunches < 2 {
            return bad("need n_points >= 3 and n_bunches >= 2".into());
        }
        if !(0.0..1.0).contains(&self.noise_amplitude) {
            return bad("noise_amplitude must lie in [0, 1)".into());
        }
        if !(self.softness >= 0.0) {
            return bad("softness must be >= 0".into());
        }
        Ok(())
    }

    fn index(p: Param) -> usize {
        Param::ALL.iter().position(|&q| q == p).unwrap()
    }

    pub fn fd_step_of(&self, p: Param) -> f64 {
        self.fd_step[Self::index(p)]
    }

    pub fn scale_of(&self, p: Param) -> f64 {
        self.param_scale[Self::index(p)]
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_drop_epochs.iter().filter(|&&d| d <= epoch).count();
        self.lr * self.lr_drop_factor.powi(drops as i32)
    }
}

/// Starting parameters from a mid-line annotation and the braid-region strands.
///
/// The center path follows the mid-line resampled by arc length, the width
/// sets `a = width / 1.75` and the depth offset is the smallest depth among
/// strand points projecting within half a width of the mid-line.
pub fn initialize(midline: &MidLineAnnotation, braid_strands: &StrandSet, cfg: &FitConfig) -> Result<BraidParams> {
    if braid_strands.is_empty() {
        return Err(BraidError::Empty("braid strands"));
    }
    let half = midline.width_px() / 2.0;
    let z_shift = braid_strands
        .points()
        .filter(|p| midline.distance_to(Point2::new(p.x, p.y)) <= half)
        .map(|p| p.z)
        .fold(f64::INFINITY, f64::min);
    if !z_shift.is_finite() {
        return Err(BraidError::NoPointsNearMidLine);
    }

    let mut params = BraidParams::new(midline.width_px() / 1.75, 10.0, cfg.n_points);
    params.n_bunches = cfg.n_bunches;
    let path = midline.resample(cfg.n_points);
    params.shift_x = path.iter().map(|p| p.x).collect();
    params.shift_y = path.iter().enumerate().map(|(k, p)| p.y - k as f64 * params.t_step).collect();
    params.shift_z = z_shift;
    let params = params.with_random_noise(cfg.noise_amplitude, cfg.seed);
    params.validate()?;
    Ok(params)
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update of `theta` along `grads`.
pub fn step(theta: &[f64], grads: &[f64], state: &AdamState, lr: f64, cfg: &FitConfig) -> Result<(Vec<f64>, AdamState)> {
    if theta.len() != grads.len() || state.m.len() != theta.len() || state.v.len() != theta.len() {
        return Err(BraidError::LengthMismatch("Adam parameter, gradient and state shapes differ".into()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(BraidError::NonFinite(format!("gradient entry {i}")));
    }
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let t = state.t + 1;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let mut next = AdamState { m: Vec::with_capacity(theta.len()), v: Vec::with_capacity(theta.len()), t };
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + (1.0 - b1) * g;
        let v = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = m / c1;
        let v_hat = v / c2;
        out.push(theta[i] - lr * m_hat / (v_hat.sqrt() + cfg.adam_eps));
        next.m.push(m);
        next.v.push(v);
    }
    Ok((out, next))
}

/// Central-difference gradient of `loss` at `x`; entries outside `learnable`
/// stay zero.
pub fn gradient_fd<F>(x: &[f64], learnable: &[bool], loss: F, fd_step: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grads = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        if !learnable[i] {
            continue;
        }
        let h = fd_step[i];
        probe[i] = x[i] + h;
        let up = loss(&probe)?;
        probe[i] = x[i] - h;
        let down = loss(&probe)?;
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(BraidError::NonFinite(format!("loss at probe of entry {i}")));
        }
        grads[i] = (up - down) / (2.0 * h);
    }
    Ok(grads)
}

/// Evaluates the fitting loss for candidate parameters against fixed data.
pub struct LossEvaluator {
    coarse: Vec<Point3>,
    coarse_grid: PointGrid,
    target: BceTarget,
    spec: ProjectionSpec,
    weights: LossWeights,
    softness: f64,
    seed: u64,
}

impl LossEvaluator {
    pub fn new(coarse: &StrandSet, real_edges: &GrayImage, weights: LossWeights, cfg: &FitConfig) -> Result<Self> {
        weights.validate()?;
        let points: Vec<Point3> = coarse.points().collect();
        let coarse_grid = PointGrid::new(&points).ok_or(BraidError::Empty("coarse braid strands"))?;
        Ok(Self {
            coarse: points,
            coarse_grid,
            target: BceTarget::new(real_edges.clone(), weights.bce_epsilon)?,
            spec: ProjectionSpec::new(real_edges.width(), real_edges.height())?,
            weights,
            softness: cfg.softness,
            seed: cfg.seed,
        })
    }

    pub fn braid(&self, params: &BraidParams) -> Result<SyntheticBraid> {
        generate(params, self.seed)
    }

    /// Every term, whatever its weight.
    pub fn report(&self, params: &BraidParams) -> Result<LossReport> {
        let braid = self.braid(params)?;
        let l_pc = self.point_cloud(&braid);
        let l_proj = self.projection(&braid);
        let l_reg = braid_regularizer(params, &self.weights)?;
        Ok(LossReport::combine(l_pc, l_proj, l_reg, &self.weights))
    }

    /// Weighted total, skipping terms whose weight is zero.
    pub fn total(&self, params: &BraidParams) -> Result<f64> {
        self.total_reusing(params, None)
    }

    /// Weighted total; `known` supplies the projection term of parameters
    /// with the same image-plane geometry, which depth changes cannot alter.
    pub fn total_reusing(&self, params: &BraidParams, known: Option<(&BraidParams, f64)>) -> Result<f64> {
        let braid = self.braid(params)?;
        let mut total = 0.0;
        if self.weights.lambda_pc != 0.0 {
            total += self.weights.lambda_pc * self.point_cloud(&braid);
        }
        if self.weights.lambda_proj != 0.0 {
            let l_proj = match known {
                Some((base, l)) if same_projection(base, params) => l,
                _ => self.projection(&braid),
            };
            total += self.weights.lambda_proj * l_proj;
        }
        if self.weights.lambda_reg != 0.0 {
            total += self.weights.lambda_reg * braid_regularizer(params, &self.weights)?;
        }
        Ok(total)
    }

    fn point_cloud(&self, braid: &SyntheticBraid) -> f64 {
        let synth: Vec<Point3> = braid.tube_strands.points().collect();
        let grid = PointGrid::new(&synth).expect("generated braid has points");
        self.coarse_grid.mean_nearest(&synth) + grid.mean_nearest(&self.coarse)
    }

    fn projection(&self, braid: &SyntheticBraid) -> f64 {
        let mut buf = Vec::new();
        edge_band_into(&mut buf, braid, self.spec, self.softness);
        self.target.eval(&buf)
    }
}

/// True when both parameter sets project to the same image.
fn same_projection(p: &BraidParams, q: &BraidParams) -> bool {
    p.a == q.a
        && p.w == q.w
        && p.t_step == q.t_step
        && p.t_scale == q.t_scale
        && p.radius == q.radius
        && p.n_points == q.n_points
        && p.n_bunches == q.n_bunches
        && p.noise == q.noise
        && p.shift_x == q.shift_x
        && p.shift_y == q.shift_y
}

/// Outcome of a fitting run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Loss at the start of each epoch.
    pub reports: Vec<LossReport>,
    /// Learning rate used in each epoch.
    pub learning_rates: Vec<f64>,
    pub initial_params: BraidParams,
    /// Lowest-loss parameters seen, including the state after the last step.
    pub final_params: BraidParams,
    pub final_report: LossReport,
    /// Set when a non-finite loss or gradient stopped the run early.
    pub diverged: bool,
    pub wall_time_s: f64,
}

/// Fit from explicit starting parameters.
pub fn fit_from(
    start: BraidParams,
    coarse_braid: &StrandSet,
    real_edges: &GrayImage,
    weights: &LossWeights,
    cfg: &FitConfig,
) -> Result<FitTrace> {
    cfg.validate()?;
    start.validate()?;
    let clock = Instant::now();
    let eval = LossEvaluator::new(coarse_braid, real_edges, *weights, cfg)?;

    let learnable: Vec<Param> = Param::ALL.into_iter().filter(|p| cfg.learnable.contains(p)).collect();
    let origin: Vec<f64> = learnable.iter().map(|p| p.get(&start)).collect();
    let scales: Vec<f64> = learnable.iter().map(|&p| cfg.scale_of(p)).collect();
    let fd_steps: Vec<f64> = learnable.iter().zip(&scales).map(|(&p, s)| cfg.fd_step_of(p) / s).collect();
    let mask = vec![true; learnable.len()];
    let apply = |theta: &[f64]| {
        let mut p = start.clone();
        for ((param, o), (t, s)) in learnable.iter().zip(&origin).zip(theta.iter().zip(&scales)) {
            param.set(&mut p, o + t * s);
        }
        p
    };
    let mut theta = vec![0.0; learnable.len()];
    let mut adam = AdamState::new(learnable.len());
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut learning_rates = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, BraidParams, LossReport)> = None;
    let mut diverged = false;
    let consider = |params: BraidParams, report: LossReport, best: &mut Option<(f64, BraidParams, LossReport)>| {
        if best.as_ref().is_none_or(|(l, _, _)| report.l_total < *l) {
            *best = Some((report.l_total, params, report));
        }
    };

    for epoch in 0..cfg.epochs {
        let params = apply(&theta);
        let report = match params.validate().and_then(|_| eval.report(&params)) {
            Ok(r) if r.l_total.is_finite() => r,
            _ => {
                diverged = true;
                break;
            }
        };
        reports.push(report);
        consider(params.clone(), report, &mut best);

        let lr = cfg.lr_at(epoch);
        learning_rates.push(lr);
        let probe = |t: &[f64]| -> Result<f64> {
            let p = apply(t);
            // Probes may leave the valid region (e.g. negative amplitude).
            match p.validate() {
                Ok(()) => eval.total_reusing(&p, Some((&params, report.l_proj))),
                Err(_) => Ok(f64::INFINITY),
            }
        };
        let grads = match gradient_fd(&theta, &mask, probe, &fd_steps) {
            Ok(g) => g,
            Err(BraidError::NonFinite(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let (next, state) = step(&theta, &grads, &adam, lr, cfg)?;
        theta = next;
        adam = state;
    }

    if !diverged {
        let params = apply(&theta);
        if let Ok(report) = params.validate().and_then(|_| eval.report(&params)) {
            if report.l_total.is_finite() {
                consider(params, report, &mut best);
            }
        }
    }

    let (_, final_params, final_report) = best.ok_or_else(|| BraidError::NonFinite("loss at the starting parameters".into()))?;
    Ok(FitTrace {
        reports,
        learning_rates,
        initial_params: start,
        final_params,
        final_report,
        diverged,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

/// Initialize from the annotation, then optimize.
pub fn fit(
    coarse_braid: &StrandSet,
    real_edges: &GrayImage,
    midline: &MidLineAnnotation,
    weights: &LossWeights,
    cfg: &FitConfig,
) -> Result<FitTrace> {
    let start = initialize(midline, coarse_braid, cfg)?;
    fit_from(start, coarse_braid, real_edges, weights, cfg)
}

/// Centered moving average of the radius profile (window 9, shrunken at the ends).
pub fn adjust_radius(braid: &SyntheticBraid) -> SyntheticBraid {
    const HALF: usize = 4;
    let mut out = braid.clone();
    for profile in &mut out.radius_profile {
        let n = profile.len();
        let src = profile.clone();
        for (k, r) in profile.iter_mut().enumerate() {
            let lo = k.saturating_sub(HALF);
            let hi = (k + HALF).min(n - 1);
            *r = src[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        }
    }
    out
}
