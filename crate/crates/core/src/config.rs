//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//! Every key has a default, listed by [`RunConfig::documented_defaults`].

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{BraidError, Result};
use crate::fit::{FitConfig, Param};
use crate::losses::LossWeights;
use crate::raster::{CannyConfig, ProjectionSpec};
use crate::refine::RefineConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub weights: LossWeights,
    pub refine: RefineConfig,
    pub canny: CannyConfig,
    pub width: usize,
    pub height: usize,
    /// Mid-line width used when no annotation file is given.
    pub midline_width: f64,
    /// Depth offset of synthesized or simulated braids.
    pub synth_z_shift: f64,
    pub sim_noise_sigma: f64,
    pub sim_strands_per_bunch: usize,
    /// Radius noise half-width of simulated ground truth.
    pub sim_radius_noise: f64,
    pub strands: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    /// Photograph for Canny edges when no edge image is given.
    pub image: Option<PathBuf>,
    pub midline: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            weights: LossWeights::default(),
            refine: RefineConfig::default(),
            canny: CannyConfig::default(),
            width: 256,
            height: 512,
            midline_width: 35.0,
            synth_z_shift: 0.0,
            sim_noise_sigma: 0.5,
            sim_strands_per_bunch: 8,
            sim_radius_noise: 0.1,
            strands: None,
            mask: None,
            edges: None,
            image: None,
            midline: None,
            params: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| BraidError::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(BraidError::InvalidConfig(format!("{key}: expected a boolean, found {v:?}"))),
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|t| num(key, t.trim())).collect()
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let param_key = |prefix: &str| key.strip_prefix(prefix).and_then(Param::from_name);
        if let Some(p) = param_key("fd_step.") {
            self.fit.fd_step[Param::ALL.iter().position(|&q| q == p).unwrap()] = num(key, v)?;
            return Ok(());
        }
        if let Some(p) = param_key("param_scale.") {
            self.fit.param_scale[Param::ALL.iter().position(|&q| q == p).unwrap()] = num(key, v)?;
            return Ok(());
        }
        match key {
            "epochs" => self.fit.epochs = num(key, v)?,
            "lr" => self.fit.lr = num(key, v)?,
            "lr_drop_epochs" => self.fit.lr_drop_epochs = list(key, v)?,
            "lr_drop_factor" => self.fit.lr_drop_factor = num(key, v)?,
            "adam_beta1" => self.fit.adam_beta1 = num(key, v)?,
            "adam_beta2" => self.fit.adam_beta2 = num(key, v)?,
            "adam_eps" => self.fit.adam_eps = num(key, v)?,
            "learnable" => {
                self.fit.learnable = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        Param::from_name(s)
                            .ok_or_else(|| BraidError::InvalidConfig(format!("learnable: unknown parameter {s:?}")))
                    })
                    .collect::<Result<_>>()?
            }
            "seed" => self.fit.seed = num(key, v)?,
            "n_points" => self.fit.n_points = num(key, v)?,
            "n_bunches" => self.fit.n_bunches = num(key, v)?,
            "noise_amplitude" => self.fit.noise_amplitude = num(key, v)?,
            "softness" => self.fit.softness = num(key, v)?,
            "lambda_pc" => self.weights.lambda_pc = num(key, v)?,
            "lambda_b" => self.weights.lambda_b = num(key, v)?,
            "lambda_proj" => self.weights.lambda_proj = num(key, v)?,
            "lambda_reg" => self.weights.lambda_reg = num(key, v)?,
            "bce_epsilon" => self.weights.bce_epsilon = num(key, v)?,
            "b_anchor" => self.weights.b_anchor = num(key, v)?,
            "inclusion_factor" => self.refine.inclusion_factor = num(key, v)?,
            "downsample_keep_every" => self.refine.downsample_keep_every = num(key, v)?,
            "smooth_window" => self.refine.smooth_window = num(key, v)?,
            "balance" => self.refine.balance = boolean(key, v)?,
            "mask_threshold" => self.refine.mask_threshold = num(key, v)?,
            "gaussian_sigma" => self.canny.gaussian_sigma = num(key, v)?,
            "canny_low" => self.canny.low_threshold = num(key, v)?,
            "canny_high" => self.canny.high_threshold = num(key, v)?,
            "width" => self.width = num(key, v)?,
            "height" => self.height = num(key, v)?,
            "midline_width" => self.midline_width = num(key, v)?,
            "synth_z_shift" => self.synth_z_shift = num(key, v)?,
            "sim_noise_sigma" => self.sim_noise_sigma = num(key, v)?,
            "sim_strands_per_bunch" => self.sim_strands_per_bunch = num(key, v)?,
            "sim_radius_noise" => self.sim_radius_noise = num(key, v)?,
            "strands" => self.strands = path(v),
            "mask" => self.mask = path(v),
            "edges" => self.edges = path(v),
            "image" => self.image = path(v),
            "midline" => self.midline = path(v),
            "params" => self.params = path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(BraidError::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a `key=value` string as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| BraidError::InvalidConfig(format!("expected key=value, found {pair:?}")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| BraidError::Parse { line: i + 1, msg: "expected key=value".into() })?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn projection(&self) -> Result<ProjectionSpec> {
        ProjectionSpec::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.weights.validate()?;
        self.refine.validate()?;
        self.canny.validate()?;
        self.projection()?;
        if !(self.midline_width > 0.0) {
            return Err(BraidError::InvalidConfig("midline_width must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.sim_radius_noise) {
            return Err(BraidError::InvalidConfig("sim_radius_noise must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Every key with its default value.
    pub fn documented_defaults() -> BTreeMap<String, String> {
        let d = Self::default();
        let f = &d.fit;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("epochs", f.epochs.to_string());
        put("lr", f.lr.to_string());
        put("lr_drop_epochs", f.lr_drop_epochs.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
        put("lr_drop_factor", f.lr_drop_factor.to_string());
        put("adam_beta1", f.adam_beta1.to_string());
        put("adam_beta2", f.adam_beta2.to_string());
        put("adam_eps", f.adam_eps.to_string());
        for (i, p) in Param::ALL.iter().enumerate() {
            put(&format!("fd_step.{}", p.name()), f.fd_step[i].to_string());
            put(&format!("param_scale.{}", p.name()), f.param_scale[i].to_string());
        }
        put("learnable", f.learnable.iter().map(|p| p.name()).collect::<Vec<_>>().join(","));
        put("seed", f.seed.to_string());
        put("n_points", f.n_points.to_string());
        put("n_bunches", f.n_bunches.to_string());
        put("noise_amplitude", f.noise_amplitude.to_string());
        put("softness", f.softness.to_string());
        put("lambda_pc", d.weights.lambda_pc.to_string());
        put("lambda_b", d.weights.lambda_b.to_string());
        put("lambda_proj", d.weights.lambda_proj.to_string());
        put("lambda_reg", d.weights.lambda_reg.to_string());
        put("bce_epsilon", d.weights.bce_epsilon.to_string());
        put("b_anchor", d.weights.b_anchor.to_string());
        put("inclusion_factor", d.refine.inclusion_factor.to_string());
        put("downsample_keep_every", d.refine.downsample_keep_every.to_string());
        put("smooth_window", d.refine.smooth_window.to_string());
        put("balance", d.refine.balance.to_string());
        put("mask_threshold", d.refine.mask_threshold.to_string());
        put("gaussian_sigma", d.canny.gaussian_sigma.to_string());
        put("canny_low", d.canny.low_threshold.to_string());
        put("canny_high", d.canny.high_threshold.to_string());
        put("width", d.width.to_string());
        put("height", d.height.to_string());
        put("midline_width", d.midline_width.to_string());
        put("synth_z_shift", d.synth_z_shift.to_string());
        put("sim_noise_sigma", d.sim_noise_sigma.to_string());
        put("sim_strands_per_bunch", d.sim_strands_per_bunch.to_string());
        put("sim_radius_noise", d.sim_radius_noise.to_string());
        for k in ["strands", "mask", "edges", "image", "midline", "params"] {
            put(k, String::new());
        }
        put("out_dir", d.out_dir.display().to_string());
        m
    }
}
