//! `braid` command-line tool.
//!
//! Every subcommand reads a flat `key=value` config (`--config`) with
//! `--set key=value` overrides and writes its files under `out_dir`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use braid_core::fit::LossEvaluator;
use braid_core::io::{
    export_ply, format_report, format_trace, load_mask, load_midline, load_params, load_strands, save_midline, save_params,
    save_pgm, save_strands,
};
use braid_core::refine::Allocation;
use braid_core::simulate::{default_midline, params_along};
use braid_core::{
    adjust_radius, canny, edge_image_synthetic, fit, fit_from, generate, mask_strands, raster, refine_all, simulate_coarse,
    BraidError, GrayImage, MidLineAnnotation, Result, RunConfig, StrandSet,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "braid", version, about = "Strand-based 3D braid reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (`key=value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural braid and write its strands, PLY and edge image.
    Synth(Common),
    /// Fit braid parameters to coarse strands and an edge image.
    Fit(Common),
    /// Rebuild coarse strands around a fitted braid.
    Refine(Common),
    /// Print the loss terms of a parameter file against the inputs.
    Eval(Common),
    /// Write a synthetic coarse observation with known ground truth.
    Simulate(Common),
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| BraidError::InvalidConfig(format!("`{key}` is required for this command")))
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg.out_dir.join(name))
}

fn midline(cfg: &RunConfig) -> Result<MidLineAnnotation> {
    match &cfg.midline {
        Some(path) => load_midline(path),
        None => Ok(default_midline(cfg.projection()?, cfg.midline_width)),
    }
}

fn mask(cfg: &RunConfig) -> Result<Option<GrayImage>> {
    cfg.mask.as_deref().map(load_mask).transpose()
}

/// Edge image from `edges`, or Canny edges of `image` restricted to the mask.
fn edges(cfg: &RunConfig, mask: Option<&GrayImage>) -> Result<GrayImage> {
    let img = if let Some(path) = &cfg.edges {
        load_mask(path)?
    } else if let Some(path) = &cfg.image {
        let photo = load_mask(path)?;
        let photo = match mask {
            Some(m) => raster::multiply(&photo, m)?,
            None => photo,
        };
        canny(&photo, &cfg.canny)?
    } else {
        return Err(BraidError::InvalidConfig("either `edges` or `image` is required".into()));
    };
    let spec = cfg.projection()?;
    if img.width() != spec.width || img.height() != spec.height {
        return Err(BraidError::DimensionMismatch(img.width(), img.height(), spec.width, spec.height));
    }
    Ok(img)
}

/// Coarse strands, keeping only those under the mask when one is given.
fn braid_strands(cfg: &RunConfig, mask: Option<&GrayImage>) -> Result<StrandSet> {
    let all = load_strands(required(&cfg.strands, "strands")?)?;
    match mask {
        Some(m) => Ok(mask_strands(&all, m, cfg.projection()?, cfg.refine.mask_threshold)?.0),
        None => Ok(all),
    }
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let params = match &cfg.params {
        Some(path) => load_params(path)?,
        None => params_along(&midline(cfg)?, cfg.fit.n_points, cfg.synth_z_shift),
    };
    let braid = generate(&params, cfg.fit.seed)?;
    let by_bunch = Allocation { bunch_of: braid.bunch_of.clone(), ..Allocation::default() };
    save_strands(&braid.tube_strands, out_path(cfg, "synth_strands.txt")?)?;
    export_ply(&braid.tube_strands, Some(&by_bunch), out_path(cfg, "synth.ply")?)?;
    save_params(&params, out_path(cfg, "synth_params.txt")?)?;
    save_pgm(&edge_image_synthetic(&braid, cfg.projection()?, 0.0), out_path(cfg, "synth_edges.pgm")?)?;
    println!("centerlines={}", braid.centerlines.len());
    println!("radius={}", params.radius);
    println!("points={}", braid.tube_strands.point_count());
    Ok(())
}

fn run_fit(cfg: &RunConfig) -> Result<()> {
    let mask = mask(cfg)?;
    let strands = braid_strands(cfg, mask.as_ref())?;
    let edges = edges(cfg, mask.as_ref())?;
    let trace = match &cfg.params {
        Some(path) => fit_from(load_params(path)?, &strands, &edges, &cfg.weights, &cfg.fit)?,
        None => fit(&strands, &edges, &midline(cfg)?, &cfg.weights, &cfg.fit)?,
    };
    fs::write(out_path(cfg, "trace.csv")?, format_trace(&trace))?;
    save_params(&trace.final_params, out_path(cfg, "fitted_params.txt")?)?;
    let initial = trace.reports.first().map_or(f64::NAN, |r| r.l_total);
    println!("initial_l_total={initial}");
    println!("final_l_total={}", trace.final_report.l_total);
    println!("a={}", trace.final_params.a);
    println!("b={}", trace.final_params.b);
    println!("epochs={}", trace.reports.len());
    println!("diverged={}", trace.diverged);
    Ok(())
}

fn refine(cfg: &RunConfig) -> Result<()> {
    let strands = load_strands(required(&cfg.strands, "strands")?)?;
    let mask = load_mask(required(&cfg.mask, "mask")?)?;
    let params = load_params(required(&cfg.params, "params")?)?;
    let braid = adjust_radius(&generate(&params, cfg.fit.seed)?);
    let (refined, alloc) = refine_all(&strands, &mask, &braid, &cfg.refine, cfg.projection()?)?;
    save_strands(&refined, out_path(cfg, "refined_strands.txt")?)?;
    export_ply(&refined, Some(&alloc), out_path(cfg, "refined.ply")?)?;
    let sizes = alloc.sizes(braid.n_bunches());
    println!("allocated={}", alloc.bunch_of.len());
    println!("rejected={}", alloc.rejected.len());
    println!("bunch_sizes={}", sizes.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let mask = mask(cfg)?;
    let strands = braid_strands(cfg, mask.as_ref())?;
    let edges = edges(cfg, mask.as_ref())?;
    let params = load_params(required(&cfg.params, "params")?)?;
    let report = LossEvaluator::new(&strands, &edges, cfg.weights, &cfg.fit)?.report(&params)?;
    print!("{}", format_report(&report));
    Ok(())
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.projection()?;
    let mid = midline(cfg)?;
    let truth = params_along(&mid, cfg.fit.n_points, cfg.synth_z_shift).with_random_noise(cfg.sim_radius_noise, cfg.fit.seed);
    let sim = simulate_coarse(&truth, cfg.sim_noise_sigma, cfg.sim_strands_per_bunch, spec, cfg.fit.seed)?;
    save_strands(&sim.strands, out_path(cfg, "strands.txt")?)?;
    save_pgm(&sim.mask, out_path(cfg, "mask.pgm")?)?;
    save_pgm(&sim.edges, out_path(cfg, "edges.pgm")?)?;
    save_midline(&mid, out_path(cfg, "midline.txt")?)?;
    save_params(&truth, out_path(cfg, "truth_params.txt")?)?;
    println!("strands={}", sim.strands.len());
    println!("points={}", sim.strands.point_count());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => synth(&load_config(&c)?),
        Command::Fit(c) => run_fit(&load_config(&c)?),
        Command::Refine(c) => refine(&load_config(&c)?),
        Command::Eval(c) => eval(&load_config(&c)?),
        Command::Simulate(c) => simulate(&load_config(&c)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
