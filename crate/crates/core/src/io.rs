//! Text file formats, image ingestion and visualization export.
//!
//! Strand files:
//!
//! ```text
//! STRANDS <n>
//! S <id> <k>
//! <x> <y> <z>      (k lines)
//! ...
//! ```
//!
//! Annotation files:
//!
//! ```text
//! MIDLINE width_px=<w>
//! <x> <y>
//! ...
//! ```
//!
//! Writers emit the shortest decimal that round-trips each `f64`, so a
//! save/load cycle is exact and reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{BraidError, Result};
use crate::fit::FitTrace;
use crate::losses::LossReport;
use crate::refine::Allocation;
use crate::synth::BraidParams;
use crate::types::{validate, GrayImage, MidLineAnnotation, Point2, Point3, RawStrand, Strand, StrandId, StrandSet};

fn parse_err(line: usize, msg: impl Into<String>) -> BraidError {
    BraidError::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| parse_err(line, format!("expected a number, found {tok:?}")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| parse_err(line, format!("expected a count, found {tok:?}")))
}

pub fn format_strands(set: &StrandSet) -> String {
    let mut out = format!("STRANDS {}\n", set.len());
    for s in set.strands() {
        let _ = writeln!(out, "S {} {}", s.id(), s.len());
        for p in s.points() {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
        }
    }
    out
}

/// Parse a strand file. Strands drawn tip-first are reversed to root-first.
pub fn parse_strands(text: &str) -> Result<StrandSet> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "missing STRANDS header"))?;
    let count = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["STRANDS", n] => parse_usize(n, ln)?,
        _ => return Err(parse_err(ln, format!("expected \"STRANDS <n>\", found {header:?}"))),
    };
    let mut raw = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, head) = lines.next().ok_or_else(|| parse_err(ln, "fewer strands than declared"))?;
        let (id, k) = match head.split_whitespace().collect::<Vec<_>>()[..] {
            ["S", id, k] => (id.parse::<u64>().map_err(|_| parse_err(ln, format!("bad strand id {id:?}")))?, parse_usize(k, ln)?),
            _ => return Err(parse_err(ln, format!("expected \"S <id> <k>\", found {head:?}"))),
        };
        let mut points = Vec::with_capacity(k);
        for _ in 0..k {
            let (ln, row) = lines.next().ok_or_else(|| parse_err(ln, format!("strand {id} ends early")))?;
            let v = row.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<Vec<_>>>()?;
            if v.len() != 3 {
                return Err(parse_err(ln, "expected \"<x> <y> <z>\""));
            }
            points.push(Point3::new(v[0], v[1], v[2]));
        }
        if points.len() >= 2 && points[0].y > points[points.len() - 1].y {
            points.reverse();
        }
        raw.push((ln, RawStrand { id: StrandId(id), points }));
    }
    if let Some((ln, extra)) = lines.next() {
        return Err(parse_err(ln, format!("unexpected content after last strand: {extra:?}")));
    }
    let flat: Vec<RawStrand> = raw.iter().map(|(_, r)| r.clone()).collect();
    validate(&flat)?;
    let strands = flat.into_iter().map(|r| Strand::new(r.id, r.points)).collect::<Result<Vec<_>, _>>()?;
    Ok(StrandSet::new(strands)?)
}

pub fn load_strands(path: impl AsRef<Path>) -> Result<StrandSet> {
    parse_strands(&fs::read_to_string(path)?)
}

pub fn save_strands(set: &StrandSet, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_strands(set))?)
}

pub fn format_midline(m: &MidLineAnnotation) -> String {
    let mut out = format!("MIDLINE width_px={}\n", m.width_px());
    for p in m.polyline() {
        let _ = writeln!(out, "{} {}", p.x, p.y);
    }
    out
}

pub fn parse_midline(text: &str) -> Result<MidLineAnnotation> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "missing MIDLINE header"))?;
    let width = header
        .strip_prefix("MIDLINE")
        .and_then(|rest| rest.split_whitespace().find_map(|t| t.strip_prefix("width_px=")))
        .ok_or_else(|| parse_err(ln, "expected \"MIDLINE width_px=<w>\""))?;
    let width = parse_f64(width, ln)?;
    let mut points = Vec::new();
    for (ln, row) in lines {
        let v = row.split_whitespace().map(|t| parse_f64(t, ln)).collect::<Result<Vec<_>>>()?;
        if v.len() != 2 {
            return Err(parse_err(ln, "expected \"<x> <y>\""));
        }
        points.push(Point2::new(v[0], v[1]));
    }
    Ok(MidLineAnnotation::new(points, width)?)
}

pub fn load_midline(path: impl AsRef<Path>) -> Result<MidLineAnnotation> {
    parse_midline(&fs::read_to_string(path)?)
}

pub fn save_midline(m: &MidLineAnnotation, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_midline(m))?)
}

/// Decode an 8-bit PNG or PGM into `[0, 1]` values (`v / 255`). Color
/// images are reduced to luminance.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let format = image::guess_format(bytes).map_err(|e| BraidError::UnsupportedFormat(e.to_string()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
        return Err(BraidError::UnsupportedFormat(format!("{format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| BraidError::Decode(e.to_string()))?;
    let luma = img.into_luma8();
    let (w, h) = luma.dimensions();
    let px = luma.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
    Ok(GrayImage::new(w as usize, h as usize, px)?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_gray(&fs::read(path)?)
}

/// Binary PGM (P5), values rounded to 8 bits.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| (v * 255.0).round() as u8));
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, encode_pgm(img))?)
}

/// Bunch colors: red, blue, green, then extra hues for larger braids.
const BUNCH_COLORS: [[u8; 3]; 6] = [[255, 0, 0], [0, 0, 255], [0, 255, 0], [255, 255, 0], [255, 0, 255], [0, 255, 255]];
const UNALLOCATED: [u8; 3] = [128, 128, 128];

pub fn bunch_color(bunch: Option<usize>) -> [u8; 3] {
    bunch.map_or(UNALLOCATED, |b| BUNCH_COLORS[b % BUNCH_COLORS.len()])
}

/// ASCII PLY point cloud, colored by bunch when an allocation is given.
pub fn format_ply(set: &StrandSet, color_by_bunch: Option<&Allocation>) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        set.point_count()
    );
    for s in set.strands() {
        let [r, g, b] = bunch_color(color_by_bunch.and_then(|a| a.bunch_of.get(&s.id()).copied()));
        for p in s.points() {
            let _ = writeln!(out, "{} {} {} {r} {g} {b}", p.x as f32, p.y as f32, p.z as f32);
        }
    }
    out
}

pub fn export_ply(set: &StrandSet, color_by_bunch: Option<&Allocation>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_ply(set, color_by_bunch))?)
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// `key=value` lines; vectors are comma-separated.
pub fn format_params(p: &BraidParams) -> String {
    format!(
        "a={}\nb={}\nw={}\nt_step={}\nt_scale={}\nn_points={}\nn_bunches={}\nradius={}\nshift_z={}\nnoise={}\nshift_x={}\nshift_y={}\n",
        p.a,
        p.b,
        p.w,
        p.t_step,
        p.t_scale,
        p.n_points,
        p.n_bunches,
        p.radius,
        p.shift_z,
        join(&p.noise),
        join(&p.shift_x),
        join(&p.shift_y)
    )
}

pub fn parse_params(text: &str) -> Result<BraidParams> {
    let mut p = BraidParams::new(0.0, 0.0, 2);
    let vec_of = |v: &str, ln: usize| -> Result<Vec<f64>> {
        if v.is_empty() {
            Ok(Vec::new())
        } else {
            v.split(',').map(|t| parse_f64(t.trim(), ln)).collect()
        }
    };
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(ln, "expected key=value"))?;
        let v = v.trim();
        match k.trim() {
            "a" => p.a = parse_f64(v, ln)?,
            "b" => p.b = parse_f64(v, ln)?,
            "w" => p.w = parse_f64(v, ln)?,
            "t_step" => p.t_step = parse_f64(v, ln)?,
            "t_scale" => p.t_scale = parse_f64(v, ln)?,
            "n_points" => p.n_points = parse_usize(v, ln)?,
            "n_bunches" => p.n_bunches = parse_usize(v, ln)?,
            "radius" => p.radius = parse_f64(v, ln)?,
            "shift_z" => p.shift_z = parse_f64(v, ln)?,
            "noise" => p.noise = vec_of(v, ln)?,
            "shift_x" => p.shift_x = vec_of(v, ln)?,
            "shift_y" => p.shift_y = vec_of(v, ln)?,
            other => return Err(parse_err(ln, format!("unknown parameter {other:?}"))),
        }
    }
    p.validate()?;
    Ok(p)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<BraidParams> {
    parse_params(&fs::read_to_string(path)?)
}

pub fn save_params(p: &BraidParams, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_params(p))?)
}

pub const TRACE_HEADER: &str = "epoch,l_pc,l_proj,l_reg,l_total,lr";

/// Per-epoch losses as CSV.
pub fn format_trace(trace: &FitTrace) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for (e, (r, lr)) in trace.reports.iter().zip(&trace.learning_rates).enumerate() {
        let _ = writeln!(out, "{e},{},{},{},{},{lr}", r.l_pc, r.l_proj, r.l_reg, r.l_total);
    }
    out
}

pub fn format_report(r: &LossReport) -> String {
    format!("l_pc={}\nl_proj={}\nl_reg={}\nl_total={}\n", r.l_pc, r.l_proj, r.l_reg, r.l_total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strand_file_round_trip() {
        assert_eq!(parse_strands(&format_strands(&StrandSet::empty())).unwrap(), StrandSet::empty());
        let s = Strand::new(StrandId(7), vec![Point3::new(0.1, 0.2, -3.5), Point3::new(1e-7, 2.0 / 3.0, 4.0)]).unwrap();
        let set = StrandSet::new(vec![s]).unwrap();
        assert_eq!(parse_strands(&format_strands(&set)).unwrap(), set);
    }

    #[test]
    fn strand_file_errors_name_the_line() {
        match parse_strands("STRANDZ 1\n") {
            Err(BraidError::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_strands("STRANDS 1\nS 0 2\n0 0 0\n0 x 0\n") {
            Err(BraidError::Parse { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_strands("STRANDS 2\nS 0 2\n0 0 0\n0 1 0\nS 0 2\n0 0 0\n0 1 0\n"), Err(BraidError::Geometry(_))));
    }

    #[test]
    fn tip_first_strands_are_reversed() {
        let set = parse_strands("STRANDS 1\nS 0 2\n0 5 0\n0 1 0\n").unwrap();
        assert_eq!(set.strands()[0].points()[0].y, 1.0);
    }

    #[test]
    fn midline_round_trip() {
        let m = MidLineAnnotation::new(vec![Point2::new(1.5, 0.0), Point2::new(2.0, 40.0)], 35.0).unwrap();
        assert_eq!(parse_midline(&format_midline(&m)).unwrap(), m);
        assert!(parse_midline("MIDLINE\n0 0\n0 1\n").is_err());
    }

    #[test]
    fn pgm_decoding() {
        let img = decode_gray(b"P5\n2 2\n255\n\x00\xff\xff\x00").unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0, 1.0, 0.0]);
        let ones = decode_gray(&encode_pgm(&GrayImage::filled(3, 2, 1.0))).unwrap();
        assert!(ones.pixels().iter().all(|&v| v == 1.0));
        assert!(matches!(decode_gray(b"GIF89a...."), Err(BraidError::UnsupportedFormat(_))));
    }

    #[test]
    fn ply_colors_and_count() {
        let s =
            Strand::new(StrandId(0), vec![Point3::default(), Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 1.0, 0.0)]).unwrap();
        let set = StrandSet::new(vec![s]).unwrap();
        let gray = format_ply(&set, None);
        assert!(gray.contains("element vertex 3\n"));
        assert_eq!(gray.lines().filter(|l| l.ends_with(" 128 128 128")).count(), 3);
        let mut alloc = Allocation::default();
        alloc.bunch_of.insert(StrandId(0), 0);
        assert!(format_ply(&set, Some(&alloc)).lines().last().unwrap().ends_with(" 255 0 0"));
    }

    #[test]
    fn params_round_trip() {
        let p = BraidParams::new(20.5, 9.75, 4).with_random_noise(0.1, 3);
        assert_eq!(parse_params(&format_params(&p)).unwrap(), p);
        assert!(parse_params("bogus=1\n").is_err());
    }
}
