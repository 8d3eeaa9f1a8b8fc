use std::path::Path;
use std::process::{Command, Output};

fn braid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_braid")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap().parse().unwrap()
}

const SMALL: [&str; 8] = ["--set", "width=96", "--set", "height=192", "--set", "n_points=60", "--set", "seed=2"];
const INPUTS: [&str; 8] = [
    "--set",
    "strands=sim/strands.txt",
    "--set",
    "edges=sim/edges.pgm",
    "--set",
    "mask=sim/mask.pgm",
    "--set",
    "midline=sim/midline.txt",
];

fn simulated() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let o = braid(tmp.path(), &[&["simulate", "--set", "out_dir=sim"][..], &SMALL].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    tmp
}

#[test]
fn synth_defaults_give_three_bunches_of_radius_seven() {
    let tmp = tempfile::tempdir().unwrap();
    let o = braid(tmp.path(), &["synth", "--set", "out_dir=s"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(value(&text, "centerlines"), 3.0);
    assert_eq!(value(&text, "radius"), 7.0);
    let ply = std::fs::read_to_string(tmp.path().join("s/synth.ply")).unwrap();
    assert!(ply.contains(" 255 0 0\n") && ply.contains(" 0 0 255\n") && ply.contains(" 0 255 0\n"));
    for f in ["synth_strands.txt", "synth_params.txt", "synth_edges.pgm"] {
        assert!(tmp.path().join("s").join(f).exists(), "{f}");
    }
}

#[test]
fn fit_then_eval_lowers_the_loss() {
    let tmp = simulated();
    let dir = tmp.path();
    let o = braid(
        dir,
        &[&["fit", "--set", "out_dir=f", "--set", "epochs=25", "--set", "params=sim/truth_params.txt"][..], &SMALL, &INPUTS]
            .concat(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let (initial, last) = (value(&text, "initial_l_total"), value(&text, "final_l_total"));
    assert!(last <= initial, "{initial} -> {last}");

    let trace = std::fs::read_to_string(dir.join("f/trace.csv")).unwrap();
    let mut rows = trace.lines();
    assert_eq!(rows.next(), Some("epoch,l_pc,l_proj,l_reg,l_total,lr"));
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|t| t.parse().unwrap()).collect();
        let recombined = v[1] + 1e-4 * v[2] + 1e-3 * v[3];
        assert!((recombined - v[4]).abs() <= 1e-9 * v[4].abs().max(1.0));
    }

    let e = braid(dir, &[&["eval", "--set", "params=f/fitted_params.txt"][..], &SMALL, &INPUTS].concat());
    assert!(e.status.success());
    assert!((value(&stdout(&e), "l_total") - last).abs() <= 1e-9 * last);
}

#[test]
fn refine_colors_every_allocated_strand() {
    let tmp = simulated();
    let dir = tmp.path();
    let o =
        braid(dir, &[&["refine", "--set", "out_dir=r", "--set", "params=sim/truth_params.txt"][..], &SMALL, &INPUTS].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "allocated"), 24.0);
    let ply = std::fs::read_to_string(dir.join("r/refined.ply")).unwrap();
    assert!(!ply.contains(" 128 128 128\n"));
    assert!(dir.join("r/refined_strands.txt").exists());
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = braid(tmp.path(), &["synth", "--set", "no_such_key=3"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no_such_key"));
    assert_eq!(err.lines().count(), 1);

    assert_eq!(braid(tmp.path(), &["fit"]).status.code(), Some(1));
    assert_eq!(braid(tmp.path(), &["synth", "--set", "lr=-1"]).status.code(), Some(1));
    assert_eq!(braid(tmp.path(), &["bogus"]).status.code(), Some(1));
    std::fs::write(tmp.path().join("run.cfg"), "epochs=3\nwidth\n").unwrap();
    assert_eq!(braid(tmp.path(), &["synth", "--config", "run.cfg"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = braid(tmp.path(), &["eval", "--set", "strands=missing.txt", "--set", "edges=missing.pgm", "--set", "params=p.txt"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(tmp.path().join("edges.pgm"), b"P5\n2 2\n255\n\x00").unwrap();
    let sim = simulated();
    let strands = sim.path().join("sim/strands.txt");
    let o = braid(
        tmp.path(),
        &["eval", "--set", &format!("strands={}", strands.display()), "--set", "edges=edges.pgm", "--set", "params=p.txt"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_files_and_overrides_combine() {
    let tmp = simulated();
    let dir = tmp.path();
    std::fs::write(dir.join("run.cfg"), "# small run\nwidth=96\nheight=192\nn_points=60\nseed=2\nout_dir=from_file\n").unwrap();
    let o = braid(dir, &["synth", "--config", "run.cfg", "--set", "out_dir=overridden"]);
    assert!(o.status.success());
    assert!(dir.join("overridden/synth.ply").exists());
    assert!(!dir.join("from_file").exists());
}
