use std::path::Path;
use std::process::{Command, Output};

fn ffc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ffc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_SPEC: &str = r#"{"dims": [64, 64, 16], "objects": 2,
    "size_min": [8, 5, 4], "size_max": [14, 8, 6], "seed": 3}"#;

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("spec.json"), SMALL_SPEC).unwrap();
    std::fs::write(d.join("params.json"), r#"{"fgc": {"d_p": 1.0}}"#).unwrap();

    ok(d, &["gen", "--spec", "spec.json", "--out", "scene.fvsc", "--boxes", "boxes.json"]);
    for mode in ["tffc", "affc"] {
        let frame = format!("{mode}.ffc");
        ok(d, &["encode", "--mode", mode, "--scene", "scene.fvsc", "--params", "params.json", "--out", &frame, "--residual"]);
        let info = ok(d, &["inspect", "--in", &frame]);
        assert!(info.contains(&format!("mode          {mode}")));
        assert!(info.contains("d_p           1"));
        assert!(info.contains("residual"));

        let dec = format!("dec_{mode}");
        ok(d, &["decode", "--in", &frame, "--out", &dec]);
        let basic = std::fs::read_to_string(d.join(&dec).join("basic.csv")).unwrap();
        assert!(basic.starts_with("x,y,z,c0,c1,c2,c3\n"));
        assert_eq!(d.join(&dec).join("branch3.csv").exists(), mode == "affc");

        let objs = format!("obj_{mode}");
        ok(d, &["reconstruct", "--in", &frame, "--boxes", "boxes.json", "--out", &objs]);
        let ply = std::fs::read_to_string(d.join(&objs).join("object000_sparse.ply")).unwrap();
        assert!(ply.starts_with("ply\n"));
    }
}

#[test]
fn sweep_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("spec.json"), SMALL_SPEC).unwrap();
    std::fs::write(d.join("grid.json"), r#"{"seeds": [1, 2], "d_p": [0, 2]}"#).unwrap();
    ok(d, &["sweep", "--spec", "spec.json", "--grid", "grid.json", "--out", "rp.csv"]);
    let csv = std::fs::read_to_string(d.join("rp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(csv.starts_with("scene_seed,mode,pool_kernel,k_th,d_p"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(ffc(d, &["encode", "--mode", "nope"]).status.code(), Some(1));
    assert_eq!(ffc(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(ffc(d, &["--help"]).status.code(), Some(0));

    std::fs::write(d.join("junk.ffc"), b"FFC1 definitely not a frame").unwrap();
    assert_eq!(ffc(d, &["inspect", "--in", "junk.ffc"]).status.code(), Some(2));
    assert_eq!(ffc(d, &["decode", "--in", "missing.ffc", "--out", "x"]).status.code(), Some(2));
    std::fs::write(d.join("bad.json"), "{\"density\": 3.0}").unwrap();
    assert_eq!(ffc(d, &["gen", "--spec", "bad.json", "--out", "s"]).status.code(), Some(2));

    std::fs::write(d.join("spec.json"), SMALL_SPEC).unwrap();
    ok(d, &["gen", "--spec", "spec.json", "--out", "scene.fvsc"]);
    ok(d, &["encode", "--mode", "tffc", "--scene", "scene.fvsc", "--out", "plain.ffc"]);
    std::fs::write(d.join("boxes.json"), "[]").unwrap();
    let r = ffc(d, &["reconstruct", "--in", "plain.ffc", "--boxes", "boxes.json", "--out", "o"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no residual segment"));

    let out = ffc(d, &["gen", "--out", "no/such/dir/scene.fvsc"]);
    assert_eq!(out.status.code(), Some(3));
}
