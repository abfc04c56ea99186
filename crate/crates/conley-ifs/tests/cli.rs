use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conley-ifs"))
}

fn write(dir: &std::path::Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn lists_presets() {
    let out = bin().arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["ex-multiple", "ex-proj-line", "ex-rotation", "paper-projective-pair", "moebius-demo"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn run_and_verify_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "rot.toml", "preset = \"ex-rotation\"\n");
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", scenario.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "3", "--threads", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("seed = 3\n"), "{summary}");

    let out = bin().args(["verify", scenario.to_str().unwrap()]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("PASS rotation has no nontrivial attractor"), "{text}");
}

#[test]
fn bad_scenarios_exit_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(
        dir.path(),
        "bad.toml",
        "[space]\nkind = \"projective\"\n[[maps]]\nkind = \"projective\"\nm = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]\n",
    );
    let out = bin().args(["run", scenario.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("maps[0].m[0]"));

    let ok = write(dir.path(), "ok.toml", "preset = \"ex-rotation\"\ntasks = [\"attractors\"]\n");
    let out = bin()
        .args(["run", ok.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .env("CONLEY_IFS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
