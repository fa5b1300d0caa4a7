use std::path::{Path, PathBuf};
use std::process::Command;

const HEADER: &str = include_str!("../include/pitrack.h");
const SOURCE: &str = include_str!("../src/lib.rs");

fn exported_functions() -> Vec<&'static str> {
    SOURCE
        .lines()
        .filter_map(|l| l.split_once("extern \"C\" fn ").map(|(_, rest)| rest))
        .map(|rest| rest.split('(').next().unwrap())
        .collect()
}

#[test]
fn header_declares_every_exported_function() {
    let names = exported_functions();
    assert!(names.len() > 30, "{names:?}");
    for name in names {
        assert!(HEADER.contains(&format!(" {name}(")) || HEADER.contains(&format!("*{name}(")), "{name} missing from header");
    }
}

#[test]
fn header_exposes_status_codes_and_opaque_handles() {
    for item in [
        "PIT_STATUS_OK = 0",
        "PIT_STATUS_NULL_POINTER",
        "PIT_STATUS_INVALID_ARGUMENT",
        "PIT_STATUS_IO",
        "PIT_STATUS_FORMAT",
        "PIT_STATUS_SHAPE",
        "PIT_STATUS_INCOMPLETE_DESIGN",
        "PIT_STATUS_PANIC",
        "typedef struct PitConfig PitConfig;",
        "typedef struct PitTrajectory PitTrajectory;",
        "typedef struct PitDataset PitDataset;",
        "typedef struct PitMetrics PitMetrics;",
        "#define PIT_SPLIT_TEST 2",
        "#define PIT_METRIC_COUNT 15",
    ] {
        assert!(HEADER.contains(item), "{item} missing from header");
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_against_the_static_library() {
    if !have_cc() {
        eprintln!("no C compiler on PATH, skipping");
        return;
    }
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libpitrack_ffi.a");
    assert!(lib.is_file(), "{} not built", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("g_frame 0.7848"), "{stdout}");
    assert!(stdout.contains("frames 12"), "{stdout}");
    assert!(stdout.contains("unknown config key `no_such_key`"), "{stdout}");
    assert!(stdout.contains(&format!("version {}", env!("CARGO_PKG_VERSION"))), "{stdout}");
}

#[test]
fn header_compiles_as_cpp() {
    if Command::new("c++").arg("--version").output().is_err() {
        return;
    }
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = Command::new("c++")
        .args(["-fsyntax-only", "-x", "c++", "-Wall", "-Werror"])
        .arg(crate_dir.join("include/pitrack.h"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
