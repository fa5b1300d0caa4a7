use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pitrack::manifest::{RunManifest, LOCK_FILE, RUN_MANIFEST_FILE};

const SMALL: [&str; 8] = ["--n-train", "1", "--n-val", "1", "--n-test", "3", "--frames", "8"];

fn pitrack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pitrack"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PITRACK_OUT")
        .output()
        .expect("spawn pitrack")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen_small(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["gen", "--out", out];
    args.extend(SMALL);
    args.extend(extra);
    pitrack(&args, dir)
}

fn assert_same_tree(a: &Path, b: &Path) {
    for entry in fs::read_dir(a).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if name == RUN_MANIFEST_FILE {
            continue;
        }
        let other = b.join(&name);
        if entry.file_type().unwrap().is_dir() {
            assert_same_tree(&entry.path(), &other);
        } else {
            assert_eq!(fs::read(entry.path()).unwrap(), fs::read(&other).unwrap(), "{name:?} differs");
        }
    }
}

#[test]
fn gen_is_deterministic_per_noise_level() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = gen_small(tmp.path(), out, &["--sigma", "0", "--sigma", "1", "--seed", "42"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = tmp.path().join("a");
    for sigma in ["sigma_0", "sigma_1"] {
        for split in ["train", "val", "test"] {
            for kind in ["frames", "truth", "noise"] {
                assert!(a.join(sigma).join(format!("{split}_{kind}.pitd")).is_file());
            }
        }
    }
    assert_same_tree(&a, &tmp.path().join("b"));
    let m = RunManifest::read(&a.join(RUN_MANIFEST_FILE)).unwrap();
    assert_eq!(m.command, "gen");
    assert_eq!(m.outputs.len(), 2);
    assert_eq!(m.config.sim.frames_per_video, 8);
    assert!(!a.join(LOCK_FILE).exists());
}

#[test]
fn gen_rejects_short_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pitrack(&["gen", "--frames", "2", "--out", "d"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("frames_per_video"), "{}", stderr(&o));
}

#[test]
fn manifest_as_config_reproduces_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gen_small(tmp.path(), "a", &["--gravity", "5.0", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pitrack(&["gen", "--config", "a/run_manifest.json", "--out", "b"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_same_tree(&tmp.path().join("a"), &tmp.path().join("b"));
}

#[test]
fn track_writes_all_metrics_and_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(gen_small(tmp.path(), "d", &["--sigma", "1"]).status.success());
    let o = pitrack(
        &["track", "--data", "d/sigma_1", "--temporal-mean", "--design", "A1B1C1D0E1F1", "--replicate", "3", "--out", "t"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("P224"));
    let metrics = fs::read_to_string(tmp.path().join("t/metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "config,replicate,metric,value");
    assert_eq!(lines.len(), 16);
    assert!(lines[1..].iter().all(|l| l.starts_with("A1B1C1D0E1F1,3,")));
    let predictions = fs::read_to_string(tmp.path().join("t/predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 3 * 8 * 3);
    let m = RunManifest::read(&tmp.path().join("t").join(RUN_MANIFEST_FILE)).unwrap();
    assert!(m.config.tracker.temporal_mean);
    assert_eq!(m.config.sim.noise_sigma, 1.0);
}

#[test]
fn track_defaults_design_from_noise_level() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(gen_small(tmp.path(), "d", &["--sigma", "1"]).status.success());
    let o = pitrack(&["track", "--data", "d/sigma_1", "--out", "t"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(tmp.path().join("t/metrics.csv")).unwrap();
    assert!(metrics.lines().nth(1).unwrap().starts_with("A0B0C0D0E0F1,0,B56,"));
}

#[test]
fn track_reports_missing_and_foreign_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pitrack(&["track", "--data", "nowhere"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no dataset at nowhere"), "{}", stderr(&o));

    assert!(gen_small(tmp.path(), "d", &[]).status.success());
    let frames = tmp.path().join("d/sigma_0/test_frames.pitd");
    let mut bytes = fs::read(&frames).unwrap();
    bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
    fs::write(&frames, bytes).unwrap();
    let o = pitrack(&["track", "--data", "d/sigma_0", "--out", "t"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported format"), "{}", stderr(&o));
}

#[test]
fn selfcheck_passes_and_honors_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pitrack(&["selfcheck", "--trials", "5", "--out", "s"], tmp.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("PASS g_frame=0.7848"), "{text}");
    assert!(text.contains("over 5 probes"));
    assert!(!text.contains("FAIL"));
    assert_eq!(fs::read_to_string(tmp.path().join("s/selfcheck.txt")).unwrap(), text);
}

#[test]
fn selfcheck_fails_on_injected_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pitrack(&["selfcheck", "--trials", "3", "--inject-fault", "broken-kernel", "--out", "s"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL gradient"));
}

#[test]
fn planted_fixture_effects_match_stored_copy() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(pitrack(&["fixture", "--kind", "planted", "--out", "f"], tmp.path()).status.success());
    let o = pitrack(&["effects", "--results", "f/planted_results.csv", "--out", "e"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    let top: Vec<&str> = report.lines().filter(|l| l.starts_with("A ") || l.starts_with("BC ")).collect();
    assert!(top[0].starts_with("A ") && top[0].contains("+4.00"), "{report}");
    let csv = fs::read_to_string(tmp.path().join("e/effects.csv")).unwrap();
    assert_eq!(csv, include_str!("golden/planted_effects.csv"));
}

#[test]
fn effects_name_missing_cells() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(pitrack(&["fixture", "--kind", "planted", "--out", "f"], tmp.path()).status.success());
    let full = fs::read_to_string(tmp.path().join("f/planted_results.csv")).unwrap();
    let pruned: String = full
        .lines()
        .filter(|l| !l.starts_with("A1B0C0D0E0F0,2,"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(tmp.path().join("pruned.csv"), pruned).unwrap();
    let o = pitrack(&["effects", "--results", "pruned.csv", "--replicates", "4", "--out", "e"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(1, 2)"), "{}", stderr(&o));
}

#[test]
fn reference_means_put_c_first_on_the_encoder() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(pitrack(&["fixture", "--kind", "reference-means", "--out", "f"], tmp.path()).status.success());
    let o = pitrack(
        &["effects", "--results", "f/reference_means_results.csv", "--exclude-factor", "F", "--out", "e"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    let enc: Vec<&str> = report.lines().skip_while(|l| !l.starts_with("Encoder")).collect();
    assert!(enc[2].starts_with("C ") && enc[2].trim_end().ends_with("-27.04"), "{report}");
}

#[test]
fn busy_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("f")).unwrap();
    fs::write(tmp.path().join("f").join(LOCK_FILE), "1").unwrap();
    let o = pitrack(&["fixture", "--kind", "planted", "--out", "f"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("locked"), "{}", stderr(&o));
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pitrack"))
        .args(["fixture", "--kind", "planted"])
        .current_dir(tmp.path())
        .env("PITRACK_OUT", "root")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("root/fixture/planted_results.csv").is_file());
}
