use std::ffi::{CStr, CString};
use std::ptr;

use pitrack::tracker::Metric;
use pitrack_ffi::*;

fn last_error() -> String {
    let p = pit_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn small_config() -> *mut PitConfig {
    let mut cfg = ptr::null_mut();
    let json = c(r#"{"n_train": 1, "n_val": 1, "n_test": 3, "frames_per_video": 8}"#);
    assert_eq!(unsafe { pit_config_from_json(json.as_ptr(), &mut cfg) }, PitStatus::Ok);
    cfg
}

fn frame_units(cfg: *const PitConfig) -> PitFrameUnits {
    let mut fu = PitFrameUnits { g_frame: 0.0, restitution: 0.0, dt: 0.0, x_min: 0.0, x_max: 0.0, y_min: 0.0, y_max: 0.0, v_max_frame: 0.0 };
    assert_eq!(unsafe { pit_frame_units(cfg, &mut fu) }, PitStatus::Ok);
    fu
}

#[test]
fn default_config_gives_reference_frame_units() {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(pit_config_new(&mut cfg), PitStatus::Ok);
        let fu = frame_units(cfg);
        assert!((fu.g_frame - 0.7848).abs() < 1e-12);
        assert!((fu.v_max_frame - 22.2).abs() < 1e-12);
        assert_eq!((fu.x_min, fu.x_max, fu.dt), (2.0, 221.0, 1.0));
        pit_config_free(cfg);
    }
}

#[test]
fn config_setters_validate_and_round_trip() {
    let mut cfg = ptr::null_mut();
    unsafe {
        pit_config_new(&mut cfg);
        assert_eq!(pit_config_set(cfg, c("gravity").as_ptr(), 5.0), PitStatus::Ok);
        assert_eq!(pit_config_set(cfg, c("n_test").as_ptr(), 7.0), PitStatus::Ok);
        let mut v = 0.0;
        assert_eq!(pit_config_get(cfg, c("gravity").as_ptr(), &mut v), PitStatus::Ok);
        assert_eq!(v, 5.0);

        assert_eq!(pit_config_set(cfg, c("n_test").as_ptr(), 2.5), PitStatus::InvalidArgument);
        assert!(last_error().contains("n_test"));
        assert_eq!(pit_config_set(cfg, c("frames_per_video").as_ptr(), 2.0), PitStatus::InvalidArgument);
        assert_eq!(pit_config_set(cfg, c("colour").as_ptr(), 1.0), PitStatus::InvalidArgument);
        assert!(last_error().contains("unknown config key"));
        assert_eq!(pit_config_get(cfg, c("frames_per_video").as_ptr(), &mut v), PitStatus::Ok);
        assert_eq!(v, 40.0);
        assert!(pit_last_error_message().is_null());

        let mut json = ptr::null_mut();
        assert_eq!(pit_config_to_json(cfg, &mut json), PitStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(pit_config_from_json(json, &mut back), PitStatus::Ok);
        assert_eq!(pit_config_get(back, c("n_test").as_ptr(), &mut v), PitStatus::Ok);
        assert_eq!(v, 7.0);
        pit_string_free(json);
        pit_config_free(back);
        pit_config_free(cfg);
    }
}

#[test]
fn null_and_bad_inputs_are_reported() {
    unsafe {
        assert_eq!(pit_config_new(ptr::null_mut()), PitStatus::NullPointer);
        assert!(last_error().contains("out"));
        let mut cfg = ptr::null_mut();
        assert_eq!(pit_config_from_json(c("{not json").as_ptr(), &mut cfg), PitStatus::Format);
        assert!(cfg.is_null());
        assert_eq!(pit_config_from_json(c(r#"{"scale": -1}"#).as_ptr(), &mut cfg), PitStatus::InvalidArgument);
        let mut traj = ptr::null_mut();
        assert_eq!(pit_trajectory_simulate(ptr::null(), PIT_SPLIT_TEST, 0, &mut traj), PitStatus::NullPointer);
        pit_config_new(&mut cfg);
        assert_eq!(pit_trajectory_simulate(cfg, 9, 0, &mut traj), PitStatus::InvalidArgument);
        assert!(last_error().contains("split"));
        pit_config_free(cfg);
        pit_config_free(ptr::null_mut());
        pit_trajectory_free(ptr::null_mut());
        pit_dataset_free(ptr::null_mut());
        pit_metrics_free(ptr::null_mut());
        pit_string_free(ptr::null_mut());
    }
    let name = |s: i32| unsafe { CStr::from_ptr(pit_status_name(s)) }.to_str().unwrap().to_owned();
    assert_eq!(name(PitStatus::Shape as i32), "shape mismatch");
    assert_eq!(name(99), "unknown status");
}

#[test]
fn refinement_matches_the_core_and_its_jacobian() {
    let mut cfg = ptr::null_mut();
    unsafe { pit_config_new(&mut cfg) };
    let fu = frame_units(cfg);
    let lm = [100.0, 60.0, 104.0, 63.0, 108.0, 66.8];
    let mut w = PitWindow { positions: [0.0; 6], velocities: [0.0; 6], bounces: [9; 3] };
    let mut jac = [0.0; 72];
    unsafe {
        assert_eq!(pit_physics_refine(&fu, lm.as_ptr(), &mut w), PitStatus::Ok);
        assert_eq!(pit_physics_refine_jacobian(&fu, lm.as_ptr(), jac.as_mut_ptr()), PitStatus::Ok);
        pit_config_free(cfg);
    }
    assert_eq!(w.bounces, [0, 0, 0]);
    // Smooth branch: the outer landmarks are kept and the middle follows the parabola.
    assert!((w.positions[0] - 100.0).abs() < 1e-12 && (w.positions[4] - 108.0).abs() < 1e-12);
    assert!((w.positions[3] - (60.0 + 66.8) / 2.0 + 0.7848 / 2.0).abs() < 1e-9);
    // d x1 / d x0 and d x1 / d x2 on the smooth branch.
    assert!((jac[2 * 6] - 0.5).abs() < 1e-12 && (jac[2 * 6 + 4] - 0.5).abs() < 1e-12);

    let h = 1e-6;
    for col in 0..6 {
        let (mut lo, mut hi) = (lm, lm);
        lo[col] -= h;
        hi[col] += h;
        let (mut wl, mut wh) = (w, w);
        unsafe {
            pit_physics_refine(&fu, lo.as_ptr(), &mut wl);
            pit_physics_refine(&fu, hi.as_ptr(), &mut wh);
        }
        for row in 0..6 {
            let fd = (wh.positions[row] - wl.positions[row]) / (2.0 * h);
            assert!((jac[row * 6 + col] - fd).abs() < 1e-6, "({row}, {col})");
        }
    }
}

#[test]
fn expectation_and_its_jacobian() {
    let (w, h) = (8usize, 6usize);
    let mut values = vec![0.0; w * h];
    values[2 * w + 3] = 1.0;
    values[2 * w + 4] = 1.0;
    let mut p = [0.0; 2];
    let mut jac = vec![0.0; 2 * w * h];
    unsafe {
        for op in [PIT_OPERATOR_BILINEAR, PIT_OPERATOR_COARSE_TO_FINE, PIT_OPERATOR_BIQUADRATIC, PIT_OPERATOR_BICUBIC] {
            assert_eq!(pit_expectation(op, values.as_ptr(), w, h, p.as_mut_ptr()), PitStatus::Ok);
            assert!((p[0] - 3.5).abs() < 1e-6 && (p[1] - 2.0).abs() < 1e-6, "operator {op}: {p:?}");
        }
        assert_eq!(pit_expectation(7, values.as_ptr(), w, h, p.as_mut_ptr()), PitStatus::InvalidArgument);
        assert_eq!(pit_expectation(0, values.as_ptr(), 0, h, p.as_mut_ptr()), PitStatus::Shape);
        // Keep every pixel off the rectifier's kink.
        for v in &mut values {
            *v += 0.1;
        }
        assert_eq!(pit_expectation(PIT_OPERATOR_BILINEAR, values.as_ptr(), w, h, p.as_mut_ptr()), PitStatus::Ok);
        assert_eq!(pit_expectation_jacobian(PIT_OPERATOR_BILINEAR, values.as_ptr(), w, h, jac.as_mut_ptr()), PitStatus::Ok);
    }
    // Bilinear: d x / d h_ij = (j - x) / sum and d y / d h_ij = (i - y) / sum.
    let sum: f64 = values.iter().sum::<f64>() + 1e-8;
    assert!((jac[0] - (0.0 - p[0]) / sum).abs() < 1e-12);
    assert!((jac[w * h + 5 * w] - (5.0 - p[1]) / sum).abs() < 1e-12);
}

#[test]
fn pill_loss_vanishes_on_a_physical_window() {
    let mut cfg = ptr::null_mut();
    unsafe { pit_config_new(&mut cfg) };
    let fu = frame_units(cfg);
    let g = fu.g_frame;
    // Heatmap coordinates at scale 4 of a free-fall arc.
    let img = [100.0, 60.0, 104.0, 63.0 + g / 2.0, 108.0, 66.0 + 2.0 * g];
    let lm = img.map(|v| v / 4.0);
    let mut loss = -1.0;
    unsafe {
        assert_eq!(pit_pill_loss(&fu, lm.as_ptr(), 4.0, false, &mut loss), PitStatus::Ok);
        pit_config_free(cfg);
    }
    assert!(loss.abs() < 1e-9, "{loss}");
}

#[test]
fn dataset_round_trip_and_tracking() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = c(tmp.path().join("d").to_str().unwrap());
    let cfg = small_config();
    unsafe {
        assert_eq!(pit_dataset_generate(cfg, dir.as_ptr()), PitStatus::Ok);
        let mut ds = ptr::null_mut();
        assert_eq!(pit_dataset_open(dir.as_ptr(), &mut ds), PitStatus::Ok);
        let mut n = 0usize;
        assert_eq!(pit_dataset_len(ds, PIT_SPLIT_TEST, &mut n), PitStatus::Ok);
        assert_eq!(n, 3);

        let mut simulated = ptr::null_mut();
        let mut stored = ptr::null_mut();
        assert_eq!(pit_trajectory_simulate(cfg, PIT_SPLIT_TEST, 2, &mut simulated), PitStatus::Ok);
        assert_eq!(pit_dataset_trajectory(ds, PIT_SPLIT_TEST, 2, &mut stored), PitStatus::Ok);
        let t = pit_trajectory_len(simulated);
        assert_eq!(t, 8);
        let (mut a, mut b) = (vec![0.0; 2 * t], vec![0.0; 2 * t]);
        assert_eq!(pit_trajectory_positions(simulated, a.as_mut_ptr(), a.len()), PitStatus::Ok);
        assert_eq!(pit_trajectory_positions(stored, b.as_mut_ptr(), b.len()), PitStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(pit_trajectory_velocities(stored, b.as_mut_ptr(), 3), PitStatus::Shape);
        let mut flags = vec![9u8; t];
        assert_eq!(pit_trajectory_bounces(stored, flags.as_mut_ptr(), t), PitStatus::Ok);
        assert!(flags.iter().all(|&f| f <= 1));

        let mut frames = vec![0f32; 8 * 224 * 224];
        assert_eq!(pit_dataset_read_frames(ds, PIT_SPLIT_TEST, 2, frames.as_mut_ptr(), frames.len()), PitStatus::Ok);
        let (x, y) = (a[0].round() as usize, a[1].round() as usize);
        assert_eq!(frames[y * 224 + x], 1.0);
        assert_eq!(frames[0], 0.0);
        assert_eq!(pit_dataset_read_frames(ds, PIT_SPLIT_TEST, 3, frames.as_mut_ptr(), frames.len()), PitStatus::InvalidArgument);

        let mut m = ptr::null_mut();
        assert_eq!(pit_dataset_track(ds, PIT_SPLIT_TEST, true, &mut m), PitStatus::Ok);
        assert_eq!(pit_metrics_sequences(m), 3);
        let mut p224 = f64::NAN;
        assert_eq!(pit_metrics_median(m, Metric::P224.index() as u32, &mut p224), PitStatus::Ok);
        assert!(p224 < 2.0, "{p224}");
        assert_eq!(pit_metrics_mean(m, PIT_METRIC_COUNT, &mut p224), PitStatus::InvalidArgument);

        let csv = c(tmp.path().join("metrics.csv").to_str().unwrap());
        assert_eq!(pit_metrics_write_csv(m, csv.as_ptr(), c("A0B0C0D0E0F1").as_ptr(), 0), PitStatus::Ok);
        assert_eq!(pit_metrics_write_csv(m, csv.as_ptr(), c("bogus").as_ptr(), 0), PitStatus::InvalidArgument);

        pit_metrics_free(m);
        pit_trajectory_free(simulated);
        pit_trajectory_free(stored);
        pit_dataset_free(ds);
        pit_config_free(cfg);
    }
}

#[test]
fn missing_dataset_is_an_io_error() {
    let mut ds = ptr::null_mut();
    let status = unsafe { pit_dataset_open(c("/nonexistent/pitrack").as_ptr(), &mut ds) };
    assert_eq!(status, PitStatus::Io);
    assert!(last_error().contains("no dataset"));
    assert!(ds.is_null());
}

#[test]
fn metric_names_follow_the_core_order() {
    for m in Metric::ALL {
        let p = pit_metric_name(m.index() as u32);
        assert_eq!(unsafe { CStr::from_ptr(p) }.to_str().unwrap(), m.name());
    }
    assert!(pit_metric_name(PIT_METRIC_COUNT).is_null());
}

#[test]
fn effect_estimate_from_results_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("planted.csv");
    let rows = pitrack::doe::PlantedModel::reference().rows(2);
    pitrack::tracker::write_metric_rows(std::fs::File::create(&path).unwrap(), &rows).unwrap();
    let path = c(path.to_str().unwrap());
    let mut e = 0.0;
    unsafe {
        assert_eq!(pit_effect_estimate(path.as_ptr(), 0, c("A").as_ptr(), c("P224").as_ptr(), &mut e), PitStatus::Ok);
        assert!((e - 4.0).abs() < 1e-12);
        assert_eq!(pit_effect_estimate(path.as_ptr(), 2, c("bc").as_ptr(), c("dec_avg").as_ptr(), &mut e), PitStatus::Ok);
        assert!((e + 2.0).abs() < 1e-12);
        assert_eq!(pit_effect_estimate(path.as_ptr(), 3, c("A").as_ptr(), c("P224").as_ptr(), &mut e), PitStatus::IncompleteDesign);
        assert!(last_error().contains("missing"));
        assert_eq!(pit_effect_estimate(path.as_ptr(), 0, c("G").as_ptr(), c("P224").as_ptr(), &mut e), PitStatus::InvalidArgument);
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe { pit_config_new(ptr::null_mut()) };
    std::thread::spawn(|| assert!(pit_last_error_message().is_null())).join().unwrap();
    assert!(!pit_last_error_message().is_null());
}
