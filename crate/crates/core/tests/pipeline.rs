use pitrack::config::SimConfig;
use pitrack::dataset::{generate_dataset, SplitReader};
use pitrack::doe::{effect_estimate, enumerate_configs, ResponseTable, Term};
use pitrack::rng::Split;
use pitrack::tracker::{evaluate_stream, read_metric_rows, write_metrics_csv, Metric, TrackerOptions};
use pitrack::video::generate_split;

fn small(sigma: f64) -> SimConfig {
    SimConfig { n_train: 1, n_val: 1, n_test: 5, frames_per_video: 12, noise_sigma: sigma, ..Default::default() }
}

#[test]
fn disk_and_memory_evaluations_agree() {
    let cfg = small(1.0);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(dir.path(), &cfg).unwrap();
    let opts = TrackerOptions { temporal_mean: true };
    let (_, reader) = SplitReader::open(dir.path(), Split::Test).unwrap();
    let (from_disk, tracks) = evaluate_stream(reader, &cfg, &opts).unwrap();
    let memory = generate_split(&cfg, Split::Test).unwrap();
    let (from_memory, _) = evaluate_stream(memory.into_iter().map(Ok), &cfg, &opts).unwrap();
    assert_eq!(from_disk, from_memory);
    assert_eq!(tracks.len(), 5);
    assert!(from_disk.median(Metric::P224) < 2.0);
}

#[test]
fn tracker_results_feed_the_effect_estimator() {
    // Factor F toggles the noise level, every other cell repeats the same run.
    let mut rows = Vec::new();
    for sigma in [0.0, 1.0] {
        let cfg = small(sigma);
        let seqs = generate_split(&cfg, Split::Test).unwrap();
        let (table, _) = evaluate_stream(seqs.into_iter().map(Ok), &cfg, &TrackerOptions::default()).unwrap();
        for c in enumerate_configs().into_iter().filter(|c| c.level(5) == (sigma > 0.0)) {
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &c.to_string(), 0, &table).unwrap();
            rows.extend(read_metric_rows(buf.as_slice()).unwrap());
        }
    }
    let t = ResponseTable::from_rows(&rows, None).unwrap();
    let f: Term = "F".parse().unwrap();
    let effect = effect_estimate(&t, "P224", f).unwrap();
    assert!(effect > 10.0, "noise without the temporal mean should dominate: {effect}");
    for other in ["A", "BC", "DEF"] {
        let e = effect_estimate(&t, "P224", other.parse().unwrap()).unwrap();
        assert!(e.abs() < 1e-12 * effect, "{other}: {e}");
    }
}
