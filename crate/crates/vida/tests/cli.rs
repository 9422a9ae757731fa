//! The `vida` binary: exit codes, error lines and reproducible outputs.

use std::path::Path;
use std::process::{Command, Output};

use vida::dataset::Dataset;
use vida::wav::read_wav;

fn vida(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vida")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "[sampler]\nmax_order = 6\n";

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = vida(dir.path(), &["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = vida(dir.path(), &["simulate-rir", "--room", "5,4", "--src", "1,1,1", "--mic", "2,2,2", "--out", "x.wav"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"), "{}", stderr(&o));
    assert_eq!(vida(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_3_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = vida(dir.path(), &["evaluate", "--dataset", "missing", "--method", "none", "--out", "r"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(stderr(&o).starts_with("error[data]:"));

    std::fs::write(dir.path().join("bad.toml"), "[train]\nepochz = 1\n").unwrap();
    let o = vida(dir.path(), &["--config", "bad.toml", "gradcheck"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("epochz"));
}

#[test]
fn help_lists_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = vida(dir.path(), &["train", "--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("lambda_match"));
}

#[test]
fn simulate_rir_writes_a_response_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = vida(dir.path(), &["simulate-rir", "--room", "5,4,3", "--absorption", "0.4", "--src", "1,1,1.5", "--mic", "3,2,1.5", "--out", "rir.wav"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rir = read_wav(&dir.path().join("rir.wav")).unwrap();
    let peak = (0..rir.len()).max_by(|&a, &b| rir.samples[a].abs().total_cmp(&rir.samples[b].abs())).unwrap();
    let d = (4.0f64 + 1.0).sqrt();
    assert!((peak as f64 - 16_000.0 * d / 343.0).abs() <= 1.0);
    assert!(dir.path().join("rir.wav.json").exists());
}

#[test]
fn datasets_are_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    for (out, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let o = vida(dir.path(), &["--config", "tiny.toml", "build-dataset", "--synthetic", "4", "--seed", seed, "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let manifest = |d: &str| std::fs::read(dir.path().join(d).join("manifest.jsonl")).unwrap();
    assert_eq!(manifest("a"), manifest("b"));
    assert_ne!(manifest("a"), manifest("c"));
    let ds = Dataset::open(&dir.path().join("a")).unwrap();
    assert_eq!(ds.info.counts["train"], 2);
    assert_eq!(ds.info.counts["test"], 1);
    assert_eq!(ds.info.rng_seed, 7);
}

#[test]
fn wpe_dereverb_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    std::fs::write(dir.path().join("still.toml"), "[wpe]\niterations = 0\n").unwrap();
    let o = vida(dir.path(), &["--config", "tiny.toml", "build-dataset", "--synthetic", "3", "--out", "d"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let input = "d/test/sample_00000/reverb.wav";
    let o = vida(dir.path(), &["dereverb", "--method", "wpe", "--in", input, "--out", "y.wav"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (x, y) = (read_wav(&dir.path().join(input)).unwrap(), read_wav(&dir.path().join("y.wav")).unwrap());
    assert_eq!(x.len(), y.len());
    assert_ne!(x, y);

    let o = vida(dir.path(), &["--config", "still.toml", "dereverb", "--method", "wpe", "--in", input, "--out", "same.wav"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let same = read_wav(&dir.path().join("same.wav")).unwrap();
    let worst = x.samples.iter().zip(&same.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");

    let o = vida(dir.path(), &["dereverb", "--method", "model", "--in", input, "--out", "z.wav"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_on_the_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = vida(dir.path(), &["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("model"));
}
