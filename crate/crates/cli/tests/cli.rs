//! End-to-end tests of the `mtgen` binary on a small synthetic pipeline.
//! Training artifacts are built once and shared; specific commands then run
//! against them.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mtgen")
}

fn tmp_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-tests")
}

/// Configuration shared by every command in these tests; small enough to
/// train in seconds.
const TINY: &[&str] = &[
    "seed=7",
    "dataset.num_classes=4",
    "dataset.per_class=40",
    "dataset.side=8",
    "vae1.hidden_dim=48",
    "vae1.latent_dim=6",
    "vae1.epochs=8",
    "vae1.batch_size=32",
    "vae2.hidden_dim=24",
    "vae2.latent_dim=4",
    "vae2.epochs=10",
    "vae2.batch_size=32",
    "classifier.hidden1=48",
    "classifier.hidden2=24",
    "classifier.dropout=0.3",
    "classifier.epochs=10",
    "classifier.batch_size=32",
    "mc.passes=4",
    "gen.count=5",
    "gen.max_attempts=4000",
    "gen.dedup_distance=0.2",
    "swarm.particles=6",
    "swarm.iterations=8",
];

fn mtgen(args: &[&str], sets: &[&str]) -> Output {
    let mut command = Command::new(bin());
    for entry in sets {
        command.arg("--set").arg(entry);
    }
    command.args(args);
    command.output().expect("binary runs")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

struct Fixture {
    classifier: PathBuf,
    extractor: PathBuf,
    stage1: PathBuf,
    stage2: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let root = tmp_root().join("fixture");
        if root.exists() {
            std::fs::remove_dir_all(&root).unwrap();
        }
        let classifier_dir = root.join("classifier");
        let extractor_dir = root.join("extractor");
        let vae_dir = root.join("vae");

        let out = mtgen(
            &[
                "--out",
                classifier_dir.to_str().unwrap(),
                "train-classifier",
            ],
            TINY,
        );
        assert_success(&out);
        assert!(classifier_dir.join("classifier.mtg").exists());
        assert!(classifier_dir.join("train_report.txt").exists());
        assert!(classifier_dir.join("timing.txt").exists());

        // A second classifier from another seed serves as the independent
        // feature extractor.
        let mut extractor_sets: Vec<&str> = TINY.to_vec();
        extractor_sets.push("seed=8");
        let out = mtgen(
            &["--out", extractor_dir.to_str().unwrap(), "train-classifier"],
            &extractor_sets,
        );
        assert_success(&out);

        let out = mtgen(&["--out", vae_dir.to_str().unwrap(), "train-vae"], TINY);
        assert_success(&out);
        for artifact in [
            "stage1.mtg",
            "stage2.mtg",
            "loss_stage1.txt",
            "loss_stage2.txt",
            "recon_stage1.pgm",
        ] {
            assert!(vae_dir.join(artifact).exists(), "missing {artifact}");
        }

        Fixture {
            classifier: classifier_dir.join("classifier.mtg"),
            extractor: extractor_dir.join("classifier.mtg"),
            stage1: vae_dir.join("stage1.mtg"),
            stage2: vae_dir.join("stage2.mtg"),
        }
    })
}

fn generate_into(dir: &Path, extra_sets: &[&str]) -> Output {
    let f = fixture();
    let mut sets: Vec<&str> = TINY.to_vec();
    sets.extend_from_slice(extra_sets);
    mtgen(
        &[
            "--out",
            dir.to_str().unwrap(),
            "generate",
            "--stage1",
            f.stage1.to_str().unwrap(),
            "--stage2",
            f.stage2.to_str().unwrap(),
            "--classifier",
            f.classifier.to_str().unwrap(),
            "--extractor",
            f.extractor.to_str().unwrap(),
        ],
        &sets,
    )
}

#[test]
fn training_is_byte_deterministic_across_runs() {
    let root = tmp_root().join("determinism");
    let _ = std::fs::remove_dir_all(&root);
    for sub in ["a", "b"] {
        let out = mtgen(
            &[
                "--out",
                root.join(sub).to_str().unwrap(),
                "train-classifier",
            ],
            TINY,
        );
        assert_success(&out);
    }
    let a = std::fs::read(root.join("a/classifier.mtg")).unwrap();
    let b = std::fs::read(root.join("b/classifier.mtg")).unwrap();
    assert_eq!(a, b);
    let ra = std::fs::read(root.join("a/train_report.txt")).unwrap();
    let rb = std::fs::read(root.join("b/train_report.txt")).unwrap();
    assert_eq!(ra, rb);

    for sub in ["vae-a", "vae-b"] {
        let out = mtgen(
            &["--out", root.join(sub).to_str().unwrap(), "train-vae"],
            TINY,
        );
        assert_success(&out);
    }
    for artifact in [
        "stage1.mtg",
        "stage2.mtg",
        "loss_stage1.txt",
        "loss_stage2.txt",
    ] {
        let a = std::fs::read(root.join("vae-a").join(artifact)).unwrap();
        let b = std::fs::read(root.join("vae-b").join(artifact)).unwrap();
        assert_eq!(
            a, b,
            "train-vae artifact {artifact} differs between identical runs"
        );
    }
}

#[test]
fn generate_with_missing_checkpoint_fails_loudly() {
    let f = fixture();
    let dir = tmp_root().join("gen-missing");
    let _ = std::fs::remove_dir_all(&dir);
    let out = mtgen(
        &[
            "--out",
            dir.to_str().unwrap(),
            "generate",
            "--stage1",
            "no/such/stage1.mtg",
            "--stage2",
            f.stage2.to_str().unwrap(),
            "--classifier",
            f.classifier.to_str().unwrap(),
            "--extractor",
            f.extractor.to_str().unwrap(),
        ],
        TINY,
    );
    assert!(!out.status.success());
}

#[test]
fn generate_random_mode_produces_suite_and_report() {
    let dir = tmp_root().join("gen-random");
    let _ = std::fs::remove_dir_all(&dir);
    let out = generate_into(&dir, &[]);
    assert_success(&out);

    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("mode: random"), "{report}");
    let fid: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("fid_mean: "))
        .expect("report carries a FID field")
        .parse()
        .unwrap();
    assert!(fid >= 0.0, "{report}");
    let retained: usize = report
        .lines()
        .find_map(|l| l.strip_prefix("retained: "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(retained, 5);

    let manifest = std::fs::read_to_string(dir.join("suite/manifest.txt")).unwrap();
    let rows = manifest.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, retained);
    // Random mode has no fitness values.
    for line in manifest.lines().filter(|l| !l.starts_with('#')) {
        assert_eq!(line.split_whitespace().nth(3), Some("-"));
    }
    assert!(dir.join("suite/images.mtg").exists());
    assert!(dir.join("suite/cases/case_000000.pgm").exists());
}

#[test]
fn generate_search_mode_writes_fitness_and_trajectories() {
    let dir = tmp_root().join("gen-search");
    let _ = std::fs::remove_dir_all(&dir);
    let out = generate_into(
        &dir,
        &["gen.mode=search", "gen.count=2", "gen.max_attempts=40"],
    );
    assert_success(&out);

    let report = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("mode: search"), "{report}");
    let evals: usize = report
        .lines()
        .find_map(|l| l.strip_prefix("search_evaluations: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(evals > 0);

    let trajectories: Vec<_> = std::fs::read_dir(dir.join("trajectories"))
        .unwrap()
        .collect();
    assert!(!trajectories.is_empty());

    let manifest = std::fs::read_to_string(dir.join("suite/manifest.txt")).unwrap();
    for line in manifest.lines().filter(|l| !l.starts_with('#')) {
        let fitness = line.split_whitespace().nth(3).unwrap();
        assert_ne!(fitness, "-");
        fitness.parse::<f64>().unwrap();
    }
}

#[test]
fn generate_is_byte_deterministic() {
    let root = tmp_root().join("gen-det");
    let _ = std::fs::remove_dir_all(&root);
    for sub in ["a", "b"] {
        let out = generate_into(&root.join(sub), &[]);
        assert_success(&out);
    }
    for artifact in ["report.txt", "suite/manifest.txt", "suite/images.mtg"] {
        let a = std::fs::read(root.join("a").join(artifact)).unwrap();
        let b = std::fs::read(root.join("b").join(artifact)).unwrap();
        assert_eq!(a, b, "artifact {artifact} differs between identical runs");
    }
}

#[test]
fn latent_scatter_requires_two_dimensions() {
    let f = fixture();
    let dir = tmp_root().join("scatter-bad");
    let _ = std::fs::remove_dir_all(&dir);
    let out = mtgen(
        &[
            "--out",
            dir.to_str().unwrap(),
            "latent-scatter",
            "--checkpoint",
            f.stage1.to_str().unwrap(),
        ],
        TINY,
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("2-dimensional"), "{stderr}");
}

#[test]
fn latent_scatter_emits_one_row_per_validation_example() {
    let root = tmp_root().join("scatter");
    let _ = std::fs::remove_dir_all(&root);
    let vae_dir = root.join("vae-k2");
    let mut sets: Vec<&str> = TINY.to_vec();
    sets.extend_from_slice(&["vae1.latent_dim=2", "vae1.epochs=3"]);
    let out = mtgen(
        &[
            "--out",
            vae_dir.to_str().unwrap(),
            "train-vae",
            "--stage",
            "1",
        ],
        &sets,
    );
    assert_success(&out);

    let scatter_dir = root.join("scatter-out");
    let out = mtgen(
        &[
            "--out",
            scatter_dir.to_str().unwrap(),
            "latent-scatter",
            "--checkpoint",
            vae_dir.join("stage1.mtg").to_str().unwrap(),
        ],
        &sets,
    );
    assert_success(&out);
    let text = std::fs::read_to_string(scatter_dir.join("scatter.txt")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    // 4 classes × 40 examples × 20% validation fraction.
    assert_eq!(rows, 32);
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        assert_eq!(line.split_whitespace().count(), 3);
    }
}

#[test]
fn stage_two_alone_requires_a_stage_one_checkpoint() {
    let dir = tmp_root().join("stage2-missing");
    let _ = std::fs::remove_dir_all(&dir);
    let out = mtgen(
        &["--out", dir.to_str().unwrap(), "train-vae", "--stage", "2"],
        TINY,
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage-1 checkpoint"), "{stderr}");
}

#[test]
fn fid_of_identical_sets_is_zero_with_plus_minus_format() {
    let f = fixture();
    let dir = tmp_root().join("fid-zero");
    let _ = std::fs::remove_dir_all(&dir);
    let out = mtgen(
        &[
            "--out",
            dir.to_str().unwrap(),
            "fid",
            "--extractor",
            f.extractor.to_str().unwrap(),
            "--real",
            "synth",
            "--generated",
            "synth",
        ],
        TINY,
    );
    assert_success(&out);
    let text = std::fs::read_to_string(dir.join("fid.txt")).unwrap();
    assert!(text.contains("fid: 0.0000 ±"), "{text}");
}

#[test]
fn fid_orders_noise_behind_real_data() {
    let f = fixture();
    let dir = tmp_root().join("fid-noise");
    let _ = std::fs::remove_dir_all(&dir);
    let out = mtgen(
        &[
            "--out",
            dir.to_str().unwrap(),
            "fid",
            "--extractor",
            f.extractor.to_str().unwrap(),
            "--real",
            "synth",
            "--generated",
            "noise:100",
        ],
        TINY,
    );
    assert_success(&out);
    let text = std::fs::read_to_string(dir.join("fid.txt")).unwrap();
    let value: f64 = text
        .lines()
        .next()
        .unwrap()
        .strip_prefix("fid: ")
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(value > 0.0, "{text}");
}

#[test]
fn review_applies_verdicts_and_is_idempotent() {
    let dir = tmp_root().join("review");
    let _ = std::fs::remove_dir_all(&dir);
    let out = generate_into(&dir, &[]);
    assert_success(&out);

    let verdicts = dir.join("verdicts.txt");
    std::fs::write(&verdicts, "# two judged\n0 valid\n1 invalid\n").unwrap();
    let suite_dir = dir.join("suite");
    let run = || {
        mtgen(
            &[
                "review",
                "--suite",
                suite_dir.to_str().unwrap(),
                "--verdicts",
                verdicts.to_str().unwrap(),
            ],
            TINY,
        )
    };
    let out = run();
    assert_success(&out);
    let validity = std::fs::read_to_string(suite_dir.join("validity.txt")).unwrap();
    assert!(validity.contains("valid: 1"), "{validity}");
    assert!(validity.contains("invalid: 1"), "{validity}");
    assert!(validity.contains("unknown: 3"), "{validity}");

    // The manifest now records the verdicts.
    let manifest = std::fs::read_to_string(suite_dir.join("manifest.txt")).unwrap();
    assert!(manifest
        .lines()
        .any(|l| l.split_whitespace().nth(4) == Some("valid")));

    let out = run();
    assert_success(&out);
    let again = std::fs::read_to_string(suite_dir.join("validity.txt")).unwrap();
    assert_eq!(validity, again);

    // Unknown ids are rejected loudly.
    std::fs::write(&verdicts, "999 valid\n").unwrap();
    let out = run();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("999"));
}

#[test]
fn export_round_trips_a_suite() {
    let dir = tmp_root().join("export");
    let _ = std::fs::remove_dir_all(&dir);
    let out = generate_into(&dir, &[]);
    assert_success(&out);

    let copy = dir.join("copy");
    let out = mtgen(
        &[
            "--out",
            copy.to_str().unwrap(),
            "export",
            "--suite",
            dir.join("suite").to_str().unwrap(),
        ],
        TINY,
    );
    assert_success(&out);
    let original = std::fs::read(dir.join("suite/manifest.txt")).unwrap();
    let exported = std::fs::read(copy.join("manifest.txt")).unwrap();
    assert_eq!(original, exported);
    let original = std::fs::read(dir.join("suite/images.mtg")).unwrap();
    let exported = std::fs::read(copy.join("images.mtg")).unwrap();
    assert_eq!(original, exported);
}

#[test]
fn occupied_out_dir_needs_force() {
    let dir = tmp_root().join("force");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("existing.txt"), "occupied").unwrap();

    let out = mtgen(&["--out", dir.to_str().unwrap(), "train-classifier"], TINY);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));

    let mut args = vec![
        "--out",
        dir.to_str().unwrap(),
        "--force",
        "train-classifier",
    ];
    let out = mtgen(&std::mem::take(&mut args), TINY);
    assert_success(&out);
}

#[test]
fn unknown_configuration_keys_are_rejected() {
    let out = mtgen(&["train-classifier"], &["no.such.key=1"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no.such.key"), "{stderr}");
}

#[test]
fn config_file_is_read_and_overridden_by_flags() {
    let root = tmp_root().join("config-file");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let path = root.join("run.conf");
    let mut text = String::from("# tiny run\n");
    for entry in TINY {
        let (k, v) = entry.split_once('=').unwrap();
        text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(&path, text).unwrap();

    // File value for epochs is 10; the flag override to 2 must win.
    let dir = root.join("out");
    let out = Command::new(bin())
        .args(["--config", path.to_str().unwrap()])
        .args(["--set", "classifier.epochs=2"])
        .args(["--out", dir.to_str().unwrap()])
        .arg("train-classifier")
        .output()
        .unwrap();
    assert_success(&out);
    let report = std::fs::read_to_string(dir.join("train_report.txt")).unwrap();
    assert!(report.contains("epochs: 2"), "{report}");
}
