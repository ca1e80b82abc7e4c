//! End-to-end CLI journeys over a synthetic repository: registering
//! workloads and datasets, autotuning, exporting, reducing, replaying, and
//! driving the prediction pipeline from stored entries to a trained model.

use std::path::{Path, PathBuf};

use flagforge::cli::dispatch;
use flagforge::registry::{DatasetMeta, FlagEffect, Registry, SyntheticSpec};
use flagforge::store::Store;
use flagforge::testutil::synthetic_meta;

fn run(repo: &Path, args: &[&str]) -> i32 {
    let mut argv =
        vec!["flagforge".to_string(), "--repo".to_string(), repo.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    dispatch(&argv)
}

/// Repo with three synthetic workloads whose best flags differ, plus
/// feature files that separate them cleanly.
fn model_repo(dir: &Path) -> PathBuf {
    let repo = dir.join("repo");
    let registry = Registry::open(&repo).unwrap();
    // best flag: w-a -> fa, w-b -> fb, w-c -> fa
    for (id, fa, fb, ft22) in [
        ("w-a", 0.6, 1.0, 10.0),
        ("w-b", 1.0, 0.6, 90.0),
        ("w-c", 0.6, 1.0, 20.0),
    ] {
        let spec = SyntheticSpec::new(10.0, 10_000)
            .with_effect("fa", FlagEffect::timed(fa))
            .with_effect("fb", FlagEffect::timed(fb));
        let mut meta = synthetic_meta(id, spec);
        meta.feature_file = Some(PathBuf::from("features.json"));
        registry.register_workload(&meta).unwrap();
        std::fs::write(
            registry.workload_dir(id).join("features.json"),
            format!(r#"{{"ft22": {ft22}, "ft24": 100}}"#),
        )
        .unwrap();
    }
    repo
}

#[test]
fn full_model_pipeline_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let repo = model_repo(dir.path());

    for workload in ["w-a", "w-b", "w-c"] {
        assert_eq!(
            run(
                &repo,
                &[
                    "autotune",
                    "--workload",
                    workload,
                    "--iterations",
                    "25",
                    "--repetitions",
                    "3",
                    "--include-probability",
                    "0.5",
                ],
            ),
            0
        );
    }

    let matrix = dir.path().join("matrix.json");
    assert_eq!(run(&repo, &["model", "build-matrix", "--out", matrix.to_str().unwrap()]), 0);
    let dataset = dir.path().join("dataset.json");
    assert_eq!(
        run(
            &repo,
            &[
                "model",
                "make-dataset",
                "--matrix",
                matrix.to_str().unwrap(),
                "--out",
                dataset.to_str().unwrap(),
            ],
        ),
        0
    );

    let model = dir.path().join("model.json");
    assert_eq!(
        run(
            &repo,
            &[
                "model",
                "train",
                "--dataset",
                dataset.to_str().unwrap(),
                "--model",
                "knn",
                "--out",
                model.to_str().unwrap(),
            ],
        ),
        0
    );
    assert!(model.is_file());

    // query by feature file: near w-b's features, prediction = fb solution
    let probe = dir.path().join("probe.json");
    std::fs::write(&probe, r#"{"ft22": 85.0, "ft24": 100}"#).unwrap();
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_flagforge"))
        .args([
            "--repo",
            repo.to_str().unwrap(),
            "--json",
            "model",
            "predict",
            "--model-file",
            model.to_str().unwrap(),
            "--features",
            probe.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let document: serde_json::Value =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    // probe ft22=85 sits next to w-b (ft22=90): 1-NN must predict w-b's label
    let ds: flagforge::learn::LabeledDataset =
        serde_json::from_str(&std::fs::read_to_string(&dataset).unwrap()).unwrap();
    let wb_label = ds
        .items
        .iter()
        .find(|i| i.features.workload == "w-b")
        .unwrap()
        .label
        .to_string();
    assert_eq!(document["label"].as_str().unwrap(), wb_label);

    assert_eq!(
        run(&repo, &["model", "cv", "--dataset", dataset.to_str().unwrap()]),
        0
    );
    assert_eq!(
        run(
            &repo,
            &[
                "model",
                "reduce-features",
                "--dataset",
                dataset.to_str().unwrap(),
                "--mode",
                "greedy_add",
            ],
        ),
        0
    );
}

#[test]
fn scenario_file_drives_autotune() {
    let dir = tempfile::tempdir().unwrap();
    let repo = dir.path().join("repo");
    let registry = Registry::open(&repo).unwrap();
    registry
        .register_workload(&synthetic_meta(
            "syn",
            SyntheticSpec::new(5.0, 1000).with_effect("x", FlagEffect::timed(0.5)),
        ))
        .unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{
            "scenario_id": "file-driven",
            "iterations": 7,
            "repetitions": 2,
            "record_policy": "frontier_only"
        }"#,
    )
    .unwrap();
    assert_eq!(
        run(&repo, &["autotune", "--workload", "syn", "--scenario", scenario.to_str().unwrap()]),
        0
    );
    let store = Store::open(&repo).unwrap();
    let entry = store.list_entries().unwrap().pop().unwrap();
    assert_eq!(entry.scenario_id, "file-driven");
    // frontier-only keeps the non-dominated subset of baseline + 7 samples
    assert!(entry.points.len() <= 8);
    for point in store.load_points(&entry).unwrap() {
        assert!(point.characteristics.is_some());
        assert_eq!(point.raw_samples["execution_time"].len(), 2);
    }
}

#[test]
fn dataset_registration_and_listing() {
    let dir = tempfile::tempdir().unwrap();
    let repo = dir.path().join("repo");
    Registry::open(&repo).unwrap();
    let meta = DatasetMeta {
        id: "image-01".into(),
        tags: vec!["image".into(), "jpeg".into()],
        files: vec![],
        params: Default::default(),
    };
    let file = dir.path().join("dataset.json");
    std::fs::write(&file, serde_json::to_vec(&meta).unwrap()).unwrap();
    assert_eq!(run(&repo, &["dataset", "add", "--file", file.to_str().unwrap()]), 0);
    assert_eq!(run(&repo, &["dataset", "list"]), 0);
    // duplicate registration is a contract error
    assert_eq!(run(&repo, &["dataset", "add", "--file", file.to_str().unwrap()]), 1);
}

#[test]
fn json_mode_emits_single_document_on_stdout() {
    // dispatch prints to the process stdout; spawn the binary to capture it
    let binary = env!("CARGO_BIN_EXE_flagforge");
    let dir = tempfile::tempdir().unwrap();
    let repo = dir.path().join("repo");
    let registry = Registry::open(&repo).unwrap();
    registry
        .register_workload(&synthetic_meta(
            "syn",
            SyntheticSpec::new(5.0, 1000).with_effect("x", FlagEffect::timed(0.5)),
        ))
        .unwrap();

    let output = std::process::Command::new(binary)
        .args([
            "--repo",
            repo.to_str().unwrap(),
            "--json",
            "autotune",
            "--workload",
            "syn",
            "--iterations",
            "3",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let document: serde_json::Value =
        serde_json::from_str(&stdout).expect("stdout must be exactly one JSON document");
    let entry = document["entry"].as_str().unwrap();
    assert_eq!(document["points"].as_u64().unwrap(), 4);

    // errors in json mode also produce a json document and the right code
    let output = std::process::Command::new(binary)
        .args(["--repo", repo.to_str().unwrap(), "--json", "experiment", "show", "missing"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let document: serde_json::Value =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert!(document["error"].as_str().unwrap().contains("missing"));

    // environment errors exit with 2
    let output = std::process::Command::new(binary)
        .args([
            "--repo",
            repo.to_str().unwrap(),
            "--server",
            "http://127.0.0.1:9",
            "crowd",
            "top",
            "--compiler",
            "synthetic",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // FLAGFORGE_REPO env var is honored
    let output = std::process::Command::new(binary)
        .env("FLAGFORGE_REPO", repo.to_str().unwrap())
        .args(["experiment", "show", entry])
        .output()
        .unwrap();
    assert!(output.status.success());
}

#[test]
fn reduce_and_contribution_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let repo = dir.path().join("repo");
    let registry = Registry::open(&repo).unwrap();
    let spec = SyntheticSpec::new(10.0, 10_000)
        .with_effect("keepme", FlagEffect::timed(0.5))
        .with_effect("noise", FlagEffect::default());
    registry.register_workload(&synthetic_meta("syn", spec)).unwrap();

    assert_eq!(
        run(
            &repo,
            &["autotune", "--workload", "syn", "--iterations", "20", "--include-probability", "0.8"],
        ),
        0
    );
    let store = Store::open(&repo).unwrap();
    let entry = store.list_entries().unwrap()[0].clone();
    let point = store
        .load_points(&entry)
        .unwrap()
        .into_iter()
        .find(|p| {
            p.rendered.contains("-fkeepme") && p.rendered.contains("-fnoise")
        })
        .expect("some sampled point enables both flags");

    assert_eq!(
        run(
            &repo,
            &[
                "reduce",
                "--entry",
                &entry.entry_uid,
                "--point",
                &point.point_uid,
                "--md5-shortcut",
            ],
        ),
        0
    );
    assert_eq!(
        run(
            &repo,
            &[
                "reduce",
                "--entry",
                &entry.entry_uid,
                "--point",
                &point.point_uid,
                "--contribution",
            ],
        ),
        0
    );
    let reduced = store
        .load_points(&store.load_entry(&entry.entry_uid).unwrap())
        .unwrap()
        .into_iter()
        .last()
        .unwrap();
    assert!(reduced.rendered.contains("-fkeepme"));
    assert!(!reduced.rendered.contains("-fnoise"));

    // replay the reduced point through both command spellings
    assert_eq!(
        run(&repo, &["replay", "--entry", &entry.entry_uid, "--point", &reduced.point_uid]),
        0
    );
    assert_eq!(
        run(
            &repo,
            &[
                "experiment",
                "replay",
                "--entry",
                &entry.entry_uid,
                "--point",
                &reduced.point_uid,
            ],
        ),
        0
    );
}
