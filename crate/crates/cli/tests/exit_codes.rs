use std::path::Path;
use std::process::{Command, Output};

use interdec::embedding::EmbeddingTable;
use interdec::factored::{FactoredShape, VariablePartition};
use interdec::io::{write_json, ModelFile};
use interdec::random::Gaussian;
use interdec::softmax::SoftmaxModel;
use interdec::synth::{project_structure, random_model, ZeroingPolicy};

fn interdec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interdec"))
        .args(args)
        .current_dir(dir)
        .env_remove("INTERDEC_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn malformed_json_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{bad").unwrap();
    let out = interdec(dir.path(), &["energy", "--model", "bad.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.json"));
}

#[test]
fn missing_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = interdec(dir.path(), &["decompose", "--input", "absent.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn mismatched_row_count_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"format_version":1,"factors":[{"name":"a","cardinality":2},{"name":"b","cardinality":2}],"dim":1,"rows":[[1.0],[2.0],[3.0]]}"#;
    std::fs::write(dir.path().join("e.json"), text).unwrap();
    let out = interdec(dir.path(), &["decompose", "--input", "e.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn too_many_factors_hits_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let out = interdec(
        dir.path(),
        &[
            "synth",
            "--x-shape",
            "2,2,2,2,2,2,2,2,2",
            "--y-shape",
            "2,2,2,2,2,2,2,2",
            "--emit",
            "d.json",
        ],
    );
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("d.json").exists());
}

#[test]
fn divergent_fit_reports_then_fails() {
    let dir = tempfile::tempdir().unwrap();
    let synth = interdec(
        dir.path(),
        &[
            "synth",
            "--x-shape",
            "2,2",
            "--y-shape",
            "2",
            "--seed",
            "1",
            "--emit",
            "d.json",
        ],
    );
    assert_eq!(code(&synth), 0);
    let out = interdec(
        dir.path(),
        &[
            "fit",
            "--distribution",
            "d.json",
            "--learning-rate",
            "1e9",
            "--max-iters",
            "100",
            "--out",
            "fit.json",
        ],
    );
    assert_eq!(code(&out), 4);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!(report["results"]["error"]
        .as_str()
        .unwrap()
        .contains("diverged"));
}

#[test]
fn geometric_check_needs_a_model() {
    let dir = tempfile::tempdir().unwrap();
    interdec(
        dir.path(),
        &[
            "synth",
            "--x-shape",
            "2,2",
            "--y-shape",
            "2",
            "--emit",
            "d.json",
        ],
    );
    let out = interdec(
        dir.path(),
        &[
            "check-ci",
            "--distribution",
            "d.json",
            "--partition",
            "A=x1;B=x2",
            "--method",
            "geometric",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn methods_disagreeing_under_different_scales_exit_ten() {
    // Tiny logits: a forbidden pairing that is small against log P but large
    // against the logits themselves.
    let x = FactoredShape::new(vec![2, 2]).unwrap();
    let y = FactoredShape::new(vec![2, 3]).unwrap();
    let part = VariablePartition::parse("A=x1;B=y2", 2, 2, &Default::default()).unwrap();
    let model = random_model(&x, &y, 6, 3, 1e-3);
    let clean = project_structure(&model, &part.forbidden_pairs(), ZeroingPolicy::InputOnly);
    let noise = Gaussian::seeded(4).table(x.clone(), 6, 1e-7);
    let u: EmbeddingTable = clean.input().add(&noise).unwrap();
    let noisy = SoftmaxModel::new(u, clean.output().clone()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    write_json(
        dir.path().join("m.json"),
        &ModelFile::with_default_names(&noisy),
    )
    .unwrap();
    let out = interdec(
        dir.path(),
        &[
            "check-ci",
            "--model",
            "m.json",
            "--partition",
            "A=x1;B=y2",
            "--tol",
            "1e-6",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(code(&out), 10, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "check-ci");
}

#[test]
fn default_seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: Option<&str>, name: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_interdec"));
        cmd.args(["synth", "--x-shape", "2", "--y-shape", "3", "--emit", name])
            .current_dir(dir.path());
        match seed {
            Some(s) => cmd.env("INTERDEC_SEED", s),
            None => cmd.env_remove("INTERDEC_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let zero = run(None, "a.json");
    let seven = run(Some("7"), "b.json");
    let seven_again = run(Some("7"), "c.json");
    assert_ne!(zero, seven);
    assert_eq!(seven, seven_again);
}
