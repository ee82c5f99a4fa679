use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .to_str()
        .unwrap()
        .to_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advscore"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const POINT_MASS: &str = r#"
n_frames = 40
seed = 3

[grid]
factors = [{ name = "azimuth", levels = ["0", "20", "40"] }]

[[subjects]]
label = "teapot"
kind = "baseline"
detect_prob = 1.0
class_dist = { teapot = 1.0 }

[[subjects]]
label = "adv"
kind = "adversary"
detect_prob = 0.0
class_dist = { goldfish = 1.0 }
"#;

fn simulate(spec: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    std::fs::write(&spec_path, spec).unwrap();
    stdout(&["simulate", "--spec", p(&spec_path), "--out", p(dir.path())]);
    dir
}

#[test]
fn score_table_golden() {
    let text = stdout(&["score", "--counts", &fixture("table1.csv")]);
    assert_eq!(
        text,
        "subject          score\n\
         No-Patch         0\n\
         Composite (CxO)  0.536\n\
         ImageNet (CxO)   0.424\n\
         ImageNet (O)     0.135\n\
         White Patch      0.241\n"
    );
}

#[test]
fn marginal_table_golden() {
    let text = stdout(&[
        "score",
        "--counts",
        &fixture("table1.csv"),
        "--marginal",
        "bulb",
    ]);
    let tail: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("bulb"))
        .collect();
    assert_eq!(
        tail,
        [
            "bulb  No-Patch  Composite (CxO)  ImageNet (CxO)  ImageNet (O)  White Patch",
            "Hlgn  0         0.707            0.708           0.275         0.395",
            "LED   0         0.365            0.139           -0.006        0.087",
        ]
    );
}

#[test]
fn counts_report_matches_golden_file() {
    let text = stdout(&["report", "--counts", &fixture("table1.csv")]);
    let golden = std::fs::read_to_string(fixture("table1_counts.txt")).unwrap();
    assert!(text.starts_with(&golden), "report:\n{text}");
}

#[test]
fn out_dir_bundle_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    stdout(&[
        "score",
        "--counts",
        &fixture("table1.csv"),
        "--marginal",
        "bulb",
        "--out",
        p(&out),
    ]);
    for f in [
        "report.json",
        "scores.txt",
        "counts.txt",
        "score_by_bulb.csv",
        "mean_confidence_by_bulb.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let bundle = advscore::report::ReportBundle::from_json(
        &std::fs::read_to_string(out.join("report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(bundle.reports.len(), 5);
    assert_eq!(
        bundle.to_json().unwrap(),
        std::fs::read_to_string(out.join("report.json")).unwrap()
    );
}

#[test]
fn score_is_deterministic_with_bootstrap() {
    let args = [
        "score",
        "--counts",
        &fixture("table1.csv"),
        "--bootstrap",
        "--seed",
        "5",
        "--replicates",
        "500",
        "--json",
    ];
    assert_eq!(stdout(&args), stdout(&args));
}

#[test]
fn grid_counts() {
    assert_eq!(
        stdout(&["grid", "--config", &fixture("exp1.toml"), "--count"]),
        "20\n"
    );
    assert_eq!(
        stdout(&["grid", "--config", &fixture("exp2.toml"), "--count"]),
        "180\n"
    );
    let listing = stdout(&["grid", "--config", &fixture("exp1.toml")]);
    assert_eq!(listing.lines().count(), 20);
}

#[test]
fn validate_accepts_fixture() {
    let text = stdout(&["validate", "--counts", &fixture("table1.csv")]);
    assert!(text.ends_with("ok\n"), "{text}");
}

#[test]
fn errors_are_one_line_with_class_and_code() {
    let cases: [(&[&str], &str, i32); 4] = [
        (&["score"], "error[usage]", 2),
        (
            &["score", "--counts", "/does/not/exist.csv"],
            "error[io]",
            1,
        ),
        (
            &["score", "--counts", &fixture("exp1.toml")],
            "error[ingest]",
            1,
        ),
        (
            &["grid", "--config", &fixture("table1.csv")],
            "error[config]",
            1,
        ),
    ];
    for (args, class, code) in cases {
        let out = run(args);
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(out.status.code(), Some(code), "{args:?}: {err}");
        assert!(err.starts_with(class), "{args:?}: {err}");
        assert_eq!(err.lines().count(), 1, "{err}");
    }
}

#[test]
fn validate_reports_issues_with_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = std::fs::read_to_string(fixture("table1.csv")).unwrap();
    let mut lines: Vec<&str> = csv.lines().collect();
    lines.remove(7);
    let path = dir.path().join("holey.csv");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let cfg = dir.path().join("exp1.toml");
    std::fs::copy(fixture("exp1.toml"), &cfg).unwrap();
    let out = run(&["validate", "--config", p(&cfg), "--counts", p(&path)]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulated_perfect_patch_scores_one() {
    let dir = simulate(POINT_MASS);
    let cfg = dir.path().join("config.toml");
    let frames = dir.path().join("detections.jsonl");
    let text = stdout(&[
        "score",
        "--config",
        p(&cfg),
        "--frames",
        p(&frames),
        "--postprocess",
        "--count-mode",
        "frames",
    ]);
    assert_eq!(text, "subject  score\nteapot   0\nadv      1.000\n");
}

#[test]
fn simulation_is_byte_reproducible() {
    let a = simulate(POINT_MASS);
    let b = simulate(POINT_MASS);
    for f in [
        "detections.jsonl",
        "classifications.jsonl",
        "config.toml",
        "truth.json",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn targeted_point_masses() {
    let dir = simulate(POINT_MASS);
    let cfg = dir.path().join("config.toml");
    let cls = dir.path().join("classifications.jsonl");
    let text = stdout(&[
        "targeted",
        "--config",
        p(&cfg),
        "--classifications",
        p(&cls),
        "--source",
        "teapot",
        "--target",
        "goldfish",
    ]);
    assert_eq!(
        text,
        "comparison             sim\n'teapot' comparison    1.000\n'goldfish' comparison  1.000\n"
    );
}

#[test]
fn logit_warns_on_separation() {
    let dir = simulate(POINT_MASS);
    let cfg = dir.path().join("config.toml");
    let cls = dir.path().join("classifications.jsonl");
    let args = [
        "logit",
        "--config",
        p(&cfg),
        "--classifications",
        p(&cls),
        "--source",
        "teapot",
        "--target",
        "goldfish",
    ];
    let out = run(&args);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("separated") && err.contains("--ridge"),
        "{err}"
    );

    let mut ridged = args.to_vec();
    ridged.extend(["--ridge", "1e-6"]);
    assert!(run(&ridged).status.success());
}

#[test]
fn logit_recovers_simulated_effect() {
    let dir = simulate(&std::fs::read_to_string(fixture("sim_example.toml")).unwrap());
    let cfg = dir.path().join("config.toml");
    let cls = dir.path().join("classifications.jsonl");
    let json = stdout(&[
        "logit",
        "--config",
        p(&cfg),
        "--classifications",
        p(&cls),
        "--source",
        "vase",
        "--target",
        "pitcher",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let text = v.to_string();
    assert!(text.contains("subject=Patch"), "{text}");
}
