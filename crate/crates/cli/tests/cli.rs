use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robustfit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn robustfit")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["synth", "--out", path_str(&path)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

fn without_wall_ms(stdout: &[u8]) -> Value {
    let mut v: Value = serde_json::from_slice(stdout).unwrap();
    v.as_object_mut().unwrap().remove("wall_ms");
    v
}

#[test]
fn synth_is_deterministic_and_labeled() {
    let dir = tempfile::tempdir().unwrap();
    let flags = [
        "--problem",
        "homography",
        "--inliers",
        "100",
        "--outliers",
        "100",
        "--noise",
        "1",
        "--seed",
        "7",
    ];
    let a = synth(dir.path(), "a.txt", &flags);
    let b = synth(dir.path(), "b.txt", &flags);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let file = robustfit::io::parse_correspondences(&text).unwrap();
    assert_eq!(file.validation_set().len(), 100);
    assert_eq!(file.correspondences.len(), 200);

    let out = run(&[
        "synth",
        "--problem",
        "fundamental",
        "--inliers",
        "20",
        "--seed",
        "1",
    ]);
    let truth: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(truth["model"].as_array().unwrap().len(), 9);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("# robustfit v1 fundamental 640 480"));
}

#[test]
fn estimate_noiseless_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for problem in ["homography", "fundamental"] {
        let f = synth(
            dir.path(),
            &format!("{problem}.txt"),
            &[
                "--problem",
                problem,
                "--inliers",
                "80",
                "--outliers",
                "40",
                "--seed",
                "3",
            ],
        );
        let args = [
            "estimate",
            "--problem",
            problem,
            "--input",
            path_str(&f),
            "--sigma",
            "0.0025",
            "--lo",
            "dpcp",
            "--seed",
            "11",
        ];
        let first = run(&args);
        assert!(
            first.status.success(),
            "{}",
            String::from_utf8_lossy(&first.stderr)
        );
        let second = run(&args);
        assert_eq!(
            without_wall_ms(&first.stdout),
            without_wall_ms(&second.stdout)
        );
        let v = without_wall_ms(&first.stdout);
        assert_eq!(v["epsilon"].as_f64().unwrap(), 2.0);
        assert!(
            v["error_on_validation"].as_f64().unwrap() <= 1e-6,
            "{problem}: {v}"
        );
        let model: Vec<f64> = v["model"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        let norm = model.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn estimate_without_labels_omits_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("plain.txt");
    std::fs::write(
        &f,
        "# robustfit v1 homography 100 100\n0 0 1 1\n10 0 11 1\n10 10 11 11\n0 10 1 11\n5 3 6 4\n",
    )
    .unwrap();
    let out = run(&[
        "estimate",
        "--input",
        path_str(&f),
        "--epsilon",
        "0.5",
        "--lo",
        "dlt",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.get("error_on_validation").is_none());
    assert_eq!(v["inlier_count"], 5);
}

#[test]
fn bench_cardinality_pairing_and_select() {
    let dir = tempfile::tempdir().unwrap();
    let f = synth(
        dir.path(),
        "scene.txt",
        &[
            "--problem",
            "homography",
            "--inliers",
            "60",
            "--outliers",
            "30",
            "--noise",
            "0.5",
            "--seed",
            "2",
        ],
    );
    let csv = dir.path().join("runs.csv");
    let summary = dir.path().join("summary.csv");
    let out = run(&[
        "bench",
        "--input",
        path_str(&f),
        "--sigmas",
        "0.002,0.004,0.008",
        "--methods",
        "none,dpcp",
        "--trials",
        "10",
        "--seed",
        "5",
        "--sample-digest",
        "--out",
        path_str(&csv),
        "--summary",
        path_str(&summary),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records = robustfit::bench::read_records(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(records.len(), 60);
    assert!(records.iter().all(|r| r.dataset == "scene"));
    for r in records
        .iter()
        .filter(|r| r.method == robustfit::LoMethod::None)
    {
        let twin = records
            .iter()
            .find(|q| {
                q.method == robustfit::LoMethod::Dpcp && q.sigma == r.sigma && q.trial == r.trial
            })
            .unwrap();
        assert_eq!(twin.sample_digest, r.sample_digest);
        assert_eq!(twin.seed, r.seed);
    }
    assert_eq!(
        std::fs::read_to_string(&summary).unwrap().lines().count(),
        7
    );

    let sel = run(&["select", "--input", path_str(&csv)]);
    assert!(sel.status.success());
    let v: Value = serde_json::from_slice(&sel.stdout).unwrap();
    let chosen = v.as_array().unwrap();
    assert_eq!(chosen.len(), 2);
    assert!(chosen
        .iter()
        .all(|c| [0.002, 0.004, 0.008].contains(&c["sigma"].as_f64().unwrap())));
}

#[test]
fn bench_sequential_matches_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let f = synth(
        dir.path(),
        "f.txt",
        &[
            "--problem",
            "fundamental",
            "--inliers",
            "60",
            "--outliers",
            "30",
            "--noise",
            "0.5",
        ],
    );
    let mut rows = Vec::new();
    for extra in [None, Some("--sequential")] {
        let mut args = vec![
            "bench",
            "--input",
            path_str(&f),
            "--sigmas",
            "0.002,0.005",
            "--trials",
            "3",
            "--sample-digest",
        ];
        args.extend(extra);
        let out = run(&args);
        assert!(out.status.success());
        let mut recs = robustfit::bench::read_records(out.stdout.as_slice()).unwrap();
        for r in &mut recs {
            r.wall_ms = 0.0;
        }
        rows.push(recs);
    }
    assert_eq!(rows[0].len(), 2 * 4 * 3);
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let f = synth(
        dir.path(),
        "h.txt",
        &["--problem", "homography", "--inliers", "20"],
    );
    let input = path_str(&f);

    // Usage: missing threshold, conflicting thresholds, empty sweeps, header mismatch.
    for args in [
        vec!["estimate", "--input", input],
        vec![
            "estimate",
            "--input",
            input,
            "--sigma",
            "0.01",
            "--epsilon",
            "2",
        ],
        vec!["bench", "--input", input, "--sigmas", ""],
        vec![
            "bench",
            "--input",
            input,
            "--sigmas",
            "0.01",
            "--methods",
            "",
        ],
        vec![
            "bench", "--input", input, "--sigmas", "0.01", "--trials", "0",
        ],
        vec![
            "estimate",
            "--input",
            input,
            "--epsilon",
            "2",
            "--problem",
            "fundamental",
        ],
        vec![
            "estimate",
            "--input",
            input,
            "--epsilon",
            "2",
            "--confidence",
            "1.5",
        ],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "# robustfit v1 homography 640 480\n1 2 x 4\n").unwrap();
    let out = run(&["estimate", "--input", path_str(&bad), "--epsilon", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2, column 5"));
    assert_eq!(
        run(&["estimate", "--input", "/nonexistent/file", "--epsilon", "2"])
            .status
            .code(),
        Some(3)
    );

    // Collinear points admit no homography.
    let line = dir.path().join("line.txt");
    let body: String = (0..10)
        .map(|i| format!("{i} {i} {} {}\n", 2 * i, 2 * i))
        .collect();
    std::fs::write(&line, format!("# robustfit v1 homography 640 480\n{body}")).unwrap();
    let out = run(&[
        "estimate",
        "--input",
        path_str(&line),
        "--epsilon",
        "2",
        "--tmax",
        "30",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "estimation_failed");
    assert_eq!(v["iterations"], 30);
}
