use std::io::Write;
use std::process::{Command, Output, Stdio};

use empcheb::montecarlo::{draw, DistributionSpec};
use empcheb::output::EllipsoidRecord;
use empcheb_core::geometry::confidence_ellipsoid;
use empcheb_core::SampleStats;
use serde_json::Value;

fn empcheb(args: &[&str], stdin: &str) -> Output {
    empcheb_env(args, stdin, &[])
}

fn empcheb_env(args: &[&str], stdin: &str, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_empcheb"));
    cmd.args(args)
        .env_remove("EMPCHEB_FORMAT")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for (k, v) in env {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().unwrap();
    // Feed stdin from a thread so a full stdout pipe cannot deadlock us.
    let mut pipe = child.stdin.take().unwrap();
    let input = stdin.to_owned();
    let writer = std::thread::spawn(move || {
        let _ = pipe.write_all(input.as_bytes());
    });
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap();
    out
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn single(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut lines = json_lines(out);
    assert_eq!(lines.len(), 1);
    lines.remove(0)
}

/// Asserts exit 2 with one JSON error line and returns it.
fn error(out: &Output, code: &str) -> Value {
    assert_eq!(out.status.code(), Some(2), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.lines().count(), 1, "{text}");
    let v: Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["error"]["code"], code, "{text}");
    v
}

fn f64_of(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| v.to_string().parse().unwrap())
}

fn gaussian_csv(dim: usize, count: usize, seed: u64) -> String {
    let header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    let mut text = header.join(",") + "\n";
    for x in draw(&DistributionSpec::standard_gaussian(dim), seed, 0, count).unwrap() {
        let cells: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        text += &(cells.join(",") + "\n");
    }
    text
}

#[test]
fn bound_exact_and_float() {
    let v = single(&empcheb(&["bound", "--dim", "2", "--count", "100", "--lambda", "3"], ""));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "bound");
    assert_eq!(v["formula"], "empirical");
    assert_eq!(v["exact"], true);
    assert_eq!(v["rational"], "24/101");
    assert_eq!(f64_of(&v["value"]), 24.0 / 101.0);

    let same = single(&empcheb(&["bound", "--dim", "2", "--count", "100", "--lambda-sq", "18/2"], ""));
    assert_eq!(same["rational"], "24/101");

    let float = single(&empcheb(
        &["bound", "--dim", "2", "--count", "100", "--lambda", "3", "--numeric-mode", "float"],
        "",
    ));
    assert_eq!(float["exact"], false);
    assert!(float["rational"].is_null());
    assert_eq!(f64_of(&float["value"]), 24.0 / 101.0);

    for (formula, rational) in [("simplified", "1211/5000"), ("asymptotic", "2/9")] {
        let v = single(&empcheb(
            &["bound", "--dim", "2", "--count", "100", "--lambda", "3", "--formula", formula],
            "",
        ));
        assert_eq!(v["rational"], rational);
    }
}

#[test]
fn floats_have_seventeen_significant_digits() {
    let out = empcheb(&["bound", "--dim", "2", "--count", "100", "--lambda", "3"], "");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"value\":2.3762376237623761e-1"), "{text}");
}

#[test]
fn invert_and_sample_size() {
    let v = single(&empcheb(&["invert", "--dim", "2", "--count", "100", "--epsilon", "0.25"], ""));
    assert_eq!(v["feasible"], true);
    let lambda = f64_of(&v["lambda"]);
    assert!((lambda - 2.9023).abs() < 1e-3, "{lambda}");
    assert!(f64_of(&v["bound_at_safe_lambda"]["value"]) <= 0.25);

    let v = single(&empcheb(&["invert", "--dim", "2", "--count", "10", "--epsilon", "0.15"], ""));
    assert_eq!(v["feasible"], false);
    assert_eq!(v["achievable"]["rational"], "2/11");

    let v = single(&empcheb(&["samplesize", "--dim", "2", "--lambda", "3", "--epsilon", "0.3"], ""));
    assert_eq!((v["first"].as_u64(), v["sustained"].as_u64()), (Some(16), Some(23)));

    let v = single(&empcheb(&["samplesize", "--dim", "2", "--lambda", "2", "--epsilon", "0.5"], ""));
    assert_eq!(v["feasible"], false);
    assert_eq!(v["limit"]["rational"], "1/2");
}

#[test]
fn detect_emits_one_verdict_per_post_warmup_row() {
    let input = gaussian_csv(2, 200, 1);
    let out = empcheb(&["detect", "--epsilon", "0.5", "--warmup", "50"], &input);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdicts = json_lines(&out);
    assert_eq!(verdicts.len(), 150);
    for (i, v) in verdicts.iter().enumerate() {
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["index"], 50 + i as u64);
        // Line 1 is the header.
        assert_eq!(v["line"], 52 + i as u64);
        assert!(f64_of(&v["bound"]["value"]) <= 0.5);
        assert_eq!(v["flagged"], f64_of(&v["distance_sq"]) >= f64_of(&v["threshold_sq"]));
    }
}

#[test]
fn detect_from_jsonl_file_and_fixed_radius() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stream.jsonl");
    let xs = draw(&DistributionSpec::standard_gaussian(3), 2, 0, 80).unwrap();
    let text: String = xs.iter().map(|x| format!("{{\"x\":[{},{},{}]}}\n", x[0], x[1], x[2])).collect();
    std::fs::write(&path, text).unwrap();
    let out = empcheb(
        &["detect", "--input", path.to_str().unwrap(), "--lambda-sq", "16", "--warmup", "20", "--policy", "frozen"],
        "",
    );
    let verdicts = json_lines(&out);
    assert_eq!(verdicts.len(), 60);
    assert!(verdicts.iter().all(|v| f64_of(&v["threshold_sq"]) == 16.0 && v["stats_count"] == 20));
}

#[test]
fn ellipsoid_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let samples = gaussian_csv(3, 300, 3);
    let out = empcheb(&["ellipsoid", "--epsilon", "0.2"], &samples);
    let record = single(&out);
    assert_eq!(record["source_count"], 300);
    assert_eq!(record["lower"].as_array().unwrap().len(), 9);
    assert!(f64_of(&record["coverage_bound"]["value"]) <= 0.2);
    let path = dir.path().join("ellipsoid.json");
    std::fs::write(&path, &out.stdout).unwrap();

    // The same ellipsoid built in-process from the same rows.
    let rows: Vec<Vec<f64>> = draw(&DistributionSpec::standard_gaussian(3), 3, 0, 300).unwrap();
    let stats = SampleStats::from_samples(3, &rows).unwrap();
    let direct = confidence_ellipsoid(&stats, 0.2).unwrap();
    let reread: EllipsoidRecord = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reread.to_ellipsoid().unwrap(), direct);

    let probes: Vec<Vec<f64>> = draw(&DistributionSpec::student_t(3, 3.0), 4, 0, 2000).unwrap();
    let probe_csv: String = probes.iter().map(|p| format!("{:?},{:?},{:?}\n", p[0], p[1], p[2])).collect();
    let out = empcheb(&["contains", "--ellipsoid", path.to_str().unwrap()], &probe_csv);
    let decisions = json_lines(&out);
    assert_eq!(decisions.len(), probes.len());
    let mut inside = 0;
    for (p, d) in probes.iter().zip(&decisions) {
        assert_eq!(d["inside"], direct.contains(p).unwrap());
        assert_eq!(f64_of(&d["distance_sq"]).to_bits(), direct.mahalanobis_sq(p).unwrap().to_bits());
        inside += usize::from(d["inside"] == true);
    }
    assert!(inside > 0 && inside < probes.len());
}

#[test]
fn output_formats() {
    let args = ["bound", "--dim", "1", "--count", "20", "--lambda-sq", "4"];
    let out = empcheb_env(&args, "", &[("EMPCHEB_FORMAT", "csv")]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "schema_version,command,dim,count,lambda_sq,numeric_mode,formula,exact,value,rational");
    assert!(lines[1].ends_with(",2/7"));

    let out = empcheb(&["--format", "human", "bound", "--dim", "1", "--count", "20", "--lambda-sq", "4"], "");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rational=2/7"), "{text}");

    // The flag wins over the environment.
    let out = empcheb_env(&["--format", "json", "bound", "--dim", "1", "--count", "20", "--lambda-sq", "4"], "", &[(
        "EMPCHEB_FORMAT",
        "csv",
    )]);
    assert_eq!(single(&out)["rational"], "2/7");

    let out = empcheb(&["--format", "csv", "sweep", "--dim", "2", "--lambda", "2"], "");
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn simulate_echoes_its_seed() {
    let v = single(&empcheb(
        &["simulate", "--dim", "2", "--count", "20", "--lambda", "2", "--trials", "2000"],
        "",
    ));
    assert_eq!(v["seed"], empcheb::cli::DEFAULT_SEED);
    assert_eq!(v["pass"], true);
    assert_eq!(v["bound"]["rational"], "4/7");
    let again = single(&empcheb(
        &["simulate", "--dim", "2", "--count", "20", "--lambda", "2", "--trials", "2000"],
        "",
    ));
    assert_eq!(v, again);

    let spec = r#"{"family":"uniform_box","lo":[0,0],"hi":[1,5]}"#;
    let v = single(&empcheb(
        &["simulate", "--spec", spec, "--count", "30", "--lambda-sq", "9", "--trials", "1000", "--seed", "5"],
        "",
    ));
    assert_eq!(v["family"], "uniform_box");
    assert_eq!(v["seed"], 5);
}

#[test]
fn error_codes() {
    error(&empcheb(&["bound", "--dim", "2", "--count", "100"], ""), "usage");
    error(&empcheb(&["bound", "--dim", "2", "--count", "100", "--lambda", "3", "--bogus"], ""), "usage");
    error(&empcheb(&["bound", "--dim", "2", "--count", "100", "--lambda", "3/0"], ""), "usage");
    error(&empcheb(&["bound", "--dim", "0", "--count", "100", "--lambda", "3"], ""), "dimension");
    error(&empcheb(&["bound", "--dim", "2", "--count", "1", "--lambda", "3"], ""), "invalid_argument");
    error(&empcheb(&["bound", "--dim", "2", "--count", "10", "--lambda", "0"], ""), "invalid_argument");
    error(&empcheb(&["invert", "--dim", "2", "--count", "10", "--epsilon", "1.5"], ""), "invalid_argument");

    let ragged = error(&empcheb(&["detect", "--epsilon", "0.5", "--warmup", "3"], "1,2\n3,4\n5,6,7\n"), "format");
    assert_eq!(ragged["error"]["line"], 3);
    let text = error(&empcheb(&["ellipsoid", "--epsilon", "0.5"], "1,2\n3,x\n"), "format");
    assert_eq!(text["error"]["line"], 2);
    error(&empcheb(&["detect", "--epsilon", "0.5", "--warmup", "3"], ""), "empty_input");
    error(&empcheb(&["ellipsoid", "--epsilon", "0.5"], "x,y\n"), "empty_input");

    let line: String = (0..20).map(|i| format!("{i},{}\n", 2 * i)).collect();
    error(&empcheb(&["ellipsoid", "--epsilon", "0.5"], &line), "singular_covariance");
    error(&empcheb(&["detect", "--epsilon", "0.5", "--warmup", "10"], &line), "singular_covariance");
    error(&empcheb(&["ellipsoid", "--epsilon", "0.01"], &gaussian_csv(2, 20, 5)), "infeasible");
    error(&empcheb(&["ellipsoid", "--epsilon", "0.5", "--input", "/nonexistent/x.csv"], ""), "io");
    error(
        &empcheb(&["simulate", "--family", "two-point", "--p", "1", "--dim", "2", "--count", "20", "--lambda", "2"], ""),
        "degenerate_spec",
    );
    error(
        &empcheb(&["simulate", "--family", "student-t", "--dof", "2", "--dim", "2", "--count", "20", "--lambda", "2"], ""),
        "degenerate_spec",
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.json");
    let out = empcheb(&["ellipsoid", "--epsilon", "0.3"], &gaussian_csv(2, 100, 6));
    std::fs::write(&path, &out.stdout).unwrap();
    error(&empcheb(&["contains", "--ellipsoid", path.to_str().unwrap()], "1,2,3\n"), "dimension");
}

#[test]
fn help_and_version() {
    let out = empcheb(&["--help"], "");
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["bound", "invert", "samplesize", "detect", "ellipsoid", "simulate"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    assert!(empcheb(&["--version"], "").status.success());
}
