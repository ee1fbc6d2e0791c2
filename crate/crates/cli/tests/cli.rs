use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lake() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/example_lake")
}

fn contextjoin(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_contextjoin"));
    cmd.args(args)
        .env_remove("CONTEXTJOIN_SEED")
        .env_remove("CONTEXTJOIN_EMBED_URL")
        .env_remove("CONTEXTJOIN_CONFIG");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn build_index(dir: &Path, extra: &[&str]) -> Value {
    let idx = dir.join("idx");
    let lake = lake();
    let mut args = vec!["index", "--lake", lake.to_str().unwrap(), "--out", idx.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&mut contextjoin(&args));
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_str(&stdout(&out)).unwrap()
}

fn indexed() -> (TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    build_index(dir.path(), &[]);
    let idx = dir.path().join("idx").to_str().unwrap().to_owned();
    (dir, idx)
}

fn records(out: &Output) -> Vec<Value> {
    stdout(out).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const QUERY: [&str; 4] = ["--query-table", "texas_child_population", "--query-column", "County"];

#[test]
fn index_writes_bundle_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let first = build_index(dir.path(), &["--seed", "9"]);
    assert_eq!(first["tables"], 4);
    assert_eq!(first["seed"], 9);
    let names: Vec<&str> = first["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["catalog.json", "inverted.cjii", "minhash.cjmh", "metadata.cjem", "values.cjem"]);
    for name in names {
        assert!(dir.path().join("idx").join(name).is_file());
    }
    let second = build_index(dir.path(), &["--seed", "9"]);
    assert_eq!(first["files"], second["files"]);
    let other = build_index(dir.path(), &["--seed", "10"]);
    assert_ne!(first["files"], other["files"]);
}

#[test]
fn seed_comes_from_env_unless_flag_given() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("idx");
    let lake = lake();
    let base = ["index", "--lake", lake.to_str().unwrap(), "--out", idx.to_str().unwrap()];
    let out = run(contextjoin(&base).env("CONTEXTJOIN_SEED", "42"));
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["seed"], 42);
    let mut args = base.to_vec();
    args.extend(["--seed", "3"]);
    let out = run(contextjoin(&args).env("CONTEXTJOIN_SEED", "42"));
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["seed"], 3);
}

#[test]
fn missing_lake_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&mut contextjoin(&["index", "--out", dir.path().to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--lake"));
}

#[test]
fn search_prints_ranked_json_lines() {
    let (_dir, idx) = indexed();
    let mut args = vec!["search", "--idx", &idx, "-k", "3", "--explain"];
    args.extend(QUERY);
    let out = run(&mut contextjoin(&args));
    assert!(out.status.success(), "{}", stderr(&out));
    let recs = records(&out);
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[0]["table"], "texas_child_assistance");
    assert_eq!(recs[0]["column"], "County");
    assert_eq!(recs[0]["rank"], 1);
    assert_eq!(recs[0]["criteria"].as_object().unwrap().len(), 7);
    assert_eq!(recs[0]["contributions"].as_object().unwrap().len(), 7);
    let closeness: Vec<f64> = recs.iter().map(|r| r["closeness"].as_f64().unwrap()).collect();
    assert!(closeness.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn single_criterion_and_minhash_modes() {
    let (dir, idx) = indexed();
    let mut args = vec!["search", "--idx", &idx, "--only", "value_semantics"];
    args.extend(QUERY);
    let out = run(&mut contextjoin(&args));
    assert!(out.status.success(), "{}", stderr(&out));
    let recs = records(&out);
    let top = recs[0]["criteria"]["value_semantics"].as_f64().unwrap();
    assert!(recs.iter().all(|r| r["criteria"]["value_semantics"].as_f64().unwrap() <= top));

    fs::remove_file(dir.path().join("idx/inverted.cjii")).unwrap();
    let mut args = vec!["search", "--idx", &idx, "--minhash", "-k", "2"];
    args.extend(QUERY);
    let out = run(&mut contextjoin(&args));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(records(&out)[0]["table"], "texas_child_assistance");

    let mut args = vec!["search", "--idx", &idx];
    args.extend(QUERY);
    assert_eq!(run(&mut contextjoin(&args)).status.code(), Some(1));
}

#[test]
fn unknown_query_exits_3_with_suggestions() {
    let (_dir, idx) = indexed();
    let out = run(&mut contextjoin(&[
        "search", "--idx", &idx, "--query-table", "texas_child_population", "--query-column", "Conty",
    ]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("did you mean: County"), "{}", stderr(&out));

    let out = run(&mut contextjoin(&[
        "search", "--idx", &idx, "--query-table", "texas_child_pop", "--query-column", "County",
    ]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("texas_child_population"));
}

#[test]
fn ad_hoc_csv_query() {
    let (dir, idx) = indexed();
    let csv = dir.path().join("my_counties.csv");
    fs::write(&csv, "County,Note\nHarris,a\nTravis,b\nBexar,c\nCass,d\nClay,e\n").unwrap();
    let out = run(&mut contextjoin(&[
        "search", "--idx", &idx, "--query-table", csv.to_str().unwrap(), "--query-column", "County",
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    let recs = records(&out);
    assert!(!recs.is_empty() && recs.len() <= 10);
    assert!(recs.iter().any(|r| r["column"] == "County"));

    let out = run(&mut contextjoin(&[
        "search", "--idx", &idx, "--query-table", csv.to_str().unwrap(), "--query-column", "Nite",
    ]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("Note"));
}

fn write_truth(dir: &Path, body: &str) -> String {
    let path = dir.join("gt.csv");
    fs::write(&path, format!("query_table,query_column,target_table,target_column\n{body}")).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn evaluate_reports_and_ablations() {
    let (dir, idx) = indexed();
    let gt = write_truth(
        dir.path(),
        "texas_child_population,County,texas_child_assistance,County\nnowhere,x,texas_child_population,County\n",
    );
    let out = run(&mut contextjoin(&["evaluate", "--idx", &idx, "--gt", &gt, "-k", "10", "--json"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 1);
    assert_eq!(report["reports"][0]["mrr"], 1.0);
    assert_eq!(report["skipped"].as_array().unwrap().len(), 1);
    assert!(stderr(&out).contains("nowhere.x"));

    let csv = dir.path().join("per_query.csv");
    let out = run(&mut contextjoin(&[
        "evaluate", "--idx", &idx, "--gt", &gt, "--ablate", "single", "--k-sweep", "1..20", "--json", "--csv",
        csv.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 7);
    assert_eq!(report["sweep"].as_array().unwrap().len(), 20);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 7);

    let out = run(&mut contextjoin(&["evaluate", "--idx", &idx, "--gt", &gt, "--ablate", "loo"]));
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("without:intersection") && text.contains("Recall@10"));
}

#[test]
fn malformed_ground_truth_exits_4() {
    let (dir, idx) = indexed();
    let gt = write_truth(dir.path(), "a,b,c,d\na,b,c\n");
    let out = run(&mut contextjoin(&["evaluate", "--idx", &idx, "--gt", &gt]));
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn config_file_is_below_flags() {
    let (dir, idx) = indexed();
    let config = dir.path().join("settings.toml");
    fs::write(&config, format!("index = {idx:?}\nk = 2\n")).unwrap();
    let mut args = vec!["search", "--config", config.to_str().unwrap()];
    args.extend(QUERY);
    assert_eq!(records(&run(&mut contextjoin(&args))).len(), 2);
    args.extend(["-k", "4"]);
    assert_eq!(records(&run(&mut contextjoin(&args))).len(), 4);
}

#[test]
fn unreachable_service_needs_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("idx");
    let lake = lake();
    let base = ["index", "--lake", lake.to_str().unwrap(), "--out", idx.to_str().unwrap()];
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);

    let out = run(contextjoin(&base).env("CONTEXTJOIN_EMBED_URL", &url));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--local-fallback"));

    let mut args = base.to_vec();
    args.push("--local-fallback");
    let out = run(contextjoin(&args).env("CONTEXTJOIN_EMBED_URL", &url));
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["provider"], "local-hash-384");
}
