use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use hpgmn_cli::commands::{dataset_summary, ABLATION_FILE, SWEEP_FILE};
use hpgmn_cli::runner::{mean_std, split_file, Aggregate, AGGREGATE_FILE};
use hpgmn_cli::{cmd_ablate, cmd_stats, cmd_sweep, cmd_train, RunOptions};
use hpgmn_core::graph::{
    edge_homophily, generate_heterophilous_sbm, node_homophily, random_splits, write_dataset, Graph,
};
use hpgmn_core::model::RunMetrics;
use serde_json::json;
use tempfile::TempDir;

fn small_graph() -> Graph {
    generate_heterophilous_sbm(30, 2, 0.02, 0.2, 1.0, 3).unwrap()
}

fn write_fixture(root: &Path) -> PathBuf {
    let g = small_graph();
    let splits = random_splits(&g, 3, 11).unwrap();
    let dir = root.join("data");
    write_dataset(&dir, &g, &splits).unwrap();
    dir
}

fn write_config(root: &Path, extra: serde_json::Value) -> PathBuf {
    let mut cfg = json!({
        "dataset": "data",
        "splits": [0, 1],
        "k": 8,
        "max_epochs": 20,
        "patience": 5,
        "estimator_max_epochs": 20,
        "estimator_patience": 5,
        "seed": 5
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = root.join("cfg.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn opts(out: &Path) -> RunOptions {
    RunOptions {
        out: Some(out.to_path_buf()),
        ..RunOptions::default()
    }
}

fn read_aggregate(dir: &Path) -> Aggregate {
    serde_json::from_str(&fs::read_to_string(dir.join(AGGREGATE_FILE)).unwrap()).unwrap()
}

fn setup(extra: serde_json::Value) -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    write_fixture(tmp.path());
    let cfg = write_config(tmp.path(), extra);
    (tmp, cfg)
}

#[test]
fn stats_row_matches_direct_computation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixture(tmp.path());
    let g = small_graph();
    let csv = cmd_stats(&dir).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "nodes,edges,edge_records,features,classes,node_homophily,edge_homophily"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "60");
    assert_eq!(row[1], g.num_edges().to_string());
    assert_eq!(row[2], g.num_edges().to_string());
    assert_eq!(row[4], "2");
    let s = dataset_summary(&dir).unwrap();
    assert_eq!(s.node_homophily, node_homophily(&g).unwrap());
    assert_eq!(s.edge_homophily, edge_homophily(&g).unwrap());
    assert!(lines.next().is_none());
}

#[test]
fn stats_counts_duplicate_edge_lines_once() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("edges.tsv"), "0\t1\n1\t0\n0\t1\n1\t2\n").unwrap();
    fs::write(dir.join("features.tsv"), "1\n0\n1\n").unwrap();
    fs::write(dir.join("labels.tsv"), "0\n1\n0\n").unwrap();
    let s = dataset_summary(dir).unwrap();
    assert_eq!((s.nodes, s.edges, s.edge_records), (3, 2, 4));
    assert_eq!(s.edge_homophily, 0.0);
}

#[test]
fn train_is_byte_identical_across_runs() {
    let (tmp, cfg) = setup(json!({}));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_train(&cfg, &opts(&a)).unwrap();
    cmd_train(&cfg, &opts(&b)).unwrap();
    for name in ["split_0.json", "split_1.json", AGGREGATE_FILE] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn aggregate_matches_split_files() {
    let (tmp, cfg) = setup(json!({}));
    let out = tmp.path().join("out");
    let outcome = cmd_train(&cfg, &opts(&out)).unwrap();
    assert!(!outcome.partial);
    let agg = read_aggregate(&out);
    assert_eq!(agg, outcome.aggregates[0]);
    assert_eq!(agg.schema_version, 1);
    assert!(agg.complete);
    let runs: Vec<RunMetrics> = [0, 1]
        .iter()
        .map(|&k| serde_json::from_str(&fs::read_to_string(split_file(&out, k)).unwrap()).unwrap())
        .collect();
    let acc: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    assert_eq!(agg.test_accuracies, acc);
    // independent recomputation of the population moments
    let m = (acc[0] + acc[1]) / 2.0;
    let sd = ((acc[0] - m).powi(2) / 2.0 + (acc[1] - m).powi(2) / 2.0).sqrt();
    assert!((agg.mean_test_accuracy - m).abs() < 1e-15);
    assert!((agg.std_test_accuracy - sd).abs() < 1e-15);
    let ent = (runs[0].memory.usage_entropy + runs[1].memory.usage_entropy) / 2.0;
    assert!((agg.mean_usage_entropy - ent).abs() < 1e-12);
}

#[test]
fn single_split_has_zero_std() {
    let (tmp, cfg) = setup(json!({"splits": [2]}));
    let out = tmp.path().join("out");
    let o = cmd_train(&cfg, &opts(&out)).unwrap();
    let a = &o.aggregates[0];
    assert_eq!(a.split_ids, vec![2]);
    assert_eq!(a.std_test_accuracy, 0.0);
    assert_eq!(a.mean_test_accuracy, a.test_accuracies[0]);
}

#[test]
fn seed_flag_changes_the_run_and_is_recorded() {
    let (tmp, cfg) = setup(json!({"splits": [0]}));
    let out = tmp.path().join("out");
    let o = RunOptions {
        seed: Some(40),
        ..opts(&out)
    };
    cmd_train(&cfg, &o).unwrap();
    let m: RunMetrics =
        serde_json::from_str(&fs::read_to_string(split_file(&out, 0)).unwrap()).unwrap();
    assert_eq!(m.seed, 40);
}

#[test]
fn ablate_full_row_equals_train() {
    let (tmp, cfg) = setup(json!({}));
    let t = tmp.path().join("t");
    let a = tmp.path().join("a");
    let trained = cmd_train(&cfg, &opts(&t)).unwrap();
    let ablated = cmd_ablate(&cfg, &opts(&a)).unwrap();
    let names: Vec<&str> = ablated.aggregates.iter().map(|x| x.name.as_str()).collect();
    assert_eq!(
        names,
        ["full", "wo_r1", "wo_r2", "wo_r3", "wo_r4", "wo_k", "wo_e", "wo_ke"]
    );
    let full = &ablated.aggregates[0];
    assert_eq!(full.test_accuracies, trained.aggregates[0].test_accuracies);
    assert_eq!(
        fs::read(t.join("split_0.json")).unwrap(),
        fs::read(a.join("full/split_0.json")).unwrap()
    );
    let csv = fs::read_to_string(a.join(ABLATION_FILE)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "schema_version,variant,mean_test_accuracy,std_test_accuracy,n_ok,n_failed,mean_usage_entropy"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[1], "full");
    assert_eq!(first[2].parse::<f64>().unwrap(), full.mean_test_accuracy);
    assert_eq!(lines.count(), 7);
}

#[test]
fn ablating_an_already_disabled_block_is_a_no_op() {
    let (tmp, cfg) = setup(json!({"use_diffusion": false, "splits": [0]}));
    let a = tmp.path().join("a");
    let o = cmd_ablate(&cfg, &opts(&a)).unwrap();
    let full = &o.aggregates[0];
    let wo_r4 = o.aggregates.iter().find(|x| x.name == "wo_r4").unwrap();
    assert_eq!(full.test_accuracies, wo_r4.test_accuracies);
}

#[test]
fn one_by_one_sweep_equals_train() {
    let (tmp, cfg) = setup(json!({
        "sweep_k": [8], "sweep_alpha_kpattern": [0.001], "sweep_beta": [0.1]
    }));
    let t = tmp.path().join("t");
    let s = tmp.path().join("s");
    let trained = cmd_train(&cfg, &opts(&t)).unwrap();
    let swept = cmd_sweep(&cfg, &opts(&s)).unwrap();
    assert_eq!(swept.aggregates.len(), 1);
    assert_eq!(
        swept.aggregates[0].test_accuracies,
        trained.aggregates[0].test_accuracies
    );
    let csv = fs::read_to_string(s.join(SWEEP_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("schema_version,k,alpha_kpattern,beta,"));
}

#[test]
fn failing_sweep_cell_does_not_stop_the_sweep() {
    let (tmp, cfg) = setup(json!({
        "splits": [0], "sweep_k": [0, 4], "sweep_alpha_kpattern": [0.001], "sweep_beta": [0.1]
    }));
    let s = tmp.path().join("s");
    let o = cmd_sweep(&cfg, &opts(&s)).unwrap();
    assert!(o.partial);
    assert!(!o.aggregates[0].complete);
    assert_eq!(o.aggregates[0].failures.len(), 1);
    assert!(o.aggregates[1].complete);
    assert_eq!(
        fs::read_to_string(s.join(SWEEP_FILE))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn resume_reuses_existing_split_files() {
    let (tmp, cfg) = setup(json!({}));
    let out = tmp.path().join("out");
    cmd_train(&cfg, &opts(&out)).unwrap();
    let path = split_file(&out, 0);
    let mut m: RunMetrics = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    m.test_accuracy = 0.123;
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let resumed = RunOptions {
        resume: true,
        ..opts(&out)
    };
    let o = cmd_train(&cfg, &resumed).unwrap();
    assert_eq!(o.aggregates[0].test_accuracies[0], 0.123);
    let fresh = cmd_train(&cfg, &opts(&out)).unwrap();
    assert_ne!(fresh.aggregates[0].test_accuracies[0], 0.123);
}

#[test]
fn statistics_cache_gives_identical_results() {
    let (tmp, cfg) = setup(json!({"cache_dir": "cache", "splits": [0]}));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_train(&cfg, &opts(&a)).unwrap();
    assert!(fs::read_dir(tmp.path().join("cache")).unwrap().count() > 0);
    cmd_train(&cfg, &opts(&b)).unwrap();
    assert_eq!(
        fs::read(split_file(&a, 0)).unwrap(),
        fs::read(split_file(&b, 0)).unwrap()
    );
}

#[test]
fn unlabelled_evaluation_nodes_are_dropped() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixture(tmp.path());
    let split: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("splits/split_0.json")).unwrap())
            .unwrap();
    let hidden = split["test"][0].as_u64().unwrap() as usize;
    let labels = fs::read_to_string(dir.join("labels.tsv")).unwrap();
    let labels: Vec<String> = labels
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == hidden {
                "-1".into()
            } else {
                l.to_string()
            }
        })
        .collect();
    fs::write(dir.join("labels.tsv"), labels.join("\n") + "\n").unwrap();
    let cfg = write_config(tmp.path(), json!({"splits": [0]}));
    let o = cmd_train(&cfg, &opts(&tmp.path().join("out"))).unwrap();
    assert!(o.aggregates[0].complete);
}

#[test]
fn config_errors_are_fatal() {
    let (tmp, _) = setup(json!({}));
    let bad = write_config(tmp.path(), json!({"no_such_key": 1}));
    assert!(cmd_train(&bad, &opts(&tmp.path().join("o"))).is_err());
    let missing = write_config(tmp.path(), json!({"dataset": "nowhere"}));
    assert!(cmd_train(&missing, &opts(&tmp.path().join("o"))).is_err());
    let no_split = write_config(tmp.path(), json!({"splits": [9]}));
    assert!(cmd_train(&no_split, &opts(&tmp.path().join("o"))).is_err());
    let empty_grid = write_config(tmp.path(), json!({"sweep_k": []}));
    assert!(cmd_sweep(&empty_grid, &opts(&tmp.path().join("o"))).is_err());
}

#[test]
fn mean_std_is_the_population_form() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - 1.25f64.sqrt()).abs() < 1e-15);
}

fn hpgmn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hpgmn"))
}

#[test]
fn binary_exit_codes() {
    let (tmp, cfg) = setup(json!({
        "splits": [0], "sweep_k": [0, 4], "sweep_alpha_kpattern": [0.001], "sweep_beta": [0.1]
    }));
    let st = hpgmn()
        .arg("stats")
        .arg(tmp.path().join("data"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8(st.stdout)
        .unwrap()
        .starts_with("nodes,edges"));

    let out = tmp.path().join("out");
    let sw = hpgmn()
        .args(["sweep", "--workers", "1", "-c"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(sw.status.code(), Some(2));

    let tr = hpgmn()
        .args(["train", "-c"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(tr.status.code(), Some(0));

    let bad = hpgmn()
        .args(["train", "-c"])
        .arg(tmp.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let stats_bad = hpgmn()
        .arg("stats")
        .arg(tmp.path().join("nope"))
        .output()
        .unwrap();
    assert_eq!(stats_bad.status.code(), Some(1));
}
