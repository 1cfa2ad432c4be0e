use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ctrlrepair::controller;
use ctrlrepair::harness::{bootstrap, run_study, safety_rate, sample_traces, BootstrapConfig, StudyConfig};
use ctrlrepair::plant::{ExecutionTrace, PlantId, PlantModel};
use ctrlrepair::repair::Strategy;
use ctrlrepair::stl::parse;

fn small_config(plant: PlantId, out: &Path) -> StudyConfig {
    StudyConfig {
        train_traces: 12,
        test_traces: 6,
        output_dir: out.to_path_buf(),
        persist_traces: true,
        ..StudyConfig::for_plant(plant)
    }
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn table(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_study(&small_config(PlantId::Acc, a.path())).unwrap();
    run_study(&small_config(PlantId::Acc, b.path())).unwrap();
    let fa = files(a.path());
    let fb = files(b.path());
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    let mut compared = 0;
    for (name, bytes) in &fa {
        let s = name.to_string_lossy();
        // timing columns and the manifest that embeds them are wall-clock values
        if s.ends_with("timing.csv") || s.ends_with("manifest.json") {
            continue;
        }
        assert!(bytes == &fb[name], "{s} differs");
        compared += 1;
    }
    assert!(compared > 20);
}

#[test]
fn report_tables_have_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_study(&small_config(PlantId::Wt, dir.path())).unwrap();
    let safety = table(&dir.path().join("safety.csv"));
    assert_eq!(safety[0], ["controller", "train", "test"]);
    let names: Vec<&str> = safety[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["Original", "MinSat", "Similar", "Random"]);
    let timing = table(&dir.path().join("timing.csv"));
    assert_eq!(timing[0], ["system", "sim", "avg_cost", "vio_ratio", "total_cost"]);
    assert_eq!(timing.len(), 2);
    assert_eq!(timing[1][0], "WT");
    assert!(timing[1][3].ends_with("/12"));

    // rates recomputed from the persisted test traces agree with the table
    let m = PlantModel::wt();
    let phi = parse(&m.default_requirement(), m.output_names()).unwrap();
    for (row, group) in safety[1..].iter().zip(["Original", "MinSat", "Similar", "Random"]) {
        let d = dir.path().join("traces").join(group);
        let traces: Vec<ExecutionTrace> = fs::read_dir(&d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("test_"))
            .map(|p| ExecutionTrace::read_csv(fs::File::open(p).unwrap(), PlantId::Wt).unwrap())
            .collect();
        assert_eq!(traces.len(), 6);
        let rate = safety_rate(&traces, &phi).unwrap();
        assert_eq!(format!("{rate:.6}"), row[2], "{group}");
    }
    assert!(report.failures.is_empty());
}

#[test]
fn single_safe_trace_study() {
    let dir = tempfile::tempdir().unwrap();
    let m = PlantModel::acc();
    let (net, data) = bootstrap(&m, &BootstrapConfig::for_plant(PlantId::Acc), 77).unwrap();
    let phi = parse(&m.default_requirement(), m.output_names()).unwrap();
    let seed = (0..50u64)
        .find(|&s| {
            let t = &sample_traces(&m, &net, s, 1).unwrap()[0];
            ctrlrepair::stl::robustness(&t.w, &phi).unwrap() >= 0.0
        })
        .expect("some sampled trace is safe");
    let ctrl_path = dir.path().join("ctrl.json");
    let data_path = dir.path().join("data.csv");
    controller::save(&net, &ctrl_path).unwrap();
    data.write_csv(fs::File::create(&data_path).unwrap()).unwrap();
    let cfg = StudyConfig {
        controller: Some(ctrl_path),
        dataset: Some(data_path),
        train_traces: 1,
        test_traces: 1,
        master_seed: seed,
        strategies: vec![Strategy::Similar],
        output_dir: dir.path().join("out"),
        ..StudyConfig::for_plant(PlantId::Acc)
    };
    let report = run_study(&cfg).unwrap();
    assert_eq!(report.original_train.safety_rate, 1.0);
    assert_eq!(report.strategies[0].already_safe, 1);
    assert_eq!(report.strategies[0].repaired + report.strategies[0].failed, 0);
    assert_eq!(report.timing.violations, 0);
    let timing = table(&dir.path().join("out/timing.csv"));
    assert_eq!(timing[1][3], "0/1");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctrlrepair"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(cli().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(cli().arg("fly").output().unwrap().status.code(), Some(1));
    assert_eq!(cli().args(["monitor", "--plant", "boat", "--trace", "x"]).output().unwrap().status.code(), Some(1));
    let missing = d.join("missing.csv");
    let st = cli().args(["monitor", "--plant", "acc", "--trace"]).arg(&missing).output().unwrap();
    assert_eq!(st.status.code(), Some(1));

    let ctrl = d.join("ctrl.json");
    let trace = d.join("trace.csv");
    let st = cli().args(["bootstrap", "--plant", "acc", "--out"]).arg(&ctrl).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let st = cli()
        .args(["simulate", "--plant", "acc", "--seed", "3", "--controller"])
        .arg(&ctrl)
        .arg("--out")
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    let st = cli().args(["monitor", "--plant", "acc", "--trace"]).arg(&trace).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert!(report["robustness"].is_number());

    let bad = d.join("bad.toml");
    fs::write(&bad, "train_traces = 0\n").unwrap();
    assert_eq!(cli().args(["study", "--config"]).arg(&bad).output().unwrap().status.code(), Some(1));
}
