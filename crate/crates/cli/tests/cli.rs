//! Black-box tests of the `jsp` binary: flags, file formats, exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn jsp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jsp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const EXAMPLE_3X4: &str = "3 4\n0 4 2 2 1 6 3 2\n0 4 3 5 2 7 1 8\n2 6 0 4 1 3 3 1\n";

/// The worked solution order for the 3x4 example.
const WORKED_LIST: &str = "4 0 8 5 1 9 2 10 6 11 3 7\n";

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

#[test]
fn gen_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let a = jsp(
        &[
            "gen",
            "--n-jobs",
            "6",
            "--n-machines",
            "6",
            "--count",
            "10",
            "--seed",
            "3",
            "--out",
            "a.jsp",
        ],
        dir.path(),
    );
    assert!(a.status.success(), "{}", stderr(&a));
    let b = jsp(
        &[
            "gen",
            "--n-jobs",
            "6",
            "--n-machines",
            "6",
            "--count",
            "10",
            "--seed",
            "3",
            "--out",
            "b.jsp",
        ],
        dir.path(),
    );
    assert!(b.status.success());
    let bytes_a = std::fs::read(dir.path().join("a.jsp")).unwrap();
    let bytes_b = std::fs::read(dir.path().join("b.jsp")).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert!(!bytes_a.is_empty());
}

#[test]
fn gen_fsp_produces_identity_machine_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = jsp(
        &[
            "gen",
            "--n-jobs",
            "2",
            "--n-machines",
            "3",
            "--count",
            "2",
            "--seed",
            "1",
            "--out",
            "f.jsp",
            "--kind",
            "fsp",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("f.jsp")).unwrap();
    let instances = jsp_core::io::read_dataset(&text).unwrap();
    for inst in &instances {
        for job in 0..inst.n_jobs() {
            let machines: Vec<usize> = inst.job_ops(job).iter().map(|o| o.machine).collect();
            assert_eq!(machines, vec![0, 1, 2]);
        }
    }
}

#[test]
fn gen_count_zero_writes_a_valid_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = jsp(
        &[
            "gen",
            "--n-jobs",
            "2",
            "--n-machines",
            "2",
            "--count",
            "0",
            "--seed",
            "1",
            "--out",
            "e.jsp",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("e.jsp")).unwrap();
    assert_eq!(text, "0\n");
    assert!(jsp_core::io::read_dataset(&text).unwrap().is_empty());
}

fn tiny_config(seed: u64) -> String {
    format!(
        "[model]\nd_h = 8\nn_heads = 2\nn_layers = 1\nff_width = 16\n\n\
         [trainer]\nlearning_rate = 1e-4\ngrad_clip = 0.5\nbatch_size = 4\nepoch_size = 8\n\
         n_epochs = 2\nbaseline_eval_size = 8\nttest_alpha = 0.05\nseed = {seed}\n\n\
         [data]\nn_jobs = 2\nn_machines = 2\n"
    )
}

#[test]
fn train_is_deterministic_given_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.cfg", &tiny_config(9));
    for run in ["r1", "r2"] {
        let out = jsp(&["train", "--config", "t.cfg", "--out", run], dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("r1/final.ckpt")).unwrap();
    let b = std::fs::read(dir.path().join("r2/final.ckpt")).unwrap();
    assert_eq!(a, b, "final checkpoints differ between identical runs");

    for file in [
        "final.ckpt",
        "epoch_001.ckpt",
        "epoch_002.ckpt",
        "train_log.csv",
        "summary.txt",
    ] {
        assert!(dir.path().join("r1").join(file).exists(), "missing {file}");
    }
    let summary = std::fs::read_to_string(dir.path().join("r1/summary.txt")).unwrap();
    assert!(summary.contains("config_hash:"));
}

#[test]
fn train_rejects_config_with_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let broken = tiny_config(1).replace("learning_rate = 1e-4\n", "");
    write(dir.path(), "bad.cfg", &broken);
    let out = jsp(&["train", "--config", "bad.cfg", "--out", "r"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
}

#[test]
fn train_resumes_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.cfg", &tiny_config(4));
    let first = jsp(&["train", "--config", "t.cfg", "--out", "r1"], dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let resumed = jsp(
        &[
            "train",
            "--config",
            "t.cfg",
            "--out",
            "r2",
            "--resume",
            "r1/final.ckpt",
        ],
        dir.path(),
    );
    assert!(resumed.status.success(), "{}", stderr(&resumed));
    assert!(dir.path().join("r2/final.ckpt").exists());
}

#[test]
fn eval_reports_oracle_reference_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    // Dataset of one instance: the 2x3 example with optimum 18.
    write(dir.path(), "d.jsp", "1\n2 3\n1 4 2 7 0 5\n0 7 1 3 2 7\n");
    write(
        dir.path(),
        "t.cfg",
        &tiny_config(2).replace("n_machines = 2", "n_machines = 3"),
    );
    let train = jsp(&["train", "--config", "t.cfg", "--out", "r"], dir.path());
    assert!(train.status.success(), "{}", stderr(&train));

    let out = jsp(
        &[
            "eval",
            "--checkpoint",
            "r/final.ckpt",
            "--dataset",
            "d.jsp",
            "--methods",
            "model-greedy,SPT,MWKR,oracle",
            "--mode",
            "append",
            "--out",
            "e.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("reference: oracle (mean 18.00)"), "{table}");
    assert!(table.contains("model-greedy"), "{table}");

    let csv = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    let mut oracle = None;
    let mut greedy = None;
    let mut spt = None;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        match f[1] {
            "oracle" => oracle = Some(f[2].parse::<u32>().unwrap()),
            "model-greedy" => greedy = Some(f[2].parse::<u32>().unwrap()),
            "SPT" => spt = Some(f[2].parse::<u32>().unwrap()),
            _ => {}
        }
    }
    assert_eq!(oracle, Some(18));
    assert_eq!(spt, Some(33));
    assert!(greedy.unwrap() >= 18);
}

#[test]
fn eval_requires_seed_for_stochastic_methods() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.jsp", "1\n2 3\n1 4 2 7 0 5\n0 7 1 3 2 7\n");
    let out = jsp(
        &[
            "eval",
            "--dataset",
            "d.jsp",
            "--methods",
            "SPT,model-sample-4",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--seed"), "{}", stderr(&out));
}

#[test]
fn gantt_renders_the_worked_example_with_horizon_27() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "i.jsp", EXAMPLE_3X4);
    write(dir.path(), "l.txt", WORKED_LIST);
    for mode in ["gap-insert", "append"] {
        let out = jsp(
            &[
                "gantt",
                "--instance",
                "i.jsp",
                "--list",
                "l.txt",
                "--out",
                "c.svg",
                "--mode",
                mode,
                "--schedule-csv",
                "s.csv",
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("makespan: 27"), "{}", stdout(&out));
    }
    let svg = std::fs::read_to_string(dir.path().join("c.svg")).unwrap();
    assert!(svg.contains("<svg"));
    assert_eq!(svg.matches("<rect").count(), 12);
    assert!(svg.contains("horizon 27"));

    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("job,pos,machine,start,end\n"));
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn gantt_rejects_infeasible_lists_with_the_violation() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "i.jsp", EXAMPLE_3X4);
    write(dir.path(), "bad.txt", "1 0 8 5 4 9 2 10 6 11 3 7\n");
    let out = jsp(
        &[
            "gantt",
            "--instance",
            "i.jsp",
            "--list",
            "bad.txt",
            "--out",
            "c.svg",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("job 0"), "{err}");
    assert!(err.contains("before"), "{err}");
}

#[test]
fn pdr_and_oracle_emit_recomputable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let gen = jsp(
        &[
            "gen",
            "--n-jobs",
            "2",
            "--n-machines",
            "2",
            "--count",
            "4",
            "--seed",
            "5",
            "--out",
            "d.jsp",
        ],
        dir.path(),
    );
    assert!(gen.status.success());
    let pdr = jsp(
        &[
            "pdr",
            "--dataset",
            "d.jsp",
            "--rule",
            "SPT",
            "--out",
            "p.csv",
        ],
        dir.path(),
    );
    assert!(pdr.status.success());
    let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 4);
    let mean = values.iter().sum::<f64>() / 4.0;
    assert!(
        stdout(&pdr).contains(&format!("{mean:.2}")),
        "{}",
        stdout(&pdr)
    );

    let oracle = jsp(
        &["oracle", "--dataset", "d.jsp", "--out", "o.csv"],
        dir.path(),
    );
    assert!(oracle.status.success());
    let csv = std::fs::read_to_string(dir.path().join("o.csv")).unwrap();
    assert!(csv.starts_with("instance,optimal_makespan,certified,explored\n"));
    for line in csv.lines().skip(1) {
        assert!(line.contains("true"));
    }
}

#[test]
fn unknown_method_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.jsp", "1\n2 3\n1 4 2 7 0 5\n0 7 1 3 2 7\n");
    let out = jsp(
        &["eval", "--dataset", "d.jsp", "--methods", "bogus"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bogus"));
}
