use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aiwc::characterizer::{characterize, DEFAULT_HISTORY_LENGTH};
use aiwc::dataset::{write_features_csv, FeatureRow, Size};
use aiwc::forest::{Forest, ForestParams, ResponseTransform, TrainingSet};
use aiwc::microkernel::{execute, parse_kernel, samples, NdRange, DEFAULT_FUEL};
use aiwc_cli::Cli;
use clap::CommandFactory;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aiwc-predict"));
    cmd.env_remove("AIWC_PREDICT_SEED");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn kernel_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// A 4-kernel, 3-device synthetic dataset and a small model trained on it.
fn small_model(dir: &Path) {
    ok(
        dir,
        &[
            "experiment",
            "synth",
            "--out-dir",
            "syn",
            "--kernels",
            "4",
            "--devices",
            "3",
        ],
    );
    ok(
        dir,
        &[
            "train",
            "--data",
            "syn",
            "--model",
            "m.json",
            "--num-trees",
            "40",
            "--mtry",
            "10",
        ],
    );
}

fn first_key(dir: &Path) -> [String; 3] {
    let text = std::fs::read_to_string(dir.join("syn/features.csv")).unwrap();
    let line = text.lines().nth(1).unwrap();
    let mut f = line.split(',').map(str::to_string);
    [f.next().unwrap(), f.next().unwrap(), f.next().unwrap()]
}

#[test]
fn characterize_emits_one_row() {
    let tmp = TempDir::new().unwrap();
    let k = kernel_file(tmp.path(), "vector_add.mk", samples::VECTOR_ADD);
    let out = ok(
        tmp.path(),
        &[
            "characterize",
            k.to_str().unwrap(),
            "--global",
            "8,1,1",
            "--local",
            "4,1,1",
        ],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("application,kernel,size,"));
    assert!(lines[1].starts_with("custom,vector_add,tiny,"));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn characterize_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    let k = kernel_file(tmp.path(), "reduce.mk", samples::REDUCE);
    let out = ok(
        tmp.path(),
        &[
            "characterize",
            k.to_str().unwrap(),
            "--global",
            "16",
            "--local",
            "8",
            "--arg",
            "levels=3",
        ],
    );

    let kernel = parse_kernel(samples::REDUCE).unwrap();
    let nd = NdRange::new([16, 1, 1], [8, 1, 1]).unwrap();
    let args = [("levels".to_string(), 3)].into_iter().collect();
    let trace = execute(&kernel, &nd, &args, DEFAULT_FUEL).unwrap();
    let row = FeatureRow {
        application: "custom".into(),
        kernel: kernel.name.clone(),
        size: Size::Tiny,
        features: characterize(&trace, DEFAULT_HISTORY_LENGTH).unwrap(),
    };
    let mut expected = Vec::new();
    write_features_csv(&mut expected, &[row]).unwrap();
    assert_eq!(out, String::from_utf8(expected).unwrap());
}

#[test]
fn trace_path_reproduces_the_kernel_path() {
    let tmp = TempDir::new().unwrap();
    let k = kernel_file(tmp.path(), "stencil.mk", samples::STENCIL);
    let direct = ok(
        tmp.path(),
        &[
            "characterize",
            k.to_str().unwrap(),
            "--global",
            "32",
            "--local",
            "8",
            "--save-trace",
            "t.jsonl",
            "--name",
            "s",
        ],
    );
    let replay = ok(tmp.path(), &["characterize", "--trace", "t.jsonl", "--name", "s"]);
    assert_eq!(direct, replay);
}

#[test]
fn output_file_gets_one_header() {
    let tmp = TempDir::new().unwrap();
    let k = kernel_file(tmp.path(), "vector_add.mk", samples::VECTOR_ADD);
    for size in ["tiny", "small"] {
        let out = ok(
            tmp.path(),
            &[
                "characterize",
                k.to_str().unwrap(),
                "--global",
                "8",
                "--size",
                size,
                "-o",
                "f.csv",
            ],
        );
        assert!(out.is_empty());
    }
    let text = std::fs::read_to_string(tmp.path().join("f.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.matches("application,").count(), 1);
}

#[test]
fn embed_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let k = kernel_file(tmp.path(), "vector_add.mk", samples::VECTOR_ADD);
    let args = [
        "characterize",
        k.to_str().unwrap(),
        "--global",
        "8",
        "--local",
        "4",
        "--embed",
    ];
    ok(tmp.path(), &args);
    let once = std::fs::read_to_string(&k).unwrap();
    assert!(once.starts_with("# aiwc: v1 {"));
    assert_eq!(once.matches("# aiwc:").count(), 1);
    assert!(once.ends_with(samples::VECTOR_ADD));
    let json: serde_json::Value = serde_json::from_str(
        once.lines()
            .next()
            .unwrap()
            .strip_prefix(aiwc_cli::EMBED_PREFIX)
            .unwrap(),
    )
    .unwrap();
    assert_eq!(json["local"], serde_json::json!([4, 1, 1]));

    ok(tmp.path(), &args);
    assert_eq!(std::fs::read_to_string(&k).unwrap(), once);
}

#[test]
fn characterize_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let bad = kernel_file(tmp.path(), "bad.mk", ".kernel k\n    frobnicate r0\n    halt\n");
    assert_eq!(
        code(&run(tmp.path(), &["characterize", bad.to_str().unwrap()])),
        2
    );
    assert_eq!(code(&run(tmp.path(), &["characterize", "missing.mk"])), 4);
    let spin = kernel_file(
        tmp.path(),
        "spin.mk",
        ".kernel spin\ntop:\n    br top\n    halt\n",
    );
    assert_eq!(
        code(&run(
            tmp.path(),
            &["characterize", spin.to_str().unwrap(), "--fuel", "100"]
        )),
        3
    );
    let k = kernel_file(tmp.path(), "v.mk", samples::VECTOR_ADD);
    assert_eq!(
        code(&run(
            tmp.path(),
            &[
                "characterize",
                k.to_str().unwrap(),
                "--global",
                "8",
                "--local",
                "3"
            ]
        )),
        2
    );
    assert_eq!(
        code(&run(tmp.path(), &["characterize", "--trace", "nope.jsonl"])),
        4
    );
    std::fs::write(tmp.path().join("junk.jsonl"), "not a trace\n").unwrap();
    assert_eq!(
        code(&run(tmp.path(), &["characterize", "--trace", "junk.jsonl"])),
        2
    );
}

#[test]
fn rank_lists_every_device_fastest_first() {
    let tmp = TempDir::new().unwrap();
    small_model(tmp.path());
    let [app, kernel, size] = first_key(tmp.path());
    let out = ok(
        tmp.path(),
        &[
            "rank",
            "-m",
            "m.json",
            "--features",
            "syn/features.csv",
            "--application",
            &app,
            "--kernel",
            &kernel,
            "--size",
            &size,
        ],
    );
    let lines: Vec<(String, f64)> = out
        .lines()
        .map(|l| {
            let (d, t) = l.split_once(',').unwrap();
            (d.to_string(), t.parse().unwrap())
        })
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.windows(2).all(|w| w[0].1 <= w[1].1), "{out}");
    let devices: BTreeSet<&str> = lines.iter().map(|(d, _)| d.as_str()).collect();
    assert_eq!(devices.len(), 3);

    for (device, t) in &lines {
        let p = ok(
            tmp.path(),
            &[
                "predict",
                "-m",
                "m.json",
                "--features",
                "syn/features.csv",
                "--application",
                &app,
                "--kernel",
                &kernel,
                "--size",
                &size,
                "--device",
                device,
            ],
        );
        assert_eq!(p.trim().parse::<f64>().unwrap(), *t);
    }
}

#[test]
fn predict_rejects_bad_selections_and_devices() {
    let tmp = TempDir::new().unwrap();
    small_model(tmp.path());
    let [app, kernel, size] = first_key(tmp.path());
    let base = ["predict", "-m", "m.json", "--features", "syn/features.csv"];
    let ambiguous = run(tmp.path(), &[&base[..], &["--device", "x"]].concat());
    assert_eq!(code(&ambiguous), 2);
    let sel = [
        "--application",
        app.as_str(),
        "--kernel",
        kernel.as_str(),
        "--size",
        size.as_str(),
    ];
    let unknown = run(
        tmp.path(),
        &[&base[..], &sel[..], &["--device", "no_such_gpu"]].concat(),
    );
    assert_eq!(code(&unknown), 2);
    let missing = run(
        tmp.path(),
        &[
            "predict",
            "-m",
            "nope.json",
            "--features",
            "syn/features.csv",
            "--device",
            "x",
        ],
    );
    assert_eq!(code(&missing), 4);
    std::fs::write(tmp.path().join("garbage.json"), "{}").unwrap();
    let garbage = run(
        tmp.path(),
        &[
            "predict",
            "-m",
            "garbage.json",
            "--features",
            "syn/features.csv",
            "--device",
            "x",
        ],
    );
    assert_eq!(code(&garbage), 2);
}

#[test]
fn model_from_another_feature_schema_exits_5() {
    let tmp = TempDir::new().unwrap();
    small_model(tmp.path());
    let columns = ["old_metric_a", "old_metric_b", "device=gpu"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![i as f64, (i % 3) as f64, (i % 2) as f64])
        .collect();
    let y: Vec<f64> = (0..40).map(|i| 1.0 + (i % 5) as f64).collect();
    let data = TrainingSet::new(columns, rows, y, ResponseTransform::Log10).unwrap();
    Forest::fit(&data, &ForestParams::new(5, 2, 3, 1))
        .unwrap()
        .save(&tmp.path().join("old.json"))
        .unwrap();
    let [app, kernel, size] = first_key(tmp.path());
    for cmd in ["predict", "rank"] {
        let mut args = vec![cmd, "-m", "old.json", "--features", "syn/features.csv"];
        args.extend(["--application", &app, "--kernel", &kernel, "--size", &size]);
        if cmd == "predict" {
            args.extend(["--device", "gpu"]);
        }
        let out = run(tmp.path(), &args);
        assert_eq!(code(&out), 5, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run(tmp.path(), &["train", "--model", "m.json"])), 2);
    assert_eq!(
        code(&run(
            tmp.path(),
            &["--seed", "abc", "experiment", "synth", "--out-dir", "x"]
        )),
        2
    );
    assert_eq!(code(&run(tmp.path(), &["no-such-command"])), 2);
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let k = kernel_file(tmp.path(), "collatz.mk", samples::COLLATZ);
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for (run_dir, jobs) in [("a", "1"), ("b", "2")] {
        let d = tmp.path().join(run_dir);
        std::fs::create_dir(&d).unwrap();
        let s = |args: &[&str]| -> String {
            let mut full = vec!["--seed", "7", "--jobs", jobs];
            full.extend_from_slice(args);
            ok(&d, &full)
        };
        let mut stdout = String::new();
        stdout += &s(&[
            "experiment",
            "synth",
            "--out-dir",
            "syn",
            "--kernels",
            "5",
            "--devices",
            "3",
            "--iterations",
            "3",
        ]);
        stdout += &s(&[
            "characterize",
            k.to_str().unwrap(),
            "--global",
            "16",
            "--local",
            "4",
            "-o",
            "f.csv",
        ]);
        stdout += &s(&[
            "train",
            "--data",
            "syn",
            "--model",
            "m.json",
            "--num-trees",
            "30",
            "--mtry",
            "12",
        ]);
        stdout += &s(&[
            "tune",
            "--data",
            "syn",
            "--max-evals",
            "8",
            "--max-trees",
            "40",
            "--fix",
            "min_node_size=9",
            "--trace-out",
            "trace.csv",
            "--model",
            "t.json",
        ]);
        stdout += &s(&[
            "experiment",
            "evaluate",
            "--data",
            "syn",
            "--num-trees",
            "20",
            "--mtry",
            "10",
            "--out-dir",
            "eval",
            "--plot",
            "svg",
        ]);
        stdout += &s(&[
            "experiment",
            "learning-curve",
            "--data",
            "syn",
            "--samples",
            "3",
            "--num-trees",
            "10",
            "--mtry",
            "8",
            "-o",
            "curve.csv",
            "--plot",
            "svg",
        ]);
        stdout += &s(&[
            "experiment",
            "min-node-scan",
            "--data",
            "syn",
            "--num-trees",
            "10",
            "--mtry",
            "8",
            "--to",
            "5",
        ]);
        stdout += &s(&[
            "experiment",
            "heatmap",
            "--data",
            "syn",
            "--max-trees",
            "20",
            "--interior-starts",
            "1",
            "--evals",
            "5",
            "--traces-dir",
            "chains",
            "-o",
            "heat.csv",
        ]);
        stdout += &s(&[
            "experiment",
            "loko",
            "--data",
            "syn",
            "--max-trees",
            "20",
            "--evals",
            "3",
            "-o",
            "loko.csv",
        ]);
        std::fs::write(d.join("stdout.txt"), stdout).unwrap();

        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        collect(&d, &d, &mut files);
        outputs.push(files);
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "m.json",
        "t.json",
        "trace.csv",
        "eval/predictions.csv",
        "eval/predictions.svg",
        "curve.svg",
        "chains/chain_0.csv",
        "loko.csv",
    ] {
        assert!(names.contains(&expected), "missing {expected} in {names:?}");
    }
    assert_eq!(outputs[0].len(), outputs[1].len());
    for ((na, a), (nb, b)) in outputs[0].iter().zip(&outputs[1]) {
        assert_eq!(na, nb);
        assert!(a == b, "{na} differs between runs");
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(root, &p, out);
        } else {
            let name = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.push((name, std::fs::read(&p).unwrap()));
        }
    }
}

#[test]
fn seed_comes_from_the_environment_when_not_given() {
    let tmp = TempDir::new().unwrap();
    let synth = |seed_env: Option<&str>, extra: &[&str], dir: &str| {
        let mut cmd = bin();
        if let Some(s) = seed_env {
            cmd.env("AIWC_PREDICT_SEED", s);
        }
        let out = cmd
            .current_dir(tmp.path())
            .args(extra)
            .args([
                "experiment",
                "synth",
                "--kernels",
                "2",
                "--devices",
                "2",
                "--out-dir",
                dir,
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(tmp.path().join(dir).join("runtimes.csv")).unwrap()
    };
    let env = synth(Some("99"), &[], "env");
    let flag = synth(None, &["--seed", "99"], "flag");
    let default = synth(None, &[], "default");
    assert_eq!(env, flag);
    assert_ne!(env, default);
}

/// Every flag appears in its command's help, and the help mentions no flag
/// that is not registered.
#[test]
fn help_documents_exactly_the_registered_flags() {
    fn walk(cmd: &mut clap::Command, path: &str) {
        let help = cmd.render_long_help().to_string();
        let registered: BTreeSet<String> = cmd
            .get_arguments()
            .filter_map(|a| a.get_long().map(|l| format!("--{l}")))
            .chain(["--help".to_string()])
            .collect();
        for flag in &registered {
            assert!(help.contains(flag.as_str()), "{path}: {flag} missing from help");
        }
        for arg in cmd.get_arguments() {
            if !arg.is_hide_set() && arg.get_id() != "help" && arg.get_id() != "version" {
                assert!(
                    arg.get_help().is_some() || arg.get_long().is_some() || arg.is_positional(),
                    "{path}: {}",
                    arg.get_id()
                );
            }
        }
        let mentioned: BTreeSet<String> = help
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
            .filter(|w| w.starts_with("--") && w.len() > 2)
            .map(str::to_string)
            .collect();
        for flag in &mentioned {
            assert!(
                registered.contains(flag) || flag == "--version",
                "{path}: help mentions unregistered {flag}"
            );
        }
        for sub in cmd.get_subcommands_mut().filter(|s| s.get_name() != "help") {
            let name = format!("{path} {}", sub.get_name());
            walk(sub, &name);
        }
    }
    let mut cmd = Cli::command();
    cmd.build();
    walk(&mut cmd, "aiwc-predict");
}
