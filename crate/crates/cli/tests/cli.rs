use std::path::Path;
use std::process::{Command, Output};

fn hwgat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hwgat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) {
    let out = hwgat(&[
        "synth",
        "--output.dir",
        dir.to_str().unwrap(),
        "--synth.classes",
        "3",
        "--synth.per_class",
        "4",
        "--synth.frames_min",
        "10",
        "--synth.frames_max",
        "16",
        "--synth.val_fraction",
        "0.25",
        "--synth.train_fraction",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("manifest.txt").exists());
}

fn train_args<'a>(manifest: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--data.manifest",
        manifest,
        "--output.dir",
        out,
        "--model.toy",
        "true",
        "--train.epochs_max",
        "2",
        "--train.lr",
        "1e-3",
        "--train.threads",
        "1",
    ]
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = hwgat(&["train", "--model.nonsense", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hwgat(&["synth", "--output.dir", dir.path().to_str().unwrap(), "--synth.classes", "many"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_manifest_is_an_io_or_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.txt");
    let out = hwgat(&["eval", "--data.manifest", missing.to_str().unwrap(), "--checkpoint.path", missing.to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(3) | Some(5)), "{:?}", out.status);
}

#[test]
fn inspect_commands_print_layouts() {
    let out = hwgat(&["inspect-schema"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("nose"));
    let out = hwgat(&["inspect-windows", "--model.block_len", "2", "--inspect.shifted", "true"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows = text.lines().filter(|l| l.starts_with('0') || l.starts_with('1')).count();
    assert_eq!(rows, 32);
}

#[test]
fn synth_train_eval_finetune() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let manifest = data.join("manifest.txt");
    let run = dir.path().join("run");
    let (m, r) = (manifest.to_str().unwrap(), run.to_str().unwrap());

    let out = hwgat(&train_args(m, r));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["resolved.conf", "metrics.jsonl", "state.ckpt", "best.ckpt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let conf = std::fs::read_to_string(run.join("resolved.conf")).unwrap();
    assert!(conf.contains("train.epochs_max = 2"));

    let ckpt = run.join("best.ckpt");
    let eval_dir = dir.path().join("eval");
    let out = hwgat(&[
        "eval",
        "--data.manifest",
        m,
        "--checkpoint.path",
        ckpt.to_str().unwrap(),
        "--output.dir",
        eval_dir.to_str().unwrap(),
        "--data.eval_split",
        "test",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("top1"));

    let ft_dir = dir.path().join("ft");
    let mut args = train_args(m, ft_dir.to_str().unwrap());
    args[0] = "finetune";
    args.extend(["--checkpoint.path", ckpt.to_str().unwrap()]);
    let out = hwgat(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ft_dir.join("metrics.jsonl").exists());
}

#[test]
fn fixed_seed_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let manifest = data.join("manifest.txt");
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let out = hwgat(&train_args(manifest.to_str().unwrap(), run.to_str().unwrap()));
        assert!(out.status.success());
        logs.push(std::fs::read(run.join("metrics.jsonl")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn preprocess_writes_clean_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let out_dir = dir.path().join("clean");
    let out = hwgat(&[
        "preprocess",
        "--data.manifest",
        data.join("manifest.txt").to_str().unwrap(),
        "--output.dir",
        out_dir.to_str().unwrap(),
        "--preprocess.frames",
        "8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = hwgat::data_io::load_manifest(&out_dir.join("manifest.txt")).unwrap();
    assert_eq!(manifest.entries.len(), 12);
    let seq = hwgat::data_io::load_sequence(&out_dir.join(&manifest.entries[0].path)).unwrap();
    assert_eq!(seq.num_frames(), 8);
    assert!(seq.frames.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn gradcheck_classifier_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = hwgat(&[
        "gradcheck",
        "--output.dir",
        dir.path().to_str().unwrap(),
        "--gradcheck.precision",
        "f64",
        "--gradcheck.only",
        "classifier",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("PASS classifier.w"));
}
