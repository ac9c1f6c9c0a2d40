use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use log::info;
use ndarray::Array3;
use rand::{Rng, SeedableRng};

use hwgat::config::{RunConfig, KEYS};
use hwgat::data_io::{
    load_full_pose, load_manifest, load_sequence, load_split, manifest::base_dir, save_manifest, save_sequence,
    DatasetManifest, Split,
};
use hwgat::network::Model;
use hwgat::preprocess::{fill_missing, normalize_bbox, resample_to_length, SkeletonSequence};
use hwgat::real::Real;
use hwgat::schema::{build_default_schema, build_default_selection_map};
use hwgat::training::{evaluate, finetune, load_checkpoint, metrics::append_jsonl, train, batch_loss_and_grad, Batch, TrainState};
use hwgat::verification::{compare_gradients, run_ablation_grid, FdReport};
use hwgat::windowing::{build_window_layout, MaskSet, WindowMode};
use hwgat::{Error, Result};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("inspect-schema", "Print the 27-node skeleton, its edges and the landmark selection"),
    ("inspect-windows", "Print the spatial windows and one block adjacency mask"),
    ("preprocess", "Normalise and infill a sequence file or every file of a manifest"),
    ("synth", "Generate a synthetic dataset and its manifest"),
    ("train", "Train a model on a manifest"),
    ("eval", "Report top-1 and top-5 accuracy of a checkpoint"),
    ("finetune", "Train a new classifier head from a checkpoint"),
    ("gradcheck", "Compare analytic gradients with finite differences"),
    ("ablate", "Train and evaluate the ablation grid"),
];

fn cli() -> Command {
    let mut cmd = Command::new("hwgat")
        .about("Hierarchical windowed graph attention for isolated sign recognition")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("Config file of `key = value` lines, applied before flags"),
        )
        .arg(
            Arg::new("quiet")
                .long("quiet")
                .short('q')
                .global(true)
                .action(ArgAction::SetTrue)
                .help("Only log warnings and errors"),
        );
    for spec in KEYS {
        cmd = cmd.arg(
            Arg::new(spec.key)
                .long(spec.key)
                .global(true)
                .value_name("VALUE")
                .help(format!("{} [default: {}]", spec.help, spec.default))
                .help_heading("Configuration"),
        );
    }
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd
}

fn resolve(matches: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = matches.get_one::<String>("config") {
        cfg.apply_file(Path::new(path))?;
    }
    for spec in KEYS {
        if let Some(v) = matches.get_one::<String>(spec.key) {
            cfg.set(spec.key, v)?;
        }
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.require_path("output.dir")?;
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join("resolved.conf");
    std::fs::write(&path, cfg.to_text()).map_err(|e| io_error(&path, e))?;
    info!("resolved configuration written to {}", path.display());
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<(PathBuf, DatasetManifest)> {
    let path = cfg.require_path("data.manifest")?;
    let manifest = load_manifest(&path)?;
    info!(
        "manifest {} with {} classes and {} entries",
        path.display(),
        manifest.num_classes(),
        manifest.entries.len()
    );
    Ok((path, manifest))
}

fn load_named_split(path: &Path, manifest: &DatasetManifest, cfg: &RunConfig, key: &str) -> Result<Vec<SkeletonSequence>> {
    let split = cfg.split(key);
    let seqs = load_split(path, manifest, split)?;
    info!("{key} = {}: {} sequences", split.name(), seqs.len());
    Ok(seqs)
}

/// `model.*` sizes, or the toy sizes when `toy_key` is set.
fn architecture(cfg: &RunConfig, classes: usize, toy_key: &str) -> Result<hwgat::network::ModelConfig> {
    if cfg.flag_value(toy_key) {
        cfg.toy_model_config(classes)
    } else {
        cfg.model_config(classes)
    }
}

fn inspect_schema() -> Result<()> {
    print!("{}", build_default_schema().describe(&build_default_selection_map()));
    Ok(())
}

fn inspect_windows(cfg: &RunConfig) -> Result<()> {
    let mode = WindowMode::parse(cfg.get("model.windows"))?;
    let block_len = cfg.uint_value("model.block_len");
    if block_len == 0 {
        return Err(Error::Config("model.block_len must be positive".into()));
    }
    let layout = build_window_layout(&build_default_schema(), mode);
    print!("{}", layout.describe());
    let window = cfg.uint_value("inspect.window");
    if window >= layout.num_windows() {
        return Err(Error::Config(format!("inspect.window {window} but only {} windows", layout.num_windows())));
    }
    let masks = MaskSet::new(&layout, block_len);
    let shifted = cfg.flag_value("inspect.shifted");
    let adj = if shifted { &masks.shifted_last[window] } else { &masks.regular[window] };
    println!(
        "# block adjacency: window {window}, T = {block_len}, {} last block, n = {}",
        if shifted { "shifted" } else { "regular" },
        adj.n()
    );
    print!("{}", adj.to_text());
    Ok(())
}

fn clean(seq: &SkeletonSequence, frames: usize) -> Result<SkeletonSequence> {
    let s = fill_missing(&normalize_bbox(seq)?);
    if frames == 0 {
        return Ok(s);
    }
    let mut rng = hwgat::rng::seeded(0);
    Ok(resample_to_length(&s, frames, &mut rng, false))
}

fn read_input(path: &Path, format: &str) -> Result<SkeletonSequence> {
    let pose = match format {
        "pose" => true,
        "seq" => false,
        _ => std::fs::read_to_string(path)
            .map_err(|e| io_error(path, e))?
            .trim_start()
            .starts_with(hwgat::data_io::sequence::POSE_MAGIC),
    };
    if pose {
        load_full_pose(path)
    } else {
        load_sequence(path)
    }
}

fn preprocess(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    echo_config(cfg, &dir)?;
    let frames = cfg.uint_value("preprocess.frames");
    let format = cfg.get("preprocess.format");
    if let Some(input) = cfg.path("preprocess.input") {
        let seq = clean(&read_input(&input, format)?, frames)?;
        let out = dir.join(format!("{}.seq", seq.id));
        save_sequence(&seq, &out)?;
        println!("wrote {}", out.display());
        return Ok(());
    }
    let (path, manifest) = load_dataset(cfg)?;
    let base = base_dir(&path);
    let mut out_manifest = manifest.clone();
    for entry in &mut out_manifest.entries {
        let seq = clean(&read_input(&base.join(&entry.path), format)?, frames)?;
        let name = PathBuf::from(format!("{}.seq", seq.id));
        save_sequence(&seq, &dir.join(&name))?;
        entry.path = name;
    }
    let out = dir.join("manifest.txt");
    save_manifest(&out_manifest, &out)?;
    println!("wrote {} sequences and {}", out_manifest.entries.len(), out.display());
    Ok(())
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    echo_config(cfg, &dir)?;
    let spec = cfg.synth_spec()?;
    let (manifest, path) = hwgat::data_io::generate_synthetic(&spec, &dir)?;
    let counts = manifest.split_counts();
    let count = |s: Split| counts.get(&s).copied().unwrap_or(0);
    println!(
        "wrote {} sequences ({} train, {} val, {} test) and {}",
        manifest.entries.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        path.display()
    );
    Ok(())
}

fn summarize(outcome: &hwgat::training::TrainOutcome, state: &TrainState, dir: &Path) {
    if let Some(last) = outcome.records.last() {
        println!(
            "epochs {} best_epoch {} best_val_loss {:.6} last_top1 {:.4} last_top5 {:.4}{}",
            state.epoch,
            state.best_epoch,
            state.best_val_loss,
            last.top1,
            last.top5,
            if outcome.stopped_early { " (early stop)" } else { "" }
        );
    } else {
        println!("nothing to do: training already finished at epoch {}", state.epoch);
    }
    println!("outputs in {}", dir.display());
}

fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    echo_config(cfg, &dir)?;
    let (path, manifest) = load_dataset(cfg)?;
    let train_set = load_named_split(&path, &manifest, cfg, "data.train_split")?;
    let val_set = load_named_split(&path, &manifest, cfg, "data.val_split")?;
    let tcfg = cfg.train_config()?;
    let mut state = match cfg.path("train.resume") {
        Some(resume) => {
            let s = TrainState::load(&resume)?;
            info!("resuming from {} after epoch {}", resume.display(), s.epoch);
            s
        }
        None => TrainState::new(Model::new(architecture(cfg, manifest.num_classes(), "model.toy")?)?, &tcfg)?,
    };
    if state.model.config.num_classes != manifest.num_classes() {
        return Err(Error::Config("checkpoint class count differs from the manifest".into()));
    }
    let outcome = train(&mut state, &train_set, &val_set, &tcfg, Some(&dir))?;
    summarize(&outcome, &state, &dir);
    Ok(())
}

fn eval_cmd(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    echo_config(cfg, &dir)?;
    let ckpt = load_checkpoint(&cfg.require_path("checkpoint.path")?)?;
    let (path, manifest) = load_dataset(cfg)?;
    let seqs = load_named_split(&path, &manifest, cfg, "data.eval_split")?;
    let smoothing = cfg.train_config()?.label_smoothing;
    let (acc, loss) = evaluate(&ckpt.model, &seqs, smoothing)?;
    println!("top1 {:.4} top5 {:.4} loss {:.6} n {}", acc.top1, acc.top5, loss, acc.count);
    let record = serde_json::json!({
        "split": cfg.get("data.eval_split"),
        "top1": acc.top1,
        "top5": acc.top5,
        "loss": loss,
        "count": acc.count,
    });
    append_jsonl(&dir.join("eval.jsonl"), &record)
}

fn finetune_cmd(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    echo_config(cfg, &dir)?;
    let ckpt = load_checkpoint(&cfg.require_path("checkpoint.path")?)?;
    let (path, manifest) = load_dataset(cfg)?;
    let train_set = load_named_split(&path, &manifest, cfg, "data.train_split")?;
    let val_set = load_named_split(&path, &manifest, cfg, "data.val_split")?;
    let tcfg = cfg.train_config()?;
    let (state, outcome) = finetune(&ckpt.model, manifest.num_classes(), &train_set, &val_set, &tcfg, Some(&dir))?;
    summarize(&outcome, &state, &dir);
    Ok(())
}

fn gradcheck_at<T: Real>(cfg: &RunConfig, step: f64, tol: f64) -> Result<FdReport> {
    let classes = cfg.uint_value("gradcheck.classes");
    let model = Model::<T>::new(architecture(cfg, classes, "gradcheck.toy")?)?;
    let n = cfg.uint_value("gradcheck.batch");
    if n == 0 {
        return Err(Error::Config("gradcheck.batch must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.uint_value("gradcheck.seed") as u64);
    let (f, k) = (model.config.frames, model.layout().total_nodes());
    let inputs = (0..n)
        .map(|_| model.embed(&Array3::from_shape_fn((f, k, 2), |_| rng.random_range(-1.0f32..1.0))))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let smoothing = cfg.train_config()?.label_smoothing;
    let batch = Batch::new(&inputs, &targets);
    let (_, analytic) = batch_loss_and_grad(&model, &batch, smoothing)?;
    let only = cfg.get("gradcheck.only");
    compare_gradients(&model, &batch, smoothing, &analytic, step, tol, (!only.is_empty()).then_some(only))
}

fn gradcheck(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    echo_config(cfg, &dir)?;
    let precision = cfg.get("gradcheck.precision");
    let mut reports = Vec::new();
    if precision != "f32" {
        reports.push(gradcheck_at::<f64>(cfg, cfg.gradcheck_value("gradcheck.step_f64"), cfg.gradcheck_value("gradcheck.tol_f64"))?);
    }
    if precision != "f64" {
        reports.push(gradcheck_at::<f32>(cfg, cfg.gradcheck_value("gradcheck.step_f32"), cfg.gradcheck_value("gradcheck.tol_f32"))?);
    }
    let mut failed = Vec::new();
    for r in &reports {
        println!("# precision {} step {:e} tolerance {:e}", r.precision.name(), r.step, r.tolerance);
        for t in &r.tensors {
            println!(
                "{} {} max_rel_error {:.3e} at {:?}",
                if t.pass { "PASS" } else { "FAIL" },
                t.name,
                t.max_rel_error,
                t.argmax
            );
            if !t.pass {
                failed.push(format!("{}:{}", r.precision.name(), t.name));
            }
        }
        append_jsonl(&dir.join("gradcheck.jsonl"), r)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn ablate(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    echo_config(cfg, &dir)?;
    let (train_set, val_set, classes) = match cfg.path("data.manifest") {
        Some(_) => {
            let (path, manifest) = load_dataset(cfg)?;
            (
                load_named_split(&path, &manifest, cfg, "data.train_split")?,
                load_named_split(&path, &manifest, cfg, "data.val_split")?,
                manifest.num_classes(),
            )
        }
        None => {
            let spec = cfg.synth_spec()?;
            info!("no manifest given; generating {} synthetic classes in memory", spec.classes);
            let all = hwgat::data_io::generate_sequences(&spec)?;
            let pick = |s: Split| all.iter().filter(|(_, t)| *t == s).map(|(q, _)| q.clone()).collect::<Vec<_>>();
            let val_split = cfg.split("data.val_split");
            (pick(cfg.split("data.train_split")), pick(val_split), spec.classes)
        }
    };
    let base = architecture(cfg, classes, "ablate.toy")?;
    let mut tcfg = cfg.train_config()?;
    tcfg.epochs_max = cfg.uint_value("ablate.epochs");
    let axes = cfg.ablation_axes()?;
    let rows = run_ablation_grid(&base, &axes, &tcfg, &train_set, &val_set);
    let out = dir.join("ablation.jsonl");
    let _ = std::fs::remove_file(&out);
    println!("windows block_len shift edge_bias regularizer frames epochs top1 top5 status");
    for row in &rows {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{} {} {} {} {} {} {} {} {} {}",
            row.windows,
            row.block_len,
            if row.shift { "on" } else { "off" },
            row.edge_bias,
            if row.regularizer { "on" } else { "off" },
            row.frames,
            row.epochs,
            fmt(row.top1),
            fmt(row.top5),
            row.status
        );
        append_jsonl(&out, row)?;
    }
    println!("{} rows written to {}", rows.len(), out.display());
    Ok(())
}

fn run(name: &str, cfg: &RunConfig) -> Result<()> {
    let threads = cfg.threads();
    if threads > 0 {
        // fails only if a pool already exists, which keeps the first setting
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match name {
        "inspect-schema" => inspect_schema(),
        "inspect-windows" => inspect_windows(cfg),
        "preprocess" => preprocess(cfg),
        "synth" => synth(cfg),
        "train" => train_cmd(cfg),
        "eval" => eval_cmd(cfg),
        "finetune" => finetune_cmd(cfg),
        "gradcheck" => gradcheck(cfg),
        "ablate" => ablate(cfg),
        other => Err(Error::Config(format!("unknown subcommand {other}"))),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(hwgat::ErrorCategory::Config.exit_code() as u8),
            };
        }
    };
    let level = if matches.get_flag("quiet") { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let (name, _) = matches.subcommand().expect("subcommand required");
    let result = resolve(&matches).and_then(|cfg| {
        info!("subcommand {name}, resolved configuration:\n{}", cfg.to_text().trim_end());
        run(name, &cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{}]: {e}", cat.as_str());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }

    #[test]
    fn every_key_has_a_flag() {
        let m = cli()
            .try_get_matches_from(["hwgat", "train", "--model.frames", "16", "--train.lr", "0.01"])
            .unwrap();
        let cfg = resolve(&m).unwrap();
        assert_eq!(cfg.get("model.frames"), "16");
        assert_eq!(cfg.get("train.lr"), "0.01");
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        std::fs::write(&file, "train.lr = 0.5\ntrain.seed = 7\n").unwrap();
        let f = file.to_str().unwrap();
        let m = cli()
            .try_get_matches_from(["hwgat", "train", "--config", f, "--train.lr", "0.25"])
            .unwrap();
        let cfg = resolve(&m).unwrap();
        assert_eq!(cfg.get("train.lr"), "0.25");
        assert_eq!(cfg.get("train.seed"), "7");
    }
}
