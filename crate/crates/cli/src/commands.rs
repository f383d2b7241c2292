use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use segdec::dataio::{
    load_dataset, load_manifest, make_folds, read_image, save_gray, subsample_positives, synth_generate, FoldPlan,
    Sample, SynthConfig, MANIFEST_FILE,
};
use segdec::eval::{
    average_precision, bench_resolutions, config_label, evaluate_cv, prepare_test, write_summary_csv, EvalError,
    EvalReport, ModelSource, ScoredItem, ScoredSet,
};
use segdec::network::{load_weights, save_weights, Model};
use segdec::tensor::{sigmoid, Real};
use segdec::train::{descriptors, train_fold, LogisticBaseline, TrainConfig};

use crate::config::{RunConfig, SNAPSHOT_FILE};
use crate::error::CliError;
use crate::{BenchArgs, EvalArgs, Global, InferArgs, SynthArgs, TrainArgs};

pub const FOLDS_FILE: &str = "folds.json";

pub fn fold_weights(dir: &Path, fold: usize) -> PathBuf {
    dir.join(format!("fold{fold}.ksdd"))
}

pub fn fold_baseline(dir: &Path, fold: usize) -> PathBuf {
    dir.join(format!("baseline_fold{fold}.json"))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn base_config(global: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(o) = &global.out {
        cfg.out = o.clone();
    }
    if let Some(j) = global.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

/// Samples from `manifest.jsonl` when the root has one, else from product folders.
pub fn load_samples(cfg: &RunConfig) -> Result<Vec<Sample>, CliError> {
    let manifest = cfg.dataset_root.join(MANIFEST_FILE);
    let samples = if manifest.is_file() {
        load_manifest(&manifest)?
    } else {
        load_dataset(&cfg.dataset_root, &cfg.layout())?
    };
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "no samples under {}",
            cfg.dataset_root.display()
        )));
    }
    log::info!(
        "loaded {} samples ({} defective) from {}",
        samples.len(),
        samples.iter().filter(|s| s.is_defective()).count(),
        cfg.dataset_root.display()
    );
    Ok(samples)
}

pub fn synth(global: &Global, args: SynthArgs) -> Result<(), CliError> {
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
    if args.size == 0 || args.size % 64 != 0 {
        return Err(CliError::Config(format!(
            "--size must be a positive multiple of 64, got {}",
            args.size
        )));
    }
    let cfg = SynthConfig {
        n_pos: args.pos,
        n_neg: args.neg,
        size: args.size,
        seed: global.seed.unwrap_or(0),
    };
    let summary = synth_generate(&cfg, &out)?;
    log::info!(
        "wrote {} images ({} defective) in {} products",
        summary.samples,
        summary.defective,
        summary.products
    );
    println!("{}", summary.manifest.display());
    Ok(())
}

fn apply_train_args(cfg: &mut RunConfig, a: TrainArgs) {
    if let Some(v) = a.data {
        cfg.dataset_root = v;
    }
    if let Some(v) = a.loss {
        cfg.loss = v;
    }
    if let Some(v) = a.annotation {
        cfg.annotation = v;
    }
    if let Some(v) = a.resolution {
        cfg.resolution = v;
    }
    if a.rotate {
        cfg.rotate = true;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.steps_decision {
        cfg.steps_decision = v;
    }
    if let Some(v) = a.lr_seg {
        cfg.lr_segmentation = Some(v);
    }
    if let Some(v) = a.lr_dec {
        cfg.lr_decision = v;
    }
    if let Some(v) = a.subsample_positives {
        cfg.subsample_positives = Some(v);
    }
    if let Some(v) = a.arch {
        cfg.arch = v;
    }
    if let Some(v) = a.mask_suffix {
        cfg.mask_suffix = v;
    }
}

fn train_one(
    cfg: &RunConfig,
    tc: &TrainConfig,
    samples: &[Sample],
    plan: &FoldPlan,
    fold: usize,
) -> Result<(), CliError> {
    let (train, _) = plan.split(samples, fold)?;
    let train = match cfg.subsample_positives {
        Some(n) => subsample_positives(&train, n, cfg.seed.wrapping_add(fold as u64))?,
        None => train,
    };
    log::info!("fold {fold}: training on {} images", train.len());
    let listing: Vec<_> = train
        .iter()
        .map(|s| serde_json::json!({ "image_id": s.image_id, "defective": s.is_defective() }))
        .collect();
    write_file(
        &cfg.out.join(format!("fold{fold}_train.json")),
        serde_json::to_string_pretty(&listing).expect("listing serializes"),
    )?;
    let out = train_fold::<f32>(&cfg.arch.architecture(), &train, tc).map_err(|e| match CliError::from(e) {
        CliError::Numeric(m) => CliError::Numeric(format!("fold {fold}: {m}")),
        other => other,
    })?;
    let dir = &cfg.out;
    save_weights(&out.model, fold_weights(dir, fold))?;
    let save_csv = |trace: &segdec::train::LossTrace, name: String| {
        let p = dir.join(name);
        trace
            .save_csv(&p)
            .map_err(|e| CliError::Other(format!("{}: {e}", p.display())))
    };
    save_csv(&out.segmentation_loss, format!("fold{fold}_seg_loss.csv"))?;
    save_csv(&out.decision_loss, format!("fold{fold}_dec_loss.csv"))?;
    write_file(
        &fold_baseline(dir, fold),
        serde_json::to_string_pretty(&out.baseline).expect("baseline serializes"),
    )?;
    log::info!(
        "fold {fold}: segmentation loss {:.4} -> {:.4}",
        out.segmentation_loss.losses.first().copied().unwrap_or(f64::NAN),
        out.segmentation_loss.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn train(global: &Global, args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = base_config(global)?;
    apply_train_args(&mut cfg, args);
    cfg.validate()?;
    // the snapshot records the learning rate actually used
    cfg.lr_segmentation = Some(cfg.train_config().lr_segmentation());
    let tc = cfg.train_config();
    let samples = load_samples(&cfg)?;
    let plan = make_folds(&samples, cfg.seed)?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join(SNAPSHOT_FILE), cfg.to_toml())?;
    write_file(
        &cfg.out.join(FOLDS_FILE),
        serde_json::to_string_pretty(&plan).expect("fold plan serializes"),
    )?;
    log::info!("run {} -> {}", config_label(&tc), cfg.out.display());

    let next = AtomicUsize::new(0);
    let first_error: Mutex<Option<CliError>> = Mutex::new(None);
    let workers = cfg.jobs.min(plan.fold_count).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let fold = next.fetch_add(1, Ordering::SeqCst);
                if fold >= plan.fold_count || first_error.lock().unwrap().is_some() {
                    break;
                }
                if let Err(e) = train_one(&cfg, &tc, &samples, &plan, fold) {
                    first_error.lock().unwrap().get_or_insert(e);
                }
            });
        }
    });
    match first_error.into_inner().unwrap() {
        Some(e) => Err(e),
        None => {
            println!("{}", cfg.out.display());
            Ok(())
        }
    }
}

/// Serves the weights a `train` run saved for each fold.
struct SavedRun<'a> {
    dir: &'a Path,
}

impl ModelSource<f32> for SavedRun<'_> {
    fn model(&mut self, _: &TrainConfig, fold: usize, _: &[&Sample]) -> Result<Option<Model<f32>>, EvalError> {
        let path = fold_weights(self.dir, fold);
        if !path.is_file() {
            return Ok(None);
        }
        load_weights(&path)
            .map(Some)
            .map_err(|e| EvalError::Data(segdec::dataio::DataError::Invalid(format!("{}: {e}", path.display()))))
    }
}

fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<(), CliError> {
    write_file(
        &dir.join("report.json"),
        serde_json::to_string_pretty(reports).expect("reports serialize"),
    )?;
    let mut summary = Vec::new();
    write_summary_csv(reports, &mut summary)?;
    write_file(&dir.join("summary.csv"), summary)?;
    let mut pr = Vec::new();
    reports[0].write_pr_csv(&mut pr)?;
    write_file(&dir.join("pr_curve.csv"), pr)?;
    for r in reports {
        println!(
            "{}: AP {:.4}  best F1 {:.4} (FP {}, FN {})  FP at zero miss {}",
            r.config, r.ap, r.best_f1, r.fp, r.fn_, r.fp_at_zero_miss
        );
    }
    Ok(())
}

/// Baseline scores on the held-out images of one fold.
fn baseline_scores(
    model: &Model<f32>,
    baseline: &LogisticBaseline,
    test: &[&Sample],
    cfg: &TrainConfig,
) -> Result<Vec<ScoredItem>, CliError> {
    let prepared = test
        .iter()
        .map(|s| prepare_test(s, cfg.resolution))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&Sample> = prepared.iter().collect();
    let (desc, labels) = descriptors(&model.seg, &refs)?;
    Ok(refs
        .iter()
        .zip(desc.iter().zip(labels))
        .map(|(s, (d, defective))| ScoredItem {
            image_id: s.image_id.clone(),
            score: baseline.score(*d),
            defective,
        })
        .collect())
}

fn eval_run(global: &Global, dir: &Path, data: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&dir.join(SNAPSHOT_FILE))?;
    if let Some(d) = data {
        cfg.dataset_root = d;
    }
    let out = global.out.clone().unwrap_or_else(|| dir.to_path_buf());
    create_dir(&out)?;
    let plan_path = dir.join(FOLDS_FILE);
    let plan: FoldPlan = serde_json::from_str(
        &fs::read_to_string(&plan_path).map_err(|e| CliError::Config(format!("{}: {e}", plan_path.display())))?,
    )
    .map_err(|e| CliError::Config(format!("{}: {e}", plan_path.display())))?;
    let tc = cfg.train_config();
    let samples = load_samples(&cfg)?;
    let mut reports = evaluate_cv::<f32>(&samples, &plan, std::slice::from_ref(&tc), &mut SavedRun { dir })?;

    let mut baseline_items = Vec::new();
    let mut baseline_folds = Vec::new();
    for fold in 0..plan.fold_count {
        let (_, test) = plan.split(&samples, fold)?;
        let model: Model<f32> = load_weights(fold_weights(dir, fold))?;
        let path = fold_baseline(dir, fold);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Weights(format!("{}: {e}", path.display())))?;
        let baseline: LogisticBaseline =
            serde_json::from_str(&text).map_err(|e| CliError::Weights(format!("{}: {e}", path.display())))?;
        let items = baseline_scores(&model, &baseline, &test, &tc)?;
        baseline_folds.push(average_precision(&ScoredSet::new(items.clone())?).ok());
        baseline_items.extend(items);
    }
    let baseline_set = ScoredSet::new(baseline_items)?;
    reports.push(EvalReport::from_scores(
        format!("baseline-{}", config_label(&tc)),
        &baseline_set,
        baseline_folds,
    )?);

    let mut scores = BufWriter::new(Vec::new());
    writeln!(scores, "image_id,fold,defective,score,baseline_score")?;
    for item in &reports[0].records {
        let product = samples
            .iter()
            .find(|s| s.image_id == item.image_id)
            .map(|s| s.product_id.as_str())
            .unwrap_or("");
        let fold = plan.fold_of(product).map(|f| f.to_string()).unwrap_or_default();
        let b = reports[1]
            .records
            .iter()
            .find(|r| r.image_id == item.image_id)
            .map(|r| r.score)
            .unwrap_or(f64::NAN);
        writeln!(
            scores,
            "{},{fold},{},{},{b}",
            item.image_id, item.defective as u8, item.score
        )?;
    }
    write_file(
        &out.join("scores.csv"),
        scores.into_inner().map_err(|e| CliError::Other(e.to_string()))?,
    )?;
    write_reports(&out, &reports)
}

/// Parse a scores CSV with a header naming `image_id`, `score` and `defective`.
pub fn parse_scores(text: &str) -> Result<ScoredSet, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Data("empty scores file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::Data(format!("scores file has no `{name}` column")))
    };
    let (id, score, defective) = (col("image_id")?, col("score")?, col("defective")?);
    let mut items = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: &str| CliError::Data(format!("scores line {}: bad {what}", n + 2));
        let get = |i: usize, what: &str| f.get(i).copied().ok_or_else(|| bad(what));
        let d = match get(defective, "defective")? {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("defective")),
        };
        items.push(ScoredItem {
            image_id: get(id, "image_id")?.to_string(),
            score: get(score, "score")?.parse().map_err(|_| bad("score"))?,
            defective: d,
        });
    }
    Ok(ScoredSet::new(items)?)
}

pub fn eval(global: &Global, args: EvalArgs) -> Result<(), CliError> {
    if let Some(dir) = &args.source.run {
        return eval_run(global, dir, args.data);
    }
    let path = args.source.scores.expect("clap requires --run or --scores");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let set = parse_scores(&text)?;
    let out = global
        .out
        .clone()
        .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
    create_dir(&out)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_default();
    let report = EvalReport::from_scores(label, &set, vec![])?;
    write_reports(&out, &[report])
}

pub fn bench(global: &Global, args: BenchArgs) -> Result<(), CliError> {
    let model: Model<f32> = match &args.weights {
        Some(p) => load_weights(p)?,
        None => Model::new(&args.arch.architecture(), global.seed.unwrap_or(0))?,
    };
    if args.height % 128 != 0 || args.width % 128 != 0 {
        return Err(CliError::Config(format!(
            "bench size {}×{} must be a multiple of 128 so the half size stays a multiple of 64",
            args.height, args.width
        )));
    }
    let (full, half, ratio) = bench_resolutions(&model, args.height, args.width, args.repeats)?;
    println!("resolution,height,width,median_ms,min_ms,max_ms,conv_macs");
    for (name, r) in [("full", &full), ("half", &half)] {
        println!(
            "{name},{},{},{:.2},{:.2},{:.2},{}",
            r.height, r.width, r.median_ms, r.min_ms, r.max_ms, r.conv_macs
        );
    }
    println!(
        "# wall-clock ratio full/half {ratio:.2}, MAC ratio {:.2}",
        full.conv_macs as f64 / half.conv_macs as f64
    );
    if let Some(out) = &global.out {
        create_dir(out)?;
        let json = serde_json::json!({ "full": full, "half": half, "ratio": ratio });
        write_file(
            &out.join("bench.json"),
            serde_json::to_string_pretty(&json).expect("bench serializes"),
        )?;
    }
    Ok(())
}

pub fn infer(_global: &Global, args: InferArgs) -> Result<(), CliError> {
    let model: Model<f32> = load_weights(&args.weights)?;
    let image = read_image(&args.image)?;
    let p = model.predict(&image.to_tensor())?;
    if let Some(path) = &args.map {
        let (_, h, w) = p.seg_map.dims3("map").map_err(|e| CliError::Other(e.to_string()))?;
        let px = p
            .seg_map
            .data()
            .iter()
            .map(|v| (sigmoid(v.to_f64_lossy()) * 255.0).round() as u8)
            .collect();
        save_gray(path, h, w, px)?;
    }
    let score = p.score.to_f64_lossy();
    let json = serde_json::json!({
        "image": args.image,
        "score": score,
        "logit": p.logit.to_f64_lossy(),
        "defective": score >= 0.5,
    });
    println!("{json}");
    Ok(())
}
