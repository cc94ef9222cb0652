//! Subcommand implementations.

use std::path::Path;

use scenesound_core::checkpoint;
use scenesound_core::data::synth::{synth_corpus, write_corpus, SynthSpec};
use scenesound_core::data::{load_corpus, prepare_items, roll_to_annotations, serialize_event_annotations, Corpus};
use scenesound_core::metrics::{error_rate, precision_recall_f};
use scenesound_core::model::{forward, predict_events, predict_scene, Architecture};
use scenesound_core::tensor::Scalar;
use scenesound_core::train::{self, evaluate_model, gradient_check, train_fold, EvalCounts, Precision, TrainItem};

use crate::config::RunConfig;

/// Exit-status classification: validation problems exit 1, failures during
/// the run itself exit 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) => m,
            CliError::Runtime(m) => m,
        }
    }
}

type CmdResult = Result<(), CliError>;

fn validation(e: impl ToString) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, content: &str) -> CmdResult {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, content).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_corpus_checked(cfg: &RunConfig) -> Result<Corpus, CliError> {
    let dir = cfg.corpus.as_ref().ok_or_else(|| validation("no corpus directory given (set --corpus)"))?;
    if !dir.is_dir() {
        return Err(validation(format!("corpus directory {} does not exist", dir.display())));
    }
    load_corpus(dir).map_err(validation)
}

fn prepared<F: Scalar>(cfg: &RunConfig, corpus: &Corpus) -> Result<Vec<TrainItem<F>>, CliError> {
    prepare_items::<F>(corpus, &cfg.feature_config()).map_err(runtime)
}

// ---------------------------------------------------------------------------
// synth

pub fn cmd_synth(cfg: &RunConfig) -> CmdResult {
    let spec = SynthSpec {
        clips_per_scene: cfg.clips_per_scene,
        clip_seconds: cfg.clip_seconds,
        sample_rate: cfg.sample_rate,
        folds: cfg.folds,
        ..SynthSpec::default_benchmark()
    };
    spec.validate().map_err(validation)?;
    let corpus = synth_corpus(&spec, cfg.seed).map_err(runtime)?;
    write_corpus(&corpus, &cfg.out).map_err(runtime)?;
    stamp_index(cfg, &cfg.out.join("index.tsv"))?;
    println!(
        "wrote {} clips ({} scenes x {} clips, {} s at {} Hz) to {}",
        corpus.clips.len(),
        spec.scenes.len(),
        spec.clips_per_scene,
        spec.clip_seconds,
        spec.sample_rate,
        cfg.out.display()
    );
    Ok(())
}

fn stamp_index(cfg: &RunConfig, index_path: &Path) -> CmdResult {
    let body = std::fs::read_to_string(index_path).map_err(|e| runtime(format!("{}: {e}", index_path.display())))?;
    write_file(index_path, &format!("# config_hash={}\n{body}", cfg.hash()))
}

// ---------------------------------------------------------------------------
// train

pub fn cmd_train(cfg: &RunConfig) -> CmdResult {
    match cfg.precision {
        Precision::F32 => run_train::<f32>(cfg),
        Precision::F64 => run_train::<f64>(cfg),
    }
}

fn run_train<F: Scalar>(cfg: &RunConfig) -> CmdResult {
    let corpus = load_corpus_checked(cfg)?;
    let arch = cfg.architecture(corpus.events.len(), corpus.scenes.len());
    arch.validate().map_err(validation)?;
    let items = prepared::<F>(cfg, &corpus)?;
    let hp = cfg.hyperparams();
    let hash = cfg.hash();

    let every = cfg.checkpoint_every;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    let extra = vec![("config_hash".to_string(), hash.clone())];
    let (params, history) = train_fold(&items, cfg.fold, &arch, &hp, |epoch, p| {
        if every > 0 && epoch % every == 0 {
            checkpoint::save(p, out.join(format!("epoch{epoch:04}.ckpt")), &extra)?;
        }
        Ok(())
    })
    .map_err(runtime)?;

    checkpoint::save(&params, out.join("model.ckpt"), &extra).map_err(runtime)?;
    write_file(&out.join("history.csv"), &history.to_csv(Some(&format!("config_hash={hash}"))))?;
    if let Some(last) = history.epochs.last() {
        println!("trained {} epochs: E1 {:.4} E2 {:.4} E {:.4}", history.epochs.len(), last.e1, last.e2, last.e);
    } else {
        println!("trained 0 epochs (initial parameters saved)");
    }
    println!("checkpoint: {}", out.join("model.ckpt").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

pub fn cmd_evaluate(cfg: &RunConfig) -> CmdResult {
    let ckpt = cfg.checkpoint.as_ref().ok_or_else(|| validation("no checkpoint given (set --checkpoint)"))?;
    if !ckpt.is_file() {
        return Err(validation(format!("checkpoint {} does not exist", ckpt.display())));
    }
    match checkpoint::peek_dtype(ckpt).map_err(validation)?.as_str() {
        "f32" => run_evaluate::<f32>(cfg),
        "f64" => run_evaluate::<f64>(cfg),
        other => Err(validation(format!("unsupported checkpoint dtype {other}"))),
    }
}

fn run_evaluate<F: Scalar>(cfg: &RunConfig) -> CmdResult {
    let corpus = load_corpus_checked(cfg)?;
    let params = checkpoint::load::<F>(cfg.checkpoint.as_ref().unwrap()).map_err(validation)?;
    let items = prepared::<F>(cfg, &corpus)?;
    let subset: Vec<&TrainItem<F>> =
        items.iter().filter(|i| cfg.fold.map_or(true, |f| i.fold == f)).collect();
    if subset.is_empty() {
        return Err(validation("no clips selected for evaluation"));
    }
    let counts = evaluate_model(&params, &subset, cfg.threshold, cfg.segment_frames).map_err(runtime)?;
    let csv = metrics_csv(cfg, &corpus, &counts).map_err(runtime)?;
    let path = cfg.out.join("metrics.csv");
    write_file(&path, &csv)?;
    let (p, r, f) = precision_recall_f(&counts.event);
    println!(
        "event P {:.4} R {:.4} F {:.4} ER {:.4} | scene F {:.4} | {}",
        p,
        r,
        f,
        error_rate(&counts.event).as_f64(),
        counts.scene_f(corpus.scenes.len()).map_err(runtime)?.micro_f,
        path.display()
    );
    Ok(())
}

/// `metric,scope,value` rows: overall event scores, per-event scores, then
/// overall and per-scene scene scores.
fn metrics_csv(cfg: &RunConfig, corpus: &Corpus, counts: &EvalCounts) -> scenesound_core::Result<String> {
    let mut out = format!("# config_hash={}\nmetric,scope,value\n", cfg.hash());
    let (p, r, f) = precision_recall_f(&counts.event);
    out.push_str(&format!("event_precision,overall,{p}\n"));
    out.push_str(&format!("event_recall,overall,{r}\n"));
    out.push_str(&format!("event_f,overall,{f}\n"));
    out.push_str(&format!("event_er,overall,{}\n", error_rate(&counts.event).as_f64()));
    for (m, c) in counts.per_event.iter().enumerate() {
        let (_, _, f) = precision_recall_f(c);
        out.push_str(&format!("event_f,event:{},{f}\n", corpus.events.name(m)));
        out.push_str(&format!("event_er,event:{},{}\n", corpus.events.name(m), error_rate(c).as_f64()));
    }
    let scene = counts.scene_f(corpus.scenes.len())?;
    out.push_str(&format!("scene_f,overall,{}\n", scene.micro_f));
    for (n, f) in scene.per_class_f.iter().enumerate() {
        out.push_str(&format!("scene_f,scene:{},{f}\n", corpus.scenes.name(n)));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// predict

pub fn cmd_predict(cfg: &RunConfig) -> CmdResult {
    let ckpt = cfg.checkpoint.as_ref().ok_or_else(|| validation("no checkpoint given (set --checkpoint)"))?;
    if !ckpt.is_file() {
        return Err(validation(format!("checkpoint {} does not exist", ckpt.display())));
    }
    match checkpoint::peek_dtype(ckpt).map_err(validation)?.as_str() {
        "f32" => run_predict::<f32>(cfg),
        "f64" => run_predict::<f64>(cfg),
        other => Err(validation(format!("unsupported checkpoint dtype {other}"))),
    }
}

fn run_predict<F: Scalar>(cfg: &RunConfig) -> CmdResult {
    let corpus = load_corpus_checked(cfg)?;
    let params = checkpoint::load::<F>(cfg.checkpoint.as_ref().unwrap()).map_err(validation)?;
    let items = prepared::<F>(cfg, &corpus)?;
    let hash = cfg.hash();
    let fcfg = cfg.feature_config();
    let pred_dir = cfg.out.join("predictions");
    std::fs::create_dir_all(&pred_dir).map_err(|e| runtime(format!("{}: {e}", pred_dir.display())))?;

    let mut scene_rows = format!("# config_hash={hash}\n");
    let mut n_written = 0usize;
    for item in items.iter().filter(|i| cfg.fold.map_or(true, |f| i.fold == f)) {
        let (events, scene, _) = forward(&item.features, &params).map_err(runtime)?;
        let roll = predict_events(&events, cfg.threshold);
        let annotations = roll_to_annotations(&roll, &corpus.events, &fcfg);
        let body = serialize_event_annotations(&annotations);
        write_file(&pred_dir.join(format!("{}.ann", item.clip_id)), &format!("# config_hash={hash}\n{body}"))?;
        scene_rows.push_str(&format!("{}\t{}\n", item.clip_id, corpus.scenes.name(predict_scene(&scene))));
        n_written += 1;
    }
    write_file(&cfg.out.join("scenes.tsv"), &scene_rows)?;
    println!("wrote {n_written} prediction files to {}", pred_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck

pub fn cmd_gradcheck(cfg: &RunConfig) -> CmdResult {
    let arch = Architecture::tiny();
    let alphas = [0.0, 0.01, 1.0];
    let mut worst = 0.0f64;
    let started = std::time::Instant::now();
    for seed in cfg.seed..cfg.seed + 5 {
        let reports = gradient_check(&arch, seed, &alphas, scenesound_core::nn::DEFAULT_EPS).map_err(runtime)?;
        for r in &reports {
            println!("seed {:2}  alpha {:<5}  max relative error {:.3e}", r.seed, r.alpha, r.max_rel_error);
            worst = worst.max(r.max_rel_error);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    println!("max relative error {worst:.3e} over 5 seeds x {} alphas ({elapsed:.1}s)", alphas.len());
    if worst < 1e-4 {
        println!("gradcheck PASS");
        Ok(())
    } else {
        Err(runtime(format!("gradcheck FAIL: max relative error {worst:.3e} >= 1e-4")))
    }
}

// ---------------------------------------------------------------------------
// sweep-alpha

pub fn cmd_sweep_alpha(cfg: &RunConfig) -> CmdResult {
    match cfg.precision {
        Precision::F32 => run_sweep::<f32>(cfg),
        Precision::F64 => run_sweep::<f64>(cfg),
    }
}

fn run_sweep<F: Scalar>(cfg: &RunConfig) -> CmdResult {
    if cfg.alphas.is_empty() {
        return Err(validation("alpha sweep needs at least one value (set --alphas)"));
    }
    let corpus = load_corpus_checked(cfg)?;
    let arch = cfg.architecture(corpus.events.len(), corpus.scenes.len());
    arch.validate().map_err(validation)?;
    let items = prepared::<F>(cfg, &corpus)?;
    let rows = train::sweep_alpha(&items, &cfg.alphas, cfg.folds, &arch, &cfg.hyperparams(), cfg.threshold, cfg.segment_frames)
        .map_err(runtime)?;
    let mut csv = format!("# config_hash={}\nalpha,event_f,event_er,scene_f\n", cfg.hash());
    for row in &rows {
        csv.push_str(&format!("{},{},{},{}\n", row.alpha, row.event_f, row.event_er.as_f64(), row.scene_f));
        println!("alpha {:<7} event F {:.4} ER {:.4} scene F {:.4}", row.alpha, row.event_f, row.event_er.as_f64(), row.scene_f);
    }
    write_file(&cfg.out.join("sweep.csv"), &csv)?;
    Ok(())
}
