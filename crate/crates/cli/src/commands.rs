use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use vitdd::attention::{visualize_sample, VizOptions};
use vitdd::data::manifest::{load_driver_map, relative_path};
use vitdd::data::{
    generate_synthetic, load_fer_samples, load_samples, split_by_driver, DistractionClass, EmotionClass, Manifest,
    SynthSpec,
};
use vitdd::metrics::{evaluate, TaskReport};
use vitdd::model::checkpoint;
use vitdd::model::{ModelConfig, Params, Task};
use vitdd::pipeline::{build_student_manifest, train_teacher, FaceDetector, NullDetector, StubDetector, SyntheticDetector};
use vitdd::training::{train_loop, DatasetProfile, FreezePolicy, TrainConfig, TrainOptions};
use vitdd::{Error, Result};

use crate::{
    Cli, Command, Dataset, DetectorKind, EvalArgs, Freeze, GenSynthArgs, OptimArgs, Profile, PseudoLabelArgs,
    SplitArgs, TrainArgs, TrainTeacherArgs, VizArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynth(a) => gen_synth(cli, a),
        Command::TrainTeacher(a) => teacher(cli, a),
        Command::PseudoLabel(a) => pseudo_label(a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(a),
        Command::VizAttn(a) => viz(a),
        Command::Split(a) => split(a),
    }
}

fn gen_synth(cli: &Cli, a: &GenSynthArgs) -> Result<()> {
    let spec = SynthSpec {
        num_classes: a.classes,
        per_class: a.per_class,
        driver_resolution: a.driver_res.parse()?,
        face_resolution: a.face_res.parse()?,
        face_less_fraction: a.face_less,
        num_drivers: a.drivers,
        fer_per_class: a.fer_per_class,
        seed: cli.seed,
    };
    let s = generate_synthetic(&spec, &a.out)?;
    println!(
        "wrote {}: {} samples ({} with face, {} face-less), {} teacher faces",
        a.out.join("manifest.csv").display(),
        s.samples,
        s.with_face,
        s.face_less,
        s.fer_samples
    );
    Ok(())
}

fn model_for(profile: Profile) -> ModelConfig {
    match profile {
        Profile::Desk => ModelConfig::desk(),
        Profile::Paper => ModelConfig::paper(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Teacher,
    Student,
}

fn train_config(cli: &Cli, o: &OptimArgs, role: Role) -> Result<TrainConfig> {
    let mut c = match o.profile {
        Profile::Desk if role == Role::Teacher => TrainConfig::desk_teacher(),
        Profile::Desk => TrainConfig::desk(),
        Profile::Paper => TrainConfig::paper(match o.dataset {
            Dataset::Sfddd => DatasetProfile::Sfddd,
            Dataset::Aucdd => DatasetProfile::Aucdd,
        }),
    };
    c.seed = cli.seed;
    if let Some(v) = o.epochs {
        c.total_epochs = v;
    }
    if let Some(v) = o.warmup_epochs {
        c.warmup_epochs = v;
    }
    if let Some(v) = o.lr {
        c.base_lr = v;
    }
    if let Some(v) = o.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = o.weight_decay {
        c.weight_decay = v;
    }
    if let Some(v) = o.crop {
        c.augment.crop = v;
    }
    if let Some(v) = o.flip {
        c.augment.flip = v;
    }
    if o.profile == Profile::Desk && c.total_epochs > 0 && c.warmup_epochs >= c.total_epochs {
        c.warmup_epochs = c.total_epochs / 4;
    }
    c.validate()?;
    Ok(c)
}

fn options(cli: &Cli, out: &Path) -> TrainOptions {
    TrainOptions {
        out_dir: Some(out.to_path_buf()),
        threads: cli.threads,
        include_pseudo: true,
    }
}

fn print_last_epoch(result: &vitdd::training::TrainResult, out: &Path) {
    if let Some(last) = result.history.iter().rev().find(|r| r.split == "train") {
        let acc = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        println!(
            "epoch {}: distraction_acc {} emotion_acc {} nll {:.4}",
            last.epoch,
            acc(last.distraction_acc),
            acc(last.emotion_acc),
            last.nll
        );
    }
    println!("checkpoints in {}", out.display());
}

fn teacher(cli: &Cli, a: &TrainTeacherArgs) -> Result<()> {
    let config = model_for(a.optim.profile).teacher_of();
    let train = train_config(cli, &a.optim, Role::Teacher)?;
    if !a.fer.exists() {
        return Err(Error::MissingArtifact(a.fer.clone()));
    }
    let samples = load_fer_samples(&a.fer, &config)?;
    let result = train_teacher(&samples, &config, &train, &options(cli, &a.out))?;
    print_last_epoch(&result, &a.out);
    Ok(())
}

fn pseudo_label(a: &PseudoLabelArgs) -> Result<()> {
    let teacher = checkpoint::load(&a.teacher)?;
    if teacher.config().driver_resolution.is_some() {
        return Err(Error::Config(format!("{} is not a face-only teacher", a.teacher.display())));
    }
    let drivers = Manifest::load(&a.manifest)?;
    let detector: Box<dyn FaceDetector> = match a.detector {
        DetectorKind::Stub => {
            let path = a
                .annotations
                .as_ref()
                .ok_or_else(|| Error::Config("--detector stub needs --annotations".into()))?;
            Box::new(StubDetector::from_file(path)?)
        }
        DetectorKind::Synthetic => Box::new(SyntheticDetector),
        DetectorKind::None => Box::new(NullDetector),
    };
    let built = build_student_manifest(&drivers, detector.as_ref(), &teacher, &a.out)?;
    println!(
        "wrote {}: {} records, {} faces found, {} Non-Face",
        a.out.join("manifest.csv").display(),
        built.records.len(),
        built.faces_found,
        built.non_face
    );
    for (id, e) in &built.errors {
        eprintln!("sample {id}: {e}");
    }
    if !built.errors.is_empty() {
        return Err(Error::Data(format!("{} records failed", built.errors.len())));
    }
    Ok(())
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut tc = train_config(cli, &a.optim, Role::Student)?;
    tc.freeze = match a.freeze {
        Freeze::All => FreezePolicy::AllTrainable,
        Freeze::MsaOnly => FreezePolicy::MsaOnly,
    };
    let mut params = match &a.init {
        Some(path) => checkpoint::load(path)?,
        None => Params::init(&model_for(a.optim.profile), cli.seed)?,
    };
    let mut config = params.config().clone();
    if let Some(v) = a.lambda_dist {
        config.loss_weights.distraction = v;
    }
    if let Some(v) = a.lambda_emo {
        config.loss_weights.emotion = v;
    }
    config.loss_weights.validate()?;
    if config != *params.config() {
        params = Params::from_tensors(&config, params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect())?;
    }
    let samples = load_samples(&Manifest::load(&a.manifest)?, &config)?;
    let val = match &a.val_manifest {
        Some(p) => Some(load_samples(&Manifest::load(p)?, &config)?),
        None => None,
    };
    let result = train_loop(&samples, val.as_deref(), params, &tc, &options(cli, &a.out))?;
    print_last_epoch(&result, &a.out);
    Ok(())
}

fn class_name(task: Task, c: usize) -> String {
    match task {
        Task::Distraction => DistractionClass::new(c).map_or(c.to_string(), |k| k.code()),
        Task::Emotion => EmotionClass::new(c).map_or(c.to_string(), |k| k.name().to_string()),
    }
}

fn eval(a: &EvalArgs) -> Result<()> {
    let params = checkpoint::load(&a.checkpoint)?;
    let config = params.config().clone();
    let manifest = Manifest::load(&a.split)?;
    let samples = load_samples(&manifest, &config)?;
    let report = evaluate(&params, &samples, a.include_pseudo)?;
    let tasks: Vec<(Task, &TaskReport)> = [
        (Task::Distraction, report.distraction.as_ref()),
        (Task::Emotion, report.emotion.as_ref()),
    ]
    .into_iter()
    .filter_map(|(t, r)| r.map(|r| (t, r)))
    .collect();

    println!("{:<12} {:>6} {:>9} {:>9}", "task", "count", "accuracy", "nll");
    for (task, r) in &tasks {
        println!("{:<12} {:>6} {:>9.4} {:>9.4}", task.name(), r.count, r.accuracy, r.nll);
    }
    if report.emotion.is_none() {
        println!("emotion: no ground-truth records (use --include-pseudo)");
    }

    let mut csv = String::from("task,class,count,accuracy,nll\n");
    for (task, r) in &tasks {
        let _ = writeln!(csv, "{},all,{},{:.6},{:.6}", task.name(), r.count, r.accuracy, r.nll);
        for (c, acc) in r.per_class_accuracy.iter().enumerate() {
            let n: u64 = r.confusion.row(c).iter().sum();
            let acc = acc.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(csv, "{},{},{n},{acc},", task.name(), class_name(*task, c));
        }
    }
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.checkpoint.parent().unwrap_or(Path::new(".")).join("eval.csv"));
    std::fs::write(&out, csv).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    println!("report written to {}", out.display());
    Ok(())
}

fn parse_list<T>(s: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| f(p).ok_or_else(|| Error::Config(format!("bad {what} {p:?}"))))
        .collect()
}

fn viz(a: &VizArgs) -> Result<()> {
    let params = checkpoint::load(&a.checkpoint)?;
    let config = params.config().clone();
    let mut manifest = Manifest::load(&a.manifest)?;
    manifest.records.retain(|r| r.sample_id == a.sample);
    if manifest.records.is_empty() {
        return Err(Error::Data(format!("sample {} not in {}", a.sample, a.manifest.display())));
    }
    let sample = load_samples(&manifest, &config)?.remove(0);
    let layers = match a.layers.as_str() {
        "all" => None,
        list => Some(parse_list(list, "layer", |p| p.parse().ok())?),
    };
    let queries = parse_list(&a.queries, "query", |p| match p {
        "dist" => Some(Task::Distraction),
        "emo" => Some(Task::Emotion),
        _ => None,
    })?;
    if a.zoom == 0 {
        return Err(Error::Config("--zoom must be positive".into()));
    }
    let opts = VizOptions {
        layers,
        queries,
        zoom: a.zoom,
        overlay_alpha: a.overlay,
        per_head: a.per_head,
    };
    let out = visualize_sample(&params, &sample, &a.out, &opts)?;
    for p in out.heatmaps.iter().chain(&out.interactions) {
        println!("{}", p.display());
    }
    Ok(())
}

fn id_set(s: &str) -> BTreeSet<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::to_string).collect()
}

fn rebase(records: &mut [vitdd::data::ManifestRecord], manifest: &Manifest, out: &Path) -> Result<()> {
    for r in records {
        r.driver_path = relative_path(&manifest.resolve(&r.driver_path), out)?;
        if let Some(face) = &r.face_path {
            r.face_path = Some(relative_path(&manifest.resolve(face), out)?);
        }
    }
    Ok(())
}

fn split(a: &SplitArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    if !a.drivers.exists() {
        return Err(Error::MissingArtifact(a.drivers.clone()));
    }
    let map = load_driver_map(&a.drivers)?;
    let (mut train, mut test) = split_by_driver(&manifest.records, &map, &id_set(&a.train_ids), &id_set(&a.test_ids))?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    rebase(&mut train, &manifest, &a.out)?;
    rebase(&mut test, &manifest, &a.out)?;
    let paths: [PathBuf; 2] = [a.out.join("train.csv"), a.out.join("test.csv")];
    Manifest::save_records(&train, &paths[0])?;
    Manifest::save_records(&test, &paths[1])?;
    println!("train: {} samples -> {}", train.len(), paths[0].display());
    println!("test:  {} samples -> {}", test.len(), paths[1].display());
    Ok(())
}
