use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use skelcon_core::augment::AugmentationPipeline;
use skelcon_core::contrastive::Paradigm;
use skelcon_core::dataset_io::{read_dataset, save_dataset, write_dataset, LoadOptions};
use skelcon_core::encoder::save_encoder;
use skelcon_core::evaluation::{
    compare_paradigms, compare_representations, linear_evaluation, semi_supervised, Metrics,
    RepresentationKind,
};
use skelcon_core::synthetic::{generate_synthetic, generate_synthetic_split, SyntheticSpec};
use skelcon_core::trainer::Trainer;
use skelcon_core::{LabeledDataset, Params, RngStream};

use crate::config::RunConfig;
use crate::error::{CliError, Result, WithPath};

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const LOSS_CSV: &str = "loss.csv";
pub const EPOCHS_CSV: &str = "epochs.csv";
pub const SUMMARY: &str = "summary.json";
pub const METRICS_CSV: &str = "metrics.csv";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).at(path)
}

fn parse_dataset(bytes: &[u8], truncate: bool, path: &Path) -> Result<LabeledDataset> {
    read_dataset(bytes, LoadOptions { truncate })
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Loads and centers a dataset file.
fn load_normalized(path: &Path, truncate: bool) -> Result<LabeledDataset> {
    Ok(parse_dataset(&read_bytes(path)?, truncate, path)?.normalized()?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).at(path)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn class_summary(ds: &LabeledDataset) -> String {
    let counts: Vec<String> = ds
        .class_counts()
        .iter()
        .enumerate()
        .map(|(c, n)| format!("{c}:{n}"))
        .collect();
    format!("{} sequences, classes {}", ds.len(), counts.join(" "))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Default,
    Benchmark,
}

pub struct SynthArgs {
    pub preset: Option<Preset>,
    pub out: PathBuf,
    pub test_out: Option<PathBuf>,
    pub test_per_class: usize,
}

pub fn synth(cfg: &RunConfig, args: &SynthArgs) -> Result<()> {
    let spec = match args.preset {
        None => cfg.synth.clone(),
        Some(Preset::Default) => SyntheticSpec::default(),
        Some(Preset::Benchmark) => SyntheticSpec::benchmark(),
    };
    let spec = SyntheticSpec {
        seed: cfg.seed,
        ..spec
    };
    match &args.test_out {
        Some(test_out) => {
            let (train, test) = generate_synthetic_split(&spec, args.test_per_class)?;
            save_dataset(&train, &args.out).at(&args.out)?;
            save_dataset(&test, test_out).at(test_out)?;
            println!("train: {}", class_summary(&train));
            println!("test: {}", class_summary(&test));
        }
        None => {
            let ds = generate_synthetic(&spec)?;
            save_dataset(&ds, &args.out).at(&args.out)?;
            println!("{}", class_summary(&ds));
        }
    }
    Ok(())
}

pub struct PretrainArgs {
    /// Stop (with a checkpoint) after this many completed epochs.
    pub stop_after: Option<usize>,
    pub resume: bool,
    pub force: bool,
}

fn save_progress(t: &Trainer, dir: &Path) -> Result<()> {
    let ck = dir.join(CHECKPOINT);
    t.save_checkpoint(&ck).at(&ck)?;
    write_text(&dir.join(LOSS_CSV), &t.log().to_csv())?;
    write_text(&dir.join(EPOCHS_CSV), &t.log().epochs_csv())
}

/// Runs pretraining into a content-addressed directory under `cfg.out` and
/// returns that directory.
pub fn pretrain(cfg: &RunConfig, args: &PretrainArgs) -> Result<PathBuf> {
    let data_path = cfg.data_path()?;
    let bytes = read_bytes(data_path)?;
    let ds = parse_dataset(&bytes, cfg.truncate, data_path)?.normalized()?;
    let dir = cfg.run_dir(&bytes)?;
    let ck_path = dir.join(CHECKPOINT);

    let mut trainer = if args.resume {
        let t = Trainer::load_checkpoint(&ck_path).at(&ck_path)?;
        if t.config() != &cfg.pretrain {
            return Err(CliError::Validation(format!(
                "{} was written by a different pretraining config",
                ck_path.display()
            )));
        }
        t
    } else {
        if ck_path.exists() && !args.force {
            return Err(CliError::Validation(format!(
                "{} already holds a run; pass --resume to continue it or --force to restart",
                dir.display()
            )));
        }
        Trainer::new(&ds, cfg.pretrain.clone())?
    };

    fs::create_dir_all(&dir).at(&dir)?;
    write_text(&dir.join(CONFIG_SNAPSHOT), &cfg.to_toml()?)?;

    let mut stopped = false;
    while !trainer.finished() {
        let epoch = trainer.epoch();
        if let Err(e) = trainer.step(&ds) {
            write_text(&dir.join(LOSS_CSV), &trainer.log().to_csv())?;
            return Err(e.into());
        }
        if trainer.epoch() != epoch {
            save_progress(&trainer, &dir)?;
            eprintln!(
                "epoch {}/{} loss {:.4}",
                trainer.epoch(),
                cfg.pretrain.epochs,
                trainer
                    .log()
                    .epoch_summaries()
                    .last()
                    .map_or(f64::NAN, |s| s.mean)
            );
            if args.stop_after.is_some_and(|n| trainer.epoch() >= n) && !trainer.finished() {
                stopped = true;
                break;
            }
        }
    }

    if !stopped {
        let q = dir.join("encoder_q.json");
        let k = dir.join("encoder_k.json");
        save_encoder(trainer.params_q(), &q).at(&q)?;
        save_encoder(trainer.params_k(), &k).at(&k)?;
    }
    write_json(
        &dir.join(SUMMARY),
        &json!({
            "config_hash": cfg.content_hash(&bytes)?,
            "seed": cfg.seed,
            "completed": !stopped,
            "epochs": trainer.epoch(),
            "steps": trainer.global_step(),
            "final_loss": trainer.log().last_loss(),
            "checksum_q": format!("{:016x}", trainer.params_q().checksum()),
            "checksum_k": format!("{:016x}", trainer.params_k().checksum()),
        }),
    )?;
    Ok(dir)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    /// Linear classifier on frozen features.
    Linear,
    /// Fine-tune on a labeled fraction, then linear evaluation.
    Semi,
    /// Linear evaluation of every representation kind.
    Representations,
    /// Pretrain with each paradigm from scratch, then linear evaluation.
    Paradigms,
}

impl EvalMode {
    fn name(self) -> &'static str {
        match self {
            EvalMode::Linear => "linear",
            EvalMode::Semi => "semi",
            EvalMode::Representations => "representations",
            EvalMode::Paradigms => "paradigms",
        }
    }
}

pub struct EvalArgs {
    pub mode: EvalMode,
    pub checkpoint: Option<PathBuf>,
    pub fractions: Vec<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Row {
    mode: &'static str,
    representation: Option<String>,
    paradigm: Option<String>,
    fraction: Option<f64>,
    subset_size: Option<usize>,
    pretrain_loss: Option<f64>,
    top1: f64,
    top5: f64,
}

impl Row {
    fn new(mode: EvalMode, m: &Metrics) -> Self {
        Row {
            mode: mode.name(),
            representation: None,
            paradigm: None,
            fraction: None,
            subset_size: None,
            pretrain_loss: None,
            top1: m.top1,
            top5: m.top5,
        }
    }
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<PathBuf> {
    let train = load_normalized(cfg.data_path()?, cfg.truncate)?;
    let test = load_normalized(cfg.test_path()?, cfg.truncate)?;
    let seed = cfg.seed;
    let ecfg = &cfg.eval;

    let loaded = match (&args.checkpoint, args.mode) {
        (_, EvalMode::Paradigms) => None,
        (Some(p), _) => {
            if !p.exists() {
                return Err(CliError::io(p, std::io::ErrorKind::NotFound.into()));
            }
            Some((Trainer::load_checkpoint(p).at(p)?, p.clone()))
        }
        (None, _) => {
            return Err(CliError::Validation(
                "--checkpoint is required for this mode".into(),
            ))
        }
    };

    let mut rows = Vec::new();
    let mut checksums = None;
    match args.mode {
        EvalMode::Linear => {
            let t = &loaded.as_ref().unwrap().0;
            let e = linear_evaluation(t.params_q(), t.params_k(), &train, &test, ecfg, seed)?;
            checksums = Some((e.checksum_q, e.checksum_k));
            rows.push(Row {
                representation: Some(ecfg.representation.to_string()),
                ..Row::new(args.mode, &e.metrics)
            });
        }
        EvalMode::Semi => {
            if args.fractions.is_empty() {
                return Err(CliError::Validation(
                    "--fraction is required for semi-supervised evaluation".into(),
                ));
            }
            let t = &loaded.as_ref().unwrap().0;
            for &f in &args.fractions {
                let r = semi_supervised(t.params_q(), t.params_k(), &train, &test, f, ecfg, seed)?;
                rows.push(Row {
                    representation: Some(RepresentationKind::Cae.to_string()),
                    fraction: Some(r.fraction),
                    subset_size: Some(r.subset_size),
                    ..Row::new(args.mode, &r.metrics)
                });
            }
        }
        EvalMode::Representations => {
            let t = &loaded.as_ref().unwrap().0;
            let table = compare_representations(
                t.params_q(),
                t.params_k(),
                &train,
                &test,
                ecfg,
                &RepresentationKind::ALL,
                seed,
            )?;
            for (kind, m) in table {
                rows.push(Row {
                    representation: Some(kind.to_string()),
                    ..Row::new(args.mode, &m)
                });
            }
        }
        EvalMode::Paradigms => {
            let table =
                compare_paradigms(&train, &test, &cfg.pretrain, ecfg, &Paradigm::ALL, seed)?;
            for r in table {
                rows.push(Row {
                    representation: Some(ecfg.representation.to_string()),
                    paradigm: Some(r.paradigm.to_string()),
                    pretrain_loss: Some(r.final_loss),
                    ..Row::new(args.mode, &r.metrics)
                });
            }
        }
    }

    let dir = match (&args.out, &loaded) {
        (Some(d), _) => d.clone(),
        (None, Some((_, ck))) => ck
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("eval-{}", args.mode.name())),
        (None, None) => cfg
            .out
            .join(format!("eval-{}-seed{}", args.mode.name(), seed)),
    };
    fs::create_dir_all(&dir).at(&dir)?;
    let csv_path = dir.join(METRICS_CSV);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().at(&csv_path)?;
    for r in &rows {
        println!(
            "{} top1 {:.4} top5 {:.4}",
            [r.representation.as_deref(), r.paradigm.as_deref()]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
                .join("/"),
            r.top1,
            r.top5
        );
    }
    write_json(
        &dir.join(SUMMARY),
        &json!({
            "mode": args.mode.name(),
            "seed": seed,
            "checkpoint": loaded.as_ref().map(|(_, p)| p.display().to_string()),
            "checksum_q": checksums.map(|c| format!("{:016x}", c.0)),
            "checksum_k": checksums.map(|c| format!("{:016x}", c.1)),
            "eval": ecfg,
            "rows": rows,
        }),
    )?;
    Ok(dir)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Internal(format!("{}: {other:?}", path.display())),
    }
}

pub struct AugmentArgs {
    pub pipeline: AugmentationPipeline,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
    pub limit: Option<usize>,
}

/// Writes the transformed dataset and one JSON line per sequence listing
/// what each strategy sampled.
pub fn augment(cfg: &RunConfig, args: &AugmentArgs) -> Result<PathBuf> {
    let path = cfg.data_path()?;
    let ds = parse_dataset(&read_bytes(path)?, cfg.truncate, path)?;
    let count = args.limit.map_or(ds.len(), |n| n.min(ds.len()));
    let root = RngStream::new(cfg.seed);
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("params.jsonl"));
    let mut log = BufWriter::new(File::create(&log_path).at(&log_path)?);
    let mut seqs = Vec::with_capacity(count);
    for (i, seq) in ds.sequences()[..count].iter().enumerate() {
        let (out, records) = args
            .pipeline
            .apply_logged(seq, &mut root.derive(&[i as u64]));
        let line = json!({ "index": i, "label": ds.labels()[i], "records": records });
        writeln!(log, "{line}").at(&log_path)?;
        seqs.push(out);
    }
    log.flush().at(&log_path)?;
    let out = LabeledDataset::new(*ds.shape(), seqs, ds.labels()[..count].to_vec())?;
    let mut w = BufWriter::new(File::create(&args.out).at(&args.out)?);
    write_dataset(&out, &mut w).at(&args.out)?;
    w.flush().at(&args.out)?;
    eprintln!("{count} sequences through '{}'", args.pipeline);
    Ok(log_path)
}
