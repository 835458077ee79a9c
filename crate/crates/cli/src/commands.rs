//! Subcommand implementations. Each writes its artifacts under the data
//! directory and prints a plain-text report to stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tinyradar::features::{compute_rfdm, normalize_frame, FeatureFrame};
use tinyradar::model::{
    build_tinyradarnn, count_macs, count_params, load_network, lstm_param_formula, save_network,
    tcn_param_formula, Network, TcnVariant,
};
use tinyradar::quant::{
    calibrate_and_quantize, load_quantized, memory_plan, model_size_bytes,
    quantized_forward_sequence, save_quantized, QuantizedNetwork,
};
use tinyradar::radar_io::{frame_stream, read_recording, synth_corpus, write_recording};
use tinyradar::train::{
    evaluate, softmax, split_cv5, split_loocv, train_with, Evaluation, GestureDataset,
};
use tinyradar::Result as CoreResult;

use crate::config::{RunConfig, SplitScheme};
use crate::error::CliError;
use crate::store::{decode_dataset, encode_dataset};

type Result<T> = std::result::Result<T, CliError>;

const CORPUS_DIR: &str = "corpus";
const DATASET_FILE: &str = "dataset.trds";
const MODEL_FILE: &str = "model.trnw";
const QUANT_FILE: &str = "model.trq1";
const TRAIN_LOG: &str = "train_log.txt";

/// Attaches the offending path to an error while keeping its exit code.
fn at<T>(path: &Path, r: CoreResult<T>) -> Result<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let corpus_cfg = cfg.corpus_config();
    let recordings = synth_corpus(&corpus_cfg)?;
    let dir = cfg.data_dir().join(CORPUS_DIR);
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    for (i, rec) in recordings.iter().enumerate() {
        let path = dir.join(format!("rec_{i:05}.trd1"));
        at(&path, write_recording(&path, rec))?;
    }
    let mut manifest = String::from("class\tname\tvelocity_mps\tinitial_range_m\trecordings\n");
    for (label, class) in corpus_cfg.classes.iter().enumerate() {
        let count = recordings
            .iter()
            .filter(|r| r.label == Some(label as u32))
            .count();
        writeln!(
            manifest,
            "{label}\t{}\t{:+.3}\t{:.3}\t{count}",
            class.name, class.velocity_mps, class.initial_range_m
        )
        .unwrap();
    }
    write(&dir.join("manifest.txt"), &manifest)?;
    print!("{manifest}");
    println!("wrote {} recordings to {}", recordings.len(), dir.display());
    Ok(())
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::io(format!("cannot read corpus {}: {e}", dir.display())))?;
    let mut files = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "trd1"))
        .collect::<Vec<_>>();
    files.sort();
    Ok(files)
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model_config()?;
    let dir = cfg.data_dir().join(CORPUS_DIR);
    let files = corpus_files(&dir)?;
    if files.is_empty() {
        return Err(CliError::io(format!("no .trd1 files in {}", dir.display())));
    }
    let recordings = files
        .iter()
        .map(|p| at(p, read_recording(p)))
        .collect::<Result<Vec<_>>>()?;
    for (p, r) in files.iter().zip(&recordings) {
        if r.range_points() != model.rp || r.sensors() != model.sensors {
            return Err(CliError::config(format!(
                "{}: {} sensors x {} range points, model expects {} x {}",
                p.display(),
                r.sensors(),
                r.range_points(),
                model.sensors,
                model.rp
            )));
        }
    }
    let (ds, stats) =
        GestureDataset::from_recordings(&recordings, model.tw, model.time_steps, model.classes)?;
    let path = cfg.data_dir().join(DATASET_FILE);
    write(&path, encode_dataset(&ds)?)?;
    println!(
        "recordings={} frames={} sequences={} dropped_short={} dropped_unlabeled={}",
        stats.recordings,
        stats.frames,
        stats.sequences,
        stats.dropped_short,
        stats.dropped_unlabeled
    );
    println!("class_counts={:?}", ds.class_counts());
    println!("wrote {}", path.display());
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<GestureDataset> {
    let path = cfg.data_dir().join(DATASET_FILE);
    let bytes = fs::read(&path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    at(&path, decode_dataset(&bytes))
}

/// `(train, test)` according to the configured split.
fn split(cfg: &RunConfig, ds: &GestureDataset) -> Result<(GestureDataset, GestureDataset)> {
    Ok(match cfg.split.scheme {
        SplitScheme::Cv5 => split_cv5(ds, cfg.split.fold, cfg.seed)?,
        SplitScheme::Loocv => split_loocv(ds, cfg.split.held_out_user)?,
    })
}

fn check_shapes(net: &Network, ds: &GestureDataset) -> Result<()> {
    let Some(seq) = ds.sequences.first() else {
        return Ok(());
    };
    let shape = seq.frames[0].shape();
    if shape != net.frame_shape() || seq.frames.len() != net.config.time_steps {
        return Err(CliError::config(format!(
            "dataset holds {} frames of {shape:?}, model expects {} of {:?}",
            seq.frames.len(),
            net.config.time_steps,
            net.frame_shape()
        )));
    }
    if ds.class_count > net.config.classes {
        return Err(CliError::config(format!(
            "dataset has {} classes, model only {}",
            ds.class_count, net.config.classes
        )));
    }
    Ok(())
}

fn print_evaluation(label: &str, ev: &Evaluation) {
    println!(
        "{label}: sequences={} per_frame_acc={:.4} per_sequence_acc={:.4}",
        ev.sequences, ev.per_frame_acc, ev.per_sequence_acc
    );
    println!("confusion (rows = true class, columns = predicted):");
    for (i, row) in ev.confusion.iter().enumerate() {
        let cells = row.iter().map(|c| format!("{c:>6}")).collect::<String>();
        println!("{i:>4} {cells}");
    }
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let (train_set, test_set) = split(cfg, &ds)?;
    let mut net = build_tinyradarnn(&cfg.model_config()?, cfg.seed)?;
    check_shapes(&net, &ds)?;
    println!("train={} test={}", train_set.len(), test_set.len());
    let mut log = String::new();
    train_with(&mut net, &train_set, &cfg.train_config(), |rec| {
        println!("{rec}");
        writeln!(log, "{rec}").unwrap();
    })?;
    let dir = cfg.data_dir();
    write(&dir.join(TRAIN_LOG), &log)?;
    let path = dir.join(MODEL_FILE);
    at(&path, save_network(&path, &net))?;
    println!("wrote {}", path.display());
    if !test_set.is_empty() {
        print_evaluation("test", &evaluate(&net, &test_set, cfg.aggregation()?)?);
    }
    Ok(())
}

fn load_float(cfg: &RunConfig, model: Option<PathBuf>) -> Result<Network> {
    let path = model.unwrap_or_else(|| cfg.data_dir().join(MODEL_FILE));
    at(&path, load_network(&path))
}

pub fn eval(cfg: &RunConfig, model: Option<PathBuf>) -> Result<()> {
    let net = load_float(cfg, model)?;
    let ds = load_dataset(cfg)?;
    check_shapes(&net, &ds)?;
    let (_, test_set) = split(cfg, &ds)?;
    print_evaluation("test", &evaluate(&net, &test_set, cfg.aggregation()?)?);
    Ok(())
}

/// Mean softmax over every row of every logits tensor.
fn mean_softmax(logits: &[Vec<f64>], classes: usize) -> Vec<f64> {
    let mut mean = vec![0.0; classes];
    let mut rows = 0usize;
    for t in logits {
        for row in t.chunks(classes) {
            mean.iter_mut().zip(softmax(row)).for_each(|(m, p)| *m += p);
            rows += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.max(1) as f64);
    mean
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

pub fn quantize(cfg: &RunConfig, model: Option<PathBuf>) -> Result<()> {
    let net = load_float(cfg, model)?;
    let ds = load_dataset(cfg)?;
    check_shapes(&net, &ds)?;
    let (train_set, test_set) = split(cfg, &ds)?;
    if train_set.is_empty() {
        return Err(CliError::config(
            "training split is empty, nothing to calibrate on",
        ));
    }
    // evenly spaced calibration sequences from the training split
    let stride = train_set
        .len()
        .div_ceil(cfg.quantize.calibration_sequences)
        .max(1);
    let calibration = train_set
        .sequences
        .iter()
        .step_by(stride)
        .map(|s| s.frames.clone())
        .collect::<Vec<_>>();
    let qnet = calibrate_and_quantize(&net, &calibration)?;
    let path = cfg.data_dir().join(QUANT_FILE);
    at(&path, save_quantized(&path, &qnet))?;
    println!("calibration_sequences={}", calibration.len());
    println!("model_size_bytes={}", model_size_bytes(&qnet));
    let classes = net.config.classes;
    let mut agree = 0;
    for s in &test_set.sequences {
        let f = net.forward_sequence(&s.frames)?.data().to_vec();
        let q = quantized_forward_sequence(&qnet, &s.frames)?
            .data()
            .to_vec();
        agree += usize::from(
            argmax(&mean_softmax(&[f], classes)) == argmax(&mean_softmax(&[q], classes)),
        );
    }
    println!("float_quantized_agreement={agree}/{}", test_set.len());
    println!("wrote {}", path.display());
    Ok(())
}

enum Model {
    Float(Network),
    Quantized(QuantizedNetwork),
}

pub fn infer(cfg: &RunConfig, file: &Path, quantized: bool, model: Option<PathBuf>) -> Result<()> {
    let model = if quantized {
        let path = model.unwrap_or_else(|| cfg.data_dir().join(QUANT_FILE));
        Model::Quantized(at(&path, load_quantized(&path))?)
    } else {
        Model::Float(load_float(cfg, model)?)
    };
    let mc = match &model {
        Model::Float(n) => n.config.clone(),
        Model::Quantized(q) => q.config.clone(),
    };
    let rec = at(file, read_recording(file))?;
    if rec.range_points() != mc.rp || rec.sensors() != mc.sensors {
        return Err(CliError::config(format!(
            "{}: {} sensors x {} range points, model expects {} x {}",
            file.display(),
            rec.sensors(),
            rec.range_points(),
            mc.sensors,
            mc.rp
        )));
    }
    let frames = frame_stream(&rec, mc.tw, mc.tw)?
        .iter()
        .map(|f| compute_rfdm(f).map(|r| normalize_frame(&r)))
        .collect::<CoreResult<Vec<FeatureFrame>>>()?;
    if frames.len() < mc.time_steps {
        return Err(CliError::config(format!(
            "{}: {} frames, model needs at least {}",
            file.display(),
            frames.len(),
            mc.time_steps
        )));
    }
    let logits = frames
        .windows(mc.time_steps)
        .map(|w| {
            Ok(match &model {
                Model::Float(n) => n.forward_sequence(w)?,
                Model::Quantized(q) => quantized_forward_sequence(q, w)?,
            }
            .data()
            .to_vec())
        })
        .collect::<CoreResult<Vec<_>>>()?;
    let probs = mean_softmax(&logits, mc.classes);
    let class = argmax(&probs);
    println!("frames={} windows={}", frames.len(), logits.len());
    println!(
        "probabilities={}",
        probs
            .iter()
            .map(|p| format!("{p:.4}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    println!("class={class}");
    Ok(())
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let net = build_tinyradarnn(&cfg.model_config()?, cfg.seed)?;
    let p = count_params(&net);
    println!("parameters: cnn={} tcn={} total={}", p.cnn, p.tcn, p.total);
    let size: usize = net
        .param_names()
        .iter()
        .zip(net.params())
        .map(|(n, t)| t.data().len() * if n.ends_with("bias") { 4 } else { 2 })
        .sum();
    println!("model_size_bytes={size} (16-bit weights, 32-bit biases)");

    println!("\nsequence-model parameters by filter count:");
    println!(
        "{:>6} {:>12} {:>12} {:>12}",
        "F", "proposed", "original", "lstm"
    );
    for f in [32u64, 64, 96, 128] {
        println!(
            "{f:>6} {:>12} {:>12} {:>12}",
            tcn_param_formula(TcnVariant::Proposed, f),
            tcn_param_formula(TcnVariant::Original, f),
            lstm_param_formula(f)
        );
    }

    let macs = count_macs(&net)?;
    println!("\nmultiply-accumulates per inference:");
    println!(
        "{:<8} {:<28} {:>12} {:>12}",
        "stage", "layer", "MACs", "comparisons"
    );
    for r in &macs.rows {
        println!(
            "{:<8} {:<28} {:>12} {:>12}",
            r.stage.to_string(),
            r.layer,
            r.macs,
            r.comparisons
        );
    }
    println!(
        "total={} cnn={} tcn={} dense={} pool_comparisons={}",
        macs.total, macs.cnn, macs.tcn, macs.dense, macs.pool_comparisons
    );

    for (title, rows) in [("2D CNN", net.cnn_table()?), ("TCN", net.tcn_table()?)] {
        println!("\n{title} layers:");
        println!(
            "{:<24} {:<14} {:<14} {:<8} {:<8}",
            "layer", "input", "output", "kernel", "detail"
        );
        for r in rows {
            println!(
                "{:<24} {:<14} {:<14} {:<8} {:<8}",
                r.layer, r.input, r.output, r.kernel, r.detail
            );
        }
    }
    Ok(())
}

pub fn memplan(cfg: &RunConfig, bits: usize) -> Result<()> {
    let net = build_tinyradarnn(&cfg.model_config()?, cfg.seed)?;
    println!("{}", memory_plan(&net, bits)?);
    Ok(())
}
