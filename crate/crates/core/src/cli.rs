//! The `iyolo` command line.
//!
//! Exit codes: 0 ok, 1 other failure, 2 invalid config or usage, 3 missing
//! file, 4 unknown image id, 5 malformed labels.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::datapipe::{
    augment_recipe, generate_fixture_dataset_with, load_sample, parse_yolo_labels, read_ppm,
    read_ppm_size, to_model_tensor, write_ppm, write_yolo_labels, DatasetIndex, FixtureOptions,
    ImageRecord, IndexRecord,
};
use crate::detector::{
    count_macs, save_weights, ConvKind, Detector, Graph, HeadKind, ModelConfig, TailKind,
};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, GroundTruthBox};
use crate::fsutil;
use crate::postproc::{format_dump, parse_dump, Detection};
use crate::tensor::Tensor;

#[derive(Debug, Parser)]
#[command(name = "iyolo", version, about = "Ghost/transformer YOLO detector toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Model config JSON; flags below override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub conv_kind: Option<ConvKind>,
    #[arg(long, global = true, value_enum)]
    pub tail_kind: Option<TailKind>,
    #[arg(long, global = true, value_enum)]
    pub head_kind: Option<HeadKind>,
    #[arg(long, global = true)]
    pub input_size: Option<usize>,
    #[arg(long, global = true)]
    pub num_classes: Option<usize>,
    #[arg(long, global = true)]
    pub width_mult: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a model from the config and write its weight file.
    InitWeights {
        /// All parameters zero (BN stays identity).
        #[arg(long)]
        zero: bool,
    },
    /// Run detection on every .ppm in a directory and write a dump.
    Predict {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        images: PathBuf,
        /// Directory for copies of the images with boxes drawn in.
        #[arg(long)]
        annotate: Option<PathBuf>,
        #[arg(long)]
        conf_thresh: Option<f32>,
        #[arg(long)]
        nms_iou: Option<f32>,
        #[arg(long)]
        set_score_thresh: Option<f32>,
    },
    /// Score a detection dump against YOLO labels (mAP at one IoU).
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Images matching the labels, read for their sizes.
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long)]
        pr_table: Option<PathBuf>,
    },
    /// Parameter/MAC table and forward timing for the four backbone variants.
    Bench {
        /// Timed forwards per variant; 0 skips timing.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Materialize the flip/rotation recipe over a dataset's train split.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Write a synthetic blob dataset.
    GenFixtures {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long = "classes", default_value_t = 2)]
        classes: usize,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
        Error::UnknownImage(_) => 4,
        Error::Label { .. } => 5,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for this command".into()))
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<ModelConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ModelConfig::load(p)?,
        None => ModelConfig::default(),
    };
    if let Some(w) = cli.width_mult {
        cfg = cfg.with_width(w);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = cli.conv_kind {
        cfg.conv_kind = k;
    }
    if let Some(k) = cli.tail_kind {
        cfg.tail_kind = k;
    }
    if let Some(k) = cli.head_kind {
        cfg.head_kind = k;
    }
    if let Some(s) = cli.input_size {
        cfg.input_size = s;
    }
    if let Some(n) = cli.num_classes {
        cfg.num_classes = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::InitWeights { zero } => cmd_init_weights(cli, *zero, stdout),
        Command::Predict {
            weights,
            images,
            annotate,
            conf_thresh,
            nms_iou,
            set_score_thresh,
        } => {
            let thresholds = Thresholds {
                conf: *conf_thresh,
                nms_iou: *nms_iou,
                set_score: *set_score_thresh,
            };
            cmd_predict(cli, weights, images, annotate.as_deref(), thresholds, stdout)
        }
        Command::Eval {
            dets,
            labels,
            images,
            iou,
            pr_table,
        } => cmd_eval(require_out(cli)?, dets, labels, images, *iou, pr_table.as_deref(), stdout),
        Command::Bench { repeats } => cmd_bench(cli, *repeats, stdout),
        Command::Augment { dataset } => cmd_augment(dataset, require_out(cli)?, stdout),
        Command::GenFixtures {
            n,
            width,
            height,
            classes,
        } => {
            let opts = FixtureOptions {
                width: *width,
                height: *height,
                num_classes: *classes,
                ..FixtureOptions::default()
            };
            let out = require_out(cli)?;
            let idx = generate_fixture_dataset_with(*n, cli.seed.unwrap_or(0), out, &opts)?;
            let _ = writeln!(
                stdout,
                "wrote {} images ({} train, {} val) to {}",
                idx.len(),
                idx.train.len(),
                idx.val.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn cmd_init_weights(cli: &Cli, zero: bool, stdout: &mut dyn Write) -> Result<()> {
    let out = require_out(cli)?;
    let cfg = resolve_config(cli)?;
    let graph = Graph::new(&cfg)?;
    let weights = if zero {
        graph.zero_weights()?
    } else {
        graph.init_weights(cfg.seed)?
    };
    save_weights(&cfg, &weights, out)?;
    let _ = writeln!(
        stdout,
        "wrote {} tensors, {} parameters to {}",
        weights.len(),
        weights.total_params(),
        out.display()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Thresholds {
    pub conf: Option<f32>,
    pub nms_iou: Option<f32>,
    pub set_score: Option<f32>,
}

fn list_ppm(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "ppm") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn check_compatible(cli: &Cli, cfg: &ModelConfig) -> Result<()> {
    let clash = |what: &str| Err(Error::Config(format!("--{what} disagrees with the weight file")));
    if cli.conv_kind.is_some_and(|k| k != cfg.conv_kind) {
        return clash("conv-kind");
    }
    if cli.tail_kind.is_some_and(|k| k != cfg.tail_kind) {
        return clash("tail-kind");
    }
    if cli.head_kind.is_some_and(|k| k != cfg.head_kind) {
        return clash("head-kind");
    }
    if cli.num_classes.is_some_and(|n| n != cfg.num_classes) {
        return clash("num-classes");
    }
    Ok(())
}

/// Detections for one image in its own pixel coordinates.
pub fn predict_image(det: &Detector, img: &ImageRecord) -> Result<Vec<Detection>> {
    let (input, tf) = to_model_tensor(img, det.config().input_size)?;
    let mut dets = det.detect(&input)?.pop().unwrap_or_default();
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(tf
        .detections_to_source(&dets)
        .into_iter()
        .map(|d| Detection {
            bbox: d.bbox.clip(img.width as f64, img.height as f64),
            ..d
        })
        .filter(|d| d.bbox.area() > 0.0)
        .collect())
}

fn cmd_predict(
    cli: &Cli,
    weights: &Path,
    images: &Path,
    annotate: Option<&Path>,
    th: Thresholds,
    stdout: &mut dyn Write,
) -> Result<()> {
    let out = require_out(cli)?;
    let det = Detector::load(weights)?;
    check_compatible(cli, det.config())?;
    let det = if th.conf.is_some() || th.nms_iou.is_some() || th.set_score.is_some() {
        let mut cfg = det.config().clone();
        if let Some(v) = th.conf {
            cfg.conf_thresh = v;
            cfg.set_score_thresh = th.set_score.unwrap_or(v);
        }
        if let Some(v) = th.nms_iou {
            cfg.nms_iou_thresh = v;
        }
        if let Some(v) = th.set_score {
            cfg.set_score_thresh = v;
        }
        cfg.validate()?;
        Detector::new(Graph::new(&cfg)?, det.weights().clone())?
    } else {
        det
    };
    let files = list_ppm(images)?;
    let mut results: Vec<(String, Vec<Detection>)> = Vec::with_capacity(files.len());
    for f in &files {
        let img = read_ppm(f)?;
        let dets = predict_image(&det, &img)?;
        if let Some(dir) = annotate {
            write_ppm(&draw_boxes(&img, &dets), &dir.join(format!("{}.ppm", img.id)))?;
        }
        results.push((img.id, dets));
    }
    let text = format_dump(results.iter().map(|(id, d)| (id.as_str(), d.as_slice())));
    fsutil::write_atomic(out, text.as_bytes())?;
    let total: usize = results.iter().map(|(_, d)| d.len()).sum();
    let _ = writeln!(
        stdout,
        "{} images, {total} detections -> {}",
        files.len(),
        out.display()
    );
    Ok(())
}

const PALETTE: [[f32; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.4, 1.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
];

/// Copy of `img` with each box outlined 2 px wide in its class color.
pub fn draw_boxes(img: &ImageRecord, dets: &[Detection]) -> ImageRecord {
    let (w, h) = (img.width, img.height);
    let mut px = img.pixels.clone();
    let data = px.data_mut();
    for d in dets {
        let color = PALETTE[d.class_id % PALETTE.len()];
        let x0 = d.bbox.x1.floor().clamp(0.0, (w - 1) as f64) as usize;
        let y0 = d.bbox.y1.floor().clamp(0.0, (h - 1) as f64) as usize;
        let x1 = (d.bbox.x2.ceil() - 1.0).clamp(0.0, (w - 1) as f64) as usize;
        let y1 = (d.bbox.y2.ceil() - 1.0).clamp(0.0, (h - 1) as f64) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let edge = x < x0 + 2 || x + 2 > x1 || y < y0 + 2 || y + 2 > y1;
                if edge {
                    for (c, v) in color.iter().enumerate() {
                        data[(c * h + y) * w + x] = *v;
                    }
                }
            }
        }
    }
    ImageRecord {
        id: img.id.clone(),
        width: w,
        height: h,
        pixels: px,
    }
}

/// Ground truth for every label file in `labels`, sized by `images/<id>.ppm`.
pub fn load_ground_truth(labels: &Path, images: &Path) -> Result<BTreeMap<String, Vec<GroundTruthBox>>> {
    let rd = std::fs::read_dir(labels).map_err(|e| Error::io(labels, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(labels, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
            files.push(p);
        }
    }
    files.sort();
    let mut out = BTreeMap::new();
    for f in files {
        let id = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let set = parse_yolo_labels(&f)?;
        let (w, h) = read_ppm_size(&images.join(format!("{id}.ppm")))?;
        out.insert(id, set.to_ground_truth(w, h));
    }
    Ok(out)
}

fn cmd_eval(
    out: &Path,
    dets: &Path,
    labels: &Path,
    images: &Path,
    iou: f64,
    pr_table: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let text = std::fs::read_to_string(dets).map_err(|e| Error::io(dets, e))?;
    let dets = parse_dump(&text, dets)?;
    let gts = load_ground_truth(labels, images)?;
    let report = evaluate(&dets, &gts, iou)?;
    let mut json = report.to_json();
    json.push('\n');
    fsutil::write_atomic(out, json.as_bytes())?;
    let table = report.pr_table();
    if let Some(p) = pr_table {
        fsutil::write_atomic(p, table.as_bytes())?;
    }
    let _ = writeln!(stdout, "mAP@{iou}: {:.4} over {} images", report.map, report.num_images);
    for c in &report.classes {
        let ap = c.ap.map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
        let k = &c.counts;
        let _ = writeln!(
            stdout,
            "  class {}: AP {ap}  tp {} fp {} fn {} gt {}",
            c.class_id, k.tp, k.fp, k.fn_, k.num_gt
        );
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub variant: String,
    pub params: u64,
    pub macs: u64,
    #[serde(skip)]
    pub forward_ms: Option<f64>,
}

/// Cost rows for {standard, ghost} × {c2f, te} on top of `base`.
pub fn bench_rows(base: &ModelConfig, repeats: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(4);
    for conv in [ConvKind::Standard, ConvKind::Ghost] {
        for tail in [TailKind::C2f, TailKind::Te] {
            let mut cfg = base.clone();
            cfg.conv_kind = conv;
            cfg.tail_kind = tail;
            cfg.ghost_layers = None;
            let det = Detector::build(&cfg)?;
            let report = count_macs(det.graph(), cfg.input_size);
            let forward_ms = if repeats == 0 {
                None
            } else {
                let s = cfg.input_size;
                let input = Tensor::full(&[1, 3, s, s], 0.5)?;
                let t0 = Instant::now();
                for _ in 0..repeats {
                    det.forward(&input)?;
                }
                Some(t0.elapsed().as_secs_f64() * 1e3 / repeats as f64)
            };
            rows.push(BenchRow {
                variant: format!("{}+{}", name_of(conv), name_of(tail)),
                params: report.total_params,
                macs: report.total_macs,
                forward_ms,
            });
        }
    }
    Ok(rows)
}

fn name_of<T: Serialize>(v: T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn format_bench(rows: &[BenchRow]) -> String {
    let mut s = format!("{:<16} {:>12} {:>16} {:>12}\n", "variant", "params", "MACs", "forward_ms");
    for r in rows {
        let t = r.forward_ms.map_or_else(|| "-".to_string(), |t| format!("{t:.1}"));
        s.push_str(&format!("{:<16} {:>12} {:>16} {:>12}\n", r.variant, r.params, r.macs, t));
    }
    s
}

fn cmd_bench(cli: &Cli, repeats: usize, stdout: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let rows = bench_rows(&cfg, repeats)?;
    let _ = writeln!(stdout, "input {0}×{0}, head {1}", cfg.input_size, name_of(cfg.head_kind));
    let _ = write!(stdout, "{}", format_bench(&rows));
    if let Some(out) = &cli.out {
        let mut json = serde_json::to_string_pretty(&rows)?;
        json.push('\n');
        fsutil::write_atomic(out, json.as_bytes())?;
    }
    Ok(())
}

fn cmd_augment(dataset: &Path, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let index = DatasetIndex::load(&dataset.join("index.json"))?;
    let mut new_index = DatasetIndex::default();
    for rec in &index.train {
        let (img, labels) = load_sample(dataset, rec)?;
        for (aug_img, aug_labels) in augment_recipe(&img, &labels)? {
            let r = IndexRecord::for_id(&aug_img.id);
            write_ppm(&aug_img, &out.join(&r.image))?;
            write_yolo_labels(&aug_labels, &out.join(&r.label))?;
            new_index.train.push(r);
        }
    }
    for rec in &index.val {
        parse_yolo_labels(&dataset.join(&rec.label))?;
        let r = IndexRecord::for_id(&rec.id);
        for (src, dst) in [(&rec.image, &r.image), (&rec.label, &r.label)] {
            fsutil::write_atomic(&out.join(dst), &fsutil::read(&dataset.join(src))?)?;
        }
        new_index.val.push(r);
    }
    new_index.save(&out.join("index.json"))?;
    let _ = writeln!(
        stdout,
        "train {} -> {}, val {} unchanged",
        index.train.len(),
        new_index.train.len(),
        new_index.val.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = main_with_args(std::iter::once("iyolo").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let mut c = ModelConfig::baseline();
        c.seed = 3;
        std::fs::write(&p, c.to_json()).unwrap();
        let cli = Cli::try_parse_from([
            "iyolo", "bench", "--config", p.to_str().unwrap(), "--seed", "9", "--tail-kind", "te",
        ])
        .unwrap();
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.tail_kind, TailKind::Te);
        assert_eq!(cfg.conv_kind, ConvKind::Standard);
    }

    #[test]
    fn exit_codes() {
        let (code, _, err) = run_args(&["init-weights", "--out", "/nonexistent/x", "--config", "/no/such.json"]);
        assert_eq!(code, 3, "{err}");
        let (code, _, _) = run_args(&["init-weights"]);
        assert_eq!(code, 2);
        let (code, _, _) = run_args(&["frobnicate"]);
        assert_eq!(code, 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"num_classes": 0}"#).unwrap();
        let out = dir.path().join("w.bin");
        let (code, _, err) = run_args(&["init-weights", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 2, "{err}");
        assert!(!out.exists());
    }

    #[test]
    fn draw_boxes_outlines_in_class_color() {
        let img = ImageRecord::new("a", Tensor::zeros(&[3, 10, 10]).unwrap()).unwrap();
        let d = Detection {
            class_id: 1,
            score: 0.9,
            bbox: crate::evalkit::BBox::new(2.0, 2.0, 8.0, 8.0),
        };
        let out = draw_boxes(&img, &[d]);
        assert_eq!(out.pixels.get(&[1, 2, 2]), 1.0);
        assert_eq!(out.pixels.get(&[1, 3, 5]), 1.0);
        assert_eq!(out.pixels.get(&[1, 5, 5]), 0.0);
        assert_eq!(out.pixels.get(&[0, 2, 2]), 0.0);
    }
}
