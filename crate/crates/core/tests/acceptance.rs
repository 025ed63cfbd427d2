//! Acceptance criteria 1-8, one PASS/FAIL line each. Runs without the libtest harness.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use iyolo::attention::{
    attention_weights, multi_head_attention, positional_encoding, scaled_dot_attention,
    AttentionWeights, ScaleMode, TeConfig,
};
use iyolo::datapipe::{
    augment_recipe, decode_ppm, encode_ppm, flip_augment, parse_labels, rotate_augment, FlipAxis,
    LabelBox, LabelSet,
};
use iyolo::detector::{
    count_params, forward_features, ConvKind, Detector, Graph, HeadKind, HeadOutputs, ModelConfig,
    TailKind,
};
use iyolo::evalkit::{average_precision, evaluate, iou, pr_curve, BBox, GroundTruthBox};
use iyolo::postproc::{hungarian_match, nms, Detection};
use iyolo::{ops, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KERNEL_TOL: f64 = 1e-5;
const KERNEL_INSTANCES: usize = 100;
const KERNEL_BUDGET: Duration = Duration::from_secs(10);
const ATTN_TOL: f64 = 1e-6;
const EQUIVARIANCE_TOL: f32 = 1e-5;
const SHAPE_BUDGET: Duration = Duration::from_secs(60);
const NMS_INSTANCES: u64 = 200;
const HUNGARIAN_INSTANCES: u64 = 100;
const IOU_TOL: f64 = 1e-9;
const AP_TOL: f64 = 1e-4;
const ROTATION_PX: f64 = 2.0;
const E2E_IMAGES: usize = 20;
const E2E_BUDGET: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn kernel_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0f64;
    for i in 0..KERNEL_INSTANCES as u64 {
        let mut r = rng(1000 + i);
        let groups = r.gen_range(1..3);
        let (c, o) = (groups * r.gen_range(1..4), groups * r.gen_range(1..4));
        let k = *[1usize, 3, 5].choose(&mut r).unwrap();
        let stride = r.gen_range(1..3);
        let (h, w) = (r.gen_range(5..10), r.gen_range(5..10));
        let batch = r.gen_range(1..3);
        let x = rand_tensor(&mut r, &[batch, c, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut r, &[o, c / groups, k, k], -1.0, 1.0);
        let b = rand_tensor(&mut r, &[o], -1.0, 1.0);
        let got = ops::conv2d_grouped(&x, &wt, Some(&b), stride, k / 2, groups).map_err(|e| e.to_string())?;
        let bv = to_f64(&b);
        let want = naive_conv(&Arr::from_tensor(&x), &Arr::from_tensor(&wt), Some(&bv), stride, k / 2, groups);
        worst = worst.max(max_abs_diff(&got, &want));

        let (m, kk, n) = (r.gen_range(1..16), r.gen_range(1..16), r.gen_range(1..16));
        let a = rand_tensor(&mut r, &[m, kk], -1.0, 1.0);
        let bm = rand_tensor(&mut r, &[kk, n], -1.0, 1.0);
        let got = ops::matmul(&a, &bm).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&got, &naive_matmul(&Arr::from_tensor(&a), &Arr::from_tensor(&bm))));

        let pk = r.gen_range(1..6);
        let pad = if r.gen_bool(0.5) { pk / 2 } else { 0 };
        let pdims = [1, r.gen_range(1..4), r.gen_range(pk..12), r.gen_range(pk..12)];
        let x = rand_tensor(&mut r, &pdims, -1.0, 1.0);
        let ps = r.gen_range(1..3);
        let got = ops::maxpool2d(&x, pk, ps, pad).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&got, &naive_maxpool(&Arr::from_tensor(&x), pk, ps, pad)));

        let dims: Vec<usize> = (0..r.gen_range(1..4)).map(|_| r.gen_range(1..7)).collect();
        let axis = r.gen_range(0..dims.len());
        let s = r.gen_range(0.1f32..30.0);
        let x = rand_tensor(&mut r, &dims, -s, s);
        let got = ops::softmax(&x, axis).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&got, &naive_softmax(&Arr::from_tensor(&x), axis)));
    }
    let elapsed = t0.elapsed();
    ensure!(worst <= KERNEL_TOL, "max error {worst:e} > {KERNEL_TOL:e}");
    ensure!(elapsed < KERNEL_BUDGET, "took {elapsed:?}");
    Ok(format!("4×{KERNEL_INSTANCES} instances, max err {worst:.1e}, {:.2}s", elapsed.as_secs_f64()))
}

fn rand_square(r: &mut ChaCha8Rng, d: usize, s: f32) -> Tensor {
    rand_tensor(r, &[d, d], -s, s)
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let c = t.dims()[1];
    Tensor::from_fn(&[perm.len(), c], |i| t.data()[perm[i / c] * c + i % c]).unwrap()
}

fn attention_fidelity() -> Outcome {
    let pe = positional_encoding(4, 16).map_err(|e| e.to_string())?.table;
    for j in 0..16 {
        let want = if j % 2 == 0 { 0.0 } else { 1.0 };
        ensure!((f64::from(pe.get(&[0, j])) - want).abs() < ATTN_TOL, "PE[0,{j}]");
    }
    ensure!((f64::from(pe.get(&[1, 0])) - 1f64.sin()).abs() < ATTN_TOL, "PE[1,0] != sin 1");

    let mut r = rng(7);
    for _ in 0..50 {
        let (n, m, d) = (r.gen_range(1..10), r.gen_range(1..10), r.gen_range(1..9));
        let q = rand_tensor(&mut r, &[n, d], -5.0, 5.0);
        let k = rand_tensor(&mut r, &[m, d], -5.0, 5.0);
        let a = attention_weights(&q, &k, ScaleMode::Sqrt).map_err(|e| e.to_string())?;
        for row in 0..n {
            let sum: f64 = (0..m).map(|c| f64::from(a.get(&[row, c]))).sum();
            ensure!((sum - 1.0).abs() < ATTN_TOL, "row sum {sum}");
        }
        let k1 = rand_tensor(&mut r, &[1, d], -5.0, 5.0);
        let v1 = rand_tensor(&mut r, &[1, 3], -5.0, 5.0);
        let out = scaled_dot_attention(&q, &k1, &v1, ScaleMode::Sqrt).map_err(|e| e.to_string())?;
        for row in 0..n {
            ensure!((0..3).all(|c| out.get(&[row, c]) == v1.get(&[0, c])), "single key output != V");
        }
    }

    let d = 8;
    let w = AttentionWeights {
        w_q: rand_square(&mut r, d, 0.5),
        w_k: rand_square(&mut r, d, 0.5),
        w_v: rand_square(&mut r, d, 0.5),
        w_o: Tensor::eye(d).unwrap(),
    };
    let x = rand_tensor(&mut r, &[6, d], -1.0, 1.0);
    let mha = multi_head_attention(&x, &w, &TeConfig::new(d, 1)).map_err(|e| e.to_string())?;
    let proj = |m: &Tensor| ops::matmul(&x, m).unwrap();
    let plain = scaled_dot_attention(&proj(&w.w_q), &proj(&w.w_k), &proj(&w.w_v), ScaleMode::Sqrt)
        .map_err(|e| e.to_string())?;
    let diff = mha.max_abs_diff(&plain);
    ensure!(f64::from(diff) < ATTN_TOL, "h=1 MHA differs by {diff:e}");

    let mut worst = 0f32;
    for seed in 0..10 {
        let mut r = rng(seed);
        let cfg = TeConfig::new(d, 2);
        let w = AttentionWeights {
            w_q: rand_square(&mut r, d, 0.5),
            w_k: rand_square(&mut r, d, 0.5),
            w_v: rand_square(&mut r, d, 0.5),
            w_o: rand_square(&mut r, d, 0.5),
        };
        let x = rand_tensor(&mut r, &[9, d], -1.0, 1.0);
        let mut perm: Vec<usize> = (0..9).collect();
        perm.shuffle(&mut r);
        let a = permute_rows(&multi_head_attention(&x, &w, &cfg).unwrap(), &perm);
        let b = multi_head_attention(&permute_rows(&x, &perm), &w, &cfg).unwrap();
        worst = worst.max(a.max_abs_diff(&b));
    }
    ensure!(worst < EQUIVARIANCE_TOL, "equivariance error {worst:e}");
    Ok(format!("PE, row sums, single key, h=1 identity, equivariance err {worst:.1e}"))
}

fn architecture_shapes() -> Outcome {
    let t0 = Instant::now();
    let size = 640;
    let input = Tensor::from_fn(&[1, 3, size, size], |i| ((i * 31 % 97) as f32) / 97.0).unwrap();
    let mut p5 = Vec::new();
    for conv in [ConvKind::Standard, ConvKind::Ghost] {
        for tail in [TailKind::C2f, TailKind::Te] {
            let mut cfg = ModelConfig::default();
            cfg.conv_kind = conv;
            cfg.tail_kind = tail;
            cfg.head_kind = HeadKind::AnchorNms;
            let det = Detector::build(&cfg).map_err(|e| e.to_string())?;
            let f = forward_features(det.graph(), det.weights(), &input).map_err(|e| e.to_string())?;
            p5.push(f.p5.dims().to_vec());
            match det.forward(&input).map_err(|e| e.to_string())? {
                HeadOutputs::Anchor(maps) => {
                    let got: Vec<&[usize]> = maps.iter().map(|m| m.dims()).collect();
                    ensure!(
                        got == [&[1, 21, 80, 80][..], &[1, 21, 40, 40], &[1, 21, 20, 20]],
                        "{conv:?}+{tail:?}: {got:?}"
                    );
                }
                HeadOutputs::SetPrediction { .. } => return Err("expected anchor outputs".into()),
            }
        }
    }
    ensure!(p5.windows(2).all(|w| w[0] == w[1]), "TE changes P5 dims: {p5:?}");
    let cfg = ModelConfig::default();
    let q = cfg.detr_queries;
    match Detector::build(&cfg).and_then(|d| d.forward(&input)).map_err(|e| e.to_string())? {
        HeadOutputs::SetPrediction { class_logits, boxes } => {
            ensure!(class_logits.dims() == [1, q, 2] && boxes.dims() == [1, q, 4], "set head shapes");
        }
        HeadOutputs::Anchor(_) => return Err("expected set outputs".into()),
    }
    let elapsed = t0.elapsed();
    ensure!(elapsed < SHAPE_BUDGET, "took {elapsed:?}");
    Ok(format!("4 variants + set head at 640, P5 {:?}, {:.1}s", p5[0], elapsed.as_secs_f64()))
}

fn ghost_efficiency() -> Outcome {
    let mut notes = Vec::new();
    for w in [0.25, 0.5, 1.0] {
        let mut s = ModelConfig::default().with_width(w);
        s.conv_kind = ConvKind::Standard;
        let mut g = s.clone();
        g.conv_kind = ConvKind::Ghost;
        let ps = count_params(&Graph::new(&s).map_err(|e| e.to_string())?).total_params;
        let pg = count_params(&Graph::new(&g).map_err(|e| e.to_string())?).total_params;
        ensure!(pg < ps, "width {w}: ghost {pg} >= standard {ps}");
        notes.push(format!("{w}: {pg}<{ps}"));
    }
    let conv_weights = |kind: ConvKind| -> usize {
        let mut cfg = ModelConfig::default();
        cfg.conv_kind = kind;
        Graph::new(&cfg)
            .unwrap()
            .param_specs()
            .iter()
            .filter(|p| p.name.starts_with("backbone.stage1.down.") && p.name.ends_with(".weight"))
            .map(|p| p.dims.iter().product::<usize>())
            .sum()
    };
    let (g, s) = (conv_weights(ConvKind::Ghost), conv_weights(ConvKind::Standard));
    ensure!((g, s) == (2448, 4608), "16→32 block weights {g} vs {s}");
    Ok(format!("{}; 16→32 block {g} vs {s}", notes.join(", ")))
}

fn postproc_oracles() -> Outcome {
    for seed in 0..NMS_INSTANCES {
        let mut r = rng(seed);
        let n = r.gen_range(0..=50);
        let classes = r.gen_range(1..4);
        let dets = random_detections(&mut r, n, classes);
        let t = r.gen_range(0.1..0.9);
        let got = nms(&dets, t);
        ensure!(got == brute_force_nms(&dets, t), "NMS mismatch on seed {seed}");
        ensure!(nms(&got, t) == got, "NMS not idempotent on seed {seed}");
    }
    for seed in 0..HUNGARIAN_INSTANCES {
        let mut r = rng(10_000 + seed);
        let (n, m) = (r.gen_range(1..=7), r.gen_range(1..=7));
        let integer = seed % 2 == 0;
        let cost = Tensor::from_fn(&[n, m], |_| {
            if integer { f32::from(r.gen_range(0u8..5)) } else { r.gen_range(-10.0..10.0) }
        })
        .unwrap();
        let got = hungarian_match(&cost).map_err(|e| e.to_string())?;
        let c: Vec<f64> = cost.data().iter().map(|&v| f64::from(v)).collect();
        ensure!(got == brute_force_assignment(&c, n, m), "Hungarian mismatch on seed {seed}");
    }
    Ok(format!("NMS {NMS_INSTANCES} instances, Hungarian {HUNGARIAN_INSTANCES} instances"))
}

fn metric_fixtures() -> Outcome {
    let bb = BBox::new;
    let v = iou(&bb(0.0, 0.0, 2.0, 2.0), &bb(1.0, 1.0, 3.0, 3.0)).map_err(|e| e.to_string())?;
    ensure!((v - 1.0 / 7.0).abs() < IOU_TOL, "iou {v}");
    let ap = average_precision(&pr_curve(&[(0.9, true), (0.8, false), (0.7, true)], 2), 2).unwrap_or(-1.0);
    ensure!((ap - 0.8333).abs() < AP_TOL, "AP {ap}");

    let mut r = rng(99);
    let mut gts: BTreeMap<String, Vec<GroundTruthBox>> = BTreeMap::new();
    let mut dets: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    let mut scores: Vec<u32> = (1..=400).collect();
    scores.shuffle(&mut r);
    let mut next = scores.into_iter();
    for i in 0..15 {
        let (mut g, mut d) = (Vec::new(), Vec::new());
        for _ in 0..r.gen_range(0..4) {
            let (x, y) = (r.gen_range(0.0..80.0), r.gen_range(0.0..80.0));
            let b = bb(x, y, x + r.gen_range(4.0..20.0), y + r.gen_range(4.0..20.0));
            let class_id = r.gen_range(0..3);
            g.push(GroundTruthBox { class_id, bbox: b });
            if r.gen_bool(0.7) {
                let j = r.gen_range(-3.0..3.0);
                d.push(Detection { class_id, score: f64::from(next.next().unwrap()) / 400.0, bbox: b.translate(j, j) });
            }
        }
        gts.insert(format!("im{i:02}"), g);
        dets.insert(format!("im{i:02}"), d);
    }
    let perfect: BTreeMap<String, Vec<Detection>> = gts
        .iter()
        .map(|(k, g)| (k.clone(), g.iter().map(|g| Detection { class_id: g.class_id, score: 1.0, bbox: g.bbox }).collect()))
        .collect();
    let pm = evaluate(&perfect, &gts, 0.5).map_err(|e| e.to_string())?.map;
    ensure!(pm == 1.0, "perfect mAP {pm}");

    let base = evaluate(&dets, &gts, 0.5).map_err(|e| e.to_string())?;
    for round in 0..5 {
        let ids: Vec<String> = gts.keys().cloned().collect();
        let mut perm = ids.clone();
        perm.shuffle(&mut r);
        let rename: BTreeMap<&String, &String> = ids.iter().zip(&perm).collect();
        let g2: BTreeMap<_, _> = gts.iter().map(|(k, v)| (rename[k].clone(), v.clone())).collect();
        let d2: BTreeMap<_, _> = dets
            .iter()
            .map(|(k, v)| {
                let mut v = v.clone();
                v.shuffle(&mut r);
                (rename[k].clone(), v)
            })
            .collect();
        let other = evaluate(&d2, &g2, 0.5).map_err(|e| e.to_string())?;
        ensure!(other.to_json() == base.to_json(), "shuffle round {round} changed the report");
    }
    Ok(format!("iou 1/7, AP {ap:.4}, perfect 1.0, shuffled mAP {:.4} stable", base.map))
}

fn rand_label(r: &mut ChaCha8Rng) -> LabelBox {
    let q = |r: &mut ChaCha8Rng, lo: u32| f64::from(r.gen_range(lo..=1_000_000u32)) / 1e6;
    LabelBox { class_id: r.gen_range(0..3), cx: q(r, 0), cy: q(r, 0), w: q(r, 1), h: q(r, 1) }
}

fn data_roundtrips() -> Outcome {
    let mut r = rng(5);
    let mut max_ratio = 0usize;
    for i in 0..50 {
        let (w, h) = (r.gen_range(1..40), r.gen_range(1..40));
        let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
        bytes.extend((0..3 * w * h).map(|_| r.gen::<u8>()));
        let img = decode_ppm(&bytes, "x", Path::new("mem")).map_err(|e| e.to_string())?;
        ensure!(encode_ppm(&img) == bytes, "PPM round-trip {i}");

        let set = LabelSet::new((0..r.gen_range(0..6)).map(|_| rand_label(&mut r)).collect());
        let back = parse_labels(&set.to_text(), Path::new("l.txt")).map_err(|e| e.to_string())?;
        ensure!(back == set, "label round-trip {i}");

        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let (i1, l1) = flip_augment(&img, &set, axis);
            let (i2, l2) = flip_augment(&i1, &l1, axis);
            ensure!(i2 == img && l2 == set, "flip {axis:?} not an involution");
        }
        let out = augment_recipe(&img, &set).map_err(|e| e.to_string())?;
        ensure!(out.len() <= 5, "recipe emitted {}", out.len());
        max_ratio = max_ratio.max(out.len());
    }

    let mut bytes = b"P6\n160 120\n255\n".to_vec();
    bytes.extend((0..3 * 160 * 120).map(|_| r.gen::<u8>()));
    let img = decode_ppm(&bytes, "r", Path::new("mem")).map_err(|e| e.to_string())?;
    let mut worst = 0f64;
    let mut survivors = 0;
    for _ in 0..50 {
        // interior boxes: nothing is clipped on either leg, so every box survives
        let set = LabelSet::new(
            (0..3)
                .map(|_| LabelBox {
                    class_id: 0,
                    cx: r.gen_range(0.3..0.7),
                    cy: r.gen_range(0.3..0.7),
                    w: r.gen_range(0.02..0.2),
                    h: r.gen_range(0.02..0.2),
                })
                .collect(),
        );
        let (i1, l1) = rotate_augment(&img, &set, 15.0).map_err(|e| e.to_string())?;
        let (_, l2) = rotate_augment(&i1, &l1, -15.0).map_err(|e| e.to_string())?;
        ensure!(l2.boxes.len() == set.boxes.len(), "interior box dropped");
        for (o, b) in set.boxes.iter().zip(&l2.boxes) {
            worst = worst.max(((o.cx - b.cx) * 160.0).hypot((o.cy - b.cy) * 120.0));
            survivors += 1;
        }
    }
    ensure!(survivors > 0, "no unclipped survivors to check");
    ensure!(worst <= ROTATION_PX, "rotation round-trip centre error {worst:.3} px");
    Ok(format!("PPM, labels, flips, ±15° err {worst:.2}px over {survivors} boxes, recipe ≤{max_ratio}×"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_iyolo")).args(args).output().map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim());
    Ok(())
}

fn pipeline(root: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = root.join("data");
    let weights = root.join("w.iyw");
    let (dump, report) = (root.join("dets.txt"), root.join("report.json"));
    let n = E2E_IMAGES.to_string();
    run_cli(&["gen-fixtures", "--n", &n, "--seed", "17", "--out", &s(&data)])?;
    run_cli(&["init-weights", "--seed", "17", "--out", &s(&weights)])?;
    run_cli(&["predict", "--weights", &s(&weights), "--images", &s(&data.join("images")), "--conf-thresh", "0.05", "--out", &s(&dump)])?;
    run_cli(&["eval", "--dets", &s(&dump), "--labels", &s(&data.join("labels")), "--images", &s(&data.join("images")), "--out", &s(&report)])?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    Ok((read(&dump)?, read(&report)?))
}

fn end_to_end() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(&dir.path().join("run1"))?;
    let once = t0.elapsed();
    let second = pipeline(&dir.path().join("run2"))?;
    ensure!(first.0 == second.0, "detection dumps differ");
    ensure!(first.1 == second.1, "reports differ");
    ensure!(once < E2E_BUDGET, "one pipeline run took {once:?}");
    let lines = first.0.iter().filter(|b| **b == b'\n').count();
    Ok(format!("{E2E_IMAGES} images, {lines} detections, identical across runs, {:.1}s per run", once.as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("kernel oracles", kernel_oracles),
        ("attention fidelity", attention_fidelity),
        ("architecture shapes", architecture_shapes),
        ("ghost efficiency", ghost_efficiency),
        ("post-processing oracles", postproc_oracles),
        ("metric fixtures", metric_fixtures),
        ("data round-trips", data_roundtrips),
        ("end-to-end determinism", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match result {
            Ok(note) => println!("criterion {}: PASS  {name} ({note})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
