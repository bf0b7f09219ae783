//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if
//! any criterion fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use sha2::{Digest, Sha256};

use jutepest::augmentation::write_expansion;
use jutepest::evaluation::load_artifact;
use jutepest::imaging;
use jutepest::pipeline::Pipeline;
use jutepest::report::plots::roc_legend;
use jutepest::report::tables::{self, round_half_up, ComparisonRow, PerClassRow, SummaryRow};
use jutepest::report::MODEL_FILES;
use jutepest_core::augment::AugmentationConfig;
use jutepest_core::backbone::BackboneId;
use jutepest_core::head::{categorical_cross_entropy, softmax, DenseHead, OneHot};
use jutepest_core::metrics::{aggregate_metrics, macro_mean, per_class_metrics, ConfusionMatrix};
use jutepest_core::model::ModelSpec;
use jutepest_core::roc::{averaged_roc, roc_curve, RocLabel};
use jutepest_core::seed;
use jutepest_core::split::{stratified_assign, Split, SplitRatios};
use jutepest_core::train::PredictionSet;
use jutepest_core::{ClassCatalog, RgbImage};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn parameter_accounting() -> Outcome {
    let expected = [
        (BackboneId::ResNet50, 34_833),
        (BackboneId::Vgg19, 8_721),
        (BackboneId::InceptionV3, 34_833),
        (BackboneId::MobileNetV2, 21_777),
        (BackboneId::DenseNet201, 32_657),
    ];
    for (id, want) in expected {
        let spec = ModelSpec::new(id, 17, 0.3).map_err(|e| e.to_string())?;
        let got = spec.summary().trainable;
        ensure!(got == want, "{}: {got} trainable, expected {want}", id.as_str());
        let f = id.feature_width() as u64;
        ensure!(got == (f + 1) * 17, "{}: {got} != ({f}+1)*17", id.as_str());
    }
    Ok("5 backbones exact".into())
}

fn oracle_loss(f: usize, k: usize, w: &[f64], b: &[f64], xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: Vec<f64> = (0..k).map(|c| b[c] + (0..f).map(|j| w[c * f + j] * x[j]).sum::<f64>()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[y];
    }
    total / xs.len() as f64
}

fn softmax_suite() -> Outcome {
    let err = |e: jutepest_core::head::HeadError| e.to_string();
    for case in 0..200u64 {
        let mut rng = seed::stream(case, "acceptance-softmax", &[]);
        let k = 2 + seed::below(&mut rng, 8) as usize;
        let z: Vec<f64> = (0..k).map(|_| seed::uniform(&mut rng, -20.0, 20.0)).collect();
        let c = seed::uniform(&mut rng, -500.0, 500.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let (a, b) = (softmax(&z).map_err(err)?, softmax(&shifted).map_err(err)?);
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure!(worst <= 1e-9, "shift invariance off by {worst:e} (case {case})");
    }
    for k in 2..=17usize {
        let p = softmax(&vec![3.25; k]).map_err(err)?;
        ensure!(p.iter().all(|v| (v - 1.0 / k as f64).abs() <= 1e-12), "uniform logits K={k} gave {p:?}");
        let loss = categorical_cross_entropy(&OneHot::new(0, k).map_err(err)?, &p).map_err(err)?;
        ensure!((loss - (k as f64).ln()).abs() <= 1e-9, "uniform loss K={k}: {loss}");
        let mut perfect = vec![0.0; k];
        perfect[k - 1] = 1.0;
        let loss = categorical_cross_entropy(&OneHot::new(k - 1, k).map_err(err)?, &perfect).map_err(err)?;
        ensure!(loss == 0.0, "perfect loss K={k}: {loss}");
    }
    let mut worst: f64 = 0.0;
    let cases = 40u64;
    for case in 0..cases {
        let mut rng = seed::stream(case, "acceptance-gradcheck", &[]);
        let f = 1 + seed::below(&mut rng, 6) as usize;
        let k = 2 + seed::below(&mut rng, 4) as usize;
        let n = 1 + seed::below(&mut rng, 5) as usize;
        let w: Vec<f64> = (0..f * k).map(|_| seed::uniform(&mut rng, -1.0, 1.0)).collect();
        let b: Vec<f64> = (0..k).map(|_| seed::uniform(&mut rng, -0.5, 0.5)).collect();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| seed::uniform(&mut rng, -2.0, 2.0)).collect()).collect();
        let ys: Vec<usize> = (0..n).map(|_| seed::below(&mut rng, k as u64) as usize).collect();
        let head = DenseHead::from_parts(f, k, w.clone(), b.clone()).map_err(err)?;
        let (_, grad, _) = head.loss_and_grad(&xs, &ys).map_err(err)?;
        let h = 1e-5;
        let numeric = |wp: &[f64], bp: &[f64], wm: &[f64], bm: &[f64]| {
            (oracle_loss(f, k, wp, bp, &xs, &ys) - oracle_loss(f, k, wm, bm, &xs, &ys)) / (2.0 * h)
        };
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        for i in 0..w.len() {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[i] += h;
            down[i] -= h;
            worst = worst.max(rel(grad.weights[i], numeric(&up, &b, &down, &b)));
        }
        for i in 0..b.len() {
            let (mut up, mut down) = (b.clone(), b.clone());
            up[i] += h;
            down[i] -= h;
            worst = worst.max(rel(grad.bias[i], numeric(&w, &up, &w, &down)));
        }
    }
    ensure!(worst < 1e-4, "gradient relative error {worst:e}");
    Ok(format!("{cases} gradient cases, worst relative error {worst:.1e}"))
}

fn metrics_oracle() -> Outcome {
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let mean = |v: &[f64]| v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / v.len() as f64;
    let sets = 1500u64;
    let mut zero_cells = 0;
    for case in 0..sets {
        let mut rng = seed::stream(case, "acceptance-metrics", &[]);
        let k = 1 + seed::below(&mut rng, 5) as usize;
        let n = 1 + seed::below(&mut rng, 50) as usize;
        let mut set = PredictionSet::new(k);
        for _ in 0..n {
            let truth = seed::below(&mut rng, k as u64) as usize;
            set.push(truth, (0..k).map(|_| seed::unit(&mut rng)).collect());
        }
        let (truths, preds) = (set.truths(), set.predicted());
        let cm = ConfusionMatrix::from_predictions(&set).map_err(|e| e.to_string())?;
        let per = per_class_metrics(&cm);
        let agg = aggregate_metrics(&cm, &per);
        let (mut p, mut r, mut f, mut s) = (vec![], vec![], vec![], vec![]);
        for c in 0..k {
            let count = |pred: &dyn Fn(usize, usize) -> bool| truths.iter().zip(&preds).filter(|&(&t, &q)| pred(t, q)).count();
            let tp = count(&|t, q| t == c && q == c);
            let fp = count(&|t, q| t != c && q == c);
            let fn_ = count(&|t, q| t == c && q != c);
            let (pc, rc) = (pct(tp, tp + fp), pct(tp, tp + fn_));
            let fc = if pc + rc == 0.0 { 0.0 } else { 2.0 * pc * rc / (pc + rc) };
            if tp + fp == 0 || tp + fn_ == 0 {
                zero_cells += 1;
            }
            let m = &per[c];
            ensure!(m.precision == pc && m.recall == rc && m.f1 == fc && m.support == (tp + fn_) as u64, "case {case} class {c}");
            p.push(pc);
            r.push(rc);
            f.push(fc);
            s.push(tp + fn_);
        }
        let correct = truths.iter().zip(&preds).filter(|(t, q)| t == q).count();
        ensure!(agg.accuracy == pct(correct, n), "case {case}: accuracy");
        ensure!(
            agg.macro_avg.precision == mean(&p) && agg.macro_avg.recall == mean(&r) && agg.macro_avg.f1 == mean(&f),
            "case {case}: macro"
        );
        let total: usize = s.iter().sum();
        let weighted = |v: &[f64]| v.iter().zip(&s).map(|(x, &n)| x * n as f64).sum::<f64>() / total as f64;
        ensure!(
            agg.weighted.precision == weighted(&p) && agg.weighted.recall == weighted(&r) && agg.weighted.f1 == weighted(&f),
            "case {case}: weighted"
        );
    }
    // a class that is never predicted and never correct scores 0/0/0
    let cm = ConfusionMatrix::from_pairs(&[0, 0, 1, 2], &[0, 0, 2, 2], 3).map_err(|e| e.to_string())?;
    let m = &per_class_metrics(&cm)[1];
    ensure!((m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0), "zero-denominator class gave {m:?}");
    Ok(format!("{sets} sets exact, {zero_cells} zero-denominator cells"))
}

fn reference_macro() -> Outcome {
    let data = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/densenet201_per_class.tsv"))
        .map_err(|e| e.to_string())?;
    let mut cols = [vec![], vec![], vec![]];
    for line in data.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        for (i, col) in cols.iter_mut().enumerate() {
            col.push(f[i + 1].parse::<f64>().map_err(|e| e.to_string())?);
        }
    }
    ensure!(cols[0].len() == 17, "expected 17 classes, read {}", cols[0].len());
    let reported = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/macro_results.tsv"))
        .map_err(|e| e.to_string())?;
    let row: Vec<f64> = reported
        .lines()
        .find(|l| l.starts_with("densenet201\t"))
        .ok_or("no densenet201 row")?
        .split('\t')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    let got: Vec<f64> = cols.iter().map(|c| macro_mean(c)).collect();
    for (i, name) in ["precision", "recall", "f1"].iter().enumerate() {
        let rounded = round_half_up(got[i]) as f64;
        ensure!((rounded - row[i]).abs() <= 1.0, "{name}: {:.2} vs reported {}", got[i], row[i]);
    }
    Ok(format!(
        "macro {:.2}/{:.2}/{:.2} -> {}/{}/{} (reported {}/{}/{}; inputs are already rounded)",
        got[0], got[1], got[2], round_half_up(got[0]), round_half_up(got[1]), round_half_up(got[2]), row[0], row[1], row[2]
    ))
}

fn roc_properties() -> Outcome {
    let err = |e: jutepest_core::roc::RocError| e.to_string();
    let perfect = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], RocLabel::Class(0)).map_err(err)?;
    ensure!(perfect.auc == 1.0, "perfect ranking AUC {}", perfect.auc);
    let constant = roc_curve(&[0.5; 6], &[true, false, true, false, false, true], RocLabel::Class(0)).map_err(err)?;
    ensure!(constant.auc == 0.5, "constant scores AUC {}", constant.auc);
    let cases = 3000u64;
    for case in 0..cases {
        let mut rng = seed::stream(case, "acceptance-roc", &[]);
        let n = 2 + seed::below(&mut rng, 19) as usize;
        let scores: Vec<f64> = (0..n).map(|_| seed::below(&mut rng, 6) as f64 / 5.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| seed::below(&mut rng, 2) == 1).collect();
        labels[0] = true;
        labels[1] = false;
        let auc = roc_curve(&scores, &labels, RocLabel::Class(0)).map_err(err)?.auc;
        let (mut twice_wins, mut pairs) = (0u64, 0u64);
        for i in (0..n).filter(|&i| labels[i]) {
            for j in (0..n).filter(|&j| !labels[j]) {
                pairs += 1;
                twice_wins += if scores[i] > scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
            }
        }
        let brute = twice_wins as f64 / (2 * pairs) as f64;
        ensure!(auc == brute, "case {case}: trapezoid {auc} vs pairwise {brute}");
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let comp = roc_curve(&scores, &flipped, RocLabel::Class(0)).map_err(err)?.auc;
        ensure!((auc + comp - 1.0).abs() <= 1e-9, "case {case}: flip complement {auc} + {comp}");
    }
    let mut set = PredictionSet::new(4);
    for i in 0..24 {
        let c = i % 4;
        let mut p = vec![0.02; 4];
        p[c] = 0.94;
        set.push(c, p);
    }
    let legend = roc_legend(&averaged_roc(&set).map_err(err)?);
    let micro = legend.iter().find(|l| l.starts_with("micro-average")).ok_or("no micro entry")?;
    let macro_ = legend.iter().find(|l| l.starts_with("macro-average")).ok_or("no macro entry")?;
    ensure!(micro.ends_with("(area = 1.00)") && macro_.ends_with("(area = 1.00)"), "legend: {legend:?}");
    Ok(format!("{cases} sets match pairwise brute force; `{micro}`, `{macro_}`"))
}

fn file_digests(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let mut out = vec![];
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        let hash: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        out.push((path.file_name().unwrap().to_string_lossy().into_owned(), hash));
    }
    out.sort();
    Ok(out)
}

fn augmentation_contract() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let source = RgbImage::from_fn(256, 256, |x, y| [(x % 256) as u8, (y % 256) as u8, ((x * y) % 251) as u8]);
    let cfg = AugmentationConfig::default();
    let mut runs = vec![];
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let written = write_expansion("leaf/0001.jpg", &source, &cfg, 46, &dir, "0001").map_err(|e| e.to_string())?;
        ensure!(written.len() == 320, "run {run}: {} outputs", written.len());
        runs.push(file_digests(&dir)?);
    }
    ensure!(runs[0].len() == 320, "{} files on disk", runs[0].len());
    for (name, _) in &runs[0] {
        let raw = imaging::decode(&tmp.path().join("a").join(name)).map_err(|e| e.to_string())?;
        let shape = (raw.width(), raw.height(), raw.channels());
        ensure!(shape == (224, 224, 3), "{name} is {shape:?}");
    }
    ensure!(runs[0] == runs[1], "seed 46 runs differ");
    Ok("320 files, all 224x224x3, identical sha256 across runs".into())
}

fn split_contract() -> Outcome {
    let catalog = ClassCatalog::new((0..17).map(|c| format!("class{c:02}"))).map_err(|e| e.to_string())?;
    let class_of: Vec<usize> = (0..17 * 20).map(|i| i % 17).collect();
    let ratios = SplitRatios::new(0.70, 0.15, 0.15).map_err(|e| e.to_string())?;
    let a = stratified_assign(&class_of, &catalog, &ratios, 46).map_err(|e| e.to_string())?;
    let b = stratified_assign(&class_of, &catalog, &ratios, 46).map_err(|e| e.to_string())?;
    ensure!(a == b, "assignment not deterministic");
    for c in 0..17 {
        let count = |s: Split| (0..a.len()).filter(|&i| class_of[i] == c && a[i] == s).count();
        let got = [count(Split::Train), count(Split::Validation), count(Split::Test)];
        ensure!(got == [14, 3, 3], "class {c}: {got:?}");
    }
    Ok("17 x 20 -> 14/3/3 per class, deterministic".into())
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    common::toy_dataset(&data, 20);
    let id = BackboneId::MobileNetV2;
    let cfg = common::toy_config(&data, &tmp.path().join("work"), &[id]);
    let pipeline = Pipeline::new(cfg).map_err(|e| e.to_string())?;
    let runs = pipeline.all().map_err(|e| e.to_string())?;
    let run = &runs[0];
    ensure!(run.aggregate.accuracy >= 95.0, "test accuracy {:.1}%", run.aggregate.accuracy);
    ensure!(run.history.len() == 5, "history has {} epochs", run.history.len());

    let reports = pipeline.workdir().reports_dir();
    let dir = reports.join(id.as_str());
    for name in MODEL_FILES {
        ensure!(dir.join(name).is_file(), "missing {name}");
    }
    let e = |e: jutepest::Error| e.to_string();
    for png in MODEL_FILES.iter().filter(|n| n.ends_with(".png")) {
        imaging::decode(&dir.join(png)).map_err(e)?;
    }
    ensure!(tables::read_history(&dir.join("history.csv")).map_err(e)? == run.history, "history.csv round trip");
    let (cm, names) = tables::read_confusion(&dir.join("confusion.csv")).map_err(e)?;
    ensure!(cm == run.confusion && names == run.class_names, "confusion.csv round trip");
    ensure!(tables::read_roc(&dir.join("roc.csv")).map_err(e)? == run.roc, "roc.csv round trip");
    let legend = fs::read_to_string(dir.join("roc_legend.txt")).map_err(|e| e.to_string())?;
    ensure!(legend.lines().count() == 5, "roc_legend.txt has {} lines", legend.lines().count());
    ensure!(tables::read_rows::<PerClassRow>(&dir.join("per_class.csv")).map_err(e)?.len() == 3, "per_class.csv rows");
    ensure!(tables::read_rows::<SummaryRow>(&dir.join("summary.csv")).map_err(e)?.len() == 1, "summary.csv rows");
    ensure!(&load_artifact(&dir.join("run.json")).map_err(e)? == run, "run.json round trip");
    ensure!(tables::read_rows::<ComparisonRow>(&reports.join("comparison.csv")).map_err(e)?.len() == 1, "comparison.csv rows");
    Ok(format!("{}: test accuracy {:.1}%, 5 epochs, {} report files parsed", id.as_str(), run.aggregate.accuracy, MODEL_FILES.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("parameter accounting", parameter_accounting),
        ("softmax, loss and head gradient", softmax_suite),
        ("metrics oracle equivalence", metrics_oracle),
        ("macro average of reference per-class results", reference_macro),
        ("ROC/AUC properties", roc_properties),
        ("augmentation contract", augmentation_contract),
        ("split contract", split_contract),
        ("end-to-end toy run", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!(
        "SKIP 9. full-dataset accuracy (99% +/- 2 for densenet201): needs the 6209-image public dataset and real pretrained weights; not run here"
    );
    if failed == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
