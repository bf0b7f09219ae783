//! Line charts, the confusion heatmap and the ROC figure.

use jutepest_core::metrics::ConfusionMatrix;
use jutepest_core::roc::{RocCurve, RocLabel, RocSet};
use jutepest_core::train::TrainingHistory;

use super::canvas::{Canvas, Color, BLACK, GRAY, GRID, PALETTE, WHITE};

pub struct Series {
    pub name: String,
    pub color: Color,
    pub points: Vec<(f64, f64)>,
    pub dash: Option<(f64, f64)>,
    pub width: f64,
    pub markers: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegendAt {
    UpperRight,
    LowerRight,
    Outside,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub legend: LegendAt,
    /// Integer ticks only on the x axis.
    pub integer_x: bool,
}

/// Roughly `target` round tick values covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').to_string()
    }
}

const MARGIN_LEFT: i64 = 80;
const MARGIN_TOP: i64 = 40;
const MARGIN_BOTTOM: i64 = 60;

pub fn line_chart(chart: &Chart, series: &[Series], width: u32, height: u32) -> Canvas {
    let legend_w = if chart.legend == LegendAt::Outside {
        series.iter().map(|s| Canvas::text_width(&s.name)).max().unwrap_or(0) + 50
    } else {
        0
    };
    let mut c = Canvas::new(width + legend_w as u32, height, WHITE);
    let (px0, py0) = (MARGIN_LEFT, MARGIN_TOP);
    let (px1, py1) = (width as i64 - 20, height as i64 - MARGIN_BOTTOM);
    let (x0, x1) = chart.x_range;
    let (y0, y1) = chart.y_range;
    let sx = |x: f64| px0 as f64 + (x - x0) / (x1 - x0) * (px1 - px0) as f64;
    let sy = |y: f64| py1 as f64 - (y - y0) / (y1 - y0) * (py1 - py0) as f64;

    let xt: Vec<f64> = ticks(x0, x1, 10).into_iter().filter(|v| !chart.integer_x || v.fract() == 0.0).collect();
    for &t in &xt {
        let x = sx(t).round() as i64;
        c.fill_rect(x, py0, x, py1, GRID);
        c.fill_rect(x, py1, x, py1 + 4, BLACK);
        c.text_centered(x, py1 + 8, &tick_label(t), BLACK);
    }
    for t in ticks(y0, y1, 8) {
        let y = sy(t).round() as i64;
        c.fill_rect(px0, y, px1, y, GRID);
        c.fill_rect(px0 - 4, y, px0, y, BLACK);
        let label = tick_label(t);
        c.text(px0 - 8 - Canvas::text_width(&label), y - Canvas::TEXT_HEIGHT / 2, &label, BLACK);
    }
    c.stroke_rect(px0, py0, px1, py1, BLACK);
    c.text_centered((px0 + px1) / 2, 14, chart.title, BLACK);
    c.text_centered((px0 + px1) / 2, py1 + 32, chart.x_label, BLACK);
    c.text_up(16, (py0 + py1) / 2 + Canvas::text_width(chart.y_label) / 2, chart.y_label, BLACK);

    for s in series {
        for w in s.points.windows(2) {
            c.line((sx(w[0].0), sy(w[0].1)), (sx(w[1].0), sy(w[1].1)), s.color, s.width, s.dash);
        }
        if s.markers {
            for &(x, y) in &s.points {
                c.dot(sx(x), sy(y), s.width + 1.5, s.color);
            }
        }
    }

    let row = Canvas::TEXT_HEIGHT + 4;
    let box_w = series.iter().map(|s| Canvas::text_width(&s.name)).max().unwrap_or(0) + 44;
    let box_h = row * series.len() as i64 + 8;
    let (lx, ly) = match chart.legend {
        LegendAt::UpperRight => (px1 - box_w - 8, py0 + 8),
        LegendAt::LowerRight => (px1 - box_w - 8, py1 - box_h - 8),
        LegendAt::Outside => (px1 + 10, py0),
    };
    c.fill_rect(lx, ly, lx + box_w, ly + box_h, WHITE);
    c.stroke_rect(lx, ly, lx + box_w, ly + box_h, GRAY);
    for (i, s) in series.iter().enumerate() {
        let y = ly + 4 + i as i64 * row;
        let mid = (y + Canvas::TEXT_HEIGHT / 2) as f64;
        c.line(((lx + 6) as f64, mid), ((lx + 32) as f64, mid), s.color, s.width, s.dash);
        c.text(lx + 38, y, &s.name, BLACK);
    }
    c
}

/// X range of the history plots: epochs 1..=n (padded for a single epoch).
pub fn history_axis(history: &TrainingHistory) -> (f64, f64) {
    match history.len() {
        0 | 1 => (0.0, 2.0),
        n => (1.0, n as f64),
    }
}

fn value_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.01);
    ((lo - pad).max(0.0).min(lo), hi + pad)
}

pub fn history_charts(history: &TrainingHistory, model: &str) -> (Canvas, Canvas) {
    let pts = |f: fn(&jutepest_core::train::EpochRecord) -> f64| -> Vec<(f64, f64)> {
        history.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect()
    };
    let make = |name: &str, color: Color, points| Series { name: name.into(), color, points, dash: None, width: 2.0, markers: history.len() <= 60 };
    let loss = [make("train", PALETTE[0], pts(|e| e.train_loss)), make("validation", PALETTE[1], pts(|e| e.val_loss))];
    let acc = [make("train", PALETTE[0], pts(|e| e.train_accuracy)), make("validation", PALETTE[1], pts(|e| e.val_accuracy))];
    let x_range = history_axis(history);
    let loss_range = value_range(history.epochs.iter().flat_map(|e| [e.train_loss, e.val_loss]));
    let acc_range = value_range(history.epochs.iter().flat_map(|e| [e.train_accuracy, e.val_accuracy]));
    let title_l = format!("{model}: loss");
    let title_a = format!("{model}: accuracy");
    let loss_chart = Chart { title: &title_l, x_label: "epoch", y_label: "loss", x_range, y_range: loss_range, legend: LegendAt::UpperRight, integer_x: true };
    let acc_chart = Chart { title: &title_a, x_label: "epoch", y_label: "accuracy", x_range, y_range: (acc_range.0, acc_range.1.min(1.05)), legend: LegendAt::LowerRight, integer_x: true };
    (line_chart(&loss_chart, &loss, 800, 560), line_chart(&acc_chart, &acc, 800, 560))
}

/// Legend text of each ROC curve in drawing order: one per class, then
/// micro and macro averages.
pub fn roc_legend(set: &RocSet) -> Vec<String> {
    let mut out: Vec<String> = set.per_class.iter().map(legend_entry).collect();
    out.push(legend_entry(&set.micro));
    out.push(legend_entry(&set.macro_avg));
    out
}

fn legend_entry(c: &RocCurve) -> String {
    match c.label {
        RocLabel::Class(i) => format!("ROC curve of class {i} (area = {:.2})", c.auc),
        RocLabel::Micro => format!("micro-average ROC curve (area = {:.2})", c.auc),
        RocLabel::Macro => format!("macro-average ROC curve (area = {:.2})", c.auc),
    }
}

pub fn roc_chart(set: &RocSet, model: &str) -> Canvas {
    let names = roc_legend(set);
    let mut series: Vec<Series> = set
        .per_class
        .iter()
        .zip(&names)
        .enumerate()
        .map(|(i, (c, n))| Series { name: n.clone(), color: PALETTE[i % PALETTE.len()], points: c.points.clone(), dash: None, width: 1.5, markers: false })
        .collect();
    let k = set.per_class.len();
    series.push(Series { name: names[k].clone(), color: [255, 20, 147], points: set.micro.points.clone(), dash: Some((4.0, 3.0)), width: 3.0, markers: false });
    series.push(Series { name: names[k + 1].clone(), color: [0, 0, 128], points: set.macro_avg.points.clone(), dash: Some((4.0, 3.0)), width: 3.0, markers: false });
    series.push(Series { name: "chance".into(), color: GRAY, points: vec![(0.0, 0.0), (1.0, 1.0)], dash: Some((6.0, 4.0)), width: 1.0, markers: false });
    let title = format!("{model}: ROC curves");
    let chart = Chart {
        title: &title,
        x_label: "False Positive Rate",
        y_label: "True Positive Rate",
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.05),
        legend: LegendAt::Outside,
        integer_x: false,
    };
    let height = 640.max(MARGIN_TOP as u32 + 30 + 17 * (series.len() as u32 + 1));
    line_chart(&chart, &series, 700, height)
}

/// Annotated heatmap, rows = true class, columns = predicted class.
pub fn confusion_heatmap(cm: &ConfusionMatrix, names: &[String], model: &str) -> Canvas {
    let k = cm.classes() as i64;
    let digits = cm.counts().iter().max().map_or(1, |m| m.to_string().len()) as i64;
    let cell = (Canvas::text_width("0") * digits + 12).max(34);
    let labels: Vec<String> = names.iter().enumerate().map(|(i, n)| format!("{i}: {n}")).collect();
    let label_w = labels.iter().map(|l| Canvas::text_width(l)).max().unwrap_or(0) + 16;
    let (gx, gy) = (label_w + 30, 50);
    let width = gx + cell * k + 90;
    let height = gy + cell * k + 50;
    let mut c = Canvas::new(width as u32, height as u32, WHITE);
    c.text_centered(gx + cell * k / 2, 14, &format!("{model}: confusion matrix"), BLACK);
    let max = cm.counts().iter().copied().max().unwrap_or(0).max(1) as f64;
    for t in 0..k {
        for p in 0..k {
            let v = cm.get(t as usize, p as usize);
            let shade = v as f64 / max;
            let color = blues(shade);
            let (x, y) = (gx + p * cell, gy + t * cell);
            c.fill_rect(x, y, x + cell - 1, y + cell - 1, color);
            let ink = if shade > 0.5 { WHITE } else { BLACK };
            c.text_centered(x + cell / 2, y + (cell - Canvas::TEXT_HEIGHT) / 2, &v.to_string(), ink);
        }
        let l = &labels[t as usize];
        c.text(gx - 8 - Canvas::text_width(l), gy + t * cell + (cell - Canvas::TEXT_HEIGHT) / 2, l, BLACK);
        c.text_centered(gx + t * cell + cell / 2, gy + k * cell + 6, &t.to_string(), BLACK);
    }
    c.stroke_rect(gx - 1, gy - 1, gx + k * cell, gy + k * cell, BLACK);
    c.text_centered(gx + cell * k / 2, gy + k * cell + 26, "predicted class", BLACK);
    c.text_up(8, gy + cell * k / 2 + Canvas::text_width("true class") / 2, "true class", BLACK);
    // color bar
    let bx = gx + k * cell + 30;
    for y in 0..k * cell {
        let shade = 1.0 - y as f64 / (k * cell - 1).max(1) as f64;
        c.fill_rect(bx, gy + y, bx + 14, gy + y, blues(shade));
    }
    c.stroke_rect(bx, gy, bx + 14, gy + k * cell - 1, BLACK);
    c.text(bx + 18, gy, &(max as u64).to_string(), BLACK);
    c.text(bx + 18, gy + k * cell - Canvas::TEXT_HEIGHT, "0", BLACK);
    c
}

fn blues(t: f64) -> Color {
    let (a, b) = ([247.0, 251.0, 255.0], [8.0, 48.0, 107.0]);
    let t = t.clamp(0.0, 1.0);
    [0, 1, 2].map(|i| (a[i] + (b[i] - a[i]) * t).round() as u8)
}
