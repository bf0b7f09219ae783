//! Analytic head gradients against central finite differences of an
//! independently written loss.

use jutepest_core::head::DenseHead;
use jutepest_core::seed;

/// Mean cross-entropy of a dense layer + softmax, written out directly.
fn oracle_loss(f: usize, k: usize, w: &[f64], b: &[f64], xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: Vec<f64> = (0..k).map(|c| b[c] + (0..f).map(|j| w[c * f + j] * x[j]).sum::<f64>()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total / xs.len() as f64
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error over all parameters of one random case.
pub fn check_case(case: u64) -> f64 {
    let mut rng = seed::stream(case, "gradcheck", &[]);
    let f = 1 + seed::below(&mut rng, 6) as usize;
    let k = 2 + seed::below(&mut rng, 4) as usize;
    let n = 1 + seed::below(&mut rng, 5) as usize;
    let w: Vec<f64> = (0..f * k).map(|_| seed::uniform(&mut rng, -1.0, 1.0)).collect();
    let b: Vec<f64> = (0..k).map(|_| seed::uniform(&mut rng, -0.5, 0.5)).collect();
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| seed::uniform(&mut rng, -2.0, 2.0)).collect()).collect();
    let ys: Vec<usize> = (0..n).map(|_| seed::below(&mut rng, k as u64) as usize).collect();

    let head = DenseHead::from_parts(f, k, w.clone(), b.clone()).unwrap();
    let (loss, grad, _) = head.loss_and_grad(&xs, &ys).unwrap();
    assert!((loss - oracle_loss(f, k, &w, &b, &xs, &ys)).abs() < 1e-12);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up[i] += h;
        down[i] -= h;
        let num = (oracle_loss(f, k, &up, &b, &xs, &ys) - oracle_loss(f, k, &down, &b, &xs, &ys)) / (2.0 * h);
        worst = worst.max(rel_err(grad.weights[i], num));
    }
    for i in 0..b.len() {
        let (mut up, mut down) = (b.clone(), b.clone());
        up[i] += h;
        down[i] -= h;
        let num = (oracle_loss(f, k, &w, &up, &xs, &ys) - oracle_loss(f, k, &w, &down, &xs, &ys)) / (2.0 * h);
        worst = worst.max(rel_err(grad.bias[i], num));
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    for case in 0..40 {
        let e = check_case(case);
        assert!(e < 1e-4, "case {case}: relative error {e}");
    }
}

#[test]
fn loss_falls_as_true_probability_rises() {
    // two classes, one feature: raising the true-class weight raises p[true]
    let x = vec![vec![1.0]];
    let mut last = f64::INFINITY;
    for step in 0..20 {
        let head = DenseHead::from_parts(1, 2, vec![step as f64 * 0.25, 0.0], vec![0.0, 0.0]).unwrap();
        let l = head.loss(&x, &[0]).unwrap();
        assert!(l < last);
        last = l;
    }
}
