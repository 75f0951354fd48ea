//! Reference implementations written independently of the library code.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Top-`k` positive frequencies of `x` by direct-sum DFT amplitude.
///
/// Amplitudes at or below `1e-10 * Σ|x|` count as zero; ties go to the lower
/// frequency; missing ranks repeat the lowest bin.
pub fn dft_top_k(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len();
    let floor = 1e-10 * x.iter().map(|v| v.abs()).sum::<f64>();
    let mut amps: Vec<(f64, usize)> = (1..n)
        .filter(|&b| 2 * b < n)
        .map(|b| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let w = -2.0 * PI * (b * t % n) as f64 / n as f64;
                re += v * w.cos();
                im += v * w.sin();
            }
            let a = re.hypot(im);
            (if a <= floor { 0.0 } else { a }, b)
        })
        .collect();
    amps.sort_by(|p, q| q.0.partial_cmp(&p.0).unwrap().then(p.1.cmp(&q.1)));
    (0..k)
        .map(|c| amps.get(c).map_or(1, |a| a.1) as f64 / n as f64)
        .collect()
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Savitzky-Golay smoothing by fitting each window through its normal
/// equations. Edge samples evaluate the fit of the first or last full window.
pub fn savgol_by_windows(x: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = x.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - window);
            let centre = (start + half) as f64;
            let ts: Vec<f64> = (start..start + window).map(|t| t as f64 - centre).collect();
            let mut ata = vec![vec![0.0; order + 1]; order + 1];
            let mut atb = vec![0.0; order + 1];
            for (t, &v) in ts.iter().zip(&x[start..start + window]) {
                for r in 0..=order {
                    atb[r] += t.powi(r as i32) * v;
                    for c in 0..=order {
                        ata[r][c] += t.powi((r + c) as i32);
                    }
                }
            }
            let coef = solve(ata, atb);
            let at = i as f64 - centre;
            coef.iter().rev().fold(0.0, |acc, c| acc * at + c)
        })
        .collect()
}
