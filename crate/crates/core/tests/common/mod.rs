#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `(D Dᵀ + reg I) x = D t` by Gaussian elimination with full
/// pivoting, written with plain vectors.
pub fn oracle_ridge(dict: ArrayView2<'_, f64>, target: ArrayView1<'_, f64>, reg: f64) -> Array1<f64> {
    let n = dict.nrows();
    let d = dict.ncols();
    let mut a = vec![vec![0.0f64; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..d {
                s += dict[[i, k]] * dict[[j, k]];
            }
            a[i][j] = s + if i == j { reg } else { 0.0 };
        }
        let mut r = 0.0;
        for k in 0..d {
            r += dict[[i, k]] * target[k];
        }
        a[i][n] = r;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (mut pr, mut pc, mut best) = (col, col, -1.0);
        for (r, row) in a.iter().enumerate().skip(col) {
            for (c, v) in row.iter().enumerate().take(n).skip(col) {
                if v.abs() > best {
                    best = v.abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        a.swap(col, pr);
        if pc != col {
            for row in a.iter_mut() {
                row.swap(col, pc);
            }
            perm.swap(col, pc);
        }
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = a[i][n];
        for j in i + 1..n {
            s -= a[i][j] * y[j];
        }
        y[i] = s / a[i][i];
    }
    let mut x = Array1::zeros(n);
    for (i, &p) in perm.iter().enumerate() {
        x[p] = y[i];
    }
    x
}

pub fn relative_l2(got: ArrayView1<'_, f64>, want: ArrayView1<'_, f64>) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
