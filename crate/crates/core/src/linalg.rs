//! Ridge reconstruction of a vector from a dictionary of rows.
//!
//! Both prototype synthesis and class similarity solve
//!
//! ```text
//! min_x ‖t − Dᵀ x‖² + reg · ‖x‖²
//! ```
//!
//! where the rows of `D` are the atoms. The dictionaries are small (one row
//! per class), so the regularized normal equations `(D Dᵀ + reg I) x = D t`
//! are formed explicitly and solved by Cholesky factorization in f64.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{check_dim, Error, Result};

/// Relative pivot floor below which the Gram matrix is treated as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solves the ridge problem for coefficients over the rows of `dictionary`.
pub fn ridge_solve(
    dictionary: ArrayView2<'_, f64>,
    target: ArrayView1<'_, f64>,
    reg: f64,
    context: &'static str,
) -> Result<Array1<f64>> {
    check_dim(context, dictionary.ncols(), target.len())?;
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::Config(format!("{context}: regularizer must be finite and >= 0, got {reg}")));
    }
    let mut gram = dictionary.dot(&dictionary.t());
    for i in 0..gram.nrows() {
        gram[[i, i]] += reg;
    }
    let rhs = dictionary.dot(&target);
    let factor = cholesky(gram, context)?;
    let solution = cholesky_solve(&factor, rhs);
    crate::error::check_finite(context, solution.iter())?;
    Ok(solution)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
fn cholesky(mut a: Array2<f64>, context: &'static str) -> Result<Array2<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let floor = PIVOT_TOLERANCE * scale;
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= a[[j, k]] * a[[j, k]];
        }
        if !(pivot > floor) {
            return Err(Error::Singular {
                context,
                row: j,
                pivot,
            });
        }
        let root = pivot.sqrt();
        a[[j, j]] = root;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / root;
        }
        for i in 0..j {
            a[[i, j]] = 0.0;
        }
    }
    Ok(a)
}

fn cholesky_solve(l: &Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * b[k];
        }
        b[i] = v / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[[k, i]] * b[k];
        }
        b[i] = v / l[[i, i]];
    }
    b
}
