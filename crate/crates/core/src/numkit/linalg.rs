use super::matrix::Matrix;
use super::NumError;

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky
/// factorization. Fails with [`NumError::Singular`] when a pivot is not
/// comfortably positive.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, NumError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(NumError::Shape(format!(
            "solve_spd with {}x{} system and rhs of {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= 1e-12 * scale {
            return Err(NumError::Singular(format!("pivot {j} is {d:e}")));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}
