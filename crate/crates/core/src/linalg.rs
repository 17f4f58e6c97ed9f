//! Small dense linear algebra on row-major `Vec<Vec<T>>` matrices. The state
//! dimensions here are 1 to 3, so nothing is blocked or pivoted beyond what
//! stability needs.

use crate::scalar::Scalar;

pub type Matrix<T> = Vec<Vec<T>>;

/// Lower-triangular Cholesky factor, `None` unless `a` is symmetric positive
/// definite (every pivot strictly positive).
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    Some(l)
}

/// Cholesky factor of a positive semidefinite matrix; zero or negative
/// pivots zero out their column instead of failing.
pub fn cholesky_semidefinite<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    let n = a.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if !(d > T::zero()) {
            continue;
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    l
}

/// Solves `L L^T x = b` given the Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.len();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// `ln |A|` from a Cholesky factor.
pub fn cholesky_log_det<T: Scalar>(l: &Matrix<T>) -> T {
    l.iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, row)| acc + row[i].ln())
        * T::lit(2.0)
}

/// General solve by Gaussian elimination with partial pivoting; `None` if
/// the matrix is numerically singular.
pub fn solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.len();
    let mut m: Vec<Vec<T>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let scale = a
        .iter()
        .flatten()
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::lit(n as f64);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if !(m[piv][col].abs() > tiny) {
            return None;
        }
        m.swap(col, piv);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                let v = m[col][k];
                m[row][k] = m[row][k] - f * v;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for k in (i + 1)..n {
            s = s - m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

pub fn mat_vec<T: Scalar>(a: &Matrix<T>, x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(T::zero(), |acc, (&r, &v)| acc + r * v))
        .collect()
}

pub fn norm<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_round_trip() {
        let a = vec![
            vec![4.0, 2.0, 0.6],
            vec![2.0, 5.0, 1.0],
            vec![0.6, 1.0, 3.0],
        ];
        let l = cholesky(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert_relative_eq!(v, a[i][j], epsilon = 1e-14);
            }
        }
        let b = [1.0, -2.0, 0.5];
        let x = cholesky_solve(&l, &b);
        let ax = mat_vec(&a, &x);
        for (u, v) in ax.iter().zip(&b) {
            assert_relative_eq!(u, v, epsilon = 1e-13);
        }
        let x2 = solve(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x2) {
            assert_relative_eq!(u, v, epsilon = 1e-13);
        }
    }

    #[test]
    fn indefinite_rejected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(cholesky(&a).is_none());
        assert!(solve(&a, &[1.0, 1.0]).is_some());
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(&singular, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn semidefinite_factor() {
        // rank one: [1 1; 1 1]
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let l = cholesky_semidefinite(&a);
        assert_eq!(l, vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let z = vec![vec![0.0, 0.0], vec![0.0, 2.0]];
        let l = cholesky_semidefinite(&z);
        assert_relative_eq!(l[1][1], 2f64.sqrt());
    }

    #[test]
    fn log_det() {
        let a = vec![vec![2.0, 0.0], vec![0.0, 8.0]];
        let l = cholesky(&a).unwrap();
        assert_relative_eq!(cholesky_log_det(&l), 16f64.ln(), epsilon = 1e-15);
    }
}
