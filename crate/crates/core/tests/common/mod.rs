//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// Hand-written fourth-order CIR cumulant system for `(b, mu, sigma)`.
pub fn cir_oracle(k: &[f64], th: &[f64]) -> [f64; 4] {
    let (b, mu, s2) = (th[0], th[1], th[2] * th[2]);
    [
        b * (mu - k[0]),
        s2 * k[0] - 2.0 * b * k[1],
        -3.0 * b * k[2] + 3.0 * s2 * k[1],
        -4.0 * b * k[3] + 6.0 * s2 * k[2],
    ]
}

/// Determinant and inverse by cofactors, for m <= 3.
pub fn det_inv(a: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    match a.len() {
        1 => (a[0][0], vec![vec![1.0 / a[0][0]]]),
        2 => {
            let d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            (d, vec![vec![a[1][1] / d, -a[0][1] / d], vec![-a[1][0] / d, a[0][0] / d]])
        }
        3 => {
            let c = |i: usize, j: usize| {
                let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
                let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
                a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]
            };
            let d = a[0][0] * c(0, 0) + a[0][1] * c(0, 1) + a[0][2] * c(0, 2);
            let inv = (0..3).map(|i| (0..3).map(|j| c(j, i) / d).collect()).collect();
            (d, inv)
        }
        _ => panic!("m <= 3 only"),
    }
}

pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let m = x.len();
    let (det, inv) = det_inv(cov);
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let mut q = 0.0;
    for i in 0..m {
        for j in 0..m {
            q += d[i] * inv[i][j] * d[j];
        }
    }
    -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + q)
}

/// Random well-conditioned covariance `L L^T + 0.5 I`.
pub fn random_covariance<R: Rng>(rng: &mut R, m: usize) -> Vec<Vec<f64>> {
    let l: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if j <= i { rng.random_range(-1.0..1.0) } else { 0.0 }).collect())
        .collect();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (0..m).map(|k| l[i][k] * l[j][k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Inverse-gamma CDF via the regularized upper incomplete gamma.
pub fn inv_gamma_cdf(x: f64, shape: f64, scale: f64) -> f64 {
    statrs::function::gamma::gamma_ur(shape, scale / x)
}
