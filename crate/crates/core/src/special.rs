//! Special functions not covered by `statrs`.

use statrs::function::gamma::ln_gamma;

/// `ln I_nu(z)` for the modified Bessel function of the first kind,
/// `nu > -1`, `z >= 0`.
///
/// Sums `I_nu(z) = sum_k (z/2)^(2k+nu) / (k! Gamma(k+nu+1))` in log space,
/// outward from its largest term, so it stays accurate for `z` in the tens of
/// thousands where the terms themselves overflow.
pub fn ln_bessel_i(nu: f64, z: f64) -> f64 {
    if z.is_nan() || nu.is_nan() || z < 0.0 {
        return f64::NAN;
    }
    if z == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let lhz = (0.5 * z).ln();
    let term = |k: f64| (2.0 * k + nu) * lhz - ln_gamma(k + 1.0) - ln_gamma(k + nu + 1.0);
    // ratio t_{k+1}/t_k = (z/2)^2 / ((k+1)(k+nu+1)) crosses 1 here
    let peak = 0.5 * (-(nu + 2.0) + (nu * nu + z * z).sqrt());
    let k0 = peak.max(0.0).round();
    let t0 = term(k0);
    let q = 0.25 * z * z;
    let mut sum = 1.0;
    // upward
    let mut rel = 1.0;
    let mut k = k0;
    loop {
        rel *= q / ((k + 1.0) * (k + nu + 1.0));
        k += 1.0;
        sum += rel;
        if rel < 1e-17 * sum {
            break;
        }
    }
    // downward
    let mut rel = 1.0;
    let mut k = k0;
    while k >= 1.0 {
        rel *= k * (k + nu) / q;
        k -= 1.0;
        sum += rel;
        if rel < 1e-17 * sum {
            break;
        }
    }
    t0 + sum.ln()
}
