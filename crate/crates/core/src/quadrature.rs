//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals,
//! plus a nested version for rectangles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: estimate {value}, error {error} after {subdivisions} subdivisions")]
    NotConverged {
        value: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand is not finite near {0}")]
    NonFinite(f64),
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment, QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let (f1, f2) = (f(c - dx), f(c + dx));
        if !f1.is_finite() || !f2.is_finite() {
            return Err(QuadError::NonFinite(c - dx));
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    })
}

/// Integral of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(QuadError::InvalidInterval(a, b));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let first = gk15(&mut f, a, b)?;
    let mut value = first.value;
    let mut error = first.error;
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 0;
    loop {
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            return Ok(QuadResult {
                value,
                error,
                evaluations,
            });
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(QuadError::NotConverged {
                value,
                error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(QuadError::NotConverged {
                value,
                error,
                subdivisions,
            });
        }
        let left = gk15(&mut f, worst.a, mid)?;
        let right = gk15(&mut f, mid, worst.b)?;
        evaluations += 30;
        subdivisions += 1;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // resum periodically to keep the running totals honest
        if subdivisions % 64 == 0 {
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integral of `f(x, y)` over a rectangle by nested adaptive quadrature.
/// The inner tolerance is tightened so the outer integrand is smooth enough.
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    x: (f64, f64),
    y: (f64, f64),
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    let inner_opts = QuadOptions {
        abs_tol: opts.abs_tol * 0.1 / (y.1 - y.0).abs().max(1.0),
        rel_tol: opts.rel_tol * 0.1,
        max_subdivisions: opts.max_subdivisions,
    };
    let mut inner_err: Option<QuadError> = None;
    let mut evaluations = 0;
    let outer = integrate(
        |xv| {
            if inner_err.is_some() {
                return 0.0;
            }
            match integrate(|yv| f(xv, yv), y.0, y.1, &inner_opts) {
                Ok(r) => {
                    evaluations += r.evaluations;
                    r.value
                }
                Err(e) => {
                    inner_err = Some(e);
                    0.0
                }
            }
        },
        x.0,
        x.1,
        opts,
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    let r = outer?;
    Ok(QuadResult {
        evaluations,
        ..r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 0.0, epsilon = 1e-13);
        assert_eq!(r.evaluations, 15);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x| (-x * x / 2.0).exp(), -10.0, 10.0, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn kink_needs_subdivision() {
        let r = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 0.5 * (0.09 + 0.49), epsilon = 1e-9);
        assert!(r.evaluations > 15);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions {
            max_subdivisions: 3,
            ..Default::default()
        };
        let r = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &opts);
        assert!(matches!(r, Err(QuadError::NotConverged { .. })));
    }

    #[test]
    fn non_finite_and_bad_interval() {
        assert!(matches!(
            integrate(|x| 1.0 / x, 0.0, 1.0, &QuadOptions::default()),
            Err(QuadError::NonFinite(_)) | Err(QuadError::NotConverged { .. })
        ));
        assert!(matches!(
            integrate(|x| x, 1.0, 0.0, &QuadOptions::default()),
            Err(QuadError::InvalidInterval(..))
        ));
    }

    #[test]
    fn rectangle() {
        let r = integrate_2d(
            |x, y| x * y.exp(),
            (0.0, 2.0),
            (0.0, 1.0),
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 2.0 * (std::f64::consts::E - 1.0), epsilon = 1e-9);
    }
}
