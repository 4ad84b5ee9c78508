//! Scalar functions and small dense linear algebra.
//!
//! Everything routes through `libm` so results do not depend on the
//! platform's C library.

use alloc::vec;
use alloc::vec::Vec;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn expm1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Integer power by repeated squaring; `powi(x, 2) == x * x` exactly.
pub fn powi(x: f64, n: i32) -> f64 {
    let mut e = n.unsigned_abs();
    let mut base = x;
    let mut acc = 1.0;
    let mut first = true;
    while e > 0 {
        if e & 1 == 1 {
            acc = if first { base } else { acc * base };
            first = false;
        }
        e >>= 1;
        if e > 0 {
            base *= base;
        }
    }
    if n < 0 {
        1.0 / acc
    } else {
        acc
    }
}

pub fn norm(x: &[f64]) -> f64 {
    sqrt(x.iter().map(|v| v * v).sum())
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Least-squares line through `(xs, ys)`; returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| ln(*v)).collect();
    let ly: Vec<f64> = ys.iter().map(|v| ln(*v)).collect();
    linear_fit(&lx, &ly).0
}

/// Eigenvalues of a symmetric `n x n` matrix (row-major) by cyclic Jacobi
/// rotations, sorted ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    if n == 1 {
        return m;
    }
    if n == 2 {
        let (p, q, r) = (m[0], m[1], m[3]);
        let mean = 0.5 * (p + r);
        let rad = sqrt(0.25 * (p - r) * (p - r) + q * q);
        return vec![mean - rad, mean + rad];
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Determinant of an `n x n` row-major matrix by partial-pivot elimination.
pub fn determinant(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => {
            let mut m = a.to_vec();
            let mut det = 1.0;
            for col in 0..n {
                let piv = (col..n)
                    .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
                    .unwrap();
                if m[piv * n + col] == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    for k in 0..n {
                        m.swap(piv * n + k, col * n + k);
                    }
                    det = -det;
                }
                let p = m[col * n + col];
                det *= p;
                for r in (col + 1)..n {
                    let factor = m[r * n + col] / p;
                    for k in col..n {
                        m[r * n + k] -= factor * m[col * n + k];
                    }
                }
            }
            det
        }
    }
}

/// Empirical quantile with linear interpolation; `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(n - 1);
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Mean and standard error of the mean. The mean is accumulated relative to
/// the first sample so identical samples give that sample back exactly.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let first = values[0];
    let shift: f64 = values.iter().map(|v| v - first).sum::<f64>() / n as f64;
    let mean = first + shift;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, sqrt(ss / (n - 1) as f64) / sqrt(n as f64))
}
