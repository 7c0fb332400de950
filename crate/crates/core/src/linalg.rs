//! Dense symmetric eigenvalue helpers.

use crate::error::{contract, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const JACOBI_MAX_DIM: usize = 64;

/// Largest absolute eigenvalue of a symmetric `d × d` matrix stored row-major.
///
/// Uses cyclic Jacobi rotations up to `d = 64` and power iteration on `A²`
/// beyond that.
pub fn operator_norm(a: &[f64], d: usize) -> Result<f64> {
    if a.len() != d * d {
        return contract(format!("matrix has {} entries, expected {}", a.len(), d * d));
    }
    if d == 0 {
        return Ok(0.0);
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            if (a[i * d + j] - a[j * d + i]).abs() > SYMMETRY_TOL * scale {
                return contract(format!("matrix is not symmetric at ({i}, {j})"));
            }
        }
    }
    if d <= JACOBI_MAX_DIM {
        Ok(jacobi_eigenvalues(a, d).iter().fold(0.0, |m, v| m.max(v.abs())))
    } else {
        Ok(power_norm(a, d))
    }
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.
pub fn jacobi_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    // symmetrize to absorb tiny asymmetries in the input
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[i * d + j] + m[j * d + i]);
            m[i * d + j] = avg;
            m[j * d + i] = avg;
        }
    }
    let total: f64 = m.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return vec![0.0; d];
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * d + j] * m[i * d + j])
            .sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = m[k * d + p];
                    let akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = m[p * d + k];
                    let aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| m[i * d + i]).collect()
}

fn matvec(a: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..d {
        out[i] = a[i * d..(i + 1) * d].iter().zip(x).map(|(u, v)| u * v).sum();
    }
}

fn power_norm(a: &[f64], d: usize) -> f64 {
    // deterministic start with no special alignment to coordinate axes
    let mut x: Vec<f64> = (0..d).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin()).collect();
    let mut y = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut prev = 0.0;
    for _ in 0..10_000 {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        matvec(a, d, &x, &mut y);
        matvec(a, d, &y, &mut z);
        // Rayleigh quotient of A² equals ‖Ax‖² for unit x
        let lambda_sq: f64 = y.iter().map(|v| v * v).sum();
        std::mem::swap(&mut x, &mut z);
        if (lambda_sq - prev).abs() <= 1e-10 * lambda_sq {
            return lambda_sq.sqrt();
        }
        prev = lambda_sq;
    }
    prev.sqrt()
}
