#![allow(dead_code)]

use std::sync::Arc;

use hardylab::mesh::{interval_mesh_from_nodes, Focus, Grading, Mesh};

/// Smallest eigenvalue of −(r f')' = Λ r f on (0,1), f(1) = 0, by vertex-centred
/// finite differences on n cells: symmetric tridiagonal pencil, Sturm bisection.
pub fn radial_fd_eigenvalue(n: usize) -> f64 {
    let h = 1.0 / n as f64;
    // unknowns f_0..f_{n-1}; lumped mass r_i h, and h²/8 at the axis
    let m: Vec<f64> = (0..n).map(|i| if i == 0 { h * h / 8.0 } else { i as f64 * h * h }).collect();
    let flux = |i: usize| i as f64 + 0.5; // r_{i+1/2}/h
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        diag[i] += flux(i);
        if i > 0 {
            diag[i] += flux(i - 1);
        }
        if i + 1 < n {
            off[i] = -flux(i);
        }
    }
    // D^{-1/2} K D^{-1/2}
    let a: Vec<f64> = (0..n).map(|i| diag[i] / m[i]).collect();
    let b: Vec<f64> = (0..n - 1).map(|i| off[i] / (m[i] * m[i + 1]).sqrt()).collect();
    let count_below = |x: f64| {
        let mut c = 0;
        let mut q = a[0] - x;
        if q < 0.0 {
            c += 1;
        }
        for i in 1..n {
            let prev = if q == 0.0 { 1e-300 } else { q };
            q = a[i] - x - b[i - 1] * b[i - 1] / prev;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Richardson-extrapolated radial oracle (second-order scheme).
pub fn disc_eigenvalue_oracle() -> f64 {
    let n = 2_000;
    let (c, f) = (radial_fd_eigenvalue(n), radial_fd_eigenvalue(2 * n));
    (4.0 * f - c) / 3.0
}

pub fn uniform() -> Grading {
    Grading {
        beta: 1.0,
        level: 0,
        focus: Focus::Uniform,
    }
}

/// Uniform mesh of (0, 1) with `n` cells.
pub fn unit_line(n: usize, dir_left: bool, dir_right: bool) -> Arc<Mesh> {
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    Arc::new(interval_mesh_from_nodes(&xs, dir_left, dir_right, uniform()).unwrap())
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
