#![allow(dead_code)]

use nalgebra::DMatrix;

/// Eigenvalues of the `n`-point finite-difference discretization of
/// `−y″ + V y` on one period, with periodic (`sign = 1`) or antiperiodic
/// (`sign = −1`) wrap-around. Sorted ascending.
pub fn fd_hill_eigenvalues(v: impl Fn(f64) -> f64, period: f64, n: usize, sign: f64) -> Vec<f64> {
    let h = period / n as f64;
    let k = 1.0 / (h * h);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 2.0 * k + v(i as f64 * h);
        let j = (i + 1) % n;
        let w = if j == 0 { -k * sign } else { -k };
        m[(i, j)] += w;
        m[(j, i)] += w;
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Periodic and antiperiodic eigenvalues below `cap`, merged and sorted.
pub fn fd_band_edges(v: impl Fn(f64) -> f64 + Copy, period: f64, n: usize, cap: f64) -> Vec<f64> {
    let mut all: Vec<f64> = fd_hill_eigenvalues(v, period, n, 1.0)
        .into_iter()
        .chain(fd_hill_eigenvalues(v, period, n, -1.0))
        .filter(|&e| e < cap)
        .collect();
    all.sort_by(f64::total_cmp);
    all
}

/// Grid size of the frozen oracle.
pub const FD_POINTS: usize = 2048;

/// Finite-difference band edges below 3 of `2λ cos x` on `[0, 2π]`.
pub const FROZEN_EDGES: [(f64, &[f64]); 3] = [
    (
        0.5,
        &[
            -0.3784894329735458,
            -0.3476693244908138,
            0.5947995556166799,
            0.9180570783947722,
            1.2931653596721655,
            2.285152696739993,
            2.3425765963843337,
        ],
    ),
    (
        1.0,
        &[
            -1.0701301774982788,
            -1.0647961810555842,
            0.579500479693551,
            0.6867183382449125,
            1.707266738323399,
            2.3153563050069796,
            2.6677525781349427,
        ],
    ),
    (
        2.0,
        &[
            -2.651683313164855,
            -2.65134303391618,
            -0.10899012358241986,
            -0.09734468758130053,
            2.0288020403989573,
            2.1774692896682355,
        ],
    ),
];
