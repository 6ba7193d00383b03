//! Brute-force oracles shared by the statistic tests and the acceptance run.
#![allow(dead_code)]

use num_rational::Ratio;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use seqdrift_core::statistics::Kernel;
use seqdrift_core::summaries::Summary;

/// `max_u |F(u) - G(u)|` over every pooled value, counting by direct scans.
pub fn ks_oracle(reference: &[f64], window: &[f64]) -> Ratio<i64> {
    let (n, m) = (reference.len() as i64, window.len() as i64);
    let mut best = Ratio::from_integer(0);
    for &u in reference.iter().chain(window) {
        let f = reference.iter().filter(|&&x| x <= u).count() as i64;
        let g = window.iter().filter(|&&y| y <= u).count() as i64;
        let d = Ratio::new(f, n) - Ratio::new(g, m);
        let d = if d < Ratio::from_integer(0) { -d } else { d };
        if d > best {
            best = d;
        }
    }
    best
}

/// `sum_{i != j} k(a_i, a_j) / (n (n - 1))` style U-statistic, term by term.
pub fn mmd_oracle(x: &[Summary<f64>], y: &[Summary<f64>], k: &Kernel<f64>) -> f64 {
    let (n, m) = (x.len() as f64, y.len() as f64);
    let mut xx = 0.0;
    for (i, a) in x.iter().enumerate() {
        for (j, b) in x.iter().enumerate() {
            if i != j {
                xx += k.eval(a, b);
            }
        }
    }
    let mut yy = 0.0;
    for (i, a) in y.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            if i != j {
                yy += k.eval(a, b);
            }
        }
    }
    let mut xy = 0.0;
    for a in x {
        for b in y {
            xy += k.eval(a, b);
        }
    }
    xx / (n * (n - 1.0)) + yy / (m * (m - 1.0)) - 2.0 * xy / (n * m)
}

pub fn points(rng: &mut ChaCha8Rng, len: usize, dim: usize, shift: f64) -> Vec<Summary<f64>> {
    (0..len)
        .map(|_| Summary::new((0..dim).map(|_| shift + rng.random_range(-1.0..1.0))).unwrap())
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn random_values(rng: &mut ChaCha8Rng, len: usize, tied: bool) -> Vec<f64> {
    (0..len)
        .map(|_| if tied { rng.random_range(0..6) as f64 } else { rng.random_range(-3.0..3.0) })
        .collect()
}
