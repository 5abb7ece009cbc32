#![allow(dead_code)]

use otclust::measure::{CentroidSet, EmpiricalMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_coords(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| rng.random::<f64>()).collect()
}

/// `n` points spread over `blobs` Gaussian clusters with random centres in the unit box.
pub fn blobs(rng: &mut ChaCha8Rng, n: usize, dim: usize, blobs: usize, sd: f64) -> EmpiricalMeasure {
    let centres: Vec<Vec<f64>> = (0..blobs).map(|_| uniform_coords(rng, 1, dim)).collect();
    let noise = Normal::new(0.0, sd).unwrap();
    let mut coords = Vec::with_capacity(n * dim);
    for i in 0..n {
        let c = &centres[i % blobs];
        coords.extend(c.iter().map(|v| v + noise.sample(rng)));
    }
    EmpiricalMeasure::uniform(dim, coords).unwrap()
}

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Smallest squared-distance cost over assignments whose cell masses equal the
/// capacities (within 1e-9), by exhaustive enumeration.
pub fn brute_force_min(m: &EmpiricalMeasure, y: &CentroidSet) -> f64 {
    let (n, k) = (m.len(), y.len());
    let mut best = f64::INFINITY;
    let mut code = vec![0usize; n];
    loop {
        let mut mass = vec![0.0; k];
        for (i, &j) in code.iter().enumerate() {
            mass[j] += m.weights()[i];
        }
        if mass.iter().zip(y.capacities()).all(|(a, b)| (a - b).abs() < 1e-9) {
            let cost: f64 = code
                .iter()
                .enumerate()
                .map(|(i, &j)| m.weights()[i] * sq(m.point(i), y.position(j)))
                .sum();
            best = best.min(cost);
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            code[pos] += 1;
            if code[pos] < k {
                break;
            }
            code[pos] = 0;
            pos += 1;
        }
    }
}

pub fn max_deviation(w: &[f64], nu: &[f64]) -> f64 {
    w.iter().zip(nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn nonincreasing(trace: &[f64], tol: f64) -> bool {
    trace.windows(2).all(|p| p[1] <= p[0] + tol)
}
