//! Deterministic sampling helpers.
//!
//! Random draws come from ChaCha8 keyed by a 64-bit seed with the trial
//! index as the stream id, so a trial's draws do not depend on which thread
//! runs it or on how many trials ran before it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `count` Euclidean-unit directions in `R^n` from a low-discrepancy
/// sequence. Equally spaced angles for `n = 2`, Halton points pushed to the
/// sphere otherwise.
pub fn sphere_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => (0..count)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..count)
            .map(|i| {
                let th = std::f64::consts::TAU * (i as f64 + 0.5) / count as f64 + 0.1234;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(count);
            let mut idx = 1u64;
            while out.len() < count {
                let p: Vec<f64> = (0..n)
                    .map(|k| 2.0 * halton(idx, PRIMES[k % PRIMES.len()]) - 1.0)
                    .collect();
                idx += 1;
                let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (0.05..=1.0).contains(&r) {
                    out.push(p.iter().map(|v| v / r).collect());
                }
            }
            out
        }
    }
}

pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            let v: f64 = rng.gen();
            return (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos();
        }
    }
}

/// Uniformly distributed Euclidean-unit vector.
pub fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 1e-6 {
            return v.iter().map(|a| a / r).collect();
        }
    }
}
