//! Monte Carlo moment oracle shared by integration tests.
//!
//! Independent of the closed forms under test: it only samples the measure
//! and averages `f(x) f(x)'`. Entries that the measure's permutation and
//! sign symmetries force to share one expectation are pooled (grouped by the
//! sorted nonzero exponent signature of the term product), which is plain
//! Rao-Blackwellization and tightens the estimate without touching the
//! closed forms.
#![allow(dead_code)] // measures not exercised by every test binary

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rsdesign::model::ModelSpec;

#[derive(Debug, Clone, Copy)]
pub enum Measure {
    /// Uniform on the cube `[-1, 1]^q`.
    CubeVolume,
    /// Uniform on the solid ball of radius `rho`.
    BallVolume { rho: f64 },
    /// Uniform on the sphere surface of radius `a`.
    SphereSurface { a: f64 },
}

fn sample_point<R: Rng>(measure: Measure, q: usize, rng: &mut R) -> Vec<f64> {
    match measure {
        Measure::CubeVolume => (0..q).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        Measure::BallVolume { rho } => {
            let radius = rho * rng.random::<f64>().powf(1.0 / q as f64);
            scaled_direction(q, radius, rng)
        }
        Measure::SphereSurface { a } => scaled_direction(q, a, rng),
    }
}

fn scaled_direction<R: Rng>(q: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.iter().map(|&v| v * radius / norm).collect();
        }
    }
}

/// Sample-mean estimate of the moment matrix, pooled over symmetry classes.
pub fn mc_moment_matrix(
    measure: Measure,
    model: &ModelSpec,
    samples: usize,
    seed: u64,
) -> DMatrix<f64> {
    let q = model.q();
    let p = model.p();
    const BLOCK: usize = 250_000;
    let blocks = samples.div_ceil(BLOCK);
    let partials: Vec<DMatrix<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut acc = DMatrix::<f64>::zeros(p, p);
            let mut f = vec![0.0f64; p];
            for _ in 0..count {
                let x = sample_point(measure, q, &mut rng);
                for (slot, term) in f.iter_mut().zip(model.terms()) {
                    *slot = (0..q).map(|i| x[i].powi(term.exponent(i) as i32)).product();
                }
                for a in 0..p {
                    for b in a..p {
                        acc[(a, b)] += f[a] * f[b];
                    }
                }
            }
            acc
        })
        .collect();
    let mut sum = DMatrix::<f64>::zeros(p, p);
    for part in partials {
        sum += part; // ordered reduction keeps the estimate deterministic
    }
    let mut est = sum / samples as f64;
    for a in 0..p {
        for b in 0..a {
            est[(a, b)] = est[(b, a)];
        }
    }
    pool_symmetry_classes(model, est)
}

/// Average entries whose term-product exponent signatures coincide.
fn pool_symmetry_classes(model: &ModelSpec, raw: DMatrix<f64>) -> DMatrix<f64> {
    use std::collections::HashMap;
    let p = model.p();
    let q = model.q();
    let mut classes: HashMap<Vec<u32>, (f64, usize)> = HashMap::new();
    let signature = |a: usize, b: usize| -> Vec<u32> {
        let ta = model.terms()[a];
        let tb = model.terms()[b];
        let mut expo: Vec<u32> = (0..q)
            .map(|i| ta.exponent(i) + tb.exponent(i))
            .filter(|&e| e > 0)
            .collect();
        expo.sort_unstable();
        expo
    };
    for a in 0..p {
        for b in a..p {
            let entry = classes.entry(signature(a, b)).or_insert((0.0, 0));
            entry.0 += raw[(a, b)];
            entry.1 += 1;
        }
    }
    let mut pooled = raw;
    for a in 0..p {
        for b in a..p {
            let (sum, count) = classes[&signature(a, b)];
            pooled[(a, b)] = sum / count as f64;
            pooled[(b, a)] = pooled[(a, b)];
        }
    }
    pooled
}
