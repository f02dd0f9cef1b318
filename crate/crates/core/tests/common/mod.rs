#![allow(dead_code)]

use apohf_core::domain::{Arm, ArmDomain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller keeps this independent of the crate's sampling code.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_domain(n: usize, d: usize, seed: u64) -> ArmDomain {
    let mut r = rng(seed);
    ArmDomain::new(
        (0..n)
            .map(|i| Arm {
                id: format!("x{i}"),
                text: format!("candidate {i}"),
                embedding: (0..d).map(|_| gaussian(&mut r)).collect(),
            })
            .collect(),
    )
    .unwrap()
}

pub fn domain_from(embeddings: &[Vec<f64>]) -> ArmDomain {
    ArmDomain::new(
        embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| Arm {
                id: format!("x{i}"),
                text: String::new(),
                embedding: e.clone(),
            })
            .collect(),
    )
    .unwrap()
}
