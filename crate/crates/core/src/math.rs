//! Small numeric helpers shared across modules.

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)`, stable for large |z|.
pub fn log_sigmoid(z: f64) -> f64 {
    // ln σ(z) = -softplus(-z)
    -softplus(-z)
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// SplitMix64 finalizer; used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a seed for a named sub-stream from a base seed and a path of tags.
/// Every random draw in the crate goes through a generator seeded this way, so
/// iteration `t` of a run never depends on how many draws earlier iterations made.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

/// Seeded generator for a sub-stream.
pub fn stream_rng(base: u64, tags: &[u64]) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Stream tags. Kept in one place so no two consumers share a stream.
pub mod streams {
    pub const NET_INIT: u64 = 1;
    pub const ORACLE: u64 = 2;
    pub const RANDOM_PAIR: u64 = 3;
    pub const REPORT: u64 = 4;
    pub const TS_FIRST: u64 = 5;
    pub const TS_SECOND: u64 = 6;
    pub const ENSEMBLE: u64 = 7;
    pub const BOOTSTRAP: u64 = 8;
    pub const ENVIRONMENT: u64 = 9;
    pub const TRIAL: u64 = 10;
}

/// Index of the largest value, lowest index on ties. `None` for empty input.
pub fn argmax_by<I>(items: I) -> Option<usize>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
