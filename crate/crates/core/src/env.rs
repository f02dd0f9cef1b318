//! Synthetic environments with known ground-truth utilities.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Arm, ArmDomain, ContextRound, ContextualDomain};
use crate::error::{Error, Result};
use crate::math::{dot, stream_rng, streams};
use crate::oracle::{ContextualUtility, Provenance, UtilityTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// `u(x) = wᵀx`.
    Linear,
    /// `u(x) = −‖x − c‖²`.
    Quadratic,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(Error::Config(format!(
                "unknown synthetic utility {other:?}"
            ))),
        }
    }
}

fn normal_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

/// `n_arms` standard-normal embeddings of dimension `d` and their raw utilities.
pub fn synthetic(
    kind: SyntheticKind,
    n_arms: usize,
    d: usize,
    seed: u64,
) -> Result<(ArmDomain, UtilityTable)> {
    if n_arms == 0 || d == 0 {
        return Err(Error::Config(
            "synthetic domain needs arms and dimensions".into(),
        ));
    }
    let mut rng = stream_rng(seed, &[streams::ENVIRONMENT]);
    let param = normal_vec(
        &mut rng,
        d,
        if kind == SyntheticKind::Linear {
            1.0
        } else {
            0.5
        },
    );
    let arms: Vec<Arm> = (0..n_arms)
        .map(|i| Arm {
            id: format!("arm-{i}"),
            text: format!("synthetic candidate {i}"),
            embedding: normal_vec(&mut rng, d, 1.0),
        })
        .collect();
    let scores = arms
        .iter()
        .map(|a| match kind {
            SyntheticKind::Linear => dot(&param, &a.embedding),
            SyntheticKind::Quadratic => -a
                .embedding
                .iter()
                .zip(&param)
                .map(|(x, c)| (x - c).powi(2))
                .sum::<f64>(),
        })
        .collect();
    let provenance = match kind {
        SyntheticKind::Linear => Provenance::SyntheticLinear,
        SyntheticKind::Quadratic => Provenance::SyntheticQuadratic,
    };
    Ok((
        ArmDomain::new(arms)?,
        UtilityTable::new(scores, provenance)?,
    ))
}

/// Contextual environment: each arm embeds `[context, response]` and its
/// utility is `wᵀr + rᵀBq`, so the best response depends on the context.
pub fn synthetic_contextual(
    n_contexts: usize,
    n_candidates: usize,
    context_dim: usize,
    response_dim: usize,
    seed: u64,
) -> Result<(ContextualDomain, ContextualUtility)> {
    if n_contexts == 0 || n_candidates == 0 || response_dim == 0 {
        return Err(Error::Config(
            "contextual environment needs contexts and candidates".into(),
        ));
    }
    let mut rng = stream_rng(seed, &[streams::ENVIRONMENT]);
    let w = normal_vec(&mut rng, response_dim, 1.0);
    let b: Vec<Vec<f64>> = (0..response_dim)
        .map(|_| {
            normal_vec(
                &mut rng,
                context_dim,
                1.0 / (context_dim.max(1) as f64).sqrt(),
            )
        })
        .collect();
    let mut rounds = Vec::with_capacity(n_contexts);
    let mut tables = Vec::with_capacity(n_contexts);
    for k in 0..n_contexts {
        let q = normal_vec(&mut rng, context_dim, 1.0);
        let mut arms = Vec::with_capacity(n_candidates);
        let mut scores = Vec::with_capacity(n_candidates);
        for j in 0..n_candidates {
            let r = normal_vec(&mut rng, response_dim, 1.0);
            let interaction: f64 = r.iter().zip(&b).map(|(ri, row)| ri * dot(row, &q)).sum();
            scores.push(dot(&w, &r) + interaction);
            arms.push(Arm {
                id: format!("resp-{j}"),
                text: format!("response {j} to context {k}"),
                embedding: q.iter().chain(&r).copied().collect(),
            });
        }
        rounds.push(ContextRound {
            context_id: format!("ctx-{k}"),
            context_text: format!("synthetic context {k}"),
            arms: ArmDomain::new(arms)?,
        });
        tables.push(UtilityTable::new(scores, Provenance::SyntheticContextual)?);
    }
    Ok((ContextualDomain::new(rounds)?, ContextualUtility { tables }))
}
