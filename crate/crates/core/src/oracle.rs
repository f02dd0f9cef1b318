//! Sources of preference feedback.
//!
//! [`BtlOracle`] simulates a user under the Bradley–Terry–Luce model over a
//! table of latent utilities. [`HumanChannel`] is the hand-off used when a
//! person supplies the verdicts instead.

use std::collections::HashMap;
use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ArmDomain, ContextualDomain};
use crate::error::{Error, Result};
use crate::math::{sigmoid, stream_rng, streams};

/// Target standard deviation of normalized utilities (variance 100).
pub const NORMALIZED_SD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SyntheticLinear,
    SyntheticQuadratic,
    SyntheticContextual,
    File,
}

/// Latent utility of every arm in one domain, in domain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    pub provenance: Provenance,
    scores: Vec<f64>,
}

impl UtilityTable {
    pub fn new(scores: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Config(format!("utility of arm {i} is not finite")));
        }
        Ok(Self { provenance, scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score(&self, arm: usize) -> Result<f64> {
        self.scores
            .get(arm)
            .copied()
            .ok_or_else(|| Error::UnknownArm(format!("#{arm}")))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Reads `{"id", "score"}` lines and aligns them with `domain`. Every arm
    /// must be covered; ids not in the domain are rejected.
    pub fn from_jsonl<R: BufRead>(source: R, domain: &ArmDomain) -> Result<Self> {
        let mut by_id: HashMap<String, f64> = HashMap::new();
        for (line, text) in source.lines().enumerate() {
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let row: ScoreLine =
                serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
                    line: line + 1,
                    reason: e.to_string(),
                })?;
            if domain.index_of(&row.id).is_none() {
                return Err(Error::UnknownArm(row.id));
            }
            if by_id.insert(row.id.clone(), row.score).is_some() {
                return Err(Error::DuplicateId(row.id));
            }
        }
        let scores = domain
            .arms()
            .iter()
            .map(|a| {
                by_id
                    .get(&a.id)
                    .copied()
                    .ok_or_else(|| Error::UnknownArm(a.id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(scores, Provenance::File)
    }

    pub fn to_jsonl(&self, domain: &ArmDomain) -> String {
        let mut out = String::new();
        for (arm, score) in domain.arms().iter().zip(&self.scores) {
            let line = ScoreLine {
                context_id: None,
                id: arm.id.clone(),
                score: *score,
            };
            out.push_str(&serde_json::to_string(&line).expect("score serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context_id: Option<String>,
    id: String,
    score: f64,
}

/// One utility table per context round, in round order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualUtility {
    pub tables: Vec<UtilityTable>,
}

impl ContextualUtility {
    /// Reads `{"context_id", "id", "score"}` lines and aligns them with the
    /// rounds of `domain`.
    pub fn from_jsonl<R: BufRead>(source: R, domain: &ContextualDomain) -> Result<Self> {
        let mut by_key: HashMap<(String, String), f64> = HashMap::new();
        for (line, text) in source.lines().enumerate() {
            let text = text?;
            if text.trim().is_empty() {
                continue;
            }
            let row: ScoreLine =
                serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
                    line: line + 1,
                    reason: e.to_string(),
                })?;
            let ctx = row.context_id.ok_or_else(|| Error::MalformedRecord {
                line: line + 1,
                reason: "missing context_id".into(),
            })?;
            let round = domain
                .round(&ctx)
                .ok_or_else(|| Error::UnknownContext(ctx.clone()))?;
            if round.arms.index_of(&row.id).is_none() {
                return Err(Error::UnknownArm(format!("{ctx}/{}", row.id)));
            }
            if by_key
                .insert((ctx.clone(), row.id.clone()), row.score)
                .is_some()
            {
                return Err(Error::DuplicateId(format!("{ctx}/{}", row.id)));
            }
        }
        let tables = domain
            .rounds()
            .iter()
            .map(|r| {
                let scores = r
                    .arms
                    .arms()
                    .iter()
                    .map(|a| {
                        by_key
                            .get(&(r.context_id.clone(), a.id.clone()))
                            .copied()
                            .ok_or_else(|| Error::UnknownArm(format!("{}/{}", r.context_id, a.id)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                UtilityTable::new(scores, Provenance::File)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tables })
    }

    pub fn to_jsonl(&self, domain: &ContextualDomain) -> String {
        let mut out = String::new();
        for (round, table) in domain.rounds().iter().zip(&self.tables) {
            for (arm, score) in round.arms.arms().iter().zip(table.scores()) {
                let line = ScoreLine {
                    context_id: Some(round.context_id.clone()),
                    id: arm.id.clone(),
                    score: *score,
                };
                out.push_str(&serde_json::to_string(&line).expect("score serializes"));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Standardize utilities to mean 0 and standard deviation 10 first.
    pub normalize: bool,
    /// Utilities are divided by this before the BTL draw; larger is noisier.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_scale > 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::Config("noise scale must be positive".into()));
        }
        Ok(())
    }
}

/// Probability that an arm with utility `u1` beats one with utility `u2`.
pub fn btl_probability(u1: f64, u2: f64) -> f64 {
    sigmoid(u1 - u2)
}

/// Affine map to sample mean 0 and sample standard deviation 10.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(Error::ConstantScores);
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::ConstantScores);
    }
    Ok(raw
        .iter()
        .map(|v| (v - mean) / sd * NORMALIZED_SD)
        .collect())
}

/// Bernoulli draw of `y = 1(first ≻ second)` from a (normalized) table.
pub fn sample_preference<R: Rng + ?Sized>(
    table: &UtilityTable,
    config: &OracleConfig,
    first: usize,
    second: usize,
    rng: &mut R,
) -> Result<u8> {
    let u1 = table.score(first)?;
    let u2 = table.score(second)?;
    let p = sigmoid((u1 - u2) / config.noise_scale);
    Ok(u8::from(rng.random::<f64>() < p))
}

/// Simulated user over one or more utility tables (one per context round).
#[derive(Debug, Clone, PartialEq)]
pub struct BtlOracle {
    tables: Vec<UtilityTable>,
    config: OracleConfig,
}

impl BtlOracle {
    pub fn new(table: UtilityTable, config: OracleConfig) -> Result<Self> {
        Self::from_tables(vec![table], config)
    }

    pub fn contextual(utility: ContextualUtility, config: OracleConfig) -> Result<Self> {
        Self::from_tables(utility.tables, config)
    }

    fn from_tables(tables: Vec<UtilityTable>, config: OracleConfig) -> Result<Self> {
        config.validate()?;
        if tables.is_empty() || tables.iter().any(|t| t.is_empty()) {
            return Err(Error::EmptyDomain);
        }
        let tables = if config.normalize {
            // One affine map over every entry keeps contexts comparable.
            let all: Vec<f64> = tables
                .iter()
                .flat_map(|t| t.scores.iter().copied())
                .collect();
            let mut normalized = normalize_scores(&all)?.into_iter();
            tables
                .into_iter()
                .map(|t| UtilityTable {
                    provenance: t.provenance,
                    scores: normalized.by_ref().take(t.scores.len()).collect(),
                })
                .collect()
        } else {
            tables
        };
        Ok(Self { tables, config })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn table(&self, round: usize) -> &UtilityTable {
        &self.tables[round]
    }

    pub fn rounds(&self) -> usize {
        self.tables.len()
    }

    /// Utility the metrics are reported in (after normalization, before the
    /// noise scale).
    pub fn true_score(&self, round: usize, arm: usize) -> Result<f64> {
        self.tables
            .get(round)
            .ok_or_else(|| Error::UnknownContext(format!("#{round}")))?
            .score(arm)
    }

    pub fn max_score(&self, round: usize) -> f64 {
        self.tables[round]
            .scores
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Verdict for the duel at `iteration`, from a generator dedicated to
    /// that iteration.
    pub fn feedback(
        &self,
        round: usize,
        first: usize,
        second: usize,
        iteration: u64,
    ) -> Result<u8> {
        let mut rng = stream_rng(self.config.seed, &[streams::ORACLE, iteration]);
        let table = self
            .tables
            .get(round)
            .ok_or_else(|| Error::UnknownContext(format!("#{round}")))?;
        sample_preference(table, &self.config, first, second, &mut rng)
    }
}

/// A duel waiting for a person's verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub iteration: u64,
    pub first: usize,
    pub second: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_id: Option<String>,
}

/// Single-slot hand-off between the optimization loop, which posts a duel,
/// and a person, who answers it. At most one query is outstanding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HumanChannel {
    pending: Option<PendingQuery>,
    last_answered: u64,
}

impl HumanChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&mut self, query: PendingQuery) -> Result<()> {
        if let Some(p) = &self.pending {
            return Err(Error::Config(format!(
                "iteration {} is still awaiting a verdict",
                p.iteration
            )));
        }
        if query.iteration <= self.last_answered {
            return Err(Error::DuplicateSubmit(query.iteration));
        }
        self.pending = Some(query);
        Ok(())
    }

    pub fn pending(&self) -> Option<&PendingQuery> {
        self.pending.as_ref()
    }

    pub fn last_answered(&self) -> u64 {
        self.last_answered
    }

    /// Answers the outstanding query. `iteration`, when given, must name it.
    pub fn submit(&mut self, y: u8, iteration: Option<u64>) -> Result<(PendingQuery, u8)> {
        if y > 1 {
            return Err(Error::InvalidRecord(format!("verdict {y} is not binary")));
        }
        if let Some(it) = iteration {
            if it <= self.last_answered {
                return Err(Error::DuplicateSubmit(it));
            }
        }
        let pending = self.pending.as_ref().ok_or(Error::NoPendingQuery)?;
        if let Some(it) = iteration {
            if it != pending.iteration {
                return Err(Error::NoPendingQuery);
            }
        }
        let query = self.pending.take().expect("checked");
        self.last_answered = query.iteration;
        Ok((query, y))
    }
}
