//! Candidate arms and the domains they live in.
//!
//! Embeddings are ingested from line-delimited JSON and treated as opaque
//! feature vectors. Two layouts are accepted: one arm per line for a fixed
//! domain, and one context (with its candidate list) per line for the
//! contextual setting.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One candidate: a prompt, or a context-response pair in the contextual setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub id: String,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// A non-empty, ordered set of arms sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Arm>", into = "Vec<Arm>")]
pub struct ArmDomain {
    arms: Vec<Arm>,
    dim: usize,
}

impl ArmDomain {
    pub fn new(arms: Vec<Arm>) -> Result<Self> {
        let first = arms.first().ok_or(Error::EmptyDomain)?;
        let dim = first.embedding.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                line: 1,
                expected: 1,
                found: 0,
            });
        }
        let mut seen = HashSet::with_capacity(arms.len());
        for (i, arm) in arms.iter().enumerate() {
            if arm.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: arm.embedding.len(),
                });
            }
            if let Some(position) = arm.embedding.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEmbedding {
                    line: i + 1,
                    position,
                });
            }
            if !seen.insert(arm.id.as_str()) {
                return Err(Error::DuplicateId(arm.id.clone()));
            }
        }
        Ok(Self { arms, dim })
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn arm(&self, index: usize) -> Option<&Arm> {
        self.arms.get(index)
    }

    pub fn embedding(&self, index: usize) -> &[f64] {
        &self.arms[index].embedding
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.arms.iter().position(|a| a.id == id)
    }

    /// Row-major `len × dim` copy of all embeddings.
    pub fn embedding_matrix(&self) -> ndarray::Array2<f64> {
        let flat: Vec<f64> = self
            .arms
            .iter()
            .flat_map(|a| a.embedding.iter().copied())
            .collect();
        ndarray::Array2::from_shape_vec((self.len(), self.dim), flat)
            .expect("shape checked at construction")
    }

    /// Rescales every embedding to unit Euclidean norm (zero vectors stay zero).
    pub fn unit_normalized(&self) -> Self {
        let arms = self
            .arms
            .iter()
            .map(|a| {
                let norm = a.embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
                let embedding = if norm > 0.0 {
                    a.embedding.iter().map(|v| v / norm).collect()
                } else {
                    a.embedding.clone()
                };
                Arm {
                    embedding,
                    ..a.clone()
                }
            })
            .collect();
        Self {
            arms,
            dim: self.dim,
        }
    }

    /// Serializes in the line-delimited arm format `load_domain` reads.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for arm in &self.arms {
            out.push_str(&serde_json::to_string(arm).expect("arm serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical line-delimited form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

impl TryFrom<Vec<Arm>> for ArmDomain {
    type Error = Error;
    fn try_from(arms: Vec<Arm>) -> Result<Self> {
        Self::new(arms)
    }
}

impl From<ArmDomain> for Vec<Arm> {
    fn from(d: ArmDomain) -> Self {
        d.arms
    }
}

/// One round of the contextual setting: the context plus its candidate arms,
/// whose embeddings already encode the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRound {
    pub context_id: String,
    #[serde(default)]
    pub context_text: String,
    pub arms: ArmDomain,
}

/// An ordered list of context rounds with a shared embedding dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ContextRound>", into = "Vec<ContextRound>")]
pub struct ContextualDomain {
    rounds: Vec<ContextRound>,
    index: HashMap<String, usize>,
}

impl ContextualDomain {
    pub fn new(rounds: Vec<ContextRound>) -> Result<Self> {
        let dim = rounds.first().ok_or(Error::EmptyDomain)?.arms.dim();
        let mut index = HashMap::with_capacity(rounds.len());
        for (i, round) in rounds.iter().enumerate() {
            if round.arms.dim() != dim {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: round.arms.dim(),
                });
            }
            if index.insert(round.context_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(round.context_id.clone()));
            }
        }
        Ok(Self { rounds, index })
    }

    pub fn rounds(&self) -> &[ContextRound] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rounds[0].arms.dim()
    }

    /// Round used at 1-based iteration `t` under the fixed round-robin order.
    pub fn round_for_iteration(&self, t: u64) -> &ContextRound {
        let r = ((t - 1) % self.rounds.len() as u64) as usize;
        &self.rounds[r]
    }

    pub fn round(&self, context_id: &str) -> Option<&ContextRound> {
        self.index.get(context_id).map(|&i| &self.rounds[i])
    }

    pub fn unit_normalized(&self) -> Self {
        let rounds = self
            .rounds
            .iter()
            .map(|r| ContextRound {
                arms: r.arms.unit_normalized(),
                ..r.clone()
            })
            .collect();
        Self {
            rounds,
            index: self.index.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            let line = ContextLine {
                context_id: r.context_id.clone(),
                context_text: r.context_text.clone(),
                candidates: r.arms.arms().iter().cloned().map(RawArm::from).collect(),
            };
            out.push_str(&serde_json::to_string(&line).expect("context serializes"));
            out.push('\n');
        }
        out
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

impl TryFrom<Vec<ContextRound>> for ContextualDomain {
    type Error = Error;
    fn try_from(rounds: Vec<ContextRound>) -> Result<Self> {
        Self::new(rounds)
    }
}

impl From<ContextualDomain> for Vec<ContextRound> {
    fn from(d: ContextualDomain) -> Self {
        d.rounds
    }
}

/// Wire form of an arm. Embedding entries are kept as raw JSON values so a
/// non-numeric entry is reported as a non-finite embedding rather than a
/// generic parse failure.
#[derive(Serialize, Deserialize)]
struct RawArm {
    id: String,
    #[serde(default)]
    text: String,
    embedding: Vec<serde_json::Value>,
}

impl From<Arm> for RawArm {
    fn from(a: Arm) -> Self {
        Self {
            id: a.id,
            text: a.text,
            embedding: a
                .embedding
                .into_iter()
                .map(serde_json::Value::from)
                .collect(),
        }
    }
}

impl RawArm {
    fn into_arm(self, line: usize) -> Result<Arm> {
        let embedding = self
            .embedding
            .iter()
            .enumerate()
            .map(|(position, v)| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or(Error::NonFiniteEmbedding { line, position })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Arm {
            id: self.id,
            text: self.text,
            embedding,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ContextLine {
    context_id: String,
    #[serde(default)]
    context_text: String,
    candidates: Vec<RawArm>,
}

fn lines<R: BufRead>(source: R) -> impl Iterator<Item = Result<(usize, String)>> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn parse_line<T: serde::de::DeserializeOwned>(line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
        line,
        reason: e.to_string(),
    })
}

/// Reads a fixed domain: one `{"id", "text", "embedding"}` object per line.
/// Arm order equals file order.
pub fn load_domain<R: BufRead>(source: R) -> Result<ArmDomain> {
    let mut arms = Vec::new();
    let mut dim = None;
    for item in lines(source) {
        let (line, text) = item?;
        let arm = parse_line::<RawArm>(line, &text)?.into_arm(line)?;
        let expected = *dim.get_or_insert(arm.embedding.len());
        if arm.embedding.len() != expected || expected == 0 {
            return Err(Error::DimensionMismatch {
                line,
                expected,
                found: arm.embedding.len(),
            });
        }
        arms.push(arm);
    }
    ArmDomain::new(arms)
}

/// Reads a contextual domain: one `{"context_id", "context_text", "candidates"}`
/// object per line.
pub fn load_contextual<R: BufRead>(source: R) -> Result<ContextualDomain> {
    let mut rounds = Vec::new();
    let mut dim = None;
    for item in lines(source) {
        let (line, text) = item?;
        let raw: ContextLine = parse_line(line, &text)?;
        if raw.candidates.is_empty() {
            return Err(Error::EmptyContext {
                line,
                context_id: raw.context_id,
            });
        }
        let arms = raw
            .candidates
            .into_iter()
            .map(|a| a.into_arm(line))
            .collect::<Result<Vec<_>>>()?;
        let arms = ArmDomain::new(arms).map_err(|e| match e {
            Error::DimensionMismatch {
                expected, found, ..
            } => Error::DimensionMismatch {
                line,
                expected,
                found,
            },
            other => other,
        })?;
        let expected = *dim.get_or_insert(arms.dim());
        if arms.dim() != expected {
            return Err(Error::DimensionMismatch {
                line,
                expected,
                found: arms.dim(),
            });
        }
        rounds.push(ContextRound {
            context_id: raw.context_id,
            context_text: raw.context_text,
            arms,
        });
    }
    ContextualDomain::new(rounds)
}

/// Maps a preference record's arm indices back to embeddings. A fixed domain
/// ignores the context; a contextual domain looks the context up.
pub trait ArmResolver {
    fn domain_for(&self, context_id: Option<&str>) -> Result<&ArmDomain>;
}

impl ArmResolver for ArmDomain {
    fn domain_for(&self, _context_id: Option<&str>) -> Result<&ArmDomain> {
        Ok(self)
    }
}

impl ArmResolver for ContextualDomain {
    fn domain_for(&self, context_id: Option<&str>) -> Result<&ArmDomain> {
        let id = context_id.ok_or_else(|| Error::UnknownContext(String::new()))?;
        self.round(id)
            .map(|r| &r.arms)
            .ok_or_else(|| Error::UnknownContext(id.to_string()))
    }
}
