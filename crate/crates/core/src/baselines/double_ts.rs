//! Double Thompson sampling over a deep ensemble: each of the two arms is the
//! argmax of an independently drawn ensemble member.

use rand::Rng;

use crate::domain::{ArmDomain, ArmResolver};
use crate::error::{Error, Result};
use crate::history::PreferenceRecord;
use crate::math::{argmax_by, derive_seed, stream_rng, streams};
use crate::net::{PairBatch, ScoreNet, TrainConfig, DEFAULT_WIDTHS};
use crate::policy::{DuelingPolicy, RoundView, Selection};

pub const ENSEMBLE_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    members: Vec<ScoreNet>,
}

impl EnsembleState {
    pub fn from_members(members: Vec<ScoreNet>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Config("empty ensemble".into()))?;
        if members
            .iter()
            .any(|m| m.input_dim() != first.input_dim() || m.widths() != first.widths())
        {
            return Err(Error::Config("ensemble members differ in shape".into()));
        }
        Ok(Self { members })
    }

    /// Trains every member from its own seed on the batch, optionally on a
    /// bootstrap resample of the duels.
    pub fn train(
        d: usize,
        batch: &PairBatch,
        train: &TrainConfig,
        base_seed: u64,
        bootstrap: bool,
    ) -> Result<Self> {
        let members = (0..ENSEMBLE_SIZE as u64)
            .map(|k| {
                let config = TrainConfig {
                    init_seed: derive_seed(base_seed, &[streams::ENSEMBLE, k]),
                    ..train.clone()
                };
                if bootstrap && !batch.pairs.is_empty() {
                    let mut rng = stream_rng(base_seed, &[streams::BOOTSTRAP, k]);
                    ScoreNet::train(d, &DEFAULT_WIDTHS, &batch.bootstrap(&mut rng), &config)
                } else {
                    ScoreNet::train(d, &DEFAULT_WIDTHS, batch, &config)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn members(&self) -> &[ScoreNet] {
        &self.members
    }

    /// Argmax of member `k` over `candidates` (all arms when `None`).
    pub fn member_argmax(
        &self,
        k: usize,
        domain: &ArmDomain,
        exclude: Option<usize>,
    ) -> Result<usize> {
        let scores = self.members[k].forward_batch(domain.embedding_matrix().view())?;
        argmax_by(
            scores
                .iter()
                .copied()
                .enumerate()
                .filter(|&(i, _)| Some(i) != exclude),
        )
        .ok_or(Error::TooFewArms {
            needed: 2,
            found: domain.len(),
        })
    }
}

/// One Thompson draw per arm; the second excludes the first.
pub fn double_ts_pair<R: Rng + ?Sized>(
    ensemble: &EnsembleState,
    domain: &ArmDomain,
    first_rng: &mut R,
    second_rng: &mut R,
) -> Result<(usize, usize)> {
    if domain.len() < 2 {
        return Err(Error::TooFewArms {
            needed: 2,
            found: domain.len(),
        });
    }
    let n = ensemble.members.len();
    let m1 = first_rng.random_range(0..n);
    let first = ensemble.member_argmax(m1, domain, None)?;
    let m2 = second_rng.random_range(0..n);
    let second = ensemble.member_argmax(m2, domain, Some(first))?;
    Ok((first, second))
}

/// Argmax over the queried arms of one uniformly drawn member.
pub fn double_ts_report<R: Rng + ?Sized>(
    ensemble: &EnsembleState,
    queried: &[usize],
    domain: &ArmDomain,
    rng: &mut R,
) -> Result<usize> {
    if queried.is_empty() {
        return Err(Error::EmptyQueriedSet);
    }
    let member = &ensemble.members[rng.random_range(0..ensemble.members.len())];
    let mut sorted = queried.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let scored = sorted
        .iter()
        .map(|&i| Ok((i, member.forward(domain.embedding(i))?)))
        .collect::<Result<Vec<_>>>()?;
    argmax_by(scored).ok_or(Error::EmptyQueriedSet)
}

#[derive(Debug, Clone)]
pub struct DoubleTs {
    train: TrainConfig,
    seed: u64,
    bootstrap: bool,
    cached: Option<((u64, usize), EnsembleState)>,
}

impl DoubleTs {
    pub fn new(train: TrainConfig, seed: u64) -> Result<Self> {
        train.validate()?;
        Ok(Self {
            train,
            seed,
            bootstrap: false,
            cached: None,
        })
    }

    pub fn with_bootstrap(mut self, on: bool) -> Self {
        self.bootstrap = on;
        self
    }

    /// Ensemble retrained from scratch on the full history for this view.
    pub fn ensemble(&mut self, view: &RoundView<'_>) -> Result<&EnsembleState> {
        let key = (view.iteration, view.history.len());
        if self.cached.as_ref().map(|(k, _)| *k) != Some(key) {
            let d = view.domain.dim();
            let batch = PairBatch::from_history(view.history, view.resolver, d)?;
            let seed = derive_seed(self.seed, &[streams::ENSEMBLE, view.iteration]);
            let ensemble = EnsembleState::train(d, &batch, &self.train, seed, self.bootstrap)?;
            self.cached = Some((key, ensemble));
        }
        Ok(&self.cached.as_ref().expect("trained").1)
    }
}

impl DuelingPolicy for DoubleTs {
    fn name(&self) -> &'static str {
        "doublets"
    }

    fn select(&mut self, view: &RoundView<'_>) -> Result<Selection> {
        let seed = self.seed;
        let ensemble = self.ensemble(view)?;
        let mut r1 = stream_rng(seed, &[streams::TS_FIRST, view.iteration]);
        let mut r2 = stream_rng(seed, &[streams::TS_SECOND, view.iteration]);
        let (first, second) = double_ts_pair(ensemble, view.domain, &mut r1, &mut r2)?;
        Ok(Selection {
            first,
            second,
            phi: None,
        })
    }

    fn absorb_record(
        &mut self,
        _record: &PreferenceRecord,
        _resolver: &dyn ArmResolver,
    ) -> Result<()> {
        Ok(())
    }

    fn report(&mut self, view: &RoundView<'_>, candidates: &[usize]) -> Result<usize> {
        let seed = self.seed;
        let ensemble = self.ensemble(view)?;
        let mut rng = stream_rng(seed, &[streams::REPORT, view.iteration]);
        double_ts_report(ensemble, candidates, view.domain, &mut rng)
    }
}
