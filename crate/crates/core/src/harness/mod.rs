//! Experiment driver: the optimization loop for any policy, the contextual
//! round-robin protocol, multi-trial sweeps and their result files.

mod suite;

pub use suite::{
    CellFailure, CellResult, CellSpec, EnvironmentSpec, IterationSummary, ResultsFile,
    SuiteOutcome, SuiteSpec,
};

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{DoubleTs, LinearDueling, RandomSearch};
use crate::domain::{ArmDomain, ArmResolver, ContextualDomain};
use crate::error::{Error, Result};
use crate::history::{History, PreferenceRecord};
use crate::net::TrainConfig;
use crate::oracle::{BtlOracle, OracleConfig};
use crate::policy::{Apohf, DuelingPolicy, PairRule, PolicyConfig, RoundView};
use crate::uncertainty::UncertaintyMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Apohf,
    Random,
    Linear,
    Doublets,
    ApohfRandomPairs,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Apohf => "apohf",
            Self::Random => "random",
            Self::Linear => "linear",
            Self::Doublets => "doublets",
            Self::ApohfRandomPairs => "apohf-random-pairs",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apohf" => Ok(Self::Apohf),
            "random" => Ok(Self::Random),
            "linear" => Ok(Self::Linear),
            "doublets" => Ok(Self::Doublets),
            "apohf-random-pairs" => Ok(Self::ApohfRandomPairs),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

/// Which policy to run and its knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub nu: f64,
    pub lambda: f64,
    /// `None` picks full matrices for small inputs and diagonal otherwise.
    pub uncertainty: Option<UncertaintyMode>,
    pub exclude_first: bool,
    /// DoubleTS only: train members on bootstrap resamples.
    #[serde(default)]
    pub bootstrap: bool,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self::of(PolicyKind::Apohf)
    }
}

impl PolicySpec {
    pub fn of(kind: PolicyKind) -> Self {
        let base = PolicyConfig::default();
        Self {
            kind,
            nu: base.exploration_nu,
            lambda: base.lambda,
            uncertainty: None,
            exclude_first: base.exclude_first_from_second,
            bootstrap: false,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn policy_config(&self, d: usize) -> PolicyConfig {
        let mut config = PolicyConfig::default_for_dim(d);
        config.exploration_nu = self.nu;
        config.lambda = self.lambda;
        config.exclude_first_from_second = self.exclude_first;
        if let Some(mode) = self.uncertainty {
            config.uncertainty_mode = mode;
        }
        config
    }

    /// Fresh policy for inputs of dimension `d`.
    pub fn build(
        &self,
        d: usize,
        train: &TrainConfig,
        seed: u64,
    ) -> Result<Box<dyn DuelingPolicy>> {
        let config = self.policy_config(d);
        Ok(match self.kind {
            PolicyKind::Apohf => Box::new(Apohf::new(d, config, train.clone(), seed)?),
            PolicyKind::ApohfRandomPairs => Box::new(
                Apohf::new(d, config, train.clone(), seed)?.with_pair_rule(PairRule::Random),
            ),
            PolicyKind::Random => Box::new(RandomSearch::new(seed)),
            PolicyKind::Linear => Box::new(LinearDueling::new(
                d,
                self.nu,
                self.lambda,
                self.exclude_first,
            )?),
            PolicyKind::Doublets => {
                Box::new(DoubleTs::new(train.clone(), seed)?.with_bootstrap(self.bootstrap))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: u64,
    pub seed: u64,
    pub trials: usize,
    pub policy: PolicySpec,
    pub oracle: OracleConfig,
    pub train: TrainConfig,
    /// Scale every embedding to unit length before any policy sees it.
    pub unit_norm: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 150,
            seed: 0,
            trials: 2,
            policy: PolicySpec::default(),
            oracle: OracleConfig::default(),
            train: TrainConfig::default(),
            unit_norm: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.oracle.validate()?;
        self.train.validate()?;
        self.policy.policy_config(1).validate()
    }
}

/// The arms on offer: one fixed set, or context rounds visited in order.
#[derive(Debug, Clone, Copy)]
pub enum TrialDomain<'a> {
    Fixed(&'a ArmDomain),
    Contextual(&'a ContextualDomain),
}

impl<'a> TrialDomain<'a> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Fixed(d) => d.dim(),
            Self::Contextual(c) => c.dim(),
        }
    }

    pub fn rounds(&self) -> usize {
        match self {
            Self::Fixed(_) => 1,
            Self::Contextual(c) => c.len(),
        }
    }

    /// Round index, arms and context id in force at iteration `t`.
    pub fn at(&self, t: u64) -> (usize, &'a ArmDomain, Option<&'a str>) {
        match *self {
            Self::Fixed(d) => (0, d, None),
            Self::Contextual(c) => {
                let k = ((t - 1) % c.len() as u64) as usize;
                let r = &c.rounds()[k];
                (k, &r.arms, Some(r.context_id.as_str()))
            }
        }
    }

    pub fn round(&self, k: usize) -> (&'a ArmDomain, Option<&'a str>) {
        match *self {
            Self::Fixed(d) => (d, None),
            Self::Contextual(c) => {
                let r = &c.rounds()[k];
                (&r.arms, Some(r.context_id.as_str()))
            }
        }
    }

    pub fn resolver(&self) -> &'a dyn ArmResolver {
        match *self {
            Self::Fixed(d) => d,
            Self::Contextual(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_id: Option<String>,
    pub first: usize,
    pub second: usize,
    /// `None` when the pair was a self-duel and no question was asked.
    pub outcome: Option<u8>,
    /// Report after this iteration (for the context queried at `t`).
    pub best: usize,
    pub best_id: String,
    /// True utility of the report; in contextual runs the mean over every
    /// context of the true utility of that context's report, each chosen
    /// among the arms already queried in that context.
    pub true_score: f64,
    /// Best true utility among all arms queried so far.
    pub queried_max: f64,
    /// Reported arm id per context (contextual runs only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_best_ids: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub policy: String,
    pub iterations: Vec<IterationResult>,
    pub history: History,
    /// Largest attainable metric: the domain maximum, or the mean of the
    /// per-context maxima.
    pub domain_max: f64,
}

impl TrialResult {
    pub fn final_iteration(&self) -> &IterationResult {
        self.iterations.last().expect("horizon is at least one")
    }

    pub fn final_score(&self) -> f64 {
        self.final_iteration().true_score
    }

    pub fn scores(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.true_score).collect()
    }

    /// Same trial without timings, for equality checks.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for it in &mut out.iterations {
            it.seconds = 0.0;
        }
        out
    }
}

/// Runs the loop on one fixed domain for `config.horizon` iterations.
pub fn run_trial(
    policy: &mut dyn DuelingPolicy,
    domain: &ArmDomain,
    oracle: &BtlOracle,
    config: &RunConfig,
) -> Result<TrialResult> {
    if oracle.table(0).len() != domain.len() {
        return Err(Error::Config(format!(
            "utility table covers {} arms, domain has {}",
            oracle.table(0).len(),
            domain.len()
        )));
    }
    if config.unit_norm {
        let normalized = domain.unit_normalized();
        run_loop(policy, TrialDomain::Fixed(&normalized), oracle, config)
    } else {
        run_loop(policy, TrialDomain::Fixed(domain), oracle, config)
    }
}

/// Runs the round-robin contextual protocol: iteration `t` offers the arms
/// of round `(t − 1) mod R`, while history and model are shared.
pub fn run_contextual_trial(
    policy: &mut dyn DuelingPolicy,
    rounds: &ContextualDomain,
    oracle: &BtlOracle,
    config: &RunConfig,
) -> Result<TrialResult> {
    if oracle.rounds() != rounds.len()
        || rounds
            .rounds()
            .iter()
            .enumerate()
            .any(|(k, r)| oracle.table(k).len() != r.arms.len())
    {
        return Err(Error::Config(
            "utility tables do not match the context rounds".into(),
        ));
    }
    if config.unit_norm {
        let normalized = rounds.unit_normalized();
        run_loop(policy, TrialDomain::Contextual(&normalized), oracle, config)
    } else {
        run_loop(policy, TrialDomain::Contextual(rounds), oracle, config)
    }
}

fn run_loop(
    policy: &mut dyn DuelingPolicy,
    domain: TrialDomain<'_>,
    oracle: &BtlOracle,
    config: &RunConfig,
) -> Result<TrialResult> {
    config.validate()?;
    let resolver = domain.resolver();
    let contextual = matches!(domain, TrialDomain::Contextual(_));
    let mut history = History::new();
    // Arms shown to the user so far, per round; self-duels count as shown.
    let mut shown: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); domain.rounds()];
    let mut queried_max = f64::NEG_INFINITY;
    let mut iterations = Vec::with_capacity(config.horizon as usize);
    let domain_max = (0..domain.rounds())
        .map(|k| oracle.max_score(k))
        .sum::<f64>()
        / domain.rounds() as f64;

    for t in 1..=config.horizon {
        let start = Instant::now();
        let wrap = |source: Error| Error::Trial {
            iteration: t,
            source: Box::new(source),
        };
        let (k, arms, context_id) = domain.at(t);
        let view = RoundView {
            iteration: t,
            domain: arms,
            context_id,
            history: &history,
            resolver,
        };
        let selection = policy.select(&view).map_err(wrap)?;
        let outcome = if selection.is_self_duel() {
            None
        } else {
            let y = oracle
                .feedback(k, selection.first, selection.second, t)
                .map_err(wrap)?;
            let mut record = PreferenceRecord::new(t, selection.first, selection.second, y);
            if let Some(phi) = &selection.phi {
                record = record.with_phi(phi.clone());
            }
            if let Some(c) = context_id {
                record = record.with_context(c);
            }
            policy.absorb_record(&record, resolver).map_err(wrap)?;
            history.append(record).map_err(wrap)?;
            Some(y)
        };
        for arm in [selection.first, selection.second] {
            shown[k].insert(arm);
            queried_max = queried_max.max(oracle.true_score(k, arm).map_err(wrap)?);
        }

        // The report uses the model of the next iteration (trained on D_t).
        let report_for = |policy: &mut dyn DuelingPolicy, round: usize, candidates: &[usize]| {
            let (arms, context_id) = domain.round(round);
            let view = RoundView {
                iteration: t + 1,
                domain: arms,
                context_id,
                history: &history,
                resolver,
            };
            policy.report(&view, candidates)
        };
        let (best, true_score, context_best_ids) = if contextual {
            let mut ids = Vec::with_capacity(domain.rounds());
            let mut total = 0.0;
            let mut best_here = 0;
            for round in 0..domain.rounds() {
                let (arms, _) = domain.round(round);
                // A context not visited yet has no queried arms to choose from.
                let candidates: Vec<usize> = if shown[round].is_empty() {
                    (0..arms.len()).collect()
                } else {
                    shown[round].iter().copied().collect()
                };
                let b = report_for(policy, round, &candidates).map_err(wrap)?;
                total += oracle.true_score(round, b).map_err(wrap)?;
                ids.push(arms.arms()[b].id.clone());
                if round == k {
                    best_here = b;
                }
            }
            (best_here, total / domain.rounds() as f64, ids)
        } else {
            let candidates: Vec<usize> = shown[0].iter().copied().collect();
            let b = report_for(policy, 0, &candidates).map_err(wrap)?;
            (b, oracle.true_score(0, b).map_err(wrap)?, Vec::new())
        };
        iterations.push(IterationResult {
            t,
            context_id: context_id.map(str::to_owned),
            first: selection.first,
            second: selection.second,
            outcome,
            best,
            best_id: arms.arms()[best].id.clone(),
            true_score,
            queried_max,
            context_best_ids,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrialResult {
        policy: policy.name().to_owned(),
        iterations,
        history,
        domain_max,
    })
}

/// A logged duel that a fresh policy would not have chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub iteration: u64,
    pub logged: (usize, usize),
    pub replayed: (usize, usize),
}

/// Re-derives every logged pair with `policy` (which must be fresh), showing
/// it only the records that precede each one. Returns the disagreements.
pub fn replay_selections(
    policy: &mut dyn DuelingPolicy,
    domain: TrialDomain<'_>,
    history: &History,
) -> Result<Vec<ReplayMismatch>> {
    let resolver = domain.resolver();
    let mut mismatches = Vec::new();
    for (n, record) in history.records().iter().enumerate() {
        let prefix = history.prefix(n);
        let (_, arms, context_id) = domain.at(record.iteration);
        let view = RoundView {
            iteration: record.iteration,
            domain: arms,
            context_id,
            history: &prefix,
            resolver,
        };
        let selection = policy.select(&view)?;
        let same_phi = match (&selection.phi, &record.phi) {
            (Some(a), Some(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (None, None) => true,
            _ => false,
        };
        if (selection.first, selection.second) != (record.first, record.second) || !same_phi {
            mismatches.push(ReplayMismatch {
                iteration: record.iteration,
                logged: (record.first, record.second),
                replayed: (selection.first, selection.second),
            });
        }
        policy.absorb_record(record, resolver)?;
    }
    Ok(mismatches)
}
