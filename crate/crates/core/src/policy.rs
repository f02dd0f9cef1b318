//! Pair-selection policies and the neural dueling policy itself.
//!
//! Every policy is driven through [`DuelingPolicy`]: the caller asks for a
//! pair given the history so far, records the verdict, hands the stored
//! record back through `absorb_record`, and asks for a report whenever it
//! needs the current best guess.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ArmDomain, ArmResolver};
use crate::error::{Error, Result};
use crate::history::{History, PreferenceRecord};
use crate::math::{argmax_by, derive_seed, stream_rng, streams};
use crate::net::{PairBatch, ScoreNet, TrainConfig, DEFAULT_WIDTHS};
use crate::uncertainty::{UncertaintyMode, UncertaintyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub exploration_nu: f64,
    pub lambda: f64,
    pub uncertainty_mode: UncertaintyMode,
    pub exclude_first_from_second: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            exploration_nu: 1.0,
            lambda: 0.1,
            uncertainty_mode: UncertaintyMode::Full,
            exclude_first_from_second: true,
        }
    }
}

impl PolicyConfig {
    /// Dense precision matrices are used up to this input dimension.
    pub const FULL_MATRIX_MAX_DIM: usize = 64;

    pub fn default_for_dim(d: usize) -> Self {
        Self {
            uncertainty_mode: if d <= Self::FULL_MATRIX_MAX_DIM {
                UncertaintyMode::Full
            } else {
                UncertaintyMode::Diagonal
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(self.exploration_nu >= 0.0) {
            return Err(Error::Config("exploration nu must be non-negative".into()));
        }
        Ok(())
    }
}

/// A chosen duel. `phi` is the gradient-difference feature for policies that
/// maintain one.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub first: usize,
    pub second: usize,
    pub phi: Option<Vec<f64>>,
}

impl Selection {
    pub fn is_self_duel(&self) -> bool {
        self.first == self.second
    }
}

/// What a policy sees when asked to act.
///
/// `iteration` names the model being used: selecting at iteration `t` trains
/// on the first `t − 1` iterations' records, and a report issued after
/// iteration `t` uses the model of iteration `t + 1`.
#[derive(Clone, Copy)]
pub struct RoundView<'a> {
    pub iteration: u64,
    pub domain: &'a ArmDomain,
    pub context_id: Option<&'a str>,
    pub history: &'a History,
    pub resolver: &'a dyn ArmResolver,
}

pub trait DuelingPolicy: Send {
    fn name(&self) -> &'static str;

    fn select(&mut self, view: &RoundView<'_>) -> Result<Selection>;

    /// Folds a stored record into the policy's exploration state.
    fn absorb_record(
        &mut self,
        record: &PreferenceRecord,
        resolver: &dyn ArmResolver,
    ) -> Result<()>;

    /// Best arm among `candidates` of `view.domain`.
    fn report(&mut self, view: &RoundView<'_>, candidates: &[usize]) -> Result<usize>;

    /// Confidence state, for policies that keep one.
    fn uncertainty(&self) -> Option<&UncertaintyState> {
        None
    }
}

/// Arm with the highest predicted score; lowest index on ties.
pub fn select_first(net: &ScoreNet, domain: &ArmDomain) -> Result<usize> {
    let scores = net.forward_batch(domain.embedding_matrix().view())?;
    argmax_by(scores.iter().copied().enumerate()).ok_or(Error::EmptyDomain)
}

/// Acquisition values `h(x) + ν‖∇h(x) − ∇h(x_first)‖_{V⁻¹}` for every arm.
pub fn acquisition_values(
    net: &ScoreNet,
    domain: &ArmDomain,
    first: usize,
    state: &UncertaintyState,
    nu: f64,
) -> Result<Array1<f64>> {
    let x = domain.embedding_matrix();
    let scores = net.forward_batch(x.view())?;
    if nu == 0.0 {
        return Ok(scores);
    }
    let mut grads = net.param_gradients(x.view())?;
    let anchor = grads.row(first).to_owned();
    for mut row in grads.rows_mut() {
        row -= &anchor;
    }
    // The anchor's own row is exactly zero, so its bonus is exactly zero.
    let bonus = state.uncertainty_rows(grads.view())?;
    Ok(scores + bonus * nu)
}

pub fn select_second(
    net: &ScoreNet,
    domain: &ArmDomain,
    first: usize,
    state: &UncertaintyState,
    nu: f64,
    exclude_first: bool,
) -> Result<usize> {
    if exclude_first && domain.len() < 2 {
        return Err(Error::TooFewArms {
            needed: 2,
            found: domain.len(),
        });
    }
    let values = acquisition_values(net, domain, first, state, nu)?;
    argmax_by(
        values
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, _)| !(exclude_first && i == first)),
    )
    .ok_or(Error::EmptyDomain)
}

/// Highest-scoring arm among the queried ones; lowest index on ties.
pub fn report_best(net: &ScoreNet, queried: &[usize], domain: &ArmDomain) -> Result<usize> {
    if queried.is_empty() {
        return Err(Error::EmptyQueriedSet);
    }
    let mut sorted = queried.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for i in sorted {
        let x = domain.arm(i).ok_or(Error::ArmOutOfRange {
            iteration: 0,
            index: i,
            size: domain.len(),
        })?;
        let s = net.forward(&x.embedding)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    Ok(best.expect("non-empty").0)
}

/// Two distinct arms drawn uniformly.
pub fn random_pair<R: Rng + ?Sized>(domain: &ArmDomain, rng: &mut R) -> Result<(usize, usize)> {
    let n = domain.len();
    if n < 2 {
        return Err(Error::TooFewArms {
            needed: 2,
            found: n,
        });
    }
    let first = rng.random_range(0..n);
    let mut second = rng.random_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    Ok((first, second))
}

/// How the neural policy picks its pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairRule {
    /// Greedy first arm, optimistic second arm.
    Ucb,
    /// Uniform random pairs; training and reporting unchanged.
    Random,
}

/// Caches the network trained for one model iteration.
#[derive(Debug, Clone)]
pub(crate) struct ModelCache {
    key: Option<(u64, usize)>,
    net: Option<ScoreNet>,
}

impl ModelCache {
    pub fn new() -> Self {
        Self {
            key: None,
            net: None,
        }
    }

    /// Network re-initialized with a per-iteration seed and trained on the
    /// whole history.
    pub fn get_or_train(
        &mut self,
        view: &RoundView<'_>,
        train: &TrainConfig,
        seed_tag: &[u64],
    ) -> Result<&ScoreNet> {
        let key = (view.iteration, view.history.len());
        if self.key != Some(key) {
            let d = view.domain.dim();
            let batch = PairBatch::from_history(view.history, view.resolver, d)?;
            let mut tags = seed_tag.to_vec();
            tags.push(view.iteration);
            let config = TrainConfig {
                init_seed: derive_seed(train.init_seed, &tags),
                ..train.clone()
            };
            self.net = Some(ScoreNet::train(d, &DEFAULT_WIDTHS, &batch, &config)?);
            self.key = Some(key);
        }
        Ok(self.net.as_ref().expect("trained"))
    }
}

/// The neural dueling policy.
#[derive(Debug, Clone)]
pub struct Apohf {
    config: PolicyConfig,
    train: TrainConfig,
    rule: PairRule,
    state: UncertaintyState,
    seed: u64,
    cache: ModelCache,
}

impl Apohf {
    pub fn new(d: usize, config: PolicyConfig, train: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        train.validate()?;
        let p = crate::net::param_count(d, &DEFAULT_WIDTHS);
        let state = UncertaintyState::new(config.uncertainty_mode, p, config.lambda)?;
        Ok(Self {
            config,
            train: TrainConfig {
                init_seed: derive_seed(seed, &[train.init_seed]),
                ..train
            },
            rule: PairRule::Ucb,
            state,
            seed,
            cache: ModelCache::new(),
        })
    }

    pub fn with_pair_rule(mut self, rule: PairRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &UncertaintyState {
        &self.state
    }

    /// Network for the given view, training it if needed.
    pub fn model(&mut self, view: &RoundView<'_>) -> Result<&ScoreNet> {
        self.cache
            .get_or_train(view, &self.train, &[streams::NET_INIT])
    }
}

impl DuelingPolicy for Apohf {
    fn name(&self) -> &'static str {
        match self.rule {
            PairRule::Ucb => "apohf",
            PairRule::Random => "apohf-random-pairs",
        }
    }

    fn select(&mut self, view: &RoundView<'_>) -> Result<Selection> {
        let (nu, exclude, rule, seed) = (
            self.config.exploration_nu,
            self.config.exclude_first_from_second,
            self.rule,
            self.seed,
        );
        let net = self
            .cache
            .get_or_train(view, &self.train, &[streams::NET_INIT])?;
        let (first, second) = match rule {
            PairRule::Ucb => {
                let first = select_first(net, view.domain)?;
                let second = select_second(net, view.domain, first, &self.state, nu, exclude)?;
                (first, second)
            }
            PairRule::Random => {
                let mut rng = stream_rng(seed, &[streams::RANDOM_PAIR, view.iteration]);
                random_pair(view.domain, &mut rng)?
            }
        };
        let phi = match rule {
            PairRule::Ucb => {
                let g1 = net.param_gradient(view.domain.embedding(first))?;
                let g2 = net.param_gradient(view.domain.embedding(second))?;
                Some(g1.iter().zip(&g2).map(|(a, b)| a - b).collect())
            }
            PairRule::Random => None,
        };
        Ok(Selection { first, second, phi })
    }

    fn absorb_record(
        &mut self,
        record: &PreferenceRecord,
        _resolver: &dyn ArmResolver,
    ) -> Result<()> {
        match (&record.phi, self.rule) {
            (Some(phi), _) => self.state.absorb(phi),
            (None, PairRule::Random) => Ok(()),
            (None, PairRule::Ucb) => Err(Error::InvalidRecord(format!(
                "record {} carries no gradient feature",
                record.iteration
            ))),
        }
    }

    fn report(&mut self, view: &RoundView<'_>, candidates: &[usize]) -> Result<usize> {
        let net = self.model(view)?;
        report_best(net, candidates, view.domain)
    }

    fn uncertainty(&self) -> Option<&UncertaintyState> {
        Some(&self.state)
    }
}
