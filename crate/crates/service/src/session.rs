//! One optimization loop driven by a person's verdicts.
//!
//! A [`Session`] owns its history and policy. Its persisted form,
//! [`Snapshot`], holds the records (with their gradient features) together
//! with the derived confidence state, pending pair and best arm;
//! [`Session::restore`] rebuilds the policy from the records and refuses
//! snapshots whose stored state the replay does not reproduce exactly.

use std::collections::BTreeMap;

use apohf_core::domain::{ArmDomain, ContextualDomain};
use apohf_core::harness::{PolicyKind, PolicySpec, TrialDomain};
use apohf_core::history::{History, PreferenceRecord};
use apohf_core::net::TrainConfig;
use apohf_core::oracle::{HumanChannel, PendingQuery};
use apohf_core::policy::{DuelingPolicy, RoundView};
use apohf_core::uncertainty::{UncertaintyMode, UncertaintyState};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub policy: PolicyKind,
    pub nu: f64,
    pub lambda: f64,
    pub uncertainty: Option<UncertaintyMode>,
    pub exclude_first: bool,
    pub seed: u64,
    pub epochs: usize,
    /// Scale every embedding to unit length before use.
    pub unit_norm: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let spec = PolicySpec::default();
        Self {
            policy: spec.kind,
            nu: spec.nu,
            lambda: spec.lambda,
            uncertainty: None,
            exclude_first: true,
            seed: 0,
            epochs: TrainConfig::default().epochs,
            unit_norm: false,
        }
    }
}

impl SessionConfig {
    fn policy_spec(&self) -> PolicySpec {
        PolicySpec {
            kind: self.policy,
            nu: self.nu,
            lambda: self.lambda,
            uncertainty: self.uncertainty,
            exclude_first: self.exclude_first,
            bootstrap: false,
        }
    }

    fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            init_seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> ServiceResult<()> {
        if !self.exclude_first {
            return Err(ServiceError::Validation(
                "live sessions require exclude_first: a self-duel cannot be shown to a person"
                    .into(),
            ));
        }
        if self.policy == PolicyKind::ApohfRandomPairs {
            return Err(ServiceError::Validation(
                "apohf-random-pairs is an ablation, not a live policy".into(),
            ));
        }
        self.policy_spec().policy_config(1).validate()?;
        self.train().validate()?;
        Ok(())
    }

    fn build(&self, d: usize) -> ServiceResult<Box<dyn DuelingPolicy>> {
        Ok(self.policy_spec().build(d, &self.train(), self.seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SessionDomain {
    Fixed { arms: ArmDomain },
    Contextual { rounds: ContextualDomain },
}

impl SessionDomain {
    fn view(&self) -> TrialDomain<'_> {
        match self {
            Self::Fixed { arms } => TrialDomain::Fixed(arms),
            Self::Contextual { rounds } => TrialDomain::Contextual(rounds),
        }
    }

    pub fn content_hash(&self) -> String {
        match self {
            Self::Fixed { arms } => arms.content_hash(),
            Self::Contextual { rounds } => rounds.content_hash(),
        }
    }

    fn dim(&self) -> usize {
        self.view().dim()
    }

    fn min_round_size(&self) -> usize {
        match self {
            Self::Fixed { arms } => arms.len(),
            Self::Contextual { rounds } => rounds
                .rounds()
                .iter()
                .map(|r| r.arms.len())
                .min()
                .unwrap_or(0),
        }
    }

    fn context(&self, context_id: Option<&str>) -> Option<ContextView> {
        match (self, context_id) {
            (Self::Contextual { rounds }, Some(id)) => rounds.round(id).map(|r| ContextView {
                id: r.context_id.clone(),
                text: r.context_text.clone(),
            }),
            _ => None,
        }
    }

    pub fn summary(&self) -> DomainSummary {
        match self {
            Self::Fixed { arms } => DomainSummary {
                kind: "fixed",
                arms: arms.len(),
                contexts: None,
                dim: arms.dim(),
                sha256: arms.content_hash(),
            },
            Self::Contextual { rounds } => DomainSummary {
                kind: "contextual",
                arms: rounds.rounds().iter().map(|r| r.arms.len()).sum(),
                contexts: Some(rounds.len()),
                dim: rounds.dim(),
                sha256: rounds.content_hash(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmView {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextView {
    pub id: String,
    pub text: String,
}

/// The duel currently shown to the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    pub iteration: u64,
    pub first: ArmView,
    pub second: ArmView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestView {
    pub id: String,
    pub text: String,
    /// Completed iterations behind this report.
    pub iteration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub pair: PairView,
    pub best: BestView,
    pub iteration: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub kind: &'static str,
    pub arms: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contexts: Option<usize>,
    pub dim: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub first_id: String,
    pub second_id: String,
    pub chosen: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_id: Option<String>,
}

/// Everything a client may see about a session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublicState {
    pub session_id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub config: SessionConfig,
    pub domain: DomainSummary,
    pub iteration: u64,
    pub pending: Option<PairView>,
    pub best: Option<BestView>,
    pub history: Vec<HistoryEntry>,
}

/// Persisted session. Derived state is stored alongside `history` and
/// checked against a replay of it on restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub config: SessionConfig,
    pub domain_sha256: String,
    pub domain: SessionDomain,
    pub history: History,
    pub channel: HumanChannel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending_phi: Option<Vec<f64>>,
    pub best: Option<BestView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyState>,
    /// Idempotency tokens and the response each one produced.
    #[serde(default)]
    pub tokens: BTreeMap<String, SubmitOutcome>,
}

pub struct Session {
    id: String,
    created_at: u64,
    updated_at: u64,
    config: SessionConfig,
    domain: SessionDomain,
    history: History,
    channel: HumanChannel,
    pending_phi: Option<Vec<f64>>,
    best: Option<BestView>,
    tokens: BTreeMap<String, SubmitOutcome>,
    policy: Box<dyn DuelingPolicy>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("iteration", &self.history.len())
            .finish_non_exhaustive()
    }
}

impl Session {
    /// New session with its first pair already selected (the network for
    /// the first pair is trained on an empty history).
    pub fn create(
        id: String,
        domain: SessionDomain,
        config: SessionConfig,
        now: u64,
    ) -> ServiceResult<Self> {
        config.validate()?;
        if domain.min_round_size() < 2 {
            return Err(ServiceError::Validation(
                "every domain or context needs at least two candidates".into(),
            ));
        }
        let domain = match domain {
            SessionDomain::Fixed { arms } if config.unit_norm => SessionDomain::Fixed {
                arms: arms.unit_normalized(),
            },
            SessionDomain::Contextual { rounds } if config.unit_norm => SessionDomain::Contextual {
                rounds: rounds.unit_normalized(),
            },
            other => other,
        };
        let policy = config.build(domain.dim())?;
        let mut session = Self {
            id,
            created_at: now,
            updated_at: now,
            config,
            domain,
            history: History::new(),
            channel: HumanChannel::new(),
            pending_phi: None,
            best: None,
            tokens: BTreeMap::new(),
            policy,
        };
        session.pose_next()?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn completed(&self) -> u64 {
        self.history.len() as u64
    }

    fn pose_next(&mut self) -> ServiceResult<()> {
        let t = self.completed() + 1;
        let domain = self.domain.view();
        let (_, arms, context_id) = domain.at(t);
        let view = RoundView {
            iteration: t,
            domain: arms,
            context_id,
            history: &self.history,
            resolver: domain.resolver(),
        };
        let selection = self.policy.select(&view)?;
        if selection.is_self_duel() {
            return Err(ServiceError::Internal("policy proposed a self-duel".into()));
        }
        self.channel.post(PendingQuery {
            iteration: t,
            first: selection.first,
            second: selection.second,
            context_id: context_id.map(str::to_owned),
        })?;
        self.pending_phi = selection.phi;
        Ok(())
    }

    /// Report for the context of the last completed iteration, among the arms
    /// queried in that context.
    fn compute_best(&mut self) -> ServiceResult<Option<BestView>> {
        let Some(last) = self.history.records().last() else {
            return Ok(None);
        };
        let t = last.iteration;
        let domain = self.domain.view();
        let (_, arms, context_id) = domain.at(t);
        let queried = self.history.queried_arms(context_id);
        let view = RoundView {
            iteration: t + 1,
            domain: arms,
            context_id,
            history: &self.history,
            resolver: domain.resolver(),
        };
        let best = self.policy.report(&view, &queried)?;
        let arm = &arms.arms()[best];
        Ok(Some(BestView {
            id: arm.id.clone(),
            text: arm.text.clone(),
            iteration: self.completed(),
            context_id: context_id.map(str::to_owned),
        }))
    }

    fn arm_view(&self, context_id: Option<&str>, index: usize) -> ArmView {
        let arms = self.arms_for(context_id);
        let arm = &arms.arms()[index];
        ArmView {
            id: arm.id.clone(),
            text: arm.text.clone(),
        }
    }

    fn arms_for(&self, context_id: Option<&str>) -> &ArmDomain {
        self.domain
            .view()
            .resolver()
            .domain_for(context_id)
            .expect("stored context ids resolve")
    }

    pub fn pending(&self) -> Option<PairView> {
        self.channel.pending().map(|q| PairView {
            iteration: q.iteration,
            first: self.arm_view(q.context_id.as_deref(), q.first),
            second: self.arm_view(q.context_id.as_deref(), q.second),
            context: self.domain.context(q.context_id.as_deref()),
        })
    }

    pub fn has_token(&self, token: &str) -> bool {
        self.tokens.contains_key(token)
    }

    pub fn best(&self) -> Option<&BestView> {
        self.best.as_ref()
    }

    /// Records the verdict on the pending pair, retrains, and poses the next
    /// pair. A repeated `token` returns the response it first produced.
    /// `iteration`, when given, must name the pending pair.
    pub fn submit(
        &mut self,
        chosen: Side,
        token: Option<&str>,
        iteration: Option<u64>,
        now: u64,
    ) -> ServiceResult<SubmitOutcome> {
        if let Some(done) = token.and_then(|t| self.tokens.get(t)) {
            return Ok(done.clone());
        }
        if let (Some(it), Some(p)) = (iteration, self.channel.pending()) {
            if it != p.iteration {
                return Err(ServiceError::Conflict(format!(
                    "iteration {it} is not pending; the pending pair is iteration {}",
                    p.iteration
                )));
            }
        }
        let y = u8::from(chosen == Side::First);
        let (query, y) = self.channel.submit(y, iteration)?;
        let mut record = PreferenceRecord::new(query.iteration, query.first, query.second, y);
        if let Some(phi) = self.pending_phi.take() {
            record = record.with_phi(phi);
        }
        if let Some(c) = &query.context_id {
            record = record.with_context(c.clone());
        }
        let resolver = self.domain.view().resolver();
        self.policy.absorb_record(&record, resolver)?;
        self.history.append(record)?;
        self.best = self.compute_best()?;
        self.pose_next()?;
        let outcome = SubmitOutcome {
            pair: self.pending().expect("next pair posed"),
            best: self.best.clone().expect("one iteration completed"),
            iteration: self.completed(),
        };
        if let Some(t) = token {
            self.tokens.insert(t.to_owned(), outcome.clone());
        }
        self.updated_at = now;
        Ok(outcome)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            id: self.id.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
            config: self.config.clone(),
            domain_sha256: self.domain.content_hash(),
            domain: self.domain.clone(),
            history: self.history.clone(),
            channel: self.channel.clone(),
            pending_phi: self.pending_phi.clone(),
            best: self.best.clone(),
            uncertainty: self.policy.uncertainty().cloned(),
            tokens: self.tokens.clone(),
        }
    }

    /// Rebuilds a session from its snapshot by replaying every record into
    /// a fresh policy, then checks that the replay reproduces the stored
    /// confidence state, best arm and pending pair.
    pub fn restore(snapshot: Snapshot) -> ServiceResult<Self> {
        let fail = |reason: String| ServiceError::Replay {
            id: snapshot.id.clone(),
            reason,
        };
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(fail(format!(
                "unsupported snapshot version {}",
                snapshot.version
            )));
        }
        if snapshot.domain.content_hash() != snapshot.domain_sha256 {
            return Err(fail("domain does not match its recorded hash".into()));
        }
        snapshot.config.validate()?;
        let mut policy = snapshot.config.build(snapshot.domain.dim())?;
        let resolver = snapshot.domain.view().resolver();
        for record in snapshot.history.records() {
            policy.absorb_record(record, resolver)?;
        }
        let replayed = policy.uncertainty().map(UncertaintyState::fingerprint);
        if replayed
            != snapshot
                .uncertainty
                .as_ref()
                .map(UncertaintyState::fingerprint)
        {
            return Err(fail("confidence state differs after replay".into()));
        }
        let mut session = Self {
            id: snapshot.id.clone(),
            created_at: snapshot.created_at,
            updated_at: snapshot.updated_at,
            config: snapshot.config.clone(),
            domain: snapshot.domain.clone(),
            history: snapshot.history.clone(),
            channel: HumanChannel::new(),
            pending_phi: None,
            best: None,
            tokens: snapshot.tokens.clone(),
            policy,
        };
        session.channel = replayed_channel(&snapshot.history);
        session.best = session.compute_best()?;
        if session.best != snapshot.best {
            return Err(fail("best arm differs after replay".into()));
        }
        session.pose_next()?;
        if session.channel != snapshot.channel || session.pending_phi != snapshot.pending_phi {
            return Err(fail("pending pair differs after replay".into()));
        }
        Ok(session)
    }

    pub fn public_state(&self) -> PublicState {
        PublicState {
            session_id: self.id.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
            config: self.config.clone(),
            domain: self.domain.summary(),
            iteration: self.completed(),
            pending: self.pending(),
            best: self.best.clone(),
            history: self
                .history
                .records()
                .iter()
                .map(|r| HistoryEntry {
                    iteration: r.iteration,
                    first_id: self.arm_view(r.context_id.as_deref(), r.first).id,
                    second_id: self.arm_view(r.context_id.as_deref(), r.second).id,
                    chosen: if r.first_preferred() {
                        Side::First
                    } else {
                        Side::Second
                    },
                    context_id: r.context_id.clone(),
                })
                .collect(),
        }
    }
}

/// Channel state after every record in `history` has been answered.
fn replayed_channel(history: &History) -> HumanChannel {
    let mut channel = HumanChannel::new();
    for r in history.records() {
        channel
            .post(PendingQuery {
                iteration: r.iteration,
                first: r.first,
                second: r.second,
                context_id: r.context_id.clone(),
            })
            .expect("history iterations increase");
        channel
            .submit(r.outcome, Some(r.iteration))
            .expect("just posted");
    }
    channel
}
