//! HTTP service running preference-optimization sessions for a human rater.
//!
//! Each session holds a candidate domain and a dueling policy. Clients fetch
//! the pending pair, post which side they prefer, and read back the current
//! best candidate. Sessions are snapshotted to disk after every change and
//! rebuilt by replay when the process restarts.

mod embed;
mod error;
mod http;
mod session;
mod store;

pub use embed::{EmbedConfig, EmbedError, EmbeddingClient};
pub use error::{ServiceError, ServiceResult};
pub use http::{router, serve, AppState, ServiceConfig};
pub use session::{
    ArmView, BestView, ContextView, DomainSummary, HistoryEntry, PairView, PublicState, Session,
    SessionConfig, SessionDomain, Side, Snapshot, SubmitOutcome, SNAPSHOT_VERSION,
};
pub use store::SnapshotStore;
