use rand::Rng;

use crate::domain::ArmResolver;
use crate::error::{Error, Result};
use crate::history::PreferenceRecord;
use crate::math::{stream_rng, streams};
use crate::policy::{random_pair, DuelingPolicy, RoundView, Selection};

/// Uniform random pairs. Never looks at feedback: its report is a uniformly
/// drawn candidate.
#[derive(Debug, Clone)]
pub struct RandomSearch {
    seed: u64,
}

impl RandomSearch {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl DuelingPolicy for RandomSearch {
    fn name(&self) -> &'static str {
        "random"
    }

    fn select(&mut self, view: &RoundView<'_>) -> Result<Selection> {
        let mut rng = stream_rng(self.seed, &[streams::RANDOM_PAIR, view.iteration]);
        let (first, second) = random_pair(view.domain, &mut rng)?;
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
        if candidates.is_empty() {
            return Err(Error::EmptyQueriedSet);
        }
        let mut rng = stream_rng(self.seed, &[streams::REPORT, view.iteration]);
        Ok(candidates[rng.random_range(0..candidates.len())])
    }
}
