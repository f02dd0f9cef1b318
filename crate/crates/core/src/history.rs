//! Append-only record of preference observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed duel. `outcome` is 1 iff the first arm was preferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub iteration: u64,
    pub first: usize,
    pub second: usize,
    pub outcome: u8,
    /// Gradient-difference feature captured at selection time, for policies
    /// that keep one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_id: Option<String>,
}

impl PreferenceRecord {
    pub fn new(iteration: u64, first: usize, second: usize, outcome: u8) -> Self {
        Self {
            iteration,
            first,
            second,
            outcome,
            phi: None,
            context_id: None,
        }
    }

    pub fn with_phi(mut self, phi: Vec<f64>) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn with_context(mut self, context_id: impl Into<String>) -> Self {
        self.context_id = Some(context_id.into());
        self
    }

    pub fn first_preferred(&self) -> bool {
        self.outcome == 1
    }

    fn validate(&self) -> Result<()> {
        if self.iteration == 0 {
            return Err(Error::InvalidRecord("iteration must be positive".into()));
        }
        if self.outcome > 1 {
            return Err(Error::InvalidRecord(format!(
                "outcome {} is not binary",
                self.outcome
            )));
        }
        if self.first == self.second {
            return Err(Error::InvalidRecord(format!(
                "arm {} duels itself",
                self.first
            )));
        }
        if let Some(phi) = &self.phi {
            if phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidRecord("phi has non-finite entries".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History {
    records: Vec<PreferenceRecord>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a history from stored records, re-checking every invariant.
    pub fn from_records(records: Vec<PreferenceRecord>) -> Result<Self> {
        let mut h = Self::new();
        for r in records {
            h.append(r)?;
        }
        Ok(h)
    }

    pub fn append(&mut self, record: PreferenceRecord) -> Result<()> {
        record.validate()?;
        if let Some(last) = self.records.last() {
            if record.iteration <= last.iteration {
                return Err(Error::NonIncreasingIteration {
                    last: last.iteration,
                    found: record.iteration,
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_iteration(&self) -> u64 {
        self.records.last().map_or(0, |r| r.iteration)
    }

    /// First `n` records as a new history.
    pub fn prefix(&self, n: usize) -> History {
        History {
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }

    /// Distinct arm indices that appeared in any duel, restricted to records
    /// of the given context (`None` matches records without a context), in
    /// ascending order.
    pub fn queried_arms(&self, context_id: Option<&str>) -> Vec<usize> {
        let mut arms: Vec<usize> = self
            .records
            .iter()
            .filter(|r| r.context_id.as_deref() == context_id)
            .flat_map(|r| [r.first, r.second])
            .collect();
        arms.sort_unstable();
        arms.dedup();
        arms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_grows_and_keeps_prefix() {
        let mut h = History::new();
        h.append(PreferenceRecord::new(1, 0, 1, 1)).unwrap();
        assert_eq!(h.len(), 1);
        for t in 2..=5 {
            h.append(PreferenceRecord::new(t, 0, 1, 0)).unwrap();
        }
        let before = h.records().to_vec();
        h.append(PreferenceRecord::new(6, 2, 1, 1)).unwrap();
        assert_eq!(h.len(), 6);
        assert_eq!(&h.records()[..5], &before[..]);
    }

    #[test]
    fn rejects_repeated_iteration() {
        let mut h = History::new();
        for t in 1..=5 {
            h.append(PreferenceRecord::new(t, 0, 1, 1)).unwrap();
        }
        let err = h.append(PreferenceRecord::new(5, 0, 1, 1)).unwrap_err();
        assert!(matches!(
            err,
            Error::NonIncreasingIteration { last: 5, found: 5 }
        ));
        assert_eq!(h.len(), 5);
    }

    #[test]
    fn rejects_invalid_records() {
        let mut h = History::new();
        assert!(h.append(PreferenceRecord::new(1, 2, 2, 1)).is_err());
        assert!(h.append(PreferenceRecord::new(1, 0, 1, 2)).is_err());
        assert!(h
            .append(PreferenceRecord::new(1, 0, 1, 1).with_phi(vec![f64::NAN]))
            .is_err());
        assert!(h.is_empty());
    }

    #[test]
    fn queried_arms_by_context() {
        let mut h = History::new();
        h.append(PreferenceRecord::new(1, 4, 1, 1)).unwrap();
        h.append(PreferenceRecord::new(2, 1, 3, 0).with_context("c"))
            .unwrap();
        assert_eq!(h.queried_arms(None), vec![1, 4]);
        assert_eq!(h.queried_arms(Some("c")), vec![1, 3]);
    }
}
