use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::PriorityFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub policy: PriorityFunction,
    pub raw_reward: f64,
}

/// The k best distinct policies seen so far, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    k: usize,
    entries: Vec<ArchiveEntry>,
    best_raw_reward: f64,
}

impl Archive {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            entries: Vec::with_capacity(k + 1),
            best_raw_reward: 0.0,
        }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&ArchiveEntry> {
        self.entries.first()
    }

    /// Running maximum over every raw reward offered to
    /// [`Archive::shaped_reward`]; zero before the first one.
    pub fn best_raw_reward(&self) -> f64 {
        self.best_raw_reward
    }

    /// Offers a candidate. Returns true when membership changed.
    pub fn insert(&mut self, policy: &PriorityFunction, raw_reward: f64) -> bool {
        if self.entries.iter().any(|e| &e.policy == policy) {
            return false;
        }
        // after existing entries with an equal reward, so earlier finds win ties
        let pos = self.entries.partition_point(|e| e.raw_reward >= raw_reward);
        if pos >= self.k {
            return false;
        }
        self.entries.insert(
            pos,
            ArchiveEntry {
                policy: policy.clone(),
                raw_reward,
            },
        );
        self.entries.truncate(self.k);
        true
    }

    /// `raw / max(best, raw)`, raising the running best. The first reward
    /// ever seen maps to exactly 1.
    pub fn shaped_reward(&mut self, raw: f64) -> Result<f64> {
        if !(raw.is_finite() && raw > 0.0) {
            return Err(Error::Reward(raw));
        }
        self.best_raw_reward = self.best_raw_reward.max(raw);
        Ok(raw / self.best_raw_reward)
    }
}
