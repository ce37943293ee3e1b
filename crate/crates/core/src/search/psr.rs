//! Probabilistic structural rollout.
//!
//! The table counts parent-child token pairs over the expression trees of
//! the best policies found so far; rollout then samples each next token from
//! the smoothed conditional distribution for the parent of the open slot:
//!
//! `P(t | p) = (c(p, t) + alpha) / (sum over legal t' of c(p, t') + alpha * |legal|)`

use rand::Rng;

use crate::expr::{Parent, PriorityFunction, Token, ALPHABET_SIZE};

use super::archive::Archive;
use super::config::SearchConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PsrTable {
    counts: [[u32; ALPHABET_SIZE]; Parent::COUNT],
    alpha: f64,
}

impl PsrTable {
    pub fn new(alpha: f64) -> Self {
        Self {
            counts: [[0; ALPHABET_SIZE]; Parent::COUNT],
            alpha,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn count(&self, parent: Parent, child: Token) -> u32 {
        self.counts[parent.index()][child.index()]
    }

    pub fn add(&mut self, parent: Parent, child: Token) {
        self.counts[parent.index()][child.index()] += 1;
    }

    pub fn clear(&mut self) {
        self.counts = [[0; ALPHABET_SIZE]; Parent::COUNT];
    }

    /// Recounts from scratch over the archive's trees.
    pub fn rebuild(&mut self, archive: &Archive) {
        self.clear();
        for entry in archive.entries() {
            let tree = entry
                .policy
                .build_tree()
                .expect("archive holds complete policies");
            for (p, c) in tree.edges() {
                self.add(p, c);
            }
        }
    }

    pub fn from_archive(archive: &Archive, alpha: f64) -> Self {
        let mut t = Self::new(alpha);
        t.rebuild(archive);
        t
    }

    /// Distribution over `legal`, in the same order.
    pub fn probabilities(&self, parent: Parent, legal: &[Token]) -> Vec<f64> {
        let weights: Vec<f64> = legal
            .iter()
            .map(|&t| f64::from(self.count(parent, t)) + self.alpha)
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, parent: Parent, legal: &[Token], rng: &mut R) -> Token {
        let weights: Vec<f64> = legal
            .iter()
            .map(|&t| f64::from(self.count(parent, t)) + self.alpha)
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (t, w) in legal.iter().zip(&weights) {
            if u < *w {
                return *t;
            }
            u -= w;
        }
        *legal.last().expect("legal action set is never empty")
    }
}

/// Completes `state` by sampling tokens until no slot is open. Uses the PSR
/// table when `config.psr` is set and uniform sampling otherwise.
pub fn rollout<R: Rng + ?Sized>(
    state: &PriorityFunction,
    psr: &PsrTable,
    config: &SearchConfig,
    rng: &mut R,
) -> PriorityFunction {
    let mut current = state.clone();
    while current
        .remainder()
        .expect("search states are legal prefixes")
        > 0
    {
        let legal = config.legal_actions(&current);
        let next = if config.psr {
            let parent = current.parent_slot().expect("open slot exists");
            psr.sample(parent, &legal, rng)
        } else {
            legal[rng.gen_range(0..legal.len())]
        };
        current.push(next);
    }
    current
}
