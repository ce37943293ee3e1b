//! Search tree over partial token lists.

use rand::Rng;

use crate::expr::{PriorityFunction, Token, ALPHABET_SIZE};

use super::config::SearchConfig;

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: PriorityFunction,
    /// Child per action, indexed by [`Token::index`].
    pub children: [Option<usize>; ALPHABET_SIZE],
    /// Visits of this node; equals N(parent, action) for the edge into it.
    pub visits: u64,
    /// Best shaped reward seen through the edge into this node.
    pub q: f64,
    pub terminal: bool,
    pub legal: Vec<Token>,
}

impl SearchNode {
    fn new(state: PriorityFunction, config: &SearchConfig) -> Self {
        let terminal = state.is_complete();
        let legal = if terminal {
            Vec::new()
        } else {
            config.legal_actions(&state)
        };
        Self {
            state,
            children: [None; ALPHABET_SIZE],
            visits: 0,
            q: 0.0,
            terminal,
            legal,
        }
    }

    pub fn unexplored(&self) -> impl Iterator<Item = Token> + '_ {
        self.legal
            .iter()
            .copied()
            .filter(|t| self.children[t.index()].is_none())
    }

    pub fn is_expandable(&self) -> bool {
        !self.terminal && self.unexplored().next().is_some()
    }

    pub fn explored(&self) -> impl Iterator<Item = usize> + '_ {
        self.legal.iter().filter_map(|t| self.children[t.index()])
    }
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    config: SearchConfig,
}

pub const ROOT: usize = 0;

impl SearchTree {
    pub fn new(config: &SearchConfig) -> Self {
        Self {
            nodes: vec![SearchNode::new(PriorityFunction::empty(), config)],
            config: config.clone(),
        }
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn child(&self, id: usize, action: Token) -> Option<usize> {
        self.nodes[id].children[action.index()]
    }

    /// `Q + c * sqrt(ln N(parent) / N(child))`; unvisited children score +inf.
    pub fn uct(&self, parent: usize, child: usize) -> f64 {
        let c = &self.nodes[child];
        if c.visits == 0 {
            return f64::INFINITY;
        }
        let n = self.nodes[parent].visits.max(1) as f64;
        c.q + self.config.c_uct * (n.ln() / c.visits as f64).sqrt()
    }

    /// Walks from the root to the first expandable or terminal node. At each
    /// step a random explored child is taken with probability epsilon,
    /// otherwise the highest-UCT child (first in canonical order on ties).
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut path = vec![ROOT];
        loop {
            let id = *path.last().expect("path starts at root");
            let node = &self.nodes[id];
            if node.terminal || node.is_expandable() {
                return path;
            }
            let explored: Vec<usize> = node.explored().collect();
            let next = if rng.gen::<f64>() < self.config.epsilon {
                explored[rng.gen_range(0..explored.len())]
            } else {
                let mut best = explored[0];
                let mut best_score = self.uct(id, best);
                for &c in &explored[1..] {
                    let s = self.uct(id, c);
                    if s > best_score {
                        best = c;
                        best_score = s;
                    }
                }
                best
            };
            path.push(next);
        }
    }

    /// Adds one uniformly chosen unexplored legal child of `id`.
    pub fn expand<R: Rng + ?Sized>(&mut self, id: usize, rng: &mut R) -> usize {
        let options: Vec<Token> = self.nodes[id].unexplored().collect();
        assert!(
            !options.is_empty(),
            "expand called on a node with nothing to expand"
        );
        let action = options[rng.gen_range(0..options.len())];
        let state = self.nodes[id].state.with(action);
        let child = self.nodes.len();
        self.nodes.push(SearchNode::new(state, &self.config));
        self.nodes[id].children[action.index()] = Some(child);
        child
    }

    /// Max-backup of `reward` along `path`; every node on it gains one visit.
    pub fn backpropagate(&mut self, path: &[usize], reward: f64) {
        for &id in path {
            let n = &mut self.nodes[id];
            n.visits += 1;
            n.q = n.q.max(reward);
        }
    }
}
