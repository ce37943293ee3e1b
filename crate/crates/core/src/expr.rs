//! Priority-function representation.
//!
//! A priority function is a flat list of tokens holding the breadth-first
//! traversal of an expression tree. Because every token has a fixed arity the
//! list decodes to exactly one tree, and validity reduces to a counting rule:
//! the remainder `1 + sum(arity) - len` is the number of argument slots still
//! open. A list is complete when the remainder reaches zero.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight movement-level traffic features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    /// Waiting vehicles, incoming lane.
    WI,
    /// Waiting vehicles, outgoing lane.
    WO,
    /// Vehicle count, incoming lane.
    CI,
    /// Vehicle count, outgoing lane.
    CO,
    /// Vehicles within one green period of the stop line, incoming lane.
    DI,
    /// Vehicles within one green period of the stop line, outgoing lane.
    DO,
    /// Incoming occupancy ratio.
    LI,
    /// Outgoing occupancy ratio.
    LO,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::WI,
        Feature::WO,
        Feature::CI,
        Feature::CO,
        Feature::DI,
        Feature::DO,
        Feature::LI,
        Feature::LO,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::WI => "WI",
            Feature::WO => "WO",
            Feature::CI => "CI",
            Feature::CO => "CO",
            Feature::DI => "DI",
            Feature::DO => "DO",
            Feature::LI => "LI",
            Feature::LO => "LO",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One symbol of the expression alphabet: six operators and eight variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Token {
    Add,
    Neg,
    Mul,
    /// Division that yields 1 when the denominator is exactly zero.
    ProtDiv,
    Min,
    Max,
    Var(Feature),
}

/// Number of distinct tokens.
pub const ALPHABET_SIZE: usize = 14;

impl Token {
    pub const OPERATORS: [Token; 6] = [
        Token::Add,
        Token::Neg,
        Token::Mul,
        Token::ProtDiv,
        Token::Min,
        Token::Max,
    ];

    /// Canonical enumeration order: operators first, then variables.
    pub const ALL: [Token; ALPHABET_SIZE] = [
        Token::Add,
        Token::Neg,
        Token::Mul,
        Token::ProtDiv,
        Token::Min,
        Token::Max,
        Token::Var(Feature::WI),
        Token::Var(Feature::WO),
        Token::Var(Feature::CI),
        Token::Var(Feature::CO),
        Token::Var(Feature::DI),
        Token::Var(Feature::DO),
        Token::Var(Feature::LI),
        Token::Var(Feature::LO),
    ];

    pub fn arity(self) -> usize {
        match self {
            Token::Add | Token::Mul | Token::ProtDiv | Token::Min | Token::Max => 2,
            Token::Neg => 1,
            Token::Var(_) => 0,
        }
    }

    pub fn is_operator(self) -> bool {
        self.arity() > 0
    }

    /// Position in [`Token::ALL`].
    pub fn index(self) -> usize {
        match self {
            Token::Add => 0,
            Token::Neg => 1,
            Token::Mul => 2,
            Token::ProtDiv => 3,
            Token::Min => 4,
            Token::Max => 5,
            Token::Var(f) => 6 + f.index(),
        }
    }

    pub fn from_index(index: usize) -> Option<Token> {
        Token::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Token::Add => "add",
            Token::Neg => "neg",
            Token::Mul => "mul",
            Token::ProtDiv => "div",
            Token::Min => "min",
            Token::Max => "max",
            Token::Var(f) => f.name(),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Token> {
        Token::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownToken(s.to_string()))
    }
}

/// Owner of the argument slot the next appended token will fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parent {
    /// The first token of a list has no parent.
    Root,
    Token(Token),
}

impl Parent {
    /// Number of distinct parents (root plus every token).
    pub const COUNT: usize = ALPHABET_SIZE + 1;

    pub fn index(self) -> usize {
        match self {
            Parent::Root => ALPHABET_SIZE,
            Parent::Token(t) => t.index(),
        }
    }
}

/// Ordered token list in breadth-first order. May be partial (remainder > 0)
/// while it is being grown by search; most consumers require a complete list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PriorityFunction {
    tokens: Vec<Token>,
}

impl PriorityFunction {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self { tokens }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn push(&mut self, token: Token) {
        self.tokens.push(token);
    }

    pub fn with(&self, token: Token) -> Self {
        let mut next = self.clone();
        next.push(token);
        next
    }

    pub fn operator_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_operator()).count()
    }

    /// Open argument slots: `1 + sum(arity) - len`.
    ///
    /// Fails when some non-empty strict prefix is already complete, since
    /// such a list can never come out of legal expansion.
    pub fn remainder(&self) -> Result<usize> {
        let mut open: i64 = 1;
        for (i, t) in self.tokens.iter().enumerate() {
            if open <= 0 {
                return Err(Error::MalformedPrefix { position: i });
            }
            open += t.arity() as i64 - 1;
        }
        // open >= 0 here: each step lowers it by at most one from a positive value.
        Ok(open as usize)
    }

    /// True when the list decodes to exactly one expression.
    pub fn is_complete(&self) -> bool {
        matches!(self.remainder(), Ok(0))
    }

    /// Parent of the slot the next token will fill, by replaying the
    /// breadth-first slot queue.
    pub fn parent_slot(&self) -> Result<Parent> {
        if self.remainder()? == 0 {
            return Err(Error::Complete);
        }
        let mut slots: VecDeque<usize> = VecDeque::new();
        for (i, t) in self.tokens.iter().enumerate() {
            slots.pop_front();
            slots.extend(std::iter::repeat_n(i, t.arity()));
        }
        Ok(match slots.front() {
            Some(&owner) => Parent::Token(self.tokens[owner]),
            None => Parent::Root,
        })
    }

    pub fn build_tree(&self) -> Result<ExprTree> {
        ExprTree::from_bft(self)
    }

    pub fn cost(&self) -> Result<PolicyCost> {
        match self.remainder()? {
            0 => Ok(PolicyCost {
                flops: self.operator_count(),
                bytes: self.len(),
            }),
            remaining => Err(Error::Incomplete { remaining }),
        }
    }

    /// Whitespace-separated token names, e.g. `mul LI mul DI DI`.
    pub fn render(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses the canonical text form; the result must be a complete list.
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = text
            .split_whitespace()
            .map(Token::from_str)
            .collect::<Result<Vec<_>>>()?;
        let pf = Self::new(tokens);
        match pf.remainder()? {
            0 => Ok(pf),
            remaining => Err(Error::Incomplete { remaining }),
        }
    }
}

impl fmt::Display for PriorityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for PriorityFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl From<PriorityFunction> for String {
    fn from(pf: PriorityFunction) -> String {
        pf.render()
    }
}

impl TryFrom<String> for PriorityFunction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

/// Deployment cost of one movement evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyCost {
    pub flops: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Node {
    token: Token,
    first_child: usize,
}

/// Expression tree stored in breadth-first order.
///
/// Node `i` is token `i` of the source list. In breadth-first order the
/// children of a node are contiguous and always follow their parent, so each
/// node only records the index of its first child and the root is node 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExprTree {
    nodes: Vec<Node>,
}

impl ExprTree {
    fn from_bft(pf: &PriorityFunction) -> Result<Self> {
        match pf.remainder()? {
            0 => {}
            remaining => return Err(Error::Incomplete { remaining }),
        }
        let mut nodes = Vec::with_capacity(pf.len());
        let mut next = 1;
        for &token in pf.tokens() {
            nodes.push(Node {
                token,
                first_child: next,
            });
            next += token.arity();
        }
        Ok(Self { nodes })
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn token(&self, node: usize) -> Token {
        self.nodes[node].token
    }

    pub fn children(&self, node: usize) -> std::ops::Range<usize> {
        let n = self.nodes[node];
        n.first_child..n.first_child + n.token.arity()
    }

    /// Breadth-first re-serialization.
    pub fn to_bft(&self) -> PriorityFunction {
        let mut out = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root()]);
        while let Some(i) = queue.pop_front() {
            out.push(self.token(i));
            queue.extend(self.children(i));
        }
        PriorityFunction::new(out)
    }

    /// Every (parent, child) edge, plus `(Root, root token)`.
    pub fn edges(&self) -> impl Iterator<Item = (Parent, Token)> + '_ {
        std::iter::once((Parent::Root, self.token(0))).chain((0..self.len()).flat_map(move |i| {
            self.children(i)
                .map(move |c| (Parent::Token(self.token(i)), self.token(c)))
        }))
    }

    /// Evaluates the expression on one feature vector.
    ///
    /// Total: protected division covers the only singularity and every
    /// intermediate is saturated to the finite range, so no NaN can appear
    /// for finite inputs.
    pub fn evaluate(&self, feats: &crate::policy::LaneFeatures) -> f64 {
        let mut scratch = vec![0.0; self.len()];
        self.evaluate_with(feats, &mut scratch)
    }

    /// Same as [`ExprTree::evaluate`] with a caller-provided buffer of at
    /// least `len()` values.
    pub fn evaluate_with(&self, feats: &crate::policy::LaneFeatures, scratch: &mut [f64]) -> f64 {
        for i in (0..self.len()).rev() {
            let n = self.nodes[i];
            let c = n.first_child;
            let v = match n.token {
                Token::Var(f) => feats.get(f),
                Token::Neg => -scratch[c],
                Token::Add => scratch[c] + scratch[c + 1],
                Token::Mul => scratch[c] * scratch[c + 1],
                Token::ProtDiv => {
                    if scratch[c + 1] == 0.0 {
                        1.0
                    } else {
                        scratch[c] / scratch[c + 1]
                    }
                }
                Token::Min => scratch[c].min(scratch[c + 1]),
                Token::Max => scratch[c].max(scratch[c + 1]),
            };
            scratch[i] = saturate(v);
        }
        scratch[0]
    }

    fn fmt_node(&self, i: usize, nested: bool, out: &mut String) {
        let token = self.token(i);
        let kids: Vec<usize> = self.children(i).collect();
        match token {
            Token::Var(f) => out.push_str(f.name()),
            Token::Neg => {
                if nested {
                    out.push('(');
                }
                out.push('-');
                self.fmt_node(kids[0], true, out);
                if nested {
                    out.push(')');
                }
            }
            Token::Min | Token::Max => {
                out.push_str(token.name());
                out.push('(');
                self.fmt_node(kids[0], false, out);
                out.push_str(", ");
                self.fmt_node(kids[1], false, out);
                out.push(')');
            }
            Token::Add | Token::Mul | Token::ProtDiv => {
                let sym = match token {
                    Token::Add => " + ",
                    Token::Mul => " * ",
                    _ => " / ",
                };
                if nested {
                    out.push('(');
                }
                self.fmt_node(kids[0], true, out);
                out.push_str(sym);
                self.fmt_node(kids[1], true, out);
                if nested {
                    out.push(')');
                }
            }
        }
    }
}

/// Infix rendering, e.g. `(-WO) + (WI * WI)`.
impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.fmt_node(self.root(), false, &mut s);
        f.write_str(&s)
    }
}

fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        // unreachable for finite inputs; keep evaluation total anyway
        0.0
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::LaneFeatures;
    use Feature::*;

    fn v(f: Feature) -> Token {
        Token::Var(f)
    }

    fn fig3() -> PriorityFunction {
        PriorityFunction::new(vec![
            Token::Add,
            Token::Neg,
            Token::Mul,
            v(WO),
            v(WI),
            v(WI),
        ])
    }

    fn pi1() -> PriorityFunction {
        PriorityFunction::new(vec![Token::Mul, v(LI), Token::Mul, v(DI), v(DI)])
    }

    #[test]
    fn alphabet_shape() {
        assert_eq!(Token::ALL.iter().filter(|t| t.is_operator()).count(), 6);
        assert_eq!(Token::ALL.iter().filter(|t| !t.is_operator()).count(), 8);
        for (i, t) in Token::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(Token::from_index(i), Some(*t));
        }
    }

    #[test]
    fn remainder_examples() {
        assert_eq!(PriorityFunction::empty().remainder().unwrap(), 1);
        assert_eq!(fig3().remainder().unwrap(), 0);
        assert_eq!(
            PriorityFunction::new(vec![Token::Add]).remainder().unwrap(),
            2
        );
        let bad = PriorityFunction::new(vec![Token::Add, v(WI), v(WO), v(WO)]);
        assert!(matches!(
            bad.remainder(),
            Err(Error::MalformedPrefix { position: 3 })
        ));
    }

    #[test]
    fn build_tree_examples() {
        assert_eq!(
            fig3().build_tree().unwrap().to_string(),
            "(-WO) + (WI * WI)"
        );
        assert_eq!(
            PriorityFunction::new(vec![v(WI)])
                .build_tree()
                .unwrap()
                .to_string(),
            "WI"
        );
        assert_eq!(pi1().build_tree().unwrap().to_string(), "LI * (DI * DI)");
        assert!(PriorityFunction::new(vec![Token::Add, v(WI)])
            .build_tree()
            .is_err());
    }

    #[test]
    fn tree_children_follow_bft() {
        let t = fig3().build_tree().unwrap();
        assert_eq!(t.children(0), 1..3);
        assert_eq!(t.children(1), 3..4);
        assert_eq!(t.children(2), 4..6);
        assert_eq!(t.to_bft(), fig3());
    }

    #[test]
    fn evaluate_examples() {
        let mut f = LaneFeatures::default();
        f.set(LI, 0.5);
        f.set(DI, 0.4);
        let got = pi1().build_tree().unwrap().evaluate(&f);
        assert!((got - 0.08).abs() < 1e-15);

        let div = PriorityFunction::parse("div WI WO")
            .unwrap()
            .build_tree()
            .unwrap();
        let mut g = LaneFeatures::default();
        g.set(WI, 0.7);
        assert_eq!(div.evaluate(&g), 1.0);

        let neg = PriorityFunction::parse("neg WI")
            .unwrap()
            .build_tree()
            .unwrap();
        let mut h = LaneFeatures::default();
        h.set(WI, 0.3);
        assert_eq!(neg.evaluate(&h), -0.3);
    }

    #[test]
    fn evaluate_saturates() {
        // 1/x with x tiny, then squared, overflows f64
        let pf = PriorityFunction::parse("mul div div WI CI WI CI").unwrap();
        let mut f = LaneFeatures::default();
        f.set(WI, 1.0);
        f.set(CI, 1e-300);
        let got = pf.build_tree().unwrap().evaluate(&f);
        assert_eq!(got, f64::MAX);
    }

    #[test]
    fn parent_slot_examples() {
        assert_eq!(
            PriorityFunction::empty().parent_slot().unwrap(),
            Parent::Root
        );
        assert_eq!(
            PriorityFunction::new(vec![Token::Add])
                .parent_slot()
                .unwrap(),
            Parent::Token(Token::Add)
        );
        assert_eq!(
            PriorityFunction::new(vec![Token::Add, Token::Neg, Token::Mul])
                .parent_slot()
                .unwrap(),
            Parent::Token(Token::Neg)
        );
        assert!(matches!(fig3().parent_slot(), Err(Error::Complete)));
    }

    #[test]
    fn cost_examples() {
        let c = PriorityFunction::new(vec![v(WI)]).cost().unwrap();
        assert_eq!((c.flops, c.bytes), (0, 1));
        let c = fig3().cost().unwrap();
        assert_eq!((c.flops, c.bytes), (3, 6));
        let c = pi1().cost().unwrap();
        assert_eq!((c.flops, c.bytes), (2, 5));
        assert!(PriorityFunction::new(vec![Token::Mul]).cost().is_err());
    }

    #[test]
    fn text_format() {
        assert_eq!(PriorityFunction::parse("mul LI mul DI DI").unwrap(), pi1());
        assert_eq!(PriorityFunction::parse(&pi1().render()).unwrap(), pi1());
        assert_eq!(fig3().render(), "add neg mul WO WI WI");
        assert!(matches!(
            PriorityFunction::parse("add WI"),
            Err(Error::Incomplete { remaining: 1 })
        ));
        assert!(matches!(
            PriorityFunction::parse("add WI foo"),
            Err(Error::UnknownToken(_))
        ));
        assert!(PriorityFunction::parse("WI WO").is_err());
        assert!(PriorityFunction::parse("").is_err());
    }

    #[test]
    fn serde_as_text() {
        let json = serde_json::to_string(&pi1()).unwrap();
        assert_eq!(json, "\"mul LI mul DI DI\"");
        let back: PriorityFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pi1());
        assert!(serde_json::from_str::<PriorityFunction>("\"mul LI\"").is_err());
    }
}
