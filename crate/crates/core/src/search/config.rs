use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Feature, PriorityFunction, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Once a state holds this many operators only variables may follow.
    pub max_operators: usize,
    pub epsilon: f64,
    /// UCT exploration constant.
    pub c_uct: f64,
    /// PSR smoothing.
    pub alpha: f64,
    /// Archive size feeding the PSR table.
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Normalize rewards by the best raw reward so far.
    pub reward_shaping: bool,
    /// Offer LI and LO as variables.
    pub occupancy_features: bool,
    /// Structure-guided rollout; uniform rollout when false.
    pub psr: bool,
    /// Jittered flow replicas averaged per candidate; 0 trains on the base flow.
    pub train_replicas: usize,
    pub noise_bound: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_operators: 6,
            epsilon: 0.2,
            c_uct: std::f64::consts::SQRT_2,
            alpha: 1.0,
            k: 10,
            iterations: 500,
            seed: 0,
            reward_shaping: true,
            occupancy_features: true,
            psr: true,
            train_replicas: 0,
            noise_bound: 60,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_operators == 0 {
            return bad("max_operators must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.c_uct.is_finite() && self.c_uct > 0.0) {
            return bad("c_uct must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        Ok(())
    }

    pub fn with_ablation(mut self, mode: AblationMode) -> Self {
        let (shaping, occupancy, psr) = mode.flags();
        self.reward_shaping = shaping;
        self.occupancy_features = occupancy;
        self.psr = psr;
        self
    }

    /// Variables on offer under the current feature flags.
    pub fn variables(&self) -> Vec<Token> {
        Feature::ALL
            .iter()
            .filter(|f| self.occupancy_features || !matches!(f, Feature::LI | Feature::LO))
            .map(|&f| Token::Var(f))
            .collect()
    }

    /// Legal next tokens for `state`, in canonical order.
    pub fn legal_actions(&self, state: &PriorityFunction) -> Vec<Token> {
        let mut out = Vec::with_capacity(14);
        if state.operator_count() < self.max_operators {
            out.extend(Token::OPERATORS);
        }
        out.extend(self.variables());
        out
    }
}

/// Parses `sqrt2`, `inv-sqrt2` (also `1/sqrt2`) or a plain number.
pub fn parse_exploration(text: &str) -> Result<f64> {
    match text.trim().to_ascii_lowercase().as_str() {
        "sqrt2" => Ok(std::f64::consts::SQRT_2),
        "inv-sqrt2" | "1/sqrt2" => Ok(std::f64::consts::FRAC_1_SQRT_2),
        other => other
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad exploration constant `{text}`"))),
    }
}

/// Component ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationMode {
    /// Everything enabled.
    FM,
    /// Raw reciprocal travel time as the reward.
    M1,
    /// No LI/LO variables.
    M2,
    /// Uniform rollout.
    M3,
    /// M1, M2 and M3 together.
    M4,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::FM,
        AblationMode::M1,
        AblationMode::M2,
        AblationMode::M3,
        AblationMode::M4,
    ];

    /// (reward shaping, occupancy features, psr)
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            AblationMode::FM => (true, true, true),
            AblationMode::M1 => (false, true, true),
            AblationMode::M2 => (true, false, true),
            AblationMode::M3 => (true, true, false),
            AblationMode::M4 => (false, false, false),
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .iter()
            .copied()
            .find(|m| m.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown ablation mode `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_parameter_table() {
        let c = SearchConfig::default();
        assert_eq!(c.max_operators, 6);
        assert_eq!(c.epsilon, 0.2);
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.k, 10);
        assert_eq!(c.iterations, 500);
        assert_eq!(c.c_uct, std::f64::consts::SQRT_2);
        c.validate().unwrap();
    }

    #[test]
    fn legal_actions_respect_cap() {
        let c = SearchConfig::default();
        assert_eq!(c.legal_actions(&PriorityFunction::empty()).len(), 14);
        let six = PriorityFunction::new(vec![Token::Add; 6]);
        let legal = c.legal_actions(&six);
        assert_eq!(legal.len(), 8);
        assert!(legal.iter().all(|t| !t.is_operator()));
        let m2 = c.clone().with_ablation(AblationMode::M2);
        assert_eq!(m2.legal_actions(&PriorityFunction::empty()).len(), 12);
        assert_eq!(m2.variables().len(), 6);
    }

    #[test]
    fn ablation_flags_compose() {
        let (a1, _, _) = AblationMode::M1.flags();
        let (_, b2, _) = AblationMode::M2.flags();
        let (_, _, c3) = AblationMode::M3.flags();
        assert_eq!(AblationMode::M4.flags(), (a1, b2, c3));
        assert_eq!(AblationMode::FM.flags(), (true, true, true));
        assert_eq!("m3".parse::<AblationMode>().unwrap(), AblationMode::M3);
        assert!("M5".parse::<AblationMode>().is_err());
    }

    #[test]
    fn exploration_constants() {
        assert_eq!(
            parse_exploration("sqrt2").unwrap(),
            std::f64::consts::SQRT_2
        );
        assert_eq!(
            parse_exploration("1/sqrt2").unwrap(),
            std::f64::consts::FRAC_1_SQRT_2
        );
        assert_eq!(parse_exploration("0.5").unwrap(), 0.5);
        assert!(parse_exploration("lots").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            SearchConfig {
                epsilon: 1.5,
                ..SearchConfig::default()
            },
            SearchConfig {
                alpha: 0.0,
                ..SearchConfig::default()
            },
            SearchConfig {
                k: 0,
                ..SearchConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
