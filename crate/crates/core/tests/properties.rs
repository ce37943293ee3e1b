use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use phasewise::expr::{Feature, Parent, PriorityFunction, Token};
use phasewise::policy::LaneFeatures;
use phasewise::search::{rollout, PsrTable, SearchConfig, SearchTree, ROOT};

const VARS: usize = 8;

fn arity(t: Token) -> i64 {
    match t.name() {
        "add" | "mul" | "div" | "min" | "max" => 2,
        "neg" => 1,
        _ => 0,
    }
}

fn any_token() -> impl Strategy<Value = Token> {
    (0..Token::ALL.len()).prop_map(|i| Token::ALL[i])
}

/// A legal list: random draws first, then variables until every slot is closed.
fn valid_list() -> impl Strategy<Value = Vec<Token>> {
    (
        prop::collection::vec(any_token(), 1..30),
        prop::collection::vec(0..VARS, 40),
    )
        .prop_map(|(draws, fill)| {
            let mut out = Vec::new();
            let mut r = 1i64;
            let mut d = draws.into_iter();
            let mut f = fill.into_iter().cycle();
            while r > 0 {
                let t = d
                    .next()
                    .unwrap_or_else(|| Token::Var(Feature::ALL[f.next().unwrap()]));
                r += arity(t) - 1;
                out.push(t);
            }
            out
        })
}

fn features() -> impl Strategy<Value = LaneFeatures> {
    prop::array::uniform8(prop_oneof![
        Just(0.0),
        Just(-0.0),
        Just(1.0),
        Just(f64::MAX),
        Just(-f64::MAX),
        -1e300f64..1e300,
        0.0f64..1.0,
    ])
    .prop_map(LaneFeatures::new)
}

/// Parent of each position in the breadth-first layout.
fn parents(tokens: &[Token]) -> Vec<Parent> {
    let mut out = vec![Parent::Root; tokens.len()];
    let mut cursor = 1;
    for (i, &t) in tokens.iter().enumerate() {
        for _ in 0..arity(t) {
            if cursor < tokens.len() {
                out[cursor] = Parent::Token(tokens[i]);
            }
            cursor += 1;
        }
    }
    out
}

proptest! {
    #[test]
    fn remainder_matches_formula(tokens in prop::collection::vec(any_token(), 0..20)) {
        let pf = PriorityFunction::new(tokens.clone());
        let mut r = 1i64;
        let mut bad = false;
        for (k, &t) in tokens.iter().enumerate() {
            if r <= 0 && k > 0 {
                bad = true;
            }
            r += arity(t) - 1;
        }
        match pf.remainder() {
            Ok(got) => {
                prop_assert!(!bad);
                prop_assert_eq!(got as i64, r);
            }
            Err(_) => prop_assert!(bad),
        }
    }

    #[test]
    fn bft_round_trip(tokens in valid_list()) {
        let pf = PriorityFunction::new(tokens);
        let tree = pf.build_tree().unwrap();
        prop_assert_eq!(tree.to_bft(), pf.clone());
        let reparsed = PriorityFunction::parse(&pf.render()).unwrap();
        prop_assert_eq!(reparsed, pf);
    }

    #[test]
    fn evaluation_is_total(tokens in valid_list(), f in features()) {
        let v = PriorityFunction::new(tokens).build_tree().unwrap().evaluate(&f);
        prop_assert!(v.is_finite());
    }

    #[test]
    fn parent_slot_agrees_with_layout(tokens in valid_list()) {
        let expected = parents(&tokens);
        for k in 0..tokens.len() {
            let prefix = PriorityFunction::new(tokens[..k].to_vec());
            prop_assert_eq!(prefix.parent_slot().unwrap(), expected[k]);
        }
        let tree = PriorityFunction::new(tokens.clone()).build_tree().unwrap();
        let edges: Vec<(Parent, Token)> = tree.edges().collect();
        let mut want: Vec<(Parent, Token)> = expected.into_iter().zip(tokens.iter().copied()).collect();
        let mut got = edges;
        want.sort_by_key(|(p, t)| (p.index(), t.index()));
        got.sort_by_key(|(p, t)| (p.index(), t.index()));
        prop_assert_eq!(got, want);
    }

    #[test]
    fn clipped_square_identity(di in 0.0f64..=1.0) {
        let mut v = [0.0; 8];
        v[Feature::DI.index()] = di;
        let f = LaneFeatures::new(v);
        let a = PriorityFunction::parse("min DI mul DI DI").unwrap().build_tree().unwrap();
        let b = PriorityFunction::parse("mul DI DI").unwrap().build_tree().unwrap();
        prop_assert_eq!(a.evaluate(&f), b.evaluate(&f));
    }

    #[test]
    fn psr_distributions_sum_to_one(
        lists in prop::collection::vec(valid_list(), 0..10),
        alpha in 0.01f64..5.0,
        parent in 0..15usize,
        legal_vars_only in any::<bool>(),
    ) {
        let mut t = PsrTable::new(alpha);
        for l in &lists {
            for (p, c) in PriorityFunction::new(l.clone()).build_tree().unwrap().edges() {
                t.add(p, c);
            }
        }
        let p = if parent == 14 { Parent::Root } else { Parent::Token(Token::ALL[parent]) };
        let legal: Vec<Token> = if legal_vars_only { Token::ALL[6..].to_vec() } else { Token::ALL.to_vec() };
        let probs = t.probabilities(p, &legal);
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn q_is_running_max(rewards in prop::collection::vec(0.0f64..=1.0, 1..50), seed in any::<u64>()) {
        let cfg = SearchConfig::default();
        let mut tree = SearchTree::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = tree.expand(ROOT, &mut rng);
        let mut best = 0.0f64;
        for r in rewards {
            let before = tree.node(c).q;
            tree.backpropagate(&[ROOT, c], r);
            best = best.max(r);
            prop_assert!(tree.node(c).q >= before);
            prop_assert_eq!(tree.node(c).q, best);
            prop_assert_eq!(tree.node(ROOT).q, best);
        }
    }

    #[test]
    fn rollouts_respect_operator_cap(max_ops in 1usize..8, seed in any::<u64>(), psr in any::<bool>()) {
        let cfg = SearchConfig { max_operators: max_ops, psr, ..SearchConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = PsrTable::new(1.0);
        for _ in 0..20 {
            let out = rollout(&PriorityFunction::empty(), &table, &cfg, &mut rng);
            prop_assert!(out.is_complete());
            prop_assert!(out.operator_count() <= max_ops);
        }
    }
}
