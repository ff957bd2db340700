//! Abstract τ-κ-separoid rule harness.
//!
//! A [`SeparoidInstance`] packages a finite carrier with a join table, an
//! order table, a ternary relation oracle, a bottom element, and the two
//! distinguished elements τ and κ. [`check_rules`] evaluates the eleven core
//! rules plus the derived lemmas on sampled or exhaustive tuples; failures
//! replay to a violation. The same harness drives sigma-separation, TCI, and
//! synthetic table-backed relations.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeparoidError {
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type RelationOracle = Arc<dyn Fn(usize, usize, usize) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct SeparoidInstance {
    pub labels: Vec<String>,
    /// `join[a][b]`: carrier index of `a ∨ b`.
    pub join: Vec<Vec<usize>>,
    /// `leq[a][b]`: whether `a ≪ b`.
    pub leq: Vec<Vec<bool>>,
    pub relation: RelationOracle,
    pub bottom: usize,
    pub tau: usize,
    pub kappa: usize,
}

impl SeparoidInstance {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<(), SeparoidError> {
        let n = self.len();
        if n == 0 {
            return Err(SeparoidError::MalformedTable("empty carrier".into()));
        }
        if self.join.len() != n
            || self.join.iter().any(|r| r.len() != n)
            || self.leq.len() != n
            || self.leq.iter().any(|r| r.len() != n)
        {
            return Err(SeparoidError::MalformedTable("table shape".into()));
        }
        if self
            .join
            .iter()
            .any(|r| r.iter().any(|&v| v >= n))
        {
            return Err(SeparoidError::MalformedTable("join out of range".into()));
        }
        if self.bottom >= n || self.tau >= n || self.kappa >= n {
            return Err(SeparoidError::MalformedTable(
                "distinguished element out of range".into(),
            ));
        }
        Ok(())
    }

    /// Compatibility conditions of the ambient structure: commutativity and
    /// associativity of the join, neutral bottom, `⊥ ≪ α`, and monotonicity
    /// `α ≪ β ⇒ α ≪ β ∨ γ`. Returns the violated conditions.
    pub fn check_compat(&self) -> Vec<String> {
        let n = self.len();
        let mut bad = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if self.join[a][b] != self.join[b][a] {
                    bad.push(format!("join not commutative at ({a},{b})"));
                }
                for g in 0..n {
                    if self.join[self.join[a][b]][g] != self.join[a][self.join[b][g]] {
                        bad.push(format!("join not associative at ({a},{b},{g})"));
                    }
                    if self.leq[a][b] && !self.leq[a][self.join[b][g]] {
                        bad.push(format!("order not join-monotone at ({a},{b},{g})"));
                    }
                }
            }
            if self.join[self.bottom][a] != a {
                bad.push(format!("bottom not neutral at {a}"));
            }
            if !self.leq[self.bottom][a] {
                bad.push(format!("bottom not minimal at {a}"));
            }
        }
        bad.truncate(16);
        bad
    }

    fn rel(&self, a: usize, b: usize, c: usize) -> bool {
        (self.relation)(a, b, c)
    }

    fn j(&self, a: usize, b: usize) -> usize {
        self.join[a][b]
    }
}

/// One rule's outcome: tuples are variable-arity (most rules quantify over
/// `(α,β,γ,λ)`; full equivalent exchange needs six elements).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleReport {
    pub rule: String,
    pub tested: u64,
    pub failures: Vec<Vec<usize>>,
}

struct Rule {
    name: &'static str,
    arity: usize,
    /// Evaluates the rule on a tuple; true = holds.
    eval: fn(&SeparoidInstance, &[usize]) -> bool,
    /// Whether the rule applies to this instance (symmetry needs τ = ⊥).
    applies: fn(&SeparoidInstance) -> bool,
}

fn always(_: &SeparoidInstance) -> bool {
    true
}

fn rules() -> Vec<Rule> {
    vec![
        Rule {
            name: "k-extended-left-redundancy",
            arity: 3,
            eval: |s, t| {
                let (a, b, g) = (t[0], t[1], t[2]);
                !s.leq[a][s.j(s.kappa, g)] || s.rel(a, b, g)
            },
            applies: always,
        },
        Rule {
            name: "t-restricted-right-redundancy",
            arity: 2,
            eval: |s, t| s.rel(t[0], s.bottom, s.j(t[1], s.tau)),
            applies: always,
        },
        Rule {
            name: "t-inverted-right-decomposition",
            arity: 3,
            eval: |s, t| {
                let (a, b, g) = (t[0], t[1], t[2]);
                !s.rel(a, b, g) || s.rel(a, s.j(s.tau, b), g)
            },
            applies: always,
        },
        Rule {
            name: "left-decomposition",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !s.rel(s.j(a, l), b, g) || s.rel(l, b, g)
            },
            applies: always,
        },
        Rule {
            name: "right-decomposition",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !s.rel(a, s.j(b, l), g) || s.rel(a, l, g)
            },
            applies: always,
        },
        Rule {
            name: "left-weak-union",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !s.rel(s.j(a, l), b, g) || s.rel(a, b, s.j(l, g))
            },
            applies: always,
        },
        Rule {
            name: "right-weak-union",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !s.rel(a, s.j(b, l), g) || s.rel(a, b, s.j(l, g))
            },
            applies: always,
        },
        Rule {
            name: "left-contraction",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !(s.rel(a, b, s.j(l, g)) && s.rel(l, b, g)) || s.rel(s.j(a, l), b, g)
            },
            applies: always,
        },
        Rule {
            name: "right-contraction",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !(s.rel(a, b, s.j(l, g)) && s.rel(a, l, g)) || s.rel(a, s.j(b, l), g)
            },
            applies: always,
        },
        Rule {
            name: "right-cross-contraction",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !(s.rel(a, b, s.j(l, g)) && s.rel(l, a, g)) || s.rel(a, s.j(b, l), g)
            },
            applies: always,
        },
        Rule {
            name: "flipped-left-cross-contraction",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !(s.rel(a, b, s.j(l, g)) && s.rel(b, l, g)) || s.rel(b, s.j(a, l), g)
            },
            applies: always,
        },
        // Derived lemmas.
        Rule {
            name: "k-extended-inverted-left-decomposition",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !(s.rel(a, b, g) && s.leq[l][s.j(a, s.j(s.kappa, g))]) || s.rel(s.j(a, l), b, g)
            },
            applies: always,
        },
        Rule {
            name: "tk-extended-inverted-right-decomposition",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, l) = (t[0], t[1], t[2], t[3]);
                !(s.rel(a, b, g) && s.leq[l][s.j(s.tau, s.j(b, s.j(s.kappa, g)))])
                    || s.rel(a, s.j(s.tau, s.j(b, l)), g)
            },
            applies: always,
        },
        Rule {
            name: "k-equivalent-exchange",
            arity: 4,
            eval: |s, t| {
                let (a, b, g, g2) = (t[0], t[1], t[2], t[3]);
                !(s.rel(a, b, g) && s.leq[g][s.j(s.kappa, g2)] && s.leq[g2][s.j(s.kappa, g)])
                    || s.rel(a, b, g2)
            },
            applies: always,
        },
        Rule {
            name: "full-k-equivalent-exchange",
            arity: 6,
            eval: |s, t| {
                let (a, b, g, a2, b2, g2) = (t[0], t[1], t[2], t[3], t[4], t[5]);
                let premises = s.leq[a2][s.j(s.kappa, a)]
                    && s.leq[b2][s.j(s.kappa, b)]
                    && s.leq[g][s.j(s.kappa, g2)]
                    && s.leq[g2][s.j(s.kappa, g)];
                !(premises && s.rel(a, b, g)) || s.rel(a2, b2, g2)
            },
            applies: always,
        },
        Rule {
            name: "restricted-symmetry",
            arity: 3,
            eval: |s, t| {
                let (a, b, g) = (t[0], t[1], t[2]);
                !(s.rel(a, b, g) && s.rel(b, s.bottom, g)) || s.rel(b, a, g)
            },
            applies: always,
        },
        Rule {
            name: "t-restricted-symmetry",
            arity: 3,
            eval: |s, t| {
                let (a, b) = (t[0], t[1]);
                let gt = s.j(t[2], s.tau);
                !s.rel(a, b, gt) || s.rel(b, a, gt)
            },
            applies: always,
        },
        Rule {
            name: "symmetry",
            arity: 3,
            eval: |s, t| {
                let (a, b, g) = (t[0], t[1], t[2]);
                !s.rel(a, b, g) || s.rel(b, a, g)
            },
            // Unrestricted symmetry only holds when τ is the bottom element.
            applies: |s| s.tau == s.bottom,
        },
    ]
}

/// Evaluates the full rule suite. Tuples are enumerated exhaustively when
/// `len^arity <= samples`, otherwise sampled with the given seed. Each
/// failing tuple re-evaluates to a violation when replayed.
pub fn check_rules(inst: &SeparoidInstance, samples: u64, seed: u64) -> Result<Vec<RuleReport>, SeparoidError> {
    inst.validate()?;
    let n = inst.len();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for rule in rules() {
        if !(rule.applies)(inst) {
            continue;
        }
        let space: u64 = (n as u64).checked_pow(rule.arity as u32).unwrap_or(u64::MAX);
        let mut failures = Vec::new();
        let mut tested = 0u64;
        if space <= samples {
            let mut tuple = vec![0usize; rule.arity];
            loop {
                tested += 1;
                if !(rule.eval)(inst, &tuple) {
                    failures.push(tuple.clone());
                }
                // Mixed-radix increment.
                let mut i = rule.arity;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    tuple[i] += 1;
                    if tuple[i] < n {
                        break;
                    }
                    tuple[i] = 0;
                }
                if tuple.iter().all(|&v| v == 0) {
                    break;
                }
            }
        } else {
            for _ in 0..samples {
                let tuple: Vec<usize> = (0..rule.arity).map(|_| rng.gen_range(0..n)).collect();
                tested += 1;
                if !(rule.eval)(inst, &tuple) {
                    failures.push(tuple);
                }
            }
        }
        failures.truncate(8);
        reports.push(RuleReport {
            rule: rule.name.to_string(),
            tested,
            failures,
        });
    }
    Ok(reports)
}

/// Re-evaluates a reported failure tuple; true = still a violation.
pub fn replay_failure(inst: &SeparoidInstance, rule_name: &str, tuple: &[usize]) -> bool {
    rules()
        .iter()
        .find(|r| r.name == rule_name)
        .map(|r| !(r.eval)(inst, tuple))
        .unwrap_or(false)
}

/// The plus-construction: `α ⊥' β | γ :⇔ α ⊥ τ₂∨β | κ₂∨γ`, packaged as a
/// `(τ₁∨τ₂)-(κ₁∨κ₂)`-separoid. Requires `τ₂ ≪ τ₂`.
pub fn derive_relation(
    inst: &SeparoidInstance,
    tau2: usize,
    kappa2: usize,
) -> Result<SeparoidInstance, SeparoidError> {
    inst.validate()?;
    if tau2 >= inst.len() || kappa2 >= inst.len() {
        return Err(SeparoidError::Precondition("element out of range".into()));
    }
    if !inst.leq[tau2][tau2] {
        return Err(SeparoidError::Precondition(
            "tau2 must satisfy tau2 << tau2".into(),
        ));
    }
    let join = inst.join.clone();
    let base = inst.relation.clone();
    let jt: Vec<Vec<usize>> = inst.join.clone();
    let relation: RelationOracle = Arc::new(move |a, b, c| {
        base(a, jt[tau2][b], jt[kappa2][c])
    });
    Ok(SeparoidInstance {
        labels: inst.labels.clone(),
        join,
        leq: inst.leq.clone(),
        relation,
        bottom: inst.bottom,
        tau: inst.join[inst.tau][tau2],
        kappa: inst.join[inst.kappa][kappa2],
    })
}

/// Symmetrization: logical OR of the two orientations with the order
/// `α ≪_κ β :⇔ α ≪ κ∨β`; the result is a `⊥-⊥`-separoid and passes the
/// symmetric suite including unrestricted symmetry.
pub fn symmetrize(inst: &SeparoidInstance) -> SeparoidInstance {
    let base = inst.relation.clone();
    let relation: RelationOracle = Arc::new(move |a, b, c| base(a, b, c) || base(b, a, c));
    let n = inst.len();
    let mut leq = vec![vec![false; n]; n];
    for (a, row) in leq.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate() {
            *slot = inst.leq[a][inst.join[inst.kappa][b]];
        }
    }
    SeparoidInstance {
        labels: inst.labels.clone(),
        join: inst.join.clone(),
        leq,
        relation,
        bottom: inst.bottom,
        tau: inst.bottom,
        kappa: inst.bottom,
    }
}

/// Builds a carrier by closing generator elements under a join operation,
/// returning the canonical elements and the join table. `join` must be
/// deterministic and produce canonical elements.
pub fn close_under_join<T: Clone + Ord>(
    generators: &[T],
    join: impl Fn(&T, &T) -> T,
) -> (Vec<T>, Vec<Vec<usize>>) {
    let mut elems: Vec<T> = Vec::new();
    let mut index: BTreeMap<T, usize> = BTreeMap::new();
    for g in generators {
        if !index.contains_key(g) {
            index.insert(g.clone(), elems.len());
            elems.push(g.clone());
        }
    }
    // Fixed-point closure.
    let mut frontier: Vec<usize> = (0..elems.len()).collect();
    while let Some(i) = frontier.pop() {
        for j in 0..elems.len() {
            for (x, y) in [(i, j), (j, i)] {
                let joined = join(&elems[x], &elems[y]);
                if !index.contains_key(&joined) {
                    index.insert(joined.clone(), elems.len());
                    elems.push(joined);
                    frontier.push(elems.len() - 1);
                }
            }
        }
    }
    let n = elems.len();
    let mut table = vec![vec![0; n]; n];
    for (a, row) in table.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate() {
            *slot = index[&join(&elems[a], &elems[b])];
        }
    }
    (elems, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Cdmg;
    use crate::randgen;
    use crate::separation::sigma_separoid_instance;
    use crate::tci::bridge::tci_separoid_instance;
    use std::collections::BTreeSet;

    fn assert_no_failures(reports: &[RuleReport], ctx: &str) {
        for r in reports {
            assert!(
                r.failures.is_empty(),
                "{ctx}: rule {} failed on {:?}",
                r.rule,
                r.failures
            );
        }
    }

    fn fig1() -> Cdmg {
        Cdmg::build(
            &["v1", "v2"],
            &["v3", "v4", "v5", "v6", "v7", "v8"],
            &[
                ("v1", "v4"),
                ("v2", "v6"),
                ("v2", "v7"),
                ("v3", "v7"),
                ("v3", "v8"),
                ("v4", "v5"),
                ("v4", "v6"),
                ("v6", "v5"),
            ],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn sigma_instance_passes_rules() {
        let mut rng = randgen::rng_for(331);
        for i in 0..8 {
            let g = randgen::random_cdmg(&mut rng, 5, true, true);
            let gens: Vec<BTreeSet<String>> = (0..3)
                .map(|_| randgen::random_node_set(&mut rng, &g, 0.4))
                .collect();
            let inst = sigma_separoid_instance(&g, &gens);
            assert!(inst.check_compat().is_empty());
            let reports = check_rules(&inst, 400, 1000 + i).unwrap();
            assert_no_failures(&reports, &format!("sigma instance {i}"));
        }
    }

    #[test]
    fn tci_instance_passes_rules() {
        let mut rng = randgen::rng_for(337);
        for i in 0..6 {
            let ts = randgen::random_trans_space(
                &mut rng,
                &randgen::TransSpaceParams {
                    max_w_size: 6,
                    max_t_size: 3,
                    max_denom: 8,
                    zero_prob: 0.25,
                },
            );
            let gens = randgen::random_det_tables(&mut rng, &ts, 2, 3);
            let inst = tci_separoid_instance(&ts, &gens).unwrap();
            assert!(inst.check_compat().is_empty(), "compat failed");
            let reports = check_rules(&inst, 300, 2000 + i).unwrap();
            assert_no_failures(&reports, &format!("tci instance {i}"));
        }
    }

    #[test]
    fn broken_relation_is_caught_and_replays() {
        // Always-false relation: κ-extended left redundancy must fail on
        // an A ⊆ C instance.
        let g = fig1();
        let gens = vec![
            ["v4"].iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
        ];
        let mut inst = sigma_separoid_instance(&g, &gens);
        inst.relation = std::sync::Arc::new(|_, _, _| false);
        let reports = check_rules(&inst, 400, 7).unwrap();
        let red = reports
            .iter()
            .find(|r| r.rule == "k-extended-left-redundancy")
            .unwrap();
        assert!(!red.failures.is_empty());
        for f in &red.failures {
            assert!(replay_failure(&inst, "k-extended-left-redundancy", f));
        }
    }

    #[test]
    fn derive_relation_neutral_and_theorem() {
        let mut rng = randgen::rng_for(347);
        let g = randgen::random_cdmg(&mut rng, 5, true, true);
        let gens: Vec<BTreeSet<String>> = (0..2)
            .map(|_| randgen::random_node_set(&mut rng, &g, 0.4))
            .collect();
        let inst = sigma_separoid_instance(&g, &gens);
        // τ₂ = κ₂ = ⊥ leaves the relation unchanged.
        let same = derive_relation(&inst, inst.bottom, inst.bottom).unwrap();
        for a in 0..inst.len() {
            for b in 0..inst.len() {
                for c in 0..inst.len() {
                    assert_eq!((inst.relation)(a, b, c), (same.relation)(a, b, c));
                }
            }
        }
        // Fixing a node set as τ₂ still passes the rules (plus-construction).
        let tau2 = 1 % inst.len();
        if inst.leq[tau2][tau2] {
            let derived = derive_relation(&inst, tau2, inst.bottom).unwrap();
            let reports = check_rules(&derived, 300, 31).unwrap();
            assert_no_failures(&reports, "derived sigma");
            // Deriving twice composes.
            let tau3 = 2 % inst.len();
            if derived.leq[tau3][tau3] {
                let twice = derive_relation(&derived, tau3, inst.bottom).unwrap();
                let reports = check_rules(&twice, 300, 37).unwrap();
                assert_no_failures(&reports, "twice-derived sigma");
                assert_eq!(
                    twice.tau,
                    inst.join[inst.join[inst.tau][tau2]][tau3]
                );
            }
        }
    }

    #[test]
    fn derive_relation_on_tci_instance() {
        let mut rng = randgen::rng_for(349);
        let ts = randgen::random_trans_space(
            &mut rng,
            &randgen::TransSpaceParams {
                max_w_size: 4,
                max_t_size: 2,
                max_denom: 6,
                zero_prob: 0.2,
            },
        );
        let gens = randgen::random_det_tables(&mut rng, &ts, 2, 2);
        let inst = tci_separoid_instance(&ts, &gens).unwrap();
        // κ₂ = a fixed deterministic variable; any element with κ₂ ≪ κ₂.
        let kappa2 = (0..inst.len()).find(|&e| inst.leq[e][e]).unwrap();
        let derived = derive_relation(&inst, inst.bottom, kappa2).unwrap();
        let reports = check_rules(&derived, 200, 41).unwrap();
        assert_no_failures(&reports, "derived tci");
    }

    #[test]
    fn symmetrization_yields_symmetric_separoid() {
        let mut rng = randgen::rng_for(353);
        for i in 0..5 {
            let g = randgen::random_cdmg(&mut rng, 5, true, true);
            let gens: Vec<BTreeSet<String>> = (0..3)
                .map(|_| randgen::random_node_set(&mut rng, &g, 0.4))
                .collect();
            let inst = sigma_separoid_instance(&g, &gens);
            let sym = symmetrize(&inst);
            assert_eq!(sym.tau, sym.bottom);
            let reports = check_rules(&sym, 400, 4000 + i).unwrap();
            assert_no_failures(&reports, &format!("symmetrized sigma {i}"));
            assert!(reports.iter().any(|r| r.rule == "symmetry"));
        }
    }

    #[test]
    fn symmetrize_fixes_already_symmetric_relations() {
        let mut rng = randgen::rng_for(359);
        let mut g = randgen::random_cdmg(&mut rng, 5, true, true);
        while !g.inputs().is_empty() {
            g = randgen::random_cdmg(&mut rng, 5, true, true);
        }
        let gens: Vec<BTreeSet<String>> = (0..3)
            .map(|_| randgen::random_node_set(&mut rng, &g, 0.4))
            .collect();
        // With J = ∅ sigma-separation is already symmetric; symmetrizing
        // does not change the relation.
        let inst = sigma_separoid_instance(&g, &gens);
        let sym = symmetrize(&inst);
        for a in 0..inst.len() {
            for b in 0..inst.len() {
                for c in 0..inst.len() {
                    assert_eq!((inst.relation)(a, b, c), (sym.relation)(a, b, c));
                }
            }
        }
    }

    #[test]
    fn tci_symmetrization() {
        let mut rng = randgen::rng_for(361);
        let ts = randgen::random_trans_space(
            &mut rng,
            &randgen::TransSpaceParams {
                max_w_size: 4,
                max_t_size: 3,
                max_denom: 6,
                zero_prob: 0.2,
            },
        );
        let gens = randgen::random_det_tables(&mut rng, &ts, 2, 2);
        let inst = tci_separoid_instance(&ts, &gens).unwrap();
        let sym = symmetrize(&inst);
        let reports = check_rules(&sym, 200, 43).unwrap();
        assert_no_failures(&reports, "symmetrized tci");
    }

    #[test]
    fn malformed_tables_are_rejected() {
        let inst = SeparoidInstance {
            labels: vec!["a".into()],
            join: vec![],
            leq: vec![vec![true]],
            relation: std::sync::Arc::new(|_, _, _| true),
            bottom: 0,
            tau: 0,
            kappa: 0,
        };
        assert!(inst.validate().is_err());
        assert!(check_rules(&inst, 10, 0).is_err());
    }
}
