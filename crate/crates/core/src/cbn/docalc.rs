//! Do-calculus rules 1-3 and the conditional backdoor adjustment.
//!
//! Each rule checks its graphical premise on the appropriate surgered graph;
//! on success the emitted kernel is verified by exact comparison to be a
//! simultaneous version of every claimed conditional interventional kernel.

use std::collections::BTreeSet;

use crate::cbn::{Cbn, CbnError};
use crate::graph::{intervention_node, Walk};
use crate::kernel::Kernel;
use crate::separation::{sigma_separated, SepQuery};
use crate::tci::tci_check;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DoRule {
    /// Insertion/deletion of observation.
    Rule1,
    /// Action/observation exchange.
    Rule2,
    /// Insertion/deletion of action.
    Rule3,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DoQuery {
    pub rule: DoRule,
    pub a: BTreeSet<String>,
    pub b: BTreeSet<String>,
    pub c: BTreeSet<String>,
    pub d: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoReport {
    pub applicable: bool,
    /// An open walk violating the graphical premise, when not applicable.
    pub premise_witness: Option<Walk>,
    /// The emitted kernel (only when applicable).
    pub kernel: Option<Kernel>,
    /// Per-identity verification results, one per claimed version.
    pub identities: Vec<(String, bool)>,
    pub sound: bool,
}

fn check_disjoint(sets: &[(&str, &BTreeSet<String>)]) -> Result<(), CbnError> {
    for (i, (na, sa)) in sets.iter().enumerate() {
        for (nb, sb) in sets.iter().skip(i + 1) {
            if let Some(v) = sa.intersection(sb).next() {
                return Err(CbnError::InvalidQuery(format!(
                    "{na} and {nb} overlap at {v:?}"
                )));
            }
        }
    }
    Ok(())
}

fn validate_query(m: &Cbn, q: &DoQuery) -> Result<(), CbnError> {
    let observed = m.observed();
    for (name, set) in [("a", &q.a), ("b", &q.b), ("c", &q.c)] {
        for v in set.iter() {
            if !observed.contains(v) {
                return Err(CbnError::InvalidQuery(format!(
                    "{name} must contain observed output nodes; {v:?} is not"
                )));
            }
        }
    }
    for v in &q.d {
        if !m.graph().inputs().contains(v) && !observed.contains(v) {
            return Err(CbnError::InvalidQuery(format!(
                "d must contain input or observed nodes; {v:?} is not"
            )));
        }
    }
    check_disjoint(&[("a", &q.a), ("b", &q.b), ("c", &q.c), ("d", &q.d)])
}

fn subsets(set: &BTreeSet<String>) -> Vec<BTreeSet<String>> {
    let items: Vec<&String> = set.iter().collect();
    (0..(1usize << items.len()))
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, v)| (*v).clone())
                .collect()
        })
        .collect()
}

fn set_names(set: &BTreeSet<String>) -> String {
    let v: Vec<&str> = set.iter().map(|s| s.as_str()).collect();
    format!("{{{}}}", v.join(","))
}

/// Runs one do-calculus rule: graphical premise, witness kernel from the
/// TCI factorization, and exhaustive verification of every simultaneous
/// version identity.
pub fn do_calculus(m: &Cbn, q: &DoQuery) -> Result<DoReport, CbnError> {
    validate_query(m, q)?;
    match q.rule {
        DoRule::Rule1 => rule1(m, q),
        DoRule::Rule2 => rule23(m, q, true),
        DoRule::Rule3 => rule23(m, q, false),
    }
}

fn rule1(m: &Cbn, q: &DoQuery) -> Result<DoReport, CbnError> {
    let m1 = m.hard_intervene(&q.d)?;
    let graph = m1.marginal_graph()?;
    let cd: BTreeSet<String> = q.c.union(&q.d).cloned().collect();
    let sep = sigma_separated(
        &graph,
        &SepQuery::from_sets(q.a.clone(), q.b.clone(), cd.clone()),
    )?;
    if !sep.separated {
        return Ok(DoReport {
            applicable: false,
            premise_witness: sep.witness_walk,
            kernel: None,
            identities: Vec::new(),
            sound: false,
        });
    }
    let ts = m1.trans_space()?;
    let x = ts.project(&q.a, &[])?;
    let y = ts.project(&q.b, &[])?;
    let z = ts.project(&cd, &[])?;
    let verdict = tci_check(&ts, &x, &y, &z)?;
    debug_assert!(verdict.independent, "global Markov property violated");
    let kernel = verdict.witness.expect("separated queries carry a witness");

    let obs = m1.observational_kernel()?;
    let mut identities = Vec::new();
    for b_sub in subsets(&q.b) {
        let keep_all: BTreeSet<String> =
            q.a.union(&b_sub).cloned().chain(q.c.iter().cloned()).collect();
        let keep_cond: BTreeSet<String> = b_sub.union(&q.c).cloned().collect();
        let lhs = obs.marginalize(&keep_all)?;
        let rhs = Kernel::product(&kernel, &obs.marginalize(&keep_cond)?)?;
        identities.push((
            format!("version-of P(A|B~={},C,do(D,J))", set_names(&b_sub)),
            lhs == rhs,
        ));
    }
    let sound = identities.iter().all(|(_, ok)| *ok);
    Ok(DoReport {
        applicable: true,
        premise_witness: None,
        kernel: Some(kernel),
        identities,
        sound,
    })
}

/// Rules 2 and 3 share the soft-extended graph `G(V∖D|do(D∪J,I_B))`; rule 2
/// conditions on `B ∪ C ∪ D`, rule 3 on `C ∪ D`.
fn rule23(m: &Cbn, q: &DoQuery, observation_exchange: bool) -> Result<DoReport, CbnError> {
    let m2 = m.hard_intervene(&q.d)?.soft_intervene(&q.b)?;
    let graph = m2.marginal_graph()?;
    let i_b: BTreeSet<String> = q.b.iter().map(|b| intervention_node(b)).collect();
    let cond: BTreeSet<String> = if observation_exchange {
        q.b.union(&q.c).cloned().chain(q.d.iter().cloned()).collect()
    } else {
        q.c.union(&q.d).cloned().collect()
    };
    let sep = sigma_separated(
        &graph,
        &SepQuery::from_sets(q.a.clone(), i_b.clone(), cond.clone()),
    )?;
    if !sep.separated {
        return Ok(DoReport {
            applicable: false,
            premise_witness: sep.witness_walk,
            kernel: None,
            identities: Vec::new(),
            sound: false,
        });
    }
    let ts = m2.trans_space()?;
    let x = ts.project(&q.a, &[])?;
    let y = ts.project(&i_b, &[])?;
    let z = ts.project(&cond, &[])?;
    let verdict = tci_check(&ts, &x, &y, &z)?;
    debug_assert!(verdict.independent, "global Markov property violated");
    let kernel = verdict.witness.expect("separated queries carry a witness");

    let mut identities = Vec::new();
    for b2 in subsets(&q.b) {
        let b1: BTreeSet<String> = q.b.difference(&b2).cloned().collect();
        let intervened: BTreeSet<String> = q.d.union(&b2).cloned().collect();
        let m_split = m.hard_intervene(&intervened)?;
        let obs = m_split.observational_kernel()?;
        let (keep_all, keep_cond, label) = if observation_exchange {
            // Q is a version of P(A | B1, do(B2), C, do(D,J)).
            let keep_cond: BTreeSet<String> = b1.union(&q.c).cloned().collect();
            let keep_all: BTreeSet<String> = q.a.union(&keep_cond).cloned().collect();
            (
                keep_all,
                keep_cond,
                format!("version-of P(A|B1={},do(B2={}),C,do(D,J))", set_names(&b1), set_names(&b2)),
            )
        } else {
            // Rule 3 quantifies over hard interventions on subsets of B.
            let keep_all: BTreeSet<String> = q.a.union(&q.c).cloned().collect();
            (
                keep_all,
                q.c.clone(),
                format!("version-of P(A|do(B~={}),C,do(D,J))", set_names(&b2)),
            )
        };
        let lhs = obs.marginalize(&keep_all)?;
        let rhs = Kernel::product(&kernel, &obs.marginalize(&keep_cond)?)?;
        identities.push((label, lhs == rhs));
    }
    let sound = identities.iter().all(|(_, ok)| *ok);
    Ok(DoReport {
        applicable: true,
        premise_witness: None,
        kernel: Some(kernel),
        identities,
        sound,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackdoorReport {
    pub applicable: bool,
    /// `(premise name, violating open walk)` when not applicable.
    pub premise_witness: Option<(String, Walk)>,
    /// `P(X_A|X_F,X_C,do-free(X_B),do(X_D)) ∘ P(X_F|X_C,do-free(X_B),do(X_D))`.
    pub adjusted: Option<Kernel>,
    /// The interventional conditional it must match at positive mass.
    pub interventional: Option<Kernel>,
    /// Conditioning points compared / skipped as null.
    pub compared: u64,
    pub skipped_null: u64,
    pub sound: bool,
}

/// Conditional backdoor adjustment: premises
/// `F ⊥σ I_B | C∪D` and `A ⊥σ I_B | B∪F∪C∪D` on the soft graph, then the
/// composed adjusted kernel must equal `P(X_A|X_C,do(X_B,X_D))` at every
/// positive-mass conditioning point. Requires `J ⊆ D`.
pub fn backdoor_adjust(
    m: &Cbn,
    a: &BTreeSet<String>,
    b: &BTreeSet<String>,
    c: &BTreeSet<String>,
    f: &BTreeSet<String>,
    d: &BTreeSet<String>,
) -> Result<BackdoorReport, CbnError> {
    let observed = m.observed();
    for (name, set) in [("a", a), ("b", b), ("c", c), ("f", f)] {
        for v in set.iter() {
            if !observed.contains(v) {
                return Err(CbnError::InvalidQuery(format!(
                    "{name} must contain observed output nodes; {v:?} is not"
                )));
            }
        }
    }
    for j in m.graph().inputs() {
        if !d.contains(j) {
            return Err(CbnError::InvalidQuery(format!(
                "backdoor adjustment requires J ⊆ D; input {j:?} missing from d"
            )));
        }
    }
    check_disjoint(&[("a", a), ("b", b), ("c", c), ("f", f), ("d", d)])?;

    let m2 = m.hard_intervene(d)?.soft_intervene(b)?;
    let graph = m2.marginal_graph()?;
    let i_b: BTreeSet<String> = b.iter().map(|x| intervention_node(x)).collect();
    let cd: BTreeSet<String> = c.union(d).cloned().collect();
    let bfcd: BTreeSet<String> = b
        .union(f)
        .cloned()
        .chain(c.iter().cloned())
        .chain(d.iter().cloned())
        .collect();

    let sep_f = sigma_separated(&graph, &SepQuery::from_sets(f.clone(), i_b.clone(), cd.clone()))?;
    if !sep_f.separated {
        return Ok(BackdoorReport {
            applicable: false,
            premise_witness: sep_f.witness_walk.map(|w| ("F ⊥σ I_B | C∪D".to_string(), w)),
            adjusted: None,
            interventional: None,
            compared: 0,
            skipped_null: 0,
            sound: false,
        });
    }
    let sep_a = sigma_separated(
        &graph,
        &SepQuery::from_sets(a.clone(), i_b.clone(), bfcd.clone()),
    )?;
    if !sep_a.separated {
        return Ok(BackdoorReport {
            applicable: false,
            premise_witness: sep_a
                .witness_walk
                .map(|w| ("A ⊥σ I_B | B∪F∪C∪D".to_string(), w)),
            adjusted: None,
            interventional: None,
            compared: 0,
            skipped_null: 0,
            sound: false,
        });
    }

    let ts = m2.trans_space()?;
    let q_a = tci_check(
        &ts,
        &ts.project(a, &[])?,
        &ts.project(&i_b, &[])?,
        &ts.project(&bfcd, &[])?,
    )?
    .witness
    .expect("premise 2 grants a witness");
    let q_f = tci_check(
        &ts,
        &ts.project(f, &[])?,
        &ts.project(&i_b, &[])?,
        &ts.project(&cd, &[])?,
    )?
    .witness
    .expect("premise 1 grants a witness");
    let adjusted = Kernel::compose(&q_a, &q_f)?;

    // Interventional side: P(X_A | X_C, do(X_B, X_D)).
    let intervened: BTreeSet<String> = b.union(d).cloned().collect();
    let m_int = m.hard_intervene(&intervened)?;
    let obs_int = m_int.observational_kernel()?;
    let keep_ac: BTreeSet<String> = a.union(c).cloned().collect();
    let joint_ac = obs_int.marginalize(&keep_ac)?;
    let conditional = joint_ac.disintegrate(&c.iter().cloned().collect())?;
    let cond_mass = obs_int.marginalize(&c.iter().cloned().collect())?;

    debug_assert_eq!(adjusted.source(), conditional.source());
    let src = adjusted.source().clone();
    let c_space = cond_mass.target().clone();
    let bd_space = cond_mass.source().clone();
    let c_pos = src.positions_of(&c_space)?;
    let bd_pos = src.positions_of(&bd_space)?;
    let mut compared = 0u64;
    let mut skipped_null = 0u64;
    let mut sound = true;
    for s in 0..src.size() {
        let tuple = src.index_to_tuple(s);
        let ci = c_space.tuple_to_index(&c_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
        let bdi = bd_space.tuple_to_index(&bd_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
        if num_traits::Zero::is_zero(cond_mass.entry(bdi, ci)) {
            skipped_null += 1;
            continue;
        }
        compared += 1;
        if adjusted.row(s) != conditional.row(s) {
            sound = false;
        }
    }
    Ok(BackdoorReport {
        applicable: true,
        premise_witness: None,
        adjusted: Some(adjusted),
        interventional: Some(conditional),
        compared,
        skipped_null,
        sound,
    })
}
