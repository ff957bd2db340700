//! Bridge from transitional conditional independence to the abstract
//! separoid harness.
//!
//! Carrier elements are deterministic variables on `(W,T)` in canonical
//! form (outcome labels relabeled by first occurrence), so codomain
//! isomorphisms collapse and the pairing join is exactly associative and
//! commutative. The order is `⊑_K`, τ is the `T`-projection, κ = ⊥ is the
//! constant variable.

use std::sync::Arc;

use crate::kernel::{FiniteVar, Space, TransRv};
use crate::separoid::{close_under_join, RelationOracle, SeparoidInstance};
use crate::tci::{tci_check, TciError, TransSpace};

/// Relabels a map table by first occurrence, the canonical representative
/// of its induced partition.
pub fn canonical_map(table: &[usize]) -> Vec<usize> {
    let mut relabel: Vec<Option<usize>> = vec![None; table.iter().max().map(|m| m + 1).unwrap_or(0)];
    let mut next = 0usize;
    table
        .iter()
        .map(|&v| match relabel[v] {
            Some(r) => r,
            None => {
                relabel[v] = Some(next);
                next += 1;
                next - 1
            }
        })
        .collect()
}

/// The canonical deterministic rv for a carrier element, with a caller
/// supplied variable name.
pub fn rv_of_table(table: &[usize], name: &str) -> TransRv {
    let card = table.iter().max().map(|m| m + 1).unwrap_or(1).max(1);
    let var = FiniteVar {
        name: name.to_string(),
        outcomes: (0..card).map(|i| i.to_string()).collect(),
    };
    TransRv::det(
        Space::singleton(var).expect("fresh variable"),
        table.to_vec(),
    )
}

/// Builds a TCI separoid instance over the closure of the generators (raw
/// map tables over the joined `(W,T)` space) under pairing.
pub fn tci_separoid_instance(
    ts: &TransSpace,
    generators: &[Vec<usize>],
) -> Result<SeparoidInstance, TciError> {
    let n_wt = ts.wt().size();
    let bottom_table = vec![0usize; n_wt];
    // T-projection as a raw table.
    let t_pos = ts.wt().positions_of(ts.t())?;
    let t_table: Vec<usize> = (0..n_wt)
        .map(|i| {
            let tuple = ts.wt().index_to_tuple(i);
            ts.t()
                .tuple_to_index(&t_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>())
        })
        .collect();
    let mut gens: Vec<Vec<usize>> = vec![canonical_map(&bottom_table), canonical_map(&t_table)];
    for g in generators {
        assert_eq!(g.len(), n_wt, "generator table must cover (W,T)");
        gens.push(canonical_map(g));
    }
    let (elems, join) = close_under_join(&gens, |a: &Vec<usize>, b: &Vec<usize>| {
        let kb = b.iter().max().map(|m| m + 1).unwrap_or(1);
        let paired: Vec<usize> = a.iter().zip(b).map(|(&x, &y)| x * kb + y).collect();
        canonical_map(&paired)
    });
    let labels: Vec<String> = elems
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let card = e.iter().max().map(|m| m + 1).unwrap_or(1);
            format!("v{i}(#{card})")
        })
        .collect();
    let n = elems.len();
    let bottom = elems
        .iter()
        .position(|e| e.iter().all(|&v| v == 0))
        .expect("constant map is a generator");
    let tau = elems
        .iter()
        .position(|e| *e == canonical_map(&t_table))
        .expect("T-projection is a generator");

    let mut leq = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            let ra = rv_of_table(&elems[a], "lhs");
            let rb = rv_of_table(&elems[b], "rhs");
            leq[a][b] = ts.rv_leq(&ra, &rb)?.is_some();
        }
    }
    let ts_rel = ts.clone();
    let elems_rel = elems;
    let relation: RelationOracle = Arc::new(move |a, b, c| {
        let x = rv_of_table(&elems_rel[a], "x");
        let y = rv_of_table(&elems_rel[b], "y");
        let z = rv_of_table(&elems_rel[c], "z");
        tci_check(&ts_rel, &x, &y, &z)
            .expect("well-formed carrier rvs")
            .independent
    });
    Ok(SeparoidInstance {
        labels,
        join,
        leq,
        relation,
        bottom,
        tau,
        kappa: bottom,
    })
}
