//! Seeded random instances for the fuzz harness and the acceptance suite:
//! graphs (cycles and bidirected edges permitted), exact rational kernels
//! with zero-mass rows, CBNs, and transition spaces.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::cbn::Cbn;
use crate::graph::Cdmg;
use crate::kernel::{FiniteVar, Kernel, Space, TransRv};
use crate::rational::{rat, zero, Rat};
use crate::separation::SepQuery;
use crate::tci::TransSpace;

pub fn rng_for(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random CDMG with up to `max_nodes` nodes; cycles and bidirected edges
/// appear unless disabled.
pub fn random_cdmg(rng: &mut StdRng, max_nodes: usize, cyclic: bool, bidirected: bool) -> Cdmg {
    let n = rng.gen_range(1..=max_nodes.max(1));
    let n_inputs = rng.gen_range(0..=(n / 2));
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let inputs: Vec<String> = names[..n_inputs].to_vec();
    let outputs: Vec<String> = names[n_inputs..].to_vec();
    let edge_prob = rng.gen_range(0.15..0.5);
    let mut directed = Vec::new();
    for tail in &names {
        for head in &outputs {
            if tail == head {
                continue;
            }
            if !cyclic {
                // Forward edges only, in name order.
                if tail >= head {
                    continue;
                }
            }
            if rng.gen_bool(edge_prob) {
                directed.push((tail.clone(), head.clone()));
            }
        }
    }
    let mut bi = Vec::new();
    if bidirected {
        let bi_prob = rng.gen_range(0.0..0.3);
        for (i, a) in outputs.iter().enumerate() {
            for b in outputs.iter().skip(i + 1) {
                if rng.gen_bool(bi_prob) {
                    bi.push((a.clone(), b.clone()));
                }
            }
        }
    }
    Cdmg::new(inputs, outputs, directed, bi).expect("generated graph is well-formed")
}

/// Random subset of the graph's nodes.
pub fn random_node_set(rng: &mut StdRng, g: &Cdmg, prob: f64) -> BTreeSet<String> {
    g.nodes()
        .filter(|_| rng.gen_bool(prob))
        .cloned()
        .collect()
}

/// Random query with independent membership, overlaps permitted.
pub fn random_query(rng: &mut StdRng, g: &Cdmg) -> SepQuery {
    SepQuery::from_sets(
        random_node_set(rng, g, 1.0 / 3.0),
        random_node_set(rng, g, 1.0 / 3.0),
        random_node_set(rng, g, 1.0 / 3.0),
    )
}

/// Exact random distribution with bounded denominators; with probability
/// `zero_prob` an entry gets weight zero (at least one entry stays
/// positive).
pub fn random_row(rng: &mut StdRng, len: usize, max_denom: u32, zero_prob: f64) -> Vec<Rat> {
    assert!(len > 0);
    let mut weights: Vec<i64> = (0..len)
        .map(|_| {
            if rng.gen_bool(zero_prob) {
                0
            } else {
                rng.gen_range(1..=max_denom as i64)
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0) {
        weights[rng.gen_range(0..len)] = rng.gen_range(1..=max_denom as i64);
    }
    let total: i64 = weights.iter().sum();
    weights.into_iter().map(|w| rat(w, total)).collect()
}

pub fn random_kernel(
    rng: &mut StdRng,
    source: Space,
    target: Space,
    max_denom: u32,
    zero_prob: f64,
) -> Kernel {
    let rows = (0..source.size())
        .map(|_| random_row(rng, target.size(), max_denom, zero_prob))
        .collect();
    Kernel::new(source, target, rows).expect("random rows are stochastic")
}

/// Random deterministic map table.
pub fn random_map(rng: &mut StdRng, domain: usize, codomain: usize) -> Vec<usize> {
    (0..domain).map(|_| rng.gen_range(0..codomain)).collect()
}

pub struct CbnParams {
    pub max_inputs: usize,
    pub max_observed: usize,
    pub max_latent: usize,
    pub max_outcomes: usize,
    pub edge_prob: f64,
    pub max_denom: u32,
    pub zero_prob: f64,
}

impl Default for CbnParams {
    fn default() -> Self {
        CbnParams {
            max_inputs: 2,
            max_observed: 5,
            max_latent: 2,
            max_outcomes: 3,
            edge_prob: 0.4,
            max_denom: 12,
            zero_prob: 0.2,
        }
    }
}

/// Random CBN: an acyclic conditional DAG with random rational node kernels.
pub fn random_cbn(rng: &mut StdRng, p: &CbnParams) -> Cbn {
    let n_inputs = rng.gen_range(0..=p.max_inputs);
    let n_observed = rng.gen_range(1..=p.max_observed);
    let n_latent = rng.gen_range(0..=p.max_latent);
    let inputs: Vec<String> = (0..n_inputs).map(|i| format!("j{i}")).collect();
    let mut outputs: Vec<String> = (0..n_observed).map(|i| format!("v{i}")).collect();
    let latent: BTreeSet<String> = (0..n_latent).map(|i| format!("u{i}")).collect();
    outputs.extend(latent.iter().cloned());

    // Random topological order over the outputs; inputs come first.
    let mut order = outputs.clone();
    order.shuffle(rng);
    let mut directed = Vec::new();
    for (i, head) in order.iter().enumerate() {
        for tail in inputs.iter().chain(order[..i].iter()) {
            if rng.gen_bool(p.edge_prob) {
                directed.push((tail.clone(), head.clone()));
            }
        }
    }
    let graph = Cdmg::new(
        inputs.clone(),
        outputs.clone(),
        directed,
        Vec::<(String, String)>::new(),
    )
    .expect("generated CBN graph is well-formed");

    let mut spaces: BTreeMap<String, FiniteVar> = BTreeMap::new();
    for v in graph.nodes() {
        let k = rng.gen_range(2..=p.max_outcomes.max(2));
        spaces.insert(
            v.clone(),
            FiniteVar {
                name: v.clone(),
                outcomes: (0..k).map(|i| i.to_string()).collect(),
            },
        );
    }
    let mut kernels: BTreeMap<String, Kernel> = BTreeMap::new();
    for v in graph.outputs() {
        let parent_space = Space::new(
            graph
                .parents(v)
                .expect("node exists")
                .iter()
                .map(|q| spaces[q].clone())
                .collect(),
        )
        .expect("parent names distinct");
        let node_space = Space::singleton(spaces[v].clone()).expect("node var");
        kernels.insert(
            v.clone(),
            random_kernel(rng, parent_space, node_space, p.max_denom, p.zero_prob),
        );
    }
    Cbn::new(graph, latent, spaces, kernels).expect("generated CBN is valid")
}

pub struct TransSpaceParams {
    pub max_w_size: usize,
    pub max_t_size: usize,
    pub max_denom: u32,
    pub zero_prob: f64,
}

impl Default for TransSpaceParams {
    fn default() -> Self {
        TransSpaceParams {
            max_w_size: 8,
            max_t_size: 4,
            max_denom: 12,
            zero_prob: 0.2,
        }
    }
}

/// Random transition probability space `(W × T, K(W|T))` with rational
/// kernels including zero-mass rows.
pub fn random_trans_space(rng: &mut StdRng, p: &TransSpaceParams) -> TransSpace {
    // W: one or two variables whose product stays within the budget.
    let w_vars = if rng.gen_bool(0.5) && p.max_w_size >= 4 {
        let a = rng.gen_range(2..=(p.max_w_size / 2));
        let b = rng.gen_range(2..=(p.max_w_size / a).max(2));
        vec![("w0", a), ("w1", b)]
    } else {
        vec![("w0", rng.gen_range(2..=p.max_w_size))]
    };
    let w_space = Space::new(
        w_vars
            .iter()
            .map(|(n, k)| FiniteVar {
                name: n.to_string(),
                outcomes: (0..*k).map(|i| i.to_string()).collect(),
            })
            .collect(),
    )
    .expect("w space");
    let t_size = rng.gen_range(1..=p.max_t_size);
    let t_space = if t_size == 1 && rng.gen_bool(0.5) {
        Space::empty()
    } else {
        Space::singleton(FiniteVar {
            name: "t0".to_string(),
            outcomes: (0..t_size).map(|i| i.to_string()).collect(),
        })
        .expect("t space")
    };
    let base = random_kernel(rng, t_space, w_space, p.max_denom, p.zero_prob);
    TransSpace::new(base).expect("w/t names disjoint")
}

/// Random deterministic transitional variables over the space (raw map
/// tables), with at most `max_card` outcome classes each.
pub fn random_det_tables(
    rng: &mut StdRng,
    ts: &TransSpace,
    count: usize,
    max_card: usize,
) -> Vec<Vec<usize>> {
    (0..count)
        .map(|_| {
            let card = rng.gen_range(1..=max_card.max(1));
            random_map(rng, ts.wt().size(), card)
        })
        .collect()
}

/// Random transitional rv: deterministic with probability `det_prob`,
/// otherwise a stochastic kernel on `(W,T)`.
pub fn random_rv(
    rng: &mut StdRng,
    ts: &TransSpace,
    name: &str,
    max_card: usize,
    det_prob: f64,
) -> TransRv {
    let card = rng.gen_range(2..=max_card.max(2));
    let var = FiniteVar {
        name: name.to_string(),
        outcomes: (0..card).map(|i| i.to_string()).collect(),
    };
    let space = Space::singleton(var).expect("rv var");
    if rng.gen_bool(det_prob) {
        TransRv::det(space, random_map(rng, ts.wt().size(), card))
    } else {
        TransRv::stoch(random_kernel(rng, ts.wt().clone(), space, 8, 0.3))
    }
}

/// Random joint distribution (kernel from the one-point space).
pub fn random_distribution(rng: &mut StdRng, target: Space, max_denom: u32) -> Kernel {
    let row = random_row(rng, target.size(), max_denom, 0.3);
    Kernel::new(Space::empty(), target, vec![row]).expect("distribution row")
}

/// A random joint kernel over named variables, for disintegration tests.
pub fn random_joint(
    rng: &mut StdRng,
    var_sizes: &[(&str, usize)],
    source_sizes: &[(&str, usize)],
    max_denom: u32,
    zero_prob: f64,
) -> Kernel {
    let target = Space::new(
        var_sizes
            .iter()
            .map(|(n, k)| FiniteVar {
                name: n.to_string(),
                outcomes: (0..*k).map(|i| i.to_string()).collect(),
            })
            .collect(),
    )
    .expect("target space");
    let source = Space::new(
        source_sizes
            .iter()
            .map(|(n, k)| FiniteVar {
                name: n.to_string(),
                outcomes: (0..*k).map(|i| i.to_string()).collect(),
            })
            .collect(),
    )
    .expect("source space");
    random_kernel(rng, source, target, max_denom, zero_prob)
}

/// Splits a total mass of 1 across `len` entries, all positive.
pub fn random_positive_row(rng: &mut StdRng, len: usize, max_denom: u32) -> Vec<Rat> {
    loop {
        let row = random_row(rng, len, max_denom, 0.0);
        if row.iter().all(|p| *p > zero()) {
            return row;
        }
    }
}
