//! Causal Bayesian networks over finite spaces.
//!
//! A CBN is an acyclic conditional DAG with one Markov kernel per output
//! node (kernels source exactly the node's parents). Latent outputs are
//! ordinary nodes reclassified; the observational kernel marginalizes them
//! and the marginal graph is the latent projection.

pub mod docalc;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{Cdmg, GraphError};
use crate::kernel::{FiniteVar, Kernel, KernelError, Space, TransRv};
use crate::separation::{sigma_separated, SepQuery, SeparationError};
use crate::tci::{tci_check, CiVerdict, TciError, TransSpace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CbnError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Tci(#[from] TciError),
    #[error(transparent)]
    Separation(#[from] SeparationError),
    #[error("graph must be acyclic")]
    Cyclic,
    #[error("causal graphs carry no bidirected edges; found {0:?} <-> {1:?}")]
    BidirectedEdge(String, String),
    #[error("node {0:?} has no outcome space")]
    MissingSpace(String),
    #[error("node {0:?} has no kernel")]
    MissingKernel(String),
    #[error("kernel for {0:?} must have source {1:?} and target over the node")]
    KernelShape(String, String),
    #[error("latent node {0:?} is not an output node")]
    BadLatent(String),
    #[error("intervention target {0:?} is latent")]
    LatentIntervention(String),
    #[error("outcome label {0:?} already present on node {1:?}")]
    OutcomeCollision(String, String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("scope too large: {0} triples exceed the budget of {1}")]
    Budget(u64, u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cbn {
    graph: Cdmg,
    latent: BTreeSet<String>,
    spaces: BTreeMap<String, FiniteVar>,
    kernels: BTreeMap<String, Kernel>,
}

impl Cbn {
    /// Validates acyclicity, absence of bidirected edges, and that each
    /// output node's kernel maps exactly its parents' space to its own.
    pub fn new(
        graph: Cdmg,
        latent: BTreeSet<String>,
        spaces: BTreeMap<String, FiniteVar>,
        kernels: BTreeMap<String, Kernel>,
    ) -> Result<Self, CbnError> {
        if !graph.is_acyclic() {
            return Err(CbnError::Cyclic);
        }
        if let Some((a, b)) = graph.bidirected().iter().next() {
            return Err(CbnError::BidirectedEdge(a.clone(), b.clone()));
        }
        for u in &latent {
            if !graph.outputs().contains(u) {
                return Err(CbnError::BadLatent(u.clone()));
            }
        }
        for v in graph.nodes() {
            let var = spaces.get(v).ok_or_else(|| CbnError::MissingSpace(v.clone()))?;
            if var.name != *v {
                return Err(CbnError::MissingSpace(v.clone()));
            }
        }
        for v in graph.outputs() {
            let k = kernels.get(v).ok_or_else(|| CbnError::MissingKernel(v.clone()))?;
            let parent_space = parent_space(&graph, &spaces, v)?;
            let node_space = Space::singleton(spaces[v].clone())?;
            if k.source() != &parent_space || k.target() != &node_space {
                return Err(CbnError::KernelShape(
                    v.clone(),
                    format!("{:?}", graph.parents(v)?),
                ));
            }
        }
        Ok(Cbn {
            graph,
            latent,
            spaces,
            kernels,
        })
    }

    pub fn graph(&self) -> &Cdmg {
        &self.graph
    }

    pub fn latent(&self) -> &BTreeSet<String> {
        &self.latent
    }

    pub fn spaces(&self) -> &BTreeMap<String, FiniteVar> {
        &self.spaces
    }

    pub fn kernels(&self) -> &BTreeMap<String, Kernel> {
        &self.kernels
    }

    /// Observed output nodes `V` (outputs minus latents).
    pub fn observed(&self) -> BTreeSet<String> {
        self.graph
            .outputs()
            .difference(&self.latent)
            .cloned()
            .collect()
    }

    pub fn input_space(&self) -> Result<Space, CbnError> {
        Ok(Space::new(
            self.graph
                .inputs()
                .iter()
                .map(|j| self.spaces[j].clone())
                .collect(),
        )?)
    }

    /// Joint kernel `𝒳_J ⇝ 𝒳_{V∪U}`: kernel product in reverse topological
    /// order (children to the left of their parents), then extended to the
    /// full input space.
    pub fn joint_kernel(&self) -> Result<Kernel, CbnError> {
        let order = self.graph.topological_order().ok_or(CbnError::Cyclic)?;
        self.joint_kernel_for_order(order.iter().filter(|v| self.graph.outputs().contains(*v)))
    }

    /// Joint kernel for an explicit topological enumeration of the output
    /// nodes; the result does not depend on the order chosen.
    pub fn joint_kernel_for_order<'a>(
        &self,
        outputs_in_order: impl Iterator<Item = &'a String>,
    ) -> Result<Kernel, CbnError> {
        let mut acc: Option<Kernel> = None;
        for v in outputs_in_order {
            let k = &self.kernels[v];
            acc = Some(match acc {
                None => k.clone(),
                Some(a) => Kernel::product(k, &a)?,
            });
        }
        let input_space = self.input_space()?;
        let acc = match acc {
            None => Kernel::constant(input_space.clone(), Space::empty(), vec![crate::rational::one()])?,
            Some(a) => a,
        };
        // Inputs no kernel reads still belong to the source.
        let missing: Vec<FiniteVar> = input_space
            .vars()
            .iter()
            .filter(|v| acc.source().var_position(&v.name).is_none())
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(acc)
        } else {
            Ok(acc.extend_source(&Space::new(missing)?)?)
        }
    }

    /// Observational kernel: the joint with latent outputs summed out.
    pub fn observational_kernel(&self) -> Result<Kernel, CbnError> {
        let joint = self.joint_kernel()?;
        Ok(joint.marginalize(&self.observed())?)
    }

    /// Latent projection of the graph onto `J ∪ V`.
    pub fn marginal_graph(&self) -> Result<Cdmg, CbnError> {
        Ok(self.graph.marginalize(&self.latent)?)
    }

    /// Transition probability space `(𝒳_V × 𝒳_J, P(X_V|do(X_J)))`.
    pub fn trans_space(&self) -> Result<TransSpace, CbnError> {
        Ok(TransSpace::new(self.observational_kernel()?)?)
    }

    /// Hard intervention: `w` becomes inputs, their kernels are dropped.
    pub fn hard_intervene(&self, w: &BTreeSet<String>) -> Result<Cbn, CbnError> {
        if let Some(u) = w.iter().find(|u| self.latent.contains(*u)) {
            return Err(CbnError::LatentIntervention(u.clone()));
        }
        let graph = self.graph.hard_intervene(w)?;
        let kernels = self
            .kernels
            .iter()
            .filter(|(v, _)| !w.contains(*v))
            .map(|(v, k)| (v.clone(), k.clone()))
            .collect();
        Cbn::new(graph, self.latent.clone(), self.spaces.clone(), kernels)
    }

    /// Soft intervention: every `w` gains an input `I:<w>` ranging over
    /// `𝒳_w ∪ {⋆}`; at `⋆` the original mechanism applies, otherwise the
    /// node is pinned to the input value.
    pub fn soft_intervene(&self, w: &BTreeSet<String>) -> Result<Cbn, CbnError> {
        for v in w {
            if self.latent.contains(v) {
                return Err(CbnError::LatentIntervention(v.clone()));
            }
            if !self.graph.outputs().contains(v) {
                return Err(CbnError::InvalidQuery(format!(
                    "soft intervention target {v:?} must be an output node"
                )));
            }
        }
        let graph = self.graph.soft_extend(w)?;
        let mut spaces = self.spaces.clone();
        let mut kernels = self.kernels.clone();
        for v in w {
            let node_var = &self.spaces[v];
            if node_var.outcomes.iter().any(|o| o == STAR) {
                return Err(CbnError::OutcomeCollision(STAR.to_string(), v.clone()));
            }
            let iv_name = crate::graph::intervention_node(v);
            let mut outcomes = node_var.outcomes.clone();
            outcomes.push(STAR.to_string());
            let iv_var = FiniteVar {
                name: iv_name.clone(),
                outcomes,
            };
            spaces.insert(iv_name.clone(), iv_var.clone());

            let old = &self.kernels[v];
            let source = old.source().join(&Space::singleton(iv_var.clone())?)?;
            let node_space = Space::singleton(node_var.clone())?;
            let old_pos = source.positions_of(old.source())?;
            let iv_pos = source
                .var_position(&iv_name)
                .expect("intervention var joined");
            let n = node_var.outcomes.len();
            let mut rows = Vec::with_capacity(source.size());
            for s in 0..source.size() {
                let tuple = source.index_to_tuple(s);
                let iv_val = tuple[iv_pos];
                if iv_val == n {
                    // ⋆: no intervention, the natural mechanism fires.
                    let old_idx = old
                        .source()
                        .tuple_to_index(&old_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
                    rows.push(old.row(old_idx).to_vec());
                } else {
                    let mut row = vec![crate::rational::zero(); n];
                    row[iv_val] = crate::rational::one();
                    rows.push(row);
                }
            }
            kernels.insert(v.clone(), Kernel::new(source, node_space, rows)?);
        }
        Cbn::new(graph, self.latent.clone(), spaces, kernels)
    }

    /// Marginalization: `w` is reclassified latent; the joint kernel is
    /// unchanged, the observational kernel and marginal graph shrink.
    pub fn marginalize(&self, w: &BTreeSet<String>) -> Result<Cbn, CbnError> {
        for v in w {
            if !self.graph.outputs().contains(v) || self.latent.contains(v) {
                return Err(CbnError::InvalidQuery(format!(
                    "marginalization target {v:?} must be an observed output"
                )));
            }
        }
        Cbn::new(
            self.graph.clone(),
            self.latent.union(w).cloned().collect(),
            self.spaces.clone(),
            self.kernels.clone(),
        )
    }

    /// Projection rv over the observational transition space for a node set
    /// (prefix distinguishes overlapping query roles).
    pub fn projection_rv(
        &self,
        ts: &TransSpace,
        nodes: &BTreeSet<String>,
        prefix: &str,
    ) -> Result<TransRv, CbnError> {
        let rename: Vec<(String, String)> = nodes
            .iter()
            .map(|n| (n.clone(), format!("{prefix}{n}")))
            .collect();
        Ok(TransRv::projection(ts.wt(), nodes, &rename)?)
    }
}

/// The distinguished "no intervention" outcome label for soft interventions.
pub const STAR: &str = "⋆";

fn parent_space(
    graph: &Cdmg,
    spaces: &BTreeMap<String, FiniteVar>,
    v: &str,
) -> Result<Space, CbnError> {
    let parents = graph.parents(v)?;
    Ok(Space::new(
        parents
            .iter()
            .map(|p| {
                spaces
                    .get(p)
                    .cloned()
                    .ok_or_else(|| CbnError::MissingSpace(p.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?,
    )?)
}

/// Scope of the global-Markov-property verifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GmpScope {
    /// Every assignment of nodes to {A, B, C, none}; disjoint triples.
    AllTriples { budget: u64 },
    /// Seeded random triples, overlaps permitted.
    Sampled { count: u64, seed: u64 },
    /// Explicit list of queries.
    Explicit(Vec<SepQuery>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmpViolation {
    pub query: SepQuery,
    pub verdict: CiVerdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmpReport {
    pub triples_checked: u64,
    pub separated: u64,
    pub violations: Vec<GmpViolation>,
    /// Witness kernels for explicitly listed queries.
    pub witnesses: Vec<(SepQuery, Kernel)>,
}

/// Verifies the global Markov property: every sigma-separation on the
/// marginal graph must yield transitional conditional independence of the
/// corresponding variables under the observational kernel, with an exact
/// witness kernel.
pub fn gmp_verify(m: &Cbn, scope: &GmpScope) -> Result<GmpReport, CbnError> {
    let marginal = m.marginal_graph()?;
    let ts = m.trans_space()?;
    let nodes: Vec<String> = marginal.nodes().cloned().collect();
    let n = nodes.len() as u32;

    let queries: Vec<SepQuery> = match scope {
        GmpScope::AllTriples { budget } => {
            let total = 4u64.checked_pow(n).unwrap_or(u64::MAX);
            if total > *budget {
                return Err(CbnError::Budget(total, *budget));
            }
            let mut qs = Vec::with_capacity(total as usize);
            for code in 0..total {
                let mut c = code;
                let (mut a, mut b, mut cc) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
                for node in &nodes {
                    match c % 4 {
                        1 => {
                            a.insert(node.clone());
                        }
                        2 => {
                            b.insert(node.clone());
                        }
                        3 => {
                            cc.insert(node.clone());
                        }
                        _ => {}
                    }
                    c /= 4;
                }
                qs.push(SepQuery::from_sets(a, b, cc));
            }
            qs
        }
        GmpScope::Sampled { count, seed } => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(*seed);
            (0..*count)
                .map(|_| {
                    // Overlaps permitted: each node joins each set with
                    // probability 1/3, independently.
                    let (mut a, mut b, mut c) =
                        (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
                    for node in &nodes {
                        if rng.gen_bool(1.0 / 3.0) {
                            a.insert(node.clone());
                        }
                        if rng.gen_bool(1.0 / 3.0) {
                            b.insert(node.clone());
                        }
                        if rng.gen_bool(1.0 / 3.0) {
                            c.insert(node.clone());
                        }
                    }
                    SepQuery::from_sets(a, b, c)
                })
                .collect()
        }
        GmpScope::Explicit(qs) => qs.clone(),
    };

    let keep_witnesses = matches!(scope, GmpScope::Explicit(_));
    let mut report = GmpReport {
        triples_checked: 0,
        separated: 0,
        violations: Vec::new(),
        witnesses: Vec::new(),
    };
    for q in queries {
        report.triples_checked += 1;
        if !sigma_separated(&marginal, &q)?.separated {
            continue;
        }
        report.separated += 1;
        let x = m.projection_rv(&ts, &q.a, "a.")?;
        let y = m.projection_rv(&ts, &q.b, "b.")?;
        let z = m.projection_rv(&ts, &q.c, "c.")?;
        let verdict = tci_check(&ts, &x, &y, &z)?;
        if !verdict.independent {
            report.violations.push(GmpViolation {
                query: q.clone(),
                verdict,
            });
        } else if keep_witnesses {
            if let Some(w) = &verdict.witness {
                report.witnesses.push((q.clone(), w.clone()));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen;
    use crate::rational::{one, rat, zero, Rat};
    use num_traits::Zero;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn chain_cbn() -> Cbn {
        let graph = Cdmg::build(&["j"], &["a", "b"], &[("j", "a"), ("a", "b")], &[]).unwrap();
        let mut spaces = BTreeMap::new();
        for v in ["j", "a", "b"] {
            spaces.insert(v.to_string(), FiniteVar::binary(v));
        }
        let mut kernels = BTreeMap::new();
        kernels.insert(
            "a".to_string(),
            Kernel::new(
                Space::singleton(FiniteVar::binary("j")).unwrap(),
                Space::singleton(FiniteVar::binary("a")).unwrap(),
                vec![vec![rat(2, 3), rat(1, 3)], vec![rat(1, 4), rat(3, 4)]],
            )
            .unwrap(),
        );
        kernels.insert(
            "b".to_string(),
            Kernel::new(
                Space::singleton(FiniteVar::binary("a")).unwrap(),
                Space::singleton(FiniteVar::binary("b")).unwrap(),
                vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 5), rat(4, 5)]],
            )
            .unwrap(),
        );
        Cbn::new(graph, BTreeSet::new(), spaces, kernels).unwrap()
    }

    /// Brute-force factorization oracle: P(x_V∪U | x_J) = ∏_v P_v(x_v|x_Pa).
    fn factorization_oracle(m: &Cbn) -> Kernel {
        let joint = m.joint_kernel().unwrap();
        let src = joint.source().clone();
        let tgt = joint.target().clone();
        let full = src.merge_shared(&tgt).unwrap();
        let mut rows = Vec::with_capacity(src.size());
        for s in 0..src.size() {
            let mut row = Vec::with_capacity(tgt.size());
            for t in 0..tgt.size() {
                // Assemble the full assignment and multiply node kernels.
                let mut full_tuple = vec![0usize; full.vars().len()];
                let s_tuple = src.index_to_tuple(s);
                for (i, v) in src.vars().iter().enumerate() {
                    full_tuple[full.var_position(&v.name).unwrap()] = s_tuple[i];
                }
                let t_tuple = tgt.index_to_tuple(t);
                for (i, v) in tgt.vars().iter().enumerate() {
                    full_tuple[full.var_position(&v.name).unwrap()] = t_tuple[i];
                }
                let mut p = one();
                for v in m.graph().outputs() {
                    let k = &m.kernels()[v];
                    let src_idx = k.source().tuple_to_index(
                        &k.source()
                            .vars()
                            .iter()
                            .map(|pv| full_tuple[full.var_position(&pv.name).unwrap()])
                            .collect::<Vec<_>>(),
                    );
                    let out_idx = full_tuple[full.var_position(v).unwrap()];
                    p *= k.entry(src_idx, out_idx);
                    if p.is_zero() {
                        break;
                    }
                }
                row.push(p);
            }
            rows.push(row);
        }
        Kernel::new(src, tgt, rows).unwrap()
    }

    #[test]
    fn chain_joint_kernel() {
        let m = chain_cbn();
        let joint = m.joint_kernel().unwrap();
        // Entry P(a, b | j) = P(a|j) · P(b|a).
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let col = joint
                        .target()
                        .parse_label(&format!("a={a},b={b}"))
                        .unwrap();
                    let expect = m.kernels()["a"].entry(j, a) * m.kernels()["b"].entry(a, b);
                    assert_eq!(joint.entry(j, col), &expect);
                }
            }
        }
    }

    #[test]
    fn single_node_and_empty() {
        let graph = Cdmg::build(&[], &["v"], &[], &[]).unwrap();
        let mut spaces = BTreeMap::new();
        spaces.insert("v".to_string(), FiniteVar::binary("v"));
        let mut kernels = BTreeMap::new();
        kernels.insert(
            "v".to_string(),
            Kernel::new(
                Space::empty(),
                Space::singleton(FiniteVar::binary("v")).unwrap(),
                vec![vec![rat(1, 3), rat(2, 3)]],
            )
            .unwrap(),
        );
        let m = Cbn::new(graph, BTreeSet::new(), spaces, kernels).unwrap();
        let joint = m.joint_kernel().unwrap();
        assert!(joint.source().is_empty());
        assert_eq!(joint.row(0), &[rat(1, 3), rat(2, 3)][..]);
    }

    #[test]
    fn joint_kernel_matches_oracle_and_order_invariance() {
        let mut rng = randgen::rng_for(401);
        for _ in 0..20 {
            let m = randgen::random_cbn(&mut rng, &Default::default());
            let joint = m.joint_kernel().unwrap();
            assert_eq!(joint, factorization_oracle(&m));
            // Any other topological enumeration produces the same kernel.
            let order = m.graph().topological_order().unwrap();
            let mut outputs: Vec<String> = order
                .into_iter()
                .filter(|v| m.graph().outputs().contains(v))
                .collect();
            // A second valid order: stable-sort by (depth, reversed name).
            outputs.reverse();
            let mut alt: Vec<String> = Vec::new();
            while !outputs.is_empty() {
                let i = outputs
                    .iter()
                    .position(|v| {
                        m.graph()
                            .parents(v)
                            .unwrap()
                            .iter()
                            .all(|p| m.graph().inputs().contains(p) || alt.contains(p))
                    })
                    .unwrap();
                alt.push(outputs.remove(i));
            }
            let joint_alt = m.joint_kernel_for_order(alt.iter()).unwrap();
            assert_eq!(joint, joint_alt);
        }
    }

    #[test]
    fn fig1_structure_with_random_kernels() {
        let mut rng = randgen::rng_for(409);
        let graph = Cdmg::build(
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
        .unwrap();
        let mut spaces = BTreeMap::new();
        for v in graph.nodes() {
            spaces.insert(v.clone(), FiniteVar::binary(v.clone()));
        }
        let mut kernels = BTreeMap::new();
        for v in graph.outputs() {
            let parent_space = Space::new(
                graph
                    .parents(v)
                    .unwrap()
                    .iter()
                    .map(|p| spaces[p].clone())
                    .collect(),
            )
            .unwrap();
            kernels.insert(
                v.clone(),
                randgen::random_kernel(
                    &mut rng,
                    parent_space,
                    Space::singleton(spaces[v].clone()).unwrap(),
                    10,
                    0.15,
                ),
            );
        }
        let m = Cbn::new(graph, BTreeSet::new(), spaces, kernels).unwrap();
        let joint = m.joint_kernel().unwrap();
        for s in 0..joint.source().size() {
            let total: Rat = joint.row(s).iter().sum();
            assert_eq!(total, one());
        }
        assert_eq!(joint, factorization_oracle(&m));

        // Fig. 1 caption independencies hold numerically.
        let ts = m.trans_space().unwrap();
        let x = m.projection_rv(&ts, &set(&["v7"]), "a.").unwrap();
        let y = m.projection_rv(&ts, &set(&["v1"]), "b.").unwrap();
        let z = m.projection_rv(&ts, &set(&["v2"]), "c.").unwrap();
        assert!(tci_check(&ts, &x, &y, &z).unwrap().independent);
        let y2 = m.projection_rv(&ts, &set(&["v1", "v5"]), "b.").unwrap();
        let z2 = m.projection_rv(&ts, &set(&["v2", "v4", "v6"]), "c.").unwrap();
        assert!(tci_check(&ts, &x, &y2, &z2).unwrap().independent);
    }

    #[test]
    fn observational_kernel_with_latent_confounder() {
        let mut rng = randgen::rng_for(419);
        // u -> a, u -> b: marginal over u couples a and b.
        let graph = Cdmg::build(&[], &["a", "b", "u"], &[("u", "a"), ("u", "b")], &[]).unwrap();
        let mut spaces = BTreeMap::new();
        for v in ["a", "b", "u"] {
            spaces.insert(v.to_string(), FiniteVar::binary(v));
        }
        let u_space = Space::singleton(FiniteVar::binary("u")).unwrap();
        let mut kernels = BTreeMap::new();
        kernels.insert(
            "u".to_string(),
            randgen::random_kernel(&mut rng, Space::empty(), u_space.clone(), 8, 0.0),
        );
        for v in ["a", "b"] {
            kernels.insert(
                v.to_string(),
                randgen::random_kernel(
                    &mut rng,
                    u_space.clone(),
                    Space::singleton(FiniteVar::binary(v)).unwrap(),
                    8,
                    0.0,
                ),
            );
        }
        let m = Cbn::new(graph, set(&["u"]), spaces, kernels).unwrap();
        let obs = m.observational_kernel().unwrap();
        assert_eq!(obs.target().names(), set(&["a", "b"]));
        // Marginal graph shows the confounding as a bidirected edge.
        let mg = m.marginal_graph().unwrap();
        assert!(mg.bidirected().contains(&("a".to_string(), "b".to_string())));
        // Oracle: sum over u.
        let ja = &m.kernels()["a"];
        let jb = &m.kernels()["b"];
        let ju = &m.kernels()["u"];
        for a in 0..2 {
            for b in 0..2 {
                let col = obs.target().parse_label(&format!("a={a},b={b}")).unwrap();
                let mut expect = zero();
                for u in 0..2 {
                    expect += ju.entry(0, u) * ja.entry(u, a) * jb.entry(u, b);
                }
                assert_eq!(obs.entry(0, col), &expect);
            }
        }
    }

    #[test]
    fn hard_intervention_truncates_factorization() {
        let m = chain_cbn();
        let cut = m.hard_intervene(&set(&["a"])).unwrap();
        let obs = cut.observational_kernel().unwrap();
        // P(b | do(a), j) = node kernel of b, independent of j.
        for s in 0..obs.source().size() {
            let tuple = obs.source().index_to_tuple(s);
            let a_pos = obs.source().var_position("a").unwrap();
            let expect = m.kernels()["b"].row(tuple[a_pos]);
            assert_eq!(obs.row(s), expect);
        }
        assert_eq!(m.hard_intervene(&BTreeSet::new()).unwrap(), m);
    }

    #[test]
    fn intervention_differs_from_conditioning_under_confounding() {
        // u -> a, u -> b, a -> b: P(b|do(a)) ≠ P(b|a) in general.
        let mut rng = randgen::rng_for(421);
        let graph = Cdmg::build(
            &[],
            &["a", "b", "u"],
            &[("u", "a"), ("u", "b"), ("a", "b")],
            &[],
        )
        .unwrap();
        let mut spaces = BTreeMap::new();
        for v in ["a", "b", "u"] {
            spaces.insert(v.to_string(), FiniteVar::binary(v));
        }
        let u_space = Space::singleton(FiniteVar::binary("u")).unwrap();
        let ab_source = Space::new(vec![FiniteVar::binary("a"), FiniteVar::binary("u")]).unwrap();
        let mut kernels = BTreeMap::new();
        kernels.insert(
            "u".to_string(),
            Kernel::new(
                Space::empty(),
                u_space.clone(),
                vec![vec![rat(1, 3), rat(2, 3)]],
            )
            .unwrap(),
        );
        kernels.insert(
            "a".to_string(),
            Kernel::new(
                u_space.clone(),
                Space::singleton(FiniteVar::binary("a")).unwrap(),
                vec![vec![rat(3, 4), rat(1, 4)], vec![rat(1, 6), rat(5, 6)]],
            )
            .unwrap(),
        );
        kernels.insert(
            "b".to_string(),
            randgen::random_kernel(
                &mut rng,
                ab_source,
                Space::singleton(FiniteVar::binary("b")).unwrap(),
                8,
                0.0,
            ),
        );
        let m = Cbn::new(graph, set(&["u"]), spaces, kernels).unwrap();
        // Interventional P(b|do(a)).
        let cut = m.hard_intervene(&set(&["a"])).unwrap();
        let interventional = cut
            .observational_kernel()
            .unwrap()
            .marginalize(&set(&["b"]))
            .unwrap();
        // Conditional P(b|a) from the observational joint.
        let obs = m.observational_kernel().unwrap();
        let conditional = obs.disintegrate(&set(&["a"])).unwrap();
        let differs = (0..2).any(|a| interventional.row(a) != conditional.row(a));
        assert!(differs, "confounding must separate do() from conditioning");
    }

    #[test]
    fn soft_intervention_star_recovers_observation_and_points_recover_hard() {
        let mut rng = randgen::rng_for(431);
        for _ in 0..10 {
            let m = randgen::random_cbn(
                &mut rng,
                &randgen::CbnParams {
                    max_observed: 3,
                    max_latent: 1,
                    ..Default::default()
                },
            );
            let observed: Vec<String> = m.observed().into_iter().collect();
            if observed.is_empty() {
                continue;
            }
            let w: BTreeSet<String> = observed.iter().take(1).cloned().collect();
            let node = w.iter().next().unwrap().clone();
            let soft = m.soft_intervene(&w).unwrap();
            let obs_soft = soft.observational_kernel().unwrap();
            let obs = m.observational_kernel().unwrap();
            let iv = crate::graph::intervention_node(&node);
            let iv_pos = obs_soft.source().var_position(&iv).unwrap();
            let n_outcomes = m.spaces()[&node].outcomes.len();

            // I_w = ⋆ rows reproduce the observational kernel.
            for s in 0..obs_soft.source().size() {
                let tuple = obs_soft.source().index_to_tuple(s);
                if tuple[iv_pos] != n_outcomes {
                    continue;
                }
                let mut rest: Vec<usize> = tuple.clone();
                rest.remove(iv_pos);
                let base_idx = obs.source().tuple_to_index(&rest);
                assert_eq!(obs_soft.row(s), obs.row(base_idx));
            }

            // I_w = x rows match the hard intervention at that point.
            let hard = m.hard_intervene(&w).unwrap();
            let obs_hard = hard.observational_kernel().unwrap();
            let keep: BTreeSet<String> = obs
                .target()
                .names()
                .difference(&w)
                .cloned()
                .collect();
            for s in 0..obs_soft.source().size() {
                let tuple = obs_soft.source().index_to_tuple(s);
                let x_val = tuple[iv_pos];
                if x_val == n_outcomes {
                    continue;
                }
                // Match to the hard source: same assignment with node=x.
                let mut hard_tuple = Vec::new();
                for (i, v) in obs_soft.source().vars().iter().enumerate() {
                    if v.name == iv {
                        continue;
                    }
                    let _ = i;
                    hard_tuple.push((v.name.clone(), tuple[i]));
                }
                hard_tuple.push((node.clone(), x_val));
                hard_tuple.sort();
                let hs = obs_hard
                    .source()
                    .tuple_to_index(&hard_tuple.iter().map(|(_, v)| *v).collect::<Vec<_>>());
                let soft_marg = obs_soft.marginalize(&keep).unwrap();
                let hard_marg = obs_hard.marginalize(&keep).unwrap();
                assert_eq!(soft_marg.row(s), hard_marg.row(hs));
            }
        }
    }

    #[test]
    fn marginalize_cbn_keeps_joint() {
        let m = chain_cbn();
        let marg = m.marginalize(&set(&["a"])).unwrap();
        assert_eq!(marg.joint_kernel().unwrap(), m.joint_kernel().unwrap());
        let obs = marg.observational_kernel().unwrap();
        assert_eq!(obs.target().names(), set(&["b"]));
        // Composed kernel oracle: P(b|j) = Σ_a P(a|j) P(b|a).
        let composed = Kernel::compose(&m.kernels()["b"], &m.kernels()["a"]).unwrap();
        assert_eq!(obs, composed);
        assert_eq!(m.marginalize(&BTreeSet::new()).unwrap(), m);
    }

    #[test]
    fn gmp_on_small_random_cbns() {
        let mut rng = randgen::rng_for(433);
        for _ in 0..15 {
            let m = randgen::random_cbn(
                &mut rng,
                &randgen::CbnParams {
                    max_observed: 3,
                    max_latent: 1,
                    max_inputs: 1,
                    ..Default::default()
                },
            );
            let report = gmp_verify(
                &m,
                &GmpScope::Sampled {
                    count: 25,
                    seed: 5,
                },
            )
            .unwrap();
            assert!(report.violations.is_empty(), "{:?}", report.violations);
        }
    }

    #[test]
    fn gmp_all_triples_budget() {
        let m = chain_cbn();
        let report = gmp_verify(&m, &GmpScope::AllTriples { budget: 1 << 16 }).unwrap();
        assert_eq!(report.triples_checked, 64);
        assert!(report.violations.is_empty());
        assert!(report.separated > 0);
        assert!(matches!(
            gmp_verify(&m, &GmpScope::AllTriples { budget: 2 }),
            Err(CbnError::Budget(_, _))
        ));
    }

    #[test]
    fn gmp_explicit_queries_emit_witnesses() {
        let m = chain_cbn();
        // Ancestral-set example: {a} ⊥σ ∅ | {j} factorizes through X_j.
        let q = SepQuery::from_sets(set(&["a"]), BTreeSet::new(), set(&["j"]));
        let report = gmp_verify(&m, &GmpScope::Explicit(vec![q])).unwrap();
        assert_eq!(report.separated, 1);
        assert_eq!(report.witnesses.len(), 1);
        let (_, w) = &report.witnesses[0];
        // The witness is P(a|j) with prefixed variable names.
        assert_eq!(w.row(0), m.kernels()["a"].row(0));
        assert_eq!(w.row(1), m.kernels()["a"].row(1));
    }

    #[test]
    fn cbn_validation_errors() {
        let graph = Cdmg::build(&[], &["a"], &[], &[]).unwrap();
        let mut spaces = BTreeMap::new();
        spaces.insert("a".to_string(), FiniteVar::binary("a"));
        // Missing kernel.
        assert!(matches!(
            Cbn::new(graph.clone(), BTreeSet::new(), spaces.clone(), BTreeMap::new()),
            Err(CbnError::MissingKernel(_))
        ));
        // Cyclic graph.
        let cyc = Cdmg::build(&[], &["a", "b"], &[("a", "b"), ("b", "a")], &[]).unwrap();
        let mut spaces2 = spaces.clone();
        spaces2.insert("b".to_string(), FiniteVar::binary("b"));
        assert!(matches!(
            Cbn::new(cyc, BTreeSet::new(), spaces2, BTreeMap::new()),
            Err(CbnError::Cyclic)
        ));
    }
}
