//! Exact finite-space Markov kernel algebra.
//!
//! A [`Kernel`] is a row-stochastic table over named finite variables: each
//! source assignment maps to an exact rational distribution over target
//! assignments. Variables are aligned by name, never by position; spaces keep
//! their variables sorted by name so equal spaces have equal layouts.

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{approx_eq, format_rat, one, zero, Rat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("duplicate variable name {0:?}")]
    DuplicateVariable(String),
    #[error("variable {0:?} has no outcomes or repeated outcome labels")]
    BadOutcomes(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("variable {0:?} declared with conflicting outcome sets")]
    SchemaMismatch(String),
    #[error("target variable name {0:?} occurs in both factors")]
    TargetClash(String),
    #[error("name {0:?} would occur in both source and target")]
    SourceTargetClash(String),
    #[error("row for source {0:?} does not sum to 1")]
    NotStochastic(String),
    #[error("negative probability at source {0:?}")]
    NegativeEntry(String),
    #[error("table has wrong shape: expected {expected} rows of {cols} entries")]
    BadShape { expected: usize, cols: usize },
    #[error("map is not total on the source space")]
    InvalidMap,
    #[error("source spaces do not match")]
    SpaceMismatch,
    #[error("invalid assignment label {0:?}")]
    BadAssignment(String),
    #[error("invalid assignment index")]
    BadIndex,
}

/// A named finite variable with an ordered list of outcome labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteVar {
    pub name: String,
    pub outcomes: Vec<String>,
}

impl FiniteVar {
    pub fn new(name: impl Into<String>, outcomes: &[&str]) -> Self {
        FiniteVar {
            name: name.into(),
            outcomes: outcomes.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        FiniteVar::new(name, &["0", "1"])
    }

    fn validate(&self) -> Result<(), KernelError> {
        if self.name.is_empty() {
            return Err(KernelError::BadOutcomes(self.name.clone()));
        }
        let distinct: BTreeSet<&String> = self.outcomes.iter().collect();
        if self.outcomes.is_empty() || distinct.len() != self.outcomes.len() {
            return Err(KernelError::BadOutcomes(self.name.clone()));
        }
        Ok(())
    }
}

/// A product of finite variables. The empty space is the one-point space `*`.
///
/// Variables are kept sorted by name; assignments are mixed-radix indices with
/// the first variable most significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Space {
    vars: Vec<FiniteVar>,
}

impl Space {
    pub fn new(mut vars: Vec<FiniteVar>) -> Result<Self, KernelError> {
        for v in &vars {
            v.validate()?;
        }
        vars.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in vars.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(KernelError::DuplicateVariable(pair[0].name.clone()));
            }
        }
        Ok(Space { vars })
    }

    pub fn empty() -> Self {
        Space { vars: Vec::new() }
    }

    pub fn singleton(var: FiniteVar) -> Result<Self, KernelError> {
        Space::new(vec![var])
    }

    pub fn vars(&self) -> &[FiniteVar] {
        &self.vars
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.vars.iter().map(|v| v.name.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Number of assignments (1 for the one-point space).
    pub fn size(&self) -> usize {
        self.vars.iter().map(|v| v.outcomes.len()).product()
    }

    pub fn var_position(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn index_to_tuple(&self, mut idx: usize) -> Vec<usize> {
        let mut tuple = vec![0; self.vars.len()];
        for (i, v) in self.vars.iter().enumerate().rev() {
            let card = v.outcomes.len();
            tuple[i] = idx % card;
            idx /= card;
        }
        tuple
    }

    pub fn tuple_to_index(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.vars.len());
        let mut idx = 0;
        for (i, v) in self.vars.iter().enumerate() {
            idx = idx * v.outcomes.len() + tuple[i];
        }
        idx
    }

    /// Renders an assignment as `"X=0,Y=1"`, or `"*"` for the one-point space.
    pub fn label(&self, idx: usize) -> String {
        if self.vars.is_empty() {
            return "*".to_string();
        }
        let tuple = self.index_to_tuple(idx);
        self.vars
            .iter()
            .zip(&tuple)
            .map(|(v, &o)| format!("{}={}", v.name, v.outcomes[o]))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses an assignment label; key order is free, all variables required.
    pub fn parse_label(&self, s: &str) -> Result<usize, KernelError> {
        let s = s.trim();
        if self.vars.is_empty() {
            return if s == "*" || s.is_empty() {
                Ok(0)
            } else {
                Err(KernelError::BadAssignment(s.to_string()))
            };
        }
        let mut tuple = vec![usize::MAX; self.vars.len()];
        for part in s.split(',') {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| KernelError::BadAssignment(s.to_string()))?;
            let pos = self
                .var_position(name.trim())
                .ok_or_else(|| KernelError::UnknownVariable(name.trim().to_string()))?;
            let o = self.vars[pos]
                .outcomes
                .iter()
                .position(|c| c == value.trim())
                .ok_or_else(|| KernelError::BadAssignment(s.to_string()))?;
            if tuple[pos] != usize::MAX {
                return Err(KernelError::BadAssignment(s.to_string()));
            }
            tuple[pos] = o;
        }
        if tuple.iter().any(|&t| t == usize::MAX) {
            return Err(KernelError::BadAssignment(s.to_string()));
        }
        Ok(self.tuple_to_index(&tuple))
    }

    /// Disjoint union of two spaces; errors on any shared variable name.
    pub fn join(&self, other: &Space) -> Result<Space, KernelError> {
        let mut vars = self.vars.clone();
        for v in &other.vars {
            if self.var_position(&v.name).is_some() {
                return Err(KernelError::TargetClash(v.name.clone()));
            }
            vars.push(v.clone());
        }
        Space::new(vars)
    }

    /// Union allowing shared variables, which must agree on outcomes.
    pub fn merge_shared(&self, other: &Space) -> Result<Space, KernelError> {
        let mut vars = self.vars.clone();
        for v in &other.vars {
            match self.var_position(&v.name) {
                Some(p) => {
                    if self.vars[p].outcomes != v.outcomes {
                        return Err(KernelError::SchemaMismatch(v.name.clone()));
                    }
                }
                None => vars.push(v.clone()),
            }
        }
        Space::new(vars)
    }

    /// Sub-space over the given variable names.
    pub fn restrict(&self, names: &BTreeSet<String>) -> Result<Space, KernelError> {
        for n in names {
            if self.var_position(n).is_none() {
                return Err(KernelError::UnknownVariable(n.clone()));
            }
        }
        Space::new(
            self.vars
                .iter()
                .filter(|v| names.contains(&v.name))
                .cloned()
                .collect(),
        )
    }

    /// Positions of `sub`'s variables inside `self` (by name).
    pub fn positions_of(&self, sub: &Space) -> Result<Vec<usize>, KernelError> {
        sub.vars
            .iter()
            .map(|v| {
                let p = self
                    .var_position(&v.name)
                    .ok_or_else(|| KernelError::UnknownVariable(v.name.clone()))?;
                if self.vars[p].outcomes != v.outcomes {
                    return Err(KernelError::SchemaMismatch(v.name.clone()));
                }
                Ok(p)
            })
            .collect()
    }

    pub fn assignment_pairs(&self, idx: usize) -> Vec<(String, String)> {
        let tuple = self.index_to_tuple(idx);
        self.vars
            .iter()
            .zip(&tuple)
            .map(|(v, &o)| (v.name.clone(), v.outcomes[o].clone()))
            .collect()
    }
}

/// Extracts the sub-assignment for `positions` from a tuple of the big space.
fn project_tuple(tuple: &[usize], positions: &[usize]) -> Vec<usize> {
    positions.iter().map(|&p| tuple[p]).collect()
}

/// Row-stochastic rational table from a source space to a target space.
///
/// Source and target may share variable names (the `K(W,T|T)` pattern);
/// within each side names are unique.
#[derive(Clone, Debug)]
pub struct Kernel {
    source: Space,
    target: Space,
    rows: Vec<Vec<Rat>>,
    float_origin: bool,
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.target == other.target && self.rows == other.rows
    }
}

impl Eq for Kernel {}

impl Kernel {
    pub fn new(source: Space, target: Space, rows: Vec<Vec<Rat>>) -> Result<Self, KernelError> {
        if rows.len() != source.size() || rows.iter().any(|r| r.len() != target.size()) {
            return Err(KernelError::BadShape {
                expected: source.size(),
                cols: target.size(),
            });
        }
        for (s, row) in rows.iter().enumerate() {
            let mut sum = zero();
            for p in row {
                if *p < zero() {
                    return Err(KernelError::NegativeEntry(source.label(s)));
                }
                sum += p;
            }
            if !sum.is_one() {
                return Err(KernelError::NotStochastic(source.label(s)));
            }
        }
        Ok(Kernel {
            source,
            target,
            rows,
            float_origin: false,
        })
    }

    /// Constructor for float-imported tables: rows may miss exact
    /// stochasticity by up to `atol` and are renormalized exactly. The result
    /// is flagged so downstream verdicts can report inexact provenance.
    pub fn new_float(
        source: Space,
        target: Space,
        rows: Vec<Vec<Rat>>,
        atol: &Rat,
    ) -> Result<Self, KernelError> {
        if rows.len() != source.size() || rows.iter().any(|r| r.len() != target.size()) {
            return Err(KernelError::BadShape {
                expected: source.size(),
                cols: target.size(),
            });
        }
        let mut normalized = Vec::with_capacity(rows.len());
        for (s, row) in rows.into_iter().enumerate() {
            let mut sum = zero();
            for p in &row {
                if *p < zero() {
                    return Err(KernelError::NegativeEntry(source.label(s)));
                }
                sum += p;
            }
            if !approx_eq(&sum, &one(), atol) {
                return Err(KernelError::NotStochastic(source.label(s)));
            }
            normalized.push(row.into_iter().map(|p| p / &sum).collect());
        }
        Ok(Kernel {
            source,
            target,
            rows: normalized,
            float_origin: true,
        })
    }

    /// Deterministic kernel for a total map, one point mass per row.
    pub fn delta(source: Space, target: Space, map: &[usize]) -> Result<Self, KernelError> {
        if map.len() != source.size() || map.iter().any(|&t| t >= target.size()) {
            return Err(KernelError::InvalidMap);
        }
        let cols = target.size();
        let rows = map
            .iter()
            .map(|&t| {
                let mut row = vec![zero(); cols];
                row[t] = one();
                row
            })
            .collect();
        Kernel::new(source, target, rows)
    }

    /// The identity kernel `δ(T|T)` on a space.
    pub fn delta_identity(space: &Space) -> Self {
        let map: Vec<usize> = (0..space.size()).collect();
        Kernel::delta(space.clone(), space.clone(), &map).expect("identity map is total")
    }

    /// Kernel with the same distribution in every row.
    pub fn constant(source: Space, target: Space, row: Vec<Rat>) -> Result<Self, KernelError> {
        let rows = vec![row; source.size()];
        Kernel::new(source, target, rows)
    }

    pub fn uniform(source: Space, target: Space) -> Result<Self, KernelError> {
        let n = target.size();
        let p = Rat::new(1.into(), (n as i64).into());
        Kernel::constant(source, target, vec![p; n])
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    pub fn float_origin(&self) -> bool {
        self.float_origin
    }

    pub fn set_float_origin(&mut self, flag: bool) {
        self.float_origin = flag;
    }

    pub fn entry(&self, s: usize, t: usize) -> &Rat {
        &self.rows[s][t]
    }

    pub fn row(&self, s: usize) -> &[Rat] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<Rat>] {
        &self.rows
    }

    /// Sums out all target variables not in `keep`.
    pub fn marginalize(&self, keep: &BTreeSet<String>) -> Result<Kernel, KernelError> {
        let sub = self.target.restrict(keep)?;
        let positions = self.target.positions_of(&sub)?;
        let cols = sub.size();
        let mut rows = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut out = vec![zero(); cols];
            for (t, p) in row.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let tuple = self.target.index_to_tuple(t);
                let sub_idx = sub.tuple_to_index(&project_tuple(&tuple, &positions));
                out[sub_idx] += p;
            }
            rows.push(out);
        }
        let mut k = Kernel::new(self.source.clone(), sub, rows)?;
        k.float_origin = self.float_origin;
        Ok(k)
    }

    /// Product of Markov kernels, `Q(Z|Y,W,T) ⊗ K(W,U|T,X)`.
    ///
    /// Each source variable of `q` is resolved by name: against a target
    /// variable of `k` first, otherwise it stays a (possibly shared) source
    /// variable of the result. Target names must be disjoint.
    pub fn product(q: &Kernel, k: &Kernel) -> Result<Kernel, KernelError> {
        let target = q.target.join(&k.target)?;
        // Split q's source into bound-to-k-target and free parts.
        let mut free_vars = Vec::new();
        for v in q.source.vars() {
            match k.target.var_position(&v.name) {
                Some(p) => {
                    if k.target.vars()[p].outcomes != v.outcomes {
                        return Err(KernelError::SchemaMismatch(v.name.clone()));
                    }
                }
                None => free_vars.push(v.clone()),
            }
        }
        let free = Space::new(free_vars)?;
        let source = free.merge_shared(&k.source)?;

        let q_tgt_pos = target.positions_of(&q.target)?;
        let k_tgt_pos = target.positions_of(&k.target)?;
        let k_src_pos = source.positions_of(&k.source)?;
        // For each source var of q: Some(position in k.target) or None with
        // its position in the result source.
        enum Origin {
            KTarget(usize),
            Source(usize),
        }
        let q_src_origin: Vec<Origin> = q
            .source
            .vars()
            .iter()
            .map(|v| match k.target.var_position(&v.name) {
                Some(p) => Origin::KTarget(p),
                None => Origin::Source(
                    source
                        .var_position(&v.name)
                        .expect("free source var is in result source"),
                ),
            })
            .collect();

        let mut rows = Vec::with_capacity(source.size());
        for s in 0..source.size() {
            let s_tuple = source.index_to_tuple(s);
            let k_src = k.source.tuple_to_index(&project_tuple(&s_tuple, &k_src_pos));
            let mut out = vec![zero(); target.size()];
            for (t, slot) in out.iter_mut().enumerate() {
                let t_tuple = target.index_to_tuple(t);
                let k_tgt_tuple = project_tuple(&t_tuple, &k_tgt_pos);
                let k_val = k.entry(k_src, k.target.tuple_to_index(&k_tgt_tuple));
                if k_val.is_zero() {
                    continue;
                }
                let q_src_tuple: Vec<usize> = q_src_origin
                    .iter()
                    .map(|o| match o {
                        Origin::KTarget(p) => k_tgt_tuple[*p],
                        Origin::Source(p) => s_tuple[*p],
                    })
                    .collect();
                let q_src = q.source.tuple_to_index(&q_src_tuple);
                let q_tgt = q.target.tuple_to_index(&project_tuple(&t_tuple, &q_tgt_pos));
                let q_val = q.entry(q_src, q_tgt);
                if q_val.is_zero() {
                    continue;
                }
                *slot = q_val * k_val;
            }
            rows.push(out);
        }
        let mut res = Kernel::new(source, target, rows)?;
        res.float_origin = q.float_origin || k.float_origin;
        Ok(res)
    }

    /// Composition `Q ∘ K`: the `Z`-marginal of the product, integrating out
    /// everything the right kernel produces.
    pub fn compose(q: &Kernel, k: &Kernel) -> Result<Kernel, KernelError> {
        let prod = Kernel::product(q, k)?;
        prod.marginalize(&q.target.names())
    }

    /// `K(W,T|T)`: adjoins the canonical projection of the source.
    pub fn extend_with_identity(&self) -> Result<Kernel, KernelError> {
        for v in self.source.vars() {
            if self.target.var_position(&v.name).is_some() {
                return Err(KernelError::SourceTargetClash(v.name.clone()));
            }
        }
        Kernel::product(self, &Kernel::delta_identity(&self.source))
    }

    /// Adds unused source variables (rows constant across the new columns).
    pub fn extend_source(&self, extra: &Space) -> Result<Kernel, KernelError> {
        let source = self.source.join(extra)?;
        let old_pos = source.positions_of(&self.source)?;
        let mut rows = Vec::with_capacity(source.size());
        for s in 0..source.size() {
            let tuple = source.index_to_tuple(s);
            let old = self.source.tuple_to_index(&project_tuple(&tuple, &old_pos));
            rows.push(self.rows[old].clone());
        }
        let mut k = Kernel::new(source, self.target.clone(), rows)?;
        k.float_origin = self.float_origin;
        Ok(k)
    }

    /// Push-forward along a transitional random variable sourced on the
    /// joined `(target, source)` space of `self`.
    pub fn pushforward(&self, x: &TransRv) -> Result<Kernel, KernelError> {
        let wt = self.target.join(&self.source)?;
        x.validate(&wt)?;
        let w_pos = wt.positions_of(&self.target)?;
        let t_pos = wt.positions_of(&self.source)?;
        let cols = x.target.size();
        let mut rows = vec![vec![zero(); cols]; self.source.size()];
        for wt_idx in 0..wt.size() {
            let wt_tuple = wt.index_to_tuple(wt_idx);
            let w = self
                .target
                .tuple_to_index(&project_tuple(&wt_tuple, &w_pos));
            let t = self
                .source
                .tuple_to_index(&project_tuple(&wt_tuple, &t_pos));
            let mass = &self.rows[t][w];
            if mass.is_zero() {
                continue;
            }
            match &x.body {
                RvBody::Map(table) => {
                    let xv = if x.target.size() == 1 { 0 } else { table[wt_idx] };
                    rows[t][xv] += mass;
                }
                RvBody::Stoch(xk) => {
                    for (xv, slot) in rows[t].iter_mut().enumerate() {
                        let p = xk.entry(wt_idx, xv);
                        if !p.is_zero() {
                            *slot += mass * p;
                        }
                    }
                }
            }
        }
        let mut k = Kernel::new(self.source.clone(), x.target.clone(), rows)?;
        k.float_origin = self.float_origin || x.float_origin();
        Ok(k)
    }

    /// True iff every listed `(target, source)` assignment pair carries zero
    /// mass, i.e. every source fibre of the set is null.
    pub fn is_null_set(&self, pairs: &[(usize, usize)]) -> Result<bool, KernelError> {
        for &(t, s) in pairs {
            if s >= self.source.size() || t >= self.target.size() {
                return Err(KernelError::BadIndex);
            }
            if !self.rows[s][t].is_zero() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Regular conditional kernel `K(X|Y,Z)` of `K(X,Y|Z)` conditioned on the
    /// target variables `on`; zero-mass rows fall back to the uniform
    /// distribution.
    pub fn disintegrate(&self, on: &BTreeSet<String>) -> Result<Kernel, KernelError> {
        let x_names: BTreeSet<String> = self
            .target
            .names()
            .difference(on)
            .cloned()
            .collect();
        let x_space = self.target.restrict(&x_names)?;
        let n = x_space.size();
        let p = Rat::new(1.into(), (n as i64).into());
        self.disintegrate_with_fallback(on, &vec![p; n])
    }

    /// As [`Kernel::disintegrate`], with an explicit fallback distribution
    /// for zero-mass conditioning rows (any distribution is a valid version).
    pub fn disintegrate_with_fallback(
        &self,
        on: &BTreeSet<String>,
        fallback: &[Rat],
    ) -> Result<Kernel, KernelError> {
        let y_space = self.target.restrict(on)?;
        let x_names: BTreeSet<String> = self.target.names().difference(on).cloned().collect();
        let x_space = self.target.restrict(&x_names)?;
        if fallback.len() != x_space.size() {
            return Err(KernelError::BadShape {
                expected: 1,
                cols: x_space.size(),
            });
        }
        let source = y_space.join(&self.source)?;
        let y_pos_in_src = source.positions_of(&y_space)?;
        let z_pos_in_src = source.positions_of(&self.source)?;
        let y_pos_in_tgt = self.target.positions_of(&y_space)?;
        let x_pos_in_tgt = self.target.positions_of(&x_space)?;

        let mut rows = Vec::with_capacity(source.size());
        for s in 0..source.size() {
            let s_tuple = source.index_to_tuple(s);
            let y_tuple = project_tuple(&s_tuple, &y_pos_in_src);
            let z = self
                .source
                .tuple_to_index(&project_tuple(&s_tuple, &z_pos_in_src));
            // Gather the fibre over X at (y, z).
            let mut masses = vec![zero(); x_space.size()];
            let mut den = zero();
            for (t, p) in self.rows[z].iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let t_tuple = self.target.index_to_tuple(t);
                if project_tuple(&t_tuple, &y_pos_in_tgt) != y_tuple {
                    continue;
                }
                let x = x_space.tuple_to_index(&project_tuple(&t_tuple, &x_pos_in_tgt));
                masses[x] += p;
                den += p;
            }
            if den.is_zero() {
                rows.push(fallback.to_vec());
            } else {
                rows.push(masses.into_iter().map(|m| m / &den).collect());
            }
        }
        let mut k = Kernel::new(source, x_space, rows)?;
        k.float_origin = self.float_origin;
        Ok(k)
    }

    /// Searches for `φ: 𝒴 → 𝒳` with `K(X,Y|T) = δ_φ(X|Y) ⊗ K(Y|T)`, where the
    /// joint is first marginalized onto `x ∪ y`. Unattained `y` map to the
    /// first outcome. Returns the map table indexed by `y` assignments.
    pub fn ismapof(
        &self,
        x: &BTreeSet<String>,
        y: &BTreeSet<String>,
    ) -> Result<Option<Vec<usize>>, KernelError> {
        if x.intersection(y).next().is_some() {
            return Err(KernelError::DuplicateVariable(
                x.intersection(y).next().unwrap().clone(),
            ));
        }
        let joint = self.marginalize(&x.union(y).cloned().collect())?;
        let x_space = joint.target.restrict(x)?;
        let y_space = joint.target.restrict(y)?;
        let x_pos = joint.target.positions_of(&x_space)?;
        let y_pos = joint.target.positions_of(&y_space)?;
        let mut phi: Vec<Option<usize>> = vec![None; y_space.size()];
        for row in joint.rows.iter() {
            // Per (y, t): mass and the set of x values attained.
            let mut mass = vec![zero(); y_space.size()];
            let mut witness: Vec<Option<usize>> = vec![None; y_space.size()];
            let mut point_mass = vec![true; y_space.size()];
            for (c, p) in row.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let tuple = joint.target.index_to_tuple(c);
                let yi = y_space.tuple_to_index(&project_tuple(&tuple, &y_pos));
                let xi = x_space.tuple_to_index(&project_tuple(&tuple, &x_pos));
                mass[yi] += p;
                match witness[yi] {
                    None => witness[yi] = Some(xi),
                    Some(prev) if prev != xi => point_mass[yi] = false,
                    _ => {}
                }
            }
            for yi in 0..y_space.size() {
                if mass[yi].is_zero() {
                    continue;
                }
                if !point_mass[yi] {
                    return Ok(None);
                }
                let xi = witness[yi].expect("positive mass has a witness");
                match phi[yi] {
                    None => phi[yi] = Some(xi),
                    Some(prev) if prev != xi => return Ok(None),
                    _ => {}
                }
            }
        }
        Ok(Some(phi.into_iter().map(|o| o.unwrap_or(0)).collect()))
    }

    /// Equality up to an absolute tolerance, same spaces required.
    pub fn approx_eq(&self, other: &Kernel, atol: &Rat) -> bool {
        self.source == other.source
            && self.target == other.target
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| approx_eq(x, y, atol)))
    }

    /// Human-readable table dump, one line per source assignment.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in 0..self.source.size() {
            let entries: Vec<String> = (0..self.target.size())
                .filter(|&t| !self.rows[s][t].is_zero())
                .map(|t| format!("{}: {}", self.target.label(t), format_rat(&self.rows[s][t])))
                .collect();
            out.push_str(&format!("{} -> {{{}}}\n", self.source.label(s), entries.join(", ")));
        }
        out
    }
}

/// Disagreement set of two kernels over the same spaces: the source
/// assignments where the rows differ. Callers turn these into
/// `(target, source)` pairs of a base kernel and test [`Kernel::is_null_set`].
pub fn kernels_agree_ae(p: &Kernel, q: &Kernel) -> Result<Vec<usize>, KernelError> {
    if p.source != q.source || p.target != q.target {
        return Err(KernelError::SpaceMismatch);
    }
    Ok((0..p.source.size())
        .filter(|&s| p.rows[s] != q.rows[s])
        .collect())
}

/// Splits an assignment of `space` into indices of two disjoint sub-spaces.
pub fn split_assignment(
    space: &Space,
    idx: usize,
    left: &Space,
    right: &Space,
) -> Result<(usize, usize), KernelError> {
    let l_pos = space.positions_of(left)?;
    let r_pos = space.positions_of(right)?;
    let tuple = space.index_to_tuple(idx);
    Ok((
        left.tuple_to_index(&project_tuple(&tuple, &l_pos)),
        right.tuple_to_index(&project_tuple(&tuple, &r_pos)),
    ))
}

/// A transitional random variable: a deterministic map table or a Markov
/// kernel from the joined `(W,T)` space to its codomain.
#[derive(Clone, Debug, PartialEq)]
pub struct TransRv {
    pub target: Space,
    pub body: RvBody,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RvBody {
    /// Indexed by the joined `(W,T)` assignment; values are target indices.
    Map(Vec<usize>),
    /// Kernel with source `(W,T)` and target equal to the rv's codomain.
    Stoch(Kernel),
}

impl TransRv {
    pub fn det(target: Space, table: Vec<usize>) -> Self {
        TransRv {
            target,
            body: RvBody::Map(table),
        }
    }

    pub fn stoch(kernel: Kernel) -> Self {
        TransRv {
            target: kernel.target().clone(),
            body: RvBody::Stoch(kernel),
        }
    }

    /// The constant variable `δ_*` into the one-point space.
    pub fn constant_star() -> Self {
        TransRv {
            target: Space::empty(),
            body: RvBody::Map(Vec::new()),
        }
    }

    /// Deterministic projection of a joined space onto the named coordinates,
    /// optionally renaming each `(old, new)`.
    pub fn projection(
        wt: &Space,
        names: &BTreeSet<String>,
        rename: &[(String, String)],
    ) -> Result<Self, KernelError> {
        let sub = wt.restrict(names)?;
        let positions = wt.positions_of(&sub)?;
        let mut vars = sub.vars().to_vec();
        for v in &mut vars {
            if let Some((_, new)) = rename.iter().find(|(old, _)| *old == v.name) {
                v.name = new.clone();
            }
        }
        let renamed = Space::new(vars.clone())?;
        // Positions must follow the *renamed* order.
        let mut order: Vec<usize> = (0..vars.len()).collect();
        order.sort_by(|&a, &b| vars[a].name.cmp(&vars[b].name));
        let table = (0..wt.size())
            .map(|idx| {
                let tuple = wt.index_to_tuple(idx);
                let sub_tuple: Vec<usize> = order.iter().map(|&i| tuple[positions[i]]).collect();
                renamed.tuple_to_index(&sub_tuple)
            })
            .collect();
        Ok(TransRv::det(renamed, table))
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.body, RvBody::Map(_))
    }

    pub fn float_origin(&self) -> bool {
        match &self.body {
            RvBody::Map(_) => false,
            RvBody::Stoch(k) => k.float_origin(),
        }
    }

    /// Value index for deterministic bodies.
    pub fn eval_det(&self, wt_idx: usize) -> Option<usize> {
        match &self.body {
            RvBody::Map(table) => {
                if self.target.size() == 1 {
                    Some(0)
                } else {
                    table.get(wt_idx).copied()
                }
            }
            RvBody::Stoch(_) => None,
        }
    }

    pub fn validate(&self, wt: &Space) -> Result<(), KernelError> {
        match &self.body {
            RvBody::Map(table) => {
                if self.target.size() == 1 {
                    return Ok(());
                }
                if table.len() != wt.size() || table.iter().any(|&v| v >= self.target.size()) {
                    return Err(KernelError::InvalidMap);
                }
            }
            RvBody::Stoch(k) => {
                if k.source() != wt || k.target() != &self.target {
                    return Err(KernelError::SpaceMismatch);
                }
            }
        }
        Ok(())
    }

    /// Renames every target variable with a prefix.
    pub fn with_prefix(&self, prefix: &str) -> Result<Self, KernelError> {
        let rename: Vec<(String, String)> = self
            .target
            .vars()
            .iter()
            .map(|v| (v.name.clone(), format!("{prefix}{}", v.name)))
            .collect();
        self.renamed(&rename)
    }

    pub fn renamed(&self, rename: &[(String, String)]) -> Result<Self, KernelError> {
        let mut vars = self.target.vars().to_vec();
        for v in &mut vars {
            if let Some((_, new)) = rename.iter().find(|(old, _)| *old == v.name) {
                v.name = new.clone();
            }
        }
        let mut order: Vec<usize> = (0..vars.len()).collect();
        order.sort_by(|&a, &b| vars[a].name.cmp(&vars[b].name));
        let renamed = Space::new(vars)?;
        let remap = |old_idx: usize, old: &Space| -> usize {
            let tuple = old.index_to_tuple(old_idx);
            let new_tuple: Vec<usize> = order.iter().map(|&i| tuple[i]).collect();
            renamed.tuple_to_index(&new_tuple)
        };
        match &self.body {
            RvBody::Map(table) => {
                let new_table = table.iter().map(|&v| remap(v, &self.target)).collect();
                Ok(TransRv::det(renamed, new_table))
            }
            RvBody::Stoch(k) => {
                let mut rows = vec![vec![zero(); renamed.size()]; k.source().size()];
                for (s, row) in k.rows().iter().enumerate() {
                    for (t, p) in row.iter().enumerate() {
                        rows[s][remap(t, &self.target)] = p.clone();
                    }
                }
                let mut nk = Kernel::new(k.source().clone(), renamed, rows)?;
                nk.set_float_origin(k.float_origin());
                Ok(TransRv::stoch(nk))
            }
        }
    }

    /// `self ⊗ other`: the joint variable into the product codomain.
    /// Deterministic pairs stay deterministic.
    pub fn join(&self, other: &TransRv, wt: &Space) -> Result<TransRv, KernelError> {
        self.validate(wt)?;
        other.validate(wt)?;
        let target = self.target.join(&other.target)?;
        let a_pos = target.positions_of(&self.target)?;
        let b_pos = target.positions_of(&other.target)?;
        let compose_idx = |ai: usize, bi: usize| -> usize {
            let a_t = self.target.index_to_tuple(ai);
            let b_t = other.target.index_to_tuple(bi);
            let mut tuple = vec![0; target.vars().len()];
            for (i, &p) in a_pos.iter().enumerate() {
                tuple[p] = a_t[i];
            }
            for (i, &p) in b_pos.iter().enumerate() {
                tuple[p] = b_t[i];
            }
            target.tuple_to_index(&tuple)
        };
        match (&self.body, &other.body) {
            (RvBody::Map(_), RvBody::Map(_)) => {
                let table = (0..wt.size())
                    .map(|i| compose_idx(self.eval_det(i).unwrap(), other.eval_det(i).unwrap()))
                    .collect();
                Ok(TransRv::det(target, table))
            }
            _ => {
                let mut rows = vec![vec![zero(); target.size()]; wt.size()];
                for (i, row) in rows.iter_mut().enumerate() {
                    for ai in 0..self.target.size() {
                        let pa = match &self.body {
                            RvBody::Map(_) => {
                                if self.eval_det(i).unwrap() == ai {
                                    one()
                                } else {
                                    continue;
                                }
                            }
                            RvBody::Stoch(k) => {
                                let p = k.entry(i, ai);
                                if p.is_zero() {
                                    continue;
                                }
                                p.clone()
                            }
                        };
                        for bi in 0..other.target.size() {
                            let pb = match &other.body {
                                RvBody::Map(_) => {
                                    if other.eval_det(i).unwrap() == bi {
                                        one()
                                    } else {
                                        continue;
                                    }
                                }
                                RvBody::Stoch(k) => {
                                    let p = k.entry(i, bi);
                                    if p.is_zero() {
                                        continue;
                                    }
                                    p.clone()
                                }
                            };
                            row[compose_idx(ai, bi)] = &pa * pb;
                        }
                    }
                }
                let k = Kernel::new(wt.clone(), target, rows)?;
                Ok(TransRv::stoch(k))
            }
        }
    }

    /// The rv as a Markov kernel `(W,T) ⇝ 𝒳`.
    pub fn as_kernel(&self, wt: &Space) -> Result<Kernel, KernelError> {
        self.validate(wt)?;
        match &self.body {
            RvBody::Map(_) => {
                let table: Vec<usize> = (0..wt.size()).map(|i| self.eval_det(i).unwrap()).collect();
                Kernel::delta(wt.clone(), self.target.clone(), &table)
            }
            RvBody::Stoch(k) => Ok(k.clone()),
        }
    }
}
