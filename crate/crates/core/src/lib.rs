//! Exact engine for transitional conditional independence on finite spaces:
//! Markov kernel algebra with rational tables, sigma-separation on
//! conditional directed mixed graphs, causal Bayesian networks with
//! non-stochastic inputs, a global-Markov-property verifier, do-calculus,
//! and an asymmetric-separoid rule harness.

pub mod cbn;
pub mod graph;
pub mod json;
pub mod kernel;
pub mod randgen;
pub mod rational;
pub mod reparam;
pub mod separation;
pub mod separoid;
pub mod tci;

pub use cbn::{gmp_verify, Cbn, CbnError, GmpReport, GmpScope};
pub use graph::{Cdmg, EdgeMark, GraphError, Walk};
pub use kernel::{kernels_agree_ae, FiniteVar, Kernel, KernelError, RvBody, Space, TransRv};
pub use rational::{format_rat, parse_rat, rat, Rat};
pub use reparam::{itcdf, verify_reparam, Itcdf, RealEmbedding, ReparamError};
pub use separation::{
    d_separated, sigma_separated, sigma_separated_oracle, walk_blocked, SepQuery, SepVerdict,
    SeparationError,
};
pub use separoid::{
    check_rules, derive_relation, symmetrize, RuleReport, SeparoidError, SeparoidInstance,
};
pub use tci::{
    deterministic_ci_check, equivalence_battery, joint_pushforward, tci_check, variation_ci_check,
    weak_ci_check, CiVerdict, TciError, TransSpace,
};
