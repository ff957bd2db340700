//! Statistical concepts expressed as transitional conditional independence:
//! ancillarity, sufficiency, adequacy, Fisher-Neyman models, propensity
//! scores, likelihoods, and Bayesian posteriors.

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::kernel::{FiniteVar, Kernel, Space, TransRv};
use crate::rational::{format_rat, zero, Rat};
use crate::tci::{tci_check, CiVerdict, TciError, TransSpace};

fn fresh_name(base: &str, taken: &BTreeSet<String>) -> String {
    let mut name = base.to_string();
    while taken.contains(&name) {
        name.push('\'');
    }
    name
}

/// Verdicts for a statistic `S = s ∘ X` of a statistical model `P(W|Θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatReport {
    /// `S ⊥ Θ`: the distribution of `S` does not depend on the parameter.
    pub ancillary: CiVerdict,
    /// `X ⊥ Θ | S` with witness `P(X|S, Θ-free)`.
    pub sufficient: CiVerdict,
    /// `X ⊥ Θ,Y | S`, when a label variable `y` is supplied.
    pub adequate: Option<CiVerdict>,
}

/// Evaluates ancillarity, sufficiency, and (optionally) adequacy of the
/// statistic given by `s_table` over `x`'s outcomes.
///
/// `x` must be deterministic so the composed statistic shares its value.
pub fn stat_concepts(
    model: &Kernel,
    s_var: FiniteVar,
    s_table: &[usize],
    x: &TransRv,
    y: Option<&TransRv>,
) -> Result<StatReport, TciError> {
    if !x.is_deterministic() {
        return Err(TciError::NotDeterministic);
    }
    let ts = TransSpace::new(model.clone())?;
    x.validate(ts.wt())?;
    if s_table.len() != x.target.size() || s_table.iter().any(|&v| v >= s_var.outcomes.len()) {
        return Err(TciError::InvalidModel(
            "statistic table must be total on the outcomes of x".into(),
        ));
    }
    let s_space = Space::singleton(s_var)?;
    let s_rv = TransRv::det(
        s_space,
        (0..ts.wt().size())
            .map(|i| s_table[x.eval_det(i).expect("deterministic")])
            .collect(),
    );
    let taken: BTreeSet<String> = x
        .target
        .names()
        .union(&s_rv.target.names())
        .cloned()
        .collect();
    let theta = ts
        .t_projection()?
        .with_prefix(&format!("{}.", fresh_name("theta", &taken)))?;

    let star = TransRv::constant_star();
    let ancillary = tci_check(&ts, &s_rv, &theta, &star)?;
    let sufficient = tci_check(&ts, x, &theta, &s_rv)?;
    let adequate = match y {
        Some(y_rv) => {
            let ty = theta.join(y_rv, ts.wt())?;
            Some(tci_check(&ts, x, &ty, &s_rv)?)
        }
        None => None,
    };
    Ok(StatReport {
        ancillary,
        sufficient,
        adequate,
    })
}

/// Builds the statistical model `P(X=x|θ) ∝ h(x) · g(S(x); θ)` with exact
/// normalization; parameter values with zero total mass are rejected.
pub fn fisher_neyman_model(
    x_var: FiniteVar,
    theta_var: FiniteVar,
    s_table: &[usize],
    h: &[Rat],
    g: &[Vec<Rat>],
) -> Result<Kernel, TciError> {
    let nx = x_var.outcomes.len();
    let ntheta = theta_var.outcomes.len();
    if h.len() != nx || s_table.len() != nx {
        return Err(TciError::InvalidModel("h and S must cover all outcomes of X".into()));
    }
    let x_space = Space::singleton(x_var)?;
    let theta_space = Space::singleton(theta_var)?;
    let mut rows = Vec::with_capacity(ntheta);
    for t in 0..ntheta {
        let mut row = Vec::with_capacity(nx);
        let mut total = zero();
        for xi in 0..nx {
            let gi = g
                .get(s_table[xi])
                .and_then(|r| r.get(t))
                .ok_or_else(|| TciError::InvalidModel("g table too small".into()))?;
            if h[xi] < zero() || *gi < zero() {
                return Err(TciError::InvalidModel("negative factor".into()));
            }
            let v = &h[xi] * gi;
            total += &v;
            row.push(v);
        }
        if total.is_zero() {
            return Err(TciError::InvalidModel(format!(
                "parameter index {t} has zero total mass"
            )));
        }
        rows.push(row.into_iter().map(|v| v / &total).collect());
    }
    Ok(Kernel::new(theta_space, x_space, rows)?)
}

/// Propensity of `P(Y|X)`: the map `E(x) = P(Y|X=x)`, its independence
/// verdict `Y ⊥ X | E`, and the class labels (canonical rational vectors).
#[derive(Clone, Debug, PartialEq)]
pub struct PropensityReport {
    /// Class index per `x` assignment.
    pub e_table: Vec<usize>,
    /// Canonical label per class: the row distribution as rationals.
    pub e_labels: Vec<String>,
    pub verdict: CiVerdict,
}

fn row_classes(k: &Kernel) -> (Vec<usize>, Vec<String>) {
    let mut classes: Vec<Vec<Rat>> = Vec::new();
    let mut table = Vec::with_capacity(k.source().size());
    for s in 0..k.source().size() {
        let row = k.row(s).to_vec();
        let id = match classes.iter().position(|c| *c == row) {
            Some(i) => i,
            None => {
                classes.push(row);
                classes.len() - 1
            }
        };
        table.push(id);
    }
    let labels = classes
        .iter()
        .map(|c| {
            let parts: Vec<String> = c.iter().map(format_rat).collect();
            format!("({})", parts.join(","))
        })
        .collect();
    (table, labels)
}

/// The propensity rv `E ⊑ X` for a kernel `P(Y|X)`, as a deterministic
/// variable on the transition space `(𝒴 × 𝒳, P(Y|X))`.
pub fn propensity_rv(k: &Kernel) -> Result<(TransRv, Vec<usize>, Vec<String>), TciError> {
    let ts = TransSpace::new(k.clone())?;
    let (e_table, e_labels) = row_classes(k);
    let taken: BTreeSet<String> = ts.wt().names();
    let e_var = FiniteVar {
        name: fresh_name("E", &taken),
        outcomes: (0..e_labels.len()).map(|i| i.to_string()).collect(),
    };
    let t_pos = ts.wt().positions_of(ts.t())?;
    let table = (0..ts.wt().size())
        .map(|i| {
            let tuple = ts.wt().index_to_tuple(i);
            let t_idx = ts
                .t()
                .tuple_to_index(&t_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
            e_table[t_idx]
        })
        .collect();
    Ok((
        TransRv::det(Space::singleton(e_var)?, table),
        e_table,
        e_labels,
    ))
}

/// Computes the propensity of `P(Y|X)` and asserts `Y ⊥ X | E`.
pub fn propensity(k: &Kernel) -> Result<PropensityReport, TciError> {
    let ts = TransSpace::new(k.clone())?;
    let (e_rv, e_table, e_labels) = propensity_rv(k)?;
    let y_rv = ts.project(&ts.w().names(), &[])?;
    let x_rv = ts
        .t_projection()?
        .with_prefix(&format!("{}.", fresh_name("x", &ts.wt().names())))?;
    let verdict = tci_check(&ts, &y_rv, &x_rv, &e_rv)?;
    Ok(PropensityReport {
        e_table,
        e_labels,
        verdict,
    })
}

/// Minimality of the propensity against another statistic `S` of `X`:
/// whenever `Y ⊥ X | S`, the propensity factors through `S` (`E ⊑ S`).
#[derive(Clone, Debug, PartialEq)]
pub struct MinimalityReport {
    /// Whether `Y ⊥ X | S` holds, the premise of minimality.
    pub premise: bool,
    /// Witness map `φ` with `E = φ ∘ S` (indexed by S-assignments).
    pub phi: Option<Vec<usize>>,
}

pub fn propensity_minimality(
    k: &Kernel,
    s_var: FiniteVar,
    s_table: &[usize],
) -> Result<MinimalityReport, TciError> {
    let ts = TransSpace::new(k.clone())?;
    if s_table.len() != ts.t().size() || s_table.iter().any(|&v| v >= s_var.outcomes.len()) {
        return Err(TciError::InvalidModel("statistic must be total on X".into()));
    }
    let (e_rv, _, _) = propensity_rv(k)?;
    let t_pos = ts.wt().positions_of(ts.t())?;
    let s_rv = TransRv::det(
        Space::singleton(s_var)?,
        (0..ts.wt().size())
            .map(|i| {
                let tuple = ts.wt().index_to_tuple(i);
                s_table[ts
                    .t()
                    .tuple_to_index(&t_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>())]
            })
            .collect(),
    );
    let y_rv = ts.project(&ts.w().names(), &[])?;
    let x_rv = ts
        .t_projection()?
        .with_prefix(&format!("{}.", fresh_name("x", &ts.wt().names())))?;
    let premise = tci_check(&ts, &y_rv, &x_rv, &s_rv)?.independent;
    let phi = if premise {
        ts.rv_leq(&e_rv, &s_rv)?
    } else {
        None
    };
    Ok(MinimalityReport { premise, phi })
}

/// Bayesian posterior checks for a model `P(X|Θ)` and prior `P(Θ|Π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesReport {
    /// `Θ ⊥ X | Z`, the posterior screens the data off the parameters.
    pub posterior: CiVerdict,
    /// `X ⊥ Θ,Π | L`, the weak likelihood principle.
    pub likelihood: CiVerdict,
    /// Posterior class labels per `(x, π)` source assignment.
    pub posterior_labels: Vec<String>,
    /// Likelihood class labels per `θ` assignment.
    pub likelihood_labels: Vec<String>,
}

/// Runs the posterior and likelihood independence checks. The posterior `Z`
/// is computed by exact disintegration of `P(X,Θ|Π)`; both `Z` and the
/// likelihood `L` are represented by canonical rational-vector classes.
pub fn bayes_posterior_check(model: &Kernel, prior: &Kernel) -> Result<BayesReport, TciError> {
    let joint = Kernel::product(model, prior)?;
    let ts = TransSpace::new(joint.clone())?;
    let x_names = model.target().names();
    let theta_names = prior.target().names();

    let posterior_kernel = joint.disintegrate(&x_names)?;
    let (post_class, posterior_labels) = row_classes(&posterior_kernel);
    let (lik_class, likelihood_labels) = row_classes(model);

    let taken = ts.wt().names();
    let z_var = FiniteVar {
        name: fresh_name("Z", &taken),
        outcomes: (0..posterior_labels.len()).map(|i| i.to_string()).collect(),
    };
    let l_var = FiniteVar {
        name: fresh_name("L", &taken),
        outcomes: (0..likelihood_labels.len()).map(|i| i.to_string()).collect(),
    };

    // Z reads (x, π); L reads θ. Both are deterministic on (W, T).
    let post_src = posterior_kernel.source().clone();
    let post_pos = ts.wt().positions_of(&post_src)?;
    let theta_space = ts.wt().restrict(&theta_names)?;
    let theta_pos = ts.wt().positions_of(&theta_space)?;
    let mut z_table = Vec::with_capacity(ts.wt().size());
    let mut l_table = Vec::with_capacity(ts.wt().size());
    for i in 0..ts.wt().size() {
        let tuple = ts.wt().index_to_tuple(i);
        let xpi = post_src.tuple_to_index(&post_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
        z_table.push(post_class[xpi]);
        let th =
            theta_space.tuple_to_index(&theta_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
        l_table.push(lik_class[th]);
    }
    let z_rv = TransRv::det(Space::singleton(z_var)?, z_table);
    let l_rv = TransRv::det(Space::singleton(l_var)?, l_table);

    let theta_rv = ts.project(&theta_names, &[])?;
    let x_rv = ts.project(&x_names, &[])?;
    let pi_rv = ts
        .t_projection()?
        .with_prefix(&format!("{}.", fresh_name("pi", &taken)))?;

    let posterior = tci_check(&ts, &theta_rv, &x_rv, &z_rv)?;
    let theta_pi = theta_rv.join(&pi_rv, ts.wt())?;
    let likelihood = tci_check(&ts, &x_rv, &theta_pi, &l_rv)?;

    Ok(BayesReport {
        posterior,
        likelihood,
        posterior_labels,
        likelihood_labels,
    })
}

/// Minimality of the posterior: any statistic `S` of `(X, Π)` with
/// `Θ ⊥ X | S` has `Z ⊑ S` off the null set.
pub fn bayes_posterior_minimality(
    model: &Kernel,
    prior: &Kernel,
    s_var: FiniteVar,
    s_table: &[usize],
) -> Result<MinimalityReport, TciError> {
    let joint = Kernel::product(model, prior)?;
    let ts = TransSpace::new(joint.clone())?;
    let x_names = model.target().names();
    let theta_names = prior.target().names();
    let posterior_kernel = joint.disintegrate(&x_names)?;
    let post_src = posterior_kernel.source().clone();
    if s_table.len() != post_src.size() || s_table.iter().any(|&v| v >= s_var.outcomes.len()) {
        return Err(TciError::InvalidModel(
            "statistic must be total on (X, Π)".into(),
        ));
    }
    let (post_class, _) = row_classes(&posterior_kernel);
    let taken = ts.wt().names();
    let z_var = FiniteVar {
        name: fresh_name("Z", &taken),
        outcomes: (0..post_class.iter().max().map(|m| m + 1).unwrap_or(1))
            .map(|i| i.to_string())
            .collect(),
    };
    let post_pos = ts.wt().positions_of(&post_src)?;
    let mut z_table = Vec::with_capacity(ts.wt().size());
    let mut s_full = Vec::with_capacity(ts.wt().size());
    for i in 0..ts.wt().size() {
        let tuple = ts.wt().index_to_tuple(i);
        let xpi = post_src.tuple_to_index(&post_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
        z_table.push(post_class[xpi]);
        s_full.push(s_table[xpi]);
    }
    let z_rv = TransRv::det(Space::singleton(z_var)?, z_table);
    let s_rv = TransRv::det(Space::singleton(s_var)?, s_full);
    let theta_rv = ts.project(&theta_names, &[])?;
    let x_rv = ts.project(&x_names, &[])?;
    let premise = tci_check(&ts, &theta_rv, &x_rv, &s_rv)?.independent;
    let phi = if premise {
        ts.rv_leq(&z_rv, &s_rv)?
    } else {
        None
    };
    Ok(MinimalityReport { premise, phi })
}

/// Invariant-reduction check: `U ⊥ Θ | Γ` with the witness kernel
/// reproducing the push-forward `P(U|Θ=θ)` at `Γ(θ)` for every `θ`.
pub fn invariant_reduction(
    model: &Kernel,
    u_var: FiniteVar,
    u_table: &[usize],
    gamma_var: FiniteVar,
    gamma_table: &[usize],
) -> Result<(CiVerdict, bool), TciError> {
    let ts = TransSpace::new(model.clone())?;
    let nx = ts.w().size();
    let ntheta = ts.t().size();
    if u_table.len() != nx || gamma_table.len() != ntheta {
        return Err(TciError::InvalidModel("tables must be total".into()));
    }
    let w_pos = ts.wt().positions_of(ts.w())?;
    let t_pos = ts.wt().positions_of(ts.t())?;
    let mut u_full = Vec::with_capacity(ts.wt().size());
    let mut g_full = Vec::with_capacity(ts.wt().size());
    for i in 0..ts.wt().size() {
        let tuple = ts.wt().index_to_tuple(i);
        let x = ts
            .w()
            .tuple_to_index(&w_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
        let th = ts
            .t()
            .tuple_to_index(&t_pos.iter().map(|&p| tuple[p]).collect::<Vec<_>>());
        u_full.push(u_table[x]);
        g_full.push(gamma_table[th]);
    }
    let u_rv = TransRv::det(Space::singleton(u_var.clone())?, u_full);
    let gamma_rv = TransRv::det(Space::singleton(gamma_var)?, g_full);
    let theta_rv = ts
        .t_projection()?
        .with_prefix(&format!("{}.", fresh_name("theta", &ts.wt().names())))?;
    let verdict = tci_check(&ts, &u_rv, &theta_rv, &gamma_rv)?;
    let mut reproduces = verdict.independent;
    if let Some(q) = &verdict.witness {
        // P(U|Γ=γ(θ)) must equal the push-forward of P(W|Θ=θ) through U.
        let push = ts.base().pushforward(&u_rv)?;
        for th in 0..ntheta {
            let gi = gamma_table[th];
            if q.row(gi) != push.row(th) {
                reproduces = false;
            }
        }
    }
    Ok((verdict, reproduces))
}
