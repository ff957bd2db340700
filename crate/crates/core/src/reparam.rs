//! Interpolated transitional CDF and transitional quantile function for
//! real-embedded finite variables.
//!
//! For `K(X|Z)` with an order embedding of X's outcomes into the rationals,
//! `F(x;u|z) = K(X < x|Z=z) + u·K(X = x|Z=z)` and
//! `R(e|z) = least embedded x with F(x;1|z) ≥ e`. Adjoining a uniform `U`,
//! `E = F(X;U|Z)` is uniform on `[0,1]` and `X = R(E|Z)` almost surely; both
//! facts are verified symbolically on the piecewise-linear structure, never
//! by sampling.

use num_traits::Zero;
use thiserror::Error;

use crate::kernel::{FiniteVar, Kernel, KernelError};
use crate::rational::{one, rat, zero, Rat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReparamError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("embedding must list one strictly increasing value per outcome")]
    BadEmbedding,
    #[error("embedding does not match the kernel's target variable")]
    EmbeddingMismatch,
    #[error("kernel must have a single target variable")]
    NotUnivariate,
    #[error("evaluation point out of [0,1]")]
    OutOfRange,
}

/// A strictly increasing real embedding of a finite variable's outcomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealEmbedding {
    pub var: FiniteVar,
    pub values: Vec<Rat>,
}

impl RealEmbedding {
    pub fn new(var: FiniteVar, values: Vec<Rat>) -> Result<Self, ReparamError> {
        if values.len() != var.outcomes.len() || values.is_empty() {
            return Err(ReparamError::BadEmbedding);
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ReparamError::BadEmbedding);
        }
        Ok(RealEmbedding { var, values })
    }

    /// Identity embedding `0, 1, 2, …` in declared outcome order.
    pub fn canonical(var: FiniteVar) -> Self {
        let values = (0..var.outcomes.len() as i64).map(rat_int).collect();
        RealEmbedding { var, values }
    }
}

fn rat_int(n: i64) -> Rat {
    rat(n, 1)
}

/// Exact step data of the interpolated transitional CDF: per source point
/// `z` and per atom (in embedding order) the mass strictly below and the
/// atom mass.
#[derive(Clone, Debug, PartialEq)]
pub struct Itcdf {
    kernel: Kernel,
    embedding: RealEmbedding,
    /// `per_z[z][i] = (below, atom)` for the i-th embedded outcome.
    per_z: Vec<Vec<(Rat, Rat)>>,
}

impl Itcdf {
    pub fn z_count(&self) -> usize {
        self.kernel.source().size()
    }

    pub fn atom_count(&self) -> usize {
        self.embedding.values.len()
    }

    pub fn below(&self, z: usize, atom: usize) -> &Rat {
        &self.per_z[z][atom].0
    }

    pub fn atom_mass(&self, z: usize, atom: usize) -> &Rat {
        &self.per_z[z][atom].1
    }

    /// `F(x; u | z)` for the atom at `x` and interpolation weight `u`.
    pub fn eval(&self, atom: usize, u: &Rat, z: usize) -> Result<Rat, ReparamError> {
        if *u < zero() || *u > one() {
            return Err(ReparamError::OutOfRange);
        }
        let (below, mass) = &self.per_z[z][atom];
        Ok(below + u * mass)
    }

    /// Transitional quantile function: the least embedded value whose CDF
    /// reaches `e`. At `e = 0` the paper's infimum is `-∞`; on a finite
    /// embedding the least embedded value is returned and flagged.
    pub fn tqf(&self, e: &Rat, z: usize) -> Result<TqfValue, ReparamError> {
        if *e < zero() || *e > one() {
            return Err(ReparamError::OutOfRange);
        }
        if e.is_zero() {
            return Ok(TqfValue {
                atom: 0,
                value: self.embedding.values[0].clone(),
                boundary: true,
            });
        }
        for (i, (below, mass)) in self.per_z[z].iter().enumerate() {
            if &(below + mass) >= e {
                return Ok(TqfValue {
                    atom: i,
                    value: self.embedding.values[i].clone(),
                    boundary: false,
                });
            }
        }
        // Row sums to one, so e <= 1 always lands above.
        unreachable!("stochastic row reaches 1")
    }
}

/// A quantile value: the atom index, its embedded value, and whether the
/// `e = 0` boundary convention was applied.
#[derive(Clone, Debug, PartialEq)]
pub struct TqfValue {
    pub atom: usize,
    pub value: Rat,
    pub boundary: bool,
}

/// Builds the exact itcdf of a univariate kernel under an embedding.
pub fn itcdf(k: &Kernel, emb: &RealEmbedding) -> Result<Itcdf, ReparamError> {
    if k.target().vars().len() != 1 {
        return Err(ReparamError::NotUnivariate);
    }
    let var = &k.target().vars()[0];
    if var != &emb.var {
        return Err(ReparamError::EmbeddingMismatch);
    }
    RealEmbedding::new(emb.var.clone(), emb.values.clone())?;
    // The embedding is strictly increasing in declared outcome order, so
    // atom index and embedded order coincide.
    let mut per_z = Vec::with_capacity(k.source().size());
    for z in 0..k.source().size() {
        let mut below = zero();
        let mut row = Vec::with_capacity(emb.values.len());
        for outcome in 0..emb.values.len() {
            let mass = k.entry(z, outcome).clone();
            row.push((below.clone(), mass.clone()));
            below += mass;
        }
        per_z.push(row);
    }
    Ok(Itcdf {
        kernel: k.clone(),
        embedding: emb.clone(),
        per_z,
    })
}

/// Per-z verification detail.
#[derive(Clone, Debug, PartialEq)]
pub struct ZReport {
    pub z_label: String,
    /// CDF-of-E identity points checked (breakpoints and midpoints).
    pub cdf_points: u64,
    pub cdf_identity: bool,
    /// Atoms with positive mass whose inversion interval verified.
    pub inversion_atoms: u64,
    pub inversion: bool,
    /// The e = 0 boundary convention is always flagged.
    pub boundary_flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReparamReport {
    pub per_z: Vec<ZReport>,
    pub pass: bool,
}

/// CDF of `E = F(X;U|Z)` at `e`, computed symbolically:
/// `P(E ≤ e | z) = Σ_x mass(x) · clamp((e − below(x)) / mass(x), 0, 1)`.
fn cdf_of_e(it: &Itcdf, z: usize, e: &Rat) -> Rat {
    let mut total = zero();
    for (below, mass) in &it.per_z[z] {
        if mass.is_zero() {
            continue;
        }
        let hi = below + mass;
        if e >= &hi {
            total += mass;
        } else if e > below {
            total += e - below;
        }
    }
    total
}

/// Verifies the two reparameterization conclusions exactly:
/// (i) the CDF of `E` is the identity on `[0,1]`, checked at every
/// breakpoint of the piecewise-linear structure and all midpoints;
/// (ii) `R(F(x;u|z)|z) = x` for every positive-mass atom, interval-wise.
pub fn verify_reparam(k: &Kernel, emb: &RealEmbedding) -> Result<ReparamReport, ReparamError> {
    let it = itcdf(k, emb)?;
    let mut per_z = Vec::with_capacity(it.z_count());
    let mut pass = true;
    for z in 0..it.z_count() {
        // Breakpoints: 0, each cumulative mass, 1.
        let mut points: Vec<Rat> = vec![zero(), one()];
        for (below, mass) in &it.per_z[z] {
            points.push(below.clone());
            points.push(below + mass);
        }
        points.sort();
        points.dedup();
        let mut with_mids: Vec<Rat> = Vec::with_capacity(points.len() * 2);
        for w in points.windows(2) {
            with_mids.push(w[0].clone());
            with_mids.push((&w[0] + &w[1]) / rat_int(2));
        }
        with_mids.push(one());
        let mut cdf_identity = true;
        for e in &with_mids {
            if &cdf_of_e(&it, z, e) != e {
                cdf_identity = false;
            }
        }

        // Inversion: for atom x with mass > 0, F(x;u|z) sweeps
        // (below, below+mass] as u sweeps (0,1]; R must return x on the
        // whole interval. R is a step function of e whose jumps happen at
        // cumulative masses, so checking that (a) every earlier atom's
        // cumulative stays ≤ below and (b) R at the interval's midpoint and
        // right endpoint equals x covers the interval symbolically.
        let mut inversion = true;
        let mut inversion_atoms = 0u64;
        for (i, (below, mass)) in it.per_z[z].iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            inversion_atoms += 1;
            let hi = below + mass;
            let mid = (below + &hi) / rat_int(2);
            for e in [&mid, &hi] {
                let r = it.tqf(e, z)?;
                if r.atom != i {
                    inversion = false;
                }
            }
            for (j, (below_j, mass_j)) in it.per_z[z].iter().enumerate() {
                if j < i && &(below_j + mass_j) > below {
                    inversion = false;
                }
            }
        }

        pass &= cdf_identity && inversion;
        per_z.push(ZReport {
            z_label: k.source().label(z),
            cdf_points: with_mids.len() as u64,
            cdf_identity,
            inversion_atoms,
            inversion,
            boundary_flagged: true,
        });
    }
    Ok(ReparamReport { per_z, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Space;
    use crate::randgen;
    use crate::rational::rat as ratio;

    fn var(name: &str, n: usize) -> FiniteVar {
        FiniteVar {
            name: name.into(),
            outcomes: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    #[test]
    fn point_mass_itcdf_is_u() {
        let z = Space::singleton(var("Z", 1)).unwrap();
        let x = Space::singleton(var("X", 3)).unwrap();
        let k = Kernel::delta(z, x, &[1]).unwrap();
        let emb = RealEmbedding::canonical(var("X", 3));
        let it = itcdf(&k, &emb).unwrap();
        // F(x0=atom1; u | z) = u (below 0, atom mass 1).
        for u in [ratio(0, 1), ratio(1, 3), ratio(1, 1)] {
            assert_eq!(it.eval(1, &u, 0).unwrap(), u);
        }
        // Top of the CDF is exactly 1.
        assert_eq!(it.eval(2, &one(), 0).unwrap(), one());
        // tqf maps any e in (0,1] to the atom.
        assert_eq!(it.tqf(&ratio(1, 2), 0).unwrap().atom, 1);
        assert_eq!(it.tqf(&one(), 0).unwrap().atom, 1);
    }

    #[test]
    fn two_atom_uniform() {
        let z = Space::singleton(var("Z", 1)).unwrap();
        let x = Space::singleton(var("X", 2)).unwrap();
        let k = Kernel::uniform(z, x).unwrap();
        let emb = RealEmbedding::canonical(var("X", 2));
        let it = itcdf(&k, &emb).unwrap();
        assert_eq!(it.eval(0, &one(), 0).unwrap(), ratio(1, 2));
        assert_eq!(it.eval(1, &zero(), 0).unwrap(), ratio(1, 2));
        // Step inversion: e = 1/2 lands on the first atom, anything above
        // on the second.
        assert_eq!(it.tqf(&ratio(1, 2), 0).unwrap().atom, 0);
        assert_eq!(it.tqf(&ratio(501, 1000), 0).unwrap().atom, 1);
        // e = 1: the largest atom with positive tail mass.
        assert_eq!(it.tqf(&one(), 0).unwrap().atom, 1);
        // e = 0 is the flagged boundary case.
        let b = it.tqf(&zero(), 0).unwrap();
        assert!(b.boundary);
        assert_eq!(b.atom, 0);
    }

    #[test]
    fn trailing_zero_mass_atoms() {
        let z = Space::singleton(var("Z", 1)).unwrap();
        let x = Space::singleton(var("X", 3)).unwrap();
        let k = Kernel::new(
            z,
            x,
            vec![vec![ratio(1, 2), ratio(1, 2), ratio(0, 1)]],
        )
        .unwrap();
        let emb = RealEmbedding::canonical(var("X", 3));
        let it = itcdf(&k, &emb).unwrap();
        // e = 1 resolves to the largest atom with positive mass, not the
        // zero-mass tail atom.
        assert_eq!(it.tqf(&one(), 0).unwrap().atom, 1);
        let report = verify_reparam(&k, &emb).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn verify_reparam_examples() {
        // Point mass.
        let z = Space::singleton(var("Z", 2)).unwrap();
        let x = Space::singleton(var("X", 2)).unwrap();
        let k = Kernel::delta(z.clone(), x.clone(), &[0, 1]).unwrap();
        let emb = RealEmbedding::canonical(var("X", 2));
        let report = verify_reparam(&k, &emb).unwrap();
        assert!(report.pass);
        assert!(report.per_z.iter().all(|r| r.boundary_flagged));
        // Uniform on two atoms: breakpoints 0, 1/2, 1.
        let k = Kernel::uniform(z.clone(), x.clone()).unwrap();
        let report = verify_reparam(&k, &emb).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn verify_reparam_random_instances() {
        let mut rng = randgen::rng_for(601);
        for _ in 0..60 {
            let k = randgen::random_joint(&mut rng, &[("X", 3)], &[("Z", 2)], 10, 0.3);
            let emb = RealEmbedding::canonical(var("X", 3));
            let report = verify_reparam(&k, &emb).unwrap();
            assert!(report.pass, "{report:?}");
        }
    }

    #[test]
    fn monotonicity_of_f() {
        let mut rng = randgen::rng_for(607);
        let k = randgen::random_joint(&mut rng, &[("X", 4)], &[("Z", 2)], 8, 0.2);
        let emb = RealEmbedding::canonical(var("X", 4));
        let it = itcdf(&k, &emb).unwrap();
        for z in 0..2 {
            // Nondecreasing in x at fixed u, affine nondecreasing in u.
            for u in [zero(), ratio(1, 2), one()] {
                let vals: Vec<Rat> = (0..4).map(|a| it.eval(a, &u, z).unwrap()).collect();
                assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            }
            for a in 0..4 {
                let f0 = it.eval(a, &zero(), z).unwrap();
                let fh = it.eval(a, &ratio(1, 2), z).unwrap();
                let f1 = it.eval(a, &one(), z).unwrap();
                assert!(f0 <= fh && fh <= f1);
                // Affine: midpoint value is the average.
                assert_eq!(&fh + &fh, &f0 + &f1);
            }
        }
    }

    #[test]
    fn bad_embeddings_are_rejected() {
        let v = var("X", 2);
        assert!(RealEmbedding::new(v.clone(), vec![ratio(1, 1)]).is_err());
        assert!(RealEmbedding::new(v.clone(), vec![ratio(1, 1), ratio(1, 1)]).is_err());
        assert!(RealEmbedding::new(v.clone(), vec![ratio(2, 1), ratio(1, 1)]).is_err());
        // Mismatched variable.
        let z = Space::singleton(var("Z", 1)).unwrap();
        let k = Kernel::uniform(z, Space::singleton(var("Y", 2)).unwrap()).unwrap();
        let emb = RealEmbedding::canonical(v);
        assert!(matches!(
            itcdf(&k, &emb),
            Err(ReparamError::EmbeddingMismatch)
        ));
    }
}
