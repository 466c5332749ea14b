//! Interventions on a function of the features, `do(f(X) = z)`.
//!
//! Two routes are provided: the defining mixture over feature values
//! consistent with `f(X) = z` inside each common-cause stratum, and the
//! adjustment formula over the common causes. They agree whenever the outcome
//! depends on the common causes only through the features.

use std::collections::BTreeMap;

use super::engine::{observational_dist, EventSpec};
use super::model::BinaryScm;
use crate::error::{Error, Result};

/// Feature, common-cause and outcome variables of a functional query.
#[derive(Debug, Clone)]
pub struct FunctionalQuery {
    pub features: Vec<String>,
    pub common_causes: Vec<String>,
    pub outcome: EventSpec,
}

struct Indexed {
    features: Vec<usize>,
    common: Vec<usize>,
}

fn index(scm: &BinaryScm, q: &FunctionalQuery) -> Result<Indexed> {
    let features = q.features.iter().map(|n| scm.index_of(n)).collect::<Result<Vec<_>>>()?;
    let common = q
        .common_causes
        .iter()
        .map(|n| scm.index_of(n))
        .collect::<Result<Vec<_>>>()?;
    if features.is_empty() {
        return Err(Error::input("functional query needs at least one feature"));
    }
    Ok(Indexed { features, common })
}

fn pack(assignment: u64, vars: &[usize]) -> u64 {
    vars.iter()
        .enumerate()
        .fold(0, |acc, (k, &i)| acc | ((assignment >> i & 1) << k))
}

fn unpack(code: u64, len: usize) -> Vec<bool> {
    (0..len).map(|k| code >> k & 1 == 1).collect()
}

/// Observational table keyed by (common-cause code, feature code) holding
/// (mass, mass with the outcome).
fn table(scm: &BinaryScm, q: &FunctionalQuery, ix: &Indexed) -> Result<BTreeMap<(u64, u64), (f64, f64)>> {
    let obs = observational_dist(scm)?;
    let outcome = q.outcome.resolve(scm)?;
    let mut t = BTreeMap::new();
    for (&a, &p) in obs.masses() {
        let e = t
            .entry((pack(a, &ix.common), pack(a, &ix.features)))
            .or_insert((0.0, 0.0));
        e.0 += p;
        if outcome.holds(a) {
            e.1 += p;
        }
    }
    Ok(t)
}

/// `Σ_c P(c) Σ_x P(y | X = x) P(X = x | C = c, f(X) = z)`.
pub fn functional_do(scm: &BinaryScm, q: &FunctionalQuery, f: &dyn Fn(&[bool]) -> u64, z: u64) -> Result<f64> {
    let ix = index(scm, q)?;
    let t = table(scm, q, &ix)?;
    let nf = ix.features.len();
    let mut p_x: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut p_c: BTreeMap<u64, f64> = BTreeMap::new();
    for (&(c, x), &(p, py)) in &t {
        let e = p_x.entry(x).or_insert((0.0, 0.0));
        e.0 += p;
        e.1 += py;
        *p_c.entry(c).or_insert(0.0) += p;
    }
    let mut total = 0.0;
    for (&c, &pc) in p_c.iter().filter(|(_, &pc)| pc > 0.0) {
        let stratum: Vec<(u64, f64)> = t
            .iter()
            .filter(|(&(cc, x), &(p, _))| cc == c && p > 0.0 && f(&unpack(x, nf)) == z)
            .map(|(&(_, x), &(p, _))| (x, p))
            .collect();
        let mass: f64 = stratum.iter().map(|(_, p)| p).sum();
        if mass <= 0.0 {
            return Err(Error::DegenerateEvent(format!(
                "f(X) = {z} has zero probability in common-cause stratum {c}"
            )));
        }
        let inner: f64 = stratum
            .iter()
            .map(|(x, p)| {
                let (px, pxy) = p_x[x];
                pxy / px * p / mass
            })
            .sum();
        total += pc * inner;
    }
    Ok(total)
}

/// `Σ_c P(c) P(y | f(X) = z, C = c)`.
pub fn functional_do_backdoor(scm: &BinaryScm, q: &FunctionalQuery, f: &dyn Fn(&[bool]) -> u64, z: u64) -> Result<f64> {
    let ix = index(scm, q)?;
    let t = table(scm, q, &ix)?;
    let nf = ix.features.len();
    let mut strata: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for (&(c, x), &(p, py)) in &t {
        let e = strata.entry(c).or_insert((0.0, 0.0, 0.0));
        e.0 += p;
        if f(&unpack(x, nf)) == z {
            e.1 += p;
            e.2 += py;
        }
    }
    let mut total = 0.0;
    for (c, (pc, pz, pzy)) in strata {
        if pc <= 0.0 {
            continue;
        }
        if pz <= 0.0 {
            return Err(Error::DegenerateEvent(format!(
                "f(X) = {z} has zero probability in common-cause stratum {c}"
            )));
        }
        total += pc * pzy / pz;
    }
    Ok(total)
}

/// Encodes a feature assignment as an integer; the identity feature map.
pub fn identity_feature(x: &[bool]) -> u64 {
    x.iter().enumerate().fold(0, |acc, (k, &b)| acc | ((b as u64) << k))
}
