//! Probabilities of causation computed from twin-world counterfactuals.

use serde::{Deserialize, Serialize};

use super::engine::{Clamp, Engine, EventSpec, ResolvedEvent};
use super::model::BinaryScm;
use crate::error::{Error, Result};

/// Probability of necessity, sufficiency, and both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poc {
    pub pn: f64,
    pub ps: f64,
    pub pns: f64,
}

/// Joint law of the factual cause and outcome indicators and the two
/// potential outcomes `Y(z)`, `Y(z')` with `z' ≠ z`.
///
/// Cell index bits: 0 cause holds, 1 outcome holds, 2 outcome holds under
/// `do(cause)`, 3 outcome holds under `do(not cause)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinTable {
    pub cells: [f64; 16],
}

impl TwinTable {
    fn sum(&self, pred: impl Fn(usize) -> bool) -> f64 {
        (0..16).filter(|&c| pred(c)).map(|c| self.cells[c]).sum()
    }

    /// P(Y(z)=y, Y(z')≠y).
    pub fn pns(&self) -> f64 {
        self.sum(|c| c & 4 != 0 && c & 8 == 0)
    }

    /// P(Y(z)≠y, Y(z')=y); zero exactly when the outcome is monotone in the cause.
    pub fn monotonicity_violation(&self) -> f64 {
        self.sum(|c| c & 4 == 0 && c & 8 != 0)
    }

    pub fn p_cause_outcome(&self) -> f64 {
        self.sum(|c| c & 3 == 3)
    }

    pub fn p_neither(&self) -> f64 {
        self.sum(|c| c & 3 == 0)
    }

    /// P(Y(z')≠y | Z=z, Y=y).
    pub fn pn(&self) -> Result<f64> {
        let d = self.p_cause_outcome();
        if d <= 0.0 {
            return Err(Error::DegenerateEvent("P(Z=z, Y=y) is zero".into()));
        }
        Ok(self.sum(|c| c & 3 == 3 && c & 8 == 0) / d)
    }

    /// P(Y(z)=y | Z≠z, Y≠y).
    pub fn ps(&self) -> Result<f64> {
        let d = self.p_neither();
        if d <= 0.0 {
            return Err(Error::DegenerateEvent("P(Z≠z, Y≠y) is zero".into()));
        }
        Ok(self.sum(|c| c & 3 == 0 && c & 4 != 0) / d)
    }
}

fn check_disjoint(cause: &ResolvedEvent, outcome: &ResolvedEvent) -> Result<()> {
    if cause.mask & outcome.mask != 0 {
        return Err(Error::input("cause and outcome share a variable"));
    }
    Ok(())
}

/// Builds the twin-world table. Each world draws its potential outcomes from
/// the two intervention mixtures independently.
fn twin_table_with(
    engine: &Engine,
    scm: &BinaryScm,
    cause: ResolvedEvent,
    outcome: ResolvedEvent,
    treat: &[(f64, Clamp)],
    control: &[(f64, Clamp)],
) -> Result<TwinTable> {
    let none = vec![None; scm.len()];
    let mut cells = [0.0; 16];
    engine.for_each_world(scm, |w, noise| {
        if w == 0.0 {
            return;
        }
        let factual = scm.evaluate(noise, &none);
        let base = cause.holds(factual) as usize | (outcome.holds(factual) as usize) << 1;
        let q = |mix: &[(f64, Clamp)]| -> f64 {
            mix.iter()
                .filter(|(_, c)| outcome.holds(scm.evaluate(noise, c)))
                .map(|(p, _)| p)
                .sum()
        };
        let qt = q(treat);
        let qc = q(control);
        cells[base] += w * (1.0 - qt) * (1.0 - qc);
        cells[base | 4] += w * qt * (1.0 - qc);
        cells[base | 8] += w * (1.0 - qt) * qc;
        cells[base | 12] += w * qt * qc;
    })?;
    Ok(TwinTable { cells })
}

pub fn twin_table(engine: &Engine, scm: &BinaryScm, cause: &EventSpec, outcome: &EventSpec) -> Result<TwinTable> {
    let c = cause.resolve(scm)?;
    let o = outcome.resolve(scm)?;
    check_disjoint(&c, &o)?;
    let none = vec![None; scm.len()];
    let treat = engine.intervention_mixture(scm, c, &none)?;
    let control = engine.intervention_mixture(scm, c.complement(), &none)?;
    twin_table_with(engine, scm, c, o, &treat, &control)
}

/// Lower bound `P(y | do(z)) - P(y | do(Z ≠ z))` on PNS.
pub fn pns_lower_bound(scm: &BinaryScm, cause: &EventSpec, outcome: &EventSpec) -> Result<f64> {
    pns_lower_bound_with(&Engine::exact(), scm, cause, outcome)
}

pub fn pns_lower_bound_with(engine: &Engine, scm: &BinaryScm, cause: &EventSpec, outcome: &EventSpec) -> Result<f64> {
    let o = outcome.resolve(scm)?;
    check_disjoint(&cause.resolve(scm)?, &o)?;
    let treated = engine.do_event(scm, cause)?;
    let control = engine.do_not_equal(scm, cause)?;
    Ok(treated.prob(std::slice::from_ref(outcome))? - control.prob(std::slice::from_ref(outcome))?)
}

/// Exact PN, PS and PNS from the twin-world construction.
pub fn true_poc(scm: &BinaryScm, cause: &EventSpec, outcome: &EventSpec) -> Result<Poc> {
    let engine = Engine::exact();
    // do(not z) is only defined when Z ≠ z has positive probability.
    engine.do_not_equal(scm, cause)?;
    let t = twin_table(&engine, scm, cause, outcome)?;
    Ok(Poc {
        pn: t.pn()?,
        ps: t.ps()?,
        pns: t.pns(),
    })
}

/// PNS of `Z_j = z` for the outcome with the remaining factors clamped to
/// their given values in both worlds.
pub fn conditional_pns_oracle(
    scm: &BinaryScm,
    cause: &EventSpec,
    held_fixed: &[EventSpec],
    outcome: &EventSpec,
) -> Result<f64> {
    if cause.assignments.len() != 1 || cause.negated {
        return Err(Error::input("conditional PNS needs a single-variable cause Z_j = z"));
    }
    let c = cause.resolve(scm)?;
    let o = outcome.resolve(scm)?;
    check_disjoint(&c, &o)?;
    let mut base = vec![None; scm.len()];
    for h in held_fixed {
        if h.negated {
            return Err(Error::input("held factors must be plain assignments"));
        }
        let r = h.resolve(scm)?;
        if r.mask & (c.mask | o.mask) != 0 {
            return Err(Error::input("held factors overlap the cause or outcome"));
        }
        for i in r.vars() {
            base[i] = Some(r.value >> i & 1 == 1);
        }
    }
    let engine = Engine::exact();
    let i = c.vars()[0];
    let mut treat = base.clone();
    treat[i] = Some(c.value >> i & 1 == 1);
    let mut control = base;
    control[i] = Some(c.value >> i & 1 == 0);
    let t = twin_table_with(&engine, scm, c, o, &[(1.0, treat)], &[(1.0, control)])?;
    Ok(t.pns())
}

/// Σ log PNS over datapoints given as (cause, outcome) events; `-inf` if any
/// factor is zero.
pub fn dataset_pns(scm: &BinaryScm, events: &[(EventSpec, EventSpec)]) -> Result<f64> {
    let engine = Engine::exact();
    let mut total = 0.0;
    for (cause, outcome) in events {
        let pns = twin_table(&engine, scm, cause, outcome)?.pns();
        if pns <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += pns.ln();
    }
    Ok(total)
}
