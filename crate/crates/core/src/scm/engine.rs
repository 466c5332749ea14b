use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{BinaryScm, MAX_NOISE_BITS};
use crate::error::{Error, Result};

/// A conjunction of variable assignments, optionally negated.
///
/// `EventSpec::eq("Y", true)` is `Y = 1`, `EventSpec::ne("Z", true)` is `Z ≠ 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pub assignments: Vec<(String, bool)>,
    #[serde(default)]
    pub negated: bool,
}

impl EventSpec {
    pub fn eq(var: &str, value: bool) -> Self {
        Self {
            assignments: vec![(var.to_owned(), value)],
            negated: false,
        }
    }

    pub fn ne(var: &str, value: bool) -> Self {
        Self {
            negated: true,
            ..Self::eq(var, value)
        }
    }

    pub fn all(assignments: &[(&str, bool)]) -> Self {
        Self {
            assignments: assignments.iter().map(|(n, v)| ((*n).to_owned(), *v)).collect(),
            negated: false,
        }
    }

    pub fn negate(&self) -> Self {
        Self {
            assignments: self.assignments.clone(),
            negated: !self.negated,
        }
    }

    /// Parses `Y=1`, `Z!=0`, or `Z1=1&Z2=1`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut assignments = Vec::new();
        let mut negated = false;
        let parts: Vec<&str> = text.split('&').collect();
        for part in &parts {
            let (name, value, ne) = if let Some((n, v)) = part.split_once("!=") {
                (n, v, true)
            } else if let Some((n, v)) = part.split_once('=') {
                (n, v, false)
            } else {
                return Err(Error::input(format!("cannot parse event {text:?}")));
            };
            if ne && parts.len() > 1 {
                return Err(Error::input("negation applies only to single-variable events"));
            }
            negated |= ne;
            let value = match value.trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::input(format!("event value must be 0 or 1, got {other:?}"))),
            };
            assignments.push((name.trim().to_owned(), value));
        }
        Ok(Self { assignments, negated })
    }

    pub(crate) fn resolve(&self, scm: &BinaryScm) -> Result<ResolvedEvent> {
        if self.assignments.is_empty() {
            return Err(Error::input("event has no assignments"));
        }
        let mut mask = 0u64;
        let mut value = 0u64;
        for (name, v) in &self.assignments {
            let i = scm.index_of(name)?;
            if mask >> i & 1 == 1 {
                return Err(Error::input(format!("variable {name:?} repeated in event")));
            }
            mask |= 1 << i;
            value |= (*v as u64) << i;
        }
        Ok(ResolvedEvent {
            mask,
            value,
            negated: self.negated,
        })
    }
}

impl std::fmt::Display for EventSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = if self.negated { "!=" } else { "=" };
        let parts: Vec<String> = self
            .assignments
            .iter()
            .map(|(n, v)| format!("{n}{op}{}", *v as u8))
            .collect();
        write!(f, "{}", parts.join("&"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ResolvedEvent {
    pub mask: u64,
    pub value: u64,
    pub negated: bool,
}

impl ResolvedEvent {
    pub fn holds(&self, assignment: u64) -> bool {
        ((assignment & self.mask) == self.value) != self.negated
    }

    pub fn complement(self) -> Self {
        Self {
            negated: !self.negated,
            ..self
        }
    }

    /// Variable indices touched by the event.
    pub fn vars(&self) -> Vec<usize> {
        (0..64).filter(|i| self.mask >> i & 1 == 1).collect()
    }
}

/// Probability mass function over joint assignments (bit i = variable i).
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    names: Vec<String>,
    masses: BTreeMap<u64, f64>,
    exact: bool,
}

impl Pmf {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// False when the masses come from Monte-Carlo sampling.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn masses(&self) -> &BTreeMap<u64, f64> {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }

    pub fn prob_where(&self, pred: impl Fn(u64) -> bool) -> f64 {
        self.masses.iter().filter(|(a, _)| pred(**a)).map(|(_, p)| p).sum()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::input(format!("unknown variable {name:?}")))
    }

    fn resolve(&self, event: &EventSpec) -> Result<ResolvedEvent> {
        let mut mask = 0u64;
        let mut value = 0u64;
        for (name, v) in &event.assignments {
            let i = self.index(name)?;
            mask |= 1 << i;
            value |= (*v as u64) << i;
        }
        Ok(ResolvedEvent {
            mask,
            value,
            negated: event.negated,
        })
    }

    /// Probability that every event holds.
    pub fn prob(&self, events: &[EventSpec]) -> Result<f64> {
        let resolved = events.iter().map(|e| self.resolve(e)).collect::<Result<Vec<_>>>()?;
        Ok(self.prob_where(|a| resolved.iter().all(|e| e.holds(a))))
    }

    /// P(target | given). Fails when the conditioning event has zero mass.
    pub fn conditional(&self, target: &[EventSpec], given: &[EventSpec]) -> Result<f64> {
        let denom = self.prob(given)?;
        if denom <= 0.0 {
            let text: Vec<String> = given.iter().map(ToString::to_string).collect();
            return Err(Error::DegenerateEvent(format!(
                "conditioning event {} has probability zero",
                text.join(", ")
            )));
        }
        let both: Vec<EventSpec> = target.iter().chain(given).cloned().collect();
        Ok(self.prob(&both)? / denom)
    }

    /// P(var = 1).
    pub fn marginal(&self, var: &str) -> Result<f64> {
        self.prob(&[EventSpec::eq(var, true)])
    }

    fn mix(&mut self, other: &Pmf, weight: f64) {
        for (a, p) in &other.masses {
            *self.masses.entry(*a).or_insert(0.0) += weight * p;
        }
        self.exact &= other.exact;
    }
}

/// How noise is integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Evaluation {
    /// Enumerates every noise configuration.
    Exact,
    /// Approximates with seeded samples. Results are flagged inexact.
    MonteCarlo { samples: usize, seed: u64 },
}

/// Evaluates distributions of a [`BinaryScm`] under interventions.
#[derive(Debug, Clone, Copy)]
pub struct Engine {
    pub evaluation: Evaluation,
}

impl Default for Engine {
    fn default() -> Self {
        Self::exact()
    }
}

/// Hard clamps (variable index, value) together with a mixture weight.
pub(crate) type Clamp = Vec<Option<bool>>;

impl Engine {
    pub fn exact() -> Self {
        Self {
            evaluation: Evaluation::Exact,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            evaluation: Evaluation::MonteCarlo { samples, seed },
        }
    }

    /// Calls `f(weight, noise)` for every noise world.
    pub(crate) fn for_each_world(&self, scm: &BinaryScm, mut f: impl FnMut(f64, u64)) -> Result<()> {
        let vars = scm.variables();
        let fixed: u64 = vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.noise_p >= 1.0)
            .fold(0, |acc, (i, _)| acc | 1 << i);
        let stochastic: Vec<(usize, f64)> = vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_stochastic())
            .map(|(i, v)| (i, v.noise_p))
            .collect();
        match self.evaluation {
            Evaluation::Exact => {
                if stochastic.len() > MAX_NOISE_BITS {
                    return Err(Error::Capacity {
                        bits: stochastic.len(),
                        limit: MAX_NOISE_BITS,
                    });
                }
                for bits in 0u64..(1u64 << stochastic.len()) {
                    let mut noise = fixed;
                    let mut weight = 1.0;
                    for (k, &(i, p)) in stochastic.iter().enumerate() {
                        if bits >> k & 1 == 1 {
                            noise |= 1 << i;
                            weight *= p;
                        } else {
                            weight *= 1.0 - p;
                        }
                    }
                    f(weight, noise);
                }
            }
            Evaluation::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(Error::input("Monte-Carlo evaluation needs at least one sample"));
                }
                let mut rng = crate::seed::rng(seed);
                let w = 1.0 / samples as f64;
                for _ in 0..samples {
                    let mut noise = fixed;
                    for &(i, p) in &stochastic {
                        if rng.random::<f64>() < p {
                            noise |= 1 << i;
                        }
                    }
                    f(w, noise);
                }
            }
        }
        Ok(())
    }

    fn dist_with_clamp(&self, scm: &BinaryScm, clamp: &Clamp) -> Result<Pmf> {
        let mut masses = BTreeMap::new();
        self.for_each_world(scm, |w, noise| {
            if w > 0.0 {
                *masses.entry(scm.evaluate(noise, clamp)).or_insert(0.0) += w;
            }
        })?;
        Ok(Pmf {
            names: scm.names(),
            masses,
            exact: self.evaluation == Evaluation::Exact,
        })
    }

    pub fn observational(&self, scm: &BinaryScm) -> Result<Pmf> {
        self.dist_with_clamp(scm, &vec![None; scm.len()])
    }

    /// Distribution under the hard intervention `do(var = value, ...)`.
    pub fn interventional(&self, scm: &BinaryScm, do_set: &[(&str, bool)]) -> Result<Pmf> {
        let mut clamp = vec![None; scm.len()];
        for (name, v) in do_set {
            let i = scm.index_of(name)?;
            if clamp[i].is_some() {
                return Err(Error::input(format!("variable {name:?} intervened twice")));
            }
            clamp[i] = Some(*v);
        }
        self.dist_with_clamp(scm, &clamp)
    }

    /// Mixture of hard interventions realizing the event, weighted by the
    /// observational conditional over the event's configurations.
    ///
    /// An event naming a single configuration is a hard intervention and
    /// needs no positivity.
    pub(crate) fn intervention_mixture(
        &self,
        scm: &BinaryScm,
        event: ResolvedEvent,
        base: &Clamp,
    ) -> Result<Vec<(f64, Clamp)>> {
        let vars = event.vars();
        let configs: Vec<u64> = (0u64..(1 << vars.len()))
            .map(|c| {
                vars.iter()
                    .enumerate()
                    .fold(0u64, |acc, (k, &i)| acc | ((c >> k & 1) << i))
            })
            .filter(|&a| event.holds(a))
            .collect();
        let to_clamp = |a: u64| {
            let mut c = base.clone();
            for &i in &vars {
                c[i] = Some(a >> i & 1 == 1);
            }
            c
        };
        if configs.len() == 1 && !event.negated {
            return Ok(vec![(1.0, to_clamp(configs[0]))]);
        }
        let obs = self.observational(scm)?;
        let total = obs.prob_where(|a| event.holds(a));
        if total <= 0.0 {
            return Err(Error::DegenerateEvent(format!(
                "soft intervention on an event with zero observational probability ({} vars)",
                vars.len()
            )));
        }
        Ok(configs
            .into_iter()
            .filter_map(|c| {
                let p = obs.prob_where(|a| a & event.mask == c);
                (p > 0.0).then(|| (p / total, to_clamp(c)))
            })
            .collect())
    }

    fn mixture_dist(&self, scm: &BinaryScm, mixture: &[(f64, Clamp)]) -> Result<Pmf> {
        let mut out = Pmf {
            names: scm.names(),
            masses: BTreeMap::new(),
            exact: self.evaluation == Evaluation::Exact,
        };
        for (w, clamp) in mixture {
            out.mix(&self.dist_with_clamp(scm, clamp)?, *w);
        }
        Ok(out)
    }

    /// Distribution under `do(event)`, soft when the event spans several
    /// configurations.
    pub fn do_event(&self, scm: &BinaryScm, event: &EventSpec) -> Result<Pmf> {
        let r = event.resolve(scm)?;
        let mixture = self.intervention_mixture(scm, r, &vec![None; scm.len()])?;
        self.mixture_dist(scm, &mixture)
    }

    /// Distribution under `do(Z ≠ z)`: hard interventions on each `z' ≠ z`
    /// weighted by `P(Z = z' | Z ≠ z)`.
    pub fn do_not_equal(&self, scm: &BinaryScm, event: &EventSpec) -> Result<Pmf> {
        let r = event.resolve(scm)?.complement();
        let obs = self.observational(scm)?;
        if obs.prob_where(|a| r.holds(a)) <= 0.0 {
            return Err(Error::DegenerateEvent(format!(
                "P(not {event}) is zero, so do(not {event}) is undefined"
            )));
        }
        let mixture = self.intervention_mixture(scm, r, &vec![None; scm.len()])?;
        self.mixture_dist(scm, &mixture)
    }
}

pub fn observational_dist(scm: &BinaryScm) -> Result<Pmf> {
    Engine::exact().observational(scm)
}

pub fn interventional_dist(scm: &BinaryScm, do_set: &[(&str, bool)]) -> Result<Pmf> {
    Engine::exact().interventional(scm, do_set)
}

pub fn do_not_equal_dist(scm: &BinaryScm, event: &EventSpec) -> Result<Pmf> {
    Engine::exact().do_not_equal(scm, event)
}

/// Pairwise Pearson correlation of two variables under a distribution.
pub fn correlation(pmf: &Pmf, a: &str, b: &str) -> Result<f64> {
    let pa = pmf.marginal(a)?;
    let pb = pmf.marginal(b)?;
    let pab = pmf.prob(&[EventSpec::eq(a, true), EventSpec::eq(b, true)])?;
    let denom = (pa * (1.0 - pa) * pb * (1.0 - pb)).sqrt();
    if denom == 0.0 {
        return Err(Error::DegenerateEvent(format!("{a} or {b} is constant")));
    }
    Ok((pab - pa * pb) / denom)
}
