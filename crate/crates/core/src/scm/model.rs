use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boolean mechanism of one variable, applied to its parents before the
/// variable's own noise bit is XOR-ed in.
#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    Xor,
    And,
    Or,
    /// Copies its single parent.
    Id,
    Const(bool),
    /// Row `Σ_k parent_k · 2^k` holds the output.
    TruthTable(Vec<bool>),
}

impl Mechanism {
    fn eval(&self, parents: impl Iterator<Item = bool>) -> bool {
        match self {
            Mechanism::Xor => parents.fold(false, |a, b| a ^ b),
            Mechanism::And => parents.fold(true, |a, b| a & b),
            Mechanism::Or => parents.fold(false, |a, b| a | b),
            Mechanism::Id => parents.fold(false, |_, b| b),
            Mechanism::Const(c) => *c,
            Mechanism::TruthTable(t) => {
                let idx = parents
                    .enumerate()
                    .fold(0usize, |acc, (k, b)| acc | ((b as usize) << k));
                t[idx]
            }
        }
    }
}

/// A binary variable `V = mechanism(parents) XOR Bern(noise_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub parents: Vec<usize>,
    pub mechanism: Mechanism,
    pub noise_p: f64,
}

impl Variable {
    pub fn is_stochastic(&self) -> bool {
        self.noise_p > 0.0 && self.noise_p < 1.0
    }
}

/// A structural causal model over binary variables stored in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryScm {
    variables: Vec<Variable>,
    index: HashMap<String, usize>,
}

/// Largest number of stochastic noise bits enumerated exactly.
pub const MAX_NOISE_BITS: usize = 24;

impl BinaryScm {
    /// Builds and validates a model. Parents must precede their children.
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::input("model has no variables"));
        }
        if variables.len() > 64 {
            return Err(Error::input("at most 64 variables are supported"));
        }
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            if index.insert(v.name.clone(), i).is_some() {
                return Err(Error::input(format!("duplicate variable name {:?}", v.name)));
            }
            if !(0.0..=1.0).contains(&v.noise_p) {
                return Err(Error::input(format!(
                    "{}: noise probability {} outside [0, 1]",
                    v.name, v.noise_p
                )));
            }
            if let Some(&p) = v.parents.iter().find(|&&p| p >= i) {
                return Err(Error::input(format!(
                    "{}: parent index {p} does not precede it (graph must be acyclic and listed in topological order)",
                    v.name
                )));
            }
            let k = v.parents.len();
            let arity_ok = match &v.mechanism {
                Mechanism::Id => k == 1,
                Mechanism::Const(_) => k == 0,
                Mechanism::Xor | Mechanism::And | Mechanism::Or => k >= 1,
                Mechanism::TruthTable(t) => k <= 20 && t.len() == 1 << k,
            };
            if !arity_ok {
                return Err(Error::input(format!(
                    "{}: mechanism {:?} incompatible with {k} parents",
                    v.name, v.mechanism
                )));
            }
        }
        Ok(Self { variables, index })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.variables[i].name
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::input(format!("unknown variable {name:?}")))
    }

    pub fn stochastic_bits(&self) -> usize {
        self.variables.iter().filter(|v| v.is_stochastic()).count()
    }

    /// Evaluates every variable given noise values (bit i = noise of variable i)
    /// and optional clamps. Returns the assignment as a bitmask.
    pub fn evaluate(&self, noise: u64, clamp: &[Option<bool>]) -> u64 {
        let mut values = 0u64;
        for (i, v) in self.variables.iter().enumerate() {
            let bit = match clamp.get(i).copied().flatten() {
                Some(b) => b,
                None => {
                    let parents = v.parents.iter().map(|&p| values >> p & 1 == 1);
                    v.mechanism.eval(parents) ^ (noise >> i & 1 == 1)
                }
            };
            values |= (bit as u64) << i;
        }
        values
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScmFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScmFile::from(self))?)
    }
}

impl BinaryScm {
    /// Random model on `n` variables. Each variable draws up to three earlier
    /// parents. Monotone models use AND/OR/ID mechanisms and put noise only on
    /// roots, so every outcome is non-decreasing in every cause.
    pub fn random(rng: &mut impl rand::Rng, n: usize, monotone: bool) -> Result<Self> {
        use rand::seq::index::sample;
        let mut vars = Vec::with_capacity(n);
        for i in 0..n {
            let k = if i == 0 { 0 } else { rng.random_range(0..=i.min(3)) };
            let mut parents: Vec<usize> = sample(rng, i, k).into_iter().collect();
            parents.sort_unstable();
            let name = format!("V{i}");
            let v = if parents.is_empty() {
                Variable::root(&name, rng.random_range(0.05..0.95))
            } else if monotone {
                let mech = match (parents.len(), rng.random_range(0..2)) {
                    (1, _) => Mechanism::Id,
                    (_, 0) => Mechanism::And,
                    _ => Mechanism::Or,
                };
                Variable::child(&name, &parents, mech, 0.0)
            } else {
                let noise = if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(0.05..0.95)
                };
                let table = (0..1usize << parents.len()).map(|_| rng.random_bool(0.5)).collect();
                Variable::child(&name, &parents, Mechanism::TruthTable(table), noise)
            };
            vars.push(v);
        }
        Self::new(vars)
    }
}

/// Builder-style constructors used by examples and tests.
impl Variable {
    pub fn root(name: &str, p: f64) -> Self {
        Self {
            name: name.into(),
            parents: vec![],
            mechanism: Mechanism::Const(false),
            noise_p: p,
        }
    }

    pub fn child(name: &str, parents: &[usize], mechanism: Mechanism, noise_p: f64) -> Self {
        Self {
            name: name.into(),
            parents: parents.to_vec(),
            mechanism,
            noise_p,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScmFile {
    variables: Vec<VariableSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VariableSpec {
    name: String,
    #[serde(default)]
    parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_table: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expr: Option<String>,
    /// Output of a `const` mechanism; defaults to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<u8>,
    #[serde(default)]
    noise_p: f64,
}

impl TryFrom<ScmFile> for BinaryScm {
    type Error = Error;

    fn try_from(file: ScmFile) -> Result<Self> {
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut variables = Vec::with_capacity(file.variables.len());
        for (i, spec) in file.variables.into_iter().enumerate() {
            let parents = spec
                .parents
                .iter()
                .map(|p| {
                    seen.get(p).copied().ok_or_else(|| {
                        Error::input(format!(
                            "{}: parent {p:?} is undefined or listed later (variables must be in topological order)",
                            spec.name
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mechanism = match (&spec.truth_table, spec.expr.as_deref()) {
                (Some(t), None) => {
                    if t.iter().any(|&b| b > 1) {
                        return Err(Error::input(format!(
                            "{}: truth table entries must be 0 or 1",
                            spec.name
                        )));
                    }
                    Mechanism::TruthTable(t.iter().map(|&b| b == 1).collect())
                }
                (None, Some("xor")) => Mechanism::Xor,
                (None, Some("and")) => Mechanism::And,
                (None, Some("or")) => Mechanism::Or,
                (None, Some("id")) => Mechanism::Id,
                (None, Some("const")) => Mechanism::Const(spec.value.unwrap_or(0) == 1),
                (None, None) if parents.is_empty() => Mechanism::Const(spec.value.unwrap_or(0) == 1),
                (None, Some(other)) => return Err(Error::input(format!("{}: unknown expr {other:?}", spec.name))),
                _ => {
                    return Err(Error::input(format!(
                        "{}: give exactly one of truth_table or expr",
                        spec.name
                    )))
                }
            };
            seen.insert(spec.name.clone(), i);
            variables.push(Variable {
                name: spec.name,
                parents,
                mechanism,
                noise_p: spec.noise_p,
            });
        }
        BinaryScm::new(variables)
    }
}

impl From<&BinaryScm> for ScmFile {
    fn from(scm: &BinaryScm) -> Self {
        let variables = scm
            .variables
            .iter()
            .map(|v| {
                let (expr, truth_table, value) = match &v.mechanism {
                    Mechanism::Xor => (Some("xor"), None, None),
                    Mechanism::And => (Some("and"), None, None),
                    Mechanism::Or => (Some("or"), None, None),
                    Mechanism::Id => (Some("id"), None, None),
                    Mechanism::Const(c) => (Some("const"), None, Some(*c as u8)),
                    Mechanism::TruthTable(t) => (None, Some(t.iter().map(|&b| b as u8).collect()), None),
                };
                VariableSpec {
                    name: v.name.clone(),
                    parents: v.parents.iter().map(|&p| scm.variables[p].name.clone()).collect(),
                    truth_table,
                    expr: expr.map(str::to_owned),
                    value,
                    noise_p: v.noise_p,
                }
            })
            .collect();
        ScmFile { variables }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_expr_and_truth_table() {
        let scm = BinaryScm::from_json(
            r#"{"variables":[
                {"name":"Z","noise_p":0.4},
                {"name":"W","parents":["Z"],"expr":"id","noise_p":0.1},
                {"name":"Y","parents":["Z","W"],"truth_table":[0,0,0,1],"noise_p":0.0}
            ]}"#,
        )
        .unwrap();
        assert_eq!(scm.len(), 3);
        assert_eq!(scm.stochastic_bits(), 2);
        // Z=1, W=1 with no noise: Y = 1
        assert_eq!(scm.evaluate(0b001, &[]), 0b111);
        let again = BinaryScm::from_json(&scm.to_json().unwrap()).unwrap();
        assert_eq!(again, scm);
    }

    #[test]
    fn rejects_cycles_and_bad_arity() {
        let cyclic = r#"{"variables":[
            {"name":"A","parents":["B"],"expr":"id"},
            {"name":"B","parents":["A"],"expr":"id"}]}"#;
        assert!(matches!(BinaryScm::from_json(cyclic), Err(Error::Input(_))));
        let arity = r#"{"variables":[{"name":"A"},{"name":"B","parents":["A"],"truth_table":[0,1,1]}]}"#;
        assert!(BinaryScm::from_json(arity).is_err());
        let noise = r#"{"variables":[{"name":"A","noise_p":1.5}]}"#;
        assert!(BinaryScm::from_json(noise).is_err());
    }
}
