use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serial::{MatrixEncoding, MatrixJson};

/// Family of linear representations `f(X) = X·W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepClass {
    /// Each column of W is a softmax over the m features.
    ConvexCombination,
    /// Softmax columns at a temperature that is annealed during training and
    /// replaced by one-hot argmax columns once hardened.
    Selection,
    /// A fixed, arbitrary weight matrix; used for evaluating given
    /// representations, not trained.
    Linear,
}

/// Parameterized representation with d output dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct RepFunction {
    pub class: RepClass,
    /// m×d unconstrained parameters; the weights themselves for `Linear`.
    pub params: DMatrix<f64>,
    pub temperature: f64,
    pub hardened: bool,
}

pub(crate) fn softmax_columns(logits: &DMatrix<f64>, temperature: f64) -> DMatrix<f64> {
    let mut w = logits / temperature;
    for mut col in w.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let s = col.sum();
        col /= s;
    }
    w
}

impl RepFunction {
    pub fn convex(logits: DMatrix<f64>) -> Self {
        Self {
            class: RepClass::ConvexCombination,
            params: logits,
            temperature: 1.0,
            hardened: false,
        }
    }

    pub fn selection(logits: DMatrix<f64>, temperature: f64) -> Self {
        Self {
            class: RepClass::Selection,
            params: logits,
            temperature,
            hardened: false,
        }
    }

    pub fn linear(weights: DMatrix<f64>) -> Self {
        Self {
            class: RepClass::Linear,
            params: weights,
            temperature: 1.0,
            hardened: false,
        }
    }

    /// Selection of the given input columns, one per output dimension.
    pub fn select_columns(m: usize, columns: &[usize]) -> Result<Self> {
        if columns.iter().any(|&c| c >= m) {
            return Err(Error::input("selected column out of range"));
        }
        let mut sorted = columns.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != columns.len() {
            return Err(Error::input("selected columns must be distinct"));
        }
        let mut logits = DMatrix::zeros(m, columns.len());
        for (j, &c) in columns.iter().enumerate() {
            logits[(c, j)] = 1.0;
        }
        Ok(Self {
            class: RepClass::Selection,
            params: logits,
            temperature: 1.0,
            hardened: true,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.params.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.params.ncols()
    }

    /// The effective m×d weight matrix.
    pub fn weights(&self) -> DMatrix<f64> {
        match self.class {
            RepClass::Linear => self.params.clone(),
            RepClass::ConvexCombination => softmax_columns(&self.params, self.temperature),
            RepClass::Selection if self.hardened => self.argmax_weights(),
            RepClass::Selection => softmax_columns(&self.params, self.temperature),
        }
    }

    /// One-hot weights with distinct columns when `d ≤ m`: the largest
    /// remaining logit over unused inputs and unassigned outputs is taken
    /// first. Lowest indices win ties.
    fn argmax_weights(&self) -> DMatrix<f64> {
        let (m, d) = self.params.shape();
        let mut w = DMatrix::zeros(m, d);
        let mut used = vec![false; m];
        let mut assigned = vec![false; d];
        for _ in 0..d {
            let mut best: Option<(usize, usize)> = None;
            for j in (0..d).filter(|&j| !assigned[j]) {
                for i in (0..m).filter(|&i| !used[i] || d > m) {
                    if best.is_none_or(|(bi, bj)| self.params[(i, j)] > self.params[(bi, bj)]) {
                        best = Some((i, j));
                    }
                }
            }
            let (i, j) = best.expect("an unassigned output remains");
            w[(i, j)] = 1.0;
            used[i] = true;
            assigned[j] = true;
        }
        w
    }

    /// Freezes a selection representation to one-hot columns.
    pub fn harden(&self) -> Self {
        let mut out = self.clone();
        if out.class == RepClass::Selection {
            out.hardened = true;
        }
        out
    }

    /// Indices of the selected columns of a hardened selection.
    pub fn selected_columns(&self) -> Option<Vec<usize>> {
        (self.class == RepClass::Selection && self.hardened).then(|| {
            let w = self.argmax_weights();
            (0..w.ncols()).map(|j| w.column(j).iamax()).collect()
        })
    }

    pub fn to_json(&self, encoding: MatrixEncoding) -> Result<String> {
        let f = RepFile {
            class: self.class,
            temperature: self.temperature,
            hardened: self.hardened,
            params: MatrixJson::encode(&self.params, encoding),
            weights: MatrixJson::encode(&self.weights(), encoding),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: RepFile = serde_json::from_str(text)?;
        let params = f.params.decode()?;
        if !(f.temperature > 0.0) {
            return Err(Error::Format("temperature must be positive".into()));
        }
        Ok(Self {
            class: f.class,
            params,
            temperature: f.temperature,
            hardened: f.hardened,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RepFile {
    class: RepClass,
    temperature: f64,
    hardened: bool,
    params: MatrixJson,
    /// Effective weights, written for readers; ignored on load.
    weights: MatrixJson,
}

/// Evaluates `X·W` on every row.
pub fn apply(f: &RepFunction, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != f.input_dim() {
        return Err(Error::input(format!(
            "representation expects {} columns, data has {}",
            f.input_dim(),
            x.ncols()
        )));
    }
    Ok(x * f.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn convex_weights_are_simplex_columns(vals in proptest::collection::vec(-30.0f64..30.0, 12)) {
            let f = RepFunction::convex(DMatrix::from_vec(4, 3, vals));
            let w = f.weights();
            for col in w.column_iter() {
                prop_assert!(col.iter().all(|&v| v >= 0.0));
                prop_assert!((col.sum() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn hardened_selection_is_one_hot(vals in proptest::collection::vec(-3.0f64..3.0, 10)) {
            let f = RepFunction::selection(DMatrix::from_vec(5, 2, vals), 0.3).harden();
            let w = f.weights();
            for col in w.column_iter() {
                prop_assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), 4);
            }
        }
    }

    #[test]
    fn apply_checks_shape_and_round_trips() {
        let f = RepFunction::select_columns(3, &[2, 0]).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            apply(&f, &x).unwrap(),
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 6.0, 4.0])
        );
        assert_eq!(f.selected_columns(), Some(vec![2, 0]));
        assert!(apply(&f, &DMatrix::zeros(2, 4)).is_err());
        let back = RepFunction::from_json(&f.to_json(MatrixEncoding::Plain).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
