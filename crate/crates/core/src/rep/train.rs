use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::function::{RepClass, RepFunction};
use super::objective::{Objective, PenaltyWeights};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::pinpoint::{self, FitMethod, PinpointReport, PpcaFit, DEFAULT_PINPOINT_THRESHOLD};
use crate::serial::MatrixEncoding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Latent dimension K of the PPCA model for the common cause.
    pub latent_dim: usize,
    /// Representation dimension d.
    pub rep_dim: usize,
    pub class: RepClass,
    /// Stop a restart once the objective changes by less than
    /// `tolerance·(1 + |objective|)` for 20 consecutive iterations.
    pub tolerance: f64,
    /// Standard deviation of the initial logits.
    pub init_scale: f64,
    /// Selection only: temperature is annealed geometrically from 1 to this.
    pub final_temperature: f64,
    pub pinpoint_threshold: f64,
    pub fit_method: FitMethod,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1e-3,
            learning_rate: 0.05,
            iterations: 500,
            restarts: 5,
            seed: 0,
            latent_dim: 1,
            rep_dim: 2,
            class: RepClass::ConvexCombination,
            tolerance: 1e-10,
            init_scale: 1.0,
            final_temperature: 0.05,
            pinpoint_threshold: DEFAULT_PINPOINT_THRESHOLD,
            fit_method: FitMethod::Closed,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::input("lambda and alpha must be non-negative"));
        }
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::input("iteration budget and restart count must be at least 1"));
        }
        if self.rep_dim == 0 {
            return Err(Error::input("representation dimension must be at least 1"));
        }
        if self.class == RepClass::Linear {
            return Err(Error::input(
                "the linear class is for evaluation only and cannot be trained",
            ));
        }
        if !(self.learning_rate > 0.0 && self.final_temperature > 0.0 && self.init_scale >= 0.0) {
            return Err(Error::input(
                "learning rate, temperature and init scale must be positive",
            ));
        }
        Ok(())
    }

    fn weights(&self) -> PenaltyWeights {
        PenaltyWeights {
            lambda: self.lambda,
            alpha: self.alpha,
        }
    }
}

/// Objective value after every iteration of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub restart: usize,
    pub objective: Vec<f64>,
    /// Objective of the exported representation (hardened for selection).
    pub final_objective: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rep: RepFunction,
    pub objective: f64,
    pub best_restart: usize,
    pub traces: Vec<TrainingTrace>,
    pub pinpoint: PinpointReport,
    pub ppca: PpcaFit,
    pub c_hats: DMatrix<f64>,
}

/// Fits PPCA, requires pinpointability and returns the posterior means.
pub(crate) fn pinpoint_factors(x: &DataMatrix, cfg: &TrainConfig) -> Result<(PpcaFit, PinpointReport, DMatrix<f64>)> {
    let ppca = pinpoint::fit_ppca_with(x, cfg.latent_dim, cfg.fit_method)?;
    let report = pinpoint::pinpointability_check(&ppca, cfg.pinpoint_threshold).require()?;
    let c_hats = pinpoint::posterior_means(&ppca, x.values())?;
    Ok((ppca, report, c_hats))
}

/// Supervised training on one real outcome.
pub fn train(x: &DataMatrix, y: &DVector<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if y.len() != x.nrows() {
        return Err(Error::input("label count differs from observation count"));
    }
    train_outcomes(x, vec![y.clone()], cfg, None)
}

/// Supervised training from a given starting representation, single restart.
pub fn train_from(x: &DataMatrix, y: &DVector<f64>, cfg: &TrainConfig, init: &RepFunction) -> Result<TrainOutcome> {
    train_outcomes(x, vec![y.clone()], cfg, Some(init))
}

pub(crate) fn train_outcomes(
    x: &DataMatrix,
    outcomes: Vec<DVector<f64>>,
    cfg: &TrainConfig,
    init: Option<&RepFunction>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (ppca, pinpoint, c_hats) = pinpoint_factors(x, cfg)?;
    let objective = Objective::new(x.values(), outcomes, &c_hats, cfg.weights())?;
    let m = x.ncols();
    let restarts = if init.is_some() { 1 } else { cfg.restarts };
    let runs: Vec<Result<(RepFunction, TrainingTrace)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = match init {
                Some(f) => f.clone(),
                None => random_init(m, cfg, crate::seed::derive(cfg.seed, r as u64)),
            };
            run_restart(&objective, start, cfg, r)
        })
        .collect();
    let mut best: Option<(RepFunction, usize)> = None;
    let mut best_value = f64::NEG_INFINITY;
    let mut traces = Vec::with_capacity(restarts);
    for (r, run) in runs.into_iter().enumerate() {
        let (rep, trace) = run?;
        // Strict comparison keeps the lowest restart index on ties.
        if trace.final_objective > best_value {
            best_value = trace.final_objective;
            best = Some((rep, r));
        }
        traces.push(trace);
    }
    let (rep, best_restart) = best.ok_or_else(|| {
        Error::numerical("every restart failed to reach a finite objective (representation columns collinear)")
    })?;
    Ok(TrainOutcome {
        rep,
        objective: best_value,
        best_restart,
        traces,
        pinpoint,
        ppca,
        c_hats,
    })
}

fn random_init(m: usize, cfg: &TrainConfig, seed: u64) -> RepFunction {
    let mut rng = crate::seed::rng(seed);
    let logits = DMatrix::from_fn(m, cfg.rep_dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * cfg.init_scale
    });
    match cfg.class {
        RepClass::Selection => RepFunction::selection(logits, 1.0),
        _ => RepFunction::convex(logits),
    }
}

fn numerical_with_dump(msg: &str, f: &RepFunction) -> Error {
    Error::Numerical {
        message: msg.to_owned(),
        dump: f.to_json(MatrixEncoding::Plain).ok(),
    }
}

/// Evaluates, mapping collinear candidates to `-inf` so the line search
/// simply rejects them.
fn try_value(obj: &Objective, f: &RepFunction) -> Result<f64> {
    match obj.value(f) {
        Ok(v) if v.is_nan() => Err(numerical_with_dump("objective is NaN", f)),
        Ok(v) => Ok(v),
        Err(Error::Collinearity { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Coordinate swaps on a hardened selection: each output in turn moves to the
/// unused input column that most increases the objective, until no swap helps.
fn polish_selection(obj: &Objective, hard: &RepFunction) -> Result<(RepFunction, f64)> {
    let m = hard.input_dim();
    let mut cols = hard.selected_columns().unwrap_or_default();
    let mut best = RepFunction::select_columns(m, &cols)?;
    let mut value = try_value(obj, &best)?;
    loop {
        let mut improved = false;
        for j in 0..cols.len() {
            for c in 0..m {
                if cols.contains(&c) {
                    continue;
                }
                let mut trial = cols.clone();
                trial[j] = c;
                let cand = RepFunction::select_columns(m, &trial)?;
                let v = try_value(obj, &cand)?;
                if v > value {
                    value = v;
                    cols = trial;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            return Ok((best, value));
        }
    }
}

/// Adam-directed ascent with step halving: a step is taken only when it does
/// not lower the objective, so each stage's trace is non-decreasing.
fn run_restart(
    obj: &Objective,
    start: RepFunction,
    cfg: &TrainConfig,
    restart: usize,
) -> Result<(RepFunction, TrainingTrace)> {
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut f = start;
    let (mm, dd) = f.params.shape();
    let mut m1 = DMatrix::zeros(mm, dd);
    let mut m2 = DMatrix::zeros(mm, dd);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let anneal = f.class == RepClass::Selection && !f.hardened;
    let temperature_at = |t: usize| {
        if cfg.iterations <= 1 {
            cfg.final_temperature
        } else {
            cfg.final_temperature.powf(t as f64 / (cfg.iterations - 1) as f64)
        }
    };
    if anneal {
        f.temperature = temperature_at(0);
    }
    let mut current = try_value(obj, &f)?;
    if current == f64::NEG_INFINITY {
        // Collinear start: report the failure for this restart only.
        return Ok((
            f,
            TrainingTrace {
                restart,
                objective: vec![],
                final_objective: f64::NEG_INFINITY,
            },
        ));
    }
    let mut quiet = 0;
    for t in 0..cfg.iterations {
        if anneal {
            f.temperature = temperature_at(t);
            current = try_value(obj, &f)?;
        }
        let (_, grad) = match obj.value_and_gradient(&f) {
            Ok(vg) => vg,
            Err(Error::Collinearity { .. }) => break,
            Err(e) => return Err(e),
        };
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(numerical_with_dump("non-finite gradient", &f));
        }
        m1 = &m1 * b1 + &grad * (1.0 - b1);
        m2 = &m2 * b2 + grad.map(|g| g * g) * (1.0 - b2);
        let c1 = 1.0 - b1.powi(t as i32 + 1);
        let c2 = 1.0 - b2.powi(t as i32 + 1);
        let step = m1.zip_map(&m2, |a, v| cfg.learning_rate * (a / c1) / ((v / c2).sqrt() + eps));
        let before = current;
        let mut scale = 1.0;
        for _ in 0..12 {
            let mut cand = f.clone();
            cand.params += &step * scale;
            let v = try_value(obj, &cand)?;
            if v >= current {
                f = cand;
                current = v;
                break;
            }
            scale *= 0.5;
        }
        trace.push(current);
        if (current - before).abs() <= cfg.tolerance * (1.0 + current.abs()) {
            quiet += 1;
            if quiet >= 20 && !anneal {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let (exported, final_objective) = if f.class == RepClass::Selection {
        polish_selection(obj, &f.harden())?
    } else {
        let v = try_value(obj, &f)?;
        (f, v)
    };
    Ok((
        exported,
        TrainingTrace {
            restart,
            objective: trace,
            final_objective,
        },
    ))
}
