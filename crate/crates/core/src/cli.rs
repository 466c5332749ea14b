//! Command-line front end. Every command that writes files also writes a
//! run manifest next to its first output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{self, DataMatrix};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentResult, IossSuiteConfig, OodConfig};
use crate::ioss::{self, DistinguishConfig, FactorSample, IossTrainConfig, KDraws};
use crate::manifest::{sha256_file, RunManifest};
use crate::pinpoint::{self, FitMethod, PpcaFit};
use crate::pnsbound::{self, PnsConfig};
use crate::rep::{self, Predictor, RepClass, RepFunction, TrainConfig};
use crate::scm::{self, BinaryScm, EventSpec};
use crate::serial::MatrixEncoding;
use crate::synth::{self, FactorGrid, GenOutput, GenSpec, Generator};

/// Exit status when a command ran but an embedded check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "causalrep",
    version,
    about = "Probabilities of causation, causal representation learning and IOSS"
)]
pub struct Cli {
    /// Manifest path; defaults to `<first output>.manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Do not write a run manifest.
    #[arg(long, global = true)]
    pub no_manifest: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset or model.
    Synth(SynthArgs),
    /// Probabilistic PCA for the common cause.
    #[command(subcommand)]
    Ppca(PpcaCommand),
    /// PNS lower bounds.
    #[command(subcommand)]
    Pns(PnsCommand),
    /// Train a representation.
    Train(TrainArgs),
    /// Predict with a trained representation and head.
    Predict(PredictArgs),
    /// Independence-of-support score.
    #[command(subcommand)]
    Ioss(IossCommand),
    /// Run an experiment and write its tables.
    Experiment(ExperimentArgs),
    /// Merge experiment results and check their assertions.
    Report(ReportArgs),
    /// Re-run a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthName {
    BinaryPoc,
    ToyLinear,
    PixelLinear,
    CorrelatedFactors,
    FactorMixture,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    pub name: SynthName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: String,
    /// Generator metadata as JSON.
    #[arg(long)]
    pub meta: Option<String>,
    /// Test split (toy-linear) or factor file (factor-mixture).
    #[arg(long)]
    pub aux_out: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    #[arg(long, default_value_t = 0.8)]
    pub corr: f64,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise_sd: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodingArg {
    Plain,
    Base64,
}

impl From<EncodingArg> for MatrixEncoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Plain => MatrixEncoding::Plain,
            EncodingArg::Base64 => MatrixEncoding::Base64,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Closed,
    Em,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Closed => FitMethod::Closed,
            MethodArg::Em => FitMethod::Em,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum PpcaCommand {
    /// Fit a PPCA model.
    Fit {
        #[arg(long)]
        data: String,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Closed)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = EncodingArg::Plain)]
        encoding: EncodingArg,
        #[arg(long)]
        out: String,
    },
    /// Check pinpointability of a fitted model.
    Check {
        #[arg(long)]
        fit: String,
        #[arg(long, default_value_t = pinpoint::DEFAULT_PINPOINT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum PnsCommand {
    /// Observational PNS lower bounds of a representation.
    Measure {
        #[arg(long)]
        data: String,
        /// Label file; defaults to the `y` column of the data file.
        #[arg(long)]
        labels: Option<String>,
        #[arg(long)]
        rep: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: String,
    },
    /// Exact probabilities of causation on a binary SCM file.
    Poc {
        #[arg(long)]
        scm: String,
        /// Cause event such as `Z1=1`.
        #[arg(long)]
        cause: String,
        #[arg(long)]
        outcome: String,
        /// Events held fixed in both worlds, repeatable.
        #[arg(long)]
        given: Vec<String>,
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassArg {
    Convex,
    Select,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long, value_enum)]
    pub class: Option<ClassArg>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON training configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long, value_enum, default_value_t = EncodingArg::Plain)]
    pub encoding: EncodingArg,
    #[arg(long)]
    pub out: String,
    /// Prediction head; defaults to `<out stem>.predictor.json`.
    #[arg(long)]
    pub predictor_out: Option<String>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub rep: String,
    #[arg(long)]
    pub predictor: String,
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub out: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntanglerArg {
    Polynomial,
    Preset,
    Identity,
}

#[derive(Subcommand, Debug)]
pub enum IossCommand {
    /// Score a factor file.
    Score {
        #[arg(long)]
        data: String,
        /// `auto` or a positive count.
        #[arg(long, default_value = "auto")]
        k_draws: String,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the exact score over the product of observed supports.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Train an IOSS-regularized linear autoencoder.
    Train {
        #[arg(long)]
        data: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<String>,
        #[arg(long, value_enum, default_value_t = EncodingArg::Plain)]
        encoding: EncodingArg,
        #[arg(long)]
        out: String,
        /// Learned codes as CSV with columns f1..fd.
        #[arg(long)]
        codes_out: Option<String>,
    },
    /// Proportion of trials where an entangled copy scores higher.
    Distinguish {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "auto")]
        k_draws: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 0.8)]
        corr: f64,
        #[arg(long, value_enum, default_value_t = EntanglerArg::Polynomial)]
        entangler: EntanglerArg,
        #[arg(long)]
        out: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentName {
    PocSweep,
    OodLinear,
    IossSuite,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    pub name: ExperimentName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<String>,
    /// Seed count of ood-linear or of the ioss-suite regularization sweep.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Result JSON; every table is also written as `<stem>.<table>.csv`.
    #[arg(long)]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    pub results: Vec<String>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long = "from")]
    pub from: String,
    /// Directory for the replayed outputs; defaults to `<manifest>.replay`.
    #[arg(long)]
    pub out_dir: Option<String>,
}

/// What a command read and wrote.
#[derive(Debug, Default)]
struct Ran {
    inputs: Vec<String>,
    outputs: Vec<String>,
    config: serde_json::Value,
    seeds: Vec<u64>,
    status: i32,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&str>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("config {p}: {e}")))
        }
    }
}

fn write_json<T: Serialize>(path: &str, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn emit<T: Serialize>(out: Option<&str>, value: &T) -> Result<Vec<String>> {
    match out {
        Some(p) => {
            write_json(p, value)?;
            Ok(vec![p.to_owned()])
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(Vec::new())
        }
    }
}

fn parse_draws(s: &str) -> Result<KDraws> {
    if s == "auto" {
        return Ok(KDraws::Auto);
    }
    s.parse::<usize>()
        .ok()
        .filter(|&k| k > 0)
        .map(KDraws::Fixed)
        .ok_or_else(|| Error::Input(format!("k-draws must be `auto` or a positive integer, got {s}")))
}

fn sibling(path: &str, suffix: &str) -> String {
    let p = Path::new(path);
    let stem = p
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    p.with_file_name(format!("{stem}.{suffix}")).display().to_string()
}

fn labeled(data: &str, labels: Option<&str>) -> Result<(DataMatrix, DVector<f64>, Vec<String>)> {
    let (x, y) = data::read_observations(data)?;
    let mut inputs = vec![data.to_owned()];
    let y = match (labels, y) {
        (Some(l), _) => {
            inputs.push(l.to_owned());
            data::read_labels(l)?
        }
        (None, Some(y)) => y,
        (None, None) => return Err(Error::input("no labels: pass --labels or include a `y` column")),
    };
    Ok((x, y, inputs))
}

fn synth_cmd(a: &SynthArgs) -> Result<Ran> {
    let generator = match a.name {
        SynthName::BinaryPoc => Generator::BinaryPoc { p: a.p },
        SynthName::ToyLinear => Generator::ToyLinear {
            n_train: a.n_train,
            n_test: a.n_test,
        },
        SynthName::PixelLinear => Generator::PixelLinear { n: a.n.unwrap_or(1000) },
        SynthName::CorrelatedFactors => Generator::CorrelatedFactors {
            d: a.d,
            levels: a.levels,
            target_corr: a.corr,
            n: a.n.unwrap_or(500),
        },
        SynthName::FactorMixture => Generator::FactorMixture {
            d: a.d,
            levels: a.levels,
            target_corr: a.corr,
            n: a.n.unwrap_or(2000),
            m: a.m,
            noise_sd: a.noise_sd,
        },
    };
    let spec = GenSpec {
        generator,
        seed: a.seed,
    };
    let mut outputs = vec![a.out.clone()];
    let meta = match spec.run()? {
        GenOutput::Scm(m) => {
            std::fs::write(&a.out, m.to_json()? + "\n")?;
            None
        }
        GenOutput::Labeled { train, test, meta } => {
            data::write_observations(&a.out, train.x.values(), Some(&train.y))?;
            if let Some(t) = test {
                let p = a.aux_out.clone().unwrap_or_else(|| sibling(&a.out, "test.csv"));
                data::write_observations(&p, t.x.values(), Some(&t.y))?;
                outputs.push(p);
            }
            Some(meta)
        }
        GenOutput::Factors { sample, meta } => {
            data::write_csv(&a.out, &data::numbered_headers("f", sample.d()), sample.values())?;
            Some(meta)
        }
        GenOutput::Observations { x, factors, meta } => {
            data::write_observations(&a.out, x.values(), None)?;
            let p = a.aux_out.clone().unwrap_or_else(|| sibling(&a.out, "factors.csv"));
            data::write_csv(&p, &data::numbered_headers("f", factors.d()), factors.values())?;
            outputs.push(p);
            Some(meta)
        }
    };
    if let (Some(p), Some(m)) = (&a.meta, meta) {
        write_json(p, &m)?;
        outputs.push(p.clone());
    }
    Ok(Ran {
        outputs,
        config: serde_json::to_value(&spec)?,
        seeds: vec![a.seed],
        ..Default::default()
    })
}

fn ppca_cmd(c: &PpcaCommand) -> Result<Ran> {
    match c {
        PpcaCommand::Fit {
            data: path,
            k,
            method,
            encoding,
            out,
        } => {
            let (x, _) = data::read_observations(path)?;
            let fit = pinpoint::fit_ppca_with(&x, *k, (*method).into())?;
            std::fs::write(out, fit.to_json((*encoding).into())? + "\n")?;
            let report = pinpoint::pinpointability_check(&fit, pinpoint::DEFAULT_PINPOINT_THRESHOLD);
            eprintln!(
                "noise variance {:.6e}, max posterior variance {:.6e}",
                fit.noise_variance, report.max_posterior_variance
            );
            Ok(Ran {
                inputs: vec![path.clone()],
                outputs: vec![out.clone()],
                config: serde_json::json!({ "k": k, "method": FitMethod::from(*method) }),
                ..Default::default()
            })
        }
        PpcaCommand::Check { fit, threshold, out } => {
            let model = PpcaFit::from_json(&std::fs::read_to_string(fit)?)?;
            let report = pinpoint::pinpointability_check(&model, *threshold);
            let outputs = emit(out.as_deref(), &report)?;
            Ok(Ran {
                inputs: vec![fit.clone()],
                outputs,
                config: serde_json::json!({ "threshold": threshold }),
                status: if report.passed { 0 } else { EXIT_CHECK_FAILED },
                ..Default::default()
            })
        }
    }
}

fn pns_cmd(c: &PnsCommand) -> Result<Ran> {
    match c {
        PnsCommand::Measure {
            data: path,
            labels,
            rep: rep_path,
            k,
            config,
            threshold,
            out,
        } => {
            let mut cfg: PnsConfig = load_config(config.as_deref())?;
            if let Some(t) = threshold {
                cfg.pinpoint_threshold = *t;
            }
            let (x, y, mut inputs) = labeled(path, labels.as_deref())?;
            let f = RepFunction::from_json(&std::fs::read_to_string(rep_path)?)?;
            inputs.push(rep_path.clone());
            inputs.extend(config.iter().cloned());
            let report = pnsbound::measure_pns(&x, &y, &f, *k, &cfg)?;
            write_json(out, &report)?;
            let passed = report.gates.pinpointability.passed;
            Ok(Ran {
                inputs,
                outputs: vec![out.clone()],
                config: serde_json::json!({ "k": k, "pns": cfg }),
                status: if passed { 0 } else { EXIT_CHECK_FAILED },
                ..Default::default()
            })
        }
        PnsCommand::Poc {
            scm: path,
            cause,
            outcome,
            given,
            out,
        } => {
            let model = BinaryScm::from_json(&std::fs::read_to_string(path)?)?;
            let cause_ev = EventSpec::parse(cause)?;
            let outcome_ev = EventSpec::parse(outcome)?;
            let raw = scm::pns_lower_bound(&model, &cause_ev, &outcome_ev)?;
            let poc = scm::true_poc(&model, &cause_ev, &outcome_ev)?;
            let held: Vec<EventSpec> = given.iter().map(|g| EventSpec::parse(g)).collect::<Result<_>>()?;
            let conditional = if held.is_empty() {
                None
            } else {
                Some(scm::conditional_pns_oracle(&model, &cause_ev, &held, &outcome_ev)?)
            };
            let value = serde_json::json!({
                "cause": cause,
                "outcome": outcome,
                "given": given,
                "lower_bound": raw.clamp(0.0, 1.0),
                "lower_bound_raw": raw,
                "pn": poc.pn,
                "ps": poc.ps,
                "pns": poc.pns,
                "conditional_pns": conditional,
            });
            let outputs = emit(out.as_deref(), &value)?;
            Ok(Ran {
                inputs: vec![path.clone()],
                outputs,
                config: serde_json::json!({ "cause": cause, "outcome": outcome, "given": given }),
                ..Default::default()
            })
        }
    }
}

fn train_cmd(a: &TrainArgs) -> Result<Ran> {
    let mut cfg: TrainConfig = load_config(a.config.as_deref())?;
    if let Some(c) = a.class {
        cfg.class = match c {
            ClassArg::Convex => RepClass::ConvexCombination,
            ClassArg::Select => RepClass::Selection,
        };
    }
    macro_rules! flag {
        ($($f:ident => $field:ident),*) => { $( if let Some(v) = a.$f { cfg.$field = v; } )* };
    }
    flag!(d => rep_dim, k => latent_dim, lambda => lambda, alpha => alpha, iterations => iterations, restarts => restarts, seed => seed);
    let (x, y, mut inputs) = labeled(&a.data, a.labels.as_deref())?;
    inputs.extend(a.config.iter().cloned());
    let out = rep::train(&x, &y, &cfg)?;
    std::fs::write(&a.out, out.rep.to_json(a.encoding.into())? + "\n")?;
    let head = rep::fit_predictor(&out.rep, &x, &y)?;
    let pred_path = a
        .predictor_out
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "predictor.json"));
    write_json(&pred_path, &head)?;
    eprintln!("objective {:.6} (restart {})", out.objective, out.best_restart);
    if let Some(cols) = out.rep.selected_columns() {
        eprintln!("selected columns {cols:?}");
    }
    Ok(Ran {
        inputs,
        outputs: vec![a.out.clone(), pred_path],
        config: serde_json::to_value(cfg)?,
        seeds: vec![cfg.seed],
        ..Default::default()
    })
}

fn predict_cmd(a: &PredictArgs) -> Result<Ran> {
    let f = RepFunction::from_json(&std::fs::read_to_string(&a.rep)?)?;
    let head: Predictor = serde_json::from_str(&std::fs::read_to_string(&a.predictor)?)
        .map_err(|e| Error::Format(format!("predictor {}: {e}", a.predictor)))?;
    let (x, _) = data::read_observations(&a.data)?;
    let yhat = rep::predict(&head, &f, &x)?;
    data::write_csv(
        &a.out,
        &["yhat".to_owned()],
        &DMatrix::from_column_slice(yhat.len(), 1, yhat.as_slice()),
    )?;
    Ok(Ran {
        inputs: vec![a.rep.clone(), a.predictor.clone(), a.data.clone()],
        outputs: vec![a.out.clone()],
        ..Default::default()
    })
}

fn ioss_cmd(c: &IossCommand) -> Result<Ran> {
    match c {
        IossCommand::Score {
            data: path,
            k_draws,
            alpha,
            seed,
            exact,
            out,
        } => {
            let (_, values) = data::read_csv(path)?;
            let z = if *exact {
                FactorSample::discrete(values)?
            } else {
                FactorSample::continuous(values)?
            };
            let (k, capped) = parse_draws(k_draws)?.resolve(z.n(), z.d());
            if capped {
                eprintln!("warning: draw count capped at {k}");
            }
            let est = ioss::sample_ioss(&z, k, *alpha, *seed)?;
            let exact_value = if *exact { Some(ioss::discrete_ioss(&z)?) } else { None };
            let value = serde_json::json!({ "sample": est, "exact": exact_value });
            let outputs = emit(out.as_deref(), &value)?;
            Ok(Ran {
                inputs: vec![path.clone()],
                outputs,
                config: serde_json::json!({ "k_draws": k, "alpha": alpha, "exact": exact }),
                seeds: vec![*seed],
                ..Default::default()
            })
        }
        IossCommand::Train {
            data: path,
            d,
            lambda,
            iterations,
            seed,
            config,
            encoding,
            out,
            codes_out,
        } => {
            let mut cfg: IossTrainConfig = load_config(config.as_deref())?;
            if let Some(v) = lambda {
                cfg.lambda = *v;
            }
            if let Some(v) = iterations {
                cfg.iterations = *v;
            }
            if let Some(v) = seed {
                cfg.seed = *v;
            }
            let (x, _) = data::read_observations(path)?;
            let o = ioss::ioss_train(&x, *d, &cfg)?;
            std::fs::write(out, o.model.to_json((*encoding).into())? + "\n")?;
            let mut outputs = vec![out.clone()];
            if let Some(p) = codes_out {
                data::write_csv(p, &data::numbered_headers("f", *d), &o.model.encode(x.values())?)?;
                outputs.push(p.clone());
            }
            eprintln!(
                "reconstruction loss {:.6}, IOSS {:.6} ({} draws)",
                o.reconstruction_loss, o.ioss.value, o.ioss.k_draws
            );
            let mut inputs = vec![path.clone()];
            inputs.extend(config.iter().cloned());
            Ok(Ran {
                inputs,
                outputs,
                config: serde_json::json!({ "d": d, "train": cfg }),
                seeds: vec![cfg.seed],
                ..Default::default()
            })
        }
        IossCommand::Distinguish {
            trials,
            seed,
            k_draws,
            n,
            d,
            levels,
            corr,
            entangler,
            out,
        } => {
            let grid = FactorGrid {
                d: *d,
                levels: *levels,
                n: *n,
            };
            let target = *corr;
            let gen =
                move |s: u64| -> Result<FactorSample> { Ok(synth::gen_correlated_factors(grid, target, s)?.sample) };
            let cfg = DistinguishConfig {
                trials: *trials,
                k_draws: parse_draws(k_draws)?,
                alpha_quantile: 0.0,
                seed: *seed,
            };
            let result = match entangler {
                EntanglerArg::Polynomial => {
                    ioss::distinguish_experiment(&gen, &|z, s| ioss::entangle_factors(z, s), &cfg)?
                }
                EntanglerArg::Preset => {
                    ioss::distinguish_experiment(&gen, &|z, s| ioss::entangle_preset(z, 0.2, s), &cfg)?
                }
                EntanglerArg::Identity => ioss::distinguish_experiment(&gen, &|z, _| Ok(z.clone()), &cfg)?,
            };
            write_json(out, &result)?;
            eprintln!("proportion correct {}", result.proportion);
            Ok(Ran {
                outputs: vec![out.clone()],
                config: serde_json::json!({ "grid": grid, "corr": corr, "entangler": format!("{entangler:?}"), "distinguish": cfg }),
                seeds: vec![*seed],
                ..Default::default()
            })
        }
    }
}

/// Writes the result JSON and one CSV per table.
pub fn write_result(result: &ExperimentResult, out: &str) -> Result<Vec<String>> {
    std::fs::write(out, result.to_json()? + "\n")?;
    let mut outputs = vec![out.to_owned()];
    for t in &result.tables {
        let p = sibling(out, &format!("{}.csv", t.name));
        t.write_csv(&p)?;
        outputs.push(p);
    }
    Ok(outputs)
}

fn experiment_cmd(a: &ExperimentArgs) -> Result<Ran> {
    let (result, config) = match a.name {
        ExperimentName::PocSweep => (experiment::poc_sweep(a.seed)?, serde_json::json!({})),
        ExperimentName::OodLinear => {
            let mut cfg: OodConfig = load_config(a.config.as_deref())?;
            if let Some(s) = a.seeds {
                cfg.seeds = s;
            }
            (experiment::ood_linear(&cfg, a.seed)?, serde_json::to_value(cfg)?)
        }
        ExperimentName::IossSuite => {
            let mut cfg: IossSuiteConfig = load_config(a.config.as_deref())?;
            if let Some(s) = a.seeds {
                cfg.sweep_seeds = s;
            }
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            let value = serde_json::to_value(&cfg)?;
            (experiment::ioss_suite(&cfg, a.seed)?, value)
        }
    };
    let outputs = write_result(&result, &a.out)?;
    for x in &result.assertions {
        eprintln!("[{}] {} ({})", if x.passed { "PASS" } else { "FAIL" }, x.name, x.detail);
    }
    Ok(Ran {
        inputs: a.config.iter().cloned().collect(),
        outputs,
        config,
        seeds: vec![a.seed],
        status: if result.all_passed() { 0 } else { EXIT_CHECK_FAILED },
    })
}

fn report_cmd(a: &ReportArgs) -> Result<Ran> {
    let results = a
        .results
        .iter()
        .map(|p| ExperimentResult::from_json(&std::fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    let report = experiment::report(results)?;
    print!("{}", report.render());
    let mut outputs = Vec::new();
    if let Some(p) = &a.out {
        write_json(p, &report)?;
        outputs.push(p.clone());
    }
    Ok(Ran {
        inputs: a.results.clone(),
        outputs,
        status: if report.all_passed() { 0 } else { EXIT_CHECK_FAILED },
        ..Default::default()
    })
}

fn replay_cmd(a: &ReplayArgs) -> Result<Ran> {
    let m = RunManifest::read(&a.from)?;
    let dir = PathBuf::from(a.out_dir.clone().unwrap_or_else(|| format!("{}.replay", a.from)));
    std::fs::create_dir_all(&dir)?;
    let dir = std::fs::canonicalize(&dir)?;
    let here = std::env::current_dir()?;
    std::env::set_current_dir(&m.working_directory)?;
    let outcome = (|| -> Result<bool> {
        let mut ok = true;
        for i in &m.inputs {
            let now = sha256_file(&i.path)?;
            if now != i.sha256 {
                eprintln!("input {} changed since the recorded run", i.path);
                ok = false;
            }
        }
        let (mut args, outputs) = m.redirected(&dir)?;
        args.push("--no-manifest".into());
        let code = run(args);
        if code != 0 && code != EXIT_CHECK_FAILED {
            return Err(Error::input(format!("replayed command exited with status {code}")));
        }
        for (rec, new) in m.outputs.iter().zip(&outputs) {
            let same = sha256_file(new)? == rec.sha256;
            println!("[{}] {}", if same { "MATCH" } else { "DIFFER" }, rec.path);
            ok &= same;
        }
        Ok(ok)
    })();
    std::env::set_current_dir(here)?;
    let ok = outcome?;
    Ok(Ran {
        inputs: vec![a.from.clone()],
        status: if ok { 0 } else { EXIT_CHECK_FAILED },
        ..Default::default()
    })
}

fn dispatch(cli: &Cli) -> Result<Ran> {
    match &cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Ppca(c) => ppca_cmd(c),
        Command::Pns(c) => pns_cmd(c),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Ioss(c) => ioss_cmd(c),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Replay(a) => replay_cmd(a),
    }
}

/// Caps the global worker pool at `CAUSALREP_THREADS` when set.
fn configure_threads() {
    if let Some(n) = std::env::var("CAUSALREP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // A second call in the same process finds the pool already built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs one command line (without the program name) and returns the exit status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(std::iter::once("causalrep".to_owned()).chain(args.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    let start = Instant::now();
    match dispatch(&cli) {
        Ok(ran) => {
            let wants_manifest = !cli.no_manifest && !matches!(cli.command, Command::Replay(_) | Command::Report(_));
            let path = cli
                .manifest
                .clone()
                .or_else(|| ran.outputs.first().map(|o| RunManifest::default_path(o)));
            if let (true, Some(path)) = (wants_manifest, path) {
                let m = RunManifest::capture(
                    args,
                    ran.config,
                    ran.seeds,
                    &ran.inputs,
                    &ran.outputs,
                    start.elapsed().as_secs_f64(),
                )
                .and_then(|m| m.write(&path));
                if let Err(e) = m {
                    eprintln!("error: writing manifest: {e}");
                    return e.exit_code();
                }
            }
            ran.status
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Numerical { dump: Some(d), .. } = &e {
                eprintln!("state at failure:\n{d}");
            }
            e.exit_code()
        }
    }
}
