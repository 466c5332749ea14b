//! Experiment runners producing tabular results with embedded checks.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::ioss::{self, DistinguishConfig, FactorSample, IossTrainConfig, KDraws};
use crate::linalg;
use crate::rep::{self, RepClass, TrainConfig};
use crate::scm::{self, EventSpec};
use crate::synth::{self, FactorGrid};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Writes the table as CSV with a header row and round-trip precision.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean over `count` repetitions; the sample standard deviation is present
/// exactly when `count ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub count: usize,
}

impl MetricSummary {
    pub fn of(name: &str, values: &[f64]) -> Self {
        let count = values.len();
        let m = mean(values);
        let std =
            (count >= 2).then(|| (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt());
        Self {
            name: name.into(),
            mean: m,
            std,
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub tables: Vec<Table>,
    pub summary: Vec<MetricSummary>,
    pub assertions: Vec<Assertion>,
}

impl ExperimentResult {
    fn new(experiment: &str, seed: u64, params: serde_json::Value) -> Self {
        Self {
            schema_version: RESULT_SCHEMA_VERSION,
            experiment: experiment.into(),
            seed,
            params,
            tables: Vec::new(),
            summary: Vec::new(),
            assertions: Vec::new(),
        }
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.summary.push(MetricSummary::of(name, &[value]));
    }

    fn metric_over(&mut self, name: &str, values: &[f64]) {
        self.summary.push(MetricSummary::of(name, values));
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.assertions.push(Assertion {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn summary_value(&self, name: &str) -> Option<f64> {
        self.summary.iter().find(|m| m.name == name).map(|m| m.mean)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("experiment result: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != RESULT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        for m in &self.summary {
            if m.count == 0 || m.std.is_some() != (m.count >= 2) {
                return Err(Error::Format(format!(
                    "metric {} has an inconsistent repetition count",
                    m.name
                )));
            }
        }
        for t in &self.tables {
            if let Some(i) = t.rows.iter().position(|r| r.len() != t.columns.len()) {
                return Err(Error::Format(format!(
                    "table {} row {i} has the wrong number of cells",
                    t.name
                )));
            }
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Conditional PNS of `cause` for `outcome` with `held` clamped, averaged over
/// the observational distribution of `held`.
fn averaged_conditional_pns(scm: &scm::BinaryScm, cause: &str, held: &str, outcome: &str) -> Result<f64> {
    let obs = scm::observational_dist(scm)?;
    let p1 = obs.marginal(held)?;
    let mut total = 0.0;
    for (v, w) in [(true, p1), (false, 1.0 - p1)] {
        if w > 0.0 {
            let c = scm::conditional_pns_oracle(
                scm,
                &EventSpec::eq(cause, true),
                &[EventSpec::eq(held, v)],
                &EventSpec::eq(outcome, true),
            )?;
            total += w * c;
        }
    }
    Ok(total)
}

/// Noise levels `0, 0.1, …, 1` of the binary model.
pub fn poc_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Exact sweep of the binary model over the `Z1 → Z2` noise level.
pub fn poc_sweep(seed: u64) -> Result<ExperimentResult> {
    let mut res = ExperimentResult::new("poc-sweep", seed, serde_json::json!({ "p": poc_grid() }));
    let mut t = Table::new(
        "sweep",
        &[
            "p",
            "corr_z1_z2",
            "cpns_z2_y1_given_z1",
            "cpns_z1_y1_given_z2",
            "cpns_z1_y2_given_z2",
            "cpns_z2_y2_given_z1",
            "lb_z1_y1",
            "lb_z1_y2",
            "lb_z2_y2",
            "pns_z1_y1",
        ],
    );
    for p in poc_grid() {
        let m = synth::gen_binary_poc(p)?;
        let obs = scm::observational_dist(&m)?;
        let z1 = EventSpec::eq("Z1", true);
        let z2 = EventSpec::eq("Z2", true);
        let y1 = EventSpec::eq("Y1", true);
        let y2 = EventSpec::eq("Y2", true);
        t.rows.push(vec![
            p,
            scm::correlation(&obs, "Z1", "Z2")?,
            averaged_conditional_pns(&m, "Z2", "Z1", "Y1")?,
            averaged_conditional_pns(&m, "Z1", "Z2", "Y1")?,
            averaged_conditional_pns(&m, "Z1", "Z2", "Y2")?,
            averaged_conditional_pns(&m, "Z2", "Z1", "Y2")?,
            scm::pns_lower_bound(&m, &z1, &y1)?,
            scm::pns_lower_bound(&m, &z1, &y2)?,
            scm::pns_lower_bound(&m, &z2, &y2)?,
            scm::true_poc(&m, &z1, &y1)?.pns,
        ]);
    }
    let spurious = t.column("cpns_z2_y1_given_z1").unwrap_or_default();
    let worst = spurious.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    res.check(
        "spurious factor has zero conditional PNS",
        worst <= 1e-12,
        format!("max |cpns(Z2→Y1 | Z1)| = {worst:e}"),
    );
    let causal = t.column("cpns_z1_y1_given_z2").unwrap_or_default();
    let least = causal.iter().copied().fold(f64::INFINITY, f64::min);
    res.check(
        "causal factor has conditional PNS at least 0.5",
        least >= 0.5,
        format!("min cpns(Z1→Y1 | Z2) = {least}"),
    );
    let corr = t.column("corr_z1_z2").unwrap_or_default();
    let lb = t.column("lb_z1_y2").unwrap_or_default();
    let mut order: Vec<usize> = (0..corr.len()).collect();
    order.sort_by(|&a, &b| corr[a].total_cmp(&corr[b]));
    let monotone = order.windows(2).all(|w| lb[w[1]] >= lb[w[0]]);
    res.check(
        "bound for Z1→Y2 is non-decreasing in corr(Z1, Z2)",
        monotone,
        format!(
            "bounds ordered by correlation: {:?}",
            order.iter().map(|&i| lb[i]).collect::<Vec<_>>()
        ),
    );
    res.metric("max_spurious_cpns", worst);
    res.metric("min_causal_cpns", least);
    res.tables.push(t);
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OodConfig {
    pub seeds: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train: TrainConfig,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            n_train: 1000,
            n_test: 1000,
            train: TrainConfig {
                class: RepClass::Selection,
                rep_dim: 2,
                latent_dim: 1,
                pinpoint_threshold: 0.05,
                ..TrainConfig::default()
            },
        }
    }
}

/// R² on the test split of OLS fitted on the given training columns.
fn ols_r2(
    train_x: &DataMatrix,
    train_y: &DVector<f64>,
    test_x: &DataMatrix,
    test_y: &DVector<f64>,
    cols: &[usize],
) -> Result<f64> {
    let pick = |x: &DataMatrix| linalg::with_intercept(&x.values().select_columns(cols.iter()));
    let fit = linalg::ols(&pick(train_x), train_y)?;
    Ok(linalg::r2_score(test_y, &(pick(test_x) * fit.coef)))
}

/// Out-of-distribution R² of CAUSAL-REP, OLS on every column and OLS on the
/// true causal columns, one row per seed.
pub fn ood_linear(cfg: &OodConfig, seed: u64) -> Result<ExperimentResult> {
    if cfg.seeds == 0 {
        return Err(Error::input("need at least one seed"));
    }
    let mut res = ExperimentResult::new("ood-linear", seed, serde_json::to_value(cfg)?);
    let rows: Vec<Result<Vec<f64>>> = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| {
            let s = crate::seed::derive(seed, i as u64);
            let data = synth::gen_toy_linear(crate::seed::derive(s, 0), cfg.n_train, cfg.n_test)?;
            let tc = TrainConfig {
                seed: crate::seed::derive(s, 1),
                ..cfg.train
            };
            let out = rep::train(&data.train.x, &data.train.y, &tc)?;
            let head = rep::fit_predictor(&out.rep, &data.train.x, &data.train.y)?;
            let pred = rep::predict(&head, &out.rep, &data.test.x)?;
            let causal = linalg::r2_score(&data.test.y, &pred);
            let all: Vec<usize> = (0..data.train.x.ncols()).collect();
            let ols = ols_r2(&data.train.x, &data.train.y, &data.test.x, &data.test.y, &all)?;
            let oracle = ols_r2(&data.train.x, &data.train.y, &data.test.x, &data.test.y, &[0, 1])?;
            let picked = out.rep.selected_columns().unwrap_or_default();
            let on_causal = picked.iter().filter(|&&c| c < 2).count() as f64;
            Ok(vec![i as f64, causal, ols, oracle, on_causal])
        })
        .collect();
    let mut t = Table::new(
        "per_seed",
        &[
            "seed_index",
            "causal_rep_r2",
            "ols_r2",
            "oracle_r2",
            "causal_columns_selected",
        ],
    );
    for r in rows {
        t.rows.push(r?);
    }
    let causal = t.column("causal_rep_r2").unwrap_or_default();
    let ols = t.column("ols_r2").unwrap_or_default();
    let oracle = t.column("oracle_r2").unwrap_or_default();
    let wins = causal.iter().zip(&ols).filter(|(c, o)| c >= o).count();
    let gains: Vec<f64> = causal.iter().zip(&ols).map(|(c, o)| c - o).collect();
    let (mc, mr) = (mean(&causal), mean(&oracle));
    res.metric_over("causal_rep_r2", &causal);
    res.metric_over("ols_r2", &ols);
    res.metric_over("oracle_r2", &oracle);
    res.metric_over("improvement", &gains);
    res.metric("wins", wins as f64);
    let need = (0.8 * cfg.seeds as f64).ceil() as usize;
    res.check(
        "CAUSAL-REP at least matches OLS in 80% of seeds",
        wins >= need,
        format!("{wins} of {} seeds (need {need})", cfg.seeds),
    );
    res.check(
        "mean improvement over OLS at least 0.05",
        mean(&gains) >= 0.05,
        format!("mean improvement {:.4}", mean(&gains)),
    );
    res.check(
        "oracle mean at least CAUSAL-REP mean",
        mr >= mc,
        format!("oracle {mr:.4}, CAUSAL-REP {mc:.4}"),
    );
    res.check(
        "CAUSAL-REP mean within 0.15 of oracle",
        mr - mc <= 0.15,
        format!("gap {:.4}", mr - mc),
    );
    res.tables.push(t);
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IossSuiteConfig {
    pub trials: usize,
    pub factor_grid: FactorGrid,
    pub target_corr: f64,
    pub k_draws: KDraws,
    /// Seeds of the regularization sweep; zero skips the sweep.
    pub sweep_seeds: usize,
    pub lambdas: Vec<f64>,
    pub mixture_n: usize,
    pub mixture_m: usize,
    pub mixture_levels: usize,
    pub mixture_noise_sd: f64,
    pub train: IossTrainConfig,
}

impl Default for IossSuiteConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            factor_grid: FactorGrid {
                d: 3,
                levels: 3,
                n: 200,
            },
            target_corr: 0.8,
            k_draws: KDraws::Auto,
            sweep_seeds: 20,
            lambdas: vec![0.0, 10.0, 100.0],
            mixture_n: 2000,
            mixture_m: 10,
            mixture_levels: 4,
            mixture_noise_sd: 0.3,
            train: IossTrainConfig {
                iterations: 200,
                eval_draws: KDraws::Fixed(100_000),
                ..IossTrainConfig::default()
            },
        }
    }
}

/// Discrimination of entangled from disentangled factors and, optionally,
/// the regularization sweep of the IOSS autoencoder.
pub fn ioss_suite(cfg: &IossSuiteConfig, seed: u64) -> Result<ExperimentResult> {
    if cfg.trials == 0 {
        return Err(Error::input("need at least one trial"));
    }
    let mut res = ExperimentResult::new("ioss-suite", seed, serde_json::to_value(cfg)?);
    let grid = cfg.factor_grid;
    let target = cfg.target_corr;
    let gen = move |s: u64| -> Result<FactorSample> { Ok(synth::gen_correlated_factors(grid, target, s)?.sample) };
    let dcfg = DistinguishConfig {
        trials: cfg.trials,
        k_draws: cfg.k_draws,
        alpha_quantile: 0.0,
        seed: crate::seed::derive_named(seed, "distinguish"),
    };
    let d = ioss::distinguish_experiment(&gen, &|z, s| ioss::entangle_factors(z, s), &dcfg)?;
    let control = ioss::distinguish_experiment(
        &gen,
        &|z, _| Ok(z.clone()),
        &DistinguishConfig {
            trials: cfg.trials.min(20),
            ..dcfg
        },
    )?;
    let mut t = Table::new(
        "discrimination",
        &["trial", "ioss_disentangled", "ioss_entangled", "correct"],
    );
    for (i, tr) in d.trials.iter().enumerate() {
        t.rows.push(vec![
            i as f64,
            tr.disentangled,
            tr.entangled,
            if tr.correct { 1.0 } else { 0.0 },
        ]);
    }
    res.tables.push(t);
    let ordered = d.trials.iter().filter(|t| t.correct).count();
    res.metric("discrimination", d.proportion);
    res.metric("identity_control", control.proportion);
    res.metric("k_draws", d.k_draws as f64);
    let need = (0.95 * cfg.trials as f64).ceil() as usize;
    res.check(
        "entangled copy scores higher in 95% of trials",
        ordered >= need,
        format!("{ordered} of {} (need {need})", cfg.trials),
    );
    res.check(
        "discrimination proportion at least 0.9",
        d.proportion >= 0.9,
        format!("proportion {}", d.proportion),
    );

    if cfg.sweep_seeds > 0 && !cfg.lambdas.is_empty() {
        let mixture_grid = FactorGrid {
            d: grid.d,
            levels: cfg.mixture_levels,
            n: cfg.mixture_n,
        };
        let runs: Vec<Result<Vec<Vec<f64>>>> = (0..cfg.sweep_seeds)
            .into_par_iter()
            .map(|i| {
                let s = crate::seed::derive(crate::seed::derive_named(seed, "sweep"), i as u64);
                let f = synth::gen_correlated_factors(mixture_grid, target, crate::seed::derive(s, 0))?;
                let (x, _) = synth::gen_factor_mixture(
                    &f.sample,
                    cfg.mixture_m,
                    cfg.mixture_noise_sd,
                    crate::seed::derive(s, 1),
                )?;
                cfg.lambdas
                    .iter()
                    .map(|&lambda| {
                        let tc = IossTrainConfig {
                            lambda,
                            seed: crate::seed::derive(s, 2),
                            ..cfg.train
                        };
                        let o = ioss::ioss_train(&x, grid.d, &tc)?;
                        Ok(vec![i as f64, lambda, o.reconstruction_loss, o.ioss.value])
                    })
                    .collect()
            })
            .collect();
        let mut t = Table::new(
            "regularization",
            &["seed_index", "lambda", "reconstruction_loss", "ioss"],
        );
        for r in runs {
            t.rows.extend(r?);
        }
        let values = |l: f64, col: usize| -> Vec<f64> { t.rows.iter().filter(|r| r[1] == l).map(|r| r[col]).collect() };
        let mut rec = Vec::new();
        let mut score = Vec::new();
        for &l in &cfg.lambdas {
            rec.push(mean(&values(l, 2)));
            score.push(mean(&values(l, 3)));
            res.metric_over(&format!("reconstruction_lambda_{l}"), &values(l, 2));
            res.metric_over(&format!("ioss_lambda_{l}"), &values(l, 3));
        }
        res.check(
            "mean IOSS strictly decreasing in lambda",
            score.windows(2).all(|w| w[1] < w[0]),
            format!("{score:?}"),
        );
        let ratio = rec[rec.len() - 1] / rec[0];
        res.check(
            "reconstruction at the largest lambda within 1.3x of the first",
            ratio <= 1.3,
            format!("ratio {ratio:.4}"),
        );
        res.tables.push(t);
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiments: Vec<ExperimentResult>,
    pub passed: usize,
    pub failed: usize,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    /// Plain-text rendering: one block per experiment with its metrics and checks.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.experiments {
            s += &format!("== {} (seed {})\n", e.experiment, e.seed);
            for m in &e.summary {
                let std = m.std.map_or(String::new(), |v| format!(" ± {v:.6}"));
                s += &format!("  {:<32} {:>12.6}{std} (n={})\n", m.name, m.mean, m.count);
            }
            for a in &e.assertions {
                s += &format!(
                    "  [{}] {} ({})\n",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    a.detail
                );
            }
        }
        s += &format!("{} checks passed, {} failed\n", self.passed, self.failed);
        s
    }
}

pub fn report(results: Vec<ExperimentResult>) -> Result<Report> {
    for r in &results {
        r.validate()?;
    }
    let passed = results.iter().flat_map(|r| &r.assertions).filter(|a| a.passed).count();
    let failed = results.iter().flat_map(|r| &r.assertions).filter(|a| !a.passed).count();
    Ok(Report {
        experiments: results,
        passed,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_summary_std_only_with_two_values() {
        let one = MetricSummary::of("x", &[3.0]);
        assert_eq!(one.std, None);
        assert_eq!(one.mean, 3.0);
        // Sample sd of 2, 4, 4, 4, 5, 5, 7, 9 is sqrt(32/7).
        let many = MetricSummary::of("x", &[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(many.mean, 5.0);
        assert!((many.std.unwrap() - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(many.count, 8);
    }

    #[test]
    fn poc_sweep_passes_and_matches_closed_forms() {
        let r = poc_sweep(0).unwrap();
        assert!(r.all_passed(), "{:?}", r.assertions);
        let t = r.table("sweep").unwrap();
        for row in &t.rows {
            let p = row[0];
            // do(Z1=1) gives P(Y2) = 0.8(1−p) + 0.2p, do(Z1=0) gives 0.2.
            assert!((row[7] - 0.6 * (1.0 - p)).abs() < 1e-12);
            assert!((row[6] - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_report_passes() {
        let r = report(Vec::new()).unwrap();
        assert!(r.all_passed());
        assert_eq!(r.passed + r.failed, 0);
    }

    #[test]
    fn failing_assertion_fails_report_and_json_round_trips() {
        let mut e = ExperimentResult::new("x", 1, serde_json::json!({}));
        e.check("always false", false, String::new());
        e.metric("m", 0.1 + 0.2);
        let back = ExperimentResult::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(back, e);
        assert!(!report(vec![back]).unwrap().all_passed());
    }

    #[test]
    fn ragged_table_is_a_format_error() {
        let text = r#"{"schema_version":1,"experiment":"x","seed":0,"params":{},
            "tables":[{"name":"t","columns":["a","b"],"rows":[[1.0]]}],"summary":[],"assertions":[]}"#;
        assert!(matches!(ExperimentResult::from_json(text), Err(Error::Format(_))));
    }
}
