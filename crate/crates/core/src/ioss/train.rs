//! IOSS-regularized linear autoencoder.
//!
//! The training loss on a mini-batch is the mean squared reconstruction error
//! plus `λ` times a smooth surrogate of the sample IOSS of the batch codes.
//! Reported metrics always use the exact estimator from [`super::metric`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::metric::{sample_ioss, FactorSample, IossEstimate, KDraws};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::serial::{MatrixEncoding, MatrixJson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoencoderInit {
    /// Leading principal directions, decoder equal to the transpose.
    Pca,
    /// Gaussian entries with standard deviation `1/sqrt(m)`.
    Random,
}

/// Update rule for the encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IossOptimizer {
    /// Plain gradient steps; the step length scales with the gradient.
    Gradient,
    /// Adam moments; the step length is largely independent of gradient scale.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IossTrainConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Uniform draws per step for the surrogate.
    pub draws_per_step: usize,
    pub learning_rate: f64,
    pub softmin_temperature: f64,
    /// Temperature of the smooth max over draws (used when `alpha_quantile = 0`).
    pub softmax_temperature: f64,
    pub alpha_quantile: f64,
    /// Bandwidth of the rank kernel as a fraction of the draw count.
    pub quantile_bandwidth: f64,
    pub init: AutoencoderInit,
    pub optimizer: IossOptimizer,
    pub max_halvings: usize,
    /// Solve the decoder by least squares on every batch instead of updating it
    /// by gradient steps.
    pub exact_decoder: bool,
    /// Slack allowed on the batch loss for a step to count as non-increasing.
    pub tolerance: f64,
    /// Draws for the exact IOSS reported after training.
    pub eval_draws: KDraws,
    pub seed: u64,
}

impl Default for IossTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            iterations: 300,
            batch_size: 512,
            draws_per_step: 512,
            learning_rate: 0.01,
            softmin_temperature: 0.005,
            softmax_temperature: 0.01,
            alpha_quantile: 2.0,
            quantile_bandwidth: 0.01,
            init: AutoencoderInit::Pca,
            optimizer: IossOptimizer::Gradient,
            max_halvings: 8,
            exact_decoder: true,
            tolerance: 1e-6,
            eval_draws: KDraws::Auto,
            seed: 0,
        }
    }
}

impl IossTrainConfig {
    pub fn validate(&self, m: usize, d: usize) -> Result<()> {
        if d == 0 || d > m {
            return Err(Error::input(format!("latent dimension {d} must lie in 1..={m}")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::input("lambda must be finite and non-negative"));
        }
        if self.batch_size < 2 || self.draws_per_step < 1 {
            return Err(Error::input("batch size must be at least 2 and draws at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.softmin_temperature > 0.0 && self.softmax_temperature > 0.0) {
            return Err(Error::input("learning rate and temperatures must be positive"));
        }
        if !(0.0..50.0).contains(&self.alpha_quantile) || !(self.quantile_bandwidth > 0.0) {
            return Err(Error::input(
                "alpha quantile must lie in [0, 50) with a positive bandwidth",
            ));
        }
        Ok(())
    }
}

/// `Z = (X − mean)·E`, reconstruction `Z·D + mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAutoencoder {
    pub mean: DVector<f64>,
    pub encoder: DMatrix<f64>,
    pub decoder: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct AutoencoderJson {
    schema_version: u32,
    mean: MatrixJson,
    encoder: MatrixJson,
    decoder: MatrixJson,
}

impl LinearAutoencoder {
    pub fn input_dim(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.ncols()
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::input(format!(
                "data has {} columns, the autoencoder expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn centered(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= self.mean.transpose();
        }
        c
    }

    pub fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        Ok(self.centered(x) * &self.encoder)
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut r = self.encode(x)? * &self.decoder;
        for mut row in r.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(r)
    }

    /// Mean over rows of the squared reconstruction error.
    pub fn reconstruction_loss(&self, x: &DMatrix<f64>) -> Result<f64> {
        let r = self.reconstruct(x)?;
        Ok((x - r).norm_squared() / x.nrows() as f64)
    }

    pub fn to_json(&self, encoding: MatrixEncoding) -> Result<String> {
        let j = AutoencoderJson {
            schema_version: 1,
            mean: MatrixJson::encode_vector(&self.mean, encoding),
            encoder: MatrixJson::encode(&self.encoder, encoding),
            decoder: MatrixJson::encode(&self.decoder, encoding),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: AutoencoderJson = serde_json::from_str(text)?;
        if j.schema_version != 1 {
            return Err(Error::Format(format!(
                "unsupported schema version {}",
                j.schema_version
            )));
        }
        let ae = Self {
            mean: j.mean.decode_vector()?,
            encoder: j.encoder.decode()?,
            decoder: j.decoder.decode()?,
        };
        let (m, d) = ae.encoder.shape();
        if ae.mean.len() != m || ae.decoder.shape() != (d, m) {
            return Err(Error::Format("autoencoder matrices have inconsistent shapes".into()));
        }
        Ok(ae)
    }
}

/// Smooth IOSS surrogate of a code batch against fixed uniform draws, with its
/// gradient with respect to the codes.
///
/// Codes are min-max standardized per column. Each draw takes a softmin over
/// samples of the squared distance. Draw values are then combined by a
/// log-sum-exp max (`alpha_quantile = 0`) or by a Gaussian kernel over ranks
/// centred on the `(100 − α)` percentile.
pub fn ioss_surrogate(z: &DMatrix<f64>, draws: &DMatrix<f64>, cfg: &IossTrainConfig) -> Result<(f64, DMatrix<f64>)> {
    let (b, d) = z.shape();
    let k = draws.nrows();
    if draws.ncols() != d {
        return Err(Error::input("draws and codes differ in dimension"));
    }
    let mut lo_idx = vec![0usize; d];
    let mut hi_idx = vec![0usize; d];
    let mut range = vec![0.0; d];
    for j in 0..d {
        for i in 1..b {
            if z[(i, j)] < z[(lo_idx[j], j)] {
                lo_idx[j] = i;
            }
            if z[(i, j)] > z[(hi_idx[j], j)] {
                hi_idx[j] = i;
            }
        }
        range[j] = z[(hi_idx[j], j)] - z[(lo_idx[j], j)];
        if !(range[j] > 0.0) {
            return Err(Error::DegenerateData(format!(
                "code column {j} is constant on the batch"
            )));
        }
    }
    let s = DMatrix::from_fn(b, d, |i, j| (z[(i, j)] - z[(lo_idx[j], j)]) / range[j]);

    // Softmin per draw.
    let tau = cfg.softmin_temperature;
    let mut values = vec![0.0; k];
    let mut probs = DMatrix::<f64>::zeros(k, b);
    let mut dist = vec![0.0; b];
    for q in 0..k {
        let mut best = f64::INFINITY;
        for (i, di) in dist.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..d {
                let t = draws[(q, j)] - s[(i, j)];
                acc += t * t;
            }
            *di = acc;
            best = best.min(acc);
        }
        let mut total = 0.0;
        for (i, di) in dist.iter().enumerate() {
            let e = (-(di - best) / tau).exp();
            probs[(q, i)] = e;
            total += e;
        }
        for i in 0..b {
            probs[(q, i)] /= total;
        }
        values[q] = best - tau * total.ln();
    }

    // Outer weights over draws.
    let mut weights = vec![0.0; k];
    let value;
    if cfg.alpha_quantile == 0.0 {
        let t = cfg.softmax_temperature;
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (w, v) in weights.iter_mut().zip(&values) {
            *w = ((v - top) / t).exp();
            total += *w;
        }
        weights.iter_mut().for_each(|w| *w /= total);
        value = top + t * total.ln();
    } else {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &c| values[a].total_cmp(&values[c]));
        let target = (100.0 - cfg.alpha_quantile) / 100.0 * (k as f64 - 1.0);
        let h = (cfg.quantile_bandwidth * k as f64).max(0.5);
        let mut total = 0.0;
        for (rank, &q) in order.iter().enumerate() {
            let u = (rank as f64 - target) / h;
            weights[q] = (-0.5 * u * u).exp();
            total += weights[q];
        }
        weights.iter_mut().for_each(|w| *w /= total);
        value = weights.iter().zip(&values).map(|(w, v)| w * v).sum();
    }

    // Gradient with respect to standardized codes.
    let mut gs = DMatrix::<f64>::zeros(b, d);
    for q in 0..k {
        if weights[q] == 0.0 {
            continue;
        }
        for i in 0..b {
            let p = weights[q] * probs[(q, i)];
            if p == 0.0 {
                continue;
            }
            for j in 0..d {
                gs[(i, j)] += 2.0 * p * (s[(i, j)] - draws[(q, j)]);
            }
        }
    }
    // Back through the min-max map, including the rows that set the bounds.
    let mut gz = DMatrix::<f64>::zeros(b, d);
    for j in 0..d {
        let r = range[j];
        let mut g_lo = 0.0;
        let mut g_hi = 0.0;
        for i in 0..b {
            let g = gs[(i, j)];
            gz[(i, j)] += g / r;
            g_lo += g * (s[(i, j)] - 1.0) / r;
            g_hi -= g * s[(i, j)] / r;
        }
        gz[(lo_idx[j], j)] += g_lo;
        gz[(hi_idx[j], j)] += g_hi;
    }
    Ok((value, gz))
}

/// `argmin_D ‖X − Z·D‖²` with a tiny ridge.
pub(crate) fn least_squares_decoder(z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = z.ncols();
    let mut gram = z.transpose() * z;
    let scale = gram.trace() / d as f64;
    for i in 0..d {
        gram[(i, i)] += crate::linalg::RIDGE * scale.max(1.0);
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::numerical("code Gram matrix is not positive definite"))?;
    Ok(chol.solve(&(z.transpose() * x)))
}

/// Batch loss and its gradients with respect to encoder and decoder. With an
/// exact decoder the decoder gradient is zero and the encoder gradient follows
/// from the envelope theorem.
pub(crate) fn batch_loss(
    xb: &DMatrix<f64>,
    enc: &DMatrix<f64>,
    dec: &DMatrix<f64>,
    draws: &DMatrix<f64>,
    cfg: &IossTrainConfig,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let b = xb.nrows() as f64;
    let z = xb * enc;
    let solved;
    let dec = if cfg.exact_decoder {
        solved = least_squares_decoder(&z, xb)?;
        &solved
    } else {
        dec
    };
    let resid = xb - &z * dec;
    let mut loss = resid.norm_squared() / b;
    let g_dec = -(2.0 / b) * z.transpose() * &resid;
    let mut g_z = -(2.0 / b) * &resid * dec.transpose();
    if cfg.lambda > 0.0 {
        let (v, g) = ioss_surrogate(&z, draws, cfg)?;
        loss += cfg.lambda * v;
        g_z += cfg.lambda * g;
    }
    let g_enc = xb.transpose() * g_z;
    let g_dec = if cfg.exact_decoder {
        DMatrix::zeros(dec.nrows(), dec.ncols())
    } else {
        g_dec
    };
    if !loss.is_finite() {
        return Err(Error::numerical("non-finite autoencoder loss"));
    }
    Ok((loss, g_enc, g_dec))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct IossTrainOutcome {
    pub model: LinearAutoencoder,
    pub trace: Vec<StepRecord>,
    pub reconstruction_loss: f64,
    pub ioss: IossEstimate,
}

fn pca_init(xc: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let cov = xc.transpose() * xc / xc.nrows() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut e = DMatrix::zeros(xc.ncols(), d);
    for (c, &o) in order.iter().take(d).enumerate() {
        let mut v = eig.eigenvectors.column(o).clone_owned();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if lead < 0.0 {
            v.neg_mut();
        }
        e.set_column(c, &v);
    }
    e
}

struct Adam {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl Adam {
    fn new(shape: (usize, usize)) -> Self {
        Self {
            m: DMatrix::zeros(shape.0, shape.1),
            v: DMatrix::zeros(shape.0, shape.1),
        }
    }

    fn direction(&mut self, g: &DMatrix<f64>, t: i32) -> DMatrix<f64> {
        let (b1, b2): (f64, f64) = (0.9, 0.999);
        self.m = b1 * &self.m + (1.0 - b1) * g;
        self.v = b2 * &self.v + (1.0 - b2) * g.component_mul(g);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        self.m.zip_map(&self.v, |m, v| (m / c1) / ((v / c2).sqrt() + 1e-8))
    }
}

/// Trains a `d`-dimensional linear autoencoder with an IOSS penalty.
pub fn ioss_train(x: &DataMatrix, d: usize, cfg: &IossTrainConfig) -> Result<IossTrainOutcome> {
    let (n, m) = (x.nrows(), x.ncols());
    cfg.validate(m, d)?;
    let mean = x.column_means().clone();
    let xc = x.centered();
    let mut rng = crate::seed::rng(crate::seed::derive_named(cfg.seed, "ioss-train"));
    let (mut enc, mut dec) = match cfg.init {
        AutoencoderInit::Pca => {
            let e = pca_init(&xc, d);
            let t = e.transpose();
            (e, t)
        }
        AutoencoderInit::Random => {
            let sd = 1.0 / (m as f64).sqrt();
            let mut draw = |r: usize, c: usize| -> DMatrix<f64> {
                DMatrix::from_fn(r, c, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    sd * g
                })
            };
            let e = draw(m, d);
            let t = draw(d, m);
            (e, t)
        }
    };
    let batch = cfg.batch_size.min(n);
    let mut adam_e = Adam::new(enc.shape());
    let mut adam_d = Adam::new(dec.shape());
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let rows: Vec<usize> = if batch == n {
            (0..n).collect()
        } else {
            let mut r = sample(&mut rng, n, batch).into_vec();
            r.sort_unstable();
            r
        };
        let xb = xc.select_rows(rows.iter());
        let draws = DMatrix::from_fn(cfg.draws_per_step, d, |_, _| rng.random::<f64>());
        let (before, g_e, g_d) = batch_loss(&xb, &enc, &dec, &draws, cfg)?;
        let (step_e, step_d) = match cfg.optimizer {
            IossOptimizer::Gradient => (g_e, g_d),
            IossOptimizer::Adam => (
                adam_e.direction(&g_e, it as i32 + 1),
                adam_d.direction(&g_d, it as i32 + 1),
            ),
        };
        let mut lr = cfg.learning_rate;
        let mut record = StepRecord {
            iteration: it,
            loss_before: before,
            loss_after: before,
            accepted: false,
        };
        for _ in 0..=cfg.max_halvings {
            let e_new = &enc - lr * &step_e;
            let d_new = &dec - lr * &step_d;
            match batch_loss(&xb, &e_new, &d_new, &draws, cfg) {
                Ok((after, _, _)) if after <= before + cfg.tolerance => {
                    enc = e_new;
                    dec = d_new;
                    record.loss_after = after;
                    record.accepted = true;
                    break;
                }
                Ok(_) | Err(Error::DegenerateData(_)) => lr *= 0.5,
                Err(e) => return Err(e),
            }
        }
        trace.push(record);
    }
    if cfg.exact_decoder {
        dec = least_squares_decoder(&(&xc * &enc), &xc)?;
    }
    let model = LinearAutoencoder {
        mean,
        encoder: enc,
        decoder: dec,
    };
    let reconstruction_loss = model.reconstruction_loss(x.values())?;
    let codes = FactorSample::continuous(model.encode(x.values())?)?;
    let (k, _) = cfg.eval_draws.resolve(n, d);
    let ioss = sample_ioss(&codes, k, 0.0, crate::seed::derive_named(cfg.seed, "ioss-eval"))?;
    Ok(IossTrainOutcome {
        model,
        trace,
        reconstruction_loss,
        ioss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::seed::rng(seed);
        DMatrix::<f64>::from_fn(r, c, |_, _| rng.random::<f64>())
    }

    fn fd_check(cfg: &IossTrainConfig) {
        let z = random_matrix(12, 2, 1);
        let draws = random_matrix(30, 2, 2);
        let (_, g) = ioss_surrogate(&z, &draws, cfg).unwrap();
        let h = 1e-6;
        for i in 0..12 {
            for j in 0..2 {
                let mut zp = z.clone();
                zp[(i, j)] += h;
                let mut zm = z.clone();
                zm[(i, j)] -= h;
                let fp = ioss_surrogate(&zp, &draws, cfg).unwrap().0;
                let fm = ioss_surrogate(&zm, &draws, cfg).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (fd - g[(i, j)]).abs() < 1e-5 * (1.0 + fd.abs()),
                    "({i},{j}): {fd} vs {}",
                    g[(i, j)]
                );
            }
        }
    }

    #[test]
    fn surrogate_gradient_matches_differences_smooth_max() {
        fd_check(&IossTrainConfig {
            alpha_quantile: 0.0,
            softmin_temperature: 0.05,
            softmax_temperature: 0.05,
            ..Default::default()
        });
    }

    #[test]
    fn surrogate_gradient_matches_differences_soft_quantile() {
        fd_check(&IossTrainConfig {
            alpha_quantile: 10.0,
            softmin_temperature: 0.05,
            quantile_bandwidth: 0.2,
            ..Default::default()
        });
    }

    #[test]
    fn surrogate_tracks_exact_max_min_at_low_temperature() {
        let z = random_matrix(40, 2, 3);
        let draws = random_matrix(200, 2, 4);
        let cfg = IossTrainConfig {
            alpha_quantile: 0.0,
            softmin_temperature: 1e-5,
            softmax_temperature: 1e-5,
            ..Default::default()
        };
        let (v, _) = ioss_surrogate(&z, &draws, &cfg).unwrap();
        let s = FactorSample::continuous(z.clone()).unwrap();
        let s = super::super::metric::standardize(&s).unwrap();
        let mut exact: f64 = 0.0;
        for q in 0..200 {
            let mut best: f64 = f64::INFINITY;
            for i in 0..40 {
                let diff: nalgebra::RowDVector<f64> = draws.row(q) - s.values().row(i);
                best = best.min(diff.norm_squared());
            }
            exact = exact.max(best);
        }
        assert!((v - exact).abs() < 1e-3, "{v} vs {exact}");
    }

    #[test]
    fn json_round_trip() {
        let ae = LinearAutoencoder {
            mean: DVector::from_vec(vec![0.1, -0.2, 0.3]),
            encoder: random_matrix(3, 2, 5),
            decoder: random_matrix(2, 3, 6),
        };
        for enc in [MatrixEncoding::Plain, MatrixEncoding::Base64] {
            let back = LinearAutoencoder::from_json(&ae.to_json(enc).unwrap()).unwrap();
            assert_eq!(back, ae);
        }
    }

    #[test]
    fn rejects_latent_dimension_above_input() {
        let x = DataMatrix::new(random_matrix(10, 2, 7)).unwrap();
        assert!(matches!(
            ioss_train(&x, 3, &IossTrainConfig::default()),
            Err(Error::Input(_))
        ));
    }
}
