//! ADAM and the full-batch training loops.
//!
//! `train_pinn` maximises the total log-likelihood; `train_bpinn` minimises
//! the negative ELBO over `(mu, rho)`. Both are deterministic for a fixed
//! configuration: parameter initialisation, oversampling and ELBO noise all
//! derive from `TrainConfig::seed`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{elbo_estimate, PriorConfig, VariationalParams, RHO_INIT};
use crate::error::{Error, Result};
use crate::net::{init_params, Activation, BatchEngine, NetworkParams, NetworkShape};
use crate::pinn::{
    log_likelihood_and_gradient, physics_log_lik_by_group, Datasets, LikelihoodConfig, ModelConfig, SampleBatch,
    TermValues, Variant,
};

/// Bias-corrected ADAM that ascends its objective.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// `params += lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count differs from parameter count");
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] += self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut NetworkParams, grads: &NetworkParams) {
    state.step(params.as_mut_slice(), grads.as_slice());
}

/// Named configurations of the four reference datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Synthetic,
    Synthetic2,
    FireS03,
    FireE06,
}

/// Values a preset fixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetValues {
    pub shape: NetworkShape,
    pub n_t: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub lr: f64,
    pub epochs: usize,
    pub lik: LikelihoodConfig,
}

impl Preset {
    pub fn values(self) -> PresetValues {
        let lik = LikelihoodConfig::standard();
        let (h, act, n_t, n, lr, epochs) = match self {
            Preset::Synthetic => (64, Activation::Tanh, 48, (35, 35), 1e-3, 6000),
            Preset::Synthetic2 => (64, Activation::Tanh, 48, (35, 35), 1e-3, 16_000),
            Preset::FireS03 => (128, Activation::Relu, 68, (71, 71), 5e-4, 50_000),
            Preset::FireE06 => (128, Activation::Relu, 69, (57, 57), 1e-4, 50_000),
        };
        PresetValues {
            shape: NetworkShape::new(h, h, act),
            n_t,
            n_x: n.0,
            n_y: n.1,
            lr,
            epochs,
            lik,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Synthetic => "synthetic",
            Preset::Synthetic2 => "synthetic2",
            Preset::FireS03 => "fire_s03",
            Preset::FireE06 => "fire_e06",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default)]
    pub preset: Option<Preset>,
    pub model: ModelConfig,
    pub lik: LikelihoodConfig,
    pub shape: NetworkShape,
    pub seed: u64,
    /// Zero disables periodic checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Return the parameters with the best logged objective instead of the
    /// last ones.
    #[serde(default)]
    pub keep_best: bool,
    /// Reparameterised draws per ELBO estimate.
    #[serde(default = "one")]
    pub mc_samples: usize,
    #[serde(default = "rho_init")]
    pub rho_init: f64,
    /// Epochs between progress messages; zero silences them.
    #[serde(default)]
    pub log_every: usize,
}

fn one() -> usize {
    1
}

fn rho_init() -> f64 {
    RHO_INIT
}

impl TrainConfig {
    pub fn from_preset(preset: Preset, variant: Variant, bayesian: bool, seed: u64) -> Self {
        let v = preset.values();
        TrainConfig {
            epochs: v.epochs,
            lr: v.lr,
            preset: Some(preset),
            model: ModelConfig::new(variant, bayesian),
            lik: v.lik,
            shape: v.shape,
            seed,
            checkpoint_every: 0,
            keep_best: false,
            mc_samples: 1,
            rho_init: RHO_INIT,
            log_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("train.epochs", "must be >= 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(
                "train.lr",
                format!("must be a non-negative number, got {}", self.lr),
            ));
        }
        if self.shape.hidden1 == 0 || self.shape.hidden2 == 0 {
            return Err(Error::invalid("train.shape", "hidden widths must be positive"));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("train.mc_samples", "must be >= 1"));
        }
        self.lik.validate()
    }
}

/// One epoch of the training log. Bayesian runs also fill the ELBO columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub terms: TermValues,
    pub neg_elbo: Option<f64>,
    pub log_q: Option<f64>,
    pub log_prior: Option<f64>,
}

impl LogRow {
    pub fn total(&self) -> f64 {
        self.terms.total()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let bayes = self.rows.first().is_some_and(|r| r.neg_elbo.is_some());
        let mut out = String::from("epoch,total,initial,physics,forecast,observation");
        if bayes {
            out.push_str(",neg_elbo,log_q,log_prior");
        }
        out.push('\n');
        for r in &self.rows {
            let t = &r.terms;
            write!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                t.total(),
                t.initial,
                t.physics,
                t.forecast,
                t.observation
            )
            .unwrap();
            if bayes {
                let f = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
                write!(out, ",{},{},{}", f(r.neg_elbo), f(r.log_q), f(r.log_prior)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(LogRow::total).collect()
    }
}

fn diverged(epoch: usize, terms: &TermValues, extra: &str) -> Error {
    Error::TrainingDiverged {
        epoch,
        terms: format!(
            "initial={} physics={} forecast={} observation={}{extra}",
            terms.initial, terms.physics, terms.forecast, terms.observation
        ),
    }
}

/// Called with the epoch number and current parameters every
/// `checkpoint_every` epochs and after the last epoch.
pub type CheckpointFn<'a, P> = dyn FnMut(usize, &P) -> Result<()> + 'a;

pub fn train_pinn(datasets: &Datasets, cfg: &TrainConfig) -> Result<(NetworkParams, TrainLog)> {
    train_pinn_with(datasets, cfg, None, &mut |_, _| Ok(()))
}

/// Maximum-likelihood training from `init` (or a seeded initialisation).
pub fn train_pinn_with(
    datasets: &Datasets,
    cfg: &TrainConfig,
    init: Option<NetworkParams>,
    on_checkpoint: &mut CheckpointFn<'_, NetworkParams>,
) -> Result<(NetworkParams, TrainLog)> {
    cfg.validate()?;
    let mut params = init.unwrap_or_else(|| init_params(cfg.shape, cfg.seed));
    if *params.shape() != cfg.shape {
        return Err(Error::invalid(
            "train.shape",
            "initial parameters have a different shape",
        ));
    }
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut engine = BatchEngine::new();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, NetworkParams)> = None;

    for epoch in 1..=cfg.epochs {
        let (terms, grad) = log_likelihood_and_gradient(&params, datasets, &cfg.model, &cfg.lik, &mut engine)?;
        if !terms.is_finite() || !grad.is_finite() {
            return Err(diverged(epoch, &terms, ""));
        }
        if cfg.keep_best && best.as_ref().is_none_or(|(b, _)| terms.total() > *b) {
            best = Some((terms.total(), params.clone()));
        }
        log.rows.push(LogRow {
            epoch,
            terms,
            neg_elbo: None,
            log_q: None,
            log_prior: None,
        });
        adam_step(&mut adam, &mut params, &grad);
        if cfg.log_every > 0 && epoch % cfg.log_every == 0 {
            log::info!(
                "epoch {epoch}: total {:.4} (initial {:.4}, physics {:.4}, forecast {:.4}, observation {:.4})",
                terms.total(),
                terms.initial,
                terms.physics,
                terms.forecast,
                terms.observation
            );
        }
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) || epoch == cfg.epochs {
            on_checkpoint(epoch, &params)?;
        }
    }
    if !params.is_finite() {
        let last = log.rows.last().map(|r| r.terms).unwrap_or_default();
        return Err(diverged(
            cfg.epochs,
            &last,
            " (non-finite parameters after the final update)",
        ));
    }
    match best {
        Some((_, p)) => Ok((p, log)),
        None => Ok((params, log)),
    }
}

pub fn train_bpinn(
    datasets: &Datasets,
    cfg: &TrainConfig,
    prior: &PriorConfig,
) -> Result<(VariationalParams, TrainLog)> {
    train_bpinn_with(datasets, cfg, prior, None, &mut |_, _| Ok(()))
}

/// Variational training. ELBO noise for epoch `e` is seeded by the `e`-th
/// draw of a ChaCha8 stream seeded with `cfg.seed + 1`.
pub fn train_bpinn_with(
    datasets: &Datasets,
    cfg: &TrainConfig,
    prior: &PriorConfig,
    init: Option<VariationalParams>,
    on_checkpoint: &mut CheckpointFn<'_, VariationalParams>,
) -> Result<(VariationalParams, TrainLog)> {
    cfg.validate()?;
    prior.validate()?;
    let mut phi = init.unwrap_or_else(|| VariationalParams::new(init_params(cfg.shape, cfg.seed), cfg.rho_init));
    if *phi.mu.shape() != cfg.shape {
        return Err(Error::invalid(
            "train.shape",
            "initial parameters have a different shape",
        ));
    }
    let n = phi.mu.len();
    let mut adam = AdamState::new(2 * n, cfg.lr);
    let mut flat = [phi.mu.as_slice(), phi.rho.as_slice()].concat();
    let mut ascent = vec![0.0; 2 * n];
    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut engine = BatchEngine::new();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, VariationalParams)> = None;

    for epoch in 1..=cfg.epochs {
        let seed: u64 = noise.random();
        let (est, grad) = elbo_estimate(
            &phi,
            datasets,
            &cfg.model,
            &cfg.lik,
            prior,
            seed,
            cfg.mc_samples,
            &mut engine,
        )?;
        if !est.neg_elbo.is_finite() || !grad.is_finite() {
            return Err(diverged(
                epoch,
                &est.likelihood,
                &format!(" log_q={} log_prior={}", est.log_q, est.log_prior),
            ));
        }
        if cfg.keep_best && best.as_ref().is_none_or(|(b, _)| -est.neg_elbo > *b) {
            best = Some((-est.neg_elbo, phi.clone()));
        }
        log.rows.push(LogRow {
            epoch,
            terms: est.likelihood,
            neg_elbo: Some(est.neg_elbo),
            log_q: Some(est.log_q),
            log_prior: Some(est.log_prior),
        });
        for (a, g) in ascent
            .iter_mut()
            .zip(grad.mu.as_slice().iter().chain(grad.rho.as_slice()))
        {
            *a = -g;
        }
        adam.step(&mut flat, &ascent);
        phi.mu.as_mut_slice().copy_from_slice(&flat[..n]);
        phi.rho.as_mut_slice().copy_from_slice(&flat[n..]);
        if cfg.log_every > 0 && epoch % cfg.log_every == 0 {
            log::info!(
                "epoch {epoch}: neg_elbo {:.4} (log-lik {:.4}, log_q {:.4}, log_prior {:.4})",
                est.neg_elbo,
                est.likelihood.total(),
                est.log_q,
                est.log_prior
            );
        }
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) || epoch == cfg.epochs {
            on_checkpoint(epoch, &phi)?;
        }
    }
    match best {
        Some((_, p)) => Ok((p, log)),
        None => Ok((phi, log)),
    }
}

/// Physics log-likelihood of the collocation points falling in one time bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsBin {
    pub t_start: f64,
    pub t_end: f64,
    pub log_lik: f64,
    pub count: usize,
}

impl PhysicsBin {
    pub fn per_point(&self) -> f64 {
        self.log_lik / self.count.max(1) as f64
    }
}

/// Physics log-likelihood of a time-major collocation batch, split into
/// `n_bins` equal-width bins over the span of its time slices. A slice at
/// the right edge belongs to the last bin.
pub fn physics_term_timeseries(
    params: &NetworkParams,
    collocation: &SampleBatch,
    sigma_p2: f64,
    n_bins: usize,
) -> Result<Vec<PhysicsBin>> {
    if n_bins == 0 {
        return Err(Error::invalid("n_bins", "must be >= 1"));
    }
    let g = collocation
        .group_len
        .ok_or_else(|| Error::invalid("collocation", "batch is not grouped by time"))?;
    let by_group = physics_log_lik_by_group(params, collocation, sigma_p2)?;
    let times: Vec<f64> = (0..by_group.len()).map(|k| collocation.inputs[[k * g, 0]]).collect();
    let (t0, t1) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Ok(Vec::new()),
    };
    let width = (t1 - t0) / n_bins as f64;
    let mut bins: Vec<PhysicsBin> = (0..n_bins)
        .map(|b| PhysicsBin {
            t_start: t0 + b as f64 * width,
            t_end: t0 + (b + 1) as f64 * width,
            log_lik: 0.0,
            count: 0,
        })
        .collect();
    for (t, ll) in times.iter().zip(&by_group) {
        let b = if width > 0.0 {
            (((t - t0) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        bins[b].log_lik += ll;
        bins[b].count += g;
    }
    Ok(bins)
}
