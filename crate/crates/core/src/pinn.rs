//! Datasets and Gaussian log-likelihoods of the physics-informed network.
//!
//! Four sample sets feed the likelihood: initial-condition samples at
//! `t = 0`, collocation points where the level-set residual is penalised, a
//! forecast set tying each time slice to an explicit Euler step from the
//! previous one, and observed front points where the network should vanish.
//!
//! The forecast target is
//! `u_hat(k) = u(k-1) - dt * (s |grad u(k-1)| + max(W . grad u(k-1), 0))`,
//! the Euler step of `du/dt = -C . grad u`. It is recomputed from the current
//! parameters on every evaluation and treated as a constant when
//! differentiating.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ForcingField, GridSpec, ScalarField, SdfSpec};
use crate::net::{BatchEngine, EvalRecord, NetworkParams, INPUT_DIM, TANGENTS};

/// Upper bound on accept-reject draws when oversampling the ignition region.
pub const MAX_INTERIOR_DRAWS: usize = 1_000_000;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Initial,
    Physics,
    Forecast,
    Observation,
}

/// Rows of `(t, x, y, s, wx, wy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub kind: SampleKind,
    pub inputs: Array2<f64>,
    /// Level-set values for initial-condition samples.
    pub targets: Option<Array1<f64>>,
    /// Rows per time slice for time-major batches.
    pub group_len: Option<usize>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn empty(kind: SampleKind) -> Self {
        SampleBatch {
            kind,
            inputs: Array2::zeros((0, INPUT_DIM)),
            targets: None,
            group_len: None,
        }
    }

    /// Same rows under a different kind.
    pub fn retagged(&self, kind: SampleKind) -> Self {
        SampleBatch { kind, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.ncols() != INPUT_DIM {
            return Err(Error::invalid(
                "batch",
                format!("expected {INPUT_DIM} columns, got {}", self.inputs.ncols()),
            ));
        }
        if self.inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("batch", "non-finite input"));
        }
        match (&self.targets, self.kind) {
            (None, SampleKind::Initial) => return Err(Error::invalid("batch", "initial samples need targets")),
            (Some(t), _) if t.len() != self.len() => {
                return Err(Error::invalid("batch", "target count differs from row count"))
            }
            (Some(t), _) if t.iter().any(|v| !v.is_finite()) => {
                return Err(Error::invalid("batch", "non-finite target"))
            }
            _ => {}
        }
        if let Some(g) = self.group_len {
            if g == 0 || !self.len().is_multiple_of(g) {
                return Err(Error::invalid(
                    "batch",
                    format!("{} rows do not split into groups of {g}", self.len()),
                ));
            }
        }
        Ok(())
    }

    fn expect(&self, kind: SampleKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(
                "batch",
                format!("expected {kind:?} samples, got {:?}", self.kind),
            ));
        }
        Ok(())
    }
}

/// Variances of the four Gaussian likelihood terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    pub sigma_i2: f64,
    pub sigma_p2: f64,
    pub sigma_f2: f64,
    pub sigma_o2: f64,
}

impl LikelihoodConfig {
    /// Variances shared by every preset: 1/2000, 1/2, 1/100, 1/2000.
    pub fn standard() -> Self {
        LikelihoodConfig {
            sigma_i2: 1.0 / 2000.0,
            sigma_p2: 0.5,
            sigma_f2: 1.0 / 100.0,
            sigma_o2: 1.0 / 2000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_i2", self.sigma_i2),
            ("sigma_p2", self.sigma_p2),
            ("sigma_f2", self.sigma_f2),
            ("sigma_o2", self.sigma_o2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    format!("likelihood.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Initial condition and physics only.
    PinnE,
    /// Adds the forecast term.
    PinnF,
    /// Adds forecast and observation terms.
    PinnA,
}

impl Variant {
    pub fn uses_forecast(self) -> bool {
        !matches!(self, Variant::PinnE)
    }

    pub fn uses_observation(self) -> bool {
        matches!(self, Variant::PinnA)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::PinnE => "pinn_e",
            Variant::PinnF => "pinn_f",
            Variant::PinnA => "pinn_a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    #[serde(default)]
    pub bayesian: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant, bayesian: bool) -> Self {
        ModelConfig { variant, bayesian }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Datasets {
    pub initial: Option<SampleBatch>,
    pub physics: Option<SampleBatch>,
    pub forecast: Option<SampleBatch>,
    pub observation: Option<SampleBatch>,
}

impl Datasets {
    /// Initial and collocation sets on `grid`, with the forecast set sharing
    /// the collocation rows.
    pub fn build(
        sdf: &SdfSpec,
        grid: &GridSpec,
        forcing: &ForcingField,
        oversample_interior: usize,
        seed: u64,
    ) -> Result<Self> {
        let initial = build_initial_dataset(sdf, grid, forcing, oversample_interior, seed)?;
        let physics = build_collocation_dataset(grid, forcing)?;
        let forecast = physics.retagged(SampleKind::Forecast);
        Ok(Datasets {
            initial: Some(initial),
            physics: Some(physics),
            forecast: Some(forecast),
            observation: None,
        })
    }

    pub fn with_observations(mut self, obs: SampleBatch) -> Self {
        self.observation = Some(obs);
        self
    }

    fn require(&self, variant: Variant) -> Result<()> {
        let name = variant.name();
        let missing = |dataset| Err(Error::MissingDataset { variant: name, dataset });
        if self.initial.is_none() {
            return missing("initial");
        }
        if self.physics.is_none() {
            return missing("physics");
        }
        if variant.uses_forecast() && self.forecast.is_none() {
            return missing("forecast");
        }
        if variant.uses_observation() && self.observation.is_none() {
            return missing("observation");
        }
        Ok(())
    }
}

/// Per-term log-likelihood values. Inactive terms are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TermValues {
    pub initial: f64,
    pub physics: f64,
    pub forecast: f64,
    pub observation: f64,
}

impl TermValues {
    pub fn total(&self) -> f64 {
        self.initial + self.physics + self.forecast + self.observation
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

/// `-n/2 ln(2 pi var) - sse / (2 var)`.
pub fn gaussian_log_lik(sse: f64, n: usize, var: f64) -> f64 {
    -0.5 * n as f64 * (LN_2PI + var.ln()) - sse / (2.0 * var)
}

/// Level-set residual from the output derivatives, with the wind term clamped
/// at zero so the front never backtracks.
#[inline]
pub fn residual_from_grads(ut: f64, ux: f64, uy: f64, s: f64, wx: f64, wy: f64) -> f64 {
    ut + s * ux.hypot(uy) + (wx * ux + wy * uy).max(0.0)
}

pub fn residual(record: &EvalRecord, s: f64, wind: (f64, f64)) -> f64 {
    let [ut, ux, uy] = record.input_grads;
    residual_from_grads(ut, ux, uy, s, wind.0, wind.1)
}

#[inline]
fn euler_forecast(u: f64, ux: f64, uy: f64, s: f64, wx: f64, wy: f64, dt: f64) -> f64 {
    u - dt * (s * ux.hypot(uy) + (wx * ux + wy * uy).max(0.0))
}

pub fn forecast_target(prev: &EvalRecord, s: f64, wind: (f64, f64), dt: f64) -> f64 {
    let [_, ux, uy] = prev.input_grads;
    euler_forecast(prev.output, ux, uy, s, wind.0, wind.1, dt)
}

/// One sample per spatial node at `t_min` with the SDF as target, followed by
/// `oversample_interior` uniform draws inside the ignition region.
pub fn build_initial_dataset(
    sdf: &SdfSpec,
    grid: &GridSpec,
    forcing: &ForcingField,
    oversample_interior: usize,
    seed: u64,
) -> Result<SampleBatch> {
    grid.validate()?;
    sdf.validate()?;
    let t = grid.t_min;
    let mut points = Vec::with_capacity(grid.n_x * grid.n_y + oversample_interior);
    for i in 0..grid.n_x {
        for j in 0..grid.n_y {
            points.push((grid.x(i), grid.y(j)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = 0;
    let mut accepted = 0;
    while accepted < oversample_interior {
        if draws == MAX_INTERIOR_DRAWS {
            return Err(Error::EmptyInterior(draws));
        }
        draws += 1;
        let x = rng.random_range(grid.x_min..grid.x_max);
        let y = rng.random_range(grid.y_min..grid.y_max);
        if sdf.eval(x, y) < 0.0 {
            points.push((x, y));
            accepted += 1;
        }
    }
    let rows = points.iter().map(|&(x, y)| (t, x, y)).collect::<Vec<_>>();
    let targets = points.iter().map(|&(x, y)| sdf.eval(x, y)).collect();
    Ok(SampleBatch {
        kind: SampleKind::Initial,
        inputs: forcing_rows(&rows, forcing),
        targets: Some(targets),
        group_len: None,
    })
}

/// Full grid product over time indices `1..=n_t`, time-major.
pub fn build_collocation_dataset(grid: &GridSpec, forcing: &ForcingField) -> Result<SampleBatch> {
    grid.validate()?;
    if grid.n_t == 0 {
        return Err(Error::invalid("grid.n_t", "must be >= 1 for collocation"));
    }
    let mut rows = Vec::with_capacity(grid.n_t * grid.n_x * grid.n_y);
    for n in 1..=grid.n_t {
        let t = grid.t(n);
        for i in 0..grid.n_x {
            for j in 0..grid.n_y {
                rows.push((t, grid.x(i), grid.y(j)));
            }
        }
    }
    Ok(SampleBatch {
        kind: SampleKind::Physics,
        inputs: forcing_rows(&rows, forcing),
        targets: None,
        group_len: Some(grid.n_x * grid.n_y),
    })
}

/// Observation samples at front points `(t, x, y)`, with forcing attached.
pub fn build_observation_dataset(points: &[(f64, f64, f64)], forcing: &ForcingField) -> SampleBatch {
    SampleBatch {
        kind: SampleKind::Observation,
        inputs: forcing_rows(points, forcing),
        targets: None,
        group_len: None,
    }
}

fn forcing_rows(points: &[(f64, f64, f64)], forcing: &ForcingField) -> Array2<f64> {
    let mut out = Array2::zeros((points.len(), INPUT_DIM));
    for (mut row, &(t, x, y)) in out.rows_mut().into_iter().zip(points) {
        let f = forcing.eval(t, x, y);
        row.assign(&ArrayView1::from(&[t, x, y, f.s, f.wx, f.wy]));
    }
    out
}

/// Rows per slice and the common time step of a time-major batch. Every
/// slice must repeat the spatial locations of the first at a constant time.
fn forecast_groups(batch: &SampleBatch) -> Result<(usize, f64)> {
    let g = batch
        .group_len
        .ok_or_else(|| Error::invalid("forecast", "batch is not grouped by time"))?;
    batch.validate()?;
    let x = &batch.inputs;
    let n_groups = batch.len() / g;
    if n_groups < 2 {
        return Ok((g, 0.0));
    }
    let dt = x[[g, 0]] - x[[0, 0]];
    if dt <= 0.0 {
        return Err(Error::invalid("forecast", "time slices must increase"));
    }
    for k in 0..n_groups {
        let t_k = x[[k * g, 0]];
        let expected = x[[0, 0]] + k as f64 * dt;
        if (t_k - expected).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::invalid(
                "forecast",
                format!("time slice {k} breaks the uniform spacing"),
            ));
        }
        for r in 0..g {
            let a = k * g + r;
            if x[[a, 0]] != t_k || x[[a, 1]] != x[[r, 1]] || x[[a, 2]] != x[[r, 2]] {
                return Err(Error::invalid(
                    "forecast",
                    format!("time slice {k} does not share the spatial grid of slice 0 (row {a})"),
                ));
            }
        }
    }
    Ok((g, dt))
}

/// Which terms a grouped pass over a time-major batch evaluates.
#[derive(Debug, Clone, Copy)]
struct GroupedTerms {
    physics: Option<f64>,
    forecast: Option<f64>,
}

/// Physics log-likelihood per time slice and the forecast sum, optionally
/// accumulating the parameter gradient.
fn grouped_pass(
    params: &NetworkParams,
    batch: &SampleBatch,
    terms: GroupedTerms,
    engine: &mut BatchEngine,
    mut grad: Option<&mut NetworkParams>,
) -> Result<(Vec<f64>, f64)> {
    let (g, dt) = if terms.forecast.is_some() {
        forecast_groups(batch)?
    } else {
        batch.validate()?;
        (batch.group_len.unwrap_or(batch.len().max(1)), 0.0)
    };
    let n = batch.len();
    let mut physics_by_group = Vec::new();
    let mut forecast_sse = 0.0;
    let mut forecast_count = 0;
    let mut prev: Option<(Array1<f64>, Array2<f64>)> = None;

    let mut start = 0;
    while start < n {
        let end = (start + g).min(n);
        let rows = batch.inputs.slice(s![start..end, ..]);
        let out = engine.forward(params, rows, true);
        let m = end - start;
        let mut seed_a = Array1::zeros(m);
        let mut seed_b = Array2::zeros((m, TANGENTS));

        if let Some(var) = terms.physics {
            let mut sse = 0.0;
            for k in 0..m {
                let r = rows.row(k);
                let (s, wx, wy) = (r[3], r[4], r[5]);
                let [ut, ux, uy] = [out.grads[[k, 0]], out.grads[[k, 1]], out.grads[[k, 2]]];
                let f = residual_from_grads(ut, ux, uy, s, wx, wy);
                sse += f * f;
                let df = -f / var;
                let norm = ux.hypot(uy);
                let (mut dx, mut dy) = if norm > 0.0 {
                    (s * ux / norm, s * uy / norm)
                } else {
                    (0.0, 0.0)
                };
                if wx * ux + wy * uy > 0.0 {
                    dx += wx;
                    dy += wy;
                }
                seed_b[[k, 0]] += df;
                seed_b[[k, 1]] += df * dx;
                seed_b[[k, 2]] += df * dy;
            }
            physics_by_group.push(gaussian_log_lik(sse, m, var));
        }

        if let Some(var) = terms.forecast {
            if let Some((pu, pg)) = &prev {
                let prow = batch.inputs.slice(s![start - g..start, ..]);
                for k in 0..m {
                    let p = prow.row(k);
                    let target = euler_forecast(pu[k], pg[[k, 1]], pg[[k, 2]], p[3], p[4], p[5], dt);
                    let e = out.u[k] - target;
                    forecast_sse += e * e;
                    seed_a[k] -= e / var;
                }
                forecast_count += m;
            }
        }

        if let Some(grad) = grad.as_deref_mut() {
            engine.backward(params, seed_a.view(), Some(seed_b.view()), grad);
        }
        if terms.forecast.is_some() {
            prev = Some((out.u, out.grads));
        }
        start = end;
    }
    let forecast = terms
        .forecast
        .map_or(0.0, |var| gaussian_log_lik(forecast_sse, forecast_count, var));
    Ok((physics_by_group, forecast))
}

/// Gaussian term on `u - target` (or on `u` alone) over a flat batch.
fn value_pass(
    params: &NetworkParams,
    inputs: ArrayView2<'_, f64>,
    targets: Option<ArrayView1<'_, f64>>,
    var: f64,
    engine: &mut BatchEngine,
    mut grad: Option<&mut NetworkParams>,
) -> f64 {
    const CHUNK: usize = 4096;
    let n = inputs.nrows();
    let mut sse = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let out = engine.forward(params, inputs.slice(s![start..end, ..]), false);
        let mut e = out.u;
        if let Some(t) = targets {
            e -= &t.slice(s![start..end]);
        }
        sse += e.iter().map(|v| v * v).sum::<f64>();
        if let Some(grad) = grad.as_deref_mut() {
            let seed = e.mapv(|v| -v / var);
            engine.backward(params, seed.view(), None, grad);
        }
        start = end;
    }
    gaussian_log_lik(sse, n, var)
}

pub fn log_lik_initial(params: &NetworkParams, batch: &SampleBatch, sigma_i2: f64) -> Result<f64> {
    batch.expect(SampleKind::Initial)?;
    batch.validate()?;
    let targets = batch.targets.as_ref().expect("validated").view();
    Ok(value_pass(
        params,
        batch.inputs.view(),
        Some(targets),
        sigma_i2,
        &mut BatchEngine::new(),
        None,
    ))
}

pub fn log_lik_physics(params: &NetworkParams, batch: &SampleBatch, sigma_p2: f64) -> Result<f64> {
    batch.expect(SampleKind::Physics)?;
    let terms = GroupedTerms {
        physics: Some(sigma_p2),
        forecast: None,
    };
    let (by_group, _) = grouped_pass(params, batch, terms, &mut BatchEngine::new(), None)?;
    Ok(by_group.iter().sum())
}

/// Physics log-likelihood of each time slice of a time-major batch.
pub fn physics_log_lik_by_group(params: &NetworkParams, batch: &SampleBatch, sigma_p2: f64) -> Result<Vec<f64>> {
    let terms = GroupedTerms {
        physics: Some(sigma_p2),
        forecast: None,
    };
    Ok(grouped_pass(params, batch, terms, &mut BatchEngine::new(), None)?.0)
}

pub fn log_lik_forecast(params: &NetworkParams, batch: &SampleBatch, sigma_f2: f64) -> Result<f64> {
    batch.expect(SampleKind::Forecast)?;
    let terms = GroupedTerms {
        physics: None,
        forecast: Some(sigma_f2),
    };
    Ok(grouped_pass(params, batch, terms, &mut BatchEngine::new(), None)?.1)
}

/// Forecast targets for every row after the first slice, from `params`.
pub fn forecast_targets(params: &NetworkParams, batch: &SampleBatch) -> Result<Array1<f64>> {
    let (g, dt) = forecast_groups(batch)?;
    let mut engine = BatchEngine::new();
    let n = batch.len();
    let mut out = Array1::zeros(n.saturating_sub(g));
    let mut start = 0;
    while start + g < n {
        let rows = batch.inputs.slice(s![start..start + g, ..]);
        let res = engine.forward(params, rows, true);
        for k in 0..g {
            let r = rows.row(k);
            out[start + k] = euler_forecast(res.u[k], res.grads[[k, 1]], res.grads[[k, 2]], r[3], r[4], r[5], dt);
        }
        start += g;
    }
    Ok(out)
}

pub fn log_lik_observation(params: &NetworkParams, batch: &SampleBatch, sigma_o2: f64) -> Result<f64> {
    batch.expect(SampleKind::Observation)?;
    batch.validate()?;
    Ok(value_pass(
        params,
        batch.inputs.view(),
        None,
        sigma_o2,
        &mut BatchEngine::new(),
        None,
    ))
}

pub fn total_log_likelihood(
    params: &NetworkParams,
    datasets: &Datasets,
    cfg: &ModelConfig,
    lik: &LikelihoodConfig,
) -> Result<f64> {
    Ok(log_likelihood_terms(params, datasets, cfg, lik)?.total())
}

pub fn log_likelihood_terms(
    params: &NetworkParams,
    datasets: &Datasets,
    cfg: &ModelConfig,
    lik: &LikelihoodConfig,
) -> Result<TermValues> {
    evaluate(params, datasets, cfg, lik, &mut BatchEngine::new(), None)
}

/// Term values and the gradient of the total with respect to the parameters,
/// with forecast targets held fixed.
pub fn log_likelihood_and_gradient(
    params: &NetworkParams,
    datasets: &Datasets,
    cfg: &ModelConfig,
    lik: &LikelihoodConfig,
    engine: &mut BatchEngine,
) -> Result<(TermValues, NetworkParams)> {
    let mut grad = NetworkParams::zeros(*params.shape());
    let terms = evaluate(params, datasets, cfg, lik, engine, Some(&mut grad))?;
    Ok((terms, grad))
}

fn evaluate(
    params: &NetworkParams,
    datasets: &Datasets,
    cfg: &ModelConfig,
    lik: &LikelihoodConfig,
    engine: &mut BatchEngine,
    mut grad: Option<&mut NetworkParams>,
) -> Result<TermValues> {
    datasets.require(cfg.variant)?;
    lik.validate()?;
    let mut out = TermValues::default();

    let initial = datasets.initial.as_ref().expect("required");
    initial.expect(SampleKind::Initial)?;
    initial.validate()?;
    let targets = initial.targets.as_ref().expect("validated").view();
    out.initial = value_pass(
        params,
        initial.inputs.view(),
        Some(targets),
        lik.sigma_i2,
        engine,
        grad.as_deref_mut(),
    );

    let physics = datasets.physics.as_ref().expect("required");
    physics.expect(SampleKind::Physics)?;
    let forecast = if cfg.variant.uses_forecast() {
        let f = datasets.forecast.as_ref().expect("required");
        f.expect(SampleKind::Forecast)?;
        Some(f)
    } else {
        None
    };
    match forecast {
        // the forecast set reuses the collocation rows: one pass serves both
        Some(f) if f.inputs == physics.inputs && f.group_len == physics.group_len => {
            let terms = GroupedTerms {
                physics: Some(lik.sigma_p2),
                forecast: Some(lik.sigma_f2),
            };
            let (p, fc) = grouped_pass(params, physics, terms, engine, grad.as_deref_mut())?;
            out.physics = p.iter().sum();
            out.forecast = fc;
        }
        _ => {
            let terms = GroupedTerms {
                physics: Some(lik.sigma_p2),
                forecast: None,
            };
            out.physics = grouped_pass(params, physics, terms, engine, grad.as_deref_mut())?
                .0
                .iter()
                .sum();
            if let Some(f) = forecast {
                let terms = GroupedTerms {
                    physics: None,
                    forecast: Some(lik.sigma_f2),
                };
                out.forecast = grouped_pass(params, f, terms, engine, grad.as_deref_mut())?.1;
            }
        }
    }

    if cfg.variant.uses_observation() {
        let obs = datasets.observation.as_ref().expect("required");
        obs.expect(SampleKind::Observation)?;
        obs.validate()?;
        out.observation = value_pass(params, obs.inputs.view(), None, lik.sigma_o2, engine, grad);
    }
    Ok(out)
}

/// Network surfaces on every spatial node at time indices `0..=n_t`.
pub fn predict_fields(params: &NetworkParams, grid: &GridSpec, forcing: &ForcingField) -> Vec<ScalarField> {
    let per_slice = grid.n_x * grid.n_y;
    let mut rows = Vec::with_capacity((grid.n_t + 1) * per_slice);
    for n in 0..=grid.n_t {
        let t = grid.t(n);
        for i in 0..grid.n_x {
            for j in 0..grid.n_y {
                rows.push((t, grid.x(i), grid.y(j)));
            }
        }
    }
    let u = crate::net::predict(params, forcing_rows(&rows, forcing).view());
    (0..=grid.n_t)
        .map(|n| {
            let values = u
                .slice(s![n * per_slice..(n + 1) * per_slice])
                .to_owned()
                .into_shape_with_order((grid.n_x, grid.n_y))
                .expect("slice has n_x * n_y values");
            ScalarField { grid: *grid, values }
        })
        .collect()
}

/// Network values at every row, without derivatives.
pub fn predict_batch(params: &NetworkParams, batch: &SampleBatch) -> Array1<f64> {
    crate::net::predict(params, batch.inputs.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_scenario, SpeedMap, WindSpec};
    use crate::net::{forward, init_params, Activation, NetworkShape};
    use ndarray::Axis;
    use proptest::prelude::*;

    fn rows_at_time(batch: &SampleBatch, t: f64) -> usize {
        batch.inputs.axis_iter(Axis(0)).filter(|r| r[0] == t).count()
    }

    fn record(u: f64, ut: f64, ux: f64, uy: f64) -> EvalRecord {
        EvalRecord {
            input: [0.0; 6],
            output: u,
            input_grads: [ut, ux, uy],
            z1: vec![],
            z2: vec![],
        }
    }

    #[test]
    fn residual_examples() {
        assert_eq!(residual(&record(0.0, 0.7, 0.0, 0.0), 0.4, (1.0, 1.0)), 0.7);
        assert_eq!(residual(&record(0.0, -0.4, 1.0, 0.0), 0.4, (0.0, 0.0)), 0.0);
        let f = residual(&record(0.0, 0.0, 0.6, 0.8), 0.1, (-1.0, 0.0));
        assert!((f - 0.1).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn residual_ignores_orthogonal_wind(
            ut in -2.0..2.0f64, ux in -2.0..2.0f64, uy in -2.0..2.0f64,
            s in 0.0..1.0f64, wpar in 0.0..2.0f64, wperp in -2.0..2.0f64,
        ) {
            let norm = ux.hypot(uy);
            prop_assume!(norm > 1e-3);
            let (nx, ny) = (ux / norm, uy / norm);
            let base = residual_from_grads(ut, ux, uy, s, wpar * nx, wpar * ny);
            let with_perp = residual_from_grads(ut, ux, uy, s, wpar * nx - wperp * ny, wpar * ny + wperp * nx);
            prop_assert!((base - with_perp).abs() < 1e-12);
        }
    }

    #[test]
    fn forecast_examples() {
        assert_eq!(forecast_target(&record(0.3, 0.0, 0.0, 0.0), 0.4, (1.0, 0.0), 0.1), 0.3);
        let v = forecast_target(&record(1.0, 0.0, 1.0, 0.0), 0.4, (0.0, 0.0), 1.0 / 48.0);
        assert!((v - 0.991_666_666_666_666_7).abs() < 1e-15);
        assert_eq!(forecast_target(&record(0.7, 0.0, 1.0, 0.0), 0.0, (-1.0, 0.0), 0.1), 0.7);
    }

    #[test]
    fn forecast_converges_linearly_in_dt() {
        let rec = record(0.25, 0.0, 0.3, -0.9);
        let err = |dt: f64| (forecast_target(&rec, 0.35, (0.2, -0.5), dt) - rec.output).abs();
        for dt in [0.1, 0.01, 0.001] {
            let ratio = err(dt) / err(dt / 2.0);
            assert!((ratio - 2.0).abs() < 1e-9, "ratio {ratio}");
        }
    }

    fn synthetic_data(seed: u64) -> (GridSpec, ForcingField, Datasets) {
        let grid = GridSpec::synthetic();
        let forcing = build_scenario("synthetic", &grid, seed).unwrap();
        let ds = Datasets::build(&SdfSpec::synthetic_ignition(), &grid, &forcing, 1225, seed).unwrap();
        (grid, forcing, ds)
    }

    #[test]
    fn dataset_sizes() {
        let (grid, forcing, ds) = synthetic_data(0);
        let init = ds.initial.as_ref().unwrap();
        assert_eq!(init.len(), 2450);
        assert!(init.targets.as_ref().unwrap().iter().skip(1225).all(|&u| u < 0.0));
        let phys = ds.physics.as_ref().unwrap();
        assert_eq!(phys.inputs.dim(), (58800, 6));
        assert_eq!(rows_at_time(phys, 0.0), 0);
        assert_eq!(rows_at_time(phys, grid.t(1)), 1225);
        for r in phys.inputs.rows() {
            let f = forcing.eval(r[0], r[1], r[2]);
            assert_eq!((r[3], r[4], r[5]), (f.s, f.wx, f.wy));
        }
        let tiny = build_collocation_dataset(&GridSpec::unit(2, 2, 1), &forcing).unwrap();
        assert_eq!(tiny.len(), 4);
        assert!(tiny.inputs.column(0).iter().all(|&t| t == 1.0));
    }

    #[test]
    fn initial_without_oversampling_matches_sdf() {
        let grid = GridSpec::unit(9, 7, 4);
        let sdf = SdfSpec::cone([0.4, 0.6], 0.2);
        let forcing = ForcingField::new(
            SpeedMap::Constant { value: 0.3 },
            WindSpec::Constant { wx: 0.0, wy: 0.0 },
            vec![],
        );
        let b = build_initial_dataset(&sdf, &grid, &forcing, 0, 1).unwrap();
        assert_eq!(b.len(), 63);
        for (r, &u) in b.inputs.rows().into_iter().zip(b.targets.as_ref().unwrap()) {
            assert_eq!(r[0], 0.0);
            assert_eq!(u, sdf.eval(r[1], r[2]));
        }
    }

    #[test]
    fn empty_interior_aborts() {
        let grid = GridSpec::unit(5, 5, 2);
        let forcing = ForcingField::new(
            SpeedMap::Constant { value: 0.3 },
            WindSpec::Constant { wx: 0.0, wy: 0.0 },
            vec![],
        );
        let sdf = SdfSpec::cone([0.5, 0.5], -0.1);
        assert!(matches!(
            build_initial_dataset(&sdf, &grid, &forcing, 1, 0),
            Err(Error::EmptyInterior(MAX_INTERIOR_DRAWS))
        ));
    }

    #[test]
    fn likelihood_examples() {
        assert!(
            (gaussian_log_lik(0.01, 1, 1.0 / 2000.0) - (-0.5 * (2.0 * std::f64::consts::PI / 2000.0).ln() - 10.0))
                .abs()
                < 1e-12
        );
        assert!((gaussian_log_lik(1.0, 1, 0.5) - (-0.5 * std::f64::consts::PI.ln() - 1.0)).abs() < 1e-12);
        assert!(
            (gaussian_log_lik(0.0025, 1, 1.0 / 2000.0) - (-0.5 * (2.0 * std::f64::consts::PI / 2000.0).ln() - 2.5))
                .abs()
                < 1e-12
        );
        let drop = gaussian_log_lik(0.0, 10, 0.2) - gaussian_log_lik(0.0, 10, 0.4);
        assert!((drop - 5.0 * 2f64.ln()).abs() < 1e-12);
        let empty = SampleBatch::empty(SampleKind::Observation);
        let p = init_params(NetworkShape::new(4, 4, Activation::Tanh), 0);
        assert_eq!(log_lik_observation(&p, &empty, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn forecast_single_group_is_zero_and_mismatch_rejected() {
        let forcing = ForcingField::new(
            SpeedMap::Constant { value: 0.3 },
            WindSpec::Constant { wx: 0.0, wy: 0.0 },
            vec![],
        );
        let p = init_params(NetworkShape::new(4, 4, Activation::Tanh), 0);
        let one = build_collocation_dataset(&GridSpec::unit(3, 3, 1), &forcing).unwrap();
        assert_eq!(
            log_lik_forecast(&p, &one.retagged(SampleKind::Forecast), 0.1).unwrap(),
            0.0
        );

        let mut two = build_collocation_dataset(&GridSpec::unit(3, 3, 2), &forcing)
            .unwrap()
            .retagged(SampleKind::Forecast);
        two.inputs[[10, 1]] += 0.01;
        assert!(log_lik_forecast(&p, &two, 0.1).is_err());
    }

    /// One location, two time slices. The ReLU network below computes
    /// `u = x + 0.5` near `x = 0.5`, so `u = 1` and `grad u = (1, 0)` in both
    /// slices.
    #[test]
    fn forecast_two_slice_example() {
        let shape = NetworkShape::new(1, 1, Activation::Relu);
        let mut p = crate::net::NetworkParams::zeros(shape);
        {
            let (mut w1, mut b1, mut w2, _, mut w3, b3) = p.parts_mut();
            w1[[0, 1]] = 1.0;
            b1[0] = 1.0;
            w2[[0, 0]] = 1.0;
            w3[0] = 1.0;
            *b3 = -0.5;
        }
        let x0 = 0.5;
        let dt = 1.0 / 48.0;
        let rec = forward(&[dt, x0, 0.5, 0.4, 0.0, 0.0], &p);
        assert_eq!(rec.output, 1.0);
        assert_eq!(rec.input_grads, [0.0, 1.0, 0.0]);
        let mut inputs = Array2::zeros((2, 6));
        inputs
            .row_mut(0)
            .assign(&ArrayView1::from(&[dt, x0, 0.5, 0.4, 0.0, 0.0]));
        inputs
            .row_mut(1)
            .assign(&ArrayView1::from(&[2.0 * dt, x0, 0.5, 0.4, 0.0, 0.0]));
        let batch = SampleBatch {
            kind: SampleKind::Forecast,
            inputs,
            targets: None,
            group_len: Some(1),
        };
        let v = log_lik_forecast(&p, &batch, 0.01).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI / 100.0).ln() - (0.4f64 / 48.0).powi(2) * 50.0;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    fn tiny_datasets(forcing: &ForcingField) -> Datasets {
        let grid = GridSpec::unit(3, 4, 3);
        let mut ds = Datasets::build(&SdfSpec::cone([0.5, 0.5], 0.3), &grid, forcing, 5, 3).unwrap();
        ds.observation = Some(build_observation_dataset(
            &[(0.3, 0.2, 0.7), (0.6, 0.9, 0.1), (0.9, 0.5, 0.5)],
            forcing,
        ));
        ds
    }

    /// Independently coded sums of squared residuals, one sample at a time.
    #[test]
    fn closed_forms_match_direct_sums() {
        let forcing = ForcingField::new(
            SpeedMap::SplitX {
                threshold: 0.5,
                left: 0.25,
                right: 0.15,
            },
            WindSpec::Constant { wx: 0.3, wy: -0.2 },
            vec![],
        );
        let ds = tiny_datasets(&forcing);
        let lik = LikelihoodConfig {
            sigma_i2: 0.3,
            sigma_p2: 0.7,
            sigma_f2: 0.2,
            sigma_o2: 0.05,
        };
        for seed in 0..5 {
            let p = init_params(NetworkShape::new(5, 6, Activation::Tanh), seed);
            let eval = |row: ArrayView1<f64>| forward(&std::array::from_fn(|d| row[d]), &p);

            let init = ds.initial.as_ref().unwrap();
            let mut sse = 0.0;
            for (r, &u) in init.inputs.rows().into_iter().zip(init.targets.as_ref().unwrap()) {
                sse += (eval(r).output - u).powi(2);
            }
            let direct = -0.5 * init.len() as f64 * (2.0 * std::f64::consts::PI * lik.sigma_i2).ln()
                - sse / (2.0 * lik.sigma_i2);
            assert!((log_lik_initial(&p, init, lik.sigma_i2).unwrap() - direct).abs() < 1e-10);

            let phys = ds.physics.as_ref().unwrap();
            let mut sse = 0.0;
            for r in phys.inputs.rows() {
                let f = residual(&eval(r), r[3], (r[4], r[5]));
                sse += f * f;
            }
            let direct = -0.5 * phys.len() as f64 * (2.0 * std::f64::consts::PI * lik.sigma_p2).ln()
                - sse / (2.0 * lik.sigma_p2);
            assert!((log_lik_physics(&p, phys, lik.sigma_p2).unwrap() - direct).abs() < 1e-10);

            let fc = ds.forecast.as_ref().unwrap();
            let g = fc.group_len.unwrap();
            let mut sse = 0.0;
            let mut pairs = 0;
            for k in g..fc.len() {
                let prev_row = fc.inputs.row(k - g);
                let prev = eval(prev_row);
                let dt = fc.inputs[[k, 0]] - prev_row[0];
                let target = forecast_target(&prev, prev_row[3], (prev_row[4], prev_row[5]), dt);
                sse += (eval(fc.inputs.row(k)).output - target).powi(2);
                pairs += 1;
            }
            let direct =
                -0.5 * pairs as f64 * (2.0 * std::f64::consts::PI * lik.sigma_f2).ln() - sse / (2.0 * lik.sigma_f2);
            assert!((log_lik_forecast(&p, fc, lik.sigma_f2).unwrap() - direct).abs() < 1e-10);

            let obs = ds.observation.as_ref().unwrap();
            let sse: f64 = obs.inputs.rows().into_iter().map(|r| eval(r).output.powi(2)).sum();
            let direct =
                -0.5 * obs.len() as f64 * (2.0 * std::f64::consts::PI * lik.sigma_o2).ln() - sse / (2.0 * lik.sigma_o2);
            assert!((log_lik_observation(&p, obs, lik.sigma_o2).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn physics_is_invariant_to_row_order() {
        let forcing = ForcingField::new(
            SpeedMap::Constant { value: 0.2 },
            WindSpec::Constant { wx: 0.1, wy: 0.3 },
            vec![],
        );
        let ds = tiny_datasets(&forcing);
        let p = init_params(NetworkShape::new(5, 6, Activation::Tanh), 1);
        let phys = ds.physics.unwrap();
        let mut rev = phys.clone();
        rev.inputs.invert_axis(Axis(0));
        let a = log_lik_physics(&p, &phys, 0.5).unwrap();
        let b = log_lik_physics(&p, &rev, 0.5).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn variant_composition() {
        let forcing = ForcingField::new(
            SpeedMap::Constant { value: 0.2 },
            WindSpec::Constant { wx: 0.1, wy: 0.3 },
            vec![],
        );
        let mut ds = tiny_datasets(&forcing);
        let lik = LikelihoodConfig::standard();
        let p = init_params(NetworkShape::new(5, 6, Activation::Tanh), 2);
        let e = total_log_likelihood(&p, &ds, &ModelConfig::new(Variant::PinnE, false), &lik).unwrap();
        let i = log_lik_initial(&p, ds.initial.as_ref().unwrap(), lik.sigma_i2).unwrap();
        let ph = log_lik_physics(&p, ds.physics.as_ref().unwrap(), lik.sigma_p2).unwrap();
        assert!((e - (i + ph)).abs() < 1e-9 * e.abs());

        let f = total_log_likelihood(&p, &ds, &ModelConfig::new(Variant::PinnF, false), &lik).unwrap();
        let fc = log_lik_forecast(&p, ds.forecast.as_ref().unwrap(), lik.sigma_f2).unwrap();
        assert!((f - (e + fc)).abs() < 1e-9 * f.abs());

        ds.observation = Some(SampleBatch::empty(SampleKind::Observation));
        let a = total_log_likelihood(&p, &ds, &ModelConfig::new(Variant::PinnA, false), &lik).unwrap();
        assert_eq!(a, f);

        ds.observation = None;
        assert!(matches!(
            total_log_likelihood(&p, &ds, &ModelConfig::new(Variant::PinnA, false), &lik),
            Err(Error::MissingDataset {
                dataset: "observation",
                ..
            })
        ));
    }

    /// The objective with forecast targets frozen at `frozen`.
    fn frozen_objective(p: &NetworkParams, ds: &Datasets, lik: &LikelihoodConfig, frozen: &NetworkParams) -> f64 {
        let mut total = log_lik_initial(p, ds.initial.as_ref().unwrap(), lik.sigma_i2).unwrap()
            + log_lik_physics(p, ds.physics.as_ref().unwrap(), lik.sigma_p2).unwrap()
            + log_lik_observation(p, ds.observation.as_ref().unwrap(), lik.sigma_o2).unwrap();
        let fc = ds.forecast.as_ref().unwrap();
        let targets = forecast_targets(frozen, fc).unwrap();
        let g = fc.group_len.unwrap();
        let u = predict_batch(p, fc);
        let sse: f64 = (g..fc.len()).map(|k| (u[k] - targets[k - g]).powi(2)).sum();
        total += gaussian_log_lik(sse, fc.len() - g, lik.sigma_f2);
        total
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let forcing = ForcingField::new(
            SpeedMap::SplitX {
                threshold: 0.5,
                left: 0.25,
                right: 0.15,
            },
            WindSpec::Constant { wx: 0.3, wy: -0.2 },
            vec![],
        );
        let ds = tiny_datasets(&forcing);
        let lik = LikelihoodConfig {
            sigma_i2: 0.3,
            sigma_p2: 0.7,
            sigma_f2: 0.2,
            sigma_o2: 0.05,
        };
        let p = init_params(NetworkShape::new(4, 3, Activation::Tanh), 8);
        for variant in [Variant::PinnE, Variant::PinnF, Variant::PinnA] {
            let cfg = ModelConfig::new(variant, false);
            let (terms, g) = log_likelihood_and_gradient(&p, &ds, &cfg, &lik, &mut BatchEngine::new()).unwrap();
            let f = |q: &NetworkParams| match variant {
                Variant::PinnA => frozen_objective(q, &ds, &lik, &p),
                _ => {
                    let mut ds2 = ds.clone();
                    ds2.observation = Some(SampleBatch::empty(SampleKind::Observation));
                    let mut v = frozen_objective(q, &ds2, &lik, &p);
                    if variant == Variant::PinnE {
                        v -= log_lik_forecast(q, ds.forecast.as_ref().unwrap(), lik.sigma_f2).unwrap();
                    }
                    v
                }
            };
            if variant != Variant::PinnE {
                assert!((f(&p) - terms.total()).abs() < 1e-10 * terms.total().abs());
            }
            for k in 0..p.len() {
                let h = 1e-5;
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp.as_mut_slice()[k] += h;
                pm.as_mut_slice()[k] -= h;
                let fd = if variant == Variant::PinnE {
                    let cfg = ModelConfig::new(Variant::PinnE, false);
                    (total_log_likelihood(&pp, &ds, &cfg, &lik).unwrap()
                        - total_log_likelihood(&pm, &ds, &cfg, &lik).unwrap())
                        / (2.0 * h)
                } else {
                    (f(&pp) - f(&pm)) / (2.0 * h)
                };
                let a = g.as_slice()[k];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "{variant:?} param {k}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn fused_and_separate_passes_agree() {
        let (_, _, ds) = synthetic_data(4);
        let lik = LikelihoodConfig::standard();
        let cfg = ModelConfig::new(Variant::PinnF, false);
        let p = init_params(NetworkShape::new(8, 8, Activation::Tanh), 4);
        let (fused, g1) = log_likelihood_and_gradient(&p, &ds, &cfg, &lik, &mut BatchEngine::new()).unwrap();
        let mut ds2 = ds.clone();
        // a copy with a different group length defeats the fused path
        let mut fc = ds.forecast.clone().unwrap();
        fc.inputs = fc.inputs.clone();
        ds2.forecast = Some(fc);
        ds2.physics.as_mut().unwrap().group_len = Some(1225 * 2);
        let (sep, g2) = log_likelihood_and_gradient(&p, &ds2, &cfg, &lik, &mut BatchEngine::new()).unwrap();
        assert!((fused.physics - sep.physics).abs() < 1e-9 * fused.physics.abs());
        assert!((fused.forecast - sep.forecast).abs() < 1e-9 * fused.forecast.abs().max(1.0));
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
        }
    }
}
