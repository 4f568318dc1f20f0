//! First-order upwind level-set solver with periodic reinitialisation.
//!
//! The update per cell is
//! `u <- u - dt * (max(c, 0) * grad_plus + min(c, 0) * grad_minus)` with
//! `c = s + max(W . n, 0)`: normal spread plus the wind component along the
//! outward normal, never allowed to push the front backwards.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::contour::{extract_zero_level_set, Polyline};
use crate::error::{Error, Result};
use crate::field::{ForcingField, GridSpec, ScalarField};

/// Gradient norms below this are treated as "no normal direction".
pub const NORMAL_EPS: f64 = 1e-12;

/// One-sided differences of a field and the two upwind gradient norms.
#[derive(Debug, Clone, PartialEq)]
pub struct UpwindWorkspace {
    pub d_plus_x: Array2<f64>,
    pub d_minus_x: Array2<f64>,
    pub d_plus_y: Array2<f64>,
    pub d_minus_y: Array2<f64>,
    pub grad_plus: Array2<f64>,
    pub grad_minus: Array2<f64>,
}

/// Forward/backward differences along both axes. At the domain edge the
/// missing difference is replaced by the available one-sided difference of
/// the same cell.
pub fn one_sided_differences(u: &ScalarField) -> UpwindWorkspace {
    let (nx, ny) = u.values.dim();
    let dx = u.grid.dx();
    let dy = u.grid.dy();
    let v = &u.values;

    let mut d_plus_x = Array2::zeros((nx, ny));
    let mut d_minus_x = Array2::zeros((nx, ny));
    let mut d_plus_y = Array2::zeros((nx, ny));
    let mut d_minus_y = Array2::zeros((nx, ny));
    for i in 0..nx {
        for j in 0..ny {
            let fx = (i + 1 < nx).then(|| (v[[i + 1, j]] - v[[i, j]]) / dx);
            let bx = (i > 0).then(|| (v[[i, j]] - v[[i - 1, j]]) / dx);
            let fy = (j + 1 < ny).then(|| (v[[i, j + 1]] - v[[i, j]]) / dy);
            let by = (j > 0).then(|| (v[[i, j]] - v[[i, j - 1]]) / dy);
            d_plus_x[[i, j]] = fx.or(bx).unwrap_or(0.0);
            d_minus_x[[i, j]] = bx.or(fx).unwrap_or(0.0);
            d_plus_y[[i, j]] = fy.or(by).unwrap_or(0.0);
            d_minus_y[[i, j]] = by.or(fy).unwrap_or(0.0);
        }
    }

    let mut grad_plus = Array2::zeros((nx, ny));
    let mut grad_minus = Array2::zeros((nx, ny));
    Zip::from(&mut grad_plus)
        .and(&mut grad_minus)
        .and(&d_plus_x)
        .and(&d_minus_x)
        .and(&d_plus_y)
        .and(&d_minus_y)
        .for_each(|gp, gm, &px, &mx, &py, &my| {
            *gp = (mx.max(0.0).powi(2) + px.min(0.0).powi(2) + my.max(0.0).powi(2) + py.min(0.0).powi(2)).sqrt();
            *gm = (mx.min(0.0).powi(2) + px.max(0.0).powi(2) + my.min(0.0).powi(2) + py.max(0.0).powi(2)).sqrt();
        });

    UpwindWorkspace {
        d_plus_x,
        d_minus_x,
        d_plus_y,
        d_minus_y,
        grad_plus,
        grad_minus,
    }
}

/// Scalar front speed `s + max(W . n, 0)` for a gradient `(gx, gy)`.
pub fn front_speed(s: f64, wx: f64, wy: f64, gx: f64, gy: f64) -> f64 {
    let norm = (gx * gx + gy * gy).sqrt();
    let w_normal = if norm < NORMAL_EPS {
        0.0
    } else {
        (wx * gx + wy * gy) / norm
    };
    s + w_normal.max(0.0)
}

fn speed_field(u: &ScalarField, ws: &UpwindWorkspace, forcing: &ForcingField, t: f64) -> Array2<f64> {
    let grid = &u.grid;
    Array2::from_shape_fn(u.values.dim(), |(i, j)| {
        let f = forcing.eval(t, grid.x(i), grid.y(j));
        // averaging the one-sided differences gives central differences in
        // the interior and the one-sided value on the boundary
        let gx = 0.5 * (ws.d_plus_x[[i, j]] + ws.d_minus_x[[i, j]]);
        let gy = 0.5 * (ws.d_plus_y[[i, j]] + ws.d_minus_y[[i, j]]);
        front_speed(f.s, f.wx, f.wy, gx, gy)
    })
}

/// Advance `u` by one explicit upwind step of length `dt`, with forcing
/// evaluated at time `t`.
pub fn upwind_step(u: &ScalarField, forcing: &ForcingField, t: f64, dt: f64) -> ScalarField {
    let ws = one_sided_differences(u);
    let c = speed_field(u, &ws, forcing, t);
    let mut values = u.values.clone();
    Zip::from(&mut values)
        .and(&c)
        .and(&ws.grad_plus)
        .and(&ws.grad_minus)
        .for_each(|v, &c, &gp, &gm| {
            *v -= dt * (c.max(0.0) * gp + c.min(0.0) * gm);
        });
    ScalarField { grid: u.grid, values }
}

/// Smeared sign used by reinitialisation.
pub fn smeared_sign(u0: f64, dx: f64) -> f64 {
    if u0 == 0.0 {
        return 0.0;
    }
    u0 / (u0 * u0 + dx * dx).sqrt()
}

/// One pseudo-time Euler step of `du/dtau = -sign(u0) (|grad u| - 1)`.
pub fn reinit_step(u: &ScalarField, u0: &ScalarField, d_tau: f64) -> Result<ScalarField> {
    if u.values.dim() != u0.values.dim() {
        return Err(Error::GridMismatch("reinitialisation fields differ in shape".into()));
    }
    let ws = one_sided_differences(u);
    let dx = u.grid.dx();
    let mut values = u.values.clone();
    Zip::from(&mut values)
        .and(&u0.values)
        .and(&ws.grad_plus)
        .and(&ws.grad_minus)
        .for_each(|v, &s0, &gp, &gm| {
            let sign = smeared_sign(s0, dx);
            let norm = if sign > 0.0 {
                gp
            } else if sign < 0.0 {
                gm
            } else {
                return;
            };
            *v -= d_tau * sign * (norm - 1.0);
        });
    Ok(ScalarField { grid: u.grid, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReinitConfig {
    /// Reinitialise after every `period` time steps.
    pub period: usize,
    /// Pseudo-time steps per reinitialisation; zero disables it.
    pub inner_iterations: usize,
    /// Defaults to half the x spacing.
    #[serde(default)]
    pub pseudo_time_step: Option<f64>,
}

impl ReinitConfig {
    /// No reinitialisation (the synthetic experiments).
    pub fn disabled() -> Self {
        ReinitConfig {
            period: 1,
            inner_iterations: 0,
            pseudo_time_step: None,
        }
    }

    /// One integration iteration every ten steps (the field-fire setting).
    pub fn every_ten() -> Self {
        ReinitConfig {
            period: 10,
            inner_iterations: 1,
            pseudo_time_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::invalid("reinit.period", "must be >= 1"));
        }
        if let Some(d) = self.pseudo_time_step {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid("reinit.pseudo_time_step", "must be positive"));
            }
        }
        Ok(())
    }
}

impl Default for ReinitConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub grid: GridSpec,
    /// One field per time index `0..=n_t`.
    pub snapshots: Vec<ScalarField>,
    pub fronts: Vec<Vec<Polyline>>,
}

impl SimulationResult {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.snapshots.len()).map(|n| self.grid.t(n))
    }
}

/// Run the level-set method over all time steps of `grid`.
pub fn run_simulation(
    u0: &ScalarField,
    forcing: &ForcingField,
    grid: &GridSpec,
    reinit: &ReinitConfig,
) -> Result<SimulationResult> {
    if !u0.grid.same_space(grid) {
        return Err(Error::GridMismatch(
            "initial field does not match the simulation grid".into(),
        ));
    }
    reinit.validate()?;
    let dt = grid.dt();
    let d_tau = reinit.pseudo_time_step.unwrap_or(0.5 * grid.dx());
    let cfl_factor = dt * (1.0 / grid.dx() + 1.0 / grid.dy());
    let mut warned = false;

    let mut u = ScalarField {
        grid: *grid,
        values: u0.values.clone(),
    };
    let mut snapshots = Vec::with_capacity(grid.n_t + 1);
    let mut fronts = Vec::with_capacity(grid.n_t + 1);
    fronts.push(extract_zero_level_set(&u));
    snapshots.push(u.clone());

    for n in 1..=grid.n_t {
        let t = grid.t(n - 1);
        if !warned {
            let ws = one_sided_differences(&u);
            let c_max = speed_field(&u, &ws, forcing, t)
                .iter()
                .fold(0.0f64, |m, c| m.max(c.abs()));
            if c_max * cfl_factor > 1.0 {
                log::warn!(
                    "CFL condition violated at step {n}: dt * max|c| * (1/dx + 1/dy) = {:.3}",
                    c_max * cfl_factor
                );
                warned = true;
            }
        }
        u = upwind_step(&u, forcing, t, dt);
        if reinit.inner_iterations > 0 && n % reinit.period == 0 {
            let anchor = u.clone();
            for _ in 0..reinit.inner_iterations {
                u = reinit_step(&u, &anchor, d_tau)?;
            }
        }
        if let Some((i, j)) = u.first_non_finite() {
            return Err(Error::Diverged { time_index: n, i, j });
        }
        fronts.push(extract_zero_level_set(&u));
        snapshots.push(u.clone());
    }

    Ok(SimulationResult {
        grid: *grid,
        snapshots,
        fronts,
    })
}
