//! Grids, scalar fields, signed-distance initialisers and the forcing
//! scenarios (speed and wind) that drive both solvers.
//!
//! Forcing is a continuous function of `(t, x, y)`; grids only appear in the
//! consumers that sample it.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular space-time grid. Spatial nodes sit at cell centres, time nodes at
/// `t_min + n * dt` for `n = 0..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
}

impl GridSpec {
    /// The unit-square grid used by the synthetic experiments: 35 x 35 cells
    /// and 48 time steps over `t in [0, 1]`.
    pub fn synthetic() -> Self {
        Self::unit(35, 35, 48)
    }

    pub fn unit(n_x: usize, n_y: usize, n_t: usize) -> Self {
        GridSpec {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            n_x,
            n_y,
            t_min: 0.0,
            t_max: 1.0,
            n_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 2 {
            return Err(Error::invalid("grid.n_x", format!("must be >= 2, got {}", self.n_x)));
        }
        if self.n_y < 2 {
            return Err(Error::invalid("grid.n_y", format!("must be >= 2, got {}", self.n_y)));
        }
        for (name, lo, hi) in [
            ("grid.x", self.x_min, self.x_max),
            ("grid.y", self.y_min, self.y_max),
            ("grid.t", self.t_min, self.t_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(
                    name,
                    format!("bounds must be finite and strictly ordered, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    /// Same validation with the time-step count also checked (`n_t >= 2`).
    pub fn validate_full(&self) -> Result<()> {
        self.validate()?;
        if self.n_t < 2 {
            return Err(Error::invalid("grid.n_t", format!("must be >= 2, got {}", self.n_t)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.n_y as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / self.n_t as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (self.x_max - self.x_min) * (i as f64 + 0.5) / self.n_x as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + (self.y_max - self.y_min) * (j as f64 + 0.5) / self.n_y as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        self.t_min + (self.t_max - self.t_min) * n as f64 / self.n_t as f64
    }

    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.n_x == other.n_x
            && self.n_y == other.n_y
            && self.x_min == other.x_min
            && self.x_max == other.x_max
            && self.y_min == other.y_min
            && self.y_max == other.y_max
    }

    /// Nearest node index along x; ties resolve toward the lower index.
    pub fn nearest_i(&self, x: f64) -> usize {
        nearest_index(x, self.x_min, self.dx(), self.n_x)
    }

    pub fn nearest_j(&self, y: f64) -> usize {
        nearest_index(y, self.y_min, self.dy(), self.n_y)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

fn nearest_index(v: f64, lo: f64, step: f64, n: usize) -> usize {
    let p = (v - lo) / step - 0.5;
    let k = (p - 0.5).ceil();
    k.clamp(0.0, (n - 1) as f64) as usize
}

/// Level-set values on the spatial nodes of a grid at one time.
/// `values[[i, j]]` is the value at `(grid.x(i), grid.y(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Array2<f64>,
}

impl ScalarField {
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.n_x, grid.n_y), |(i, j)| f(grid.x(i), grid.y(j)));
        ScalarField { grid, values }
    }

    pub fn from_values(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.n_x, grid.n_y) {
            return Err(Error::GridMismatch(format!(
                "values have shape {:?}, grid expects ({}, {})",
                values.dim(),
                grid.n_x,
                grid.n_y
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        ScalarField {
            grid,
            values: Array2::from_elem((grid.n_x, grid.n_y), value),
        }
    }

    /// First non-finite cell, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(ij, _)| ij)
    }
}

/// Axis-aligned rectangle; membership includes the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Normal-direction spread rate `s(t, x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedMap {
    Constant {
        value: f64,
    },
    /// `left` where `x < threshold`, `right` otherwise.
    SplitX {
        threshold: f64,
        left: f64,
        right: f64,
    },
}

impl SpeedMap {
    pub fn eval(&self, _t: f64, x: f64, _y: f64) -> f64 {
        match *self {
            SpeedMap::Constant { value } => value,
            SpeedMap::SplitX { threshold, left, right } => {
                if x < threshold {
                    left
                } else {
                    right
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SpeedMap::Constant { value } => value.is_finite() && value >= 0.0,
            SpeedMap::SplitX { left, right, .. } => {
                left.is_finite() && right.is_finite() && left >= 0.0 && right >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("forcing.speed", "speed must be finite and >= 0"))
        }
    }
}

/// Serialisable description of a spatially homogeneous wind schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindSpec {
    Constant {
        wx: f64,
        wy: f64,
    },
    /// `before` for `t <= switch_time`, `after` otherwise.
    Step {
        switch_time: f64,
        before: [f64; 2],
        after: [f64; 2],
    },
    /// Gaussian random walk sampled once per time step of the attached grid.
    RandomWalk {
        initial: [f64; 2],
        std_dev: [f64; 2],
        seed: u64,
        t_min: f64,
        t_max: f64,
        n_t: usize,
    },
    /// Base schedule rotated counter-clockwise by `angle_deg`.
    Rotated {
        angle_deg: f64,
        base: Box<WindSpec>,
    },
}

/// Evaluable wind schedule; random-walk paths are generated once on
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "WindSpec", into = "WindSpec")]
pub struct WindSchedule {
    spec: WindSpec,
    path: Vec<[f64; 2]>,
}

impl From<WindSpec> for WindSchedule {
    fn from(spec: WindSpec) -> Self {
        let path = walk_path(&spec);
        WindSchedule { spec, path }
    }
}

fn walk_path(spec: &WindSpec) -> Vec<[f64; 2]> {
    match spec {
        WindSpec::RandomWalk {
            initial,
            std_dev,
            seed,
            n_t,
            ..
        } => random_walk(*initial, *std_dev, n_t + 1, *seed),
        WindSpec::Rotated { base, .. } => walk_path(base),
        _ => Vec::new(),
    }
}

impl From<WindSchedule> for WindSpec {
    fn from(w: WindSchedule) -> Self {
        w.spec
    }
}

impl WindSchedule {
    pub fn spec(&self) -> &WindSpec {
        &self.spec
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        eval_wind(&self.spec, &self.path, t)
    }

    pub fn rotated(self, angle_deg: f64) -> Self {
        WindSpec::Rotated {
            angle_deg,
            base: Box::new(self.spec),
        }
        .into()
    }
}

fn eval_wind(spec: &WindSpec, path: &[[f64; 2]], t: f64) -> (f64, f64) {
    match spec {
        WindSpec::Constant { wx, wy } => (*wx, *wy),
        WindSpec::Step {
            switch_time,
            before,
            after,
        } => {
            let w = if t <= *switch_time { before } else { after };
            (w[0], w[1])
        }
        WindSpec::RandomWalk { t_min, t_max, n_t, .. } => {
            let dt = (t_max - t_min) / *n_t as f64;
            let k = ((t - t_min) / dt + 1e-9).floor().clamp(0.0, *n_t as f64) as usize;
            let w = path[k];
            (w[0], w[1])
        }
        WindSpec::Rotated { angle_deg, base } => {
            let (wx, wy) = eval_wind(base, path, t);
            let (sin, cos) = angle_deg.to_radians().sin_cos();
            (cos * wx - sin * wy, sin * wx + cos * wy)
        }
    }
}

/// Wind of the synthetic scenario: northerly `(0, 0.4)` up to and including
/// `t = 0.1`, easterly `(0.4, 0)` afterwards.
pub fn synthetic_wind(t: f64) -> (f64, f64) {
    if t <= 0.1 {
        (0.0, 0.4)
    } else {
        (0.4, 0.0)
    }
}

/// Random-walk wind path of the second synthetic scenario.
///
/// Element 0 is `(1e-6, 0.1)`; each further element adds independent normal
/// increments with standard deviations `(0.001, 0.005)`. Draws come from
/// ChaCha8 seeded with `seed` through `SeedableRng::seed_from_u64`, and the
/// normal variates from `rand_distr::Normal`, so sequences are identical on
/// every platform.
pub fn synthetic2_wind_path(n_t: usize, seed: u64) -> Vec<(f64, f64)> {
    random_walk([1e-6, 0.1], [0.001, 0.005], n_t, seed)
        .into_iter()
        .map(|w| (w[0], w[1]))
        .collect()
}

fn random_walk(initial: [f64; 2], std_dev: [f64; 2], len: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = Normal::new(0.0, std_dev[0]).expect("finite std-dev");
    let ny = Normal::new(0.0, std_dev[1]).expect("finite std-dev");
    let mut out = Vec::with_capacity(len);
    let mut w = initial;
    for k in 0..len {
        if k > 0 {
            w[0] += nx.sample(&mut rng);
            w[1] += ny.sample(&mut rng);
        }
        out.push(w);
    }
    out
}

/// Forcing sampled at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    pub s: f64,
    pub wx: f64,
    pub wy: f64,
}

/// Speed and wind over the domain, with both zeroed inside obstructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingField {
    pub speed: SpeedMap,
    pub wind: WindSchedule,
    #[serde(default)]
    pub obstructions: Vec<Rect>,
}

impl ForcingField {
    pub fn new(speed: SpeedMap, wind: impl Into<WindSchedule>, obstructions: Vec<Rect>) -> Self {
        ForcingField {
            speed,
            wind: wind.into(),
            obstructions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.speed.validate()?;
        for r in &self.obstructions {
            if !(r.x_min <= r.x_max && r.y_min <= r.y_max) {
                return Err(Error::invalid(
                    "forcing.obstructions",
                    format!("malformed rectangle {r:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn obstructed(&self, x: f64, y: f64) -> bool {
        self.obstructions.iter().any(|r| r.contains(x, y))
    }

    pub fn speed(&self, t: f64, x: f64, y: f64) -> f64 {
        if self.obstructed(x, y) {
            0.0
        } else {
            self.speed.eval(t, x, y)
        }
    }

    pub fn wind(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        if self.obstructed(x, y) {
            (0.0, 0.0)
        } else {
            self.wind.eval(t)
        }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> Forcing {
        if self.obstructed(x, y) {
            return Forcing {
                s: 0.0,
                wx: 0.0,
                wy: 0.0,
            };
        }
        let (wx, wy) = self.wind.eval(t);
        Forcing {
            s: self.speed.eval(t, x, y),
            wx,
            wy,
        }
    }

    /// Copy of this forcing with the wind rotated by `angle_deg`.
    pub fn with_rotated_wind(&self, angle_deg: f64) -> Self {
        ForcingField {
            speed: self.speed.clone(),
            wind: self.wind.clone().rotated(angle_deg),
            obstructions: self.obstructions.clone(),
        }
    }
}

/// Obstruction of the synthetic scenario (also the first of synthetic2).
pub const OBSTRUCTION_A: Rect = Rect::new(0.0, 0.2, 0.2, 0.8);
pub const OBSTRUCTION_C: Rect = Rect::new(0.7, 0.8, 0.4, 0.5);
pub const OBSTRUCTION_D: Rect = Rect::new(0.7, 0.8, 0.6, 0.7);

/// Named forcing scenarios.
///
/// * `synthetic`: constant speed 0.4, wind switching from north to east at
///   `t = 0.1`, one obstruction.
/// * `synthetic2`: speed 0.25 for `x < 0.5` and 0.15 otherwise, random-walk
///   wind (seeded), three obstructions.
pub fn build_scenario(name: &str, grid: &GridSpec, seed: u64) -> Result<ForcingField> {
    match name {
        "synthetic" => Ok(ForcingField::new(
            SpeedMap::Constant { value: 0.4 },
            WindSpec::Step {
                switch_time: 0.1,
                before: [0.0, 0.4],
                after: [0.4, 0.0],
            },
            vec![OBSTRUCTION_A],
        )),
        "synthetic2" => Ok(ForcingField::new(
            SpeedMap::SplitX {
                threshold: 0.5,
                left: 0.25,
                right: 0.15,
            },
            WindSpec::RandomWalk {
                initial: [1e-6, 0.1],
                std_dev: [0.001, 0.005],
                seed,
                t_min: grid.t_min,
                t_max: grid.t_max,
                n_t: grid.n_t,
            },
            vec![OBSTRUCTION_A, OBSTRUCTION_C, OBSTRUCTION_D],
        )),
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

/// A scenario as stored on disk: grid, forcing and the seed it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub grid: GridSpec,
    pub forcing: ForcingField,
}

impl ScenarioConfig {
    pub fn named(name: &str, grid: GridSpec, seed: u64) -> Result<Self> {
        Ok(ScenarioConfig {
            name: name.to_string(),
            seed,
            forcing: build_scenario(name, &grid, seed)?,
            grid,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.grid.validate()?;
        cfg.forcing.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdfVariant {
    Cone,
    EllipticalCone,
}

/// Parameters of a cone or elliptical-cone initial level-set function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdfSpec {
    pub variant: SdfVariant,
    pub r: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    /// Rotation angle in radians.
    #[serde(default)]
    pub alpha: f64,
    pub center: [f64; 2],
}

fn one() -> f64 {
    1.0
}

impl SdfSpec {
    pub fn cone(center: [f64; 2], r: f64) -> Self {
        SdfSpec {
            variant: SdfVariant::Cone,
            r,
            a: 1.0,
            b: 1.0,
            alpha: 0.0,
            center,
        }
    }

    pub fn elliptical(center: [f64; 2], r: f64, a: f64, b: f64, alpha: f64) -> Self {
        SdfSpec {
            variant: SdfVariant::EllipticalCone,
            r,
            a,
            b,
            alpha,
            center,
        }
    }

    /// Ignition of the synthetic scenarios: a circle of radius 0.1 centred in
    /// the unit square.
    pub fn synthetic_ignition() -> Self {
        Self::cone([0.5, 0.5], 0.1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == SdfVariant::EllipticalCone && !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::invalid(
                "sdf",
                format!("ellipse scales must be positive, got a={}, b={}", self.a, self.b),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.variant {
            SdfVariant::Cone => cone_sdf((x, y), (self.center[0], self.center[1]), self.r),
            SdfVariant::EllipticalCone => elliptical_value(x, y, self),
        }
    }

    pub fn field(&self, grid: &GridSpec) -> ScalarField {
        ScalarField::from_fn(*grid, |x, y| self.eval(x, y))
    }
}

/// `|p - center| - r`: negative inside the circle of radius `r`.
pub fn cone_sdf(p: (f64, f64), center: (f64, f64), r: f64) -> f64 {
    let dx = p.0 - center.0;
    let dy = p.1 - center.1;
    (dx * dx + dy * dy).sqrt() - r
}

pub fn elliptical_cone_sdf(p: (f64, f64), spec: &SdfSpec) -> Result<f64> {
    if !(spec.a > 0.0 && spec.b > 0.0) {
        return Err(Error::invalid(
            "sdf",
            format!("ellipse scales must be positive, got a={}, b={}", spec.a, spec.b),
        ));
    }
    Ok(elliptical_value(p.0, p.1, spec))
}

fn elliptical_value(x: f64, y: f64, spec: &SdfSpec) -> f64 {
    let xb = x - spec.center[0];
    let yb = y - spec.center[1];
    let (sin, cos) = spec.alpha.sin_cos();
    let u = xb * cos + yb * sin;
    let v = xb * sin - yb * cos;
    (u * u / (spec.a * spec.a) + v * v / (spec.b * spec.b)).sqrt() - spec.r
}
