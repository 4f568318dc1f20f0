//! Experiment configuration and the end-to-end commands built on it.
//!
//! A run is described by one TOML file. Relative paths inside it are
//! resolved against the working directory. Every command writes into a fresh
//! output directory and finishes with `manifest.toml`, which echoes the
//! resolved configuration so the run can be repeated byte-for-byte.
//!
//! Output layout:
//!
//! | command      | files                                                             |
//! |--------------|-------------------------------------------------------------------|
//! | simulate-lsm | `snapshots/snap_NNN.txt`, `fronts.csv`                            |
//! | train        | `checkpoint.txt`, `checkpoints/epoch_NNNNNN.txt`, `train_log.csv`, `predictions/` |
//! | predict      | `predictions/snap_NNN.txt` or `predictions/{mean,burned_fraction}_NNN.txt` |
//! | evaluate     | `metrics.csv`                                                     |
//!
//! Runs with synthetic observations also write `observations.csv` and the
//! perturbed truth run under `truth/`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bayes::{posterior_predictive, McEnsemble, PriorConfig, VariationalParams, RHO_INIT};
use crate::contour::vertices;
use crate::error::{Error, Result};
use crate::field::{build_scenario, ForcingField, GridSpec, ScalarField, ScenarioConfig, SdfSpec};
use crate::io::{self, Checkpoint};
use crate::levelset::{run_simulation, ReinitConfig, SimulationResult};
use crate::metrics::{coverage, jaccard_series, metrics_csv, IsochroneSet, MetricsRow};
use crate::net::{Activation, NetworkParams, NetworkShape};
use crate::pinn::{build_observation_dataset, predict_fields, Datasets, LikelihoodConfig, Variant};
use crate::train::{train_bpinn_with, train_pinn_with, Preset, TrainConfig, TrainLog};

/// An observed front point `(t, x, y)`.
pub type Point = (f64, f64, f64);

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Either a named built-in scenario or a scenario TOML written by
/// `make-scenario`. Exactly one must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub bayesian: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Widths of the two hidden layers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lik: Option<LikelihoodConfig>,
    /// Extra interior draws for the initial set; defaults to `n_x * n_y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversample_interior: Option<usize>,
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub keep_best: bool,
    #[serde(default = "one")]
    pub mc_samples: usize,
    #[serde(default = "rho_init")]
    pub rho_init: f64,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub log_every: usize,
}

fn default_preset() -> Preset {
    Preset::Synthetic
}

fn default_variant() -> Variant {
    Variant::PinnF
}

fn one() -> usize {
    1
}

fn rho_init() -> f64 {
    RHO_INIT
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            preset: default_preset(),
            variant: default_variant(),
            bayesian: false,
            epochs: None,
            lr: None,
            hidden: None,
            activation: None,
            lik: None,
            oversample_interior: None,
            checkpoint_every: 0,
            keep_best: false,
            mc_samples: 1,
            rho_init: RHO_INIT,
            prior: PriorConfig::default(),
            log_every: 0,
        }
    }
}

/// Front observations used by the assimilating variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationSource {
    /// A `t,x,y` isochrone CSV.
    File { path: PathBuf },
    /// Points sampled from the fronts of a level-set run whose wind is
    /// rotated by `wind_rotation_deg`, optionally jittered.
    Synthetic {
        times: Vec<f64>,
        /// Points kept per time, spread evenly along the front; zero keeps all.
        #[serde(default)]
        points_per_time: usize,
        #[serde(default)]
        jitter: f64,
        #[serde(default)]
        wind_rotation_deg: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// Ensemble size for Bayesian checkpoints.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_mc() -> usize {
    100
}

fn default_level() -> f64 {
    0.95
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            mc_samples: default_mc(),
            level: default_level(),
        }
    }
}

/// Affine map from the scaled domain to display units:
/// `physical = origin + extent * scaled`. Not used in any computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplayMapping {
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub unit: String,
}

impl Default for DisplayMapping {
    fn default() -> Self {
        DisplayMapping {
            origin: [0.0, 0.0],
            extent: [1.0, 1.0],
            unit: "scaled".into(),
        }
    }
}

impl DisplayMapping {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.origin[0] + self.extent[0] * x, self.origin[1] + self.extent[1] * y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Also write PGM heatmaps next to every grid file.
    #[serde(default)]
    pub heatmaps: bool,
    pub scenario: ScenarioRef,
    /// Overrides the scenario file grid and the preset resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "SdfSpec::synthetic_ignition")]
    pub sdf: SdfSpec,
    #[serde(default = "ReinitConfig::disabled")]
    pub reinit: ReinitConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<ObservationSource>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub display: DisplayMapping,
}

impl ExperimentConfig {
    /// Defaults for a named scenario writing to `output`.
    pub fn for_scenario(name: &str, output: impl Into<PathBuf>, seed: u64) -> Self {
        ExperimentConfig {
            seed,
            output: output.into(),
            heatmaps: false,
            scenario: ScenarioRef {
                name: Some(name.into()),
                file: None,
            },
            grid: None,
            sdf: SdfSpec::synthetic_ignition(),
            reinit: ReinitConfig::disabled(),
            train: TrainSection::default(),
            observations: None,
            evaluation: EvaluationSection::default(),
            display: DisplayMapping::default(),
        }
    }

    /// Parses TOML; syntax and type errors carry the line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks the configuration and derives everything a command needs.
    pub fn resolve(&self) -> Result<Resolved> {
        let scenario = match (&self.scenario.name, &self.scenario.file) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::invalid("scenario", "set exactly one of `name` and `file`"))
            }
            (None, Some(path)) => Some(ScenarioConfig::from_toml(&io::read_text(path)?)?),
            (Some(_), None) => None,
        };
        let pv = self.train.preset.values();
        let grid = match (&self.grid, &scenario) {
            (Some(g), _) => *g,
            (None, Some(s)) => s.grid,
            (None, None) => GridSpec::unit(pv.n_x, pv.n_y, pv.n_t),
        };
        grid.validate_full()?;
        let forcing = match (&scenario, &self.scenario.name) {
            (Some(s), _) => s.forcing.clone(),
            (None, Some(name)) => build_scenario(name, &grid, self.seed)?,
            (None, None) => unreachable!("checked above"),
        };
        forcing.validate()?;
        self.sdf.validate()?;
        self.reinit.validate()?;

        let t = &self.train;
        let mut train = TrainConfig::from_preset(t.preset, t.variant, t.bayesian, self.seed);
        if let Some(e) = t.epochs {
            train.epochs = e;
        }
        if let Some(lr) = t.lr {
            train.lr = lr;
        }
        if let Some([h1, h2]) = t.hidden {
            train.shape = NetworkShape::new(h1, h2, train.shape.activation);
        }
        if let Some(a) = t.activation {
            train.shape.activation = a;
        }
        if let Some(lik) = t.lik {
            train.lik = lik;
        }
        train.checkpoint_every = t.checkpoint_every;
        train.keep_best = t.keep_best;
        train.mc_samples = t.mc_samples;
        train.rho_init = t.rho_init;
        train.log_every = t.log_every;
        train.validate()?;
        if t.bayesian {
            t.prior.validate()?;
        }
        if t.variant.uses_observation() && self.observations.is_none() {
            return Err(Error::invalid(
                "observations",
                format!(
                    "variant {} needs an observation file or synthetic observations",
                    t.variant.name()
                ),
            ));
        }
        match &self.observations {
            Some(ObservationSource::File { path }) => {
                if !path.is_file() {
                    return Err(Error::invalid(
                        "observations.path",
                        format!("{} does not exist", path.display()),
                    ));
                }
            }
            Some(ObservationSource::Synthetic { times, jitter, .. }) => {
                if times.is_empty() {
                    return Err(Error::invalid("observations.times", "needs at least one time"));
                }
                if !(*jitter >= 0.0 && jitter.is_finite()) {
                    return Err(Error::invalid("observations.jitter", "must be non-negative"));
                }
            }
            None => {}
        }
        let e = &self.evaluation;
        if e.mc_samples < 2 {
            return Err(Error::invalid("evaluation.mc_samples", "must be >= 2"));
        }
        if !(e.level > 0.0 && e.level < 1.0) {
            return Err(Error::invalid("evaluation.level", "must lie in (0, 1)"));
        }
        Ok(Resolved {
            grid,
            forcing,
            sdf: self.sdf,
            reinit: self.reinit,
            oversample_interior: t.oversample_interior.unwrap_or(grid.n_x * grid.n_y),
            train,
            prior: t.prior,
        })
    }
}

/// A validated configuration with the scenario materialised.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: GridSpec,
    pub forcing: ForcingField,
    pub sdf: SdfSpec,
    pub reinit: ReinitConfig,
    pub oversample_interior: usize,
    pub train: TrainConfig,
    pub prior: PriorConfig,
}

impl Resolved {
    pub fn reference_run(&self) -> Result<SimulationResult> {
        run_simulation(&self.sdf.field(&self.grid), &self.forcing, &self.grid, &self.reinit)
    }

    /// Initial, collocation and forecast sets, plus observations if given.
    pub fn datasets(&self, observations: Option<&[(f64, f64, f64)]>) -> Result<Datasets> {
        let ds = Datasets::build(
            &self.sdf,
            &self.grid,
            &self.forcing,
            self.oversample_interior,
            self.train.seed,
        )?;
        Ok(match observations {
            Some(points) => ds.with_observations(build_observation_dataset(points, &self.forcing)),
            None => ds,
        })
    }

    /// Level-set run under the wind rotated by `angle_deg`.
    pub fn perturbed_truth(&self, angle_deg: f64) -> Result<SimulationResult> {
        let forcing = self.forcing.with_rotated_wind(angle_deg);
        run_simulation(&self.sdf.field(&self.grid), &forcing, &self.grid, &self.reinit)
    }
}

/// Front vertices of `truth` at the grid times nearest to `times`, thinned
/// evenly to `per_time` points and jittered with `N(0, jitter^2)` noise.
/// Jittered points are clamped to the domain.
pub fn sample_observations(
    truth: &SimulationResult,
    times: &[f64],
    per_time: usize,
    jitter: f64,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    let g = &truth.grid;
    let noise = Normal::new(0.0, jitter).map_err(|e| Error::invalid("observations.jitter", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &t in times {
        let n = ((t - g.t_min) / g.dt()).round();
        if !(0.0..=g.n_t as f64).contains(&n) {
            return Err(Error::invalid(
                "observations.times",
                format!("t={t} lies outside the grid"),
            ));
        }
        let n = n as usize;
        let pts: Vec<(f64, f64)> = vertices(&truth.fronts[n]).collect();
        let keep: Vec<(f64, f64)> = if per_time == 0 || per_time >= pts.len() {
            pts
        } else {
            (0..per_time).map(|k| pts[k * pts.len() / per_time]).collect()
        };
        for (x, y) in keep {
            let (mut x, mut y) = (x, y);
            if jitter > 0.0 {
                x = (x + noise.sample(&mut rng)).clamp(g.x_min, g.x_max);
                y = (y + noise.sample(&mut rng)).clamp(g.y_min, g.y_max);
            }
            out.push((g.t(n), x, y));
        }
    }
    Ok(out)
}

/// Creates `dir`, refusing to reuse a non-empty directory unless `force`.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(Error::invalid(
                "output",
                format!(
                    "{} already exists and is not empty (pass --force to overwrite)",
                    dir.display()
                ),
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    preset: &'a str,
    files: Vec<String>,
    display: &'a DisplayMapping,
    config: &'a ExperimentConfig,
}

fn write_manifest(cfg: &ExperimentConfig, command: &str, files: &[String]) -> Result<()> {
    let mut files = files.to_vec();
    files.sort();
    let m = Manifest {
        command,
        version: VERSION,
        seed: cfg.seed,
        preset: cfg.train.preset.name(),
        files,
        display: &cfg.display,
        config: cfg,
    };
    let text = toml::to_string(&m).map_err(|e| Error::Config(e.to_string()))?;
    io::write_text(&cfg.output.join("manifest.toml"), &text)
}

/// Records written files relative to the output directory.
struct Writer<'a> {
    root: &'a Path,
    heatmaps: bool,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Writer {
            root: &cfg.output,
            heatmaps: cfg.heatmaps,
            files: Vec::new(),
        }
    }

    fn text(&mut self, rel: &str, text: &str) -> Result<()> {
        io::write_text(&self.root.join(rel), text)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn grids(&mut self, dir: &str, stem: &str, grid: &GridSpec, fields: &[ScalarField]) -> Result<()> {
        for (n, u) in fields.iter().enumerate() {
            self.text(&format!("{dir}/{stem}_{n:03}.txt"), &io::format_snapshot(grid.t(n), u))?;
            if self.heatmaps {
                self.text(&format!("{dir}/{stem}_{n:03}.pgm"), &io::pgm(u))?;
            }
        }
        Ok(())
    }

    fn simulation(&mut self, prefix: &str, sim: &SimulationResult) -> Result<()> {
        self.grids(&format!("{prefix}snapshots"), "snap", &sim.grid, &sim.snapshots)?;
        let times: Vec<f64> = sim.times().collect();
        self.text(&format!("{prefix}fronts.csv"), &io::fronts_csv(&times, &sim.fronts))
    }
}

pub fn simulate_lsm(cfg: &ExperimentConfig, force: bool) -> Result<SimulationResult> {
    let r = cfg.resolve()?;
    let sim = r.reference_run()?;
    prepare_output(&cfg.output, force)?;
    let mut w = Writer::new(cfg);
    w.simulation("", &sim)?;
    let files = w.files;
    write_manifest(cfg, "simulate-lsm", &files)?;
    Ok(sim)
}

/// Trained parameters of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Trained {
    Point(NetworkParams),
    Variational(VariationalParams),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Trained,
    pub log: TrainLog,
    pub observations: Option<Vec<(f64, f64, f64)>>,
    pub truth: Option<SimulationResult>,
}

/// Observations named by the configuration and, for synthetic ones, the
/// perturbed truth run they were drawn from.
pub fn observations_for(
    cfg: &ExperimentConfig,
    r: &Resolved,
) -> Result<(Option<Vec<Point>>, Option<SimulationResult>)> {
    match &cfg.observations {
        None => Ok((None, None)),
        Some(ObservationSource::File { path }) => {
            let set = io::load_isochrones(path)?;
            set.align(&r.grid)?;
            Ok((Some(set.points().collect()), None))
        }
        Some(ObservationSource::Synthetic {
            times,
            points_per_time,
            jitter,
            wind_rotation_deg,
            seed,
        }) => {
            let truth = r.perturbed_truth(*wind_rotation_deg)?;
            let obs = sample_observations(&truth, times, *points_per_time, *jitter, *seed)?;
            Ok((Some(obs), Some(truth)))
        }
    }
}

fn checkpoint_text(model: &Trained, prior: &PriorConfig) -> String {
    match model {
        Trained::Point(p) => io::format_params(p),
        Trained::Variational(phi) => io::format_variational(phi, prior),
    }
}

pub fn train(cfg: &ExperimentConfig, force: bool) -> Result<TrainOutcome> {
    let r = cfg.resolve()?;
    let (observations, truth) = observations_for(cfg, &r)?;
    let obs_used = if r.train.model.variant.uses_observation() {
        observations.as_deref()
    } else {
        None
    };
    let ds = r.datasets(obs_used)?;
    prepare_output(&cfg.output, force)?;
    let mut w = Writer::new(cfg);
    if let Some(obs) = &observations {
        w.text(
            "observations.csv",
            &io::isochrones_csv(&IsochroneSet::from_points(obs.iter().copied())),
        )?;
    }
    if let Some(truth) = &truth {
        w.simulation("truth/", truth)?;
    }

    let every = r.train.checkpoint_every;
    let mut periodic: Vec<(usize, String)> = Vec::new();
    let mut keep = |epoch: usize, text: String| {
        if every > 0 && epoch.is_multiple_of(every) {
            periodic.push((epoch, text));
        }
    };
    let (model, log) = if r.train.model.bayesian {
        let prior = r.prior;
        let (phi, log) = train_bpinn_with(&ds, &r.train, &prior, None, &mut |e, phi| {
            keep(e, io::format_variational(phi, &prior));
            Ok(())
        })?;
        (Trained::Variational(phi), log)
    } else {
        let (p, log) = train_pinn_with(&ds, &r.train, None, &mut |e, p| {
            keep(e, io::format_params(p));
            Ok(())
        })?;
        (Trained::Point(p), log)
    };
    for (e, text) in &periodic {
        w.text(&format!("checkpoints/epoch_{e:06}.txt"), text)?;
    }
    w.text("checkpoint.txt", &checkpoint_text(&model, &r.prior))?;
    w.text("train_log.csv", &log.to_csv())?;
    write_predictions(&mut w, cfg, &r, &model)?;
    let files = w.files;
    write_manifest(cfg, "train", &files)?;
    Ok(TrainOutcome {
        model,
        log,
        observations,
        truth,
    })
}

fn ensemble_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.wrapping_add(2)
}

fn write_predictions(w: &mut Writer<'_>, cfg: &ExperimentConfig, r: &Resolved, model: &Trained) -> Result<()> {
    match model {
        Trained::Point(p) => {
            let fields = predict_fields(p, &r.grid, &r.forcing);
            w.grids("predictions", "snap", &r.grid, &fields)
        }
        Trained::Variational(phi) => {
            let ens = posterior_predictive(phi, &r.grid, &r.forcing, cfg.evaluation.mc_samples, ensemble_seed(cfg))?;
            let means: Vec<ScalarField> = (0..ens.n_times()).map(|n| ens.mean_field(n)).collect();
            let fractions: Vec<ScalarField> = (0..ens.n_times())
                .map(|n| ScalarField {
                    grid: r.grid,
                    values: ens.burned_fraction(n),
                })
                .collect();
            w.grids("predictions", "mean", &r.grid, &means)?;
            w.grids("predictions", "burned_fraction", &r.grid, &fractions)
        }
    }
}

fn load_model(path: &Path, r: &Resolved) -> Result<Trained> {
    let model = match io::read_checkpoint(path)? {
        Checkpoint::Point(p) => Trained::Point(p),
        Checkpoint::Variational(phi, _) => Trained::Variational(phi),
    };
    let shape = match &model {
        Trained::Point(p) => *p.shape(),
        Trained::Variational(phi) => *phi.mu.shape(),
    };
    if shape != r.train.shape {
        log::warn!(
            "checkpoint shape {:?} differs from the configured {:?}; using the checkpoint",
            shape.layer_dims(),
            r.train.shape.layer_dims()
        );
    }
    Ok(model)
}

pub fn predict(cfg: &ExperimentConfig, checkpoint: &Path, force: bool) -> Result<()> {
    let r = cfg.resolve()?;
    let model = load_model(checkpoint, &r)?;
    prepare_output(&cfg.output, force)?;
    let mut w = Writer::new(cfg);
    write_predictions(&mut w, cfg, &r, &model)?;
    let files = w.files;
    write_manifest(cfg, "predict", &files)
}

/// Reads `snap_NNN.txt` files from `dir` (or `dir/snapshots`) in index order.
pub fn read_snapshot_dir(dir: &Path) -> Result<Vec<ScalarField>> {
    let nested = dir.join("snapshots");
    let dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("snap_") && n.ends_with(".txt"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::io(
            &dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no snap_NNN.txt files"),
        ));
    }
    paths.iter().map(|p| io::read_snapshot(p).map(|(_, u)| u)).collect()
}

/// Sources for [`evaluate`]; each one is optional.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs<'a> {
    pub checkpoint: Option<&'a Path>,
    /// Level-set reference directory.
    pub reference: Option<&'a Path>,
    /// Truth run directory.
    pub truth: Option<&'a Path>,
    /// Truth front points for coverage.
    pub isochrones: Option<&'a Path>,
}

fn check_series(name: &str, fields: &[ScalarField], grid: &GridSpec) -> Result<()> {
    if fields.len() != grid.n_t + 1 || fields.iter().any(|f| !f.grid.same_space(grid)) {
        return Err(Error::GridMismatch(format!(
            "{name} has {} slices of {:?}, expected {} slices of {}x{}",
            fields.len(),
            fields.first().map(|f| f.values.dim()),
            grid.n_t + 1,
            grid.n_x,
            grid.n_y
        )));
    }
    Ok(())
}

/// Per-time metrics of a checkpoint against a level-set reference and/or a
/// truth run, with ensemble coverage of truth front points for Bayesian
/// checkpoints. Bayesian Jaccard indices use the ensemble mean surface.
pub fn evaluate_in_memory(
    cfg: &ExperimentConfig,
    model: Option<&Trained>,
    reference: Option<&[ScalarField]>,
    truth: Option<&[ScalarField]>,
    isochrones: Option<&IsochroneSet>,
) -> Result<Vec<MetricsRow>> {
    let r = cfg.resolve()?;
    let g = r.grid;
    let mut ensemble: Option<McEnsemble> = None;
    let prediction: Option<Vec<ScalarField>> = match model {
        None => None,
        Some(Trained::Point(p)) => Some(predict_fields(p, &g, &r.forcing)),
        Some(Trained::Variational(phi)) => {
            let ens = posterior_predictive(phi, &g, &r.forcing, cfg.evaluation.mc_samples, ensemble_seed(cfg))?;
            let means = (0..ens.n_times()).map(|n| ens.mean_field(n)).collect();
            ensemble = Some(ens);
            Some(means)
        }
    };
    for (name, s) in [("reference", reference), ("truth", truth)] {
        if let Some(s) = s {
            check_series(name, s, &g)?;
        }
    }
    let series = |a: Option<&[ScalarField]>, b: Option<&[ScalarField]>| -> Result<Option<Vec<f64>>> {
        match (a, b) {
            (Some(a), Some(b)) => jaccard_series(a, b).map(Some),
            _ => Ok(None),
        }
    };
    let pred = prediction.as_deref();
    let j_ref = series(pred, reference)?;
    let j_truth = series(pred, truth)?;
    let j_ref_truth = series(reference, truth)?;
    let mut cov = vec![None; g.n_t + 1];
    if let (Some(ens), Some(iso)) = (&ensemble, isochrones) {
        let idx = iso.align(&g)?;
        let report = coverage(ens, iso, cfg.evaluation.level)?;
        for (n, (_, frac, _)) in idx.into_iter().zip(report.per_time) {
            cov[n] = Some(frac);
        }
    }
    Ok((0..=g.n_t)
        .map(|n| MetricsRow {
            t: g.t(n),
            jaccard_pinn_vs_lsm: j_ref.as_ref().map(|v| v[n]),
            jaccard_pinn_vs_truth: j_truth.as_ref().map(|v| v[n]),
            jaccard_lsm_vs_truth: j_ref_truth.as_ref().map(|v| v[n]),
            coverage: cov[n],
        })
        .collect())
}

pub fn evaluate(cfg: &ExperimentConfig, inputs: &EvalInputs<'_>, force: bool) -> Result<Vec<MetricsRow>> {
    let r = cfg.resolve()?;
    let model = inputs.checkpoint.map(|p| load_model(p, &r)).transpose()?;
    let reference = inputs.reference.map(read_snapshot_dir).transpose()?;
    let truth = inputs.truth.map(read_snapshot_dir).transpose()?;
    let iso = inputs.isochrones.map(io::load_isochrones).transpose()?;
    let rows = evaluate_in_memory(
        cfg,
        model.as_ref(),
        reference.as_deref(),
        truth.as_deref(),
        iso.as_ref(),
    )?;
    prepare_output(&cfg.output, force)?;
    let mut w = Writer::new(cfg);
    w.text("metrics.csv", &metrics_csv(&rows))?;
    let files = w.files;
    write_manifest(cfg, "evaluate", &files)?;
    Ok(rows)
}

/// Writes a named scenario as TOML to `path`.
pub fn make_scenario(name: &str, grid: GridSpec, seed: u64, path: &Path, force: bool) -> Result<ScenarioConfig> {
    grid.validate_full()?;
    let sc = ScenarioConfig::named(name, grid, seed)?;
    if path.exists() && !force {
        return Err(Error::invalid(
            "output",
            format!("{} already exists (pass --force to overwrite)", path.display()),
        ));
    }
    io::write_text(path, &sc.to_toml()?)?;
    Ok(sc)
}
