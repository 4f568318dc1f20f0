//! Burned-area agreement and ensemble calibration.

use std::fmt::Write as _;

use ndarray::{Array2, Zip};

use crate::bayes::McEnsemble;
use crate::contour::{extract_zero_level_set, vertices, Polyline};
use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField};

/// Cells with `u < 0` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct BurnedMask {
    pub grid: GridSpec,
    pub cells: Array2<bool>,
}

impl BurnedMask {
    pub fn from_field(u: &ScalarField) -> Self {
        BurnedMask {
            grid: u.grid,
            cells: u.values.mapv(|v| v < 0.0),
        }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }
}

/// Intersection over union of two masks; 1 when both are empty.
pub fn jaccard(a: &BurnedMask, b: &BurnedMask) -> Result<f64> {
    if a.cells.dim() != b.cells.dim() {
        return Err(Error::GridMismatch(format!(
            "masks have shapes {:?} and {:?}",
            a.cells.dim(),
            b.cells.dim()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    Zip::from(&a.cells).and(&b.cells).for_each(|&x, &y| {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    });
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Jaccard index of two surfaces at each shared time index.
pub fn jaccard_series(a: &[ScalarField], b: &[ScalarField]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} time slices", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| jaccard(&BurnedMask::from_field(x), &BurnedMask::from_field(y)))
        .collect()
}

/// Front points observed at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Isochrone {
    pub t: f64,
    pub points: Vec<(f64, f64)>,
}

/// Isochrones ordered by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IsochroneSet {
    pub isochrones: Vec<Isochrone>,
}

impl IsochroneSet {
    /// Groups points by exact timestamp.
    pub fn from_points(points: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let mut set = IsochroneSet::default();
        for (t, x, y) in points {
            match set.isochrones.iter_mut().find(|iso| iso.t == t) {
                Some(iso) => iso.points.push((x, y)),
                None => set.isochrones.push(Isochrone {
                    t,
                    points: vec![(x, y)],
                }),
            }
        }
        set.isochrones.sort_by(|a, b| a.t.total_cmp(&b.t));
        set
    }

    pub fn len(&self) -> usize {
        self.isochrones.iter().map(|i| i.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.isochrones
            .iter()
            .flat_map(|iso| iso.points.iter().map(move |&(x, y)| (iso.t, x, y)))
    }

    /// Time index of each isochrone on `grid`, requiring a match within half
    /// a step and every point inside the spatial bounds.
    pub fn align(&self, grid: &GridSpec) -> Result<Vec<usize>> {
        let dt = grid.dt();
        self.isochrones
            .iter()
            .map(|iso| {
                let n = ((iso.t - grid.t_min) / dt).round();
                if n < 0.0 || n > grid.n_t as f64 || (iso.t - grid.t(n as usize)).abs() > 0.5 * dt {
                    return Err(Error::invalid(
                        "isochrone",
                        format!("t={} does not match a grid time", iso.t),
                    ));
                }
                for &(x, y) in &iso.points {
                    if !grid.contains_point(x, y) {
                        return Err(Error::OutOfBounds { t: iso.t, x, y });
                    }
                }
                Ok(n as usize)
            })
            .collect()
    }
}

/// Predictive band of an ensemble at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSlice {
    pub t: f64,
    /// Cells where the burned fraction lies strictly between the tails.
    pub band: Array2<bool>,
    /// Zero-level-set of the member-mean surface.
    pub mean_front: Vec<Polyline>,
}

impl BandSlice {
    pub fn area(&self) -> usize {
        self.band.iter().filter(|&&b| b).count()
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", format!("must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Band at time index `n`: cells with `(1 - level)/2 < p < 1 - (1 - level)/2`.
pub fn band_at(ensemble: &McEnsemble, n: usize, level: f64) -> Array2<bool> {
    let tail = 0.5 * (1.0 - level);
    ensemble.burned_fraction(n).mapv(|p| p > tail && p < 1.0 - tail)
}

pub fn predictive_band(ensemble: &McEnsemble, level: f64) -> Result<Vec<BandSlice>> {
    check_level(level)?;
    if ensemble.n_mc() < 2 {
        return Err(Error::invalid(
            "ensemble",
            "a predictive band needs at least two members",
        ));
    }
    Ok((0..ensemble.n_times())
        .map(|n| BandSlice {
            t: ensemble.grid.t(n),
            band: band_at(ensemble, n, level),
            mean_front: extract_zero_level_set(&ensemble.mean_field(n)),
        })
        .collect())
}

/// Coverage of truth points by the band, per isochrone and averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// `(t, fraction covered, points)` per isochrone.
    pub per_time: Vec<(f64, f64, usize)>,
    pub mean: f64,
}

/// A point counts as covered when its nearest cell (ties toward the lower
/// index) is in the band or shares an edge with a band cell.
pub fn coverage(ensemble: &McEnsemble, truth: &IsochroneSet, level: f64) -> Result<CoverageReport> {
    check_level(level)?;
    let grid = ensemble.grid;
    let idx = truth.align(&grid)?;
    let mut per_time = Vec::new();
    for (iso, &n) in truth.isochrones.iter().zip(&idx) {
        if iso.points.is_empty() {
            continue;
        }
        let band = band_at(ensemble, n, level);
        let near_band = |i: usize, j: usize| {
            let mut hit = band[[i, j]];
            hit |= i > 0 && band[[i - 1, j]];
            hit |= i + 1 < grid.n_x && band[[i + 1, j]];
            hit |= j > 0 && band[[i, j - 1]];
            hit |= j + 1 < grid.n_y && band[[i, j + 1]];
            hit
        };
        let covered = iso
            .points
            .iter()
            .filter(|&&(x, y)| near_band(grid.nearest_i(x), grid.nearest_j(y)))
            .count();
        per_time.push((iso.t, covered as f64 / iso.points.len() as f64, iso.points.len()));
    }
    let mean = if per_time.is_empty() {
        0.0
    } else {
        per_time.iter().map(|p| p.1).sum::<f64>() / per_time.len() as f64
    };
    Ok(CoverageReport { per_time, mean })
}

/// Largest distance from a vertex of either front to the nearest vertex of
/// the other. Infinite when exactly one front is empty.
pub fn front_displacement(a: &[Polyline], b: &[Polyline]) -> f64 {
    let va: Vec<(f64, f64)> = vertices(a).collect();
    let vb: Vec<(f64, f64)> = vertices(b).collect();
    match (va.is_empty(), vb.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let one_way = |p: &[(f64, f64)], q: &[(f64, f64)]| {
        p.iter()
            .map(|&(x, y)| {
                q.iter()
                    .map(|&(u, v)| (x - u).hypot(y - v))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(&va, &vb).max(one_way(&vb, &va))
}

/// One row of the metrics report; unavailable comparisons stay empty.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsRow {
    pub t: f64,
    pub jaccard_pinn_vs_lsm: Option<f64>,
    pub jaccard_pinn_vs_truth: Option<f64>,
    pub jaccard_lsm_vs_truth: Option<f64>,
    pub coverage: Option<f64>,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("t,jaccard_pinn_vs_lsm,jaccard_pinn_vs_truth,jaccard_lsm_vs_truth,coverage\n");
    let f = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t,
            f(r.jaccard_pinn_vs_lsm),
            f(r.jaccard_pinn_vs_truth),
            f(r.jaccard_lsm_vs_truth),
            f(r.coverage)
        )
        .unwrap();
    }
    out
}
