//! Variational Bayes for the network weights.
//!
//! The posterior is a fully factorised Gaussian with standard deviations
//! `sigma = softplus(rho)`. Each weight has a spike-and-slab prior, a
//! two-component zero-mean Gaussian mixture. Training minimises a
//! single-sample reparameterised estimate of the negative ELBO,
//! `ln q(theta) - ln p(D | theta) - ln p(theta)`, at
//! `theta = mu + sigma * eps`.
//!
//! Noise comes from ChaCha8 seeded per call, so estimates and ensembles are
//! reproducible from their seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ForcingField, GridSpec, ScalarField};
use crate::net::{BatchEngine, NetworkParams};
use crate::pinn::{log_likelihood_and_gradient, predict_fields, Datasets, LikelihoodConfig, ModelConfig, TermValues};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Initial pre-scale value, `softplus(-3) ~ 0.0486`.
pub const RHO_INIT: f64 = -3.0;

/// `ln(1 + e^x)` without overflow, floored at the smallest positive normal
/// so that `sigma > 0` for every finite `rho`.
pub fn softplus(x: f64) -> f64 {
    (x.max(0.0) + (-x.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

/// Derivative of [`softplus`], the logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub mu: NetworkParams,
    pub rho: NetworkParams,
}

impl VariationalParams {
    /// Means from `mu`, every pre-scale set to `rho`.
    pub fn new(mu: NetworkParams, rho: f64) -> Self {
        let mut r = NetworkParams::zeros(*mu.shape());
        r.as_mut_slice().fill(rho);
        VariationalParams { mu, rho: r }
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.as_slice().iter().map(|&r| softplus(r)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite() && self.rho.is_finite()
    }
}

/// Spike-and-slab mixture `mix * N(0, sigma1^2) + (1 - mix) * N(0, sigma2^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub mix: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            sigma1: 1.0,
            sigma2: (-6.0f64).exp(),
            mix: 0.5,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::invalid("prior", "sigma1 and sigma2 must be positive"));
        }
        if !(self.mix > 0.0 && self.mix < 1.0) {
            return Err(Error::invalid(
                "prior.mix",
                format!("must lie in (0, 1), got {}", self.mix),
            ));
        }
        Ok(())
    }

    /// Log-density of one weight and its derivative.
    pub fn log_density(&self, theta: f64) -> (f64, f64) {
        let comp = |w: f64, s: f64| {
            let z = theta / s;
            w.ln() - HALF_LN_2PI - s.ln() - 0.5 * z * z
        };
        let l1 = comp(self.mix, self.sigma1);
        let l2 = comp(1.0 - self.mix, self.sigma2);
        let m = l1.max(l2);
        let (e1, e2) = ((l1 - m).exp(), (l2 - m).exp());
        let value = m + (e1 + e2).ln();
        // responsibilities weight the component scores
        let (r1, r2) = (e1 / (e1 + e2), e2 / (e1 + e2));
        let d = -theta * (r1 / (self.sigma1 * self.sigma1) + r2 / (self.sigma2 * self.sigma2));
        (value, d)
    }
}

/// Draw `theta = mu + softplus(rho) * eps`; also returns `eps`.
pub fn sample_params(phi: &VariationalParams, seed: u64) -> (NetworkParams, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(phi, &mut rng)
}

fn sample_with(phi: &VariationalParams, rng: &mut ChaCha8Rng) -> (NetworkParams, Vec<f64>) {
    let eps: Vec<f64> = (0..phi.mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut theta = phi.mu.clone();
    for ((t, &r), &e) in theta.as_mut_slice().iter_mut().zip(phi.rho.as_slice()).zip(&eps) {
        *t += softplus(r) * e;
    }
    (theta, eps)
}

pub fn log_q(theta: &NetworkParams, phi: &VariationalParams) -> f64 {
    log_q_slice(theta.as_slice(), phi.mu.as_slice(), phi.rho.as_slice())
}

fn log_q_slice(theta: &[f64], mu: &[f64], rho: &[f64]) -> f64 {
    theta
        .iter()
        .zip(mu)
        .zip(rho)
        .map(|((&t, &m), &r)| {
            let s = softplus(r);
            let z = (t - m) / s;
            -HALF_LN_2PI - s.ln() - 0.5 * z * z
        })
        .sum()
}

pub fn log_prior(theta: &NetworkParams, prior: &PriorConfig) -> f64 {
    theta.as_slice().iter().map(|&t| prior.log_density(t).0).sum()
}

/// Components of one negative-ELBO estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElboEstimate {
    pub neg_elbo: f64,
    pub log_q: f64,
    pub log_prior: f64,
    /// Mean log-likelihood terms over the drawn samples.
    pub likelihood: TermValues,
}

/// Negative-ELBO estimate over flat parameter vectors, averaged over
/// `samples` reparameterised draws. `log_lik` returns the data
/// log-likelihood and its gradient at a parameter vector. Gradients are
/// written into `grad_mu` and `grad_rho` (overwriting them).
#[allow(clippy::too_many_arguments)]
pub fn neg_elbo_core<F>(
    mu: &[f64],
    rho: &[f64],
    prior: &PriorConfig,
    rng: &mut ChaCha8Rng,
    samples: usize,
    grad_mu: &mut [f64],
    grad_rho: &mut [f64],
    mut log_lik: F,
) -> Result<(f64, f64, f64, TermValues)>
where
    F: FnMut(&[f64]) -> Result<(TermValues, Vec<f64>)>,
{
    let n = mu.len();
    let samples = samples.max(1);
    grad_mu.fill(0.0);
    grad_rho.fill(0.0);
    let (mut lq, mut lp) = (0.0, 0.0);
    let mut lik = TermValues::default();
    let w = 1.0 / samples as f64;
    let mut theta = vec![0.0; n];
    let mut eps = vec![0.0; n];
    for _ in 0..samples {
        for k in 0..n {
            eps[k] = rng.sample(StandardNormal);
            theta[k] = mu[k] + softplus(rho[k]) * eps[k];
        }
        let (terms, g_lik) = log_lik(&theta)?;
        lq += w * log_q_slice(&theta, mu, rho);
        lik.initial += w * terms.initial;
        lik.physics += w * terms.physics;
        lik.forecast += w * terms.forecast;
        lik.observation += w * terms.observation;
        for k in 0..n {
            let (p, dp) = prior.log_density(theta[k]);
            lp += w * p;
            let r = rho[k];
            let (s, ds) = (softplus(r), sigmoid(r));
            // d/dtheta of (-ln p(D|theta) - ln p(theta)); ln q contributes
            // only through sigma once theta - mu = sigma * eps is substituted
            let g = -g_lik[k] - dp;
            grad_mu[k] += w * g;
            grad_rho[k] += w * (g * eps[k] * ds - ds / s);
        }
    }
    Ok((lq - lik.total() - lp, lq, lp, lik))
}

/// Single- or multi-sample negative-ELBO estimate with its gradient with
/// respect to `(mu, rho)`.
#[allow(clippy::too_many_arguments)]
pub fn elbo_estimate(
    phi: &VariationalParams,
    datasets: &Datasets,
    cfg: &ModelConfig,
    lik: &LikelihoodConfig,
    prior: &PriorConfig,
    seed: u64,
    samples: usize,
    engine: &mut BatchEngine,
) -> Result<(ElboEstimate, VariationalParams)> {
    prior.validate()?;
    let shape = *phi.mu.shape();
    let mut grad = VariationalParams {
        mu: NetworkParams::zeros(shape),
        rho: NetworkParams::zeros(shape),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (neg_elbo, lq, lp, terms) = neg_elbo_core(
        phi.mu.as_slice(),
        phi.rho.as_slice(),
        prior,
        &mut rng,
        samples,
        grad.mu.as_mut_slice(),
        grad.rho.as_mut_slice(),
        |theta| {
            let params = NetworkParams::from_vec(shape, theta.to_vec())?;
            let (terms, g) = log_likelihood_and_gradient(&params, datasets, cfg, lik, engine)?;
            Ok((terms, g.into_vec()))
        },
    )?;
    Ok((
        ElboEstimate {
            neg_elbo,
            log_q: lq,
            log_prior: lp,
            likelihood: terms,
        },
        grad,
    ))
}

/// Network surfaces of `n_mc` posterior draws at every grid time index.
#[derive(Debug, Clone)]
pub struct McEnsemble {
    pub grid: GridSpec,
    /// `members[m][n]` is member `m` at time index `n`.
    pub members: Vec<Vec<ScalarField>>,
}

impl McEnsemble {
    pub fn new(grid: GridSpec, members: Vec<Vec<ScalarField>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("ensemble", "needs at least one member"));
        }
        let n_times = members[0].len();
        for m in &members {
            if m.len() != n_times || m.iter().any(|f| !f.grid.same_space(&grid)) {
                return Err(Error::GridMismatch("ensemble members disagree on the grid".into()));
            }
        }
        Ok(McEnsemble { grid, members })
    }

    pub fn n_mc(&self) -> usize {
        self.members.len()
    }

    pub fn n_times(&self) -> usize {
        self.members[0].len()
    }

    /// Fraction of members with `u < 0` in each cell at time index `n`.
    pub fn burned_fraction(&self, n: usize) -> ndarray::Array2<f64> {
        let mut acc = ndarray::Array2::zeros((self.grid.n_x, self.grid.n_y));
        for m in &self.members {
            ndarray::Zip::from(&mut acc).and(&m[n].values).for_each(|a, &u| {
                if u < 0.0 {
                    *a += 1.0;
                }
            });
        }
        acc / self.n_mc() as f64
    }

    /// Cellwise mean surface at time index `n`.
    pub fn mean_field(&self, n: usize) -> ScalarField {
        let mut acc = ndarray::Array2::zeros((self.grid.n_x, self.grid.n_y));
        for m in &self.members {
            acc += &m[n].values;
        }
        ScalarField {
            grid: self.grid,
            values: acc / self.n_mc() as f64,
        }
    }
}

/// Member seeds are drawn from a ChaCha8 stream seeded with `seed`; members
/// are evaluated in parallel and collected in order.
pub fn posterior_predictive(
    phi: &VariationalParams,
    grid: &GridSpec,
    forcing: &ForcingField,
    n_mc: usize,
    seed: u64,
) -> Result<McEnsemble> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc", "must be >= 1"));
    }
    grid.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_mc).map(|_| rng.random()).collect();
    let members = seeds
        .par_iter()
        .map(|&s| {
            let (theta, _) = sample_params(phi, s);
            predict_fields(&theta, grid, forcing)
        })
        .collect();
    McEnsemble::new(*grid, members)
}

/// Seed of ensemble member `m` for a given ensemble seed, matching
/// [`posterior_predictive`].
pub fn member_seed(seed: u64, m: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).for_each(|_| {
        rng.random::<u64>();
    });
    rng.random()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{SpeedMap, WindSpec};
    use crate::net::{init_params, Activation, NetworkShape};
    use proptest::prelude::*;
    use rand::Rng;

    fn one_param(mu: f64, rho: f64) -> VariationalParams {
        // [6, 1, 1, 1] has 11 parameters; only index 0 is varied in the
        // single-weight checks
        let shape = NetworkShape::new(1, 1, Activation::Tanh);
        let mut m = NetworkParams::zeros(shape);
        m.as_mut_slice()[0] = mu;
        VariationalParams::new(m, rho)
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) > 0.0);
        assert!(softplus(-30.0) > 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        let h = 1e-6;
        for x in [-5.0, -0.3, 0.0, 2.0, 10.0] {
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - sigmoid(x)).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn sigma_is_positive(rho in -1e4..1e4f64) {
            prop_assert!(softplus(rho) > 0.0);
        }

        #[test]
        fn prior_symmetric_and_finite(theta in -1e3..1e3f64) {
            let p = PriorConfig::default();
            let (a, _) = p.log_density(theta);
            let (b, _) = p.log_density(-theta);
            prop_assert!(a.is_finite());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn sampling_examples() {
        let phi = one_param(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e: f64 = rng.sample(StandardNormal);
        let (theta, eps) = sample_params(&phi, 5);
        assert_eq!(eps[0], e);
        assert!((theta.as_slice()[0] - std::f64::consts::LN_2 * e).abs() < 1e-15);
        // eps = 1 gives ln 2 exactly
        assert_eq!(0.0 + softplus(0.0) * 1.0, std::f64::consts::LN_2);

        let phi = one_param(0.7, -800.0);
        let (theta, _) = sample_params(&phi, 1);
        assert_eq!(theta.as_slice()[0], 0.7);

        assert_eq!(sample_params(&phi, 9), sample_params(&phi, 9));
    }

    #[test]
    fn sample_moments() {
        // softplus(rho) = 0.5
        let rho = (0.5f64.exp() - 1.0).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| 1.0 + softplus(rho) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert!((var.sqrt() - 0.5).abs() < 0.01);
    }

    #[test]
    fn log_q_examples() {
        let phi = one_param(0.3, 0.0);
        let s = softplus(0.0);
        let mut theta = phi.mu.clone();
        let base = log_q(&theta, &phi);
        // the other ten weights sit at their means with sigma = ln 2
        let rest = 10.0 * (-HALF_LN_2PI - s.ln());
        assert!((base - rest - (-HALF_LN_2PI - s.ln())).abs() < 1e-12);
        theta.as_mut_slice()[0] += s;
        let one_sigma = log_q(&theta, &phi) - rest;
        assert!((one_sigma - (-0.5 * (2.0 * std::f64::consts::PI * s * s).ln() - 0.5)).abs() < 1e-12);

        // sigma = 1 at the mode
        let rho1 = (1f64.exp() - 1.0).ln();
        assert!((log_q_slice(&[0.2], &[0.2], &[rho1]) + 0.918_938_533_204_672_7).abs() < 1e-12);

        let (t, m, r) = ([0.1, -0.4, 2.0], [0.0, 0.3, 1.0], [-1.0, 0.5, -3.0]);
        let split = log_q_slice(&t[..1], &m[..1], &r[..1]) + log_q_slice(&t[1..], &m[1..], &r[1..]);
        assert!((log_q_slice(&t, &m, &r) - split).abs() < 1e-14);
    }

    #[test]
    fn prior_examples() {
        let p = PriorConfig::default();
        let s2 = (-6.0f64).exp();
        let expected = (0.5 * (2.0 * std::f64::consts::PI).powf(-0.5)
            + 0.5 * (2.0 * std::f64::consts::PI * s2 * s2).powf(-0.5))
        .ln();
        assert!((p.log_density(0.0).0 - expected).abs() < 1e-12);
        let slab = 0.5f64.ln() - HALF_LN_2PI - 50.0;
        assert!((p.log_density(10.0).0 - slab).abs() < 1e-6);
        assert!(p.log_density(1e3).0.is_finite());

        let h = 1e-7;
        for t in [-2.0, -0.01, 0.0, 0.003, 0.5] {
            let fd = (p.log_density(t + h).0 - p.log_density(t - h).0) / (2.0 * h);
            let d = p.log_density(t).1;
            assert!((fd - d).abs() < 1e-5 * d.abs().max(1.0), "{t}: {fd} vs {d}");
        }
    }

    /// Quadratic toy likelihood `-(theta - a)^2 / 2` on one weight.
    fn toy_lik(a: f64) -> impl FnMut(&[f64]) -> Result<(TermValues, Vec<f64>)> {
        move |theta| {
            let t = theta[0];
            Ok((
                TermValues {
                    physics: -0.5 * (t - a) * (t - a),
                    ..Default::default()
                },
                vec![-(t - a)],
            ))
        }
    }

    fn toy_estimate(mu: f64, rho: f64, seed: u64, a: Option<f64>) -> (f64, f64, f64) {
        let prior = PriorConfig {
            sigma1: 1.0,
            sigma2: 0.1,
            mix: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut gm, mut gr) = ([0.0], [0.0]);
        let lik = match a {
            Some(a) => Box::new(toy_lik(a)) as Box<dyn FnMut(&[f64]) -> Result<(TermValues, Vec<f64>)>>,
            None => Box::new(|_: &[f64]| Ok((TermValues::default(), vec![0.0]))),
        };
        let (v, ..) = neg_elbo_core(&[mu], &[rho], &prior, &mut rng, 1, &mut gm, &mut gr, lik).unwrap();
        (v, gm[0], gr[0])
    }

    #[test]
    fn toy_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (mu, rho) = (0.3 - 0.05 * seed as f64, -1.0 + 0.1 * seed as f64);
            let (_, gm, gr) = toy_estimate(mu, rho, seed, Some(0.8));
            let h = 1e-6;
            let fm = (toy_estimate(mu + h, rho, seed, Some(0.8)).0 - toy_estimate(mu - h, rho, seed, Some(0.8)).0)
                / (2.0 * h);
            let fr = (toy_estimate(mu, rho + h, seed, Some(0.8)).0 - toy_estimate(mu, rho - h, seed, Some(0.8)).0)
                / (2.0 * h);
            assert!(
                (gm - fm).abs() / gm.abs().max(fm.abs()).max(1e-6) < 1e-4,
                "mu: {gm} vs {fm}"
            );
            assert!(
                (gr - fr).abs() / gr.abs().max(fr.abs()).max(1e-6) < 1e-4,
                "rho: {gr} vs {fr}"
            );
        }
    }

    #[test]
    fn toy_estimator_is_unbiased() {
        let (mu, rho, a) = (0.4, -0.5, 0.8);
        let s = softplus(rho);
        let prior = PriorConfig {
            sigma1: 1.0,
            sigma2: 0.1,
            mix: 0.5,
        };
        // expectation under q by trapezoid quadrature over +-12 sigma
        let m = 200_000;
        let (lo, hi) = (mu - 12.0 * s, mu + 12.0 * s);
        let h = (hi - lo) / m as f64;
        let mut expect_neg_prior = 0.0;
        for k in 0..=m {
            let t = lo + k as f64 * h;
            let w = if k == 0 || k == m { 0.5 } else { 1.0 };
            let q = (-0.5 * ((t - mu) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            expect_neg_prior -= w * h * q * prior.log_density(t).0;
        }
        let expect = (-HALF_LN_2PI - s.ln() - 0.5) + 0.5 * ((mu - a).powi(2) + s * s) + expect_neg_prior;

        let n = 10_000;
        let vals: Vec<f64> = (0..n).map(|seed| toy_estimate(mu, rho, seed, Some(a)).0).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "mean {mean} expected {expect} se {se}"
        );
        assert_ne!(vals[0], vals[1]);
    }

    #[test]
    fn kl_estimate_is_nonnegative() {
        let n = 1000;
        let vals: Vec<f64> = (0..n).map(|seed| toy_estimate(0.3, -1.0, seed, None).0).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean >= -3.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    fn tiny_setup() -> (GridSpec, ForcingField, VariationalParams) {
        let grid = GridSpec::unit(5, 4, 3);
        let forcing = ForcingField::new(
            SpeedMap::Constant { value: 0.3 },
            WindSpec::Constant { wx: 0.1, wy: 0.0 },
            vec![],
        );
        let phi = VariationalParams::new(init_params(NetworkShape::new(4, 4, Activation::Tanh), 2), RHO_INIT);
        (grid, forcing, phi)
    }

    #[test]
    fn collapsed_posterior_estimate() {
        let (grid, forcing, mut phi) = tiny_setup();
        phi.rho.as_mut_slice().fill(-40.0);
        let ds = Datasets::build(&crate::field::SdfSpec::cone([0.5, 0.5], 0.3), &grid, &forcing, 3, 0).unwrap();
        let cfg = ModelConfig::new(crate::pinn::Variant::PinnF, true);
        let lik = LikelihoodConfig::standard();
        let prior = PriorConfig::default();
        let (est, grad) = elbo_estimate(&phi, &ds, &cfg, &lik, &prior, 3, 1, &mut BatchEngine::new()).unwrap();
        assert!(est.neg_elbo.is_finite());
        let ll_mu = crate::pinn::total_log_likelihood(&phi.mu, &ds, &cfg, &lik).unwrap();
        assert!((est.likelihood.total() - ll_mu).abs() < 1e-9 * ll_mu.abs());
        assert!((est.log_prior - log_prior(&phi.mu, &prior)).abs() < 1e-6);
        assert!(grad.mu.is_finite() && grad.rho.is_finite());
    }

    #[test]
    fn ensemble_properties() {
        let (grid, forcing, phi) = tiny_setup();
        let single = posterior_predictive(&phi, &grid, &forcing, 1, 11).unwrap();
        let (theta, _) = sample_params(&phi, member_seed(11, 0));
        assert_eq!(single.members[0], predict_fields(&theta, &grid, &forcing));
        assert_eq!(single.n_times(), grid.n_t + 1);

        let a = posterior_predictive(&phi, &grid, &forcing, 6, 4).unwrap();
        let b = posterior_predictive(&phi, &grid, &forcing, 6, 4).unwrap();
        assert_eq!(a.members, b.members);
        assert_ne!(a.members[0], a.members[1]);

        let mut collapsed = phi.clone();
        collapsed.rho.as_mut_slice().fill(-800.0);
        let c = posterior_predictive(&collapsed, &grid, &forcing, 5, 4).unwrap();
        assert!(c.members.iter().all(|m| m == &c.members[0]));

        assert!(posterior_predictive(&phi, &grid, &forcing, 0, 4).is_err());
    }
}
