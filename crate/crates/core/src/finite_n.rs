//! Monte Carlo study of finite-population growth rates.
//!
//! For each `(sigma, N)` cell we simulate many one-step GBM populations and
//! ask how often the finite-N statistic lands nearer its own infinite-N limit
//! than the other rate's: `g_<>N > mu - sigma^2/4` for the ensemble-average
//! rate, `g_bar_N < mu - sigma^2/4` for the time-average rate. The latter also
//! has a closed form,
//!
//! ```text
//! P = 1/2 + 1/2 erf( sqrt(sigma^2 N dt / 32) )
//! ```
//!
//! Cells are keyed by `(seed, block, cell)` and repetitions by their index,
//! so any evaluation order gives the same grid.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::erf::erf;
use crate::error::{Error, Result};
use crate::gbm::{InitialDistribution, RandomSource, StreamKey};

/// What a grid cell holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Fraction of runs with `g_<>N > mu - sigma^2/4`.
    Plutocratic,
    /// Closed-form `P(g_bar_N < mu - sigma^2/4)`.
    Democratic,
    /// Fraction of runs with `g_bar_N < mu - sigma^2/4`.
    DemocraticMc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub mu: f64,
    pub dt: f64,
    /// `None` for closed-form grids.
    pub seed: Option<u64>,
    pub initial: Option<InitialDistribution>,
}

/// Values over a `(sigma, N)` grid, stored row-major by sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub measure: Measure,
    pub sigma_axis: Vec<f64>,
    pub n_axis: Vec<u64>,
    /// Repetitions per cell; 0 for closed-form grids.
    pub reps: u64,
    pub values: Vec<f64>,
    pub metadata: SweepMetadata,
}

impl SweepGrid {
    pub fn value(&self, sigma_index: usize, n_index: usize) -> f64 {
        self.values[sigma_index * self.n_axis.len() + n_index]
    }

    /// `(sigma, N, value)` for every cell in storage order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, u64, f64)> + '_ {
        self.sigma_axis
            .iter()
            .flat_map(move |&s| self.n_axis.iter().map(move |&n| (s, n)))
            .zip(&self.values)
            .map(|((s, n), &v)| (s, n, v))
    }
}

/// Axes and repetition count for a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub sigma_axis: Vec<f64>,
    pub n_axis: Vec<u64>,
    pub reps: u64,
}

impl Preset {
    /// Minutes-scale grid: sigma^2 in {0.01, ..., 0.09}, N in {2, 10, ..., 10^5}, 10^3 reps.
    ///
    /// sigma = 0 is left out because both targets coincide there and the
    /// closed-form probability is exactly one half.
    pub fn desk() -> Self {
        Self {
            sigma_axis: (1..=9).map(|k| (0.01 * k as f64).sqrt()).collect(),
            n_axis: vec![2, 10, 100, 1_000, 10_000, 100_000],
            reps: 1_000,
        }
    }

    /// Full grid: sigma^2 in {0, 0.005, ..., 0.09}, N from 2 to 10^7 on a 1-2-5 ladder, 10^4 reps.
    pub fn full() -> Self {
        let mut n_axis = vec![2u64, 5];
        let mut decade = 10u64;
        while decade <= 10_000_000 {
            n_axis.extend(
                [decade, 2 * decade, 5 * decade]
                    .into_iter()
                    .filter(|&n| n <= 10_000_000),
            );
            decade *= 10;
        }
        Self {
            sigma_axis: (0..=18).map(|k| (0.005 * k as f64).sqrt()).collect(),
            n_axis,
            reps: 10_000,
        }
    }
}

/// Default initial distribution for the study: lognormal around 10^4 with log-sd 1.
pub const DEFAULT_INITIAL: InitialDistribution = InitialDistribution::Lognormal {
    meanlog: 9.210_340_371_976_184, // ln 10^4
    sdlog: 1.0,
};

fn check_axes(mu: f64, sigma_axis: &[f64], n_axis: &[u64], dt: f64) -> Result<()> {
    if !mu.is_finite() {
        return Err(Error::invalid(format!("mu must be finite, got {mu}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if sigma_axis.is_empty() || n_axis.is_empty() {
        return Err(Error::invalid("grid axes must be non-empty"));
    }
    if sigma_axis.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("sigma values must be finite and >= 0"));
    }
    if sigma_axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sigma axis must be strictly increasing"));
    }
    if n_axis[0] == 0 || n_axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("N axis must be strictly increasing and start at >= 1"));
    }
    Ok(())
}

/// Closed-form probability that the time-average statistic is nearer `mu - sigma^2/2` than `mu`.
pub fn democratic_closeness_probability(sigma: f64, n: u64, dt: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if n == 0 {
        return Err(Error::invalid("N must be >= 1"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let arg = (sigma * sigma * n as f64 * dt / 32.0).sqrt();
    Ok(0.5 + 0.5 * erf(arg))
}

/// Both growth-rate statistics from each repetition of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSample {
    pub g_plutocratic: Vec<f64>,
    pub g_democratic: Vec<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

fn one_run(mu: f64, sigma: f64, n: u64, dt: f64, initial: InitialDistribution, key: StreamKey, rep: u64) -> (f64, f64) {
    let mut rng = key.rng(rep);
    let drift = (mu - 0.5 * sigma * sigma) * dt;
    let scale = sigma * dt.sqrt();
    let (mut s0, mut s1, mut slog) = (Compensated::default(), Compensated::default(), Compensated::default());
    // Streamed rather than materialised: N reaches 10^7.
    for _ in 0..n {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let x0 = initial.income_from_normal(z0);
        let increment = drift + scale * z1;
        s0.add(x0);
        s1.add(x0 * increment.exp());
        slog.add(increment);
    }
    let g_plu = (s1.value().ln() - s0.value().ln()) / dt;
    let g_dem = slog.value() / (n as f64 * dt);
    (g_plu, g_dem)
}

/// Runs `reps` one-step simulations of an `n`-person population.
pub fn simulate_cell(
    mu: f64,
    sigma: f64,
    n: u64,
    reps: u64,
    dt: f64,
    initial: InitialDistribution,
    key: StreamKey,
) -> Result<CellSample> {
    check_axes(mu, &[sigma], &[n], dt)?;
    initial.validate()?;
    if reps == 0 {
        return Err(Error::invalid("reps must be >= 1"));
    }
    let run = |r: u64| one_run(mu, sigma, n, dt, initial, key, r);
    #[cfg(feature = "parallel")]
    let pairs: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        (0..reps).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<(f64, f64)> = (0..reps).map(run).collect();
    let (g_plutocratic, g_democratic) = pairs.into_iter().unzip();
    Ok(CellSample {
        g_plutocratic,
        g_democratic,
    })
}

#[allow(clippy::too_many_arguments)]
fn mc_grid(
    measure: Measure,
    mu: f64,
    sigma_axis: &[f64],
    n_axis: &[u64],
    reps: u64,
    dt: f64,
    initial: InitialDistribution,
    rng: &mut RandomSource,
) -> Result<SweepGrid> {
    check_axes(mu, sigma_axis, n_axis, dt)?;
    initial.validate()?;
    if reps == 0 {
        return Err(Error::invalid("reps must be >= 1"));
    }
    let block = rng.next_key();
    let mut values = Vec::with_capacity(sigma_axis.len() * n_axis.len());
    for (i, &sigma) in sigma_axis.iter().enumerate() {
        for (j, &n) in n_axis.iter().enumerate() {
            let threshold = mu - 0.25 * sigma * sigma;
            // With sigma = 0 both statistics equal mu exactly and the two
            // targets coincide; rounding must not decide the cell.
            let value = if sigma == 0.0 {
                match measure {
                    Measure::Plutocratic => 1.0,
                    _ => 0.0,
                }
            } else {
                let cell = (i * n_axis.len() + j) as u64;
                let key = block.with_lane(cell + 1);
                let sample = simulate_cell(mu, sigma, n, reps, dt, initial, key)?;
                let hits = match measure {
                    Measure::Plutocratic => sample.g_plutocratic.iter().filter(|&&g| g > threshold).count(),
                    _ => sample.g_democratic.iter().filter(|&&g| g < threshold).count(),
                };
                hits as f64 / reps as f64
            };
            values.push(value);
        }
    }
    Ok(SweepGrid {
        measure,
        sigma_axis: sigma_axis.to_vec(),
        n_axis: n_axis.to_vec(),
        reps,
        values,
        metadata: SweepMetadata {
            mu,
            dt,
            seed: Some(rng.seed()),
            initial: Some(initial),
        },
    })
}

/// Fraction of runs per cell in which the ensemble-average rate is nearer `mu`.
#[allow(clippy::too_many_arguments)]
pub fn plutocratic_closeness_fraction(
    mu: f64,
    sigma_axis: &[f64],
    n_axis: &[u64],
    reps: u64,
    dt: f64,
    initial: InitialDistribution,
    rng: &mut RandomSource,
) -> Result<SweepGrid> {
    mc_grid(Measure::Plutocratic, mu, sigma_axis, n_axis, reps, dt, initial, rng)
}

/// Monte Carlo counterpart of [`democratic_closeness_probability`] over a grid.
pub fn democratic_closeness_fraction_mc(
    mu: f64,
    sigma_axis: &[f64],
    n_axis: &[u64],
    reps: u64,
    dt: f64,
    initial: InitialDistribution,
    rng: &mut RandomSource,
) -> Result<SweepGrid> {
    mc_grid(Measure::DemocraticMc, mu, sigma_axis, n_axis, reps, dt, initial, rng)
}

/// Closed-form probabilities over a grid.
pub fn democratic_closeness_grid(mu: f64, sigma_axis: &[f64], n_axis: &[u64], dt: f64) -> Result<SweepGrid> {
    check_axes(mu, sigma_axis, n_axis, dt)?;
    let values = sigma_axis
        .iter()
        .flat_map(|&s| n_axis.iter().map(move |&n| democratic_closeness_probability(s, n, dt)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepGrid {
        measure: Measure::Democratic,
        sigma_axis: sigma_axis.to_vec(),
        n_axis: n_axis.to_vec(),
        reps: 0,
        values,
        metadata: SweepMetadata {
            mu,
            dt,
            seed: None,
            initial: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(seed: u64) -> StreamKey {
        StreamKey::new(seed, 0, 1)
    }

    #[test]
    fn closed_form_points() {
        assert_eq!(democratic_closeness_probability(0.0, 1000, 1.0).unwrap(), 0.5);
        let p = democratic_closeness_probability(0.2, 800, 1.0).unwrap();
        assert!((p - 0.921_350_396_474_857_4).abs() < 1e-15, "{p}");
        let p = democratic_closeness_probability(0.2, 1_000_000, 1.0).unwrap();
        assert_eq!(p, 1.0);
        assert!(democratic_closeness_probability(-0.1, 10, 1.0).is_err());
        assert!(democratic_closeness_probability(0.1, 0, 1.0).is_err());
        assert!(democratic_closeness_probability(0.1, 10, 0.0).is_err());
    }

    #[test]
    fn closed_form_is_monotone() {
        let sig = [0.0, 0.05, 0.1, 0.2, 0.3];
        let ns = [1u64, 2, 10, 100, 1000];
        let dts = [0.25, 1.0, 4.0];
        for w in sig.windows(2) {
            for &n in &ns {
                assert!(
                    democratic_closeness_probability(w[1], n, 1.0).unwrap()
                        >= democratic_closeness_probability(w[0], n, 1.0).unwrap()
                );
            }
        }
        for w in ns.windows(2) {
            assert!(
                democratic_closeness_probability(0.1, w[1], 1.0).unwrap()
                    >= democratic_closeness_probability(0.1, w[0], 1.0).unwrap()
            );
        }
        for w in dts.windows(2) {
            assert!(
                democratic_closeness_probability(0.1, 50, w[1]).unwrap()
                    >= democratic_closeness_probability(0.1, 50, w[0]).unwrap()
            );
        }
    }

    #[test]
    fn zero_sigma_cells_are_degenerate() {
        let mut rng = RandomSource::new(1);
        let g = plutocratic_closeness_fraction(0.02, &[0.0, 0.1], &[10], 50, 1.0, DEFAULT_INITIAL, &mut rng).unwrap();
        assert_eq!(g.value(0, 0), 1.0);
        let d = democratic_closeness_fraction_mc(0.02, &[0.0], &[10], 50, 1.0, DEFAULT_INITIAL, &mut rng).unwrap();
        assert_eq!(d.value(0, 0), 0.0);
    }

    #[test]
    fn single_person_matches_normal_cdf() {
        // N = 1: g is Normal(mu - sigma^2/2, sigma^2), so P(g > mu - sigma^2/4) = 1 - Phi(sigma/4)
        let reps = 40_000;
        let s = simulate_cell(0.02, 0.2, 1, reps, 1.0, DEFAULT_INITIAL, key(5)).unwrap();
        let thr = 0.02 - 0.01;
        let frac = s.g_plutocratic.iter().filter(|&&g| g > thr).count() as f64 / reps as f64;
        let want = 0.480_061_194_161_627_5;
        let se = (want * (1.0 - want) / reps as f64).sqrt();
        assert!((frac - want).abs() < 3.0 * se, "{frac} vs {want}");
    }

    #[test]
    fn sampling_distribution_of_time_average_rate() {
        let (mu, sigma, n, reps) = (0.02, 0.2, 100u64, 10_000u64);
        let s = simulate_cell(mu, sigma, n, reps, 1.0, DEFAULT_INITIAL, key(8)).unwrap();
        let m = s.g_democratic.iter().sum::<f64>() / reps as f64;
        let v = s.g_democratic.iter().map(|g| (g - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let var = sigma * sigma / n as f64;
        assert!((m - (mu - 0.02)).abs() < 3.0 * (var / reps as f64).sqrt(), "mean {m}");
        assert!((v / var - 1.0).abs() < 0.1, "var {v} vs {var}");
    }

    #[test]
    fn mc_converges_to_closed_form() {
        let want = democratic_closeness_probability(0.2, 800, 1.0).unwrap();
        let mut errs = Vec::new();
        for (reps, seed) in [(100u64, 1u64), (1_000, 2), (10_000, 3)] {
            let g = democratic_closeness_fraction_mc(
                0.02,
                &[0.2],
                &[800],
                reps,
                1.0,
                DEFAULT_INITIAL,
                &mut RandomSource::new(seed),
            )
            .unwrap();
            let se = (want * (1.0 - want) / reps as f64).sqrt();
            let err = (g.value(0, 0) - want).abs();
            assert!(err <= 3.0 * se, "reps {reps}: {} vs {want}", g.value(0, 0));
            errs.push(err);
        }
        assert!(errs[2] <= 3.0 * (want * (1.0 - want) / 1e4f64).sqrt());
    }

    #[test]
    fn grid_is_deterministic_and_bounded() {
        let run = || {
            plutocratic_closeness_fraction(
                0.02,
                &[0.1, 0.2],
                &[2, 50],
                200,
                1.0,
                DEFAULT_INITIAL,
                &mut RandomSource::new(42),
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.cells().count(), 4);
    }

    #[test]
    fn axis_validation() {
        let mut r = RandomSource::new(0);
        assert!(plutocratic_closeness_fraction(0.02, &[0.2, 0.1], &[2], 10, 1.0, DEFAULT_INITIAL, &mut r).is_err());
        assert!(plutocratic_closeness_fraction(0.02, &[0.1], &[0], 10, 1.0, DEFAULT_INITIAL, &mut r).is_err());
        assert!(plutocratic_closeness_fraction(0.02, &[0.1], &[5, 5], 10, 1.0, DEFAULT_INITIAL, &mut r).is_err());
        assert!(plutocratic_closeness_fraction(0.02, &[0.1], &[5], 0, 1.0, DEFAULT_INITIAL, &mut r).is_err());
        assert!(democratic_closeness_grid(0.02, &[], &[5], 1.0).is_err());
    }

    #[test]
    fn presets_have_increasing_axes() {
        for p in [Preset::desk(), Preset::full()] {
            assert!(p.sigma_axis.windows(2).all(|w| w[1] > w[0]));
            assert!(p.n_axis.windows(2).all(|w| w[1] > w[0]));
        }
        assert_eq!(*Preset::full().n_axis.last().unwrap(), 10_000_000);
        assert_eq!(Preset::full().n_axis[0], 2);
    }
}
