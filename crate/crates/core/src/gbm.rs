//! Ensembles of incomes under geometric Brownian motion.
//!
//! ```text
//! dx = x (mu dt + sigma dW)
//! x(t + dt) = x(t) exp[(mu - sigma^2/2) dt + sigma W(dt)]     exact
//! x(t + dt) = x(t) (1 + mu dt + sigma zeta sqrt(dt))            Euler-Maruyama
//! ```
//!
//! Randomness is keyed rather than sequential: every draw is a function of
//! `(seed, block, individual)`, where `block` counts the calls made on a
//! [`RandomSource`]. Individuals can therefore be processed in any order, on
//! any number of threads, with bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drift and volatility of the growth process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    /// Drift, per year.
    pub mu: f64,
    /// Volatility, per square-root year.
    pub sigma: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::invalid(format!("mu must be finite, got {}", self.mu)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Growth rate of the ensemble average, `mu`.
    pub fn ensemble_growth_rate(&self) -> f64 {
        self.mu
    }

    /// Growth rate of a single trajectory in the long run, `mu - sigma^2/2`.
    pub fn time_average_growth_rate(&self) -> f64 {
        self.mu - 0.5 * self.sigma * self.sigma
    }
}

/// Key identifying one independent noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    seed: u64,
    block: u64,
    lane: u64,
}

impl StreamKey {
    pub fn new(seed: u64, block: u64, lane: u64) -> Self {
        Self { seed, block, lane }
    }

    /// Same seed and block, different family.
    pub fn with_lane(self, lane: u64) -> Self {
        Self { lane, ..self }
    }

    /// Generator for one member of the keyed family (an individual, or a repetition).
    pub fn rng(&self, member: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.block.to_le_bytes());
        key[16..24].copy_from_slice(&self.lane.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(member);
        rng
    }
}

/// Seeded source of keyed noise streams.
///
/// Each operation that consumes randomness takes the next block; within a
/// block, individual `i` reads its own stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSource {
    seed: u64,
    position: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, position: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of blocks consumed so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn next_key(&mut self) -> StreamKey {
        let key = StreamKey::new(self.seed, self.position, 0);
        self.position += 1;
        key
    }
}

/// Distribution of incomes at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    /// Everyone starts at `x0`.
    Degenerate { x0: f64 },
    /// `ln x ~ Normal(meanlog, sdlog^2)`.
    Lognormal { meanlog: f64, sdlog: f64 },
}

impl InitialDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialDistribution::Degenerate { x0 } => {
                if !(x0.is_finite() && x0 > 0.0) {
                    return Err(Error::invalid(format!("x0 must be positive, got {x0}")));
                }
            }
            InitialDistribution::Lognormal { meanlog, sdlog } => {
                if !meanlog.is_finite() {
                    return Err(Error::invalid(format!("meanlog must be finite, got {meanlog}")));
                }
                if !(sdlog.is_finite() && sdlog >= 0.0) {
                    return Err(Error::invalid(format!("sdlog must be >= 0, got {sdlog}")));
                }
            }
        }
        Ok(())
    }

    /// Draw one income using `z`, a standard normal variate.
    pub(crate) fn income_from_normal(&self, z: f64) -> f64 {
        match *self {
            InitialDistribution::Degenerate { x0 } => x0,
            InitialDistribution::Lognormal { meanlog, sdlog } => (meanlog + sdlog * z).exp(),
        }
    }
}

/// Incomes of a population at one point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeCrossSection {
    time: f64,
    incomes: Vec<f64>,
}

impl IncomeCrossSection {
    /// Fails unless there is at least one income and every income is finite and positive.
    pub fn new(time: f64, incomes: Vec<f64>) -> Result<Self> {
        if incomes.is_empty() {
            return Err(Error::invalid("cross-section must hold at least one income"));
        }
        if !time.is_finite() {
            return Err(Error::invalid(format!("time must be finite, got {time}")));
        }
        if let Some((i, x)) = incomes.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::domain(format!("income {i} is {x}; incomes must be positive")));
        }
        Ok(Self { time, incomes })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    pub fn len(&self) -> usize {
        self.incomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incomes.is_empty()
    }

    pub fn into_incomes(self) -> Vec<f64> {
        self.incomes
    }
}

/// Individual income trajectories on a shared time grid.
///
/// `snapshots[k]` is the cross-section at `time_grid[k]`; individual `i`
/// occupies index `i` in every snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPanel {
    time_grid: Vec<f64>,
    snapshots: Vec<IncomeCrossSection>,
}

impl TrajectoryPanel {
    pub fn new(snapshots: Vec<IncomeCrossSection>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::invalid("panel needs at least one time point"))?;
        let n = first.len();
        if let Some(s) = snapshots.iter().find(|s| s.len() != n) {
            return Err(Error::invalid(format!(
                "snapshot at t={} has {} individuals, expected {n}",
                s.time(),
                s.len()
            )));
        }
        let time_grid: Vec<f64> = snapshots.iter().map(|s| s.time()).collect();
        check_grid(&time_grid, false)?;
        Ok(Self { time_grid, snapshots })
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn snapshots(&self) -> &[IncomeCrossSection] {
        &self.snapshots
    }

    pub fn population(&self) -> usize {
        self.snapshots[0].len()
    }

    /// Income path of individual `i` over the grid.
    pub fn trajectory(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.snapshots.iter().map(move |s| s.incomes()[i])
    }
}

/// Stepping scheme for [`simulate_trajectories`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Exact,
    /// Euler-Maruyama with `substeps` equal steps per grid interval.
    Euler { substeps: u32 },
}

fn check_grid(grid: &[f64], must_start_at_zero: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if must_start_at_zero && grid[0] != 0.0 {
        return Err(Error::invalid(format!(
            "time grid must start at 0, starts at {}",
            grid[0]
        )));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time grid contains a non-finite value"));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "time grid must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Applies `f` to every individual index; the first failing index wins.
fn map_individuals<F>(n: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let out: Vec<Result<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out: Vec<Result<f64>> = (0..n).map(f).collect();
    out.into_iter().collect()
}

pub fn sample_initial_ensemble(
    dist: InitialDistribution,
    n: usize,
    rng: &mut RandomSource,
) -> Result<IncomeCrossSection> {
    if n == 0 {
        return Err(Error::invalid("population size must be >= 1"));
    }
    dist.validate()?;
    let key = rng.next_key();
    let incomes = map_individuals(n, |i| {
        let z: f64 = StandardNormal.sample(&mut key.rng(i as u64));
        Ok(dist.income_from_normal(z))
    })?;
    IncomeCrossSection::new(0.0, incomes)
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::invalid(format!("dt must be finite and >= 0, got {dt}")));
    }
    Ok(())
}

/// Advances every income by the closed-form lognormal solution over `dt`.
pub fn gbm_step_exact(
    xs: &IncomeCrossSection,
    p: GbmParams,
    dt: f64,
    rng: &mut RandomSource,
) -> Result<IncomeCrossSection> {
    check_dt(dt)?;
    p.validate()?;
    let key = rng.next_key();
    let drift = p.time_average_growth_rate() * dt;
    let scale = p.sigma * dt.sqrt();
    let incomes = map_individuals(xs.len(), |i| {
        let z: f64 = StandardNormal.sample(&mut key.rng(i as u64));
        Ok(xs.incomes()[i] * (drift + scale * z).exp())
    })?;
    IncomeCrossSection::new(xs.time() + dt, incomes)
}

/// One Euler-Maruyama step. Fails if any multiplier `1 + mu dt + sigma zeta sqrt(dt)`
/// is not positive.
pub fn gbm_step_euler(
    xs: &IncomeCrossSection,
    p: GbmParams,
    dt: f64,
    rng: &mut RandomSource,
) -> Result<IncomeCrossSection> {
    check_dt(dt)?;
    if dt == 0.0 {
        return Err(Error::invalid("Euler step needs dt > 0"));
    }
    p.validate()?;
    let key = rng.next_key();
    let sqrt_dt = dt.sqrt();
    let incomes = map_individuals(xs.len(), |i| {
        let zeta: f64 = StandardNormal.sample(&mut key.rng(i as u64));
        let multiplier = 1.0 + p.mu * dt + p.sigma * zeta * sqrt_dt;
        if multiplier <= 0.0 {
            return Err(Error::StepSize {
                individual: i,
                zeta,
                multiplier,
            });
        }
        Ok(xs.incomes()[i] * multiplier)
    })?;
    IncomeCrossSection::new(xs.time() + dt, incomes)
}

pub fn simulate_trajectories(
    p: GbmParams,
    n: usize,
    time_grid: &[f64],
    rng: &mut RandomSource,
    scheme: Scheme,
    initial: InitialDistribution,
) -> Result<TrajectoryPanel> {
    p.validate()?;
    check_grid(time_grid, true)?;
    if let Scheme::Euler { substeps: 0 } = scheme {
        return Err(Error::invalid("Euler scheme needs at least one substep"));
    }
    let mut snapshots = Vec::with_capacity(time_grid.len());
    let mut current = sample_initial_ensemble(initial, n, rng)?;
    for w in time_grid.windows(2) {
        let interval = w[1] - w[0];
        let mut next = match scheme {
            Scheme::Exact => gbm_step_exact(&current, p, interval, rng)?,
            Scheme::Euler { substeps } => {
                let h = interval / substeps as f64;
                let mut x = current.clone();
                for _ in 0..substeps {
                    x = gbm_step_euler(&x, p, h, rng)?;
                }
                x
            }
        };
        // Pin snapshot times to the grid instead of accumulating dt.
        next.time = w[1];
        snapshots.push(std::mem::replace(&mut current, next));
    }
    snapshots.push(current);
    TrajectoryPanel::new(snapshots)
}

/// Evenly spaced grid `0, dt, 2 dt, ..., steps dt`.
pub fn uniform_grid(dt: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 * dt).collect()
}
