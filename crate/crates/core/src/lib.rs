//! Two growth rates of an economy.
//!
//! Under random multiplicative growth, the arithmetic-mean income (GDP per
//! capita) grows at the ensemble-average rate while a typical income grows at
//! the lower time-average rate, which is the growth rate of the geometric mean
//! (DDP per capita). Their difference accumulates into the mean logarithmic
//! deviation, here called the ergodicity gap.
//!
//! * [`gbm`] simulates ensembles under geometric Brownian motion.
//! * [`metrics`] computes both growth rates, levels, the gap and top shares.
//! * [`quantile`] estimates the same statistics from quantile-grouped data.
//! * [`finite_n`] measures how close finite-population statistics sit to
//!   their infinite-population limits.
//! * [`data_io`] reads quantile CSV files and writes reports.

pub mod data_io;
pub mod erf;
pub mod error;
pub mod finite_n;
pub mod gbm;
pub mod metrics;
pub mod quantile;
mod sum;

pub use error::{Error, Result};
pub use gbm::{
    gbm_step_euler, gbm_step_exact, sample_initial_ensemble, simulate_trajectories, uniform_grid, GbmParams,
    IncomeCrossSection, InitialDistribution, RandomSource, Scheme, TrajectoryPanel,
};
pub use metrics::{
    ddp_per_capita, ensemble_average_growth_rate, ergodicity_gap, gdp_per_capita, individual_growth_rates,
    plutocratic_weighted_average, time_average_growth_rate, top_share, GrowthReport, IndividualGrowth,
};
