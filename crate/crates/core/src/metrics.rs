//! Growth rates, levels and inequality of income cross-sections.
//!
//! Everything here works on plain slices of incomes so that simulated
//! cross-sections, grouped quantile averages and raw data share one
//! implementation. Means use correctly rounded summation, which makes every
//! statistic invariant (bit for bit) under relabelling of individuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::{IncomeCrossSection, TrajectoryPanel};
use crate::sum::{exact_mean, exact_sum};

fn check_nonempty(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid("income sequence is empty"));
    }
    Ok(())
}

fn check_positive(xs: &[f64]) -> Result<()> {
    check_nonempty(xs)?;
    match xs.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(i) => Err(Error::domain(format!(
            "income {i} is {}; logarithmic statistics need positive incomes",
            xs[i]
        ))),
        None => Ok(()),
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn all_equal(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

/// Mean that returns the common value exactly when all entries agree.
fn mean(xs: &[f64]) -> f64 {
    if all_equal(xs) {
        xs[0]
    } else {
        exact_mean(xs)
    }
}

/// `<ln x>_N`.
pub fn mean_log_income(xs: &[f64]) -> Result<f64> {
    check_positive(xs)?;
    if all_equal(xs) {
        return Ok(xs[0].ln());
    }
    Ok(exact_sum(xs.iter().map(|x| x.ln())) / xs.len() as f64)
}

/// Arithmetic mean income.
pub fn gdp_per_capita(xs: &[f64]) -> Result<f64> {
    check_nonempty(xs)?;
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::domain(format!("income {x} is not finite")));
    }
    Ok(mean(xs))
}

/// Geometric mean income.
pub fn ddp_per_capita(xs: &[f64]) -> Result<f64> {
    let l = mean_log_income(xs)?;
    Ok(if all_equal(xs) { xs[0] } else { l.exp() })
}

/// Growth rate of the arithmetic mean between two cross-sections.
///
/// The populations may differ in size.
pub fn ensemble_average_growth_rate(initial: &[f64], terminal: &[f64], dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let m0 = gdp_per_capita(initial)?;
    let m1 = gdp_per_capita(terminal)?;
    if m0 <= 0.0 || m1 <= 0.0 {
        return Err(Error::domain("mean income must be positive to take its logarithm"));
    }
    Ok((m1.ln() - m0.ln()) / dt)
}

/// Growth rate of the mean log income (equivalently, of the geometric mean).
pub fn time_average_growth_rate(initial: &[f64], terminal: &[f64], dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let l0 = mean_log_income(initial)?;
    let l1 = mean_log_income(terminal)?;
    Ok((l1 - l0) / dt)
}

/// Mean logarithmic deviation, `ln <x> - <ln x>`.
///
/// Zero exactly when all incomes are equal; never negative.
pub fn ergodicity_gap(xs: &[f64]) -> Result<f64> {
    check_positive(xs)?;
    if all_equal(xs) {
        return Ok(0.0);
    }
    let gap = exact_mean(xs).ln() - mean_log_income(xs)?;
    Ok(gap.max(0.0))
}

/// Per-individual growth rates between two matched observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualGrowth {
    /// `g_i = (ln x_i(t + dt) - ln x_i(t)) / dt`
    pub rates: Vec<f64>,
    /// Initial income shares `x_i(t) / sum x(t)`.
    pub weights: Vec<f64>,
}

impl IndividualGrowth {
    /// Rates between snapshots `from` and `to` of a panel.
    pub fn from_panel(panel: &TrajectoryPanel, from: usize, to: usize) -> Result<Self> {
        let snaps = panel.snapshots();
        let (a, b) = match (snaps.get(from), snaps.get(to)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::invalid(format!(
                    "snapshot indices {from}, {to} out of range for {} snapshots",
                    snaps.len()
                )))
            }
        };
        individual_growth_rates(a.incomes(), b.incomes(), b.time() - a.time())
    }

    /// Equally weighted (democratic) mean of the rates.
    pub fn equal_weighted_mean(&self) -> f64 {
        exact_mean(&self.rates)
    }
}

pub fn individual_growth_rates(initial: &[f64], terminal: &[f64], dt: f64) -> Result<IndividualGrowth> {
    check_dt(dt)?;
    if initial.len() != terminal.len() {
        return Err(Error::invalid(format!(
            "matched observations need equal lengths, got {} and {}",
            initial.len(),
            terminal.len()
        )));
    }
    check_positive(initial)?;
    check_positive(terminal)?;
    let rates = initial
        .iter()
        .zip(terminal)
        .map(|(a, b)| (b.ln() - a.ln()) / dt)
        .collect();
    let total = exact_sum(initial.iter().copied());
    let weights = initial.iter().map(|x| x / total).collect();
    Ok(IndividualGrowth { rates, weights })
}

/// Income-share weighted mean of individual growth rates.
///
/// Approximates the ensemble-average growth rate only when individual
/// changes are small.
pub fn plutocratic_weighted_average(ig: &IndividualGrowth) -> Result<f64> {
    if ig.rates.len() != ig.weights.len() || ig.rates.is_empty() {
        return Err(Error::invalid(
            "rates and weights must be non-empty and of equal length",
        ));
    }
    if ig.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    let total = exact_sum(ig.weights.iter().copied());
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("weights sum to {total}, not 1")));
    }
    Ok(exact_sum(ig.rates.iter().zip(&ig.weights).map(|(g, w)| g * w)))
}

/// Share of total income held by the top `ceil(fraction * N)` earners.
///
/// Earners tied at the cutoff income are all admitted and then count
/// fractionally, so the head count is exactly `ceil(fraction * N)`.
pub fn top_share(xs: &[f64], fraction: f64) -> Result<f64> {
    check_nonempty(xs)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if let Some(x) = xs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::domain(format!("income {x} is negative or not finite")));
    }
    let n = xs.len();
    // Guard against e.g. 0.3 * 10 = 3.0000000000000004 rounding up to 4.
    let head = ((fraction * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let total = exact_sum(xs.iter().copied());
    if total == 0.0 {
        return Err(Error::domain("total income is zero"));
    }
    let mut sorted = xs.to_vec();
    let (_, cutoff, _) = sorted.select_nth_unstable_by(head - 1, |a, b| b.total_cmp(a));
    let cutoff = *cutoff;
    let above: Vec<f64> = xs.iter().copied().filter(|&x| x > cutoff).collect();
    let tied = (head - above.len()) as f64;
    let held = exact_sum(above.iter().copied().chain(std::iter::once(tied * cutoff)));
    Ok(held / total)
}

/// Both growth rates of one observation period plus the levels behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub dt: f64,
    pub g_plutocratic: f64,
    pub g_democratic: f64,
    pub gap_initial: f64,
    pub gap_terminal: f64,
    pub gdp_pc_initial: f64,
    pub gdp_pc_terminal: f64,
    pub ddp_pc_initial: f64,
    pub ddp_pc_terminal: f64,
    pub top10_share_initial: f64,
    pub top10_share_terminal: f64,
}

impl GrowthReport {
    pub fn from_incomes(initial: &[f64], terminal: &[f64], dt: f64) -> Result<Self> {
        Ok(Self {
            dt,
            g_plutocratic: ensemble_average_growth_rate(initial, terminal, dt)?,
            g_democratic: time_average_growth_rate(initial, terminal, dt)?,
            gap_initial: ergodicity_gap(initial)?,
            gap_terminal: ergodicity_gap(terminal)?,
            gdp_pc_initial: gdp_per_capita(initial)?,
            gdp_pc_terminal: gdp_per_capita(terminal)?,
            ddp_pc_initial: ddp_per_capita(initial)?,
            ddp_pc_terminal: ddp_per_capita(terminal)?,
            top10_share_initial: top_share(initial, 0.1)?,
            top10_share_terminal: top_share(terminal, 0.1)?,
        })
    }

    /// Report for two cross-sections, with `dt` taken from their time stamps.
    pub fn between(initial: &IncomeCrossSection, terminal: &IncomeCrossSection) -> Result<Self> {
        Self::from_incomes(initial.incomes(), terminal.incomes(), terminal.time() - initial.time())
    }
}
