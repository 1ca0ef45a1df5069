//! Growth and inequality estimates from quantile-grouped income data.
//!
//! Quantiles are assumed to hold equal population shares (percentiles,
//! deciles, ...), so every estimator is an unweighted mean over quantiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbm::IncomeCrossSection;
use crate::metrics::{ergodicity_gap, gdp_per_capita, mean_log_income, time_average_growth_rate};
use crate::sum::exact_mean;

/// One quantile of a grouped distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    /// 1-based label in the original (untruncated) table.
    pub quantile: u32,
    pub average: f64,
    pub lower: f64,
    /// Missing for an open-ended top quantile.
    pub upper: Option<f64>,
}

/// Grouped incomes for one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    year: i32,
    rows: Vec<QuantileRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    population: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    concept: Option<String>,
}

/// A schema violation located at one quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct RowViolation {
    /// Index into `rows`.
    pub index: usize,
    pub message: String,
}

/// Checks the per-table invariants; `Err` points at the first offending row.
pub fn validate_rows(rows: &[QuantileRow]) -> std::result::Result<(), RowViolation> {
    let fail = |index: usize, message: String| Err(RowViolation { index, message });
    if rows.is_empty() {
        return fail(0, "table has no quantiles".into());
    }
    let last = rows.len() - 1;
    for (i, r) in rows.iter().enumerate() {
        let q = r.quantile;
        if i > 0 && q != rows[i - 1].quantile + 1 {
            return fail(i, format!("quantile {q} does not follow {}", rows[i - 1].quantile));
        }
        if !(r.average.is_finite() && r.average > 0.0) {
            return fail(i, format!("quantile {q}: average {} must be positive", r.average));
        }
        if !(r.lower.is_finite() && r.lower >= 0.0) {
            return fail(i, format!("quantile {q}: lower threshold {} must be >= 0", r.lower));
        }
        if r.lower > r.average {
            return fail(
                i,
                format!(
                    "quantile {q}: lower threshold {} exceeds average {}",
                    r.lower, r.average
                ),
            );
        }
        match r.upper {
            Some(u) if !u.is_finite() || u < r.average => {
                return fail(
                    i,
                    format!("quantile {q}: upper threshold {u} is below average {}", r.average),
                );
            }
            None if i != last => {
                return fail(
                    i,
                    format!("quantile {q}: only the top quantile may omit its upper threshold"),
                );
            }
            _ => {}
        }
        if i > 0 {
            let p = &rows[i - 1];
            if r.lower < p.lower {
                return fail(
                    i,
                    format!("quantile {q}: lower threshold {} decreases from {}", r.lower, p.lower),
                );
            }
            if let (Some(u0), Some(u1)) = (p.upper, r.upper) {
                if u1 < u0 {
                    return fail(i, format!("quantile {q}: upper threshold {u1} decreases from {u0}"));
                }
            }
        }
    }
    Ok(())
}

impl QuantileTable {
    pub fn new(year: i32, rows: Vec<QuantileRow>) -> Result<Self> {
        validate_rows(&rows).map_err(|v| Error::invalid(format!("year {year}: {}", v.message)))?;
        Ok(Self {
            year,
            rows,
            population: None,
            concept: None,
        })
    }

    pub fn with_population(mut self, population: f64) -> Result<Self> {
        if !(population.is_finite() && population > 0.0) {
            return Err(Error::invalid(format!("population must be positive, got {population}")));
        }
        self.population = Some(population);
        Ok(self)
    }

    pub fn with_concept(mut self, concept: impl Into<String>) -> Self {
        self.concept = Some(concept.into());
        self
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn rows(&self) -> &[QuantileRow] {
        &self.rows
    }

    /// Number of quantiles, `Q`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn population(&self) -> Option<f64> {
        self.population
    }

    pub fn concept(&self) -> Option<&str> {
        self.concept.as_deref()
    }

    pub fn averages(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.average).collect()
    }

    /// Mean income (equal-population quantiles).
    pub fn gdp_per_capita(&self) -> f64 {
        gdp_per_capita(&self.averages()).expect("validated table")
    }

    /// Income share of the top `fraction` of quantiles.
    pub fn top_share(&self, fraction: f64) -> Result<f64> {
        crate::metrics::top_share(&self.averages(), fraction)
    }
}

/// Which per-quantile statistic stands in for the quantile's income.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[default]
    Average,
    Lower,
    Upper,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Average, Basis::Lower, Basis::Upper];
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Average => "average",
            Basis::Lower => "lower",
            Basis::Upper => "upper",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Basis::Average),
            "lower" => Ok(Basis::Lower),
            "upper" => Ok(Basis::Upper),
            _ => Err(Error::invalid(format!("unknown basis {s:?} (average, lower, upper)"))),
        }
    }
}

/// A threshold that was missing or zero and had to be replaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Substitution {
    /// Zero lower threshold replaced by a tenth of the smallest positive threshold.
    LowerFloor { year: i32, quantile: u32, value: f64 },
    /// Missing top upper threshold replaced by the quantile average.
    UpperFromAverage { year: i32, quantile: u32, value: f64 },
}

/// Per-quantile values on `basis`, with any substitutions made.
pub fn basis_values(table: &QuantileTable, basis: Basis) -> (Vec<f64>, Vec<Substitution>) {
    let mut subs = Vec::new();
    let values = match basis {
        Basis::Average => table.averages(),
        Basis::Lower => {
            let floor = 0.1
                * table
                    .rows
                    .iter()
                    .flat_map(|r| [Some(r.lower), r.upper])
                    .flatten()
                    .filter(|&v| v > 0.0)
                    .fold(f64::INFINITY, f64::min);
            table
                .rows
                .iter()
                .map(|r| {
                    if r.lower > 0.0 {
                        r.lower
                    } else {
                        subs.push(Substitution::LowerFloor {
                            year: table.year,
                            quantile: r.quantile,
                            value: floor,
                        });
                        floor
                    }
                })
                .collect()
        }
        Basis::Upper => table
            .rows
            .iter()
            .map(|r| match r.upper {
                Some(u) => u,
                None => {
                    subs.push(Substitution::UpperFromAverage {
                        year: table.year,
                        quantile: r.quantile,
                        value: r.average,
                    });
                    r.average
                }
            })
            .collect(),
    };
    (values, subs)
}

fn checked_basis_values(table: &QuantileTable, basis: Basis) -> Result<(Vec<f64>, Vec<Substitution>)> {
    let (values, subs) = basis_values(table, basis);
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::domain(format!(
            "year {}, quantile {}: {basis} value {} is not positive",
            table.year, table.rows[i].quantile, values[i]
        )));
    }
    Ok((values, subs))
}

/// A growth estimate together with the substitutions it relied on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisEstimate {
    pub basis: Basis,
    pub rate: f64,
    pub substitutions: Vec<Substitution>,
}

/// Time-average growth rate as the mean over quantiles of `Delta ln x^(q) / dt`.
///
/// The `lower` and `upper` bases give crude bounds on the `average` estimate.
pub fn time_average_growth_from_quantiles(
    q0: &QuantileTable,
    q1: &QuantileTable,
    dt: f64,
    basis: Basis,
) -> Result<BasisEstimate> {
    if q0.len() != q1.len() {
        return Err(Error::invalid(format!(
            "quantile counts differ: {} in {} vs {} in {}",
            q0.len(),
            q0.year,
            q1.len(),
            q1.year
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let (v0, mut subs) = checked_basis_values(q0, basis)?;
    let (v1, s1) = checked_basis_values(q1, basis)?;
    subs.extend(s1);
    Ok(BasisEstimate {
        basis,
        rate: time_average_growth_rate(&v0, &v1, dt)?,
        substitutions: subs,
    })
}

/// Geometric mean of the basis values (DDP per capita on that basis).
pub fn ddp_from_quantiles(table: &QuantileTable, basis: Basis) -> Result<(f64, Vec<Substitution>)> {
    let (v, subs) = checked_basis_values(table, basis)?;
    Ok((mean_log_income(&v)?.exp(), subs))
}

/// Ergodicity gap of the quantile averages.
///
/// Within-quantile dispersion is invisible to grouped data, so this
/// underestimates the gap of the underlying population.
pub fn ergodicity_gap_from_quantiles(table: &QuantileTable) -> Result<f64> {
    ergodicity_gap(&table.averages())
}

/// Sorts `incomes` and splits them into `q` equal-population quantiles.
///
/// Thresholds are the smallest and largest income in each group.
pub fn group_into_quantiles(incomes: &[f64], q: usize, year: i32) -> Result<QuantileTable> {
    if q == 0 || incomes.is_empty() || !incomes.len().is_multiple_of(q) {
        return Err(Error::invalid(format!(
            "cannot split {} incomes into {q} equal quantiles",
            incomes.len()
        )));
    }
    let mut sorted = incomes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let size = sorted.len() / q;
    let rows = sorted
        .chunks(size)
        .enumerate()
        .map(|(i, g)| {
            let average = if g.iter().all(|&x| x == g[0]) {
                g[0]
            } else {
                exact_mean(g)
            };
            QuantileRow {
                quantile: i as u32 + 1,
                average,
                lower: g[0],
                upper: Some(g[g.len() - 1]),
            }
        })
        .collect();
    QuantileTable::new(year, rows).map(|t| t.with_population(incomes.len() as f64).unwrap())
}

/// Removal of the lowest incomes before computing statistics.
pub trait BottomTruncation: Sized {
    /// Drops the bottom `fraction` (in `[0, 1)`) of the population.
    fn truncate_bottom(&self, fraction: f64) -> Result<Self>;
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "truncation fraction must lie in [0, 1), got {fraction}"
        )));
    }
    Ok(())
}

impl BottomTruncation for QuantileTable {
    fn truncate_bottom(&self, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        let q = self.rows.len();
        let exact = fraction * q as f64;
        let k = exact.round();
        if (exact - k).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "truncating {fraction} of {q} quantiles removes {exact} quantiles; \
                 choose a fraction that is a multiple of 1/{q}"
            )));
        }
        let k = k as usize;
        Ok(Self {
            year: self.year,
            rows: self.rows[k..].to_vec(),
            population: self.population.map(|p| p * (q - k) as f64 / q as f64),
            concept: self.concept.clone(),
        })
    }
}

impl BottomTruncation for IncomeCrossSection {
    /// Removes the `floor(fraction * N)` smallest incomes; survivors keep their order.
    fn truncate_bottom(&self, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        let n = self.len();
        let k = ((fraction * n as f64) + 1e-9).floor() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.incomes()[a].total_cmp(&self.incomes()[b]).then(a.cmp(&b)));
        let mut keep = vec![true; n];
        for &i in &order[..k] {
            keep[i] = false;
        }
        let incomes = self
            .incomes()
            .iter()
            .zip(&keep)
            .filter_map(|(x, k)| k.then_some(*x))
            .collect();
        IncomeCrossSection::new(self.time(), incomes)
    }
}

/// Cumulative first-to-last growth at one truncation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Lowest percentile still included (1 keeps everything).
    pub truncation_percentile: u32,
    pub gdp_growth: f64,
    pub ddp_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSweepResult {
    pub first_year: i32,
    pub last_year: i32,
    pub points: Vec<SweepPoint>,
}

/// Cumulative growth of GDP and DDP per capita for every truncation point 1..=100.
///
/// At point 100 only the top percentile remains and the two coincide exactly.
pub fn truncation_sweep(series: &[QuantileTable]) -> Result<TruncationSweepResult> {
    if series.len() < 2 {
        return Err(Error::invalid("truncation sweep needs at least two years"));
    }
    if let Some(t) = series.iter().find(|t| t.len() != 100) {
        return Err(Error::invalid(format!(
            "truncation sweep needs percentile tables; year {} has {} quantiles",
            t.year,
            t.len()
        )));
    }
    let first = series.iter().min_by_key(|t| t.year).unwrap();
    let last = series.iter().max_by_key(|t| t.year).unwrap();
    let (a0, a1) = (first.averages(), last.averages());
    let points = (1..=100u32)
        .map(|p| {
            let from = p as usize - 1;
            let (s0, s1) = (&a0[from..], &a1[from..]);
            let gdp = gdp_per_capita(s1)?.ln() - gdp_per_capita(s0)?.ln();
            let ddp = mean_log_income(s1)? - mean_log_income(s0)?;
            Ok(SweepPoint {
                truncation_percentile: p,
                gdp_growth: gdp.exp(),
                ddp_growth: ddp.exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncationSweepResult {
        first_year: first.year,
        last_year: last.year,
        points,
    })
}
