//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export returns a JSON string; the page parses it and draws on a
//! canvas. The `*_impl` functions hold the logic and run natively in tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ergo_growth::finite_n::{democratic_closeness_grid, plutocratic_closeness_fraction, DEFAULT_INITIAL};
use ergo_growth::quantile::{group_into_quantiles, truncation_sweep, QuantileTable};
use ergo_growth::{
    ddp_per_capita, ergodicity_gap, gbm_step_exact, gdp_per_capita, sample_initial_ensemble, simulate_trajectories,
    uniform_grid, Error, GbmParams, IncomeCrossSection, InitialDistribution, RandomSource, Result, Scheme,
};

/// Trajectories drawn on the fan chart; the statistics use the whole population.
pub const MAX_DRAWN: usize = 100;

#[derive(Debug, Serialize)]
pub struct Fan {
    pub times: Vec<f64>,
    /// Log incomes of the first `MAX_DRAWN` individuals.
    pub log_trajectories: Vec<Vec<f64>>,
    pub log_gdp_pc: Vec<f64>,
    pub log_ddp_pc: Vec<f64>,
    pub gap: Vec<f64>,
}

pub fn simulate_fan_impl(mu: f64, sigma: f64, n: usize, years: usize, seed: u64) -> Result<Fan> {
    if n > 100_000 || years > 500 {
        return Err(Error::InvalidArgument("demo limits: n <= 100000, years <= 500".into()));
    }
    let grid = uniform_grid(1.0, years);
    let panel = simulate_trajectories(
        GbmParams::new(mu, sigma)?,
        n,
        &grid,
        &mut RandomSource::new(seed),
        Scheme::Exact,
        InitialDistribution::Degenerate { x0: 1.0 },
    )?;
    let snaps = panel.snapshots();
    let series = |f: fn(&[f64]) -> Result<f64>| snaps.iter().map(|s| f(s.incomes())).collect::<Result<Vec<_>>>();
    Ok(Fan {
        times: grid.clone(),
        log_trajectories: (0..n.min(MAX_DRAWN))
            .map(|i| panel.trajectory(i).map(f64::ln).collect())
            .collect(),
        log_gdp_pc: series(gdp_per_capita)?.into_iter().map(f64::ln).collect(),
        log_ddp_pc: series(ddp_per_capita)?.into_iter().map(f64::ln).collect(),
        gap: series(ergodicity_gap)?,
    })
}

#[derive(Debug, Serialize)]
pub struct Heatmap {
    pub sigma2: Vec<f64>,
    pub n: Vec<u64>,
    /// Row-major by `sigma2`.
    pub values: Vec<f64>,
}

pub const HEATMAP_N: [u64; 12] = [2, 5, 10, 20, 50, 100, 200, 500, 1_000, 2_000, 5_000, 10_000];

/// `measure` is `"plutocratic"` (Monte Carlo) or `"democratic"` (closed form).
pub fn closeness_grid_impl(measure: &str, mu: f64, reps: u64, seed: u64) -> Result<Heatmap> {
    let sigma2: Vec<f64> = (1..=9).map(|k| 0.01 * k as f64).collect();
    let sigma_axis: Vec<f64> = sigma2.iter().map(|v| v.sqrt()).collect();
    let grid = match measure {
        "democratic" => democratic_closeness_grid(mu, &sigma_axis, &HEATMAP_N, 1.0)?,
        "plutocratic" => {
            if reps > 2_000 {
                return Err(Error::InvalidArgument("demo limit: reps <= 2000".into()));
            }
            let mut rng = RandomSource::new(seed);
            plutocratic_closeness_fraction(mu, &sigma_axis, &HEATMAP_N, reps, 1.0, DEFAULT_INITIAL, &mut rng)?
        }
        other => return Err(Error::InvalidArgument(format!("unknown measure {other:?}"))),
    };
    Ok(Heatmap {
        sigma2,
        n: HEATMAP_N.to_vec(),
        values: grid.values,
    })
}

#[derive(Debug, Serialize)]
pub struct SweepCurves {
    pub percentile: Vec<u32>,
    pub gdp_growth: Vec<f64>,
    pub ddp_growth: Vec<f64>,
}

/// Two years of a simulated population in which the poorest `collapse_share`
/// lose `collapse_factor` of their income on top of their GBM shock.
pub fn truncation_demo_impl(collapse_share: f64, collapse_factor: f64, seed: u64) -> Result<SweepCurves> {
    if !(0.0..=0.5).contains(&collapse_share) || !(0.0..1.0).contains(&collapse_factor) {
        return Err(Error::InvalidArgument(
            "collapse share must lie in [0, 0.5], factor in [0, 1)".into(),
        ));
    }
    let n = 20_000;
    let mut rng = RandomSource::new(seed);
    let initial = InitialDistribution::Lognormal {
        meanlog: 10.0,
        sdlog: 0.8,
    };
    let start = sample_initial_ensemble(initial, n, &mut rng)?;
    let end = gbm_step_exact(&start, GbmParams::new(0.02, 0.1)?, 1.0, &mut rng)?;
    let mut hit = end.incomes().to_vec();
    hit.sort_by(f64::total_cmp);
    let k = (collapse_share * n as f64) as usize;
    for x in &mut hit[..k] {
        *x *= 1.0 - collapse_factor;
    }
    let end = IncomeCrossSection::new(1.0, hit)?;
    let tables: Vec<QuantileTable> = vec![
        group_into_quantiles(start.incomes(), 100, 0)?,
        group_into_quantiles(end.incomes(), 100, 1)?,
    ];
    let sweep = truncation_sweep(&tables)?;
    Ok(SweepCurves {
        percentile: sweep.points.iter().map(|p| p.truncation_percentile).collect(),
        gdp_growth: sweep.points.iter().map(|p| p.gdp_growth).collect(),
        ddp_growth: sweep.points.iter().map(|p| p.ddp_growth).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate_fan(mu: f64, sigma: f64, n: u32, years: u32, seed: u64) -> std::result::Result<String, JsError> {
    to_js(simulate_fan_impl(mu, sigma, n as usize, years as usize, seed))
}

#[wasm_bindgen]
pub fn closeness_grid(measure: &str, mu: f64, reps: u32, seed: u64) -> std::result::Result<String, JsError> {
    to_js(closeness_grid_impl(measure, mu, reps as u64, seed))
}

#[wasm_bindgen]
pub fn truncation_demo(collapse_share: f64, collapse_factor: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js(truncation_demo_impl(collapse_share, collapse_factor, seed))
}
