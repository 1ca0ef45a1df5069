//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use ergo_growth::data_io::{build_series_report, emit_report, load_quantile_csv, Format};
use ergo_growth::finite_n::{
    democratic_closeness_fraction_mc, democratic_closeness_probability, plutocratic_closeness_fraction, Preset,
    DEFAULT_INITIAL,
};
use ergo_growth::quantile::{group_into_quantiles, time_average_growth_from_quantiles, truncation_sweep, Basis};
use ergo_growth::{
    ensemble_average_growth_rate, ergodicity_gap, gbm_step_exact, sample_initial_ensemble, simulate_trajectories,
    time_average_growth_rate, uniform_grid, GbmParams, IncomeCrossSection, InitialDistribution, RandomSource, Result,
    Scheme,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn degenerate(x0: f64) -> InitialDistribution {
    InitialDistribution::Degenerate { x0 }
}

fn one_step(p: GbmParams, n: usize, x0: f64, dt: f64, seed: u64) -> Result<(IncomeCrossSection, IncomeCrossSection)> {
    let mut rng = RandomSource::new(seed);
    let start = sample_initial_ensemble(degenerate(x0), n, &mut rng)?;
    let end = gbm_step_exact(&start, p, dt, &mut rng)?;
    Ok((start, end))
}

fn gbm_limits() -> Result<Outcome> {
    let p = GbmParams::new(0.05, 0.2)?;
    let (a, b) = one_step(p, 1_000_000, 1.0, 1.0, 11)?;
    let g_plu = ensemble_average_growth_rate(a.incomes(), b.incomes(), 1.0)?;
    let g_dem = time_average_growth_rate(a.incomes(), b.incomes(), 1.0)?;
    let pass = (g_plu - 0.05).abs() <= 6e-4 && (g_dem - 0.03).abs() <= 6e-4;
    outcome(
        pass,
        format!("g_plutocratic = {g_plu:.6} (0.05 +- 6e-4), g_democratic = {g_dem:.6} (0.03 +- 6e-4)"),
    )
}

fn gap_slope() -> Result<Outcome> {
    let p = GbmParams::new(0.05, 0.2)?;
    let grid = uniform_grid(1.0, 10);
    let panel = simulate_trajectories(
        p,
        100_000,
        &grid,
        &mut RandomSource::new(12),
        Scheme::Exact,
        degenerate(1.0),
    )?;
    let js = panel
        .snapshots()
        .iter()
        .map(|s| ergodicity_gap(s.incomes()))
        .collect::<Result<Vec<_>>>()?;
    let tm = grid.iter().sum::<f64>() / grid.len() as f64;
    let jm = js.iter().sum::<f64>() / js.len() as f64;
    let sxy: f64 = grid.iter().zip(&js).map(|(t, j)| (t - tm) * (j - jm)).sum();
    let sxx: f64 = grid.iter().map(|t| (t - tm).powi(2)).sum();
    let slope = sxy / sxx;
    let rel = (slope - 0.02).abs() / 0.02;
    outcome(
        rel <= 0.10,
        format!(
            "slope of J(t) = {slope:.6}/year, {:.2}% from 0.02 (limit 10%)",
            100.0 * rel
        ),
    )
}

fn log_increments() -> Result<Outcome> {
    let (mu, sigma, dt) = (0.05, 0.2, 1.0);
    let p = GbmParams::new(mu, sigma)?;
    let (a, b) = one_step(p, 1_000_000, 1.0, dt, 13)?;
    let d: Vec<f64> = a
        .incomes()
        .iter()
        .zip(b.incomes())
        .map(|(x0, x1)| (x1 / x0).ln())
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let target_mean = (mu - 0.5 * sigma * sigma) * dt;
    let target_var = sigma * sigma * dt;
    let se = (target_var / n).sqrt();
    let mean_ok = (mean - target_mean).abs() <= 3.0 * se;
    let var_ok = (var / target_var - 1.0).abs() <= 0.02;
    outcome(
        mean_ok && var_ok,
        format!(
            "mean = {mean:.6} ({:.2} SE from {target_mean}), variance = {var:.6} ({:+.3}% vs {target_var:.4})",
            (mean - target_mean).abs() / se,
            100.0 * (var / target_var - 1.0)
        ),
    )
}

fn erf_point() -> Result<Outcome> {
    // 0.5 + 0.5 erf(1), 30-digit reference
    const REFERENCE: f64 = 0.921_350_396_474_857_506_316_954_837_998;
    let p = democratic_closeness_probability(0.2, 800, 1.0)?;
    let closed_ok = (p - 0.921350).abs() <= 1e-6 && (p - REFERENCE).abs() <= 1e-15;
    let mc = democratic_closeness_fraction_mc(
        0.02,
        &[0.2],
        &[800],
        10_000,
        1.0,
        DEFAULT_INITIAL,
        &mut RandomSource::new(14),
    )?;
    let f = mc.value(0, 0);
    let se = (p * (1.0 - p) / 10_000.0).sqrt();
    let mc_ok = (f - p).abs() <= 3.0 * se;
    outcome(
        closed_ok && mc_ok,
        format!(
            "closed form = {p:.10}, Monte Carlo = {f:.4} ({:.2} binomial SE)",
            (f - p).abs() / se
        ),
    )
}

fn region_check() -> Result<Outcome> {
    let preset = Preset::desk();
    let (mu, dt) = (0.02, 1.0);
    let grid = plutocratic_closeness_fraction(
        mu,
        &preset.sigma_axis,
        &preset.n_axis,
        preset.reps,
        dt,
        DEFAULT_INITIAL,
        &mut RandomSource::new(15),
    )?;
    let mut cells = 0;
    let mut worst_plu = f64::INFINITY;
    let mut worst_dem = f64::INFINITY;
    for (i, &s) in preset.sigma_axis.iter().enumerate() {
        for (j, &n) in preset.n_axis.iter().enumerate() {
            if s * s <= 0.04 + 1e-12 && n >= 100_000 {
                cells += 1;
                worst_plu = worst_plu.min(grid.value(i, j));
                worst_dem = worst_dem.min(democratic_closeness_probability(s, n, dt)?);
            }
        }
    }
    outcome(
        cells > 0 && worst_plu > 0.9 && worst_dem > 0.9,
        format!(
            "{cells} cells, min plutocratic fraction = {worst_plu:.3}, min democratic probability = {worst_dem:.6}"
        ),
    )
}

fn quantile_oracle() -> Result<Outcome> {
    let p = GbmParams::new(0.02, 0.2)?;
    let initial = InitialDistribution::Lognormal {
        meanlog: 10.0,
        sdlog: 0.8,
    };
    let mut rng = RandomSource::new(16);
    let start = sample_initial_ensemble(initial, 100_000, &mut rng)?;
    let evolved = gbm_step_exact(&start, p, 1.0, &mut rng)?;
    // Comonotone coupling: the i-th poorest stays the i-th poorest, so every
    // percentile group holds the same people in both years.
    let mut x0 = start.incomes().to_vec();
    let mut x1 = evolved.incomes().to_vec();
    x0.sort_by(f64::total_cmp);
    x1.sort_by(f64::total_cmp);
    let oracle = time_average_growth_rate(&x0, &x1, 1.0)?;
    let q0 = group_into_quantiles(&x0, 100, 0)?;
    let q1 = group_into_quantiles(&x1, 100, 1)?;
    let est: Vec<f64> = Basis::ALL
        .iter()
        .map(|&b| time_average_growth_from_quantiles(&q0, &q1, 1.0, b).map(|e| e.rate))
        .collect::<Result<_>>()?;
    let avg = est[Basis::ALL.iter().position(|b| *b == Basis::Average).unwrap()];
    let lo = est.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = est.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let err = (avg - oracle).abs();
    outcome(
        lo <= avg && avg <= hi && err <= 2e-3,
        format!(
            "average basis = {avg:.6} in [{lo:.6}, {hi:.6}], ungrouped = {oracle:.6}, error = {err:.2e} (limit 2e-3)"
        ),
    )
}

fn sweep_endpoint() -> Result<Outcome> {
    let p = GbmParams::new(0.02, 0.2)?;
    let grid = uniform_grid(1.0, 5);
    let initial = InitialDistribution::Lognormal {
        meanlog: 10.0,
        sdlog: 0.8,
    };
    let panel = simulate_trajectories(p, 10_000, &grid, &mut RandomSource::new(17), Scheme::Exact, initial)?;
    let tables = panel
        .snapshots()
        .iter()
        .enumerate()
        .map(|(k, s)| group_into_quantiles(s.incomes(), 100, 2000 + k as i32))
        .collect::<Result<Vec<_>>>()?;
    let sweep = truncation_sweep(&tables)?;
    let top = sweep.points.iter().find(|pt| pt.truncation_percentile == 100).unwrap();
    outcome(
        top.gdp_growth.to_bits() == top.ddp_growth.to_bits(),
        format!(
            "at percentile 100: GDP growth = {:e}, DDP growth = {:e}",
            top.gdp_growth, top.ddp_growth
        ),
    )
}

fn ulp_of(scale: f64) -> f64 {
    scale.abs().max(f64::MIN_POSITIVE) * f64::EPSILON
}

fn jensen_suite() -> Result<Outcome> {
    let mut gen = ChaCha8Rng::seed_from_u64(18);
    let mut violations = Vec::new();
    let mut equal_cases = 0;
    for k in 0..1_000u64 {
        let n = gen.random_range(2..=200usize);
        // every 20th pair has no volatility, so all terminal incomes agree
        let sigma = if k % 20 == 0 { 0.0 } else { gen.random_range(0.01..0.6) };
        let mu = gen.random_range(-0.1..0.1);
        let dt = gen.random_range(0.25..5.0);
        let x0 = gen.random_range(1.0..1e6);
        let (a, b) = one_step(GbmParams::new(mu, sigma)?, n, x0, dt, 1_000 + k)?;
        let (xa, xb) = (a.incomes(), b.incomes());
        let g_plu = ensemble_average_growth_rate(xa, xb, dt)?;
        let g_dem = time_average_growth_rate(xa, xb, dt)?;
        let all_equal = xb.iter().all(|&x| x == xb[0]);
        if all_equal {
            equal_cases += 1;
        }
        if g_plu < g_dem || (g_plu == g_dem) != all_equal {
            violations.push(format!(
                "pair {k}: g_plu {g_plu} vs g_dem {g_dem}, all_equal {all_equal}"
            ));
        }
        let (j0, j1) = (ergodicity_gap(xa)?, ergodicity_gap(xb)?);
        let lhs = (g_plu - g_dem) * dt;
        let scale = x0.ln().abs().max(xb.iter().map(|x| x.ln().abs()).fold(0.0, f64::max));
        if (lhs - (j1 - j0)).abs() > 10.0 * ulp_of(scale) {
            violations.push(format!("pair {k}: (g_plu - g_dem) dt = {lhs:e}, dJ = {:e}", j1 - j0));
        }
        let mut shuffled = xb.to_vec();
        for _ in 0..100 {
            shuffled.shuffle(&mut gen);
            let same = ensemble_average_growth_rate(xa, &shuffled, dt)?.to_bits() == g_plu.to_bits()
                && time_average_growth_rate(xa, &shuffled, dt)?.to_bits() == g_dem.to_bits()
                && ergodicity_gap(&shuffled)?.to_bits() == j1.to_bits();
            if !same {
                violations.push(format!("pair {k}: statistics changed under permutation"));
                break;
            }
        }
    }
    let detail = match violations.first() {
        None => format!("1000 pairs ({equal_cases} with equal terminal incomes), 100 permutations each, no violations"),
        Some(v) => format!("{} violations, first: {v}", violations.len()),
    };
    outcome(violations.is_empty() && equal_cases > 0, detail)
}

fn divergence_fixture() -> Result<Outcome> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/divergence.csv");
    let tables = load_quantile_csv(std::fs::File::open(path)?)?;
    let report = build_series_report(&tables, 0.10, Basis::Average, None)?;
    let mut sink = Vec::new();
    emit_report(&report, Format::Json, &mut sink)?;
    emit_report(&report, Format::Csv, &mut sink)?;
    emit_report(&truncation_sweep(&tables)?, Format::Csv, &mut sink)?;
    let diverging = report.pairs.iter().all(|p| p.g_plutocratic > p.g_democratic);
    let rates: Vec<String> = report
        .pairs
        .iter()
        .map(|p| {
            format!(
                "{}-{}: {:.4} > {:.4}",
                p.from_year, p.to_year, p.g_plutocratic, p.g_democratic
            )
        })
        .collect();
    outcome(
        diverging && report.pairs.len() == 2,
        format!(
            "substitute fixture (empirical national series need an external dataset); {}",
            rates.join(", ")
        ),
    )
}

type Check = fn() -> Result<Outcome>;

fn main() {
    let checks: [(&str, &str, Duration, Check); 9] = [
        ("1", "GBM analytic limits", Duration::from_secs(10), gbm_limits),
        ("2", "ergodicity-gap slope", Duration::from_secs(30), gap_slope),
        (
            "3",
            "log-increment distribution",
            Duration::from_secs(10),
            log_increments,
        ),
        ("4", "erf formula point check", Duration::MAX, erf_point),
        (
            "5",
            "finite-N region check (desk preset)",
            Duration::from_secs(300),
            region_check,
        ),
        (
            "6",
            "quantile estimator vs ungrouped oracle",
            Duration::MAX,
            quantile_oracle,
        ),
        ("7", "truncation-sweep endpoint identity", Duration::MAX, sweep_endpoint),
        ("8", "Jensen property suite", Duration::MAX, jensen_suite),
        ("9", "divergence fixture pipeline", Duration::MAX, divergence_fixture),
    ];
    let mut failures = 0;
    for (id, name, limit, check) in checks {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, mut detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = elapsed <= limit;
        if !in_time {
            detail.push_str(&format!("; exceeded time limit of {}s", limit.as_secs()));
        }
        let pass = pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {id} {name}: {detail} [{:.2}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
