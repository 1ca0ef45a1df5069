use ergo_growth::data_io::{
    build_series_report, emit_report, load_json_report, load_quantile_csv, write_quantile_csv, Format, PanelSummary,
    SeriesReport,
};
use ergo_growth::finite_n::{democratic_closeness_grid, plutocratic_closeness_fraction, SweepGrid, DEFAULT_INITIAL};
use ergo_growth::quantile::{
    group_into_quantiles, time_average_growth_from_quantiles, truncation_sweep, Basis, QuantileRow, QuantileTable,
    TruncationSweepResult,
};
use ergo_growth::{
    gbm_step_exact, sample_initial_ensemble, simulate_trajectories, time_average_growth_rate, uniform_grid, GbmParams,
    GrowthReport, InitialDistribution, RandomSource, Scheme, TrajectoryPanel,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FIXTURE: &str = include_str!("fixtures/divergence.csv");

fn lognormal() -> InitialDistribution {
    InitialDistribution::Lognormal {
        meanlog: 10.0,
        sdlog: 0.8,
    }
}

fn gbm_tables(n: usize, years: usize, q: usize, seed: u64, initial: InitialDistribution) -> Vec<QuantileTable> {
    let p = GbmParams::new(0.02, 0.2).unwrap();
    let panel = simulate_trajectories(
        p,
        n,
        &uniform_grid(1.0, years),
        &mut RandomSource::new(seed),
        Scheme::Exact,
        initial,
    )
    .unwrap();
    panel
        .snapshots()
        .iter()
        .enumerate()
        .map(|(k, s)| group_into_quantiles(s.incomes(), q, 2000 + k as i32).unwrap())
        .collect()
}

#[test]
fn uniform_growth_series() {
    let base: Vec<f64> = (1..=100).map(|q| 1_000.0 * (q as f64).powf(1.5)).collect();
    let tables: Vec<QuantileTable> = (0..5)
        .map(|k| {
            let scale = (0.02 * k as f64).exp();
            let avg: Vec<f64> = base.iter().map(|a| a * scale).collect();
            let rows = (0..100)
                .map(|i| QuantileRow {
                    quantile: i as u32 + 1,
                    average: avg[i],
                    lower: if i == 0 {
                        0.5 * avg[0]
                    } else {
                        (avg[i - 1] * avg[i]).sqrt()
                    },
                    upper: (i < 99).then(|| (avg[i] * avg[i + 1]).sqrt()),
                })
                .collect();
            QuantileTable::new(1990 + k, rows).unwrap()
        })
        .collect();
    for basis in Basis::ALL {
        let r = build_series_report(&tables, 0.1, basis, None).unwrap();
        for p in &r.pairs {
            assert!((p.g_plutocratic - 0.02).abs() < 1e-12, "{p:?}");
            assert!((p.g_democratic - 0.02).abs() < 1e-12, "{p:?}");
        }
        for y in &r.years {
            assert!((y.gap - r.years[0].gap).abs() < 1e-12);
            assert!((y.top10_share - r.years[0].top10_share).abs() < 1e-12);
        }
    }
}

#[test]
fn gbm_percentile_series_gap_slope() {
    let tables = gbm_tables(100_000, 10, 100, 21, InitialDistribution::Degenerate { x0: 1.0 });
    let r = build_series_report(&tables, 0.0, Basis::Average, None).unwrap();
    let t: Vec<f64> = r.years.iter().map(|y| (y.year - 2000) as f64).collect();
    let j: Vec<f64> = r.years.iter().map(|y| y.gap).collect();
    let (tm, jm) = (
        t.iter().sum::<f64>() / t.len() as f64,
        j.iter().sum::<f64>() / j.len() as f64,
    );
    let slope = t.iter().zip(&j).map(|(a, b)| (a - tm) * (b - jm)).sum::<f64>()
        / t.iter().map(|a| (a - tm).powi(2)).sum::<f64>();
    assert!((slope - 0.02).abs() <= 0.002, "slope {slope}");
}

#[test]
fn divergence_fixture_diverges() {
    let tables = load_quantile_csv(FIXTURE.as_bytes()).unwrap();
    assert_eq!(tables.len(), 3);
    for basis in Basis::ALL {
        for trunc in [0.0, 0.1] {
            let r = build_series_report(&tables, trunc, basis, None).unwrap();
            assert!(
                r.pairs.iter().all(|p| p.g_plutocratic > p.g_democratic),
                "{basis} {trunc}"
            );
        }
    }
}

#[test]
fn statistics_ignore_row_order() {
    let mut lines: Vec<&str> = FIXTURE.lines().filter(|l| !l.starts_with('#')).collect();
    let header = lines.remove(0);
    let reference = build_series_report(
        &load_quantile_csv(FIXTURE.as_bytes()).unwrap(),
        0.1,
        Basis::Average,
        None,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        lines.shuffle(&mut rng);
        let text = format!("{header}\n{}\n", lines.join("\n"));
        let tables = load_quantile_csv(text.as_bytes()).unwrap();
        assert_eq!(
            build_series_report(&tables, 0.1, Basis::Average, None).unwrap(),
            reference
        );
    }
}

#[test]
fn series_rates_match_levels() {
    let tables = load_quantile_csv(FIXTURE.as_bytes()).unwrap();
    let r = build_series_report(&tables, 0.1, Basis::Lower, Some(1997)).unwrap();
    assert_eq!(r.years[1].gdp_index, 100.0);
    for (p, w) in r.pairs.iter().zip(r.years.windows(2)) {
        let dt = (p.to_year - p.from_year) as f64;
        for (rate, a, b) in [
            (p.g_plutocratic, w[0].gdp_pc, w[1].gdp_pc),
            (p.g_democratic, w[0].ddp_pc, w[1].ddp_pc),
        ] {
            let scale = a.ln().abs().max(b.ln().abs());
            assert!((rate * dt - (b / a).ln()).abs() <= 10.0 * scale * f64::EPSILON, "{p:?}");
        }
    }
}

#[test]
fn finer_quantiles_approach_the_ungrouped_rate() {
    let p = GbmParams::new(0.02, 0.2).unwrap();
    let mut median_errors = Vec::new();
    for q in [10, 100, 1_000] {
        let mut errors: Vec<f64> = (0..9u64)
            .map(|seed| {
                let mut rng = RandomSource::new(100 + seed);
                let a = sample_initial_ensemble(lognormal(), 10_000, &mut rng).unwrap();
                let b = gbm_step_exact(&a, p, 1.0, &mut rng).unwrap();
                let oracle = time_average_growth_rate(a.incomes(), b.incomes(), 1.0).unwrap();
                let q0 = group_into_quantiles(a.incomes(), q, 0).unwrap();
                let q1 = group_into_quantiles(b.incomes(), q, 1).unwrap();
                let est = time_average_growth_from_quantiles(&q0, &q1, 1.0, Basis::Average)
                    .unwrap()
                    .rate;
                (est - oracle).abs()
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        median_errors.push(errors[4]);
    }
    assert!(median_errors.windows(2).all(|w| w[1] < w[0]), "{median_errors:?}");
}

fn json_round_trip<T>(x: &T)
where
    T: ergo_growth::data_io::Report + PartialEq + std::fmt::Debug,
{
    let mut buf = Vec::new();
    emit_report(x, Format::Json, &mut buf).unwrap();
    let back: T = load_json_report(buf.as_slice()).unwrap();
    assert_eq!(&back, x);
    let mut again = Vec::new();
    emit_report(&back, Format::Json, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn every_report_round_trips() {
    let tables = load_quantile_csv(FIXTURE.as_bytes()).unwrap();
    let series: SeriesReport = build_series_report(&tables, 0.0, Basis::Upper, None).unwrap();
    assert!(!series.substitutions.is_empty());
    json_round_trip(&series);
    let sweep: TruncationSweepResult = truncation_sweep(&tables).unwrap();
    json_round_trip(&sweep);

    let closed: SweepGrid = democratic_closeness_grid(0.02, &[0.1, 0.2, 0.3], &[10, 100, 1_000], 1.0).unwrap();
    json_round_trip(&closed);
    let mc = plutocratic_closeness_fraction(
        0.02,
        &[0.1, 0.3],
        &[5, 50],
        20,
        1.0,
        DEFAULT_INITIAL,
        &mut RandomSource::new(3),
    )
    .unwrap();
    json_round_trip(&mc);

    let p = GbmParams::new(0.05, 0.2).unwrap();
    let panel: TrajectoryPanel = simulate_trajectories(
        p,
        20,
        &uniform_grid(0.5, 6),
        &mut RandomSource::new(4),
        Scheme::Exact,
        lognormal(),
    )
    .unwrap();
    json_round_trip(&panel);
    json_round_trip(&PanelSummary::from_panel(&panel).unwrap());
    let snaps = panel.snapshots();
    json_round_trip(&GrowthReport::between(&snaps[0], &snaps[6]).unwrap());
}

#[test]
fn quantile_tables_round_trip_through_csv() {
    let tables = gbm_tables(5_000, 3, 50, 31, lognormal());
    let mut buf = Vec::new();
    write_quantile_csv(&tables, &mut buf).unwrap();
    let back = load_quantile_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), tables.len());
    for (a, b) in back.iter().zip(&tables) {
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.year(), b.year());
    }
}

#[test]
fn panel_csv_is_long_form() {
    let p = GbmParams::new(0.05, 0.2).unwrap();
    let panel = simulate_trajectories(
        p,
        3,
        &uniform_grid(1.0, 4),
        &mut RandomSource::new(8),
        Scheme::Exact,
        lognormal(),
    )
    .unwrap();
    let mut buf = Vec::new();
    emit_report(&panel, Format::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "individual,time,income");
    assert_eq!(lines.len(), 1 + 3 * 5);
    let x: f64 = lines[7].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(x, panel.trajectory(1).nth(1).unwrap());
}
