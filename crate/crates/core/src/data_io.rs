//! Quantile CSV ingestion and report emission.
//!
//! Quantile files use the columns
//!
//! ```text
//! year,quantile,average,lower,upper[,concept]
//! ```
//!
//! one row per (year, quantile), quantiles numbered 1..Q from the bottom.
//! `upper` may be empty for the top quantile. Lines starting with `#` are
//! comments. Reports are written as CSV (decimals with 17 significant
//! digits) or pretty-printed JSON; both round-trip values exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_n::{Measure, SweepGrid};
use crate::gbm::TrajectoryPanel;
use crate::metrics::{
    ddp_per_capita, ensemble_average_growth_rate, ergodicity_gap, gdp_per_capita, top_share, GrowthReport,
};
use crate::quantile::{
    ddp_from_quantiles, ergodicity_gap_from_quantiles, time_average_growth_from_quantiles, validate_rows, Basis,
    BottomTruncation, QuantileRow, QuantileTable, Substitution, TruncationSweepResult,
};

/// Column names of the quantile CSV schema, in emission order.
pub const QUANTILE_COLUMNS: [&str; 6] = ["year", "quantile", "average", "lower", "upper", "concept"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::invalid(format!("unknown format {s:?} (csv, json)"))),
        }
    }
}

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_err(line, e.to_string())
}

struct RawRow {
    line: u64,
    row: QuantileRow,
    concept: Option<String>,
}

/// Reads and validates quantile tables, returned sorted by year.
pub fn load_quantile_csv<R: Read>(source: R) -> Result<Vec<QuantileTable>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let header_line = rdr.position().line().max(1);
    let mut col: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        let Some(&name) = QUANTILE_COLUMNS.iter().find(|c| **c == h) else {
            return Err(parse_err(header_line, format!("unknown column {h:?}")));
        };
        if col.insert(name, i).is_some() {
            return Err(parse_err(header_line, format!("duplicate column {h:?}")));
        }
    }
    for name in &QUANTILE_COLUMNS[..5] {
        if !col.contains_key(name) {
            return Err(parse_err(header_line, format!("missing column {name:?}")));
        }
    }

    let mut by_year: BTreeMap<i32, Vec<RawRow>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| rec.get(col[name]).unwrap_or("");
        let number = |name: &str| -> Result<f64> {
            let s = field(name);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("{name}: {s:?} is not a finite number")))
        };
        let year: i32 = field("year")
            .parse()
            .map_err(|_| parse_err(line, format!("year: {:?} is not an integer", field("year"))))?;
        let quantile: u32 = field("quantile").parse().ok().filter(|q| *q >= 1).ok_or_else(|| {
            parse_err(
                line,
                format!("quantile: {:?} is not a positive integer", field("quantile")),
            )
        })?;
        let upper = match field("upper") {
            "" => None,
            _ => Some(number("upper")?),
        };
        let row = QuantileRow {
            quantile,
            average: number("average")?,
            lower: number("lower")?,
            upper,
        };
        let concept = col
            .get("concept")
            .and_then(|&i| rec.get(i))
            .filter(|s| !s.is_empty())
            .map(String::from);
        by_year.entry(year).or_default().push(RawRow { line, row, concept });
    }
    if by_year.is_empty() {
        return Err(parse_err(header_line, "no data rows"));
    }

    let mut tables = Vec::with_capacity(by_year.len());
    for (year, mut raw) in by_year {
        raw.sort_by_key(|r| r.row.quantile);
        for (i, r) in raw.iter().enumerate() {
            let expected = i as u32 + 1;
            if r.row.quantile != expected {
                let message = if r.row.quantile < expected {
                    format!("year {year}: quantile {} appears more than once", r.row.quantile)
                } else {
                    format!("year {year}: quantile {expected} is missing")
                };
                return Err(parse_err(r.line, message));
            }
        }
        let concepts: BTreeSet<&str> = raw.iter().filter_map(|r| r.concept.as_deref()).collect();
        if concepts.len() > 1 {
            return Err(parse_err(
                raw[0].line,
                format!("year {year}: mixed concepts {concepts:?}"),
            ));
        }
        let concept = concepts.into_iter().next().map(String::from);
        let rows: Vec<QuantileRow> = raw.iter().map(|r| r.row).collect();
        validate_rows(&rows).map_err(|v| parse_err(raw[v.index].line, format!("year {year}: {}", v.message)))?;
        let mut table = QuantileTable::new(year, rows)?;
        if let Some(c) = concept {
            table = table.with_concept(c);
        }
        tables.push(table);
    }
    Ok(tables)
}

/// Writes tables in the quantile CSV schema.
pub fn write_quantile_csv<W: Write>(tables: &[QuantileTable], sink: W) -> Result<()> {
    if tables.is_empty() {
        return Err(Error::invalid("no tables to write"));
    }
    let with_concept = tables.iter().any(|t| t.concept().is_some());
    let mut w = csv::Writer::from_writer(sink);
    let ncols = if with_concept { 6 } else { 5 };
    w.write_record(&QUANTILE_COLUMNS[..ncols])?;
    for t in tables {
        for r in t.rows() {
            let mut rec = vec![
                t.year().to_string(),
                r.quantile.to_string(),
                fmt_f64(r.average),
                fmt_f64(r.lower),
                r.upper.map(fmt_f64).unwrap_or_default(),
            ];
            if with_concept {
                rec.push(t.concept().unwrap_or("").to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Statistics of one year of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearStats {
    pub year: i32,
    pub gdp_pc: f64,
    pub ddp_pc: f64,
    /// GDP per capita indexed to 100 in the anchor year.
    pub gdp_index: f64,
    pub ddp_index: f64,
    pub gap: f64,
    pub top10_share: f64,
}

/// Growth rates between two consecutive years of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub from_year: i32,
    pub to_year: i32,
    pub g_plutocratic: f64,
    pub g_democratic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub basis: Basis,
    pub truncation_fraction: f64,
    pub anchor_year: i32,
    pub years: Vec<YearStats>,
    pub pairs: Vec<PairStats>,
    pub substitutions: Vec<Substitution>,
}

/// Per-year levels and per-pair growth rates of a quantile series.
///
/// Every statistic is computed on the quantiles that survive truncation.
pub fn build_series_report(
    tables: &[QuantileTable],
    truncation_fraction: f64,
    basis: Basis,
    anchor_year: Option<i32>,
) -> Result<SeriesReport> {
    if tables.len() < 2 {
        return Err(Error::invalid("a series needs at least two years"));
    }
    let mut sorted: Vec<&QuantileTable> = tables.iter().collect();
    sorted.sort_by_key(|t| t.year());
    if let Some(w) = sorted.windows(2).find(|w| w[0].year() == w[1].year()) {
        return Err(Error::invalid(format!("year {} appears twice", w[0].year())));
    }
    let truncated = sorted
        .iter()
        .map(|t| t.truncate_bottom(truncation_fraction).map_err(|e| e.in_year(t.year())))
        .collect::<Result<Vec<_>>>()?;
    let anchor_year = anchor_year.unwrap_or(truncated[0].year());
    let anchor = truncated
        .iter()
        .position(|t| t.year() == anchor_year)
        .ok_or_else(|| Error::invalid(format!("anchor year {anchor_year} is not in the series")))?;

    let mut substitutions = Vec::new();
    let mut levels = Vec::with_capacity(truncated.len());
    for t in &truncated {
        let year = t.year();
        let (ddp, subs) = ddp_from_quantiles(t, basis).map_err(|e| e.in_year(year))?;
        substitutions.extend(subs);
        let gap = ergodicity_gap_from_quantiles(t).map_err(|e| e.in_year(year))?;
        let top = t.top_share(0.1).map_err(|e| e.in_year(year))?;
        levels.push((year, t.gdp_per_capita(), ddp, gap, top));
    }
    let (gdp_anchor, ddp_anchor) = (levels[anchor].1, levels[anchor].2);
    let years = levels
        .iter()
        .map(|&(year, gdp_pc, ddp_pc, gap, top10_share)| YearStats {
            year,
            gdp_pc,
            ddp_pc,
            gdp_index: 100.0 * gdp_pc / gdp_anchor,
            ddp_index: 100.0 * ddp_pc / ddp_anchor,
            gap,
            top10_share,
        })
        .collect();

    let mut pairs = Vec::with_capacity(truncated.len() - 1);
    for w in truncated.windows(2) {
        let (t0, t1) = (&w[0], &w[1]);
        let dt = (t1.year() - t0.year()) as f64;
        let g_plutocratic =
            ensemble_average_growth_rate(&t0.averages(), &t1.averages(), dt).map_err(|e| e.in_year(t1.year()))?;
        let g_democratic = time_average_growth_from_quantiles(t0, t1, dt, basis)
            .map_err(|e| e.in_year(t1.year()))?
            .rate;
        pairs.push(PairStats {
            from_year: t0.year(),
            to_year: t1.year(),
            g_plutocratic,
            g_democratic,
        });
    }
    Ok(SeriesReport {
        basis,
        truncation_fraction,
        anchor_year,
        years,
        pairs,
        substitutions,
    })
}

/// Levels and inequality at every time of a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub rows: Vec<PanelSummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummaryRow {
    pub time: f64,
    pub gdp_pc: f64,
    pub ddp_pc: f64,
    pub gap: f64,
    pub top10_share: f64,
}

impl PanelSummary {
    pub fn from_panel(panel: &TrajectoryPanel) -> Result<Self> {
        let rows = panel
            .snapshots()
            .iter()
            .map(|s| {
                Ok(PanelSummaryRow {
                    time: s.time(),
                    gdp_pc: gdp_per_capita(s.incomes())?,
                    ddp_pc: ddp_per_capita(s.incomes())?,
                    gap: ergodicity_gap(s.incomes())?,
                    top10_share: top_share(s.incomes(), 0.1)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

/// Anything [`emit_report`] can write.
pub trait Report: Serialize + DeserializeOwned {
    fn is_empty(&self) -> bool;

    fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()>;

    /// Extra `# key: value` lines describing the report itself.
    fn csv_notes(&self) -> Vec<String> {
        Vec::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl Report for SeriesReport {
    fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    fn csv_notes(&self) -> Vec<String> {
        let mut notes = vec![
            format!("basis: {}", self.basis),
            format!("truncation_fraction: {}", fmt_f64(self.truncation_fraction)),
            format!("anchor_year: {}", self.anchor_year),
        ];
        for s in &self.substitutions {
            notes.push(match s {
                Substitution::LowerFloor { year, quantile, value } => {
                    format!(
                        "substitution: year {year} quantile {quantile} lower threshold 0 -> {}",
                        fmt_f64(*value)
                    )
                }
                Substitution::UpperFromAverage { year, quantile, value } => {
                    format!(
                        "substitution: year {year} quantile {quantile} upper threshold missing -> average {}",
                        fmt_f64(*value)
                    )
                }
            });
        }
        notes
    }

    fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record([
            "year",
            "gdp_pc",
            "ddp_pc",
            "gdp_index",
            "ddp_index",
            "gap",
            "top10_share",
            "g_plutocratic",
            "g_democratic",
        ])?;
        for y in &self.years {
            let pair = self.pairs.iter().find(|p| p.to_year == y.year);
            w.write_record([
                y.year.to_string(),
                fmt_f64(y.gdp_pc),
                fmt_f64(y.ddp_pc),
                fmt_f64(y.gdp_index),
                fmt_f64(y.ddp_index),
                fmt_f64(y.gap),
                fmt_f64(y.top10_share),
                opt(pair.map(|p| p.g_plutocratic)),
                opt(pair.map(|p| p.g_democratic)),
            ])?;
        }
        Ok(())
    }
}

impl Report for SweepGrid {
    fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn csv_notes(&self) -> Vec<String> {
        let measure = match self.measure {
            Measure::Plutocratic => "plutocratic",
            Measure::Democratic => "democratic",
            Measure::DemocraticMc => "democratic_mc",
        };
        let mut notes = vec![format!("measure: {measure}")];
        if self.measure != Measure::Democratic {
            notes.push(format!("reps: {}", self.reps));
        }
        notes.push(format!("mu: {}", fmt_f64(self.metadata.mu)));
        notes.push(format!("dt: {}", fmt_f64(self.metadata.dt)));
        if let Some(seed) = self.metadata.seed {
            notes.push(format!("seed: {seed}"));
        }
        notes
    }

    fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["sigma", "n", "value"])?;
        for (s, n, v) in self.cells() {
            w.write_record([fmt_f64(s), n.to_string(), fmt_f64(v)])?;
        }
        Ok(())
    }
}

impl Report for GrowthReport {
    fn is_empty(&self) -> bool {
        false
    }

    fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record([
            "dt",
            "g_plutocratic",
            "g_democratic",
            "gap_initial",
            "gap_terminal",
            "gdp_pc_initial",
            "gdp_pc_terminal",
            "ddp_pc_initial",
            "ddp_pc_terminal",
            "top10_share_initial",
            "top10_share_terminal",
        ])?;
        w.write_record(
            [
                self.dt,
                self.g_plutocratic,
                self.g_democratic,
                self.gap_initial,
                self.gap_terminal,
                self.gdp_pc_initial,
                self.gdp_pc_terminal,
                self.ddp_pc_initial,
                self.ddp_pc_terminal,
                self.top10_share_initial,
                self.top10_share_terminal,
            ]
            .map(fmt_f64),
        )?;
        Ok(())
    }
}

impl Report for TruncationSweepResult {
    fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn csv_notes(&self) -> Vec<String> {
        vec![format!("years: {}-{}", self.first_year, self.last_year)]
    }

    fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["truncation_percentile", "gdp_growth", "ddp_growth"])?;
        for p in &self.points {
            w.write_record([
                p.truncation_percentile.to_string(),
                fmt_f64(p.gdp_growth),
                fmt_f64(p.ddp_growth),
            ])?;
        }
        Ok(())
    }
}

impl Report for TrajectoryPanel {
    fn is_empty(&self) -> bool {
        self.snapshots().is_empty()
    }

    fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["individual", "time", "income"])?;
        for i in 0..self.population() {
            for (t, x) in self.time_grid().iter().zip(self.trajectory(i)) {
                w.write_record([i.to_string(), fmt_f64(*t), fmt_f64(x)])?;
            }
        }
        Ok(())
    }
}

impl Report for PanelSummary {
    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["time", "gdp_pc", "ddp_pc", "gap", "top10_share"])?;
        for r in &self.rows {
            w.write_record([r.time, r.gdp_pc, r.ddp_pc, r.gap, r.top10_share].map(fmt_f64))?;
        }
        Ok(())
    }
}

/// Resolved run configuration recorded at the top of an output.
pub type RunConfig = BTreeMap<String, String>;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    config: RunConfig,
    report: T,
}

/// Writes `report` to `sink`.
pub fn emit_report<R: Report, W: Write>(report: &R, format: Format, sink: W) -> Result<()> {
    emit(report, format, None, sink)
}

/// Like [`emit_report`], recording `config` as `#` comment lines (CSV) or a
/// `config` object wrapping the report (JSON).
pub fn emit_report_with_config<R: Report, W: Write>(
    report: &R,
    format: Format,
    config: &RunConfig,
    sink: W,
) -> Result<()> {
    emit(report, format, Some(config), sink)
}

fn emit<R: Report, W: Write>(report: &R, format: Format, config: Option<&RunConfig>, mut sink: W) -> Result<()> {
    if report.is_empty() {
        return Err(Error::invalid("refusing to write an empty report"));
    }
    match format {
        Format::Json => {
            match config {
                Some(c) => serde_json::to_writer_pretty(
                    &mut sink,
                    &Envelope {
                        config: c.clone(),
                        report,
                    },
                )?,
                None => serde_json::to_writer_pretty(&mut sink, report)?,
            }
            sink.write_all(b"\n")?;
        }
        Format::Csv => {
            for (k, v) in config.into_iter().flatten() {
                writeln!(sink, "# {k}: {v}")?;
            }
            for note in report.csv_notes() {
                writeln!(sink, "# {note}")?;
            }
            let mut w = csv::Writer::from_writer(&mut sink);
            report.write_csv_rows(&mut w)?;
            w.flush()?;
        }
    }
    sink.flush()?;
    Ok(())
}

/// Reads a JSON report, with or without a config envelope.
pub fn load_json_report<T: DeserializeOwned, R: Read>(source: R) -> Result<T> {
    let value: serde_json::Value = serde_json::from_reader(source)?;
    let inner = match value {
        serde_json::Value::Object(mut map)
            if map.len() == 2 && map.contains_key("config") && map.contains_key("report") =>
        {
            map.remove("report").unwrap()
        }
        other => other,
    };
    Ok(serde_json::from_value(inner)?)
}
