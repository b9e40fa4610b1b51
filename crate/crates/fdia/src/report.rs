//! Stored statistics (`metric,aggregate,min,max`) and their rendering.
//!
//! Rate rows are named `<column>.<metric>`, e.g. `mf2d.false_alarms_pct`;
//! `min` and `max` span the per-bus values. A few count rows (`trials`,
//! `false_clearings`, ...) leave `min` and `max` empty.

use std::fmt::Write as _;
use std::str::FromStr;

use fdia_core::detection::CriteriaSet;
use fdia_core::experiment::Column;
use fdia_core::stats::{ConfusionStats, Metric};

use crate::error::{data_lines, fields, Error, ParseError};

pub const HEADER: &str = "metric,aggregate,min,max";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Invalid(format!("unknown format `{other}` (table or csv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub metric: String,
    pub aggregate: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsTable {
    pub rows: Vec<StatRow>,
}

/// Columns reported for a criteria selection: the κ^V columns when the
/// voltage criterion is on, DCI and CCI when theirs are, then the
/// configured pipeline before and after refinement.
pub fn columns_for(criteria: CriteriaSet) -> Vec<Column> {
    let mut cols = Vec::new();
    if criteria.voltage {
        cols.extend([Column::Mf1d, Column::Mf2d]);
    }
    if criteria.direct_current {
        cols.push(Column::Dci);
    }
    if criteria.calculated_current {
        cols.push(Column::Cci);
    }
    cols.extend([Column::Stage1, Column::Pipeline]);
    cols
}

fn count_row(metric: &str, value: u64) -> StatRow {
    StatRow { metric: metric.to_string(), aggregate: Some(value as f64), min: None, max: None }
}

impl StatsTable {
    pub fn from_stats(stats: &ConfusionStats, criteria: CriteriaSet) -> Self {
        let mut rows = vec![count_row("trials", stats.trials)];
        if let Some(any) = stats.columns.values().next() {
            rows.push(count_row("attacked_measurements", any.aggregate.attacked()));
            rows.push(count_row("not_attacked_measurements", any.aggregate.not_attacked()));
        }
        rows.push(count_row("false_clearings", stats.false_clearings));
        for column in columns_for(criteria) {
            let Some(col) = stats.column(column) else { continue };
            for metric in Metric::ALL {
                let range = col.range(metric);
                rows.push(StatRow {
                    metric: format!("{}.{}", column.key(), metric.key()),
                    aggregate: metric.of(&col.aggregate),
                    min: range.map(|r| r.0),
                    max: range.map(|r| r.1),
                });
            }
        }
        for metric in Metric::ALL {
            rows.push(StatRow {
                metric: format!("currents.{}", metric.key()),
                aggregate: metric.of(&stats.currents),
                min: None,
                max: None,
            });
        }
        StatsTable { rows }
    }

    pub fn get(&self, metric: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn value(&self, column: Column, metric: Metric) -> Option<f64> {
        self.get(&format!("{}.{}", column.key(), metric.key())).and_then(|r| r.aggregate)
    }

    fn columns(&self) -> Vec<Column> {
        Column::ALL
            .into_iter()
            .filter(|c| self.rows.iter().any(|r| r.metric.split_once('.').map(|p| p.0) == Some(c.key())))
            .collect()
    }
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{x:.0}"),
        Some(x) => format!("{x:.4}"),
    }
}

pub fn write_csv(table: &StatsTable) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in &table.rows {
        writeln!(out, "{},{},{},{}", r.metric, fmt_value(r.aggregate), fmt_value(r.min), fmt_value(r.max))
            .unwrap();
    }
    out
}

pub fn parse_csv(text: &str) -> Result<StatsTable, Error> {
    parse_inner(text).map_err(|e| Error::parse("stats", e))
}

fn parse_inner(text: &str) -> Result<StatsTable, ParseError> {
    let opt = |field: &str, n: usize| -> Result<Option<f64>, ParseError> {
        if field.is_empty() {
            Ok(None)
        } else {
            crate::error::number(field, "value", n).map(Some)
        }
    };
    let mut rows = Vec::new();
    for (n, line) in data_lines(text, HEADER)? {
        let f = fields(line, n, 4)?;
        if f[0].is_empty() {
            return Err(ParseError::new(n, "empty metric name"));
        }
        rows.push(StatRow {
            metric: f[0].to_string(),
            aggregate: opt(f[1], n)?,
            min: opt(f[2], n)?,
            max: opt(f[3], n)?,
        });
    }
    Ok(StatsTable { rows })
}

fn pct_cell(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{x:.2}"))
}

/// Four-row tables: aggregate rates per column, then per-bus ranges.
pub fn render_table(table: &StatsTable) -> String {
    let cols = table.columns();
    let label_width = 28;
    let width = 15;
    let mut out = String::new();
    let count = |m: &str| table.get(m).and_then(|r| r.aggregate).map_or("?".into(), |v| fmt_value(Some(v)));
    writeln!(
        out,
        "Voltage measurements over {} trials ({} attacked, {} not attacked)",
        count("trials"),
        count("attacked_measurements"),
        count("not_attacked_measurements")
    )
    .unwrap();
    let header = |out: &mut String, title: &str| {
        write!(out, "\n{title:<label_width$}").unwrap();
        for c in &cols {
            write!(out, "{:>width$}", c.title()).unwrap();
        }
        out.push('\n');
    };

    header(&mut out, "Rate (%)");
    for metric in Metric::ALL {
        write!(out, "{:<label_width$}", metric.title()).unwrap();
        for c in &cols {
            write!(out, "{:>width$}", pct_cell(table.value(*c, metric))).unwrap();
        }
        out.push('\n');
    }

    header(&mut out, "Per-bus range (%)");
    for metric in Metric::ALL {
        write!(out, "{:<label_width$}", metric.title()).unwrap();
        for c in &cols {
            let row = table.get(&format!("{}.{}", c.key(), metric.key()));
            let cell = match row.map(|r| (r.min, r.max)) {
                Some((Some(lo), Some(hi))) => format!("{lo:.2}-{hi:.2}"),
                _ => "n/a".to_string(),
            };
            write!(out, "{cell:>width$}").unwrap();
        }
        out.push('\n');
    }

    if let Some(fc) = table.get("false_clearings").and_then(|r| r.aggregate) {
        writeln!(out, "\nAttacked measurements cleared by refinement despite a clean neighbor: {}", fmt_value(Some(fc))).unwrap();
    }
    let currents: Vec<String> = Metric::ALL
        .iter()
        .map(|m| format!("{} {}", m.title().to_lowercase(), pct_cell(table.get(&format!("currents.{}", m.key())).and_then(|r| r.aggregate))))
        .collect();
    writeln!(out, "Branch currents (by sending-bus prediction): {}", currents.join(", ")).unwrap();
    out
}

pub fn report(table: &StatsTable, format: Format) -> String {
    match format {
        Format::Table => render_table(table),
        Format::Csv => write_csv(table),
    }
}
