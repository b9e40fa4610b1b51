//! Grid topology text format.
//!
//! ```text
//! [buses]
//! # id label
//! 1 North
//! [branches]
//! # from to r x b
//! 1 2 0.01 0.05 0.02
//! ```
//!
//! Series impedance is `r + jx`, total shunt admittance `jb`, all per unit.

use std::fmt::Write as _;
use std::path::Path;

use fdia_core::{Branch, Bus, GridTopology};

use crate::error::{read_file, Error, ParseError};

/// Name accepted in place of a path for the built-in 7-bus grid.
pub const DEFAULT_GRID: &str = "default7";

/// Text of the bundled 7-bus grid file.
pub const DEFAULT_GRID_TEXT: &str = include_str!("../data/default7.grid");

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Buses,
    Branches,
}

/// Parses and validates a grid file. Syntax errors carry line numbers;
/// topology problems come back as [`Error::Grid`].
pub fn parse_grid(text: &str) -> Result<GridTopology, Error> {
    let (buses, branches) = parse_parts(text).map_err(|e| Error::parse("grid", e))?;
    Ok(GridTopology::new(buses, branches)?)
}

fn parse_parts(text: &str) -> Result<(Vec<Bus>, Vec<Branch>), ParseError> {
    let mut section = Section::None;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let n = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "[buses]" => {
                section = Section::Buses;
                continue;
            }
            "[branches]" => {
                section = Section::Branches;
                continue;
            }
            _ if line.starts_with('[') => {
                return Err(ParseError::new(n, format!("unknown section `{line}`")));
            }
            _ => {}
        }
        match section {
            Section::None => return Err(ParseError::new(n, "data before any section header")),
            Section::Buses => {
                let (id, label) = match line.split_once(char::is_whitespace) {
                    Some((id, rest)) => (id, Some(rest.trim())),
                    None => (line, None),
                };
                let id: u32 = crate::error::number(id, "bus id", n)?;
                buses.push(match label {
                    Some(l) if !l.is_empty() => Bus::labeled(id, l),
                    _ => Bus::new(id),
                });
            }
            Section::Branches => {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(ParseError::new(
                        n,
                        format!("branch needs `from to r x b`, found {} fields", parts.len()),
                    ));
                }
                let from = crate::error::number(parts[0], "bus id", n)?;
                let to = crate::error::number(parts[1], "bus id", n)?;
                let mut vals = [0.0; 3];
                for (slot, (field, what)) in vals.iter_mut().zip(parts[2..].iter().zip(["r", "x", "b"])) {
                    let v: f64 = crate::error::number(field, what, n)?;
                    if !v.is_finite() {
                        return Err(ParseError::new(n, format!("{what} must be finite")));
                    }
                    *slot = v;
                }
                branches.push(Branch::from_rxb(from, to, vals[0], vals[1], vals[2]));
            }
        }
    }
    Ok((buses, branches))
}

/// Serializes `topology`; parsing the output gives back an equal topology.
/// Shunt conductance is not representable and is dropped.
pub fn write_grid(topology: &GridTopology) -> String {
    let mut out = String::from("[buses]\n");
    for bus in topology.buses() {
        match &bus.label {
            Some(label) => writeln!(out, "{} {}", bus.id, label),
            None => writeln!(out, "{}", bus.id),
        }
        .unwrap();
    }
    out.push_str("\n[branches]\n");
    for br in topology.branches() {
        writeln!(
            out,
            "{} {} {:?} {:?} {:?}",
            br.from, br.to, br.z_series.re, br.z_series.im, br.y_shunt_total.im
        )
        .unwrap();
    }
    out
}

/// `default7` or a path to a grid file.
pub fn load_grid(source: &str) -> Result<GridTopology, Error> {
    if source == DEFAULT_GRID {
        return Ok(GridTopology::default_seven_bus());
    }
    let path = Path::new(source);
    parse_grid(&read_file(path)?).map_err(|e| match e {
        Error::Parse { error, .. } => Error::parse(path.display().to_string(), error),
        other => other,
    })
}
