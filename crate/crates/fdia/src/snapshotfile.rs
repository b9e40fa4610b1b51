//! Measurement snapshots as CSV: `time,kind,bus,neighbor,re,im`.
//!
//! `kind` is `V` (bus voltage), `I` (current sent from `bus` toward
//! `neighbor`) or `J` (injection); `neighbor` is `-` except for `I`.
//! Values are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use fdia_core::{BusId, MeasurementSet, Phasor};

use crate::error::{data_lines, fields, number, Error, ParseError};

pub const HEADER: &str = "time,kind,bus,neighbor,re,im";

pub fn write_snapshots(snapshots: &[MeasurementSet]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for s in snapshots {
        let t = s.time_index;
        for (bus, v) in &s.bus_voltages {
            writeln!(out, "{t},V,{bus},-,{:?},{:?}", v.re, v.im).unwrap();
        }
        for ((from, to), i) in &s.branch_currents {
            writeln!(out, "{t},I,{from},{to},{:?},{:?}", i.re, i.im).unwrap();
        }
        for (bus, j) in &s.injection_currents {
            writeln!(out, "{t},J,{bus},-,{:?},{:?}", j.re, j.im).unwrap();
        }
    }
    out
}

fn empty(time_index: u32) -> MeasurementSet {
    MeasurementSet {
        time_index,
        bus_voltages: BTreeMap::new(),
        branch_currents: BTreeMap::new(),
        injection_currents: BTreeMap::new(),
    }
}

/// Snapshots in ascending time order. Duplicate rows are an error.
pub fn parse_snapshots(text: &str) -> Result<Vec<MeasurementSet>, Error> {
    parse_inner(text).map_err(|e| Error::parse("snapshots", e))
}

fn parse_inner(text: &str) -> Result<Vec<MeasurementSet>, ParseError> {
    let mut by_time: BTreeMap<u32, MeasurementSet> = BTreeMap::new();
    for (n, line) in data_lines(text, HEADER)? {
        let f = fields(line, n, 6)?;
        let time: u32 = number(f[0], "time", n)?;
        let bus = BusId(number(f[2], "bus id", n)?);
        let value = Phasor::new(number(f[4], "real part", n)?, number(f[5], "imaginary part", n)?);
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(ParseError::new(n, "non-finite value"));
        }
        let set = by_time.entry(time).or_insert_with(|| empty(time));
        let neighbor_dash = |kind: &str| {
            if f[3] == "-" {
                Ok(())
            } else {
                Err(ParseError::new(n, format!("kind {kind} takes `-` as neighbor")))
            }
        };
        let previous = match f[1] {
            "V" => {
                neighbor_dash("V")?;
                set.bus_voltages.insert(bus, value)
            }
            "J" => {
                neighbor_dash("J")?;
                set.injection_currents.insert(bus, value)
            }
            "I" => {
                let to = BusId(number(f[3], "neighbor id", n)?);
                set.branch_currents.insert((bus, to), value)
            }
            other => return Err(ParseError::new(n, format!("unknown kind `{other}`"))),
        };
        if previous.is_some() {
            return Err(ParseError::new(n, "duplicate measurement"));
        }
    }
    Ok(by_time.into_values().collect())
}
