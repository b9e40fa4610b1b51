//! Attack state perturbations as CSV: `bus,c_re,c_im`.
//!
//! Buses not listed have `c = 0`. Loading a file and rebuilding
//! `a = Hc` against the same grid replays the attack exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use fdia_core::{BusId, Phasor};

use crate::error::{data_lines, fields, number, Error, ParseError};

pub const HEADER: &str = "bus,c_re,c_im";

/// Writes the non-zero entries of `c` in bus order.
pub fn write_attack(c: &BTreeMap<BusId, Phasor>) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for (bus, v) in c.iter().filter(|(_, v)| **v != Phasor::new(0.0, 0.0)) {
        writeln!(out, "{bus},{:?},{:?}", v.re, v.im).unwrap();
    }
    out
}

pub fn parse_attack(text: &str) -> Result<BTreeMap<BusId, Phasor>, Error> {
    parse_inner(text).map_err(|e| Error::parse("attack", e))
}

fn parse_inner(text: &str) -> Result<BTreeMap<BusId, Phasor>, ParseError> {
    let mut c = BTreeMap::new();
    for (n, line) in data_lines(text, HEADER)? {
        let f = fields(line, n, 3)?;
        let bus = BusId(number(f[0], "bus id", n)?);
        let v = Phasor::new(number(f[1], "c_re", n)?, number(f[2], "c_im", n)?);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(ParseError::new(n, "non-finite value"));
        }
        if c.insert(bus, v).is_some() {
            return Err(ParseError::new(n, format!("bus {bus} listed twice")));
        }
    }
    Ok(c)
}
