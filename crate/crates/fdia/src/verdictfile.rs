//! Per-bus detection results as CSV:
//! `bus,kappa_v,kappa_i,kappa_i_calc,suspect,flagged_elements,stage1_suspect,stage2_suspect,cleared_by`.
//!
//! `suspect` is the final decision. Flagged elements are `;`-separated
//! tokens `direct@T` or `viaN@T` (reconstruction from neighbor `N` at time
//! `T`). Without refinement `stage2_suspect` and `cleared_by` are `-`.

use std::fmt::Write as _;

use fdia_core::detection::{DetectionVerdict, MfElement, Provenance};
use fdia_core::refinement::RefinementResult;
use fdia_core::BusId;

use crate::error::{data_lines, fields, number, Error, ParseError};

pub const HEADER: &str =
    "bus,kappa_v,kappa_i,kappa_i_calc,suspect,flagged_elements,stage1_suspect,stage2_suspect,cleared_by";

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow {
    pub bus: BusId,
    pub kappa_v: f64,
    pub kappa_i: f64,
    pub kappa_i_calc: f64,
    pub suspect: bool,
    pub flagged_elements: Vec<(Provenance, u32)>,
    pub stage1_suspect: bool,
    pub stage2_suspect: Option<bool>,
    pub cleared_by: Option<BusId>,
}

pub fn rows(verdict: &DetectionVerdict, refinement: Option<&RefinementResult>) -> Vec<VerdictRow> {
    verdict
        .buses
        .iter()
        .map(|b| {
            let stage2 = refinement.map(|r| r.final_suspects.contains(&b.bus));
            VerdictRow {
                bus: b.bus,
                kappa_v: b.criteria.kappa_v,
                kappa_i: b.criteria.kappa_i_direct,
                kappa_i_calc: b.criteria.kappa_i_calc,
                suspect: stage2.unwrap_or(b.suspect),
                flagged_elements: b
                    .flagged_elements()
                    .map(|e: &MfElement| (e.provenance, e.time_index))
                    .collect(),
                stage1_suspect: b.suspect,
                stage2_suspect: stage2,
                cleared_by: refinement.and_then(|r| r.cleared.get(&b.bus).copied()),
            }
        })
        .collect()
}

fn element_token((p, t): &(Provenance, u32)) -> String {
    match p {
        Provenance::Direct => format!("direct@{t}"),
        Provenance::ViaNeighbor(n) => format!("via{n}@{t}"),
    }
}

fn parse_element(token: &str, n: usize) -> Result<(Provenance, u32), ParseError> {
    let bad = || ParseError::new(n, format!("invalid element `{token}`"));
    let (source, time) = token.split_once('@').ok_or_else(bad)?;
    let time: u32 = time.parse().map_err(|_| bad())?;
    let provenance = match source {
        "direct" => Provenance::Direct,
        _ => Provenance::ViaNeighbor(BusId(
            source.strip_prefix("via").and_then(|s| s.parse().ok()).ok_or_else(bad)?,
        )),
    };
    Ok((provenance, time))
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

pub fn write_verdict(rows: &[VerdictRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let elements = if r.flagged_elements.is_empty() {
            "-".to_string()
        } else {
            r.flagged_elements.iter().map(element_token).collect::<Vec<_>>().join(";")
        };
        let stage2 = r.stage2_suspect.map_or("-".to_string(), |s| flag(s).to_string());
        let cleared = r.cleared_by.map_or("-".to_string(), |b| b.to_string());
        writeln!(
            out,
            "{},{:?},{:?},{:?},{},{},{},{},{}",
            r.bus,
            r.kappa_v,
            r.kappa_i,
            r.kappa_i_calc,
            flag(r.suspect),
            elements,
            flag(r.stage1_suspect),
            stage2,
            cleared
        )
        .unwrap();
    }
    out
}

pub fn parse_verdict(text: &str) -> Result<Vec<VerdictRow>, Error> {
    parse_inner(text).map_err(|e| Error::parse("verdict", e))
}

fn parse_bool(field: &str, n: usize) -> Result<bool, ParseError> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(ParseError::new(n, format!("expected 0 or 1, found `{field}`"))),
    }
}

fn parse_inner(text: &str) -> Result<Vec<VerdictRow>, ParseError> {
    let mut out = Vec::new();
    for (n, line) in data_lines(text, HEADER)? {
        let f = fields(line, n, 9)?;
        let flagged_elements = if f[5] == "-" {
            Vec::new()
        } else {
            f[5].split(';').map(|t| parse_element(t, n)).collect::<Result<_, _>>()?
        };
        out.push(VerdictRow {
            bus: BusId(number(f[0], "bus id", n)?),
            kappa_v: number(f[1], "kappa_v", n)?,
            kappa_i: number(f[2], "kappa_i", n)?,
            kappa_i_calc: number(f[3], "kappa_i_calc", n)?,
            suspect: parse_bool(f[4], n)?,
            flagged_elements,
            stage1_suspect: parse_bool(f[6], n)?,
            stage2_suspect: if f[7] == "-" { None } else { Some(parse_bool(f[7], n)?) },
            cleared_by: if f[8] == "-" { None } else { Some(BusId(number(f[8], "bus id", n)?)) },
        });
    }
    Ok(out)
}
