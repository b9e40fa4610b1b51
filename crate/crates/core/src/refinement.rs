//! Stage-2 clearing of false alarms.
//!
//! A suspect bus is re-checked against reconstructions from neighbors that
//! are trusted: not suspect themselves, and whose reconstruction element at
//! the latest time was not flagged in stage 1. If the direct measurement
//! agrees with a trusted reconstruction it is cleared, and the bus becomes
//! trusted for the next pass. Medians from stage 1 are reused unchanged.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::detection::{reconstruct_from, BusVerdict, DetectionError, DetectionVerdict, Provenance};
use crate::grid::{BusId, GridTopology};
use crate::measurement::MeasurementSet;
use crate::phasor;

/// When several trusted references exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrustRule {
    /// Clear if any trusted reconstruction agrees.
    #[default]
    Any,
    /// Clear only if every trusted reconstruction agrees.
    All,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefinementError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("snapshot time {snapshot} does not match verdict time {verdict}")]
    TimeMismatch { snapshot: u32, verdict: u32 },
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RefinementResult {
    pub final_suspects: BTreeSet<BusId>,
    /// Cleared bus and the trusted neighbor whose reconstruction confirmed it.
    pub cleared: BTreeMap<BusId, BusId>,
    /// Passes that cleared at least one bus.
    pub iterations: usize,
    /// Final suspects whose neighbors are all suspect.
    pub unresolved: BTreeSet<BusId>,
}

impl RefinementResult {
    /// Copy of `verdict` with suspect flags replaced by the final suspects.
    pub fn apply(&self, verdict: &DetectionVerdict) -> DetectionVerdict {
        let mut out = verdict.clone();
        for b in &mut out.buses {
            b.suspect = self.final_suspects.contains(&b.bus);
        }
        out
    }
}

fn trusted_neighbors(
    topology: &GridTopology,
    bus: &BusVerdict,
    suspects: &BTreeSet<BusId>,
    time: u32,
) -> Result<Vec<BusId>, DetectionError> {
    Ok(topology
        .neighbors(bus.bus)?
        .iter()
        .map(|n| n.bus)
        .filter(|t| !suspects.contains(t) && !bus.is_flagged(Provenance::ViaNeighbor(*t), time))
        .collect())
}

/// First trusted neighbor confirming `bus`, under `rule`.
fn confirming_reference(
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    bus: &BusVerdict,
    trusted: &[BusId],
    epsilon: f64,
    rule: TrustRule,
    form: crate::detection::ReconstructionForm,
) -> Result<Option<BusId>, RefinementError> {
    if trusted.is_empty() {
        return Ok(None);
    }
    let direct = snapshot
        .voltage(bus.bus)
        .ok_or(DetectionError::MissingMeasurement {
            time_index: snapshot.time_index,
            kind: crate::estimation::MeasurementKind::Voltage(bus.bus),
        })?;
    let scale = phasor::magnitude(bus.criteria.v_hat);
    let mut first = None;
    for &t in trusted {
        let reference = reconstruct_from(topology, snapshot, bus.bus, t, form)?;
        let agrees = phasor::magnitude(direct - reference) / scale <= epsilon;
        match (agrees, rule) {
            (true, _) if first.is_none() => first = Some(t),
            (false, TrustRule::All) => return Ok(None),
            _ => {}
        }
        if agrees && rule == TrustRule::Any {
            break;
        }
    }
    Ok(first)
}

/// Iterative clearing with the existential trust rule.
pub fn refine(
    verdict: &DetectionVerdict,
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    epsilon: f64,
) -> Result<RefinementResult, RefinementError> {
    refine_with(verdict, topology, snapshot, epsilon, TrustRule::Any)
}

/// Iterative clearing. `snapshot` is the one stage 1 evaluated currents on
/// (the latest). Each pass decides from the previous pass's suspect set.
pub fn refine_with(
    verdict: &DetectionVerdict,
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    epsilon: f64,
    rule: TrustRule,
) -> Result<RefinementResult, RefinementError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(RefinementError::InvalidEpsilon(epsilon));
    }
    if snapshot.time_index != verdict.latest_time {
        return Err(RefinementError::TimeMismatch {
            snapshot: snapshot.time_index,
            verdict: verdict.latest_time,
        });
    }
    let time = verdict.latest_time;
    let form = verdict.config.reconstruction;
    let mut suspects = verdict.suspects();
    let mut cleared = BTreeMap::new();
    let mut iterations = 0;
    loop {
        let mut newly = Vec::new();
        for &bus in &suspects {
            let Some(bv) = verdict.bus(bus) else { continue };
            let trusted = trusted_neighbors(topology, bv, &suspects, time)?;
            if let Some(t) =
                confirming_reference(topology, snapshot, bv, &trusted, epsilon, rule, form)?
            {
                newly.push((bus, t));
            }
        }
        if newly.is_empty() {
            break;
        }
        iterations += 1;
        for (bus, t) in newly {
            suspects.remove(&bus);
            cleared.insert(bus, t);
        }
    }
    let mut unresolved = BTreeSet::new();
    for &bus in &suspects {
        if topology.neighbors(bus).map_err(DetectionError::from)?.iter().all(|n| suspects.contains(&n.bus)) {
            unresolved.insert(bus);
        }
    }
    Ok(RefinementResult { final_suspects: suspects, cleared, iterations, unresolved })
}
