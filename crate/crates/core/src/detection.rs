//! Median-filter detection of corrupted voltage measurements.
//!
//! Each bus voltage is measured directly and can also be reconstructed from
//! every neighbor's voltage and the current that neighbor sends into the
//! connecting line. The median of these values (over one snapshot, or over
//! three consecutive snapshots) is a robust estimate `v̂`; the largest
//! relative deviation from it is the voltage anomaly coefficient κ^V.
//! Two Kirchhoff balances, one from measured currents (κ^I) and one from
//! currents recomputed out of measured voltages (κ^Î), complete the
//! criteria. Everything for one bus uses only that bus and its neighbors.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::estimation::MeasurementKind;
use crate::grid::{Branch, BusId, GridError, GridTopology};
use crate::measurement::{pi_current, MeasurementSet};
use crate::phasor::{self, Phasor};

/// Relative deviation above which a voltage element counts as anomalous.
pub const DEFAULT_VOLTAGE_THRESHOLD: f64 = 0.05;
/// Current imbalance (pu) above which a bus is suspect.
pub const DEFAULT_CURRENT_THRESHOLD: f64 = 0.05;
/// Smallest median magnitude accepted as a reference.
pub const MIN_REFERENCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectionError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("snapshot {time_index} lacks measurement {kind}")]
    MissingMeasurement { time_index: u32, kind: MeasurementKind },
    #[error("two-dimensional filtering needs exactly 3 snapshots, got {0}")]
    SnapshotCount(usize),
    #[error("median needs an odd, non-empty list, got {0} values")]
    EvenOrEmpty(usize),
    #[error("median reference at bus {0} is too small to normalize by")]
    DegenerateReference(BusId),
    #[error("thresholds must be positive and finite")]
    InvalidThreshold,
}

/// Where an element of a median-filter sequence comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Direct,
    ViaNeighbor(BusId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfElement {
    pub value: Phasor,
    pub provenance: Provenance,
    pub time_index: u32,
}

/// The window of voltage values filtered for one bus.
#[derive(Debug, Clone, PartialEq)]
pub struct MfSequence {
    pub bus: BusId,
    pub elements: Vec<MfElement>,
}

impl MfSequence {
    pub fn values(&self) -> Vec<Phasor> {
        self.elements.iter().map(|e| e.value).collect()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Position of the element with this provenance and time.
    pub fn find(&self, provenance: Provenance, time_index: u32) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| e.provenance == provenance && e.time_index == time_index)
    }
}

/// How a "median" of complex values is chosen. Both rules select one of
/// the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianRule {
    /// Element whose magnitude is the median magnitude (lower median for
    /// even lengths).
    Magnitude,
    /// Element minimizing the summed distance to all others (vector median).
    #[default]
    Vector,
}

/// Voltage back-calculation from a neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReconstructionForm {
    /// `V_j + Z(V_j·Y/2 - I_ji)`, exact for π-model data.
    #[default]
    Consistent,
    /// `(V_j·Y/2 - I_ji)·Z`, without the `V_j` term; kept for comparison only.
    WithoutNeighborVoltage,
}

/// Magnitude-ordered median of an odd-length list; ties resolve to the
/// lowest list index.
pub fn median_phasor(values: &[Phasor]) -> Result<Phasor, DetectionError> {
    if values.is_empty() || values.len() % 2 == 0 {
        return Err(DetectionError::EvenOrEmpty(values.len()));
    }
    Ok(values[magnitude_median_index(values)])
}

/// Index of the median under `rule`. Empty lists are an error; even
/// lengths are accepted.
pub fn select_median(values: &[Phasor], rule: MedianRule) -> Result<usize, DetectionError> {
    if values.is_empty() {
        return Err(DetectionError::EvenOrEmpty(0));
    }
    Ok(match rule {
        MedianRule::Magnitude => magnitude_median_index(values),
        MedianRule::Vector => vector_median_index(values),
    })
}

fn magnitude_median_index(values: &[Phasor]) -> usize {
    let mut order: Vec<(f64, usize)> =
        values.iter().enumerate().map(|(k, v)| (phasor::magnitude(*v), k)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order[(values.len() - 1) / 2].1
}

fn vector_median_index(values: &[Phasor]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, v) in values.iter().enumerate() {
        let spread: f64 = values.iter().map(|w| phasor::magnitude(v - w)).sum();
        if spread < best.0 {
            best = (spread, k);
        }
    }
    best.1
}

/// Voltage at the far end of `branch` seen from the neighbor: `V_i(j)` from
/// `V_j` and the current `I_ji` that `j` sends into the line.
#[inline]
pub fn reconstruct_voltage(branch: &Branch, v_neighbor: Phasor, i_from_neighbor: Phasor) -> Phasor {
    v_neighbor + branch.z_series * (v_neighbor * branch.y_half() - i_from_neighbor)
}

pub fn reconstruct_voltage_with(
    form: ReconstructionForm,
    branch: &Branch,
    v_neighbor: Phasor,
    i_from_neighbor: Phasor,
) -> Phasor {
    match form {
        ReconstructionForm::Consistent => reconstruct_voltage(branch, v_neighbor, i_from_neighbor),
        ReconstructionForm::WithoutNeighborVoltage => {
            (v_neighbor * branch.y_half() - i_from_neighbor) * branch.z_series
        }
    }
}

fn missing(snapshot: &MeasurementSet, kind: MeasurementKind) -> DetectionError {
    DetectionError::MissingMeasurement { time_index: snapshot.time_index, kind }
}

fn voltage(snapshot: &MeasurementSet, bus: BusId) -> Result<Phasor, DetectionError> {
    snapshot.voltage(bus).ok_or_else(|| missing(snapshot, MeasurementKind::Voltage(bus)))
}

fn current(snapshot: &MeasurementSet, from: BusId, to: BusId) -> Result<Phasor, DetectionError> {
    snapshot
        .current(from, to)
        .ok_or_else(|| missing(snapshot, MeasurementKind::Current { from, to }))
}

fn injection(snapshot: &MeasurementSet, bus: BusId) -> Result<Phasor, DetectionError> {
    snapshot.injection(bus).ok_or_else(|| missing(snapshot, MeasurementKind::Injection(bus)))
}

/// Reconstruction of `bus` from neighbor `via` in one snapshot.
pub fn reconstruct_from(
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    bus: BusId,
    via: BusId,
    form: ReconstructionForm,
) -> Result<Phasor, DetectionError> {
    let (_, br) = topology
        .branch_between(bus, via)
        .ok_or(GridError::UnknownBus(via))?;
    Ok(reconstruct_voltage_with(form, br, voltage(snapshot, via)?, current(snapshot, via, bus)?))
}

fn push_elements(
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    bus: BusId,
    form: ReconstructionForm,
    out: &mut Vec<MfElement>,
) -> Result<(), DetectionError> {
    let t = snapshot.time_index;
    out.push(MfElement { value: voltage(snapshot, bus)?, provenance: Provenance::Direct, time_index: t });
    for (j, br) in topology.adjacency_of(bus)? {
        let value = reconstruct_voltage_with(form, br, voltage(snapshot, j)?, current(snapshot, j, bus)?);
        out.push(MfElement { value, provenance: Provenance::ViaNeighbor(j), time_index: t });
    }
    Ok(())
}

/// Direct measurement first, then one reconstruction per neighbor in
/// ascending id order.
pub fn build_sequence_1d(
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    bus: BusId,
    form: ReconstructionForm,
) -> Result<MfSequence, DetectionError> {
    let mut elements = Vec::with_capacity(1 + topology.degree(bus)?);
    push_elements(topology, snapshot, bus, form, &mut elements)?;
    Ok(MfSequence { bus, elements })
}

/// The `(1 + degree) × 3` window over three snapshots, laid out source by
/// source (direct t1..t3, then each neighbor's t1..t3).
pub fn build_sequence_2d(
    topology: &GridTopology,
    snapshots: &[MeasurementSet],
    bus: BusId,
    form: ReconstructionForm,
) -> Result<MfSequence, DetectionError> {
    if snapshots.len() != 3 {
        return Err(DetectionError::SnapshotCount(snapshots.len()));
    }
    let per_time: Vec<MfSequence> = snapshots
        .iter()
        .map(|s| build_sequence_1d(topology, s, bus, form))
        .collect::<Result<_, _>>()?;
    let width = per_time[0].len();
    let mut elements = Vec::with_capacity(3 * width);
    for source in 0..width {
        for seq in &per_time {
            elements.push(seq.elements[source]);
        }
    }
    Ok(MfSequence { bus, elements })
}

/// Median reference and anomaly coefficient of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageAnomaly {
    pub v_hat: Phasor,
    /// Index of `v_hat` in the sequence.
    pub median_index: usize,
    /// `max_n |V(n) - v̂| / |v̂|`.
    pub kappa_v: f64,
    /// Per-element relative deviations.
    pub deviations: Vec<f64>,
}

pub fn kappa_v(sequence: &MfSequence, rule: MedianRule) -> Result<VoltageAnomaly, DetectionError> {
    let values = sequence.values();
    let median_index = select_median(&values, rule)?;
    let v_hat = values[median_index];
    let reference = phasor::magnitude(v_hat);
    if reference < MIN_REFERENCE {
        return Err(DetectionError::DegenerateReference(sequence.bus));
    }
    let deviations: Vec<f64> =
        values.iter().map(|v| phasor::magnitude(v - v_hat) / reference).collect();
    let kappa_v = deviations.iter().copied().fold(0.0, f64::max);
    Ok(VoltageAnomaly { v_hat, median_index, kappa_v, deviations })
}

/// `|Σ measured sending-end currents - measured injection|` at `bus`.
pub fn kappa_i_direct(
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    bus: BusId,
) -> Result<f64, DetectionError> {
    let mut sum = phasor::ZERO;
    for n in topology.neighbors(bus)? {
        sum += current(snapshot, bus, n.bus)?;
    }
    Ok(phasor::magnitude(sum - injection(snapshot, bus)?))
}

/// Same balance with each branch current recomputed from the measured
/// voltages at both ends.
pub fn kappa_i_calc(
    topology: &GridTopology,
    snapshot: &MeasurementSet,
    bus: BusId,
) -> Result<f64, DetectionError> {
    let v_i = voltage(snapshot, bus)?;
    let mut sum = phasor::ZERO;
    for (j, br) in topology.adjacency_of(bus)? {
        sum += pi_current(br, v_i, voltage(snapshot, j)?);
    }
    Ok(phasor::magnitude(sum - injection(snapshot, bus)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCriteria {
    pub kappa_v: f64,
    pub kappa_i_direct: f64,
    pub kappa_i_calc: f64,
    pub v_hat: Phasor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionMode {
    /// Latest snapshot only.
    OneD,
    /// Three snapshots, spatial and temporal window.
    #[default]
    TwoD,
}

/// Which criteria may raise a suspect flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriteriaSet {
    pub voltage: bool,
    pub direct_current: bool,
    pub calculated_current: bool,
}

impl CriteriaSet {
    pub const ALL: CriteriaSet =
        CriteriaSet { voltage: true, direct_current: true, calculated_current: true };
    pub const VOLTAGE: CriteriaSet =
        CriteriaSet { voltage: true, direct_current: false, calculated_current: false };
    pub const DIRECT_CURRENT: CriteriaSet =
        CriteriaSet { voltage: false, direct_current: true, calculated_current: false };
    pub const CALCULATED_CURRENT: CriteriaSet =
        CriteriaSet { voltage: false, direct_current: false, calculated_current: true };
}

impl Default for CriteriaSet {
    fn default() -> Self {
        CriteriaSet::VOLTAGE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub threshold_v: f64,
    pub threshold_i: f64,
    pub mode: DetectionMode,
    pub criteria: CriteriaSet,
    pub median: MedianRule,
    pub reconstruction: ReconstructionForm,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            threshold_v: DEFAULT_VOLTAGE_THRESHOLD,
            threshold_i: DEFAULT_CURRENT_THRESHOLD,
            mode: DetectionMode::TwoD,
            criteria: CriteriaSet::VOLTAGE,
            median: MedianRule::default(),
            reconstruction: ReconstructionForm::default(),
        }
    }
}

impl DetectionConfig {
    fn check(&self) -> Result<(), DetectionError> {
        let ok = |t: f64| t.is_finite() && t > 0.0;
        if ok(self.threshold_v) && ok(self.threshold_i) {
            Ok(())
        } else {
            Err(DetectionError::InvalidThreshold)
        }
    }
}

/// Stage-1 outcome for one bus.
#[derive(Debug, Clone, PartialEq)]
pub struct BusVerdict {
    pub bus: BusId,
    pub criteria: NodeCriteria,
    pub sequence: MfSequence,
    /// Per sequence element: relative deviation above the voltage threshold.
    pub flagged: Vec<bool>,
    pub voltage_alarm: bool,
    pub direct_current_alarm: bool,
    pub calculated_current_alarm: bool,
    /// Any enabled criterion above its threshold.
    pub suspect: bool,
}

impl BusVerdict {
    pub fn flagged_elements(&self) -> impl Iterator<Item = &MfElement> {
        self.sequence.elements.iter().zip(&self.flagged).filter(|(_, f)| **f).map(|(e, _)| e)
    }

    /// Whether the element with this provenance at `time_index` was flagged.
    /// Elements not in the sequence count as flagged.
    pub fn is_flagged(&self, provenance: Provenance, time_index: u32) -> bool {
        self.sequence.find(provenance, time_index).is_none_or(|k| self.flagged[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionVerdict {
    /// One entry per bus in topology order.
    pub buses: Vec<BusVerdict>,
    pub config: DetectionConfig,
    /// Time index of the snapshot the current criteria were evaluated on.
    pub latest_time: u32,
}

impl DetectionVerdict {
    pub fn suspects(&self) -> BTreeSet<BusId> {
        self.buses.iter().filter(|b| b.suspect).map(|b| b.bus).collect()
    }

    pub fn bus(&self, id: BusId) -> Option<&BusVerdict> {
        self.buses.iter().find(|b| b.bus == id)
    }
}

/// Stage-1 evaluation of a single bus; only the bus and its neighbors are
/// read.
pub fn evaluate_bus(
    topology: &GridTopology,
    snapshots: &[MeasurementSet],
    bus: BusId,
    config: &DetectionConfig,
) -> Result<BusVerdict, DetectionError> {
    let latest = snapshots.last().ok_or(DetectionError::SnapshotCount(0))?;
    let sequence = match config.mode {
        DetectionMode::OneD => build_sequence_1d(topology, latest, bus, config.reconstruction)?,
        DetectionMode::TwoD => build_sequence_2d(topology, snapshots, bus, config.reconstruction)?,
    };
    let anomaly = kappa_v(&sequence, config.median)?;
    let criteria = NodeCriteria {
        kappa_v: anomaly.kappa_v,
        kappa_i_direct: kappa_i_direct(topology, latest, bus)?,
        kappa_i_calc: kappa_i_calc(topology, latest, bus)?,
        v_hat: anomaly.v_hat,
    };
    let flagged: Vec<bool> = anomaly.deviations.iter().map(|d| *d > config.threshold_v).collect();
    let voltage_alarm = criteria.kappa_v > config.threshold_v;
    let direct_current_alarm = criteria.kappa_i_direct > config.threshold_i;
    let calculated_current_alarm = criteria.kappa_i_calc > config.threshold_i;
    let c = config.criteria;
    let suspect = (c.voltage && voltage_alarm)
        || (c.direct_current && direct_current_alarm)
        || (c.calculated_current && calculated_current_alarm);
    Ok(BusVerdict {
        bus,
        criteria,
        sequence,
        flagged,
        voltage_alarm,
        direct_current_alarm,
        calculated_current_alarm,
        suspect,
    })
}

/// Runs stage 1 on every bus. One-dimensional mode uses the last snapshot;
/// two-dimensional mode needs exactly three.
pub fn detect(
    topology: &GridTopology,
    snapshots: &[MeasurementSet],
    config: &DetectionConfig,
) -> Result<DetectionVerdict, DetectionError> {
    config.check()?;
    if config.mode == DetectionMode::TwoD && snapshots.len() != 3 {
        return Err(DetectionError::SnapshotCount(snapshots.len()));
    }
    let latest = snapshots.last().ok_or(DetectionError::SnapshotCount(0))?;
    let buses = topology
        .bus_ids()
        .map(|id| evaluate_bus(topology, snapshots, id, config))
        .collect::<Result<_, _>>()?;
    Ok(DetectionVerdict { buses, config: *config, latest_time: latest.time_index })
}
