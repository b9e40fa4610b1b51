//! Synthetic operating states and noisy PMU snapshots.
//!
//! Ground truth is drawn directly as a set of bus voltages; every branch
//! current and bus injection then follows from the π-model, so the noiseless
//! measurements satisfy Ohm's and Kirchhoff's laws exactly.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::{Branch, BusId, GridTopology};
use crate::phasor::{self, Phasor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasurementError {
    #[error("bus {0} is not part of the topology")]
    UnknownBus(BusId),
    #[error("branch {from}-{to} is not incident to bus {bus}")]
    NotIncident { bus: BusId, from: BusId, to: BusId },
    #[error("state has no voltage for bus {0}")]
    MissingVoltage(BusId),
    #[error("expected exactly 3 states, got {0}")]
    StateCount(usize),
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
}

/// True bus voltages of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueState {
    pub voltages: BTreeMap<BusId, Phasor>,
}

impl TrueState {
    /// `1∠0` at every bus.
    pub fn flat(topology: &GridTopology) -> Self {
        TrueState { voltages: topology.bus_ids().map(|id| (id, Phasor::new(1.0, 0.0))).collect() }
    }

    pub fn voltage(&self, bus: BusId) -> Result<Phasor, MeasurementError> {
        self.voltages.get(&bus).copied().ok_or(MeasurementError::MissingVoltage(bus))
    }

    /// Voltages in topology column order.
    pub fn to_vector(&self, topology: &GridTopology) -> Result<Vec<Phasor>, MeasurementError> {
        topology.bus_ids().map(|id| self.voltage(id)).collect()
    }
}

/// Independent Gaussian error with standard deviation `sigma` on the real
/// and imaginary part of every measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    /// 0.002 pu per component.
    pub const DEFAULT_SIGMA: f64 = 0.002;

    pub fn new(sigma: f64) -> Result<Self, MeasurementError> {
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(NoiseModel { sigma })
        } else {
            Err(MeasurementError::InvalidSigma(sigma))
        }
    }

    pub fn noiseless() -> Self {
        NoiseModel { sigma: 0.0 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn perturb<R: Rng + ?Sized>(&self, value: Phasor, rng: &mut R) -> Phasor {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        value + Phasor::new(self.sigma * re, self.sigma * im)
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { sigma: Self::DEFAULT_SIGMA }
    }
}

/// Draws magnitudes uniformly in `[1 - variation, 1 + variation]` pu and
/// angles uniformly in `[-variation, variation]` rad, bus by bus in id order.
pub fn synthesize_true_state<R: Rng + ?Sized>(
    topology: &GridTopology,
    variation: f64,
    rng: &mut R,
) -> TrueState {
    let variation = variation.max(0.0);
    let voltages = topology
        .bus_ids()
        .map(|id| {
            let mag = 1.0 + symmetric(rng, variation);
            let ang = symmetric(rng, variation);
            (id, phasor::from_polar(mag, ang))
        })
        .collect();
    TrueState { voltages }
}

/// Moves every bus of `base` by up to `amount` in magnitude (pu) and angle (rad).
pub fn drift_state<R: Rng + ?Sized>(base: &TrueState, amount: f64, rng: &mut R) -> TrueState {
    let amount = amount.max(0.0);
    let voltages = base
        .voltages
        .iter()
        .map(|(&id, &v)| {
            let mag = phasor::magnitude(v) + symmetric(rng, amount);
            let ang = phasor::angle(v) + symmetric(rng, amount);
            (id, phasor::from_polar(mag, ang))
        })
        .collect();
    TrueState { voltages }
}

/// Three operating points for t1..t3: a fresh state, then two drifted copies
/// of it, each moved by `drift_fraction * variation`.
pub fn synthesize_sequence<R: Rng + ?Sized>(
    topology: &GridTopology,
    variation: f64,
    drift_fraction: f64,
    rng: &mut R,
) -> [TrueState; 3] {
    let t1 = synthesize_true_state(topology, variation, rng);
    let amount = drift_fraction * variation;
    let t2 = drift_state(&t1, amount, rng);
    let t3 = drift_state(&t1, amount, rng);
    [t1, t2, t3]
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..=half_width)
    }
}

/// Sending-end π-model current `(V_from - V_to)/Z + V_from·Y/2`.
#[inline]
pub fn pi_current(branch: &Branch, v_from: Phasor, v_to: Phasor) -> Phasor {
    (v_from - v_to) * branch.y_series() + v_from * branch.y_half()
}

/// Current leaving `from_bus` into `branch`.
pub fn branch_current(
    state: &TrueState,
    branch: &Branch,
    from_bus: BusId,
) -> Result<Phasor, MeasurementError> {
    let to_bus = branch.other_end(from_bus).ok_or(MeasurementError::NotIncident {
        bus: from_bus,
        from: branch.from,
        to: branch.to,
    })?;
    Ok(pi_current(branch, state.voltage(from_bus)?, state.voltage(to_bus)?))
}

/// Net current leaving `bus` into the network: the sum of its sending-end
/// branch currents.
pub fn injection_current(
    topology: &GridTopology,
    state: &TrueState,
    bus: BusId,
) -> Result<Phasor, MeasurementError> {
    let adjacency = topology.adjacency_of(bus).map_err(|_| MeasurementError::UnknownBus(bus))?;
    adjacency
        .into_iter()
        .try_fold(phasor::ZERO, |acc, (_, br)| Ok(acc + branch_current(state, br, bus)?))
}

/// One synchronized set of PMU readings.
///
/// Branch currents are keyed by `(sending bus, receiving bus)`; both ends of
/// every branch are present.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub time_index: u32,
    pub bus_voltages: BTreeMap<BusId, Phasor>,
    pub branch_currents: BTreeMap<(BusId, BusId), Phasor>,
    pub injection_currents: BTreeMap<BusId, Phasor>,
}

impl MeasurementSet {
    pub fn voltage(&self, bus: BusId) -> Option<Phasor> {
        self.bus_voltages.get(&bus).copied()
    }

    pub fn current(&self, from: BusId, to: BusId) -> Option<Phasor> {
        self.branch_currents.get(&(from, to)).copied()
    }

    pub fn injection(&self, bus: BusId) -> Option<Phasor> {
        self.injection_currents.get(&bus).copied()
    }

    /// Total number of complex measurements.
    pub fn len(&self) -> usize {
        self.bus_voltages.len() + self.branch_currents.len() + self.injection_currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exact physical measurements of `state`, then noise on every component.
/// Noise is drawn voltages first, then currents, then injections, each in
/// key order.
pub fn snapshot<R: Rng + ?Sized>(
    topology: &GridTopology,
    state: &TrueState,
    noise: NoiseModel,
    time_index: u32,
    rng: &mut R,
) -> Result<MeasurementSet, MeasurementError> {
    let exact = exact_measurements(topology, state, time_index)?;
    if noise.sigma == 0.0 {
        return Ok(exact);
    }
    let mut noisy = exact;
    for v in noisy.bus_voltages.values_mut() {
        *v = noise.perturb(*v, rng);
    }
    for i in noisy.branch_currents.values_mut() {
        *i = noise.perturb(*i, rng);
    }
    for j in noisy.injection_currents.values_mut() {
        *j = noise.perturb(*j, rng);
    }
    Ok(noisy)
}

fn exact_measurements(
    topology: &GridTopology,
    state: &TrueState,
    time_index: u32,
) -> Result<MeasurementSet, MeasurementError> {
    let mut bus_voltages = BTreeMap::new();
    let mut injection_currents = BTreeMap::new();
    for id in topology.bus_ids() {
        bus_voltages.insert(id, state.voltage(id)?);
        injection_currents.insert(id, injection_current(topology, state, id)?);
    }
    let mut branch_currents = BTreeMap::new();
    for br in topology.branches() {
        branch_currents.insert((br.from, br.to), branch_current(state, br, br.from)?);
        branch_currents.insert((br.to, br.from), branch_current(state, br, br.to)?);
    }
    Ok(MeasurementSet { time_index, bus_voltages, branch_currents, injection_currents })
}

/// Snapshots for t1, t2, t3 (time indices 1..=3), one per state.
pub fn time_series<R: Rng + ?Sized>(
    topology: &GridTopology,
    states: &[TrueState],
    noise: NoiseModel,
    rng: &mut R,
) -> Result<Vec<MeasurementSet>, MeasurementError> {
    if states.len() != 3 {
        return Err(MeasurementError::StateCount(states.len()));
    }
    states
        .iter()
        .zip(1u32..)
        .map(|(state, t)| snapshot(topology, state, noise, t, rng))
        .collect()
}

/// Uniform phase in `[0, 2π)`.
pub(crate) fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..2.0 * PI)
}
