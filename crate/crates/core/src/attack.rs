//! Stealthy false-data injection: `a = Hc`.
//!
//! An attack in the column space of `H` shifts the WLS estimate by exactly
//! `c` and leaves the residual vector untouched, so residual-based bad-data
//! detection cannot see it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use rand::seq::IteratorRandom;
use rand::Rng;

use crate::estimation::{
    chi_square_test, CMatrix, CVector, EstimationError, MeasurementLayout, WlsSolver,
};
use crate::grid::{BusId, GridTopology};
use crate::measurement::{random_phase, MeasurementSet};
use crate::phasor::{self, Phasor};

/// Entries of `a` at or below this magnitude do not count as touched.
pub const TOUCH_TOLERANCE: f64 = 1e-12;

/// χ² statistics of clean and attacked data must agree this closely.
pub const STEALTH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("an active attack needs at least one target bus")]
    NoTargets,
    #[error("target bus {0} is not part of the topology")]
    UnknownTarget(BusId),
    #[error("magnitude range must satisfy 0 < low <= high, got ({0}, {1})")]
    InvalidMagnitudeRange(f64, f64),
    #[error("target count range {0}..={1} is invalid for {2} buses")]
    InvalidTargetCount(usize, usize, usize),
    #[error("attack vector has {got} rows, layout has {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// Which buses to attack and how hard.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    target_buses: BTreeSet<BusId>,
    magnitude_range: (f64, f64),
}

impl AttackSpec {
    /// `|c_i|` between 0.05 and 0.5 pu.
    pub const DEFAULT_MAGNITUDE: (f64, f64) = (0.05, 0.5);

    /// Active attack on `targets`; an empty set is an error.
    pub fn new(
        targets: impl IntoIterator<Item = BusId>,
        magnitude_range: (f64, f64),
    ) -> Result<Self, AttackError> {
        let target_buses: BTreeSet<BusId> = targets.into_iter().collect();
        if target_buses.is_empty() {
            return Err(AttackError::NoTargets);
        }
        check_range(magnitude_range)?;
        Ok(AttackSpec { target_buses, magnitude_range })
    }

    /// The empty target set: no attack.
    pub fn none() -> Self {
        AttackSpec { target_buses: BTreeSet::new(), magnitude_range: Self::DEFAULT_MAGNITUDE }
    }

    /// Picks a target count uniformly from `count`, then that many distinct
    /// buses uniformly.
    pub fn random<R: Rng + ?Sized>(
        topology: &GridTopology,
        count: RangeInclusive<usize>,
        magnitude_range: (f64, f64),
        rng: &mut R,
    ) -> Result<Self, AttackError> {
        let n = topology.bus_count();
        let (lo, hi) = (*count.start(), *count.end());
        if lo == 0 || lo > hi || hi > n {
            return Err(AttackError::InvalidTargetCount(lo, hi, n));
        }
        check_range(magnitude_range)?;
        let k = rng.random_range(lo..=hi);
        let mut picked = topology.bus_ids().choose_multiple(rng, k);
        picked.sort();
        AttackSpec::new(picked, magnitude_range)
    }

    pub fn targets(&self) -> &BTreeSet<BusId> {
        &self.target_buses
    }

    pub fn magnitude_range(&self) -> (f64, f64) {
        self.magnitude_range
    }

    pub fn is_active(&self) -> bool {
        !self.target_buses.is_empty()
    }
}

fn check_range((low, high): (f64, f64)) -> Result<(), AttackError> {
    if low > 0.0 && low <= high && high.is_finite() {
        Ok(())
    } else {
        Err(AttackError::InvalidMagnitudeRange(low, high))
    }
}

/// A constructed attack with its ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackInstance {
    /// State perturbation per bus, zero outside the targets.
    pub c: BTreeMap<BusId, Phasor>,
    /// Measurement perturbation `H·c` in layout row order.
    pub a: CVector,
    /// Layout rows with `|a_k| > TOUCH_TOLERANCE`.
    pub touched: BTreeSet<usize>,
    pub attacked_buses: BTreeSet<BusId>,
}

impl AttackInstance {
    /// Rebuilds `a` and the labels from a given state perturbation.
    /// Buses missing from `c` get zero.
    pub fn from_c(
        h: &CMatrix,
        topology: &GridTopology,
        c: &BTreeMap<BusId, Phasor>,
    ) -> Result<Self, AttackError> {
        if let Some(bad) = c.keys().find(|b| !topology.contains(**b)) {
            return Err(AttackError::UnknownTarget(*bad));
        }
        let c_full: BTreeMap<BusId, Phasor> = topology
            .bus_ids()
            .map(|id| (id, c.get(&id).copied().unwrap_or(phasor::ZERO)))
            .collect();
        let c_vec = CVector::from_iterator(c_full.len(), c_full.values().copied());
        if h.ncols() != c_vec.len() {
            return Err(EstimationError::DimensionMismatch { expected: h.ncols(), got: c_vec.len() }
                .into());
        }
        let a = h * c_vec;
        let touched = touched_rows(&a);
        let attacked_buses =
            c_full.iter().filter(|(_, v)| **v != phasor::ZERO).map(|(b, _)| *b).collect();
        Ok(AttackInstance { c: c_full, a, touched, attacked_buses })
    }

    pub fn c_vector(&self) -> CVector {
        CVector::from_iterator(self.c.len(), self.c.values().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.attacked_buses.is_empty()
    }
}

fn touched_rows(a: &CVector) -> BTreeSet<usize> {
    a.iter()
        .enumerate()
        .filter(|(_, v)| phasor::magnitude(**v) > TOUCH_TOLERANCE)
        .map(|(k, _)| k)
        .collect()
}

/// Draws `c_i` for every target (ascending id; magnitude, then phase) and
/// forms `a = Hc`.
pub fn make_attack<R: Rng + ?Sized>(
    h: &CMatrix,
    topology: &GridTopology,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<AttackInstance, AttackError> {
    let (low, high) = spec.magnitude_range;
    let mut c = BTreeMap::new();
    for &bus in &spec.target_buses {
        if !topology.contains(bus) {
            return Err(AttackError::UnknownTarget(bus));
        }
        let magnitude = if low == high { low } else { rng.random_range(low..=high) };
        c.insert(bus, phasor::from_polar(magnitude, random_phase(rng)));
    }
    AttackInstance::from_c(h, topology, &c)
}

/// `z + a` as a new snapshot; `z` is left as is.
pub fn apply_attack(
    z: &MeasurementSet,
    instance: &AttackInstance,
    layout: &MeasurementLayout,
) -> Result<MeasurementSet, AttackError> {
    if instance.a.len() != layout.len() {
        return Err(AttackError::LayoutMismatch { expected: layout.len(), got: instance.a.len() });
    }
    Ok(layout.map_rows(z, |k, v| v + instance.a[k])?)
}

/// True iff the χ² statistics of `z` and `z + a` agree within
/// [`STEALTH_TOLERANCE`] and both give the same verdict at `alpha`.
pub fn verify_stealth(
    solver: &WlsSolver,
    z: &CVector,
    instance: &AttackInstance,
    alpha: f64,
) -> Result<bool, AttackError> {
    if instance.a.len() != z.len() {
        return Err(AttackError::LayoutMismatch { expected: z.len(), got: instance.a.len() });
    }
    let clean = chi_square_test(&solver.solve(z)?, alpha)?;
    let attacked = chi_square_test(&solver.solve(&(z + &instance.a))?, alpha)?;
    Ok((clean.statistic - attacked.statistic).abs() <= STEALTH_TOLERANCE
        && clean.passed == attacked.passed)
}

/// Layout rows of each kind touched by `instance`.
pub fn touched_kinds<'a>(
    instance: &'a AttackInstance,
    layout: &'a MeasurementLayout,
) -> impl Iterator<Item = crate::estimation::MeasurementKind> + 'a {
    instance.touched.iter().map(move |&k| layout.rows()[k])
}

/// Buses whose voltage row is touched.
pub fn attacked_voltage_buses(
    instance: &AttackInstance,
    layout: &MeasurementLayout,
) -> Vec<BusId> {
    touched_kinds(instance, layout)
        .filter_map(|kind| match kind {
            crate::estimation::MeasurementKind::Voltage(b) => Some(b),
            _ => None,
        })
        .collect()
}
