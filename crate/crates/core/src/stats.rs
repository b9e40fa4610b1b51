//! Confusion counts over voltage measurements, per detection column.
//!
//! Percentages follow the table definitions: detection and miss rates are
//! relative to attacked voltage measurements, correct-absence and false
//! alarm rates to non-attacked ones within the same trials.

use alloc::collections::BTreeMap;

use crate::experiment::{Column, TrialOutcome};
use crate::grid::BusId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub true_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
    pub false_positive: u64,
}

fn pct(n: u64, d: u64) -> Option<f64> {
    (d > 0).then(|| 100.0 * n as f64 / d as f64)
}

impl Counts {
    pub fn record(&mut self, attacked: bool, flagged: bool) {
        match (attacked, flagged) {
            (true, true) => self.true_positive += 1,
            (true, false) => self.false_negative += 1,
            (false, false) => self.true_negative += 1,
            (false, true) => self.false_positive += 1,
        }
    }

    pub fn attacked(&self) -> u64 {
        self.true_positive + self.false_negative
    }

    pub fn not_attacked(&self) -> u64 {
        self.true_negative + self.false_positive
    }

    pub fn total(&self) -> u64 {
        self.attacked() + self.not_attacked()
    }

    pub fn detected_attacks_pct(&self) -> Option<f64> {
        pct(self.true_positive, self.attacked())
    }

    pub fn not_detected_pct(&self) -> Option<f64> {
        pct(self.false_negative, self.attacked())
    }

    pub fn detected_absence_pct(&self) -> Option<f64> {
        pct(self.true_negative, self.not_attacked())
    }

    pub fn false_alarms_pct(&self) -> Option<f64> {
        pct(self.false_positive, self.not_attacked())
    }

    pub fn merge(&mut self, other: &Counts) {
        self.true_positive += other.true_positive;
        self.false_negative += other.false_negative;
        self.true_negative += other.true_negative;
        self.false_positive += other.false_positive;
    }
}

/// The four table rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    DetectedAttacks,
    NotDetected,
    DetectedAbsence,
    FalseAlarms,
}

impl Metric {
    pub const ALL: [Metric; 4] =
        [Metric::DetectedAttacks, Metric::NotDetected, Metric::DetectedAbsence, Metric::FalseAlarms];

    pub fn key(self) -> &'static str {
        match self {
            Metric::DetectedAttacks => "detected_attacks_pct",
            Metric::NotDetected => "not_detected_pct",
            Metric::DetectedAbsence => "detected_absence_pct",
            Metric::FalseAlarms => "false_alarms_pct",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::DetectedAttacks => "Detected attacks",
            Metric::NotDetected => "Not detected attacks",
            Metric::DetectedAbsence => "Detected absence of attack",
            Metric::FalseAlarms => "False alarms",
        }
    }

    pub fn from_key(key: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.key() == key)
    }

    pub fn of(self, counts: &Counts) -> Option<f64> {
        match self {
            Metric::DetectedAttacks => counts.detected_attacks_pct(),
            Metric::NotDetected => counts.not_detected_pct(),
            Metric::DetectedAbsence => counts.detected_absence_pct(),
            Metric::FalseAlarms => counts.false_alarms_pct(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnStats {
    pub aggregate: Counts,
    pub per_bus: BTreeMap<BusId, Counts>,
}

impl ColumnStats {
    /// Smallest and largest per-bus value of `metric`, skipping buses where
    /// it is undefined.
    pub fn range(&self, metric: Metric) -> Option<(f64, f64)> {
        self.per_bus.values().filter_map(|c| metric.of(c)).fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionStats {
    pub trials: u64,
    pub columns: BTreeMap<Column, ColumnStats>,
    /// Branch-current measurements, labelled by the sending bus's final
    /// prediction.
    pub currents: Counts,
    /// Attacked voltage measurements cleared despite a clean neighbor.
    pub false_clearings: u64,
}

impl ConfusionStats {
    pub fn record(&mut self, outcome: &TrialOutcome) {
        self.trials += 1;
        for column in Column::ALL {
            let stats = self.columns.entry(column).or_default();
            for b in &outcome.buses {
                let flagged = b.flag(column);
                stats.aggregate.record(b.attacked, flagged);
                stats.per_bus.entry(b.bus).or_default().record(b.attacked, flagged);
            }
        }
        for c in &outcome.currents {
            self.currents.record(c.attacked, c.predicted);
        }
        self.false_clearings += outcome.buses.iter().filter(|b| b.false_clearing()).count() as u64;
    }

    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a TrialOutcome>) -> Self {
        let mut stats = ConfusionStats::default();
        for o in outcomes {
            stats.record(o);
        }
        stats
    }

    /// Order-independent combination of two partial tallies.
    pub fn merge(mut self, other: &ConfusionStats) -> Self {
        self.trials += other.trials;
        for (column, theirs) in &other.columns {
            let ours = self.columns.entry(*column).or_default();
            ours.aggregate.merge(&theirs.aggregate);
            for (bus, c) in &theirs.per_bus {
                ours.per_bus.entry(*bus).or_default().merge(c);
            }
        }
        self.currents.merge(&other.currents);
        self.false_clearings += other.false_clearings;
        self
    }

    pub fn column(&self, column: Column) -> Option<&ColumnStats> {
        self.columns.get(&column)
    }

    /// Aggregate value of `metric` for `column`.
    pub fn aggregate(&self, column: Column, metric: Metric) -> Option<f64> {
        self.column(column).and_then(|s| metric.of(&s.aggregate))
    }
}
