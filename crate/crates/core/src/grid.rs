//! Bus/branch network model with π-equivalent lines.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::phasor::{self, Phasor};

/// Bus identifier as it appears in grid files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub label: Option<String>,
}

impl Bus {
    pub fn new(id: u32) -> Self {
        Bus { id: BusId(id), label: None }
    }

    pub fn labeled(id: u32, label: impl Into<String>) -> Self {
        Bus { id: BusId(id), label: Some(label.into()) }
    }
}

/// π-model line: series impedance between the ends and the total shunt
/// admittance, half of which sits at each end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub z_series: Phasor,
    pub y_shunt_total: Phasor,
}

impl Branch {
    /// `z = r + jx`, `y = jb`, all per-unit.
    pub fn from_rxb(from: u32, to: u32, r: f64, x: f64, b: f64) -> Self {
        Branch {
            from: BusId(from),
            to: BusId(to),
            z_series: Phasor::new(r, x),
            y_shunt_total: Phasor::new(0.0, b),
        }
    }

    /// Series admittance `1/Z`.
    #[inline]
    pub fn y_series(&self) -> Phasor {
        self.z_series.inv()
    }

    /// Half of the shunt admittance, applied at each end.
    #[inline]
    pub fn y_half(&self) -> Phasor {
        self.y_shunt_total * 0.5
    }

    pub fn touches(&self, bus: BusId) -> bool {
        self.from == bus || self.to == bus
    }

    /// The end opposite to `bus`, if the branch is incident to it.
    pub fn other_end(&self, bus: BusId) -> Option<BusId> {
        if self.from == bus {
            Some(self.to)
        } else if self.to == bus {
            Some(self.from)
        } else {
            None
        }
    }
}

/// A violated topology invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    NoBuses,
    DuplicateBus(BusId),
    UnknownBus { branch: usize, bus: BusId },
    SelfLoop { branch: usize, bus: BusId },
    DuplicateBranch { branch: usize, from: BusId, to: BusId },
    ZeroImpedance { branch: usize, from: BusId, to: BusId },
    NonFiniteParameter { branch: usize, from: BusId, to: BusId },
    Disconnected { islands: usize },
    InconsistentAdjacency,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::NoBuses => write!(f, "topology has no buses"),
            Finding::DuplicateBus(id) => write!(f, "duplicate bus id {id}"),
            Finding::UnknownBus { branch, bus } => {
                write!(f, "branch #{branch} references unknown bus {bus}")
            }
            Finding::SelfLoop { branch, bus } => {
                write!(f, "branch #{branch} connects bus {bus} to itself")
            }
            Finding::DuplicateBranch { branch, from, to } => {
                write!(f, "branch #{branch} ({from}-{to}) duplicates an earlier branch")
            }
            Finding::ZeroImpedance { branch, from, to } => {
                write!(f, "branch #{branch} ({from}-{to}) has zero series impedance")
            }
            Finding::NonFiniteParameter { branch, from, to } => {
                write!(f, "branch #{branch} ({from}-{to}) has a non-finite parameter")
            }
            Finding::Disconnected { islands } => {
                write!(f, "disconnected: grid splits into {islands} islands")
            }
            Finding::InconsistentAdjacency => write!(f, "adjacency disagrees with branch list"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("invalid topology: {}", join_findings(.0))]
    Invalid(Vec<Finding>),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
}

fn join_findings(findings: &[Finding]) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    for (k, finding) in findings.iter().enumerate() {
        if k > 0 {
            out.push_str("; ");
        }
        let _ = write!(out, "{finding}");
    }
    out
}

/// Checks every topology invariant and returns the violations found.
/// An empty report means the parts form a valid topology.
pub fn validate(buses: &[Bus], branches: &[Branch]) -> Vec<Finding> {
    let mut findings = Vec::new();
    if buses.is_empty() {
        findings.push(Finding::NoBuses);
        return findings;
    }

    let mut ids = BTreeSet::new();
    for bus in buses {
        if !ids.insert(bus.id) {
            findings.push(Finding::DuplicateBus(bus.id));
        }
    }

    let mut pairs = BTreeSet::new();
    for (k, br) in branches.iter().enumerate() {
        let (from, to) = (br.from, br.to);
        for end in [from, to] {
            if !ids.contains(&end) {
                findings.push(Finding::UnknownBus { branch: k, bus: end });
            }
        }
        if from == to {
            findings.push(Finding::SelfLoop { branch: k, bus: from });
        }
        if !phasor::is_finite(br.z_series) || !phasor::is_finite(br.y_shunt_total) {
            findings.push(Finding::NonFiniteParameter { branch: k, from, to });
        } else if phasor::magnitude(br.z_series) == 0.0 {
            findings.push(Finding::ZeroImpedance { branch: k, from, to });
        }
        let key = if from <= to { (from, to) } else { (to, from) };
        if from != to && !pairs.insert(key) {
            findings.push(Finding::DuplicateBranch { branch: k, from, to });
        }
    }

    let islands = count_islands(&ids, branches);
    if islands > 1 {
        findings.push(Finding::Disconnected { islands });
    }
    findings
}

fn count_islands(ids: &BTreeSet<BusId>, branches: &[Branch]) -> usize {
    let mut links: BTreeMap<BusId, Vec<BusId>> = ids.iter().map(|&id| (id, Vec::new())).collect();
    for br in branches {
        if br.from != br.to && ids.contains(&br.from) && ids.contains(&br.to) {
            links.entry(br.from).or_default().push(br.to);
            links.entry(br.to).or_default().push(br.from);
        }
    }
    let mut seen = BTreeSet::new();
    let mut islands = 0;
    for &start in ids {
        if !seen.insert(start) {
            continue;
        }
        islands += 1;
        let mut queue = VecDeque::from([start]);
        while let Some(bus) = queue.pop_front() {
            for &next in &links[&bus] {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
    }
    islands
}

/// A neighbor of a bus together with the index of the connecting branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub bus: BusId,
    pub branch: usize,
}

/// Validated, immutable network.
///
/// Buses are kept sorted by id; the position of a bus in [`buses`] is its
/// state-vector column. Branch order is preserved from construction.
///
/// [`buses`]: GridTopology::buses
#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    index: BTreeMap<BusId, usize>,
    adjacency: Vec<Vec<Neighbor>>,
}

impl GridTopology {
    pub fn new(mut buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self, GridError> {
        let findings = validate(&buses, &branches);
        if !findings.is_empty() {
            return Err(GridError::Invalid(findings));
        }
        buses.sort_by_key(|b| b.id);
        let index: BTreeMap<BusId, usize> =
            buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
        let mut adjacency = vec![Vec::new(); buses.len()];
        for (k, br) in branches.iter().enumerate() {
            adjacency[index[&br.from]].push(Neighbor { bus: br.to, branch: k });
            adjacency[index[&br.to]].push(Neighbor { bus: br.from, branch: k });
        }
        for list in &mut adjacency {
            list.sort_by_key(|n| n.bus);
        }
        Ok(GridTopology { buses, branches, index, adjacency })
    }

    /// Representative 7-bus meshed grid used as the default experiment.
    ///
    /// A ring 1..7 with chords 1-3, 3-5 and 5-1, so buses 1, 3, 5 have four
    /// neighbors and the rest two. Series impedances lie in 0.03..0.1 pu with
    /// X/R = 5; total line charging 0.012..0.045 pu.
    pub fn default_seven_bus() -> Self {
        const LINES: [(u32, u32, f64, f64, f64); 10] = [
            (1, 2, 0.010, 0.050, 0.020),
            (2, 3, 0.012, 0.060, 0.024),
            (3, 4, 0.008, 0.040, 0.016),
            (4, 5, 0.015, 0.075, 0.030),
            (5, 6, 0.010, 0.050, 0.020),
            (6, 7, 0.006, 0.030, 0.012),
            (7, 1, 0.014, 0.070, 0.028),
            (1, 3, 0.018, 0.090, 0.040),
            (3, 5, 0.016, 0.080, 0.036),
            (5, 1, 0.019, 0.095, 0.045),
        ];
        let buses = (1..=7).map(|id| Bus::labeled(id, alloc::format!("B{id}"))).collect();
        let branches = LINES
            .iter()
            .map(|&(f, t, r, x, b)| Branch::from_rxb(f, t, r, x, b))
            .collect();
        GridTopology::new(buses, branches).expect("default grid is valid")
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_ids(&self) -> impl Iterator<Item = BusId> + '_ {
        self.buses.iter().map(|b| b.id)
    }

    /// State-vector column of `bus`.
    pub fn bus_index(&self, bus: BusId) -> Option<usize> {
        self.index.get(&bus).copied()
    }

    pub fn contains(&self, bus: BusId) -> bool {
        self.index.contains_key(&bus)
    }

    /// Neighbors of `bus` in ascending id order.
    pub fn neighbors(&self, bus: BusId) -> Result<&[Neighbor], GridError> {
        self.bus_index(bus)
            .map(|k| self.adjacency[k].as_slice())
            .ok_or(GridError::UnknownBus(bus))
    }

    pub fn degree(&self, bus: BusId) -> Result<usize, GridError> {
        self.neighbors(bus).map(<[Neighbor]>::len)
    }

    /// `(neighbor, branch)` pairs for `bus`, ascending by neighbor id.
    pub fn adjacency_of(&self, bus: BusId) -> Result<Vec<(BusId, &Branch)>, GridError> {
        Ok(self
            .neighbors(bus)?
            .iter()
            .map(|n| (n.bus, &self.branches[n.branch]))
            .collect())
    }

    /// The branch between `a` and `b`, if any.
    pub fn branch_between(&self, a: BusId, b: BusId) -> Option<(usize, &Branch)> {
        let list = self.adjacency.get(self.bus_index(a)?)?;
        list.iter()
            .find(|n| n.bus == b)
            .map(|n| (n.branch, &self.branches[n.branch]))
    }

    /// Re-runs [`validate`] on this topology's parts and also checks that
    /// the adjacency lists agree with the branch list.
    pub fn validate(&self) -> Vec<Finding> {
        let mut findings = validate(&self.buses, &self.branches);
        let mut consistent = true;
        for (k, list) in self.adjacency.iter().enumerate() {
            let here = self.buses[k].id;
            for n in list {
                let br = &self.branches[n.branch];
                let back = self.bus_index(n.bus).map(|j| {
                    self.adjacency[j].iter().any(|m| m.bus == here && m.branch == n.branch)
                });
                if br.other_end(here) != Some(n.bus) || back != Some(true) {
                    consistent = false;
                }
            }
        }
        let listed: usize = self.adjacency.iter().map(Vec::len).sum();
        if !consistent || listed != 2 * self.branches.len() {
            findings.push(Finding::InconsistentAdjacency);
        }
        findings
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> GridTopology {
        GridTopology::new(
            vec![Bus::new(1), Bus::new(2), Bus::new(3)],
            vec![
                Branch::from_rxb(1, 2, 0.01, 0.05, 0.02),
                Branch::from_rxb(2, 3, 0.01, 0.05, 0.02),
            ],
        )
        .unwrap()
    }

    #[test]
    fn default_grid_has_seven_buses_and_every_bus_has_a_neighbor() {
        let g = GridTopology::default_seven_bus();
        assert_eq!(g.bus_count(), 7);
        assert!(g.validate().is_empty());
        for id in g.bus_ids() {
            assert!(g.degree(id).unwrap() >= 1);
        }
    }

    #[test]
    fn default_grid_parameters_stay_in_documented_band() {
        let g = GridTopology::default_seven_bus();
        for br in g.branches() {
            let z = phasor::magnitude(br.z_series);
            assert!((0.01..=0.1).contains(&z), "{z}");
            assert!((br.z_series.im / br.z_series.re - 5.0).abs() < 1e-9);
            let y = phasor::magnitude(br.y_shunt_total);
            assert!((0.001..=0.05).contains(&y));
        }
    }

    #[test]
    fn two_bus_grid_adjacency() {
        let g = GridTopology::new(
            vec![Bus::new(1), Bus::new(2)],
            vec![Branch::from_rxb(1, 2, 0.01, 0.1, 0.0)],
        )
        .unwrap();
        assert_eq!(g.adjacency_of(BusId(1)).unwrap().len(), 1);
        assert_eq!(g.adjacency_of(BusId(2)).unwrap().len(), 1);
    }

    #[test]
    fn middle_bus_of_three_bus_line_sees_both_ends() {
        let g = fig2();
        let adj: Vec<BusId> = g.adjacency_of(BusId(2)).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(adj, vec![BusId(1), BusId(3)]);
        for (_, br) in g.adjacency_of(BusId(2)).unwrap() {
            assert!(br.touches(BusId(2)));
        }
    }

    #[test]
    fn leaf_of_star_has_single_entry() {
        let g = GridTopology::new(
            (1..=4).map(Bus::new).collect(),
            vec![
                Branch::from_rxb(1, 2, 0.01, 0.05, 0.0),
                Branch::from_rxb(1, 3, 0.01, 0.05, 0.0),
                Branch::from_rxb(1, 4, 0.01, 0.05, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(g.adjacency_of(BusId(3)).unwrap().len(), 1);
        assert_eq!(g.adjacency_of(BusId(1)).unwrap().len(), 3);
    }

    #[test]
    fn unknown_bus_is_an_error() {
        assert_eq!(fig2().adjacency_of(BusId(9)).unwrap_err(), GridError::UnknownBus(BusId(9)));
    }

    #[test]
    fn zero_impedance_is_reported_by_branch() {
        let buses = vec![Bus::new(1), Bus::new(2)];
        let branches = vec![Branch::from_rxb(1, 2, 0.0, 0.0, 0.01)];
        let report = validate(&buses, &branches);
        assert_eq!(
            report,
            vec![Finding::ZeroImpedance { branch: 0, from: BusId(1), to: BusId(2) }]
        );
    }

    #[test]
    fn disjoint_islands_are_reported() {
        let buses = (1..=4).map(Bus::new).collect::<Vec<_>>();
        let branches = vec![
            Branch::from_rxb(1, 2, 0.01, 0.05, 0.0),
            Branch::from_rxb(3, 4, 0.01, 0.05, 0.0),
        ];
        assert_eq!(validate(&buses, &branches), vec![Finding::Disconnected { islands: 2 }]);
        assert!(GridTopology::new(buses, branches).is_err());
    }

    #[test]
    fn duplicate_branch_in_either_orientation_is_rejected() {
        let buses = vec![Bus::new(1), Bus::new(2)];
        let branches = vec![
            Branch::from_rxb(1, 2, 0.01, 0.05, 0.0),
            Branch::from_rxb(2, 1, 0.02, 0.05, 0.0),
        ];
        assert_eq!(
            validate(&buses, &branches),
            vec![Finding::DuplicateBranch { branch: 1, from: BusId(2), to: BusId(1) }]
        );
    }

    #[test]
    fn self_loop_and_duplicate_bus() {
        let buses = vec![Bus::new(1), Bus::new(1)];
        let branches = vec![Branch::from_rxb(1, 1, 0.01, 0.05, 0.0)];
        let report = validate(&buses, &branches);
        assert!(report.contains(&Finding::DuplicateBus(BusId(1))));
        assert!(report.contains(&Finding::SelfLoop { branch: 0, bus: BusId(1) }));
    }

    #[test]
    fn adjacency_is_symmetric_on_default_grid() {
        let g = GridTopology::default_seven_bus();
        for i in g.bus_ids() {
            for (j, _) in g.adjacency_of(i).unwrap() {
                assert!(g.adjacency_of(j).unwrap().iter().any(|(k, _)| *k == i));
            }
        }
    }
}
