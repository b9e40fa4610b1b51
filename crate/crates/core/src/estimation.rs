//! Linear PMU state estimation and residual-based bad-data tests.
//!
//! With voltage and current phasors measured everywhere the measurement
//! model is linear, `z = Hx + e`, and the weighted least-squares estimate is
//! obtained in complex arithmetic from a QR factorization of `√W·H`. The
//! explicit normal-equation inverse is never formed.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::chi2;
use crate::grid::{BusId, GridTopology};
use crate::measurement::{MeasurementSet, NoiseModel};
use crate::phasor::{self, Phasor};

pub type CMatrix = DMatrix<Phasor>;
pub type CVector = DVector<Phasor>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("measurement {0} is missing from the snapshot")]
    MissingMeasurement(MeasurementKind),
    #[error("layout references unknown bus {0}")]
    UnknownBus(BusId),
    #[error("layout references a branch {0}-{1} that does not exist")]
    UnknownBranch(BusId, BusId),
    #[error("system is unobservable: rank {rank} < {states} states")]
    Unobservable { rank: usize, states: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight #{0} is not a positive finite number")]
    InvalidWeight(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// What a row of `z`/`H` measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeasurementKind {
    Voltage(BusId),
    /// Current leaving `from` into the branch towards `to`.
    Current { from: BusId, to: BusId },
    Injection(BusId),
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementKind::Voltage(b) => write!(f, "V{b}"),
            MeasurementKind::Current { from, to } => write!(f, "I{from}-{to}"),
            MeasurementKind::Injection(b) => write!(f, "J{b}"),
        }
    }
}

/// Row order shared by `z`, `H`, `W` and the residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLayout {
    rows: Vec<MeasurementKind>,
}

impl MeasurementLayout {
    /// Full PMU coverage: every bus voltage (id order), both ends of every
    /// branch (branch order, from-end first), every injection (id order).
    pub fn full(topology: &GridTopology) -> Self {
        let mut rows: Vec<MeasurementKind> =
            topology.bus_ids().map(MeasurementKind::Voltage).collect();
        for br in topology.branches() {
            rows.push(MeasurementKind::Current { from: br.from, to: br.to });
            rows.push(MeasurementKind::Current { from: br.to, to: br.from });
        }
        rows.extend(topology.bus_ids().map(MeasurementKind::Injection));
        MeasurementLayout { rows }
    }

    pub fn from_rows(rows: Vec<MeasurementKind>) -> Self {
        MeasurementLayout { rows }
    }

    pub fn rows(&self) -> &[MeasurementKind] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, kind: MeasurementKind) -> Option<usize> {
        self.rows.iter().position(|&r| r == kind)
    }

    /// Reads the snapshot into a measurement vector in row order.
    pub fn vectorize(&self, snapshot: &MeasurementSet) -> Result<CVector, EstimationError> {
        let values = self
            .rows
            .iter()
            .map(|&kind| {
                let value = match kind {
                    MeasurementKind::Voltage(b) => snapshot.voltage(b),
                    MeasurementKind::Current { from, to } => snapshot.current(from, to),
                    MeasurementKind::Injection(b) => snapshot.injection(b),
                };
                value.ok_or(EstimationError::MissingMeasurement(kind))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CVector::from_vec(values))
    }

    /// Copy of `snapshot` with every row's value replaced by `f(kind, old)`.
    pub fn map_rows(
        &self,
        snapshot: &MeasurementSet,
        mut f: impl FnMut(usize, Phasor) -> Phasor,
    ) -> Result<MeasurementSet, EstimationError> {
        let mut out = snapshot.clone();
        for (k, &kind) in self.rows.iter().enumerate() {
            let slot = match kind {
                MeasurementKind::Voltage(b) => out.bus_voltages.get_mut(&b),
                MeasurementKind::Current { from, to } => out.branch_currents.get_mut(&(from, to)),
                MeasurementKind::Injection(b) => out.injection_currents.get_mut(&b),
            };
            let slot = slot.ok_or(EstimationError::MissingMeasurement(kind))?;
            *slot = f(k, *slot);
        }
        Ok(out)
    }
}

/// Builds the complex measurement matrix for `layout` (rows) against the
/// topology's bus voltages (columns).
pub fn build_h(
    topology: &GridTopology,
    layout: &MeasurementLayout,
) -> Result<CMatrix, EstimationError> {
    let n = topology.bus_count();
    let mut h = CMatrix::zeros(layout.len(), n);
    let col = |b: BusId| topology.bus_index(b).ok_or(EstimationError::UnknownBus(b));
    for (row, &kind) in layout.rows().iter().enumerate() {
        match kind {
            MeasurementKind::Voltage(b) => h[(row, col(b)?)] = Phasor::new(1.0, 0.0),
            MeasurementKind::Current { from, to } => {
                let (i, j) = (col(from)?, col(to)?);
                let (_, br) = topology
                    .branch_between(from, to)
                    .ok_or(EstimationError::UnknownBranch(from, to))?;
                h[(row, i)] += br.y_series() + br.y_half();
                h[(row, j)] -= br.y_series();
            }
            MeasurementKind::Injection(b) => {
                let i = col(b)?;
                for n in topology.neighbors(b).map_err(|_| EstimationError::UnknownBus(b))? {
                    let br = &topology.branches()[n.branch];
                    let j = col(n.bus)?;
                    h[(row, i)] += br.y_series() + br.y_half();
                    h[(row, j)] -= br.y_series();
                }
            }
        }
    }
    Ok(h)
}

/// Per-measurement weights (inverse variances).
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self, EstimationError> {
        if let Some(k) = values.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(EstimationError::InvalidWeight(k));
        }
        Ok(Weights(values))
    }

    /// `1/σ²` on every row. A noiseless model has no meaningful variance;
    /// it gets unit weights.
    pub fn uniform(m: usize, noise: NoiseModel) -> Self {
        let sigma = noise.sigma();
        let w = if sigma > 0.0 { 1.0 / (sigma * sigma) } else { 1.0 };
        Weights(vec![w; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    /// Estimated bus voltages in topology column order.
    pub x_hat: CVector,
    /// `z - H·x̂` in layout row order.
    pub residuals: CVector,
    /// `Σ w_k |r_k|²`.
    pub chi2: f64,
    /// Real degrees of freedom, `2(m - n)`.
    pub dof: usize,
    pub normalized_residuals: Vec<f64>,
}

impl EstimationResult {
    pub fn state_map(&self, topology: &GridTopology) -> BTreeMap<BusId, Phasor> {
        topology.bus_ids().zip(self.x_hat.iter().copied()).collect()
    }
}

/// Factorized WLS problem for a fixed `H` and `W`, reusable across
/// measurement vectors.
#[derive(Debug, Clone)]
pub struct WlsSolver {
    h: CMatrix,
    sqrt_w: Vec<f64>,
    weights: Vec<f64>,
    q: CMatrix,
    r: CMatrix,
    /// Squared row norms of the thin `Q`: the hat-matrix diagonal.
    leverage: Vec<f64>,
}

impl WlsSolver {
    pub fn new(h: CMatrix, weights: &Weights) -> Result<Self, EstimationError> {
        let (m, n) = h.shape();
        if weights.len() != m {
            return Err(EstimationError::DimensionMismatch { expected: m, got: weights.len() });
        }
        if m < n {
            return Err(EstimationError::Unobservable { rank: m, states: n });
        }
        let weights = weights.as_slice().to_vec();
        let sqrt_w: Vec<f64> = weights.iter().map(|w| libm::sqrt(*w)).collect();
        let mut scaled = h.clone();
        for (k, mut row) in scaled.row_iter_mut().enumerate() {
            row *= Phasor::new(sqrt_w[k], 0.0);
        }
        let qr = scaled.qr();
        let r = qr.r();
        let q = qr.q();

        let diag: Vec<f64> = (0..n).map(|k| phasor::magnitude(r[(k, k)])).collect();
        let largest = diag.iter().copied().fold(0.0, f64::max);
        let rank = diag.iter().filter(|d| **d > 1e-10 * largest && **d > 0.0).count();
        if rank < n {
            return Err(EstimationError::Unobservable { rank, states: n });
        }
        let leverage = q.row_iter().map(|row| row.norm_squared()).collect();
        Ok(WlsSolver { h, sqrt_w, weights, q, r, leverage })
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn measurements(&self) -> usize {
        self.h.nrows()
    }

    pub fn states(&self) -> usize {
        self.h.ncols()
    }

    pub fn solve(&self, z: &CVector) -> Result<EstimationResult, EstimationError> {
        let m = self.measurements();
        if z.len() != m {
            return Err(EstimationError::DimensionMismatch { expected: m, got: z.len() });
        }
        let b = CVector::from_iterator(
            m,
            z.iter().zip(&self.sqrt_w).map(|(v, s)| v * Phasor::new(*s, 0.0)),
        );
        let y = self.q.adjoint() * b;
        let x_hat = self
            .r
            .solve_upper_triangular(&y)
            .ok_or(EstimationError::Unobservable { rank: 0, states: self.states() })?;
        let residuals = z - &self.h * &x_hat;
        let chi2 = residuals
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * r.norm_sqr())
            .sum();
        let normalized_residuals = residuals
            .iter()
            .enumerate()
            .map(|(k, r)| {
                // Residual covariance diagonal is (1 - leverage_k) / w_k.
                let omega = (1.0 - self.leverage[k]) / self.weights[k];
                if omega > 1e-12 / self.weights[k] {
                    phasor::magnitude(*r) / libm::sqrt(omega)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(EstimationResult {
            x_hat,
            residuals,
            chi2,
            dof: 2 * (m - self.states()),
            normalized_residuals,
        })
    }
}

/// `x̂ = (Hᴴ W H)⁻¹ Hᴴ W z`, computed through the QR factorization.
pub fn wls_estimate(
    h: &CMatrix,
    weights: &Weights,
    z: &CVector,
) -> Result<EstimationResult, EstimationError> {
    WlsSolver::new(h.clone(), weights)?.solve(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub threshold: f64,
    /// `false` means bad data is suspected.
    pub passed: bool,
}

/// Compares the weighted residual sum against the χ² quantile at confidence
/// `1 - alpha` with `2(m - n)` degrees of freedom.
pub fn chi_square_test(
    result: &EstimationResult,
    alpha: f64,
) -> Result<ChiSquareOutcome, EstimationError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EstimationError::InvalidAlpha(alpha));
    }
    let threshold = if result.dof == 0 { 0.0 } else { chi2::quantile(1.0 - alpha, result.dof as f64) };
    let passed = result.dof == 0 || result.chi2 <= threshold;
    Ok(ChiSquareOutcome { statistic: result.chi2, threshold, passed })
}

/// Index and value of the largest normalized residual; the lowest index wins
/// ties. `None` for an empty residual vector.
pub fn largest_normalized_residual(result: &EstimationResult) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in result.normalized_residuals.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best
}

/// Layout, `H` and factorized solver for one topology and noise model.
#[derive(Debug, Clone)]
pub struct Estimator {
    layout: MeasurementLayout,
    weights: Weights,
    solver: WlsSolver,
}

impl Estimator {
    pub fn new(topology: &GridTopology, noise: NoiseModel) -> Result<Self, EstimationError> {
        let layout = MeasurementLayout::full(topology);
        let h = build_h(topology, &layout)?;
        let weights = Weights::uniform(layout.len(), noise);
        let solver = WlsSolver::new(h, &weights)?;
        Ok(Estimator { layout, weights, solver })
    }

    pub fn layout(&self) -> &MeasurementLayout {
        &self.layout
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn h(&self) -> &CMatrix {
        self.solver.h()
    }

    pub fn solver(&self) -> &WlsSolver {
        &self.solver
    }

    pub fn estimate(&self, snapshot: &MeasurementSet) -> Result<EstimationResult, EstimationError> {
        self.solver.solve(&self.layout.vectorize(snapshot)?)
    }
}
