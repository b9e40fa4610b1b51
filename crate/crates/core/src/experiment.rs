//! One Monte Carlo trial: three snapshots, a stealthy attack on the last,
//! stage-1 detection in every variant, optional refinement, truth labels.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{apply_attack, make_attack, verify_stealth, AttackError, AttackSpec};
use crate::detection::{
    detect, CriteriaSet, DetectionConfig, DetectionError, DetectionMode, DetectionVerdict,
    MedianRule, ReconstructionForm,
};
use crate::estimation::{EstimationError, Estimator, MeasurementKind};
use crate::grid::{BusId, GridTopology};
use crate::measurement::{self, synthesize_sequence, MeasurementError, NoiseModel};
use crate::refinement::{refine_with, RefinementError, TrustRule};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("trial {0}: attack failed the stealth check")]
    StealthViolated(u64),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Refinement(#[from] RefinementError),
}

/// Everything a run depends on apart from the topology itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub noise: NoiseModel,
    /// Half-width of the magnitude (pu) and angle (rad) spread of the t1 state.
    pub state_variation: f64,
    /// t2 and t3 drift from t1 by this fraction of `state_variation`.
    pub drift_fraction: f64,
    pub attack_enabled: bool,
    /// Inclusive range of attacked buses per trial.
    pub target_count: (usize, usize),
    pub magnitude_range: (f64, f64),
    pub threshold_v: f64,
    pub threshold_i: f64,
    pub epsilon: f64,
    pub mode: DetectionMode,
    pub criteria: CriteriaSet,
    pub refine: bool,
    pub trust: TrustRule,
    pub median: MedianRule,
    pub reconstruction: ReconstructionForm,
    /// Significance level of the χ² test used in the stealth check.
    pub alpha: f64,
    pub trials: u64,
    pub master_seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            noise: NoiseModel::default(),
            state_variation: 0.05,
            drift_fraction: 0.1,
            attack_enabled: true,
            target_count: (1, 3),
            magnitude_range: AttackSpec::DEFAULT_MAGNITUDE,
            threshold_v: 0.05,
            threshold_i: 0.05,
            epsilon: 0.05,
            mode: DetectionMode::TwoD,
            criteria: CriteriaSet::VOLTAGE,
            refine: false,
            trust: TrustRule::Any,
            median: MedianRule::default(),
            reconstruction: ReconstructionForm::default(),
            alpha: 0.05,
            trials: 1000,
            master_seed: 42,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if self.trials == 0 {
            return Err(ExperimentError::NoTrials);
        }
        if !positive(self.threshold_v) || !positive(self.threshold_i) || !positive(self.epsilon) {
            return Err(ExperimentError::InvalidConfig("thresholds must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ExperimentError::InvalidConfig("alpha must lie in (0, 1)"));
        }
        if !(self.state_variation.is_finite() && self.state_variation >= 0.0)
            || !(self.drift_fraction.is_finite() && self.drift_fraction >= 0.0)
        {
            return Err(ExperimentError::InvalidConfig("state spread must be non-negative"));
        }
        Ok(())
    }

    fn detection(&self, mode: DetectionMode, criteria: CriteriaSet) -> DetectionConfig {
        DetectionConfig {
            threshold_v: self.threshold_v,
            threshold_i: self.threshold_i,
            mode,
            criteria,
            median: self.median,
            reconstruction: self.reconstruction,
        }
    }
}

/// Generator behind every trial.
pub type TrialRng = ChaCha8Rng;

/// Random source for one trial: the master seed with the trial index as the
/// stream, so trials are independent of execution order.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// The detection variants reported side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    /// κ^V over the t3 snapshot.
    Mf1d,
    /// κ^V over t1..t3.
    Mf2d,
    /// Direct current imbalance at t3.
    Dci,
    /// Calculated current imbalance at t3.
    Cci,
    /// Configured mode and criteria, before refinement.
    Stage1,
    /// Configured pipeline including refinement when enabled.
    Pipeline,
}

impl Column {
    pub const ALL: [Column; 6] =
        [Column::Mf1d, Column::Mf2d, Column::Dci, Column::Cci, Column::Stage1, Column::Pipeline];

    pub fn key(self) -> &'static str {
        match self {
            Column::Mf1d => "mf1d",
            Column::Mf2d => "mf2d",
            Column::Dci => "dci",
            Column::Cci => "cci",
            Column::Stage1 => "stage1",
            Column::Pipeline => "pipeline",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Column::Mf1d => "1D MF",
            Column::Mf2d => "2D MF",
            Column::Dci => "DCI",
            Column::Cci => "CCI",
            Column::Stage1 => "Stage 1",
            Column::Pipeline => "Pipeline",
        }
    }

    pub fn from_key(key: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.key() == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusOutcome {
    pub bus: BusId,
    /// The voltage measurement was touched by the attack.
    pub attacked: bool,
    pub mf1d: bool,
    pub mf2d: bool,
    pub dci: bool,
    pub cci: bool,
    pub stage1: bool,
    /// Final prediction of the configured pipeline.
    pub predicted: bool,
    /// Cleared by refinement.
    pub cleared: bool,
    /// Some neighbor's voltage measurement was not attacked.
    pub has_clean_neighbor: bool,
    pub kappa_v_1d: f64,
    pub kappa_v_2d: f64,
    pub kappa_i: f64,
    pub kappa_i_calc: f64,
}

impl BusOutcome {
    pub fn flag(&self, column: Column) -> bool {
        match column {
            Column::Mf1d => self.mf1d,
            Column::Mf2d => self.mf2d,
            Column::Dci => self.dci,
            Column::Cci => self.cci,
            Column::Stage1 => self.stage1,
            Column::Pipeline => self.predicted,
        }
    }

    /// An attacked measurement cleared although a clean neighbor existed.
    pub fn false_clearing(&self) -> bool {
        self.attacked && self.cleared && self.has_clean_neighbor
    }
}

/// A branch-current measurement: touched by the attack, and whether its
/// sending bus ended up suspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurrentOutcome {
    pub from: BusId,
    pub to: BusId,
    pub attacked: bool,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub buses: Vec<BusOutcome>,
    pub currents: Vec<CurrentOutcome>,
    pub stealth_verified: bool,
    pub attacked_buses: BTreeSet<BusId>,
}

/// Precomputed estimator and config for repeated trials on one topology.
#[derive(Debug, Clone)]
pub struct Experiment {
    topology: GridTopology,
    config: TrialConfig,
    estimator: Estimator,
}

impl Experiment {
    pub fn new(topology: GridTopology, config: TrialConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let (lo, hi) = config.target_count;
        if config.attack_enabled && (lo == 0 || lo > hi || hi > topology.bus_count()) {
            return Err(AttackError::InvalidTargetCount(lo, hi, topology.bus_count()).into());
        }
        let estimator = Estimator::new(&topology, config.noise)?;
        Ok(Experiment { topology, config, estimator })
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topology
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    /// Deterministic in `(master_seed, trial_index)`.
    pub fn run_trial(&self, trial_index: u64) -> Result<TrialOutcome, ExperimentError> {
        let cfg = &self.config;
        let g = &self.topology;
        let layout = self.estimator.layout();
        let mut rng = trial_rng(cfg.master_seed, trial_index);

        let states = synthesize_sequence(g, cfg.state_variation, cfg.drift_fraction, &mut rng);
        let mut snapshots = measurement::time_series(g, &states, cfg.noise, &mut rng)?;

        let mut touched = BTreeSet::new();
        let mut attacked_buses = BTreeSet::new();
        let mut stealth_verified = true;
        if cfg.attack_enabled {
            let (lo, hi) = cfg.target_count;
            let spec = AttackSpec::random(g, lo..=hi, cfg.magnitude_range, &mut rng)?;
            let instance = make_attack(self.estimator.h(), g, &spec, &mut rng)?;
            let z = layout.vectorize(&snapshots[2])?;
            stealth_verified = verify_stealth(self.estimator.solver(), &z, &instance, cfg.alpha)?;
            if !stealth_verified {
                return Err(ExperimentError::StealthViolated(trial_index));
            }
            snapshots[2] = apply_attack(&snapshots[2], &instance, layout)?;
            touched = instance.touched.iter().map(|&k| layout.rows()[k]).collect();
            attacked_buses = instance.attacked_buses;
        }

        let all_1d = detect(g, &snapshots, &cfg.detection(DetectionMode::OneD, CriteriaSet::ALL))?;
        let all_2d = detect(g, &snapshots, &cfg.detection(DetectionMode::TwoD, CriteriaSet::ALL))?;
        let stage1 = configured(
            match cfg.mode {
                DetectionMode::OneD => &all_1d,
                DetectionMode::TwoD => &all_2d,
            },
            cfg.criteria,
        );
        let (final_suspects, cleared) = if cfg.refine {
            let r = refine_with(&stage1, g, &snapshots[2], cfg.epsilon, cfg.trust)?;
            (r.final_suspects, r.cleared.into_keys().collect())
        } else {
            (stage1.suspects(), BTreeSet::new())
        };

        let voltage_attacked = |b: BusId| touched.contains(&MeasurementKind::Voltage(b));
        let mut buses = Vec::with_capacity(g.bus_count());
        for ((v1, v2), s1) in all_1d.buses.iter().zip(&all_2d.buses).zip(&stage1.buses) {
            let bus = v1.bus;
            buses.push(BusOutcome {
                bus,
                attacked: voltage_attacked(bus),
                mf1d: v1.voltage_alarm,
                mf2d: v2.voltage_alarm,
                dci: v2.direct_current_alarm,
                cci: v2.calculated_current_alarm,
                stage1: s1.suspect,
                predicted: final_suspects.contains(&bus),
                cleared: cleared.contains(&bus),
                has_clean_neighbor: g.neighbors(bus).map_err(DetectionError::from)?.iter().any(|n| !voltage_attacked(n.bus)),
                kappa_v_1d: v1.criteria.kappa_v,
                kappa_v_2d: v2.criteria.kappa_v,
                kappa_i: v2.criteria.kappa_i_direct,
                kappa_i_calc: v2.criteria.kappa_i_calc,
            });
        }
        let currents = layout
            .rows()
            .iter()
            .filter_map(|kind| match *kind {
                MeasurementKind::Current { from, to } => Some(CurrentOutcome {
                    from,
                    to,
                    attacked: touched.contains(kind),
                    predicted: final_suspects.contains(&from),
                }),
                _ => None,
            })
            .collect();
        Ok(TrialOutcome { trial_index, buses, currents, stealth_verified, attacked_buses })
    }

    /// Trials `0..config.trials` in order, sequentially.
    pub fn run_all(&self) -> Result<Vec<TrialOutcome>, ExperimentError> {
        (0..self.config.trials).map(|k| self.run_trial(k)).collect()
    }
}

/// `verdict` with suspect flags recomputed for a subset of criteria.
fn configured(verdict: &DetectionVerdict, criteria: CriteriaSet) -> DetectionVerdict {
    let mut out = verdict.clone();
    out.config.criteria = criteria;
    for b in &mut out.buses {
        b.suspect = (criteria.voltage && b.voltage_alarm)
            || (criteria.direct_current && b.direct_current_alarm)
            || (criteria.calculated_current && b.calculated_current_alarm);
    }
    out
}

/// Convenience wrapper building a fresh [`Experiment`].
pub fn run_trial(
    topology: &GridTopology,
    config: &TrialConfig,
    trial_index: u64,
) -> Result<TrialOutcome, ExperimentError> {
    Experiment::new(topology.clone(), config.clone())?.run_trial(trial_index)
}
