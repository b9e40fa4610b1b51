//! Command-line interface. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdia_core::attack::{apply_attack, make_attack, verify_stealth, AttackInstance, AttackSpec};
use fdia_core::detection::{detect, CriteriaSet, DetectionConfig, DetectionMode, MedianRule};
use fdia_core::estimation::Estimator;
use fdia_core::experiment::{trial_rng, TrialConfig, TrialRng};
use fdia_core::measurement::{self, synthesize_sequence, NoiseModel};
use fdia_core::refinement::refine;
use fdia_core::{BusId, GridTopology, MeasurementSet};

use crate::error::{read_file, write_file};
use crate::report::{Format, StatsTable};
use crate::{attackfile, gridfile, montecarlo, report, snapshotfile, verdictfile, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fdia", version, about = "Stealthy FDIA simulation and median-filter detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit three noisy snapshots (t1..t3) of a random operating state.
    Simulate {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a stealthy attack to the last snapshot.
    Attack {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Snapshots to attack; simulated from the seed when omitted.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Comma-separated target buses; random when omitted.
        #[arg(long, value_delimiter = ',', conflicts_with = "replay")]
        targets: Option<Vec<u32>>,
        /// Attack file (`bus,c_re,c_im`) to replay.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[command(flatten)]
        attack: AttackArgs,
        /// Attacked snapshots.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the attack instance.
        #[arg(long)]
        attack_out: Option<PathBuf>,
    },
    /// Run detection on stored snapshots.
    Detect {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        snapshots: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
        #[arg(long, default_value = "table", value_parser = parse_format)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full Monte Carlo experiment.
    Montecarlo {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        detect: DetectArgs,
        #[command(flatten)]
        attack: AttackArgs,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Run without attacks (clean-system baseline).
        #[arg(long)]
        no_attack: bool,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "table", value_parser = parse_format)]
        format: Format,
        /// Stats CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reformat a stored stats CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "table", value_parser = parse_format)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Grid file, or `default7` for the built-in grid.
    #[arg(long, default_value = gridfile::DEFAULT_GRID)]
    pub grid: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = NoiseModel::DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Spread of the t1 state in pu magnitude and rad angle.
    #[arg(long, default_value_t = 0.05)]
    pub variation: f64,
    /// t2/t3 drift as a fraction of the variation.
    #[arg(long, default_value_t = 0.1)]
    pub drift: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    #[arg(long, default_value_t = 1)]
    pub min_targets: usize,
    #[arg(long, default_value_t = 3)]
    pub max_targets: usize,
    #[arg(long, default_value_t = AttackSpec::DEFAULT_MAGNITUDE.0)]
    pub min_magnitude: f64,
    #[arg(long, default_value_t = AttackSpec::DEFAULT_MAGNITUDE.1)]
    pub max_magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "1d")]
    OneD,
    #[value(name = "2d")]
    TwoD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MedianArg {
    Vector,
    Magnitude,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Voltage threshold, also the current threshold unless given.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long)]
    pub current_threshold: Option<f64>,
    /// Refinement tolerance; defaults to the voltage threshold.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "2d")]
    pub mode: ModeArg,
    /// Any of v, dci, cci.
    #[arg(long, default_value = "v", value_parser = parse_criteria)]
    pub criteria: CriteriaSet,
    #[arg(long)]
    pub refine: bool,
    #[arg(long, value_enum, default_value = "vector")]
    pub median: MedianArg,
}

impl DetectArgs {
    fn config(&self) -> DetectionConfig {
        DetectionConfig {
            threshold_v: self.threshold,
            threshold_i: self.current_threshold.unwrap_or(self.threshold),
            mode: match self.mode {
                ModeArg::OneD => DetectionMode::OneD,
                ModeArg::TwoD => DetectionMode::TwoD,
            },
            criteria: self.criteria,
            median: match self.median {
                MedianArg::Vector => MedianRule::Vector,
                MedianArg::Magnitude => MedianRule::Magnitude,
            },
            ..Default::default()
        }
    }

    fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(self.threshold)
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// `v`, `dci`, `cci`, comma separated, at least one.
pub fn parse_criteria(s: &str) -> Result<CriteriaSet, String> {
    let mut set = CriteriaSet { voltage: false, direct_current: false, calculated_current: false };
    for part in s.split(',').map(str::trim) {
        match part {
            "v" => set.voltage = true,
            "dci" => set.direct_current = true,
            "cci" => set.calculated_current = true,
            other => return Err(format!("unknown criterion `{other}` (v, dci, cci)")),
        }
    }
    Ok(set)
}

fn noise(sigma: f64) -> Result<NoiseModel, Error> {
    Ok(NoiseModel::new(sigma)?)
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Error> {
    match out {
        Some(path) => write_file(path, text),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn simulate(
    g: &GridTopology,
    sim: &SimArgs,
    rng: &mut TrialRng,
) -> Result<Vec<MeasurementSet>, Error> {
    let states = synthesize_sequence(g, sim.variation, sim.drift, rng);
    Ok(measurement::time_series(g, &states, noise(sim.sigma)?, rng)?)
}

fn load_snapshots(path: &Path) -> Result<Vec<MeasurementSet>, Error> {
    let snapshots = snapshotfile::parse_snapshots(&read_file(path)?).map_err(|e| match e {
        Error::Parse { error, .. } => Error::parse(path.display().to_string(), error),
        other => other,
    })?;
    if snapshots.is_empty() {
        return Err(Error::Invalid(format!("{}: no snapshots", path.display())));
    }
    Ok(snapshots)
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { grid, sim, out } => {
            let g = gridfile::load_grid(&grid.grid)?;
            let snapshots = simulate(&g, &sim, &mut trial_rng(sim.seed, 0))?;
            emit(out.as_deref(), &snapshotfile::write_snapshots(&snapshots), stdout)
        }
        Command::Attack { grid, sim, snapshots, targets, replay, attack, out, attack_out } => {
            let g = gridfile::load_grid(&grid.grid)?;
            let mut rng = trial_rng(sim.seed, 0);
            let mut snaps = match &snapshots {
                Some(path) => load_snapshots(path)?,
                None => simulate(&g, &sim, &mut rng)?,
            };
            let estimator = Estimator::new(&g, noise(sim.sigma)?)?;
            let range = (attack.min_magnitude, attack.max_magnitude);
            let instance = if let Some(path) = &replay {
                let c = attackfile::parse_attack(&read_file(path)?)?;
                AttackInstance::from_c(estimator.h(), &g, &c)?
            } else {
                let spec = match targets {
                    Some(t) => AttackSpec::new(t.into_iter().map(BusId), range)?,
                    None => AttackSpec::random(&g, attack.min_targets..=attack.max_targets, range, &mut rng)?,
                };
                make_attack(estimator.h(), &g, &spec, &mut rng)?
            };
            let last = snaps.last_mut().expect("non-empty");
            let z = estimator.layout().vectorize(last)?;
            if !verify_stealth(estimator.solver(), &z, &instance, 0.05)? {
                return Err(Error::Invalid("attack changes the bad-data statistic".into()));
            }
            *last = apply_attack(last, &instance, estimator.layout())?;
            if let Some(path) = &attack_out {
                write_file(path, &attackfile::write_attack(&instance.c))?;
            }
            emit(out.as_deref(), &snapshotfile::write_snapshots(&snaps), stdout)
        }
        Command::Detect { grid, snapshots, detect: args, format, out } => {
            let g = gridfile::load_grid(&grid.grid)?;
            let snaps = load_snapshots(&snapshots)?;
            let config = args.config();
            let window: &[MeasurementSet] = match config.mode {
                DetectionMode::TwoD if snaps.len() >= 3 => &snaps[snaps.len() - 3..],
                DetectionMode::TwoD => &snaps,
                DetectionMode::OneD => &snaps[snaps.len() - 1..],
            };
            let verdict = detect(&g, window, &config)?;
            let refinement = if args.refine {
                Some(refine(&verdict, &g, window.last().expect("non-empty"), args.epsilon())?)
            } else {
                None
            };
            let rows = verdictfile::rows(&verdict, refinement.as_ref());
            let text = match format {
                Format::Csv => verdictfile::write_verdict(&rows),
                Format::Table => verdict_table(&rows),
            };
            emit(out.as_deref(), &text, stdout)
        }
        Command::Montecarlo { grid, sim, detect: args, attack, trials, no_attack, threads, format, out } => {
            let g = gridfile::load_grid(&grid.grid)?;
            let d = args.config();
            let config = TrialConfig {
                noise: noise(sim.sigma)?,
                state_variation: sim.variation,
                drift_fraction: sim.drift,
                attack_enabled: !no_attack,
                target_count: (attack.min_targets, attack.max_targets),
                magnitude_range: (attack.min_magnitude, attack.max_magnitude),
                threshold_v: d.threshold_v,
                threshold_i: d.threshold_i,
                epsilon: args.epsilon(),
                mode: d.mode,
                criteria: d.criteria,
                refine: args.refine,
                median: d.median,
                trials,
                master_seed: sim.seed,
                ..Default::default()
            };
            if threads == Some(0) {
                return Err(Error::Invalid("--threads must be at least 1".into()));
            }
            let stats = montecarlo::run_montecarlo(&g, &config, threads)?;
            let table = StatsTable::from_stats(&stats, config.criteria);
            if let Some(path) = &out {
                write_file(path, &report::write_csv(&table))?;
            }
            emit(None, &report::report(&table, format), stdout)
        }
        Command::Report { input, format, out } => {
            let table = report::parse_csv(&read_file(&input)?)?;
            emit(out.as_deref(), &report::report(&table, format), stdout)
        }
    }
}

fn verdict_table(rows: &[verdictfile::VerdictRow]) -> String {
    let mut out = format!(
        "{:>5} {:>10} {:>10} {:>10} {:>8} {:>8}\n",
        "bus", "kappa_v", "kappa_i", "kappa_ic", "stage1", "final"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>5} {:>10.5} {:>10.5} {:>10.5} {:>8} {:>8}{}\n",
            r.bus,
            r.kappa_v,
            r.kappa_i,
            r.kappa_i_calc,
            if r.stage1_suspect { "suspect" } else { "-" },
            if r.suspect { "suspect" } else { "-" },
            r.cleared_by.map(|b| format!("  cleared via {b}")).unwrap_or_default()
        ));
    }
    let suspects: Vec<String> = rows.iter().filter(|r| r.suspect).map(|r| r.bus.to_string()).collect();
    out.push_str(&format!(
        "suspects: {}\n",
        if suspects.is_empty() { "none".to_string() } else { suspects.join(", ") }
    ));
    out
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match run(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}
