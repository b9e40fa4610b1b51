//! Acceptance checks. Each test writes one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts.

use std::io::Write as _;
use std::process::Command;
use std::time::Instant;

use fdia::montecarlo::run_montecarlo;
use fdia_core::attack::{apply_attack, make_attack, AttackSpec};
use fdia_core::detection::{
    detect, kappa_v, median_phasor, reconstruct_from, CriteriaSet, DetectionConfig, DetectionMode,
    MedianRule, MfElement, MfSequence, Provenance, ReconstructionForm,
};
use fdia_core::estimation::{build_h, chi_square_test, wls_estimate, CMatrix, CVector, Estimator, MeasurementLayout, Weights};
use fdia_core::experiment::{trial_rng, Column, TrialConfig};
use fdia_core::measurement::{self, synthesize_sequence, synthesize_true_state, NoiseModel};
use fdia_core::stats::{ConfusionStats, Metric};
use fdia_core::{Branch, Bus, BusId, GridTopology, Phasor};
use rand::Rng;

fn verdict(id: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("[{}] criterion {id}: {title}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn pct(stats: &ConfusionStats, column: Column, metric: Metric) -> f64 {
    stats.aggregate(column, metric).expect("defined rate")
}

#[test]
fn stealth_property() {
    let start = Instant::now();
    let g = GridTopology::default_seven_bus();
    let est = Estimator::new(&g, NoiseModel::default()).unwrap();
    let mut worst_chi = 0.0f64;
    let mut worst_shift = 0.0f64;
    for k in 0..1000 {
        let mut rng = trial_rng(2024, k);
        let s = synthesize_true_state(&g, 0.05, &mut rng);
        let z = est.layout().vectorize(&measurement::snapshot(&g, &s, NoiseModel::default(), 1, &mut rng).unwrap()).unwrap();
        let spec = AttackSpec::random(&g, 1..=3, AttackSpec::DEFAULT_MAGNITUDE, &mut rng).unwrap();
        let inst = make_attack(est.h(), &g, &spec, &mut rng).unwrap();
        let clean = est.solver().solve(&z).unwrap();
        let attacked = est.solver().solve(&(&z + &inst.a)).unwrap();
        let (a, b) = (chi_square_test(&clean, 0.05).unwrap(), chi_square_test(&attacked, 0.05).unwrap());
        worst_chi = worst_chi.max((a.statistic - b.statistic).abs());
        let c = inst.c_vector();
        for j in 0..c.len() {
            worst_shift = worst_shift.max((attacked.x_hat[j] - clean.x_hat[j] - c[j]).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "stealth property",
        worst_chi <= 1e-9 && worst_shift <= 1e-9 && secs < 10.0,
        &format!("max |Δχ²| = {worst_chi:.2e} (≤ 1e-9), max |Δx̂ - c| = {worst_shift:.2e} (≤ 1e-9), {secs:.2} s (< 10 s)"),
    );
}

#[test]
fn noiseless_exactness() {
    let g = GridTopology::default_seven_bus();
    let config = DetectionConfig { criteria: CriteriaSet::ALL, ..Default::default() };
    let mut worst_rec = 0.0f64;
    let mut worst_kappa = 0.0f64;
    for k in 0..200 {
        let mut rng = trial_rng(11, k);
        let states = synthesize_sequence(&g, 0.05, 0.0, &mut rng);
        let zs = measurement::time_series(&g, &states, NoiseModel::noiseless(), &mut rng).unwrap();
        for z in &zs {
            for i in g.bus_ids() {
                for n in g.neighbors(i).unwrap() {
                    let v = reconstruct_from(&g, z, i, n.bus, ReconstructionForm::Consistent).unwrap();
                    worst_rec = worst_rec.max((v - z.voltage(i).unwrap()).norm());
                }
            }
        }
        for mode in [DetectionMode::OneD, DetectionMode::TwoD] {
            let v = detect(&g, &zs, &DetectionConfig { mode, ..config }).unwrap();
            for b in &v.buses {
                let c = b.criteria;
                worst_kappa = worst_kappa.max(c.kappa_v).max(c.kappa_i_direct).max(c.kappa_i_calc);
            }
        }
    }
    verdict(
        2,
        "noiseless exactness",
        worst_rec <= 1e-10 && worst_kappa <= 1e-10,
        &format!("max |V_i(j) - V_i| = {worst_rec:.2e}, max κ = {worst_kappa:.2e} (both ≤ 1e-10)"),
    );
}

#[test]
fn worked_example() {
    let values = [Phasor::new(1.5, 0.0), Phasor::new(1.0, 0.0), Phasor::new(1.0, 0.0)];
    let seq = MfSequence {
        bus: BusId(1),
        elements: values
            .iter()
            .zip([Provenance::Direct, Provenance::ViaNeighbor(BusId(2)), Provenance::ViaNeighbor(BusId(3))])
            .map(|(&value, provenance)| MfElement { value, provenance, time_index: 1 })
            .collect(),
    };
    let median = median_phasor(&values).unwrap();
    let mut ok = median == Phasor::new(1.0, 0.0);
    let mut detail = format!("median {median}");
    for rule in [MedianRule::Magnitude, MedianRule::Vector] {
        let a = kappa_v(&seq, rule).unwrap();
        let flagged: Vec<bool> = a.deviations.iter().map(|d| *d > 0.05).collect();
        ok &= a.v_hat == Phasor::new(1.0, 0.0) && a.kappa_v == 0.5 && flagged == [true, false, false];
        detail += &format!(", {rule:?}: v̂ = {}, κ^V = {}, flagged {flagged:?}", a.v_hat, a.kappa_v);
    }
    verdict(3, "worked example", ok, &detail);
}

fn unrefined() -> TrialConfig {
    TrialConfig { criteria: CriteriaSet::VOLTAGE, mode: DetectionMode::TwoD, refine: false, ..Default::default() }
}

#[test]
fn two_dimensional_detection_rates() {
    let start = Instant::now();
    let stats = run_montecarlo(&GridTopology::default_seven_bus(), &unrefined(), None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let d = |c| pct(&stats, c, Metric::DetectedAttacks);
    let (mf1, mf2, dci, cci) = (d(Column::Mf1d), d(Column::Mf2d), d(Column::Dci), d(Column::Cci));
    let clauses = [
        ("2D MF ≥ 99%", mf2 >= 99.0),
        ("1D MF < 2D MF", mf1 < mf2),
        ("DCI > 1D MF", dci > mf1),
        ("CCI > 1D MF", cci > mf1),
        ("< 60 s", secs < 60.0),
    ];
    let failed: Vec<&str> = clauses.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        4,
        "detection rates without refinement",
        failed.is_empty(),
        &format!(
            "detected: 1D MF {mf1:.2}%, 2D MF {mf2:.2}%, DCI {dci:.2}%, CCI {cci:.2}%; 2D MF false alarms {:.2}%; {secs:.2} s; failed clauses: {failed:?}",
            pct(&stats, Column::Mf2d, Metric::FalseAlarms)
        ),
    );
}

#[test]
fn refined_detection_rates() {
    let g = GridTopology::default_seven_bus();
    let stats = run_montecarlo(&g, &TrialConfig { refine: true, ..unrefined() }, None).unwrap();
    let detected = pct(&stats, Column::Pipeline, Metric::DetectedAttacks);
    let fa = pct(&stats, Column::Pipeline, Metric::FalseAlarms);
    let fa_before = pct(&stats, Column::Stage1, Metric::FalseAlarms);
    let clauses = [
        ("detected ≥ 99.5%", detected >= 99.5),
        ("false alarms ≤ 10%", fa <= 10.0),
        ("false alarms below unrefined", fa < fa_before),
    ];
    let failed: Vec<&str> = clauses.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        5,
        "detection rates with refinement",
        failed.is_empty(),
        &format!(
            "detected {detected:.2}%, false alarms {fa:.2}% (unrefined {fa_before:.2}%), false clearings {}; failed clauses: {failed:?}",
            stats.false_clearings
        ),
    );
}

/// Minimizes `(z - Hx)ᴴ W (z - Hx)` by exact coordinate descent.
fn coordinate_descent(h: &CMatrix, w: &[f64], z: &CVector) -> Vec<Phasor> {
    let (m, n) = h.shape();
    let mut x = vec![Phasor::new(0.0, 0.0); n];
    let mut r: Vec<Phasor> = (0..m).map(|i| z[i]).collect();
    let diag: Vec<f64> = (0..n).map(|j| (0..m).map(|i| w[i] * h[(i, j)].norm_sqr()).sum()).collect();
    for _ in 0..200_000 {
        let mut largest = 0.0f64;
        for j in 0..n {
            let g: Phasor = (0..m).map(|i| h[(i, j)].conj() * r[i] * w[i]).sum();
            let step = g / diag[j];
            x[j] += step;
            for i in 0..m {
                r[i] -= h[(i, j)] * step;
            }
            largest = largest.max(step.norm());
        }
        if largest < 1e-15 {
            break;
        }
    }
    x
}

fn random_three_bus(rng: &mut impl Rng) -> GridTopology {
    let chord = rng.random_bool(0.5);
    let mut line = |a, b| {
        let r = rng.random_range(0.005..0.05);
        Branch::from_rxb(a, b, r, r * rng.random_range(2.0..8.0), rng.random_range(0.0..0.05))
    };
    let mut branches = vec![line(1, 2), line(2, 3)];
    if chord {
        branches.push(line(1, 3));
    }
    GridTopology::new((1..=3).map(Bus::new).collect(), branches).unwrap()
}

#[test]
fn wls_oracle_equivalence() {
    let mut worst = 0.0f64;
    for k in 0..200 {
        let mut rng = trial_rng(99, k);
        let g = random_three_bus(&mut rng);
        let layout = MeasurementLayout::full(&g);
        let h = build_h(&g, &layout).unwrap();
        let w: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(0.5..2.0)).collect();
        let s = synthesize_true_state(&g, 0.1, &mut rng);
        let noise = NoiseModel::new(0.01).unwrap();
        let z = layout.vectorize(&measurement::snapshot(&g, &s, noise, 1, &mut rng).unwrap()).unwrap();
        let analytic = wls_estimate(&h, &Weights::new(w.clone()).unwrap(), &z).unwrap();
        let oracle = coordinate_descent(&h, &w, &z);
        for (a, b) in analytic.x_hat.iter().zip(&oracle) {
            worst = worst.max((a - b).norm());
        }
    }

    let g = GridTopology::new(
        (1..=3).map(Bus::new).collect(),
        vec![Branch::from_rxb(1, 2, 0.01, 0.05, 0.02), Branch::from_rxb(2, 3, 0.02, 0.08, 0.03), Branch::from_rxb(1, 3, 0.015, 0.07, 0.01)],
    )
    .unwrap();
    let noise = NoiseModel::default();
    let est = Estimator::new(&g, noise).unwrap();
    let mut passed = 0;
    for k in 0..1000 {
        let mut rng = trial_rng(7, k);
        let s = synthesize_true_state(&g, 0.05, &mut rng);
        let z = measurement::snapshot(&g, &s, noise, 1, &mut rng).unwrap();
        if chi_square_test(&est.estimate(&z).unwrap(), 0.05).unwrap().passed {
            passed += 1;
        }
    }
    let rate = passed as f64 / 10.0;
    verdict(
        6,
        "WLS oracle equivalence",
        worst <= 1e-6 && (93.0..=97.0).contains(&rate),
        &format!("max |x̂ - x_oracle| = {worst:.2e} (≤ 1e-6), χ² pass rate {rate:.1}% (93-97%)"),
    );
}

#[test]
fn cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_fdia"))
            .args(["montecarlo", "--grid", "default7", "--trials", "1000", "--seed", "42", "--mode", "2d", "--refine"])
            .args(["--criteria", "v,dci,cci", "--threads", threads, "--format", "csv", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        (std::fs::read(out).unwrap(), status.stdout)
    };
    let (a, a_stdout) = run("1", "a.csv");
    let (b, b_stdout) = run("4", "b.csv");
    let (c, _) = run("4", "c.csv");
    verdict(
        7,
        "determinism",
        a == b && b == c && a_stdout == b_stdout && !a.is_empty(),
        &format!("{} bytes; 1 vs 4 threads identical: {}; repeat identical: {}", a.len(), a == b, b == c),
    );
}

#[test]
fn refinement_safety() {
    let g = GridTopology::default_seven_bus();
    let cfg = TrialConfig { noise: NoiseModel::noiseless(), refine: true, ..unrefined() };
    let stats = run_montecarlo(&g, &cfg, None).unwrap();

    // Trial 0 rebuilt by hand from the public pieces.
    let mut rng = trial_rng(cfg.master_seed, 0);
    let est = Estimator::new(&g, cfg.noise).unwrap();
    let states = synthesize_sequence(&g, cfg.state_variation, cfg.drift_fraction, &mut rng);
    let mut zs = measurement::time_series(&g, &states, cfg.noise, &mut rng).unwrap();
    let spec = AttackSpec::random(&g, 1..=3, cfg.magnitude_range, &mut rng).unwrap();
    let inst = make_attack(est.h(), &g, &spec, &mut rng).unwrap();
    zs[2] = apply_attack(&zs[2], &inst, est.layout()).unwrap();
    let v = detect(&g, &zs, &DetectionConfig::default()).unwrap();
    let r = fdia_core::refinement::refine(&v, &g, &zs[2], cfg.epsilon).unwrap();
    let replay_bad = r
        .cleared
        .keys()
        .filter(|b| inst.attacked_buses.contains(b) && g.neighbors(**b).unwrap().iter().any(|n| !inst.attacked_buses.contains(&n.bus)))
        .count();

    verdict(
        8,
        "refinement safety (noiseless)",
        stats.false_clearings == 0 && replay_bad == 0,
        &format!("false clearings {} over {} trials, trial 0 replay {replay_bad}", stats.false_clearings, stats.trials),
    );
}
