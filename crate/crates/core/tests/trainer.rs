use oscnet::ansatz::{default_report_grid, TrialWavefunction};
use oscnet::network::NetworkParams;
use oscnet::operators::PotentialSpec;
use oscnet::oracle::{reference_levels, wkb_energy};
use oscnet::trainer::{rayleigh_quotient, solve_spectrum, train_level, TrainingConfig};

fn table(lambda: f64) -> PotentialSpec {
    PotentialSpec::anharmonic_table(lambda).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn train(cfg: &TrainingConfig) -> (TrialWavefunction, oscnet::trainer::TrainingReport) {
    train_level(cfg, cfg.init_network().unwrap()).unwrap()
}

#[test]
fn harmonic_from_pretrain_below() {
    let mut cfg = TrainingConfig::new(PotentialSpec::harmonic_half());
    cfg.pretrain_energy = 0.4;
    cfg.seed = 7;
    let (_, report) = train(&cfg);
    assert!(report.converged);
    assert!((report.final_energy - 0.5).abs() <= 5e-3, "{}", report.final_energy);
    assert!(report.energy_discrepancy() < 1e-3, "{report:?}");
}

#[test]
fn quartic_ground_state_from_pretrain() {
    let mut cfg = TrainingConfig::new(table(0.1));
    cfg.pretrain_energy = 1.0;
    let (_, report) = train(&cfg);
    assert!(report.converged);
    assert!(rel(report.final_energy, 1.0652855) <= 5e-3, "{}", report.final_energy);
}

#[test]
fn first_excited_level_with_frozen_ground() {
    let mut cfg = TrainingConfig::new(table(0.1));
    cfg.pretrain_energy = 1.0;
    let (ground, _) = train(&cfg);
    cfg.frozen_lower_states = vec![ground];
    cfg.pretrain_energy = 3.2;
    cfg.seed = 8;
    let (_, report) = train(&cfg);
    assert!(rel(report.final_energy, 3.306872) <= 1e-2, "{}", report.final_energy);
}

#[test]
fn normalization_weight_does_not_move_the_eigenvalue() {
    let mut cfg = TrainingConfig::new(PotentialSpec::harmonic_half());
    let (_, a) = train(&cfg);
    cfg.norm_weight *= 10.0;
    let (_, b) = train(&cfg);
    assert!((a.final_energy - b.final_energy).abs() < 1e-4, "{} vs {}", a.final_energy, b.final_energy);
}

#[test]
fn one_level_spectrum_is_a_single_training_run() {
    let cfg = TrainingConfig::new(table(0.1));
    let spectrum = solve_spectrum(1, &cfg, None).unwrap();
    let (_, report) = train(&cfg);
    assert_eq!(spectrum.levels.len(), 1);
    assert_eq!(spectrum.levels[0].report, report);
}

#[test]
fn trace_csv_has_three_columns() {
    let mut cfg = TrainingConfig::new(PotentialSpec::harmonic_half());
    cfg.max_iters = 250;
    cfg.trace_every = 100;
    let (_, report) = train(&cfg);
    let mut buf = Vec::new();
    report.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,loss,energy");
    let iters: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["0", "100", "200", "250"]);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
}

#[test]
fn unconverged_level_marks_levels_above() {
    let mut cfg = TrainingConfig::new(table(0.1));
    cfg.max_iters = 20;
    let estimates: Vec<f64> = (0..2).map(|n| wkb_energy(&cfg.spec, n)).collect();
    let spectrum = solve_spectrum(2, &cfg, Some(&estimates)).unwrap();
    assert!(!spectrum.levels[0].converged);
    assert!(!spectrum.levels[1].converged);
}

#[test]
fn rayleigh_quotient_is_variational_for_random_networks() {
    for lambda in [0.0, 0.1, 1.0] {
        let spec = table(lambda);
        let e0 = reference_levels(&spec, 1).unwrap().best()[0];
        let grid = default_report_grid(&spec);
        for seed in 0..50 {
            let trial = TrialWavefunction::for_potential(NetworkParams::init(&[10], seed).unwrap(), &spec);
            let rq = rayleigh_quotient(&trial, &spec, &grid).unwrap();
            assert!(rq >= e0 - 1e-4, "lambda {lambda} seed {seed}: {rq} < {e0}");
        }
    }
}
