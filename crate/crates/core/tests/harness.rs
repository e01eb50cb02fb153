use sphex::experiment::{
    monotonicity_violations, parse_csv, run_cells, run_noisy_recovery, run_phase_transition,
    to_csv_string, transition_point, Cell, ExperimentConfig, NoisyConfig, SampleRange,
};
use sphex::ProblemParams;

fn cell(d: usize, q: usize, s: usize) -> Cell {
    Cell { d, q, s }
}

#[test]
fn oversampled_cell_succeeds() {
    let cfg = ExperimentConfig {
        master_seed: 1,
        ..Default::default()
    };
    let r = &run_cells(&cfg, &[cell(3, 5, 300)]).unwrap()[0];
    assert_eq!(r.beta, 36);
    assert!(r.success_rate >= 0.95, "{r:?}");
}

#[test]
fn undersampled_cell_fails() {
    let cfg = ExperimentConfig {
        master_seed: 1,
        ..Default::default()
    };
    let r = &run_cells(&cfg, &[cell(3, 5, 20)]).unwrap()[0];
    assert!(r.success_rate <= 0.05, "{r:?}");
}

fn tiny() -> ExperimentConfig {
    ExperimentConfig {
        d_list: vec![3],
        q_min: 2,
        q_max: 3,
        s_range: SampleRange {
            min: 10,
            max: 80,
            step: 10,
        },
        trials: 20,
        master_seed: 99,
        ..Default::default()
    }
}

#[test]
fn sweep_is_deterministic_across_workers() {
    let mut cfg = tiny();
    cfg.worker_count = 1;
    let a = run_phase_transition(&cfg).unwrap();
    cfg.worker_count = 3;
    let b = run_phase_transition(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(to_csv_string(&a).unwrap(), to_csv_string(&b).unwrap());
    assert_eq!(
        parse_csv(&to_csv_string(&a).unwrap()).unwrap().len(),
        a.len()
    );
    assert!(
        monotonicity_violations(&a).is_empty(),
        "{:?}",
        monotonicity_violations(&a)
    );

    let one = ExperimentConfig {
        trials: 1,
        ..tiny()
    };
    let x = to_csv_string(&run_phase_transition(&one).unwrap()).unwrap();
    let y = to_csv_string(&run_phase_transition(&one).unwrap()).unwrap();
    assert_eq!(x.as_bytes(), y.as_bytes());
}

#[test]
fn transition_is_bracketed() {
    let cfg = ExperimentConfig {
        trials: 20,
        master_seed: 2,
        ..Default::default()
    };
    let mut cells = Vec::new();
    for q in 5..=10 {
        let beta = ProblemParams::new(3, q).unwrap().beta() as usize;
        for s in [beta - 5, beta - 1, beta + 5, 2 * beta, 4 * beta] {
            cells.push(cell(3, q, s));
        }
    }
    let results = run_cells(&cfg, &cells).unwrap();
    assert!(monotonicity_violations(&results).is_empty());
    for q in 5..=10 {
        let beta = ProblemParams::new(3, q).unwrap().beta() as f64;
        let s = transition_point(&results, 3, q, 0.9).expect("no cell reached 0.9") as f64;
        assert!(s >= beta && s <= 8.0 * beta * beta.ln(), "q={q} s={s}");
    }
}

#[test]
fn noisy_recovery_cases() {
    let params = ProblemParams::new(3, 3).unwrap();
    let mut cfg = NoisyConfig::new(params, 512, 0.0, 3, 4);
    cfg.mc_samples = 20_000;
    let clean = run_noisy_recovery(&cfg).unwrap();
    assert!(clean.max_ratio <= 1e-18, "{clean:?}");

    cfg.high_coef = 1.0;
    let base = run_noisy_recovery(&cfg).unwrap();
    cfg.amplitude = 10.0;
    let scaled = run_noisy_recovery(&cfg).unwrap();
    for (a, b) in base.trials.iter().zip(&scaled.trials) {
        assert!((a.ratio - b.ratio).abs() <= 1e-9 * a.ratio, "{a:?} {b:?}");
        assert!((b.residual_sq - 100.0 * a.residual_sq).abs() <= 1e-9 * b.residual_sq);
    }
    assert!(base.median_ratio <= 0.5, "{base:?}");
}
