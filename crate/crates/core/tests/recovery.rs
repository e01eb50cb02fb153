use proptest::prelude::*;
use sphex::experiment::{run_cells, Cell, ExperimentConfig};
use sphex::oracles::make_bandlimited;
use sphex::sampling::NormalStream;
use sphex::{
    deserialize_model, fit, fit_with_report, pinv_solve, sample_uniform_sphere, serialize_model,
    ExpansionModel, FitOptions, GramMatrix, ProblemParams,
};

fn max_test_error(model: &ExpansionModel, f: impl Fn(&[f64]) -> f64, seed: u64) -> f64 {
    let d = model.params().d();
    let pts = sample_uniform_sphere(d, 100, seed).unwrap();
    let ys = model.evaluate_many(&pts).unwrap();
    pts.iter()
        .zip(ys)
        .map(|(p, y)| (y - f(p)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn constant_function() {
    for (d, q) in [(2, 3), (3, 4), (5, 2)] {
        let params = ProblemParams::new(d, q).unwrap();
        let s = 4 * params.beta() as usize + 20;
        let m = fit(|_| 1.0, &params, s, 3).unwrap();
        assert!(max_test_error(&m, |_| 1.0, 4) <= 1e-10, "d={d} q={q}");
    }
}

#[test]
fn first_coordinate() {
    let params = ProblemParams::new(3, 1).unwrap();
    let m = fit(|w| w[0], &params, 32, 7).unwrap();
    assert!(max_test_error(&m, |w| w[0], 8) <= 1e-10);
}

#[test]
fn value_at_a_sample_point() {
    let params = ProblemParams::new(3, 4).unwrap();
    let f = make_bandlimited(&params, 12);
    let m = fit(|w| f.eval(w), &params, 200, 13).unwrap();
    let w1 = m.points().point(0).to_vec();
    assert!((m.evaluate(&w1).unwrap() - f.eval(&w1)).abs() <= 1e-9);
}

#[test]
fn pinv_of_a_rank_three_psd_matrix() {
    let mut st = NormalStream::new(21);
    let b: Vec<f64> = (0..15).map(|_| st.normal()).collect();
    let mut a = vec![0.0; 25];
    for i in 0..5 {
        for j in 0..5 {
            a[i * 5 + j] = (0..3).map(|k| b[i * 3 + k] * b[j * 3 + k]).sum();
        }
    }
    // symmetrize exactly
    for i in 0..5 {
        for j in 0..i {
            a[i * 5 + j] = a[j * 5 + i];
        }
    }
    let k = GramMatrix::from_entries(5, &a).unwrap();
    let x: Vec<f64> = (0..5).map(|_| st.normal()).collect();
    let f = k.mul_vec(&x);
    let sol = pinv_solve(&k, &f, None).unwrap();
    assert_eq!(sol.rank, 3);
    let kz = k.mul_vec(&sol.z);
    let res = kz
        .iter()
        .zip(&f)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res <= 1e-10 * fnorm, "{res}");
}

#[test]
fn exact_recovery_for_small_problems() {
    let cfg = ExperimentConfig {
        trials: 100,
        threshold: 1e-10,
        master_seed: 5,
        ..Default::default()
    };
    let cells: Vec<Cell> = [(2, 3), (3, 2), (4, 2)]
        .iter()
        .map(|&(d, q)| {
            let beta = ProblemParams::new(d, q).unwrap().beta() as f64;
            let s = (4.0 * beta * beta.ln().ceil()) as usize;
            Cell { d, q, s }
        })
        .collect();
    for r in run_cells(&cfg, &cells).unwrap() {
        assert!(r.successes >= 95, "{r:?}");
    }
}

#[test]
fn fails_below_the_dimension() {
    let cfg = ExperimentConfig {
        trials: 100,
        threshold: 1e-10,
        master_seed: 6,
        ..Default::default()
    };
    let cells = [Cell { d: 3, q: 2, s: 8 }, Cell { d: 4, q: 2, s: 13 }];
    for r in run_cells(&cfg, &cells).unwrap() {
        assert!(r.successes <= 5, "{r:?}");
    }
}

#[test]
fn linear_in_the_data() {
    let params = ProblemParams::new(3, 5).unwrap();
    let f = make_bandlimited(&params, 1);
    let g = make_bandlimited(&params, 2);
    let (s, seed) = (150, 9);
    let mf = fit(|w| f.eval(w), &params, s, seed).unwrap();
    let mg = fit(|w| g.eval(w), &params, s, seed).unwrap();
    let mh = fit(|w| 2.5 * f.eval(w) - 0.75 * g.eval(w), &params, s, seed).unwrap();
    let m10 = fit(|w| 10.0 * f.eval(w), &params, s, seed).unwrap();
    let pts = sample_uniform_sphere(3, 100, 10).unwrap();
    for p in pts.iter() {
        let (yf, yg) = (mf.evaluate(p).unwrap(), mg.evaluate(p).unwrap());
        assert!((mh.evaluate(p).unwrap() - (2.5 * yf - 0.75 * yg)).abs() <= 1e-10);
        assert!((m10.evaluate(p).unwrap() - 10.0 * yf).abs() <= 1e-10 * 10.0);
    }
}

#[test]
fn projection_is_idempotent() {
    let params = ProblemParams::new(3, 6).unwrap();
    let f = make_bandlimited(&params, 31);
    let first = fit(|w| f.eval(w), &params, 300, 32).unwrap();
    let second = fit(|w| first.evaluate(w).unwrap(), &params, 300, 33).unwrap();
    let pts = sample_uniform_sphere(3, 100, 34).unwrap();
    for p in pts.iter() {
        assert!((first.evaluate(p).unwrap() - second.evaluate(p).unwrap()).abs() <= 1e-8);
    }
}

#[test]
fn non_bandlimited_input_is_projected() {
    // |x| is not a polynomial; the degree-q fit must still be stable and
    // reproducible from the seed
    let params = ProblemParams::new(3, 4).unwrap();
    let (a, ra) = fit_with_report(|w| w[0].abs(), &params, 200, 1, FitOptions::default()).unwrap();
    let (b, rb) = fit_with_report(|w| w[0].abs(), &params, 200, 1, FitOptions::default()).unwrap();
    assert_eq!(serialize_model(&a), serialize_model(&b));
    assert_eq!(ra.rank, rb.rank);
    assert_eq!(ra.rank, params.beta() as usize);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn model_round_trip(d in 2usize..=6, q in 0usize..=5, s in 1usize..=40, seed in any::<u64>()) {
        let params = ProblemParams::new(d, q).unwrap();
        let f = make_bandlimited(&params, seed);
        let m = fit(|w| f.eval(w), &params, s, seed).unwrap();
        let bytes = serialize_model(&m);
        let back = deserialize_model(&bytes).unwrap();
        prop_assert_eq!(back.points().coords(), m.points().coords());
        prop_assert_eq!(back.weights(), m.weights());
        prop_assert_eq!(serialize_model(&back), bytes);
        let p = m.points().point(0);
        prop_assert_eq!(back.evaluate(p).unwrap().to_bits(), m.evaluate(p).unwrap().to_bits());
    }
}
