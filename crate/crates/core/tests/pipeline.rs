use tofu::analysis::{eta, fit_distance, truncation_check, FitOptions, Quadrature, Thresholds, Tier, ETA_FLOOR};
use tofu::config::RunConfig;
use tofu::sequence::{run_dephasing_series, Experiment, Layout, RunOptions};
use tofu::spinsys::GAMMA_13C;

const CONFIG: &str = r#"
s_spin = "S"
spinning_hz = 20000.0

[[spin]]
label = "S"
shift_hz = 6000.0

[[spin]]
label = "I"
shift_hz = -6000.0

[[dipolar]]
spins = ["I", "S"]
distance_a = 2.0

[experiment]
n_list = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]

[powder]
scheme = "zcw"
n_ab = 89
n_gamma = 4
"#;

#[test]
fn config_to_distance() {
    let cfg = RunConfig::parse(CONFIG).unwrap();
    let sys = cfg.spin_system::<f64>().unwrap();
    let powder = cfg.orientations::<f64>(None).unwrap();
    let params = cfg.experiment_params(&sys, None).unwrap();
    let diag = truncation_check(&sys, &params.tofu, &powder, Thresholds::default());
    assert_eq!(diag.worst(), Tier::Pass);

    let exp = Experiment::new(params, &sys).unwrap();
    let opts = RunOptions { resolution: cfg.resolution().unwrap(), ..RunOptions::default() };
    let curves =
        run_dephasing_series(&sys, &exp, &powder, &cfg.experiment.n_list, &[Layout::Main, Layout::Reference], &opts)
            .unwrap();
    assert_eq!(curves[0].labels, ["I"]);
    let e = eta(curves[1].signal(1).unwrap(), curves[0].signal(1).unwrap(), ETA_FLOOR).unwrap();
    assert!(e.iter().all(Option::is_some));
    let fit =
        fit_distance(&e, &curves[0].t_values, (GAMMA_13C, GAMMA_13C), &Quadrature::default(), FitOptions::default())
            .unwrap();
    assert!((fit.r - 2.0).abs() < 0.1, "fitted {} Å", fit.r);
    assert!(!fit.no_coupling);
}

#[test]
fn single_precision_pipeline_tracks_double() {
    let cfg = RunConfig::parse(CONFIG).unwrap();
    let run = |n: &[usize]| -> (Vec<f64>, Vec<f32>) {
        let s64 = cfg.spin_system::<f64>().unwrap();
        let s32 = cfg.spin_system::<f32>().unwrap();
        let p64 = tofu::powder::OrientationSet::<f64>::single_degrees(10.0, 60.0, 30.0);
        let p32 = tofu::powder::OrientationSet::<f32>::single_degrees(10.0, 60.0, 30.0);
        let e64 = Experiment::new(cfg.experiment_params(&s64, None).unwrap(), &s64).unwrap();
        let e32 = Experiment::new(cfg.experiment_params(&s32, None).unwrap(), &s32).unwrap();
        let a = run_dephasing_series(&s64, &e64, &p64, n, &[Layout::Main], &RunOptions::default()).unwrap();
        let b = run_dephasing_series(&s32, &e32, &p32, n, &[Layout::Main], &RunOptions::default()).unwrap();
        (a[0].signals[0].clone(), b[0].signals[0].clone())
    };
    let (d, f) = run(&[1, 3]);
    for (x, y) in d.iter().zip(&f) {
        assert!((x - *y as f64).abs() < 1e-3, "{x} vs {y}");
    }
}
