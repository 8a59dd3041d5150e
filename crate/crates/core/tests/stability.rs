use toa_core::model::{builtin_folded, builtin_spiral, synthesize_toa, SensorArray, Trajectory};
use toa_core::solver::{reconstruct_trajectory, Method};
use toa_core::stability::{perturb_toa, stability_experiment, NoiseModel, NoiseSpec, StabilityReport};

const SMALL_LEVELS: [f64; 4] = [1e-7, 1e-6, 1e-5, 1e-4];

fn run(truth: &Trajectory, levels: &[f64], model: NoiseModel, seed: u64) -> StabilityReport {
    stability_experiment(
        truth,
        &SensorArray::standard_seven(),
        1.0,
        levels,
        &NoiseSpec::new(0.0, model, seed).unwrap(),
        Method::SevenPoint,
    )
    .unwrap()
}

#[test]
fn repeated_runs_are_identical() {
    let levels = [1e-6, 1e-5, 1e-4, 1e-3];
    let a = run(&builtin_spiral(), &levels, NoiseModel::RelativeUniform, 99);
    let b = run(&builtin_spiral(), &levels, NoiseModel::RelativeUniform, 99);
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());

    let c = run(&builtin_spiral(), &levels, NoiseModel::RelativeUniform, 100);
    assert_ne!(a.to_csv(), c.to_csv());
}

#[test]
fn halving_noise_halves_median_error() {
    let truth = builtin_spiral();
    let sensors = SensorArray::standard_seven();
    let toa = synthesize_toa(&truth, &sensors, 1.0).unwrap();
    let median = |level: f64, seed: u64| {
        let noisy = perturb_toa(&toa, &NoiseSpec::relative_uniform(level, seed).unwrap());
        reconstruct_trajectory(&noisy, &sensors, Method::SevenPoint, Some(&truth))
            .unwrap()
            .median_position_error()
            .unwrap()
    };
    for seed in [1, 2, 3] {
        for level in SMALL_LEVELS {
            let ratio = median(level, seed) / median(level / 2.0, seed);
            assert!(
                (2.0 / 1.5..=2.0 * 1.5).contains(&ratio),
                "seed {seed} level {level:e}: ratio {ratio}"
            );
        }
    }
}

#[test]
fn bound_denominators_positive_at_small_noise() {
    for model in [NoiseModel::RelativeUniform, NoiseModel::RelativeGaussian] {
        for truth in [builtin_spiral(), builtin_folded()] {
            let report = run(&truth, &SMALL_LEVELS, model, 5);
            assert!(report.failures.is_empty());
            assert_eq!(report.points.len(), SMALL_LEVELS.len() * truth.len());
            let invalid: Vec<_> = report
                .points
                .iter()
                .filter(|p| !p.bound.is_valid())
                .map(|p| (p.level, p.event + 1, p.bound))
                .collect();
            assert!(invalid.is_empty(), "{model}: invalid bounds {invalid:?}");
        }
    }
}

#[test]
fn errors_never_exceed_bound() {
    for seed in 0..4 {
        for truth in [builtin_spiral(), builtin_folded()] {
            let report = run(&truth, &[1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2], NoiseModel::RelativeUniform, seed);
            assert!(report.bound_violations().is_empty(), "seed {seed}");
            for p in &report.points {
                if let Some(b) = p.bound.value() {
                    assert!(p.error_norm <= b);
                }
            }
        }
    }
}

#[test]
fn slope_is_one_for_each_noise_model() {
    let levels = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3];
    for model in [NoiseModel::RelativeUniform, NoiseModel::RelativeGaussian, NoiseModel::AbsoluteUniform] {
        let report = run(&builtin_spiral(), &levels, model, 11);
        assert!((0.9..=1.1).contains(&report.fitted_slope), "{model}: {}", report.fitted_slope);
    }
}

#[test]
fn csv_and_json_share_rows() {
    let report = run(&builtin_folded(), &[1e-6, 1e-5, 1e-4], NoiseModel::RelativeUniform, 3);
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delta,j,perturb_norm,err_norm,bound,valid"));
    let rows = lines.clone().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, report.points.len());
    assert!(csv.lines().last().unwrap().starts_with("# slope="));

    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["points"].as_array().unwrap().len(), rows);
    assert_eq!(json["points"][0]["j"], 1);
    let slope = json["slope"].as_f64().unwrap();
    assert!((slope - report.fitted_slope).abs() <= 1e-15 * report.fitted_slope.abs());
}

#[test]
fn rejects_bad_level_sets() {
    let truth = builtin_spiral();
    let sensors = SensorArray::standard_seven();
    let template = NoiseSpec::relative_uniform(0.0, 1).unwrap();
    for levels in [&[1e-3][..], &[1e-3, 1e-3, 1e-3], &[0.0, 0.0, 0.0], &[1e-5, 1e-4, -1e-3]] {
        assert!(stability_experiment(&truth, &sensors, 1.0, levels, &template, Method::SevenPoint).is_err());
    }
    assert!(stability_experiment(&truth, &sensors, 1.0, &SMALL_LEVELS, &template, Method::Oracle).is_err());
}
