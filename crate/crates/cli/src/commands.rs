use std::path::{Path, PathBuf};

use toa_core::io::{load_toa, load_trajectory, toa_to_csv, trajectory_to_csv, write_file};
use toa_core::model::{check_arrival_ordering, synthesize_toa, validate_sensor_geometry, LayoutKind, SensorArray};
use toa_core::solver::{reconstruct_trajectory, Method};
use toa_core::stability::{perturb_toa, stability_experiment};

use crate::failure::{Failure, EXIT_NUMERICAL, EXIT_VALIDATION};
use crate::scenario::Scenario;

fn output_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_{suffix}"))
}

/// Rejects method/layout pairs that cannot work before any file is touched.
pub fn check_method(sensors: &SensorArray, method: Method) -> Result<(), Failure> {
    match method {
        Method::SevenPoint => {
            if sensors.len() != 7 {
                return Err(Failure::config(format!(
                    "method seven needs 7 sensors, the layout has {}",
                    sensors.len()
                )));
            }
            if sensors.layout_kind() != LayoutKind::SevenPointAxes {
                return Err(Failure::config(format!(
                    "method seven needs layout_kind = seven_point_axes, found {}",
                    sensors.layout_kind()
                )));
            }
            let report = validate_sensor_geometry(sensors);
            if !report.is_valid() {
                return Err(Failure::config(format!("layout fails the seven-point checks:\n{report}")));
            }
        }
        Method::FivePoint | Method::Oracle => {
            if sensors.len() < 5 {
                return Err(Failure::config(format!(
                    "method {method} needs at least 5 sensors, the layout has {}",
                    sensors.len()
                )));
            }
        }
    }
    Ok(())
}

pub fn simulate(scenario: &Scenario) -> Result<(), Failure> {
    check_method(&scenario.sensors, scenario.method)?;
    let truth = scenario.trajectory.load()?;
    let mut toa = synthesize_toa(&truth, &scenario.sensors, scenario.wave_speed)?;
    if let Some(noise) = &scenario.noise {
        toa = perturb_toa(&toa, noise);
    }
    let ordering = check_arrival_ordering(&toa);
    let toa_path = output_path(&scenario.output, "toa.csv");
    let truth_path = output_path(&scenario.output, "truth.csv");
    write_file(&toa_path, &toa_to_csv(&toa))?;
    write_file(&truth_path, &trajectory_to_csv(&truth))?;
    println!(
        "wrote {} ({}x{}) and {}",
        toa_path.display(),
        toa.events(),
        toa.sensors(),
        truth_path.display()
    );
    if !ordering.all_ordered {
        println!("note: arrival times are not increasing in every column");
    }
    Ok(())
}

pub fn reconstruct(scenario: &Scenario, toa: &Path, truth: Option<&Path>) -> Result<(), Failure> {
    check_method(&scenario.sensors, scenario.method)?;
    let toa = load_toa(toa, scenario.wave_speed)?;
    let truth = truth.map(load_trajectory).transpose()?;
    let result = reconstruct_trajectory(&toa, &scenario.sensors, scenario.method, truth.as_ref())?;
    let path = output_path(&scenario.output, "reconstruction.csv");
    write_file(&path, &result.to_csv())?;
    println!(
        "wrote {}: {} of {} events solved with method {}",
        path.display(),
        result.estimates.len(),
        toa.events(),
        scenario.method
    );
    if let (Some(pos), Some(time), Some(median)) = (
        result.max_position_error(),
        result.max_time_error(),
        result.median_position_error(),
    ) {
        println!("max position error {pos:e}, median {median:e}, max time error {time:e}");
    }
    if !result.failures.is_empty() {
        for (j, err) in &result.failures {
            eprintln!("event {}: {err}", j + 1);
        }
        return Err(Failure::new(
            EXIT_NUMERICAL,
            format!("{} events failed to solve", result.failures.len()),
        ));
    }
    Ok(())
}

pub fn stability(scenario: &Scenario) -> Result<(), Failure> {
    check_method(&scenario.sensors, scenario.method)?;
    let truth = scenario.trajectory.load()?;
    let report = stability_experiment(
        &truth,
        &scenario.sensors,
        scenario.wave_speed,
        &scenario.levels,
        &scenario.noise_template(),
        scenario.method,
    )?;
    let csv = output_path(&scenario.output, "stability.csv");
    let json = output_path(&scenario.output, "stability.json");
    write_file(&csv, &report.to_csv())?;
    write_file(&json, &report.to_json())?;
    println!("wrote {} and {}", csv.display(), json.display());
    println!(
        "slope = {:.6} intercept = {:.6} ({} points, {} excluded, {} failed, {} bound violations)",
        report.fitted_slope,
        report.fitted_intercept,
        report.points.len(),
        report.excluded_from_fit,
        report.failures.len(),
        report.bound_violations().len()
    );
    Ok(())
}

pub fn validate(scenario: &Scenario) -> Result<(), Failure> {
    let report = validate_sensor_geometry(&scenario.sensors);
    print!("{report}");
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_VALIDATION,
            format!("{} constraint(s) violated", report.violations.len()),
        ))
    }
}
