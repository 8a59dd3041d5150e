//! Scenario files: a sensor layout plus run settings, one `key = value` per
//! line. Keys the layout parser does not know are handled here.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use toa_core::io::{layout_to_text, load_trajectory, parse_layout};
use toa_core::model::{builtin_folded, builtin_spiral, SensorArray, Trajectory};
use toa_core::solver::Method;
use toa_core::stability::{NoiseModel, NoiseSpec};
use toa_core::Error;

use crate::failure::Failure;

pub const DEFAULT_LEVELS: [f64; 5] = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3];
pub const DEFAULT_OUTPUT: &str = "toa_run";

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySource {
    BuiltinSpiral,
    BuiltinFolded,
    FromFile(PathBuf),
}

impl TrajectorySource {
    pub fn load(&self) -> Result<Trajectory, Failure> {
        match self {
            TrajectorySource::BuiltinSpiral => Ok(builtin_spiral()),
            TrajectorySource::BuiltinFolded => Ok(builtin_folded()),
            TrajectorySource::FromFile(path) => Ok(load_trajectory(path)?),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub sensors: SensorArray,
    pub wave_speed: f64,
    pub trajectory: TrajectorySource,
    /// Absent or zero-level noise means clean synthetic data.
    pub noise: Option<NoiseSpec>,
    pub noise_model: NoiseModel,
    pub seed: u64,
    pub method: Method,
    pub levels: Vec<f64>,
    pub output: String,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            sensors: SensorArray::standard_seven(),
            wave_speed: 1.0,
            trajectory: TrajectorySource::BuiltinSpiral,
            noise: None,
            noise_model: NoiseModel::RelativeUniform,
            seed: 0,
            method: Method::SevenPoint,
            levels: DEFAULT_LEVELS.to_vec(),
            output: DEFAULT_OUTPUT.to_string(),
        }
    }
}

fn parse_levels(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad level `{}`: {e}", s.trim())))
        .collect()
}

impl Scenario {
    /// Parses scenario text. Relative trajectory paths resolve against `base`.
    /// Without any `sensor` line the seven-point axes layout is used.
    pub fn parse(text: &str, base: &Path) -> Result<Self, Failure> {
        let has_sensors = text
            .lines()
            .any(|l| l.split_once('=').is_some_and(|(k, _)| k.trim() == "sensor"));
        let full = if has_sensors {
            text.to_string()
        } else {
            let defaults = Scenario::default();
            let layout = layout_to_text(&defaults.sensors, defaults.wave_speed);
            // Defaults first, so later user lines override scalar keys.
            let layout: String = layout.lines().filter(|l| l.starts_with("sensor")).map(|l| format!("{l}\n")).collect();
            format!("layout_kind = seven_point_axes\n{layout}{text}")
        };
        let layout = parse_layout(&full)?;
        let offset = if has_sensors { 0 } else { 1 + Scenario::default().sensors.len() };

        let mut scenario = Scenario {
            sensors: layout.sensors,
            wave_speed: layout.wave_speed,
            ..Scenario::default()
        };
        let mut noise_level = None;
        for entry in layout.extra {
            let line = entry.line - offset;
            let bad = |msg: String| Failure::from(Error::Parse {
                line,
                field: entry.key.clone(),
                message: msg,
            });
            let value = entry.value.as_str();
            match entry.key.as_str() {
                "trajectory" => {
                    scenario.trajectory = match value {
                        "spiral" => TrajectorySource::BuiltinSpiral,
                        "folded" => TrajectorySource::BuiltinFolded,
                        path => TrajectorySource::FromFile(base.join(path)),
                    }
                }
                "method" => scenario.method = value.parse().map_err(|e: toa_core::Error| bad(e.to_string()))?,
                "noise_level" => {
                    noise_level = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?);
                }
                "noise_model" => {
                    scenario.noise_model = value.parse().map_err(|e: toa_core::Error| bad(e.to_string()))?
                }
                "seed" => scenario.seed = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "levels" => scenario.levels = parse_levels(value).map_err(bad)?,
                "output" => scenario.output = value.to_string(),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if let Some(level) = noise_level {
            scenario.noise = Some(NoiseSpec::new(level, scenario.noise_model, scenario.seed)?);
        }
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Keeps the seed of an existing noise spec in step with `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(noise) = &mut self.noise {
            noise.seed = seed;
        }
    }

    pub fn noise_template(&self) -> NoiseSpec {
        NoiseSpec {
            level: 0.0,
            model: self.noise_model,
            seed: self.seed,
        }
    }
}

/// Default scenario written out with every key documented.
pub fn defaults_text() -> String {
    let d = Scenario::default();
    let mut out = String::new();
    let _ = writeln!(out, "# Scenario defaults. Every key is optional; later lines override earlier ones.");
    let _ = writeln!(out, "# Without any `sensor` line the seven-point axes layout below is used.");
    let _ = writeln!(out, "# layout_kind: five_point_generic | seven_point_axes | custom");
    let _ = writeln!(out, "# validation_tolerance: relative tolerance of the geometry checks");
    out.push_str(&layout_to_text(&d.sensors, d.wave_speed));
    let _ = writeln!(out, "# trajectory: spiral | folded | path to a t,x,y,z CSV");
    let _ = writeln!(out, "trajectory = spiral");
    let _ = writeln!(out, "# method: five | seven | oracle");
    let _ = writeln!(out, "method = {}", d.method);
    let _ = writeln!(out, "# noise_level: relative level applied by `simulate`; 0 or absent means clean data");
    let _ = writeln!(out, "noise_level = 0");
    let _ = writeln!(out, "# noise_model: relative_uniform | relative_gaussian | absolute_uniform");
    let _ = writeln!(out, "noise_model = {}", d.noise_model);
    let _ = writeln!(out, "seed = {}", d.seed);
    let _ = writeln!(out, "# levels: comma list used by `stability`, at least 3 distinct positive values");
    let levels: Vec<String> = d.levels.iter().map(|l| format!("{l:e}")).collect();
    let _ = writeln!(out, "levels = {}", levels.join(","));
    let _ = writeln!(out, "# output: prefix of every file written");
    let _ = writeln!(out, "output = {}", d.output);
    out
}
