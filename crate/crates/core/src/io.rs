//! File formats.
//!
//! - Trajectory CSV: header `t,x,y,z`, one row per emission.
//! - TOA CSV: either sparse `j,k,T` rows with 1-based indices, or a dense
//!   matrix under a `T_1,...,T_K` header. The dense form is what gets written.
//! - Sensor layout: `key = value` lines with `wave_speed`, `layout_kind`,
//!   optional `validation_tolerance`, and one `sensor = x y z` line per sensor
//!   in index order. `#` starts a comment. Unknown keys are handed back to the
//!   caller so larger configuration files can embed a layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::model::{EmissionEvent, LayoutKind, SensorArray, ToaMatrix, Trajectory};
use crate::{Error, Result, Vec3};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(line: usize, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, field, format!("`{}` is not a number", raw.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, field, "value is not finite"));
    }
    Ok(v)
}

fn parse_index(line: usize, field: &str, raw: &str) -> Result<usize> {
    let v: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, field, format!("`{}` is not a positive integer", raw.trim())))?;
    if v == 0 {
        return Err(Error::parse(line, field, "indices are 1-based"));
    }
    Ok(v)
}

fn split_fields(line: usize, raw: &str, expected: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(Error::parse(
            line,
            "row",
            format!("expected {expected} fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut lines = data_lines(text);
    let (line, header) = lines.next().ok_or_else(|| Error::parse(1, "header", "empty file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns != ["t", "x", "y", "z"] {
        return Err(Error::parse(line, "header", format!("expected `t,x,y,z`, found `{header}`")));
    }
    let mut events = Vec::new();
    for (line, raw) in lines {
        let f = split_fields(line, raw, 4)?;
        let t = parse_f64(line, "t", f[0])?;
        let position = Vec3::new(
            parse_f64(line, "x", f[1])?,
            parse_f64(line, "y", f[2])?,
            parse_f64(line, "z", f[3])?,
        );
        events.push(EmissionEvent::new(t, position));
    }
    if events.is_empty() {
        return Err(Error::parse(line + 1, "row", "no events"));
    }
    Trajectory::new(events)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory_csv(&read(path)?)
}

pub fn trajectory_to_csv(trajectory: &Trajectory) -> String {
    let mut out = String::from("t,x,y,z\n");
    for e in trajectory.events() {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.position.x, e.position.y, e.position.z);
    }
    out
}

/// Parses either TOA form; the wave speed is supplied by the caller since the
/// file does not carry it.
pub fn parse_toa_csv(text: &str, wave_speed: f64) -> Result<ToaMatrix> {
    let mut lines = data_lines(text).peekable();
    let (line, header) = lines.next().ok_or_else(|| Error::parse(1, "header", "empty file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();

    if columns == ["j", "k", "T"] {
        let mut entries = Vec::new();
        for (line, raw) in lines {
            let f = split_fields(line, raw, 3)?;
            entries.push((
                line,
                parse_index(line, "j", f[0])?,
                parse_index(line, "k", f[1])?,
                parse_f64(line, "T", f[2])?,
            ));
        }
        let rows = entries.iter().map(|e| e.1).max().unwrap_or(0);
        let cols = entries.iter().map(|e| e.2).max().unwrap_or(0);
        if entries.is_empty() {
            return Err(Error::parse(line + 1, "row", "no arrival times"));
        }
        let mut grid = vec![vec![None; cols]; rows];
        for (line, j, k, t) in entries {
            if grid[j - 1][k - 1].replace(t).is_some() {
                return Err(Error::parse(line, "j,k", format!("duplicate entry ({j},{k})")));
            }
        }
        let dense = grid
            .into_iter()
            .enumerate()
            .map(|(j, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(k, v)| {
                        v.ok_or_else(|| {
                            Error::InvariantViolation(format!("missing arrival time for j={}, k={}", j + 1, k + 1))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        return ToaMatrix::new(dense, wave_speed);
    }

    for (i, name) in columns.iter().enumerate() {
        if *name != format!("T_{}", i + 1) {
            return Err(Error::parse(
                line,
                "header",
                format!("expected `j,k,T` or `T_1,...,T_K`, found `{header}`"),
            ));
        }
    }
    let mut rows = Vec::new();
    for (line, raw) in lines {
        let f = split_fields(line, raw, columns.len())?;
        rows.push(
            f.iter()
                .zip(&columns)
                .map(|(v, name)| parse_f64(line, name, v))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::parse(line + 1, "row", "no arrival times"));
    }
    ToaMatrix::new(rows, wave_speed)
}

pub fn load_toa(path: &Path, wave_speed: f64) -> Result<ToaMatrix> {
    parse_toa_csv(&read(path)?, wave_speed)
}

/// Dense form.
pub fn toa_to_csv(toa: &ToaMatrix) -> String {
    let header: Vec<String> = (1..=toa.sensors()).map(|k| format!("T_{k}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in toa.rows() {
        let fields: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// A `key = value` line not consumed by the layout parser.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutFile {
    pub sensors: SensorArray,
    pub wave_speed: f64,
    pub extra: Vec<Entry>,
}

/// Parses a sensor layout. Missing `wave_speed` defaults to 1 and missing
/// `layout_kind` to `Custom`.
pub fn parse_layout(text: &str) -> Result<LayoutFile> {
    let mut positions = Vec::new();
    let mut wave_speed = None;
    let mut kind = None;
    let mut tolerance = None;
    let mut extra = Vec::new();

    for (line, raw) in data_lines(text) {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| Error::parse(line, "line", format!("expected `key = value`, found `{raw}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "sensor" => {
                let coords: Vec<&str> = value.split_whitespace().collect();
                if coords.len() != 3 {
                    return Err(Error::parse(line, "sensor", format!("expected 3 coordinates, found {}", coords.len())));
                }
                positions.push(Vec3::new(
                    parse_f64(line, "sensor.x", coords[0])?,
                    parse_f64(line, "sensor.y", coords[1])?,
                    parse_f64(line, "sensor.z", coords[2])?,
                ));
            }
            "wave_speed" => {
                let c = parse_f64(line, key, value)?;
                if c <= 0.0 {
                    return Err(Error::parse(line, key, "wave speed must be positive"));
                }
                wave_speed = Some(c);
            }
            "layout_kind" => {
                kind = Some(value.parse::<LayoutKind>().map_err(|e| Error::parse(line, key, e.to_string()))?);
            }
            "validation_tolerance" => {
                let tol = parse_f64(line, key, value)?;
                if tol < 0.0 {
                    return Err(Error::parse(line, key, "tolerance must be non-negative"));
                }
                tolerance = Some(tol);
            }
            _ => extra.push(Entry {
                line,
                key: key.to_string(),
                value: value.to_string(),
            }),
        }
    }
    if positions.is_empty() {
        return Err(Error::parse(1, "sensor", "no `sensor = x y z` lines"));
    }
    let mut sensors = SensorArray::new(positions, kind.unwrap_or(LayoutKind::Custom))?;
    if let Some(tol) = tolerance {
        sensors = sensors.with_tolerance(tol);
    }
    Ok(LayoutFile {
        sensors,
        wave_speed: wave_speed.unwrap_or(1.0),
        extra,
    })
}

pub fn load_layout(path: &Path) -> Result<LayoutFile> {
    parse_layout(&read(path)?)
}

pub fn layout_to_text(sensors: &SensorArray, wave_speed: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "wave_speed = {wave_speed}");
    let _ = writeln!(out, "layout_kind = {}", sensors.layout_kind());
    let _ = writeln!(out, "validation_tolerance = {:e}", sensors.validation_tolerance());
    for p in sensors.positions() {
        let _ = writeln!(out, "sensor = {} {} {}", p.x, p.y, p.z);
    }
    out
}
