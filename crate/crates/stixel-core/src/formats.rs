//! Canonical on-disk formats.
//!
//! Every document is line-oriented UTF-8 text with a versioned first line
//! (`stixel-scan v1`, `stixel-world v1`, ...). Blank lines and lines
//! starting with `#` are ignored. Floats are written with Rust's shortest
//! round-trip formatting, so write→read is lossless; sentinel tokens are
//! `inv` (no return), `inf` (sky distance), `absent` (no distribution) and
//! `unlabeled` (no reference label). Parse errors carry 1-based line
//! numbers.
//!
//! The scan document carries the three class sets and the two semantic
//! projection maps, since the maps are tied to the sets; the parameter
//! document carries scalars only.
//!
//! Rendering emits binary portable pixmaps (P6), one pixel block per
//! (column, row), rows top of the scan first.

use crate::metrics::{EvalReport, OutlierDenominator, PointLabels};
use crate::model::{
    ClassMap, ClassSet, ClassSets, Distance, Measurement, ModelParams, PolarDepth, Scan,
    ScanColumn, SemanticDistribution, Stixel, StixelColumn, StixelWorld, StructuralClass,
};
use crate::prior::consistency_check;
use crate::scalar::{cast, Scalar};
use crate::synthetic::{BoxObstacle, GridBand, SceneSpec};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("image: {0}")]
    Render(String),
}

fn perr(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

// ---------------------------------------------------------------------------
// Low-level reading machinery.

/// Line cursor that skips blanks and comments and tracks line numbers.
struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    peeked: Option<(usize, &'a str)>,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { lines: text.lines().enumerate(), peeked: None }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        if let Some(p) = self.peeked.take() {
            return Some(p);
        }
        for (i, raw) in self.lines.by_ref() {
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            return Some((i + 1, s));
        }
        None
    }

    fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.next();
        }
        self.peeked
    }

    fn expect(&mut self) -> Result<(usize, &'a str), FormatError> {
        self.next().ok_or_else(|| perr(0, "unexpected end of document"))
    }

    /// Next line, which must start with `key` followed by whitespace (or
    /// be exactly `key`); returns the remainder.
    fn expect_key(&mut self, key: &str) -> Result<(usize, &'a str), FormatError> {
        let (line, s) = self.expect()?;
        if s == key {
            return Ok((line, ""));
        }
        match s.strip_prefix(key) {
            Some(rest) if rest.starts_with(char::is_whitespace) => Ok((line, rest.trim_start())),
            _ => Err(perr(line, format!("expected '{key} ...', found '{s}'"))),
        }
    }

    fn expect_end(&mut self) -> Result<(), FormatError> {
        match self.next() {
            None => Ok(()),
            Some((line, s)) => Err(perr(line, format!("expected end of document, found '{s}'"))),
        }
    }
}

fn check_version(cursor: &mut Cursor, expected: &str) -> Result<(), FormatError> {
    let (line, s) = cursor.expect()?;
    if s != expected {
        return Err(perr(line, format!("expected header '{expected}', found '{s}'")));
    }
    Ok(())
}

fn parse_scalar<T: Scalar>(line: usize, tok: &str) -> Result<T, FormatError> {
    tok.parse::<f64>()
        .map(cast::<T>)
        .map_err(|_| perr(line, format!("expected a number, found '{tok}'")))
}

fn parse_usize(line: usize, tok: &str) -> Result<usize, FormatError> {
    tok.parse::<usize>()
        .map_err(|_| perr(line, format!("expected a non-negative integer, found '{tok}'")))
}

fn parse_probs<T: Scalar>(line: usize, tok: &str) -> Result<Vec<T>, FormatError> {
    tok.split(',').map(|t| parse_scalar::<T>(line, t.trim())).collect()
}

fn probs_string<T: Scalar>(probs: &[T]) -> String {
    probs.iter().map(|p| format!("{p}")).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------------------
// Class sets and maps.

fn class_set_string(set: &ClassSet) -> String {
    (0..set.len())
        .map(|i| format!("{}:{}", set.name(i), set.structural_of(i).name()))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_class_set(line: usize, tok: &str) -> Result<ClassSet, FormatError> {
    let mut entries = Vec::new();
    for entry in tok.split(',') {
        let (name, class) = entry
            .split_once(':')
            .ok_or_else(|| perr(line, format!("expected 'name:class', found '{entry}'")))?;
        let sclass = StructuralClass::from_name(class.trim())
            .ok_or_else(|| perr(line, format!("unknown structural class '{class}'")))?;
        entries.push((name.trim().to_string(), sclass));
    }
    ClassSet::new(entries).map_err(|e| perr(line, e.to_string()))
}

fn write_class_map<T: Scalar>(out: &mut String, which: &str, map: &ClassMap<T>) {
    match map {
        ClassMap::Identity => {
            let _ = writeln!(out, "map {which} identity");
        }
        ClassMap::Matrix(rows) => {
            let cols = rows.first().map_or(0, Vec::len);
            let _ = writeln!(out, "map {which} matrix {} {}", rows.len(), cols);
            for row in rows {
                let _ = writeln!(out, "{}", probs_string(row));
            }
        }
    }
}

fn parse_class_map<T: Scalar>(
    cursor: &mut Cursor,
    which: &str,
) -> Result<ClassMap<T>, FormatError> {
    let (line, rest) = cursor.expect_key("map")?;
    let mut toks = rest.split_whitespace();
    let got = toks.next().unwrap_or("");
    if got != which {
        return Err(perr(line, format!("expected 'map {which} ...', found 'map {got} ...'")));
    }
    match toks.next() {
        Some("identity") => Ok(ClassMap::Identity),
        Some("matrix") => {
            let r = parse_usize(line, toks.next().unwrap_or(""))?;
            let c = parse_usize(line, toks.next().unwrap_or(""))?;
            let mut rows = Vec::with_capacity(r);
            for _ in 0..r {
                let (rline, s) = cursor.expect()?;
                let row = parse_probs::<T>(rline, s)?;
                if row.len() != c {
                    return Err(perr(rline, format!("expected {c} entries, found {}", row.len())));
                }
                rows.push(row);
            }
            Ok(ClassMap::Matrix(rows))
        }
        other => Err(perr(line, format!("expected 'identity' or 'matrix', found '{other:?}'"))),
    }
}

// ---------------------------------------------------------------------------
// Scan documents.

const SCAN_HEADER: &str = "stixel-scan v1";

/// A scan plus the semantic projection maps that belong to its class sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanDocument<T> {
    pub scan: Scan<T>,
    pub map_lidar: ClassMap<T>,
    pub map_cam: ClassMap<T>,
}

pub fn scan_to_string<T: Scalar>(
    scan: &Scan<T>,
    map_lidar: &ClassMap<T>,
    map_cam: &ClassMap<T>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCAN_HEADER}");
    let _ = writeln!(out, "height {}", scan.height());
    let _ = writeln!(out, "columns {}", scan.columns.len());
    let _ = writeln!(out, "classes lidar {}", class_set_string(&scan.class_sets.lidar));
    let _ = writeln!(out, "classes camera {}", class_set_string(&scan.class_sets.camera));
    let _ = writeln!(out, "classes stixel {}", class_set_string(&scan.class_sets.stixel));
    write_class_map(&mut out, "lidar", map_lidar);
    write_class_map(&mut out, "camera", map_cam);
    for col in &scan.columns {
        let _ = writeln!(out, "column {}", col.azimuth);
        for cell in &col.cells {
            let range = match cell.depth.range {
                Some(r) => format!("{r}"),
                None => "inv".to_string(),
            };
            let lidar = match &cell.lidar_sem {
                Some(d) => probs_string(&d.probs),
                None => "absent".to_string(),
            };
            let cam = match &cell.cam_sem {
                Some(d) => probs_string(&d.probs),
                None => "absent".to_string(),
            };
            let _ = writeln!(out, "{range} {} {lidar} {cam}", cell.depth.elevation);
        }
    }
    out
}

fn parse_classes_line(
    cursor: &mut Cursor,
    which: &str,
) -> Result<ClassSet, FormatError> {
    let (line, rest) = cursor.expect_key("classes")?;
    let (got, spec) = rest
        .split_once(char::is_whitespace)
        .ok_or_else(|| perr(line, "expected 'classes <set> <entries>'"))?;
    if got != which {
        return Err(perr(line, format!("expected 'classes {which} ...', found 'classes {got}'")));
    }
    parse_class_set(line, spec.trim())
}

pub fn parse_scan<T: Scalar>(text: &str) -> Result<ScanDocument<T>, FormatError> {
    let mut cursor = Cursor::new(text);
    check_version(&mut cursor, SCAN_HEADER)?;
    let (hline, h) = cursor.expect_key("height")?;
    let h = parse_usize(hline, h)?;
    let (cline, n) = cursor.expect_key("columns")?;
    let n = parse_usize(cline, n)?;
    let lidar = parse_classes_line(&mut cursor, "lidar")?;
    let camera = parse_classes_line(&mut cursor, "camera")?;
    let stixel = parse_classes_line(&mut cursor, "stixel")?;
    let map_lidar = parse_class_map::<T>(&mut cursor, "lidar")?;
    let map_cam = parse_class_map::<T>(&mut cursor, "camera")?;
    let mut columns = Vec::with_capacity(n);
    for _ in 0..n {
        let (aline, az) = cursor.expect_key("column")?;
        let azimuth = parse_scalar::<T>(aline, az)?;
        let mut cells = Vec::with_capacity(h);
        for _ in 0..h {
            let (line, s) = cursor.expect()?;
            let toks: Vec<&str> = s.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(perr(
                    line,
                    format!("expected 'range elevation lidar cam' (4 fields), found {}", toks.len()),
                ));
            }
            let range = match toks[0] {
                "inv" => None,
                t => Some(parse_scalar::<T>(line, t)?),
            };
            let elevation = parse_scalar::<T>(line, toks[1])?;
            let lidar_sem = match toks[2] {
                "absent" => None,
                t => Some(SemanticDistribution::new(parse_probs::<T>(line, t)?)),
            };
            let cam_sem = match toks[3] {
                "absent" => None,
                t => Some(SemanticDistribution::new(parse_probs::<T>(line, t)?)),
            };
            cells.push(Measurement {
                depth: PolarDepth { range, azimuth, elevation },
                lidar_sem,
                cam_sem,
            });
        }
        columns.push(ScanColumn { azimuth, cells });
    }
    cursor.expect_end()?;
    Ok(ScanDocument {
        scan: Scan { columns, class_sets: ClassSets { lidar, camera, stixel } },
        map_lidar,
        map_cam,
    })
}

pub fn write_scan<T: Scalar>(
    path: impl AsRef<Path>,
    scan: &Scan<T>,
    map_lidar: &ClassMap<T>,
    map_cam: &ClassMap<T>,
) -> Result<(), FormatError> {
    fs::write(path, scan_to_string(scan, map_lidar, map_cam))?;
    Ok(())
}

pub fn read_scan<T: Scalar>(path: impl AsRef<Path>) -> Result<ScanDocument<T>, FormatError> {
    parse_scan(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// World documents.

const WORLD_HEADER: &str = "stixel-world v1";

/// A stixel world whose label indices point into its own `labels` list.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldDocument<T> {
    pub labels: Vec<String>,
    pub world: StixelWorld<T>,
}

impl<T: Scalar> WorldDocument<T> {
    /// Remaps label indices onto another class set by name.
    pub fn resolve(&self, set: &ClassSet) -> Result<StixelWorld<T>, String> {
        let lookup: Vec<usize> = self
            .labels
            .iter()
            .map(|n| set.index_of(n).ok_or_else(|| format!("label '{n}' not in the class set")))
            .collect::<Result<_, _>>()?;
        let mut world = self.world.clone();
        for col in &mut world.columns {
            for s in &mut col.stixels {
                s.label = lookup[s.label];
            }
        }
        Ok(world)
    }
}

pub fn world_to_string<T: Scalar>(world: &StixelWorld<T>, labels: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{WORLD_HEADER}");
    let _ = writeln!(out, "height {}", world.height);
    let _ = writeln!(out, "columns {}", world.columns.len());
    let _ = writeln!(out, "labels {}", labels.join(","));
    for col in &world.columns {
        let _ = writeln!(out, "column {}", col.column);
        for s in &col.stixels {
            let r = match s.distance {
                Distance::Finite(r) => format!("{r}"),
                Distance::Infinite => "inf".to_string(),
            };
            let _ =
                writeln!(out, "{} {} {r} {} {}", s.bottom, s.top, labels[s.label], s.sclass.name());
        }
    }
    out
}

pub fn parse_world<T: Scalar>(text: &str) -> Result<WorldDocument<T>, FormatError> {
    let mut cursor = Cursor::new(text);
    check_version(&mut cursor, WORLD_HEADER)?;
    let (hline, h) = cursor.expect_key("height")?;
    let h = parse_usize(hline, h)?;
    let (cline, n) = cursor.expect_key("columns")?;
    let n = parse_usize(cline, n)?;
    let (lline, names) = cursor.expect_key("labels")?;
    let labels: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
    if labels.iter().any(String::is_empty) {
        return Err(perr(lline, "empty label name"));
    }
    let mut columns = Vec::with_capacity(n);
    for _ in 0..n {
        let (idline, idx) = cursor.expect_key("column")?;
        let column = parse_usize(idline, idx)?;
        let mut stixels: Vec<Stixel<T>> = Vec::new();
        let mut first_line = idline;
        loop {
            match cursor.peek() {
                Some((_, s)) if !s.starts_with("column") => {}
                _ => break,
            }
            let (line, s) = cursor.expect()?;
            first_line = line;
            let toks: Vec<&str> = s.split_whitespace().collect();
            if toks.len() != 5 {
                return Err(perr(
                    line,
                    format!("expected 'bottom top range label class' (5 fields), found {}", toks.len()),
                ));
            }
            let bottom = parse_usize(line, toks[0])?;
            let top = parse_usize(line, toks[1])?;
            let distance = match toks[2] {
                "inf" => Distance::Infinite,
                t => Distance::Finite(parse_scalar::<T>(line, t)?),
            };
            let label_name = toks[3];
            let label = labels
                .iter()
                .position(|l| l == label_name)
                .ok_or_else(|| perr(line, format!("label '{label_name}' not in header")))?;
            let sclass = StructuralClass::from_name(toks[4])
                .ok_or_else(|| perr(line, format!("unknown structural class '{}'", toks[4])))?;
            match (sclass, &distance) {
                (StructuralClass::Sky, Distance::Finite(_)) => {
                    return Err(perr(line, "sky stixels must have distance 'inf'"));
                }
                (StructuralClass::Ground | StructuralClass::Object, Distance::Infinite) => {
                    return Err(perr(line, "only sky stixels may have distance 'inf'"));
                }
                _ => {}
            }
            stixels.push(Stixel { bottom, top, distance, label, sclass });
            if top >= h {
                break;
            }
        }
        let col = StixelColumn { column, stixels };
        consistency_check(&col, h).map_err(|e| perr(first_line, e))?;
        columns.push(col);
    }
    cursor.expect_end()?;
    Ok(WorldDocument { labels, world: StixelWorld { height: h, columns } })
}

pub fn write_world<T: Scalar>(
    path: impl AsRef<Path>,
    world: &StixelWorld<T>,
    labels: &[String],
) -> Result<(), FormatError> {
    fs::write(path, world_to_string(world, labels))?;
    Ok(())
}

pub fn read_world<T: Scalar>(path: impl AsRef<Path>) -> Result<WorldDocument<T>, FormatError> {
    parse_world(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Point-label documents.

const LABELS_HEADER: &str = "stixel-labels v1";

/// Per-point reference labels with their own label names.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelsDocument {
    pub labels: Vec<String>,
    pub points: PointLabels,
}

impl LabelsDocument {
    /// Remaps point label indices onto another class set by name.
    pub fn resolve(&self, set: &ClassSet) -> Result<PointLabels, String> {
        let lookup: Vec<usize> = self
            .labels
            .iter()
            .map(|n| set.index_of(n).ok_or_else(|| format!("label '{n}' not in the class set")))
            .collect::<Result<_, _>>()?;
        let columns = self
            .points
            .columns
            .iter()
            .map(|col| col.iter().map(|p| p.map(|i| lookup[i])).collect())
            .collect();
        Ok(PointLabels { columns })
    }
}

pub fn labels_to_string(points: &PointLabels, labels: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{LABELS_HEADER}");
    let _ = writeln!(out, "height {}", points.height());
    let _ = writeln!(out, "columns {}", points.columns.len());
    let _ = writeln!(out, "labels {}", labels.join(","));
    for (i, col) in points.columns.iter().enumerate() {
        let _ = writeln!(out, "column {i}");
        for p in col {
            match p {
                Some(l) => {
                    let _ = writeln!(out, "{}", labels[*l]);
                }
                None => {
                    let _ = writeln!(out, "unlabeled");
                }
            }
        }
    }
    out
}

pub fn parse_labels(text: &str) -> Result<LabelsDocument, FormatError> {
    let mut cursor = Cursor::new(text);
    check_version(&mut cursor, LABELS_HEADER)?;
    let (hline, h) = cursor.expect_key("height")?;
    let h = parse_usize(hline, h)?;
    let (cline, n) = cursor.expect_key("columns")?;
    let n = parse_usize(cline, n)?;
    let (_, names) = cursor.expect_key("labels")?;
    let labels: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
    let mut columns = Vec::with_capacity(n);
    for _ in 0..n {
        cursor.expect_key("column")?;
        let mut col = Vec::with_capacity(h);
        for _ in 0..h {
            let (line, s) = cursor.expect()?;
            if s == "unlabeled" {
                col.push(None);
            } else {
                let idx = labels
                    .iter()
                    .position(|l| l == s)
                    .ok_or_else(|| perr(line, format!("label '{s}' not in header")))?;
                col.push(Some(idx));
            }
        }
        columns.push(col);
    }
    cursor.expect_end()?;
    Ok(LabelsDocument { labels, points: PointLabels { columns } })
}

pub fn write_labels(
    path: impl AsRef<Path>,
    points: &PointLabels,
    labels: &[String],
) -> Result<(), FormatError> {
    fs::write(path, labels_to_string(points, labels))?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelsDocument, FormatError> {
    parse_labels(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Parameter documents.

const PARAMS_HEADER: &str = "stixel-params v1";

pub fn params_to_string<T: Scalar>(params: &ModelParams<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PARAMS_HEADER}");
    for (k, v) in [
        ("w_geo", params.w_geo),
        ("w_sem_lidar", params.w_sem_lidar),
        ("w_sem_cam", params.w_sem_cam),
        ("mc_cost", params.mc_cost),
        ("sigma_range", params.sigma_range),
        ("sigma_height", params.sigma_height),
        ("outlier_rate", params.outlier_rate),
        ("outlier_range_max", params.outlier_range_max),
        ("grad_steep", params.grad_steep),
        ("grad_shift", params.grad_shift),
        ("sens_scale", params.sens_scale),
        ("sens_shift", params.sens_shift),
        ("sensor_height", params.sensor_height),
    ] {
        let _ = writeln!(out, "{k} {v}");
    }
    out
}

/// Reads a parameter document. Keys may appear in any order; omitted keys
/// keep their defaults, so partial override files compose with flags.
/// Range validation is the caller's job (after any further overrides).
pub fn parse_params<T: Scalar>(text: &str) -> Result<ModelParams<T>, FormatError> {
    let mut cursor = Cursor::new(text);
    check_version(&mut cursor, PARAMS_HEADER)?;
    let mut params = ModelParams::<T>::default();
    let mut seen: Vec<String> = Vec::new();
    while let Some((line, s)) = cursor.next() {
        let (key, val) = s
            .split_once(char::is_whitespace)
            .ok_or_else(|| perr(line, format!("expected 'key value', found '{s}'")))?;
        if seen.iter().any(|k| k == key) {
            return Err(perr(line, format!("duplicate key '{key}'")));
        }
        seen.push(key.to_string());
        let v = parse_scalar::<T>(line, val.trim())?;
        match key {
            "w_geo" => params.w_geo = v,
            "w_sem_lidar" => params.w_sem_lidar = v,
            "w_sem_cam" => params.w_sem_cam = v,
            "mc_cost" => params.mc_cost = v,
            "sigma_range" => params.sigma_range = v,
            "sigma_height" => params.sigma_height = v,
            "outlier_rate" => params.outlier_rate = v,
            "outlier_range_max" => params.outlier_range_max = v,
            "grad_steep" => params.grad_steep = v,
            "grad_shift" => params.grad_shift = v,
            "sens_scale" => params.sens_scale = v,
            "sens_shift" => params.sens_shift = v,
            "sensor_height" => params.sensor_height = v,
            other => return Err(perr(line, format!("unknown parameter '{other}'"))),
        }
    }
    Ok(params)
}

pub fn write_params<T: Scalar>(
    path: impl AsRef<Path>,
    params: &ModelParams<T>,
) -> Result<(), FormatError> {
    fs::write(path, params_to_string(params))?;
    Ok(())
}

pub fn read_params<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>, FormatError> {
    parse_params(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Scene documents.

const SCENE_HEADER: &str = "stixel-scene v1";

pub fn scene_to_string<T: Scalar>(spec: &SceneSpec<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCENE_HEADER}");
    let _ = writeln!(out, "seed {}", spec.seed);
    let _ = writeln!(out, "sensor_height {}", spec.sensor_height);
    for b in &spec.elevation_bands {
        let _ = writeln!(out, "elevation_band {} {} {}", b.lo, b.hi, b.count);
    }
    let _ = writeln!(out, "azimuth {} {} {}", spec.azimuth.lo, spec.azimuth.hi, spec.azimuth.count);
    let _ = writeln!(out, "ground_extent {}", spec.ground_extent);
    let _ = writeln!(out, "ground_label {}", spec.ground_label);
    let _ = writeln!(out, "sigma_range {}", spec.sigma_range);
    let _ = writeln!(out, "sigma_height {}", spec.sigma_height);
    let _ = writeln!(out, "outlier_rate {}", spec.outlier_rate);
    let _ = writeln!(out, "outlier_range_max {}", spec.outlier_range_max);
    let _ = writeln!(out, "dropout_rate {}", spec.dropout_rate);
    let _ = writeln!(out, "epsilon_lidar {}", spec.epsilon_lidar);
    let _ = writeln!(out, "epsilon_cam {}", spec.epsilon_cam);
    let _ = writeln!(out, "cam_fov {} {}", spec.cam_fov_lo, spec.cam_fov_hi);
    let _ = writeln!(out, "classes lidar {}", class_set_string(&spec.classes.lidar));
    let _ = writeln!(out, "classes camera {}", class_set_string(&spec.classes.camera));
    let _ = writeln!(out, "classes stixel {}", class_set_string(&spec.classes.stixel));
    for b in &spec.boxes {
        let _ = write!(
            out,
            "box {} {} {} {} {}",
            b.azimuth_lo, b.azimuth_hi, b.range, b.height, b.label
        );
        if b.lidar_appearance.is_some() || b.cam_appearance.is_some() {
            let _ = write!(
                out,
                " {} {}",
                b.lidar_appearance.as_deref().unwrap_or("-"),
                b.cam_appearance.as_deref().unwrap_or("-")
            );
        }
        let _ = writeln!(out);
    }
    out
}

/// Reads a scene document. Keys may appear in any order. Omitted scalar
/// keys keep the demo-scene defaults; elevation bands and boxes start
/// empty and accumulate, one per line.
pub fn parse_scene<T: Scalar>(text: &str) -> Result<SceneSpec<T>, FormatError> {
    let mut cursor = Cursor::new(text);
    check_version(&mut cursor, SCENE_HEADER)?;
    let mut spec = SceneSpec::<T> {
        elevation_bands: Vec::new(),
        boxes: Vec::new(),
        ..SceneSpec::default()
    };
    while let Some((line, s)) = cursor.next() {
        let (key, rest) = match s.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => return Err(perr(line, format!("expected 'key value...', found '{s}'"))),
        };
        let toks: Vec<&str> = rest.split_whitespace().collect();
        fn one<'x>(line: usize, key: &str, toks: &[&'x str]) -> Result<&'x str, FormatError> {
            if toks.len() == 1 {
                Ok(toks[0])
            } else {
                Err(perr(line, format!("'{key}' takes one value")))
            }
        }
        match key {
            "seed" => {
                spec.seed = one(line, key, &toks)?
                    .parse::<u64>()
                    .map_err(|_| perr(line, "expected an unsigned integer seed"))?;
            }
            "sensor_height" => spec.sensor_height = parse_scalar(line, one(line, key, &toks)?)?,
            "elevation_band" | "azimuth" => {
                if toks.len() != 3 {
                    return Err(perr(line, format!("'{key}' takes 'lo hi count'")));
                }
                let band = GridBand::new(
                    parse_scalar::<T>(line, toks[0])?,
                    parse_scalar::<T>(line, toks[1])?,
                    parse_usize(line, toks[2])?,
                );
                if key == "azimuth" {
                    spec.azimuth = band;
                } else {
                    spec.elevation_bands.push(band);
                }
            }
            "ground_extent" => spec.ground_extent = parse_scalar(line, one(line, key, &toks)?)?,
            "ground_label" => spec.ground_label = one(line, key, &toks)?.to_string(),
            "sigma_range" => spec.sigma_range = parse_scalar(line, one(line, key, &toks)?)?,
            "sigma_height" => spec.sigma_height = parse_scalar(line, one(line, key, &toks)?)?,
            "outlier_rate" => spec.outlier_rate = parse_scalar(line, one(line, key, &toks)?)?,
            "outlier_range_max" => spec.outlier_range_max = parse_scalar(line, one(line, key, &toks)?)?,
            "dropout_rate" => spec.dropout_rate = parse_scalar(line, one(line, key, &toks)?)?,
            "epsilon_lidar" => spec.epsilon_lidar = parse_scalar(line, one(line, key, &toks)?)?,
            "epsilon_cam" => spec.epsilon_cam = parse_scalar(line, one(line, key, &toks)?)?,
            "cam_fov" => {
                if toks.len() != 2 {
                    return Err(perr(line, "'cam_fov' takes 'lo hi'"));
                }
                spec.cam_fov_lo = parse_scalar(line, toks[0])?;
                spec.cam_fov_hi = parse_scalar(line, toks[1])?;
            }
            "classes" => {
                if toks.len() < 2 {
                    return Err(perr(line, "expected 'classes <set> <entries>'"));
                }
                let set = parse_class_set(line, toks[1])?;
                match toks[0] {
                    "lidar" => spec.classes.lidar = set,
                    "camera" => spec.classes.camera = set,
                    "stixel" => spec.classes.stixel = set,
                    other => return Err(perr(line, format!("unknown class set '{other}'"))),
                }
            }
            "box" => {
                if toks.len() != 5 && toks.len() != 7 {
                    return Err(perr(
                        line,
                        "'box' takes 'az_lo az_hi range height label [lidar_look cam_look]'",
                    ));
                }
                let look = |i: usize| -> Option<String> {
                    toks.get(i).filter(|t| **t != "-").map(|t| t.to_string())
                };
                spec.boxes.push(BoxObstacle {
                    azimuth_lo: parse_scalar(line, toks[0])?,
                    azimuth_hi: parse_scalar(line, toks[1])?,
                    range: parse_scalar(line, toks[2])?,
                    height: parse_scalar(line, toks[3])?,
                    label: toks[4].to_string(),
                    lidar_appearance: look(5),
                    cam_appearance: look(6),
                });
            }
            other => return Err(perr(line, format!("unknown scene key '{other}'"))),
        }
    }
    Ok(spec)
}

pub fn write_scene<T: Scalar>(
    path: impl AsRef<Path>,
    spec: &SceneSpec<T>,
) -> Result<(), FormatError> {
    fs::write(path, scene_to_string(spec))?;
    Ok(())
}

pub fn read_scene<T: Scalar>(path: impl AsRef<Path>) -> Result<SceneSpec<T>, FormatError> {
    parse_scene(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Evaluation report documents.

const EVAL_HEADER: &str = "stixel-eval v1";

/// An evaluation report plus the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDocument<T> {
    pub params_hash: String,
    pub threshold: T,
    pub denominator: OutlierDenominator,
    pub report: EvalReport<T>,
}

fn denominator_token(d: OutlierDenominator) -> &'static str {
    match d {
        OutlierDenominator::ValidPoints => "valid",
        OutlierDenominator::AllPoints => "all",
    }
}

pub fn denominator_from_token(tok: &str) -> Option<OutlierDenominator> {
    match tok {
        "valid" => Some(OutlierDenominator::ValidPoints),
        "all" => Some(OutlierDenominator::AllPoints),
        _ => None,
    }
}

pub fn eval_to_string<T: Scalar>(doc: &EvalDocument<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{EVAL_HEADER}");
    let _ = writeln!(out, "params_hash {}", doc.params_hash);
    let _ = writeln!(out, "threshold {}", doc.threshold);
    let _ = writeln!(out, "denominator {}", denominator_token(doc.denominator));
    let _ = writeln!(out, "points {}", doc.report.points);
    let _ = writeln!(out, "valid_points {}", doc.report.valid_points);
    let _ = writeln!(out, "stixels {}", doc.report.stixels);
    let _ = writeln!(out, "outlier_rate {}", doc.report.outlier_rate);
    let _ = writeln!(out, "compression_rate {}", doc.report.compression_rate);
    let _ = writeln!(out, "mean_iou {}", doc.report.mean_iou);
    for (name, v) in &doc.report.iou_per_class {
        let _ = writeln!(out, "iou {name} {v}");
    }
    out
}

pub fn parse_eval<T: Scalar>(text: &str) -> Result<EvalDocument<T>, FormatError> {
    let mut cursor = Cursor::new(text);
    check_version(&mut cursor, EVAL_HEADER)?;
    let (_, hash) = cursor.expect_key("params_hash")?;
    let (tline, thr) = cursor.expect_key("threshold")?;
    let threshold = parse_scalar::<T>(tline, thr)?;
    let (dline, den) = cursor.expect_key("denominator")?;
    let denominator = denominator_from_token(den)
        .ok_or_else(|| perr(dline, format!("expected 'valid' or 'all', found '{den}'")))?;
    let (pline, pts) = cursor.expect_key("points")?;
    let points = parse_usize(pline, pts)?;
    let (vline, vp) = cursor.expect_key("valid_points")?;
    let valid_points = parse_usize(vline, vp)?;
    let (sline, st) = cursor.expect_key("stixels")?;
    let stixels = parse_usize(sline, st)?;
    let (oline, or) = cursor.expect_key("outlier_rate")?;
    let outlier_rate = parse_scalar::<T>(oline, or)?;
    let (cline, cr) = cursor.expect_key("compression_rate")?;
    let compression_rate = parse_scalar::<T>(cline, cr)?;
    let (mline, mi) = cursor.expect_key("mean_iou")?;
    let mean_iou = parse_scalar::<T>(mline, mi)?;
    let mut iou_per_class = Vec::new();
    while let Some((line, s)) = cursor.next() {
        let rest = s
            .strip_prefix("iou")
            .filter(|r| r.starts_with(char::is_whitespace))
            .ok_or_else(|| perr(line, format!("expected 'iou <label> <value>', found '{s}'")))?;
        let mut toks = rest.split_whitespace();
        let name = toks.next().ok_or_else(|| perr(line, "missing label"))?;
        let v = parse_scalar::<T>(line, toks.next().unwrap_or(""))?;
        iou_per_class.push((name.to_string(), v));
    }
    Ok(EvalDocument {
        params_hash: hash.to_string(),
        threshold,
        denominator,
        report: EvalReport {
            outlier_rate,
            iou_per_class,
            mean_iou,
            compression_rate,
            points,
            valid_points,
            stixels,
        },
    })
}

pub fn write_eval<T: Scalar>(
    path: impl AsRef<Path>,
    doc: &EvalDocument<T>,
) -> Result<(), FormatError> {
    fs::write(path, eval_to_string(doc))?;
    Ok(())
}

pub fn read_eval<T: Scalar>(path: impl AsRef<Path>) -> Result<EvalDocument<T>, FormatError> {
    parse_eval(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Sweep documents.

const SWEEP_HEADER: &str = "stixel-sweep v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub value: T,
    pub outlier_rate: T,
    pub mean_iou: T,
    pub compression_rate: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDocument<T> {
    pub parameter: String,
    pub params_hash: String,
    pub rows: Vec<SweepRow<T>>,
}

pub fn sweep_to_string<T: Scalar>(doc: &SweepDocument<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SWEEP_HEADER}");
    let _ = writeln!(out, "parameter {}", doc.parameter);
    let _ = writeln!(out, "params_hash {}", doc.params_hash);
    let _ = writeln!(out, "columns value,outlier_rate,mean_iou,compression_rate");
    for r in &doc.rows {
        let _ =
            writeln!(out, "row {} {} {} {}", r.value, r.outlier_rate, r.mean_iou, r.compression_rate);
    }
    out
}

pub fn parse_sweep<T: Scalar>(text: &str) -> Result<SweepDocument<T>, FormatError> {
    let mut cursor = Cursor::new(text);
    check_version(&mut cursor, SWEEP_HEADER)?;
    let (_, parameter) = cursor.expect_key("parameter")?;
    let (_, hash) = cursor.expect_key("params_hash")?;
    let (cl, cols) = cursor.expect_key("columns")?;
    if cols != "value,outlier_rate,mean_iou,compression_rate" {
        return Err(perr(cl, format!("unexpected sweep columns '{cols}'")));
    }
    let mut rows = Vec::new();
    while let Some((line, s)) = cursor.next() {
        let rest = s
            .strip_prefix("row")
            .filter(|r| r.starts_with(char::is_whitespace))
            .ok_or_else(|| perr(line, format!("expected 'row ...', found '{s}'")))?;
        let toks: Vec<&str> = rest.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(perr(line, format!("expected 4 values, found {}", toks.len())));
        }
        rows.push(SweepRow {
            value: parse_scalar::<T>(line, toks[0])?,
            outlier_rate: parse_scalar::<T>(line, toks[1])?,
            mean_iou: parse_scalar::<T>(line, toks[2])?,
            compression_rate: parse_scalar::<T>(line, toks[3])?,
        });
    }
    Ok(SweepDocument { parameter: parameter.to_string(), params_hash: hash.to_string(), rows })
}

pub fn write_sweep<T: Scalar>(
    path: impl AsRef<Path>,
    doc: &SweepDocument<T>,
) -> Result<(), FormatError> {
    fs::write(path, sweep_to_string(doc))?;
    Ok(())
}

pub fn read_sweep<T: Scalar>(path: impl AsRef<Path>) -> Result<SweepDocument<T>, FormatError> {
    parse_sweep(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Palette and rendering.

/// RGB colors per label index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
}

/// Color convention for the standard label names.
pub fn standard_color(name: &str) -> Option<[u8; 3]> {
    Some(match name {
        "road" => [128, 64, 128],
        "sidewalk" => [244, 35, 232],
        "person" => [220, 20, 60],
        "rider" => [255, 0, 0],
        "small_vehicle" => [0, 0, 142],
        "large_vehicle" => [0, 0, 70],
        "two_wheeler" => [119, 11, 32],
        "construction" => [70, 70, 70],
        "pole" => [153, 153, 153],
        "traffic_sign" => [220, 220, 0],
        "vegetation" => [107, 142, 35],
        "terrain" => [152, 251, 152],
        "sky" => [70, 130, 180],
        _ => return None,
    })
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h / 60.0) % 6.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to(r), to(g), to(b)]
}

impl Palette {
    /// Standard colors where the name is known, golden-angle hues
    /// elsewhere (deterministic in the label order).
    pub fn for_labels<S: AsRef<str>>(names: &[S]) -> Palette {
        let colors = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                standard_color(n.as_ref())
                    .unwrap_or_else(|| hsv_to_rgb((i as f64 * 137.508) % 360.0, 0.75, 0.95))
            })
            .collect();
        Palette { colors }
    }

    pub fn color(&self, label: usize) -> [u8; 3] {
        self.colors[label]
    }
}

/// Renders a world to binary PPM (P6) bytes. Each (column, row) becomes an
/// `upscale`×`upscale` pixel block colored by the covering stixel's label;
/// the top scan row is the top image row.
pub fn render_ppm<T: Scalar>(
    world: &StixelWorld<T>,
    palette: &Palette,
    upscale: usize,
) -> Result<Vec<u8>, FormatError> {
    let w = world.columns.len();
    let h = world.height;
    if w == 0 || h == 0 {
        return Err(FormatError::Render("empty world".into()));
    }
    if upscale == 0 {
        return Err(FormatError::Render("upscale must be at least 1".into()));
    }
    let (pw, ph) = (w * upscale, h * upscale);
    if pw > 1 << 16 || ph > 1 << 16 || 3usize.saturating_mul(pw).saturating_mul(ph) > 1 << 30 {
        return Err(FormatError::Render(format!("image {pw}x{ph} too large")));
    }
    // Per column, colors bottom-to-top.
    let mut cols: Vec<Vec<[u8; 3]>> = Vec::with_capacity(w);
    for (i, col) in world.columns.iter().enumerate() {
        consistency_check(col, h)
            .map_err(|e| FormatError::Render(format!("column {i}: {e}")))?;
        let mut rows = Vec::with_capacity(h);
        for s in &col.stixels {
            if s.label >= palette.colors.len() {
                return Err(FormatError::Render(format!(
                    "column {i}: label {} outside the palette",
                    s.label
                )));
            }
            for _ in s.bottom..=s.top {
                rows.push(palette.color(s.label));
            }
        }
        cols.push(rows);
    }
    let mut out = Vec::with_capacity(15 + 3 * pw * ph);
    out.extend_from_slice(format!("P6\n{pw} {ph}\n255\n").as_bytes());
    for row in (0..h).rev() {
        for _ in 0..upscale {
            for col in &cols {
                for _ in 0..upscale {
                    out.extend_from_slice(&col[row]);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_ppm<T: Scalar>(
    path: impl AsRef<Path>,
    world: &StixelWorld<T>,
    palette: &Palette,
    upscale: usize,
) -> Result<(), FormatError> {
    let bytes = render_ppm(world, palette, upscale)?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_LABELS;
    use crate::synthetic::generate;

    fn default_names() -> Vec<String> {
        DEFAULT_LABELS.iter().map(|s| s.to_string()).collect()
    }

    fn sample_world() -> StixelWorld<f64> {
        StixelWorld {
            height: 2,
            columns: vec![
                StixelColumn {
                    column: 0,
                    stixels: vec![
                        Stixel {
                            bottom: 1,
                            top: 1,
                            distance: Distance::Finite(6.25),
                            label: 0,
                            sclass: StructuralClass::Ground,
                        },
                        Stixel {
                            bottom: 2,
                            top: 2,
                            distance: Distance::Infinite,
                            label: 12,
                            sclass: StructuralClass::Sky,
                        },
                    ],
                },
                StixelColumn {
                    column: 1,
                    stixels: vec![Stixel {
                        bottom: 1,
                        top: 2,
                        distance: Distance::Finite(12.5),
                        label: 4,
                        sclass: StructuralClass::Object,
                    }],
                },
            ],
        }
    }

    #[test]
    fn scan_round_trip_via_generator() {
        let spec = SceneSpec::<f64>::default();
        let scene = generate(&spec).unwrap();
        let text = scan_to_string(&scene.scan, &ClassMap::Identity, &ClassMap::Identity);
        let doc = parse_scan::<f64>(&text).unwrap();
        assert_eq!(doc.scan, scene.scan);
        assert_eq!(doc.map_lidar, ClassMap::Identity);
        assert_eq!(doc.map_cam, ClassMap::Identity);
    }

    #[test]
    fn scan_matrix_map_round_trip() {
        let spec = SceneSpec::<f64>::default();
        let mut scene = generate(&spec).unwrap();
        scene.scan.columns.truncate(2);
        let n = 13;
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { 0.9 } else { 0.1 / (n - 1) as f64 };
            }
        }
        let map = ClassMap::Matrix(rows);
        let text = scan_to_string(&scene.scan, &map, &ClassMap::Identity);
        let doc = parse_scan::<f64>(&text).unwrap();
        assert_eq!(doc.map_lidar, map);
        assert_eq!(doc.scan, scene.scan);
    }

    #[test]
    fn hand_written_scan_parses_field_by_field() {
        let text = "\
stixel-scan v1
height 2
columns 1
# tiny two-class sets
classes lidar walkable:ground,blocker:object
classes camera walkable:ground,blocker:object
classes stixel walkable:ground,blocker:object,sky:sky
map lidar identity
map camera identity
column 0.25
4.5 -0.2 0.75,0.25 absent
inv 0.1 absent absent
";
        let doc = parse_scan::<f64>(text).unwrap();
        assert_eq!(doc.scan.columns.len(), 1);
        let col = &doc.scan.columns[0];
        assert_eq!(col.azimuth, 0.25);
        let m0 = &col.cells[0];
        assert_eq!(m0.depth.range, Some(4.5));
        assert_eq!(m0.depth.elevation, -0.2);
        assert_eq!(m0.depth.azimuth, 0.25);
        assert_eq!(m0.lidar_sem.as_ref().unwrap().probs, vec![0.75, 0.25]);
        assert!(m0.cam_sem.is_none());
        let m1 = &col.cells[1];
        assert!(!m1.depth.is_valid());
        assert!(m1.lidar_sem.is_none());
        assert_eq!(doc.scan.class_sets.stixel.len(), 3);
        assert_eq!(
            doc.scan.class_sets.stixel.structural_of(2),
            StructuralClass::Sky
        );
    }

    #[test]
    fn missing_header_field_names_the_field() {
        let text = "stixel-scan v1\ncolumns 1\n";
        let err = parse_scan::<f64>(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("height"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn unknown_version_is_rejected() {
        for text in [
            "stixel-scan v2\n",
            "stixel-world v9\nheight 1\n",
            "stixel-params v0\n",
            "something else\n",
        ] {
            assert!(
                parse_scan::<f64>(text).is_err()
                    && parse_world::<f64>(text).is_err()
                    && parse_params::<f64>(text).is_err(),
                "{text:?} should be rejected by all parsers"
            );
        }
    }

    #[test]
    fn world_round_trip_and_resolve() {
        let world = sample_world();
        let names = default_names();
        let text = world_to_string(&world, &names);
        let doc = parse_world::<f64>(&text).unwrap();
        assert_eq!(doc.world, world);
        assert_eq!(doc.labels, names);
        let resolved = doc.resolve(&ClassSet::default_thirteen()).unwrap();
        assert_eq!(resolved, world);
    }

    #[test]
    fn non_contiguous_world_is_rejected() {
        let text = "\
stixel-world v1
height 5
columns 1
labels road,sky
column 0
1 2 4.5 road ground
4 5 inf sky sky
";
        let err = parse_world::<f64>(text).unwrap_err();
        assert!(err.to_string().contains("non-contiguous"), "{err}");
    }

    #[test]
    fn sky_distance_coupling_is_enforced() {
        let finite_sky = "\
stixel-world v1
height 1
columns 1
labels sky
column 0
1 1 4.0 sky sky
";
        assert!(parse_world::<f64>(finite_sky).is_err());
        let inf_ground = "\
stixel-world v1
height 1
columns 1
labels road
column 0
1 1 inf road ground
";
        assert!(parse_world::<f64>(inf_ground).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let points = PointLabels {
            columns: vec![vec![Some(0), None, Some(12)], vec![Some(4), Some(4), None]],
        };
        let names = default_names();
        let text = labels_to_string(&points, &names);
        let doc = parse_labels(&text).unwrap();
        assert_eq!(doc.points, points);
        let resolved = doc.resolve(&ClassSet::default_thirteen()).unwrap();
        assert_eq!(resolved, points);
    }

    #[test]
    fn params_round_trip_and_partial_files() {
        let mut params = ModelParams::<f64>::default();
        params.w_sem_lidar = 2.5;
        params.sigma_range = 0.03;
        let text = params_to_string(&params);
        let back = parse_params::<f64>(&text).unwrap();
        assert_eq!(back, params);
        let partial = "stixel-params v1\nmc_cost 3.5\n";
        let p = parse_params::<f64>(partial).unwrap();
        assert_eq!(p.mc_cost, 3.5);
        assert_eq!(p.w_geo, ModelParams::<f64>::default().w_geo);
        assert!(parse_params::<f64>("stixel-params v1\nmc_cost 1\nmc_cost 2\n").is_err());
        assert!(parse_params::<f64>("stixel-params v1\nbeta_q 1\n").is_err());
    }

    #[test]
    fn scene_round_trip() {
        let mut spec = SceneSpec::<f64>::default();
        spec.boxes[1].lidar_appearance = Some("terrain".to_string());
        spec.boxes[2].cam_appearance = Some("vegetation".to_string());
        let text = scene_to_string(&spec);
        let back = parse_scene::<f64>(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn eval_and_sweep_round_trips() {
        let doc = EvalDocument {
            params_hash: "deadbeef".to_string(),
            threshold: 0.05,
            denominator: OutlierDenominator::ValidPoints,
            report: EvalReport {
                outlier_rate: 0.01,
                iou_per_class: vec![("road".to_string(), 0.95), ("sky".to_string(), 1.0)],
                mean_iou: 0.975,
                compression_rate: 0.9,
                points: 128,
                valid_points: 100,
                stixels: 13,
            },
        };
        let back = parse_eval::<f64>(&eval_to_string(&doc)).unwrap();
        assert_eq!(back, doc);
        let sweep = SweepDocument {
            parameter: "w_sem_lidar".to_string(),
            params_hash: "deadbeef".to_string(),
            rows: vec![
                SweepRow { value: 0.0, outlier_rate: 0.01, mean_iou: 0.8, compression_rate: 0.9 },
                SweepRow { value: 1.0, outlier_rate: 0.02, mean_iou: 0.9, compression_rate: 0.92 },
            ],
        };
        let back = parse_sweep::<f64>(&sweep_to_string(&sweep)).unwrap();
        assert_eq!(back, sweep);
    }

    #[test]
    fn palette_uses_standard_colors_and_deterministic_fallback() {
        let names = default_names();
        let p = Palette::for_labels(&names);
        assert_eq!(p.color(0), [128, 64, 128]);
        assert_eq!(p.color(12), [70, 130, 180]);
        let odd = Palette::for_labels(&["mystery".to_string(), "mystery2".to_string()]);
        let again = Palette::for_labels(&["mystery".to_string(), "mystery2".to_string()]);
        assert_eq!(odd, again);
        assert_ne!(odd.color(0), odd.color(1));
    }

    #[test]
    fn render_golden_bytes() {
        let world = sample_world();
        let palette = Palette::for_labels(&default_names());
        let bytes = render_ppm(&world, &palette, 1).unwrap();
        // 2x2 image: top row = (sky, small_vehicle), bottom = (road,
        // small_vehicle).
        let mut expected = b"P6\n2 2\n255\n".to_vec();
        expected.extend_from_slice(&[70, 130, 180, 0, 0, 142, 128, 64, 128, 0, 0, 142]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn render_upscale_repeats_blocks() {
        let world = sample_world();
        let palette = Palette::for_labels(&default_names());
        let bytes = render_ppm(&world, &palette, 2).unwrap();
        let mut expected = b"P6\n4 4\n255\n".to_vec();
        let top: Vec<u8> = [[70u8, 130, 180], [70, 130, 180], [0, 0, 142], [0, 0, 142]]
            .concat();
        let bottom: Vec<u8> =
            [[128u8, 64, 128], [128, 64, 128], [0, 0, 142], [0, 0, 142]].concat();
        expected.extend_from_slice(&top);
        expected.extend_from_slice(&top);
        expected.extend_from_slice(&bottom);
        expected.extend_from_slice(&bottom);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn all_sky_world_renders_uniform_sky_color() {
        let world = StixelWorld::<f64> {
            height: 3,
            columns: (0..4)
                .map(|i| StixelColumn {
                    column: i,
                    stixels: vec![Stixel {
                        bottom: 1,
                        top: 3,
                        distance: Distance::Infinite,
                        label: 12,
                        sclass: StructuralClass::Sky,
                    }],
                })
                .collect(),
        };
        let palette = Palette::for_labels(&default_names());
        let bytes = render_ppm(&world, &palette, 1).unwrap();
        let body = &bytes[b"P6\n4 3\n255\n".len()..];
        assert_eq!(body.len(), 4 * 3 * 3);
        for px in body.chunks(3) {
            assert_eq!(px, [70, 130, 180]);
        }
    }

    #[test]
    fn render_rejects_bad_inputs() {
        let world = sample_world();
        let palette = Palette::for_labels(&default_names());
        assert!(matches!(render_ppm(&world, &palette, 0), Err(FormatError::Render(_))));
        let empty = StixelWorld::<f64> { height: 0, columns: vec![] };
        assert!(render_ppm(&empty, &palette, 1).is_err());
        let tiny = Palette { colors: vec![[0, 0, 0]] };
        assert!(render_ppm(&world, &tiny, 1).is_err(), "labels outside palette");
        assert!(render_ppm(&world, &palette, 70000).is_err(), "size overflow");
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = std::env::temp_dir().join("stixel-format-tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("world.txt");
        let world = sample_world();
        write_world(&path, &world, &default_names()).unwrap();
        let doc = read_world::<f64>(&path).unwrap();
        assert_eq!(doc.world, world);
        fs::remove_file(&path).ok();
    }
}
