use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One merged radar measurement in the vehicle frame (x forward, y left).
#[derive(Clone, Debug, PartialEq)]
pub struct RadarScan {
    pub scan_id: String,
    /// Meters.
    pub positions: Vec<[f64; 2]>,
    /// Ego-motion compensated Doppler velocity, m/s.
    pub velocities: Vec<f64>,
    /// Radar cross section, dBsm.
    pub rcs: Vec<f64>,
    /// `0` static, `1` moving.
    pub labels: Option<Vec<u8>>,
}

pub const STATIC: u8 = 0;
pub const MOVING: u8 = 1;

impl RadarScan {
    pub fn new(
        scan_id: impl Into<String>,
        positions: Vec<[f64; 2]>,
        velocities: Vec<f64>,
        rcs: Vec<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let scan = Self {
            scan_id: scan_id.into(),
            positions,
            velocities,
            rcs,
            labels,
        };
        scan.validate()?;
        Ok(scan)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::Data(format!("{}: empty scan", self.scan_id)));
        }
        if self.velocities.len() != n || self.rcs.len() != n {
            return Err(Error::Data(format!(
                "{}: array lengths differ (positions {n}, velocities {}, rcs {})",
                self.scan_id,
                self.velocities.len(),
                self.rcs.len()
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Data(format!(
                    "{}: {} labels for {n} points",
                    self.scan_id,
                    labels.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l > MOVING) {
                return Err(Error::Data(format!("{}: label {bad} not in {{0,1}}", self.scan_id)));
            }
        }
        let finite = self.positions.iter().all(|p| p[0].is_finite() && p[1].is_finite())
            && self.velocities.iter().all(|v| v.is_finite())
            && self.rcs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data(format!("{}: non-finite value", self.scan_id)));
        }
        Ok(())
    }

    /// Attribute tuple `(x, y, v, σ)` per point, used for deterministic ordering.
    pub fn attributes(&self) -> Vec<[f64; 4]> {
        (0..self.len())
            .map(|i| {
                [
                    self.positions[i][0],
                    self.positions[i][1],
                    self.velocities[i],
                    self.rcs[i],
                ]
            })
            .collect()
    }

    /// Reorders points so that point `i` of the result is point `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            scan_id: self.scan_id.clone(),
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            velocities: perm.iter().map(|&i| self.velocities[i]).collect(),
            rcs: perm.iter().map(|&i| self.rcs[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| perm.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn moving_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&x| x == MOVING).count())
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn parse_field(field: &str, what: &str, path: &Path, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse {what} from {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "{}:{line}: non-finite {what}",
            path.display()
        )));
    }
    Ok(v)
}

/// Reads a scan CSV. The scan id is the file stem.
pub fn load_scan(path: &Path) -> Result<RadarScan> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scan_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_scan(&text, scan_id, path)
}

pub(crate) fn parse_scan(text: &str, scan_id: String, path: &Path) -> Result<RadarScan> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let fields: Vec<&str> = headers.iter().map(str::trim).collect();
    let labeled = match fields.as_slice() {
        ["x", "y", "v", "rcs", "label"] => true,
        ["x", "y", "v", "rcs"] => false,
        _ => {
            return Err(parse_err(
                1,
                format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
            ))
        }
    };
    let width = if labeled { 5 } else { 4 };

    let mut positions = Vec::new();
    let mut velocities = Vec::new();
    let mut rcs = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let x = parse_field(&record[0], "x", path, line)?;
        let y = parse_field(&record[1], "y", path, line)?;
        positions.push([x, y]);
        velocities.push(parse_field(&record[2], "v", path, line)?);
        rcs.push(parse_field(&record[3], "rcs", path, line)?);
        if labeled {
            let l: u8 = record[4]
                .trim()
                .parse()
                .ok()
                .filter(|&l| l <= MOVING)
                .ok_or_else(|| parse_err(line, format!("label {:?} not in {{0,1}}", &record[4])))?;
            labels.push(l);
        }
    }
    if positions.is_empty() {
        return Err(Error::Data(format!("{}: empty scan", path.display())));
    }
    RadarScan::new(scan_id, positions, velocities, rcs, labeled.then_some(labels))
}

pub(crate) fn render_scan(scan: &RadarScan, extra_column: Option<(&str, &[u8])>) -> Result<Vec<u8>> {
    scan.validate()?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["x", "y", "v", "rcs"];
    if scan.labels.is_some() {
        header.push("label");
    }
    if let Some((name, _)) = extra_column {
        header.push(name);
    }
    let csv_err = |e: csv::Error| Error::Data(format!("csv write: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..scan.len() {
        let mut row = vec![
            fmt_f64(scan.positions[i][0]),
            fmt_f64(scan.positions[i][1]),
            fmt_f64(scan.velocities[i]),
            fmt_f64(scan.rcs[i]),
        ];
        if let Some(labels) = &scan.labels {
            row.push(labels[i].to_string());
        }
        if let Some((_, col)) = extra_column {
            row.push(col[i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let mut out = w.into_inner().map_err(|e| Error::Data(format!("csv write: {e}")))?;
    out.flush().ok();
    Ok(out)
}

pub fn save_scan(scan: &RadarScan, path: &Path) -> Result<()> {
    let bytes = render_scan(scan, None)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `scan` with an additional integer `pred` column.
pub fn save_scan_with_predictions(scan: &RadarScan, preds: &[u8], path: &Path) -> Result<()> {
    if preds.len() != scan.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} points",
            preds.len(),
            scan.len()
        )));
    }
    let bytes = render_scan(scan, Some(("pred", preds)))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
