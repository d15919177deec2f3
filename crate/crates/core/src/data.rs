//! Plot records, dataset file I/O, covariate construction and train/validation
//! splits.
//!
//! Dataset files are comma separated with the header
//! `id,x,y,n_total,y_hardwood,elevation,vegetation`. Optional leading `#`
//! lines carry metadata: `# units=m` or `# units=km` (default km) and
//! `# crs=<free text>`. Coordinates are always held in kilometres.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 7] = [
    "id",
    "x",
    "y",
    "n_total",
    "y_hardwood",
    "elevation",
    "vegetation",
];

/// Offset applied to the x coordinate of a record whose location repeats an
/// earlier one, multiplied by the record index.
pub const DUPLICATE_JITTER_KM: f64 = 1e-6;

/// One forest plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRecord {
    pub id: String,
    /// Easting, km.
    pub x: f64,
    /// Northing, km.
    pub y: f64,
    pub n_total: u64,
    pub y_hardwood: u64,
    /// Metres.
    pub elevation: f64,
    pub vegetation: f64,
}

impl PlotRecord {
    pub fn coord(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.y_hardwood > self.n_total {
            return Err(format!(
                "plot `{}`: y_hardwood {} exceeds n_total {}",
                self.id, self.y_hardwood, self.n_total
            ));
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(format!("plot `{}`: non-finite coordinate", self.id));
        }
        if !self.vegetation.is_finite() || !self.elevation.is_finite() {
            return Err(format!("plot `{}`: non-finite covariate", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    pub records: Vec<PlotRecord>,
    pub crs_note: String,
}

impl SpatialDataset {
    /// Validates the records and perturbs repeated coordinates.
    pub fn new(records: Vec<PlotRecord>, crs_note: impl Into<String>) -> Result<Self> {
        let mut ds = SpatialDataset {
            records,
            crs_note: crs_note.into(),
        };
        let mut seen = HashSet::new();
        for r in &ds.records {
            r.validate().map_err(Error::Validation)?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id `{}`", r.id)));
            }
        }
        ds.jitter_duplicates();
        Ok(ds)
    }

    /// An empty dataset, e.g. the validation side of an all-training split.
    pub fn empty() -> Self {
        SpatialDataset {
            records: Vec::new(),
            crs_note: String::new(),
        }
    }

    fn jitter_duplicates(&mut self) {
        let mut seen: HashSet<(u64, u64)> = HashSet::new();
        for (i, r) in self.records.iter_mut().enumerate() {
            let mut key = (r.x.to_bits(), r.y.to_bits());
            if seen.contains(&key) {
                let orig = r.x;
                let mut k = 1.0;
                while seen.contains(&key) {
                    r.x = orig + DUPLICATE_JITTER_KM * (i as f64) * k;
                    key = (r.x.to_bits(), r.y.to_bits());
                    k += 1.0;
                }
                warn!(
                    "plot `{}` shares its location with an earlier plot; x jittered by {:e} km",
                    r.id,
                    r.x - orig
                );
            }
            seen.insert(key);
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn coords(&self) -> Vec<[f64; 2]> {
        self.records.iter().map(PlotRecord::coord).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.y_hardwood).collect()
    }

    pub fn totals(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.n_total).collect()
    }

    /// Records whose ids are in `ids`, in dataset order.
    pub fn select(&self, ids: &[String]) -> Result<SpatialDataset> {
        let index: HashMap<&str, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let mut keep = vec![false; self.records.len()];
        for id in ids {
            let i = index
                .get(id.as_str())
                .ok_or_else(|| Error::UnknownId(id.clone()))?;
            keep[*i] = true;
        }
        Ok(SpatialDataset {
            records: self
                .records
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(r, _)| r.clone())
                .collect(),
            crs_note: self.crs_note.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordUnits {
    Metres,
    Kilometres,
}

/// Reads a dataset file. Coordinates declared in metres are converted to km.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<SpatialDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut units = CoordUnits::Kilometres;
    let mut crs = String::new();
    let mut meta_lines = 0u64;
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(meta) = trimmed.strip_prefix('#') {
            meta_lines += 1;
            body_start += line.len();
            let meta = meta.trim();
            if let Some((key, value)) = meta.split_once('=') {
                match key.trim() {
                    "units" => {
                        units = match value.trim() {
                            "m" => CoordUnits::Metres,
                            "km" => CoordUnits::Kilometres,
                            other => {
                                return Err(Error::parse(
                                    path,
                                    meta_lines,
                                    format!("unknown units `{other}` (expected m or km)"),
                                ))
                            }
                        }
                    }
                    "crs" => crs = value.trim().to_string(),
                    _ => {}
                }
            }
        } else {
            break;
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text[body_start..].as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, meta_lines + 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::parse(
            path,
            meta_lines + 1,
            format!("expected header `{}`", DATASET_HEADER.join(",")),
        ));
    }

    let scale = match units {
        CoordUnits::Metres => 1e-3,
        CoordUnits::Kilometres => 1.0,
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0) + meta_lines;
            Error::parse(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0) + meta_lines;
        let err = |msg: String| Error::parse(path, line, msg);
        if row.len() != DATASET_HEADER.len() {
            return Err(err(format!("expected 7 fields, found {}", row.len())));
        }
        let float = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| err(format!("{}: not a number: `{}`", DATASET_HEADER[i], &row[i])))
        };
        let int = |i: usize| -> Result<u64> {
            row[i].parse::<u64>().map_err(|_| {
                err(format!(
                    "{}: not a nonnegative integer: `{}`",
                    DATASET_HEADER[i], &row[i]
                ))
            })
        };
        let rec = PlotRecord {
            id: row[0].to_string(),
            x: float(1)? * scale,
            y: float(2)? * scale,
            n_total: int(3)?,
            y_hardwood: int(4)?,
            elevation: float(5)?,
            vegetation: float(6)?,
        };
        rec.validate().map_err(Error::Validation)?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "{}: dataset has no records",
            path.display()
        )));
    }
    SpatialDataset::new(records, crs)
}

/// Serializes a dataset in km with shortest round-trip float formatting.
pub fn dataset_to_string(data: &SpatialDataset) -> String {
    let mut out = String::new();
    out.push_str("# units=km\n");
    if !data.crs_note.is_empty() {
        let _ = writeln!(out, "# crs={}", data.crs_note);
    }
    out.push_str(&DATASET_HEADER.join(","));
    out.push('\n');
    for r in &data.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.id, r.x, r.y, r.n_total, r.y_hardwood, r.elevation, r.vegetation
        );
    }
    out
}

pub fn write_dataset(data: &SpatialDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_string(data))?;
    Ok(())
}

/// Centering and scaling constants for the covariate vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignConstants {
    pub elevation_center: f64,
    pub elevation_scale: f64,
    pub vegetation_change: f64,
    pub vegetation_scale: f64,
}

impl Default for DesignConstants {
    fn default() -> Self {
        DesignConstants {
            elevation_center: 320.0,
            elevation_scale: 50.0,
            vegetation_change: 0.3,
            vegetation_scale: 0.05,
        }
    }
}

impl DesignConstants {
    /// `(1, (A - 320)/50, min(V - 0.3, 0)/0.05, max(V - 0.3, 0)/0.05)` with
    /// the default constants.
    pub fn row(&self, elevation: f64, vegetation: f64) -> [f64; 4] {
        let dv = vegetation - self.vegetation_change;
        [
            1.0,
            (elevation - self.elevation_center) / self.elevation_scale,
            dv.min(0.0) / self.vegetation_scale,
            dv.max(0.0) / self.vegetation_scale,
        ]
    }
}

/// Covariate rows `(X1..X4)`, one per record.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(pub DMatrix<f64>);

impl DesignMatrix {
    pub const NCOLS: usize = 4;

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn from_rows(rows: &[[f64; 4]]) -> Self {
        DesignMatrix(DMatrix::from_fn(rows.len(), Self::NCOLS, |i, j| rows[i][j]))
    }
}

pub fn build_design_matrix(data: &SpatialDataset) -> DesignMatrix {
    build_design_matrix_with(data, &DesignConstants::default())
}

pub fn build_design_matrix_with(data: &SpatialDataset, c: &DesignConstants) -> DesignMatrix {
    let rows: Vec<[f64; 4]> = data
        .records
        .iter()
        .map(|r| c.row(r.elevation, r.vegetation))
        .collect();
    DesignMatrix::from_rows(&rows)
}

/// Disjoint training and validation id lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitSpec {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let train: HashSet<&String> = self.train_ids.iter().collect();
        if train.len() != self.train_ids.len() {
            return Err(Error::Validation("split lists a training id twice".into()));
        }
        let mut valid = HashSet::new();
        for id in &self.validation_ids {
            if train.contains(id) {
                return Err(Error::Validation(format!(
                    "id `{id}` is in both training and validation sets"
                )));
            }
            if !valid.insert(id) {
                return Err(Error::Validation(format!("validation id `{id}` listed twice")));
            }
        }
        Ok(())
    }
}

pub fn split_train_validation(
    data: &SpatialDataset,
    spec: &SplitSpec,
) -> Result<(SpatialDataset, SpatialDataset)> {
    spec.validate()?;
    Ok((data.select(&spec.train_ids)?, data.select(&spec.validation_ids)?))
}

/// Reads a split file with lines `train=a,b,...` and `validation=c,d,...`.
pub fn load_split(path: impl AsRef<Path>) -> Result<SplitSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut spec = SplitSpec::default();
    let (mut got_train, mut got_valid) = (false, false);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i as u64 + 1, "expected `train=` or `validation=`"))?;
        let ids: Vec<String> = value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        match key.trim() {
            "train" => {
                spec.train_ids = ids;
                got_train = true;
            }
            "validation" => {
                spec.validation_ids = ids;
                got_valid = true;
            }
            other => {
                return Err(Error::parse(path, i as u64 + 1, format!("unknown key `{other}`")))
            }
        }
    }
    if !got_train || !got_valid {
        return Err(Error::parse(
            path,
            0,
            "split file needs both `train=` and `validation=` lines",
        ));
    }
    spec.validate()?;
    Ok(spec)
}

pub fn split_to_string(spec: &SplitSpec) -> String {
    format!(
        "train={}\nvalidation={}\n",
        spec.train_ids.join(","),
        spec.validation_ids.join(",")
    )
}

pub fn write_split(spec: &SplitSpec, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, split_to_string(spec))?;
    Ok(())
}
