//! Plain ASCII grids: a six-line header followed by rows from north to south.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const NODATA: f64 = -9999.0;

/// Square-celled grid; `values` are row-major with row 0 the northern edge.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub values: Vec<f64>,
}

impl AsciiGrid {
    pub fn new(spec: &GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::Dimension(format!("{} values for a {}x{} grid", values.len(), spec.nx, spec.ny)));
        }
        Ok(AsciiGrid {
            ncols: spec.nx,
            nrows: spec.ny,
            xllcorner: spec.x_min,
            yllcorner: spec.y_min,
            cellsize: spec.cell_size,
            values,
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            nx: self.ncols,
            ny: self.nrows,
            x_min: self.xllcorner,
            y_min: self.yllcorner,
            cell_size: self.cellsize,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    /// Value of the cell containing `(x, y)`, `None` outside the grid or on
    /// a no-data cell.
    pub fn value_at(&self, x: f64, y: f64) -> Option<f64> {
        let col = ((x - self.xllcorner) / self.cellsize).floor();
        let row_from_south = ((y - self.yllcorner) / self.cellsize).floor();
        if col < 0.0 || row_from_south < 0.0 {
            return None;
        }
        let (col, rs) = (col as usize, row_from_south as usize);
        if col >= self.ncols || rs >= self.nrows {
            return None;
        }
        let v = self.get(self.nrows - 1 - rs, col);
        (v != NODATA).then_some(v)
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols {}", self.ncols);
        let _ = writeln!(s, "nrows {}", self.nrows);
        let _ = writeln!(s, "xllcorner {}", self.xllcorner);
        let _ = writeln!(s, "yllcorner {}", self.yllcorner);
        let _ = writeln!(s, "cellsize {}", self.cellsize);
        let _ = writeln!(s, "NODATA_value {}", NODATA);
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<f64> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("missing header {key}")))?;
            let mut parts = line.split_whitespace();
            let k = parts.next().unwrap_or("");
            if !k.eq_ignore_ascii_case(key) {
                return Err(Error::parse(path, i as u64 + 1, format!("expected {key}, found {k}")));
            }
            parts
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::parse(path, i as u64 + 1, format!("bad value for {key}")))
        };
        let ncols = header("ncols")?;
        let nrows = header("nrows")?;
        let xll = header("xllcorner")?;
        let yll = header("yllcorner")?;
        let cellsize = header("cellsize")?;
        let nodata = header("NODATA_value")?;
        if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 || !(cellsize > 0.0) {
            return Err(Error::parse(path, 1, "grid dimensions must be positive integers"));
        }
        let (ncols, nrows) = (ncols as usize, nrows as usize);
        let mut values = Vec::with_capacity(ncols * nrows);
        for (i, line) in lines {
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(path, i as u64 + 1, format!("bad value {tok:?}")))?;
                values.push(if v == nodata { NODATA } else { v });
            }
            if values.len() - before != ncols {
                return Err(Error::parse(path, i as u64 + 1, format!("expected {ncols} values")));
            }
        }
        if values.len() != ncols * nrows {
            return Err(Error::parse(path, 0, format!("expected {nrows} rows of values")));
        }
        Ok(AsciiGrid {
            ncols,
            nrows,
            xllcorner: xll,
            yllcorner: yll,
            cellsize,
            values,
        })
    }
}

/// A regular grid of `nx × ny` square cells anchored at its south-west corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub y_min: f64,
    pub cell_size: f64,
}

impl GridSpec {
    /// Grid covering `[x_min, x_min + extent] × [y_min, y_min + extent]`.
    pub fn square(n: usize, x_min: f64, y_min: f64, extent: f64) -> Self {
        GridSpec {
            nx: n,
            ny: n,
            x_min,
            y_min,
            cell_size: extent / n as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Validation("grid needs at least one cell".into()));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::Validation(format!("cell size must be positive, got {}", self.cell_size)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(x_min, y_min, x_max, y_max)`.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        (
            self.x_min,
            self.y_min,
            self.x_min + self.nx as f64 * self.cell_size,
            self.y_min + self.ny as f64 * self.cell_size,
        )
    }

    /// Cell centres in raster order.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.len());
        for row in 0..self.ny {
            let y = self.y_min + (self.ny - row) as f64 * self.cell_size - 0.5 * self.cell_size;
            for col in 0..self.nx {
                out.push([self.x_min + (col as f64 + 0.5) * self.cell_size, y]);
            }
        }
        out
    }
}
