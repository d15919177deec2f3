//! Synthetic plot data drawn from the model itself, with smooth covariate
//! surfaces that can also be rasterized for map prediction.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};

use crate::covariance::{unconditional_field_draw_with, CovarianceModel};
use crate::data::{build_design_matrix_with, DesignConstants, PlotRecord, SpatialDataset};
use crate::error::{Error, Result};
use crate::link::logistic;
use crate::raster::{AsciiGrid, GridSpec};
use crate::rng::{derive_seed, seeded, SeededRng};

/// How many trees each plot holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TotalLaw {
    Fixed(u64),
    /// Uniform on the inclusive range.
    Range(u64, u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_sites: usize,
    /// Sites are uniform on `[0, extent_km]²`.
    pub extent_km: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    pub phi: f64,
    pub kappa: f64,
    pub n_total: TotalLaw,
    /// Correlation length of the covariate surfaces, km.
    pub covariate_length_km: f64,
    /// Random Fourier features per covariate surface.
    pub covariate_features: usize,
    /// Cells per side of the emitted covariate rasters.
    pub raster_cells: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_sites: 60,
            extent_km: 100.0,
            beta: vec![-1.0, 0.5, 0.8, 0.6],
            sigma2: 0.25,
            tau2: 1.0,
            phi: 20.0,
            kappa: 1.5,
            n_total: TotalLaw::Range(5, 30),
            covariate_length_km: 25.0,
            covariate_features: 200,
            raster_cells: 20,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn covariance_model(&self) -> Result<CovarianceModel> {
        CovarianceModel::new(self.sigma2, self.tau2, self.phi, self.kappa)
    }

    pub fn validate(&self) -> Result<()> {
        self.covariance_model()?;
        if self.n_sites == 0 {
            return Err(Error::Validation("synthetic.n_sites must be at least 1".into()));
        }
        if self.beta.len() != 4 {
            return Err(Error::Validation(format!("synthetic.beta needs 4 entries, got {}", self.beta.len())));
        }
        if !(self.extent_km > 0.0) || !(self.covariate_length_km > 0.0) {
            return Err(Error::Validation("synthetic extents must be positive".into()));
        }
        if self.covariate_features == 0 || self.raster_cells == 0 {
            return Err(Error::Validation("synthetic feature and raster counts must be positive".into()));
        }
        match self.n_total {
            TotalLaw::Fixed(0) => Err(Error::Validation("synthetic.n_total must be at least 1".into())),
            TotalLaw::Range(lo, hi) if lo == 0 || lo > hi => {
                Err(Error::Validation(format!("bad synthetic.n_total range {lo}..{hi}")))
            }
            _ => Ok(()),
        }
    }
}

/// A stationary smooth surface with unit marginal variance, built from
/// random Fourier features of a squared-exponential kernel.
#[derive(Debug, Clone)]
pub struct SmoothSurface {
    freqs: Vec<[f64; 2]>,
    phases: Vec<f64>,
}

impl SmoothSurface {
    pub fn new(length_km: f64, features: usize, rng: &mut SeededRng) -> Self {
        let normal = Normal::new(0.0, 1.0 / length_km).expect("positive length");
        let freqs = (0..features).map(|_| [normal.sample(rng), normal.sample(rng)]).collect();
        let phases = (0..features).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        SmoothSurface { freqs, phases }
    }

    pub fn eval(&self, s: [f64; 2]) -> f64 {
        let scale = (2.0 / self.freqs.len() as f64).sqrt();
        scale
            * self
                .freqs
                .iter()
                .zip(&self.phases)
                .map(|(w, b)| (w[0] * s[0] + w[1] * s[1] + b).cos())
                .sum::<f64>()
    }
}

/// Elevation (m) and vegetation index as functions of location.
#[derive(Debug, Clone)]
pub struct CovariateSurfaces {
    elevation: SmoothSurface,
    vegetation: SmoothSurface,
}

impl CovariateSurfaces {
    pub fn elevation(&self, s: [f64; 2]) -> f64 {
        320.0 + 50.0 * self.elevation.eval(s)
    }

    pub fn vegetation(&self, s: [f64; 2]) -> f64 {
        (0.3 + 0.1 * self.vegetation.eval(s)).clamp(0.0, 1.0)
    }

    /// `(elevation, vegetation)` rasters sampled at cell centres.
    pub fn rasters(&self, grid: &GridSpec) -> Result<(AsciiGrid, AsciiGrid)> {
        let centers = grid.centers();
        let elev = centers.iter().map(|&c| self.elevation(c)).collect();
        let veg = centers.iter().map(|&c| self.vegetation(c)).collect();
        Ok((AsciiGrid::new(grid, elev)?, AsciiGrid::new(grid, veg)?))
    }
}

/// The latent quantities behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    pub phi: f64,
    pub kappa: f64,
    pub ids: Vec<String>,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub t: Vec<f64>,
}

impl TruthRecord {
    pub fn probabilities(&self) -> Vec<f64> {
        self.t.iter().map(|&t| logistic(t)).collect()
    }

    /// Parameter lines `# key=value`, then `id,u,z,t,p`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let beta: Vec<String> = self.beta.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "# beta={}", beta.join(","));
        let _ = writeln!(s, "# sigma2={}", self.sigma2);
        let _ = writeln!(s, "# tau2={}", self.tau2);
        let _ = writeln!(s, "# phi={}", self.phi);
        let _ = writeln!(s, "# kappa={}", self.kappa);
        let _ = writeln!(s, "id,u,z,t,p");
        for i in 0..self.ids.len() {
            let _ = writeln!(s, "{},{},{},{},{}", self.ids[i], self.u[i], self.z[i], self.t[i], logistic(self.t[i]));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut truth = TruthRecord {
            beta: Vec::new(),
            sigma2: f64::NAN,
            tau2: f64::NAN,
            phi: f64::NAN,
            kappa: f64::NAN,
            ids: Vec::new(),
            u: Vec::new(),
            z: Vec::new(),
            t: Vec::new(),
        };
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let lineno = i as u64 + 1;
            let bad = |m: &str| Error::parse(path, lineno, m);
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.trim().split_once('=').ok_or_else(|| bad("expected key=value"))?;
                let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("bad number"));
                match k.trim() {
                    "beta" => truth.beta = v.split(',').map(num).collect::<Result<_>>()?,
                    "sigma2" => truth.sigma2 = num(v)?,
                    "tau2" => truth.tau2 = num(v)?,
                    "phi" => truth.phi = num(v)?,
                    "kappa" => truth.kappa = num(v)?,
                    other => return Err(bad(&format!("unknown key {other}"))),
                }
                continue;
            }
            if !header_seen {
                if line.trim() != "id,u,z,t,p" {
                    return Err(bad("expected header id,u,z,t,p"));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("bad number"));
            truth.ids.push(f[0].to_string());
            truth.u.push(num(f[1])?);
            truth.z.push(num(f[2])?);
            truth.t.push(num(f[3])?);
        }
        if !header_seen {
            return Err(Error::parse(path, 0, "missing header id,u,z,t,p"));
        }
        Ok(truth)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticOutput {
    pub data: SpatialDataset,
    pub truth: TruthRecord,
    pub surfaces: CovariateSurfaces,
}

pub fn generate_synthetic_dataset(config: &SyntheticConfig) -> Result<SyntheticOutput> {
    config.validate()?;
    let model = config.covariance_model()?;
    let mut surface_rng = seeded(derive_seed(config.seed, 0));
    let surfaces = CovariateSurfaces {
        elevation: SmoothSurface::new(config.covariate_length_km, config.covariate_features, &mut surface_rng),
        vegetation: SmoothSurface::new(config.covariate_length_km, config.covariate_features, &mut surface_rng),
    };

    let mut rng = seeded(derive_seed(config.seed, 1));
    let n = config.n_sites;
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(0.0..config.extent_km), rng.random_range(0.0..config.extent_km)])
        .collect();
    let totals: Vec<u64> = (0..n)
        .map(|_| match config.n_total {
            TotalLaw::Fixed(m) => m,
            TotalLaw::Range(lo, hi) => rng.random_range(lo..=hi),
        })
        .collect();
    let ids: Vec<String> = (1..=n).map(|i| format!("S{i:04}")).collect();
    let mut records: Vec<PlotRecord> = coords
        .iter()
        .zip(&ids)
        .zip(&totals)
        .map(|((&c, id), &m)| PlotRecord {
            id: id.clone(),
            x: c[0],
            y: c[1],
            n_total: m,
            y_hardwood: 0,
            elevation: surfaces.elevation(c),
            vegetation: surfaces.vegetation(c),
        })
        .collect();
    let draft = SpatialDataset::new(records.clone(), "synthetic, km")?;
    let x = build_design_matrix_with(&draft, &DesignConstants::default());

    let mut field_rng = seeded(derive_seed(config.seed, 2));
    let u = unconditional_field_draw_with(&draft.coords(), &model, &mut field_rng)?;
    let tau = config.tau2.sqrt();
    let z = DVector::from_iterator(n, (0..n).map(|_| tau * field_rng.sample::<f64, _>(StandardNormal)));
    let t = x.matrix() * DVector::from_column_slice(&config.beta) + &u + &z;

    let mut count_rng = seeded(derive_seed(config.seed, 3));
    for (r, &ti) in records.iter_mut().zip(t.iter()) {
        let p = logistic(ti);
        r.y_hardwood = Binomial::new(r.n_total, p)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(&mut count_rng);
    }
    let data = SpatialDataset::new(records, "synthetic, km")?;
    Ok(SyntheticOutput {
        data,
        truth: TruthRecord {
            beta: config.beta.clone(),
            sigma2: config.sigma2,
            tau2: config.tau2,
            phi: config.phi,
            kappa: config.kappa,
            ids,
            u: u.iter().copied().collect(),
            z: z.iter().copied().collect(),
            t: t.iter().copied().collect(),
        },
        surfaces,
    })
}
