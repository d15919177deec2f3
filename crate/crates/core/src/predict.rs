//! Posterior predictive probabilities and counts at new locations.
//!
//! For each retained draw, the residual field `W = t − Xβ` at the training
//! sites is conditioned on to simulate `U` at the targets, an independent
//! nugget `Z` is added, and `p = logistic(X_target β + U + Z)`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::ConditionalField;
use crate::data::{build_design_matrix_with, DesignConstants, SpatialDataset};
use crate::error::{Error, Result};
use crate::link::logistic;
use crate::mcmc::{ChainOutput, Draw};
use crate::raster::{AsciiGrid, GridSpec, NODATA};
use crate::rng::{derive_seed, seeded};

/// Grids with more cells than this are simulated cell by cell rather than
/// jointly.
pub const DEFAULT_MAX_JOINT_CELLS: usize = 2500;

/// Probabilities `[draw × site]`, optionally with simulated counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDraws {
    pub probs: DMatrix<f64>,
    pub counts: Option<Vec<Vec<u64>>>,
    pub site_ids: Vec<String>,
    /// Chain index of each row; draws that failed are absent.
    pub draw_index: Vec<usize>,
}

impl PredictionDraws {
    pub fn n_draws(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.probs.ncols()
    }

    /// Posterior mean probability per site.
    pub fn mean_probs(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|j| self.probs.column(j).mean()).collect()
    }

    /// Writes `draw,<site ids...>` probability rows.
    pub fn probs_to_csv(&self) -> String {
        let mut s = format!("draw,{}\n", self.site_ids.join(","));
        for (r, &m) in self.draw_index.iter().enumerate() {
            s.push_str(&m.to_string());
            for v in self.probs.row(r).iter() {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }

    /// Writes `draw,<site ids...>` count rows, if counts were drawn.
    pub fn counts_to_csv(&self) -> Option<String> {
        let counts = self.counts.as_ref()?;
        let mut s = format!("draw,{}\n", self.site_ids.join(","));
        for (row, &m) in counts.iter().zip(&self.draw_index) {
            s.push_str(&m.to_string());
            for v in row {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        Some(s)
    }
}

/// Evenly strided indices `⌊k N / m⌋`, all of them when `m ≥ N`.
pub fn strided_indices(n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    (0..m).map(|k| k * n / m).collect()
}

/// How `U` is simulated across targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    /// One draw from the joint conditional distribution.
    Joint,
    /// Independent draws from each target's conditional marginal.
    Marginal,
}

/// One row of predictions for a single chain draw.
fn predict_one(
    draw: &Draw,
    kappa: f64,
    train_coords: &[[f64; 2]],
    x_train: &DMatrix<f64>,
    target_coords: &[[f64; 2]],
    x_targets: &DMatrix<f64>,
    mode: FieldMode,
    seed: u64,
) -> Result<Vec<f64>> {
    let model = draw.theta.model(kappa);
    let mut rng = seeded(seed);
    let m = target_coords.len();
    let u = if model.sigma2 == 0.0 {
        DVector::zeros(m)
    } else {
        let w = &draw.t - x_train * &draw.beta;
        let field = ConditionalField::new(train_coords, &w, &model)?;
        match mode {
            FieldMode::Joint => field.draw(target_coords, &mut rng)?.1,
            FieldMode::Marginal => {
                let mut u = DVector::zeros(m);
                for (j, &c) in target_coords.iter().enumerate() {
                    let (mean, var) = field.moments(&[c]);
                    let sd = var[(0, 0)].max(0.0).sqrt();
                    u[j] = mean[0] + sd * rng.sample::<f64, _>(StandardNormal);
                }
                u
            }
        }
    };
    let tau = model.tau2.sqrt();
    let eta = x_targets * &draw.beta;
    Ok((0..m)
        .map(|j| {
            let z = if tau > 0.0 {
                tau * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            logistic(eta[j] + u[j] + z)
        })
        .collect())
}

/// Predictions at explicit coordinates for the chain draws in `draws`.
/// Draw `m` uses the stream `derive_seed(seed, m)`.
#[allow(clippy::too_many_arguments)]
pub fn predict_at(
    chain: &ChainOutput,
    draws: &[usize],
    train_coords: &[[f64; 2]],
    x_train: &DMatrix<f64>,
    target_coords: &[[f64; 2]],
    x_targets: &DMatrix<f64>,
    site_ids: Vec<String>,
    mode: FieldMode,
    seed: u64,
) -> Result<PredictionDraws> {
    if chain.is_empty() {
        return Err(Error::Validation("chain has no draws".into()));
    }
    if x_train.nrows() != train_coords.len() || x_targets.nrows() != target_coords.len() {
        return Err(Error::Dimension("design rows do not match coordinates".into()));
    }
    if site_ids.len() != target_coords.len() {
        return Err(Error::Dimension("one id per target required".into()));
    }
    let rows: Vec<(usize, Result<Vec<f64>>)> = draws
        .par_iter()
        .map(|&m| {
            let d = &chain.draws[m];
            let r = predict_one(
                d,
                chain.kappa,
                train_coords,
                x_train,
                target_coords,
                x_targets,
                mode,
                derive_seed(seed, m as u64),
            );
            (m, r)
        })
        .collect();
    let mut kept = Vec::with_capacity(rows.len());
    let mut draw_index = Vec::with_capacity(rows.len());
    for (m, r) in rows {
        match r {
            Ok(v) => {
                kept.push(v);
                draw_index.push(m);
            }
            Err(e) => warn!("draw {m} skipped: {e}"),
        }
    }
    if kept.is_empty() {
        return Err(Error::Validation("every posterior draw failed to predict".into()));
    }
    let n = target_coords.len();
    let probs = DMatrix::from_fn(kept.len(), n, |r, j| kept[r][j]);
    Ok(PredictionDraws {
        probs,
        counts: None,
        site_ids,
        draw_index,
    })
}

/// Predictions at validation plots for every chain draw.
pub fn predict_sites(
    chain: &ChainOutput,
    train: &SpatialDataset,
    x_train: &DMatrix<f64>,
    targets: &SpatialDataset,
    x_targets: &DMatrix<f64>,
    seed: u64,
) -> Result<PredictionDraws> {
    let train_ids: std::collections::HashSet<&str> = train.records.iter().map(|r| r.id.as_str()).collect();
    if let Some(r) = targets.records.iter().find(|r| train_ids.contains(r.id.as_str())) {
        return Err(Error::Validation(format!("target `{}` is also a training site", r.id)));
    }
    let all: Vec<usize> = (0..chain.len()).collect();
    predict_at(
        chain,
        &all,
        &train.coords(),
        x_train,
        &targets.coords(),
        x_targets,
        targets.ids(),
        FieldMode::Joint,
        seed,
    )
}

/// Elevation and vegetation rasters covering the prediction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRasters {
    pub elevation: AsciiGrid,
    pub vegetation: AsciiGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPrediction {
    /// Columns are the grid cells with covariates, in raster order.
    pub draws: PredictionDraws,
    /// Raster index of each prediction column.
    pub cells: Vec<usize>,
    pub mean: AsciiGrid,
    /// Per-draw rasters for the first few retained draws.
    pub samples: Vec<AsciiGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Number of chain draws used, evenly strided.
    pub draw_subsample: usize,
    /// Per-draw rasters to keep.
    pub sample_rasters: usize,
    pub max_joint_cells: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            draw_subsample: 1000,
            sample_rasters: 4,
            max_joint_cells: DEFAULT_MAX_JOINT_CELLS,
        }
    }
}

/// Predicts every grid cell whose centre has covariate values.
#[allow(clippy::too_many_arguments)]
pub fn predict_grid(
    chain: &ChainOutput,
    train: &SpatialDataset,
    x_train: &DMatrix<f64>,
    fields: &CovariateRasters,
    grid: &GridSpec,
    design: &DesignConstants,
    options: &GridOptions,
    seed: u64,
) -> Result<GridPrediction> {
    grid.validate()?;
    let centers = grid.centers();
    let mut cells = Vec::new();
    let mut coords = Vec::new();
    let mut rows = Vec::new();
    for (k, &c) in centers.iter().enumerate() {
        if let (Some(e), Some(v)) = (fields.elevation.value_at(c[0], c[1]), fields.vegetation.value_at(c[0], c[1])) {
            cells.push(k);
            coords.push(c);
            rows.push(design.row(e, v));
        }
    }
    if cells.is_empty() {
        return Err(Error::Missing("covariate rasters do not cover any grid cell".into()));
    }
    let x_cells = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
    let ids = cells.iter().map(|k| format!("cell{k}")).collect();
    let mode = if cells.len() <= options.max_joint_cells {
        FieldMode::Joint
    } else {
        warn!(
            "{} cells exceed the joint limit of {}; simulating cells independently",
            cells.len(),
            options.max_joint_cells
        );
        FieldMode::Marginal
    };
    let chosen = strided_indices(chain.len(), options.draw_subsample.max(1));
    let draws = predict_at(chain, &chosen, &train.coords(), x_train, &coords, &x_cells, ids, mode, seed)?;

    let to_raster = |vals: &[f64]| -> Result<AsciiGrid> {
        let mut v = vec![NODATA; grid.len()];
        for (&k, &x) in cells.iter().zip(vals) {
            v[k] = x;
        }
        AsciiGrid::new(grid, v)
    };
    let mean = to_raster(&draws.mean_probs())?;
    let samples = (0..options.sample_rasters.min(draws.n_draws()))
        .map(|r| to_raster(&draws.probs.row(r).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(GridPrediction {
        draws,
        cells,
        mean,
        samples,
    })
}

/// `counts[m][j] ~ Binomial(n_j, probs[m][j])`, row `r` drawn from stream
/// `derive_seed(seed, r)`.
pub fn draw_counts(preds: &PredictionDraws, n_targets: &[u64], seed: u64) -> Result<Vec<Vec<u64>>> {
    if n_targets.len() != preds.n_sites() {
        return Err(Error::Dimension(format!(
            "{} totals for {} sites",
            n_targets.len(),
            preds.n_sites()
        )));
    }
    (0..preds.n_draws())
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded(derive_seed(seed, r as u64));
            (0..preds.n_sites())
                .map(|j| {
                    let p = preds.probs[(r, j)].clamp(0.0, 1.0);
                    Binomial::new(n_targets[j], p)
                        .map(|b| b.sample(&mut rng))
                        .map_err(|e| Error::InvalidParameter(e.to_string()))
                })
                .collect()
        })
        .collect()
}

/// Design matrix for a target dataset with the default constants.
pub fn target_design(targets: &SpatialDataset) -> DMatrix<f64> {
    build_design_matrix_with(targets, &DesignConstants::default()).0
}
