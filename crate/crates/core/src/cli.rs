//! Command-line workflow: simulate, subsample, fit, glm, predict, assess,
//! and `pipeline` to run them in order.
//!
//! Every stage writes `name.partial` files and renames them once the stage
//! has finished, so a failed stage leaves its partial outputs behind. After a
//! successful command `manifest.csv` lists every file in the output
//! directory with its line count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use nalgebra::DMatrix;

use crate::assess::{assess_model, report_to_csv, totals_to_csv, ModelAssessment};
use crate::config::{load_config, RunConfig, SubsampleMethod};
use crate::data::{
    build_design_matrix_with, load_dataset, load_split, split_to_string, dataset_to_string, SpatialDataset, SplitSpec,
};
use crate::error::{Error, Result};
use crate::glm::{glm_parametric_counts, glm_predict_probs, irls_fit};
use crate::mcmc::{read_chain_csv, run_chains, write_chain_csv, write_diagnostics};
use crate::predict::{draw_counts, predict_grid, predict_sites, CovariateRasters, GridOptions, PredictionDraws};
use crate::raster::{AsciiGrid, GridSpec};
use crate::rng::derive_seed;
use crate::sampling::{make_strata, random_subsample, stratified_subsample};
use crate::synthetic::generate_synthetic_dataset;

pub const DATASET: &str = "dataset.csv";
pub const TRUTH: &str = "truth.csv";
pub const SPLIT: &str = "split.txt";
pub const TRAINING: &str = "training.txt";
pub const STRATA: &str = "strata.csv";
pub const ELEVATION: &str = "elevation.asc";
pub const VEGETATION: &str = "vegetation.asc";
pub const CHAIN: &str = "chain.csv";
pub const CHAIN_SUMMARY: &str = "chain_summary.csv";
pub const CHAIN_STEPS: &str = "chain_steps.csv";
pub const GLM_FIT: &str = "glm_fit.csv";
pub const GLM_PROBS: &str = "glm_probs.csv";
pub const GLM_COUNTS: &str = "glm_counts.csv";
pub const PRED_PROBS: &str = "pred_probs.csv";
pub const PRED_COUNTS: &str = "pred_counts.csv";
pub const GRID_MEAN: &str = "grid_mean.asc";
pub const ASSESSMENT: &str = "assessment.csv";
pub const TOTALS: &str = "totals.csv";
pub const REPLICATIONS: &str = "replications.csv";
pub const MANIFEST: &str = "manifest.csv";

/// Stream offsets under the master seed, one per source of randomness.
mod stream {
    pub const SIMULATE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SUBSAMPLE: u64 = 3;
    pub const STRATA: u64 = 4;
    pub const FIT: u64 = 5;
    pub const GLM: u64 = 6;
    pub const PREDICT: u64 = 7;
    pub const COUNTS: u64 = 8;
    pub const GRID: u64 = 9;
    pub const REPLICATION: u64 = 100;
}

#[derive(Debug, Parser)]
#[command(name = "glgm", version, about = "Bayesian spatial binomial regression for plot counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// key=value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate (or load) a dataset and a train/validation split.
    Simulate,
    /// Choose the training subset from the training pool.
    Subsample,
    /// Run the sampler on the training subset.
    Fit,
    /// Fit the logistic-regression baseline.
    Glm,
    /// Predict the validation plots and the covariate grid.
    Predict,
    /// Compare both models against the validation counts.
    Assess,
    /// All stages in order, once per replication.
    Pipeline,
}

/// Stage outputs go to `*.partial` until [`commit`](Self::commit).
struct Stage<'a> {
    dir: &'a Path,
    pending: Vec<(PathBuf, PathBuf)>,
}

impl<'a> Stage<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Stage {
            dir,
            pending: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let fin = self.dir.join(name);
        let partial = self.dir.join(format!("{name}.partial"));
        self.pending.push((partial.clone(), fin));
        partial
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(p, contents)?;
        Ok(())
    }

    fn commit(self) -> Result<()> {
        for (partial, fin) in self.pending {
            fs::rename(partial, fin)?;
        }
        Ok(())
    }
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::Missing(format!("{} (run the earlier stage first)", p.display())))
    }
}

/// Writes the dataset, split and, for simulated data, the truth record and
/// covariate rasters.
pub fn simulate(config: &RunConfig, dir: &Path) -> Result<()> {
    let mut stage = Stage::new(dir)?;
    let data = match &config.data_path {
        Some(path) => load_dataset(path)?,
        None => {
            let synth = crate::synthetic::SyntheticConfig {
                seed: derive_seed(config.seed, stream::SIMULATE),
                ..config.synthetic.clone()
            };
            let out = generate_synthetic_dataset(&synth)?;
            let grid = GridSpec::square(synth.raster_cells, 0.0, 0.0, synth.extent_km);
            let (elev, veg) = out.surfaces.rasters(&grid)?;
            stage.write(ELEVATION, &elev.to_ascii())?;
            stage.write(VEGETATION, &veg.to_ascii())?;
            stage.write(TRUTH, &out.truth.to_csv())?;
            out.data
        }
    };
    if config.validation_size + 2 > data.len() {
        return Err(Error::Validation(format!(
            "{} sites cannot hold {} validation sites and a training set",
            data.len(),
            config.validation_size
        )));
    }
    let validation_ids = random_subsample(&data, config.validation_size, derive_seed(config.seed, stream::SPLIT))?;
    let split = pool_split(&data, validation_ids);
    stage.write(DATASET, &dataset_to_string(&data))?;
    stage.write(SPLIT, &split_to_string(&split))?;
    stage.commit()
}

fn pool_split(data: &SpatialDataset, validation_ids: Vec<String>) -> SplitSpec {
    let v: std::collections::HashSet<&String> = validation_ids.iter().collect();
    SplitSpec {
        train_ids: data.ids().into_iter().filter(|id| !v.contains(id)).collect(),
        validation_ids,
    }
}

/// Selects the training subset from the pool in `split.txt`.
pub fn subsample(config: &RunConfig, dir: &Path) -> Result<()> {
    let data = load_dataset(require(dir, DATASET)?)?;
    let split = load_split(require(dir, SPLIT)?)?;
    let pool = data.select(&split.train_ids)?;
    let mut stage = Stage::new(dir)?;
    let size = config.subsample.size.min(pool.len());
    let train_ids = match config.subsample.method {
        SubsampleMethod::All => pool.ids(),
        SubsampleMethod::Random => random_subsample(&pool, size, derive_seed(config.seed, stream::SUBSAMPLE))?,
        SubsampleMethod::Stratified => {
            let strata = make_strata(&pool, config.subsample.strata, derive_seed(config.seed, stream::STRATA))?;
            stage.write(STRATA, &strata.to_csv(&pool))?;
            stratified_subsample(&pool, &strata, size)?
        }
    };
    let training = SplitSpec {
        train_ids,
        validation_ids: split.validation_ids,
    };
    training.validate()?;
    stage.write(TRAINING, &split_to_string(&training))?;
    stage.commit()
}

fn load_training(dir: &Path) -> Result<(SpatialDataset, SpatialDataset, SpatialDataset)> {
    let data = load_dataset(require(dir, DATASET)?)?;
    let split = load_split(require(dir, TRAINING)?)?;
    let train = data.select(&split.train_ids)?;
    let validation = data.select(&split.validation_ids)?;
    Ok((data, train, validation))
}

/// Runs the configured number of chains and writes the pooled chain.
pub fn fit(config: &RunConfig, dir: &Path) -> Result<()> {
    let (_, train, _) = load_training(dir)?;
    let x = build_design_matrix_with(&train, &config.design);
    let mcmc = crate::mcmc::McmcConfig {
        seed: derive_seed(config.seed, stream::FIT),
        ..config.mcmc.clone()
    };
    info!("fitting {} training sites, {} chain(s)", train.len(), config.chains);
    let chains = run_chains(&train, &x, &config.prior, &mcmc, config.chains)?;
    let mut stage = Stage::new(dir)?;
    write_chain_csv(stage.path(CHAIN), &chains)?;
    let summary = stage.path(CHAIN_SUMMARY);
    let steps = stage.path(CHAIN_STEPS);
    write_diagnostics(summary, steps, &chains)?;
    stage.commit()
}

fn glm_draw_count(config: &RunConfig) -> usize {
    if config.glm_draws > 0 {
        config.glm_draws
    } else {
        config.mcmc.n_draws() * config.chains
    }
}

/// Fits the baseline on the training subset and simulates validation counts.
pub fn glm(config: &RunConfig, dir: &Path) -> Result<()> {
    let (_, train, validation) = load_training(dir)?;
    let fit = irls_fit(build_design_matrix_with(&train, &config.design).matrix(), &train.counts(), &train.totals())?;
    if let Some(d) = &fit.diagnostics {
        log::warn!("logistic fit: {d}");
    }
    let mut stage = Stage::new(dir)?;
    let mut s = String::from("coefficient,estimate,std_error\n");
    for j in 0..fit.beta_hat.len() {
        let _ = writeln!(s, "beta{j},{},{}", fit.beta_hat[j], fit.cov_hat[(j, j)].max(0.0).sqrt());
    }
    let _ = writeln!(s, "deviance,{},", fit.deviance);
    let _ = writeln!(s, "converged,{},", u8::from(fit.converged));
    stage.write(GLM_FIT, &s)?;
    let p_hat = glm_predict_probs(&fit, build_design_matrix_with(&validation, &config.design).matrix());
    let mut s = String::from("id,p_hat\n");
    for (id, p) in validation.ids().iter().zip(&p_hat) {
        let _ = writeln!(s, "{id},{p}");
    }
    stage.write(GLM_PROBS, &s)?;
    let counts = glm_parametric_counts(&p_hat, &validation.totals(), glm_draw_count(config), derive_seed(config.seed, stream::GLM))?;
    stage.write(GLM_COUNTS, &matrix_csv(&validation.ids(), &counts))?;
    stage.commit()
}

fn matrix_csv(ids: &[String], rows: &[Vec<u64>]) -> String {
    let mut s = format!("draw,{}\n", ids.join(","));
    for (k, r) in rows.iter().enumerate() {
        s.push_str(&k.to_string());
        for v in r {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

/// Reads a `draw,<ids...>` file into its ids and rows.
pub fn read_matrix_csv<T: std::str::FromStr>(path: &Path) -> Result<(Vec<String>, Vec<Vec<T>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let mut cols = header.split(',');
    if cols.next() != Some("draw") {
        return Err(Error::parse(path, 1, "expected header draw,<ids>"));
    }
    let ids: Vec<String> = cols.map(String::from).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .skip(1)
            .map(|v| v.parse::<T>().map_err(|_| Error::parse(path, i as u64 + 2, format!("bad value `{v}`"))))
            .collect::<Result<Vec<T>>>()?;
        if vals.len() != ids.len() {
            return Err(Error::parse(path, i as u64 + 2, "wrong number of fields"));
        }
        rows.push(vals);
    }
    Ok((ids, rows))
}

/// Predicts validation plots from the chain and, when covariate rasters are
/// present, the grid.
pub fn predict(config: &RunConfig, dir: &Path) -> Result<()> {
    let (_, train, validation) = load_training(dir)?;
    let chain = read_chain_csv(require(dir, CHAIN)?, config.mcmc.kappa)?;
    if chain.draws[0].t.len() != train.len() {
        return Err(Error::Dimension(format!(
            "chain has {} latent values, training set has {} sites",
            chain.draws[0].t.len(),
            train.len()
        )));
    }
    let x_train = build_design_matrix_with(&train, &config.design).0;
    let x_val = build_design_matrix_with(&validation, &config.design).0;
    let mut preds = predict_sites(&chain, &train, &x_train, &validation, &x_val, derive_seed(config.seed, stream::PREDICT))?;
    preds.counts = Some(draw_counts(&preds, &validation.totals(), derive_seed(config.seed, stream::COUNTS))?);

    let mut stage = Stage::new(dir)?;
    stage.write(PRED_PROBS, &preds.probs_to_csv())?;
    stage.write(PRED_COUNTS, &preds.counts_to_csv().unwrap_or_default())?;

    let (elev, veg) = (dir.join(ELEVATION), dir.join(VEGETATION));
    if config.predict.grid && elev.exists() && veg.exists() {
        let fields = CovariateRasters {
            elevation: AsciiGrid::read(&elev)?,
            vegetation: AsciiGrid::read(&veg)?,
        };
        let grid = fields.elevation.spec();
        let options = GridOptions {
            draw_subsample: config.predict.grid_draws,
            sample_rasters: config.predict.sample_rasters,
            max_joint_cells: config.predict.max_joint_cells,
        };
        let out = predict_grid(
            &chain,
            &train,
            &x_train,
            &fields,
            &grid,
            &config.design,
            &options,
            derive_seed(config.seed, stream::GRID),
        )?;
        stage.write(GRID_MEAN, &out.mean.to_ascii())?;
        for (k, r) in out.samples.iter().enumerate() {
            stage.write(&format!("grid_sample_{}.asc", k + 1), &r.to_ascii())?;
        }
    }
    stage.commit()
}

fn mean_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len().max(1) as f64;
    let m = rows.first().map_or(0, Vec::len);
    (0..m).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Assesses both models; returns `(bglgm, glm)`.
pub fn assess(_config: &RunConfig, dir: &Path) -> Result<(ModelAssessment, ModelAssessment)> {
    let (_, _, validation) = load_training(dir)?;
    let ids = validation.ids();
    let truths = validation.counts();
    let totals = validation.totals();

    let (pid, probs) = read_matrix_csv::<f64>(&require(dir, PRED_PROBS)?)?;
    let (cid, counts) = read_matrix_csv::<u64>(&require(dir, PRED_COUNTS)?)?;
    let (gid, glm_counts) = read_matrix_csv::<u64>(&require(dir, GLM_COUNTS)?)?;
    if pid != ids || cid != ids || gid != ids {
        return Err(Error::Validation("prediction files do not match the validation sites".into()));
    }
    let glm_text = fs::read_to_string(require(dir, GLM_PROBS)?)?;
    let glm_p: Vec<f64> = glm_text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN))
        .collect();
    let bglgm = assess_model("bglgm", &ids, &counts, &mean_columns(&probs), &truths, &totals)?;
    let glm = assess_model("glm", &ids, &glm_counts, &glm_p, &truths, &totals)?;
    let both = [bglgm, glm];
    let mut stage = Stage::new(dir)?;
    stage.write(ASSESSMENT, &report_to_csv(&both))?;
    stage.write(TOTALS, &totals_to_csv(&both))?;
    stage.commit()?;
    let [b, g] = both;
    Ok((b, g))
}

/// All stages for one replication.
pub fn pipeline_once(config: &RunConfig, dir: &Path) -> Result<(ModelAssessment, ModelAssessment)> {
    simulate(config, dir)?;
    subsample(config, dir)?;
    fit(config, dir)?;
    glm(config, dir)?;
    predict(config, dir)?;
    assess(config, dir)
}

/// Runs `config.replications` pipelines. With one replication outputs go to
/// `dir`; otherwise to `dir/rep_NN` with per-replication seeds and a
/// `replications.csv` summary.
pub fn pipeline(config: &RunConfig, dir: &Path) -> Result<()> {
    if config.replications == 1 {
        pipeline_once(config, dir)?;
        return Ok(());
    }
    let mut s = String::from("replication,seed,model,rmse,total_lo,total_hi,total_truth,total_covered\n");
    for r in 0..config.replications {
        let seed = derive_seed(config.seed, stream::REPLICATION + r as u64);
        let rep = RunConfig {
            seed,
            ..config.clone()
        };
        let sub = dir.join(format!("rep_{:02}", r + 1));
        info!("replication {} of {}", r + 1, config.replications);
        let (b, g) = pipeline_once(&rep, &sub)?;
        for m in [&b, &g] {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r + 1,
                seed,
                m.model,
                m.rmse,
                m.total.interval.0,
                m.total.interval.1,
                m.total.truth,
                u8::from(m.total.covered)
            );
        }
    }
    let mut stage = Stage::new(dir)?;
    stage.write(REPLICATIONS, &s)?;
    stage.commit()
}

/// `path,rows` for every file under `dir`, sorted by path.
pub fn write_manifest(dir: &Path) -> Result<()> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, usize)>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                let rel = path.strip_prefix(base).unwrap_or(&path).to_string_lossy().replace('\\', "/");
                if rel == MANIFEST {
                    continue;
                }
                let rows = fs::read(&path)?.iter().filter(|&&b| b == b'\n').count();
                out.push((rel, rows));
            }
        }
        Ok(())
    }
    let mut entries = Vec::new();
    walk(dir, dir, &mut entries)?;
    entries.sort();
    let mut s = String::from("path,rows\n");
    for (p, r) in entries {
        let _ = writeln!(s, "{p},{r}");
    }
    fs::write(dir.join(MANIFEST), s)?;
    Ok(())
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(cli)?;
    let dir = cli.out.as_path();
    match cli.command {
        Command::Simulate => simulate(&config, dir)?,
        Command::Subsample => subsample(&config, dir)?,
        Command::Fit => fit(&config, dir)?,
        Command::Glm => glm(&config, dir)?,
        Command::Predict => predict(&config, dir)?,
        Command::Assess => {
            assess(&config, dir)?;
        }
        Command::Pipeline => pipeline(&config, dir)?,
    }
    write_manifest(dir)
}

/// Reads a predictions file back, e.g. for plotting or re-assessment.
pub fn read_predictions(path: &Path) -> Result<PredictionDraws> {
    let (ids, rows) = read_matrix_csv::<f64>(path)?;
    let probs = DMatrix::from_fn(rows.len(), ids.len(), |r, j| rows[r][j]);
    Ok(PredictionDraws {
        draw_index: (0..rows.len()).collect(),
        probs,
        counts: None,
        site_ids: ids,
    })
}

