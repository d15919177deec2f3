//! `key=value` run configuration with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; [`RunConfig::default`] documents the defaults. A `preset` line
//! is applied before all other keys regardless of where it appears.
//!
//! | key | default |
//! |---|---|
//! | `seed` | 1 |
//! | `replications` | 1 |
//! | `preset` | `desk` (`paper_scale`: 2,000,000 / 1,000,000 / 100) |
//! | `data.path` | unset: data are simulated |
//! | `synthetic.n_sites`, `.extent_km` | 60, 100 |
//! | `synthetic.beta` | -1,0.5,0.8,0.6 |
//! | `synthetic.sigma2`, `.tau2`, `.phi`, `.kappa` | 0.25, 1, 20, 1.5 |
//! | `synthetic.n_total_min`, `.n_total_max` | 5, 30 |
//! | `synthetic.covariate_length_km`, `.covariate_features`, `.raster_cells` | 25, 200, 20 |
//! | `split.validation` | 20 |
//! | `subsample.method` (`all`, `random`, `stratified`), `.size`, `.strata` | `all`, 40, 3 |
//! | `prior.beta_mean`, `prior.beta_var` | 0, 25 |
//! | `prior.sigma_rate`, `.tau_rate`, `.phi_shape` | 0.5, 0.5, 3 |
//! | `prior.phi_scale` | 35 km, times `extent_km / 300` for simulated data |
//! | `mcmc.iterations`, `.burn_in`, `.thin` | 100000, 50000, 10 |
//! | `mcmc.mala_h`, `.beta_step` | `1.65²/n^{1/3}`, `2.4/√p` |
//! | `mcmc.adapt_c1`, `.adapt_c2`, `.target_accept`, `.initial_step` | 1, 0.6, 0.45, 1 |
//! | `mcmc.kappa`, `mcmc.chains` | 1.5, 1 |
//! | `predict.grid`, `.grid_draws`, `.sample_rasters`, `.max_joint_cells` | true, 1000, 4, 2500 |
//! | `glm.draws` | 0: as many as the chain keeps |
//! | `design.elevation_center`, `.elevation_scale` | 320, 50 |
//! | `design.vegetation_change`, `.vegetation_scale` | 0.3, 0.05 |
//!
//! The `design.*` keys change the covariates both models are fitted on.
//! Simulated truths always use the defaults.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::DesignConstants;
use crate::error::{Error, Result};
use crate::mcmc::McmcConfig;
use crate::predict::DEFAULT_MAX_JOINT_CELLS;
use crate::reparam::PriorSpec;
use crate::synthetic::{SyntheticConfig, TotalLaw};

/// Study extent the default range prior refers to, km.
pub const REFERENCE_EXTENT_KM: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsampleMethod {
    All,
    Random,
    Stratified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleConfig {
    pub method: SubsampleMethod,
    pub size: usize,
    pub strata: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictConfig {
    pub grid: bool,
    pub grid_draws: usize,
    pub sample_rasters: usize,
    pub max_joint_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub replications: usize,
    pub data_path: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub validation_size: usize,
    pub subsample: SubsampleConfig,
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
    pub chains: usize,
    pub predict: PredictConfig,
    /// Parametric GLM draws; 0 matches the number of chain draws.
    pub glm_draws: usize,
    /// Covariate centring and scaling used by both fitted models.
    pub design: DesignConstants,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synthetic = SyntheticConfig::default();
        let mut prior = PriorSpec::default_for(4);
        prior.phi_scale *= synthetic.extent_km / REFERENCE_EXTENT_KM;
        RunConfig {
            seed: 1,
            replications: 1,
            data_path: None,
            synthetic,
            validation_size: 20,
            subsample: SubsampleConfig {
                method: SubsampleMethod::All,
                size: 40,
                strata: 3,
            },
            prior,
            mcmc: McmcConfig::default(),
            chains: 1,
            predict: PredictConfig {
                grid: true,
                grid_draws: 1000,
                sample_rasters: 4,
                max_joint_cells: DEFAULT_MAX_JOINT_CELLS,
            },
            glm_draws: 0,
            design: DesignConstants::default(),
        }
    }
}

/// Named iteration presets.
pub fn apply_preset(config: &mut RunConfig, name: &str) -> std::result::Result<(), String> {
    let (it, burn, thin) = match name {
        "desk" => (100_000, 50_000, 10),
        "paper_scale" => (2_000_000, 1_000_000, 100),
        "smoke" => (2_000, 1_000, 10),
        other => return Err(format!("unknown preset `{other}` (desk, paper_scale, smoke)")),
    };
    config.mcmc.iterations = it;
    config.mcmc.burn_in = burn;
    config.mcmc.thin = thin;
    Ok(())
}

fn value<T: FromStr>(key: &str, raw: &str, what: &str) -> std::result::Result<T, String> {
    raw.parse::<T>()
        .map_err(|_| format!("{key}: expected {what}, got `{raw}`"))
}

fn list(key: &str, raw: &str) -> std::result::Result<Vec<f64>, String> {
    raw.split(',').map(|v| value::<f64>(key, v.trim(), "a comma-separated list of numbers")).collect()
}

fn flag(key: &str, raw: &str) -> std::result::Result<bool, String> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got `{raw}`")),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected key=value, got `{trimmed}`"),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !seen.insert(k.clone()) {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key `{k}`"),
                });
            }
            entries.push((line_no, k, v));
        }

        let mut c = RunConfig::default();
        let mut phi_scale_set = false;
        if let Some((line, _, v)) = entries.iter().find(|(_, k, _)| k == "preset") {
            apply_preset(&mut c, v).map_err(|message| Error::Config { line: *line, message })?;
        }
        let (mut n_min, mut n_max) = match c.synthetic.n_total {
            TotalLaw::Range(a, b) => (a, b),
            TotalLaw::Fixed(a) => (a, a),
        };
        let (mut beta_mean, mut beta_var) = (None, None);
        for (line, k, v) in &entries {
            let k = k.as_str();
            let v = v.as_str();
            let r: std::result::Result<(), String> = (|| {
                match k {
                    "preset" => {}
                    "seed" => c.seed = value(k, v, "an unsigned integer")?,
                    "replications" => c.replications = value(k, v, "an unsigned integer")?,
                    "data.path" => c.data_path = Some(PathBuf::from(v)),
                    "synthetic.n_sites" => c.synthetic.n_sites = value(k, v, "an unsigned integer")?,
                    "synthetic.extent_km" => c.synthetic.extent_km = value(k, v, "a number")?,
                    "synthetic.beta" => c.synthetic.beta = list(k, v)?,
                    "synthetic.sigma2" => c.synthetic.sigma2 = value(k, v, "a number")?,
                    "synthetic.tau2" => c.synthetic.tau2 = value(k, v, "a number")?,
                    "synthetic.phi" => c.synthetic.phi = value(k, v, "a number")?,
                    "synthetic.kappa" => c.synthetic.kappa = value(k, v, "a number")?,
                    "synthetic.n_total_min" => n_min = value(k, v, "an unsigned integer")?,
                    "synthetic.n_total_max" => n_max = value(k, v, "an unsigned integer")?,
                    "synthetic.covariate_length_km" => c.synthetic.covariate_length_km = value(k, v, "a number")?,
                    "synthetic.covariate_features" => c.synthetic.covariate_features = value(k, v, "an unsigned integer")?,
                    "synthetic.raster_cells" => c.synthetic.raster_cells = value(k, v, "an unsigned integer")?,
                    "split.validation" => c.validation_size = value(k, v, "an unsigned integer")?,
                    "subsample.method" => {
                        c.subsample.method = match v {
                            "all" => SubsampleMethod::All,
                            "random" => SubsampleMethod::Random,
                            "stratified" => SubsampleMethod::Stratified,
                            _ => return Err(format!("{k}: expected all, random or stratified, got `{v}`")),
                        }
                    }
                    "subsample.size" => c.subsample.size = value(k, v, "an unsigned integer")?,
                    "subsample.strata" => c.subsample.strata = value(k, v, "an unsigned integer")?,
                    "prior.beta_mean" => beta_mean = Some(list(k, v)?),
                    "prior.beta_var" => beta_var = Some(list(k, v)?),
                    "prior.sigma_rate" => c.prior.sigma_rate = value(k, v, "a number")?,
                    "prior.tau_rate" => c.prior.tau_rate = value(k, v, "a number")?,
                    "prior.phi_shape" => c.prior.phi_shape = value(k, v, "a number")?,
                    "prior.phi_scale" => {
                        c.prior.phi_scale = value(k, v, "a number")?;
                        phi_scale_set = true;
                    }
                    "mcmc.iterations" => c.mcmc.iterations = value(k, v, "an unsigned integer")?,
                    "mcmc.burn_in" => c.mcmc.burn_in = value(k, v, "an unsigned integer")?,
                    "mcmc.thin" => c.mcmc.thin = value(k, v, "an unsigned integer")?,
                    "mcmc.mala_h" => c.mcmc.mala_h = Some(value(k, v, "a number")?),
                    "mcmc.beta_step" => c.mcmc.beta_step = Some(value(k, v, "a number")?),
                    "mcmc.adapt_c1" => c.mcmc.adapt_c1 = value(k, v, "a number")?,
                    "mcmc.adapt_c2" => c.mcmc.adapt_c2 = value(k, v, "a number")?,
                    "mcmc.target_accept" => c.mcmc.target_accept_theta = value(k, v, "a number")?,
                    "mcmc.initial_step" => c.mcmc.initial_step = value(k, v, "a number")?,
                    "mcmc.kappa" => c.mcmc.kappa = value(k, v, "a number")?,
                    "mcmc.chains" => c.chains = value(k, v, "an unsigned integer")?,
                    "predict.grid" => c.predict.grid = flag(k, v)?,
                    "predict.grid_draws" => c.predict.grid_draws = value(k, v, "an unsigned integer")?,
                    "predict.sample_rasters" => c.predict.sample_rasters = value(k, v, "an unsigned integer")?,
                    "predict.max_joint_cells" => c.predict.max_joint_cells = value(k, v, "an unsigned integer")?,
                    "glm.draws" => c.glm_draws = value(k, v, "an unsigned integer")?,
                    "design.elevation_center" => c.design.elevation_center = value(k, v, "a number")?,
                    "design.elevation_scale" => c.design.elevation_scale = value(k, v, "a number")?,
                    "design.vegetation_change" => c.design.vegetation_change = value(k, v, "a number")?,
                    "design.vegetation_scale" => c.design.vegetation_scale = value(k, v, "a number")?,
                    _ => return Err(format!("unknown key `{k}`")),
                }
                Ok(())
            })();
            r.map_err(|message| Error::Config { line: *line, message })?;
        }
        c.synthetic.n_total = if n_min == n_max {
            TotalLaw::Fixed(n_min)
        } else {
            TotalLaw::Range(n_min, n_max)
        };
        if !phi_scale_set {
            c.prior.phi_scale = PriorSpec::default_for(4).phi_scale
                * if c.data_path.is_some() {
                    1.0
                } else {
                    c.synthetic.extent_km / REFERENCE_EXTENT_KM
                };
        }
        let p = c.synthetic.beta.len().max(1);
        let expand = |v: Option<Vec<f64>>, fill: f64| -> Vec<f64> {
            match v {
                Some(v) if v.len() == 1 => vec![v[0]; p],
                Some(v) => v,
                None => vec![fill; p],
            }
        };
        let mean = expand(beta_mean, 0.0);
        let var = expand(beta_var, 25.0);
        c.prior.mu = DVector::from_vec(mean);
        c.prior.omega = DMatrix::from_diagonal(&DVector::from_vec(var));
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        self.prior.validate()?;
        if self.data_path.is_none() {
            self.synthetic.validate()?;
        }
        if self.prior.mu.len() != 4 {
            return Err(Error::Validation(format!(
                "prior has {} coefficients; the design has 4",
                self.prior.mu.len()
            )));
        }
        let d = &self.design;
        if !(d.elevation_scale > 0.0 && d.vegetation_scale > 0.0 && d.elevation_center.is_finite() && d.vegetation_change.is_finite()) {
            return Err(Error::Validation("design scales must be positive and centres finite".into()));
        }
        if self.replications == 0 {
            return Err(Error::Validation("replications must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Validation("mcmc.chains must be at least 1".into()));
        }
        if self.subsample.strata == 0 {
            return Err(Error::Validation("subsample.strata must be at least 1".into()));
        }
        if self.data_path.is_none() {
            let pool = self.synthetic.n_sites.saturating_sub(self.validation_size);
            if self.validation_size == 0 || pool < 2 {
                return Err(Error::Validation(format!(
                    "split.validation={} leaves {} training sites of {}",
                    self.validation_size, pool, self.synthetic.n_sites
                )));
            }
            if self.subsample.method != SubsampleMethod::All && !(2..=pool).contains(&self.subsample.size) {
                return Err(Error::Validation(format!(
                    "subsample.size={} must lie in 2..={pool}",
                    self.subsample.size
                )));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Missing(format!("config {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}
