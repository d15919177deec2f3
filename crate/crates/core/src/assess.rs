//! Interval, coverage and error summaries of posterior predictive draws.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Shortest window of the sorted samples holding `⌈level·N⌉` of them. Ties
/// go to the window with the smallest lower end.
pub fn narrowest_credible_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Validation("no samples for a credible interval".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("NaN among samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=n - k {
        let w = s[i + k - 1] - s[i];
        if w < best_width {
            best_width = w;
            best = i;
        }
    }
    Ok((s[best], s[best + k - 1]))
}

/// Equal-tailed interval from the order statistics at `(1 ± level)/2`.
pub fn equal_tailed_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Validation("no samples for a credible interval".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let lo = (n - k) / 2;
    Ok((s[lo], s[lo + k - 1]))
}

/// Per-site intervals of count draws and how often they hold the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSummary {
    pub level: f64,
    pub intervals: Vec<(f64, f64)>,
    pub hits: Vec<bool>,
    pub coverage: f64,
    pub mean_width: f64,
}

/// `count_draws` is `[draw][site]`; endpoints are inclusive.
pub fn empirical_coverage(count_draws: &[Vec<u64>], truths: &[u64], level: f64) -> Result<CoverageSummary> {
    if count_draws.is_empty() {
        return Err(Error::Validation("no count draws".into()));
    }
    if count_draws.iter().any(|r| r.len() != truths.len()) {
        return Err(Error::Dimension(format!("count draws do not have {} columns", truths.len())));
    }
    let mut intervals = Vec::with_capacity(truths.len());
    let mut hits = Vec::with_capacity(truths.len());
    for (j, &truth) in truths.iter().enumerate() {
        let col: Vec<f64> = count_draws.iter().map(|r| r[j] as f64).collect();
        let (lo, hi) = narrowest_credible_interval(&col, level)?;
        intervals.push((lo, hi));
        hits.push(lo <= truth as f64 && truth as f64 <= hi);
    }
    let m = truths.len().max(1) as f64;
    Ok(CoverageSummary {
        level,
        coverage: hits.iter().filter(|&&h| h).count() as f64 / m,
        mean_width: intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / m,
        intervals,
        hits,
    })
}

/// `√(mean (p̂ − p)²)`.
pub fn rmse_probs(p_hat: &[f64], p_true: &[f64]) -> Result<f64> {
    if p_hat.len() != p_true.len() {
        return Err(Error::Dimension(format!("{} predictions for {} truths", p_hat.len(), p_true.len())));
    }
    if p_hat.is_empty() {
        return Err(Error::Validation("no sites for RMSE".into()));
    }
    let ss: f64 = p_hat.iter().zip(p_true).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / p_hat.len() as f64).sqrt())
}

/// Posterior of the total count over all sites.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalSummary {
    pub totals: Vec<u64>,
    pub interval: (f64, f64),
    pub truth: u64,
    pub covered: bool,
}

impl TotalSummary {
    pub fn width(&self) -> f64 {
        self.interval.1 - self.interval.0
    }
}

pub fn total_count_summary(count_draws: &[Vec<u64>], truths: &[u64], level: f64) -> Result<TotalSummary> {
    if count_draws.iter().any(|r| r.len() != truths.len()) {
        return Err(Error::Dimension(format!("count draws do not have {} columns", truths.len())));
    }
    let totals: Vec<u64> = count_draws.iter().map(|r| r.iter().sum()).collect();
    total_from_draws(totals, truths.iter().sum(), level)
}

/// As [`total_count_summary`] when only the total draws are available.
pub fn total_from_draws(totals: Vec<u64>, truth: u64, level: f64) -> Result<TotalSummary> {
    let as_f: Vec<f64> = totals.iter().map(|&v| v as f64).collect();
    let interval = narrowest_credible_interval(&as_f, level)?;
    Ok(TotalSummary {
        covered: interval.0 <= truth as f64 && truth as f64 <= interval.1,
        totals,
        interval,
        truth,
    })
}

/// Everything assessed for one model on one validation set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssessment {
    pub model: String,
    pub site_ids: Vec<String>,
    pub truths: Vec<u64>,
    pub p_hat: Vec<f64>,
    pub p_observed: Vec<f64>,
    pub coverage: Vec<CoverageSummary>,
    pub rmse: f64,
    pub total: TotalSummary,
}

/// Levels reported for per-site coverage.
pub const COVERAGE_LEVELS: [f64; 3] = [0.95, 0.8, 0.5];

/// Assesses count draws `[draw][site]` against the observed counts.
pub fn assess_model(
    model: &str,
    site_ids: &[String],
    count_draws: &[Vec<u64>],
    p_hat: &[f64],
    truths: &[u64],
    totals_n: &[u64],
) -> Result<ModelAssessment> {
    let p_observed: Vec<f64> = truths.iter().zip(totals_n).map(|(&y, &n)| y as f64 / n as f64).collect();
    let coverage = COVERAGE_LEVELS
        .iter()
        .map(|&l| empirical_coverage(count_draws, truths, l))
        .collect::<Result<_>>()?;
    Ok(ModelAssessment {
        model: model.to_string(),
        site_ids: site_ids.to_vec(),
        truths: truths.to_vec(),
        rmse: rmse_probs(p_hat, &p_observed)?,
        p_hat: p_hat.to_vec(),
        p_observed,
        coverage,
        total: total_count_summary(count_draws, truths, 0.95)?,
    })
}

/// Per-site block, a blank line, then `metric,model,level,value`.
pub fn report_to_csv(models: &[ModelAssessment]) -> String {
    let mut s = String::from("model,site,level,lo,hi,truth,hit,p_hat,p_observed\n");
    for m in models {
        for c in &m.coverage {
            for j in 0..m.site_ids.len() {
                let (lo, hi) = c.intervals[j];
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    m.model,
                    m.site_ids[j],
                    c.level,
                    lo,
                    hi,
                    m.truths[j],
                    u8::from(c.hits[j]),
                    m.p_hat[j],
                    m.p_observed[j]
                );
            }
        }
    }
    s.push_str("\nmetric,model,level,value\n");
    for m in models {
        for c in &m.coverage {
            let _ = writeln!(s, "coverage,{},{},{}", m.model, c.level, c.coverage);
            let _ = writeln!(s, "mean_width,{},{},{}", m.model, c.level, c.mean_width);
        }
        let _ = writeln!(s, "rmse,{},,{}", m.model, m.rmse);
        let _ = writeln!(s, "total_lo,{},0.95,{}", m.model, m.total.interval.0);
        let _ = writeln!(s, "total_hi,{},0.95,{}", m.model, m.total.interval.1);
        let _ = writeln!(s, "total_truth,{},,{}", m.model, m.total.truth);
        let _ = writeln!(s, "total_covered,{},0.95,{}", m.model, u8::from(m.total.covered));
    }
    s
}

/// `draw,total` rows for each model, `model` first.
pub fn totals_to_csv(models: &[ModelAssessment]) -> String {
    let mut s = String::from("model,draw,total\n");
    for m in models {
        for (k, t) in m.total.totals.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", m.model, k, t);
        }
    }
    s
}
