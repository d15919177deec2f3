//! Delimited-text chain files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{ChainDiagnostics, ChainOutput, Draw};
use crate::error::{Error, Result};
use crate::reparam::Theta;

/// Concatenates chains in order. Diagnostics are those of the first chain.
pub fn pool_chains(chains: Vec<ChainOutput>) -> Result<ChainOutput> {
    let mut it = chains.into_iter();
    let mut pooled = it.next().ok_or_else(|| Error::Validation("no chains to pool".into()))?;
    for c in it {
        pooled.draws.extend(c.draws);
        pooled.transformed.extend(c.transformed);
    }
    Ok(pooled)
}

/// Writes `draw,beta0..,sigma,tau,phi,t_1..t_n`, chains pooled in order.
pub fn write_chain_csv(path: impl AsRef<Path>, chains: &[ChainOutput]) -> Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let first = chains
        .iter()
        .flat_map(|c| c.draws.first())
        .next()
        .ok_or_else(|| Error::Validation("chain has no draws".into()))?;
    let mut header = vec!["draw".to_string()];
    header.extend((0..first.beta.len()).map(|j| format!("beta{j}")));
    header.extend(["sigma", "tau", "phi"].map(String::from));
    header.extend((1..=first.t.len()).map(|i| format!("t_{i}")));
    writeln!(w, "{}", header.join(","))?;
    let mut k = 0;
    for d in chains.iter().flat_map(|c| &c.draws) {
        let mut line = k.to_string();
        for v in d.beta.iter().chain([d.theta.sigma, d.theta.tau, d.theta.phi].iter()).chain(d.t.iter()) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
        k += 1;
    }
    w.flush()?;
    Ok(k)
}

/// Reads a chain file written by [`write_chain_csv`].
pub fn read_chain_csv(path: impl AsRef<Path>, kappa: f64) -> Result<ChainOutput> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let n_beta = header.iter().filter(|h| h.starts_with("beta")).count();
    let n_t = header.iter().filter(|h| h.starts_with("t_")).count();
    if header.get(0) != Some("draw") || header.len() != 1 + n_beta + 3 + n_t || n_beta == 0 {
        return Err(Error::parse(path, 1, "expected header draw,beta0..,sigma,tau,phi,t_1.."));
    }
    let mut draws = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, line, format!("bad number: {e}")))?;
        if vals.len() != n_beta + 3 + n_t {
            return Err(Error::parse(path, line, "wrong number of fields"));
        }
        let theta = Theta {
            sigma: vals[n_beta],
            tau: vals[n_beta + 1],
            phi: vals[n_beta + 2],
        };
        draws.push(Draw {
            beta: DVector::from_column_slice(&vals[..n_beta]),
            theta,
            t: DVector::from_column_slice(&vals[n_beta + 3..]),
        });
    }
    if draws.is_empty() {
        return Err(Error::parse(path, 1, "chain file has no draws"));
    }
    Ok(ChainOutput {
        draws,
        transformed: Vec::new(),
        kappa,
        diagnostics: ChainDiagnostics::default(),
    })
}

/// Writes the acceptance summary (`chain,quantity,value`) and the step-size
/// trace (`chain,iteration,s1,s2,s3`).
pub fn write_diagnostics(
    summary_path: impl AsRef<Path>,
    trace_path: impl AsRef<Path>,
    chains: &[ChainOutput],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(summary_path)?);
    writeln!(w, "chain,quantity,value")?;
    for (k, c) in chains.iter().enumerate() {
        let d = &c.diagnostics;
        let rows: [(&str, String); 14] = [
            ("seed", d.seed.to_string()),
            ("iterations", d.iterations.to_string()),
            ("burn_in", d.burn_in.to_string()),
            ("thin", d.thin.to_string()),
            ("draws", c.draws.len().to_string()),
            ("accept_theta1", d.accept_theta[0].to_string()),
            ("accept_theta2", d.accept_theta[1].to_string()),
            ("accept_theta3", d.accept_theta[2].to_string()),
            ("accept_beta", d.accept_beta.to_string()),
            ("accept_t", d.accept_t.to_string()),
            ("failed_proposals", d.failed_proposals.to_string()),
            ("mala_h", d.mala_h.to_string()),
            ("beta_step", d.beta_step.to_string()),
            ("kappa", c.kappa.to_string()),
        ];
        for (q, v) in rows {
            writeln!(w, "{k},{q},{v}")?;
        }
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(trace_path)?);
    writeln!(w, "chain,iteration,s1,s2,s3")?;
    for (k, c) in chains.iter().enumerate() {
        for r in &c.diagnostics.step_trace {
            writeln!(w, "{k},{},{},{},{}", r.iteration, r.steps[0], r.steps[1], r.steps[2])?;
        }
    }
    w.flush()?;
    Ok(())
}
