//! Closed-form versus Monte-Carlo correlation tables.

use std::io::Write;

use anyhow::Result;
use nfwb_core::channel::SystemConfig;
use nfwb_core::correlation::{oracle_chunk_sum, oracle_chunks, CorrelationParams, CorrelationQuery};
use nfwb_core::Complex64;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrKind {
    /// Rows indexed by antenna `n` and antenna lag.
    Antenna,
    /// Rows indexed by subcarrier lag at antenna `n`.
    Subcarrier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrRow {
    pub n: usize,
    pub lag: usize,
    pub closed_form: f64,
    pub monte_carlo: f64,
}

impl CorrRow {
    pub fn rel_err(&self) -> f64 {
        (self.closed_form - self.monte_carlo).abs() / self.monte_carlo.abs().max(f64::MIN_POSITIVE)
    }
}

/// Oracle with chunks evaluated on the rayon pool; the sum is taken in
/// chunk order, so the result does not depend on the thread count.
pub fn parallel_oracle(query: &CorrelationQuery, p: &CorrelationParams, cfg: &SystemConfig, draws: usize, seed: u64) -> Result<f64> {
    p.validate()?;
    query.closed_form(p, cfg)?;
    let chunks: Vec<_> = oracle_chunks(draws).collect();
    let sums: Vec<Complex64> = chunks.par_iter().map(|&(c, k)| oracle_chunk_sum(query, p, cfg, seed, c, k)).collect();
    let total = sums.into_iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b);
    Ok((total / draws as f64).norm())
}

pub fn query(kind: CorrKind, n: usize, lag: usize, cfg: &SystemConfig) -> CorrelationQuery {
    match kind {
        CorrKind::Antenna => CorrelationQuery::Antenna { n, lag, freq: cfg.carrier_freq },
        CorrKind::Subcarrier => CorrelationQuery::Subcarrier { lag, n },
    }
}

pub fn corr_table(kind: CorrKind, points: &[(usize, usize)], p: &CorrelationParams, cfg: &SystemConfig, draws: usize, seed: u64) -> Result<Vec<CorrRow>> {
    points
        .iter()
        .map(|&(n, lag)| {
            let q = query(kind, n, lag, cfg);
            Ok(CorrRow { n, lag, closed_form: q.closed_form(p, cfg)?, monte_carlo: parallel_oracle(&q, p, cfg, draws, seed)? })
        })
        .collect()
}

pub fn write_corr_csv(w: &mut impl Write, rows: &[CorrRow]) -> Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["n", "lag", "closed_form", "monte_carlo", "rel_err"])?;
    for r in rows {
        cw.write_record([r.n.to_string(), r.lag.to_string(), format!("{:.10e}", r.closed_form), format!("{:.10e}", r.monte_carlo), format!("{:.6e}", r.rel_err())])?;
    }
    cw.flush()?;
    Ok(())
}
