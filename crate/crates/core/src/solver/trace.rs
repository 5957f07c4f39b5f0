use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "iter,wall_s,sigma,tau,theta,beta,ls_trials,primal,gap,dual_res,rank";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub wall_s: f64,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    pub beta: f64,
    pub ls_trials: usize,
    pub primal: f64,
    pub gap: f64,
    pub dual_res: f64,
    pub rank: usize,
}

/// Append-only per-iteration log of a solver run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceRecord {
    rows: Vec<TraceRow>,
}

impl ConvergenceRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn total_trials(&self) -> usize {
        self.rows.iter().map(|r| r.ls_trials).sum()
    }

    pub fn min_sigma(&self) -> f64 {
        self.rows.iter().map(|r| r.sigma).fold(f64::INFINITY, f64::min)
    }

    /// Recomputes the gap column as `primal - reference`.
    pub fn set_reference(&mut self, reference: f64) {
        for r in &mut self.rows {
            r.gap = r.primal - reference;
        }
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.iter, r.wall_s, r.sigma, r.tau, r.theta, r.beta, r.ls_trials, r.primal, r.gap, r.dual_res, r.rank
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trace file".into()))??;
        if header.trim() != TRACE_HEADER {
            return Err(Error::Parse(format!("unexpected trace header {header:?}")));
        }
        let mut record = ConvergenceRecord::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(Error::Parse(format!("line {}: expected 11 fields", lineno + 2)));
            }
            let num = |i: usize| -> Result<f64> {
                f[i].trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", lineno + 2, f[i])))
            };
            let int = |i: usize| -> Result<usize> {
                f[i].trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad integer {:?}", lineno + 2, f[i])))
            };
            record.push(TraceRow {
                iter: int(0)?,
                wall_s: num(1)?,
                sigma: num(2)?,
                tau: num(3)?,
                theta: num(4)?,
                beta: num(5)?,
                ls_trials: int(6)?,
                primal: num(7)?,
                gap: num(8)?,
                dual_res: num(9)?,
                rank: int(10)?,
            });
        }
        Ok(record)
    }
}
