//! CSV outputs: metric reports, training logs, and sweep grids.
//!
//! All files use `,` separators, `.` decimals, and LF line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use pirt_core::eval::MetricReport;
use pirt_core::head::PoolingMethod;
use pirt_core::trainer::TrainLog;

use crate::error::Result;

/// `metric,value` rows for the aggregate retrieval metrics.
pub fn write_metric_report(path: &Path, report: &MetricReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "metric,value")?;
    writeln!(w, "p_at_1,{}", report.p_at_1)?;
    writeln!(w, "map_at_r,{}", report.map_at_r)?;
    w.flush()?;
    Ok(())
}

/// Optional per-query breakdown.
pub fn write_per_query_report(path: &Path, report: &MetricReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "query,p_at_1,map_at_r")?;
    for (i, (p1, map)) in report
        .per_query_p_at_1
        .iter()
        .zip(&report.per_query_map_at_r)
        .enumerate()
    {
        writeln!(w, "{i},{p1},{map}")?;
    }
    w.flush()?;
    Ok(())
}

/// One row per completed epoch.
pub fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "epoch,loss,so_penalty,max_offdiag_gram,head_lr,proxy_lr,wall_secs"
    )?;
    for r in &log.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.epoch, r.loss, r.so_penalty, r.max_offdiag_gram, r.head_lr, r.proxy_lr, r.wall_secs
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One grid point of an embedding-dimension sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub embed_dim: usize,
    pub lambda: f64,
    pub pooling: PoolingMethod,
    pub p_at_1: f64,
    pub map_at_r: f64,
}

pub fn write_sweep_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "embed_dim,lambda,pooling,p_at_1,map_at_r")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.embed_dim, r.lambda, r.pooling, r.p_at_1, r.map_at_r
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_report_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let report = MetricReport {
            p_at_1: 0.75,
            map_at_r: 0.5,
            per_query_p_at_1: vec![1.0, 0.5],
            per_query_map_at_r: vec![0.25, 0.75],
        };
        write_metric_report(&path, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "metric,value\np_at_1,0.75\nmap_at_r,0.5\n");

        let per_query = dir.path().join("per_query.csv");
        write_per_query_report(&per_query, &report).unwrap();
        let text = std::fs::read_to_string(&per_query).unwrap();
        assert_eq!(text, "query,p_at_1,map_at_r\n0,1,0.25\n1,0.5,0.75\n");
    }
}
