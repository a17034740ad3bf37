//! Report files. CSV tables carry a header row, '.' decimals and LF line
//! endings; the TOML documents mirror every field and parse back into the
//! same report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{BenchError, Result};
use crate::experiment::{BenchReport, CellRow, FitReport, FitRow, HistRow, OracleReport, StatsReport, StatsRow, SELF_INFO_LEVELS};

/// A row type with a fixed CSV column order.
pub trait CsvRow {
    fn header() -> Vec<String>;
    fn record(&self) -> Vec<String>;
}

fn num(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

impl CsvRow for CellRow {
    fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "qp", "sigma", "width", "height", "blocks", "k_factor", "mean_cost_full", "mean_cost_accel",
            "rel_cost_delta", "mean_block_rel_delta",
        ]
        .map(String::from)
        .to_vec();
        for side in ["full", "accel"] {
            for c in ["branches", "dist_evals", "rate_evals", "adds", "compares", "selects", "stages"] {
                h.push(format!("{side}_{c}"));
            }
        }
        h.extend(
            [
                "branch_savings", "op_savings", "accel_middle_stages", "accel_middle_branch_min",
                "accel_middle_branch_max", "hdq_last_median", "tcq_last_median", "accel_last_median",
                "wall_ms_full", "wall_ms_accel",
            ]
            .map(String::from),
        );
        h
    }

    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.qp.to_string(),
            num(self.sigma),
            self.width.to_string(),
            self.height.to_string(),
            self.blocks.to_string(),
            self.k_factor.map(num).unwrap_or_default(),
            num(self.mean_cost_full),
            num(self.mean_cost_accel),
            num(self.rel_cost_delta),
            num(self.mean_block_rel_delta),
        ];
        for c in [self.full, self.accel] {
            r.extend([c.branches, c.dist_evals, c.rate_evals, c.adds, c.compares, c.selects, c.stages].map(|v| v.to_string()));
        }
        r.extend([
            num(self.branch_savings),
            num(self.op_savings),
            self.accel_middle_stages.to_string(),
            self.accel_middle_branch_min.to_string(),
            self.accel_middle_branch_max.to_string(),
            num(self.hdq_last_median),
            num(self.tcq_last_median),
            num(self.accel_last_median),
            num(self.wall_ms_full),
            num(self.wall_ms_accel),
        ]);
        r
    }
}

impl CsvRow for HistRow {
    fn header() -> Vec<String> {
        ["qp", "sigma", "width", "height", "scan_pos", "hdq", "tcq"].map(String::from).to_vec()
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.qp.to_string(),
            num(self.sigma),
            self.width.to_string(),
            self.height.to_string(),
            self.scan_pos.to_string(),
            self.hdq.to_string(),
            self.tcq.to_string(),
        ]
    }
}

impl CsvRow for FitRow {
    fn header() -> Vec<String> {
        ["qp", "alpha", "beta", "gamma", "epsilon", "r_squared", "rms_bits", "observations"]
            .map(String::from)
            .to_vec()
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.qp.to_string(),
            num(self.alpha),
            num(self.beta),
            num(self.gamma),
            num(self.epsilon),
            num(self.r_squared),
            num(self.rms_bits),
            self.observations.to_string(),
        ]
    }
}

impl CsvRow for StatsRow {
    fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "sigma", "qp", "q_step", "lambda_lap", "tau", "p_nz", "d_expected", "d_zero", "d_nonzero", "numeric_p_nz",
            "numeric_d_zero", "numeric_d_nonzero", "max_rel_error", "r0_exact", "r0_taylor1", "r0_taylor2", "r0_taylor3",
        ]
        .map(String::from)
        .to_vec();
        h.extend((0..SELF_INFO_LEVELS).map(|l| format!("self_info_{l}")));
        h
    }

    fn record(&self) -> Vec<String> {
        let mut r = vec![num(self.sigma), self.qp.to_string()];
        r.extend(
            [
                self.q_step,
                self.lambda_lap,
                self.tau,
                self.p_nz,
                self.d_expected,
                self.d_zero,
                self.d_nonzero,
                self.numeric_p_nz,
                self.numeric_d_zero,
                self.numeric_d_nonzero,
                self.max_rel_error,
                self.r0_exact,
                self.r0_taylor1,
                self.r0_taylor2,
                self.r0_taylor3,
            ]
            .map(num),
        );
        r.extend(self.self_info.iter().map(|&v| num(v)));
        r
    }
}

pub fn csv_string<R: CsvRow>(rows: &[R]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(R::header()).expect("in-memory write");
    for row in rows {
        w.write_record(row.record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn toml_string<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("reports are always serializable")
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}

pub fn emit_bench(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write(dir, "bench.csv", &csv_string(&report.cells))?,
        write(dir, "last_pos_hist.csv", &csv_string(&report.histograms))?,
        write(dir, "bench.toml", &toml_string(report))?,
    ])
}

pub fn emit_fit(report: &FitReport, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write(dir, "fit.csv", &csv_string(&report.fits))?,
        write(dir, "fit.toml", &toml_string(report))?,
    ])
}

pub fn emit_oracle(report: &OracleReport, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(vec![write(dir, "oracle.toml", &toml_string(report))?])
}

pub fn emit_stats(report: &StatsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write(dir, "stats.csv", &csv_string(&report.rows))?,
        write(dir, "stats.toml", &toml_string(report))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let s = csv_string::<CellRow>(&[]);
        assert_eq!(s.lines().count(), 1);
        assert!(s.ends_with('\n') && !s.contains('\r'));
        assert!(s.starts_with("qp,sigma,width,height,blocks,k_factor,"));
    }

    #[test]
    fn headers_match_record_width() {
        let row = HistRow {
            qp: 22,
            sigma: 1.5,
            width: 4,
            height: 4,
            scan_pos: -1,
            hdq: 3,
            tcq: 5,
        };
        assert_eq!(HistRow::header().len(), row.record().len());
        assert_eq!(csv_string(&[row]), "qp,sigma,width,height,scan_pos,hdq,tcq\n22,1.5,4,4,-1,3,5\n");
    }
}
