//! File formats consumed by the plotting scripts: training and evaluation
//! CSV logs, evaluation JSON reports, grid matrices and sweep tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use msacl_core::eval::{EvalReport, Grid, RADII};
use msacl_core::learner::IterationLog;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const TRAIN_LOG: &str = "train_log.csv";
pub const EVAL_LOG: &str = "eval_log.csv";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const GRID_SCHEMA: &str = "msacl-grid-1";

pub struct CsvLog<T> {
    w: csv::Writer<BufWriter<File>>,
    _row: std::marker::PhantomData<T>,
}

impl<T: Serialize> CsvLog<T> {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(LabError::io(path))?;
        Ok(Self {
            w: csv::Writer::from_writer(BufWriter::new(f)),
            _row: std::marker::PhantomData,
        })
    }

    pub fn push(&mut self, row: &T) -> Result<()> {
        self.w.serialize(row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| LabError::Csv(e.into()))
    }
}

pub type TrainLog = CsvLog<IterationLog>;

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(LabError::from)).collect()
}

/// One periodic evaluation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLogRow {
    pub env_steps: u64,
    pub iterations: u64,
    pub amcr: f64,
    pub amcr_std: f64,
    pub amcc: f64,
    pub amcc_std: f64,
    pub rr_0_2: f64,
    pub rr_0_1: f64,
    pub rr_0_05: f64,
    pub rr_0_01: f64,
    /// Relative to the run directory.
    pub report: String,
    pub checkpoint: String,
}

impl EvalLogRow {
    pub fn new(r: &EvalReport, env_steps: u64, iterations: u64, report: &str, checkpoint: &str) -> Self {
        let rr = |x: f64| r.reach_at(x).map_or(0.0, |s| s.rr);
        Self {
            env_steps,
            iterations,
            amcr: r.amcr,
            amcr_std: r.amcr_std,
            amcc: r.amcc,
            amcc_std: r.amcc_std,
            rr_0_2: rr(RADII[0]),
            rr_0_1: rr(RADII[1]),
            rr_0_05: rr(RADII[2]),
            rr_0_01: rr(RADII[3]),
            report: report.into(),
            checkpoint: checkpoint.into(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(LabError::io(path))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Grid matrix with a `#` header block; the first row holds the x values
/// and the first column the y values.
pub fn write_grid(path: &Path, g: &Grid, extra: &[(&str, String)]) -> Result<()> {
    let f = File::create(path).map_err(LabError::io(path))?;
    let mut w = BufWriter::new(f);
    let io = LabError::io(path);
    let mut text = String::new();
    text.push_str(&format!("# schema: {GRID_SCHEMA}\n"));
    text.push_str(&format!("# axes: {},{}\n", g.axes.0, g.axes.1));
    text.push_str(&format!("# res: {}\n", g.xs.len()));
    let lo = g.xs.first().copied().unwrap_or(0.0);
    let hi = g.xs.last().copied().unwrap_or(0.0);
    text.push_str(&format!("# range: {lo},{hi}\n"));
    for (k, v) in extra {
        text.push_str(&format!("# {k}: {v}\n"));
    }
    text.push_str("y\\x");
    for x in &g.xs {
        text.push_str(&format!(",{x}"));
    }
    text.push('\n');
    for (iy, y) in g.ys.iter().enumerate() {
        text.push_str(&y.to_string());
        for v in g.values.row(iy) {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    w.write_all(text.as_bytes()).map_err(io)?;
    Ok(())
}

/// One row of the horizon-sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub amcr: f64,
    pub amcr_std: f64,
    pub amcc: f64,
    pub rr_0_2: f64,
    pub rr_0_1: f64,
    pub rr_0_05: f64,
    pub rr_0_01: f64,
    pub ars_0_01: Option<f64>,
    pub ahs_0_01: Option<f64>,
    pub run_dir: PathBuf,
}

impl SweepRow {
    pub fn new(n: usize, seed: u64, r: &EvalReport, run_dir: PathBuf) -> Self {
        let at = |x: f64| r.reach_at(x);
        let rr = |x: f64| at(x).map_or(0.0, |s| s.rr);
        Self {
            n,
            seed,
            amcr: r.amcr,
            amcr_std: r.amcr_std,
            amcc: r.amcc,
            rr_0_2: rr(RADII[0]),
            rr_0_1: rr(RADII[1]),
            rr_0_05: rr(RADII[2]),
            rr_0_01: rr(RADII[3]),
            ars_0_01: at(RADII[3]).and_then(|s| s.ars),
            ahs_0_01: at(RADII[3]).and_then(|s| s.ahs),
            run_dir,
        }
    }
}

/// Seeds whose RR at the smallest radius never drops as `n` grows.
pub fn monotone_seeds(rows: &[SweepRow]) -> Vec<u64> {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .into_iter()
        .filter(|&s| {
            let mut mine: Vec<&SweepRow> = rows.iter().filter(|r| r.seed == s).collect();
            mine.sort_by_key(|r| r.n);
            mine.windows(2).all(|w| w[1].rr_0_01 >= w[0].rr_0_01)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use msacl_core::tensor::Matrix;

    #[test]
    fn grid_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = Grid {
            axes: (0, 1),
            xs: vec![-1.0, 1.0],
            ys: vec![-1.0, 1.0],
            values: Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
        };
        write_grid(&p, &g, &[("env", "vanderpol".into())]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# schema: msacl-grid-1");
        assert!(lines.contains(&"# env: vanderpol"));
        assert_eq!(lines[lines.len() - 3], "y\\x,-1,1");
        assert_eq!(lines[lines.len() - 1], "1,3,4");
    }

    #[test]
    fn csv_round_trip_with_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let row = IterationLog {
            iter: 1,
            env_steps: 20,
            loss_lya: 0.5,
            loss_bnd: 0.25,
            loss_stab: 0.025,
            loss_q1: 3.0,
            loss_q2: 4.0,
            loss_pi: None,
            alpha: 1.0,
            mean_esl_positive_fraction: 0.75,
            mean_a_lambda: None,
        };
        let mut log = TrainLog::create(&p).unwrap();
        log.push(&row).unwrap();
        log.flush().unwrap();
        drop(log);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(
            "iter,env_steps,loss_lya,loss_bnd,loss_stab,loss_q1,loss_q2,loss_pi,alpha,mean_esl_positive_fraction,mean_A_lambda\n"
        ));
        let back: Vec<IterationLog> = read_csv(&p).unwrap();
        assert_eq!(back, vec![row]);
    }

    #[test]
    fn monotone_detection() {
        let row = |n, seed, rr| SweepRow {
            n,
            seed,
            amcr: 0.0,
            amcr_std: 0.0,
            amcc: 0.0,
            rr_0_2: 0.0,
            rr_0_1: 0.0,
            rr_0_05: 0.0,
            rr_0_01: rr,
            ars_0_01: None,
            ahs_0_01: None,
            run_dir: PathBuf::new(),
        };
        let rows = vec![row(10, 0, 0.9), row(1, 0, 0.2), row(5, 0, 0.5), row(1, 1, 0.5), row(5, 1, 0.4)];
        assert_eq!(monotone_seeds(&rows), vec![0]);
    }
}
