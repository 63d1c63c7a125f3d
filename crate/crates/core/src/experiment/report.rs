use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{CONFIG_FILE, EVAL_LOG, EVAL_LOG_HEADER};
use crate::algo::AlgoId;
use crate::config::ConfigTree;
use crate::env::EnvId;
use crate::error::{Error, Result};

/// Evaluation curve of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCurve {
    pub dir: PathBuf,
    pub env: EnvId,
    pub algo: AlgoId,
    /// `(step, mean_return)` in log order.
    pub points: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub env: EnvId,
    pub algo: AlgoId,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub env: EnvId,
    pub algo: AlgoId,
    pub step: u64,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Default)]
pub struct ReportOutput {
    pub summary: Vec<SummaryRow>,
    pub curves: Vec<CurvePoint>,
    /// Directories that could not be read, with the reason.
    pub failures: Vec<(PathBuf, Error)>,
}

fn bad(path: &Path, message: impl Into<String>) -> Error {
    Error::Log {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads `(step, mean_return)` pairs from an evaluation log.
pub fn read_eval_log(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(path, e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(path, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != EVAL_LOG_HEADER {
        return Err(bad(path, "unexpected header"));
    }
    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(path, e.to_string()))?;
        let step = row[0]
            .parse::<u64>()
            .map_err(|_| bad(path, format!("row {}: bad step {:?}", i + 1, &row[0])))?;
        let mean = row[1]
            .parse::<f64>()
            .map_err(|_| bad(path, format!("row {}: bad mean_return {:?}", i + 1, &row[1])))?;
        if points.last().is_some_and(|&(s, _)| s >= step) {
            return Err(bad(path, format!("row {}: steps not increasing", i + 1)));
        }
        points.push((step, mean));
    }
    Ok(points)
}

fn read_run(dir: &Path) -> Result<RunCurve> {
    let config_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&config_path).map_err(|e| bad(&config_path, e.to_string()))?;
    let config = ConfigTree::from_json(&text)?;
    let points = read_eval_log(&dir.join(EVAL_LOG))?;
    if points.is_empty() {
        return Err(bad(&dir.join(EVAL_LOG), "no evaluations"));
    }
    Ok(RunCurve {
        dir: dir.to_path_buf(),
        env: config.experiment.env_id,
        algo: config.experiment.algo_id,
        points,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates already loaded runs by `(env, algo)`.
pub fn aggregate(runs: &[RunCurve]) -> (Vec<SummaryRow>, Vec<CurvePoint>) {
    let mut groups: BTreeMap<(EnvId, AlgoId), Vec<&RunCurve>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.env, r.algo)).or_default().push(r);
    }
    let mut summary = Vec::new();
    let mut curves = Vec::new();
    for ((env, algo), members) in groups {
        let finals: Vec<f64> = members
            .iter()
            .map(|r| r.points.last().expect("non-empty").1)
            .collect();
        let (mean, std) = mean_std(&finals);
        summary.push(SummaryRow {
            env,
            algo,
            runs: finals.len(),
            mean,
            std,
        });
        let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &members {
            for &(s, v) in &r.points {
                by_step.entry(s).or_default().push(v);
            }
        }
        for (step, values) in by_step {
            let (mean, std) = mean_std(&values);
            curves.push(CurvePoint {
                env,
                algo,
                step,
                runs: values.len(),
                mean,
                std,
            });
        }
    }
    (summary, curves)
}

/// Reads every run directory and aggregates the readable ones.
pub fn report<P: AsRef<Path>>(dirs: &[P]) -> ReportOutput {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for d in dirs {
        match read_run(d.as_ref()) {
            Ok(r) => runs.push(r),
            Err(e) => failures.push((d.as_ref().to_path_buf(), e)),
        }
    }
    let (summary, curves) = aggregate(&runs);
    ReportOutput {
        summary,
        curves,
        failures,
    }
}

/// One CSV table: `final` rows summarize the last evaluation of each run,
/// `curve` rows aggregate every evaluation step.
pub fn write_report(out: &ReportOutput, w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["kind", "env", "algo", "step", "runs", "mean_return", "std_return"])?;
    for s in &out.summary {
        writer.write_record([
            "final".to_string(),
            s.env.to_string(),
            s.algo.to_string(),
            String::new(),
            s.runs.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
        ])?;
    }
    for c in &out.curves {
        writer.write_record([
            "curve".to_string(),
            c.env.to_string(),
            c.algo.to_string(),
            c.step.to_string(),
            c.runs.to_string(),
            c.mean.to_string(),
            c.std.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
